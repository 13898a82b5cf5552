use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Physical unit attached to a real image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Unit {
    /// CT attenuation expressed as HU / 1000 (water 0, air -1).
    HuPerThousand,
    /// Intensities scaled into roughly [-1, 1].
    Normalized,
    Dimensionless,
}

impl Unit {
    pub fn label(self) -> &'static str {
        match self {
            Unit::HuPerThousand => "HU/1000",
            Unit::Normalized => "normalized",
            Unit::Dimensionless => "dimensionless",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "HU/1000" => Ok(Unit::HuPerThousand),
            "normalized" => Ok(Unit::Normalized),
            "dimensionless" => Ok(Unit::Dimensionless),
            other => Err(Error::InvalidArgument(format!("unknown unit {other:?}"))),
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Dense row-major real image.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    height: usize,
    width: usize,
    data: Vec<f64>,
    unit: Unit,
}

impl Grid2D {
    pub fn new(height: usize, width: usize, data: Vec<f64>, unit: Unit) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "grid {height}x{width} needs {} samples, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("grid sample {i} is {}", data[i])));
        }
        Ok(Self {
            height,
            width,
            data,
            unit,
        })
    }

    pub fn zeros(height: usize, width: usize, unit: Unit) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width],
            unit,
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        unit: Unit,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
            unit,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn with_unit(mut self, unit: Unit) -> Self {
        self.unit = unit;
        self
    }

    pub fn same_shape(&self, other: &Grid2D) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid2D {
        Grid2D {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
            unit: self.unit,
        }
    }

    /// Copies the `size_h x size_w` window whose top-left corner is (`top`, `left`).
    pub fn crop(&self, top: usize, left: usize, size_h: usize, size_w: usize) -> Grid2D {
        assert!(top + size_h <= self.height && left + size_w <= self.width);
        let mut data = Vec::with_capacity(size_h * size_w);
        for r in top..top + size_h {
            let start = r * self.width + left;
            data.extend_from_slice(&self.data[start..start + size_w]);
        }
        Grid2D {
            height: size_h,
            width: size_w,
            data,
            unit: self.unit,
        }
    }
}

/// Dense row-major complex image.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid2D {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl ComplexGrid2D {
    pub fn new(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "complex grid {height}x{width} needs {} samples, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite(format!("complex sample {i} is {}", data[i])));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![Complex64::new(0.0, 0.0); height * width],
        }
    }

    pub fn from_real(grid: &Grid2D) -> Self {
        Self {
            height: grid.height(),
            width: grid.width(),
            data: grid.data().iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.width + col]
    }

    pub fn scale(&self, factor: f64) -> ComplexGrid2D {
        ComplexGrid2D {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn magnitude(&self) -> Grid2D {
        Grid2D {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| v.norm()).collect(),
            unit: Unit::Normalized,
        }
    }

    /// Real and imaginary parts as two stacked planes (`[2, H, W]`).
    pub fn to_planes(&self) -> Vec<f64> {
        let n = self.data.len();
        let mut out = vec![0.0; 2 * n];
        for (i, v) in self.data.iter().enumerate() {
            out[i] = v.re;
            out[n + i] = v.im;
        }
        out
    }

    pub fn from_planes(height: usize, width: usize, planes: &[f64]) -> Result<Self> {
        let n = height * width;
        if planes.len() != 2 * n {
            return Err(Error::Shape(format!(
                "two-channel planes need {} samples, got {}",
                2 * n,
                planes.len()
            )));
        }
        let data = (0..n)
            .map(|i| Complex64::new(planes[i], planes[n + i]))
            .collect();
        ComplexGrid2D::new(height, width, data)
    }

    pub fn crop(&self, top: usize, left: usize, size_h: usize, size_w: usize) -> ComplexGrid2D {
        assert!(top + size_h <= self.height && left + size_w <= self.width);
        let mut data = Vec::with_capacity(size_h * size_w);
        for r in top..top + size_h {
            let start = r * self.width + left;
            data.extend_from_slice(&self.data[start..start + size_w]);
        }
        ComplexGrid2D {
            height: size_h,
            width: size_w,
            data,
        }
    }
}
