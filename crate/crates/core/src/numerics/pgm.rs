//! 8-bit binary PGM previews.

use std::fs;
use std::path::Path;

use super::grid::Grid2D;
use crate::error::{Error, Result};

/// Maps `value` linearly so that `lo` -> 0 and `hi` -> 255, clamping outside.
pub fn window_to_byte(value: f64, lo: f64, hi: f64) -> u8 {
    let t = (value - lo) / (hi - lo);
    (t.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_pgm(grid: &Grid2D, lo: f64, hi: f64) -> Result<Vec<u8>> {
    if !(hi > lo) {
        return Err(Error::InvalidArgument(format!(
            "display window [{lo}, {hi}] is empty"
        )));
    }
    let mut out = format!("P5\n{} {}\n255\n", grid.width(), grid.height()).into_bytes();
    out.extend(grid.data().iter().map(|&v| window_to_byte(v, lo, hi)));
    Ok(out)
}

pub fn write_pgm(path: impl AsRef<Path>, grid: &Grid2D, lo: f64, hi: f64) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_pgm(grid, lo, hi)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grid::Unit;

    #[test]
    fn liver_window_endpoints() {
        assert_eq!(window_to_byte(-160.0, -160.0, 240.0), 0);
        assert_eq!(window_to_byte(240.0, -160.0, 240.0), 255);
        assert_eq!(window_to_byte(40.0, -160.0, 240.0), 128);
        assert_eq!(window_to_byte(-1000.0, -160.0, 240.0), 0);
        assert_eq!(window_to_byte(3000.0, -160.0, 240.0), 255);
    }

    #[test]
    fn header_and_payload() {
        let g = Grid2D::new(1, 2, vec![0.0, 1.0], Unit::Dimensionless).unwrap();
        let bytes = encode_pgm(&g, 0.0, 1.0).unwrap();
        assert_eq!(bytes, b"P5\n2 1\n255\n\x00\xff".to_vec());
        assert!(encode_pgm(&g, 1.0, 1.0).is_err());
    }
}
