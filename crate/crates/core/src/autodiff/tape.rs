use crate::error::{Error, Result};

use super::kernels::{self, ConvShape};

/// Dense real tensor. 4-D tensors use NCHW layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    values: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != values.len() {
            return Err(Error::Shape(format!(
                "dims {dims:?} need {n} values, got {}",
                values.len()
            )));
        }
        Ok(Self { dims, values })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Self {
            dims,
            values: vec![0.0; n],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            dims: vec![1],
            values: vec![v],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.values.len() == 1
    }

    fn nchw(&self, what: &str) -> Result<(usize, usize, usize, usize)> {
        match self.dims[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::Shape(format!(
                "{what} expects a 4-D NCHW tensor, got {:?}",
                self.dims
            ))),
        }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var, k: usize },
    Relu { x: Var },
    AvgPool { x: Var },
    MaxPool { x: Var, argmax: Vec<u32> },
    Upsample { x: Var },
    Concat { a: Var, b: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Scale { x: Var, alpha: f64 },
    SqNorm { x: Var },
    Sum { x: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records a forward computation so gradients can be pulled back through it.
///
/// Nodes are appended in evaluation order, which is already a topological
/// order; [`Tape::backward`] walks it once in reverse. Leaf gradients
/// accumulate across calls until [`Tape::zero_grad`] clears them, while
/// intermediate adjoints are rebuilt on every call.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    /// Trainable input; its gradient is kept after `backward`.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value.values[0]
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    pub fn zero_grad(&mut self) {
        for g in self.grads.iter_mut().flatten() {
            g.fill(0.0);
        }
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (da, db) = (&self.value(a).dims, &self.value(b).dims);
        if da != db {
            return Err(Error::Shape(format!("{what}: {da:?} vs {db:?}")));
        }
        Ok(())
    }

    /// Same-size cross-correlation with zero padding `(k-1)/2` plus a
    /// per-output-channel bias.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (n, cin, h, wd) = self.value(x).nchw("conv2d input")?;
        let (cout, wcin, k, k2) = self.value(w).nchw("conv2d weight")?;
        if wcin != cin || k != k2 || k % 2 == 0 {
            return Err(Error::Shape(format!(
                "conv2d weight {:?} incompatible with input channels {cin} (need odd square kernel)",
                self.value(w).dims
            )));
        }
        if self.value(b).dims != [cout] {
            return Err(Error::Shape(format!(
                "conv2d bias {:?}, expected [{cout}]",
                self.value(b).dims
            )));
        }
        let shape = ConvShape {
            n,
            cin,
            cout,
            h,
            w: wd,
            k,
        };
        let mut out = vec![0.0; n * cout * h * wd];
        kernels::conv_forward(
            &shape,
            &self.value(x).values,
            &self.value(w).values,
            &self.value(b).values,
            &mut out,
        );
        let needs = self.needs(&[x, w, b]);
        Ok(self.push(
            Tensor {
                dims: vec![n, cout, h, wd],
                values: out,
            },
            Op::Conv2d { x, w, b, k },
            needs,
        ))
    }

    /// Elementwise `max(x, 0)`; the derivative at exactly 0 is 0.
    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out = Tensor {
            dims: t.dims.clone(),
            values: t.values.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
        };
        let needs = self.needs(&[x]);
        self.push(out, Op::Relu { x }, needs)
    }

    fn pooled_dims(&self, x: Var, what: &str) -> Result<(usize, usize, usize, usize)> {
        let (n, c, h, w) = self.value(x).nchw(what)?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Shape(format!("{what} needs even H and W, got {h}x{w}")));
        }
        Ok((n, c, h, w))
    }

    /// 2x2 average pooling with stride 2.
    pub fn downsample2(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.pooled_dims(x, "downsample2")?;
        let mut out = vec![0.0; n * c * h * w / 4];
        kernels::avg_pool(&self.value(x).values, n * c, h, w, &mut out);
        let needs = self.needs(&[x]);
        Ok(self.push(
            Tensor {
                dims: vec![n, c, h / 2, w / 2],
                values: out,
            },
            Op::AvgPool { x },
            needs,
        ))
    }

    /// 2x2 max pooling with stride 2.
    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.pooled_dims(x, "maxpool2")?;
        let mut out = vec![0.0; n * c * h * w / 4];
        let argmax = kernels::max_pool(&self.value(x).values, n * c, h, w, &mut out);
        let needs = self.needs(&[x]);
        Ok(self.push(
            Tensor {
                dims: vec![n, c, h / 2, w / 2],
                values: out,
            },
            Op::MaxPool { x, argmax },
            needs,
        ))
    }

    /// Nearest-neighbour 2x upsampling.
    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).nchw("upsample2")?;
        let mut out = vec![0.0; n * c * h * w * 4];
        kernels::upsample_nearest(&self.value(x).values, n * c, h, w, &mut out);
        let needs = self.needs(&[x]);
        Ok(self.push(
            Tensor {
                dims: vec![n, c, 2 * h, 2 * w],
                values: out,
            },
            Op::Upsample { x },
            needs,
        ))
    }

    /// Channel concatenation `[a; b]`.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, ca, h, w) = self.value(a).nchw("concat_channels")?;
        let (nb, cb, hb, wb) = self.value(b).nchw("concat_channels")?;
        if (n, h, w) != (nb, hb, wb) {
            return Err(Error::Shape(format!(
                "concat_channels: {:?} vs {:?}",
                self.value(a).dims,
                self.value(b).dims
            )));
        }
        let hw = h * w;
        let mut out = Vec::with_capacity(n * (ca + cb) * hw);
        let (va, vb) = (&self.value(a).values, &self.value(b).values);
        for ni in 0..n {
            out.extend_from_slice(&va[ni * ca * hw..(ni + 1) * ca * hw]);
            out.extend_from_slice(&vb[ni * cb * hw..(ni + 1) * cb * hw]);
        }
        let needs = self.needs(&[a, b]);
        Ok(self.push(
            Tensor {
                dims: vec![n, ca + cb, h, w],
                values: out,
            },
            Op::Concat { a, b },
            needs,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let values = self
            .value(a)
            .values
            .iter()
            .zip(&self.value(b).values)
            .map(|(x, y)| x + y)
            .collect();
        let dims = self.value(a).dims.clone();
        let needs = self.needs(&[a, b]);
        Ok(self.push(Tensor { dims, values }, Op::Add { a, b }, needs))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let values = self
            .value(a)
            .values
            .iter()
            .zip(&self.value(b).values)
            .map(|(x, y)| x - y)
            .collect();
        let dims = self.value(a).dims.clone();
        let needs = self.needs(&[a, b]);
        Ok(self.push(Tensor { dims, values }, Op::Sub { a, b }, needs))
    }

    pub fn scale(&mut self, x: Var, alpha: f64) -> Var {
        let t = self.value(x);
        let out = Tensor {
            dims: t.dims.clone(),
            values: t.values.iter().map(|v| alpha * v).collect(),
        };
        let needs = self.needs(&[x]);
        self.push(out, Op::Scale { x, alpha }, needs)
    }

    /// Scalar `sum(x^2)`.
    pub fn sq_norm(&mut self, x: Var) -> Var {
        let s = self.value(x).values.iter().map(|v| v * v).sum();
        let needs = self.needs(&[x]);
        self.push(Tensor::scalar(s), Op::SqNorm { x }, needs)
    }

    /// Scalar `sum(x)`.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).values.iter().sum();
        let needs = self.needs(&[x]);
        self.push(Tensor::scalar(s), Op::Sum { x }, needs)
    }

    /// Bit pattern of every data-dependent branch taken in the forward pass
    /// (ReLU gates, max-pool winners). Two evaluations with equal patterns
    /// lie on the same smooth piece of the function.
    pub fn branch_pattern(&self) -> Vec<u64> {
        let mut bits = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu { x } => {
                    let xs = &self.nodes[x.0].value.values;
                    for chunk in xs.chunks(64) {
                        let mut word = 0u64;
                        for (i, &v) in chunk.iter().enumerate() {
                            if v > 0.0 {
                                word |= 1 << i;
                            }
                        }
                        bits.push(word);
                    }
                }
                Op::MaxPool { argmax, .. } => bits.extend(argmax.iter().map(|&a| a as u64)),
                _ => {}
            }
        }
        bits
    }

    /// Reverse sweep from a scalar `loss`, accumulating into the gradient
    /// slots of every `param` leaf that the loss depends on.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got dims {:?}",
                self.value(loss).dims
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    let slot = self.grads[i].get_or_insert_with(|| vec![0.0; g.len()]);
                    for (s, v) in slot.iter_mut().zip(&g) {
                        *s += v;
                    }
                }
                Op::Conv2d { x, w, b, k } => {
                    let (x, w, b, k) = (*x, *w, *b, *k);
                    let (n, cin, h, wd) = self.nodes[x.0].value.nchw("conv2d")?;
                    let cout = self.nodes[w.0].value.dims[0];
                    let shape = ConvShape {
                        n,
                        cin,
                        cout,
                        h,
                        w: wd,
                        k,
                    };
                    let mut dx = self.nodes[x.0].needs_grad.then(|| vec![0.0; n * cin * h * wd]);
                    let mut dw = self.nodes[w.0].needs_grad.then(|| vec![0.0; cout * cin * k * k]);
                    let mut db = self.nodes[b.0].needs_grad.then(|| vec![0.0; cout]);
                    kernels::conv_backward(
                        &shape,
                        &self.nodes[x.0].value.values,
                        &self.nodes[w.0].value.values,
                        &g,
                        dx.as_deref_mut(),
                        dw.as_deref_mut(),
                        db.as_deref_mut(),
                    );
                    accumulate(&mut adj, x, dx);
                    accumulate(&mut adj, w, dw);
                    accumulate(&mut adj, b, db);
                }
                Op::Relu { x } => {
                    let xs = &self.nodes[x.0].value.values;
                    let d = g
                        .iter()
                        .zip(xs)
                        .map(|(&gi, &xi)| if xi > 0.0 { gi } else { 0.0 })
                        .collect();
                    accumulate(&mut adj, *x, Some(d));
                }
                Op::AvgPool { x } => {
                    let (n, c, h, w) = self.nodes[x.0].value.nchw("downsample2")?;
                    let mut d = vec![0.0; n * c * h * w];
                    kernels::avg_pool_backward(&g, n * c, h, w, &mut d);
                    accumulate(&mut adj, *x, Some(d));
                }
                Op::MaxPool { x, argmax } => {
                    let mut d = vec![0.0; self.nodes[x.0].value.len()];
                    for (gi, &a) in g.iter().zip(argmax) {
                        d[a as usize] += gi;
                    }
                    accumulate(&mut adj, *x, Some(d));
                }
                Op::Upsample { x } => {
                    let (n, c, h, w) = self.nodes[x.0].value.nchw("upsample2")?;
                    let mut d = vec![0.0; n * c * h * w];
                    kernels::upsample_backward(&g, n * c, h, w, &mut d);
                    accumulate(&mut adj, *x, Some(d));
                }
                Op::Concat { a, b } => {
                    let (n, ca, h, w) = self.nodes[a.0].value.nchw("concat")?;
                    let cb = self.nodes[b.0].value.dims[1];
                    let hw = h * w;
                    let mut da = Vec::with_capacity(n * ca * hw);
                    let mut db = Vec::with_capacity(n * cb * hw);
                    for ni in 0..n {
                        let base = ni * (ca + cb) * hw;
                        da.extend_from_slice(&g[base..base + ca * hw]);
                        db.extend_from_slice(&g[base + ca * hw..base + (ca + cb) * hw]);
                    }
                    accumulate(&mut adj, *a, Some(da));
                    accumulate(&mut adj, *b, Some(db));
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    accumulate(&mut adj, b, Some(g.clone()));
                    accumulate(&mut adj, a, Some(g));
                }
                Op::Sub { a, b } => {
                    let (a, b) = (*a, *b);
                    accumulate(&mut adj, b, Some(g.iter().map(|v| -v).collect()));
                    accumulate(&mut adj, a, Some(g));
                }
                Op::Scale { x, alpha } => {
                    let alpha = *alpha;
                    accumulate(&mut adj, *x, Some(g.iter().map(|v| alpha * v).collect()));
                }
                Op::SqNorm { x } => {
                    let s = 2.0 * g[0];
                    let d = self.nodes[x.0].value.values.iter().map(|v| s * v).collect();
                    accumulate(&mut adj, *x, Some(d));
                }
                Op::Sum { x } => {
                    let d = vec![g[0]; self.nodes[x.0].value.len()];
                    accumulate(&mut adj, *x, Some(d));
                }
            }
        }
        Ok(())
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], v: Var, d: Option<Vec<f64>>) {
    let Some(d) = d else { return };
    match &mut adj[v.0] {
        Some(existing) => {
            for (e, x) in existing.iter_mut().zip(&d) {
                *e += x;
            }
        }
        slot @ None => *slot = Some(d),
    }
}
