//! Finite-difference gradient checks of every tape operator, the loss
//! terms, and a whole U-Net.

use crate::autodiff::{grad_check, GradCheckOptions, GradCheckReport, Tape, Tensor, Var};
use crate::error::Result;
use crate::losses::{aggregate, loss_consensus, loss_consistency, loss_noise2clean, loss_weight_decay};
use crate::model::{build_unet, init_he, AttachedParams, UnetConfig};
use crate::numerics::Rng;

#[derive(Debug, Clone)]
pub struct NamedCheck {
    pub name: String,
    pub report: GradCheckReport,
}

fn random_tensor(dims: Vec<usize>, rng: &mut Rng) -> Tensor {
    let n = dims.iter().product();
    Tensor::new(dims, (0..n).map(|_| rng.standard_normal()).collect()).expect("dims match")
}

/// `‖y − probe‖²` with a fixed random probe, so every output element gets a
/// distinct adjoint.
fn probe_loss(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let dims = tape.value(y).dims().to_vec();
    let probe = tape.constant(random_tensor(dims, &mut Rng::new(seed)));
    let d = tape.sub(y, probe)?;
    Ok(tape.sq_norm(d))
}

fn check(
    name: &str,
    point: Vec<Tensor>,
    opts: &GradCheckOptions,
    build: impl Fn(&mut Tape, &[Var]) -> Result<Var>,
) -> Result<NamedCheck> {
    Ok(NamedCheck {
        name: name.to_string(),
        report: grad_check(build, &point, opts)?,
    })
}

/// One check per operator and per loss term, every coordinate.
pub fn operator_checks(seed: u64) -> Result<Vec<NamedCheck>> {
    let mut rng = Rng::new(seed);
    let opts = GradCheckOptions {
        seed,
        ..Default::default()
    };
    let mut t = |dims: Vec<usize>| random_tensor(dims, &mut rng);
    let mut out = Vec::new();
    out.push(check("conv2d 3x3", vec![t(vec![2, 3, 6, 5]), t(vec![4, 3, 3, 3]), t(vec![4])], &opts, |tp, v| {
        let y = tp.conv2d(v[0], v[1], v[2])?;
        probe_loss(tp, y, 1)
    })?);
    out.push(check("conv2d 1x1", vec![t(vec![1, 2, 4, 4]), t(vec![3, 2, 1, 1]), t(vec![3])], &opts, |tp, v| {
        let y = tp.conv2d(v[0], v[1], v[2])?;
        probe_loss(tp, y, 2)
    })?);
    out.push(check("relu", vec![t(vec![1, 2, 5, 5])], &opts, |tp, v| {
        let y = tp.relu(v[0]);
        probe_loss(tp, y, 3)
    })?);
    out.push(check("downsample2", vec![t(vec![2, 2, 4, 6])], &opts, |tp, v| {
        let y = tp.downsample2(v[0])?;
        probe_loss(tp, y, 4)
    })?);
    out.push(check("maxpool2", vec![t(vec![1, 2, 4, 4])], &opts, |tp, v| {
        let y = tp.maxpool2(v[0])?;
        probe_loss(tp, y, 5)
    })?);
    out.push(check("upsample2", vec![t(vec![1, 2, 3, 3])], &opts, |tp, v| {
        let y = tp.upsample2(v[0])?;
        probe_loss(tp, y, 6)
    })?);
    out.push(check("concat_channels", vec![t(vec![2, 2, 3, 3]), t(vec![2, 1, 3, 3])], &opts, |tp, v| {
        let y = tp.concat_channels(v[0], v[1])?;
        probe_loss(tp, y, 7)
    })?);
    out.push(check("add/sub/scale", vec![t(vec![2, 3]), t(vec![2, 3])], &opts, |tp, v| {
        let s = tp.add(v[0], v[1])?;
        let d = tp.sub(s, v[1])?;
        let d = tp.sub(d, v[1])?;
        let y = tp.scale(d, -1.7);
        probe_loss(tp, y, 8)
    })?);
    out.push(check("sum/sq_norm", vec![t(vec![7])], &opts, |tp, v| {
        let s = tp.sum(v[0]);
        let q = tp.sq_norm(v[0]);
        let s2 = tp.sq_norm(s);
        tp.add(q, s2)
    })?);
    out.push(check("loss_consensus", vec![t(vec![2, 1, 3, 3]), t(vec![2, 1, 3, 3]), t(vec![2, 1, 3, 3]), t(vec![2, 1, 3, 3])], &opts, |tp, v| {
        loss_consensus(tp, v[0], v[1], v[2], v[3])
    })?);
    out.push(check("loss_noise2clean", vec![t(vec![3, 2, 2, 2]), t(vec![3, 2, 2, 2])], &opts, |tp, v| {
        loss_noise2clean(tp, v[0], v[1])
    })?);
    out.push(check("aggregate + loss_consistency", vec![t(vec![2, 1, 3, 3]), t(vec![2, 1, 3, 3]), t(vec![2, 1, 3, 3])], &opts, |tp, v| {
        let z = aggregate(tp, v[0], v[1])?;
        loss_consistency(tp, z, v[2])
    })?);
    out.push(check("loss_weight_decay", vec![t(vec![2, 1, 3, 3]), t(vec![2]), t(vec![1, 2, 1, 1]), t(vec![1])], &opts, |tp, v| {
        let a = AttachedParams { layers: vec![(v[0], v[1])] };
        let b = AttachedParams { layers: vec![(v[2], v[3])] };
        loss_weight_decay(tp, &[&a, &b])
    })?);
    Ok(out)
}

/// Whole-network check at He initialization with a random input; samples
/// `coords` coordinates of the input and of every weight and bias tensor.
pub fn unet_check(config: UnetConfig, size: usize, coords: usize, seed: u64) -> Result<NamedCheck> {
    let mut net = build_unet(config)?;
    let mut rng = Rng::new(seed);
    init_he(&mut net, &mut rng);
    let x = random_tensor(vec![1, config.in_channels, size, size], &mut rng);
    let mut point = vec![x];
    for l in &net.layout {
        point.push(Tensor::new(vec![l.cout, l.cin, l.kernel, l.kernel], net.theta[l.weight_range()].to_vec())?);
        point.push(Tensor::new(vec![l.cout], net.theta[l.bias_range()].to_vec())?);
    }
    let opts = GradCheckOptions {
        coords_per_input: Some(coords),
        seed,
        ..Default::default()
    };
    let name = format!(
        "unet depth {} base {} on {size}x{size}",
        config.depth, config.base_features
    );
    check(&name, point, &opts, move |tape, vars| {
        let attached = AttachedParams {
            layers: vars[1..].chunks(2).map(|c| (c[0], c[1])).collect(),
        };
        let y = net.forward(tape, &attached, vars[0])?;
        probe_loss(tape, y, seed ^ 0x5a5a)
    })
}
