//! Residual U-Net denoiser `f(x; Θ)`, its initialization and the Adam
//! optimizer.

mod adam;
pub mod checkpoint;
mod unet;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_params, save_params};
pub use unet::{build_unet, init_he, AttachedParams, LayerSpec, ModelParams, PoolKind, UnetConfig};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, GradCheckOptions, Tape, Tensor};
    use crate::error::Error;
    use crate::numerics::Rng;

    fn random_input(dims: Vec<usize>, seed: u64) -> Tensor {
        let mut rng = Rng::new(seed);
        let n = dims.iter().product();
        Tensor::new(dims, (0..n).map(|_| 2.0 * rng.uniform() - 1.0).collect()).unwrap()
    }

    #[test]
    fn output_shape_matches_input() {
        let mut p = build_unet(UnetConfig::new(1, 4, 1)).unwrap();
        init_he(&mut p, &mut Rng::new(1));
        let y = p.apply(&random_input(vec![1, 1, 16, 16], 2)).unwrap();
        assert_eq!(y.dims(), &[1, 1, 16, 16]);
    }

    #[test]
    fn zero_parameters_give_identity() {
        for cfg in [UnetConfig::new(2, 4, 1), UnetConfig::new(1, 2, 2)] {
            let p = build_unet(cfg).unwrap();
            let x = random_input(vec![2, cfg.in_channels, 8, 12], 3);
            assert_eq!(p.apply(&x).unwrap(), x);
        }
    }

    #[test]
    fn parameter_count_matches_hand_count() {
        // depth 2, base 8, one channel, counted layer by layer:
        let conv = |cin: usize, cout: usize, k: usize| cin * cout * k * k + cout;
        let expected = conv(1, 8, 3) + conv(8, 8, 3) // enc0
            + conv(8, 16, 3) + conv(16, 16, 3)        // enc1
            + conv(16, 32, 3) + conv(32, 32, 3)       // bottleneck
            + conv(32 + 16, 16, 3) + conv(16, 16, 3)  // dec1
            + conv(16 + 8, 8, 3) + conv(8, 8, 3)      // dec0
            + conv(8, 1, 1); // head
        assert_eq!(expected, 29_617);
        let p = build_unet(UnetConfig::new(2, 8, 1)).unwrap();
        assert_eq!(p.len(), expected);
        let mut next = 0;
        for l in &p.layout {
            assert_eq!(l.offset, next, "gap before {}", l.name);
            next = l.offset + l.len();
        }
        assert_eq!(next, p.len());
    }

    #[test]
    fn rejects_bad_configs_and_inputs() {
        assert!(build_unet(UnetConfig::new(0, 4, 1)).is_err());
        let p = build_unet(UnetConfig::new(2, 4, 1)).unwrap();
        assert!(matches!(p.apply(&Tensor::zeros(vec![1, 1, 6, 8])), Err(Error::Shape(_))));
        assert!(matches!(p.apply(&Tensor::zeros(vec![1, 2, 8, 8])), Err(Error::Shape(_))));
    }

    #[test]
    fn he_init_statistics_and_determinism() {
        let cfg = UnetConfig::new(2, 16, 1);
        let mut a = build_unet(cfg).unwrap();
        let mut b = build_unet(cfg).unwrap();
        init_he(&mut a, &mut Rng::new(5));
        init_he(&mut b, &mut Rng::new(5));
        assert_eq!(a.theta, b.theta);
        for l in &a.layout {
            assert!(a.theta[l.bias_range()].iter().all(|&v| v == 0.0));
        }
        // enc1.conv2 is 32x32x3x3 = 9216 weights; the bottleneck conv2 has 36864
        let layer = a.layout.iter().find(|l| l.weight_len() >= 10_000).unwrap();
        let w = &a.theta[layer.weight_range()];
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        let target = 2.0 / layer.fan_in() as f64;
        assert!((var / target - 1.0).abs() < 0.1, "{} var {var} target {target}", layer.name);
    }

    #[test]
    fn random_network_output_is_finite() {
        let mut p = build_unet(UnetConfig::new(3, 4, 2)).unwrap();
        init_he(&mut p, &mut Rng::new(6));
        let y = p.apply(&random_input(vec![2, 2, 16, 16], 7)).unwrap();
        assert!(y.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn whole_network_gradient_check() {
        let mut p = build_unet(UnetConfig::new(1, 4, 1)).unwrap();
        init_he(&mut p, &mut Rng::new(8));
        let x = random_input(vec![1, 1, 16, 16], 9);
        let target = random_input(vec![1, 1, 16, 16], 10);
        let layout = p.layout.clone();
        let mut point = vec![x];
        for l in &layout {
            point.push(
                Tensor::new(vec![l.cout, l.cin, l.kernel, l.kernel], p.theta[l.weight_range()].to_vec())
                    .unwrap(),
            );
            point.push(Tensor::new(vec![l.cout], p.theta[l.bias_range()].to_vec()).unwrap());
        }
        let net = p.clone();
        let report = grad_check(
            move |tape, vars| {
                let attached = AttachedParams {
                    layers: vars[1..].chunks(2).map(|c| (c[0], c[1])).collect(),
                };
                let y = net.forward(tape, &attached, vars[0])?;
                let t = tape.constant(target.clone());
                let d = tape.sub(y, t)?;
                Ok(tape.sq_norm(d))
            },
            &point,
            &GradCheckOptions {
                coords_per_input: Some(40),
                seed: 11,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(report.passes(1e-5), "{report:?}");
        assert!(report.checked > 300, "{report:?}");
    }

    #[test]
    fn adam_first_step_closed_form() {
        // t = 1: m_hat = g, v_hat = g^2, so the step is -lr * g / (|g| + eps).
        for g in [0.37, -2.5, 1e-3, 40.0] {
            let mut p = build_unet(UnetConfig::new(1, 1, 1)).unwrap();
            let start: Vec<f64> = (0..p.len()).map(|i| 0.1 * i as f64).collect();
            p.theta = start.clone();
            let mut st = AdamState::new(p.len(), 0.1);
            let grads = vec![g; p.len()];
            adam_step(&mut p, &grads, &mut st).unwrap();
            let expected_step = -0.1 * g / (g.abs() + 1e-8);
            for (after, before) in p.theta.iter().zip(&start) {
                assert!((after - before - expected_step).abs() < 1e-12);
            }
            assert_eq!(st.t, 1);
        }
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut p = build_unet(UnetConfig::new(1, 2, 1)).unwrap();
        init_he(&mut p, &mut Rng::new(1));
        let before = p.theta.clone();
        let mut st = AdamState::new(p.len(), 1e-3);
        let grads = vec![0.0; p.len()];
        adam_step(&mut p, &grads, &mut st).unwrap();
        assert_eq!(p.theta, before);
    }

    #[test]
    fn adam_names_offending_layer() {
        let mut p = build_unet(UnetConfig::new(1, 2, 1)).unwrap();
        let mut grads = vec![0.0; p.len()];
        let layer = p.layout[2].clone();
        grads[layer.offset + 1] = f64::NAN;
        let mut st = AdamState::new(p.len(), 1e-3);
        let err = adam_step(&mut p, &grads, &mut st).unwrap_err();
        assert!(err.to_string().contains(&layer.name), "{err}");
        assert_eq!(st.t, 0);
    }

    fn train_steps(seed: u64, steps: usize, order: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let cfg = UnetConfig::new(1, 4, 1);
        let mut p = build_unet(cfg).unwrap();
        init_he(&mut p, &mut Rng::new(seed));
        let clean: Vec<Tensor> = (0..4).map(|i| random_input(vec![1, 1, 8, 8], 100 + i)).collect();
        let noisy: Vec<Tensor> = clean
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let n = random_input(vec![1, 1, 8, 8], 200 + i as u64);
                let v = c.values().iter().zip(n.values()).map(|(a, b)| a + 0.3 * b).collect();
                Tensor::new(vec![1, 1, 8, 8], v).unwrap()
            })
            .collect();
        let mut st = AdamState::new(p.len(), 1e-4);
        let mut losses = Vec::new();
        for step in 0..steps {
            let i = order[step % order.len()];
            let mut tape = Tape::new();
            let a = p.attach(&mut tape);
            let x = tape.constant(noisy[i].clone());
            let y = p.forward(&mut tape, &a, x).unwrap();
            let t = tape.constant(clean[i].clone());
            let d = tape.sub(y, t).unwrap();
            let l = tape.sq_norm(d);
            losses.push(tape.scalar_value(l));
            tape.backward(l).unwrap();
            let g = p.gather_grads(&tape, &a);
            adam_step(&mut p, &g, &mut st).unwrap();
        }
        (p.theta, losses)
    }

    #[test]
    fn seeded_training_is_bitwise_reproducible() {
        let (a, _) = train_steps(3, 100, &[0, 1, 2, 3]);
        let (b, _) = train_steps(3, 100, &[0, 1, 2, 3]);
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        let (c, _) = train_steps(3, 100, &[3, 1, 0, 2]);
        assert_ne!(a, c);
    }

    #[test]
    fn fixed_batch_loss_descends() {
        let (_, losses) = train_steps(4, 50, &[0]);
        assert!(losses[49] < losses[0], "{} -> {}", losses[0], losses[49]);
        let early: f64 = losses[..10].iter().sum();
        let late: f64 = losses[40..].iter().sum();
        assert!(late < early);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = build_unet(UnetConfig {
            pool: PoolKind::Max,
            ..UnetConfig::new(2, 3, 2)
        })
        .unwrap();
        init_he(&mut p, &mut Rng::new(12));
        save_params(dir.path(), "theta1", &p).unwrap();
        let back = load_params(dir.path(), "theta1").unwrap();
        assert_eq!(back, p);

        let header = std::fs::read_to_string(dir.path().join("theta1.txt")).unwrap();
        let tampered = header.replace("base_features = 3", "base_features = 4");
        std::fs::write(dir.path().join("theta1.txt"), tampered).unwrap();
        assert!(load_params(dir.path(), "theta1").is_err());
    }
}
