mod common;

use common::*;
use num_complex::Complex64;
use proptest::prelude::*;
use rustfft::FftPlanner;
use ssm_prune::discretize::{rescale_model, rescale_timescales, zoh_discretize};
use ssm_prune::layer::{pair_conjugates, siso_block_to_mimo, validate_layer, DEFAULT_PAIR_TOL};
use ssm_prune::norms::{energy_gain_check, sigma_max, subsystem_hinf};
use ssm_prune::pruning::{
    apply_mask, prune_model, score_model, select_global, select_mask, Criterion, MaskMode, ScoreKind,
};
use ssm_prune::simulate::{frequency_response, imag_residue, model_forward, run_recursion, FreqGrid, Signal};
use ssm_prune::synth::{random_ct_layer, random_dt_layer, SynthConfig};
use ssm_prune::verify::{layer_bound_report, model_bound_report};
use ssm_prune::{Activation, C64};

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cfg(48))]

    #[test]
    fn recursion_is_linear(seed in any::<u64>(), a in -3.0..3.0f64, b in -3.0..3.0f64, h in 1..4usize) {
        let m = model(seed, 1, 6, h);
        let dt = &m.layers[0];
        let u1 = noise(seed ^ 1, 96, h);
        let u2 = noise(seed ^ 2, 96, h);
        let lhs = run_recursion(dt, &u1.combine(a, &u2, b), None).unwrap();
        let rhs = run_recursion(dt, &u1, None).unwrap().combine(a, &run_recursion(dt, &u2, None).unwrap(), b);
        let scale = max_abs(&run_recursion(dt, &u1, None).unwrap()).max(max_abs(&run_recursion(dt, &u2, None).unwrap()));
        let diff = lhs.sub(&rhs);
        prop_assert!(max_abs(&diff) <= 1e-10 * scale * (a.abs() + b.abs()).max(1.0));
    }

    #[test]
    fn transfer_matrix_is_sum_of_subsystems(seed in any::<u64>(), n in 1..5usize, h in 1..4usize) {
        let dt = model(seed, 1, 2 * n, h).layers.remove(0);
        let grid = FreqGrid::uniform(32);
        let all: Vec<usize> = (0..dt.order()).collect();
        let full = frequency_response(&dt, &all, &grid);
        let parts: Vec<_> = all.iter().map(|&i| frequency_response(&dt, &[i], &grid)).collect();
        for (k, g) in full.iter().enumerate() {
            let sum = parts.iter().fold(g * C64::new(0.0, 0.0), |acc, p| acc + &p[k]);
            prop_assert!((g - &sum).norm() <= 1e-12 * g.norm().max(1e-300) * dt.order() as f64 * 10.0);
        }
    }

    #[test]
    fn paired_outputs_are_real(seed in any::<u64>(), h in 1..4usize) {
        let m = model(seed, 1, 8, h);
        let u = noise(seed, 128, h);
        prop_assert!(imag_residue(&m.layers[0], &u, None).unwrap() < 1e-8);
    }

    #[test]
    fn masked_matches_compacted(seed in any::<u64>(), ratio in 0.0..1.0f64, c in 0..7usize) {
        let m = model(seed, 2, 8, 2);
        let mask = select_mask(&m, Criterion::ALL[c], ratio, Some(seed)).unwrap();
        let u = noise(seed, 128, 2);
        let in_sim = model_forward(&m, &u, Some(&mask)).unwrap();
        let masked = model_forward(&prune_model(&m, &mask, MaskMode::Masked).unwrap().model, &u, None).unwrap();
        let compact = model_forward(&prune_model(&m, &mask, MaskMode::Compacted).unwrap().model, &u, None).unwrap();
        prop_assert!(rel_gap(&masked, &compact) <= 1e-12);
        prop_assert!(rel_gap(&in_sim, &compact) <= 1e-12);
    }

    #[test]
    fn all_keep_compaction_is_identity(seed in any::<u64>()) {
        let dt = model(seed, 1, 6, 2).layers.remove(0);
        let keep = vec![true; dt.order()];
        prop_assert_eq!(apply_mask(&dt, &keep, MaskMode::Compacted).unwrap(), dt.clone());
        prop_assert_eq!(apply_mask(&dt, &keep, MaskMode::Masked).unwrap(), dt);
    }

    #[test]
    fn discretization_preserves_stability_and_pairs(seed in any::<u64>(), n in 1..6usize, h in 1..3usize) {
        let ct = random_ct_layer(&mut rng(seed), &SynthConfig::new(1, 2 * n, h));
        prop_assert!(validate_layer(&ct).is_empty());
        let dt = zoh_discretize(&ct).unwrap();
        prop_assert!(validate_layer(&dt).is_empty());
        for i in 0..dt.order() {
            let expected = (ct.lambda[i].re * ct.delta[i]).exp();
            prop_assert!(dt.lambda_bar[i].norm() < 1.0);
            prop_assert!((dt.lambda_bar[i].norm() - expected).abs() <= 4.0 * f64::EPSILON * expected);
        }
        for &(i, j) in ct.conj_pairs.as_ref().unwrap() {
            prop_assert_eq!(dt.lambda_bar[i], dt.lambda_bar[j].conj());
            for c in 0..h {
                prop_assert_eq!(dt.b_bar[(i, c)], dt.b_bar[(j, c)].conj());
            }
        }
    }

    #[test]
    fn rescaling_composes(seed in any::<u64>(), a in 0.01..100.0f64, b in 0.01..100.0f64) {
        let ct = random_ct_layer(&mut rng(seed), &SynthConfig::new(1, 6, 2));
        let twice = rescale_timescales(&rescale_timescales(&ct, a).unwrap(), b).unwrap();
        let once = rescale_timescales(&ct, a * b).unwrap();
        for (x, y) in twice.delta.iter().zip(&once.delta) {
            prop_assert!((x - y).abs() <= 4.0 * f64::EPSILON * y);
        }
        prop_assert_eq!(&twice.lambda, &once.lambda);
    }

    #[test]
    fn siso_embedding_round_trips(seed in any::<u64>(), h in 1..4usize, n in 1..4usize) {
        let mut r = rng(seed);
        let systems: Vec<_> = (0..h).map(|_| random_dt_layer(&mut r, 2 * n, 1, (0.2, 0.95), 1.0)).collect();
        let block = siso_block_to_mimo(&systems).unwrap();
        for (k, s) in systems.iter().enumerate() {
            let back = block.siso_channel(k).unwrap();
            let imp = Signal::impulse(64, 1, 0);
            prop_assert_eq!(run_recursion(&back, &imp, None).unwrap(), run_recursion(s, &imp, None).unwrap());
            // channel k of the block responds only to its own system
            let y = run_recursion(&block, &Signal::impulse(64, h, k), None).unwrap();
            let y_s = run_recursion(s, &imp, None).unwrap();
            for t in 0..64 {
                prop_assert!((y.at(t, k) - y_s.at(t, 0)).abs() <= 1e-14 * max_abs(&y_s).max(1e-300));
                for c in (0..h).filter(|&c| c != k) {
                    prop_assert_eq!(y.at(t, c), 0.0);
                }
            }
        }
    }

    #[test]
    fn pairing_is_stable(seed in any::<u64>()) {
        let dt = model(seed, 1, 8, 1).layers.remove(0);
        let first = pair_conjugates(&dt, DEFAULT_PAIR_TOL).unwrap();
        let mut again = dt.clone();
        again.conj_pairs = Some(first.pairs.clone());
        prop_assert_eq!(pair_conjugates(&again, DEFAULT_PAIR_TOL).unwrap().pairs, first.pairs);
    }

    #[test]
    fn rank_one_norm_factorizes(seed in any::<u64>(), h in 1..6usize) {
        let dt = model(seed, 1, 4, h).layers.remove(0);
        for i in 0..dt.order() {
            let c = dt.c_fwd.column(i).into_owned();
            let b = dt.b_bar.row(i).into_owned();
            let outer = &c * &b;
            let product = c.norm() * b.norm();
            prop_assert!((sigma_max(&outer) - product).abs() <= 1e-12 * product);
        }
    }

    #[test]
    fn energy_gain_holds(seed in any::<u64>(), h in 1..3usize) {
        let dt = fast_layer(seed, 6, h);
        let g = energy_gain_check(&dt, &noise(seed, 128, h)).unwrap();
        prop_assert!(g.holds(1e-8));
    }
}

proptest! {
    #![proptest_config(cfg(64))]

    #[test]
    fn last_is_monotone_and_bounded(seed in any::<u64>(), layers in 1..4usize) {
        let m = model(seed, layers, 8, 2);
        let table = score_model(&m, ScoreKind::Last).unwrap();
        for s in &table.layers {
            let along: Vec<f64> = s.rank.iter().map(|&i| s.last[i]).collect();
            prop_assert!(along.windows(2).all(|w| w[1] <= w[0]));
            prop_assert_eq!(along[0], 1.0);
            prop_assert!(along.iter().all(|&v| v > 0.0 && v <= 1.0));
            // within a layer LAST prunes in H∞ order
            let last_order: Vec<_> = s.prune_order(ScoreKind::Last).into_iter().cloned().collect();
            let hinf_order: Vec<_> = s.prune_order(ScoreKind::Hinf).into_iter().cloned().collect();
            prop_assert_eq!(last_order, hinf_order);
        }
        let lamp = score_model(&m, ScoreKind::Lamp).unwrap();
        for s in &lamp.layers {
            prop_assert!(s.lamp.iter().all(|&v| v > 0.0 && v <= 1.0));
            prop_assert_eq!(s.magnitude_rank.iter().map(|&i| s.lamp[i]).next(), Some(1.0));
        }
    }

    #[test]
    fn pairs_share_scores_and_mask_bits(seed in any::<u64>(), ratio in 0.0..=1.0f64, c in 0..8usize) {
        let m = model(seed, 2, 8, 2);
        for kind in [ScoreKind::Hinf, ScoreKind::Last, ScoreKind::Magnitude, ScoreKind::Lamp] {
            let t = score_model(&m, kind).unwrap();
            for (dt, s) in m.layers.iter().zip(&t.layers) {
                for &(i, j) in dt.conj_pairs.as_ref().unwrap() {
                    prop_assert_eq!(s.values(kind)[i], s.values(kind)[j]);
                }
            }
        }
        let mask = select_mask(&m, Criterion::ALL[c], ratio, Some(seed)).unwrap();
        for (dt, lm) in m.layers.iter().zip(&mask.layers) {
            for &(i, j) in dt.conj_pairs.as_ref().unwrap() {
                prop_assert_eq!(lm.keep[i], lm.keep[j]);
            }
            prop_assert!(lm.keep.iter().any(|&k| k));
        }
    }

    #[test]
    fn layer_scale_equivariance(seed in any::<u64>(), layer in 0..3usize, log_s in -3.0..3.0f64) {
        let m = model(seed, 3, 8, 2);
        let s = 10f64.powf(log_s);
        let mut scaled = m.clone();
        scaled.layers[layer].c_fwd *= C64::new(s, 0.0);
        let before = score_model(&m, ScoreKind::Last).unwrap();
        let after = score_model(&scaled, ScoreKind::Last).unwrap();
        let (b, a) = (&before.layers[layer], &after.layers[layer]);
        for i in 0..b.order() {
            prop_assert!((a.hinf_sq[i] - s * s * b.hinf_sq[i]).abs() <= 1e-12 * a.hinf_sq[i]);
            prop_assert!((a.last[i] - b.last[i]).abs() <= 1e-12);
        }
        prop_assert_eq!(
            select_global(&before, 0.5).unwrap().layers,
            select_global(&after, 0.5).unwrap().layers
        );
    }

    #[test]
    fn selection_is_thread_count_independent(seed in any::<u64>(), c in 0..8usize) {
        let m = model(seed, 3, 8, 2);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
                .install(|| select_mask(&m, Criterion::ALL[c], 0.4, Some(seed)).unwrap())
        };
        prop_assert_eq!(run(1), run(4));
    }
}

proptest! {
    #![proptest_config(cfg(24))]

    #[test]
    fn single_state_removal_obeys_layer_bound(seed in any::<u64>(), relu in any::<bool>()) {
        // unpaired states: no cross terms, so the per-state bound is exact
        let mut dt = fast_layer(seed, 6, 2);
        dt.conj_pairs = None;
        let act = if relu { Activation::Relu } else { Activation::Identity };
        let inputs: Vec<_> = (0..4).map(|k| noise(seed ^ k, 96, 2)).collect();
        for i in 0..dt.order() {
            let rep = layer_bound_report(&dt, &[i], &inputs, act).unwrap();
            prop_assert_eq!(rep.violations(), 0);
        }
    }

    #[test]
    fn pruned_set_obeys_triangle_bound(seed in any::<u64>()) {
        let dt = fast_layer(seed, 6, 2);
        let inputs: Vec<_> = (0..4).map(|k| noise(seed ^ k, 96, 2)).collect();
        let set = [0usize, 1, 2, 3];
        let rep = layer_bound_report(&dt, &set, &inputs, Activation::Relu).unwrap();
        let norms: f64 = set.iter().map(|&i| subsystem_hinf(&dt, i).unwrap()).sum();
        for d in &rep.per_input {
            prop_assert!(d.distortion <= norms * norms * d.energy_in * (1.0 + 1e-8));
        }
    }

    #[test]
    fn layer_bound_grows_with_pruned_set(seed in any::<u64>()) {
        let dt = fast_layer(seed, 8, 2);
        let inputs = vec![noise(seed, 64, 2)];
        let mut prev = 0.0;
        for k in 1..=dt.order() {
            let set: Vec<usize> = (0..k).collect();
            let b = layer_bound_report(&dt, &set, &inputs, Activation::Relu).unwrap().per_input[0].bound;
            prop_assert!(b >= prev);
            prev = b;
        }
    }

    #[test]
    fn model_bound_holds_per_step(seed in any::<u64>(), identity in any::<bool>(), ratio in 0.1..0.6f64) {
        let act = if identity { Activation::Identity } else { Activation::Relu };
        let m = fast_model(seed, 3, 6, 2, act);
        let mask = select_mask(&m, Criterion::Last, ratio, None).unwrap();
        let inputs: Vec<_> = (0..3).map(|k| noise(seed ^ k, 64, 2)).collect();
        let rep = model_bound_report(&m, &mask, &inputs).unwrap();
        prop_assert_eq!(rep.step_violations(), 0);
        prop_assert!(rep.total.measured <= rep.total.triangle_bound * (1.0 + 1e-8));
    }

    #[test]
    fn cascade_matches_frequency_product(seed in any::<u64>(), h in 1..3usize) {
        let m = fast_model(seed, 2, 4, h, Activation::Identity);
        let (len, n) = (64, 1024);
        let u = noise(seed, len, h).zero_padded(n - len);
        let y = model_forward(&m, &u, None).unwrap();
        let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
        let spectrum = |s: &Signal| -> Vec<Vec<Complex64>> {
            (0..h).map(|c| {
                let mut buf: Vec<Complex64> = s.channel(c).into_iter().map(|v| Complex64::new(v, 0.0)).collect();
                fft.process(&mut buf);
                buf
            }).collect()
        };
        let (us, ys) = (spectrum(&u), spectrum(&y));
        let grid = FreqGrid::new((0..n).map(|k| std::f64::consts::TAU * k as f64 / n as f64).collect()).unwrap();
        let responses: Vec<Vec<_>> = m.layers.iter().map(|dt| {
            let all: Vec<usize> = (0..dt.order()).collect();
            frequency_response(dt, &all, &grid)
                .into_iter()
                .map(|g| g + dt.d.map(|v| C64::new(v, 0.0)))
                .collect()
        }).collect();
        let scale = ys.iter().flatten().fold(0.0f64, |a, z| a.max(z.norm()));
        for k in 0..n {
            let mut v = nalgebra::DVector::from_fn(h, |c, _| us[c][k]);
            for r in &responses {
                v = &r[k] * v;
            }
            for c in 0..h {
                prop_assert!((v[c] - ys[c][k]).norm() <= 1e-8 * scale);
            }
        }
    }

    #[test]
    fn rescaled_model_stays_stable(seed in any::<u64>(), r in 0.01..100.0f64) {
        let ct = ssm_prune::synth::random_ct_model(&mut rng(seed), &SynthConfig::new(2, 6, 2)).unwrap();
        let scaled = rescale_model(&ct, r).unwrap();
        let dt = ssm_prune::discretize::discretize_model(&scaled).unwrap();
        prop_assert!(dt.layers.iter().all(|l| l.max_pole_modulus() < 1.0));
    }
}
