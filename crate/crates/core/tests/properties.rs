//! Cross-module invariants checked over generated inputs.

use lanecast_core::data::{build_samples, fit_normalization, CorridorShape, LoopRecord};
use lanecast_core::eval::{accuracy, predict_multistep};
use lanecast_core::layers::{concat, concat_backward, flatten, relu, relu_backward, unflatten, DropoutMask};
use lanecast_core::loss::{composite_loss, LossConfig};
use lanecast_core::model::{read_bundle, write_bundle, ArchitectureConfig, LaneCnn, Persistence};
use lanecast_core::tensor::LaneTensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn vec_pair(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    len.prop_flat_map(|n| (prop::collection::vec(-5.0..5.0f64, n), prop::collection::vec(-5.0..5.0f64, n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loss_is_speed_plus_weighted_volume((pu, tu) in vec_pair(1..=40), (pq, tq) in vec_pair(1..=40), lambda in 0.0..1.0f64) {
        let l = composite_loss(&pu, &pq, &tu, &tq, &LossConfig::new(lambda)).unwrap();
        prop_assert!(l.total >= 0.0);
        prop_assert!((l.total - (l.speed_term + lambda * l.volume_term)).abs() <= 1e-12 * l.total.max(1.0));
        let at_zero = composite_loss(&pu, &pq, &tu, &tq, &LossConfig::new(0.0)).unwrap();
        prop_assert!(at_zero.grad_q.iter().all(|&g| g == 0.0));
        prop_assert_eq!(at_zero.grad_u, l.grad_u);
    }

    #[test]
    fn accuracy_is_perfect_on_exact_predictions(target in prop::collection::vec(1.0..90.0f64, 1..50)) {
        prop_assert_eq!(accuracy(&target, &target).unwrap(), 100.0);
    }

    #[test]
    fn accuracy_ignores_units(target in prop::collection::vec(1.0..90.0f64, 1..50), noise in -0.3..0.3f64, scale in 0.5..4.0f64) {
        let pred: Vec<f64> = target.iter().map(|t| t * (1.0 + noise)).collect();
        let a = accuracy(&pred, &target).unwrap();
        let scaled_t: Vec<f64> = target.iter().map(|t| t * scale).collect();
        let scaled_p: Vec<f64> = pred.iter().map(|p| p * scale).collect();
        let b = accuracy(&scaled_p, &scaled_t).unwrap();
        prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        prop_assert!(a <= 100.0);
    }

    #[test]
    fn flatten_and_concat_invert((rows, cols, ch) in (1..6usize, 1..6usize, 1..5usize), seed in any::<u64>(), split in 0..20usize) {
        let mut v = seed;
        let x = LaneTensor::from_fn(rows, cols, ch, |_, _, _| { v = v.wrapping_mul(6364136223846793005).wrapping_add(1); (v >> 11) as f64 });
        let flat = flatten(&x);
        prop_assert_eq!(&unflatten(flat.clone(), rows, cols, ch).unwrap(), &x);
        let split = split.min(flat.len());
        let joined = concat(&flat[..split], &flat[split..]);
        let (a, b) = concat_backward(&joined, split).unwrap();
        prop_assert_eq!(concat(&a, &b), flat);
    }

    #[test]
    fn relu_gradient_passes_only_positive_inputs(x in prop::collection::vec(-3.0..3.0f64, 1..40)) {
        let ones = vec![1.0; x.len()];
        let g = relu_backward(&x, &ones).unwrap();
        for ((&xi, &yi), &gi) in x.iter().zip(&relu(&x)).zip(&g) {
            prop_assert_eq!(yi, xi.max(0.0));
            prop_assert_eq!(gi, if xi > 0.0 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn inverted_dropout_keeps_or_scales(len in 1..200usize, ratio in 0.0..0.9f64, seed in any::<u64>()) {
        let mask = DropoutMask::sample(len, ratio, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let scale = 1.0 / (1.0 - ratio);
        prop_assert!(mask.factors().iter().all(|&f| f == 0.0 || f == scale));
        let ones = vec![1.0; len];
        prop_assert_eq!(mask.apply(&ones).unwrap(), mask.backward(&ones).unwrap());
    }

    #[test]
    fn persistence_rollout_repeats_last_column(k in 2..5usize, n in 2..5usize, c in 1..4usize, steps in 1..6usize) {
        let shape = CorridorShape::new(k, n, c).unwrap();
        let mut records = Vec::new();
        for t in 0..n + 1 {
            for i in 1..=k {
                for l in 1..=c {
                    records.push(LoopRecord {
                        timestamp: t as i64 * 300,
                        detector_index: i,
                        lane: l,
                        speed: (10 * t + 3 * i + l) as f64,
                        volume: (t + i * l) as f64,
                    });
                }
            }
        }
        let norm = fit_normalization(&records, i64::MIN..i64::MAX).unwrap();
        let (samples, _) = build_samples(&records, shape, &norm).unwrap();
        prop_assert_eq!(samples.len(), 1);
        let last = samples[0].x_u.column(n - 1);
        let rollout = predict_multistep(&Persistence { shape }, &samples[0], steps).unwrap();
        prop_assert_eq!(rollout.len(), steps);
        prop_assert!(rollout.iter().all(|p| p.pred_u == last));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn bundles_round_trip_bit_exactly(seed in any::<u64>(), filters in 1..5usize, hidden in 1..12usize) {
        let cfg = ArchitectureConfig {
            shape: CorridorShape::new(4, 5, 2).unwrap(),
            filters_per_layer: [filters, filters + 1, filters],
            fc_hidden: hidden,
            seed,
            ..Default::default()
        };
        let net = LaneCnn::new(cfg).unwrap();
        let norm = lanecast_core::data::NormalizationParams::new(0.1, 70.3, 0.0, 1e3 / 3.0).unwrap();
        let mut buf = Vec::new();
        write_bundle(&mut buf, &net, &norm).unwrap();
        let back = read_bundle(&buf).unwrap();
        prop_assert_eq!(back.network.params(), net.params());
        prop_assert_eq!(back.norm, norm);
    }
}
