use proptest::prelude::*;

use holovox::data::{decode_png, encode_png};
use holovox::geometry::{mat_mul, rigid_transform, rotation_matrix, Pose};
use holovox::layers::{instance_norm, power_iteration, spectral_normalize};
use holovox::losses::{gan_loss_d, gan_loss_g};
use holovox::{Tape, Tensor};

fn volume(vals: &[f64]) -> Tensor<f64> {
    Tensor::new(vec![1, 4, 4, 4, 2], vals.to_vec()).unwrap()
}

fn transform(v: &Tensor<f64>, pose: Pose) -> Vec<f64> {
    let mut tape = Tape::new();
    let x = tape.constant(v.clone());
    let y = rigid_transform(&mut tape, x, &[pose]).unwrap();
    tape.value(y).data().to_vec()
}

fn naive_softplus(x: f64) -> f64 {
    (1.0 + x.exp()).ln()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn azimuth_rotations_compose(a in -720.0f64..720.0, b in -720.0f64..720.0) {
        let prod = mat_mul(&rotation_matrix(&Pose::new(a, 0.0, 1.0)), &rotation_matrix(&Pose::new(b, 0.0, 1.0)));
        let sum = rotation_matrix(&Pose::new(a + b, 0.0, 1.0));
        for (x, y) in prod.as_flattened().iter().zip(sum.as_flattened()) {
            prop_assert!((x - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn resampling_is_linear_in_values(
        v in proptest::collection::vec(-1.0f64..1.0, 128),
        w in proptest::collection::vec(-1.0f64..1.0, 128),
        alpha in -3.0f64..3.0,
        az in 0.0f64..360.0,
        el in -45.0f64..45.0,
        scale in 0.8f64..1.2,
    ) {
        let pose = Pose::new(az, el, scale);
        let (fv, fw) = (transform(&volume(&v), pose), transform(&volume(&w), pose));
        let scaled: Vec<f64> = v.iter().map(|x| alpha * x).collect();
        let summed: Vec<f64> = v.iter().zip(&w).map(|(x, y)| x + y).collect();
        for (x, y) in transform(&volume(&scaled), pose).iter().zip(&fv) {
            prop_assert!((x - alpha * y).abs() <= 1e-6);
        }
        for ((s, x), y) in transform(&volume(&summed), pose).iter().zip(&fv).zip(&fw) {
            prop_assert!((s - x - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn instance_norm_ignores_channel_affine(
        vals in proptest::collection::vec(-1.0f64..1.0, 2 * 16 * 3),
        a in 0.5f64..4.0,
        b in -5.0f64..5.0,
    ) {
        let x = Tensor::new(vec![2, 4, 4, 3], vals).unwrap();
        let shifted = Tensor::from_fn(x.shape().to_vec(), |i| a * x.data()[i] + b);
        let mut tape = Tape::new();
        let (p, q) = (tape.constant(x.clone()), tape.constant(shifted));
        let (np, nq) = (instance_norm(&mut tape, p).unwrap(), instance_norm(&mut tape, q).unwrap());
        let (np, nq) = (tape.value(np).data(), tape.value(nq).data());
        // The variance epsilon makes the invariance exact only after rescaling
        // by sqrt((var + eps) / (var + eps / a^2)).
        let eps = 1e-5;
        for n in 0..2 {
            for c in 0..3 {
                let idx: Vec<usize> = (0..16).map(|p| (n * 16 + p) * 3 + c).collect();
                let mean = idx.iter().map(|&i| x.data()[i]).sum::<f64>() / 16.0;
                let var = idx.iter().map(|&i| (x.data()[i] - mean).powi(2)).sum::<f64>() / 16.0;
                let k = ((var + eps) / (var + eps / (a * a))).sqrt();
                for &i in &idx {
                    prop_assert!((np[i] * k - nq[i]).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn spectral_normalize_is_scale_invariant(
        vals in proptest::collection::vec(-1.0f64..1.0, 6 * 4),
        c in 0.1f64..10.0,
    ) {
        let w = Tensor::new(vec![6, 4], vals).unwrap();
        let cw = Tensor::from_fn(w.shape().to_vec(), |i| c * w.data()[i]);
        let mut u = vec![0.5; 4];
        let mut cu = vec![0.5; 4];
        power_iteration(&w, &mut u, 200);
        power_iteration(&cw, &mut cu, 200);
        let mut tape = Tape::new();
        let (p, q) = (tape.constant(w), tape.constant(cw));
        let (np, nq) = (spectral_normalize(&mut tape, p, &u).unwrap(), spectral_normalize(&mut tape, q, &cu).unwrap());
        for (x, y) in tape.value(np).data().iter().zip(tape.value(nq).data()) {
            prop_assert!((x - y).abs() <= 1e-5);
        }
    }

    #[test]
    fn logistic_losses_match_naive_forms(real in -20.0f64..20.0, fake in -20.0f64..20.0) {
        let mut tape = Tape::new();
        let (r, f) = (tape.constant(Tensor::new(vec![1], vec![real]).unwrap()), tape.constant(Tensor::new(vec![1], vec![fake]).unwrap()));
        let d = gan_loss_d(&mut tape, r, f).unwrap();
        let g = gan_loss_g(&mut tape, f);
        let d = tape.value(d).data()[0];
        let g = tape.value(g).data()[0];
        prop_assert!((d - naive_softplus(-real) - naive_softplus(fake)).abs() <= 1e-6);
        prop_assert!((g - naive_softplus(-fake)).abs() <= 1e-6);
        prop_assert!(d >= 0.0 && g >= 0.0);
    }

    #[test]
    fn png_round_trip_within_one_level(vals in proptest::collection::vec(-1.0f32..=1.0, 5 * 3 * 3)) {
        let img = Tensor::new(vec![5, 3, 3], vals).unwrap();
        let back = decode_png(&encode_png(&img).unwrap()).unwrap();
        prop_assert_eq!(back.shape(), img.shape());
        for (x, y) in img.data().iter().zip(back.data()) {
            // Channels live in [-1, 1], so one 8-bit level spans 2/255.
            prop_assert!(((x - y) / 2.0).abs() <= 1.0 / 255.0 + 1e-6);
        }
    }
}

#[test]
fn logistic_losses_stay_finite_at_extremes() {
    let mut tape = Tape::<f64>::new();
    for x in [1e4, -1e4] {
        let r = tape.constant(Tensor::new(vec![1], vec![x]).unwrap());
        let f = tape.constant(Tensor::new(vec![1], vec![-x]).unwrap());
        let d = gan_loss_d(&mut tape, r, f).unwrap();
        let g = gan_loss_g(&mut tape, f);
        assert!(tape.value(d).data()[0].is_finite());
        assert!(tape.value(g).data()[0].is_finite());
    }
}
