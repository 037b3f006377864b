use gibbs_lens::network::{build_network, forward, Arch, Capture, LayerRecord};
use gibbs_lens::probe::{
    energy_field, energy_field_with, gaussian_reference, kl_div, make_histogram, probe, Binning,
    ChannelAggregation, EnergySign, FieldGroup, FieldOptions,
};
use gibbs_lens::rng::SeededRng;
use gibbs_lens::tensor::{conv2d, Tensor};
use proptest::prelude::*;

#[test]
fn histogram_converges_to_reference() {
    let b = Binning::default();
    let r = gaussian_reference(&b, 0.0, 1024.0).unwrap();
    let mut rng = SeededRng::new(77);
    let draws: Vec<f64> = (0..1_000_000).map(|_| rng.normal(0.0, 1024.0)).collect();
    let kls: Vec<f64> = [10_000, 100_000, 1_000_000]
        .iter()
        .map(|&n| kl_div(&r, &make_histogram(&draws[..n], &b).unwrap()).unwrap())
        .collect();
    assert!(kls[0] > kls[1] && kls[1] > kls[2], "{kls:?}");
    assert!(kls[2] < 0.001, "{kls:?}");
}

#[test]
fn toy_field_by_hand() {
    // 3×3 single-channel input, two 2×2 filters.
    let x = Tensor::new(&[3, 3, 1], (1..=9).map(f64::from).collect()).unwrap();
    // Filter 0 sums its window, filter 1 takes the top-left pixel.
    let k = Tensor::new(&[2, 2, 1, 2], vec![1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
    let out = conv2d(&x, &k, &[0.0, 0.0]).unwrap();
    let capture = Capture {
        input: x,
        layers: vec![LayerRecord {
            name: "f1".into(),
            output: out,
            argmax: None,
        }],
    };
    let windows = [
        [1.0, 2.0, 4.0, 5.0],
        [2.0, 3.0, 5.0, 6.0],
        [4.0, 5.0, 7.0, 8.0],
        [5.0, 6.0, 8.0, 9.0],
    ];
    let sums: Vec<f64> = windows
        .iter()
        .map(|w| w.iter().sum::<f64>() + w[0])
        .collect();
    let means: Vec<f64> = sums.iter().map(|s| s / 2.0).collect();

    let mean = FieldOptions {
        aggregation: ChannelAggregation::Mean,
        ..Default::default()
    };
    let got = energy_field_with(&capture, FieldGroup::F1, mean).unwrap();
    for (g, e) in got.iter().zip(&means) {
        assert!((g - e).abs() < 1e-12);
    }
    let got = energy_field(&capture, FieldGroup::F1).unwrap();
    for (g, e) in got.iter().zip(&sums) {
        assert!((g - e).abs() < 1e-12);
    }
    let energy = FieldOptions {
        sign: EnergySign::Energy,
        ..Default::default()
    };
    let flipped = energy_field_with(&capture, FieldGroup::F1, energy).unwrap();
    assert!(flipped.iter().zip(&got).all(|(a, b)| *a == -*b));
}

#[test]
fn field_is_linear_in_preactivations() {
    let (spec, params) = build_network(Arch::Cnn1, 2);
    let mut rng = SeededRng::new(3);
    let image = Tensor::from_fn(&[32, 32, 1], |_| rng.normal(0.0, 1024.0));
    let mut capture = forward(&spec, &params, &image).unwrap();
    let base = energy_field(&capture, FieldGroup::F1).unwrap();
    // Powers of two scale without rounding.
    capture.layers[0].output.scale(4.0);
    let scaled = energy_field(&capture, FieldGroup::F1).unwrap();
    assert!(base.iter().zip(&scaled).all(|(a, b)| 4.0 * a == *b));
    assert_eq!(base.len(), 900);
    assert_eq!(energy_field(&capture, FieldGroup::F2).unwrap().len(), 121);
}

#[test]
fn report_recomposes_from_components() {
    let (spec, params) = build_network(Arch::Cnn1, 4);
    let mut rng = SeededRng::new(5);
    let image = Tensor::from_fn(&[32, 32, 1], |_| rng.normal(0.0, 1024.0));
    let b = Binning::default();
    let report = probe(&spec, &params, &image, &b).unwrap();

    let capture = forward(&spec, &params, &image).unwrap();
    let r = gaussian_reference(&b, 0.0, 1024.0).unwrap();
    let input = make_histogram(image.data(), &b).unwrap();
    let f1 = make_histogram(&energy_field(&capture, FieldGroup::F1).unwrap(), &b).unwrap();
    assert_eq!(report.kl_input, kl_div(&r, &input).unwrap());
    assert_eq!(report.kl_f1, kl_div(&r, &f1).unwrap());
    assert_eq!(report.probabilities, capture.probabilities());
    for h in [&report.reference, &report.input, &report.f1, &report.f2] {
        assert!((h.total_mass() - 1.0).abs() < 1e-9);
        assert!(h.mass.iter().all(|&m| m >= 0.0));
    }
}

#[test]
fn kl_nonnegative_on_random_pairs() {
    let b = Binning::new(-4.0, 4.0, 16, 1e-6).unwrap();
    let mut rng = SeededRng::new(9);
    for _ in 0..1000 {
        let n = rng.int_in(1, 50) as usize;
        let p: Vec<f64> = (0..n).map(|_| rng.normal(0.0, 4.0)).collect();
        let m = rng.int_in(1, 50) as usize;
        let shift = rng.uniform() - 0.5;
        let q: Vec<f64> = (0..m).map(|_| rng.normal(shift, 2.0)).collect();
        let kl = kl_div(
            &make_histogram(&p, &b).unwrap(),
            &make_histogram(&q, &b).unwrap(),
        )
        .unwrap();
        assert!(kl >= 0.0);
    }
}

proptest! {
    #[test]
    fn histograms_are_normalized(samples in prop::collection::vec(-300.0f64..300.0, 1..400)) {
        let h = make_histogram(&samples, &Binning::default()).unwrap();
        prop_assert!((h.total_mass() - 1.0).abs() < 1e-12);
        prop_assert_eq!(h.sample_count, samples.len());
        prop_assert_eq!(kl_div(&h, &h).unwrap(), 0.0);
    }

    #[test]
    fn reference_is_a_distribution(mean in -50.0f64..50.0, var in 1.0f64..5000.0) {
        let r = gaussian_reference(&Binning::default(), mean, var).unwrap();
        prop_assert!((r.total_mass() - 1.0).abs() < 1e-12);
        prop_assert!(r.mass.iter().all(|&m| m >= 0.0));
    }

    #[test]
    fn argmax_ignores_logit_shift(shift in -50.0f64..50.0, seed in 0u64..1000) {
        let mut rng = SeededRng::new(seed);
        let logits: Vec<f64> = (0..10).map(|_| rng.uniform() * 10.0).collect();
        let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
        prop_assert_eq!(
            gibbs_lens::tensor::argmax(&gibbs_lens::tensor::softmax(&logits)),
            gibbs_lens::tensor::argmax(&gibbs_lens::tensor::softmax(&shifted))
        );
    }
}
