//! Statistical and format properties of the synthetic digits.

use gibbs_lens::data::{
    encoded_len, generate_dataset, generate_image, load_dataset, save_dataset, write_dataset,
    DatasetSpec, LabelMode, PIXELS,
};
use gibbs_lens::probe::{gaussian_reference, kl_div, make_histogram, Binning};
use gibbs_lens::rng::SeededRng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn to_f64(p: &[f32]) -> Vec<f64> {
    p.iter().map(|&v| v as f64).collect()
}

#[test]
fn per_image_moments_within_sampling_error() {
    // Standard errors of the mean and variance of 1024 i.i.d. N(0, 1024) draws.
    let se_mean = 32.0 / (PIXELS as f64).sqrt();
    let se_var = 1024.0 * (2.0 / (PIXELS as f64 - 1.0)).sqrt();
    assert!((se_var - 45.3).abs() < 0.05);
    let mut inside = 0;
    let mut rng = SeededRng::new(5);
    for trial in 0..1000 {
        let img = generate_image(trial % 10, &mut rng, 0.0, 1024.0).unwrap();
        let x = to_f64(&img.pixels);
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        if mean.abs() <= 3.0 * se_mean && (var - 1024.0).abs() <= 3.0 * se_var {
            inside += 1;
        }
        let mut a = img.pixels.clone();
        let mut b = img.draws.clone();
        a.sort_by(f32::total_cmp);
        b.sort_by(f32::total_cmp);
        assert_eq!(a, b, "trial {trial} breaks the permutation property");
    }
    assert!(
        inside >= 990,
        "only {inside} of 1000 images within 3 standard errors"
    );
}

#[test]
fn pooled_and_per_image_histograms_match_reference() {
    let ds = generate_dataset(&DatasetSpec::default().with_per_class(200, 200)).unwrap();
    let binning = Binning::default();
    let reference = gaussian_reference(&binning, 0.0, 1024.0).unwrap();
    let all: Vec<f64> = ds
        .train
        .iter()
        .chain(&ds.test)
        .flat_map(|s| to_f64(&s.pixels))
        .collect();
    let pooled = kl_div(&reference, &make_histogram(&all, &binning).unwrap()).unwrap();
    assert!(pooled < 0.01, "pooled KL {pooled}");

    let kls: Vec<f64> = ds
        .train
        .iter()
        .chain(&ds.test)
        .map(|s| {
            kl_div(
                &reference,
                &make_histogram(&to_f64(&s.pixels), &binning).unwrap(),
            )
            .unwrap()
        })
        .collect();
    let ok = kls.iter().filter(|&&k| k < 0.7).count();
    assert!(
        ok * 100 >= 95 * kls.len(),
        "{ok} of {} images under 0.7 nats",
        kls.len()
    );
}

#[test]
fn default_spec_sizes_and_balance() {
    let spec = DatasetSpec::default();
    assert_eq!(spec.image_side * spec.image_side, 1024);
    let ds = generate_dataset(&spec).unwrap();
    assert_eq!((ds.train.len(), ds.test.len()), (10_000, 10_000));
    for split in [&ds.train, &ds.test] {
        let mut counts = [0usize; 10];
        split.iter().for_each(|s| counts[s.label as usize] += 1);
        assert_eq!(counts, [1000; 10]);
    }
}

#[test]
fn same_seed_same_bytes() {
    let spec = DatasetSpec::default().with_per_class(5, 5);
    let encode = |s: &DatasetSpec| {
        let mut buf = Vec::new();
        write_dataset(&generate_dataset(s).unwrap(), &mut buf).unwrap();
        buf
    };
    let a = encode(&spec);
    assert_eq!(a, encode(&spec));
    assert_eq!(a.len() as u64, 24 + 100 * (1 + 4 * 1024));
    assert_eq!(a.len() as u64, encoded_len(100));
    assert_ne!(a, encode(&DatasetSpec { seed: 1, ..spec }));
}

#[test]
fn file_round_trip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.gsyn");
    let ds = generate_dataset(&DatasetSpec {
        label_mode: LabelMode::RandomLabels,
        seed: 3,
        ..DatasetSpec::default().with_per_class(2, 2)
    })
    .unwrap();
    save_dataset(&ds, &path).unwrap();
    assert_eq!(load_dataset(&path).unwrap(), ds);

    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] = b'X';
    std::fs::write(&path, &bytes).unwrap();
    let err = load_dataset(&path).unwrap_err().to_string();
    assert!(err.contains("magic"), "{err}");
}

#[test]
fn random_labels_are_independent_of_class() {
    let spec = DatasetSpec {
        label_mode: LabelMode::RandomLabels,
        seed: 7,
        ..DatasetSpec::default()
    };
    let ds = generate_dataset(&spec).unwrap();
    let mut table = [[0f64; 10]; 10];
    for s in &ds.train {
        table[s.class as usize][s.label as usize] += 1.0;
    }
    let n: f64 = table.iter().flatten().sum();
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..10).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mut stat = 0.0;
    for i in 0..10 {
        for j in 0..10 {
            let e = rows[i] * cols[j] / n;
            stat += (table[i][j] - e).powi(2) / e;
        }
    }
    let p = 1.0 - ChiSquared::new(81.0).unwrap().cdf(stat);
    assert!(p > 0.001, "chi-squared {stat}, p {p}");

    // Images are unchanged by relabeling.
    let plain = generate_dataset(&DatasetSpec {
        label_mode: LabelMode::TrueLabels,
        ..spec
    })
    .unwrap();
    assert!(ds
        .train
        .iter()
        .zip(&plain.train)
        .all(|(a, b)| a.pixels == b.pixels));
}
