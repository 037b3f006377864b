use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{forward, loss_and_gradients, Gradients, NetworkSpec, Parameters};
use crate::data::{Sample, SyntheticDataset};
use crate::error::{shape_err, Error, Result};
use crate::rng::{SeededRng, SHUFFLE_STREAM};
use crate::tensor::{self, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub stop_at_zero_train_error: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            momentum: 0.9,
            batch_size: 64,
            max_epochs: 200,
            seed: 0,
            stop_at_zero_train_error: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "batch size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_err: f64,
    pub test_err: f64,
}

/// Per-epoch scores; epoch 0 is the untrained network.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub records: Vec<EpochRecord>,
}

impl TrainMetrics {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,train_err,test_err";

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn reached_zero_train_error(&self) -> bool {
        self.records.iter().any(|r| r.train_err == 0.0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.epoch, r.train_loss, r.train_err, r.test_err
            );
        }
        out
    }
}

/// Classical momentum: `v ← μ·v − η·g`, then `p ← p + v`.
pub fn sgd_step(
    params: &mut Parameters,
    grads: &Gradients,
    velocity: &mut Parameters,
    config: &TrainConfig,
) -> Result<()> {
    let same = |a: &Parameters, b: &Parameters| {
        a.tensors.len() == b.tensors.len()
            && a.tensors
                .iter()
                .zip(&b.tensors)
                .all(|(x, y)| x.shape() == y.shape())
    };
    if !same(params, grads) || !same(params, velocity) {
        return shape_err("sgd_step: parameters, gradients and velocity differ in shape");
    }
    for ((p, g), v) in params
        .tensors
        .iter_mut()
        .zip(&grads.tensors)
        .zip(velocity.tensors.iter_mut())
    {
        for ((p, g), v) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *v = config.momentum * *v - config.learning_rate * g;
            *p += *v;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitScore {
    pub loss: f64,
    pub error: f64,
}

fn images(samples: &[Sample]) -> Vec<Tensor> {
    samples.par_iter().map(Sample::image).collect()
}

fn score(
    spec: &NetworkSpec,
    params: &Parameters,
    images: &[Tensor],
    labels: &[usize],
) -> Result<SplitScore> {
    if images.is_empty() {
        return Err(Error::Empty("cannot evaluate an empty split".into()));
    }
    let per_example = images
        .par_iter()
        .zip(labels)
        .map(|(image, &label)| {
            let capture = forward(spec, params, image)?;
            let probs = capture.probabilities();
            let loss = tensor::cross_entropy(probs, label)?;
            Ok((loss, tensor::argmax(probs) != label))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_example.len() as f64;
    let (loss, wrong) = per_example
        .iter()
        .fold((0.0, 0usize), |(l, w), &(loss, miss)| {
            (l + loss, w + usize::from(miss))
        });
    Ok(SplitScore {
        loss: loss / n,
        error: wrong as f64 / n,
    })
}

fn labels(samples: &[Sample]) -> Vec<usize> {
    samples.iter().map(|s| s.label as usize).collect()
}

/// Mean cross-entropy and argmax error rate (ties to the lowest class).
pub fn evaluate_with_loss(
    spec: &NetworkSpec,
    params: &Parameters,
    samples: &[Sample],
) -> Result<SplitScore> {
    score(spec, params, &images(samples), &labels(samples))
}

pub fn evaluate(spec: &NetworkSpec, params: &Parameters, samples: &[Sample]) -> Result<f64> {
    Ok(evaluate_with_loss(spec, params, samples)?.error)
}

pub fn train(
    spec: &NetworkSpec,
    params: Parameters,
    dataset: &SyntheticDataset,
    config: &TrainConfig,
) -> Result<(Parameters, TrainMetrics)> {
    train_with_observer(spec, params, &dataset.train, &dataset.test, config, |_| {})
}

/// Mini-batch momentum SGD on `train`, scoring both splits after every epoch.
///
/// `observe` sees each epoch record as soon as it is computed.
pub fn train_with_observer(
    spec: &NetworkSpec,
    mut params: Parameters,
    train: &[Sample],
    test: &[Sample],
    config: &TrainConfig,
    mut observe: impl FnMut(&EpochRecord),
) -> Result<(Parameters, TrainMetrics)> {
    config.validate()?;
    params.check_against(spec)?;
    if train.is_empty() {
        return Err(Error::Empty("training split is empty".into()));
    }
    if test.is_empty() {
        return Err(Error::Empty("testing split is empty".into()));
    }

    let train_images = images(train);
    let train_labels = labels(train);
    let test_images = images(test);
    let test_labels = labels(test);

    let mut metrics = TrainMetrics::default();
    let mut record_epoch =
        |epoch: usize, params: &Parameters, metrics: &mut TrainMetrics| -> Result<EpochRecord> {
            let tr = score(spec, params, &train_images, &train_labels)?;
            if !tr.loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            let te = score(spec, params, &test_images, &test_labels)?;
            let record = EpochRecord {
                epoch,
                train_loss: tr.loss,
                train_err: tr.error,
                test_err: te.error,
            };
            observe(&record);
            metrics.records.push(record);
            Ok(record)
        };

    let initial = record_epoch(0, &params, &mut metrics)?;
    if config.stop_at_zero_train_error && initial.train_err == 0.0 {
        return Ok((params, metrics));
    }

    let mut velocity = Parameters::zeros_like(spec);
    let mut rng = SeededRng::stream(config.seed, SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.max_epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(config.batch_size) {
            let per_example = batch
                .par_iter()
                .map(|&i| loss_and_gradients(spec, &params, &train_images[i], train_labels[i]))
                .collect::<Result<Vec<_>>>()?;
            // Summed in example order so results do not depend on thread count.
            let mut iter = per_example.into_iter();
            let (_, mut grads) = iter.next().expect("chunks are non-empty");
            for (_, g) in iter {
                grads.add_assign(&g)?;
            }
            grads.scale(1.0 / batch.len() as f64);
            sgd_step(&mut params, &grads, &mut velocity, config)?;
        }
        let record = record_epoch(epoch, &params, &mut metrics)?;
        if config.stop_at_zero_train_error && record.train_err == 0.0 {
            break;
        }
    }
    Ok((params, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_custom, ArchShape};

    #[test]
    fn sgd_fixed_points_and_hand_step() {
        let (spec, params) = build_custom(ArchShape::reduced(), 0).unwrap();
        let zero = Parameters::zeros_like(&spec);
        let cfg = TrainConfig::default();

        let mut p = params.clone();
        let mut v = zero.clone();
        sgd_step(&mut p, &zero, &mut v, &cfg).unwrap();
        assert_eq!(p, params);

        let mut ones = zero.clone();
        ones.tensors.iter_mut().for_each(|t| t.data_mut().fill(1.0));
        let frozen = TrainConfig {
            learning_rate: 0.0,
            ..cfg.clone()
        };
        let mut p = params.clone();
        let mut v = zero.clone();
        sgd_step(&mut p, &ones, &mut v, &frozen).unwrap();
        assert_eq!(p, params);

        let mut p = Parameters {
            tensors: vec![Tensor::vector(vec![1.0])],
        };
        let g = Parameters {
            tensors: vec![Tensor::vector(vec![0.5])],
        };
        let mut v = Parameters {
            tensors: vec![Tensor::vector(vec![0.0])],
        };
        let plain = TrainConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            ..cfg
        };
        sgd_step(&mut p, &g, &mut v, &plain).unwrap();
        assert!((p.tensors[0].data()[0] - 0.95).abs() < 1e-15);

        let mut wrong = Parameters {
            tensors: vec![Tensor::vector(vec![0.0, 0.0])],
        };
        assert!(sgd_step(&mut p, &g, &mut wrong, &plain).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            momentum: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            batch_size: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn csv_layout() {
        let m = TrainMetrics {
            records: vec![EpochRecord {
                epoch: 0,
                train_loss: 2.5,
                train_err: 0.9,
                test_err: 0.875,
            }],
        };
        assert_eq!(
            m.to_csv(),
            "epoch,train_loss,train_err,test_err\n0,2.5,0.9,0.875\n"
        );
    }
}
