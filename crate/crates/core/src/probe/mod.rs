//! Reading trained layers back as Gibbs distributions.
//!
//! A convolutional layer's energy at one spatial location is the negated sum
//! of its filter responses there. The partition function is intractable, so
//! each layer's distribution is estimated by histogramming those per-location
//! values and normalizing empirically. The estimate for the first layer
//! (the prior) is compared with the known pixel distribution `N(0, 1024)`
//! by `KL(reference ‖ estimate)`.
//!
//! By default the field holds the raw channel sum of the pre-activation
//! responses. [`ChannelAggregation::Mean`] divides by the channel count; for
//! trained filters that are close to uncorrelated this shrinks the field
//! roughly `√C`-fold below the pixel scale rather than matching it.

mod histogram;
mod identities;

use serde::{Deserialize, Serialize};

pub use histogram::{gaussian_reference, kl_div, make_histogram, Binning, EnergyHistogram};
pub use identities::{poe_deviation, rbm_energy, RbmParams};

use crate::error::{Error, Result};
use crate::network::{forward, Capture, NetworkSpec, Parameters};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldGroup {
    /// Responses of `f1` applied directly to the image.
    F1,
    /// Responses of `f3` applied to the pooled, rectified `f1` maps.
    F2,
}

impl FieldGroup {
    pub fn layer_name(self) -> &'static str {
        match self {
            FieldGroup::F1 => "f1",
            FieldGroup::F2 => "f3",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelAggregation {
    #[default]
    Sum,
    Mean,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergySign {
    /// Histogram the filter responses (negated energy).
    #[default]
    Response,
    /// Histogram the energy itself.
    Energy,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldOptions {
    pub aggregation: ChannelAggregation,
    pub sign: EnergySign,
}

/// One sample per spatial location of the group's conv output, aggregated over channels.
pub fn energy_field_with(
    capture: &Capture,
    group: FieldGroup,
    options: FieldOptions,
) -> Result<Vec<f64>> {
    let record = capture.layer(group.layer_name()).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "capture has no layer `{}` for group {group:?}",
            group.layer_name()
        ))
    })?;
    let channels = match *record.output.shape() {
        [_, _, c] => c,
        ref s => {
            return Err(Error::Shape(format!(
                "layer `{}` output {s:?} is not a feature map",
                record.name
            )))
        }
    };
    let scale = match options.aggregation {
        ChannelAggregation::Mean => 1.0 / channels as f64,
        ChannelAggregation::Sum => 1.0,
    };
    let sign = match options.sign {
        EnergySign::Response => 1.0,
        EnergySign::Energy => -1.0,
    };
    Ok(record
        .output
        .data()
        .chunks_exact(channels)
        .map(|px| sign * scale * px.iter().sum::<f64>())
        .collect())
}

pub fn energy_field(capture: &Capture, group: FieldGroup) -> Result<Vec<f64>> {
    energy_field_with(capture, group, FieldOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub field: FieldOptions,
    pub prior_mean: f64,
    pub prior_variance: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            field: FieldOptions::default(),
            prior_mean: 0.0,
            prior_variance: 1024.0,
        }
    }
}

/// Everything needed to draw the input / F1 / F2 / output panels for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub arch: Option<String>,
    /// Dataset label of the probed image, when known.
    pub label: Option<usize>,
    pub predicted: usize,
    pub options: ProbeOptions,
    pub reference: EnergyHistogram,
    pub input: EnergyHistogram,
    pub f1: EnergyHistogram,
    pub f2: EnergyHistogram,
    pub probabilities: Vec<f64>,
    /// `KL(reference ‖ pixel histogram)`
    pub kl_input: f64,
    /// `KL(reference ‖ F1 histogram)`
    pub kl_f1: f64,
}

impl ProbeReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Build a report from an existing capture.
pub fn report_from_capture(
    capture: &Capture,
    binning: &Binning,
    options: &ProbeOptions,
) -> Result<ProbeReport> {
    let reference = gaussian_reference(binning, options.prior_mean, options.prior_variance)?;
    let input = make_histogram(capture.input.data(), binning)?;
    let f1 = make_histogram(
        &energy_field_with(capture, FieldGroup::F1, options.field)?,
        binning,
    )?;
    let f2 = make_histogram(
        &energy_field_with(capture, FieldGroup::F2, options.field)?,
        binning,
    )?;
    Ok(ProbeReport {
        arch: None,
        label: None,
        predicted: capture.predicted(),
        options: *options,
        kl_input: kl_div(&reference, &input)?,
        kl_f1: kl_div(&reference, &f1)?,
        reference,
        input,
        f1,
        f2,
        probabilities: capture.probabilities().to_vec(),
    })
}

pub fn probe_with(
    spec: &NetworkSpec,
    params: &Parameters,
    image: &Tensor,
    binning: &Binning,
    options: &ProbeOptions,
) -> Result<ProbeReport> {
    let capture = forward(spec, params, image)?;
    let mut report = report_from_capture(&capture, binning, options)?;
    report.arch = spec.arch.map(|a| a.name().to_string());
    Ok(report)
}

pub fn probe(
    spec: &NetworkSpec,
    params: &Parameters,
    image: &Tensor,
    binning: &Binning,
) -> Result<ProbeReport> {
    probe_with(spec, params, image, binning, &ProbeOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_network, Arch, LayerRecord};

    fn toy_capture(output: Tensor) -> Capture {
        Capture {
            input: Tensor::zeros(&[3, 3, 1]),
            layers: vec![LayerRecord {
                name: "f1".into(),
                output,
                argmax: None,
            }],
        }
    }

    #[test]
    fn zero_capture_zero_field() {
        let c = toy_capture(Tensor::zeros(&[4, 4, 3]));
        assert!(energy_field(&c, FieldGroup::F1)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        assert!(energy_field(&c, FieldGroup::F2).is_err());
    }

    #[test]
    fn options_scale_and_flip() {
        let out = Tensor::new(&[1, 2, 2], vec![1.0, 3.0, -2.0, 6.0]).unwrap();
        let c = toy_capture(out);
        assert_eq!(energy_field(&c, FieldGroup::F1).unwrap(), vec![4.0, 4.0]);
        let mean = FieldOptions {
            aggregation: ChannelAggregation::Mean,
            sign: EnergySign::Energy,
        };
        assert_eq!(
            energy_field_with(&c, FieldGroup::F1, mean).unwrap(),
            vec![-2.0, -2.0]
        );
    }

    #[test]
    fn reference_field_sizes() {
        let (spec, params) = build_network(Arch::Cnn1, 0);
        let capture = forward(&spec, &params, &Tensor::filled(&[32, 32, 1], 1.0)).unwrap();
        assert_eq!(energy_field(&capture, FieldGroup::F1).unwrap().len(), 900);
        assert_eq!(energy_field(&capture, FieldGroup::F2).unwrap().len(), 121);
    }

    #[test]
    fn report_round_trips_through_json() {
        let (spec, params) = build_network(Arch::Cnn2, 1);
        let image = Tensor::from_fn(&[32, 32, 1], |i| ((i * 37) % 101) as f64 - 50.0);
        let report = probe(&spec, &params, &image, &Binning::default()).unwrap();
        for h in [&report.reference, &report.input, &report.f1, &report.f2] {
            assert!((h.total_mass() - 1.0).abs() < 1e-9);
        }
        assert_eq!(report.arch.as_deref(), Some("CNN2"));
        let back = ProbeReport::from_json(&report.to_json().unwrap()).unwrap();
        assert_eq!(back, report);
    }
}
