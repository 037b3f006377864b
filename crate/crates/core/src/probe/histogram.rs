//! Fixed-binning histograms, the discretized Gaussian reference, and KL divergence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub lo: f64,
    pub hi: f64,
    pub bin_count: usize,
    pub smoothing_epsilon: f64,
}

impl Default for Binning {
    /// 64 bins over ±4σ of N(0, 1024).
    fn default() -> Self {
        Self {
            lo: -128.0,
            hi: 128.0,
            bin_count: 64,
            smoothing_epsilon: 1e-6,
        }
    }
}

impl Binning {
    pub fn new(lo: f64, hi: f64, bin_count: usize, smoothing_epsilon: f64) -> Result<Self> {
        let b = Self {
            lo,
            hi,
            bin_count,
            smoothing_epsilon,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::InvalidArgument(format!(
                "binning needs finite lo < hi, got [{}, {})",
                self.lo, self.hi
            )));
        }
        if self.bin_count < 2 {
            return Err(Error::InvalidArgument(format!(
                "binning needs at least 2 bins, got {}",
                self.bin_count
            )));
        }
        if !(self.smoothing_epsilon > 0.0 && self.smoothing_epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "smoothing epsilon must be positive, got {}",
                self.smoothing_epsilon
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bin_count as f64
    }

    pub fn edge(&self, i: usize) -> f64 {
        if i == self.bin_count {
            self.hi
        } else {
            self.lo + i as f64 * self.width()
        }
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.bin_count).map(|i| self.edge(i)).collect()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.bin_count)
            .map(|i| 0.5 * (self.edge(i) + self.edge(i + 1)))
            .collect()
    }

    /// Interior bin for `x`, or `None` outside `[lo, hi)`.
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        if !(x >= self.lo && x < self.hi) {
            return None;
        }
        let mut i = (((x - self.lo) / self.width()) as usize).min(self.bin_count - 1);
        // Guard the float division against landing one bin off an edge.
        if x < self.edge(i) {
            i -= 1;
        } else if i + 1 < self.bin_count && x >= self.edge(i + 1) {
            i += 1;
        }
        Some(i)
    }
}

/// Normalized bin masses of an energy (or pixel) sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "HistogramDoc", try_from = "HistogramDoc")]
pub struct EnergyHistogram {
    pub binning: Binning,
    pub mass: Vec<f64>,
    /// Zero for analytic references.
    pub sample_count: usize,
    pub underflow: f64,
    pub overflow: f64,
}

impl EnergyHistogram {
    pub fn total_mass(&self) -> f64 {
        self.underflow + self.mass.iter().sum::<f64>() + self.overflow
    }

    /// `[underflow, bins…, overflow]`.
    fn extended(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.mass.len() + 2);
        v.push(self.underflow);
        v.extend_from_slice(&self.mass);
        v.push(self.overflow);
        v
    }
}

#[derive(Serialize, Deserialize)]
struct HistogramDoc {
    lo: f64,
    hi: f64,
    bin_count: usize,
    smoothing_epsilon: f64,
    edges: Vec<f64>,
    mass: Vec<f64>,
    underflow: f64,
    overflow: f64,
    sample_count: usize,
}

impl From<EnergyHistogram> for HistogramDoc {
    fn from(h: EnergyHistogram) -> Self {
        Self {
            lo: h.binning.lo,
            hi: h.binning.hi,
            bin_count: h.binning.bin_count,
            smoothing_epsilon: h.binning.smoothing_epsilon,
            edges: h.binning.edges(),
            mass: h.mass,
            underflow: h.underflow,
            overflow: h.overflow,
            sample_count: h.sample_count,
        }
    }
}

impl TryFrom<HistogramDoc> for EnergyHistogram {
    type Error = Error;

    fn try_from(d: HistogramDoc) -> Result<Self> {
        let binning = Binning::new(d.lo, d.hi, d.bin_count, d.smoothing_epsilon)?;
        if d.mass.len() != d.bin_count {
            return Err(Error::Malformed(format!(
                "histogram has {} masses for {} bins",
                d.mass.len(),
                d.bin_count
            )));
        }
        Ok(Self {
            binning,
            mass: d.mass,
            sample_count: d.sample_count,
            underflow: d.underflow,
            overflow: d.overflow,
        })
    }
}

/// Half-open bins `[edge_i, edge_{i+1})`; out-of-range samples go to under/overflow.
pub fn make_histogram(samples: &[f64], binning: &Binning) -> Result<EnergyHistogram> {
    binning.validate()?;
    if samples.is_empty() {
        return Err(Error::Empty("cannot histogram an empty sample".into()));
    }
    let mut counts = vec![0usize; binning.bin_count];
    let (mut under, mut over) = (0usize, 0usize);
    for &x in samples {
        if x.is_nan() {
            return Err(Error::InvalidArgument(
                "cannot histogram NaN samples".into(),
            ));
        }
        match binning.bin_of(x) {
            Some(i) => counts[i] += 1,
            None if x < binning.lo => under += 1,
            None => over += 1,
        }
    }
    let n = samples.len() as f64;
    Ok(EnergyHistogram {
        binning: *binning,
        mass: counts.iter().map(|&c| c as f64 / n).collect(),
        sample_count: samples.len(),
        underflow: under as f64 / n,
        overflow: over as f64 / n,
    })
}

fn normal_cdf(x: f64, mean: f64, std: f64) -> f64 {
    0.5 * libm::erfc(-(x - mean) / (std * std::f64::consts::SQRT_2))
}

fn normal_sf(x: f64, mean: f64, std: f64) -> f64 {
    0.5 * libm::erfc((x - mean) / (std * std::f64::consts::SQRT_2))
}

/// Bin masses of `N(mean, variance)`; tails fold into under/overflow.
pub fn gaussian_reference(binning: &Binning, mean: f64, variance: f64) -> Result<EnergyHistogram> {
    binning.validate()?;
    if !(variance > 0.0 && variance.is_finite()) || !mean.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "reference needs finite mean and positive variance, got N({mean}, {variance})"
        )));
    }
    let std = variance.sqrt();
    // Mass between two edges, taken from whichever tail keeps the difference accurate.
    let between = |a: f64, b: f64| {
        if a >= mean {
            normal_sf(a, mean, std) - normal_sf(b, mean, std)
        } else {
            normal_cdf(b, mean, std) - normal_cdf(a, mean, std)
        }
    };
    let mass = (0..binning.bin_count)
        .map(|i| between(binning.edge(i), binning.edge(i + 1)))
        .collect();
    Ok(EnergyHistogram {
        binning: *binning,
        mass,
        sample_count: 0,
        underflow: normal_cdf(binning.lo, mean, std),
        overflow: normal_sf(binning.hi, mean, std),
    })
}

/// `KL(p ‖ q)` in nats over the bins plus the two tail bins, after adding the
/// smoothing epsilon to every bin of both and renormalizing.
pub fn kl_div(p: &EnergyHistogram, q: &EnergyHistogram) -> Result<f64> {
    if p.binning != q.binning {
        return Err(Error::InvalidArgument(format!(
            "histograms use different binnings: {:?} vs {:?}",
            p.binning, q.binning
        )));
    }
    let eps = p.binning.smoothing_epsilon;
    let smooth = |h: &EnergyHistogram| {
        let v: Vec<f64> = h.extended().into_iter().map(|m| m + eps).collect();
        let total: f64 = v.iter().sum();
        v.into_iter().map(|m| m / total).collect::<Vec<f64>>()
    };
    let (ps, qs) = (smooth(p), smooth(q));
    let kl: f64 = ps.iter().zip(&qs).map(|(&a, &b)| a * (a / b).ln()).sum();
    // Rounding can leave a -1e-17 residue for identical inputs.
    Ok(kl.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binning_validation() {
        assert!(Binning::new(1.0, 1.0, 4, 1e-6).is_err());
        assert!(Binning::new(0.0, 1.0, 1, 1e-6).is_err());
        assert!(Binning::new(0.0, 1.0, 4, 0.0).is_err());
        assert!(Binning::default().validate().is_ok());
    }

    #[test]
    fn half_open_bins() {
        let b = Binning::new(0.0, 4.0, 4, 1e-6).unwrap();
        assert_eq!(b.bin_of(0.0), Some(0));
        assert_eq!(b.bin_of(1.0), Some(1));
        assert_eq!(b.bin_of(3.999), Some(3));
        assert_eq!(b.bin_of(4.0), None);
        assert_eq!(b.bin_of(-0.001), None);
        let h = make_histogram(&[-1.0, 0.5, 4.0, 9.0], &b).unwrap();
        assert_eq!(h.underflow, 0.25);
        assert_eq!(h.overflow, 0.5);
        assert_eq!(h.mass, vec![0.25, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn point_mass_at_center() {
        let b = Binning::default();
        let h = make_histogram(&[0.5 * (b.lo + b.hi)], &b).unwrap();
        assert_eq!(h.mass.iter().filter(|&&m| m == 1.0).count(), 1);
        assert_eq!(
            h.mass.iter().filter(|&&m| m == 0.0).count(),
            b.bin_count - 1
        );
        assert!((h.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_and_nan_rejected() {
        assert!(make_histogram(&[], &Binning::default()).is_err());
        assert!(make_histogram(&[f64::NAN], &Binning::default()).is_err());
    }

    #[test]
    fn reference_mass_and_symmetry() {
        let b = Binning::default();
        let r = gaussian_reference(&b, 0.0, 1024.0).unwrap();
        assert!((r.total_mass() - 1.0).abs() < 1e-12);
        for i in 0..b.bin_count {
            assert!((r.mass[i] - r.mass[b.bin_count - 1 - i]).abs() < 1e-12);
        }
        assert!((r.underflow - r.overflow).abs() < 1e-15);
        assert!(gaussian_reference(&b, 0.0, 0.0).is_err());
    }

    #[test]
    fn kl_identity_and_mismatch() {
        let b = Binning::default();
        let r = gaussian_reference(&b, 0.0, 1024.0).unwrap();
        assert_eq!(kl_div(&r, &r).unwrap(), 0.0);
        let other = Binning { bin_count: 32, ..b };
        let r2 = gaussian_reference(&other, 0.0, 1024.0).unwrap();
        assert!(kl_div(&r, &r2).is_err());
    }

    #[test]
    fn json_carries_edges() {
        let b = Binning::new(0.0, 2.0, 2, 1e-6).unwrap();
        let h = make_histogram(&[0.5, 1.5], &b).unwrap();
        let json = serde_json::to_value(&h).unwrap();
        assert_eq!(json["edges"], serde_json::json!([0.0, 1.0, 2.0]));
        let back: EnergyHistogram = serde_json::from_value(json).unwrap();
        assert_eq!(back, h);
    }
}
