//! Synthetic Gaussian-pixel digit dataset.
//!
//! Every image's pixel multiset is an exact i.i.d. sample of
//! `N(pixel_mean, pixel_variance)`; the class lives only in *where* the values
//! go. For each image we draw `side²` Gaussian values, sort them descending,
//! and hand the largest `|mask|` of them (in shuffled order) to the stroke
//! pixels of a jittered digit glyph, the rest (also shuffled) to the
//! background. This construction is a reconstruction chosen to hit the known
//! pixel marginal exactly; it is not taken from any published generator.

mod format;
pub mod glyphs;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use format::{
    encoded_len, load_dataset, read_dataset, save_dataset, write_dataset, HEADER_LEN, MAGIC,
    VERSION,
};
pub use glyphs::{render_mask, Mask};

use crate::error::{Error, Result};
use crate::rng::{SeededRng, LABEL_STREAM};
use crate::tensor::Tensor;

pub const IMAGE_SIDE: usize = glyphs::SIDE;
pub const PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    TrueLabels,
    RandomLabels,
}

impl LabelMode {
    pub fn code(self) -> u8 {
        match self {
            LabelMode::TrueLabels => 0,
            LabelMode::RandomLabels => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(LabelMode::TrueLabels),
            1 => Some(LabelMode::RandomLabels),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub image_side: usize,
    pub pixel_mean: f64,
    pub pixel_variance: f64,
    pub seed: u64,
    pub label_mode: LabelMode,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            train_per_class: 1000,
            test_per_class: 1000,
            image_side: IMAGE_SIDE,
            pixel_mean: 0.0,
            pixel_variance: 1024.0,
            seed: 0,
            label_mode: LabelMode::TrueLabels,
        }
    }
}

impl DatasetSpec {
    pub fn with_per_class(mut self, train: usize, test: usize) -> Self {
        self.train_per_class = train;
        self.test_per_class = test;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.classes == 0 || self.classes > glyphs::CLASSES {
            return bad(format!(
                "classes must be in 1..={}, got {}",
                glyphs::CLASSES,
                self.classes
            ));
        }
        if self.train_per_class == 0 || self.test_per_class == 0 {
            return bad("per-class counts must be at least 1".into());
        }
        if self.image_side != IMAGE_SIDE {
            return bad(format!(
                "image side is fixed at {IMAGE_SIDE}, got {}",
                self.image_side
            ));
        }
        if !(self.pixel_variance > 0.0 && self.pixel_variance.is_finite())
            || !self.pixel_mean.is_finite()
        {
            return bad(format!(
                "pixel distribution must be finite with positive variance, got N({}, {})",
                self.pixel_mean, self.pixel_variance
            ));
        }
        Ok(())
    }

    pub fn train_len(&self) -> usize {
        self.classes * self.train_per_class
    }

    pub fn test_len(&self) -> usize {
        self.classes * self.test_per_class
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Training target; equals `class` unless labels were randomized.
    pub label: u8,
    /// Digit drawn into the image.
    pub class: u8,
    /// Row-major `side × side` pixels.
    pub pixels: Vec<f32>,
}

impl Sample {
    pub fn image(&self) -> Tensor {
        let data = self.pixels.iter().map(|&v| f64::from(v)).collect();
        Tensor::new(&[IMAGE_SIDE, IMAGE_SIDE, 1], data).expect("stored images are side × side")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub spec: DatasetSpec,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedImage {
    pub pixels: Vec<f32>,
    /// The Gaussian draws in the order they were sampled.
    pub draws: Vec<f32>,
    pub mask: Mask,
}

impl GeneratedImage {
    pub fn tensor(&self) -> Tensor {
        Sample {
            label: 0,
            class: 0,
            pixels: self.pixels.clone(),
        }
        .image()
    }
}

/// Draw one image of `class` from `rng`.
pub fn generate_image(
    class: usize,
    rng: &mut SeededRng,
    mean: f64,
    variance: f64,
) -> Result<GeneratedImage> {
    let mask = render_mask(class, rng.next_u64())?;
    let draws: Vec<f32> = (0..PIXELS)
        .map(|_| rng.normal(mean, variance) as f32)
        .collect();

    let mut sorted = draws.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let on = mask.on_count();
    let (mut bright, mut dark) = (sorted[..on].to_vec(), sorted[on..].to_vec());
    rng.shuffle(&mut bright);
    rng.shuffle(&mut dark);

    let (mut bright, mut dark) = (bright.into_iter(), dark.into_iter());
    let pixels = mask
        .0
        .iter()
        .map(|&stroke| if stroke { bright.next() } else { dark.next() })
        .collect::<Option<Vec<f32>>>()
        .expect("mask partitions exactly side² pixels");
    Ok(GeneratedImage {
        pixels,
        draws,
        mask,
    })
}

/// Per-record stream: train record `i` is stream `i`, test record `j` is `train_len + j`.
fn record_stream(spec: &DatasetSpec, index: usize) -> SeededRng {
    SeededRng::stream(spec.seed, index as u64)
}

/// Build the full dataset; a pure function of `spec`.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let n_train = spec.train_len();
    let total = n_train + spec.test_len();

    let mut samples = (0..total)
        .into_par_iter()
        .map(|index| {
            let split_index = if index < n_train {
                index
            } else {
                index - n_train
            };
            let class = split_index % spec.classes;
            let mut rng = record_stream(spec, index);
            let image = generate_image(class, &mut rng, spec.pixel_mean, spec.pixel_variance)?;
            Ok(Sample {
                label: class as u8,
                class: class as u8,
                pixels: image.pixels,
            })
        })
        .collect::<Result<Vec<Sample>>>()?;

    if spec.label_mode == LabelMode::RandomLabels {
        let mut rng = SeededRng::stream(spec.seed, LABEL_STREAM);
        for sample in &mut samples {
            sample.label = rng.below(spec.classes) as u8;
        }
    }

    let test = samples.split_off(n_train);
    Ok(SyntheticDataset {
        spec: spec.clone(),
        train: samples,
        test,
    })
}

/// Regenerate a single record together with its retained draws.
pub fn regenerate_record(spec: &DatasetSpec, index: usize) -> Result<GeneratedImage> {
    spec.validate()?;
    let n_train = spec.train_len();
    if index >= n_train + spec.test_len() {
        return Err(Error::InvalidArgument(format!(
            "record {index} outside dataset"
        )));
    }
    let split_index = if index < n_train {
        index
    } else {
        index - n_train
    };
    let mut rng = record_stream(spec, index);
    generate_image(
        split_index % spec.classes,
        &mut rng,
        spec.pixel_mean,
        spec.pixel_variance,
    )
}
