//! `GSYN` dataset files.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "GSYN"
//!      4     2  version (u16, = 1)
//!      6     1  label mode (0 = true labels, 1 = random labels)
//!      7     1  class count
//!      8     4  image side (u32)
//!     12     4  record count N (u32), train split first, split evenly
//!     16     8  generation seed (u64)
//!     24     …  N × (label u8, side² × f32 row-major)
//! ```
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{DatasetSpec, LabelMode, Sample, SyntheticDataset, IMAGE_SIDE, PIXELS};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"GSYN";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 24;
const RECORD_LEN: usize = 1 + 4 * PIXELS;

/// Size in bytes of a file holding `records` images.
pub fn encoded_len(records: usize) -> u64 {
    (HEADER_LEN + records * RECORD_LEN) as u64
}

pub fn write_dataset<W: Write>(ds: &SyntheticDataset, mut out: W) -> Result<()> {
    let spec = &ds.spec;
    let defaults = DatasetSpec::default();
    if ds.train.len() != ds.test.len() {
        return Err(Error::InvalidArgument(format!(
            "GSYN stores evenly split datasets; got {} train and {} test records",
            ds.train.len(),
            ds.test.len()
        )));
    }
    if spec.pixel_mean != defaults.pixel_mean || spec.pixel_variance != defaults.pixel_variance {
        return Err(Error::InvalidArgument(
            "GSYN stores only the default N(0, 1024) pixel distribution".into(),
        ));
    }
    let records = u32::try_from(ds.len())
        .map_err(|_| Error::InvalidArgument("too many records for GSYN".into()))?;

    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(&MAGIC);
    header[4..6].copy_from_slice(&VERSION.to_le_bytes());
    header[6] = spec.label_mode.code();
    header[7] = spec.classes as u8;
    header[8..12].copy_from_slice(&(IMAGE_SIDE as u32).to_le_bytes());
    header[12..16].copy_from_slice(&records.to_le_bytes());
    header[16..24].copy_from_slice(&spec.seed.to_le_bytes());
    out.write_all(&header)?;

    let mut record = Vec::with_capacity(RECORD_LEN);
    for sample in ds.train.iter().chain(&ds.test) {
        record.clear();
        record.push(sample.label);
        for v in &sample.pixels {
            record.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&record)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_dataset(ds: &SyntheticDataset, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    write_dataset(ds, BufWriter::new(file))
}

pub fn read_dataset<R: Read>(mut input: R) -> Result<SyntheticDataset> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<SyntheticDataset> {
    let bytes = std::fs::read(path)?;
    decode(&bytes)
}

fn decode(bytes: &[u8]) -> Result<SyntheticDataset> {
    if bytes.len() < 4 || bytes[0..4] != MAGIC {
        let mut found = [0u8; 4];
        let n = bytes.len().min(4);
        found[..n].copy_from_slice(&bytes[..n]);
        return Err(Error::BadMagic {
            expected: MAGIC,
            found,
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            supported: VERSION,
        });
    }
    let label_mode = LabelMode::from_code(bytes[6])
        .ok_or_else(|| Error::Malformed(format!("unknown label mode {}", bytes[6])))?;
    let classes = bytes[7] as usize;
    let side = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let records = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let seed = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));

    if side != IMAGE_SIDE {
        return Err(Error::Malformed(format!(
            "image side {side}, expected {IMAGE_SIDE}"
        )));
    }
    if classes == 0 || records == 0 || !records.is_multiple_of(2 * classes) {
        return Err(Error::Malformed(format!(
            "{records} records cannot split evenly over {classes} classes"
        )));
    }
    let expected = encoded_len(records);
    if (bytes.len() as u64) < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len() as u64,
        });
    }
    if bytes.len() as u64 > expected {
        return Err(Error::Malformed(format!(
            "{} trailing bytes after {records} records",
            bytes.len() as u64 - expected
        )));
    }

    let per_split = records / 2;
    let mut samples = Vec::with_capacity(records);
    for (index, chunk) in bytes[HEADER_LEN..].chunks_exact(RECORD_LEN).enumerate() {
        let label = chunk[0];
        if label as usize >= classes {
            return Err(Error::Malformed(format!(
                "record {index} has label {label} ≥ {classes}"
            )));
        }
        let pixels = chunk[1..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        samples.push(Sample {
            label,
            class: ((index % per_split) % classes) as u8,
            pixels,
        });
    }
    let test = samples.split_off(per_split);
    let spec = DatasetSpec {
        classes,
        train_per_class: per_split / classes,
        test_per_class: per_split / classes,
        seed,
        label_mode,
        ..DatasetSpec::default()
    };
    Ok(SyntheticDataset {
        spec,
        train: samples,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_dataset;

    fn tiny() -> SyntheticDataset {
        let spec = DatasetSpec {
            seed: 3,
            classes: 4,
            label_mode: LabelMode::RandomLabels,
            ..DatasetSpec::default().with_per_class(2, 2)
        };
        generate_dataset(&spec).unwrap()
    }

    fn encode(ds: &SyntheticDataset) -> Vec<u8> {
        let mut buf = Vec::new();
        write_dataset(ds, &mut buf).unwrap();
        buf
    }

    #[test]
    fn round_trip_and_size() {
        let ds = tiny();
        let buf = encode(&ds);
        assert_eq!(buf.len() as u64, 24 + 16 * (1 + 4 * 1024));
        assert_eq!(buf.len() as u64, encoded_len(16));
        assert_eq!(read_dataset(&buf[..]).unwrap(), ds);
    }

    #[test]
    fn header_layout() {
        let buf = encode(&tiny());
        assert_eq!(&buf[0..4], b"GSYN");
        assert_eq!(u16::from_le_bytes([buf[4], buf[5]]), 1);
        assert_eq!(buf[6], 1);
        assert_eq!(buf[7], 4);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 32);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 16);
        assert_eq!(u64::from_le_bytes(buf[16..24].try_into().unwrap()), 3);
    }

    #[test]
    fn distinct_diagnostics() {
        let buf = encode(&tiny());

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_dataset(&bad[..]),
            Err(Error::BadMagic { .. })
        ));

        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(matches!(
            read_dataset(&bad[..]),
            Err(Error::VersionMismatch {
                found: 9,
                supported: 1
            })
        ));

        assert!(matches!(
            read_dataset(&buf[..buf.len() - 1]),
            Err(Error::Truncated { .. })
        ));
        assert!(matches!(
            read_dataset(&buf[..10]),
            Err(Error::Truncated { .. })
        ));

        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(read_dataset(&long[..]), Err(Error::Malformed(_))));
    }

    #[test]
    fn uneven_split_rejected() {
        let spec = DatasetSpec::default().with_per_class(2, 1);
        let ds = generate_dataset(&DatasetSpec { classes: 2, ..spec }).unwrap();
        assert!(write_dataset(&ds, Vec::new()).is_err());
    }
}
