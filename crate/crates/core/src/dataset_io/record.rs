//! Grid record file.
//!
//! ```text
//! offset  size          field
//! 0       4             magic "DGN1"
//! 4       2             width   (u16 LE)
//! 6       2             height  (u16 LE)
//! 8       4             resolution in meters (f32 LE)
//! 12      1             label (0..=4)
//! 13      1             channels (= 3)
//! 14      W·H·3·4       per cell, row-major: m_occ, m_free, m_unknown (f32 LE)
//! ```
//!
//! The grid origin is not stored: a decoded grid is centred on the world
//! origin. Readers take the two singleton masses as stored and recompute the
//! ignorance mass as `1 − (m_occ + m_free)`, checking that it agrees with
//! the stored third channel to f32 precision. Records built with
//! [`GridRecord::quantized`] therefore survive a write/read cycle bit for
//! bit.

use std::fs;
use std::path::Path;

use super::DatasetError;
use crate::ds_fusion::{GridSpec, MassAssignment, OccupancyGrid};
use crate::scenario_sim::{ContextClass, DatasetManifest, MANIFEST_FILE};

pub const RECORD_MAGIC: &[u8; 4] = b"DGN1";
pub const HEADER_LEN: usize = 14;
const CHANNELS: u8 = 3;
/// Agreement required between the stored and recomputed ignorance mass.
const STORED_MASS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GridRecord {
    pub grid: OccupancyGrid,
    pub label: ContextClass,
}

fn stored_mass(m_occ: f32, m_free: f32) -> Option<MassAssignment> {
    let (o, f) = (m_occ as f64, m_free as f64);
    MassAssignment::new(f, o, 1.0 - (o + f)).ok()
}

impl GridRecord {
    pub fn new(grid: OccupancyGrid, label: ContextClass) -> Self {
        Self { grid, label }
    }

    /// Rounds masses to what the file format can hold exactly and re-centres
    /// the grid, so that reading back the written record yields an equal
    /// value.
    pub fn quantized(grid: &OccupancyGrid, label: ContextClass) -> Self {
        let s = grid.spec();
        let spec = GridSpec::centered(s.width, s.height, s.resolution as f32 as f64);
        let cells = grid
            .cells()
            .iter()
            .map(|c| {
                let mut o = c.m_occ() as f32;
                let mut f = c.m_free() as f32;
                // Rounding up may push the evidence total past one.
                while o as f64 + f as f64 > 1.0 {
                    if o >= f {
                        o = f32::from_bits(o.to_bits() - 1);
                    } else {
                        f = f32::from_bits(f.to_bits() - 1);
                    }
                }
                stored_mass(o, f).expect("quantized mass is valid")
            })
            .collect();
        Self {
            grid: OccupancyGrid::from_cells(spec, cells).expect("same cell count"),
            label,
        }
    }
}

pub fn encode_record(record: &GridRecord) -> Result<Vec<u8>, DatasetError> {
    let spec = record.grid.spec();
    let dim = |v: usize| {
        u16::try_from(v).map_err(|_| DatasetError::BadHeader(format!("dimension {v} exceeds u16")))
    };
    let mut out = Vec::with_capacity(HEADER_LEN + spec.len() * 12);
    out.extend_from_slice(RECORD_MAGIC);
    out.extend_from_slice(&dim(spec.width)?.to_le_bytes());
    out.extend_from_slice(&dim(spec.height)?.to_le_bytes());
    out.extend_from_slice(&(spec.resolution as f32).to_le_bytes());
    out.push(record.label.index() as u8);
    out.push(CHANNELS);
    for c in record.grid.cells() {
        for v in [c.m_occ(), c.m_free(), c.m_unknown()] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_record(bytes: &[u8]) -> Result<GridRecord, DatasetError> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && &bytes[..4] != RECORD_MAGIC {
            return Err(DatasetError::BadMagic(bytes[..4].try_into().unwrap()));
        }
        return Err(DatasetError::TruncatedFile {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != RECORD_MAGIC {
        return Err(DatasetError::BadMagic(magic));
    }
    let width = u16::from_le_bytes([bytes[4], bytes[5]]) as usize;
    let height = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let resolution = f32::from_le_bytes(bytes[8..12].try_into().unwrap()) as f64;
    let label_code = bytes[12];
    let label = ContextClass::from_index(label_code as usize)
        .ok_or(DatasetError::InvalidLabel(label_code))?;
    if bytes[13] != CHANNELS {
        return Err(DatasetError::BadHeader(format!("expected 3 channels, found {}", bytes[13])));
    }
    let needed = HEADER_LEN + width * height * 12;
    if bytes.len() < needed {
        return Err(DatasetError::TruncatedFile {
            needed,
            available: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(DatasetError::BadHeader(format!(
            "{} trailing bytes",
            bytes.len() - needed
        )));
    }
    let spec = GridSpec::centered(width, height, resolution);
    spec.validate()?;
    let cells = bytes[HEADER_LEN..]
        .chunks_exact(12)
        .enumerate()
        .map(|(i, c)| {
            let v = |k: usize| f32::from_le_bytes(c[4 * k..4 * k + 4].try_into().unwrap());
            let (o, f, u) = (v(0), v(1), v(2));
            let mass = stored_mass(o, f).ok_or(DatasetError::MassInvariantViolation(i))?;
            let consistent =
                u >= 0.0 && (u as f64 - mass.m_unknown()).abs() <= STORED_MASS_TOLERANCE;
            consistent
                .then_some(mass)
                .ok_or(DatasetError::MassInvariantViolation(i))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GridRecord {
        grid: OccupancyGrid::from_cells(spec, cells)?,
        label,
    })
}

pub fn write_record(record: &GridRecord, path: &Path) -> Result<(), DatasetError> {
    fs::write(path, encode_record(record)?)?;
    Ok(())
}

pub fn read_record(path: &Path) -> Result<GridRecord, DatasetError> {
    decode_record(&fs::read(path)?)
}

/// Reads `manifest.json` and every record it lists from `dir`.
pub fn load_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<GridRecord>), DatasetError> {
    let manifest: DatasetManifest =
        serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    let mut records = Vec::with_capacity(manifest.records.len());
    for entry in &manifest.records {
        let record = read_record(&dir.join(&entry.file))?;
        let found = record.label.index() as u8;
        if found != entry.label {
            return Err(DatasetError::ManifestMismatch {
                file: entry.file.clone(),
                expected: entry.label,
                found,
            });
        }
        records.push(record);
    }
    Ok((manifest, records))
}
