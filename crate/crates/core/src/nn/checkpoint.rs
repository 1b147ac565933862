//! Checkpoint files: an 8-byte little-endian header length, a JSON header,
//! then every parameter as little-endian `f32` at its recorded byte offset.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::nn::model::{TwoStreamConfig, TwoStreamNet, WeightProvenance};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterRecord {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the payload that follows the header.
    pub byte_offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub config_fingerprint: String,
    pub tower_fingerprint: String,
    pub config: TwoStreamConfig,
    pub step: u64,
    pub spatial_provenance: WeightProvenance,
    pub parameter_table: Vec<ParameterRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointBundle {
    pub header: CheckpointHeader,
    /// One buffer per `parameter_table` row.
    pub values: Vec<Vec<f32>>,
}

impl CheckpointBundle {
    pub fn from_model(model: &TwoStreamNet<f32>) -> Self {
        let mut offset = 0;
        let mut table = Vec::new();
        let mut values = Vec::new();
        for entry in model.params().entries() {
            table.push(ParameterRecord {
                name: entry.name.clone(),
                shape: entry.shape.clone(),
                byte_offset: offset,
            });
            offset += entry.value.len() * 4;
            values.push(entry.value.clone());
        }
        CheckpointBundle {
            header: CheckpointHeader {
                format_version: CHECKPOINT_FORMAT_VERSION,
                config_fingerprint: model.config().fingerprint(),
                tower_fingerprint: model.config().tower.fingerprint(),
                config: model.config().clone(),
                step: model.step(),
                spatial_provenance: model.spatial_provenance(),
                parameter_table: table,
            },
            values,
        }
    }

    pub fn param(&self, name: &str) -> Option<&[f32]> {
        self.header
            .parameter_table
            .iter()
            .position(|r| r.name == name)
            .map(|i| self.values[i].as_slice())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(8 + header.len() + self.values.iter().map(|v| v.len() * 4).sum::<usize>());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend(header);
        for v in self.values.iter().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: String| Error::corrupt("checkpoint", m);
        let len_bytes: [u8; 8] = bytes
            .get(..8)
            .ok_or_else(|| corrupt("shorter than its length prefix".into()))?
            .try_into()
            .unwrap();
        let header_len = u64::from_le_bytes(len_bytes) as usize;
        let header_bytes = bytes
            .get(8..8usize.saturating_add(header_len))
            .ok_or_else(|| corrupt(format!("header of {header_len} bytes is truncated")))?;
        let header: CheckpointHeader =
            serde_json::from_slice(header_bytes).map_err(|e| corrupt(format!("bad header: {e}")))?;
        if header.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(corrupt(format!(
                "format_version {} (expected {CHECKPOINT_FORMAT_VERSION})",
                header.format_version
            )));
        }
        let payload = &bytes[8 + header_len..];
        let mut values = Vec::with_capacity(header.parameter_table.len());
        let mut expected_end = 0;
        for rec in &header.parameter_table {
            let len = rec.shape.iter().product::<usize>() * 4;
            let chunk = payload.get(rec.byte_offset..rec.byte_offset + len).ok_or_else(|| {
                corrupt(format!("payload truncated inside `{}`", rec.name))
            })?;
            values.push(
                chunk
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                    .collect(),
            );
            expected_end = expected_end.max(rec.byte_offset + len);
        }
        if payload.len() != expected_end {
            return Err(corrupt(format!(
                "payload is {} bytes, parameter table covers {expected_end}",
                payload.len()
            )));
        }
        Ok(CheckpointBundle { header, values })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).at(dir)?;
        }
        fs::write(path, self.to_bytes()?).at(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).at(path)?)
    }
}

pub fn save_checkpoint(model: &TwoStreamNet<f32>, path: &Path) -> Result<CheckpointBundle> {
    let bundle = CheckpointBundle::from_model(model);
    bundle.save(path)?;
    Ok(bundle)
}

pub fn load_checkpoint(path: &Path) -> Result<CheckpointBundle> {
    CheckpointBundle::load(path)
}

impl TwoStreamNet<f32> {
    /// Restores every parameter; the bundle must come from the same architecture.
    pub fn load_bundle(&mut self, bundle: &CheckpointBundle) -> Result<()> {
        let expected = self.config().fingerprint();
        if bundle.header.config_fingerprint != expected {
            return Err(Error::Fingerprint {
                expected,
                found: bundle.header.config_fingerprint.clone(),
            });
        }
        self.load_group(bundle, None)?;
        self.set_step(bundle.header.step);
        self.set_spatial_provenance(bundle.header.spatial_provenance);
        Ok(())
    }

    /// Copies only the motion tower; heads and the spatial tower keep their values.
    pub fn load_motion_tower(&mut self, bundle: &CheckpointBundle) -> Result<()> {
        self.check_tower(bundle)?;
        self.load_group(bundle, Some("motion"))
    }

    /// Copies only the spatial tower and marks it as externally provided.
    pub fn load_spatial_tower(&mut self, bundle: &CheckpointBundle, provenance: WeightProvenance) -> Result<()> {
        self.check_tower(bundle)?;
        self.load_group(bundle, Some("spatial"))?;
        self.set_spatial_provenance(provenance);
        Ok(())
    }

    fn check_tower(&self, bundle: &CheckpointBundle) -> Result<()> {
        let expected = self.config().tower.fingerprint();
        if bundle.header.tower_fingerprint != expected {
            return Err(Error::Fingerprint {
                expected,
                found: bundle.header.tower_fingerprint.clone(),
            });
        }
        Ok(())
    }

    fn load_group(&mut self, bundle: &CheckpointBundle, group: Option<&str>) -> Result<()> {
        let lead = group.map(|g| format!("{g}."));
        let params = self.params_mut();
        for entry in params.entries_mut() {
            if let Some(lead) = &lead {
                if !entry.name.starts_with(lead.as_str()) {
                    continue;
                }
            }
            let i = bundle
                .header
                .parameter_table
                .iter()
                .position(|r| r.name == entry.name)
                .ok_or_else(|| Error::corrupt("checkpoint", format!("missing parameter `{}`", entry.name)))?;
            if bundle.header.parameter_table[i].shape != entry.shape {
                return Err(Error::shape(entry.name.clone(), "checkpoint shape differs"));
            }
            entry.value.clone_from(&bundle.values[i]);
        }
        Ok(())
    }
}
