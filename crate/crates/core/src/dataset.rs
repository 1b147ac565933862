//! On-disk pretext datasets: `manifest.json` plus numbered binary shards.
//!
//! Shard layout: magic `TSDS`, `u32` format version, `u32` record count, then
//! per record the RGB frame (u8, `H×W×3`), the stack of differences
//! (little-endian f32, `H×W×5`), the class index (one byte) and the
//! provenance as a `u32`-length-prefixed UTF-8 JSON document.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, IoContext, Result};
use crate::frame::Frame;
use crate::motion::{StackOfDifferences, SOD_CHANNELS};
use crate::pretext::{class_histogram, PretextLabel, PretextTuple, Provenance, TupleGenSpec, PRETEXT_CLASSES};

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_SHARD_SIZE: usize = 1000;
const SHARD_MAGIC: &[u8; 4] = b"TSDS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShardInfo {
    pub path: String,
    pub count: usize,
    /// SHA-256 of the shard file, hex encoded.
    pub checksum: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub spec: TupleGenSpec,
    pub num_tuples: usize,
    pub class_counts: [usize; PRETEXT_CLASSES],
    pub height: usize,
    pub width: usize,
    pub shards: Vec<ShardInfo>,
}

pub fn write_dataset(tuples: &[PretextTuple], spec: &TupleGenSpec, root: &Path) -> Result<DatasetManifest> {
    write_dataset_sharded(tuples, spec, root, DEFAULT_SHARD_SIZE)
}

pub fn write_dataset_sharded(
    tuples: &[PretextTuple],
    spec: &TupleGenSpec,
    root: &Path,
    shard_size: usize,
) -> Result<DatasetManifest> {
    if shard_size == 0 {
        return Err(Error::Argument("shard size must be positive".into()));
    }
    fs::create_dir_all(root).at(root)?;
    let (height, width) = tuples.first().map_or((0, 0), |t| (t.rgb.height(), t.rgb.width()));
    let mut shards = Vec::new();
    for (id, chunk) in tuples.chunks(shard_size).enumerate() {
        let mut buf = Vec::new();
        buf.extend_from_slice(SHARD_MAGIC);
        buf.extend_from_slice(&DATASET_FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(chunk.len() as u32).to_le_bytes());
        for t in chunk {
            encode_record(t, height, width, &mut buf)?;
        }
        let rel = format!("shard-{id:05}.bin");
        let path = root.join(&rel);
        fs::write(&path, &buf).at(&path)?;
        shards.push(ShardInfo {
            path: rel,
            count: chunk.len(),
            checksum: hex::encode(Sha256::digest(&buf)),
        });
    }
    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT_VERSION,
        spec: spec.clone(),
        num_tuples: tuples.len(),
        class_counts: class_histogram(tuples),
        height,
        width,
        shards,
    };
    let path = root.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).at(&path)?;
    Ok(manifest)
}

fn encode_record(t: &PretextTuple, height: usize, width: usize, buf: &mut Vec<u8>) -> Result<()> {
    if t.rgb.dims() != (height, width, 3) || (t.sod.height(), t.sod.width()) != (height, width) {
        return Err(Error::shape(
            "write_dataset",
            format!("tuple shapes differ from the first tuple's {height}x{width}"),
        ));
    }
    buf.extend(t.rgb.to_u8());
    for v in t.sod.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.push(t.label.index() as u8);
    let prov = serde_json::to_vec(&t.provenance)?;
    buf.extend_from_slice(&(prov.len() as u32).to_le_bytes());
    buf.extend(prov);
    Ok(())
}

pub fn read_manifest(root: &Path) -> Result<DatasetManifest> {
    let path = root.join("manifest.json");
    let text = fs::read_to_string(&path).at(&path)?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::corrupt(
            "dataset manifest",
            format!(
                "format_version {} (expected {DATASET_FORMAT_VERSION})",
                manifest.format_version
            ),
        ));
    }
    Ok(manifest)
}

pub fn read_dataset(root: &Path) -> Result<Vec<PretextTuple>> {
    let manifest = read_manifest(root)?;
    let mut tuples = Vec::with_capacity(manifest.num_tuples);
    for (id, shard) in manifest.shards.iter().enumerate() {
        let path = root.join(&shard.path);
        let bytes = fs::read(&path).at(&path)?;
        let what = format!("shard {id} ({})", shard.path);
        let records = decode_shard(&bytes, manifest.height, manifest.width)
            .map_err(|message| Error::corrupt(&what, message))?;
        if hex::encode(Sha256::digest(&bytes)) != shard.checksum {
            return Err(Error::corrupt(&what, "checksum mismatch"));
        }
        if records.len() != shard.count {
            return Err(Error::corrupt(
                &what,
                format!("{} records, manifest says {}", records.len(), shard.count),
            ));
        }
        tuples.extend(records);
    }
    if tuples.len() != manifest.num_tuples {
        return Err(Error::corrupt(
            "dataset",
            format!("{} tuples, manifest says {}", tuples.len(), manifest.num_tuples),
        ));
    }
    Ok(tuples)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(format!(
                "truncated: need {n} bytes at offset {}, only {} remain",
                self.pos,
                self.bytes.len() - self.pos
            ));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn decode_shard(bytes: &[u8], height: usize, width: usize) -> std::result::Result<Vec<PretextTuple>, String> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != SHARD_MAGIC {
        return Err("bad magic".into());
    }
    let version = cur.u32()?;
    if version != DATASET_FORMAT_VERSION {
        return Err(format!("format version {version} (expected {DATASET_FORMAT_VERSION})"));
    }
    let count = cur.u32()? as usize;
    let rgb_len = height * width * 3;
    let sod_len = height * width * SOD_CHANNELS;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let rgb = Frame::from_u8(height, width, 3, cur.take(rgb_len)?).map_err(|e| e.to_string())?;
        let sod: Vec<f32> = cur
            .take(sod_len * 4)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let sod = Frame::from_vec(height, width, SOD_CHANNELS, sod).map_err(|e| e.to_string())?;
        let label_byte = cur.take(1)?[0];
        let label = PretextLabel::from_index(label_byte as usize).ok_or_else(|| format!("label byte {label_byte}"))?;
        let prov_len = cur.u32()? as usize;
        let provenance: Provenance = serde_json::from_slice(cur.take(prov_len)?).map_err(|e| e.to_string())?;
        out.push(PretextTuple {
            rgb,
            sod: StackOfDifferences::from_frame(sod).map_err(|e| e.to_string())?,
            label,
            provenance,
        });
    }
    if cur.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - cur.pos));
    }
    Ok(out)
}
