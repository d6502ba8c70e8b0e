//! Binary checkpoints: a magic header, a JSON metadata block, and named
//! little-endian `f32` weight arrays grouped into parameter sets.
//!
//! Two kinds exist: `Training` carries estimator + actor + critic (enough
//! to keep training or evaluate), `Deploy` carries estimator + actor only
//! (what a robot would run). Metadata embeds the configurations so a
//! loaded file is self-describing; nothing time- or host-dependent is
//! written, so saving the same state twice yields identical bytes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nn::{Init, ParamSet};
use crate::phase::estimator::EstimatorConfig;
use crate::policy::PolicyConfig;
use crate::rewards::RewardWeights;
use crate::sim::SimConfig;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"QGAITCK1";
const VERSION: u32 = 1;

/// What a checkpoint contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    Training,
    Deploy,
}

/// Self-describing header stored as JSON inside the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: CheckpointKind,
    pub iteration: u64,
    pub seed: u64,
    pub curriculum_level: u64,
    pub sim: SimConfig,
    pub estimator: EstimatorConfig,
    pub policy: PolicyConfig,
    pub reward: RewardWeights,
}

/// Expected set names per kind, in file order.
pub fn expected_sets(kind: CheckpointKind) -> &'static [&'static str] {
    match kind {
        CheckpointKind::Training => &["estimator", "actor", "critic"],
        CheckpointKind::Deploy => &["estimator", "actor"],
    }
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let n = read_u32(r)? as usize;
    if n > 1 << 20 {
        return Err(Error::Checkpoint("unreasonable string length".into()));
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| Error::Checkpoint("invalid utf-8 in name".into()))
}

/// Writes a checkpoint. `sets` must match [`expected_sets`] for the kind.
pub fn save(path: &Path, meta: &CheckpointMeta, sets: &[(&str, &ParamSet)]) -> Result<()> {
    let wanted = expected_sets(meta.kind);
    if sets.len() != wanted.len() || sets.iter().zip(wanted).any(|((n, _), w)| n != w) {
        return Err(Error::Checkpoint(format!(
            "checkpoint kind {:?} requires sets {:?}",
            meta.kind, wanted
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, VERSION)?;
    let meta_json = serde_json::to_vec(meta)?;
    w.write_all(&(meta_json.len() as u64).to_le_bytes())?;
    w.write_all(&meta_json)?;
    write_u32(&mut w, sets.len() as u32)?;
    for (name, set) in sets {
        write_str(&mut w, name)?;
        write_u32(&mut w, set.len() as u32)?;
        for arr in set.iter() {
            write_str(&mut w, &arr.name)?;
            write_u32(&mut w, arr.rows as u32)?;
            write_u32(&mut w, arr.cols as u32)?;
            for v in &arr.values {
                w.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint back: metadata plus one [`ParamSet`] per stored set.
pub fn load(path: &Path) -> Result<(CheckpointMeta, BTreeMap<String, ParamSet>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let meta_len = read_u64(&mut r)? as usize;
    if meta_len > 1 << 24 {
        return Err(Error::Checkpoint("unreasonable metadata length".into()));
    }
    let mut meta_json = vec![0u8; meta_len];
    r.read_exact(&mut meta_json)?;
    let meta: CheckpointMeta = serde_json::from_slice(&meta_json)?;

    let n_sets = read_u32(&mut r)? as usize;
    let wanted = expected_sets(meta.kind);
    if n_sets != wanted.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} parameter sets, found {n_sets}",
            wanted.len()
        )));
    }
    let mut out = BTreeMap::new();
    let mut dummy_rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    for want_name in wanted {
        let name = read_str(&mut r)?;
        if &name != want_name {
            return Err(Error::Checkpoint(format!(
                "expected set {want_name:?}, found {name:?}"
            )));
        }
        let n_arrays = read_u32(&mut r)? as usize;
        let mut set = ParamSet::new();
        for _ in 0..n_arrays {
            let arr_name = read_str(&mut r)?;
            let rows = read_u32(&mut r)? as usize;
            let cols = read_u32(&mut r)? as usize;
            if rows == 0 || cols == 0 || rows.saturating_mul(cols) > 1 << 26 {
                return Err(Error::Checkpoint(format!(
                    "array {arr_name:?} has unreasonable shape {rows}×{cols}"
                )));
            }
            let mut values = vec![0.0f64; rows * cols];
            let mut buf = [0u8; 4];
            for v in &mut values {
                r.read_exact(&mut buf)?;
                let f = f32::from_le_bytes(buf);
                if !f.is_finite() {
                    return Err(Error::Checkpoint(format!(
                        "array {arr_name:?} contains a non-finite weight"
                    )));
                }
                *v = f as f64;
            }
            set.add(&arr_name, rows, cols, Init::Zeros, &mut dummy_rng)?;
            set.set_values(&arr_name, &values)?;
        }
        out.insert(name, set);
    }
    // Trailing garbage would mean a corrupt or truncated-then-padded file.
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after final array".into()));
    }
    Ok((meta, out))
}

use rand::SeedableRng;

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    fn meta(kind: CheckpointKind) -> CheckpointMeta {
        CheckpointMeta {
            kind,
            iteration: 42,
            seed: 7,
            curriculum_level: 2,
            sim: SimConfig::default(),
            estimator: EstimatorConfig::default(),
            policy: PolicyConfig::default(),
            reward: RewardWeights::default(),
        }
    }

    fn small_set(seed: u64) -> ParamSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamSet::new();
        s.add("w", 3, 4, Init::Xavier, &mut rng).unwrap();
        s.add("b", 3, 1, Init::Constant(0.25), &mut rng).unwrap();
        s
    }

    #[test]
    fn round_trips_metadata_and_weights() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        let est = small_set(1);
        let actor = small_set(2);
        let critic = small_set(3);
        let m = meta(CheckpointKind::Training);
        save(&path, &m, &[("estimator", &est), ("actor", &actor), ("critic", &critic)]).unwrap();
        let (m2, sets) = load(&path).unwrap();
        assert_eq!(m, m2);
        assert_eq!(sets.len(), 3);
        for (orig, name) in [(&est, "estimator"), (&actor, "actor"), (&critic, "critic")] {
            let loaded = &sets[name];
            assert_eq!(loaded.len(), orig.len());
            for (a, b) in loaded.iter().zip(orig.iter()) {
                assert_eq!(a.name, b.name);
                assert_eq!((a.rows, a.cols), (b.rows, b.cols));
                for (x, y) in a.values.iter().zip(&b.values) {
                    // Weights pass through f32.
                    assert!((x - y).abs() <= (*y as f32).abs() as f64 * 1e-6 + 1e-7);
                }
            }
        }
    }

    #[test]
    fn saving_twice_yields_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.bin");
        let p2 = dir.path().join("b.bin");
        let est = small_set(1);
        let actor = small_set(2);
        let m = meta(CheckpointKind::Deploy);
        save(&p1, &m, &[("estimator", &est), ("actor", &actor)]).unwrap();
        save(&p2, &m, &[("estimator", &est), ("actor", &actor)]).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn rejects_wrong_kind_wrong_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        let est = small_set(1);
        let m = meta(CheckpointKind::Deploy);
        // Deploy kind with a missing set.
        assert!(save(&path, &m, &[("estimator", &est)]).is_err());
        let actor = small_set(2);
        save(&path, &m, &[("estimator", &est), ("actor", &actor)]).unwrap();

        let bytes = std::fs::read(&path).unwrap();
        let bad_magic = dir.path().join("bad.bin");
        let mut b = bytes.clone();
        b[0] ^= 0xff;
        std::fs::write(&bad_magic, &b).unwrap();
        assert!(load(&bad_magic).is_err());

        let truncated = dir.path().join("trunc.bin");
        std::fs::write(&truncated, &bytes[..bytes.len() - 5]).unwrap();
        assert!(load(&truncated).is_err());

        let padded = dir.path().join("padded.bin");
        let mut b = bytes.clone();
        b.push(0);
        std::fs::write(&padded, &b).unwrap();
        assert!(load(&padded).is_err());
    }
}
