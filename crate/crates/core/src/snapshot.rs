//! On-disk policy snapshots.
//!
//! Layout (all integers little-endian):
//!
//! | bytes | content                                                    |
//! |-------|------------------------------------------------------------|
//! | 8     | magic `SEERLSNP`                                           |
//! | 4     | `u32` format version (1)                                   |
//! | 4     | `u32` byte length `n` of the metadata block                |
//! | n     | UTF-8 `key=value\n` lines, keys sorted                     |
//! | 8     | `u64` parameter count `p`                                  |
//! | 8 p   | parameters as IEEE-754 `f64`                               |
//!
//! Nothing may follow the parameter array.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::learner::{Architecture, LearnerError, PolicyParams};

pub const MAGIC: &[u8; 8] = b"SEERLSNP";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    UnsupportedVersion(u32),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("malformed metadata: {0}")]
    MalformedMetadata(String),
    #[error("architecture hash mismatch: stored {stored}, computed {computed}")]
    ArchitectureMismatch { stored: String, computed: String },
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMeta {
    pub run_id: String,
    pub env_id: String,
    pub cycle_index: u64,
    pub step: u64,
    pub alpha0: f64,
    pub total_steps: u64,
    pub cycles: u64,
}

/// Frozen learner parameters together with the run they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySnapshot {
    pub params: PolicyParams,
    pub meta: SnapshotMeta,
}

impl PolicySnapshot {
    pub fn file_name(&self) -> String {
        snapshot_file_name(&self.meta.run_id, self.meta.cycle_index)
    }

    fn metadata_block(&self) -> String {
        let arch = self.params.arch();
        let mut kv = BTreeMap::new();
        kv.insert("M", self.meta.cycles.to_string());
        kv.insert("T", self.meta.total_steps.to_string());
        kv.insert("alpha0", self.meta.alpha0.to_string());
        kv.insert("arch", arch.descriptor());
        kv.insert("cycle_index", self.meta.cycle_index.to_string());
        kv.insert("env_id", self.meta.env_id.clone());
        kv.insert("learner_config_hash", arch.config_hash());
        kv.insert("run_id", self.meta.run_id.clone());
        kv.insert("step", self.meta.step.to_string());
        kv.into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = self.metadata_block();
        let params = self.params.as_slice();
        let mut out = Vec::with_capacity(24 + meta.len() + 8 * params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SnapshotError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        cur.pos = MAGIC.len();
        let version = u32::from_le_bytes(cur.take::<4>("version")?);
        if version != VERSION {
            return Err(SnapshotError::UnsupportedVersion(version));
        }
        let meta_len = u32::from_le_bytes(cur.take::<4>("metadata length")?) as usize;
        let meta_bytes = cur.slice(meta_len, "metadata")?;
        let text = std::str::from_utf8(meta_bytes)
            .map_err(|_| SnapshotError::MalformedMetadata("not UTF-8".into()))?;
        let kv = parse_metadata(text)?;

        let arch = Architecture::from_descriptor(get(&kv, "arch")?)
            .map_err(|e| SnapshotError::MalformedMetadata(e.to_string()))?;
        let stored = get(&kv, "learner_config_hash")?;
        let computed = arch.config_hash();
        if stored != computed {
            return Err(SnapshotError::ArchitectureMismatch { stored: stored.to_string(), computed });
        }

        let count = u64::from_le_bytes(cur.take::<8>("parameter count")?) as usize;
        if count != arch.param_count() {
            return Err(SnapshotError::LengthMismatch(format!(
                "header declares {count} parameters, architecture needs {}",
                arch.param_count()
            )));
        }
        let remaining = bytes.len() - cur.pos;
        if remaining != count * 8 {
            return Err(SnapshotError::LengthMismatch(format!(
                "expected {} parameter bytes, found {remaining}",
                count * 8
            )));
        }
        let data: Vec<f64> = bytes[cur.pos..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let params = PolicyParams::from_flat(arch, data).map_err(|e| match e {
            LearnerError::LengthMismatch { .. } => SnapshotError::LengthMismatch(e.to_string()),
            other => SnapshotError::MalformedMetadata(other.to_string()),
        })?;

        let meta = SnapshotMeta {
            run_id: get(&kv, "run_id")?.to_string(),
            env_id: get(&kv, "env_id")?.to_string(),
            cycle_index: parse(&kv, "cycle_index")?,
            step: parse(&kv, "step")?,
            alpha0: parse(&kv, "alpha0")?,
            total_steps: parse(&kv, "T")?,
            cycles: parse(&kv, "M")?,
        };
        if meta.cycle_index == 0 || meta.cycle_index > meta.cycles {
            return Err(SnapshotError::MalformedMetadata(format!(
                "cycle_index {} outside [1, {}]",
                meta.cycle_index, meta.cycles
            )));
        }
        Ok(PolicySnapshot { params, meta })
    }
}

pub fn snapshot_file_name(run_id: &str, cycle_index: u64) -> String {
    format!("{run_id}_cycle{cycle_index}.snap")
}

pub fn save(snapshot: &PolicySnapshot, path: &Path) -> Result<(), SnapshotError> {
    fs::write(path, snapshot.to_bytes())
        .map_err(|source| SnapshotError::Io { path: path.to_path_buf(), source })
}

pub fn load(path: &Path) -> Result<PolicySnapshot, SnapshotError> {
    let bytes = fs::read(path).map_err(|source| SnapshotError::Io { path: path.to_path_buf(), source })?;
    PolicySnapshot::from_bytes(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn slice(&mut self, n: usize, what: &str) -> Result<&'a [u8], SnapshotError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            SnapshotError::LengthMismatch(format!("truncated while reading {what}"))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N], SnapshotError> {
        Ok(self.slice(N, what)?.try_into().unwrap())
    }
}

fn parse_metadata(text: &str) -> Result<BTreeMap<&str, &str>, SnapshotError> {
    let mut kv = BTreeMap::new();
    for line in text.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| SnapshotError::MalformedMetadata(format!("line `{line}`")))?;
        if kv.insert(k, v).is_some() {
            return Err(SnapshotError::MalformedMetadata(format!("duplicate key `{k}`")));
        }
    }
    Ok(kv)
}

fn get<'a>(kv: &BTreeMap<&str, &'a str>, key: &str) -> Result<&'a str, SnapshotError> {
    kv.get(key)
        .copied()
        .ok_or_else(|| SnapshotError::MalformedMetadata(format!("missing key `{key}`")))
}

fn parse<T: std::str::FromStr>(kv: &BTreeMap<&str, &str>, key: &str) -> Result<T, SnapshotError> {
    get(kv, key)?
        .parse()
        .map_err(|_| SnapshotError::MalformedMetadata(format!("unparsable `{key}`")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::Head;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn snapshot() -> PolicySnapshot {
        let arch = Architecture { state_dim: 4, hidden: 6, head: Head::Categorical { actions: 2 } };
        let mut params = PolicyParams::init(arch, &mut ChaCha8Rng::seed_from_u64(0));
        params.as_mut_slice()[0] = -0.0;
        params.as_mut_slice()[1] = f64::MIN_POSITIVE / 2.0;
        PolicySnapshot {
            params,
            meta: SnapshotMeta {
                run_id: "seerl-cartpole-lite-s1".into(),
                env_id: "cartpole-lite".into(),
                cycle_index: 2,
                step: 400,
                alpha0: 0.05,
                total_steps: 1000,
                cycles: 5,
            },
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let snap = snapshot();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(snap.file_name());
        save(&snap, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back.meta, snap.meta);
        let bits = |p: &PolicyParams| p.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.params), bits(&snap.params));
        save(&snap, &dir.path().join("again.snap")).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(dir.path().join("again.snap")).unwrap());
    }

    #[test]
    fn file_name_convention() {
        assert_eq!(snapshot().file_name(), "seerl-cartpole-lite-s1_cycle2.snap");
    }

    #[test]
    fn metadata_is_sorted_text() {
        let bytes = snapshot().to_bytes();
        let len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let text = std::str::from_utf8(&bytes[16..16 + len]).unwrap();
        let keys: Vec<&str> = text.lines().map(|l| l.split('=').next().unwrap()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(text.contains("cycle_index=2\n"));
    }

    #[test]
    fn corrupt_magic() {
        let mut bytes = snapshot().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(PolicySnapshot::from_bytes(&bytes), Err(SnapshotError::BadMagic)));
        assert!(matches!(PolicySnapshot::from_bytes(b"SEER"), Err(SnapshotError::BadMagic)));
    }

    #[test]
    fn wrong_version() {
        let mut bytes = snapshot().to_bytes();
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            PolicySnapshot::from_bytes(&bytes),
            Err(SnapshotError::UnsupportedVersion(7))
        ));
    }

    #[test]
    fn truncation_and_trailing_bytes() {
        let bytes = snapshot().to_bytes();
        for cut in [bytes.len() - 1, bytes.len() - 8, 20, 14] {
            assert!(
                matches!(PolicySnapshot::from_bytes(&bytes[..cut]), Err(SnapshotError::LengthMismatch(_))),
                "cut at {cut}"
            );
        }
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(PolicySnapshot::from_bytes(&longer), Err(SnapshotError::LengthMismatch(_))));
    }

    #[test]
    fn tampered_architecture_is_rejected() {
        let snap = snapshot();
        let bytes = snap.to_bytes();
        let raw = bytes
            .windows(8)
            .position(|w| w == b"hidden=6")
            .expect("descriptor present");
        let mut tampered = bytes.clone();
        tampered[raw + 7] = b'7';
        assert!(matches!(
            PolicySnapshot::from_bytes(&tampered),
            Err(SnapshotError::ArchitectureMismatch { .. })
        ));
    }

    #[test]
    fn missing_file_is_io_failure() {
        let err = load(Path::new("/nonexistent/dir/x.snap")).unwrap_err();
        assert!(matches!(err, SnapshotError::Io { .. }));
    }
}
