//! Versioned binary persistence for saved FCIs: one file per input, a
//! fingerprint header binding it to (program, generator registry, mode,
//! p_const), then the draw records.

use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::Corpus;
use crate::generator::{ExecutionIndex, Fci, FciEntry, GeneratorRegistry, TypeStack};
use crate::interp::FailureKind;
use crate::ir::{pretty_print, Program};
use crate::mutation::Mode;

const MAGIC: &[u8; 8] = b"TFCORP01";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusIoError {
    #[error("corpus io: {0}")]
    Io(#[from] io::Error),
    #[error("not a corpus file (bad magic)")]
    BadMagic,
    #[error("unsupported corpus format version {0}")]
    BadVersion(u32),
    #[error("malformed corpus file: {0}")]
    Malformed(String),
    #[error("fingerprint mismatch: corpus was saved against a different program/registry/config")]
    FingerprintMismatch,
}

/// Binds a corpus file to everything replay depends on.
pub fn campaign_fingerprint(
    program: &Program,
    registry: &GeneratorRegistry,
    mode: Mode,
    p_const: f64,
) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(FORMAT_VERSION.to_le_bytes());
    hasher.update(pretty_print(program).as_bytes());
    hasher.update(registry.version_tag().as_bytes());
    hasher.update(mode.as_str().as_bytes());
    hasher.update(p_const.to_le_bytes());
    hasher.finalize().into()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SavedFci {
    pub fci: Fci,
    /// None for successful entries, the failure kind otherwise.
    pub failure: Option<FailureKind>,
    pub fingerprint: [u8; 32],
}

fn failure_code(kind: FailureKind) -> u8 {
    match kind {
        FailureKind::Assertion => 1,
        FailureKind::ExternFault => 2,
        FailureKind::StepBudgetExhausted => 3,
        FailureKind::TypeError => 4,
    }
}

fn failure_from_code(code: u8) -> Result<Option<FailureKind>, CorpusIoError> {
    Ok(match code {
        0 => None,
        1 => Some(FailureKind::Assertion),
        2 => Some(FailureKind::ExternFault),
        3 => Some(FailureKind::StepBudgetExhausted),
        4 => Some(FailureKind::TypeError),
        other => return Err(CorpusIoError::Malformed(format!("failure code {other}"))),
    })
}

pub fn write_fci(
    path: &Path,
    fci: &Fci,
    failure: Option<FailureKind>,
    fingerprint: &[u8; 32],
) -> Result<(), CorpusIoError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(fingerprint);
    buf.push(failure.map_or(0, failure_code));

    // Type-name table: each entry's stack is stored as ids into it.
    let mut names: Vec<String> = Vec::new();
    let mut ids: HashMap<String, u16> = HashMap::new();
    for entry in &fci.entries {
        for ty in entry.types.0.iter() {
            if !ids.contains_key(ty) {
                ids.insert(ty.clone(), names.len() as u16);
                names.push(ty.clone());
            }
        }
    }
    buf.extend_from_slice(&(names.len() as u16).to_le_bytes());
    for name in &names {
        let bytes = name.as_bytes();
        buf.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
        buf.extend_from_slice(bytes);
    }

    buf.extend_from_slice(&(fci.entries.len() as u32).to_le_bytes());
    for entry in &fci.entries {
        buf.extend_from_slice(&entry.value.to_le_bytes());
        buf.extend_from_slice(&entry.lo.to_le_bytes());
        buf.extend_from_slice(&entry.hi.to_le_bytes());
        buf.extend_from_slice(&(entry.ei.0.len() as u16).to_le_bytes());
        for (label, count) in entry.ei.0.iter() {
            buf.extend_from_slice(&label.to_le_bytes());
            buf.extend_from_slice(&count.to_le_bytes());
        }
        buf.push(entry.types.0.len() as u8);
        for ty in entry.types.0.iter() {
            buf.extend_from_slice(&ids[ty].to_le_bytes());
        }
    }

    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn read_fci(path: &Path) -> Result<SavedFci, CorpusIoError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };

    if cur.take(8)? != MAGIC.as_slice() {
        return Err(CorpusIoError::BadMagic);
    }
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(CorpusIoError::BadVersion(version));
    }
    let mut fingerprint = [0u8; 32];
    fingerprint.copy_from_slice(cur.take(32)?);
    let failure = failure_from_code(cur.u8()?)?;

    let name_count = cur.u16()? as usize;
    let mut names = Vec::with_capacity(name_count);
    for _ in 0..name_count {
        let len = cur.u16()? as usize;
        let raw = cur.take(len)?;
        names.push(
            String::from_utf8(raw.to_vec())
                .map_err(|_| CorpusIoError::Malformed("type name not utf-8".into()))?,
        );
    }

    // Entries with identical stacks share one allocation.
    let mut stack_cache: HashMap<Vec<u16>, TypeStack> = HashMap::new();
    let entry_count = cur.u32()? as usize;
    let mut entries = Vec::with_capacity(entry_count);
    for _ in 0..entry_count {
        let value = cur.i64()?;
        let lo = cur.i64()?;
        let hi = cur.i64()?;
        let pair_count = cur.u16()? as usize;
        let mut pairs = Vec::with_capacity(pair_count);
        for _ in 0..pair_count {
            let label = cur.u32()?;
            let count = cur.u32()?;
            pairs.push((label, count));
        }
        let depth = cur.u8()? as usize;
        let mut stack_ids = Vec::with_capacity(depth);
        for _ in 0..depth {
            stack_ids.push(cur.u16()?);
        }
        let types = match stack_cache.get(&stack_ids) {
            Some(stack) => stack.clone(),
            None => {
                let mut resolved = Vec::with_capacity(depth);
                for id in &stack_ids {
                    let name = names.get(*id as usize).ok_or_else(|| {
                        CorpusIoError::Malformed(format!("type id {id} out of range"))
                    })?;
                    resolved.push(name.clone());
                }
                let stack = TypeStack(Arc::new(resolved));
                stack_cache.insert(stack_ids, stack.clone());
                stack
            }
        };
        entries.push(FciEntry { value, lo, hi, ei: ExecutionIndex(pairs.into()), types });
    }

    Ok(SavedFci { fci: Fci { entries }, failure, fingerprint })
}

/// Persist a whole corpus to `dir`: successes as `s_<n>.fci`, failures as
/// `f_<n>.fci`.
pub fn save_corpus(
    dir: &Path,
    corpus: &Corpus,
    fingerprint: &[u8; 32],
) -> Result<(), CorpusIoError> {
    std::fs::create_dir_all(dir)?;
    for (i, entry) in corpus.successes.iter().enumerate() {
        write_fci(&dir.join(format!("s_{i:06}.fci")), &entry.fci, None, fingerprint)?;
    }
    for (i, entry) in corpus.failures.iter().enumerate() {
        write_fci(&dir.join(format!("f_{i:06}.fci")), &entry.fci, Some(entry.kind), fingerprint)?;
    }
    Ok(())
}

/// Load every `.fci` file in `dir`, sorted by file name.
pub fn load_corpus(dir: &Path) -> Result<Vec<(PathBuf, SavedFci)>, CorpusIoError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("fci"))
        .collect();
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for path in paths {
        let saved = read_fci(&path)?;
        out.push((path, saved));
    }
    Ok(out)
}

/// Validate a saved input against the expected fingerprint before replay.
pub fn check_fingerprint(saved: &SavedFci, expected: &[u8; 32]) -> Result<(), CorpusIoError> {
    if &saved.fingerprint == expected {
        Ok(())
    } else {
        Err(CorpusIoError::FingerprintMismatch)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CorpusIoError> {
        if self.pos + n > self.bytes.len() {
            return Err(CorpusIoError::Malformed("unexpected end of file".into()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, CorpusIoError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CorpusIoError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CorpusIoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64, CorpusIoError> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
