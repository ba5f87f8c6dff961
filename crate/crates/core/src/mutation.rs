//! Baseline random mutation and type-based targeted mutation with dynamic
//! distance updates. Mutation only ever rewrites entry values: length,
//! order, execution indexes and type stacks all pass through unchanged.

use std::collections::BTreeSet;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::analysis::DistanceMap;
use crate::generator::Fci;
use crate::ir::CodeTarget;

/// Distance shrink factor on a targeted hit.
pub const HIT_FACTOR: f64 = 0.75;
/// Distance growth factor on a targeted miss.
pub const MISS_FACTOR: f64 = 4.0 / 3.0;

/// Fuzzing mode: plain random mutation, random mutation plus the constant
/// string table, or the full type-targeted heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Mode {
    Baseline,
    StrOpt,
    SpotOn,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::StrOpt => "str-opt",
            Mode::SpotOn => "spoton",
        }
    }

    /// True when generators should offer constants from the string table.
    pub fn uses_string_table(self) -> bool {
        matches!(self, Mode::StrOpt | Mode::SpotOn)
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "str-opt" => Ok(Mode::StrOpt),
            "spoton" => Ok(Mode::SpotOn),
            other => Err(format!("unknown mode {other:?} (expected baseline, str-opt or spoton)")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MutationKind {
    Random,
    TargetedHit(String),
    TargetedMiss(String),
}

/// Result of one mutation step: the mutated FCI, the (possibly updated)
/// distance map, and what happened.
#[derive(Debug, Clone)]
pub struct MutationOutcome {
    pub fci: Fci,
    pub distances: DistanceMap,
    pub kind: MutationKind,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MutationError {
    #[error("cannot select a type from an empty distance map")]
    EmptyDistanceMap,
}

/// Geometric(p = 0.5) run length over {1, 2, ...}; mean 2.
fn geometric_run_length(rng: &mut ChaCha8Rng) -> usize {
    let mut len = 1;
    while rng.random_bool(0.5) {
        len += 1;
    }
    len
}

/// Reroll the values of `count` consecutive entries starting at `start`,
/// each a fresh uniform draw within the entry's original bounds.
fn reroll_run(fci: &mut Fci, start: usize, count: usize, rng: &mut ChaCha8Rng) {
    let end = (start + count).min(fci.entries.len());
    for entry in &mut fci.entries[start..end] {
        entry.value = rng.random_range(entry.lo..=entry.hi);
    }
}

/// Random mutation: a uniformly chosen start entry and a geometric-length
/// run of value rerolls. An empty FCI is returned unchanged.
pub fn mutate_random(fci: &Fci, rng: &mut ChaCha8Rng) -> Fci {
    let mut out = fci.clone();
    if out.entries.is_empty() {
        return out;
    }
    let start = rng.random_range(0..out.entries.len());
    let len = geometric_run_length(rng);
    reroll_run(&mut out, start, len, rng);
    out
}

/// Sample a type with probability inversely proportional to its distance.
pub fn select_type(
    distances: &DistanceMap,
    rng: &mut ChaCha8Rng,
) -> Result<String, MutationError> {
    let entries = distances.entries();
    if entries.is_empty() {
        return Err(MutationError::EmptyDistanceMap);
    }
    let weights: Vec<f64> = entries.iter().map(|(_, d)| 1.0 / d).collect();
    let total: f64 = weights.iter().sum();
    let mut pick = rng.random_range(0.0..total);
    for ((name, _), w) in entries.iter().zip(&weights) {
        if pick < *w {
            return Ok(name.clone());
        }
        pick -= w;
    }
    Ok(entries.last().expect("non-empty").0.clone())
}

/// Type-based targeted mutation: select a type, match it against entry
/// type stacks, then either reroll a run starting at a random matching
/// entry (hit; distance shrinks) or leave the FCI untouched (miss;
/// distance grows).
pub fn mutate_targeted(
    fci: &Fci,
    distances: &DistanceMap,
    rng: &mut ChaCha8Rng,
) -> Result<MutationOutcome, MutationError> {
    let selected = select_type(distances, rng)?;
    let matches: Vec<usize> = fci
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.types.contains(&selected))
        .map(|(i, _)| i)
        .collect();

    let mut new_distances = distances.clone();
    let current = distances.get(&selected).expect("selected type is in the map");

    if matches.is_empty() {
        new_distances.set(&selected, current * MISS_FACTOR);
        return Ok(MutationOutcome {
            fci: fci.clone(),
            distances: new_distances,
            kind: MutationKind::TargetedMiss(selected),
        });
    }

    new_distances.set(&selected, current * HIT_FACTOR);
    let start = matches[rng.random_range(0..matches.len())];
    let len = geometric_run_length(rng);
    let mut out = fci.clone();
    reroll_run(&mut out, start, len, rng);
    Ok(MutationOutcome {
        fci: out,
        distances: new_distances,
        kind: MutationKind::TargetedHit(selected),
    })
}

/// Mode dispatch: baseline and str-opt always mutate randomly; spoton flips
/// a fair coin between random and targeted, degrading to random when there
/// is nothing left to target. The distance map is untouched on every random
/// path.
pub fn mutate(
    fci: &Fci,
    uncovered: &BTreeSet<CodeTarget>,
    distances: &DistanceMap,
    rng: &mut ChaCha8Rng,
    mode: Mode,
) -> MutationOutcome {
    let random = |rng: &mut ChaCha8Rng| MutationOutcome {
        fci: mutate_random(fci, rng),
        distances: distances.clone(),
        kind: MutationKind::Random,
    };
    match mode {
        Mode::Baseline | Mode::StrOpt => random(rng),
        Mode::SpotOn => {
            if uncovered.is_empty() || distances.is_empty() {
                return random(rng);
            }
            if rng.random_bool(0.5) {
                random(rng)
            } else {
                mutate_targeted(fci, distances, rng)
                    .expect("distance map checked non-empty above")
            }
        }
    }
}
