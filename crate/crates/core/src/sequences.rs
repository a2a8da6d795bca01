//! Index schedules over a family of `m` base points.
//!
//! Positions are 1-based: `index(1)` selects the first point of the stream.
//! Block kinds split the stream into consecutive blocks of length `m`
//! (or `k·m`) and reorder each block by its own permutation, so every block
//! holds each base index the same number of times.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    /// `0, 1, …, m−1, 0, 1, …`
    Cyclic,
    /// Each block of `m` is a permutation of `0..m`.
    BlockPermutation,
    /// Each block of `k·m` holds every index exactly `k` times.
    KBlockPermutation(usize),
    /// I.i.d. uniform indices.
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleSpec", into = "ScheduleSpec")]
pub struct Schedule {
    m: usize,
    kind: ScheduleKind,
    seed: u64,
    /// Used in order and then cycled; overrides the seed.
    explicit_permutations: Option<Vec<Vec<usize>>>,
}

/// Wire form, e.g. `{"kind":"block_perm","m":4,"seed":7}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutations: Option<Vec<Vec<usize>>>,
}

impl ScheduleSpec {
    /// Fills in `m` when the spec omits it; a conflicting value is an error.
    pub fn with_m(mut self, m: usize) -> Result<Self> {
        match self.m {
            Some(given) if given != m => Err(Error::InvalidArgument(format!(
                "schedule m = {given} does not match set size {m}"
            ))),
            _ => {
                self.m = Some(m);
                Ok(self)
            }
        }
    }
}

impl TryFrom<ScheduleSpec> for Schedule {
    type Error = Error;

    fn try_from(spec: ScheduleSpec) -> Result<Self> {
        let m = spec
            .m
            .ok_or_else(|| Error::Parse("schedule is missing \"m\"".into()))?;
        let kind = match (spec.kind.as_str(), spec.k) {
            ("cyclic", None) => ScheduleKind::Cyclic,
            ("block_perm", None) => ScheduleKind::BlockPermutation,
            ("k_block_perm", Some(k)) => ScheduleKind::KBlockPermutation(k),
            ("k_block_perm", None) => {
                return Err(Error::Parse("k_block_perm schedule is missing \"k\"".into()))
            }
            ("random", None) => ScheduleKind::Random,
            (other, Some(_)) if other != "k_block_perm" => {
                return Err(Error::Parse(format!("\"k\" is not valid for schedule kind {other:?}")))
            }
            (other, _) => return Err(Error::Parse(format!("unknown schedule kind {other:?}"))),
        };
        let mut schedule = Schedule::new(kind, m, spec.seed.unwrap_or(0))?;
        if let Some(perms) = spec.permutations {
            schedule = schedule.with_permutations(perms)?;
        }
        Ok(schedule)
    }
}

impl From<Schedule> for ScheduleSpec {
    fn from(s: Schedule) -> Self {
        let (kind, k) = match s.kind {
            ScheduleKind::Cyclic => ("cyclic", None),
            ScheduleKind::BlockPermutation => ("block_perm", None),
            ScheduleKind::KBlockPermutation(k) => ("k_block_perm", Some(k)),
            ScheduleKind::Random => ("random", None),
        };
        let seeded = matches!(
            s.kind,
            ScheduleKind::BlockPermutation | ScheduleKind::KBlockPermutation(_) | ScheduleKind::Random
        ) && s.explicit_permutations.is_none();
        ScheduleSpec {
            kind: kind.to_string(),
            m: Some(s.m),
            k,
            seed: seeded.then_some(s.seed),
            permutations: s.explicit_permutations,
        }
    }
}

/// Errors unless `perm` is a bijection on `0..len`.
pub fn check_permutation(perm: &[usize], len: usize) -> Result<()> {
    if perm.len() != len {
        return Err(Error::InvalidPermutation(format!(
            "expected {len} entries, found {}",
            perm.len()
        )));
    }
    let mut seen = vec![false; len];
    for &p in perm {
        if p >= len || std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidPermutation(format!(
                "{perm:?} is not a permutation of 0..{len}"
            )));
        }
    }
    Ok(())
}

impl Schedule {
    pub fn new(kind: ScheduleKind, m: usize, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("schedule needs m >= 1".into()));
        }
        if kind == ScheduleKind::KBlockPermutation(0) {
            return Err(Error::InvalidArgument("k-block schedule needs k >= 1".into()));
        }
        Ok(Schedule {
            m,
            kind,
            seed,
            explicit_permutations: None,
        })
    }

    pub fn cyclic(m: usize) -> Result<Self> {
        Self::new(ScheduleKind::Cyclic, m, 0)
    }

    /// Replaces the seeded permutations with an explicit list, cycled when
    /// the stream outruns it. Only block kinds accept permutations.
    pub fn with_permutations(mut self, perms: Vec<Vec<usize>>) -> Result<Self> {
        let len = match self.kind {
            ScheduleKind::BlockPermutation | ScheduleKind::KBlockPermutation(_) => self.block_len(),
            _ => {
                return Err(Error::InvalidArgument(
                    "explicit permutations need a block schedule".into(),
                ))
            }
        };
        if perms.is_empty() {
            return Err(Error::InvalidPermutation("empty permutation list".into()));
        }
        for p in &perms {
            check_permutation(p, len)?;
        }
        self.explicit_permutations = Some(perms);
        Ok(self)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Positions per block: `k·m` for k-block schedules, `m` otherwise.
    pub fn block_len(&self) -> usize {
        match self.kind {
            ScheduleKind::KBlockPermutation(k) => k * self.m,
            _ => self.m,
        }
    }

    /// Whether every block is guaranteed to contain each index equally often.
    pub fn has_block_property(&self) -> bool {
        !matches!(self.kind, ScheduleKind::Random)
    }

    /// Permutation of `0..block_len` used for 0-based block `block`.
    fn block_permutation(&self, block: u64) -> Vec<usize> {
        let len = self.block_len();
        if let Some(perms) = &self.explicit_permutations {
            return perms[(block % perms.len() as u64) as usize].clone();
        }
        let mut perm: Vec<usize> = (0..len).collect();
        if self.kind == ScheduleKind::Cyclic {
            return perm;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(block);
        for i in (1..len).rev() {
            let j = rng.random_range(0..=i as u64) as usize;
            perm.swap(i, j);
        }
        perm
    }

    fn random_index(&self, n: u64) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(n);
        rng.random_range(0..self.m as u64) as usize
    }

    /// Base index selected at 1-based position `n`.
    pub fn index(&self, n: u64) -> Result<usize> {
        if n == 0 {
            return Err(Error::InvalidArgument("positions start at 1".into()));
        }
        if self.kind == ScheduleKind::Random {
            return Ok(self.random_index(n));
        }
        let len = self.block_len() as u64;
        let block = (n - 1) / len;
        let pos = ((n - 1) % len) as usize;
        Ok(self.block_permutation(block)[pos] % self.m)
    }

    /// Indices for positions `1, 2, …`.
    pub fn iter(&self) -> ScheduleIter<'_> {
        ScheduleIter {
            schedule: self,
            n: 0,
            block: None,
        }
    }

    /// The first `n` points of the scheduled stream over `points`.
    pub fn materialize<'a, P>(&'a self, points: &'a [P], n: usize) -> Result<impl Iterator<Item = &'a P> + 'a> {
        if points.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                found: points.len(),
            });
        }
        Ok(self.iter().take(n).map(move |i| &points[i]))
    }
}

/// Streaming iterator over schedule indices; caches the current block.
pub struct ScheduleIter<'a> {
    schedule: &'a Schedule,
    n: u64,
    block: Option<(u64, Vec<usize>)>,
}

impl Iterator for ScheduleIter<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        self.n += 1;
        let s = self.schedule;
        if s.kind == ScheduleKind::Random {
            return Some(s.random_index(self.n));
        }
        let len = s.block_len() as u64;
        let block = (self.n - 1) / len;
        let pos = ((self.n - 1) % len) as usize;
        if self.block.as_ref().map(|(b, _)| *b) != Some(block) {
            self.block = Some((block, s.block_permutation(block)));
        }
        let perm = &self.block.as_ref().expect("block cached").1;
        Some(perm[pos] % s.m)
    }
}
