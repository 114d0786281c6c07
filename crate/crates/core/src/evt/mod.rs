//! Rarity scoring of templates from their occurrence counts.
//!
//! Counts of the most recently seen templates live in an LRU-bounded list.
//! A GEV distribution is fitted to the negated counts and each template is
//! scored by its tail probability, sharpened by a temperature and normalized
//! to sum to one.

mod gev;

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::Arc;

use lru::LruCache;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gev::{
    fit_gev, fit_gev_maxima, gev_tail, gumbel_moments, ln_gev_tail, printed_form, FitError,
    FitMethod, GevFit, GevParams,
};

use crate::trie::ClusterId;

#[derive(Debug, Error, PartialEq)]
#[error("invalid detector config: {0}")]
pub struct DetectorConfigError(pub String);

/// Which function of the fitted parameters scores a count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailForm {
    /// Standard CDF of the negated count.
    #[default]
    Cdf,
    /// The bracketed power term divided by sigma, without the outer
    /// exponential.
    PrintedDensity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub temperature: f64,
    pub lru_capacity: usize,
    pub min_fit_size: usize,
    pub tail_form: TailForm,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            temperature: 10.0,
            lru_capacity: 256,
            min_fit_size: 8,
            tail_form: TailForm::Cdf,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorConfigError> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(DetectorConfigError("temperature must be positive".into()));
        }
        if self.lru_capacity == 0 {
            return Err(DetectorConfigError("lru_capacity must be positive".into()));
        }
        if self.min_fit_size == 0 {
            return Err(DetectorConfigError("min_fit_size must be positive".into()));
        }
        Ok(())
    }
}

/// LRU-ordered `(cluster, count)` entries, at most `capacity` long.
#[derive(Debug)]
pub struct CountList {
    entries: LruCache<ClusterId, u64>,
}

impl CountList {
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: LruCache::new(NonZeroUsize::new(capacity.max(1)).expect("nonzero")),
        }
    }

    /// Moves or inserts `id` at the front with `count`; evicts the back entry
    /// when full. Returns the evicted id.
    pub fn touch(&mut self, id: ClusterId, count: u64) -> Option<ClusterId> {
        match self.entries.push(id, count) {
            Some((old, _)) if old != id => Some(old),
            _ => None,
        }
    }

    pub fn remove(&mut self, id: ClusterId) -> Option<u64> {
        self.entries.pop(&id)
    }

    pub fn get(&self, id: ClusterId) -> Option<u64> {
        self.entries.peek(&id).copied()
    }

    /// Entries from most to least recently used.
    pub fn iter(&self) -> impl Iterator<Item = (ClusterId, u64)> + '_ {
        self.entries.iter().map(|(&id, &c)| (id, c))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.entries.cap().get()
    }
}

/// How a batch of scores was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreBasis {
    Fitted(GevFit),
    /// Fewer entries than `min_fit_size`: reciprocal rank of the count.
    RankFallback,
    /// All counts equal.
    Uniform,
}

/// Normalized rarity scores for the entries of a count list.
#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    tp: HashMap<ClusterId, f64>,
    basis: ScoreBasis,
}

impl Scores {
    /// Score of `id`; zero for clusters outside the count list.
    pub fn get(&self, id: ClusterId) -> f64 {
        self.tp.get(&id).copied().unwrap_or(0.0)
    }

    pub fn basis(&self) -> ScoreBasis {
        self.basis
    }

    pub fn len(&self) -> usize {
        self.tp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tp.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClusterId, f64)> + '_ {
        self.tp.iter().map(|(&k, &v)| (k, v))
    }

    pub fn argmax(&self) -> Option<ClusterId> {
        self.tp
            .iter()
            .max_by(|a, b| a.1.total_cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(&id, _)| id)
    }
}

/// Competition ranks of counts ascending: the rarest count has rank 1 and
/// equal counts share the lowest rank.
fn competition_ranks(counts: &[u64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by_key(|&i| counts[i]);
    let mut ranks = vec![0; counts.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = if pos > 0 && counts[order[pos - 1]] == counts[i] {
            ranks[order[pos - 1]]
        } else {
            pos + 1
        };
    }
    ranks
}

/// Scores each entry as `f(x)^tau / sum_j f(x_j)^tau`, computed in log space.
pub fn score_counts(entries: &[(ClusterId, u64)], cfg: &DetectorConfig) -> Scores {
    let counts: Vec<u64> = entries.iter().map(|e| e.1).collect();
    let values: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let (ln_f, basis): (Vec<f64>, ScoreBasis) = match fit_gev(&values, cfg.min_fit_size) {
        Ok(fit) => {
            let ln_f = values
                .iter()
                .map(|&x| match cfg.tail_form {
                    TailForm::Cdf => ln_gev_tail(x, &fit.params),
                    TailForm::PrintedDensity => printed_form(x, &fit.params).ln(),
                })
                .collect();
            (ln_f, ScoreBasis::Fitted(fit))
        }
        Err(FitError::DegenerateCounts) => (vec![0.0; values.len()], ScoreBasis::Uniform),
        Err(FitError::InsufficientData { .. }) => {
            let ranks = competition_ranks(&counts);
            let ln_f = ranks.iter().map(|&r| -(r as f64).ln()).collect();
            let basis = if counts.iter().all(|&c| c == counts[0]) {
                ScoreBasis::Uniform
            } else {
                ScoreBasis::RankFallback
            };
            (ln_f, basis)
        }
    };
    let weights = softmax(&ln_f, cfg.temperature);
    Scores {
        tp: entries.iter().map(|e| e.0).zip(weights).collect(),
        basis,
    }
}

/// `exp(tau * l_i) / sum_j exp(tau * l_j)`; uniform when every `l_i` is
/// negative infinity.
fn softmax(ln_f: &[f64], tau: f64) -> Vec<f64> {
    let max = ln_f
        .iter()
        .copied()
        .filter(|v| !v.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if ln_f.is_empty() {
        return Vec::new();
    }
    if max == f64::NEG_INFINITY || max.is_nan() {
        return vec![1.0 / ln_f.len() as f64; ln_f.len()];
    }
    let w: Vec<f64> = ln_f
        .iter()
        .map(|&l| if l.is_nan() { 0.0 } else { (tau * (l - max)).exp() })
        .collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Count list plus a lazily refreshed score table.
#[derive(Debug)]
pub struct EvtDetector {
    cfg: DetectorConfig,
    list: CountList,
    dirty: bool,
    cached: Arc<Scores>,
    fits: u64,
}

impl EvtDetector {
    pub fn new(cfg: DetectorConfig) -> Result<Self, DetectorConfigError> {
        cfg.validate()?;
        let list = CountList::new(cfg.lru_capacity);
        Ok(Self {
            cfg,
            list,
            dirty: false,
            cached: Arc::new(Scores {
                tp: HashMap::new(),
                basis: ScoreBasis::Uniform,
            }),
            fits: 0,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    pub fn touch(&mut self, id: ClusterId, count: u64) {
        self.list.touch(id, count);
        self.dirty = true;
    }

    /// Replaces a merged-away cluster by its survivor.
    pub fn remap(&mut self, gone: ClusterId, survivor: ClusterId, survivor_count: u64) {
        if self.list.remove(gone).is_some() || self.list.get(survivor).is_some() {
            self.list.touch(survivor, survivor_count);
            self.dirty = true;
        }
    }

    /// Current scores; refitted only if the list changed since the last call.
    pub fn scores(&mut self) -> Arc<Scores> {
        if self.dirty {
            let entries: Vec<(ClusterId, u64)> = self.list.iter().collect();
            self.cached = Arc::new(score_counts(&entries, &self.cfg));
            self.dirty = false;
            self.fits += 1;
        }
        Arc::clone(&self.cached)
    }

    pub fn count_list(&self) -> &CountList {
        &self.list
    }

    /// Refits performed so far.
    pub fn fits(&self) -> u64 {
        self.fits
    }

    /// Entries held by the detector: the count list plus the score table.
    pub fn state_entries(&self) -> usize {
        self.list.len() + self.cached.len()
    }
}
