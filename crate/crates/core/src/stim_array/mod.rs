//! Stimulus presentation orderings.
//!
//! Every ordering is a pure function of its inputs and a 64-bit seed; see
//! [`rng`] for the generator contract.

pub mod rng;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spec::StimulusEntry;
use rng::derive_seed;
pub use rng::SeededRng;

/// Constrained shuffles give up after this many seeded attempts.
pub const MAX_CONSTRAINT_ATTEMPTS: u64 = 10_000;

/// Stimulus attribute used for blocking and adjacency constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StimField {
    StimType,
    Condition,
}

impl StimField {
    pub fn value_of<'a>(&self, entry: &'a StimulusEntry) -> &'a str {
        match self {
            StimField::StimType => &entry.stim_type,
            StimField::Condition => &entry.condition,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            StimField::StimType => "stim_type",
            StimField::Condition => "condition",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "stim_type" => Some(StimField::StimType),
            "condition" => Some(StimField::Condition),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RandomizationScheme {
    #[default]
    FixedOrder,
    FullShuffle,
    BlockedShuffle {
        block_field: StimField,
        shuffle_within: bool,
        shuffle_blocks: bool,
        no_adjacent_repeat_field: Option<StimField>,
    },
    /// `weights` line up with the candidate pool: the non-baseline stimuli
    /// in declaration order.
    ProbabilitySelect {
        weights: Vec<f64>,
        draws: usize,
        replacement: bool,
    },
    AllPairs {
        ordered: bool,
    },
}

impl RandomizationScheme {
    pub fn name(&self) -> &'static str {
        match self {
            RandomizationScheme::FixedOrder => "fixed-order",
            RandomizationScheme::FullShuffle => "full-shuffle",
            RandomizationScheme::BlockedShuffle { .. } => "blocked-shuffle",
            RandomizationScheme::ProbabilitySelect { .. } => "probability-select",
            RandomizationScheme::AllPairs { .. } => "all-pairs",
        }
    }

    pub fn produces_pairs(&self) -> bool {
        matches!(self, RandomizationScheme::AllPairs { .. })
    }
}

/// One entry of a stimulus array. Indices refer to the spec's stimulus list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrialItem {
    Single(usize),
    Pair(usize, usize),
}

impl TrialItem {
    pub fn indices(&self) -> Vec<usize> {
        match *self {
            TrialItem::Single(i) => vec![i],
            TrialItem::Pair(a, b) => vec![a, b],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimulusArray {
    pub items: Vec<TrialItem>,
    pub seed: u64,
}

impl StimulusArray {
    pub fn singles(indices: &[usize], seed: u64) -> Self {
        Self {
            items: indices.iter().copied().map(TrialItem::Single).collect(),
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Flattened stimulus indices, pairs expanded in presentation order.
    pub fn flat_indices(&self) -> Vec<usize> {
        self.items.iter().flat_map(TrialItem::indices).collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArrayError {
    #[error("scheme incompatible with stimulus set: {0}")]
    SchemeIncompatible(String),
    #[error("no ordering satisfies the adjacency constraint on {field} after {attempts} attempts")]
    InfeasibleConstraint { field: &'static str, attempts: u64 },
    #[error("all selection weights are zero")]
    AllZeroWeights,
    #[error("selection weight {index} is negative or not finite")]
    InvalidWeight { index: usize },
    #[error("no baseline stimulus to interleave")]
    NoBaselineStimulus,
}

/// Uniform permutation of `0..n` under the seeded generator.
pub fn full_shuffle(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut order);
    order
}

/// Weighted draws. With replacement each draw follows the normalised
/// weights; without, a chosen index is removed before the next draw.
pub fn probability_select(
    weights: &[f64],
    draws: usize,
    replacement: bool,
    seed: u64,
) -> Result<Vec<usize>, ArrayError> {
    select_with(weights, draws, replacement, &mut SeededRng::new(seed))
}

fn select_with(
    weights: &[f64],
    draws: usize,
    replacement: bool,
    rng: &mut SeededRng,
) -> Result<Vec<usize>, ArrayError> {
    if let Some(index) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
        return Err(ArrayError::InvalidWeight { index });
    }
    let mut live = weights.to_vec();
    let mut out = Vec::with_capacity(draws);
    for _ in 0..draws {
        let total: f64 = live.iter().sum();
        if total <= 0.0 {
            return Err(ArrayError::AllZeroWeights);
        }
        let target = rng.next_f64() * total;
        let mut acc = 0.0;
        // Fall back to the last positive weight if rounding leaves target
        // past the accumulated sum.
        let mut chosen = live.iter().rposition(|w| *w > 0.0).unwrap_or(0);
        for (i, w) in live.iter().enumerate() {
            if *w <= 0.0 {
                continue;
            }
            acc += w;
            if target < acc {
                chosen = i;
                break;
            }
        }
        out.push(chosen);
        if !replacement {
            live[chosen] = 0.0;
        }
    }
    Ok(out)
}

/// Places `baseline` before every item: `[b, a0, b, a1, ...]`.
pub fn interleave_baseline(
    array: &StimulusArray,
    baseline: Option<usize>,
) -> Result<StimulusArray, ArrayError> {
    let baseline = baseline.ok_or(ArrayError::NoBaselineStimulus)?;
    let mut items = Vec::with_capacity(array.items.len() * 2);
    for item in &array.items {
        if let TrialItem::Pair(..) = item {
            return Err(ArrayError::SchemeIncompatible(
                "baseline interleaving applies to single-stimulus trials".into(),
            ));
        }
        items.push(TrialItem::Single(baseline));
        items.push(*item);
    }
    Ok(StimulusArray {
        items,
        seed: array.seed,
    })
}

/// Builds the presentation order for a session.
///
/// Baseline-flagged stimuli never enter the candidate pool. Each repetition
/// is an independent draw seeded by `derive_seed(seed, rep)`.
pub fn build_array(
    scheme: &RandomizationScheme,
    stimuli: &[StimulusEntry],
    repetitions: u32,
    seed: u64,
) -> Result<StimulusArray, ArrayError> {
    let pool: Vec<usize> = stimuli
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.baseline)
        .map(|(i, _)| i)
        .collect();
    if pool.is_empty() {
        return Err(ArrayError::SchemeIncompatible(
            "no non-baseline stimuli to order".into(),
        ));
    }
    check_scheme(scheme, pool.len())?;

    let mut items: Vec<TrialItem> = Vec::new();
    for rep in 0..u64::from(repetitions) {
        let rep_seed = derive_seed(seed, rep);
        let draw = match scheme {
            RandomizationScheme::BlockedShuffle {
                no_adjacent_repeat_field: Some(field),
                ..
            } => {
                let prev = items.last().copied();
                constrained_draw(scheme, stimuli, &pool, rep_seed, *field, prev)?
            }
            _ => draw_once(scheme, stimuli, &pool, &mut SeededRng::new(rep_seed))?,
        };
        items.extend(draw);
    }
    Ok(StimulusArray { items, seed })
}

fn check_scheme(scheme: &RandomizationScheme, pool_len: usize) -> Result<(), ArrayError> {
    match scheme {
        RandomizationScheme::AllPairs { .. } if pool_len < 2 => Err(
            ArrayError::SchemeIncompatible("pairs need at least 2 stimuli".into()),
        ),
        RandomizationScheme::ProbabilitySelect { weights, .. } if weights.len() != pool_len => {
            Err(ArrayError::SchemeIncompatible(format!(
                "{} weights for {} candidate stimuli",
                weights.len(),
                pool_len
            )))
        }
        RandomizationScheme::ProbabilitySelect {
            draws,
            replacement: false,
            ..
        } if *draws > pool_len => Err(ArrayError::SchemeIncompatible(format!(
            "{draws} draws without replacement from {pool_len} stimuli"
        ))),
        _ => Ok(()),
    }
}

fn constrained_draw(
    scheme: &RandomizationScheme,
    stimuli: &[StimulusEntry],
    pool: &[usize],
    rep_seed: u64,
    field: StimField,
    prev: Option<TrialItem>,
) -> Result<Vec<TrialItem>, ArrayError> {
    let key = |item: &TrialItem| match item {
        TrialItem::Single(i) => Some(field.value_of(&stimuli[*i])),
        TrialItem::Pair(..) => None,
    };
    for attempt in 0..MAX_CONSTRAINT_ATTEMPTS {
        let mut rng = SeededRng::new(derive_seed(rep_seed, attempt));
        let draw = draw_once(scheme, stimuli, pool, &mut rng)?;
        let joined_ok = match (prev.as_ref(), draw.first()) {
            (Some(p), Some(f)) => key(p) != key(f),
            _ => true,
        };
        if joined_ok && draw.windows(2).all(|w| key(&w[0]) != key(&w[1])) {
            return Ok(draw);
        }
    }
    Err(ArrayError::InfeasibleConstraint {
        field: field.as_str(),
        attempts: MAX_CONSTRAINT_ATTEMPTS,
    })
}

fn draw_once(
    scheme: &RandomizationScheme,
    stimuli: &[StimulusEntry],
    pool: &[usize],
    rng: &mut SeededRng,
) -> Result<Vec<TrialItem>, ArrayError> {
    let items = match scheme {
        RandomizationScheme::FixedOrder => pool.iter().map(|&i| TrialItem::Single(i)).collect(),
        RandomizationScheme::FullShuffle => {
            let mut order = pool.to_vec();
            rng.shuffle(&mut order);
            order.into_iter().map(TrialItem::Single).collect()
        }
        RandomizationScheme::BlockedShuffle {
            block_field,
            shuffle_within,
            shuffle_blocks,
            ..
        } => {
            // Blocks keep first-appearance order unless shuffled.
            let mut blocks: Vec<(&str, Vec<usize>)> = Vec::new();
            for &i in pool {
                let value = block_field.value_of(&stimuli[i]);
                match blocks.iter_mut().find(|(v, _)| *v == value) {
                    Some((_, members)) => members.push(i),
                    None => blocks.push((value, vec![i])),
                }
            }
            if *shuffle_blocks {
                rng.shuffle(&mut blocks);
            }
            let mut order = Vec::with_capacity(pool.len());
            for (_, mut members) in blocks {
                if *shuffle_within {
                    rng.shuffle(&mut members);
                }
                order.extend(members);
            }
            order.into_iter().map(TrialItem::Single).collect()
        }
        RandomizationScheme::ProbabilitySelect {
            weights,
            draws,
            replacement,
        } => select_with(weights, *draws, *replacement, rng)?
            .into_iter()
            .map(|k| TrialItem::Single(pool[k]))
            .collect(),
        RandomizationScheme::AllPairs { ordered } => {
            let mut pairs = Vec::new();
            for (x, &a) in pool.iter().enumerate() {
                for (y, &b) in pool.iter().enumerate() {
                    if x == y || (!ordered && y < x) {
                        continue;
                    }
                    pairs.push((a, b));
                }
            }
            rng.shuffle(&mut pairs);
            pairs
                .into_iter()
                .map(|(a, b)| {
                    // Unordered pairs get a random presentation position.
                    if !ordered && rng.flip() {
                        TrialItem::Pair(b, a)
                    } else {
                        TrialItem::Pair(a, b)
                    }
                })
                .collect()
        }
    };
    Ok(items)
}
