//! Combinatorial search over the joint configuration space.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controllers::{evaluate_utility, Metrics, UtilityValue};

use super::aggregate::{aggregate, GlobalUtilitySpec};
use super::space::{ConfigurationVector, GovernanceEvaluation, JointSpace};
use super::GovError;

/// Largest joint space exhaustive search will enumerate by default.
pub const DEFAULT_EXHAUSTIVE_BUDGET: u64 = 1_000_000;
/// Joint spaces up to this size are searched exhaustively by [`Strategy::Auto`].
pub const AUTO_EXHAUSTIVE_LIMIT: u128 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[derive(Default)]
pub enum Strategy {
    Exhaustive {
        #[serde(default = "default_budget")]
        budget: u64,
    },
    CoordinateDescent,
    HillClimb {
        restarts: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Exhaustive up to [`AUTO_EXHAUSTIVE_LIMIT`] points, coordinate descent beyond.
    #[default]
    Auto,
}

fn default_budget() -> u64 {
    DEFAULT_EXHAUSTIVE_BUDGET
}

impl Strategy {
    pub fn exhaustive() -> Self {
        Strategy::Exhaustive { budget: DEFAULT_EXHAUSTIVE_BUDGET }
    }
}

/// Produces per-controller utilities for a configuration vector.
pub trait Evaluator {
    fn utilities(&mut self, space: &JointSpace, vector: &ConfigurationVector) -> Result<Vec<UtilityValue>, GovError>;
}

impl<F> Evaluator for F
where
    F: FnMut(&JointSpace, &ConfigurationVector) -> Result<Vec<UtilityValue>, GovError>,
{
    fn utilities(&mut self, space: &JointSpace, vector: &ConfigurationVector) -> Result<Vec<UtilityValue>, GovError> {
        self(space, vector)
    }
}

/// Evaluates every controller against one fixed set of metrics.
#[derive(Debug, Clone, Copy)]
pub struct StaticEvaluator {
    pub metrics: Metrics,
}

impl Evaluator for StaticEvaluator {
    fn utilities(&mut self, space: &JointSpace, vector: &ConfigurationVector) -> Result<Vec<UtilityValue>, GovError> {
        space
            .controllers()
            .iter()
            .map(|c| {
                let cfg = space.effective(vector, &c.id).expect("vector covers every controller");
                let mut value = evaluate_utility(c, &self.metrics, cfg)?;
                value.configuration = vector.get(&c.id).cloned().unwrap_or_default();
                Ok(value)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: GovernanceEvaluation,
    pub incumbent: GovernanceEvaluation,
    /// Distinct configuration vectors evaluated.
    pub examined: usize,
    /// Full sweeps over the coordinates (coordinate descent); 1 otherwise.
    pub passes: usize,
}

struct Scorer<'a, E> {
    space: &'a JointSpace,
    evaluator: &'a mut E,
    spec: &'a GlobalUtilitySpec,
    tick: u64,
    memo: HashMap<Vec<usize>, f64>,
}

impl<E: Evaluator> Scorer<'_, E> {
    fn evaluate(&mut self, indices: &[usize]) -> Result<GovernanceEvaluation, GovError> {
        let vector = self.space.vector(indices);
        let utilities = self.evaluator.utilities(self.space, &vector)?;
        if utilities.len() != self.space.controllers().len() {
            return Err(GovError::Invalid(format!(
                "evaluator returned {} utilities for {} controllers",
                utilities.len(),
                self.space.controllers().len()
            )));
        }
        let global_utility = aggregate(utilities.iter().map(|u| (u.controller.as_str(), u.value)), self.spec)?;
        if global_utility.is_nan() {
            return Err(GovError::Domain(format!("global utility is NaN at {}", vector.to_json())));
        }
        self.memo.insert(indices.to_vec(), global_utility);
        Ok(GovernanceEvaluation { configuration: vector, utilities, global_utility, tick: self.tick })
    }

    fn score(&mut self, indices: &[usize]) -> Result<f64, GovError> {
        if let Some(&g) = self.memo.get(indices) {
            return Ok(g);
        }
        Ok(self.evaluate(indices)?.global_utility)
    }

    /// Steepest ascent over single-component changes, ties to the canonically first.
    fn climb(&mut self, start: Vec<usize>) -> Result<(Vec<usize>, f64), GovError> {
        let dims = self.space.dims();
        let mut current = start;
        let mut current_g = self.score(&current)?;
        loop {
            let mut best: Option<(Vec<usize>, f64)> = None;
            for pos in 0..dims.len() {
                for i in 0..dims[pos] {
                    if i == current[pos] {
                        continue;
                    }
                    let mut cand = current.clone();
                    cand[pos] = i;
                    let g = self.score(&cand)?;
                    let better = match &best {
                        None => true,
                        Some((b, bg)) => g > *bg || (g == *bg && cand < *b),
                    };
                    if better {
                        best = Some((cand, g));
                    }
                }
            }
            match best {
                Some((cand, g)) if g > current_g => {
                    current = cand;
                    current_g = g;
                }
                _ => return Ok((current, current_g)),
            }
        }
    }
}

/// Evaluates every point of the joint space, in canonical order.
pub fn evaluate_space<E: Evaluator>(
    space: &JointSpace,
    evaluator: &mut E,
    spec: &GlobalUtilitySpec,
    budget: u64,
    tick: u64,
) -> Result<Vec<GovernanceEvaluation>, GovError> {
    spec.validate(space.controllers().iter().map(|c| c.id.as_str()))?;
    if space.size() > u128::from(budget) {
        return Err(GovError::Budget { size: space.size(), budget });
    }
    let mut scorer = Scorer { space, evaluator, spec, tick, memo: HashMap::new() };
    space.enumerate().map(|indices| scorer.evaluate(&indices)).collect()
}

/// Searches the joint space for the configuration vector maximizing the
/// global utility. The result is never worse than `incumbent` (index vector;
/// defaults to the canonically first configuration).
pub fn search<E: Evaluator>(
    space: &JointSpace,
    evaluator: &mut E,
    spec: &GlobalUtilitySpec,
    strategy: Strategy,
    incumbent: Option<&[usize]>,
    tick: u64,
) -> Result<SearchOutcome, GovError> {
    spec.validate(space.controllers().iter().map(|c| c.id.as_str()))?;
    let dims = space.dims();
    if dims.contains(&0) {
        return Err(GovError::Invalid("a controller has an empty configuration space".into()));
    }
    let start: Vec<usize> = match incumbent {
        Some(v) if v.len() == dims.len() && v.iter().zip(&dims).all(|(i, d)| i < d) => v.to_vec(),
        Some(v) => return Err(GovError::Invalid(format!("incumbent {v:?} lies outside the joint space {dims:?}"))),
        None => vec![0; dims.len()],
    };
    let strategy = match strategy {
        Strategy::Auto if space.size() <= AUTO_EXHAUSTIVE_LIMIT => Strategy::exhaustive(),
        Strategy::Auto => Strategy::CoordinateDescent,
        other => other,
    };

    let mut scorer = Scorer { space, evaluator, spec, tick, memo: HashMap::new() };
    let incumbent_eval = scorer.evaluate(&start)?;

    let mut passes = 1;
    let best_indices = match strategy {
        Strategy::Exhaustive { budget } => {
            if space.size() > u128::from(budget) {
                return Err(GovError::Budget { size: space.size(), budget });
            }
            let mut best: Option<(Vec<usize>, f64)> = None;
            let mut examined = 0usize;
            for indices in space.enumerate() {
                // no memo: the full enumeration may be large
                let g = if indices == start {
                    incumbent_eval.global_utility
                } else {
                    scorer.evaluate(&indices)?.global_utility
                };
                scorer.memo.clear();
                examined += 1;
                if best.as_ref().is_none_or(|(_, bg)| g > *bg) {
                    best = Some((indices, g));
                }
            }
            let (indices, _) = best.expect("joint space is non-empty");
            let best_eval = if indices == start { incumbent_eval.clone() } else { scorer.evaluate(&indices)? };
            return Ok(SearchOutcome { best: best_eval, incumbent: incumbent_eval, examined, passes: 1 });
        }
        Strategy::CoordinateDescent => {
            let mut current = start.clone();
            let mut current_g = incumbent_eval.global_utility;
            passes = 0;
            loop {
                passes += 1;
                let mut improved = false;
                for pos in 0..dims.len() {
                    for i in 0..dims[pos] {
                        if i == current[pos] {
                            continue;
                        }
                        let mut cand = current.clone();
                        cand[pos] = i;
                        let g = scorer.score(&cand)?;
                        if g > current_g {
                            current = cand;
                            current_g = g;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    break current;
                }
            }
        }
        Strategy::HillClimb { restarts, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut starts = vec![start.clone()];
            for _ in 0..restarts {
                starts.push(dims.iter().map(|&d| rng.gen_range(0..d)).collect());
            }
            let mut best: Option<(Vec<usize>, f64)> = None;
            for s in starts {
                let (local, g) = scorer.climb(s)?;
                if best.as_ref().is_none_or(|(_, bg)| g > *bg) {
                    best = Some((local, g));
                }
            }
            best.expect("at least the incumbent start").0
        }
        Strategy::Auto => unreachable!("resolved above"),
    };
    let examined = scorer.memo.len();
    let best_eval = if best_indices == start { incumbent_eval.clone() } else { scorer.evaluate(&best_indices)? };
    Ok(SearchOutcome { best: best_eval, incumbent: incumbent_eval, examined, passes })
}
