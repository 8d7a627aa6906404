use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::GovError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    /// `Σ w_i · u_i`
    WeightedSum,
    /// `min_i u_i`
    Min,
    /// `Π (u_i + shift_i)`; every factor must be positive.
    ProductOfShifted,
}

/// The global utility functional and its SLA floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalUtilitySpec {
    pub aggregator: Aggregator,
    /// Per-controller weights; controllers without an entry weigh 1.
    #[serde(default)]
    pub weights: BTreeMap<String, f64>,
    /// Per-controller shifts for the product aggregator; missing entries are 0.
    #[serde(default)]
    pub shifts: BTreeMap<String, f64>,
    /// Floor on the global utility; `None` disables threshold triggers.
    #[serde(default)]
    pub threshold: Option<f64>,
}

impl GlobalUtilitySpec {
    pub fn weighted_sum() -> Self {
        GlobalUtilitySpec {
            aggregator: Aggregator::WeightedSum,
            weights: BTreeMap::new(),
            shifts: BTreeMap::new(),
            threshold: None,
        }
    }

    pub fn min() -> Self {
        GlobalUtilitySpec { aggregator: Aggregator::Min, ..Self::weighted_sum() }
    }

    pub fn product_of_shifted(shifts: BTreeMap<String, f64>) -> Self {
        GlobalUtilitySpec { aggregator: Aggregator::ProductOfShifted, shifts, ..Self::weighted_sum() }
    }

    pub fn with_weights<'a>(mut self, weights: impl IntoIterator<Item = (&'a str, f64)>) -> Self {
        self.weights = weights.into_iter().map(|(k, v)| (k.to_owned(), v)).collect();
        self
    }

    pub fn with_threshold(mut self, threshold: Option<f64>) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn weight(&self, id: &str) -> f64 {
        self.weights.get(id).copied().unwrap_or(1.0)
    }

    pub fn shift(&self, id: &str) -> f64 {
        self.shifts.get(id).copied().unwrap_or(0.0)
    }

    /// Checks the spec against the ids of the controllers it aggregates.
    pub fn validate<'a>(&self, ids: impl IntoIterator<Item = &'a str> + Clone) -> Result<(), GovError> {
        let known: Vec<&str> = ids.clone().into_iter().collect();
        for id in self.weights.keys().chain(self.shifts.keys()) {
            if !known.contains(&id.as_str()) {
                return Err(GovError::Invalid(format!("global utility references unknown controller {id}")));
            }
        }
        if let Some((id, w)) = self.weights.iter().find(|(_, w)| !(**w >= 0.0 && w.is_finite())) {
            return Err(GovError::Invalid(format!("weight of {id} must be non-negative, got {w}")));
        }
        if self.aggregator == Aggregator::WeightedSum && !known.iter().any(|id| self.weight(id) > 0.0) {
            return Err(GovError::Invalid("weighted sum needs at least one positive weight".into()));
        }
        if self.threshold.is_some_and(f64::is_nan) {
            return Err(GovError::Invalid("threshold must not be NaN".into()));
        }
        Ok(())
    }
}

/// `U_g = F(u_1, …, u_M)` over `(controller id, u_i)` pairs.
///
/// Terms are combined in controller-id order, so the result does not depend
/// on the order of `values`.
pub fn aggregate<'a>(
    values: impl IntoIterator<Item = (&'a str, f64)>,
    spec: &GlobalUtilitySpec,
) -> Result<f64, GovError> {
    let mut sorted: Vec<(&str, f64)> = values.into_iter().collect();
    if sorted.is_empty() {
        return Err(GovError::Invalid("no utility values to aggregate".into()));
    }
    sorted.sort_by(|a, b| a.0.cmp(b.0));
    match spec.aggregator {
        Aggregator::WeightedSum => Ok(sorted.iter().map(|&(id, u)| spec.weight(id) * u).sum()),
        Aggregator::Min => Ok(sorted.iter().map(|&(_, u)| u).fold(f64::INFINITY, f64::min)),
        Aggregator::ProductOfShifted => {
            let mut product = 1.0;
            for &(id, u) in &sorted {
                let factor = u + spec.shift(id);
                if !(factor > 0.0) {
                    return Err(GovError::Domain(format!(
                        "controller {id}: u + shift = {factor} must be positive for the product aggregator"
                    )));
                }
                product *= factor;
            }
            Ok(product)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_sum_and_min() {
        let ws = GlobalUtilitySpec::weighted_sum().with_weights([("a", 1.0), ("b", 1.0)]);
        assert_eq!(aggregate([("a", 3.0), ("b", -2.0)], &ws).unwrap(), 1.0);
        assert_eq!(aggregate([("a", 3.0), ("b", -2.0), ("c", 7.0)], &GlobalUtilitySpec::min()).unwrap(), -2.0);
        let ignore_b = GlobalUtilitySpec::weighted_sum().with_weights([("a", 1.0), ("b", 0.0)]);
        assert_eq!(aggregate([("a", 4.5), ("b", 1e9)], &ignore_b).unwrap(), 4.5);
    }

    #[test]
    fn order_independent() {
        let ws = GlobalUtilitySpec::weighted_sum().with_weights([("a", 0.1), ("b", 0.7), ("c", 0.3)]);
        let fwd = aggregate([("a", 1e16), ("b", 1.0), ("c", -1e16)], &ws).unwrap();
        let rev = aggregate([("c", -1e16), ("b", 1.0), ("a", 1e16)], &ws).unwrap();
        assert_eq!(fwd.to_bits(), rev.to_bits());
    }

    #[test]
    fn product_requires_positive_factors() {
        let mut shifts = BTreeMap::new();
        shifts.insert("a".to_owned(), 1.0);
        let spec = GlobalUtilitySpec::product_of_shifted(shifts);
        assert_eq!(aggregate([("a", 1.0), ("b", 3.0)], &spec).unwrap(), 6.0);
        assert!(matches!(aggregate([("a", -1.0), ("b", 3.0)], &spec), Err(GovError::Domain(_))));
    }

    #[test]
    fn validation() {
        let zero = GlobalUtilitySpec::weighted_sum().with_weights([("a", 0.0)]);
        assert!(zero.validate(["a"]).is_err());
        assert!(zero.validate(["a", "b"]).is_ok());
        let neg = GlobalUtilitySpec::weighted_sum().with_weights([("a", -1.0)]);
        assert!(neg.validate(["a"]).is_err());
        let unknown = GlobalUtilitySpec::weighted_sum().with_weights([("zz", 1.0)]);
        assert!(unknown.validate(["a"]).is_err());
    }
}
