use std::cmp::Ordering;

use super::space::GovernanceEvaluation;
use super::GovError;

/// `a` dominates `b`: at least as good in every objective and better in one.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y)
}

/// Objective vectors of the evaluations, one column per selected controller.
pub fn objective_matrix(
    evaluations: &[GovernanceEvaluation],
    objectives: &[String],
) -> Result<Vec<Vec<f64>>, GovError> {
    evaluations
        .iter()
        .map(|e| {
            objectives
                .iter()
                .map(|id| {
                    let v = e.utility_of(id).ok_or_else(|| {
                        GovError::Invalid(format!("objective {id} is not among the evaluated controllers"))
                    })?;
                    if v.is_nan() {
                        return Err(GovError::Domain(format!("objective {id} is NaN")));
                    }
                    Ok(v)
                })
                .collect()
        })
        .collect()
}

/// Indices (into `evaluations`) of the non-dominated set, in canonical
/// configuration order. Among points with identical objective vectors only the
/// canonically first survives.
pub fn pareto_indices(evaluations: &[GovernanceEvaluation], objectives: &[String]) -> Result<Vec<usize>, GovError> {
    if objectives.is_empty() {
        return Err(GovError::Invalid("pareto front needs at least one objective".into()));
    }
    let points = objective_matrix(evaluations, objectives)?;

    // Descending lexicographic order: a dominator always precedes what it dominates,
    // and equal points sit next to each other, canonically first leading.
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[b]
            .iter()
            .zip(&points[a])
            .map(|(x, y)| x.partial_cmp(y).expect("objectives are not NaN"))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
            .then_with(|| evaluations[a].configuration.canonical_cmp(&evaluations[b].configuration))
    });

    // A point dominated by anything is dominated by some front member (transitivity),
    // so comparing against the front alone suffices.
    let mut front: Vec<usize> = Vec::new();
    for &i in &order {
        let dominated_or_duplicate = front.iter().any(|&f| points[f] == points[i] || dominates(&points[f], &points[i]));
        if !dominated_or_duplicate {
            front.push(i);
        }
    }
    front.sort_by(|&a, &b| evaluations[a].configuration.canonical_cmp(&evaluations[b].configuration));
    Ok(front)
}

/// The non-dominated subset of `evaluations` in the selected objectives.
pub fn pareto_front(
    evaluations: &[GovernanceEvaluation],
    objectives: &[String],
) -> Result<Vec<GovernanceEvaluation>, GovError> {
    Ok(pareto_indices(evaluations, objectives)?.into_iter().map(|i| evaluations[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::{Configuration, UtilityValue};
    use crate::governance::space::ConfigurationVector;

    fn point(idx: usize, xs: &[f64]) -> GovernanceEvaluation {
        GovernanceEvaluation {
            configuration: ConfigurationVector { indices: vec![idx], entries: vec![] },
            utilities: xs
                .iter()
                .enumerate()
                .map(|(k, &v)| UtilityValue {
                    controller: format!("o{k}"),
                    value: v,
                    configuration: Configuration::new(),
                })
                .collect(),
            global_utility: 0.0,
            tick: 0,
        }
    }

    fn objectives(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("o{i}")).collect()
    }

    #[test]
    fn small_front() {
        let pts = vec![point(0, &[1.0, 1.0]), point(1, &[2.0, 0.0]), point(2, &[0.0, 2.0]), point(3, &[1.0, 0.0])];
        assert_eq!(pareto_indices(&pts, &objectives(2)).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn single_point() {
        let pts = vec![point(0, &[3.0, -1.0])];
        assert_eq!(pareto_indices(&pts, &objectives(2)).unwrap(), vec![0]);
    }

    #[test]
    fn duplicates_keep_canonical_first() {
        let pts = vec![point(5, &[1.0, 1.0]), point(2, &[1.0, 1.0]), point(9, &[0.0, 3.0])];
        assert_eq!(pareto_indices(&pts, &objectives(2)).unwrap(), vec![1, 2]);
    }

    #[test]
    fn objective_subset_and_errors() {
        let pts = vec![point(0, &[1.0, 5.0]), point(1, &[2.0, 0.0])];
        assert_eq!(pareto_indices(&pts, &["o0".to_string()]).unwrap(), vec![1]);
        assert!(pareto_indices(&pts, &[]).is_err());
        assert!(pareto_indices(&pts, &["nope".to_string()]).is_err());
    }
}
