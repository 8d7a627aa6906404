//! Utility-fair rate allocation.
//!
//! Maximizes `Σ_s U_s(x_s)` subject to `R·x ≤ c` with a projected dual
//! gradient on link prices. Each source answers the sum of the prices along
//! its route with the rate at which its marginal utility equals that sum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("invalid rate problem: {0}")]
    Invalid(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: u64, residual: f64 },
}

/// A source utility family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum UtilitySpec {
    /// `w · ln x`
    Log { weight: f64 },
    /// `w · x^(1-α) / (1-α)`
    AlphaFair { weight: f64, alpha: f64 },
}

impl UtilitySpec {
    pub fn log(weight: f64) -> Self {
        UtilitySpec::Log { weight }
    }

    pub fn alpha_fair(weight: f64, alpha: f64) -> Self {
        UtilitySpec::AlphaFair { weight, alpha }
    }

    pub fn weight(&self) -> f64 {
        match *self {
            UtilitySpec::Log { weight } | UtilitySpec::AlphaFair { weight, .. } => weight,
        }
    }

    /// Folds `alpha = 1` into the log family, whose limit it is.
    pub fn normalized(self) -> Self {
        match self {
            UtilitySpec::AlphaFair { weight, alpha: 1.0 } => UtilitySpec::Log { weight },
            other => other,
        }
    }

    pub fn validate(&self) -> Result<(), NumError> {
        let w = self.weight();
        if !(w > 0.0 && w.is_finite()) {
            return Err(NumError::Invalid(format!("utility weight must be positive, got {w}")));
        }
        if let UtilitySpec::AlphaFair { alpha, .. } = *self {
            if !(alpha > 0.0 && alpha.is_finite()) {
                // alpha = 0 is linear, hence neither strictly concave nor invertible
                return Err(NumError::Invalid(format!("alpha must be positive and finite, got {alpha}")));
            }
        }
        Ok(())
    }

    /// `U(x)`.
    pub fn value(&self, x: f64) -> Result<f64, NumError> {
        if !(x > 0.0) {
            return Err(NumError::Domain(format!("utility needs a positive rate, got {x}")));
        }
        Ok(match self.normalized() {
            UtilitySpec::Log { weight } => weight * x.ln(),
            UtilitySpec::AlphaFair { weight, alpha } => weight * x.powf(1.0 - alpha) / (1.0 - alpha),
        })
    }

    /// `U'(x)`.
    pub fn marginal(&self, x: f64) -> Result<f64, NumError> {
        if !(x > 0.0) {
            return Err(NumError::Domain(format!("marginal utility needs a positive rate, got {x}")));
        }
        Ok(match self.normalized() {
            UtilitySpec::Log { weight } => weight / x,
            UtilitySpec::AlphaFair { weight, alpha } => weight * x.powf(-alpha),
        })
    }

    /// The rate `x` with `U'(x) = price`.
    pub fn inverse_marginal(&self, price: f64) -> Result<f64, NumError> {
        if !(price > 0.0) {
            return Err(NumError::Domain(format!("path price must be positive, got {price}")));
        }
        Ok(match self.normalized() {
            UtilitySpec::Log { weight } => weight / price,
            UtilitySpec::AlphaFair { weight, alpha } => (weight / price).powf(1.0 / alpha),
        })
    }
}

/// Convenience wrapper for [`UtilitySpec::value`].
pub fn utility_value(spec: &UtilitySpec, x: f64) -> Result<f64, NumError> {
    spec.value(x)
}

/// Convenience wrapper for [`UtilitySpec::inverse_marginal`].
pub fn inverse_marginal(spec: &UtilitySpec, price: f64) -> Result<f64, NumError> {
    spec.inverse_marginal(price)
}

/// Sources, their routes over links, and link capacities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateProblem {
    /// Link ids crossed by each source.
    pub routes: Vec<Vec<usize>>,
    pub capacities: Vec<f64>,
    pub utilities: Vec<UtilitySpec>,
}

impl RateProblem {
    pub fn sources(&self) -> usize {
        self.routes.len()
    }

    pub fn links(&self) -> usize {
        self.capacities.len()
    }

    pub fn validate(&self) -> Result<(), NumError> {
        if self.routes.is_empty() {
            return Err(NumError::Invalid("problem has no sources".into()));
        }
        if self.utilities.len() != self.routes.len() {
            return Err(NumError::Invalid(format!(
                "{} utilities for {} sources",
                self.utilities.len(),
                self.routes.len()
            )));
        }
        for (l, &c) in self.capacities.iter().enumerate() {
            if !(c > 0.0 && c.is_finite()) {
                return Err(NumError::Invalid(format!("link {l} capacity must be positive, got {c}")));
            }
        }
        for (s, route) in self.routes.iter().enumerate() {
            if route.is_empty() {
                return Err(NumError::Invalid(format!("source {s} crosses no link")));
            }
            let mut sorted = route.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != route.len() {
                return Err(NumError::Invalid(format!("source {s} lists a link twice")));
            }
            if let Some(&bad) = route.iter().find(|&&l| l >= self.capacities.len()) {
                return Err(NumError::Invalid(format!("source {s} references unknown link {bad}")));
            }
        }
        self.utilities.iter().try_for_each(UtilitySpec::validate)
    }

    /// `(R·x)_l` for every link.
    pub fn link_loads(&self, rates: &[f64]) -> Vec<f64> {
        let mut loads = vec![0.0; self.links()];
        for (route, &x) in self.routes.iter().zip(rates) {
            for &l in route {
                loads[l] += x;
            }
        }
        loads
    }

    /// Sum of link prices along each source's route.
    pub fn path_prices(&self, prices: &[f64]) -> Vec<f64> {
        self.routes.iter().map(|route| route.iter().map(|&l| prices[l]).sum()).collect()
    }

    pub fn objective(&self, rates: &[f64]) -> Result<f64, NumError> {
        self.utilities.iter().zip(rates).map(|(u, &x)| u.value(x)).sum()
    }

    /// Default price step: the inverse of a bound on the curvature of the dual
    /// at rates up to each route's bottleneck, so the iteration contracts near the optimum.
    pub fn default_step_size(&self) -> f64 {
        let mut sharing = vec![0usize; self.links()];
        for route in &self.routes {
            for &l in route {
                sharing[l] += 1;
            }
        }
        let max_len = self.routes.iter().map(Vec::len).max().unwrap_or(1);
        let max_share = sharing.into_iter().max().unwrap_or(1);
        let curvature = self
            .routes
            .iter()
            .zip(&self.utilities)
            .map(|(route, u)| {
                let bottleneck = route.iter().map(|&l| self.capacities[l]).fold(f64::INFINITY, f64::min);
                match u.normalized() {
                    UtilitySpec::Log { weight } => bottleneck * bottleneck / weight,
                    UtilitySpec::AlphaFair { weight, alpha } => bottleneck.powf(1.0 + alpha) / (alpha * weight),
                }
            })
            .fold(0.0, f64::max);
        1.0 / (curvature * (max_len * max_share) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    /// Price step; `None` picks [`RateProblem::default_step_size`].
    #[serde(default)]
    pub step_size: Option<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: u64,
    #[serde(default = "default_initial_price")]
    pub initial_price: f64,
}

fn default_tolerance() -> f64 {
    1e-6
}

fn default_max_iterations() -> u64 {
    200_000
}

fn default_initial_price() -> f64 {
    0.01
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            step_size: None,
            tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
            initial_price: default_initial_price(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSolution {
    pub rates: Vec<f64>,
    pub prices: Vec<f64>,
    pub iterations: u64,
    /// Largest capacity violation `max(0, (R·x)_l - c_l)`.
    pub residual: f64,
}

/// Solves from uniform initial prices.
pub fn solve_num(problem: &RateProblem, options: &SolverOptions) -> Result<RateSolution, NumError> {
    problem.validate()?;
    let start = vec![options.initial_price; problem.links()];
    solve_num_from(problem, options, &start)
}

/// Solves from the given prices (warm start). Non-positive entries are lifted
/// to `options.initial_price`.
pub fn solve_num_from(
    problem: &RateProblem,
    options: &SolverOptions,
    initial_prices: &[f64],
) -> Result<RateSolution, NumError> {
    problem.validate()?;
    if initial_prices.len() != problem.links() {
        return Err(NumError::Invalid(format!(
            "{} initial prices for {} links",
            initial_prices.len(),
            problem.links()
        )));
    }
    let gamma = options.step_size.unwrap_or_else(|| problem.default_step_size());
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(NumError::Invalid(format!("step size must be positive, got {gamma}")));
    }
    let utilities: Vec<UtilitySpec> = problem.utilities.iter().map(|u| u.normalized()).collect();
    // Strictly above Σc, so the cap can never hold a non-optimal fixed point.
    let rate_cap: f64 = 2.0 * problem.capacities.iter().sum::<f64>();

    let respond = |prices: &[f64]| -> Vec<f64> {
        problem
            .path_prices(prices)
            .iter()
            .zip(&utilities)
            .map(|(&q, u)| if q > 0.0 { u.inverse_marginal(q).map_or(rate_cap, |x| x.min(rate_cap)) } else { rate_cap })
            .collect()
    };

    let mut prices: Vec<f64> =
        initial_prices.iter().map(|&p| if p > 0.0 { p } else { options.initial_price }).collect();
    let mut rates = respond(&prices);
    let mut violation = f64::INFINITY;

    for iteration in 1..=options.max_iterations {
        let loads = problem.link_loads(&rates);
        for l in 0..prices.len() {
            prices[l] = (prices[l] + gamma * (loads[l] - problem.capacities[l])).max(0.0);
        }
        let next_rates = respond(&prices);
        let rate_change = rates.iter().zip(&next_rates).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        rates = next_rates;

        // Feasibility and complementary slackness, scaled so that both must fall below tolerance.
        let loads = problem.link_loads(&rates);
        violation = 0.0;
        for l in 0..prices.len() {
            let c = problem.capacities[l];
            let slack = c - loads[l];
            violation = f64::max(violation, -slack);
            violation = f64::max(violation, prices[l] * slack.abs() / c);
        }
        if rate_change < options.tolerance && violation < options.tolerance {
            let residual = loads.iter().zip(&problem.capacities).map(|(y, c)| (y - c).max(0.0)).fold(0.0, f64::max);
            return Ok(RateSolution { rates, prices, iterations: iteration, residual });
        }
    }
    Err(NumError::NonConvergence { iterations: options.max_iterations, residual: violation })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum KktViolation {
    Dimensions { detail: String },
    Feasibility { link: usize, load: f64, capacity: f64 },
    DualFeasibility { link: usize, price: f64 },
    Stationarity { source: usize, marginal: f64, path_price: f64 },
    ComplementarySlackness { link: usize, price: f64, slack: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub passed: bool,
    pub tolerance: f64,
    pub violations: Vec<KktViolation>,
}

/// Checks primal feasibility, dual feasibility, stationarity and
/// complementary slackness of a candidate solution.
pub fn verify_kkt(problem: &RateProblem, solution: &RateSolution, tolerance: f64) -> KktReport {
    let mut violations = Vec::new();
    if solution.rates.len() != problem.sources() || solution.prices.len() != problem.links() {
        violations.push(KktViolation::Dimensions {
            detail: format!(
                "{} rates / {} prices for {} sources / {} links",
                solution.rates.len(),
                solution.prices.len(),
                problem.sources(),
                problem.links()
            ),
        });
        return KktReport { passed: false, tolerance, violations };
    }
    let loads = problem.link_loads(&solution.rates);
    for (l, (&load, &capacity)) in loads.iter().zip(&problem.capacities).enumerate() {
        if load > capacity + tolerance {
            violations.push(KktViolation::Feasibility { link: l, load, capacity });
        }
    }
    for (l, &price) in solution.prices.iter().enumerate() {
        if price < 0.0 {
            violations.push(KktViolation::DualFeasibility { link: l, price });
        }
    }
    let path = problem.path_prices(&solution.prices);
    for (s, (u, (&x, &q))) in problem.utilities.iter().zip(solution.rates.iter().zip(&path)).enumerate() {
        let marginal = u.marginal(x).unwrap_or(f64::NAN);
        // NaN (non-positive rate) fails the comparison and is reported
        if !((marginal - q).abs() <= tolerance * q) {
            violations.push(KktViolation::Stationarity { source: s, marginal, path_price: q });
        }
    }
    for (l, (&price, (&load, &capacity))) in
        solution.prices.iter().zip(loads.iter().zip(&problem.capacities)).enumerate()
    {
        let slack = capacity - load;
        if (price * slack).abs() > tolerance * capacity {
            violations.push(KktViolation::ComplementarySlackness { link: l, price, slack });
        }
    }
    KktReport { passed: violations.is_empty(), tolerance, violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shared_link() -> RateProblem {
        RateProblem { routes: vec![vec![0], vec![0]], capacities: vec![2.0], utilities: vec![UtilitySpec::log(1.0); 2] }
    }

    pub(crate) fn two_link_line() -> RateProblem {
        RateProblem {
            routes: vec![vec![0, 1], vec![0], vec![1]],
            capacities: vec![1.0, 1.0],
            utilities: vec![UtilitySpec::log(1.0); 3],
        }
    }

    #[test]
    fn utility_values() {
        assert_eq!(UtilitySpec::log(1.0).value(1.0).unwrap(), 0.0);
        assert!((UtilitySpec::alpha_fair(1.0, 2.0).value(2.0).unwrap() + 0.5).abs() < 1e-15);
        assert!((UtilitySpec::alpha_fair(3.0, 0.5).value(4.0).unwrap() - 12.0).abs() < 1e-12);
        assert!(matches!(UtilitySpec::log(1.0).value(0.0), Err(NumError::Domain(_))));
        assert!(UtilitySpec::log(1.0).value(-1.0).is_err());
    }

    #[test]
    fn alpha_one_aliases_log() {
        let a = UtilitySpec::alpha_fair(2.0, 1.0);
        assert_eq!(a.value(3.0).unwrap(), UtilitySpec::log(2.0).value(3.0).unwrap());
        assert_eq!(a.inverse_marginal(4.0).unwrap(), 0.5);
    }

    #[test]
    fn inverse_marginals() {
        assert_eq!(UtilitySpec::log(1.0).inverse_marginal(2.0).unwrap(), 0.5);
        assert!((UtilitySpec::alpha_fair(1.0, 2.0).inverse_marginal(4.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(UtilitySpec::log(1.0).inverse_marginal(0.0).is_err());
        for spec in [UtilitySpec::log(1.5), UtilitySpec::alpha_fair(2.0, 3.0), UtilitySpec::alpha_fair(0.7, 0.4)] {
            for x in [0.1, 1.0, 10.0] {
                let back = spec.inverse_marginal(spec.marginal(x).unwrap()).unwrap();
                assert!((back - x).abs() < 1e-12 * x.max(1.0), "{spec:?} at {x}: {back}");
            }
        }
    }

    #[test]
    fn symmetric_shared_link() {
        let sol = solve_num(&shared_link(), &SolverOptions::default()).unwrap();
        assert!((sol.rates[0] - 1.0).abs() < 1e-5 && (sol.rates[1] - 1.0).abs() < 1e-5);
        assert!(verify_kkt(&shared_link(), &sol, 1e-6).passed);
    }

    #[test]
    fn single_source_single_link() {
        let p = RateProblem { routes: vec![vec![0]], capacities: vec![5.0], utilities: vec![UtilitySpec::log(1.0)] };
        let sol = solve_num(&p, &SolverOptions::default()).unwrap();
        assert!((sol.rates[0] - 5.0).abs() < 1e-5);
        assert!((sol.prices[0] - 0.2).abs() < 1e-6);
    }

    #[test]
    fn two_link_line_converges() {
        let p = two_link_line();
        let sol = solve_num(&p, &SolverOptions::default()).unwrap();
        let expect = [1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0];
        for (x, e) in sol.rates.iter().zip(expect) {
            assert!((x - e).abs() < 1e-3);
        }
        assert!(verify_kkt(&p, &sol, 1e-6).passed);
    }

    #[test]
    fn kkt_flags_infeasible_rates() {
        let p = shared_link();
        let bad = RateSolution { rates: vec![2.0, 2.0], prices: vec![0.5], iterations: 0, residual: 2.0 };
        let report = verify_kkt(&p, &bad, 1e-6);
        assert!(!report.passed);
        assert!(report.violations.iter().any(|v| matches!(v, KktViolation::Feasibility { .. })));

        let good = RateSolution { rates: vec![1.0, 1.0], prices: vec![1.0], iterations: 0, residual: 0.0 };
        assert!(verify_kkt(&p, &good, 1e-6).passed);

        let negative = RateSolution { rates: vec![1.0, 1.0], prices: vec![-1.0], iterations: 0, residual: 0.0 };
        assert!(verify_kkt(&p, &negative, 1e-6)
            .violations
            .iter()
            .any(|v| matches!(v, KktViolation::DualFeasibility { .. })));

        let short = RateSolution { rates: vec![1.0], prices: vec![1.0], iterations: 0, residual: 0.0 };
        assert!(matches!(verify_kkt(&p, &short, 1e-6).violations[0], KktViolation::Dimensions { .. }));
    }

    #[test]
    fn kkt_accepts_hand_solution_for_line() {
        let sol = RateSolution {
            rates: vec![1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0],
            prices: vec![1.5, 1.5],
            iterations: 0,
            residual: 0.0,
        };
        assert!(verify_kkt(&two_link_line(), &sol, 1e-6).passed);
    }

    #[test]
    fn validation_errors() {
        let mut p = shared_link();
        p.capacities[0] = 0.0;
        assert!(matches!(solve_num(&p, &SolverOptions::default()), Err(NumError::Invalid(_))));
        let mut p = shared_link();
        p.routes[1].clear();
        assert!(p.validate().is_err());
        let mut p = shared_link();
        p.routes[0] = vec![3];
        assert!(p.validate().is_err());
        let mut p = shared_link();
        p.utilities[0] = UtilitySpec::log(0.0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn reports_non_convergence() {
        let opts = SolverOptions { max_iterations: 3, ..SolverOptions::default() };
        assert!(matches!(solve_num(&two_link_line(), &opts), Err(NumError::NonConvergence { iterations: 3, .. })));
    }

    #[test]
    fn warm_start_reaches_same_point() {
        let p = two_link_line();
        let opts = SolverOptions::default();
        let cold = solve_num(&p, &opts).unwrap();
        let warm = solve_num_from(&p, &opts, &cold.prices).unwrap();
        assert!(warm.iterations < cold.iterations);
        for (a, b) in cold.rates.iter().zip(&warm.rates) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}
