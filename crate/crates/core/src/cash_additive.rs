//! Convex cash additive base measures, their minimal penalty functions, and
//! the Fenchel duality round trip.
//!
//! A cash additive risk measure is convex, monotone decreasing, and satisfies
//! `rho(X + m) = rho(X) - m`. Four bases are shipped: the coherent worst
//! case, a linear measure, the entropic measure, and a finite robust family
//! `max_j (E_{Q_j}[-X] - alpha_j)`. The worst case, linear, and entropic
//! penalties have closed forms; anything else falls back to a certified
//! lower bound computed as a supremum over a position grid.

use crate::error::{EngineError, Result};
use crate::scenario::{
    expectation, position_grid, prob_grid, weights_close, GridSpec, Position,
    ProbabilityWeights, ScenarioSpace, WEIGHT_EQ_TOL,
};

/// Tolerance for closed-form equality checks.
pub const CLOSED_FORM_TOL: f64 = 1e-9;

/// Description of a convex cash additive base measure.
#[derive(Debug, Clone)]
pub enum RiskMeasureSpec {
    /// `rho(X) = max_i (-x_i)`, the coherent worst case.
    WorstCase,
    /// `rho(X) = E_Q[-X]`.
    Linear(ProbabilityWeights),
    /// `rho(X) = gamma log E_Q[exp(-X / gamma)]`.
    Entropic { base: ProbabilityWeights, temperature: f64 },
    /// `rho(X) = max_j (E_{Q_j}[-X] - alpha_j)` over a finite family.
    RobustFamily(Vec<(ProbabilityWeights, f64)>),
}

impl RiskMeasureSpec {
    pub fn linear(base: ProbabilityWeights) -> Self {
        RiskMeasureSpec::Linear(base)
    }

    pub fn entropic(base: ProbabilityWeights, temperature: f64) -> Result<Self> {
        if temperature <= 0.0 || !temperature.is_finite() {
            return Err(EngineError::Validation("entropic temperature must be positive".into()));
        }
        Ok(RiskMeasureSpec::Entropic { base, temperature })
    }

    pub fn robust(family: Vec<(ProbabilityWeights, f64)>) -> Result<Self> {
        if family.is_empty() {
            return Err(EngineError::Validation("robust family must be nonempty".into()));
        }
        let n = family[0].0.len();
        for (q, a) in &family {
            if q.len() != n {
                return Err(EngineError::DimensionMismatch { expected: n, got: q.len() });
            }
            if !a.is_finite() || *a < 0.0 {
                return Err(EngineError::Validation(
                    "robust family penalties must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(RiskMeasureSpec::RobustFamily(family))
    }

    /// Atom count the spec is pinned to, if any (the worst case works on any).
    pub fn dimension(&self) -> Option<usize> {
        match self {
            RiskMeasureSpec::WorstCase => None,
            RiskMeasureSpec::Linear(q) => Some(q.len()),
            RiskMeasureSpec::Entropic { base, .. } => Some(base.len()),
            RiskMeasureSpec::RobustFamily(family) => Some(family[0].0.len()),
        }
    }

    fn check_dims(&self, x: &Position) -> Result<()> {
        if let Some(n) = self.dimension() {
            if n != x.len() {
                return Err(EngineError::DimensionMismatch { expected: n, got: x.len() });
            }
        }
        Ok(())
    }

    /// Evaluates the measure at a position.
    pub fn evaluate(&self, x: &Position) -> Result<f64> {
        self.check_dims(x)?;
        match self {
            RiskMeasureSpec::WorstCase => {
                Ok(x.values().iter().fold(f64::NEG_INFINITY, |acc, &v| acc.max(-v)))
            }
            RiskMeasureSpec::Linear(q) => Ok(-expectation(q, x)?),
            RiskMeasureSpec::Entropic { base, temperature } => {
                // log-sum-exp with max shift for stability
                let gamma = *temperature;
                let scaled: Vec<f64> = x.values().iter().map(|v| -v / gamma).collect();
                let m = scaled.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let sum: f64 = base
                    .weights()
                    .iter()
                    .zip(&scaled)
                    .map(|(q, s)| q * (s - m).exp())
                    .sum();
                Ok(gamma * (m + sum.ln()))
            }
            RiskMeasureSpec::RobustFamily(family) => {
                let mut best = f64::NEG_INFINITY;
                for (q, a) in family {
                    best = best.max(-expectation(q, x)? - a);
                }
                Ok(best)
            }
        }
    }
}

/// Minimal penalty `alpha(Q) = sup_X { E_Q[-X] - rho(X) }`.
///
/// Closed forms: worst case is identically zero on probability vectors; a
/// linear measure penalizes everything but its own base with infinity; the
/// entropic penalty is `gamma` times the relative entropy of `q` with respect
/// to the base. For robust families the value is a supremum over the supplied
/// position grid (always including the zero position), which is a certified
/// lower bound of the true penalty.
pub fn minimal_penalty(
    spec: &RiskMeasureSpec,
    q: &ProbabilityWeights,
    grid: &GridSpec,
) -> Result<f64> {
    match spec {
        RiskMeasureSpec::WorstCase => Ok(0.0),
        RiskMeasureSpec::Linear(base) => {
            if weights_close(q.weights(), base.weights(), WEIGHT_EQ_TOL) {
                Ok(0.0)
            } else {
                Ok(f64::INFINITY)
            }
        }
        RiskMeasureSpec::Entropic { base, temperature } => {
            let mut acc = 0.0;
            for (&qi, &bi) in q.weights().iter().zip(base.weights()) {
                if qi == 0.0 {
                    continue;
                }
                if bi == 0.0 {
                    return Ok(f64::INFINITY);
                }
                acc += qi * (qi / bi).ln();
            }
            Ok(temperature * acc)
        }
        RiskMeasureSpec::RobustFamily(_) => {
            let space = ScenarioSpace::of_size(q.len())?;
            // The zero position is always a witness, which keeps the lower
            // bound at or above -rho(0) regardless of grid parity.
            let zero = Position::zeros(q.len())?;
            let mut best = expectation(q, &zero)? - spec.evaluate(&zero)?;
            for x in position_grid(&space, grid)? {
                let v = -expectation(q, &x)? - spec.evaluate(&x)?;
                if v > best {
                    best = v;
                }
            }
            Ok(best)
        }
    }
}

/// Penalty values tabulated over probability vectors.
#[derive(Debug, Clone)]
pub struct PenaltyTable {
    entries: Vec<(ProbabilityWeights, f64)>,
    simplex_resolution: Option<usize>,
}

impl PenaltyTable {
    pub fn from_entries(entries: Vec<(ProbabilityWeights, f64)>) -> Self {
        Self { entries, simplex_resolution: None }
    }

    /// Tabulates the minimal penalty on the simplex grid of the given
    /// resolution. `pos_grid` drives the fallback supremum where no closed
    /// form exists.
    pub fn build(
        spec: &RiskMeasureSpec,
        space: &ScenarioSpace,
        simplex_resolution: usize,
        pos_grid: &GridSpec,
    ) -> Result<Self> {
        let mut entries = Vec::new();
        for q in prob_grid(space, simplex_resolution)? {
            let a = minimal_penalty(spec, &q, pos_grid)?;
            entries.push((q, a));
        }
        Ok(Self { entries, simplex_resolution: Some(simplex_resolution) })
    }

    /// Exact finite tables: the worst case lives on the simplex vertices and
    /// a linear measure on a single point. Entropic and robust measures have
    /// no finite exact table.
    pub fn exact(spec: &RiskMeasureSpec, space: &ScenarioSpace) -> Option<Self> {
        match spec {
            RiskMeasureSpec::WorstCase => {
                let n = space.size();
                let entries = (0..n)
                    .map(|i| {
                        let mut w = vec![0.0; n];
                        w[i] = 1.0;
                        (ProbabilityWeights::new(w).expect("vertex"), 0.0)
                    })
                    .collect();
                Some(Self { entries, simplex_resolution: None })
            }
            RiskMeasureSpec::Linear(base) => Some(Self {
                entries: vec![(base.clone(), 0.0)],
                simplex_resolution: None,
            }),
            _ => None,
        }
    }

    pub fn entries(&self) -> &[(ProbabilityWeights, f64)] {
        &self.entries
    }

    pub fn simplex_resolution(&self) -> Option<usize> {
        self.simplex_resolution
    }

    /// `sup_Q { E_Q[-x] - alpha(Q) }` over the tabulated entries. Entries
    /// with infinite penalty never contribute; a table whose entries are all
    /// infinite yields negative infinity.
    pub fn dual_value(&self, x: &Position) -> Result<f64> {
        if self.entries.is_empty() {
            return Err(EngineError::EmptyTable);
        }
        let mut best = f64::NEG_INFINITY;
        for (q, a) in &self.entries {
            if !a.is_finite() {
                continue;
            }
            let v = -expectation(q, x)? - a;
            if v > best {
                best = v;
            }
        }
        Ok(best)
    }
}

/// Outcome of the calibration test: positive homogeneity along a position and
/// additivity against probe positions.
#[derive(Debug, Clone)]
pub struct CalibrationReport {
    /// `(lambda, rho(lambda w), lambda rho(w))` for each failing lambda.
    pub scaling_failures: Vec<(f64, f64, f64)>,
    /// `(probe index, rho(x + w), rho(x) + rho(w))` for each failing probe.
    pub additivity_failures: Vec<(usize, f64, f64)>,
    pub passed: bool,
}

/// Checks `rho(lambda w) = lambda rho(w)` for every tested lambda and
/// `rho(X + w) = rho(X) + rho(w)` for every probe, to `1e-9`.
pub fn check_calibration(
    spec: &RiskMeasureSpec,
    w: &Position,
    lambdas: &[f64],
    probes: &[Position],
) -> Result<CalibrationReport> {
    let rho_w = spec.evaluate(w)?;
    let mut scaling_failures = Vec::new();
    for &l in lambdas {
        let lhs = spec.evaluate(&w.scale(l))?;
        let rhs = l * rho_w;
        if (lhs - rhs).abs() > CLOSED_FORM_TOL {
            scaling_failures.push((l, lhs, rhs));
        }
    }
    let mut additivity_failures = Vec::new();
    for (i, x) in probes.iter().enumerate() {
        let lhs = spec.evaluate(&x.add(w)?)?;
        let rhs = spec.evaluate(x)? + rho_w;
        if (lhs - rhs).abs() > CLOSED_FORM_TOL {
            additivity_failures.push((i, lhs, rhs));
        }
    }
    let passed = scaling_failures.is_empty() && additivity_failures.is_empty();
    Ok(CalibrationReport { scaling_failures, additivity_failures, passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pos(v: &[f64]) -> Position {
        Position::new(v.to_vec()).unwrap()
    }

    fn half() -> ProbabilityWeights {
        ProbabilityWeights::new(vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let x = pos(&[-10.0, 20.0]);
        assert_eq!(RiskMeasureSpec::WorstCase.evaluate(&x).unwrap(), 10.0);
        assert_eq!(RiskMeasureSpec::linear(half()).evaluate(&x).unwrap(), -5.0);
        let ent = RiskMeasureSpec::entropic(half(), 1.0).unwrap();
        assert!(ent.evaluate(&pos(&[0.0, 0.0])).unwrap().abs() < 1e-15);
    }

    #[test]
    fn entropic_is_stable_for_large_positions() {
        let ent = RiskMeasureSpec::entropic(half(), 0.01).unwrap();
        let v = ent.evaluate(&pos(&[-100.0, 100.0])).unwrap();
        assert!(v.is_finite());
        // dominated by the worst loss, approached from below
        assert!(v <= 100.0 + 1e-9 && v > 99.0);
    }

    #[test]
    fn minimal_penalty_worst_case_is_zero() {
        let q = ProbabilityWeights::new(vec![0.3, 0.7]).unwrap();
        let grid = GridSpec::new(5, 1.0).unwrap();
        assert_eq!(minimal_penalty(&RiskMeasureSpec::WorstCase, &q, &grid).unwrap(), 0.0);
    }

    #[test]
    fn minimal_penalty_linear_self_and_other() {
        let grid = GridSpec::new(5, 1.0).unwrap();
        let spec = RiskMeasureSpec::linear(half());
        assert_eq!(minimal_penalty(&spec, &half(), &grid).unwrap(), 0.0);
        let other = ProbabilityWeights::new(vec![0.9, 0.1]).unwrap();
        assert_eq!(minimal_penalty(&spec, &other, &grid).unwrap(), f64::INFINITY);
    }

    #[test]
    fn minimal_penalty_entropic_matches_relative_entropy_and_grid() {
        // relative-entropy oracle: 0.9 ln 1.8 + 0.1 ln 0.2
        let oracle = 0.9_f64 * (1.8_f64).ln() + 0.1_f64 * (0.2_f64).ln();
        assert!((oracle - 0.368_064_207_168_497_1).abs() < 1e-12);

        let spec = RiskMeasureSpec::entropic(half(), 1.0).unwrap();
        let q = ProbabilityWeights::new(vec![0.9, 0.1]).unwrap();
        let grid = GridSpec::new(5, 1.0).unwrap();
        let closed = minimal_penalty(&spec, &q, &grid).unwrap();
        assert!((closed - oracle).abs() < 1e-12);

        // Cross-check by a grid supremum (M = 20, res = 201); the grid value
        // must sit just below the closed form.
        let space = ScenarioSpace::of_size(2).unwrap();
        let sup_grid = GridSpec::new(201, 20.0).unwrap();
        let mut sup = f64::NEG_INFINITY;
        for x in position_grid(&space, &sup_grid).unwrap() {
            let v = -expectation(&q, &x).unwrap() - spec.evaluate(&x).unwrap();
            sup = sup.max(v);
        }
        assert!(sup <= closed + 1e-12);
        assert!(closed - sup < 0.01, "grid gap too large: {}", closed - sup);
    }

    #[test]
    fn entropic_penalty_infinite_off_support() {
        let base = ProbabilityWeights::new(vec![1.0, 0.0]).unwrap();
        let spec = RiskMeasureSpec::entropic(base, 1.0).unwrap();
        let q = ProbabilityWeights::new(vec![0.5, 0.5]).unwrap();
        let grid = GridSpec::new(3, 1.0).unwrap();
        assert_eq!(minimal_penalty(&spec, &q, &grid).unwrap(), f64::INFINITY);
    }

    #[test]
    fn robust_grid_penalty_is_lower_bound_and_above_minus_rho_zero() {
        let fam = RiskMeasureSpec::robust(vec![
            (half(), 0.25),
            (ProbabilityWeights::new(vec![0.8, 0.2]).unwrap(), 0.0),
        ])
        .unwrap();
        let grid = GridSpec::new(9, 8.0).unwrap();
        let q = ProbabilityWeights::new(vec![0.7, 0.3]).unwrap();
        let alpha = minimal_penalty(&fam, &q, &grid).unwrap();
        let rho0 = fam.evaluate(&Position::zeros(2).unwrap()).unwrap();
        assert!(alpha >= -rho0 - 1e-12);
    }

    #[test]
    fn dual_value_worst_case_vertices() {
        let space = ScenarioSpace::of_size(2).unwrap();
        let table = PenaltyTable::exact(&RiskMeasureSpec::WorstCase, &space).unwrap();
        assert_eq!(table.dual_value(&pos(&[-10.0, 20.0])).unwrap(), 10.0);
    }

    #[test]
    fn dual_value_linear_single_point() {
        let table = PenaltyTable::from_entries(vec![(half(), 0.0)]);
        assert_eq!(table.dual_value(&pos(&[-10.0, 20.0])).unwrap(), -5.0);
    }

    #[test]
    fn dual_value_empty_table_errors() {
        let table = PenaltyTable::from_entries(vec![]);
        assert!(matches!(table.dual_value(&pos(&[1.0])), Err(EngineError::EmptyTable)));
    }

    #[test]
    fn entropic_dual_gap_on_simplex_grid() {
        let spec = RiskMeasureSpec::entropic(half(), 1.0).unwrap();
        let space = ScenarioSpace::of_size(2).unwrap();
        let grid = GridSpec::new(5, 1.0).unwrap();
        let table = PenaltyTable::build(&spec, &space, 101, &grid).unwrap();
        let x = pos(&[1.0, -1.0]);
        let direct = spec.evaluate(&x).unwrap();
        let dual = table.dual_value(&x).unwrap();
        assert!(dual <= direct + 1e-12);
        assert!(direct - dual < 0.02, "gap {}", direct - dual);
    }

    #[test]
    fn calibration_examples() {
        let lam = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let probes = vec![pos(&[1.0, 2.0]), pos(&[-3.0, 4.0])];

        // Linear measures are linear.
        let lin = RiskMeasureSpec::linear(half());
        let w = pos(&[2.0, -6.0]);
        assert!(check_calibration(&lin, &w, &lam, &probes).unwrap().passed);

        // The worst case fails on a non-constant w: rho(w) = rho(-w) = 1.
        let wc = RiskMeasureSpec::WorstCase;
        let w = pos(&[1.0, -1.0]);
        let report = check_calibration(&wc, &w, &[1.0, -1.0], &[]).unwrap();
        assert!(!report.passed);
        assert!(!report.scaling_failures.is_empty());

        // Constant w passes for any measure by cash additivity.
        let c = pos(&[3.0, 3.0]);
        for spec in [
            RiskMeasureSpec::WorstCase,
            RiskMeasureSpec::linear(half()),
            RiskMeasureSpec::entropic(half(), 2.0).unwrap(),
        ] {
            assert!(check_calibration(&spec, &c, &lam, &probes).unwrap().passed);
        }
    }
}
