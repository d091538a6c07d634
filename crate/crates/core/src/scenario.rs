//! Finite scenario spaces, payoff positions, probability and sub-probability
//! weights, and the grid enumerators used by the brute-force dual checks.
//!
//! Everything in this module is immutable after construction and every
//! operation is a pure function, so values can be shared freely across
//! threads. Grid enumerators stream their points; the capacity guard bounds
//! the raw enumeration size at `resolution^n <= 10^7`.

use crate::error::{EngineError, Result};

/// Absolute tolerance for probability-vector normalization.
pub const PROB_SUM_TOL: f64 = 1e-12;
/// Max-norm tolerance used when two weight vectors are compared for equality.
pub const WEIGHT_EQ_TOL: f64 = 1e-12;
/// Raw enumeration budget for grid streams (`resolution^n`).
pub const ENUMERATION_BUDGET: u128 = 10_000_000;

/// A finite sample space: an ordered list of pairwise-distinct atom labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioSpace {
    labels: Vec<String>,
}

impl ScenarioSpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(EngineError::Validation("scenario space needs at least one atom".into()));
        }
        for (i, a) in labels.iter().enumerate() {
            for b in labels.iter().skip(i + 1) {
                if a == b {
                    return Err(EngineError::Validation(format!("duplicate atom label '{a}'")));
                }
            }
        }
        Ok(Self { labels })
    }

    /// Space with synthetic labels `s0..s{n-1}`.
    pub fn of_size(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| format!("s{i}")).collect())
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EngineError::Validation(format!("{what} contains a non-finite entry")));
    }
    Ok(())
}

pub(crate) fn ensure_same_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(EngineError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// A payoff vector at the horizon, one entry per atom (future currency units).
#[derive(Debug, Clone, PartialEq)]
pub struct Position {
    values: Vec<f64>,
}

impl Position {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(EngineError::Validation("positions must have at least one entry".into()));
        }
        ensure_finite(&values, "position")?;
        Ok(Self { values })
    }

    /// Construction for values produced by internal arithmetic on finite inputs.
    pub(crate) fn raw(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { values }
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(vec![0.0; n])
    }

    pub fn constant(n: usize, m: f64) -> Result<Self> {
        Self::new(vec![m; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Entrywise positive and negative parts: `x = x+ - x-` with
    /// `x+ . x- = 0` per entry.
    pub fn pos_neg_parts(&self) -> (Position, Position) {
        let pos = self.values.iter().map(|&v| v.max(0.0)).collect();
        let neg = self.values.iter().map(|&v| (-v).max(0.0)).collect();
        (Position::raw(pos), Position::raw(neg))
    }

    pub fn add(&self, other: &Position) -> Result<Position> {
        ensure_same_len(self.len(), other.len())?;
        Ok(Position::raw(
            self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn sub(&self, other: &Position) -> Result<Position> {
        ensure_same_len(self.len(), other.len())?;
        Ok(Position::raw(
            self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        ))
    }

    /// Adds the same cash amount to every atom.
    pub fn shift(&self, m: f64) -> Position {
        Position::raw(self.values.iter().map(|v| v + m).collect())
    }

    pub fn scale(&self, k: f64) -> Position {
        Position::raw(self.values.iter().map(|v| v * k).collect())
    }

    pub fn mul_entrywise(&self, factors: &[f64]) -> Result<Position> {
        ensure_same_len(self.len(), factors.len())?;
        Ok(Position::raw(
            self.values.iter().zip(factors).map(|(a, b)| a * b).collect(),
        ))
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    /// `true` when every entry of `self` is `<=` the matching entry of `other`.
    pub fn dominated_by(&self, other: &Position) -> bool {
        self.len() == other.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| a <= b)
    }
}

/// Nonnegative atom weights normalized to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityWeights {
    weights: Vec<f64>,
}

impl ProbabilityWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(EngineError::Validation("probability weights must be nonempty".into()));
        }
        ensure_finite(&weights, "probability weights")?;
        if weights.iter().any(|&w| w < 0.0) {
            return Err(EngineError::Validation("probability weights must be nonnegative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(EngineError::Validation(format!(
                "probability weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self { weights })
    }

    /// Accepts weights whose sum is within `tol` of one and renormalizes them.
    pub fn normalized(weights: Vec<f64>, tol: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(EngineError::Validation("probability weights must be nonempty".into()));
        }
        ensure_finite(&weights, "probability weights")?;
        if weights.iter().any(|&w| w < 0.0) {
            return Err(EngineError::Validation("probability weights must be nonnegative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(EngineError::Validation(format!(
                "probability weights sum to {sum}, outside tolerance {tol}"
            )));
        }
        Ok(Self { weights: weights.into_iter().map(|w| w / sum).collect() })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(EngineError::Validation("probability weights must be nonempty".into()));
        }
        Ok(Self { weights: vec![1.0 / n as f64; n] })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Nonnegative atom weights with total mass in `[0, 1]` -- the dual variables
/// of the sub-probability representation.
#[derive(Debug, Clone, PartialEq)]
pub struct SubProbability {
    weights: Vec<f64>,
    mass: f64,
}

impl SubProbability {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(EngineError::Validation("sub-probability weights must be nonempty".into()));
        }
        ensure_finite(&weights, "sub-probability weights")?;
        if weights.iter().any(|&w| w < 0.0) {
            return Err(EngineError::Validation("sub-probability weights must be nonnegative".into()));
        }
        let mass: f64 = weights.iter().sum();
        if mass > 1.0 + PROB_SUM_TOL {
            return Err(EngineError::Validation(format!(
                "sub-probability mass {mass} exceeds 1"
            )));
        }
        Ok(Self { weights, mass })
    }

    /// Grid constructor: the mass is supplied as an exact rational so that
    /// grid points satisfy `mass <= 1` without float drift.
    pub(crate) fn from_grid(weights: Vec<f64>, mass: f64) -> Self {
        debug_assert!((weights.iter().sum::<f64>() - mass).abs() <= 1e-9);
        Self { weights, mass }
    }

    pub fn zero(n: usize) -> Result<Self> {
        Self::new(vec![0.0; n])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Normalizes to a probability vector when the mass is positive.
    pub fn direction(&self) -> Option<ProbabilityWeights> {
        if self.mass <= 0.0 {
            return None;
        }
        ProbabilityWeights::normalized(
            self.weights.iter().map(|w| w / self.mass).collect(),
            1e-9,
        )
        .ok()
    }
}

/// Anything that pairs with a position through `sum_i w_i x_i`.
pub trait WeightVector {
    fn weight_slice(&self) -> &[f64];
}

impl WeightVector for ProbabilityWeights {
    fn weight_slice(&self) -> &[f64] {
        &self.weights
    }
}

impl WeightVector for SubProbability {
    fn weight_slice(&self) -> &[f64] {
        &self.weights
    }
}

/// The bilinear pairing `q(x) = sum_i q_i x_i`.
pub fn expectation<W: WeightVector + ?Sized>(q: &W, x: &Position) -> Result<f64> {
    let w = q.weight_slice();
    ensure_same_len(w.len(), x.len())?;
    Ok(w.iter().zip(x.values()).map(|(a, b)| a * b).sum())
}

/// Uniform grid description: `resolution` points per dimension, positions
/// truncated to the box `[-bound, bound]^n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    resolution: usize,
    bound: f64,
}

impl GridSpec {
    pub fn new(resolution: usize, bound: f64) -> Result<Self> {
        if resolution < 2 {
            return Err(EngineError::Validation("grid resolution must be at least 2".into()));
        }
        if bound <= 0.0 || !bound.is_finite() {
            return Err(EngineError::Validation("grid bound must be positive and finite".into()));
        }
        Ok(Self { resolution, bound })
    }

    /// Grid whose truncation radius is four times the largest sup-norm among
    /// `positions` (floored at one), the default for penalty suprema.
    pub fn for_positions(resolution: usize, positions: &[&Position]) -> Result<Self> {
        let radius = positions
            .iter()
            .map(|p| p.linf_norm())
            .fold(0.0_f64, f64::max);
        Self::new(resolution, (4.0 * radius).max(1.0))
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Spacing between adjacent points of the position grid.
    pub fn position_mesh(&self) -> f64 {
        2.0 * self.bound / (self.resolution - 1) as f64
    }
}

fn check_capacity(n: usize, resolution: usize) -> Result<()> {
    let count = (resolution as u128)
        .checked_pow(n as u32)
        .unwrap_or(u128::MAX);
    if count > ENUMERATION_BUDGET {
        return Err(EngineError::Capacity(format!(
            "grid enumeration {resolution}^{n} exceeds budget {ENUMERATION_BUDGET}"
        )));
    }
    Ok(())
}

/// Mixed-radix counter; the last digit moves fastest.
struct Odometer {
    counts: Vec<usize>,
    base: usize,
    exhausted: bool,
}

impl Odometer {
    fn new(digits: usize, base: usize) -> Self {
        Self { counts: vec![0; digits], base, exhausted: digits == 0 || base == 0 }
    }
}

impl Iterator for Odometer {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.exhausted {
            return None;
        }
        let out = self.counts.clone();
        let mut i = self.counts.len();
        loop {
            if i == 0 {
                self.exhausted = true;
                break;
            }
            i -= 1;
            self.counts[i] += 1;
            if self.counts[i] < self.base {
                break;
            }
            self.counts[i] = 0;
        }
        Some(out)
    }
}

/// Streams every sub-probability vector with entries in
/// `{0, 1/(res-1), ..., 1}` and mass at most one. Contains the zero measure
/// and all probability vertices. The mass filter is exact: it is evaluated on
/// the integer numerators, not on float sums.
pub fn subprob_grid(
    space: &ScenarioSpace,
    grid: &GridSpec,
) -> Result<impl Iterator<Item = SubProbability>> {
    check_capacity(space.size(), grid.resolution())?;
    let res = grid.resolution();
    let denom = (res - 1) as f64;
    let cap = res - 1;
    Ok(Odometer::new(space.size(), res).filter_map(move |counts| {
        let total: usize = counts.iter().sum();
        if total > cap {
            return None;
        }
        let weights = counts.iter().map(|&k| k as f64 / denom).collect();
        Some(SubProbability::from_grid(weights, total as f64 / denom))
    }))
}

/// Streams the probability vectors of the simplex grid (integer compositions
/// of `res - 1`), vertices included.
pub fn prob_grid(
    space: &ScenarioSpace,
    resolution: usize,
) -> Result<impl Iterator<Item = ProbabilityWeights>> {
    if resolution < 2 {
        return Err(EngineError::Validation("simplex resolution must be at least 2".into()));
    }
    check_capacity(space.size(), resolution)?;
    let denom = (resolution - 1) as f64;
    let target = resolution - 1;
    Ok(Odometer::new(space.size(), resolution).filter_map(move |counts| {
        let total: usize = counts.iter().sum();
        if total != target {
            return None;
        }
        Some(ProbabilityWeights {
            weights: counts.iter().map(|&k| k as f64 / denom).collect(),
        })
    }))
}

/// Streams every position with entries on the uniform grid over
/// `[-bound, bound]`.
pub fn position_grid(
    space: &ScenarioSpace,
    grid: &GridSpec,
) -> Result<impl Iterator<Item = Position>> {
    check_capacity(space.size(), grid.resolution())?;
    let res = grid.resolution();
    let bound = grid.bound();
    let step = 2.0 * bound / (res - 1) as f64;
    Ok(Odometer::new(space.size(), res).map(move |counts| {
        Position::raw(counts.iter().map(|&k| -bound + k as f64 * step).collect())
    }))
}

/// Max-norm equality of two weight slices.
pub fn weights_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pos(v: &[f64]) -> Position {
        Position::new(v.to_vec()).unwrap()
    }

    #[test]
    fn expectation_examples() {
        let q = ProbabilityWeights::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(expectation(&q, &pos(&[-10.0, 20.0])).unwrap(), 5.0);

        let zero = SubProbability::zero(2).unwrap();
        assert_eq!(expectation(&zero, &pos(&[3.0, -7.0])).unwrap(), 0.0);

        let sub = SubProbability::new(vec![0.25, 0.75]).unwrap();
        assert_eq!(expectation(&sub, &pos(&[4.0, 4.0])).unwrap(), 4.0);
    }

    #[test]
    fn expectation_dimension_mismatch() {
        let q = ProbabilityWeights::new(vec![1.0]).unwrap();
        assert!(matches!(
            expectation(&q, &pos(&[1.0, 2.0])),
            Err(EngineError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn pos_neg_part_examples() {
        let (p, n) = pos(&[-10.0, 20.0]).pos_neg_parts();
        assert_eq!(p.values(), &[0.0, 20.0]);
        assert_eq!(n.values(), &[10.0, 0.0]);

        let (p, n) = pos(&[0.0, 0.0]).pos_neg_parts();
        assert_eq!(p.values(), &[0.0, 0.0]);
        assert_eq!(n.values(), &[0.0, 0.0]);

        let (p, n) = pos(&[3.0, -3.0]).pos_neg_parts();
        assert_eq!(p.values(), &[3.0, 0.0]);
        assert_eq!(n.values(), &[0.0, 3.0]);
    }

    #[test]
    fn subprob_grid_one_atom() {
        let space = ScenarioSpace::of_size(1).unwrap();
        let grid = GridSpec::new(3, 1.0).unwrap();
        let pts: Vec<_> = subprob_grid(&space, &grid).unwrap().collect();
        let masses: Vec<f64> = pts.iter().map(|p| p.mass()).collect();
        assert_eq!(masses, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn subprob_grid_mass_filter_res2() {
        let space = ScenarioSpace::of_size(2).unwrap();
        let grid = GridSpec::new(2, 1.0).unwrap();
        let pts: Vec<_> = subprob_grid(&space, &grid).unwrap().collect();
        // (1,1) has mass 2 and is excluded.
        assert_eq!(pts.len(), 3);
        assert!(pts.iter().all(|p| p.mass() <= 1.0));
    }

    #[test]
    fn subprob_grid_res3_matches_direct_enumeration() {
        // Independent oracle: enumerate the 3x3 lattice by nested loops and
        // apply the mass filter directly.
        let mut expected = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                if i + j <= 2 {
                    expected.push((i as f64 / 2.0, j as f64 / 2.0));
                }
            }
        }
        assert_eq!(expected.len(), 6);

        let space = ScenarioSpace::of_size(2).unwrap();
        let grid = GridSpec::new(3, 1.0).unwrap();
        let pts: Vec<_> = subprob_grid(&space, &grid).unwrap().collect();
        assert_eq!(pts.len(), expected.len());
        for (w0, w1) in expected {
            assert!(
                pts.iter().any(|p| weights_close(p.weights(), &[w0, w1], 0.0)),
                "missing grid point ({w0}, {w1})"
            );
        }
        // Zero measure and both probability vertices are present.
        assert!(pts.iter().any(|p| p.mass() == 0.0));
        assert!(pts.iter().any(|p| weights_close(p.weights(), &[1.0, 0.0], 0.0)));
        assert!(pts.iter().any(|p| weights_close(p.weights(), &[0.0, 1.0], 0.0)));
    }

    #[test]
    fn subprob_grid_mass_never_exceeds_one() {
        let space = ScenarioSpace::of_size(3).unwrap();
        let grid = GridSpec::new(7, 1.0).unwrap();
        for p in subprob_grid(&space, &grid).unwrap() {
            assert!(p.mass() >= 0.0 && p.mass() <= 1.0);
        }
    }

    #[test]
    fn position_grid_examples() {
        let space = ScenarioSpace::of_size(1).unwrap();
        let grid = GridSpec::new(3, 1.0).unwrap();
        let pts: Vec<_> = position_grid(&space, &grid).unwrap().collect();
        assert_eq!(pts.len(), 3);
        assert_eq!(pts[0].values(), &[-1.0]);
        assert_eq!(pts[1].values(), &[0.0]);
        assert_eq!(pts[2].values(), &[1.0]);

        let space2 = ScenarioSpace::of_size(2).unwrap();
        let corners = GridSpec::new(2, 2.0).unwrap();
        let pts: Vec<_> = position_grid(&space2, &corners).unwrap().collect();
        assert_eq!(pts.len(), 4);
        assert!(pts.iter().all(|p| p.values().iter().all(|v| v.abs() == 2.0)));

        let grid5 = GridSpec::new(5, 10.0).unwrap();
        let pts: Vec<_> = position_grid(&space, &grid5).unwrap().collect();
        let vals: Vec<f64> = pts.iter().map(|p| p.values()[0]).collect();
        assert_eq!(vals, vec![-10.0, -5.0, 0.0, 5.0, 10.0]);
    }

    #[test]
    fn capacity_guard() {
        let space = ScenarioSpace::of_size(10).unwrap();
        let grid = GridSpec::new(11, 1.0).unwrap();
        assert!(matches!(
            subprob_grid(&space, &grid).map(|_| ()),
            Err(EngineError::Capacity(_))
        ));
    }

    #[test]
    fn prob_grid_contains_vertices() {
        let space = ScenarioSpace::of_size(2).unwrap();
        let pts: Vec<_> = prob_grid(&space, 5).unwrap().collect();
        assert_eq!(pts.len(), 5);
        assert!(pts.iter().any(|p| weights_close(p.weights(), &[1.0, 0.0], 0.0)));
        assert!(pts.iter().any(|p| weights_close(p.weights(), &[0.0, 1.0], 0.0)));
    }

    #[test]
    fn probability_validation() {
        assert!(ProbabilityWeights::new(vec![0.5, 0.6]).is_err());
        assert!(ProbabilityWeights::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbabilityWeights::normalized(vec![0.5, 0.5 + 1e-10], 1e-9).is_ok());
        assert!(SubProbability::new(vec![0.6, 0.6]).is_err());
    }
}
