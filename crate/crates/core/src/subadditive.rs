//! Cash sub-additive reserve constructions and their sub-probability duals.
//!
//! A reserve functional `R` is cash sub-additive when `m -> R(X + m 1) + m`
//! is nondecreasing: adding cash to a future position reduces today's
//! reserve by at most that cash. The constructions shipped here are
//!
//! * the ambiguous-discount worst case `sup { rho0(D . X) : D_L <= D <= D_H }`,
//!   which collapses to the closed form `rho0(D_L . X+ - D_H . X-)`,
//! * the discounted put premium `(1/r) E_P[(K - X)+]`,
//! * the composition `rho0(-V(X))` for a per-atom piecewise-linear convex
//!   decreasing `V` with slopes in `[-1, 0]` and `V(0) = 0`,
//! * plain cash additive measures (the degenerate case `D = 1`).
//!
//! Dual side: every such `R` is a supremum of `mu(-X) - alpha(mu)` over
//! sub-probability vectors `mu`. For envelope-type reserves with a linear
//! base the feasible set is the per-atom box `[D_L p, D_H p]` with zero
//! penalty, so the dual value is a linear program solved by independent
//! coordinate maximization. Everything else is tabulated on a sub-probability
//! grid with a certified lower-bound penalty.

use rayon::prelude::*;

use crate::cash_additive::RiskMeasureSpec;
use crate::error::{EngineError, Result};
use crate::scenario::{
    ensure_same_len, expectation, position_grid, subprob_grid, GridSpec, Position,
    ProbabilityWeights, ScenarioSpace, SubProbability,
};
use crate::spot_forward::DiscountFactor;

/// Tolerance for the cash sub-additivity checks.
pub const SUBADDITIVITY_TOL: f64 = 1e-9;
/// Feasibility tolerance for the per-atom dual boxes.
pub const BOX_TOL: f64 = 1e-12;

/// Per-atom bounds `[D_L, D_H]` on an ambiguous discount factor.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountEnvelope {
    low: DiscountFactor,
    high: DiscountFactor,
}

impl DiscountEnvelope {
    pub fn new(low: DiscountFactor, high: DiscountFactor) -> Result<Self> {
        ensure_same_len(low.len(), high.len())?;
        if low.values().iter().zip(high.values()).any(|(l, h)| l > h) {
            return Err(EngineError::Validation(
                "envelope requires low <= high entrywise".into(),
            ));
        }
        Ok(Self { low, high })
    }

    /// Constant envelope `[d_low, d_high]` on every atom.
    pub fn constant(n: usize, d_low: f64, d_high: f64) -> Result<Self> {
        Self::new(DiscountFactor::constant(n, d_low)?, DiscountFactor::constant(n, d_high)?)
    }

    pub fn low(&self) -> &DiscountFactor {
        &self.low
    }

    pub fn high(&self) -> &DiscountFactor {
        &self.high
    }

    pub fn len(&self) -> usize {
        self.low.len()
    }

    pub fn is_empty(&self) -> bool {
        self.low.is_empty()
    }

    /// `true` when `other` covers this envelope entrywise.
    pub fn contained_in(&self, other: &DiscountEnvelope) -> bool {
        self.len() == other.len()
            && self
                .low
                .values()
                .iter()
                .zip(other.low.values())
                .all(|(a, b)| a >= b)
            && self
                .high
                .values()
                .iter()
                .zip(other.high.values())
                .all(|(a, b)| a <= b)
    }
}

/// One atom of a piecewise-linear convex decreasing function: strictly
/// increasing breakpoints and nondecreasing slopes in `[-1, 0]`, one more
/// slope than breakpoints. The function is anchored at `V(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomConvexFunction {
    breakpoints: Vec<f64>,
    slopes: Vec<f64>,
}

impl AtomConvexFunction {
    pub fn new(breakpoints: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        if slopes.len() != breakpoints.len() + 1 {
            return Err(EngineError::Validation(
                "piecewise function needs exactly one more slope than breakpoints".into(),
            ));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EngineError::Validation(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(EngineError::Validation("breakpoints must be finite".into()));
        }
        if slopes.iter().any(|s| !s.is_finite() || *s < -1.0 || *s > 0.0) {
            return Err(EngineError::Validation("slopes must lie in [-1, 0]".into()));
        }
        if slopes.windows(2).any(|w| w[0] > w[1]) {
            return Err(EngineError::Validation(
                "slopes must be nondecreasing (convexity)".into(),
            ));
        }
        Ok(Self { breakpoints, slopes })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// Integrates the piecewise-constant derivative from 0 to `x`.
    pub fn eval(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        let (lo, hi, sign) = if x > 0.0 { (0.0, x, 1.0) } else { (x, 0.0, -1.0) };
        let m = self.breakpoints.len();
        let mut acc = 0.0;
        for (j, &slope) in self.slopes.iter().enumerate() {
            let left = if j == 0 { f64::NEG_INFINITY } else { self.breakpoints[j - 1] };
            let right = if j == m { f64::INFINITY } else { self.breakpoints[j] };
            let a = left.max(lo);
            let b = right.min(hi);
            if b > a {
                acc += slope * (b - a);
            }
        }
        sign * acc
    }

    /// Fenchel conjugate `sup_x { x y - V(x) }`, finite exactly on the slope
    /// range `[s_first, s_last]` and attained at a breakpoint there.
    pub fn conjugate(&self, y: f64) -> f64 {
        let s_first = self.slopes[0];
        let s_last = *self.slopes.last().expect("nonempty slopes");
        if y < s_first - BOX_TOL || y > s_last + BOX_TOL {
            return f64::INFINITY;
        }
        let y = y.clamp(s_first, s_last);
        if self.breakpoints.is_empty() {
            return 0.0;
        }
        self.breakpoints
            .iter()
            .map(|&b| b * y - self.eval(b))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Per-atom piecewise-linear convex decreasing function `V(omega, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexDiscountFunction {
    atoms: Vec<AtomConvexFunction>,
}

impl ConvexDiscountFunction {
    pub fn new(atoms: Vec<AtomConvexFunction>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(EngineError::Validation("convex function needs at least one atom".into()));
        }
        Ok(Self { atoms })
    }

    /// The envelope kink `v(x) = -(D_L x+ - D_H x-)`: a single breakpoint at
    /// zero with slopes `[-D_H, -D_L]`.
    pub fn from_envelope(env: &DiscountEnvelope) -> Self {
        let atoms = env
            .low
            .values()
            .iter()
            .zip(env.high.values())
            .map(|(&l, &h)| AtomConvexFunction::new(vec![0.0], vec![-h, -l]).expect("envelope kink"))
            .collect();
        Self { atoms }
    }

    /// The same function on every atom.
    pub fn uniform(n: usize, atom: AtomConvexFunction) -> Result<Self> {
        if n == 0 {
            return Err(EngineError::Validation("convex function needs at least one atom".into()));
        }
        Ok(Self { atoms: vec![atom; n] })
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn atom(&self, i: usize) -> &AtomConvexFunction {
        &self.atoms[i]
    }

    pub fn eval(&self, atom: usize, x: f64) -> f64 {
        self.atoms[atom].eval(x)
    }

    /// Applies `V` atomwise to a position.
    pub fn apply(&self, x: &Position) -> Result<Position> {
        ensure_same_len(self.atoms.len(), x.len())?;
        Position::new(
            x.values()
                .iter()
                .enumerate()
                .map(|(i, &v)| self.atoms[i].eval(v))
                .collect(),
        )
    }

    pub fn conjugate(&self, atom: usize, y: f64) -> f64 {
        self.atoms[atom].conjugate(y)
    }

    /// Conjugate values over a grid of dual points, infinity outside the
    /// slope range.
    pub fn conjugate_table(&self, atom: usize, y_grid: &[f64]) -> Vec<f64> {
        y_grid.iter().map(|&y| self.atoms[atom].conjugate(y)).collect()
    }
}

/// A shipped cash sub-additive reserve functional.
#[derive(Debug, Clone)]
pub enum Reserve {
    /// A cash additive base measure used directly.
    Additive(RiskMeasureSpec),
    /// Worst-case discounting over a per-atom envelope.
    Envelope { base: RiskMeasureSpec, envelope: DiscountEnvelope },
    /// Discounted put premium `(1/r) E_P[(K - X)+]`.
    Put { weights: ProbabilityWeights, gross_rate: f64, strike: f64 },
    /// Composition `base(-V(X))`.
    Composed { base: RiskMeasureSpec, convex: ConvexDiscountFunction },
}

impl Reserve {
    pub fn dimension(&self) -> Option<usize> {
        match self {
            Reserve::Additive(spec) => spec.dimension(),
            Reserve::Envelope { envelope, .. } => Some(envelope.len()),
            Reserve::Put { weights, .. } => Some(weights.len()),
            Reserve::Composed { convex, .. } => Some(convex.n_atoms()),
        }
    }

    pub fn evaluate(&self, x: &Position) -> Result<f64> {
        match self {
            Reserve::Additive(spec) => spec.evaluate(x),
            Reserve::Envelope { base, envelope } => ambiguous_discount_reserve(base, envelope, x),
            Reserve::Put { weights, gross_rate, strike } => {
                put_premium(weights, *gross_rate, x, *strike)
            }
            Reserve::Composed { base, convex } => compose_with_convex(base, convex, x),
        }
    }

    /// `|R(0)| <= 1e-9`.
    pub fn is_normalized(&self) -> Result<bool> {
        let n = self.dimension().unwrap_or(1);
        Ok(self.evaluate(&Position::zeros(n)?)?.abs() <= SUBADDITIVITY_TOL)
    }
}

/// Worst-case reserve over the envelope: `rho0(D_L . X+ - D_H . X-)`, equal
/// to the supremum of `rho0(D . X)` over all `D` between the bounds.
pub fn ambiguous_discount_reserve(
    rho0: &RiskMeasureSpec,
    env: &DiscountEnvelope,
    x: &Position,
) -> Result<f64> {
    ensure_same_len(env.len(), x.len())?;
    let (plus, minus) = x.pos_neg_parts();
    let arg = plus
        .mul_entrywise(env.low.values())?
        .sub(&minus.mul_entrywise(env.high.values())?)?;
    rho0.evaluate(&arg)
}

/// The per-atom minimizing discount factor `D* = D_L 1{x >= 0} + D_H 1{x < 0}`.
pub fn envelope_minimizer_discount(env: &DiscountEnvelope, x: &Position) -> Result<DiscountFactor> {
    ensure_same_len(env.len(), x.len())?;
    DiscountFactor::new(
        x.values()
            .iter()
            .enumerate()
            .map(|(i, &v)| if v >= 0.0 { env.low.values()[i] } else { env.high.values()[i] })
            .collect(),
    )
}

/// Discounted put premium `(1/r) sum_i p_i (K - x_i)+` with gross rate
/// `r >= 1`. For `K = 0` this coincides with the ambiguous-discount reserve
/// over the envelope `[0, 1/r]` with a linear base.
pub fn put_premium(
    p: &ProbabilityWeights,
    gross_rate: f64,
    x: &Position,
    strike: f64,
) -> Result<f64> {
    if gross_rate < 1.0 || !gross_rate.is_finite() {
        return Err(EngineError::Validation(format!(
            "gross rate {gross_rate} must be at least 1"
        )));
    }
    if !strike.is_finite() {
        return Err(EngineError::Validation("strike must be finite".into()));
    }
    ensure_same_len(p.len(), x.len())?;
    let mut acc = 0.0;
    for (&pi, &xi) in p.weights().iter().zip(x.values()) {
        acc += pi * (strike - xi).max(0.0);
    }
    Ok(acc / gross_rate)
}

/// Composition reserve `rho0(-V(X))`, `V` applied atomwise.
pub fn compose_with_convex(
    rho0: &RiskMeasureSpec,
    v: &ConvexDiscountFunction,
    x: &Position,
) -> Result<f64> {
    let image = v.apply(x)?;
    rho0.evaluate(&image.scale(-1.0))
}

/// Representation value `sup { rho0(D . X + beta(-D)) : 0 <= D <= 1 }` over a
/// per-atom discount grid. The grid is augmented with the conjugate's kink
/// locations (the slope values of `V`), so the inner per-atom infimum is
/// attained on the grid and the result matches `compose_with_convex` exactly
/// for piecewise-linear `V`; on a bare grid it is a lower bound.
pub fn compose_representation_value(
    rho0: &RiskMeasureSpec,
    v: &ConvexDiscountFunction,
    x: &Position,
    d_resolution: usize,
) -> Result<f64> {
    if d_resolution < 2 {
        return Err(EngineError::Validation("discount grid resolution must be at least 2".into()));
    }
    ensure_same_len(v.n_atoms(), x.len())?;
    let denom = (d_resolution - 1) as f64;
    let mut arg = Vec::with_capacity(x.len());
    for (i, &xi) in x.values().iter().enumerate() {
        let mut candidates: Vec<f64> = (0..d_resolution).map(|k| k as f64 / denom).collect();
        for &s in v.atom(i).slopes() {
            candidates.push((-s).clamp(0.0, 1.0));
        }
        let mut best = f64::INFINITY;
        for d in candidates {
            let beta = v.conjugate(i, -d);
            if !beta.is_finite() {
                continue;
            }
            best = best.min(d * xi + beta);
        }
        if !best.is_finite() {
            return Err(EngineError::Numeric(
                "no feasible discount grid point for the representation".into(),
            ));
        }
        arg.push(best);
    }
    rho0.evaluate(&Position::new(arg)?)
}

/// Outcome of the cash sub-additivity check along an `m` grid.
#[derive(Debug, Clone)]
pub struct SubadditivityReport {
    /// `(m1, m2, R(x+m1)+m1, R(x+m2)+m2)` for the first monotonicity breach.
    pub monotonicity_violation: Option<(f64, f64, f64, f64)>,
    /// `(m, R(x+|m|), R(x)-|m|)` where the upper inequality failed.
    pub upper_violation: Option<(f64, f64, f64)>,
    /// `(m, R(x-|m|), R(x)+|m|)` where the lower inequality failed.
    pub lower_violation: Option<(f64, f64, f64)>,
    pub passed: bool,
}

/// Verifies that `m -> R(x + m 1) + m` is nondecreasing along a sorted grid
/// and that the two inequality forms `R(x + |m|) >= R(x) - |m|` and
/// `R(x - |m|) <= R(x) + |m|` hold, all to `1e-9`.
pub fn check_cash_subadditive<F>(
    reserve: F,
    x: &Position,
    m_grid: &[f64],
) -> Result<SubadditivityReport>
where
    F: Fn(&Position) -> Result<f64>,
{
    if m_grid.is_empty() {
        return Err(EngineError::Validation("m grid must be nonempty".into()));
    }
    if m_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(EngineError::Validation("m grid must be sorted".into()));
    }
    let base = reserve(x)?;
    let mut monotonicity_violation = None;
    let mut prev: Option<(f64, f64)> = None;
    for &m in m_grid {
        let v = reserve(&x.shift(m))? + m;
        if let Some((pm, pv)) = prev {
            if v < pv - SUBADDITIVITY_TOL && monotonicity_violation.is_none() {
                monotonicity_violation = Some((pm, m, pv, v));
            }
        }
        prev = Some((m, v));
    }
    let mut upper_violation = None;
    let mut lower_violation = None;
    for &m in m_grid {
        let a = m.abs();
        let up = reserve(&x.shift(a))?;
        if up < base - a - SUBADDITIVITY_TOL && upper_violation.is_none() {
            upper_violation = Some((m, up, base - a));
        }
        let down = reserve(&x.shift(-a))?;
        if down > base + a + SUBADDITIVITY_TOL && lower_violation.is_none() {
            lower_violation = Some((m, down, base + a));
        }
    }
    let passed =
        monotonicity_violation.is_none() && upper_violation.is_none() && lower_violation.is_none();
    Ok(SubadditivityReport { monotonicity_violation, upper_violation, lower_violation, passed })
}

/// A position on the enlarged space: the horizon payoff plus a scalar leg
/// paid when the numeraire defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedPosition {
    pub survival: Position,
    pub on_default: f64,
}

impl ExtendedPosition {
    pub fn new(survival: Position, on_default: f64) -> Result<Self> {
        if !on_default.is_finite() {
            return Err(EngineError::Validation("default leg must be finite".into()));
        }
        Ok(Self { survival, on_default })
    }
}

/// Minimal cash additive extension: `rho_hat(X, x) = R(X - x 1) - x`. Its
/// restriction to `x = 0` recovers `R`.
pub fn additive_extension_value<F>(reserve: F, xhat: &ExtendedPosition) -> Result<f64>
where
    F: Fn(&Position) -> Result<f64>,
{
    Ok(reserve(&xhat.survival.shift(-xhat.on_default))? - xhat.on_default)
}

fn box_feasible(mu: &SubProbability, lows: &[f64], highs: &[f64]) -> bool {
    mu.weights()
        .iter()
        .zip(lows.iter().zip(highs))
        .all(|(&m, (&lo, &hi))| m >= lo - BOX_TOL && m <= hi + BOX_TOL)
}

/// Minimal penalty `alpha(mu) = sup_X { mu(-X) - R(X) }` over sub-probability
/// vectors.
///
/// Closed forms (exact zero/infinity indicators):
/// * envelope reserve with linear base `P`: feasible iff
///   `mu_i in [D_L_i P_i, D_H_i P_i]` per atom;
/// * plain linear base: feasible iff `mu = P`;
/// * worst case: feasible iff `mu` has full mass;
/// * zero-strike put: feasible iff `mu_i in [0, P_i / r]`.
///
/// Anything else falls back to a supremum over the position grid (plus the
/// zero position), a certified lower bound.
pub fn minimal_penalty_subprob(
    reserve: &Reserve,
    mu: &SubProbability,
    grid: &GridSpec,
) -> Result<f64> {
    if let Some(n) = reserve.dimension() {
        ensure_same_len(n, mu.len())?;
    }
    match reserve {
        Reserve::Additive(RiskMeasureSpec::WorstCase) => {
            if (mu.mass() - 1.0).abs() <= BOX_TOL {
                Ok(0.0)
            } else {
                Ok(f64::INFINITY)
            }
        }
        Reserve::Additive(RiskMeasureSpec::Linear(p)) => {
            if box_feasible(mu, p.weights(), p.weights()) {
                Ok(0.0)
            } else {
                Ok(f64::INFINITY)
            }
        }
        Reserve::Envelope { base: RiskMeasureSpec::Linear(p), envelope } => {
            let lows: Vec<f64> = envelope
                .low
                .values()
                .iter()
                .zip(p.weights())
                .map(|(d, q)| d * q)
                .collect();
            let highs: Vec<f64> = envelope
                .high
                .values()
                .iter()
                .zip(p.weights())
                .map(|(d, q)| d * q)
                .collect();
            if box_feasible(mu, &lows, &highs) {
                Ok(0.0)
            } else {
                Ok(f64::INFINITY)
            }
        }
        Reserve::Put { weights, gross_rate, strike } if *strike == 0.0 => {
            let lows = vec![0.0; weights.len()];
            let highs: Vec<f64> = weights.weights().iter().map(|p| p / gross_rate).collect();
            if box_feasible(mu, &lows, &highs) {
                Ok(0.0)
            } else {
                Ok(f64::INFINITY)
            }
        }
        _ => {
            let space = ScenarioSpace::of_size(mu.len())?;
            let zero = Position::zeros(mu.len())?;
            let mut best = -reserve.evaluate(&zero)?;
            for x in position_grid(&space, grid)? {
                let v = -expectation(mu, &x)? - reserve.evaluate(&x)?;
                if v > best {
                    best = v;
                }
            }
            Ok(best)
        }
    }
}

/// Exact dual value of an envelope reserve with a linear base: maximizes
/// `mu(-x)` over the per-atom box by independent coordinate selection.
/// Returns the value and a maximizing sub-probability.
pub fn envelope_dual_exact(
    base: &ProbabilityWeights,
    env: &DiscountEnvelope,
    x: &Position,
) -> Result<(f64, SubProbability)> {
    ensure_same_len(base.len(), x.len())?;
    ensure_same_len(env.len(), x.len())?;
    let mut weights = Vec::with_capacity(x.len());
    let mut value = 0.0;
    for i in 0..x.len() {
        let lo = env.low.values()[i] * base.weights()[i];
        let hi = env.high.values()[i] * base.weights()[i];
        let coeff = -x.values()[i];
        let m = if coeff > 0.0 { hi } else { lo };
        value += coeff * m;
        weights.push(m);
    }
    Ok((value, SubProbability::new(weights)?))
}

/// Penalty values tabulated over a sub-probability grid.
#[derive(Debug, Clone)]
pub struct SubPenaltyTable {
    entries: Vec<(SubProbability, f64)>,
    mu_resolution: usize,
}

impl SubPenaltyTable {
    /// Tabulates `minimal_penalty_subprob` on the sub-probability grid.
    /// Entries are computed in parallel; the order is the deterministic grid
    /// order.
    pub fn build(
        reserve: &Reserve,
        space: &ScenarioSpace,
        mu_grid: &GridSpec,
        pos_grid: &GridSpec,
    ) -> Result<Self> {
        let points: Vec<SubProbability> = subprob_grid(space, mu_grid)?.collect();
        let entries: Vec<(SubProbability, f64)> = points
            .into_par_iter()
            .map(|mu| {
                let a = minimal_penalty_subprob(reserve, &mu, pos_grid)?;
                Ok((mu, a))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { entries, mu_resolution: mu_grid.resolution() })
    }

    pub fn from_entries(entries: Vec<(SubProbability, f64)>, mu_resolution: usize) -> Self {
        Self { entries, mu_resolution }
    }

    pub fn entries(&self) -> &[(SubProbability, f64)] {
        &self.entries
    }

    pub fn finite_entries(&self) -> usize {
        self.entries.iter().filter(|(_, a)| a.is_finite()).count()
    }

    /// Spacing of the mass grid, `1 / (resolution - 1)`.
    pub fn mass_quantum(&self) -> f64 {
        1.0 / (self.mu_resolution - 1) as f64
    }

    /// `sup { mu(-x) - alpha(mu) }` over the table.
    pub fn dual_value(&self, x: &Position) -> Result<f64> {
        Ok(self.best_entry(x)?.0)
    }

    fn best_entry(&self, x: &Position) -> Result<(f64, Option<usize>)> {
        if self.entries.is_empty() {
            return Err(EngineError::EmptyTable);
        }
        let mut best = f64::NEG_INFINITY;
        let mut arg = None;
        for (i, (mu, a)) in self.entries.iter().enumerate() {
            if !a.is_finite() {
                continue;
            }
            let v = -expectation(mu, x)? - a;
            if v > best {
                best = v;
                arg = Some(i);
            }
        }
        Ok((best, arg))
    }

    /// Dual value under the normalized reparameterization `mu = c Q`,
    /// reporting the maximizing scale and direction.
    pub fn normalized_dual(&self, x: &Position) -> Result<NormalizedDual> {
        let (value, arg) = self.best_entry(x)?;
        match arg {
            Some(i) => {
                let mu = &self.entries[i].0;
                Ok(NormalizedDual { value, scale: mu.mass(), direction: mu.direction() })
            }
            None => Ok(NormalizedDual { value, scale: 0.0, direction: None }),
        }
    }

    /// Worst discounted forward representation
    /// `sup_c c rho_{T,c}(-x)` over the supplied scale grid.
    ///
    /// Each positive-mass entry is assigned to the nearest grid scale; the
    /// reported per-scale value is `c rho_{T,c}(-x) = sup { mu(-x) - alpha(mu) }`
    /// over the assigned entries and the result is their maximum. Zero-mass
    /// entries never participate, which matches the requirement that the
    /// scale grid excludes zero. The condition `inf_X R(X) = -infinity` that
    /// forces positive scales is an assumption stated per instance, not
    /// verified here.
    pub fn worst_discounted_forward(
        &self,
        x: &Position,
        c_grid: &[f64],
    ) -> Result<WorstForwardReport> {
        if self.entries.is_empty() {
            return Err(EngineError::EmptyTable);
        }
        if c_grid.is_empty() || c_grid.iter().any(|&c| !(c > 0.0 && c <= 1.0)) {
            return Err(EngineError::Validation(
                "scale grid must be nonempty with entries in (0, 1]".into(),
            ));
        }
        let mut per_scale: Vec<(f64, Option<f64>)> = c_grid.iter().map(|&c| (c, None)).collect();
        let mut excluded_zero_mass = 0;
        for (mu, a) in &self.entries {
            if !a.is_finite() {
                continue;
            }
            if mu.mass() <= 0.0 {
                excluded_zero_mass += 1;
                continue;
            }
            let mut nearest = 0;
            let mut dist = f64::INFINITY;
            for (k, &c) in c_grid.iter().enumerate() {
                let d = (c - mu.mass()).abs();
                if d < dist {
                    dist = d;
                    nearest = k;
                }
            }
            let v = -expectation(mu, x)? - a;
            let slot = &mut per_scale[nearest].1;
            *slot = Some(slot.map_or(v, |cur| cur.max(v)));
        }
        let value = per_scale
            .iter()
            .filter_map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(WorstForwardReport { value, per_scale, excluded_zero_mass })
    }
}

/// Result of the normalized dual evaluation.
#[derive(Debug, Clone)]
pub struct NormalizedDual {
    pub value: f64,
    /// Mass of the maximizing sub-probability.
    pub scale: f64,
    /// Its normalized direction, absent for the zero measure.
    pub direction: Option<ProbabilityWeights>,
}

/// Result of the worst discounted forward sweep.
#[derive(Debug, Clone)]
pub struct WorstForwardReport {
    pub value: f64,
    /// Per-scale supremum of `mu(-x) - alpha(mu)`, `None` when no entry was
    /// assigned to the scale.
    pub per_scale: Vec<(f64, Option<f64>)>,
    pub excluded_zero_mass: usize,
}
