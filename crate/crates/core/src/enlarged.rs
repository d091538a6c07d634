//! Product-space extension of a reserve functional, penalty decomposition
//! over (measure, discount, default-leg) triples, and the conditional-risk
//! composition generated by a convex function.
//!
//! Positions on the enlarged space carry two legs, one per state of the
//! numeraire. A product probability measure is parameterized losslessly by
//! its restriction `Q` and a discount factor `D` (the conditional survival
//! probability); the default-leg measure is then forced by the consistency
//! identity `Q(Y) = Q(D Y) + (1 - Q(D)) Qbar(Y)`.

use crate::cash_additive::RiskMeasureSpec;
use crate::error::{EngineError, Result};
use crate::scenario::{ensure_same_len, Position, ProbabilityWeights, SubProbability};
use crate::spot_forward::DiscountFactor;
use crate::subadditive::ConvexDiscountFunction;

/// Tolerance for the exact arithmetic identities on the product space.
pub const PRODUCT_TOL: f64 = 1e-12;

/// Two-leg position: the payoff while the numeraire survives and the payoff
/// after it defaults. The diagonal `(X, X)` is identified with `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductPosition {
    pub on_survival: Position,
    pub on_default: Position,
}

impl ProductPosition {
    pub fn new(on_survival: Position, on_default: Position) -> Result<Self> {
        ensure_same_len(on_survival.len(), on_default.len())?;
        Ok(Self { on_survival, on_default })
    }

    pub fn diagonal(x: Position) -> Self {
        Self { on_default: x.clone(), on_survival: x }
    }

    pub fn len(&self) -> usize {
        self.on_survival.len()
    }

    pub fn is_empty(&self) -> bool {
        self.on_survival.is_empty()
    }
}

/// Cash additive extension of a reserve onto two-leg positions:
/// `R(X1 + rhobar(X0) 1) + rhobar(X0)`, where `rhobar` is an a priori cash
/// additive measure pricing the default leg. Restricting the default leg to
/// zero recovers `R`.
pub fn product_extension_value<F>(
    reserve: F,
    rhobar: &RiskMeasureSpec,
    p: &ProductPosition,
) -> Result<f64>
where
    F: Fn(&Position) -> Result<f64>,
{
    let priced = rhobar.evaluate(&p.on_default)?;
    Ok(reserve(&p.on_survival.shift(priced))? + priced)
}

/// A product measure in its `(Q, D)` parameterization together with the
/// induced default-leg measure and its density.
#[derive(Debug, Clone)]
pub struct ProductMeasure {
    pub restriction: ProbabilityWeights,
    pub discount: DiscountFactor,
    pub default_leg: ProbabilityWeights,
    /// Radon-Nikodym density of the default leg against the restriction.
    pub density: Vec<f64>,
    /// `Q(D) = 1`: the default event carries no mass and the default leg is
    /// unconstrained. It is set to the restriction by convention.
    pub degenerate: bool,
}

impl ProductMeasure {
    /// The survival part `D . Q` as a sub-probability.
    pub fn survival_part(&self) -> Result<SubProbability> {
        SubProbability::new(
            self.restriction
                .weights()
                .iter()
                .zip(self.discount.values())
                .map(|(q, d)| q * d)
                .collect(),
        )
    }

    /// Mass assigned to the default event, `1 - Q(D)`.
    pub fn default_mass(&self) -> f64 {
        if self.degenerate {
            0.0
        } else {
            let qd: f64 = self
                .restriction
                .weights()
                .iter()
                .zip(self.discount.values())
                .map(|(q, d)| q * d)
                .sum();
            1.0 - qd
        }
    }
}

/// Decomposes `(Q, D)` into a full product measure, verifying the
/// consistency identity on the canonical basis to `1e-12`.
pub fn decompose_measure(q: &ProbabilityWeights, d: &DiscountFactor) -> Result<ProductMeasure> {
    ensure_same_len(q.len(), d.len())?;
    let qd: f64 = q.weights().iter().zip(d.values()).map(|(a, b)| a * b).sum();
    if qd >= 1.0 - PRODUCT_TOL {
        return Ok(ProductMeasure {
            restriction: q.clone(),
            discount: d.clone(),
            default_leg: q.clone(),
            density: vec![1.0; q.len()],
            degenerate: true,
        });
    }
    let density: Vec<f64> = d.values().iter().map(|&di| (1.0 - di) / (1.0 - qd)).collect();
    let weights: Vec<f64> = q.weights().iter().zip(&density).map(|(qi, de)| qi * de).collect();
    let default_leg = ProbabilityWeights::normalized(weights, 1e-9)?;
    // consistency on the canonical basis
    for i in 0..q.len() {
        let lhs = q.weights()[i];
        let rhs = q.weights()[i] * d.values()[i] + (1.0 - qd) * default_leg.weights()[i];
        if (lhs - rhs).abs() > PRODUCT_TOL {
            return Err(EngineError::Numeric(format!(
                "product decomposition inconsistent at atom {i}: {lhs} vs {rhs}"
            )));
        }
    }
    Ok(ProductMeasure { restriction: q.clone(), discount: d.clone(), default_leg, density, degenerate: false })
}

/// Penalty of the product extension at `(Q, D)`:
/// `alpha_R(D . Q) + (1 - Q(D)) alpha_bar(Qbar)`, with the convention that a
/// zero default mass annihilates the second term even when `alpha_bar` is
/// infinite.
pub fn product_penalty(
    alpha_r: impl Fn(&SubProbability) -> f64,
    alpha_bar: impl Fn(&ProbabilityWeights) -> f64,
    q: &ProbabilityWeights,
    d: &DiscountFactor,
) -> Result<f64> {
    let pm = decompose_measure(q, d)?;
    let survival = pm.survival_part()?;
    let first = alpha_r(&survival);
    let weight = pm.default_mass();
    if pm.degenerate || weight <= PRODUCT_TOL {
        return Ok(first);
    }
    let second = alpha_bar(&pm.default_leg);
    Ok(first + weight * second)
}

/// Result of the penalty projection onto the original space.
#[derive(Debug, Clone)]
pub struct PenaltyProjection {
    pub value: f64,
    pub discount: Option<DiscountFactor>,
    pub default_leg: Option<ProbabilityWeights>,
    /// Spacing of the per-atom discount grid searched over.
    pub mesh: f64,
}

/// Projects the product penalty onto `Q`:
/// `inf over consistent (D, Qbar) of alpha_R(D . Q) + (1 - Q(D)) alpha_bar(Qbar)`.
///
/// On a finite space, `Qbar` is uniquely determined by `(Q, D)` through the
/// consistency identity (and irrelevant in the degenerate case), so the
/// search runs over a per-atom discount grid alone. The result is a grid
/// upper bound of the true infimum; the reported mesh is the grid spacing.
pub fn penalty_projection(
    alpha_r: impl Fn(&SubProbability) -> f64,
    alpha_bar: impl Fn(&ProbabilityWeights) -> f64,
    q: &ProbabilityWeights,
    d_resolution: usize,
) -> Result<PenaltyProjection> {
    if d_resolution < 2 {
        return Err(EngineError::Validation("discount grid resolution must be at least 2".into()));
    }
    let n = q.len();
    let count = (d_resolution as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if count > crate::scenario::ENUMERATION_BUDGET {
        return Err(EngineError::Capacity(format!(
            "discount grid {d_resolution}^{n} exceeds budget"
        )));
    }
    let denom = (d_resolution - 1) as f64;
    let mut best = f64::INFINITY;
    let mut best_d: Option<DiscountFactor> = None;
    let mut counts = vec![0usize; n];
    loop {
        let d = DiscountFactor::new(counts.iter().map(|&k| k as f64 / denom).collect())?;
        let value = product_penalty(&alpha_r, &alpha_bar, q, &d)?;
        if value < best {
            best = value;
            best_d = Some(d);
        }
        // odometer increment
        let mut i = n;
        let mut done = true;
        while i > 0 {
            i -= 1;
            counts[i] += 1;
            if counts[i] < d_resolution {
                done = false;
                break;
            }
            counts[i] = 0;
        }
        if done {
            break;
        }
    }
    let default_leg = match &best_d {
        Some(d) if best.is_finite() => Some(decompose_measure(q, d)?.default_leg),
        _ => None,
    };
    Ok(PenaltyProjection {
        value: best,
        discount: if best.is_finite() { best_d } else { None },
        default_leg,
        mesh: 1.0 / denom,
    })
}

/// Conditional risk values generated by `V`: atomwise
/// `V(X1 - X0) - X0`. Shifting both legs by the same measurable amount
/// shifts the output by its negative, exactly.
pub fn conditional_from_convex(
    v: &ConvexDiscountFunction,
    p: &ProductPosition,
) -> Result<Position> {
    ensure_same_len(v.n_atoms(), p.len())?;
    Position::new(
        (0..p.len())
            .map(|i| {
                let x1 = p.on_survival.values()[i];
                let x0 = p.on_default.values()[i];
                v.eval(i, x1 - x0) - x0
            })
            .collect(),
    )
}

/// Composition check report: the direct two-leg evaluation against the
/// composition through the conditional values, plus the two restriction
/// identities.
#[derive(Debug, Clone)]
pub struct CompositionReport {
    pub direct: f64,
    pub via_conditional: f64,
    pub composition_gap: f64,
    /// `|check(X, 0) - rho(-V(X))|` on the survival leg of the input.
    pub restriction_gap: f64,
    /// `|check(X, X) - rho(X)|` on the survival leg of the input.
    pub diagonal_gap: f64,
    pub passed: bool,
}

/// Verifies that `rho(-V(X1 - X0) + X0)` equals `rho(-cond_V(X1, X0))`, and
/// that the restrictions to a zero default leg and to the diagonal recover
/// the composed reserve and the base measure.
pub fn composition_check(
    rho: &RiskMeasureSpec,
    v: &ConvexDiscountFunction,
    p: &ProductPosition,
) -> Result<CompositionReport> {
    ensure_same_len(v.n_atoms(), p.len())?;
    // direct evaluation path
    let direct_arg = Position::new(
        (0..p.len())
            .map(|i| {
                let x1 = p.on_survival.values()[i];
                let x0 = p.on_default.values()[i];
                -v.eval(i, x1 - x0) + x0
            })
            .collect(),
    )?;
    let direct = rho.evaluate(&direct_arg)?;

    // composition through the conditional values
    let conditional = conditional_from_convex(v, p)?;
    let via_conditional = rho.evaluate(&conditional.scale(-1.0))?;

    // restrictions
    let zero = Position::zeros(p.len())?;
    let on_survival_only = ProductPosition::new(p.on_survival.clone(), zero)?;
    let restricted = composition_value(rho, v, &on_survival_only)?;
    let composed = crate::subadditive::compose_with_convex(rho, v, &p.on_survival)?;
    let diagonal = composition_value(rho, v, &ProductPosition::diagonal(p.on_survival.clone()))?;
    let rho_direct = rho.evaluate(&p.on_survival)?;

    let composition_gap = (direct - via_conditional).abs();
    let restriction_gap = (restricted - composed).abs();
    let diagonal_gap = (diagonal - rho_direct).abs();
    let passed = composition_gap <= PRODUCT_TOL
        && restriction_gap <= PRODUCT_TOL
        && diagonal_gap <= PRODUCT_TOL;
    Ok(CompositionReport {
        direct,
        via_conditional,
        composition_gap,
        restriction_gap,
        diagonal_gap,
        passed,
    })
}

/// The two-leg value `rho(-V(X1 - X0) + X0)`.
pub fn composition_value(
    rho: &RiskMeasureSpec,
    v: &ConvexDiscountFunction,
    p: &ProductPosition,
) -> Result<f64> {
    let conditional = conditional_from_convex(v, p)?;
    rho.evaluate(&conditional.scale(-1.0))
}
