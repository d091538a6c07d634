//! Optimal risk transfer between two agents: indifference pricing,
//! inf-convolution of reserve functionals, penalty additivity, and the
//! equivalence with the extended-space inf-convolution.
//!
//! The inf-convolution `inf_F { R_A(psi - F) + R_B(F) }` is minimized by
//! coordinate descent over the per-atom values of `F` with a golden-section
//! line search. The shipped reserves make the objective convex and
//! coordinatewise convex, so the descent converges to the global value;
//! an exhaustive grid fallback certifies it on small spaces. A ray along
//! which the objective keeps falling after repeated doublings of the search
//! box is reported as a violated finiteness hypothesis rather than a value.

use rayon::prelude::*;

use crate::error::{EngineError, Result};
use crate::scenario::{
    expectation, position_grid, GridSpec, Position, ScenarioSpace, SubProbability,
};
use crate::subadditive::{
    additive_extension_value, ExtendedPosition, Reserve, SubPenaltyTable,
};

/// Golden ratio conjugate used by the line search.
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Solver configuration for the coordinate descent.
#[derive(Debug, Clone)]
pub struct DescentConfig {
    /// Line-search interval width at which a coordinate stops moving.
    pub coordinate_tol: f64,
    /// A full pass improving the objective by less than this terminates.
    pub objective_tol: f64,
    pub max_passes: usize,
    /// Extra starting points besides the defaults.
    pub initial_points: Vec<Position>,
    /// Radius beyond which a still-decreasing expansion counts toward the
    /// unboundedness verdict.
    pub unbounded_radius: f64,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            coordinate_tol: 1e-11,
            objective_tol: 1e-13,
            max_passes: 400,
            initial_points: Vec::new(),
            unbounded_radius: 1e6,
        }
    }
}

/// Result of an inf-convolution solve.
#[derive(Debug, Clone)]
pub struct InfConvolution {
    pub value: f64,
    pub minimizer: Position,
    /// Distinct restarts reached the same value at visibly different points:
    /// the value is certified, the minimizer is a representative.
    pub non_unique: bool,
    pub passes: usize,
}

/// Buyer's indifference price for a contract:
/// `pi0*(H) = R_B(X_B) - R_B(X_B + H)`.
pub fn indifference_price(measure_b: &Reserve, exposure_b: &Position, h: &Position) -> Result<f64> {
    Ok(measure_b.evaluate(exposure_b)? - measure_b.evaluate(&exposure_b.add(h)?)?)
}

fn golden_section<F>(phi: &mut F, mut lo: f64, mut hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = phi(x1)?;
    let mut f2 = phi(x2)?;
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = phi(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = phi(x2)?;
        }
    }
    let mid = 0.5 * (lo + hi);
    Ok((mid, phi(mid)?))
}

/// Brackets a minimum of the convex section `phi` around `t0`, doubling the
/// step while the value strictly decreases. Three consecutive decreasing
/// steps beyond the unboundedness radius abort the solve.
fn bracket_minimum<F>(
    phi: &mut F,
    t0: f64,
    f0: f64,
    scale: f64,
    unbounded_radius: f64,
) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let step0 = 0.25 * scale.max(1e-6);
    let expand = |phi: &mut F, dir: f64, f_start: f64| -> Result<(f64, f64)> {
        let mut step = step0;
        let mut t_prev = t0;
        let mut t_cur = t0 + dir * step;
        let mut f_cur = f_start;
        let mut beyond = 0usize;
        loop {
            step *= 2.0;
            let t_next = t_cur + dir * step;
            let f_next = phi(t_next)?;
            if f_next >= f_cur {
                return Ok((t_prev.min(t_next), t_prev.max(t_next)));
            }
            if t_next.abs() > unbounded_radius {
                beyond += 1;
                if beyond >= 3 {
                    return Err(EngineError::NonConvergence {
                        reason: "objective decreases along a ray (inf-convolution not finite)"
                            .into(),
                        best_value: f_next,
                    });
                }
            }
            t_prev = t_cur;
            t_cur = t_next;
            f_cur = f_next;
        }
    };

    let f_right = phi(t0 + step0)?;
    if f_right < f0 {
        return expand(phi, 1.0, f_right);
    }
    let f_left = phi(t0 - step0)?;
    if f_left < f0 {
        return expand(phi, -1.0, f_left);
    }
    Ok((t0 - step0, t0 + step0))
}

struct DescentOutcome {
    value: f64,
    point: Vec<f64>,
    passes: usize,
}

fn coordinate_descent<F>(
    objective: &F,
    start: &[f64],
    cfg: &DescentConfig,
) -> Result<DescentOutcome>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let dim = start.len();
    let mut x = start.to_vec();
    let mut fx = objective(&x)?;
    let scale = 1.0 + x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut passes = 0;
    for _ in 0..cfg.max_passes {
        passes += 1;
        let f_before = fx;
        for i in 0..dim {
            let mut probe = x.clone();
            let mut phi = |t: f64| {
                probe[i] = t;
                objective(&probe)
            };
            let (lo, hi) = bracket_minimum(&mut phi, x[i], fx, scale, cfg.unbounded_radius)?;
            let (t, ft) = golden_section(&mut phi, lo, hi, cfg.coordinate_tol)?;
            if ft < fx {
                x[i] = t;
                fx = ft;
            }
        }
        if f_before - fx < cfg.objective_tol {
            break;
        }
    }
    Ok(DescentOutcome { value: fx, point: x, passes })
}

fn default_starts(psi: &Position, cfg: &DescentConfig) -> Vec<Vec<f64>> {
    let mut starts: Vec<Vec<f64>> = vec![
        vec![0.0; psi.len()],
        psi.scale(0.5).values().to_vec(),
        psi.values().to_vec(),
    ];
    for p in &cfg.initial_points {
        starts.push(p.values().to_vec());
    }
    starts
}

fn multistart<F>(objective: &F, starts: &[Vec<f64>], cfg: &DescentConfig) -> Result<InfConvolution>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut outcomes = Vec::with_capacity(starts.len());
    for s in starts {
        outcomes.push(coordinate_descent(objective, s, cfg)?);
    }
    let best_idx = outcomes
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.value.partial_cmp(&b.value).unwrap().then(ia.cmp(ib)))
        .map(|(i, _)| i)
        .expect("at least one start");
    let best = &outcomes[best_idx];
    let non_unique = outcomes.iter().enumerate().any(|(i, o)| {
        i != best_idx
            && (o.value - best.value).abs() <= 1e-7
            && o.point
                .iter()
                .zip(&best.point)
                .any(|(a, b)| (a - b).abs() > 1e-4)
    });
    Ok(InfConvolution {
        value: best.value,
        minimizer: Position::new(best.point.clone())?,
        non_unique,
        passes: best.passes,
    })
}

/// Minimizes `R_A(psi - F) + R_B(F)` over positions `F`.
pub fn inf_convolution<A, B>(
    measure_a: A,
    measure_b: B,
    psi: &Position,
    cfg: &DescentConfig,
) -> Result<InfConvolution>
where
    A: Fn(&Position) -> Result<f64>,
    B: Fn(&Position) -> Result<f64>,
{
    let psi_owned = psi.clone();
    let objective = move |f: &[f64]| -> Result<f64> {
        let fp = Position::new(f.to_vec())?;
        Ok(measure_a(&psi_owned.sub(&fp)?)? + measure_b(&fp)?)
    };
    let starts = default_starts(psi, cfg);
    multistart(&objective, &starts, cfg)
}

/// Exhaustive inf-convolution over a position grid; certifies the descent on
/// small spaces. Grid cells are evaluated in parallel with a deterministic
/// index tie-break.
pub fn inf_convolution_grid<A, B>(
    measure_a: A,
    measure_b: B,
    psi: &Position,
    grid: &GridSpec,
) -> Result<(f64, Position)>
where
    A: Fn(&Position) -> Result<f64> + Sync,
    B: Fn(&Position) -> Result<f64> + Sync,
{
    let space = ScenarioSpace::of_size(psi.len())?;
    let cells: Vec<Position> = position_grid(&space, grid)?.collect();
    let best = cells
        .par_iter()
        .enumerate()
        .map(|(i, f)| -> Result<(f64, usize)> {
            let v = measure_a(&psi.sub(f)?)? + measure_b(f)?;
            Ok((v, i))
        })
        .try_reduce(
            || (f64::INFINITY, usize::MAX),
            |a, b| {
                Ok(if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a })
            },
        )?;
    if best.1 == usize::MAX {
        return Err(EngineError::Validation("empty position grid".into()));
    }
    Ok((best.0, cells[best.1].clone()))
}

/// The two-agent transfer problem: exposures plus normalized reserve
/// functionals.
#[derive(Debug, Clone)]
pub struct TransferProblem {
    pub exposure_a: Position,
    pub exposure_b: Position,
    pub measure_a: Reserve,
    pub measure_b: Reserve,
}

impl TransferProblem {
    pub fn new(
        exposure_a: Position,
        exposure_b: Position,
        measure_a: Reserve,
        measure_b: Reserve,
    ) -> Result<Self> {
        if exposure_a.len() != exposure_b.len() {
            return Err(EngineError::DimensionMismatch {
                expected: exposure_a.len(),
                got: exposure_b.len(),
            });
        }
        for (name, m) in [("A", &measure_a), ("B", &measure_b)] {
            if let Some(n) = m.dimension() {
                if n != exposure_a.len() {
                    return Err(EngineError::DimensionMismatch { expected: exposure_a.len(), got: n });
                }
            }
            if !m.is_normalized()? {
                return Err(EngineError::Validation(format!(
                    "measure {name} is not normalized"
                )));
            }
        }
        Ok(Self { exposure_a, exposure_b, measure_a, measure_b })
    }
}

/// Optimal transfer: contract, price, and residual reserve.
#[derive(Debug, Clone)]
pub struct TransferSolution {
    /// The contract `H* = F* - X_B`.
    pub contract: Position,
    /// The indifference price of the contract.
    pub price: f64,
    /// Value of the inf-convolution at `psi = X_A + X_B`.
    pub residual: f64,
    pub non_unique: bool,
    pub passes: usize,
}

/// Solves the transfer program: runs the inf-convolution on
/// `psi = X_A + X_B` (restarting from zero, `X_B`, and `psi / 2`), recovers
/// the contract and its indifference price.
pub fn solve_transfer(problem: &TransferProblem, cfg: &DescentConfig) -> Result<TransferSolution> {
    let psi = problem.exposure_a.add(&problem.exposure_b)?;
    let mut cfg = cfg.clone();
    cfg.initial_points.push(problem.exposure_b.clone());
    let conv = inf_convolution(
        |p| problem.measure_a.evaluate(p),
        |p| problem.measure_b.evaluate(p),
        &psi,
        &cfg,
    )?;
    let contract = conv.minimizer.sub(&problem.exposure_b)?;
    let price = indifference_price(&problem.measure_b, &problem.exposure_b, &contract)?;
    // feasibility: doing nothing (F = X_B) is always available
    let standalone = problem.measure_a.evaluate(&problem.exposure_a)?
        + problem.measure_b.evaluate(&problem.exposure_b)?;
    if conv.value > standalone + 1e-7 {
        return Err(EngineError::Numeric(format!(
            "residual {} exceeds the stand-alone reserve {standalone}",
            conv.value
        )));
    }
    Ok(TransferSolution {
        contract,
        price,
        residual: conv.value,
        non_unique: conv.non_unique,
        passes: conv.passes,
    })
}

/// Report of the penalty additivity check.
#[derive(Debug, Clone)]
pub struct PenaltySumReport {
    /// Entries whose summed penalty is finite and was compared.
    pub finite_checked: usize,
    /// Entries skipped because the summed penalty is infinite.
    pub infinite_skipped: usize,
    pub max_abs_gap: f64,
    /// `(1 + mass) h / 2` bound from the position mesh `h` (both the pairing
    /// and the reserves are 1-Lipschitz in the sup norm).
    pub mesh_bound: f64,
    pub position_mesh: f64,
    /// The finiteness hypothesis `R_AB(0) > -infinity` failed.
    pub hypothesis_violation: Option<String>,
}

/// Recomputes the minimal penalty of the inf-convolution by brute force,
/// `sup_X { mu(-X) - R_AB(X) }` over a position grid, and compares it with
/// the sum `alpha_A(mu) + alpha_B(mu)` on the common table grid.
pub fn penalty_sum_check<F>(
    pen_a: &SubPenaltyTable,
    pen_b: &SubPenaltyTable,
    conv_value: F,
    psi_dim: usize,
    pos_grid: &GridSpec,
) -> Result<PenaltySumReport>
where
    F: Fn(&Position) -> Result<f64>,
{
    if pen_a.entries().len() != pen_b.entries().len() {
        return Err(EngineError::Validation(
            "penalty tables must share a common grid".into(),
        ));
    }
    // the finiteness hypothesis first: R_AB(0) must exist
    let zero = Position::zeros(psi_dim)?;
    let r0 = conv_value(&zero);
    if let Err(EngineError::NonConvergence { reason, .. }) = &r0 {
        return Ok(PenaltySumReport {
            finite_checked: 0,
            infinite_skipped: 0,
            max_abs_gap: 0.0,
            mesh_bound: 0.0,
            position_mesh: pos_grid.position_mesh(),
            hypothesis_violation: Some(reason.clone()),
        });
    }
    r0?;

    let space = ScenarioSpace::of_size(psi_dim)?;
    let mut positions: Vec<Position> = position_grid(&space, pos_grid)?.collect();
    positions.push(zero);
    let conv_values: Vec<f64> = positions
        .iter()
        .map(conv_value)
        .collect::<Result<Vec<_>>>()?;

    let mut finite_checked = 0;
    let mut infinite_skipped = 0;
    let mut max_abs_gap = 0.0_f64;
    let mut max_mass = 0.0_f64;
    for ((mu_a, a), (mu_b, b)) in pen_a.entries().iter().zip(pen_b.entries()) {
        if !crate::scenario::weights_close(mu_a.weights(), mu_b.weights(), 1e-12) {
            return Err(EngineError::Validation(
                "penalty tables must share a common grid".into(),
            ));
        }
        let sum = a + b;
        if !sum.is_finite() {
            infinite_skipped += 1;
            continue;
        }
        let mut brute = f64::NEG_INFINITY;
        for (x, rv) in positions.iter().zip(&conv_values) {
            let v = -expectation(mu_a, x)? - rv;
            if v > brute {
                brute = v;
            }
        }
        finite_checked += 1;
        max_abs_gap = max_abs_gap.max((sum - brute).abs());
        max_mass = max_mass.max(mu_a.mass());
    }
    let h = pos_grid.position_mesh();
    Ok(PenaltySumReport {
        finite_checked,
        infinite_skipped,
        max_abs_gap,
        mesh_bound: (1.0 + max_mass) * h / 2.0,
        position_mesh: h,
        hypothesis_violation: None,
    })
}

/// Result of the extended-space equivalence check.
#[derive(Debug, Clone)]
pub struct ExtensionEquivalence {
    /// Inf-convolution over positions.
    pub base_value: f64,
    /// Inf-convolution of the cash additive extensions over pairs `(F, x)`.
    pub extended_value: f64,
    pub gap: f64,
    pub passed: bool,
}

/// Tolerance of the extended-space equivalence.
pub const EXTENSION_EQUIVALENCE_TOL: f64 = 1e-6;

/// Minimizes the sum of the cash additive extensions over extended pairs and
/// compares with the plain inf-convolution; the scalar direction is provably
/// redundant, so the two values agree within solver tolerance.
pub fn extension_equivalence_check<A, B>(
    measure_a: A,
    measure_b: B,
    psi: &Position,
    cfg: &DescentConfig,
) -> Result<ExtensionEquivalence>
where
    A: Fn(&Position) -> Result<f64>,
    B: Fn(&Position) -> Result<f64>,
{
    let base = inf_convolution(&measure_a, &measure_b, psi, cfg)?;

    let n = psi.len();
    let psi_owned = psi.clone();
    let objective = move |v: &[f64]| -> Result<f64> {
        let f = Position::new(v[..n].to_vec())?;
        let x = v[n];
        let leg_a = ExtendedPosition::new(psi_owned.sub(&f)?, -x)?;
        let leg_b = ExtendedPosition::new(f, x)?;
        Ok(additive_extension_value(&measure_a, &leg_a)?
            + additive_extension_value(&measure_b, &leg_b)?)
    };
    let mut starts: Vec<Vec<f64>> = Vec::new();
    for mut s in default_starts(psi, cfg) {
        s.push(0.0);
        starts.push(s);
    }
    let extended = multistart(&objective, &starts, cfg)?;

    let gap = (base.value - extended.value).abs();
    Ok(ExtensionEquivalence {
        base_value: base.value,
        extended_value: extended.value,
        gap,
        passed: gap <= EXTENSION_EQUIVALENCE_TOL,
    })
}

/// Convenience: the summed table penalty `alpha_A(mu) + alpha_B(mu)` read
/// off two aligned tables.
pub fn summed_penalty(pen_a: &SubPenaltyTable, pen_b: &SubPenaltyTable, idx: usize) -> f64 {
    pen_a.entries()[idx].1 + pen_b.entries()[idx].1
}

/// Looks up the table index of a sub-probability, if present.
pub fn table_index(table: &SubPenaltyTable, mu: &SubProbability) -> Option<usize> {
    table
        .entries()
        .iter()
        .position(|(m, _)| crate::scenario::weights_close(m.weights(), mu.weights(), 1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cash_additive::RiskMeasureSpec;
    use crate::scenario::ProbabilityWeights;
    use crate::subadditive::DiscountEnvelope;

    fn pos(v: &[f64]) -> Position {
        Position::new(v.to_vec()).unwrap()
    }

    fn half() -> ProbabilityWeights {
        ProbabilityWeights::new(vec![0.5, 0.5]).unwrap()
    }

    fn lin_half() -> Reserve {
        Reserve::Additive(RiskMeasureSpec::linear(half()))
    }

    #[test]
    fn indifference_price_examples() {
        let b = lin_half();
        let xb = pos(&[3.0, -4.0]);
        assert_eq!(indifference_price(&b, &xb, &pos(&[0.0, 0.0])).unwrap(), 0.0);

        // cash additive linear measure prices constants at face value
        for m in [-2.0, 1.5, 6.0] {
            let h = pos(&[m, m]);
            let p = indifference_price(&b, &xb, &h).unwrap();
            assert!((p - m).abs() < 1e-12);
        }

        // envelope reserve: price of positive cash lies in [d_L m, m]
        let env = Reserve::Envelope {
            base: RiskMeasureSpec::linear(half()),
            envelope: DiscountEnvelope::constant(2, 0.9, 1.0).unwrap(),
        };
        let m = 5.0;
        let p = indifference_price(&env, &xb, &pos(&[m, m])).unwrap();
        assert!(p <= m + 1e-9 && p >= 0.9 * m - 1e-9, "price {p}");
    }

    #[test]
    fn inf_convolution_flat_objective() {
        // identical linear measures: value E_Q[-psi], any F optimal
        let q = half();
        let spec = RiskMeasureSpec::linear(q.clone());
        let psi = pos(&[4.0, -6.0]);
        let cfg = DescentConfig::default();
        let out = inf_convolution(
            |p| spec.evaluate(p),
            |p| spec.evaluate(p),
            &psi,
            &cfg,
        )
        .unwrap();
        let expected = -expectation(&q, &psi).unwrap();
        assert!((out.value - expected).abs() < 1e-9);
        assert!(out.non_unique, "flat objective should flag a non-unique minimizer");
    }

    #[test]
    fn inf_convolution_worst_case_vs_linear() {
        // penalty sum finite only at Q0, so the value is E_Q0[-psi]
        let q0 = ProbabilityWeights::new(vec![0.3, 0.7]).unwrap();
        let a = RiskMeasureSpec::WorstCase;
        let b = RiskMeasureSpec::linear(q0.clone());
        let psi = pos(&[10.0, -10.0]);
        let cfg = DescentConfig::default();
        let out = inf_convolution(|p| a.evaluate(p), |p| b.evaluate(p), &psi, &cfg).unwrap();
        let expected = -expectation(&q0, &psi).unwrap();
        assert!((out.value - expected).abs() < 1e-6, "value {} vs {expected}", out.value);

        // brute-force grid agrees
        let grid = GridSpec::new(81, 40.0).unwrap();
        let (grid_value, _) =
            inf_convolution_grid(|p| a.evaluate(p), |p| b.evaluate(p), &psi, &grid).unwrap();
        assert!(out.value <= grid_value + 1e-9);
        assert!(grid_value - out.value <= 2.0 * grid.position_mesh());
    }

    #[test]
    fn inf_convolution_zero_input() {
        let env = Reserve::Envelope {
            base: RiskMeasureSpec::linear(half()),
            envelope: DiscountEnvelope::constant(2, 0.8, 1.0).unwrap(),
        };
        let psi = pos(&[0.0, 0.0]);
        let out = inf_convolution(
            |p| env.evaluate(p),
            |p| env.evaluate(p),
            &psi,
            &DescentConfig::default(),
        )
        .unwrap();
        assert!(out.value.abs() < 1e-9);
    }

    #[test]
    fn unbounded_inf_convolution_is_reported() {
        // disjoint penalty domains: linear measures with different bases
        let a = RiskMeasureSpec::linear(ProbabilityWeights::new(vec![0.2, 0.8]).unwrap());
        let b = RiskMeasureSpec::linear(ProbabilityWeights::new(vec![0.7, 0.3]).unwrap());
        let psi = pos(&[1.0, 1.0]);
        let err = inf_convolution(
            |p| a.evaluate(p),
            |p| b.evaluate(p),
            &psi,
            &DescentConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, EngineError::NonConvergence { .. }));
    }

    #[test]
    fn solve_transfer_examples() {
        // cancelling exposures leave nothing to transfer
        let cfg = DescentConfig::default();
        let xa = pos(&[2.0, -3.0]);
        let problem = TransferProblem::new(
            xa.clone(),
            xa.scale(-1.0),
            lin_half(),
            lin_half(),
        )
        .unwrap();
        let sol = solve_transfer(&problem, &cfg).unwrap();
        assert!(sol.residual.abs() < 1e-9);

        // worked instance: both linear, X_A = (10, -10), X_B = 0
        let problem = TransferProblem::new(
            pos(&[10.0, -10.0]),
            pos(&[0.0, 0.0]),
            lin_half(),
            lin_half(),
        )
        .unwrap();
        let sol = solve_transfer(&problem, &cfg).unwrap();
        assert!(sol.residual.abs() < 1e-9);
        // the price equals the negated mean of the contract
        let expected_price = -expectation(&half(), &sol.contract).unwrap();
        assert!((sol.price - expected_price).abs() < 1e-9);
    }

    #[test]
    fn transfer_residual_matches_grid_on_envelope_instance() {
        let cfg = DescentConfig::default();
        let problem = TransferProblem::new(
            pos(&[6.0, -2.0]),
            pos(&[-1.0, 3.0]),
            Reserve::Envelope {
                base: RiskMeasureSpec::linear(half()),
                envelope: DiscountEnvelope::constant(2, 0.7, 1.0).unwrap(),
            },
            lin_half(),
        )
        .unwrap();
        let sol = solve_transfer(&problem, &cfg).unwrap();
        let psi = problem.exposure_a.add(&problem.exposure_b).unwrap();
        let grid = GridSpec::new(101, 4.0 * psi.linf_norm().max(1.0)).unwrap();
        let (grid_value, _) = inf_convolution_grid(
            |p| problem.measure_a.evaluate(p),
            |p| problem.measure_b.evaluate(p),
            &psi,
            &grid,
        )
        .unwrap();
        assert!(sol.residual <= grid_value + 1e-9);
        assert!(grid_value - sol.residual <= 2.0 * grid.position_mesh());
    }

    #[test]
    fn symmetry_of_inf_convolution() {
        // the envelope must reach 1 so that the penalty domains intersect
        // and the convolution stays finite
        let cfg = DescentConfig::default();
        let a = Reserve::Envelope {
            base: RiskMeasureSpec::linear(half()),
            envelope: DiscountEnvelope::constant(2, 0.8, 1.0).unwrap(),
        };
        let b = lin_half();
        let psi = pos(&[5.0, -7.0]);
        let ab = inf_convolution(|p| a.evaluate(p), |p| b.evaluate(p), &psi, &cfg).unwrap();
        let ba = inf_convolution(|p| b.evaluate(p), |p| a.evaluate(p), &psi, &cfg).unwrap();
        assert!((ab.value - ba.value).abs() < 1e-7);
    }

    #[test]
    fn extension_equivalence_on_cash_additive_measures() {
        let cfg = DescentConfig::default();
        let a = RiskMeasureSpec::WorstCase;
        let b = RiskMeasureSpec::linear(half());
        let psi = pos(&[3.0, -5.0]);
        let out = extension_equivalence_check(
            |p| a.evaluate(p),
            |p| b.evaluate(p),
            &psi,
            &cfg,
        )
        .unwrap();
        assert!(out.passed, "gap {}", out.gap);

        // zero input, normalized measures
        let out = extension_equivalence_check(
            |p| a.evaluate(p),
            |p| b.evaluate(p),
            &pos(&[0.0, 0.0]),
            &cfg,
        )
        .unwrap();
        assert!(out.base_value.abs() < 1e-7 && out.extended_value.abs() < 1e-7);
    }

    #[test]
    fn extension_equivalence_on_envelope_instances() {
        let cfg = DescentConfig::default();
        let a = Reserve::Envelope {
            base: RiskMeasureSpec::linear(half()),
            envelope: DiscountEnvelope::constant(2, 0.8, 1.0).unwrap(),
        };
        let b = Reserve::Envelope {
            base: RiskMeasureSpec::linear(half()),
            envelope: DiscountEnvelope::constant(2, 0.9, 1.0).unwrap(),
        };
        for psi in [pos(&[3.0, -5.0]), pos(&[8.0, 2.0]), pos(&[-4.0, -1.0])] {
            let out = extension_equivalence_check(
                |p| a.evaluate(p),
                |p| b.evaluate(p),
                &psi,
                &cfg,
            )
            .unwrap();
            assert!(out.gap <= EXTENSION_EQUIVALENCE_TOL, "gap {}", out.gap);
        }
    }

    #[test]
    fn identical_envelope_penalties_are_idempotent_under_addition() {
        // indicator penalties: the summed table has the same 0/infinity
        // pattern as each summand
        let reserve = Reserve::Envelope {
            base: RiskMeasureSpec::linear(half()),
            envelope: DiscountEnvelope::constant(2, 0.6, 1.0).unwrap(),
        };
        let space = ScenarioSpace::of_size(2).unwrap();
        let mu_grid = GridSpec::new(11, 1.0).unwrap();
        let pos_grid = GridSpec::new(5, 40.0).unwrap();
        let table = SubPenaltyTable::build(&reserve, &space, &mu_grid, &pos_grid).unwrap();
        for idx in 0..table.entries().len() {
            let summed = summed_penalty(&table, &table, idx);
            assert_eq!(summed, table.entries()[idx].1);
        }
    }
}
