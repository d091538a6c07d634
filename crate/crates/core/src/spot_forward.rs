//! Conversion between spot and forward risk measures under a non-ambiguous
//! stochastic discount factor and a zero coupon bond.
//!
//! A spot measure prices discounted positions in today's cash; a forward
//! measure prices raw positions in horizon cash. With a bond quote `B` the
//! two are linked by `q_T(X) = B^-1 rho_0(D . X)` and
//! `q_0(Y) = B rho_T(Y / D)`, and the conversion is cash additive exactly
//! when the base measure satisfies the calibration constraint
//! `rho_0(lambda D) = -lambda B` for every lambda.

use crate::cash_additive::{PenaltyTable, RiskMeasureSpec, CLOSED_FORM_TOL};
use crate::error::{EngineError, Result};
use crate::scenario::{ensure_same_len, weights_close, Position, ProbabilityWeights, WEIGHT_EQ_TOL};

/// Default "bounded away from zero" threshold for discount factors.
pub const DISCOUNT_FLOOR: f64 = 1e-6;

/// Per-atom realization of the discount factor, entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountFactor {
    values: Vec<f64>,
}

impl DiscountFactor {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(EngineError::Validation("discount factor must be nonempty".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(EngineError::Validation(
                "discount factor entries must lie in [0, 1]".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn constant(n: usize, d: f64) -> Result<Self> {
        Self::new(vec![d; n])
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

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |a, &b| a.min(b))
    }

    pub fn is_bounded_away(&self, eps: f64) -> bool {
        self.min_value() >= eps
    }
}

/// Price of the zero coupon bond paying one horizon cash unit, in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BondQuote {
    price: f64,
}

impl BondQuote {
    pub fn new(price: f64) -> Result<Self> {
        if !(price > 0.0 && price <= 1.0) {
            return Err(EngineError::Validation(format!(
                "bond price {price} must lie in (0, 1]"
            )));
        }
        Ok(Self { price })
    }

    pub fn price(&self) -> f64 {
        self.price
    }
}

/// Forward value of a raw position: `B^-1 rho_0(D . X)`.
pub fn forward_from_spot(
    rho0: &RiskMeasureSpec,
    d: &DiscountFactor,
    b: &BondQuote,
    x: &Position,
) -> Result<f64> {
    ensure_same_len(d.len(), x.len())?;
    let discounted = x.mul_entrywise(d.values())?;
    Ok(rho0.evaluate(&discounted)? / b.price())
}

/// Spot value of a discounted position: `B rho_T(Y / D)`. Requires the
/// discount factor bounded away from zero.
pub fn spot_from_forward(
    rho_t: &RiskMeasureSpec,
    d: &DiscountFactor,
    b: &BondQuote,
    y: &Position,
) -> Result<f64> {
    ensure_same_len(d.len(), y.len())?;
    if !d.is_bounded_away(DISCOUNT_FLOOR) {
        return Err(EngineError::Numeric(format!(
            "discount factor min {} is below the division floor {DISCOUNT_FLOOR}",
            d.min_value()
        )));
    }
    let inverse: Vec<f64> = d.values().iter().map(|v| 1.0 / v).collect();
    let undiscounted = y.mul_entrywise(&inverse)?;
    Ok(b.price() * rho_t.evaluate(&undiscounted)?)
}

/// Full round trip `q_0(q_T)` starting from a spot measure; equals the spot
/// measure itself when the calibration constraint holds.
pub fn round_trip(
    rho0: &RiskMeasureSpec,
    d: &DiscountFactor,
    b: &BondQuote,
    y: &Position,
) -> Result<f64> {
    ensure_same_len(d.len(), y.len())?;
    if !d.is_bounded_away(DISCOUNT_FLOOR) {
        return Err(EngineError::Numeric(format!(
            "discount factor min {} is below the division floor {DISCOUNT_FLOOR}",
            d.min_value()
        )));
    }
    let inverse: Vec<f64> = d.values().iter().map(|v| 1.0 / v).collect();
    let undiscounted = y.mul_entrywise(&inverse)?;
    Ok(b.price() * forward_from_spot(rho0, d, b, &undiscounted)?)
}

/// Calibration report for `rho_0(lambda D) = -lambda B`.
#[derive(Debug, Clone)]
pub struct ForwardCalibrationReport {
    /// `(lambda, rho_0(lambda D), -lambda B)` for each failing lambda.
    pub failures: Vec<(f64, f64, f64)>,
    pub passed: bool,
}

/// Tests the calibration constraint on the supplied lambdas. Zero is always
/// included; the set must contain at least one positive and one negative
/// value (two nonzero points pin a linear function).
pub fn check_forward_calibration(
    rho0: &RiskMeasureSpec,
    d: &DiscountFactor,
    b: &BondQuote,
    lambdas: &[f64],
) -> Result<ForwardCalibrationReport> {
    if !lambdas.iter().any(|&l| l > 0.0) || !lambdas.iter().any(|&l| l < 0.0) {
        return Err(EngineError::Validation(
            "calibration lambdas must include both signs".into(),
        ));
    }
    let discount_pos = Position::new(d.values().to_vec())?;
    let mut failures = Vec::new();
    let mut all: Vec<f64> = lambdas.to_vec();
    if !all.contains(&0.0) {
        all.push(0.0);
    }
    for &l in &all {
        let lhs = rho0.evaluate(&discount_pos.scale(l))?;
        let rhs = -l * b.price();
        if (lhs - rhs).abs() > CLOSED_FORM_TOL {
            failures.push((l, lhs, rhs));
        }
    }
    let passed = failures.is_empty();
    Ok(ForwardCalibrationReport { failures, passed })
}

/// Transports a spot penalty table to the forward side:
/// `alpha_T(Q_T) = B^-1 alpha_0(Q_0)` with `(Q_0)_i = (B / D_i) (Q_T)_i`.
///
/// Candidate forward measures are the table's own grid points together with
/// the forward images `(D / B) . Q_0` of every finite entry (the inverse of
/// the density relation); an image qualifies only when it is itself a
/// probability vector, which happens exactly when the entry satisfies the
/// calibration constraint `E_{Q_0}[D] = B`. Candidates whose pullback misses
/// the finite domain of `alpha_0` are recorded with an infinite penalty.
pub fn transform_penalty(
    alpha0: &PenaltyTable,
    d: &DiscountFactor,
    b: &BondQuote,
) -> Result<PenaltyTable> {
    if !d.is_bounded_away(DISCOUNT_FLOOR) {
        return Err(EngineError::Numeric(format!(
            "discount factor min {} is below the division floor {DISCOUNT_FLOOR}",
            d.min_value()
        )));
    }
    let price = b.price();
    let mut candidates: Vec<ProbabilityWeights> = Vec::new();
    let push_unique = |w: ProbabilityWeights, out: &mut Vec<ProbabilityWeights>| {
        if !out.iter().any(|c| weights_close(c.weights(), w.weights(), WEIGHT_EQ_TOL)) {
            out.push(w);
        }
    };
    for (q, a) in alpha0.entries() {
        ensure_same_len(d.len(), q.len())?;
        push_unique(q.clone(), &mut candidates);
        if a.is_finite() {
            let image: Vec<f64> = q
                .weights()
                .iter()
                .zip(d.values())
                .map(|(qi, di)| qi * di / price)
                .collect();
            if let Ok(w) = ProbabilityWeights::normalized(image, 1e-9) {
                push_unique(w, &mut candidates);
            }
        }
    }
    let mut entries = Vec::new();
    for q_t in candidates {
        let pullback: Vec<f64> = q_t
            .weights()
            .iter()
            .zip(d.values())
            .map(|(qi, di)| qi * price / di)
            .collect();
        let matched = alpha0.entries().iter().find(|(q0, a)| {
            a.is_finite() && weights_close(q0.weights(), &pullback, 1e-9)
        });
        let value = match matched {
            Some((_, a)) => a / price,
            None => f64::INFINITY,
        };
        entries.push((q_t, value));
    }
    Ok(PenaltyTable::from_entries(entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::expectation;

    fn pos(v: &[f64]) -> Position {
        Position::new(v.to_vec()).unwrap()
    }

    fn half() -> ProbabilityWeights {
        ProbabilityWeights::new(vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn forward_from_spot_examples() {
        let rho0 = RiskMeasureSpec::linear(half());
        let d = DiscountFactor::constant(2, 0.9).unwrap();
        let b = BondQuote::new(0.9).unwrap();
        let v = forward_from_spot(&rho0, &d, &b, &pos(&[-10.0, 20.0])).unwrap();
        assert!((v - -5.0).abs() < 1e-12);

        assert_eq!(forward_from_spot(&rho0, &d, &b, &pos(&[0.0, 0.0])).unwrap(), 0.0);

        // constants map to minus themselves for a calibrated pair
        let v = forward_from_spot(&rho0, &d, &b, &pos(&[7.0, 7.0])).unwrap();
        assert!((v - -7.0).abs() < 1e-12);
    }

    #[test]
    fn spot_from_forward_examples() {
        let rho_t = RiskMeasureSpec::linear(half());
        let d = DiscountFactor::constant(2, 0.9).unwrap();
        let b = BondQuote::new(0.9).unwrap();
        let v = spot_from_forward(&rho_t, &d, &b, &pos(&[9.0, -18.0])).unwrap();
        assert!((v - 4.5).abs() < 1e-12);

        assert_eq!(spot_from_forward(&rho_t, &d, &b, &pos(&[0.0, 0.0])).unwrap(), 0.0);

        // y = lambda D gives -lambda B for any lambda
        for lambda in [-3.0, -1.0, 0.5, 2.0] {
            let y = pos(&d.values().iter().map(|v| lambda * v).collect::<Vec<_>>());
            let v = spot_from_forward(&rho_t, &d, &b, &y).unwrap();
            assert!((v - -lambda * b.price()).abs() < 1e-12, "lambda {lambda}");
        }
    }

    #[test]
    fn spot_from_forward_division_guard() {
        let rho_t = RiskMeasureSpec::linear(half());
        let d = DiscountFactor::new(vec![0.0, 0.9]).unwrap();
        let b = BondQuote::new(0.9).unwrap();
        assert!(matches!(
            spot_from_forward(&rho_t, &d, &b, &pos(&[1.0, 1.0])),
            Err(EngineError::Numeric(_))
        ));
    }

    #[test]
    fn calibration_pass_and_fail() {
        let q = half();
        let d = DiscountFactor::new(vec![0.8, 0.95]).unwrap();
        let b_cal = BondQuote::new(
            expectation(&q, &pos(d.values())).unwrap(),
        )
        .unwrap();
        let lam = [-2.0, -1.0, 1.0, 2.0];

        let lin = RiskMeasureSpec::linear(q.clone());
        assert!(check_forward_calibration(&lin, &d, &b_cal, &lam).unwrap().passed);

        let b_bad = BondQuote::new(0.7).unwrap();
        let report = check_forward_calibration(&lin, &d, &b_bad, &lam).unwrap();
        assert!(!report.passed);
        assert!(!report.failures.is_empty());

        // worst case with a non-constant discount factor is never calibrated
        let wc = RiskMeasureSpec::WorstCase;
        let report = check_forward_calibration(&wc, &d, &b_cal, &lam).unwrap();
        assert!(!report.passed);
    }

    #[test]
    fn forward_cash_additivity_follows_calibration() {
        let q = half();
        let d = DiscountFactor::new(vec![0.8, 0.95]).unwrap();
        let b = BondQuote::new(expectation(&q, &pos(d.values())).unwrap()).unwrap();
        let lin = RiskMeasureSpec::linear(q);
        let x = pos(&[3.0, -4.0]);
        let base = forward_from_spot(&lin, &d, &b, &x).unwrap();
        for m in [-2.5, -1.0, 0.5, 3.75] {
            let shifted = forward_from_spot(&lin, &d, &b, &x.shift(m)).unwrap();
            assert!((shifted - (base - m)).abs() < 1e-9);
        }
    }

    #[test]
    fn forward_cash_additivity_fails_without_calibration() {
        // worst case + non-constant D: exhibit a witness m
        let d = DiscountFactor::new(vec![0.8, 0.95]).unwrap();
        let b = BondQuote::new(0.9).unwrap();
        let wc = RiskMeasureSpec::WorstCase;
        let x = pos(&[3.0, -4.0]);
        let base = forward_from_spot(&wc, &d, &b, &x).unwrap();
        let witness = [-2.0, -1.0, 1.0, 2.0].iter().copied().find(|&m| {
            let shifted = forward_from_spot(&wc, &d, &b, &x.shift(m)).unwrap();
            (shifted - (base - m)).abs() > 1e-9
        });
        assert!(witness.is_some());
    }

    #[test]
    fn round_trip_reproduces_spot_measure() {
        let q = half();
        let d = DiscountFactor::new(vec![0.8, 0.95]).unwrap();
        let b = BondQuote::new(expectation(&q, &pos(d.values())).unwrap()).unwrap();
        let lin = RiskMeasureSpec::linear(q);
        for y in [pos(&[1.0, 2.0]), pos(&[-4.0, 9.0]), pos(&[0.0, 0.0])] {
            let rt = round_trip(&lin, &d, &b, &y).unwrap();
            let direct = lin.evaluate(&y).unwrap();
            assert!((rt - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn transform_penalty_constant_discount() {
        let table = PenaltyTable::from_entries(vec![(half(), 0.25)]);
        let d = DiscountFactor::constant(2, 0.8).unwrap();
        let b = BondQuote::new(0.8).unwrap();
        let out = transform_penalty(&table, &d, &b).unwrap();
        // Q_0 = Q_T, alpha_T = alpha_0 / B
        let finite: Vec<_> = out.entries().iter().filter(|(_, a)| a.is_finite()).collect();
        assert_eq!(finite.len(), 1);
        assert!(weights_close(finite[0].0.weights(), half().weights(), 1e-12));
        assert!((finite[0].1 - 0.25 / 0.8).abs() < 1e-12);
    }

    #[test]
    fn transform_penalty_inverts_density() {
        // single-entry linear table: finite image only at (D/B) . Q0
        let q0 = half();
        let d = DiscountFactor::new(vec![0.8, 0.95]).unwrap();
        let b = BondQuote::new(expectation(&q0, &pos(d.values())).unwrap()).unwrap();
        let table = PenaltyTable::from_entries(vec![(q0.clone(), 0.0)]);
        let out = transform_penalty(&table, &d, &b).unwrap();
        let expected: Vec<f64> = q0
            .weights()
            .iter()
            .zip(d.values())
            .map(|(q, dv)| q * dv / b.price())
            .collect();
        let finite: Vec<_> = out.entries().iter().filter(|(_, a)| a.is_finite()).collect();
        assert_eq!(finite.len(), 1);
        assert!(weights_close(finite[0].0.weights(), &expected, 1e-9));
        assert_eq!(finite[0].1, 0.0);
    }

    #[test]
    fn transform_penalty_empty_domain() {
        // uncalibrated single entry: the image is not a probability vector
        // and the pullback of the entry itself misses the domain.
        let q0 = half();
        let d = DiscountFactor::new(vec![0.8, 0.95]).unwrap();
        let b = BondQuote::new(0.7).unwrap();
        let table = PenaltyTable::from_entries(vec![(q0, 0.0)]);
        let out = transform_penalty(&table, &d, &b).unwrap();
        assert!(out.entries().iter().all(|(_, a)| !a.is_finite()));
    }
}
