//! Equi-confounding estimators and the closed-form bias bounds.
//!
//! Both estimators only touch the unit time-means produced by
//! [`aggregate`](crate::panel::aggregate); covariates are never read.
//!
//! * Linear: `(Y_1 - F_1) - mean_i (Y_i - F_i)`.
//! * Logarithmic: `Y_1 - F_1 / sum_i F_i * sum_i Y_i`, sums over donors.

use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::UnitAggregates;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquiMethod {
    Linear,
    Logarithmic,
}

/// The constituent means an equi-confounding estimate is built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquiComponents {
    pub target_y: f64,
    pub target_f: f64,
    pub donor_y_mean: f64,
    pub donor_f_mean: f64,
    pub donor_y_sum: f64,
    pub donor_f_sum: f64,
    pub donors: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquiEstimate {
    pub method: EquiMethod,
    pub psi_hat: f64,
    pub components: EquiComponents,
}

impl EquiEstimate {
    /// Re-evaluates the defining formula from the stored components.
    pub fn recompute(&self) -> f64 {
        let c = &self.components;
        match self.method {
            EquiMethod::Linear => (c.target_y - c.target_f) - (c.donor_y_mean - c.donor_f_mean),
            EquiMethod::Logarithmic => c.target_y - c.target_f / c.donor_f_sum * c.donor_y_sum,
        }
    }
}

fn components(agg: &UnitAggregates) -> Result<EquiComponents> {
    let n = agg.y_bar.len();
    if n != agg.f_bar.len() {
        return Err(Error::Dimension(format!(
            "y_bar has {n} units but f_bar has {}",
            agg.f_bar.len()
        )));
    }
    if n < 2 {
        return Err(Error::Precondition("at least one donor is required".into()));
    }
    let j = (n - 1) as f64;
    let donor_y_sum: f64 = agg.y_bar[1..].iter().sum();
    let donor_f_sum: f64 = agg.f_bar[1..].iter().sum();
    Ok(EquiComponents {
        target_y: agg.y_bar[0],
        target_f: agg.f_bar[0],
        donor_y_mean: donor_y_sum / j,
        donor_f_mean: donor_f_sum / j,
        donor_y_sum,
        donor_f_sum,
        donors: n - 1,
    })
}

pub fn estimate_linear_equi(agg: &UnitAggregates) -> Result<EquiEstimate> {
    let components = components(agg)?;
    // Per-unit differences keep the cancellation exact when Y == F.
    let j = components.donors as f64;
    let donor_gap: f64 = agg.y_bar[1..]
        .iter()
        .zip(&agg.f_bar[1..])
        .map(|(y, f)| y - f)
        .sum::<f64>()
        / j;
    Ok(EquiEstimate {
        method: EquiMethod::Linear,
        psi_hat: (agg.y_bar[0] - agg.f_bar[0]) - donor_gap,
        components,
    })
}

/// Requires every `f_bar` to be strictly positive.
pub fn estimate_log_equi(agg: &UnitAggregates) -> Result<EquiEstimate> {
    let components = components(agg)?;
    if let Some((row, v)) = agg.f_bar.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::Domain(format!(
            "logarithmic equi-confounding needs positive reference means; unit at row {} has mean {v}",
            row + 1
        )));
    }
    let psi_hat =
        components.target_y - components.target_f / components.donor_f_sum * components.donor_y_sum;
    Ok(EquiEstimate {
        method: EquiMethod::Logarithmic,
        psi_hat,
        components,
    })
}

/// Assumption constants for the logarithmic equi-confounding bias bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEquiBoundInputs {
    /// Bounds on the target-domain untreated unit means, `lower_y <= Y <= upper_y`.
    pub lower_y: f64,
    pub upper_y: f64,
    /// Bounds on the reference-domain unit means.
    pub lower_f: f64,
    pub upper_f: f64,
    /// Bound on the average absolute covariance among donor reference means.
    pub tau: f64,
    /// Bound on the average absolute target/donor cross-covariance (refined bound only).
    pub tau1: Option<f64>,
    /// Bound on the covariance between the reference ratio and the donor target mean.
    pub ratio_cov: f64,
    pub donors: usize,
}

impl LogEquiBoundInputs {
    pub fn check(&self) -> Result<()> {
        if !(self.lower_y > 0.0 && self.lower_y <= self.upper_y) {
            return Err(Error::Domain(format!(
                "need 0 < lower_y <= upper_y, got {} and {}",
                self.lower_y, self.upper_y
            )));
        }
        if !(self.lower_f > 0.0 && self.lower_f <= self.upper_f) {
            return Err(Error::Domain(format!(
                "need 0 < lower_f <= upper_f, got {} and {}",
                self.lower_f, self.upper_f
            )));
        }
        if !(self.tau >= 0.0 && self.ratio_cov >= 0.0 && self.tau1.map_or(true, |t| t >= 0.0)) {
            return Err(Error::Domain("tau, tau1 and ratio_cov must be nonnegative".into()));
        }
        if self.donors == 0 {
            return Err(Error::Domain("donors must be positive".into()));
        }
        Ok(())
    }

    fn spread_f(&self) -> f64 {
        self.upper_f - self.lower_f
    }
}

pub fn bias_bound_log_equi(inp: &LogEquiBoundInputs) -> Result<f64> {
    inp.check()?;
    let d = inp.spread_f();
    let lf = inp.lower_f;
    let j = inp.donors as f64;
    let core = d * d / (4.0 * lf * lf) / libm::sqrt(j)
        + d / (2.0 * lf * lf) * libm::sqrt(inp.tau)
        + inp.upper_f / (lf * lf * lf) * (d * d / (4.0 * j) + inp.tau);
    Ok(inp.upper_y * core + inp.ratio_cov)
}

/// Tighter variant that also uses the target/donor cross-covariance bound `tau1`.
pub fn bias_bound_log_equi_refined(inp: &LogEquiBoundInputs) -> Result<f64> {
    let tau1 = inp
        .tau1
        .ok_or_else(|| Error::Precondition("the refined bound requires tau1".into()))?;
    inp.check()?;
    let d = inp.spread_f();
    let lf = inp.lower_f;
    let j = inp.donors as f64;
    let core = tau1 / (lf * lf) + (d + inp.upper_f) / (lf * lf * lf) * (d * d / (4.0 * j) + inp.tau);
    Ok(inp.upper_y * core + inp.ratio_cov)
}

/// Factor-model constants for the synthetic-control bias bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthBoundInputs {
    /// Sup-norm bound on the shared-factor loadings in the reference domain.
    pub theta_bar: f64,
    /// Same for the reference-only factor loadings.
    pub theta_tilde_bar: f64,
    /// Sup-norm bound on the shared-factor loadings in the target domain.
    pub vartheta_bar: f64,
    /// Target-only loadings bound; does not enter the bound.
    pub vartheta_tilde_bar: f64,
    /// Sub-Gaussian variance proxy (as a standard deviation) of the reference shocks.
    pub sigma_bar: f64,
    /// Sub-Gaussian proxy of the domain-exclusive latent factors.
    pub tau: f64,
    /// Lower bound on the smallest eigenvalue of the loading Gram matrix divided by T.
    pub xi_lower: f64,
    pub periods: usize,
    pub donors: usize,
}

impl SynthBoundInputs {
    pub fn check(&self) -> Result<()> {
        let positive = [
            ("theta_bar", self.theta_bar),
            ("vartheta_bar", self.vartheta_bar),
            ("vartheta_tilde_bar", self.vartheta_tilde_bar),
            ("sigma_bar", self.sigma_bar),
            ("xi_lower", self.xi_lower),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.theta_tilde_bar >= 0.0 && self.tau >= 0.0) {
            return Err(Error::Domain("theta_tilde_bar and tau must be nonnegative".into()));
        }
        if self.periods == 0 || self.donors == 0 {
            return Err(Error::Domain("periods and donors must be positive".into()));
        }
        Ok(())
    }
}

pub fn bias_bound_synth(inp: &SynthBoundInputs) -> Result<f64> {
    inp.check()?;
    let log2j = libm::log(2.0 * inp.donors as f64);
    let scale = inp.vartheta_bar * inp.theta_bar / inp.xi_lower;
    let noise_term = core::f64::consts::SQRT_2 * scale * inp.sigma_bar * libm::sqrt(log2j / inp.periods as f64);
    let exclusive_term = 2.0 * scale * inp.theta_tilde_bar * inp.tau * libm::sqrt(log2j);
    Ok(noise_term + exclusive_term)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn agg(y: &[f64], f: &[f64]) -> UnitAggregates {
        UnitAggregates {
            y_bar: y.to_vec(),
            f_bar: f.to_vec(),
        }
    }

    #[test]
    fn linear_single_donor() {
        let e = estimate_linear_equi(&agg(&[5.0, 2.0], &[3.0, 1.0])).unwrap();
        assert_eq!(e.psi_hat, 1.0);
        assert_eq!(e.recompute(), 1.0);
    }

    #[test]
    fn linear_identity_cancellation() {
        let v = [1.3, -2.0, 7.25, 0.1];
        let e = estimate_linear_equi(&agg(&v, &v)).unwrap();
        assert_eq!(e.psi_hat, 0.0);
    }

    #[test]
    fn log_direct_formula() {
        // donors: F sums to 4, Y sums to 12
        let e = estimate_log_equi(&agg(&[10.0, 5.0, 7.0], &[2.0, 1.0, 3.0])).unwrap();
        assert_eq!(e.psi_hat, 4.0);
        assert_eq!(e.components.donor_f_sum, 4.0);
        assert_eq!(e.components.donor_y_sum, 12.0);
        assert!((e.recompute() - e.psi_hat).abs() <= 1e-12 * e.psi_hat.abs());
    }

    #[test]
    fn log_proportional_gives_zero() {
        let y = [2.0, 3.0, 5.0, 11.0];
        let f: vec::Vec<f64> = y.iter().map(|v| 0.25 * v).collect();
        let e = estimate_log_equi(&agg(&y, &f)).unwrap();
        assert!(e.psi_hat.abs() < 1e-12);
    }

    #[test]
    fn log_rejects_nonpositive_reference() {
        let err = estimate_log_equi(&agg(&[1.0, 1.0, 1.0], &[1.0, 0.0, 2.0])).unwrap_err();
        match err {
            Error::Domain(msg) => assert!(msg.contains("row 2"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn estimators_need_donors() {
        assert!(matches!(
            estimate_linear_equi(&agg(&[1.0], &[1.0])),
            Err(Error::Precondition(_))
        ));
    }

    fn log_inputs(j: usize) -> LogEquiBoundInputs {
        LogEquiBoundInputs {
            lower_y: 0.5,
            upper_y: 1.0,
            lower_f: 1.0,
            upper_f: 2.0,
            tau: 0.0,
            tau1: Some(0.0),
            ratio_cov: 0.0,
            donors: j,
        }
    }

    #[test]
    fn log_bound_hand_values() {
        assert!((bias_bound_log_equi(&log_inputs(100)).unwrap() - 0.03).abs() < 1e-12);
        assert!((bias_bound_log_equi_refined(&log_inputs(100)).unwrap() - 0.0075).abs() < 1e-12);
    }

    #[test]
    fn log_bound_degenerate_spread() {
        let inp = LogEquiBoundInputs {
            lower_f: 2.0,
            upper_f: 2.0,
            ratio_cov: 0.125,
            ..log_inputs(17)
        };
        assert_eq!(bias_bound_log_equi(&inp).unwrap(), 0.125);
    }

    #[test]
    fn refined_requires_tau1() {
        let inp = LogEquiBoundInputs {
            tau1: None,
            ..log_inputs(10)
        };
        assert!(matches!(
            bias_bound_log_equi_refined(&inp),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn bad_bounds_rejected() {
        let inp = LogEquiBoundInputs {
            lower_f: 0.0,
            ..log_inputs(10)
        };
        assert!(bias_bound_log_equi(&inp).is_err());
    }

    #[test]
    fn synth_bound_first_term() {
        let inp = SynthBoundInputs {
            theta_bar: 1.0,
            theta_tilde_bar: 0.0,
            vartheta_bar: 1.0,
            vartheta_tilde_bar: 1.0,
            sigma_bar: 1.0,
            tau: 0.0,
            xi_lower: 1.0,
            periods: 100,
            donors: 8,
        };
        let b = bias_bound_synth(&inp).unwrap();
        assert!((b - 0.235_482_004_503_094_95).abs() < 1e-12);
        let quad = bias_bound_synth(&SynthBoundInputs { periods: 400, ..inp }).unwrap();
        assert!((quad - b / 2.0).abs() < 1e-12);
    }
}
