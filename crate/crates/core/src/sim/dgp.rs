use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::rng::{gaussian, gaussians, uniform, uniforms, Role};
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::panel::PanelDataset;

/// Parameters of the latent factor-model generator.
///
/// Structural draws (covariates, shared latent factors, loadings, intercepts
/// and effects) are keyed by `master_seed`. Shocks and domain-exclusive latent
/// factors are keyed by `master_seed ^ replicate`, so replicates of one
/// configuration share the structure and differ only in noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DgpConfig {
    pub donors: usize,
    pub target_periods: usize,
    pub reference_periods: usize,
    pub d_r: usize,
    pub d_t: usize,
    pub d_u: usize,
    pub d_tilde_y: usize,
    pub d_tilde_f: usize,
    /// Gaussian variance of the reference-domain shocks.
    pub noise_var_ref: f64,
    /// Gaussian variance of the target-domain shocks.
    pub noise_var_target: f64,
    pub loading_range: (f64, f64),
    pub covariate_range: (f64, f64),
    pub intercept_range_ref: (f64, f64),
    pub intercept_range_target: (f64, f64),
    pub alpha_range: (f64, f64),
    /// Variance of the domain-exclusive latent factors.
    pub tilde_variance: f64,
    /// Reference intercepts are drawn in blocks of this many periods and each
    /// block is sorted; a panel keeps the first `reference_periods` values.
    /// Panels sharing the horizon therefore nest exactly in T, and within one
    /// block the intercepts increase.
    pub reference_horizon: usize,
    /// Target-indicator shift shared by both domains in the additive
    /// equi-confounding generator.
    pub indicator_shift: f64,
    pub master_seed: u64,
    pub replicate: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            donors: 30,
            target_periods: 5,
            reference_periods: 20,
            d_r: 3,
            d_t: 3,
            d_u: 3,
            d_tilde_y: 0,
            d_tilde_f: 0,
            noise_var_ref: 2.0,
            noise_var_target: 0.5,
            loading_range: (0.0, 10.0),
            covariate_range: (0.0, 1.0),
            intercept_range_ref: (0.0, 20.0),
            intercept_range_target: (0.0, 10.0),
            alpha_range: (2.0, 5.0),
            tilde_variance: 1.0,
            reference_horizon: 100,
            indicator_shift: 1.0,
            master_seed: 0,
            replicate: 0,
        }
    }
}

impl DgpConfig {
    pub fn check(&self) -> Result<()> {
        if self.donors == 0 || self.target_periods == 0 || self.reference_periods == 0 {
            return Err(Error::Domain("donors, target_periods and reference_periods must be >= 1".into()));
        }
        if !(self.noise_var_ref >= 0.0 && self.noise_var_target >= 0.0 && self.tilde_variance >= 0.0) {
            return Err(Error::Domain("variances must be nonnegative".into()));
        }
        let ranges = [
            ("loading_range", self.loading_range),
            ("covariate_range", self.covariate_range),
            ("intercept_range_ref", self.intercept_range_ref),
            ("intercept_range_target", self.intercept_range_target),
            ("alpha_range", self.alpha_range),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return Err(Error::Domain(format!("{name} ({lo}, {hi}) is not an ordered finite range")));
            }
        }
        Ok(())
    }

    pub fn units(&self) -> usize {
        self.donors + 1
    }

    pub(crate) fn noise_seed(&self) -> u64 {
        self.master_seed ^ self.replicate
    }
}

/// A generated panel together with the quantities only a simulation knows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedPanel {
    pub dataset: PanelDataset,
    /// Untreated target-domain outcomes, (J+1) x S.
    pub counterfactual_y0: Matrix,
    /// Per-period effects on the target unit.
    pub alpha: Vec<f64>,
    /// Average effect on the treated, `mean(alpha)`.
    pub psi0: f64,
    /// Shared latent factors, (J+1) x d_u.
    pub latent_mu: Matrix,
}

fn unit_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| if i == 0 { "target".into() } else { format!("donor{i:03}") }).collect()
}

fn reference_intercepts(cfg: &DgpConfig, periods: usize) -> Vec<f64> {
    let h = cfg.reference_horizon.max(1);
    let mut out = Vec::with_capacity(periods.div_ceil(h) * h);
    for block in 0..periods.div_ceil(h) {
        let start = block * h;
        out.extend(sorted(
            (start..start + h)
                .map(|t| uniform(cfg.master_seed, Role::InterceptRef, 0, t as u64, cfg.intercept_range_ref))
                .collect(),
        ));
    }
    out.truncate(periods);
    out
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_unstable_by(f64::total_cmp);
    v
}

/// Factor-model panel:
///
/// ```text
/// Y_is = varrho_s + varphi_s'X_i + vartheta_s'mu_i + vartheta~_s'mu~Y_i + alpha_s 1{i=1} + eps_is
/// F_it = rho_t    + phi_t'Z_i    + theta_t'mu_i    + theta~_t'mu~F_i   + eps'_it
/// ```
pub fn generate_dgp(cfg: &DgpConfig) -> Result<SimulatedPanel> {
    cfg.check()?;
    let n = cfg.units();
    let (s_len, t_len) = (cfg.target_periods, cfg.reference_periods);
    let seed = cfg.master_seed;
    let noise = cfg.noise_seed();

    let per_unit = |role, dim, range| -> Matrix {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| uniforms(seed, role, i as u64, 0, dim, range)).collect();
        Matrix::from_vec(n, dim, rows.concat()).expect("consistent rows")
    };
    let x = per_unit(Role::CovariateX, cfg.d_t, cfg.covariate_range);
    let z = per_unit(Role::CovariateZ, cfg.d_r, cfg.covariate_range);
    let mu = per_unit(Role::LatentMu, cfg.d_u, cfg.covariate_range);
    let mu_tilde_y: Vec<Vec<f64>> = (0..n)
        .map(|i| gaussians(noise, Role::ExclusiveMuTarget, i as u64, 0, cfg.d_tilde_y, cfg.tilde_variance))
        .collect();
    let mu_tilde_f: Vec<Vec<f64>> = (0..n)
        .map(|i| gaussians(noise, Role::ExclusiveMuRef, i as u64, 0, cfg.d_tilde_f, cfg.tilde_variance))
        .collect();

    let rho = reference_intercepts(cfg, t_len);
    let varrho = sorted(
        (0..s_len)
            .map(|s| uniform(seed, Role::InterceptTarget, 0, s as u64, cfg.intercept_range_target))
            .collect(),
    );
    let alpha = sorted(
        (0..s_len)
            .map(|s| uniform(seed, Role::Alpha, 0, s as u64, cfg.alpha_range))
            .collect(),
    );

    let mut f = Matrix::zeros(n, t_len);
    for t in 0..t_len {
        let phi = uniforms(seed, Role::LoadingZ, 0, t as u64, cfg.d_r, cfg.loading_range);
        let theta = uniforms(seed, Role::LoadingThetaRef, 0, t as u64, cfg.d_u, cfg.loading_range);
        let theta_tilde = uniforms(seed, Role::LoadingThetaTildeRef, 0, t as u64, cfg.d_tilde_f, cfg.loading_range);
        for i in 0..n {
            let v = rho[t]
                + dot(&phi, z.row(i))
                + dot(&theta, mu.row(i))
                + dot(&theta_tilde, &mu_tilde_f[i])
                + gaussian(noise, Role::NoiseRef, i as u64, t as u64, cfg.noise_var_ref);
            f.set(i, t, v);
        }
    }

    let mut y0 = Matrix::zeros(n, s_len);
    for s in 0..s_len {
        let varphi = uniforms(seed, Role::LoadingX, 0, s as u64, cfg.d_t, cfg.loading_range);
        let vartheta = uniforms(seed, Role::LoadingVarthetaTarget, 0, s as u64, cfg.d_u, cfg.loading_range);
        let vartheta_tilde =
            uniforms(seed, Role::LoadingVarthetaTildeTarget, 0, s as u64, cfg.d_tilde_y, cfg.loading_range);
        for i in 0..n {
            let v = varrho[s]
                + dot(&varphi, x.row(i))
                + dot(&vartheta, mu.row(i))
                + dot(&vartheta_tilde, &mu_tilde_y[i])
                + gaussian(noise, Role::NoiseTarget, i as u64, s as u64, cfg.noise_var_target);
            y0.set(i, s, v);
        }
    }
    Ok(assemble(n, y0, f, x, z, alpha, mu))
}

fn assemble(n: usize, y0: Matrix, f: Matrix, x: Matrix, z: Matrix, mut alpha: Vec<f64>, mu: Matrix) -> SimulatedPanel {
    let mut y = y0.clone();
    for (s, a) in alpha.iter_mut().enumerate() {
        y.set(0, s, y0.get(0, s) + *a);
        // store the effect as realized in floating point so Y - Y0 = alpha exactly
        *a = y.get(0, s) - y0.get(0, s);
    }
    let psi0 = alpha.iter().sum::<f64>() / alpha.len() as f64;
    SimulatedPanel {
        dataset: PanelDataset::new(unit_ids(n), y, f, x, z),
        counterfactual_y0: y0,
        alpha,
        psi0,
        latent_mu: mu,
    }
}

/// Additive structural model under which linear equi-confounding holds:
///
/// ```text
/// Y_is = varrho_s + beta'X_i  + c 1{i=1} + effect 1{i=1} + eps_is
/// F_it = rho_t    + gamma'Z_i + c 1{i=1} + eps'_it
/// ```
///
/// `X_i` and `Z_i` are redrawn per replicate; `c` is `indicator_shift`.
pub fn generate_additive(cfg: &DgpConfig, effect: f64) -> Result<SimulatedPanel> {
    cfg.check()?;
    let n = cfg.units();
    let (s_len, t_len) = (cfg.target_periods, cfg.reference_periods);
    let seed = cfg.master_seed;
    let noise = cfg.noise_seed();
    let shift = cfg.indicator_shift;

    let beta = uniforms(seed, Role::AdditiveLoadingX, 0, 0, cfg.d_t, cfg.loading_range);
    let gamma = uniforms(seed, Role::AdditiveLoadingZ, 0, 0, cfg.d_r, cfg.loading_range);
    let x_rows: Vec<Vec<f64>> = (0..n)
        .map(|i| uniforms(noise, Role::CovariateX, i as u64, 0, cfg.d_t, cfg.covariate_range))
        .collect();
    let z_rows: Vec<Vec<f64>> = (0..n)
        .map(|i| uniforms(noise, Role::CovariateZ, i as u64, 0, cfg.d_r, cfg.covariate_range))
        .collect();
    let x = Matrix::from_vec(n, cfg.d_t, x_rows.concat())?;
    let z = Matrix::from_vec(n, cfg.d_r, z_rows.concat())?;
    let rho = reference_intercepts(cfg, t_len);
    let varrho = sorted(
        (0..s_len)
            .map(|s| uniform(seed, Role::InterceptTarget, 0, s as u64, cfg.intercept_range_target))
            .collect(),
    );
    let indicator = |i: usize| if i == 0 { 1.0 } else { 0.0 };

    let mut f = Matrix::zeros(n, t_len);
    for t in 0..t_len {
        for i in 0..n {
            let v = rho[t]
                + dot(&gamma, z.row(i))
                + shift * indicator(i)
                + gaussian(noise, Role::NoiseRef, i as u64, t as u64, cfg.noise_var_ref);
            f.set(i, t, v);
        }
    }
    let mut y0 = Matrix::zeros(n, s_len);
    for s in 0..s_len {
        for i in 0..n {
            let v = varrho[s]
                + dot(&beta, x.row(i))
                + shift * indicator(i)
                + gaussian(noise, Role::NoiseTarget, i as u64, s as u64, cfg.noise_var_target);
            y0.set(i, s, v);
        }
    }
    Ok(assemble(n, y0, f, x, z, vec![effect; s_len], Matrix::empty_cols(n)))
}

/// Multiplicative design under which logarithmic equi-confounding holds with
/// independent donors:
///
/// ```text
/// Y0_is = m_i + u_is,          u ~ Unif(-h, h)
/// F_it  = scale (m_i + v_it),  v ~ Unif(-h, h)
/// ```
///
/// Unit levels `m_i ~ Unif(level_range)` are structural; shocks are per replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScaledLogDesign {
    pub level_range: (f64, f64),
    pub scale: f64,
    pub half_width: f64,
    pub effect: f64,
}

impl Default for ScaledLogDesign {
    fn default() -> Self {
        ScaledLogDesign {
            level_range: (5.0, 15.0),
            scale: 2.0,
            half_width: 1.0,
            effect: 3.0,
        }
    }
}

impl ScaledLogDesign {
    pub fn check(&self) -> Result<()> {
        let (lo, hi) = self.level_range;
        if !(lo <= hi && lo - self.half_width > 0.0 && self.scale > 0.0 && self.half_width >= 0.0) {
            return Err(Error::Domain(
                "scaled design needs positive outcomes: level_range.0 - half_width > 0 and scale > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn unit_levels(&self, cfg: &DgpConfig) -> Vec<f64> {
        (0..cfg.units())
            .map(|i| uniform(cfg.master_seed, Role::UnitLevel, i as u64, 0, self.level_range))
            .collect()
    }

    pub fn generate(&self, cfg: &DgpConfig) -> Result<SimulatedPanel> {
        cfg.check()?;
        self.check()?;
        let n = cfg.units();
        let noise = cfg.noise_seed();
        let levels = self.unit_levels(cfg);
        let h = (-self.half_width, self.half_width);
        let mut y0 = Matrix::zeros(n, cfg.target_periods);
        let mut f = Matrix::zeros(n, cfg.reference_periods);
        for i in 0..n {
            let u = uniforms(noise, Role::NoiseTarget, i as u64, 0, cfg.target_periods, h);
            for (s, e) in u.iter().enumerate() {
                y0.set(i, s, levels[i] + e);
            }
            let v = uniforms(noise, Role::NoiseRef, i as u64, 0, cfg.reference_periods, h);
            for (t, e) in v.iter().enumerate() {
                f.set(i, t, self.scale * (levels[i] + e));
            }
        }
        Ok(assemble(
            n,
            y0,
            f,
            Matrix::empty_cols(n),
            Matrix::empty_cols(n),
            vec![self.effect; cfg.target_periods],
            Matrix::empty_cols(n),
        ))
    }
}

/// Which generator an experiment draws from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Design {
    FactorModel,
    Additive { effect: f64 },
    ScaledLog(ScaledLogDesign),
}

impl Design {
    pub fn generate(&self, cfg: &DgpConfig) -> Result<SimulatedPanel> {
        match self {
            Design::FactorModel => generate_dgp(cfg),
            Design::Additive { effect } => generate_additive(cfg, *effect),
            Design::ScaledLog(d) => d.generate(cfg),
        }
    }
}
