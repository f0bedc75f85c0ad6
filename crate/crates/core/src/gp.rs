//! Exact Gaussian-process regression on the unit square.
//!
//! Small and purpose-built for Bayesian optimization of decision surfaces:
//! two input dimensions, Matérn kernels with per-axis length scales, exact
//! Cholesky inference, and a coarse maximum-likelihood grid over
//! hyperparameters. Targets are standardized internally, so kernel
//! magnitudes and noise variances are expressed on the standardized scale.

use crate::error::Error;
use crate::Result;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

/// Kernel smoothness family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaternNu {
    /// Once-differentiable sample paths.
    ThreeHalves,
    /// Twice-differentiable sample paths (the default for smooth surfaces).
    #[default]
    FiveHalves,
}

/// Hyperparameters of the surrogate. `signal_variance` and `noise_variance`
/// are on the standardized-target scale, where the data variance is 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpConfig {
    pub nu: MaternNu,
    /// Correlation lengths per input axis, in unit-square coordinates.
    pub length_scales: [f64; 2],
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            nu: MaternNu::FiveHalves,
            length_scales: [0.25, 0.25],
            signal_variance: 1.0,
            noise_variance: 1e-4,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length_scales.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::invalid(format!(
                "length scales must be positive, got {:?}",
                self.length_scales
            )));
        }
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return Err(Error::invalid(format!(
                "signal variance must be positive, got {}",
                self.signal_variance
            )));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::invalid(format!(
                "noise variance must be nonnegative, got {}",
                self.noise_variance
            )));
        }
        Ok(())
    }
}

fn matern(nu: MaternNu, sf2: f64, ell: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d0 = (a[0] - b[0]) / ell[0];
    let d1 = (a[1] - b[1]) / ell[1];
    let r = (d0 * d0 + d1 * d1).sqrt();
    match nu {
        MaternNu::ThreeHalves => {
            let s = 3f64.sqrt() * r;
            sf2 * (1.0 + s) * (-s).exp()
        }
        MaternNu::FiveHalves => {
            let s = 5f64.sqrt() * r;
            sf2 * (1.0 + s + s * s / 3.0) * (-s).exp()
        }
    }
}

/// In-place lower Cholesky factorization of the row-major matrix `a`.
/// Fails on a non-positive pivot; the caller escalates jitter.
fn cholesky(a: &mut [f64], n: usize) -> std::result::Result<(), ()> {
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            if i == j {
                if s.is_nan() || s <= 0.0 {
                    return Err(());
                }
                a[i * n + i] = s.sqrt();
            } else {
                a[i * n + j] = s / a[j * n + j];
            }
        }
    }
    Ok(())
}

/// Solves L z = b in place (forward substitution, lower triangular L).
fn solve_lower(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves L' z = b in place (back substitution with the transpose of L).
fn solve_lower_t(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

/// A fitted Gaussian process.
#[derive(Debug, Clone)]
pub struct Gp {
    cfg: GpConfig,
    x: Vec<[f64; 2]>,
    y_mean: f64,
    y_sd: f64,
    /// Lower Cholesky factor of K + (noise + jitter) I.
    chol: Vec<f64>,
    /// (K + noise I)^{-1} y, standardized scale.
    alpha: Vec<f64>,
    /// Jitter that made the factorization succeed.
    jitter: f64,
    lml: f64,
}

impl Gp {
    /// Fits with fixed hyperparameters. Targets are standardized internally;
    /// a constant target gets unit scale so the fit stays well defined.
    pub fn fit(x: &[[f64; 2]], y: &[f64], cfg: &GpConfig) -> Result<Gp> {
        cfg.validate()?;
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::invalid(format!(
                "need matching nonempty inputs and targets, got {} and {}",
                x.len(),
                y.len()
            )));
        }
        if x.iter().flatten().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("GP data must be finite"));
        }
        let n = x.len();
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_sd = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_sd).collect();

        let mut base = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let k = matern(cfg.nu, cfg.signal_variance, cfg.length_scales, x[i], x[j]);
                base[i * n + j] = k;
                base[j * n + i] = k;
            }
        }
        let mut jitter = JITTER_START;
        loop {
            let mut k = base.clone();
            for i in 0..n {
                k[i * n + i] += cfg.noise_variance + jitter;
            }
            if cholesky(&mut k, n).is_ok() {
                let mut alpha = ys.clone();
                solve_lower(&k, n, &mut alpha);
                let ln_det_half: f64 = (0..n).map(|i| k[i * n + i].ln()).sum();
                let quad: f64 = alpha.iter().map(|z| z * z).sum();
                solve_lower_t(&k, n, &mut alpha);
                let lml = -0.5 * quad
                    - ln_det_half
                    - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
                return Ok(Gp { cfg: *cfg, x: x.to_vec(), y_mean, y_sd, chol: k, alpha, jitter, lml });
            }
            jitter *= 10.0;
            if jitter > JITTER_MAX {
                return Err(Error::IllConditioned { jitter });
            }
        }
    }

    /// Fits with hyperparameters chosen by marginal likelihood over a coarse
    /// grid around `cfg`: per-axis length scales at {0.5, 1, 2} times the
    /// configured value and noise at {floor, 0.01, 0.1}. `noise_floor` is in
    /// raw target units squared (e.g. a Monte Carlo standard error squared)
    /// and lower-bounds every noise candidate.
    pub fn fit_ml(x: &[[f64; 2]], y: &[f64], cfg: &GpConfig, noise_floor: f64) -> Result<Gp> {
        cfg.validate()?;
        if !(noise_floor >= 0.0 && noise_floor.is_finite()) {
            return Err(Error::invalid(format!("noise floor must be nonnegative, got {noise_floor}")));
        }
        let n = x.len().max(1) as f64;
        let y_mean = y.iter().sum::<f64>() / n;
        let y_var = (y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n).max(1e-24);
        let floor_std = (noise_floor / y_var).max(1e-8);
        let mut noises = vec![floor_std, 0.01f64.max(floor_std), 0.1f64.max(floor_std)];
        noises.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        let mut best: Option<Gp> = None;
        for &f0 in &[0.5, 1.0, 2.0] {
            for &f1 in &[0.5, 1.0, 2.0] {
                for &sn2 in &noises {
                    let cand = GpConfig {
                        nu: cfg.nu,
                        length_scales: [cfg.length_scales[0] * f0, cfg.length_scales[1] * f1],
                        signal_variance: cfg.signal_variance,
                        noise_variance: sn2,
                    };
                    match Gp::fit(x, y, &cand) {
                        Ok(g) => {
                            if best.as_ref().is_none_or(|b| g.lml > b.lml) {
                                best = Some(g);
                            }
                        }
                        Err(Error::IllConditioned { .. }) => continue,
                        Err(e) => return Err(e),
                    }
                }
            }
        }
        best.ok_or(Error::IllConditioned { jitter: JITTER_MAX })
    }

    /// Hyperparameters the fit ended up using.
    pub fn config(&self) -> &GpConfig {
        &self.cfg
    }

    /// Log marginal likelihood of the standardized targets.
    pub fn log_marginal(&self) -> f64 {
        self.lml
    }

    /// Posterior mean and variance at `x`, in raw target units.
    pub fn predict(&self, x: [f64; 2]) -> (f64, f64) {
        let n = self.x.len();
        let mut ks: Vec<f64> = (0..n)
            .map(|i| matern(self.cfg.nu, self.cfg.signal_variance, self.cfg.length_scales, self.x[i], x))
            .collect();
        let mean_std: f64 = ks.iter().zip(&self.alpha).map(|(k, a)| k * a).sum();
        solve_lower(&self.chol, n, &mut ks);
        let explained: f64 = ks.iter().map(|v| v * v).sum();
        let var_std = (self.cfg.signal_variance - explained).max(0.0);
        (self.y_mean + self.y_sd * mean_std, var_std * self.y_sd * self.y_sd)
    }

    /// Expected improvement over `best` for maximization, in raw units.
    /// `xi` trades exploration for exploitation.
    pub fn expected_improvement(&self, x: [f64; 2], best: f64, xi: f64) -> f64 {
        let (mean, var) = self.predict(x);
        let imp = mean - best - xi;
        let sd = var.sqrt();
        if sd < 1e-12 {
            return imp.max(0.0);
        }
        let z = imp / sd;
        let cdf = 0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2));
        let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        imp * cdf + sd * pdf
    }

    /// Noise variance the fit used, in raw target units squared.
    pub fn noise_variance_raw(&self) -> f64 {
        (self.cfg.noise_variance + self.jitter) * self.y_sd * self.y_sd
    }
}
