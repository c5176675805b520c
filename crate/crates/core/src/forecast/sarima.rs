//! Seasonal ARIMA with an optional exogenous regressor.
//!
//! The model is a regression with SARIMA errors. With
//! `w = (1-B)^d (1-B^s)^D y` and `u` the same differencing of the
//! exogenous series,
//!
//! `phi(B) Phi(B^s) (w_t - mu - beta u_t) = theta(B) Theta(B^s) e_t`
//!
//! with AR polynomials written `1 - sum` and MA polynomials `1 + sum`.
//! The mean `mu` is only present without differencing. Parameters minimize
//! the conditional sum of squares with zero pre-sample residuals; `mu` and
//! `beta` are profiled out by least squares on the filtered regressors, and
//! the AR/MA coefficients are searched by Nelder-Mead through the
//! partial-autocorrelation map, so every candidate is stationary and
//! invertible.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::forecast::optim::{nelder_mead, NelderMeadOptions};

pub const SEASON: usize = 52;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SarimaSpec {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub sp: usize,
    pub sd: usize,
    pub sq: usize,
    pub period: usize,
}

impl SarimaSpec {
    pub fn new(p: usize, d: usize, q: usize, sp: usize, sd: usize, sq: usize) -> Self {
        SarimaSpec {
            p,
            d,
            q,
            sp,
            sd,
            sq,
            period: SEASON,
        }
    }

    pub fn with_period(mut self, period: usize) -> Self {
        self.period = period;
        self
    }

    pub fn n_arma(&self) -> usize {
        self.p + self.q + self.sp + self.sq
    }

    /// Observations consumed by differencing.
    pub fn diff_lag(&self) -> usize {
        self.d + self.period * self.sd
    }

    pub fn ar_lag(&self) -> usize {
        self.p + self.period * self.sp
    }

    pub fn is_seasonal(&self) -> bool {
        self.sp + self.sd + self.sq > 0
    }

    pub fn order_key(&self) -> (usize, usize, usize, usize, usize, usize) {
        (self.p, self.d, self.q, self.sp, self.sd, self.sq)
    }

    fn validate(&self) -> Result<()> {
        if self.d > 1 || self.sd > 1 {
            return Err(Error::Domain(format!("{self}: differencing orders must be 0 or 1")));
        }
        if self.period < 2 && self.is_seasonal() {
            return Err(Error::Domain(format!("{self}: seasonal period must be at least 2")));
        }
        Ok(())
    }

    /// Length the differenced series needs before this spec is fitted.
    pub fn min_differenced_len(&self) -> usize {
        let seasonal = if self.is_seasonal() { 2 * self.period } else { 0 };
        seasonal + self.p.max(self.q)
    }
}

impl fmt::Display for SarimaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{},{})x({},{},{})_{}",
            self.p, self.d, self.q, self.sp, self.sd, self.sq, self.period
        )
    }
}

/// Cartesian order grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SarimaGrid {
    pub p: Vec<usize>,
    pub d: Vec<usize>,
    pub q: Vec<usize>,
    pub sp: Vec<usize>,
    pub sd: Vec<usize>,
    pub sq: Vec<usize>,
    pub period: usize,
}

impl Default for SarimaGrid {
    fn default() -> Self {
        SarimaGrid {
            p: vec![0, 1, 2],
            d: vec![0, 1],
            q: vec![0, 1, 2],
            sp: vec![0, 1],
            sd: vec![0, 1],
            sq: vec![0, 1],
            period: SEASON,
        }
    }
}

impl SarimaGrid {
    pub fn single(spec: SarimaSpec) -> Self {
        SarimaGrid {
            p: vec![spec.p],
            d: vec![spec.d],
            q: vec![spec.q],
            sp: vec![spec.sp],
            sd: vec![spec.sd],
            sq: vec![spec.sq],
            period: spec.period,
        }
    }

    /// Specs in lexicographic order of (p, d, q, P, D, Q).
    pub fn specs(&self) -> Vec<SarimaSpec> {
        let mut out = Vec::new();
        for &p in &self.p {
            for &d in &self.d {
                for &q in &self.q {
                    for &sp in &self.sp {
                        for &sd in &self.sd {
                            for &sq in &self.sq {
                                out.push(SarimaSpec::new(p, d, q, sp, sd, sq).with_period(self.period));
                            }
                        }
                    }
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SarimaOptions {
    /// Random restarts in addition to the start at zero.
    pub restarts: usize,
    pub seed: u64,
    pub optimizer: NelderMeadOptions,
    /// First y index whose residual enters the objective. Defaults to the
    /// smallest index the orders allow.
    pub conditioning_start: Option<usize>,
}

impl Default for SarimaOptions {
    fn default() -> Self {
        SarimaOptions {
            restarts: 2,
            seed: 1,
            optimizer: NelderMeadOptions {
                initial_step: 0.5,
                max_evals: 1500,
                f_tol: 1e-10,
                x_tol: 1e-6,
            },
            conditioning_start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedSarima {
    pub spec: SarimaSpec,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub seasonal_ar: Vec<f64>,
    pub seasonal_ma: Vec<f64>,
    /// Mean of the series; absent when the model differences.
    pub mean: Option<f64>,
    /// Exogenous coefficient on the original scale of `x`.
    pub exog_coef: Option<f64>,
    /// Exogenous coefficient on the standardized scale.
    pub exog_coef_std: Option<f64>,
    pub sigma2: f64,
    pub css: f64,
    pub log_likelihood: f64,
    pub aic: f64,
    /// Free parameters including the innovation variance.
    pub n_params: usize,
    pub n_eff: usize,
    y: Vec<f64>,
    x: Option<Vec<f64>>,
    x_center: f64,
    x_scale: f64,
    residuals: Vec<f64>,
}

/// Maps unconstrained values to the coefficients of a stationary
/// `1 - sum c_k B^k` through partial autocorrelations in (-1, 1).
pub fn pacf_to_coefs(u: &[f64]) -> Vec<f64> {
    let mut phi: Vec<f64> = Vec::with_capacity(u.len());
    for (k, &v) in u.iter().enumerate() {
        let r = v.tanh().clamp(-1.0 + 1e-9, 1.0 - 1e-9);
        let prev = phi.clone();
        for j in 0..k {
            phi[j] = prev[j] - r * prev[k - 1 - j];
        }
        phi.push(r);
    }
    phi
}

/// Coefficients of `sign * (1 + sign * sum c_i B^i)(1 + sign * sum C_j B^(s j))`
/// after the leading 1, as sparse (lag, coefficient) pairs.
fn expand(nonseasonal: &[f64], seasonal: &[f64], period: usize, sign: f64) -> Vec<(usize, f64)> {
    let len = nonseasonal.len() + period * seasonal.len() + 1;
    let mut a = vec![0.0; nonseasonal.len() + 1];
    a[0] = 1.0;
    for (i, c) in nonseasonal.iter().enumerate() {
        a[i + 1] = sign * c;
    }
    let mut out = vec![0.0; len];
    for (i, ai) in a.iter().enumerate() {
        out[i] += ai;
        for (j, c) in seasonal.iter().enumerate() {
            out[i + period * (j + 1)] += ai * sign * c;
        }
    }
    out.iter()
        .enumerate()
        .skip(1)
        .filter(|(_, c)| **c != 0.0)
        .map(|(k, c)| (k, sign * c))
        .collect()
}

/// `(1-B)^d (1-B^s)^D` coefficients after the leading 1.
fn diff_poly(spec: &SarimaSpec) -> Vec<(usize, f64)> {
    let mut poly = vec![1.0];
    let mut mul = |lag: usize| {
        let mut next = vec![0.0; poly.len() + lag];
        for (i, c) in poly.iter().enumerate() {
            next[i] += c;
            next[i + lag] -= c;
        }
        poly = next;
    };
    for _ in 0..spec.d {
        mul(1);
    }
    for _ in 0..spec.sd {
        mul(spec.period);
    }
    poly.iter()
        .enumerate()
        .skip(1)
        .filter(|(_, c)| **c != 0.0)
        .map(|(k, c)| (k, *c))
        .collect()
}

fn difference(v: &[f64], spec: &SarimaSpec, poly: &[(usize, f64)]) -> Vec<f64> {
    let lag = spec.diff_lag();
    (lag..v.len())
        .map(|t| v[t] + poly.iter().map(|&(k, c)| c * v[t - k]).sum::<f64>())
        .collect()
}

struct Arma {
    /// `z_t = sum a_k z_{t-k} + ...`
    ar: Vec<(usize, f64)>,
    /// `... + e_t + sum m_k e_{t-k}`
    ma: Vec<(usize, f64)>,
    phi: Vec<f64>,
    theta: Vec<f64>,
    sphi: Vec<f64>,
    stheta: Vec<f64>,
}

impl Arma {
    fn from_unconstrained(spec: &SarimaSpec, u: &[f64]) -> Arma {
        let (p, q, sp) = (spec.p, spec.q, spec.sp);
        let phi = pacf_to_coefs(&u[..p]);
        let theta: Vec<f64> = pacf_to_coefs(&u[p..p + q]).iter().map(|c| -c).collect();
        let sphi = pacf_to_coefs(&u[p + q..p + q + sp]);
        let stheta: Vec<f64> = pacf_to_coefs(&u[p + q + sp..]).iter().map(|c| -c).collect();
        Arma {
            ar: expand(&phi, &sphi, spec.period, -1.0),
            ma: expand(&theta, &stheta, spec.period, 1.0),
            phi,
            theta,
            sphi,
            stheta,
        }
    }

    /// Residual filter with zero residuals before `t0`.
    fn filter(&self, v: &[f64], t0: usize) -> Vec<f64> {
        let mut e = vec![0.0; v.len()];
        for t in t0..v.len() {
            let mut r = v[t];
            for &(k, a) in &self.ar {
                r -= a * v[t - k];
            }
            for &(k, m) in &self.ma {
                if t >= k + t0 {
                    r -= m * e[t - k];
                }
            }
            e[t] = r;
        }
        e
    }
}

/// Differenced data with the regressors to profile out.
struct Prepared {
    w: Vec<f64>,
    u: Option<Vec<f64>>,
    with_mean: bool,
    t0: usize,
}

struct Profiled {
    css: f64,
    mean: Option<f64>,
    beta: Option<f64>,
    residuals: Vec<f64>,
}

impl Prepared {
    fn profile(&self, arma: &Arma) -> Profiled {
        let t0 = self.t0;
        let fw = arma.filter(&self.w, t0);
        let mut regs: Vec<Vec<f64>> = Vec::new();
        if self.with_mean {
            regs.push(arma.filter(&vec![1.0; self.w.len()], t0));
        }
        if let Some(u) = &self.u {
            regs.push(arma.filter(u, t0));
        }
        let coef = least_squares(&fw[t0..], &regs.iter().map(|r| &r[t0..]).collect::<Vec<_>>());
        let mut residuals = fw;
        for (r, b) in regs.iter().zip(&coef) {
            for t in t0..residuals.len() {
                residuals[t] -= b * r[t];
            }
        }
        let css = residuals[t0..].iter().map(|e| e * e).sum();
        let mut it = coef.into_iter();
        let mean = if self.with_mean { it.next() } else { None };
        let beta = if self.u.is_some() { it.next() } else { None };
        Profiled {
            css,
            mean,
            beta,
            residuals,
        }
    }
}

/// Least squares for at most two regressors; degenerate directions get a
/// zero coefficient.
fn least_squares(y: &[f64], x: &[&[f64]]) -> Vec<f64> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    match x.len() {
        0 => Vec::new(),
        1 => {
            let xx = dot(x[0], x[0]);
            vec![if xx > 1e-300 { dot(x[0], y) / xx } else { 0.0 }]
        }
        2 => {
            let (a, b, c) = (dot(x[0], x[0]), dot(x[0], x[1]), dot(x[1], x[1]));
            let (r0, r1) = (dot(x[0], y), dot(x[1], y));
            let det = a * c - b * b;
            if det > 1e-12 * a * c && det > 0.0 {
                vec![(c * r0 - b * r1) / det, (a * r1 - b * r0) / det]
            } else if a >= c && a > 1e-300 {
                vec![r0 / a, 0.0]
            } else if c > 1e-300 {
                vec![0.0, r1 / c]
            } else {
                vec![0.0, 0.0]
            }
        }
        _ => unreachable!("at most two profiled regressors"),
    }
}

fn spec_seed(seed: u64, spec: &SarimaSpec) -> u64 {
    let (p, d, q, sp, sd, sq) = spec.order_key();
    let code = ((((p * 3 + d) * 3 + q) * 3 + sp) * 3 + sd) * 3 + sq;
    seed ^ (code as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Fits `spec` to `y` with optional exogenous `x` of the same length.
pub fn fit_sarima(y: &[f64], x: Option<&[f64]>, spec: &SarimaSpec, options: &SarimaOptions) -> Result<FittedSarima> {
    spec.validate()?;
    if let Some(x) = x {
        if x.len() != y.len() {
            return Err(Error::Domain(format!(
                "exogenous series has {} values for {} observations",
                x.len(),
                y.len()
            )));
        }
    }
    if y.iter().any(|v| !v.is_finite()) || x.is_some_and(|x| x.iter().any(|v| !v.is_finite())) {
        return Err(Error::Domain("series contains non-finite values".into()));
    }
    let dpoly = diff_poly(spec);
    if y.len() < spec.diff_lag() + spec.min_differenced_len().max(1) {
        return Err(Error::InsufficientData(format!(
            "{spec}: {} observations, need {} after differencing",
            y.len(),
            spec.min_differenced_len()
        )));
    }
    let w = difference(y, spec, &dpoly);

    let (x_center, x_scale, u) = match x {
        Some(x) => {
            let n = x.len() as f64;
            let m = x.iter().sum::<f64>() / n;
            let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            if sd > 1e-12 * (1.0 + m.abs()) {
                let xs: Vec<f64> = x.iter().map(|v| (v - m) / sd).collect();
                (m, sd, Some(difference(&xs, spec, &dpoly)))
            } else {
                log::warn!("{spec}: exogenous series is constant in the window; coefficient fixed at 0");
                (m, 0.0, None)
            }
        }
        None => (0.0, 0.0, None),
    };

    let start = options.conditioning_start.unwrap_or(0);
    let t0 = start.saturating_sub(spec.diff_lag()).max(spec.ar_lag());
    let with_mean = spec.d + spec.sd == 0;
    let n_params = spec.n_arma() + usize::from(with_mean) + usize::from(u.is_some()) + 1;
    let n_eff = w.len().saturating_sub(t0);
    if n_eff < n_params + 2 {
        return Err(Error::InsufficientData(format!(
            "{spec}: {n_eff} usable residuals for {n_params} parameters"
        )));
    }
    let prepared = Prepared { w, u, with_mean, t0 };

    let dim = spec.n_arma();
    let objective = |v: &[f64]| prepared.profile(&Arma::from_unconstrained(spec, v)).css;
    let mut rng = ChaCha8Rng::seed_from_u64(spec_seed(options.seed, spec));
    let mut best = nelder_mead(objective, &vec![0.0; dim], &options.optimizer);
    if dim > 0 {
        for _ in 0..options.restarts {
            let x0: Vec<f64> = (0..dim).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
            let m = nelder_mead(objective, &x0, &options.optimizer);
            if m.value < best.value {
                best = m;
            }
        }
    }
    if !best.value.is_finite() {
        return Err(Error::Numerical(format!("{spec}: objective is not finite")));
    }

    let arma = Arma::from_unconstrained(spec, &best.x);
    let prof = prepared.profile(&arma);
    let sigma2 = (prof.css / n_eff as f64).max(1e-300);
    let log_likelihood = -0.5 * n_eff as f64 * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0);
    let aic = 2.0 * n_params as f64 - 2.0 * log_likelihood;
    let exog_coef = x.map(|_| match prof.beta {
        Some(b) => b / x_scale,
        None => 0.0,
    });

    Ok(FittedSarima {
        spec: *spec,
        ar: arma.phi,
        ma: arma.theta,
        seasonal_ar: arma.sphi,
        seasonal_ma: arma.stheta,
        mean: prof.mean,
        exog_coef,
        exog_coef_std: x.map(|_| prof.beta.unwrap_or(0.0)),
        sigma2,
        css: prof.css,
        log_likelihood,
        aic,
        n_params,
        n_eff,
        y: y.to_vec(),
        x: x.map(<[f64]>::to_vec),
        x_center,
        x_scale,
        residuals: prof.residuals,
    })
}

impl FittedSarima {
    pub fn has_exog(&self) -> bool {
        self.x.is_some()
    }

    /// Forecasts for steps `1..=h` past the end of the training data.
    /// Exogenous models need `x_future` for the same steps.
    pub fn forecast(&self, h: usize, x_future: Option<&[f64]>) -> Result<Vec<f64>> {
        let spec = &self.spec;
        let beta = self.exog_coef_std.unwrap_or(0.0);
        let x_ext: Option<Vec<f64>> = match (&self.x, x_future) {
            (Some(x), Some(f)) if f.len() >= h => {
                if f[..h].iter().any(|v| !v.is_finite()) {
                    return Err(Error::MissingExog("future exogenous values must be finite".into()));
                }
                Some(x.iter().chain(&f[..h]).copied().collect())
            }
            (Some(_), _) => {
                return Err(Error::MissingExog(format!(
                    "exogenous model needs {h} future exogenous values"
                )))
            }
            (None, _) => None,
        };
        let dpoly = diff_poly(spec);
        let u_ext: Option<Vec<f64>> = match (&x_ext, self.x_scale > 0.0) {
            (Some(x), true) => {
                let xs: Vec<f64> = x.iter().map(|v| (v - self.x_center) / self.x_scale).collect();
                Some(difference(&xs, spec, &dpoly))
            }
            _ => None,
        };
        let mu = self.mean.unwrap_or(0.0);
        let arma = Arma {
            ar: expand(&self.ar, &self.seasonal_ar, spec.period, -1.0),
            ma: expand(&self.ma, &self.seasonal_ma, spec.period, 1.0),
            phi: Vec::new(),
            theta: Vec::new(),
            sphi: Vec::new(),
            stheta: Vec::new(),
        };
        let w = difference(&self.y, spec, &dpoly);
        let reg = |t: usize| mu + u_ext.as_ref().map_or(0.0, |u| beta * u[t]);
        let mut z: Vec<f64> = (0..w.len()).map(|t| w[t] - reg(t)).collect();
        let n_w = w.len();
        let lag = spec.diff_lag();
        let mut y = self.y.clone();
        let mut out = Vec::with_capacity(h);
        for step in 0..h {
            let t = n_w + step;
            let mut zt = 0.0;
            for &(k, a) in &arma.ar {
                zt += a * z[t - k];
            }
            for &(k, m) in &arma.ma {
                if t - k < n_w {
                    zt += m * self.residuals[t - k];
                }
            }
            z.push(zt);
            let wt = zt + reg(t);
            let j = t + lag;
            let yj = wt - dpoly.iter().map(|&(k, c)| c * y[j - k]).sum::<f64>();
            y.push(yj);
            out.push(yj);
        }
        Ok(out)
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub fit: FittedSarima,
    /// Each grid spec with its AIC or the reason it was skipped.
    pub candidates: Vec<(SarimaSpec, std::result::Result<f64, String>)>,
}

/// Lowest-AIC spec over the grid. All specs share one conditioning start so
/// their likelihoods cover the same observations.
pub fn select_sarima(y: &[f64], x: Option<&[f64]>, grid: &SarimaGrid, options: &SarimaOptions) -> Result<Selection> {
    let specs = grid.specs();
    if specs.is_empty() {
        return Err(Error::Config("SARIMA grid is empty".into()));
    }
    let feasible = |s: &SarimaSpec| y.len() >= s.diff_lag() + s.min_differenced_len().max(1);
    let start = specs
        .iter()
        .filter(|s| feasible(s))
        .map(|s| s.diff_lag() + s.ar_lag())
        .max()
        .unwrap_or(0)
        .max(options.conditioning_start.unwrap_or(0));
    let opts = SarimaOptions {
        conditioning_start: Some(start),
        ..options.clone()
    };
    let mut candidates = Vec::with_capacity(specs.len());
    let mut best: Option<FittedSarima> = None;
    for spec in &specs {
        match fit_sarima(y, x, spec, &opts) {
            Ok(fit) => {
                candidates.push((*spec, Ok(fit.aic)));
                let better = match &best {
                    None => true,
                    Some(b) => {
                        let tol = 1e-9 * b.aic.abs().max(1.0);
                        if fit.aic < b.aic - tol {
                            true
                        } else if (fit.aic - b.aic).abs() <= tol {
                            (fit.n_params, spec.order_key()) < (b.n_params, b.spec.order_key())
                        } else {
                            false
                        }
                    }
                };
                if better {
                    best = Some(fit);
                }
            }
            Err(e) => candidates.push((*spec, Err(e.to_string()))),
        }
    }
    match best {
        Some(fit) => Ok(Selection { fit, candidates }),
        None => Err(Error::AllFitsFailed(
            candidates
                .iter()
                .map(|(s, r)| format!("{s}: {}", r.as_ref().err().map_or("", String::as_str)))
                .collect(),
        )),
    }
}
