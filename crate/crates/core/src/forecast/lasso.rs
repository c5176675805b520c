//! L1-penalized autoregression with contemporaneous exogenous columns.
//!
//! `y_t = c + sum_{i<=p} theta_i y_{t-i} + sum_j phi_j x_j(t) + e_t`,
//! fitted on standardized predictors by covariance coordinate descent on
//! `(1/2n) |y_c - Z b|^2 + lambda |b|_1`.

use crate::error::{Error, Result};

pub const DEFAULT_LAGS: usize = 52;
const MAX_SWEEPS: usize = 100_000;
const COEF_TOL: f64 = 1e-9;

/// Standardized lag/exogenous design with its Gram matrix.
#[derive(Debug, Clone)]
struct Design {
    k: usize,
    means: Vec<f64>,
    sds: Vec<f64>,
    y_mean: f64,
    /// `Z'Z / n`, row-major.
    gram: Vec<f64>,
    /// `Z'y_c / n`.
    corr: Vec<f64>,
}

fn feature(y: &[f64], x: &[Vec<f64>], p: usize, t: usize, j: usize) -> f64 {
    if j < p {
        y[t - 1 - j]
    } else {
        x[j - p][t]
    }
}

impl Design {
    fn build(y: &[f64], x: &[Vec<f64>], p: usize) -> Result<Design> {
        if y.len() <= p + 1 {
            return Err(Error::InsufficientData(format!(
                "{} observations for {p} lags",
                y.len()
            )));
        }
        if x.iter().any(|c| c.len() != y.len()) {
            return Err(Error::Domain("exogenous columns must match the series length".into()));
        }
        let k = p + x.len();
        let rows = p..y.len();
        let n = rows.len();
        let nf = n as f64;
        let y_mean = y[rows.clone()].iter().sum::<f64>() / nf;
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut means = vec![0.0; k];
        let mut sds = vec![0.0; k];
        for j in 0..k {
            let raw: Vec<f64> = rows.clone().map(|t| feature(y, x, p, t, j)).collect();
            let m = raw.iter().sum::<f64>() / nf;
            let sd = (raw.iter().map(|v| (v - m).powi(2)).sum::<f64>() / nf).sqrt();
            means[j] = m;
            let usable = sd > 1e-12 * (1.0 + m.abs());
            sds[j] = if usable { sd } else { 0.0 };
            cols.push(if usable {
                raw.iter().map(|v| (v - m) / sd).collect()
            } else {
                vec![0.0; n]
            });
        }
        let yc: Vec<f64> = rows.map(|t| y[t] - y_mean).collect();
        let mut gram = vec![0.0; k * k];
        for a in 0..k {
            for b in a..k {
                let g = cols[a].iter().zip(&cols[b]).map(|(u, v)| u * v).sum::<f64>() / nf;
                gram[a * k + b] = g;
                gram[b * k + a] = g;
            }
        }
        let corr = cols
            .iter()
            .map(|c| c.iter().zip(&yc).map(|(u, v)| u * v).sum::<f64>() / nf)
            .collect();
        Ok(Design {
            k,
            means,
            sds,
            y_mean,
            gram,
            corr,
        })
    }

    fn lambda_max(&self) -> f64 {
        self.corr.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Coordinate descent from `b`; returns the number of sweeps.
    fn solve(&self, lambda: f64, b: &mut [f64]) -> usize {
        let k = self.k;
        let mut gb = vec![0.0; k];
        for j in 0..k {
            if b[j] != 0.0 {
                for i in 0..k {
                    gb[i] += self.gram[i * k + j] * b[j];
                }
            }
        }
        for sweep in 1..=MAX_SWEEPS {
            let mut max_change = 0.0f64;
            for j in 0..k {
                let gjj = self.gram[j * k + j];
                if gjj == 0.0 {
                    continue;
                }
                let rho = self.corr[j] - gb[j] + gjj * b[j];
                let new = soft_threshold(rho, lambda) / gjj;
                let delta = new - b[j];
                if delta != 0.0 {
                    for i in 0..k {
                        gb[i] += self.gram[i * k + j] * delta;
                    }
                    b[j] = new;
                    max_change = max_change.max(delta.abs());
                }
            }
            if max_change < COEF_TOL {
                return sweep;
            }
        }
        log::warn!("coordinate descent hit {MAX_SWEEPS} sweeps at lambda {lambda}");
        MAX_SWEEPS
    }

    /// Largest KKT violation at `b` on the standardized scale.
    fn kkt(&self, lambda: f64, b: &[f64]) -> f64 {
        let k = self.k;
        (0..k)
            .filter(|&j| self.gram[j * k + j] > 0.0)
            .map(|j| {
                let g = self.corr[j] - (0..k).map(|i| self.gram[j * k + i] * b[i]).sum::<f64>();
                if b[j] != 0.0 {
                    (g - lambda * b[j].signum()).abs()
                } else {
                    (g.abs() - lambda).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }
}

fn soft_threshold(v: f64, lambda: f64) -> f64 {
    if v > lambda {
        v - lambda
    } else if v < -lambda {
        v + lambda
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedLassoAr {
    pub lags: usize,
    pub lambda: f64,
    pub intercept: f64,
    /// `theta_1..theta_p` on the original scale.
    pub lag_coefs: Vec<f64>,
    /// One per exogenous column, original scale.
    pub exog_coefs: Vec<f64>,
    /// Nonzero coefficients, indexed lags first then exogenous columns.
    pub active: Vec<usize>,
    pub sweeps: usize,
    /// Largest KKT residual at the solution (standardized scale).
    pub kkt_residual: f64,
    std_coefs: Vec<f64>,
    history: Vec<f64>,
}

fn finish(design: &Design, y: &[f64], p: usize, m: usize, lambda: f64, b: Vec<f64>, sweeps: usize) -> FittedLassoAr {
    let coefs: Vec<f64> = b
        .iter()
        .zip(&design.sds)
        .map(|(bj, sd)| if *sd > 0.0 { bj / sd } else { 0.0 })
        .collect();
    let intercept = design.y_mean - coefs.iter().zip(&design.means).map(|(c, m)| c * m).sum::<f64>();
    let active = (0..b.len()).filter(|&j| b[j] != 0.0).collect();
    FittedLassoAr {
        lags: p,
        lambda,
        intercept,
        lag_coefs: coefs[..p].to_vec(),
        exog_coefs: coefs[p..p + m].to_vec(),
        active,
        sweeps,
        kkt_residual: design.kkt(lambda, &b),
        std_coefs: b,
        history: y[y.len() - p..].to_vec(),
    }
}

/// Fits at a single penalty. `x` holds exogenous columns aligned with `y`.
pub fn fit_lasso_ar(y: &[f64], x: &[Vec<f64>], p: usize, lambda: f64) -> Result<FittedLassoAr> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    let design = Design::build(y, x, p)?;
    let mut b = vec![0.0; design.k];
    let sweeps = design.solve(lambda, &mut b);
    Ok(finish(&design, y, p, x.len(), lambda, b, sweeps))
}

/// `max_j |Z_j' y_c| / n` on the standardized design.
pub fn lambda_max(y: &[f64], x: &[Vec<f64>], p: usize) -> Result<f64> {
    Ok(Design::build(y, x, p)?.lambda_max())
}

/// `count` log-spaced penalties from `lambda_max` down to `lambda_max * ratio`.
pub fn lambda_ladder(y: &[f64], x: &[Vec<f64>], p: usize, count: usize, ratio: f64) -> Result<Vec<f64>> {
    let top = lambda_max(y, x, p)?;
    if count <= 1 || top == 0.0 {
        return Ok(vec![top]);
    }
    Ok((0..count)
        .map(|i| top * ratio.powf(i as f64 / (count - 1) as f64))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaChoice {
    pub lambda: f64,
    /// Validation RMSE per ladder value, in ladder order.
    pub rmse: Vec<f64>,
}

/// Chooses the penalty with the lowest one-step-ahead RMSE on the last
/// `holdout` share of the window, fitting on the rest. Ties go to the
/// larger penalty.
pub fn select_lambda(y: &[f64], x: &[Vec<f64>], p: usize, ladder: &[f64], holdout: f64) -> Result<LambdaChoice> {
    if ladder.is_empty() {
        return Err(Error::Config("lambda ladder is empty".into()));
    }
    if ladder.len() == 1 {
        return Ok(LambdaChoice {
            lambda: ladder[0],
            rmse: vec![f64::NAN],
        });
    }
    let n = y.len();
    let n_fit = ((n as f64) * (1.0 - holdout)).round() as usize;
    if n_fit <= p + 1 || n_fit >= n {
        return Err(Error::InsufficientData(format!(
            "{n} observations leave no room for a {p}-lag fit and a validation block"
        )));
    }
    let train_x: Vec<Vec<f64>> = x.iter().map(|c| c[..n_fit].to_vec()).collect();
    let design = Design::build(&y[..n_fit], &train_x, p)?;

    let mut order: Vec<usize> = (0..ladder.len()).collect();
    order.sort_by(|&a, &b| ladder[b].total_cmp(&ladder[a]));
    let mut rmse = vec![f64::NAN; ladder.len()];
    let mut b = vec![0.0; design.k];
    let mut best: Option<(usize, f64)> = None;
    for &i in &order {
        let lambda = ladder[i];
        if !(lambda >= 0.0) {
            return Err(Error::Domain(format!("invalid lambda {lambda} in ladder")));
        }
        let sweeps = design.solve(lambda, &mut b);
        let fit = finish(&design, &y[..n_fit], p, x.len(), lambda, b.clone(), sweeps);
        let sse: f64 = (n_fit..n)
            .map(|t| {
                let pred = fit.intercept
                    + (0..p).map(|j| fit.lag_coefs[j] * y[t - 1 - j]).sum::<f64>()
                    + x.iter().zip(&fit.exog_coefs).map(|(c, phi)| phi * c[t]).sum::<f64>();
                (y[t] - pred).powi(2)
            })
            .sum();
        let r = (sse / (n - n_fit) as f64).sqrt();
        rmse[i] = r;
        if best.map_or(true, |(_, br)| r < br - 1e-12 * br.abs()) {
            best = Some((i, r));
        }
    }
    let (i, _) = best.expect("non-empty ladder");
    Ok(LambdaChoice { lambda: ladder[i], rmse })
}

impl FittedLassoAr {
    /// Recursive forecasts for steps `1..=h`. `x_future[j]` holds the
    /// exogenous values of column `j` for the same steps.
    pub fn forecast(&self, h: usize, x_future: &[Vec<f64>]) -> Result<Vec<f64>> {
        if x_future.len() != self.exog_coefs.len() || x_future.iter().any(|c| c.len() < h) {
            return Err(Error::MissingExog(format!(
                "need {h} future values for each of {} exogenous columns",
                self.exog_coefs.len()
            )));
        }
        let mut hist = self.history.clone();
        let mut out = Vec::with_capacity(h);
        for s in 0..h {
            let n = hist.len();
            let f = self.intercept
                + (0..self.lags).map(|j| self.lag_coefs[j] * hist[n - 1 - j]).sum::<f64>()
                + x_future.iter().zip(&self.exog_coefs).map(|(c, phi)| phi * c[s]).sum::<f64>();
            hist.push(f);
            out.push(f);
        }
        Ok(out)
    }

    /// Standardized-scale coefficients, lags first.
    pub fn standardized_coefs(&self) -> &[f64] {
        &self.std_coefs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, 1.0).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    fn ols(y: &[f64], x: &[Vec<f64>], p: usize) -> Vec<f64> {
        let rows: Vec<usize> = (p..y.len()).collect();
        let k = p + x.len() + 1;
        let m = DMatrix::from_fn(rows.len(), k, |r, c| {
            if c == 0 { 1.0 } else { feature(y, x, p, rows[r], c - 1) }
        });
        let v = DVector::from_iterator(rows.len(), rows.iter().map(|&t| y[t]));
        let xtx = m.transpose() * &m;
        let xty = m.transpose() * v;
        xtx.cholesky().unwrap().solve(&xty).iter().copied().collect()
    }

    #[test]
    fn zero_penalty_is_least_squares() {
        let y = noise(300, 1);
        let x = vec![noise(300, 2)];
        let fit = fit_lasso_ar(&y, &x, 4, 0.0).unwrap();
        let beta = ols(&y, &x, 4);
        assert!((fit.intercept - beta[0]).abs() < 1e-6);
        for j in 0..4 {
            assert!((fit.lag_coefs[j] - beta[j + 1]).abs() < 1e-6);
        }
        assert!((fit.exog_coefs[0] - beta[5]).abs() < 1e-6);
        assert!(fit.kkt_residual < 1e-6);
    }

    #[test]
    fn lambda_max_zeroes_everything() {
        let y = noise(200, 3);
        let top = lambda_max(&y, &[], 8).unwrap();
        let fit = fit_lasso_ar(&y, &[], 8, top).unwrap();
        assert!(fit.active.is_empty());
        assert!(fit.lag_coefs.iter().all(|c| *c == 0.0));
        let below = fit_lasso_ar(&y, &[], 8, top * 0.9).unwrap();
        assert!(!below.active.is_empty());
        assert!(below.kkt_residual < 1e-6);
    }

    #[test]
    fn negative_lambda_rejected() {
        assert!(fit_lasso_ar(&noise(50, 1), &[], 3, -1.0).is_err());
    }

    #[test]
    fn constant_exogenous_column_is_ignored() {
        let y = noise(100, 5);
        let fit = fit_lasso_ar(&y, &[vec![3.0; 100]], 2, 0.0).unwrap();
        assert_eq!(fit.exog_coefs, vec![0.0]);
    }

    #[test]
    fn recursive_forecast() {
        let y = noise(120, 6);
        let fit = fit_lasso_ar(&y, &[], 2, 0.01).unwrap();
        let f = fit.forecast(2, &[]).unwrap();
        let n = y.len();
        let f1 = fit.intercept + fit.lag_coefs[0] * y[n - 1] + fit.lag_coefs[1] * y[n - 2];
        let f2 = fit.intercept + fit.lag_coefs[0] * f1 + fit.lag_coefs[1] * y[n - 1];
        assert!((f[0] - f1).abs() < 1e-12 && (f[1] - f2).abs() < 1e-12);
    }

    #[test]
    fn ladder_and_selection() {
        let e = noise(260, 7);
        let mut y = vec![0.0; 260];
        for t in 1..260 {
            y[t] = 0.8 * y[t - 1] + e[t];
        }
        let ladder = lambda_ladder(&y, &[], 10, 20, 1e-4).unwrap();
        assert_eq!(ladder.len(), 20);
        assert!((ladder[19] / ladder[0] - 1e-4).abs() < 1e-12);
        let choice = select_lambda(&y, &[], 10, &ladder, 0.2).unwrap();
        let fit = fit_lasso_ar(&y, &[], 10, choice.lambda).unwrap();
        assert!(fit.active.contains(&0));
        let single = select_lambda(&y, &[], 10, &[0.3], 0.2).unwrap();
        assert_eq!(single.lambda, 0.3);
    }
}
