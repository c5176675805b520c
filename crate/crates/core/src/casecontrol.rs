//! Behavioral model of search: logistic regression on case-control
//! respondent data with the rare-events intercept correction, and relative
//! risk / risk difference contrasts with simulation intervals.
//!
//! Case-control sampling on the outcome leaves the slope coefficients of a
//! logit model consistent but shifts the intercept by the log of the ratio
//! of sample to population odds. [`correct_intercept`] undoes that shift
//! given the population rate of the outcome.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};

pub const INTERCEPT: &str = "(Intercept)";

const MAX_ITERATIONS: usize = 100;
const SCORE_TOLERANCE: f64 = 1e-8;
const LOGLIK_TOLERANCE: f64 = 1e-10;
const SEPARATION_BOUND: f64 = 15.0;
const COLLINEARITY_TOLERANCE: f64 = 1e-9;

/// Respondent-level outcome and covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseControlSample {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
    y: Vec<u8>,
}

impl CaseControlSample {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<f64>>, y: Vec<u8>) -> Result<Self> {
        if rows.len() != y.len() {
            return Err(Error::Domain(format!(
                "{} covariate rows but {} outcomes",
                rows.len(),
                y.len()
            )));
        }
        if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != columns.len()) {
            return Err(Error::Domain(format!("row {i} does not have {} covariates", columns.len())));
        }
        if let Some((i, _)) = rows
            .iter()
            .enumerate()
            .find(|(_, r)| r.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Domain(format!("row {i} has a missing or non-finite covariate")));
        }
        if y.iter().any(|&v| v > 1) {
            return Err(Error::Domain("outcome must be 0 or 1".into()));
        }
        let cases = y.iter().filter(|&&v| v == 1).count();
        if cases == 0 || cases == y.len() {
            return Err(Error::InsufficientData(
                "need at least one case and one control".into(),
            ));
        }
        Ok(CaseControlSample { columns, rows, y })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn outcomes(&self) -> &[u8] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_cases(&self) -> usize {
        self.y.iter().filter(|&&v| v == 1).count()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Column means, used as the reference profile for contrasts.
    pub fn column_means(&self) -> Vec<f64> {
        let n = self.rows.len() as f64;
        (0..self.columns.len())
            .map(|j| self.rows.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect()
    }
}

/// Model terms: main effects and `a:b` interactions, always with an
/// intercept in front.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Formula {
    terms: Vec<Vec<String>>,
}

impl Formula {
    /// Terms separated by newlines or `+`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut terms = Vec::new();
        let mut seen = BTreeSet::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("");
            for raw in line.split('+') {
                let raw = raw.trim();
                if raw.is_empty() || raw == "1" {
                    continue;
                }
                let factors: Vec<String> = raw.split(':').map(|f| f.trim().to_owned()).collect();
                if factors.iter().any(String::is_empty) {
                    return Err(Error::Config(format!("malformed model term `{raw}`")));
                }
                if seen.insert(factors.join(":")) {
                    terms.push(factors);
                }
            }
        }
        if terms.is_empty() {
            return Err(Error::Config("model formula has no terms".into()));
        }
        Ok(Formula { terms })
    }

    pub fn main_effects<S: AsRef<str>>(names: &[S]) -> Self {
        Formula {
            terms: names.iter().map(|n| vec![n.as_ref().to_owned()]).collect(),
        }
    }

    /// Intercept-only formula.
    pub fn intercept_only() -> Self {
        Formula { terms: Vec::new() }
    }

    /// Design column names, intercept first.
    pub fn column_names(&self) -> Vec<String> {
        std::iter::once(INTERCEPT.to_owned())
            .chain(self.terms.iter().map(|t| t.join(":")))
            .collect()
    }

    fn resolve(&self, columns: &[String]) -> Result<Vec<Vec<usize>>> {
        self.terms
            .iter()
            .map(|term| {
                term.iter()
                    .map(|f| {
                        columns.iter().position(|c| c == f).ok_or_else(|| {
                            Error::Config(format!("model term refers to unknown column `{f}`"))
                        })
                    })
                    .collect()
            })
            .collect()
    }

    /// One design row from raw covariate values.
    pub fn design_row(&self, columns: &[String], values: &[f64]) -> Result<Vec<f64>> {
        let idx = self.resolve(columns)?;
        Ok(std::iter::once(1.0)
            .chain(idx.iter().map(|t| t.iter().map(|&j| values[j]).product()))
            .collect())
    }

    pub fn design(&self, sample: &CaseControlSample) -> Result<DMatrix<f64>> {
        let idx = self.resolve(&sample.columns)?;
        let k = idx.len() + 1;
        Ok(DMatrix::from_fn(sample.len(), k, |i, j| {
            if j == 0 {
                1.0
            } else {
                idx[j - 1].iter().map(|&c| sample.rows[i][c]).product()
            }
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Convergence {
    pub iterations: usize,
    pub max_abs_score: f64,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedLogit {
    pub names: Vec<String>,
    pub coefficients: DVector<f64>,
    /// Inverse observed information at the estimate.
    pub covariance: DMatrix<f64>,
    /// Sample mean of the outcome.
    pub y_bar: f64,
    /// Outcome rate the intercept currently corresponds to: `y_bar` for a
    /// raw fit, the target rate after [`correct_intercept`].
    pub base_rate: f64,
    pub convergence: Convergence,
}

impl FittedLogit {
    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn slopes(&self) -> &[f64] {
        &self.coefficients.as_slice()[1..]
    }

    pub fn is_corrected(&self) -> bool {
        self.base_rate != self.y_bar
    }

    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        x.iter().zip(self.coefficients.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        inv_logit(self.linear_predictor(x))
    }
}

pub fn inv_logit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `log(1 + exp(eta))` without overflow.
fn log1p_exp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn log_likelihood(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter().zip(y).map(|(&e, &yi)| yi * e - log1p_exp(e)).sum()
}

/// Names of columns that are linear combinations of earlier columns.
fn collinear_columns(x: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        let mut r = col.clone();
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&r);
                r.axpy(-proj, q, 1.0);
            }
        }
        let rn = r.norm();
        if norm == 0.0 || rn <= COLLINEARITY_TOLERANCE * norm {
            dependent.push(names[j].clone());
        } else {
            basis.push(r / rn);
        }
    }
    dependent
}

/// Maximum likelihood logit fit by Newton-Raphson / IRLS with step halving.
pub fn fit_logit_design(x: &DMatrix<f64>, y: &[u8], names: &[String]) -> Result<FittedLogit> {
    let (n, k) = x.shape();
    if y.len() != n || names.len() != k {
        return Err(Error::Domain("design, outcome and names disagree in size".into()));
    }
    let cases = y.iter().filter(|&&v| v == 1).count();
    if cases == 0 || cases == n {
        return Err(Error::InsufficientData("need at least one case and one control".into()));
    }
    let dependent = collinear_columns(x, names);
    if !dependent.is_empty() {
        return Err(Error::RankDeficient(dependent));
    }
    let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let y_bar = cases as f64 / n as f64;

    let mut beta = DVector::zeros(k);
    if names.first().map(String::as_str) == Some(INTERCEPT) {
        beta[0] = logit(y_bar);
    }
    let mut ll = log_likelihood(x, &yf, &beta);
    let mut iterations = 0;
    let (info, max_score) = loop {
        let eta = x * &beta;
        let p: Vec<f64> = eta.iter().map(|&e| inv_logit(e)).collect();
        let resid = DVector::from_iterator(n, yf.iter().zip(&p).map(|(yi, pi)| yi - pi));
        let score = x.transpose() * &resid;
        let mut xw = x.clone();
        for (i, pi) in p.iter().enumerate() {
            let w = pi * (1.0 - pi);
            xw.row_mut(i).scale_mut(w);
        }
        let info = x.transpose() * xw;
        let max_score = score.amax();
        if max_score < SCORE_TOLERANCE || iterations >= MAX_ITERATIONS {
            break (info, max_score);
        }
        iterations += 1;
        let chol = info.clone().cholesky().ok_or_else(|| {
            Error::Numerical("information matrix is not positive definite".into())
        })?;
        let step = chol.solve(&score);
        let mut t = 1.0;
        let mut candidate = &beta + &step;
        let mut ll_new = log_likelihood(x, &yf, &candidate);
        while ll_new < ll && t > 1e-10 {
            t *= 0.5;
            candidate = &beta + &step * t;
            ll_new = log_likelihood(x, &yf, &candidate);
        }
        let jmax = candidate.iamax();
        if candidate[jmax].abs() > SEPARATION_BOUND && ll_new >= ll {
            return Err(Error::Separation {
                column: names[jmax].clone(),
            });
        }
        let rel_change = (ll_new - ll).abs() / ll.abs().max(f64::MIN_POSITIVE);
        beta = candidate;
        ll = ll_new;
        if rel_change < LOGLIK_TOLERANCE {
            // one more pass to refresh information and score at the final beta
            let eta = x * &beta;
            let p: Vec<f64> = eta.iter().map(|&e| inv_logit(e)).collect();
            let resid = DVector::from_iterator(n, yf.iter().zip(&p).map(|(yi, pi)| yi - pi));
            let score = x.transpose() * &resid;
            let mut xw = x.clone();
            for (i, pi) in p.iter().enumerate() {
                xw.row_mut(i).scale_mut(pi * (1.0 - pi));
            }
            break (x.transpose() * xw, score.amax());
        }
    };
    let covariance = info
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("information matrix is singular at the optimum".into()))?
        .inverse();
    Ok(FittedLogit {
        names: names.to_vec(),
        coefficients: beta,
        covariance,
        y_bar,
        base_rate: y_bar,
        convergence: Convergence {
            iterations,
            max_abs_score: max_score,
            log_likelihood: ll,
        },
    })
}

pub fn fit_logit(sample: &CaseControlSample, formula: &Formula) -> Result<FittedLogit> {
    let x = formula.design(sample)?;
    fit_logit_design(&x, &sample.y, &formula.column_names())
}

fn log_odds(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

/// Replaces the intercept so that the model reproduces population rate
/// `tau`: `B0 - ln[((1 - tau) / tau) * (r / (1 - r))]` where `r` is the
/// rate the current intercept corresponds to (the sample mean for a raw
/// fit). Slopes and covariance are unchanged.
pub fn correct_intercept(fit: &FittedLogit, tau: f64) -> Result<FittedLogit> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Domain(format!("tau must lie in (0, 1), got {tau}")));
    }
    let r = fit.base_rate;
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Domain(format!("sample rate must lie in (0, 1), got {r}")));
    }
    if fit.names.first().map(String::as_str) != Some(INTERCEPT) {
        return Err(Error::Domain("model has no intercept to correct".into()));
    }
    let shift = log_odds(r) - log_odds(tau);
    let mut out = fit.clone();
    out.coefficients[0] = fit.coefficients[0] - shift;
    out.base_rate = tau;
    Ok(out)
}

/// Relative risk and risk difference between two covariate profiles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskContrast {
    pub rr: f64,
    pub rd: f64,
    pub rr_ci: (f64, f64),
    pub rd_ci: (f64, f64),
    pub tau: f64,
    pub x1: Vec<f64>,
    pub x0: Vec<f64>,
}

/// Symmetric square root of a covariance matrix, rejecting matrices with
/// materially negative eigenvalues.
fn covariance_root(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(cov.clone());
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -1e-10 * max_abs.max(1e-300) {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt) * eig.eigenvectors.transpose())
}

/// Coefficient draws from the asymptotic normal of the estimate.
fn coefficient_draws(fit: &FittedLogit, n_draws: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    let root = covariance_root(&fit.covariance)?;
    let k = fit.coefficients.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n_draws)
        .map(|_| {
            let z = DVector::from_iterator(k, (0..k).map(|_| StandardNormal.sample(&mut rng)));
            &fit.coefficients + &root * z
        })
        .collect())
}

/// Linear-interpolated percentile (`q` in [0, 1]) of sorted data.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn interval(mut values: Vec<f64>) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    (percentile_sorted(&values, 0.025), percentile_sorted(&values, 0.975))
}

pub const MIN_DRAWS: usize = 1000;

/// RR and RD between design rows `x1` and `x0` with 95% percentile
/// intervals from `n_draws` simulated coefficient vectors.
pub fn risk_contrast(
    fit: &FittedLogit,
    x1: &[f64],
    x0: &[f64],
    n_draws: usize,
    seed: u64,
) -> Result<RiskContrast> {
    let k = fit.coefficients.len();
    if x1.len() != k || x0.len() != k {
        return Err(Error::Domain(format!("profiles must have {k} entries")));
    }
    if n_draws < MIN_DRAWS {
        return Err(Error::Domain(format!("n_draws must be at least {MIN_DRAWS}")));
    }
    let p1 = fit.probability(x1);
    let p0 = fit.probability(x0);
    let draws = coefficient_draws(fit, n_draws, seed)?;
    let mut rr = Vec::with_capacity(n_draws);
    let mut rd = Vec::with_capacity(n_draws);
    for beta in &draws {
        let e1: f64 = x1.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
        let e0: f64 = x0.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
        let (q1, q0) = (inv_logit(e1), inv_logit(e0));
        rr.push(q1 / q0);
        rd.push(q1 - q0);
    }
    Ok(RiskContrast {
        rr: p1 / p0,
        rd: p1 - p0,
        rr_ci: interval(rr),
        rd_ci: interval(rd),
        tau: fit.base_rate,
        x1: x1.to_vec(),
        x0: x0.to_vec(),
    })
}

/// Simulated distribution of `Pr(Y = 1 | x)`, one value per draw.
pub fn expected_density(fit: &FittedLogit, x: &[f64], n_draws: usize, seed: u64) -> Result<Vec<f64>> {
    if x.len() != fit.coefficients.len() {
        return Err(Error::Domain(format!(
            "profile must have {} entries",
            fit.coefficients.len()
        )));
    }
    if n_draws < MIN_DRAWS {
        return Err(Error::Domain(format!("n_draws must be at least {MIN_DRAWS}")));
    }
    Ok(coefficient_draws(fit, n_draws, seed)?
        .iter()
        .map(|beta| inv_logit(x.iter().zip(beta.iter()).map(|(a, b)| a * b).sum()))
        .collect())
}

/// Mean model probability over a set of design rows, e.g. a population
/// covariate sample.
pub fn implied_rate(fit: &FittedLogit, design_rows: &DMatrix<f64>) -> f64 {
    let eta = design_rows * &fit.coefficients;
    eta.iter().map(|&e| inv_logit(e)).sum::<f64>() / eta.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_sample(cells: [(u8, u8, usize); 4]) -> CaseControlSample {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (exposed, outcome, count) in cells {
            for _ in 0..count {
                rows.push(vec![exposed as f64]);
                y.push(outcome);
            }
        }
        CaseControlSample::new(vec!["x".into()], rows, y).unwrap()
    }

    #[test]
    fn intercept_only_fit_is_logit_of_mean() {
        let rows = vec![vec![0.0]; 100];
        let y = (0..100).map(|i| u8::from(i < 30)).collect();
        let s = CaseControlSample::new(vec!["x".into()], rows, y).unwrap();
        let fit = fit_logit(&s, &Formula::intercept_only()).unwrap();
        assert!((fit.intercept() - (0.3f64 / 0.7).ln()).abs() < 1e-10);
        assert!((fit.intercept() + 0.8473).abs() < 1e-4);
    }

    #[test]
    fn binary_covariate_slope_is_log_odds_ratio() {
        // exposed cases 30, unexposed cases 20, exposed controls 10, unexposed controls 40
        let s = binary_sample([(1, 1, 30), (0, 1, 20), (1, 0, 10), (0, 0, 40)]);
        let fit = fit_logit(&s, &Formula::main_effects(&["x"])).unwrap();
        let expected = ((30.0 * 40.0) / (20.0 * 10.0) as f64).ln();
        assert!((fit.slopes()[0] - expected).abs() < 1e-9);
        assert!((fit.slopes()[0] - 1.7918).abs() < 1e-4);
        assert!(fit.convergence.max_abs_score < 1e-6);
        let c = &fit.covariance;
        assert!((c[(0, 1)] - c[(1, 0)]).abs() < 1e-12);
        // closed form variance of the log odds ratio
        let var = 1.0 / 30.0 + 1.0 / 40.0 + 1.0 / 20.0 + 1.0 / 10.0;
        assert!((c[(1, 1)] - var).abs() < 1e-8);
    }

    #[test]
    fn perfect_predictor_is_separation() {
        let s = binary_sample([(1, 1, 20), (0, 0, 20), (0, 0, 0), (1, 1, 0)]);
        let err = fit_logit(&s, &Formula::main_effects(&["x"])).unwrap_err();
        assert!(matches!(err, Error::Separation { .. }), "{err}");
    }

    #[test]
    fn collinear_columns_are_named() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 3) as f64, 2.0 * (i % 3) as f64, (i % 5) as f64]).collect();
        let y = (0..40).map(|i| u8::from(i % 4 == 0)).collect();
        let s = CaseControlSample::new(vec!["a".into(), "b".into(), "c".into()], rows, y).unwrap();
        let err = fit_logit(&s, &Formula::main_effects(&["a", "b", "c"])).unwrap_err();
        match err {
            Error::RankDeficient(cols) => assert_eq!(cols, vec!["b".to_string()]),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn sample_validation() {
        assert!(CaseControlSample::new(vec!["x".into()], vec![vec![1.0]; 3], vec![0, 0, 0]).is_err());
        assert!(CaseControlSample::new(vec!["x".into()], vec![vec![1.0]; 2], vec![0, 2]).is_err());
        assert!(CaseControlSample::new(vec!["x".into()], vec![vec![f64::NAN], vec![1.0]], vec![0, 1]).is_err());
    }

    #[test]
    fn formula_parsing() {
        let f = Formula::parse("volume + female\nparent:hh_ili # fathers\n\nfemale\n").unwrap();
        assert_eq!(f.column_names(), vec![INTERCEPT, "volume", "female", "parent:hh_ili"]);
        assert!(Formula::parse("a + :b").is_err());
        assert!(Formula::parse("# nothing").is_err());
        let cols = vec!["parent".to_string(), "hh_ili".to_string(), "volume".into(), "female".into()];
        let row = f.design_row(&cols, &[1.0, 1.0, 5.0, 0.0]).unwrap();
        assert_eq!(row, vec![1.0, 5.0, 0.0, 1.0]);
        assert!(Formula::main_effects(&["zzz"]).design_row(&cols, &[0.0; 4]).is_err());
    }

    fn fitted(b0: f64, slope: f64, y_bar: f64, cov: DMatrix<f64>) -> FittedLogit {
        FittedLogit {
            names: vec![INTERCEPT.into(), "x".into()],
            coefficients: DVector::from_vec(vec![b0, slope]),
            covariance: cov,
            y_bar,
            base_rate: y_bar,
            convergence: Convergence { iterations: 0, max_abs_score: 0.0, log_likelihood: 0.0 },
        }
    }

    #[test]
    fn correction_examples() {
        let fit = fitted(0.3, 1.0, 0.4, DMatrix::identity(2, 2));
        let same = correct_intercept(&fit, 0.4).unwrap();
        assert_eq!(same.intercept(), 0.3);

        let fit = fitted(0.0, 1.25, 0.4, DMatrix::identity(2, 2) * 0.1);
        let c = correct_intercept(&fit, 1.2e-5).unwrap();
        let direct = -(((1.0 - 1.2e-5) / 1.2e-5) * (0.4 / 0.6f64)).ln();
        assert!((c.intercept() - direct).abs() < 1e-12);
        assert!((c.intercept() + 10.925).abs() < 1e-3);
        assert_eq!(c.slopes(), fit.slopes());
        assert_eq!(c.covariance, fit.covariance);
        assert!(correct_intercept(&fit, 0.0).is_err());
        assert!(correct_intercept(&fit, 1.0).is_err());
    }

    #[test]
    fn identical_profiles_give_unit_risk_ratio() {
        let cov = DMatrix::from_row_slice(2, 2, &[0.04, -0.01, -0.01, 0.09]);
        let fit = fitted(-8.0, 0.5, 0.3, cov);
        let x = [1.0, 1.0];
        let rc = risk_contrast(&fit, &x, &x, 2000, 3).unwrap();
        assert_eq!(rc.rr, 1.0);
        assert_eq!(rc.rd, 0.0);
        assert_eq!(rc.rr_ci, (1.0, 1.0));
        assert_eq!(rc.rd_ci, (0.0, 0.0));
    }

    #[test]
    fn rare_outcome_risk_ratio_is_odds_ratio() {
        let fit = fitted(-11.0, 2f64.ln(), 0.3, DMatrix::identity(2, 2) * 0.01);
        let rc = risk_contrast(&fit, &[1.0, 1.0], &[1.0, 0.0], 1000, 1).unwrap();
        let p1 = inv_logit(-11.0 + 2f64.ln());
        let p0 = inv_logit(-11.0);
        assert!((rc.rr - p1 / p0).abs() < 1e-12);
        assert!((rc.rr / 2.0 - 1.0).abs() < 1e-3);
        assert!(rc.rd > 0.0 && rc.rr > 1.0);
        assert!(rc.rr_ci.0 <= rc.rr && rc.rr <= rc.rr_ci.1);
        assert!(risk_contrast(&fit, &[1.0, 1.0], &[1.0, 0.0], 999, 1).is_err());
    }

    #[test]
    fn non_psd_covariance_rejected() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let fit = fitted(-3.0, 0.5, 0.3, cov);
        let err = risk_contrast(&fit, &[1.0, 1.0], &[1.0, 0.0], 1000, 1).unwrap_err();
        assert!(matches!(err, Error::NotPsd { .. }));
    }

    #[test]
    fn density_draws() {
        let fit = fitted(-3.0, 0.5, 0.3, DMatrix::zeros(2, 2));
        let x = [1.0, 1.0];
        let draws = expected_density(&fit, &x, 1000, 5).unwrap();
        assert!(draws.iter().all(|&p| p == fit.probability(&x)));

        // small covariance keeps the curvature bias of the inverse logit well
        // below the Monte-Carlo band
        let fit = fitted(-3.0, 0.5, 0.3, DMatrix::identity(2, 2) * 1e-4);
        let n = 20_000;
        let a = expected_density(&fit, &x, n, 9).unwrap();
        let b = expected_density(&fit, &x, n, 9).unwrap();
        assert_eq!(a, b);
        let mean = a.iter().sum::<f64>() / n as f64;
        let sd = (a.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let point = fit.probability(&x);
        assert!((mean - point).abs() < 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile_sorted(&v, 0.5), 3.0);
        assert_eq!(percentile_sorted(&v, 0.0), 1.0);
        assert_eq!(percentile_sorted(&v, 1.0), 5.0);
        assert!((percentile_sorted(&v, 0.1) - 1.4).abs() < 1e-12);
    }
}
