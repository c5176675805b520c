//! Hierarchical logit over poststratification cells.
//!
//! `Pr(A1) = logit^-1(b0 + b_inc * income + a_state + a_edu + a_age + a_cph + a_edu:age)`
//! with each group of varying intercepts drawn from `N(0, sigma2_g)`.
//!
//! Estimation alternates a penalized Newton solve for the coefficients
//! given the variances (penalty `1 / sigma2_g` per group) with a
//! fixed-point update of each variance from the Laplace approximation of
//! the marginal likelihood:
//!
//! `sigma2_g <- sum_j a_gj^2 / (m_g - tr(H^-1_gg) / sigma2_g)`
//!
//! where `H` is the penalized Hessian at the mode and `m_g` the number of
//! levels in the group. Data enter as binomial counts per cell, so the cost
//! of an iteration does not depend on the number of queries.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::casecontrol::inv_logit;
use crate::error::{Error, Result};
use crate::mrp::cells::{CellKey, Census, StateCode};
use crate::mrp::window::WindowDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    State,
    Education,
    Age,
    ChildPerHouse,
    EducationAge,
}

pub const GROUPS: [Group; 5] = [
    Group::State,
    Group::Education,
    Group::Age,
    Group::ChildPerHouse,
    Group::EducationAge,
];

impl Group {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::State => "state",
            Group::Education => "education",
            Group::Age => "age",
            Group::ChildPerHouse => "child_per_house",
            Group::EducationAge => "education_x_age",
        }
    }
}

/// Levels of each grouping factor, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct MrpLevels {
    pub states: Vec<StateCode>,
    pub edu: Vec<u8>,
    pub age: Vec<u8>,
    pub child: Vec<u8>,
}

impl MrpLevels {
    pub fn from_keys<'a>(keys: impl IntoIterator<Item = &'a CellKey>) -> Self {
        let mut levels = MrpLevels {
            states: Vec::new(),
            edu: Vec::new(),
            age: Vec::new(),
            child: Vec::new(),
        };
        for k in keys {
            levels.states.push(k.state.clone());
            levels.edu.push(k.edu);
            levels.age.push(k.age);
            levels.child.push(k.child);
        }
        levels.states.sort();
        levels.states.dedup();
        for v in [&mut levels.edu, &mut levels.age, &mut levels.child] {
            v.sort_unstable();
            v.dedup();
        }
        levels
    }

    pub fn n_levels(&self, group: Group) -> usize {
        match group {
            Group::State => self.states.len(),
            Group::Education => self.edu.len(),
            Group::Age => self.age.len(),
            Group::ChildPerHouse => self.child.len(),
            Group::EducationAge => self.edu.len() * self.age.len(),
        }
    }

    /// Level index of `key` within each group; `None` for levels the fit
    /// has not seen.
    pub fn indices(&self, key: &CellKey) -> [Option<usize>; 5] {
        let s = self.states.binary_search(&key.state).ok();
        let e = self.edu.binary_search(&key.edu).ok();
        let a = self.age.binary_search(&key.age).ok();
        let c = self.child.binary_search(&key.child).ok();
        let ea = match (e, a) {
            (Some(e), Some(a)) => Some(e * self.age.len() + a),
            _ => None,
        };
        [s, e, a, c, ea]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrpOptions {
    pub max_outer: usize,
    /// Relative change in the variances that ends the outer iteration.
    pub tolerance: f64,
    pub variance_floor: f64,
    pub initial_variance: f64,
    /// Pins a group's variance instead of estimating it.
    pub fixed_variances: [Option<f64>; 5],
    /// Tiny ridge on the fixed effects; keeps the solve well posed when a
    /// window has no A1 queries or income does not vary.
    pub fixed_effect_ridge: f64,
}

impl Default for MrpOptions {
    fn default() -> Self {
        MrpOptions {
            max_outer: 200,
            tolerance: 1e-6,
            variance_floor: 1e-8,
            initial_variance: 0.25,
            fixed_variances: [None; 5],
            fixed_effect_ridge: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrpFit {
    pub beta0: f64,
    /// Coefficient on standardized cell mean income.
    pub beta_income: f64,
    /// Varying intercepts per group, indexed like [`MrpLevels`].
    pub effects: [Vec<f64>; 5],
    pub variances: [f64; 5],
    pub levels: MrpLevels,
    pub income_mean: f64,
    pub income_sd: f64,
    pub outer_iterations: usize,
    pub converged: bool,
}

impl MrpFit {
    pub fn standardize_income(&self, income: f64) -> f64 {
        if self.income_sd > 0.0 {
            (income - self.income_mean) / self.income_sd
        } else {
            0.0
        }
    }

    pub fn effect(&self, group: Group, key: &CellKey) -> f64 {
        self.levels.indices(key)[group.index()]
            .map(|i| self.effects[group.index()][i])
            .unwrap_or(0.0)
    }

    pub fn linear_predictor(&self, key: &CellKey, income: f64) -> f64 {
        let idx = self.levels.indices(key);
        let mut eta = self.beta0 + self.beta_income * self.standardize_income(income);
        for g in GROUPS {
            if let Some(i) = idx[g.index()] {
                eta += self.effects[g.index()][i];
            }
        }
        eta
    }
}

struct Observation {
    /// Parameter indices of the varying intercepts.
    idx: [usize; 5],
    z: f64,
    n: f64,
    y: f64,
}

struct Problem {
    obs: Vec<Observation>,
    n_params: usize,
    offsets: [usize; 5],
    sizes: [usize; 5],
    ridge: f64,
}

fn log1p_exp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

impl Problem {
    fn penalties(&self, variances: &[f64; 5]) -> Vec<f64> {
        let mut p = vec![self.ridge; self.n_params];
        for g in 0..5 {
            for i in 0..self.sizes[g] {
                p[self.offsets[g] + i] = 1.0 / variances[g];
            }
        }
        p
    }

    fn eta(&self, o: &Observation, theta: &[f64]) -> f64 {
        theta[0] + theta[1] * o.z + o.idx.iter().map(|&i| theta[i]).sum::<f64>()
    }

    fn objective(&self, theta: &[f64], penalty: &[f64]) -> f64 {
        let data: f64 = self
            .obs
            .iter()
            .map(|o| {
                let eta = self.eta(o, theta);
                o.y * eta - o.n * log1p_exp(eta)
            })
            .sum();
        let pen: f64 = theta.iter().zip(penalty).map(|(t, p)| p * t * t).sum();
        data - 0.5 * pen
    }

    fn gradient_hessian(&self, theta: &[f64], penalty: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let k = self.n_params;
        let mut grad = DVector::zeros(k);
        let mut hess = DMatrix::zeros(k, k);
        for o in &self.obs {
            let p = inv_logit(self.eta(o, theta));
            let r = o.y - o.n * p;
            let w = o.n * p * (1.0 - p);
            let cols = [0, 1, o.idx[0], o.idx[1], o.idx[2], o.idx[3], o.idx[4]];
            let vals = [1.0, o.z, 1.0, 1.0, 1.0, 1.0, 1.0];
            for a in 0..7 {
                grad[cols[a]] += r * vals[a];
                let wa = w * vals[a];
                for b in 0..7 {
                    hess[(cols[a], cols[b])] += wa * vals[b];
                }
            }
        }
        for i in 0..k {
            grad[i] -= penalty[i] * theta[i];
            hess[(i, i)] += penalty[i];
        }
        (grad, hess)
    }

    /// Penalized Newton with step halving; returns the Cholesky factor of
    /// the Hessian at the mode.
    fn solve_mode(
        &self,
        theta: &mut DVector<f64>,
        penalty: &[f64],
    ) -> Result<Cholesky<f64, Dyn>> {
        let mut obj = self.objective(theta.as_slice(), penalty);
        for _ in 0..100 {
            let (grad, hess) = self.gradient_hessian(theta.as_slice(), penalty);
            let chol = hess
                .cholesky()
                .ok_or_else(|| Error::Numerical("MRP Hessian is not positive definite".into()))?;
            if grad.amax() < 1e-9 {
                return Ok(chol);
            }
            let step = chol.solve(&grad);
            let mut t = 1.0;
            loop {
                let cand = &*theta + &step * t;
                let cand_obj = self.objective(cand.as_slice(), penalty);
                if cand_obj >= obj - 1e-12 * obj.abs() || t < 1e-10 {
                    *theta = cand;
                    obj = cand_obj;
                    break;
                }
                t *= 0.5;
            }
            if step.amax() * t < 1e-11 {
                break;
            }
        }
        let (_, hess) = self.gradient_hessian(theta.as_slice(), penalty);
        hess.cholesky()
            .ok_or_else(|| Error::Numerical("MRP Hessian is not positive definite".into()))
    }
}

/// Fits the hierarchical logit to one window.
pub fn fit_mrp(window: &WindowDataset, census: &Census, options: &MrpOptions) -> Result<MrpFit> {
    if window.n_flagged() == 0 {
        return Err(Error::InsufficientData(format!(
            "window ending {} has no flagged queries",
            window.end
        )));
    }
    let levels = MrpLevels::from_keys(census.cells().iter().map(|c| &c.key).chain(window.counts.keys()));

    let incomes: Vec<f64> = census.cells().iter().map(|c| c.mean_income).collect();
    let income_mean = incomes.iter().sum::<f64>() / incomes.len() as f64;
    let income_sd =
        (incomes.iter().map(|v| (v - income_mean).powi(2)).sum::<f64>() / incomes.len() as f64).sqrt();
    let standardize = |v: f64| if income_sd > 0.0 { (v - income_mean) / income_sd } else { 0.0 };

    let mut sizes = [0usize; 5];
    let mut offsets = [0usize; 5];
    let mut next = 2;
    for g in GROUPS {
        sizes[g.index()] = levels.n_levels(g);
        offsets[g.index()] = next;
        next += sizes[g.index()];
    }
    let n_params = next;

    let mut missing_income = 0usize;
    let obs: Vec<Observation> = window
        .counts
        .iter()
        .filter(|(_, c)| c.flagged > 0)
        .map(|(key, c)| {
            let rel = levels.indices(key);
            let mut idx = [0usize; 5];
            for g in 0..5 {
                idx[g] = offsets[g] + rel[g].expect("levels include window keys");
            }
            let z = match census.find(key) {
                Some(cell) => standardize(cell.mean_income),
                None => {
                    missing_income += 1;
                    0.0
                }
            };
            Observation {
                idx,
                z,
                n: c.flagged as f64,
                y: c.a1 as f64,
            }
        })
        .collect();
    if missing_income > 0 {
        log::warn!(
            "window {}: {missing_income} observed cells missing from census; using mean income",
            window.end
        );
    }

    let problem = Problem {
        obs,
        n_params,
        offsets,
        sizes,
        ridge: options.fixed_effect_ridge,
    };

    let floor = options.variance_floor;
    let mut variances = [options.initial_variance.max(floor); 5];
    for g in 0..5 {
        if let Some(v) = options.fixed_variances[g] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("fixed variance {v} for {} must be positive", GROUPS[g].name())));
            }
            variances[g] = v;
        }
    }
    let all_fixed = options.fixed_variances.iter().all(Option::is_some);

    let mut theta = DVector::zeros(n_params);
    let (n_tot, y_tot) = problem
        .obs
        .iter()
        .fold((0.0, 0.0), |(n, y), o| (n + o.n, y + o.y));
    let p0 = ((y_tot + 0.5) / (n_tot + 1.0)).clamp(1e-6, 1.0 - 1e-6);
    theta[0] = (p0 / (1.0 - p0)).ln();

    // Fixed-point iteration on the variances, accelerated by squared
    // extrapolation in log space (SQUAREM).
    let update = |theta: &mut DVector<f64>, v: &[f64; 5]| -> Result<[f64; 5]> {
        let chol = problem.solve_mode(theta, &problem.penalties(v))?;
        let h_inv = chol.inverse();
        let mut out = *v;
        for g in 0..5 {
            if options.fixed_variances[g].is_some() || problem.sizes[g] == 0 {
                continue;
            }
            let range = problem.offsets[g]..problem.offsets[g] + problem.sizes[g];
            let ss: f64 = range.clone().map(|i| theta[i] * theta[i]).sum();
            let trace: f64 = range.map(|i| h_inv[(i, i)]).sum();
            let df = problem.sizes[g] as f64 - trace / v[g];
            out[g] = if df > 1e-12 { (ss / df).max(floor) } else { floor };
        }
        Ok(out)
    };
    let rel_change = |a: &[f64; 5], b: &[f64; 5]| a.iter().zip(b).map(|(x, y)| (y - x).abs() / x).fold(0.0, f64::max);

    let mut outer_iterations = 0;
    let mut converged = all_fixed;
    while !converged && outer_iterations < options.max_outer {
        let v1 = update(&mut theta, &variances)?;
        outer_iterations += 1;
        if rel_change(&variances, &v1) < options.tolerance || outer_iterations >= options.max_outer {
            converged = rel_change(&variances, &v1) < options.tolerance;
            variances = v1;
            break;
        }
        let v2 = update(&mut theta, &v1)?;
        outer_iterations += 1;
        if rel_change(&v1, &v2) < options.tolerance {
            variances = v2;
            converged = true;
            break;
        }
        let l0 = variances.map(f64::ln);
        let l1 = v1.map(f64::ln);
        let l2 = v2.map(f64::ln);
        let r: [f64; 5] = std::array::from_fn(|g| l1[g] - l0[g]);
        let u: [f64; 5] = std::array::from_fn(|g| l2[g] - 2.0 * l1[g] + l0[g]);
        let r_norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        let u_norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        variances = if u_norm > 0.0 {
            let alpha = (-r_norm / u_norm).min(-1.0);
            std::array::from_fn(|g| {
                let l = l0[g] - 2.0 * alpha * r[g] + alpha * alpha * u[g];
                if options.fixed_variances[g].is_none() && l.is_finite() {
                    l.exp().clamp(floor, 1e6)
                } else {
                    v2[g]
                }
            })
        } else {
            v2
        };
    }
    problem.solve_mode(&mut theta, &problem.penalties(&variances))?;
    if !converged {
        log::debug!(
            "window {}: variance iteration stopped at {} iterations",
            window.end,
            outer_iterations
        );
    }

    let effects = std::array::from_fn(|g| {
        let o = problem.offsets[g];
        theta.as_slice()[o..o + problem.sizes[g]].to_vec()
    });
    Ok(MrpFit {
        beta0: theta[0],
        beta_income: theta[1],
        effects,
        variances,
        levels,
        income_mean,
        income_sd,
        outer_iterations,
        converged,
    })
}

/// Predicted A1 probability for every census cell, in census order.
pub fn predict_cells(fit: &MrpFit, census: &Census) -> Vec<f64> {
    census
        .cells()
        .iter()
        .map(|c| inv_logit(fit.linear_predictor(&c.key, c.mean_income)))
        .collect()
}

/// Raw A1 share per state in a window (the unsmoothed comparison signal).
pub fn raw_state_shares(window: &WindowDataset) -> HashMap<StateCode, f64> {
    let mut acc: HashMap<StateCode, (u64, u64)> = HashMap::new();
    for (k, c) in &window.counts {
        let e = acc.entry(k.state.clone()).or_default();
        e.0 += c.flagged;
        e.1 += c.a1;
    }
    acc.into_iter()
        .filter(|(_, (n, _))| *n > 0)
        .map(|(s, (n, a))| (s, a as f64 / n as f64))
        .collect()
}
