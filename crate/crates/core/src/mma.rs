//! Method of Moving Asymptotes.
//!
//! Each step builds the separable convex approximation
//!
//! ```text
//! min  sum_j p0_j/(U_j - x_j) + q0_j/(x_j - L_j) + sum_i (c_i y_i + d_i y_i^2 / 2)
//! s.t. sum_j P_ij/(U_j - x_j) + Q_ij/(x_j - L_j) - y_i <= b_i,   alpha <= x <= beta
//! ```
//!
//! and solves it through its dual, which is concave in the constraint
//! multipliers only. With one multiplier per material the dual is tiny, so a
//! projected Newton iteration is used, with per-multiplier bisection sweeps
//! as the fallback when Newton stalls.
//!
//! The objective's regularization weight starts at `raa0` and adapts across
//! steps: when the observed objective at a proposed point exceeds what the
//! approximation predicted, the weight grows by the conservative update of
//! globally convergent MMA; otherwise it decays back towards `raa0`.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MmaParams {
    pub asyinit: f64,
    pub asyincr: f64,
    pub asydecr: f64,
    pub albefa: f64,
    /// Largest step per iteration as a fraction of the variable range.
    pub move_limit: f64,
    pub raa0: f64,
    /// Closest an asymptote may get to the current iterate, as a fraction of
    /// the variable range.
    pub min_gap: f64,
    /// Decay of the adaptive objective regularization per conservative step.
    /// `None` keeps the regularization fixed at `raa0`.
    pub adaptive_decay: Option<f64>,
    /// Linear penalty on the elastic constraint slack `y_i`.
    pub slack_linear: f64,
    /// Quadratic penalty on `y_i`.
    pub slack_quadratic: f64,
}

impl Default for MmaParams {
    fn default() -> Self {
        Self {
            asyinit: 0.5,
            asyincr: 1.2,
            asydecr: 0.7,
            albefa: 0.1,
            move_limit: 0.5,
            raa0: 1e-5,
            min_gap: 1e-5,
            adaptive_decay: Some(0.7),
            slack_linear: 1000.0,
            slack_quadratic: 1.0,
        }
    }
}

/// Constraint values `g_i(x) <= 0` and their dense gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSet {
    pub values: Vec<f64>,
    /// `gradients[i][j] = d g_i / d x_j`.
    pub gradients: Vec<Vec<f64>>,
}

impl ConstraintSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Outcome of one MMA step.
#[derive(Clone, Debug)]
pub struct MmaStep {
    pub x: Vec<f64>,
    /// Subproblem KKT residual `max_i |min(lambda_i, -h_i)|` at the returned point.
    pub kkt_residual: f64,
    pub multipliers: Vec<f64>,
    /// True when the bisection fallback produced the multipliers.
    pub used_fallback: bool,
}

pub const SUBPROBLEM_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct MmaState {
    params: MmaParams,
    xmin: Vec<f64>,
    xmax: Vec<f64>,
    low: Vec<f64>,
    upp: Vec<f64>,
    xold1: Vec<f64>,
    xold2: Vec<f64>,
    iteration: usize,
    rho: f64,
    prediction: Option<Prediction>,
}

/// What the last approximation said about the point it proposed.
#[derive(Clone, Debug)]
struct Prediction {
    from: Vec<f64>,
    to: Vec<f64>,
    low: Vec<f64>,
    upp: Vec<f64>,
    objective: f64,
}

impl MmaState {
    pub fn new(x0: &[f64], xmin: Vec<f64>, xmax: Vec<f64>, params: MmaParams) -> Result<Self> {
        let n = x0.len();
        Error::check_len("lower bounds", n, xmin.len())?;
        Error::check_len("upper bounds", n, xmax.len())?;
        for j in 0..n {
            if !(xmin[j] <= x0[j] && x0[j] <= xmax[j]) {
                return Err(Error::Optimizer(format!(
                    "initial x[{j}] = {} outside [{}, {}]",
                    x0[j], xmin[j], xmax[j]
                )));
            }
        }
        let low = (0..n).map(|j| x0[j] - params.asyinit * (xmax[j] - xmin[j])).collect();
        let upp = (0..n).map(|j| x0[j] + params.asyinit * (xmax[j] - xmin[j])).collect();
        Ok(Self {
            params,
            xmin,
            xmax,
            low,
            upp,
            xold1: x0.to_vec(),
            xold2: x0.to_vec(),
            iteration: 0,
            rho: params.raa0,
            prediction: None,
        })
    }

    pub fn lower_asymptotes(&self) -> &[f64] {
        &self.low
    }

    pub fn upper_asymptotes(&self) -> &[f64] {
        &self.upp
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn params(&self) -> &MmaParams {
        &self.params
    }

    /// Current objective regularization weight.
    pub fn objective_regularization(&self) -> f64 {
        self.rho
    }

    /// Forget the last prediction, e.g. after the objective itself changed.
    pub fn invalidate_prediction(&mut self) {
        self.prediction = None;
    }

    fn adapt_regularization(&mut self, x: &[f64], f0: f64) {
        let Some(decay) = self.params.adaptive_decay else {
            return;
        };
        let Some(pred) = self.prediction.take() else {
            return;
        };
        if pred.to != x {
            return;
        }
        if f0 > pred.objective {
            let mut spread = 0.0;
            for j in (0..x.len()).filter(|&j| !self.frozen(j)) {
                let range = (self.xmax[j] - self.xmin[j]).max(1e-5);
                let (l, u) = (pred.low[j], pred.upp[j]);
                let dx = x[j] - pred.from[j];
                spread += (u - l) * dx * dx / ((u - x[j]) * (x[j] - l) * range);
            }
            if spread > 0.0 {
                let delta = (f0 - pred.objective) / spread;
                self.rho = (1.1 * (self.rho + delta)).min(10.0 * self.rho);
            }
        } else {
            self.rho = (decay * self.rho).max(self.params.raa0);
        }
    }

    fn frozen(&self, j: usize) -> bool {
        self.xmax[j] - self.xmin[j] <= 0.0
    }

    /// One MMA iteration from `x` given the objective value `f0`, its gradient
    /// and the constraints.
    pub fn step(
        &mut self,
        x: &[f64],
        f0: f64,
        df0: &[f64],
        constraints: &ConstraintSet,
    ) -> Result<MmaStep> {
        let n = self.xmin.len();
        let m = constraints.len();
        Error::check_len("design", n, x.len())?;
        Error::check_len("objective gradient", n, df0.len())?;
        Error::check_len("constraint gradients", m, constraints.gradients.len())?;
        if m == 0 {
            return Err(Error::Optimizer("at least one constraint is required".into()));
        }
        for g in &constraints.gradients {
            Error::check_len("constraint gradient", n, g.len())?;
        }
        if df0.iter().chain(constraints.gradients.iter().flatten()).any(|v| !v.is_finite())
            || constraints.values.iter().any(|v| !v.is_finite())
            || !f0.is_finite()
        {
            return Err(Error::Optimizer("non-finite gradient or constraint value".into()));
        }
        let p = self.params;
        self.adapt_regularization(x, f0);
        self.iteration += 1;

        // asymptote update
        for j in 0..n {
            if self.frozen(j) {
                continue;
            }
            let range = self.xmax[j] - self.xmin[j];
            if self.iteration <= 2 {
                self.low[j] = x[j] - p.asyinit * range;
                self.upp[j] = x[j] + p.asyinit * range;
            } else {
                let trend = (x[j] - self.xold1[j]) * (self.xold1[j] - self.xold2[j]);
                let factor = if trend > 0.0 {
                    p.asyincr
                } else if trend < 0.0 {
                    p.asydecr
                } else {
                    1.0
                };
                let low = x[j] - factor * (self.xold1[j] - self.low[j]);
                let upp = x[j] + factor * (self.upp[j] - self.xold1[j]);
                self.low[j] = low.clamp(x[j] - 10.0 * range, x[j] - p.min_gap * range);
                self.upp[j] = upp.clamp(x[j] + p.min_gap * range, x[j] + 10.0 * range);
            }
        }

        // approximation
        let active: Vec<usize> = (0..n).filter(|&j| !self.frozen(j)).collect();
        let na = active.len();
        let mut sub = Subproblem {
            low: Vec::with_capacity(na),
            upp: Vec::with_capacity(na),
            alpha: Vec::with_capacity(na),
            beta: Vec::with_capacity(na),
            p0: Vec::with_capacity(na),
            q0: Vec::with_capacity(na),
            pc: vec![Vec::with_capacity(na); m],
            qc: vec![Vec::with_capacity(na); m],
            b: vec![0.0; m],
            c: p.slack_linear,
            d: p.slack_quadratic,
        };
        for &j in &active {
            let range = (self.xmax[j] - self.xmin[j]).max(1e-5);
            let (l, u) = (self.low[j], self.upp[j]);
            let alpha = (l + p.albefa * (x[j] - l))
                .max(x[j] - p.move_limit * range)
                .max(self.xmin[j]);
            let beta = (u - p.albefa * (u - x[j]))
                .min(x[j] + p.move_limit * range)
                .min(self.xmax[j]);
            let ux2 = (u - x[j]) * (u - x[j]);
            let xl2 = (x[j] - l) * (x[j] - l);
            let pos = df0[j].max(0.0);
            let neg = (-df0[j]).max(0.0);
            let reg = 0.001 * (pos + neg) + self.rho / range;
            sub.low.push(l);
            sub.upp.push(u);
            sub.alpha.push(alpha);
            sub.beta.push(beta);
            sub.p0.push((pos + reg) * ux2);
            sub.q0.push((neg + reg) * xl2);
            for i in 0..m {
                let g = constraints.gradients[i][j];
                let pos = g.max(0.0);
                let neg = (-g).max(0.0);
                let reg = 0.001 * (pos + neg) + p.raa0 / range;
                let pij = (pos + reg) * ux2;
                let qij = (neg + reg) * xl2;
                sub.pc[i].push(pij);
                sub.qc[i].push(qij);
                sub.b[i] += pij / (u - x[j]) + qij / (x[j] - l);
            }
        }
        for i in 0..m {
            sub.b[i] -= constraints.values[i];
        }

        let (lambda, residual, used_fallback) = sub.solve_dual()?;
        let xa = sub.primal(&lambda);
        let mut x_next = x.to_vec();
        let mut objective = f0;
        for (k, &j) in active.iter().enumerate() {
            x_next[j] = xa[k];
            let (l, u) = (sub.low[k], sub.upp[k]);
            objective += sub.p0[k] * (1.0 / (u - xa[k]) - 1.0 / (u - x[j]))
                + sub.q0[k] * (1.0 / (xa[k] - l) - 1.0 / (x[j] - l));
        }
        self.prediction = Some(Prediction {
            from: x.to_vec(),
            to: x_next.clone(),
            low: self.low.clone(),
            upp: self.upp.clone(),
            objective,
        });

        self.xold2 = std::mem::replace(&mut self.xold1, x.to_vec());
        Ok(MmaStep {
            x: x_next,
            kkt_residual: residual,
            multipliers: lambda,
            used_fallback,
        })
    }
}

struct Subproblem {
    low: Vec<f64>,
    upp: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    p0: Vec<f64>,
    q0: Vec<f64>,
    pc: Vec<Vec<f64>>,
    qc: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: f64,
    d: f64,
}

struct DualEval {
    value: f64,
    gradient: Vec<f64>,
}

impl Subproblem {
    fn m(&self) -> usize {
        self.b.len()
    }

    fn slack(&self, lambda: f64) -> f64 {
        ((lambda - self.c) / self.d).max(0.0)
    }

    fn primal_at(&self, lambda: &[f64], j: usize) -> (f64, f64, f64) {
        let mut ph = self.p0[j];
        let mut qh = self.q0[j];
        for (i, &l) in lambda.iter().enumerate() {
            ph += l * self.pc[i][j];
            qh += l * self.qc[i][j];
        }
        let (sp, sq) = (ph.sqrt(), qh.sqrt());
        let x = ((sp * self.low[j] + sq * self.upp[j]) / (sp + sq)).clamp(self.alpha[j], self.beta[j]);
        (x, ph, qh)
    }

    fn primal(&self, lambda: &[f64]) -> Vec<f64> {
        (0..self.low.len()).map(|j| self.primal_at(lambda, j).0).collect()
    }

    fn evaluate(&self, lambda: &[f64]) -> DualEval {
        let m = self.m();
        let mut value = 0.0;
        let mut gradient: Vec<f64> = self.b.iter().map(|b| -b).collect();
        for j in 0..self.low.len() {
            let (x, ph, qh) = self.primal_at(lambda, j);
            let (ux, xl) = (1.0 / (self.upp[j] - x), 1.0 / (x - self.low[j]));
            value += ph * ux + qh * xl;
            for i in 0..m {
                gradient[i] += self.pc[i][j] * ux + self.qc[i][j] * xl;
            }
        }
        for i in 0..m {
            let y = self.slack(lambda[i]);
            value += self.c * y + 0.5 * self.d * y * y - lambda[i] * y - lambda[i] * self.b[i];
            gradient[i] -= y;
        }
        DualEval { value, gradient }
    }

    /// Negated dual Hessian (positive semidefinite), row-major `m x m`.
    fn neg_hessian(&self, lambda: &[f64]) -> Vec<f64> {
        let m = self.m();
        let mut h = vec![0.0; m * m];
        let mut slope = vec![0.0; m];
        for j in 0..self.low.len() {
            let (x, ph, qh) = self.primal_at(lambda, j);
            if x <= self.alpha[j] || x >= self.beta[j] {
                continue;
            }
            let (ux, xl) = (1.0 / (self.upp[j] - x), 1.0 / (x - self.low[j]));
            let curvature = 2.0 * ph * ux * ux * ux + 2.0 * qh * xl * xl * xl;
            for i in 0..m {
                slope[i] = self.pc[i][j] * ux * ux - self.qc[i][j] * xl * xl;
            }
            for i in 0..m {
                for k in 0..m {
                    h[i * m + k] += slope[i] * slope[k] / curvature;
                }
            }
        }
        for i in 0..m {
            if lambda[i] > self.c {
                h[i * m + i] += 1.0 / self.d;
            }
        }
        h
    }

    fn residual(lambda: &[f64], gradient: &[f64]) -> f64 {
        lambda
            .iter()
            .zip(gradient)
            .map(|(&l, &g)| l.min(-g).abs())
            .fold(0.0, f64::max)
    }

    /// Returns multipliers, final KKT residual and whether bisection was needed.
    fn solve_dual(&self) -> Result<(Vec<f64>, f64, bool)> {
        // aim below the acceptance bound so round-off in the caller cannot push it over
        let target = 0.01 * SUBPROBLEM_TOLERANCE;
        let m = self.m();
        let mut lambda = vec![0.0; m];
        if let Some(res) = self.newton(&mut lambda, target) {
            if res <= target {
                return Ok((lambda, res, false));
            }
        }
        let mut lambda = vec![0.0; m];
        let res = self.bisection_sweeps(&mut lambda, target);
        if res <= SUBPROBLEM_TOLERANCE {
            Ok((lambda, res, true))
        } else {
            Err(Error::Optimizer(format!(
                "MMA subproblem did not converge (KKT residual {res:.3e})"
            )))
        }
    }

    fn newton(&self, lambda: &mut [f64], target: f64) -> Option<f64> {
        let m = self.m();
        let mut eval = self.evaluate(lambda);
        for _ in 0..100 {
            let res = Self::residual(lambda, &eval.gradient);
            if res <= target {
                return Some(res);
            }
            let free: Vec<usize> = (0..m)
                .filter(|&i| lambda[i] > 0.0 || eval.gradient[i] > 0.0)
                .collect();
            let h = self.neg_hessian(lambda);
            let k = free.len();
            let mut a = vec![0.0; k * k];
            let mut rhs = vec![0.0; k];
            for (r, &i) in free.iter().enumerate() {
                rhs[r] = eval.gradient[i];
                for (s, &l) in free.iter().enumerate() {
                    a[r * k + s] = h[i * m + l];
                }
            }
            let dir = solve_spd(&mut a, &mut rhs, k)?;
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let mut trial = lambda.to_vec();
                for (r, &i) in free.iter().enumerate() {
                    trial[i] = (lambda[i] + t * dir[r]).max(0.0);
                }
                let trial_eval = self.evaluate(&trial);
                let ascent: f64 = (0..m).map(|i| eval.gradient[i] * (trial[i] - lambda[i])).sum();
                if trial_eval.value >= eval.value + 1e-4 * ascent
                    || Self::residual(&trial, &trial_eval.gradient)
                        < Self::residual(lambda, &eval.gradient)
                {
                    lambda.copy_from_slice(&trial);
                    eval = trial_eval;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                return None;
            }
        }
        let res = Self::residual(lambda, &eval.gradient);
        Some(res)
    }

    /// Gauss-Seidel sweeps; each multiplier solved by bisection on its own
    /// (monotonically decreasing) dual gradient.
    fn bisection_sweeps(&self, lambda: &mut [f64], target: f64) -> f64 {
        let m = self.m();
        let mut res = f64::INFINITY;
        for _ in 0..500 {
            for i in 0..m {
                let grad_i = |l: f64, lambda: &mut [f64]| {
                    lambda[i] = l;
                    self.evaluate(lambda).gradient[i]
                };
                if grad_i(0.0, lambda) <= 0.0 {
                    lambda[i] = 0.0;
                    continue;
                }
                let mut hi = 1.0;
                while grad_i(hi, lambda) > 0.0 && hi < 1e300 {
                    hi *= 2.0;
                }
                let mut lo = 0.0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if grad_i(mid, lambda) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                // keep the endpoint with the smaller residual
                let g_lo = grad_i(lo, lambda).abs();
                let g_hi = grad_i(hi, lambda).abs();
                lambda[i] = if g_lo <= g_hi { lo } else { hi };
            }
            res = Self::residual(lambda, &self.evaluate(lambda).gradient);
            if res <= target {
                break;
            }
        }
        res
    }
}

/// Cholesky solve of a small dense SPD system with a relative diagonal shift
/// for semidefinite cases. Returns `None` if the matrix is numerically zero.
fn solve_spd(a: &mut [f64], rhs: &mut [f64], k: usize) -> Option<Vec<f64>> {
    let scale = (0..k).map(|i| a[i * k + i]).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return None;
    }
    for i in 0..k {
        a[i * k + i] += 1e-13 * scale;
    }
    for j in 0..k {
        let mut d = a[j * k + j];
        for p in 0..j {
            d -= a[j * k + p] * a[j * k + p];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        a[j * k + j] = d;
        for i in j + 1..k {
            let mut s = a[i * k + j];
            for p in 0..j {
                s -= a[i * k + p] * a[j * k + p];
            }
            a[i * k + j] = s / d;
        }
    }
    for i in 0..k {
        let mut s = rhs[i];
        for p in 0..i {
            s -= a[i * k + p] * rhs[p];
        }
        rhs[i] = s / a[i * k + i];
    }
    for i in (0..k).rev() {
        let mut s = rhs[i];
        for p in i + 1..k {
            s -= a[p * k + i] * rhs[p];
        }
        rhs[i] = s / a[i * k + i];
    }
    Some(rhs.to_vec())
}
