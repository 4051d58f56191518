//! Minimization of the discrete regularized action over the perturbed
//! admissible class: assembly of the action, its gradient and banded
//! Hessian, a damped Newton method with Levenberg shift, ε-continuation
//! with warm starts, the cosine initial guess, the recovery operator
//! into the perturbed class, and a brute-force oracle for tiny grids.

use crate::error::{CoreError, Result};
use crate::grid::{
    boundary_profile, cell_average, cell_gradient, impose_boundary, Domain, Grid, ScalarField,
};
use crate::integrand::{f_degenerate, FHatFast, RegularizationParams};
use crate::potential::PotentialSpec;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Parameters of the Newton continuation.
#[derive(Debug, Clone)]
pub struct SolveConfig {
    /// Strictly decreasing ε values in (0,1).
    pub eps_schedule: Vec<f64>,
    /// Gradient sup-norm target.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    /// Backtracking shrink factor in (0,1).
    pub ls_shrink: f64,
    /// Armijo slope fraction.
    pub ls_slope: f64,
    /// Initial Levenberg shift.
    pub lm_shift0: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            eps_schedule: default_eps_schedule(),
            newton_tol: 1e-9,
            max_newton_iters: 200,
            ls_shrink: 0.5,
            ls_slope: 1e-4,
            lm_shift0: 0.0,
        }
    }
}

/// Geometric schedule 0.2, 0.1, … halving down to (and ending exactly at) 1e-3.
pub fn default_eps_schedule() -> Vec<f64> {
    let mut s = Vec::new();
    let mut eps = 0.2;
    while eps > 1e-3 {
        s.push(eps);
        eps *= 0.5;
    }
    s.push(1e-3);
    s
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eps_schedule.is_empty() {
            return Err(CoreError::InvalidInput("empty eps schedule".into()));
        }
        for w in self.eps_schedule.windows(2) {
            if w[1] >= w[0] {
                return Err(CoreError::InvalidInput(format!(
                    "eps schedule must be strictly decreasing: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        for &e in &self.eps_schedule {
            if !(0.0 < e && e < 1.0) {
                return Err(CoreError::InvalidInput(format!("eps {e} outside (0,1)")));
            }
        }
        if self.newton_tol <= 0.0 {
            return Err(CoreError::InvalidInput("newton_tol must be > 0".into()));
        }
        if !(0.0 < self.ls_shrink && self.ls_shrink < 1.0) || !(0.0 < self.ls_slope && self.ls_slope < 0.5) {
            return Err(CoreError::InvalidInput("line search parameters out of range".into()));
        }
        Ok(())
    }
}

/// Per-ε convergence record.
#[derive(Debug, Clone)]
pub struct EpsRecord {
    pub eps: f64,
    pub action: f64,
    pub grad_norm: f64,
    pub iters: usize,
    pub line_search_steps: usize,
    pub el_residual_norm: f64,
}

/// Records for every ε of a continuation run.
#[derive(Debug, Clone, Default)]
pub struct SolveReport {
    pub records: Vec<EpsRecord>,
}

/// Kinetic part of the action: the convex extension of the interface
/// integrand, or a quadratic |p|²/2 stand-in for solver verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KineticModel {
    Extension,
    QuadraticToy,
}

pub(crate) enum Evaluator {
    Fast(FHatFast),
    Quad,
}

impl Evaluator {
    /// (value, gradient, hessian) of the kinetic integrand at p.
    pub(crate) fn eval(&self, p: [f64; 2]) -> (f64, [f64; 2], [[f64; 2]; 2]) {
        match self {
            Evaluator::Fast(fh) => fh.eval(p),
            Evaluator::Quad => {
                (0.5 * (p[0] * p[0] + p[1] * p[1]), p, [[1.0, 0.0], [0.0, 1.0]])
            }
        }
    }

    fn value(&self, p: [f64; 2], degenerate: bool) -> f64 {
        if degenerate {
            match self {
                Evaluator::Fast(_) => unreachable!(),
                Evaluator::Quad => 0.5 * (p[0] * p[0] + p[1] * p[1]),
            }
        } else {
            self.eval(p).0
        }
    }
}

/// Symmetric banded matrix in lower-band storage:
/// entry (k, k−d) at data[k·(bw+1)+d], 0 ≤ d ≤ bw.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    pub n: usize,
    pub bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        debug_assert!(r >= c && r - c <= self.bw);
        r * (self.bw + 1) + (r - c)
    }

    /// Accumulate into the symmetric entry (r, c); only r ≥ c is stored.
    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        if r >= c {
            let i = self.idx(r, c);
            self.data[i] += v;
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (r, c) = if r >= c { (r, c) } else { (c, r) };
        if r - c > self.bw {
            0.0
        } else {
            self.data[self.idx(r, c)]
        }
    }

    pub fn add_diag(&mut self, mu: f64) {
        for k in 0..self.n {
            let i = self.idx(k, k);
            self.data[i] += mu;
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|r| (0..self.n).map(|c| self.get(r, c)).collect()).collect()
    }

    /// Banded Cholesky A = LLᵀ; None if a pivot is not strictly positive.
    pub fn cholesky(&self) -> Option<BandMatrix> {
        let mut l = self.clone();
        let bw = self.bw;
        for k in 0..self.n {
            let c0 = k.saturating_sub(bw);
            let mut s = l.data[l.idx(k, k)];
            for j in c0..k {
                let v = l.data[l.idx(k, j)];
                s -= v * v;
            }
            if s <= 0.0 || !s.is_finite() {
                return None;
            }
            let pivot = s.sqrt();
            let i_kk = l.idx(k, k);
            l.data[i_kk] = pivot;
            let rmax = (k + bw).min(self.n - 1);
            for i in (k + 1)..=rmax {
                let mut s = l.data[l.idx(i, k)];
                let j0 = i.saturating_sub(bw).max(c0);
                for j in j0..k {
                    s -= l.data[l.idx(i, j)] * l.data[l.idx(k, j)];
                }
                let i_ik = l.idx(i, k);
                l.data[i_ik] = s / pivot;
            }
        }
        Some(l)
    }

    /// Solve LLᵀ x = b given the Cholesky factor L (self).
    pub fn solve_cholesky(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let bw = self.bw;
        let mut y = b.to_vec();
        for k in 0..n {
            let c0 = k.saturating_sub(bw);
            let mut s = y[k];
            for j in c0..k {
                s -= self.data[self.idx(k, j)] * y[j];
            }
            y[k] = s / self.data[self.idx(k, k)];
        }
        for k in (0..n).rev() {
            let rmax = (k + bw).min(n - 1);
            let mut s = y[k];
            for i in (k + 1)..=rmax {
                s -= self.data[self.idx(i, k)] * y[i];
            }
            y[k] = s / self.data[self.idx(k, k)];
        }
        y
    }
}

/// A discrete variational problem instance: domain, grid, potential,
/// regularization exponents, and the kinetic model.
pub struct Problem {
    pub dom: Domain,
    pub grid: Grid,
    pub ps: PotentialSpec,
    pub theta: f64,
    pub beta: f64,
    pub kinetic: KineticModel,
}

/// Corner offsets of a cell with the gradient-stencil signs of each corner.
const CORNERS: [(usize, usize, f64, f64); 4] =
    [(0, 0, -1.0, -1.0), (0, 1, -1.0, 1.0), (1, 0, 1.0, -1.0), (1, 1, 1.0, 1.0)];

impl Problem {
    pub fn new(dom: Domain, grid: Grid, ps: PotentialSpec, theta: f64, beta: f64) -> Self {
        Problem { dom, grid, ps, theta, beta, kinetic: KineticModel::Extension }
    }

    pub fn with_kinetic(mut self, kinetic: KineticModel) -> Self {
        self.kinetic = kinetic;
        self
    }

    pub(crate) fn evaluator(&self, eps: f64) -> Result<Evaluator> {
        match self.kinetic {
            KineticModel::QuadraticToy => Ok(Evaluator::Quad),
            KineticModel::Extension => {
                let rp = RegularizationParams::new(eps, self.theta, self.beta)?;
                Ok(Evaluator::Fast(FHatFast::new(rp)))
            }
        }
    }

    /// Number of interior degrees of freedom.
    pub fn ndof(&self) -> usize {
        (self.grid.nt - 1) * (self.grid.nx - 1)
    }

    #[inline]
    fn dof(&self, i: usize, j: usize) -> usize {
        (i - 1) * (self.grid.nx - 1) + (j - 1)
    }

    #[inline]
    fn is_interior(&self, i: usize, j: usize) -> bool {
        i >= 1 && i <= self.grid.nt - 1 && j >= 1 && j <= self.grid.nx - 1
    }

    /// The linear-in-time interpolant of the ε-perturbed traces.
    pub fn u_hat(&self, eps: f64) -> ScalarField {
        let (t, beta) = (self.dom.t, self.beta);
        let dom = self.dom;
        ScalarField::from_fn(self.grid, &self.dom, |x1, x2| {
            (2.0 * x1 / t - 1.0) * boundary_profile(x2, eps, beta, &dom).expect("node in domain")
        })
    }

    /// Cosine sweep initial guess −U_ε(x₂)·cos(πx₁/T), exact on the boundary.
    pub fn initial_guess(&self, eps: f64) -> ScalarField {
        let (t, beta) = (self.dom.t, self.beta);
        let dom = self.dom;
        let mut u = ScalarField::from_fn(self.grid, &self.dom, |x1, x2| {
            -boundary_profile(x2, eps, beta, &dom).expect("node in domain")
                * (std::f64::consts::PI * x1 / t).cos()
        });
        impose_boundary(&mut u, eps, beta, &self.dom);
        u
    }

    /// Midpoint-rule action ∫ F̂_ε(∇u) − V(x₂, ū) over the cells.
    /// ε = 0 uses the degenerate integrand and may return +∞.
    pub fn action(&self, u: &ScalarField, eps: f64) -> Result<f64> {
        let degenerate = eps == 0.0;
        let ev = if degenerate { None } else { Some(self.evaluator(eps)?) };
        let g = self.grid;
        let w = g.ht * g.hx;
        let mut total = 0.0;
        for i in 0..g.nt {
            for j in 0..g.nx {
                let p = cell_gradient(u, i, j);
                let kin = match &ev {
                    Some(e) => e.value(p, false),
                    None => match self.kinetic {
                        KineticModel::Extension => f_degenerate(p),
                        KineticModel::QuadraticToy => 0.5 * (p[0] * p[0] + p[1] * p[1]),
                    },
                };
                let (_, x2c) = g.cell_center(i, j, &self.dom);
                let ubar = cell_average(u, i, j);
                total += w * (kin - self.ps.v(x2c, ubar));
                if total.is_nan() {
                    return Err(CoreError::InvalidInput(format!(
                        "action is NaN at cell ({i},{j})"
                    )));
                }
            }
        }
        Ok(total)
    }

    /// Exact gradient of the discrete action with respect to interior nodes.
    pub fn gradient(&self, u: &ScalarField, eps: f64) -> Result<Vec<f64>> {
        let ev = self.evaluator(eps)?;
        let g = self.grid;
        let w = g.ht * g.hx;
        let (s1m, s2m) = (0.5 / g.ht, 0.5 / g.hx);
        let mut grad = vec![0.0; self.ndof()];
        for i in 0..g.nt {
            for j in 0..g.nx {
                let p = cell_gradient(u, i, j);
                let (_, gp, _) = ev.eval(p);
                let (_, x2c) = g.cell_center(i, j, &self.dom);
                let dv = self.ps.dzv(x2c, cell_average(u, i, j));
                for &(di, dj, e1, e2) in &CORNERS {
                    let (ni, nj) = (i + di, j + dj);
                    if self.is_interior(ni, nj) {
                        grad[self.dof(ni, nj)] +=
                            w * (gp[0] * e1 * s1m + gp[1] * e2 * s2m - 0.25 * dv);
                    }
                }
            }
        }
        Ok(grad)
    }

    /// Exact Hessian of the discrete action (banded, half-bandwidth Nx).
    pub fn hessian(&self, u: &ScalarField, eps: f64) -> Result<BandMatrix> {
        let ev = self.evaluator(eps)?;
        let g = self.grid;
        let w = g.ht * g.hx;
        let (s1m, s2m) = (0.5 / g.ht, 0.5 / g.hx);
        let mut h = BandMatrix::zeros(self.ndof(), g.nx);
        for i in 0..g.nt {
            for j in 0..g.nx {
                let p = cell_gradient(u, i, j);
                let (_, _, hp) = ev.eval(p);
                let (_, x2c) = g.cell_center(i, j, &self.dom);
                let d2v = self.ps.dz2v(x2c, cell_average(u, i, j));
                for &(di, dj, a1, a2) in &CORNERS {
                    let (ri, rj) = (i + di, j + dj);
                    if !self.is_interior(ri, rj) {
                        continue;
                    }
                    let r = self.dof(ri, rj);
                    let sa = [a1 * s1m, a2 * s2m];
                    for &(ei, ej, b1, b2) in &CORNERS {
                        let (ci, cj) = (i + ei, j + ej);
                        if !self.is_interior(ci, cj) {
                            continue;
                        }
                        let c = self.dof(ci, cj);
                        if r < c {
                            continue;
                        }
                        let sb = [b1 * s1m, b2 * s2m];
                        let kin = sa[0] * (hp[0][0] * sb[0] + hp[0][1] * sb[1])
                            + sa[1] * (hp[1][0] * sb[0] + hp[1][1] * sb[1]);
                        h.add(r, c, w * (kin - d2v / 16.0));
                    }
                }
            }
        }
        Ok(h)
    }

    /// Pointwise Euler–Lagrange residual D²F̂(∇u):D²u + ∂_zV(x₂, u) at
    /// interior nodes via second-order central differences.
    pub fn el_residual(&self, u: &ScalarField, eps: f64) -> Result<Vec<f64>> {
        let ev = self.evaluator(eps)?;
        let g = self.grid;
        let mut res = vec![0.0; self.ndof()];
        for i in 1..g.nt {
            for j in 1..g.nx {
                let p = [
                    (u[(i + 1, j)] - u[(i - 1, j)]) / (2.0 * g.ht),
                    (u[(i, j + 1)] - u[(i, j - 1)]) / (2.0 * g.hx),
                ];
                let u11 = (u[(i + 1, j)] - 2.0 * u[(i, j)] + u[(i - 1, j)]) / (g.ht * g.ht);
                let u22 = (u[(i, j + 1)] - 2.0 * u[(i, j)] + u[(i, j - 1)]) / (g.hx * g.hx);
                let u12 = (u[(i + 1, j + 1)] - u[(i + 1, j - 1)] - u[(i - 1, j + 1)]
                    + u[(i - 1, j - 1)])
                    / (4.0 * g.ht * g.hx);
                let (_, _, hp) = ev.eval(p);
                let (_, x2) = g.node(i, j, &self.dom);
                res[self.dof(i, j)] = hp[0][0] * u11 + 2.0 * hp[0][1] * u12 + hp[1][1] * u22
                    + self.ps.dzv(x2, u[(i, j)]);
            }
        }
        Ok(res)
    }

    /// Damped Newton with Levenberg shift and Armijo backtracking.
    /// The boundary of u0 must already be imposed for this ε.
    pub fn newton_solve(
        &self,
        u0: &ScalarField,
        eps: f64,
        cfg: &SolveConfig,
    ) -> Result<(ScalarField, EpsRecord)> {
        cfg.validate()?;
        let mut u = u0.clone();
        let mut a_cur = self.action(&u, eps)?;
        if !a_cur.is_finite() {
            return Err(CoreError::InvalidInput("initial action not finite".into()));
        }
        let mut mu = cfg.lm_shift0;
        let mut ls_total = 0usize;
        for iter in 0..=cfg.max_newton_iters {
            let grad = self.gradient(&u, eps)?;
            let gnorm = grad.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            if gnorm <= cfg.newton_tol {
                let res = self.el_residual(&u, eps)?;
                let rnorm = res.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
                return Ok((
                    u,
                    EpsRecord {
                        eps,
                        action: a_cur,
                        grad_norm: gnorm,
                        iters: iter,
                        line_search_steps: ls_total,
                        el_residual_norm: rnorm,
                    },
                ));
            }
            if iter == cfg.max_newton_iters {
                break;
            }
            let h = self.hessian(&u, eps)?;
            // Find a descent step, inflating the Levenberg shift as needed.
            let mut stepped = false;
            while !stepped {
                if mu > 1e14 {
                    return Err(CoreError::NonConvergence(format!(
                        "Levenberg shift diverged at eps = {eps}, grad norm {gnorm:.3e}"
                    )));
                }
                let mut hs = h.clone();
                if mu > 0.0 {
                    hs.add_diag(mu);
                }
                let dir = match hs.cholesky() {
                    Some(l) => {
                        let rhs: Vec<f64> = grad.iter().map(|&v| -v).collect();
                        Some(l.solve_cholesky(&rhs))
                    }
                    None => None,
                };
                if let Some(d) = dir {
                    let gd: f64 = grad.iter().zip(&d).map(|(a, b)| a * b).sum();
                    if gd < 0.0 && gd.is_finite() {
                        let mut t = 1.0;
                        while t > 1e-14 {
                            let mut u_try = u.clone();
                            for i in 1..self.grid.nt {
                                for j in 1..self.grid.nx {
                                    u_try[(i, j)] += t * d[self.dof(i, j)];
                                }
                            }
                            ls_total += 1;
                            let a_try = self.action(&u_try, eps)?;
                            // The noise allowance keeps the terminal Newton
                            // steps acceptable once the predicted decrease
                            // falls below the action's rounding error.
                            let noise = 32.0 * f64::EPSILON * (1.0 + a_cur.abs());
                            if a_try.is_finite() && a_try <= a_cur + cfg.ls_slope * t * gd + noise {
                                u = u_try;
                                a_cur = a_try;
                                mu *= 0.1;
                                stepped = true;
                                break;
                            }
                            t *= cfg.ls_shrink;
                        }
                    }
                }
                if !stepped {
                    mu = (mu * 2.0).max(1e-12);
                }
            }
        }
        Err(CoreError::NonConvergence(format!(
            "Newton did not reach tol {} in {} iterations at eps = {eps}",
            cfg.newton_tol, cfg.max_newton_iters
        )))
    }

    /// Warm-started continuation along the ε schedule; returns the solution
    /// for every ε and the per-ε records.
    /// Shrink a warm start into the strip |∂₂u| < 1 + ε and impose the ε
    /// boundary traces; a start outside the strip sees the extension's
    /// enormous gradients and stalls the line search before Newton can
    /// contract.
    pub fn prepare_warm_start(&self, u: &mut ScalarField, eps: f64) {
        let mut max2 = 0.0f64;
        for i in 0..self.grid.nt {
            for j in 0..self.grid.nx {
                max2 = max2.max(cell_gradient(u, i, j)[1].abs());
            }
        }
        let cap = (1.0 + eps) * (1.0 - 1e-9);
        if max2 > cap {
            let scale = cap / max2;
            for v in u.values_mut() {
                *v *= scale;
            }
        }
        impose_boundary(u, eps, self.beta, &self.dom);
    }

    pub fn continuation_solve(
        &self,
        cfg: &SolveConfig,
    ) -> Result<(Vec<(f64, ScalarField)>, SolveReport)> {
        cfg.validate()?;
        let mut u = self.initial_guess(cfg.eps_schedule[0]);
        let mut out = Vec::new();
        let mut report = SolveReport::default();
        for &eps in &cfg.eps_schedule {
            self.prepare_warm_start(&mut u, eps);
            let (sol, rec) = self.newton_solve(&u, eps, cfg).map_err(|e| match e {
                CoreError::NonConvergence(msg) => {
                    CoreError::NonConvergence(format!("eps = {eps}: {msg}"))
                }
                other => other,
            })?;
            u = sol.clone();
            out.push((eps, sol));
            report.records.push(rec);
        }
        Ok((out, report))
    }

    /// Recovery of a field with finite degenerate action into the
    /// ε-perturbed class: cosine time caps of width ε, time rescaling of the
    /// interior, mollification in x₁ at scale ε^θ, and the trace correction.
    pub fn recovery_sequence(&self, u: &ScalarField, eps: f64) -> Result<ScalarField> {
        let a0 = self.action(u, 0.0)?;
        if !a0.is_finite() {
            return Err(CoreError::InvalidInput(
                "recovery input must have finite degenerate action".into(),
            ));
        }
        let t = self.dom.t;
        let delta = eps;
        if !(0.0 < delta && 2.0 * delta < t) {
            return Err(CoreError::InvalidInput(format!(
                "cap width eps = {eps} must lie in (0, T/2)"
            )));
        }
        let eta = eps.powf(self.theta);
        let g = self.grid;

        // Piecewise-linear interpolation of column j in time.
        let col_interp = |j: usize, x1: f64| -> f64 {
            let s = (x1 / g.ht).clamp(0.0, g.nt as f64);
            let i0 = (s.floor() as usize).min(g.nt - 1);
            let frac = s - i0 as f64;
            u[(i0, j)] * (1.0 - frac) + u[(i0 + 1, j)] * frac
        };

        // The capped, rescaled field with its smooth reflection outside
        // [0, T]; reflected values pair-cancel so mollification preserves
        // the exact traces at x₁ = 0 and x₁ = T.
        let capped = |j: usize, u0: f64, x1: f64| -> f64 {
            if x1 < 0.0 {
                -(2.0 - x1.cos()) * u0
            } else if x1 <= delta {
                -x1.cos() * u0
            } else if x1 < t - delta {
                delta.cos() * col_interp(j, (x1 - delta) * t / (t - 2.0 * delta))
            } else if x1 <= t {
                (t - x1).cos() * u0
            } else {
                (2.0 - (t - x1).cos()) * u0
            }
        };

        // Normalized bump-kernel stencil for the x₁ mollification.
        const K: usize = 33;
        let mut st = [0.0f64; K];
        let mut wsum = 0.0;
        for (k, w) in st.iter_mut().enumerate() {
            let s = -1.0 + 2.0 * k as f64 / (K - 1) as f64;
            *w = if s.abs() < 1.0 { (-1.0 / (1.0 - s * s)).exp() } else { 0.0 };
            wsum += *w;
        }
        for w in st.iter_mut() {
            *w /= wsum;
        }

        let ebl = eps.powf(self.beta) / (2.0 * self.dom.l);
        let mut out = ScalarField::zeros(g);
        for j in 0..=g.nx {
            let (_, x2) = g.node(0, j, &self.dom);
            let u0 = boundary_profile(x2, 0.0, self.beta, &self.dom)?;
            for i in 0..=g.nt {
                let (x1, _) = g.node(i, j, &self.dom);
                let mut v = 0.0;
                for (k, w) in st.iter().enumerate() {
                    let s = -1.0 + 2.0 * k as f64 / (K - 1) as f64;
                    v += w * capped(j, u0, x1 + eta * s);
                }
                out[(i, j)] =
                    v + (2.0 * x1 / t - 1.0) * ebl * (self.dom.l * self.dom.l - x2 * x2);
            }
        }
        impose_boundary(&mut out, eps, self.beta, &self.dom);
        Ok(out)
    }

    /// Reinterpret an ε-solution in the unperturbed class: remove the trace
    /// correction, restore the sharp traces, and clamp each interior row to
    /// Lipschitz constant 1 − 1e−6 in x₂ so the degenerate action is finite.
    pub fn project_to_x(&self, u: &ScalarField, eps: f64) -> ScalarField {
        let g = self.grid;
        let t = self.dom.t;
        let ebl = eps.powf(self.beta) / (2.0 * self.dom.l);
        let mut out = u.clone();
        for i in 0..=g.nt {
            for j in 0..=g.nx {
                let (x1, x2) = g.node(i, j, &self.dom);
                out[(i, j)] -=
                    (2.0 * x1 / t - 1.0) * ebl * (self.dom.l * self.dom.l - x2 * x2);
            }
        }
        impose_boundary(&mut out, 0.0, self.beta, &self.dom);
        let kap = (1.0 - 1e-6) * g.hx;
        for i in 1..g.nt {
            for j in 1..=g.nx {
                let lo = out[(i, j - 1)] - kap;
                let hi = out[(i, j - 1)] + kap;
                out[(i, j)] = out[(i, j)].clamp(lo, hi);
            }
            for j in (0..g.nx).rev() {
                let lo = out[(i, j + 1)] - kap;
                let hi = out[(i, j + 1)] + kap;
                out[(i, j)] = out[(i, j)].clamp(lo, hi);
            }
        }
        out
    }

    /// Action restricted to the cells touching node (i, j) (used by the
    /// coordinate-descent oracle).
    fn local_action(&self, u: &ScalarField, i: usize, j: usize, ev: &Evaluator) -> f64 {
        let g = self.grid;
        let w = g.ht * g.hx;
        let mut total = 0.0;
        for ci in i.saturating_sub(1)..=i.min(g.nt - 1) {
            for cj in j.saturating_sub(1)..=j.min(g.nx - 1) {
                let p = cell_gradient(u, ci, cj);
                let kin = ev.eval(p).0;
                let (_, x2c) = g.cell_center(ci, cj, &self.dom);
                total += w * (kin - self.ps.v(x2c, cell_average(u, ci, cj)));
            }
        }
        total
    }
}

/// Outcome of the brute-force oracle: best field, best action, and the
/// final action of every restart.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub field: ScalarField,
    pub action: f64,
    pub restart_actions: Vec<f64>,
}

impl Problem {
    /// Cyclic coordinate descent with golden-section line searches,
    /// restarted from 20 random perturbations of the initial guess.
    /// Only valid on tiny grids (≤ 25 interior nodes).
    pub fn oracle_minimize(&self, eps: f64, seed: u64) -> Result<OracleResult> {
        if self.ndof() > 25 {
            return Err(CoreError::InvalidInput(format!(
                "oracle requires <= 25 interior nodes, got {}",
                self.ndof()
            )));
        }
        let ev = self.evaluator(eps)?;
        let base = self.initial_guess(eps);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best: Option<(ScalarField, f64)> = None;
        let mut restart_actions = Vec::new();
        for _ in 0..20 {
            let mut u = base.clone();
            for i in 1..self.grid.nt {
                for j in 1..self.grid.nx {
                    u[(i, j)] += rng.gen_range(-0.1..0.1);
                }
            }
            let mut radius = 0.5f64;
            let mut a_prev = f64::INFINITY;
            for _sweep in 0..100_000 {
                let u_prev = u.clone();
                let mut max_move = 0.0f64;
                for i in 1..self.grid.nt {
                    for j in 1..self.grid.nx {
                        let v0 = u[(i, j)];
                        let vn = self.golden_coordinate(&mut u, i, j, v0, &ev, radius);
                        u[(i, j)] = vn;
                        max_move = max_move.max((vn - v0).abs());
                    }
                }
                // Coordinate descent contracts slowly along the lowest
                // Hessian mode; a line search along the whole sweep
                // displacement removes that mode cheaply.
                self.extrapolate_sweep(&mut u, &u_prev, eps);
                radius = (8.0 * max_move).clamp(1e-10, 0.5);
                let a_now = self.action(&u, eps)?;
                if max_move < 1e-10
                    || (a_prev - a_now).abs() <= 1e-15 * (1.0 + a_now.abs())
                {
                    break;
                }
                a_prev = a_now;
            }
            let a = self.action(&u, eps)?;
            restart_actions.push(a);
            if best.as_ref().map_or(true, |(_, b)| a < *b) {
                best = Some((u, a));
            }
        }
        let (field, action) = best.expect("at least one restart");
        Ok(OracleResult { field, action, restart_actions })
    }

    /// Minimize the action in the single coordinate (i, j) by bracket
    /// expansion plus golden-section search.
    fn golden_coordinate(
        &self,
        u: &mut ScalarField,
        i: usize,
        j: usize,
        v0: f64,
        ev: &Evaluator,
        radius: f64,
    ) -> f64 {
        let phi = |v: f64, u: &mut ScalarField| {
            u[(i, j)] = v;
            self.local_action(u, i, j, ev)
        };
        let mut r = radius;
        let (mut lo, mut hi) = (v0 - r, v0 + r);
        for _ in 0..60 {
            let fl = phi(lo, u);
            let fm = phi(v0, u);
            let fh = phi(hi, u);
            if fm <= fl && fm <= fh {
                break;
            }
            r *= 2.0;
            lo = v0 - r;
            hi = v0 + r;
        }
        let inv = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = hi - inv * (hi - lo);
        let mut x2 = lo + inv * (hi - lo);
        let mut f1 = phi(x1, u);
        let mut f2 = phi(x2, u);
        let tol = (1e-4 * radius).max(1e-13);
        while hi - lo > tol {
            if f1 > f2 {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + inv * (hi - lo);
                f2 = phi(x2, u);
            } else {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - inv * (hi - lo);
                f1 = phi(x1, u);
            }
        }
        let v = 0.5 * (lo + hi);
        u[(i, j)] = v;
        v
    }

    /// Golden-section search over the step length along the displacement of
    /// one full coordinate sweep, keeping the result only if it lowers the
    /// action.
    fn extrapolate_sweep(&self, u: &mut ScalarField, u_prev: &ScalarField, eps: f64) {
        let at = |t: f64| -> f64 {
            let mut w = u_prev.clone();
            for i in 1..self.grid.nt {
                for j in 1..self.grid.nx {
                    w[(i, j)] += t * (u[(i, j)] - u_prev[(i, j)]);
                }
            }
            self.action(&w, eps).unwrap_or(f64::INFINITY)
        };
        let (mut lo, mut hi) = (1.0f64, 2.0f64);
        while at(hi) < at(0.5 * hi) && hi < 1e6 {
            hi *= 2.0;
        }
        let inv = (5f64.sqrt() - 1.0) / 2.0;
        let (mut x1, mut x2) = (hi - inv * (hi - lo), lo + inv * (hi - lo));
        let (mut f1, mut f2) = (at(x1), at(x2));
        for _ in 0..40 {
            if f1 > f2 {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + inv * (hi - lo);
                f2 = at(x2);
            } else {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - inv * (hi - lo);
                f1 = at(x1);
            }
        }
        let t = 0.5 * (lo + hi);
        let a1 = self.action(u, eps).unwrap_or(f64::INFINITY);
        if at(t) < a1 {
            for i in 1..self.grid.nt {
                for j in 1..self.grid.nx {
                    let v = u_prev[(i, j)] + t * (u[(i, j)] - u_prev[(i, j)]);
                    u[(i, j)] = v;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{example_potential, linear_potential, PotentialSpec};

    fn unit_problem(nt: usize, nx: usize) -> Problem {
        let dom = Domain::unit();
        let grid = Grid::new(nt, nx, &dom).unwrap();
        let ps = example_potential(&dom).auto_shifted(&dom, 256).unwrap();
        Problem::new(dom, grid, ps, 1.5, 1.25)
    }

    fn toy_problem(nt: usize, nx: usize) -> Problem {
        let dom = Domain::unit();
        let grid = Grid::new(nt, nx, &dom).unwrap();
        Problem::new(dom, grid, linear_potential(&dom), 1.5, 1.25)
            .with_kinetic(KineticModel::QuadraticToy)
    }

    #[test]
    fn default_schedule_shape() {
        let s = default_eps_schedule();
        assert_eq!(s[0], 0.2);
        assert_eq!(*s.last().unwrap(), 1e-3);
        for w in s.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn initial_guess_traces() {
        let p = unit_problem(8, 8);
        let eps = 0.1;
        let u = p.initial_guess(eps);
        for j in 0..=8 {
            let (_, x2) = p.grid.node(0, j, &p.dom);
            let prof = boundary_profile(x2, eps, p.beta, &p.dom).unwrap();
            assert!((u[(0, j)] + prof).abs() < 1e-14);
            assert!((u[(8, j)] - prof).abs() < 1e-14);
        }
        // Mid-time row of the cosine sweep is zero.
        for j in 0..=8 {
            assert!(u[(4, j)].abs() < 1e-14);
        }
    }

    #[test]
    fn initial_guess_gradient_bounds() {
        let p = unit_problem(32, 32);
        let eps = 0.05;
        let u = p.initial_guess(eps);
        let mut max2 = 0.0f64;
        for i in 0..32 {
            for j in 0..32 {
                max2 = max2.max(cell_gradient(&u, i, j)[1].abs());
            }
        }
        assert!(max2 <= 1.0 + eps.powf(1.25) + p.grid.hx, "max |d2| = {max2}");
    }

    #[test]
    fn action_of_linear_interpolant_is_finite() {
        let p = unit_problem(16, 16);
        let u = p.u_hat(0.05);
        let a = p.action(&u, 0.05).unwrap();
        assert!(a.is_finite());
    }

    #[test]
    fn action_of_guess_respects_explicit_bound() {
        let p = unit_problem(24, 24);
        let eps = 0.2;
        let u = p.initial_guess(eps);
        let a = p.action(&u, eps).unwrap();
        let u0 = boundary_profile(0.0, eps, p.beta, &p.dom).unwrap();
        let (l, t) = (p.dom.l, p.dom.t);
        let pi = std::f64::consts::PI;
        let kin_bound = 2.0 * l * pi * pi * u0 * u0 / (t * (1.0 + eps) * (1.0 + eps))
            + 2.0 * l * t * eps.powf(1.5)
                / ((1.0 + eps).powi(2) - (1.0 + eps.powf(1.25)).powi(2)).abs();
        let v_bound = crate::grid::quadrature(&u, &p.dom, |(_, x2c), _, ubar| {
            p.ps.v(x2c, ubar).abs()
        })
        .unwrap();
        assert!(a <= kin_bound + v_bound + 1e-9, "a = {a}, bound = {}", kin_bound + v_bound);
    }

    #[test]
    fn degenerate_action_infinite_for_steep_fields() {
        let p = unit_problem(8, 8);
        let mut u = p.u_hat(0.0);
        u[(4, 4)] += 1.0;
        let a = p.action(&u, 0.0).unwrap();
        assert!(a.is_infinite());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = unit_problem(6, 6);
        let eps = 0.2;
        let mut u = p.initial_guess(eps);
        // Perturb the interior so the field is generic.
        for i in 1..6 {
            for j in 1..6 {
                u[(i, j)] += 0.01 * ((i * 7 + j * 13) % 11) as f64 / 11.0;
            }
        }
        let g = p.gradient(&u, eps).unwrap();
        let h = 1e-6;
        for i in 1..6 {
            for j in 1..6 {
                let mut up = u.clone();
                up[(i, j)] += h;
                let mut dn = u.clone();
                dn[(i, j)] -= h;
                let fd =
                    (p.action(&up, eps).unwrap() - p.action(&dn, eps).unwrap()) / (2.0 * h);
                let gi = g[p.dof(i, j)];
                assert!((fd - gi).abs() < 1e-6 * (1.0 + gi.abs()), "({i},{j}): fd={fd}, g={gi}");
            }
        }
    }

    #[test]
    fn hessian_matches_gradient_differences_and_is_symmetric() {
        let p = unit_problem(5, 6);
        let eps = 0.2;
        let mut u = p.initial_guess(eps);
        for i in 1..5 {
            for j in 1..6 {
                u[(i, j)] += 0.02 * ((i * 3 + j * 5) % 7) as f64 / 7.0;
            }
        }
        let hm = p.hessian(&u, eps).unwrap();
        let dense = hm.to_dense();
        for r in 0..hm.n {
            for c in 0..hm.n {
                assert_eq!(dense[r][c], dense[c][r]);
            }
        }
        let h = 1e-6;
        for i in 1..5 {
            for j in 1..6 {
                let mut up = u.clone();
                up[(i, j)] += h;
                let mut dn = u.clone();
                dn[(i, j)] -= h;
                let gp = p.gradient(&up, eps).unwrap();
                let gn = p.gradient(&dn, eps).unwrap();
                let col = p.dof(i, j);
                for r in 0..hm.n {
                    let fd = (gp[r] - gn[r]) / (2.0 * h);
                    assert!(
                        (fd - dense[r][col]).abs() < 1e-4 * (1.0 + dense[r][col].abs()),
                        "entry ({r},{col}): fd={fd}, h={}",
                        dense[r][col]
                    );
                }
            }
        }
    }

    #[test]
    fn banded_cholesky_solves_spd_system() {
        // Diagonally dominant banded test matrix with known solution.
        let n = 20;
        let bw = 4;
        let mut m = BandMatrix::zeros(n, bw);
        for r in 0..n {
            m.add(r, r, 10.0 + r as f64);
            for d in 1..=bw.min(r) {
                m.add(r, r - d, 1.0 / (1.0 + d as f64));
            }
        }
        let x_true: Vec<f64> = (0..n).map(|k| (k as f64 * 0.37).sin()).collect();
        let mut b = vec![0.0; n];
        for r in 0..n {
            for c in 0..n {
                b[r] += m.get(r, c) * x_true[c];
            }
        }
        let l = m.cholesky().expect("SPD");
        let x = l.solve_cholesky(&b);
        for k in 0..n {
            assert!((x[k] - x_true[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut m = BandMatrix::zeros(3, 1);
        m.add(0, 0, 1.0);
        m.add(1, 1, -2.0);
        m.add(2, 2, 1.0);
        assert!(m.cholesky().is_none());
    }

    #[test]
    fn quadratic_toy_converges_in_one_step() {
        let p = toy_problem(8, 8);
        let eps = 0.1;
        let u0 = p.initial_guess(eps);
        let cfg = SolveConfig::default();
        let (u, rec) = p.newton_solve(&u0, eps, &cfg).unwrap();
        assert!(rec.iters <= 1, "iters = {}", rec.iters);
        assert!(rec.grad_norm <= cfg.newton_tol);
        assert!(p.action(&u, eps).unwrap() <= p.action(&u0, eps).unwrap());
    }

    #[test]
    fn newton_small_grid_converges_with_descent() {
        let p = unit_problem(16, 16);
        let eps = 0.1;
        let u0 = p.initial_guess(eps);
        let a0 = p.action(&u0, eps).unwrap();
        let cfg = SolveConfig::default();
        let (u, rec) = p.newton_solve(&u0, eps, &cfg).unwrap();
        assert!(rec.grad_norm <= cfg.newton_tol);
        assert!(rec.action <= a0);
        assert!(rec.action.is_finite());
        // Maximum principle at the discrete level.
        for i in 0..=16 {
            for j in 0..=16 {
                let (_, x2) = p.grid.node(i, j, &p.dom);
                let prof = boundary_profile(x2, eps, p.beta, &p.dom).unwrap();
                assert!(u[(i, j)].abs() <= prof + 1e-6, "node ({i},{j})");
            }
        }
    }

    #[test]
    fn continuation_short_schedule_gradient_bounds() {
        let p = unit_problem(16, 16);
        let cfg = SolveConfig {
            eps_schedule: vec![0.2, 0.1, 0.05],
            ..SolveConfig::default()
        };
        let (sols, report) = p.continuation_solve(&cfg).unwrap();
        assert_eq!(sols.len(), 3);
        assert_eq!(report.records.len(), 3);
        let (eps, u) = sols.last().unwrap();
        let mut min1 = f64::INFINITY;
        let mut max2 = 0.0f64;
        for i in 0..16 {
            for j in 0..16 {
                let g = cell_gradient(u, i, j);
                min1 = min1.min(g[0]);
                max2 = max2.max(g[1].abs());
            }
        }
        assert!(min1 >= -1e-6, "min d1 = {min1}");
        assert!(max2 <= 1.0 + eps + 1e-6, "max |d2| = {max2}");
        // Every stage converged and the action stays in a tight band; it is
        // not monotone in eps because F_eps grows near the degenerate set as
        // eps shrinks.
        for r in &report.records {
            assert!(r.grad_norm <= 1e-9);
            assert!(r.action.is_finite());
        }
        for w in report.records.windows(2) {
            assert!((w[1].action - w[0].action).abs() < 0.5);
        }
    }

    #[test]
    fn el_residual_affine_field_toy() {
        // Affine u has vanishing second derivatives, so the residual reduces
        // to the potential slope at the node.
        let dom = Domain::unit();
        let grid = Grid::new(6, 6, &dom).unwrap();
        let ps = PotentialSpec::custom("slope", |_, z| 2.0 * z, |_, _| 2.0, |_, _| 0.0, |_, _| 0.0);
        let p = Problem::new(dom, grid, ps, 1.5, 1.25).with_kinetic(KineticModel::QuadraticToy);
        let u = ScalarField::from_fn(grid, &dom, |x1, x2| 0.3 * x1 + 0.1 * x2);
        let res = p.el_residual(&u, 0.1).unwrap();
        for &r in &res {
            assert!((r - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn recovery_of_linear_interpolant_lands_in_perturbed_class() {
        let p = unit_problem(32, 32);
        let u = p.u_hat(0.0);
        for &eps in &[0.1, 0.03] {
            let r = p.recovery_sequence(&u, eps).unwrap();
            for j in 0..=32 {
                let (_, x2) = p.grid.node(0, j, &p.dom);
                let prof = boundary_profile(x2, eps, p.beta, &p.dom).unwrap();
                assert!((r[(0, j)] + prof).abs() < 1e-12);
                assert!((r[(32, j)] - prof).abs() < 1e-12);
            }
            for i in 0..=32 {
                assert_eq!(r[(i, 0)], 0.0);
                assert_eq!(r[(i, 32)], 0.0);
            }
            assert!(p.action(&r, eps).unwrap().is_finite());
        }
        // The recovered fields approach the input as eps shrinks.
        let d1 = p.recovery_sequence(&u, 0.1).unwrap().sup_distance(&u);
        let d2 = p.recovery_sequence(&u, 0.01).unwrap().sup_distance(&u);
        assert!(d2 < d1);
    }

    #[test]
    fn recovery_rejects_infinite_action_input() {
        let p = unit_problem(8, 8);
        let mut u = p.u_hat(0.0);
        u[(4, 4)] += 1.0;
        assert!(p.recovery_sequence(&u, 0.05).is_err());
    }

    #[test]
    fn projection_restores_sharp_traces_and_finite_action() {
        let p = unit_problem(16, 16);
        let eps = 0.05;
        let mut u = p.u_hat(eps);
        for i in 1..16 {
            for j in 1..16 {
                u[(i, j)] += 1e-3 * ((i + 2 * j) % 5) as f64;
            }
        }
        let v = p.project_to_x(&u, eps);
        for j in 0..=16 {
            let (_, x2) = p.grid.node(0, j, &p.dom);
            let prof = p.dom.l - x2.abs();
            assert!((v[(0, j)] + prof).abs() < 1e-14);
            assert!((v[(16, j)] - prof).abs() < 1e-14);
        }
        assert!(p.action(&v, 0.0).unwrap().is_finite());
        // Interior rows are strictly 1-Lipschitz in x2.
        for i in 1..16 {
            for j in 0..16 {
                let slope = (v[(i, j + 1)] - v[(i, j)]) / p.grid.hx;
                assert!(slope.abs() <= 1.0 - 1e-6 + 1e-12, "row {i} slope {slope}");
            }
        }
    }

    #[test]
    fn oracle_matches_direct_solve_on_toy() {
        let p = toy_problem(4, 4);
        let eps = 0.2;
        let oracle = p.oracle_minimize(eps, 7).unwrap();
        let (_, rec) = p.newton_solve(&p.initial_guess(eps), eps, &SolveConfig::default()).unwrap();
        assert!(
            (oracle.action - rec.action).abs() <= 1e-8 * (1.0 + rec.action.abs()),
            "oracle {} vs newton {}",
            oracle.action,
            rec.action
        );
        let amin = oracle.restart_actions.iter().cloned().fold(f64::INFINITY, f64::min);
        let amax = oracle.restart_actions.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(amax - amin <= 1e-7, "restart spread {}", amax - amin);
    }

    #[test]
    fn oracle_rejects_large_grids() {
        let p = toy_problem(8, 8);
        assert!(p.oracle_minimize(0.2, 1).is_err());
    }
}
