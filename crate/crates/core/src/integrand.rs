//! The degenerate kinetic integrand F, its elliptic regularization F_ε with
//! closed-form derivatives, and two globally defined convex extensions of
//! F_ε beyond the safe gradient box: a fast variant driving the solver and a
//! mollified reference variant used as a validation oracle.

use crate::error::{CoreError, Result};

/// Ellipticity floor of the extensions (the constant λ₀ of the extension
/// construction).
pub const LAMBDA_0: f64 = 1.0 / 128.0;

/// Cap on the safe-box width in p₁ (ε^(−4θ) overflows for small ε).
pub const P1_CAP: f64 = 1e8;

/// Regularization parameters: ε ∈ (0,1), θ ∈ (1,2), β ∈ (1, 3−θ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizationParams {
    pub eps: f64,
    pub theta: f64,
    pub beta: f64,
}

impl RegularizationParams {
    pub fn new(eps: f64, theta: f64, beta: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(CoreError::InvalidInput(format!("eps must be in (0,1), got {eps}")));
        }
        if !(theta > 1.0 && theta < 2.0) {
            return Err(CoreError::InvalidInput(format!("theta must be in (1,2), got {theta}")));
        }
        if !(beta > 1.0 && beta < 3.0 - theta) {
            return Err(CoreError::InvalidInput(format!(
                "beta must be in (1, 3-theta) = (1, {}), got {beta}",
                3.0 - theta
            )));
        }
        Ok(RegularizationParams { eps, theta, beta })
    }

    /// ε^θ, the numerator regularization.
    pub fn eps_theta(&self) -> f64 {
        self.eps.powf(self.theta)
    }

    /// (1+ε)², the denominator pole location squared.
    pub fn pole2(&self) -> f64 {
        (1.0 + self.eps) * (1.0 + self.eps)
    }

    /// Analytic lower bound on the Hessian eigenvalues of F_ε near p = 0
    /// (the soft direction): min(1/(1+ε)², ε^θ/(1+ε)⁴).
    pub fn lambda_eps(&self) -> f64 {
        let d0 = self.pole2();
        (1.0 / d0).min(self.eps_theta() / (d0 * d0))
    }
}

/// Gradient box on which the regularized integrand is certified uniformly
/// elliptic: |p₁| ≤ p1_max, |p₂| ≤ p2_max.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafeBox {
    pub p1_max: f64,
    pub p2_max: f64,
}

impl SafeBox {
    pub fn new(rp: &RegularizationParams) -> Self {
        let e4t = rp.eps.powf(4.0 * rp.theta);
        SafeBox { p1_max: (1.0 / e4t).min(P1_CAP), p2_max: 1.0 + rp.eps - e4t }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0].abs() <= self.p1_max && p[1].abs() <= self.p2_max
    }
}

/// The degenerate integrand
/// F(p) = p₁²/(2(1−p₂²)) for |p₂| < 1, 0 if p₁ = 0, +∞ otherwise.
pub fn f_degenerate(p: [f64; 2]) -> f64 {
    if p[0] == 0.0 {
        0.0
    } else if p[1].abs() >= 1.0 {
        f64::INFINITY
    } else {
        p[0] * p[0] / (2.0 * (1.0 - p[1] * p[1]))
    }
}

fn check_strip(p: [f64; 2], rp: &RegularizationParams) -> Result<()> {
    if p[1].abs() >= 1.0 + rp.eps {
        return Err(CoreError::InvalidInput(format!(
            "|p2| = {} outside the strip |p2| < 1+eps = {}; use an extension",
            p[1].abs(),
            1.0 + rp.eps
        )));
    }
    Ok(())
}

/// Regularized integrand F_ε(p) = (p₁² + ε^θ) / (2((1+ε)² − p₂²)).
pub fn f_eps(p: [f64; 2], rp: &RegularizationParams) -> Result<f64> {
    check_strip(p, rp)?;
    Ok(f_eps_raw(p, rp))
}

#[inline]
fn f_eps_raw(p: [f64; 2], rp: &RegularizationParams) -> f64 {
    (p[0] * p[0] + rp.eps_theta()) / (2.0 * (rp.pole2() - p[1] * p[1]))
}

/// Closed-form gradient of F_ε.
pub fn grad_f_eps(p: [f64; 2], rp: &RegularizationParams) -> Result<[f64; 2]> {
    check_strip(p, rp)?;
    Ok(grad_f_eps_raw(p, rp))
}

#[inline]
fn grad_f_eps_raw(p: [f64; 2], rp: &RegularizationParams) -> [f64; 2] {
    let d = rp.pole2() - p[1] * p[1];
    [p[0] / d, (p[0] * p[0] + rp.eps_theta()) * p[1] / (d * d)]
}

/// Closed-form Hessian of F_ε (symmetric positive definite on the strip).
pub fn hess_f_eps(p: [f64; 2], rp: &RegularizationParams) -> Result<[[f64; 2]; 2]> {
    check_strip(p, rp)?;
    Ok(hess_f_eps_raw(p, rp))
}

#[inline]
fn hess_f_eps_raw(p: [f64; 2], rp: &RegularizationParams) -> [[f64; 2]; 2] {
    let pole2 = rp.pole2();
    let d = pole2 - p[1] * p[1];
    let num = p[0] * p[0] + rp.eps_theta();
    let h11 = 1.0 / d;
    let h12 = 2.0 * p[0] * p[1] / (d * d);
    let h22 = num * (pole2 + 3.0 * p[1] * p[1]) / (d * d * d);
    [[h11, h12], [h12, h22]]
}

/// Closed-form determinant of the Hessian of F_ε:
/// p₁²/D³ + ε^θ((1+ε)² + 3p₂²)/D⁴ with D = (1+ε)² − p₂².
pub fn det_hess_f_eps(p: [f64; 2], rp: &RegularizationParams) -> Result<f64> {
    check_strip(p, rp)?;
    let pole2 = rp.pole2();
    let d = pole2 - p[1] * p[1];
    Ok(p[0] * p[0] / (d * d * d) + rp.eps_theta() * (pole2 + 3.0 * p[1] * p[1]) / (d * d * d * d))
}

/// Shared geometry of the level-set extension: the level N, and the level
/// set {F_ε = N}, an ellipse p₁² + 2N p₂² = R² with R² = 2N(1+ε)² − ε^θ.
#[derive(Debug, Clone, Copy)]
pub struct LevelGeometry {
    pub n_level: f64,
    pub r2: f64,
}

impl LevelGeometry {
    /// N = max F_ε over the safe box, plus 1 (attained at the box corner).
    /// The pole gap at the corner is ε^(4θ)(2(1+ε) − ε^(4θ)); the factored
    /// form survives when ε^(4θ) is below the rounding unit of 1+ε.
    pub fn new(rp: &RegularizationParams) -> Self {
        let sb = SafeBox::new(rp);
        let margin = rp.eps.powf(4.0 * rp.theta);
        let gap = margin * (2.0 * (1.0 + rp.eps) - margin);
        let n_level = (sb.p1_max * sb.p1_max + rp.eps_theta()) / (2.0 * gap) + 1.0;
        LevelGeometry { n_level, r2: 2.0 * n_level * rp.pole2() - rp.eps_theta() }
    }

    /// True if p lies in the closed sublevel set {F_ε ≤ N}.
    pub fn contains(&self, p: [f64; 2], rp: &RegularizationParams) -> bool {
        p[1].abs() < 1.0 + rp.eps && f_eps_raw(p, rp) <= self.n_level
    }

    /// Point on the level ellipse at parameter (s, c) = (sinφ, cosφ).  The
    /// pair is kept explicit rather than recovered from an angle: cos of an
    /// angle near π/2 rounds to ~1e-16 instead of 0, and the gradient divides
    /// that error by ε^θ/2N.
    fn boundary_point(&self, sc: (f64, f64)) -> [f64; 2] {
        let r = self.r2.sqrt();
        [r * sc.1, r / (2.0 * self.n_level).sqrt() * sc.0]
    }

    /// Gradient of F_ε at the boundary point (s, c).  On the level set
    /// p̄₁² + ε^θ = 2N·D with D = (1+ε)² − p̄₂², so the raw formulas reduce to
    /// forms whose only denominator is p̄₁² + ε^θ ≥ ε^θ; the raw denominator D
    /// cancels to zero in floating point near the pole band.
    fn boundary_grad(&self, sc: (f64, f64), rp: &RegularizationParams) -> [f64; 2] {
        let pb = self.boundary_point(sc);
        let n = self.n_level;
        let denom = self.r2 * sc.1 * sc.1 + rp.eps_theta();
        [2.0 * n * pb[0] / denom, 4.0 * n * n * pb[1] / denom]
    }

    /// Hessian of F_ε at the boundary point (s, c), in the same
    /// cancellation-free form as `boundary_grad`.
    fn boundary_hess(&self, sc: (f64, f64), rp: &RegularizationParams) -> [[f64; 2]; 2] {
        let pb = self.boundary_point(sc);
        let n = self.n_level;
        let denom = self.r2 * sc.1 * sc.1 + rp.eps_theta();
        let d2 = denom * denom;
        let h11 = 2.0 * n / denom;
        let h12 = 8.0 * n * n * pb[0] * pb[1] / d2;
        let h22 = 8.0 * n * n * n * (rp.pole2() + 3.0 * pb[1] * pb[1]) / d2;
        [[h11, h12], [h12, h22]]
    }

    /// Supporting-plane value at p anchored at the boundary point with
    /// sin(phi) = s and cos(phi) carrying the sign of p₁.
    ///
    /// Written so every addend is accurate relative to its own magnitude:
    /// with denom = p̄₁² + ε^θ ≥ ε^θ the plane value is N + 2N·M/denom where
    /// M = R cosφ p₁ + 2N(1+ε)·inner + ε^θ and inner = s p₂ − (1+ε) corrected
    /// by the O(ε^θ/N) ellipse flattening; forming p₂ − p̄₂ directly loses all
    /// precision near the pole band because N is astronomically large.
    fn plane_value_s(&self, s: f64, p: [f64; 2], rp: &RegularizationParams) -> f64 {
        let n = self.n_level;
        let pole = 1.0 + rp.eps;
        let c2 = (1.0 - s) * (1.0 + s);
        let denom = self.r2 * c2 + rp.eps_theta();
        // Semi-axis ratio: p̄₂ = (1+ε)√(1−δ)·s with δ = ε^θ/(2N(1+ε)²).
        let delta = rp.eps_theta() / (2.0 * n * rp.pole2());
        let sq = (1.0 - delta).sqrt();
        let inner = s.mul_add(p[1], -pole) - s * p[1] * (delta / (1.0 + sq));
        let c = if p[0] >= 0.0 { c2.max(0.0).sqrt() } else { -c2.max(0.0).sqrt() };
        let m = self.r2.sqrt() * c * p[0] + 2.0 * n * pole * inner + rp.eps_theta();
        n + 2.0 * n * m / denom
    }

    /// Maximize the supporting-plane value over the ellipse: coarse scan in
    /// s = sinφ followed by golden-section refinement.  Returns (s*, value);
    /// the matching cosine carries the sign of p₁.
    fn maximize_plane(
        &self,
        p: [f64; 2],
        rp: &RegularizationParams,
        scan: usize,
        tol: f64,
    ) -> (f64, f64) {
        let mut best_k = 0usize;
        let mut best_v = f64::NEG_INFINITY;
        let node = |k: usize| -1.0 + 2.0 * k as f64 / scan as f64;
        for k in 0..=scan {
            let v = self.plane_value_s(node(k), p, rp);
            if v > best_v {
                best_v = v;
                best_k = k;
            }
        }
        // Golden-section maximization on the bracketing interval.
        let mut a = if best_k == 0 { -1.0 } else { node(best_k - 1) };
        let mut b = if best_k == scan { 1.0 } else { node(best_k + 1) };
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = b - inv_phi * (b - a);
        let mut x2 = a + inv_phi * (b - a);
        let mut f1 = self.plane_value_s(x1, p, rp);
        let mut f2 = self.plane_value_s(x2, p, rp);
        while b - a > tol {
            if f1 < f2 {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + inv_phi * (b - a);
                f2 = self.plane_value_s(x2, p, rp);
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - inv_phi * (b - a);
                f1 = self.plane_value_s(x1, p, rp);
            }
        }
        let mut s = 0.5 * (a + b);
        let mut v = self.plane_value_s(s, p, rp);
        for &se in &[a, b, -1.0, 1.0] {
            let ve = self.plane_value_s(se, p, rp);
            if ve > v {
                v = ve;
                s = se;
            }
        }
        (s, v)
    }

    /// Quadratic escort Q(p) = (p₁² + 2N p₂²)/R²; Q = 1 on the level ellipse,
    /// < 1 inside, > 1 outside.
    pub fn q(&self, p: [f64; 2]) -> f64 {
        (p[0] * p[0] + 2.0 * self.n_level * p[1] * p[1]) / self.r2
    }

    fn grad_q(&self, p: [f64; 2]) -> [f64; 2] {
        [2.0 * p[0] / self.r2, 4.0 * self.n_level * p[1] / self.r2]
    }
}

/// Fast convex extension of F_ε evaluated together with its gradient and
/// Hessian; this is the integrand the solver minimizes.
///
/// Inside the sublevel set {F_ε ≤ N} (which contains the safe box) the
/// triple is exactly that of F_ε.  Outside, the value is the supporting-plane
/// envelope of the level set plus the convex quadratic (N/4)(Q − 1).  On the
/// level set the two branches agree and the gradient jumps by a nonnegative
/// multiple of the outward normal, so the composite function is globally
/// convex; away from the level set it is smooth with Hessian eigenvalues
/// bounded below by min(λ_ε, λ₀).
#[derive(Debug, Clone, Copy)]
pub struct FHatFast {
    pub rp: RegularizationParams,
    pub geom: LevelGeometry,
}

impl FHatFast {
    pub fn new(rp: RegularizationParams) -> Self {
        FHatFast { rp, geom: LevelGeometry::new(&rp) }
    }

    /// Value, gradient, and Hessian of the extension at p.
    pub fn eval(&self, p: [f64; 2]) -> (f64, [f64; 2], [[f64; 2]; 2]) {
        if self.geom.contains(p, &self.rp) {
            return (f_eps_raw(p, &self.rp), grad_f_eps_raw(p, &self.rp), hess_f_eps_raw(p, &self.rp));
        }
        let (s, tilde) = self.geom.maximize_plane(p, &self.rp, 64, 1e-12);
        let c2 = ((1.0 - s) * (1.0 + s)).max(0.0);
        let c = if p[0] >= 0.0 { c2.sqrt() } else { -c2.sqrt() };
        let n = self.geom.n_level;
        let value = tilde + 0.25 * n * (self.geom.q(p) - 1.0);
        let gq = self.geom.grad_q(p);
        let gf = self.geom.boundary_grad((s, c), &self.rp);
        let grad = [gf[0] + 0.25 * n * gq[0], gf[1] + 0.25 * n * gq[1]];

        // Hessian of the envelope part by implicit differentiation of the
        // stationarity condition S(phi, p) = p̄'(phi)ᵀ D²F_ε(p̄)(p − p̄) = 0:
        // D²F̃ = w wᵀ / (−S_phi) with w = D²F_ε(p̄) p̄'(phi).
        let h = self.geom.boundary_hess((s, c), &self.rp);
        let r = self.geom.r2.sqrt();
        let a2 = r / (2.0 * n).sqrt();
        let tangent = [-r * s, a2 * c];
        let w = [
            h[0][0] * tangent[0] + h[0][1] * tangent[1],
            h[1][0] * tangent[0] + h[1][1] * tangent[1],
        ];
        let phi = s.atan2(c);
        let s_at = |ph: f64| {
            let sc = (ph.sin(), ph.cos());
            let q = self.geom.boundary_point(sc);
            let hq = self.geom.boundary_hess(sc, &self.rp);
            let tq = [-r * ph.sin(), a2 * ph.cos()];
            let wq = [
                hq[0][0] * tq[0] + hq[0][1] * tq[1],
                hq[1][0] * tq[0] + hq[1][1] * tq[1],
            ];
            wq[0] * (p[0] - q[0]) + wq[1] * (p[1] - q[1])
        };
        let dphi = 1e-5;
        let s_phi = (s_at(phi + dphi) - s_at(phi - dphi)) / (2.0 * dphi);
        let mut hess = [[0.0, 0.0], [0.0, 0.0]];
        if s_phi < -1e-300 {
            let rs = (-1.0 / s_phi).sqrt();
            let ws = [w[0] * rs, w[1] * rs];
            for (i, row) in hess.iter_mut().enumerate() {
                for (j, e) in row.iter_mut().enumerate() {
                    *e = ws[i] * ws[j];
                }
            }
        }
        // Quadratic escort contribution: (N/4) D²Q = diag(N/2, N²) / R².
        hess[0][0] += 0.5 * n / self.geom.r2;
        hess[1][1] += n * n / self.geom.r2;
        (value, grad, hess)
    }
}

/// Parameters of the reference (mollified) extension.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceExtensionParams {
    /// Level value N = max F_ε over the safe box, plus 1.
    pub n_level: f64,
    /// Mollification radius η.
    pub moll_radius: f64,
    /// Half-width δ of the blending collar around the level set.
    pub blend_radius: f64,
    /// Number of convolution samples per axis.
    pub quad_points: usize,
}

impl ReferenceExtensionParams {
    /// Defaults: δ = (distance from the safe box to the level set)/2,
    /// estimated from the value gap 1 at the box corner; η = δ/4; 9×9
    /// convolution stencil.
    pub fn defaults(rp: &RegularizationParams) -> Self {
        let geom = LevelGeometry::new(rp);
        let sb = SafeBox::new(rp);
        let corner = [sb.p1_max, sb.p2_max];
        let g = grad_f_eps_raw(corner, rp);
        let gnorm = (g[0] * g[0] + g[1] * g[1]).sqrt().max(1.0);
        let delta = 0.5 / gnorm;
        ReferenceExtensionParams {
            n_level: geom.n_level,
            moll_radius: delta / 4.0,
            blend_radius: delta,
            quad_points: 9,
        }
    }
}

/// Smallest convex extension of F_ε beyond the sublevel set {F_ε ≤ N}:
/// F_ε itself inside, the supporting-plane envelope over the level ellipse
/// outside (256-point angular scan plus golden-section refinement).
pub fn f_tilde_reference(
    p: [f64; 2],
    rp: &RegularizationParams,
    rep: &ReferenceExtensionParams,
) -> f64 {
    let geom = LevelGeometry { n_level: rep.n_level, r2: 2.0 * rep.n_level * rp.pole2() - rp.eps_theta() };
    if geom.contains(p, rp) {
        f_eps_raw(p, rp)
    } else {
        geom.maximize_plane(p, rp, 256, 1e-10).1
    }
}

/// Bump-kernel mollification of `f_tilde_reference` on a tensor stencil of
/// quad_points² samples; weights normalized discretely so constants are
/// reproduced exactly.
fn f_tilde_mollified(
    p: [f64; 2],
    rp: &RegularizationParams,
    rep: &ReferenceExtensionParams,
) -> f64 {
    let m = rep.quad_points;
    let eta = rep.moll_radius;
    let mut num = 0.0;
    let mut den = 0.0;
    for a in 0..m {
        // Stencil nodes strictly inside (-1,1) where the bump kernel is positive.
        let sa = -1.0 + 2.0 * (a as f64 + 0.5) / m as f64;
        let ka = (-1.0 / (1.0 - sa * sa)).exp();
        for b in 0..m {
            let sb = -1.0 + 2.0 * (b as f64 + 0.5) / m as f64;
            let kb = (-1.0 / (1.0 - sb * sb)).exp();
            let w = ka * kb;
            num += w * f_tilde_reference([p[0] - eta * sa, p[1] - eta * sb], rp, rep);
            den += w;
        }
    }
    num / den
}

/// Reference extension: the mollified convex envelope plus the quadratic
/// escort, blended with F_ε by a smooth maximum in a collar around the level
/// set.  Used as a validation oracle at sampled points only.
pub fn f_hat_reference(
    p: [f64; 2],
    rp: &RegularizationParams,
    rep: &ReferenceExtensionParams,
) -> f64 {
    let geom = LevelGeometry { n_level: rep.n_level, r2: 2.0 * rep.n_level * rp.pole2() - rp.eps_theta() };
    let n = rep.n_level;
    let check = |q: [f64; 2]| f_tilde_mollified(q, rp, rep) + 0.25 * n * (geom.q(q) - 1.0);
    if p[1].abs() >= 1.0 + rp.eps {
        return check(p);
    }
    let fe = f_eps_raw(p, rp);
    // Signed distance estimate to the level set from the value gap.
    let g = grad_f_eps_raw(p, rp);
    let gnorm = (g[0] * g[0] + g[1] * g[1]).sqrt().max(1e-30);
    let dist = (n - fe) / gnorm;
    if dist > rep.blend_radius {
        fe
    } else if dist < -rep.blend_radius {
        check(p)
    } else {
        // Smooth maximum with width an eighth of the collar's value gap.
        let gq = geom.grad_q(p);
        let gqn = (gq[0] * gq[0] + gq[1] * gq[1]).sqrt();
        let tau = 0.25 * n * gqn * rep.blend_radius / 8.0;
        let b = check(p);
        0.5 * (fe + b + ((fe - b) * (fe - b) + tau * tau).sqrt())
    }
}
