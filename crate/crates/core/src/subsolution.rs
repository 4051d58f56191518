//! Reconstruction of the relaxed two-phase subsolution tuple
//! (ρ, m, e₀, e₁, σ, p) from a stream function, verification of the
//! membership and admissibility constraints, and the two-phase-flow
//! dictionary with its action identity.

use crate::analysis::MixingZone;
use crate::error::{CoreError, Result};
use crate::grid::{cell_gradient, Domain, Grid, ScalarField};
use std::io::{BufRead, Write};

/// Cell fields of the reconstructed subsolution.  The full deviatoric
/// stress σ = (|m|²/(1−ρ²))(eₙ⊗eₙ − Id/n) is determined by sigma_nn and n.
#[derive(Debug, Clone)]
pub struct SubsolutionFields {
    pub grid: Grid,
    pub n: usize,
    pub e_tilde: f64,
    pub mask: Vec<bool>,
    pub rho: Vec<f64>,
    pub m: Vec<f64>,
    pub e0: Vec<f64>,
    pub e1: Vec<f64>,
    pub sigma_nn: Vec<f64>,
    pub p: Vec<f64>,
}

impl SubsolutionFields {
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.grid.nx + j
    }
}

/// Build the subsolution fields from u with ρ = ∂₂u, m = −∂₁u and the
/// closed-form energy densities on the mixing mask (constant ẽ > 0).
pub fn reconstruct(
    u: &ScalarField,
    dom: &Domain,
    n: usize,
    e_tilde: f64,
    mz: &MixingZone,
) -> Result<SubsolutionFields> {
    if e_tilde <= 0.0 {
        return Err(CoreError::InvalidInput(format!("e_tilde must be > 0, got {e_tilde}")));
    }
    if n < 2 {
        return Err(CoreError::InvalidInput(format!("ambient dimension n must be >= 2, got {n}")));
    }
    let g = u.grid;
    if mz.nt != g.nt || mz.nx != g.nx {
        return Err(CoreError::InvalidInput("mask shape does not match the field grid".into()));
    }
    let ncells = g.nt * g.nx;
    let mut sf = SubsolutionFields {
        grid: g,
        n,
        e_tilde,
        mask: mz.mask.clone(),
        rho: vec![0.0; ncells],
        m: vec![0.0; ncells],
        e0: vec![0.0; ncells],
        e1: vec![0.0; ncells],
        sigma_nn: vec![0.0; ncells],
        p: vec![0.0; ncells],
    };
    let nf = n as f64;
    let mut degenerate = Vec::new();
    for i in 0..g.nt {
        for j in 0..g.nx {
            let k = i * g.nx + j;
            let grad = cell_gradient(u, i, j);
            let rho = grad[1];
            if sf.mask[k] {
                let d = 1.0 - rho * rho;
                if d <= 1e-12 {
                    degenerate.push((i, j));
                    continue;
                }
                let m = -grad[0];
                let m2 = m * m;
                sf.rho[k] = rho;
                sf.m[k] = m;
                sf.e0[k] = m2 * (1.0 + rho * rho) / (nf * d * d) + e_tilde;
                sf.e1[k] = -2.0 * rho * m2 / (nf * d * d);
                sf.sigma_nn[k] = m2 / d - m2 / (nf * d);
            } else {
                sf.rho[k] = rho.clamp(-1.0, 1.0);
            }
        }
    }
    if !degenerate.is_empty() {
        return Err(CoreError::InvalidInput(format!(
            "mask cells with 1 - rho^2 <= 1e-12: {degenerate:?}"
        )));
    }
    // p = −σ_nn − gA·cumulative trapezoid of ρ in x₂ from −L.
    let ga = dom.g * dom.a;
    for i in 0..g.nt {
        let mut cum = 0.0;
        for j in 0..g.nx {
            let k = i * g.nx + j;
            let half = 0.5 * g.hx * sf.rho[k];
            cum += half;
            sf.p[k] = -sf.sigma_nn[k] - ga * cum;
            cum += half;
        }
    }
    Ok(sf)
}

/// Margins of the three strict relaxed-hull inequalities on the mask and
/// the resting/K-membership check off the mask (v ≡ 0 throughout).
#[derive(Debug, Clone)]
pub struct MembershipReport {
    /// min over mask cells of (e₀+e₁) − m²/(n(1+ρ)²).
    pub min_margin_plus: f64,
    /// min over mask cells of (e₀−e₁) − m²/(n(1−ρ)²).
    pub min_margin_minus: f64,
    /// min over mask cells of (e₀+ρe₁) − λ_max, λ_max = m²/(n(1−ρ²)).
    pub min_margin_lambda: f64,
    /// Off-mask cells all satisfy m = 0, |ρ| ≤ 1.
    pub off_mask_ok: bool,
    pub mask_cells: usize,
}

impl MembershipReport {
    pub fn all_strict(&self) -> bool {
        self.off_mask_ok
            && (self.mask_cells == 0
                || (self.min_margin_plus > 0.0
                    && self.min_margin_minus > 0.0
                    && self.min_margin_lambda > 0.0))
    }
}

pub fn verify_membership(sf: &SubsolutionFields) -> MembershipReport {
    let nf = sf.n as f64;
    let mut rep = MembershipReport {
        min_margin_plus: f64::INFINITY,
        min_margin_minus: f64::INFINITY,
        min_margin_lambda: f64::INFINITY,
        off_mask_ok: true,
        mask_cells: 0,
    };
    for k in 0..sf.mask.len() {
        let (rho, m) = (sf.rho[k], sf.m[k]);
        if sf.mask[k] {
            rep.mask_cells += 1;
            let m2 = m * m;
            let mp = (sf.e0[k] + sf.e1[k]) - m2 / (nf * (1.0 + rho) * (1.0 + rho));
            let mm = (sf.e0[k] - sf.e1[k]) - m2 / (nf * (1.0 - rho) * (1.0 - rho));
            let lam = m2 / (nf * (1.0 - rho * rho));
            let ml = (sf.e0[k] + rho * sf.e1[k]) - lam;
            rep.min_margin_plus = rep.min_margin_plus.min(mp);
            rep.min_margin_minus = rep.min_margin_minus.min(mm);
            rep.min_margin_lambda = rep.min_margin_lambda.min(ml);
        } else if m != 0.0 || rho.abs() > 1.0 {
            rep.off_mask_ok = false;
        }
    }
    rep
}

/// Max discrete weak-form continuity residual over a battery of 25 tensor
/// test functions (x₁/T)^a·(x₂/L)^b, a,b = 0..4, with both trace terms.
pub fn continuity_residual(sf: &SubsolutionFields, dom: &Domain) -> f64 {
    let g = sf.grid;
    let w = g.ht * g.hx;
    let mut worst = 0.0f64;
    for a in 0..5u32 {
        for b in 0..5u32 {
            let phi = |x1: f64, x2: f64| (x1 / dom.t).powi(a as i32) * (x2 / dom.l).powi(b as i32);
            let d1 = |x1: f64, x2: f64| {
                if a == 0 {
                    0.0
                } else {
                    a as f64 / dom.t * (x1 / dom.t).powi(a as i32 - 1) * (x2 / dom.l).powi(b as i32)
                }
            };
            let d2 = |x1: f64, x2: f64| {
                if b == 0 {
                    0.0
                } else {
                    b as f64 / dom.l * (x1 / dom.t).powi(a as i32) * (x2 / dom.l).powi(b as i32 - 1)
                }
            };
            let mut r = 0.0;
            for i in 0..g.nt {
                for j in 0..g.nx {
                    let k = i * g.nx + j;
                    let (x1c, x2c) = g.cell_center(i, j, dom);
                    r += w * (sf.rho[k] * d1(x1c, x2c) + sf.m[k] * d2(x1c, x2c));
                }
            }
            for j in 0..g.nx {
                let (_, x2c) = g.cell_center(0, j, dom);
                r += g.hx * x2c.signum() * (phi(0.0, x2c) + phi(dom.t, x2c));
            }
            worst = worst.max(r.abs());
        }
    }
    worst
}

/// Per-time-layer admissibility margins: gAL² minus the layer integral of
/// (n/2)(e₀+ρe₁) + ρgAx₂.
pub fn admissibility(sf: &SubsolutionFields, dom: &Domain) -> Vec<f64> {
    let g = sf.grid;
    let nf = sf.n as f64;
    let ga = dom.g * dom.a;
    let rhs = ga * dom.l * dom.l;
    (0..g.nt)
        .map(|i| {
            let mut lhs = 0.0;
            for j in 0..g.nx {
                let k = i * g.nx + j;
                let (_, x2c) = g.cell_center(i, j, dom);
                lhs += g.hx
                    * (0.5 * nf * (sf.e0[k] + sf.rho[k] * sf.e1[k]) + sf.rho[k] * ga * x2c);
            }
            rhs - lhs
        })
        .collect()
}

/// Two-phase generalized flow: phase fractions and velocities per cell.
#[derive(Debug, Clone)]
pub struct TwoPhaseFlow {
    pub grid: Grid,
    pub mu_plus: Vec<f64>,
    pub mu_minus: Vec<f64>,
    pub v_plus: Vec<f64>,
    pub v_minus: Vec<f64>,
}

const PHASE_TOL: f64 = 1e-10;

/// Dictionary (ρ, m) → (μ±, v±): μ± = (1±ρ)/(4L), v₊ = m/(1+ρ),
/// v₋ = −m/(1−ρ).
pub fn to_two_phase(grid: Grid, rho: &[f64], m: &[f64], dom: &Domain) -> Result<TwoPhaseFlow> {
    let ncells = grid.nt * grid.nx;
    assert_eq!(rho.len(), ncells);
    assert_eq!(m.len(), ncells);
    let mut tp = TwoPhaseFlow {
        grid,
        mu_plus: vec![0.0; ncells],
        mu_minus: vec![0.0; ncells],
        v_plus: vec![0.0; ncells],
        v_minus: vec![0.0; ncells],
    };
    for k in 0..ncells {
        if rho[k].abs() > 1.0 + 1e-12 {
            return Err(CoreError::InvalidInput(format!("|rho| > 1 at cell {k}: {}", rho[k])));
        }
        tp.mu_plus[k] = (1.0 + rho[k]) / (4.0 * dom.l);
        tp.mu_minus[k] = (1.0 - rho[k]) / (4.0 * dom.l);
        for (den, v, s) in [
            (1.0 + rho[k], &mut tp.v_plus[k], 1.0),
            (1.0 - rho[k], &mut tp.v_minus[k], -1.0),
        ] {
            if den.abs() <= PHASE_TOL {
                if m[k].abs() > PHASE_TOL {
                    return Err(CoreError::InvalidInput(format!(
                        "phase vacuum with nonzero momentum at cell {k}"
                    )));
                }
                *v = 0.0;
            } else {
                *v = s * m[k] / den;
            }
        }
    }
    Ok(tp)
}

/// Inverse dictionary: ρ = 4Lμ₊ − 1, m = 4Lμ₊v₊.
pub fn from_two_phase(tp: &TwoPhaseFlow, dom: &Domain) -> (Vec<f64>, Vec<f64>) {
    let rho: Vec<f64> = tp.mu_plus.iter().map(|&mu| 4.0 * dom.l * mu - 1.0).collect();
    let m: Vec<f64> = tp
        .mu_plus
        .iter()
        .zip(&tp.v_plus)
        .map(|(&mu, &v)| 4.0 * dom.l * mu * v)
        .collect();
    (rho, m)
}

/// Two-phase action ∫∫ ½(μ₊v₊² + μ₋v₋²) − gA(μ₊ − μ₋)x₂.
pub fn two_phase_action(tp: &TwoPhaseFlow, dom: &Domain) -> f64 {
    let g = tp.grid;
    let w = g.ht * g.hx;
    let ga = dom.g * dom.a;
    let mut total = 0.0;
    for i in 0..g.nt {
        for j in 0..g.nx {
            let k = i * g.nx + j;
            let (_, x2c) = g.cell_center(i, j, dom);
            total += w
                * (0.5 * (tp.mu_plus[k] * tp.v_plus[k] * tp.v_plus[k]
                    + tp.mu_minus[k] * tp.v_minus[k] * tp.v_minus[k])
                    - ga * (tp.mu_plus[k] - tp.mu_minus[k]) * x2c);
        }
    }
    total
}

/// Reference action ∫∫ m²/(2(1−ρ²)) − ρgAx₂ on the same quadrature
/// (kinetic term read as 0 where m = 0).
pub fn a0_action(grid: Grid, rho: &[f64], m: &[f64], dom: &Domain) -> f64 {
    let w = grid.ht * grid.hx;
    let ga = dom.g * dom.a;
    let mut total = 0.0;
    for i in 0..grid.nt {
        for j in 0..grid.nx {
            let k = i * grid.nx + j;
            let (_, x2c) = grid.cell_center(i, j, dom);
            let kin = if m[k] == 0.0 {
                0.0
            } else {
                m[k] * m[k] / (2.0 * (1.0 - rho[k] * rho[k]))
            };
            total += w * (kin - rho[k] * ga * x2c);
        }
    }
    total
}

/// Dump every component as a cell-field file plus a manifest.
pub fn write_subsolution(dir: &std::path::Path, sf: &SubsolutionFields, tau: f64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let comps: [(&str, &[f64]); 6] = [
        ("rho", &sf.rho),
        ("m", &sf.m),
        ("e0", &sf.e0),
        ("e1", &sf.e1),
        ("sigma_nn", &sf.sigma_nn),
        ("p", &sf.p),
    ];
    for (name, vals) in comps {
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{name}.txt")))?);
        write_cell_field(&mut f, sf.grid, vals)?;
    }
    let mut f =
        std::io::BufWriter::new(std::fs::File::create(dir.join("mask.txt"))?);
    writeln!(f, "{} {}", sf.grid.nt, sf.grid.nx)?;
    for i in 0..sf.grid.nt {
        let row: Vec<&str> = (0..sf.grid.nx)
            .map(|j| if sf.mask[i * sf.grid.nx + j] { "1" } else { "0" })
            .collect();
        writeln!(f, "{}", row.join(" "))?;
    }
    let mut man = std::io::BufWriter::new(std::fs::File::create(dir.join("manifest.txt"))?);
    writeln!(man, "components rho m e0 e1 sigma_nn p")?;
    writeln!(man, "n {}", sf.n)?;
    writeln!(man, "e_tilde {:.16e}", sf.e_tilde)?;
    writeln!(man, "mask_threshold {:.16e}", tau)?;
    Ok(())
}

/// Cell-field dump: header `Nt Nx`, then Nt rows of Nx values.
pub fn write_cell_field(w: &mut impl Write, grid: Grid, vals: &[f64]) -> Result<()> {
    writeln!(w, "{} {}", grid.nt, grid.nx)?;
    for i in 0..grid.nt {
        let row: Vec<String> =
            (0..grid.nx).map(|j| format!("{:.16e}", vals[i * grid.nx + j])).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

pub fn read_cell_field(r: &mut impl BufRead) -> Result<(usize, usize, Vec<f64>)> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| CoreError::Format("empty cell field".into()))??;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|s| s.parse().map_err(|e| CoreError::Format(format!("bad dimension {s}: {e}"))))
        .collect::<Result<_>>()?;
    if dims.len() != 2 {
        return Err(CoreError::Format("cell field header must be `Nt Nx`".into()));
    }
    let (nt, nx) = (dims[0], dims[1]);
    let mut vals = Vec::with_capacity(nt * nx);
    for line in lines.take(nt) {
        let line = line?;
        for s in line.split_whitespace() {
            vals.push(
                s.parse::<f64>()
                    .map_err(|e| CoreError::Format(format!("bad value {s}: {e}")))?,
            );
        }
    }
    if vals.len() != nt * nx {
        return Err(CoreError::Format(format!(
            "expected {} values, found {}",
            nt * nx,
            vals.len()
        )));
    }
    Ok((nt, nx, vals))
}
