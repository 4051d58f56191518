//! Diagnostics on solved fields: time-slice energies and the first
//! integral, the dissipation balance, mixing-zone geometry with hole
//! counting, boundary-trace attainment rates, the oscillation modulus,
//! and the long-time kinetic-jump bound across T.

use crate::error::{CoreError, Result};
use crate::grid::{cell_average, cell_gradient, Domain, ScalarField};
use crate::integrand::f_degenerate;
use crate::solver::{KineticModel, Problem};
use std::io::{BufRead, Write};

/// Per-row slice quantities; row i uses the adjoining cell layer
/// min(i, Nt−1), so the trace has Nt+1 rows and the last two rows share a
/// layer.
#[derive(Debug, Clone)]
pub struct EnergyRow {
    pub row: usize,
    /// Center time of the layer the row reads from.
    pub x1: f64,
    /// Kinetic energy via the Legendre combination ∫ ∂_{p₁}F̂·∂₁u − F̂ dx₂,
    /// which reduces to ∫ m²/(2(1−ρ²)) dx₂ at ε = 0.
    pub e_kin: f64,
    pub e_pot: f64,
    pub e_f: f64,
    /// First integral ∂_{p₁}F̂·∂₁u − F̂ + V(x₂, ū).
    pub h: f64,
    /// Dissipation rate −∫ ∂_z f(x₂, ū) ∂₁u dx₂.
    pub d: f64,
}

#[derive(Debug, Clone)]
pub struct EnergyTrace {
    pub rows: Vec<EnergyRow>,
}

/// Slice energies, first integral, and dissipation rate per time row.
pub fn energy_trace(prob: &Problem, u: &ScalarField, eps: f64) -> Result<EnergyTrace> {
    let g = prob.grid;
    let ev = if eps > 0.0 { Some(prob.evaluator(eps)?) } else { None };
    let mut rows = Vec::with_capacity(g.nt + 1);
    for row in 0..=g.nt {
        let layer = row.min(g.nt - 1);
        let (mut e_kin, mut e_pot, mut e_f, mut h, mut d) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for j in 0..g.nx {
            let p = cell_gradient(u, layer, j);
            let ubar = cell_average(u, layer, j);
            let (_, x2c) = g.cell_center(layer, j, &prob.dom);
            let (kin, dp1_p1) = match &ev {
                Some(e) => {
                    let (f, gp, _) = e.eval(p);
                    (f, gp[0] * p[0])
                }
                None => match prob.kinetic {
                    // The degenerate integrand is 2-homogeneous in p₁, so
                    // ∂_{p₁}F·p₁ = 2F.
                    KineticModel::Extension => {
                        let f = f_degenerate(p);
                        (f, 2.0 * f)
                    }
                    KineticModel::QuadraticToy => {
                        (0.5 * (p[0] * p[0] + p[1] * p[1]), p[0] * p[0])
                    }
                },
            };
            let w = g.hx;
            e_kin += w * (dp1_p1 - kin);
            e_pot += w * (-prob.dom.g * prob.dom.a * ubar);
            e_f += w * prob.ps.f(x2c, ubar);
            h += w * (dp1_p1 - kin + prob.ps.v(x2c, ubar));
            d -= w * prob.ps.dzf(x2c, ubar) * p[0];
        }
        let x1 = (layer as f64 + 0.5) * g.ht;
        rows.push(EnergyRow { row, x1, e_kin, e_pot, e_f, h, d });
    }
    Ok(EnergyTrace { rows })
}

/// Rows at least an eighth of the time span away from both caps; the cap
/// layers carry the one-sided discretization error of the time boundary.
fn cap_margin(n: usize) -> usize {
    (n.div_ceil(8)).max(1)
}

/// Max deviation of the first integral from its mean over interior rows.
pub fn first_integral_deviation(trace: &EnergyTrace) -> f64 {
    let n = trace.rows.len();
    if n < 3 {
        return 0.0;
    }
    let m = cap_margin(n).min((n - 1) / 2);
    let interior = &trace.rows[m..n - m];
    if interior.is_empty() {
        return 0.0;
    }
    let mean = interior.iter().map(|r| r.h).sum::<f64>() / interior.len() as f64;
    interior.iter().map(|r| (r.h - mean).abs()).fold(0.0, f64::max)
}

/// Comparison of the discrete time derivative of E_kin + E_pot against the
/// dissipation rate.
#[derive(Debug, Clone)]
pub struct DissipationReport {
    /// Largest positive excursion of d/dx₁(E_kin + E_pot).
    pub max_positive_derivative: f64,
    /// Largest |d/dx₁(E_kin + E_pot) − D| across layer pairs.
    pub max_mismatch: f64,
    /// Scale of the compared rates (max |D| and |dE/dx₁|).
    pub row_scale: f64,
}

pub fn dissipation_check(trace: &EnergyTrace) -> DissipationReport {
    let mut rep = DissipationReport {
        max_positive_derivative: f64::NEG_INFINITY,
        max_mismatch: 0.0,
        row_scale: 0.0,
    };
    // Rows 0..Nt−1 are the distinct cell layers; skip the cap-adjacent
    // layers, which carry the one-sided time-boundary discretization error.
    // The derivative is differenced over a window of rows rather than a
    // single pair so that per-row quadrature noise is not amplified by 1/ht.
    let n = trace.rows.len();
    let m = (3 * n / 8).max(1).min((n - 1) / 2);
    let layers: Vec<&EnergyRow> = trace.rows[m..n - m].iter().collect();
    let k = (layers.len() / 2).max(1);
    for w in layers.windows(k + 1) {
        let (a, b) = (w[0], w[k]);
        let dt = b.x1 - a.x1;
        let de = (b.e_kin + b.e_pot - a.e_kin - a.e_pot) / dt;
        let d_avg = w.iter().map(|r| r.d).sum::<f64>() / w.len() as f64;
        rep.max_positive_derivative = rep.max_positive_derivative.max(de);
        rep.max_mismatch = rep.max_mismatch.max((de - d_avg).abs());
        rep.row_scale = rep.row_scale.max(de.abs()).max(d_avg.abs());
    }
    rep
}

/// Write the trace as CSV (17 significant digits).
pub fn write_energy_csv(w: &mut impl Write, trace: &EnergyTrace) -> Result<()> {
    writeln!(w, "row,x1,E_kin,E_pot,E_f,H,D")?;
    for r in &trace.rows {
        writeln!(
            w,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.row, r.x1, r.e_kin, r.e_pot, r.e_f, r.h, r.d
        )?;
    }
    Ok(())
}

pub fn read_energy_csv(r: &mut impl BufRead) -> Result<EnergyTrace> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| CoreError::Format("empty energy CSV".into()))??;
    if header.trim() != "row,x1,E_kin,E_pot,E_f,H,D" {
        return Err(CoreError::Format(format!("unexpected CSV header: {header}")));
    }
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 7 {
            return Err(CoreError::Format(format!("bad CSV row: {line}")));
        }
        let num = |s: &str| -> Result<f64> {
            s.trim().parse().map_err(|e| CoreError::Format(format!("bad number {s}: {e}")))
        };
        rows.push(EnergyRow {
            row: parts[0]
                .trim()
                .parse()
                .map_err(|e| CoreError::Format(format!("bad row index: {e}")))?,
            x1: num(parts[1])?,
            e_kin: num(parts[2])?,
            e_pot: num(parts[3])?,
            e_f: num(parts[4])?,
            h: num(parts[5])?,
            d: num(parts[6])?,
        });
    }
    Ok(EnergyTrace { rows })
}

/// A 4-connected component of the mixing mask with its hole count.
#[derive(Debug, Clone)]
pub struct MixingComponent {
    pub cells: Vec<(usize, usize)>,
    pub holes: usize,
}

/// Thresholded mixing region: cells with ∂₁u > τ and |∂₂u| < 1 − τ.
#[derive(Debug, Clone)]
pub struct MixingZone {
    pub nt: usize,
    pub nx: usize,
    pub mask: Vec<bool>,
    pub components: Vec<MixingComponent>,
}

impl MixingZone {
    pub fn cell(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.nx + j]
    }

    /// Component/hole analysis of an explicit mask (row-major Nt×Nx cells).
    pub fn from_mask(mask: Vec<bool>, nt: usize, nx: usize) -> Self {
        assert_eq!(mask.len(), nt * nx);
        let at = |i: usize, j: usize| mask[i * nx + j];
        let mut labeled = vec![false; nt * nx];
        let mut components = Vec::new();
        for i0 in 0..nt {
            for j0 in 0..nx {
                if !at(i0, j0) || labeled[i0 * nx + j0] {
                    continue;
                }
                // 4-connected flood fill of the component.
                let mut cells = Vec::new();
                let mut stack = vec![(i0, j0)];
                labeled[i0 * nx + j0] = true;
                while let Some((i, j)) = stack.pop() {
                    cells.push((i, j));
                    let mut push = |i: usize, j: usize| {
                        if at(i, j) && !labeled[i * nx + j] {
                            labeled[i * nx + j] = true;
                            stack.push((i, j));
                        }
                    };
                    if i > 0 {
                        push(i - 1, j);
                    }
                    if i + 1 < nt {
                        push(i + 1, j);
                    }
                    if j > 0 {
                        push(i, j - 1);
                    }
                    if j + 1 < nx {
                        push(i, j + 1);
                    }
                }
                let holes = count_holes(&cells, nt, nx);
                components.push(MixingComponent { cells, holes });
            }
        }
        MixingZone { nt, nx, mask, components }
    }
}

/// Number of 8-connected complement regions enclosed by the component:
/// flood the complement of the component from the border of its (padded)
/// bounding box; unreached complement regions are holes.
fn count_holes(cells: &[(usize, usize)], nt: usize, nx: usize) -> usize {
    let imin = cells.iter().map(|c| c.0).min().unwrap().saturating_sub(1);
    let jmin = cells.iter().map(|c| c.1).min().unwrap().saturating_sub(1);
    let imax = (cells.iter().map(|c| c.0).max().unwrap() + 1).min(nt - 1);
    let jmax = (cells.iter().map(|c| c.1).max().unwrap() + 1).min(nx - 1);
    let (h, w) = (imax - imin + 1, jmax - jmin + 1);
    let mut in_comp = vec![false; h * w];
    for &(i, j) in cells {
        in_comp[(i - imin) * w + (j - jmin)] = true;
    }
    // 0 = unvisited complement, 1 = border-connected complement.
    let mut outside = vec![false; h * w];
    let mut stack = Vec::new();
    for bi in 0..h {
        for bj in 0..w {
            if (bi == 0 || bi == h - 1 || bj == 0 || bj == w - 1) && !in_comp[bi * w + bj] {
                if !outside[bi * w + bj] {
                    outside[bi * w + bj] = true;
                    stack.push((bi, bj));
                }
            }
        }
    }
    while let Some((bi, bj)) = stack.pop() {
        for di in -1i64..=1 {
            for dj in -1i64..=1 {
                let (ni, nj) = (bi as i64 + di, bj as i64 + dj);
                if ni < 0 || nj < 0 || ni >= h as i64 || nj >= w as i64 {
                    continue;
                }
                let (ni, nj) = (ni as usize, nj as usize);
                if !in_comp[ni * w + nj] && !outside[ni * w + nj] {
                    outside[ni * w + nj] = true;
                    stack.push((ni, nj));
                }
            }
        }
    }
    // Count 8-connected unreached complement regions.
    let mut holes = 0;
    let mut seen = vec![false; h * w];
    for bi in 0..h {
        for bj in 0..w {
            let k = bi * w + bj;
            if in_comp[k] || outside[k] || seen[k] {
                continue;
            }
            holes += 1;
            seen[k] = true;
            let mut stack = vec![(bi, bj)];
            while let Some((ci, cj)) = stack.pop() {
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        let (ni, nj) = (ci as i64 + di, cj as i64 + dj);
                        if ni < 0 || nj < 0 || ni >= h as i64 || nj >= w as i64 {
                            continue;
                        }
                        let (ni, nj) = (ni as usize, nj as usize);
                        let nk = ni * w + nj;
                        if !in_comp[nk] && !outside[nk] && !seen[nk] {
                            seen[nk] = true;
                            stack.push((ni, nj));
                        }
                    }
                }
            }
        }
    }
    holes
}

/// Build the thresholded mixing zone of u.
pub fn mixing_zone(u: &ScalarField, tau: f64) -> Result<MixingZone> {
    if tau <= 0.0 {
        return Err(CoreError::InvalidInput(format!("tau must be > 0, got {tau}")));
    }
    let g = u.grid;
    let mut mask = vec![false; g.nt * g.nx];
    for i in 0..g.nt {
        for j in 0..g.nx {
            let p = cell_gradient(u, i, j);
            mask[i * g.nx + j] = p[0] > tau && p[1].abs() < 1.0 - tau;
        }
    }
    Ok(MixingZone::from_mask(mask, g.nt, g.nx))
}

/// Default mixing threshold for a given Newton tolerance.
pub fn default_mixing_tau(newton_tol: f64) -> f64 {
    10.0 * newton_tol.sqrt()
}

/// Trace-attainment rates at dyadic distances from the boundary.
#[derive(Debug, Clone)]
pub struct TraceAttainment {
    /// (a, A1(a), C1(a)): L¹ distance of ∂₂u from sign(x₂) and L¹ norm of
    /// ∂₁u at the time slice nearest a, for dyadic a.
    pub a_rows: Vec<(f64, f64, f64)>,
    /// (b, B1(b), 2b + 2hx): scaled L¹ norm of ∂₁u on the side strip of
    /// width b and its hard bound.
    pub b_rows: Vec<(f64, f64, f64)>,
    pub a1_monotone: bool,
    pub c1_monotone: bool,
    pub b1_bounded: bool,
}

pub fn trace_attainment(u: &ScalarField, dom: &Domain) -> TraceAttainment {
    let g = u.grid;
    let slack = 1e-4;

    let slice_norms = |a: f64| -> (f64, f64) {
        let layer = ((a / g.ht - 0.5).round().max(0.0) as usize).min(g.nt - 1);
        let mut a1 = 0.0;
        let mut c1 = 0.0;
        for j in 0..g.nx {
            let p = cell_gradient(u, layer, j);
            let (_, x2c) = g.cell_center(layer, j, dom);
            a1 += g.hx * (p[1] - x2c.signum()).abs();
            c1 += g.hx * p[0].abs();
        }
        (a1, c1)
    };

    let mut a_rows = Vec::new();
    let mut a = dom.t / 2.0;
    while a >= g.ht {
        let (a1, c1) = slice_norms(a);
        a_rows.push((a, a1, c1));
        a /= 2.0;
    }
    let a1_monotone = a_rows.windows(2).all(|w| w[1].1 <= w[0].1 + slack);
    let c1_monotone = a_rows.windows(2).all(|w| w[1].2 <= w[0].2 + slack);

    let mut b_rows = Vec::new();
    let mut b = dom.l / 2.0;
    while b >= g.hx {
        // Both side strips, each rescaled by the strip width.
        let mut total = 0.0;
        for i in 0..g.nt {
            for j in 0..g.nx {
                let (_, x2c) = g.cell_center(i, j, dom);
                if x2c < -dom.l + b || x2c > dom.l - b {
                    total += g.ht * g.hx * cell_gradient(u, i, j)[0].abs();
                }
            }
        }
        // The bound 2b covers one strip; the sum over both stays within 2·(2b).
        let b1 = total / (2.0 * b);
        b_rows.push((b, b1, 2.0 * b + 2.0 * g.hx));
        b /= 2.0;
    }
    let b1_bounded = b_rows.iter().all(|r| r.1 <= r.2);

    TraceAttainment { a_rows, b_rows, a1_monotone, c1_monotone, b1_bounded }
}

/// One oscillation sample: center, radius, and osc(u; B_r)·√|log r| / ‖∇u‖₂.
#[derive(Debug, Clone)]
pub struct OscEntry {
    pub center: (f64, f64),
    pub r: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct OscillationTable {
    pub entries: Vec<OscEntry>,
    /// Samples skipped because B_√r does not fit inside the domain.
    pub skipped: usize,
    pub max_ratio: f64,
}

/// Measured oscillation modulus against the logarithmic modulus bound.
pub fn oscillation_modulus(
    u: &ScalarField,
    dom: &Domain,
    centers: &[(f64, f64)],
    radii: &[f64],
) -> OscillationTable {
    let g = u.grid;
    let mut grad_l2 = 0.0;
    for i in 0..g.nt {
        for j in 0..g.nx {
            let p = cell_gradient(u, i, j);
            grad_l2 += g.ht * g.hx * (p[0] * p[0] + p[1] * p[1]);
        }
    }
    let grad_l2 = grad_l2.sqrt();
    let mut table = OscillationTable { entries: Vec::new(), skipped: 0, max_ratio: 0.0 };
    for &(c1, c2) in centers {
        for &r in radii {
            let rs = r.sqrt();
            let fits = c1 - rs > 0.0
                && c1 + rs < dom.t
                && c2 - rs > -dom.l
                && c2 + rs < dom.l;
            if !fits || r >= 1.0 {
                table.skipped += 1;
                continue;
            }
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            let mut any = false;
            for i in 0..=g.nt {
                for j in 0..=g.nx {
                    let (x1, x2) = g.node(i, j, dom);
                    if (x1 - c1).powi(2) + (x2 - c2).powi(2) <= r * r {
                        lo = lo.min(u[(i, j)]);
                        hi = hi.max(u[(i, j)]);
                        any = true;
                    }
                }
            }
            if !any {
                table.skipped += 1;
                continue;
            }
            let denom = grad_l2 / r.ln().abs().sqrt();
            let ratio = if denom > 0.0 { (hi - lo) / denom } else { 0.0 };
            table.max_ratio = table.max_ratio.max(ratio);
            table.entries.push(OscEntry { center: (c1, c2), r, ratio });
        }
    }
    table
}

/// Long-time kinetic-jump table: per T, the first/last-layer kinetic
/// energies against the bound A₁(u₁)/T.
#[derive(Debug, Clone)]
pub struct KineticJumpRow {
    pub t: f64,
    pub c_start: f64,
    pub c_end: f64,
    pub bound: f64,
    pub within_bound: bool,
    pub ends_agree: bool,
}

/// `runs` pairs each T with its energy trace; `a1` is the action of the
/// T = 1 run.  The T list must include T = 1.
pub fn kinetic_jump_vs_t(
    runs: &[(f64, EnergyTrace)],
    a1: f64,
    tol: f64,
) -> Result<Vec<KineticJumpRow>> {
    if !runs.iter().any(|(t, _)| (*t - 1.0).abs() < 1e-12) {
        return Err(CoreError::InvalidInput("T sweep must include T = 1".into()));
    }
    Ok(runs
        .iter()
        .map(|(t, trace)| {
            let c_start = trace.rows.first().map_or(0.0, |r| r.e_kin);
            let c_end = trace.rows.last().map_or(0.0, |r| r.e_kin);
            let bound = a1 / t;
            KineticJumpRow {
                t: *t,
                c_start,
                c_end,
                bound,
                within_bound: c_start <= bound + tol,
                ends_agree: (c_start - c_end).abs() <= tol,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{boundary_profile, Grid};
    use crate::potential::{example_potential, PotentialSpec};
    use crate::solver::KineticModel;

    fn unit_problem(nt: usize, nx: usize) -> Problem {
        let dom = Domain::unit();
        let grid = Grid::new(nt, nx, &dom).unwrap();
        let ps = example_potential(&dom).auto_shifted(&dom, 256).unwrap();
        Problem::new(dom, grid, ps, 1.5, 1.25)
    }

    fn resting_field(prob: &Problem) -> ScalarField {
        let dom = prob.dom;
        let beta = prob.beta;
        ScalarField::from_fn(prob.grid, &prob.dom, move |_, x2| {
            -boundary_profile(x2, 0.0, beta, &dom).unwrap()
        })
    }

    #[test]
    fn trace_row_count_and_initial_potential_energy() {
        let p = unit_problem(64, 64);
        let u = p.u_hat(0.0);
        let tr = energy_trace(&p, &u, 0.0).unwrap();
        assert_eq!(tr.rows.len(), 65);
        // E_pot at the first layer is gAL^2 up to the layer-center offset.
        assert!((tr.rows[0].e_pot - 1.0).abs() < 2.0 * p.grid.ht, "{}", tr.rows[0].e_pot);
        assert!((tr.rows[64].e_pot + 1.0).abs() < 2.0 * p.grid.ht);
    }

    #[test]
    fn example_forcing_energy_gap_on_exact_traces() {
        let p = unit_problem(128, 128);
        let u = p.u_hat(0.0);
        let tr = energy_trace(&p, &u, 0.0).unwrap();
        let gap = tr.rows.last().unwrap().e_f - tr.rows[0].e_f;
        assert!((gap - 2.0).abs() < 0.1, "E_f gap = {gap}");
    }

    #[test]
    fn resting_rows_have_zero_kinetic_energy_and_dissipation() {
        let p = unit_problem(16, 16);
        let u = resting_field(&p);
        let tr = energy_trace(&p, &u, 0.0).unwrap();
        for r in &tr.rows {
            assert_eq!(r.e_kin, 0.0);
            assert_eq!(r.d, 0.0);
        }
        let rep = dissipation_check(&tr);
        assert!(rep.max_positive_derivative.abs() < 1e-12);
        assert!(rep.max_mismatch < 1e-12);
    }

    #[test]
    fn first_integral_exact_for_affine_toy() {
        let dom = Domain::unit();
        let grid = Grid::new(12, 12, &dom).unwrap();
        let p = Problem::new(dom, grid, PotentialSpec::zero(), 1.5, 1.25)
            .with_kinetic(KineticModel::QuadraticToy);
        let u = ScalarField::from_fn(grid, &dom, |x1, _| 0.4 * x1);
        let tr = energy_trace(&p, &u, 0.1).unwrap();
        assert!(first_integral_deviation(&tr) < 1e-14);
    }

    #[test]
    fn csv_round_trip() {
        let p = unit_problem(8, 8);
        let tr = energy_trace(&p, &p.u_hat(0.05), 0.05).unwrap();
        let mut buf = Vec::new();
        write_energy_csv(&mut buf, &tr).unwrap();
        let back = read_energy_csv(&mut buf.as_slice()).unwrap();
        assert_eq!(back.rows.len(), tr.rows.len());
        for (a, b) in tr.rows.iter().zip(&back.rows) {
            assert_eq!(a.e_kin, b.e_kin);
            assert_eq!(a.h, b.h);
            assert_eq!(a.d, b.d);
        }
    }

    #[test]
    fn mixing_zone_of_linear_interpolant_is_everything() {
        let p = unit_problem(16, 16);
        let u = p.u_hat(0.0);
        let mz = mixing_zone(&u, 1e-6).unwrap();
        assert_eq!(mz.mask.iter().filter(|&&b| b).count(), 16 * 16);
        assert_eq!(mz.components.len(), 1);
        assert_eq!(mz.components[0].holes, 0);
    }

    #[test]
    fn mixing_zone_of_resting_field_is_empty() {
        let p = unit_problem(16, 16);
        let u = resting_field(&p);
        let mz = mixing_zone(&u, 1e-6).unwrap();
        assert!(mz.components.is_empty());
    }

    #[test]
    fn hole_counting_on_handmade_masks() {
        // A 5×5 ring with one enclosed cell.
        let (nt, nx) = (7, 7);
        let mut mask = vec![false; nt * nx];
        for i in 1..6 {
            for j in 1..6 {
                if i == 1 || i == 5 || j == 1 || j == 5 {
                    mask[i * nx + j] = true;
                }
            }
        }
        let mz = MixingZone::from_mask(mask, nt, nx);
        assert_eq!(mz.components.len(), 1);
        assert_eq!(mz.components[0].holes, 1);

        // Two disjoint solid blocks: two components, no holes.
        let mut mask = vec![false; nt * nx];
        mask[1 * nx + 1] = true;
        mask[1 * nx + 2] = true;
        mask[4 * nx + 4] = true;
        let mz = MixingZone::from_mask(mask, nt, nx);
        assert_eq!(mz.components.len(), 2);
        assert!(mz.components.iter().all(|c| c.holes == 0));
    }

    #[test]
    fn trace_attainment_resting_field() {
        let p = unit_problem(16, 16);
        let u = resting_field(&p);
        let ta = trace_attainment(&u, &p.dom);
        for &(_, _, c1) in &ta.a_rows {
            assert_eq!(c1, 0.0);
        }
        assert!(ta.b1_bounded);
        assert!(ta.c1_monotone);
    }

    #[test]
    fn trace_attainment_interpolant_hard_bound() {
        let p = unit_problem(32, 32);
        let u = p.u_hat(0.0);
        let ta = trace_attainment(&u, &p.dom);
        assert!(ta.b1_bounded, "{:?}", ta.b_rows);
        assert!(!ta.b_rows.is_empty());
    }

    #[test]
    fn oscillation_of_constant_field_is_zero() {
        let p = unit_problem(16, 16);
        let u = ScalarField::zeros(p.grid);
        let t = oscillation_modulus(&u, &p.dom, &[(0.5, 0.0)], &[0.25, 0.0625]);
        assert_eq!(t.max_ratio, 0.0);
    }

    #[test]
    fn oscillation_of_interpolant_is_bounded() {
        let p = unit_problem(32, 32);
        let u = p.u_hat(0.0);
        let radii: Vec<f64> = (2..=6).map(|k| 0.5f64.powi(k)).collect();
        let t = oscillation_modulus(&u, &p.dom, &[(0.5, 0.0), (0.5, 0.4)], &radii);
        assert!(!t.entries.is_empty());
        assert!(t.max_ratio.is_finite() && t.max_ratio > 0.0);
    }

    #[test]
    fn oscillation_skips_centers_near_boundary() {
        let p = unit_problem(16, 16);
        let u = p.u_hat(0.0);
        // sqrt(0.25) = 0.5 ball does not fit around a point near the corner.
        let t = oscillation_modulus(&u, &p.dom, &[(0.05, 0.9)], &[0.25]);
        assert_eq!(t.skipped, 1);
    }

    #[test]
    fn kinetic_jump_requires_unit_t() {
        let p = unit_problem(8, 8);
        let tr = energy_trace(&p, &p.u_hat(0.05), 0.05).unwrap();
        assert!(kinetic_jump_vs_t(&[(2.0, tr.clone())], 1.0, 1e-2).is_err());
        let rows = kinetic_jump_vs_t(&[(1.0, tr)], 10.0, 1e-2).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].bound, 10.0);
    }
}
