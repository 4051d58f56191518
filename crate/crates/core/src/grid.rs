//! Discretization of the space-time rectangle (0,T)×(−L,L): uniform bilinear
//! grid, boundary traces, cell-center gradients, midpoint quadrature, and the
//! plain-text field dump format.

use crate::error::{CoreError, Result};
use std::io::{BufRead, Write};

/// Physical parameters of the problem domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    /// Time extent of the rectangle (0,T).
    pub t: f64,
    /// Half-height of the channel (−L,L).
    pub l: f64,
    /// Ambient spatial dimension (only the subsolution formulas use it).
    pub n: usize,
    /// Gravity constant.
    pub g: f64,
    /// Atwood number.
    pub a: f64,
}

impl Domain {
    pub fn new(t: f64, l: f64, n: usize, g: f64, a: f64) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(CoreError::InvalidInput(format!("T must be positive, got {t}")));
        }
        if !(l > 0.0) || !l.is_finite() {
            return Err(CoreError::InvalidInput(format!("L must be positive, got {l}")));
        }
        if n < 2 {
            return Err(CoreError::InvalidInput(format!("n must be >= 2, got {n}")));
        }
        if !(g > 0.0) || !g.is_finite() {
            return Err(CoreError::InvalidInput(format!("g must be positive, got {g}")));
        }
        if !(a > 0.0) || !a.is_finite() {
            return Err(CoreError::InvalidInput(format!("A must be positive, got {a}")));
        }
        Ok(Domain { t, l, n, g, a })
    }

    /// Default unit configuration: g = A = L = T = 1, n = 2.
    pub fn unit() -> Self {
        Domain { t: 1.0, l: 1.0, n: 2, g: 1.0, a: 1.0 }
    }
}

/// Uniform grid: Nt time intervals, Nx space intervals.  Node (i,j) sits at
/// x = (i·ht, −L + j·hx).  Nx must be even so x₂ = 0 is a grid line and the
/// kink of the initial interface sits on a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nt: usize,
    pub nx: usize,
    pub ht: f64,
    pub hx: f64,
}

impl Grid {
    pub fn new(nt: usize, nx: usize, dom: &Domain) -> Result<Self> {
        if nt < 2 {
            return Err(CoreError::InvalidInput(format!("Nt must be >= 2, got {nt}")));
        }
        if nx < 2 || nx % 2 != 0 {
            return Err(CoreError::InvalidInput(format!("Nx must be even and >= 2, got {nx}")));
        }
        Ok(Grid { nt, nx, ht: dom.t / nt as f64, hx: 2.0 * dom.l / nx as f64 })
    }

    /// Coordinates of node (i,j).
    pub fn node(&self, i: usize, j: usize, dom: &Domain) -> (f64, f64) {
        (i as f64 * self.ht, -dom.l + j as f64 * self.hx)
    }

    /// Coordinates of the center of cell (i,j), 0 ≤ i < Nt, 0 ≤ j < Nx.
    pub fn cell_center(&self, i: usize, j: usize, dom: &Domain) -> (f64, f64) {
        ((i as f64 + 0.5) * self.ht, -dom.l + (j as f64 + 0.5) * self.hx)
    }
}

/// Nodal scalar field over a [`Grid`]: (Nt+1)×(Nx+1) values, row-major in
/// time level i.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        ScalarField { grid, values: vec![0.0; (grid.nt + 1) * (grid.nx + 1)] }
    }

    /// Build a field by sampling `f(x1, x2)` at the nodes.
    pub fn from_fn(grid: Grid, dom: &Domain, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut u = ScalarField::zeros(grid);
        for i in 0..=grid.nt {
            for j in 0..=grid.nx {
                let (x1, x2) = grid.node(i, j, dom);
                u[(i, j)] = f(x1, x2);
            }
        }
        u
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.grid.nt && j <= self.grid.nx);
        i * (self.grid.nx + 1) + j
    }

    /// True if every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Max-norm of the difference to another field on the same grid.
    pub fn sup_distance(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for ScalarField {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.values[self.idx(i, j)]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ScalarField {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        let k = self.idx(i, j);
        &mut self.values[k]
    }
}

/// Boundary height profile U_ε(x₂) = L − |x₂| + (ε^β / 2L)(L² − x₂²).
///
/// ε = 0 gives the sharp interface profile L − |x₂|.
pub fn boundary_profile(x2: f64, eps: f64, beta: f64, dom: &Domain) -> Result<f64> {
    if x2.abs() > dom.l * (1.0 + 1e-14) {
        return Err(CoreError::InvalidInput(format!(
            "x2 = {x2} outside [-L, L] with L = {}",
            dom.l
        )));
    }
    let x2 = x2.clamp(-dom.l, dom.l);
    Ok(dom.l - x2.abs() + eps.powf(beta) / (2.0 * dom.l) * (dom.l * dom.l - x2 * x2))
}

/// Set the trace data of the perturbed admissible class:
/// u(0,·) = −U_ε, u(T,·) = U_ε, u(·,±L) = 0.  Interior nodes are untouched.
pub fn impose_boundary(u: &mut ScalarField, eps: f64, beta: f64, dom: &Domain) {
    let grid = u.grid;
    for j in 0..=grid.nx {
        let (_, x2) = grid.node(0, j, dom);
        let prof = boundary_profile(x2, eps, beta, dom).expect("grid node inside domain");
        u[(0, j)] = -prof;
        u[(grid.nt, j)] = prof;
    }
    for i in 0..=grid.nt {
        u[(i, 0)] = 0.0;
        u[(i, grid.nx)] = 0.0;
    }
}

/// Gradient of the bilinear interpolant at the center of cell (i,j).
///
/// Exact for bilinear u on the cell; component 1 is ∂u/∂x₁.
pub fn cell_gradient(u: &ScalarField, i: usize, j: usize) -> [f64; 2] {
    let grid = u.grid;
    assert!(i < grid.nt && j < grid.nx, "cell ({i},{j}) out of range");
    let (a, b, c, d) = (u[(i, j)], u[(i, j + 1)], u[(i + 1, j)], u[(i + 1, j + 1)]);
    [(c + d - a - b) / (2.0 * grid.ht), (b + d - a - c) / (2.0 * grid.hx)]
}

/// Average of the four corner values of cell (i,j) (the bilinear interpolant
/// evaluated at the cell center).
pub fn cell_average(u: &ScalarField, i: usize, j: usize) -> f64 {
    0.25 * (u[(i, j)] + u[(i, j + 1)] + u[(i + 1, j)] + u[(i + 1, j + 1)])
}

/// Midpoint-rule quadrature: Σ_cells ht·hx·G(x_c, ∇u(x_c), ū(x_c)).
///
/// Returns an error naming the first cell where the integrand is not finite.
pub fn quadrature(
    u: &ScalarField,
    dom: &Domain,
    integrand: impl Fn((f64, f64), [f64; 2], f64) -> f64,
) -> Result<f64> {
    let grid = u.grid;
    let w = grid.ht * grid.hx;
    let mut sum = 0.0;
    for i in 0..grid.nt {
        for j in 0..grid.nx {
            let xc = grid.cell_center(i, j, dom);
            let val = integrand(xc, cell_gradient(u, i, j), cell_average(u, i, j));
            if !val.is_finite() {
                return Err(CoreError::InvalidInput(format!(
                    "non-finite integrand value {val} at cell ({i},{j})"
                )));
            }
            sum += w * val;
        }
    }
    Ok(sum)
}

/// Write a field dump: header `Nt Nx T L`, then Nt+1 rows of Nx+1 values at
/// 17 significant digits (round-trips f64 bit-exactly).
pub fn write_field(w: &mut impl Write, u: &ScalarField, dom: &Domain) -> Result<()> {
    writeln!(w, "{} {} {:.16e} {:.16e}", u.grid.nt, u.grid.nx, dom.t, dom.l)?;
    for i in 0..=u.grid.nt {
        let row: Vec<String> = (0..=u.grid.nx).map(|j| format!("{:.16e}", u[(i, j)])).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Read a field dump written by [`write_field`].  Returns the field and the
/// (T, L) recorded in the header.
pub fn read_field(r: &mut impl BufRead) -> Result<(ScalarField, f64, f64)> {
    let mut header = String::new();
    r.read_line(&mut header)?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 {
        return Err(CoreError::Format(format!("bad field header: {header:?}")));
    }
    let nt: usize = parts[0].parse().map_err(|e| CoreError::Format(format!("Nt: {e}")))?;
    let nx: usize = parts[1].parse().map_err(|e| CoreError::Format(format!("Nx: {e}")))?;
    let t: f64 = parts[2].parse().map_err(|e| CoreError::Format(format!("T: {e}")))?;
    let l: f64 = parts[3].parse().map_err(|e| CoreError::Format(format!("L: {e}")))?;
    let dom = Domain::new(t, l, 2, 1.0, 1.0)?;
    let grid = Grid::new(nt, nx, &dom)?;
    let mut u = ScalarField::zeros(grid);
    for i in 0..=nt {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return Err(CoreError::Format(format!("field dump truncated at row {i}")));
        }
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() != nx + 1 {
            return Err(CoreError::Format(format!(
                "row {i} has {} values, expected {}",
                vals.len(),
                nx + 1
            )));
        }
        for (j, s) in vals.iter().enumerate() {
            u[(i, j)] = s.parse().map_err(|e| CoreError::Format(format!("row {i}: {e}")))?;
        }
    }
    Ok((u, t, l))
}
