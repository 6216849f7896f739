//! Harmonic solves on periodic graph domains.
//!
//! The domain `{B(x) < y < T(x)}` is mapped to the unit strip by
//! `y = B(x) + t (T(x) - B(x))`, `t ∈ [0, 1]`. The mapped grid carries a
//! structured triangulation (each cell cut along its `(i, j)-(i+1, j+1)`
//! diagonal) and the Dirichlet energy is discretized with piecewise linear
//! elements on the physical node positions. The resulting stiffness matrix is
//! symmetric positive definite with half-bandwidth `Nx + 1`.

use crate::error::{Error, Result};
use crate::geometry::{BoundaryDensity, GraphCurve};

/// Relative residual target for the iterative fallback.
pub const SOLVER_TOL: f64 = 1e-10;

/// A periodic strip between two graphs, with its grid resolution.
#[derive(Clone, Debug)]
pub struct StripDomain {
    top: GraphCurve,
    bottom: Option<GraphCurve>,
    nx: usize,
    ny: usize,
    top_h: Vec<f64>,
    bot_h: Vec<f64>,
}

impl StripDomain {
    /// The graph domain `{0 < y < top(x)}`.
    pub fn new(top: GraphCurve, nx: usize, ny: usize) -> Result<Self> {
        if nx < 8 || ny < 8 {
            return Err(Error::GridTooSmall { nx, ny });
        }
        let (lo, _) = top.extrema();
        if !(lo > 0.0) {
            return Err(Error::NonPositiveProfile { min: lo });
        }
        let top_h = (0..nx).map(|i| top.value(x_of(nx, i))).collect();
        Ok(StripDomain {
            top,
            bottom: None,
            nx,
            ny,
            top_h,
            bot_h: vec![0.0; nx],
        })
    }

    /// Replaces the flat bottom `y = 0` with a graph lying strictly below the top.
    pub fn with_bottom(mut self, bottom: GraphCurve) -> Result<Self> {
        let bot_h: Vec<f64> = (0..self.nx).map(|i| bottom.value(x_of(self.nx, i))).collect();
        let gap = (0..4096)
            .map(|k| {
                let x = -1.0 + 2.0 * k as f64 / 4096.0;
                self.top.value(x) - bottom.value(x)
            })
            .fold(f64::INFINITY, f64::min);
        if !(gap > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bottom curve must lie below the top (min gap {gap})"
            )));
        }
        self.bot_h = bot_h;
        self.bottom = Some(bottom);
        Ok(self)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn hx(&self) -> f64 {
        2.0 / self.nx as f64
    }

    pub fn ht(&self) -> f64 {
        1.0 / self.ny as f64
    }

    pub fn top(&self) -> &GraphCurve {
        &self.top
    }

    pub fn bottom(&self) -> Option<&GraphCurve> {
        self.bottom.as_ref()
    }

    pub fn x(&self, i: usize) -> f64 {
        x_of(self.nx, i)
    }

    /// Physical position of node `(i, j)`; `i` may equal `nx` (the right edge of the cell).
    pub fn node(&self, i: usize, j: usize) -> (f64, f64) {
        let ic = i % self.nx;
        let t = j as f64 / self.ny as f64;
        let (b, tp) = (self.bot_h[ic], self.top_h[ic]);
        (self.x(i), b + t * (tp - b))
    }

    fn bottom_slope(&self, x: f64) -> f64 {
        self.bottom.as_ref().map_or(0.0, |b| b.slope(x))
    }

    fn n_nodes(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    /// Largest mesh width in physical units.
    pub fn mesh_size(&self) -> f64 {
        let h = (0..self.nx)
            .map(|i| self.top_h[i] - self.bot_h[i])
            .fold(0.0, f64::max);
        self.hx().max(h * self.ht())
    }
}

fn x_of(nx: usize, i: usize) -> f64 {
    -1.0 + 2.0 * i as f64 / nx as f64
}

/// Nodal values on the mapped grid, row-major in `j` (`j = 0` bottom, `j = ny` top).
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        GridField {
            nx,
            ny,
            values: vec![0.0; nx * (ny + 1)],
        }
    }

    pub fn from_fn(domain: &StripDomain, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut g = GridField::zeros(domain.nx, domain.ny);
        for j in 0..=domain.ny {
            for i in 0..domain.nx {
                let (x, y) = domain.node(i, j);
                g.values[j * domain.nx + i] = f(x, y);
            }
        }
        g
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i % self.nx]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[j * self.nx + i % self.nx] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn top_trace(&self) -> BoundaryDensity {
        BoundaryDensity::from_periodic((0..self.nx).map(|i| self.get(i, self.ny)).collect())
    }

    pub fn bottom_trace(&self) -> BoundaryDensity {
        BoundaryDensity::from_periodic((0..self.nx).map(|i| self.get(i, 0)).collect())
    }

    pub fn max_abs_diff(&self, other: &GridField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

#[derive(Clone, Debug)]
struct Triangle {
    nodes: [usize; 3],
    k: [[f64; 3]; 3],
    area: f64,
}

fn triangles(domain: &StripDomain) -> Vec<Triangle> {
    let (nx, ny) = (domain.nx, domain.ny);
    let id = |i: usize, j: usize| j * nx + i % nx;
    let mut out = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let p00 = (id(i, j), domain.node(i, j));
            let p10 = (id(i + 1, j), domain.node(i + 1, j));
            let p11 = (id(i + 1, j + 1), domain.node(i + 1, j + 1));
            let p01 = (id(i, j + 1), domain.node(i, j + 1));
            for tri in [[p00, p10, p11], [p00, p11, p01]] {
                out.push(p1_element(tri));
            }
        }
    }
    out
}

fn p1_element(v: [(usize, (f64, f64)); 3]) -> Triangle {
    let [(n1, (x1, y1)), (n2, (x2, y2)), (n3, (x3, y3))] = v;
    let b = [y2 - y3, y3 - y1, y1 - y2];
    let c = [x3 - x2, x1 - x3, x2 - x1];
    let twice_area = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1);
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for d in 0..3 {
            k[a][d] = (b[a] * b[d] + c[a] * c[d]) / (2.0 * twice_area);
        }
    }
    Triangle {
        nodes: [n1, n2, n3],
        k,
        area: 0.5 * twice_area,
    }
}

/// Symmetric band matrix, lower triangle stored row by row.
#[derive(Clone, Debug)]
struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    fn idx(&self, r: usize, c: usize) -> usize {
        r * (self.bw + 1) + self.bw + c - r
    }

    fn add(&mut self, r: usize, c: usize, v: f64) {
        let (r, c) = if r >= c { (r, c) } else { (c, r) };
        let k = self.idx(r, c);
        self.data[k] += v;
    }

    fn diag(&self, r: usize) -> f64 {
        self.data[self.idx(r, r)]
    }

    fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..self.n {
            let c0 = r.saturating_sub(self.bw);
            let mut acc = 0.0;
            for c in c0..r {
                let a = self.data[self.idx(r, c)];
                acc += a * x[c];
                y[c] += a * x[r];
            }
            y[r] += acc + self.data[self.idx(r, r)] * x[r];
        }
    }
}

/// Cholesky factor of a band matrix, same storage layout.
#[derive(Clone, Debug)]
struct BandCholesky {
    l: BandMatrix,
}

impl BandCholesky {
    fn factor(a: &BandMatrix) -> Option<Self> {
        let mut l = a.clone();
        let (n, bw) = (a.n, a.bw);
        let w = bw + 1;
        for i in 0..n {
            let jmin = i.saturating_sub(bw);
            let ri = i * w + bw - i;
            for j in jmin..=i {
                let rj = j * w + bw - j;
                let kmin = jmin.max(j.saturating_sub(bw));
                let dot: f64 = l.data[ri + kmin..ri + j]
                    .iter()
                    .zip(&l.data[rj + kmin..rj + j])
                    .map(|(p, q)| p * q)
                    .sum();
                let sum = l.data[ri + j] - dot;
                if i == j {
                    if !(sum > 0.0) {
                        return None;
                    }
                    l.data[ri + j] = sum.sqrt();
                } else {
                    l.data[ri + j] = sum / l.data[rj + j];
                }
            }
        }
        Some(BandCholesky { l })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let l = &self.l;
        let (n, bw) = (l.n, l.bw);
        let w = bw + 1;
        let mut y = b.to_vec();
        for i in 0..n {
            let k0 = i.saturating_sub(bw);
            let ri = i * w + bw - i;
            let dot: f64 = l.data[ri + k0..ri + i]
                .iter()
                .zip(&y[k0..i])
                .map(|(p, q)| p * q)
                .sum();
            y[i] = (y[i] - dot) / l.data[ri + i];
        }
        for i in (0..n).rev() {
            let ri = i * w + bw - i;
            y[i] /= l.data[ri + i];
            let xi = y[i];
            let k0 = i.saturating_sub(bw);
            for k in k0..i {
                y[k] -= l.data[ri + k] * xi;
            }
        }
        y
    }
}

fn conjugate_gradient(a: &BandMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = a.n;
    let inv_diag: Vec<f64> = (0..n).map(|r| 1.0 / a.diag(r)).collect();
    let norm_b = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; n];
    if norm_b == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(p, q)| p * q).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz: f64 = r.iter().zip(&z).map(|(p, q)| p * q).sum();
    let max_iter = 20 * n;
    let mut res = 1.0;
    for _ in 0..max_iter {
        a.matvec(&p, &mut ap);
        let alpha = rz / p.iter().zip(&ap).map(|(u, v)| u * v).sum::<f64>();
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        res = r.iter().map(|v| v * v).sum::<f64>().sqrt() / norm_b;
        if res <= tol {
            return Ok(x);
        }
        for k in 0..n {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(p, q)| p * q).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::SolverDiverged {
        iterations: max_iter,
        residual: res,
    })
}

/// Linear solver choice.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    /// Banded Cholesky, falling back to CG if the factorization breaks down.
    Direct,
    /// Jacobi-preconditioned conjugate gradients.
    Iterative,
}

/// Assembled and factored Dirichlet problem on one domain.
///
/// Reusing a solver amortizes the factorization over many boundary data.
#[derive(Clone, Debug)]
pub struct HarmonicSolver {
    domain: StripDomain,
    tris: Vec<Triangle>,
    matrix: BandMatrix,
    factor: Option<BandCholesky>,
}

impl HarmonicSolver {
    pub fn new(domain: &StripDomain) -> Result<Self> {
        Self::with_kind(domain, SolverKind::Direct)
    }

    pub fn with_kind(domain: &StripDomain, kind: SolverKind) -> Result<Self> {
        let tris = triangles(domain);
        let nx = domain.nx;
        let n = nx * (domain.ny - 1);
        let mut matrix = BandMatrix::zeros(n, nx + 1);
        for t in &tris {
            for a in 0..3 {
                for b in 0..=a {
                    let (na, nb) = (t.nodes[a], t.nodes[b]);
                    if let (Some(ra), Some(rb)) = (unknown(domain, na), unknown(domain, nb)) {
                        matrix.add(ra, rb, t.k[a][b]);
                    }
                }
            }
        }
        let factor = match kind {
            SolverKind::Direct => BandCholesky::factor(&matrix),
            SolverKind::Iterative => None,
        };
        Ok(HarmonicSolver {
            domain: domain.clone(),
            tris,
            matrix,
            factor,
        })
    }

    pub fn domain(&self) -> &StripDomain {
        &self.domain
    }

    /// Solves `Δu = 0` with `u = bottom` on `t = 0` and `u = top` on `t = 1`.
    pub fn solve(&self, bottom: &BoundaryDensity, top: &BoundaryDensity) -> Result<GridField> {
        let d = &self.domain;
        let (nx, ny) = (d.nx, d.ny);
        for dens in [bottom, top] {
            if dens.n() != nx {
                return Err(Error::GridMismatch {
                    expected: nx + 1,
                    got: dens.values().len(),
                });
            }
        }
        let mut u = GridField::zeros(nx, ny);
        for i in 0..nx {
            u.set(i, 0, bottom.values()[i]);
            u.set(i, ny, top.values()[i]);
        }
        let mut rhs = vec![0.0; self.matrix.n];
        for t in &self.tris {
            for a in 0..3 {
                if let Some(ra) = unknown(d, t.nodes[a]) {
                    for b in 0..3 {
                        if unknown(d, t.nodes[b]).is_none() {
                            rhs[ra] -= t.k[a][b] * u.values[t.nodes[b]];
                        }
                    }
                }
            }
        }
        let x = match &self.factor {
            Some(f) => f.solve(&rhs),
            None => conjugate_gradient(&self.matrix, &rhs, SOLVER_TOL)?,
        };
        u.values[nx..nx * ny].copy_from_slice(&x);
        Ok(u)
    }

    /// `∫ |∇u|²` of the piecewise linear interpolant.
    pub fn dirichlet_energy(&self, u: &GridField) -> f64 {
        self.tris
            .iter()
            .map(|t| {
                let v = t.nodes.map(|n| u.values[n]);
                let mut e = 0.0;
                for a in 0..3 {
                    for b in 0..3 {
                        e += v[a] * t.k[a][b] * v[b];
                    }
                }
                e
            })
            .sum()
    }

    /// `∫ ∇u·∇v` of the piecewise linear interpolants.
    pub fn dirichlet_product(&self, u: &GridField, v: &GridField) -> f64 {
        self.tris
            .iter()
            .map(|t| {
                let p = t.nodes.map(|n| u.values[n]);
                let q = t.nodes.map(|n| v.values[n]);
                let mut e = 0.0;
                for a in 0..3 {
                    for b in 0..3 {
                        e += p[a] * t.k[a][b] * q[b];
                    }
                }
                e
            })
            .sum()
    }

    /// `K u` on the bottom and top rows. For discrete harmonic `u`, pairing these
    /// with the boundary values of `v` gives `∫ ∇u·∇v`.
    pub fn boundary_reaction(&self, u: &GridField) -> (Vec<f64>, Vec<f64>) {
        let (nx, ny) = (self.domain.nx, self.domain.ny);
        let mut bottom = vec![0.0; nx];
        let mut top = vec![0.0; nx];
        for t in &self.tris {
            for a in 0..3 {
                let node = t.nodes[a];
                let row = node / nx;
                if row != 0 && row != ny {
                    continue;
                }
                let r: f64 = (0..3).map(|b| t.k[a][b] * u.values[t.nodes[b]]).sum();
                if row == 0 {
                    bottom[node % nx] += r;
                } else {
                    top[node % nx] += r;
                }
            }
        }
        (bottom, top)
    }

    /// Max over interior nodes of the discrete Laplacian, normalized by the lumped mass.
    pub fn laplacian_residual(&self, u: &GridField) -> f64 {
        let n = self.domain.n_nodes();
        let mut r = vec![0.0; n];
        let mut mass = vec![0.0; n];
        for t in &self.tris {
            for a in 0..3 {
                mass[t.nodes[a]] += t.area / 3.0;
                for b in 0..3 {
                    r[t.nodes[a]] += t.k[a][b] * u.values[t.nodes[b]];
                }
            }
        }
        let nx = self.domain.nx;
        (nx..nx * self.domain.ny)
            .map(|k| (r[k] / mass[k]).abs())
            .fold(0.0, f64::max)
    }

    /// Total area of the triangulation.
    pub fn area(&self) -> f64 {
        self.tris.iter().map(|t| t.area).sum()
    }

    /// Smallest triangle area, to detect folded meshes.
    pub fn min_element_area(&self) -> f64 {
        self.tris.iter().map(|t| t.area).fold(f64::INFINITY, f64::min)
    }

    /// Gradient of the P1 interpolant at a physical point, `None` outside the mesh.
    pub fn gradient_at(&self, u: &GridField, x: f64, y: f64) -> Option<[f64; 2]> {
        let d = &self.domain;
        let xr = (x + 1.0).rem_euclid(2.0);
        let i = ((xr / d.hx()) as usize).min(d.nx - 1);
        let xi = (xr - i as f64 * d.hx()) / d.hx();
        let (_, b0) = d.node(i, 0);
        let (_, t0) = d.node(i, d.ny);
        let (_, b1) = d.node(i + 1, 0);
        let (_, t1) = d.node(i + 1, d.ny);
        let (b, t) = (b0 + xi * (b1 - b0), t0 + xi * (t1 - t0));
        let tau = (y - b) / (t - b);
        if !(-1e-12..=1.0 + 1e-12).contains(&tau) {
            return None;
        }
        let j = ((tau * d.ny as f64) as usize).min(d.ny - 1);
        let p00 = d.node(i, j);
        let p11 = d.node(i + 1, j + 1);
        let xl = d.x(i) + xi * d.hx();
        let above = (p11.0 - p00.0) * (y - p00.1) - (p11.1 - p00.1) * (xl - p00.0) > 0.0;
        let tri = &self.tris[2 * (j * d.nx + i) + usize::from(above)];
        let corners = if above {
            [p00, p11, d.node(i, j + 1)]
        } else {
            [p00, d.node(i + 1, j), p11]
        };
        let [(x1, y1), (x2, y2), (x3, y3)] = corners;
        let bb = [y2 - y3, y3 - y1, y1 - y2];
        let cc = [x3 - x2, x1 - x3, x2 - x1];
        let twice = 2.0 * tri.area;
        let vals = tri.nodes.map(|n| u.values()[n]);
        let gx = (0..3).map(|a| vals[a] * bb[a]).sum::<f64>() / twice;
        let gy = (0..3).map(|a| vals[a] * cc[a]).sum::<f64>() / twice;
        Some([gx, gy])
    }
}

fn unknown(d: &StripDomain, node: usize) -> Option<usize> {
    let j = node / d.nx;
    (j >= 1 && j < d.ny).then(|| node - d.nx)
}

/// One-shot harmonic solve.
pub fn solve_harmonic(
    domain: &StripDomain,
    bottom: &BoundaryDensity,
    top: &BoundaryDensity,
) -> Result<GridField> {
    HarmonicSolver::new(domain)?.solve(bottom, top)
}

/// Physical gradient at the top (`at_top`) or bottom row, from second-order
/// one-sided differences in `t` and central differences of the trace in `x`.
fn boundary_gradient(u: &GridField, domain: &StripDomain, i: usize, at_top: bool) -> (f64, f64) {
    let (nx, ny) = (domain.nx, domain.ny);
    let (hx, ht) = (domain.hx(), domain.ht());
    let x = domain.x(i);
    let h = domain.top_h[i] - domain.bot_h[i];
    let (j, u_t, slope) = if at_top {
        let u_t = (3.0 * u.get(i, ny) - 4.0 * u.get(i, ny - 1) + u.get(i, ny - 2)) / (2.0 * ht);
        (ny, u_t, domain.top.slope(x))
    } else {
        let u_t = (-3.0 * u.get(i, 0) + 4.0 * u.get(i, 1) - u.get(i, 2)) / (2.0 * ht);
        (0, u_t, domain.bottom_slope(x))
    };
    let u_xi = (u.get(i + 1, j) - u.get((i + nx - 1) % nx, j)) / (2.0 * hx);
    let uy = u_t / h;
    let ux = u_xi - u_t * slope / h;
    (ux, uy)
}

/// `∂_ν u` on the top boundary for the outward normal `(-T', 1)/√(1+T'²)`.
pub fn normal_flux(u: &GridField, domain: &StripDomain) -> BoundaryDensity {
    BoundaryDensity::from_periodic(
        (0..domain.nx)
            .map(|i| {
                let (ux, uy) = boundary_gradient(u, domain, i, true);
                let s = domain.top.slope(domain.x(i));
                (-s * ux + uy) / (1.0 + s * s).sqrt()
            })
            .collect(),
    )
}

/// `∂_n u` on the bottom boundary for the outward (downward) normal.
pub fn bottom_flux(u: &GridField, domain: &StripDomain) -> BoundaryDensity {
    BoundaryDensity::from_periodic(
        (0..domain.nx)
            .map(|i| {
                let (ux, uy) = boundary_gradient(u, domain, i, false);
                let s = domain.bottom_slope(domain.x(i));
                (s * ux - uy) / (1.0 + s * s).sqrt()
            })
            .collect(),
    )
}

/// `|∇u|²` on the top boundary.
pub fn boundary_gradient_sq(u: &GridField, domain: &StripDomain) -> BoundaryDensity {
    BoundaryDensity::from_periodic(
        (0..domain.nx)
            .map(|i| {
                let (ux, uy) = boundary_gradient(u, domain, i, true);
                ux * ux + uy * uy
            })
            .collect(),
    )
}

/// 16-point Gauss–Legendre nodes and weights on `[-1, 1]`.
const GL16: [(f64, f64); 8] = [
    (0.0950125098376374, 0.1894506104550685),
    (0.2816035507792589, 0.1826034150449236),
    (0.4580167776572274, 0.1691565193950025),
    (0.6178762444026438, 0.1495959888165767),
    (0.7554044083550030, 0.1246289712555339),
    (0.8656312023878318, 0.0951585116824928),
    (0.9445750230732326, 0.0622535239386479),
    (0.9894009349916499, 0.0271524594117541),
];

/// `∫_Ω f` with the periodic trapezoid rule in `x` and Gauss–Legendre in `y`.
pub fn volume_integral(domain: &StripDomain, f: impl Fn(f64, f64) -> f64) -> f64 {
    let hx = domain.hx();
    (0..domain.nx)
        .map(|i| {
            let x = domain.x(i);
            let (b, t) = (domain.bot_h[i], domain.top_h[i]);
            let (mid, half) = (0.5 * (b + t), 0.5 * (t - b));
            let col: f64 = GL16
                .iter()
                .map(|&(z, w)| w * (f(x, mid - half * z) + f(x, mid + half * z)))
                .sum();
            hx * half * col
        })
        .sum()
}

/// Dirichlet, volume and total parts of `F`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct EnergyBreakdown {
    pub dirichlet: f64,
    pub volume: f64,
    pub total: f64,
}

/// `F(u) = ∫ |∇u|² + ∫_Ω Q²` on the domain the field lives on.
pub fn energy(
    solver: &HarmonicSolver,
    u: &GridField,
    q2: impl Fn(f64, f64) -> f64,
) -> EnergyBreakdown {
    let dirichlet = solver.dirichlet_energy(u);
    let volume = volume_integral(&solver.domain, q2);
    EnergyBreakdown {
        dirichlet,
        volume,
        total: dirichlet + volume,
    }
}

/// Largest violation of `min(∂Ω data) ≤ u ≤ max(∂Ω data)` (zero if it holds).
pub fn max_principle_violation(u: &GridField) -> f64 {
    let nx = u.nx;
    let boundary = u.values[..nx].iter().chain(&u.values[nx * u.ny..]);
    let (lo, hi) = boundary.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
        (l.min(v), h.max(v))
    });
    u.values
        .iter()
        .map(|&v| (lo - v).max(v - hi).max(0.0))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{PeriodicProfile, ProfileSpec, make_profile};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn flat(nx: usize, ny: usize) -> StripDomain {
        StripDomain::new(GraphCurve::new(&PeriodicProfile::constant(1.0).unwrap()), nx, ny).unwrap()
    }

    #[test]
    fn grid_too_small() {
        let top = GraphCurve::new(&PeriodicProfile::constant(1.0).unwrap());
        assert_eq!(
            StripDomain::new(top, 8, 4).unwrap_err(),
            Error::GridTooSmall { nx: 8, ny: 4 }
        );
    }

    #[test]
    fn linear_solution_is_exact() {
        let d = flat(32, 16);
        let s = HarmonicSolver::new(&d).unwrap();
        let u = s
            .solve(&BoundaryDensity::constant(32, 1.0), &BoundaryDensity::constant(32, 0.0))
            .unwrap();
        let exact = GridField::from_fn(&d, |_, y| 1.0 - y);
        assert!(u.max_abs_diff(&exact) < 1e-13);
        let flux = normal_flux(&u, &d);
        assert!(flux.values().iter().all(|v| (v + 1.0).abs() < 1e-11));
        let e = energy(&s, &u, |_, _| 1.0);
        assert_relative_eq!(e.dirichlet, 2.0, epsilon = 1e-12);
        assert_relative_eq!(e.volume, 2.0, epsilon = 1e-12);
        assert!(s.laplacian_residual(&u) < 1e-9);
    }

    #[test]
    fn affine_exact_on_curved_domain() {
        let p = make_profile(&ProfileSpec::Fourier {
            mean: 1.0,
            cos: vec![0.1],
            sin: vec![0.05],
        })
        .unwrap();
        let d = StripDomain::new(GraphCurve::new(&p), 48, 24).unwrap();
        // only x-independent affine functions are periodic
        let g = |_x: f64, y: f64| 0.3 - 1.1 * y;
        let top = BoundaryDensity::from_fn(48, |x| g(x, p.value(x)));
        let u = solve_harmonic(&d, &BoundaryDensity::constant(48, 0.3), &top).unwrap();
        let exact = GridField::from_fn(&d, g);
        assert!(u.max_abs_diff(&exact) < 1e-12);
    }

    #[test]
    fn iterative_matches_direct() {
        let p = make_profile(&ProfileSpec::Fourier {
            mean: 1.0,
            cos: vec![0.15],
            sin: vec![],
        })
        .unwrap();
        let d = StripDomain::new(GraphCurve::new(&p), 32, 16).unwrap();
        let top = BoundaryDensity::from_fn(32, |x| (PI * x).sin());
        let bot = BoundaryDensity::constant(32, 1.0);
        let a = HarmonicSolver::new(&d).unwrap().solve(&bot, &top).unwrap();
        let b = HarmonicSolver::with_kind(&d, SolverKind::Iterative)
            .unwrap()
            .solve(&bot, &top)
            .unwrap();
        assert!(a.max_abs_diff(&b) < 1e-8);
    }

    fn cosine_error(nx: usize) -> f64 {
        let d = flat(nx, nx / 2);
        let bot = BoundaryDensity::from_fn(nx, |x| (PI * x).cos());
        let u = solve_harmonic(&d, &bot, &BoundaryDensity::constant(nx, 0.0)).unwrap();
        let exact =
            GridField::from_fn(&d, |x, y| (PI * x).cos() * (PI * (1.0 - y)).sinh() / PI.sinh());
        u.max_abs_diff(&exact)
    }

    #[test]
    fn cosine_datum_second_order() {
        let (e1, e2) = (cosine_error(32), cosine_error(64));
        let ratio = e1 / e2;
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn flux_balance_and_max_principle() {
        let p = make_profile(&ProfileSpec::Fourier {
            mean: 1.0,
            cos: vec![0.1],
            sin: vec![],
        })
        .unwrap();
        let c = GraphCurve::new(&p);
        let d = StripDomain::new(c.clone(), 128, 64).unwrap();
        let u = solve_harmonic(
            &d,
            &BoundaryDensity::from_fn(128, |x| 1.0 + 0.2 * (PI * x).cos()),
            &BoundaryDensity::constant(128, 0.0),
        )
        .unwrap();
        assert_eq!(max_principle_violation(&u), 0.0);
        let top = normal_flux(&u, &d);
        let bot = bottom_flux(&u, &d);
        let hx = d.hx();
        let mut total = 0.0;
        for i in 0..128 {
            let s = c.slope(d.x(i));
            total += hx * (top.values()[i] * (1.0 + s * s).sqrt() + bot.values()[i]);
        }
        assert!(total.abs() < 2e-3, "flux imbalance {total}");
    }
}
