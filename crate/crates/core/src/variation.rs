//! First and second variations of `F`, the quadratic form at a critical
//! point, and the coercivity eigenproblems.
//!
//! At a critical point the second variation in the normal direction `ψ` is
//!
//! ```text
//! form(ψ) = ∫_{Ω₊} 2|∇u_ψ|² + ∫_Γ (∂_ν Q² + 2κQ²) ψ² dH¹,
//! ```
//!
//! with `u_ψ` harmonic, `u_ψ = Qψ` on `Γ` and `u_ψ = 0` on the bottom.
//! Coercivity constants are smallest generalized eigenvalues of this form on
//! a truncated arclength Fourier basis against the diagonal `H^{1/2}` Gram.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::elliptic::{
    boundary_gradient_sq, normal_flux, GridField, HarmonicSolver, StripDomain,
};
use crate::error::{Error, Result};
use crate::flow::FlowMaps;
use crate::geometry::{frame, Arclength, BoundaryDensity, GraphCurve};
use crate::harness::Scenario;

/// Harmonic state on the graph domain of `w + sφ` with the scenario's data.
#[derive(Clone, Debug)]
pub struct FieldState {
    pub s: f64,
    pub solver: HarmonicSolver,
    pub u: GridField,
    /// `∂_ν u` on the top boundary.
    pub flux: BoundaryDensity,
    /// `|∇u|²` on the top boundary.
    pub grad_sq: BoundaryDensity,
}

impl FieldState {
    pub fn solve(scenario: &Scenario, s: f64) -> Result<Self> {
        Self::solve_on(scenario, scenario.domain(s)?, s)
    }

    fn solve_on(scenario: &Scenario, domain: StripDomain, s: f64) -> Result<Self> {
        let solver = HarmonicSolver::new(&domain)?;
        let bottom = scenario.bottom_density(domain.nx());
        let u = solver.solve(&bottom, &BoundaryDensity::constant(domain.nx(), 0.0))?;
        let flux = normal_flux(&u, &domain);
        let grad_sq = boundary_gradient_sq(&u, &domain);
        Ok(FieldState {
            s,
            solver,
            u,
            flux,
            grad_sq,
        })
    }

    pub fn domain(&self) -> &StripDomain {
        self.solver.domain()
    }

    pub fn curve(&self) -> &GraphCurve {
        self.domain().top()
    }

    /// `∫_Γs f dH¹` for a density sampled on the fitted grid.
    pub fn boundary_integral(&self, f: impl Fn(usize) -> f64) -> f64 {
        boundary_integral(self.curve(), self.domain().nx(), f)
    }
}

fn boundary_integral(curve: &GraphCurve, n: usize, f: impl Fn(usize) -> f64) -> f64 {
    let hx = 2.0 / n as f64;
    (0..n)
        .map(|i| {
            let x = -1.0 + hx * i as f64;
            let sl = curve.slope(x);
            hx * (1.0 + sl * sl).sqrt() * f(i)
        })
        .sum()
}

/// Outcome of the criticality test `|∇u| = Q`, `∂_ν u < 0` on `Γ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CriticalityReport {
    /// `max_Γ ||∇u| - Q|` on the scenario grid.
    pub residual: f64,
    /// Same on the grid with half the resolution.
    pub coarse_residual: f64,
    /// Fitted `C` in `residual ≈ r₀ + C h²`.
    pub h2_constant: f64,
    pub threshold: f64,
    pub flux_negative: bool,
    pub critical: bool,
}

/// `max_Γ ||∇u| - Q|`.
pub fn criticality_residual(scenario: &Scenario, state: &FieldState) -> f64 {
    let d = state.domain();
    (0..d.nx())
        .map(|i| {
            let x = d.x(i);
            let y = d.top().value(x);
            (state.grad_sq.values()[i].sqrt() - scenario.q.q(x, y)).abs()
        })
        .fold(0.0, f64::max)
}

/// Criticality of the base state, with a threshold of ten times the
/// discretization error predicted by a grid-halving fit.
pub fn criticality_check(scenario: &Scenario, state: &FieldState) -> Result<CriticalityReport> {
    let residual = criticality_residual(scenario, state);
    let coarse = scenario.with_grid(scenario.nx / 2, scenario.ny / 2);
    let coarse_state = FieldState::solve(&coarse, 0.0)?;
    let coarse_residual = criticality_residual(&coarse, &coarse_state);
    let h = state.domain().mesh_size();
    let h2_constant = ((coarse_residual - residual) / (3.0 * h * h)).abs();
    let threshold = (10.0 * h2_constant * h * h).max(1e-8);
    let flux_negative = state.flux.values().iter().all(|&v| v < 0.0);
    Ok(CriticalityReport {
        residual,
        coarse_residual,
        h2_constant,
        threshold,
        flux_negative,
        critical: residual <= threshold && flux_negative,
    })
}

/// `∫_Γs (Q² - |∇u_s|²) V dH¹`.
pub fn first_variation(scenario: &Scenario, state: &FieldState, velocity: &BoundaryDensity) -> f64 {
    let d = state.domain();
    state.boundary_integral(|i| {
        let x = d.x(i);
        let q2 = scenario.q.q2(x, d.top().value(x));
        (q2 - state.grad_sq.values()[i]) * velocity.values()[i]
    })
}

/// Bulk and boundary parts of the quadratic form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadraticFormReport {
    pub bulk: f64,
    pub boundary: f64,
    pub total: f64,
}

/// Base state at a verified critical point together with the boundary data the
/// quadratic form needs.
#[derive(Clone, Debug)]
pub struct CriticalPoint {
    pub state: FieldState,
    pub criticality: CriticalityReport,
    /// `Q` on `Γ`.
    pub q_gamma: Vec<f64>,
    /// `∂_ν Q² + 2κQ²` on `Γ`.
    pub coefficient: Vec<f64>,
    pub arclength: Arclength,
}

impl CriticalPoint {
    /// Solves the base state and checks criticality.
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let state = FieldState::solve(scenario, 0.0)?;
        let criticality = criticality_check(scenario, &state)?;
        if !criticality.critical {
            return Err(Error::NotCritical {
                residual: criticality.residual,
                threshold: criticality.threshold,
            });
        }
        let d = state.domain();
        let n = d.nx();
        let mut q_gamma = Vec::with_capacity(n);
        let mut coefficient = Vec::with_capacity(n);
        for i in 0..n {
            let x = d.x(i);
            let y = d.top().value(x);
            let f = frame(d.top(), x);
            let grad = scenario.q.grad_q2(x, y);
            let q2 = scenario.q.q2(x, y);
            q_gamma.push(q2.sqrt());
            coefficient.push(grad[0] * f.nu[0] + grad[1] * f.nu[1] + 2.0 * f.kappa * q2);
        }
        let arclength = Arclength::new(d.top(), n);
        Ok(CriticalPoint {
            state,
            criticality,
            q_gamma,
            coefficient,
            arclength,
        })
    }

    fn n(&self) -> usize {
        self.state.domain().nx()
    }

    /// `Qψ` as a boundary datum.
    fn datum(&self, psi: &BoundaryDensity) -> BoundaryDensity {
        BoundaryDensity::from_periodic(
            (0..self.n())
                .map(|i| self.q_gamma[i] * psi.values()[i])
                .collect(),
        )
    }

    /// `form(ψ)`.
    pub fn form(&self, psi: &BoundaryDensity) -> Result<QuadraticFormReport> {
        if psi.n() != self.n() {
            return Err(Error::GridMismatch {
                expected: self.n() + 1,
                got: psi.values().len(),
            });
        }
        let solver = &self.state.solver;
        let zero = BoundaryDensity::constant(self.n(), 0.0);
        let u = solver.solve(&zero, &self.datum(psi))?;
        let bulk = 2.0 * solver.dirichlet_energy(&u);
        let boundary = self
            .state
            .boundary_integral(|i| self.coefficient[i] * psi.values()[i].powi(2));
        Ok(QuadraticFormReport {
            bulk,
            boundary,
            total: bulk + boundary,
        })
    }

    /// Arclength Fourier modes `0..2K+1` as densities.
    fn modes(&self, k: usize) -> Vec<BoundaryDensity> {
        (0..2 * k + 1).map(|m| self.arclength.mode_density(m)).collect()
    }

    /// `H^{1/2}` Gram diagonal `1 + |κ_k|`.
    fn h_half_gram(&self, k: usize) -> Vec<f64> {
        (0..2 * k + 1)
            .map(|m| 1.0 + self.arclength.wavenumber(m))
            .collect()
    }

    /// Dirichlet Gram matrix `∫ ∇u_m · ∇u_n` of the harmonic extensions of `Qψ_m`
    /// on `domain` (zero on its bottom).
    fn dirichlet_matrix(&self, domain: &StripDomain, modes: &[BoundaryDensity]) -> Result<DMatrix<f64>> {
        let solver = HarmonicSolver::new(domain)?;
        let zero = BoundaryDensity::constant(self.n(), 0.0);
        let reactions = modes
            .par_iter()
            .map(|psi| {
                let u = solver.solve(&zero, &self.datum(psi))?;
                Ok(solver.boundary_reaction(&u).1)
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let m = modes.len();
        let mut a = DMatrix::zeros(m, m);
        for r in 0..m {
            let data = self.datum(&modes[r]);
            for c in 0..m {
                a[(r, c)] = data
                    .periodic()
                    .iter()
                    .zip(&reactions[c])
                    .map(|(p, q)| p * q)
                    .sum::<f64>();
            }
        }
        Ok(a)
    }

    fn boundary_matrix(&self, modes: &[BoundaryDensity]) -> DMatrix<f64> {
        let m = modes.len();
        DMatrix::from_fn(m, m, |r, c| {
            self.state.boundary_integral(|i| {
                self.coefficient[i] * modes[r].values()[i] * modes[c].values()[i]
            })
        })
    }

    /// Smallest eigenvalue of the form against the `H^{1/2}` Gram, bulk on `domain`.
    fn coercivity_on(&self, domain: &StripDomain, k: usize, epsilon: Option<f64>) -> Result<CoercivityEstimate> {
        check_modes(domain, k)?;
        let modes = self.modes(k);
        let a = self.dirichlet_matrix(domain, &modes)? * 2.0 + self.boundary_matrix(&modes);
        let gram = self.h_half_gram(k);
        Ok(CoercivityEstimate::from_matrix(k, a, gram, epsilon))
    }

    fn tube(&self, eps: f64) -> Result<StripDomain> {
        let d = self.state.domain();
        let min_w = d.top().extrema().0;
        if !(eps > 0.0 && eps < min_w) {
            return Err(Error::EpsilonTooLarge { eps, min_w });
        }
        StripDomain::new(d.top().clone(), d.nx(), d.ny())?.with_bottom(d.top().clone().shifted(-eps))
    }
}

/// Highest mode needs at least 4 samples per wavelength.
fn check_modes(domain: &StripDomain, k: usize) -> Result<()> {
    if 4 * k > domain.nx() {
        return Err(Error::InvalidParameter(format!(
            "{k} modes need nx >= {}, got {}",
            4 * k,
            domain.nx()
        )));
    }
    Ok(())
}

/// Generalized eigen-analysis of a quadratic-form matrix.
#[derive(Clone, Debug, Serialize)]
pub struct CoercivityEstimate {
    pub modes: usize,
    pub epsilon: Option<f64>,
    /// Symmetrized form matrix, row-major.
    pub matrix: Vec<Vec<f64>>,
    pub gram: Vec<f64>,
    pub eigenvalue: f64,
    pub eigenvector: Vec<f64>,
    /// Diagonal Rayleigh quotients `A_mm / G_mm`.
    pub mode_quotients: Vec<f64>,
    /// `max |A - Aᵀ| / max |A|` before symmetrization.
    pub asymmetry: f64,
    /// `max_{m≠n} |A_mn| / √(A_mm A_nn)`.
    pub max_offdiag_rel: f64,
    pub warnings: Vec<String>,
}

impl CoercivityEstimate {
    fn from_matrix(k: usize, a: DMatrix<f64>, gram: Vec<f64>, epsilon: Option<f64>) -> Self {
        let m = a.nrows();
        let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
        let asymmetry = (0..m)
            .flat_map(|r| (0..m).map(move |c| (r, c)))
            .map(|(r, c)| (a[(r, c)] - a[(c, r)]).abs())
            .fold(0.0, f64::max)
            / scale;
        let sym = (&a + a.transpose()) * 0.5;
        let mut max_offdiag_rel = 0.0f64;
        for r in 0..m {
            for c in 0..m {
                if r != c {
                    let d = (sym[(r, r)] * sym[(c, c)]).abs().sqrt().max(f64::MIN_POSITIVE);
                    max_offdiag_rel = max_offdiag_rel.max(sym[(r, c)].abs() / d);
                }
            }
        }
        let inv_sqrt: Vec<f64> = gram.iter().map(|g| 1.0 / g.sqrt()).collect();
        let scaled = DMatrix::from_fn(m, m, |r, c| sym[(r, c)] * inv_sqrt[r] * inv_sqrt[c]);
        let eig = SymmetricEigen::new(scaled);
        let (imin, &eigenvalue) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(y.1))
            .expect("non-empty basis");
        let mut eigenvector: Vec<f64> = (0..m).map(|r| eig.eigenvectors[(r, imin)] * inv_sqrt[r]).collect();
        // fix the sign so the output is reproducible
        let lead = eigenvector
            .iter()
            .copied()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if lead < 0.0 {
            eigenvector.iter_mut().for_each(|v| *v = -*v);
        }
        let mut warnings = Vec::new();
        if asymmetry > 1e-6 {
            warnings.push(format!("assembled form asymmetric: {asymmetry:e}"));
        }
        CoercivityEstimate {
            modes: k,
            epsilon,
            mode_quotients: (0..m).map(|r| sym[(r, r)] / gram[r]).collect(),
            matrix: (0..m).map(|r| (0..m).map(|c| sym[(r, c)]).collect()).collect(),
            gram,
            eigenvalue,
            eigenvector,
            asymmetry,
            max_offdiag_rel,
            warnings,
        }
    }
}

/// `form(ψ)` at the scenario's base state.
pub fn second_variation_form(psi: &BoundaryDensity, scenario: &Scenario) -> Result<QuadraticFormReport> {
    CriticalPoint::new(scenario)?.form(psi)
}

/// `C₀` estimate over `2K + 1` arclength modes.
pub fn coercivity_constant(scenario: &Scenario, k: usize) -> Result<CoercivityEstimate> {
    scenario.stability_precheck()?;
    let cp = CriticalPoint::new(scenario)?;
    let domain = cp.state.domain().clone();
    cp.coercivity_on(&domain, k, None)
}

/// `c_ε` estimate with the bulk term restricted to the strip of width `ε` below `Γ`.
pub fn tubular_coercivity(scenario: &Scenario, eps: f64, k: usize) -> Result<CoercivityEstimate> {
    scenario.stability_precheck()?;
    let cp = CriticalPoint::new(scenario)?;
    let tube = cp.tube(eps)?;
    cp.coercivity_on(&tube, k, Some(eps))
}

/// `μ_ε`: least tubular Dirichlet energy of `u_ψ` over `L²(Γ)`-normalized `ψ`.
pub fn mu_epsilon(scenario: &Scenario, eps: f64, k: usize) -> Result<f64> {
    let cp = CriticalPoint::new(scenario)?;
    let tube = cp.tube(eps)?;
    check_modes(&tube, k)?;
    let modes = cp.modes(k);
    let a = cp.dirichlet_matrix(&tube, &modes)?;
    let est = CoercivityEstimate::from_matrix(k, a, vec![1.0; 2 * k + 1], Some(eps));
    Ok(est.eigenvalue)
}

/// Empirical two-sided bound between tubular Dirichlet energy and `‖Qψ‖²_{H^{1/2}}`.
#[derive(Clone, Debug, Serialize)]
pub struct TraceEquivalenceReport {
    pub epsilon: f64,
    pub energies: Vec<f64>,
    pub norms_sq: Vec<f64>,
    pub ratios: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

/// Ratios `∫_{U_ε} |∇u_ψ|² / ‖Qψ‖²_{H^{1/2}(Γ)}` for each `ψ`, with `ε = min w / 2`.
pub fn trace_equivalence_check(scenario: &Scenario, psis: &[BoundaryDensity]) -> Result<TraceEquivalenceReport> {
    let cp = CriticalPoint::new(scenario)?;
    let eps = 0.5 * cp.state.domain().top().extrema().0;
    let tube = cp.tube(eps)?;
    let solver = HarmonicSolver::new(&tube)?;
    let zero = BoundaryDensity::constant(cp.n(), 0.0);
    let mut rep = TraceEquivalenceReport {
        epsilon: eps,
        energies: vec![],
        norms_sq: vec![],
        ratios: vec![],
        lower: f64::INFINITY,
        upper: 0.0,
    };
    for psi in psis {
        let data = cp.datum(psi);
        let u = solver.solve(&zero, &data)?;
        let e = solver.dirichlet_energy(&u);
        let n2 = crate::geometry::h_half_norm_with(&data, &cp.arclength).powi(2);
        rep.energies.push(e);
        rep.norms_sq.push(n2);
        if n2 > 0.0 {
            let r = e / n2;
            rep.ratios.push(r);
            rep.lower = rep.lower.min(r);
            rep.upper = rep.upper.max(r);
        }
    }
    if rep.ratios.is_empty() {
        rep.lower = 0.0;
    }
    Ok(rep)
}

/// First and second derivatives of `F(u_s)` along the flow, with the three
/// integrals of the second variation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VariationReport {
    pub s: f64,
    pub first_variation: f64,
    /// `∫ 2|∇u̇_s|²`
    pub bulk: f64,
    /// `∫ (∂_ν Q² + 2κ_s (∂_ν u_s)²)(X_s·ν_s)²`
    pub boundary: f64,
    /// `∫ (Q² - |∇u_s|²)(Z_s·ν_s + κ_s |X_s|²)`
    pub defect: f64,
    pub second_variation: f64,
    /// Max `|∂ₓg ∂ₛg + ∂ₓh ∂ₛh|` of the supplied maps.
    pub tangential_residual: f64,
}

/// Second variation of `F(u_s)` at `s` along the flow of `maps`.
pub fn second_variation_along_flow(s: f64, scenario: &Scenario, maps: &FlowMaps) -> Result<VariationReport> {
    let state = FieldState::solve(scenario, s)?;
    second_variation_at(scenario, &state, maps)
}

/// As [`second_variation_along_flow`], reusing a solved `u_s`.
///
/// `Γ_s` is the graph of `w + sφ`, so the transported boundary quantities are
/// evaluated at the abscissae of the fitted grid, where
/// `X_s·ν_s = φ/√(1+W'²)` and `Z_s·ν_s = (W''(∂ₛg)² + 2φ'∂ₛg)/√(1+W'²)`.
pub fn second_variation_at(scenario: &Scenario, state: &FieldState, maps: &FlowMaps) -> Result<VariationReport> {
    if (maps.s - state.s).abs() > 1e-15 {
        return Err(Error::InvalidParameter(format!(
            "flow maps at s = {} do not match u_s at s = {}",
            maps.s, state.s
        )));
    }
    let s = state.s;
    let problem = scenario.flow_problem();
    let d = state.domain();
    let n = d.nx();
    let mut v = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut kappa = Vec::with_capacity(n);
    let mut dnu_q2 = Vec::with_capacity(n);
    let mut defect = Vec::with_capacity(n);
    for i in 0..n {
        let x = d.x(i);
        let w = problem.profile.derivs(x);
        let p = problem.bump.derivs(x);
        let sl = w[1] + s * p[1];
        let d2 = w[2] + s * p[2];
        let speed = (1.0 + sl * sl).sqrt();
        let ds_g = problem.partial_s_g_closed(s, x);
        v.push(p[0] / speed);
        z.push((d2 * ds_g * ds_g + 2.0 * p[1] * ds_g) / speed);
        let f = frame(d.top(), x);
        kappa.push(f.kappa);
        let y = d.top().value(x);
        let g = scenario.q.grad_q2(x, y);
        dnu_q2.push(g[0] * f.nu[0] + g[1] * f.nu[1]);
        defect.push(scenario.q.q2(x, y) - state.grad_sq.values()[i]);
    }
    let datum = BoundaryDensity::from_periodic((0..n).map(|i| -v[i] * state.flux.values()[i]).collect());
    let udot = state
        .solver
        .solve(&BoundaryDensity::constant(n, 0.0), &datum)?;
    let bulk = 2.0 * state.solver.dirichlet_energy(&udot);
    let flux = state.flux.values();
    let boundary = state.boundary_integral(|i| (dnu_q2[i] + 2.0 * kappa[i] * flux[i] * flux[i]) * v[i] * v[i]);
    let defect_term = state.boundary_integral(|i| defect[i] * (z[i] + kappa[i] * v[i] * v[i]));
    let first = state.boundary_integral(|i| defect[i] * v[i]);
    Ok(VariationReport {
        s,
        first_variation: first,
        bulk,
        boundary,
        defect: defect_term,
        second_variation: bulk + boundary + defect_term,
        tangential_residual: maps.tangential_residual(),
    })
}
