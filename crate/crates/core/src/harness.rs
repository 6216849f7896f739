//! Scenarios and end-to-end experiments: energy along the flow, a
//! finite-difference check of the second variation, and the minimality
//! comparison against random perturbations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elliptic::{energy, volume_integral, StripDomain};
use crate::error::{Error, Result};
use crate::flow::{build_diffeomorphism, AdmissibilityReport, Cutoff, FlowProblem, DEFAULT_STEPS};
use crate::geometry::{
    grid_x, BoundaryDensity, BumpPerturbation, GraphCurve, PeriodicProfile, Polynomial,
};
use crate::variation::{coercivity_constant, second_variation_at, FieldState};

/// Bottom datum `u*` at `y = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatumSpec {
    Constant { value: f64 },
    /// `mean + amplitude · cos(kπx)`
    Cosine { mean: f64, amplitude: f64, k: u32 },
}

impl DatumSpec {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            DatumSpec::Constant { value } => value,
            DatumSpec::Cosine { mean, amplitude, k } => {
                mean + amplitude * (k as f64 * std::f64::consts::PI * x).cos()
            }
        }
    }

    pub fn min(&self) -> f64 {
        match *self {
            DatumSpec::Constant { value } => value,
            DatumSpec::Cosine { mean, amplitude, k } => {
                if k == 0 {
                    mean + amplitude
                } else {
                    mean - amplitude.abs()
                }
            }
        }
    }
}

/// The pressure-like coefficient `Q`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QField {
    Constant { value: f64 },
    /// `Q = √((q - 2gy)₊)`
    WaterWave { q: f64, g: f64 },
    /// `Q = √((base + slope·y)₊)`
    Affine { base: f64, slope: f64 },
}

impl QField {
    pub fn q2(&self, _x: f64, y: f64) -> f64 {
        match *self {
            QField::Constant { value } => value * value,
            QField::WaterWave { q, g } => (q - 2.0 * g * y).max(0.0),
            QField::Affine { base, slope } => (base + slope * y).max(0.0),
        }
    }

    pub fn q(&self, x: f64, y: f64) -> f64 {
        self.q2(x, y).sqrt()
    }

    /// `∇Q²`, zero where the unclipped expression is negative (one-sided on its zero set).
    pub fn grad_q2(&self, _x: f64, y: f64) -> [f64; 2] {
        match *self {
            QField::Constant { .. } => [0.0, 0.0],
            QField::WaterWave { q, g } if q - 2.0 * g * y >= 0.0 => [0.0, -2.0 * g],
            QField::Affine { base, slope } if base + slope * y >= 0.0 => [0.0, slope],
            _ => [0.0, 0.0],
        }
    }
}

/// Everything an experiment needs: geometry, data, perturbation and resolution.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub profile: PeriodicProfile,
    pub bottom: DatumSpec,
    pub q: QField,
    pub bump: BumpPerturbation,
    pub nx: usize,
    pub ny: usize,
    pub flow_steps: usize,
    pub cutoff: Option<Cutoff>,
    pub modes: usize,
    /// Hölder exponent of the C^{2,α} surrogate norm.
    pub alpha: f64,
}

impl Scenario {
    pub fn new(
        name: &str,
        profile: PeriodicProfile,
        bottom: DatumSpec,
        q: QField,
        bump: BumpPerturbation,
        nx: usize,
        ny: usize,
    ) -> Result<Self> {
        if !(bottom.min() > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bottom datum must be positive (min {})",
                bottom.min()
            )));
        }
        if nx < 8 || ny < 8 {
            return Err(Error::GridTooSmall { nx, ny });
        }
        Ok(Scenario {
            name: name.to_string(),
            profile,
            bottom,
            q,
            bump,
            nx,
            ny,
            flow_steps: DEFAULT_STEPS,
            cutoff: None,
            modes: 32,
            alpha: 0.5,
        })
    }

    /// `w ≡ 1`, `u* ≡ 1`, `Q ≡ 1` with a small symmetric bump on `[-0.5, 0.5]`.
    pub fn flat_critical(nx: usize, ny: usize) -> Result<Self> {
        Scenario::new(
            "flat-critical",
            PeriodicProfile::constant(1.0)?,
            DatumSpec::Constant { value: 1.0 },
            QField::Constant { value: 1.0 },
            BumpPerturbation::standard(-0.5, 0.5, 0.03)?,
            nx,
            ny,
        )
    }

    pub fn with_grid(&self, nx: usize, ny: usize) -> Scenario {
        Scenario {
            nx: nx.max(8),
            ny: ny.max(8),
            ..self.clone()
        }
    }

    pub fn with_bump(&self, bump: BumpPerturbation) -> Scenario {
        Scenario {
            bump,
            ..self.clone()
        }
    }

    pub fn base_curve(&self) -> GraphCurve {
        GraphCurve::new(&self.profile)
    }

    /// Graph domain of `w + sφ`.
    pub fn domain(&self, s: f64) -> Result<StripDomain> {
        StripDomain::new(GraphCurve::perturbed(&self.profile, &self.bump, s), self.nx, self.ny)
    }

    pub fn bottom_density(&self, n: usize) -> BoundaryDensity {
        BoundaryDensity::from_fn(n, |x| self.bottom.eval(x))
    }

    pub fn flow_problem(&self) -> FlowProblem {
        FlowProblem {
            profile: self.profile.clone(),
            bump: self.bump.clone(),
            steps: self.flow_steps,
        }
    }

    /// `Q² > 0` on `Γ` and on the graph of `w + φ`.
    pub fn stability_precheck(&self) -> Result<()> {
        let mut min_q2 = f64::INFINITY;
        for k in 0..2048 {
            let x = -1.0 + 2.0 * k as f64 / 2048.0;
            let w = self.profile.value(x);
            for y in [w, w + self.bump.value(x)] {
                min_q2 = min_q2.min(self.q.q2(x, y));
            }
        }
        if !(min_q2 > 0.0) {
            return Err(Error::QminViolated { min_q2 });
        }
        Ok(())
    }

    /// `F(u_s)` with `u_s` solved on the graph domain of `w + sφ`.
    pub fn energy_at(&self, s: f64) -> Result<f64> {
        let st = FieldState::solve(self, s)?;
        Ok(energy(&st.solver, &st.u, |x, y| self.q.q2(x, y)).total)
    }
}

/// Water-wave scenario `Q = √((q - 2gy)₊)` over `profile`, with the flat-strip
/// critical datum `u* = √(q - 2g·mean w)` (or 1 when that is not positive).
pub fn water_wave_scenario(q: f64, g: f64, profile: PeriodicProfile, nx: usize, ny: usize) -> Result<Scenario> {
    let mean = (0..1024)
        .map(|k| profile.value(grid_x(1024, k)))
        .sum::<f64>()
        / 1024.0;
    let top = q - 2.0 * g * mean;
    let ustar = if top > 0.0 { top.sqrt() } else { 1.0 };
    Scenario::new(
        "water-wave",
        profile,
        DatumSpec::Constant { value: ustar },
        QField::WaterWave { q, g },
        BumpPerturbation::standard(-0.5, 0.5, 0.03)?,
        nx,
        ny,
    )
}

/// `F(u_s)` and its second derivative along the flow.
#[derive(Clone, Debug, Serialize)]
pub struct FlowEnergyTrace {
    pub s: Vec<f64>,
    pub energy: Vec<f64>,
    /// `d²F/ds²` from the second-variation formula.
    pub d2_analytic: Vec<f64>,
    /// `d²F/ds²` from second differences of `energy` (one-sided at the ends).
    pub d2_fd: Vec<f64>,
    /// `dF/ds` from the first-variation formula.
    pub first_variation: Vec<f64>,
    /// `sup_Γs |Q² - |∇u_s|²|`.
    pub defect_sup: Vec<f64>,
    pub tangential_residual: Vec<f64>,
}

/// Solves `u_s` for each `s` and evaluates `F`, both variations and the pressure defect.
pub fn energy_along_flow(scenario: &Scenario, s_grid: &[f64]) -> Result<FlowEnergyTrace> {
    if s_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("s samples must increase".into()));
    }
    let problem = scenario.flow_problem();
    let xs: Vec<f64> = (0..=scenario.nx).map(|i| grid_x(scenario.nx, i)).collect();
    let rows = s_grid
        .par_iter()
        .map(|&s| -> Result<(f64, f64, f64, f64, f64)> {
            let st = FieldState::solve(scenario, s)?;
            let e = energy(&st.solver, &st.u, |x, y| scenario.q.q2(x, y)).total;
            let maps = problem.flow_maps(s, &xs)?;
            let var = second_variation_at(scenario, &st, &maps)?;
            let d = st.domain();
            let defect = (0..d.nx())
                .map(|i| {
                    let x = d.x(i);
                    (scenario.q.q2(x, d.top().value(x)) - st.grad_sq.values()[i]).abs()
                })
                .fold(0.0, f64::max);
            Ok((e, var.second_variation, var.first_variation, defect, var.tangential_residual))
        })
        .collect::<Result<Vec<_>>>()?;
    let energy: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let d2_fd = second_differences(s_grid, &energy);
    Ok(FlowEnergyTrace {
        s: s_grid.to_vec(),
        d2_analytic: rows.iter().map(|r| r.1).collect(),
        first_variation: rows.iter().map(|r| r.2).collect(),
        defect_sup: rows.iter().map(|r| r.3).collect(),
        tangential_residual: rows.iter().map(|r| r.4).collect(),
        energy,
        d2_fd,
    })
}

fn second_differences(s: &[f64], f: &[f64]) -> Vec<f64> {
    let n = s.len();
    if n < 4 {
        return vec![f64::NAN; n];
    }
    let ds = (s[n - 1] - s[0]) / (n - 1) as f64;
    let h2 = ds * ds;
    (0..n)
        .map(|i| {
            if i == 0 {
                (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h2
            } else if i == n - 1 {
                (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) / h2
            } else {
                (f[i + 1] - 2.0 * f[i] + f[i - 1]) / h2
            }
        })
        .collect()
}

/// Default `s` samples for [`energy_along_flow`].
pub fn default_s_grid() -> Vec<f64> {
    (0..9).map(|k| k as f64 / 8.0).collect()
}

/// Default `s` samples for [`fd_second_derivative_check`].
pub fn default_fd_s_grid() -> Vec<f64> {
    (0..5).map(|k| 0.025 * k as f64).collect()
}

/// One interior sample of the finite-difference check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FdSample {
    pub s: f64,
    pub analytic: f64,
    pub central: f64,
    /// `(4 D_Δs - D_2Δs)/3` where both stencils fit, otherwise `NaN`.
    pub richardson: f64,
    pub relative_deviation: f64,
}

/// Result of [`fd_second_derivative_check`].
#[derive(Clone, Debug, Serialize)]
pub struct FdCheckReport {
    pub samples: Vec<FdSample>,
    /// Max relative deviation over Richardson-extrapolated samples.
    pub max_relative_deviation: f64,
    /// `(F(s₁) - F(s₀))/Δs`.
    pub first_difference: f64,
    /// `|first_difference| / |F(s₀)|`.
    pub first_difference_ratio: f64,
}

/// Compares second differences of `F(u_s)` with the analytic second variation.
pub fn fd_second_derivative_check(trace: &FlowEnergyTrace) -> Result<FdCheckReport> {
    let n = trace.s.len();
    if n < 5 {
        return Err(Error::TooFewSamples { needed: 5, got: n });
    }
    let ds = trace.s[1] - trace.s[0];
    if trace
        .s
        .windows(2)
        .any(|w| ((w[1] - w[0]) - ds).abs() > 1e-9 * ds.abs().max(1.0))
    {
        return Err(Error::InvalidParameter("s samples must be uniformly spaced".into()));
    }
    let f = &trace.energy;
    let scale = f.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let rel = |est: f64, exact: f64| -> f64 {
        let err = (est - exact).abs();
        if exact.abs() <= 1e-14 * scale && err <= 1e-9 * scale {
            0.0
        } else {
            err / exact.abs().max(f64::MIN_POSITIVE)
        }
    };
    let mut samples = Vec::new();
    let mut max_dev = 0.0f64;
    for i in 1..n - 1 {
        let central = (f[i + 1] - 2.0 * f[i] + f[i - 1]) / (ds * ds);
        let analytic = trace.d2_analytic[i];
        let richardson = if i >= 2 && i + 2 < n {
            let wide = (f[i + 2] - 2.0 * f[i] + f[i - 2]) / (4.0 * ds * ds);
            (4.0 * central - wide) / 3.0
        } else {
            f64::NAN
        };
        let dev = if richardson.is_nan() {
            rel(central, analytic)
        } else {
            let d = rel(richardson, analytic);
            max_dev = max_dev.max(d);
            d
        };
        samples.push(FdSample {
            s: trace.s[i],
            analytic,
            central,
            richardson,
            relative_deviation: dev,
        });
    }
    let first_difference = (f[1] - f[0]) / ds;
    Ok(FdCheckReport {
        samples,
        max_relative_deviation: max_dev,
        first_difference,
        first_difference_ratio: first_difference.abs() / f[0].abs(),
    })
}

/// Random bump `±(x-a)⁴(b-x)⁴ p(x)` with `p` a random quadratic, scaled to a
/// C^{2,α} surrogate norm of `target`.
pub fn random_bump(rng: &mut ChaCha8Rng, target: f64, alpha: f64) -> Result<BumpPerturbation> {
    let c: f64 = rng.gen_range(-0.3..0.3);
    let r: f64 = rng.gen_range(0.3..0.6);
    let (a, b) = (c - r, c + r);
    let c1: f64 = rng.gen_range(-0.5..0.5);
    let c2: f64 = rng.gen_range(-0.5..0.5);
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    // 1 + c1 t + c2 t² with t = (x - c)/r
    let factor = Polynomial::new(vec![
        1.0 - c1 * c / r + c2 * c * c / (r * r),
        c1 / r - 2.0 * c2 * c / (r * r),
        c2 / (r * r),
    ]);
    let bump = BumpPerturbation::from_factor(a, b, &factor)?;
    let norm = bump.c2_alpha_surrogate(alpha);
    Ok(bump.scaled(sign * target / norm))
}

/// One perturbation of the minimality experiment.
#[derive(Clone, Debug, Serialize)]
pub struct MinimalityRow {
    pub index: usize,
    pub support: (f64, f64),
    pub peak: f64,
    pub surrogate_norm: f64,
    pub admissibility: Option<AdmissibilityReport>,
    pub energy: f64,
    pub margin: f64,
}

/// Result of [`minimality_experiment`].
#[derive(Clone, Debug, Serialize)]
pub struct MinimalityReport {
    pub base_energy: f64,
    pub coercivity: f64,
    pub h2_constant: f64,
    pub tolerance: f64,
    pub rows: Vec<MinimalityRow>,
    pub all_within_tolerance: bool,
    pub strictly_positive: usize,
}

/// Compares `F(u)` with `F(u₁)` on the graph domains of `w + φ` for random bumps.
pub fn minimality_experiment(
    scenario: &Scenario,
    bumps: &[BumpPerturbation],
) -> Result<MinimalityReport> {
    let coarse = scenario.with_grid(scenario.nx / 2, scenario.ny / 2);
    let est = coercivity_constant(&coarse, scenario.modes.min(16).min(coarse.nx / 4))?;
    if !(est.eigenvalue > 0.0) {
        return Err(Error::NotCoercive {
            eigenvalue: est.eigenvalue,
        });
    }
    let base_energy = scenario.energy_at(0.0)?;
    let coarse_energy = coarse.energy_at(0.0)?;
    let h = scenario.domain(0.0)?.mesh_size();
    let h2_constant = ((coarse_energy - base_energy) / (3.0 * h * h)).abs().max(1.0);
    let tolerance = h2_constant * h * h;
    let rows = bumps
        .par_iter()
        .enumerate()
        .map(|(index, bump)| -> Result<MinimalityRow> {
            let sc = scenario.with_bump(bump.clone());
            let problem = sc.flow_problem();
            let admissibility = build_diffeomorphism(&problem, sc.cutoff)
                .and_then(|fam| fam.admissibility_report(&[0.5, 1.0], 32, 24))
                .ok();
            let e = sc.energy_at(1.0)?;
            let peak = (0..=512)
                .map(|k| {
                    let (a, b) = bump.support();
                    bump.value(a + (b - a) * k as f64 / 512.0)
                })
                .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            Ok(MinimalityRow {
                index,
                support: bump.support(),
                peak,
                surrogate_norm: bump.c2_alpha_surrogate(scenario.alpha),
                admissibility,
                energy: e,
                margin: e - base_energy,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let all_within_tolerance = rows.iter().all(|r| r.margin >= -tolerance);
    let strictly_positive = rows.iter().filter(|r| r.margin > 0.0).count();
    Ok(MinimalityReport {
        base_energy,
        coercivity: est.eigenvalue,
        h2_constant,
        tolerance,
        rows,
        all_within_tolerance,
        strictly_positive,
    })
}

/// `count` random bumps from `seed`.
pub fn random_bumps(count: usize, seed: u64, target: f64, alpha: f64) -> Result<Vec<BumpPerturbation>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_bump(&mut rng, target, alpha)).collect()
}

/// `F(u_s)` recomputed on the reference domain through `Φ_s`:
/// `∫_{Ω₊} (|∇u_s|² + Q²)∘Φ_s · det DΦ_s`, returned as `(dirichlet, volume)`.
pub fn pulled_back_energy(scenario: &Scenario, state: &FieldState, refine: usize) -> Result<(f64, f64)> {
    let fam = build_diffeomorphism(&scenario.flow_problem(), scenario.cutoff)?;
    let mx = scenario.nx * refine;
    let my = scenario.ny * refine;
    let xs: Vec<f64> = (0..mx).map(|i| -1.0 + (2.0 * i as f64 + 1.0) / mx as f64).collect();
    let maps = fam.problem.flow_maps(state.s, &xs)?;
    let hx = 2.0 / mx as f64;
    let cols = maps
        .columns
        .par_iter()
        .map(|col| {
            let w = scenario.profile.value(col.x);
            let hy = w / my as f64;
            let mut dir = 0.0;
            let mut vol = 0.0;
            for j in 0..my {
                let y = (j as f64 + 0.5) * hy;
                let p = fam.eval_with(col, y);
                let m = fam.jacobian_with(col, y);
                let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                if let Some(gr) = state.solver.gradient_at(&state.u, p[0], p[1]) {
                    dir += (gr[0] * gr[0] + gr[1] * gr[1]) * det;
                }
                vol += scenario.q.q2(p[0], p[1]) * det;
            }
            (dir * hx * hy, vol * hx * hy)
        })
        .collect::<Vec<_>>();
    Ok(cols
        .iter()
        .fold((0.0, 0.0), |acc, c| (acc.0 + c.0, acc.1 + c.1)))
}

/// Volume term of `F` on the fitted domain, for comparison with [`pulled_back_energy`].
pub fn fitted_volume(scenario: &Scenario, state: &FieldState) -> f64 {
    volume_integral(state.domain(), |x, y| scenario.q.q2(x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn water_wave_presets() {
        let sc = water_wave_scenario(4.0, 1.0, PeriodicProfile::constant(1.0).unwrap(), 32, 16).unwrap();
        assert_relative_eq!(sc.q.q(0.0, 1.0), 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(sc.q.grad_q2(0.3, 1.0), [0.0, -2.0]);
        assert!(sc.stability_precheck().is_ok());
        let deg = water_wave_scenario(2.0, 1.0, PeriodicProfile::constant(1.0).unwrap(), 32, 16).unwrap();
        assert!(matches!(deg.stability_precheck(), Err(Error::QminViolated { .. })));
        assert_eq!(deg.q.grad_q2(0.0, 1.0), [0.0, -2.0]);
        assert!(deg.energy_at(0.0).unwrap().is_finite());
    }

    #[test]
    fn rejects_nonpositive_datum() {
        let p = PeriodicProfile::constant(1.0).unwrap();
        let b = BumpPerturbation::standard(-0.5, 0.5, 0.03).unwrap();
        assert!(Scenario::new("x", p, DatumSpec::Constant { value: 0.0 }, QField::Constant { value: 1.0 }, b, 16, 16).is_err());
    }

    #[test]
    fn zero_bump_trace_is_constant() {
        let sc = Scenario::flat_critical(32, 16).unwrap();
        let sc = sc.with_bump(sc.bump.scaled(0.0));
        let tr = energy_along_flow(&sc, &default_fd_s_grid()).unwrap();
        assert!(tr.energy.iter().all(|e| (e - tr.energy[0]).abs() < 1e-13));
        let rep = fd_second_derivative_check(&tr).unwrap();
        assert_eq!(rep.max_relative_deviation, 0.0);
    }

    #[test]
    fn too_few_samples() {
        let tr = FlowEnergyTrace {
            s: vec![0.0, 0.1],
            energy: vec![1.0, 1.0],
            d2_analytic: vec![0.0; 2],
            d2_fd: vec![0.0; 2],
            first_variation: vec![0.0; 2],
            defect_sup: vec![0.0; 2],
            tangential_residual: vec![0.0; 2],
        };
        assert_eq!(
            fd_second_derivative_check(&tr).unwrap_err(),
            Error::TooFewSamples { needed: 5, got: 2 }
        );
    }

    #[test]
    fn random_bumps_hit_target_norm() {
        let bumps = random_bumps(4, 7, 0.5, 0.5).unwrap();
        for b in &bumps {
            assert_relative_eq!(b.c2_alpha_surrogate(0.5), 0.5, epsilon = 1e-9);
        }
        let again = random_bumps(4, 7, 0.5, 0.5).unwrap();
        assert_eq!(bumps, again);
    }
}
