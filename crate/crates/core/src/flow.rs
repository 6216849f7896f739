//! The flow of diffeomorphisms driven by a bump.
//!
//! Each point `(x, w(x))` of `Γ` is transported along the characteristic
//!
//! ```text
//! ξ' = -w'(ξ) φ(ξ) - (η - w(ξ)) φ'(ξ),    η' = φ(ξ),
//! ξ(0) = x,  η(0) = w(x),
//! ```
//!
//! until the hitting time `t₀(s, x)` at which it reaches `Γ_s = {y = w + sφ}`.
//! Then `g(s, x) = ξ(t₀)` and `h(s, x) = η(t₀)`. The trajectory stays normal to
//! the level sets of `(η - w(ξ))/φ(ξ)`, so the transported points move along
//! orthogonal trajectories of the family `Γ_s` and the velocity has no
//! tangential part.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryDensity, BumpPerturbation, PeriodicProfile};

/// `|φ(x)|` below which `x` is treated as a zero of the bump.
pub const ZERO_TOL: f64 = 1e-14;
/// Default number of RK4 steps over `[0, s]`.
pub const DEFAULT_STEPS: usize = 256;

/// State `(ξ, η, ∂ₓξ, ∂ₓη)`.
type State = [f64; 4];

/// Profile, bump and time-stepping resolution.
#[derive(Clone, Debug)]
pub struct FlowProblem {
    pub profile: PeriodicProfile,
    pub bump: BumpPerturbation,
    pub steps: usize,
}

/// How a hitting time was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum HitKind {
    /// `s = 0` or `φ(x) = 0`: the point does not move.
    Immediate,
    /// `φ'(x) = w'(x) = 0`: the trajectory is vertical and `t₀ = s`.
    Vertical,
    /// Event detection on the integrated trajectory.
    Event,
}

/// Hitting time and the transported state there.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Hit {
    pub t0: f64,
    pub xi: f64,
    pub eta: f64,
    pub dxi: f64,
    pub deta: f64,
    pub kind: HitKind,
}

/// Sampled characteristic.
#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub x: f64,
    pub t: Vec<f64>,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub dxi: Vec<f64>,
    pub deta: Vec<f64>,
}

impl FlowProblem {
    pub fn new(profile: &PeriodicProfile, bump: &BumpPerturbation) -> Self {
        FlowProblem {
            profile: profile.clone(),
            bump: bump.clone(),
            steps: DEFAULT_STEPS,
        }
    }

    pub fn with_steps(mut self, steps: usize) -> Result<Self> {
        if steps < 4 {
            return Err(Error::StepCountTooSmall(steps));
        }
        self.steps = steps;
        Ok(self)
    }

    fn rhs(&self, y: &State) -> State {
        let [xi, eta, a, b] = *y;
        let w = self.profile.derivs(xi);
        let p = self.bump.derivs(xi);
        let lift = eta - w[0];
        [
            -w[1] * p[0] - lift * p[1],
            p[0],
            -(w[2] * p[0] + lift * p[2]) * a - p[1] * b,
            p[1] * a,
        ]
    }

    fn rk4(&self, y: &State, dt: f64) -> State {
        let add = |u: &State, k: &State, c: f64| -> State {
            [u[0] + c * k[0], u[1] + c * k[1], u[2] + c * k[2], u[3] + c * k[3]]
        };
        let k1 = self.rhs(y);
        let k2 = self.rhs(&add(y, &k1, 0.5 * dt));
        let k3 = self.rhs(&add(y, &k2, 0.5 * dt));
        let k4 = self.rhs(&add(y, &k3, dt));
        let mut out = *y;
        for i in 0..4 {
            out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }

    fn initial(&self, x: f64) -> State {
        let w = self.profile.derivs(x);
        [x, w[0], 1.0, w[1]]
    }

    /// `(η - w(ξ)) / φ(ξ)`, the level of the family `Γ_s` through `(ξ, η)`.
    fn level(&self, y: &State) -> f64 {
        (y[1] - self.profile.value(y[0])) / self.bump.value(y[0])
    }

    /// `W'_s = w' + sφ'` at `x`.
    pub fn slope_s(&self, s: f64, x: f64) -> f64 {
        self.profile.derivs(x)[1] + s * self.bump.derivs(x)[1]
    }

    /// Fixed-step RK4 integration of the characteristic from `x` over `[0, t_end]`.
    pub fn integrate_characteristic(&self, x: f64, t_end: f64, steps: usize) -> Result<Trajectory> {
        if steps < 4 {
            return Err(Error::StepCountTooSmall(steps));
        }
        let dt = t_end / steps as f64;
        let mut y = self.initial(x);
        let mut tr = Trajectory {
            x,
            t: Vec::with_capacity(steps + 1),
            xi: Vec::with_capacity(steps + 1),
            eta: Vec::with_capacity(steps + 1),
            dxi: Vec::with_capacity(steps + 1),
            deta: Vec::with_capacity(steps + 1),
        };
        for k in 0..=steps {
            if k > 0 {
                y = self.rk4(&y, dt);
            }
            tr.t.push(k as f64 * dt);
            tr.xi.push(y[0]);
            tr.eta.push(y[1]);
            tr.dxi.push(y[2]);
            tr.deta.push(y[3]);
        }
        Ok(tr)
    }

    /// First time `t₀ ∈ [0, s]` with `η = w(ξ) + sφ(ξ)`.
    pub fn hitting_time(&self, s: f64, x: f64) -> Result<Hit> {
        let w = self.profile.derivs(x);
        let p = self.bump.derivs(x);
        if s == 0.0 || p[0].abs() < ZERO_TOL {
            return Ok(Hit {
                t0: 0.0,
                xi: x,
                eta: w[0],
                dxi: 1.0,
                deta: w[1],
                kind: HitKind::Immediate,
            });
        }
        if p[1] == 0.0 && w[1] == 0.0 {
            // ξ ≡ x, η = w + tφ, and the variational equation decouples
            let decay = (-(w[2] * p[0] * s + 0.5 * p[0] * p[2] * s * s)).exp();
            return Ok(Hit {
                t0: s,
                xi: x,
                eta: w[0] + s * p[0],
                dxi: decay,
                deta: 0.0,
                kind: HitKind::Vertical,
            });
        }
        let dt = s / self.steps as f64;
        let max_steps = self.steps + self.steps / 10 + 2;
        let mut y = self.initial(x);
        for k in 0..max_steps {
            let next = self.rk4(&y, dt);
            if self.level(&next) >= s {
                let (mut lo, mut hi) = (0.0, dt);
                let mut mid_state = next;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    mid_state = self.rk4(&y, mid);
                    let r = self.level(&mid_state) - s;
                    if r.abs() <= 1e-14 * s.max(1.0) || hi - lo <= 1e-16 {
                        lo = mid;
                        hi = mid;
                        break;
                    }
                    if r < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let tau = 0.5 * (lo + hi);
                let t0 = (k as f64 * dt + tau).clamp(0.0, s);
                return Ok(Hit {
                    t0,
                    xi: mid_state[0],
                    eta: mid_state[1],
                    dxi: mid_state[2],
                    deta: mid_state[3],
                    kind: HitKind::Event,
                });
            }
            y = next;
        }
        Err(Error::NoHitDetected {
            s,
            x,
            horizon: max_steps as f64 * dt,
        })
    }

    /// `∂ₛg = -φ(g) W'_s(g) / (1 + W'_s(g)²)`.
    pub fn partial_s_g_closed(&self, s: f64, g: f64) -> f64 {
        let phi = self.bump.value(g);
        if phi == 0.0 {
            return 0.0;
        }
        let sl = self.slope_s(s, g);
        -phi * sl / (1.0 + sl * sl)
    }

    /// `∂ₓg(s, x₀) = √(1 + w'²) / √(1 + (w' + sφ')²)` at a zero `x₀` of `φ`.
    pub fn partial_x_g_at_zero(&self, s: f64, x0: f64) -> Result<f64> {
        let p = self.bump.derivs(x0);
        if p[0].abs() >= ZERO_TOL {
            return Err(Error::NotAZero { x: x0, value: p[0] });
        }
        let w1 = self.profile.derivs(x0)[1];
        let sl = w1 + s * p[1];
        Ok((1.0 + w1 * w1).sqrt() / (1.0 + sl * sl).sqrt())
    }

    /// One-sided limit of `t₀(s, ·)` at a zero `x₀` of `φ`:
    /// `[arctan(w' + sφ') - arctan(w')]/φ'`, or `s/(1 + w'²)` when `φ' = 0`.
    pub fn t0_limit_at_zero(&self, s: f64, x0: f64) -> Result<f64> {
        let p = self.bump.derivs(x0);
        if p[0].abs() >= ZERO_TOL {
            return Err(Error::NotAZero { x: x0, value: p[0] });
        }
        Ok(self.t0_closed_form(s, x0))
    }

    /// `T₀(s, x) = [arctan(w' + sφ') - arctan(w')]/φ'`, or `s/(1 + w'²)` when `φ'(x) = 0`.
    pub fn t0_closed_form(&self, s: f64, x: f64) -> f64 {
        t0_formula(s, self.profile.derivs(x)[1], self.bump.derivs(x)[1])
    }

    /// `|t₀(s, x) - ∫₀ˢ dr / (1 + W'_r(g(r, x))²)|` with composite Simpson on `nodes` intervals.
    pub fn t0_implicit_residual(&self, s: f64, x: f64, nodes: usize) -> Result<f64> {
        if self.bump.value(x).abs() < ZERO_TOL {
            return Err(Error::UndefinedAtZero { x });
        }
        let nodes = nodes.max(2) + nodes % 2;
        let hr = s / nodes as f64;
        let integrand = |r: f64| -> Result<f64> {
            let g = self.hitting_time(r, x)?.xi;
            let sl = self.slope_s(r, g);
            Ok(1.0 / (1.0 + sl * sl))
        };
        let vals = (0..=nodes)
            .into_par_iter()
            .map(|k| integrand(k as f64 * hr))
            .collect::<Result<Vec<f64>>>()?;
        let integral = simpson(&vals, hr);
        Ok((self.hitting_time(s, x)?.t0 - integral).abs())
    }

    /// Max over even nodes of the trajectory of
    /// `|∫₀ᵗ (ξ'² + η'²)/φ(ξ)² dr - (η - w(ξ))/φ(ξ)|`.
    pub fn conservation_residual(&self, tr: &Trajectory) -> Result<f64> {
        if self.bump.value(tr.x).abs() < ZERO_TOL {
            return Err(Error::UndefinedAtZero { x: tr.x });
        }
        let n = tr.t.len();
        let f: Vec<f64> = (0..n)
            .map(|k| {
                let d = self.rhs(&[tr.xi[k], tr.eta[k], 1.0, 0.0]);
                let phi = self.bump.value(tr.xi[k]);
                (d[0] * d[0] + d[1] * d[1]) / (phi * phi)
            })
            .collect();
        let mut acc = 0.0;
        let mut worst = 0.0f64;
        let mut k = 0;
        while k + 2 < n {
            let h = tr.t[k + 1] - tr.t[k];
            acc += h / 3.0 * (f[k] + 4.0 * f[k + 1] + f[k + 2]);
            k += 2;
            let lvl = self.level(&[tr.xi[k], tr.eta[k], 0.0, 0.0]);
            worst = worst.max((acc - lvl).abs());
        }
        Ok(worst)
    }

    /// `g, h` and their first derivatives at `(s, x)`.
    pub fn column(&self, s: f64, x: f64) -> Result<FlowColumn> {
        let hit = self.hitting_time(s, x)?;
        let g = hit.xi;
        let sl = self.slope_s(s, g);
        let dx_g = match hit.kind {
            HitKind::Immediate if s == 0.0 => 1.0,
            HitKind::Immediate => self.partial_x_g_at_zero(s, x)?,
            _ => (hit.dxi + sl * hit.deta) / (1.0 + sl * sl),
        };
        let ds_g = self.partial_s_g_closed(s, g);
        let phi_g = self.bump.value(g);
        Ok(FlowColumn {
            x,
            t0: hit.t0,
            g,
            h: hit.eta,
            dx_g,
            ds_g,
            dx_h: sl * dx_g,
            ds_h: sl * ds_g + phi_g,
            dxi: hit.dxi,
            deta: hit.deta,
            kind: hit.kind,
        })
    }

    /// Flow maps at a fixed `s` over `x_grid`.
    pub fn flow_maps(&self, s: f64, x_grid: &[f64]) -> Result<FlowMaps> {
        let cols = x_grid
            .par_iter()
            .map(|&x| self.column(s, x))
            .collect::<Result<Vec<_>>>()?;
        Ok(FlowMaps { s, columns: cols })
    }

    /// `∂ₛ²g` from differentiating the closed form of `∂ₛg` along the flow.
    pub fn partial_ss_g(&self, s: f64, g: f64) -> f64 {
        let p = self.bump.derivs(g);
        if p[0] == 0.0 {
            return 0.0;
        }
        let w = self.profile.derivs(g);
        let sl = w[1] + s * p[1];
        let d2 = w[2] + s * p[2];
        let q = 1.0 + sl * sl;
        let f = -p[0] * sl / q;
        // F(s, g) = -φ(g) S / (1 + S²) with S = W'_s(g)
        let df_ds = -p[0] * p[1] * (1.0 - sl * sl) / (q * q);
        let df_dg = -p[1] * sl / q - p[0] * d2 * (1.0 - sl * sl) / (q * q);
        df_ds + df_dg * f
    }
}

fn simpson(vals: &[f64], h: f64) -> f64 {
    let n = vals.len() - 1;
    let mut acc = vals[0] + vals[n];
    for (k, v) in vals.iter().enumerate().take(n).skip(1) {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * v;
    }
    acc * h / 3.0
}

/// `g, h`, their first partials and the raw variational state at one `(s, x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FlowColumn {
    pub x: f64,
    pub t0: f64,
    pub g: f64,
    pub h: f64,
    pub dx_g: f64,
    pub ds_g: f64,
    pub dx_h: f64,
    pub ds_h: f64,
    pub dxi: f64,
    pub deta: f64,
    pub kind: HitKind,
}

/// Flow maps at one `s`.
#[derive(Clone, Debug, Serialize)]
pub struct FlowMaps {
    pub s: f64,
    pub columns: Vec<FlowColumn>,
}

impl FlowMaps {
    /// Max of `|∂ₓg ∂ₛg + ∂ₓh ∂ₛh|`.
    pub fn tangential_residual(&self) -> f64 {
        self.columns
            .iter()
            .map(|c| (c.dx_g * c.ds_g + c.dx_h * c.ds_h).abs())
            .fold(0.0, f64::max)
    }

    /// Max of `|h - w(g) - sφ(g)|`.
    pub fn graph_defect(&self, problem: &FlowProblem) -> f64 {
        self.columns
            .iter()
            .map(|c| (c.h - problem.profile.value(c.g) - self.s * problem.bump.value(c.g)).abs())
            .fold(0.0, f64::max)
    }

    /// Max of `|∂ₛg| - |φ(g)|` (non-positive when the bound holds).
    pub fn ds_g_bound_excess(&self, problem: &FlowProblem) -> f64 {
        self.columns
            .iter()
            .map(|c| c.ds_g.abs() - problem.bump.value(c.g).abs())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `X_s · ν_s` at the transported points: `φ(g)/√(1 + W'_s(g)²)`.
    pub fn normal_velocity(&self, problem: &FlowProblem) -> Vec<f64> {
        self.columns
            .iter()
            .map(|c| {
                let sl = problem.slope_s(self.s, c.g);
                problem.bump.value(c.g) / (1.0 + sl * sl).sqrt()
            })
            .collect()
    }

    /// `Φ̈_s · (DΦ_s)^{-T} ν` at `(x, w(x))`:
    /// `[W''_s(g) (∂ₛg)² + 2φ'(g) ∂ₛg] / √(1 + w'(x)²)`.
    pub fn acceleration_normal(&self, problem: &FlowProblem) -> Vec<f64> {
        self.columns
            .iter()
            .map(|c| {
                let p = problem.bump.derivs(c.g);
                let d2 = problem.profile.derivs(c.g)[2] + self.s * p[2];
                let w1 = problem.profile.derivs(c.x)[1];
                (d2 * c.ds_g * c.ds_g + 2.0 * p[1] * c.ds_g) / (1.0 + w1 * w1).sqrt()
            })
            .collect()
    }

    /// Normal velocity as a density, when the grid is the uniform boundary grid.
    pub fn normal_velocity_density(&self, problem: &FlowProblem) -> BoundaryDensity {
        let v = self.normal_velocity(problem);
        let n = v.len() - 1;
        BoundaryDensity::from_periodic(v[..n].to_vec())
    }
}

/// Sup-norm bounds on the spatial derivatives of the flow for one bump scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DerivativeBounds {
    pub lambda: f64,
    pub bump_c2_norm: f64,
    pub sup_dx_g: f64,
    pub sup_dx_h: f64,
    pub sup_dx_xi: f64,
    pub sup_dx_eta: f64,
    pub sup_displacement: f64,
    pub displacement_bound: f64,
    pub sign_preserved: bool,
}

/// Sups of `|∂ₓg - 1|`, `|∂ₓh - w'|`, `|∂ₓξ - 1|`, `|∂ₓη - w'|` over `s ∈ (0, 1]`
/// and `x` in the support, for the bumps `λφ`.
pub fn derivative_bounds_check(
    profile: &PeriodicProfile,
    bump: &BumpPerturbation,
    lambdas: &[f64],
    steps: usize,
) -> Result<Vec<DerivativeBounds>> {
    let (a, b) = bump.support();
    let xs: Vec<f64> = (1..64).map(|k| a + (b - a) * k as f64 / 64.0).collect();
    let s_list = [0.25, 0.5, 0.75, 1.0];
    let w_c1 = {
        let mut m = [0.0f64; 2];
        for k in 0..2048 {
            let d = profile.derivs(-1.0 + 2.0 * k as f64 / 2048.0);
            m[0] = m[0].max(d[0].abs());
            m[1] = m[1].max(d[1].abs());
        }
        m[0] + m[1]
    };
    lambdas
        .iter()
        .map(|&lambda| {
            let scaled = bump.scaled(lambda);
            let pb = FlowProblem::new(profile, &scaled).with_steps(steps)?;
            let mut out = DerivativeBounds {
                lambda,
                bump_c2_norm: scaled.c2_norm(),
                sup_dx_g: 0.0,
                sup_dx_h: 0.0,
                sup_dx_xi: 0.0,
                sup_dx_eta: 0.0,
                sup_displacement: 0.0,
                displacement_bound: 3.0 * (w_c1 + scaled.sup_norm()) * scaled.c1_norm(),
                sign_preserved: true,
            };
            for &s in &s_list {
                let rows = xs
                    .par_iter()
                    .map(|&x| -> Result<(f64, f64, f64, f64, f64, bool)> {
                        let col = pb.column(s, x)?;
                        let w1 = profile.derivs(x)[1];
                        let tr = pb.integrate_characteristic(x, col.t0, steps)?;
                        let phi_x = scaled.value(x);
                        let mut sx = 0.0f64;
                        let mut se = 0.0f64;
                        let mut sd = 0.0f64;
                        let mut sign = true;
                        for k in 0..tr.t.len() {
                            sx = sx.max((tr.dxi[k] - 1.0).abs());
                            se = se.max((tr.deta[k] - w1).abs());
                            sd = sd.max((tr.xi[k] - x).abs());
                            sign &= scaled.value(tr.xi[k]) * phi_x > 0.0;
                        }
                        Ok(((col.dx_g - 1.0).abs(), (col.dx_h - w1).abs(), sx, se, sd, sign))
                    })
                    .collect::<Result<Vec<_>>>()?;
                for (g, h, sx, se, sd, sign) in rows {
                    out.sup_dx_g = out.sup_dx_g.max(g);
                    out.sup_dx_h = out.sup_dx_h.max(h);
                    out.sup_dx_xi = out.sup_dx_xi.max(sx);
                    out.sup_dx_eta = out.sup_dx_eta.max(se);
                    out.sup_displacement = out.sup_displacement.max(sd);
                    out.sign_preserved &= sign;
                }
            }
            Ok(out)
        })
        .collect()
}

fn t0_formula(s: f64, w1: f64, p1: f64) -> f64 {
    if p1 != 0.0 {
        ((w1 + s * p1).atan() - w1.atan()) / p1
    } else {
        s / (1.0 + w1 * w1)
    }
}

/// Piecewise-quintic C² cutoff in `y`: 0 below `L`, 1 on `[L+δ₀, M+2-δ₀]`, 0 above `M+2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub l: f64,
    pub m: f64,
    pub delta0: f64,
}

impl Cutoff {
    /// `L = 0.4 min w`, `M = max w + 0.5`, `δ₀ = min{1, L}/2`.
    pub fn default_for(profile: &PeriodicProfile) -> Self {
        let l = 0.4 * profile.min();
        Cutoff {
            l,
            m: profile.max() + 0.5,
            delta0: 0.5 * l.min(1.0),
        }
    }

    /// `(λ, λ', λ'')` at `y`.
    pub fn eval(&self, y: f64) -> (f64, f64, f64) {
        let step = |u: f64| -> (f64, f64, f64) {
            let u2 = u * u;
            (
                u2 * u * (10.0 - 15.0 * u + 6.0 * u2),
                30.0 * u2 * (1.0 - u) * (1.0 - u),
                60.0 * u * (1.0 - u) * (1.0 - 2.0 * u),
            )
        };
        let d = self.delta0;
        let top = self.m + 2.0;
        if y <= self.l || y >= top {
            (0.0, 0.0, 0.0)
        } else if y < self.l + d {
            let (v, dv, ddv) = step((y - self.l) / d);
            (v, dv / d, ddv / (d * d))
        } else if y > top - d {
            let (v, dv, ddv) = step((top - y) / d);
            (v, -dv / d, ddv / (d * d))
        } else {
            (1.0, 0.0, 0.0)
        }
    }
}

/// The family `Φ_s = λ(y) Ψ_s + (1 - λ(y)) Id`, `Ψ_s(x, y) = (g(s, x), h(s, x) + y - w(x))`.
#[derive(Clone, Debug)]
pub struct DiffeoFamily {
    pub problem: FlowProblem,
    pub cutoff: Cutoff,
}

/// Checks the cutoff against the profile and bump and returns the family.
pub fn build_diffeomorphism(problem: &FlowProblem, cutoff: Option<Cutoff>) -> Result<DiffeoFamily> {
    let c = cutoff.unwrap_or_else(|| Cutoff::default_for(&problem.profile));
    let (w_lo, w_hi) = (problem.profile.min(), problem.profile.max());
    if !(c.l > 0.0 && 2.0 * c.l < w_lo) {
        return Err(Error::CutoffInfeasible(format!(
            "need 0 < 2L < min w (L = {}, min w = {w_lo})",
            c.l
        )));
    }
    if !(c.m > w_hi) {
        return Err(Error::CutoffInfeasible(format!(
            "need M > max w (M = {}, max w = {w_hi})",
            c.m
        )));
    }
    if !(c.delta0 > 0.0 && c.delta0 < c.l.min(1.0)) {
        return Err(Error::CutoffInfeasible(format!(
            "need 0 < δ₀ < min(1, L) (δ₀ = {})",
            c.delta0
        )));
    }
    let (a, b) = problem.bump.support();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..=2048 {
        let x = a + (b - a) * k as f64 / 2048.0;
        let w = problem.profile.value(x);
        let p = problem.bump.value(x);
        lo = lo.min(w).min(w + p);
        hi = hi.max(w).max(w + p);
    }
    lo = lo.min(w_lo);
    hi = hi.max(w_hi);
    if lo < c.l + c.delta0 || hi > c.m + 2.0 - c.delta0 {
        return Err(Error::CutoffInfeasible(format!(
            "graphs of w + sφ leave the plateau [{}, {}] of the cutoff",
            c.l + c.delta0,
            c.m + 2.0 - c.delta0
        )));
    }
    Ok(DiffeoFamily {
        problem: problem.clone(),
        cutoff: c,
    })
}

impl DiffeoFamily {
    /// `Φ_s(x, y)` given the flow column at `(s, x)`.
    pub fn eval_with(&self, col: &FlowColumn, y: f64) -> [f64; 2] {
        let (lam, _, _) = self.cutoff.eval(y);
        let w = self.problem.profile.value(col.x);
        [col.x + lam * (col.g - col.x), y + lam * (col.h - w)]
    }

    /// `DΦ_s(x, y)` given the flow column at `(s, x)`.
    pub fn jacobian_with(&self, col: &FlowColumn, y: f64) -> [[f64; 2]; 2] {
        let (lam, dlam, _) = self.cutoff.eval(y);
        let w = self.problem.profile.derivs(col.x);
        [
            [1.0 + lam * (col.dx_g - 1.0), dlam * (col.g - col.x)],
            [lam * (col.dx_h - w[1]), 1.0 + dlam * (col.h - w[0])],
        ]
    }

    pub fn eval(&self, s: f64, x: f64, y: f64) -> Result<[f64; 2]> {
        Ok(self.eval_with(&self.problem.column(s, x)?, y))
    }

    pub fn jacobian(&self, s: f64, x: f64, y: f64) -> Result<[[f64; 2]; 2]> {
        Ok(self.jacobian_with(&self.problem.column(s, x)?, y))
    }

    /// Samples `Φ_s` on an `nx × ny` grid of `[-1, 1) × [0, M + 2.5]`, checking
    /// injectivity, identity at `s = 0`, support and the image of `Γ`.
    pub fn admissibility_report(&self, s_list: &[f64], nx: usize, ny: usize) -> Result<AdmissibilityReport> {
        let (a, b) = self.problem.bump.support();
        let c = self.cutoff;
        let y_top = c.m + 2.5;
        let xs: Vec<f64> = (0..nx).map(|i| -1.0 + 2.0 * i as f64 / nx as f64).collect();
        let ys: Vec<f64> = (0..=ny).map(|j| y_top * j as f64 / ny as f64).collect();
        let mut rep = AdmissibilityReport {
            cutoff: c,
            max_jacobian_defect: 0.0,
            worst_point: [0.0, 0.0, 0.0],
            identity_defect: 0.0,
            support_leak: 0.0,
            graph_defect: 0.0,
            c2_proxy_coarse: 0.0,
            c2_proxy_fine: 0.0,
            admissible: false,
        };
        let mut s_all: Vec<f64> = s_list.to_vec();
        if !s_all.contains(&0.0) {
            s_all.push(0.0);
        }
        for &s in &s_all {
            let maps = self.problem.flow_maps(s, &xs)?;
            rep.graph_defect = rep.graph_defect.max(maps.graph_defect(&self.problem));
            for col in &maps.columns {
                for &y in &ys {
                    let m = self.jacobian_with(col, y);
                    let norm = spectral_norm([[m[0][0] - 1.0, m[0][1]], [m[1][0], m[1][1] - 1.0]]);
                    if norm > rep.max_jacobian_defect {
                        rep.max_jacobian_defect = norm;
                        rep.worst_point = [s, col.x, y];
                    }
                    let p = self.eval_with(col, y);
                    let disp = (p[0] - col.x).abs().max((p[1] - y).abs());
                    if s == 0.0 {
                        rep.identity_defect = rep.identity_defect.max(disp);
                    }
                    let inside = col.x > a && col.x < b && y > c.l && y < c.m + 2.0;
                    if !inside {
                        rep.support_leak = rep.support_leak.max(disp);
                    }
                }
            }
        }
        let s_max = s_list.iter().copied().fold(0.0, f64::max);
        let (pc, pf) = self.c2_proxy(s_max, 0.02)?;
        rep.c2_proxy_coarse = pc;
        rep.c2_proxy_fine = pf;
        if rep.max_jacobian_defect >= 1.0 {
            let [_, x, y] = rep.worst_point;
            return Err(Error::NotInjective {
                norm: rep.max_jacobian_defect,
                x,
                y,
            });
        }
        rep.admissible = rep.identity_defect == 0.0
            && rep.support_leak == 0.0
            && rep.graph_defect <= 1e-8
            && (pc - pf).abs() <= 0.1 * pf.max(1e-3);
        Ok(rep)
    }

    /// Max second difference of `Φ_s` over the support box at spacing `h` and `h/2`.
    fn c2_proxy(&self, s: f64, h: f64) -> Result<(f64, f64)> {
        let (a, b) = self.problem.bump.support();
        let c = self.cutoff;
        let probe = |h: f64| -> Result<f64> {
            let nxp = ((b - a) / h).ceil() as usize;
            let nyp = ((c.m + 2.0 - c.l) / h).ceil() as usize;
            let xs: Vec<f64> = (0..=nxp + 2).map(|i| a - h + i as f64 * h).collect();
            let maps = self.problem.flow_maps(s, &xs)?;
            let mut worst = 0.0f64;
            for i in 1..xs.len() - 1 {
                for j in 1..nyp {
                    let y = c.l + j as f64 * h;
                    let f = |ii: usize, yy: f64| self.eval_with(&maps.columns[ii], yy);
                    let (cm, c0, cp) = (f(i - 1, y), f(i, y), f(i + 1, y));
                    let (dm, dp) = (f(i, y - h), f(i, y + h));
                    for k in 0..2 {
                        let dxx = (cm[k] - 2.0 * c0[k] + cp[k]) / (h * h);
                        let dyy = (dm[k] - 2.0 * c0[k] + dp[k]) / (h * h);
                        worst = worst.max(dxx.abs()).max(dyy.abs());
                    }
                }
            }
            Ok(worst)
        };
        Ok((probe(h)?, probe(0.5 * h)?))
    }
}

/// Spectral norm of a 2×2 matrix.
pub fn spectral_norm(m: [[f64; 2]; 2]) -> f64 {
    let s = m[0][0].powi(2) + m[0][1].powi(2) + m[1][0].powi(2) + m[1][1].powi(2);
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    (0.5 * (s + (s * s - 4.0 * det * det).max(0.0).sqrt())).sqrt()
}

/// Result of [`DiffeoFamily::admissibility_report`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub cutoff: Cutoff,
    pub max_jacobian_defect: f64,
    /// `(s, x, y)` where `|DΦ_s - I|` peaks.
    pub worst_point: [f64; 3],
    pub identity_defect: f64,
    pub support_leak: f64,
    pub graph_defect: f64,
    pub c2_proxy_coarse: f64,
    pub c2_proxy_fine: f64,
    pub admissible: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Polynomial, ProfileSpec, make_profile};
    use approx::assert_relative_eq;

    fn wavy() -> PeriodicProfile {
        make_profile(&ProfileSpec::Fourier {
            mean: 1.0,
            cos: vec![0.1],
            sin: vec![0.05],
        })
        .unwrap()
    }

    fn problem() -> FlowProblem {
        let bump = BumpPerturbation::from_factor(-0.6, 0.4, &Polynomial::new(vec![2.0, 1.0]))
            .unwrap();
        let bump = bump.scaled(0.2 / bump.sup_norm());
        FlowProblem::new(&wavy(), &bump)
    }

    #[test]
    fn immediate_and_vertical_cases() {
        let flat = PeriodicProfile::constant(1.0).unwrap();
        let bump = BumpPerturbation::standard(-0.5, 0.5, 0.2).unwrap();
        let p = FlowProblem::new(&flat, &bump);
        let h = p.hitting_time(0.0, 0.1).unwrap();
        assert_eq!((h.t0, h.kind), (0.0, HitKind::Immediate));
        let h = p.hitting_time(0.7, 0.8).unwrap();
        assert_eq!((h.t0, h.xi), (0.0, 0.8));
        let h = p.hitting_time(0.5, 0.0).unwrap();
        assert_eq!(h.kind, HitKind::Vertical);
        assert_eq!(h.t0, 0.5);
        assert_relative_eq!(h.eta, 1.1, epsilon = 1e-14);
        assert!(p.with_steps(3).is_err());
    }

    #[test]
    fn generic_hit_lands_on_graph() {
        let p = problem();
        for &s in &[0.25, 0.5, 1.0] {
            let maps = p.flow_maps(s, &[-0.5, -0.2, 0.0, 0.3]).unwrap();
            assert!(maps.graph_defect(&p) < 1e-10);
            for c in &maps.columns {
                assert!(c.t0 >= 0.0 && c.t0 <= s);
            }
            assert!(maps.tangential_residual() < 1e-12);
            assert!(maps.ds_g_bound_excess(&p) <= 0.0);
        }
    }

    #[test]
    fn s_derivative_matches_finite_difference() {
        let p = problem();
        let (s, x, ds) = (0.6, -0.25, 1e-4);
        let g = |s: f64| p.hitting_time(s, x).unwrap().xi;
        let fd = (g(s + ds) - g(s - ds)) / (2.0 * ds);
        let col = p.column(s, x).unwrap();
        assert_relative_eq!(col.ds_g, fd, epsilon = 1e-7);
        let fd2 = (g(s + ds) - 2.0 * g(s) + g(s - ds)) / (ds * ds);
        assert_relative_eq!(p.partial_ss_g(s, col.g), fd2, epsilon = 1e-4);
    }

    #[test]
    fn x_derivative_matches_finite_difference() {
        let p = problem();
        let (s, x, dx) = (0.8, 0.1, 1e-5);
        let g = |x: f64| p.hitting_time(s, x).unwrap().xi;
        let fd = (g(x + dx) - g(x - dx)) / (2.0 * dx);
        assert_relative_eq!(p.column(s, x).unwrap().dx_g, fd, epsilon = 1e-7);
    }

    #[test]
    fn conservation_and_implicit_t0() {
        let p = problem();
        let hit = p.hitting_time(1.0, -0.3).unwrap();
        let tr = p.integrate_characteristic(-0.3, hit.t0, 256).unwrap();
        assert!(p.conservation_residual(&tr).unwrap() < 1e-8);
        assert!(p.t0_implicit_residual(1.0, -0.3, 256).unwrap() < 1e-8);
        assert!(matches!(
            p.t0_implicit_residual(1.0, 0.9, 256),
            Err(Error::UndefinedAtZero { .. })
        ));
    }

    #[test]
    fn t0_closed_form_branches() {
        assert_eq!(t0_formula(0.7, 0.0, 0.0), 0.7);
        assert_relative_eq!(t0_formula(1.0, 1.0, 1.0), 2f64.atan() - 1f64.atan(), epsilon = 1e-15);
        assert_relative_eq!(t0_formula(1.0, 1.0, 1.0), 0.32175, epsilon = 1e-5);
    }

    #[test]
    fn zero_formulas() {
        let p = problem();
        assert!(matches!(
            p.partial_x_g_at_zero(0.5, 0.0),
            Err(Error::NotAZero { .. })
        ));
        let flat = PeriodicProfile::constant(1.0).unwrap();
        let bump = BumpPerturbation::standard(-0.5, 0.5, 0.2).unwrap();
        let q = FlowProblem::new(&flat, &bump);
        assert_eq!(q.partial_x_g_at_zero(0.5, 0.7).unwrap(), 1.0);
        assert_eq!(q.t0_limit_at_zero(0.5, -0.5).unwrap(), 0.5);
    }

    #[test]
    fn cutoff_shape() {
        let c = Cutoff {
            l: 0.4,
            m: 1.5,
            delta0: 0.2,
        };
        assert_eq!(c.eval(0.3).0, 0.0);
        assert_eq!(c.eval(1.0).0, 1.0);
        assert_eq!(c.eval(3.6).0, 0.0);
        let mut max_d = 0.0f64;
        for k in 0..4000 {
            let y = 4.0 * k as f64 / 4000.0;
            max_d = max_d.max(c.eval(y).1.abs());
            let h = 1e-6;
            let fd = (c.eval(y + h).0 - c.eval(y - h).0) / (2.0 * h);
            assert!((fd - c.eval(y).1).abs() < 1e-5);
        }
        assert!(max_d <= 2.0 / c.delta0);
    }

    fn small_problem() -> FlowProblem {
        let p = problem();
        let bump = p.bump.scaled(0.25);
        FlowProblem::new(&p.profile, &bump)
    }

    #[test]
    fn diffeomorphism_admissible() {
        let fam = build_diffeomorphism(&small_problem(), None).unwrap();
        let rep = fam.admissibility_report(&[0.5, 1.0], 32, 24).unwrap();
        assert!(rep.admissible, "{rep:?}");
        let large = build_diffeomorphism(&problem(), None).unwrap();
        assert!(matches!(
            large.admissibility_report(&[1.0], 32, 24),
            Err(Error::NotInjective { .. })
        ));
        let bad = Cutoff {
            l: 0.6,
            m: 1.6,
            delta0: 0.2,
        };
        assert!(matches!(
            build_diffeomorphism(&problem(), Some(bad)),
            Err(Error::CutoffInfeasible(_))
        ));
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let fam = build_diffeomorphism(&problem(), None).unwrap();
        let (s, x, y, h) = (0.7, -0.1, 0.55, 1e-6);
        let j = fam.jacobian(s, x, y).unwrap();
        let px = |x: f64| fam.eval(s, x, y).unwrap();
        let py = |y: f64| fam.eval(s, x, y).unwrap();
        for k in 0..2 {
            assert_relative_eq!(j[k][0], (px(x + h)[k] - px(x - h)[k]) / (2.0 * h), epsilon = 1e-6);
            assert_relative_eq!(j[k][1], (py(y + h)[k] - py(y - h)[k]) / (2.0 * h), epsilon = 1e-6);
        }
    }
}
