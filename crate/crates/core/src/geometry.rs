//! Periodic graph profiles, compactly supported bumps and the boundary frame.
//!
//! Everything lives on the period cell `[-1, 1)`. A profile `w` describes the
//! free boundary `Γ = {y = w(x)}`; a bump `φ` supported in `[a, b]` perturbs it
//! to `Γ_s = {y = w(x) + s φ(x)}`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Endpoint, Error, Result};

/// Samples used when scanning a curve for extrema.
const SCAN_SAMPLES: usize = 4096;

/// Maps `x` into the period cell `[-1, 1)`.
pub fn wrap(x: f64) -> f64 {
    (x + 1.0).rem_euclid(2.0) - 1.0
}

/// Dense polynomial in monomial form, `c[0] + c[1] x + ...`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Polynomial { coeffs }
    }

    pub fn constant(c: f64) -> Self {
        Polynomial { coeffs: vec![c] }
    }

    /// `(x - r)^k`
    pub fn power_of_linear(r: f64, k: usize) -> Self {
        let base = Polynomial::new(vec![-r, 1.0]);
        (0..k).fold(Polynomial::constant(1.0), |acc, _| acc.mul(&base))
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        if self.coeffs.is_empty() || other.coeffs.is_empty() {
            return Polynomial::constant(0.0);
        }
        let mut c = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Polynomial { coeffs: c }
    }

    pub fn scale(&self, f: f64) -> Polynomial {
        Polynomial {
            coeffs: self.coeffs.iter().map(|c| c * f).collect(),
        }
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() <= 1 {
            return Polynomial::constant(0.0);
        }
        Polynomial {
            coeffs: self.coeffs[1..]
                .iter()
                .enumerate()
                .map(|(i, c)| c * (i + 1) as f64)
                .collect(),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// Value and first three derivatives at `x`.
    pub fn eval_derivs(&self, x: f64) -> [f64; 4] {
        let mut out = [0.0; 4];
        let mut p = self.clone();
        for o in out.iter_mut() {
            *o = p.eval(x);
            p = p.derivative();
        }
        out
    }
}

/// Description of a profile before validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileSpec {
    /// `w ≡ value`
    Constant { value: f64 },
    /// `w = mean + Σ cos[k-1] cos(kπx) + sin[k-1] sin(kπx)`
    Fourier {
        mean: f64,
        #[serde(default)]
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
    },
    /// Polynomial in `x` on `[-1, 1]`, extended periodically.
    Polynomial { coeffs: Vec<f64> },
    /// Uniform samples at `x_k = -1 + 2k/N`, `k < N`, trigonometrically interpolated.
    Samples { values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
enum ProfileRepr {
    Fourier { mean: f64, cos: Vec<f64>, sin: Vec<f64> },
    Polynomial(Polynomial),
}

/// A validated, strictly positive, 2-periodic C³ profile.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicProfile {
    repr: ProfileRepr,
    min: f64,
    max: f64,
}

/// Builds a profile, checking periodicity (through third derivatives) and positivity.
pub fn make_profile(spec: &ProfileSpec) -> Result<PeriodicProfile> {
    let repr = match spec {
        ProfileSpec::Constant { value } => ProfileRepr::Fourier {
            mean: *value,
            cos: vec![],
            sin: vec![],
        },
        ProfileSpec::Fourier { mean, cos, sin } => ProfileRepr::Fourier {
            mean: *mean,
            cos: cos.clone(),
            sin: sin.clone(),
        },
        ProfileSpec::Polynomial { coeffs } => {
            let p = Polynomial::new(coeffs.clone());
            let left = p.eval_derivs(-1.0);
            let right = p.eval_derivs(1.0);
            let scale = 1.0 + coeffs.iter().map(|c| c.abs()).sum::<f64>();
            for k in 0..4 {
                let mismatch = (left[k] - right[k]).abs();
                if mismatch > 1e-10 * scale * (1 + k * k * k) as f64 {
                    return Err(Error::NotPeriodic {
                        derivative: k,
                        mismatch,
                    });
                }
            }
            ProfileRepr::Polynomial(p)
        }
        ProfileSpec::Samples { values } => {
            if values.len() < 4 {
                return Err(Error::InvalidParameter(
                    "profile needs at least 4 samples".into(),
                ));
            }
            let (mean, cos, sin) = trig_interpolant(values);
            ProfileRepr::Fourier { mean, cos, sin }
        }
    };
    let mut profile = PeriodicProfile {
        repr,
        min: 0.0,
        max: 0.0,
    };
    let (lo, hi) = scan_extrema(|x| profile.value(x));
    if !(lo > 0.0) {
        return Err(Error::NonPositiveProfile { min: lo });
    }
    profile.min = lo;
    profile.max = hi;
    Ok(profile)
}

fn trig_interpolant(values: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let n = values.len();
    let xs: Vec<f64> = (0..n).map(|k| -1.0 + 2.0 * k as f64 / n as f64).collect();
    let mean = values.iter().sum::<f64>() / n as f64;
    let top = n / 2;
    let mut cos = Vec::with_capacity(top);
    let mut sin = Vec::with_capacity(top);
    for m in 1..=top {
        let nyquist = 2 * m == n;
        let w = if nyquist { 1.0 } else { 2.0 } / n as f64;
        let (mut a, mut b) = (0.0, 0.0);
        for (v, x) in values.iter().zip(&xs) {
            let arg = m as f64 * PI * x;
            a += v * arg.cos();
            b += v * arg.sin();
        }
        cos.push(w * a);
        sin.push(if nyquist { 0.0 } else { w * b });
    }
    (mean, cos, sin)
}

fn scan_extrema(f: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..SCAN_SAMPLES {
        let v = f(-1.0 + 2.0 * k as f64 / SCAN_SAMPLES as f64);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

impl PeriodicProfile {
    pub fn constant(value: f64) -> Result<Self> {
        make_profile(&ProfileSpec::Constant { value })
    }

    /// Value and first three derivatives at `x`.
    pub fn derivs(&self, x: f64) -> [f64; 4] {
        let x = wrap(x);
        match &self.repr {
            ProfileRepr::Fourier { mean, cos, sin } => {
                let mut out = [*mean, 0.0, 0.0, 0.0];
                let terms = cos.len().max(sin.len());
                for m in 1..=terms {
                    let a = cos.get(m - 1).copied().unwrap_or(0.0);
                    let b = sin.get(m - 1).copied().unwrap_or(0.0);
                    let k = m as f64 * PI;
                    let (s, c) = (k * x).sin_cos();
                    out[0] += a * c + b * s;
                    out[1] += k * (-a * s + b * c);
                    out[2] += -k * k * (a * c + b * s);
                    out[3] += k * k * k * (a * s - b * c);
                }
                out
            }
            ProfileRepr::Polynomial(p) => p.eval_derivs(x),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.derivs(x)[0]
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn is_flat(&self) -> bool {
        (self.max - self.min).abs() < 1e-14
    }
}

/// A compactly supported perturbation `φ` with support `[a, b] ⊂ (-1, 1)`.
///
/// `φ` and its first three derivatives vanish at both endpoints, so the
/// zero extension is C³ on the whole period cell.
#[derive(Clone, Debug, PartialEq)]
pub struct BumpPerturbation {
    poly: Polynomial,
    a: f64,
    b: f64,
}

/// Validates `poly` on `[a, b]` as a bump.
pub fn make_bump(poly: Polynomial, a: f64, b: f64) -> Result<BumpPerturbation> {
    if !(-1.0 < a && a < b && b < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "bump support [{a}, {b}] must satisfy -1 < a < b < 1"
        )));
    }
    let scale = 1.0
        + poly
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c.abs() * (1.0 + i as f64).powi(3))
            .sum::<f64>();
    for (endpoint, x) in [(Endpoint::Left, a), (Endpoint::Right, b)] {
        let d = poly.eval_derivs(x);
        for (k, v) in d.iter().enumerate() {
            if v.abs() > 1e-11 * scale {
                return Err(Error::EndpointConditionViolated {
                    derivative: k,
                    endpoint,
                    value: *v,
                });
            }
        }
    }
    Ok(BumpPerturbation { poly, a, b })
}

impl BumpPerturbation {
    /// `(x-a)^4 (b-x)^4` times `factor`.
    pub fn from_factor(a: f64, b: f64, factor: &Polynomial) -> Result<Self> {
        let base = Polynomial::power_of_linear(a, 4)
            .mul(&Polynomial::power_of_linear(b, 4))
            .mul(factor);
        make_bump(base, a, b)
    }

    /// Symmetric bump `amplitude · (4(x-a)(b-x)/(b-a)²)^4`, peak value `amplitude`.
    pub fn standard(a: f64, b: f64, amplitude: f64) -> Result<Self> {
        let half = 0.5 * (b - a);
        Self::from_factor(a, b, &Polynomial::constant(amplitude / half.powi(8)))
    }

    pub fn support(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn polynomial(&self) -> &Polynomial {
        &self.poly
    }

    pub fn scaled(&self, f: f64) -> BumpPerturbation {
        BumpPerturbation {
            poly: self.poly.scale(f),
            a: self.a,
            b: self.b,
        }
    }

    /// Value and first three derivatives at `x` (zero off the support).
    pub fn derivs(&self, x: f64) -> [f64; 4] {
        let x = wrap(x);
        if x <= self.a || x >= self.b {
            [0.0; 4]
        } else {
            self.poly.eval_derivs(x)
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.derivs(x)[0]
    }

    fn support_samples(&self, n: usize) -> impl Iterator<Item = f64> + '_ {
        (0..=n).map(move |k| self.a + (self.b - self.a) * k as f64 / n as f64)
    }

    /// `max|φ| + max|φ'| + max|φ''|` over a dense sample of the support.
    pub fn c2_norm(&self) -> f64 {
        let mut m = [0.0f64; 3];
        for x in self.support_samples(2048) {
            let d = self.poly.eval_derivs(x);
            for k in 0..3 {
                m[k] = m[k].max(d[k].abs());
            }
        }
        m.iter().sum()
    }

    /// `max|φ| + max|φ'|`.
    pub fn c1_norm(&self) -> f64 {
        let mut m = [0.0f64; 2];
        for x in self.support_samples(2048) {
            let d = self.poly.eval_derivs(x);
            m[0] = m[0].max(d[0].abs());
            m[1] = m[1].max(d[1].abs());
        }
        m[0] + m[1]
    }

    pub fn sup_norm(&self) -> f64 {
        self.support_samples(2048)
            .map(|x| self.poly.eval(x).abs())
            .fold(0.0, f64::max)
    }

    /// Sampled C^{2,α} surrogate: the C² norm plus the Hölder quotient of `φ''`.
    pub fn c2_alpha_surrogate(&self, alpha: f64) -> f64 {
        let d2 = self.poly.derivative().derivative();
        let xs: Vec<f64> = self.support_samples(256).collect();
        let vals: Vec<f64> = xs.iter().map(|&x| d2.eval(x)).collect();
        let mut holder = 0.0f64;
        for i in 0..xs.len() {
            for j in i + 1..xs.len() {
                let q = (vals[i] - vals[j]).abs() / (xs[j] - xs[i]).powf(alpha);
                holder = holder.max(q);
            }
        }
        self.c2_norm() + holder
    }
}

/// The graph `y = w(x) + s φ(x) + offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphCurve {
    pub profile: PeriodicProfile,
    pub bump: Option<BumpPerturbation>,
    pub s: f64,
    pub offset: f64,
}

impl GraphCurve {
    pub fn new(profile: &PeriodicProfile) -> Self {
        GraphCurve {
            profile: profile.clone(),
            bump: None,
            s: 0.0,
            offset: 0.0,
        }
    }

    /// The perturbed graph `w + s φ`.
    pub fn perturbed(profile: &PeriodicProfile, bump: &BumpPerturbation, s: f64) -> Self {
        GraphCurve {
            profile: profile.clone(),
            bump: Some(bump.clone()),
            s,
            offset: 0.0,
        }
    }

    pub fn shifted(mut self, offset: f64) -> Self {
        self.offset += offset;
        self
    }

    /// Value and first three derivatives.
    pub fn derivs(&self, x: f64) -> [f64; 4] {
        let mut d = self.profile.derivs(x);
        if let Some(bump) = &self.bump {
            if self.s != 0.0 {
                let p = bump.derivs(x);
                for k in 0..4 {
                    d[k] += self.s * p[k];
                }
            }
        }
        d[0] += self.offset;
        d
    }

    pub fn value(&self, x: f64) -> f64 {
        self.derivs(x)[0]
    }

    pub fn slope(&self, x: f64) -> f64 {
        self.derivs(x)[1]
    }

    /// Sampled `(min, max)` of the curve height.
    pub fn extrema(&self) -> (f64, f64) {
        scan_extrema(|x| self.value(x))
    }
}

/// Samples of a function on `Γ` at the uniform abscissae `x_k = -1 + 2k/n`,
/// `k = 0..=n`; the last sample repeats the first.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryDensity {
    values: Vec<f64>,
}

impl BoundaryDensity {
    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Self {
        let mut values: Vec<f64> = (0..n).map(|k| f(grid_x(n, k))).collect();
        values.push(values[0]);
        BoundaryDensity { values }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        BoundaryDensity::from_fn(n, |_| c)
    }

    /// From the `n` periodic samples `x_0..x_{n-1}`.
    pub fn from_periodic(mut values: Vec<f64>) -> Self {
        values.push(values[0]);
        BoundaryDensity { values }
    }

    /// Number of periodic cells.
    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    pub fn x(&self, k: usize) -> f64 {
        grid_x(self.n(), k)
    }

    /// All `n + 1` samples.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The `n` distinct samples.
    pub fn periodic(&self) -> &[f64] {
        &self.values[..self.n()]
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> BoundaryDensity {
        let n = self.n();
        BoundaryDensity::from_periodic((0..n).map(|k| f(grid_x(n, k), self.values[k])).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Abscissa `-1 + 2k/n`.
pub fn grid_x(n: usize, k: usize) -> f64 {
    -1.0 + 2.0 * k as f64 / n as f64
}

/// Unit tangent, outward unit normal and curvature of a graph at a point.
///
/// ```text
/// τ = (1, W') / √(1 + W'²),   ν = (-W', 1) / √(1 + W'²),
/// κ = -W'' / (1 + W'²)^{3/2}, so that ∂_τ ν = κ τ.
/// ```
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Frame {
    pub tau: [f64; 2],
    pub nu: [f64; 2],
    pub kappa: f64,
}

pub fn frame(curve: &GraphCurve, x: f64) -> Frame {
    let d = curve.derivs(x);
    frame_from_derivs(d[1], d[2])
}

pub fn frame_from_derivs(slope: f64, second: f64) -> Frame {
    let q = (1.0 + slope * slope).sqrt();
    Frame {
        tau: [1.0 / q, slope / q],
        nu: [-slope / q, 1.0 / q],
        kappa: -second / (q * q * q),
    }
}

/// Arclength parametrization of a graph sampled at `x_k = -1 + 2k/n`.
#[derive(Clone, Debug)]
pub struct Arclength {
    /// `σ(x_k)`, `k = 0..=n`, with `σ(x_0) = 0`.
    pub sigma: Vec<f64>,
    /// `√(1 + W'(x_k)²)`.
    pub speed: Vec<f64>,
    /// `|Γ|`
    pub length: f64,
}

impl Arclength {
    pub fn new(curve: &GraphCurve, n: usize) -> Self {
        const SUB: usize = 8;
        let hx = 2.0 / n as f64;
        let speed_at = |x: f64| {
            let s = curve.slope(x);
            (1.0 + s * s).sqrt()
        };
        let mut sigma = vec![0.0; n + 1];
        for k in 0..n {
            let x0 = grid_x(n, k);
            let h = hx / SUB as f64;
            let mut acc = speed_at(x0) + speed_at(x0 + hx);
            for m in 1..SUB {
                acc += if m % 2 == 1 { 4.0 } else { 2.0 } * speed_at(x0 + m as f64 * h);
            }
            sigma[k + 1] = sigma[k] + acc * h / 3.0;
        }
        let speed = (0..=n).map(|k| speed_at(grid_x(n, k))).collect();
        let length = sigma[n];
        Arclength {
            sigma,
            speed,
            length,
        }
    }

    /// Real orthonormal Fourier basis in normalized arclength, ordered
    /// `1, cos 1, sin 1, cos 2, ...`, evaluated at sample `k`.
    pub fn mode(&self, m: usize, k: usize) -> f64 {
        let l = self.length;
        if m == 0 {
            return 1.0 / l.sqrt();
        }
        let freq = (m + 1) / 2;
        let arg = 2.0 * PI * freq as f64 * self.sigma[k] / l;
        let amp = (2.0 / l).sqrt();
        if m % 2 == 1 {
            amp * arg.cos()
        } else {
            amp * arg.sin()
        }
    }

    /// Arclength wavenumber `κ_k = 2πk / |Γ|` of basis mode `m`.
    pub fn wavenumber(&self, m: usize) -> f64 {
        2.0 * PI * ((m + 1) / 2) as f64 / self.length
    }

    /// Mode `m` as a density.
    pub fn mode_density(&self, m: usize) -> BoundaryDensity {
        let n = self.sigma.len() - 1;
        BoundaryDensity::from_periodic((0..n).map(|k| self.mode(m, k)).collect())
    }
}

fn check_len(psi: &BoundaryDensity, n: usize) -> Result<()> {
    if psi.n() != n {
        return Err(Error::GridMismatch {
            expected: n + 1,
            got: psi.values.len(),
        });
    }
    Ok(())
}

/// `∫_Γ ψ² dH¹` by the periodic trapezoid rule.
pub fn l2_norm_gamma(psi: &BoundaryDensity, curve: &GraphCurve) -> f64 {
    let arc = Arclength::new(curve, psi.n());
    l2_norm_with(psi, &arc).sqrt()
}

fn l2_norm_with(psi: &BoundaryDensity, arc: &Arclength) -> f64 {
    let n = psi.n();
    let hx = 2.0 / n as f64;
    (0..n).map(|k| hx * psi.values[k].powi(2) * arc.speed[k]).sum()
}

/// Fourier `H^{1/2}(Γ)` norm: `(Σ_k (1 + |κ_k|) |c_k|²)^{1/2}` with `c_k` the
/// coefficients in the L²(Γ)-orthonormal arclength basis.
pub fn h_half_norm(psi: &BoundaryDensity, curve: &GraphCurve) -> f64 {
    let arc = Arclength::new(curve, psi.n());
    h_half_norm_with(psi, &arc)
}

pub fn h_half_norm_with(psi: &BoundaryDensity, arc: &Arclength) -> f64 {
    let n = psi.n();
    let hx = 2.0 / n as f64;
    let l2 = l2_norm_with(psi, arc);
    let mut extra = 0.0;
    for freq in 1..=(n - 1) / 2 {
        let (mut c, mut s) = (0.0, 0.0);
        for k in 0..n {
            let w = hx * psi.values[k] * arc.speed[k];
            c += w * arc.mode(2 * freq - 1, k);
            s += w * arc.mode(2 * freq, k);
        }
        extra += arc.wavenumber(2 * freq - 1) * (c * c + s * s);
    }
    (l2 + extra).sqrt()
}

/// Checked variant of [`h_half_norm`] for a density expected on `n` cells.
pub fn h_half_norm_checked(psi: &BoundaryDensity, curve: &GraphCurve, n: usize) -> Result<f64> {
    check_len(psi, n)?;
    Ok(h_half_norm(psi, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cosine_profile(eps: f64) -> PeriodicProfile {
        make_profile(&ProfileSpec::Fourier {
            mean: 1.0,
            cos: vec![eps],
            sin: vec![],
        })
        .unwrap()
    }

    #[test]
    fn profile_rejects_nonpositive() {
        let err = make_profile(&ProfileSpec::Fourier {
            mean: 1.0,
            cos: vec![1.2],
            sin: vec![],
        })
        .unwrap_err();
        assert!(matches!(err, Error::NonPositiveProfile { .. }));
    }

    #[test]
    fn polynomial_profile_periodicity() {
        // 2 - x^2 has mismatched first derivative at ±1
        let err = make_profile(&ProfileSpec::Polynomial {
            coeffs: vec![2.0, 0.0, -1.0],
        })
        .unwrap_err();
        assert!(matches!(err, Error::NotPeriodic { derivative: 1, .. }));
        // (x^2 - 1)^4 + 1 matches through the third derivative
        let p = Polynomial::power_of_linear(1.0, 4)
            .mul(&Polynomial::power_of_linear(-1.0, 4))
            .coeffs;
        let mut c = p.clone();
        c[0] += 1.0;
        assert!(make_profile(&ProfileSpec::Polynomial { coeffs: c }).is_ok());
    }

    #[test]
    fn samples_interpolate_trig_polynomial() {
        let f = |x: f64| 1.0 + 0.2 * (PI * x).cos() - 0.1 * (2.0 * PI * x).sin();
        let values: Vec<f64> = (0..16).map(|k| f(grid_x(16, k))).collect();
        let p = make_profile(&ProfileSpec::Samples { values }).unwrap();
        for x in [-0.9, -0.3, 0.17, 0.8] {
            assert_relative_eq!(p.value(x), f(x), epsilon = 1e-13);
        }
    }

    #[test]
    fn bump_endpoint_conditions() {
        let ok = BumpPerturbation::standard(-0.5, 0.5, 0.1).unwrap();
        assert_relative_eq!(ok.value(0.0), 0.1, epsilon = 1e-14);
        assert_eq!(ok.value(0.7), 0.0);
        let bad = Polynomial::power_of_linear(-0.5, 3).mul(&Polynomial::power_of_linear(0.5, 4));
        let err = make_bump(bad, -0.5, 0.5).unwrap_err();
        assert_eq!(
            err,
            Error::EndpointConditionViolated {
                derivative: 3,
                endpoint: Endpoint::Left,
                value: match err {
                    Error::EndpointConditionViolated { value, .. } => value,
                    _ => unreachable!(),
                }
            }
        );
    }

    #[test]
    fn frame_flat_and_cosine() {
        let flat = GraphCurve::new(&PeriodicProfile::constant(1.0).unwrap());
        let f = frame(&flat, 0.3);
        assert_eq!(f.tau, [1.0, 0.0]);
        assert_eq!(f.nu, [0.0, 1.0]);
        assert_eq!(f.kappa, 0.0);
        let c = GraphCurve::new(&cosine_profile(0.1));
        // w''(0) = -0.1 π², so the outward-normal curvature is +0.1 π²
        assert_relative_eq!(frame(&c, 0.0).kappa, 0.1 * PI * PI, epsilon = 1e-13);
    }

    #[test]
    fn frame_derivative_matches_curvature() {
        let c = GraphCurve::new(&cosine_profile(0.2));
        for x in [-0.7, -0.2, 0.1, 0.45] {
            let h = 1e-5;
            let (fm, fp, f0) = (frame(&c, x - h), frame(&c, x + h), frame(&c, x));
            let speed = (1.0 + c.slope(x).powi(2)).sqrt();
            for i in 0..2 {
                let dnu = (fp.nu[i] - fm.nu[i]) / (2.0 * h) / speed;
                assert_relative_eq!(dnu, f0.kappa * f0.tau[i], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn norms_flat_examples() {
        let flat = GraphCurve::new(&PeriodicProfile::constant(1.0).unwrap());
        let c = BoundaryDensity::constant(64, 3.0);
        assert_relative_eq!(h_half_norm(&c, &flat), 3.0 * 2f64.sqrt(), epsilon = 1e-12);
        let cosine = BoundaryDensity::from_fn(64, |x| (PI * x).cos());
        assert_relative_eq!(h_half_norm(&cosine, &flat).powi(2), 1.0 + PI, epsilon = 1e-12);
        assert_relative_eq!(l2_norm_gamma(&cosine, &flat), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn arclength_basis_is_orthonormal() {
        let curve = GraphCurve::new(&cosine_profile(0.2));
        let arc = Arclength::new(&curve, 256);
        let hx = 2.0 / 256.0;
        for m in 0..7 {
            for l in 0..7 {
                let ip: f64 = (0..256)
                    .map(|k| hx * arc.mode(m, k) * arc.mode(l, k) * arc.speed[k])
                    .sum();
                let expect = if m == l { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-9, "modes {m},{l}: {ip}");
            }
        }
    }
}
