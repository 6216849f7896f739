//! Acceptance suite: one PASS/FAIL line per criterion, at 256×128 with K = 32.
//!
//! Run with `cargo test -p fbstab-cli --test acceptance`.

use std::f64::consts::PI;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use fbstab::elliptic::{solve_harmonic, GridField, StripDomain};
use fbstab::flow::{derivative_bounds_check, FlowProblem};
use fbstab::geometry::{
    frame, grid_x, make_profile, BoundaryDensity, BumpPerturbation, GraphCurve, PeriodicProfile, Polynomial,
    ProfileSpec,
};
use fbstab::harness::{
    default_fd_s_grid, energy_along_flow, fd_second_derivative_check, minimality_experiment, random_bumps,
    water_wave_scenario, Scenario,
};
use fbstab::variation::{
    coercivity_constant, criticality_residual, mu_epsilon, second_variation_form, FieldState,
};
use fbstab::Error;
use fbstab_cli::{run, Command, Overrides};

const NX: usize = 256;
const NY: usize = 128;
const K: usize = 32;

type Outcome = Result<(bool, String), Error>;

fn wavy() -> PeriodicProfile {
    make_profile(&ProfileSpec::Fourier {
        mean: 1.0,
        cos: vec![0.1],
        sin: vec![0.05],
    })
    .unwrap()
}

fn flat() -> Scenario {
    let mut sc = Scenario::flat_critical(NX, NY).unwrap();
    sc.modes = K;
    sc
}

fn peak(bump: BumpPerturbation, amplitude: f64) -> BumpPerturbation {
    let s = amplitude / bump.sup_norm();
    bump.scaled(s)
}

/// Sign-changing bump on `[-0.7, 0.5]` with an interior zero at `-0.1`.
fn signed_bump() -> BumpPerturbation {
    peak(
        BumpPerturbation::from_factor(-0.7, 0.5, &Polynomial::new(vec![0.1, 1.0])).unwrap(),
        0.1,
    )
}

fn flow_scenarios() -> Vec<(&'static str, PeriodicProfile, BumpPerturbation)> {
    vec![
        ("flat/standard", PeriodicProfile::constant(1.0).unwrap(), BumpPerturbation::standard(-0.5, 0.5, 0.2).unwrap()),
        (
            "wavy/skewed",
            wavy(),
            peak(BumpPerturbation::from_factor(-0.6, 0.4, &Polynomial::new(vec![2.0, 1.0])).unwrap(), 0.15),
        ),
        ("wavy/sign-changing", wavy(), signed_bump()),
    ]
}

fn c1_flat_criticality() -> Outcome {
    let sc = flat();
    let st = FieldState::solve(&sc, 0.0)?;
    let residual = criticality_residual(&sc, &st);
    let error = |nx: usize| -> Result<f64, Error> {
        let d = StripDomain::new(GraphCurve::new(&PeriodicProfile::constant(1.0)?), nx, nx / 2)?;
        let bottom = BoundaryDensity::from_fn(nx, |x| (PI * x).cos());
        let u = solve_harmonic(&d, &bottom, &BoundaryDensity::constant(nx, 0.0))?;
        let exact = GridField::from_fn(&d, |x, y| (PI * x).cos() * (PI * (1.0 - y)).sinh() / PI.sinh());
        Ok(u.max_abs_diff(&exact))
    };
    let ratio = error(NX / 2)? / error(NX)?;
    Ok((
        residual <= 1e-6 && (3.5..=4.5).contains(&ratio),
        format!("max||∇u|-Q| = {residual:.2e} (≤ 1e-6); cosine error ratio {ratio:.3} (in [3.5, 4.5])"),
    ))
}

fn c2_form_oracle() -> Outcome {
    let sc = flat();
    let mut worst = 0.0f64;
    for k in 1..=3 {
        let psi = BoundaryDensity::from_fn(NX, |x| (k as f64 * PI * x).cos());
        let total = second_variation_form(&psi, &sc)?.total;
        let kk = k as f64 * PI;
        let oracle = 2.0 * kk / kk.tanh();
        worst = worst.max((total - oracle).abs() / oracle);
    }
    Ok((worst <= 1e-2, format!("max relative error vs 2kπ·coth(kπ), k=1..3: {worst:.2e} (≤ 1e-2)")))
}

fn c3_flow_identities() -> Outcome {
    let xs: Vec<f64> = (0..=NX).map(|i| grid_x(NX, i)).collect();
    let mut ok = true;
    let mut worst = [0.0f64; 5];
    let mut t0_range = true;
    for (_, profile, bump) in flow_scenarios() {
        let pr = FlowProblem::new(&profile, &bump);
        let (a, b) = bump.support();
        for s in [0.25, 0.5, 1.0] {
            let maps = pr.flow_maps(s, &xs)?;
            t0_range &= maps.columns.iter().all(|c| c.t0 >= 0.0 && c.t0 <= s);
            worst[0] = worst[0].max(maps.graph_defect(&pr));
            worst[1] = worst[1].max(maps.tangential_residual());
            worst[2] = worst[2].max(maps.ds_g_bound_excess(&pr));
            for k in 1..32 {
                let x = a + (b - a) * k as f64 / 32.0;
                if bump.value(x).abs() < 1e-12 {
                    continue;
                }
                let hit = pr.hitting_time(s, x)?;
                let tr = pr.integrate_characteristic(x, hit.t0, pr.steps)?;
                worst[3] = worst[3].max(pr.conservation_residual(&tr)?);
                worst[4] = worst[4].max(pr.t0_implicit_residual(s, x, 256)?);
            }
        }
    }
    ok &= t0_range && worst[0] <= 1e-8 && worst[1] <= 1e-12 && worst[2] <= 0.0;
    ok &= worst[3] <= 1e-6 && worst[4] <= 1e-6;
    Ok((
        ok,
        format!(
            "t0 in [0,s]: {t0_range}; graph defect {:.1e}; tangential {:.1e}; max(|∂sg|-|φ(g)|) {:.1e}; conservation {:.1e}; t0 implicit {:.1e}",
            worst[0], worst[1], worst[2], worst[3], worst[4]
        ),
    ))
}

/// Errors `|t₀ - T₀|` and `|∂ₓg - limit|` approaching `x0` from the side `dir`.
fn limit_errors(pr: &FlowProblem, s: f64, x0: f64, dir: f64, eps: &[f64]) -> Result<Vec<(f64, f64)>, Error> {
    let t0_lim = pr.t0_limit_at_zero(s, x0)?;
    let dg_lim = pr.partial_x_g_at_zero(s, x0)?;
    eps.iter()
        .map(|&e| {
            let c = pr.column(s, x0 + dir * e)?;
            Ok(((c.t0 - t0_lim).abs(), (c.dx_g - dg_lim).abs()))
        })
        .collect()
}

fn c4_limits() -> Outcome {
    let bump = signed_bump();
    let pr = FlowProblem::new(&wavy(), &bump);
    let (a, b) = bump.support();
    let cases = [
        ("a+", a, 1.0, [4e-2, 2e-2, 1e-2]),
        ("b-", b, -1.0, [4e-2, 2e-2, 1e-2]),
        ("c+", -0.1, 1.0, [1e-2, 1e-3, 1e-4]),
        ("c-", -0.1, -1.0, [1e-2, 1e-3, 1e-4]),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for s in [0.5, 1.0] {
        for (label, x0, dir, eps) in cases {
            let e = limit_errors(&pr, s, x0, dir, &eps)?;
            for (q, name) in [(0usize, "t0"), (1, "dxg")] {
                let v: Vec<f64> = e.iter().map(|p| if q == 0 { p.0 } else { p.1 }).collect();
                ok &= v[0] > v[1] && v[1] > v[2];
                if s == 1.0 {
                    detail.push(format!("{name}@{label}: {:.1e}→{:.1e}→{:.1e}", v[0], v[1], v[2]));
                }
            }
        }
    }
    Ok((ok, detail.join("; ")))
}

fn c5_scaling() -> Outcome {
    let phi0 = BumpPerturbation::standard(-0.5, 0.5, 0.2)?;
    let bounds = derivative_bounds_check(&wavy(), &phi0, &[1e-1, 1e-2, 1e-3], 256)?;
    let mut ok = true;
    let mut ratios = Vec::new();
    for w in bounds.windows(2) {
        let r = w[0].lambda / w[1].lambda;
        for (hi, lo) in [(w[0].sup_dx_g, w[1].sup_dx_g), (w[0].sup_dx_xi, w[1].sup_dx_xi)] {
            let ratio = hi / lo;
            ok &= ratio >= 0.5 * r && ratio <= 2.0 * r;
            ratios.push(ratio);
        }
    }
    ok &= bounds.iter().all(|b| b.sign_preserved);
    Ok((
        ok,
        format!(
            "successive sup ratios (∂xg, ∂xξ) per decade: {:?} (in [5, 20])",
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>()
        ),
    ))
}

fn c6_fd_check() -> Outcome {
    let sc = flat();
    let tr = energy_along_flow(&sc, &default_fd_s_grid())?;
    let rep = fd_second_derivative_check(&tr)?;
    Ok((
        rep.max_relative_deviation <= 5e-2 && rep.first_difference_ratio <= 1e-3,
        format!(
            "Richardson deviation {:.2e} (≤ 5e-2); |ΔF/Δs|/F at s=0 {:.2e} (≤ 1e-3)",
            rep.max_relative_deviation, rep.first_difference_ratio
        ),
    ))
}

fn c7_coercivity() -> Outcome {
    let est = coercivity_constant(&flat(), K)?;
    let oracle = (1..=K)
        .map(|k| {
            let kk = k as f64 * PI;
            2.0 * kk / kk.tanh() / (1.0 + kk)
        })
        .fold(2.0, f64::min);
    let rel = (est.eigenvalue - oracle).abs() / oracle;
    Ok((
        est.eigenvalue > 0.0 && rel <= 5e-2 && est.max_offdiag_rel <= 1e-8,
        format!(
            "λ_min = {:.5} vs per-mode minimum {oracle:.5} (rel {rel:.1e} ≤ 5e-2); off-diagonal {:.1e} (≤ 1e-8)",
            est.eigenvalue, est.max_offdiag_rel
        ),
    ))
}

fn c8_mu_epsilon() -> Outcome {
    let sc = flat();
    let eps = [0.2, 0.1, 0.05];
    let mus = eps.iter().map(|&e| mu_epsilon(&sc, e, K)).collect::<Result<Vec<_>, _>>()?;
    let increasing = mus.windows(2).all(|w| w[1] > w[0]);
    let scaled: Vec<f64> = eps.iter().zip(&mus).map(|(e, m)| e * m).collect();
    let in_band = scaled.iter().all(|v| (0.8..=1.3).contains(v));
    Ok((
        increasing && in_band,
        format!("μ_ε = {mus:.4?}; ε·μ_ε = {scaled:.6?} (in [0.8, 1.3])"),
    ))
}

fn c9_minimality() -> Outcome {
    let sc = flat();
    let half = random_bumps(5, 42, 0.5, sc.alpha)?;
    let bumps: Vec<_> = half.iter().cloned().chain(half.iter().map(|b| b.scaled(-1.0))).collect();
    let rep = minimality_experiment(&sc, &bumps)?;
    let worst = rep.rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    Ok((
        rep.all_within_tolerance && rep.strictly_positive >= 8,
        format!(
            "min margin {worst:.3e} ≥ -{:.3e}; strictly positive {}/{}",
            rep.tolerance,
            rep.strictly_positive,
            rep.rows.len()
        ),
    ))
}

fn c10_water_wave() -> Outcome {
    let one = PeriodicProfile::constant(1.0)?;
    let sc = water_wave_scenario(4.0, 1.0, one.clone(), NX, NY)?;
    let curve = GraphCurve::new(&one);
    let mut dev = 0.0f64;
    for k in 0..NX {
        let x = grid_x(NX, k);
        let f = frame(&curve, x);
        let g = sc.q.grad_q2(x, 1.0);
        dev = dev.max((g[0] * f.nu[0] + g[1] * f.nu[1] + 2.0).abs());
    }
    let deg = water_wave_scenario(2.0, 1.0, one, NX, NY)?;
    let refused = matches!(coercivity_constant(&deg, K), Err(Error::QminViolated { .. }));
    let energy = deg.energy_at(0.0)?;
    Ok((
        sc.stability_precheck().is_ok() && dev <= 1e-10 && refused && energy.is_finite(),
        format!("max|∂νQ² + 2| = {dev:.1e}; q=2 coercivity refused: {refused}; q=2 energy {energy:.6}"),
    ))
}

fn c11_determinism() -> Outcome {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/flat_critical.toml");
    let dir = std::env::temp_dir().join(format!("fbstab-acceptance-{}", std::process::id()));
    let outs = [dir.join("a"), dir.join("b")];
    let mut reports = Vec::new();
    for out in &outs {
        let o = run(&config, Command::Verify, Overrides { seed: Some(7), ..Default::default() }, Some(out))
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        reports.push((std::fs::read(out.join("report.json")).unwrap(), o.exit_code));
    }
    let _ = std::fs::remove_dir_all(&dir);
    let identical = reports[0].0 == reports[1].0;
    Ok((
        identical,
        format!("report bytes identical: {identical}; verify exit codes {} and {}", reports[0].1, reports[1].1),
    ))
}

fn main() -> ExitCode {
    // libtest flags such as --nocapture are accepted and ignored
    let criteria: [(&str, f64, fn() -> Outcome); 11] = [
        ("flat-strip criticality and second-order convergence", 10.0, c1_flat_criticality),
        ("second-variation oracle", 30.0, c2_form_oracle),
        ("flow identities", 60.0, c3_flow_identities),
        ("limit formulas at zeros of the bump", 30.0, c4_limits),
        ("derivative-bound scaling", 60.0, c5_scaling),
        ("finite-difference cross-check of the second variation", 120.0, c6_fd_check),
        ("coercivity", 120.0, c7_coercivity),
        ("μ_ε divergence", 60.0, c8_mu_epsilon),
        ("minimality experiment", 300.0, c9_minimality),
        ("water-wave preset", 10.0, c10_water_wave),
        ("determinism", f64::INFINITY, c11_determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let secs = start.elapsed().as_secs_f64();
        let timing = if budget.is_finite() {
            format!("{secs:.1}s, target <{budget:.0}s")
        } else {
            format!("{secs:.1}s")
        };
        println!("{} {:>2} {name}: {detail} [{timing}]", if pass { "PASS" } else { "FAIL" }, i + 1);
        failed += usize::from(!pass);
    }
    println!("{} of 11 criteria passed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
