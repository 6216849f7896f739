use fbstab::elliptic::{energy, max_principle_violation, HarmonicSolver, StripDomain};
use fbstab::flow::FlowProblem;
use fbstab::geometry::{
    frame, h_half_norm, l2_norm_gamma, make_profile, BoundaryDensity, BumpPerturbation, GraphCurve,
    Polynomial, ProfileSpec,
};
use fbstab::harness::{random_bumps, Scenario};
use fbstab::variation::CriticalPoint;
use proptest::prelude::*;

fn wavy(c: f64, s: f64) -> fbstab::geometry::PeriodicProfile {
    make_profile(&ProfileSpec::Fourier {
        mean: 1.0,
        cos: vec![c],
        sin: vec![s],
    })
    .unwrap()
}

fn bump(a: f64, width: f64, amp: f64, tilt: f64) -> BumpPerturbation {
    let b = a + width;
    let c = 0.5 * (a + b);
    let factor = Polynomial::new(vec![1.0 - tilt * c, tilt]);
    let raw = BumpPerturbation::from_factor(a, b, &factor).unwrap();
    raw.scaled(amp / raw.sup_norm())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn h_half_dominates_l2(coeffs in prop::collection::vec(-1.0f64..1.0, 1..8), c in -0.1f64..0.1) {
        let curve = GraphCurve::new(&wavy(c, 0.0));
        let psi = BoundaryDensity::from_fn(256, |x| {
            coeffs.iter().enumerate().map(|(k, a)| a * ((k + 1) as f64 * std::f64::consts::PI * x + k as f64).cos()).sum()
        });
        prop_assert!(h_half_norm(&psi, &curve) >= l2_norm_gamma(&psi, &curve) * (1.0 - 1e-9));
    }

    #[test]
    fn frame_is_orthonormal(c in -0.2f64..0.2, s in -0.2f64..0.2, x in -1.0f64..1.0) {
        let f = frame(&GraphCurve::new(&wavy(c, s)), x);
        let cross = f.tau[0] * f.nu[1] - f.tau[1] * f.nu[0];
        prop_assert!((cross.abs() - 1.0).abs() < 1e-14);
        prop_assert!((f.tau[0] * f.nu[0] + f.tau[1] * f.nu[1]).abs() < 1e-14);
    }

    #[test]
    fn hitting_time_bounds_and_sign(
        c in -0.1f64..0.1, a in -0.9f64..-0.1, width in 0.3f64..0.8,
        amp in -0.15f64..0.15, tilt in -1.0f64..1.0, s in 0.0f64..1.0, u in 0.0f64..1.0,
    ) {
        let profile = wavy(c, 0.5 * c);
        let bp = bump(a, width, amp, tilt);
        let pr = FlowProblem::new(&profile, &bp);
        let x = a + u * width;
        let hit = pr.hitting_time(s, x).unwrap();
        prop_assert!(hit.t0 >= 0.0 && hit.t0 <= s);
        let col = pr.column(s, x).unwrap();
        let target = profile.value(col.g) + s * bp.value(col.g);
        prop_assert!((col.h - target).abs() <= 1e-8);
        let phi = bp.value(x);
        if phi.abs() > 1e-10 {
            prop_assert!(bp.value(hit.xi) * phi > 0.0);
        }
        let tangential = col.dx_g * col.ds_g + col.dx_h * col.ds_h;
        prop_assert!(tangential.abs() <= 1e-12);
        prop_assert!(col.ds_g.abs() <= bp.value(col.g).abs() + 1e-15);
    }

    #[test]
    fn even_data_give_odd_g(amp in 0.01f64..0.2, s in 0.05f64..1.0, x in 0.0f64..0.9) {
        let profile = wavy(0.1, 0.0);
        let bp = BumpPerturbation::standard(-0.6, 0.6, amp).unwrap();
        let pr = FlowProblem::new(&profile, &bp);
        let p = pr.column(s, x).unwrap();
        let m = pr.column(s, -x).unwrap();
        prop_assert!((p.g + m.g).abs() < 1e-10);
        prop_assert!((p.h - m.h).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn maximum_principle(c in -0.2f64..0.2, mean in 0.5f64..2.0, amp in 0.0f64..0.4, k in 1u32..4) {
        let dom = StripDomain::new(GraphCurve::new(&wavy(c, 0.0)), 32, 16).unwrap();
        let solver = HarmonicSolver::new(&dom).unwrap();
        let bottom = BoundaryDensity::from_fn(32, |x| mean + amp * (k as f64 * std::f64::consts::PI * x).sin());
        let u = solver.solve(&bottom, &BoundaryDensity::constant(32, 0.0)).unwrap();
        prop_assert!(max_principle_violation(&u) <= 1e-12);
    }

    #[test]
    fn quadratic_form_homogeneous_with_nonnegative_bulk(k in 0usize..6, t in -3.0f64..3.0) {
        let sc = Scenario::flat_critical(32, 16).unwrap();
        let cp = CriticalPoint::new(&sc).unwrap();
        let psi = BoundaryDensity::from_fn(32, |x| (k as f64 * std::f64::consts::PI * x).cos() + 0.3 * x.sin());
        let f1 = cp.form(&psi).unwrap();
        let ft = cp.form(&psi.map(|_, v| t * v)).unwrap();
        prop_assert!(f1.bulk > 0.0 && ft.bulk >= 0.0);
        prop_assert!((ft.total - t * t * f1.total).abs() <= 1e-10 * f1.total.abs().max(1.0) * t * t + 1e-14);
    }
}

#[test]
fn harmonic_solution_minimizes_dirichlet_energy() {
    let dom = StripDomain::new(GraphCurve::new(&wavy(0.1, 0.05)), 32, 16).unwrap();
    let solver = HarmonicSolver::new(&dom).unwrap();
    let u = solver
        .solve(&BoundaryDensity::constant(32, 1.0), &BoundaryDensity::constant(32, 0.0))
        .unwrap();
    let base = energy(&solver, &u, |_, _| 1.0).dirichlet;
    for (n, b) in random_bumps(10, 11, 0.5, 0.5).unwrap().iter().enumerate() {
        let mut v = u.clone();
        for j in 1..dom.ny() {
            for i in 0..dom.nx() {
                let (x, y) = dom.node(i, j);
                let t = y / dom.top().value(x);
                v.set(i, j, u.get(i, j) + b.value(x) * t * (1.0 - t) * (1.0 + n as f64));
            }
        }
        assert!(energy(&solver, &v, |_, _| 1.0).dirichlet > base);
    }
}
