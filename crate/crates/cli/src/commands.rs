//! The subcommands. Each returns a report and its series; domain errors become
//! failed records instead of aborting the run.

use std::f64::consts::PI;

use fbstab::elliptic::{energy, max_principle_violation};
use fbstab::flow::{build_diffeomorphism, derivative_bounds_check, FlowProblem};
use fbstab::geometry::{frame, grid_x, BoundaryDensity, GraphCurve};
use fbstab::harness::{
    energy_along_flow, fd_second_derivative_check, minimality_experiment, random_bumps, DatumSpec, QField, Scenario,
};
use fbstab::variation::{
    coercivity_constant, criticality_check, mu_epsilon, second_variation_along_flow, tubular_coercivity,
    CriticalPoint, FieldState,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::report::{CheckRecord, ReportDocument, Series};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Solve the base state and report energy and discrete-solver diagnostics.
    Solve,
    /// Test |∇u| = Q on the free boundary.
    Criticality,
    /// Evaluate the second-variation quadratic form and its flow counterpart.
    Secondvar,
    /// Smallest generalized eigenvalue and the tubular constants μ_ε, c_ε.
    Coercivity,
    /// Characteristic flow identities, derivative bounds and admissibility.
    Flow,
    /// All identity checks of the scenario.
    Verify,
    /// Energy along the flow, finite-difference check and minimality experiment.
    Sweep,
    /// Water-wave preset checks.
    Wave,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Criticality => "criticality",
            Command::Secondvar => "secondvar",
            Command::Coercivity => "coercivity",
            Command::Flow => "flow",
            Command::Verify => "verify",
            Command::Sweep => "sweep",
            Command::Wave => "wave",
        }
    }
}

struct Run<'a> {
    cfg: &'a RunConfig,
    sc: Scenario,
    report: ReportDocument,
    series: Vec<Series>,
}

impl<'a> Run<'a> {
    fn attempt<T>(&mut self, name: &str, r: fbstab::Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.report.check(CheckRecord::error(name, &e));
                None
            }
        }
    }

    fn check(&mut self, rec: CheckRecord) {
        self.report.check(rec);
    }

    fn value(&mut self, key: &str, v: f64) {
        self.report.value(key, v);
    }

    /// `Q` constant and `w`, `u*` flat: separation-of-variables oracles apply.
    fn flat_constants(&self) -> Option<(f64, f64)> {
        let q = match self.sc.q {
            QField::Constant { value } => value,
            _ => return None,
        };
        let bottom_flat = matches!(self.sc.bottom, DatumSpec::Constant { .. });
        (self.sc.profile.is_flat() && bottom_flat).then(|| (q, self.sc.profile.value(0.0)))
    }
}

pub fn execute(cmd: Command, cfg: &RunConfig) -> Result<(ReportDocument, Vec<Series>), CliError> {
    let mut run = Run {
        cfg,
        sc: cfg.scenario()?,
        report: ReportDocument::new(cmd.name(), cfg),
        series: Vec::new(),
    };
    match cmd {
        Command::Solve => solve(&mut run),
        Command::Criticality => criticality(&mut run),
        Command::Secondvar => secondvar(&mut run),
        Command::Coercivity => coercivity(&mut run),
        Command::Flow => flow(&mut run),
        Command::Sweep => sweep(&mut run),
        Command::Wave => wave(&mut run)?,
        Command::Verify => {
            criticality(&mut run);
            secondvar(&mut run);
            coercivity(&mut run);
            flow(&mut run);
            sweep(&mut run);
        }
    }
    let mut report = run.report;
    report.series = run.series.iter().map(Series::file_name).collect();
    Ok((report, run.series))
}

fn solve(run: &mut Run) {
    let Some(st) = run.attempt("solve", FieldState::solve(&run.sc, 0.0)) else {
        return;
    };
    let e = energy(&st.solver, &st.u, |x, y| run.sc.q.q2(x, y));
    run.value("energy.dirichlet", e.dirichlet);
    run.value("energy.volume", e.volume);
    run.value("energy.total", e.total);
    run.value("mesh.min_element_area", st.solver.min_element_area());
    run.check(CheckRecord::le("solve.max_principle_violation", max_principle_violation(&st.u), 1e-10));
    run.check(CheckRecord::le("solve.laplacian_residual", st.solver.laplacian_residual(&st.u), 1e-6));
    let d = st.domain();
    let mut s = Series::new("boundary", &["x", "y", "flux", "grad_sq", "q2"]);
    for i in 0..d.nx() {
        let x = d.x(i);
        let y = d.top().value(x);
        s.push(vec![x, y, st.flux.values()[i], st.grad_sq.values()[i], run.sc.q.q2(x, y)]);
    }
    run.series.push(s);
}

fn criticality(run: &mut Run) {
    let Some(st) = run.attempt("criticality", FieldState::solve(&run.sc, 0.0)) else {
        return;
    };
    let Some(rep) = run.attempt("criticality", criticality_check(&run.sc, &st)) else {
        return;
    };
    run.value("criticality.coarse_residual", rep.coarse_residual);
    run.value("criticality.h2_constant", rep.h2_constant);
    run.check(CheckRecord::le("criticality.residual", rep.residual, rep.threshold));
    run.check(CheckRecord::holds("criticality.flux_negative", rep.flux_negative));
    let d = st.domain();
    let mut s = Series::new("criticality", &["x", "grad_norm", "q"]);
    for i in 0..d.nx() {
        let x = d.x(i);
        s.push(vec![x, st.grad_sq.values()[i].sqrt(), run.sc.q.q(x, d.top().value(x))]);
    }
    run.series.push(s);
}

fn secondvar(run: &mut Run) {
    let Some(cp) = run.attempt("secondvar.critical_point", CriticalPoint::new(&run.sc)) else {
        return;
    };
    let n = run.sc.nx;
    let flat = run.flat_constants();
    let mut table = Series::new("form_cosine", &["k", "bulk", "boundary", "total"]);
    for k in 1..=3 {
        let psi = BoundaryDensity::from_fn(n, |x| (k as f64 * PI * x).cos());
        let Some(f) = run.attempt(&format!("secondvar.form_cos{k}"), cp.form(&psi)) else {
            continue;
        };
        table.push(vec![k as f64, f.bulk, f.boundary, f.total]);
        run.check(CheckRecord::ge(&format!("secondvar.form_cos{k}.bulk"), f.bulk, 0.0));
        if let Some((q, h)) = flat {
            let kk = k as f64 * PI;
            let oracle = 2.0 * q * q * kk / (kk * h).tanh();
            run.check(CheckRecord::le(
                &format!("secondvar.form_cos{k}.oracle_rel_error"),
                (f.total - oracle).abs() / oracle,
                1e-2,
            ));
        }
    }
    run.series.push(table);

    let problem = run.sc.flow_problem();
    let xs: Vec<f64> = (0..=n).map(|i| grid_x(n, i)).collect();
    let Some(maps0) = run.attempt("secondvar.flow_maps", problem.flow_maps(0.0, &xs)) else {
        return;
    };
    let v = maps0.normal_velocity_density(&problem);
    if let (Some(f), Some(along)) = (
        run.attempt("secondvar.form_normal_velocity", cp.form(&v)),
        run.attempt("secondvar.along_flow_s0", second_variation_along_flow(0.0, &run.sc, &maps0)),
    ) {
        run.value("secondvar.form_normal_velocity", f.total);
        run.value("secondvar.along_flow_s0", along.second_variation);
        let denom = f.total.abs().max(1e-300);
        run.check(CheckRecord::le(
            "secondvar.along_flow_vs_form_rel",
            (along.second_variation - f.total).abs() / denom,
            2e-2,
        ));
    }
    let mut s = Series::new(
        "second_variation",
        &["s", "first_variation", "bulk", "boundary", "defect", "second_variation", "tangential_residual"],
    );
    for &sv in &run.cfg.command.s_values {
        let Some(maps) = run.attempt("secondvar.flow_maps", problem.flow_maps(sv, &xs)) else {
            continue;
        };
        if let Some(r) = run.attempt("secondvar.along_flow", second_variation_along_flow(sv, &run.sc, &maps)) {
            s.push(vec![r.s, r.first_variation, r.bulk, r.boundary, r.defect, r.second_variation, r.tangential_residual]);
            run.check(CheckRecord::ge(&format!("secondvar.bulk_s{sv}"), r.bulk, 0.0));
        }
    }
    run.series.push(s);
}

fn coercivity(run: &mut Run) {
    let k = run.sc.modes;
    let Some(est) = run.attempt("coercivity", coercivity_constant(&run.sc, k)) else {
        return;
    };
    run.check(CheckRecord::gt("coercivity.eigenvalue", est.eigenvalue, 0.0));
    run.check(CheckRecord::le("coercivity.asymmetry", est.asymmetry, 1e-6));
    run.value("coercivity.max_offdiag_rel", est.max_offdiag_rel);
    if let Some((q, h)) = run.flat_constants() {
        let oracle = (0..=k)
            .map(|m| {
                if m == 0 {
                    2.0 * q * q / h
                } else {
                    let kk = m as f64 * PI;
                    2.0 * q * q * kk / (kk * h).tanh() / (1.0 + kk)
                }
            })
            .fold(f64::INFINITY, f64::min);
        run.value("coercivity.oracle", oracle);
        run.check(CheckRecord::le(
            "coercivity.oracle_rel_error",
            (est.eigenvalue - oracle).abs() / oracle,
            5e-2,
        ));
        run.check(CheckRecord::le("coercivity.mode_decoupling", est.max_offdiag_rel, 1e-8));
    }
    let mut modes = Series::new("coercivity_modes", &["mode", "quotient", "eigenvector"]);
    for (m, (q, e)) in est.mode_quotients.iter().zip(&est.eigenvector).enumerate() {
        modes.push(vec![m as f64, *q, *e]);
    }
    run.series.push(modes);
    let mut conv = Series::new("coercivity_k", &["modes", "eigenvalue"]);
    for kk in [k / 4, k / 2] {
        if kk >= 1 {
            if let Some(e) = run.attempt("coercivity.k_convergence", coercivity_constant(&run.sc, kk)) {
                conv.push(vec![kk as f64, e.eigenvalue]);
            }
        }
    }
    conv.push(vec![k as f64, est.eigenvalue]);
    run.series.push(conv);

    let mut eps = run.cfg.command.epsilons.clone();
    eps.sort_by(|a, b| b.total_cmp(a));
    let mut tube = Series::new("tubular", &["epsilon", "mu_epsilon", "c_epsilon"]);
    let mut mus = Vec::new();
    for &e in &eps {
        let mu = run.attempt(&format!("coercivity.mu_eps{e}"), mu_epsilon(&run.sc, e, k));
        let c = run.attempt(&format!("coercivity.c_eps{e}"), tubular_coercivity(&run.sc, e, k));
        if let (Some(mu), Some(c)) = (mu, c) {
            tube.push(vec![e, mu, c.eigenvalue]);
            mus.push(mu);
            if let Some((q, _)) = run.flat_constants() {
                let scaled = e * mu / (q * q);
                run.check(CheckRecord::ge(&format!("coercivity.eps{e}_mu_scaled_lower"), scaled, 0.8));
                run.check(CheckRecord::le(&format!("coercivity.eps{e}_mu_scaled_upper"), scaled, 1.3));
            }
        }
    }
    if mus.len() >= 2 {
        run.check(CheckRecord::holds(
            "coercivity.mu_eps_increasing",
            mus.windows(2).all(|w| w[1] > w[0]),
        ));
    }
    run.series.push(tube);
}

fn flow(run: &mut Run) {
    let problem: FlowProblem = run.sc.flow_problem();
    let n = run.sc.nx;
    let xs: Vec<f64> = (0..=n).map(|i| grid_x(n, i)).collect();
    let (a, b) = run.sc.bump.support();
    for &s in &run.cfg.command.s_values.clone() {
        let Some(maps) = run.attempt(&format!("flow.s{s}"), problem.flow_maps(s, &xs)) else {
            continue;
        };
        let t0_ok = maps.columns.iter().all(|c| c.t0 >= 0.0 && c.t0 <= s);
        run.check(CheckRecord::holds(&format!("flow.s{s}.t0_in_range"), t0_ok));
        run.check(CheckRecord::le(&format!("flow.s{s}.graph_defect"), maps.graph_defect(&problem), 1e-8));
        run.check(CheckRecord::le(&format!("flow.s{s}.tangential_residual"), maps.tangential_residual(), 1e-12));
        run.check(CheckRecord::le(&format!("flow.s{s}.ds_g_bound_excess"), maps.ds_g_bound_excess(&problem), 1e-14));
        let mut worst_cons = 0.0f64;
        let mut worst_t0 = 0.0f64;
        for k in 1..16 {
            let x = a + (b - a) * k as f64 / 16.0;
            let res = problem.hitting_time(s, x).and_then(|hit| {
                let tr = problem.integrate_characteristic(x, hit.t0, problem.steps)?;
                Ok((problem.conservation_residual(&tr)?, problem.t0_implicit_residual(s, x, 256)?))
            });
            if let Some((c, t)) = run.attempt(&format!("flow.s{s}.residuals"), res) {
                worst_cons = worst_cons.max(c);
                worst_t0 = worst_t0.max(t);
            }
        }
        run.check(CheckRecord::le(&format!("flow.s{s}.conservation_residual"), worst_cons, 1e-6));
        run.check(CheckRecord::le(&format!("flow.s{s}.t0_implicit_residual"), worst_t0, 1e-6));
        let vel = maps.normal_velocity(&problem);
        let acc = maps.acceleration_normal(&problem);
        let mut table = Series::new(
            &format!("flow_s{s}"),
            &["x", "t0", "g", "h", "dx_g", "ds_g", "dx_h", "ds_h", "normal_velocity", "acceleration_normal"],
        );
        for (i, c) in maps.columns.iter().enumerate() {
            table.push(vec![c.x, c.t0, c.g, c.h, c.dx_g, c.ds_g, c.dx_h, c.ds_h, vel[i], acc[i]]);
        }
        run.series.push(table);
    }

    let lambdas = run.cfg.command.lambdas.clone();
    if let Some(bounds) = run.attempt(
        "flow.derivative_bounds",
        derivative_bounds_check(&run.sc.profile, &run.sc.bump, &lambdas, problem.steps),
    ) {
        let mut table = Series::new(
            "derivative_bounds",
            &["lambda", "sup_dx_g", "sup_dx_h", "sup_dx_xi", "sup_dx_eta", "sup_displacement", "displacement_bound"],
        );
        for b in &bounds {
            table.push(vec![
                b.lambda,
                b.sup_dx_g,
                b.sup_dx_h,
                b.sup_dx_xi,
                b.sup_dx_eta,
                b.sup_displacement,
                b.displacement_bound,
            ]);
            run.check(CheckRecord::holds(&format!("flow.lambda{}.sign_preserved", b.lambda), b.sign_preserved));
            run.check(CheckRecord::le(
                &format!("flow.lambda{}.displacement_bound", b.lambda),
                b.sup_displacement,
                b.displacement_bound,
            ));
        }
        for w in bounds.windows(2) {
            let r = w[0].lambda / w[1].lambda;
            for (label, hi, lo) in [("dx_g", w[0].sup_dx_g, w[1].sup_dx_g), ("dx_xi", w[0].sup_dx_xi, w[1].sup_dx_xi)] {
                let ratio = hi / lo;
                let name = format!("flow.scaling_{label}_{}_{}", w[0].lambda, w[1].lambda);
                // the bound is linear in λ; on flat profiles the decay is quadratic
                run.check(CheckRecord::ge(&format!("{name}.at_least_linear"), ratio, 0.5 * r));
                run.value(&format!("{name}.exponent"), ratio.ln() / r.ln());
            }
        }
        run.series.push(table);
    }

    let mut s_adm = run.cfg.command.s_values.clone();
    s_adm.insert(0, 0.0);
    let adm = build_diffeomorphism(&problem, run.sc.cutoff).and_then(|fam| fam.admissibility_report(&s_adm, 64, 32));
    if let Some(rep) = run.attempt("flow.admissibility", adm) {
        run.value("flow.admissibility.max_jacobian_defect", rep.max_jacobian_defect);
        run.value("flow.admissibility.c2_proxy_coarse", rep.c2_proxy_coarse);
        run.value("flow.admissibility.c2_proxy_fine", rep.c2_proxy_fine);
        run.check(CheckRecord::le("flow.admissibility.identity_defect", rep.identity_defect, 1e-14));
        run.check(CheckRecord::le("flow.admissibility.support_leak", rep.support_leak, 1e-14));
        run.check(CheckRecord::le("flow.admissibility.graph_defect", rep.graph_defect, 1e-8));
        run.check(CheckRecord::holds("flow.admissibility.admissible", rep.admissible));
    }
}

fn sweep(run: &mut Run) {
    let cmd = run.cfg.command.clone();
    if let Some(tr) = run.attempt("sweep.energy_trace", energy_along_flow(&run.sc, &cmd.s_grid)) {
        let mut table = Series::new("energy_trace", &["s", "F", "d2F_analytic", "d2F_fd", "defect_sup"]);
        for k in 0..tr.s.len() {
            table.push(vec![tr.s[k], tr.energy[k], tr.d2_analytic[k], tr.d2_fd[k], tr.defect_sup[k]]);
        }
        run.series.push(table);
        let sup = tr.defect_sup.iter().copied().fold(0.0, f64::max);
        run.value("sweep.defect_sup", sup);
        run.value("sweep.defect_sup_over_norm", sup / run.sc.bump.c2_alpha_surrogate(run.sc.alpha));
    }
    let critical = FieldState::solve(&run.sc, 0.0)
        .and_then(|st| criticality_check(&run.sc, &st))
        .map(|r| r.critical)
        .unwrap_or(false);
    let fd = energy_along_flow(&run.sc, &cmd.fd_s_grid).and_then(|tr| fd_second_derivative_check(&tr).map(|r| (tr, r)));
    if let Some((tr, rep)) = run.attempt("sweep.fd_check", fd) {
        run.check(CheckRecord::le("sweep.fd_relative_deviation", rep.max_relative_deviation, 5e-2));
        run.value("sweep.first_difference", rep.first_difference);
        if critical {
            run.check(CheckRecord::le(
                "sweep.first_difference_ratio",
                rep.first_difference_ratio,
                1e-3,
            ));
        }
        let mut table = Series::new("fd_check", &["s", "F", "d2F_analytic", "d2F_fd", "defect_sup"]);
        for k in 0..tr.s.len() {
            table.push(vec![tr.s[k], tr.energy[k], tr.d2_analytic[k], tr.d2_fd[k], tr.defect_sup[k]]);
        }
        run.series.push(table);
    }
    let bumps = random_bumps(cmd.bump_count, cmd.seed, cmd.target_norm, run.sc.alpha);
    let exp = bumps.and_then(|b| minimality_experiment(&run.sc, &b));
    if let Some(rep) = run.attempt("sweep.minimality", exp) {
        run.value("sweep.minimality.tolerance", rep.tolerance);
        run.value("sweep.minimality.coercivity", rep.coercivity);
        let worst = rep.rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
        run.check(CheckRecord::ge("sweep.minimality.min_margin", worst, -rep.tolerance));
        run.check(CheckRecord::ge(
            "sweep.minimality.strictly_positive_fraction",
            rep.strictly_positive as f64 / rep.rows.len() as f64,
            0.8,
        ));
        let mut table = Series::new(
            "minimality",
            &["index", "a", "b", "peak", "surrogate_norm", "margin", "admissible"],
        );
        for r in &rep.rows {
            let adm = r.admissibility.map_or(0.0, |a| if a.admissible { 1.0 } else { 0.0 });
            table.push(vec![r.index as f64, r.support.0, r.support.1, r.peak, r.surrogate_norm, r.margin, adm]);
        }
        run.series.push(table);
    }
}

fn wave(run: &mut Run) -> Result<(), CliError> {
    let QField::WaterWave { g, .. } = run.sc.q else {
        return Err(CliError::invalid("scenario.q", "wave requires the water_wave preset"));
    };
    let curve = GraphCurve::new(&run.sc.profile);
    let n = run.sc.nx;
    let mut dev = 0.0f64;
    let mut q_min = f64::INFINITY;
    let mut table = Series::new("wave_boundary", &["x", "q", "dnu_q2"]);
    for k in 0..n {
        let x = grid_x(n, k);
        let y = curve.value(x);
        let f = frame(&curve, x);
        let grad = run.sc.q.grad_q2(x, y);
        let dnu = grad[0] * f.nu[0] + grad[1] * f.nu[1];
        let w1 = curve.slope(x);
        dev = dev.max((dnu + 2.0 * g / (1.0 + w1 * w1).sqrt()).abs());
        q_min = q_min.min(run.sc.q.q(x, y));
        table.push(vec![x, run.sc.q.q(x, y), dnu]);
    }
    run.series.push(table);
    run.value("wave.q_min_on_gamma", q_min);
    run.check(CheckRecord::le("wave.dnu_q2_closed_form", dev, 1e-10));
    if let Some(e) = run.attempt("wave.energy", run.sc.energy_at(0.0)) {
        run.value("wave.energy", e);
    }
    if run.attempt("wave.stability_precheck", run.sc.stability_precheck()).is_some() {
        criticality(run);
        let k = run.sc.modes;
        if let Some(est) = run.attempt("wave.coercivity", coercivity_constant(&run.sc, k)) {
            run.value("wave.coercivity_eigenvalue", est.eigenvalue);
        }
    }
    Ok(())
}
