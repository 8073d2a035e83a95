use std::fmt::Write;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use robsynth_core::model::{build_perturbation_mask, MaskKind};
use robsynth_core::pendulum::{self, PendulumParams, RadiusStudy, X0};
use robsynth_core::robustness::{self, BoundMode, RobustnessBound};
use robsynth_core::simulator::{simulate, sweep, IntegratorConfig, SimMode, Summary, SweepCase, SweepReport, Trajectory};
use robsynth_core::synthesis::SynthesisArtifacts;
use robsynth_core::verify::{self, Certificate, Expectations, Status, THETA_DOT_SLACK, CONTROL_SLACK};
use robsynth_core::PerturbationSpec;

use crate::config::{provenance, resolve, Provenance, Resolved, RunConfig, SweepConfig};
use crate::output::{to_json, Sink};
use crate::plot::{line_chart, Series};
use crate::{Case, Cli, Command, Failure, Format};

pub fn run(cli: &Cli) -> Result<(), Failure> {
    if cli.plot && cli.out.is_none() {
        return Err(Failure::config("--plot needs --out"));
    }
    match &cli.command {
        Command::Synth => synth(cli),
        Command::Delta => delta(cli),
        Command::Simulate => simulate_cmd(cli),
        Command::Sweep => sweep_cmd(cli),
        Command::Verify { expectations, max_dim } => verify_cmd(cli, expectations.as_deref(), *max_dim),
        Command::Pendulum { case, param, mode } => pendulum_cmd(cli, *case, *param, (*mode).into()),
    }
}

fn load(cli: &Cli) -> Result<RunConfig, Failure> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Failure::config("this command needs --config <path>"))?;
    RunConfig::load(path)
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn csv_value(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Prints the primary output: always without `--out`, otherwise only when a
/// format was asked for explicitly.
fn emit(cli: &Cli, sink: &Sink, default: Format, json: &str, csv: &str) {
    let format = match (cli.format, sink.enabled()) {
        (Some(f), _) => f,
        (None, false) => default,
        (None, true) => {
            for p in &sink.written {
                eprintln!("wrote {}", p.display());
            }
            return;
        }
    };
    match format {
        Format::Json => print!("{json}"),
        Format::Csv => print!("{csv}"),
    }
}

fn key_values(pairs: &[(&str, String)]) -> String {
    let mut s = String::from("name,value\n");
    for (k, v) in pairs {
        let _ = writeln!(s, "{k},{v}");
    }
    s
}

#[derive(Serialize)]
struct SynthReport<'a> {
    resolved: &'a Provenance,
    blocks: &'a [usize],
    a0: f64,
    c: f64,
    #[serde(rename = "Delta")]
    delta: Option<f64>,
    rho_gtilde: f64,
    rho_power_iteration: Option<f64>,
    #[serde(rename = "F")]
    f: Vec<Vec<f64>>,
    /// Diagonal blocks of F as exact fractions.
    #[serde(rename = "F_exact")]
    f_exact: Vec<Vec<Vec<String>>>,
    #[serde(rename = "F1")]
    f1: Vec<Vec<f64>>,
    #[serde(rename = "H")]
    h: Vec<f64>,
    #[serde(rename = "G_tilde")]
    gtilde: Vec<Vec<f64>>,
    theta0: Option<f64>,
    x0_in_domain: Option<bool>,
    notes: &'a [String],
}

fn theta0_of(r: &Resolved, x0: Option<&Vec<f64>>) -> Result<Option<f64>, Failure> {
    let Some(x0) = x0 else { return Ok(None) };
    Ok(Some(r.artifacts.solve_theta(&nalgebra::DVector::from_column_slice(x0))?))
}

fn synth(cli: &Cli) -> Result<(), Failure> {
    let cfg = load(cli)?;
    let r = resolve(&cfg, cli.seed)?;
    let g = r.artifacts.gramians();
    let theta0 = theta0_of(&r, cfg.x0.as_ref())?;
    let report = SynthReport {
        resolved: &r.provenance,
        blocks: r.system.blocks().sizes(),
        a0: r.artifacts.a0(),
        c: r.artifacts.c(),
        delta: finite(r.bound.delta),
        rho_gtilde: r.bound.rho_gtilde,
        rho_power_iteration: r.bound.rho_power_iteration,
        f: rows(g.f()),
        f_exact: g
            .exact()
            .iter()
            .map(|m| (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m.get(i, j).to_string()).collect()).collect())
            .collect(),
        f1: rows(g.f1()),
        h: g.h().iter().copied().collect(),
        gtilde: rows(&r.bound.gtilde),
        theta0,
        x0_in_domain: theta0.map(|t| t <= r.artifacts.c()),
        notes: &r.notes,
    };
    let json = to_json(&report)?;
    let csv = key_values(&[
        ("version", r.provenance.version.to_string()),
        ("gamma", r.provenance.gamma.to_string()),
        ("a0", report.a0.to_string()),
        ("a0_max", r.provenance.a0_max.to_string()),
        ("c", report.c.to_string()),
        ("Delta", csv_value(report.delta)),
        ("Delta_declared", r.provenance.delta_declared.to_string()),
        ("rho_gtilde", report.rho_gtilde.to_string()),
        ("theta0", csv_value(theta0)),
    ]);
    let mut sink = Sink::new(cli.out.as_deref())?;
    sink.file("synth.json", &json)?;
    emit(cli, &sink, Format::Json, &json, &csv);
    Ok(())
}

#[derive(Serialize)]
struct MarginEntry {
    mask: MaskKind,
    mode: BoundMode,
    rho_gtilde: f64,
    rho_power_iteration: Option<f64>,
    #[serde(rename = "Delta")]
    delta: Option<f64>,
    /// Solvability radius certified for the declared bound.
    c_domain: Option<f64>,
    #[serde(rename = "G_tilde")]
    gtilde: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct DeltaReport<'a> {
    resolved: &'a Provenance,
    margins: Vec<MarginEntry>,
    notes: &'a [String],
}

fn delta(cli: &Cli) -> Result<(), Failure> {
    let cfg = load(cli)?;
    let r = resolve(&cfg, cli.seed)?;
    let b = r.system.blocks();
    let gamma = r.artifacts.gamma();
    let declared = r.perturbation.bound();
    let mut margins = Vec::new();
    for kind in [MaskKind::Superdiagonal, MaskKind::General] {
        let mask = build_perturbation_mask(b, kind);
        let bound = RobustnessBound::margin(r.artifacts.gramians(), &mask, gamma, r.artifacts.c())?;
        let c_domain = if declared > 0.0 && bound.rho_gtilde > 0.0 {
            Some(robustness::domain_radius(gamma, declared, bound.rho_gtilde, b.largest())?)
        } else {
            None
        };
        margins.push(MarginEntry {
            mask: kind,
            mode: bound.mode,
            rho_gtilde: bound.rho_gtilde,
            rho_power_iteration: bound.rho_power_iteration,
            delta: finite(bound.delta),
            c_domain,
            gtilde: rows(&bound.gtilde),
        });
    }
    let report = DeltaReport { resolved: &r.provenance, margins, notes: &r.notes };
    let json = to_json(&report)?;
    let mut csv = String::from("mask,rho_gtilde,Delta,c_domain\n");
    for m in &report.margins {
        let mask = match m.mask {
            MaskKind::Superdiagonal => "superdiagonal",
            MaskKind::General => "general",
        };
        let _ = writeln!(csv, "{mask},{},{},{}", m.rho_gtilde, csv_value(m.delta), csv_value(m.c_domain));
    }
    let mut sink = Sink::new(cli.out.as_deref())?;
    sink.file("delta.json", &json)?;
    emit(cli, &sink, Format::Json, &json, &csv);
    Ok(())
}

fn trajectory_plots(sink: &mut Sink, traj: &Trajectory, prefix: &str) -> Result<(), Failure> {
    let theta: Vec<(f64, f64)> = traj.samples.iter().map(|s| (s.t, s.theta)).collect();
    let end = traj.settling_time.unwrap_or_else(|| traj.samples.last().map_or(0.0, |s| s.t));
    let reference = vec![(0.0, traj.theta0), (traj.theta0.min(end.max(traj.theta0)), 0.0)];
    let mut lin = Series::line("Θ(x0) − t", reference);
    lin.dashed = true;
    sink.file(
        &format!("{prefix}theta.svg"),
        &line_chart("Controllability function along the run", "t", "θ(t)", &[Series::line("θ(t)", theta), lin]),
    )?;
    let unorm: Vec<(f64, f64)> = traj
        .samples
        .iter()
        .map(|s| (s.t, s.u.iter().map(|v| v * v).sum::<f64>().sqrt()))
        .collect();
    let mut one = Series::line("bound 1", vec![(0.0, 1.0), (end, 1.0)]);
    one.dashed = true;
    sink.file(
        &format!("{prefix}control.svg"),
        &line_chart("Norm of the control", "t", "‖u(t)‖", &[Series::line("‖u(t)‖", unorm), one]),
    )?;
    if traj.samples.first().is_some_and(|s| s.x.len() >= 2) {
        let phase: Vec<(f64, f64)> = traj.samples.iter().map(|s| (s.x[0], s.x[1])).collect();
        sink.file(
            &format!("{prefix}phase.svg"),
            &line_chart("Phase projection", "x1", "x2", &[Series::line("(x1, x2)", phase)]),
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    resolved: &'a Provenance,
    mode: SimMode,
    x0: &'a [f64],
    summary: Summary,
    certificate: &'a Certificate,
    notes: &'a [String],
}

fn certify_run(traj: &Trajectory, r: &Resolved) -> Result<Certificate, Failure> {
    let declared = r.perturbation.bound();
    let mut cert = verify::certify_trajectory(traj, &r.artifacts, r.artifacts.gamma(), declared)?;
    cert.at_most("delta_within_margin", declared, r.bound.delta, "declared perturbation bound ≤ certified margin Δ");
    Ok(cert)
}

fn simulate_cmd(cli: &Cli) -> Result<(), Failure> {
    let cfg = load(cli)?;
    let r = resolve(&cfg, cli.seed)?;
    let x0 = cfg.x0.as_deref().ok_or_else(|| Failure::config("x0: required for simulate"))?;
    let traj = simulate(&r.system, &r.artifacts, &r.perturbation, x0, cfg.mode, &cfg.integrator)?;
    let cert = certify_run(&traj, &r)?;
    let report = SimulateReport {
        resolved: &r.provenance,
        mode: cfg.mode,
        x0,
        summary: traj.summary(),
        certificate: &cert,
        notes: &r.notes,
    };
    let json = to_json(&report)?;
    let csv = traj.to_csv();
    let mut sink = Sink::new(cli.out.as_deref())?;
    sink.file("trajectory.csv", &csv)?;
    sink.file("summary.json", &json)?;
    if cli.plot {
        trajectory_plots(&mut sink, &traj, "")?;
    }
    emit(cli, &sink, Format::Csv, &json, &csv);
    if cert.passed() {
        Ok(())
    } else {
        Err(Failure::certification(format!("run not certified:\n{}", cert.table())))
    }
}

#[derive(Serialize)]
struct SweepRow {
    parameter: f64,
    certified: bool,
    summary: Option<Summary>,
    error: Option<String>,
}

#[derive(Serialize)]
struct SweepOut<'a> {
    resolved: &'a Provenance,
    mode: SimMode,
    points: Vec<SweepRow>,
    #[serde(rename = "min_T")]
    min_t: Option<f64>,
    #[serde(rename = "max_T")]
    max_t: Option<f64>,
    failures: usize,
    uncertified: usize,
}

/// A point passes when it reached the origin within `Θ(x0)/γ` with bounded
/// control, the sampled decay rate and no admissibility violations.
fn point_certified(s: &Summary) -> bool {
    s.settling_time.is_some_and(|t| t <= s.time_bound)
        && s.max_u_norm <= 1.0 + CONTROL_SLACK
        && s.max_theta_dot <= -s.gamma + THETA_DOT_SLACK
        && s.violations == 0
}

fn sweep_output<'a>(resolved: &'a Provenance, mode: SimMode, report: SweepReport) -> SweepOut<'a> {
    let points: Vec<SweepRow> = report
        .points
        .into_iter()
        .map(|p| SweepRow {
            parameter: p.parameter,
            certified: p.summary.as_ref().is_some_and(point_certified),
            summary: p.summary,
            error: p.error,
        })
        .collect();
    let uncertified = points.iter().filter(|p| !p.certified).count();
    SweepOut {
        resolved,
        mode,
        points,
        min_t: report.min_t,
        max_t: report.max_t,
        failures: report.failures,
        uncertified,
    }
}

fn sweep_csv(out: &SweepOut<'_>) -> String {
    let mut csv = String::from("parameter,T,time_bound,max_u_norm,min_theta_dot,max_theta_dot,terminal,certified,error\n");
    for p in &out.points {
        let _ = write!(csv, "{}", p.parameter);
        match &p.summary {
            Some(s) => {
                let terminal = match s.terminal {
                    robsynth_core::simulator::Terminal::ReachedOrigin => "reached-origin",
                    robsynth_core::simulator::Terminal::TMaxExceeded => "t-max-exceeded",
                    robsynth_core::simulator::Terminal::LeftDomain => "left-domain",
                };
                let _ = write!(
                    csv,
                    ",{},{},{},{},{},{terminal}",
                    csv_value(s.settling_time),
                    s.time_bound,
                    s.max_u_norm,
                    s.min_theta_dot,
                    s.max_theta_dot
                );
            }
            None => csv.push_str(",,,,,,"),
        }
        let err = p.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        let _ = writeln!(csv, ",{},{err}", p.certified);
    }
    csv
}

fn settling_plot(out: &SweepOut<'_>, xlabel: &str) -> String {
    let pts: Vec<(f64, f64)> = out
        .points
        .iter()
        .filter_map(|p| Some((p.parameter, p.summary.as_ref()?.settling_time?)))
        .collect();
    let mut s = Series::line("T", pts);
    s.markers = true;
    line_chart("Time of motion across the sweep", xlabel, "T", &[s])
}

fn sweep_cmd(cli: &Cli) -> Result<(), Failure> {
    let cfg = load(cli)?;
    let r = resolve(&cfg, cli.seed)?;
    let spec = cfg.sweep.as_ref().ok_or_else(|| Failure::config("sweep: required for the sweep command"))?;
    let x0 = cfg.x0.clone().ok_or_else(|| Failure::config("x0: required for sweep"))?;
    // every point shares x0, so an x0 outside the level set is a domain error, not a failed point
    let theta0 = theta0_of(&r, Some(&x0))?.unwrap_or(0.0);
    if theta0 > r.artifacts.c() {
        return Err(robsynth_core::Error::OutsideDomain { theta0, c: r.artifacts.c() }.into());
    }
    let mask = r.perturbation.mask().clone();
    let declared = r.perturbation.bound();
    let families: Vec<(f64, PerturbationSpec)> = match spec {
        SweepConfig::Scale(values) => values
            .iter()
            .map(|&s| {
                r.perturbation
                    .scaled(s)
                    .map(|p| (s, p))
                    .map_err(|e| Failure::config(format!("sweep.scale: {e}")))
            })
            .collect::<Result<_, _>>()?,
        SweepConfig::Random { count, density } => {
            if !(0.0..=1.0).contains(density) {
                return Err(Failure::config(format!("sweep.random.density: must lie in [0,1], got {density}")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(r.provenance.seed);
            (0..*count)
                .map(|i| Ok((i as f64, PerturbationSpec::random_admissible(mask.clone(), declared, *density, &mut rng)?)))
                .collect::<Result<_, Failure>>()?
        }
    };
    let cases: Vec<SweepCase> = families
        .into_iter()
        .map(|(parameter, perturbation)| SweepCase {
            parameter,
            system: r.system.clone(),
            artifacts: r.artifacts.clone(),
            perturbation,
            x0: x0.clone(),
        })
        .collect();
    let out = sweep_output(&r.provenance, cfg.mode, sweep(&cases, cfg.mode, &cfg.integrator));
    let json = to_json(&out)?;
    let csv = sweep_csv(&out);
    let mut sink = Sink::new(cli.out.as_deref())?;
    sink.file("sweep.csv", &csv)?;
    sink.file("sweep.json", &json)?;
    if cli.plot {
        let label = match spec {
            SweepConfig::Scale(_) => "perturbation scale",
            SweepConfig::Random { .. } => "realization",
        };
        sink.file("settling.svg", &settling_plot(&out, label))?;
    }
    emit(cli, &sink, Format::Json, &json, &csv);
    if out.uncertified == 0 {
        Ok(())
    } else {
        Err(Failure::certification(format!("{} of {} sweep points not certified", out.uncertified, out.points.len())))
    }
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    tool: &'static str,
    version: &'static str,
    expectations_version: u32,
    resolved: Option<&'a Provenance>,
    overall: Status,
    certificate: &'a Certificate,
}

fn prefixed(cert: Certificate, prefix: &str) -> Certificate {
    Certificate {
        checks: cert
            .checks
            .into_iter()
            .map(|mut c| {
                c.name = format!("{prefix}{}", c.name);
                c
            })
            .collect(),
    }
}

fn verify_cmd(cli: &Cli, expectations: Option<&std::path::Path>, max_dim: usize) -> Result<(), Failure> {
    let exp = match expectations {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::config(format!("cannot read {}: {e}", p.display())))?;
            Expectations::from_json(&text).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?
        }
        None => Expectations::builtin(),
    };
    if !(1..=12).contains(&max_dim) {
        return Err(Failure::config(format!("--max-dim: must lie in 1..=12, got {max_dim}")));
    }
    let mut cert = verify::certify_all(&exp, max_dim)?;
    let resolved = match &cli.config {
        Some(_) => {
            let cfg = load(cli)?;
            let r = resolve(&cfg, cli.seed)?;
            cert.extend(prefixed(verify::check_identities(r.artifacts.gramians(), &verify::theta_grid(50)), "config/"));
            if let Some(x0) = &cfg.x0 {
                let traj = simulate(&r.system, &r.artifacts, &r.perturbation, x0, cfg.mode, &cfg.integrator)?;
                cert.extend(prefixed(certify_run(&traj, &r)?, "config/"));
            }
            Some(r.provenance)
        }
        None => None,
    };
    let report = VerifyReport {
        tool: "robsynth",
        version: env!("CARGO_PKG_VERSION"),
        expectations_version: exp.version,
        resolved: resolved.as_ref(),
        overall: cert.overall(),
        certificate: &cert,
    };
    let json = to_json(&report)?;
    let mut sink = Sink::new(cli.out.as_deref())?;
    sink.file("certificate.json", &json)?;
    match (cli.format, sink.enabled()) {
        (Some(Format::Json), _) => print!("{json}"),
        (Some(Format::Csv), _) => {
            let mut csv = String::from("name,status,measured,threshold\n");
            for c in &cert.checks {
                let status = match c.status {
                    Status::Pass => "pass",
                    Status::Fail => "fail",
                    Status::Warn => "warn",
                };
                let _ = writeln!(csv, "{},{status},{},{}", c.name.replace(',', ";"), c.measured, c.threshold);
            }
            print!("{csv}");
        }
        (None, _) => print!("{}", cert.table()),
    }
    if cert.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = cert.checks.iter().filter(|c| c.status == Status::Fail).map(|c| c.name.as_str()).collect();
        Err(Failure::certification(format!("failed checks: {}", failed.join(", "))))
    }
}

#[derive(Serialize)]
struct PendulumReport<'a> {
    resolved: &'a Provenance,
    case: &'static str,
    params: PendulumParams,
    study: RadiusStudy,
    x0: [f64; 4],
    theta0: f64,
    time_bound: f64,
    parameter_name: &'static str,
    trajectory_parameter: f64,
    summary: Summary,
    certificate: &'a Certificate,
    sweep: SweepOut<'a>,
    notes: Vec<String>,
}

fn pendulum_cmd(cli: &Cli, case: Case, param: Option<f64>, mode: SimMode) -> Result<(), Failure> {
    let cfg = IntegratorConfig::default();
    let (params, c, grid, name, default_param, study) = match case {
        Case::Case1 => {
            let p = PendulumParams::case1();
            let c = pendulum::solvability_radius_case1(&p, p.k, p.gamma);
            let grid: Vec<f64> = (0..=8).map(|i| 0.5 * i as f64).collect();
            (p, c, grid, "k0", 4.0, pendulum::study_case1(&p)?)
        }
        Case::Case2 => {
            let p = PendulumParams::case2();
            let c = pendulum::solvability_radius_case2(30.0, p.gamma, p.g);
            (p, c, vec![30.0, 60.0, 120.0, 300.0], "l", 30.0, pendulum::study_case2(&p, 30.0)?)
        }
    };
    let build = |v: f64| match case {
        Case::Case1 => pendulum::build_case1(&params, v),
        Case::Case2 => pendulum::build_case2(&params, v, 30.0),
    };
    let chosen = param.unwrap_or(default_param);
    let (system, perturbation) = build(chosen).map_err(|e| Failure::config(format!("--param: {e}")))?;
    let artifacts = SynthesisArtifacts::new(&system, c, params.gamma, None)?;
    let bound = RobustnessBound::margin(artifacts.gramians(), perturbation.mask(), params.gamma, c)?;
    let prov = provenance(&artifacts, &perturbation, &bound, ("solvability-radius", "max"), cli.seed.unwrap_or(0));

    let traj = simulate(&system, &artifacts, &perturbation, &X0, mode, &cfg)?;
    let cert = verify::certify_trajectory(&traj, &artifacts, params.gamma, perturbation.bound())?;

    let cases: Vec<SweepCase> = grid
        .iter()
        .map(|&v| {
            let (system, perturbation) = build(v)?;
            let artifacts = SynthesisArtifacts::new(&system, c, params.gamma, None)?;
            Ok(SweepCase { parameter: v, system, artifacts, perturbation, x0: X0.to_vec() })
        })
        .collect::<Result<_, robsynth_core::Error>>()?;
    let sweep_out = sweep_output(&prov, mode, sweep(&cases, mode, &cfg));
    let uncertified = sweep_out.uncertified;
    let notes = vec![
        format!("a0 = a0_max(c) keeps x0 inside the level set Θ ≤ c = {c}"),
        format!(
            "rho(G_tilde) = {} from the definition (sharpened c = {}, generic c = {})",
            study.rho_gtilde, study.c_sharpened, study.c_generic
        ),
    ];
    let report = PendulumReport {
        resolved: &prov,
        case: match case {
            Case::Case1 => "case1",
            Case::Case2 => "case2",
        },
        params,
        study,
        x0: X0,
        theta0: traj.theta0,
        time_bound: traj.theta0 / params.gamma,
        parameter_name: name,
        trajectory_parameter: chosen,
        summary: traj.summary(),
        certificate: &cert,
        sweep: sweep_out,
        notes,
    };
    let json = to_json(&report)?;
    let csv = sweep_csv(&report.sweep);
    let mut sink = Sink::new(cli.out.as_deref())?;
    sink.file(&format!("pendulum-{}.json", report.case), &json)?;
    sink.file("sweep.csv", &csv)?;
    sink.file("trajectory.csv", &traj.to_csv())?;
    if cli.plot {
        trajectory_plots(&mut sink, &traj, "")?;
        sink.file("settling.svg", &settling_plot(&report.sweep, name))?;
    }
    emit(cli, &sink, Format::Json, &json, &csv);
    if cert.passed() && uncertified == 0 {
        Ok(())
    } else {
        Err(Failure::certification(format!(
            "benchmark not certified ({uncertified} sweep points failed)\n{}",
            cert.table()
        )))
    }
}
