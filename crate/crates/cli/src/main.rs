use std::f64::consts::PI;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use rbm_coupling::geometry::{DomainSpec, Point};
use rbm_coupling::harness::{self, ExperimentConfig, ExperimentKind, HarnessError, RunOptions, StartSpec};
use rbm_coupling::stripmap::{build_frame, frame_from_hprime, strip_process_points, strip_self_check};

#[derive(Parser)]
#[command(name = "rbm-coupling", version, about = "Couplings of reflected Brownian motion: simulation and Monte Carlo experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synchronously coupled flow from a grid of starts; success is a
    /// time at which every member sits in the boundary band.
    SimulateSync(ExperimentArgs),
    /// Mirror couplings: a half-plane coupling, or the wedge event sweep.
    SimulateMirror(ExperimentArgs),
    /// Cone-point census over free planar paths.
    DetectCones(ExperimentArgs),
    /// Local-time overlap of two independent reflected paths across bin
    /// widths.
    MeasureOverlap(ExperimentArgs),
    /// Identity and derivative checks of the strip maps, optionally with
    /// per-step diagnostics of a saved wedge trajectory.
    StripCheck(StripArgs),
    /// Run an experiment described by a JSON config.
    Run(ExperimentArgs),
}

#[derive(Args, Clone, Default)]
struct ExperimentArgs {
    /// Base JSON config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Output directory for summary.json, trials.csv and timing.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Write per-path CSVs for the first few trials under OUT/paths.
    #[arg(long)]
    dump_paths: bool,
    /// halfplane | disk | square | wedge, or an inline JSON domain.
    #[arg(long)]
    domain: Option<String>,
    /// Wedge angle (radians) for `--domain wedge`.
    #[arg(long)]
    alpha: Option<f64>,
    /// First start point, `x,y`.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    x0: Option<Point>,
    /// Second start point, `x,y`.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    y0: Option<Point>,
    #[arg(long)]
    eps_bd: Option<f64>,
    #[arg(long)]
    eps_ang: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    k_max: Option<usize>,
    /// Cone half-angle for `detect-cones`.
    #[arg(long)]
    half_angle: Option<f64>,
    /// Comma-separated bin widths for `measure-overlap`.
    #[arg(long, value_delimiter = ',')]
    h_values: Option<Vec<f64>>,
}

#[derive(Args)]
struct StripArgs {
    #[arg(long, default_value_t = 1000)]
    frames: usize,
    #[arg(long, default_value_t = 1000)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trajectory CSV as written by `simulate-mirror --dump-paths` in a
    /// wedge.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Wedge angle of the trajectory.
    #[arg(long, default_value_t = PI / 4.0)]
    alpha: f64,
    /// Directory for strip_steps.csv; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_point(s: &str) -> Result<Point, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected x,y but got {s}"));
    }
    let x = parts[0].trim().parse::<f64>().map_err(|e| e.to_string())?;
    let y = parts[1].trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok(Point::new(x, y))
}

fn parse_domain(s: &str, alpha: Option<f64>) -> anyhow::Result<DomainSpec> {
    Ok(match s {
        "halfplane" => DomainSpec::upper_half_plane(),
        "disk" => DomainSpec::unit_disk(),
        "square" => DomainSpec::square(1.0),
        "wedge" => DomainSpec::wedge(alpha.unwrap_or(PI / 4.0)),
        json if json.trim_start().starts_with('{') => serde_json::from_str(json)?,
        other => bail!("unknown domain {other}"),
    })
}

/// Defaults for a subcommand run without `--config`.
fn base_config(kind: ExperimentKind) -> ExperimentConfig {
    let points = |pts: Vec<Point>| Some(StartSpec::Points { points: pts });
    let (domain, start_spec, dt, h_values) = match kind {
        ExperimentKind::SyncFlow => (
            Some(DomainSpec::unit_disk()),
            Some(StartSpec::Grid {
                center: Point::ORIGIN,
                radius: 0.05,
                per_side: 3,
            }),
            1e-3,
            None,
        ),
        ExperimentKind::ConeCensus => (None, None, 1e-4, None),
        ExperimentKind::SingularityTrend => (
            Some(DomainSpec::upper_half_plane()),
            points(vec![Point::new(0.0, 0.05), Point::new(1.0, 0.05)]),
            1e-4,
            Some(vec![0.2, 0.1, 0.05, 0.025]),
        ),
        ExperimentKind::MirrorHalfplane => (
            Some(DomainSpec::upper_half_plane()),
            points(vec![Point::new(0.2, 0.3), Point::new(-0.4, 0.5)]),
            1e-3,
            None,
        ),
        ExperimentKind::Theorem3 => (
            Some(DomainSpec::wedge(PI / 4.0)),
            Some(StartSpec::Sweep {
                hinge: 1.0,
                beta: 5.0 * PI / 16.0,
                along: vec![-0.03, -0.015, 0.0],
                height: vec![0.03, 0.05],
            }),
            2e-5,
            None,
        ),
    };
    ExperimentConfig {
        experiment: kind,
        domain,
        dt,
        horizon: 1.0,
        trials: 100,
        seed: 0,
        eps_bd: 0.01,
        eps_ang: 0.05,
        delta: 0.05,
        k_max: 10_000,
        start_spec,
        output_dir: None,
        half_angle: None,
        axis: None,
        h_values,
        beta_window: None,
    }
}

fn build_config(kind: Option<ExperimentKind>, a: &ExperimentArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match (&a.config, kind) {
        (Some(path), _) => {
            let mut c = ExperimentConfig::from_file(path)?;
            if let Some(k) = kind {
                c.experiment = k;
            }
            c
        }
        (None, Some(k)) => base_config(k),
        (None, None) => bail!(HarnessError::InvalidConfig {
            field: "config",
            message: "run needs --config".into(),
        }),
    };
    if let Some(d) = &a.domain {
        let d = parse_domain(d, a.alpha).map_err(|e| HarnessError::InvalidConfig {
            field: "domain",
            message: e.to_string(),
        })?;
        cfg.domain = Some(d);
    } else if let (Some(alpha), Some(DomainSpec::Wedge { .. })) = (a.alpha, &cfg.domain) {
        cfg.domain = Some(DomainSpec::wedge(alpha));
    }
    if let (Some(x), Some(y)) = (a.x0, a.y0) {
        cfg.start_spec = Some(StartSpec::Points { points: vec![x, y] });
    } else if let Some(x) = a.x0.or(a.y0) {
        cfg.start_spec = Some(StartSpec::Points { points: vec![x] });
    }
    macro_rules! set {
        ($field:ident) => {
            if let Some(v) = a.$field.clone() {
                cfg.$field = v;
            }
        };
    }
    set!(seed);
    set!(trials);
    set!(dt);
    set!(horizon);
    set!(eps_bd);
    set!(eps_ang);
    set!(delta);
    set!(k_max);
    if let Some(v) = a.half_angle {
        cfg.half_angle = Some(v);
    }
    if let Some(v) = &a.h_values {
        cfg.h_values = Some(v.clone());
    }
    if let Some(o) = &a.out {
        cfg.output_dir = Some(o.clone());
    }
    Ok(cfg)
}

fn run(kind: Option<ExperimentKind>, a: &ExperimentArgs) -> anyhow::Result<()> {
    let cfg = build_config(kind, a)?;
    let opts = RunOptions {
        workers: a.workers,
        dump_paths: a.dump_paths,
    };
    let summary = if cfg.output_dir.is_some() {
        harness::run_experiment(&cfg, &opts)?
    } else {
        harness::execute(&cfg, &opts)?.0
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    eprintln!("wall clock: {:.2} s", summary.wall_clock_seconds);
    Ok(())
}

fn field(row: &[&str], idx: usize) -> anyhow::Result<Option<f64>> {
    let s = row.get(idx).ok_or_else(|| anyhow!("short row"))?.trim();
    if s.is_empty() {
        Ok(None)
    } else {
        Ok(Some(s.parse()?))
    }
}

fn strip_check(a: &StripArgs) -> anyhow::Result<()> {
    let rep = strip_self_check(a.frames, a.points, a.seed);
    let out = serde_json::json!({
        "frames_tested": rep.frames_tested,
        "max_symmetry_residual": rep.max_symmetry_residual,
        "derivative_max_relerr": rep.derivative_max_relerr,
        "negativity_violations": rep.negativity_violations,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    let Some(path) = &a.trajectory else {
        return Ok(());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (mut xs, mut ys, mut ts, mut frames) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate().skip(1) {
        let row: Vec<&str> = line.split(',').collect();
        let num = |j| field(&row, j).with_context(|| format!("line {}", i + 1));
        let need = |j| num(j)?.ok_or_else(|| anyhow!("line {}: missing value", i + 1));
        ts.push(need(0)?);
        xs.push(Point::new(need(1)?, need(2)?));
        ys.push(Point::new(need(3)?, need(4)?));
        let frame = match (num(7)?, num(8)?, num(9)?) {
            (Some(hx), Some(hy), Some(beta)) if hy.abs() < 1e-12 => build_frame(a.alpha, hx, beta).ok(),
            (Some(hx), Some(hy), Some(beta)) => frame_from_hprime(a.alpha, hx.hypot(hy), beta).ok(),
            _ => None,
        };
        frames.push(frame);
    }
    let dt = if ts.len() > 1 { ts[1] - ts[0] } else { 0.0 };
    let sp = strip_process_points(&xs, &ys, dt, &frames)?;
    let mut w: Box<dyn Write> = match &a.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Box::new(io::BufWriter::new(fs::File::create(dir.join("strip_steps.csv"))?))
        }
        None => Box::new(io::stdout().lock()),
    };
    writeln!(w, "t,zRe,zIm,rhoTilde,residual,skipped")?;
    for k in 0..xs.len() {
        let (re, im) = sp.z_star[k].map_or((String::new(), String::new()), |z| (z.re.to_string(), z.im.to_string()));
        let res = sp.residual[k].map(|r| r.to_string()).unwrap_or_default();
        let skipped = u8::from(sp.skipped.binary_search(&k).is_ok());
        writeln!(w, "{},{re},{im},{},{res},{skipped}", ts[k], sp.rho_tilde[k])?;
    }
    w.flush()?;
    Ok(())
}

/// Wedge domains run the wedge event sweep, half-planes the half-plane
/// coupling; with only a config file its own experiment is used.
fn mirror_kind(a: &ExperimentArgs) -> anyhow::Result<Option<ExperimentKind>> {
    let domain = match &a.domain {
        Some(d) => Some(parse_domain(d, a.alpha).map_err(|e| HarnessError::InvalidConfig {
            field: "domain",
            message: e.to_string(),
        })?),
        None if a.config.is_some() => return Ok(None),
        None => None,
    };
    Ok(Some(match domain {
        Some(DomainSpec::Wedge { .. }) => ExperimentKind::Theorem3,
        None if a.alpha.is_some() => ExperimentKind::Theorem3,
        _ => ExperimentKind::MirrorHalfplane,
    }))
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<HarnessError>() {
        Some(HarnessError::InvalidConfig { .. }) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::SimulateSync(a) => run(Some(ExperimentKind::SyncFlow), a),
        Command::SimulateMirror(a) => match mirror_kind(a) {
            Ok(kind) => run(kind, a),
            Err(e) => Err(e),
        },
        Command::DetectCones(a) => run(Some(ExperimentKind::ConeCensus), a),
        Command::MeasureOverlap(a) => run(Some(ExperimentKind::SingularityTrend), a),
        Command::StripCheck(a) => strip_check(a),
        Command::Run(a) => run(None, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
