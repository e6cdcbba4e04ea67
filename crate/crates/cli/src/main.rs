//! `heis`: curve generators, beta numbers, multiscale sums, inequality
//! verifiers, and filtration audits for the Heisenberg group.
//!
//! Exit codes: 0 success, 1 usage error, 2 verification violations found,
//! 3 I/O error.

use clap::{Args, Parser, Subcommand};
use heis_core::curve::{
    gen_lifted_circle, gen_lifted_square, gen_oscillating, gen_random_walk, gen_segment, Curve,
};
use heis_core::multires::Ball;
use heis_core::pipeline::{
    audit_corpus, beta_sum, build_filtration_instances, filtration_json, prepare_families,
    run_experiment, ExperimentOpts, OutputFormat, ParamSet,
};
use heis_core::verify::beta_ball;
use heis_core::{Error, Point};
use std::io::{BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "heis",
    about = "Heisenberg-group curve analysis: beta numbers, multiscale sums, verifiers"
)]
struct Cli {
    /// Config file with key=value lines mirroring the long flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    params: ParamArgs,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Clone, Default)]
struct ParamArgs {
    /// Koranyi parameter (0, 16].
    #[arg(long, global = true)]
    eta: Option<f64>,
    /// Curvature-inequality epsilon (0, 1/2).
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Flatness comparison constant.
    #[arg(long, global = true)]
    eps0: Option<f64>,
    /// Multiresolution implied constant (> 2).
    #[arg(long = "A", global = true)]
    a: Option<f64>,
    /// Scale separation exponent (>= 10).
    #[arg(long = "J", global = true)]
    j: Option<u32>,
    /// Same-radius separation factor.
    #[arg(long, global = true)]
    kappa: Option<f64>,
    /// Filtration merge threshold (0, 1).
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Finest net level.
    #[arg(long, global = true)]
    depth: Option<i32>,
    /// Oscillating generator stages.
    #[arg(long, global = true)]
    stages: Option<u32>,
    /// Oscillating angle decay exponent.
    #[arg(long, global = true)]
    q: Option<f64>,
    /// Oscillating angle scale.
    #[arg(long, global = true)]
    c: Option<f64>,
    /// Monte-Carlo sample count.
    #[arg(long, global = true)]
    samples: Option<u32>,
    /// Random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format for reports.
    #[arg(long, global = true, value_parser = ["csv", "json"])]
    format: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a curve file.
    Gen {
        /// Generator: oscillating | segment | circle | square | walk.
        #[arg(long, default_value = "oscillating")]
        kind: String,
    },
    /// Beta number of a single ball over a curve's sample points.
    Beta {
        /// Curve file.
        #[arg(long)]
        curve: PathBuf,
        /// Ball center "x,y,z".
        #[arg(long)]
        center: String,
        /// Ball radius.
        #[arg(long)]
        radius: f64,
    },
    /// Multiscale beta sums of a curve.
    Sum {
        /// Curve file.
        #[arg(long)]
        curve: PathBuf,
    },
    /// Run a verifier: prop4 | lemmas | martingale (or any experiment name).
    Verify { which: String },
    /// Build filtrations over a curve (or the audit corpus) and audit them.
    Filtration {
        /// Curve file; defaults to the audit corpus.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Merge CSV reports (single header, concatenated rows).
    Report {
        /// Input CSV files.
        inputs: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let args = match Cli::try_parse() {
        Ok(a) => a,
        Err(e) => {
            // clap prints help/version through Err as well.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    init_threads();
    match run(args) {
        Ok(violations) if violations > 0 => {
            eprintln!("verification violations found: {violations}");
            ExitCode::from(2)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(Error::Io(e)) => {
            eprintln!("I/O error: {e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// HEIS_TSP_THREADS caps the rayon pool.
fn init_threads() {
    if let Ok(v) = std::env::var("HEIS_TSP_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
}

/// Merge config-file values (lowest), then CLI flags (highest) over defaults.
fn effective_args(cli: &Cli) -> Result<ParamArgs, Error> {
    let mut merged = ParamArgs::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("config line {} is not key=value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: std::num::ParseFloatError| Error::Parse(format!("{key}: {e}"));
            match key {
                "eta" => merged.eta = Some(value.parse().map_err(bad)?),
                "epsilon" => merged.epsilon = Some(value.parse().map_err(bad)?),
                "eps0" => merged.eps0 = Some(value.parse().map_err(bad)?),
                "A" => merged.a = Some(value.parse().map_err(bad)?),
                "J" => {
                    merged.j = Some(value.parse().map_err(|e| {
                        Error::Parse(format!("J: {e}"))
                    })?)
                }
                "kappa" => merged.kappa = Some(value.parse().map_err(bad)?),
                "delta" => merged.delta = Some(value.parse().map_err(bad)?),
                "depth" => {
                    merged.depth = Some(value.parse().map_err(|e| {
                        Error::Parse(format!("depth: {e}"))
                    })?)
                }
                "stages" => {
                    merged.stages = Some(value.parse().map_err(|e| {
                        Error::Parse(format!("stages: {e}"))
                    })?)
                }
                "q" => merged.q = Some(value.parse().map_err(bad)?),
                "c" => merged.c = Some(value.parse().map_err(bad)?),
                "samples" => {
                    merged.samples = Some(value.parse().map_err(|e| {
                        Error::Parse(format!("samples: {e}"))
                    })?)
                }
                "seed" => {
                    merged.seed = Some(value.parse().map_err(|e| {
                        Error::Parse(format!("seed: {e}"))
                    })?)
                }
                "out" => merged.out = Some(PathBuf::from(value)),
                "format" => merged.format = Some(value.to_string()),
                other => return Err(Error::Parse(format!("unknown config key '{other}'"))),
            }
        }
    }
    let cli_p = &cli.params;
    macro_rules! override_some {
        ($($field:ident),*) => {
            $(if cli_p.$field.is_some() { merged.$field = cli_p.$field.clone(); })*
        };
    }
    override_some!(
        eta, epsilon, eps0, a, j, kappa, delta, depth, stages, q, c, samples, seed, out, format
    );
    Ok(merged)
}

fn to_params(args: &ParamArgs) -> ParamSet {
    let mut p = ParamSet::default();
    if let Some(v) = args.eta {
        p.eta = v;
    }
    if let Some(v) = args.epsilon {
        p.epsilon = v;
    }
    if let Some(v) = args.eps0 {
        p.eps0 = v;
    }
    if let Some(v) = args.a {
        p.a = v;
    }
    if let Some(v) = args.j {
        p.j = v;
    }
    if let Some(v) = args.kappa {
        p.kappa = v;
    }
    if let Some(v) = args.delta {
        p.delta = v;
    }
    if let Some(v) = args.depth {
        p.net_depth = v;
    }
    if let Some(v) = args.samples {
        p.samples = v;
    }
    if let Some(v) = args.seed {
        p.seed = v;
    }
    p
}

fn run(cli: Cli) -> Result<u32, Error> {
    let args = effective_args(&cli)?;
    let params = to_params(&args);
    let ctx = params.ctx()?;
    let format = match args.format.as_deref() {
        Some("json") => OutputFormat::Json,
        _ => OutputFormat::Csv,
    };
    // Filtration audits default to a reachable fine scale when no depth was
    // given (the sum default of 8 leaves the fine family empty for A = 10).
    let audit_params = |mut p: ParamSet| {
        if args.depth.is_none() {
            p.net_depth = 11;
            p.j = 10;
            p.delta = 2f64.powi(-5);
            p.density = 5e-3;
        }
        p
    };

    match &cli.cmd {
        Cmd::Gen { kind } => {
            let stages = args.stages.unwrap_or(4);
            let q = args.q.unwrap_or(0.6);
            let c = args.c.unwrap_or(0.5);
            let curve = match kind.as_str() {
                "oscillating" => gen_oscillating(&ctx, q, c, stages, 1.0)?,
                "segment" => gen_segment(&ctx, 1.0)?,
                "circle" => gen_lifted_circle(&ctx, 256, 0.5)?,
                "square" => gen_lifted_square(&ctx, 1.0, 16)?,
                "walk" => gen_random_walk(&ctx, 40, 0.1, params.seed)?,
                other => return Err(Error::Domain(format!("unknown generator '{other}'"))),
            };
            let out = args
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from(format!("{kind}.curve")));
            let file = std::fs::File::create(&out)?;
            curve.write_to(std::io::BufWriter::new(file))?;
            println!("wrote {} samples to {}", curve.len(), out.display());
            Ok(0)
        }
        Cmd::Beta {
            curve,
            center,
            radius,
        } => {
            let curve = read_curve(&ctx, curve)?;
            let coords: Vec<f64> = center
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| Error::Parse(format!("bad center: {e}")))?;
            if coords.len() != 3 {
                return Err(Error::Parse("center must be x,y,z".into()));
            }
            let ball = Ball {
                center: Point::new(coords[0], coords[1], coords[2]),
                radius: *radius,
                level: 0,
            };
            let beta = beta_ball(&ctx, curve.points(), &ball)?;
            println!("{}", heis_core::pipeline::fmt_sig(beta));
            Ok(0)
        }
        Cmd::Sum { curve } => {
            let curve = read_curve(&ctx, curve)?;
            let report = beta_sum(&ctx, &curve, &params, "cli")?;
            let text = match format {
                OutputFormat::Csv => report.to_csv()?,
                OutputFormat::Json => serde_json::to_string_pretty(&report).unwrap(),
            };
            emit(&args.out, &text)?;
            Ok(0)
        }
        Cmd::Verify { which } => {
            let p = match which.as_str() {
                "martingale" | "filtration-audit" => audit_params(params.clone()),
                _ => params.clone(),
            };
            let opts = experiment_opts(&args, format);
            let (paths, violations) = run_experiment(which, &p, &opts)?;
            for p in paths {
                println!("wrote {}", p.display());
            }
            Ok(violations)
        }
        Cmd::Filtration { curve } => {
            let p = audit_params(params.clone());
            let mut violations = 0u32;
            let mut exports = Vec::new();
            let curves: Vec<(String, Curve)> = match curve {
                Some(path) => vec![(
                    path.file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| "curve".into()),
                    read_curve(&ctx, path)?,
                )],
                None => audit_corpus(&ctx, p.seed)?,
            };
            for (label, curve) in &curves {
                let audit = heis_core::pipeline::audit_filtrations(&ctx, curve, &p, label)?;
                violations += audit.property_failures
                    + audit.chord_sum_violations
                    + audit.telescoping_violations
                    + audit.dtau_bound_violations;
                let (refined, families) = prepare_families(&ctx, curve, &p)?;
                let instances = build_filtration_instances(&ctx, &refined, &families, &p)?;
                let filts: Vec<serde_json::Value> = instances
                    .iter()
                    .map(|(_, f)| filtration_json(&refined, f))
                    .collect();
                exports.push(serde_json::json!({
                    "label": label,
                    "audit": audit,
                    "filtrations": filts,
                }));
            }
            let text = serde_json::to_string_pretty(&exports).unwrap();
            emit(&args.out, &text)?;
            Ok(violations)
        }
        Cmd::Report { inputs } => {
            if inputs.is_empty() {
                return Err(Error::Domain("report: no input CSV files".into()));
            }
            let mut merged = String::new();
            let mut header: Option<String> = None;
            for path in inputs {
                let text = std::fs::read_to_string(path)?;
                let mut lines = text.lines();
                let Some(h) = lines.next() else { continue };
                match &header {
                    None => {
                        header = Some(h.to_string());
                        merged.push_str(h);
                        merged.push('\n');
                    }
                    Some(prev) if prev != h => {
                        return Err(Error::Domain(format!(
                            "CSV headers differ: '{prev}' vs '{h}'"
                        )))
                    }
                    _ => {}
                }
                for line in lines {
                    if !line.trim().is_empty() {
                        merged.push_str(line);
                        merged.push('\n');
                    }
                }
            }
            emit(&args.out, &merged)?;
            Ok(0)
        }
    }
}

fn experiment_opts(args: &ParamArgs, format: OutputFormat) -> ExperimentOpts {
    let mut opts = ExperimentOpts {
        format,
        ..Default::default()
    };
    if let Some(q) = args.q {
        opts.q = q;
    }
    if let Some(c) = args.c {
        opts.c = c;
    }
    if let Some(s) = args.stages {
        opts.stages = vec![s];
    }
    if let Some(out) = &args.out {
        opts.out_dir = out.clone();
    }
    opts
}

fn read_curve(ctx: &heis_core::MetricCtx, path: &PathBuf) -> Result<Curve, Error> {
    let file = std::fs::File::open(path)?;
    Curve::read_from(ctx, BufReader::new(file))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            let mut f = std::fs::File::create(path)?;
            f.write_all(text.as_bytes())?;
            Ok(())
        }
        None => {
            print!("{text}");
            std::io::stdout().flush()?;
            Ok(())
        }
    }
}
