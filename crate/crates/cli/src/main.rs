use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cbf_inspect::scenario::{self, builtin_text, parse_config, ConfigError, Scenario};
use cbf_inspect::sim::{exit, run_to_csv, SummaryReport};
use clap::Parser;

/// Run a spacecraft inspection scenario and report on its safety.
///
/// Exit status: 0 mission complete with no violations, 1 mission incomplete
/// or violations recorded, 2 violation with --strict, 3 numerical failure,
/// 4 configuration error.
#[derive(Debug, Parser)]
#[command(name = "cbf-inspect", version)]
struct Args {
    /// Scenario file (TOML syntax). Repeat with --batch to run several.
    #[arg(long, value_name = "PATH")]
    config: Vec<PathBuf>,

    /// Bundled scenario by name (intelsat30, freespace). Repeatable with --batch.
    #[arg(long, value_name = "NAME")]
    builtin: Vec<String>,

    /// Telemetry CSV path; with --batch, a directory receiving NAME.csv files.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Override the maximum simulated duration, s.
    #[arg(long, value_name = "S")]
    duration: Option<f64>,

    /// Override the control and integration step, s.
    #[arg(long, value_name = "S")]
    dt: Option<f64>,

    /// Abort at the first safety violation with exit status 2.
    #[arg(long)]
    strict: bool,

    /// Override the scenario seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Write the summary as JSON ("-" for stdout).
    #[arg(long, value_name = "PATH")]
    summary_json: Option<PathBuf>,

    /// Run every given scenario on its own thread.
    #[arg(long)]
    batch: bool,
}

enum Source {
    File(PathBuf),
    Builtin(String),
}

impl Source {
    fn label(&self) -> String {
        match self {
            Source::File(p) => p.display().to_string(),
            Source::Builtin(n) => n.clone(),
        }
    }
}

fn load(src: &Source, args: &Args) -> Result<Scenario, ConfigError> {
    let text = match src {
        Source::File(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
            path: p.display().to_string(),
            source,
        })?,
        Source::Builtin(n) => builtin_text(n)
            .ok_or_else(|| ConfigError::UnknownBuiltin(n.clone()))?
            .to_owned(),
    };
    let mut cfg = parse_config(&text)?;
    if let Some(d) = args.duration {
        cfg.max_duration = d;
    }
    if let Some(dt) = args.dt {
        cfg.dt = dt;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.strict |= args.strict;
    Scenario::from_config(cfg)
}

/// Run one scenario; returns its summary or the exit status of a failure
/// that happened before the run produced one.
fn run_one(src: &Source, args: &Args, out: Option<&Path>) -> Result<SummaryReport, i32> {
    let sc = load(src, args).map_err(|e| {
        eprintln!("{}: configuration error: {e}", src.label());
        exit::CONFIG_ERROR
    })?;
    for n in &sc.notices {
        eprintln!("{}: notice: {n}", sc.name);
    }
    let sink = out.map_or_else(|| PathBuf::from(if cfg!(windows) { "NUL" } else { "/dev/null" }), Path::to_path_buf);
    let summary = run_to_csv(&sc, &sink).map_err(|e| {
        eprintln!("{}: {e}", sc.name);
        exit::NUMERICAL_FAILURE
    })?;
    if let Some(f) = &summary.failure {
        eprintln!("{}: numerical failure: {f}", sc.name);
    }
    eprintln!(
        "{}: exit {} | t = {:.1} s | checkpoints {} | min h_p {:.6e} | min h_a {:.6e} | violations {} | degraded steps {}",
        sc.name,
        summary.exit_status,
        summary.final_time_s,
        summary.checkpoints_reached,
        summary.min_h_p,
        summary.min_h_min,
        summary.violations,
        summary.degraded_steps
    );
    Ok(summary)
}

fn write_json(path: &Path, value: &serde_json::Value) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    if path == Path::new("-") {
        print!("{text}");
        Ok(())
    } else {
        std::fs::write(path, text)
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut sources: Vec<Source> = args.config.iter().cloned().map(Source::File).collect();
    sources.extend(args.builtin.iter().cloned().map(Source::Builtin));
    if sources.is_empty() {
        eprintln!(
            "no scenario given; use --config PATH or --builtin NAME (one of {})",
            scenario::BUILTIN_NAMES.join(", ")
        );
        return ExitCode::from(exit::CONFIG_ERROR as u8);
    }
    if sources.len() > 1 && !args.batch {
        eprintln!("several scenarios given; pass --batch to run them together");
        return ExitCode::from(exit::CONFIG_ERROR as u8);
    }

    let results: Vec<Result<SummaryReport, i32>> = if args.batch {
        if let Some(dir) = &args.out {
            if let Err(e) = std::fs::create_dir_all(dir) {
                eprintln!("{}: {e}", dir.display());
                return ExitCode::from(exit::CONFIG_ERROR as u8);
            }
        }
        std::thread::scope(|s| {
            let handles: Vec<_> = sources
                .iter()
                .map(|src| {
                    let args = &args;
                    s.spawn(move || {
                        let name = match src {
                            Source::File(p) => p.file_stem().map_or("scenario".into(), |s| s.to_string_lossy().into_owned()),
                            Source::Builtin(n) => n.clone(),
                        };
                        let out = args.out.as_ref().map(|d| d.join(format!("{name}.csv")));
                        run_one(src, args, out.as_deref())
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap_or(Err(exit::NUMERICAL_FAILURE))).collect()
        })
    } else {
        vec![run_one(&sources[0], &args, args.out.as_deref())]
    };

    let status = results
        .iter()
        .map(|r| match r {
            Ok(s) => s.exit_status,
            Err(code) => *code,
        })
        .max()
        .unwrap_or(exit::SUCCESS);

    if let Some(path) = &args.summary_json {
        let summaries: Vec<&SummaryReport> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
        let value = if args.batch {
            serde_json::to_value(&summaries)
        } else {
            match summaries.first() {
                Some(s) => serde_json::to_value(s),
                None => Ok(serde_json::Value::Null),
            }
        };
        let written = value.map_err(std::io::Error::from).and_then(|v| write_json(path, &v));
        if let Err(e) = written {
            eprintln!("{}: {e}", path.display());
            return ExitCode::from(exit::CONFIG_ERROR as u8);
        }
    }
    ExitCode::from(status as u8)
}
