use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use topomulti::config::RunConfig;
use topomulti::driver::{gradient_suite, run_optimization_with, RunOutcome, StopReason, GRADIENT_TOLERANCE};
use topomulti::fem::StructuredGrid;
use topomulti::interpolation::Scheme;
use topomulti::output::emit_artifacts;

#[derive(Parser)]
#[command(name = "topomulti", version, about = "Multi-material compliance topology optimization")]
struct Cli {
    /// Suppress per-iteration progress on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write images, history and optional VTK.
    Run {
        config: PathBuf,
        /// Output directory; overrides the `output` key.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat a run for several values of one key and tabulate the results.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        key: String,
        /// Comma separated; use `;` between values when the key takes a list.
        #[arg(long)]
        values: String,
        /// Summary CSV path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the configuration under every interpolation scheme.
    Compare {
        config: PathBuf,
        /// Summary CSV path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of the full gradient chain on a small mesh.
    Gradcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

struct Summary {
    label: String,
    compliance: f64,
    iterations: usize,
    stop: StopReason,
    volumes: Vec<f64>,
    grayness: Vec<f64>,
}

impl Summary {
    fn max_grayness(&self) -> f64 {
        self.grayness.iter().copied().fold(0.0, f64::max)
    }
}

fn optimize(cfg: &RunConfig, quiet: bool, tag: &str) -> topomulti::Result<RunOutcome> {
    let start = Instant::now();
    run_optimization_with(&cfg.problem_spec(), cfg.optimization_config()?, |r| {
        if !quiet {
            let beta = r.beta.map(|b| format!(" beta {b}")).unwrap_or_default();
            eprintln!(
                "{tag}it {:4}  c {:.6}  change {:.4}{beta}  {:.1}s",
                r.iteration,
                r.compliance,
                r.change,
                start.elapsed().as_secs_f64()
            );
        }
    })
}

fn summarize(label: String, out: &RunOutcome) -> Summary {
    let last = out.history.last().expect("a run records at least one iteration");
    Summary {
        label,
        compliance: last.compliance,
        iterations: last.iteration,
        stop: out.stop,
        volumes: last.volumes.clone(),
        grayness: last.grayness.clone(),
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" ")
}

fn print_table(header: &str, rows: &[Summary]) {
    println!("{header:<16} {:>10} {:>6}  {:<15} grayness", "compliance", "iters", "stop");
    for s in rows {
        println!(
            "{:<16} {:>10.5} {:>6}  {:<15} {}",
            s.label,
            s.compliance,
            s.iterations,
            format!("{:?}", s.stop),
            join(&s.grayness)
        );
    }
}

fn summary_csv(key: &str, rows: &[Summary]) -> String {
    let m = rows.iter().map(|s| s.grayness.len()).max().unwrap_or(0);
    let mut out = format!("{key},compliance,iterations,stop,max_grayness");
    for i in 1..=m {
        let _ = write!(out, ",grayness_{i}");
    }
    out.push('\n');
    for s in rows {
        let _ = write!(
            out,
            "{},{},{},{:?},{}",
            s.label,
            s.compliance,
            s.iterations,
            s.stop,
            s.max_grayness()
        );
        for i in 0..m {
            out.push(',');
            if let Some(g) = s.grayness.get(i) {
                let _ = write!(out, "{g}");
            }
        }
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, text: &str) -> Result<(), String> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    }
    std::fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

/// Runs independent configurations on up to `available_parallelism`
/// threads, keeping input order.
fn run_all(cfgs: &[(String, RunConfig)], quiet: bool) -> Result<Vec<Summary>, String> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(cfgs.len().max(1));
    let mut results: Vec<Option<Result<Summary, String>>> = (0..cfgs.len()).map(|_| None).collect();
    for (batch, slots) in cfgs.chunks(workers).zip(results.chunks_mut(workers)) {
        std::thread::scope(|scope| {
            let handles: Vec<_> = batch
                .iter()
                .map(|(label, cfg)| {
                    scope.spawn(move || {
                        optimize(cfg, quiet, &format!("[{label}] "))
                            .map(|out| summarize(label.clone(), &out))
                            .map_err(|e| format!("{label}: {e}"))
                    })
                })
                .collect();
            for (slot, h) in slots.iter_mut().zip(handles) {
                *slot = Some(h.join().unwrap_or_else(|_| Err("worker panicked".into())));
            }
        });
    }
    results.into_iter().map(|r| r.expect("every slot is filled")).collect()
}

fn run(config: &Path, out: Option<PathBuf>, quiet: bool) -> Result<(), String> {
    let cfg = RunConfig::from_file(config).map_err(|e| e.to_string())?;
    let dir = out.or_else(|| cfg.output.clone()).unwrap_or_else(|| {
        let stem = config.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
        PathBuf::from("out").join(stem)
    });
    let outcome = optimize(&cfg, quiet, "").map_err(|e| e.to_string())?;
    let spec = cfg.problem_spec();
    let grid = StructuredGrid::new(spec.nelx, spec.nely, spec.element_size()).map_err(|e| e.to_string())?;
    let files = emit_artifacts(&dir, &outcome.history, &outcome.design, cfg.scheme, &grid, cfg.vtk)
        .map_err(|e| e.to_string())?;
    let s = summarize(cfg.scheme.to_string(), &outcome);
    println!("compliance  {:.6}", s.compliance);
    println!("iterations  {} ({:?})", s.iterations, s.stop);
    println!("volumes     {}", join(&s.volumes));
    println!("grayness    {}", join(&s.grayness));
    for f in files {
        println!("wrote       {}", f.display());
    }
    Ok(())
}

fn sweep(config: &Path, key: &str, values: &str, out: Option<PathBuf>, quiet: bool) -> Result<(), String> {
    let base = RunConfig::from_file(config).map_err(|e| e.to_string())?;
    let sep = if values.contains(';') { ';' } else { ',' };
    let cfgs = values
        .split(sep)
        .map(|v| {
            let v = v.trim();
            base.with_override(key, v)
                .map(|c| (v.to_string(), c))
                .map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, _>>()?;
    if cfgs.is_empty() {
        return Err("no sweep values given".into());
    }
    let rows = run_all(&cfgs, quiet)?;
    print_table(key, &rows);
    let path = out.unwrap_or_else(|| PathBuf::from(format!("sweep_{key}.csv")));
    write_file(&path, &summary_csv(key, &rows))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn compare(config: &Path, out: Option<PathBuf>, quiet: bool) -> Result<(), String> {
    let base = RunConfig::from_file(config).map_err(|e| e.to_string())?;
    let cfgs: Vec<(String, RunConfig)> = Scheme::ALL
        .iter()
        .map(|&scheme| (scheme.to_string(), RunConfig { scheme, ..base.clone() }))
        .collect();
    let rows = run_all(&cfgs, quiet)?;
    print_table("scheme", &rows);
    if let Some(path) = out {
        write_file(&path, &summary_csv("scheme", &rows))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn gradcheck(seed: u64) -> Result<bool, String> {
    let cases = gradient_suite(seed).map_err(|e| e.to_string())?;
    let mut ok = true;
    for c in &cases {
        let status = if c.passed() { "ok  " } else { "FAIL" };
        ok &= c.passed();
        println!(
            "{status} {:<14} {:<12} {} materials  compliance {:.2e}  volume {:.2e}",
            c.scheme, c.filter, c.materials, c.check.compliance_error, c.check.volume_error
        );
    }
    println!("tolerance {GRADIENT_TOLERANCE:e}: {}", if ok { "passed" } else { "failed" });
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out } => run(&config, out, cli.quiet).map(|_| true),
        Command::Sweep { config, key, values, out } => sweep(&config, &key, &values, out, cli.quiet).map(|_| true),
        Command::Compare { config, out } => compare(&config, out, cli.quiet).map(|_| true),
        Command::Gradcheck { seed } => gradcheck(seed),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
