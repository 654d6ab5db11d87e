//! `wgdicke`: run figure presets or custom scans and write CSV, JSON and SVG.

mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use wgdicke::cumulant::derive_system;
use wgdicke::experiments::{run_scan_detailed, Solver};
use wgdicke::presets::{self, DickeTable};
use wgdicke::report::{self, Heatmap};

use config::{Effective, Format, IntegratorOverrides, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "wgdicke", version, about = "Collective emission and absorption of atom ensembles on a waveguide")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or a config file.
    Run(RunArgs),
    /// List presets, or describe one.
    ListPresets {
        #[arg(long, value_name = "NAME")]
        describe: Option<String>,
    },
    /// Print the second-order cumulant equations for a layout.
    ExportEquations {
        #[arg(long = "pumped", value_name = "M_P", default_value_t = 1)]
        pumped: usize,
        #[arg(long = "non-pumped", value_name = "M_NP", default_value_t = 1)]
        non_pumped: usize,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    preset: Option<String>,
    /// JSON run configuration.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    solver: Option<Solver>,
    /// Comma-separated subset of csv, json, svg.
    #[arg(long, value_delimiter = ',')]
    format: Option<Vec<Format>>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    /// Integration horizon in units of 1/(NΓ).
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::ListPresets { describe } => list_presets(describe.as_deref()).map(|_| ExitCode::SUCCESS),
        Command::ExportEquations { pumped, non_pumped, out } => {
            export_equations(pumped, non_pumped, out.as_deref()).map(|_| ExitCode::SUCCESS)
        }
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(1)
    })
}

/// Closing the pipe early (`| head`) is not an error.
fn stdout_err(e: std::io::Error) -> Result<(), String> {
    if e.kind() == std::io::ErrorKind::BrokenPipe {
        Ok(())
    } else {
        Err(e.to_string())
    }
}

fn list_presets(describe: Option<&str>) -> Result<(), String> {
    let mut stdout = std::io::stdout().lock();
    match describe {
        Some(name) => {
            let p = presets::find(name).map_err(|e| e.to_string())?;
            write!(stdout, "{}", p.describe()).or_else(stdout_err)
        }
        None => {
            let mut text = String::new();
            for p in presets::catalog() {
                text += &format!("{:<18} {:<9} {}\n", p.name, p.figure, p.summary);
            }
            stdout.write_all(text.as_bytes()).or_else(stdout_err)
        }
    }
}

fn export_equations(pumped: usize, non_pumped: usize, out: Option<&Path>) -> Result<(), String> {
    if pumped == 0 {
        return Err("at least one pumped sub-ensemble is required".into());
    }
    let system = derive_system(pumped + non_pumped).map_err(|e| e.to_string())?;
    let text = format!(
        "# layout: {pumped} pumped (indices 0..{pumped}) + {non_pumped} non-pumped sub-ensembles\n{}",
        system.listing()
    );
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display())),
        None => std::io::stdout().write_all(text.as_bytes()).or_else(stdout_err),
    }
}

#[derive(Serialize)]
struct ScanSummary {
    name: String,
    solver: Solver,
    points: usize,
    failed: usize,
    wall_time_s: f64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    config: &'a Effective,
    scans: Vec<ScanSummary>,
    files: Vec<String>,
    wall_time_s: f64,
    status: &'static str,
}

fn run(args: RunArgs) -> Result<ExitCode, String> {
    let file = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let flags = Overrides {
        preset: args.preset,
        solver: args.solver,
        integrator: IntegratorOverrides {
            rel_tol: args.rel_tol,
            abs_tol: args.abs_tol,
            horizon: args.horizon,
            max_steps: args.max_steps,
            ..IntegratorOverrides::default()
        },
        out: args.out,
        formats: args.format,
        workers: args.workers,
    };
    let effective = config::resolve(file, flags, config::from_env()?)?;
    std::fs::create_dir_all(&effective.out).map_err(|e| format!("{}: {e}", effective.out.display()))?;

    let start = Instant::now();
    let mut out = Output { dir: effective.out.clone(), files: Vec::new() };
    let tabular = effective.formats.iter().any(|f| matches!(f, Format::Csv | Format::Svg));
    let json = effective.formats.contains(&Format::Json);
    let svg = effective.formats.contains(&Format::Svg);
    let mut scans = Vec::new();

    for table in &effective.dicke {
        write_dicke(&mut out, table, tabular, json, svg)?;
    }
    for scenario in &effective.scenarios {
        let t0 = Instant::now();
        let outcomes = run_scan_detailed(scenario, Some(effective.workers)).map_err(|e| format!("scan `{}`: {e}", scenario.name))?;
        let records: Vec<_> = outcomes.iter().map(|o| o.record.clone()).collect();
        let failed = records.iter().filter(|r| !r.is_ok()).count();
        for r in records.iter().filter(|r| !r.is_ok()) {
            eprintln!(
                "warning: {} N={} N_p={} θ={:.4}: {}",
                scenario.name,
                r.n,
                r.n_p,
                r.theta,
                r.error.as_deref().unwrap_or("failed")
            );
        }
        if tabular {
            out.write(&format!("{}.csv", scenario.name), |w| report::write_records_csv(&records, w))?;
            for (i, o) in outcomes.iter().enumerate() {
                if let Some(ts) = &o.series {
                    out.write(&format!("{}_series_{i}.csv", scenario.name), |w| ts.write_csv(w))?;
                }
            }
        }
        if json {
            out.write(&format!("{}.json", scenario.name), |w| report::write_records_json(&records, w))?;
        }
        if svg {
            for (stem, body) in report::scan_figures(scenario, &outcomes) {
                out.write_text(&format!("{stem}.svg"), &body)?;
            }
        }
        let wall = t0.elapsed().as_secs_f64();
        eprintln!("{}: {} points, {} failed, {:.2} s", scenario.name, records.len(), failed, wall);
        scans.push(ScanSummary { name: scenario.name.clone(), solver: scenario.solver, points: records.len(), failed, wall_time_s: wall });
    }

    let partial = scans.iter().any(|s| s.failed > 0);
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        config: &effective,
        scans,
        files: out.files.clone(),
        wall_time_s: start.elapsed().as_secs_f64(),
        status: if partial { "partial" } else { "ok" },
    };
    let body = serde_json::to_string_pretty(&manifest).map_err(|e| e.to_string())?;
    out.write_text("manifest.json", &body)?;
    Ok(if partial { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn write<F>(&mut self, name: &str, body: F) -> Result<(), String>
    where
        F: FnOnce(&mut BufWriter<File>) -> wgdicke::Result<()>,
    {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?);
        body(&mut w).map_err(|e| format!("{}: {e}", path.display()))?;
        w.flush().map_err(|e| format!("{}: {e}", path.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<(), String> {
        self.write(name, |w| Ok(w.write_all(text.as_bytes())?))
    }
}

fn write_dicke(out: &mut Output, table: &DickeTable, tabular: bool, json: bool, svg: bool) -> Result<(), String> {
    let dist = table.distribution().map_err(|e| format!("{}: {e}", table.name))?;
    if tabular {
        out.write(&format!("{}.csv", table.name), |w| dist.write_csv(w))?;
    }
    if json {
        let body = serde_json::to_string_pretty(&dist.rows()).map_err(|e| e.to_string())?;
        out.write_text(&format!("{}.json", table.name), &body)?;
    }
    if svg {
        let rows = dist.rows();
        let axis = |f: fn(&wgdicke::dicke::DickeRow) -> f64| {
            let mut v: Vec<f64> = rows.iter().map(f).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let (ms, js) = (axis(|r| r.m), axis(|r| r.j));
        let mut values = vec![vec![f64::NAN; ms.len()]; js.len()];
        for r in &rows {
            let ix = ms.iter().position(|&m| m == r.m).unwrap_or(0);
            let iy = js.iter().position(|&j| j == r.j).unwrap_or(0);
            values[iy][ix] = r.p;
        }
        let map = Heatmap {
            title: format!("{}: P(J, M), N = {}, N_p = {}", table.name, table.n, table.n_p),
            x_label: "M".into(),
            y_label: "J".into(),
            xs: ms,
            ys: js,
            values,
            overlay: Vec::new(),
        };
        out.write_text(&format!("{}.svg", table.name), &report::heatmap_svg(&map))?;
    }
    Ok(())
}
