//! Run configuration: JSON file, environment and flags merged in that order.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use wgdicke::experiments::{IntegratorSettings, Scenario, Solver};
use wgdicke::presets::{self, DickeTable};

pub const ENV_OUT: &str = "WGDICKE_OUT";
pub const ENV_WORKERS: &str = "WGDICKE_WORKERS";
pub const DEFAULT_OUT: &str = "wgdicke-out";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "svg" => Ok(Format::Svg),
            other => Err(format!("unknown format `{other}` (expected csv, json or svg)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Svg => "svg",
        })
    }
}

/// Partial integrator settings; unset fields keep the scenario's value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorOverrides {
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub horizon: Option<f64>,
    pub steady_window: Option<f64>,
    pub steady_slope: Option<f64>,
    pub stop_at_steady: Option<bool>,
    pub max_steps: Option<usize>,
}

impl IntegratorOverrides {
    /// Fields set in `over` win.
    pub fn merged(&self, over: &Self) -> Self {
        Self {
            rel_tol: over.rel_tol.or(self.rel_tol),
            abs_tol: over.abs_tol.or(self.abs_tol),
            horizon: over.horizon.or(self.horizon),
            steady_window: over.steady_window.or(self.steady_window),
            steady_slope: over.steady_slope.or(self.steady_slope),
            stop_at_steady: over.stop_at_steady.or(self.stop_at_steady),
            max_steps: over.max_steps.or(self.max_steps),
        }
    }

    pub fn apply(&self, s: &mut IntegratorSettings) {
        if let Some(v) = self.rel_tol {
            s.rel_tol = v;
        }
        if let Some(v) = self.abs_tol {
            s.abs_tol = v;
        }
        if let Some(v) = self.horizon {
            s.horizon = v;
        }
        if let Some(v) = self.steady_window {
            s.steady_window = v;
        }
        if let Some(v) = self.steady_slope {
            s.steady_slope = v;
        }
        if let Some(v) = self.stop_at_steady {
            s.stop_at_steady = v;
        }
        if let Some(v) = self.max_steps {
            s.max_steps = v;
        }
    }
}

/// Contents of a `--config` file. Every field is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<String>,
    /// Scans run after the preset's own.
    pub scenarios: Vec<Scenario>,
    pub solver: Option<Solver>,
    pub integrator: IntegratorOverrides,
    pub out: Option<PathBuf>,
    pub formats: Option<Vec<Format>>,
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}:{e}", path.display()))
    }

    /// Errors read `line:column: message`.
    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let msg = msg.split(" at line ").next().unwrap_or(&msg).to_string();
            format!("{}:{}: {msg}", e.line(), e.column())
        })
    }
}

/// Settings given on the command line or through the environment.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub preset: Option<String>,
    pub solver: Option<Solver>,
    pub integrator: IntegratorOverrides,
    pub out: Option<PathBuf>,
    pub formats: Option<Vec<Format>>,
    pub workers: Option<usize>,
}

/// Fully resolved run, echoed verbatim into the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Effective {
    pub preset: Option<String>,
    pub out: PathBuf,
    pub formats: Vec<Format>,
    pub workers: usize,
    pub scenarios: Vec<Scenario>,
    pub dicke: Vec<DickeTable>,
}

pub fn resolve(file: RunConfig, flags: Overrides, env: Overrides) -> Result<Effective, String> {
    let preset = flags.preset.or(file.preset);
    let mut scenarios = Vec::new();
    let mut dicke = Vec::new();
    if let Some(name) = &preset {
        let p = presets::find(name).map_err(|e| e.to_string())?;
        scenarios = p.scenarios;
        dicke = p.dicke;
    }
    scenarios.extend(file.scenarios);
    if scenarios.is_empty() && dicke.is_empty() {
        return Err("nothing to run: give --preset or a config with `preset` or `scenarios`".into());
    }
    let solver = flags.solver.or(file.solver);
    let integrator = file.integrator.merged(&flags.integrator);
    for s in &mut scenarios {
        if let Some(sv) = solver {
            s.solver = sv;
        }
        integrator.apply(&mut s.integrator);
        s.validate().map_err(|e| format!("scan `{}`: {e}", s.name))?;
    }
    let mut names: Vec<&str> = scenarios.iter().map(|s| s.name.as_str()).chain(dicke.iter().map(|d| d.name.as_str())).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(format!("duplicate scan name `{}`", w[0]));
    }
    let mut formats = flags.formats.or(env.formats).or(file.formats).unwrap_or_else(|| vec![Format::Csv]);
    formats.sort_unstable();
    formats.dedup();
    let workers = flags
        .workers
        .or(env.workers)
        .or(file.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err("worker count must be at least 1".into());
    }
    Ok(Effective {
        preset,
        out: flags.out.or(env.out).or(file.out).unwrap_or_else(|| DEFAULT_OUT.into()),
        formats,
        workers,
        scenarios,
        dicke,
    })
}

/// `WGDICKE_OUT` and `WGDICKE_WORKERS`.
pub fn from_env() -> Result<Overrides, String> {
    let mut o = Overrides::default();
    if let Some(v) = std::env::var_os(ENV_OUT).filter(|v| !v.is_empty()) {
        o.out = Some(v.into());
    }
    if let Ok(v) = std::env::var(ENV_WORKERS) {
        if !v.is_empty() {
            o.workers = Some(v.trim().parse().map_err(|_| format!("{ENV_WORKERS}: `{v}` is not a worker count"))?);
        }
    }
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_errors_carry_position() {
        let err = RunConfig::parse("{\n  \"preset\": \"fig2b-small\",\n  \"wrkers\": 2\n}").unwrap_err();
        assert!(err.starts_with("3:"), "{err}");
        assert!(err.contains("wrkers"), "{err}");
    }

    #[test]
    fn flags_beat_env_beat_file() {
        let file = RunConfig {
            preset: Some("fig2c-dicke".into()),
            out: Some("from-file".into()),
            workers: Some(3),
            ..RunConfig::default()
        };
        let env = Overrides { out: Some("from-env".into()), workers: Some(2), ..Overrides::default() };
        let flags = Overrides { workers: Some(1), ..Overrides::default() };
        let e = resolve(file.clone(), flags, env).unwrap();
        assert_eq!(e.out, PathBuf::from("from-env"));
        assert_eq!(e.workers, 1);
        let e = resolve(file, Overrides::default(), Overrides::default()).unwrap();
        assert_eq!(e.out, PathBuf::from("from-file"));
        assert_eq!(e.workers, 3);
    }

    #[test]
    fn integrator_flags_override_file() {
        let file = RunConfig {
            preset: Some("fig4a-small".into()),
            integrator: IntegratorOverrides { rel_tol: Some(1e-6), horizon: Some(50.0), ..Default::default() },
            ..RunConfig::default()
        };
        let flags = Overrides {
            integrator: IntegratorOverrides { rel_tol: Some(1e-9), ..Default::default() },
            ..Overrides::default()
        };
        let e = resolve(file, flags, Overrides::default()).unwrap();
        assert!(e.scenarios.iter().all(|s| s.integrator.rel_tol == 1e-9 && s.integrator.horizon == 50.0));
    }

    #[test]
    fn unknown_preset_is_rejected() {
        let flags = Overrides { preset: Some("fig9".into()), ..Overrides::default() };
        let err = resolve(RunConfig::default(), flags, Overrides::default()).unwrap_err();
        assert!(err.contains("fig9"), "{err}");
    }
}
