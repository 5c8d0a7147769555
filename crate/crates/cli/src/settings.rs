//! Flag and config-file resolution into a [`RunConfig`].
//!
//! Precedence: command-line flags, then the `--config` file, then defaults.
//! The config file is a flat TOML table using the flag names as keys.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use raftsplit_core::raft_sim::{
    steps_for_range, Fidelity, SimConfig, DEFAULT_HEARTBEAT_MS, DEFAULT_LATENCY_MS, DEFAULT_MAX_STEPS, DEFAULT_TRIALS,
};
use raftsplit_core::split_model::{ModelParams, DEFAULT_EPSILON, DEFAULT_STEP_CAP};
use serde::Serialize;

use crate::error::CliError;

pub const DEFAULT_KS_THRESHOLD: f64 = 0.03;

#[derive(Debug, Parser)]
#[command(name = "raftsplit", version, about = "Raft network split analysis under packet loss")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandKind,

    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    /// Analytical split distribution, moments and fundamental-matrix results
    Analyze,
    /// Monte Carlo simulation of heartbeats until the network splits
    Simulate,
    /// Simulation against the analytical CDF, gated on KS distance
    Compare,
    /// Moments and fundamental-matrix results over a grid of N, K and p
    Sweep,
    /// Dump the transition matrix blocks and transience checks
    Chain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Raw flag values. Every field is optional so config-file values can fill
/// the gaps.
#[derive(Debug, Default, Clone, Args)]
pub struct Flags {
    /// Network size N (comma list for sweep)
    #[arg(long, global = true)]
    pub nodes: Option<String>,
    /// Packet loss rate p (comma list for sweep)
    #[arg(long, global = true)]
    pub loss: Option<String>,
    /// Timeout in heartbeat steps: one K, or a comma list (a timeout set; a K grid for sweep)
    #[arg(long, global = true)]
    pub timeout_steps: Option<String>,
    /// Heartbeat interval h in ms
    #[arg(long, global = true)]
    pub heartbeat_ms: Option<String>,
    /// Election timeout range a:b in ms
    #[arg(long, global = true)]
    pub timeout_range_ms: Option<String>,
    /// Message latency range lo:hi in ms (timed fidelity)
    #[arg(long, global = true)]
    pub latency_ms: Option<String>,
    /// lockstep or timed
    #[arg(long, global = true)]
    pub fidelity: Option<String>,
    #[arg(long, global = true)]
    pub trials: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<String>,
    /// Heartbeats per trial before censoring; also caps analyze table rows
    #[arg(long, global = true)]
    pub max_steps: Option<String>,
    /// Tail mass at which moment sums stop
    #[arg(long, global = true)]
    pub epsilon: Option<String>,
    /// Hard limit on steps summed for moments
    #[arg(long, global = true)]
    pub step_cap: Option<String>,
    /// csv or json
    #[arg(long, global = true)]
    pub format: Option<String>,
    #[arg(long, global = true)]
    pub out: Option<String>,
    /// Where simulate writes its empirical CDF table (default: next to --out)
    #[arg(long, global = true)]
    pub ecdf_out: Option<String>,
    #[arg(long, global = true)]
    pub ks_threshold: Option<String>,
    /// Flat TOML file with the same keys as the flags
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

const CONFIG_KEYS: &[&str] = &[
    "nodes",
    "loss",
    "timeout-steps",
    "heartbeat-ms",
    "timeout-range-ms",
    "latency-ms",
    "fidelity",
    "trials",
    "seed",
    "max-steps",
    "epsilon",
    "step-cap",
    "format",
    "out",
    "ecdf-out",
    "ks-threshold",
];

fn toml_to_flag_string(key: &str, value: &toml::Value) -> Result<String, CliError> {
    match value {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        toml::Value::Boolean(b) => Ok(b.to_string()),
        toml::Value::Array(items) => items
            .iter()
            .map(|v| toml_to_flag_string(key, v))
            .collect::<Result<Vec<_>, _>>()
            .map(|parts| parts.join(",")),
        _ => Err(CliError::Config(format!("config key {key:?} has an unsupported value type"))),
    }
}

impl Flags {
    /// Reads a flat TOML config file into flag form.
    pub fn from_config_file(path: &Path) -> Result<Flags, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_config_str(&text)
    }

    pub fn from_config_str(text: &str) -> Result<Flags, CliError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e| CliError::Config(format!("invalid config file: {e}")))?;
        let mut flags = Flags::default();
        for (key, value) in &table {
            let normalized = key.replace('_', "-");
            if !CONFIG_KEYS.contains(&normalized.as_str()) {
                return Err(CliError::Config(format!("unknown config key {key:?}")));
            }
            let v = Some(toml_to_flag_string(key, value)?);
            match normalized.as_str() {
                "nodes" => flags.nodes = v,
                "loss" => flags.loss = v,
                "timeout-steps" => flags.timeout_steps = v,
                "heartbeat-ms" => flags.heartbeat_ms = v,
                "timeout-range-ms" => flags.timeout_range_ms = v,
                "latency-ms" => flags.latency_ms = v,
                "fidelity" => flags.fidelity = v,
                "trials" => flags.trials = v,
                "seed" => flags.seed = v,
                "max-steps" => flags.max_steps = v,
                "epsilon" => flags.epsilon = v,
                "step-cap" => flags.step_cap = v,
                "format" => flags.format = v,
                "out" => flags.out = v,
                "ecdf-out" => flags.ecdf_out = v,
                "ks-threshold" => flags.ks_threshold = v,
                _ => unreachable!("key list checked above"),
            }
        }
        Ok(flags)
    }

    /// Fills every unset field from `fallback`.
    pub fn or(self, fallback: Flags) -> Flags {
        Flags {
            nodes: self.nodes.or(fallback.nodes),
            loss: self.loss.or(fallback.loss),
            timeout_steps: self.timeout_steps.or(fallback.timeout_steps),
            heartbeat_ms: self.heartbeat_ms.or(fallback.heartbeat_ms),
            timeout_range_ms: self.timeout_range_ms.or(fallback.timeout_range_ms),
            latency_ms: self.latency_ms.or(fallback.latency_ms),
            fidelity: self.fidelity.or(fallback.fidelity),
            trials: self.trials.or(fallback.trials),
            seed: self.seed.or(fallback.seed),
            max_steps: self.max_steps.or(fallback.max_steps),
            epsilon: self.epsilon.or(fallback.epsilon),
            step_cap: self.step_cap.or(fallback.step_cap),
            format: self.format.or(fallback.format),
            out: self.out.or(fallback.out),
            ecdf_out: self.ecdf_out.or(fallback.ecdf_out),
            ks_threshold: self.ks_threshold.or(fallback.ks_threshold),
            config: self.config.or(fallback.config),
        }
    }
}

fn parse_one<T: std::str::FromStr>(flag: &str, raw: &str) -> Result<T, CliError> {
    raw.trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("--{flag}: cannot parse {raw:?}")))
}

fn parse_list<T: std::str::FromStr>(flag: &str, raw: &str) -> Result<Vec<T>, CliError> {
    let items: Vec<T> = raw
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_one(flag, s))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(CliError::Usage(format!("--{flag}: empty list")));
    }
    Ok(items)
}

fn parse_range(flag: &str, raw: &str) -> Result<(f64, f64), CliError> {
    let (lo, hi) = raw
        .split_once(':')
        .ok_or_else(|| CliError::Usage(format!("--{flag}: expected lo:hi, got {raw:?}")))?;
    Ok((parse_one(flag, lo)?, parse_one(flag, hi)?))
}

fn required<'a>(flag: &str, value: &'a Option<String>) -> Result<&'a str, CliError> {
    value
        .as_deref()
        .ok_or_else(|| CliError::Usage(format!("--{flag} is required")))
}

fn optional<T: std::str::FromStr>(flag: &str, value: &Option<String>, default: T) -> Result<T, CliError> {
    value.as_deref().map_or(Ok(default), |raw| parse_one(flag, raw))
}

/// Grid for `sweep`, each axis sorted ascending and deduplicated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepGrid {
    pub nodes: Vec<usize>,
    pub timeout_steps: Vec<u32>,
    pub loss_rates: Vec<f64>,
}

impl SweepGrid {
    /// Grid points in lexicographic `(N, K, p)` order.
    pub fn points(&self) -> Vec<(usize, u32, f64)> {
        let mut out = Vec::new();
        for &n in &self.nodes {
            for &k in &self.timeout_steps {
                for &p in &self.loss_rates {
                    out.push((n, k, p));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub model: ModelParams,
    pub sim: Option<SimConfig>,
    pub sweep: Option<SweepGrid>,
    pub output_path: Option<PathBuf>,
    pub ecdf_path: Option<PathBuf>,
    pub output_format: OutputFormat,
    pub epsilon: f64,
    pub step_cap: usize,
    pub max_steps: u64,
    pub ks_threshold: f64,
    /// Whether the KS gate applies; off by default for timed fidelity.
    pub ks_gate: bool,
}

impl RunConfig {
    /// Merges flags with the config file (if any) and validates.
    pub fn from_cli(command: CommandKind, flags: Flags) -> Result<Self, CliError> {
        let merged = match flags.config.clone() {
            Some(path) => flags.or(Flags::from_config_file(&path)?),
            None => flags,
        };
        Self::resolve(command, &merged)
    }

    pub fn resolve(command: CommandKind, flags: &Flags) -> Result<Self, CliError> {
        let heartbeat_ms = optional("heartbeat-ms", &flags.heartbeat_ms, DEFAULT_HEARTBEAT_MS)?;
        let range = flags
            .timeout_range_ms
            .as_deref()
            .map(|raw| parse_range("timeout-range-ms", raw))
            .transpose()?;
        let epsilon = optional("epsilon", &flags.epsilon, DEFAULT_EPSILON)?;
        let step_cap = optional("step-cap", &flags.step_cap, DEFAULT_STEP_CAP)?;
        let max_steps = optional("max-steps", &flags.max_steps, DEFAULT_MAX_STEPS)?;
        let output_format = match flags.format.as_deref() {
            None | Some("csv") => OutputFormat::Csv,
            Some("json") => OutputFormat::Json,
            Some(other) => return Err(CliError::Usage(format!("--format: expected csv or json, got {other:?}"))),
        };
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(CliError::Config(format!("--epsilon must be in (0, 1), got {epsilon}")));
        }
        if step_cap == 0 || max_steps == 0 {
            return Err(CliError::Config("--step-cap and --max-steps must be >= 1".into()));
        }

        let timeouts_for_model = |raw: Option<&str>| -> Result<Vec<u32>, CliError> {
            match (raw, range) {
                (Some(raw), _) => parse_list("timeout-steps", raw),
                (None, Some(r)) => Ok(steps_for_range(r, heartbeat_ms)),
                (None, None) => Err(CliError::Usage(
                    "one of --timeout-steps or --timeout-range-ms is required".into(),
                )),
            }
        };

        let (model, sweep) = if command == CommandKind::Sweep {
            let mut nodes: Vec<usize> = parse_list("nodes", required("nodes", &flags.nodes)?)?;
            let mut ks: Vec<u32> = timeouts_for_model(flags.timeout_steps.as_deref())?;
            let mut ps: Vec<f64> = parse_list("loss", required("loss", &flags.loss)?)?;
            nodes.sort_unstable();
            nodes.dedup();
            ks.sort_unstable();
            ks.dedup();
            if ps.iter().any(|p| !p.is_finite()) {
                return Err(CliError::Config("--loss values must be finite".into()));
            }
            ps.sort_by(f64::total_cmp);
            ps.dedup();
            let grid = SweepGrid {
                nodes,
                timeout_steps: ks,
                loss_rates: ps,
            };
            for (n, k, p) in grid.points() {
                ModelParams::new(n, p, vec![k], heartbeat_ms).map_err(|e| CliError::Config(e.to_string()))?;
            }
            let (n, k, p) = grid.points()[0];
            let model = ModelParams::new(n, p, vec![k], heartbeat_ms).map_err(|e| CliError::Config(e.to_string()))?;
            (model, Some(grid))
        } else {
            let n_nodes = parse_one("nodes", required("nodes", &flags.nodes)?)?;
            let loss = parse_one("loss", required("loss", &flags.loss)?)?;
            let timeouts = timeouts_for_model(flags.timeout_steps.as_deref())?;
            let model =
                ModelParams::new(n_nodes, loss, timeouts, heartbeat_ms).map_err(|e| CliError::Config(e.to_string()))?;
            (model, None)
        };

        let fidelity: Fidelity = match flags.fidelity.as_deref() {
            None => Fidelity::Lockstep,
            Some(raw) => raw.parse().map_err(|e: raftsplit_core::Error| CliError::Usage(e.to_string()))?,
        };
        let sim = match command {
            CommandKind::Simulate | CommandKind::Compare => {
                let mut sim = match range {
                    Some(r) => SimConfig::from_timeout_range(model.n_nodes, model.loss_rate, r, heartbeat_ms),
                    None => {
                        let mut s = SimConfig::from_timeout_steps(
                            model.n_nodes,
                            model.loss_rate,
                            model.timeout_steps.clone(),
                        );
                        s.heartbeat_interval_ms = heartbeat_ms;
                        let k = &model.timeout_steps;
                        s.timeout_range_ms = (k[0] as f64 * heartbeat_ms, k[k.len() - 1] as f64 * heartbeat_ms);
                        s
                    }
                };
                sim.fidelity = fidelity;
                sim.latency_range_ms = match flags.latency_ms.as_deref() {
                    Some(raw) => parse_range("latency-ms", raw)?,
                    None => DEFAULT_LATENCY_MS,
                };
                sim.trials = optional("trials", &flags.trials, DEFAULT_TRIALS)?;
                sim.master_seed = optional("seed", &flags.seed, 0u64)?;
                sim.max_steps = max_steps;
                sim.validate().map_err(|e| CliError::Config(e.to_string()))?;
                Some(sim)
            }
            _ => None,
        };

        let ks_threshold = optional("ks-threshold", &flags.ks_threshold, DEFAULT_KS_THRESHOLD)?;
        let ks_gate = fidelity == Fidelity::Lockstep || flags.ks_threshold.is_some();

        let output_path = flags.out.as_deref().map(PathBuf::from);
        let ecdf_path = match (&flags.ecdf_out, &output_path) {
            (Some(p), _) => Some(PathBuf::from(p)),
            (None, Some(out)) if command == CommandKind::Simulate && output_format == OutputFormat::Csv => {
                Some(sibling_path(out, "ecdf"))
            }
            _ => None,
        };

        let config = RunConfig {
            command,
            model,
            sim,
            sweep,
            output_path,
            ecdf_path,
            output_format,
            epsilon,
            step_cap,
            max_steps,
            ks_threshold,
            ks_gate,
        };
        config.check_consistency()?;
        Ok(config)
    }

    /// Model and simulation must agree on N, p and h.
    pub fn check_consistency(&self) -> Result<(), CliError> {
        if let Some(sim) = &self.sim {
            let m = &self.model;
            if sim.n_nodes != m.n_nodes
                || sim.loss_rate != m.loss_rate
                || sim.heartbeat_interval_ms != m.heartbeat_interval_ms
            {
                return Err(CliError::Config(format!(
                    "model (N={}, p={}, h={}) and simulation (N={}, p={}, h={}) disagree",
                    m.n_nodes, m.loss_rate, m.heartbeat_interval_ms, sim.n_nodes, sim.loss_rate, sim.heartbeat_interval_ms
                )));
            }
        }
        Ok(())
    }
}

/// `dir/trials.csv` -> `dir/trials.<tag>.csv`.
pub fn sibling_path(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{tag}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{tag}"),
    };
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(pairs: &[(&str, &str)]) -> Flags {
        let text: String = pairs.iter().map(|(k, v)| format!("{k} = \"{v}\"\n")).collect();
        Flags::from_config_str(&text).unwrap()
    }

    #[test]
    fn defaults_apply() {
        let cfg = RunConfig::resolve(
            CommandKind::Simulate,
            &flags(&[("nodes", "5"), ("loss", "0.3"), ("timeout-steps", "3")]),
        )
        .unwrap();
        let sim = cfg.sim.unwrap();
        assert_eq!(sim.heartbeat_interval_ms, 50.0);
        assert_eq!(sim.latency_range_ms, (0.5, 10.0));
        assert_eq!(sim.trials, 10_000);
        assert_eq!(sim.timeout_steps, vec![3]);
        assert_eq!(sim.timeout_range_ms, (150.0, 150.0));
        assert_eq!(cfg.epsilon, 1e-9);
        assert_eq!(cfg.ks_threshold, 0.03);
        assert!(cfg.ks_gate);
        assert_eq!(cfg.output_format, OutputFormat::Csv);
    }

    #[test]
    fn flags_override_config_file() {
        let file = Flags::from_config_str("nodes = 7\nloss = 0.2\ntimeout-steps = [2, 3]\ntrials = 12\n").unwrap();
        let cli = Flags {
            loss: Some("0.4".into()),
            ..Flags::default()
        };
        let cfg = RunConfig::resolve(CommandKind::Simulate, &cli.or(file)).unwrap();
        assert_eq!(cfg.model.n_nodes, 7);
        assert_eq!(cfg.model.loss_rate, 0.4);
        assert_eq!(cfg.model.timeout_steps, vec![2, 3]);
        assert_eq!(cfg.sim.unwrap().trials, 12);
    }

    #[test]
    fn config_file_rejects_unknown_keys() {
        assert!(Flags::from_config_str("bogus = 1").is_err());
        assert!(Flags::from_config_str("nodes = ").is_err());
        // underscores are accepted as key separators
        assert_eq!(Flags::from_config_str("max_steps = 9").unwrap().max_steps.as_deref(), Some("9"));
    }

    #[test]
    fn range_derives_timeouts() {
        let cfg = RunConfig::resolve(
            CommandKind::Compare,
            &flags(&[("nodes", "5"), ("loss", "0.3"), ("timeout-range-ms", "150:250")]),
        )
        .unwrap();
        assert_eq!(cfg.model.timeout_steps, vec![3, 4, 5]);
        assert_eq!(cfg.sim.unwrap().timeout_steps, vec![3, 4, 5]);
    }

    #[test]
    fn mismatched_timeouts_allowed_between_model_and_sim() {
        let cfg = RunConfig::resolve(
            CommandKind::Compare,
            &flags(&[
                ("nodes", "5"),
                ("loss", "0.3"),
                ("timeout-steps", "3"),
                ("timeout-range-ms", "200:200"),
            ]),
        )
        .unwrap();
        assert_eq!(cfg.model.timeout_steps, vec![3]);
        assert_eq!(cfg.sim.unwrap().timeout_steps, vec![4]);
    }

    #[test]
    fn inconsistent_shared_params_rejected() {
        let mut cfg = RunConfig::resolve(
            CommandKind::Compare,
            &flags(&[("nodes", "5"), ("loss", "0.3"), ("timeout-steps", "3")]),
        )
        .unwrap();
        cfg.sim.as_mut().unwrap().n_nodes = 7;
        assert!(matches!(cfg.check_consistency(), Err(CliError::Config(_))));
    }

    #[test]
    fn usage_errors() {
        let missing = RunConfig::resolve(CommandKind::Analyze, &flags(&[("loss", "0.3"), ("timeout-steps", "3")]));
        assert!(matches!(missing, Err(CliError::Usage(_))));
        let no_timeout = RunConfig::resolve(CommandKind::Analyze, &flags(&[("nodes", "5"), ("loss", "0.3")]));
        assert!(matches!(no_timeout, Err(CliError::Usage(_))));
        let bad_format = RunConfig::resolve(
            CommandKind::Analyze,
            &flags(&[("nodes", "5"), ("loss", "0.3"), ("timeout-steps", "3"), ("format", "xml")]),
        );
        assert!(matches!(bad_format, Err(CliError::Usage(_))));
        let bad_value = RunConfig::resolve(
            CommandKind::Analyze,
            &flags(&[("nodes", "5"), ("loss", "1.3"), ("timeout-steps", "3")]),
        );
        assert!(matches!(bad_value, Err(CliError::Config(_))));
        let bad_latency = RunConfig::resolve(
            CommandKind::Simulate,
            &flags(&[("nodes", "5"), ("loss", "0.3"), ("timeout-steps", "3"), ("latency-ms", "1:80")]),
        );
        assert!(matches!(bad_latency, Err(CliError::Config(_))));
    }

    #[test]
    fn sweep_grid_is_sorted() {
        let cfg = RunConfig::resolve(
            CommandKind::Sweep,
            &flags(&[("nodes", "15,5"), ("loss", "0.3,0.1,0.3"), ("timeout-steps", "4,3")]),
        )
        .unwrap();
        let grid = cfg.sweep.unwrap();
        assert_eq!(grid.nodes, vec![5, 15]);
        assert_eq!(grid.timeout_steps, vec![3, 4]);
        assert_eq!(grid.loss_rates, vec![0.1, 0.3]);
        assert_eq!(grid.points()[..3], [(5, 3, 0.1), (5, 3, 0.3), (5, 4, 0.1)]);
    }

    #[test]
    fn timed_fidelity_disables_gate_unless_threshold_given() {
        let base = [("nodes", "5"), ("loss", "0.3"), ("timeout-steps", "3"), ("fidelity", "timed")];
        let cfg = RunConfig::resolve(CommandKind::Compare, &flags(&base)).unwrap();
        assert!(!cfg.ks_gate);
        let mut with = base.to_vec();
        with.push(("ks-threshold", "0.1"));
        let cfg = RunConfig::resolve(CommandKind::Compare, &flags(&with)).unwrap();
        assert!(cfg.ks_gate);
        assert_eq!(cfg.ks_threshold, 0.1);
    }

    #[test]
    fn ecdf_path_sits_next_to_output() {
        assert_eq!(sibling_path(Path::new("/tmp/run/trials.csv"), "ecdf"), Path::new("/tmp/run/trials.ecdf.csv"));
        assert_eq!(sibling_path(Path::new("trials"), "ecdf"), Path::new("trials.ecdf"));
    }
}
