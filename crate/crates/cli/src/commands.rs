//! The five subcommands. Each builds a [`Report`]; nothing here writes
//! output directly.

use rayon::prelude::*;
use raftsplit_core::numerics::{spectral_radius_bound, verify_transience, Matrix};
use raftsplit_core::raft_sim::{empirical_heartbeat_stats, run_batch, SimConfig, TrialOutcome};
use raftsplit_core::split_model::{
    build_single_timeout_chain, fundamental_matrix, split_cdf, split_cdf_poisson, ModelParams,
};
use raftsplit_core::stats::{empirical_cdf, ks_distance, summarize, StepCdf, SUMMARY_QUANTILES};
use raftsplit_core::Error;

use crate::error::CliError;
use crate::report::{Cell, Report, Table};
use crate::settings::{CommandKind, RunConfig};

pub const TRANSIENCE_TOLERANCE: f64 = 1e-12;
pub const TRANSIENCE_MAX_POWER: u64 = 1 << 50;

/// A finished report plus the failure, if any, to signal once it is written.
#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub failure: Option<CliError>,
}

impl From<Report> for Outcome {
    fn from(report: Report) -> Self {
        Self { report, failure: None }
    }
}

pub fn execute(cfg: &RunConfig) -> Result<Outcome, CliError> {
    match cfg.command {
        CommandKind::Analyze => analyze(cfg).map(Outcome::from),
        CommandKind::Simulate => simulate(cfg),
        CommandKind::Compare => compare(cfg),
        CommandKind::Sweep => sweep(cfg).map(Outcome::from),
        CommandKind::Chain => chain(cfg).map(Outcome::from),
    }
}

fn config_json(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

fn sim_config(cfg: &RunConfig) -> &SimConfig {
    cfg.sim.as_ref().expect("simulate/compare configs carry a SimConfig")
}

pub fn analyze(cfg: &RunConfig) -> Result<Report, CliError> {
    let model = &cfg.model;
    let moments = model.split_moments(cfg.epsilon, cfg.step_cap)?;
    let last = (moments.truncation_step as u64).min(cfg.max_steps) as usize;
    let curve = model.curve(last)?;
    let binomial = split_cdf(&curve, model.n_nodes);
    let poisson = split_cdf_poisson(&curve, model.n_nodes);
    let fm = fundamental_matrix(&model.chain()?)?;

    let mut table = Table::new(&["step", "absorption_prob", "split_cdf", "split_pdf", "split_cdf_poisson"]);
    for step in 0..=last {
        table.push(vec![
            step.into(),
            curve.values[step].into(),
            binomial.cdf[step].into(),
            binomial.pdf[step].into(),
            poisson.cdf[step].into(),
        ]);
    }

    let mut report = Report::new(config_json(cfg), table);
    report.note("mean_steps", moments.mean_steps);
    report.note("variance_steps", moments.variance_steps);
    report.note("mean_ms", moments.mean_steps * model.heartbeat_interval_ms);
    report.note("n11", fm.expected_heartbeats);
    report.note("t_c", fm.time_to_candidate_steps);
    report.note("t_in", fm.mean_receipt_interval_steps);
    report.note("truncation_step", moments.truncation_step);
    report.note("truncated_tail_mass", moments.truncated_tail_mass);
    report.note("truncated_by_cap", moments.truncated_by_cap);
    report.note("table_rows_capped", last < moments.truncation_step);
    Ok(report)
}

fn trial_table(outcomes: &[TrialOutcome]) -> Table {
    let mut table = Table::new(&["trial", "split_step", "split_time_ms", "censored", "seed"]);
    for o in outcomes {
        table.push(vec![
            o.trial.into(),
            o.split_step.into(),
            o.split_time_ms.into(),
            o.censored.into(),
            o.seed.into(),
        ]);
    }
    table
}

fn note_sample_summary(report: &mut Report, outcomes: &[TrialOutcome]) -> Result<(), Error> {
    let s = summarize(outcomes)?;
    report.note("mean_steps", s.mean);
    report.note("variance_steps", s.variance);
    report.note("standard_error", s.standard_error);
    let times: Vec<f64> = outcomes.iter().filter(|o| !o.censored).map(|o| o.split_time_ms).collect();
    report.note("mean_ms", times.iter().sum::<f64>() / times.len() as f64);
    for q in SUMMARY_QUANTILES {
        let key = format!("{q}");
        report.note(&format!("quantile_{key}"), s.quantiles[&key]);
    }
    Ok(())
}

pub fn simulate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let sim = sim_config(cfg);
    let outcomes = run_batch(sim)?;
    let censored = outcomes.iter().filter(|o| o.censored).count();

    let mut report = Report::new(config_json(cfg), trial_table(&outcomes));
    report.note("trials", outcomes.len());
    report.note("uncensored", outcomes.len() - censored);
    report.note("censored", censored);
    if let Err(e) = note_sample_summary(&mut report, &outcomes) {
        return Ok(Outcome {
            report,
            failure: Some(e.into()),
        });
    }
    if let Ok(hb) = empirical_heartbeat_stats(&outcomes) {
        report.note("mean_heartbeats_before_candidacy", hb.mean_heartbeats_before_candidacy);
        report.note("mean_receipt_interval_steps", hb.mean_receipt_interval_steps);
        report.note("heartbeat_follower_samples", hb.follower_samples);
    }

    let ecdf = empirical_cdf(&outcomes)?;
    let mut table = Table::new(&["step", "empirical_cdf"]);
    for (&s, &p) in ecdf.steps.iter().zip(&ecdf.probabilities) {
        table.push(vec![s.into(), p.into()]);
    }
    report.extra.push(("ecdf", table));
    Ok(report.into())
}

pub fn compare(cfg: &RunConfig) -> Result<Outcome, CliError> {
    cfg.check_consistency()?;
    let model = &cfg.model;
    let moments = model.split_moments(cfg.epsilon, cfg.step_cap)?;
    let outcomes = run_batch(sim_config(cfg))?;
    let emp = empirical_cdf(&outcomes)?;
    let sample = summarize(&outcomes)?;

    let emp_last = emp.steps.last().copied().unwrap_or(0);
    let last = emp_last.max(moments.truncation_step as u64).min(cfg.max_steps);
    let analytical = split_cdf(&model.curve(last as usize)?, model.n_nodes);
    let ks = ks_distance(&analytical, &emp);

    let mut table = Table::new(&["step", "analytical_cdf", "empirical_cdf"]);
    for step in 0..=last {
        table.push(vec![step.into(), analytical.cdf[step as usize].into(), emp.value_at(step).into()]);
    }

    let passed = !cfg.ks_gate || ks <= cfg.ks_threshold;
    let mut report = Report::new(config_json(cfg), table);
    report.note("ks_distance", ks);
    report.note("ks_threshold", cfg.ks_threshold);
    report.note("ks_gate", cfg.ks_gate);
    report.note("passed", passed);
    report.note("analytical_mean_steps", moments.mean_steps);
    report.note("empirical_mean_steps", sample.mean);
    report.note("standard_error", sample.standard_error);
    report.note(
        "mean_z_score",
        (sample.mean - moments.mean_steps) / sample.standard_error,
    );
    report.note("trials", outcomes.len());
    report.note("censored", sample.censored);
    report.note("truncated_by_cap", moments.truncated_by_cap);

    let failure = (!passed).then_some(CliError::KsExceeded {
        ks,
        threshold: cfg.ks_threshold,
    });
    Ok(Outcome { report, failure })
}

/// One sweep row; `None` in the second slot when the point is fine, else a
/// warning for stderr.
fn sweep_row(n: usize, k: u32, p: f64, cfg: &RunConfig) -> Result<(Vec<Cell>, Option<String>), CliError> {
    let mut row: Vec<Cell> = vec![n.into(), k.into(), p.into()];
    if p == 0.0 {
        // Never absorbs: every moment diverges. Receipts arrive every step.
        row.extend(["inf", "inf", "inf", "inf"].map(Cell::from));
        row.push(1.0.into());
        return Ok((row, None));
    }
    let model = ModelParams::new(n, p, vec![k], cfg.model.heartbeat_interval_ms)?;
    let moments = model.split_moments(cfg.epsilon, cfg.step_cap)?;
    let fm = fundamental_matrix(&build_single_timeout_chain(k, p)?)?;
    row.extend([
        moments.mean_steps,
        moments.variance_steps,
        fm.expected_heartbeats,
        fm.time_to_candidate_steps,
        fm.mean_receipt_interval_steps,
    ]
    .map(Cell::from));
    let warning = moments.truncated_by_cap.then(|| {
        format!(
            "warning: N={n} K={k} p={p}: moment sums stopped at step {} with tail mass {:e}",
            moments.truncation_step, moments.truncated_tail_mass
        )
    });
    Ok((row, warning))
}

pub fn sweep(cfg: &RunConfig) -> Result<Report, CliError> {
    let grid = cfg.sweep.as_ref().expect("sweep configs carry a grid");
    let rows: Vec<_> = grid
        .points()
        .into_par_iter()
        .map(|(n, k, p)| sweep_row(n, k, p, cfg))
        .collect::<Result<_, _>>()?;

    let mut table = Table::new(&["N", "K", "p", "mean_steps", "variance_steps", "n11", "t_c", "t_in"]);
    let mut truncated = 0usize;
    for (row, warning) in rows {
        if let Some(w) = warning {
            eprintln!("{w}");
            truncated += 1;
        }
        table.push(row);
    }
    let mut report = Report::new(config_json(cfg), table);
    report.note("grid_points", grid.points().len());
    report.note("truncated_points", truncated);
    Ok(report)
}

fn push_matrix(table: &mut Table, name: &'static str, m: &Matrix) {
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            table.push(vec![name.into(), i.into(), j.into(), m[(i, j)].into()]);
        }
    }
}

pub fn chain(cfg: &RunConfig) -> Result<Report, CliError> {
    let tm = cfg.model.chain()?;
    let mut table = Table::new(&["matrix", "row", "col", "value"]);
    push_matrix(&mut table, "P", &tm.full);
    push_matrix(&mut table, "Q", &tm.q_block);
    push_matrix(&mut table, "R", &tm.r_block);
    let fundamental = match fundamental_matrix(&tm) {
        Ok(fm) => {
            push_matrix(&mut table, "N", &fm.n_matrix);
            Some(fm)
        }
        Err(Error::NoAbsorption) => None,
        Err(e) => return Err(e.into()),
    };

    let bound = spectral_radius_bound(&tm.q_block);
    let max_row_error = tm
        .full
        .row_sums()
        .iter()
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max);
    let mut report = Report::new(config_json(cfg), table);
    report.note("states", tm.full.rows());
    report.note("transient_states", tm.transient_count);
    report.note("absorbing_states", tm.absorbing_count);
    report.note("max_row_sum_error", max_row_error);
    report.note("spectral_bound", bound);
    report.note("spectral_bound_below_one", bound < 1.0);
    report.note(
        "transient",
        verify_transience(&tm.q_block, TRANSIENCE_TOLERANCE, TRANSIENCE_MAX_POWER),
    );
    match fundamental {
        Some(fm) => {
            report.note("fundamental_matrix", "available");
            report.note("n11", fm.expected_heartbeats);
            report.note("t_c", fm.time_to_candidate_steps);
            report.note("t_in", fm.mean_receipt_interval_steps);
        }
        None => report.note("fundamental_matrix", "unavailable: loss rate 0 never absorbs"),
    }
    Ok(report)
}
