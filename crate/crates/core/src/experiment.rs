//! Monte Carlo estimation of the eavesdropping non-outage probability.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bcd::{run_bcd, BcdOptions, BcdTrace, Scheme};
use crate::channel::{trial_channels, trial_rng, ChannelSet, StreamPurpose};
use crate::config::{db_to_linear, linear_to_db, SystemConfig};
use crate::error::{CoreError, Result};
use crate::metrics::{eaves_indicator, LinkTerms, Powers};
use crate::phase::init_star;

/// Two-sided 95% standard normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Outcome of one Monte Carlo trial for one scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub trial: u64,
    pub scheme: Scheme,
    pub rho_e_db: f64,
    pub sigma_si2_db: f64,
    pub sinr_d: f64,
    pub sinr_e: f64,
    pub indicator: u8,
    pub iterations: usize,
    pub wall_ms: f64,
    /// Set when the optimizer failed; the SINRs then belong to the last
    /// accepted design, or are NaN if there was none.
    pub error: Option<String>,
}

/// Samples the channels of `trial` and runs the alternating design for
/// `scheme` from the trial's random initial coefficients.
pub fn trial_trace(
    cfg: &SystemConfig,
    scheme: Scheme,
    trial: u64,
    opts: &BcdOptions,
) -> Result<(ChannelSet, BcdTrace)> {
    let ch = trial_channels(cfg, trial)?;
    let pw = Powers::from_config(cfg);
    let init = init_star(cfg.n, &mut trial_rng(cfg.seed, trial, StreamPurpose::Init))?;
    let mut rng = trial_rng(cfg.seed, trial, StreamPurpose::Randomization);
    let trace = run_bcd(&ch, &pw, &init, scheme, opts, &mut rng)?;
    Ok((ch, trace))
}

/// Runs [`trial_trace`] and evaluates the final SINRs and the indicator.
///
/// Failures are recorded in [`ExperimentRecord::error`] rather than returned,
/// so a sweep never loses a trial.
pub fn run_trial(
    cfg: &SystemConfig,
    scheme: Scheme,
    trial: u64,
    opts: &BcdOptions,
) -> ExperimentRecord {
    let start = Instant::now();
    let mut rec = ExperimentRecord {
        trial,
        scheme,
        rho_e_db: linear_to_db(cfg.rho_e()),
        sigma_si2_db: linear_to_db(cfg.sigma_si2),
        sinr_d: f64::NAN,
        sinr_e: f64::NAN,
        indicator: 0,
        iterations: 0,
        wall_ms: 0.0,
        error: None,
    };
    let outcome = trial_trace(cfg, scheme, trial, opts).and_then(|(ch, trace)| {
        let pw = Powers::from_config(cfg);
        let terms = LinkTerms::evaluate(&ch, &trace.star, &trace.pair)?;
        rec.sinr_d = terms.sinr_d(&pw);
        rec.sinr_e = terms.sinr_e(&pw);
        rec.iterations = trace.iterations.len();
        rec.error = trace.failure;
        Ok(())
    });
    if let Err(e) = outcome {
        warn!("trial {trial} ({scheme}) failed: {e}");
        rec.error = Some(e.to_string());
    }
    rec.indicator = eaves_indicator(rec.sinr_e, rec.sinr_d);
    rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    rec
}

/// Point estimate and Wilson score interval for `P_NOP`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NopEstimate {
    pub trials: usize,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Wilson 95% interval for `successes` out of `trials` Bernoulli draws.
pub fn wilson_interval(successes: usize, trials: usize) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(CoreError::Empty("no trials"));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Ok(((centre - half).max(0.0), (centre + half).min(1.0)))
}

/// Sample mean of the indicators with its Wilson interval.
pub fn estimate_nop(records: &[ExperimentRecord]) -> Result<NopEstimate> {
    let successes = records.iter().filter(|r| r.indicator == 1).count();
    let (ci_low, ci_high) = wilson_interval(successes, records.len())?;
    Ok(NopEstimate {
        trials: records.len(),
        p_hat: successes as f64 / records.len() as f64,
        ci_low,
        ci_high,
    })
}

/// Swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "rho_e")]
    RhoE,
    #[serde(rename = "sigma_si2")]
    SigmaSi2,
}

impl Axis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Axis::RhoE => "rho_e",
            Axis::SigmaSi2 => "sigma_si2",
        }
    }

    /// `base` with this axis set to `value_db`.
    pub fn apply(&self, base: &SystemConfig, value_db: f64) -> SystemConfig {
        let mut cfg = base.clone();
        match self {
            Axis::RhoE => cfg.set_rho_e_db(value_db),
            Axis::SigmaSi2 => cfg.sigma_si2 = db_to_linear(value_db),
        }
        cfg
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axis {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rho_e" => Ok(Axis::RhoE),
            "sigma_si2" => Ok(Axis::SigmaSi2),
            _ => Err(CoreError::InvalidConfig {
                field: "axis",
                reason: format!("'{s}' is not one of rho_e, sigma_si2"),
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values_db: Vec<f64>,
    pub trials: u64,
    pub schemes: Vec<Scheme>,
    pub base: SystemConfig,
    pub options: BcdOptions,
    /// Fill the `mean_ms` column. Off by default so that reruns produce
    /// identical files.
    pub record_timing: bool,
}

impl SweepSpec {
    pub fn new(axis: Axis, values_db: Vec<f64>, trials: u64, base: SystemConfig) -> Self {
        SweepSpec {
            axis,
            values_db,
            trials,
            schemes: Scheme::ALL.to_vec(),
            base,
            options: BcdOptions::default(),
            record_timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values_db.is_empty() {
            return Err(CoreError::InvalidConfig {
                field: "values",
                reason: "at least one value is required".into(),
            });
        }
        if let Some(v) = self.values_db.iter().find(|v| !v.is_finite()) {
            return Err(CoreError::InvalidConfig {
                field: "values",
                reason: format!("non-finite value {v}"),
            });
        }
        if self.trials == 0 {
            return Err(CoreError::InvalidConfig {
                field: "trials",
                reason: "must be at least 1".into(),
            });
        }
        if self.schemes.is_empty() {
            return Err(CoreError::InvalidConfig {
                field: "schemes",
                reason: "at least one scheme is required".into(),
            });
        }
        for &v in &self.values_db {
            self.axis.apply(&self.base, v).validate()?;
        }
        Ok(())
    }
}

/// One CSV row: a `(value, scheme)` point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: Axis,
    pub value_db: f64,
    pub scheme: Scheme,
    pub trials: usize,
    pub p_nop: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_iters: f64,
    pub mean_ms: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// All records, ordered by value, then scheme, then trial.
    pub records: Vec<ExperimentRecord>,
}

impl SweepResult {
    /// Rows for `scheme` in axis order.
    pub fn curve(&self, scheme: Scheme) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.scheme == scheme).collect()
    }

    pub fn row(&self, value_db: f64, scheme: Scheme) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme && r.value_db == value_db)
    }
}

/// Runs every `(value, scheme, trial)` job in parallel and aggregates each
/// `(value, scheme)` point. The output depends only on `spec`.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let jobs: Vec<(usize, Scheme, u64)> = (0..spec.values_db.len())
        .flat_map(|v| {
            spec.schemes
                .iter()
                .flat_map(move |&s| (0..spec.trials).map(move |t| (v, s, t)))
        })
        .collect();
    let configs: Vec<SystemConfig> = spec
        .values_db
        .iter()
        .map(|&v| spec.axis.apply(&spec.base, v))
        .collect();
    let records: Vec<ExperimentRecord> = jobs
        .par_iter()
        .map(|&(v, s, t)| run_trial(&configs[v], s, t, &spec.options))
        .collect();

    let mut rows = Vec::new();
    for (chunk, (v, s)) in records.chunks(spec.trials as usize).zip(
        jobs.iter()
            .step_by(spec.trials as usize)
            .map(|j| (j.0, j.1)),
    ) {
        let est = estimate_nop(chunk)?;
        let n = chunk.len() as f64;
        rows.push(SweepRow {
            axis: spec.axis,
            value_db: spec.values_db[v],
            scheme: s,
            trials: est.trials,
            p_nop: est.p_hat,
            ci_low: est.ci_low,
            ci_high: est.ci_high,
            mean_iters: chunk.iter().map(|r| r.iterations as f64).sum::<f64>() / n,
            mean_ms: spec
                .record_timing
                .then(|| chunk.iter().map(|r| r.wall_ms).sum::<f64>() / n),
        });
    }
    Ok(SweepResult { rows, records })
}

pub const CSV_HEADER: [&str; 9] = [
    "axis",
    "value_db",
    "scheme",
    "trials",
    "p_nop",
    "ci_low",
    "ci_high",
    "mean_iters",
    "mean_ms",
];

/// Writes the rows with the fixed header.
pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    let io = |e: csv::Error| CoreError::Output(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.axis.as_str().to_string(),
            r.value_db.to_string(),
            r.scheme.as_str().to_string(),
            r.trials.to_string(),
            format!("{:.6}", r.p_nop),
            format!("{:.6}", r.ci_low),
            format!("{:.6}", r.ci_high),
            format!("{:.3}", r.mean_iters),
            r.mean_ms.map_or(String::new(), |m| format!("{m:.3}")),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CoreError::Output(e.to_string()))?;
    Ok(())
}

/// Writes one JSON object per record.
pub fn write_records<W: Write>(records: &[ExperimentRecord], mut out: W) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| CoreError::Output(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| CoreError::Output(e.to_string()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(indicator: u8) -> ExperimentRecord {
        ExperimentRecord {
            trial: 0,
            scheme: Scheme::Rzf,
            rho_e_db: 10.0,
            sigma_si2_db: -10.0,
            sinr_d: 1.0,
            sinr_e: 1.0,
            indicator,
            iterations: 1,
            wall_ms: 0.0,
            error: None,
        }
    }

    #[test]
    fn all_successes_give_one() {
        let e = estimate_nop(&[rec(1), rec(1), rec(1)]).unwrap();
        assert_eq!(e.p_hat, 1.0);
        assert_eq!(e.ci_high, 1.0);
        assert!(e.ci_low < 1.0);
    }

    #[test]
    fn alternating_gives_half() {
        let e = estimate_nop(&[rec(1), rec(0), rec(1), rec(0)]).unwrap();
        assert_eq!(e.p_hat, 0.5);
        assert!((e.ci_low + e.ci_high - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(estimate_nop(&[]).is_err());
    }

    #[test]
    fn axis_round_trip() {
        for a in [Axis::RhoE, Axis::SigmaSi2] {
            assert_eq!(a.as_str().parse::<Axis>().unwrap(), a);
        }
        assert_eq!("sigma_SI2".parse::<Axis>().unwrap(), Axis::SigmaSi2);
        assert!("snr".parse::<Axis>().is_err());
    }

    #[test]
    fn axis_apply_sets_one_field() {
        let base = SystemConfig::default();
        let a = Axis::RhoE.apply(&base, 0.0);
        assert_eq!(a.p_e, base.sigma_e2);
        assert_eq!(a.sigma_si2, base.sigma_si2);
        let b = Axis::SigmaSi2.apply(&base, -20.0);
        assert!((b.sigma_si2 - 0.01).abs() < 1e-15);
        assert_eq!(b.p_e, base.p_e);
    }

    #[test]
    fn csv_header_and_blank_timing() {
        let row = SweepRow {
            axis: Axis::RhoE,
            value_db: -5.0,
            scheme: Scheme::MrcMrt,
            trials: 4,
            p_nop: 0.5,
            ci_low: 0.15,
            ci_high: 0.85,
            mean_iters: 3.25,
            mean_ms: None,
        };
        let mut buf = Vec::new();
        write_csv(&[row], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "axis,value_db,scheme,trials,p_nop,ci_low,ci_high,mean_iters,mean_ms"
        );
        assert_eq!(
            lines.next().unwrap(),
            "rho_e,-5,mrc-mrt,4,0.500000,0.150000,0.850000,3.250,"
        );
    }
}
