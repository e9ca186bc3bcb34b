//! Alternating optimization of the beamformers and the surface coefficients.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use log::warn;
use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::beamforming::{
    mrc_mrt_pair, optimal_wr, rzf_pair, transmit_two_stage, tzf_pair, TransmitOptions,
};
use crate::channel::ChannelSet;
use crate::error::{CoreError, Result};
use crate::metrics::{design_objective, BeamPair, LinkTerms, Powers, StarCoefficients};
use crate::phase::{
    build_phase_quadratics, low_complexity_phase_solve, randomize_star, sca_solve, LiftedPhasePair,
    ScaOptions, Variant,
};

/// Beamforming scheme at the eavesdropper.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Optimal,
    Rzf,
    Tzf,
    MrcMrt,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Optimal, Scheme::Rzf, Scheme::Tzf, Scheme::MrcMrt];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Optimal => "optimal",
            Scheme::Rzf => "rzf",
            Scheme::Tzf => "tzf",
            Scheme::MrcMrt => "mrc-mrt",
        }
    }

    /// Closed-form beamformers of the baseline schemes.
    pub fn closed_form_pair(&self, ch: &ChannelSet, star: &StarCoefficients) -> Result<BeamPair> {
        match self {
            Scheme::Optimal | Scheme::MrcMrt => mrc_mrt_pair(ch, star),
            Scheme::Rzf => rzf_pair(ch, star),
            Scheme::Tzf => tzf_pair(ch, star),
        }
    }

    fn variant(&self) -> Variant {
        match self {
            Scheme::Rzf => Variant::Rzf,
            Scheme::Tzf => Variant::Tzf,
            Scheme::Optimal | Scheme::MrcMrt => Variant::Full,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "optimal" => Ok(Scheme::Optimal),
            "rzf" => Ok(Scheme::Rzf),
            "tzf" => Ok(Scheme::Tzf),
            "mrc-mrt" | "mrc/mrt" | "mrcmrt" => Ok(Scheme::MrcMrt),
            other => Err(CoreError::Parse(format!(
                "unknown scheme '{other}' (expected optimal, rzf, tzf or mrc-mrt)"
            ))),
        }
    }
}

/// `(prev - cur) / max(|prev|, 1e-12)`.
pub fn fractional_decrease(prev: f64, cur: f64) -> f64 {
    (prev - cur) / prev.abs().max(1e-12)
}

#[derive(Debug, Clone)]
pub struct BcdOptions {
    pub eps1: f64,
    pub n_max: usize,
    /// Gaussian randomization draws for the surface coefficients.
    pub randomization: usize,
    pub transmit: TransmitOptions,
    pub sca: ScaOptions,
}

impl Default for BcdOptions {
    fn default() -> Self {
        BcdOptions {
            eps1: 1e-3,
            n_max: 20,
            randomization: 100,
            transmit: TransmitOptions::default(),
            sca: ScaOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    MaxIterations,
    SubproblemFailure,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max-iterations",
            Termination::SubproblemFailure => "subproblem-failure",
        }
    }
}

/// One outer iteration.
#[derive(Debug, Clone, Serialize)]
pub struct BcdIteration {
    pub iteration: usize,
    /// Objective after both blocks.
    pub objective: f64,
    pub sinr_d: f64,
    pub sinr_e: f64,
    pub beam_ms: f64,
    pub phase_ms: f64,
    pub sca_iterations: usize,
    /// Surrogate values of the inner loop were non-increasing up to this
    /// iterate; `false` when a step was discarded.
    pub sca_completed: bool,
    /// True objectives of the inner loop, starting at its initialization.
    pub sca_values: Vec<f64>,
    /// The randomized phases improved on the current ones.
    pub phase_accepted: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BcdTrace {
    pub scheme: Scheme,
    pub initial_objective: f64,
    pub iterations: Vec<BcdIteration>,
    pub termination: Termination,
    pub failure: Option<String>,
    #[serde(skip)]
    pub star: StarCoefficients,
    #[serde(skip)]
    pub pair: BeamPair,
}

impl BcdTrace {
    pub fn final_objective(&self) -> f64 {
        self.iterations
            .last()
            .map_or(self.initial_objective, |it| it.objective)
    }

    /// Serializes the trace as one JSON object per line: a header line
    /// followed by one line per iteration.
    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Header<'a> {
            scheme: Scheme,
            initial_objective: f64,
            termination: &'a str,
            failure: &'a Option<String>,
            beta_t: Vec<f64>,
        }
        let mut out = serde_json::to_string(&Header {
            scheme: self.scheme,
            initial_objective: self.initial_objective,
            termination: self.termination.as_str(),
            failure: &self.failure,
            beta_t: self.star.beta_t(),
        })
        .expect("trace header serializes");
        out.push('\n');
        for it in &self.iterations {
            out.push_str(&serde_json::to_string(it).expect("iteration serializes"));
            out.push('\n');
        }
        out
    }
}

struct State {
    star: StarCoefficients,
    pair: BeamPair,
    objective: f64,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Beamformers that go with `star` for a baseline scheme, or the optimal
/// receiver for the given transmit beamformer.
fn companion_pair(
    scheme: Scheme,
    ch: &ChannelSet,
    star: &StarCoefficients,
    w_t: &DVector<Complex64>,
    pw: &Powers,
) -> Result<BeamPair> {
    match scheme {
        Scheme::Optimal => BeamPair::new(w_t.clone(), optimal_wr(ch, star, w_t, pw.rho_e())?),
        other => other.closed_form_pair(ch, star),
    }
}

/// Runs the alternating design starting from `init` with MRC/MRT beamformers
/// (or the scheme's closed-form pair for the baselines).
///
/// The objective is `design_objective` after every outer iteration; it never
/// increases because the beamformer block keeps the previous transmit
/// beamformer as a candidate and the phase block keeps the previous
/// coefficients unless the randomized ones are better.
pub fn run_bcd<R: Rng + ?Sized>(
    ch: &ChannelSet,
    pw: &Powers,
    init: &StarCoefficients,
    scheme: Scheme,
    opts: &BcdOptions,
    rng: &mut R,
) -> Result<BcdTrace> {
    if !(opts.eps1 > 0.0) {
        return Err(CoreError::InvalidConfig {
            field: "eps1",
            reason: "must be positive".into(),
        });
    }
    if opts.n_max == 0 {
        return Err(CoreError::InvalidConfig {
            field: "n_max",
            reason: "must be at least 1".into(),
        });
    }
    let pair0 = scheme.closed_form_pair(ch, init)?;
    let obj0 = design_objective(ch, init, &pair0, pw)?;
    let mut state = State {
        star: init.clone(),
        pair: pair0,
        objective: obj0,
    };
    let mut trace = BcdTrace {
        scheme,
        initial_objective: obj0,
        iterations: Vec::new(),
        termination: Termination::MaxIterations,
        failure: None,
        star: init.clone(),
        pair: state.pair.clone(),
    };
    for n in 1..=opts.n_max {
        match bcd_iteration(ch, pw, scheme, opts, &mut state, n, rng) {
            Ok(it) => trace.iterations.push(it),
            Err(e) => {
                warn!("{scheme} iteration {n} failed: {e}");
                trace.termination = Termination::SubproblemFailure;
                trace.failure = Some(e.to_string());
                break;
            }
        }
        let prev = trace
            .iterations
            .iter()
            .rev()
            .nth(1)
            .map_or(obj0, |it| it.objective);
        if fractional_decrease(prev, state.objective) < opts.eps1 {
            trace.termination = Termination::Converged;
            break;
        }
    }
    trace.star = state.star;
    trace.pair = state.pair;
    Ok(trace)
}

fn bcd_iteration<R: Rng + ?Sized>(
    ch: &ChannelSet,
    pw: &Powers,
    scheme: Scheme,
    opts: &BcdOptions,
    state: &mut State,
    n: usize,
    rng: &mut R,
) -> Result<BcdIteration> {
    let t_beam = Instant::now();
    if scheme == Scheme::Optimal {
        let (w_t, _) = transmit_two_stage(
            ch,
            &state.star,
            pw,
            &opts.transmit,
            Some(&state.pair.w_t),
            rng,
        )?;
        state.pair = companion_pair(scheme, ch, &state.star, &w_t, pw)?;
    } else {
        state.pair = scheme.closed_form_pair(ch, &state.star)?;
    }
    let beam_obj = design_objective(ch, &state.star, &state.pair, pw)?;
    state.objective = beam_obj;
    let beam_ms = ms(t_beam);

    let t_phase = Instant::now();
    let q = build_phase_quadratics(ch, &state.pair, scheme.variant())?;
    let init = LiftedPhasePair::from_star(&state.star);
    let out = match scheme {
        Scheme::Rzf | Scheme::Tzf => low_complexity_phase_solve(&q, &init, pw, &opts.sca)?,
        _ => sca_solve(&q, &init, pw, &opts.sca)?,
    };
    let w_t = state.pair.w_t.clone();
    let evaluate = |s: &StarCoefficients| -> Result<f64> {
        let pair = companion_pair(scheme, ch, s, &w_t, pw)?;
        design_objective(ch, s, &pair, pw)
    };
    let candidate = randomize_star(
        &out.pair.q_t,
        &out.pair.q_r,
        evaluate,
        opts.randomization,
        opts.sca.uniform_beta,
        rng,
    )?;
    let cand_pair = companion_pair(scheme, ch, &candidate, &w_t, pw)?;
    let cand_obj = design_objective(ch, &candidate, &cand_pair, pw)?;
    let phase_accepted = cand_obj < state.objective;
    if phase_accepted {
        state.star = candidate;
        state.pair = cand_pair;
        state.objective = cand_obj;
    }
    let phase_ms = ms(t_phase);

    let terms = LinkTerms::evaluate(ch, &state.star, &state.pair)?;
    let mut sca_values = vec![out.initial];
    sca_values.extend(out.trace.iter().map(|t| t.true_value));
    Ok(BcdIteration {
        iteration: n,
        objective: state.objective,
        sinr_d: terms.sinr_d(pw),
        sinr_e: terms.sinr_e(pw),
        beam_ms,
        phase_ms,
        sca_iterations: out.trace.len(),
        sca_completed: !out.stalled,
        sca_values,
        phase_accepted,
    })
}
