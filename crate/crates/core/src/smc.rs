//! Statistical analyses over independent simulation samples.
//!
//! Sample `i` of a run with global seed `s` is the trace `(s, i)`. Samples
//! are therefore independent of scheduling: any worker count produces the
//! same positives, and sequential tests consume results in index order.
//!
//! Chernoff–Hoeffding: for `N >= ln(2/delta) / (2 epsilon^2)` Bernoulli
//! samples, `Pr(|p_hat - p| > epsilon) <= 2 exp(-2 N epsilon^2) <= delta`.
//!
//! Wald's SPRT tests `H0: p >= theta + indifference` against
//! `H1: p <= theta - indifference` with the log likelihood ratio
//! `d ln(p1/p0) + (n - d) ln((1 - p1)/(1 - p0))`.

use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::bltl::{MonitorError, MonitorSession, PropertyProgram, Verdict};
use crate::sim::{Model, SimError};

pub const DEFAULT_MAX_SAMPLES: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AnalysisTechnique {
    MonteCarlo { n: u64 },
    Chernoff { epsilon: f64, delta: f64 },
    Sprt { theta: f64, indifference: f64, alpha: f64, beta: f64 },
}

impl AnalysisTechnique {
    pub fn name(&self) -> &'static str {
        match self {
            AnalysisTechnique::MonteCarlo { .. } => "montecarlo",
            AnalysisTechnique::Chernoff { .. } => "chernoff",
            AnalysisTechnique::Sprt { .. } => "sprt",
        }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let open = |name: &'static str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(DomainError { parameter: name, value: v, expected: "in (0, 1)" })
            }
        };
        match *self {
            AnalysisTechnique::MonteCarlo { n } => {
                if n == 0 {
                    return Err(DomainError { parameter: "n", value: 0.0, expected: "at least 1" });
                }
            }
            AnalysisTechnique::Chernoff { epsilon, delta } => {
                open("epsilon", epsilon)?;
                open("delta", delta)?;
            }
            AnalysisTechnique::Sprt { theta, indifference, alpha, beta } => {
                open("theta", theta)?;
                open("alpha", alpha)?;
                open("beta", beta)?;
                if !(indifference > 0.0 && indifference < theta.min(1.0 - theta)) {
                    return Err(DomainError {
                        parameter: "indifference",
                        value: indifference,
                        expected: "in (0, min(theta, 1 - theta))",
                    });
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for AnalysisTechnique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnalysisTechnique::MonteCarlo { n } => write!(f, "montecarlo(n={n})"),
            AnalysisTechnique::Chernoff { epsilon, delta } => write!(f, "chernoff(epsilon={epsilon}, delta={delta})"),
            AnalysisTechnique::Sprt { theta, indifference, alpha, beta } => write!(
                f,
                "sprt(theta={theta}, indifference={indifference}, alpha={alpha}, beta={beta})"
            ),
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
#[error("{parameter} = {value} must be {expected}")]
pub struct DomainError {
    pub parameter: &'static str,
    pub value: f64,
    pub expected: &'static str,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    /// `p >= theta + indifference` accepted.
    Above,
    /// `p <= theta - indifference` accepted.
    Below,
    NotApplicable,
}

impl Decision {
    pub fn as_str(&self) -> &'static str {
        match self {
            Decision::Above => "above-threshold",
            Decision::Below => "below-threshold",
            Decision::NotApplicable => "n/a",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmcResult {
    pub property: String,
    pub technique: AnalysisTechnique,
    pub estimate: Option<f64>,
    pub decision: Decision,
    pub samples_used: u64,
    pub positives: u64,
    /// Total states fed to monitors across all samples.
    pub states_simulated: u64,
    pub seed: u64,
    pub elapsed: Duration,
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum SampleError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum SmcError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("sample {trace_index}: {source}")]
    Sample { trace_index: u64, source: SampleError },
    #[error("no decision after {0} samples")]
    MaxSamplesExceeded(u64),
    #[error("{0} is not an estimation technique")]
    NotEstimation(&'static str),
    #[error("{0} is not a hypothesis test")]
    NotHypothesisTest(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Sample-parallel on a pool of this many workers. Without the
    /// `parallel` feature this runs sequentially.
    Parallel { workers: usize },
}

impl Execution {
    pub fn workers(self) -> usize {
        match self {
            Execution::Sequential => 1,
            Execution::Parallel { workers } => workers.max(1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmcOptions {
    pub execution: Execution,
    pub max_samples: u64,
}

impl Default for SmcOptions {
    fn default() -> Self {
        SmcOptions { execution: Execution::Sequential, max_samples: DEFAULT_MAX_SAMPLES }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleOutcome {
    pub holds: bool,
    /// States simulated, the initial one included.
    pub states: u64,
    pub peak_retained: usize,
}

pub fn chernoff_samples(epsilon: f64, delta: f64) -> Result<u64, DomainError> {
    AnalysisTechnique::Chernoff { epsilon, delta }.validate()?;
    Ok(((2.0 / delta).ln() / (2.0 * epsilon * epsilon)).ceil() as u64)
}

/// Simulates trace `(seed, trace_index)` only as far as the monitor needs
/// to reach a verdict.
pub fn run_trace_and_check(
    model: &Model,
    program: &Arc<PropertyProgram>,
    seed: u64,
    trace_index: u64,
) -> Result<SampleOutcome, SampleError> {
    let mut monitor = MonitorSession::new(program.clone());
    let mut trace = model.trace(seed, trace_index).with_retention(1);
    loop {
        let v = monitor.feed_state(trace.current())?;
        if v != Verdict::Undecided {
            return Ok(SampleOutcome {
                holds: v == Verdict::True,
                states: monitor.steps_consumed(),
                peak_retained: monitor.peak_retained(),
            });
        }
        trace.advance()?;
    }
}

/// Runs samples `range` and returns their outcomes in index order, or the
/// failure with the smallest index.
fn run_batch(
    model: &Model,
    program: &Arc<PropertyProgram>,
    seed: u64,
    range: std::ops::Range<u64>,
    execution: Execution,
) -> Result<Vec<SampleOutcome>, SmcError> {
    let one = |i: u64| {
        run_trace_and_check(model, program, seed, i).map_err(|source| SmcError::Sample { trace_index: i, source })
    };
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel { workers } if workers > 1 => {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .expect("worker pool");
            pool.install(|| range.into_par_iter().map(one).collect())
        }
        _ => range.map(one).collect(),
    }
}

/// Monte Carlo and Chernoff estimation.
pub fn estimate(
    model: &Model,
    program: &Arc<PropertyProgram>,
    technique: AnalysisTechnique,
    seed: u64,
    opts: &SmcOptions,
) -> Result<SmcResult, SmcError> {
    let start = Instant::now();
    technique.validate()?;
    let n = match technique {
        AnalysisTechnique::MonteCarlo { n } => n,
        AnalysisTechnique::Chernoff { epsilon, delta } => chernoff_samples(epsilon, delta)?,
        AnalysisTechnique::Sprt { .. } => return Err(SmcError::NotEstimation(technique.name())),
    };
    let outcomes = run_batch(model, program, seed, 0..n, opts.execution)?;
    let positives = outcomes.iter().filter(|o| o.holds).count() as u64;
    Ok(SmcResult {
        property: program.source.to_string(),
        technique,
        estimate: Some(positives as f64 / n as f64),
        decision: Decision::NotApplicable,
        samples_used: n,
        positives,
        states_simulated: outcomes.iter().map(|o| o.states).sum(),
        seed,
        elapsed: start.elapsed(),
    })
}

/// Wald's decision rule over a running count.
#[derive(Clone, Copy, Debug)]
pub struct SprtState {
    log_pos: f64,
    log_neg: f64,
    accept_below: f64,
    accept_above: f64,
    pub n: u64,
    pub positives: u64,
}

impl SprtState {
    pub fn new(theta: f64, indifference: f64, alpha: f64, beta: f64) -> Self {
        let p0 = theta + indifference;
        let p1 = theta - indifference;
        SprtState {
            log_pos: (p1 / p0).ln(),
            log_neg: ((1.0 - p1) / (1.0 - p0)).ln(),
            accept_below: ((1.0 - beta) / alpha).ln(),
            accept_above: (beta / (1.0 - alpha)).ln(),
            n: 0,
            positives: 0,
        }
    }

    pub fn log_ratio(&self) -> f64 {
        self.positives as f64 * self.log_pos + (self.n - self.positives) as f64 * self.log_neg
    }

    /// Records one sample and returns the decision it triggers, if any.
    pub fn push(&mut self, holds: bool) -> Option<Decision> {
        self.n += 1;
        self.positives += u64::from(holds);
        let l = self.log_ratio();
        if l >= self.accept_below {
            Some(Decision::Below)
        } else if l <= self.accept_above {
            Some(Decision::Above)
        } else {
            None
        }
    }
}

/// Sequential probability ratio test. Parallel execution simulates
/// samples ahead in batches; decisions are still taken in index order.
pub fn sprt(
    model: &Model,
    program: &Arc<PropertyProgram>,
    technique: AnalysisTechnique,
    seed: u64,
    opts: &SmcOptions,
) -> Result<SmcResult, SmcError> {
    let start = Instant::now();
    technique.validate()?;
    let AnalysisTechnique::Sprt { theta, indifference, alpha, beta } = technique else {
        return Err(SmcError::NotHypothesisTest(technique.name()));
    };
    let mut state = SprtState::new(theta, indifference, alpha, beta);
    let batch = match opts.execution.workers() {
        1 => 1,
        w => 4 * w as u64,
    };
    let mut states_simulated = 0;
    let mut next = 0u64;
    while next < opts.max_samples {
        let end = (next + batch).min(opts.max_samples);
        for o in run_batch(model, program, seed, next..end, opts.execution)? {
            states_simulated += o.states;
            if let Some(decision) = state.push(o.holds) {
                return Ok(SmcResult {
                    property: program.source.to_string(),
                    technique,
                    estimate: None,
                    decision,
                    samples_used: state.n,
                    positives: state.positives,
                    states_simulated,
                    seed,
                    elapsed: start.elapsed(),
                });
            }
        }
        next = end;
    }
    Err(SmcError::MaxSamplesExceeded(opts.max_samples))
}

/// Dispatches on the technique.
pub fn analyze(
    model: &Model,
    program: &Arc<PropertyProgram>,
    technique: AnalysisTechnique,
    seed: u64,
    opts: &SmcOptions,
) -> Result<SmcResult, SmcError> {
    match technique {
        AnalysisTechnique::Sprt { .. } => sprt(model, program, technique, seed, opts),
        _ => estimate(model, program, technique, seed, opts),
    }
}
