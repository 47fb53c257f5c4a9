use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};
use sosmc_core::bltl::{compile, Formula};
use sosmc_core::descriptor::{build_model, parse_descriptor};
use sosmc_core::gcsl::{check_gcsl, translate_to_bltl};
use sosmc_core::smc::{analyze, AnalysisTechnique, Execution, SmcOptions, SmcResult};
use thiserror::Error;

use crate::session::{PropertyKind, SessionConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Model,
    Descriptor,
    Build,
    Contract,
    Compile,
    Analysis,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Model => "model",
            Stage::Descriptor => "descriptor",
            Stage::Build => "build",
            Stage::Contract => "contract",
            Stage::Compile => "compile",
            Stage::Analysis => "analysis",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A failure that prevents any property from being analyzed.
#[derive(Clone, Debug, Error, PartialEq)]
#[error("[{stage}] {}", .messages.join("; "))]
pub struct RunError {
    pub stage: Stage,
    pub messages: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    pub stage: Stage,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropertyResult {
    pub name: String,
    pub kind: &'static str,
    pub source: String,
    /// The analyzed formula, once translation succeeded.
    pub formula: Option<String>,
    pub outcome: Result<SmcResult, Failure>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultsObject {
    pub model: String,
    pub model_sha256: String,
    pub seed: u64,
    pub horizon: Option<u32>,
    pub technique: AnalysisTechnique,
    pub results: Vec<PropertyResult>,
    pub wall_time: Duration,
}

impl ResultsObject {
    pub fn failures(&self) -> usize {
        self.results.iter().filter(|r| r.outcome.is_err()).count()
    }
}

/// Descriptor, model, then each property in order: translate, compile,
/// analyze. Property-level failures are recorded in the results.
pub fn run_session(cfg: &SessionConfig) -> Result<ResultsObject, RunError> {
    let start = Instant::now();
    let text = std::fs::read_to_string(&cfg.model_path).map_err(|e| RunError {
        stage: Stage::Model,
        messages: vec![format!("cannot read {}: {e}", cfg.model_path.display())],
    })?;
    let def = parse_descriptor(&text);
    if def.has_errors() {
        return Err(RunError {
            stage: Stage::Descriptor,
            messages: def.errors().map(|d| format!("{}: {d}", cfg.model_name)).collect(),
        });
    }
    let model = build_model(&def, cfg.seed)
        .map_err(|e| RunError { stage: Stage::Build, messages: vec![e.to_string()] })?;
    let opts = SmcOptions {
        execution: if cfg.workers > 1 { Execution::Parallel { workers: cfg.workers } } else { Execution::Sequential },
        max_samples: cfg.max_samples,
    };
    let mut results = Vec::with_capacity(cfg.properties.len());
    for p in &cfg.properties {
        let fail = |stage, message: String| Failure { stage, message };
        let formula: Result<Formula, Failure> = match &p.kind {
            PropertyKind::Bltl(f) => Ok(f.clone()),
            PropertyKind::Contract(ast) => check_gcsl(ast, &model.schema)
                .and_then(|_| translate_to_bltl(ast, cfg.horizon.unwrap_or(0)))
                .map_err(|e| fail(Stage::Contract, e.to_string())),
        };
        let formula_text = formula.as_ref().ok().map(ToString::to_string);
        let outcome = formula.and_then(|f| {
            let program = compile(&f, &model.schema).map_err(|e| fail(Stage::Compile, e.to_string()))?;
            let mut r = analyze(&model, &Arc::new(program), cfg.technique, cfg.seed, &opts)
                .map_err(|e| fail(Stage::Analysis, e.to_string()))?;
            r.property = p.name.clone();
            Ok(r)
        });
        results.push(PropertyResult {
            name: p.name.clone(),
            kind: match p.kind {
                PropertyKind::Contract(_) => "contract",
                PropertyKind::Bltl(_) => "bltl",
            },
            source: p.source.clone(),
            formula: formula_text,
            outcome,
        });
    }
    Ok(ResultsObject {
        model: cfg.model_name.clone(),
        model_sha256: hex::encode(Sha256::digest(text.as_bytes())),
        seed: cfg.seed,
        horizon: cfg.horizon,
        technique: cfg.technique,
        results,
        wall_time: start.elapsed(),
    })
}
