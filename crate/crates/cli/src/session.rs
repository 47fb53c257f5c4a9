//! `.smcs` session files.
//!
//! One entry per line; `#` starts a comment. Keys are case-insensitive.
//!
//! ```text
//! model: ambulance.sosd
//! horizon: 100
//! seed: 42
//! workers: 4
//! format: json
//! technique: chernoff epsilon=0.02 delta=0.02
//! contract fuel_ok: Ambulance.allInstances()->forAll(a | [a.fuel > 0] holds during [100])
//! property quick: G<=3 true
//! ```

use std::path::{Path, PathBuf};

use sosmc_core::bltl::{parse_formula, Formula};
use sosmc_core::gcsl::{parse_gcsl, GcslAst};
use sosmc_core::smc::{AnalysisTechnique, DomainError, DEFAULT_MAX_SAMPLES};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Text,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Option<Format> {
        match s.to_ascii_lowercase().as_str() {
            "text" => Some(Format::Text),
            "json" => Some(Format::Json),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PropertyKind {
    Contract(GcslAst),
    Bltl(Formula),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropertySpec {
    pub name: String,
    pub kind: PropertyKind,
    /// Text as written in the session.
    pub source: String,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionConfig {
    /// As written in the session file.
    pub model_name: String,
    /// Resolved against the session file's directory.
    pub model_path: PathBuf,
    pub properties: Vec<PropertySpec>,
    pub horizon: Option<u32>,
    pub technique: AnalysisTechnique,
    pub seed: u64,
    pub workers: usize,
    pub format: Format,
    pub max_samples: u64,
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum SessionError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("line {line}: unknown technique `{name}` (expected montecarlo, chernoff or sprt)")]
    UnknownTechnique { line: usize, name: String },
    #[error("line {line}: {source}")]
    Domain { line: usize, source: DomainError },
    #[error("line {line}: property `{name}`: {message}")]
    Property { line: usize, name: String, message: String },
}

pub fn load_session(path: &Path) -> Result<SessionConfig, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|e| LoadError::Io(path.display().to_string(), e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(parse_session(&text, base)?)
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum LoadError {
    #[error("cannot read {0}: {1}")]
    Io(String, String),
    #[error(transparent)]
    Session(#[from] SessionError),
}

fn syntax(line: usize, message: impl Into<String>) -> SessionError {
    SessionError::Syntax { line, message: message.into() }
}

#[derive(Default)]
struct Fields {
    model: Option<String>,
    horizon: Option<(usize, u32)>,
    technique: Option<AnalysisTechnique>,
    seed: Option<u64>,
    workers: Option<usize>,
    format: Option<Format>,
    max_samples: Option<u64>,
}

fn set<T>(slot: &mut Option<T>, v: T, line: usize, key: &str) -> Result<(), SessionError> {
    if slot.is_some() {
        return Err(syntax(line, format!("duplicate field `{key}`")));
    }
    *slot = Some(v);
    Ok(())
}

fn number<T: std::str::FromStr>(v: &str, line: usize, key: &str) -> Result<T, SessionError> {
    v.parse().map_err(|_| syntax(line, format!("`{key}`: cannot parse `{v}`")))
}

/// Parses session text; relative model paths are resolved against `base`.
pub fn parse_session(text: &str, base: &Path) -> Result<SessionConfig, SessionError> {
    let mut f = Fields::default();
    let mut properties: Vec<PropertySpec> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let (head, value) = l.split_once(':').ok_or_else(|| syntax(line, "expected `key: value`"))?;
        let head = head.trim();
        let value = value.trim();
        let mut words = head.split_whitespace();
        let key = words.next().unwrap_or("").to_ascii_lowercase();
        let name = words.next();
        if words.next().is_some() || (name.is_some() && key != "contract" && key != "property") {
            return Err(syntax(line, format!("unexpected `{head}`")));
        }
        match key.as_str() {
            "model" => set(&mut f.model, value.to_string(), line, "model")?,
            "horizon" => set(&mut f.horizon, (line, number(value, line, "horizon")?), line, "horizon")?,
            "seed" => set(&mut f.seed, number(value, line, "seed")?, line, "seed")?,
            "workers" => {
                let w: usize = number(value, line, "workers")?;
                if w == 0 {
                    return Err(syntax(line, "`workers` must be at least 1"));
                }
                set(&mut f.workers, w, line, "workers")?
            }
            "max_samples" => set(&mut f.max_samples, number(value, line, "max_samples")?, line, "max_samples")?,
            "format" => {
                let fmt = Format::parse(value).ok_or_else(|| syntax(line, format!("unknown format `{value}`")))?;
                set(&mut f.format, fmt, line, "format")?
            }
            "technique" => set(&mut f.technique, technique(value, line)?, line, "technique")?,
            "contract" | "property" => {
                let name = name.ok_or_else(|| syntax(line, format!("`{key}` needs a name")))?;
                if !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                    return Err(syntax(line, format!("invalid property name `{name}`")));
                }
                if properties.iter().any(|p| p.name == name) {
                    return Err(syntax(line, format!("duplicate property `{name}`")));
                }
                let err = |message: String| SessionError::Property { line, name: name.to_string(), message };
                let kind = if key == "contract" {
                    PropertyKind::Contract(parse_gcsl(value).map_err(|e| err(e.to_string()))?)
                } else {
                    PropertyKind::Bltl(parse_formula(value).map_err(|e| err(e.to_string()))?)
                };
                properties.push(PropertySpec { name: name.to_string(), kind, source: value.to_string(), line });
            }
            _ => return Err(syntax(line, format!("unknown field `{key}`"))),
        }
    }
    let model_name = f.model.ok_or_else(|| SessionError::MissingField("model".into()))?;
    if properties.is_empty() {
        return Err(SessionError::MissingField("properties".into()));
    }
    let technique = f.technique.ok_or_else(|| SessionError::MissingField("technique".into()))?;
    let horizon = f.horizon.map(|(_, h)| h);
    for p in &properties {
        if let PropertyKind::Contract(ast) = &p.kind {
            let bound = ast.pattern.bound();
            match horizon {
                None => return Err(SessionError::MissingField("horizon".into())),
                Some(h) if h < bound => {
                    return Err(SessionError::Property {
                        line: p.line,
                        name: p.name.clone(),
                        message: format!("pattern bound {bound} exceeds horizon {h}"),
                    })
                }
                Some(_) => {}
            }
        }
    }
    Ok(SessionConfig {
        model_path: base.join(&model_name),
        model_name,
        properties,
        horizon,
        technique,
        seed: f.seed.unwrap_or(0),
        workers: f.workers.unwrap_or(1),
        format: f.format.unwrap_or(Format::Text),
        max_samples: f.max_samples.unwrap_or(DEFAULT_MAX_SAMPLES),
    })
}

/// `name key=value ...`
fn technique(value: &str, line: usize) -> Result<AnalysisTechnique, SessionError> {
    let mut words = value.split_whitespace();
    let name = words.next().ok_or_else(|| syntax(line, "empty technique"))?.to_ascii_lowercase();
    let mut params: Vec<(String, &str)> = Vec::new();
    for w in words {
        let (k, v) = w.split_once('=').ok_or_else(|| syntax(line, format!("expected `key=value`, found `{w}`")))?;
        params.push((k.to_ascii_lowercase(), v));
    }
    let known: &[&str] = match name.as_str() {
        "montecarlo" => &["n"],
        "chernoff" => &["epsilon", "delta"],
        "sprt" => &["theta", "indifference", "alpha", "beta"],
        _ => return Err(SessionError::UnknownTechnique { line, name }),
    };
    if let Some((k, _)) = params.iter().find(|(k, _)| !known.contains(&k.as_str())) {
        return Err(syntax(line, format!("{name} has no parameter `{k}`")));
    }
    let get = |k: &str| -> Result<f64, SessionError> {
        let v = params
            .iter()
            .find(|(p, _)| p == k)
            .ok_or_else(|| SessionError::MissingField(format!("technique.{k}")))?
            .1;
        number(v, line, k)
    };
    let t = match name.as_str() {
        "montecarlo" => {
            let v = params.iter().find(|(p, _)| p == "n").ok_or_else(|| SessionError::MissingField("technique.n".into()))?;
            AnalysisTechnique::MonteCarlo { n: number(v.1, line, "n")? }
        }
        "chernoff" => AnalysisTechnique::Chernoff { epsilon: get("epsilon")?, delta: get("delta")? },
        _ => AnalysisTechnique::Sprt {
            theta: get("theta")?,
            indifference: get("indifference")?,
            alpha: get("alpha")?,
            beta: get("beta")?,
        },
    };
    t.validate().map_err(|source| SessionError::Domain { line, source })?;
    Ok(t)
}
