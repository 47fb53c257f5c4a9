use serde::Serialize;
use sosmc_core::smc::{AnalysisTechnique, Decision};

use crate::run::ResultsObject;
use crate::session::Format;

pub const SCHEMA: &str = "sosmc.results/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RenderOptions {
    pub format: Format,
    /// Include wall-clock fields (the `timing` key in JSON, the time column
    /// in text).
    pub timing: bool,
}

#[derive(Serialize)]
struct Document<'a> {
    schema: &'static str,
    tool: Tool,
    session: SessionDoc<'a>,
    results: Vec<ResultDoc<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timing: Option<TimingDoc<'a>>,
}

#[derive(Serialize)]
struct Tool {
    name: &'static str,
    version: &'static str,
}

#[derive(Serialize)]
struct SessionDoc<'a> {
    model: &'a str,
    model_sha256: &'a str,
    seed: u64,
    horizon: Option<u32>,
    technique: TechniqueDoc,
}

#[derive(Serialize)]
struct TechniqueDoc {
    name: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    indifference: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
}

impl From<AnalysisTechnique> for TechniqueDoc {
    fn from(t: AnalysisTechnique) -> Self {
        let mut d = TechniqueDoc {
            name: t.name(),
            n: None,
            epsilon: None,
            delta: None,
            theta: None,
            indifference: None,
            alpha: None,
            beta: None,
        };
        match t {
            AnalysisTechnique::MonteCarlo { n } => d.n = Some(n),
            AnalysisTechnique::Chernoff { epsilon, delta } => {
                d.epsilon = Some(epsilon);
                d.delta = Some(delta);
            }
            AnalysisTechnique::Sprt { theta, indifference, alpha, beta } => {
                d.theta = Some(theta);
                d.indifference = Some(indifference);
                d.alpha = Some(alpha);
                d.beta = Some(beta);
            }
        }
        d
    }
}

#[derive(Serialize)]
struct ResultDoc<'a> {
    property: &'a str,
    kind: &'static str,
    source: &'a str,
    formula: Option<&'a str>,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    estimate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    decision: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    samples_used: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    positives: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    states_simulated: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stage: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

#[derive(Serialize)]
struct TimingDoc<'a> {
    wall_ms: f64,
    properties: Vec<PropertyTiming<'a>>,
}

#[derive(Serialize)]
struct PropertyTiming<'a> {
    property: &'a str,
    elapsed_ms: Option<f64>,
}

fn ms(d: std::time::Duration) -> f64 {
    (d.as_secs_f64() * 1e6).round() / 1e3
}

pub fn render_results(r: &ResultsObject, opts: RenderOptions) -> String {
    match opts.format {
        Format::Json => render_json(r, opts.timing),
        Format::Text => render_text(r, opts.timing),
    }
}

fn render_json(r: &ResultsObject, timing: bool) -> String {
    let results = r
        .results
        .iter()
        .map(|p| {
            let mut d = ResultDoc {
                property: &p.name,
                kind: p.kind,
                source: &p.source,
                formula: p.formula.as_deref(),
                status: "ok",
                estimate: None,
                decision: None,
                samples_used: None,
                positives: None,
                states_simulated: None,
                stage: None,
                error: None,
            };
            match &p.outcome {
                Ok(s) => {
                    d.estimate = s.estimate;
                    d.decision = Some(s.decision.as_str());
                    d.samples_used = Some(s.samples_used);
                    d.positives = Some(s.positives);
                    d.states_simulated = Some(s.states_simulated);
                }
                Err(f) => {
                    d.status = "failed";
                    d.stage = Some(f.stage.as_str());
                    d.error = Some(&f.message);
                }
            }
            d
        })
        .collect();
    let doc = Document {
        schema: SCHEMA,
        tool: Tool { name: "sosmc", version: env!("CARGO_PKG_VERSION") },
        session: SessionDoc {
            model: &r.model,
            model_sha256: &r.model_sha256,
            seed: r.seed,
            horizon: r.horizon,
            technique: r.technique.into(),
        },
        results,
        timing: timing.then(|| TimingDoc {
            wall_ms: ms(r.wall_time),
            properties: r
                .results
                .iter()
                .map(|p| PropertyTiming { property: &p.name, elapsed_ms: p.outcome.as_ref().ok().map(|s| ms(s.elapsed)) })
                .collect(),
        }),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("results serialize");
    out.push('\n');
    out
}

fn render_text(r: &ResultsObject, timing: bool) -> String {
    let mut out = format!(
        "model      {} (sha256 {})\nseed       {}\ntechnique  {}\n",
        r.model,
        &r.model_sha256[..16],
        r.seed,
        r.technique
    );
    if r.results.is_empty() || r.failures() == r.results.len() {
        out.push_str(&format!("\nno results: {} of {} properties failed\n", r.failures(), r.results.len()));
        for p in &r.results {
            if let Err(f) = &p.outcome {
                out.push_str(&format!("  {} [{}] {}\n", p.name, f.stage, f.message));
            }
        }
        return out;
    }
    let mut header = vec!["property", "technique", "result", "samples", "positives"];
    if timing {
        header.push("time");
    }
    let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for p in &r.results {
        let mut row = vec![p.name.clone(), r.technique.name().to_string()];
        match &p.outcome {
            Ok(s) => {
                row.push(match (s.estimate, s.decision) {
                    (Some(e), _) => format!("{e:.4}"),
                    (None, Decision::NotApplicable) => "-".into(),
                    (None, d) => d.as_str().into(),
                });
                row.push(s.samples_used.to_string());
                row.push(s.positives.to_string());
                if timing {
                    row.push(format!("{:.3}s", s.elapsed.as_secs_f64()));
                }
            }
            Err(f) => {
                row.push(format!("failed ({})", f.stage));
                row.push("-".into());
                row.push("-".into());
                if timing {
                    row.push("-".into());
                }
            }
        }
        rows.push(row);
    }
    let widths: Vec<usize> =
        (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    out.push('\n');
    for row in &rows {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, w))| if c < 2 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    let failed: Vec<_> = r.results.iter().filter_map(|p| p.outcome.as_ref().err().map(|f| (p, f))).collect();
    if !failed.is_empty() {
        out.push_str("\nerrors:\n");
        for (p, f) in failed {
            out.push_str(&format!("  {} [{}] {}\n", p.name, f.stage, f.message));
        }
    }
    out
}
