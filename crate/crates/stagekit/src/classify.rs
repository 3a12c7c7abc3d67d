//! Stage classification backends: a rule-based classifier over a static
//! name-to-stage mapping, and a language-model classifier driven by
//! versioned prompt templates. Both emit the same `Prediction` record, so
//! downstream evaluation never branches on backend.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::{
    sha256_hex, DecodingParams, EndpointConfig, InferenceClient, InferenceError,
};
use crate::ingest::statements::{classify_chars, CharClass};
use crate::ingest::{Instruction, Notebook, StaticMapping};
use crate::taxonomy::UnifiedTaxonomy;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("prompt template `{id}`: {message}")]
    Template { id: String, message: String },
    #[error("classifier config: {0}")]
    Config(String),
    #[error("cell aggregation saw mixed instruction refs: {first} vs {second}")]
    MixedCell { first: String, second: String },
    #[error("cell aggregation needs at least one prediction")]
    EmptyCell,
    #[error("perplexity is undefined for an empty log-probability list")]
    EmptyLogprobs,
    #[error("log-probability at index {0} is positive; probabilities cannot exceed 1")]
    PositiveLogprob(usize),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

/// A stage label as emitted by a classifier. `None` means the backend found
/// nothing to classify (e.g. no mapped call); `Unknown` means it produced
/// text that matches no stage.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "stage", rename_all = "snake_case")]
pub enum Label {
    Stage(String),
    Unknown,
    None,
}

impl Label {
    pub fn as_stage(&self) -> Option<&str> {
        match self {
            Label::Stage(s) => Some(s),
            _ => None,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Label::Stage(s) => f.write_str(s),
            Label::Unknown => f.write_str("<unknown>"),
            Label::None => f.write_str("<none>"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Rule,
    Slm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub backend: Backend,
    /// Version tag of the taxonomy the classifier must emit labels from.
    pub taxonomy_version: String,
    #[serde(default)]
    pub template_id: Option<String>,
    #[serde(default = "default_decoding")]
    pub decoding: DecodingParams,
    #[serde(default)]
    pub endpoint: Option<EndpointConfig>,
    /// Base delay for exponential backoff on transport retries.
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
}

fn default_decoding() -> DecodingParams {
    DecodingParams {
        temperature: 0.0,
        top_p: 1.0,
        max_tokens: 16,
        logprobs: true,
    }
}

fn default_retry_base_ms() -> u64 {
    250
}

/// Rough token count: alphanumeric runs and individual punctuation marks.
/// Used to size the output budget when no backend tokenizer report is
/// available.
pub fn default_token_estimate(text: &str) -> u32 {
    let mut tokens = 0u32;
    let mut in_word = false;
    for c in text.chars() {
        if c.is_alphanumeric() || c == '_' {
            if !in_word {
                tokens += 1;
                in_word = true;
            }
        } else {
            in_word = false;
            if !c.is_whitespace() {
                tokens += 1;
            }
        }
    }
    tokens
}

/// Smallest output budget that fits every headword, plus slack for
/// end-of-text markers. Recomputed per taxonomy version so mutations that
/// lengthen a headword are covered.
pub fn recommended_max_tokens(tax: &UnifiedTaxonomy, estimate: impl Fn(&str) -> u32) -> u32 {
    tax.headwords().map(&estimate).max().unwrap_or(0) + 2
}

impl ClassifierConfig {
    /// Stable digest over everything that affects predictions, stamped on
    /// every record so artifacts from different configurations never mix.
    /// Transport details (endpoint location, cassette path, timeouts, retry
    /// pacing) are excluded: moving a run does not change what the model
    /// would answer, and artifacts must stay portable across machines.
    pub fn hash(&self) -> String {
        #[derive(Serialize)]
        struct Fingerprint<'a> {
            backend: Backend,
            taxonomy_version: &'a str,
            template_id: Option<&'a str>,
            decoding: &'a DecodingParams,
            model: Option<&'a str>,
        }
        let fingerprint = Fingerprint {
            backend: self.backend,
            taxonomy_version: &self.taxonomy_version,
            template_id: self.template_id.as_deref(),
            decoding: &self.decoding,
            model: self.endpoint.as_ref().map(|e| e.model.as_str()),
        };
        let canonical = serde_json::to_string(&fingerprint).expect("config serializes");
        sha256_hex(&canonical)
    }

    pub fn validate(&self, tax: &UnifiedTaxonomy) -> Result<(), ClassifyError> {
        self.validate_with(tax, default_token_estimate)
    }

    /// Validation with a caller-supplied token estimator (e.g. a real
    /// tokenizer report from the backend).
    pub fn validate_with(
        &self,
        tax: &UnifiedTaxonomy,
        estimate: impl Fn(&str) -> u32,
    ) -> Result<(), ClassifyError> {
        if self.taxonomy_version != tax.version {
            return Err(ClassifyError::Config(format!(
                "config targets taxonomy version `{}` but `{}` was loaded",
                self.taxonomy_version, tax.version
            )));
        }
        if self.backend == Backend::Slm {
            if self.decoding.temperature != 0.0 {
                return Err(ClassifyError::Config(format!(
                    "model runs require temperature = 0, got {}",
                    self.decoding.temperature
                )));
            }
            if self.decoding.top_p != 1.0 {
                return Err(ClassifyError::Config(format!(
                    "model runs require top_p = 1, got {}",
                    self.decoding.top_p
                )));
            }
            if self.endpoint.is_none() {
                return Err(ClassifyError::Config(
                    "model backend requires an endpoint".into(),
                ));
            }
            if self.template_id.is_none() {
                return Err(ClassifyError::Config(
                    "model backend requires a prompt template".into(),
                ));
            }
            let longest = tax.headwords().map(&estimate).max().unwrap_or(0);
            if self.decoding.max_tokens < longest {
                return Err(ClassifyError::Config(format!(
                    "max_tokens {} cannot fit the longest headword ({} tokens)",
                    self.decoding.max_tokens, longest
                )));
            }
        }
        Ok(())
    }
}

pub const PLACEHOLDER_INSTRUCTION: &str = "{{instruction}}";
pub const PLACEHOLDER_NOTEBOOK: &str = "{{notebook}}";
pub const PLACEHOLDER_TAXONOMY: &str = "{{taxonomy}}";

/// A versioned prompt body with three placeholders: the target instruction,
/// the full notebook code, and the taxonomy's headwords with definitions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub version: String,
    /// Prompting technique tag, e.g. "zero-shot" or "chain-of-thought".
    pub technique: String,
    pub body: String,
}

impl PromptTemplate {
    pub fn new(
        id: impl Into<String>,
        version: impl Into<String>,
        technique: impl Into<String>,
        body: impl Into<String>,
    ) -> Result<Self, ClassifyError> {
        let template = Self {
            id: id.into(),
            version: version.into(),
            technique: technique.into(),
            body: body.into(),
        };
        template.check_placeholders()?;
        Ok(template)
    }

    /// Loads a template file: TOML front matter (id, version, technique)
    /// terminated by a `---` line, then the body.
    pub fn load(path: &std::path::Path) -> Result<Self, ClassifyError> {
        let text = std::fs::read_to_string(path).map_err(|e| ClassifyError::Template {
            id: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut front = String::new();
        let mut body = String::new();
        let mut seen_separator = false;
        for line in text.lines() {
            if !seen_separator && line.trim() == "---" {
                seen_separator = true;
                continue;
            }
            if seen_separator {
                body.push_str(line);
                body.push('\n');
            } else {
                front.push_str(line);
                front.push('\n');
            }
        }
        if !seen_separator {
            return Err(ClassifyError::Template {
                id: path.display().to_string(),
                message: "missing `---` separator between front matter and body".into(),
            });
        }
        #[derive(Deserialize)]
        struct FrontMatter {
            id: String,
            version: String,
            technique: String,
        }
        let front: FrontMatter = toml::from_str(&front).map_err(|e| ClassifyError::Template {
            id: path.display().to_string(),
            message: format!("front matter: {e}"),
        })?;
        Self::new(front.id, front.version, front.technique, body)
    }

    fn check_placeholders(&self) -> Result<(), ClassifyError> {
        for placeholder in [
            PLACEHOLDER_INSTRUCTION,
            PLACEHOLDER_NOTEBOOK,
            PLACEHOLDER_TAXONOMY,
        ] {
            let count = self.body.matches(placeholder).count();
            if count != 1 {
                return Err(ClassifyError::Template {
                    id: self.id.clone(),
                    message: format!(
                        "placeholder {placeholder} must appear exactly once, found {count}"
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Renders the taxonomy section of a prompt: one line per group,
/// headword plus definition, in taxonomy order.
fn render_taxonomy(tax: &UnifiedTaxonomy) -> String {
    let mut out = String::new();
    for group in tax.groups() {
        out.push_str("- ");
        out.push_str(&group.headword);
        out.push_str(": ");
        out.push_str(&group.definition);
        out.push('\n');
    }
    out
}

/// Full notebook code: every code cell's source in cell order, separated by
/// blank lines.
fn render_notebook(notebook: &Notebook) -> String {
    let mut out = String::new();
    for cell in notebook.code_cells() {
        if !out.is_empty() {
            out.push_str("\n\n");
        }
        out.push_str(&cell.source);
    }
    out
}

pub fn render_prompt(
    template: &PromptTemplate,
    instr: &Instruction,
    notebook: &Notebook,
    tax: &UnifiedTaxonomy,
) -> Result<String, ClassifyError> {
    template.check_placeholders()?;
    Ok(template
        .body
        .replace(PLACEHOLDER_TAXONOMY, &render_taxonomy(tax))
        .replace(PLACEHOLDER_NOTEBOOK, &render_notebook(notebook))
        .replace(PLACEHOLDER_INSTRUCTION, &instr.source))
}

/// Stable identity of the classified instruction, carried on every
/// prediction so runs can resume and aggregate by cell.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InstructionRef {
    pub notebook_id: String,
    pub cell_index: usize,
    pub ordinal: usize,
}

impl InstructionRef {
    pub fn of(instr: &Instruction) -> Self {
        Self {
            notebook_id: instr.notebook_id.clone(),
            cell_index: instr.cell_index,
            ordinal: instr.ordinal,
        }
    }

    pub fn key(&self) -> String {
        format!(
            "{}::{}::{}",
            self.notebook_id, self.cell_index, self.ordinal
        )
    }
}

/// Terminal state of one classification attempt. Only `Ok` predictions
/// count as valid in binary-outcome evaluation; the others are preserved,
/// never imputed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PredictionOutcome {
    Ok,
    /// Transport gave out after the retry budget, or the endpoint answered
    /// with an unusable body.
    Failed {
        retries: u32,
        message: String,
    },
    /// The model hit the output token budget before finishing.
    Truncated,
}

/// One mapped call found by the rule backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleMatch {
    pub name: String,
    pub stage: String,
    /// Character offset of the name within the instruction source.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub instruction: InstructionRef,
    pub label: Label,
    pub outcome: PredictionOutcome,
    /// Raw model output before normalization; empty for the rule backend.
    pub raw_text: String,
    pub duration_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perplexity: Option<f64>,
    /// Every mapped call in source order; the first one names the label.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub matches: Vec<RuleMatch>,
    pub config_hash: String,
}

const PYTHON_KEYWORDS: [&str; 33] = [
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue",
    "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if", "import",
    "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try", "while",
];

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Finds every called name in an instruction: the identifier immediately
/// before an opening parenthesis, outside strings and comments. Attribute
/// calls contribute their final segment. Hard keywords never match, so
/// `if (x)` is not a call.
fn called_names(source: &str) -> Vec<(String, usize)> {
    let classified = classify_chars(source);
    let mut names = Vec::new();
    for (i, (c, class)) in classified.iter().enumerate() {
        if *c != '(' || !matches!(class, CharClass::Code(_)) {
            continue;
        }
        let mut j = i;
        while j > 0 {
            let (pc, pclass) = classified[j - 1];
            if pc.is_whitespace() && matches!(pclass, CharClass::Code(_)) {
                j -= 1;
            } else {
                break;
            }
        }
        let end = j;
        while j > 0 {
            let (pc, pclass) = classified[j - 1];
            if is_ident_char(pc) && matches!(pclass, CharClass::Code(_)) {
                j -= 1;
            } else {
                break;
            }
        }
        if j == end {
            continue;
        }
        let name: String = classified[j..end].iter().map(|(c, _)| *c).collect();
        if name.chars().next().is_some_and(|c| c.is_ascii_digit()) {
            continue;
        }
        if PYTHON_KEYWORDS.contains(&name.as_str()) {
            continue;
        }
        names.push((name, j));
    }
    names
}

/// Labels an instruction by the first call whose name the static mapping
/// knows; `None` when no call matches. Absence of a match is data, not an
/// error.
pub fn classify_rule_based(
    instr: &Instruction,
    mapping: &StaticMapping,
    config_hash: &str,
) -> Prediction {
    let started = Instant::now();
    let mut matches = Vec::new();
    for (name, offset) in called_names(&instr.source) {
        if let Some(stage) = mapping.stage_of(&name) {
            matches.push(RuleMatch {
                name,
                stage: stage.to_string(),
                offset,
            });
        }
    }
    let label = match matches.first() {
        Some(m) => Label::Stage(m.stage.clone()),
        None => Label::None,
    };
    Prediction {
        instruction: InstructionRef::of(instr),
        label,
        outcome: PredictionOutcome::Ok,
        raw_text: String::new(),
        duration_ms: started.elapsed().as_millis() as u64,
        logprobs: None,
        perplexity: None,
        matches,
        config_hash: config_hash.to_string(),
    }
}

/// Maps raw model output to a taxonomy label: trim surrounding whitespace,
/// punctuation, and quotes; case-fold; exact match against headwords, then
/// aliases. Anything else is `Unknown`. Idempotent over its own output.
pub fn normalize_label(raw: &str, tax: &UnifiedTaxonomy) -> Label {
    let trimmed = raw
        .trim_matches(|c: char| c.is_whitespace() || c.is_ascii_punctuation())
        .to_lowercase();
    if trimmed.is_empty() {
        return Label::Unknown;
    }
    for group in tax.groups() {
        if group.headword.to_lowercase() == trimmed {
            return Label::Stage(group.headword.clone());
        }
    }
    for group in tax.groups() {
        if group
            .aliases
            .iter()
            .any(|alias| alias.to_lowercase() == trimmed)
        {
            return Label::Stage(group.headword.clone());
        }
    }
    Label::Unknown
}

/// Mean-NLL perplexity of a generated token sequence: exp(−mean(logprobs)).
/// Always ≥ 1; equal to 1 only when every token had probability 1.
pub fn perplexity(logprobs: &[f64]) -> Result<f64, ClassifyError> {
    if logprobs.is_empty() {
        return Err(ClassifyError::EmptyLogprobs);
    }
    if let Some(i) = logprobs.iter().position(|&lp| lp > 0.0) {
        return Err(ClassifyError::PositiveLogprob(i));
    }
    let mean = logprobs.iter().sum::<f64>() / logprobs.len() as f64;
    Ok((-mean).exp())
}

const MAX_ATTEMPTS: u32 = 3;

/// Classifies one instruction with the language model: renders the prompt,
/// sends it (retrying transport failures with exponential backoff), and
/// normalizes the reply. Endpoint trouble becomes a `Failed` prediction;
/// fixture and configuration problems propagate as errors because the rest
/// of the run would be equally broken.
pub fn classify_slm(
    instr: &Instruction,
    notebook: &Notebook,
    template: &PromptTemplate,
    tax: &UnifiedTaxonomy,
    cfg: &ClassifierConfig,
    client: &InferenceClient,
) -> Result<Prediction, ClassifyError> {
    let prompt = render_prompt(template, instr, notebook, tax)?;
    let config_hash = cfg.hash();
    let instruction = InstructionRef::of(instr);

    let mut last_transport: Option<String> = None;
    for attempt in 1..=MAX_ATTEMPTS {
        match client.complete(&prompt, &cfg.decoding) {
            Ok(response) => {
                let label = normalize_label(&response.text, tax);
                let perplexity = match &response.logprobs {
                    Some(lps) if !lps.is_empty() => perplexity(lps).ok(),
                    _ => None,
                };
                let outcome = if response.finish_reason.as_deref() == Some("length") {
                    PredictionOutcome::Truncated
                } else {
                    PredictionOutcome::Ok
                };
                let duration_ms = response.duration_ms();
                return Ok(Prediction {
                    instruction,
                    label,
                    outcome,
                    raw_text: response.text,
                    duration_ms,
                    logprobs: response.logprobs,
                    perplexity,
                    matches: Vec::new(),
                    config_hash,
                });
            }
            Err(e @ InferenceError::Transport(_)) => {
                last_transport = Some(e.to_string());
                if attempt < MAX_ATTEMPTS {
                    let delay = cfg.retry_base_ms.saturating_mul(1 << (attempt - 1));
                    std::thread::sleep(std::time::Duration::from_millis(delay));
                }
            }
            Err(InferenceError::Protocol(message)) => {
                // Unusable body: data, not transport. Recorded, not retried.
                return Ok(Prediction {
                    instruction,
                    label: Label::Unknown,
                    outcome: PredictionOutcome::Failed {
                        retries: attempt - 1,
                        message,
                    },
                    raw_text: String::new(),
                    duration_ms: 0,
                    logprobs: None,
                    perplexity: None,
                    matches: Vec::new(),
                    config_hash,
                });
            }
            Err(fatal) => return Err(fatal.into()),
        }
    }
    Ok(Prediction {
        instruction,
        label: Label::Unknown,
        outcome: PredictionOutcome::Failed {
            retries: MAX_ATTEMPTS,
            message: last_transport.unwrap_or_else(|| "transport failure".into()),
        },
        raw_text: String::new(),
        duration_ms: 0,
        logprobs: None,
        perplexity: None,
        matches: Vec::new(),
        config_hash,
    })
}

/// Multi-label prediction for one cell: the distinct stages its
/// instructions were labeled with, with unclassifiable counts alongside.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellPrediction {
    pub notebook_id: String,
    pub cell_index: usize,
    pub stages: BTreeSet<String>,
    pub none_count: usize,
    pub unknown_count: usize,
    pub failed_count: usize,
    pub truncated_count: usize,
}

/// Collapses one cell's instruction predictions into its stage set:
/// distinct non-None, non-Unknown labels from well-formed predictions.
/// Order-invariant by construction.
pub fn aggregate_cell(preds: &[Prediction]) -> Result<CellPrediction, ClassifyError> {
    let first = preds.first().ok_or(ClassifyError::EmptyCell)?;
    let notebook_id = first.instruction.notebook_id.clone();
    let cell_index = first.instruction.cell_index;
    let mut cell = CellPrediction {
        notebook_id: notebook_id.clone(),
        cell_index,
        stages: BTreeSet::new(),
        none_count: 0,
        unknown_count: 0,
        failed_count: 0,
        truncated_count: 0,
    };
    for pred in preds {
        if pred.instruction.notebook_id != notebook_id || pred.instruction.cell_index != cell_index
        {
            return Err(ClassifyError::MixedCell {
                first: first.instruction.key(),
                second: pred.instruction.key(),
            });
        }
        match &pred.outcome {
            PredictionOutcome::Failed { .. } => {
                cell.failed_count += 1;
                continue;
            }
            PredictionOutcome::Truncated => {
                cell.truncated_count += 1;
                continue;
            }
            PredictionOutcome::Ok => {}
        }
        match &pred.label {
            Label::Stage(s) => {
                cell.stages.insert(s.clone());
            }
            Label::None => cell.none_count += 1,
            Label::Unknown => cell.unknown_count += 1,
        }
    }
    Ok(cell)
}
