//! Scoring function-call predictions against a golden dataset.
//!
//! Predictions are raw model output strings, parsed into calls with
//! [`parse_call`]. Unparseable output is never dropped: it scores zero on
//! every metric, as an invalid third label in the F1 confusion matrix and
//! as a miss for content-type accuracy and subprompt similarity.

pub mod call;
pub mod stats;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::{ContentType, FunctionKind};
use crate::text;

pub use call::{format_call, parse_call, FunctionCall, ParseError};
pub use stats::{mcnemar_chi2, mcnemar_exact, paired_t, PairedTestResult, TestMethod};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("golden has {golden} rows but predictions have {predictions}")]
    LengthMismatch { golden: usize, predictions: usize },
    #[error("gold subprompt is empty")]
    EmptyGold,
    #[error("no discordant pairs to test")]
    NoDiscordantPairs,
    #[error("differences have zero variance")]
    ZeroVariance,
    #[error("need at least two paired samples, got {0}")]
    NotEnoughSamples(usize),
}

/// One annotated golden example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenExample {
    pub query: String,
    pub function: FunctionKind,
    pub content_type: ContentType,
    pub subprompt: String,
}

/// One model prediction, keyed positionally to the golden row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub query: String,
    pub raw_model_output: String,
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, EvalError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| EvalError::Io {
        path: display.clone(),
        source,
    })?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| EvalError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let item: T = serde_json::from_str(&line).map_err(|e| EvalError::Malformed {
            path: display.clone(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

/// Load golden examples, rejecting rows with empty fields.
pub fn load_golden(path: &Path) -> Result<Vec<GoldenExample>, EvalError> {
    let rows: Vec<GoldenExample> = read_jsonl(path)?;
    for (idx, row) in rows.iter().enumerate() {
        if row.query.trim().is_empty() || row.subprompt.trim().is_empty() {
            return Err(EvalError::Malformed {
                path: path.display().to_string(),
                line: idx + 1,
                reason: "query and subprompt must be non-empty".to_string(),
            });
        }
    }
    Ok(rows)
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>, EvalError> {
    read_jsonl(path)
}

/// Function label of a parsed call, if its name is a known function.
fn predicted_function(call: &FunctionCall) -> Option<FunctionKind> {
    call.name.parse().ok()
}

/// Macro and micro F1 plus the per-class scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct F1Scores {
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub per_class: BTreeMap<String, f64>,
}

/// Per-class precision/recall F1 over {Search, Generate}, with parse
/// failures (and calls naming neither function) as an implicit third
/// "invalid" label that can never be correct.
pub fn function_f1(
    preds: &[Option<FunctionCall>],
    gold: &[GoldenExample],
) -> Result<F1Scores, EvalError> {
    if preds.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            golden: gold.len(),
            predictions: preds.len(),
        });
    }
    let labels: Vec<Option<FunctionKind>> = preds
        .iter()
        .map(|p| p.as_ref().and_then(predicted_function))
        .collect();

    let mut per_class = BTreeMap::new();
    let mut macro_sum = 0.0;
    for class in FunctionKind::ALL {
        let tp = labels
            .iter()
            .zip(gold)
            .filter(|(p, g)| **p == Some(class) && g.function == class)
            .count() as f64;
        let fp = labels
            .iter()
            .zip(gold)
            .filter(|(p, g)| **p == Some(class) && g.function != class)
            .count() as f64;
        let fn_ = labels
            .iter()
            .zip(gold)
            .filter(|(p, g)| **p != Some(class) && g.function == class)
            .count() as f64;
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.insert(class.as_str().to_string(), f1);
        macro_sum += f1;
    }

    let correct = labels
        .iter()
        .zip(gold)
        .filter(|(p, g)| **p == Some(g.function))
        .count() as f64;
    Ok(F1Scores {
        macro_f1: macro_sum / FunctionKind::ALL.len() as f64,
        micro_f1: if gold.is_empty() { 0.0 } else { correct / gold.len() as f64 },
        per_class,
    })
}

/// Fraction of examples whose predicted `content_type` parameter matches
/// the gold label (case-insensitive). A gold label of `Any` accepts any
/// recognizable predicted type; a missing or unparseable parameter is
/// always wrong.
pub fn content_type_accuracy(
    preds: &[Option<FunctionCall>],
    gold: &[GoldenExample],
) -> Result<f64, EvalError> {
    if preds.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            golden: gold.len(),
            predictions: preds.len(),
        });
    }
    if gold.is_empty() {
        return Ok(0.0);
    }
    let correct = preds
        .iter()
        .zip(gold)
        .filter(|(pred, g)| {
            let Some(call) = pred else { return false };
            let Some(raw) = call.param("content_type") else {
                return false;
            };
            match raw.parse::<ContentType>() {
                Ok(ct) => g.content_type == ContentType::Any || ct == g.content_type,
                Err(_) => false,
            }
        })
        .count();
    Ok(correct as f64 / gold.len() as f64)
}

/// Pluggable similarity scorer for subprompts.
pub trait SimilarityProvider {
    fn name(&self) -> &str;
    fn similarity(&self, a: &str, b: &str) -> f64;
}

/// Cosine similarity over L2-normalized term-frequency vectors of
/// lowercased, punctuation-stripped tokens. Deterministic and offline.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalCosine;

impl SimilarityProvider for LexicalCosine {
    fn name(&self) -> &str {
        "lexical-cosine"
    }

    fn similarity(&self, a: &str, b: &str) -> f64 {
        let tf = |s: &str| {
            let mut map: BTreeMap<String, f64> = BTreeMap::new();
            for token in text::normalize_key(s).split_whitespace() {
                *map.entry(token.to_string()).or_insert(0.0) += 1.0;
            }
            map
        };
        let ta = tf(a);
        let tb = tf(b);
        let dot: f64 = ta
            .iter()
            .filter_map(|(k, va)| tb.get(k).map(|vb| va * vb))
            .sum();
        let na: f64 = ta.values().map(|v| v * v).sum::<f64>().sqrt();
        let nb: f64 = tb.values().map(|v| v * v).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            (dot / (na * nb)).clamp(0.0, 1.0)
        }
    }
}

/// Similarity between one predicted and one gold subprompt.
pub fn subprompt_similarity(
    pred_prompt: &str,
    gold_prompt: &str,
    provider: &dyn SimilarityProvider,
) -> Result<f64, EvalError> {
    if text::normalize_key(gold_prompt).is_empty() {
        return Err(EvalError::EmptyGold);
    }
    Ok(provider.similarity(pred_prompt, gold_prompt))
}

/// Aggregate scores over a golden dataset.
#[derive(Debug, Clone, Serialize)]
pub struct EvalResult {
    pub function_f1: f64,
    pub function_f1_micro: f64,
    pub per_class_f1: BTreeMap<String, f64>,
    pub cta: f64,
    pub ss_mean: f64,
    pub ss_values: Vec<f64>,
    pub n: usize,
    pub parse_failures: usize,
    pub similarity_provider: String,
}

/// Per-example row for error analysis.
#[derive(Debug, Clone, Serialize)]
pub struct ExampleRow {
    pub index: usize,
    pub query: String,
    pub gold_function: FunctionKind,
    pub pred_function: Option<String>,
    pub function_correct: bool,
    pub gold_content_type: ContentType,
    pub pred_content_type: Option<String>,
    pub content_correct: bool,
    pub ss: f64,
    pub parse_error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub result: EvalResult,
    pub rows: Vec<ExampleRow>,
}

impl EvalReport {
    pub fn write_json(&self, path: &Path) -> Result<(), EvalError> {
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, json).map_err(|source| EvalError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Score a prediction file against a golden file. Rows align by position.
pub fn evaluate(
    pred_path: &Path,
    golden_path: &Path,
    provider: &dyn SimilarityProvider,
) -> Result<EvalReport, EvalError> {
    let golden = load_golden(golden_path)?;
    let predictions = load_predictions(pred_path)?;
    evaluate_rows(&predictions, &golden, provider)
}

pub fn evaluate_rows(
    predictions: &[Prediction],
    golden: &[GoldenExample],
    provider: &dyn SimilarityProvider,
) -> Result<EvalReport, EvalError> {
    if predictions.len() != golden.len() {
        return Err(EvalError::LengthMismatch {
            golden: golden.len(),
            predictions: predictions.len(),
        });
    }

    let parsed: Vec<Result<FunctionCall, ParseError>> = predictions
        .iter()
        .map(|p| parse_call(&p.raw_model_output))
        .collect();
    let calls: Vec<Option<FunctionCall>> =
        parsed.iter().map(|r| r.as_ref().ok().cloned()).collect();

    let f1 = function_f1(&calls, golden)?;
    let cta = content_type_accuracy(&calls, golden)?;

    let mut ss_values = Vec::with_capacity(golden.len());
    let mut rows = Vec::with_capacity(golden.len());
    for (idx, (gold, parse_result)) in golden.iter().zip(&parsed).enumerate() {
        let call = parse_result.as_ref().ok();
        let ss = match call.and_then(|c| c.param("extracted_prompt")) {
            Some(pred_prompt) => subprompt_similarity(pred_prompt, &gold.subprompt, provider)?,
            None => 0.0,
        };
        ss_values.push(ss);

        let pred_function_label = call.map(|c| c.name.clone());
        let function_correct = call.and_then(predicted_function) == Some(gold.function);
        let pred_ct = call.and_then(|c| c.param("content_type")).map(str::to_string);
        let content_correct = pred_ct
            .as_deref()
            .and_then(|raw| raw.parse::<ContentType>().ok())
            .is_some_and(|ct| gold.content_type == ContentType::Any || ct == gold.content_type);
        rows.push(ExampleRow {
            index: idx,
            query: gold.query.clone(),
            gold_function: gold.function,
            pred_function: pred_function_label,
            function_correct,
            gold_content_type: gold.content_type,
            pred_content_type: pred_ct,
            content_correct,
            ss,
            parse_error: parse_result.as_ref().err().map(|e| e.to_string()),
        });
    }

    let parse_failures = parsed.iter().filter(|r| r.is_err()).count();
    let ss_mean = if ss_values.is_empty() {
        0.0
    } else {
        ss_values.iter().sum::<f64>() / ss_values.len() as f64
    };

    Ok(EvalReport {
        result: EvalResult {
            function_f1: f1.macro_f1,
            function_f1_micro: f1.micro_f1,
            per_class_f1: f1.per_class,
            cta,
            ss_mean,
            ss_values,
            n: golden.len(),
            parse_failures,
            similarity_provider: provider.name().to_string(),
        },
        rows,
    })
}

/// Build the self-prediction for a golden example: the call string a
/// perfect model would emit.
pub fn self_prediction(example: &GoldenExample) -> Prediction {
    let call = FunctionCall::new(example.function.as_str())
        .with_param("content_type", example.content_type.as_str())
        .with_param("extracted_prompt", &example.subprompt);
    Prediction {
        query: example.query.clone(),
        raw_model_output: format_call(&call),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn gold(function: FunctionKind, ct: ContentType, subprompt: &str) -> GoldenExample {
        GoldenExample {
            query: format!("query for {subprompt}"),
            function,
            content_type: ct,
            subprompt: subprompt.to_string(),
        }
    }

    fn call(name: &str, ct: &str, prompt: &str) -> Option<FunctionCall> {
        Some(
            FunctionCall::new(name)
                .with_param("content_type", ct)
                .with_param("extracted_prompt", prompt),
        )
    }

    #[test]
    fn f1_all_correct_is_one() {
        let gold = vec![
            gold(FunctionKind::Search, ContentType::Photo, "a"),
            gold(FunctionKind::Generate, ContentType::Template, "b"),
        ];
        let preds = vec![call("Search", "Photo", "a"), call("Generate", "Template", "b")];
        let scores = function_f1(&preds, &gold).unwrap();
        assert_abs_diff_eq!(scores.macro_f1, 1.0);
        assert_abs_diff_eq!(scores.micro_f1, 1.0);
    }

    #[test]
    fn f1_worked_confusion_example() {
        // gold [S,S,G,G], preds [S,G,G,G]: Search F1 = 2/3, Generate F1 =
        // 0.8, macro = 0.7333...
        let gold = vec![
            gold(FunctionKind::Search, ContentType::Any, "a"),
            gold(FunctionKind::Search, ContentType::Any, "b"),
            gold(FunctionKind::Generate, ContentType::Any, "c"),
            gold(FunctionKind::Generate, ContentType::Any, "d"),
        ];
        let preds = vec![
            call("Search", "Any", "a"),
            call("Generate", "Any", "b"),
            call("Generate", "Any", "c"),
            call("Generate", "Any", "d"),
        ];
        let scores = function_f1(&preds, &gold).unwrap();
        assert_abs_diff_eq!(scores.per_class["Search"], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(scores.per_class["Generate"], 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(scores.macro_f1, (2.0 / 3.0 + 0.8) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(scores.micro_f1, 0.75, epsilon = 1e-12);
    }

    #[test]
    fn f1_all_parse_failures_is_zero() {
        let gold = vec![
            gold(FunctionKind::Search, ContentType::Any, "a"),
            gold(FunctionKind::Generate, ContentType::Any, "b"),
        ];
        let preds = vec![None, None];
        let scores = function_f1(&preds, &gold).unwrap();
        assert_abs_diff_eq!(scores.macro_f1, 0.0);
        assert_abs_diff_eq!(scores.micro_f1, 0.0);
    }

    #[test]
    fn f1_unknown_function_name_counts_invalid() {
        let gold = vec![gold(FunctionKind::Search, ContentType::Any, "a")];
        let preds = vec![call("Retrieve", "Any", "a")];
        let scores = function_f1(&preds, &gold).unwrap();
        assert_abs_diff_eq!(scores.macro_f1, 0.0);
    }

    #[test]
    fn f1_length_mismatch() {
        let gold = vec![gold(FunctionKind::Search, ContentType::Any, "a")];
        assert!(matches!(
            function_f1(&[], &gold),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn cta_counts_matches() {
        let gold = vec![
            gold(FunctionKind::Search, ContentType::Photo, "a"),
            gold(FunctionKind::Search, ContentType::Video, "b"),
            gold(FunctionKind::Search, ContentType::Template, "c"),
            gold(FunctionKind::Search, ContentType::Audio, "d"),
        ];
        let preds = vec![
            call("Search", "photo", "a"),
            call("Search", "Video", "b"),
            call("Search", "Photo", "c"),
            call("Search", "Audio", "d"),
        ];
        let cta = content_type_accuracy(&preds, &gold).unwrap();
        assert_abs_diff_eq!(cta, 0.75);
    }

    #[test]
    fn cta_any_accepts_anything_recognizable() {
        let gold = vec![gold(FunctionKind::Search, ContentType::Any, "a")];
        assert_abs_diff_eq!(
            content_type_accuracy(&[call("Search", "Photo", "a")], &gold).unwrap(),
            1.0
        );
        assert_abs_diff_eq!(
            content_type_accuracy(&[call("Search", "nonsense", "a")], &gold).unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            content_type_accuracy(&[Some(FunctionCall::new("Search"))], &gold).unwrap(),
            0.0
        );
    }

    #[test]
    fn ss_identical_and_disjoint() {
        let provider = LexicalCosine;
        assert_abs_diff_eq!(
            subprompt_similarity("birthday cake", "birthday cake", &provider).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            subprompt_similarity("alpha beta", "gamma delta", &provider).unwrap(),
            0.0
        );
    }

    #[test]
    fn ss_partial_overlap_worked_example() {
        // dot = 2, norms sqrt(3) and sqrt(2): 2/sqrt(6) = 0.8165.
        let provider = LexicalCosine;
        let ss = subprompt_similarity(
            "birthday balloons confetti",
            "birthday balloons",
            &provider,
        )
        .unwrap();
        assert_abs_diff_eq!(ss, 2.0 / 6.0_f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn ss_symmetric_and_order_invariant() {
        let provider = LexicalCosine;
        let a = "bright summer beach party";
        let b = "party beach summer";
        assert_abs_diff_eq!(provider.similarity(a, b), provider.similarity(b, a));
        assert_abs_diff_eq!(provider.similarity("x y z", "z y x"), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ss_empty_gold_errors() {
        let provider = LexicalCosine;
        assert!(matches!(
            subprompt_similarity("x", "  ", &provider),
            Err(EvalError::EmptyGold)
        ));
    }

    #[test]
    fn evaluate_perfect_self_predictions() {
        let golden = vec![
            gold(FunctionKind::Search, ContentType::Photo, "elephant"),
            gold(FunctionKind::Generate, ContentType::Template, "birthday invite"),
            gold(FunctionKind::Search, ContentType::Any, "beach sunset"),
        ];
        let preds: Vec<Prediction> = golden.iter().map(self_prediction).collect();
        let report = evaluate_rows(&preds, &golden, &LexicalCosine).unwrap();
        assert_abs_diff_eq!(report.result.function_f1, 1.0);
        assert_abs_diff_eq!(report.result.cta, 1.0);
        assert_abs_diff_eq!(report.result.ss_mean, 1.0, epsilon = 1e-12);
        assert_eq!(report.result.parse_failures, 0);
        assert_eq!(report.rows.len(), 3);
    }

    #[test]
    fn evaluate_counts_parse_failures_as_zero() {
        let golden = vec![
            gold(FunctionKind::Search, ContentType::Photo, "elephant"),
            gold(FunctionKind::Generate, ContentType::Template, "invite"),
        ];
        let preds = vec![
            self_prediction(&golden[0]),
            Prediction {
                query: golden[1].query.clone(),
                raw_model_output: "this is not a call".to_string(),
            },
        ];
        let report = evaluate_rows(&preds, &golden, &LexicalCosine).unwrap();
        assert_eq!(report.result.parse_failures, 1);
        assert_abs_diff_eq!(report.result.ss_values[1], 0.0);
        assert_abs_diff_eq!(report.result.cta, 0.5);
        assert!(report.rows[1].parse_error.is_some());
    }

    #[test]
    fn evaluate_length_mismatch_fatal() {
        let golden = vec![gold(FunctionKind::Search, ContentType::Photo, "x")];
        assert!(matches!(
            evaluate_rows(&[], &golden, &LexicalCosine),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn golden_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("golden.jsonl");
        let rows = vec![
            gold(FunctionKind::Search, ContentType::Template, "birthday balloons confetti"),
            gold(FunctionKind::Generate, ContentType::DesignAsset, "podcast cover neon"),
        ];
        let lines: Vec<String> = rows
            .iter()
            .map(|r| serde_json::to_string(r).unwrap())
            .collect();
        std::fs::write(&path, lines.join("\n")).unwrap();
        let loaded = load_golden(&path).unwrap();
        assert_eq!(loaded, rows);
    }

    #[test]
    fn golden_rejects_empty_subprompt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("golden.jsonl");
        std::fs::write(
            &path,
            r#"{"query":"q","function":"Search","content_type":"Photo","subprompt":" "}"#,
        )
        .unwrap();
        assert!(matches!(load_golden(&path), Err(EvalError::Malformed { .. })));
    }
}
