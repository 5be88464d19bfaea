//! Corpus diversity analytics: word-count statistics, content-type and
//! length histograms, normalized keyword positions, and distribution
//! divergence against a reference.
//!
//! Quantiles use linear interpolation between order statistics (the
//! "type 7" convention), so numbers are reproducible against the common
//! default in numpy and R. Divergence is Jensen-Shannon with log base 2,
//! which is symmetric and bounded to [0, 1].

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::{ContentType, FunctionKind, QueryRecord};
use crate::text;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("distribution has zero total mass")]
    EmptyDistribution,
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid reference file: {0}")]
    InvalidReference(String),
}

/// Mean, median, and quartiles of per-query word counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordCountStats {
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub n: usize,
}

/// Linear-interpolation quantile over a sorted sample.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Word-count statistics over a list of queries.
pub fn word_count_stats<S: AsRef<str>>(queries: &[S]) -> Result<WordCountStats, MetricsError> {
    if queries.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let mut counts: Vec<f64> = queries
        .iter()
        .map(|q| text::word_count(q.as_ref()) as f64)
        .collect();
    counts.sort_by(|a, b| a.partial_cmp(b).expect("word counts are finite"));
    let n = counts.len();
    let mean = counts.iter().sum::<f64>() / n as f64;
    let median = quantile_sorted(&counts, 0.5);
    let q1 = quantile_sorted(&counts, 0.25);
    let q3 = quantile_sorted(&counts, 0.75);
    Ok(WordCountStats {
        mean,
        median,
        q1,
        q3,
        iqr: q3 - q1,
        n,
    })
}

/// Categorical histogram with a stable bin order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub bins: BTreeMap<String, u64>,
    pub total: u64,
}

impl Histogram {
    pub fn from_counts<I: IntoIterator<Item = (String, u64)>>(counts: I) -> Self {
        let bins: BTreeMap<String, u64> = counts.into_iter().collect();
        let total = bins.values().sum();
        Self { bins, total }
    }

    pub fn increment(&mut self, bin: &str) {
        *self.bins.entry(bin.to_string()).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn count(&self, bin: &str) -> u64 {
        self.bins.get(bin).copied().unwrap_or(0)
    }

    pub fn fraction(&self, bin: &str) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count(bin) as f64 / self.total as f64
        }
    }
}

/// Content-type tallies with every enum category present, zero-filled.
pub fn content_type_distribution(records: &[QueryRecord]) -> Histogram {
    let mut bins: BTreeMap<String, u64> = ContentType::ALL
        .iter()
        .map(|ct| (ct.as_str().to_string(), 0))
        .collect();
    for record in records {
        *bins.entry(record.content_type.as_str().to_string()).or_insert(0) += 1;
    }
    let total = bins.values().sum();
    Histogram { bins, total }
}

/// Normalized position of the first case-insensitive exact-token match:
/// `index / (len - 1)`, with single-token queries pinned to 0.0. `None`
/// when the keyword does not occur.
pub fn keyword_position(query: &str, keyword: &str) -> Option<f64> {
    let wanted = keyword.to_lowercase();
    let tokens: Vec<&str> = query.split_whitespace().collect();
    let idx = tokens.iter().position(|t| t.to_lowercase() == wanted)?;
    if tokens.len() == 1 {
        Some(0.0)
    } else {
        Some(idx as f64 / (tokens.len() - 1) as f64)
    }
}

/// Keywords scanned for position bias: the natural-language words for
/// each content type, plus "image" which queries use interchangeably
/// with "photo".
pub fn default_position_keywords() -> Vec<String> {
    let mut keywords: Vec<String> = ContentType::ALL
        .iter()
        .filter_map(|ct| ct.keyword().map(str::to_string))
        .collect();
    keywords.push("image".to_string());
    keywords
}

/// Position of the first token that is any of the given keywords.
pub fn first_keyword_position(query: &str, keywords: &[String]) -> Option<f64> {
    let tokens: Vec<String> = query
        .split_whitespace()
        .map(|t| t.to_lowercase())
        .collect();
    let idx = tokens
        .iter()
        .position(|t| keywords.iter().any(|k| k == t))?;
    if tokens.len() == 1 {
        Some(0.0)
    } else {
        Some(idx as f64 / (tokens.len() - 1) as f64)
    }
}

/// Word-count histogram for one function kind. Bins are integer word
/// counts; only non-empty bins appear.
pub fn length_histogram(records: &[QueryRecord], function: FunctionKind) -> Histogram {
    let mut hist = Histogram::default();
    for record in records {
        if record.function == function {
            hist.increment(&text::word_count(&record.input).to_string());
        }
    }
    hist
}

/// Jensen-Shannon divergence (log base 2) between two histograms over the
/// union of their categories.
pub fn distribution_divergence(p: &Histogram, q: &Histogram) -> Result<f64, MetricsError> {
    if p.total == 0 || q.total == 0 {
        return Err(MetricsError::EmptyDistribution);
    }
    let categories: std::collections::BTreeSet<&String> =
        p.bins.keys().chain(q.bins.keys()).collect();
    let mut js = 0.0;
    for cat in categories {
        let pp = p.fraction(cat);
        let qq = q.fraction(cat);
        let m = 0.5 * (pp + qq);
        if pp > 0.0 {
            js += 0.5 * pp * (pp / m).log2();
        }
        if qq > 0.0 {
            js += 0.5 * qq * (qq / m).log2();
        }
    }
    // Guard against tiny negative rounding residue.
    Ok(js.max(0.0))
}

/// Reference distributions a corpus is compared against.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceBundle {
    pub reference_id: String,
    /// Content-type counts of the reference population.
    pub content_types: BTreeMap<String, u64>,
    /// Display-only summary of the reference word-count shape.
    #[serde(default)]
    pub word_stats: Option<ReferenceWordStats>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceWordStats {
    pub mean: f64,
    pub median: f64,
}

impl ReferenceBundle {
    pub fn from_path(path: &Path) -> Result<Self, MetricsError> {
        let raw = std::fs::read_to_string(path).map_err(|source| MetricsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let bundle: ReferenceBundle =
            serde_json::from_str(&raw).map_err(|e| MetricsError::InvalidReference(e.to_string()))?;
        if bundle.content_types.values().sum::<u64>() == 0 {
            return Err(MetricsError::InvalidReference(
                "reference content_types are all zero".to_string(),
            ));
        }
        Ok(bundle)
    }

    pub fn content_histogram(&self) -> Histogram {
        Histogram::from_counts(self.content_types.clone())
    }
}

/// Full analytics bundle over one corpus.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub corpus_id: String,
    pub reference_id: String,
    pub n_records: usize,
    pub word_stats_search: Option<WordCountStats>,
    pub word_stats_generate: Option<WordCountStats>,
    pub content_histogram: Histogram,
    pub keyword_position_samples: Vec<f64>,
    pub length_histogram_search: Histogram,
    pub length_histogram_generate: Histogram,
    pub divergence_vs_reference: f64,
}

/// Compute the full report against a reference bundle.
pub fn build_report(
    records: &[QueryRecord],
    reference: &ReferenceBundle,
    corpus_id: &str,
) -> Result<MetricsReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let search_inputs: Vec<&str> = records
        .iter()
        .filter(|r| r.function == FunctionKind::Search)
        .map(|r| r.input.as_str())
        .collect();
    let generate_inputs: Vec<&str> = records
        .iter()
        .filter(|r| r.function == FunctionKind::Generate)
        .map(|r| r.input.as_str())
        .collect();

    let content_histogram = content_type_distribution(records);
    let keywords = default_position_keywords();
    let keyword_position_samples: Vec<f64> = records
        .iter()
        .filter_map(|r| first_keyword_position(&r.input, &keywords))
        .collect();
    let divergence_vs_reference =
        distribution_divergence(&content_histogram, &reference.content_histogram())?;

    Ok(MetricsReport {
        corpus_id: corpus_id.to_string(),
        reference_id: reference.reference_id.clone(),
        n_records: records.len(),
        word_stats_search: (!search_inputs.is_empty())
            .then(|| word_count_stats(&search_inputs))
            .transpose()?,
        word_stats_generate: (!generate_inputs.is_empty())
            .then(|| word_count_stats(&generate_inputs))
            .transpose()?,
        content_histogram,
        keyword_position_samples,
        length_histogram_search: length_histogram(records, FunctionKind::Search),
        length_histogram_generate: length_histogram(records, FunctionKind::Generate),
        divergence_vs_reference,
    })
}

impl MetricsReport {
    /// Write the report JSON plus the plot-ready CSV series files:
    /// word_counts.csv, content_types.csv, keyword_positions.csv,
    /// lengths_search.csv, lengths_generate.csv.
    pub fn write_files(&self, dir: &Path, records: &[QueryRecord]) -> Result<(), MetricsError> {
        let io_err = |path: &Path| {
            let path = path.display().to_string();
            move |source| MetricsError::Io {
                path: path.clone(),
                source,
            }
        };

        let report_path = dir.join("report.json");
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(&report_path, json).map_err(io_err(&report_path))?;

        let path = dir.join("word_counts.csv");
        let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        writeln!(w, "function,words").map_err(io_err(&path))?;
        for record in records {
            writeln!(
                w,
                "{},{}",
                record.function,
                text::word_count(&record.input)
            )
            .map_err(io_err(&path))?;
        }

        let path = dir.join("content_types.csv");
        let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        writeln!(w, "content_type,count,fraction").map_err(io_err(&path))?;
        for (bin, count) in &self.content_histogram.bins {
            writeln!(
                w,
                "{},{},{:.6}",
                bin,
                count,
                self.content_histogram.fraction(bin)
            )
            .map_err(io_err(&path))?;
        }

        let path = dir.join("keyword_positions.csv");
        let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        writeln!(w, "position").map_err(io_err(&path))?;
        for pos in &self.keyword_position_samples {
            writeln!(w, "{pos:.6}").map_err(io_err(&path))?;
        }

        for (name, hist) in [
            ("lengths_search.csv", &self.length_histogram_search),
            ("lengths_generate.csv", &self.length_histogram_generate),
        ] {
            let path = dir.join(name);
            let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
            writeln!(w, "words,count").map_err(io_err(&path))?;
            let mut bins: Vec<(usize, u64)> = hist
                .bins
                .iter()
                .map(|(k, v)| (k.parse::<usize>().unwrap_or(0), *v))
                .collect();
            bins.sort_unstable();
            for (words, count) in bins {
                writeln!(w, "{words},{count}").map_err(io_err(&path))?;
            }
        }

        Ok(())
    }
}
