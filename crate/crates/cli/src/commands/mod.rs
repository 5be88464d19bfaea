//! Subcommand implementations.

pub mod generate;

use std::path::Path;

use queryforge::evaluator::{self, LexicalCosine, SimilarityProvider};
use queryforge::heuristics::VerbLexicon;
use queryforge::knowledge::{load_assets, load_graph, AssetCatalog, KnowledgeGraph};
use queryforge::metrics::{build_report, ReferenceBundle};
use queryforge::prompts::TemplateRegistry;
use queryforge::record::read_records;
use queryforge::router::{default_routes, default_target, AdaptationParams, RouterConfig};
use queryforge::validator::{run_filter, ValidationPolicy};

use crate::config::PipelineConfig;
use crate::CliError;

/// Everything the pipeline loads from disk before generating.
pub struct Stores {
    pub graph: KnowledgeGraph,
    pub catalog: AssetCatalog,
    pub lexicon: VerbLexicon,
    pub templates: TemplateRegistry,
    pub policy: ValidationPolicy,
    pub router_config: RouterConfig,
}

pub fn load_stores(config: &PipelineConfig) -> Result<Stores, CliError> {
    let graph = load_graph(&config.kg)
        .map_err(|e| CliError::Data(format!("{}: {e}", config.kg.display())))?;
    let catalog = load_assets(&config.assets)
        .map_err(|e| CliError::Data(format!("{}: {e}", config.assets.display())))?;
    let lexicon = match &config.lexicon {
        Some(path) => VerbLexicon::from_path(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
        None => VerbLexicon::default(),
    };
    let templates = match &config.templates {
        Some(path) => TemplateRegistry::from_path(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
        None => TemplateRegistry::defaults(),
    };
    let policy = match &config.policy {
        Some(path) => ValidationPolicy::from_path(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
        None => ValidationPolicy::default(),
    };
    let router_config = match &config.router {
        Some(path) => RouterConfig::from_path(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
        None => RouterConfig {
            routes: default_routes(),
            target: default_target(),
            adaptation: AdaptationParams::default(),
            batch_size: 500,
        },
    };
    // Fail fast on dangling template references instead of skipping every
    // draw at generation time.
    for route in &router_config.routes {
        if let Some(template_id) = &route.template_id {
            if !templates.contains(template_id) {
                return Err(CliError::Data(format!(
                    "route `{}` references unknown template `{template_id}`",
                    route.route_id
                )));
            }
        }
    }
    Ok(Stores {
        graph,
        catalog,
        lexicon,
        templates,
        policy,
        router_config,
    })
}

/// Load stores and print their shape.
pub fn ingest(config: &PipelineConfig) -> Result<(), CliError> {
    let stores = load_stores(config)?;
    println!(
        "nodes={} edges={} assets={} templates={} routes={}",
        stores.graph.node_count(),
        stores.graph.edge_count(),
        stores.catalog.len(),
        stores.templates.len(),
        stores.router_config.routes.len(),
    );
    Ok(())
}

/// Filter an existing record file into accepted records and a rejection
/// report.
pub fn validate(input: &Path, policy_path: Option<&Path>, out_dir: &Path) -> Result<(), CliError> {
    let policy = match policy_path {
        Some(path) => ValidationPolicy::from_path(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
        None => ValidationPolicy::default(),
    };
    let records =
        read_records(input).map_err(|e| CliError::Data(e.to_string()))?;
    let total = records.len();
    let (accepted, rejected) = run_filter(records, &policy);

    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out_dir.display())))?;
    let accepted_path = out_dir.join("accepted.jsonl");
    queryforge::record::write_records(&accepted_path, &accepted)
        .map_err(|e| CliError::Data(e.to_string()))?;

    let rejections_path = out_dir.join("rejections.jsonl");
    let mut lines = String::new();
    for (record, verdict) in &rejected {
        let row = serde_json::json!({
            "input": record.input,
            "reasons": verdict.reasons,
        });
        lines.push_str(&row.to_string());
        lines.push('\n');
    }
    std::fs::write(&rejections_path, lines)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", rejections_path.display())))?;

    let rate = if total == 0 {
        1.0
    } else {
        accepted.len() as f64 / total as f64
    };
    println!(
        "validated {total} records: accepted {} rejected {} (acceptance rate {:.4})",
        accepted.len(),
        rejected.len(),
        rate
    );
    println!("accepted -> {}", accepted_path.display());
    println!("rejections -> {}", rejections_path.display());
    Ok(())
}

/// Compute the diversity report and CSV series for a corpus.
pub fn report(corpus: &Path, reference_path: Option<&Path>, out_dir: &Path) -> Result<(), CliError> {
    let records = read_records(corpus).map_err(|e| CliError::Data(e.to_string()))?;
    let reference = match reference_path {
        Some(path) => ReferenceBundle::from_path(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
        None => default_reference(),
    };
    let corpus_id = corpus
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "corpus".to_string());
    let report =
        build_report(&records, &reference, &corpus_id).map_err(|e| CliError::Data(e.to_string()))?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out_dir.display())))?;
    report
        .write_files(out_dir, &records)
        .map_err(|e| CliError::Data(e.to_string()))?;
    println!(
        "report over {} records: content divergence vs {} = {:.6}",
        report.n_records, report.reference_id, report.divergence_vs_reference
    );
    println!("report -> {}", out_dir.join("report.json").display());
    Ok(())
}

/// The built-in reference mix used when no reference file is configured.
pub fn default_reference() -> ReferenceBundle {
    let target = default_target();
    ReferenceBundle {
        reference_id: "golden-content-mix".to_string(),
        content_types: target
            .content_mix()
            .iter()
            .map(|(ct, p)| (ct.as_str().to_string(), (p * 4_600_000.0).round() as u64))
            .collect(),
        word_stats: Some(queryforge::metrics::ReferenceWordStats {
            mean: 7.0,
            median: 4.0,
        }),
    }
}

/// Score a prediction file against a golden file.
pub fn eval(
    preds: &Path,
    golden: &Path,
    provider_name: &str,
    out_dir: &Path,
) -> Result<(), CliError> {
    let provider: Box<dyn SimilarityProvider> = match provider_name {
        "lexical-cosine" => Box::new(LexicalCosine),
        other => {
            return Err(CliError::Usage(format!(
                "unknown similarity provider `{other}` (available: lexical-cosine)"
            )))
        }
    };
    let report = evaluator::evaluate(preds, golden, provider.as_ref())
        .map_err(|e| CliError::Data(e.to_string()))?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out_dir.display())))?;
    let report_path = out_dir.join("eval_report.json");
    report
        .write_json(&report_path)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let r = &report.result;
    println!(
        "n={} parse_failures={} function_f1={:.4} (micro {:.4}) cta={:.4} ss={:.4} [{}]",
        r.n, r.parse_failures, r.function_f1, r.function_f1_micro, r.cta, r.ss_mean,
        r.similarity_provider
    );
    println!("eval report -> {}", report_path.display());
    Ok(())
}
