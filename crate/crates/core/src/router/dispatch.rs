//! Route dispatch: turn one route selection into candidate records by
//! driving the heuristic generators or the prompt/backend path.

use rand::Rng;

use crate::heuristics::{
    gen_generate_from_asset, gen_search_from_asset, gen_search_from_kg, VerbLexicon,
};
use crate::knowledge::{
    sample_asset, AssetCatalog, AssetFilter, AssetKind, KnowledgeGraph, NodeKind,
};
use crate::prompts::{
    complete_text, complete_vision, render, Backend, ImageRef, Modality, PromptTemplate,
    SlotBinding, TemplateRegistry,
};
use crate::record::{ContentType, GeneratorKind, QueryRecord};
use crate::rng::SeededRng;
use crate::router::Route;

/// Everything a route needs to produce records. Immutable and shared
/// across worker lanes.
pub struct GeneratorContext<'a> {
    pub graph: &'a KnowledgeGraph,
    pub catalog: &'a AssetCatalog,
    pub lexicon: &'a VerbLexicon,
    pub templates: &'a TemplateRegistry,
    pub text_backend: &'a dyn Backend,
    pub vision_backend: &'a dyn Backend,
}

/// Fraction of heuristic Search draws for Photo/Template targets that use
/// an asset title instead of a graph pair.
const ASSET_SEARCH_SHARE: f64 = 0.25;

/// Produce the candidate records for one route draw. Most routes yield
/// one record; the vision route yields one per returned prompt. Errors
/// come back as skip reasons, never panics.
pub fn generate_for_route(
    route: &Route,
    ctx: &GeneratorContext<'_>,
    seed: u64,
) -> Result<Vec<QueryRecord>, String> {
    let mut rng = SeededRng::new(seed);
    match route.generator {
        GeneratorKind::Heuristic => heuristic_route(route, ctx, &mut rng).map(|r| vec![r]),
        GeneratorKind::TextLlm => text_route(route, ctx, &mut rng, seed).map(|r| vec![r]),
        GeneratorKind::VisionLlm => vision_route(route, ctx, &mut rng, seed),
    }
}

fn asset_kind_for(ct: ContentType) -> Option<AssetKind> {
    match ct {
        ContentType::Photo => Some(AssetKind::Image),
        ContentType::Template => Some(AssetKind::Template),
        _ => None,
    }
}

fn heuristic_route(
    route: &Route,
    ctx: &GeneratorContext<'_>,
    rng: &mut SeededRng,
) -> Result<QueryRecord, String> {
    let ct = route.target_content_type;
    let mut record = match route.target_function {
        crate::record::FunctionKind::Search => {
            let kind = asset_kind_for(ct);
            let use_asset = kind.is_some() && rng.random::<f64>() < ASSET_SEARCH_SHARE;
            if use_asset {
                let filter = AssetFilter {
                    kind,
                    require_gentech: false,
                };
                let asset = sample_asset(ctx.catalog, rng, filter).map_err(|e| e.to_string())?;
                gen_search_from_asset(asset, ctx.lexicon, rng).map_err(|e| e.to_string())?
            } else {
                gen_search_from_kg(ctx.graph, ctx.lexicon, rng, Some(ct))
                    .map_err(|e| e.to_string())?
            }
        }
        crate::record::FunctionKind::Generate => {
            let filter = match ct {
                ContentType::Photo => AssetFilter {
                    kind: Some(AssetKind::Image),
                    require_gentech: true,
                },
                ContentType::Template => AssetFilter {
                    kind: Some(AssetKind::Template),
                    require_gentech: false,
                },
                other => {
                    return Err(format!(
                        "heuristic generate route cannot produce content type {other}"
                    ))
                }
            };
            let asset = sample_asset(ctx.catalog, rng, filter).map_err(|e| e.to_string())?;
            gen_generate_from_asset(asset, ctx.lexicon, rng).map_err(|e| e.to_string())?
        }
    };
    record.provenance.route_id = route.route_id.clone();
    Ok(record)
}

/// Fill template slots from the knowledge stores. Titles respect the
/// route's content target where asset kinds map onto one.
fn build_binding(
    template: &PromptTemplate,
    ctx: &GeneratorContext<'_>,
    rng: &mut SeededRng,
    ct: ContentType,
) -> Result<SlotBinding, String> {
    let mut binding = SlotBinding::new();
    for slot in &template.slots {
        let value = match slot.as_str() {
            "title" => {
                let filter = AssetFilter {
                    kind: asset_kind_for(ct),
                    require_gentech: false,
                };
                sample_asset(ctx.catalog, rng, filter)
                    .map_err(|e| e.to_string())?
                    .title
                    .clone()
            }
            "intents" => sample_node_label(ctx.graph, rng, NodeKind::Intent)?,
            "actions" => sample_node_label(ctx.graph, rng, NodeKind::Action)?,
            "assets" => {
                let asset = sample_asset(ctx.catalog, rng, AssetFilter::default())
                    .map_err(|e| e.to_string())?;
                if asset.tags.is_empty() {
                    asset.title.clone()
                } else {
                    let take = asset.tags.len().min(3);
                    let start = rng.random_range(0..=asset.tags.len() - take);
                    asset.tags[start..start + take].join(", ")
                }
            }
            other => return Err(format!("no binding rule for slot `{other}`")),
        };
        binding
            .insert(slot, &value)
            .map_err(|e| e.to_string())?;
    }
    Ok(binding)
}

fn sample_node_label(
    graph: &KnowledgeGraph,
    rng: &mut SeededRng,
    kind: NodeKind,
) -> Result<String, String> {
    let nodes = graph.nodes_of_kind(kind);
    if nodes.is_empty() {
        return Err(format!("graph has no {} nodes", kind.as_str()));
    }
    Ok(nodes[rng.random_range(0..nodes.len())].label.clone())
}

fn text_route(
    route: &Route,
    ctx: &GeneratorContext<'_>,
    rng: &mut SeededRng,
    seed: u64,
) -> Result<QueryRecord, String> {
    let template_id = route
        .template_id
        .as_deref()
        .ok_or_else(|| format!("route `{}` has no template", route.route_id))?;
    let template = ctx.templates.get(template_id).map_err(|e| e.to_string())?;
    if template.modality != Modality::Text {
        return Err(format!("template `{template_id}` is not a text template"));
    }
    if template.target_function != route.target_function {
        return Err(format!(
            "template `{template_id}` targets {} but route `{}` targets {}",
            template.target_function, route.route_id, route.target_function
        ));
    }
    let binding = build_binding(template, ctx, rng, route.target_content_type)?;
    let prompt = render(template, &binding).map_err(|e| e.to_string())?;
    let completion =
        complete_text(ctx.text_backend, &prompt, seed).map_err(|e| e.to_string())?;
    let text = completion
        .texts
        .first()
        .ok_or_else(|| "backend returned no texts".to_string())?;
    let mut record =
        crate::prompts::postprocess(text, template, seed).map_err(|e| e.to_string())?;
    record.content_type = route.target_content_type;
    record.provenance.route_id = route.route_id.clone();
    Ok(record)
}

fn vision_route(
    route: &Route,
    ctx: &GeneratorContext<'_>,
    rng: &mut SeededRng,
    seed: u64,
) -> Result<Vec<QueryRecord>, String> {
    let template_id = route
        .template_id
        .as_deref()
        .ok_or_else(|| format!("route `{}` has no template", route.route_id))?;
    let template = ctx.templates.get(template_id).map_err(|e| e.to_string())?;
    if template.modality != Modality::Vision {
        return Err(format!("template `{template_id}` is not a vision template"));
    }
    let filter = match route.target_content_type {
        ContentType::Template => AssetFilter {
            kind: Some(AssetKind::Template),
            require_gentech: false,
        },
        // Image-backed Generate data stays behind the gentech gate.
        ContentType::Photo => AssetFilter {
            kind: Some(AssetKind::Image),
            require_gentech: true,
        },
        other => {
            return Err(format!(
                "vision route cannot produce content type {other}"
            ))
        }
    };
    let asset = sample_asset(ctx.catalog, rng, filter).map_err(|e| e.to_string())?;
    let prompt = render(template, &SlotBinding::new()).map_err(|e| e.to_string())?;
    let completion = complete_vision(ctx.vision_backend, ImageRef::Asset(asset), &prompt, seed)
        .map_err(|e| e.to_string())?;

    let mut records = Vec::new();
    for text in &completion.texts {
        match crate::prompts::postprocess(text, template, seed) {
            Ok(mut record) => {
                record.content_type = route.target_content_type;
                record.function = route.target_function;
                record.provenance.route_id = route.route_id.clone();
                records.push(record);
            }
            Err(e) => log::debug!(
                "dropping unusable vision text on route `{}`: {e}",
                route.route_id
            ),
        }
    }
    if records.is_empty() {
        return Err("all vision completions were unusable".to_string());
    }
    Ok(records)
}
