//! Domain knowledge stores: the concept graph and the asset-metadata
//! catalog.
//!
//! Both are loaded from line-delimited JSON and are immutable afterwards,
//! so they can be shared freely across worker threads. Graph records carry
//! a `record_type` discriminator:
//!
//! ```text
//! {"record_type":"node","id":"intent:birthday","kind":"Intent","label":"Birthday"}
//! {"record_type":"edge","src":"intent:birthday","dst":"design:card","relation":"uses"}
//! ```
//!
//! Asset records mirror the catalog metadata shape: images carry
//! `keywords`, templates carry `topics`, and images have a `gentech` flag
//! marking AI-generated content. Unknown fields are preserved in `extras`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    Intent,
    DesignType,
    SceneObject,
    Action,
}

impl NodeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeKind::Intent => "Intent",
            NodeKind::DesignType => "DesignType",
            NodeKind::SceneObject => "SceneObject",
            NodeKind::Action => "Action",
        }
    }
}

impl FromStr for NodeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Intent" => Ok(NodeKind::Intent),
            "DesignType" => Ok(NodeKind::DesignType),
            "SceneObject" => Ok(NodeKind::SceneObject),
            "Action" => Ok(NodeKind::Action),
            other => Err(format!("unknown node kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct KgNode {
    pub id: String,
    pub kind: NodeKind,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct KgEdge {
    pub src: String,
    pub dst: String,
    pub relation: String,
}

/// Concept graph: typed nodes connected by relation-tagged edges. Edges
/// keep their stored direction but neighbor queries treat them as
/// undirected.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    nodes: BTreeMap<String, KgNode>,
    edges: BTreeSet<KgEdge>,
    adjacency: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: duplicate node id `{id}`")]
    DuplicateNodeId { line: usize, id: String },
    #[error("edge {src} -> {dst} references unknown node `{missing}`")]
    DanglingEdge {
        src: String,
        dst: String,
        missing: String,
    },
    #[error("line {line}: self-loop on `{id}`")]
    SelfLoop { line: usize, id: String },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("no connected ({0:?}, {1:?}) pair in graph")]
    NoSuchPair(NodeKind, NodeKind),
    #[error("line {line}: duplicate asset id `{id}`")]
    DuplicateAssetId { line: usize, id: String },
    #[error("no asset matches filter {0}")]
    NoMatchingAsset(AssetFilter),
}

impl KnowledgeGraph {
    pub fn node(&self, id: &str) -> Option<&KgNode> {
        self.nodes.get(id)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &KgNode> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &KgEdge> {
        self.edges.iter()
    }

    /// All node ids of a kind, in id order.
    pub fn nodes_of_kind(&self, kind: NodeKind) -> Vec<&KgNode> {
        self.nodes.values().filter(|n| n.kind == kind).collect()
    }

    fn insert_node(&mut self, node: KgNode, line: usize) -> Result<(), KnowledgeError> {
        if self.nodes.contains_key(&node.id) {
            return Err(KnowledgeError::DuplicateNodeId {
                line,
                id: node.id,
            });
        }
        self.adjacency.entry(node.id.clone()).or_default();
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    fn insert_edge(&mut self, edge: KgEdge) {
        self.adjacency
            .entry(edge.src.clone())
            .or_default()
            .insert(edge.dst.clone());
        self.adjacency
            .entry(edge.dst.clone())
            .or_default()
            .insert(edge.src.clone());
        self.edges.insert(edge);
    }
}

fn json_str(obj: &serde_json::Map<String, Value>, field: &str, line: usize) -> Result<String, KnowledgeError> {
    match obj.get(field) {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.clone()),
        Some(Value::String(_)) => Err(KnowledgeError::MalformedRecord {
            line,
            reason: format!("field `{field}` is empty"),
        }),
        Some(_) => Err(KnowledgeError::MalformedRecord {
            line,
            reason: format!("field `{field}` must be a string"),
        }),
        None => Err(KnowledgeError::MalformedRecord {
            line,
            reason: format!("missing field `{field}`"),
        }),
    }
}

/// Load a graph from line-delimited node and edge records. Edges may
/// appear before the nodes they reference; all endpoints are resolved
/// after the whole file is read.
pub fn load_graph(path: &Path) -> Result<KnowledgeGraph, KnowledgeError> {
    let file = File::open(path).map_err(|source| KnowledgeError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_graph_from_reader(BufReader::new(file), path)
}

fn load_graph_from_reader<R: BufRead>(
    reader: R,
    path: &Path,
) -> Result<KnowledgeGraph, KnowledgeError> {
    let mut graph = KnowledgeGraph::default();
    let mut pending_edges: Vec<(usize, KgEdge)> = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| KnowledgeError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| {
            KnowledgeError::MalformedRecord {
                line: line_no,
                reason: e.to_string(),
            }
        })?;
        let obj = value.as_object().ok_or(KnowledgeError::MalformedRecord {
            line: line_no,
            reason: "record must be a JSON object".to_string(),
        })?;
        let record_type = json_str(obj, "record_type", line_no)?;
        match record_type.as_str() {
            "node" => {
                let id = json_str(obj, "id", line_no)?;
                let kind: NodeKind = json_str(obj, "kind", line_no)?
                    .parse()
                    .map_err(|reason| KnowledgeError::MalformedRecord { line: line_no, reason })?;
                let label = json_str(obj, "label", line_no)?;
                graph.insert_node(KgNode { id, kind, label }, line_no)?;
            }
            "edge" => {
                let src = json_str(obj, "src", line_no)?;
                let dst = json_str(obj, "dst", line_no)?;
                if src == dst {
                    return Err(KnowledgeError::SelfLoop { line: line_no, id: src });
                }
                let relation = match obj.get("relation") {
                    Some(Value::String(s)) => s.clone(),
                    None => String::new(),
                    Some(_) => {
                        return Err(KnowledgeError::MalformedRecord {
                            line: line_no,
                            reason: "field `relation` must be a string".to_string(),
                        })
                    }
                };
                pending_edges.push((line_no, KgEdge { src, dst, relation }));
            }
            other => {
                return Err(KnowledgeError::MalformedRecord {
                    line: line_no,
                    reason: format!("unknown record_type `{other}`"),
                })
            }
        }
    }

    for (_, edge) in pending_edges {
        for endpoint in [&edge.src, &edge.dst] {
            if !graph.nodes.contains_key(endpoint) {
                return Err(KnowledgeError::DanglingEdge {
                    missing: endpoint.clone(),
                    src: edge.src.clone(),
                    dst: edge.dst.clone(),
                });
            }
        }
        graph.insert_edge(edge);
    }

    Ok(graph)
}

/// Serialize a graph back to the line-delimited form, nodes first then
/// edges, both in deterministic order. `load_graph(save_graph(g)) == g`.
pub fn save_graph(graph: &KnowledgeGraph, path: &Path) -> Result<(), KnowledgeError> {
    let file = File::create(path).map_err(|source| KnowledgeError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    let io_err = |source| KnowledgeError::Io {
        path: path.display().to_string(),
        source,
    };
    for node in graph.nodes.values() {
        let value = serde_json::json!({
            "record_type": "node",
            "id": node.id,
            "kind": node.kind.as_str(),
            "label": node.label,
        });
        writeln!(w, "{value}").map_err(io_err)?;
    }
    for edge in &graph.edges {
        let value = serde_json::json!({
            "record_type": "edge",
            "src": edge.src,
            "dst": edge.dst,
            "relation": edge.relation,
        });
        writeln!(w, "{value}").map_err(io_err)?;
    }
    Ok(())
}

/// Nodes connected to `node_id` by an edge in either direction, optionally
/// restricted to one kind, sorted by id.
pub fn neighbors<'g>(
    graph: &'g KnowledgeGraph,
    node_id: &str,
    kind_filter: Option<NodeKind>,
) -> Result<Vec<&'g KgNode>, KnowledgeError> {
    if !graph.nodes.contains_key(node_id) {
        return Err(KnowledgeError::UnknownNode(node_id.to_string()));
    }
    let mut out = Vec::new();
    if let Some(adjacent) = graph.adjacency.get(node_id) {
        for id in adjacent {
            let node = &graph.nodes[id];
            if kind_filter.is_none_or(|k| node.kind == k) {
                out.push(node);
            }
        }
    }
    Ok(out)
}

/// Every edge-connected node pair matching `(kinds.0, kinds.1)` in either
/// stored direction, ordered deterministically.
pub fn connected_pairs(
    graph: &KnowledgeGraph,
    kinds: (NodeKind, NodeKind),
) -> Vec<(&KgNode, &KgNode)> {
    let mut pairs: BTreeSet<(&str, &str)> = BTreeSet::new();
    for edge in &graph.edges {
        let (Some(a), Some(b)) = (graph.nodes.get(&edge.src), graph.nodes.get(&edge.dst)) else {
            continue;
        };
        if a.kind == kinds.0 && b.kind == kinds.1 {
            pairs.insert((&a.id, &b.id));
        }
        if b.kind == kinds.0 && a.kind == kinds.1 {
            pairs.insert((&b.id, &a.id));
        }
    }
    pairs
        .into_iter()
        .map(|(a, b)| (&graph.nodes[a], &graph.nodes[b]))
        .collect()
}

/// Uniformly sample one connected, kind-matched node pair.
pub fn sample_related_pair<'g, R: Rng>(
    graph: &'g KnowledgeGraph,
    rng: &mut R,
    kinds: (NodeKind, NodeKind),
) -> Result<(&'g KgNode, &'g KgNode), KnowledgeError> {
    let pairs = connected_pairs(graph, kinds);
    if pairs.is_empty() {
        return Err(KnowledgeError::NoSuchPair(kinds.0, kinds.1));
    }
    let idx = rng.random_range(0..pairs.len());
    Ok(pairs[idx])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AssetKind {
    Image,
    Template,
}

impl AssetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AssetKind::Image => "Image",
            AssetKind::Template => "Template",
        }
    }
}

impl FromStr for AssetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Image" => Ok(AssetKind::Image),
            "Template" => Ok(AssetKind::Template),
            other => Err(format!("unknown asset kind `{other}`")),
        }
    }
}

/// One catalog entry. Image keywords and template topics are unified into
/// `tags`; the on-disk field name depends on the kind.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetMetadata {
    pub asset_id: String,
    pub kind: AssetKind,
    pub title: String,
    pub tags: Vec<String>,
    pub gentech: bool,
    pub extras: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AssetFilter {
    pub kind: Option<AssetKind>,
    pub require_gentech: bool,
}

impl std::fmt::Display for AssetFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{{kind: {}, require_gentech: {}}}",
            self.kind.map_or("any", |k| k.as_str()),
            self.require_gentech
        )
    }
}

/// Immutable asset catalog with indices by kind and gentech flag.
#[derive(Debug, Clone, Default)]
pub struct AssetCatalog {
    assets: Vec<AssetMetadata>,
    by_kind: BTreeMap<AssetKind, Vec<usize>>,
    gentech_images: Vec<usize>,
}

impl AssetCatalog {
    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    pub fn assets(&self) -> &[AssetMetadata] {
        &self.assets
    }

    pub fn get(&self, asset_id: &str) -> Option<&AssetMetadata> {
        self.assets.iter().find(|a| a.asset_id == asset_id)
    }

    pub fn count(&self, filter: AssetFilter) -> usize {
        self.matching_indices(filter).len()
    }

    fn matching_indices(&self, filter: AssetFilter) -> Vec<usize> {
        let base: Vec<usize> = match (filter.kind, filter.require_gentech) {
            (Some(AssetKind::Image), true) => self.gentech_images.clone(),
            (Some(kind), _) => self.by_kind.get(&kind).cloned().unwrap_or_default(),
            (None, _) => (0..self.assets.len()).collect(),
        };
        if filter.require_gentech && filter.kind != Some(AssetKind::Image) {
            // The gentech flag only gates image assets; templates pass.
            base.into_iter()
                .filter(|&i| {
                    let a = &self.assets[i];
                    a.kind != AssetKind::Image || a.gentech
                })
                .collect()
        } else {
            base
        }
    }

    fn push(&mut self, asset: AssetMetadata, line: usize) -> Result<(), KnowledgeError> {
        if self.assets.iter().any(|a| a.asset_id == asset.asset_id) {
            return Err(KnowledgeError::DuplicateAssetId {
                line,
                id: asset.asset_id,
            });
        }
        let idx = self.assets.len();
        self.by_kind.entry(asset.kind).or_default().push(idx);
        if asset.kind == AssetKind::Image && asset.gentech {
            self.gentech_images.push(idx);
        }
        self.assets.push(asset);
        Ok(())
    }
}

/// Load an asset catalog from line-delimited records.
pub fn load_assets(path: &Path) -> Result<AssetCatalog, KnowledgeError> {
    let file = File::open(path).map_err(|source| KnowledgeError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut catalog = AssetCatalog::default();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| KnowledgeError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| {
            KnowledgeError::MalformedRecord {
                line: line_no,
                reason: e.to_string(),
            }
        })?;
        let obj = value.as_object().ok_or(KnowledgeError::MalformedRecord {
            line: line_no,
            reason: "record must be a JSON object".to_string(),
        })?;

        let asset_id = json_str(obj, "asset_id", line_no)?;
        let kind: AssetKind = json_str(obj, "kind", line_no)?
            .parse()
            .map_err(|reason| KnowledgeError::MalformedRecord { line: line_no, reason })?;
        let title = json_str(obj, "title", line_no)?;

        let tag_field = match kind {
            AssetKind::Image => "keywords",
            AssetKind::Template => "topics",
        };
        let tags = match obj.get(tag_field) {
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| {
                    v.as_str().map(str::to_string).ok_or_else(|| {
                        KnowledgeError::MalformedRecord {
                            line: line_no,
                            reason: format!("`{tag_field}` entries must be strings"),
                        }
                    })
                })
                .collect::<Result<Vec<_>, _>>()?,
            Some(_) => {
                return Err(KnowledgeError::MalformedRecord {
                    line: line_no,
                    reason: format!("field `{tag_field}` must be an array"),
                })
            }
            None => {
                return Err(KnowledgeError::MalformedRecord {
                    line: line_no,
                    reason: format!("missing field `{tag_field}` for {} asset", kind.as_str()),
                })
            }
        };

        let gentech = match obj.get("gentech") {
            Some(Value::Bool(b)) => *b,
            None => false,
            Some(_) => {
                return Err(KnowledgeError::MalformedRecord {
                    line: line_no,
                    reason: "field `gentech` must be a boolean".to_string(),
                })
            }
        };

        let known = ["asset_id", "kind", "title", "keywords", "topics", "gentech"];
        let extras: BTreeMap<String, Value> = obj
            .iter()
            .filter(|(k, _)| !known.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();

        catalog.push(
            AssetMetadata {
                asset_id,
                kind,
                title,
                tags,
                gentech,
                extras,
            },
            line_no,
        )?;
    }

    Ok(catalog)
}

/// Uniformly sample one asset satisfying the filter.
pub fn sample_asset<'c, R: Rng>(
    catalog: &'c AssetCatalog,
    rng: &mut R,
    filter: AssetFilter,
) -> Result<&'c AssetMetadata, KnowledgeError> {
    let candidates = catalog.matching_indices(filter);
    if candidates.is_empty() {
        return Err(KnowledgeError::NoMatchingAsset(filter));
    }
    let idx = candidates[rng.random_range(0..candidates.len())];
    Ok(&catalog.assets[idx])
}
