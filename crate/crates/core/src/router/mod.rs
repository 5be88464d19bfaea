//! Weighted route selection with adaptive distribution control.
//!
//! A route fixes one generation strategy: a generator kind, a target
//! function, a content type, a length bucket, and (for model routes) a
//! prompt template. The router draws routes categorically from a weight
//! vector, tallies what actually comes out, and periodically multiplies
//! each route's weight by how far its target marginals are above or below
//! the observed ones. When observed output matches the target mix the
//! weights are a fixpoint.

pub mod dispatch;

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::{ContentType, FunctionKind, GeneratorKind, QueryRecord};
use crate::rng::SeededRng;

pub use dispatch::{generate_for_route, GeneratorContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
pub enum LengthBucket {
    Short,
    Long,
}

impl LengthBucket {
    pub fn max_words(self) -> usize {
        match self {
            LengthBucket::Short => FunctionKind::Search.default_max_words(),
            LengthBucket::Long => FunctionKind::Generate.default_max_words(),
        }
    }
}

impl FromStr for LengthBucket {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "short" => Ok(LengthBucket::Short),
            "long" => Ok(LengthBucket::Long),
            other => Err(format!("unknown length bucket `{other}`")),
        }
    }
}

impl FromStr for GeneratorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "heuristic" => Ok(GeneratorKind::Heuristic),
            "textllm" | "text_llm" | "text" => Ok(GeneratorKind::TextLlm),
            "visionllm" | "vision_llm" | "vision" => Ok(GeneratorKind::VisionLlm),
            other => Err(format!("unknown generator kind `{other}`")),
        }
    }
}

/// One configured generation strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub route_id: String,
    pub generator: GeneratorKind,
    pub target_function: FunctionKind,
    pub target_content_type: ContentType,
    pub length_bucket: LengthBucket,
    pub template_id: Option<String>,
}

/// Target marginal distributions over functions, content types, and
/// generator kinds. Each vector sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDistribution {
    function_mix: BTreeMap<FunctionKind, f64>,
    content_mix: BTreeMap<ContentType, f64>,
    generator_mix: BTreeMap<GeneratorKind, f64>,
}

#[derive(Debug, Error)]
pub enum RouterError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid router config: {0}")]
    InvalidConfig(String),
    #[error("route list is empty")]
    EmptyRoutes,
    #[error("target category `{0}` is not reachable by any route")]
    UnreachableCategory(String),
    #[error("no route produced a record after {attempts} consecutive attempts")]
    NothingProducible { attempts: usize },
}

fn validate_mix<K: Copy + Ord + std::fmt::Debug>(
    name: &str,
    mix: &BTreeMap<K, f64>,
) -> Result<(), RouterError> {
    if mix.is_empty() {
        return Err(RouterError::InvalidConfig(format!("{name} is empty")));
    }
    if mix.values().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(RouterError::InvalidConfig(format!(
            "{name} has negative or non-finite entries"
        )));
    }
    let sum: f64 = mix.values().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(RouterError::InvalidConfig(format!(
            "{name} sums to {sum}, expected 1"
        )));
    }
    Ok(())
}

fn normalize_mix<K: Copy + Ord>(mix: &mut BTreeMap<K, f64>) {
    let sum: f64 = mix.values().sum();
    if sum > 0.0 {
        for v in mix.values_mut() {
            *v /= sum;
        }
    }
}

impl TargetDistribution {
    pub fn new(
        function_mix: BTreeMap<FunctionKind, f64>,
        content_mix: BTreeMap<ContentType, f64>,
        generator_mix: BTreeMap<GeneratorKind, f64>,
    ) -> Result<Self, RouterError> {
        validate_mix("function_mix", &function_mix)?;
        validate_mix("content_mix", &content_mix)?;
        validate_mix("generator_mix", &generator_mix)?;
        let mut dist = Self {
            function_mix,
            content_mix,
            generator_mix,
        };
        normalize_mix(&mut dist.function_mix);
        normalize_mix(&mut dist.content_mix);
        normalize_mix(&mut dist.generator_mix);
        Ok(dist)
    }

    pub fn function_prob(&self, f: FunctionKind) -> f64 {
        self.function_mix.get(&f).copied().unwrap_or(0.0)
    }

    pub fn content_prob(&self, c: ContentType) -> f64 {
        self.content_mix.get(&c).copied().unwrap_or(0.0)
    }

    pub fn generator_prob(&self, g: GeneratorKind) -> f64 {
        self.generator_mix.get(&g).copied().unwrap_or(0.0)
    }

    pub fn function_mix(&self) -> &BTreeMap<FunctionKind, f64> {
        &self.function_mix
    }

    pub fn content_mix(&self) -> &BTreeMap<ContentType, f64> {
        &self.content_mix
    }

    pub fn generator_mix(&self) -> &BTreeMap<GeneratorKind, f64> {
        &self.generator_mix
    }
}

/// Weight-correction knobs.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default)]
pub struct AdaptationParams {
    pub gain: f64,
    pub weight_floor: f64,
    pub weight_cap: f64,
}

impl Default for AdaptationParams {
    fn default() -> Self {
        Self {
            gain: 1.0,
            weight_floor: 0.01,
            weight_cap: 0.95,
        }
    }
}

/// Joint outcome tallies per (function, content type, generator).
#[derive(Debug, Clone, Default)]
pub struct EmpiricalCounts {
    joint: BTreeMap<(FunctionKind, ContentType, GeneratorKind), u64>,
    total: u64,
}

impl EmpiricalCounts {
    pub fn increment(&mut self, f: FunctionKind, c: ContentType, g: GeneratorKind) {
        *self.joint.entry((f, c, g)).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, f: FunctionKind, c: ContentType, g: GeneratorKind) -> u64 {
        self.joint.get(&(f, c, g)).copied().unwrap_or(0)
    }

    pub fn function_fraction(&self, f: FunctionKind) -> f64 {
        self.marginal(|(kf, _, _)| *kf == f)
    }

    pub fn content_fraction(&self, c: ContentType) -> f64 {
        self.marginal(|(_, kc, _)| *kc == c)
    }

    pub fn generator_fraction(&self, g: GeneratorKind) -> f64 {
        self.marginal(|(_, _, kg)| *kg == g)
    }

    fn marginal<P>(&self, pred: P) -> f64
    where
        P: Fn(&(FunctionKind, ContentType, GeneratorKind)) -> bool,
    {
        if self.total == 0 {
            return 0.0;
        }
        let hits: u64 = self
            .joint
            .iter()
            .filter(|(k, _)| pred(k))
            .map(|(_, v)| v)
            .sum();
        hits as f64 / self.total as f64
    }

    pub fn reset(&mut self) {
        self.joint.clear();
        self.total = 0;
    }
}

/// Router state: routes, their weights, the target, and outcome tallies.
#[derive(Debug, Clone)]
pub struct RouterState {
    routes: Vec<Route>,
    weights: Vec<f64>,
    target: TargetDistribution,
    empirical: EmpiricalCounts,
    batch_size: usize,
    adaptation: AdaptationParams,
}

/// Clamp a weight vector into `[floor, cap]` while keeping it summing to
/// one. Bounds relax to 1/n when the route count makes them infeasible.
fn project_box_simplex(w: &mut [f64], floor: f64, cap: f64) {
    let n = w.len();
    if n == 0 {
        return;
    }
    let lo = floor.clamp(0.0, 1.0 / n as f64);
    let hi = cap.max(1.0 / n as f64);
    for x in w.iter_mut() {
        *x = if x.is_finite() { x.clamp(lo, hi) } else { hi };
    }
    let sum: f64 = w.iter().sum();
    if sum > 1.0 {
        let slack: f64 = w.iter().map(|x| x - lo).sum();
        if slack > 0.0 {
            let k = (sum - 1.0) / slack;
            for x in w.iter_mut() {
                *x -= k * (*x - lo);
            }
        }
    } else if sum < 1.0 {
        let headroom: f64 = w.iter().map(|x| hi - x).sum();
        if headroom > 0.0 {
            let k = (1.0 - sum) / headroom;
            for x in w.iter_mut() {
                *x += k * (hi - *x);
            }
        }
    }
}

fn normalize(w: &mut [f64]) {
    let sum: f64 = w.iter().filter(|x| x.is_finite()).sum();
    if sum > 0.0 && sum.is_finite() {
        for x in w.iter_mut() {
            if x.is_finite() {
                *x /= sum;
            } else {
                *x = 1.0;
            }
        }
    } else {
        let uniform = 1.0 / w.len() as f64;
        for x in w.iter_mut() {
            *x = uniform;
        }
    }
}

/// Build a router over the given routes with default adaptation
/// parameters. Initial weights are the product of each route's target
/// marginals, normalized.
pub fn init_router(
    routes: Vec<Route>,
    target: TargetDistribution,
) -> Result<RouterState, RouterError> {
    init_router_with(routes, target, AdaptationParams::default(), 500)
}

pub fn init_router_with(
    routes: Vec<Route>,
    target: TargetDistribution,
    adaptation: AdaptationParams,
    batch_size: usize,
) -> Result<RouterState, RouterError> {
    if routes.is_empty() {
        return Err(RouterError::EmptyRoutes);
    }
    let mut seen = std::collections::BTreeSet::new();
    for route in &routes {
        if !seen.insert(route.route_id.clone()) {
            return Err(RouterError::InvalidConfig(format!(
                "duplicate route id `{}`",
                route.route_id
            )));
        }
        if matches!(route.generator, GeneratorKind::TextLlm | GeneratorKind::VisionLlm)
            && route.template_id.is_none()
        {
            return Err(RouterError::InvalidConfig(format!(
                "route `{}` uses {} but names no template",
                route.route_id, route.generator
            )));
        }
    }
    if batch_size == 0 {
        return Err(RouterError::InvalidConfig("batch_size must be positive".into()));
    }

    const EPS: f64 = 1e-12;
    for (f, p) in &target.function_mix {
        if *p > EPS && !routes.iter().any(|r| r.target_function == *f) {
            return Err(RouterError::UnreachableCategory(f.to_string()));
        }
    }
    for (c, p) in &target.content_mix {
        if *p > EPS && !routes.iter().any(|r| r.target_content_type == *c) {
            return Err(RouterError::UnreachableCategory(c.to_string()));
        }
    }
    for (g, p) in &target.generator_mix {
        if *p > EPS && !routes.iter().any(|r| r.generator == *g) {
            return Err(RouterError::UnreachableCategory(g.to_string()));
        }
    }

    let mut weights: Vec<f64> = routes
        .iter()
        .map(|r| {
            target.function_prob(r.target_function)
                * target.content_prob(r.target_content_type)
                * target.generator_prob(r.generator)
        })
        .collect();
    normalize(&mut weights);
    project_box_simplex(&mut weights, adaptation.weight_floor, adaptation.weight_cap);

    Ok(RouterState {
        routes,
        weights,
        target,
        empirical: EmpiricalCounts::default(),
        batch_size,
        adaptation,
    })
}

impl RouterState {
    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn target(&self) -> &TargetDistribution {
        &self.target
    }

    pub fn empirical(&self) -> &EmpiricalCounts {
        &self.empirical
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }
}

/// Draw a route index categorically from the weights.
pub fn next_route_index<R: Rng>(state: &RouterState, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (idx, w) in state.weights.iter().enumerate() {
        cum += w;
        if u < cum {
            return idx;
        }
    }
    state.weights.len() - 1
}

/// Draw the next route.
pub fn next_route<'s, R: Rng>(state: &'s RouterState, rng: &mut R) -> &'s Route {
    &state.routes[next_route_index(state, rng)]
}

/// Tally one produced record into the empirical counters.
pub fn record_outcome(state: &mut RouterState, record: &QueryRecord) {
    state.empirical.increment(
        record.function,
        record.content_type,
        record.provenance.generator,
    );
}

/// Multiplicative weight correction toward the target marginals, followed
/// by clamping into the configured weight box. Counters reset afterwards.
/// When the observed mix equals the target the weights are unchanged.
pub fn adapt_weights(state: &mut RouterState) {
    let total = state.empirical.total();
    if total == 0 {
        return;
    }
    let eps = 1.0 / total as f64;
    let gain = state.adaptation.gain;
    for (idx, route) in state.routes.iter().enumerate() {
        let ratio_f = state.target.function_prob(route.target_function)
            / state
                .empirical
                .function_fraction(route.target_function)
                .max(eps);
        let ratio_c = state.target.content_prob(route.target_content_type)
            / state
                .empirical
                .content_fraction(route.target_content_type)
                .max(eps);
        let ratio_g = state.target.generator_prob(route.generator)
            / state
                .empirical
                .generator_fraction(route.generator)
                .max(eps);
        state.weights[idx] *= (ratio_f * ratio_c * ratio_g).powf(gain);
    }
    normalize(&mut state.weights);
    project_box_simplex(
        &mut state.weights,
        state.adaptation.weight_floor,
        state.adaptation.weight_cap,
    );
    state.empirical.reset();
}

/// Run the adaptation step if a full batch of outcomes has accumulated.
pub fn maybe_adapt(state: &mut RouterState) -> bool {
    if state.empirical.total() as usize >= state.batch_size {
        adapt_weights(state);
        true
    } else {
        false
    }
}

/// One skipped generation attempt.
#[derive(Debug, Clone, Serialize)]
pub struct SkipEvent {
    pub route_id: String,
    pub reason: String,
    pub timestamp: u64,
}

impl SkipEvent {
    pub fn new(route_id: &str, reason: String) -> Self {
        Self {
            route_id: route_id.to_string(),
            reason,
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

/// Produce exactly `n` candidate records (pre-validation). Generator
/// errors are skipped and resampled; the call fails only if no route can
/// produce anything at all.
pub fn generate_batch(
    state: &mut RouterState,
    n: usize,
    ctx: &GeneratorContext<'_>,
    rng: &mut SeededRng,
) -> Result<(Vec<QueryRecord>, Vec<SkipEvent>), RouterError> {
    let mut produced = Vec::with_capacity(n);
    let mut skips = Vec::new();
    let mut consecutive_failures = 0usize;
    let failure_limit = 200 * state.routes.len().max(4);

    while produced.len() < n {
        let idx = next_route_index(state, rng);
        let seed = rng.next_u64();
        let route = state.routes[idx].clone();
        match dispatch::generate_for_route(&route, ctx, seed) {
            Ok(records) => {
                consecutive_failures = 0;
                for record in records {
                    if produced.len() >= n {
                        break;
                    }
                    record_outcome(state, &record);
                    produced.push(record);
                    maybe_adapt(state);
                }
            }
            Err(reason) => {
                log::debug!("skip on route `{}`: {reason}", route.route_id);
                skips.push(SkipEvent::new(&route.route_id, reason));
                consecutive_failures += 1;
                if consecutive_failures > failure_limit {
                    return Err(RouterError::NothingProducible {
                        attempts: consecutive_failures,
                    });
                }
            }
        }
    }
    Ok((produced, skips))
}

#[derive(Debug, Deserialize)]
struct RawRoute {
    route_id: String,
    generator: String,
    function: String,
    content_type: String,
    #[serde(default)]
    length: Option<String>,
    #[serde(default)]
    template_id: Option<String>,
}

#[derive(Debug, Deserialize)]
struct RawRouterConfig {
    #[serde(default = "default_batch_size")]
    batch_size: usize,
    #[serde(default)]
    adaptation: AdaptationParams,
    target: RawTarget,
    routes: Vec<RawRoute>,
}

#[derive(Debug, Deserialize)]
struct RawTarget {
    function_mix: BTreeMap<String, f64>,
    content_mix: BTreeMap<String, f64>,
    generator_mix: BTreeMap<String, f64>,
}

fn default_batch_size() -> usize {
    500
}

/// Parsed router configuration: routes, target, and adaptation knobs.
#[derive(Debug, Clone)]
pub struct RouterConfig {
    pub routes: Vec<Route>,
    pub target: TargetDistribution,
    pub adaptation: AdaptationParams,
    pub batch_size: usize,
}

impl RouterConfig {
    pub fn from_path(path: &Path) -> Result<Self, RouterError> {
        let raw = std::fs::read_to_string(path).map_err(|source| RouterError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&raw)
    }

    pub fn from_toml(raw: &str) -> Result<Self, RouterError> {
        let parsed: RawRouterConfig =
            toml::from_str(raw).map_err(|e| RouterError::InvalidConfig(e.to_string()))?;

        let parse_key = |s: &str| -> Result<FunctionKind, RouterError> {
            s.parse().map_err(|e: crate::record::LabelParseError| {
                RouterError::InvalidConfig(e.to_string())
            })
        };
        let mut function_mix = BTreeMap::new();
        for (k, v) in &parsed.target.function_mix {
            function_mix.insert(parse_key(k)?, *v);
        }
        let mut content_mix = BTreeMap::new();
        for (k, v) in &parsed.target.content_mix {
            let ct: ContentType = k.parse().map_err(|e: crate::record::LabelParseError| {
                RouterError::InvalidConfig(e.to_string())
            })?;
            content_mix.insert(ct, *v);
        }
        let mut generator_mix = BTreeMap::new();
        for (k, v) in &parsed.target.generator_mix {
            let g: GeneratorKind = k
                .parse()
                .map_err(RouterError::InvalidConfig)?;
            generator_mix.insert(g, *v);
        }
        let target = TargetDistribution::new(function_mix, content_mix, generator_mix)?;

        let mut routes = Vec::with_capacity(parsed.routes.len());
        for raw_route in parsed.routes {
            let generator: GeneratorKind = raw_route
                .generator
                .parse()
                .map_err(RouterError::InvalidConfig)?;
            let function: FunctionKind = raw_route.function.parse().map_err(
                |e: crate::record::LabelParseError| RouterError::InvalidConfig(e.to_string()),
            )?;
            let content_type: ContentType = raw_route.content_type.parse().map_err(
                |e: crate::record::LabelParseError| RouterError::InvalidConfig(e.to_string()),
            )?;
            let length_bucket = match raw_route.length {
                Some(s) => s.parse().map_err(RouterError::InvalidConfig)?,
                None => match function {
                    FunctionKind::Search => LengthBucket::Short,
                    FunctionKind::Generate => LengthBucket::Long,
                },
            };
            routes.push(Route {
                route_id: raw_route.route_id,
                generator,
                target_function: function,
                target_content_type: content_type,
                length_bucket,
                template_id: raw_route.template_id,
            });
        }

        Ok(Self {
            routes,
            target,
            adaptation: parsed.adaptation,
            batch_size: parsed.batch_size,
        })
    }

    pub fn into_state(self) -> Result<RouterState, RouterError> {
        init_router_with(self.routes, self.target, self.adaptation, self.batch_size)
    }
}

/// The shipped route set: model routes across every content type for both
/// functions, heuristic search across every content type, heuristic
/// generate and vision routes where asset kinds exist.
pub fn default_routes() -> Vec<Route> {
    let mut routes = Vec::new();
    for (i, ct) in ContentType::ALL.iter().enumerate() {
        let search_template = if *ct == ContentType::Background {
            "search-title-actions"
        } else {
            "search-title-intents"
        };
        routes.push(Route {
            route_id: format!("text-search-{}", ct.as_str().to_lowercase()),
            generator: GeneratorKind::TextLlm,
            target_function: FunctionKind::Search,
            target_content_type: *ct,
            length_bucket: LengthBucket::Short,
            template_id: Some(search_template.to_string()),
        });
        let generate_template = if i % 2 == 0 {
            "generate-title-actions-assets"
        } else {
            "generate-title-intents"
        };
        routes.push(Route {
            route_id: format!("text-generate-{}", ct.as_str().to_lowercase()),
            generator: GeneratorKind::TextLlm,
            target_function: FunctionKind::Generate,
            target_content_type: *ct,
            length_bucket: LengthBucket::Long,
            template_id: Some(generate_template.to_string()),
        });
        routes.push(Route {
            route_id: format!("heuristic-search-{}", ct.as_str().to_lowercase()),
            generator: GeneratorKind::Heuristic,
            target_function: FunctionKind::Search,
            target_content_type: *ct,
            length_bucket: LengthBucket::Short,
            template_id: None,
        });
    }
    for ct in [ContentType::Photo, ContentType::Template] {
        routes.push(Route {
            route_id: format!("heuristic-generate-{}", ct.as_str().to_lowercase()),
            generator: GeneratorKind::Heuristic,
            target_function: FunctionKind::Generate,
            target_content_type: ct,
            length_bucket: LengthBucket::Long,
            template_id: None,
        });
        routes.push(Route {
            route_id: format!("vision-generate-{}", ct.as_str().to_lowercase()),
            generator: GeneratorKind::VisionLlm,
            target_function: FunctionKind::Generate,
            target_content_type: ct,
            length_bucket: LengthBucket::Long,
            template_id: Some("vision-template-prompts".to_string()),
        });
    }
    routes
}

/// The shipped target: function split from the router-generated corpus
/// totals (105,100 Search to 110,000 Generate), content mix from the
/// golden-dataset distribution, generator mix reconstructed to keep every
/// strategy active.
pub fn default_target() -> TargetDistribution {
    let function_mix: BTreeMap<FunctionKind, f64> = [
        (FunctionKind::Search, 105_100.0 / 215_100.0),
        (FunctionKind::Generate, 110_000.0 / 215_100.0),
    ]
    .into_iter()
    .collect();
    let content_mix: BTreeMap<ContentType, f64> = [
        (ContentType::Template, 103.0 / 460.0),
        (ContentType::Photo, 97.0 / 460.0),
        (ContentType::Audio, 20.0 / 460.0),
        (ContentType::Video, 19.0 / 460.0),
        (ContentType::Background, 20.0 / 460.0),
        (ContentType::DesignAsset, 17.0 / 460.0),
        (ContentType::Text, 20.0 / 460.0),
        (ContentType::Any, 164.0 / 460.0),
    ]
    .into_iter()
    .collect();
    let generator_mix: BTreeMap<GeneratorKind, f64> = [
        (GeneratorKind::Heuristic, 0.25),
        (GeneratorKind::TextLlm, 0.60),
        (GeneratorKind::VisionLlm, 0.15),
    ]
    .into_iter()
    .collect();
    TargetDistribution::new(function_mix, content_mix, generator_mix)
        .expect("default target is valid")
}
