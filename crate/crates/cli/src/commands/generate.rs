//! The generate command: run the weighted router against the loaded
//! stores until the requested number of records clears validation, then
//! write the dataset, skip log, rejection log, and manifest.
//!
//! Outcome tallies and weight adaptation run over accepted records, so
//! the adaptive correction also compensates for routes whose output gets
//! filtered away. With one worker lane and a fixed seed the dataset file
//! is byte-for-byte reproducible; extra lanes trade that for throughput.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};


use queryforge::record::QueryRecord;
use queryforge::router::{
    generate_for_route, maybe_adapt, next_route_index, record_outcome, GeneratorContext, Route,
    RouterState, SkipEvent,
};
use queryforge::rng::SeededRng;
use queryforge::validator::StreamFilter;

use crate::commands::Stores;
use crate::config::PipelineConfig;
use crate::manifest::{DatasetManifest, FunctionCounts};
use crate::CliError;

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

struct Sink {
    dataset: BufWriter<File>,
    skips: BufWriter<File>,
    rejections: BufWriter<File>,
    accepted: u64,
    rejected: u64,
    skipped: u64,
    search: u64,
    generate: u64,
    route_tallies: BTreeMap<String, u64>,
    generator_tallies: BTreeMap<String, u64>,
}

impl Sink {
    fn open(out_dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(out_dir)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out_dir.display())))?;
        let open = |name: &str| -> Result<BufWriter<File>, CliError> {
            let path = out_dir.join(name);
            File::create(&path)
                .map(BufWriter::new)
                .map_err(|e| CliError::Data(format!("cannot create {}: {e}", path.display())))
        };
        Ok(Self {
            dataset: open("dataset.jsonl")?,
            skips: open("skips.jsonl")?,
            rejections: open("rejections.jsonl")?,
            accepted: 0,
            rejected: 0,
            skipped: 0,
            search: 0,
            generate: 0,
            route_tallies: BTreeMap::new(),
            generator_tallies: BTreeMap::new(),
        })
    }

    fn write_accepted(&mut self, record: &QueryRecord) -> Result<(), CliError> {
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(self.dataset, "{line}")
            .map_err(|e| CliError::Data(format!("cannot write dataset: {e}")))?;
        self.accepted += 1;
        match record.function {
            queryforge::record::FunctionKind::Search => self.search += 1,
            queryforge::record::FunctionKind::Generate => self.generate += 1,
        }
        *self
            .route_tallies
            .entry(record.provenance.route_id.clone())
            .or_insert(0) += 1;
        *self
            .generator_tallies
            .entry(record.provenance.generator.to_string())
            .or_insert(0) += 1;
        Ok(())
    }

    fn write_rejection(
        &mut self,
        record: &QueryRecord,
        reasons: &[queryforge::validator::Reason],
    ) -> Result<(), CliError> {
        let row = serde_json::json!({
            "input": record.input,
            "route_id": record.provenance.route_id,
            "reasons": reasons,
        });
        writeln!(self.rejections, "{row}")
            .map_err(|e| CliError::Data(format!("cannot write rejections: {e}")))?;
        self.rejected += 1;
        Ok(())
    }

    fn write_skip(&mut self, skip: &SkipEvent) -> Result<(), CliError> {
        let line = serde_json::to_string(skip).expect("skip serializes");
        writeln!(self.skips, "{line}")
            .map_err(|e| CliError::Data(format!("cannot write skips: {e}")))?;
        self.skipped += 1;
        Ok(())
    }

    fn flush(&mut self) -> Result<(), CliError> {
        for w in [&mut self.dataset, &mut self.skips, &mut self.rejections] {
            w.flush()
                .map_err(|e| CliError::Data(format!("cannot flush output: {e}")))?;
        }
        Ok(())
    }
}

/// Admit candidate records through validation and into the sink,
/// recording outcomes for accepted records only.
fn admit(
    records: Vec<QueryRecord>,
    state: &mut RouterState,
    filter: &mut StreamFilter,
    sink: &mut Sink,
    n_records: usize,
) -> Result<bool, CliError> {
    let mut progressed = false;
    for record in records {
        if sink.accepted as usize >= n_records {
            break;
        }
        let verdict = filter.admit(&record);
        if verdict.accepted {
            sink.write_accepted(&record)?;
            record_outcome(state, &record);
            maybe_adapt(state);
            progressed = true;
        } else {
            sink.write_rejection(&record, &verdict.reasons)?;
        }
    }
    Ok(progressed)
}

pub fn run(config: &PipelineConfig) -> Result<(), CliError> {
    let stores = load_and_check(config)?;
    let started_at = unix_now();

    let text_backend = queryforge::prompts::build_backend(config.text_backend.clone())
        .map_err(|e| CliError::Data(e.to_string()))?;
    let vision_backend = queryforge::prompts::build_backend(config.vision_backend.clone())
        .map_err(|e| CliError::Data(e.to_string()))?;
    let ctx = GeneratorContext {
        graph: &stores.graph,
        catalog: &stores.catalog,
        lexicon: &stores.lexicon,
        templates: &stores.templates,
        text_backend: text_backend.as_ref(),
        vision_backend: vision_backend.as_ref(),
    };

    let mut state = stores
        .router_config
        .clone()
        .into_state()
        .map_err(|e| CliError::Data(e.to_string()))?;
    let mut filter = StreamFilter::new(stores.policy.clone());
    let mut sink = Sink::open(&config.output_dir)?;

    if config.worker_lanes <= 1 {
        run_single_lane(config, &ctx, &mut state, &mut filter, &mut sink)?;
    } else {
        run_multi_lane(config, &ctx, state, &mut filter, &mut sink)?;
    }
    sink.flush()?;

    let manifest = DatasetManifest {
        corpus_id: config.corpus_id(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: format!("{:016x}", config.stable_hash()),
        seed: config.seed,
        worker_lanes: config.worker_lanes,
        counts: FunctionCounts {
            search: sink.search,
            generate: sink.generate,
            total: sink.accepted,
        },
        route_tallies: sink.route_tallies.clone(),
        generator_tallies: sink.generator_tallies.clone(),
        skipped: sink.skipped,
        rejected: sink.rejected,
        started_at_unix: started_at,
        finished_at_unix: unix_now(),
    };
    let manifest_path = config.output_dir.join("manifest.json");
    manifest.write(&manifest_path)?;

    println!(
        "generated {} records ({} search / {} generate), {} rejected, {} skipped",
        sink.accepted, sink.search, sink.generate, sink.rejected, sink.skipped
    );
    println!("dataset -> {}", config.output_dir.join("dataset.jsonl").display());
    println!("manifest -> {}", manifest_path.display());
    Ok(())
}

fn load_and_check(config: &PipelineConfig) -> Result<Stores, CliError> {
    super::load_stores(config)
}

fn run_single_lane(
    config: &PipelineConfig,
    ctx: &GeneratorContext<'_>,
    state: &mut RouterState,
    filter: &mut StreamFilter,
    sink: &mut Sink,
) -> Result<(), CliError> {
    let mut rng = SeededRng::new(config.seed);
    let n = config.n_records;
    let stall_limit = 500 * state.routes().len().max(4);
    let mut stalled = 0usize;

    while (sink.accepted as usize) < n {
        let idx = next_route_index(state, &mut rng);
        let seed = rng.child_seed();
        let route = state.routes()[idx].clone();
        match generate_for_route(&route, ctx, seed) {
            Ok(records) => {
                let progressed = admit(records, state, filter, sink, n)?;
                if progressed {
                    stalled = 0;
                } else {
                    stalled += 1;
                }
            }
            Err(reason) => {
                sink.write_skip(&SkipEvent::new(&route.route_id, reason))?;
                stalled += 1;
            }
        }
        if stalled > stall_limit {
            return Err(CliError::Data(format!(
                "no record accepted after {stalled} consecutive attempts; \
                 inputs may be too small for the requested corpus size"
            )));
        }
    }
    Ok(())
}

fn run_multi_lane(
    config: &PipelineConfig,
    ctx: &GeneratorContext<'_>,
    state: RouterState,
    filter: &mut StreamFilter,
    sink: &mut Sink,
) -> Result<(), CliError> {
    let n = config.n_records;
    let lanes = config.worker_lanes;
    let shared = Mutex::new((state, SeededRng::new(config.seed)));
    let done = AtomicBool::new(false);
    let (tx, rx) = mpsc::sync_channel::<(Route, Result<Vec<QueryRecord>, String>)>(lanes * 4);

    let result: Result<(), CliError> = std::thread::scope(|scope| {
        for _ in 0..lanes {
            let tx = tx.clone();
            let shared = &shared;
            let done = &done;
            scope.spawn(move || {
                while !done.load(Ordering::Relaxed) {
                    let (route, seed) = {
                        let mut guard = shared.lock().expect("router lock");
                        let (state, rng) = &mut *guard;
                        let idx = next_route_index(state, rng);
                        (state.routes()[idx].clone(), rng.child_seed())
                    };
                    let outcome = generate_for_route(&route, ctx, seed);
                    if tx.send((route, outcome)).is_err() {
                        break;
                    }
                }
            });
        }
        drop(tx);

        let stall_limit = 500 * lanes.max(4) * 32;
        let mut stalled = 0usize;
        while (sink.accepted as usize) < n {
            let Ok((route, outcome)) = rx.recv() else {
                break;
            };
            match outcome {
                Ok(records) => {
                    let mut guard = shared.lock().expect("router lock");
                    let progressed = admit(records, &mut guard.0, filter, sink, n)?;
                    drop(guard);
                    if progressed {
                        stalled = 0;
                    } else {
                        stalled += 1;
                    }
                }
                Err(reason) => {
                    sink.write_skip(&SkipEvent::new(&route.route_id, reason))?;
                    stalled += 1;
                }
            }
            if stalled > stall_limit {
                done.store(true, Ordering::Relaxed);
                return Err(CliError::Data(format!(
                    "no record accepted after {stalled} consecutive attempts"
                )));
            }
        }
        done.store(true, Ordering::Relaxed);
        // Drain whatever the lanes still have in flight so they observe
        // the closed channel and exit.
        while rx.try_recv().is_ok() {}
        Ok(())
    });
    result
}
