//! Seeded batch execution: n scenarios per description, parallel
//! simulation, aggregation, and run-directory persistence.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::behavior::BehaviorRegistry;
use crate::error::{CoreError, Result};
use crate::map::MapLibrary;
use crate::metrics::{
    evaluate, format_batch_act, percent, summarize_batch, BatchSummary, MetricsSummary,
};
use crate::nl::{generate_scenario, GenerationBackend};
use crate::refine::{refine_until_aligned, RefinementEpisodeLog, DEFAULT_BUDGET};
use crate::scenario::serialize_scenario;
use crate::sim::{run_scenario, RunOptions, DEFAULT_DURATION};
use crate::trace::SimTrace;

pub const DEFAULT_RUNS: u32 = 32;

#[derive(Debug, Clone)]
pub struct BatchConfig {
    /// Row label in the report tables.
    pub label: String,
    /// The natural-language description every run is generated from.
    pub description: String,
    pub runs: u32,
    /// Per-run seed is `seed_base + run index`.
    pub seed_base: u64,
    pub duration: f64,
    pub refine: bool,
    pub budget: u32,
    /// Worker pool size; `None` uses the default rayon pool.
    pub workers: Option<usize>,
    /// When set, per-run artifacts and the report files are written here.
    pub output_dir: Option<PathBuf>,
}

impl BatchConfig {
    pub fn new(label: impl Into<String>, description: impl Into<String>) -> Self {
        BatchConfig {
            label: label.into(),
            description: description.into(),
            runs: DEFAULT_RUNS,
            seed_base: 1,
            duration: DEFAULT_DURATION,
            refine: false,
            budget: DEFAULT_BUDGET,
            workers: None,
            output_dir: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutcome {
    pub index: u32,
    pub seed: u64,
    pub initial: MetricsSummary,
    pub refined: Option<MetricsSummary>,
    pub episodes: Vec<RefinementEpisodeLog>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchOutcome {
    pub label: String,
    pub initial: BatchSummary,
    /// Present when the batch ran with refinement enabled.
    pub refined: Option<BatchSummary>,
    pub runs: Vec<RunOutcome>,
    /// (seed, error message) for runs that failed outright.
    pub failures: Vec<(u64, String)>,
}

struct RunArtifacts {
    outcome: RunOutcome,
    scenario_doc: String,
    trace_jsonl: String,
    refined_doc: Option<String>,
}

fn execute_run(
    config: &BatchConfig,
    index: u32,
    library: &MapLibrary,
    registry: &BehaviorRegistry,
    backend: &(dyn GenerationBackend + Sync),
) -> Result<RunArtifacts> {
    let seed = config.seed_base + index as u64;
    let (spec, _notes) = generate_scenario(&config.description, seed, library, registry, backend)?;
    let opts = RunOptions {
        duration: config.duration,
        ..Default::default()
    };
    let trace = run_scenario(&spec, library, registry, &opts)?;
    let initial = evaluate(&trace)?;

    let (refined, episodes, refined_doc) = if config.refine {
        let (final_spec, episodes, final_summary) =
            refine_until_aligned(&spec, library, registry, &opts, config.budget)?;
        let doc = serialize_scenario(&final_spec);
        (Some(final_summary), episodes, Some(doc))
    } else {
        (None, Vec::new(), None)
    };

    Ok(RunArtifacts {
        outcome: RunOutcome {
            index,
            seed,
            initial,
            refined,
            episodes,
        },
        scenario_doc: serialize_scenario(&spec),
        trace_jsonl: trace.to_jsonl(),
        refined_doc,
    })
}

fn persist_run(dir: &Path, artifacts: &RunArtifacts) -> Result<()> {
    let run_dir = dir.join(format!("run_{:03}", artifacts.outcome.index));
    fs::create_dir_all(&run_dir).map_err(|e| CoreError::Other(e.to_string()))?;
    let write = |name: &str, body: &str| -> Result<()> {
        fs::write(run_dir.join(name), body).map_err(|e| CoreError::Other(e.to_string()))
    };
    write("scenario.toml", &artifacts.scenario_doc)?;
    write("trace.jsonl", &artifacts.trace_jsonl)?;
    let metrics = serde_json::to_string_pretty(&serde_json::json!({
        "initial": artifacts.outcome.initial,
        "refined": artifacts.outcome.refined,
    }))
    .map_err(|e| CoreError::Other(e.to_string()))?;
    write("metrics.json", &metrics)?;
    if let Some(doc) = &artifacts.refined_doc {
        write("scenario_refined.toml", doc)?;
    }
    if !artifacts.outcome.episodes.is_empty() {
        let mut lines = String::new();
        for episode in &artifacts.outcome.episodes {
            lines.push_str(
                &serde_json::to_string(episode).map_err(|e| CoreError::Other(e.to_string()))?,
            );
            lines.push('\n');
        }
        write("episodes.jsonl", &lines)?;
    }
    Ok(())
}

/// Run the configured batch. Individual run failures are isolated; the
/// batch as a whole fails only when more than half of the runs fail.
pub fn run_batch(
    config: &BatchConfig,
    library: &MapLibrary,
    registry: &BehaviorRegistry,
    backend: &(dyn GenerationBackend + Sync),
) -> Result<BatchOutcome> {
    if config.runs == 0 {
        return Err(CoreError::Other("batch needs at least one run".to_string()));
    }

    let work = |index: u32| (index, execute_run(config, index, library, registry, backend));
    let results: Vec<(u32, Result<RunArtifacts>)> = match config.workers {
        Some(workers) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers.max(1))
                .build()
                .map_err(|e| CoreError::Other(e.to_string()))?;
            pool.install(|| {
                use rayon::prelude::*;
                (0..config.runs).into_par_iter().map(work).collect()
            })
        }
        None => {
            use rayon::prelude::*;
            (0..config.runs).into_par_iter().map(work).collect()
        }
    };

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (index, result) in results {
        match result {
            Ok(artifacts) => {
                if let Some(dir) = &config.output_dir {
                    persist_run(dir, &artifacts)?;
                }
                runs.push(artifacts.outcome);
            }
            Err(e) => failures.push((config.seed_base + index as u64, e.to_string())),
        }
    }

    if failures.len() * 2 > config.runs as usize {
        return Err(CoreError::Other(format!(
            "{} of {} runs failed; first error: {}",
            failures.len(),
            config.runs,
            failures[0].1
        )));
    }

    let initial = summarize_batch(&runs.iter().map(|r| r.initial.clone()).collect::<Vec<_>>());
    let refined = if config.refine {
        let summaries: Vec<MetricsSummary> =
            runs.iter().filter_map(|r| r.refined.clone()).collect();
        Some(summarize_batch(&summaries))
    } else {
        None
    };

    let outcome = BatchOutcome {
        label: config.label.clone(),
        initial,
        refined,
        runs,
        failures,
    };

    if let Some(dir) = &config.output_dir {
        let mut rows = vec![(outcome.label.clone(), outcome.initial.clone())];
        if let Some(refined) = &outcome.refined {
            rows.push((format!("{} (refined)", outcome.label), refined.clone()));
        }
        let (csv, md) = emit_report(&rows);
        fs::create_dir_all(dir).map_err(|e| CoreError::Other(e.to_string()))?;
        fs::write(dir.join("report.csv"), csv).map_err(|e| CoreError::Other(e.to_string()))?;
        fs::write(dir.join("report.md"), md).map_err(|e| CoreError::Other(e.to_string()))?;
    }

    Ok(outcome)
}

fn act_cell(summary: &BatchSummary) -> String {
    format_batch_act(summary)
}

/// Render the aggregate table in CSV and Markdown, one row per summary.
pub fn emit_report(rows: &[(String, BatchSummary)]) -> (String, String) {
    let mut csv = String::from("scenario,act,comfortability,crash_rate\n");
    let mut md = String::from(
        "| Scenario | ACT | Comfortability | CR |\n|---|---|---|---|\n",
    );
    for (label, summary) in rows {
        let act = act_cell(summary);
        let comfort = format!("{:.3}", summary.mean_comfortability);
        let cr = percent(summary.crash_rate);
        csv.push_str(&format!("{label},{act},{comfort},{cr}\n"));
        md.push_str(&format!("| {label} | {act} | {comfort} | {cr} |\n"));
    }
    (csv, md)
}

/// Recompute metrics from a stored trace. Bit-for-bit equal to the
/// metrics computed when the trace was recorded.
pub fn replay_metrics(jsonl: &str) -> Result<MetricsSummary> {
    let trace = SimTrace::from_jsonl(jsonl)?;
    evaluate(&trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nl::keyword::KeywordEngine;
    use crate::presets;

    fn quick_config(preset: &str, runs: u32) -> BatchConfig {
        let preset = presets::by_id(preset).unwrap();
        let mut config = BatchConfig::new(preset.id, preset.description);
        config.runs = runs;
        config.duration = 10.0;
        config
    }

    #[test]
    fn batch_summaries_are_worker_count_invariant() {
        let library = MapLibrary::builtin();
        let registry = BehaviorRegistry::builtin();
        let backend = KeywordEngine::default();

        let mut config = quick_config("moderate", 4);
        config.workers = Some(1);
        let serial = run_batch(&config, &library, &registry, &backend).unwrap();
        config.workers = Some(4);
        let parallel = run_batch(&config, &library, &registry, &backend).unwrap();

        assert_eq!(
            serde_json::to_string(&serial.initial).unwrap(),
            serde_json::to_string(&parallel.initial).unwrap()
        );
        assert_eq!(serial.runs.len(), 4);
        for (a, b) in serial.runs.iter().zip(parallel.runs.iter()) {
            assert_eq!(a.seed, b.seed);
            assert_eq!(
                serde_json::to_string(&a.initial).unwrap(),
                serde_json::to_string(&b.initial).unwrap()
            );
        }
    }

    #[test]
    fn run_directory_holds_replayable_artifacts() {
        let library = MapLibrary::builtin();
        let registry = BehaviorRegistry::builtin();
        let backend = KeywordEngine::default();
        let dir = tempfile::tempdir().unwrap();

        let mut config = quick_config("safe", 2);
        config.output_dir = Some(dir.path().to_path_buf());
        let outcome = run_batch(&config, &library, &registry, &backend).unwrap();

        for run in &outcome.runs {
            let run_dir = dir.path().join(format!("run_{:03}", run.index));
            let jsonl = fs::read_to_string(run_dir.join("trace.jsonl")).unwrap();
            let replayed = replay_metrics(&jsonl).unwrap();
            assert_eq!(
                serde_json::to_string(&replayed).unwrap(),
                serde_json::to_string(&run.initial).unwrap()
            );
            assert!(run_dir.join("scenario.toml").exists());
            assert!(run_dir.join("metrics.json").exists());
        }
        let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert!(csv.starts_with("scenario,act,comfortability,crash_rate"));
        assert!(csv.contains("safe"));
        assert!(dir.path().join("report.md").exists());
    }

    #[test]
    fn report_rows_follow_the_table_layout() {
        let summaries = vec![
            MetricsSummary {
                min_act: Some(0.5),
                comfortability: 0.654,
                collision: crate::metrics::CollisionRecord {
                    occurred: true,
                    parties: vec![("ego".to_string(), "truck_0".to_string())],
                },
                min_delta: Some(0.0),
            },
            MetricsSummary {
                min_act: Some(1.0),
                comfortability: 0.746,
                collision: Default::default(),
                min_delta: Some(3.0),
            },
        ];
        let batch = summarize_batch(&summaries);
        let (csv, md) = emit_report(&[("dangerous".to_string(), batch)]);
        assert!(csv.contains("dangerous,"));
        assert!(csv.trim_end().ends_with("50.0%"));
        assert!(md.contains("| dangerous |"));
        assert!(md.contains("| 50.0% |"));
    }
}
