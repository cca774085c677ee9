//! Train-and-evaluate runs and the two ablation sweeps.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::report::{ExperimentReport, ReportRow, Timing};
use super::HarnessError;
use crate::fusion::Arrangement;
use crate::network::{evaluate, train, Dataset, EpochLog, EvalReport, Model};

/// Provenance written next to every checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub config_hash: String,
    pub seed: u64,
    pub epoch: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalLog {
    pub config_hash: String,
    pub seed: u64,
    pub checkpoint: PathBuf,
    #[serde(flatten)]
    pub report: EvalReport,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub logs: Vec<EpochLog>,
    pub eval: EvalReport,
    pub checkpoint: PathBuf,
    pub eval_log: PathBuf,
    pub secs: f64,
}

pub fn write_meta(path: &Path, meta: &ArtifactMeta) -> Result<(), HarnessError> {
    std::fs::write(path, serde_json::to_string_pretty(meta)? + "\n")?;
    Ok(())
}

/// Trains a fresh model and writes `config.ini`, `train_log.jsonl` and
/// checkpoints with `.json` provenance sidecars into `out_dir`.
pub fn run_training(
    cfg: &RunConfig,
    train_set: &Dataset,
    out_dir: &Path,
) -> Result<(Model, Vec<EpochLog>), HarnessError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("config.ini"), cfg.to_ini_string())?;
    let hash = cfg.hash();
    let seed = cfg.train.seed;
    let mut model = Model::new(cfg.network.clone(), seed)?;
    let logs = train(&mut model, train_set, &cfg.sampler, &cfg.train, Some(out_dir))?;
    let mut saved: Vec<usize> = cfg.train.milestones.iter().copied().filter(|&m| m <= cfg.train.epochs).collect();
    saved.push(cfg.train.epochs);
    for e in saved {
        let meta = ArtifactMeta {
            config_hash: hash.clone(),
            seed,
            epoch: Some(e),
        };
        write_meta(&out_dir.join(format!("checkpoint_epoch{e}.json")), &meta)?;
    }
    Ok((model, logs))
}

/// Evaluates `model` and writes `eval.json` into `out_dir`.
pub fn run_evaluation(
    cfg: &RunConfig,
    model: &Model,
    checkpoint: &Path,
    test_set: &Dataset,
    out_dir: &Path,
) -> Result<(EvalReport, PathBuf), HarnessError> {
    let eval = evaluate(model, test_set, &cfg.sampler, cfg.eval_batch)?;
    let log = EvalLog {
        config_hash: cfg.hash(),
        seed: cfg.train.seed,
        checkpoint: checkpoint.to_path_buf(),
        report: eval.clone(),
    };
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join("eval.json");
    std::fs::write(&path, serde_json::to_string(&log)? + "\n")?;
    Ok((eval, path))
}

/// [`run_training`] followed by [`run_evaluation`] in the same directory.
pub fn run_experiment(
    cfg: &RunConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    out_dir: &Path,
) -> Result<RunOutcome, HarnessError> {
    let start = Instant::now();
    let (model, logs) = run_training(cfg, train_set, out_dir)?;
    let checkpoint = PathBuf::from(format!("checkpoint_epoch{}.bin", cfg.train.epochs));
    let (eval, eval_log) = run_evaluation(cfg, &model, &checkpoint, test_set, out_dir)?;
    Ok(RunOutcome {
        logs,
        eval,
        checkpoint: out_dir.join(checkpoint),
        eval_log,
        secs: start.elapsed().as_secs_f64(),
    })
}

struct Variant {
    name: String,
    dir: String,
    default: bool,
    cfg: RunConfig,
}

fn sweep(
    title: &str,
    header: &str,
    base: &RunConfig,
    variants: Vec<Variant>,
    notes: Vec<String>,
    train_set: &Dataset,
    test_set: &Dataset,
    out_dir: &Path,
) -> Result<ExperimentReport, HarnessError> {
    let start = Instant::now();
    let mut rows = Vec::with_capacity(variants.len());
    let mut timing = Vec::with_capacity(variants.len());
    for v in variants {
        let outcome = run_experiment(&v.cfg, train_set, test_set, &out_dir.join(&v.dir))?;
        let rel = PathBuf::from(&v.dir);
        rows.push(ReportRow {
            variant: v.name.clone(),
            default: v.default,
            accuracy: outcome.eval.accuracy,
            final_loss: outcome.logs.last().map_or(f64::NAN, |l| l.loss),
            checkpoint: rel.join(format!("checkpoint_epoch{}.bin", v.cfg.train.epochs)),
            eval_log: rel.join("eval.json"),
        });
        timing.push((v.name, outcome.secs));
    }
    let report = ExperimentReport {
        title: title.into(),
        variant_header: header.into(),
        config_hash: base.hash(),
        seed: base.train.seed,
        chance: 1.0 / base.network.num_classes as f64,
        rows,
        notes,
    };
    report.write(out_dir, "report")?;
    let timing = Timing {
        total_secs: start.elapsed().as_secs_f64(),
        variants: timing,
    };
    std::fs::write(out_dir.join("timing.json"), serde_json::to_string_pretty(&timing)? + "\n")?;
    Ok(report)
}

/// Trains all five arrangements with the base seed and budget.
pub fn run_ablation_arrangements(
    base: &RunConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    out_dir: &Path,
) -> Result<ExperimentReport, HarnessError> {
    if base.network.insertion_stages.is_empty() {
        return Err(HarnessError::Config("arrangement sweep needs at least one insertion stage".into()));
    }
    let variants = Arrangement::ALL
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let mut cfg = base.clone();
            cfg.network.team.arrangement = a;
            Variant {
                name: a.label().into(),
                dir: format!("arrangement_{i}"),
                default: a == Arrangement::ChannelThenSpatial,
                cfg,
            }
        })
        .collect();
    let stages = base
        .network
        .insertion_stages
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let notes = vec![format!(
        "Fusion blocks after stages {{{stages}}}. Rows share seed and budget; differences between them are not significant at this scale."
    )];
    sweep("Fusion arrangements", "Arrangement", base, variants, notes, train_set, test_set, out_dir)
}

/// Insertion sets `{1}` through `{1, 2, 3, 4, 5}`.
pub const LOCATION_SETS: [&[usize]; 5] = [&[1], &[1, 2], &[1, 2, 3], &[1, 2, 3, 4], &[1, 2, 3, 4, 5]];

/// Trains the five nested insertion sets with the base seed and budget.
pub fn run_ablation_locations(
    base: &RunConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    out_dir: &Path,
) -> Result<ExperimentReport, HarnessError> {
    let variants = LOCATION_SETS
        .iter()
        .enumerate()
        .map(|(i, set)| {
            let mut cfg = base.clone();
            cfg.network.insertion_stages = set.to_vec();
            let name = set.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",");
            Variant {
                name: format!("{{{name}}}"),
                dir: format!("location_{i}"),
                default: set.len() == 4,
                cfg,
            }
        })
        .collect();
    let final_map = crate::network::NetworkConfig::stage_dims(base.sampler.crop)?[5];
    let notes = vec![
        format!(
            "Arrangement {}. Stage-5 maps are {final_map}x{final_map} at {crop}x{crop} input.",
            base.network.team.arrangement.label(),
            crop = base.sampler.crop
        ),
        "Expected trend: adding a block after stage 5 does not help, because spatial resolution is too low at the last stage for spatial attention to select anything.".into(),
    ];
    sweep("Fusion locations", "Stages", base, variants, notes, train_set, test_set, out_dir)
}
