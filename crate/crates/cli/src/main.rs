use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use teamnet::codec::{
    decode_full, decode_gop_partial, deserialize, encode_stream, reconstruct_from_partial, serialize, GopStream,
};
use teamnet::harness::bench::{benchmark_decode, benchmark_forward, median, static_stream, PIndexMode};
use teamnet::harness::cam::{cam_hit_rate, compute_cam, export_cams, probe_videos};
use teamnet::harness::config::RunConfig;
use teamnet::harness::experiment::{
    run_ablation_arrangements, run_ablation_locations, run_evaluation, run_experiment, run_training, ArtifactMeta,
};
use teamnet::harness::files::{dir_digest, read_png_frames, write_png, write_png_frames};
use teamnet::harness::synth::synth_dataset;
use teamnet::harness::HarnessError;
use teamnet::network::{Dataset, Model};
use teamnet::sampler::{read_manifest, sample_test_clips, ClipSample};

/// Compressed-domain video classification toolkit.
#[derive(Parser, Debug)]
#[command(name = "teamnet", version)]
struct Cli {
    /// INI run configuration with [codec], [sampler], [network], [train] and [synth] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for data synthesis, sampling and initialisation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Print a JSON object on stdout instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Encode a folder of PNG frames into a .gops file.
    Encode {
        /// Folder of equally sized PNG frames, read in name order.
        input: PathBuf,
        output: PathBuf,
    },
    /// Decode a .gops file to PNG frames, or one frame through the partial path.
    Decode {
        input: PathBuf,
        /// GOP to partially decode (requires --p-index).
        #[arg(long, requires = "p_index")]
        gop: Option<usize>,
        #[arg(long, requires = "gop")]
        p_index: Option<usize>,
    },
    /// Check that a .gops file parses, re-serializes identically and that
    /// partial decoding agrees with full decoding.
    Verify { input: PathBuf },
    /// Generate the synthetic motion dataset.
    Synth,
    /// Train a model.
    Train {
        #[arg(long)]
        train_manifest: PathBuf,
        /// Evaluate on this manifest after training.
        #[arg(long)]
        test_manifest: Option<PathBuf>,
    },
    /// Evaluate a checkpoint with the test protocol.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Train and evaluate all five fusion arrangements.
    AblateArrangement(AblationArgs),
    /// Train and evaluate the five nested insertion sets.
    AblateLocation(AblationArgs),
    /// Export class activation maps, or score them against sprite boxes.
    Cam(CamArgs),
    /// Time full against partial decoding.
    Bench {
        /// Stream to measure; a static 64-GOP stream when omitted.
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        t: usize,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        /// Read each sampled GOP up to its last P-frame.
        #[arg(long)]
        last: bool,
        /// Also time a forward pass of an untrained model.
        #[arg(long)]
        forward: bool,
    },
}

#[derive(Args, Debug)]
struct AblationArgs {
    #[arg(long)]
    train_manifest: PathBuf,
    #[arg(long)]
    test_manifest: PathBuf,
}

#[derive(Args, Debug)]
struct CamArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Export maps for one video of this manifest.
    #[arg(long, required_unless_present = "probe_size")]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    video: usize,
    /// Score maps on freshly rendered videos of this frame size instead.
    #[arg(long, conflicts_with = "manifest")]
    probe_size: Option<usize>,
    #[arg(long, default_value_t = 4)]
    probe_per_class: usize,
}

struct Ctx {
    cfg: RunConfig,
    out_dir: Option<PathBuf>,
}

impl Ctx {
    fn out_dir(&self) -> Result<&Path, HarnessError> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| HarnessError::Config("this command needs --out-dir".into()))
    }
}

fn load_stream(path: &Path) -> Result<GopStream, HarnessError> {
    Ok(deserialize(&std::fs::read(path)?)?)
}

fn provenance(cfg: &RunConfig) -> Value {
    json!({ "config_hash": cfg.hash(), "seed": cfg.train.seed })
}

/// Missing inputs are argument errors, not runtime failures.
fn check_inputs(cmd: &Command) -> Result<(), HarnessError> {
    let paths: Vec<&Path> = match cmd {
        Command::Encode { input, .. } | Command::Decode { input, .. } | Command::Verify { input } => vec![input],
        Command::Synth => vec![],
        Command::Train {
            train_manifest,
            test_manifest,
        } => std::iter::once(train_manifest).chain(test_manifest).map(|p| p.as_path()).collect(),
        Command::Eval { checkpoint, manifest } => vec![checkpoint, manifest],
        Command::AblateArrangement(a) | Command::AblateLocation(a) => vec![&a.train_manifest, &a.test_manifest],
        Command::Cam(a) => std::iter::once(&a.checkpoint).chain(&a.manifest).map(|p| p.as_path()).collect(),
        Command::Bench { input, .. } => input.iter().map(|p| p.as_path()).collect(),
    };
    match paths.into_iter().find(|p| !p.exists()) {
        Some(p) => Err(HarnessError::Config(format!("{}: no such file or directory", p.display()))),
        None => Ok(()),
    }
}

fn run(cmd: Command, ctx: &Ctx) -> Result<(Value, String), HarnessError> {
    check_inputs(&cmd)?;
    let cfg = &ctx.cfg;
    match cmd {
        Command::Encode { input, output } => {
            let frames = read_png_frames(&input)?;
            let stream = encode_stream(&frames, cfg.codec)?;
            let bytes = serialize(&stream)?;
            std::fs::write(&output, &bytes)?;
            let text = format!(
                "encoded {} frames into {} GOPs, {} bytes -> {}",
                frames.len(),
                stream.gop_count(),
                bytes.len(),
                output.display()
            );
            let v = json!({
                "frames": frames.len(), "gops": stream.gop_count(), "bytes": bytes.len(), "output": output,
            });
            Ok((v, text))
        }
        Command::Decode { input, gop, p_index } => {
            let stream = load_stream(&input)?;
            let dir = ctx.out_dir()?;
            std::fs::create_dir_all(dir)?;
            if let (Some(g), Some(p)) = (gop, p_index) {
                let gop = stream
                    .gops
                    .get(g)
                    .ok_or_else(|| HarnessError::Config(format!("GOP {g} out of range, stream has {}", stream.gop_count())))?;
                let frame = reconstruct_from_partial(&decode_gop_partial(gop, p)?)?;
                let path = dir.join(format!("gop{g}_p{p}.png"));
                write_png(&path, &frame)?;
                let v = json!({ "gop": g, "p_index": p, "frame": stream.gop_start(g) + p, "output": path });
                return Ok((v, format!("wrote {}", path.display())));
            }
            let frames = decode_full(&stream)?;
            write_png_frames(dir, &frames)?;
            let v = json!({
                "frames": frames.len(), "gops": stream.gop_count(),
                "width": stream.header.width(), "height": stream.header.height(), "output": dir,
            });
            Ok((v, format!("decoded {} frames into {}", frames.len(), dir.display())))
        }
        Command::Verify { input } => {
            let bytes = std::fs::read(&input)?;
            let stream = deserialize(&bytes)?;
            stream.validate()?;
            if serialize(&stream)? != bytes {
                return Err(HarnessError::Config("re-serialized bytes differ from the file".into()));
            }
            let frames = decode_full(&stream)?;
            for (g, gop) in stream.gops.iter().enumerate() {
                for p in 1..=gop.p_count() {
                    if reconstruct_from_partial(&decode_gop_partial(gop, p)?)? != frames[stream.gop_start(g) + p] {
                        return Err(HarnessError::Config(format!("partial decode of GOP {g}, P-frame {p} disagrees")));
                    }
                }
            }
            let v = json!({ "ok": true, "frames": frames.len(), "gops": stream.gop_count() });
            Ok((v, format!("{}: ok ({} frames, {} GOPs)", input.display(), frames.len(), stream.gop_count())))
        }
        Command::Synth => {
            let dir = ctx.out_dir()?;
            let out = synth_dataset(&cfg.synth, dir)?;
            let digest = dir_digest(dir)?;
            let v = json!({
                "train_manifest": out.train_manifest, "test_manifest": out.test_manifest,
                "tracks": out.tracks, "digest": digest, "seed": cfg.synth.seed,
            });
            Ok((v, format!("dataset written to {} (digest {digest})", dir.display())))
        }
        Command::Train {
            train_manifest,
            test_manifest,
        } => {
            let dir = ctx.out_dir()?;
            let train_set = Dataset::load(&train_manifest)?;
            let (v, text) = match test_manifest {
                Some(test) => {
                    let r = run_experiment(cfg, &train_set, &Dataset::load(&test)?, dir)?;
                    let v = json!({
                        "epochs": r.logs, "accuracy": r.eval.accuracy,
                        "checkpoint": r.checkpoint, "eval_log": r.eval_log,
                    });
                    (v, format!("test accuracy {:.4}, checkpoint {}", r.eval.accuracy, r.checkpoint.display()))
                }
                None => {
                    let (_, logs) = run_training(cfg, &train_set, dir)?;
                    let ck = dir.join(format!("checkpoint_epoch{}.bin", cfg.train.epochs));
                    let last = logs.last().map_or(f64::NAN, |l| l.loss);
                    (json!({ "epochs": logs, "checkpoint": ck }), format!("final loss {last:.4}, checkpoint {}", ck.display()))
                }
            };
            Ok((merge(v, provenance(cfg)), text))
        }
        Command::Eval { checkpoint, manifest } => {
            let model = Model::load(cfg.network.clone(), &checkpoint)?;
            let data = Dataset::load(&manifest)?;
            let (eval, log) = match &ctx.out_dir {
                Some(dir) => {
                    let (e, p) = run_evaluation(cfg, &model, &checkpoint, &data, dir)?;
                    (e, Some(p))
                }
                None => (
                    teamnet::network::evaluate(&model, &data, &cfg.sampler, cfg.eval_batch)?,
                    None,
                ),
            };
            let v = json!({ "accuracy": eval.accuracy, "videos": eval.labels.len(), "eval_log": log });
            Ok((merge(v, provenance(cfg)), format!("accuracy {:.4} on {} videos", eval.accuracy, eval.labels.len())))
        }
        Command::AblateArrangement(a) => ablation(ctx, &a, run_ablation_arrangements),
        Command::AblateLocation(a) => ablation(ctx, &a, run_ablation_locations),
        Command::Cam(a) => cam(ctx, a),
        Command::Bench {
            input,
            t,
            reps,
            last,
            forward,
        } => {
            let stream = match &input {
                Some(p) => load_stream(p)?,
                None => static_stream(64, cfg.sampler.crop, cfg.codec)?,
            };
            let mode = if last { PIndexMode::Last } else { PIndexMode::Centre };
            let report = benchmark_decode(&stream, t, reps, mode)?;
            let mut v = serde_json::to_value(&report)?;
            let mut text = format!(
                "full {:.3} ms, partial {:.3} ms, ratio {:.4} (median of {reps})",
                report.full_median * 1e3,
                report.partial_median * 1e3,
                report.ratio
            );
            if forward {
                let mut sampler = cfg.sampler.clone();
                sampler.test_segments = t;
                let model = Model::new(cfg.network.clone(), cfg.train.seed)?;
                let secs = benchmark_forward(&model, &stream, &sampler, reps)?;
                text.push_str(&format!("; forward {:.3} ms", median(&secs) * 1e3));
                v["forward_secs"] = json!(secs);
                v["forward_median"] = json!(median(&secs));
            }
            if let Some(dir) = &ctx.out_dir {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("bench.json"), serde_json::to_string_pretty(&v)? + "\n")?;
            }
            Ok((v, text))
        }
    }
}

type Sweep = fn(&RunConfig, &Dataset, &Dataset, &Path) -> Result<teamnet::harness::report::ExperimentReport, HarnessError>;

fn ablation(ctx: &Ctx, a: &AblationArgs, f: Sweep) -> Result<(Value, String), HarnessError> {
    let dir = ctx.out_dir()?;
    let train_set = Dataset::load(&a.train_manifest)?;
    let test_set = Dataset::load(&a.test_manifest)?;
    let report = f(&ctx.cfg, &train_set, &test_set, dir)?;
    Ok((serde_json::to_value(&report)?, report.to_markdown()))
}

fn cam(ctx: &Ctx, a: CamArgs) -> Result<(Value, String), HarnessError> {
    let cfg = &ctx.cfg;
    let model = Model::load(cfg.network.clone(), &a.checkpoint)?;
    if let Some(size) = a.probe_size {
        let videos = probe_videos(&cfg.synth, size, size, a.probe_per_class, 1 << 32)?;
        let mut sampler = cfg.sampler.clone();
        sampler.crop = size;
        let eval = cam_hit_rate(&model, &videos, &sampler)?;
        let v = merge(json!({ "frames": eval.frames, "hits": eval.hits, "rate": eval.rate(),
            "pathway_hits": eval.pathway_hits }), provenance(cfg));
        return Ok((v, format!("CAM peak on sprite in {}/{} frames ({:.3})", eval.hits, eval.frames, eval.rate())));
    }
    let manifest = a.manifest.expect("clap enforces manifest or probe size");
    let entries = read_manifest(&manifest)?;
    let entry = entries
        .get(a.video)
        .ok_or_else(|| HarnessError::Config(format!("video {} out of range, manifest has {}", a.video, entries.len())))?;
    let stream = load_stream(&entry.path)?;
    let clips: Vec<ClipSample> = sample_test_clips(&stream, entry.label, &cfg.sampler)?;
    let cams = compute_cam(&model, &clips, &cfg.sampler)?;
    let dir = ctx.out_dir()?;
    let classes = vec![entry.label; clips.len()];
    let files = export_cams(&cams, &classes, dir, &format!("video{}", a.video), &cfg.hash(), cfg.train.seed)?;
    let meta = ArtifactMeta {
        config_hash: cfg.hash(),
        seed: cfg.train.seed,
        epoch: None,
    };
    teamnet::harness::experiment::write_meta(&dir.join(format!("video{}_cam.json", a.video)), &meta)?;
    let v = merge(json!({ "files": files, "label": entry.label }), provenance(cfg));
    Ok((v, format!("wrote {} CAM files to {}", files.len(), dir.display())))
}

fn merge(mut a: Value, b: Value) -> Value {
    if let (Some(a), Value::Object(b)) = (a.as_object_mut(), b) {
        a.extend(b);
    }
    a
}

fn load_config(cli: &Cli) -> Result<RunConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
        cfg.synth.seed = seed;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let json_out = cli.json;
    let result = load_config(&cli).and_then(|cfg| {
        let ctx = Ctx {
            cfg,
            out_dir: cli.out_dir.clone(),
        };
        run(cli.command, &ctx)
    });
    match result {
        Ok((v, text)) => {
            if json_out {
                println!("{v}");
            } else {
                println!("{text}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = if e.is_validation() { 1 } else { 2 };
            eprintln!("error: {e}");
            if json_out {
                println!("{}", json!({ "error": e.to_string(), "exit_code": code }));
            }
            ExitCode::from(code)
        }
    }
}
