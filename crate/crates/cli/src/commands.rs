use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use posetraj::checkpoint;
use posetraj::data::synthetic::{apply_random_rigid, generate_synthetic, SyntheticSpec};
use posetraj::data::{read_dir, read_sequence, write_sequence};
use posetraj::exec::{self, Exec};
use posetraj::metrics::{bench_forward, evaluate, format_table, window_errors, EvalReport};
use posetraj::model::{count_params, Ablation, Model, ModelConfig};
use posetraj::presets::Preset;
use posetraj::skeleton::{sliding_windows, HorizonSpec, MotionSequence, Skeleton, Window};
use posetraj::training::{train, TrainConfig};

use crate::args::*;
use crate::manifest::{beside, Recorder};

/// Problems with user-supplied input; exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct BadInput(pub String);

fn bad(msg: impl Into<String>) -> anyhow::Error {
    BadInput(msg.into()).into()
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(bad("--threads must be at least 1"));
        }
        exec::init_threads(n);
    }
    let ctx = Ctx {
        seed: cli.seed,
        threads: cli.threads,
        exec: Exec::Parallel,
    };
    match cli.command {
        #[cfg(feature = "convert")]
        Command::Convert(a) => convert(&ctx, a),
        Command::Generate(a) => generate(&ctx, a),
        Command::Perturb(a) => perturb(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Predict(a) => predict(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Ablate(a) => ablate(&ctx, a),
        Command::Bench(a) => bench(&ctx, a),
    }
}

struct Ctx {
    seed: Option<u64>,
    threads: Option<usize>,
    exec: Exec,
}

impl Ctx {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn recorder(&self, command: &'static str) -> Recorder {
        Recorder::new(command, self.seed(), self.threads)
    }
}

fn load_sequences(dir: &Path) -> Result<Vec<(PathBuf, MotionSequence)>> {
    let seqs = if dir.is_dir() { read_dir(dir)? } else { Vec::new() };
    if seqs.is_empty() {
        return Err(bad(format!("no sequences found in {}", dir.display())));
    }
    let first = seqs[0].1.skeleton().clone();
    for (p, s) in &seqs[1..] {
        if !s.skeleton().same_layout(&first) {
            return Err(posetraj::Error::SkeletonMismatch(format!(
                "{} uses a different skeleton from {}",
                p.display(),
                seqs[0].0.display()
            ))
            .into());
        }
    }
    Ok(seqs)
}

fn check_fps(seqs: &[(PathBuf, MotionSequence)], fps: f64) -> Result<()> {
    for (p, s) in seqs {
        if s.fps() != fps {
            return Err(bad(format!(
                "{} is recorded at {} fps, expected {fps}",
                p.display(),
                s.fps()
            )));
        }
    }
    Ok(())
}

fn make_windows(seqs: &[(PathBuf, MotionSequence)], h: HorizonSpec, stride: usize) -> Result<Vec<Window>> {
    if stride == 0 {
        return Err(bad("--stride must be at least 1"));
    }
    let w: Vec<Window> = seqs
        .iter()
        .flat_map(|(_, s)| sliding_windows(s, h, stride))
        .collect();
    if w.is_empty() {
        return Err(bad(format!(
            "no sequence has the {} frames one window needs",
            h.total()
        )));
    }
    Ok(w)
}

fn resolve_train_config(a: &TrainArgs, preset: Preset, seed: Option<u64>) -> Result<TrainConfig> {
    let mut cfg = TrainConfig {
        max_epochs: preset.spec().max_epochs,
        seed: seed.unwrap_or(0),
        ..TrainConfig::default()
    };
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: toml::Table = text
            .parse()
            .map_err(|e| bad(format!("{}: {e}", path.display())))?;
        let mut merged = toml::Table::try_from(&cfg).context("serializing train config")?;
        merged.extend(file);
        cfg = toml::Value::Table(merged)
            .try_into()
            .map_err(|e| bad(format!("{}: {e}", path.display())))?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
    }
    if let Some(v) = a.epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.weight_decay {
        cfg.weight_decay = v;
    }
    if a.grad_clip.is_some() {
        cfg.grad_clip = a.grad_clip;
    }
    let flags = ablation_from(&a.model.ablation);
    cfg.ablation = Ablation {
        no_gat: cfg.ablation.no_gat || flags.no_gat,
        no_relative_attn: cfg.ablation.no_relative_attn || flags.no_relative_attn,
        no_shared_attn: cfg.ablation.no_shared_attn || flags.no_shared_attn,
        no_cross_attn: cfg.ablation.no_cross_attn || flags.no_cross_attn,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn model_config(m: &ModelArgs, num_joints: usize, preset: Preset, seed: u64, ablation: Ablation) -> Result<ModelConfig> {
    let ps = preset.spec();
    let h = HorizonSpec::new(m.input_len.unwrap_or(ps.input_len), m.output_len.unwrap_or(ps.output_len))?;
    let mut cfg = ModelConfig::new(num_joints, h);
    cfg.num_layers = m.layers.unwrap_or(cfg.num_layers);
    cfg.num_heads = m.heads.unwrap_or(cfg.num_heads);
    cfg.ffn_dim = m.ffn.unwrap_or(cfg.ffn_dim);
    cfg.j_dim = m.j_dim.unwrap_or(cfg.j_dim);
    cfg.gat_heads = m.gat_heads.unwrap_or(cfg.gat_heads);
    cfg.dropout = m.dropout.unwrap_or(cfg.dropout);
    cfg.delta = m.delta.unwrap_or(cfg.delta);
    cfg.canonicalize = !m.no_transform;
    cfg.ablation = ablation;
    cfg.seed = seed;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(feature = "convert")]
fn convert(ctx: &Ctx, a: ConvertArgs) -> Result<()> {
    use posetraj::data::convert::{convert_table, parse_table, ConvertOptions};

    let preset = a.preset.map(Preset::from);
    let skeleton = match (a.skeleton, preset) {
        (Some(SkeletonArg::H36m17), _) => Skeleton::h36m17(),
        (Some(SkeletonArg::Cmu31), _) => Skeleton::cmu31(),
        (Some(SkeletonArg::Darko30), _) => Skeleton::darko30(),
        (None, Some(p)) => p.skeleton(),
        (None, None) => return Err(bad("pass --skeleton or --preset")),
    };
    let target_fps = a
        .target_fps
        .or(preset.map(|p| p.spec().fps))
        .ok_or_else(|| bad("pass --target-fps or --preset"))?;
    let opts = ConvertOptions {
        units: a.units.parse()?,
        up: a.up.parse()?,
        source_fps: a.source_fps,
        target_fps,
        joint_map: a.joint_map.clone(),
    };
    let text = fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let rows = parse_table(&text)?;
    let seq = convert_table(&rows, &Arc::new(skeleton), &opts)?;
    write_sequence(&seq, &a.out)?;
    println!("wrote {} frames to {}", seq.len(), a.out.display());

    let mut rec = ctx.recorder("convert");
    rec.config = json!({
        "units": a.units, "up": a.up, "source_fps": a.source_fps,
        "target_fps": target_fps, "joint_map": a.joint_map,
        "num_joints": seq.num_joints(),
    });
    rec.inputs.push(a.input);
    rec.outputs.push(a.out.clone());
    rec.finish(&beside(&a.out))
}

fn generate(ctx: &Ctx, a: GenerateArgs) -> Result<()> {
    if a.modes.is_empty() {
        return Err(bad("--modes is empty"));
    }
    let fps = a.fps.unwrap_or(Preset::from(a.preset).spec().fps);
    fs::create_dir_all(&a.out)?;
    let skeleton = Arc::new(Skeleton::h36m17());
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed());
    let mut rec = ctx.recorder("generate");
    let mut specs = Vec::new();
    for i in 0..a.count {
        let mode = a.modes[i % a.modes.len()].into();
        let spec = SyntheticSpec::random(mode, a.duration, fps, &mut rng);
        let seq = generate_synthetic(&spec, &skeleton)?;
        let path = a.out.join(format!("synthetic_{i:04}_{mode}.seq"));
        write_sequence(&seq, &path)?;
        rec.outputs.push(path);
        specs.push(spec);
    }
    println!("wrote {} sequences to {}", a.count, a.out.display());
    rec.config = json!({ "specs": specs });
    rec.finish(&beside(&a.out))
}

fn perturb(ctx: &Ctx, a: PerturbArgs) -> Result<()> {
    let inputs = if a.input.is_dir() {
        load_sequences(&a.input)?
    } else {
        vec![(a.input.clone(), read_sequence(&a.input)?)]
    };
    fs::create_dir_all(&a.out)?;
    let mut rec = ctx.recorder("perturb");
    let mut transforms = Vec::new();
    for (i, (path, seq)) in inputs.into_iter().enumerate() {
        let (moved, g) = apply_random_rigid(&seq, a.max_translation, a.max_yaw, ctx.seed().wrapping_add(i as u64));
        let dst = a.out.join(path.file_name().expect("sequence files have names"));
        write_sequence(&moved, &dst)?;
        transforms.push(json!({ "file": dst, "yaw": g.yaw, "translation": g.translation }));
        rec.inputs.push(path);
        rec.outputs.push(dst);
    }
    println!("wrote {} sequences to {}", transforms.len(), a.out.display());
    rec.config = json!({
        "max_translation": a.max_translation,
        "max_yaw": a.max_yaw,
        "transforms": transforms,
    });
    rec.finish(&beside(&a.out))
}

fn train_cmd(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    let preset = Preset::from(a.preset);
    let mut tc = resolve_train_config(&a, preset, ctx.seed)?;
    let seqs = load_sequences(&a.data)?;
    check_fps(&seqs, preset.spec().fps)?;
    let skeleton = (**seqs[0].1.skeleton()).clone();

    let (mut model, resume) = match &a.resume {
        Some(path) => {
            let ck = checkpoint::load_expecting(path, None, Some(&skeleton))?;
            tc.ablation = ck.model.config().ablation;
            (ck.model, ck.optimizer)
        }
        None => {
            let cfg = model_config(&a.model, skeleton.num_joints(), preset, tc.seed, tc.ablation)?;
            (Model::new(cfg, Arc::new(skeleton))?, None)
        }
    };
    let h = model.config().horizon();
    let windows = make_windows(&seqs, h, a.stride)?;
    let val = match &a.val {
        Some(dir) => {
            let v = load_sequences(dir)?;
            check_fps(&v, preset.spec().fps)?;
            Some(make_windows(&v, h, a.stride)?)
        }
        None => None,
    };

    fs::create_dir_all(&a.out)?;
    let log_path = a.out.join("train_log.jsonl");
    let mut log_file = fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(resume.is_some())
        .truncate(resume.is_none())
        .open(&log_path)?;
    let last = a.out.join("last.ckpt");
    println!(
        "training {} parameters on {} windows ({} → {} frames)",
        model.num_params(),
        windows.len(),
        h.input_len,
        h.output_len
    );
    let (log, state) = train(
        &mut model,
        &windows,
        val.as_deref(),
        &tc,
        ctx.exec,
        resume,
        |record, m, state| {
            checkpoint::save(&last, m, Some(state), Some(&tc))?;
            record.checkpoint = Some(last.display().to_string());
            writeln!(log_file, "{}", serde_json::to_string(record)?)?;
            let val = record
                .val
                .map(|r| format!("  val ADE_Po {:.4}  ADE_Tr {:.4}", r.ade_pose, r.ade_traj))
                .unwrap_or_default();
            println!("epoch {:>4}  loss {:.6}{val}  {:.1}s", record.epoch, record.train_loss, record.wall_clock_s);
            Ok(())
        },
    )?;
    let final_path = a.out.join("model.ckpt");
    checkpoint::save(&final_path, &model, Some(&state), Some(&tc))?;
    if let Some(e) = log.best_epoch {
        println!("kept parameters from epoch {e}");
    }
    println!("wrote {}", final_path.display());

    let mut rec = ctx.recorder("train");
    rec.config = json!({
        "preset": preset.to_string(),
        "train": tc,
        "model": model.config(),
        "stride": a.stride,
        "num_windows": windows.len(),
        "best_epoch": log.best_epoch,
    });
    rec.inputs.push(a.data);
    rec.inputs.extend(a.val);
    rec.inputs.extend(a.resume);
    rec.outputs = vec![final_path, last, log_path];
    rec.finish(&a.out.join("manifest.json"))
}

fn load_model(path: &Path, no_transform: bool) -> Result<Model> {
    let mut model = checkpoint::load(path)?.model;
    if no_transform {
        model.set_canonicalize(false);
    }
    Ok(model)
}

#[derive(Serialize)]
struct PredictionReport {
    checkpoint: PathBuf,
    input: PathBuf,
    start: usize,
    transform: posetraj::transform::TransformParams,
    runtime_ms: f64,
    /// Present when the input extends past the forecast horizon.
    errors: Option<EvalReport>,
}

fn predict(ctx: &Ctx, a: PredictArgs) -> Result<()> {
    let model = load_model(&a.checkpoint, false)?;
    let seq = read_sequence(&a.input)?;
    checkpoint::check_skeleton(&model, seq.skeleton())?;
    let h = model.config().horizon();
    if seq.len() < h.input_len {
        return Err(bad(format!(
            "{} has {} frames; the model observes {}",
            a.input.display(),
            seq.len(),
            h.input_len
        )));
    }
    let start = a.start.unwrap_or(seq.len() - h.input_len);
    if start + h.input_len > seq.len() {
        return Err(bad(format!("--start {start} leaves fewer than {} frames", h.input_len)));
    }
    let s_in = seq.slice(start, h.input_len);
    let t = Instant::now();
    let pred = model.predict(&s_in)?;
    let runtime_ms = t.elapsed().as_secs_f64() * 1e3;
    let gt_start = start + h.input_len;
    let errors = if gt_start + h.output_len <= seq.len() {
        let gt = seq.slice(gt_start, h.output_len);
        Some(window_errors(&pred.global, &gt)?)
    } else {
        None
    };
    write_sequence(&pred.global, &a.out)?;
    let report = PredictionReport {
        checkpoint: a.checkpoint.clone(),
        input: a.input.clone(),
        start,
        transform: pred.transform,
        runtime_ms,
        errors,
    };
    let mut report_path = a.out.clone().into_os_string();
    report_path.push(".report.json");
    let report_path = PathBuf::from(report_path);
    fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")?;
    if let Some(e) = errors {
        print!("{}", format_table(&[("prediction".into(), e)]));
    }
    println!("wrote {}", a.out.display());

    let mut rec = ctx.recorder("predict");
    rec.config = json!({ "model": model.config(), "start": start });
    rec.inputs = vec![a.checkpoint, a.input];
    rec.outputs = vec![a.out.clone(), report_path];
    rec.finish(&beside(&a.out))
}

fn eval_windows(model: &Model, a: &EvalArgs) -> Result<Vec<(PathBuf, MotionSequence)>> {
    let seqs = load_sequences(&a.data)?;
    checkpoint::check_skeleton(model, seqs[0].1.skeleton())?;
    Ok(seqs)
}

fn write_report<T: Serialize>(ctx: &Ctx, command: &'static str, a: &EvalArgs, model: &Model, report: &T) -> Result<()> {
    let Some(out) = &a.out else { return Ok(()) };
    fs::write(out, serde_json::to_string_pretty(report)? + "\n")?;
    let mut rec = ctx.recorder(command);
    rec.config = json!({ "model": model.config(), "stride": a.stride });
    rec.inputs = vec![a.checkpoint.clone(), a.data.clone()];
    rec.outputs = vec![out.clone()];
    rec.finish(&beside(out))
}

fn eval(ctx: &Ctx, a: EvalArgs) -> Result<()> {
    let model = load_model(&a.checkpoint, a.no_transform)?;
    let seqs = eval_windows(&model, &a)?;
    let windows = make_windows(&seqs, model.config().horizon(), a.stride)?;
    let mut report = evaluate(&model, &windows, ctx.exec)?;
    report.runtime_ms = Some(bench_forward(&model, &windows[0].input, 10)?.median_ms);
    print!("{}", format_table(&[("posetraj".into(), report)]));
    write_report(ctx, "eval", &a, &model, &report)
}

fn ablate(ctx: &Ctx, a: AblateArgs) -> Result<()> {
    let model = load_model(&a.eval.checkpoint, a.eval.no_transform)?;
    let seqs = eval_windows(&model, &a.eval)?;
    let rows = [
        ("original", 0.0, 0.0),
        ("translate", a.max_translation, 0.0),
        ("rotate", 0.0, a.max_yaw),
        ("translate+rotate", a.max_translation, a.max_yaw),
    ];
    let mut table = Vec::new();
    for (name, max_t, max_yaw) in rows {
        let moved: Vec<(PathBuf, MotionSequence)> = seqs
            .iter()
            .enumerate()
            .map(|(i, (p, s))| (p.clone(), apply_random_rigid(s, max_t, max_yaw, ctx.seed().wrapping_add(i as u64)).0))
            .collect();
        let windows = make_windows(&moved, model.config().horizon(), a.eval.stride)?;
        table.push((name.to_string(), evaluate(&model, &windows, ctx.exec)?));
    }
    print!("{}", format_table(&table));
    let report: Vec<_> = table.iter().map(|(n, r)| json!({ "mode": n, "report": r })).collect();
    write_report(ctx, "ablate", &a.eval, &model, &report)
}

fn bench(ctx: &Ctx, a: BenchArgs) -> Result<()> {
    let preset = Preset::from(a.preset);
    let model = match &a.checkpoint {
        Some(p) => checkpoint::load(p)?.model,
        None => {
            let sk = preset.skeleton();
            let cfg = model_config(&a.model, sk.num_joints(), preset, ctx.seed(), ablation_from(&a.model.ablation))?;
            Model::new(cfg, Arc::new(sk))?
        }
    };
    let cfg = model.config();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed());
    let flat: Vec<f64> = (0..cfg.input_len * 3 * cfg.num_joints)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let s_in = MotionSequence::from_flat(model.skeleton().clone(), &flat, preset.spec().fps)?;
    let before = model.decode_calls();
    let stats = bench_forward(&model, &s_in, a.repeats)?;
    let passes = (model.decode_calls() - before) as f64 / (a.repeats + posetraj::metrics::BENCH_WARMUP) as f64;
    println!("parameters      {}", count_params(cfg));
    println!("decoder passes  {passes} per forward");
    println!("samples         {}", stats.samples_ms.len());
    println!("median          {:.2} ms", stats.median_ms);
    println!("p95             {:.2} ms", stats.p95_ms);
    if let Some(out) = &a.out {
        let report = json!({
            "num_params": count_params(cfg),
            "decoder_passes_per_forward": passes,
            "latency": stats,
        });
        fs::write(out, serde_json::to_string_pretty(&report)? + "\n")?;
        let mut rec = ctx.recorder("bench");
        rec.config = json!({ "model": cfg, "repeats": a.repeats });
        rec.inputs.extend(a.checkpoint.clone());
        rec.outputs.push(out.clone());
        rec.finish(&beside(out))?;
    }
    Ok(())
}
