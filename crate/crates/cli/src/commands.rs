use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;
use serde_json::json;
use tuberepair::detector::{
    load_checkpoint, save_checkpoint, train, AdamWConfig, PreparedSample, TrainConfig, UNet,
};
use tuberepair::fsutil::atomic_write;
use tuberepair::inference::{
    detect_whole_volume, eval_records, pair_components, InferenceConfig, KeypointModel, OracleModel, ResultJson,
};
use tuberepair::metrics::{full_report, reports_csv, EvalRecord, MetricsConfig};
use tuberepair::repair::repair_volume;
use tuberepair::skeleton::{extract_graph, write_graph};
use tuberepair::synth::{generate_dataset, generate_phantom_tree, load_sample, DatasetConfig, Manifest, PhantomParams, SourceVolume, Split};
use tuberepair::volume::{connected_components, read_volume, write_volume, Connectivity, Volume3D};
use tuberepair::{Error, Result};

use crate::args::*;

pub fn run(cli: Cli) -> Result<()> {
    let jobs = cli.jobs.max(1);
    match cli.command {
        Command::Phantom(a) => phantom(a, jobs),
        Command::Skeletonize(a) => skeletonize(a),
        Command::Synth(a) => synth(a, jobs),
        Command::Train(a) => train_cmd(a),
        Command::Infer(a) => infer(a),
        Command::Eval(a) => eval(a),
        Command::Repair(a) => repair(a),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn ensure_empty_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() && std::fs::read_dir(dir)?.next().is_some() && !force {
        return Err(Error::InvalidArgument(format!(
            "{} exists and is not empty (use --force)",
            dir.display()
        )));
    }
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn parse_dims(s: &str) -> Result<[usize; 3]> {
    let parts: Vec<usize> = s
        .split('x')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidArgument(format!("bad dims {s:?}")))?;
    match parts[..] {
        [d] => Ok([d; 3]),
        [d, h, w] => Ok([d, h, w]),
        _ => Err(Error::InvalidArgument(format!("bad dims {s:?}: use N or DxHxW"))),
    }
}

fn parse_ratio(s: &str) -> Result<[u32; 3]> {
    let parts: Vec<u32> = s
        .split(':')
        .map(|p| p.trim().parse::<u32>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidArgument(format!("bad split ratio {s:?}")))?;
    <[u32; 3]>::try_from(parts).map_err(|_| Error::InvalidArgument(format!("split ratio {s:?} needs three parts")))
}

fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
    }
}

/// Runs `f` over `0..n` on up to `jobs` threads, keeping results in index order.
fn par_map<T: Send>(n: usize, jobs: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<Result<T>>>> = (0..n).map(|_| Default::default()).collect();
    let work = || loop {
        let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        if i >= n {
            break;
        }
        *slots[i].lock().unwrap() = Some(f(i));
    };
    std::thread::scope(|s| {
        for _ in 1..jobs.clamp(1, n.max(1)) {
            s.spawn(work);
        }
        work();
    });
    slots.into_iter().map(|m| m.into_inner().unwrap().expect("every index visited")).collect()
}

fn phantom(a: PhantomArgs, jobs: usize) -> Result<()> {
    let dims = parse_dims(&a.dims)?;
    PhantomParams::for_dims(dims, a.depth, a.seed).validate()?;
    ensure_empty_dir(&a.out, a.force)?;
    let entries = par_map(a.count, jobs, |i| {
        let seed = a.seed ^ i as u64;
        let id = format!("phantom_{i:03}");
        let (vol, _) = generate_phantom_tree(&PhantomParams::for_dims(dims, a.depth, seed))?;
        let graph = extract_graph(&vol)?;
        write_volume(&vol, a.out.join(format!("{id}.btv")))?;
        write_graph(&graph, a.out.join(format!("{id}.graph.json")))?;
        let components = connected_components(&vol, Connectivity::TwentySix).num_components();
        info!("{id}: seed {seed}, {} voxels, {} branches", vol.count(), graph.edges.len());
        Ok(json!({
            "id": id,
            "seed": seed,
            "volume": format!("{id}.btv"),
            "graph": format!("{id}.graph.json"),
            "foreground": vol.count(),
            "components": components,
            "branches": graph.edges.len(),
        }))
    })?;
    write_json(
        &a.out.join("phantoms.json"),
        &json!({"version": 1, "seed": a.seed, "dims": dims, "depth": a.depth, "phantoms": entries}),
    )
}

fn skeletonize(a: SkeletonizeArgs) -> Result<()> {
    let vol = read_volume(&a.input)?;
    let graph = extract_graph(&vol)?;
    info!("{} nodes, {} branches", graph.nodes.len(), graph.edges.len());
    write_graph(&graph, &a.out)
}

fn synth(a: SynthArgs, jobs: usize) -> Result<()> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&a.volumes)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "btv"));
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyDataset(format!("no .btv volumes in {}", a.volumes.display())));
    }
    let cfg = DatasetConfig {
        branches_per_volume: a.branches,
        split_ratio: parse_ratio(&a.split)?,
        seed: a.seed,
        ..Default::default()
    };
    ensure_empty_dir(&a.out, a.force)?;
    let sources = par_map(paths.len(), jobs, |i| {
        let volume = read_volume(&paths[i])?;
        let graph = extract_graph(&volume)?;
        let id = paths[i].file_stem().unwrap_or_default().to_string_lossy().into_owned();
        Ok(SourceVolume { id, volume, graph })
    })?;
    let m = generate_dataset(&sources, &cfg, &a.out, jobs)?;
    for v in m.volumes.iter().filter(|v| v.shortfall > 0) {
        warn!("{}: {} of {} breaks ({} eligible branches)", v.volume_id, v.emitted, a.branches, v.eligible_edges);
    }
    info!(
        "{} samples from {} volumes (train {}, val {}, test {}), seed {}",
        m.samples.len(),
        m.volumes.len(),
        m.splits.train.len(),
        m.splits.val.len(),
        m.splits.test.len(),
        m.seed
    );
    Ok(())
}

fn open_manifest(path: &Path) -> Result<(Manifest, PathBuf)> {
    let file = if path.is_dir() { path.join("manifest.json") } else { path.to_path_buf() };
    let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((Manifest::read(&file)?, root))
}

fn prepared(m: &Manifest, root: &Path, split: Split) -> Result<Vec<PreparedSample>> {
    m.samples_in(split)
        .map(|r| PreparedSample::new(&load_sample(root, r)?))
        .collect()
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let (m, root) = open_manifest(&a.data)?;
    let train_set = prepared(&m, &root, Split::Train)?;
    let val = prepared(&m, &root, Split::Val)?;
    info!("{} training and {} validation samples", train_set.len(), val.len());
    let cfg = TrainConfig {
        variant: a.variant,
        base_width: a.base_width,
        crop_extent: a.crop,
        batch_size: a.batch,
        max_epochs: a.epochs,
        patience: a.patience,
        max_steps: a.max_steps,
        seed: a.seed,
        init_from: a.init_from.clone(),
        optim: AdamWConfig {
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            weight_decay: a.weight_decay,
            ..Default::default()
        },
        ..Default::default()
    };
    let (mut trainer, report) = train(&train_set, &val, &cfg, |e| match e.val_loss {
        Some(v) => info!("epoch {} steps {} train {:.5} val {:.5}", e.epoch, e.steps, e.train_loss, v),
        None => info!("epoch {} steps {} train {:.5}", e.epoch, e.steps, e.train_loss),
    })?;
    save_checkpoint(&mut trainer.net, Some(&trainer.optim), &a.out)?;
    let curve = a.curve.unwrap_or_else(|| with_suffix(&a.out, ".curve.json"));
    write_json(&curve, &json!({"version": 1, "seed": a.seed, "config": cfg, "report": report}))?;
    info!("best epoch {} loss {:.5}{}", report.best_epoch, report.best_loss, if report.stopped_early { " (early stop)" } else { "" });
    Ok(())
}

fn load_net(path: &Path) -> Result<UNet<f32>> {
    load_checkpoint(path)?.to_net()
}

fn infer(a: InferArgs) -> Result<()> {
    let vol = read_volume(&a.volume)?;
    let mut net = load_net(&a.ckpt)?;
    let cfg = InferenceConfig {
        crops_per_component: a.crops,
        noise_min_voxels: a.noise_min,
        crop_extent: a.crop,
        mode: a.mode,
        seed: a.seed,
        raw_input: a.raw_input,
    };
    let result = detect_whole_volume(&vol, &mut net, &cfg)?;
    let pairing = pair_components(&result);
    for w in &pairing.warnings {
        warn!("{w}");
    }
    info!("{} candidate components, {} pairs", result.components.len(), pairing.pairs.len());
    write_json(&a.out, &ResultJson::new(&result, &pairing))
}

fn eval(a: EvalArgs) -> Result<()> {
    let (m, root) = open_manifest(&a.data)?;
    let split = parse_split(&a.split)?;
    let mut net = match &a.ckpt {
        Some(p) => Some(load_net(p)?),
        None => None,
    };
    let mut records: Vec<EvalRecord> = Vec::new();
    for rec in m.samples_in(split) {
        let sample = load_sample(&root, rec)?;
        let model: &mut dyn KeypointModel = match net.as_mut() {
            Some(n) => n,
            None => &mut OracleModel::new(vec![sample.kp1, sample.kp2]),
        };
        records.extend(eval_records(&sample, model, a.crop)?);
    }
    if records.is_empty() {
        return Err(Error::InvalidArgument(format!("split {} has no fixed crops to score", split.as_str())));
    }
    let report = full_report(&records, &MetricsConfig::default())?;
    let name = a.name.clone().unwrap_or_else(|| match &a.ckpt {
        Some(p) => p.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
        None => "oracle".into(),
    });
    info!("{name}: AP {:.4} AP50 {:.4} E_d {:?} over {} crops", report.ap, report.ap50, report.e_d, records.len());
    let csv = reports_csv(&[(name.clone(), report.clone())]);
    if a.out.extension().is_some_and(|e| e == "csv") {
        atomic_write(&a.out, csv.as_bytes())?;
    } else {
        write_json(
            &a.out,
            &json!({
                "version": 1,
                "name": name,
                "split": split,
                "dataset_seed": m.seed,
                "model": a.ckpt.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "oracle".into()),
                "report": report,
                "records": records,
            }),
        )?;
    }
    if let Some(p) = &a.csv {
        atomic_write(p, csv.as_bytes())?;
    }
    Ok(())
}

fn repair(a: RepairArgs) -> Result<()> {
    let vol: Volume3D = read_volume(&a.volume)?;
    let det: ResultJson = serde_json::from_slice(&std::fs::read(&a.detections)?)?;
    let pairs = det.pairs();
    let radii = vec![a.radius; pairs.len()];
    let (out, log) = repair_volume(&vol, &pairs, &radii)?;
    write_volume(&out, &a.out)?;
    let log_path = a.log.unwrap_or_else(|| with_suffix(&a.out, ".log.json"));
    info!("bridged {} pairs, {} voxels added", log.len(), out.count() - vol.count());
    write_json(&log_path, &json!({"version": 1, "seed": det.config_echo.seed, "pairs": log}))
}
