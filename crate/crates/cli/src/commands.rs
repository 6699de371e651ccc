use std::path::{Path, PathBuf};

use lact_core::fbp::{fbp_reconstruct, FilterSpec};
use lact_core::metrics::{score_sample, MetricsRow};
use lact_core::phantom::{self, DatasetManifest};
use lact_core::projector::extract_window;
use lact_core::{io, AngularWindow, FanBeamGeometry, Sinogram};
use lact_nn::{Checkpoint, Model};
use lact_train::eval::{write_csv, LevelScore};
use lact_train::recon::reconstruct_batch;
use lact_train::sweeps;
use lact_train::{Dataset, EvalStart, ModelReconstructor, Outputs, TrainConfig, Trainer};
use serde::{Deserialize, Serialize};

use crate::common::*;
use crate::{EvalArgs, FbpArgs, FilterName, GenerateArgs, ReconstructArgs, SweepArgs, SweepKind, TrainArgs};

fn default_detectors(size: usize) -> usize {
    let base = FanBeamGeometry::desk();
    ((base.num_detectors * size) as f64 / base.image_size as f64).round() as usize
}

fn scaled_manifest(count: usize, size: usize, seed: u64, detectors: Option<usize>) -> DatasetManifest {
    let nd = detectors.unwrap_or_else(|| default_detectors(size));
    DatasetManifest::new(count, size, seed).with_geometry(FanBeamGeometry::desk_scaled(size, nd))
}

#[derive(Serialize)]
struct GenerateResolved<'a> {
    out: &'a Path,
    manifest: &'a DatasetManifest,
}

pub fn generate(a: &GenerateArgs, print_only: bool) -> CliResult<()> {
    let mut m = match &a.manifest {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| lact_core::Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("manifest {}: {e}", p.display())))?
        }
        None => scaled_manifest(100, 128, 0, None),
    };
    if a.size.is_some() || a.detectors.is_some() {
        let size = a.size.unwrap_or(m.image_size);
        let fresh = scaled_manifest(m.count, size, m.master_seed, a.detectors);
        m = DatasetManifest { noise_sigma: m.noise_sigma, ..fresh };
    }
    if let Some(c) = a.count {
        m.count = c;
    }
    if let Some(s) = a.seed {
        m.master_seed = s;
    }
    if let Some(n) = a.noise {
        m.noise_sigma = n;
    }
    if let Some(w) = a.cross_weight {
        m.ranges.cross_weight = w;
    }
    m.validate().map_err(|e| usage(e.to_string()))?;
    if announce("generate", &GenerateResolved { out: &a.out, manifest: &m }, Some(m.master_seed), print_only) {
        return Ok(());
    }
    let summary = phantom::generate_dataset(&m, &a.out)?;
    println!(
        "wrote {} images and {} sinograms ({} with holes, {} with cells) to {}",
        summary.images,
        summary.sinograms,
        summary.shape_filled,
        summary.voronoi_filled,
        a.out.display()
    );
    Ok(())
}

fn parse_window(s: &str) -> CliResult<AngularWindow> {
    s.parse().map_err(|e: lact_core::Error| usage(e.to_string()))
}

/// The requested window, or every row of `sino` when none is given.
fn window_or_full(range: Option<&str>, sino: &Sinogram) -> CliResult<AngularWindow> {
    match range {
        Some(r) => parse_window(r),
        None => {
            let g = sino.geometry();
            let end = g.angle_deg(g.num_angles - 1);
            AngularWindow::span(g.angle_start_deg, end).map_err(|e| usage(e.to_string()))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FbpConfig {
    sino: Option<PathBuf>,
    range: Option<String>,
    filter: FilterName,
    cutoff: f64,
    out: Option<PathBuf>,
}

impl Default for FbpConfig {
    fn default() -> Self {
        Self { sino: None, range: None, filter: FilterName::Hann, cutoff: 1.0, out: None }
    }
}

pub fn fbp(a: &FbpArgs, print_only: bool) -> CliResult<()> {
    let mut c: FbpConfig = load_layered(a.config.as_deref())?;
    set(&mut c.sino, &a.sino);
    set(&mut c.range, &a.range);
    overlay(&mut c.filter, a.filter);
    overlay(&mut c.cutoff, a.cutoff);
    set(&mut c.out, &a.out);
    if announce("fbp", &c, None, print_only) {
        return Ok(());
    }
    let sino_path = c.sino.as_ref().ok_or_else(|| usage("--sino is required"))?;
    let out = c.out.as_ref().ok_or_else(|| usage("--out is required"))?;
    let sino = io::read_sinogram(sino_path)?;
    let w = window_or_full(c.range.as_deref(), &sino)?;
    let filter = match c.filter {
        FilterName::Hann => FilterSpec::hann(c.cutoff),
        FilterName::RamLak => FilterSpec { cutoff: c.cutoff, ..FilterSpec::ram_lak() },
    };
    let win = extract_window(&sino, &w)?;
    let geom = *win.geometry();
    let image = fbp_reconstruct(&win, &geom, &filter)?;
    write_output_image(out, &image)?;
    println!("window {w}: {} rows -> {}", win.num_angles(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct TrainResolved<'a> {
    train: &'a TrainConfig,
    out: &'a Path,
    log_csv: &'a Path,
    eval_csv: &'a Path,
    resume: Option<&'a Path>,
}

pub fn train(a: &TrainArgs, print_only: bool) -> CliResult<()> {
    let mut c: TrainConfig = load_layered(a.config.as_deref())?;
    overlay(&mut c.dataset, a.dataset.clone());
    overlay(&mut c.model, a.model.map(|m| m.config()));
    overlay(&mut c.epochs, a.epochs);
    overlay(&mut c.batch_size, a.batch_size);
    overlay(&mut c.lr, a.lr);
    overlay(&mut c.seed, a.seed);
    set(&mut c.fixed_range, &a.fixed_range);
    set(&mut c.max_steps, &a.max_steps);
    c.validate().map_err(|e| usage(e.to_string()))?;
    let log_csv = a.log_csv.clone().unwrap_or_else(|| sibling(&a.out, "_log.csv"));
    let eval_csv = a.eval_csv.clone().unwrap_or_else(|| sibling(&a.out, "_eval.csv"));
    let resolved = TrainResolved {
        train: &c,
        out: &a.out,
        log_csv: &log_csv,
        eval_csv: &eval_csv,
        resume: a.resume.as_deref(),
    };
    if announce("train", &resolved, Some(c.seed), print_only) {
        return Ok(());
    }

    let data = Dataset::load(&c.dataset)?;
    let step = data.geometry().angle_step_deg;
    let (train, holdout) = data.split(c.holdout_fraction);
    let train = &train[..c.max_train_samples.unwrap_or(train.len()).min(train.len())];
    println!("training on {} samples, {} held out", train.len(), holdout.len());
    let mut trainer = match &a.resume {
        Some(p) => Trainer::resume(c.clone(), step, &Checkpoint::load(p)?)?,
        None => Trainer::new(c.clone(), step)?,
    };
    let outputs = Outputs { checkpoint: Some(a.out.clone()), log_csv: Some(log_csv), eval_csv: Some(eval_csv) };
    let history = trainer.fit(train, holdout, &outputs)?;
    if history.log.is_empty() {
        // Nothing left to train (resumed past the end); still leave a checkpoint.
        trainer.checkpoint().save(&a.out)?;
    }
    if let Some(last) = history.log.last() {
        println!("finished epoch {} at step {}: loss {:.6e}", last.epoch, last.step, last.loss);
    }
    println!("checkpoint: {}", a.out.display());
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ReconstructConfig {
    ckpt: Option<PathBuf>,
    sino: Option<PathBuf>,
    range: Option<String>,
    levels: String,
    start: f64,
    out: Option<PathBuf>,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        Self { ckpt: None, sino: None, range: None, levels: "1..7".into(), start: 0.0, out: None }
    }
}

fn load_model(path: &Path) -> CliResult<Model<f32>> {
    Ok(Checkpoint::load(path)?.restore()?.0)
}

pub fn reconstruct(a: &ReconstructArgs, print_only: bool) -> CliResult<()> {
    let mut c: ReconstructConfig = load_layered(a.config.as_deref())?;
    set(&mut c.ckpt, &a.ckpt);
    set(&mut c.sino, &a.sino);
    set(&mut c.range, &a.range);
    overlay(&mut c.levels, a.levels.clone());
    overlay(&mut c.start, a.start);
    set(&mut c.out, &a.out);
    if announce("reconstruct", &c, None, print_only) {
        return Ok(());
    }
    let ckpt = c.ckpt.as_ref().ok_or_else(|| usage("--ckpt is required"))?;
    let sino_path = c.sino.as_ref().ok_or_else(|| usage("--sino is required"))?;
    let out = c.out.as_ref().ok_or_else(|| usage("--out is required"))?;
    let mut model = load_model(ckpt)?;

    if !sino_path.is_dir() {
        let sino = io::read_sinogram(sino_path)?;
        let range = c.range.as_deref().ok_or_else(|| usage("--range is required for a single sinogram"))?;
        let w = parse_window(range)?;
        let image = reconstruct_batch(&mut model, &[(&sino, w)])?.remove(0);
        write_output_image(out, &image)?;
        println!("window {w}: {}x{0} image -> {}", image.size(), out.display());
        return Ok(());
    }

    let levels = parse_levels(&c.levels)?;
    let files = list_files(sino_path, "lasg")?;
    let sinos = files.iter().map(io::read_sinogram).collect::<Result<Vec<_>, _>>()?;
    let step = sinos.first().map(|s| s.geometry().angle_step_deg).unwrap_or(0.5);
    for level in levels {
        let span = lact_core::geometry::level_range_deg(level).expect("levels validated");
        let w = AngularWindow::span(c.start, c.start + span)?;
        w.check_grid(step)?;
        let dir = out.join(format!("level_{level}"));
        for (chunk_files, chunk) in files.chunks(lact_train::recon::EVAL_CHUNK).zip(sinos.chunks(lact_train::recon::EVAL_CHUNK)) {
            let items: Vec<_> = chunk.iter().map(|s| (s, w)).collect();
            for (path, image) in chunk_files.iter().zip(reconstruct_batch(&mut model, &items)?) {
                write_output_image(&dir.join(stem(path)).with_extension("laim"), &image)?;
            }
        }
        println!("level {level} ({span}°, window {w}): {} images -> {}", files.len(), dir.display());
    }
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string()
}

/// Files with extension `ext` directly inside `dir`, sorted by name.
fn list_files(dir: &Path, ext: &str) -> CliResult<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| lact_core::Error::io(dir, e))?;
    let mut files = Vec::new();
    for e in entries {
        let p = e.map_err(|e| lact_core::Error::io(dir, e))?.path();
        if p.is_file() && p.extension().and_then(|x| x.to_str()) == Some(ext) {
            files.push(p);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(lact_core::Error::Malformed {
            format: "directory",
            reason: format!("no .{ext} files in {}", dir.display()),
        }
        .into());
    }
    Ok(files)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct EvalConfig {
    pred: Option<PathBuf>,
    gt: Option<PathBuf>,
    levels: String,
    out: Option<PathBuf>,
    summary: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { pred: None, gt: None, levels: "1..7".into(), out: None, summary: None }
    }
}

pub fn eval(a: &EvalArgs, print_only: bool) -> CliResult<()> {
    let mut c: EvalConfig = load_layered(a.config.as_deref())?;
    set(&mut c.pred, &a.pred);
    set(&mut c.gt, &a.gt);
    overlay(&mut c.levels, a.levels.clone());
    set(&mut c.out, &a.out);
    set(&mut c.summary, &a.summary);
    if announce("eval", &c, None, print_only) {
        return Ok(());
    }
    let pred = c.pred.as_ref().ok_or_else(|| usage("--pred is required"))?;
    let gt = c.gt.as_ref().ok_or_else(|| usage("--gt is required"))?;
    let levels = parse_levels(&c.levels)?;
    let truth = list_files(gt, "laim")?;
    let gts = truth.iter().map(io::read_image).collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for level in levels {
        let span = lact_core::geometry::level_range_deg(level).expect("levels validated");
        let mut scores = Vec::with_capacity(gts.len());
        for (path, g) in truth.iter().zip(&gts) {
            let name = path.file_name().expect("listed files have names");
            let nested = pred.join(format!("level_{level}")).join(name);
            let p = io::read_image(if nested.is_file() { nested } else { pred.join(name) })?;
            let s = score_sample(&p, g)?;
            rows.push(MetricsRow {
                sample_id: stem(path),
                level: level as u32,
                range_deg: span,
                mcc: s.mcc,
                psnr_db: s.psnr_db,
                ssim: s.ssim,
            });
            scores.push(s);
        }
        let l = LevelScore::from_scores(level as u32, span, &scores);
        println!(
            "level {} ({}°): mcc_sum {:.4} psnr {:.2} dB ssim {:.4}",
            l.level, l.range_deg, l.mcc_sum, l.psnr_mean, l.ssim_mean
        );
        summary.push(l);
    }
    if let Some(out) = &c.out {
        write_csv(out, &rows)?;
    }
    if let Some(out) = &c.summary {
        write_csv(out, &summary)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SweepConfig {
    kind: Option<SweepKind>,
    ckpt: Vec<String>,
    eval: Option<PathBuf>,
    eval_count: usize,
    eval_seed: u64,
    start: Option<f64>,
    spans: String,
    offsets: String,
    range: f64,
    levels: String,
    train_config: Option<PathBuf>,
    sizes: String,
    steps: u64,
    out: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            kind: None,
            ckpt: Vec::new(),
            eval: None,
            eval_count: 100,
            eval_seed: 1000,
            start: None,
            spans: "30:90:0.5".into(),
            offsets: "0:20:2".into(),
            range: 30.0,
            levels: "1..7".into(),
            train_config: None,
            sizes: "250,500,1000,2000".into(),
            steps: 1000,
            out: None,
        }
    }
}

fn named_checkpoints(specs: &[String]) -> CliResult<Vec<(String, Model<f32>)>> {
    specs
        .iter()
        .map(|s| {
            let (name, path) = match s.split_once('=') {
                Some((n, p)) => (n.to_string(), PathBuf::from(p)),
                None => (stem(Path::new(s)), PathBuf::from(s)),
            };
            Ok((name, load_model(&path)?))
        })
        .collect()
}

pub fn sweep(a: &SweepArgs, print_only: bool) -> CliResult<()> {
    let mut c: SweepConfig = load_layered(a.config.as_deref())?;
    set(&mut c.kind, &a.kind);
    if !a.ckpt.is_empty() {
        c.ckpt = a.ckpt.clone();
    }
    set(&mut c.eval, &a.eval);
    overlay(&mut c.eval_count, a.eval_count);
    overlay(&mut c.eval_seed, a.eval_seed);
    set(&mut c.start, &a.start);
    overlay(&mut c.spans, a.spans.clone());
    overlay(&mut c.offsets, a.offsets.clone());
    overlay(&mut c.range, a.range);
    overlay(&mut c.levels, a.levels.clone());
    set(&mut c.train_config, &a.train_config);
    overlay(&mut c.sizes, a.sizes.clone());
    overlay(&mut c.steps, a.steps);
    set(&mut c.out, &a.out);
    if announce("sweep", &c, Some(c.eval_seed), print_only) {
        return Ok(());
    }
    let kind = c.kind.ok_or_else(|| usage("--kind is required"))?;
    let out = c.out.clone().ok_or_else(|| usage("--out is required"))?;
    let start = c.start.map(EvalStart::Fixed).unwrap_or(EvalStart::Seeded(c.eval_seed));

    match kind {
        SweepKind::Angular => {
            let mut models = single_model(&c)?;
            let eval = eval_set(&c, models.config())?;
            let spans = parse_steps(&c.spans)?;
            let (lo, hi) = (spans[0], *spans.last().expect("non-empty"));
            let step = if spans.len() > 1 { spans[1] - spans[0] } else { 1.0 };
            let angle_step = eval.geometry().angle_step_deg;
            let rows = sweeps::angular_sweep(
                &mut ModelReconstructor::new(&mut models),
                &eval.samples,
                (lo, hi, step),
                start,
                angle_step,
            )?;
            write_csv(&out, &rows)?;
        }
        SweepKind::Position => {
            let mut model = single_model(&c)?;
            let manifest = eval_manifest(&c, model.config())?;
            let offsets = parse_steps(&c.offsets)?;
            let rows =
                sweeps::position_sweep(&mut ModelReconstructor::new(&mut model), &manifest, &offsets, c.range, start)?;
            for r in &rows {
                println!("offset {:>5.1} px: mcc {:.4}", r.offset_px, r.mcc_mean);
            }
            write_csv(&out, &rows)?;
        }
        SweepKind::Crosses => {
            let mut models = named_checkpoints(&c.ckpt)?;
            let first = models.first().ok_or_else(|| usage("--ckpt is required"))?.1.config().clone();
            let manifest = eval_manifest(&c, &first)?;
            let standard = Dataset::generate(&manifest)?;
            let crosses = Dataset::generate(&sweeps::cross_only(&manifest))?;
            let step = standard.geometry().angle_step_deg;
            let sets = vec![("standard".to_string(), standard.samples), ("crosses".to_string(), crosses.samples)];
            let rows = sweeps::compare_models(&mut models, &sets, &parse_levels(&c.levels)?, start, step)?;
            write_csv(&out, &rows)?;
        }
        SweepKind::Datasize => {
            let path = c.train_config.as_ref().ok_or_else(|| usage("--train-config is required"))?;
            let base = TrainConfig::load(path)?;
            let data = Dataset::load(&base.dataset)?;
            let eval = eval_set(&c, &base.model)?;
            let sizes = c
                .sizes
                .split(',')
                .map(|s| s.trim().parse::<usize>().map_err(|_| usage(format!("bad size list {:?}", c.sizes))))
                .collect::<CliResult<Vec<_>>>()?;
            let rows = sweeps::datasize_sweep(&base, &data, &sizes, c.steps, &eval.samples, c.range, start)?;
            for r in &rows {
                println!("{} samples, {} steps: mcc {:.4}", r.train_size, r.steps, r.mcc_mean);
            }
            write_csv(&out, &rows)?;
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn single_model(c: &SweepConfig) -> CliResult<Model<f32>> {
    match c.ckpt.as_slice() {
        [one] => Ok(named_checkpoints(std::slice::from_ref(one))?.remove(0).1),
        _ => Err(usage("this sweep takes exactly one --ckpt")),
    }
}

/// The evaluation manifest: from `--eval DIR` when given, otherwise freshly
/// seeded at the model's scale.
fn eval_manifest(c: &SweepConfig, model: &lact_nn::ModelConfig) -> CliResult<DatasetManifest> {
    match &c.eval {
        Some(dir) => Ok(phantom::load_manifest(dir)?),
        None => Ok(scaled_manifest(c.eval_count, model.output_size, c.eval_seed, Some(model.input_cols))),
    }
}

fn eval_set(c: &SweepConfig, model: &lact_nn::ModelConfig) -> CliResult<Dataset> {
    match &c.eval {
        Some(dir) => Ok(Dataset::load(dir)?),
        None => Ok(Dataset::generate(&eval_manifest(c, model)?)?),
    }
}

fn overlay<T>(dst: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *dst = v;
    }
}

fn set<T: Clone>(dst: &mut Option<T>, flag: &Option<T>) {
    if flag.is_some() {
        dst.clone_from(flag);
    }
}
