//! The command implementations behind the `alsf` binary. Each returns its
//! report text so callers (and tests) can inspect it; [`exit_code`] maps
//! errors to process exit statuses.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};

use crate::bench::{run_bench, synthetic_model, BenchConfig, BenchReport};
use crate::classifier::{classify_grid, decide_image, learn_threshold, DecisionRule, PatchGrid};
use crate::data::synth::class_label;
use crate::data::{
    build_training_set, derive_seed, downsample, encode_png16, extract_grid_patches,
    extract_random_patches, load_image, subtract_patch_mean, synth_generate, to_grayscale, ImageBuffer, Patch,
    RegionMask,
};
use crate::error::{Error, Result};
use crate::io::{
    atomic_write, load_model, save_model, ChannelMode, CvConfig, Manifest, RuleConfig,
    Sampling, SynthConfig,
};
use crate::model::{AlsfModel, Hyperparams, ResidualMode, TrainingSet};
use crate::par::ExecPolicy;
use crate::trainer::{cross_validate, train_with, TrainReport};

/// Exit status for an error: 2 for configuration and argument problems,
/// 3 for data and file problems, 4 for numerical failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Manifest { .. }
        | Error::InvalidHyperparams(_)
        | Error::InvalidRule(_)
        | Error::DimensionError(_)
        | Error::WeightError(_) => 2,
        Error::Degenerate(_)
        | Error::NonFiniteInput(_)
        | Error::RankError(_)
        | Error::DegenerateInit(_) => 4,
        _ => 3,
    }
}

/// Options shared by every command.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Overrides the seed from manifests and configs.
    pub seed: Option<u64>,
    pub policy: ExecPolicy,
}

/// Converts to the requested channel count and optionally box-downsamples.
pub fn preprocess(
    img: &ImageBuffer,
    channels: ChannelMode,
    target: Option<(usize, usize)>,
) -> Result<ImageBuffer> {
    let img = match (channels, img.channels) {
        (ChannelMode::Gray, 3) => to_grayscale(img),
        (ChannelMode::Rgb, 1) => ImageBuffer::from_fn(img.width, img.height, 3, |x, y, _| {
            img.get(x, y, 0)
        })?,
        _ => img.clone(),
    };
    match target {
        Some((w, h)) => downsample(&img, w, h),
        None => Ok(img),
    }
}

fn load_preprocessed(
    path: &Path,
    channels: ChannelMode,
    target: Option<(usize, usize)>,
) -> Result<ImageBuffer> {
    preprocess(&load_image(path)?, channels, target)
}

fn image_mask(
    entry_mask: Option<&Path>,
    img: &ImageBuffer,
    manifest: &Manifest,
) -> Result<Option<RegionMask>> {
    match entry_mask {
        Some(p) => {
            let mut mask = RegionMask::load(p)?;
            if (mask.width, mask.height) != (img.width, img.height) {
                mask = mask.downsample(img.width, img.height)?;
            }
            Ok(Some(mask))
        }
        None if manifest.center_mask => Ok(Some(RegionMask::centered(img.width, img.height))),
        None => Ok(None),
    }
}

/// Patches of every training image of every class. Random sampling spreads
/// `patches_per_class` over a class's images, each image drawing from its
/// own seed derived from `seed`, its class, position and file name.
pub fn manifest_training_set(manifest: &Manifest, seed: u64) -> Result<TrainingSet> {
    let size = manifest.patch_size;
    let mut per_class: Vec<Vec<Patch>> = Vec::with_capacity(manifest.classes.len());
    for class in &manifest.classes {
        let n_images = class.train.len();
        let mut patches = Vec::new();
        for (i, entry) in class.train.iter().enumerate() {
            let img = load_preprocessed(&entry.path, manifest.channels, manifest.downsample)?;
            match manifest.sampling {
                Sampling::Grid => patches.extend(extract_grid_patches(&img, size)?.patches),
                Sampling::Random => {
                    let base = manifest.patches_per_class / n_images;
                    let n = base + usize::from(i < manifest.patches_per_class % n_images);
                    if n == 0 {
                        continue;
                    }
                    let mask = image_mask(entry.mask.as_deref(), &img, manifest)?;
                    // Location-independent, so a moved dataset samples the same patches.
                    let file = entry.path.file_name().unwrap_or_default().to_string_lossy();
                    let key = format!("{}/{i}/{file}", class.name);
                    patches.extend(extract_random_patches(
                        &img,
                        n,
                        size,
                        mask.as_ref(),
                        derive_seed(seed, &key),
                    )?);
                }
            }
        }
        if manifest.subtract_patch_mean {
            patches.iter_mut().for_each(subtract_patch_mean);
        }
        per_class.push(patches);
    }
    build_training_set(&per_class, manifest.class_names())
}

fn load_hyperparams(config: Option<&Path>) -> Result<Hyperparams> {
    let hp = match config {
        Some(p) => crate::io::load_toml(p)?,
        None => Hyperparams::default(),
    };
    hp.validate()?;
    Ok(hp)
}

fn report_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".report.txt");
    PathBuf::from(s)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: AlsfModel,
    pub report: TrainReport,
    pub report_path: PathBuf,
    /// Report text; everything before the `[timings]` line is deterministic.
    pub report_text: String,
}

/// Loads the manifest's training patches, trains, and writes the model file
/// plus `<out>.report.txt`.
pub fn cmd_train(
    manifest_path: &Path,
    config: Option<&Path>,
    out: &Path,
    opts: &RunOptions,
) -> Result<TrainOutcome> {
    let mut hp = load_hyperparams(config)?;
    let manifest = Manifest::load(manifest_path)?;
    let seed = opts.seed.unwrap_or(manifest.seed);
    if let Some(s) = opts.seed {
        hp.seed = s;
    }

    let t0 = Instant::now();
    let data = manifest_training_set(&manifest, seed)?;
    let load_secs = t0.elapsed().as_secs_f64();
    info!(
        "{} classes, {} patches of dimension {}",
        data.num_classes(),
        data.total(),
        data.dim()
    );

    let t1 = Instant::now();
    let (model, report) = train_with(&data, &hp, opts.policy)?;
    let train_secs = t1.elapsed().as_secs_f64();
    save_model(&model, out)?;

    let mut text = String::new();
    let _ = writeln!(text, "patch_dimension = {}", data.dim());
    for (c, label) in data.labels.iter().enumerate() {
        let _ = writeln!(
            text,
            "class {label}: {} patches, D {}x{}, A {}x{}",
            data.per_class[c].ncols(),
            model.class_dicts[c].nrows(),
            model.class_dicts[c].ncols(),
            model.class_analysis[c].nrows(),
            model.class_analysis[c].ncols()
        );
    }
    let _ = writeln!(
        text,
        "shared: D0 {}x{}, A0 {}x{}",
        model.shared_dict.nrows(),
        model.shared_dict.ncols(),
        model.shared_analysis.nrows(),
        model.shared_analysis.ncols()
    );
    let hp_toml = toml::to_string(&hp).map_err(|e| Error::Config(e.to_string()))?;
    let _ = writeln!(text, "\n[hyperparams]\n{hp_toml}");
    let _ = writeln!(text, "[objective]");
    let _ = writeln!(text, "iterations = {}", report.iterations_run);
    let _ = writeln!(text, "stop_reason = {:?}", report.stop_reason);
    for (i, v) in report.objective_trace.iter().enumerate() {
        let _ = writeln!(text, "{i} {v:.12e}");
    }
    let _ = writeln!(text, "\n[timings]");
    let _ = writeln!(text, "load_seconds = {load_secs:.3}");
    let _ = writeln!(text, "train_seconds = {train_secs:.3}");

    let rpath = report_path(out);
    atomic_write(&rpath, text.as_bytes())?;
    Ok(TrainOutcome {
        model,
        report,
        report_path: rpath,
        report_text: text,
    })
}

/// How test images are turned into patch columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSettings {
    pub patch_size: usize,
    pub channels: ChannelMode,
    pub downsample: Option<(usize, usize)>,
    pub subtract_patch_mean: bool,
    pub residual_mode: ResidualMode,
}

impl GridSettings {
    pub fn from_manifest(m: &Manifest) -> Self {
        GridSettings {
            patch_size: m.patch_size,
            channels: m.channels,
            downsample: m.downsample,
            subtract_patch_mean: m.subtract_patch_mean,
            residual_mode: ResidualMode::default(),
        }
    }

    pub fn from_rule(r: &RuleConfig) -> Self {
        GridSettings {
            patch_size: r.patch_size,
            channels: r.channels,
            downsample: r.downsample.map(|[w, h]| (w, h)),
            subtract_patch_mean: r.subtract_patch_mean,
            residual_mode: r.residual_mode,
        }
    }
}

/// Grid-classifies one image.
pub fn image_grid(
    path: &Path,
    model: &AlsfModel,
    settings: &GridSettings,
    policy: ExecPolicy,
) -> Result<PatchGrid> {
    let img = load_preprocessed(path, settings.channels, settings.downsample)?;
    let mut batch = extract_grid_patches(&img, settings.patch_size)?;
    if settings.subtract_patch_mean {
        batch.patches.iter_mut().for_each(subtract_patch_mean);
    }
    let mode = settings.residual_mode;
    classify_grid(&batch.to_matrix(), batch.rows, batch.cols, model, mode, policy)
}

fn positive_index(model: &AlsfModel, name: Option<&str>) -> Result<usize> {
    match name {
        Some(n) => model
            .labels
            .iter()
            .position(|l| l == n)
            .ok_or_else(|| Error::Data(format!("model has no class {n}"))),
        None => Ok(model.num_classes() - 1),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "tif" | "tiff"))
        .unwrap_or(false)
}

/// The input itself, or the PNG/TIFF files directly inside a directory,
/// sorted by path.
fn list_images(input: &Path) -> Result<Vec<PathBuf>> {
    if !input.is_dir() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut out = Vec::new();
    for entry in std::fs::read_dir(input).map_err(|e| Error::io(input, e))? {
        let p = entry.map_err(|e| Error::io(input, e))?.path();
        if p.is_file() && is_image(&p) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

pub const CLASSIFY_HEADER: &str =
    "path,grid_rows,grid_cols,positive_ratio,largest_region,rule_score,decision,error";

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyOutcome {
    pub csv: String,
    pub succeeded: usize,
    pub failed: usize,
}

/// Classifies every image and renders one CSV row per image, sorted by
/// path. Unreadable images get an error row; the command fails only when
/// no image succeeds.
pub fn cmd_classify(
    model_path: &Path,
    input: &Path,
    rule_cfg: &RuleConfig,
    opts: &RunOptions,
) -> Result<ClassifyOutcome> {
    let model = load_model(model_path)?;
    let pos = positive_index(&model, rule_cfg.positive_class.as_deref())?;
    let rule = DecisionRule::new(rule_cfg.kind, pos, rule_cfg.threshold)?;
    let settings = GridSettings::from_rule(rule_cfg);
    let mut paths = list_images(input)?;
    paths.sort_by(|a, b| a.to_string_lossy().cmp(&b.to_string_lossy()));

    let mut csv = format!("{CLASSIFY_HEADER}\n");
    let (mut succeeded, mut failed) = (0, 0);
    for path in &paths {
        let name = csv_field(&path.to_string_lossy());
        let result = image_grid(path, &model, &settings, opts.policy)
        .and_then(|grid| {
            let ratio = crate::classifier::score_ratio(&grid, pos)?;
            let region = crate::classifier::score_largest_region(&grid, pos)?;
            let decision = decide_image(&grid, &rule)?;
            Ok((grid, ratio, region, decision))
        });
        match result {
            Ok((grid, ratio, region, decision)) => {
                succeeded += 1;
                let label = if decision.positive {
                    model.labels[pos].clone()
                } else {
                    "negative".to_string()
                };
                let _ = writeln!(
                    csv,
                    "{name},{},{},{ratio:.6},{region},{:.6},{},",
                    grid.rows,
                    grid.cols,
                    decision.score,
                    csv_field(&label)
                );
            }
            Err(e) => {
                failed += 1;
                warn!("{}: {e}", path.display());
                let _ = writeln!(csv, "{name},,,,,,,{}", csv_field(&e.to_string()));
            }
        }
    }
    if succeeded == 0 {
        return Err(Error::Data(format!(
            "no readable images under {}",
            input.display()
        )));
    }
    Ok(ClassifyOutcome {
        csv,
        succeeded,
        failed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub report: String,
    /// Row-normalized: `confusion[true][predicted]`.
    pub confusion: Vec<Vec<f64>>,
    pub threshold: f64,
}

/// Learns the image-level threshold on the manifest's training images and
/// reports the row-normalized confusion matrix on its test images.
/// Requires exactly two classes whose names match the model's labels.
pub fn cmd_eval(model_path: &Path, manifest_path: &Path, opts: &RunOptions) -> Result<EvalOutcome> {
    let model = load_model(model_path)?;
    let manifest = Manifest::load(manifest_path)?;
    let names = manifest.class_names();
    if names != model.labels {
        return Err(Error::Data(format!(
            "manifest classes {names:?} do not match model labels {:?}",
            model.labels
        )));
    }
    if names.len() != 2 {
        return Err(Error::Data(format!(
            "evaluation needs exactly 2 classes, got {}",
            names.len()
        )));
    }
    let pos = manifest.positive_index();
    let neg = 1 - pos;
    let base = manifest_path.parent().unwrap_or(Path::new(""));
    let shown = |p: &Path| csv_field(&p.strip_prefix(base).unwrap_or(p).to_string_lossy());
    let settings = GridSettings::from_manifest(&manifest);
    let score = |path: &Path| -> Result<f64> {
        let grid = image_grid(path, &model, &settings, opts.policy)?;
        DecisionRule::new(manifest.rule, pos, f64::INFINITY)?.score(&grid)
    };

    let mut rows = String::new();
    let mut train_scores = Vec::new();
    let mut train_pos = Vec::new();
    for (c, class) in manifest.classes.iter().enumerate() {
        for entry in &class.train {
            let s = score(&entry.path)?;
            train_scores.push(s);
            train_pos.push(c == pos);
            let _ = writeln!(
                rows,
                "{},train,{},{s:.6},",
                shown(&entry.path),
                class.name
            );
        }
    }
    let fit = learn_threshold(&train_scores, &train_pos)?;
    let rule = DecisionRule::from_learned(manifest.rule, pos, fit.threshold)?;

    let mut counts = vec![vec![0usize; 2]; 2];
    for (c, class) in manifest.classes.iter().enumerate() {
        if class.test.is_empty() {
            return Err(Error::Data(format!("class {} has no test images", class.name)));
        }
        for path in &class.test {
            let s = score(path)?;
            let predicted = if s > rule.threshold { pos } else { neg };
            counts[c][predicted] += 1;
            let _ = writeln!(
                rows,
                "{},test,{},{s:.6},{}",
                shown(path),
                class.name,
                names[predicted]
            );
        }
    }
    let confusion: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            row.iter().map(|&n| n as f64 / total as f64).collect()
        })
        .collect();

    let mut report = String::new();
    let _ = writeln!(report, "# rule = {}", manifest.rule.as_str());
    let _ = writeln!(report, "# positive_class = {}", names[pos]);
    let _ = writeln!(report, "# threshold = {}", rule.threshold);
    let _ = writeln!(
        report,
        "# train_balanced_accuracy = {:.6}",
        fit.balanced_accuracy
    );
    let _ = writeln!(report, "true\\predicted,{}", names.join(","));
    for (c, row) in confusion.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
        let _ = writeln!(report, "{},{}", names[c], cells.join(","));
    }
    let _ = writeln!(report, "\npath,split,true_class,score,predicted_class");
    report.push_str(&rows);
    Ok(EvalOutcome {
        report,
        confusion,
        threshold: rule.threshold,
    })
}

/// Shape of the model generated when `cmd_bench` gets no model file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchShape {
    pub classes: usize,
    pub k_per_class: usize,
    pub k_shared: usize,
}

impl Default for BenchShape {
    fn default() -> Self {
        BenchShape {
            classes: 2,
            k_per_class: 400,
            k_shared: 100,
        }
    }
}

/// Times analysis-operator classification against the coordinate-descent
/// baseline, on a loaded model or a synthetic one of dimension `d`.
pub fn cmd_bench(
    model_path: Option<&Path>,
    d: usize,
    shape: BenchShape,
    cfg: &BenchConfig,
) -> Result<BenchReport> {
    if cfg.n_patches == 0 || cfg.repetitions == 0 {
        return Err(Error::DimensionError(
            "n_patches and repetitions must be positive".into(),
        ));
    }
    let model = match model_path {
        Some(p) => {
            let m = load_model(p)?;
            if d != 0 && d != m.dim() {
                return Err(Error::DimensionError(format!(
                    "requested d = {d}, model has d = {}",
                    m.dim()
                )));
            }
            m
        }
        None => {
            if d == 0 {
                return Err(Error::DimensionError("d must be positive".into()));
            }
            synthetic_model(d, shape.classes, shape.k_per_class, shape.k_shared, cfg.seed)?
        }
    };
    run_bench(&model, cfg)
}

fn grid_shape(n: usize) -> (usize, usize) {
    let mut rows = (n as f64).sqrt().floor() as usize;
    while rows > 1 && !n.is_multiple_of(rows) {
        rows -= 1;
    }
    let rows = rows.max(1);
    (rows, n / rows)
}

/// Tiles `side x side` patches (columns of `y`, column-major vectorized)
/// into a `rows x cols` mosaic.
fn mosaic(y: &crate::Matrix, rows: usize, cols: usize, side: usize, scale: f64) -> Result<ImageBuffer> {
    ImageBuffer::from_fn(cols * side, rows * side, 1, |x, yy, _| {
        let tile = (yy / side) * cols + x / side;
        let (r, c) = (yy % side, x % side);
        (0.5 + scale * y[(c * side + r, tile)]).clamp(0.0, 1.0)
    })
}

fn write_png(path: &Path, img: &ImageBuffer) -> Result<()> {
    atomic_write(path, &encode_png16(img)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutcome {
    pub manifest: PathBuf,
    pub hyperparams: PathBuf,
    pub images: Vec<PathBuf>,
}

/// Hyperparameters suggested for a synthetic dataset when the config has
/// none: a few atoms per true subspace dimension.
pub fn suggested_hyperparams(cfg: &SynthConfig) -> Hyperparams {
    Hyperparams {
        k_per_class: 4 * cfg.spec.class_subspace_dim,
        k_shared: (2 * cfg.spec.shared_subspace_dim + 2).min(cfg.spec.d),
        seed: cfg.spec.seed,
        ..Hyperparams::default()
    }
}

/// Renders synthetic samples as 16-bit grayscale mosaics: every patch is a
/// `sqrt(d) x sqrt(d)` tile with pixel value `0.5 + intensity_scale * v`.
/// Training mosaics hold `patches_per_class` tiles per class; test mosaics
/// hold `test_tiles^2` fresh samples each. Also writes the manifest
/// (grid sampling, patch mean removal, ratio rule, last class positive) and `hyperparams.toml`
/// next to it.
pub fn cmd_synth(cfg: &SynthConfig, out_manifest: &Path, opts: &RunOptions) -> Result<SynthOutcome> {
    let mut spec = cfg.spec.clone();
    if let Some(s) = opts.seed {
        spec.seed = s;
    }
    spec.validate()?;
    let layout = &cfg.layout;
    let side = (spec.d as f64).sqrt().round() as usize;
    if side * side != spec.d || side < 2 {
        return Err(Error::DimensionError(format!(
            "d = {} must be a square of at least 4 to render tiles",
            spec.d
        )));
    }
    if layout.train_images_per_class == 0
        || layout.train_images_per_class > spec.patches_per_class
        || layout.test_images_per_class == 0
        || layout.test_tiles == 0
    {
        return Err(Error::DimensionError(format!(
            "invalid layout {layout:?} for {} patches per class",
            spec.patches_per_class
        )));
    }
    if !(layout.intensity_scale.is_finite() && layout.intensity_scale > 0.0) {
        return Err(Error::DimensionError("intensity_scale must be positive".into()));
    }

    let n_train = spec.patches_per_class;
    let per_test = layout.test_tiles * layout.test_tiles;
    let n_test = per_test * layout.test_images_per_class;
    let data = synth_generate(&crate::data::SynthSpec {
        patches_per_class: n_train + n_test,
        ..spec.clone()
    })?;

    let base = match out_manifest.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let img_dir = base.join("images");
    std::fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;

    let mut manifest = Manifest {
        patch_size: side,
        patches_per_class: n_train,
        sampling: Sampling::Grid,
        subtract_patch_mean: true,
        positive_class: Some(class_label(spec.classes - 1)),
        seed: spec.seed,
        ..Manifest::default()
    };
    let mut images = Vec::new();
    let n_img = layout.train_images_per_class;
    for (c, y) in data.set.per_class.iter().enumerate() {
        let mut entry = crate::io::ClassEntry {
            name: class_label(c),
            train: Vec::new(),
            test: Vec::new(),
        };
        let mut at = 0;
        for i in 0..n_img {
            let n = n_train / n_img + usize::from(i < n_train % n_img);
            let (rows, cols) = grid_shape(n);
            let img = mosaic(&y.columns(at, n).into_owned(), rows, cols, side, layout.intensity_scale)?;
            at += n;
            let path = img_dir.join(format!("{}_train_{i:03}.png", entry.name));
            write_png(&path, &img)?;
            entry.train.push(crate::io::ImageEntry {
                path: path.clone(),
                mask: None,
            });
            images.push(path);
        }
        for i in 0..layout.test_images_per_class {
            let cols = y.columns(n_train + i * per_test, per_test).into_owned();
            let img = mosaic(&cols, layout.test_tiles, layout.test_tiles, side, layout.intensity_scale)?;
            let path = img_dir.join(format!("{}_test_{i:03}.png", entry.name));
            write_png(&path, &img)?;
            entry.test.push(path.clone());
            images.push(path);
        }
        manifest.classes.push(entry);
    }
    atomic_write(out_manifest, manifest.render(&base).as_bytes())?;

    let hp = cfg
        .hyperparams
        .clone()
        .unwrap_or_else(|| suggested_hyperparams(cfg));
    let hp_path = base.join("hyperparams.toml");
    let hp_text = toml::to_string(&hp).map_err(|e| Error::Config(e.to_string()))?;
    atomic_write(&hp_path, hp_text.as_bytes())?;
    Ok(SynthOutcome {
        manifest: out_manifest.to_path_buf(),
        hyperparams: hp_path,
        images,
    })
}

/// Cross-validates the config's hyperparameter grid on the manifest's
/// training patches; returns a CSV of per-fold accuracies.
pub fn cmd_cv(manifest_path: &Path, cfg: &CvConfig, opts: &RunOptions) -> Result<String> {
    let manifest = Manifest::load(manifest_path)?;
    let seed = opts.seed.unwrap_or(manifest.seed);
    let data = manifest_training_set(&manifest, seed)?;
    let result = cross_validate(&data, &cfg.grid, cfg.folds, opts.seed.unwrap_or(cfg.seed), opts.policy)?;
    let mut out = String::new();
    let _ = writeln!(out, "# best_index = {}", result.best_index);
    let folds: Vec<String> = (0..cfg.folds).map(|f| format!("fold{f}")).collect();
    let _ = writeln!(out, "index,eta,k_per_class,k_shared,mean_accuracy,{}", folds.join(","));
    for (g, hp) in cfg.grid.iter().enumerate() {
        let scores: Vec<String> = result.scores[g].iter().map(|s| format!("{s:.6}")).collect();
        let _ = writeln!(
            out,
            "{g},{},{},{},{:.6},{}",
            hp.eta,
            hp.k_per_class,
            hp.k_shared,
            result.mean_scores[g],
            scores.join(",")
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_category() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::DimensionError("x".into())), 2);
        assert_eq!(exit_code(&Error::Data("x".into())), 3);
        assert_eq!(exit_code(&Error::ChecksumFailure), 3);
        assert_eq!(exit_code(&Error::Degenerate("x".into())), 4);
    }

    #[test]
    fn grid_shapes_are_exact() {
        assert_eq!(grid_shape(100), (10, 10));
        assert_eq!(grid_shape(12), (3, 4));
        assert_eq!(grid_shape(7), (1, 7));
        assert_eq!(grid_shape(1), (1, 1));
    }

    #[test]
    fn mosaic_tiles_devectorize() {
        // Two 2x2 tiles side by side; column-major vectors.
        let y = crate::Matrix::from_column_slice(4, 2, &[0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]);
        let img = mosaic(&y, 1, 2, 2, 1.0).unwrap();
        assert_eq!((img.width, img.height), (4, 2));
        assert!((img.get(1, 0, 0) - 0.7).abs() < 1e-12);
        assert!((img.get(0, 1, 0) - 0.6).abs() < 1e-12);
        assert!((img.get(3, 1, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_field("a.png"), "a.png");
        assert_eq!(csv_field("a,b"), "\"a,b\"");
    }
}
