//! Command implementations and the two-phase error model: anything caught
//! before work starts is a usage problem (exit 1); anything after is a
//! runtime failure (exit 2) and still leaves a `run.json` behind.

use crate::cli::*;
use crate::plot::{plot_loss_curves, render_heatmap, HeatScale};
use crate::provenance::{digest_dir_listing, digest_file, RunRecord};
use anyhow::{anyhow, Context};
use fabtwin::dataset::TrainDataset;
use fabtwin::fab::{fab_batch, FabParams};
use fabtwin::manifest::{require_valid, DatasetManifest, ManifestPair};
use fabtwin::metrics::{compute_report, decompose_uncertainty};
use fabtwin::nn::checkpoint::{load_model, save_unet, LoadedModel};
use fabtwin::raster::{BitMask, GrayImage};
use fabtwin::rng::RngSeed;
use fabtwin::synth::{make_eval_structure, synth_fourier_pattern, StructureKind, SynthSpec};
use fabtwin::train::{
    read_loss_csv, train_ensemble, train_genfab, train_unet, write_loss_csv, TrainConfig,
};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Dropout probability baked into the `train mcdropout` baseline.
pub const MC_DROPOUT_P: f64 = 0.1;

#[derive(Debug)]
pub enum CmdError {
    /// Bad arguments or inputs, caught before any work: exit 1.
    Validation(anyhow::Error),
    /// Failure while doing the work: exit 2.
    Runtime(anyhow::Error),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Validation(_) => 1,
            CmdError::Runtime(_) => 2,
        }
    }

    pub fn inner(&self) -> &anyhow::Error {
        match self {
            CmdError::Validation(e) | CmdError::Runtime(e) => e,
        }
    }
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.inner())
    }
}

trait Stage<T> {
    fn invalid(self) -> Result<T, CmdError>;
    fn runtime(self) -> Result<T, CmdError>;
}

impl<T, E: Into<anyhow::Error>> Stage<T> for Result<T, E> {
    fn invalid(self) -> Result<T, CmdError> {
        self.map_err(|e| CmdError::Validation(e.into()))
    }

    fn runtime(self) -> Result<T, CmdError> {
        self.map_err(|e| CmdError::Runtime(e.into()))
    }
}

fn invalid(msg: String) -> CmdError {
    CmdError::Validation(anyhow!(msg))
}

pub fn dispatch(cmd: Command) -> Result<(), CmdError> {
    match cmd {
        Command::GenData(GenDataCmd::Synth(a)) => gen_data_synth(a),
        Command::GenData(GenDataCmd::Structures(a)) => gen_data_structures(a),
        Command::Fab(FabCmd::Simulate(a)) => fab_simulate(a),
        Command::Train(t) => train(t),
        Command::Generate(a) => generate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Uncertainty(a) => uncertainty(a),
        Command::Plot(PlotCmd::Losses(a)) => plot_losses(a),
        Command::Plot(PlotCmd::Heatmap(a)) => plot_heatmap(a),
    }
}

/// Run `body` and write the run record afterwards, success or not, so the
/// directory always tells what happened last.
fn run_recorded(
    dir: &Path,
    mut record: RunRecord,
    body: impl FnOnce(&mut RunRecord) -> Result<(), CmdError>,
) -> Result<(), CmdError> {
    let result = body(&mut record);
    if let Err(e) = &result {
        record.status = format!("error: {e}");
    }
    match record.write(dir) {
        Ok(()) => result,
        Err(w) => result.and(Err(CmdError::Runtime(w))),
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CmdError> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .invalid()
}

fn parent_dir(file: &Path) -> PathBuf {
    match file.parent() {
        Some(p) if p.as_os_str().is_empty() => PathBuf::from("."),
        Some(p) => p.to_path_buf(),
        None => PathBuf::from("."),
    }
}

fn load_bitmask(path: &Path) -> anyhow::Result<BitMask> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    BitMask::from_png_bytes(&bytes).with_context(|| format!("decoding {}", path.display()))
}

fn load_gray(path: &Path) -> anyhow::Result<GrayImage> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    GrayImage::from_png_bytes(&bytes).with_context(|| format!("decoding {}", path.display()))
}

fn write_mask_png(mask: &BitMask, path: &Path) -> anyhow::Result<()> {
    let bytes = mask.to_png_bytes()?;
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_gray_png(img: &GrayImage, path: &Path) -> anyhow::Result<()> {
    let bytes = img.to_png_bytes()?;
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn png_files_sorted(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("png") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn load_or_new_manifest(dir: &Path) -> Result<DatasetManifest, CmdError> {
    let path = dir.join("manifest.json");
    if path.exists() {
        DatasetManifest::load(&path)
            .with_context(|| format!("loading {}", path.display()))
            .invalid()
    } else {
        Ok(DatasetManifest::new(1.0))
    }
}

/// Insert or replace the pair for `layout_path`.
fn upsert_pair(man: &mut DatasetManifest, pair: ManifestPair) {
    match man.pairs.iter_mut().find(|p| p.layout_path == pair.layout_path) {
        Some(existing) => *existing = pair,
        None => man.pairs.push(pair),
    }
}

// ---------------------------------------------------------------- gen-data

fn gen_data_synth(a: SynthArgs) -> Result<(), CmdError> {
    if a.count == 0 {
        return Err(invalid("count must be at least 1".into()));
    }
    let mut spec = match &a.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))
                .invalid()?;
            serde_json::from_str::<SynthSpec>(&text)
                .with_context(|| format!("parsing {}", p.display()))
                .invalid()?
        }
        None => SynthSpec::default(),
    };
    if let Some(size) = a.size {
        spec.size = size;
    }
    spec.validate().invalid()?;
    ensure_dir(&a.out)?;
    let mut manifest = load_or_new_manifest(&a.out)?;

    let mut record = RunRecord::new("gen-data synth");
    record.seed("seed", a.seed).config(&spec);
    run_recorded(&a.out, record, |rec| {
        let root = RngSeed(a.seed);
        let masks: Vec<BitMask> = (0..a.count)
            .into_par_iter()
            .map(|i| synth_fourier_pattern(&spec, root.child("layout", i as u64)))
            .collect::<Result<_, _>>()
            .runtime()?;
        for (i, mask) in masks.iter().enumerate() {
            let name = format!("layout_{i:03}.png");
            let path = a.out.join(&name);
            write_mask_png(mask, &path).runtime()?;
            upsert_pair(
                &mut manifest,
                ManifestPair {
                    layout_path: name,
                    fabricated_paths: Vec::new(),
                    structure_id: format!("fourier{i:03}"),
                    seed: root.child("layout", i as u64).0,
                },
            );
            rec.artifact(&path).runtime()?;
        }
        let man_path = a.out.join("manifest.json");
        manifest.save(&man_path).runtime()?;
        rec.artifact(&man_path).runtime()?;
        Ok(())
    })
}

fn gen_data_structures(a: StructuresArgs) -> Result<(), CmdError> {
    let kind: StructureKind = a.kind.parse().invalid()?;
    let mask = make_eval_structure(kind, a.canvas).invalid()?;
    ensure_dir(&a.out)?;
    let mut manifest = load_or_new_manifest(&a.out)?;

    let mut record = RunRecord::new("gen-data structures");
    record.config(&serde_json::json!({ "kind": kind.id(), "canvas": a.canvas }));
    run_recorded(&a.out, record, |rec| {
        let name = format!("{}.png", kind.id());
        let path = a.out.join(&name);
        write_mask_png(&mask, &path).runtime()?;
        upsert_pair(
            &mut manifest,
            ManifestPair {
                layout_path: name,
                fabricated_paths: Vec::new(),
                structure_id: kind.id().to_string(),
                seed: 0,
            },
        );
        let man_path = a.out.join("manifest.json");
        manifest.save(&man_path).runtime()?;
        rec.artifact(&path).runtime()?;
        rec.artifact(&man_path).runtime()?;
        Ok(())
    })
}

// --------------------------------------------------------------------- fab

fn fab_simulate(a: SimulateArgs) -> Result<(), CmdError> {
    if a.samples == 0 {
        return Err(invalid("samples must be at least 1".into()));
    }
    let layout = load_bitmask(&a.layout).invalid()?;
    let params = match &a.params {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))
                .invalid()?;
            serde_json::from_str::<FabParams>(&text)
                .with_context(|| format!("parsing {}", p.display()))
                .invalid()?
        }
        None => FabParams::default(),
    };
    params.validate().invalid()?;
    ensure_dir(&a.out)?;
    let mut manifest = load_or_new_manifest(&a.out)?;
    let stem = a
        .layout
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("layout")
        .to_string();
    // Reference the layout by bare name when it already sits in the output
    // directory, by absolute path otherwise, so the manifest resolves.
    let layout_ref = {
        let in_out = a.layout.parent().is_some_and(|p| {
            match (std::fs::canonicalize(p), std::fs::canonicalize(&a.out)) {
                (Ok(x), Ok(y)) => x == y,
                _ => false,
            }
        });
        if in_out {
            a.layout.file_name().and_then(|n| n.to_str()).unwrap_or("layout.png").to_string()
        } else {
            let abs = std::fs::canonicalize(&a.layout)
                .with_context(|| format!("resolving {}", a.layout.display()))
                .invalid()?;
            abs.to_string_lossy().into_owned()
        }
    };

    let mut record = RunRecord::new("fab simulate");
    record.seed("seed", a.seed).config(&params);
    run_recorded(&a.out, record, |rec| {
        let outcomes = fab_batch(&layout, a.samples, &params, RngSeed(a.seed)).runtime()?;
        let mut names = Vec::with_capacity(outcomes.len());
        for (i, mask) in outcomes.iter().enumerate() {
            let name = format!("{stem}_s{}_fab{i:03}.png", a.seed);
            let path = a.out.join(&name);
            write_mask_png(mask, &path).runtime()?;
            rec.artifact(&path).runtime()?;
            names.push(name);
        }
        match manifest.pairs.iter_mut().find(|p| p.layout_path == layout_ref) {
            Some(pair) => {
                for n in names {
                    if !pair.fabricated_paths.contains(&n) {
                        pair.fabricated_paths.push(n);
                    }
                }
            }
            None => manifest.pairs.push(ManifestPair {
                layout_path: layout_ref.clone(),
                fabricated_paths: names,
                structure_id: stem.clone(),
                seed: a.seed,
            }),
        }
        let man_path = a.out.join("manifest.json");
        manifest.save(&man_path).runtime()?;
        rec.artifact(&man_path).runtime()?;
        Ok(())
    })
}

// ------------------------------------------------------------------- train

fn member_ckpt_path(out: &Path, m: usize) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    let ext = out.extension().and_then(|s| s.to_str()).unwrap_or("gfck");
    out.with_file_name(format!("{stem}.member{m:02}.{ext}"))
}

fn train(cmd: TrainCmd) -> Result<(), CmdError> {
    let (kind, args, members) = match cmd {
        TrainCmd::Genfab(a) => ("genfab", a, None),
        TrainCmd::Unet(a) => ("unet", a, None),
        TrainCmd::Mcdropout(a) => ("mcdropout", a, None),
        TrainCmd::Ensemble(e) => ("ensemble", e.train, Some(e.members)),
    };
    if members == Some(0) {
        return Err(invalid("members must be at least 1".into()));
    }
    let manifest = DatasetManifest::load(&args.data)
        .with_context(|| format!("loading {}", args.data.display()))
        .invalid()?;
    let base_dir = parent_dir(&args.data);
    require_valid(&manifest, &base_dir).invalid()?;
    let data = TrainDataset::from_manifest(&manifest, &base_dir).invalid()?;
    let mut cfg = match &args.config {
        Some(p) => TrainConfig::load(p)
            .with_context(|| format!("loading {}", p.display()))
            .invalid()?,
        None => TrainConfig::default(),
    };
    cfg.checkpoint_path = Some(args.out.clone());
    cfg.validate().invalid()?;
    if data.input_size != cfg.generator.input_size {
        return Err(invalid(format!(
            "dataset images are {0}x{0} but the model expects {1}x{1}",
            data.input_size, cfg.generator.input_size
        )));
    }
    let out_dir = parent_dir(&args.out);
    ensure_dir(&out_dir)?;

    let mut record = RunRecord::new(&format!("train {kind}"));
    record.seed("seed", cfg.seed);
    match kind {
        "mcdropout" => {
            record.config(&serde_json::json!({ "train": cfg, "dropout_p": MC_DROPOUT_P }))
        }
        "ensemble" => {
            record.config(&serde_json::json!({ "train": cfg, "members": members.unwrap() }))
        }
        _ => record.config(&cfg),
    };
    run_recorded(&out_dir, record, |rec| {
        match kind {
            "genfab" => {
                let out = train_genfab(&data, &cfg).runtime()?;
                let csv = args.out.with_extension("loss.csv");
                write_loss_csv(&csv, &out.log).runtime()?;
                rec.artifact(&args.out).runtime()?;
                rec.loss_artifact(&csv).runtime()?;
            }
            "unet" | "mcdropout" => {
                let p = if kind == "mcdropout" { MC_DROPOUT_P } else { 0.0 };
                let (_net, log) = train_unet(&data, &cfg, p, RngSeed(cfg.seed)).runtime()?;
                let csv = args.out.with_extension("loss.csv");
                write_loss_csv(&csv, &log).runtime()?;
                rec.artifact(&args.out).runtime()?;
                rec.loss_artifact(&csv).runtime()?;
            }
            "ensemble" => {
                let k = members.unwrap();
                let mut member_cfg = cfg.clone();
                member_cfg.checkpoint_path = None;
                let outs =
                    train_ensemble(&data, &member_cfg, k, RngSeed(cfg.seed)).runtime()?;
                for (m, (net, log)) in outs.iter().enumerate() {
                    let ckpt = member_ckpt_path(&args.out, m);
                    save_unet(net, &ckpt).runtime()?;
                    let csv = ckpt.with_extension("loss.csv");
                    write_loss_csv(&csv, log).runtime()?;
                    rec.artifact(&ckpt).runtime()?;
                    rec.loss_artifact(&csv).runtime()?;
                }
            }
            _ => unreachable!(),
        }
        Ok(())
    })
}

// ---------------------------------------------------------------- generate

fn model_input_size(model: &LoadedModel) -> Result<usize, CmdError> {
    match model {
        LoadedModel::Generator(g) => Ok(g.cfg.input_size),
        LoadedModel::UNet(u) => Ok(u.cfg.input_size),
        LoadedModel::Discriminator(_) => Err(invalid(
            "checkpoint holds a discriminator; sampling needs a generator or unet".into(),
        )),
    }
}

fn check_layout_size(layout: &BitMask, size: usize) -> Result<(), CmdError> {
    if layout.width() != size || layout.height() != size {
        return Err(invalid(format!(
            "layout is {}x{} but the model expects {size}x{size}",
            layout.width(),
            layout.height()
        )));
    }
    Ok(())
}

/// M outputs from any sampling-capable checkpoint. A dropout-free unet is
/// deterministic, so its "samples" are M copies of the one forward pass.
fn sample_from_model(
    model: &LoadedModel,
    layout: &BitMask,
    m: usize,
    seed: RngSeed,
) -> Result<Vec<GrayImage>, CmdError> {
    match model {
        LoadedModel::Generator(g) => g.sample_outputs(layout, m, seed).runtime(),
        LoadedModel::UNet(u) if u.dropout_p > 0.0 => {
            u.mc_dropout_samples(layout, m, seed).runtime()
        }
        LoadedModel::UNet(u) => {
            let one = u.forward(layout, false, RngSeed(0)).runtime()?;
            Ok(vec![one; m])
        }
        LoadedModel::Discriminator(_) => unreachable!("rejected during validation"),
    }
}

fn model_kind(model: &LoadedModel) -> &'static str {
    match model {
        LoadedModel::Generator(_) => "generator",
        LoadedModel::UNet(u) if u.dropout_p > 0.0 => "unet+dropout",
        LoadedModel::UNet(_) => "unet",
        LoadedModel::Discriminator(_) => "discriminator",
    }
}

fn generate(a: GenerateArgs) -> Result<(), CmdError> {
    if a.samples == 0 {
        return Err(invalid("samples must be at least 1".into()));
    }
    let layout = load_bitmask(&a.layout).invalid()?;
    let model = load_model(&a.ckpt)
        .with_context(|| format!("loading {}", a.ckpt.display()))
        .invalid()?;
    check_layout_size(&layout, model_input_size(&model)?)?;
    ensure_dir(&a.out)?;

    let mut record = RunRecord::new("generate");
    record.seed("seed", a.seed).config(&serde_json::json!({
        "checkpoint": digest_file(&a.ckpt).invalid()?,
        "model": model_kind(&model),
        "samples": a.samples,
    }));
    run_recorded(&a.out, record, |rec| {
        let samples = sample_from_model(&model, &layout, a.samples, RngSeed(a.seed))?;
        for (i, img) in samples.iter().enumerate() {
            let path = a.out.join(format!("sample_{i:03}.png"));
            write_gray_png(img, &path).runtime()?;
            rec.artifact(&path).runtime()?;
        }
        Ok(())
    })
}

// ---------------------------------------------------------------- evaluate

const METRIC_FIELDS: [(&str, &[&str]); 4] = [
    ("iou", &["iou_random_mean", "iou_greedy_mean"]),
    ("kl", &["kl_real_vs_model"]),
    ("wd", &["wd_pairwise_mean"]),
    ("fd", &["fd", "embedder"]),
];

fn parse_metric_selection(s: &str) -> Result<Vec<&'static str>, CmdError> {
    let mut picked = Vec::new();
    for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match METRIC_FIELDS.iter().find(|(name, _)| *name == tok) {
            Some((name, _)) => {
                if !picked.contains(name) {
                    picked.push(*name);
                }
            }
            None => {
                return Err(invalid(format!(
                    "unknown metric {tok:?}; pick from iou,kl,wd,fd"
                )))
            }
        }
    }
    if picked.is_empty() {
        return Err(invalid("no metrics selected".into()));
    }
    Ok(picked)
}

fn evaluate(a: EvaluateArgs) -> Result<(), CmdError> {
    let selected = parse_metric_selection(&a.metrics)?;
    if a.bins < 2 {
        return Err(invalid(format!("bins must be at least 2, got {}", a.bins)));
    }
    let real_paths = png_files_sorted(&a.real).invalid()?;
    if real_paths.is_empty() {
        return Err(invalid(format!("no PNG files in {}", a.real.display())));
    }
    let gen_paths = png_files_sorted(&a.generated).invalid()?;
    if gen_paths.is_empty() {
        return Err(invalid(format!("no PNG files in {}", a.generated.display())));
    }
    let real: Vec<BitMask> =
        real_paths.iter().map(|p| load_bitmask(p)).collect::<Result<_, _>>().invalid()?;
    let gens: Vec<GrayImage> =
        gen_paths.iter().map(|p| load_gray(p)).collect::<Result<_, _>>().invalid()?;
    let report_dir = parent_dir(&a.report);
    ensure_dir(&report_dir)?;

    let mut record = RunRecord::new("evaluate");
    record.seed("seed", 0).config(&serde_json::json!({
        "bins": a.bins,
        "metrics": selected,
        "n_real": real.len(),
        "m_generated": gens.len(),
    }));
    run_recorded(&report_dir, record, |rec| {
        let mut digests = BTreeMap::new();
        digests.insert("real_dir".to_string(), digest_dir_listing(&real_paths).runtime()?);
        digests
            .insert("generated_dir".to_string(), digest_dir_listing(&gen_paths).runtime()?);
        let structure_id = a
            .generated
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("generated")
            .to_string();
        let report =
            compute_report(&structure_id, &gens, &real, a.bins, RngSeed(0), digests).runtime()?;
        let mut value = serde_json::to_value(&report).runtime()?;
        if let Some(map) = value.as_object_mut() {
            for (name, fields) in METRIC_FIELDS {
                if !selected.contains(&name) {
                    for f in fields {
                        map.remove(*f);
                    }
                }
            }
        }
        let text = serde_json::to_string_pretty(&value).runtime()?;
        std::fs::write(&a.report, text)
            .with_context(|| format!("writing {}", a.report.display()))
            .runtime()?;
        rec.artifact(&a.report).runtime()?;
        Ok(())
    })
}

// ------------------------------------------------------------- uncertainty

fn uncertainty(a: UncertaintyArgs) -> Result<(), CmdError> {
    if a.ckpts.len() < 2 {
        return Err(invalid(format!(
            "variance decomposition needs at least 2 checkpoints, got {}",
            a.ckpts.len()
        )));
    }
    if a.samples == 0 {
        return Err(invalid("samples must be at least 1".into()));
    }
    let layout = load_bitmask(&a.layout).invalid()?;
    let mut models = Vec::with_capacity(a.ckpts.len());
    for p in &a.ckpts {
        let model =
            load_model(p).with_context(|| format!("loading {}", p.display())).invalid()?;
        check_layout_size(&layout, model_input_size(&model)?)?;
        models.push(model);
    }
    ensure_dir(&a.out)?;

    let mut record = RunRecord::new("uncertainty");
    let ckpt_digests: Vec<serde_json::Value> = a
        .ckpts
        .iter()
        .zip(&models)
        .map(|(p, m)| {
            Ok(serde_json::json!({
                "checkpoint": digest_file(p)?,
                "model": model_kind(m),
            }))
        })
        .collect::<anyhow::Result<_>>()
        .invalid()?;
    record.seed("seed", a.seed).config(&serde_json::json!({
        "models": ckpt_digests,
        "samples_per_model": a.samples,
    }));
    run_recorded(&a.out, record, |rec| {
        let root = RngSeed(a.seed);
        let mut per_model = Vec::with_capacity(models.len());
        for (k, model) in models.iter().enumerate() {
            per_model.push(sample_from_model(
                model,
                &layout,
                a.samples,
                root.child("model", k as u64),
            )?);
        }
        let maps = decompose_uncertainty(&per_model).runtime()?;
        for (name, img) in [
            ("aleatoric.png", &maps.aleatoric),
            ("epistemic.png", &maps.epistemic),
            ("total.png", &maps.total),
        ] {
            let path = a.out.join(name);
            write_gray_png(img, &path).runtime()?;
            rec.artifact(&path).runtime()?;
        }
        Ok(())
    })
}

// -------------------------------------------------------------------- plot

fn plot_losses(a: LossesArgs) -> Result<(), CmdError> {
    let records = read_loss_csv(&a.input)
        .with_context(|| format!("reading {}", a.input.display()))
        .invalid()?;
    if records.is_empty() {
        return Err(invalid(format!("{} has no data rows", a.input.display())));
    }
    let out_dir = parent_dir(&a.out);
    ensure_dir(&out_dir)?;

    let mut record = RunRecord::new("plot losses");
    record.config(&serde_json::json!({ "rows": records.len() }));
    run_recorded(&out_dir, record, |rec| {
        let second = plot_loss_curves(&records, &a.out).runtime()?;
        rec.artifact(&a.out).runtime()?;
        rec.artifact(&second).runtime()?;
        Ok(())
    })
}

fn plot_heatmap(a: HeatmapArgs) -> Result<(), CmdError> {
    let scale: HeatScale = a.scale.parse().map_err(|e: String| invalid(e))?;
    let map = load_gray(&a.input).invalid()?;
    let out_dir = parent_dir(&a.out);
    ensure_dir(&out_dir)?;

    let mut record = RunRecord::new("plot heatmap");
    record.config(&serde_json::json!({ "scale": a.scale }));
    run_recorded(&out_dir, record, |rec| {
        render_heatmap(&map, scale, &a.out).runtime()?;
        rec.artifact(&a.out).runtime()?;
        Ok(())
    })
}
