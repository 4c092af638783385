use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use modl::conditioning::Setting;
use modl::config::{RunConfig, PRESETS};
use modl::data::{Dataset, Sample, Split};
use modl::evaluation::{
    acceleration_grid, lambda_curve as curve, mean_std, psnr_images, run_grid, ssim_images, wilcoxon_signed_rank, GridSpec,
    MetricReport, PValueMethod, PsnrMode, Reconstructor,
};
use modl::training::{load_checkpoint, sample_counts, train as fit, Expectation, TrainConfig, TrainOutput};
use modl::unrolled::{ModelArch, Mode, ReconModel};

use crate::error::{data, io, usage, CliError};
use crate::{ConfigArgs, ModeArg};

type Res<T = ()> = Result<T, CliError>;

fn load_config(args: &ConfigArgs) -> Res<RunConfig> {
    match (&args.config, &args.preset) {
        (Some(path), None) => {
            let bytes = fs::read(path).map_err(|e| io(path, e))?;
            Ok(RunConfig::from_json(&bytes)?)
        }
        (None, Some(name)) => {
            if !PRESETS.iter().any(|(n, _)| n == name) {
                let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
                return Err(usage(format!("unknown preset '{name}' (available: {})", names.join(", "))));
            }
            Ok(RunConfig::preset(name)?)
        }
        _ => Err(usage("pass exactly one of --config or --preset")),
    }
}

fn parse_setting(s: &str) -> Res<Setting> {
    Setting::parse(s).map_err(|e| usage(e.to_string()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Res {
    fs::write(path, bytes).map_err(|e| io(path, e))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Res {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(modl::Error::from)?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Res {
    let mut w = csv::Writer::from_path(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| data(e.to_string()))?;
    }
    w.flush().map_err(|e| io(path, e))
}

/// Creates `out` and records the resolved configuration and its hash in it.
fn provenance(out: &Path, cfg: &RunConfig) -> Res<String> {
    fs::create_dir_all(out).map_err(|e| io(out, e))?;
    let resolved = cfg.resolved()?;
    write_file(&out.join("resolved_config.json"), &resolved.to_json()?)?;
    let hash = cfg.hash()?;
    write_file(&out.join("config_hash.txt"), format!("{hash}\n").as_bytes())?;
    Ok(hash)
}

fn load_dataset(root: &Path, cfg: &RunConfig) -> Res<Dataset> {
    let ds = Dataset::read(root)?;
    if ds.config != cfg.data {
        return Err(data(format!(
            "dataset at {} was generated with a different data section than the run configuration",
            root.display()
        )));
    }
    Ok(ds)
}

pub fn gen_data(args: &ConfigArgs, out: &Path, force: bool) -> Res {
    let cfg = load_config(args)?;
    if out.exists() && !force {
        return Err(usage(format!("{} already exists (pass --force to replace it)", out.display())));
    }
    let ds = Dataset::generate(&cfg.data)?;
    ds.write(out, force)?;
    provenance(out, &cfg)?;
    eprintln!("wrote {} subject directories to {}", ds.subjects.len(), out.display());
    Ok(())
}

fn train_one(
    arch: &ModelArch,
    cfg: &RunConfig,
    mode: Mode,
    tcfg: &TrainConfig,
    samples: &[Sample<f32>],
    out: &Path,
    hash: &str,
) -> Res<ReconModel<f32>> {
    let model = ReconModel::<f32>::new(arch, cfg.unroll_config(mode), tcfg.seed)?;
    let target = TrainOutput { dir: out.to_path_buf(), config_hash: hash.to_string() };
    let outcome = fit(model, samples, tcfg, Some(&target))?;
    if let Some(last) = outcome.log.last() {
        eprintln!("{}: final loss {:.6e} after {} epochs", out.display(), last.loss, outcome.log.len());
    }
    Ok(outcome.model)
}

pub fn train(args: &ConfigArgs, root: &Path, mode: ModeArg, setting: Option<&str>, out: &Path) -> Res {
    let cfg = load_config(args)?;
    let mut resolved = cfg.resolved()?;
    let mode = match (mode, setting) {
        (ModeArg::Individual, None) => return Err(usage("--mode individual requires --setting (e.g. T2-3T)")),
        (ModeArg::Individual, Some(s)) => {
            let s = parse_setting(s)?;
            resolved.train.settings.retain(|c| c.setting() == s);
            if resolved.train.settings.is_empty() {
                return Err(data(format!("setting {} is not part of the configured training settings", s.label())));
            }
            Mode::IndividualPlain
        }
        (_, Some(_)) => return Err(usage("--setting is only used with --mode individual")),
        (ModeArg::Ada, None) => Mode::Ada,
        (ModeArg::Joint, None) => Mode::JointPlain,
    };
    let ds = load_dataset(root, &cfg)?;
    let samples = ds.samples::<f32>(Split::Train)?;
    let hash = provenance(out, &resolved)?;
    let counts = sample_counts(&samples, &resolved.train)?;
    for (k, n) in &counts {
        eprintln!("training samples {k}: {n}");
    }
    write_json(&out.join("sample_counts.json"), &counts)?;
    train_one(&resolved.model, &resolved, mode, &resolved.train, &samples, out, &hash)?;
    Ok(())
}

fn load_model(dir: &Path) -> Res<ReconModel<f32>> {
    Ok(load_checkpoint::<f32>(dir, &Expectation::default())?.model)
}

fn grid_spec(cfg: &RunConfig, cross_domain: bool) -> GridSpec {
    GridSpec {
        settings: cfg.data_settings(),
        accelerations: cfg.data.accelerations.clone(),
        cross_domain,
        psnr_mode: cfg.eval.psnr_mode,
    }
}

pub fn eval(args: &ConfigArgs, root: &Path, specs: &[String], out: &Path) -> Res {
    let cfg = load_config(args)?;
    let mut loaded: Vec<(String, ReconModel<f32>)> = Vec::new();
    for spec in specs {
        let (name, dir) = spec
            .split_once('=')
            .filter(|(n, d)| !n.is_empty() && !d.is_empty())
            .ok_or_else(|| usage(format!("--model expects NAME=CHECKPOINT_DIR, got '{spec}'")))?;
        if name == "zero_filled" || loaded.iter().any(|(n, _)| n == name) {
            return Err(usage(format!("model name '{name}' is reserved or repeated")));
        }
        loaded.push((name.to_string(), load_model(Path::new(dir))?));
    }
    let ds = load_dataset(root, &cfg)?;
    let test = ds.samples::<f32>(Split::Test)?;
    let mut methods: Vec<(String, Reconstructor<'_, f32>)> =
        loaded.iter().map(|(n, m)| (n.clone(), Reconstructor::Model(m))).collect();
    methods.push(("zero_filled".to_string(), Reconstructor::ZeroFilled));
    let report = run_grid(&methods, &test, &grid_spec(&cfg, cfg.eval.cross_domain))?;
    provenance(out, &cfg)?;
    report.write_csv(&out.join("images.csv"))?;
    report.write_json(&out.join("summary.json"))?;
    println!("model\tsetting\tfed\tR\tpsnr\tssim");
    for c in &report.cells {
        println!(
            "{}\t{}\t{}\t{}\t{:.2}±{:.2}\t{:.4}",
            c.model, c.true_setting, c.fed_setting, c.acceleration, c.psnr_mean, c.psnr_std, c.ssim_mean
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct InferResult {
    subject: u64,
    setting: String,
    fed_setting: String,
    acceleration: f64,
    psnr_db: f64,
    ssim: f64,
    image: PathBuf,
}

pub fn infer(model_dir: &Path, root: &Path, subject: u64, setting: &str, acceleration: f64, fed: Option<&str>, out: &Path) -> Res {
    let setting = parse_setting(setting)?;
    let fed = fed.map(parse_setting).transpose()?.unwrap_or(setting);
    let model = load_model(model_dir)?;
    let ds = Dataset::read(root)?;
    let subj = ds
        .subjects
        .iter()
        .find(|s| s.subject == subject && s.contrast == setting.contrast && s.field == setting.field)
        .ok_or_else(|| data(format!("no subject {subject} with setting {} in {}", setting.label(), root.display())))?;
    let sample = subj
        .samples::<f32>()?
        .into_iter()
        .find(|s| (s.condition.acceleration - acceleration).abs() < 1e-9)
        .ok_or_else(|| data(format!("subject {subject} has no acquisition at R={acceleration}")))?;
    let cond = fed.condition(acceleration)?;
    let rec = model.reconstruct(&sample.problem, Some(&cond))?;
    let gt = sample.ground_truth()?;
    let mag = rec.magnitude();
    let peak = mag.iter().cloned().fold(0.0, f64::max);
    let pixels: Vec<u8> = mag
        .iter()
        .map(|&v| if peak > 0.0 { (v / peak * 255.0).round().clamp(0.0, 255.0) as u8 } else { 0 })
        .collect();
    let img = image::GrayImage::from_raw(rec.width() as u32, rec.height() as u32, pixels)
        .ok_or_else(|| data("image buffer does not match the reconstruction size"))?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    }
    img.save_with_format(out, image::ImageFormat::Png)
        .map_err(|e| data(format!("{}: {e}", out.display())))?;
    let result = InferResult {
        subject,
        setting: setting.label(),
        fed_setting: fed.label(),
        acceleration,
        psnr_db: psnr_images(&rec, &gt, PsnrMode::Normalized)?,
        ssim: ssim_images(&rec, &gt)?,
        image: out.to_path_buf(),
    };
    println!("{}", serde_json::to_string(&result).map_err(modl::Error::from)?);
    Ok(())
}

/// Mean finite PSNR and mean SSIM over the within-domain images of `model` whose setting passes `keep`.
fn summarize(report: &MetricReport, model: &str, keep: impl Fn(&str) -> bool) -> (f64, f64, usize) {
    let rows: Vec<_> = report
        .images
        .iter()
        .filter(|r| r.model == model && r.true_setting == r.fed_setting && keep(&r.true_setting))
        .collect();
    let psnr: Vec<f64> = rows.iter().map(|r| r.psnr_db).filter(|p| p.is_finite()).collect();
    let ssim: Vec<f64> = rows.iter().map(|r| r.ssim).collect();
    (mean_std(&psnr).0, mean_std(&ssim).0, rows.len())
}

#[derive(Serialize)]
struct MlpRow {
    mlp_hidden: usize,
    group: &'static str,
    psnr_mean: f64,
    ssim_mean: f64,
    images: usize,
}

pub fn sweep_mlp(args: &ConfigArgs, root: &Path, out: &Path) -> Res {
    let cfg = load_config(args)?;
    let held = cfg.sweeps.held_out;
    if !cfg.data_settings().contains(&held) {
        return Err(data(format!("held-out setting {} is not in the dataset", held.label())));
    }
    let mut resolved = cfg.resolved()?;
    resolved.train.settings.retain(|c| c.setting() != held);
    if resolved.train.settings.is_empty() {
        return Err(data("no training settings remain after holding one out"));
    }
    let ds = load_dataset(root, &cfg)?;
    let (train, test) = (ds.samples::<f32>(Split::Train)?, ds.samples::<f32>(Split::Test)?);
    let hash = provenance(out, &resolved)?;
    let held_label = held.label();
    let mut rows = Vec::new();
    for &width in &resolved.sweeps.mlp_widths {
        let arch = ModelArch { mlp_hidden: width, ..resolved.model };
        let dir = out.join(format!("mlp_{width}"));
        let model = train_one(&arch, &resolved, Mode::Ada, &resolved.train, &train, &dir, &hash)?;
        let report = run_grid(&[("ada".to_string(), Reconstructor::Model(&model))], &test, &grid_spec(&resolved, false))?;
        for (group, held_side) in [("held_out", true), ("in_set", false)] {
            let (p, s, n) = summarize(&report, "ada", |l| (l == held_label) == held_side);
            rows.push(MlpRow { mlp_hidden: width, group, psnr_mean: p, ssim_mean: s, images: n });
        }
    }
    write_csv(&out.join("sweep_mlp.csv"), &rows)
}

#[derive(Serialize)]
struct DataRow {
    model: &'static str,
    subjects: usize,
    psnr_mean: f64,
    ssim_mean: f64,
    images: usize,
}

pub fn sweep_data(args: &ConfigArgs, root: &Path, out: &Path) -> Res {
    let cfg = load_config(args)?;
    if let Some(&s) = cfg.sweeps.subject_counts.iter().find(|&&s| s > cfg.data.train_subjects) {
        return Err(data(format!("subject count {s} exceeds the {} training subjects per setting", cfg.data.train_subjects)));
    }
    let resolved = cfg.resolved()?;
    let ds = load_dataset(root, &cfg)?;
    let (train, test) = (ds.samples::<f32>(Split::Train)?, ds.samples::<f32>(Split::Test)?);
    let hash = provenance(out, &resolved)?;
    let mut rows = Vec::new();
    for &subjects in &resolved.sweeps.subject_counts {
        let tcfg = TrainConfig { subjects_per_setting: Some(subjects), ..resolved.train.clone() };
        for (name, mode) in [("ada", Mode::Ada), ("joint", Mode::JointPlain)] {
            let dir = out.join(format!("{name}_s{subjects}"));
            let model = train_one(&resolved.model, &resolved, mode, &tcfg, &train, &dir, &hash)?;
            let report = run_grid(&[(name.to_string(), Reconstructor::Model(&model))], &test, &grid_spec(&resolved, false))?;
            let (p, s, n) = summarize(&report, name, |_| true);
            rows.push(DataRow { model: name, subjects, psnr_mean: p, ssim_mean: s, images: n });
        }
    }
    write_csv(&out.join("sweep_data.csv"), &rows)
}

pub fn lambda_curve(args: &ConfigArgs, model_dir: &Path, out: &Path) -> Res {
    let cfg = load_config(args)?;
    let model = load_model(model_dir)?;
    let [a, b, step] = cfg.eval.lambda_accelerations;
    let c = curve(&model, &cfg.data_settings(), &acceleration_grid(a, b, step)?)?;
    provenance(out, &cfg)?;
    c.write_csv(&out.join("lambda_curve.csv"))?;
    for p in &c.points {
        println!("{}\t{}\t{:.6}", p.setting, p.acceleration, p.lambda);
    }
    Ok(())
}

#[derive(Serialize)]
struct CompareRow {
    a: String,
    b: String,
    n: usize,
    mean_psnr_diff: f64,
    w_plus: f64,
    w_minus: f64,
    statistic: f64,
    p_value: f64,
    method: PValueMethod,
}

pub fn compare(images: &Path, pair: Option<(String, String)>, out: &Path) -> Res {
    let mut report = MetricReport::read_csv(PsnrMode::Normalized, images)?;
    report.images.retain(|r| r.true_setting == r.fed_setting);
    let models: BTreeSet<String> = report.images.iter().map(|r| r.model.clone()).collect();
    let pairs: Vec<(String, String)> = match pair {
        Some((a, b)) => {
            for m in [&a, &b] {
                if !models.contains(m) {
                    return Err(data(format!("model '{m}' does not appear in {}", images.display())));
                }
            }
            vec![(a, b)]
        }
        None => {
            let list: Vec<&String> = models.iter().collect();
            let mut v = Vec::new();
            for i in 0..list.len() {
                for j in i + 1..list.len() {
                    v.push((list[i].clone(), list[j].clone()));
                }
            }
            v
        }
    };
    let mut rows = Vec::new();
    for (a, b) in pairs {
        let (xa, xb) = report.paired_psnr(&a, &b)?;
        let w = wilcoxon_signed_rank(&xa, &xb).map_err(|e| match e {
            modl::Error::UndefinedTest(m) => modl::Error::UndefinedTest(format!("{a} vs {b}: {m}")),
            other => other,
        })?;
        let diff = xa.iter().zip(&xb).map(|(x, y)| x - y).sum::<f64>() / xa.len() as f64;
        println!("{a} vs {b}: n={} mean diff {diff:.3} dB, p={:.3e} ({:?})", w.n, w.p_value, w.method);
        rows.push(CompareRow {
            a,
            b,
            n: w.n,
            mean_psnr_diff: diff,
            w_plus: w.w_plus,
            w_minus: w.w_minus,
            statistic: w.statistic,
            p_value: w.p_value,
            method: w.method,
        });
    }
    fs::create_dir_all(out).map_err(|e| io(out, e))?;
    write_csv(&out.join("compare.csv"), &rows)
}
