use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use facegen::cgan::{generate_sequence, sample_latent, train_until, GanConfig, LatentCode, StepLog, TrainObserver, LOG_HEADER};
use facegen::dataset::{synth_corpus, Corpus};
use facegen::imageio::{load_png, save_png, tile};
use facegen::inversion::{beautify, FeatureExtractor, InversionConfig, NoFeatures};
use facegen::metrics::{evaluate, MetricConfig};
use facegen::raters::{RaterEnsemble, RaterTrainConfig};
use facegen::{Checkpoint, Image};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{prepare_dir, prepare_file, sidecar, FileConfig, RunRecord};
use crate::{BeautifyArgs, Cli, Command, EvaluateArgs, Failure, GridArgs, LabelArgs, SynthArgs, TrainGanArgs, TrainRatersArgs};

pub fn run(cli: &Cli) -> Result<(), Failure> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Synth(a) => synth(a, &file, cli.force),
        Command::TrainRaters(a) => train_raters(a, &file, cli.force),
        Command::Label(a) => label(a, cli.force),
        Command::TrainGan(a) => train_gan(a, &file, cli.force),
        Command::Grid(a) => grid(a, &file, cli.force),
        Command::Beautify(a) => beautify_cmd(a, &file, cli.force),
        Command::Evaluate(a) => evaluate_cmd(a, &file, cli.force),
    }
}

fn seed_of(flag: Option<u64>, file: &FileConfig) -> u64 {
    flag.or(file.seed).unwrap_or(0)
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn require_dir(dir: &Path, what: &str) -> Result<(), Failure> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(Failure::Data(format!("{what} directory {} does not exist", dir.display())))
    }
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Data(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))
}

/// PNGs in `dir`, sorted by file name, keyed by file stem.
fn load_png_dir(dir: &Path) -> Result<Vec<(String, Image)>, Failure> {
    require_dir(dir, "image")?;
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Failure::Data(format!("cannot list {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Failure::Data(format!("no PNG images in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((id, load_png(p)?))
        })
        .collect()
}

fn load_corpus(dir: &Path) -> Result<Corpus, Failure> {
    require_dir(dir, "corpus")?;
    Ok(Corpus::load(dir)?)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Failure> {
    if !path.is_file() {
        return Err(Failure::Data(format!("checkpoint {} does not exist", path.display())));
    }
    Ok(Checkpoint::load(path)?)
}

#[derive(Serialize)]
struct SynthSettings {
    n: usize,
    raters: usize,
    noise_sd: f64,
    resolution: usize,
}

fn synth(a: &SynthArgs, file: &FileConfig, force: bool) -> Result<(), Failure> {
    let seed = seed_of(a.seed, file);
    prepare_dir(&a.out, force)?;
    let corpus = synth_corpus(a.n, a.raters, a.noise_sd, a.resolution, seed)?;
    corpus.save(&a.out)?;
    let settings = SynthSettings {
        n: a.n,
        raters: a.raters,
        noise_sd: a.noise_sd,
        resolution: a.resolution,
    };
    RunRecord {
        command: "synth",
        seed,
        inputs: BTreeMap::new(),
        settings,
    }
    .write(&a.out.join("run_config.toml"))?;
    eprintln!(
        "wrote {} images rated by {} raters to {}",
        corpus.len(),
        corpus.rater_count,
        a.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct RaterReport {
    rater_count: usize,
    epochs: usize,
    /// Final training MSE per rater.
    train_mse: Vec<f64>,
    mean_train_mse: f64,
}

fn train_raters(a: &TrainRatersArgs, file: &FileConfig, force: bool) -> Result<(), Failure> {
    let corpus = load_corpus(&a.corpus)?;
    let mut cfg: RaterTrainConfig = file.raters.clone();
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    cfg.seed = seed_of(a.seed, file);
    prepare_dir(&a.out, force)?;
    let ensemble = RaterEnsemble::train(&corpus, &cfg)?;
    ensemble.save(&a.out)?;
    let train_mse: Vec<f64> = ensemble.models.iter().map(|m| m.final_loss()).collect();
    let mean_train_mse = train_mse.iter().sum::<f64>() / train_mse.len() as f64;
    write_json(
        &a.out.join("report.json"),
        &RaterReport {
            rater_count: ensemble.len(),
            epochs: cfg.epochs,
            train_mse,
            mean_train_mse,
        },
    )?;
    RunRecord {
        command: "train-raters",
        seed: cfg.seed,
        inputs: BTreeMap::from([("corpus", path_str(&a.corpus))]),
        settings: &cfg,
    }
    .write(&a.out.join("run_config.toml"))?;
    eprintln!("trained {} raters, mean train MSE {mean_train_mse:.5}", ensemble.len());
    Ok(())
}

#[derive(Serialize)]
struct LabelSettings {
    rater_count: usize,
    resolution: usize,
    images: usize,
}

fn label(a: &LabelArgs, force: bool) -> Result<(), Failure> {
    require_dir(&a.ensemble, "ensemble")?;
    let ensemble = RaterEnsemble::load(&a.ensemble)?;
    let images = load_png_dir(&a.images)?;
    prepare_dir(&a.out, force)?;
    let corpus = ensemble.label_corpus(&images)?;
    corpus.save(&a.out)?;
    let inputs = BTreeMap::from([("ensemble", path_str(&a.ensemble)), ("images", path_str(&a.images))]);
    let settings = LabelSettings {
        rater_count: ensemble.len(),
        resolution: ensemble.resolution,
        images: corpus.len(),
    };
    RunRecord {
        command: "label",
        seed: 0,
        inputs,
        settings,
    }
    .write(&a.out.join("run_config.toml"))?;
    eprintln!("labeled {} images with {} raters", corpus.len(), ensemble.len());
    Ok(())
}

struct GanRunObserver {
    log: BufWriter<File>,
    checkpoint_dir: PathBuf,
}

impl GanRunObserver {
    fn io(path: &Path, e: std::io::Error) -> facegen::Error {
        facegen::Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
    }
}

impl TrainObserver<f32> for GanRunObserver {
    fn on_step(&mut self, log: &StepLog) -> facegen::Result<()> {
        writeln!(self.log, "{}", log.csv_row()).map_err(|e| Self::io(&self.checkpoint_dir, e))?;
        if (log.step + 1).is_multiple_of(100) {
            eprintln!(
                "step {} stage {} ({}px) alpha {:.3} d {:.4} g {:.4} cond {:.4}",
                log.step + 1,
                log.stage,
                log.resolution,
                log.fade_alpha,
                log.d_loss,
                log.g_loss,
                log.cond_loss
            );
        }
        Ok(())
    }

    fn on_checkpoint(&mut self, ckpt: &Checkpoint) -> facegen::Result<()> {
        self.log.flush().map_err(|e| Self::io(&self.checkpoint_dir, e))?;
        fs::create_dir_all(&self.checkpoint_dir).map_err(|e| Self::io(&self.checkpoint_dir, e))?;
        ckpt.save(&self.checkpoint_dir.join(format!("step_{}.json", ckpt.state.step)))
    }
}

fn gan_config(a: &TrainGanArgs, file: &FileConfig) -> GanConfig {
    let mut cfg = file.gan.clone();
    cfg.seed = seed_of(a.seed, file);
    let set = |slot: &mut u64, v: Option<u64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut cfg.steps_per_stage, a.steps_per_stage);
    set(&mut cfg.fade_in_steps, a.fade_in_steps);
    set(&mut cfg.checkpoint_every, a.checkpoint_every);
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    for (slot, v) in [
        (&mut cfg.g_lr, a.g_lr),
        (&mut cfg.d_lr, a.d_lr),
        (&mut cfg.lambda_cond, a.lambda_cond),
        (&mut cfg.lambda_gp, a.lambda_gp),
    ] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    cfg
}

fn train_gan(a: &TrainGanArgs, file: &FileConfig, force: bool) -> Result<(), Failure> {
    let corpus = load_corpus(&a.corpus)?;
    let ckpt = match &a.resume {
        Some(path) => load_checkpoint(path)?,
        None => {
            let mut cfg = gan_config(a, file);
            cfg.cond_dim = corpus.rater_count;
            cfg.image_channels = corpus.channels;
            cfg.validate()?;
            Checkpoint::init(cfg)?
        }
    };
    let until = a.until_step.unwrap_or(ckpt.config.total_steps());
    prepare_dir(&a.out, force)?;
    let mut inputs = BTreeMap::from([("corpus", path_str(&a.corpus))]);
    if let Some(r) = &a.resume {
        inputs.insert("resume", path_str(r));
    }
    RunRecord {
        command: "train-gan",
        seed: ckpt.config.seed,
        inputs,
        settings: &ckpt.config,
    }
    .write(&a.out.join("run_config.toml"))?;

    let log_path = a.out.join("log.csv");
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| Failure::Data(format!("cannot create {}: {e}", log_path.display())))?);
    writeln!(log, "{LOG_HEADER}").map_err(|e| Failure::Data(e.to_string()))?;
    let mut observer = GanRunObserver {
        log,
        checkpoint_dir: a.out.join("checkpoints"),
    };
    let start = ckpt.state.step;
    let result = train_until(ckpt, &corpus, until, &mut observer);
    observer.log.flush().map_err(|e| Failure::Data(e.to_string()))?;
    let ckpt = result?;
    ckpt.save(&a.out.join("checkpoint.json"))?;
    eprintln!("trained steps {start}..{} ({}px)", ckpt.state.step, ckpt.resolution());
    Ok(())
}

#[derive(Serialize)]
struct GridSettings<'a> {
    rows: usize,
    betas: &'a [f64],
}

fn grid(a: &GridArgs, file: &FileConfig, force: bool) -> Result<(), Failure> {
    if a.rows == 0 {
        return Err(Failure::Usage("--rows must be at least 1".into()));
    }
    if a.betas.is_empty() {
        return Err(Failure::Usage("--betas must list at least one value".into()));
    }
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let seed = seed_of(a.seed, file);
    prepare_file(&a.out, force)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..a.rows)
        .map(|_| generate_sequence(&ckpt, &sample_latent(&mut rng, ckpt.config.latent_dim), &a.betas))
        .collect::<facegen::Result<Vec<_>>>()?;
    save_png(&tile(&rows)?, &a.out)?;
    let settings = GridSettings {
        rows: a.rows,
        betas: &a.betas,
    };
    RunRecord {
        command: "grid",
        seed,
        inputs: BTreeMap::from([("checkpoint", path_str(&a.checkpoint))]),
        settings,
    }
    .write(&sidecar(&a.out, "run.toml"))?;
    Ok(())
}

#[derive(Serialize)]
struct TraceSummary {
    steps: usize,
    initial_loss: f64,
    final_loss: f64,
    min_loss: f64,
}

#[derive(Serialize)]
struct BeautifyReport {
    beta_hat: f64,
    final_loss: f64,
    initial_loss: f64,
    restart: usize,
    restart_losses: Vec<f64>,
    trace: TraceSummary,
    deltas: Vec<f64>,
    /// Conditions actually rendered, after clipping to [0, 1].
    betas: Vec<f64>,
    z_hat: Vec<f64>,
}

fn run_beautify<E: FeatureExtractor>(
    target: &Image,
    ckpt: &Checkpoint,
    extractor: &E,
    cfg: &InversionConfig,
    deltas: &[f64],
) -> Result<(Vec<Image>, BeautifyReport), Failure> {
    let (res, images) = beautify(target, ckpt, extractor, cfg, deltas)?;
    let mut row = vec![target.clone(), res.reconstruction.clone()];
    row.extend(images);
    let trace = &res.loss_trace;
    let report = BeautifyReport {
        beta_hat: res.beta_hat,
        final_loss: res.final_loss(),
        initial_loss: res.initial_loss(),
        restart: res.restart,
        restart_losses: res.restart_losses.clone(),
        trace: TraceSummary {
            steps: trace.len() - 1,
            initial_loss: res.initial_loss(),
            final_loss: res.final_loss(),
            min_loss: trace.iter().copied().fold(f64::INFINITY, f64::min),
        },
        deltas: deltas.to_vec(),
        betas: deltas.iter().map(|d| (res.beta_hat + d).clamp(0.0, 1.0)).collect(),
        z_hat: res.z_hat.clone(),
    };
    Ok((row, report))
}

fn beautify_cmd(a: &BeautifyArgs, file: &FileConfig, force: bool) -> Result<(), Failure> {
    if let Some(bad) = a.deltas.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
        return Err(Failure::Usage(format!("deltas must be positive, got {bad}")));
    }
    let ckpt = load_checkpoint(&a.checkpoint)?;
    if !a.image.is_file() {
        return Err(Failure::Data(format!("image {} does not exist", a.image.display())));
    }
    let target = load_png(&a.image)?;
    let mut cfg = file.inversion.clone();
    cfg.seed = seed_of(a.seed, file);
    if let Some(s) = a.steps {
        cfg.max_steps = s;
    }
    if let Some(r) = a.restarts {
        cfg.restarts = r;
    }
    let mut inputs = BTreeMap::from([("checkpoint", path_str(&a.checkpoint)), ("image", path_str(&a.image))]);
    let (row, report) = match &a.raters {
        Some(dir) => {
            require_dir(dir, "ensemble")?;
            let ensemble = RaterEnsemble::load(dir)?;
            inputs.insert("raters", path_str(dir));
            prepare_file(&a.out, force)?;
            run_beautify(&target, &ckpt, &ensemble.models[0], &cfg, &a.deltas)?
        }
        None => {
            cfg.alpha = 1.0;
            prepare_file(&a.out, force)?;
            run_beautify(&target, &ckpt, &NoFeatures, &cfg, &a.deltas)?
        }
    };
    save_png(&tile(&[row])?, &a.out)?;
    write_json(&sidecar(&a.out, "json"), &report)?;
    RunRecord {
        command: "beautify",
        seed: cfg.seed,
        inputs,
        settings: &cfg,
    }
    .write(&sidecar(&a.out, "run.toml"))?;
    eprintln!(
        "beta_hat {:.4}, loss {:.4} -> {:.4}",
        report.beta_hat, report.initial_loss, report.final_loss
    );
    Ok(())
}

/// Draws `n` images from the checkpoint, each conditioned on the mean score
/// of a random real image.
fn sample_fakes(ckpt: &Checkpoint, real: &Corpus, n: usize, seed: u64) -> Result<Vec<Image>, Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let betas = real.mean_scores();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let beta = betas[rng.random_range(0..betas.len())];
        let code = LatentCode::sample(&mut rng, ckpt.config.latent_dim, vec![beta; ckpt.config.cond_dim])?;
        out.push(ckpt.generate(&[code])?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct EvaluateSettings<'a> {
    n_fake: usize,
    metrics: &'a MetricConfig,
}

fn evaluate_cmd(a: &EvaluateArgs, file: &FileConfig, force: bool) -> Result<(), Failure> {
    let real = load_corpus(&a.real)?;
    let seed = seed_of(a.seed, file);
    let mut metrics = file.metrics.clone();
    metrics.seed = seed;
    let (fake, source) = match (&a.checkpoint, &a.fake) {
        (Some(path), _) => {
            if a.n_fake == 0 {
                return Err(Failure::Usage("--n-fake must be at least 1".into()));
            }
            (
                sample_fakes(&load_checkpoint(path)?, &real, a.n_fake, seed)?,
                ("checkpoint", path_str(path)),
            )
        }
        (None, Some(dir)) => (load_png_dir(dir)?.into_iter().map(|(_, px)| px).collect(), ("fake", path_str(dir))),
        (None, None) => return Err(Failure::Usage("pass --checkpoint or --fake".into())),
    };
    prepare_file(&a.out, force)?;
    let real_px: Vec<Image> = real.items.iter().map(|it| it.pixels.clone()).collect();
    let report = evaluate(&real_px, &fake, &metrics)?;
    write_json(&a.out, &report)?;
    let settings = EvaluateSettings {
        n_fake: fake.len(),
        metrics: &metrics,
    };
    RunRecord {
        command: "evaluate",
        seed,
        inputs: BTreeMap::from([("real", path_str(&a.real)), source]),
        settings,
    }
    .write(&sidecar(&a.out, "run.toml"))?;
    eprintln!("swd avg {:.3}, ms-ssim {:.4}", report.swd_avg, report.ms_ssim.unwrap_or(f64::NAN));
    Ok(())
}
