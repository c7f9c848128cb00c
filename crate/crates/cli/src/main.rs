use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use smn_core::ablation::{run_ablation, AblationConfig};
use smn_core::checkpoint::{load_checkpoint, save_checkpoint};
use smn_core::config::{load_config, to_json};
use smn_core::filter::Combine;
use smn_core::gradcheck::{check_model, random_batch, suite_configs, InjectedFault, DEFAULT_STEP};
use smn_core::model::{build_model, Architecture, ModelConfig, PeConfig};
use smn_core::probe::run_probe_suite;
use smn_core::signal::{load_image, psnr_images, save_image, ImageSignal, TestCard};
use smn_core::train::{fit, FitData, TrainConfig, TrainError};

#[derive(Parser)]
#[command(name = "smn", version, about = "Fit, ablate and probe coordinate networks on images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model to one image.
    Fit(FitArgs),
    /// Score a checkpoint against an image.
    Eval(EvalArgs),
    /// Run the combine x oscillator x depth ablation grid.
    Ablate(AblateArgs),
    /// Check the frequency-mixing properties on 1-D probes.
    Probe(ProbeArgs),
    /// Compare reverse-mode and finite-difference gradients.
    GradCheck(GradCheckArgs),
}

#[derive(Args, Clone)]
struct InputArgs {
    /// 8-bit PNG or binary PPM/PGM.
    #[arg(long, conflicts_with = "testcard")]
    image: Option<PathBuf>,
    /// Procedural image: gray, checker[:cell], grating[:cycles], zoneplate.
    #[arg(long)]
    testcard: Option<TestCard>,
    /// Center crop, e.g. 128x128. Test cards are rendered at this size.
    #[arg(long, value_parser = parse_crop)]
    crop: Option<(usize, usize)>,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// smn, smn-add, mlp, siren or gauss.
    #[arg(long, default_value = "smn")]
    arch: String,
    #[arg(long)]
    model_config: Option<PathBuf>,
    #[arg(long)]
    hidden: Option<usize>,
    /// Filter modules (SMN only).
    #[arg(long)]
    modules: Option<usize>,
    /// Number of oscillator bases, taken from 8, 40, 120.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    fixed_amplitudes: bool,
    /// Combine mode for every filter module.
    #[arg(long)]
    combine: Option<Combine>,
    /// Positional encoding octaves for the baselines.
    #[arg(long)]
    pe_octaves: Option<usize>,
}

#[derive(Args, Clone)]
struct TrainArgs {
    #[arg(long)]
    train_config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Full image, width 256, full iteration budget.
    #[arg(long)]
    paper_parity: bool,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    /// Where to write the reconstruction (PNG or PPM).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    ablation_config: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    paper_parity: bool,
    #[arg(long, default_value = "ablation")]
    out: PathBuf,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long, default_value_t = 8.0)]
    omega: f64,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    /// Directory for the two-column spectrum files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradCheckArgs {
    #[arg(long, default_value_t = 16)]
    hidden: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    samples: usize,
    /// Corrupt the analytic gradient of this parameter array (negative control).
    #[arg(long, hide = true)]
    inject_fault: Option<usize>,
}

fn parse_crop(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WIDTHxHEIGHT")?;
    let w: usize = w.parse().map_err(|e| format!("width: {e}"))?;
    let h: usize = h.parse().map_err(|e| format!("height: {e}"))?;
    if w < 2 || h < 2 {
        return Err("crop must be at least 2x2".into());
    }
    Ok((w, h))
}

/// Desk-scale default width when neither a flag nor a config sets one.
const DESK_HIDDEN: usize = 64;

fn load_input(input: &InputArgs, paper_parity: bool) -> Result<ImageSignal> {
    match (&input.image, input.testcard) {
        (Some(path), _) => {
            let img = load_image(path).with_context(|| format!("loading {}", path.display()))?;
            match input.crop {
                Some((w, h)) if !paper_parity => Ok(img.center_crop(w, h)?),
                _ => Ok(img),
            }
        }
        (None, Some(card)) => {
            let (w, h) = input.crop.unwrap_or((128, 128));
            Ok(card.render(w, h))
        }
        (None, None) => bail!("one of --image or --testcard is required"),
    }
}

fn model_config(args: &ModelArgs, out_dim: usize, paper_parity: bool) -> Result<ModelConfig> {
    let (arch, add) = match args.arch.as_str() {
        "smn-add" => (Architecture::Smn, true),
        other => (other.parse::<Architecture>().map_err(anyhow::Error::msg)?, false),
    };
    let mut cfg = match &args.model_config {
        Some(path) => load_config::<ModelConfig>(path)?,
        None => ModelConfig {
            arch,
            hidden: if paper_parity { 256 } else { DESK_HIDDEN },
            ..ModelConfig::default()
        },
    };
    if args.model_config.is_some() && args.arch != "smn" {
        cfg.arch = arch;
    }
    cfg.out_dim = out_dim;
    if let Some(h) = args.hidden {
        cfg.hidden = h;
    }
    if let Some(m) = args.modules {
        cfg.num_modules = m;
    }
    if let Some(k) = args.k {
        cfg = cfg.with_k(k)?;
    }
    if args.fixed_amplitudes {
        cfg.amplitudes_learnable = false;
    }
    if add {
        cfg.combine = vec![Combine::Add];
    }
    if let Some(c) = args.combine {
        cfg.combine = vec![c];
    }
    if let Some(octaves) = args.pe_octaves {
        cfg.positional_encoding = Some(PeConfig { octaves });
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &args.train_config {
        Some(path) => load_config::<TrainConfig>(path)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.iters {
        cfg.max_iters = n;
    }
    if let Some(lr) = args.lr {
        cfg.lr0 = lr;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let img = load_input(&args.input, args.train.paper_parity)?;
    let mut mcfg = model_config(&args.model, img.channels(), args.train.paper_parity)?;
    let tcfg = train_config(&args.train)?;
    if let Some(seed) = args.train.seed {
        mcfg.seed = seed;
    }
    let data = FitData::from_image(&img)?;
    let mut model = build_model(&mcfg)?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let metrics_path = args.out.join("metrics.jsonl");
    let mut metrics = BufWriter::new(File::create(&metrics_path)?);
    let mut write_err = None;
    let result = fit(&mut model, &data, &tcfg, |m| {
        if write_err.is_none() {
            if let Err(e) = serde_json::to_writer(&mut metrics, m).map_err(std::io::Error::from).and_then(|_| metrics.write_all(b"\n")) {
                write_err = Some(e);
            }
        }
    });
    metrics.flush()?;
    if let Some(e) = write_err {
        return Err(e).context("writing metrics");
    }
    let report = match result {
        Ok(r) => r,
        Err(TrainError::Diverged { iteration, report }) => {
            fs::write(args.out.join("report.json"), to_json(&report))?;
            bail!("training diverged at iteration {iteration}; partial report written");
        }
        Err(e) => return Err(e.into()),
    };
    save_checkpoint(&model, args.out.join("model.smnckpt"))?;
    fs::write(args.out.join("report.json"), to_json(&report))?;
    if let Some(recon) = &report.reconstruction {
        let img = ImageSignal::from_predictions(recon, img.width(), img.height())?;
        save_image(&img, args.out.join("reconstruction.png"))?;
    }
    println!(
        "{} hidden={} params={} iters={} final_psnr={:.2} dB best_psnr={:.2} dB time={:.1}s",
        args.model.arch, mcfg.hidden, report.parameter_count, report.iterations, report.final_psnr, report.best_psnr, report.wall_seconds
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let model = load_checkpoint(&args.checkpoint)?;
    let img = load_input(&args.input, false)?;
    if model.config().out_dim != img.channels() {
        bail!("checkpoint predicts {} channels, image has {}", model.config().out_dim, img.channels());
    }
    let data = FitData::from_image(&img)?;
    let pred = model.predict(&data.coords)?;
    let recon = ImageSignal::from_predictions(&pred, img.width(), img.height())?;
    let psnr = psnr_images(&recon, &img)?;
    println!("psnr={psnr:.4} dB");
    if let Some(out) = &args.out {
        save_image(&recon, out)?;
    }
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let img = load_input(&args.input, args.paper_parity)?;
    let mut cfg = match &args.ablation_config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<AblationConfig>(&text)?
        }
        None if args.paper_parity => AblationConfig::paper_parity(),
        None => AblationConfig::default(),
    };
    cfg.base.out_dim = img.channels();
    if let Some(seeds) = args.seeds {
        cfg.seeds = seeds;
    }
    if let Some(h) = args.hidden {
        cfg.base.hidden = h;
    }
    if let Some(n) = args.iters {
        cfg.train.max_iters = n;
    }
    cfg.base.validate()?;
    cfg.train.validate()?;
    let data = FitData::from_image(&img)?;
    fs::create_dir_all(&args.out)?;
    let mut io_err = None;
    let summary = run_ablation(&cfg, &data, |cell, seed, report| {
        let name = format!("{}-seed{seed}.json", cell.label().replace('/', "_"));
        if let Err(e) = fs::write(args.out.join(name), to_json(report)) {
            io_err.get_or_insert(e);
        }
        println!("{} seed={seed} psnr={:.2}", cell.label(), report.final_psnr);
    });
    if let Some(e) = io_err {
        return Err(e).context("writing cell report");
    }
    let table = summary.to_table();
    fs::write(args.out.join("summary.txt"), &table)?;
    fs::write(args.out.join("summary.json"), to_json(&summary))?;
    print!("{table}");
    Ok(())
}

fn cmd_probe(args: ProbeArgs) -> Result<bool> {
    if !(args.omega.is_finite() && args.omega > 0.0) || args.depth == 0 {
        bail!("--omega must be positive and --depth at least 1");
    }
    let suite = run_probe_suite(args.omega, args.depth);
    for c in &suite.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        for (name, s) in &suite.spectra {
            fs::write(dir.join(format!("spectrum_{name}.txt")), s.to_text())?;
        }
    }
    Ok(suite.passed())
}

fn cmd_grad_check(args: GradCheckArgs) -> Result<bool> {
    let mut ok = true;
    for (label, cfg) in suite_configs(args.hidden, args.seed) {
        let model = build_model(&cfg)?;
        let (coords, targets) = random_batch(cfg.in_dim, cfg.out_dim, args.samples, args.seed);
        let fault = args.inject_fault.map(|param| InjectedFault { param, scale: 1.5 });
        let report = check_model(&model, &coords, &targets, DEFAULT_STEP, fault)?;
        let worst = report.worst().map_or_else(String::new, |w| {
            format!(" worst={} [{}] analytic={:.6e} numeric={:.6e}", w.name, w.index, w.analytic, w.numeric)
        });
        println!(
            "{} {label}: params={} max_rel_error={:.3e}{worst}",
            if report.passed { "PASS" } else { "FAIL" },
            report.parameter_count,
            report.max_rel_error
        );
        ok &= report.passed;
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Fit(a) => cmd_fit(a).map(|_| true),
        Command::Eval(a) => cmd_eval(a).map(|_| true),
        Command::Ablate(a) => cmd_ablate(a).map(|_| true),
        Command::Probe(a) => cmd_probe(a),
        Command::GradCheck(a) => cmd_grad_check(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
