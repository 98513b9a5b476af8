use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use paas_core::experiment::{self, ExperimentConfig};
use paas_core::imageio::{self, BitDepth};
use paas_core::polar::{self, DemosaicMethod, DolpMode, MosaicFrame, MosaicPattern, DEFAULT_EPS};
use paas_core::synth::Channel;

/// Polarization-based face anti-spoofing toolkit.
#[derive(Parser)]
#[command(name = "paas", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic dataset of an experiment.
    Synth(ExperimentArgs),
    /// Compute the DOLP image of a PFA mosaic PGM.
    Dolp(DolpArgs),
    /// Train the embedding network and SVM head.
    Train(ExperimentArgs),
    /// Evaluate PAAS and the baselines; write report and ROC CSVs.
    Eval(ExperimentArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override: the dataset seed for `synth`, the training seed for `train`.
    #[arg(long)]
    seed: Option<u64>,
    /// Restrict to one channel.
    #[arg(long)]
    channel: Option<Channel>,
}

#[derive(Args)]
struct DolpArgs {
    /// Mosaic PGM (8 or 16 bit).
    input: PathBuf,
    /// Output PFM path.
    #[arg(long)]
    out: PathBuf,
    /// Micro-polarizer angles of the 2x2 superpixel, rows separated by ';'.
    #[arg(long, default_value = "0,45;90,135")]
    pattern: MosaicPattern,
    #[arg(long, default_value = "normalized")]
    dolp_mode: DolpMode,
    #[arg(long, default_value = "bilinear")]
    demosaic: DemosaicMethod,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    /// Also write i0/i45/i90/i135 PGMs into this directory.
    #[arg(long)]
    angles: Option<PathBuf>,
}

fn load_config(args: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)
        .with_context(|| format!("loading config {}", args.config.display()))?;
    if let Some(out) = &args.out {
        cfg.out = std::env::current_dir()?.join(out);
    }
    if let Some(ch) = args.channel {
        cfg.channels = vec![ch];
    }
    Ok(cfg)
}

fn cmd_synth(args: &ExperimentArgs) -> Result<()> {
    let mut cfg = load_config(args)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let manifest = experiment::run_synth(&cfg)?;
    println!("manifest: {}", cfg.manifest_path().display());
    for (label, n) in manifest.label_counts() {
        println!("{label}: {n}");
    }
    Ok(())
}

fn cmd_train(args: &ExperimentArgs) -> Result<()> {
    let mut cfg = load_config(args)?;
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    for t in experiment::run_train(&cfg)? {
        let loss = t
            .log
            .final_loss()
            .map_or_else(|| "n/a".to_string(), |l| format!("{l:.6}"));
        println!(
            "{}: {} parameters, final loss {loss}, checkpoint {}",
            t.channel,
            t.model.param_count(),
            cfg.embed_checkpoint(t.channel).display()
        );
    }
    Ok(())
}

fn cmd_eval(args: &ExperimentArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let rows = experiment::run_eval(&cfg)?;
    println!(
        "{:<6} {:<9} {:>8} {:>11} {:>11}",
        "chan", "method", "eer", "tpr@1e-2", "tpr@1e-3"
    );
    for r in &rows {
        let m = &r.metrics;
        println!(
            "{:<6} {:<9} {:>8.4} {:>11.4} {:>11.4}",
            r.channel, r.method, m.eer, m.tpr_at_1e2, m.tpr_at_1e3
        );
    }
    println!("report: {}", cfg.report_path().display());
    Ok(())
}

fn cmd_dolp(args: &DolpArgs) -> Result<()> {
    let (plane, _) = imageio::read_pgm(&args.input)?;
    let frame = MosaicFrame::new(plane, args.pattern)
        .with_context(|| format!("decoding mosaic {}", args.input.display()))?;
    let (angles, dolp) = polar::dolp_from_mosaic(&frame, args.demosaic, args.dolp_mode, args.eps)?;
    imageio::write_pfm(&args.out, &dolp.values)?;
    if let Some(dir) = &args.angles {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, img) in [
            ("i0", &angles.i0),
            ("i45", &angles.i45),
            ("i90", &angles.i90),
            ("i135", &angles.i135),
        ] {
            imageio::write_pgm(dir.join(format!("{name}.pgm")), img, BitDepth::Sixteen)?;
        }
    }
    let v = &dolp.values;
    println!("min {:.6} mean {:.6} max {:.6}", v.min(), v.mean(), v.max());
    Ok(())
}

fn configure_threads() -> Result<()> {
    if let Ok(s) = std::env::var("PAAS_THREADS") {
        let n: usize = s
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .with_context(|| format!("PAAS_THREADS must be a positive integer, got {s:?}"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Dolp(a) => cmd_dolp(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
