//! `ccrcnn` command-line tool.

mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ccrcnn::backbone::load_checkpoint;
use ccrcnn::config::{Preset, RunConfig};
use ccrcnn::dataio::{
    generate_synthetic, load_dataset, read_detections, save_dataset, write_detections, Dataset,
    Split,
};
use ccrcnn::geomeval::{ap_range_with, Detection};
use ccrcnn::gradsuite::{run_suite, SuiteOptions};
use ccrcnn::tmatch::tm_baseline;
use ccrcnn::trainer::{detect_region, evaluate, mean_map, run_ablation, train, Variant};
use ccrcnn::{Error, Network};

#[derive(Parser, Debug)]
#[command(
    name = "ccrcnn",
    version,
    about = "Cascaded contextual region-based event detector for 1D series"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON run configuration merged over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seeds data generation, initialisation and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    preset: Option<Preset>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Template-matching threshold multiplier.
    #[arg(long, global = true)]
    mu: Option<f64>,
    /// Positive weight of the label-dependent loss.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Regression loss weight.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    no_context: bool,
    /// Detection scales to use, `i..j` (inclusive) or a single index.
    #[arg(long, global = true, value_parser = parse_scales)]
    scales: Option<ScaleRange>,
    /// Also write SVG plots into the output directory.
    #[arg(long, global = true)]
    plot: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset.
    Synth,
    /// Train a detector and write its checkpoint and metrics.
    Train {
        /// Dataset manifest; a fresh synthetic dataset when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run a trained detector over a split and write detections.
    Detect {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Score a model or a detections file on a split.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(
            long,
            conflicts_with = "detections",
            required_unless_present = "detections"
        )]
        model: Option<PathBuf>,
        #[arg(long)]
        detections: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Template-matching baseline with training-split templates.
    TmBaseline {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Finite-difference gradient checks over every layer type.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        trials: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Contextual x multi-scale ablation grid.
    Ablate {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Training seeds; each variant is trained once per seed.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
        /// Scale used by the single-scale variants.
        #[arg(long, default_value_t = 1)]
        single_scale: usize,
    },
}

#[derive(Debug, Clone)]
struct ScaleRange(Vec<usize>);

fn parse_scales(s: &str) -> Result<ScaleRange, String> {
    let bad = || format!("expected `i..j` or `i`, got '{s}'");
    match s.split_once("..") {
        Some((a, b)) => {
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().parse().map_err(|_| bad())?;
            if b < a {
                return Err(bad());
            }
            Ok(ScaleRange((a..=b).collect()))
        }
        None => Ok(ScaleRange(vec![s.trim().parse().map_err(|_| bad())?])),
    }
}

enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Numerical(_) => Failure::Numerical(e.to_string()),
            Error::Config(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn effective_config(c: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", p.display())))?;
            RunConfig::from_json(&text, c.preset)
                .map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::preset(c.preset.unwrap_or(Preset::Desk)),
    };
    if let Some(s) = c.seed {
        cfg.synth.seed = s;
        cfg.train.seed = s;
        cfg.model.init_seed = s;
    }
    if let Some(t) = c.threads {
        cfg.threads = Some(t);
    }
    if let Some(mu) = c.mu {
        cfg.tm.mu = mu;
    }
    if let Some(a) = c.alpha {
        cfg.model.loss.alpha = a;
    }
    if let Some(l) = c.lambda {
        cfg.model.loss.lambda = l;
    }
    if c.no_context {
        cfg.model.context.enabled = false;
    }
    if let Some(s) = &c.scales {
        cfg.model.scales = Some(s.0.clone());
    }
    cfg.model
        .validate()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    cfg.model
        .loss
        .validate()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    if cfg.tm.mu.is_nan() || cfg.tm.mu <= 0.0 {
        return Err(Failure::Usage(format!(
            "mu must be positive, got {}",
            cfg.tm.mu
        )));
    }
    Ok(cfg)
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn prepare_out(dir: &Path, cfg: &RunConfig) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_text(&dir.join("config.json"), &cfg.to_json()?)
}

fn dataset(data: Option<&Path>, cfg: &RunConfig) -> CliResult<Dataset> {
    Ok(match data {
        Some(p) => load_dataset(p)?,
        None => generate_synthetic(&cfg.synth)?,
    })
}

fn load_model(path: &Path, cfg: &RunConfig) -> CliResult<Network<f32>> {
    let mut net = Network::new(&cfg.model)?;
    load_checkpoint(path, &mut net)?;
    Ok(net)
}

fn write_report(out: &Path, report: &ccrcnn::EvalReport, plot: bool) -> CliResult<()> {
    let json = report.to_json()?;
    write_text(&out.join("report.json"), &json)?;
    println!("{json}");
    if plot {
        plot::pr_curves(&out.join("pr.svg"), report).map_err(Failure::Data)?;
    }
    Ok(())
}

fn write_dets(
    out: &Path,
    dets: &[Detection],
    waveform: &[f32],
    region: (usize, usize),
    plot: bool,
) -> CliResult<()> {
    write_detections(&out.join("detections.csv"), dets)?;
    if plot {
        plot::detections(&out.join("detections.svg"), waveform, region, dets)
            .map_err(Failure::Data)?;
    }
    Ok(())
}

fn region(ds: &Dataset, split: Split) -> CliResult<(usize, usize)> {
    ds.split_region(split)
        .ok_or_else(|| Failure::Data(format!("split {split:?} has no events")))
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = effective_config(&cli.common)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let out = cli.common.out.as_path();
    let plot = cli.common.plot;
    prepare_out(out, &cfg)?;
    match cli.command {
        Command::Synth => {
            let ds = generate_synthetic(&cfg.synth)?;
            let manifest = save_dataset(out, &ds, Some(&cfg.synth))?;
            println!(
                "{} events ({} train, {} val, {} test) over {} samples -> {}",
                ds.events.len(),
                ds.train.len(),
                ds.val.len(),
                ds.test.len(),
                ds.waveform.len(),
                manifest.display()
            );
        }
        Command::Train { data } => {
            let ds = dataset(data.as_deref(), &cfg)?;
            let mut tc = cfg.train.clone();
            tc.checkpoint.get_or_insert_with(|| out.join("model.ccr"));
            let net = Network::new(&cfg.model)?;
            let outcome = train(net, &ds, &tc, Some(out), &mut |m| {
                eprintln!(
                    "epoch {} loss {:.6} val_map {} lr {:e}",
                    m.epoch,
                    m.loss,
                    m.val_map.map_or("-".into(), |v| format!("{v:.4}")),
                    m.lr
                );
            })?;
            if plot {
                plot::metrics(&out.join("metrics.svg"), &outcome.metrics).map_err(Failure::Data)?;
            }
            let (report, _) = evaluate(&outcome.network, &ds, Split::Test, tc.overlap, tc.ap_mode)?;
            println!(
                "best epoch {:?}, val mAP {:?}; test AP50 {:.4}, mAP {:.4}",
                outcome.best_epoch,
                outcome.best_val_map,
                report.ap50(),
                report.map
            );
            write_text(&out.join("test_report.json"), &report.to_json()?)?;
        }
        Command::Detect { data, model, split } => {
            let ds = load_dataset(&data)?;
            let net = load_model(&model, &cfg)?;
            let r = region(&ds, split)?;
            let dets = detect_region(&net, &ds.waveform, r.0, r.1, cfg.train.overlap)?;
            println!("{} detections", dets.len());
            write_dets(out, &dets, &ds.waveform, r, plot)?;
        }
        Command::Eval {
            data,
            model,
            detections,
            split,
        } => {
            let ds = load_dataset(&data)?;
            let report = match (model, detections) {
                (Some(m), _) => {
                    evaluate(
                        &load_model(&m, &cfg)?,
                        &ds,
                        split,
                        cfg.train.overlap,
                        cfg.train.ap_mode,
                    )?
                    .0
                }
                (None, Some(d)) => ap_range_with(
                    &read_detections(&d)?,
                    &ds.split_events(split),
                    cfg.train.ap_mode,
                )?,
                (None, None) => {
                    return Err(Failure::Usage("eval needs --model or --detections".into()))
                }
            };
            write_report(out, &report, plot)?;
        }
        Command::TmBaseline { data, split } => {
            let ds = load_dataset(&data)?;
            let (report, dets) = tm_baseline(&ds, split, &cfg.tm, cfg.train.ap_mode)?;
            write_dets(out, &dets, &ds.waveform, region(&ds, split)?, plot)?;
            write_report(out, &report, plot)?;
        }
        Command::Gradcheck { trials, tolerance } => {
            let opts = SuiteOptions {
                trials,
                tolerance,
                ..SuiteOptions::default()
            };
            let cases = run_suite(&opts)?;
            let mut failed = Vec::new();
            println!(
                "{:<24} {:>12} {:>9} {:>8}  result",
                "case", "max rel err", "checked", "skipped"
            );
            for c in &cases {
                let ok = c.passed();
                println!(
                    "{:<24} {:>12.3e} {:>9} {:>8}  {}",
                    c.name,
                    c.report.max_rel_error,
                    c.report.checked,
                    c.report.skipped,
                    if ok { "pass" } else { "FAIL" }
                );
                if !ok {
                    failed.push(c.name.clone());
                }
            }
            if !failed.is_empty() {
                return Err(Failure::Numerical(format!(
                    "gradient check failed: {}",
                    failed.join(", ")
                )));
            }
        }
        Command::Ablate {
            data,
            seeds,
            single_scale,
        } => {
            let ds = dataset(data.as_deref(), &cfg)?;
            let variants = Variant::grid(single_scale);
            let rows = run_ablation(&ds, &cfg.model, &cfg.train, &variants, &seeds, &mut |r| {
                eprintln!(
                    "{} seed {}: mAP {:.4} AP50 {:.4}",
                    r.variant, r.seed, r.test_map, r.test_ap50
                );
            })?;
            let mut csv = String::from("variant,seed,test_map,test_ap50\n");
            for r in &rows {
                csv.push_str(&format!(
                    "{},{},{:.6},{:.6}\n",
                    r.variant, r.seed, r.test_map, r.test_ap50
                ));
            }
            write_text(&out.join("ablation.csv"), &csv)?;
            println!("{:<24} {:>10}", "variant", "mean mAP");
            for v in &variants {
                if let Some(m) = mean_map(&rows, v) {
                    println!("{:<24} {:>10.4}", v.name(), m);
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, msg) = match f {
                Failure::Usage(m) => (1, m),
                Failure::Data(m) => (2, m),
                Failure::Numerical(m) => (3, m),
            };
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
