//! `subband-esc`: batch driver for feature extraction, branch training,
//! fusion evaluation and the ablation sweeps.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use subband_esc::dsp::BandScheme;
use subband_esc::fusion::FusionWeights;
use subband_esc::harness::{
    cmd_evaluate, cmd_extract, cmd_fusion_curve, cmd_sweep, cmd_train, flag_product, generate_toy_dataset,
    table_runs, write_architecture_table, ExperimentConfig, ReportTable, RunOptions, ToySpec,
};
use subband_esc::model::Architecture;
use subband_esc::{Error, ErrorClass, Result};

#[derive(Debug, Parser)]
#[command(name = "subband-esc", version, about = "Sub-band CRNN environmental sound classification")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for extraction and branch training. Results do not
    /// depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Network {
    Crnn,
    Cnn,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the synthetic 5-class dataset and a matching config.
    GenToy {
        /// Where the WAV files go.
        #[arg(long, default_value = "toy-data")]
        dir: PathBuf,
        /// Also write a ready-to-use config here.
        #[arg(long)]
        write_config: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 40)]
        clips_per_class: usize,
    },
    /// Compute the per-band feature caches.
    Extract,
    /// Train one model per band and test fold.
    Train,
    /// Evaluate the trained branches with score fusion.
    Evaluate {
        /// Fixed fusion weights, e.g. `0.4,0.2,0.2,0.2`.
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
    },
    /// Run extract, train and evaluate over schemes and ablation switches.
    Sweep {
        /// Preset table (1-6). Table 2 is the layer/shape table.
        #[arg(long, conflicts_with_all = ["schemes", "networks", "mixup", "fusion"])]
        table: Option<u8>,
        /// Inner cut points in kHz, schemes separated by `;` (`-` for the
        /// whole band), e.g. `-;10;6,10`.
        #[arg(long)]
        schemes: Option<String>,
        #[arg(long, value_delimiter = ',')]
        networks: Option<Vec<Network>>,
        #[arg(long, value_delimiter = ',')]
        mixup: Option<Vec<Switch>>,
        #[arg(long, value_delimiter = ',')]
        fusion: Option<Vec<Switch>>,
    },
    /// Accuracy against the first-band weight for a two-band scheme.
    FusionCurve,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("this command needs --config <file>".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_schemes(text: &str, sample_rate_hz: u32) -> Result<Vec<BandScheme>> {
    text.split(';')
        .map(|s| {
            let s = s.trim();
            let inner: Vec<f64> = if s == "-" || s.is_empty() {
                Vec::new()
            } else {
                s.split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Config(format!("bad cut point `{v}` in --schemes")))
                    })
                    .collect::<Result<_>>()?
            };
            BandScheme::from_inner_khz(&inner, sample_rate_hz)
        })
        .collect()
}

fn switches(v: &Option<Vec<Switch>>, default: bool) -> Vec<bool> {
    match v {
        None => vec![default],
        Some(v) => v.iter().map(|s| matches!(s, Switch::On)).collect(),
    }
}

fn run(cli: &Cli) -> Result<()> {
    let opts = RunOptions {
        threads: cli.threads.max(1),
    };
    match &cli.command {
        Command::GenToy {
            dir,
            write_config,
            classes,
            clips_per_class,
        } => {
            let spec = ToySpec {
                n_classes: *classes,
                clips_per_class: *clips_per_class,
                ..Default::default()
            };
            let paths = generate_toy_dataset(dir, &spec, cli.seed.unwrap_or(1))?;
            println!("wrote {} clips to {}", paths.len(), dir.display());
            if let Some(p) = write_config {
                let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("toy-runs"));
                let mut cfg = ExperimentConfig::toy(dir, out);
                if let Some(s) = cli.seed {
                    cfg.seed = s;
                }
                cfg.save(p)?;
                println!("wrote config {}", p.display());
            }
        }
        Command::Extract => {
            let cfg = load_config(cli)?;
            let s = cmd_extract(&cfg, &opts)?;
            let state = if s.recomputed { "extracted" } else { "up to date" };
            println!(
                "{state}: {} clips, {} records per band, {} cache files in {}",
                s.n_clips,
                s.records_per_band,
                s.cache_files.len(),
                s.dir.display()
            );
        }
        Command::Train => {
            let cfg = load_config(cli)?;
            let s = cmd_train(&cfg, &opts)?;
            if !s.retrained {
                println!("up to date: {}", s.dir.display());
            }
            for b in &s.branches {
                match &b.last {
                    Some(r) => println!(
                        "fold {} band {}: best epoch {}, last epoch loss {:.4}, train acc {:.3}, val acc {}",
                        b.test_fold,
                        b.band,
                        b.best_epoch.unwrap_or(0),
                        r.train_loss,
                        r.train_acc,
                        r.val_acc.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into())
                    ),
                    None => println!("fold {} band {}: no epochs run", b.test_fold, b.band),
                }
            }
        }
        Command::Evaluate { weights } => {
            let cfg = load_config(cli)?;
            let w = weights.clone().map(FusionWeights::new).transpose()?;
            let ev = cmd_evaluate(&cfg, w.as_ref())?;
            for f in &ev.folds {
                println!(
                    "fold {}: weights {}, test accuracy {:.4} (branches {:?})",
                    f.split.test_fold,
                    f.weights.display(),
                    f.test_accuracy,
                    f.branch_test_accuracy
                );
            }
            println!("mean accuracy {:.4}", ev.row.mean_accuracy);
        }
        Command::Sweep {
            table,
            schemes,
            networks,
            mixup,
            fusion,
        } => {
            let cfg = load_config(cli)?;
            std::fs::create_dir_all(&cfg.output_dir)
                .map_err(|e| Error::io(format!("creating {}", cfg.output_dir.display()), e))?;
            let (kind, runs) = match table {
                Some(2) => {
                    let path = cfg.output_dir.join("table2.csv");
                    write_architecture_table(&path, 50, cfg.network)?;
                    println!("wrote {}", path.display());
                    return Ok(());
                }
                Some(n) => {
                    let kind = match n {
                        1 => ReportTable::Table1,
                        3 => ReportTable::Table3,
                        4 => ReportTable::Table4,
                        5 => ReportTable::Table5,
                        6 => ReportTable::Table6,
                        _ => return Err(Error::Config(format!("no preset table {n}; use 1 to 6"))),
                    };
                    (kind, table_runs(kind, &cfg)?)
                }
                None => {
                    let schemes = match schemes {
                        Some(s) => parse_schemes(s, cfg.spectrogram.sample_rate_hz)?,
                        None => vec![cfg.bands.clone()],
                    };
                    let nets: Vec<Architecture> = match networks {
                        None => vec![cfg.network],
                        Some(v) => v
                            .iter()
                            .map(|n| match n {
                                Network::Crnn => Architecture::Crnn,
                                Network::Cnn => Architecture::CnnOnly,
                            })
                            .collect(),
                    };
                    let runs = flag_product(
                        &schemes,
                        &nets,
                        &switches(mixup, cfg.mixup.enabled),
                        &switches(fusion, cfg.fusion.search),
                    );
                    (ReportTable::Sweep, runs)
                }
            };
            let report = cmd_sweep(&cfg, &runs, &opts)?;
            let path = cfg.output_dir.join(kind.file_name());
            report.write_csv(&path, kind)?;
            let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
            println!("wrote {} ({} rows, {failed} failed)", path.display(), report.rows.len());
            if let Some(e) = report.rows.iter().find_map(|r| r.error.as_ref()) {
                eprintln!("first failure: {e}");
            }
        }
        Command::FusionCurve => {
            let cfg = load_config(cli)?;
            let points = cmd_fusion_curve(&cfg)?;
            for p in &points {
                println!("w1 = {:.1}: accuracy {:.4}", p.w1, p.accuracy);
            }
            println!("wrote {}", cfg.output_dir.join("fig3.csv").display());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numeric => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
