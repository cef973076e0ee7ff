use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use mmsurv::checkpoint::Checkpoint;
use mmsurv::config::ExperimentConfig;
use mmsurv::harness::{self, Progress};
use mmsurv::report::{self, stamp};
use mmsurv::{Error, Result};
use mmsurv_core::survival::assign_bins;

/// Multimodal survival prediction under single-source domain shift.
#[derive(Parser)]
#[command(name = "mmsurv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML). Defaults to the built-in synthetic benchmark.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory. Overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run this seed only instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic domains of the config as dataset directories.
    Generate(Common),
    /// Train on the source domain and write checkpoints and loss logs.
    Train(Common),
    /// Evaluate a checkpoint on one domain.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Domain id from the config (default: every target).
        #[arg(long)]
        domain: Option<String>,
    },
    /// Backbone / +SDIR / +CADE / both table.
    Ablate(Common),
    /// Alpha sweep at fixed gamma and gamma sweep at fixed alpha.
    Grid {
        #[command(flatten)]
        common: Common,
        /// Comma-separated SDIR drop rates. Defaults to `grid.alphas`
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        /// Comma-separated CADE gammas. Defaults to `grid.gammas`
        #[arg(long, value_delimiter = ',')]
        gammas: Option<Vec<f64>>,
    },
    /// Train and evaluate every seed and write the full report.
    Report(Common),
    /// Print the built-in benchmark config as TOML.
    Config,
}

struct Ctx {
    cfg: ExperimentConfig,
    out: PathBuf,
    started: Instant,
}

impl Ctx {
    fn new(c: &Common) -> Result<Self> {
        let mut cfg = match &c.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::benchmark(),
        };
        if let Some(s) = c.seed {
            cfg = cfg.with_seeds(vec![s]);
        }
        let out = c
            .out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("mmsurv-out"));
        report::ensure_writable(&out)?;
        eprintln!("config {}", cfg.hash());
        Ok(Self {
            cfg,
            out,
            started: Instant::now(),
        })
    }

    fn progress(&self) -> impl FnMut(Progress<'_>) + '_ {
        move |p| match p {
            Progress::Epoch { seed, log } => eprintln!(
                "seed {seed} epoch {:>3} total {:.5} (clean {:.5} sdir {:.5} kl {:.5})",
                log.epoch, log.total, log.clean, log.sdir, log.kl
            ),
            Progress::SeedDone { seed } => eprintln!(
                "seed {seed} done after {:.1}s",
                self.started.elapsed().as_secs_f64()
            ),
        }
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        let path = self.out.join(name);
        std::fs::write(&path, text).map_err(|e| Error::Io { path, source: e })
    }
}

fn generate(c: &Common) -> Result<()> {
    let ctx = Ctx::new(c)?;
    for d in &ctx.cfg.domains {
        if d.synthetic.is_none() {
            continue;
        }
        let data = harness::load_domain(&ctx.cfg, &d.id)?;
        let dir = ctx.out.join(&d.id);
        data.save(&dir)?;
        eprintln!("wrote {}", dir.display());
    }
    Ok(())
}

fn train(c: &Common) -> Result<()> {
    let ctx = Ctx::new(c)?;
    let prep = harness::prepare(&ctx.cfg)?;
    let mut logs = Vec::new();
    let mut progress = ctx.progress();
    for &seed in &ctx.cfg.seeds {
        let (ckpt, log) = harness::train_seed(&ctx.cfg, &prep, seed, |l| {
            progress(Progress::Epoch { seed, log: l })
        })?;
        ckpt.save(&ctx.out.join(format!("seed{seed}.ckpt")))?;
        progress(Progress::SeedDone { seed });
        logs.push((seed, log));
    }
    let view: Vec<_> = logs.iter().map(|(s, l)| (*s, l.as_slice())).collect();
    ctx.write("loss.csv", &report::log_csv(&ctx.cfg.hash(), &view))
}

fn evaluate(c: &Common, checkpoint: &Path, domain: Option<&str>) -> Result<()> {
    let ctx = Ctx::new(c)?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let ids: Vec<String> = match domain {
        Some(d) => vec![d.to_string()],
        None => ctx.cfg.targets.clone(),
    };
    let hash = &ckpt.config_hash;
    let mut table = stamp("#", hash);
    table.push_str("domain,n,events,c_index\n");
    for id in &ids {
        let mut data = harness::load_domain(&ctx.cfg, id)?;
        assign_bins(data.batch.labels_mut(), &ckpt.bin_edges);
        let e = harness::evaluate(&ckpt, &data)?;
        let c = e.c_index.map_or_else(|| "NA".into(), |v| format!("{v:?}"));
        table.push_str(&format!("{id},{},{},{c}\n", e.n, e.events));
        ctx.write(&format!("km-{id}.csv"), &report::km_csv(hash, &e))?;
        ctx.write(&format!("km-{id}.svg"), &report::km_svg(hash, &e))?;
        println!("{id}: C-index {c}");
    }
    ctx.write("evaluation.csv", &table)
}

fn ablate(c: &Common) -> Result<()> {
    let ctx = Ctx::new(c)?;
    let table = harness::run_ablation(&ctx.cfg, ctx.progress())?;
    report::emit_table(&table, &ctx.out, "ablation")?;
    print!("{}", table.to_text());
    Ok(())
}

fn grid(c: &Common, alphas: Option<&[f64]>, gammas: Option<&[f64]>) -> Result<()> {
    let ctx = Ctx::new(c)?;
    let alphas = alphas.unwrap_or(&ctx.cfg.grid.alphas);
    let gammas = gammas.unwrap_or(&ctx.cfg.grid.gammas);
    let (a, g) = harness::run_grid(&ctx.cfg, alphas, gammas, ctx.progress())?;
    report::emit_table(&a, &ctx.out, "grid_alpha")?;
    report::emit_table(&g, &ctx.out, "grid_gamma")?;
    print!("{}\n{}", a.to_text(), g.to_text());
    Ok(())
}

fn full_report(c: &Common) -> Result<()> {
    let ctx = Ctx::new(c)?;
    let r = harness::run(&ctx.cfg, ctx.progress())?;
    report::emit_report(&r, &ctx.out)?;
    print!("{}", report::summary_text(&r));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let result = match &cli.command {
        Command::Generate(c) => generate(c),
        Command::Train(c) => train(c),
        Command::Evaluate {
            common,
            checkpoint,
            domain,
        } => evaluate(common, checkpoint, domain.as_deref()),
        Command::Ablate(c) => ablate(c),
        Command::Grid {
            common,
            alphas,
            gammas,
        } => grid(common, alphas.as_deref(), gammas.as_deref()),
        Command::Report(c) => full_report(c),
        Command::Config => {
            print!("{}", ExperimentConfig::benchmark().to_toml_string());
            return ExitCode::SUCCESS;
        }
    };
    match result {
        Ok(()) => {
            eprintln!("finished in {:.1}s", started.elapsed().as_secs_f64());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            ExitCode::from(e.exit_code())
        }
    }
}
