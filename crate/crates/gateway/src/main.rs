use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use contcomm_bench::{run_cell, run_grid, square_grid, table, write_csv, BenchConfig};
use contcomm_core::corpus::{load_dictionary, StreamSource, TweetStream};
use contcomm_core::{Clock, HazardDictionary, SystemClock};
use contcomm_gateway::config::{PipelineConfig, SourceConfig};
use contcomm_gateway::ingest::{self, BatchPolicy};
use contcomm_gateway::liveness::{spawn_checker, Supervisor};
use contcomm_gateway::{router, Gateway, Pipeline};

#[derive(Debug, Parser)]
#[command(name = "contcomm", about = "Geolocated hazard communities from social media streams")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Print the posts of a source that match a hazard dictionary, as JSON lines.
    Ingest {
        /// A JSON-lines file, or `synthetic`.
        #[arg(long)]
        source: String,
        #[arg(long)]
        dict: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Records per second; unpaced when omitted.
        #[arg(long)]
        rate: Option<f64>,
        /// Posts to generate with the synthetic source.
        #[arg(long, default_value_t = 1000)]
        count: usize,
    },
    /// Run the pipeline over a recorded stream and print the community report.
    Replay {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the pipeline on the configured source and serve the HTTP API.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Time one cell of the store benchmark.
    Bench {
        #[arg(long)]
        writers: usize,
        #[arg(long)]
        readers: usize,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the benchmark over a square writers x readers grid.
    BenchGrid {
        #[arg(long, value_delimiter = ',', default_value = "100,1000,10000,100000")]
        grid: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long, default_value = "report.csv")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the default configuration as TOML.
    DefaultConfig,
}

fn load_config(path: Option<&PathBuf>) -> Result<PipelineConfig> {
    Ok(match path {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => PipelineConfig::default(),
    })
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().cmd {
        Cmd::Ingest {
            source,
            dict,
            seed,
            rate,
            count,
        } => ingest_cmd(&source, dict, seed, rate, count),
        Cmd::Replay { source, config, out } => {
            let mut cfg = load_config(config.as_ref())?;
            cfg.source = SourceConfig::File {
                path: source.clone(),
                rate: None,
            };
            let mut p = Pipeline::new(cfg, Arc::new(SystemClock))?;
            let outcomes = p.replay_file(&source)?;
            let report = p.report();
            tracing::info!(batches = outcomes.len(), communities = p.communities().len(), "replay finished");
            if let Some(out) = out {
                std::fs::write(&out, &report).with_context(|| format!("writing {}", out.display()))?;
            }
            println!("{report}");
            Ok(())
        }
        Cmd::Serve { config } => serve(load_config(config.as_ref())?),
        Cmd::Bench {
            writers,
            readers,
            runs,
            seed,
        } => {
            let cfg = BenchConfig { seed, ..Default::default() };
            let r = run_cell(&cfg, writers, readers, runs)?;
            println!("writers={} readers={} runs={} mean_s={:.6} stdev_s={:.6}", r.writers, r.readers, r.runs, r.mean_s, r.stdev_s);
            if !r.durable {
                bail!("acknowledged writes were lost");
            }
            Ok(())
        }
        Cmd::BenchGrid { grid, runs, out, seed } => {
            let cfg = BenchConfig { seed, ..Default::default() };
            let reports = run_grid(&cfg, &square_grid(&grid), runs)?;
            write_csv(&out, &reports)?;
            println!("{}", table(&reports));
            Ok(())
        }
        Cmd::DefaultConfig => {
            print!("{}", PipelineConfig::default().to_toml());
            Ok(())
        }
    }
}

fn ingest_cmd(source: &str, dict: Option<PathBuf>, seed: u64, rate: Option<f64>, count: usize) -> Result<()> {
    let dict = match dict {
        Some(p) => load_dictionary(&p).with_context(|| format!("loading {}", p.display()))?,
        None => HazardDictionary::builtin_flood(),
    };
    let src = if source == "synthetic" {
        StreamSource::Synthetic {
            seed,
            count: Some(count),
            rate,
        }
    } else {
        StreamSource::FileReplay {
            path: source.into(),
            rate,
        }
    };
    let filter = contcomm_core::corpus::StreamFilter::new(Arc::new(dict));
    let mut stream = TweetStream::new(src.open()?, filter, rate);
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for rec in stream.by_ref() {
        writeln!(out, "{}", rec.to_json_line())?;
    }
    let s = stream.stats();
    tracing::info!(accepted = s.accepted, filtered_out = s.filtered_out, malformed = s.malformed, "ingest finished");
    Ok(())
}

fn serve(cfg: PipelineConfig) -> Result<()> {
    let clock: Arc<dyn Clock> = Arc::new(SystemClock);
    let gw = Gateway::new(cfg.clone(), clock.clone())?;
    let source = cfg.source.stream_source(cfg.seeds.synthetic);
    let sup = Arc::new(Supervisor::new(Box::new(source.clone()), clock, cfg.liveness_interval()));
    gw.set_supervisor(sup.clone());
    let stop = Arc::new(AtomicBool::new(false));
    let interval = Duration::from_millis(cfg.liveness_interval_ms);

    let checker = spawn_checker(sup.clone(), interval, stop.clone(), |r| {
        tracing::debug!(checks = r.checks, restarts = r.restarts, healthy = r.healthy, "liveness check");
    });

    let filter = gw.with_pipeline(|p| p.stream_filter());
    let policy = BatchPolicy {
        interval: Duration::from_millis(cfg.batch_interval_ms),
        max: cfg.batch_max,
        rate: source.rate(),
        idle: Duration::from_millis(20),
    };
    let collector = {
        let (gw, sup, stop) = (gw.clone(), sup.clone(), stop.clone());
        std::thread::spawn(move || {
            let s = ingest::run(&gw, &sup, filter, policy, &stop);
            tracing::info!(records = s.records, batches = s.batches, quarantined = s.quarantined, "collector stopped");
        })
    };

    let maintenance = {
        let (gw, stop) = (gw.clone(), stop.clone());
        std::thread::spawn(move || {
            while !stop.load(Ordering::SeqCst) {
                for _ in 0..20 {
                    if stop.load(Ordering::SeqCst) {
                        return;
                    }
                    std::thread::sleep(Duration::from_millis(50));
                }
                match gw.maintain() {
                    Ok(expired) if !expired.is_empty() => tracing::info!(?expired, "pins expired"),
                    Ok(_) => {}
                    Err(e) => tracing::error!(error = %e, "maintenance failed"),
                }
            }
        })
    };

    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let served = rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&cfg.listen)
            .await
            .with_context(|| format!("binding {}", cfg.listen))?;
        tracing::info!(addr = %listener.local_addr()?, "serving");
        axum::serve(listener, router(gw.clone()))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .context("http server")
    });
    stop.store(true, Ordering::SeqCst);
    for h in [checker, collector, maintenance] {
        let _ = h.join();
    }
    served
}
