//! Argument parsing and command implementations for the `skylink` binary.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use skylink::beam::{build_tables, read_tables, write_tables};
use skylink::channel::generate_dataset;
use skylink::config::Settings;
use skylink::dataset::{read_dataset, write_dataset};
use skylink::dqn::{DqnTrainer, QNetwork};
use skylink::eval::{aggregate, cdf_csv, evaluate, records_csv, write_text, EvalContext, EvalRecord, Method, METHOD_NAMES};
use skylink::ppo::{ActorCritic, PpoTrainer, TrainingSet};
use skylink::{BeamGainTable, Scenario};

#[derive(Parser)]
#[command(name = "skylink", version, about = "UAV/BS/beam association workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Sample channel-twin scenarios into a binary dataset.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Tabulate element, array and total gain for one scan angle.
    Pattern {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Scan azimuth in degrees.
        #[arg(long, allow_negative_numbers = true)]
        scan: f64,
        #[arg(long)]
        out: PathBuf,
        /// Grid spacing in degrees.
        #[arg(long, default_value_t = 1.0)]
        step: f64,
    },
    /// Anneal the best scan angle of every link into a beam table.
    Beams {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the multi-head PPO agent.
    TrainPpo {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        beams: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        curve: PathBuf,
    },
    /// Train the multi-head DQN baseline.
    TrainDqn {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        beams: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        curve: PathBuf,
    },
    /// Run one heuristic baseline and write per-scenario results.
    Baseline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        method: Heuristic,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        beams: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Include per-decision wall-clock latency (not reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Evaluate several methods; exits nonzero if any record fails the
    /// reward identity.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "ppo,dqn,hungarian,maxgain,closest,random")]
        methods: Vec<String>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        beams: PathBuf,
        /// Directory holding `ppo.ckpt` and `dqn.ckpt`.
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        timing: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Heuristic {
    Hungarian,
    Maxgain,
    Closest,
    Random,
}

fn load_data(settings: &Settings, dataset: &Path, beams: &Path) -> Result<(Vec<Scenario>, Vec<BeamGainTable>)> {
    let scenarios = read_dataset(dataset).with_context(|| format!("reading dataset {}", dataset.display()))?;
    let tables = read_tables(beams).with_context(|| format!("reading beam table {}", beams.display()))?;
    ensure!(
        scenarios.len() == tables.len(),
        "dataset has {} scenarios but the beam file has {} tables",
        scenarios.len(),
        tables.len()
    );
    check_scene(settings, &scenarios)?;
    Ok((scenarios, tables))
}

fn check_scene(settings: &Settings, scenarios: &[Scenario]) -> Result<()> {
    let scene = &settings.scene;
    let want = (scene.num_uavs, scene.num_bs, scene.num_beams);
    if let Some(s) = scenarios.first() {
        ensure!(
            s.channel.dims() == want,
            "dataset is (M, L, N) = {:?} but the configuration describes {want:?}",
            s.channel.dims()
        );
    }
    Ok(())
}

fn context(settings: &Settings) -> Result<EvalContext> {
    Ok(EvalContext {
        env: settings.environment()?,
        bs_positions: settings.scene.bs_positions.clone(),
    })
}

fn write_records(path: &Path, records: &[EvalRecord], timing: bool) -> Result<usize> {
    write_text(path, &records_csv(records, timing))?;
    Ok(records.len())
}

/// Returns the number of records that violate an output invariant.
fn consistency_failures(records: &[EvalRecord], eta: f64, num_uavs: usize) -> usize {
    records
        .iter()
        .filter(|r| {
            !r.reward_consistent(eta)
                || r.rates_mbps.iter().any(|x| !(*x >= 0.0))
                || r.admitted > num_uavs
                || !(r.latency_ms > 0.0)
        })
        .count()
}

/// Outcome of a successful command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Evaluation finished but some records broke an output invariant.
    ConsistencyFailure,
}

/// Parses `args` (program name first) and runs the command.
pub fn run_args<I, T>(args: I) -> Result<Status>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run(Cli::try_parse_from(args)?)
}

pub fn run(cli: Cli) -> Result<Status> {
    match cli.command {
        Command::Generate { config, out, count, seed } => {
            let settings = Settings::load_or_default(config.as_deref())?;
            let scenarios = generate_dataset(&settings.scene, count, seed)?;
            write_dataset(&out, &scenarios)?;
            eprintln!("wrote {count} scenarios to {}", out.display());
        }
        Command::Pattern { config, scan, out, step } => {
            ensure!(step > 0.0 && step.is_finite(), "--step must be positive");
            let settings = Settings::load_or_default(config.as_deref())?;
            let antenna = &settings.antenna;
            let mut text = String::from("zenith_deg,azimuth_deg,element_db,array_db,total_db\n");
            let zen_steps = (180.0 / step).floor() as usize;
            let az_steps = (360.0 / step).floor() as usize;
            for i in 0..=zen_steps {
                let zenith = i as f64 * step;
                for j in 0..=az_steps {
                    let azimuth = -180.0 + j as f64 * step;
                    let e = antenna.element.gain_db(zenith, azimuth);
                    let a = antenna.array.array_gain_db(zenith, azimuth, scan);
                    writeln!(text, "{zenith},{azimuth},{e},{a},{}", e + a)?;
                }
            }
            write_text(&out, &text)?;
        }
        Command::Beams { config, dataset, out } => {
            let settings = Settings::load_or_default(config.as_deref())?;
            let scenarios = read_dataset(&dataset)?;
            check_scene(&settings, &scenarios)?;
            let tables = build_tables(&scenarios, &settings.scene, &settings.antenna, &settings.anneal)?;
            write_tables(&out, &tables)?;
            eprintln!("wrote {} beam tables to {}", tables.len(), out.display());
        }
        Command::TrainPpo { config, dataset, beams, out, curve } => {
            let settings = Settings::load_or_default(config.as_deref())?;
            let (scenarios, tables) = load_data(&settings, &dataset, &beams)?;
            let env = settings.environment()?;
            let data = TrainingSet { scenarios: &scenarios, tables: &tables };
            data.check(&env)?;
            let cfg = settings.ppo.clone();
            let mut rng = skylink::ppo::seeded_rng(cfg.seed);
            let net = ActorCritic::new(
                (env.num_uavs, env.num_bs, env.num_beams),
                &cfg.trunk,
                &cfg.critic_hidden,
                data.fit_normalizer()?,
                &mut rng,
            )?;
            let mut trainer = PpoTrainer::new(net, cfg, rng)?;
            let points = trainer.train(&env, &data, |p, s| {
                eprintln!(
                    "step {:>9}  reward {:>10.4}  beta {:.4}  entropy {:.4}  kl {:.4}",
                    p.step, p.mean_reward, p.entropy_beta, s.entropy, s.approx_kl
                );
            })?;
            let mut text = String::from("step,mean_reward,entropy_beta\n");
            for p in &points {
                writeln!(text, "{},{},{}", p.step, p.mean_reward, p.entropy_beta)?;
            }
            write_text(&curve, &text)?;
            trainer.net.save(&out)?;
        }
        Command::TrainDqn { config, dataset, beams, out, curve } => {
            let settings = Settings::load_or_default(config.as_deref())?;
            let (scenarios, tables) = load_data(&settings, &dataset, &beams)?;
            let env = settings.environment()?;
            let data = TrainingSet { scenarios: &scenarios, tables: &tables };
            data.check(&env)?;
            let cfg = settings.dqn.clone();
            let mut rng = skylink::ppo::seeded_rng(cfg.seed);
            let net = QNetwork::new((env.num_uavs, env.num_bs, env.num_beams), &cfg.trunk, data.fit_normalizer()?, &mut rng)?;
            let mut trainer = DqnTrainer::new(net, cfg, rng)?;
            let points = trainer.train(&env, &data, |p| {
                eprintln!("step {:>9}  reward {:>10.4}  epsilon {:.4}", p.step, p.mean_reward, p.epsilon);
            })?;
            let mut text = String::from("step,mean_reward,epsilon\n");
            for p in &points {
                writeln!(text, "{},{},{}", p.step, p.mean_reward, p.epsilon)?;
            }
            write_text(&curve, &text)?;
            trainer.online.save(&out)?;
        }
        Command::Baseline { config, method, dataset, beams, out, timing } => {
            let settings = Settings::load_or_default(config.as_deref())?;
            let (scenarios, tables) = load_data(&settings, &dataset, &beams)?;
            let method = match method {
                Heuristic::Hungarian => Method::Hungarian,
                Heuristic::Maxgain => Method::MaxGain,
                Heuristic::Closest => Method::Closest,
                Heuristic::Random => Method::Random {
                    seed: settings.eval.random_seed,
                },
            };
            let records = evaluate(&method, &context(&settings)?, &scenarios, &tables)?;
            write_records(&out, &records, timing)?;
            if !records.is_empty() {
                let s = aggregate(&records)?;
                println!(
                    "{}: mean reward {:.4}, mean throughput {:.4} Mb/s, p5 {:.4} Mb/s",
                    s.method, s.mean_reward, s.mean_throughput, s.p5_throughput
                );
            }
        }
        Command::Evaluate { config, methods, dataset, beams, checkpoints, out, timing } => {
            let settings = Settings::load_or_default(config.as_deref())?;
            let (scenarios, tables) = load_data(&settings, &dataset, &beams)?;
            let ctx = context(&settings)?;
            std::fs::create_dir_all(&out)?;
            let checkpoint = |name: &str| -> Result<PathBuf> {
                let dir = checkpoints.as_ref().context("--checkpoints is required for learned methods")?;
                Ok(dir.join(format!("{name}.ckpt")))
            };
            let mut summaries = Vec::new();
            let mut failures = 0;
            for name in &methods {
                let method = match name.as_str() {
                    "ppo" => Method::Ppo(Box::new(ActorCritic::load(&checkpoint("ppo")?)?)),
                    "dqn" => Method::Dqn(Box::new(QNetwork::load(&checkpoint("dqn")?)?)),
                    "hungarian" => Method::Hungarian,
                    "maxgain" => Method::MaxGain,
                    "closest" => Method::Closest,
                    "random" => Method::Random {
                        seed: settings.eval.random_seed,
                    },
                    other => bail!("unknown method {other:?}; expected one of {}", METHOD_NAMES.join(",")),
                };
                let records = evaluate(&method, &ctx, &scenarios, &tables)?;
                let bad = consistency_failures(&records, ctx.env.budget.penalty_eta, ctx.env.num_uavs);
                if bad > 0 {
                    eprintln!("{name}: {bad} records fail the consistency check");
                }
                failures += bad;
                write_records(&out.join(format!("{name}.csv")), &records, timing)?;
                if records.is_empty() {
                    continue;
                }
                let mut summary = aggregate(&records)?;
                if !timing {
                    summary.mean_latency_ms = None;
                }
                write_text(&out.join(format!("{name}_cdf.csv")), &cdf_csv(&summary))?;
                println!(
                    "{:<10} mean reward {:>10.4}  throughput {:>9.4}  p5 {:>9.4}  overcap {:.3}",
                    name, summary.mean_reward, summary.mean_throughput, summary.p5_throughput, summary.mean_overcap
                );
                summaries.push(summary);
            }
            let json = serde_json::to_string_pretty(&summaries)?;
            write_text(&out.join("summary.json"), &(json + "\n"))?;
            if failures > 0 {
                eprintln!("consistency check failed for {failures} records");
                return Ok(Status::ConsistencyFailure);
            }
        }
    }
    Ok(Status::Ok)
}
