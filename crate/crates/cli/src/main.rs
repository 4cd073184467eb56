use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use meshchain::experiment::{compare_placements, run_experiment, ExperimentConfig};
use meshchain::placement::{basp, hlf_roles, poa_roles, random_placement, PlacementMethod};
use meshchain::topology::{parse_topology, synth_topology, write_topology, SynthProfile};
use meshchain::Mesh;

#[derive(Parser)]
#[command(name = "meshchain", version, about = "Permissioned-blockchain simulator for wireless mesh networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Basp,
    Random,
}

impl From<Method> for PlacementMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Basp => PlacementMethod::Basp,
            Method::Random => PlacementMethod::Random,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PipelineArg {
    Hlf,
    Poa,
}

#[derive(Subcommand)]
enum Command {
    /// Run every sweep point and repetition of an experiment config.
    Run {
        config: PathBuf,
        /// Overrides `experiment.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides `experiment.output`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Paired placement comparison over consecutive seeds.
    Compare {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `compare.seeds`.
        #[arg(long)]
        seeds: Option<u32>,
        #[arg(long, value_enum, default_value = "basp")]
        candidate: Method,
        #[arg(long, value_enum, default_value = "random")]
        baseline: Method,
    },
    /// Generate a synthetic mesh topology file.
    SynthTopology {
        #[arg(long, default_value_t = 85)]
        nodes: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// TOML file of generator parameters; missing keys keep their defaults.
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Place pipeline roles on a topology and write the plan.
    Place {
        topology: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long, value_enum, default_value = "hlf")]
        pipeline: PipelineArg,
        /// Sites; defaults to one per role.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = meshchain::placement::DEFAULT_AVAILABILITY_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = 1)]
        endorsers: u32,
        #[arg(long, default_value_t = 2)]
        committers: u32,
        #[arg(long, default_value_t = 1)]
        sealers: u32,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = seed {
        cfg.experiment.seed = s;
    }
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig, out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| cfg.experiment.output.as_ref().map(|p| cfg.resolve(p)))
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.experiment.name))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, seed, out } => {
            let cfg = load_config(&config, seed)?;
            let report = run_experiment::<f64>(&cfg)?;
            let dir = out_dir(&cfg, out);
            report.write(&dir)?;
            println!("{:<28} {:<12} {:>5} {:>12} {:>12} {:>8}", "point", "metric", "runs", "mean_ms", "max_ms", "dropped");
            for e in report.summary() {
                println!(
                    "{:<28} {:<12} {:>5} {:>12.1} {:>12.1} {:>8}",
                    e.label, e.metric, e.runs, e.summary.mean, e.summary.max, e.dropped
                );
            }
            if report.runs.iter().any(|r| !r.integrity) {
                eprintln!("warning: ledger integrity check failed for at least one run");
            }
            println!("wrote {}", dir.display());
        }
        Command::Compare {
            config,
            seed,
            out,
            seeds,
            candidate,
            baseline,
        } => {
            let cfg = load_config(&config, seed)?;
            let n = seeds.unwrap_or(cfg.compare.seeds);
            if n == 0 {
                bail!("--seeds must be at least 1");
            }
            let report = compare_placements::<f64>(&cfg, candidate.into(), baseline.into(), n)?;
            let dir = out_dir(&cfg, out);
            let path = report.write(&dir)?;
            match report.mean_gain_ms() {
                Some(g) => println!(
                    "mean gain {g:.1} ms ({:.1}%), candidate faster in {:.0}% of {n} seeds",
                    report.mean_gain_pct().unwrap_or(0.0),
                    100.0 * report.win_fraction()
                ),
                None => println!("no seed completed any transaction under both placements"),
            }
            println!("wrote {}", path.display());
        }
        Command::SynthTopology {
            nodes,
            seed,
            profile,
            output,
        } => {
            let profile: SynthProfile = match profile {
                Some(p) => {
                    let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
                }
                None => SynthProfile::default(),
            };
            let t: Mesh = synth_topology(nodes, seed, &profile)?;
            let text = format!("# synth-topology --nodes {nodes} --seed {seed}\n{}", write_topology(&t));
            fs::write(&output, text).with_context(|| format!("writing {}", output.display()))?;
            println!("wrote {} ({} nodes, {} links)", output.display(), t.len(), t.links().len());
        }
        Command::Place {
            topology,
            method,
            pipeline,
            k,
            seed,
            threshold,
            endorsers,
            committers,
            sealers,
            output,
        } => {
            let file = fs::File::open(&topology).with_context(|| format!("opening {}", topology.display()))?;
            let t: Mesh = parse_topology(std::io::BufReader::new(file))?;
            let roles = match pipeline {
                PipelineArg::Hlf => hlf_roles(endorsers, committers),
                PipelineArg::Poa => poa_roles(sealers),
            };
            let k = k.unwrap_or(roles.len());
            let plan = match method {
                Method::Basp => basp(&t, &roles, k, threshold, seed)?,
                Method::Random => random_placement(&t, &roles, k, seed)?,
            };
            fs::write(&output, plan.to_text()).with_context(|| format!("writing {}", output.display()))?;
            print!("{}", plan.to_text());
        }
    }
    Ok(())
}
