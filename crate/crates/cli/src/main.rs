use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use davnav::config::{AudioCondition, RunConfig};
use davnav::engine::{ActionMode, RewardMode};
use davnav::plot::render_svg;
use davnav::protocol::{play, Agent, Connection, GreedyAgent, GreedyParams, RandomAgent};
use davnav::soundbank::Split;
use davnav::suite::{
    generate_maps, generate_sounds, generate_suite, load_run, read_log, replay_log, run_suite, save_maps, score_suite,
    write_atomic, AgentSpec, BenchmarkSuite, SuiteError, World,
};

#[derive(Parser)]
#[command(
    name = "davnav",
    version,
    about = "Dynamic audio-visual navigation benchmark harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate maps and write them as .davmap files.
    GenMaps {
        #[command(flatten)]
        base: BaseArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize the sound bank (WAV files plus splits.txt).
    GenSounds {
        #[command(flatten)]
        base: BaseArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a suite of feasible episodes.
    GenSuite {
        #[command(flatten)]
        base: BaseArgs,
        #[command(flatten)]
        episode: EpisodeArgs,
        /// Suite file to write.
        #[arg(long, default_value = "suite.json")]
        out: PathBuf,
    },
    /// Run an agent over a suite and write one log per episode.
    RunSuite {
        suite: PathBuf,
        /// random[:seed], greedy, oracle, tcp:host:port or exec:command
        #[arg(long)]
        agent: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a run into a results table.
    Score {
        suite: PathBuf,
        run: PathBuf,
        /// Directory for results.txt and results.json (defaults to the run).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-execute a log and check that it reproduces byte for byte.
    Replay { suite: PathBuf, log: PathBuf },
    /// Render a log as an SVG trajectory figure.
    Plot {
        suite: PathBuf,
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve a baseline policy as a remote agent (stdio unless --connect).
    Agent {
        #[arg(long, value_enum)]
        policy: Policy,
        /// Suite whose heard sounds calibrate the greedy stop threshold.
        #[arg(long)]
        suite: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// host:port of a harness started with --agent tcp:...
        #[arg(long)]
        connect: Option<String>,
    },
}

#[derive(Args)]
struct BaseArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EpisodeArgs {
    #[arg(long)]
    episodes: Option<usize>,
    /// Move probability of the dynamic episodes.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    complex: bool,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    reward: Option<RewardArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Raw,
    Waypoint,
}

#[derive(Clone, Copy, ValueEnum)]
enum RewardArg {
    Current,
    Intersection,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Random,
    Greedy,
}

fn load_config(base: &BaseArgs) -> Result<RunConfig> {
    let mut cfg = match &base.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    for dir in [&mut cfg.maps.dir, &mut cfg.sounds.dir].into_iter().flatten() {
        *dir = std::fs::canonicalize(&*dir).with_context(|| format!("resolving {}", dir.display()))?;
    }
    Ok(cfg)
}

fn load_suite(path: &Path) -> Result<(BenchmarkSuite, World)> {
    let suite = BenchmarkSuite::load(path).with_context(|| format!("loading suite {}", path.display()))?;
    let world = World::build(&suite.config).context("building the suite's maps and sounds")?;
    Ok((suite, world))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenMaps { base, out } => {
            let mut cfg = load_config(&base)?;
            if let Some(s) = base.seed {
                cfg.maps.seed = s;
            }
            let maps = generate_maps(&cfg)?;
            save_maps(&maps, &out)?;
            println!("wrote {} maps to {}", maps.len(), out.display());
        }
        Command::GenSounds { base, out } => {
            let mut cfg = load_config(&base)?;
            if let Some(s) = base.seed {
                cfg.sounds.seed = s;
            }
            let bank = generate_sounds(&cfg)?;
            bank.save_dir(&out)?;
            let split = bank.split();
            println!(
                "wrote {} sounds to {} ({} train / {} val / {} test)",
                bank.len(),
                out.display(),
                split.ids(Split::Train).len(),
                split.ids(Split::Val).len(),
                split.ids(Split::Test).len()
            );
        }
        Command::GenSuite { base, episode, out } => {
            let mut cfg = load_config(&base)?;
            if let Some(s) = base.seed {
                cfg.seed = s;
            }
            if let Some(n) = episode.episodes {
                cfg.episodes = n;
            }
            if let Some(p) = episode.p {
                cfg.move_probs = vec![p];
            }
            if episode.complex {
                cfg.audio = vec![AudioCondition::Complex];
            }
            if let Some(m) = episode.mode {
                cfg.mode = match m {
                    ModeArg::Raw => ActionMode::Raw,
                    ModeArg::Waypoint => ActionMode::Waypoint,
                };
            }
            if let Some(r) = episode.reward {
                cfg.reward_mode = match r {
                    RewardArg::Current => RewardMode::CurrentPosition,
                    RewardArg::Intersection => RewardMode::Intersection,
                };
            }
            let world = World::build(&cfg)?;
            let suite = generate_suite(&cfg, &world)?;
            suite.save(&out)?;
            println!("wrote {} episodes to {}", suite.episodes.len(), out.display());
        }
        Command::RunSuite { suite, agent, out } => {
            let spec: AgentSpec = agent.parse()?;
            let (suite, world) = load_suite(&suite)?;
            let logs = run_suite(&suite, &world, &spec, Some(&out))?;
            let table = score_suite(&suite, &world, &logs)?;
            print!("{}", table.render());
            println!("logs in {}", out.join("logs").display());
        }
        Command::Score { suite, run, out } => {
            let (suite, world) = load_suite(&suite)?;
            let logs = load_run(&suite, &run)?;
            let table = score_suite(&suite, &world, &logs)?;
            let out = out.unwrap_or(run);
            std::fs::create_dir_all(&out)?;
            write_atomic(&out.join("results.txt"), table.render().as_bytes())?;
            write_atomic(&out.join("results.json"), table.to_json().as_bytes())?;
            print!("{}", table.render());
        }
        Command::Replay { suite, log } => {
            let (_, world) = load_suite(&suite)?;
            let text = std::fs::read_to_string(&log).with_context(|| format!("reading {}", log.display()))?;
            match replay_log(&world, &text) {
                Ok(digest) => println!("identical {digest}"),
                Err(e @ SuiteError::ChecksumMismatch { .. }) => bail!("{e}"),
                Err(e) => return Err(e.into()),
            }
        }
        Command::Plot { suite, log, out } => {
            let (_, world) = load_suite(&suite)?;
            let log = read_log(&log)?;
            let map = world.map(&log.config.map)?;
            write_atomic(&out, render_svg(&map, &log)?.as_bytes())?;
            println!("wrote {}", out.display());
        }
        Command::Agent {
            policy,
            suite,
            seed,
            connect,
        } => {
            let mut agent: Box<dyn Agent> = match policy {
                Policy::Random => Box::new(RandomAgent::new(seed)),
                Policy::Greedy => {
                    let Some(path) = suite else {
                        bail!("the greedy policy needs --suite to calibrate its stop threshold");
                    };
                    let (suite, world) = load_suite(&path)?;
                    let Some(first) = suite.episodes.first() else {
                        bail!("suite {} has no episodes", path.display());
                    };
                    let resolution = world.map(&first.config.map)?.resolution();
                    Box::new(GreedyAgent::new(GreedyParams::calibrate(
                        &world.bank,
                        Split::Train,
                        &first.config.acoustics,
                        resolution,
                    )))
                }
            };
            let mut conn = match connect {
                Some(addr) => Connection::connect(addr.as_str(), None)?,
                None => Connection::stdio(),
            };
            let ends = play(&mut conn, agent.as_mut())?;
            log::info!("played {} episodes", ends.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DAVNAV_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
