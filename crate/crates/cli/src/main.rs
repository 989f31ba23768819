use std::io::{self, IsTerminal};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser as ClapParser, Subcommand};
use semem_core::engine::{ClockMode, Engine, EngineConfig};
use semem_core::nlparse::{Lexicon, Parser, Strategy};
use semem_core::perception::parse_scene_document;
use semem_core::session::SessionConfig;
use semem_core::world::{seed_world, World};
use semem_core::{persistence, scenario, transcript};

mod repl;

#[derive(ClapParser, Debug)]
#[command(name = "semem", version, about = "Semantic memory engine for simulated robots")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// Prior graph document (.semem.json); the built-in seed when omitted.
    #[arg(long, global = true, env = "PRIOR_GRAPH")]
    prior: Option<PathBuf>,

    /// Scene document ingested at startup.
    #[arg(long, global = true)]
    scene: Option<PathBuf>,

    /// Lexicon JSON replacing the bundled one.
    #[arg(long, global = true, env = "LEXICON")]
    lexicon: Option<PathBuf>,

    /// Parser strategy.
    #[arg(long, global = true, default_value = "heuristic")]
    strategy: Strategy,

    /// Save the prior graph here when the REPL exits.
    #[arg(long, global = true)]
    save_on_exit: Option<PathBuf>,

    /// Run a scenario file instead of the REPL.
    #[arg(long)]
    replay: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Interactive loop (the default).
    Repl,
    /// Run a scenario file; exit status 0 iff every expectation holds.
    Replay {
        file: PathBuf,
        /// Compare the transcript with this file.
        #[arg(long)]
        golden: Option<PathBuf>,
        /// Write the transcript to the --golden file instead of comparing.
        #[arg(long, requires = "golden")]
        bless: bool,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = "ADDR", default_value = "127.0.0.1:8080")]
        addr: String,
        /// Prompt idle timeout in seconds; 0 disables expiry.
        #[arg(long, default_value_t = 600)]
        prompt_timeout: u64,
    },
    /// Write the built-in seed prior graph.
    Seed {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_world(prior: Option<&Path>) -> Result<World> {
    match prior {
        Some(p) => persistence::load_from_path(p).with_context(|| format!("loading prior graph {}", p.display())),
        None => Ok(seed_world()?),
    }
}

fn load_parser(lexicon: Option<&Path>) -> Result<Parser> {
    match lexicon {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading lexicon {}", p.display()))?;
            Ok(Parser::new(Lexicon::from_json(&text).with_context(|| format!("lexicon {}", p.display()))?))
        }
        None => Ok(Parser::default()),
    }
}

fn run_replay(file: &Path, golden: Option<&Path>, bless: bool) -> Result<ExitCode> {
    let replay = scenario::run_file(file)?;
    let text = replay.transcript_text();
    print!("{text}");
    if let Some(f) = &replay.failure {
        eprintln!("replay failed: {f}");
        return Ok(ExitCode::FAILURE);
    }
    if let Some(g) = golden {
        if bless {
            std::fs::write(g, &text).with_context(|| format!("writing {}", g.display()))?;
        } else {
            let want = std::fs::read_to_string(g).with_context(|| format!("reading {}", g.display()))?;
            if want != text {
                let line = want
                    .lines()
                    .zip(text.lines())
                    .position(|(a, b)| a != b)
                    .unwrap_or_else(|| want.lines().count().min(text.lines().count()));
                eprintln!("transcript differs from {} at line {}", g.display(), line + 1);
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run_repl(cli: &Cli) -> Result<ExitCode> {
    let world = load_world(cli.prior.as_deref())?;
    let parser = load_parser(cli.lexicon.as_deref())?;
    let mut engine = Engine::new(
        world,
        parser,
        EngineConfig {
            strategy: cli.strategy,
            ..Default::default()
        },
    );
    let stdout = io::stdout();
    let mut out = stdout.lock();
    if let Some(p) = &cli.scene {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading scene {}", p.display()))?;
        let obs = parse_scene_document(&text)?;
        let outcome = engine.ingest(&obs)?;
        repl::print_lines(&mut out, &transcript::ingest(&outcome))?;
    }
    let interactive = io::stdin().is_terminal();
    repl::run(&mut engine, io::stdin().lock(), &mut out, interactive)?;
    if let Some(p) = &cli.save_on_exit {
        let n = persistence::save_to_path(engine.world(), false, p)?;
        eprintln!("saved {n} bytes to {}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn run_serve(cli: &Cli, addr: &str, prompt_timeout: u64) -> Result<ExitCode> {
    let world = load_world(cli.prior.as_deref())?;
    let parser = load_parser(cli.lexicon.as_deref())?;
    let config = EngineConfig {
        strategy: cli.strategy,
        clock: ClockMode::Wall,
        session: SessionConfig {
            idle_timeout: (prompt_timeout > 0).then_some(prompt_timeout * 1000),
        },
        ..Default::default()
    };
    let scene = match &cli.scene {
        Some(p) => Some(parse_scene_document(
            &std::fs::read_to_string(p).with_context(|| format!("reading scene {}", p.display()))?,
        )?),
        None => None,
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let mut engine = Engine::new(world, parser, config);
        if let Some(obs) = scene {
            engine.ingest(&obs)?;
        }
        let state = semem_service::spawn(engine, semem_service::ServiceConfig::default());
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        semem_service::serve(listener, state).await?;
        Ok::<_, anyhow::Error>(())
    })?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match (&cli.command, &cli.replay) {
        (Some(_), Some(_)) => Err(anyhow::anyhow!("--replay cannot be combined with a subcommand")),
        (None, Some(file)) => run_replay(file, None, false),
        (None | Some(Command::Repl), None) => run_repl(&cli),
        (Some(Command::Replay { file, golden, bless }), None) => run_replay(file, golden.as_deref(), *bless),
        (Some(Command::Serve { addr, prompt_timeout }), None) => run_serve(&cli, addr, *prompt_timeout),
        (Some(Command::Seed { out }), None) => seed(out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn seed(out: &Path) -> Result<ExitCode> {
    if out.is_dir() {
        bail!("{} is a directory", out.display());
    }
    let n = persistence::save_to_path(&seed_world()?, false, out)?;
    eprintln!("wrote {n} bytes to {}", out.display());
    Ok(ExitCode::SUCCESS)
}
