use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use hashrep_core::breach::{verify_proof_bytes, ChainSource, HeaderChain};
use hashrep_core::chain::SimChain;
use hashrep_core::hashcash::mine;
use hashrep_core::identity::{MarketId, PublicKey};
use hashrep_sim::script::{builtin, Scenario};
use hashrep_sim::storesim::run_commands;
use hashrep_sim::sweep::{render_table, sweep, Grid};
use hashrep_sim::world::run_world;

#[derive(Parser)]
#[command(name = "hashrep-sim", about = "Deterministic watchtower market scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (or a builtin by name) and check its expectations.
    Run {
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the chain snapshot, headers and proofs into this directory.
        #[arg(long)]
        artifacts: Option<PathBuf>,
    },
    /// Run a template over the cross product of a grid file.
    Sweep {
        template: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mine a hashcash nonce for a server key in a market.
    Mine {
        #[arg(long)]
        id: String,
        #[arg(long)]
        market: String,
        #[arg(long)]
        bits: u32,
        #[arg(long, default_value_t = 0)]
        start: u64,
    },
    /// Verify a proof-of-breach against a chain snapshot or a header chain.
    VerifyProof {
        proof: PathBuf,
        #[arg(long)]
        headers: Option<PathBuf>,
        #[arg(long)]
        chain: Option<PathBuf>,
    },
    /// Drive one storage node with a commands file.
    StoreSim {
        #[arg(long)]
        capacity: usize,
        #[arg(long = "ticket-bits")]
        ticket_bits: u32,
        commands: PathBuf,
    },
}

fn load_scenario(arg: &str) -> Result<String> {
    let path = Path::new(arg);
    if path.exists() {
        return fs::read_to_string(path).with_context(|| format!("reading {arg}"));
    }
    match builtin(arg.strip_prefix("builtin:").unwrap_or(arg)) {
        Some(text) => Ok(text.to_string()),
        None => bail!("no scenario file or builtin named {arg}"),
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn status(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn write_artifacts(dir: &Path, world: &hashrep_sim::world::World) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("chain.snapshot"), world.chain.export_snapshot())?;
    for hire in &world.hires {
        let name = &world.towers[hire.tower].name;
        for (i, p) in hire.proofs.iter().enumerate() {
            fs::write(dir.join(format!("proof-{name}-{i}.bin")), p.to_bytes())?;
            let mut headers = HeaderChain::from_chain(&world.chain);
            if p.absence.is_none() {
                headers.attach_window(&world.chain, p)?;
            }
            fs::write(dir.join(format!("headers-{name}-{i}.bin")), headers.to_bytes())?;
        }
    }
    Ok(())
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run {
            scenario,
            seed,
            out,
            artifacts,
        } => {
            let parsed = Scenario::parse(&load_scenario(&scenario)?)?;
            let seed = seed.unwrap_or(parsed.seed);
            let (world, report) = run_world(&parsed, seed);
            emit(&report.render(), out.as_deref())?;
            if let Some(dir) = artifacts {
                write_artifacts(&dir, &world)?;
            }
            Ok(status(report.passed()))
        }
        Command::Sweep { template, grid, out } => {
            let template = fs::read_to_string(&template).with_context(|| format!("reading {}", template.display()))?;
            let grid = Grid::parse(&fs::read_to_string(&grid).with_context(|| format!("reading {}", grid.display()))?)?;
            let rows = sweep(&template, &grid);
            emit(&render_table(&rows), out.as_deref())?;
            Ok(status(rows.iter().all(|r| r.passed())))
        }
        Command::Mine {
            id,
            market,
            bits,
            start,
        } => {
            let raw = hex::decode(&id).context("--id must be hex")?;
            let key: [u8; 32] = raw.try_into().map_err(|_| anyhow::anyhow!("--id must be 32 bytes"))?;
            let market = MarketId::new(market.into_bytes())?;
            let m = mine(&PublicKey(key), &market, bits, start, u64::MAX)?;
            println!(
                "mined\tnonce={}\treputation={}\tattempts={}",
                m.nonce.0,
                m.reputation.bits(),
                m.attempts
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::VerifyProof { proof, headers, chain } => {
            let bytes = fs::read(&proof).with_context(|| format!("reading {}", proof.display()))?;
            let mut ok = true;
            let mut checked = false;
            if let Some(c) = chain {
                let chain = SimChain::import_snapshot(&fs::read(&c)?)?;
                let v = verify_proof_bytes(&bytes, ChainSource::Full(&chain));
                println!("verdict\tmode=full\t{}", describe(&v));
                ok &= v.is_valid();
                checked = true;
            }
            if let Some(h) = headers {
                let hc = HeaderChain::from_bytes(&fs::read(&h)?)?;
                let v = verify_proof_bytes(&bytes, ChainSource::Light(&hc));
                println!("verdict\tmode=light\t{}", describe(&v));
                ok &= v.is_valid();
                checked = true;
            }
            if !checked {
                bail!("give --chain and/or --headers");
            }
            Ok(status(ok))
        }
        Command::StoreSim {
            capacity,
            ticket_bits,
            commands,
        } => {
            let text = fs::read_to_string(&commands).with_context(|| format!("reading {}", commands.display()))?;
            let report = run_commands(&text, capacity, ticket_bits)?;
            print!("{}", report.render());
            Ok(status(report.passed()))
        }
    }
}

fn describe(v: &hashrep_core::breach::Verdict) -> String {
    match v {
        hashrep_core::breach::Verdict::Valid => "result=valid".to_string(),
        hashrep_core::breach::Verdict::Invalid { condition, reason } => {
            format!("result=invalid\tcondition={}\treason={}", condition.index(), reason)
        }
    }
}
