use std::path::PathBuf;
use std::process::ExitCode;

use chainscope::app::{run, Command, RunConfig};
use chainscope::catalog::KeyValues;
use chainscope::{Error, Result};
use clap::{Args, Parser, Subcommand};

/// Chain recurrence, Lyapunov synthesis and rigidity probes for flows on tori.
#[derive(Parser)]
#[command(name = "chainscope", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Classify grid nodes as SCR-candidate, CR-only or non-recurrent.
    Analyze(Common),
    /// Build a Lyapunov function from a base node and verify it.
    Lyapunov(Common),
    /// Check where the graph of du sits relative to the energy sublevel.
    Rigidity(Common),
    /// Extract the leading term of a deformation family.
    Outer(Common),
    /// List the built-in systems.
    Examples(Common),
    /// Run the quick invariant suite.
    Selftest(Common),
}

#[derive(Args)]
struct Common {
    /// Built-in system label (see `chainscope examples`).
    #[arg(long)]
    system: Option<String>,
    /// Nodes per axis on the coarsest grid.
    #[arg(long)]
    grid: Option<String>,
    /// Minimal flow time.
    #[arg(long = "T", alias = "time")]
    t: Option<String>,
    /// Number of ladder levels.
    #[arg(long, alias = "ladder")]
    levels: Option<String>,
    /// Refinement factor between ladder levels.
    #[arg(long)]
    refine: Option<String>,
    /// Base point, comma separated.
    #[arg(long)]
    base: Option<String>,
    /// Potential expression in x1..xn.
    #[arg(long)]
    potential: Option<String>,
    /// Family expression in x1..xn and r, or `builtin`.
    #[arg(long)]
    family: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<String>,
    /// `key = value` file; flags win over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra setting, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn settings(&self) -> Result<KeyValues> {
        let mut kv = match &self.config {
            Some(p) => KeyValues::parse(&std::fs::read_to_string(p).map_err(|e| {
                Error::Config(format!("cannot read {}: {e}", p.display()))
            })?)?,
            None => KeyValues::default(),
        };
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {s:?}")))?;
            kv.set(k.trim(), v.trim());
        }
        let flags = [
            ("system", self.system.clone()),
            ("grid", self.grid.clone()),
            ("T", self.t.clone()),
            ("levels", self.levels.clone()),
            ("refine", self.refine.clone()),
            ("base", self.base.clone()),
            ("potential", self.potential.clone()),
            ("family", self.family.clone()),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
            ("seed", self.seed.clone()),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                kv.set(k, v);
            }
        }
        Ok(kv)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common) = match &cli.command {
        Sub::Analyze(c) => (Command::Analyze, c),
        Sub::Lyapunov(c) => (Command::Lyapunov, c),
        Sub::Rigidity(c) => (Command::Rigidity, c),
        Sub::Outer(c) => (Command::Outer, c),
        Sub::Examples(c) => (Command::Examples, c),
        Sub::Selftest(c) => (Command::Selftest, c),
    };
    let result = common
        .settings()
        .and_then(|kv| RunConfig::resolve(cmd, &kv))
        .and_then(|cfg| run(&cfg));
    match result {
        Ok(out) => {
            print!("{}", out.summary);
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(out.exit_code as u8)
        }
        Err(e) => {
            eprintln!("chainscope: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
