use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use aamatrix_core::dependency::{compare, detect_conflicts, nearest_group};
use aamatrix_core::engine::run;
use aamatrix_core::engine::scenario::{Intervention, Scenario};
use aamatrix_core::profile::{builtin, builtin_profiles, llm_builtins, parse_profile, validate, SystemProfile};
use aamatrix_core::report::{level_distribution, render_bars, render_radar, render_table, Dimension};
use aamatrix_core::service::{serve, Service};
use aamatrix_core::taxonomy::AspectId;

#[derive(Parser)]
#[command(name = "aamatrix", version, about = "Autonomy and alignment assessment for LLM multi-agent systems")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a profile document.
    Validate { profile: PathBuf },
    /// Name the matrix cell of every aspect and find the nearest builtin group.
    Classify {
        /// Profile file or builtin name.
        profile: String,
    },
    /// Level distance between two profiles.
    Compare { a: String, b: String },
    /// Intertwined-dependency conflicts of a profile.
    Conflicts { profile: String },
    /// Render charts and tables.
    Report {
        #[command(subcommand)]
        kind: ReportCmd,
    },
    /// Run a scenario and print its event stream as NDJSON.
    Run {
        scenario: PathBuf,
        /// JSON array of extra interventions.
        #[arg(long)]
        interventions: Option<PathBuf>,
        /// Write events here instead of stdout.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Start the HTTP control service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Radar chart for one profile.
    Radar {
        profile: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Stacked bars over the builtins for `autonomy` or `alignment`.
    Bars {
        dimension: Dimension,
        /// Include the workflow-automation row.
        #[arg(long)]
        all: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Markdown table; all builtins unless profiles are named.
    Table {
        profiles: Vec<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

/// A file path if it exists, otherwise a builtin name.
fn load_profile(arg: &str) -> Result<SystemProfile> {
    let path = Path::new(arg);
    if path.exists() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {arg}"))?;
        let parsed = parse_profile(&text).with_context(|| format!("parsing {arg}"))?;
        for n in &parsed.notices {
            eprintln!("notice: {n}");
        }
        return Ok(parsed.profile);
    }
    builtin(arg).with_context(|| format!("`{arg}` is neither a file nor a builtin profile"))
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().command {
        Cmd::Validate { profile } => {
            let text = std::fs::read_to_string(&profile).with_context(|| format!("reading {}", profile.display()))?;
            let parsed = match parse_profile(&text) {
                Ok(p) => p,
                Err(e) => {
                    println!("{}", pretty(&json!({"valid": false, "issues": [{"path": "", "message": e.to_string()}]})));
                    return Ok(ExitCode::FAILURE);
                }
            };
            let report = validate(&parsed.profile);
            print!("{}", pretty(&json!({"valid": report.valid, "issues": report.issues, "notices": parsed.notices})));
            Ok(if report.valid { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Cmd::Classify { profile } => {
            let p = load_profile(&profile)?;
            let cells: serde_json::Map<String, serde_json::Value> = AspectId::ALL
                .iter()
                .map(|&a| {
                    let cfg = p.config(a);
                    (a.code().to_string(), json!({"cell": cfg.cell(), "name": cfg.cell().display_name()}))
                })
                .collect();
            let exemplars: Vec<SystemProfile> = builtin_profiles().into_iter().filter(|e| e.name != p.name).collect();
            let group = nearest_group(&p, &exemplars)?;
            print!("{}", pretty(&json!({"name": p.name, "aspects": cells, "nearest_group": group})));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Compare { a, b } => {
            let (pa, pb) = (load_profile(&a)?, load_profile(&b)?);
            print!("{}", pretty(&json!({"a": pa.name, "b": pb.name, "distance": compare(&pa, &pb)})));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Conflicts { profile } => {
            let p = load_profile(&profile)?;
            let conflicts = detect_conflicts(&p);
            print!("{}", pretty(&conflicts));
            Ok(if conflicts.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Cmd::Report { kind } => {
            match kind {
                ReportCmd::Radar { profile, output } => emit(&render_radar(&load_profile(&profile)?), output.as_deref())?,
                ReportCmd::Bars { dimension, all, output } => {
                    let profiles = if all { builtin_profiles() } else { llm_builtins() };
                    emit(&render_bars(&level_distribution(&profiles, dimension)), output.as_deref())?
                }
                ReportCmd::Table { profiles, output } => {
                    let list = if profiles.is_empty() {
                        builtin_profiles()
                    } else {
                        profiles.iter().map(|p| load_profile(p)).collect::<Result<Vec<_>>>()?
                    };
                    emit(&render_table(&list), output.as_deref())?
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Run { scenario, interventions, events } => {
            let mut s = Scenario::load(&scenario)?;
            if let Some(path) = interventions {
                let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                let extra: Vec<Intervention> = serde_json::from_str(&text).context("parsing interventions")?;
                s.interventions.extend(extra);
            }
            let report = run(&s)?;
            emit(&report.ndjson(), events.as_deref())?;
            eprintln!("{}", serde_json::to_string(&report.outcome)?);
            Ok(if report.outcome.status == aamatrix_core::ontology::OutcomeStatus::Completed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Cmd::Serve { port, host } => {
            let addr: SocketAddr = format!("{host}:{port}").parse().context("listen address")?;
            let runtime = tokio::runtime::Runtime::new()?;
            eprintln!("listening on http://{addr}");
            runtime.block_on(serve(addr, Service::new()))?;
            bail!("server stopped")
        }
    }
}
