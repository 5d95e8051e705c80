use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gridfed::engine::{self, execute_sql, BackendHandle};
use gridfed::federation::{
    self, render_json, render_outcomes, render_table, FederationError, MemberSource, ReplConfig,
};
use gridfed::member::{self, MemberConfig, WizardOptions};
use gridfed::registry::{serve_registry, RegistryConfig};
use gridfed::rewrite::rewrite_sql;
use gridfed::schema::{load_mapping_file, load_virtual_schema_file, BackendKind, GridMember};
use gridfed::value::ResultSet;

#[derive(Parser)]
#[command(name = "gridctl", version, about = "Federated SELECT over grid members")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the center registration service.
    Center {
        #[arg(long, default_value = "0.0.0.0:7000")]
        listen: String,
        #[arg(long, default_value = "GridList.xml")]
        registry: PathBuf,
    },
    /// Member-side commands.
    #[command(subcommand)]
    Member(MemberCommand),
    /// Send one query to every member and print the merged result.
    Query {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        sql: String,
    },
    /// Interactive query shell.
    Repl {
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Rewrite SQL read from stdin for one member's mapping.
    Remap {
        #[arg(long)]
        mapping: PathBuf,
        #[arg(long)]
        schema: PathBuf,
    },
    /// Work with fixture scripts directly.
    #[command(subcommand)]
    Fixture(FixtureCommand),
}

#[derive(Subcommand)]
enum MemberCommand {
    /// Answer queries on the mapping's port.
    Serve {
        #[arg(long)]
        mapping: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        /// Embedded fixture used instead of the mapping's connection string.
        #[arg(long)]
        fixture: Option<PathBuf>,
        /// Listen address; defaults to 0.0.0.0 and the mapping's port.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Map the center schema onto local tables, register, then serve.
    Setup {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        center: Option<String>,
        /// Read prompt answers from this file instead of stdin.
        #[arg(long)]
        answers: Option<PathBuf>,
        #[arg(long, default_value = "GridMapping.xml")]
        output: PathBuf,
        #[arg(long)]
        address: Option<String>,
        /// Stop after setup instead of starting the service.
        #[arg(long)]
        no_serve: bool,
    },
    /// Register (or re-register) with the center.
    Register {
        #[arg(long)]
        center: String,
        #[arg(long)]
        name: String,
        #[arg(long)]
        address: Option<String>,
        #[arg(long, default_value_t = member::DEFAULT_PORT)]
        port: u16,
    },
}

#[derive(Subcommand)]
enum FixtureCommand {
    /// Load a script into the embedded engine and run one query.
    Run {
        script: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
}

#[derive(Args)]
struct SourceArgs {
    /// Center endpoint to ask for the member list.
    #[arg(long, conflicts_with = "registry")]
    center: Option<String>,
    /// Read the member list from a GridList.xml file instead.
    #[arg(long)]
    registry: Option<PathBuf>,
    #[arg(long, env = "GRID_TIMEOUT_MS", default_value_t = federation::DEFAULT_TIMEOUT_MS)]
    timeout: u64,
    /// Prefix each row with the member that produced it.
    #[arg(long)]
    provenance: bool,
}

impl SourceArgs {
    fn source(&self) -> Result<MemberSource> {
        match (&self.center, &self.registry) {
            (Some(c), _) => Ok(MemberSource::Center(c.clone())),
            (None, Some(r)) => Ok(MemberSource::File(r.clone())),
            (None, None) => bail!("give --center <addr:port> or --registry <path>"),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
}

const TIMEOUT: Duration = Duration::from_secs(10);

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.command {
        Command::Center { .. } | Command::Member(_) => "info",
        _ => "warn",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("gridctl: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Center { listen, registry } => {
            let handle = serve_registry(&RegistryConfig {
                listen,
                registry_path: registry,
            })?;
            handle.wait();
        }
        Command::Member(cmd) => member_command(cmd)?,
        Command::Query {
            source,
            format,
            sql,
        } => return query(&source, format, &sql),
        Command::Repl { source } => {
            let mut config = ReplConfig {
                source: source.source()?,
                timeout: Duration::from_millis(source.timeout),
                provenance: source.provenance,
            };
            federation::run_repl(&mut config, &mut io::stdin().lock(), &mut io::stdout())?;
        }
        Command::Remap { mapping, schema } => {
            let schema = load_virtual_schema_file(&schema)?;
            let mapping = load_mapping_file(&mapping)?;
            let mut sql = String::new();
            io::stdin().read_to_string(&mut sql)?;
            println!("{}", rewrite_sql(sql.trim(), &schema, &mapping)?);
        }
        Command::Fixture(FixtureCommand::Run {
            script,
            query,
            format,
        }) => {
            let handle = engine::open(BackendKind::Embedded, &script.to_string_lossy())?;
            print_result_set(&handle, &query, format)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn member_command(cmd: MemberCommand) -> Result<()> {
    match cmd {
        MemberCommand::Serve {
            mapping,
            schema,
            fixture,
            listen,
        } => {
            let handle = member::serve_member(&MemberConfig {
                mapping_path: mapping,
                schema_path: schema,
                fixture_path: fixture,
                listen,
            })?;
            handle.wait();
        }
        MemberCommand::Setup {
            schema,
            center,
            answers,
            output,
            address,
            no_serve,
        } => {
            let virtual_schema = load_virtual_schema_file(&schema)?;
            let options = WizardOptions {
                output: output.clone(),
                center,
                address,
                timeout: TIMEOUT,
            };
            let mut input: Box<dyn BufRead> = match &answers {
                Some(p) => Box::new(BufReader::new(
                    File::open(p).with_context(|| format!("cannot open {}", p.display()))?,
                )),
                None => Box::new(io::stdin().lock()),
            };
            let mut out = io::stdout();
            member::run_wizard(&virtual_schema, &options, &mut input, &mut out)?;
            out.flush()?;
            if !no_serve {
                let handle = member::serve_member(&MemberConfig {
                    mapping_path: output,
                    schema_path: schema,
                    fixture_path: None,
                    listen: None,
                })?;
                handle.wait();
            }
        }
        MemberCommand::Register {
            center,
            name,
            address,
            port,
        } => {
            let address =
                address.unwrap_or_else(|| member::detect_local_address(Some(center.as_str())));
            let m = GridMember::new(name, address, port);
            let (status, count) = member::register_with_center(&center, &m, TIMEOUT)?;
            println!("{m}: {status} ({count} members)");
        }
    }
    Ok(())
}

fn query(source: &SourceArgs, format: Format, sql: &str) -> Result<ExitCode> {
    let timeout = Duration::from_millis(source.timeout);
    match federation::run_query(&source.source()?, sql, timeout, source.provenance) {
        Ok(result) => {
            match format {
                Format::Table => {
                    print!("{}", render_table(&result));
                    print!("{}", render_outcomes(&result.outcomes));
                }
                Format::Json => println!("{}", serde_json::to_string_pretty(&render_json(&result))?),
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(FederationError::NoSuccessfulMembers(outcomes)) => {
            match format {
                Format::Table => {
                    eprintln!("gridctl: no member answered successfully");
                    eprint!("{}", render_outcomes(&outcomes));
                }
                Format::Json => println!(
                    "{}",
                    serde_json::to_string_pretty(&serde_json::json!({
                        "columns": [],
                        "rows": [],
                        "outcomes": federation::outcomes_json(&outcomes),
                    }))?
                ),
            }
            Ok(ExitCode::FAILURE)
        }
        Err(e) => Err(e.into()),
    }
}

fn print_result_set(handle: &BackendHandle, sql: &str, format: Format) -> Result<()> {
    let rs: ResultSet = execute_sql(handle, sql)?;
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&rs)?),
        Format::Table => {
            let view = federation::FederatedResult {
                columns: rs.columns,
                rows: rs.rows,
                outcomes: Vec::new(),
                warnings: rs.warnings,
            };
            print!("{}", render_table(&view));
        }
    }
    Ok(())
}
