//! Operator command line: cluster lifecycle, filesystem commands, jobs,
//! sensor ingestion and fault injection against one storage root.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use edgestack::blockstore::{Mode, Principal};
use edgestack::cluster::{self, Cluster};
use edgestack::error::exit;
use edgestack::fabric::{render_status, FaultScript};
use edgestack::ingestion::{parse_plant, run_plant, IngestBatcher, DEFAULT_BATCH_SIZE};
use edgestack::jobs::{pi_job, sensor_agg_job};
use edgestack::{ClusterConfig, Error, Result};

pub const DEFAULT_CONFIG: &str = "edgestack.conf";
pub const DEFAULT_USER: &str = "hduser";
pub const DEFAULT_GROUP: &str = "hadoop";

#[derive(Debug, Parser)]
#[command(name = "edgestack", about = "Miniature edge data platform", version)]
struct Cli {
    /// Cluster config file.
    #[arg(long, global = true, default_value = DEFAULT_CONFIG)]
    config: PathBuf,
    /// Acting user.
    #[arg(long, global = true, default_value = DEFAULT_USER)]
    user: String,
    /// Group membership of the acting user; repeatable.
    #[arg(long = "group", global = true)]
    groups: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create an empty namespace at the configured storage root.
    Format,
    /// Start every daemon.
    Start,
    /// Stop the cluster, keeping the namespace and blocks.
    Stop,
    /// List live daemons as "<daemonId> <DaemonName>".
    Status,
    /// Run the cluster forward by some milliseconds of cluster time.
    Advance { ms: u64 },
    /// Schedule a fault script relative to the current cluster time.
    Fault { script: PathBuf },
    /// Filesystem commands.
    #[command(subcommand)]
    Dfs(DfsCommand),
    /// MapReduce jobs.
    #[command(subcommand)]
    Job(JobCommand),
    /// Simulate a plant and ingest its telemetry.
    Sensors(SensorsArgs),
}

#[derive(Debug, Subcommand)]
enum DfsCommand {
    Put {
        local: PathBuf,
        remote: String,
        #[arg(long, default_value = "750", value_parser = parse_mode)]
        mode: Mode,
        #[arg(long)]
        replication: Option<u16>,
    },
    Get { remote: String, local: PathBuf },
    Ls { path: String },
    Rm { path: String },
    Chmod {
        #[arg(value_parser = parse_mode)]
        mode: Mode,
        path: String,
    },
    Mkdir {
        path: String,
        #[arg(long, default_value = "750", value_parser = parse_mode)]
        mode: Mode,
    },
}

#[derive(Debug, Subcommand)]
enum JobCommand {
    /// Quasi-Monte-Carlo estimate of Pi.
    Pi {
        #[arg(value_parser = clap::value_parser!(u64).range(1..))]
        maps: u64,
        #[arg(value_parser = clap::value_parser!(u64).range(1..))]
        samples: u64,
    },
    /// Count, min, mean and max per (line, robot, channel).
    Sensoragg { input: String, output: String },
    Status { job_id: String },
}

#[derive(Debug, Args)]
struct SensorsArgs {
    spec: PathBuf,
    duration_ms: u64,
    target_dir: String,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE, value_parser = clap::value_parser!(usize))]
    batch_size: usize,
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse::<Mode>().map_err(|e| e.to_string())
}

fn principal(cli: &Cli) -> Principal {
    let groups = if cli.groups.is_empty() && cli.user == DEFAULT_USER {
        vec![DEFAULT_GROUP.to_string()]
    } else {
        cli.groups.clone()
    };
    Principal::new(cli.user.clone(), groups)
}

/// Runs one command; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let text = e.render().to_string();
            let _ = if code == exit::OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(&cli, out, err) {
        Ok(()) => exit::OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(path: &Path) -> Result<ClusterConfig> {
    Ok(ClusterConfig::load(path)?)
}

fn print(out: &mut dyn Write, text: impl std::fmt::Display) -> Result<()> {
    writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let config = load_config(&cli.config)?;
    let who = principal(cli);
    match &cli.command {
        Command::Format => {
            let id = cluster::format(&config)?;
            print(out, format_args!("Formatted namespace {id}"))
        }
        Command::Start => {
            let c = Cluster::start(&config)?;
            for n in c.fabric().nodes() {
                print(out, format_args!("started {} ({})", n.role.daemon_name(), n.daemon_id))?;
            }
            Ok(())
        }
        Command::Stop => {
            let c = Cluster::open(&config)?;
            let n = c.status().len();
            c.stop()?;
            print(out, format_args!("stopped {n} daemons"))
        }
        Command::Status => {
            if !cluster::is_running(&config.storage_root) {
                return Ok(());
            }
            let c = Cluster::open(&config)?;
            out.write_all(render_status(&c.status()).as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
        Command::Advance { ms } => with_cluster(&config, |c| {
            c.advance(*ms);
            print(out, format_args!("cluster time {} ms", c.now()))
        }),
        Command::Fault { script } => {
            let text = fs::read_to_string(script).map_err(|e| Error::io(script, e))?;
            let script = FaultScript::parse(&text)?;
            with_cluster(&config, |c| {
                c.inject(&script)?;
                print(out, format_args!("scheduled {} fault events", script.events.len()))
            })
        }
        Command::Dfs(cmd) => with_cluster(&config, |c| dfs(c, cmd, &who, out)),
        Command::Job(JobCommand::Status { job_id }) => {
            let status = if cluster::is_running(&config.storage_root) {
                Cluster::open(&config)?.job_status(job_id)?
            } else {
                cluster::stored_job_status(&config, job_id)?
            };
            print(out, status)
        }
        Command::Job(JobCommand::Pi { maps, samples }) => with_cluster(&config, |c| {
            pi_job(c, *maps, *samples, &who, out, err, &mut |_, _| {}).map(drop)
        }),
        Command::Job(JobCommand::Sensoragg { input, output }) => with_cluster(&config, |c| {
            let run = sensor_agg_job(c, input, output, &who, err, &mut |_, _| {})?;
            print(out, format_args!("Job {} succeeded", run.job_id))?;
            print(out, format_args!("Records aggregated = {}", run.aggregated))?;
            print(out, format_args!("Records skipped = {}", run.skipped))?;
            print(out, format_args!("Output written to {}", run.output_path))
        }),
        Command::Sensors(args) => {
            let text = fs::read_to_string(&args.spec)
                .map_err(|e| Error::Usage(format!("{}: {e}", args.spec.display())))?;
            let lines = parse_plant(&text)?;
            if args.batch_size == 0 {
                return Err(Error::Usage("batch size must be positive".into()));
            }
            with_cluster(&config, |c| {
                let mut batcher = IngestBatcher::new(&args.target_dir, args.batch_size, c.config().replication);
                let (records, files) = run_plant(c, &lines, args.duration_ms, &mut batcher, &who)?;
                print(out, format_args!("{records} records in {} files", files.len()))
            })
        }
    }
}

/// Opens the running cluster, runs `f`, and persists whatever happened, even
/// when `f` fails part way.
fn with_cluster<T>(config: &ClusterConfig, f: impl FnOnce(&mut Cluster) -> Result<T>) -> Result<T> {
    let mut c = Cluster::open(config)?;
    let res = f(&mut c);
    c.save()?;
    res
}

fn dfs(c: &mut Cluster, cmd: &DfsCommand, who: &Principal, out: &mut dyn Write) -> Result<()> {
    let default_r = c.config().replication;
    let mut client = c.client(who.clone());
    match cmd {
        DfsCommand::Put {
            local,
            remote,
            mode,
            replication,
        } => {
            let data = fs::read(local).map_err(|e| Error::io(local, e))?;
            let blocks = client.put(remote, &data, *mode, replication.unwrap_or(default_r))?;
            print(out, format_args!("put {remote} {} bytes in {} blocks", data.len(), blocks.len()))
        }
        DfsCommand::Get { remote, local } => {
            let data = client.read(remote)?;
            fs::write(local, &data).map_err(|e| Error::io(local, e))?;
            print(out, format_args!("got {remote} {} bytes", data.len()))
        }
        DfsCommand::Ls { path } => {
            for e in client.ls(path)? {
                let (r, name) = if e.is_dir() {
                    ("-".to_string(), format!("{}/", e.path.trim_end_matches('/')))
                } else {
                    (e.replication.to_string(), e.path.clone())
                };
                let kind = if e.is_dir() { 'd' } else { '-' };
                print(
                    out,
                    format_args!("{kind}{} {} {} {r} {} {name}", e.mode, e.owner, e.group, e.length),
                )?;
            }
            Ok(())
        }
        DfsCommand::Rm { path } => {
            let n = client.delete(path)?;
            print(out, format_args!("removed {path} ({n} entries)"))
        }
        DfsCommand::Chmod { mode, path } => {
            let e = client.chmod(path, *mode)?;
            print(out, format_args!("{} {}", e.mode, e.path))
        }
        DfsCommand::Mkdir { path, mode } => {
            client.mkdirs(path, *mode)?;
            print(out, format_args!("created {path}"))
        }
    }
}
