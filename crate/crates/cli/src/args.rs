use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "pracsim", version, about = "PRAC/QPRAC Rowhammer mitigation simulator and security model")]
pub struct Cli {
    /// `key = value` config file; unset keys keep their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override one config key, e.g. `--set n_mit=4`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = parse_kv)]
    pub overrides: Vec<(String, String)>,

    /// Write the result here instead of stdout.
    #[arg(long, short, global = true, value_name = "PATH")]
    pub output: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

fn parse_kv(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, found `{s}`"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimum secure T_RH curve as CSV.
    #[command(after_help = "CSV columns:
  n_bo            Back-Off threshold
  n_mit           RFMs per Alert
  proactive       off or on
  max_r1          largest initial pool the setup phase can prepare in one window
  n_online        extra ACTs the online phase adds on top of n_bo
  min_secure_trh  smallest T_RH the configuration protects")]
    Curve(CurveArgs),

    /// Run an attack against its target defense and print JSON reports.
    Attack(AttackArgs),

    /// Wave attack against PSQ and ideal tracking, compared with the analytical bound, as CSV.
    #[command(after_help = "CSV columns:
  n_bo               Back-Off threshold
  n_mit              RFMs per Alert
  r1                 requested initial pool
  psq_max            highest unmitigated count against the 5-entry PSQ
  ideal_max          the same against ideal top-N tracking
  analytical         n_bo + n_online(r1)
  rounds             online rounds the attack completed against the PSQ
  window_exhausted   true if the refresh window ended before the attack finished")]
    Simulate(SimulateArgs),

    /// Worst-case bandwidth loss table as CSV.
    #[command(after_help = "CSV columns:
  n_bo       Back-Off threshold (16, 32, 64, 128)
  scope      RFM scope: all_bank, same_bank or per_bank
  proactive  off or on
  bw_loss    fraction of channel bandwidth lost, 4 decimals")]
    Bandwidth,

    /// Re-execute a trace and compare its stats with a pinned JSON file.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProactiveSel {
    Off,
    On,
    Both,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    /// RFMs per Alert to sweep (comma separated).
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 4])]
    pub n_mit: Vec<u32>,

    #[arg(long, value_enum, default_value_t = ProactiveSel::Both)]
    pub proactive: ProactiveSel,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[command(subcommand)]
    pub kind: AttackKind,

    /// Also write `<PREFIX>-<i>.trace` and `<PREFIX>-<i>.stats.json` for every grid point.
    #[arg(long, global = true, value_name = "PREFIX")]
    pub trace_prefix: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum AttackKind {
    /// Toggle+Forget against a t-bit FIFO.
    ToggleForget {
        #[arg(long, value_delimiter = ',', default_values_t = [4])]
        queue_size: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [10])]
        tbit: Vec<u32>,
    },
    /// Fill+Escape against a full-count FIFO.
    FillEscape {
        #[arg(long, value_delimiter = ',', default_values_t = [512])]
        threshold: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_values_t = [5])]
        queue_size: Vec<usize>,
    },
    /// Attack on the t-bit FIFO that ignores toggles inside ABO windows.
    BlockedTbit {
        #[arg(long, value_delimiter = ',', default_values_t = [1024])]
        threshold: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_values_t = [5])]
        queue_size: Vec<usize>,
    },
    /// Wave attack against PSQ or ideal tracking.
    Wave {
        #[arg(long, value_delimiter = ',', default_values_t = [1024])]
        r1: Vec<u32>,
        #[arg(long, value_enum, default_value_t = Defense::Psq)]
        defense: Defense,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Defense {
    Psq,
    Ideal,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Initial pool sizes (comma separated).
    #[arg(long, value_delimiter = ',', default_values_t = [16, 64, 256, 1024, 4096])]
    pub r1: Vec<u32>,

    /// RFMs per Alert; defaults to the configured n_mit.
    #[arg(long, value_delimiter = ',')]
    pub n_mit: Vec<u32>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Trace file (`ACT <bank> <row>`, `REF`, `SERVICE`).
    pub trace: PathBuf,

    /// Pinned stats to compare against. Without it the stats are printed.
    #[arg(long, value_name = "FILE")]
    pub expect: Option<PathBuf>,

    /// Insert REFs and Alert services like a worst-case controller instead of
    /// replaying the commands exactly.
    #[arg(long)]
    pub auto: bool,
}
