mod args;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::Parser;
use rayon::prelude::*;
use serde::Serialize;

use args::{AttackArgs, AttackKind, Cli, Command, CurveArgs, Defense, ProactiveSel, ReplayArgs, SimulateArgs};
use pracsim::attacks::{blocked_tbit, fill_escape, toggle_forget, wave_attack, AttackOutcome, AttackReport};
use pracsim::dram::DramConfig;
use pracsim::security::{bandwidth_table, curve_point, n_online, write_bandwidth_csv, write_curve_csv, AnalysisConfig, CURVE_N_BO};
use pracsim::sim::{parse_trace, run_pattern, write_trace, ChannelState, MitigationPolicy, RunOptions, SimStats};
use pracsim::AttackError;

const POLICY_TAG: &str = "# pracsim-policy ";
const CONFIG_TAG: &str = "# pracsim-config ";

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome<T> = Result<T, Failure>;

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("usage error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Outcome<()> {
    init_threads()?;
    let base = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(usage)?;
            DramConfig::parse(&text).map_err(usage)?
        }
        None => DramConfig::default(),
    };
    let with_overrides = |mut cfg: DramConfig| -> Outcome<DramConfig> {
        cfg.apply(&cli.overrides).map_err(usage)?;
        Ok(cfg)
    };
    let out = cli.output.as_deref();
    match &cli.command {
        Command::Curve(a) => curve(a, &with_overrides(base)?, out),
        Command::Attack(a) => attack(a, &with_overrides(base)?, out),
        Command::Simulate(a) => simulate(a, &with_overrides(base)?, out),
        Command::Bandwidth => {
            let cfg = with_overrides(base)?;
            let rows = bandwidth_table(&AnalysisConfig::new(cfg.params, cfg.timings));
            let mut buf = Vec::new();
            write_bandwidth_csv(&rows, &mut buf).map_err(anyhow::Error::from)?;
            emit(out, &buf)
        }
        Command::Replay(a) => replay(a, cli.config.is_some().then_some(base), &cli.overrides, out),
    }
}

fn init_threads() -> Outcome<()> {
    let Ok(raw) = std::env::var("PRACSIM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| usage(anyhow!("PRACSIM_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(anyhow::Error::from)?;
    Ok(())
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Outcome<()> {
    match out {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(bytes).context("writing stdout")?,
    }
    Ok(())
}

fn curve(a: &CurveArgs, cfg: &DramConfig, out: Option<&Path>) -> Outcome<()> {
    let modes: &[bool] = match a.proactive {
        ProactiveSel::Off => &[false],
        ProactiveSel::On => &[true],
        ProactiveSel::Both => &[false, true],
    };
    let mut grid = Vec::new();
    for &n_mit in &a.n_mit {
        let mut params = cfg.params;
        params.n_mit = n_mit;
        params.abo_delay = n_mit;
        params.validate().map_err(usage)?;
        for &proactive in modes {
            for n_bo in CURVE_N_BO {
                grid.push((AnalysisConfig::new(params, cfg.timings).with_proactive(proactive), n_bo));
            }
        }
    }
    let results: Vec<_> = grid.par_iter().map(|(acfg, n_bo)| (acfg, *n_bo, curve_point(*n_bo, acfg))).collect();
    let mut points = Vec::new();
    let mut failed = 0;
    for (acfg, n_bo, r) in results {
        match r {
            Ok(p) => points.push(p),
            Err(e) => {
                failed += 1;
                eprintln!("n_bo {n_bo}, n_mit {}, proactive {}: {e}", acfg.params.n_mit, acfg.proactive);
            }
        }
    }
    let mut buf = Vec::new();
    write_curve_csv(&points, &mut buf).map_err(anyhow::Error::from)?;
    emit(out, &buf)?;
    if failed > 0 {
        return Err(anyhow!("{failed} curve points failed").into());
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct AttackRecord {
    attack: &'static str,
    n_bo: u32,
    n_mit: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    queue_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tbit: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r1: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    defense: Option<&'static str>,
    report: AttackReport,
}

type Job = (AttackRecord, Box<dyn Fn(bool) -> Result<AttackOutcome, AttackError> + Send + Sync>);

fn attack(a: &AttackArgs, cfg: &DramConfig, out: Option<&Path>) -> Outcome<()> {
    let (p, t) = (cfg.params, cfg.timings);
    let blank = |attack| AttackRecord {
        attack,
        n_bo: p.n_bo,
        n_mit: p.n_mit,
        queue_size: None,
        tbit: None,
        threshold: None,
        r1: None,
        defense: None,
        report: AttackReport::default(),
    };
    let mut jobs: Vec<Job> = Vec::new();
    match &a.kind {
        AttackKind::ToggleForget { queue_size, tbit } => {
            for &q in queue_size {
                for &b in tbit {
                    let rec = AttackRecord { queue_size: Some(q), tbit: Some(b), ..blank("toggle_forget") };
                    jobs.push((rec, Box::new(move |tr| toggle_forget(q, b, &p, &t, tr))));
                }
            }
        }
        AttackKind::FillEscape { threshold, queue_size } => {
            for &m in threshold {
                for &q in queue_size {
                    let rec = AttackRecord { queue_size: Some(q), threshold: Some(m), ..blank("fill_escape") };
                    jobs.push((rec, Box::new(move |tr| fill_escape(m, q, &p, &t, tr))));
                }
            }
        }
        AttackKind::BlockedTbit { threshold, queue_size } => {
            for &m in threshold {
                for &q in queue_size {
                    let rec = AttackRecord { queue_size: Some(q), threshold: Some(m), ..blank("blocked_tbit") };
                    jobs.push((rec, Box::new(move |tr| blocked_tbit(m, q, &p, &t, tr))));
                }
            }
        }
        AttackKind::Wave { r1, defense } => {
            let (name, policy) = match defense {
                Defense::Psq => ("psq", MitigationPolicy::qprac(&p)),
                Defense::Ideal => ("ideal", MitigationPolicy::ideal(&p)),
            };
            for &r in r1 {
                let rec = AttackRecord { r1: Some(r), defense: Some(name), ..blank("wave") };
                jobs.push((rec, Box::new(move |tr| wave_attack(&policy, r, &p, &t, tr))));
            }
        }
    }
    let tracing = a.trace_prefix.is_some();
    let runs: Vec<Result<(AttackRecord, AttackOutcome), Failure>> = jobs
        .par_iter()
        .map(|(rec, job)| {
            let outcome = job(tracing).map_err(|e| match e {
                AttackError::Unsupported(_) => usage(e),
                _ => Failure::Runtime(e.into()),
            })?;
            Ok((AttackRecord { report: outcome.report, ..rec.clone() }, outcome))
        })
        .collect();
    let mut records = Vec::new();
    for (i, run) in runs.into_iter().enumerate() {
        let (rec, outcome) = run?;
        if let Some(prefix) = &a.trace_prefix {
            save_trace(prefix, i, &outcome, cfg)?;
        }
        records.push(rec);
    }
    let mut json = serde_json::to_string_pretty(&records).map_err(anyhow::Error::from)?;
    json.push('\n');
    emit(out, json.as_bytes())
}

fn numbered(prefix: &Path, i: usize, ext: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(format!("-{i}.{ext}"));
    PathBuf::from(name)
}

fn save_trace(prefix: &Path, i: usize, outcome: &AttackOutcome, cfg: &DramConfig) -> Outcome<()> {
    let steps = outcome.trace.as_deref().ok_or_else(|| anyhow!("attack returned no trace"))?;
    // attacks run with 32-bit counters; the replay must too
    let cfg = DramConfig { counter_width: pracsim::CounterWidth::new(32), ..*cfg };
    let mut text = format!(
        "{POLICY_TAG}{}\n{CONFIG_TAG}{}\n",
        serde_json::to_string(&outcome.policy).map_err(anyhow::Error::from)?,
        serde_json::to_string(&cfg).map_err(anyhow::Error::from)?
    );
    text.push_str(&write_trace(steps));
    let trace_path = numbered(prefix, i, "trace");
    fs::write(&trace_path, text).with_context(|| format!("writing {}", trace_path.display()))?;
    let stats_path = numbered(prefix, i, "stats.json");
    fs::write(&stats_path, outcome.stats.to_json() + "\n").with_context(|| format!("writing {}", stats_path.display()))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct SimRow {
    n_bo: u32,
    n_mit: u32,
    r1: u32,
    psq_max: u64,
    ideal_max: u64,
    analytical: u64,
    rounds: u64,
    window_exhausted: bool,
}

fn simulate(a: &SimulateArgs, cfg: &DramConfig, out: Option<&Path>) -> Outcome<()> {
    let n_mits = if a.n_mit.is_empty() { vec![cfg.params.n_mit] } else { a.n_mit.clone() };
    let mut grid = Vec::new();
    for &n_mit in &n_mits {
        let mut p = cfg.params;
        p.n_mit = n_mit;
        p.abo_delay = n_mit;
        p.validate().map_err(usage)?;
        grid.extend(a.r1.iter().map(|&r1| (p, r1)));
    }
    let t = cfg.timings;
    let rows: Vec<Outcome<SimRow>> = grid
        .par_iter()
        .map(|&(p, r1)| {
            let run = |policy| wave_attack(&policy, r1, &p, &t, false).map_err(|e| match e {
                AttackError::Unsupported(_) => usage(e),
                _ => Failure::Runtime(e.into()),
            });
            let psq = run(MitigationPolicy::qprac(&p))?;
            let ideal = run(MitigationPolicy::ideal(&p))?;
            let online = n_online(u64::from(r1), &AnalysisConfig::new(p, t)).map_err(anyhow::Error::from)?;
            Ok(SimRow {
                n_bo: p.n_bo,
                n_mit: p.n_mit,
                r1,
                psq_max: psq.report.max_unmitigated,
                ideal_max: ideal.report.max_unmitigated,
                analytical: u64::from(p.n_bo) + online,
                rounds: psq.report.rounds,
                window_exhausted: psq.report.window_exhausted,
            })
        })
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row?).map_err(anyhow::Error::from)?;
    }
    let buf = w.into_inner().map_err(|e| anyhow!("{e}"))?;
    emit(out, &buf)
}

fn replay(a: &ReplayArgs, config: Option<DramConfig>, overrides: &[(String, String)], out: Option<&Path>) -> Outcome<()> {
    let text = fs::read_to_string(&a.trace).with_context(|| format!("reading {}", a.trace.display())).map_err(usage)?;
    let header = |tag: &str| text.lines().find_map(|l| l.strip_prefix(tag).map(str::to_owned));
    let mut cfg = match (config, header(CONFIG_TAG)) {
        (Some(c), _) => c,
        (None, Some(json)) => serde_json::from_str(&json).context("trace config header").map_err(usage)?,
        (None, None) => DramConfig::default(),
    };
    cfg.apply(overrides).map_err(usage)?;
    let policy = match header(POLICY_TAG) {
        Some(json) => serde_json::from_str(&json).context("trace policy header").map_err(usage)?,
        None => MitigationPolicy::qprac(&cfg.params),
    };
    let steps = parse_trace(&text).map_err(usage)?;
    let mut ch = ChannelState::new(cfg.params, cfg.timings, policy, cfg.counter_width).map_err(usage)?;
    let opts = if a.auto { RunOptions::default() } else { RunOptions::verbatim() };
    let stats = run_pattern(&mut ch, &steps, opts).map_err(anyhow::Error::from)?;
    let Some(expect) = &a.expect else {
        return emit(out, (stats.to_json() + "\n").as_bytes());
    };
    let pinned_text = fs::read_to_string(expect).with_context(|| format!("reading {}", expect.display())).map_err(usage)?;
    let pinned = SimStats::from_json(&pinned_text).context("pinned stats").map_err(usage)?;
    let diff = pinned.diff(&stats);
    if diff.is_empty() {
        return emit(out, b"stats match\n");
    }
    emit(out, format!("{}\n", diff.join("\n")).as_bytes())?;
    Err(anyhow!("{} stats fields differ from {}", diff.len(), expect.display()).into())
}
