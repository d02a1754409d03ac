//! `chainlearn`: run federation scenarios, benchmarks, cost tables and audit checks.
//!
//! Exit codes: 0 success, 1 verification failure, 2 input error, 3 runtime error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chainlearn_core::capacity::{DEFAULT_BENCHMARK_BATCH, DEFAULT_BENCHMARK_STEPS, DEFAULT_WARMUP_STEPS};
use chainlearn_core::cost::{
    ledger_for_scenario, per_round_bytes, reduction_ratio, round_gas, CommProfile, GasOp, GasSchedule,
};
use chainlearn_core::sim::{run_scenario, run_spoofing_scenario, ScenarioConfig, ScenarioReport, SimError, SpoofConfig};
use chainlearn_core::{
    assign_architecture, run_benchmark, AuditLog, BenchmarkWorkload, Coordinator, SignedBenchmark, SigningKey,
};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

const SEED_ENV: &str = "CHAINLEARN_SEED";

#[derive(Parser)]
#[command(name = "chainlearn", version, about = "Capacity-aware federated ensemble coordination")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write report.json, metrics.csv and audit.jsonl.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seed override. Precedence: --seed, then the config's `seed`, then
        /// CHAINLEARN_SEED, then 0.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Benchmark this machine (or an injected throughput) and print the signed result.
    Benchmark {
        /// Skip the measurement and report this throughput (samples/s).
        #[arg(long)]
        inject: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_BENCHMARK_STEPS)]
        steps: u32,
        #[arg(long, default_value_t = DEFAULT_BENCHMARK_BATCH)]
        batch: u32,
        #[arg(long, default_value_t = DEFAULT_WARMUP_STEPS)]
        warmup: u32,
        /// File holding a hex secp256k1 secret key; adds address and signature.
        #[arg(long)]
        key: Option<PathBuf>,
    },
    /// Write the payload table (table_ix.csv) and the gas table (table_x.csv).
    Costs {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        hospitals: u64,
        /// Parameter count of the parameter-averaging baseline.
        #[arg(long)]
        param_count: Option<u64>,
        /// Also write ledger.csv for a report produced by `run`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Check an audit log. Exit 1 and print the first broken sequence number on failure.
    Verify { log: PathBuf },
    /// Rebuild coordinator state from an audit log and print it.
    Replay { log: PathBuf },
    /// Run the honest, spoofed-without-PoC and spoofed-with-PoC arms.
    Spoof {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seed override, same precedence as `run`.
        #[arg(long)]
        seed: Option<u64>,
    },
}

enum Failure {
    Verification(String),
    Input(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Verification(_) => 1,
            Failure::Input(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Verification(m) | Failure::Input(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig { .. } => Failure::Input(format!("config error: {e}")),
            other => Failure::Runtime(format!("scenario failed: {other}")),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, seed } => cmd_run(&config, &out, seed),
        Command::Benchmark {
            inject,
            steps,
            batch,
            warmup,
            key,
        } => cmd_benchmark(inject, steps, batch, warmup, key.as_deref()),
        Command::Costs {
            out,
            hospitals,
            param_count,
            report,
        } => cmd_costs(&out, hospitals, param_count, report.as_deref()),
        Command::Verify { log } => cmd_verify(&log),
        Command::Replay { log } => cmd_replay(&log),
        Command::Spoof { config, out, seed } => cmd_spoof(&config, &out, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        Failure::Input(format!("config error at `{field}` in {}: {}", path.display(), e.inner()))
    })
}

fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64, Failure> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Input(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(ScenarioConfig::DEFAULT_SEED),
    }
}

fn create_dir(out: &Path) -> Outcome {
    fs::create_dir_all(out).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", out.display())))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Outcome {
    fs::write(path, contents).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_file(path, text)
}

fn write_csv<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Outcome {
    let fail = |e: csv::Error| Failure::Runtime(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(fail)?;
    for row in rows {
        w.serialize(row).map_err(fail)?;
    }
    w.flush().map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn cmd_run(config: &Path, out: &Path, seed: Option<u64>) -> Outcome {
    let mut cfg: ScenarioConfig = read_json(config)?;
    cfg.seed = Some(resolve_seed(seed, cfg.seed)?);
    cfg.validate()?;
    let run = run_scenario(&cfg)?;
    create_dir(out)?;
    write_json(&out.join("report.json"), &run.report)?;
    write_csv(&out.join("metrics.csv"), run.report.metrics_rows())?;
    write_file(&out.join("audit.jsonl"), run.coordinator.audit_log().to_jsonl())?;
    println!(
        "seed {} | {} rounds | audit head {} | outputs in {}",
        run.report.seed,
        run.report.rounds.len(),
        run.report.audit_head,
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct BenchmarkOutput {
    throughput: f64,
    steps: u32,
    batch_size: u32,
    tier: chainlearn_core::CapacityClass,
    architecture: chainlearn_core::ArchitectureId,
    benchmark_hash: chainlearn_core::Hash32,
    #[serde(skip_serializing_if = "Option::is_none")]
    address: Option<chainlearn_core::ParticipantAddress>,
    #[serde(skip_serializing_if = "Option::is_none")]
    signature: Option<chainlearn_core::Signature65>,
}

fn cmd_benchmark(inject: Option<f64>, steps: u32, batch: u32, warmup: u32, key: Option<&Path>) -> Outcome {
    let key = key
        .map(|p| SigningKey::from_hex_file(p).map_err(|e| Failure::Input(format!("key {}: {e}", p.display()))))
        .transpose()?;
    let workload = match inject {
        Some(t) => BenchmarkWorkload::injected(t),
        None => BenchmarkWorkload::Measured { warmup_steps: warmup },
    };
    let report = run_benchmark(workload, steps, batch).map_err(|e| Failure::Input(e.to_string()))?;
    let hash = chainlearn_core::hash_benchmark(&report).map_err(|e| Failure::Runtime(e.to_string()))?;
    let (address, signature) = match &key {
        Some(k) => {
            let signed = SignedBenchmark::create(report, k).map_err(|e| Failure::Runtime(e.to_string()))?;
            (Some(k.address()), Some(signed.signature))
        }
        None => (None, None),
    };
    let out = BenchmarkOutput {
        throughput: report.throughput,
        steps: report.steps,
        batch_size: report.batch_size,
        tier: report.declared_capacity,
        architecture: assign_architecture(report.declared_capacity),
        benchmark_hash: hash,
        address,
        signature,
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("output serializes"));
    Ok(())
}

#[derive(Serialize)]
struct PayloadRow {
    method: &'static str,
    upload_bytes: u64,
    download_bytes: u64,
    total_bytes: u64,
}

#[derive(Serialize)]
struct GasRow {
    operation: String,
    gas: u64,
    usd: String,
    frequency: &'static str,
}

#[derive(Serialize)]
struct LedgerRow {
    operation: &'static str,
    round: Option<u64>,
    count: u64,
    gas: u64,
    usd: String,
}

fn cmd_costs(out: &Path, hospitals: u64, param_count: Option<u64>, report: Option<&Path>) -> Outcome {
    let scenario: Option<ScenarioReport> = report.map(read_json).transpose()?;
    let baseline = match param_count {
        Some(0) => return Err(Failure::Input("--param-count must be positive".into())),
        Some(n) => CommProfile::param_averaging(n),
        None => CommProfile::new(chainlearn_core::cost::CommMethod::ParamAveraging),
    };
    let ours = CommProfile::metadata_only();
    let payload_rows = [
        ("FedAvg/FedProx", baseline),
        ("FedMD", CommProfile::logit_exchange()),
        ("Ours", ours),
    ]
    .map(|(method, profile)| {
        let b = per_round_bytes(&profile);
        PayloadRow {
            method,
            upload_bytes: b.upload,
            download_bytes: b.download,
            total_bytes: b.total,
        }
    });

    let schedule = GasSchedule::default();
    let mut gas_rows: Vec<GasRow> = GasOp::ALL
        .iter()
        .map(|&op| {
            let c = schedule.cost(schedule.gas_for(op));
            GasRow {
                operation: op.name().into(),
                gas: c.gas,
                usd: c.usd.to_string(),
                frequency: op.frequency(),
            }
        })
        .collect();
    let total = round_gas(&schedule, hospitals);
    gas_rows.push(GasRow {
        operation: format!("Total per round ({hospitals} hospitals)"),
        gas: total.gas,
        usd: total.usd.to_string(),
        frequency: "",
    });

    create_dir(out)?;
    write_csv(&out.join("table_ix.csv"), payload_rows)?;
    write_csv(&out.join("table_x.csv"), gas_rows)?;

    let ratio = reduction_ratio(&baseline, &ours).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!(
        "metadata-only payload {} bytes, {}x smaller than parameter averaging",
        per_round_bytes(&ours).total,
        ratio.floor()
    );
    println!("round gas with {hospitals} hospitals: {} (${})", total.gas, total.usd);

    if let Some(rep) = scenario {
        let ledger = ledger_for_scenario(&rep, &schedule, &ours);
        let rows = ledger.entries.iter().map(|e| LedgerRow {
            operation: e.op.name(),
            round: e.round,
            count: e.count,
            gas: e.gas,
            usd: e.usd.to_string(),
        });
        write_csv(&out.join("ledger.csv"), rows)?;
        println!(
            "scenario ledger: {} gas (${}), {} metadata bytes",
            ledger.total_gas(),
            ledger.total_usd(&schedule),
            ledger.total_bytes()
        );
    }
    Ok(())
}

fn load_log(path: &Path) -> Result<Result<AuditLog, chainlearn_core::audit::AuditError>, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
    Ok(AuditLog::parse_jsonl_bytes(&bytes))
}

fn broken(e: &chainlearn_core::audit::AuditError) -> Failure {
    match e.broken_seq() {
        Some(seq) => Failure::Verification(format!("audit chain broken at seq {seq}: {e}")),
        None => Failure::Verification(format!("audit chain invalid: {e}")),
    }
}

fn cmd_verify(path: &Path) -> Outcome {
    let log = load_log(path)?.map_err(|e| broken(&e))?;
    println!("ok: {} records, head {}", log.len(), log.head());
    Ok(())
}

fn cmd_replay(path: &Path) -> Outcome {
    let log = load_log(path)?.map_err(|e| broken(&e))?;
    let coord = Coordinator::replay(&log).map_err(|e| Failure::Verification(format!("replay failed: {e}")))?;
    #[derive(Serialize)]
    struct Replayed<'a> {
        state: &'a chainlearn_core::CoordinatorState,
        state_digest: chainlearn_core::Hash32,
        audit_head: chainlearn_core::Hash32,
    }
    let out = Replayed {
        state: coord.state(),
        state_digest: coord.state_digest(),
        audit_head: coord.audit_log().head(),
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("state serializes"));
    Ok(())
}

#[derive(Serialize)]
struct ArmRow {
    arm: String,
    attacker_status: String,
    participant_counts: String,
    mean_accuracy: f64,
}

fn cmd_spoof(config: &Path, out: &Path, seed: Option<u64>) -> Outcome {
    let mut cfg: SpoofConfig = read_json(config)?;
    cfg.scenario.seed = Some(resolve_seed(seed, cfg.scenario.seed)?);
    cfg.scenario.validate()?;
    let report = run_spoofing_scenario(&cfg)?;
    create_dir(out)?;
    write_json(&out.join("spoof_report.json"), &report)?;
    let rows: Vec<ArmRow> = report
        .arms
        .iter()
        .map(|a| ArmRow {
            arm: serde_json::to_value(a.arm).expect("arm serializes").as_str().unwrap_or_default().to_owned(),
            attacker_status: a.attacker_status.clone().unwrap_or_else(|| "absent".into()),
            participant_counts: a.participant_counts.iter().map(u64::to_string).collect::<Vec<_>>().join(" "),
            mean_accuracy: a.mean_accuracy,
        })
        .collect();
    for r in &rows {
        println!(
            "{:<15} attacker {:<27} participants [{}] mean accuracy {:.4}",
            r.arm, r.attacker_status, r.participant_counts, r.mean_accuracy
        );
    }
    write_csv(&out.join("spoof_summary.csv"), rows)
}
