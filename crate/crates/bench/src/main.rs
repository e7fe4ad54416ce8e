use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sprec::diagnostics::{codelength_bound, epsilon_cost, mmd_rbf, Bandwidth, DiagnosticRecord};
use sprec::index_codec::{fit_zeta, nll_bits, ZipfModel};
use sprec::rec::{read_block, write_block};
use sprec::{build_partition, decode, GridPartition, Seeds};
use sprec_bench::summary::{summarize, BucketBy};
use sprec_bench::sweep::{write_csv, TaskContext};
use sprec_bench::{gen_tasks, run_orc_sweep, run_pfr_sweep, Algorithm, SweepConfig, ToyTaskSpec};

#[derive(Parser)]
#[command(
    name = "sprec-bench",
    version,
    about = "Toy-task experiments for space-partitioned relative entropy coding"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Sweep configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate toy tasks as JSON.
    GenTasks {
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 5)]
        dim: usize,
    },
    /// Encode one task into a block file; prints the encode report.
    Encode {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        task_id: u64,
        #[arg(long, default_value = "sp-pfr")]
        algorithm: Algorithm,
        /// Candidate budget for ORC variants.
        #[arg(long, default_value_t = 1024)]
        n: u64,
        #[arg(long, default_value_t = 1)]
        private_seed: u64,
        /// Zipf parameter written to the block.
        #[arg(long, default_value_t = 1.0)]
        zeta: f64,
    },
    /// Decode a block file against a task's prior; prints the sample.
    Decode {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        task_id: u64,
        #[arg(long)]
        block: PathBuf,
    },
    /// PFR vs SP-PFR sweep; writes CSV and a summary JSON next to it.
    SweepPfr,
    /// ORC vs SP-ORC sweep with MMD per cell.
    SweepOrc,
    /// Fit a Zipf model to whitespace-separated indices.
    FitZipf {
        #[arg(long)]
        input: PathBuf,
    },
    /// ε-cost and codelength bound per task, as JSON lines.
    Bounds {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        n_mc: usize,
    },
    /// MMD² between two CSV point sets (one point per row, no header).
    Mmd {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Fixed RBF bandwidth; median heuristic when absent.
        #[arg(long)]
        bandwidth: Option<f64>,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let c = &cli.common;
    match cli.command {
        Command::GenTasks { count, dim } => {
            let tasks = gen_tasks(count, dim, c.seed);
            emit(c.out.as_deref(), serde_json::to_string_pretty(&tasks)?.as_bytes())
        }
        Command::Encode {
            tasks,
            task_id,
            algorithm,
            n,
            private_seed,
            zeta,
        } => {
            let ctx = TaskContext::new(&load_task(&tasks, task_id)?, load_config(c)?.allocation)?;
            let report = ctx.encode(algorithm, Seeds::new(c.seed, private_seed), n, 1 << 24)?;
            let part = if algorithm.partitioned() {
                ctx.part.clone()
            } else {
                GridPartition::trivial(ctx.task.prior())
            };
            let block = write_block(&part, report.code, c.seed, &ZipfModel::new(zeta)?)?;
            match &c.out {
                Some(p) => fs::write(p, &block).with_context(|| format!("writing {}", p.display()))?,
                None => bail!("encode needs --out for the block file"),
            }
            println!("{}", serde_json::to_string(&report)?);
            Ok(())
        }
        Command::Decode { tasks, task_id, block } => {
            let spec = load_task(&tasks, task_id)?;
            let bytes = fs::read(&block).with_context(|| format!("reading {}", block.display()))?;
            let (header, code) = read_block(&bytes)?;
            let task = spec.task();
            let part = build_partition(task.prior(), &header.counts_u32())?;
            let z = decode(task.prior(), &part, code, header.base_seed)?;
            emit(c.out.as_deref(), serde_json::to_string(&z)?.as_bytes())
        }
        Command::SweepPfr => sweep(c, false),
        Command::SweepOrc => sweep(c, true),
        Command::FitZipf { input } => {
            let text = fs::read_to_string(&input)?;
            let indices = text
                .split_whitespace()
                .map(|s| s.parse::<u64>().with_context(|| format!("bad index {s:?}")))
                .collect::<Result<Vec<_>>>()?;
            let model = fit_zeta(&indices)?;
            let nll: f64 = indices
                .iter()
                .map(|&n| nll_bits(&model, n))
                .sum::<sprec::Result<f64>>()?;
            let out = serde_json::json!({
                "zeta": model.zeta(),
                "exponent": model.exponent(),
                "n": indices.len(),
                "mean_nll_bits": nll / indices.len() as f64,
            });
            emit(c.out.as_deref(), out.to_string().as_bytes())
        }
        Command::Bounds { tasks, n_mc } => {
            let cfg = load_config(c)?;
            let mut lines = String::new();
            for spec in load_tasks(&tasks)? {
                let ctx = TaskContext::new(&spec, cfg.allocation)?;
                let j = ctx.part.total_bins();
                let eps = epsilon_cost(&ctx.task, j, n_mc, c.seed)?;
                let bound = codelength_bound(&ctx.task, j, eps.value)?;
                let tag = |s: &str| format!("task{}/{s}", spec.id);
                let mut recs = vec![
                    DiagnosticRecord::exact(tag("kl_bits"), bound.kl_bits),
                    DiagnosticRecord::exact(tag("log2_J"), bound.log2_j),
                    DiagnosticRecord::estimate(tag("epsilon"), eps),
                    DiagnosticRecord {
                        name: tag("codelength_bound_bits"),
                        value: bound.codelength_bound_bits,
                        stderr: Some(eps.stderr),
                        n_mc: Some(n_mc),
                        seed: Some(c.seed),
                    },
                ];
                if let Some(cap) = bound.epsilon_gaussian_cap {
                    recs.push(DiagnosticRecord::exact(tag("epsilon_cap"), cap));
                }
                for r in recs {
                    lines.push_str(&r.to_json());
                    lines.push('\n');
                }
            }
            emit(c.out.as_deref(), lines.as_bytes())
        }
        Command::Mmd { a, b, bandwidth } => {
            let (a, b) = (read_points(&a)?, read_points(&b)?);
            let bw = bandwidth.map_or(Bandwidth::Median, Bandwidth::Fixed);
            let v = mmd_rbf(&a, &b, bw)?;
            let rec = DiagnosticRecord::exact("mmd2", v);
            emit(c.out.as_deref(), rec.to_json().as_bytes())
        }
    }
}

fn load_config(c: &Common) -> Result<SweepConfig> {
    match &c.config {
        Some(p) => {
            let s = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(SweepConfig::from_json(&s)?)
        }
        None => Ok(SweepConfig::default()),
    }
}

fn load_tasks(path: &Path) -> Result<Vec<ToyTaskSpec>> {
    let s = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&s)?)
}

fn load_task(path: &Path, id: u64) -> Result<ToyTaskSpec> {
    load_tasks(path)?
        .into_iter()
        .find(|t| t.id == id)
        .with_context(|| format!("no task with id {id}"))
}

fn read_points(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    rdr.records()
        .map(|row| {
            row?.iter()
                .map(|f| f.trim().parse::<f64>().with_context(|| format!("bad number {f:?}")))
                .collect()
        })
        .collect()
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))?,
        None => {
            let mut so = io::stdout().lock();
            so.write_all(bytes)?;
            so.write_all(b"\n")?;
        }
    }
    Ok(())
}

fn sweep(c: &Common, orc: bool) -> Result<()> {
    let cfg = load_config(c)?;
    let tasks = gen_tasks(cfg.tasks, cfg.dim, c.seed);
    let records = if orc {
        run_orc_sweep(&tasks, &cfg, c.seed)?
    } else {
        run_pfr_sweep(&tasks, &cfg, c.seed)?
    };
    let mut buf = Vec::new();
    write_csv(&records, &mut buf)?;
    emit(c.out.as_deref(), &buf)?;

    let buckets = if orc {
        vec![BucketBy::NCandidates]
    } else {
        vec![BucketBy::DinfBits, BucketBy::MiBits]
    };
    let summary: Vec<_> = buckets.into_iter().flat_map(|b| summarize(&records, b)).collect();
    let json = serde_json::to_string_pretty(&serde_json::json!({
        "csv_version": sprec_bench::sweep::CSV_VERSION,
        "seed": c.seed,
        "config": cfg,
        "mmd_bandwidth": "median pairwise distance of pooled standardized samples",
        "buckets": summary,
    }))?;
    match &c.out {
        Some(p) => {
            let mut s = p.as_os_str().to_owned();
            s.push(".summary.json");
            fs::write(&s, json)?;
        }
        None => eprintln!("{json}"),
    }
    Ok(())
}
