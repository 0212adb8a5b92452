//! Subcommand bodies and output files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use omtl_core::benchmark::{
    compare, prepare, run_method, synth_generate, write_trace_csv, ComparisonReport, ExperimentReport,
    MultiTaskDataset, Prepared,
};
use omtl_core::{mt_batch_oracle, Error, MethodRegistry, MtWrlsModel, SimilarityMatrix, TaskGraph};
use serde::Serialize;

use crate::config::{DataSource, RunConfig};

/// Longest training prefix replayed by the oracle check.
pub const ORACLE_STEPS: usize = 60;

pub struct SynthSpec {
    pub tasks: usize,
    pub len: usize,
    pub coupling: f64,
    pub seed: u64,
}

pub fn synth(spec: &SynthSpec, out: &Path) -> anyhow::Result<()> {
    let data = synth_generate(spec.tasks, spec.len, spec.coupling, spec.seed)?;
    let mut buf = Vec::new();
    data.write_csv(&mut buf)?;
    fs::write(out, buf).with_context(|| format!("cannot write {}", out.display()))?;
    let sims = SimilarityMatrix::from_series(data.differenced()?.series())?;
    let (lo, hi) = sims.off_diagonal_range();
    println!("tasks: {}", data.tasks());
    println!("points: {}", data.len());
    println!("similarity range (differenced): [{lo:.4}, {hi:.4}]");
    println!("wrote {}", out.display());
    Ok(())
}

fn load(src: &DataSource) -> anyhow::Result<MultiTaskDataset> {
    Ok(match src {
        DataSource::File { path } => MultiTaskDataset::load_csv(path)?,
        DataSource::Synth { tasks, len, coupling, seed } => synth_generate(*tasks, *len, *coupling, *seed)?,
    })
}

fn load_prepared(cfg: &RunConfig) -> anyhow::Result<Vec<(String, Prepared)>> {
    cfg.data
        .iter()
        .map(|src| {
            let data = load(src)?;
            let p = prepare(&data, &cfg.pipeline).with_context(|| format!("preparing {}", src.label()))?;
            Ok((src.label(), p))
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct OracleCheck {
    pub steps: usize,
    /// Prefixes whose batch solve was too ill-conditioned to serve as oracle.
    pub skipped: usize,
    pub sigma: f64,
    pub lambda: f64,
    pub max_deviation: f64,
}

/// Replays the first training samples through MT-WRLS with `σ = 1` and
/// compares the stacked weights with the batch solve after every step.
/// Prefixes whose batch system is singular are skipped and counted.
pub fn oracle_check(data: &Prepared, lambda: f64) -> anyhow::Result<OracleCheck> {
    let graph = TaskGraph::new(data.sims.clone(), data.gamma, lambda)?;
    let mut model = MtWrlsModel::new(graph.clone(), data.dim, 1.0)?;
    let steps = data.train.len().min(ORACLE_STEPS);
    let mut seen = Vec::with_capacity(steps);
    let mut worst = 0.0f64;
    let mut skipped = 0;
    for s in &data.train[..steps] {
        model.step(s.task, &s.x, s.y)?;
        seen.push((s.task, s.x.clone(), s.y));
        match mt_batch_oracle(&seen, &graph) {
            Ok(w) => worst = worst.max((model.stacked_weights() - w).amax()),
            Err(Error::SingularMatrix(_)) => skipped += 1,
            Err(e) => return Err(e.into()),
        }
    }
    if skipped == steps {
        anyhow::bail!("oracle check: every batch solve was singular at lambda = {lambda}");
    }
    Ok(OracleCheck {
        steps,
        skipped,
        sigma: 1.0,
        lambda,
        max_deviation: worst,
    })
}

#[derive(Serialize)]
struct RunReport<'a> {
    config: &'a RunConfig,
    report: &'a ExperimentReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_check: Option<OracleCheck>,
}

#[derive(Serialize)]
struct CompareReport<'a> {
    config: &'a RunConfig,
    comparison: &'a ComparisonReport,
}

#[derive(Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: String,
    seconds: f64,
    files: Vec<String>,
}

/// Collects output files under `--out` and records them in the manifest.
struct OutDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutDir {
    fn create(root: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> anyhow::Result<()> {
        let mut body = serde_json::to_vec_pretty(value)?;
        body.push(b'\n');
        self.bytes(rel, &body)
    }

    fn text(&mut self, rel: &str, body: &str) -> anyhow::Result<()> {
        self.bytes(rel, body.as_bytes())
    }

    fn bytes(&mut self, rel: &str, body: &[u8]) -> anyhow::Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))?;
        self.files.push(rel.to_string());
        Ok(())
    }

    fn finish(mut self, command: &str, seconds: f64) -> anyhow::Result<()> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seconds,
            files: std::mem::take(&mut self.files),
        };
        self.json("manifest.json", &manifest)
    }
}

pub fn run(cfg: &RunConfig, registry: &MethodRegistry) -> anyhow::Result<()> {
    let start = Instant::now();
    let method = registry.get(&cfg.methods[0])?;
    let mut prepared = load_prepared(cfg)?;
    let (name, data) = prepared.remove(0);
    let run = run_method(method.as_ref(), &data, &cfg.grids)?;
    let check = if cfg.oracle_check {
        let lambda = run.params.lambda.context("chosen parameters carry no lambda")?;
        Some(oracle_check(&data, lambda)?)
    } else {
        None
    };
    let mut report = ExperimentReport::new(name, &data, run);
    let trace = report.run.trace.take().context("run produced no trace")?;

    println!("method: {}", report.run.method);
    println!("params: {}", report.run.params);
    println!("train steps: {}, test steps: {}", report.train_steps, report.test_steps);
    println!("RELRMSE: {:.4}", report.run.mean.relrmse);
    println!("RELMAE: {:.4}", report.run.mean.relmae);
    if let Some(c) = &check {
        println!(
            "oracle check: max deviation {:.3e} over {} steps, {} skipped (sigma = 1, lambda = {})",
            c.max_deviation, c.steps, c.skipped, c.lambda
        );
    }

    let mut out = OutDir::create(&cfg.out)?;
    out.text("resolved_config.toml", &cfg.to_toml()?)?;
    out.json(
        "report.json",
        &RunReport {
            config: cfg,
            report: &report,
            oracle_check: check,
        },
    )?;
    for task in 0..report.tasks {
        let mut buf = Vec::new();
        write_trace_csv(&trace, task, &mut buf)?;
        out.bytes(&format!("traces/task_{task:02}.csv"), &buf)?;
    }
    out.finish("run", start.elapsed().as_secs_f64())?;
    println!("wrote {}", cfg.out.display());
    Ok(())
}

pub fn compare_cmd(cfg: &RunConfig, registry: &MethodRegistry) -> anyhow::Result<()> {
    let start = Instant::now();
    let methods = cfg
        .methods
        .iter()
        .map(|m| registry.get(m))
        .collect::<Result<Vec<_>, _>>()?;
    let prepared = load_prepared(cfg)?;
    let cmp = compare(&prepared, &methods, &cfg.grids)?;

    println!("{:<14} {:>8} {:>8} {:>9} {:>4} {:>4}", "method", "RELRMSE", "RELMAE", "mean rank", "V", "D");
    for s in &cmp.summary {
        println!(
            "{:<14} {:>8.4} {:>8.4} {:>9.2} {:>4} {:>4}",
            s.method, s.relrmse, s.relmae, s.mean_rank, s.victories, s.defeats
        );
    }
    println!(
        "Friedman statistic {:.4}, p-value {:.3e}",
        cmp.friedman.statistic, cmp.friedman.p_value
    );

    let mut out = OutDir::create(&cfg.out)?;
    out.text("resolved_config.toml", &cfg.to_toml()?)?;
    out.json(
        "report.json",
        &CompareReport {
            config: cfg,
            comparison: &cmp,
        },
    )?;
    let mut buf = Vec::new();
    cmp.write_summary_csv(&mut buf)?;
    out.bytes("summary.csv", &buf)?;
    out.finish("compare", start.elapsed().as_secs_f64())?;
    println!("wrote {}", cfg.out.display());
    Ok(())
}
