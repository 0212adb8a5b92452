use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{Grids, Method};

use super::protocol::{run_method, MethodRun, Prepared, Trace};
use super::stats::{friedman_fisher, FriedmanResult};

/// Result of one method on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub tasks: usize,
    pub train_steps: usize,
    pub test_steps: usize,
    pub run: MethodRun,
}

impl ExperimentReport {
    pub fn new(dataset: impl Into<String>, data: &Prepared, run: MethodRun) -> Self {
        Self {
            dataset: dataset.into(),
            tasks: data.tasks,
            train_steps: data.train_steps,
            test_steps: data.test_steps,
            run,
        }
    }
}

/// Writes `step,actual,predicted` for one task of a trace.
pub fn write_trace_csv<W: Write>(trace: &Trace, task: usize, mut w: W) -> Result<()> {
    let (p, a) = trace
        .predictions
        .get(task)
        .zip(trace.actuals.get(task))
        .ok_or_else(|| Error::invalid(format!("task {task} not in trace")))?;
    writeln!(w, "step,actual,predicted")?;
    for (i, (a, p)) in a.iter().zip(p).enumerate() {
        writeln!(w, "{i},{a},{p}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub relrmse: f64,
    pub relmae: f64,
    pub mean_rank: f64,
    pub victories: usize,
    pub defeats: usize,
}

/// Several methods over several datasets, ranked on mean RELRMSE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub datasets: Vec<String>,
    pub methods: Vec<String>,
    /// `relrmse[k][m]`: mean RELRMSE of method `m` on dataset `k`.
    pub relrmse: Vec<Vec<f64>>,
    pub relmae: Vec<Vec<f64>>,
    pub summary: Vec<MethodSummary>,
    pub friedman: FriedmanResult,
    pub runs: Vec<ExperimentReport>,
}

impl ComparisonReport {
    pub fn from_runs(datasets: Vec<String>, methods: Vec<String>, runs: Vec<ExperimentReport>) -> Result<Self> {
        let (b, k) = (datasets.len(), methods.len());
        if runs.len() != b * k {
            return Err(Error::invalid(format!("expected {} runs, got {}", b * k, runs.len())));
        }
        let cell = |i: usize, j: usize| &runs[i * k + j].run.mean;
        let relrmse: Vec<Vec<f64>> = (0..b).map(|i| (0..k).map(|j| cell(i, j).relrmse).collect()).collect();
        let relmae: Vec<Vec<f64>> = (0..b).map(|i| (0..k).map(|j| cell(i, j).relmae).collect()).collect();
        let table = DMatrix::from_fn(b, k, |i, j| relrmse[i][j]);
        let friedman = friedman_fisher(&table)?;
        let summary = methods
            .iter()
            .enumerate()
            .map(|(j, m)| MethodSummary {
                method: m.clone(),
                relrmse: relrmse.iter().map(|r| r[j]).sum::<f64>() / b as f64,
                relmae: relmae.iter().map(|r| r[j]).sum::<f64>() / b as f64,
                mean_rank: friedman.mean_ranks[j],
                victories: friedman.victories[j],
                defeats: friedman.defeats[j],
            })
            .collect();
        Ok(Self {
            datasets,
            methods,
            relrmse,
            relmae,
            summary,
            friedman,
            runs,
        })
    }

    /// `method,RELRMSE,RELMAE,mean_rank,victories,defeats`.
    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "method,RELRMSE,RELMAE,mean_rank,victories,defeats")?;
        for s in &self.summary {
            writeln!(
                w,
                "{},{:.4},{:.4},{:.2},{},{}",
                s.method, s.relrmse, s.relmae, s.mean_rank, s.victories, s.defeats
            )?;
        }
        Ok(())
    }
}

/// Runs every method on every dataset in parallel and ranks the results.
pub fn compare(
    datasets: &[(String, Prepared)],
    methods: &[Arc<dyn Method>],
    grids: &Grids,
) -> Result<ComparisonReport> {
    if datasets.len() < 2 || methods.len() < 2 {
        return Err(Error::invalid("comparison needs at least 2 datasets and 2 methods"));
    }
    let jobs: Vec<(usize, usize)> = (0..datasets.len())
        .flat_map(|i| (0..methods.len()).map(move |j| (i, j)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(i, j)| {
            let (name, data) = &datasets[i];
            let mut run = run_method(methods[j].as_ref(), data, grids).map_err(|e| {
                Error::invalid(format!("{} on {name}: {e}", methods[j].name()))
            })?;
            run.trace = None;
            Ok(ExperimentReport::new(name.clone(), data, run))
        })
        .collect::<Result<Vec<_>>>()?;
    ComparisonReport::from_runs(
        datasets.iter().map(|(n, _)| n.clone()).collect(),
        methods.iter().map(|m| m.name().to_string()).collect(),
        runs,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::data::synth_generate;
    use crate::benchmark::protocol::{prepare, PipelineConfig};
    use crate::learner::MethodRegistry;

    #[test]
    fn identical_methods_never_win() {
        let reg = MethodRegistry::builtin();
        let p = reg.get("persistence").unwrap();
        let data: Vec<_> = (0..3)
            .map(|s| {
                let d = synth_generate(2, 80, 0.5, s).unwrap();
                (format!("s{s}"), prepare(&d, &PipelineConfig::default()).unwrap())
            })
            .collect();
        let r = compare(&data, &[p.clone(), p], &Grids::default()).unwrap();
        assert_eq!(r.friedman.statistic, 0.0);
        assert!(r.summary.iter().all(|s| s.victories == 0 && s.defeats == 0));
        let mut buf = Vec::new();
        r.write_summary_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("method,RELRMSE,RELMAE"));
        assert!(text.contains("persistence,1.0000,1.0000"));
    }

    #[test]
    fn needs_two_of_each() {
        let reg = MethodRegistry::builtin();
        let d = synth_generate(2, 80, 0.5, 0).unwrap();
        let one = vec![("a".to_string(), prepare(&d, &PipelineConfig::default()).unwrap())];
        let ms = vec![reg.get("persistence").unwrap(), reg.get("wrls").unwrap()];
        assert!(compare(&one, &ms, &Grids::default()).is_err());
    }
}
