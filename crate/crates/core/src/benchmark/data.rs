use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_maps::difference;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Raw,
    Differenced,
}

/// T aligned univariate series; column order defines task indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTaskDataset {
    series: Vec<Vec<f64>>,
    names: Vec<String>,
    pub provenance: Provenance,
    pub subset: Option<usize>,
    /// Seed or source file the data came from.
    pub source: String,
}

impl MultiTaskDataset {
    pub fn new(series: Vec<Vec<f64>>, names: Option<Vec<String>>) -> Result<Self> {
        let len = series.first().map_or(0, Vec::len);
        if series.is_empty() || len == 0 {
            return Err(Error::invalid("dataset needs at least one non-empty series"));
        }
        for (t, s) in series.iter().enumerate() {
            if s.len() != len {
                return Err(Error::invalid(format!(
                    "task {t} has {} points, expected {len}",
                    s.len()
                )));
            }
            if let Some(i) = s.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("task {t} has a missing value at index {i}")));
            }
        }
        let names = match names {
            Some(n) if n.len() == series.len() => n,
            Some(n) => {
                return Err(Error::invalid(format!(
                    "{} names for {} tasks",
                    n.len(),
                    series.len()
                )))
            }
            None => (0..series.len()).map(|t| format!("task{t}")).collect(),
        };
        Ok(Self {
            series,
            names,
            provenance: Provenance::Raw,
            subset: None,
            source: String::new(),
        })
    }

    pub fn tasks(&self) -> usize {
        self.series.len()
    }

    pub fn len(&self) -> usize {
        self.series[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn series(&self) -> &[Vec<f64>] {
        &self.series
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// First differences of every task. Already differenced data is
    /// returned unchanged.
    pub fn differenced(&self) -> Result<Self> {
        if self.provenance == Provenance::Differenced {
            return Ok(self.clone());
        }
        let series = self.series.iter().map(|s| difference(s)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            series,
            provenance: Provenance::Differenced,
            ..self.clone()
        })
    }

    /// Contiguous window `[start, start + len)` of every task.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.len() {
            return Err(Error::invalid(format!(
                "window {start}..{} outside series of length {}",
                start + len,
                self.len()
            )));
        }
        Ok(Self {
            series: self.series.iter().map(|s| s[start..start + len].to_vec()).collect(),
            ..self.clone()
        })
    }

    /// `count` contiguous windows of length `len` at seeded random offsets.
    pub fn sample_windows(&self, count: usize, len: usize, seed: u64) -> Result<Vec<Self>> {
        if len > self.len() {
            return Err(Error::invalid(format!(
                "window length {len} exceeds series length {}",
                self.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|k| {
                let start = rng.random_range(0..=self.len() - len);
                let mut w = self.window(start, len)?;
                w.subset = Some(k);
                w.source = format!("{}@{start}", self.source);
                Ok(w)
            })
            .collect()
    }

    /// One column per task, optional single header row. The header is
    /// recognised by a first row in which no cell parses as a number.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut names = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut width = None;
        for (r, rec) in rdr.records().enumerate() {
            let row = r + 1;
            let rec = rec.map_err(|e| Error::Parse {
                row,
                col: 0,
                msg: e.to_string(),
            })?;
            if r == 0 && rec.iter().all(|c| !c.is_empty() && c.parse::<f64>().is_err()) {
                names = Some(rec.iter().map(str::to_owned).collect::<Vec<_>>());
                width = Some(rec.len());
                continue;
            }
            let w = *width.get_or_insert(rec.len());
            if rec.len() != w {
                return Err(Error::Parse {
                    row,
                    col: rec.len().min(w) + 1,
                    msg: format!("ragged row: {} cells, expected {w}", rec.len()),
                });
            }
            let values = rec
                .iter()
                .enumerate()
                .map(|(c, cell)| {
                    if cell.is_empty() {
                        return Err(Error::Parse {
                            row,
                            col: c + 1,
                            msg: "missing value".into(),
                        });
                    }
                    match cell.parse::<f64>() {
                        Ok(v) if v.is_finite() => Ok(v),
                        _ => Err(Error::Parse {
                            row,
                            col: c + 1,
                            msg: format!("not a number: {cell:?}"),
                        }),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(values);
        }
        let width = width.ok_or_else(|| Error::invalid("empty CSV"))?;
        if rows.is_empty() {
            return Err(Error::invalid("CSV has no data rows"));
        }
        let series = (0..width).map(|c| rows.iter().map(|r| r[c]).collect()).collect();
        Self::new(series, names)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut d = Self::read_csv(f)?;
        d.source = path.display().to_string();
        Ok(d)
    }

    /// Header of task names, then one row per time step.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&self.names).map_err(io)?;
        for i in 0..self.len() {
            w.write_record(self.series.iter().map(|s| format!("{}", s[i]))).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn load_csv_tasks(path: &Path) -> Result<MultiTaskDataset> {
    MultiTaskDataset::load_csv(path)
}

const SYNTH_PHI: (f64, f64) = (1.3, -0.4);
const SYNTH_NOISE: f64 = 0.05;
const SYNTH_LEVEL: f64 = 8.0;
const SYNTH_BURN_IN: usize = 200;

fn ar2(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let (p1, p2) = SYNTH_PHI;
    let (mut a, mut b) = (0.0, 0.0);
    let mut out = Vec::with_capacity(n);
    for i in 0..SYNTH_BURN_IN + n {
        let e: f64 = rng.sample(StandardNormal);
        let v = p1 * a + p2 * b + e;
        b = a;
        a = v;
        if i >= SYNTH_BURN_IN {
            out.push(v);
        }
    }
    out
}

/// Task `t` is `level + c·s + (1−c)·e_t + noise`, with `s` a shared AR(2)
/// process, `e_t` independent AR(2) processes of the same law and white
/// observation noise.
pub fn synth_generate(tasks: usize, n: usize, coupling: f64, seed: u64) -> Result<MultiTaskDataset> {
    if tasks < 2 {
        return Err(Error::invalid(format!("need at least 2 tasks, got {tasks}")));
    }
    if n < 50 {
        return Err(Error::invalid(format!("need at least 50 points, got {n}")));
    }
    if !(0.0..=1.0).contains(&coupling) {
        return Err(Error::invalid(format!("coupling must be in [0, 1], got {coupling}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shared = ar2(&mut rng, n);
    let series = (0..tasks)
        .map(|_| {
            let own = ar2(&mut rng, n);
            (0..n)
                .map(|i| {
                    let noise: f64 = rng.sample(StandardNormal);
                    SYNTH_LEVEL + coupling * shared[i] + (1.0 - coupling) * own[i] + SYNTH_NOISE * noise
                })
                .collect()
        })
        .collect();
    let mut d = MultiTaskDataset::new(series, None)?;
    d.source = format!("synth:T={tasks},n={n},coupling={coupling},seed={seed}");
    Ok(d)
}
