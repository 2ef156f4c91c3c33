//! Seeded Monte Carlo sweeps and their summary tables.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{generate, SynthConfig};
use crate::error::{Error, Result};
use crate::network::{run_episode, EpisodeConfig, Method, TrialOutcome};
use crate::quantization::QuantSpec;
use crate::seed::{derive, TAG_DATA, TAG_EPISODE};

/// Label used for baseline rows of a bit-width sweep, which do not depend on
/// the swept value.
pub const NO_AXIS: &str = "n/a";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SweepAxis {
    /// Null shift `δ`.
    Delta(Vec<f64>),
    /// Bit width of exchanged models, at the shift of the data config.
    Bits(Vec<QuantSpec>),
}

impl SweepAxis {
    pub fn len(&self) -> usize {
        match self {
            SweepAxis::Delta(v) => v.len(),
            SweepAxis::Bits(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Delta(_) => "delta",
            SweepAxis::Bits(_) => "bits",
        }
    }

    fn label(&self, i: usize) -> String {
        match self {
            SweepAxis::Delta(v) => format!("{:?}", v[i]),
            SweepAxis::Bits(v) => v[i].to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub methods: Vec<Method>,
    pub trials: usize,
    /// Template episode; its method and seed are overridden. Its quantization
    /// applies to model-exchanging methods of a delta sweep.
    pub episode: EpisodeConfig,
    /// Template data; its seed (and shift, on a delta sweep) are overridden.
    pub data: SynthConfig,
    pub master_seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.axis.is_empty() {
            return Err(Error::InvalidConfig("sweep has no values".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("sweep has no methods".into()));
        }
        if self.episode.agents != self.data.agents {
            return Err(Error::InvalidConfig(format!(
                "episode has {} agents, data has {}",
                self.episode.agents, self.data.agents
            )));
        }
        self.data.validate()
    }

    /// Every (value, method) cell in output order.
    fn cells(&self) -> Vec<Cell> {
        let mut methods = self.methods.clone();
        methods.sort();
        methods.dedup();
        let mut cells = Vec::new();
        for i in 0..self.axis.len() {
            for &method in &methods {
                let varies = match self.axis {
                    SweepAxis::Delta(_) => true,
                    SweepAxis::Bits(_) => method.exchanges_models(),
                };
                if varies {
                    cells.push(self.cell(i, method));
                }
            }
        }
        if let SweepAxis::Bits(_) = self.axis {
            for &method in methods.iter().filter(|m| !m.exchanges_models()) {
                cells.push(Cell {
                    axis: NO_AXIS.into(),
                    ..self.cell(0, method)
                });
            }
        }
        cells
    }

    fn cell(&self, i: usize, method: Method) -> Cell {
        let mut data = self.data.clone();
        let mut episode = self.episode.clone();
        episode.method = method;
        if !method.exchanges_models() {
            episode.quant = QuantSpec::none();
        }
        // a bit-width sweep is paired: every width sees the same data and
        // training seeds, so differences come from quantization alone
        let stream = match &self.axis {
            SweepAxis::Delta(v) => {
                data.delta = v[i];
                i
            }
            SweepAxis::Bits(v) => {
                if method.exchanges_models() {
                    episode.quant = v[i];
                }
                0
            }
        };
        Cell {
            axis: self.axis.label(i),
            stream,
            data,
            episode,
        }
    }
}

struct Cell {
    axis: String,
    stream: usize,
    data: SynthConfig,
    episode: EpisodeConfig,
}

/// All trials of one (value, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub axis: String,
    pub method: Method,
    pub quant: QuantSpec,
    pub outcomes: Vec<TrialOutcome>,
}

/// Seeds of trial `trial` in a cell: shared data across methods, distinct
/// episode streams per method.
pub fn trial_seeds(master: u64, stream: usize, method: Method, trial: usize) -> (u64, u64) {
    (
        derive(master, &[TAG_DATA, stream as u64, trial as u64]),
        derive(master, &[TAG_EPISODE, stream as u64, method.tag(), trial as u64]),
    )
}

fn run_trial(cell: &Cell, master: u64, trial: usize) -> Result<TrialOutcome> {
    let (data_seed, episode_seed) = trial_seeds(master, cell.stream, cell.episode.method, trial);
    let data = generate(&SynthConfig {
        seed: data_seed,
        ..cell.data.clone()
    })?;
    let episode = EpisodeConfig {
        seed: episode_seed,
        ..cell.episode.clone()
    };
    run_episode(&episode, &data).map_err(|e| Error::Episode {
        seed: episode_seed,
        source: Box::new(e),
    })
}

/// Runs every trial of every cell on the rayon pool. Results are keyed by
/// position, so the output does not depend on completion order.
pub fn run_cells(spec: &SweepSpec) -> Result<Vec<CellResult>> {
    spec.validate()?;
    let cells = spec.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..spec.trials).map(move |t| (c, t)))
        .collect();
    let results: Vec<Result<TrialOutcome>> = jobs
        .par_iter()
        .map(|&(c, t)| run_trial(&cells[c], spec.master_seed, t))
        .collect();
    let mut results = results.into_iter();
    cells
        .iter()
        .map(|cell| {
            let outcomes = results
                .by_ref()
                .take(spec.trials)
                .collect::<Result<Vec<_>>>()?;
            Ok(CellResult {
                axis: cell.axis.clone(),
                method: cell.episode.method,
                quant: cell.episode.quant,
                outcomes,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub axis: String,
    pub method: Method,
    pub mean_fdr: f64,
    pub std_fdr: f64,
    pub mean_power: f64,
    pub std_power: f64,
    pub mean_comm_kb: f64,
    pub std_comm_kb: f64,
    pub trials: usize,
}

/// Mean and sample standard deviation; the deviation of one sample is 0.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl AggregateRow {
    pub fn from_cell(cell: &CellResult) -> Self {
        let pick = |f: fn(&TrialOutcome) -> f64| {
            mean_std(&cell.outcomes.iter().map(f).collect::<Vec<_>>())
        };
        let (mean_fdr, std_fdr) = pick(|o| o.global.fdp);
        let (mean_power, std_power) = pick(|o| o.global.power);
        let (mean_comm_kb, std_comm_kb) = pick(TrialOutcome::comm_kb);
        Self {
            axis: cell.axis.clone(),
            method: cell.method,
            mean_fdr,
            std_fdr,
            mean_power,
            std_power,
            mean_comm_kb,
            std_comm_kb,
            trials: cell.outcomes.len(),
        }
    }
}

/// Runs the sweep and reduces each cell to one row.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<AggregateRow>> {
    Ok(run_cells(spec)?.iter().map(AggregateRow::from_cell).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(TableFormat::Csv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            other => Err(Error::InvalidConfig(format!("unknown table format {other:?}"))),
        }
    }
}

pub const CSV_COLUMNS: [&str; 9] = [
    "axis",
    "method",
    "mean_fdr",
    "std_fdr",
    "mean_power",
    "std_power",
    "mean_comm_kb",
    "std_comm_kb",
    "trials",
];

pub fn emit_table(rows: &[AggregateRow], format: TableFormat) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("no rows to emit".into()));
    }
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_COLUMNS)?;
            for r in rows {
                w.write_record([
                    r.axis.clone(),
                    r.method.to_string(),
                    r.mean_fdr.to_string(),
                    r.std_fdr.to_string(),
                    r.mean_power.to_string(),
                    r.std_power.to_string(),
                    r.mean_comm_kb.to_string(),
                    r.std_comm_kb.to_string(),
                    r.trials.to_string(),
                ])?;
            }
            let bytes = w
                .into_inner()
                .map_err(|e| Error::Io(e.error().to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        TableFormat::Markdown => {
            let trials = rows.iter().map(|r| r.trials).max().unwrap_or(0);
            let mut out = String::new();
            out.push_str("| axis | method | FDR | power | comm (kB) |\n");
            out.push_str("|---|---|---|---|---|\n");
            for r in rows {
                writeln!(
                    out,
                    "| {} | {} | {:.2} ± {:.2} | {:.2} ± {:.2} | {:.1} ± {:.1} |",
                    r.axis,
                    r.method,
                    r.mean_fdr,
                    r.std_fdr,
                    r.mean_power,
                    r.std_power,
                    r.mean_comm_kb,
                    r.std_comm_kb
                )
                .expect("writing to a String");
            }
            writeln!(
                out,
                "\nMean ± sample standard deviation over {trials} {}; FDR is the mean \
                 false discovery proportion; 1 kB = 1000 bytes.",
                if trials == 1 { "trial" } else { "trials" }
            )
            .expect("writing to a String");
            Ok(out)
        }
    }
}
