//! Monte-Carlo sweeps over SNR, sampling ratio or λ.
//!
//! Trial `t` uses seed `base + t` for data generation and for solver
//! initialization, where `base` is the generator seed of the sweep. Every
//! (method, value, trial) run is independent; rows are sorted before output
//! so results do not depend on scheduling.

use std::io::{Read, Write};
use std::time::Instant;

use rayon::prelude::*;

use crate::admm::{solve, SolverConfig};
use crate::btd::BlockStructure;
use crate::error::{Error, Result};
use crate::synth::{generate, harmonicity_score, rlne, GenConfig, GroundTruth};
use crate::updaters::Backend;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweptVariable {
    SnrDb,
    SampleRatio,
    Lambda,
}

impl std::str::FromStr for SweptVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "snr_db" | "snr" => Ok(Self::SnrDb),
            "sample_ratio" => Ok(Self::SampleRatio),
            "lambda" => Ok(Self::Lambda),
            other => Err(Error::config("swept", format!("unknown variable `{other}`"))),
        }
    }
}

/// Solver variant compared in a sweep. CPD variants run the same solver with
/// every block length set to 1 and the same total column count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    BtdAls,
    BtdNls,
    CpdAls,
    CpdNls,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::BtdAls, Method::BtdNls, Method::CpdAls, Method::CpdNls];

    pub fn label(self) -> &'static str {
        match self {
            Method::BtdAls => "BTD_ALS",
            Method::BtdNls => "BTD_NLS",
            Method::CpdAls => "CPD_ALS",
            Method::CpdNls => "CPD_NLS",
        }
    }

    pub fn backend(self) -> Backend {
        match self {
            Method::BtdAls | Method::CpdAls => Backend::Als,
            Method::BtdNls | Method::CpdNls => Backend::Gn,
        }
    }

    pub fn is_cpd(self) -> bool {
        matches!(self, Method::CpdAls | Method::CpdNls)
    }

    /// Block structure fitted by this method for data of structure `truth`.
    pub fn structure(self, truth: &BlockStructure) -> Result<BlockStructure> {
        if self.is_cpd() {
            BlockStructure::cpd(truth.total_columns())
        } else {
            Ok(truth.clone())
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config("methods", format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub swept: SweptVariable,
    pub values: Vec<f64>,
    pub trials: usize,
    pub gen: GenConfig,
    pub solver: SolverConfig,
    pub methods: Vec<Method>,
    /// When set, each run is repeated for every λ here and the lowest RLNE
    /// is kept. Ignored when λ itself is swept.
    pub lambda_grid: Option<Vec<f64>>,
    /// Record wall-clock time per run; off keeps outputs byte-identical.
    pub record_timing: bool,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::config("values", "must not be empty"));
        }
        if self.values.iter().any(|v| v.is_nan()) || self.values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::config("values", "must be strictly increasing"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("methods", "must not be empty"));
        }
        if let Some(grid) = &self.lambda_grid {
            if grid.is_empty() {
                return Err(Error::config("lambda_grid", "must not be empty"));
            }
        }
        for &v in &self.values {
            let (gen, solver) = self.configs_at(v, 0);
            gen.validate()?;
            solver.validate()?;
            for &l in self.lambdas(&solver) {
                SolverConfig { lambda: l, ..solver.clone() }.validate()?;
            }
        }
        Ok(())
    }

    /// Generator and solver configuration of one (value, trial) cell.
    pub fn configs_at(&self, value: f64, trial: usize) -> (GenConfig, SolverConfig) {
        let seed = self.gen.seed.wrapping_add(trial as u64);
        let mut gen = GenConfig { seed, ..self.gen.clone() };
        let mut solver = SolverConfig { seed, ..self.solver.clone() };
        match self.swept {
            SweptVariable::SnrDb => gen.snr_db = value,
            SweptVariable::SampleRatio => gen.sample_ratio = value,
            SweptVariable::Lambda => solver.lambda = value,
        }
        (gen, solver)
    }

    fn lambdas<'a>(&'a self, solver: &'a SolverConfig) -> &'a [f64] {
        match (&self.lambda_grid, self.swept) {
            (Some(grid), s) if s != SweptVariable::Lambda => grid,
            _ => std::slice::from_ref(&solver.lambda),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: Method,
    pub swept_value: f64,
    pub trial: usize,
    pub seed: u64,
    pub lambda: f64,
    pub rlne: f64,
    pub harmonicity: f64,
    pub iterations: usize,
    pub wall_time: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub method: Method,
    pub swept_value: f64,
    pub mean_rlne: f64,
    pub std_rlne: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub aggregates: Vec<AggregateRow>,
}

pub const ROW_HEADER: [&str; 10] =
    ["method", "swept_value", "trial", "seed", "lambda", "rlne", "harmonicity", "iterations", "wall_time", "note"];
pub const AGGREGATE_HEADER: [&str; 5] = ["method", "swept_value", "mean_rlne", "std_rlne", "trials"];

fn run_one(truth: &GroundTruth, method: Method, solver: &SolverConfig, lambda: f64) -> (f64, f64, usize, String) {
    let config = SolverConfig { lambda, backend: method.backend(), ..solver.clone() };
    let outcome = method
        .structure(truth.factors.structure())
        .and_then(|s| solve(&truth.noisy, &truth.mask, &s, &config))
        .and_then(|report| {
            Ok((
                rlne(&report.completed, &truth.clean)?,
                harmonicity_score(&report.factors)?,
                report.iterations_run,
            ))
        });
    match outcome {
        Ok((e, h, it)) => (e, h, it, String::new()),
        Err(err) => (1.0, f64::NAN, 0, err.to_string()),
    }
}

fn run_cell(spec: &SweepSpec, vi: usize, trial: usize, method: Method) -> Result<SweepRow> {
    let value = spec.values[vi];
    let (gen, solver) = spec.configs_at(value, trial);
    let start = Instant::now();
    let truth = generate(&gen)?;
    let mut best: Option<(f64, f64, f64, usize, String)> = None;
    for &lambda in spec.lambdas(&solver) {
        let (e, h, it, note) = run_one(&truth, method, &solver, lambda);
        if best.as_ref().is_none_or(|b| e < b.1) {
            best = Some((lambda, e, h, it, note));
        }
    }
    let (lambda, rlne, harmonicity, iterations, note) = best.expect("at least one lambda");
    Ok(SweepRow {
        method,
        swept_value: value,
        trial,
        seed: gen.seed,
        lambda,
        rlne,
        harmonicity,
        iterations,
        wall_time: if spec.record_timing { start.elapsed().as_secs_f64() } else { 0.0 },
        note,
    })
}

pub use rayon::ThreadPool;

/// Worker pool of `threads` workers, or one per logical core.
pub fn thread_pool(threads: Option<usize>) -> Result<ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::config("threads", "must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::config("threads", e.to_string()))
}

/// Runs every (method, value, trial) cell on a pool of `threads` workers
/// (`None`: one per logical core).
pub fn run_sweep(spec: &SweepSpec, threads: Option<usize>) -> Result<SweepResult> {
    spec.validate()?;
    let pool = thread_pool(threads)?;
    let mut cells = Vec::new();
    for &method in &spec.methods {
        for vi in 0..spec.values.len() {
            for trial in 0..spec.trials {
                cells.push((method, vi, trial));
            }
        }
    }
    let mut rows = pool.install(|| {
        cells
            .par_iter()
            .map(|&(method, vi, trial)| run_cell(spec, vi, trial, method).map(|row| (vi, row)))
            .collect::<Result<Vec<_>>>()
    })?;
    rows.sort_by(|(va, a), (vb, b)| (a.method, va, a.trial).cmp(&(b.method, vb, b.trial)));
    let rows: Vec<SweepRow> = rows.into_iter().map(|(_, r)| r).collect();
    let aggregates = aggregate(&rows);
    Ok(SweepResult { rows, aggregates })
}

/// Mean and sample standard deviation of RLNE per (method, value), in row
/// order. A single trial has zero deviation.
pub fn aggregate(rows: &[SweepRow]) -> Vec<AggregateRow> {
    let mut out: Vec<(AggregateRow, Vec<f64>)> = Vec::new();
    for row in rows {
        match out.iter_mut().find(|(a, _)| a.method == row.method && a.swept_value.to_bits() == row.swept_value.to_bits()) {
            Some((_, v)) => v.push(row.rlne),
            None => out.push((
                AggregateRow { method: row.method, swept_value: row.swept_value, mean_rlne: 0.0, std_rlne: 0.0, trials: 0 },
                vec![row.rlne],
            )),
        }
    }
    out.into_iter()
        .map(|(mut a, v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            a.mean_rlne = mean;
            a.std_rlne = if v.len() > 1 {
                (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            a.trials = v.len();
            a
        })
        .collect()
}

pub fn write_rows_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ROW_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.label().to_string(),
            r.swept_value.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            r.lambda.to_string(),
            r.rlne.to_string(),
            r.harmonicity.to_string(),
            r.iterations.to_string(),
            r.wall_time.to_string(),
            r.note.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregates_csv<W: Write>(rows: &[AggregateRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(AGGREGATE_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.label().to_string(),
            r.swept_value.to_string(),
            r.mean_rlne.to_string(),
            r.std_rlne.to_string(),
            r.trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse<T: std::str::FromStr>(record: &csv::StringRecord, idx: usize, field: &str) -> Result<T> {
    record
        .get(idx)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("rows CSV: bad `{field}` in line {:?}", record.position().map(|p| p.line()))))
}

/// Parses a rows CSV written by [`write_rows_csv`].
pub fn read_rows_csv<R: Read>(reader: R) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(reader);
    if r.headers()?.iter().ne(ROW_HEADER) {
        return Err(Error::Format(format!("rows CSV: unexpected header {:?}", r.headers()?)));
    }
    let mut rows = Vec::new();
    for record in r.records() {
        let rec = record?;
        let method: String = parse(&rec, 0, "method")?;
        rows.push(SweepRow {
            method: method.parse().map_err(|_| Error::Format(format!("rows CSV: unknown method `{method}`")))?,
            swept_value: parse(&rec, 1, "swept_value")?,
            trial: parse(&rec, 2, "trial")?,
            seed: parse(&rec, 3, "seed")?,
            lambda: parse(&rec, 4, "lambda")?,
            rlne: parse(&rec, 5, "rlne")?,
            harmonicity: parse(&rec, 6, "harmonicity")?,
            iterations: parse(&rec, 7, "iterations")?,
            wall_time: parse(&rec, 8, "wall_time")?,
            note: rec.get(9).unwrap_or_default().to_string(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> SweepSpec {
        SweepSpec {
            swept: SweptVariable::SnrDb,
            values: vec![10.0, f64::INFINITY],
            trials: 2,
            gen: GenConfig {
                dims: (5, 6, 5),
                structure: BlockStructure::new(vec![2, 1]).unwrap(),
                sample_ratio: 0.6,
                seed: 7,
                ..Default::default()
            },
            solver: SolverConfig { max_iterations: 20, ..Default::default() },
            methods: vec![Method::CpdAls, Method::BtdAls],
            lambda_grid: None,
            record_timing: false,
        }
    }

    #[test]
    fn method_labels_roundtrip() {
        for m in Method::ALL {
            assert_eq!(m.label().parse::<Method>().unwrap(), m);
        }
        assert!("BTD_FOO".parse::<Method>().is_err());
        let truth = BlockStructure::new(vec![3, 2]).unwrap();
        assert_eq!(Method::CpdNls.structure(&truth).unwrap().lengths(), &[1, 1, 1, 1, 1]);
        assert_eq!(Method::BtdNls.structure(&truth).unwrap(), truth);
    }

    #[test]
    fn spec_validation() {
        assert!(tiny_spec().validate().is_ok());
        let bad = [
            SweepSpec { values: vec![], ..tiny_spec() },
            SweepSpec { values: vec![1.0, 1.0], ..tiny_spec() },
            SweepSpec { values: vec![2.0, 1.0], ..tiny_spec() },
            SweepSpec { trials: 0, ..tiny_spec() },
            SweepSpec { methods: vec![], ..tiny_spec() },
            SweepSpec { swept: SweptVariable::SampleRatio, values: vec![0.5, 1.5], ..tiny_spec() },
        ];
        for spec in bad {
            assert!(matches!(spec.validate(), Err(Error::Config { .. })), "{spec:?}");
        }
    }

    #[test]
    fn seeds_follow_trial_index() {
        let spec = tiny_spec();
        let (g, s) = spec.configs_at(10.0, 3);
        assert_eq!(g.seed, 10);
        assert_eq!(s.seed, 10);
        assert_eq!(g.snr_db, 10.0);
    }

    #[test]
    fn rows_are_sorted_and_aggregates_recompute() {
        let res = run_sweep(&tiny_spec(), Some(3)).unwrap();
        assert_eq!(res.rows.len(), 2 * 2 * 2);
        let keys: Vec<_> = res.rows.iter().map(|r| (r.method, r.swept_value.to_bits(), r.trial)).collect();
        assert_eq!(keys[0], (Method::BtdAls, 10f64.to_bits(), 0));
        assert_eq!(keys[7], (Method::CpdAls, f64::INFINITY.to_bits(), 1));
        assert_eq!(res.aggregates.len(), 4);
        for a in &res.aggregates {
            let v: Vec<f64> = res
                .rows
                .iter()
                .filter(|r| r.method == a.method && r.swept_value == a.swept_value)
                .map(|r| r.rlne)
                .collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            assert_eq!(a.trials, 2);
            assert!((a.mean_rlne - mean).abs() <= 1e-15);
            let sd = ((v[0] - mean).powi(2) + (v[1] - mean).powi(2)).sqrt();
            assert!((a.std_rlne - sd).abs() <= 1e-15);
        }
    }

    #[test]
    fn identical_specs_give_identical_csv() {
        let csv_of = |threads| {
            let res = run_sweep(&tiny_spec(), Some(threads)).unwrap();
            let mut a = Vec::new();
            write_rows_csv(&res.rows, &mut a).unwrap();
            write_aggregates_csv(&res.aggregates, &mut a).unwrap();
            a
        };
        assert_eq!(csv_of(1), csv_of(4));
    }

    #[test]
    fn rows_csv_roundtrip() {
        let res = run_sweep(&tiny_spec(), Some(2)).unwrap();
        let mut buf = Vec::new();
        write_rows_csv(&res.rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf.clone())
            .unwrap()
            .starts_with("method,swept_value,trial,seed,lambda,rlne,harmonicity,iterations,wall_time,note\n"));
        assert_eq!(read_rows_csv(&buf[..]).unwrap().len(), res.rows.len());
        let back = read_rows_csv(&buf[..]).unwrap();
        for (a, b) in back.iter().zip(&res.rows) {
            assert_eq!(a.rlne.to_bits(), b.rlne.to_bits());
            assert_eq!(a.swept_value.to_bits(), b.swept_value.to_bits());
        }
        assert_eq!(aggregate(&back), res.aggregates);
    }

    #[test]
    fn solver_abort_becomes_a_row() {
        // F = 40 exceeds J·K = 30, so every solve fails with a config error.
        let spec = SweepSpec {
            gen: GenConfig { structure: BlockStructure::uniform(1, 40).unwrap(), ..tiny_spec().gen },
            values: vec![20.0],
            trials: 1,
            methods: vec![Method::BtdAls],
            ..tiny_spec()
        };
        let res = run_sweep(&spec, Some(1)).unwrap();
        assert_eq!(res.rows.len(), 1);
        assert_eq!(res.rows[0].rlne, 1.0);
        assert!(!res.rows[0].note.is_empty());
    }

    #[test]
    fn lambda_grid_keeps_best() {
        let spec = SweepSpec { lambda_grid: Some(vec![0.1, 1.0, 10.0]), methods: vec![Method::BtdAls], values: vec![20.0], trials: 1, ..tiny_spec() };
        let res = run_sweep(&spec, Some(1)).unwrap();
        let row = &res.rows[0];
        let (gen, solver) = spec.configs_at(20.0, 0);
        let truth = generate(&gen).unwrap();
        for l in [0.1, 1.0, 10.0] {
            let (e, ..) = run_one(&truth, Method::BtdAls, &solver, l);
            assert!(row.rlne <= e);
        }
        assert!([0.1, 1.0, 10.0].contains(&row.lambda));
    }
}
