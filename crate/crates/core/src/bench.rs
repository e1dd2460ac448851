//! Throughput experiments over synthetic indexes, with CSV output and trend checks.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::batch::{batch_indexes, BatchError};
use crate::dataset::{db_multiply, DatabaseMatrix};
use crate::field::{Field, FieldElement, FieldError, FieldSpec};
use crate::iaq::{BatchedCcs, Ccs, IaqError, SimpleIaq};
use crate::protocol::{server_handle, ProtocolError, Request, ServerOptions, ServerState, Status};

pub const CSV_HEADER: &str = "experiment,param,value,mean_seconds,throughput_qps,nnz_pct";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{param} = {value} exceeds the desk-scale cap {cap}; pass --full to lift it")]
    Cap { param: &'static str, value: u64, cap: u64 },
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("unknown experiment '{0}' (expected vary-r, vary-p, vary-agg or vary-u)")]
    Experiment(String),
    #[error("server rejected the benchmark query: {0:?}")]
    Rejected(Status),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Iaq(#[from] IaqError),
    #[error(transparent)]
    Batch(#[from] BatchError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    VaryR,
    VaryP,
    VaryAgg,
    VaryU,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [Experiment::VaryR, Experiment::VaryP, Experiment::VaryAgg, Experiment::VaryU];

    pub fn param(self) -> &'static str {
        match self {
            Experiment::VaryR => "r",
            Experiment::VaryP => "p",
            Experiment::VaryAgg => "agg",
            Experiment::VaryU => "u",
        }
    }

    /// Powers of two swept by default.
    pub fn default_range(self) -> Vec<u64> {
        let (lo, hi) = match self {
            Experiment::VaryR => (12, 20),
            Experiment::VaryP => (1, 14),
            Experiment::VaryAgg => (1, 9),
            Experiment::VaryU => (1, 6),
        };
        (lo..=hi).map(|e| 1u64 << e).collect()
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::VaryR => "vary-r",
            Experiment::VaryP => "vary-p",
            Experiment::VaryAgg => "vary-agg",
            Experiment::VaryU => "vary-u",
        })
    }
}

impl FromStr for Experiment {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self, BenchError> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.to_string() == s)
            .ok_or_else(|| BenchError::Experiment(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Caps {
    pub r: u64,
    pub p: u64,
    pub u: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            r: 1 << 20,
            p: 1 << 14,
            u: 1 << 6,
        }
    }
}

/// Fixed parameters; the swept one is overridden per point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchParams {
    pub field: FieldSpec,
    pub r: usize,
    pub p: usize,
    /// Records aggregated by each index row.
    pub agg: usize,
    /// Indexes batched into the served bucket.
    pub u: usize,
    /// Words per record.
    pub s: usize,
    /// Bucket coordinates produced by the vary-u batching step.
    pub ell: usize,
    pub trials: usize,
    pub seed: u64,
    pub options: ServerOptions,
    /// Lifts the desk-scale caps.
    pub full: bool,
}

impl Default for BenchParams {
    fn default() -> Self {
        BenchParams {
            field: FieldSpec::mersenne31(),
            r: 1 << 14,
            p: 1 << 8,
            agg: 1,
            u: 6,
            s: 2,
            ell: 4,
            trials: 10,
            seed: 7,
            options: ServerOptions {
                skip_zero_cols: false,
                parallel: false,
            },
            full: false,
        }
    }
}

impl BenchParams {
    fn at(&self, exp: Experiment, value: u64) -> Self {
        let mut p = self.clone();
        let v = value as usize;
        match exp {
            Experiment::VaryR => p.r = v,
            Experiment::VaryP => p.p = v,
            Experiment::VaryAgg => p.agg = v,
            Experiment::VaryU => p.u = v,
        }
        p
    }

    pub fn check(&self) -> Result<(), BenchError> {
        if !self.full {
            let caps = Caps::default();
            for (param, value, cap) in [
                ("r", self.r as u64, caps.r),
                ("p", self.p as u64, caps.p),
                ("u", self.u as u64, caps.u),
            ] {
                if value > cap {
                    return Err(BenchError::Cap { param, value, cap });
                }
            }
        }
        if self.r == 0 || self.p == 0 || self.u == 0 || self.s == 0 || self.trials == 0 || self.ell == 0 {
            return Err(BenchError::Params("r, p, u, s, ell and trials must be positive".into()));
        }
        if self.agg == 0 || self.agg > self.r {
            return Err(BenchError::Params(format!("agg = {} must lie in 1..={}", self.agg, self.r)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub experiment: Experiment,
    pub value: u64,
    pub mean_seconds: f64,
    /// Queries per second for the query experiments; empty for vary-u.
    pub throughput_qps: Option<f64>,
    /// Percentage of the served bucket's columns that hold a nonzero.
    pub nnz_pct: f64,
}

impl BenchRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{:.9},{},{:.3}",
            self.experiment,
            self.experiment.param(),
            self.value,
            self.mean_seconds,
            self.throughput_qps.map(|t| format!("{t:.3}")).unwrap_or_default(),
            self.nnz_pct
        )
    }
}

pub fn write_csv<W: Write>(mut w: W, rows: &[BenchRow]) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(w, "{}", row.csv_line())?;
    }
    Ok(())
}

/// p×r index whose rows each pick `agg` distinct random records.
pub fn random_index<R: RngCore + ?Sized>(p: usize, r: usize, agg: usize, rng: &mut R) -> Result<SimpleIaq, BenchError> {
    if agg > r {
        return Err(BenchError::Params(format!("agg ({agg}) exceeds r ({r})")));
    }
    let rows: Vec<Vec<usize>> = (0..p).map(|_| sample(rng, r, agg).into_vec()).collect();
    let ccs = Ccs::from_row_supports(&rows, r)?;
    Ok(SimpleIaq::new(ccs, (0..p).map(|i| format!("row{i}")).collect())?)
}

/// `u` random indexes batched and evaluated at a single coordinate.
fn served_bucket<R: RngCore + ?Sized>(field: &Field, params: &BenchParams, rng: &mut R) -> Result<BatchedCcs, BenchError> {
    let x = field.from_u64(params.u as u64)?;
    if params.u == 1 {
        let m = random_index(params.p, params.r, params.agg, rng)?;
        return Ok(BatchedCcs::from_simple(field, &m, x, "bench"));
    }
    let indexes = (0..params.u)
        .map(|_| random_index(params.p, params.r, params.agg, rng))
        .collect::<Result<Vec<_>, _>>()?;
    let labels: Vec<String> = (0..params.u).map(|j| format!("f{j}")).collect();
    Ok(batch_indexes(field, &indexes, &labels, &[x])?.buckets.remove(0))
}

fn nnz_pct(ccs: &Ccs) -> f64 {
    100.0 * ccs.nonzero_columns().len() as f64 / ccs.cols().max(1) as f64
}

/// Mean of `trials` measurements; each repeats `f` until at least 2 ms pass.
fn time_mean<F: FnMut() -> Result<(), BenchError>>(trials: usize, mut f: F) -> Result<f64, BenchError> {
    f()?;
    let mut total = 0.0;
    for _ in 0..trials {
        let start = Instant::now();
        let mut reps = 0u32;
        while reps == 0 || start.elapsed() < Duration::from_millis(2) {
            f()?;
            reps += 1;
        }
        total += start.elapsed().as_secs_f64() / reps as f64;
    }
    Ok(total / trials as f64)
}

/// One server holding a random bucket over a random database.
pub struct BenchServer {
    pub state: ServerState,
    pub request: Request,
}

impl BenchServer {
    pub fn new(params: &BenchParams) -> Result<Self, BenchError> {
        let field = Field::new(params.field.clone())?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let bucket = served_bucket(&field, params, &mut rng)?;
        let db = DatabaseMatrix::random(&field, params.r, params.s, &mut rng);
        let x = *bucket.x();
        let q = (0..params.p).map(|_| field.random(&mut rng)).collect();
        let state = ServerState::new(x, vec![("bench".into(), bucket)], db, params.options)?;
        Ok(BenchServer {
            state,
            request: Request {
                keyword: "bench".into(),
                k: 1,
                x,
                q,
            },
        })
    }

    pub fn answer(&self) -> Result<Vec<FieldElement>, BenchError> {
        let resp = server_handle(&self.state, &self.request);
        match resp.status {
            Status::Ok => Ok(resp.payload),
            s => Err(BenchError::Rejected(s)),
        }
    }

    pub fn nnz_pct(&self) -> f64 {
        nnz_pct(self.state.bucket("bench").expect("bench bucket").ccs())
    }

    /// Mean server seconds per query.
    pub fn time(&self, trials: usize) -> Result<f64, BenchError> {
        time_mean(trials, || self.answer().map(|_| ()))
    }
}

fn measure(exp: Experiment, params: &BenchParams) -> Result<BenchRow, BenchError> {
    params.check()?;
    let value = match exp {
        Experiment::VaryR => params.r,
        Experiment::VaryP => params.p,
        Experiment::VaryAgg => params.agg,
        Experiment::VaryU => params.u,
    } as u64;
    if exp == Experiment::VaryU {
        let field = Field::new(params.field.clone())?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let indexes = (0..params.u)
            .map(|_| random_index(params.p, params.r, params.agg, &mut rng))
            .collect::<Result<Vec<_>, _>>()?;
        let labels: Vec<String> = (0..params.u).map(|j| format!("f{j}")).collect();
        let coords = (0..params.ell as u64)
            .map(|i| field.from_u64(params.u as u64 + i))
            .collect::<Result<Vec<_>, _>>()?;
        let mut pct = 0.0;
        let mean = time_mean(params.trials, || {
            let out = batch_indexes(&field, &indexes, &labels, &coords)?;
            pct = nnz_pct(out.buckets[0].ccs());
            Ok(())
        })?;
        return Ok(BenchRow {
            experiment: exp,
            value,
            mean_seconds: mean,
            throughput_qps: None,
            nnz_pct: pct,
        });
    }
    let server = BenchServer::new(params)?;
    let mean = server.time(params.trials)?;
    Ok(BenchRow {
        experiment: exp,
        value,
        mean_seconds: mean,
        throughput_qps: Some(1.0 / mean),
        nnz_pct: server.nnz_pct(),
    })
}

/// Sweeps `values` of the experiment's parameter; everything else comes from `params`.
pub fn run(exp: Experiment, values: &[u64], params: &BenchParams) -> Result<Vec<BenchRow>, BenchError> {
    let points: Vec<BenchParams> = values.iter().map(|&v| params.at(exp, v)).collect();
    for p in &points {
        p.check()?;
    }
    points.iter().map(|p| measure(exp, p)).collect()
}

/// Each value is at most `1 + band` times its predecessor.
pub fn nonincreasing(values: &[f64], band: f64) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] * (1.0 + band))
}

/// Each value is at least `1 - band` times its predecessor, and the last exceeds the first.
pub fn increasing(values: &[f64], band: f64) -> bool {
    values.windows(2).all(|w| w[1] >= w[0] * (1.0 - band)) && values.last() > values.first()
}

/// The last drop is at most half the largest drop: the curve has flattened.
pub fn plateaus(values: &[f64]) -> bool {
    let drops: Vec<f64> = values.windows(2).map(|w| w[0] - w[1]).collect();
    match drops.last() {
        Some(&last) => last <= 0.5 * drops.iter().cloned().fold(0.0, f64::max),
        None => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendReport {
    pub experiment: Experiment,
    pub ok: bool,
    pub detail: String,
}

/// Shape check for one sweep, with a relative noise band.
pub fn check_trend(exp: Experiment, rows: &[BenchRow], band: f64) -> TrendReport {
    let qps: Vec<f64> = rows.iter().filter_map(|r| r.throughput_qps).collect();
    let secs: Vec<f64> = rows.iter().map(|r| r.mean_seconds).collect();
    let (ok, detail) = match exp {
        Experiment::VaryR => (nonincreasing(&qps, band), "throughput nonincreasing in r".to_string()),
        Experiment::VaryAgg => {
            let dec = nonincreasing(&qps, band);
            let ends = qps.first() >= qps.last();
            let flat = plateaus(&qps);
            (
                dec && ends && flat,
                format!("nonincreasing: {dec}, first >= last: {ends}, plateau: {flat}"),
            )
        }
        Experiment::VaryU => (increasing(&secs, band), "batch time increasing in u".to_string()),
        // Recorded only: the knee need not appear at desk scale.
        Experiment::VaryP => (true, "recorded without a shape assertion".to_string()),
    };
    TrendReport {
        experiment: exp,
        ok: ok && !rows.is_empty(),
        detail,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipCheck {
    pub same_result: bool,
    pub skip_seconds: f64,
    pub dense_seconds: f64,
}

impl SkipCheck {
    pub fn ratio(&self) -> f64 {
        self.skip_seconds / self.dense_seconds
    }
}

/// Same bucket and query served with and without zero-column skipping.
pub fn skip_check(params: &BenchParams) -> Result<SkipCheck, BenchError> {
    params.check()?;
    let mut on = params.clone();
    on.options.skip_zero_cols = true;
    let mut off = params.clone();
    off.options.skip_zero_cols = false;
    let (a, b) = (BenchServer::new(&on)?, BenchServer::new(&off)?);
    Ok(SkipCheck {
        same_result: a.answer()? == b.answer()?,
        skip_seconds: a.time(params.trials)?,
        dense_seconds: b.time(params.trials)?,
    })
}

/// Index with `p` groups over a `selectivity` fraction of the records; the rest are filtered out.
pub fn filtered_index<R: RngCore + ?Sized>(p: usize, r: usize, selectivity: f64, rng: &mut R) -> Result<SimpleIaq, BenchError> {
    let kept = ((r as f64 * selectivity).round() as usize).clamp(p.min(r), r);
    let mut rows = vec![Vec::new(); p];
    for (i, rec) in sample(rng, r, kept).into_iter().enumerate() {
        rows[i % p].push(rec);
    }
    let ccs = Ccs::from_row_supports(&rows, r)?;
    Ok(SimpleIaq::new(ccs, (0..p).map(|i| format!("g{i}")).collect())?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineComparison {
    pub p: usize,
    pub r: usize,
    pub iaq_seconds: f64,
    pub positional_seconds: f64,
    /// The positional query, aggregated, equals the IAQ answer.
    pub same_result: bool,
}

impl BaselineComparison {
    pub fn speedup(&self) -> f64 {
        self.positional_seconds / self.iaq_seconds
    }
}

/// Server compute for one aggregate through the IAQ path versus a positional
/// query that shares a length-r vector and multiplies it straight into D.
pub fn baseline(params: &BenchParams, selectivity: f64) -> Result<BaselineComparison, BenchError> {
    params.check()?;
    let field = Field::new(params.field.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let index = filtered_index(params.p, params.r, selectivity, &mut rng)?;
    let db = DatabaseMatrix::random(&field, params.r, params.s, &mut rng);
    let x = field.from_u64(1)?;
    let bucket = BatchedCcs::from_simple(&field, &index, x, "filtered");
    let mut options = params.options;
    options.skip_zero_cols = true;
    let state = ServerState::new(x, vec![("filtered".into(), bucket)], db.clone(), options)?;

    // Basis query for group 0 on both paths, so the answers can be compared.
    let mut q = vec![field.zero(); params.p];
    q[0] = field.one();
    let request = Request {
        keyword: "filtered".into(),
        k: 1,
        x,
        q,
    };
    let positional = index.row(0).to_dense(&field);
    let iaq_answer = server_handle(&state, &request);
    let positional_answer = db_multiply(&positional, &db).map_err(|e| BenchError::Params(e.to_string()))?;

    let iaq_seconds = time_mean(params.trials, || match server_handle(&state, &request).status {
        Status::Ok => Ok(()),
        s => Err(BenchError::Rejected(s)),
    })?;
    let positional_seconds = time_mean(params.trials, || {
        db_multiply(&positional, &db).map_err(|e| BenchError::Params(e.to_string()))?;
        Ok(())
    })?;
    Ok(BaselineComparison {
        p: params.p,
        r: params.r,
        iaq_seconds,
        positional_seconds,
        same_result: iaq_answer.status == Status::Ok && iaq_answer.payload == positional_answer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BenchParams {
        BenchParams {
            r: 256,
            p: 8,
            trials: 1,
            ..BenchParams::default()
        }
    }

    #[test]
    fn experiment_names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.to_string().parse::<Experiment>().unwrap(), e);
        }
        assert!("vary-q".parse::<Experiment>().is_err());
    }

    #[test]
    fn caps_enforced_unless_full() {
        let p = BenchParams {
            r: (1 << 20) + 1,
            ..small()
        };
        assert!(matches!(p.check(), Err(BenchError::Cap { param: "r", .. })));
        assert!(BenchParams { full: true, ..p }.check().is_ok());
        let u = BenchParams { u: 65, ..small() };
        assert!(matches!(u.check(), Err(BenchError::Cap { param: "u", .. })));
        assert!(BenchParams { agg: 257, ..small() }.check().is_err());
    }

    #[test]
    fn csv_shape() {
        let rows = run(Experiment::VaryU, &[2, 4], &small()).unwrap();
        let mut out = Vec::new();
        write_csv(&mut out, &rows).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 3);
        for line in &lines[1..] {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols.len(), 6);
            assert_eq!(&cols[..2], ["vary-u", "u"]);
            assert!(cols[4].is_empty());
        }
    }

    #[test]
    fn index_structure_is_seeded() {
        let a = random_index(8, 100, 5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = random_index(8, 100, 5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.ccs().nnz(), 40);
        let f = filtered_index(4, 100, 0.2, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(f.ccs().nonzero_columns().len(), 20);
    }

    #[test]
    fn trend_helpers() {
        assert!(nonincreasing(&[10.0, 10.5, 9.0], 0.1));
        assert!(!nonincreasing(&[10.0, 11.5], 0.1));
        assert!(increasing(&[1.0, 0.95, 2.0], 0.1));
        assert!(!increasing(&[1.0, 1.0], 0.1));
        assert!(plateaus(&[100.0, 50.0, 25.0, 20.0]));
        assert!(!plateaus(&[100.0, 90.0, 10.0]));
    }

    #[test]
    fn skip_and_baseline_agree_on_results() {
        let p = BenchParams {
            agg: 4,
            u: 1,
            ..small()
        };
        assert!(skip_check(&p).unwrap().same_result);
        let b = baseline(&BenchParams { p: 4, ..small() }, 0.25).unwrap();
        assert!(b.same_result);
    }
}
