//! Error metrics, the metrics CSV and empirical rate fitting.
//!
//! All norms are Euclidean (Frobenius for matrices).

use std::io::{self, Read, Write};

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use thiserror::Error;

use crate::engine::{EngineError, Observer, Snapshot};
use crate::linalg::{gram_spectral_radius, norm2};
use crate::oracle::{tikhonov_point, OracleCache};
use crate::problems::ProblemInstance;

/// Column order of the metrics CSV.
pub const CSV_HEADER: [&str; 11] = [
    "k",
    "gamma_hat",
    "lambda",
    "consensus_x",
    "consensus_y",
    "subopt_f",
    "subopt_g",
    "infeas",
    "tracking_residual",
    "dist_tikhonov",
    "dist_xstar",
];

/// Gradient-norm tolerance of the Tikhonov points behind `dist_tikhonov`.
pub const TIKHONOV_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("rate fit needs at least 10 samples in the window, got {0}")]
    TooFewSamples(usize),
    #[error("nonpositive error {err:e} at k={k}")]
    NonPositive { k: f64, err: f64 },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("row {row}, column {column}: {msg}")]
    Parse { row: usize, column: &'static str, msg: String },
}

/// `x̄ = (1/m) uᵀX`.
pub fn weighted_average(x: ArrayView2<'_, f64>, u: ArrayView1<'_, f64>) -> Result<Array1<f64>, MetricsError> {
    if u.len() != x.nrows() {
        return Err(MetricsError::Dimension(format!("{} weights for {} rows", u.len(), x.nrows())));
    }
    let mut acc = Array1::zeros(x.ncols());
    for (i, row) in x.axis_iter(Axis(0)).enumerate() {
        acc.scaled_add(u[i], &row);
    }
    Ok(acc / x.nrows() as f64)
}

/// `(1/m) 1ᵀX`.
pub fn uniform_average(x: ArrayView2<'_, f64>) -> Array1<f64> {
    let mut acc = Array1::zeros(x.ncols());
    for row in x.axis_iter(Axis(0)) {
        acc += &row;
    }
    acc / x.nrows() as f64
}

/// `‖X − 1 x̄ᵀ‖_F` with the uniform average `x̄`.
pub fn consensus_violation(x: ArrayView2<'_, f64>) -> f64 {
    let mean = uniform_average(x);
    (&x - &mean.insert_axis(Axis(0))).iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `‖Y − v ȳᵀ‖_F` with `ȳ = (1/m) 1ᵀY`: distance of the trackers from the
/// direction they align with under column-stochastic mixing.
pub fn tracking_consensus(y: ArrayView2<'_, f64>, v: ArrayView1<'_, f64>) -> f64 {
    let mean = uniform_average(y);
    let mut total = 0.0;
    for (i, row) in y.axis_iter(Axis(0)).enumerate() {
        total += row.iter().zip(mean.iter()).map(|(a, b)| (a - v[i] * b).powi(2)).sum::<f64>();
    }
    total.sqrt()
}

/// `‖(1/m)1ᵀY − (1/m)1ᵀ𝐆(X)‖₂` with `𝐆` evaluated at `λ`.
pub fn tracking_residual(
    y: ArrayView2<'_, f64>,
    x: ArrayView2<'_, f64>,
    p: &ProblemInstance,
    lambda: f64,
) -> Result<f64, MetricsError> {
    let g = p
        .eval_regularized_gradient(x, lambda)
        .map_err(|e| MetricsError::Dimension(e.to_string()))?;
    if y.dim() != g.dim() {
        return Err(MetricsError::Dimension(format!("Y is {:?}, X is {:?}", y.dim(), x.dim())));
    }
    Ok(norm2((uniform_average(y) - uniform_average(g.view())).view()))
}

/// Least-squares slope of `log err` against `log k` over `lo ≤ k ≤ hi`.
pub fn rate_slope(series: &[(f64, f64)], window: (f64, f64)) -> Result<f64, MetricsError> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|(k, _)| *k >= window.0 && *k <= window.1)
        .collect();
    if let Some(&(k, err)) = pts.iter().find(|(_, e)| !(*e > 0.0)) {
        return Err(MetricsError::NonPositive { k, err });
    }
    if pts.len() < 10 {
        return Err(MetricsError::TooFewSamples(pts.len()));
    }
    let n = pts.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = pts.iter().map(|(k, e)| (k.ln(), e.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// One CSV row; `None` is written as an empty cell.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricRow {
    pub k: usize,
    pub gamma_hat: f64,
    pub lambda: f64,
    pub consensus_x: f64,
    pub consensus_y: f64,
    pub subopt_f: Option<f64>,
    pub subopt_g: Option<f64>,
    pub infeas: Option<f64>,
    pub tracking_residual: f64,
    pub dist_tikhonov: Option<f64>,
    pub dist_xstar: Option<f64>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl MetricRow {
    fn record(&self) -> [String; 11] {
        [
            self.k.to_string(),
            format!("{:e}", self.gamma_hat),
            format!("{:e}", self.lambda),
            format!("{:e}", self.consensus_x),
            format!("{:e}", self.consensus_y),
            cell(self.subopt_f),
            cell(self.subopt_g),
            cell(self.infeas),
            format!("{:e}", self.tracking_residual),
            cell(self.dist_tikhonov),
            cell(self.dist_xstar),
        ]
    }
}

/// Writes `# `-prefixed comment lines, the header and the rows.
pub fn write_csv<W: Write>(mut out: W, comments: &[String], rows: &[MetricRow]) -> Result<(), MetricsError> {
    for c in comments {
        for line in c.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a metrics CSV written by [`write_csv`], skipping comment lines.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<MetricRow>, MetricsError> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(MetricsError::Parse {
            row: 0,
            column: "header",
            msg: format!("unexpected header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec?;
        let opt = |i: usize| -> Result<Option<f64>, MetricsError> {
            let s = &rec[i];
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|e: std::num::ParseFloatError| MetricsError::Parse {
                row: r + 1,
                column: CSV_HEADER[i],
                msg: e.to_string(),
            })
        };
        let req = |i: usize| -> Result<f64, MetricsError> {
            opt(i)?.ok_or(MetricsError::Parse {
                row: r + 1,
                column: CSV_HEADER[i],
                msg: "empty".into(),
            })
        };
        rows.push(MetricRow {
            k: rec[0].parse().map_err(|e: std::num::ParseIntError| MetricsError::Parse {
                row: r + 1,
                column: "k",
                msg: e.to_string(),
            })?,
            gamma_hat: req(1)?,
            lambda: req(2)?,
            consensus_x: req(3)?,
            consensus_y: req(4)?,
            subopt_f: opt(5)?,
            subopt_g: opt(6)?,
            infeas: opt(7)?,
            tracking_residual: req(8)?,
            dist_tikhonov: opt(9)?,
            dist_xstar: opt(10)?,
        });
    }
    Ok(rows)
}

/// Engine observer producing [`MetricRow`]s.
#[derive(Debug)]
pub struct MetricsObserver {
    xstar: Option<Array1<f64>>,
    f_star: Option<f64>,
    g_star: Option<f64>,
    tikhonov: bool,
    cache: OracleCache,
    rows: Vec<MetricRow>,
    max_tracking_ratio: f64,
}

impl MetricsObserver {
    /// `xstar` enables the suboptimality and `dist_xstar` columns; with
    /// `tikhonov` the observer solves for `x*_{λ_k}` at every observation.
    pub fn new(p: &ProblemInstance, xstar: Option<Array1<f64>>, tikhonov: bool) -> Self {
        let f_star = xstar.as_ref().map(|x| p.f(x.view()));
        let g_star = xstar.as_ref().map(|x| p.g(x.view()));
        Self {
            xstar,
            f_star,
            g_star,
            tikhonov,
            cache: OracleCache::in_memory(),
            rows: Vec::new(),
            max_tracking_ratio: 0.0,
        }
    }

    /// Tikhonov points are affordable for linear-gradient instances and
    /// small dimensions.
    pub fn tikhonov_affordable(p: &ProblemInstance) -> bool {
        p.quadratic_model().is_some() || p.dim() <= 50
    }

    pub fn rows(&self) -> &[MetricRow] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<MetricRow> {
        self.rows
    }

    /// Largest `tracking_residual / (1 + ‖Y‖₂)` seen so far, with the spectral
    /// norm of `Y`.
    pub fn max_tracking_ratio(&self) -> f64 {
        self.max_tracking_ratio
    }

    fn measure(&mut self, snap: &Snapshot<'_>) -> Result<MetricRow, MetricsError> {
        let st = snap.state;
        let p = snap.problem;
        let xbar = weighted_average(st.x.view(), snap.mix.u.view())?;
        let tracking = tracking_residual(st.y.view(), st.x.view(), p, snap.lambda)?;
        self.max_tracking_ratio = self
            .max_tracking_ratio
            .max(tracking / (1.0 + gram_spectral_radius(st.y.view()).sqrt()));
        let dist_tikhonov = if self.tikhonov && snap.lambda > 0.0 {
            let sol = self
                .cache
                .get_or_compute(p, snap.lambda, TIKHONOV_TOL, || tikhonov_point(p, snap.lambda, TIKHONOV_TOL))
                .map_err(|e| MetricsError::Dimension(e.to_string()))?;
            Some(norm2((&xbar - &sol.point()).view()))
        } else {
            None
        };
        Ok(MetricRow {
            k: st.k,
            gamma_hat: snap.gamma_hat,
            lambda: snap.lambda,
            consensus_x: consensus_violation(st.x.view()),
            consensus_y: tracking_consensus(st.y.view(), snap.mix.v.view()),
            subopt_f: self.f_star.map(|fs| p.f(xbar.view()) - fs),
            subopt_g: self.g_star.map(|gs| p.g(xbar.view()) - gs),
            infeas: p.infeasibility(xbar.view()),
            tracking_residual: tracking,
            dist_tikhonov,
            dist_xstar: self.xstar.as_ref().map(|xs| norm2((&xbar - xs).view())),
        })
    }
}

impl Observer for MetricsObserver {
    fn observe(&mut self, snap: &Snapshot<'_>) -> Result<(), EngineError> {
        let row = self.measure(snap).map_err(|e| EngineError::Observer(e.to_string()))?;
        self.rows.push(row);
        Ok(())
    }
}
