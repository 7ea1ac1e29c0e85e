use std::fmt;
use std::io::{self, Write};

use ndarray::Array2;

use super::{roots, Digraph, GraphError};

/// Tolerance for row/column sums of the mixing matrices.
pub const STOCHASTIC_TOL: f64 = 1e-12;

fn check_weights(g: &Digraph, w: &[f64]) -> Result<(), GraphError> {
    if w.len() != g.vertex_count() {
        return Err(GraphError::SelfWeightCount {
            expected: g.vertex_count(),
            got: w.len(),
        });
    }
    for (vertex, &value) in w.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(GraphError::BadSelfWeight { vertex, value });
        }
    }
    Ok(())
}

/// Pull weights: `R_ij = 1/(|in(i)| + r_i)` for each parent `j`,
/// `R_ii = r_i/(|in(i)| + r_i)`.
pub fn build_row_stochastic(g: &Digraph, self_weights: &[f64]) -> Result<Array2<f64>, GraphError> {
    check_weights(g, self_weights)?;
    let m = g.vertex_count();
    let mut r = Array2::zeros((m, m));
    for i in 0..m {
        let parents = g.in_neighbors(i);
        let denom = parents.len() as f64 + self_weights[i];
        r[[i, i]] = self_weights[i] / denom;
        for &j in parents {
            r[[i, j]] = 1.0 / denom;
        }
    }
    Ok(r)
}

/// Push weights: `C_li = 1/(|out(i)| + c_i)` for each child `l`,
/// `C_ii = c_i/(|out(i)| + c_i)`.
pub fn build_column_stochastic(
    g: &Digraph,
    self_weights: &[f64],
) -> Result<Array2<f64>, GraphError> {
    check_weights(g, self_weights)?;
    let m = g.vertex_count();
    let mut c = Array2::zeros((m, m));
    for i in 0..m {
        let children = g.out_neighbors(i);
        let denom = children.len() as f64 + self_weights[i];
        c[[i, i]] = self_weights[i] / denom;
        for &l in children {
            c[[l, i]] = 1.0 / denom;
        }
    }
    Ok(c)
}

/// `I - L/(2 d_max)` with the in-degree Laplacian `L` and maximum in-degree
/// `d_max`. Row-stochastic with diagonal at least 1/2.
pub fn build_laplacian_mixing(g: &Digraph) -> Result<Array2<f64>, GraphError> {
    let m = g.vertex_count();
    let d_max = (0..m).map(|i| g.in_neighbors(i).len()).max().unwrap_or(0);
    if d_max == 0 {
        return Err(GraphError::Edgeless);
    }
    let scale = 1.0 / (2.0 * d_max as f64);
    let mut r = Array2::eye(m);
    for i in 0..m {
        let parents = g.in_neighbors(i);
        r[[i, i]] -= parents.len() as f64 * scale;
        for &j in parents {
            r[[i, j]] = scale;
        }
    }
    Ok(r)
}

/// Column analogue of [`build_laplacian_mixing`]: out-degree Laplacian and
/// maximum out-degree.
pub fn build_laplacian_column(g: &Digraph) -> Result<Array2<f64>, GraphError> {
    let m = g.vertex_count();
    let d_max = (0..m).map(|i| g.out_neighbors(i).len()).max().unwrap_or(0);
    if d_max == 0 {
        return Err(GraphError::Edgeless);
    }
    let scale = 1.0 / (2.0 * d_max as f64);
    let mut c = Array2::eye(m);
    for i in 0..m {
        let children = g.out_neighbors(i);
        c[[i, i]] -= children.len() as f64 * scale;
        for &l in children {
            c[[l, i]] = scale;
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of [`validate_assumptions`]; one entry per check.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Keeps only the stochasticity/sign checks (everything but the root
    /// intersection).
    pub(crate) fn local_checks_passed(&self) -> bool {
        self.checks.iter().filter(|c| c.name != "root intersection").all(|c| c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (idx, c) in self.checks.iter().enumerate() {
            if idx > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

fn sign_and_diag_checks(
    label: &'static str,
    diag_label: &'static str,
    b: &Array2<f64>,
    checks: &mut Vec<Check>,
) {
    let min_entry = b.iter().copied().fold(f64::INFINITY, f64::min);
    checks.push(Check {
        name: label,
        passed: min_entry >= 0.0,
        detail: format!("min entry {min_entry:.3e}"),
    });
    let min_diag = b.diag().iter().copied().fold(f64::INFINITY, f64::min);
    checks.push(Check {
        name: diag_label,
        passed: min_diag > 0.0,
        detail: format!("min diagonal {min_diag:.3e}"),
    });
}

/// Checks nonnegativity, positive diagonals, row stochasticity of `r`,
/// column stochasticity of `c`, and that `roots(G_R) ∩ roots(G_Cᵀ)` is
/// nonempty.
pub fn validate_assumptions(r: &Array2<f64>, c: &Array2<f64>) -> ValidationReport {
    let mut checks = Vec::new();
    let square = r.is_square() && c.is_square() && r.nrows() == c.nrows() && r.nrows() > 0;
    checks.push(Check {
        name: "shape",
        passed: square,
        detail: format!("R {:?}, C {:?}", r.dim(), c.dim()),
    });
    if !square {
        return ValidationReport { checks };
    }

    sign_and_diag_checks("R nonnegative", "R positive diagonal", r, &mut checks);
    let row_err = r
        .rows()
        .into_iter()
        .map(|row| (row.sum() - 1.0).abs())
        .fold(0.0, f64::max);
    checks.push(Check {
        name: "R row-stochastic",
        passed: row_err <= STOCHASTIC_TOL,
        detail: format!("max |row sum - 1| = {row_err:.3e}"),
    });

    sign_and_diag_checks("C nonnegative", "C positive diagonal", c, &mut checks);
    let col_err = c
        .columns()
        .into_iter()
        .map(|col| (col.sum() - 1.0).abs())
        .fold(0.0, f64::max);
    checks.push(Check {
        name: "C column-stochastic",
        passed: col_err <= STOCHASTIC_TOL,
        detail: format!("max |column sum - 1| = {col_err:.3e}"),
    });

    let (rr, rc) = match (Digraph::induced_by(r), Digraph::induced_by(&c.t().to_owned())) {
        (Ok(gr), Ok(gct)) => (roots(&gr), roots(&gct)),
        _ => Default::default(),
    };
    let common: Vec<usize> = rr.intersection(&rc).copied().collect();
    checks.push(Check {
        name: "root intersection",
        passed: !common.is_empty(),
        detail: format!("roots(G_R) = {rr:?}, roots(G_Cᵀ) = {rc:?}, common = {common:?}"),
    });
    ValidationReport { checks }
}

/// Dense row-major CSV, one matrix row per line, shortest round-trip decimal
/// formatting.
pub fn write_matrix_csv<W: Write>(b: &Array2<f64>, mut w: W) -> io::Result<()> {
    for row in b.rows() {
        let line: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}
