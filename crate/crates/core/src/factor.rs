//! Canonical triangular factorization `C = VᵀV`, `V = D_{√C}ᵀ √C`.
//!
//! The admissibility conditions `Ran D = F` and `D Dᵀ = I` are measured and
//! reported, never enforced: on a finite nest they generally fail, and the
//! interesting quantity is how fast they are approached under refinement.
//! In the positive-definite case the upper Cholesky factor with positive
//! diagonal serves as the oracle for `V`.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::amplitude::{diagonal, DiagonalOptions, DiagonalReport};
use crate::error::{Error, Result};
use crate::nest::{Nest, Partition};
use crate::opcore::{op_norm, psd_sqrt, singular_values, spectral_norm, Operator, DEFAULT_CLAMP_TOL, DEFAULT_RANK_TOL};
use crate::probes::ProbeSet;

#[derive(Clone, Debug)]
pub struct FactorOptions {
    pub diagonal: DiagonalOptions,
    pub clamp_tol: f64,
}

impl Default for FactorOptions {
    fn default() -> Self {
        FactorOptions {
            diagonal: DiagonalOptions::default(),
            clamp_tol: DEFAULT_CLAMP_TOL,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Admissibility {
    /// `‖D Dᵀ − I‖`
    pub isometry_defect: f64,
    /// `dim − rank(D)`
    pub rank_defect: usize,
}

/// Defects of `V_Ξ = (D^Ξ)ᵀ √C` at one refinement level.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub range: f64,
    pub intervals: usize,
    pub residual: f64,
    pub admissibility: Admissibility,
    /// Measured at the partition points, where it is an exact identity.
    pub triangularity: f64,
    pub cholesky_distance: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct FactorizationReport {
    pub c: Operator,
    pub sqrt_c: Operator,
    pub diagonal: DiagonalReport,
    /// `Dᵀ √C` for the last partial sum of the diagonal.
    pub v: Operator,
    /// `‖VᵀV − C‖`
    pub residual: f64,
    pub triangularity_defect: f64,
    pub admissibility: Admissibility,
    /// One row per recorded partial sum, coarsest first.
    pub sweep: Vec<SweepRow>,
    /// Upper Cholesky factor when `C` is positive definite.
    pub cholesky: Option<Operator>,
}

impl FactorizationReport {
    /// The diagonal `D` used for `V`.
    pub fn d(&self) -> &Operator {
        &self.diagonal.last().sum
    }

    pub fn partition(&self) -> &Partition {
        &self.diagonal.last().partition
    }

    /// `‖VᵀV − C‖ ≤ ‖√C‖²·‖DDᵀ − I‖ + 1e-9`, which follows from
    /// `VᵀV − C = √C (DDᵀ − I) √C`.
    pub fn residual_bound_holds(&self) -> bool {
        let s = op_norm(&self.sqrt_c);
        self.residual <= s * s * self.admissibility.isometry_defect + 1e-9
    }

    pub fn cholesky_distance(&self) -> Option<f64> {
        self.sweep.last().and_then(|r| r.cholesky_distance)
    }

    /// Plain-text `key = value` summary.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dim = {}", self.c.dim());
        let _ = writeln!(out, "diagonal_verdict = {}", self.diagonal.verdict.as_str());
        let _ = writeln!(out, "partition_intervals = {}", self.partition().intervals());
        let _ = writeln!(out, "partition_range = {}", self.partition().range());
        let _ = writeln!(out, "residual = {}", self.residual);
        let _ = writeln!(out, "triangularity_defect = {}", self.triangularity_defect);
        let _ = writeln!(out, "isometry_defect = {}", self.admissibility.isometry_defect);
        let _ = writeln!(out, "rank_defect = {}", self.admissibility.rank_defect);
        let _ = writeln!(out, "residual_bound = {}", self.residual_bound_holds());
        match self.cholesky_distance() {
            Some(d) => {
                let _ = writeln!(out, "cholesky_distance = {d}");
            }
            None => {
                let _ = writeln!(out, "cholesky_distance = n/a");
            }
        }
        out
    }
}

/// Largest `‖(I − X_s) V X_s‖` over the whole nest grid.
pub fn triangularity_defect(v: &Operator, nest: &Nest) -> f64 {
    triangularity_over(v, nest, 0..nest.grid().len())
}

/// As [`triangularity_defect`], restricted to the points of a partition.
pub fn triangularity_defect_at(v: &Operator, nest: &Nest, part: &Partition) -> f64 {
    triangularity_over(v, nest, part.indices().iter().copied())
}

fn triangularity_over(v: &Operator, nest: &Nest, indices: impl Iterator<Item = usize>) -> f64 {
    indices
        .map(|k| {
            let u = nest.projection(k).basis();
            if u.ncols() == 0 {
                return 0.0;
            }
            let vu = v.matrix() * u;
            let leak = &vu - u * (u.transpose() * &vu);
            spectral_norm(&leak)
        })
        .fold(0.0, f64::max)
}

/// `(‖D Dᵀ − I‖, dim − rank(D))`, rank counted as singular values above
/// `tol · σ_max`.
pub fn admissibility(d: &Operator, tol: f64) -> Admissibility {
    let n = d.dim();
    let m = d.matrix();
    let isometry_defect = spectral_norm(&(m * m.transpose() - DMatrix::identity(n, n)));
    let rank = if m.iter().all(|&x| x == 0.0) {
        0
    } else {
        let sv = singular_values(m);
        let cutoff = tol * sv.first().copied().unwrap_or(0.0);
        sv.iter().filter(|&&s| s > cutoff).count()
    };
    Admissibility {
        isometry_defect,
        rank_defect: n - rank,
    }
}

/// Upper-triangular `R` with positive diagonal and `RᵀR = C`.
pub fn cholesky_upper(c: &Operator) -> Result<Operator> {
    let n = c.dim();
    let a = c.matrix();
    let mut r = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= r[(k, j)] * r[(k, j)];
        }
        if !(pivot > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: pivot });
        }
        let rjj = pivot.sqrt();
        r[(j, j)] = rjj;
        for i in (j + 1)..n {
            let mut s = a[(j, i)];
            for k in 0..j {
                s -= r[(k, j)] * r[(k, i)];
            }
            r[(j, i)] = s / rjj;
        }
    }
    Ok(Operator::from_matrix_unchecked(r))
}

/// `‖S V − R‖` where the diagonal sign matrix `S` flips each row of `V` so
/// its diagonal entry matches the positive diagonal of `R`.
pub fn compare_to_cholesky(v: &Operator, r: &Operator) -> f64 {
    let mut aligned = v.matrix().clone();
    for i in 0..v.dim() {
        let sign = if v.get(i, i) != 0.0 {
            v.get(i, i).signum()
        } else {
            let dot = v.matrix().row(i).dot(&r.matrix().row(i));
            if dot < 0.0 {
                -1.0
            } else {
                1.0
            }
        };
        if sign < 0.0 {
            aligned.row_mut(i).neg_mut();
        }
    }
    spectral_norm(&(aligned - r.matrix()))
}

/// Computes `√C`, its diagonal along the refinement schedule, and
/// `V = Dᵀ √C` from the last partial sum, with all defects per level.
pub fn canonical_factor(c: &Operator, nest: &Nest, opts: &FactorOptions, probes: &ProbeSet) -> Result<FactorizationReport> {
    if c.dim() != nest.dim() {
        return Err(Error::DimensionMismatch {
            expected: nest.dim(),
            found: c.dim(),
        });
    }
    let sqrt_c = psd_sqrt(c, opts.clamp_tol)?;
    let report = diagonal(&sqrt_c, nest, &opts.diagonal, probes)?;
    let cholesky = cholesky_upper(c).ok();

    let sweep: Vec<SweepRow> = report
        .steps
        .iter()
        .map(|step| {
            let v = &step.sum.transpose() * &sqrt_c;
            SweepRow {
                range: step.partition.range(),
                intervals: step.partition.intervals(),
                residual: op_norm(&(&(&v.transpose() * &v) - c)),
                admissibility: admissibility(&step.sum, DEFAULT_RANK_TOL),
                triangularity: triangularity_defect_at(&v, nest, &step.partition),
                cholesky_distance: cholesky.as_ref().map(|r| compare_to_cholesky(&v, r)),
            }
        })
        .collect();

    let last = sweep.last().expect("diagonal report has steps").clone();
    let v = &report.last().sum.transpose() * &sqrt_c;
    Ok(FactorizationReport {
        c: c.clone(),
        sqrt_c,
        diagonal: report,
        v,
        residual: last.residual,
        triangularity_defect: last.triangularity,
        admissibility: last.admissibility,
        sweep,
        cholesky,
    })
}
