//! Dense real linear-algebra kernel.
//!
//! Everything downstream works in a coordinate model of the Hilbert space:
//! an operator is a square real matrix, adjoint is transpose, and the inner
//! product is the Euclidean one. Integral operators on `L²(0,T)` enter
//! through [`grid_embed`], whose `√h` scaling keeps that model isometric.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative singular-value threshold used to decide numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;
/// Relative threshold below which small negative eigenvalues are clamped to zero.
pub const DEFAULT_CLAMP_TOL: f64 = 1e-12;
/// Symmetry tolerance, relative to `1 + ‖A‖`.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A dense real operator on the coordinate space `R^dim`.
///
/// Entry `(i, j)` is the coefficient of output basis vector `i` produced by
/// input basis vector `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator(DMatrix<f64>);

impl Operator {
    /// Wraps a square matrix with finite entries.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::NotSquare {
                rows: entries.nrows(),
                cols: entries.ncols(),
            });
        }
        for j in 0..entries.ncols() {
            for i in 0..entries.nrows() {
                if !entries[(i, j)].is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(Operator(entries))
    }

    pub(crate) fn from_matrix_unchecked(entries: DMatrix<f64>) -> Self {
        debug_assert_eq!(entries.nrows(), entries.ncols());
        Operator(entries)
    }

    /// Builds an operator from row-major nested vectors.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for row in rows {
            if row.len() != n {
                return Err(Error::NotSquare {
                    rows: n,
                    cols: row.len(),
                });
            }
        }
        Operator::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(dim: usize) -> Self {
        Operator(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Operator(DMatrix::zeros(dim, dim))
    }

    pub fn from_diagonal(values: &[f64]) -> Result<Self> {
        Operator::new(DMatrix::from_diagonal(&DVector::from_column_slice(values)))
    }

    /// Block-diagonal direct sum, blocks placed in the given order.
    pub fn block_diagonal(blocks: &[Operator]) -> Self {
        let dim = blocks.iter().map(Operator::dim).sum();
        let mut m = DMatrix::zeros(dim, dim);
        let mut offset = 0;
        for b in blocks {
            let d = b.dim();
            m.view_mut((offset, offset), (d, d)).copy_from(&b.0);
            offset += d;
        }
        Operator(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }

    pub fn transpose(&self) -> Operator {
        Operator(self.0.transpose())
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.0 * v
    }

    pub fn scale(&self, factor: f64) -> Operator {
        Operator(&self.0 * factor)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| self.0.row(i).iter().copied().collect())
            .collect()
    }

    /// `max |A_ij - A_ji|`.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            for i in (j + 1)..n {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn symmetry_tolerance(&self) -> f64 {
        SYMMETRY_TOL * (1.0 + op_norm(self))
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetry_defect() <= self.symmetry_tolerance()
    }

    fn require_symmetric(&self) -> Result<()> {
        let defect = self.symmetry_defect();
        let tolerance = self.symmetry_tolerance();
        if defect > tolerance {
            return Err(Error::NotSymmetric { defect, tolerance });
        }
        Ok(())
    }

    fn symmetrized(&self) -> DMatrix<f64> {
        (&self.0 + self.0.transpose()) * 0.5
    }
}

impl<'a> Add<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn add(self, rhs: &'a Operator) -> Operator {
        Operator(&self.0 + &rhs.0)
    }
}

impl<'a> Sub<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn sub(self, rhs: &'a Operator) -> Operator {
        Operator(&self.0 - &rhs.0)
    }
}

impl<'a> Mul<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn mul(self, rhs: &'a Operator) -> Operator {
        Operator(&self.0 * &rhs.0)
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator(-&self.0)
    }
}

/// Eigenvalues in ascending order with the matching orthonormal eigenvectors
/// stored column by column.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl Spectrum {
    /// `Σ λ_i v_i v_iᵀ`
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(self.eigenvectors.nrows(), self.eigenvalues.len(), |i, j| {
            self.eigenvectors[(i, j)] * self.eigenvalues[j]
        });
        scaled * self.eigenvectors.transpose()
    }

    /// Largest `‖A v_i − λ_i v_i‖` over the pairs.
    pub fn residual(&self, a: &Operator) -> f64 {
        self.eigenvalues
            .iter()
            .enumerate()
            .map(|(k, &lambda)| {
                let v = self.eigenvectors.column(k);
                (a.matrix() * v - v * lambda).norm()
            })
            .fold(0.0, f64::max)
    }

    /// `‖VᵀV − I‖` over the eigenvector family.
    pub fn orthonormality_defect(&self) -> f64 {
        let k = self.eigenvectors.ncols();
        spectral_norm(&(self.eigenvectors.transpose() * &self.eigenvectors - DMatrix::identity(k, k)))
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }
}

/// Symmetric eigendecomposition, eigenvalues ascending.
///
/// Each eigenvector is normalized so that its first entry of magnitude above
/// `1e-8` is positive, which makes the output deterministic up to degenerate
/// eigenspaces.
pub fn sym_eig(a: &Operator) -> Result<Spectrum> {
    a.require_symmetric()?;
    let n = a.dim();
    if n == 0 {
        return Ok(Spectrum {
            eigenvalues: Vec::new(),
            eigenvectors: DMatrix::zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::new(a.symmetrized());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));

    let mut vectors = DMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        let mut col = eig.eigenvectors.column(src).into_owned();
        if let Some(lead) = col.iter().copied().find(|x| x.abs() > 1e-8) {
            if lead < 0.0 {
                col.neg_mut();
            }
        }
        vectors.set_column(dst, &col);
    }
    Ok(Spectrum {
        eigenvalues: values,
        eigenvectors: vectors,
    })
}

/// Positive square root of a symmetric positive-semidefinite operator.
///
/// Eigenvalues in `[-tol·‖C‖, 0)` are clamped to zero; anything more
/// negative is rejected with [`Error::NotPositive`].
pub fn psd_sqrt(c: &Operator, tol: f64) -> Result<Operator> {
    let spec = sym_eig(c)?;
    let scale = spec
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, x| acc.max(x.abs()));
    let threshold = tol * scale;
    if spec.min() < -threshold {
        return Err(Error::NotPositive {
            eigenvalue: spec.min(),
            threshold,
        });
    }
    let roots: Vec<f64> = spec
        .eigenvalues
        .iter()
        .map(|&l| if l <= 0.0 { 0.0 } else { l.sqrt() })
        .collect();
    let root_spec = Spectrum {
        eigenvalues: roots,
        eigenvectors: spec.eigenvectors,
    };
    let s = root_spec.reconstruct();
    Ok(Operator((&s + s.transpose()) * 0.5))
}

fn to_faer(m: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Singular values in non-increasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    to_faer(m).singular_values().unwrap_or_else(|_| {
        let gram = SymmetricEigen::new(m.transpose() * m);
        let mut s: Vec<f64> = gram.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s.truncate(m.nrows().min(m.ncols()));
        s
    })
}

/// Thin SVD left factor and singular values, non-increasing.
fn left_singular(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let svd = to_faer(m).thin_svd().map_err(|_| Error::NoConvergence("singular value decomposition"))?;
    let u = svd.U();
    let s = svd.S().column_vector();
    Ok((
        DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)]),
        (0..s.nrows()).map(|k| s[k]).collect(),
    ))
}

/// Largest singular value of an arbitrary (possibly rectangular) matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() || m.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Operator norm (largest singular value).
pub fn op_norm(a: &Operator) -> f64 {
    spectral_norm(a.matrix())
}

/// `(A f, g)` in the coordinate inner product.
pub fn pairing(a: &Operator, f: &DVector<f64>, g: &DVector<f64>) -> f64 {
    assert_eq!(a.dim(), f.len(), "pairing: operator and f disagree on dimension");
    assert_eq!(a.dim(), g.len(), "pairing: operator and g disagree on dimension");
    a.apply(f).dot(g)
}

/// An orthogonal projection, stored with an orthonormal basis of its range.
#[derive(Clone, Debug)]
pub struct Projection {
    matrix: DMatrix<f64>,
    basis: DMatrix<f64>,
}

/// Defects measured against the projection invariants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionDefects {
    /// `‖P² − P‖`
    pub idempotence: f64,
    /// `‖P − Pᵀ‖`
    pub symmetry: f64,
    /// `|trace(P) − rank|`
    pub trace_gap: f64,
}

impl ProjectionDefects {
    pub fn within_contract(&self) -> bool {
        self.idempotence <= 1e-10 && self.symmetry <= 1e-12 && self.trace_gap <= 1e-8
    }
}

impl Projection {
    /// Projection onto the span of the given orthonormal columns.
    pub fn from_basis(basis: DMatrix<f64>) -> Self {
        let matrix = &basis * basis.transpose();
        Projection { matrix, basis }
    }

    pub fn zero(dim: usize) -> Self {
        Projection {
            matrix: DMatrix::zeros(dim, dim),
            basis: DMatrix::zeros(dim, 0),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Projection {
            matrix: DMatrix::identity(dim, dim),
            basis: DMatrix::identity(dim, dim),
        }
    }

    /// Pairs a projection matrix with an orthonormal basis of its range,
    /// both computed by the caller.
    pub(crate) fn from_parts(matrix: DMatrix<f64>, basis: DMatrix<f64>) -> Self {
        debug_assert_eq!(matrix.nrows(), basis.nrows());
        Projection { matrix, basis }
    }

    /// Projection onto the coordinates `start..end`.
    pub fn coordinate(dim: usize, start: usize, end: usize) -> Self {
        assert!(start <= end && end <= dim);
        let mut basis = DMatrix::zeros(dim, end - start);
        for (k, i) in (start..end).enumerate() {
            basis[(i, k)] = 1.0;
        }
        Projection::from_basis(basis)
    }

    /// Recovers a projection from its matrix. The basis comes from the
    /// eigenvectors with eigenvalue above one half; the stored matrix is the
    /// one supplied, so defects of a malformed input stay observable.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let op = Operator::new(matrix)?;
        let spec = sym_eig(&op)?;
        let keep: Vec<usize> = (0..spec.eigenvalues.len())
            .filter(|&k| spec.eigenvalues[k] > 0.5)
            .collect();
        let basis = spec.eigenvectors.select_columns(keep.iter());
        Ok(Projection {
            matrix: op.into_matrix(),
            basis,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn to_operator(&self) -> Operator {
        Operator(self.matrix.clone())
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }

    pub fn defects(&self) -> ProjectionDefects {
        let p = &self.matrix;
        ProjectionDefects {
            idempotence: spectral_norm(&(p * p - p)),
            symmetry: spectral_norm(&(p - p.transpose())),
            trace_gap: (p.trace() - self.rank() as f64).abs(),
        }
    }

    /// Projection onto `Ran(self) ⊖ Ran(lower)`, assuming `lower ≤ self`.
    pub fn increment(&self, lower: &Projection) -> Projection {
        let n = self.dim();
        let rank = self.rank().saturating_sub(lower.rank());
        if rank == 0 {
            return Projection::zero(n);
        }
        if lower.rank() == 0 {
            return self.clone();
        }
        let u = &self.basis;
        let residual = u - &lower.basis * (lower.basis.transpose() * u);
        Projection::from_basis(leading_left_singular_vectors(&residual, rank))
    }

    /// Direct sum of projections acting on consecutive coordinate blocks.
    pub fn block_diagonal(parts: &[&Projection]) -> Self {
        let dim: usize = parts.iter().map(|p| p.dim()).sum();
        let rank: usize = parts.iter().map(|p| p.rank()).sum();
        let mut matrix = DMatrix::zeros(dim, dim);
        let mut basis = DMatrix::zeros(dim, rank);
        let (mut row, mut col) = (0, 0);
        for p in parts {
            let (d, r) = (p.dim(), p.rank());
            matrix.view_mut((row, row), (d, d)).copy_from(&p.matrix);
            basis.view_mut((row, col), (d, r)).copy_from(&p.basis);
            row += d;
            col += r;
        }
        Projection { matrix, basis }
    }
}

/// Orthonormal basis for the `count` dominant left singular directions of `m`,
/// taken from the eigenvectors of the small Gram matrix `mᵀm`.
fn leading_left_singular_vectors(m: &DMatrix<f64>, count: usize) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.transpose() * m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut directions = m * eig.eigenvectors.select_columns(order.iter().take(count));
    for k in 0..count {
        for j in 0..k {
            let overlap = directions.column(j).dot(&directions.column(k));
            let prev = directions.column(j).into_owned();
            directions.column_mut(k).axpy(-overlap, &prev, 1.0);
        }
        let norm = directions.column(k).norm();
        directions.column_mut(k).unscale_mut(norm);
    }
    directions
}

/// Orthogonal projection onto the closure of `Ran(W·X)`.
///
/// Numerical rank counts singular values of `W·X` above
/// `rank_tol · σ_max`. A vanishing `W·X` yields the zero projection.
pub fn range_projection(w: &Operator, x: &Projection, rank_tol: f64) -> Result<Projection> {
    if !(rank_tol > 0.0) {
        return Err(Error::Parameter(format!("rank_tol must be positive, got {rank_tol}")));
    }
    if w.dim() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            found: x.dim(),
        });
    }
    let n = w.dim();
    if x.rank() == 0 {
        return Ok(Projection::zero(n));
    }
    let image = w.matrix() * x.basis();
    if image.iter().all(|&v| v == 0.0) {
        return Ok(Projection::zero(n));
    }
    let (u, sv) = left_singular(&image)?;
    let cutoff = rank_tol * sv.first().copied().unwrap_or(0.0);
    let keep = sv.iter().take_while(|&&s| s > cutoff).count();
    Ok(Projection::from_basis(u.columns(0, keep).into_owned()))
}

/// Midpoints `t_i = (i + 1/2)·T/n` of a uniform grid on `[0, T]`.
pub fn grid_points(n: usize, horizon: f64) -> Vec<f64> {
    let h = horizon / n as f64;
    (0..n).map(|i| (i as f64 + 0.5) * h).collect()
}

/// Discretizes the integral operator with kernel `k(t, τ)` on `L²(0,T)`.
///
/// With `h = T/n` and midpoints `t_i`, the matrix is `A_ij = h·k(t_i, t_j)`.
/// Coordinates are samples scaled by `√h`, so the Euclidean inner product is
/// the midpoint-rule `L²` inner product and adjoint is transpose.
pub fn grid_embed<K>(kernel: K, n: usize, horizon: f64) -> Result<Operator>
where
    K: Fn(f64, f64) -> f64,
{
    if n < 2 {
        return Err(Error::Parameter(format!("grid size must be at least 2, got {n}")));
    }
    if !(horizon > 0.0) {
        return Err(Error::Parameter(format!("horizon must be positive, got {horizon}")));
    }
    let h = horizon / n as f64;
    let t = grid_points(n, horizon);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let v = kernel(t[i], t[j]);
            if !v.is_finite() {
                return Err(Error::NonFiniteKernel {
                    i,
                    j,
                    t: t[i],
                    tau: t[j],
                });
            }
            m[(i, j)] = h * v;
        }
    }
    Ok(Operator(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn op(rows: &[&[f64]]) -> Operator {
        Operator::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let s = sym_eig(&Operator::identity(3)).unwrap();
        assert_eq!(s.eigenvalues, vec![1.0, 1.0, 1.0]);

        let s = sym_eig(&Operator::from_diagonal(&[4.0, 9.0]).unwrap()).unwrap();
        assert_abs_diff_eq!(s.eigenvalues[0], 4.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.eigenvalues[1], 9.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.eigenvectors, DMatrix::identity(2, 2), epsilon = 1e-14);
    }

    #[test]
    fn eig_two_by_two() {
        let a = op(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let s = sym_eig(&a).unwrap();
        assert_abs_diff_eq!(s.eigenvalues[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.eigenvalues[1], 3.0, epsilon = 1e-14);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = s.eigenvectors.column(0);
        let v1 = s.eigenvectors.column(1);
        assert_abs_diff_eq!(v0[0], r, epsilon = 1e-14);
        assert_abs_diff_eq!(v0[1], -r, epsilon = 1e-14);
        assert_abs_diff_eq!(v1[0], r, epsilon = 1e-14);
        assert_abs_diff_eq!(v1[1], r, epsilon = 1e-14);
        // A·v = λ·v by direct multiplication
        let av = a.matrix() * v0;
        assert_abs_diff_eq!(av[0], 1.0 * v0[0], epsilon = 1e-14);
        assert_abs_diff_eq!(av[1], 1.0 * v0[1], epsilon = 1e-14);
        assert!(s.residual(&a) <= 1e-10 * (1.0 + op_norm(&a)));
        assert!(s.orthonormality_defect() <= 1e-10);
    }

    #[test]
    fn eig_rejects_nonsymmetric() {
        let a = op(&[&[1.0, 2.0], &[0.0, 1.0]]);
        match sym_eig(&a) {
            Err(Error::NotSymmetric { defect, .. }) => assert_eq!(defect, 2.0),
            other => panic!("expected NotSymmetric, got {other:?}"),
        }
    }

    #[test]
    fn sqrt_examples() {
        let s = psd_sqrt(&Operator::from_diagonal(&[4.0, 9.0]).unwrap(), DEFAULT_CLAMP_TOL).unwrap();
        assert_abs_diff_eq!(s.matrix(), &DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0])), epsilon = 1e-14);

        let s = psd_sqrt(&Operator::identity(4), DEFAULT_CLAMP_TOL).unwrap();
        assert_abs_diff_eq!(s.matrix(), Operator::identity(4).matrix(), epsilon = 1e-14);

        let c = op(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let s = psd_sqrt(&c, DEFAULT_CLAMP_TOL).unwrap();
        let r3 = 3.0_f64.sqrt();
        let expected = op(&[&[(r3 + 1.0) / 2.0, (r3 - 1.0) / 2.0], &[(r3 - 1.0) / 2.0, (r3 + 1.0) / 2.0]]);
        assert_abs_diff_eq!(s.matrix(), expected.matrix(), epsilon = 1e-14);
        assert_abs_diff_eq!((&s * &s).matrix(), c.matrix(), epsilon = 1e-12);
    }

    #[test]
    fn sqrt_rejects_negative() {
        let c = Operator::from_diagonal(&[1.0, -0.5]).unwrap();
        match psd_sqrt(&c, DEFAULT_CLAMP_TOL) {
            Err(Error::NotPositive { eigenvalue, .. }) => assert_eq!(eigenvalue, -0.5),
            other => panic!("expected NotPositive, got {other:?}"),
        }
        // tiny negative round-off is clamped
        let c = Operator::from_diagonal(&[1.0, -1e-15]).unwrap();
        let s = psd_sqrt(&c, DEFAULT_CLAMP_TOL).unwrap();
        assert_eq!(s.get(1, 1), 0.0);
    }

    #[test]
    fn range_projection_examples() {
        let e1 = Projection::coordinate(3, 0, 1);
        let p = range_projection(&Operator::identity(3), &e1, DEFAULT_RANK_TOL).unwrap();
        assert_abs_diff_eq!(p.matrix(), e1.matrix(), epsilon = 1e-14);
        assert_eq!(p.rank(), 1);

        let p = range_projection(&Operator::zeros(3), &Projection::identity(3), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(p.rank(), 0);
        assert_eq!(p.matrix(), &DMatrix::<f64>::zeros(3, 3));

        assert!(range_projection(&Operator::identity(3), &e1, 0.0).is_err());
        assert!(range_projection(&Operator::identity(2), &e1, 1e-10).is_err());
    }

    #[test]
    fn op_norm_examples() {
        assert_abs_diff_eq!(op_norm(&Operator::identity(5)), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(
            op_norm(&Operator::from_diagonal(&[1.0, 0.5, 1.0 / 3.0]).unwrap()),
            1.0,
            epsilon = 1e-14
        );
        // 2x2 closed form: for [[0, a], [a, b]] the singular values are |b/2 ± sqrt(b²/4 + a²)|
        let n = 2.0_f64;
        let (a, b) = (1.0 / n, 2.0 / (n * n) - 1.0 / n);
        let closed = b.abs() / 2.0 + (b * b / 4.0 + a * a).sqrt();
        let m = op(&[&[0.0, a], &[a, b]]);
        assert_abs_diff_eq!(op_norm(&m), closed, epsilon = 1e-14);
        assert_abs_diff_eq!(closed, 0.5, epsilon = 1e-15);
        assert_eq!(op_norm(&Operator::zeros(3)), 0.0);
    }

    #[test]
    fn pairing_examples() {
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 1.0]);
        assert_eq!(pairing(&Operator::identity(2), &e1, &e1), 1.0);
        assert_eq!(pairing(&Operator::identity(2), &e1, &e2), 0.0);
        let d = Operator::from_diagonal(&[2.0, 3.0]).unwrap();
        let f = DVector::from_vec(vec![1.0, 1.0]);
        let g = DVector::from_vec(vec![1.0, -1.0]);
        // (2·1, 3·1)·(1, -1) = -1
        assert_eq!(pairing(&d, &f, &g), -1.0);
    }

    #[test]
    fn grid_embed_examples() {
        let z = grid_embed(|_, _| 0.0, 4, 1.0).unwrap();
        assert_eq!(z, Operator::zeros(4));

        let ones = grid_embed(|_, _| 1.0, 2, 1.0).unwrap();
        assert_eq!(ones.matrix(), &DMatrix::from_element(2, 2, 0.5));

        let anticausal = grid_embed(|t, tau| if tau >= t { (tau - t).exp() } else { 0.0 }, 6, 2.0).unwrap();
        for i in 0..6 {
            for j in 0..i {
                assert_eq!(anticausal.get(i, j), 0.0);
            }
            assert!(anticausal.get(i, i) > 0.0);
        }

        match grid_embed(|t, _| 1.0 / (t - 0.25), 2, 1.0) {
            Err(Error::NonFiniteKernel { i: 0, j: 0, t, .. }) => assert_eq!(t, 0.25),
            other => panic!("expected NonFiniteKernel, got {other:?}"),
        }
        assert!(grid_embed(|_, _| 1.0, 1, 1.0).is_err());
    }

    #[test]
    fn projection_increment_is_orthogonal_complement() {
        let upper = Projection::coordinate(4, 0, 3);
        let lower = Projection::coordinate(4, 0, 1);
        let inc = upper.increment(&lower);
        assert_eq!(inc.rank(), 2);
        assert_abs_diff_eq!(inc.matrix(), Projection::coordinate(4, 1, 3).matrix(), epsilon = 1e-14);
    }

    #[test]
    fn from_matrix_keeps_supplied_entries() {
        let p = Projection::from_matrix(Projection::coordinate(3, 1, 3).matrix().clone()).unwrap();
        assert_eq!(p.rank(), 2);
        assert!(p.defects().within_contract());
        let bad = Projection::from_matrix(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0]))).unwrap();
        assert!(!bad.defects().within_contract());
    }
}
