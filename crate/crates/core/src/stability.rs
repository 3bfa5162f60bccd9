//! Stability of the canonical factorization under `C^α → C`.
//!
//! Contains regular convergence on a nest (strong convergence of the
//! operators together with their image projections), the harness that runs
//! the canonical factorization along a family and bounds the weak pairing
//! defect by the four proof terms, the explicit projection formula for
//! positive-definite operators, the channel construction, and the
//! counterexample showing that norm convergence of positive operators does
//! not carry image projections along.

use nalgebra::{DMatrix, DVector};

use crate::amplitude::{image_nest, partial_diagonal, ImageNest};
use crate::error::{Error, Result};
use crate::factor::{admissibility, canonical_factor, triangularity_defect_at, Admissibility, FactorOptions, FactorizationReport};
use crate::nest::{channel_nest, refinement_schedule, Nest, Partition};
use crate::opcore::{
    grid_embed, op_norm, psd_sqrt, range_projection, spectral_norm, sym_eig, Operator, Projection, DEFAULT_RANK_TOL,
};
use crate::probes::ProbeSet;

/// Slack allowed in the proof-term bound.
pub const BOUND_SLACK: f64 = 1e-10;
/// Condition number above which the restricted Gram block counts as singular.
pub const GRAM_CONDITION_LIMIT: f64 = 1e12;

/// An indexed family `W^α` (α ascending) together with its limit `W`.
#[derive(Clone, Debug)]
pub struct OperatorFamily {
    pub label: String,
    alphas: Vec<f64>,
    members: Vec<Operator>,
    limit: Operator,
}

impl OperatorFamily {
    pub fn new(label: impl Into<String>, alphas: Vec<f64>, members: Vec<Operator>, limit: Operator) -> Result<Self> {
        if alphas.len() != members.len() {
            return Err(Error::InvalidFamily(format!(
                "{} indices for {} members",
                alphas.len(),
                members.len()
            )));
        }
        if alphas.is_empty() {
            return Err(Error::InvalidFamily("family has no members".into()));
        }
        if alphas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidFamily("indices must be strictly increasing".into()));
        }
        if let Some(m) = members.iter().find(|m| m.dim() != limit.dim()) {
            return Err(Error::DimensionMismatch {
                expected: limit.dim(),
                found: m.dim(),
            });
        }
        Ok(OperatorFamily {
            label: label.into(),
            alphas,
            members,
            limit,
        })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn members(&self) -> &[Operator] {
        &self.members
    }

    pub fn limit(&self) -> &Operator {
        &self.limit
    }

    pub fn dim(&self) -> usize {
        self.limit.dim()
    }

    /// Member-wise positive square roots.
    pub fn sqrt(&self, clamp_tol: f64) -> Result<OperatorFamily> {
        let members = self
            .members
            .iter()
            .map(|m| psd_sqrt(m, clamp_tol))
            .collect::<Result<Vec<_>>>()?;
        Ok(OperatorFamily {
            label: format!("sqrt({})", self.label),
            alphas: self.alphas.clone(),
            members,
            limit: psd_sqrt(&self.limit, clamp_tol)?,
        })
    }
}

/// `I + L_κ`, where `L_κ` discretizes the anticausal kernel
/// `κ·e^{τ−t}·1_{τ>t}` on `[0, 1]`.
pub fn volterra_factor(kappa: f64, n: usize) -> Result<Operator> {
    let l = grid_embed(|t, tau| if tau > t { kappa * (tau - t).exp() } else { 0.0 }, n, 1.0)?;
    Ok(&Operator::identity(n) + &l)
}

/// `(I + L_κ)ᵀ(I + L_κ)`, positive definite for `|κ| < 1`.
pub fn volterra_operator(kappa: f64, n: usize) -> Result<Operator> {
    let f = volterra_factor(kappa, n)?;
    Ok(&f.transpose() * &f)
}

/// `C^α = (I + L_{κ_α})ᵀ(I + L_{κ_α})` with `κ_α = κ(1 − 1/α)`, limit at `κ`.
pub fn volterra_family(kappa: f64, alphas: &[f64], n: usize) -> Result<OperatorFamily> {
    if !(kappa.abs() < 1.0) {
        return Err(Error::Parameter(format!("volterra family needs |kappa| < 1, got {kappa}")));
    }
    if let Some(a) = alphas.iter().find(|&&a| !(a >= 1.0)) {
        return Err(Error::Parameter(format!("alpha must be at least 1, got {a}")));
    }
    let members = alphas
        .iter()
        .map(|&a| volterra_operator(kappa * (1.0 - 1.0 / a), n))
        .collect::<Result<Vec<_>>>()?;
    OperatorFamily::new(format!("volterra(kappa={kappa}, n={n})"), alphas.to_vec(), members, volterra_operator(kappa, n)?)
}

/// Stress family whose anticausal kernel `κ·cos(2πα(τ−t))·1_{τ>t}` oscillates
/// faster as α grows, so partition sums need ever finer partitions. The
/// kernel tends weakly to zero, hence the limit `I`.
pub fn roughening_family(kappa: f64, alphas: &[f64], n: usize) -> Result<OperatorFamily> {
    let members = alphas
        .iter()
        .map(|&a| {
            let l = grid_embed(
                |t, tau| if tau > t { kappa * (2.0 * std::f64::consts::PI * a * (tau - t)).cos() } else { 0.0 },
                n,
                1.0,
            )?;
            let f = &Operator::identity(n) + &l;
            Ok(&f.transpose() * &f)
        })
        .collect::<Result<Vec<_>>>()?;
    OperatorFamily::new(format!("roughening(kappa={kappa}, n={n})"), alphas.to_vec(), members, Operator::identity(n))
}

/// Channel operators `(1/l)·(I + L_κ)ᵀ(I + L_κ)`, `l = 1..=channels`.
pub fn channel_blocks(kappa: f64, channel_dim: usize, channels: usize) -> Result<Vec<Operator>> {
    let base = volterra_operator(kappa, channel_dim)?;
    Ok((1..=channels).map(|l| base.scale(1.0 / l as f64)).collect())
}

/// Block-diagonal family built channel by channel from the Volterra family.
pub fn channel_family(kappa: f64, alphas: &[f64], channel_dim: usize, channels: usize) -> Result<OperatorFamily> {
    if channels == 0 {
        return Err(Error::Parameter("need at least one channel".into()));
    }
    let base = volterra_family(kappa, alphas, channel_dim)?;
    let assemble = |op: &Operator| {
        let blocks: Vec<Operator> = (1..=channels).map(|l| op.scale(1.0 / l as f64)).collect();
        Operator::block_diagonal(&blocks)
    };
    OperatorFamily::new(
        format!("channels(kappa={kappa}, m={channel_dim}, L={channels})"),
        alphas.to_vec(),
        base.members().iter().map(assemble).collect(),
        assemble(base.limit()),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub enum CheckVerdict {
    Pass,
    Fail { alpha: f64, s: Option<f64>, reason: String },
}

impl CheckVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, CheckVerdict::Pass)
    }
}

/// The four terms bounding `|((V − V^α) f, g)|`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ProofTerms {
    /// `|(√C f, (D − D^Ξ) g)|`
    pub i: f64,
    /// `|(√C^α f, (D^α − D^{α,Ξ}) g)|`
    pub ii: f64,
    /// `|(√C f, (D^Ξ − D^{α,Ξ}) g)|`
    pub iii: f64,
    /// `|((√C − √C^α) f, D^{α,Ξ} g)|`
    pub iv: f64,
    /// `|((V − V^α) f, g)|`
    pub pairing: f64,
}

impl ProofTerms {
    pub fn total(&self) -> f64 {
        self.i + self.ii + self.iii + self.iv
    }

    pub fn bound_holds(&self) -> bool {
        self.total() + BOUND_SLACK >= self.pairing
    }
}

#[derive(Clone, Debug)]
pub struct ConvergenceRow {
    pub alpha: f64,
    /// `max_f ‖(W^α − W) f‖`
    pub op_defect: f64,
    /// `max_{s,f} ‖(P^α_s − P_s) f‖`
    pub proj_defect: f64,
    /// Grid parameter attaining `proj_defect`.
    pub proj_defect_at: f64,
    /// `max_{f,g} |((V − V^α) f, g)|`, harness rows only.
    pub max_pairing: Option<f64>,
    /// Proof terms at the probe pair attaining `max_pairing`.
    pub terms: Option<ProofTerms>,
    /// `min_{f,g} (I + II + III + IV − |pairing|)`.
    pub bound_slack: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub label: String,
    pub rows: Vec<ConvergenceRow>,
    pub verdict: CheckVerdict,
    pub tol: f64,
}

impl ConvergenceReport {
    pub fn max_pairings(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.max_pairing).collect()
    }

    pub fn proof_bound_holds(&self) -> bool {
        self.rows.iter().all(|r| r.bound_slack.map_or(true, |s| s >= -BOUND_SLACK))
    }
}

/// `(max_f ‖(W^α − W) f‖, max_{s,f} ‖(P^α_s − P_s) f‖, argmax s)` over the
/// given grid indices.
fn regularity_defects(
    member: &Operator,
    member_img: &ImageNest,
    limit: &Operator,
    limit_img: &ImageNest,
    nest: &Nest,
    indices: &[usize],
    probes: &ProbeSet,
) -> (f64, f64, f64) {
    let op_defect = probes.max_image_norm(&(member.matrix() - limit.matrix()));
    let mut proj_defect = 0.0;
    let mut at = nest.grid()[indices[0]];
    for &k in indices {
        let d = probes.max_image_norm(&(member_img.projection(k).matrix() - limit_img.projection(k).matrix()));
        if d > proj_defect {
            proj_defect = d;
            at = nest.grid()[k];
        }
    }
    (op_defect, proj_defect, at)
}

/// Definition-level check of `W^α → W` regularly on the nest.
///
/// Passes iff, at the largest α, both the operator and the projection
/// defects are at most `tol`, and each has shrunk at least twofold from the
/// smallest α.
pub fn regular_convergence_check(
    fam: &OperatorFamily,
    nest: &Nest,
    probes: &ProbeSet,
    tol: f64,
    rank_tol: f64,
) -> Result<ConvergenceReport> {
    let limit_img = image_nest(fam.limit(), nest, rank_tol)?;
    let indices: Vec<usize> = (0..nest.grid().len()).collect();
    let mut rows = Vec::with_capacity(fam.members().len());
    for (&alpha, member) in fam.alphas().iter().zip(fam.members()) {
        let img = image_nest(member, nest, rank_tol)?;
        let (op_defect, proj_defect, at) = regularity_defects(member, &img, fam.limit(), &limit_img, nest, &indices, probes);
        rows.push(ConvergenceRow {
            alpha,
            op_defect,
            proj_defect,
            proj_defect_at: at,
            max_pairing: None,
            terms: None,
            bound_slack: None,
        });
    }

    let first = &rows[0];
    let last = rows.last().expect("family is non-empty");
    let fail = |reason: String, s: Option<f64>| CheckVerdict::Fail {
        alpha: last.alpha,
        s,
        reason,
    };
    let verdict = if last.proj_defect > tol {
        fail(
            format!("projection defect {:e} exceeds {tol:e}", last.proj_defect),
            Some(last.proj_defect_at),
        )
    } else if last.op_defect > tol {
        fail(format!("operator defect {:e} exceeds {tol:e}", last.op_defect), None)
    } else if last.op_defect > 0.5 * first.op_defect {
        fail("operator defect did not halve across the schedule".into(), None)
    } else if last.proj_defect > 0.5 * first.proj_defect {
        fail(
            "projection defect did not halve across the schedule".into(),
            Some(last.proj_defect_at),
        )
    } else {
        CheckVerdict::Pass
    };

    Ok(ConvergenceReport {
        label: fam.label.clone(),
        rows,
        verdict,
        tol,
    })
}

#[derive(Clone, Debug)]
pub struct HarnessOptions {
    pub factor: FactorOptions,
    /// Largest acceptable pairing defect at the largest α.
    pub tol: f64,
    /// Refinement level used as `Ξ` in the proof terms; `None` picks the
    /// middle of the recorded schedule.
    pub proof_level: Option<usize>,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        HarnessOptions {
            factor: FactorOptions::default(),
            tol: 1e-2,
            proof_level: None,
        }
    }
}

/// Matrices `M` with `(M)_{j,i}` the term evaluated at `f = probe j`,
/// `g = probe i`.
struct TermMatrices {
    i: DMatrix<f64>,
    ii: DMatrix<f64>,
    iii: DMatrix<f64>,
    iv: DMatrix<f64>,
    pairing: DMatrix<f64>,
}

/// Evaluates every proof term on the probe-pair grid. `d`, `d_alpha` are the
/// stand-in limits, `d_xi`, `d_alpha_xi` the partial sums at `Ξ`.
fn term_matrices(
    sqrt_c: &DMatrix<f64>,
    sqrt_ca: &DMatrix<f64>,
    d: &DMatrix<f64>,
    d_alpha: &DMatrix<f64>,
    d_xi: &DMatrix<f64>,
    d_alpha_xi: &DMatrix<f64>,
    f: &DMatrix<f64>,
    g: &DMatrix<f64>,
) -> TermMatrices {
    let sf = f.transpose() * sqrt_c;
    let saf = f.transpose() * sqrt_ca;
    let v_minus = d.transpose() * sqrt_c - d_alpha.transpose() * sqrt_ca;
    TermMatrices {
        i: (&sf * (d - d_xi) * g).abs(),
        ii: (&saf * (d_alpha - d_alpha_xi) * g).abs(),
        iii: (&sf * (d_xi - d_alpha_xi) * g).abs(),
        iv: (f.transpose() * (sqrt_c - sqrt_ca) * d_alpha_xi * g).abs(),
        pairing: (f.transpose() * v_minus.transpose() * g).abs(),
    }
}

/// The four proof terms for a single `(f, g)` at partition `part`, with the
/// finest partition of the nest standing in for the true diagonal.
pub fn proof_term_decomposition(
    c: &Operator,
    c_alpha: &Operator,
    nest: &Nest,
    part: &Partition,
    f: &DVector<f64>,
    g: &DVector<f64>,
    opts: &FactorOptions,
) -> Result<ProofTerms> {
    let sqrt_c = psd_sqrt(c, opts.clamp_tol)?;
    let sqrt_ca = psd_sqrt(c_alpha, opts.clamp_tol)?;
    let img = image_nest(&sqrt_c, nest, opts.diagonal.rank_tol)?;
    let img_a = image_nest(&sqrt_ca, nest, opts.diagonal.rank_tol)?;
    let finest = Partition::finest(nest);
    let d = partial_diagonal(&sqrt_c, nest, &finest, &img);
    let d_a = partial_diagonal(&sqrt_ca, nest, &finest, &img_a);
    let d_xi = partial_diagonal(&sqrt_c, nest, part, &img);
    let d_a_xi = partial_diagonal(&sqrt_ca, nest, part, &img_a);
    let fm = DMatrix::from_column_slice(f.len(), 1, f.as_slice());
    let gm = DMatrix::from_column_slice(g.len(), 1, g.as_slice());
    let t = term_matrices(
        sqrt_c.matrix(),
        sqrt_ca.matrix(),
        d.matrix(),
        d_a.matrix(),
        d_xi.matrix(),
        d_a_xi.matrix(),
        &fm,
        &gm,
    );
    Ok(ProofTerms {
        i: t.i[(0, 0)],
        ii: t.ii[(0, 0)],
        iii: t.iii[(0, 0)],
        iv: t.iv[(0, 0)],
        pairing: t.pairing[(0, 0)],
    })
}

/// Runs the canonical factorization on the limit and on every member and
/// records weak pairing defects of the factors, the regularity defects of
/// `√C^α → √C` at the final partition points, and the proof terms.
///
/// Passes iff the proof bound holds on every row, the max pairing defect is
/// non-increasing in α, and at the largest α it is at most `opts.tol`.
pub fn theorem_harness(fam: &OperatorFamily, nest: &Nest, opts: &HarnessOptions, probes: &ProbeSet) -> Result<ConvergenceReport> {
    let limit = canonical_factor(fam.limit(), nest, &opts.factor, probes)?;
    let reports = fam
        .members()
        .iter()
        .map(|m| canonical_factor(m, nest, &opts.factor, probes))
        .collect::<Result<Vec<_>>>()?;
    Ok(harness_from_reports(&fam.label, fam.alphas(), &limit, &reports, nest, opts, probes))
}

fn harness_from_reports(
    label: &str,
    alphas: &[f64],
    limit: &FactorizationReport,
    reports: &[FactorizationReport],
    nest: &Nest,
    opts: &HarnessOptions,
    probes: &ProbeSet,
) -> ConvergenceReport {
    let p = probes.matrix();
    let mut rows = Vec::with_capacity(reports.len());
    for (&alpha, rep) in alphas.iter().zip(reports) {
        let levels = limit.diagonal.steps.len().min(rep.diagonal.steps.len());
        let level = opts.proof_level.unwrap_or(levels / 2).min(levels - 1);
        let t = term_matrices(
            limit.sqrt_c.matrix(),
            rep.sqrt_c.matrix(),
            limit.diagonal.steps[levels - 1].sum.matrix(),
            rep.diagonal.steps[levels - 1].sum.matrix(),
            limit.diagonal.steps[level].sum.matrix(),
            rep.diagonal.steps[level].sum.matrix(),
            p,
            p,
        );
        let (mut best, mut best_at) = (-1.0, (0, 0));
        let mut slack = f64::INFINITY;
        for j in 0..t.pairing.nrows() {
            for i in 0..t.pairing.ncols() {
                let pv = t.pairing[(j, i)];
                if pv > best {
                    best = pv;
                    best_at = (j, i);
                }
                slack = slack.min(t.i[(j, i)] + t.ii[(j, i)] + t.iii[(j, i)] + t.iv[(j, i)] - pv);
            }
        }
        let (j, i) = best_at;
        let terms = ProofTerms {
            i: t.i[(j, i)],
            ii: t.ii[(j, i)],
            iii: t.iii[(j, i)],
            iv: t.iv[(j, i)],
            pairing: t.pairing[(j, i)],
        };

        let part = rep.partition();
        let (op_defect, proj_defect, at) = regularity_defects(
            &rep.sqrt_c,
            &rep.diagonal.image,
            &limit.sqrt_c,
            &limit.diagonal.image,
            nest,
            part.indices(),
            probes,
        );
        rows.push(ConvergenceRow {
            alpha,
            op_defect,
            proj_defect,
            proj_defect_at: at,
            max_pairing: Some(best.max(0.0)),
            terms: Some(terms),
            bound_slack: Some(slack),
        });
    }

    let verdict = harness_verdict(&rows, opts.tol);
    ConvergenceReport {
        label: label.to_string(),
        rows,
        verdict,
        tol: opts.tol,
    }
}

fn harness_verdict(rows: &[ConvergenceRow], tol: f64) -> CheckVerdict {
    if let Some(r) = rows.iter().find(|r| r.bound_slack.unwrap_or(0.0) < -BOUND_SLACK) {
        return CheckVerdict::Fail {
            alpha: r.alpha,
            s: None,
            reason: "proof-term bound violated".into(),
        };
    }
    for w in rows.windows(2) {
        if w[1].max_pairing > w[0].max_pairing {
            return CheckVerdict::Fail {
                alpha: w[1].alpha,
                s: None,
                reason: "pairing defect increased".into(),
            };
        }
    }
    let last = rows.last().expect("family is non-empty");
    let final_pairing = last.max_pairing.unwrap_or(0.0);
    if final_pairing > tol {
        return CheckVerdict::Fail {
            alpha: last.alpha,
            s: None,
            reason: format!("pairing defect {final_pairing:e} exceeds {tol:e}"),
        };
    }
    CheckVerdict::Pass
}

/// Cauchy defects of `D^Ξ_{√C^α}` across consecutive partitions.
#[derive(Clone, Debug)]
pub struct UniformityTable {
    pub alphas: Vec<f64>,
    /// `r^Ξ` of the finer partition of each consecutive pair.
    pub ranges: Vec<f64>,
    /// `defects[step][member]`
    pub defects: Vec<Vec<f64>>,
}

impl UniformityTable {
    /// Sup over α per refinement step.
    pub fn sup_per_step(&self) -> Vec<f64> {
        self.defects.iter().map(|row| row.iter().copied().fold(0.0, f64::max)).collect()
    }
}

pub fn uniformity_diagnostic(
    fam: &OperatorFamily,
    nest: &Nest,
    schedule: usize,
    probes: &ProbeSet,
    opts: &FactorOptions,
) -> Result<UniformityTable> {
    let partitions = refinement_schedule(nest, schedule);
    let steps = partitions.len() - 1;
    let mut defects = vec![Vec::with_capacity(fam.members().len()); steps];
    for member in fam.members() {
        let root = psd_sqrt(member, opts.clamp_tol)?;
        let img = image_nest(&root, nest, opts.diagonal.rank_tol)?;
        let sums: Vec<Operator> = partitions.iter().map(|p| partial_diagonal(&root, nest, p, &img)).collect();
        for (k, w) in sums.windows(2).enumerate() {
            defects[k].push(probes.max_pairing(&(w[1].matrix() - w[0].matrix())));
        }
    }
    Ok(UniformityTable {
        alphas: fam.alphas().to_vec(),
        ranges: partitions.iter().skip(1).map(Partition::range).collect(),
        defects,
    })
}

/// `√C·Ẋ_s·(Ẋ_sᵀ C Ẋ_s)⁻¹·Ẋ_sᵀ·√C`, the projection onto `√C·F_s` for
/// positive-definite `C`. `Ẋ_s` is the isometry given by the basis of `X_s`,
/// so for the standard nest it keeps the first `rank(X_s)` coordinates.
pub fn posdef_projection(c: &Operator, nest: &Nest, index: usize) -> Result<Projection> {
    let spec = sym_eig(c)?;
    if !(spec.min() > 0.0) {
        return Err(Error::NotPositive {
            eigenvalue: spec.min(),
            threshold: 0.0,
        });
    }
    let root = psd_sqrt(c, 0.0)?;
    posdef_projection_with_root(c, &root, nest, index)
}

/// As [`posdef_projection`] at every grid point, sharing one square root.
pub fn posdef_projections(c: &Operator, nest: &Nest) -> Result<Vec<Projection>> {
    let spec = sym_eig(c)?;
    if !(spec.min() > 0.0) {
        return Err(Error::NotPositive {
            eigenvalue: spec.min(),
            threshold: 0.0,
        });
    }
    let root = psd_sqrt(c, 0.0)?;
    (0..nest.grid().len())
        .map(|k| posdef_projection_with_root(c, &root, nest, k))
        .collect()
}

fn posdef_projection_with_root(c: &Operator, root: &Operator, nest: &Nest, index: usize) -> Result<Projection> {
    let u = nest.projection(index).basis();
    let k = u.ncols();
    if k == 0 {
        return Ok(Projection::zero(c.dim()));
    }
    let gram = Operator::from_matrix_unchecked(u.transpose() * c.matrix() * u);
    let spec = sym_eig(&gram)?;
    let condition = if spec.min() > 0.0 { spec.max() / spec.min() } else { f64::INFINITY };
    if condition > GRAM_CONDITION_LIMIT {
        return Err(Error::SingularGram {
            s: nest.grid()[index],
            condition,
        });
    }
    let vecs = &spec.eigenvectors;
    let inv = DMatrix::from_fn(k, k, |i, j| (0..k).map(|m| vecs[(i, m)] * vecs[(j, m)] / spec.eigenvalues[m]).sum());
    let inv_sqrt = DMatrix::from_fn(k, k, |i, j| {
        (0..k).map(|m| vecs[(i, m)] * vecs[(j, m)] / spec.eigenvalues[m].sqrt()).sum()
    });
    let su = root.matrix() * u;
    let matrix = &su * inv * su.transpose();
    let basis = &su * inv_sqrt;
    Ok(Projection::from_parts(matrix, basis))
}

/// Truncated instance of the counterexample on `φ_1 … φ_N`.
#[derive(Clone, Debug)]
pub struct Counterexample {
    pub n: usize,
    pub truncation: usize,
    /// `W φ_k = φ_k / k`
    pub w: Operator,
    /// `W` altered on `span{φ_1, φ_n}`
    pub w_n: Operator,
    /// Projection onto `M = span{φ_2, …, φ_N}`.
    pub m: Projection,
    /// `I − φ_1 φ_1ᵀ`, projection onto `closure(W M) = M`.
    pub p: Projection,
    /// Closed form `I − ψ̃_n ψ̃_nᵀ` with `ψ_n = φ_1 − (n/2) φ_n`.
    pub p_n: Projection,
    /// `range_projection(W_n, M)`, computed independently of the closed form.
    pub p_n_computed: Projection,
    /// `‖ψ_n‖²`
    pub psi_norm_sq: f64,
}

impl Counterexample {
    /// `‖W_n − W‖`
    pub fn perturbation_norm(&self) -> f64 {
        op_norm(&(&self.w_n - &self.w))
    }

    /// `‖(P_n − P) φ_1‖`, using the closed-form `P_n`.
    pub fn phi1_defect(&self) -> f64 {
        let phi1 = basis_vector(self.truncation, 0);
        (self.p_n.apply(&phi1) - self.p.apply(&phi1)).norm()
    }

    /// `1 − 1/(1 + n²/4)`, the closed form of `‖(P_n − P) φ_1‖²`.
    pub fn closed_form_phi1_defect_sq(&self) -> f64 {
        let n = self.n as f64;
        1.0 - 1.0 / (1.0 + n * n / 4.0)
    }

    /// `‖P_n^computed − P_n^closed‖`
    pub fn projection_agreement(&self) -> f64 {
        spectral_norm(&(self.p_n_computed.matrix() - self.p_n.matrix()))
    }
}

fn basis_vector(dim: usize, k: usize) -> DVector<f64> {
    let mut e = DVector::zeros(dim);
    e[k] = 1.0;
    e
}

fn counterexample_operators(n: usize, truncation: usize) -> (Operator, Operator) {
    let w = Operator::from_matrix_unchecked(DMatrix::from_fn(truncation, truncation, |i, j| {
        if i == j {
            1.0 / (i + 1) as f64
        } else {
            0.0
        }
    }));
    let nf = n as f64;
    let mut wn = w.matrix().clone();
    let last = n - 1;
    wn[(0, 0)] = 1.0;
    wn[(last, 0)] = 1.0 / nf;
    wn[(0, last)] = 1.0 / nf;
    wn[(last, last)] = 2.0 / (nf * nf);
    (w, Operator::from_matrix_unchecked(wn))
}

pub fn counterexample_instance(n: usize, truncation: usize) -> Result<Counterexample> {
    if n < 2 {
        return Err(Error::Parameter(format!("counterexample needs n >= 2, got {n}")));
    }
    if truncation < n + 1 {
        return Err(Error::Parameter(format!(
            "truncation must be at least n + 1 = {}, got {truncation}",
            n + 1
        )));
    }
    let (w, w_n) = counterexample_operators(n, truncation);
    let m = Projection::coordinate(truncation, 1, truncation);
    let p = m.clone();

    let nf = n as f64;
    let mut psi = DVector::zeros(truncation);
    psi[0] = 1.0;
    psi[n - 1] = -nf / 2.0;
    let psi_norm_sq = psi.norm_squared();
    let psi_unit = &psi / psi_norm_sq.sqrt();
    let p_n_matrix = DMatrix::identity(truncation, truncation) - &psi_unit * psi_unit.transpose();
    let keep: Vec<usize> = (0..truncation).filter(|&k| k != 0 && k != n - 1).collect();
    let mut basis = DMatrix::zeros(truncation, truncation - 1);
    for (col, &k) in keep.iter().enumerate() {
        basis[(k, col)] = 1.0;
    }
    // the remaining direction of span{φ_1, φ_n} orthogonal to ψ_n
    let mut chi = DVector::zeros(truncation);
    chi[0] = nf / 2.0;
    chi[n - 1] = 1.0;
    let chi = &chi / chi.norm();
    basis.set_column(truncation - 2, &chi);
    let p_n = Projection::from_parts(p_n_matrix, basis);

    let p_n_computed = range_projection(&w_n, &m, DEFAULT_RANK_TOL)?;

    Ok(Counterexample {
        n,
        truncation,
        w,
        w_n,
        m,
        p,
        p_n,
        p_n_computed,
        psi_norm_sq,
    })
}

#[derive(Clone, Debug)]
pub struct CounterexampleRow {
    pub n: usize,
    pub perturbation_norm: f64,
    pub phi1_defect: f64,
    pub closed_form_phi1_defect: f64,
    pub projection_agreement: f64,
}

pub fn counterexample_table(ns: &[usize], truncation: usize) -> Result<Vec<CounterexampleRow>> {
    ns.iter()
        .map(|&n| {
            let ce = counterexample_instance(n, truncation)?;
            Ok(CounterexampleRow {
                n,
                perturbation_norm: ce.perturbation_norm(),
                phi1_defect: ce.phi1_defect(),
                closed_form_phi1_defect: ce.closed_form_phi1_defect_sq().sqrt(),
                projection_agreement: ce.projection_agreement(),
            })
        })
        .collect()
}

/// The family `W_n → W` (indexed by `n`) together with the single-subspace
/// nest `{0, M, H}` on the grid `(0, 1/2, 1)`.
pub fn counterexample_family(ns: &[usize], truncation: usize) -> Result<(OperatorFamily, Nest)> {
    if let Some(&n) = ns.iter().find(|&&n| n < 2 || truncation < n + 1) {
        return Err(Error::Parameter(format!("n = {n} is out of range for truncation {truncation}")));
    }
    let members: Vec<Operator> = ns.iter().map(|&n| counterexample_operators(n, truncation).1).collect();
    let (w, _) = counterexample_operators(2, truncation);
    let fam = OperatorFamily::new(
        format!("counterexample(N={truncation})"),
        ns.iter().map(|&n| n as f64).collect(),
        members,
        w,
    )?;
    let nest = Nest::explicit(
        1.0,
        vec![0.0, 0.5, 1.0],
        vec![
            Projection::zero(truncation),
            Projection::coordinate(truncation, 1, truncation),
            Projection::identity(truncation),
        ],
    )?;
    Ok((fam, nest))
}

/// Result of factorizing channel by channel and assembling the direct sum.
#[derive(Clone, Debug)]
pub struct ChannelAssembly {
    pub c: Operator,
    pub nest: Nest,
    pub channels: Vec<FactorizationReport>,
    pub v: Operator,
    pub d: Operator,
    /// `‖VᵀV − C‖` of the assembled operators.
    pub residual: f64,
    /// Triangularity at the partition points shared by all channels.
    pub triangularity_defect: f64,
    pub admissibility: Admissibility,
    /// Largest `‖F^l C − C F^l‖` and `‖F^l X_s − X_s F^l‖`.
    pub commutation_defect: f64,
    pub min_eigenvalue: f64,
}

impl ChannelAssembly {
    pub fn max_channel_residual(&self) -> f64 {
        self.channels.iter().map(|r| r.residual).fold(0.0, f64::max)
    }
}

/// Factorizes each channel on its own nest and assembles the block-diagonal
/// operator, nest, and factor. Probe seeds are `seed + l` for channel `l`.
pub fn channel_assembly(blocks: &[Operator], block_nests: &[Nest], opts: &FactorOptions, seed: u64) -> Result<ChannelAssembly> {
    if blocks.len() != block_nests.len() || blocks.is_empty() {
        return Err(Error::Parameter(format!(
            "{} channel operators for {} channel nests",
            blocks.len(),
            block_nests.len()
        )));
    }
    let nest = channel_nest(block_nests)?;
    let c = Operator::block_diagonal(blocks);
    let channels = blocks
        .iter()
        .zip(block_nests)
        .enumerate()
        .map(|(l, (b, bn))| canonical_factor(b, bn, opts, &ProbeSet::seeded(b.dim(), seed + l as u64)))
        .collect::<Result<Vec<_>>>()?;

    let v = Operator::block_diagonal(&channels.iter().map(|r| r.v.clone()).collect::<Vec<_>>());
    let d = Operator::block_diagonal(&channels.iter().map(|r| r.d().clone()).collect::<Vec<_>>());
    let residual = op_norm(&(&(&v.transpose() * &v) - &c));

    let mut shared: Vec<usize> = channels[0].partition().indices().to_vec();
    for r in &channels[1..] {
        shared.retain(|k| r.partition().indices().contains(k));
    }
    let shared = Partition::new(&nest, shared)?;
    let triangularity_defect = triangularity_defect_at(&v, &nest, &shared);

    let mut commutation_defect: f64 = 0.0;
    for f in nest.channel_projections() {
        let fm = f.matrix();
        commutation_defect = commutation_defect.max(spectral_norm(&(fm * c.matrix() - c.matrix() * fm)));
        for x in nest.projections() {
            let xm = x.matrix();
            commutation_defect = commutation_defect.max(spectral_norm(&(fm * xm - xm * fm)));
        }
    }
    let min_eigenvalue = sym_eig(&c)?.min();

    Ok(ChannelAssembly {
        admissibility: admissibility(&d, DEFAULT_RANK_TOL),
        c,
        nest,
        channels,
        v,
        d,
        residual,
        triangularity_defect,
        commutation_defect,
        min_eigenvalue,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nest::standard_nest;
    use approx::assert_abs_diff_eq;

    #[test]
    fn family_validation() {
        let i = Operator::identity(2);
        assert!(OperatorFamily::new("x", vec![2.0, 1.0], vec![i.clone(), i.clone()], i.clone()).is_err());
        assert!(OperatorFamily::new("x", vec![1.0], vec![Operator::identity(3)], i.clone()).is_err());
        assert!(OperatorFamily::new("x", vec![], vec![], i.clone()).is_err());
    }

    #[test]
    fn volterra_family_edges() {
        let fam = volterra_family(0.3, &[1.0, 2.0], 8).unwrap();
        assert_abs_diff_eq!(fam.members()[0].matrix(), &DMatrix::identity(8, 8), epsilon = 1e-15);
        assert!(volterra_family(1.0, &[2.0], 8).is_err());
        for m in fam.members() {
            assert!(sym_eig(m).unwrap().min() > 0.0);
        }
    }

    #[test]
    fn constant_family_regular() {
        let nest = standard_nest(6).unwrap();
        let c = volterra_operator(0.3, 6).unwrap();
        let fam = OperatorFamily::new("const", vec![1.0, 2.0], vec![c.clone(), c.clone()], c).unwrap();
        let r = regular_convergence_check(&fam, &nest, &ProbeSet::seeded(6, 0), 1e-6, DEFAULT_RANK_TOL).unwrap();
        assert!(r.rows.iter().all(|row| row.op_defect == 0.0 && row.proj_defect == 0.0));
        assert!(r.verdict.passed());
    }

    #[test]
    fn constant_family_harness() {
        let nest = standard_nest(8).unwrap();
        let c = volterra_operator(0.3, 8).unwrap();
        let fam = OperatorFamily::new("const", vec![2.0, 4.0], vec![c.clone(), c.clone()], c).unwrap();
        let r = theorem_harness(&fam, &nest, &HarnessOptions::default(), &ProbeSet::seeded(8, 0)).unwrap();
        for row in &r.rows {
            assert_eq!(row.max_pairing, Some(0.0));
        }
        assert!(r.verdict.passed());
    }

    #[test]
    fn proof_terms_identical_operators() {
        let nest = standard_nest(8).unwrap();
        let c = volterra_operator(0.3, 8).unwrap();
        let part = Partition::new(&nest, vec![0, 4, 8]).unwrap();
        let probes = ProbeSet::seeded(8, 1);
        let (f, g) = (probes.vector(0), probes.vector(1));
        let t = proof_term_decomposition(&c, &c, &nest, &part, &f, &g, &FactorOptions::default()).unwrap();
        assert_eq!(t.iii, 0.0);
        assert_eq!(t.iv, 0.0);
        assert_eq!(t.i, t.ii);
        assert!(t.bound_holds());

        let zero = DVector::zeros(8);
        let t = proof_term_decomposition(&c, &c, &nest, &part, &zero, &zero, &FactorOptions::default()).unwrap();
        assert_eq!(t, ProofTerms::default());
    }

    #[test]
    fn posdef_projection_examples() {
        let nest = standard_nest(4).unwrap();
        for k in 0..=4 {
            let p = posdef_projection(&Operator::identity(4), &nest, k).unwrap();
            assert_abs_diff_eq!(p.matrix(), nest.projection(k).matrix(), epsilon = 1e-14);
        }
        let c = Operator::from_diagonal(&[2.0, 0.5, 3.0, 7.0]).unwrap();
        for (k, p) in posdef_projections(&c, &nest).unwrap().iter().enumerate() {
            assert_abs_diff_eq!(p.matrix(), nest.projection(k).matrix(), epsilon = 1e-14);
            assert_eq!(p.rank(), k);
        }
        let singular = Operator::from_diagonal(&[1.0, 0.0, 1.0, 1.0]).unwrap();
        assert!(posdef_projection(&singular, &nest, 2).is_err());
    }

    #[test]
    fn singular_gram_reports_condition() {
        let nest = standard_nest(2).unwrap();
        let c = Operator::from_diagonal(&[1e-14, 1.0]).unwrap();
        match posdef_projection(&c, &nest, 2) {
            Err(Error::SingularGram { s, condition }) => {
                assert_eq!(s, 1.0);
                assert!(condition > GRAM_CONDITION_LIMIT);
            }
            other => panic!("expected SingularGram, got {other:?}"),
        }
    }

    #[test]
    fn counterexample_small_case() {
        let ce = counterexample_instance(2, 8).unwrap();
        assert_eq!(ce.psi_norm_sq, 2.0);
        // (P_2 φ₁, φ₁) = 1 − 1/(1 + 1) = 1/2
        let phi1 = basis_vector(8, 0);
        assert_abs_diff_eq!(ce.p_n.apply(&phi1).dot(&phi1), 0.5, epsilon = 1e-15);
        assert_eq!(ce.p.apply(&phi1).dot(&phi1), 0.0);
        assert!(ce.projection_agreement() <= 1e-10);
        assert!(ce.perturbation_norm() <= 2.0 / 2.0);
        assert!(ce.p_n.defects().within_contract());

        assert!(counterexample_instance(1, 8).is_err());
        assert!(counterexample_instance(8, 8).is_err());
    }

    #[test]
    fn channel_one_block_matches_factor() {
        let c = volterra_operator(0.3, 8).unwrap();
        let nest = standard_nest(8).unwrap();
        let opts = FactorOptions::default();
        let a = channel_assembly(&[c.clone()], &[nest.clone()], &opts, 5).unwrap();
        let r = canonical_factor(&c, &nest, &opts, &ProbeSet::seeded(8, 5)).unwrap();
        assert_eq!(a.v, r.v);
        assert_eq!(a.residual, r.residual);
    }

    #[test]
    fn channel_two_blocks_by_hand() {
        // diag(4,1) gives V = diag(4,1) with residual 12; diag(1,1) gives V = I
        let nest = standard_nest(2).unwrap();
        let blocks = [Operator::from_diagonal(&[4.0, 1.0]).unwrap(), Operator::identity(2)];
        let a = channel_assembly(&blocks, &[nest.clone(), nest], &FactorOptions::default(), 0).unwrap();
        assert_abs_diff_eq!(a.v.matrix(), Operator::from_diagonal(&[4.0, 1.0, 1.0, 1.0]).unwrap().matrix(), epsilon = 1e-14);
        assert_abs_diff_eq!(a.residual, 12.0, epsilon = 1e-10);
        assert_abs_diff_eq!(a.max_channel_residual(), 12.0, epsilon = 1e-10);
        assert_abs_diff_eq!(a.admissibility.isometry_defect, 3.0, epsilon = 1e-12);
        assert_eq!(a.commutation_defect, 0.0);
        assert!(a.triangularity_defect <= 1e-12);
        assert_abs_diff_eq!(a.min_eigenvalue, 1.0, epsilon = 1e-14);
    }
}
