//! The operator diagonal `D_W = ∫ dP_s W dX_s` via partition sums.
//!
//! For a partition `Ξ` the partial sum is `D^Ξ = Σ_k ΔP_{s_k} W ΔX_{s_k}`,
//! where `P_s` projects onto the closure of `W·F_s`. The diagonal itself is a
//! weak Riemann limit over refinements; [`diagonal`] follows a refinement
//! schedule and judges convergence with a Cauchy criterion on a probe set.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::nest::{increments, refine, Nest, Partition};
use crate::opcore::{op_norm, range_projection, spectral_norm, Operator, Projection, DEFAULT_RANK_TOL};
use crate::probes::ProbeSet;

/// Projections `P_s` onto `closure(W·F_s)`, one per nest grid point.
#[derive(Clone, Debug)]
pub struct ImageNest {
    projections: Vec<Projection>,
}

impl ImageNest {
    pub fn projections(&self) -> &[Projection] {
        &self.projections
    }

    pub fn projection(&self, index: usize) -> &Projection {
        &self.projections[index]
    }

    /// `ΔP_{s_k}` for each interval of the partition.
    pub fn increments(&self, part: &Partition) -> Vec<Projection> {
        part.indices()
            .windows(2)
            .map(|w| self.projections[w[1]].increment(&self.projections[w[0]]))
            .collect()
    }

    /// Largest `‖P_s W X_s − W X_s‖` over the grid.
    pub fn capture_defect(&self, w: &Operator, nest: &Nest) -> f64 {
        self.projections
            .iter()
            .zip(nest.projections())
            .map(|(p, x)| {
                let wx = w.matrix() * x.basis();
                spectral_norm(&(p.matrix() * &wx - &wx))
            })
            .fold(0.0, f64::max)
    }

    pub fn ranks_nondecreasing(&self) -> bool {
        self.projections.windows(2).all(|w| w[0].rank() <= w[1].rank())
    }
}

pub fn image_nest(w: &Operator, nest: &Nest, rank_tol: f64) -> Result<ImageNest> {
    if w.dim() != nest.dim() {
        return Err(Error::DimensionMismatch {
            expected: nest.dim(),
            found: w.dim(),
        });
    }
    let projections = nest
        .projections()
        .iter()
        .map(|x| range_projection(w, x, rank_tol))
        .collect::<Result<Vec<_>>>()?;
    Ok(ImageNest { projections })
}

/// `Σ_k ΔP_k W ΔX_k`, assembled from orthonormal bases of the increments.
pub fn partial_diagonal(w: &Operator, nest: &Nest, part: &Partition, img: &ImageNest) -> Operator {
    let n = w.dim();
    let mut d = DMatrix::zeros(n, n);
    for (dx, dp) in increments(nest, part).iter().zip(img.increments(part)) {
        if dx.rank() == 0 || dp.rank() == 0 {
            continue;
        }
        let (u, q) = (dx.basis(), dp.basis());
        let core = q.transpose() * w.matrix() * u;
        d += q * core * u.transpose();
    }
    Operator::from_matrix_unchecked(d)
}

/// `Σ_k ΔX_k Wᵀ ΔP_k`, the partial sum of the adjoint diagonal.
pub fn adjoint_diagonal(w: &Operator, nest: &Nest, part: &Partition, img: &ImageNest) -> Operator {
    let n = w.dim();
    let wt = w.matrix().transpose();
    let mut d = DMatrix::zeros(n, n);
    for (dx, dp) in increments(nest, part).iter().zip(img.increments(part)) {
        if dx.rank() == 0 || dp.rank() == 0 {
            continue;
        }
        let (u, q) = (dx.basis(), dp.basis());
        let core = u.transpose() * &wt * q;
        d += u * core * q.transpose();
    }
    Operator::from_matrix_unchecked(d)
}

/// Largest of `‖D X_s − P_s D‖` and `‖Dᵀ P_s − X_s Dᵀ‖` over the partition
/// points. Exact (up to round-off) for partial sums built on `part`.
pub fn check_intertwining(d: &Operator, nest: &Nest, img: &ImageNest, part: &Partition) -> f64 {
    let dm = d.matrix();
    let dt = dm.transpose();
    part.indices()
        .iter()
        .map(|&k| {
            let x = nest.projection(k).matrix();
            let p = img.projection(k).matrix();
            let forward = spectral_norm(&(dm * x - p * dm));
            let backward = spectral_norm(&(&dt * p - x * &dt));
            forward.max(backward)
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    /// Consecutive partial sums agree to `eps` on every probe pair.
    Converged,
    /// The Cauchy defect failed to decrease over three consecutive refinements.
    Diverged,
    /// The schedule or the grid ran out first.
    Exhausted,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Converged => "converged",
            Verdict::Diverged => "diverged",
            Verdict::Exhausted => "exhausted",
        }
    }
}

/// Refinements without decrease before declaring divergence.
pub const DIVERGENCE_PATIENCE: usize = 3;

#[derive(Clone, Debug)]
pub struct DiagonalOptions {
    /// Maximum number of refinements after the coarsest partition.
    pub schedule: usize,
    /// Cauchy tolerance; `None` means `1e-8·(1 + ‖W‖)`.
    pub eps: Option<f64>,
    pub rank_tol: f64,
    /// Record the intertwining defect of each partial sum.
    pub track_intertwining: bool,
}

impl Default for DiagonalOptions {
    fn default() -> Self {
        DiagonalOptions {
            schedule: 5,
            eps: None,
            rank_tol: DEFAULT_RANK_TOL,
            track_intertwining: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DiagonalStep {
    pub partition: Partition,
    pub sum: Operator,
    /// `max |((D^Ξ − D^Ξprev) f, h)|` over probe pairs; absent for the first step.
    pub cauchy_defect: Option<f64>,
    pub norm: f64,
    pub intertwining: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct DiagonalReport {
    pub steps: Vec<DiagonalStep>,
    pub verdict: Verdict,
    pub eps: f64,
    /// `‖W‖`
    pub source_norm: f64,
    pub image: ImageNest,
}

impl DiagonalReport {
    /// The accepted diagonal: the last partial sum unless the sums diverged.
    pub fn final_sum(&self) -> Option<&Operator> {
        match self.verdict {
            Verdict::Diverged => None,
            _ => Some(&self.last().sum),
        }
    }

    pub fn last(&self) -> &DiagonalStep {
        self.steps.last().expect("report has at least one step")
    }

    pub fn cauchy_history(&self) -> Vec<f64> {
        self.steps.iter().filter_map(|s| s.cauchy_defect).collect()
    }

    /// `‖D^Ξ‖ ≤ ‖W‖ + 1e-9` on every recorded step.
    pub fn norm_bound_holds(&self) -> bool {
        self.steps.iter().all(|s| s.norm <= self.source_norm + 1e-9)
    }
}

/// Follows the refinement schedule from the coarsest partition, stopping on
/// convergence, divergence, or exhaustion of the schedule or grid.
pub fn diagonal(w: &Operator, nest: &Nest, opts: &DiagonalOptions, probes: &ProbeSet) -> Result<DiagonalReport> {
    if probes.dim() != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            found: probes.dim(),
        });
    }
    let img = image_nest(w, nest, opts.rank_tol)?;
    let source_norm = op_norm(w);
    let eps = opts.eps.unwrap_or(1e-8 * (1.0 + source_norm));

    let make_step = |partition: Partition, prev: Option<&Operator>| {
        let sum = partial_diagonal(w, nest, &partition, &img);
        let cauchy_defect = prev.map(|p| probes.max_pairing(&(sum.matrix() - p.matrix())));
        let norm = op_norm(&sum);
        let intertwining = opts
            .track_intertwining
            .then(|| check_intertwining(&sum, nest, &img, &partition));
        DiagonalStep {
            partition,
            sum,
            cauchy_defect,
            norm,
            intertwining,
        }
    };

    let mut steps = vec![make_step(Partition::coarsest(nest), None)];
    let mut stalled = 0;
    let verdict = loop {
        let last = steps.last().expect("non-empty");
        if steps.len() > opts.schedule || last.partition.is_finest() {
            break Verdict::Exhausted;
        }
        let next = refine(&last.partition, nest);
        let prev_defect = last.cauchy_defect;
        let step = make_step(next, Some(&last.sum));
        let defect = step.cauchy_defect.expect("refined step has a defect");
        steps.push(step);
        if defect <= eps {
            break Verdict::Converged;
        }
        match prev_defect {
            Some(p) if defect >= p => stalled += 1,
            _ => stalled = 0,
        }
        if stalled >= DIVERGENCE_PATIENCE {
            break Verdict::Diverged;
        }
    };

    Ok(DiagonalReport {
        steps,
        verdict,
        eps,
        source_norm,
        image: img,
    })
}
