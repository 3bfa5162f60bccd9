//! Finite models of bordered nests and partitions of `[0, T]`.
//!
//! A nest is a monotone family of orthogonal projections `X_s` on an
//! ascending grid `0 = s_0 < … < s_m = T` with `X_0 = 0` and `X_T = I`.
//! Continuity cannot hold for a finite family; grid density stands in for it.
//! Partitions are subsets of the grid, so every increment `ΔX` is exact.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::opcore::{spectral_norm, Projection};

/// Tolerance used by [`validate`] and for comparing grid parameters.
pub const NEST_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NestKind {
    /// `X_{k/n}` projects onto the first `k` coordinates.
    Standard,
    /// Direct sum of standard nests sharing a grid.
    Channel,
    Explicit,
}

impl NestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NestKind::Standard => "standard",
            NestKind::Channel => "channel",
            NestKind::Explicit => "explicit",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Nest {
    horizon: f64,
    grid: Vec<f64>,
    projections: Vec<Projection>,
    kind: NestKind,
    /// Channel dimensions, in block order. One entry for non-channel nests.
    channels: Vec<usize>,
}

impl Nest {
    /// A nest from explicit projections. Only structural requirements are
    /// enforced here (matching lengths and dimensions, ascending grid from 0
    /// to `horizon`); the nest axioms are checked by [`validate`].
    pub fn explicit(horizon: f64, grid: Vec<f64>, projections: Vec<Projection>) -> Result<Nest> {
        check_grid(horizon, &grid)?;
        if grid.len() != projections.len() {
            return Err(Error::InvalidNest(format!(
                "{} grid points but {} projections",
                grid.len(),
                projections.len()
            )));
        }
        let dim = projections[0].dim();
        if let Some(bad) = projections.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.dim(),
            });
        }
        Ok(Nest {
            horizon,
            grid,
            projections,
            kind: NestKind::Explicit,
            channels: vec![dim],
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn projections(&self) -> &[Projection] {
        &self.projections
    }

    pub fn projection(&self, index: usize) -> &Projection {
        &self.projections[index]
    }

    pub fn kind(&self) -> NestKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.projections[0].dim()
    }

    /// Index of the last grid point.
    pub fn last_index(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn channel_dims(&self) -> &[usize] {
        &self.channels
    }

    /// Channel projections `F^l`, one per block. A non-channel nest has the
    /// single channel `I`.
    pub fn channel_projections(&self) -> Vec<Projection> {
        let dim = self.dim();
        let mut offset = 0;
        self.channels
            .iter()
            .map(|&d| {
                let p = Projection::coordinate(dim, offset, offset + d);
                offset += d;
                p
            })
            .collect()
    }

    /// Grid index of a parameter value, if it lies on the grid.
    pub fn index_of(&self, s: f64) -> Option<usize> {
        self.grid.iter().position(|&g| (g - s).abs() <= NEST_TOL * self.horizon.max(1.0))
    }

    /// Structured-text descriptor. Standard and channel nests are stored by
    /// parameters; explicit nests carry each projection as a CSV block.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "kind = {}", self.kind.as_str());
        let _ = writeln!(out, "horizon = {}", self.horizon);
        let _ = writeln!(out, "dim = {}", self.dim());
        if self.kind == NestKind::Channel {
            let _ = writeln!(out, "channels = {}", join(&self.channels));
        }
        let _ = writeln!(out, "grid = {}", join(&self.grid));
        if self.kind == NestKind::Explicit {
            for (k, p) in self.projections.iter().enumerate() {
                let _ = writeln!(out, "projection {k}");
                for i in 0..p.dim() {
                    let row: Vec<f64> = p.matrix().row(i).iter().copied().collect();
                    let _ = writeln!(out, "{}", join(&row));
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Nest> {
        let mut kind = None;
        let mut horizon = None;
        let mut dim = None;
        let mut channels = None;
        let mut grid: Option<Vec<f64>> = None;
        let mut blocks: Vec<DMatrix<f64>> = Vec::new();

        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .collect();
        let mut cursor = 0;
        while cursor < lines.len() {
            let (line, content) = lines[cursor];
            cursor += 1;
            if let Some(rest) = content.strip_prefix("projection") {
                let index: usize = rest.trim().parse().map_err(|_| parse_err(line, "bad projection index"))?;
                if index != blocks.len() {
                    return Err(parse_err(line, "projection blocks out of order"));
                }
                let n = dim.ok_or_else(|| parse_err(line, "dim must precede projection blocks"))?;
                if cursor + n > lines.len() {
                    return Err(parse_err(line, "truncated projection block"));
                }
                let mut m = DMatrix::zeros(n, n);
                for i in 0..n {
                    let (row_line, row) = lines[cursor + i];
                    let values = parse_list(row_line, row)?;
                    if values.len() != n {
                        return Err(parse_err(row_line, &format!("expected {n} values, found {}", values.len())));
                    }
                    for (j, v) in values.into_iter().enumerate() {
                        m[(i, j)] = v;
                    }
                }
                cursor += n;
                blocks.push(m);
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| parse_err(line, "expected `key = value`"))?;
            let value = value.trim();
            match key.trim() {
                "kind" => {
                    kind = Some(match value {
                        "standard" => NestKind::Standard,
                        "channel" => NestKind::Channel,
                        "explicit" => NestKind::Explicit,
                        other => return Err(parse_err(line, &format!("unknown nest kind `{other}`"))),
                    })
                }
                "horizon" => horizon = Some(parse_f64(line, value)?),
                "dim" => dim = Some(value.parse::<usize>().map_err(|_| parse_err(line, "bad dim"))?),
                "channels" => {
                    let dims = value
                        .split(',')
                        .map(|v| v.trim().parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| parse_err(line, "bad channel list"))?;
                    channels = Some(dims);
                }
                "grid" => grid = Some(parse_list(line, value)?),
                other => return Err(parse_err(line, &format!("unknown key `{other}`"))),
            }
        }

        let kind = kind.ok_or_else(|| Error::InvalidNest("missing `kind`".into()))?;
        let horizon = horizon.unwrap_or(1.0);
        let grid = grid.ok_or_else(|| Error::InvalidNest("missing `grid`".into()))?;
        let nest = match kind {
            NestKind::Standard => {
                let n = dim.ok_or_else(|| Error::InvalidNest("missing `dim`".into()))?;
                scaled(standard_nest(n)?, horizon)
            }
            NestKind::Channel => {
                let dims = channels.ok_or_else(|| Error::InvalidNest("missing `channels`".into()))?;
                let blocks = dims
                    .iter()
                    .map(|&d| standard_nest(d).map(|n| scaled(n, horizon)))
                    .collect::<Result<Vec<_>>>()?;
                channel_nest(&blocks)?
            }
            NestKind::Explicit => {
                let projections = blocks
                    .into_iter()
                    .map(Projection::from_matrix)
                    .collect::<Result<Vec<_>>>()?;
                return Nest::explicit(horizon, grid, projections);
            }
        };
        if nest.grid.len() != grid.len()
            || nest.grid.iter().zip(&grid).any(|(a, b)| (a - b).abs() > NEST_TOL)
        {
            return Err(Error::InvalidNest("grid does not match the nest parameters".into()));
        }
        Ok(nest)
    }
}

fn scaled(mut nest: Nest, horizon: f64) -> Nest {
    if horizon != nest.horizon {
        let factor = horizon / nest.horizon;
        for s in &mut nest.grid {
            *s *= factor;
        }
        nest.horizon = horizon;
    }
    nest
}

fn join(values: &[impl std::fmt::Display]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_err(line: usize, message: &str) -> Error {
    Error::Parse {
        line,
        message: message.to_string(),
    }
}

fn parse_f64(line: usize, value: &str) -> Result<f64> {
    value
        .trim()
        .parse::<f64>()
        .map_err(|_| parse_err(line, &format!("`{value}` is not a number")))
}

fn parse_list(line: usize, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|v| parse_f64(line, v)).collect()
}

fn check_grid(horizon: f64, grid: &[f64]) -> Result<()> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidNest(format!("horizon must be positive, got {horizon}")));
    }
    if grid.len() < 2 {
        return Err(Error::InvalidNest("grid needs at least the two border points".into()));
    }
    if grid[0] != 0.0 {
        return Err(Error::InvalidNest(format!("grid must start at 0, starts at {}", grid[0])));
    }
    if (grid[grid.len() - 1] - horizon).abs() > NEST_TOL * horizon.max(1.0) {
        return Err(Error::InvalidNest(format!(
            "grid must end at the horizon {horizon}, ends at {}",
            grid[grid.len() - 1]
        )));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidNest("grid must be strictly increasing".into()));
    }
    Ok(())
}

/// The coordinate nest on `R^n`: `T = 1`, `s_k = k/n`, and `X_{s_k}`
/// projects onto the first `k` coordinates.
pub fn standard_nest(n: usize) -> Result<Nest> {
    if n == 0 {
        return Err(Error::Parameter("standard nest needs n >= 1".into()));
    }
    let grid = (0..=n).map(|k| k as f64 / n as f64).collect();
    let projections = (0..=n).map(|k| Projection::coordinate(n, 0, k)).collect();
    Ok(Nest {
        horizon: 1.0,
        grid,
        projections,
        kind: NestKind::Standard,
        channels: vec![n],
    })
}

/// Direct-sum nest: `X_s` is the block-diagonal sum of the blocks' `X_s`.
pub fn channel_nest(blocks: &[Nest]) -> Result<Nest> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::InvalidNest("channel nest needs at least one block".into()))?;
    if blocks.len() == 1 {
        return Ok(first.clone());
    }
    for (b, block) in blocks.iter().enumerate().skip(1) {
        let same = block.grid.len() == first.grid.len()
            && (block.horizon - first.horizon).abs() <= NEST_TOL
            && block.grid.iter().zip(&first.grid).all(|(a, c)| (a - c).abs() <= NEST_TOL);
        if !same {
            return Err(Error::MismatchedGrids { block: b });
        }
    }
    let projections = (0..first.grid.len())
        .map(|k| {
            let parts: Vec<&Projection> = blocks.iter().map(|b| &b.projections[k]).collect();
            Projection::block_diagonal(&parts)
        })
        .collect();
    let all_standard = blocks.iter().all(|b| b.kind == NestKind::Standard);
    Ok(Nest {
        horizon: first.horizon,
        grid: first.grid.clone(),
        projections,
        kind: if all_standard { NestKind::Channel } else { NestKind::Explicit },
        channels: blocks.iter().map(Nest::dim).collect(),
    })
}

/// Defects of a nest against the bordered-nest axioms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NestDefects {
    /// `max(‖X_0‖, ‖X_T − I‖)`
    pub border: f64,
    /// Largest `‖X_{s_{i+1}} X_{s_i} − X_{s_i}‖` over consecutive grid points.
    /// For an exact chain this gives `X_{s_i} X_{s_j} = X_{s_min(i,j)}` for all pairs.
    pub monotonicity: f64,
    /// Largest `‖X² − X‖` or `‖X − Xᵀ‖` over the family.
    pub idempotence: f64,
    pub ranks_nondecreasing: bool,
}

impl NestDefects {
    pub fn passes(&self) -> bool {
        self.border <= NEST_TOL
            && self.monotonicity <= NEST_TOL
            && self.idempotence <= NEST_TOL
            && self.ranks_nondecreasing
    }
}

/// Report-only check of the nest axioms.
pub fn validate(nest: &Nest) -> NestDefects {
    let n = nest.dim();
    let first = nest.projections.first().expect("nest has projections");
    let last = nest.projections.last().expect("nest has projections");
    let border = spectral_norm(first.matrix()).max(spectral_norm(&(last.matrix() - DMatrix::identity(n, n))));

    let monotonicity = nest
        .projections
        .windows(2)
        .map(|w| {
            let (lo, hi) = (w[0].matrix(), w[1].matrix());
            spectral_norm(&(hi * lo - lo))
        })
        .fold(0.0, f64::max);

    let idempotence = nest
        .projections
        .iter()
        .map(|p| {
            let d = p.defects();
            d.idempotence.max(d.symmetry)
        })
        .fold(0.0, f64::max);

    let ranks_nondecreasing = nest.projections.windows(2).all(|w| w[0].rank() <= w[1].rank());

    NestDefects {
        border,
        monotonicity,
        idempotence,
        ranks_nondecreasing,
    }
}

/// A partition `0 = s_0 < … < s_N = T` drawn from the nest grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    indices: Vec<usize>,
    range: f64,
}

impl Partition {
    pub fn new(nest: &Nest, indices: Vec<usize>) -> Result<Partition> {
        let last = nest.last_index();
        if indices.first() != Some(&0) || indices.last() != Some(&last) {
            return Err(Error::InvalidPartition(format!(
                "partition must contain grid indices 0 and {last}"
            )));
        }
        if indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidPartition("indices must be strictly increasing".into()));
        }
        if indices.len() < 2 {
            return Err(Error::InvalidPartition("partition needs at least one interval".into()));
        }
        let range = max_gap(nest, &indices);
        Ok(Partition { indices, range })
    }

    /// `{0, T}`
    pub fn coarsest(nest: &Nest) -> Partition {
        Partition::new(nest, vec![0, nest.last_index()]).expect("border indices form a partition")
    }

    /// Every grid point.
    pub fn finest(nest: &Nest) -> Partition {
        Partition::new(nest, (0..=nest.last_index()).collect()).expect("full grid forms a partition")
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// `r^Ξ`, the largest gap between consecutive points.
    pub fn range(&self) -> f64 {
        self.range
    }

    /// Number of intervals.
    pub fn intervals(&self) -> usize {
        self.indices.len() - 1
    }

    pub fn points(&self, nest: &Nest) -> Vec<f64> {
        self.indices.iter().map(|&i| nest.grid[i]).collect()
    }

    pub fn is_finest(&self) -> bool {
        self.indices.windows(2).all(|w| w[1] == w[0] + 1)
    }
}

fn max_gap(nest: &Nest, indices: &[usize]) -> f64 {
    indices
        .windows(2)
        .map(|w| nest.grid[w[1]] - nest.grid[w[0]])
        .fold(0.0, f64::max)
}

/// `ΔX_{s_k} = X_{s_k} − X_{s_{k−1}}` for each interval of the partition.
pub fn increments(nest: &Nest, part: &Partition) -> Vec<Projection> {
    part.indices
        .windows(2)
        .map(|w| nest.projections[w[1]].increment(&nest.projections[w[0]]))
        .collect()
}

/// Inserts, into every interval that still contains interior grid points,
/// the grid point closest to the interval midpoint (lower index on ties).
pub fn refine(part: &Partition, nest: &Nest) -> Partition {
    let mut indices = Vec::with_capacity(2 * part.indices.len());
    for w in part.indices.windows(2) {
        let (a, b) = (w[0], w[1]);
        indices.push(a);
        if b > a + 1 {
            let mid = 0.5 * (nest.grid[a] + nest.grid[b]);
            let best = ((a + 1)..b)
                .min_by(|&x, &y| (nest.grid[x] - mid).abs().total_cmp(&(nest.grid[y] - mid).abs()))
                .expect("interval has interior points");
            indices.push(best);
        }
    }
    indices.push(*part.indices.last().expect("non-empty partition"));
    let range = max_gap(nest, &indices);
    Partition { indices, range }
}

/// The coarsest partition followed by `steps` successive refinements,
/// stopping early once the finest partition is reached.
pub fn refinement_schedule(nest: &Nest, steps: usize) -> Vec<Partition> {
    let mut out = vec![Partition::coarsest(nest)];
    for _ in 0..steps {
        let last = out.last().expect("schedule is non-empty");
        if last.is_finest() {
            break;
        }
        let next = refine(last, nest);
        out.push(next);
    }
    out
}
