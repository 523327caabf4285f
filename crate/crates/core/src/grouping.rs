//! Bipartite similarity grouping within one chunk.
//!
//! A chunk of `p` descriptions is split into destination and source sets.
//! Each source is matched to its most similar destination, and the
//! `floor(x * |src|)` sources with the strongest matches are merged into
//! their destination. Everything else passes through unchanged.

use thiserror::Error;

use crate::embed::SimilarityMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum GroupingError {
    #[error("similarity matrix is {actual:?}, expected {expected:?} (src x dst)")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("grouping ratio {0} outside [0, 1]")]
    InvalidRatio(f64),
}

/// Chunk-local indices of the two sides of the bipartite split, both ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitResult {
    pub dst_indices: Vec<usize>,
    pub src_indices: Vec<usize>,
}

/// Number of destinations for a chunk of `p` descriptions.
pub fn destination_count(p: usize, dst_ratio: f64) -> usize {
    if p < 2 {
        return 0;
    }
    let q = (p as f64 * dst_ratio).round();
    (q.max(1.0) as usize).min(p - 1)
}

/// Picks destinations spread evenly across the chunk, centered in equal strides.
///
/// Destination `j` of `q` sits at `floor((j + 0.5) * p / q)`. A single
/// description has no destination and bypasses grouping.
pub fn split(p: usize, dst_ratio: f64) -> SplitResult {
    if p < 2 {
        return SplitResult {
            dst_indices: Vec::new(),
            src_indices: (0..p).collect(),
        };
    }
    let q = destination_count(p, dst_ratio);
    let mut taken = vec![false; p];
    let mut dst = Vec::with_capacity(q);
    for j in 0..q {
        // integer form of floor((j + 0.5) * p / q)
        let idx = ((2 * j + 1) * p) / (2 * q);
        if !taken[idx] {
            taken[idx] = true;
            dst.push(idx);
        }
    }
    // Strides collide only if q >= p; top up with the lowest unused indices.
    let mut fill = 0;
    while dst.len() < q {
        while taken[fill] {
            fill += 1;
        }
        taken[fill] = true;
        dst.push(fill);
    }
    dst.sort_unstable();
    let src = (0..p).filter(|i| !taken[*i]).collect();
    SplitResult {
        dst_indices: dst,
        src_indices: src,
    }
}

/// A destination with the sources merged into it.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionGroup {
    pub dst_index: usize,
    /// Ascending chunk-local indices; never empty.
    pub src_indices: Vec<usize>,
    /// `similarities[k]` is the match score of `src_indices[k]`.
    pub similarities: Vec<f64>,
}

impl CaptionGroup {
    /// All members in temporal order, destination included.
    pub fn members(&self) -> Vec<usize> {
        let mut all = self.src_indices.clone();
        all.push(self.dst_index);
        all.sort_unstable();
        all
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    /// Non-empty groups ordered by destination index.
    pub groups: Vec<CaptionGroup>,
    /// Ungrouped sources and destinations without sources, ascending.
    pub pass_through: Vec<usize>,
}

impl Grouping {
    /// Descriptions left after merging: one per group plus every pass-through item.
    pub fn output_count(&self) -> usize {
        self.groups.len() + self.pass_through.len()
    }

    pub fn grouped_sources(&self) -> usize {
        self.groups.iter().map(|g| g.src_indices.len()).sum()
    }
}

/// `floor(x * n)`, robust to representation error in `x`.
pub fn grouped_count(x: f64, n: usize) -> usize {
    ((x * n as f64) + 1e-9).floor().max(0.0) as usize
}

/// Matches every source to its best destination and merges the top fraction `x`.
///
/// Row `r` of `sim` belongs to `split.src_indices[r]`, column `c` to
/// `split.dst_indices[c]`. Argmax ties go to the lower destination; ranking
/// ties go to the lower source index.
pub fn match_and_group(
    sim: &SimilarityMatrix,
    split: &SplitResult,
    x: f64,
) -> Result<Grouping, GroupingError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(GroupingError::InvalidRatio(x));
    }
    let n_src = split.src_indices.len();
    let n_dst = split.dst_indices.len();
    if n_dst == 0 {
        return Ok(Grouping {
            groups: Vec::new(),
            pass_through: split.src_indices.clone(),
        });
    }
    if sim.shape() != (n_src, n_dst) {
        return Err(GroupingError::ShapeMismatch {
            expected: (n_src, n_dst),
            actual: sim.shape(),
        });
    }

    // (row, best column, best similarity)
    let mut best: Vec<(usize, usize, f64)> = (0..n_src)
        .map(|r| {
            let row = sim.row(r);
            let mut arg = 0;
            for c in 1..n_dst {
                if row[c] > row[arg] {
                    arg = c;
                }
            }
            (r, arg, row[arg])
        })
        .collect();
    best.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    let g = grouped_count(x, n_src);

    let mut members: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_dst];
    let mut grouped = vec![false; n_src];
    for &(row, col, s) in &best[..g] {
        members[col].push((split.src_indices[row], s));
        grouped[row] = true;
    }

    let mut groups = Vec::new();
    let mut pass_through: Vec<usize> = split
        .src_indices
        .iter()
        .zip(&grouped)
        .filter(|(_, g)| !**g)
        .map(|(i, _)| *i)
        .collect();
    for (col, mut m) in members.into_iter().enumerate() {
        let dst_index = split.dst_indices[col];
        if m.is_empty() {
            pass_through.push(dst_index);
            continue;
        }
        m.sort_by_key(|(i, _)| *i);
        groups.push(CaptionGroup {
            dst_index,
            src_indices: m.iter().map(|(i, _)| *i).collect(),
            similarities: m.iter().map(|(_, s)| *s).collect(),
        });
    }
    pass_through.sort_unstable();
    Ok(Grouping {
        groups,
        pass_through,
    })
}
