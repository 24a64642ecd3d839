//! Grayscale BM3D: block matching, collaborative hard thresholding and
//! collaborative Wiener filtering with weighted aggregation.
//!
//! Reference blocks are processed in parallel, but every group estimate is
//! aggregated in reference-grid order, so the output does not depend on the
//! number of worker threads.

mod transform;

pub use transform::{
    bior15_matrix, dct_matrix, stack_forward, stack_inverse, BlockTransform, Transform1d,
    Transform2d,
};

use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plane::Plane;

/// References per aggregation batch; bounds memory held by pending estimates.
const BATCH: usize = 512;

/// Tuning constants for both BM3D stages.
///
/// Intensities are in `[0, 1]` units; the match thresholds are mean squared
/// differences per pixel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseProfile {
    pub block_size: usize,
    /// Stride between reference blocks.
    pub step: usize,
    /// Side of the square search window centered on the reference block.
    pub search_window: usize,
    pub max_group_ht: usize,
    pub max_group_wie: usize,
    pub match_threshold_ht: f64,
    pub match_threshold_wie: f64,
    /// Hard threshold multiplier for stage 1.
    pub lambda_3d: f64,
    /// Threshold multiplier for the prefiltered stage-1 matching.
    pub lambda_2d: f64,
    /// Stage-1 matching switches to prefiltered transform coefficients when the
    /// channel sigma exceeds this.
    pub prefilter_sigma: f64,
    pub transform_2d: Transform2d,
    pub transform_1d: Transform1d,
    /// Kaiser window shape for aggregation; 0 gives a flat window.
    pub kaiser_beta: f64,
}

impl Default for DenoiseProfile {
    fn default() -> Self {
        Self {
            block_size: 8,
            step: 3,
            search_window: 39,
            max_group_ht: 16,
            max_group_wie: 32,
            match_threshold_ht: 2500.0 / (255.0 * 255.0),
            match_threshold_wie: 400.0 / (255.0 * 255.0),
            lambda_3d: 2.7,
            lambda_2d: 2.0,
            prefilter_sigma: 0.1,
            transform_2d: Transform2d::Dct,
            transform_1d: Transform1d::Haar,
            kaiser_beta: 2.0,
        }
    }
}

impl DenoiseProfile {
    /// Cheaper settings for inner loops such as matrix optimization:
    /// sparser reference grid, smaller window and groups.
    pub fn fast() -> Self {
        Self {
            step: 4,
            search_window: 21,
            max_group_ht: 8,
            max_group_wie: 16,
            ..Self::default()
        }
    }

    /// The same profile expressed in intensity units scaled by `k`: absolute
    /// thresholds on intensities or squared intensities co-scale.
    pub fn rescaled(&self, k: f64) -> Self {
        Self {
            match_threshold_ht: self.match_threshold_ht * k * k,
            match_threshold_wie: self.match_threshold_wie * k * k,
            prefilter_sigma: self.prefilter_sigma * k,
            ..self.clone()
        }
    }

    /// Checks the profile against an image of `width x height`.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let bs = self.block_size;
        if bs < 4 || bs > width.min(height) {
            return Err(Error::validation(format!(
                "block size {bs} must be in [4, {}]",
                width.min(height)
            )));
        }
        if self.step == 0 {
            return Err(Error::validation("reference step must be >= 1"));
        }
        if self.search_window < bs {
            return Err(Error::validation(format!(
                "search window {} is smaller than the block size {bs}",
                self.search_window
            )));
        }
        for (name, g) in [("max_group_ht", self.max_group_ht), ("max_group_wie", self.max_group_wie)] {
            if !g.is_power_of_two() {
                return Err(Error::validation(format!("{name} = {g} is not a power of two")));
            }
        }
        if self.transform_2d == Transform2d::Bior15 && !bs.is_power_of_two() {
            return Err(Error::validation("bior1.5 needs a power-of-two block size"));
        }
        for (name, v) in [
            ("match_threshold_ht", self.match_threshold_ht),
            ("match_threshold_wie", self.match_threshold_wie),
            ("lambda_3d", self.lambda_3d),
            ("lambda_2d", self.lambda_2d),
            ("kaiser_beta", self.kaiser_beta),
        ] {
            if !(v >= 0.0) {
                return Err(Error::validation(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Which BM3D stage a grouping or filtering step belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    HardThreshold,
    Wiener,
}

impl Stage {
    fn max_group(self, p: &DenoiseProfile) -> usize {
        match self {
            Stage::HardThreshold => p.max_group_ht,
            Stage::Wiener => p.max_group_wie,
        }
    }

    fn threshold(self, p: &DenoiseProfile) -> f64 {
        match self {
            Stage::HardThreshold => p.match_threshold_ht,
            Stage::Wiener => p.match_threshold_wie,
        }
    }
}

/// Blocks similar to one reference block, best match first.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGroup {
    /// Top-left `(row, col)` of the reference block.
    pub reference: (usize, usize),
    /// Top-left corners, sorted by distance; the reference comes first.
    pub members: Vec<(usize, usize)>,
    pub distances: Vec<f64>,
}

impl BlockGroup {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Reference coordinates along one axis: every `step` pixels, plus the last
/// block that touches the edge.
pub fn grid_axis(extent: usize, block_size: usize, step: usize) -> Vec<usize> {
    let last = extent - block_size;
    let mut v: Vec<usize> = (0..=last).step_by(step).collect();
    if *v.last().expect("non-empty") != last {
        v.push(last);
    }
    v
}

/// Row-major reference grid of a `width x height` plane.
pub fn reference_grid(width: usize, height: usize, profile: &DenoiseProfile) -> Vec<(usize, usize)> {
    let rows = grid_axis(height, profile.block_size, profile.step);
    let cols = grid_axis(width, profile.block_size, profile.step);
    rows.iter().flat_map(|&r| cols.iter().map(move |&c| (r, c))).collect()
}

/// Range of block origins within the search window around `origin`.
fn window_range(origin: usize, extent: usize, profile: &DenoiseProfile) -> std::ops::RangeInclusive<usize> {
    let half = profile.search_window / 2;
    let last = extent - profile.block_size;
    origin.saturating_sub(half)..=(origin + half).min(last)
}

/// Keeps the closest candidates, puts the reference first and truncates to a
/// power of two.
fn finish_group(
    reference: (usize, usize),
    mut candidates: Vec<(f64, usize, usize)>,
    max_group: usize,
) -> BlockGroup {
    let order = |a: &(f64, usize, usize), b: &(f64, usize, usize)| {
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    };
    let keep = max_group - 1;
    if candidates.len() > keep {
        if keep > 0 {
            candidates.select_nth_unstable_by(keep - 1, order);
        }
        candidates.truncate(keep);
    }
    candidates.sort_unstable_by(order);
    let total = candidates.len() + 1;
    let len = 1usize << (usize::BITS - 1 - total.leading_zeros());
    let mut members = Vec::with_capacity(len);
    let mut distances = Vec::with_capacity(len);
    members.push(reference);
    distances.push(0.0);
    for &(d, r, c) in candidates.iter().take(len - 1) {
        members.push((r, c));
        distances.push(d);
    }
    BlockGroup {
        reference,
        members,
        distances,
    }
}

/// Bounded set of the closest candidates seen so far.
///
/// Candidates arrive in row-major order, so a later candidate at an equal
/// distance loses the `(distance, row, col)` tie-break and a strict `<`
/// against [`Nearest::cutoff`] is exact.
struct Nearest {
    keep: usize,
    threshold: f64,
    heap: BinaryHeap<Candidate>,
}

#[derive(PartialEq)]
struct Candidate(f64, usize, usize);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1)).then(self.2.cmp(&other.2))
    }
}

impl Nearest {
    fn new(keep: usize, threshold: f64) -> Self {
        Self {
            keep,
            threshold,
            heap: BinaryHeap::with_capacity(keep + 1),
        }
    }

    /// Distances at or above this can no longer enter the set.
    #[inline]
    fn cutoff(&self) -> f64 {
        if self.keep == 0 {
            return f64::NEG_INFINITY;
        }
        match self.heap.peek() {
            Some(worst) if self.heap.len() == self.keep => worst.0.min(self.threshold),
            _ => self.threshold,
        }
    }

    fn push(&mut self, d: f64, r: usize, c: usize) {
        self.heap.push(Candidate(d, r, c));
        if self.heap.len() > self.keep {
            self.heap.pop();
        }
    }

    fn into_vec(self) -> Vec<(f64, usize, usize)> {
        self.heap.into_iter().map(|Candidate(d, r, c)| (d, r, c)).collect()
    }
}

/// Mean squared difference of two blocks, or `None` once it reaches `cutoff`.
#[inline]
fn pixel_distance(plane: &Plane, a: (usize, usize), b: (usize, usize), bs: usize, cutoff: f64) -> Option<f64> {
    let w = plane.width();
    let data = plane.as_slice();
    let norm = (bs * bs) as f64;
    let mut sum = 0.0;
    for i in 0..bs {
        let ra = &data[(a.0 + i) * w + a.1..][..bs];
        let rb = &data[(b.0 + i) * w + b.1..][..bs];
        for (x, y) in ra.iter().zip(rb) {
            let d = x - y;
            sum += d * d;
        }
        if sum / norm >= cutoff {
            return None;
        }
    }
    Some(sum / norm)
}

/// Finds blocks similar to the one at `reference` by mean squared difference
/// of pixels.
pub fn block_match(plane: &Plane, reference: (usize, usize), profile: &DenoiseProfile, stage: Stage) -> BlockGroup {
    if profile.block_size == 8 {
        return block_match_sized::<8>(plane, reference, profile, stage);
    }
    let bs = profile.block_size;
    let mut best = Nearest::new(stage.max_group(profile) - 1, stage.threshold(profile));
    for r in window_range(reference.0, plane.height(), profile) {
        for c in window_range(reference.1, plane.width(), profile) {
            if (r, c) == reference {
                continue;
            }
            if let Some(d) = pixel_distance(plane, reference, (r, c), bs, best.cutoff()) {
                best.push(d, r, c);
            }
        }
    }
    finish_group(reference, best.into_vec(), stage.max_group(profile))
}

/// Squared distance accumulated per column lane so the inner loop vectorizes.
/// Lane sums only grow, so stopping once their total reaches `limit` never
/// rejects a block whose full distance is below it.
#[inline]
fn lane_distance<const N: usize>(a: &[[f64; N]; N], rows: impl Fn(usize) -> [f64; N], limit: f64) -> Option<f64> {
    let mut acc = [0.0; N];
    for (i, ra) in a.iter().enumerate() {
        let rb = rows(i);
        for j in 0..N {
            let d = ra[j] - rb[j];
            acc[j] += d * d;
        }
        if i % 2 == 1 && acc.iter().sum::<f64>() >= limit {
            return None;
        }
    }
    let sum: f64 = acc.iter().sum();
    (sum < limit).then_some(sum)
}

fn block_match_sized<const N: usize>(
    plane: &Plane,
    reference: (usize, usize),
    profile: &DenoiseProfile,
    stage: Stage,
) -> BlockGroup {
    let w = plane.width();
    let data = plane.as_slice();
    let row_at = |r: usize, c: usize| -> [f64; N] { data[r * w + c..][..N].try_into().expect("row of N") };
    let mut a = [[0.0; N]; N];
    for (i, row) in a.iter_mut().enumerate() {
        *row = row_at(reference.0 + i, reference.1);
    }
    let norm = (N * N) as f64;
    let mut best = Nearest::new(stage.max_group(profile) - 1, stage.threshold(profile));
    for r in window_range(reference.0, plane.height(), profile) {
        for c in window_range(reference.1, w, profile) {
            if (r, c) == reference {
                continue;
            }
            // `norm` is a power of two, so scaling the cutoff is exact.
            if let Some(sum) = lane_distance(&a, |i| row_at(r + i, c), best.cutoff() * norm) {
                best.push(sum / norm, r, c);
            }
        }
    }
    finish_group(reference, best.into_vec(), stage.max_group(profile))
}

/// 2D transform coefficients of every block position in a plane.
struct PatchTable {
    cols: usize,
    k: usize,
    coeffs: Vec<f64>,
}

impl PatchTable {
    fn build(plane: &Plane, t: &BlockTransform) -> Self {
        match t.size() {
            8 => Self::build_sized::<8>(plane, t),
            _ => Self::build_generic(plane, t),
        }
    }

    fn build_generic(plane: &Plane, t: &BlockTransform) -> Self {
        let n = t.size();
        let k = n * n;
        let rows = plane.height() - n + 1;
        let cols = plane.width() - n + 1;
        let mut coeffs = vec![0.0; rows * cols * k];
        coeffs.par_chunks_mut(cols * k).enumerate().for_each(|(r, out)| {
            let mut block = vec![0.0; k];
            let mut tmp = vec![0.0; k];
            for c in 0..cols {
                for i in 0..n {
                    block[i * n..(i + 1) * n].copy_from_slice(&plane.row(r + i)[c..c + n]);
                }
                t.forward(&block, &mut tmp, &mut out[c * k..(c + 1) * k]);
            }
        });
        Self { cols, k, coeffs }
    }

    /// Separable build: every horizontal `N`-segment is transformed once,
    /// then each block combines `N` of those down the columns.
    fn build_sized<const N: usize>(plane: &Plane, t: &BlockTransform) -> Self {
        let k = N * N;
        let m = t.analysis_matrix();
        // Transposed so both passes are row-wise multiply-adds.
        let mut mt = [[0.0; N]; N];
        for (u, row) in m.chunks(N).enumerate() {
            for (i, &v) in row.iter().enumerate() {
                mt[i][u] = v;
            }
        }
        let (w, h) = plane.dims();
        let rows = h - N + 1;
        let cols = w - N + 1;
        let mut horizontal = vec![0.0; h * cols * N];
        horizontal.par_chunks_mut(cols * N).enumerate().for_each(|(r, out)| {
            let src = plane.row(r);
            for c in 0..cols {
                let mut acc = [0.0; N];
                for (j, mrow) in mt.iter().enumerate() {
                    let x = src[c + j];
                    for v in 0..N {
                        acc[v] += x * mrow[v];
                    }
                }
                out[c * N..(c + 1) * N].copy_from_slice(&acc);
            }
        });
        let mut coeffs = vec![0.0; rows * cols * k];
        coeffs.par_chunks_mut(cols * k).enumerate().for_each(|(r, out)| {
            for c in 0..cols {
                let mut segs = [[0.0; N]; N];
                for (i, seg) in segs.iter_mut().enumerate() {
                    seg.copy_from_slice(&horizontal[((r + i) * cols + c) * N..][..N]);
                }
                for u in 0..N {
                    let mut acc = [0.0; N];
                    for (i, seg) in segs.iter().enumerate() {
                        let mui = m[u * N + i];
                        for v in 0..N {
                            acc[v] += mui * seg[v];
                        }
                    }
                    out[c * k + u * N..c * k + (u + 1) * N].copy_from_slice(&acc);
                }
            }
        });
        Self { cols, k, coeffs }
    }

    #[inline]
    fn get(&self, (r, c): (usize, usize)) -> &[f64] {
        let i = (r * self.cols + c) * self.k;
        &self.coeffs[i..i + self.k]
    }

    /// Copy with coefficients below `threshold · gain` zeroed.
    fn thresholded(&self, threshold: f64, gains: &[f64]) -> Self {
        let mut coeffs = self.coeffs.clone();
        for block in coeffs.chunks_mut(self.k) {
            for (v, g) in block.iter_mut().zip(gains) {
                if v.abs() < threshold * g {
                    *v = 0.0;
                }
            }
        }
        Self {
            cols: self.cols,
            k: self.k,
            coeffs,
        }
    }

    fn distance(&self, a: (usize, usize), b: (usize, usize), cutoff: f64) -> Option<f64> {
        let norm = self.k as f64;
        let mut sum = 0.0;
        for (xa, xb) in self.get(a).chunks(8).zip(self.get(b).chunks(8)) {
            for (x, y) in xa.iter().zip(xb) {
                sum += (x - y) * (x - y);
            }
            if sum / norm >= cutoff {
                return None;
            }
        }
        Some(sum / norm)
    }
}

fn match_in_table(
    table: &PatchTable,
    dims: (usize, usize),
    reference: (usize, usize),
    profile: &DenoiseProfile,
    stage: Stage,
) -> BlockGroup {
    if table.k == 64 {
        let coeffs = |p: (usize, usize)| -> [[f64; 8]; 8] {
            let s = table.get(p);
            std::array::from_fn(|i| s[i * 8..(i + 1) * 8].try_into().expect("row of 8"))
        };
        let a = coeffs(reference);
        let mut best = Nearest::new(stage.max_group(profile) - 1, stage.threshold(profile));
        for r in window_range(reference.0, dims.1, profile) {
            for c in window_range(reference.1, dims.0, profile) {
                if (r, c) == reference {
                    continue;
                }
                let b = table.get((r, c));
                let row = |i: usize| -> [f64; 8] { b[i * 8..(i + 1) * 8].try_into().expect("row of 8") };
                if let Some(sum) = lane_distance(&a, row, best.cutoff() * 64.0) {
                    best.push(sum / 64.0, r, c);
                }
            }
        }
        return finish_group(reference, best.into_vec(), stage.max_group(profile));
    }
    let mut best = Nearest::new(stage.max_group(profile) - 1, stage.threshold(profile));
    for r in window_range(reference.0, dims.1, profile) {
        for c in window_range(reference.1, dims.0, profile) {
            if (r, c) == reference {
                continue;
            }
            if let Some(d) = table.distance(reference, (r, c), best.cutoff()) {
                best.push(d, r, c);
            }
        }
    }
    finish_group(reference, best.into_vec(), stage.max_group(profile))
}

/// Groups for every reference block of `plane`.
///
/// Stage-1 matching on a noisy channel with `sigma > profile.prefilter_sigma`
/// compares hard-thresholded 2D coefficients instead of raw pixels.
pub fn compute_groups(plane: &Plane, sigma: f64, profile: &DenoiseProfile, stage: Stage) -> Result<Vec<BlockGroup>> {
    profile.validate(plane.width(), plane.height())?;
    let grid = reference_grid(plane.width(), plane.height(), profile);
    if stage == Stage::HardThreshold && sigma > profile.prefilter_sigma {
        let t = BlockTransform::new(profile.transform_2d, profile.block_size)?;
        let table = PatchTable::build(plane, &t).thresholded(profile.lambda_2d * sigma, t.gains());
        Ok(grid
            .par_iter()
            .map(|&r| match_in_table(&table, plane.dims(), r, profile, stage))
            .collect())
    } else {
        Ok(grid.par_iter().map(|&r| block_match(plane, r, profile, stage)).collect())
    }
}

fn check_groups(groups: &[BlockGroup], plane: &Plane, profile: &DenoiseProfile, max_group: usize) -> Result<()> {
    let grid = reference_grid(plane.width(), plane.height(), profile);
    if groups.len() != grid.len() {
        return Err(Error::validation(format!(
            "expected {} groups for this plane, got {}",
            grid.len(),
            groups.len()
        )));
    }
    let bs = profile.block_size;
    for (g, &r) in groups.iter().zip(&grid) {
        if g.reference != r || g.members.first() != Some(&r) {
            return Err(Error::validation("groups do not follow the reference grid"));
        }
        if g.members.len() > max_group || !g.members.len().is_power_of_two() {
            return Err(Error::validation(format!("group of {} blocks is not allowed", g.members.len())));
        }
        if g.members.iter().any(|&(r, c)| r + bs > plane.height() || c + bs > plane.width()) {
            return Err(Error::validation("group member lies outside the plane"));
        }
    }
    Ok(())
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Separable Kaiser window of side `n`.
pub fn kaiser_window(n: usize, beta: f64) -> Vec<f64> {
    let w1: Vec<f64> = (0..n)
        .map(|i| {
            if n == 1 {
                return 1.0;
            }
            let x = 2.0 * i as f64 / (n - 1) as f64 - 1.0;
            bessel_i0(beta * (1.0 - x * x).max(0.0).sqrt()) / bessel_i0(beta)
        })
        .collect();
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            w[i * n + j] = w1[i] * w1[j];
        }
    }
    w
}

/// Estimated blocks for one group and the group's aggregation weight.
struct GroupEstimate {
    blocks: Vec<f64>,
    weight: f64,
}

struct Scratch {
    group: Vec<f64>,
    pilot: Vec<f64>,
    stack: Vec<f64>,
    tmp: Vec<f64>,
}

impl Scratch {
    fn new() -> Self {
        Self {
            group: Vec::new(),
            pilot: Vec::new(),
            stack: Vec::new(),
            tmp: Vec::new(),
        }
    }
}

fn gather(table: &PatchTable, members: &[(usize, usize)], out: &mut Vec<f64>) {
    out.clear();
    for &m in members {
        out.extend_from_slice(table.get(m));
    }
}

fn invert_group(t: &BlockTransform, profile: &DenoiseProfile, s: &mut Scratch, len: usize) -> Vec<f64> {
    let k = t.size() * t.size();
    stack_inverse(profile.transform_1d, &mut s.group, len, k, &mut s.stack);
    let mut blocks = vec![0.0; len * k];
    s.tmp.resize(k, 0.0);
    for m in 0..len {
        t.inverse(&s.group[m * k..(m + 1) * k], &mut s.tmp, &mut blocks[m * k..(m + 1) * k]);
    }
    blocks
}

fn hard_threshold_group(
    table: &PatchTable,
    group: &BlockGroup,
    t: &BlockTransform,
    sigma: f64,
    profile: &DenoiseProfile,
    s: &mut Scratch,
) -> GroupEstimate {
    let k = t.size() * t.size();
    let len = group.len();
    gather(table, &group.members, &mut s.group);
    stack_forward(profile.transform_1d, &mut s.group, len, k, &mut s.stack);
    let threshold = profile.lambda_3d * sigma;
    let mut retained = 0usize;
    for block in s.group.chunks_mut(k) {
        for (v, g) in block.iter_mut().zip(t.gains()) {
            if v.abs() < threshold * g {
                *v = 0.0;
            } else if *v != 0.0 {
                retained += 1;
            }
        }
    }
    let blocks = invert_group(t, profile, s, len);
    // 1/(σ²·N); σ² is common to every group of the plane and cancels
    let weight = if retained > 0 { 1.0 / retained as f64 } else { 1.0 };
    GroupEstimate { blocks, weight }
}

fn wiener_group(
    noisy: &PatchTable,
    pilot: &PatchTable,
    group: &BlockGroup,
    t: &BlockTransform,
    sigma: f64,
    profile: &DenoiseProfile,
    s: &mut Scratch,
) -> GroupEstimate {
    let k = t.size() * t.size();
    let len = group.len();
    gather(noisy, &group.members, &mut s.group);
    gather(pilot, &group.members, &mut s.pilot);
    stack_forward(profile.transform_1d, &mut s.group, len, k, &mut s.stack);
    stack_forward(profile.transform_1d, &mut s.pilot, len, k, &mut s.stack);
    let var = sigma * sigma;
    let mut energy = 0.0;
    for (nb, pb) in s.group.chunks_mut(k).zip(s.pilot.chunks(k)) {
        for ((v, &b), g) in nb.iter_mut().zip(pb).zip(t.gains()) {
            let w = if var == 0.0 {
                1.0
            } else {
                let b2 = b * b;
                b2 / (b2 + var * g * g)
            };
            *v *= w;
            energy += w * w;
        }
    }
    let blocks = invert_group(t, profile, s, len);
    // 1/(σ²·ΣW²) with the plane-wide σ² dropped
    let weight = if energy > 0.0 { 1.0 / energy } else { 1.0 };
    GroupEstimate { blocks, weight }
}

/// Filters every group and aggregates the block estimates into a plane.
fn filter_and_aggregate(
    dims: (usize, usize),
    groups: &[BlockGroup],
    profile: &DenoiseProfile,
    filter: impl Fn(&BlockGroup, &mut Scratch) -> GroupEstimate + Sync,
) -> Result<Plane> {
    let (w, h) = dims;
    let bs = profile.block_size;
    let window = kaiser_window(bs, profile.kaiser_beta);
    let mut num = vec![0.0; w * h];
    let mut den = vec![0.0; w * h];
    for batch in groups.chunks(BATCH) {
        let estimates: Vec<GroupEstimate> = batch
            .par_iter()
            .map_init(Scratch::new, |s, g| filter(g, s))
            .collect();
        for (g, est) in batch.iter().zip(&estimates) {
            for (m, &(r, c)) in g.members.iter().enumerate() {
                let block = &est.blocks[m * bs * bs..(m + 1) * bs * bs];
                for i in 0..bs {
                    let base = (r + i) * w + c;
                    for j in 0..bs {
                        let wk = est.weight * window[i * bs + j];
                        num[base + j] += wk * block[i * bs + j];
                        den[base + j] += wk;
                    }
                }
            }
        }
    }
    if den.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::Internal("reference grid left pixels uncovered".into()));
    }
    let data = num.iter().zip(&den).map(|(n, d)| n / d).collect();
    Plane::new(w, h, data)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::validation(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    Ok(())
}

fn resolve_groups(
    given: Option<&[BlockGroup]>,
    plane: &Plane,
    guide: &Plane,
    sigma: f64,
    profile: &DenoiseProfile,
    stage: Stage,
) -> Result<Vec<BlockGroup>> {
    match given {
        Some(g) => {
            check_groups(g, plane, profile, stage.max_group(profile))?;
            Ok(g.to_vec())
        }
        None => compute_groups(guide, sigma, profile, stage),
    }
}

fn run_stage1(noisy: &PatchTable, dims: (usize, usize), groups: &[BlockGroup], t: &BlockTransform, sigma: f64, profile: &DenoiseProfile) -> Result<Plane> {
    filter_and_aggregate(dims, groups, profile, |g, s| hard_threshold_group(noisy, g, t, sigma, profile, s))
}

fn run_stage2(
    noisy: &PatchTable,
    basic: &Plane,
    groups: &[BlockGroup],
    t: &BlockTransform,
    sigma: f64,
    profile: &DenoiseProfile,
) -> Result<Plane> {
    let pilot = PatchTable::build(basic, t);
    filter_and_aggregate(basic.dims(), groups, profile, |g, s| wiener_group(noisy, &pilot, g, t, sigma, profile, s))
}

/// Stage 1: collaborative hard thresholding.
///
/// Groups are computed on `noisy` unless `groups_in` is given, in which case
/// they are reused unchanged and returned as `groups_out`.
pub fn stage1_hard_threshold(
    noisy: &Plane,
    sigma: f64,
    profile: &DenoiseProfile,
    groups_in: Option<&[BlockGroup]>,
) -> Result<(Plane, Vec<BlockGroup>)> {
    check_sigma(sigma)?;
    profile.validate(noisy.width(), noisy.height())?;
    let groups = resolve_groups(groups_in, noisy, noisy, sigma, profile, Stage::HardThreshold)?;
    let t = BlockTransform::new(profile.transform_2d, profile.block_size)?;
    let table = PatchTable::build(noisy, &t);
    let basic = run_stage1(&table, noisy.dims(), &groups, &t, sigma, profile)?;
    Ok((basic, groups))
}

/// Stage 2: collaborative Wiener filtering of `noisy` guided by `basic`.
///
/// Groups are computed on the basic estimate unless `groups_in` is given.
pub fn stage2_wiener(
    noisy: &Plane,
    basic: &Plane,
    sigma: f64,
    profile: &DenoiseProfile,
    groups_in: Option<&[BlockGroup]>,
) -> Result<(Plane, Vec<BlockGroup>)> {
    check_sigma(sigma)?;
    noisy.check_same_dims(basic)?;
    profile.validate(noisy.width(), noisy.height())?;
    let groups = resolve_groups(groups_in, noisy, basic, sigma, profile, Stage::Wiener)?;
    let t = BlockTransform::new(profile.transform_2d, profile.block_size)?;
    let table = PatchTable::build(noisy, &t);
    let out = run_stage2(&table, basic, &groups, &t, sigma, profile)?;
    Ok((out, groups))
}

/// Both stages and the groups they used, building the noisy coefficient
/// table once. Same result as calling the two stages in turn.
pub(crate) struct TwoStage {
    pub estimate: Plane,
    pub stage1: Vec<BlockGroup>,
    pub stage2: Vec<BlockGroup>,
}

pub(crate) fn two_stage(
    noisy: &Plane,
    sigma: f64,
    profile: &DenoiseProfile,
    groups1: Option<&[BlockGroup]>,
    groups2: Option<&[BlockGroup]>,
) -> Result<TwoStage> {
    check_sigma(sigma)?;
    profile.validate(noisy.width(), noisy.height())?;
    let t = BlockTransform::new(profile.transform_2d, profile.block_size)?;
    let stage1 = resolve_groups(groups1, noisy, noisy, sigma, profile, Stage::HardThreshold)?;
    let table = PatchTable::build(noisy, &t);
    let basic = run_stage1(&table, noisy.dims(), &stage1, &t, sigma, profile)?;
    let stage2 = resolve_groups(groups2, noisy, &basic, sigma, profile, Stage::Wiener)?;
    let estimate = run_stage2(&table, &basic, &stage2, &t, sigma, profile)?;
    Ok(TwoStage { estimate, stage1, stage2 })
}

/// Full two-stage BM3D on one plane.
pub fn denoise_grayscale(noisy: &Plane, sigma: f64, profile: &DenoiseProfile) -> Result<Plane> {
    Ok(two_stage(noisy, sigma, profile, None, None)?.estimate)
}
