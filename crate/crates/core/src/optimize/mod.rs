//! Search for the channel transform that minimizes denoising error on a
//! dataset of noise-free images.
//!
//! The objective of a transform is the mean camera-component MSE between each
//! clean image and PBM3D applied to a noisy copy of it. Noise is drawn once per
//! run, so every candidate is scored against the same noisy images.

pub mod presets;

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::bm3d::DenoiseProfile;
use crate::error::{Error, Result};
use crate::noise::{add_noise, stream_rng, NoiseSpec};
use crate::pbm3d::{channel_sigmas, follow_channel, guide_channel, Guide};
use crate::plane::Plane;
use crate::polar::{apply_transform, condition_number, invert_transform, CameraImage, ChannelTransform, MAX_CONDITION};

pub use presets::{preset, preset_verbatim, validate_preset, validate_rows, RowNormCheck, RowNormStatus};

/// Substream of the run seed used for Monte Carlo sampling; noise uses 0..3.
const SAMPLING_STREAM: u64 = 1 << 32;

/// Divides each row by its L1 norm.
pub fn normalize_rows(m: &[[f64; 3]; 3]) -> Result<ChannelTransform> {
    let mut out = *m;
    for (k, row) in out.iter_mut().enumerate() {
        let l1: f64 = row.iter().map(|v| v.abs()).sum();
        if !(l1 > 0.0) || !l1.is_finite() {
            return Err(Error::validation(format!("row {k} cannot be normalized (L1 norm {l1})")));
        }
        for v in row.iter_mut() {
            *v /= l1;
        }
    }
    ChannelTransform::new(out)
}

/// A matrix optimization problem.
#[derive(Debug, Clone)]
pub struct OptimizationRun {
    /// Noise-free camera images.
    pub dataset: Vec<CameraImage>,
    pub sigma: f64,
    pub seed: u64,
    /// Monte Carlo rounds, or maximum outer iterations of pattern search.
    pub budget: usize,
    /// Pattern search step; `10·delta` is also tried.
    pub delta: f64,
    pub profile: DenoiseProfile,
    /// Side of the centered crop each image is reduced to; `None` uses full images.
    pub crop: Option<usize>,
}

impl OptimizationRun {
    pub fn new(dataset: Vec<CameraImage>, sigma: f64, seed: u64) -> Self {
        Self {
            dataset,
            sigma,
            seed,
            budget: 50,
            delta: 0.01,
            profile: DenoiseProfile::default(),
            crop: Some(128),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.is_empty() {
            return Err(Error::validation("optimization needs at least one image"));
        }
        if !(self.delta > 0.0) {
            return Err(Error::validation(format!("delta must be > 0, got {}", self.delta)));
        }
        if self.budget == 0 {
            return Err(Error::validation("budget must be >= 1"));
        }
        NoiseSpec::new(self.sigma, self.seed)?;
        Ok(())
    }
}

/// Objective value of one transform.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    pub mean_mse: f64,
    pub per_image_mse: Vec<f64>,
}

/// Clean and frozen noisy copies of a run's dataset.
///
/// Channel `k` of PBM3D depends only on rows 0 and `k` of the transform, so
/// per-channel estimates are cached by those rows. Most search moves change
/// one row and then cost a single channel.
pub struct Objective {
    clean: Vec<CameraImage>,
    noisy: Vec<CameraImage>,
    sigma: f64,
    profile: DenoiseProfile,
    caches: Vec<Mutex<ChannelCache>>,
}

type RowKey = [u64; 3];

/// Entries kept per image before the cache is flushed.
const CACHE_LIMIT: usize = 48;

#[derive(Default)]
struct ChannelCache {
    guides: HashMap<RowKey, Arc<Guide>>,
    followers: HashMap<(RowKey, RowKey), Arc<Plane>>,
}

fn row_key(row: &[f64; 3]) -> RowKey {
    row.map(f64::to_bits)
}

/// Noise seed of the `index`-th image in a seeded set.
pub fn image_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Mean squared error over the three camera components.
pub fn camera_mse(a: &CameraImage, b: &CameraImage) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::Dimensions {
            expected: a.dims(),
            found: b.dims(),
        });
    }
    let mut sum = 0.0;
    for (pa, pb) in a.planes().iter().zip(b.planes()) {
        sum += pa.as_slice().iter().zip(pb.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    }
    Ok(sum / (3 * a.width() * a.height()) as f64)
}

impl Objective {
    pub fn new(run: &OptimizationRun) -> Result<Self> {
        run.validate()?;
        let clean: Vec<CameraImage> = run
            .dataset
            .iter()
            .map(|img| match run.crop {
                Some(side) => img.center_crop(side, side),
                None => Ok(img.clone()),
            })
            .collect::<Result<_>>()?;
        let noisy = clean
            .iter()
            .enumerate()
            .map(|(i, img)| add_noise(img, NoiseSpec::new(run.sigma, image_seed(run.seed, i))?))
            .collect::<Result<_>>()?;
        let caches = clean.iter().map(|_| Mutex::default()).collect();
        Ok(Self {
            clean,
            noisy,
            sigma: run.sigma,
            profile: run.profile.clone(),
            caches,
        })
    }

    /// PBM3D estimate of image `i`; identical to [`crate::pbm3d::denoise_polarization`].
    fn denoise(&self, i: usize, t: &ChannelTransform) -> Result<CameraImage> {
        let channels = apply_transform(t, &self.noisy[i]);
        let sigmas = channel_sigmas(t, self.sigma);
        let keys = t.matrix().map(|r| row_key(&r));
        let cache = &self.caches[i];
        let cached = cache.lock().expect("cache lock").guides.get(&keys[0]).cloned();
        let guide = match cached {
            Some(g) => g,
            None => {
                let g = Arc::new(guide_channel(&channels[0], sigmas[0], &self.profile)?);
                let mut c = cache.lock().expect("cache lock");
                if c.guides.len() >= CACHE_LIMIT {
                    c.guides.clear();
                }
                c.guides.insert(keys[0], g.clone());
                g
            }
        };
        let mut out = vec![guide.estimate.clone()];
        for k in 1..3 {
            let key = (keys[0], keys[k]);
            let cached = cache.lock().expect("cache lock").followers.get(&key).cloned();
            let plane = match cached {
                Some(p) => p,
                None => {
                    let p = Arc::new(follow_channel(&channels[k], sigmas[k], &self.profile, &guide)?);
                    let mut c = cache.lock().expect("cache lock");
                    if c.followers.len() >= 2 * CACHE_LIMIT {
                        c.followers.clear();
                    }
                    c.followers.insert(key, p.clone());
                    p
                }
            };
            out.push((*plane).clone());
        }
        let out: [Plane; 3] = out.try_into().expect("three channels");
        invert_transform(t, &out)
    }

    pub fn evaluate(&self, t: &ChannelTransform) -> Result<ObjectiveValue> {
        self.profile.validate(self.noisy[0].width(), self.noisy[0].height())?;
        let per_image_mse = (0..self.clean.len())
            .map(|i| camera_mse(&self.clean[i], &self.denoise(i, t)?))
            .collect::<Result<Vec<f64>>>()?;
        let mean_mse = per_image_mse.iter().sum::<f64>() / per_image_mse.len() as f64;
        Ok(ObjectiveValue {
            mean_mse,
            per_image_mse,
        })
    }

    /// Mean MSE of a raw matrix after row normalization; singular or
    /// ill-conditioned candidates score `+∞`.
    pub fn score(&self, m: &[[f64; 3]; 3]) -> f64 {
        match normalize_rows(m).and_then(|t| self.evaluate(&t)) {
            Ok(v) => v.mean_mse,
            Err(_) => f64::INFINITY,
        }
    }
}

/// Objective of `t` on `run`.
pub fn objective(t: &ChannelTransform, run: &OptimizationRun) -> Result<ObjectiveValue> {
    Objective::new(run)?.evaluate(t)
}

/// Outcome of a derivative-free search.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub transform: ChannelTransform,
    pub value: f64,
    /// Outer iterations (pattern search) or rounds (Monte Carlo).
    pub iterations: usize,
    /// Distinct objective evaluations.
    pub evaluations: usize,
    /// Pattern search stopped at a local minimum rather than at the budget.
    pub converged: bool,
    /// Best value after each iteration, starting with the initial one.
    pub history: Vec<f64>,
}

/// Search result together with the per-image objective breakdown.
#[derive(Debug, Clone)]
pub struct SearchResult {
    pub outcome: SearchOutcome,
    pub value: ObjectiveValue,
}

fn key(m: &[[f64; 3]; 3]) -> [u64; 9] {
    let mut k = [0u64; 9];
    for (i, v) in m.iter().flatten().enumerate() {
        // collapse -0.0 and 0.0
        k[i] = (v + 0.0).to_bits();
    }
    k
}

/// Objective memo; repeated candidates are scored once.
struct Memo<'a> {
    f: &'a (dyn Fn(&ChannelTransform) -> f64 + Sync),
    cache: Mutex<HashMap<[u64; 9], f64>>,
}

impl<'a> Memo<'a> {
    fn new(f: &'a (dyn Fn(&ChannelTransform) -> f64 + Sync)) -> Self {
        Self {
            f,
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// Scores all candidates (in parallel) in order.
    fn scores(&self, candidates: &[ChannelTransform]) -> Vec<f64> {
        let todo: Vec<&ChannelTransform> = {
            let cache = self.cache.lock().expect("memo lock");
            let mut seen = std::collections::HashSet::new();
            candidates
                .iter()
                .filter(|c| !cache.contains_key(&key(c.matrix())) && seen.insert(key(c.matrix())))
                .collect()
        };
        let fresh: Vec<f64> = todo.par_iter().map(|c| (self.f)(c)).collect();
        let mut cache = self.cache.lock().expect("memo lock");
        for (c, v) in todo.iter().zip(fresh) {
            cache.insert(key(c.matrix()), v);
        }
        candidates.iter().map(|c| cache[&key(c.matrix())]).collect()
    }

    fn evaluations(&self) -> usize {
        self.cache.lock().expect("memo lock").len()
    }
}

/// Neighbors of `t` at steps `delta` and `10·delta`.
///
/// For each row and each ordered pair of entries `(p, q)`, `±step` is added to
/// `p` and subtracted from `q`. Moves that keep the row's L1 norm are taken as
/// is; the rest (a sign flip, or entries of opposite sign) are renormalized.
/// Duplicates, the unchanged matrix and singular candidates are dropped.
pub fn perturbations(t: &ChannelTransform, delta: f64) -> Vec<ChannelTransform> {
    let base = *t.matrix();
    let mut out: Vec<ChannelTransform> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    seen.insert(key(&base));
    for step in [delta, 10.0 * delta] {
        for row in 0..3 {
            for p in 0..3 {
                for q in 0..3 {
                    if p == q {
                        continue;
                    }
                    for sign in [1.0, -1.0] {
                        let mut m = base;
                        m[row][p] += sign * step;
                        m[row][q] -= sign * step;
                        let l1: f64 = m[row].iter().map(|v| v.abs()).sum();
                        let candidate = if (l1 - 1.0).abs() <= crate::polar::ROW_NORM_TOLERANCE {
                            ChannelTransform::new(m)
                        } else {
                            normalize_rows(&m)
                        };
                        if let Ok(c) = candidate {
                            if seen.insert(key(c.matrix())) {
                                out.push(c);
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Pattern search over an arbitrary objective.
///
/// Each outer iteration scores every perturbation of the current matrix and
/// moves to the best one if it strictly improves; otherwise the search has
/// converged. At most `budget` outer iterations are run.
pub fn pattern_search_with(
    t0: &ChannelTransform,
    delta: f64,
    budget: usize,
    f: &(dyn Fn(&ChannelTransform) -> f64 + Sync),
) -> SearchOutcome {
    let memo = Memo::new(f);
    let mut current = t0.clone();
    let mut value = memo.scores(std::slice::from_ref(t0))[0];
    let mut history = vec![value];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < budget {
        iterations += 1;
        let candidates = perturbations(&current, delta);
        let scores = memo.scores(&candidates);
        let best = scores
            .iter()
            .enumerate()
            .fold(None, |acc: Option<(usize, f64)>, (i, &s)| match acc {
                Some((_, b)) if b <= s => acc,
                _ => Some((i, s)),
            });
        match best {
            Some((i, s)) if s < value => {
                current = candidates[i].clone();
                value = s;
                history.push(value);
            }
            _ => {
                converged = true;
                break;
            }
        }
    }
    SearchOutcome {
        transform: current,
        value,
        iterations,
        evaluations: memo.evaluations(),
        converged,
        history,
    }
}

/// Draws a row-normalized, well-conditioned matrix: each row uniform on the
/// simplex of magnitudes with independent random signs.
pub fn random_transform<R: Rng>(rng: &mut R) -> ChannelTransform {
    loop {
        let mut m = [[0.0; 3]; 3];
        for row in m.iter_mut() {
            let e: [f64; 3] = [rng.sample(Exp1), rng.sample(Exp1), rng.sample(Exp1)];
            let total: f64 = e.iter().sum();
            for (v, x) in row.iter_mut().zip(e) {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                *v = sign * x / total;
            }
        }
        if condition_number(&m) < MAX_CONDITION {
            if let Ok(t) = normalize_rows(&m) {
                return t;
            }
        }
    }
}

/// The first `rounds` matrices drawn for `seed`; longer runs extend shorter ones.
pub fn monte_carlo_candidates(rounds: usize, seed: u64) -> Vec<ChannelTransform> {
    let mut rng = stream_rng(seed, SAMPLING_STREAM);
    (0..rounds).map(|_| random_transform(&mut rng)).collect()
}

/// Monte Carlo search over an arbitrary objective; ties go to the earliest draw.
pub fn monte_carlo_with(rounds: usize, seed: u64, f: &(dyn Fn(&ChannelTransform) -> f64 + Sync)) -> SearchOutcome {
    let candidates = monte_carlo_candidates(rounds.max(1), seed);
    let scores: Vec<f64> = candidates.par_iter().map(f).collect();
    let mut best = 0;
    let mut history = Vec::with_capacity(scores.len());
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = i;
        }
        history.push(scores[best]);
    }
    SearchOutcome {
        transform: candidates[best].clone(),
        value: scores[best],
        iterations: candidates.len(),
        evaluations: candidates.len(),
        converged: true,
        history,
    }
}

fn eval_fn(objective: &Objective) -> impl Fn(&ChannelTransform) -> f64 + Sync + '_ {
    move |t| objective.evaluate(t).map(|v| v.mean_mse).unwrap_or(f64::INFINITY)
}

/// Monte Carlo search with `run.budget` rounds.
pub fn monte_carlo_search(run: &OptimizationRun) -> Result<SearchResult> {
    let objective = Objective::new(run)?;
    let outcome = monte_carlo_with(run.budget, run.seed, &eval_fn(&objective));
    let value = objective.evaluate(&outcome.transform)?;
    Ok(SearchResult { outcome, value })
}

/// Pattern search from `t0` with step `run.delta` and at most `run.budget`
/// outer iterations.
pub fn pattern_search(run: &OptimizationRun, t0: &ChannelTransform) -> Result<SearchResult> {
    let objective = Objective::new(run)?;
    let outcome = pattern_search_with(t0, run.delta, run.budget, &eval_fn(&objective));
    let value = objective.evaluate(&outcome.transform)?;
    Ok(SearchResult { outcome, value })
}

/// Writes three lines of three numbers, row-major.
pub fn format_matrix(m: &[[f64; 3]; 3]) -> String {
    m.iter()
        .map(|r| format!("{} {} {}\n", r[0], r[1], r[2]))
        .collect()
}

/// Parses three lines of three numbers; blank lines and `#` comments are skipped.
pub fn parse_matrix(text: &str) -> Result<[[f64; 3]; 3]> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>().map_err(|e| Error::validation(format!("bad matrix entry '{t}': {e}"))))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    if rows.len() != 3 || rows.iter().any(|r| r.len() != 3) {
        return Err(Error::validation("matrix must have three rows of three numbers"));
    }
    Ok([0, 1, 2].map(|r| [rows[r][0], rows[r][1], rows[r][2]]))
}

pub fn read_matrix(path: &Path) -> Result<[[f64; 3]; 3]> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text)
}

pub fn write_matrix(path: &Path, m: &[[f64; 3]; 3]) -> Result<()> {
    fs::write(path, format_matrix(m)).map_err(|e| Error::io(path, e))
}

/// A preset name or a matrix file, row-normalized.
pub fn resolve_transform(spec: &str) -> Result<ChannelTransform> {
    match preset(spec) {
        Ok(t) => Ok(t),
        Err(Error::Lookup { .. }) if Path::new(spec).exists() => normalize_rows(&read_matrix(Path::new(spec))?),
        Err(e) => Err(e),
    }
}
