//! Information-content landscape analysis: estimate the gradient norm of a
//! cost landscape from the entropy of a symbolized random walk.

use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::CostEstimate;
use crate::seed::{derive_seed, rng_from_seed};

pub const DEFAULT_N_WALKS: usize = 50;
pub const DEFAULT_LANDSCAPE_CAP: usize = 200;
pub const DEFAULT_LANDSCAPE_FACTOR: usize = 10;
pub const EPSILON_GRID_POINTS: usize = 200;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LandscapeMeta {
    pub n_qubits: Option<usize>,
    pub layers: Option<usize>,
    pub noise: Option<String>,
    pub shots: Option<usize>,
    pub seed: Option<u64>,
    /// Cost normalization; when present, gradients are reported in units of it.
    pub c0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Landscape {
    pub m: usize,
    pub points: Vec<Vec<f64>>,
    pub costs: Vec<f64>,
    pub cost_errors: Vec<f64>,
    pub meta: LandscapeMeta,
}

impl Landscape {
    pub fn new(points: Vec<Vec<f64>>, costs: Vec<f64>, cost_errors: Vec<f64>, meta: LandscapeMeta) -> Result<Self> {
        let m = points.first().map_or(0, Vec::len);
        let ls = Self {
            m,
            points,
            costs,
            cost_errors,
            meta,
        };
        ls.validate()?;
        Ok(ls)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let big_m = self.points.len();
        if big_m < 3 {
            return Err(Error::InvalidArgument(format!(
                "a landscape needs at least 3 points, got {big_m}"
            )));
        }
        if self.m == 0 {
            return Err(Error::InvalidArgument("parameter dimension is zero".into()));
        }
        if self.costs.len() != big_m || self.cost_errors.len() != big_m {
            return Err(Error::LengthMismatch {
                expected: big_m,
                got: self.costs.len().min(self.cost_errors.len()),
            });
        }
        for (i, p) in self.points.iter().enumerate() {
            if p.len() != self.m {
                return Err(Error::LengthMismatch {
                    expected: self.m,
                    got: p.len(),
                });
            }
            if p.iter().any(|&x| !(0.0..TAU).contains(&x)) {
                return Err(Error::InvalidArgument(format!(
                    "point {i} has a coordinate outside [0, 2π)"
                )));
            }
        }
        if let Some(i) = self.costs.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!("cost {i} is not finite")));
        }
        Ok(())
    }
}

pub fn landscape_size(m: usize, cap: usize, factor: usize) -> usize {
    (factor * m).min(cap)
}

/// Draws `big_m` uniform points in `[0, 2π)^m` and evaluates `cost_fn(i, θ_i)`
/// on each in parallel. Points come from one stream keyed by `seed`, so the
/// landscape does not depend on the thread count.
pub fn sample_landscape<F>(cost_fn: F, m: usize, big_m: usize, seed: u64) -> Result<Landscape>
where
    F: Fn(usize, &[f64]) -> Result<CostEstimate> + Sync,
{
    if big_m < 3 || m == 0 {
        return Err(Error::InvalidArgument(format!(
            "need m >= 1 and at least 3 landscape points, got m = {m}, M = {big_m}"
        )));
    }
    let mut rng = rng_from_seed(derive_seed(seed, "landscape-points", &[]));
    let points: Vec<Vec<f64>> = (0..big_m)
        .map(|_| (0..m).map(|_| rng.random_range(0.0..TAU)).collect())
        .collect();
    let estimates = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            cost_fn(i, p).map_err(|e| Error::CostEvaluation {
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<CostEstimate>>>()?;
    Landscape::new(
        points,
        estimates.iter().map(|e| e.mean).collect(),
        estimates.iter().map(|e| e.std_error).collect(),
        LandscapeMeta {
            seed: Some(seed),
            ..LandscapeMeta::default()
        },
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkDeltas {
    pub deltas: Vec<f64>,
    pub order: Vec<usize>,
    /// Consecutive pairs dropped because the two points coincide.
    pub skipped: usize,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Slopes along a walk through the landscape in the given visiting order.
pub fn walk_deltas_in_order(ls: &Landscape, order: Vec<usize>) -> Result<WalkDeltas> {
    let mut deltas = Vec::with_capacity(order.len().saturating_sub(1));
    let mut skipped = 0;
    for w in order.windows(2) {
        let d = distance(&ls.points[w[1]], &ls.points[w[0]]);
        if d == 0.0 {
            skipped += 1;
            continue;
        }
        deltas.push((ls.costs[w[1]] - ls.costs[w[0]]) / d);
    }
    if deltas.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "walk has {} usable steps, need at least 2",
            deltas.len()
        )));
    }
    Ok(WalkDeltas {
        deltas,
        order,
        skipped,
    })
}

pub fn walk_deltas(ls: &Landscape, walk_seed: u64) -> Result<WalkDeltas> {
    if ls.len() < 3 {
        return Err(Error::InvalidArgument("landscape has fewer than 3 points".into()));
    }
    let mut order: Vec<usize> = (0..ls.len()).collect();
    order.shuffle(&mut rng_from_seed(walk_seed));
    walk_deltas_in_order(ls, order)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symbol {
    Minus,
    Neutral,
    Plus,
}

impl Symbol {
    fn index(self) -> usize {
        match self {
            Symbol::Minus => 0,
            Symbol::Neutral => 1,
            Symbol::Plus => 2,
        }
    }
}

pub fn symbolize(deltas: &[f64], eps: f64) -> Vec<Symbol> {
    deltas
        .iter()
        .map(|&d| {
            if d < -eps {
                Symbol::Minus
            } else if d > eps {
                Symbol::Plus
            } else {
                Symbol::Neutral
            }
        })
        .collect()
}

/// `H = Σ_{a≠b} −p_ab log₆ p_ab` over consecutive ordered symbol pairs.
pub fn information_content(symbols: &[Symbol]) -> f64 {
    if symbols.len() < 2 {
        return 0.0;
    }
    let mut counts = [[0usize; 3]; 3];
    for w in symbols.windows(2) {
        counts[w[0].index()][w[1].index()] += 1;
    }
    let total = (symbols.len() - 1) as f64;
    let ln6 = 6f64.ln();
    let mut h = 0.0;
    for (a, row) in counts.iter().enumerate() {
        for (b, &c) in row.iter().enumerate() {
            if a != b && c > 0 {
                let p = c as f64 / total;
                h -= p * p.ln() / ln6;
            }
        }
    }
    h
}

/// Zero followed by `points` log-spaced values spanning the nonzero `|ΔC|`.
pub fn epsilon_grid(deltas: &[f64], points: usize) -> Vec<f64> {
    let abs = deltas.iter().map(|d| d.abs()).filter(|&d| d > 0.0);
    let lo = abs.clone().fold(f64::INFINITY, f64::min);
    let hi = abs.fold(0.0, f64::max);
    let mut grid = vec![0.0];
    if hi == 0.0 {
        return grid;
    }
    if points == 1 || lo == hi {
        grid.push(hi);
        return grid;
    }
    let ratio = hi / lo;
    grid.extend((0..points).map(|k| {
        if k + 1 == points {
            hi
        } else {
            lo * ratio.powf(k as f64 / (points - 1) as f64)
        }
    }));
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IcCurve {
    pub epsilon_max: f64,
    pub h_max: f64,
    pub curve: Vec<(f64, f64)>,
    pub degenerate: bool,
}

pub fn maximize_ic(wd: &WalkDeltas) -> IcCurve {
    let grid = epsilon_grid(&wd.deltas, EPSILON_GRID_POINTS);
    if grid.len() == 1 {
        return IcCurve {
            epsilon_max: 0.0,
            h_max: 0.0,
            curve: vec![(0.0, 0.0)],
            degenerate: true,
        };
    }
    let curve: Vec<(f64, f64)> = grid
        .iter()
        .map(|&eps| (eps, information_content(&symbolize(&wd.deltas, eps))))
        .collect();
    let (mut epsilon_max, mut h_max) = curve[0];
    for &(eps, h) in &curve[1..] {
        if h > h_max {
            epsilon_max = eps;
            h_max = h;
        }
    }
    IcCurve {
        epsilon_max,
        h_max,
        curve,
        degenerate: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IcResult {
    /// Mean of the per-walk `ε_M`.
    pub epsilon_max: f64,
    /// `H(ε)` of the first walk.
    pub ic_curve: Vec<(f64, f64)>,
    /// `ε_M·sqrt(m)`, divided by `c0` when the landscape carries one.
    pub gradient_norm: f64,
    pub bootstrap_std: f64,
    pub walk_gradients: Vec<f64>,
    pub normalized: bool,
    pub degenerate: bool,
    pub skipped_pairs: usize,
}

pub fn run_icla(ls: &Landscape, n_walks: usize, seed: u64) -> Result<IcResult> {
    ls.validate()?;
    if n_walks == 0 {
        return Err(Error::InvalidArgument("n_walks must be positive".into()));
    }
    let scale = (ls.m as f64).sqrt() / ls.meta.c0.unwrap_or(1.0);
    let walks = (0..n_walks)
        .into_par_iter()
        .map(|w| {
            let wd = walk_deltas(ls, derive_seed(seed, "walk", &[w as u64]))?;
            Ok((wd.skipped, maximize_ic(&wd)))
        })
        .collect::<Result<Vec<(usize, IcCurve)>>>()?;

    let walk_gradients: Vec<f64> = walks.iter().map(|(_, c)| c.epsilon_max * scale).collect();
    let n = n_walks as f64;
    let epsilon_max = walks.iter().map(|(_, c)| c.epsilon_max).sum::<f64>() / n;
    let gradient_norm = walk_gradients.iter().sum::<f64>() / n;
    let bootstrap_std = if n_walks > 1 {
        (walk_gradients.iter().map(|g| (g - gradient_norm).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(IcResult {
        epsilon_max,
        ic_curve: walks[0].1.curve.clone(),
        gradient_norm,
        bootstrap_std,
        walk_gradients,
        normalized: ls.meta.c0.is_some(),
        degenerate: walks.iter().all(|(_, c)| c.degenerate),
        skipped_pairs: walks.iter().map(|(s, _)| s).sum(),
    })
}
