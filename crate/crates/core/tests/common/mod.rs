//! Independent, deliberately naive re-implementations used as test oracles.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zipscan::{CaseData, Region, RegionMap};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random map with `k` regions scattered in the unit square and populations in `[lo, hi)`.
pub fn random_map(rng: &mut ChaCha8Rng, k: usize, lo: f64, hi: f64) -> RegionMap {
    RegionMap::new(
        (0..k)
            .map(|i| Region {
                id: format!("z{i}"),
                x: rng.random(),
                y: rng.random(),
                population: rng.random_range(lo..hi),
            })
            .collect(),
    )
    .unwrap()
}

/// Every circular window as `(sorted members, centre)`, in (centre, size) emission order with
/// later duplicates dropped.
pub fn brute_zones(map: &RegionMap, frac: f64) -> Vec<(Vec<usize>, usize)> {
    let k = map.len();
    let total: f64 = (0..k).map(|i| map.population(i)).sum();
    let mut out: Vec<(Vec<usize>, usize)> = Vec::new();
    for c in 0..k {
        let rc = map.region(c);
        let mut others: Vec<usize> = (0..k).filter(|&j| j != c).collect();
        let d = |j: usize| {
            let r = map.region(j);
            (r.x - rc.x).powi(2) + (r.y - rc.y).powi(2)
        };
        others.sort_by(|&a, &b| d(a).partial_cmp(&d(b)).unwrap().then(a.cmp(&b)));
        let mut members = vec![c];
        let mut pop = map.population(c);
        loop {
            let mut sorted = members.clone();
            sorted.sort();
            if !out.iter().any(|(z, _)| *z == sorted) {
                out.push((sorted, c));
            }
            let Some(&next) = others.get(members.len() - 1) else { break };
            pop += map.population(next);
            if pop > frac * total * (1.0 + 1e-12) {
                break;
            }
            members.push(next);
        }
    }
    out
}

/// `ln λ` of Kulldorff's statistic on adjusted sums, written out from the definition.
pub fn kulldorff_log(x_in: f64, n_in: f64, x_out: f64, n_out: f64) -> f64 {
    if n_in <= 0.0 || n_out <= 0.0 || x_in / n_in <= x_out / n_out {
        return 0.0;
    }
    let t = |x: f64, n: f64| if x > 0.0 { x * (x / n).ln() } else { 0.0 };
    let x = x_in + x_out;
    let n = n_in + n_out;
    (t(x_in, n_in) + t(x_out, n_out) - t(x, n)).max(0.0)
}

/// Adjusted sums `Σ x(1−δ)`, `Σ n(1−δ)` inside and outside `zone`.
pub fn split(map: &RegionMap, counts: &[u64], delta: &[f64], zone: &[usize]) -> (f64, f64, f64, f64) {
    let (mut xi, mut ni, mut xo, mut no) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..map.len() {
        let w = 1.0 - delta[i];
        if zone.contains(&i) {
            xi += counts[i] as f64 * w;
            ni += map.population(i) * w;
        } else {
            xo += counts[i] as f64 * w;
            no += map.population(i) * w;
        }
    }
    (xi, ni, xo, no)
}

pub struct NaiveEm {
    pub delta: Vec<f64>,
    pub p: f64,
    pub theta0: f64,
    pub theta_z: f64,
    pub iterations: usize,
}

/// Per-region EM with explicit loops; `zone = None` fits the null model.
pub fn naive_em(map: &RegionMap, counts: &[u64], zone: Option<&[usize]>, tol: f64, max_iter: usize) -> NaiveEm {
    let k = map.len();
    let inside = |i: usize| zone.is_some_and(|z| z.contains(&i));
    let mut delta = vec![0.0; k];
    let m_step = |delta: &[f64]| {
        let (mut xi, mut ni, mut xo, mut no) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..k {
            let w = 1.0 - delta[i];
            if inside(i) {
                xi += counts[i] as f64 * w;
                ni += map.population(i) * w;
            } else {
                xo += counts[i] as f64 * w;
                no += map.population(i) * w;
            }
        }
        let rate = |x: f64, n: f64| if x == 0.0 { 0.0 } else { x / n };
        (delta.iter().sum::<f64>() / k as f64, rate(xo, no), rate(xi, ni))
    };
    let (_, mut theta0, mut theta_z) = m_step(&delta);
    let zeros = counts.iter().filter(|&&c| c == 0).count() as f64;
    let mut p = (zeros / k as f64).clamp(1e-6, 1.0 - 1e-6);
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut change: f64 = 0.0;
        for i in 0..k {
            let new = if counts[i] > 0 {
                0.0
            } else {
                let theta = if inside(i) { theta_z } else { theta0 };
                p / (p + (1.0 - p) * (-map.population(i) * theta).exp())
            };
            change = change.max((new - delta[i]).abs());
            delta[i] = new;
        }
        (p, theta0, theta_z) = m_step(&delta);
        if change < tol {
            break;
        }
    }
    NaiveEm { delta, p, theta0, theta_z, iterations }
}

/// Exhaustive maximisation with the fewest-members-then-lowest-centre tie-break. Returns the
/// index into `zones` and the maximal `ln λ`.
pub fn brute_best(zones: &[(Vec<usize>, usize)], score: impl Fn(&[usize]) -> f64) -> (usize, f64) {
    let mut best = (0, score(&zones[0].0));
    for (j, (z, c)) in zones.iter().enumerate().skip(1) {
        let v = score(z);
        let (bz, bc) = (&zones[best.0].0, zones[best.0].1);
        if v > best.1 || (v == best.1 && (z.len() < bz.len() || (z.len() == bz.len() && *c < bc))) {
            best = (j, v);
        }
    }
    best
}

/// Counts uniform on `0..=max`, with structural zeros (count 0) drawn at rate `p_zero`.
pub fn random_counts(rng: &mut ChaCha8Rng, map: &RegionMap, p_zero: f64, max: u64) -> (Vec<u64>, Vec<bool>) {
    let k = map.len();
    let mut d = vec![false; k];
    let mut counts = vec![0u64; k];
    for i in 0..k {
        if rng.random::<f64>() < p_zero {
            d[i] = true;
        } else {
            counts[i] = rng.random_range(0..=max);
        }
    }
    if counts.iter().all(|&c| c == 0) {
        let i = (0..k).find(|&i| !d[i]).unwrap_or(0);
        d[i] = false;
        counts[i] = 1;
    }
    (counts, d)
}

pub fn case_data(map: &RegionMap, counts: Vec<u64>, d: Option<Vec<bool>>) -> CaseData {
    CaseData::new(map, counts, d).unwrap()
}
