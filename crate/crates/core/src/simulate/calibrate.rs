//! Relative-risk calibration: the smallest cluster risk at which a one-sided exact
//! binomial test on the in-cluster case count reaches a target power.

use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{Result, ScanError};
use crate::map::RegionMap;

/// Size of the calibrating binomial test.
pub const TEST_LEVEL: f64 = 0.05;
const MAX_RISK: f64 = 1e6;

fn binomial(m: u64, pi: f64) -> Binomial {
    Binomial::new(pi, m).expect("probability in [0, 1]")
}

/// `P(X ≥ c)` for `X ~ Binomial(m, pi)`.
fn upper_tail(m: u64, pi: f64, c: u64) -> f64 {
    if c == 0 {
        1.0
    } else {
        binomial(m, pi).sf(c - 1)
    }
}

/// Smallest `c` with `P(X ≥ c | π0) ≤ level`.
pub fn binomial_test_critical(m: u64, pi0: f64, level: f64) -> u64 {
    let dist = binomial(m, pi0);
    let tail = |c: u64| if c == 0 { 1.0 } else { dist.sf(c - 1) };
    (0..=m).find(|&c| tail(c) <= level).unwrap_or(m + 1)
}

/// Power of the one-sided level-`level` exact binomial test of `π = pi0` when the truth is `pi1`.
pub fn binomial_test_power(m: u64, pi0: f64, pi1: f64, level: f64) -> f64 {
    let c = binomial_test_critical(m, pi0, level);
    if c > m {
        return 0.0;
    }
    upper_tail(m, pi1, c)
}

/// Smallest relative risk `r ≥ 1` inside a cluster holding population share `share` such that
/// the test rejects with probability at least `target_power` given `m` cases.
///
/// Found by bisection on `r` with `π(r) = r·share / (r·share + 1 − share)`.
pub fn calibrate_relative_risk(m: u64, share: f64, target_power: f64) -> Result<f64> {
    if m == 0 {
        return Err(ScanError::InvalidInput("calibration needs at least one case".into()));
    }
    if !(share > 0.0 && share < 1.0) {
        return Err(ScanError::InvalidInput(format!("cluster population share must lie in (0, 1), got {share}")));
    }
    if !(target_power > 0.0 && target_power < 1.0) {
        return Err(ScanError::InvalidInput(format!("target power must lie in (0, 1), got {target_power}")));
    }
    let c = binomial_test_critical(m, share, TEST_LEVEL);
    if c > m {
        return Err(ScanError::Degenerate(format!("no {m}-case binomial test reaches level {TEST_LEVEL}")));
    }
    let pi = |r: f64| r * share / (r * share + 1.0 - share);
    let power = |r: f64| upper_tail(m, pi(r), c);
    if power(1.0) >= target_power {
        return Ok(1.0);
    }
    if power(MAX_RISK) < target_power {
        return Err(ScanError::Degenerate(format!("target power {target_power} unreachable with risk ≤ {MAX_RISK}")));
    }
    let (mut lo, mut hi) = (1.0, MAX_RISK);
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if power(mid) >= target_power {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Per-region relative risks: the calibrated `r` on `true_cluster`, 1 elsewhere.
///
/// Regions flagged in `excluded` (structural zeros) never receive cases, so they are left out
/// of both the cluster and the total population when computing the cluster's share.
pub fn calibrate_risks(
    map: &RegionMap,
    true_cluster: &[usize],
    excluded: &[bool],
    m: u64,
    target_power: f64,
) -> Result<Vec<f64>> {
    if true_cluster.is_empty() {
        return Err(ScanError::InvalidInput("true cluster is empty".into()));
    }
    let live = |i: usize| !excluded.get(i).copied().unwrap_or(false);
    let n: f64 = (0..map.len()).filter(|&i| live(i)).map(|i| map.population(i)).sum();
    let n_c: f64 = true_cluster.iter().copied().filter(|&i| live(i)).map(|i| map.population(i)).sum();
    let r = calibrate_relative_risk(m, n_c / n, target_power)?;
    let mut risks = vec![1.0; map.len()];
    for &i in true_cluster {
        risks[i] = r;
    }
    Ok(risks)
}
