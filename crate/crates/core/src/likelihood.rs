//! Closed-form likelihood ratios and MLEs for the Poisson and zero-inflated
//! Poisson (ZIP) complete-data models.
//!
//! Every ratio is handled as a log: case totals in the hundreds overflow the
//! natural-scale powers. `0 · log 0` is taken as 0 throughout.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScanError};
use crate::map::{CaseData, RegionMap, Zone};

/// `x · ln(y)` with the convention `0 · ln 0 = 0`.
#[inline]
pub fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Sufficient statistics of a zone split, weighted by `(1 − δ_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneAggregates {
    pub x_in: f64,
    pub n_in: f64,
    pub x_out: f64,
    pub n_out: f64,
}

impl ZoneAggregates {
    pub fn new(x_in: f64, n_in: f64, x_out: f64, n_out: f64) -> Self {
        Self { x_in, n_in, x_out, n_out }
    }

    pub fn x_tot(&self) -> f64 {
        self.x_in + self.x_out
    }

    pub fn n_tot(&self) -> f64 {
        self.n_in + self.n_out
    }

    /// Adjusted totals `Σ x_i(1−δ_i)` and `Σ n_i(1−δ_i)` inside and outside `zone`.
    pub fn adjusted(map: &RegionMap, data: &CaseData, delta: &[f64], zone: &Zone) -> Result<Self> {
        check_delta(map, delta)?;
        let inside = zone.mask(map.len());
        let mut agg = ZoneAggregates::new(0.0, 0.0, 0.0, 0.0);
        for i in 0..map.len() {
            let w = 1.0 - delta[i];
            let (x, n) = (data.counts()[i] as f64 * w, map.population(i) * w);
            if inside[i] {
                agg.x_in += x;
                agg.n_in += n;
            } else {
                agg.x_out += x;
                agg.n_out += n;
            }
        }
        Ok(agg)
    }

    fn check_populations(&self) -> Result<()> {
        if !(self.n_in > 0.0) {
            return Err(ScanError::Degenerate("zero (adjusted) population inside the zone".into()));
        }
        if !(self.n_out > 0.0) {
            return Err(ScanError::Degenerate("zero (adjusted) population outside the zone".into()));
        }
        Ok(())
    }
}

/// Log likelihood ratio of a single zone split; 0 when the in-zone rate does not exceed the
/// out-of-zone rate. Populations must be positive.
#[inline]
pub(crate) fn log_llr_raw(x_in: f64, n_in: f64, x_out: f64, n_out: f64) -> f64 {
    if x_in * n_out <= x_out * n_in {
        return 0.0;
    }
    let x = x_in + x_out;
    let n = n_in + n_out;
    let v = xlogy(x_in, x_in / n_in) + xlogy(x_out, x_out / n_out) - xlogy(x, x / n);
    v.max(0.0)
}

/// Kulldorff's Poisson likelihood ratio for one zone, as a log.
pub fn poisson_log_llr(agg: &ZoneAggregates) -> Result<f64> {
    agg.check_populations()?;
    Ok(log_llr_raw(agg.x_in, agg.n_in, agg.x_out, agg.n_out))
}

/// Kulldorff's Poisson likelihood ratio `λ_Z ≥ 1` for one zone.
pub fn poisson_llr(agg: &ZoneAggregates) -> Result<f64> {
    poisson_log_llr(agg).map(f64::exp)
}

/// Parameter estimates for the ZIP model, either under the null (`theta_z_hat = None`)
/// or under the alternative for a given zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZipFit {
    pub p_hat: f64,
    pub theta0_hat: f64,
    pub theta_z_hat: Option<f64>,
    pub delta_hat: Vec<f64>,
}

pub(crate) fn check_delta(map: &RegionMap, delta: &[f64]) -> Result<()> {
    if delta.len() != map.len() {
        return Err(ScanError::InvalidInput(format!(
            "{} structural-zero weights for {} regions",
            delta.len(),
            map.len()
        )));
    }
    if let Some(v) = delta.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(ScanError::InvalidInput(format!("structural-zero weight {v} outside [0, 1]")));
    }
    Ok(())
}

/// Null-model MLEs `(θ̂_0, p̂)`; `delta` may hold fractional EM posteriors.
pub fn zip_mle_null(map: &RegionMap, data: &CaseData, delta: &[f64]) -> Result<(f64, f64)> {
    check_delta(map, delta)?;
    let (mut x, mut n) = (0.0, 0.0);
    for i in 0..map.len() {
        let w = 1.0 - delta[i];
        x += data.counts()[i] as f64 * w;
        n += map.population(i) * w;
    }
    if !(n > 0.0) {
        return Err(ScanError::Degenerate("adjusted population Σ n_i(1−δ_i) is zero".into()));
    }
    let p = delta.iter().sum::<f64>() / map.len() as f64;
    Ok((x / n, p))
}

/// Alternative-model MLEs `(θ̂_Z, θ̂_0, p̂)` for `zone`.
pub fn zip_mle_alt(map: &RegionMap, data: &CaseData, delta: &[f64], zone: &Zone) -> Result<(f64, f64, f64)> {
    let agg = ZoneAggregates::adjusted(map, data, delta, zone)?;
    agg.check_populations()?;
    let p = delta.iter().sum::<f64>() / map.len() as f64;
    Ok((agg.x_in / agg.n_in, agg.x_out / agg.n_out, p))
}

/// ZIP likelihood ratio of a single zone with structural-zero weights `delta`, as a log.
pub fn zip_log_llr(map: &RegionMap, data: &CaseData, delta: &[f64], zone: &Zone) -> Result<f64> {
    let agg = ZoneAggregates::adjusted(map, data, delta, zone)?;
    poisson_log_llr(&agg)
}

/// ZIP likelihood ratio `λ(Z) ≥ 1` of a single zone with structural-zero weights `delta`.
pub fn zip_llr(map: &RegionMap, data: &CaseData, delta: &[f64], zone: &Zone) -> Result<f64> {
    zip_log_llr(map, data, delta, zone).map(f64::exp)
}

/// Incomplete-data ZIP log-likelihood `ℓ(p, θ_0, θ_Z)` without the `log x_i!` constants.
///
/// Regions in `zone` use `theta_z`, the rest `theta0`. With `zone = None` every region uses
/// `theta0`. Returns `-∞` when a positive count meets a zero rate.
pub fn incomplete_loglik(
    map: &RegionMap,
    data: &CaseData,
    zone: Option<&Zone>,
    p: f64,
    theta0: f64,
    theta_z: f64,
) -> f64 {
    let inside = zone.map(|z| z.mask(map.len()));
    let mut ll = 0.0;
    for i in 0..map.len() {
        let theta = match &inside {
            Some(m) if m[i] => theta_z,
            _ => theta0,
        };
        let mu = map.population(i) * theta;
        let x = data.counts()[i];
        if x == 0 {
            ll += (p + (1.0 - p) * (-mu).exp()).ln();
        } else {
            if mu <= 0.0 {
                return f64::NEG_INFINITY;
            }
            ll += (1.0 - p).ln() - mu + x as f64 * mu.ln();
        }
    }
    ll
}

/// `ZIP(p, μ)`: a structural zero with probability `p`, otherwise `Poisson(μ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Zip {
    p: f64,
    mu: f64,
}

impl Zip {
    pub fn new(p: f64, mu: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) || !(mu >= 0.0 && mu.is_finite()) {
            return Err(ScanError::InvalidInput(format!("invalid ZIP parameters p={p}, mu={mu}")));
        }
        Ok(Self { p, mu })
    }

    pub fn mean(&self) -> f64 {
        (1.0 - self.p) * self.mu
    }

    pub fn variance(&self) -> f64 {
        (1.0 - self.p) * self.mu * (1.0 + self.p * self.mu)
    }

    pub fn pmf(&self, x: u64) -> f64 {
        let pois = if self.mu == 0.0 {
            if x == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            let lg = statrs::function::gamma::ln_gamma(x as f64 + 1.0);
            (-self.mu + x as f64 * self.mu.ln() - lg).exp()
        };
        if x == 0 {
            self.p + (1.0 - self.p) * pois
        } else {
            (1.0 - self.p) * pois
        }
    }
}

impl Distribution<u64> for Zip {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        if rng.random::<f64>() < self.p || self.mu == 0.0 {
            return 0;
        }
        Poisson::new(self.mu).expect("validated rate").sample(rng) as u64
    }
}
