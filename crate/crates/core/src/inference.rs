//! Monte Carlo significance of the most likely cluster via parametric null replicas.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{Detector, Method, ScanOutcome};
use crate::em::em_fit;
use crate::error::{Result, ScanError};
use crate::map::{CaseData, RegionMap};
use crate::rng::{stream, Domain};

/// How many cases each null replica distributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TotalCasesRule {
    /// The observed total number of cases.
    #[default]
    Observed,
    /// The total population `Σ n_i`, rounded to the nearest integer.
    PopulationTotal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullReplicaConfig {
    pub replicas: usize,
    pub seed: u64,
    pub alpha: f64,
    pub total_cases_rule: TotalCasesRule,
}

impl Default for NullReplicaConfig {
    fn default() -> Self {
        Self { replicas: 999, seed: 0, alpha: 0.05, total_cases_rule: TotalCasesRule::Observed }
    }
}

impl NullReplicaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicas < 19 {
            return Err(ScanError::InvalidInput(format!("need at least 19 replicas, got {}", self.replicas)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ScanError::InvalidInput(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }

    pub fn total_cases(&self, map: &RegionMap, data: &CaseData) -> u64 {
        match self.total_cases_rule {
            TotalCasesRule::Observed => data.total_cases(),
            TotalCasesRule::PopulationTotal => map.total_population().round() as u64,
        }
    }
}

/// Summary of the replica statistics attached to a [`ScanOutcome`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSummary {
    pub replicas: usize,
    pub seed: u64,
    pub alpha: f64,
    pub total_cases_rule: TotalCasesRule,
    pub total_cases: u64,
    pub p_hat: f64,
    /// `#{b : ln λ_b ≥ ln λ_obs}`.
    pub exceedances: usize,
    pub min_log_lambda: f64,
    pub max_log_lambda: f64,
}

/// One row of the replica log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    pub replica_index: u64,
    pub log_lambda: f64,
    pub structural_zero_count: usize,
}

const MAX_ZERO_REDRAWS: usize = 1000;

/// Draws one null data set: each region is a structural zero with probability `p_hat`,
/// then `total_cases` cases are spread multinomially over the remaining regions with
/// probabilities proportional to population. The drawn indicators are kept in the result.
///
/// The background rate does not appear: it cancels in the multinomial probabilities.
pub fn generate_null_replica<R: Rng + ?Sized>(
    map: &RegionMap,
    p_hat: f64,
    total_cases: u64,
    rng: &mut R,
) -> Result<CaseData> {
    if !(0.0..1.0).contains(&p_hat) {
        return Err(ScanError::InvalidInput(format!("p_hat must lie in [0, 1), got {p_hat}")));
    }
    let k = map.len();
    let mut zero = vec![false; k];
    for attempt in 0.. {
        if attempt == MAX_ZERO_REDRAWS {
            return Err(ScanError::Degenerate(format!(
                "every structural-zero draw left no populated region after {MAX_ZERO_REDRAWS} attempts"
            )));
        }
        if p_hat > 0.0 {
            zero.iter_mut().for_each(|z| *z = rng.random::<f64>() < p_hat);
        }
        let live: f64 = (0..k).filter(|&i| !zero[i]).map(|i| map.population(i)).sum();
        if live > 0.0 {
            let counts = multinomial(map, &zero, live, total_cases, rng)?;
            return CaseData::new(map, counts, Some(zero));
        }
    }
    unreachable!()
}

/// Multinomial over the regions not flagged in `excluded`, via sequential conditional binomials.
fn multinomial<R: Rng + ?Sized>(
    map: &RegionMap,
    excluded: &[bool],
    live: f64,
    total: u64,
    rng: &mut R,
) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; map.len()];
    let mut left = total;
    let mut weight_left = live;
    let last = (0..map.len()).rev().find(|&i| !excluded[i] && map.population(i) > 0.0);
    for i in 0..map.len() {
        if left == 0 {
            break;
        }
        let n = map.population(i);
        if excluded[i] || n <= 0.0 {
            continue;
        }
        if Some(i) == last {
            counts[i] = left;
            break;
        }
        let p = (n / weight_left).clamp(0.0, 1.0);
        let c = Binomial::new(left, p)
            .map_err(|e| ScanError::InvalidInput(format!("multinomial step: {e}")))?
            .sample(rng);
        counts[i] = c;
        left -= c;
        weight_left -= n;
    }
    Ok(counts)
}

/// Structural-zero probability used to generate null replicas for `method`:
/// 0 for Scan-Poisson, the share of known structural zeros for Scan-ZIP and the null-model
/// EM estimate for Scan-ZIP+EM.
pub fn null_p_hat(detector: &Detector<'_>, data: &CaseData, method: Method) -> Result<f64> {
    match method {
        Method::Poisson => Ok(0.0),
        Method::Zip => {
            let d = data.structural_zero().ok_or(ScanError::MissingStructuralZeros("zip"))?;
            Ok(d.iter().filter(|&&z| z).count() as f64 / d.len() as f64)
        }
        Method::ZipEm => {
            let fit = em_fit(detector.map(), &data.without_structural_zeros(), None, &detector.config().em)?;
            // p̂ = 1 is impossible with a positive count, but guard the open interval
            Ok(fit.fit.p_hat.min(1.0 - 1e-12))
        }
    }
}

/// Scores `replicas` null data sets with `method`. Replica `b` uses stream `(seed, b)`, so the
/// result does not depend on scheduling. Scan-ZIP sees each replica's drawn indicators, the
/// other methods do not.
pub fn null_replicas(
    detector: &Detector<'_>,
    method: Method,
    p_hat: f64,
    total_cases: u64,
    replicas: usize,
    seed: u64,
) -> Result<Vec<ReplicaRecord>> {
    (0..replicas as u64)
        .into_par_iter()
        .map(|b| {
            score_replica(detector, method, p_hat, total_cases, seed, b).map_err(|e| ScanError::Replica {
                index: b,
                seed,
                source: Box::new(e),
            })
        })
        .collect()
}

fn score_replica(
    detector: &Detector<'_>,
    method: Method,
    p_hat: f64,
    total_cases: u64,
    seed: u64,
    b: u64,
) -> Result<ReplicaRecord> {
    let mut rng = stream(seed, Domain::NullReplica, b);
    let data = generate_null_replica(detector.map(), p_hat, total_cases, &mut rng)?;
    let zeros = data.structural_zero().map_or(0, |d| d.iter().filter(|&&z| z).count());
    let data = if method == Method::Zip { data } else { data.without_structural_zeros() };
    let log_lambda = detector.scan_log_lambda(&data, method)?;
    Ok(ReplicaRecord { replica_index: b, log_lambda, structural_zero_count: zeros })
}

/// `ln λ*`: the `⌈(1−α)B⌉`-th smallest replica statistic.
pub fn critical_log_lambda(log_lambdas: &[f64], alpha: f64) -> f64 {
    assert!(!log_lambdas.is_empty(), "no replicas");
    let mut sorted = log_lambdas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len();
    let rank = (((1.0 - alpha) * b as f64) - 1e-9).ceil().clamp(1.0, b as f64) as usize;
    sorted[rank - 1]
}

/// Rank p-value `(1 + #{λ_b ≥ λ_obs}) / (B + 1)`.
pub fn rank_p_value(log_lambda_obs: f64, log_lambdas: &[f64]) -> f64 {
    let r = log_lambdas.iter().filter(|&&l| l >= log_lambda_obs).count();
    (1 + r) as f64 / (log_lambdas.len() + 1) as f64
}

/// Scans `data`, then attaches the Monte Carlo p-value and critical value.
pub fn significance(
    detector: &Detector<'_>,
    data: &CaseData,
    method: Method,
    config: &NullReplicaConfig,
) -> Result<ScanOutcome> {
    Ok(significance_with_log(detector, data, method, config)?.0)
}

/// As [`significance`], also returning every replica's statistic in index order.
pub fn significance_with_log(
    detector: &Detector<'_>,
    data: &CaseData,
    method: Method,
    config: &NullReplicaConfig,
) -> Result<(ScanOutcome, Vec<ReplicaRecord>)> {
    config.validate()?;
    let mut outcome = detector.scan(data, method)?;
    let p_hat = null_p_hat(detector, data, method)?;
    let total = config.total_cases(detector.map(), data);
    let records = null_replicas(detector, method, p_hat, total, config.replicas, config.seed)?;
    let logs: Vec<f64> = records.iter().map(|r| r.log_lambda).collect();
    outcome.p_value = Some(rank_p_value(outcome.log_lambda, &logs));
    outcome.log_lambda_star = Some(critical_log_lambda(&logs, config.alpha));
    outcome.replicas = Some(ReplicaSummary {
        replicas: config.replicas,
        seed: config.seed,
        alpha: config.alpha,
        total_cases_rule: config.total_cases_rule,
        total_cases: total,
        p_hat,
        exceedances: logs.iter().filter(|&&l| l >= outcome.log_lambda).count(),
        min_log_lambda: logs.iter().copied().fold(f64::INFINITY, f64::min),
        max_log_lambda: logs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    });
    Ok((outcome, records))
}

/// Writes the replica log as CSV `replica_index,lambda,structural_zero_count`.
pub fn write_replica_log<W: std::io::Write>(writer: W, records: &[ReplicaRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["replica_index", "lambda", "structural_zero_count"])?;
    for r in records {
        w.write_record([
            r.replica_index.to_string(),
            r.log_lambda.exp().to_string(),
            r.structural_zero_count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::Region;

    fn line(pops: &[f64]) -> RegionMap {
        RegionMap::new(
            pops.iter()
                .enumerate()
                .map(|(i, &p)| Region { id: format!("r{i}"), x: i as f64, y: 0.0, population: p })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn critical_value_is_an_order_statistic() {
        let logs: Vec<f64> = (1..=999).map(|i| i as f64).collect();
        // ⌈0.95 · 999⌉ = 950
        assert_eq!(critical_log_lambda(&logs, 0.05), 950.0);
        let logs: Vec<f64> = (1..=20).rev().map(|i| i as f64).collect();
        assert_eq!(critical_log_lambda(&logs, 0.05), 19.0);
    }

    #[test]
    fn rank_p_value_extremes() {
        let logs: Vec<f64> = (1..=999).map(|i| i as f64).collect();
        assert_eq!(rank_p_value(0.5, &logs), 1.0);
        assert_eq!(rank_p_value(1000.0, &logs), 1.0 / 1000.0);
    }

    #[test]
    fn single_live_region_gets_everything() {
        let map = line(&[5.0, 5.0]);
        let mut rng = stream(1, Domain::NullReplica, 0);
        let zero = [false, true];
        let counts = multinomial(&map, &zero, 5.0, 10, &mut rng).unwrap();
        assert_eq!(counts, vec![10, 0]);
    }

    #[test]
    fn replica_keeps_total_and_zeros_are_empty() {
        let map = line(&[10.0, 20.0, 30.0, 40.0, 50.0]);
        for b in 0..200 {
            let mut rng = stream(3, Domain::NullReplica, b);
            let data = generate_null_replica(&map, 0.3, 17, &mut rng).unwrap();
            assert_eq!(data.total_cases(), 17);
            let d = data.structural_zero().unwrap();
            assert!(d.iter().any(|&z| !z));
            for i in 0..5 {
                if d[i] {
                    assert_eq!(data.counts()[i], 0);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = NullReplicaConfig { replicas: 18, ..NullReplicaConfig::default() };
        assert!(bad.validate().is_err());
        let bad = NullReplicaConfig { alpha: 1.0, ..NullReplicaConfig::default() };
        assert!(bad.validate().is_err());
        let map = line(&[1.0, 1.0]);
        assert!(generate_null_replica(&map, 1.0, 3, &mut stream(0, Domain::NullReplica, 0)).is_err());
    }
}
