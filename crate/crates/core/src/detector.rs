//! Most-likely-cluster search for the Scan-Poisson, Scan-ZIP and Scan-ZIP+EM statistics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::em::{em_fit, EmConfig, EmScratch, GroupedEm, GroupedSolution, ZeroClasses};
use crate::error::{Result, ScanError};
use crate::inference::ReplicaSummary;
use crate::likelihood::{log_llr_raw, xlogy, ZipFit};
use crate::map::{enumerate_circular_zones, CaseData, RegionMap, Zone, ZoneFamily, ZoneRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Kulldorff's Poisson scan.
    Poisson,
    /// ZIP scan with known structural zeros.
    Zip,
    /// ZIP scan with structural zeros estimated by EM.
    ZipEm,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Poisson, Method::Zip, Method::ZipEm];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Poisson => "poisson",
            Method::Zip => "zip",
            Method::ZipEm => "zip-em",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = ScanError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "poisson" => Ok(Method::Poisson),
            "zip" => Ok(Method::Zip),
            "zip-em" | "zip_em" | "zipem" => Ok(Method::ZipEm),
            other => Err(ScanError::InvalidInput(format!(
                "unknown method `{other}` (expected poisson, zip or zip-em)"
            ))),
        }
    }
}

/// Which structural-zero weights enter the null-model likelihood of a Scan-ZIP+EM ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NullDelta {
    /// The converged per-zone `δ̂` is used in both numerator and denominator.
    PerZone,
    /// The denominator comes from a separate EM fit of the null model.
    SeparateNullEm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub max_pop_fraction: f64,
    pub em: EmConfig,
    pub null_delta: NullDelta,
    /// Skip zones whose likelihood-ratio upper bound cannot beat the current best.
    /// Never changes the outcome.
    pub prune: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self { max_pop_fraction: 0.5, em: EmConfig::default(), null_delta: NullDelta::PerZone, prune: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmDiagnostics {
    pub zones_fitted: usize,
    pub zones_not_converged: usize,
    pub max_iterations: usize,
    pub total_iterations: u64,
    pub best_zone_iterations: usize,
    pub best_zone_converged: bool,
    pub null_fit_iterations: Option<usize>,
    pub null_fit_converged: Option<bool>,
}

impl EmDiagnostics {
    fn record(&mut self, sol: &GroupedSolution) {
        self.zones_fitted += 1;
        self.total_iterations += sol.iterations as u64;
        self.max_iterations = self.max_iterations.max(sol.iterations);
        if !sol.converged {
            self.zones_not_converged += 1;
        }
    }
}

/// Result of a scan: the most likely cluster and its statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanOutcome {
    pub method: Method,
    pub best_zone: Zone,
    pub cases_inside: u64,
    /// `ln λ`, always ≥ 0.
    pub log_lambda: f64,
    /// Parameter estimates for the winning zone (ZIP methods only).
    pub fit: Option<ZipFit>,
    pub p_value: Option<f64>,
    pub log_lambda_star: Option<f64>,
    pub replicas: Option<ReplicaSummary>,
    pub em: Option<EmDiagnostics>,
}

impl ScanOutcome {
    pub fn lambda(&self) -> f64 {
        self.log_lambda.exp()
    }

    pub fn lambda_star(&self) -> Option<f64> {
        self.log_lambda_star.map(f64::exp)
    }

    /// `λ_obs > λ*`, once a critical value is attached.
    pub fn rejected(&self) -> Option<bool> {
        self.log_lambda_star.map(|s| self.log_lambda > s)
    }
}

/// Running maximum with the deterministic tie-break: larger `ln λ`, then fewer
/// members, then lower centre index.
#[derive(Debug, Clone, Copy)]
struct Best {
    log: f64,
    zone: ZoneRef,
}

impl Best {
    fn initial() -> Self {
        // every zone has ln λ ≥ 0 and {0} is always the first emitted zone
        Best { log: 0.0, zone: ZoneRef { center: 0, len: 1 } }
    }

    fn offer(&mut self, log: f64, zone: ZoneRef) {
        let better = log > self.log
            || (log == self.log
                && (zone.len < self.zone.len || (zone.len == self.zone.len && zone.center < self.zone.center)));
        if better {
            *self = Best { log, zone };
        }
    }
}

/// Scans one map with a fixed zone family; reusable across many data sets.
#[derive(Debug, Clone)]
pub struct Detector<'a> {
    map: &'a RegionMap,
    zones: &'a ZoneFamily,
    config: ScanConfig,
}

impl<'a> Detector<'a> {
    pub fn new(map: &'a RegionMap, zones: &'a ZoneFamily, config: ScanConfig) -> Result<Self> {
        config.em.validate()?;
        if zones.num_regions() != map.len() {
            return Err(ScanError::InvalidInput("zone family does not belong to this map".into()));
        }
        Ok(Self { map, zones, config })
    }

    pub fn map(&self) -> &RegionMap {
        self.map
    }

    pub fn zones(&self) -> &ZoneFamily {
        self.zones
    }

    pub fn config(&self) -> &ScanConfig {
        &self.config
    }

    fn check_data(&self, data: &CaseData) -> Result<()> {
        if data.len() != self.map.len() {
            return Err(ScanError::InvalidInput(format!(
                "case data has {} regions, map has {}",
                data.len(),
                self.map.len()
            )));
        }
        if data.total_cases() == 0 {
            return Err(ScanError::Degenerate("no cases observed".into()));
        }
        Ok(())
    }

    /// Full scan: winning zone, statistic and (for ZIP methods) the winning zone's fit.
    pub fn scan(&self, data: &CaseData, method: Method) -> Result<ScanOutcome> {
        self.check_data(data)?;
        let (best, em) = self.search(data, method)?;
        let zone = self.zones.materialize(self.map, best.zone);
        let fit = match method {
            Method::Poisson => None,
            Method::Zip => {
                let delta = data.delta().ok_or(ScanError::MissingStructuralZeros("zip"))?;
                known_delta_fit(self.map, data, &delta, &zone)
            }
            Method::ZipEm => em_fit(self.map, data, Some(&zone), &self.config.em).ok().map(|f| f.fit),
        };
        Ok(ScanOutcome {
            method,
            cases_inside: zone.cases_inside(data),
            best_zone: zone,
            log_lambda: best.log,
            fit,
            p_value: None,
            log_lambda_star: None,
            replicas: None,
            em,
        })
    }

    /// Only `ln λ` of the most likely cluster; the fast path for Monte Carlo replicas.
    pub fn scan_log_lambda(&self, data: &CaseData, method: Method) -> Result<f64> {
        self.check_data(data)?;
        Ok(self.search(data, method)?.0.log)
    }

    fn search(&self, data: &CaseData, method: Method) -> Result<(Best, Option<EmDiagnostics>)> {
        match method {
            Method::Poisson => {
                let pops: Vec<f64> = self.map.populations().collect();
                Ok((self.scan_weighted(data, &pops), None))
            }
            Method::Zip => {
                let d = data.structural_zero().ok_or(ScanError::MissingStructuralZeros("zip"))?;
                let pops: Vec<f64> = self
                    .map
                    .populations()
                    .zip(d)
                    .map(|(n, &z)| if z { 0.0 } else { n })
                    .collect();
                Ok((self.scan_weighted(data, &pops), None))
            }
            Method::ZipEm => {
                let (best, diag) = self.scan_em(data)?;
                Ok((best, Some(diag)))
            }
        }
    }

    /// Kulldorff scan with per-region populations `pops` (the raw populations for
    /// Scan-Poisson, `n_i(1 − d_i)` for Scan-ZIP).
    fn scan_weighted(&self, data: &CaseData, pops: &[f64]) -> Best {
        let counts = data.counts();
        let x_tot: f64 = counts.iter().map(|&c| c as f64).sum();
        let n_tot: f64 = pops.iter().sum();
        let floor = 1e-12 * n_tot;
        let mut best = Best::initial();
        for (center, chunk) in self.zones.by_center() {
            let order = self.zones.order(center);
            let (mut x_in, mut n_in) = (0.0, 0.0);
            let mut next = 0;
            for (j, &r) in order.iter().enumerate() {
                if next == chunk.len() {
                    break;
                }
                x_in += counts[r as usize] as f64;
                n_in += pops[r as usize];
                if chunk[next].len as usize == j + 1 {
                    let n_out = n_tot - n_in;
                    if n_in > 0.0 && n_out > floor {
                        best.offer(log_llr_raw(x_in, n_in, x_tot - x_in, n_out), chunk[next]);
                    }
                    next += 1;
                }
            }
        }
        best
    }

    fn scan_em(&self, data: &CaseData) -> Result<(Best, EmDiagnostics)> {
        let map = self.map;
        let counts = data.counts();
        let classes = ZeroClasses::new(map, data);
        let k = map.len() as f64;
        let x_tot: f64 = counts.iter().map(|&c| c as f64).sum();
        let n_tot = map.total_population();
        let npos_tot: f64 = (0..map.len()).filter(|&i| counts[i] > 0).map(|i| map.population(i)).sum();
        let floor = 1e-12 * n_tot;

        // Upper bound on ln λ per zone: the adjusted in-zone population is at least the
        // population of its positive-count regions, the adjusted outside population at most
        // the full outside population, and ln λ decreases in the former and increases in the
        // latter whenever the rate indicator holds.
        struct Candidate {
            bound: f64,
            zone: ZoneRef,
            x_in: f64,
            npos_in: f64,
        }
        let mut candidates = Vec::new();
        for (center, chunk) in self.zones.by_center() {
            let order = self.zones.order(center);
            let (mut x_in, mut npos_in, mut n_in) = (0.0, 0.0, 0.0);
            let mut next = 0;
            for (j, &r) in order.iter().enumerate() {
                if next == chunk.len() {
                    break;
                }
                let r = r as usize;
                n_in += map.population(r);
                if counts[r] > 0 {
                    x_in += counts[r] as f64;
                    npos_in += map.population(r);
                }
                if chunk[next].len as usize == j + 1 {
                    let n_out_full = n_tot - n_in;
                    if npos_in > 0.0 && n_out_full > floor {
                        let bound = log_llr_raw(x_in, npos_in, x_tot - x_in, n_out_full);
                        if bound > 0.0 {
                            candidates.push(Candidate { bound, zone: chunk[next], x_in, npos_in });
                        }
                    }
                    next += 1;
                }
            }
        }

        let mut diag = EmDiagnostics::default();
        let em_cfg = &self.config.em;
        let mut scratch = EmScratch::default();
        let mut count_in = vec![0.0; classes.pops.len()];
        let mut count_out = vec![0.0; classes.pops.len()];

        let null_ll = match self.config.null_delta {
            NullDelta::PerZone => None,
            NullDelta::SeparateNullEm => {
                let problem = GroupedEm {
                    k,
                    x_in: 0.0,
                    x_out: x_tot,
                    npos_in: 0.0,
                    npos_out: npos_tot,
                    pops: &classes.pops,
                    count_in: &vec![0.0; classes.pops.len()],
                    count_out: &classes.totals,
                    has_zone: false,
                };
                let sol = problem.solve(em_cfg, &mut scratch, None);
                diag.null_fit_iterations = Some(sol.iterations);
                diag.null_fit_converged = Some(sol.converged);
                Some(complete_loglik(k, &sol, &[(x_tot, sol.n_out_adj, sol.params.theta0)]))
            }
        };
        let prune = self.config.prune && null_ll.is_none();
        if prune {
            candidates.sort_by(|a, b| b.bound.total_cmp(&a.bound));
        }

        let mut best = Best::initial();
        let mut best_sol: Option<GroupedSolution> = None;
        for c in &candidates {
            if prune && c.bound < best.log - 1e-9 * (1.0 + best.log) {
                break;
            }
            count_in.iter_mut().for_each(|v| *v = 0.0);
            for &m in self.zones.members(c.zone) {
                if let Some(g) = classes.class_of[m as usize] {
                    count_in[g] += 1.0;
                }
            }
            for g in 0..count_out.len() {
                count_out[g] = classes.totals[g] - count_in[g];
            }
            let problem = GroupedEm {
                k,
                x_in: c.x_in,
                x_out: x_tot - c.x_in,
                npos_in: c.npos_in,
                npos_out: npos_tot - c.npos_in,
                pops: &classes.pops,
                count_in: &count_in,
                count_out: &count_out,
                has_zone: true,
            };
            let sol = problem.solve(em_cfg, &mut scratch, None);
            diag.record(&sol);
            let log = zone_log_lambda(k, &problem, &sol, null_ll);
            let before = best.zone;
            best.offer(log, c.zone);
            if best.zone != before {
                best_sol = Some(sol);
            }
        }
        if let Some(sol) = best_sol {
            diag.best_zone_iterations = sol.iterations;
            diag.best_zone_converged = sol.converged;
        }
        Ok((best, diag))
    }
}

/// Complete-data log-likelihood at a fitted EM solution, without the terms that cancel in
/// every ratio (`Σ x_i log n_i` and `log x_i!`). `parts` are `(x, adjusted n, θ)` triples.
fn complete_loglik(k: f64, sol: &GroupedSolution, parts: &[(f64, f64, f64)]) -> f64 {
    let p = sol.params.p;
    let s = sol.sum_delta;
    let mut ll = xlogy(s, p) + xlogy(k - s, 1.0 - p);
    for &(x, n, theta) in parts {
        ll += -theta * n + xlogy(x, theta);
    }
    ll
}

fn zone_log_lambda(k: f64, problem: &GroupedEm<'_>, sol: &GroupedSolution, null_ll: Option<f64>) -> f64 {
    let (n_in, n_out) = (sol.n_in_adj, sol.n_out_adj);
    if !(n_in > 0.0 && n_out > 0.0) {
        return 0.0;
    }
    match null_ll {
        None => log_llr_raw(problem.x_in, n_in, problem.x_out, n_out),
        Some(l0) => {
            if problem.x_in * n_out <= problem.x_out * n_in {
                return 0.0;
            }
            let tz = sol.params.theta_z.unwrap_or(sol.params.theta0);
            let la = complete_loglik(
                k,
                sol,
                &[(problem.x_in, n_in, tz), (problem.x_out, n_out, sol.params.theta0)],
            );
            (la - l0).max(0.0)
        }
    }
}

fn known_delta_fit(map: &RegionMap, data: &CaseData, delta: &[f64], zone: &Zone) -> Option<ZipFit> {
    let (tz, t0, p) = crate::likelihood::zip_mle_alt(map, data, delta, zone).ok()?;
    Some(ZipFit { p_hat: p, theta0_hat: t0, theta_z_hat: Some(tz), delta_hat: delta.to_vec() })
}

fn scan_default(map: &RegionMap, data: &CaseData, method: Method) -> Result<ScanOutcome> {
    let config = ScanConfig::default();
    let zones = enumerate_circular_zones(map, config.max_pop_fraction)?;
    Detector::new(map, &zones, config)?.scan(data, method)
}

/// Scan-Poisson with default settings (circular zones up to half the population).
pub fn scan_poisson(map: &RegionMap, data: &CaseData) -> Result<ScanOutcome> {
    scan_default(map, data, Method::Poisson)
}

/// Scan-ZIP with the structural zeros carried by `data`.
pub fn scan_zip(map: &RegionMap, data: &CaseData) -> Result<ScanOutcome> {
    scan_default(map, data, Method::Zip)
}

/// Scan-ZIP+EM: structural zeros estimated per candidate zone.
pub fn scan_zip_em(map: &RegionMap, data: &CaseData) -> Result<ScanOutcome> {
    scan_default(map, data, Method::ZipEm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::Region;

    fn grid(n: usize, pops: &[f64]) -> RegionMap {
        RegionMap::new(
            (0..n * n)
                .map(|i| Region {
                    id: format!("g{i}"),
                    x: (i % n) as f64 + 0.01 * (i as f64).sin(),
                    y: (i / n) as f64 + 0.01 * (i as f64).cos(),
                    population: pops[i % pops.len()],
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("poison".parse::<Method>().is_err());
    }

    #[test]
    fn concentrated_cases_pick_the_singleton() {
        let map = grid(3, &[100.0]);
        let mut counts = vec![0; 9];
        counts[4] = 12;
        let data = CaseData::new(&map, counts, Some(vec![false; 9])).unwrap();
        for m in Method::ALL {
            let out = scan_default(&map, &data, m).unwrap();
            assert_eq!(out.best_zone.members, vec![4], "{m}");
            assert!(out.log_lambda > 0.0);
        }
    }

    #[test]
    fn proportional_cases_give_lambda_one_and_first_zone() {
        let map = grid(3, &[50.0]);
        let data = CaseData::new(&map, vec![2; 9], None).unwrap();
        let out = scan_poisson(&map, &data).unwrap();
        assert_eq!(out.log_lambda, 0.0);
        assert_eq!(out.lambda(), 1.0);
        assert_eq!(out.best_zone.members, vec![0]);
    }

    #[test]
    fn zip_requires_indicators_and_cases() {
        let map = grid(2, &[10.0]);
        let data = CaseData::new(&map, vec![1, 0, 0, 2], None).unwrap();
        assert!(matches!(scan_zip(&map, &data), Err(ScanError::MissingStructuralZeros(_))));
        let data = CaseData::new(&map, vec![0; 4], None).unwrap();
        assert!(matches!(scan_poisson(&map, &data), Err(ScanError::Degenerate(_))));
    }

    #[test]
    fn pruning_does_not_change_the_outcome() {
        let map = grid(4, &[100.0, 80.0, 120.0]);
        let counts = vec![0, 3, 1, 0, 5, 0, 2, 1, 0, 4, 0, 0, 1, 2, 0, 3];
        let data = CaseData::new(&map, counts, None).unwrap();
        let zones = enumerate_circular_zones(&map, 0.5).unwrap();
        let pruned = Detector::new(&map, &zones, ScanConfig::default()).unwrap();
        let full = Detector::new(&map, &zones, ScanConfig { prune: false, ..ScanConfig::default() }).unwrap();
        let a = pruned.scan(&data, Method::ZipEm).unwrap();
        let b = full.scan(&data, Method::ZipEm).unwrap();
        assert_eq!(a.best_zone, b.best_zone);
        assert_eq!(a.log_lambda, b.log_lambda);
        assert!(a.em.as_ref().unwrap().zones_fitted <= b.em.as_ref().unwrap().zones_fitted);
    }

    #[test]
    fn separate_null_em_variant_runs() {
        let map = grid(4, &[100.0]);
        let counts = vec![0, 3, 1, 0, 9, 6, 2, 1, 0, 4, 0, 0, 1, 2, 0, 3];
        let data = CaseData::new(&map, counts, None).unwrap();
        let zones = enumerate_circular_zones(&map, 0.5).unwrap();
        let cfg = ScanConfig { null_delta: NullDelta::SeparateNullEm, ..ScanConfig::default() };
        let out = Detector::new(&map, &zones, cfg).unwrap().scan(&data, Method::ZipEm).unwrap();
        assert!(out.log_lambda >= 0.0);
        let diag = out.em.unwrap();
        assert_eq!(diag.null_fit_converged, Some(true));
        assert!(out.best_zone.contains(4));
    }
}
