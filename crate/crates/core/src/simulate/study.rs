use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::{draw_cases, null_scenario, sensitivity_ppv, Scenario};
use crate::detector::{Detector, Method, ScanConfig};
use crate::error::{Result, ScanError};
use crate::inference::{critical_log_lambda, null_replicas, TotalCasesRule};
use crate::map::{enumerate_circular_zones, RegionMap, ZoneFamily};
use crate::rng::{stream, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    /// Number of simulated data sets `N`.
    pub studies: usize,
    /// Number of null replicas `B` behind the critical value.
    pub replicas: usize,
    pub seed: u64,
    pub alpha: f64,
    pub total_cases_rule: TotalCasesRule,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self { studies: 1000, replicas: 999, seed: 0, alpha: 0.05, total_cases_rule: TotalCasesRule::Observed }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.studies == 0 {
            return Err(ScanError::InvalidInput("need at least one study".into()));
        }
        if self.replicas < 19 {
            return Err(ScanError::InvalidInput(format!("need at least 19 replicas, got {}", self.replicas)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ScanError::InvalidInput(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    /// Share of studies with `λ > λ*`; the type-I error rate in a null study.
    pub power: f64,
    /// Mean sensitivity over all studies (0 without a true cluster).
    pub sensitivity: f64,
    /// Mean positive predictive value over all studies (0 without a true cluster).
    pub ppv: f64,
    pub rejections: usize,
    pub log_lambda_star: f64,
    /// `ln λ` of every study in index order.
    pub log_lambdas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub scenario: String,
    pub studies: usize,
    pub replicas: usize,
    pub seed: u64,
    pub alpha: f64,
    pub cluster_risk: f64,
    pub methods: Vec<MethodResult>,
}

impl StudyReport {
    pub fn method(&self, m: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|r| r.method == m)
    }
}

type CriticalKey = (Method, u64, u64);

/// Runs power and type-I studies on one map, caching critical values across scenarios that
/// share a null model.
pub struct StudyRunner<'a> {
    detector: Detector<'a>,
    config: StudyConfig,
    critical: Mutex<HashMap<CriticalKey, f64>>,
}

impl<'a> StudyRunner<'a> {
    pub fn new(map: &'a RegionMap, zones: &'a ZoneFamily, scan: ScanConfig, config: StudyConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { detector: Detector::new(map, zones, scan)?, config, critical: Mutex::new(HashMap::new()) })
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    fn null_total(&self, scenario: &Scenario) -> u64 {
        match self.config.total_cases_rule {
            TotalCasesRule::Observed => scenario.total_cases,
            TotalCasesRule::PopulationTotal => self.detector.map().total_population().round() as u64,
        }
    }

    /// `ln λ*` for `method` from `B` null replicas with structural-zero probability `p_hat`.
    pub fn critical_log_lambda(&self, method: Method, p_hat: f64, total_cases: u64) -> Result<f64> {
        let key = (method, p_hat.to_bits(), total_cases);
        if let Some(&v) = self.critical.lock().unwrap().get(&key) {
            return Ok(v);
        }
        let records =
            null_replicas(&self.detector, method, p_hat, total_cases, self.config.replicas, self.config.seed)?;
        let logs: Vec<f64> = records.iter().map(|r| r.log_lambda).collect();
        let v = critical_log_lambda(&logs, self.config.alpha);
        self.critical.lock().unwrap().insert(key, v);
        Ok(v)
    }

    /// Power, sensitivity and PPV of each method on `scenario`. Every method scores the same
    /// `N` case draws.
    pub fn power_study(&self, scenario: &Scenario, methods: &[Method]) -> Result<StudyReport> {
        self.run(scenario, methods, Domain::StudyDraw)
    }

    /// Rejection rates under the null: the fixed structural zeros of scenarios A–D, uniform
    /// risk and 507 cases. The rate is reported in [`MethodResult::power`].
    pub fn type_i_study(&self, methods: &[Method]) -> Result<StudyReport> {
        let scenario = null_scenario(self.detector.map())?;
        self.run(&scenario, methods, Domain::TypeIDraw)
    }

    fn run(&self, scenario: &Scenario, methods: &[Method], domain: Domain) -> Result<StudyReport> {
        if methods.is_empty() {
            return Err(ScanError::InvalidInput("no methods requested".into()));
        }
        let map = self.detector.map();
        let k = map.len() as f64;
        let total = self.null_total(scenario);
        let stars = methods
            .iter()
            .map(|&m| {
                let p_hat = if m == Method::Poisson { 0.0 } else { scenario.structural_zeros.len() as f64 / k };
                self.critical_log_lambda(m, p_hat, total)
            })
            .collect::<Result<Vec<f64>>>()?;

        let seed = self.config.seed;
        let per_study: Vec<Vec<(f64, f64, f64)>> = (0..self.config.studies as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed, domain, i);
                let data = draw_cases(map, scenario, &mut rng)?;
                let hidden = data.without_structural_zeros();
                methods
                    .iter()
                    .map(|&m| {
                        let input = if m == Method::Zip { &data } else { &hidden };
                        let out = self.detector.scan(input, m)?;
                        let (s, p) = sensitivity_ppv(&out.best_zone, &scenario.true_cluster, map);
                        Ok((out.log_lambda, s, p))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;

        let n = self.config.studies as f64;
        let results = methods
            .iter()
            .zip(&stars)
            .enumerate()
            .map(|(j, (&method, &star))| {
                let log_lambdas: Vec<f64> = per_study.iter().map(|r| r[j].0).collect();
                let rejections = log_lambdas.iter().filter(|&&l| l > star).count();
                MethodResult {
                    method,
                    power: rejections as f64 / n,
                    sensitivity: per_study.iter().map(|r| r[j].1).sum::<f64>() / n,
                    ppv: per_study.iter().map(|r| r[j].2).sum::<f64>() / n,
                    rejections,
                    log_lambda_star: star,
                    log_lambdas,
                }
            })
            .collect();
        Ok(StudyReport {
            scenario: scenario.name.clone(),
            studies: self.config.studies,
            replicas: self.config.replicas,
            seed,
            alpha: self.config.alpha,
            cluster_risk: scenario.cluster_risk(),
            methods: results,
        })
    }
}

/// One power study with default scan settings.
pub fn power_study(map: &RegionMap, scenario: &Scenario, method: Method, config: StudyConfig) -> Result<StudyReport> {
    let scan = ScanConfig::default();
    let zones = enumerate_circular_zones(map, scan.max_pop_fraction)?;
    StudyRunner::new(map, &zones, scan, config)?.power_study(scenario, &[method])
}

/// The type-I error rate of `method` with default scan settings.
pub fn type_i_study(map: &RegionMap, method: Method, config: StudyConfig) -> Result<f64> {
    let scan = ScanConfig::default();
    let zones = enumerate_circular_zones(map, scan.max_pop_fraction)?;
    let report = StudyRunner::new(map, &zones, scan, config)?.type_i_study(&[method])?;
    Ok(report.methods[0].power)
}
