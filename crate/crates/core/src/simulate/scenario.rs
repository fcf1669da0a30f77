use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::calibrate::calibrate_risks;
use crate::error::{Result, ScanError};
use crate::map::{CaseData, RegionMap, Zone};

/// Names of the scenarios shipped with the crate.
pub const BUILTIN_SCENARIOS: [&str; 9] = ["A0", "A", "B", "C", "D", "A1", "A2", "A3", "A4"];

/// Scenario file contents: region ids plus the calibration target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub true_cluster: Vec<String>,
    pub structural_zeros: Vec<String>,
    pub total_cases: u64,
    pub target_power: f64,
}

impl ScenarioSpec {
    pub fn from_json(src: &str) -> Result<Self> {
        Ok(serde_json::from_str(src)?)
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let src = match name {
            "A0" => include_str!("../../scenarios/A0.json"),
            "A" => include_str!("../../scenarios/A.json"),
            "B" => include_str!("../../scenarios/B.json"),
            "C" => include_str!("../../scenarios/C.json"),
            "D" => include_str!("../../scenarios/D.json"),
            "A1" => include_str!("../../scenarios/A1.json"),
            "A2" => include_str!("../../scenarios/A2.json"),
            "A3" => include_str!("../../scenarios/A3.json"),
            "A4" => include_str!("../../scenarios/A4.json"),
            other => return Err(ScanError::UnknownScenario(other.to_string())),
        };
        Self::from_json(src)
    }
}

/// A resolved scenario on a concrete map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub true_cluster: Vec<usize>,
    pub structural_zeros: Vec<usize>,
    pub relative_risks: Vec<f64>,
    pub total_cases: u64,
}

fn resolve(map: &RegionMap, ids: &[String], what: &str) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let i = map
            .index_of(id)
            .ok_or_else(|| ScanError::InvalidInput(format!("{what} lists unknown region `{id}`")))?;
        if out.contains(&i) {
            return Err(ScanError::InvalidInput(format!("{what} lists region `{id}` twice")));
        }
        out.push(i);
    }
    out.sort_unstable();
    Ok(out)
}

impl Scenario {
    /// Resolves region ids against `map` and calibrates the cluster risk.
    pub fn from_spec(map: &RegionMap, spec: &ScenarioSpec) -> Result<Self> {
        let true_cluster = resolve(map, &spec.true_cluster, "true_cluster")?;
        let structural_zeros = resolve(map, &spec.structural_zeros, "structural_zeros")?;
        let mut excluded = vec![false; map.len()];
        for &i in &structural_zeros {
            excluded[i] = true;
        }
        let relative_risks = calibrate_risks(map, &true_cluster, &excluded, spec.total_cases, spec.target_power)?;
        Ok(Self { name: spec.name.clone(), true_cluster, structural_zeros, relative_risks, total_cases: spec.total_cases })
    }

    pub fn structural_zero_mask(&self, k: usize) -> Vec<bool> {
        let mut m = vec![false; k];
        for &i in &self.structural_zeros {
            m[i] = true;
        }
        m
    }

    /// Calibrated risk inside the true cluster (1 for a null scenario).
    pub fn cluster_risk(&self) -> f64 {
        self.true_cluster.first().map_or(1.0, |&i| self.relative_risks[i])
    }
}

pub fn builtin_scenario(map: &RegionMap, name: &str) -> Result<Scenario> {
    Scenario::from_spec(map, &ScenarioSpec::builtin(name)?)
}

/// The null configuration of the type-I study: the structural zeros shared by scenarios
/// A–D, uniform risk and 507 cases.
pub fn null_scenario(map: &RegionMap) -> Result<Scenario> {
    let spec = ScenarioSpec::builtin("A")?;
    let structural_zeros = resolve(map, &spec.structural_zeros, "structural_zeros")?;
    Ok(Scenario {
        name: "null".into(),
        true_cluster: Vec::new(),
        structural_zeros,
        relative_risks: vec![1.0; map.len()],
        total_cases: spec.total_cases,
    })
}

/// Places `total_cases` cases one at a time with probability ∝ `n_i · risk_i`; a case landing
/// on a structural zero is discarded and drawn again.
pub fn draw_cases<R: Rng + ?Sized>(map: &RegionMap, scenario: &Scenario, rng: &mut R) -> Result<CaseData> {
    let k = map.len();
    if scenario.relative_risks.len() != k {
        return Err(ScanError::InvalidInput(format!(
            "scenario has {} risks for a map of {k} regions",
            scenario.relative_risks.len()
        )));
    }
    let zero = scenario.structural_zero_mask(k);
    let weights: Vec<f64> = (0..k).map(|i| map.population(i) * scenario.relative_risks[i]).collect();
    if !(0..k).any(|i| !zero[i] && weights[i] > 0.0) {
        return Err(ScanError::Degenerate("no region can receive cases".into()));
    }
    let dist = WeightedIndex::new(&weights).map_err(|e| ScanError::InvalidInput(format!("case weights: {e}")))?;
    let mut counts = vec![0u64; k];
    for _ in 0..scenario.total_cases {
        let i = loop {
            let i = dist.sample(rng);
            if !zero[i] {
                break i;
            }
        };
        counts[i] += 1;
    }
    CaseData::new(map, counts, Some(zero))
}

/// Population-weighted overlap: `(Pop(D ∩ T) / Pop(T), Pop(D ∩ T) / Pop(D))`.
pub fn sensitivity_ppv(detected: &Zone, true_cluster: &[usize], map: &RegionMap) -> (f64, f64) {
    let pop = |it: &mut dyn Iterator<Item = usize>| it.map(|i| map.population(i)).sum::<f64>();
    let inter = pop(&mut detected.members.iter().copied().filter(|i| true_cluster.contains(i)));
    let pop_true = pop(&mut true_cluster.iter().copied());
    let pop_detected = pop(&mut detected.members.iter().copied());
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    (ratio(inter, pop_true), ratio(inter, pop_detected))
}
