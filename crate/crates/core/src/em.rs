//! EM estimation of latent structural-zero indicators for the ZIP model.
//!
//! Only zero-count regions carry a nonzero posterior `δ̂_i`, and two such
//! regions on the same side of the zone with the same population always share
//! it. The iteration therefore runs over classes of zero-count regions keyed
//! by (population, side), which makes a fit on an equal-population map O(1)
//! per iteration regardless of how many zeros there are.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScanError};
use crate::likelihood::ZipFit;
use crate::map::{CaseData, RegionMap, Zone};

/// Starting value rule for `p̂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitP {
    /// Fraction of zero-count regions, capped to `[1e-6, 1 − 1e-6]`.
    ZeroFraction,
    /// A fixed starting value in `[0, 1)`, used as given.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    /// Convergence threshold on `max_i |δ̂_i^(m) − δ̂_i^(m−1)|`.
    pub tol: f64,
    pub max_iter: usize,
    pub init_p: InitP,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 500, init_p: InitP::ZeroFraction }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(ScanError::InvalidInput(format!("EM tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(ScanError::InvalidInput("EM max_iter must be at least 1".into()));
        }
        if let InitP::Fixed(p) = self.init_p {
            if !(0.0..1.0).contains(&p) {
                return Err(ScanError::InvalidInput(format!("initial p must lie in [0, 1), got {p}")));
            }
        }
        Ok(())
    }
}

/// One parameter iterate `(p, θ_0, θ_Z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmParams {
    pub p: f64,
    pub theta0: f64,
    pub theta_z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmFit {
    pub fit: ZipFit,
    pub iterations: usize,
    pub converged: bool,
}

/// Posterior probability of a structural zero for a zero count with Poisson mean `mu`.
#[inline]
pub fn zero_posterior(p: f64, mu: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    p / (p + (1.0 - p) * (-mu).exp())
}

/// E-step: `δ̂_i = p / (p + (1−p) e^{−n_i θ_i})` for zero counts, 0 otherwise.
pub fn e_step(
    map: &RegionMap,
    data: &CaseData,
    zone: Option<&Zone>,
    p: f64,
    theta0: f64,
    theta_z: Option<f64>,
) -> Vec<f64> {
    let inside = zone.map(|z| z.mask(map.len()));
    (0..map.len())
        .map(|i| {
            if data.counts()[i] > 0 {
                return 0.0;
            }
            let theta = match (&inside, theta_z) {
                (Some(m), Some(tz)) if m[i] => tz,
                _ => theta0,
            };
            zero_posterior(p, map.population(i) * theta)
        })
        .collect()
}

/// Sufficient statistics of an EM problem for one zone (or the null model).
///
/// `pops` lists the distinct populations of zero-count regions; `count_in[g]`
/// and `count_out[g]` are how many zero-count regions of population `pops[g]`
/// lie inside and outside the zone. Without a zone everything is "outside".
#[derive(Debug, Clone, Copy)]
pub(crate) struct GroupedEm<'a> {
    pub k: f64,
    pub x_in: f64,
    pub x_out: f64,
    pub npos_in: f64,
    pub npos_out: f64,
    pub pops: &'a [f64],
    pub count_in: &'a [f64],
    pub count_out: &'a [f64],
    pub has_zone: bool,
}

#[derive(Debug, Default, Clone)]
pub(crate) struct EmScratch {
    pub delta_in: Vec<f64>,
    pub delta_out: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GroupedSolution {
    pub params: EmParams,
    pub n_in_adj: f64,
    pub n_out_adj: f64,
    pub sum_delta: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl GroupedEm<'_> {
    fn zero_fraction(&self) -> f64 {
        let zeros: f64 = self.count_in.iter().chain(self.count_out).sum();
        zeros / self.k
    }

    fn rate(x: f64, n: f64) -> f64 {
        if x == 0.0 {
            0.0
        } else {
            x / n
        }
    }

    /// Adjusted populations `Σ n_i(1−δ_i)` inside and outside.
    fn adjusted(&self, scratch: &EmScratch) -> (f64, f64) {
        let mut n_in = self.npos_in;
        let mut n_out = self.npos_out;
        for g in 0..self.pops.len() {
            n_in += self.count_in[g] * self.pops[g] * (1.0 - scratch.delta_in[g]);
            n_out += self.count_out[g] * self.pops[g] * (1.0 - scratch.delta_out[g]);
        }
        (n_in, n_out)
    }

    fn m_step(&self, scratch: &EmScratch) -> (EmParams, f64, f64, f64) {
        let (n_in, n_out) = self.adjusted(scratch);
        let mut sum_delta = 0.0;
        for g in 0..self.pops.len() {
            sum_delta += self.count_in[g] * scratch.delta_in[g] + self.count_out[g] * scratch.delta_out[g];
        }
        let params = if self.has_zone {
            EmParams {
                p: sum_delta / self.k,
                theta0: Self::rate(self.x_out, n_out),
                theta_z: Some(Self::rate(self.x_in, n_in)),
            }
        } else {
            EmParams { p: sum_delta / self.k, theta0: Self::rate(self.x_out, n_out), theta_z: None }
        };
        (params, n_in, n_out, sum_delta)
    }

    pub fn solve(&self, cfg: &EmConfig, scratch: &mut EmScratch, mut trace: Option<&mut Vec<EmParams>>) -> GroupedSolution {
        let groups = self.pops.len();
        scratch.delta_in.clear();
        scratch.delta_in.resize(groups, 0.0);
        scratch.delta_out.clear();
        scratch.delta_out.resize(groups, 0.0);

        // θ from δ = 0, p from the init rule
        let (mut params, mut n_in, mut n_out, mut sum_delta) = self.m_step(scratch);
        params.p = match cfg.init_p {
            InitP::ZeroFraction => self.zero_fraction().clamp(1e-6, 1.0 - 1e-6),
            InitP::Fixed(p) => p,
        };
        if let Some(t) = trace.as_deref_mut() {
            t.push(params);
        }

        let mut iterations = 0;
        let mut converged = false;
        while iterations < cfg.max_iter {
            iterations += 1;
            let tz = params.theta_z.unwrap_or(params.theta0);
            let mut change: f64 = 0.0;
            for g in 0..groups {
                if self.count_in[g] > 0.0 {
                    let d = zero_posterior(params.p, self.pops[g] * tz);
                    change = change.max((d - scratch.delta_in[g]).abs());
                    scratch.delta_in[g] = d;
                }
                if self.count_out[g] > 0.0 {
                    let d = zero_posterior(params.p, self.pops[g] * params.theta0);
                    change = change.max((d - scratch.delta_out[g]).abs());
                    scratch.delta_out[g] = d;
                }
            }
            (params, n_in, n_out, sum_delta) = self.m_step(scratch);
            if let Some(t) = trace.as_deref_mut() {
                t.push(params);
            }
            if change < cfg.tol {
                converged = true;
                break;
            }
        }
        GroupedSolution { params, n_in_adj: n_in, n_out_adj: n_out, sum_delta, iterations, converged }
    }
}

/// Zero-count regions grouped by exact population value.
#[derive(Debug, Clone)]
pub(crate) struct ZeroClasses {
    /// Distinct populations, ascending.
    pub pops: Vec<f64>,
    /// Class index per region; `None` for regions with a positive count.
    pub class_of: Vec<Option<usize>>,
    /// Number of zero-count regions per class over the whole map.
    pub totals: Vec<f64>,
}

impl ZeroClasses {
    pub fn new(map: &RegionMap, data: &CaseData) -> Self {
        let mut pops: Vec<f64> = (0..map.len())
            .filter(|&i| data.counts()[i] == 0)
            .map(|i| map.population(i))
            .collect();
        pops.sort_by(f64::total_cmp);
        pops.dedup();
        let mut totals = vec![0.0; pops.len()];
        let class_of = (0..map.len())
            .map(|i| {
                (data.counts()[i] == 0).then(|| {
                    let g = pops.binary_search_by(|v| v.total_cmp(&map.population(i))).unwrap();
                    totals[g] += 1.0;
                    g
                })
            })
            .collect();
        Self { pops, class_of, totals }
    }
}

/// Runs EM for `zone` (alternative model) or the null model when `zone` is `None`.
///
/// Alternates [`e_step`] with the closed-form M-step until the largest change in `δ̂` drops
/// below `cfg.tol`. Hitting `max_iter` is not an error: the last iterate is returned with
/// `converged = false`.
pub fn em_fit(map: &RegionMap, data: &CaseData, zone: Option<&Zone>, cfg: &EmConfig) -> Result<EmFit> {
    em_fit_inner(map, data, zone, cfg, None)
}

/// As [`em_fit`], also returning every parameter iterate starting from the initial values.
pub fn em_fit_traced(
    map: &RegionMap,
    data: &CaseData,
    zone: Option<&Zone>,
    cfg: &EmConfig,
) -> Result<(EmFit, Vec<EmParams>)> {
    let mut trace = Vec::new();
    let fit = em_fit_inner(map, data, zone, cfg, Some(&mut trace))?;
    Ok((fit, trace))
}

fn em_fit_inner(
    map: &RegionMap,
    data: &CaseData,
    zone: Option<&Zone>,
    cfg: &EmConfig,
    trace: Option<&mut Vec<EmParams>>,
) -> Result<EmFit> {
    cfg.validate()?;
    if data.counts().len() != map.len() {
        return Err(ScanError::InvalidInput("case data does not match the map".into()));
    }
    if data.total_cases() == 0 {
        return Err(ScanError::Degenerate("EM needs at least one region with a positive count".into()));
    }
    let classes = ZeroClasses::new(map, data);
    let inside = zone.map(|z| z.mask(map.len())).unwrap_or_else(|| vec![false; map.len()]);
    let mut count_in = vec![0.0; classes.pops.len()];
    let (mut x_in, mut x_out, mut npos_in, mut npos_out) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..map.len() {
        match classes.class_of[i] {
            Some(g) => {
                if inside[i] {
                    count_in[g] += 1.0;
                }
            }
            None => {
                let (x, n) = (data.counts()[i] as f64, map.population(i));
                if inside[i] {
                    x_in += x;
                    npos_in += n;
                } else {
                    x_out += x;
                    npos_out += n;
                }
            }
        }
    }
    let count_out: Vec<f64> = classes.totals.iter().zip(&count_in).map(|(t, c)| t - c).collect();
    if zone.is_some() {
        let pop_in = npos_in + classes.pops.iter().zip(&count_in).map(|(p, c)| p * c).sum::<f64>();
        let pop_out = npos_out + classes.pops.iter().zip(&count_out).map(|(p, c)| p * c).sum::<f64>();
        if !(pop_in > 0.0 && pop_out > 0.0) {
            return Err(ScanError::Degenerate("zone or its complement has zero population".into()));
        }
    }
    let problem = GroupedEm {
        k: map.len() as f64,
        x_in,
        x_out,
        npos_in,
        npos_out,
        pops: &classes.pops,
        count_in: &count_in,
        count_out: &count_out,
        has_zone: zone.is_some(),
    };
    let mut scratch = EmScratch::default();
    let sol = problem.solve(cfg, &mut scratch, trace);
    let delta_hat = (0..map.len())
        .map(|i| match classes.class_of[i] {
            Some(g) if inside[i] => scratch.delta_in[g],
            Some(g) => scratch.delta_out[g],
            None => 0.0,
        })
        .collect();
    Ok(EmFit {
        fit: ZipFit {
            p_hat: sol.params.p,
            theta0_hat: sol.params.theta0,
            theta_z_hat: sol.params.theta_z,
            delta_hat,
        },
        iterations: sol.iterations,
        converged: sol.converged,
    })
}
