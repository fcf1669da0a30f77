//! Study-area geometry, case data and circular candidate zones.
//!
//! Candidate zones are the k-nearest-neighbour circular windows: for every
//! centre region the zone grows one nearest neighbour at a time until the
//! population cap is reached.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScanError};

/// A single aggregated region (areal unit) with its centroid and population at risk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub population: f64,
}

/// The study area: regions in a fixed order plus the total population.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMap {
    regions: Vec<Region>,
    total_population: f64,
}

impl RegionMap {
    pub fn new(regions: Vec<Region>) -> Result<Self> {
        if regions.len() < 2 {
            return Err(ScanError::InvalidInput(format!(
                "a map needs at least 2 regions, got {}",
                regions.len()
            )));
        }
        let mut seen = HashSet::with_capacity(regions.len());
        for r in &regions {
            if !seen.insert(r.id.as_str()) {
                return Err(ScanError::InvalidInput(format!("duplicate region id `{}`", r.id)));
            }
            if !(r.population.is_finite() && r.population >= 0.0) {
                return Err(ScanError::InvalidInput(format!(
                    "region `{}` has invalid population {}",
                    r.id, r.population
                )));
            }
            if !(r.x.is_finite() && r.y.is_finite()) {
                return Err(ScanError::InvalidInput(format!(
                    "region `{}` has non-finite coordinates",
                    r.id
                )));
            }
        }
        let total_population = regions.iter().map(|r| r.population).sum::<f64>();
        if total_population <= 0.0 {
            return Err(ScanError::InvalidInput("total population is zero".into()));
        }
        Ok(Self { regions, total_population })
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn region(&self, i: usize) -> &Region {
        &self.regions[i]
    }

    pub fn population(&self, i: usize) -> f64 {
        self.regions[i].population
    }

    pub fn populations(&self) -> impl Iterator<Item = f64> + '_ {
        self.regions.iter().map(|r| r.population)
    }

    pub fn total_population(&self) -> f64 {
        self.total_population
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.regions.iter().position(|r| r.id == id)
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i < self.regions.len() {
            Ok(())
        } else {
            Err(ScanError::InvalidIndex { index: i, len: self.regions.len() })
        }
    }

    fn dist2(&self, a: usize, b: usize) -> f64 {
        let (ra, rb) = (&self.regions[a], &self.regions[b]);
        let (dx, dy) = (ra.x - rb.x, ra.y - rb.y);
        dx * dx + dy * dy
    }

    /// Returns a copy of the map keeping only the regions for which `keep` is true.
    pub fn restrict(&self, keep: &[bool]) -> Result<RegionMap> {
        RegionMap::new(
            self.regions
                .iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .map(|(r, _)| r.clone())
                .collect(),
        )
    }
}

/// Observed counts `x_i` and optional structural-zero indicators `d_i`,
/// aligned with the region order of a [`RegionMap`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseData {
    counts: Vec<u64>,
    structural_zero: Option<Vec<bool>>,
}

impl CaseData {
    pub fn new(map: &RegionMap, counts: Vec<u64>, structural_zero: Option<Vec<bool>>) -> Result<Self> {
        if counts.len() != map.len() {
            return Err(ScanError::InvalidInput(format!(
                "{} counts for a map with {} regions",
                counts.len(),
                map.len()
            )));
        }
        if let Some(d) = &structural_zero {
            if d.len() != counts.len() {
                return Err(ScanError::InvalidInput(format!(
                    "{} structural-zero flags for {} regions",
                    d.len(),
                    counts.len()
                )));
            }
            // P(X_i > 0, d_i = 1) = 0
            if let Some(i) = (0..d.len()).find(|&i| d[i] && counts[i] > 0) {
                return Err(ScanError::InvalidInput(format!(
                    "region `{}` is flagged as a structural zero but has {} cases",
                    map.region(i).id,
                    counts[i]
                )));
            }
        }
        Ok(Self { counts, structural_zero })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn structural_zero(&self) -> Option<&[bool]> {
        self.structural_zero.as_deref()
    }

    pub fn total_cases(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Structural-zero indicators as reals (`0.0`/`1.0`), if present.
    pub fn delta(&self) -> Option<Vec<f64>> {
        self.structural_zero
            .as_ref()
            .map(|d| d.iter().map(|&z| if z { 1.0 } else { 0.0 }).collect())
    }

    /// The same counts without the structural-zero indicators.
    pub fn without_structural_zeros(&self) -> CaseData {
        CaseData { counts: self.counts.clone(), structural_zero: None }
    }
}

/// A candidate cluster: a set of region indices grown around a centre region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    /// Members in the order they were added (nearest first).
    pub members: Vec<usize>,
    pub center: usize,
    pub pop_inside: f64,
}

impl Zone {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.contains(&i)
    }

    pub fn cases_inside(&self, data: &CaseData) -> u64 {
        self.members.iter().map(|&i| data.counts()[i]).sum()
    }

    /// Membership mask over `k` regions.
    pub fn mask(&self, k: usize) -> Vec<bool> {
        let mut m = vec![false; k];
        for &i in &self.members {
            m[i] = true;
        }
        m
    }

    pub fn sorted_members(&self) -> Vec<usize> {
        let mut s = self.members.clone();
        s.sort_unstable();
        s
    }
}

/// All regions ordered by ascending centroid distance from region `i`, starting with `i`.
/// Equal distances are broken by ascending region index.
pub fn nearest_neighbor_order(map: &RegionMap, i: usize) -> Result<Vec<usize>> {
    map.check_index(i)?;
    let mut order: Vec<(f64, usize)> = (0..map.len()).map(|j| (map.dist2(i, j), j)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    // i is at distance 0; a coincident centroid with a lower index would otherwise precede it.
    let mut out: Vec<usize> = Vec::with_capacity(map.len());
    out.push(i);
    out.extend(order.into_iter().map(|(_, j)| j).filter(|&j| j != i));
    Ok(out)
}

/// Reference to a zone inside a [`ZoneFamily`]: the first `len` entries of the centre's order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZoneRef {
    pub center: u32,
    pub len: u32,
}

/// The deduplicated family of circular zones for a map.
///
/// Zones are stored as (centre, prefix length) pairs over truncated
/// nearest-neighbour orders, in emission order: centres ascending, then
/// prefix length ascending. A member set reachable from several centres is
/// kept only under the first centre that produces it.
#[derive(Debug, Clone)]
pub struct ZoneFamily {
    max_pop_fraction: f64,
    orders: Vec<Vec<u32>>,
    zones: Vec<ZoneRef>,
}

impl ZoneFamily {
    pub fn max_pop_fraction(&self) -> f64 {
        self.max_pop_fraction
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    /// Number of regions of the map the family was built for.
    pub fn num_regions(&self) -> usize {
        self.orders.len()
    }

    pub fn refs(&self) -> &[ZoneRef] {
        &self.zones
    }

    /// Truncated nearest-neighbour order of a centre (the longest admissible prefix).
    pub fn order(&self, center: usize) -> &[u32] {
        &self.orders[center]
    }

    pub fn members(&self, z: ZoneRef) -> &[u32] {
        &self.orders[z.center as usize][..z.len as usize]
    }

    pub fn zone(&self, map: &RegionMap, idx: usize) -> Zone {
        self.materialize(map, self.zones[idx])
    }

    pub fn materialize(&self, map: &RegionMap, z: ZoneRef) -> Zone {
        let members: Vec<usize> = self.members(z).iter().map(|&m| m as usize).collect();
        let pop_inside = members.iter().map(|&m| map.population(m)).sum();
        Zone { members, center: z.center as usize, pop_inside }
    }

    pub fn zones<'a>(&'a self, map: &'a RegionMap) -> impl Iterator<Item = Zone> + 'a {
        self.zones.iter().map(move |&z| self.materialize(map, z))
    }

    /// Groups the zone list by centre: `(center, emitted prefix lengths)` with lengths ascending.
    pub fn by_center(&self) -> impl Iterator<Item = (usize, &[ZoneRef])> {
        self.zones
            .chunk_by(|a, b| a.center == b.center)
            .map(|chunk| (chunk[0].center as usize, chunk))
    }
}

/// Enumerates the circular windows `z_i^(1) ⊂ z_i^(2) ⊂ …` for every centre `i`.
///
/// A window is admitted while its population does not exceed
/// `max_pop_fraction × total population`; singletons are always admitted.
pub fn enumerate_circular_zones(map: &RegionMap, max_pop_fraction: f64) -> Result<ZoneFamily> {
    if !(max_pop_fraction > 0.0 && max_pop_fraction <= 1.0) {
        return Err(ScanError::InvalidInput(format!(
            "max_pop_fraction must lie in (0, 1], got {max_pop_fraction}"
        )));
    }
    let limit = max_pop_fraction * map.total_population();
    let slack = 1e-9 * map.total_population();
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    let mut orders = Vec::with_capacity(map.len());
    let mut zones = Vec::new();
    for center in 0..map.len() {
        let order = nearest_neighbor_order(map, center)?;
        let mut pop = 0.0;
        let mut keep = 0;
        for (j, &r) in order.iter().enumerate() {
            pop += map.population(r);
            if j > 0 && pop > limit + slack {
                break;
            }
            keep = j + 1;
        }
        let order: Vec<u32> = order[..keep].iter().map(|&r| r as u32).collect();
        let mut key: Vec<u32> = Vec::with_capacity(keep);
        for len in 1..=keep {
            let pos = key.binary_search(&order[len - 1]).unwrap_err();
            key.insert(pos, order[len - 1]);
            if !seen.contains(&key) {
                seen.insert(key.clone());
                zones.push(ZoneRef { center: center as u32, len: len as u32 });
            }
        }
        orders.push(order);
    }
    Ok(ZoneFamily { max_pop_fraction, orders, zones })
}
