use rand::Rng;

use crate::map::{Region, RegionMap};
use crate::rng::{stream, Domain};

pub const HEX_ROWS: usize = 14;
pub const HEX_CELLS: usize = 203;
pub const HEX_POPULATION: f64 = 1000.0;
/// Maximum centroid displacement, as a fraction of the lattice pitch.
pub const HEX_JITTER: f64 = 0.05;

fn row_len(r: usize) -> usize {
    if r % 2 == 0 {
        15
    } else {
        14
    }
}

/// `(row, column)` of every cell in region order (row-major).
pub fn hex_cells() -> Vec<(usize, usize)> {
    (0..HEX_ROWS).flat_map(|r| (0..row_len(r)).map(move |c| (r, c))).collect()
}

pub fn hex_cell_id(row: usize, col: usize) -> String {
    format!("r{row:02}c{col:02}")
}

/// The 203-cell hexagonal lattice (unit pitch, odd rows offset by half a cell), every cell
/// with population 1000, centroids displaced by a seeded random offset of at most 5% of the
/// pitch.
pub fn build_hex_map(seed: u64) -> RegionMap {
    build_hex_map_with_jitter(seed, HEX_JITTER)
}

/// As [`build_hex_map`] with a custom maximum displacement (0 gives the exact lattice).
pub fn build_hex_map_with_jitter(seed: u64, jitter: f64) -> RegionMap {
    let mut rng = stream(seed, Domain::MapJitter, 0);
    let h = 3f64.sqrt() / 2.0;
    let regions = hex_cells()
        .into_iter()
        .map(|(r, c)| {
            let mut x = c as f64 + if r % 2 == 1 { 0.5 } else { 0.0 };
            let mut y = r as f64 * h;
            if jitter > 0.0 {
                let radius = jitter * rng.random::<f64>().sqrt();
                let angle = std::f64::consts::TAU * rng.random::<f64>();
                x += radius * angle.cos();
                y += radius * angle.sin();
            }
            Region { id: hex_cell_id(r, c), x, y, population: HEX_POPULATION }
        })
        .collect();
    RegionMap::new(regions).expect("hex lattice is a valid map")
}
