mod common;

use common::*;
use zipscan::inference::{
    generate_null_replica, null_replicas, significance, significance_with_log, write_replica_log, NullReplicaConfig,
    TotalCasesRule,
};
use zipscan::rng::{stream, Domain};
use zipscan::simulate::build_hex_map;
use zipscan::{enumerate_circular_zones, Detector, Method, Region, RegionMap, ScanConfig, ScanError};

fn small_map() -> RegionMap {
    RegionMap::new(
        [100.0, 200.0, 300.0, 150.0, 250.0, 120.0]
            .iter()
            .enumerate()
            .map(|(i, &p)| Region { id: format!("s{i}"), x: (i % 3) as f64, y: (i / 3) as f64, population: p })
            .collect(),
    )
    .unwrap()
}

#[test]
fn no_structural_zeros_gives_proportional_means() {
    let map = small_map();
    let reps = 4000;
    let total = 60;
    let mut sums = vec![0.0; map.len()];
    for b in 0..reps {
        let data = generate_null_replica(&map, 0.0, total, &mut stream(21, Domain::NullReplica, b)).unwrap();
        assert!(data.structural_zero().unwrap().iter().all(|&z| !z));
        assert_eq!(data.total_cases(), total);
        for (s, &c) in sums.iter_mut().zip(data.counts()) {
            *s += c as f64;
        }
    }
    for i in 0..map.len() {
        let pi = map.population(i) / map.total_population();
        let expect = total as f64 * pi;
        let sd = (total as f64 * pi * (1.0 - pi) / reps as f64).sqrt();
        let mean = sums[i] / reps as f64;
        assert!((mean - expect).abs() < 4.0 * sd, "region {i}: {mean} vs {expect}");
    }
}

#[test]
fn structural_zero_count_follows_the_binomial() {
    let map = build_hex_map(0);
    let p = 15.0 / 203.0;
    let reps = 10_000;
    let mut total = 0usize;
    for b in 0..reps {
        let data = generate_null_replica(&map, p, 507, &mut stream(22, Domain::NullReplica, b)).unwrap();
        total += data.structural_zero().unwrap().iter().filter(|&&z| z).count();
    }
    let mean = total as f64 / reps as f64;
    let sd = (203.0 * p * (1.0 - p) / reps as f64).sqrt();
    assert!((mean - 15.0).abs() < 3.0 * sd, "mean zeros {mean}");
}

#[test]
fn p_value_extremes() {
    let map = small_map();
    let zones = enumerate_circular_zones(&map, 0.5).unwrap();
    let det = Detector::new(&map, &zones, ScanConfig::default()).unwrap();
    let cfg = NullReplicaConfig { replicas: 999, seed: 5, ..NullReplicaConfig::default() };

    // proportional counts: ln λ_obs = 0, every replica is at least as large
    let flat = case_data(&map, vec![10, 20, 30, 15, 25, 12], None);
    let out = significance(&det, &flat, Method::Poisson, &cfg).unwrap();
    assert_eq!(out.log_lambda, 0.0);
    assert_eq!(out.p_value, Some(1.0));
    assert_eq!(out.rejected(), Some(false));

    let hot = case_data(&map, vec![60, 0, 0, 0, 0, 0], None);
    let out = significance(&det, &hot, Method::Poisson, &cfg).unwrap();
    assert_eq!(out.p_value, Some(1.0 / 1000.0));
    assert_eq!(out.rejected(), Some(true));
    assert_eq!(out.replicas.as_ref().unwrap().exceedances, 0);
}

#[test]
fn replicas_do_not_depend_on_thread_count() {
    let map = build_hex_map(2);
    let zones = enumerate_circular_zones(&map, 0.5).unwrap();
    let det = Detector::new(&map, &zones, ScanConfig::default()).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| null_replicas(&det, Method::ZipEm, 0.07, 507, 40, 99).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn replica_failures_report_index_and_seed() {
    let map = small_map();
    let zones = enumerate_circular_zones(&map, 0.5).unwrap();
    let det = Detector::new(&map, &zones, ScanConfig::default()).unwrap();
    match null_replicas(&det, Method::Poisson, 0.0, 0, 20, 77) {
        Err(ScanError::Replica { index, seed, source }) => {
            assert_eq!((index, seed), (0, 77));
            assert!(matches!(*source, ScanError::Degenerate(_)));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn zip_replicas_carry_their_indicators() {
    let map = small_map();
    let zones = enumerate_circular_zones(&map, 0.5).unwrap();
    let det = Detector::new(&map, &zones, ScanConfig::default()).unwrap();
    let data = case_data(&map, vec![9, 0, 3, 2, 4, 1], Some(vec![false, true, false, false, false, false]));
    let cfg = NullReplicaConfig { replicas: 199, seed: 8, ..NullReplicaConfig::default() };
    let (out, log) = significance_with_log(&det, &data, Method::Zip, &cfg).unwrap();
    let summary = out.replicas.unwrap();
    assert!((summary.p_hat - 1.0 / 6.0).abs() < 1e-15);
    assert!(log.iter().any(|r| r.structural_zero_count > 0));
    let p = out.p_value.unwrap();
    assert!((1.0 / 200.0..=1.0).contains(&p));

    let missing = data.without_structural_zeros();
    assert!(matches!(significance(&det, &missing, Method::Zip, &cfg), Err(ScanError::MissingStructuralZeros(_))));

    let (_, log) = significance_with_log(&det, &data, Method::Poisson, &cfg).unwrap();
    assert!(log.iter().all(|r| r.structural_zero_count == 0));
}

#[test]
fn population_total_rule_distributes_the_population() {
    let map = small_map();
    let zones = enumerate_circular_zones(&map, 0.5).unwrap();
    let det = Detector::new(&map, &zones, ScanConfig::default()).unwrap();
    let data = case_data(&map, vec![9, 0, 3, 2, 4, 1], None);
    let cfg = NullReplicaConfig {
        replicas: 19,
        seed: 1,
        total_cases_rule: TotalCasesRule::PopulationTotal,
        ..NullReplicaConfig::default()
    };
    let out = significance(&det, &data, Method::Poisson, &cfg).unwrap();
    assert_eq!(out.replicas.unwrap().total_cases, 1120);
}

#[test]
fn replica_log_format() {
    let map = small_map();
    let zones = enumerate_circular_zones(&map, 0.5).unwrap();
    let det = Detector::new(&map, &zones, ScanConfig::default()).unwrap();
    let records = null_replicas(&det, Method::Poisson, 0.2, 30, 19, 3).unwrap();
    let mut buf = Vec::new();
    write_replica_log(&mut buf, &records).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("replica_index,lambda,structural_zero_count"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 19);
    assert!(rows[0].starts_with("0,"));
    let lambda: f64 = rows[5].split(',').nth(1).unwrap().parse().unwrap();
    assert!(lambda >= 1.0);
}

#[test]
fn invalid_configs_are_rejected() {
    let map = small_map();
    let zones = enumerate_circular_zones(&map, 0.5).unwrap();
    let det = Detector::new(&map, &zones, ScanConfig::default()).unwrap();
    let data = case_data(&map, vec![9, 0, 3, 2, 4, 1], None);
    for cfg in [
        NullReplicaConfig { replicas: 10, ..NullReplicaConfig::default() },
        NullReplicaConfig { alpha: 0.0, ..NullReplicaConfig::default() },
    ] {
        assert!(matches!(significance(&det, &data, Method::Poisson, &cfg), Err(ScanError::InvalidInput(_))));
    }
}
