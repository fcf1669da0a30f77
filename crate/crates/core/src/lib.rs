//! Spatial scan statistics for zero-inflated Poisson count data.
//!
//! Three detectors share one zone family and one likelihood core:
//!
//! * [`Method::Poisson`]: Kulldorff's Poisson scan.
//! * [`Method::Zip`]: the zero-inflated Poisson scan with known structural zeros.
//! * [`Method::ZipEm`]: the same scan with structural zeros estimated per zone by EM.
//!
//! [`inference`] adds Monte Carlo p-values and critical values; [`simulate`]
//! holds the hexagonal-map simulation harness used for power and type-I studies.

pub mod detector;
pub mod em;
pub mod error;
pub mod inference;
pub mod io;
pub mod likelihood;
pub mod map;
pub mod rng;
pub mod simulate;

pub use detector::{scan_poisson, scan_zip, scan_zip_em, Detector, EmDiagnostics, Method, NullDelta, ScanConfig, ScanOutcome};
pub use em::{em_fit, EmConfig, EmFit, InitP};
pub use error::{Result, ScanError};
pub use inference::{significance, NullReplicaConfig, TotalCasesRule};
pub use likelihood::{ZipFit, ZoneAggregates};
pub use map::{enumerate_circular_zones, CaseData, Region, RegionMap, Zone, ZoneFamily};
