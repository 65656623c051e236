//! Simulation and estimation laboratory for simple conformal loop ensemble
//! (CLE) carpets on the square lattice.
//!
//! The pipeline: sample a random-walk loop soup at intensity `c(kappa)`,
//! extract CLE loops as outer boundaries of the outermost loop clusters,
//! nest them recursively, mark parities, and cut the carpet masks. On top of
//! the masks, compute the epsilon-Minkowski first-passage-percolation (MFPP)
//! metric, and estimate the quantitative objects of interest: the distance
//! exponent, carpet box dimension, four-arm statistics, scaling constants
//! and their sandwich bounds.
//!
//! Every sampling routine is driven by a master seed through independent
//! counter-based substreams, so all artifacts are reproducible bit-exactly
//! for a fixed seed, independent of the worker count.

pub mod carpet;
pub mod config;
pub mod ensemble_io;
pub mod estimators;
pub mod geom;
pub mod loop_soup;
pub mod manifest;
pub mod mfpp;
pub mod params;
pub mod render;
pub mod rng;
pub mod runner;

pub use carpet::{build_carpet_mask, cluster_loops, connected, extract_cle_loops, mark_parity,
                 nest_ensemble, CarpetMask, CleLoop, LoopCluster, NestedEnsemble};
pub use config::ExperimentConfig;
pub use estimators::{box_dimension, fit_theta, four_arm_stats, geodesic_dimension,
                     hausuni_distance, minkowski_lower_bound, sandwich_check, scaling_constants,
                     FourArmReport, MinkowskiBoundReport, ScalingTable, ThetaFit};
pub use geom::{BitGrid, Cell, CellRect};
pub use loop_soup::{loop_measure_table, sample_loop_soup, LatticeDomain, LatticeLoop,
                    LoopSoupSample, MassTable};
pub use mfpp::{annulus_crossing, component_diameter, distance_field, kappa_eps, mfpp_distance,
               mfpp_distance_exact, neighborhood_area, DiscreteDisk, EpsMetricField, MfppValue,
               PathWitness};
pub use params::{central_charge, kappa_of_central_charge, KappaParams};
