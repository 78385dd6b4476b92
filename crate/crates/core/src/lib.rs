//! Pairwise social relation recognition over pose-guided scene graphs.
//!
//! For each labeled person pair the crate builds a Person-Object graph
//! (persons, their union and detected objects, with object edges gated by
//! keypoint contact) and a Person-Pose graph (both skeletons, joined by
//! distance-weighted edges from active keypoints). Two GCN branches reason
//! over those graphs, a linear head scores a global image feature, and the
//! two class distributions are fused. Detector, pose-estimator and backbone
//! outputs are inputs: boxes, keypoints, heatmap peaks and feature rows.

pub mod data;
pub mod error;
pub mod gcn;
pub mod geometry;
pub mod graph;
pub mod metrics;
pub mod numerics;
pub mod scene;

pub use error::{Error, Result};
