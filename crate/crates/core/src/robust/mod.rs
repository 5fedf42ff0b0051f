//! Robust homography estimation and inlier filtering of candidate matches.

mod homography;
mod magsac;

pub use homography::{
    fit_homography_dlt, fit_homography_weighted, fit_minimal, is_degenerate_sample,
    symmetric_transfer_error, Homography,
};
pub use magsac::{
    magsac_filter, required_iterations, FilterOutcome, InlierReport, MagsacConfig, SigmaWeight,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RobustError {
    #[error("need at least 4 correspondences, got {0}")]
    NotEnoughMatches(usize),
    #[error("degenerate point configuration")]
    Degenerate,
}
