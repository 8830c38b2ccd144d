//! From simulated footage to training samples.
//!
//! A run of the twin is observed by a simulated camera, cut into one slice per
//! constant-power hold, denoised by fitting `d(t) = D_f + (D_i − D_f)·e^(−t/τ)`
//! and finally resampled at 100 evenly spaced instants.

mod camera;
mod dataset;
mod fit;

pub use camera::{sample_camera, segment, RawTrajectory};
pub use dataset::{
    build_dataset, resample_segment, trajectory_features, Dataset, DatasetBuild, DatasetConfig,
    DatasetHeader, Normalization, SegmentRecord, TauSummary, TrainingSample, FEATURE_LEN,
    SAMPLE_POINTS, TAU_CSV_HEADER,
};
pub use fit::{fit_exponential, golden_section_min, ExponentialFit, TrajectorySegment};
