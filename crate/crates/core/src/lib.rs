//! Multi-object tracking that couples detections with dense point tracklets.
//!
//! The tracker runs in two stages. Features of each category are first linked
//! in time by an exact min-cost flow ([`flow`]). The resulting feature tracks
//! are then grouped into people: pairwise affinities ([`affinity`]) feed a
//! spectral clustering whose proposals, over a sweep of cluster counts, are
//! scored by a correlation-clustering objective ([`clustering`]). The best
//! partition becomes trajectories, with dense points guiding the gaps between
//! detections ([`trajectory`]).
//!
//! ```
//! use mltrack::{pipeline, synth, TrackerConfig};
//!
//! let (bundle, _truth) = synth::generate(&synth::preset("parallel")?)?;
//! let (trajectories, _diag) = pipeline::run(&bundle, &TrackerConfig::default())?;
//! assert_eq!(trajectories.len(), 2);
//! # Ok::<(), mltrack::Error>(())
//! ```

pub mod affinity;
pub mod clustering;
pub mod config;
pub mod error;
pub mod flow;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod synth;
pub mod trajectory;

pub use config::TrackerConfig;
pub use error::{Error, Result};
pub use io::SequenceBundle;
pub use model::{
    BBox, Category, Detection, DptPoint, DptTracklet, FeatureTrack, Frame, Member, Point,
    Provenance, Trajectory, TrajectoryBox,
};
