//! Non-neural core of a temporally-consistent synthetic-to-real monocular
//! depth pipeline: camera geometry, rigid-flow warping, photometric and
//! supervision losses, moving-mask synthesis from synthetic ground truth,
//! direct visual odometry pose refinement, and the standard seven-metric
//! depth evaluation protocol.

pub mod dataio;
pub mod ddvo;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod imagery;
pub mod losses;
pub mod movemask;
pub(crate) mod reduce;
pub mod warp;

pub use ddvo::{SolveTrace, SolverConfig, Termination};
pub use error::{Error, Result};
pub use eval::{EvalOptions, EvalReport, RegionLabel, RegionMask};
pub use geometry::{Intrinsics, Pose, Twist};
pub use imagery::{FlowField, Image, ScalarMap, Units};
pub use losses::{LossValue, SegMode};
pub use movemask::InstanceMap;
