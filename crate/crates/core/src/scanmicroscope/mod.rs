//! Forward model of scanning-atom-microscope experiments: device geometry,
//! array kinematics, stochastic loading and the resulting survival maps.

pub mod array;
pub mod geometry;
pub mod motion;
pub mod scan;
pub mod tilt;

pub use array::{aod_to_position, position_to_aod, TweezerArray};
pub use geometry::{geometric_survival, occluded_fraction, DeviceGeometry, OcclusionLoss, Rect};
pub use motion::{transport_profile, MotionProfile, MotionSample};
pub use scan::{cell_survival, simulate_scan, LoadingModel, ScanAxis, ScanHeating, ScanSpec, SurvivalMap};
pub use tilt::{loss_centre, tilt_estimate, TiltEstimate};
