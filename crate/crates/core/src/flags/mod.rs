//! Flags of type τ_mod, ζ-angles, antipodality, parallel sets, Weyl cones and diamonds.

mod angles;
mod chain;
mod cones;
mod parallel;

pub use angles::{
    zeta_angle, zeta_angle_at_identity, zeta_angle_between_segments, zeta_angle_to_point, zeta_direction,
    zeta_direction_at_identity,
};
pub use chain::{antipodal, attracting_flag, flag_of_segment, Antipodality, BasisJson, FlagChain, FlagChainJson};
pub(crate) use chain::frame_flag;
pub use cones::{
    cone_defect_in_frame, cone_membership, diamond_defect, diamond_defect_from_cartan, diamond_distance_bound,
    ConeDefect, DiamondBound, DiamondDefect,
};
pub use parallel::{parallel_set, project_frame, project_to_parallel_set, ParallelSet, Projection};
