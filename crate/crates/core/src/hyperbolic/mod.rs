//! Hyperbolic plane kernel: Moebius maps, geodesics, reflections, distances,
//! traces and disk/half-plane transport.

mod geodesic;
mod moebius;

pub(crate) use geodesic::interior_sweep;
pub use geodesic::{
    bisector_of_points, geodesic_between, hyperbolic_distance, hyperbolic_distance_half_plane, normalized_trace,
    perpendicular_bisector, reflect, reflection_pair_trace, Carrier, CayleyDirection, CayleyTransport, Geodesic,
    HalfPlaneRegion, Model,
};
pub use moebius::{is_disk_automorphism, MoebiusMap, Point, C64, I, ONE, ZERO};
