//! Discrete operators on piecewise-linear surfaces and maps.
//!
//! Beltrami coefficients are constant per face. Curvatures follow the usual
//! angle-defect and cotangent formulas normalised by mixed Voronoi areas.

mod beltrami;
mod curvature;
mod laplacian;

pub use beltrami::{
    affine_wirtinger, beltrami_from_map, beltrami_from_surface, compose_beltrami, count_flips, local_frame,
    map_derivatives, signed_areas, weighted_mean_std, BeltramiField, COMPOSITION_EPS,
};
pub use curvature::{
    angle_defects, boundary_corrected, curvatures, gauss_bonnet_total, interpolate_scalar, mixed_areas,
    CurvatureField, SurfacePoint, BARY_TOL,
};
pub use laplacian::{cot_at, cotan_half_weights, cotan_laplacian, cotan_stiffness, cotan_stiffness_planar};
