//! Shared fixtures for the criterion benchmarks.

use ecl_core::geometry::{inclusion_quadrature, Domain, QuadratureRule, ShapeB};
use ecl_core::kernels::ElasticBackground;

/// Unit background `λ = μ = ρ₀ = 1`.
pub fn background() -> ElasticBackground {
    ElasticBackground::unit()
}

/// Reference ball inclusion at the given resolution.
pub fn inclusion(resolution: usize) -> QuadratureRule {
    inclusion_quadrature(ShapeB::Ball, resolution).expect("inclusion rule")
}

/// Volume and boundary rules of the unit cube.
pub fn cube_rules(vol: usize, bdry: usize) -> (QuadratureRule, QuadratureRule) {
    (
        Domain::Cube.volume_rule(vol).expect("volume rule"),
        Domain::Cube.boundary_rule(bdry).expect("boundary rule"),
    )
}
