//! Fuzzy-concept algebra checked against closed-form oracles.

mod support;

use support::concepts;

#[test]
fn product_of_gaussians_equals_joint_gaussian() {
    concepts::product_of_gaussians_equals_joint_gaussian();
}

#[test]
fn quadrature_normalisation_integrates_to_one() {
    concepts::quadrature_normalisation_integrates_to_one();
}

#[test]
fn pointwise_product_completes_the_square() {
    concepts::pointwise_product_completes_the_square();
}

#[test]
fn constructor_built_concepts_are_log_concave() {
    concepts::constructor_built_concepts_are_log_concave();
}

#[test]
fn non_convex_crisp_regions_are_rejected() {
    concepts::non_convex_crisp_regions_are_rejected();
}
