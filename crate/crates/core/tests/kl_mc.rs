//! Monte-Carlo mixture KL against analytic values.

mod support;

use support::kl_mc;

#[test]
fn single_component_mixture_matches_analytic_kl() {
    kl_mc::single_component_mixture_matches_analytic_kl();
}

#[test]
fn mixture_kl_is_bounded_by_component_kls() {
    kl_mc::mixture_kl_is_bounded_by_component_kls();
}

#[test]
fn any_objective_with_atomic_labels_equals_conceptual_objective() {
    kl_mc::any_objective_with_atomic_labels_equals_conceptual_objective();
}

#[test]
fn any_slot_over_one_label_vocabulary_reduces_to_analytic_kl() {
    kl_mc::any_slot_over_one_label_vocabulary_reduces_to_analytic_kl();
}
