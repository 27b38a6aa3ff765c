//! Analytic gradients against central finite differences.

mod common;
mod suites;

use suites::gradients;

#[test]
fn soft_dice_gradient() {
    gradients::soft_dice_gradient();
}

#[test]
fn soft_cross_entropy_gradient() {
    gradients::soft_cross_entropy_gradient();
}

#[test]
fn sa_loss_gradient_away_from_ties() {
    gradients::sa_loss_gradient_away_from_ties();
}

#[test]
fn softmax_backward_gradient() {
    gradients::softmax_backward_gradient();
}

#[test]
fn end_to_end_total_loss_gradient() {
    gradients::end_to_end_total_loss_gradient();
}

#[test]
fn end_to_end_alignment_gradient() {
    gradients::end_to_end_alignment_gradient();
}

#[test]
fn raw_image_alignment_has_zero_parameter_gradient() {
    gradients::raw_image_alignment_has_zero_parameter_gradient();
}

#[test]
fn network_backward_matches_finite_differences() {
    gradients::network_backward_matches_finite_differences();
}

#[test]
fn one_hot_targets_give_finite_gradients() {
    gradients::one_hot_targets_give_finite_gradients();
}
