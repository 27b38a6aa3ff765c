//! Soft-mix and pseudo-label suites.

mod common;
mod suites;

use suites::{pseudo_label, soft_mix};

#[test]
fn worked_blend_example() {
    soft_mix::worked_blend_example();
}

#[test]
fn complementarity_is_exact() {
    soft_mix::complementarity_is_exact();
}

#[test]
fn blended_labels_stay_on_simplex() {
    soft_mix::blended_labels_stay_on_simplex();
}

#[test]
fn region_is_two_thirds() {
    soft_mix::region_is_two_thirds();
}

#[test]
fn unit_kernel_is_hard_copy_paste() {
    soft_mix::unit_kernel_is_hard_copy_paste();
}

#[test]
fn pseudo_labels_are_one_hot() {
    pseudo_label::outputs_are_one_hot();
}

#[test]
fn pseudo_label_foreground_is_connected() {
    pseudo_label::foreground_has_at_most_one_component();
}

#[test]
fn ema_identities() {
    pseudo_label::ema_identities();
}
