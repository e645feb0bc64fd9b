// Copyright 2026 Compulse Contributors
// SPDX-License-Identifier: Apache-2.0

//! Small shared helpers: deterministic seed derivation and angle wrapping.

use std::f64::consts::TAU;

/// SplitMix64 step. Good avalanche, cheap, and stable across platforms.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent child seed from a base seed and a role index.
///
/// Work items (restart k, trial t of length m, sweep point i) each get their
/// own ChaCha stream seeded this way, so results do not depend on execution
/// order.
pub(crate) fn derive_seed(base: u64, lane: u64, index: u64) -> u64 {
    let mut s = base ^ 0x6a09_e667_f3bc_c908;
    let a = splitmix64(&mut s);
    let mut t = a ^ lane.wrapping_mul(0xbb67_ae85_84ca_a73b);
    let b = splitmix64(&mut t);
    let mut u = b ^ index.wrapping_mul(0x3c6e_f372_fe94_f82b);
    splitmix64(&mut u)
}

/// Wrap an angle into [0, 2*pi).
pub(crate) fn wrap_angle(a: f64) -> f64 {
    let mut w = a % TAU;
    if w < 0.0 {
        w += TAU;
    }
    // -1e-18 % TAU can round to TAU exactly; fold that back.
    if w >= TAU {
        w -= TAU;
    }
    w
}
