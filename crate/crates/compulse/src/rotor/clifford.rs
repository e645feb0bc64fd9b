// Copyright 2026 Compulse Contributors
// SPDX-License-Identifier: Apache-2.0

//! The single-qubit Clifford group as generated by quarter turns.
//!
//! Hardware plays Cliffords as words over {X+pi/2, X-pi/2, Y+pi/2, Y-pi/2},
//! so the table stores for each of the 24 elements a shortest such word.
//! Words are found by breadth-first closure from the identity; ties are
//! broken by generator order (X+, X-, Y+, Y-), which makes the table fully
//! deterministic.

use super::Rotation;
use crate::{Error, Result};
use std::f64::consts::FRAC_PI_2;

/// One physical quarter-turn generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Generator {
    XPlus,
    XMinus,
    YPlus,
    YMinus,
}

impl Generator {
    pub const ALL: [Generator; 4] = [
        Generator::XPlus,
        Generator::XMinus,
        Generator::YPlus,
        Generator::YMinus,
    ];

    pub fn rotation(&self) -> Rotation {
        match self {
            Generator::XPlus => Rotation::from_axis_angle(0.0, FRAC_PI_2),
            Generator::XMinus => Rotation::from_axis_angle(0.0, -FRAC_PI_2),
            Generator::YPlus => Rotation::from_axis_angle(FRAC_PI_2, FRAC_PI_2),
            Generator::YMinus => Rotation::from_axis_angle(FRAC_PI_2, -FRAC_PI_2),
        }
    }

    /// Drive phase that realizes this generator as a +pi/2 rotation: a
    /// negative turn about an axis is a positive turn about the opposite
    /// axis, so X- is driven at phase pi and Y- at 3*pi/2.
    pub fn drive_phase(&self) -> f64 {
        match self {
            Generator::XPlus => 0.0,
            Generator::XMinus => std::f64::consts::PI,
            Generator::YPlus => FRAC_PI_2,
            Generator::YMinus => 3.0 * FRAC_PI_2,
        }
    }
}

/// The 24 single-qubit Cliffords, their shortest generator words, and the
/// index of each element's inverse. Element 0 is the identity (empty word).
#[derive(Clone, Debug)]
pub struct CliffordTable {
    elements: Vec<Rotation>,
    words: Vec<Vec<Generator>>,
    inverse: Vec<usize>,
}

/// Two rotations closer than this are the same group element. The 24
/// Cliffords keep pairwise quaternion distances of order 0.5, so the margin
/// is enormous.
const MATCH_TOL: f64 = 1e-9;

/// Build the table by breadth-first closure over the quarter-turn
/// generators. Fails if the closure does not reach exactly 24 elements,
/// which would mean the rotation algebra itself is broken.
pub fn build_clifford_table() -> Result<CliffordTable> {
    let mut elements: Vec<Rotation> = vec![Rotation::IDENTITY];
    let mut words: Vec<Vec<Generator>> = vec![vec![]];
    let mut frontier: Vec<usize> = vec![0];

    // Max word length 4 is expected (the z half turn); 6 leaves room to
    // detect a bad closure instead of silently stopping early.
    for _level in 0..6 {
        let mut next = Vec::new();
        for &idx in &frontier {
            for g in Generator::ALL {
                // Word entries are in application order, so appending g
                // means composing it after everything already played.
                let r = g.rotation() * elements[idx];
                if elements.iter().all(|e| e.quat_distance(&r) > MATCH_TOL) {
                    let mut w = words[idx].clone();
                    w.push(g);
                    elements.push(r);
                    words.push(w);
                    next.push(elements.len() - 1);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }

    if elements.len() != 24 {
        return Err(Error::CliffordClosure {
            found: elements.len(),
        });
    }

    let mut inverse = Vec::with_capacity(24);
    for e in &elements {
        let inv = e.inverse();
        let j = elements
            .iter()
            .position(|f| f.quat_distance(&inv) < MATCH_TOL)
            .expect("group is closed under inversion");
        inverse.push(j);
    }

    Ok(CliffordTable {
        elements,
        words,
        inverse,
    })
}

impl CliffordTable {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn element(&self, idx: usize) -> Rotation {
        self.elements[idx]
    }

    pub fn word(&self, idx: usize) -> &[Generator] {
        &self.words[idx]
    }

    pub fn inverse_index(&self, idx: usize) -> usize {
        self.inverse[idx]
    }

    /// Index of the element matching `r`, if it is a Clifford.
    pub fn find(&self, r: &Rotation) -> Result<usize> {
        let mut best = f64::INFINITY;
        for (i, e) in self.elements.iter().enumerate() {
            let d = e.quat_distance(r);
            if d < MATCH_TOL {
                return Ok(i);
            }
            best = best.min(d);
        }
        Err(Error::NotAClifford { distance: best })
    }

    /// Mean word length over the table, i.e. the average number of physical
    /// pulses a uniformly drawn Clifford costs.
    pub fn mean_word_length(&self) -> f64 {
        self.words.iter().map(|w| w.len()).sum::<usize>() as f64 / self.words.len() as f64
    }

    pub fn max_word_length(&self) -> usize {
        self.words.iter().map(|w| w.len()).max().unwrap_or(0)
    }
}
