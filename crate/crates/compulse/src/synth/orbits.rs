// Copyright 2026 Compulse Contributors
// SPDX-License-Identifier: Apache-2.0

//! Equivalence classes of two-ion gate pairs under a shared drive-phase
//! shift, and the sequence library built on top of them.
//!
//! Adding a constant to every pulse phase conjugates each realized gate by
//! a z rotation of that constant. For the gate set used in randomized
//! benchmarking (identity plus the four equatorial quarter turns), a shift
//! by a multiple of pi/2 maps the set onto itself, so the 24 pairs other
//! than (identity, identity) fall into 6 orbits of 4. Synthesizing one
//! representative per orbit and shifting the phases covers every pair with
//! no extra optimizer runs and no loss of accuracy: the Frobenius residual
//! is invariant under the conjugation.

use super::{
    cost, shift_phases, synthesize, IonSet, PulseSequence, SynthConfig, SynthesisResult,
};
use crate::rotor::{Rotation, TargetGate};
use crate::util::derive_seed;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::fmt;

/// A gate applied to one ion while the other ion gets its own entry of the
/// same pair. Quarter turns about the equatorial axes, plus identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AddressedGate {
    Identity,
    XPlus,
    XMinus,
    YPlus,
    YMinus,
}

impl AddressedGate {
    pub const ALL: [AddressedGate; 5] = [
        AddressedGate::Identity,
        AddressedGate::XPlus,
        AddressedGate::XMinus,
        AddressedGate::YPlus,
        AddressedGate::YMinus,
    ];

    /// Azimuth of the rotation axis, `None` for identity.
    pub fn axis_phase(&self) -> Option<f64> {
        match self {
            AddressedGate::Identity => None,
            AddressedGate::XPlus => Some(0.0),
            AddressedGate::XMinus => Some(2.0 * FRAC_PI_2),
            AddressedGate::YPlus => Some(FRAC_PI_2),
            AddressedGate::YMinus => Some(3.0 * FRAC_PI_2),
        }
    }

    pub fn rotation(&self) -> Rotation {
        match self.axis_phase() {
            None => Rotation::IDENTITY,
            Some(phi) => Rotation::from_axis_angle(phi, FRAC_PI_2),
        }
    }

    pub fn target(&self) -> TargetGate {
        TargetGate::from_rotation(&self.rotation())
    }

    /// Image under a drive-phase shift of `quarter_turns * pi/2`: the axis
    /// azimuth advances around the equator, identity stays put.
    pub fn shifted(&self, quarter_turns: usize) -> AddressedGate {
        use AddressedGate::*;
        if *self == Identity {
            return Identity;
        }
        // Ring in azimuth order: 0, pi/2, pi, 3pi/2.
        const RING: [AddressedGate; 4] = [XPlus, YPlus, XMinus, YMinus];
        let pos = RING.iter().position(|g| g == self).unwrap();
        RING[(pos + quarter_turns) % 4]
    }
}

/// A bare generator is the same gate with nobody on the other ion yet.
impl From<crate::rotor::Generator> for AddressedGate {
    fn from(g: crate::rotor::Generator) -> AddressedGate {
        use crate::rotor::Generator;
        match g {
            Generator::XPlus => AddressedGate::XPlus,
            Generator::XMinus => AddressedGate::XMinus,
            Generator::YPlus => AddressedGate::YPlus,
            Generator::YMinus => AddressedGate::YMinus,
        }
    }
}

impl fmt::Display for AddressedGate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AddressedGate::Identity => "I",
            AddressedGate::XPlus => "X+",
            AddressedGate::XMinus => "X-",
            AddressedGate::YPlus => "Y+",
            AddressedGate::YMinus => "Y-",
        };
        f.write_str(s)
    }
}

/// One pair in an orbit, tagged with the phase shift that produces it from
/// the orbit's representative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrbitMember {
    pub gates: (AddressedGate, AddressedGate),
    /// Shift in radians, a multiple of pi/2; zero for the representative.
    pub shift: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Orbit {
    pub representative: (AddressedGate, AddressedGate),
    /// Exactly four members, the representative first.
    pub members: Vec<OrbitMember>,
}

/// Partition the 24 pairs other than (identity, identity) into orbits of
/// the simultaneous quarter-turn phase shift. Orbits come out sorted by
/// representative, and each representative is the smallest member of its
/// orbit in the derived ordering.
pub fn orbit_classes() -> Vec<Orbit> {
    let idx = |p: (AddressedGate, AddressedGate)| p.0 as usize * 5 + p.1 as usize;
    let mut seen = [false; 25];
    let mut orbits = Vec::new();
    for g0 in AddressedGate::ALL {
        for g1 in AddressedGate::ALL {
            if g0 == AddressedGate::Identity && g1 == AddressedGate::Identity {
                continue;
            }
            if seen[idx((g0, g1))] {
                continue;
            }
            let mut members = Vec::with_capacity(4);
            for k in 0..4 {
                let pair = (g0.shifted(k), g1.shifted(k));
                debug_assert!(!seen[idx(pair)], "shift action must be free");
                seen[idx(pair)] = true;
                members.push(OrbitMember {
                    gates: pair,
                    shift: k as f64 * FRAC_PI_2,
                });
            }
            orbits.push(Orbit {
                representative: (g0, g1),
                members,
            });
        }
    }
    orbits
}

/// One lookup-table entry: the pulse train for a specific gate pair.
#[derive(Clone, Debug)]
pub struct LibraryEntry {
    pub gates: (AddressedGate, AddressedGate),
    pub sequence: PulseSequence,
    pub orbit_index: usize,
    /// Phase shift applied to the orbit representative's train.
    pub shift: f64,
}

/// Synthesized trains for every two-ion gate pair: six optimizer runs (one
/// per orbit), the rest filled in by phase shifts.
pub struct SequenceLibrary {
    orbits: Vec<Orbit>,
    representatives: Vec<SynthesisResult>,
    entries: Vec<Option<LibraryEntry>>,
    ions: IonSet,
}

impl SequenceLibrary {
    pub fn build(ions: &IonSet, cfg: &SynthConfig, seed: u64) -> Result<SequenceLibrary> {
        if ions.len() != 2 {
            return Err(Error::invalid(
                "ions",
                format!("pair library needs 2 ions, got {}", ions.len()),
            ));
        }
        let orbits = orbit_classes();
        let mut representatives = Vec::with_capacity(orbits.len());
        let mut entries: Vec<Option<LibraryEntry>> = vec![None; 25];
        for (oi, orbit) in orbits.iter().enumerate() {
            let targets = vec![orbit.representative.0.target(), orbit.representative.1.target()];
            let result = synthesize(&targets, ions, cfg, derive_seed(seed, 0x0b17, oi as u64))?;
            for member in &orbit.members {
                let sequence = shift_phases(&result.sequence, member.shift);
                let slot = member.gates.0 as usize * 5 + member.gates.1 as usize;
                entries[slot] = Some(LibraryEntry {
                    gates: member.gates,
                    sequence,
                    orbit_index: oi,
                    shift: member.shift,
                });
            }
            representatives.push(result);
        }
        Ok(SequenceLibrary {
            orbits,
            representatives,
            entries,
            ions: ions.clone(),
        })
    }

    pub fn orbits(&self) -> &[Orbit] {
        &self.orbits
    }

    /// The six synthesized trains, indexed like [`Self::orbits`].
    pub fn representatives(&self) -> &[SynthesisResult] {
        &self.representatives
    }

    pub fn ions(&self) -> &IonSet {
        &self.ions
    }

    pub fn lookup(&self, pair: (AddressedGate, AddressedGate)) -> Result<&LibraryEntry> {
        self.entries[pair.0 as usize * 5 + pair.1 as usize]
            .as_ref()
            .ok_or_else(|| Error::UnsupportedGatePair {
                pair: format!("({}, {})", pair.0, pair.1),
            })
    }

    /// Largest residual over all 24 entries, recomputed against the pair's
    /// own targets.
    pub fn worst_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for entry in self.entries.iter().flatten() {
            let targets = [entry.gates.0.target(), entry.gates.1.target()];
            worst = worst.max(cost(&entry.sequence, &targets, &self.ions));
        }
        worst
    }
}
