//! Shared key material, modelled as trusted uniform randomness delivered
//! identically to both endpoints of each pair.

use std::fmt;

use rand::Rng;

use crate::encoding::BitPair;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Party {
    Alice,
    Bob,
    ThirdParty,
    /// An outside eavesdropper with no key material.
    Eve,
}

impl Party {
    pub fn peer(self) -> Option<Party> {
        match self {
            Party::Alice => Some(Party::Bob),
            Party::Bob => Some(Party::Alice),
            _ => None,
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Party::Alice => "Alice",
            Party::Bob => "Bob",
            Party::ThirdParty => "TP",
            Party::Eve => "Eve",
        })
    }
}

/// The four key sequences: `k_a`, `k_b` shared by Alice and Bob, `k_ac`
/// shared by Alice and TP, `k_bc` shared by Bob and TP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyRing {
    k_a: Vec<BitPair>,
    k_b: Vec<BitPair>,
    k_ac: Vec<BitPair>,
    k_bc: Vec<BitPair>,
}

pub fn simulate_qkd<R: Rng + ?Sized>(length: usize, rng: &mut R) -> Result<KeyRing> {
    if length == 0 {
        return Err(invalid("key length must be at least one group"));
    }
    let mut draw = || -> Vec<BitPair> {
        (0..length)
            .map(|_| BitPair::ALL[rng.random_range(0..4)])
            .collect()
    };
    Ok(KeyRing {
        k_a: draw(),
        k_b: draw(),
        k_ac: draw(),
        k_bc: draw(),
    })
}

impl KeyRing {
    pub fn len(&self) -> usize {
        self.k_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k_a.is_empty()
    }

    pub fn alice_view(&self) -> ParticipantKeys {
        ParticipantKeys {
            owner: Party::Alice,
            k_a: self.k_a.clone(),
            k_b: self.k_b.clone(),
            k_tp: self.k_ac.clone(),
        }
    }

    pub fn bob_view(&self) -> ParticipantKeys {
        ParticipantKeys {
            owner: Party::Bob,
            k_a: self.k_a.clone(),
            k_b: self.k_b.clone(),
            k_tp: self.k_bc.clone(),
        }
    }

    pub fn tp_view(&self) -> ThirdPartyKeys {
        ThirdPartyKeys {
            k_ac: self.k_ac.clone(),
            k_bc: self.k_bc.clone(),
        }
    }
}

/// What Alice or Bob holds: both comparer keys plus the key shared with TP
/// (`k_ac` for Alice, `k_bc` for Bob).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParticipantKeys {
    pub owner: Party,
    pub k_a: Vec<BitPair>,
    pub k_b: Vec<BitPair>,
    pub k_tp: Vec<BitPair>,
}

impl ParticipantKeys {
    /// The comparer's own masking key inside the announcement equation
    /// (`k_a` for Alice, `k_b` for Bob).
    pub fn own_mask(&self) -> &[BitPair] {
        match self.owner {
            Party::Bob => &self.k_b,
            _ => &self.k_a,
        }
    }
}

/// TP holds only the keys shared with each comparer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThirdPartyKeys {
    pub k_ac: Vec<BitPair>,
    pub k_bc: Vec<BitPair>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KeyView {
    Participant(ParticipantKeys),
    ThirdParty(ThirdPartyKeys),
    /// Outsiders hold nothing.
    None,
}

pub fn party_view(ring: &KeyRing, party: Party) -> KeyView {
    match party {
        Party::Alice => KeyView::Participant(ring.alice_view()),
        Party::Bob => KeyView::Participant(ring.bob_view()),
        Party::ThirdParty => KeyView::ThirdParty(ring.tp_view()),
        Party::Eve => KeyView::None,
    }
}
