//! The two information-leakage attacks.
//!
//! Passive: after an honest original-variant run a comparer unmasks the
//! published `R_i` with the two comparer keys it legitimately holds, gets
//! `R_i' = G_A ^ G_B`, and XORs in its own groups to read the other side's.
//!
//! Active: Bob sits between TP and Alice. He passes TP's decoy check under
//! Alice's name, measures Alice's particles in Z (`M_AB`), re-covers them with
//! his own decoys and passes Alice's check under TP's name. Alice's later
//! measurement repeats his outcome, and since `M_A ^ M_B ^ M_C = 00` he can
//! strip every mask from `R_i`.

use std::fmt;

use rand::RngCore;

use crate::canonical::CanonicalWriter;
use crate::channel::{AbortReason, Body, EveModel, Interceptor, Link};
use crate::encoding::{fmt_seq, from_groups, BitPair, GroupSequence, SecretInput};
use crate::error::{invalid, Error, Result};
use crate::keys::{KeyView, Party};
use crate::protocol::{run_protocol, PartyView, ProtocolConfig, Transcript, Variant, Verdict};
use crate::quantum::{ParticleRef, QuantumRegister};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    Passive,
    Active,
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackKind::Passive => "passive",
            AttackKind::Active => "active",
        })
    }
}

impl std::str::FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "passive" => Ok(AttackKind::Passive),
            "active" => Ok(AttackKind::Active),
            _ => Err(invalid(format!("unknown attack `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttackOutcome {
    Recovered {
        groups: GroupSequence,
        secret: u64,
    },
    /// The attack ran but the attacker's information does not pin the secret down.
    NotRecovered {
        reason: String,
    },
    NotApplicable {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackReport {
    pub kind: AttackKind,
    pub variant: Variant,
    pub attacker: Party,
    pub victim: Party,
    pub outcome: AttackOutcome,
    pub ground_truth: u64,
    /// True iff the recovered secret equals the ground truth.
    pub success: bool,
    /// True iff any eavesdropping check aborted the run.
    pub detected: bool,
}

impl AttackReport {
    fn new(
        kind: AttackKind,
        variant: Variant,
        attacker: Party,
        victim: Party,
        outcome: AttackOutcome,
        ground_truth: u64,
        detected: bool,
    ) -> Self {
        let success =
            matches!(&outcome, AttackOutcome::Recovered { secret, .. } if *secret == ground_truth);
        AttackReport {
            kind,
            variant,
            attacker,
            victim,
            outcome,
            ground_truth,
            success,
            detected,
        }
    }

    pub fn recovered_secret(&self) -> Option<u64> {
        match &self.outcome {
            AttackOutcome::Recovered { secret, .. } => Some(*secret),
            _ => None,
        }
    }

    pub fn is_applicable(&self) -> bool {
        !matches!(self.outcome, AttackOutcome::NotApplicable { .. })
    }

    fn write_fields(&self, w: &mut CanonicalWriter, prefix: &str) {
        w.field(format!("{prefix}kind"), self.kind)
            .field(format!("{prefix}variant"), self.variant)
            .field(format!("{prefix}attacker"), self.attacker)
            .field(format!("{prefix}victim"), self.victim);
        match &self.outcome {
            AttackOutcome::Recovered { groups, secret } => {
                w.field(format!("{prefix}outcome"), "recovered")
                    .field(
                        format!("{prefix}recovered_groups"),
                        fmt_seq(groups.groups()),
                    )
                    .field(format!("{prefix}recovered_secret"), secret);
            }
            AttackOutcome::NotRecovered { reason } => {
                w.field(format!("{prefix}outcome"), "not-recovered")
                    .field(format!("{prefix}reason"), reason);
            }
            AttackOutcome::NotApplicable { reason } => {
                w.field(format!("{prefix}outcome"), "not-applicable")
                    .field(format!("{prefix}reason"), reason);
            }
        }
        w.field(format!("{prefix}ground_truth"), self.ground_truth)
            .field(format!("{prefix}success"), self.success)
            .field(format!("{prefix}detected"), self.detected);
    }

    pub fn to_canonical_text(&self) -> String {
        reports_to_canonical_text(std::slice::from_ref(self))
    }
}

/// Several reports in one canonical document, keyed `report.<i>.<field>`.
pub fn reports_to_canonical_text(reports: &[AttackReport]) -> String {
    let mut w = CanonicalWriter::new("attack-report");
    w.field("reports.count", reports.len());
    for (i, r) in reports.iter().enumerate() {
        r.write_fields(&mut w, &format!("report.{i}."));
    }
    w.finish()
}

/// Recovers the peer's groups from a comparer's own view of a finished
/// original-variant run.
pub fn recover_passive(view: &PartyView) -> Result<GroupSequence> {
    let (KeyView::Participant(keys), Some(own)) = (&view.keys, &view.own_groups) else {
        return Err(invalid(format!("{} is not a comparer", view.party)));
    };
    match view.publication() {
        Some(Body::Groups(r)) if r.len() == own.len() => {
            let recovered = (0..r.len())
                .map(|i| {
                    let r_prime = r[i] ^ keys.k_a[i] ^ keys.k_b[i];
                    r_prime ^ own.groups()[i]
                })
                .collect();
            GroupSequence::new(recovered, view.n_bits)
        }
        Some(Body::Sum(_)) => Err(Error::NotApplicable(
            "only the bit count S is published".into(),
        )),
        Some(_) => Err(invalid("publication has the wrong length")),
        None => Err(Error::NotApplicable(
            "the run ended before TP published a result".into(),
        )),
    }
}

fn outcome_from(result: Result<GroupSequence>) -> Result<AttackOutcome> {
    match result {
        Ok(groups) => {
            let secret = from_groups(&groups).value();
            Ok(AttackOutcome::Recovered { groups, secret })
        }
        Err(Error::NotApplicable(reason)) => Ok(AttackOutcome::NotApplicable { reason }),
        Err(e) => Err(e),
    }
}

fn was_detected(t: &Transcript) -> bool {
    matches!(
        t.verdict,
        Verdict::Aborted(AbortReason::Eavesdropping { .. })
    ) || t.checks.iter().any(|c| !c.result.passed)
}

/// Runs the passive attack for `attacker` (Alice or Bob) on a finished run.
pub fn passive_attack(transcript: &Transcript, attacker: Party) -> Result<AttackReport> {
    let victim = attacker
        .peer()
        .ok_or_else(|| invalid(format!("{attacker} cannot mount the passive attack")))?;
    let view = transcript.view_for(attacker);
    let outcome = outcome_from(recover_passive(&view))?;
    let truth = transcript
        .record(victim)
        .expect("comparer record")
        .secret
        .value();
    Ok(AttackReport::new(
        AttackKind::Passive,
        transcript.config.variant,
        attacker,
        victim,
        outcome,
        truth,
        was_detected(transcript),
    ))
}

/// `M_C = M_AB ^ M_B`, since the three outcomes of one carrier XOR to `00`.
pub fn deduce_mc(m_ab: BitPair, m_b: BitPair) -> BitPair {
    m_ab ^ m_b
}

/// Bob's channel hook for the active attack.
#[derive(Debug, Default, Clone)]
pub struct MaliciousBob {
    /// `M_AB`: Bob's Z outcomes on Alice's pairs.
    pub intercepted: Vec<BitPair>,
}

impl Interceptor for MaliciousBob {
    fn identity(&self) -> Party {
        Party::Bob
    }

    fn captures(&self, link: Link) -> bool {
        link.from == Party::ThirdParty && link.to == Party::Alice
    }

    fn relay(
        &mut self,
        _link: Link,
        payload: Vec<ParticleRef>,
        register: &mut QuantumRegister,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<ParticleRef>> {
        for pair in payload.chunks(2) {
            let [hi, lo] = pair else {
                return Err(invalid("odd payload length"));
            };
            self.intercepted
                .push(register.z_measure_pair(*hi, *lo, rng)?);
        }
        Ok(payload)
    }
}

#[derive(Debug, Clone)]
pub struct ActiveAttackRun {
    pub transcript: Transcript,
    pub report: AttackReport,
    /// `M_AB`, one entry per group (empty if Bob never got the particles).
    pub m_ab: Vec<BitPair>,
}

impl ActiveAttackRun {
    /// Whether Alice's own measurement reproduced Bob's in every group.
    pub fn alice_matches_bob(&self) -> bool {
        !self.m_ab.is_empty() && self.transcript.alice.measurements == self.m_ab
    }
}

/// Bob's arithmetic after an original-variant run:
/// `G_A = R ^ K_BC ^ M_C ^ R_B ^ K_A ^ M_AB`.
fn recover_active_original(view: &PartyView, m_ab: &[BitPair]) -> Result<GroupSequence> {
    let KeyView::Participant(keys) = &view.keys else {
        return Err(invalid("Bob's view lacks his keys"));
    };
    let Some(Body::Groups(r)) = view.publication() else {
        return Err(invalid("no group publication"));
    };
    let g = r.len();
    if m_ab.len() != g || view.own_measurements.len() != g || view.own_announced.len() != g {
        return Err(invalid("incomplete attack record"));
    }
    let groups = (0..g)
        .map(|i| {
            let m_c = deduce_mc(m_ab[i], view.own_measurements[i]);
            r[i] ^ keys.k_tp[i] ^ m_c ^ view.own_announced[i] ^ keys.k_a[i] ^ m_ab[i]
        })
        .collect();
    GroupSequence::new(groups, view.n_bits)
}

/// In the fixed variant Bob learns `S = bit_sum(G_A ^ c)` for the mask
/// `c = G_B ^ K_A ^ K_B` he knows. That pins `G_A` only when every free bit
/// agrees with the mask or every free bit differs.
fn recover_active_fixed(view: &PartyView) -> Result<std::result::Result<GroupSequence, String>> {
    let (KeyView::Participant(keys), Some(own)) = (&view.keys, &view.own_groups) else {
        return Err(invalid("Bob's view lacks his keys"));
    };
    let Some(Body::Sum(s)) = view.publication() else {
        return Err(invalid("no sum publication"));
    };
    let mask: Vec<BitPair> = (0..own.len())
        .map(|i| own.groups()[i] ^ keys.k_a[i] ^ keys.k_b[i])
        .collect();
    let n = view.n_bits;
    // The padding bit of an odd-length secret is known to be 0.
    let pad_weight = if n % 2 == 1 {
        mask.last().map_or(0, |m| m.lo() as u32)
    } else {
        0
    };
    let free_weight = s.checked_sub(pad_weight).filter(|w| *w <= n);
    let flip_all = match free_weight {
        Some(0) => false,
        Some(w) if w == n => true,
        Some(w) => {
            return Ok(Err(format!(
                "S only reveals that {w} of {n} bits differ from Bob's mask"
            )))
        }
        None => return Ok(Err(format!("S = {s} is inconsistent with Bob's mask"))),
    };
    let groups: Vec<BitPair> = mask
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let mut g = if flip_all { m ^ BitPair::ALL[3] } else { m };
            if n % 2 == 1 && i + 1 == mask.len() {
                g = BitPair::from_bits(g.hi(), false);
            }
            g
        })
        .collect();
    GroupSequence::new(groups, n).map(Ok)
}

/// Runs the protocol with Bob as man in the middle on TP's link to Alice and
/// reports what he recovers about Alice's secret.
pub fn active_attack(
    x: SecretInput,
    y: SecretInput,
    config: ProtocolConfig,
) -> Result<ActiveAttackRun> {
    let mut bob = MaliciousBob::default();
    let transcript = run_protocol(x, y, config, EveModel::Custom(&mut bob))?;
    let view = transcript.view_for(Party::Bob);
    let detected = was_detected(&transcript);

    let outcome = if matches!(transcript.verdict, Verdict::Aborted(_)) {
        AttackOutcome::NotRecovered {
            reason: format!("run aborted: {}", transcript.verdict),
        }
    } else {
        match config.variant {
            Variant::Original => outcome_from(recover_active_original(&view, &bob.intercepted))?,
            Variant::Fixed => match recover_active_fixed(&view)? {
                Ok(groups) => outcome_from(Ok(groups))?,
                Err(reason) => AttackOutcome::NotRecovered { reason },
            },
        }
    };
    let report = AttackReport::new(
        AttackKind::Active,
        config.variant,
        Party::Bob,
        Party::Alice,
        outcome,
        x.value(),
        detected,
    );
    Ok(ActiveAttackRun {
        transcript,
        report,
        m_ab: bob.intercepted,
    })
}

/// Convenience wrapper: an honest run followed by both passive attacks.
pub fn passive_attack_run(
    x: SecretInput,
    y: SecretInput,
    config: ProtocolConfig,
) -> Result<(Transcript, [AttackReport; 2])> {
    let t = run_protocol(x, y, config, EveModel::None)?;
    let by_bob = passive_attack(&t, Party::Bob)?;
    let by_alice = passive_attack(&t, Party::Alice)?;
    Ok((t, [by_bob, by_alice]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bp(s: &str) -> BitPair {
        BitPair::parse(s).unwrap()
    }

    fn secret(x: u64, n: u32) -> SecretInput {
        SecretInput::new(x, n).unwrap()
    }

    #[test]
    fn deduce_mc_examples() {
        assert_eq!(deduce_mc(bp("00"), bp("01")), bp("01"));
        assert_eq!(deduce_mc(bp("00"), bp("00")), bp("00"));
        assert_eq!(deduce_mc(bp("11"), bp("11")), bp("00"));
    }

    /// A hand-built view whose publication unmasks to the given `R'`.
    fn view_with_r_prime(r_prime: &[&str], own: &[&str]) -> PartyView {
        use crate::channel::ClassicalMessage;
        use crate::keys::ParticipantKeys;
        let k_a = vec![bp("10"), bp("01")];
        let k_b = vec![bp("11"), bp("11")];
        let r: Vec<BitPair> = r_prime
            .iter()
            .enumerate()
            .map(|(i, s)| bp(s) ^ k_a[i] ^ k_b[i])
            .collect();
        PartyView {
            party: Party::Alice,
            variant: Variant::Original,
            n_bits: 4,
            public: vec![ClassicalMessage {
                claimed_sender: Party::ThirdParty,
                receiver: Party::Alice,
                body: Body::Groups(r),
            }],
            keys: KeyView::Participant(ParticipantKeys {
                owner: Party::Alice,
                k_a,
                k_b,
                k_tp: vec![bp("00"), bp("00")],
            }),
            own_groups: Some(GroupSequence::new(own.iter().map(|s| bp(s)).collect(), 4).unwrap()),
            own_measurements: vec![],
            own_announced: vec![],
        }
    }

    #[test]
    fn passive_recovery_examples() {
        let got = recover_passive(&view_with_r_prime(&["11", "00"], &["01", "10"])).unwrap();
        assert_eq!(got.groups(), &[bp("10"), bp("10")]);
        let got = recover_passive(&view_with_r_prime(&["00", "00"], &["11", "01"])).unwrap();
        assert_eq!(got.groups(), &[bp("11"), bp("01")]);
    }

    #[test]
    fn passive_attack_on_honest_run() {
        let cfg = ProtocolConfig::new(Variant::Original, 4, 7);
        let (_, [by_bob, by_alice]) = passive_attack_run(secret(6, 4), secret(5, 4), cfg).unwrap();
        assert_eq!(by_bob.recovered_secret(), Some(6));
        assert_eq!(by_alice.recovered_secret(), Some(5));
        assert!(by_bob.success && by_alice.success);
        assert!(!by_bob.detected);
    }

    #[test]
    fn passive_attack_not_applicable_to_fixed() {
        let cfg = ProtocolConfig::new(Variant::Fixed, 4, 7);
        let (t, [r, _]) = passive_attack_run(secret(6, 4), secret(5, 4), cfg).unwrap();
        assert!(!r.is_applicable());
        assert!(!r.success);
        assert!(matches!(
            recover_passive(&t.view_for(Party::Bob)),
            Err(Error::NotApplicable(_))
        ));
        assert!(passive_attack(&t, Party::ThirdParty).is_err());
    }

    #[test]
    fn active_attack_single_run() {
        let cfg = ProtocolConfig::new(Variant::Original, 4, 7);
        let run = active_attack(secret(6, 4), secret(0, 4), cfg).unwrap();
        assert_eq!(run.report.recovered_secret(), Some(6));
        assert!(run.report.success);
        assert!(!run.report.detected);
        assert!(run.alice_matches_bob());
        assert_eq!(run.transcript.checks.len(), 3);
        run.transcript.check_consistency().unwrap();
    }

    #[test]
    fn active_attack_on_fixed_reports_honestly() {
        for seed in 0..50 {
            let cfg = ProtocolConfig::new(Variant::Fixed, 5, seed);
            let x = secret(seed % 32, 5);
            let run = active_attack(x, secret(3, 5), cfg).unwrap();
            assert!(!run.report.detected);
            match &run.report.outcome {
                AttackOutcome::Recovered { secret, .. } => assert_eq!(*secret, x.value()),
                AttackOutcome::NotRecovered { .. } => assert!(!run.report.success),
                AttackOutcome::NotApplicable { .. } => panic!("fixed variant is in scope"),
            }
        }
    }

    #[test]
    fn report_text_round_trips_through_parser() {
        let cfg = ProtocolConfig::new(Variant::Original, 4, 7);
        let (_, reports) = passive_attack_run(secret(6, 4), secret(5, 4), cfg).unwrap();
        let doc = crate::canonical::parse(&reports_to_canonical_text(&reports)).unwrap();
        assert_eq!(doc.kind, "attack-report");
        assert_eq!(doc.get("report.0.recovered_secret"), Some("6"));
        assert_eq!(doc.get("report.1.attacker"), Some("Alice"));
    }
}
