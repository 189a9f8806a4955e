//! Full runs of the comparison protocol between Alice, Bob and TP.
//!
//! Both variants share the first four steps: TP prepares one carrier per
//! group, sends qubits (1,2) of each copy to Alice and (3,4) to Bob behind
//! decoys, both comparers measure in Z and announce
//! `R = G ^ M ^ K_tp ^ K_own`. They differ in what TP publishes: the
//! original variant publishes every combined group `R_i`, the fixed variant
//! publishes only the number of 1-bits `S` across all combined groups.

use std::fmt;
use std::str::FromStr;

use crate::canonical::CanonicalWriter;
use crate::channel::{
    AbortReason, Body, Channel, CheckRecord, ClassicalMessage, EveModel, Link, LoggedMessage,
    Transfer,
};
use crate::encoding::{
    bit_sum, fmt_seq, group_count, to_groups, BitPair, GroupSequence, SecretInput,
};
use crate::error::{invalid, Error, Result};
use crate::keys::{party_view, simulate_qkd, KeyView, ParticipantKeys, Party, ThirdPartyKeys};
use crate::quantum::{build_upsilon, BellCode, ParticleRef, QuantumRegister};
use crate::rng::stream;

const KEY_STREAM: u64 = 0;
const MEASUREMENT_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Original,
    Fixed,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Original => "original",
            Variant::Fixed => "fixed",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(Variant::Original),
            "fixed" => Ok(Variant::Fixed),
            _ => Err(invalid(format!("unknown variant `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    pub variant: Variant,
    pub n_bits: u32,
    /// Decoys mixed into each quantum transfer.
    pub decoy_count: usize,
    /// Highest tolerated decoy error rate.
    pub threshold: f64,
    pub seed: u64,
}

impl ProtocolConfig {
    /// Defaults: one decoy per payload particle and a zero error threshold.
    pub fn new(variant: Variant, n_bits: u32, seed: u64) -> Self {
        ProtocolConfig {
            variant,
            n_bits,
            decoy_count: 2 * group_count(n_bits),
            threshold: 0.0,
            seed,
        }
    }

    pub fn with_decoys(mut self, decoy_count: usize) -> Self {
        self.decoy_count = decoy_count;
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn group_count(&self) -> usize {
        group_count(self.n_bits)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bits == 0 || self.n_bits > crate::encoding::MAX_BITS {
            return Err(invalid(format!(
                "bit-length {} is out of range",
                self.n_bits
            )));
        }
        if self.decoy_count == 0 {
            return Err(Error::Config(
                "at least one decoy per transfer is required".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "threshold {} is not in [0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Equal,
    NotEqual,
    Aborted(AbortReason),
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Equal => f.write_str("equal"),
            Verdict::NotEqual => f.write_str("not-equal"),
            Verdict::Aborted(why) => write!(f, "aborted: {why}"),
        }
    }
}

/// TP's qubit sequences after preparation. `s_a` holds qubits (1,2) of each
/// copy in copy order, `s_b` qubits (3,4), `s_c` qubits (5,6).
#[derive(Debug, Clone)]
pub struct Preparation {
    pub register: QuantumRegister,
    pub s_a: Vec<ParticleRef>,
    pub s_b: Vec<ParticleRef>,
    pub s_c: Vec<ParticleRef>,
}

pub fn tp_prepare(count: usize) -> Result<Preparation> {
    if count == 0 {
        return Err(invalid("TP must prepare at least one carrier"));
    }
    let take = |first: usize| -> Vec<ParticleRef> {
        (0..count)
            .flat_map(|copy| [first, first + 1].map(|qubit| ParticleRef { copy, qubit }))
            .collect()
    };
    Ok(Preparation {
        register: QuantumRegister::new(vec![build_upsilon(); count]),
        s_a: take(0),
        s_b: take(2),
        s_c: take(4),
    })
}

/// A comparer's masked announcement `G ^ M ^ K_tp ^ K_peer`.
pub fn participant_announce(g: BitPair, m: BitPair, k_tp: BitPair, k_peer: BitPair) -> BitPair {
    g ^ m ^ k_tp ^ k_peer
}

pub fn tp_combine_original(
    r_a: BitPair,
    r_b: BitPair,
    k_ac: BitPair,
    k_bc: BitPair,
    m_c: BitPair,
) -> BitPair {
    r_a ^ r_b ^ k_ac ^ k_bc ^ m_c
}

fn same_len(seqs: &[&[BitPair]]) -> Result<usize> {
    let n = seqs[0].len();
    if n == 0 {
        return Err(invalid("empty group sequence"));
    }
    if seqs.iter().any(|s| s.len() != n) {
        return Err(invalid("group sequences differ in length"));
    }
    Ok(n)
}

/// Unmasks `R_i' = R_i ^ K_A ^ K_B`; equal iff every `R_i'` is `00`.
pub fn verdict_original(
    r: &[BitPair],
    k_a: &[BitPair],
    k_b: &[BitPair],
) -> Result<(Vec<BitPair>, Verdict)> {
    same_len(&[r, k_a, k_b])?;
    let r_prime: Vec<BitPair> = (0..r.len()).map(|i| r[i] ^ k_a[i] ^ k_b[i]).collect();
    let verdict = if r_prime.iter().all(|&g| g == BitPair::ZERO) {
        Verdict::Equal
    } else {
        Verdict::NotEqual
    };
    Ok((r_prime, verdict))
}

/// The combined groups `a_i` TP computes in the fixed variant.
pub fn tp_combined_groups(
    r_a: &[BitPair],
    r_b: &[BitPair],
    k_ac: &[BitPair],
    k_bc: &[BitPair],
    m_c: &[BitPair],
) -> Result<Vec<BitPair>> {
    let n = same_len(&[r_a, r_b, k_ac, k_bc, m_c])?;
    Ok((0..n)
        .map(|i| tp_combine_original(r_a[i], r_b[i], k_ac[i], k_bc[i], m_c[i]))
        .collect())
}

/// `S`: the number of 1-bits over all combined groups.
pub fn tp_combine_fixed(
    r_a: &[BitPair],
    r_b: &[BitPair],
    k_ac: &[BitPair],
    k_bc: &[BitPair],
    m_c: &[BitPair],
) -> Result<u32> {
    Ok(bit_sum(&tp_combined_groups(r_a, r_b, k_ac, k_bc, m_c)?))
}

/// `S' = bit_sum(K_A ^ K_B)`; equal iff `S == S'`.
pub fn verdict_fixed(s: u32, k_a: &[BitPair], k_b: &[BitPair]) -> Result<(u32, Verdict)> {
    if k_a.len() != k_b.len() {
        return Err(invalid("key sequences differ in length"));
    }
    let b: Vec<BitPair> = k_a.iter().zip(k_b).map(|(&x, &y)| x ^ y).collect();
    let s_prime = bit_sum(&b);
    let verdict = if s == s_prime {
        Verdict::Equal
    } else {
        Verdict::NotEqual
    };
    Ok((s_prime, verdict))
}

/// What TP publishes at the end of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Publication {
    Groups(Vec<BitPair>),
    Sum(u32),
}

/// A comparer's unmasked value: `R'` or `S'`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LocalResult {
    RPrime(Vec<BitPair>),
    SPrime(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantRecord {
    pub party: Party,
    pub secret: SecretInput,
    pub groups: GroupSequence,
    pub keys: ParticipantKeys,
    /// Z outcomes `M_A` / `M_B`.
    pub measurements: Vec<BitPair>,
    /// `R_A` / `R_B`.
    pub announced: Vec<BitPair>,
    pub received: Option<Publication>,
    pub result: Option<LocalResult>,
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThirdPartyRecord {
    pub keys: ThirdPartyKeys,
    pub received_a: Vec<BitPair>,
    pub received_b: Vec<BitPair>,
    pub bell_outcomes: Vec<BellCode>,
    pub m_c: Vec<BitPair>,
    /// `R_i` in the original variant, `a_i` in the fixed one.
    pub combined: Vec<BitPair>,
    pub published: Option<Publication>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub config: ProtocolConfig,
    pub announcements: Vec<LoggedMessage>,
    pub alice: ParticipantRecord,
    pub bob: ParticipantRecord,
    pub tp: ThirdPartyRecord,
    pub checks: Vec<CheckRecord>,
    /// Alice's conclusion (Bob reaches the same one on every run that is
    /// not tampered with after the check phase).
    pub verdict: Verdict,
}

fn measure_pairs(
    particles: &[ParticleRef],
    register: &mut QuantumRegister,
    rng: &mut crate::rng::SimRng,
    bell: bool,
) -> Result<Vec<BitPair>> {
    particles
        .chunks(2)
        .map(|pair| match *pair {
            [hi, lo] if bell => register.bell_measure_pair(hi, lo, rng).map(BellCode::bits),
            [hi, lo] => register.z_measure_pair(hi, lo, rng),
            _ => Err(invalid("odd number of particles")),
        })
        .collect()
}

fn groups_of(
    msg: &ClassicalMessage,
    expected: usize,
) -> std::result::Result<Vec<BitPair>, AbortReason> {
    match &msg.body {
        Body::Groups(g) if g.len() == expected => Ok(g.clone()),
        other => Err(AbortReason::Malformed(format!(
            "expected {expected} groups from {}, got {other}",
            msg.claimed_sender
        ))),
    }
}

struct Run<'a> {
    config: ProtocolConfig,
    channel: Channel<'a>,
    register: QuantumRegister,
    alice: ParticipantRecord,
    bob: ParticipantRecord,
    tp: ThirdPartyRecord,
}

impl Run<'_> {
    fn finish(self, verdict: Verdict) -> Transcript {
        let (announcements, checks) = self.channel.into_records();
        Transcript {
            config: self.config,
            announcements,
            alice: self.alice,
            bob: self.bob,
            tp: self.tp,
            checks,
            verdict,
        }
    }
}

fn participant(party: Party, secret: SecretInput, keys: KeyView) -> ParticipantRecord {
    let KeyView::Participant(keys) = keys else {
        unreachable!("comparers always receive participant keys")
    };
    ParticipantRecord {
        party,
        secret,
        groups: to_groups(secret),
        keys,
        measurements: Vec::new(),
        announced: Vec::new(),
        received: None,
        result: None,
        verdict: None,
    }
}

/// Runs the protocol end to end. Deterministic in `(x, y, config, eve)`.
pub fn run_protocol(
    x: SecretInput,
    y: SecretInput,
    config: ProtocolConfig,
    eve: EveModel<'_>,
) -> Result<Transcript> {
    config.validate()?;
    if x.n_bits() != config.n_bits || y.n_bits() != config.n_bits {
        return Err(invalid(format!(
            "inputs have {} and {} bits but the run expects {}",
            x.n_bits(),
            y.n_bits(),
            config.n_bits
        )));
    }
    let g = config.group_count();
    let ring = simulate_qkd(g, &mut stream(config.seed, KEY_STREAM))?;
    let mut measure_rng = stream(config.seed, MEASUREMENT_STREAM);
    let prep = tp_prepare(g)?;
    let KeyView::ThirdParty(tp_keys) = party_view(&ring, Party::ThirdParty) else {
        unreachable!()
    };

    let mut run = Run {
        config,
        channel: Channel::new(eve, config.decoy_count, config.threshold, config.seed),
        register: prep.register,
        alice: participant(Party::Alice, x, party_view(&ring, Party::Alice)),
        bob: participant(Party::Bob, y, party_view(&ring, Party::Bob)),
        tp: ThirdPartyRecord {
            keys: tp_keys,
            received_a: Vec::new(),
            received_b: Vec::new(),
            bell_outcomes: Vec::new(),
            m_c: Vec::new(),
            combined: Vec::new(),
            published: None,
        },
    };

    // Distribution and eavesdropping checks.
    let mut held = Vec::with_capacity(2);
    for (to, payload) in [(Party::Alice, &prep.s_a), (Party::Bob, &prep.s_b)] {
        let link = Link {
            from: Party::ThirdParty,
            to,
        };
        match run
            .channel
            .deliver_quantum(link, payload, &mut run.register)?
        {
            Transfer::Delivered(p) if p.len() == 2 * g => held.push(p),
            Transfer::Delivered(p) => {
                let why = format!("{to} received {} particles, expected {}", p.len(), 2 * g);
                return Ok(run.finish(Verdict::Aborted(AbortReason::Malformed(why))));
            }
            Transfer::Aborted(why) => return Ok(run.finish(Verdict::Aborted(why))),
        }
    }

    // Z measurements, Alice first.
    run.alice.measurements = measure_pairs(&held[0], &mut run.register, &mut measure_rng, false)?;
    run.bob.measurements = measure_pairs(&held[1], &mut run.register, &mut measure_rng, false)?;

    for rec in [&mut run.alice, &mut run.bob] {
        rec.announced = (0..g)
            .map(|i| {
                participant_announce(
                    rec.groups.groups()[i],
                    rec.measurements[i],
                    rec.keys.k_tp[i],
                    rec.keys.own_mask()[i],
                )
            })
            .collect();
    }
    let to_tp = |party: Party, groups: &[BitPair]| ClassicalMessage {
        claimed_sender: party,
        receiver: Party::ThirdParty,
        body: Body::Groups(groups.to_vec()),
    };
    let from_a = run
        .channel
        .send(Party::Alice, to_tp(Party::Alice, &run.alice.announced));
    let from_b = run
        .channel
        .send(Party::Bob, to_tp(Party::Bob, &run.bob.announced));
    match (groups_of(&from_a, g), groups_of(&from_b, g)) {
        (Ok(a), Ok(b)) => {
            run.tp.received_a = a;
            run.tp.received_b = b;
        }
        (Err(why), _) | (_, Err(why)) => return Ok(run.finish(Verdict::Aborted(why))),
    }

    // TP's Bell measurements and combination.
    let codes = measure_pairs(&prep.s_c, &mut run.register, &mut measure_rng, true)?;
    run.tp.bell_outcomes = codes.iter().map(|&b| BellCode::from_bits(b)).collect();
    run.tp.m_c = codes;
    run.tp.combined = tp_combined_groups(
        &run.tp.received_a,
        &run.tp.received_b,
        &run.tp.keys.k_ac,
        &run.tp.keys.k_bc,
        &run.tp.m_c,
    )?;
    let publication = match config.variant {
        Variant::Original => Publication::Groups(run.tp.combined.clone()),
        Variant::Fixed => Publication::Sum(bit_sum(&run.tp.combined)),
    };
    run.tp.published = Some(publication.clone());
    let body = match &publication {
        Publication::Groups(r) => Body::Groups(r.clone()),
        Publication::Sum(s) => Body::Sum(*s),
    };

    let mut verdicts = Vec::with_capacity(2);
    for party in [Party::Alice, Party::Bob] {
        let delivered = run.channel.send(
            Party::ThirdParty,
            ClassicalMessage {
                claimed_sender: Party::ThirdParty,
                receiver: party,
                body: body.clone(),
            },
        );
        let rec = if party == Party::Alice {
            &mut run.alice
        } else {
            &mut run.bob
        };
        let outcome = match (config.variant, &delivered.body) {
            (Variant::Original, Body::Groups(r)) if r.len() == g => {
                rec.received = Some(Publication::Groups(r.clone()));
                let (r_prime, v) = verdict_original(r, &rec.keys.k_a, &rec.keys.k_b)?;
                rec.result = Some(LocalResult::RPrime(r_prime));
                v
            }
            (Variant::Fixed, Body::Sum(s)) => {
                rec.received = Some(Publication::Sum(*s));
                let (s_prime, v) = verdict_fixed(*s, &rec.keys.k_a, &rec.keys.k_b)?;
                rec.result = Some(LocalResult::SPrime(s_prime));
                v
            }
            (_, other) => Verdict::Aborted(AbortReason::Malformed(format!(
                "unexpected publication {other}"
            ))),
        };
        rec.verdict = Some(outcome.clone());
        verdicts.push(outcome);
    }
    let verdict = verdicts.swap_remove(0);
    Ok(run.finish(verdict))
}

/// The part of a finished run one party legitimately knows: every public
/// classical message (without true origins), its own keys, and for comparers
/// its own groups and measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct PartyView {
    pub party: Party,
    pub variant: Variant,
    pub n_bits: u32,
    pub public: Vec<ClassicalMessage>,
    pub keys: KeyView,
    pub own_groups: Option<GroupSequence>,
    pub own_measurements: Vec<BitPair>,
    pub own_announced: Vec<BitPair>,
}

impl PartyView {
    /// The last publication TP addressed to this party, if any.
    pub fn publication(&self) -> Option<&Body> {
        self.public
            .iter()
            .rev()
            .find(|m| {
                m.claimed_sender == Party::ThirdParty
                    && m.receiver == self.party
                    && matches!(m.body, Body::Groups(_) | Body::Sum(_))
            })
            .map(|m| &m.body)
    }
}

impl Transcript {
    pub fn record(&self, party: Party) -> Option<&ParticipantRecord> {
        match party {
            Party::Alice => Some(&self.alice),
            Party::Bob => Some(&self.bob),
            _ => None,
        }
    }

    pub fn view_for(&self, party: Party) -> PartyView {
        let own = self.record(party);
        let keys = match own {
            Some(rec) => KeyView::Participant(rec.keys.clone()),
            None if party == Party::ThirdParty => KeyView::ThirdParty(self.tp.keys.clone()),
            None => KeyView::None,
        };
        PartyView {
            party,
            variant: self.config.variant,
            n_bits: self.config.n_bits,
            public: self
                .announcements
                .iter()
                .map(|m| m.message.clone())
                .collect(),
            keys,
            own_groups: own.map(|r| r.groups.clone()),
            own_measurements: own.map(|r| r.measurements.clone()).unwrap_or_default(),
            own_announced: own.map(|r| r.announced.clone()).unwrap_or_default(),
        }
    }

    /// Recomputes every announced or derived value from the private records
    /// and reports the first one that does not satisfy its defining equation.
    pub fn check_consistency(&self) -> std::result::Result<(), String> {
        for rec in [&self.alice, &self.bob] {
            if rec.measurements.is_empty() {
                continue;
            }
            for i in 0..rec.announced.len() {
                let expect = participant_announce(
                    rec.groups.groups()[i],
                    rec.measurements[i],
                    rec.keys.k_tp[i],
                    rec.keys.own_mask()[i],
                );
                if rec.announced[i] != expect {
                    return Err(format!("{} announcement {i} mismatch", rec.party));
                }
            }
            match (&rec.received, &rec.result) {
                (Some(Publication::Groups(r)), Some(LocalResult::RPrime(rp))) => {
                    let (expect, v) = verdict_original(r, &rec.keys.k_a, &rec.keys.k_b)
                        .map_err(|e| e.to_string())?;
                    if &expect != rp || Some(&v) != rec.verdict.as_ref() {
                        return Err(format!("{} R' mismatch", rec.party));
                    }
                }
                (Some(Publication::Sum(s)), Some(LocalResult::SPrime(sp))) => {
                    let (expect, v) = verdict_fixed(*s, &rec.keys.k_a, &rec.keys.k_b)
                        .map_err(|e| e.to_string())?;
                    if expect != *sp || Some(&v) != rec.verdict.as_ref() {
                        return Err(format!("{} S' mismatch", rec.party));
                    }
                }
                (None, None) => {}
                _ => return Err(format!("{} result does not match publication", rec.party)),
            }
        }
        if !self.tp.combined.is_empty() {
            let expect = tp_combined_groups(
                &self.tp.received_a,
                &self.tp.received_b,
                &self.tp.keys.k_ac,
                &self.tp.keys.k_bc,
                &self.tp.m_c,
            )
            .map_err(|e| e.to_string())?;
            if expect != self.tp.combined {
                return Err("TP combination mismatch".into());
            }
            let bits: Vec<BitPair> = self.tp.bell_outcomes.iter().map(|c| c.bits()).collect();
            if bits != self.tp.m_c {
                return Err("TP Bell code mismatch".into());
            }
            let published = match self.config.variant {
                Variant::Original => Publication::Groups(expect),
                Variant::Fixed => Publication::Sum(bit_sum(&expect)),
            };
            if self.tp.published.as_ref() != Some(&published) {
                return Err("TP publication mismatch".into());
            }
        }
        Ok(())
    }

    pub fn to_canonical_text(&self) -> String {
        let mut w = CanonicalWriter::new("transcript");
        let c = &self.config;
        w.field("config.variant", c.variant)
            .field("config.n_bits", c.n_bits)
            .field("config.groups", c.group_count())
            .field("config.decoy_count", c.decoy_count)
            .field("config.threshold", c.threshold)
            .field("config.seed", c.seed);
        for rec in [&self.alice, &self.bob] {
            let p = rec.party.to_string().to_lowercase();
            w.field(format!("{p}.secret"), rec.secret.value())
                .field(format!("{p}.groups"), fmt_seq(rec.groups.groups()))
                .field(format!("{p}.keys.k_a"), fmt_seq(&rec.keys.k_a))
                .field(format!("{p}.keys.k_b"), fmt_seq(&rec.keys.k_b))
                .field(
                    format!(
                        "{p}.keys.{}",
                        if rec.party == Party::Alice {
                            "k_ac"
                        } else {
                            "k_bc"
                        }
                    ),
                    fmt_seq(&rec.keys.k_tp),
                )
                .field(format!("{p}.measurements"), fmt_seq(&rec.measurements))
                .field(format!("{p}.announced"), fmt_seq(&rec.announced))
                .field(
                    format!("{p}.received"),
                    fmt_publication(rec.received.as_ref()),
                )
                .field(
                    format!("{p}.result"),
                    match &rec.result {
                        Some(LocalResult::RPrime(r)) => format!("r_prime {}", fmt_seq(r)),
                        Some(LocalResult::SPrime(s)) => format!("s_prime {s}"),
                        None => "-".into(),
                    },
                )
                .field(
                    format!("{p}.verdict"),
                    rec.verdict.as_ref().map_or("-".into(), |v| v.to_string()),
                );
        }
        let bell: Vec<String> = self
            .tp
            .bell_outcomes
            .iter()
            .map(|b| b.to_string())
            .collect();
        w.field("tp.keys.k_ac", fmt_seq(&self.tp.keys.k_ac))
            .field("tp.keys.k_bc", fmt_seq(&self.tp.keys.k_bc))
            .field("tp.received_a", fmt_seq(&self.tp.received_a))
            .field("tp.received_b", fmt_seq(&self.tp.received_b))
            .field("tp.bell", bell.join(","))
            .field("tp.m_c", fmt_seq(&self.tp.m_c))
            .field("tp.combined", fmt_seq(&self.tp.combined))
            .field("tp.published", fmt_publication(self.tp.published.as_ref()));
        w.field("checks.count", self.checks.len());
        for (i, ch) in self.checks.iter().enumerate() {
            let r = &ch.result;
            w.field(
                format!("check.{i}"),
                format!(
                    "link={} sender={} holder={} decoys={} errors={} rate={} threshold={} {}",
                    ch.link,
                    ch.sender,
                    ch.holder,
                    r.decoys,
                    r.errors,
                    r.error_rate(),
                    r.threshold,
                    if r.passed { "pass" } else { "abort" }
                ),
            );
        }
        w.field("messages.count", self.announcements.len());
        for (i, m) in self.announcements.iter().enumerate() {
            w.field(
                format!("message.{i}"),
                format!(
                    "origin={} claimed={} to={} body={}",
                    m.origin, m.message.claimed_sender, m.message.receiver, m.message.body
                ),
            );
        }
        w.field("verdict", &self.verdict);
        w.finish()
    }
}

fn fmt_publication(p: Option<&Publication>) -> String {
    match p {
        Some(Publication::Groups(g)) => format!("groups {}", fmt_seq(g)),
        Some(Publication::Sum(s)) => format!("sum {s}"),
        None => "-".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bp(s: &str) -> BitPair {
        BitPair::parse(s).unwrap()
    }

    fn seq(s: &[&str]) -> Vec<BitPair> {
        s.iter().map(|x| bp(x)).collect()
    }

    fn secret(x: u64, n: u32) -> SecretInput {
        SecretInput::new(x, n).unwrap()
    }

    #[test]
    fn preparation_layout() {
        let p = tp_prepare(1).unwrap();
        assert_eq!(
            p.s_a,
            vec![
                ParticleRef { copy: 0, qubit: 0 },
                ParticleRef { copy: 0, qubit: 1 }
            ]
        );
        let p = tp_prepare(3).unwrap();
        let s_b: Vec<(usize, usize)> = p.s_b.iter().map(|r| (r.copy, r.qubit)).collect();
        assert_eq!(s_b, vec![(0, 2), (0, 3), (1, 2), (1, 3), (2, 2), (2, 3)]);
        assert_eq!(p.s_c[5], ParticleRef { copy: 2, qubit: 5 });
        assert_eq!(p.register.copies().len(), 3);
        assert!(tp_prepare(0).is_err());
    }

    #[test]
    fn announce_examples() {
        assert_eq!(
            participant_announce(bp("01"), bp("10"), bp("11"), bp("00")),
            bp("00")
        );
        assert_eq!(
            participant_announce(bp("00"), bp("00"), bp("00"), bp("00")),
            bp("00")
        );
        assert_eq!(
            participant_announce(bp("11"), bp("11"), bp("01"), bp("10")),
            bp("11")
        );
    }

    #[test]
    fn combine_examples() {
        let z = BitPair::ZERO;
        assert_eq!(tp_combine_original(z, z, z, z, z), z);
        assert_eq!(tp_combine_original(bp("01"), bp("10"), z, z, bp("11")), z);
        assert_eq!(
            tp_combine_fixed(&[z, z], &[z, z], &[z, z], &[z, z], &[z, z]).unwrap(),
            0
        );
        // a = [11, 01]
        let s = tp_combine_fixed(&seq(&["11", "01"]), &[z, z], &[z, z], &[z, z], &[z, z]).unwrap();
        assert_eq!(s, 3);
        assert!(tp_combine_fixed(&[z], &[z, z], &[z], &[z], &[z]).is_err());
    }

    #[test]
    fn original_verdicts() {
        let z = vec![BitPair::ZERO; 2];
        assert_eq!(
            verdict_original(&seq(&["00", "00"]), &z, &z).unwrap().1,
            Verdict::Equal
        );
        assert_eq!(
            verdict_original(&seq(&["00", "01"]), &z, &z).unwrap().1,
            Verdict::NotEqual
        );
        assert!(verdict_original(&[], &[], &[]).is_err());
        assert!(verdict_original(&seq(&["00"]), &z, &z).is_err());
    }

    #[test]
    fn fixed_verdicts() {
        // K_A ^ K_B = [11, 00] gives S' = 2.
        let k_a = seq(&["11", "00"]);
        let k_b = seq(&["00", "00"]);
        assert_eq!(verdict_fixed(2, &k_a, &k_b).unwrap(), (2, Verdict::Equal));
        assert_eq!(
            verdict_fixed(3, &k_a, &k_b).unwrap(),
            (2, Verdict::NotEqual)
        );
        let z = vec![BitPair::ZERO; 2];
        assert_eq!(verdict_fixed(0, &z, &z).unwrap(), (0, Verdict::Equal));
    }

    #[test]
    fn run_examples() {
        let cfg = ProtocolConfig::new(Variant::Original, 4, 1);
        let t = run_protocol(secret(6, 4), secret(6, 4), cfg, EveModel::None).unwrap();
        assert_eq!(t.verdict, Verdict::Equal);
        let t = run_protocol(secret(6, 4), secret(5, 4), cfg, EveModel::None).unwrap();
        assert_eq!(t.verdict, Verdict::NotEqual);
        assert_eq!(t.bob.verdict, Some(Verdict::NotEqual));
        t.check_consistency().unwrap();
    }

    #[test]
    fn bit_length_mismatch_is_rejected() {
        let cfg = ProtocolConfig::new(Variant::Original, 4, 1);
        let err = run_protocol(secret(6, 3), secret(6, 4), cfg, EveModel::None).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
        let bad = cfg.with_decoys(0);
        assert!(matches!(
            run_protocol(secret(6, 4), secret(6, 4), bad, EveModel::None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn honest_run_message_sequence() {
        let cfg = ProtocolConfig::new(Variant::Fixed, 3, 9);
        let t = run_protocol(secret(5, 3), secret(5, 3), cfg, EveModel::None).unwrap();
        // Two checks of four messages, two announcements to TP, two publications.
        assert_eq!(t.announcements.len(), 12);
        assert_eq!(t.checks.len(), 2);
        assert!(t
            .announcements
            .iter()
            .all(|m| m.origin == m.message.claimed_sender));
        assert_eq!(t.verdict, Verdict::Equal);
        assert!(matches!(t.tp.published, Some(Publication::Sum(_))));
        t.check_consistency().unwrap();
    }

    #[test]
    fn intercept_resend_aborts() {
        let cfg = ProtocolConfig::new(Variant::Original, 4, 0).with_decoys(20);
        let t = run_protocol(
            secret(1, 4),
            secret(2, 4),
            cfg,
            EveModel::InterceptResendRandomBasis,
        )
        .unwrap();
        assert!(matches!(
            t.verdict,
            Verdict::Aborted(AbortReason::Eavesdropping { .. })
        ));
        assert!(t.alice.measurements.is_empty());
    }

    #[test]
    fn canonical_text_is_stable() {
        let cfg = ProtocolConfig::new(Variant::Original, 4, 1);
        let a = run_protocol(secret(6, 4), secret(5, 4), cfg, EveModel::None).unwrap();
        let b = run_protocol(secret(6, 4), secret(5, 4), cfg, EveModel::None).unwrap();
        assert_eq!(a.to_canonical_text(), b.to_canonical_text());
        let doc = crate::canonical::parse(&a.to_canonical_text()).unwrap();
        assert_eq!(doc.kind, "transcript");
        assert_eq!(doc.get("verdict"), Some("not-equal"));
        assert_eq!(doc.get("alice.groups"), Some("01,10"));
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("fixed".parse::<Variant>().unwrap(), Variant::Fixed);
        assert!("other".parse::<Variant>().is_err());
    }
}
