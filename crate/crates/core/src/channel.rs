//! Quantum and classical channels between the parties.
//!
//! Quantum traffic is a sequence of slots, each either a payload particle or a
//! decoy photon. Every transfer is followed by a decoy check: the receiver
//! confirms receipt, the sender announces decoy positions and bases, the
//! receiver reports what it measured, and the sender announces the verdict.
//! All of this runs over the classical channel, which is public and reliable
//! but unauthenticated: an installed [`Interceptor`] may read, forge or
//! answer messages under another party's name.

use std::fmt;

use rand::seq::index;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;

use crate::encoding::{fmt_seq, BitPair};
use crate::error::{Error, Result};
use crate::keys::Party;
use crate::quantum::{measure_decoy, new_decoy, Basis, DecoyPhoton, ParticleRef, QuantumRegister};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Payload(ParticleRef),
    Decoy(DecoyPhoton),
}

/// What physically travels on a quantum link.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QuantumMessage {
    pub slots: Vec<Slot>,
}

impl QuantumMessage {
    /// Payload particles remaining once the given slot positions are dropped.
    pub fn without_positions(&self, positions: &[usize]) -> Vec<ParticleRef> {
        self.slots
            .iter()
            .enumerate()
            .filter(|(i, _)| !positions.contains(i))
            .filter_map(|(_, s)| match s {
                Slot::Payload(p) => Some(*p),
                Slot::Decoy(_) => None,
            })
            .collect()
    }
}

/// The sender's private note of where it put decoys and what it prepared.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DecoyRecord {
    /// `(slot position, prepared photon)`, ascending by position.
    pub entries: Vec<(usize, DecoyPhoton)>,
}

impl DecoyRecord {
    pub fn positions(&self) -> Vec<usize> {
        self.entries.iter().map(|(p, _)| *p).collect()
    }

    pub fn announcement(&self) -> Vec<(usize, Basis)> {
        self.entries.iter().map(|(p, d)| (*p, d.basis)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedMessage {
    pub message: QuantumMessage,
    pub record: DecoyRecord,
}

/// Mixes `count` fresh decoys into `payload` at uniformly random positions.
pub fn insert_decoys<R: Rng + ?Sized>(
    payload: &[ParticleRef],
    count: usize,
    rng: &mut R,
) -> PreparedMessage {
    let total = payload.len() + count;
    let mut positions = index::sample(rng, total, count).into_vec();
    positions.sort_unstable();
    let mut entries = Vec::with_capacity(count);
    let mut slots = Vec::with_capacity(total);
    let mut particles = payload.iter();
    let mut next = positions.iter().peekable();
    for i in 0..total {
        if next.peek() == Some(&&i) {
            next.next();
            let d = new_decoy(rng);
            entries.push((i, d));
            slots.push(Slot::Decoy(d));
        } else {
            slots.push(Slot::Payload(*particles.next().expect("payload slot")));
        }
    }
    PreparedMessage {
        message: QuantumMessage { slots },
        record: DecoyRecord { entries },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Link {
    pub from: Party,
    pub to: Party,
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Body {
    ReceiptConfirmed,
    DecoyAnnouncement(Vec<(usize, Basis)>),
    DecoyOutcomes(Vec<bool>),
    CheckOutcome {
        passed: bool,
        errors: usize,
        decoys: usize,
    },
    Groups(Vec<BitPair>),
    Sum(u32),
}

impl fmt::Display for Body {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Body::ReceiptConfirmed => f.write_str("receipt"),
            Body::DecoyAnnouncement(a) => {
                let items: Vec<_> = a.iter().map(|(p, b)| format!("{p}:{b}")).collect();
                write!(f, "decoys [{}]", items.join(","))
            }
            Body::DecoyOutcomes(o) => {
                let bits: String = o.iter().map(|&b| if b { '1' } else { '0' }).collect();
                write!(f, "outcomes [{bits}]")
            }
            Body::CheckOutcome {
                passed,
                errors,
                decoys,
            } => write!(
                f,
                "check {} {errors}/{decoys}",
                if *passed { "pass" } else { "abort" }
            ),
            Body::Groups(g) => write!(f, "groups [{}]", fmt_seq(g)),
            Body::Sum(s) => write!(f, "sum {s}"),
        }
    }
}

/// A classical message. The sender field is only a claim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassicalMessage {
    pub claimed_sender: Party,
    pub receiver: Party,
    pub body: Body,
}

/// A delivered classical message together with who really sent it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoggedMessage {
    pub origin: Party,
    pub message: ClassicalMessage,
}

/// Adversary hook on the channels.
///
/// By default every method lets traffic through untouched. An interceptor
/// that `captures` a link becomes the man in the middle on it: it finishes
/// the sender's decoy check posing as the receiver, gets the payload through
/// [`Interceptor::relay`], then sends it on with fresh decoys and runs a
/// second check with the real receiver posing as the sender.
pub trait Interceptor {
    fn identity(&self) -> Party {
        Party::Eve
    }

    fn captures(&self, _link: Link) -> bool {
        false
    }

    fn on_quantum(
        &mut self,
        _link: Link,
        message: QuantumMessage,
        _register: &mut QuantumRegister,
        _rng: &mut dyn RngCore,
    ) -> Result<QuantumMessage> {
        Ok(message)
    }

    fn relay(
        &mut self,
        _link: Link,
        payload: Vec<ParticleRef>,
        _register: &mut QuantumRegister,
        _rng: &mut dyn RngCore,
    ) -> Result<Vec<ParticleRef>> {
        Ok(payload)
    }

    fn on_classical(&mut self, _origin: Party, message: ClassicalMessage) -> ClassicalMessage {
        message
    }
}

/// Forwards everything unchanged.
#[derive(Debug, Default, Clone, Copy)]
pub struct PassThrough;

impl Interceptor for PassThrough {}

pub enum EveModel<'a> {
    None,
    /// Measures every passing photon in a random basis and resends the result.
    InterceptResendRandomBasis,
    Custom(&'a mut dyn Interceptor),
}

impl fmt::Debug for EveModel<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EveModel::None => "None",
            EveModel::InterceptResendRandomBasis => "InterceptResendRandomBasis",
            EveModel::Custom(_) => "Custom",
        })
    }
}

pub fn transmit<R: Rng + ?Sized>(
    message: QuantumMessage,
    link: Link,
    eve: &mut EveModel<'_>,
    register: &mut QuantumRegister,
    rng: &mut R,
) -> Result<QuantumMessage> {
    match eve {
        EveModel::None => Ok(message),
        EveModel::InterceptResendRandomBasis => {
            let mut out = message;
            for slot in &mut out.slots {
                let basis = Basis::random(rng);
                match slot {
                    Slot::Decoy(d) => {
                        let bit = measure_decoy(*d, basis, rng);
                        *d = DecoyPhoton { basis, bit };
                    }
                    // The collapsed particle is exactly the resent state.
                    Slot::Payload(p) => {
                        register.measure(*p, basis, rng)?;
                    }
                }
            }
            Ok(out)
        }
        EveModel::Custom(hook) => {
            let mut dyn_rng = DynRng(rng);
            hook.on_quantum(link, message, register, &mut dyn_rng)
        }
    }
}

/// Adapts a possibly unsized generic rng into a `dyn RngCore`.
struct DynRng<'r, R: ?Sized>(&'r mut R);

impl<R: Rng + ?Sized> RngCore for DynRng<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

pub fn transmit_classical(
    origin: Party,
    message: ClassicalMessage,
    eve: &mut EveModel<'_>,
) -> ClassicalMessage {
    match eve {
        EveModel::Custom(hook) => hook.on_classical(origin, message),
        _ => message,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub decoys: usize,
    pub errors: usize,
    pub outcomes: Vec<bool>,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckResult {
    pub fn error_rate(&self) -> f64 {
        self.errors as f64 / self.decoys as f64
    }
}

/// The receiver measures each announced decoy in the announced basis and the
/// sender counts mismatches. Passes iff the error rate is at most `threshold`.
pub fn run_check<R: Rng + ?Sized>(
    record: &DecoyRecord,
    delivered: &QuantumMessage,
    threshold: f64,
    register: &mut QuantumRegister,
    rng: &mut R,
) -> Result<CheckResult> {
    if record.entries.is_empty() {
        return Err(Error::Config(
            "eavesdropping check requested with zero decoys".into(),
        ));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!(
            "threshold {threshold} is not in [0, 1]"
        )));
    }
    let mut outcomes = Vec::with_capacity(record.entries.len());
    let mut errors = 0;
    for &(pos, prepared) in &record.entries {
        let seen = match delivered.slots.get(pos) {
            Some(Slot::Decoy(d)) => Some(measure_decoy(*d, prepared.basis, rng)),
            Some(Slot::Payload(p)) => Some(register.measure(*p, prepared.basis, rng)?),
            None => None,
        };
        outcomes.push(seen.unwrap_or(false));
        if seen != Some(prepared.bit) {
            errors += 1;
        }
    }
    let decoys = record.entries.len();
    let passed = errors as f64 / decoys as f64 <= threshold;
    Ok(CheckResult {
        decoys,
        errors,
        outcomes,
        threshold,
        passed,
    })
}

/// One sender-to-holder hop and the decoy check run over it.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRecord {
    pub link: Link,
    pub sender: Party,
    pub claimed_sender: Party,
    pub holder: Party,
    pub claimed_receiver: Party,
    pub result: CheckResult,
}

/// Why a run stopped before a comparison result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AbortReason {
    Eavesdropping {
        link: Link,
        errors: usize,
        decoys: usize,
    },
    Malformed(String),
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbortReason::Eavesdropping {
                link,
                errors,
                decoys,
            } => {
                write!(
                    f,
                    "eavesdropping detected on {link} ({errors}/{decoys} decoy errors)"
                )
            }
            AbortReason::Malformed(why) => write!(f, "malformed message: {why}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transfer {
    Delivered(Vec<ParticleRef>),
    Aborted(AbortReason),
}

/// Channel state for one protocol run: the adversary, decoy policy and the
/// public message log.
pub struct Channel<'a> {
    eve: EveModel<'a>,
    decoys: usize,
    threshold: f64,
    honest_rng: ChaCha8Rng,
    adversary_rng: ChaCha8Rng,
    log: Vec<LoggedMessage>,
    checks: Vec<CheckRecord>,
}

const HONEST_STREAM: u64 = 1;
const ADVERSARY_STREAM: u64 = 3;

impl<'a> Channel<'a> {
    pub fn new(eve: EveModel<'a>, decoys: usize, threshold: f64, seed: u64) -> Self {
        Channel {
            eve,
            decoys,
            threshold,
            honest_rng: stream(seed, HONEST_STREAM),
            adversary_rng: stream(seed, ADVERSARY_STREAM),
            log: Vec::new(),
            checks: Vec::new(),
        }
    }

    pub fn log(&self) -> &[LoggedMessage] {
        &self.log
    }

    pub fn checks(&self) -> &[CheckRecord] {
        &self.checks
    }

    pub fn into_records(self) -> (Vec<LoggedMessage>, Vec<CheckRecord>) {
        (self.log, self.checks)
    }

    /// Sends a classical message; returns what the receiver actually gets.
    pub fn send(&mut self, origin: Party, message: ClassicalMessage) -> ClassicalMessage {
        let delivered = transmit_classical(origin, message, &mut self.eve);
        self.log.push(LoggedMessage {
            origin,
            message: delivered.clone(),
        });
        delivered
    }

    /// Carries `payload` over `link`, including every decoy check on the way.
    pub fn deliver_quantum(
        &mut self,
        link: Link,
        payload: &[ParticleRef],
        register: &mut QuantumRegister,
    ) -> Result<Transfer> {
        let captor = match &self.eve {
            EveModel::Custom(hook) if hook.captures(link) => Some(hook.identity()),
            _ => None,
        };
        let Some(captor) = captor else {
            return self.leg(link, link.from, link.to, payload, true, register);
        };
        let first = self.leg(link, link.from, captor, payload, false, register)?;
        let captured = match first {
            Transfer::Delivered(c) => c,
            aborted => return Ok(aborted),
        };
        let forwarded = match &mut self.eve {
            EveModel::Custom(hook) => {
                hook.relay(link, captured, register, &mut self.adversary_rng)?
            }
            _ => unreachable!("captor implies a custom hook"),
        };
        self.leg(link, captor, link.to, &forwarded, false, register)
    }

    /// `sender` and `holder` are the real endpoints; the messages on the wire
    /// always claim the link's nominal endpoints.
    fn leg(
        &mut self,
        link: Link,
        sender: Party,
        holder: Party,
        payload: &[ParticleRef],
        eavesdropped: bool,
        register: &mut QuantumRegister,
    ) -> Result<Transfer> {
        let rng: &mut ChaCha8Rng = if sender == link.from {
            &mut self.honest_rng
        } else {
            &mut self.adversary_rng
        };
        let prepared = insert_decoys(payload, self.decoys, rng);
        let delivered = if eavesdropped {
            transmit(
                prepared.message,
                link,
                &mut self.eve,
                register,
                &mut self.adversary_rng,
            )?
        } else {
            prepared.message
        };

        let notice = |body| ClassicalMessage {
            claimed_sender: link.to,
            receiver: link.from,
            body,
        };
        let reply = |body| ClassicalMessage {
            claimed_sender: link.from,
            receiver: link.to,
            body,
        };
        self.send(holder, notice(Body::ReceiptConfirmed));
        let announced = self.send(
            sender,
            reply(Body::DecoyAnnouncement(prepared.record.announcement())),
        );
        let Body::DecoyAnnouncement(announced) = announced.body else {
            return Ok(Transfer::Aborted(AbortReason::Malformed(
                "expected a decoy announcement".into(),
            )));
        };

        // The holder measures what was announced; the sender scores against its record.
        let probe = DecoyRecord {
            entries: announced
                .iter()
                .zip(&prepared.record.entries)
                .map(|(&(p, b), &(_, d))| {
                    (
                        p,
                        DecoyPhoton {
                            basis: b,
                            bit: d.bit,
                        },
                    )
                })
                .collect(),
        };
        let holder_rng: &mut ChaCha8Rng = if holder == link.to {
            &mut self.honest_rng
        } else {
            &mut self.adversary_rng
        };
        let result = run_check(&probe, &delivered, self.threshold, register, holder_rng)?;
        self.send(holder, notice(Body::DecoyOutcomes(result.outcomes.clone())));
        self.send(
            sender,
            reply(Body::CheckOutcome {
                passed: result.passed,
                errors: result.errors,
                decoys: result.decoys,
            }),
        );
        let (passed, errors, decoys) = (result.passed, result.errors, result.decoys);
        self.checks.push(CheckRecord {
            link,
            sender,
            claimed_sender: link.from,
            holder,
            claimed_receiver: link.to,
            result,
        });
        if !passed {
            return Ok(Transfer::Aborted(AbortReason::Eavesdropping {
                link,
                errors,
                decoys,
            }));
        }
        let positions: Vec<usize> = announced.iter().map(|(p, _)| *p).collect();
        Ok(Transfer::Delivered(delivered.without_positions(&positions)))
    }
}
