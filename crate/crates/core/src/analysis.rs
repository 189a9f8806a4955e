//! Experiment engine: exact enumeration oracles and seeded Monte-Carlo
//! campaigns over full protocol runs.
//!
//! Trial `i` of a campaign with master seed `s` always runs under
//! `trial_seed(s, i)`, so reports do not depend on thread scheduling.

use std::fmt;
use std::str::FromStr;

pub use num_rational::Ratio;
use rayon::prelude::*;

use crate::attacks::{active_attack, passive_attack};
use crate::canonical::CanonicalWriter;
use crate::channel::{insert_decoys, run_check, transmit, EveModel, Link};
use crate::encoding::{
    bit_sum, from_groups, group_count, to_groups, BitPair, GroupSequence, SecretInput,
};
use crate::error::{invalid, Error, Result};
use crate::keys::Party;
use crate::protocol::{run_protocol, tp_prepare, ProtocolConfig, Variant, Verdict};
use crate::quantum::oracle::upsilon_from_bell_blocks;
use crate::quantum::{
    bell_measure_pair, build_upsilon, z_measure_pair, StateVector, UPSILON_NEGATIVE,
};
use crate::rng::{stream, trial_seed};
use rand::Rng;

/// Two-sided 99% normal quantile.
pub const Z_99: f64 = 2.575_829_303_548_900_4;
pub const CONFIDENCE: f64 = 0.99;
/// Largest group count the false-equal enumeration accepts (4^10 cases).
pub const MAX_ENUMERATED_GROUPS: usize = 10;
/// Largest group count for which every difference pattern is swept.
pub const MAX_SWEPT_GROUPS: usize = 5;
/// Largest bit-length for exhaustive (X, Y) sweeps.
pub const MAX_EXHAUSTIVE_BITS: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    Correctness,
    PassiveAttack,
    ActiveAttack,
    EveDetection,
    FixedFalseEqual,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::Correctness => "correctness",
            ExperimentKind::PassiveAttack => "passive-attack",
            ExperimentKind::ActiveAttack => "active-attack",
            ExperimentKind::EveDetection => "eve-detection",
            ExperimentKind::FixedFalseEqual => "fixed-false-equal",
        })
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "correctness" => ExperimentKind::Correctness,
            "passive-attack" => ExperimentKind::PassiveAttack,
            "active-attack" => ExperimentKind::ActiveAttack,
            "eve-detection" => ExperimentKind::EveDetection,
            "fixed-false-equal" => ExperimentKind::FixedFalseEqual,
            _ => return Err(invalid(format!("unknown experiment kind `{s}`"))),
        })
    }
}

/// Eavesdropper selection for campaigns (hooks are not serializable).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EveKind {
    None,
    InterceptResend,
}

impl EveKind {
    fn model(self) -> EveModel<'static> {
        match self {
            EveKind::None => EveModel::None,
            EveKind::InterceptResend => EveModel::InterceptResendRandomBasis,
        }
    }
}

impl fmt::Display for EveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EveKind::None => "none",
            EveKind::InterceptResend => "intercept-resend",
        })
    }
}

impl FromStr for EveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(EveKind::None),
            "intercept-resend" => Ok(EveKind::InterceptResend),
            _ => Err(invalid(format!("unknown eavesdropper `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub n_bits: u32,
    pub trials: u64,
    pub seed: u64,
    pub variant: Variant,
    pub eve: EveKind,
    /// Decoys per transfer; `None` means one per payload particle.
    pub decoy_count: Option<usize>,
    pub threshold: f64,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, n_bits: u32, trials: u64, seed: u64) -> Self {
        ExperimentSpec {
            kind,
            n_bits,
            trials,
            seed,
            variant: match kind {
                ExperimentKind::FixedFalseEqual => Variant::Fixed,
                _ => Variant::Original,
            },
            eve: match kind {
                ExperimentKind::EveDetection => EveKind::InterceptResend,
                _ => EveKind::None,
            },
            decoy_count: None,
            threshold: 0.0,
        }
    }

    fn protocol_config(&self, seed: u64) -> ProtocolConfig {
        let c = ProtocolConfig::new(self.variant, self.n_bits, seed).with_threshold(self.threshold);
        match self.decoy_count {
            Some(d) => c.with_decoys(d),
            None => c,
        }
    }

    fn decoys(&self) -> usize {
        self.decoy_count.unwrap_or(2 * group_count(self.n_bits))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("at least one trial is required"));
        }
        self.protocol_config(self.seed).validate()
    }
}

/// One tallied outcome: `count` hits out of `trials`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tally {
    pub label: String,
    pub count: u64,
    pub trials: u64,
    pub oracle: Option<f64>,
}

impl Tally {
    pub fn new(label: impl Into<String>, count: u64, trials: u64, oracle: Option<f64>) -> Self {
        Tally {
            label: label.into(),
            count,
            trials,
            oracle,
        }
    }

    pub fn rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.count as f64 / self.trials as f64
        }
    }

    /// Normal-approximation half-width at [`CONFIDENCE`].
    pub fn half_width(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        let p = self.rate();
        Z_99 * (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    /// `|rate - oracle| <= k * sqrt(p(1-p)/n)`, with `p` the oracle value.
    pub fn within_sigmas(&self, k: f64) -> bool {
        match self.oracle {
            Some(p) => {
                let sigma = (p * (1.0 - p) / self.trials as f64).sqrt();
                (self.rate() - p).abs() <= k * sigma + 1e-12
            }
            None => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub title: String,
    pub spec: Option<ExperimentSpec>,
    pub rows: Vec<Tally>,
}

impl ExperimentReport {
    pub fn row(&self, label: &str) -> Option<&Tally> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_csv(&self) -> String {
        const MEM: &str = "in-memory csv";
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "experiment",
            "label",
            "count",
            "trials",
            "rate",
            "ci99_half_width",
            "oracle",
        ])
        .expect(MEM);
        for r in &self.rows {
            w.write_record([
                self.title.clone(),
                r.label.clone(),
                r.count.to_string(),
                r.trials.to_string(),
                r.rate().to_string(),
                r.half_width().to_string(),
                r.oracle.map_or(String::new(), |o| o.to_string()),
            ])
            .expect(MEM);
        }
        String::from_utf8(w.into_inner().expect(MEM)).expect(MEM)
    }

    pub fn to_canonical_text(&self) -> String {
        let mut w = CanonicalWriter::new("experiment-report");
        w.field("experiment", &self.title);
        if let Some(s) = &self.spec {
            w.field("spec.kind", s.kind)
                .field("spec.n_bits", s.n_bits)
                .field("spec.trials", s.trials)
                .field("spec.seed", s.seed)
                .field("spec.variant", s.variant)
                .field("spec.eve", s.eve)
                .field("spec.decoy_count", s.decoys())
                .field("spec.threshold", s.threshold);
        }
        w.field("confidence", CONFIDENCE)
            .field("rows.count", self.rows.len());
        for (i, r) in self.rows.iter().enumerate() {
            w.field(format!("row.{i}.label"), &r.label)
                .field(format!("row.{i}.count"), r.count)
                .field(format!("row.{i}.trials"), r.trials)
                .field(format!("row.{i}.rate"), r.rate())
                .field(format!("row.{i}.ci99_half_width"), r.half_width())
                .field(
                    format!("row.{i}.oracle"),
                    r.oracle.map_or("-".to_string(), |o| o.to_string()),
                );
        }
        w.finish()
    }
}

/// Exact probability that the fixed variant declares "equal" when the group
/// difference is `d = G_A ^ G_B`, over uniform `b = K_A ^ K_B`: the fraction
/// of `b` with `bit_sum(d ^ b) == bit_sum(b)`.
pub fn exact_false_equal(d: &[BitPair]) -> Result<Ratio<u64>> {
    let g = d.len();
    if g == 0 {
        return Err(invalid("difference pattern is empty"));
    }
    if g > MAX_ENUMERATED_GROUPS {
        return Err(invalid(format!(
            "{g} groups is too many to enumerate (max {MAX_ENUMERATED_GROUPS}); use Monte Carlo"
        )));
    }
    let total = 1u64 << (2 * g);
    let mut b = vec![BitPair::ZERO; g];
    let hits = (0..total)
        .filter(|&code| {
            for (i, slot) in b.iter_mut().enumerate() {
                *slot = BitPair::ALL[((code >> (2 * i)) & 3) as usize];
            }
            let a: Vec<BitPair> = d.iter().zip(&b).map(|(&x, &y)| x ^ y).collect();
            bit_sum(&a) == bit_sum(&b)
        })
        .count() as u64;
    Ok(Ratio::new(hits, total))
}

pub fn ratio_to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn exact_false_equal_f64(d: &[BitPair]) -> Option<f64> {
    exact_false_equal(d).ok().map(ratio_to_f64)
}

/// `P(Binomial(n, p) errors > threshold * n)`.
fn binomial_abort_probability(n: usize, p: f64, threshold: f64) -> f64 {
    let mut prob = 0.0;
    let mut coeff = 1.0;
    for k in 0..=n {
        if k > 0 {
            coeff *= (n - k + 1) as f64 / k as f64;
        }
        if k as f64 / n as f64 > threshold {
            prob += coeff * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
        }
    }
    prob
}

/// Every difference pattern over `g` groups whose padding bit (odd `n_bits`) is 0.
pub fn difference_patterns(n_bits: u32) -> Vec<Vec<BitPair>> {
    let g = group_count(n_bits);
    (0..1u64 << (2 * g))
        .map(|code| {
            (0..g)
                .map(|i| BitPair::ALL[((code >> (2 * i)) & 3) as usize])
                .collect::<Vec<_>>()
        })
        .filter(|d| GroupSequence::new(d.clone(), n_bits).is_ok())
        .collect()
}

pub fn pattern_label(d: &[BitPair]) -> String {
    let parts: Vec<String> = d.iter().map(|g| g.to_string()).collect();
    format!("d={}", parts.join(" "))
}

fn random_secret<R: Rng + ?Sized>(n_bits: u32, rng: &mut R) -> SecretInput {
    let value = if n_bits == 64 {
        rng.random()
    } else {
        rng.random_range(0..1u64 << n_bits)
    };
    SecretInput::new(value, n_bits).expect("value drawn in range")
}

/// Inputs for a trial: X uniform; Y equal to X half of the time, else uniform.
fn trial_inputs(n_bits: u32, seed: u64) -> (SecretInput, SecretInput) {
    let mut rng = stream(seed, 7);
    let x = random_secret(n_bits, &mut rng);
    let y = if rng.random::<bool>() {
        x
    } else {
        random_secret(n_bits, &mut rng)
    };
    (x, y)
}

fn xor_secret(x: SecretInput, d: &[BitPair]) -> Result<SecretInput> {
    let gx = to_groups(x);
    let gy: Vec<BitPair> = gx.groups().iter().zip(d).map(|(&a, &b)| a ^ b).collect();
    Ok(from_groups(&GroupSequence::new(gy, x.n_bits())?))
}

/// Runs `trials` seeded trials (in parallel) and folds their per-trial
/// counters in trial order.
fn campaign<const K: usize, F>(trials: u64, master: u64, offset: u64, f: F) -> Result<[u64; K]>
where
    F: Fn(u64) -> Result<[u64; K]> + Sync,
{
    let per_trial: Vec<[u64; K]> = (0..trials)
        .into_par_iter()
        .map(|i| f(trial_seed(master, offset + i)))
        .collect::<Result<_>>()?;
    Ok(per_trial.iter().fold([0; K], |mut acc, t| {
        for k in 0..K {
            acc[k] += t[k];
        }
        acc
    }))
}

fn verdict_is_equal(v: &Verdict) -> bool {
    matches!(v, Verdict::Equal)
}

pub fn monte_carlo(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let n = spec.trials;
    let rows = match spec.kind {
        ExperimentKind::Correctness => correctness_rows(spec)?,
        ExperimentKind::PassiveAttack => {
            let [applicable, bob_ok, alice_ok] = campaign(n, spec.seed, 0, |seed| {
                let (x, y) = trial_inputs(spec.n_bits, seed);
                let t = run_protocol(x, y, spec.protocol_config(seed), spec.eve.model())?;
                let by_bob = passive_attack(&t, Party::Bob)?;
                let by_alice = passive_attack(&t, Party::Alice)?;
                Ok([
                    by_bob.is_applicable() as u64,
                    by_bob.success as u64,
                    by_alice.success as u64,
                ])
            })?;
            let oracle =
                (spec.variant == Variant::Original && spec.eve == EveKind::None).then_some(1.0);
            vec![
                Tally::new("applicable", applicable, n, None),
                Tally::new("bob-recovers-x", bob_ok, n, oracle),
                Tally::new("alice-recovers-y", alice_ok, n, oracle),
            ]
        }
        ExperimentKind::ActiveAttack => {
            let [success, detected, matched] = campaign(n, spec.seed, 0, |seed| {
                let (x, y) = trial_inputs(spec.n_bits, seed);
                let run = active_attack(x, y, spec.protocol_config(seed))?;
                Ok([
                    run.report.success as u64,
                    run.report.detected as u64,
                    run.alice_matches_bob() as u64,
                ])
            })?;
            let original = spec.variant == Variant::Original;
            vec![
                Tally::new("success", success, n, original.then_some(1.0)),
                Tally::new("detected", detected, n, Some(0.0)),
                Tally::new("m_a-equals-m_ab", matched, n, Some(1.0)),
            ]
        }
        ExperimentKind::EveDetection => eve_detection_rows(spec)?,
        ExperimentKind::FixedFalseEqual => fixed_false_equal_rows(spec)?,
    };
    Ok(ExperimentReport {
        title: spec.kind.to_string(),
        spec: Some(*spec),
        rows,
    })
}

fn correctness_rows(spec: &ExperimentSpec) -> Result<Vec<Tally>> {
    let n = spec.trials;
    let fixed = spec.variant == Variant::Fixed;
    // [equal inputs, verdict equal, verdict not-equal, aborted, violations, false equal]
    let [same, eq, ne, aborted, violations, false_eq] = campaign(n, spec.seed, 0, |seed| {
        let (x, y) = trial_inputs(spec.n_bits, seed);
        let t = run_protocol(x, y, spec.protocol_config(seed), spec.eve.model())?;
        let same = x == y;
        let is_eq = verdict_is_equal(&t.verdict);
        let is_ab = matches!(t.verdict, Verdict::Aborted(_));
        let violation = !is_ab && if fixed { same && !is_eq } else { same != is_eq };
        Ok([
            same as u64,
            is_eq as u64,
            (!is_eq && !is_ab) as u64,
            is_ab as u64,
            violation as u64,
            (!same && is_eq) as u64,
        ])
    })?;
    let mut rows = vec![
        Tally::new("equal-inputs", same, n, None),
        Tally::new("verdict-equal", eq, n, None),
        Tally::new("verdict-not-equal", ne, n, None),
        Tally::new("aborted", aborted, n, None),
        Tally::new(
            "violations",
            violations,
            n,
            (spec.eve == EveKind::None).then_some(0.0),
        ),
    ];
    if fixed {
        rows.push(Tally::new("false-equal", false_eq, n - same, None));
    }
    Ok(rows)
}

fn eve_detection_rows(spec: &ExperimentSpec) -> Result<Vec<Tally>> {
    let n = spec.trials;
    let decoys = spec.decoys();
    let link = Link {
        from: Party::ThirdParty,
        to: Party::Alice,
    };
    let [aborted, errors] = campaign(n, spec.seed, 0, |seed| {
        let prep = tp_prepare(group_count(spec.n_bits))?;
        let mut register = prep.register;
        let mut rng = stream(seed, 1);
        let sent = insert_decoys(&prep.s_a, decoys, &mut rng);
        let mut eve = spec.eve.model();
        let got = transmit(sent.message, link, &mut eve, &mut register, &mut rng)?;
        let check = run_check(&sent.record, &got, spec.threshold, &mut register, &mut rng)?;
        Ok([(!check.passed) as u64, check.errors as u64])
    })?;
    let per_decoy = match spec.eve {
        EveKind::None => 0.0,
        EveKind::InterceptResend => 0.25,
    };
    Ok(vec![
        Tally::new(
            "aborted",
            aborted,
            n,
            Some(binomial_abort_probability(
                decoys,
                per_decoy,
                spec.threshold,
            )),
        ),
        Tally::new("decoy-errors", errors, n * decoys as u64, Some(per_decoy)),
    ])
}

fn fixed_false_equal_rows(spec: &ExperimentSpec) -> Result<Vec<Tally>> {
    let g = group_count(spec.n_bits);
    if g > MAX_SWEPT_GROUPS {
        return Err(invalid(format!(
            "{} bits has too many difference patterns to sweep (max {} groups)",
            spec.n_bits, MAX_SWEPT_GROUPS
        )));
    }
    difference_patterns(spec.n_bits)
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let tally = false_equal_trials(d, spec, k as u64 * spec.trials)?;
            Ok(Tally::new(
                pattern_label(d),
                tally,
                spec.trials,
                exact_false_equal_f64(d),
            ))
        })
        .collect()
}

/// Full fixed-variant runs with `G_A ^ G_B = d`; counts "equal" verdicts.
fn false_equal_trials(d: &[BitPair], spec: &ExperimentSpec, offset: u64) -> Result<u64> {
    let [hits] = campaign(spec.trials, spec.seed, offset, |seed| {
        let x = random_secret(spec.n_bits, &mut stream(seed, 7));
        let y = xor_secret(x, d)?;
        let cfg = spec.protocol_config(seed);
        let t = run_protocol(x, y, cfg, spec.eve.model())?;
        Ok([verdict_is_equal(&t.verdict) as u64])
    })?;
    Ok(hits)
}

/// Fixed-variant "equal" frequency for one concrete input pair over
/// `trials` fresh key draws, with its oracle value.
pub fn pair_false_equal(x: SecretInput, y: SecretInput, trials: u64, seed: u64) -> Result<Tally> {
    if x.n_bits() != y.n_bits() {
        return Err(invalid("inputs differ in bit-length"));
    }
    if trials == 0 {
        return Err(invalid("at least one trial is required"));
    }
    let d: Vec<BitPair> = to_groups(x)
        .groups()
        .iter()
        .zip(to_groups(y).groups())
        .map(|(&a, &b)| a ^ b)
        .collect();
    let [hits] = campaign(trials, seed, 0, |s| {
        let cfg = ProtocolConfig::new(Variant::Fixed, x.n_bits(), s);
        Ok([verdict_is_equal(&run_protocol(x, y, cfg, EveModel::None)?.verdict) as u64])
    })?;
    Ok(Tally::new(
        format!("x={} y={}", x.value(), y.value()),
        hits,
        trials,
        exact_false_equal_f64(&d),
    ))
}

/// Runs every `(X, Y)` pair at `n_bits` once per seed, without an
/// eavesdropper. For the original variant a violation is any verdict that
/// disagrees with `X == Y`; for the fixed variant only `X == Y` judged
/// unequal counts, and false equals are reported next to their oracle mean.
pub fn exhaustive_correctness(
    n_bits: u32,
    variant: Variant,
    seeds: &[u64],
) -> Result<ExperimentReport> {
    if n_bits == 0 || n_bits > MAX_EXHAUSTIVE_BITS {
        return Err(invalid(format!(
            "exhaustive sweeps need 1..={MAX_EXHAUSTIVE_BITS} bits, got {n_bits}"
        )));
    }
    let space = 1u64 << n_bits;
    let pairs = space * space;
    let mut totals = [0u64; 4];
    for &seed in seeds {
        let per_pair: Vec<[u64; 4]> = (0..pairs)
            .into_par_iter()
            .map(|idx| {
                let x = SecretInput::new(idx / space, n_bits)?;
                let y = SecretInput::new(idx % space, n_bits)?;
                let cfg = ProtocolConfig::new(variant, n_bits, trial_seed(seed, idx));
                let t = run_protocol(x, y, cfg, EveModel::None)?;
                let same = x == y;
                let is_eq = verdict_is_equal(&t.verdict);
                let violation = match variant {
                    Variant::Original => same != is_eq,
                    Variant::Fixed => same && !is_eq,
                };
                Ok([1, violation as u64, same as u64, (!same && is_eq) as u64])
            })
            .collect::<Result<_>>()?;
        for p in per_pair {
            for k in 0..4 {
                totals[k] += p[k];
            }
        }
    }
    let [runs, violations, equal_pairs, false_eq] = totals;
    let mut rows = vec![
        Tally::new("runs", runs, runs, None),
        Tally::new("violations", violations, runs, Some(0.0)),
        Tally::new("equal-pairs", equal_pairs, runs, None),
    ];
    if variant == Variant::Fixed {
        let mean_oracle = mean_false_equal_over_unequal_pairs(n_bits)?;
        rows.push(Tally::new(
            "false-equal",
            false_eq,
            runs - equal_pairs,
            Some(mean_oracle),
        ));
    }
    Ok(ExperimentReport {
        title: format!("exhaustive-{variant}-{n_bits}bit"),
        spec: None,
        rows,
    })
}

fn mean_false_equal_over_unequal_pairs(n_bits: u32) -> Result<f64> {
    let space = 1u64 << n_bits;
    // Every nonzero pattern occurs for exactly `space` ordered pairs.
    let patterns: Vec<Vec<BitPair>> = difference_patterns(n_bits)
        .into_iter()
        .filter(|d| d.iter().any(|&g| g != BitPair::ZERO))
        .collect();
    let sum: f64 = patterns
        .iter()
        .map(|d| exact_false_equal(d).map(ratio_to_f64))
        .sum::<Result<f64>>()?;
    debug_assert_eq!(patterns.len() as u64, space - 1);
    Ok(sum / patterns.len() as f64)
}

/// Amplitude census of the carrier state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateCensus {
    pub nonzero: usize,
    pub positive: usize,
    pub negative: usize,
    /// Largest deviation from `1/sqrt(32)` in magnitude among nonzero
    /// amplitudes, or from the Bell-block reconstruction anywhere.
    pub max_amplitude_error: f64,
    /// Whether the negative kets are exactly [`UPSILON_NEGATIVE`].
    pub sign_pattern_ok: bool,
}

impl StateCensus {
    pub fn passes(&self) -> bool {
        self.nonzero == 32
            && self.positive == 20
            && self.negative == 12
            && self.sign_pattern_ok
            && self.max_amplitude_error <= 1e-12
    }
}

pub fn state_census(state: &StateVector) -> StateCensus {
    let c = 1.0 / 32f64.sqrt();
    let reference = upsilon_from_bell_blocks();
    let mut census = StateCensus {
        nonzero: 0,
        positive: 0,
        negative: 0,
        max_amplitude_error: 0.0,
        sign_pattern_ok: state.amplitudes().len() == reference.len(),
    };
    for (i, a) in state.amplitudes().iter().enumerate() {
        let dev = (a - reference.get(i).copied().unwrap_or(0.0)).norm();
        census.max_amplitude_error = census.max_amplitude_error.max(dev);
        if a.norm() < 1e-9 {
            continue;
        }
        census.nonzero += 1;
        census.max_amplitude_error = census.max_amplitude_error.max((a.norm() - c).abs());
        let negative = a.re < 0.0;
        if negative {
            census.negative += 1;
        } else {
            census.positive += 1;
        }
        if negative != UPSILON_NEGATIVE.contains(&(i as u8)) || a.im.abs() > 1e-12 {
            census.sign_pattern_ok = false;
        }
    }
    census
}

/// A round where the three pair outcomes did not XOR to `00`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BellViolation {
    pub round: u64,
    pub m_a: BitPair,
    pub m_b: BitPair,
    pub m_c: BitPair,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BellCorrelationReport {
    pub rounds: u64,
    pub violations: u64,
    pub first_violation: Option<BellViolation>,
}

/// Measures fresh carriers: qubits (1,2) and (3,4) in Z, (5,6) in the Bell
/// basis, and counts rounds where `M_A ^ M_B ^ M_C != 00`.
pub fn bell_correlation(rounds: u64, seed: u64) -> Result<BellCorrelationReport> {
    let outcomes: Vec<(BitPair, BitPair, BitPair)> = (0..rounds)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(trial_seed(seed, i), 2);
            let (m_a, s) = z_measure_pair(build_upsilon(), 0, 1, &mut rng)?;
            let (m_b, s) = z_measure_pair(s, 2, 3, &mut rng)?;
            let (code, _) = bell_measure_pair(s, 4, 5, &mut rng)?;
            Ok((m_a, m_b, code.bits()))
        })
        .collect::<Result<_>>()?;
    let mut report = BellCorrelationReport {
        rounds,
        violations: 0,
        first_violation: None,
    };
    for (round, &(m_a, m_b, m_c)) in outcomes.iter().enumerate() {
        if m_a ^ m_b ^ m_c != BitPair::ZERO {
            report.violations += 1;
            report.first_violation.get_or_insert(BellViolation {
                round: round as u64,
                m_a,
                m_b,
                m_c,
            });
        }
    }
    Ok(report)
}

/// 99th percentile of the chi-square distribution with 3 degrees of freedom.
pub const CHI2_DF3_99: f64 = 11.344_866_730_144_373;

/// Pearson statistic of `counts` against the uniform distribution.
pub fn chi_square_uniform(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if counts.is_empty() || total == 0 {
        return 0.0;
    }
    let expected = total as f64 / counts.len() as f64;
    counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum()
}

/// Per-position histograms (indexed by pair value) of what TP holds over
/// many runs with the inputs fixed and keys redrawn every run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TpHistograms {
    pub received_a: Vec<[u64; 4]>,
    pub received_b: Vec<[u64; 4]>,
    pub combined: Vec<[u64; 4]>,
}

impl TpHistograms {
    /// Largest chi-square statistic over every histogram.
    pub fn max_chi_square(&self) -> f64 {
        self.received_a
            .iter()
            .chain(&self.received_b)
            .chain(&self.combined)
            .map(|h| chi_square_uniform(h))
            .fold(0.0, f64::max)
    }
}

pub fn tp_histograms(
    x: SecretInput,
    y: SecretInput,
    variant: Variant,
    trials: u64,
    seed: u64,
) -> Result<TpHistograms> {
    if trials == 0 {
        return Err(invalid("at least one trial is required"));
    }
    let g = x.group_count();
    let runs: Vec<_> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let cfg = ProtocolConfig::new(variant, x.n_bits(), trial_seed(seed, i));
            let t = run_protocol(x, y, cfg, EveModel::None)?;
            Ok((t.tp.received_a, t.tp.received_b, t.tp.combined))
        })
        .collect::<Result<_>>()?;
    let mut h = TpHistograms {
        received_a: vec![[0; 4]; g],
        received_b: vec![[0; 4]; g],
        combined: vec![[0; 4]; g],
    };
    for (ra, rb, rc) in runs {
        for i in 0..g {
            h.received_a[i][ra[i].value() as usize] += 1;
            h.received_b[i][rb[i].value() as usize] += 1;
            h.combined[i][rc[i].value() as usize] += 1;
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bp(s: &str) -> BitPair {
        BitPair::parse(s).unwrap()
    }

    #[test]
    fn exact_false_equal_examples() {
        assert_eq!(exact_false_equal(&[bp("11")]).unwrap(), Ratio::new(1, 2));
        assert_eq!(exact_false_equal(&[bp("01")]).unwrap(), Ratio::new(0, 1));
        assert_eq!(
            exact_false_equal(&[bp("00"), bp("00")]).unwrap(),
            Ratio::new(1, 1)
        );
        assert!(exact_false_equal(&[]).is_err());
        assert!(exact_false_equal(&[bp("00"); 11]).is_err());
    }

    #[test]
    fn binomial_abort_matches_closed_form() {
        let p = binomial_abort_probability(20, 0.25, 0.0);
        assert!((p - (1.0 - 0.75f64.powi(20))).abs() < 1e-12);
        assert_eq!(binomial_abort_probability(20, 0.0, 0.0), 0.0);
    }

    #[test]
    fn carrier_census_passes() {
        let c = state_census(&build_upsilon());
        assert!(c.passes(), "{c:?}");
    }

    #[test]
    fn census_catches_a_flipped_sign() {
        let mut amps = build_upsilon().amplitudes().to_vec();
        amps[0] = -amps[0];
        let flipped = StateVector::from_amplitudes(amps).unwrap();
        let c = state_census(&flipped);
        assert!(!c.passes());
        assert_eq!(c.negative, 13);
    }

    #[test]
    fn bell_rounds_are_correlated() {
        let r = bell_correlation(500, 3).unwrap();
        assert_eq!(r.violations, 0);
        assert_eq!(r.first_violation, None);
    }

    #[test]
    fn chi_square_statistic() {
        assert_eq!(chi_square_uniform(&[25, 25, 25, 25]), 0.0);
        assert!((chi_square_uniform(&[40, 20, 20, 20]) - 12.0).abs() < 1e-12);
    }

    #[test]
    fn patterns_respect_padding() {
        assert_eq!(difference_patterns(2).len(), 4);
        assert_eq!(difference_patterns(3).len(), 8);
        assert_eq!(difference_patterns(4).len(), 16);
    }

    #[test]
    fn tally_arithmetic() {
        let t = Tally::new("x", 50, 100, Some(0.5));
        assert_eq!(t.rate(), 0.5);
        assert!((t.half_width() - Z_99 * 0.05).abs() < 1e-12);
        assert!(t.within_sigmas(3.0));
        assert!(!Tally::new("y", 80, 100, Some(0.5)).within_sigmas(3.0));
    }

    #[test]
    fn spec_validation() {
        let mut s = ExperimentSpec::new(ExperimentKind::Correctness, 4, 0, 1);
        assert!(s.validate().is_err());
        s.trials = 1;
        assert!(s.validate().is_ok());
        s.decoy_count = Some(0);
        assert!(matches!(s.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn kinds_parse() {
        for k in [
            ExperimentKind::Correctness,
            ExperimentKind::PassiveAttack,
            ExperimentKind::ActiveAttack,
            ExperimentKind::EveDetection,
            ExperimentKind::FixedFalseEqual,
        ] {
            assert_eq!(k.to_string().parse::<ExperimentKind>().unwrap(), k);
        }
        assert!("x".parse::<ExperimentKind>().is_err());
        assert_eq!(
            "intercept-resend".parse::<EveKind>().unwrap(),
            EveKind::InterceptResend
        );
    }
}
