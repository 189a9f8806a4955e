use std::path::PathBuf;

use qpc_core::analysis::{
    bell_correlation, exhaustive_correctness, monte_carlo, state_census, EveKind, ExperimentKind,
    ExperimentReport, ExperimentSpec,
};
use qpc_core::attacks::reports_to_canonical_text;
use qpc_core::canonical;
use qpc_core::rng::trial_seed;
use qpc_core::{
    active_attack, build_upsilon, passive_attack_run, run_protocol, AttackKind, AttackOutcome,
    AttackReport, EveModel, ProtocolConfig, SecretInput, Variant, Verdict,
};

use crate::settings::{required, ConfigFile};
use crate::{
    AttackArgs, CliError, Format, OutputArgs, ProtocolArgs, RunArgs, SweepArgs, VerifyArgs,
    EXIT_ABORTED, EXIT_OK, EXIT_VERIFY_FAILED,
};

const PROTOCOL_KEYS: [&str; 5] = ["bits", "variant", "decoys", "threshold", "seed"];
const OUTPUT_KEYS: [&str; 2] = ["output", "format"];
const DEFAULT_SWEEP_BITS: u32 = 4;
const DEFAULT_TRIALS: u64 = 1000;

fn load_config(out: &OutputArgs, extra: &[&str]) -> Result<ConfigFile, CliError> {
    let file = match &out.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let allowed: Vec<&str> = PROTOCOL_KEYS
        .iter()
        .chain(&OUTPUT_KEYS)
        .chain(extra)
        .copied()
        .collect();
    file.restrict_to(&allowed)?;
    Ok(file)
}

struct Output {
    path: Option<PathBuf>,
    format: Format,
}

impl Output {
    fn resolve(out: OutputArgs, file: &ConfigFile) -> Result<Self, CliError> {
        Ok(Output {
            path: file.pick(out.output, "output")?,
            format: file.pick(out.format, "format")?.unwrap_or(Format::Text),
        })
    }

    fn write(&self, text: &str, csv: &str) -> Result<(), CliError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let body = match self.format {
            Format::Text => text,
            Format::Csv => csv,
        };
        std::fs::write(path, body)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
    }
}

/// A canonical document flattened into two-column CSV.
fn canonical_to_csv(text: &str) -> Result<String, CliError> {
    let doc = canonical::parse(text)?;
    let internal = |e: csv::Error| CliError::Internal(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["key", "value"]).map_err(internal)?;
    let tag = format!("{} {} v{}", canonical::FORMAT_PREFIX, doc.kind, doc.version);
    w.write_record(["format", tag.as_str()]).map_err(internal)?;
    for (k, v) in &doc.fields {
        w.write_record([k, v]).map_err(internal)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Internal(e.to_string()))
}

fn protocol_config(
    p: ProtocolArgs,
    file: &ConfigFile,
    default_bits: Option<u32>,
    default_variant: Variant,
) -> Result<ProtocolConfig, CliError> {
    let bits = match file.pick(p.bits, "bits")?.or(default_bits) {
        Some(b) => b,
        None => required(None, "bits")?,
    };
    let seed = required(file.pick(p.seed, "seed")?, "seed")?;
    let variant = file.pick(p.variant, "variant")?.unwrap_or(default_variant);
    let mut cfg = ProtocolConfig::new(variant, bits, seed);
    if let Some(d) = file.pick(p.decoys, "decoys")? {
        cfg = cfg.with_decoys(d);
    }
    if let Some(t) = file.pick(p.threshold, "threshold")? {
        cfg = cfg.with_threshold(t);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn secrets(
    x: Option<u64>,
    y: Option<u64>,
    file: &ConfigFile,
    bits: u32,
) -> Result<(SecretInput, SecretInput), CliError> {
    let x = required(file.pick(x, "x")?, "x")?;
    let y = required(file.pick(y, "y")?, "y")?;
    Ok((SecretInput::new(x, bits)?, SecretInput::new(y, bits)?))
}

pub fn run(a: RunArgs) -> Result<u8, CliError> {
    let file = load_config(&a.out, &["x", "y", "eve"])?;
    let cfg = protocol_config(a.protocol, &file, None, Variant::Original)?;
    let (x, y) = secrets(a.x, a.y, &file, cfg.n_bits)?;
    let eve = file.pick(a.eve, "eve")?.unwrap_or(EveKind::None);
    let out = Output::resolve(a.out, &file)?;

    let model = match eve {
        EveKind::None => EveModel::None,
        EveKind::InterceptResend => EveModel::InterceptResendRandomBasis,
    };
    let t = run_protocol(x, y, cfg, model)?;
    println!(
        "{} variant, {} bits, {} groups, {} decoys per transfer, seed {}",
        cfg.variant,
        cfg.n_bits,
        cfg.group_count(),
        cfg.decoy_count,
        cfg.seed
    );
    for ch in &t.checks {
        let r = &ch.result;
        println!(
            "check {}: {} ({}/{} decoy errors)",
            ch.link,
            if r.passed { "pass" } else { "abort" },
            r.errors,
            r.decoys
        );
    }
    println!("verdict: {}", t.verdict);
    let text = t.to_canonical_text();
    out.write(&text, &canonical_to_csv(&text)?)?;
    Ok(match t.verdict {
        Verdict::Aborted(_) => EXIT_ABORTED,
        _ => EXIT_OK,
    })
}

fn describe(r: &AttackReport) -> String {
    let who = format!("{} attack by {} on {}", r.kind, r.attacker, r.victim);
    match &r.outcome {
        AttackOutcome::Recovered { secret, .. } => format!(
            "{who}: recovered {secret}, ground truth {}, success {}, detected {}",
            r.ground_truth, r.success, r.detected
        ),
        AttackOutcome::NotRecovered { reason } => {
            format!("{who}: not recovered ({reason}), detected {}", r.detected)
        }
        AttackOutcome::NotApplicable { reason } => format!("{who}: not applicable ({reason})"),
    }
}

pub fn attack(a: AttackArgs) -> Result<u8, CliError> {
    let file = load_config(&a.out, &["kind", "x", "y"])?;
    let kind = required(file.pick(a.kind, "kind")?, "kind")?;
    let cfg = protocol_config(a.protocol, &file, None, Variant::Original)?;
    let (x, y) = secrets(a.x, a.y, &file, cfg.n_bits)?;
    let out = Output::resolve(a.out, &file)?;

    let reports: Vec<AttackReport> = match kind {
        AttackKind::Passive => passive_attack_run(x, y, cfg)?.1.to_vec(),
        AttackKind::Active => vec![active_attack(x, y, cfg)?.report],
    };
    for r in &reports {
        println!("{}", describe(r));
    }
    let text = reports_to_canonical_text(&reports);
    out.write(&text, &canonical_to_csv(&text)?)?;
    Ok(EXIT_OK)
}

pub fn sweep(a: SweepArgs) -> Result<u8, CliError> {
    let file = load_config(&a.out, &["kind", "trials", "eve", "exhaustive"])?;
    let kind = required(file.pick(a.kind, "kind")?, "kind")?;
    let trials = file.pick(a.trials, "trials")?.unwrap_or(DEFAULT_TRIALS);
    let exhaustive = file.flag(a.exhaustive, "exhaustive")?;
    let eve = file.pick(a.eve, "eve")?;
    let default_variant = match kind {
        ExperimentKind::FixedFalseEqual => Variant::Fixed,
        _ => Variant::Original,
    };
    let explicit_decoys = file.pick(a.protocol.decoys, "decoys")?;
    let cfg = protocol_config(a.protocol, &file, Some(DEFAULT_SWEEP_BITS), default_variant)?;
    let out = Output::resolve(a.out, &file)?;

    let report = if exhaustive {
        if kind != ExperimentKind::Correctness {
            return Err(CliError::Usage(
                "--exhaustive only applies to --kind correctness".into(),
            ));
        }
        if trials == 0 {
            return Err(CliError::Usage("--trials must be at least 1".into()));
        }
        let seeds: Vec<u64> = (0..trials).map(|i| trial_seed(cfg.seed, i)).collect();
        exhaustive_correctness(cfg.n_bits, cfg.variant, &seeds)?
    } else {
        let mut spec = ExperimentSpec::new(kind, cfg.n_bits, trials, cfg.seed);
        spec.variant = cfg.variant;
        spec.threshold = cfg.threshold;
        spec.decoy_count = explicit_decoys;
        if let Some(e) = eve {
            spec.eve = e;
        }
        monte_carlo(&spec)?
    };
    print_report(&report);
    out.write(&report.to_canonical_text(), &report.to_csv())?;
    Ok(EXIT_OK)
}

fn print_report(r: &ExperimentReport) {
    println!("{}", r.title);
    let width = r.rows.iter().map(|t| t.label.len()).max().unwrap_or(0);
    for t in &r.rows {
        let oracle = t
            .oracle
            .map_or(String::new(), |o| format!("  oracle {o:.4}"));
        println!(
            "  {:<width$}  {:>9}/{:<9} rate {:.4} +- {:.4}{oracle}",
            t.label,
            t.count,
            t.trials,
            t.rate(),
            t.half_width()
        );
    }
}

pub fn verify_state(a: VerifyArgs) -> Result<u8, CliError> {
    let census = state_census(&build_upsilon());
    println!(
        "amplitudes: {} nonzero, {} positive, {} negative",
        census.nonzero, census.positive, census.negative
    );
    println!(
        "sign pattern: {}",
        if census.sign_pattern_ok {
            "ok"
        } else {
            "MISMATCH"
        }
    );
    println!("max |amplitude error|: {:e}", census.max_amplitude_error);
    let bell = bell_correlation(a.rounds, a.seed)?;
    println!(
        "Bell-correlation violations: {} / {}",
        bell.violations, bell.rounds
    );
    if let Some(v) = bell.first_violation {
        println!(
            "first violation: round {} M_A={} M_B={} M_C={}",
            v.round, v.m_a, v.m_b, v.m_c
        );
    }
    let ok = census.passes() && bell.violations == 0;
    println!("verify-state: {}", if ok { "pass" } else { "FAIL" });
    Ok(if ok { EXIT_OK } else { EXIT_VERIFY_FAILED })
}
