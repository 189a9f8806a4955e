//! The sum-based comparison's false-equal probability, checked three ways:
//! enumeration, a per-group convolution derived independently, and full
//! protocol runs.

use num_rational::Ratio;
use qpc_core::analysis::{
    difference_patterns, exhaustive_correctness, monte_carlo, pair_false_equal, ExperimentKind,
    ExperimentSpec,
};
use qpc_core::{bit_sum, exact_false_equal, BitPair, SecretInput, Variant};

/// Each group contributes `w(d_i ^ b_i) - w(b_i)` to the sum difference.
/// Over uniform `b_i` that is 0 for `d_i = 00`, +-1 with equal odds for a
/// single flipped bit, and +2 / 0 / -2 with odds 1:2:1 for `d_i = 11`.
/// Counts are scaled by 4 per group so the convolution stays integral.
fn convolution_oracle(d: &[BitPair]) -> Ratio<u64> {
    let g = d.len();
    let offset = 2 * g as i64;
    let mut dist = vec![0u64; 4 * g + 1];
    dist[offset as usize] = 1;
    for &di in d {
        let step: &[(i64, u64)] = match di.count_ones() {
            0 => &[(0, 4)],
            1 => &[(1, 2), (-1, 2)],
            _ => &[(2, 1), (0, 2), (-2, 1)],
        };
        let mut next = vec![0u64; dist.len()];
        for (k, &c) in dist.iter().enumerate() {
            if c == 0 {
                continue;
            }
            for &(delta, w) in step {
                next[(k as i64 + delta) as usize] += c * w;
            }
        }
        dist = next;
    }
    Ratio::new(dist[offset as usize], 4u64.pow(g as u32))
}

fn bp(s: &str) -> BitPair {
    BitPair::parse(s).unwrap()
}

#[test]
fn enumeration_matches_convolution_up_to_five_groups() {
    for bits in 1..=10 {
        for d in difference_patterns(bits) {
            assert_eq!(
                exact_false_equal(&d).unwrap(),
                convolution_oracle(&d),
                "{d:?}"
            );
        }
    }
}

#[test]
fn odd_weight_difference_never_passes() {
    for d in difference_patterns(8) {
        if bit_sum(&d) % 2 == 1 {
            assert_eq!(exact_false_equal(&d).unwrap(), Ratio::new(0, 1));
        }
    }
}

#[test]
fn invariant_under_group_permutation() {
    let d = [bp("11"), bp("01"), bp("00"), bp("10")];
    let base = exact_false_equal(&d).unwrap();
    let mut perm = d;
    for _ in 0..8 {
        perm.rotate_left(1);
        perm.swap(0, 2);
        assert_eq!(exact_false_equal(&perm).unwrap(), base);
    }
}

#[test]
fn known_values() {
    assert_eq!(exact_false_equal(&[bp("11")]).unwrap(), Ratio::new(1, 2));
    assert_eq!(
        exact_false_equal(&[bp("11"), bp("11")]).unwrap(),
        Ratio::new(3, 8)
    );
    assert_eq!(
        exact_false_equal(&[bp("01"), bp("10")]).unwrap(),
        Ratio::new(1, 2)
    );
    assert_eq!(exact_false_equal(&[bp("00"); 3]).unwrap(), Ratio::new(1, 1));
}

#[test]
fn concrete_pairs_match_oracle() {
    let s = |v| SecretInput::new(v, 2).unwrap();
    let t = pair_false_equal(s(0), s(3), 4000, 11).unwrap();
    assert_eq!(t.oracle, Some(0.5));
    assert!((t.rate() - 0.5).abs() < 0.05, "{}", t.rate());
    let t = pair_false_equal(s(0), s(1), 4000, 11).unwrap();
    assert_eq!(t.count, 0);
}

#[test]
fn sweep_rows_agree_with_oracle() {
    let spec = ExperimentSpec::new(ExperimentKind::FixedFalseEqual, 4, 2000, 5);
    assert_eq!(spec.variant, Variant::Fixed);
    let report = monte_carlo(&spec).unwrap();
    assert_eq!(report.rows.len(), 16);
    for row in &report.rows {
        assert!(row.within_sigmas(4.0), "{row:?}");
    }
}

#[test]
fn exhaustive_sweeps() {
    let r = exhaustive_correctness(4, Variant::Original, &[1, 2]).unwrap();
    assert_eq!(r.row("runs").unwrap().count, 512);
    assert_eq!(r.row("violations").unwrap().count, 0);

    let r = exhaustive_correctness(3, Variant::Fixed, &[1]).unwrap();
    assert_eq!(r.row("violations").unwrap().count, 0);
    assert_eq!(r.row("equal-pairs").unwrap().count, 8);
    assert!(r.row("false-equal").unwrap().count > 0);
    assert!(exhaustive_correctness(9, Variant::Original, &[1]).is_err());
}
