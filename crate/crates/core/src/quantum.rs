//! A small pure-state simulator sized for the six-qubit carrier state.
//!
//! Qubits are addressed by position `0..num_qubits`, position 0 being the
//! leftmost symbol of a ket. Position 0 is therefore the most significant bit
//! of an amplitude index: `|010100>` lives at index `0b010100`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;

use crate::encoding::{bell_code_bits, BitPair};
use crate::error::{invalid, Error, Result};

const NORM_TOLERANCE: f64 = 1e-9;

/// Kets carrying `+1/sqrt(32)` in the six-qubit carrier state.
pub const UPSILON_POSITIVE: [u8; 20] = [
    0b000000, 0b111111, 0b000011, 0b111100, 0b000101, 0b111010, 0b000110, 0b111001, 0b001001,
    0b110110, 0b001111, 0b110000, 0b010001, 0b101110, 0b010010, 0b101101, 0b011000, 0b100111,
    0b011101, 0b100010,
];

/// Kets carrying `-1/sqrt(32)` in the six-qubit carrier state.
pub const UPSILON_NEGATIVE: [u8; 12] = [
    0b010100, 0b101011, 0b010111, 0b101000, 0b011011, 0b100100, 0b001010, 0b110101, 0b001100,
    0b110011, 0b011110, 0b100001,
];

pub const UPSILON_QUBITS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// Wraps raw amplitudes, checking the length is a power of two and the
    /// vector is normalized.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(invalid(format!(
                "{len} amplitudes is not a power of two >= 2"
            )));
        }
        let state = StateVector {
            num_qubits: len.trailing_zeros() as usize,
            amplitudes,
        };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(invalid(format!(
                "state is not normalized (|psi|^2 = {norm})"
            )));
        }
        Ok(state)
    }

    /// The computational basis state with the given index.
    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        if num_qubits == 0 || num_qubits > 16 || index >> num_qubits != 0 {
            return Err(invalid(format!(
                "basis index {index} invalid for {num_qubits} qubits"
            )));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Ok(StateVector {
            num_qubits,
            amplitudes,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, index: usize) -> Complex64 {
        self.amplitudes[index]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    fn mask(&self, qubit: usize) -> usize {
        1 << (self.num_qubits - 1 - qubit)
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.num_qubits {
            return Err(invalid(format!(
                "qubit {qubit} out of range for a {}-qubit state",
                self.num_qubits
            )));
        }
        Ok(())
    }

    fn check_pair(&self, q_hi: usize, q_lo: usize) -> Result<()> {
        self.check_qubit(q_hi)?;
        self.check_qubit(q_lo)?;
        if q_hi == q_lo {
            return Err(invalid(format!(
                "qubit {q_hi} used twice in a pair measurement"
            )));
        }
        Ok(())
    }

    pub fn apply_hadamard(&mut self, qubit: usize) -> Result<()> {
        self.check_qubit(qubit)?;
        let m = self.mask(qubit);
        for i in (0..self.amplitudes.len()).filter(|i| i & m == 0) {
            let (a, b) = (self.amplitudes[i], self.amplitudes[i | m]);
            self.amplitudes[i] = (a + b) * FRAC_1_SQRT_2;
            self.amplitudes[i | m] = (a - b) * FRAC_1_SQRT_2;
        }
        Ok(())
    }

    fn renormalize(&mut self, probability: f64) -> Result<()> {
        if probability <= 0.0 {
            return Err(Error::Internal(
                "collapse onto a zero-probability outcome".into(),
            ));
        }
        let scale = probability.sqrt().recip();
        self.amplitudes.iter_mut().for_each(|a| *a *= scale);
        Ok(())
    }
}

/// The six-qubit genuinely entangled carrier state.
pub fn build_upsilon() -> StateVector {
    let c = 1.0 / 32f64.sqrt();
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << UPSILON_QUBITS];
    for &k in &UPSILON_POSITIVE {
        amplitudes[k as usize] = Complex64::new(c, 0.0);
    }
    for &k in &UPSILON_NEGATIVE {
        amplitudes[k as usize] = Complex64::new(-c, 0.0);
    }
    StateVector {
        num_qubits: UPSILON_QUBITS,
        amplitudes,
    }
}

/// Picks an outcome index from (unnormalized) Born weights.
fn sample<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last_nonzero = i;
        if target < acc {
            return i;
        }
    }
    last_nonzero
}

/// Measures two qubits in the computational basis. The outcome's high bit is
/// the value of `q_hi`.
pub fn z_measure_pair<R: Rng + ?Sized>(
    mut state: StateVector,
    q_hi: usize,
    q_lo: usize,
    rng: &mut R,
) -> Result<(BitPair, StateVector)> {
    state.check_pair(q_hi, q_lo)?;
    let (m_hi, m_lo) = (state.mask(q_hi), state.mask(q_lo));
    let outcome_of = |i: usize| BitPair::from_bits(i & m_hi != 0, i & m_lo != 0);

    let mut weights = [0.0; 4];
    for (i, a) in state.amplitudes.iter().enumerate() {
        weights[outcome_of(i).value() as usize] += a.norm_sqr();
    }
    let outcome = BitPair::new(sample(&weights, rng) as u8)?;
    for (i, a) in state.amplitudes.iter_mut().enumerate() {
        if outcome_of(i) != outcome {
            *a = Complex64::new(0.0, 0.0);
        }
    }
    state.renormalize(weights[outcome.value() as usize])?;
    Ok((outcome, state))
}

/// One of the four Bell states on an ordered qubit pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BellCode {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellCode {
    pub const ALL: [BellCode; 4] = [
        BellCode::PhiPlus,
        BellCode::PhiMinus,
        BellCode::PsiPlus,
        BellCode::PsiMinus,
    ];

    /// Coefficients over `|00>, |01>, |10>, |11>` (first symbol = high qubit).
    pub fn vector(self) -> [f64; 4] {
        let s = FRAC_1_SQRT_2;
        match self {
            BellCode::PhiPlus => [s, 0.0, 0.0, s],
            BellCode::PhiMinus => [s, 0.0, 0.0, -s],
            BellCode::PsiPlus => [0.0, s, s, 0.0],
            BellCode::PsiMinus => [0.0, s, -s, 0.0],
        }
    }

    pub fn bits(self) -> BitPair {
        bell_code_bits(self)
    }

    pub fn from_bits(bits: BitPair) -> BellCode {
        match bits.value() {
            0b00 => BellCode::PhiPlus,
            0b01 => BellCode::PsiPlus,
            0b10 => BellCode::PsiMinus,
            _ => BellCode::PhiMinus,
        }
    }
}

impl fmt::Display for BellCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BellCode::PhiPlus => "phi+",
            BellCode::PhiMinus => "phi-",
            BellCode::PsiPlus => "psi+",
            BellCode::PsiMinus => "psi-",
        })
    }
}

/// Projects two qubits onto the Bell basis.
pub fn bell_measure_pair<R: Rng + ?Sized>(
    mut state: StateVector,
    q_hi: usize,
    q_lo: usize,
    rng: &mut R,
) -> Result<(BellCode, StateVector)> {
    state.check_pair(q_hi, q_lo)?;
    let (m_hi, m_lo) = (state.mask(q_hi), state.mask(q_lo));
    let offsets = [0, m_lo, m_hi, m_hi | m_lo];
    let rests: Vec<usize> = (0..state.amplitudes.len())
        .filter(|i| i & (m_hi | m_lo) == 0)
        .collect();

    // Overlap of each rest-configuration with a Bell vector.
    let overlaps = |code: BellCode, amps: &[Complex64]| -> Vec<Complex64> {
        let v = code.vector();
        rests
            .iter()
            .map(|&r| (0..4).map(|k| amps[r | offsets[k]] * v[k]).sum())
            .collect()
    };

    let weights: Vec<f64> = BellCode::ALL
        .iter()
        .map(|&c| {
            overlaps(c, &state.amplitudes)
                .iter()
                .map(|z| z.norm_sqr())
                .sum()
        })
        .collect();
    let outcome = BellCode::ALL[sample(&weights, rng)];
    let coeffs = overlaps(outcome, &state.amplitudes);
    let v = outcome.vector();
    for (&r, &c) in rests.iter().zip(&coeffs) {
        for k in 0..4 {
            state.amplitudes[r | offsets[k]] = c * v[k];
        }
    }
    state.renormalize(weights[BellCode::ALL.iter().position(|&c| c == outcome).unwrap()])?;
    Ok((outcome, state))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Basis {
        if rng.random::<bool>() {
            Basis::X
        } else {
            Basis::Z
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::Z => "Z",
            Basis::X => "X",
        })
    }
}

/// Measures one qubit in the Z or X basis and collapses it. In the X basis
/// `|+>` reads as 0 and `|->` as 1.
pub fn measure_qubit<R: Rng + ?Sized>(
    mut state: StateVector,
    qubit: usize,
    basis: Basis,
    rng: &mut R,
) -> Result<(bool, StateVector)> {
    state.check_qubit(qubit)?;
    if basis == Basis::X {
        state.apply_hadamard(qubit)?;
    }
    let m = state.mask(qubit);
    let mut weights = [0.0; 2];
    for (i, a) in state.amplitudes.iter().enumerate() {
        weights[(i & m != 0) as usize] += a.norm_sqr();
    }
    let one = sample(&weights, rng) == 1;
    for (i, a) in state.amplitudes.iter_mut().enumerate() {
        if (i & m != 0) != one {
            *a = Complex64::new(0.0, 0.0);
        }
    }
    state.renormalize(weights[one as usize])?;
    if basis == Basis::X {
        state.apply_hadamard(qubit)?;
    }
    Ok((one, state))
}

/// A single-photon decoy: `|0>`, `|1>` in the Z basis or `|+>`, `|->` in the X basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DecoyPhoton {
    pub basis: Basis,
    pub bit: bool,
}

impl DecoyPhoton {
    pub const ALL: [DecoyPhoton; 4] = [
        DecoyPhoton {
            basis: Basis::Z,
            bit: false,
        },
        DecoyPhoton {
            basis: Basis::Z,
            bit: true,
        },
        DecoyPhoton {
            basis: Basis::X,
            bit: false,
        },
        DecoyPhoton {
            basis: Basis::X,
            bit: true,
        },
    ];
}

impl fmt::Display for DecoyPhoton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match (self.basis, self.bit) {
            (Basis::Z, false) => "|0>",
            (Basis::Z, true) => "|1>",
            (Basis::X, false) => "|+>",
            (Basis::X, true) => "|->",
        })
    }
}

pub fn new_decoy<R: Rng + ?Sized>(rng: &mut R) -> DecoyPhoton {
    DecoyPhoton {
        basis: Basis::random(rng),
        bit: rng.random(),
    }
}

pub fn measure_decoy<R: Rng + ?Sized>(photon: DecoyPhoton, basis: Basis, rng: &mut R) -> bool {
    if photon.basis == basis {
        photon.bit
    } else {
        rng.random()
    }
}

/// A reference to one particle: qubit `qubit` (0-based) of carrier copy `copy` (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParticleRef {
    pub copy: usize,
    pub qubit: usize,
}

impl fmt::Display for ParticleRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}^{}", self.copy + 1, self.qubit + 1)
    }
}

/// Every carrier copy of one run. Particles travel as [`ParticleRef`]s while
/// their joint state stays here.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumRegister {
    copies: Vec<StateVector>,
}

impl QuantumRegister {
    pub fn new(copies: Vec<StateVector>) -> Self {
        QuantumRegister { copies }
    }

    pub fn copies(&self) -> &[StateVector] {
        &self.copies
    }

    fn slot(&self, copy: usize) -> Result<&StateVector> {
        self.copies
            .get(copy)
            .ok_or_else(|| invalid(format!("no carrier copy {copy}")))
    }

    fn pair_copy(&self, hi: ParticleRef, lo: ParticleRef) -> Result<usize> {
        if hi.copy != lo.copy {
            return Err(invalid(format!("{hi} and {lo} belong to different copies")));
        }
        self.slot(hi.copy)?;
        Ok(hi.copy)
    }

    pub fn z_measure_pair<R: Rng + ?Sized>(
        &mut self,
        hi: ParticleRef,
        lo: ParticleRef,
        rng: &mut R,
    ) -> Result<BitPair> {
        let c = self.pair_copy(hi, lo)?;
        let (outcome, post) = z_measure_pair(self.copies[c].clone(), hi.qubit, lo.qubit, rng)?;
        self.copies[c] = post;
        Ok(outcome)
    }

    pub fn bell_measure_pair<R: Rng + ?Sized>(
        &mut self,
        hi: ParticleRef,
        lo: ParticleRef,
        rng: &mut R,
    ) -> Result<BellCode> {
        let c = self.pair_copy(hi, lo)?;
        let (outcome, post) = bell_measure_pair(self.copies[c].clone(), hi.qubit, lo.qubit, rng)?;
        self.copies[c] = post;
        Ok(outcome)
    }

    pub fn measure<R: Rng + ?Sized>(
        &mut self,
        particle: ParticleRef,
        basis: Basis,
        rng: &mut R,
    ) -> Result<bool> {
        let state = self.slot(particle.copy)?.clone();
        let (bit, post) = measure_qubit(state, particle.qubit, basis, rng)?;
        self.copies[particle.copy] = post;
        Ok(bit)
    }
}

/// Exact outcome probabilities by enumeration, used to anchor sampling tests.
pub mod oracle {
    use super::*;

    /// `P(q_hi q_lo = o)` for each two-bit outcome `o`, summed straight from
    /// the squared amplitudes.
    pub fn z_pair_marginal(state: &StateVector, q_hi: usize, q_lo: usize) -> [f64; 4] {
        let n = state.num_qubits();
        let mut p = [0.0; 4];
        for (i, a) in state.amplitudes().iter().enumerate() {
            let hi = (i >> (n - 1 - q_hi)) & 1;
            let lo = (i >> (n - 1 - q_lo)) & 1;
            p[2 * hi + lo] += a.norm_sqr();
        }
        p
    }

    /// Bell-outcome probabilities computed through the CNOT-then-Hadamard
    /// disentangling circuit rather than by projection. Indexed like
    /// [`BellCode::ALL`].
    pub fn bell_pair_marginal(state: &StateVector, q_hi: usize, q_lo: usize) -> [f64; 4] {
        let n = state.num_qubits();
        let (m_hi, m_lo) = (1 << (n - 1 - q_hi), 1 << (n - 1 - q_lo));
        let mut amps = state.amplitudes().to_vec();
        // CNOT with q_hi as control.
        for i in 0..amps.len() {
            if i & m_hi != 0 && i & m_lo == 0 {
                amps.swap(i, i | m_lo);
            }
        }
        let mut rotated = StateVector {
            num_qubits: n,
            amplitudes: amps,
        };
        rotated.apply_hadamard(q_hi).expect("qubit in range");
        let z = z_pair_marginal(&rotated, q_hi, q_lo);
        // Circuit outputs: phi+ -> 00, psi+ -> 01, phi- -> 10, psi- -> 11.
        [z[0b00], z[0b10], z[0b01], z[0b11]]
    }

    /// The carrier state assembled from its Bell-decomposed form: four
    /// four-qubit blocks, each tensored with one Bell state on qubits 5 and 6.
    pub fn upsilon_from_bell_blocks() -> Vec<f64> {
        let blocks: [(&[(u8, f64)], BellCode); 4] = [
            (
                &[(0b0000, 1.0), (0b0101, -1.0), (0b1010, -1.0), (0b1111, 1.0)],
                BellCode::PhiPlus,
            ),
            (
                &[(0b0001, 1.0), (0b0100, 1.0), (0b1011, 1.0), (0b1110, 1.0)],
                BellCode::PsiPlus,
            ),
            (
                &[(0b0110, 1.0), (0b0011, -1.0), (0b1001, -1.0), (0b1100, 1.0)],
                BellCode::PhiMinus,
            ),
            (
                &[(0b0010, 1.0), (0b0111, 1.0), (0b1000, -1.0), (0b1101, -1.0)],
                BellCode::PsiMinus,
            ),
        ];
        let mut out = vec![0.0; 64];
        for (terms, code) in blocks {
            let v = code.vector();
            for &(head, sign) in terms {
                for (tail, c) in v.iter().enumerate() {
                    out[((head as usize) << 2) | tail] += 0.25 * sign * c;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    const C: f64 = 0.176_776_695_296_636_9; // 1/sqrt(32)

    #[test]
    fn upsilon_amplitude_examples() {
        let u = build_upsilon();
        assert!((u.amplitude(0b000000).re - C).abs() < 1e-12);
        assert!((u.amplitude(0b010100).re + C).abs() < 1e-12);
        assert_eq!(u.amplitude(0b000001), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn upsilon_sign_census() {
        let u = build_upsilon();
        let pos = u
            .amplitudes()
            .iter()
            .filter(|a| (a.re - C).abs() < 1e-12)
            .count();
        let neg = u
            .amplitudes()
            .iter()
            .filter(|a| (a.re + C).abs() < 1e-12)
            .count();
        let zero = u.amplitudes().iter().filter(|a| a.norm() < 1e-12).count();
        assert_eq!((pos, neg, zero), (20, 12, 32));
        assert!((u.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn upsilon_matches_bell_block_form() {
        let u = build_upsilon();
        for (a, b) in u.amplitudes().iter().zip(upsilon_from_bell_blocks()) {
            assert!((a.re - b).abs() < 1e-12 && a.im == 0.0);
        }
    }

    #[test]
    fn z_pair_marginal_on_upsilon_is_uniform() {
        // 8 of the 32 kets start with each two-bit prefix.
        let p = z_pair_marginal(&build_upsilon(), 0, 1);
        for x in p {
            assert!((x - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn z_measure_basis_state_is_deterministic() {
        let s = StateVector::basis(2, 0).unwrap();
        for seed in 0..20 {
            let (o, post) = z_measure_pair(s.clone(), 0, 1, &mut rng(seed)).unwrap();
            assert_eq!(o, BitPair::ZERO);
            assert_eq!(post, s);
        }
    }

    #[test]
    fn argument_errors() {
        let u = build_upsilon();
        let mut r = rng(0);
        assert!(matches!(
            z_measure_pair(u.clone(), 1, 1, &mut r),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            bell_measure_pair(u.clone(), 4, 6, &mut r),
            Err(Error::InvalidArgument(_))
        ));
        assert!(measure_qubit(u, 7, Basis::Z, &mut r).is_err());
        assert!(StateVector::from_amplitudes(vec![Complex64::new(1.0, 0.0); 3]).is_err());
        assert!(StateVector::from_amplitudes(vec![Complex64::new(1.0, 0.0); 4]).is_err());
    }

    #[test]
    fn zero_probability_collapse_is_internal_error() {
        let mut s = StateVector::basis(2, 0).unwrap();
        assert!(matches!(s.renormalize(0.0), Err(Error::Internal(_))));
    }

    #[test]
    fn bell_eigenstate_is_deterministic() {
        for code in BellCode::ALL {
            let amps = code
                .vector()
                .iter()
                .map(|&x| Complex64::new(x, 0.0))
                .collect();
            let s = StateVector::from_amplitudes(amps).unwrap();
            for seed in 0..10 {
                let (o, _) = bell_measure_pair(s.clone(), 0, 1, &mut rng(seed)).unwrap();
                assert_eq!(o, code);
            }
        }
    }

    /// Measure the first four qubits until they read `prefix`, then Bell-measure the rest.
    fn bell_after_prefix(prefix: u8, seed: u64) -> BellCode {
        let mut r = rng(seed);
        loop {
            let (a, s) = z_measure_pair(build_upsilon(), 0, 1, &mut r).unwrap();
            let (b, s) = z_measure_pair(s, 2, 3, &mut r).unwrap();
            if (a.value() << 2 | b.value()) == prefix {
                return bell_measure_pair(s, 4, 5, &mut r).unwrap().0;
            }
        }
    }

    #[test]
    fn bell_outcome_follows_z_prefix() {
        for seed in 0..5 {
            assert_eq!(bell_after_prefix(0b0001, seed), BellCode::PsiPlus);
            assert_eq!(bell_after_prefix(0b0000, seed), BellCode::PhiPlus);
            assert_eq!(bell_after_prefix(0b0110, seed), BellCode::PhiMinus);
            assert_eq!(bell_after_prefix(0b1101, seed), BellCode::PsiMinus);
        }
    }

    #[test]
    fn bell_correlation_and_normalization() {
        let mut r = rng(42);
        for _ in 0..2000 {
            let (a, s) = z_measure_pair(build_upsilon(), 0, 1, &mut r).unwrap();
            assert!((s.norm_sqr() - 1.0).abs() < 1e-9);
            let (b, s) = z_measure_pair(s, 2, 3, &mut r).unwrap();
            assert!((s.norm_sqr() - 1.0).abs() < 1e-9);
            let (c, s) = bell_measure_pair(s, 4, 5, &mut r).unwrap();
            assert!((s.norm_sqr() - 1.0).abs() < 1e-9);
            assert_eq!(a ^ b ^ c.bits(), BitPair::ZERO);
        }
    }

    #[test]
    fn remeasurement_is_idempotent() {
        let mut r = rng(3);
        for _ in 0..200 {
            let (a, s) = z_measure_pair(build_upsilon(), 2, 3, &mut r).unwrap();
            let (a2, s) = z_measure_pair(s, 2, 3, &mut r).unwrap();
            assert_eq!(a, a2);
            let (c, s) = bell_measure_pair(s, 4, 5, &mut r).unwrap();
            let (c2, _) = bell_measure_pair(s, 4, 5, &mut r).unwrap();
            assert_eq!(c, c2);
        }
    }

    fn within_3_sigma(count: usize, trials: usize, p: f64) -> bool {
        let rate = count as f64 / trials as f64;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        (rate - p).abs() <= 3.0 * sigma + 1e-12
    }

    #[test]
    fn two_pair_joint_distribution_is_uniform() {
        let mut r = rng(11);
        let trials = 16_000;
        let mut counts = [0usize; 16];
        for _ in 0..trials {
            let (a, s) = z_measure_pair(build_upsilon(), 0, 1, &mut r).unwrap();
            let (b, _) = z_measure_pair(s, 2, 3, &mut r).unwrap();
            counts[(a.value() << 2 | b.value()) as usize] += 1;
        }
        // Exact joint marginal: every 4-bit prefix carries 2 of the 32 kets.
        for c in counts {
            assert!(within_3_sigma(c, trials, 1.0 / 16.0), "{counts:?}");
        }
    }

    #[test]
    fn bell_sampling_matches_circuit_oracle() {
        // A state where the Bell outcome is genuinely random: Bell-measure
        // qubits (2,3) of the carrier without touching anything else.
        let u = build_upsilon();
        let p = bell_pair_marginal(&u, 2, 3);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut r = rng(5);
        let trials = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..trials {
            let (o, _) = bell_measure_pair(u.clone(), 2, 3, &mut r).unwrap();
            counts[BellCode::ALL.iter().position(|&c| c == o).unwrap()] += 1;
        }
        for k in 0..4 {
            assert!(
                within_3_sigma(counts[k], trials, p[k]),
                "{counts:?} vs {p:?}"
            );
        }
    }

    #[test]
    fn bell_oracle_agrees_on_eigenstates() {
        for (k, code) in BellCode::ALL.iter().enumerate() {
            let amps = code
                .vector()
                .iter()
                .map(|&x| Complex64::new(x, 0.0))
                .collect();
            let s = StateVector::from_amplitudes(amps).unwrap();
            let p = bell_pair_marginal(&s, 0, 1);
            assert!((p[k] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn decoys_are_uniform_and_seeded() {
        let mut r = rng(1);
        let trials = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..trials {
            let d = new_decoy(&mut r);
            counts[DecoyPhoton::ALL.iter().position(|&x| x == d).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / trials as f64 - 0.25).abs() <= 0.02);
        }
        let a: Vec<_> = (0..32).map(|_| new_decoy(&mut rng(9))).collect();
        let b: Vec<_> = (0..32).map(|_| new_decoy(&mut rng(9))).collect();
        assert_eq!(a, b);
        let mut ra = rng(9);
        let mut rb = rng(10);
        let a: Vec<_> = (0..64).map(|_| new_decoy(&mut ra)).collect();
        let b: Vec<_> = (0..64).map(|_| new_decoy(&mut rb)).collect();
        assert_ne!(a, b);
    }

    #[test]
    fn decoy_measurement() {
        let mut r = rng(2);
        let one = DecoyPhoton {
            basis: Basis::Z,
            bit: true,
        };
        assert!(measure_decoy(one, Basis::Z, &mut r));
        let minus = DecoyPhoton {
            basis: Basis::X,
            bit: true,
        };
        assert!(measure_decoy(minus, Basis::X, &mut r));
        let plus = DecoyPhoton {
            basis: Basis::X,
            bit: false,
        };
        let trials = 10_000;
        let ones = (0..trials)
            .filter(|_| measure_decoy(plus, Basis::Z, &mut r))
            .count();
        assert!((ones as f64 / trials as f64 - 0.5).abs() <= 0.02);
    }

    #[test]
    fn x_basis_measurement_of_plus_is_deterministic() {
        let mut s = StateVector::basis(1, 0).unwrap();
        s.apply_hadamard(0).unwrap();
        for seed in 0..10 {
            let (bit, post) = measure_qubit(s.clone(), 0, Basis::X, &mut rng(seed)).unwrap();
            assert!(!bit);
            assert!((post.amplitude(0).re - FRAC_1_SQRT_2).abs() < 1e-12);
        }
    }
}
