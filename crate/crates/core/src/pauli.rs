//! Single-qubit Pauli algebra, probability distributions over it, and the
//! seeded random streams every stochastic component draws from.
//!
//! Composition ignores global phase throughout: a Pauli operator is reduced
//! to its pair of (bit-flip, phase-flip) indicators, which is all the
//! protocol ever observes.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the four Pauli operators, phase-free.
///
/// The discriminant packs the two indicator bits: bit 0 is the bit-flip
/// component, bit 1 the phase-flip component, so `I = 00`, `X = 01`,
/// `Z = 10`, `Y = 11` and composition is a plain XOR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum PauliOp {
    I = 0b00,
    X = 0b01,
    Z = 0b10,
    Y = 0b11,
}

impl PauliOp {
    /// All four operators in the fixed order used for distribution indexing.
    pub const ALL: [PauliOp; 4] = [PauliOp::I, PauliOp::X, PauliOp::Y, PauliOp::Z];

    /// Rebuilds an operator from its indicator bits.
    pub fn from_flags(bit_flip: bool, phase_flip: bool) -> PauliOp {
        match (bit_flip, phase_flip) {
            (false, false) => PauliOp::I,
            (true, false) => PauliOp::X,
            (false, true) => PauliOp::Z,
            (true, true) => PauliOp::Y,
        }
    }

    /// Group composition, with global phase discarded.
    pub fn compose(self, other: PauliOp) -> PauliOp {
        let bits = (self as u8) ^ (other as u8);
        match bits {
            0b00 => PauliOp::I,
            0b01 => PauliOp::X,
            0b10 => PauliOp::Z,
            _ => PauliOp::Y,
        }
    }

    /// True when the operator flips computational-basis states (X or Y).
    pub fn has_bit_flip(self) -> bool {
        (self as u8) & 0b01 != 0
    }

    /// True when the operator flips the conjugate basis (Z or Y).
    pub fn has_phase_flip(self) -> bool {
        (self as u8) & 0b10 != 0
    }

    /// Index into the canonical `[I, X, Y, Z]` ordering.
    pub fn index(self) -> usize {
        match self {
            PauliOp::I => 0,
            PauliOp::X => 1,
            PauliOp::Y => 2,
            PauliOp::Z => 3,
        }
    }

    /// Single-letter name, as written in reports and CSV rows.
    pub fn name(self) -> &'static str {
        match self {
            PauliOp::I => "I",
            PauliOp::X => "X",
            PauliOp::Y => "Y",
            PauliOp::Z => "Z",
        }
    }
}

impl std::fmt::Display for PauliOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Largest deviation from unit total mass a distribution may carry.
pub const SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RawDistribution {
    p_i: f64,
    p_x: f64,
    p_y: f64,
    p_z: f64,
}

/// A probability distribution over the four Pauli operators.
///
/// Construction validates that every component lies in `[0, 1]` and that the
/// components sum to one within [`SUM_TOLERANCE`]. Out-of-tolerance input is
/// rejected rather than renormalized, so a distribution that reaches a
/// consumer is always exactly the one the producer computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct ErrorDistribution {
    probs: [f64; 4],
}

impl ErrorDistribution {
    /// The error-free channel: identity with probability one.
    pub const NOISELESS: ErrorDistribution = ErrorDistribution {
        probs: [1.0, 0.0, 0.0, 0.0],
    };

    /// Builds a distribution from the four component probabilities.
    pub fn new(p_i: f64, p_x: f64, p_y: f64, p_z: f64) -> Result<ErrorDistribution> {
        let probs = [p_i, p_x, p_y, p_z];
        for (op, &p) in PauliOp::ALL.iter().zip(&probs) {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidDistribution(format!(
                    "component {op} is {p}, outside [0, 1]"
                )));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "components sum to {sum}, more than {SUM_TOLERANCE} away from 1"
            )));
        }
        Ok(ErrorDistribution { probs })
    }

    /// Probability of a single operator.
    pub fn prob(&self, op: PauliOp) -> f64 {
        self.probs[op.index()]
    }

    pub fn p_i(&self) -> f64 {
        self.probs[0]
    }

    pub fn p_x(&self) -> f64 {
        self.probs[1]
    }

    pub fn p_y(&self) -> f64 {
        self.probs[2]
    }

    pub fn p_z(&self) -> f64 {
        self.probs[3]
    }

    /// Probability that a drawn error flips the computational basis.
    pub fn bit_flip_rate(&self) -> f64 {
        self.p_x() + self.p_y()
    }

    /// Probability that a drawn error flips the conjugate basis.
    pub fn phase_flip_rate(&self) -> f64 {
        self.p_z() + self.p_y()
    }

    /// Both observable rates, `(bit, phase)`.
    pub fn flip_rates(&self) -> (f64, f64) {
        (self.bit_flip_rate(), self.phase_flip_rate())
    }

    /// The same distribution with the X and Z components exchanged.
    pub fn swap_xz(&self) -> ErrorDistribution {
        ErrorDistribution {
            probs: [self.p_i(), self.p_z(), self.p_y(), self.p_x()],
        }
    }

    /// Draws one operator by inverse-CDF walk in the fixed `[I, X, Y, Z]`
    /// order, so a given uniform variate always maps to the same operator.
    pub fn sample(&self, rng: &mut RngStream) -> PauliOp {
        let u = rng.uniform();
        let mut acc = 0.0;
        for op in PauliOp::ALL {
            acc += self.prob(op);
            if u < acc {
                return op;
            }
        }
        PauliOp::Z
    }
}

impl TryFrom<RawDistribution> for ErrorDistribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<ErrorDistribution> {
        ErrorDistribution::new(raw.p_i, raw.p_x, raw.p_y, raw.p_z)
    }
}

impl From<ErrorDistribution> for RawDistribution {
    fn from(d: ErrorDistribution) -> RawDistribution {
        RawDistribution {
            p_i: d.p_i(),
            p_x: d.p_x(),
            p_y: d.p_y(),
            p_z: d.p_z(),
        }
    }
}

impl std::fmt::Display for ErrorDistribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "(I: {:.6}, X: {:.6}, Y: {:.6}, Z: {:.6})",
            self.p_i(),
            self.p_x(),
            self.p_y(),
            self.p_z()
        )
    }
}

/// A reproducible random stream, addressed by `(master seed, substream)`.
///
/// Backed by a counter-based generator with independent stream spaces, so
/// any worker can be handed `(seed, index)` and produce the same draws the
/// sequential program would; no state is shared or passed between streams.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    substream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, substream: u64) -> RngStream {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(substream);
        RngStream {
            seed,
            substream,
            rng,
        }
    }

    /// A fresh stream under the same master seed.
    pub fn derive(&self, substream: u64) -> RngStream {
        RngStream::new(self.seed, substream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn substream(&self) -> u64 {
        self.substream
    }

    /// Uniform draw from `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }

    /// Fair coin.
    pub fn bit(&mut self) -> bool {
        self.rng.random()
    }

    /// Bernoulli draw; `p` is clamped to `[0, 1]` by the caller's contract.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        slice.shuffle(&mut self.rng);
    }
}
