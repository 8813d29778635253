//! Classical post-processing of the sifted key: two-way purification steps,
//! feasibility bounds for the final parity-pooling step, CSS key rates, and
//! a bounded exhaustive search for a working schedule.
//!
//! Two step kinds act on the key, tracked here both analytically (as
//! transforms on the residual error distribution) and at string level (as
//! operations on the actual bit strings):
//!
//! * **B** — pair-parity comparison. Bits are matched into random pairs;
//!   both sides compare pair parities over the public channel and keep one
//!   bit of each agreeing pair. The kept bit inherits the pair's common
//!   bit-flip indicator and the XOR of its phase-flip indicators.
//! * **P_r** — parity pooling. Bits are grouped `r` at a time and each
//!   group is replaced by its parity. The new bit-flip indicator is the XOR
//!   of the group's bit-flip indicators; the new phase-flip indicator is
//!   their majority, with an exact tie (even `r`) counted as a failure.
//!
//! A schedule is a sequence of interleaved B/P steps followed by one final
//! pooling step of width `final_r`. The final width is certified by two
//! closed-form bounds: the union bound `r * (p_x + p_y)` on the pooled
//! bit-flip rate, and the tail bound `exp(-2 r (1/2 - p_z - p_y)^2)` on the
//! pooled phase-flip rate. Both must fall below the configured target
//! (default 5%) for the CSS stage to distill at a positive rate.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{Error, Result};
use crate::pauli::{ErrorDistribution, PauliOp, RngStream};

// ====================== schedule types ======================

/// One interleaved post-processing step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ScheduleStep {
    /// Pair-parity comparison.
    B,
    /// Parity pooling over `r` bits; interleaved steps require odd `r >= 3`.
    P { r: u64 },
}

impl std::fmt::Display for ScheduleStep {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScheduleStep::B => f.write_str("B"),
            ScheduleStep::P { r } => write!(f, "P{r}"),
        }
    }
}

impl std::str::FromStr for ScheduleStep {
    type Err = Error;

    fn from_str(s: &str) -> Result<ScheduleStep> {
        if s == "B" {
            return Ok(ScheduleStep::B);
        }
        if let Some(digits) = s.strip_prefix('P') {
            let r: u64 = digits.parse().map_err(|_| {
                Error::InvalidArgument(format!("cannot parse schedule step {s:?}"))
            })?;
            validate_interleaved_r(r)?;
            return Ok(ScheduleStep::P { r });
        }
        Err(Error::InvalidArgument(format!(
            "cannot parse schedule step {s:?}; expected \"B\" or \"P<odd r>\""
        )))
    }
}

impl From<ScheduleStep> for String {
    fn from(step: ScheduleStep) -> String {
        step.to_string()
    }
}

impl TryFrom<String> for ScheduleStep {
    type Error = Error;

    fn try_from(s: String) -> Result<ScheduleStep> {
        s.parse()
    }
}

fn validate_interleaved_r(r: u64) -> Result<()> {
    if r < 3 || r % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "interleaved pooling width must be odd and >= 3, got {r}"
        )));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct RawSchedule {
    steps: Vec<ScheduleStep>,
    final_r: u64,
}

/// A complete post-processing plan: interleaved steps plus the final
/// pooling width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "RawSchedule", try_from = "RawSchedule")]
pub struct Schedule {
    steps: Vec<ScheduleStep>,
    final_r: u64,
}

impl Schedule {
    /// Builds a schedule, validating every interleaved pooling width (odd,
    /// `>= 3`) and the final width (`>= 1`, even allowed).
    pub fn new(steps: Vec<ScheduleStep>, final_r: u64) -> Result<Schedule> {
        for step in &steps {
            if let ScheduleStep::P { r } = step {
                validate_interleaved_r(*r)?;
            }
        }
        if final_r < 1 {
            return Err(Error::InvalidArgument(
                "final pooling width must be >= 1".into(),
            ));
        }
        Ok(Schedule { steps, final_r })
    }

    pub fn steps(&self) -> &[ScheduleStep] {
        &self.steps
    }

    pub fn final_r(&self) -> u64 {
        self.final_r
    }
}

impl From<Schedule> for RawSchedule {
    fn from(s: Schedule) -> RawSchedule {
        RawSchedule {
            steps: s.steps,
            final_r: s.final_r,
        }
    }
}

impl TryFrom<RawSchedule> for Schedule {
    type Error = Error;

    fn try_from(raw: RawSchedule) -> Result<Schedule> {
        Schedule::new(raw.steps, raw.final_r)
    }
}

impl std::fmt::Display for Schedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("[")?;
        for (i, step) in self.steps.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{step}")?;
        }
        write!(f, "] + P{}", self.final_r)
    }
}

/// Residual error rates on the distilled key before the CSS stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualRates {
    pub e_bit: f64,
    pub e_phase: f64,
}

// ====================== distribution-level steps ======================

/// The pair-parity step as a transform on the error distribution.
///
/// Returns the kept-bit distribution and the probability `S` that a pair
/// agrees on parity. With `a = p_i + p_z` and `b = p_x + p_y`,
/// `S = a^2 + b^2 >= 1/2` and
///
/// ```text
/// p_i' = (p_i^2 + p_z^2) / S      p_x' = (p_x^2 + p_y^2) / S
/// p_z' = 2 p_i p_z / S            p_y' = 2 p_x p_y / S
/// ```
///
/// This is the component-wise mirror of the code-level decode transform
/// with X and Z exchanged, which the tests pin down exactly.
pub fn bstep_distribution(d: &ErrorDistribution) -> (ErrorDistribution, f64) {
    let (p_i, p_x, p_y, p_z) = (d.p_i(), d.p_x(), d.p_y(), d.p_z());
    let survival = (p_i + p_z).powi(2) + (p_x + p_y).powi(2);
    let d2 = ErrorDistribution::new(
        (p_i * p_i + p_z * p_z) / survival,
        (p_x * p_x + p_y * p_y) / survival,
        2.0 * p_x * p_y / survival,
        2.0 * p_i * p_z / survival,
    )
    .expect("pair-parity output components sum to survival/survival");
    (d2, survival)
}

/// Pooled phase failure needs at least this many phase flips among `r`
/// draws: a strict majority, with ties (even `r`) counted as failures.
fn phase_fail_threshold(r: u64) -> u64 {
    r.div_ceil(2)
}

/// `base^exp` by squaring, exact for negative bases and u64 exponents.
fn signed_pow(base: f64, mut exp: u64) -> f64 {
    let mut acc = 1.0f64;
    let mut b = base;
    while exp > 0 {
        if exp & 1 == 1 {
            acc *= b;
        }
        b *= b;
        exp >>= 1;
    }
    acc
}

/// The parity-pooling step as a transform on the error distribution.
///
/// Models the pooled bit as `r` independent draws from `d`: its bit-flip
/// indicator is the XOR of the draws' bit-flip indicators and its
/// phase-flip indicator is their majority (ties failing). `r = 1` is the
/// identity. The joint distribution over the two indicators is computed
/// exactly: by direct convolution for small `r`, and for large `r` by
/// conditioning on the phase-flip count (the bit parity within each
/// phase-class is a closed form).
pub fn pstep_distribution(d: &ErrorDistribution, r: u64) -> Result<ErrorDistribution> {
    if r < 1 {
        return Err(Error::InvalidArgument(
            "pooling width must be >= 1".into(),
        ));
    }
    if r <= 512 {
        Ok(pstep_joint_convolved(d, r))
    } else {
        Ok(pstep_joint_conditioned(d, r))
    }
}

fn pstep_joint_convolved(d: &ErrorDistribution, r: u64) -> ErrorDistribution {
    let r = r as usize;
    // Per-draw class probabilities indexed [bit-flip][phase-flip].
    let p = [[d.p_i(), d.p_z()], [d.p_x(), d.p_y()]];
    // dp[k][par]: probability of k phase flips and bit-parity par so far.
    let mut dp = vec![[0.0f64; 2]; r + 1];
    dp[0][0] = 1.0;
    for i in 0..r {
        let mut next = vec![[0.0f64; 2]; r + 1];
        for (k, row) in dp.iter().enumerate().take(i + 1) {
            for (par, &mass) in row.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                for (b, by_phase) in p.iter().enumerate() {
                    for (f, &pf) in by_phase.iter().enumerate() {
                        next[k + f][par ^ b] += mass * pf;
                    }
                }
            }
        }
        dp = next;
    }
    let thr = phase_fail_threshold(r as u64) as usize;
    let mut out = [0.0f64; 4];
    for (k, row) in dp.iter().enumerate() {
        for (par, &mass) in row.iter().enumerate() {
            let op = PauliOp::from_flags(par == 1, k >= thr);
            out[op.index()] += mass;
        }
    }
    // The r-fold convolution accumulates rounding on the order of r ULPs;
    // dividing by the total restores exact unit mass.
    let total: f64 = out.iter().sum();
    ErrorDistribution::new(
        out[0] / total,
        out[1] / total,
        out[2] / total,
        out[3] / total,
    )
    .expect("convolved pooling output is a distribution")
}

fn pstep_joint_conditioned(d: &ErrorDistribution, r: u64) -> ErrorDistribution {
    let f = d.phase_flip_rate();
    let thr = phase_fail_threshold(r);

    // Bit-flip probability conditioned on the phase class of a draw.
    let q_flip = if f > 0.0 { d.p_y() / f } else { 0.0 };
    let q_keep = if f < 1.0 { d.p_x() / (1.0 - f) } else { 0.0 };
    let a_flip = 1.0 - 2.0 * q_flip;
    let a_keep = 1.0 - 2.0 * q_keep;

    // Degenerate phase mass: a single binomial class.
    if f == 0.0 || f == 1.0 {
        let k = if f == 0.0 { 0 } else { r };
        let odd = 0.5 * (1.0 - signed_pow(if f == 0.0 { a_keep } else { a_flip }, r));
        let phase = k >= thr;
        let mut out = [0.0f64; 4];
        out[PauliOp::from_flags(false, phase).index()] = 1.0 - odd;
        out[PauliOp::from_flags(true, phase).index()] = odd;
        return ErrorDistribution::new(out[0], out[1], out[2], out[3])
            .expect("degenerate pooling output is a distribution");
    }

    // Binomial(r, f) mass by multiplicative recurrence outward from the
    // mode; the walk stops once the remaining tail cannot matter. The tiny
    // accumulated rounding is divided back out so the result still sums to
    // one at distribution tolerance.
    let mode = (((r + 1) as f64) * f).floor().min(r as f64) as u64;
    let ratio = f / (1.0 - f);
    let parity_odd = |k: u64| -> f64 {
        let mag = ((k as f64) * a_flip.abs().max(f64::MIN_POSITIVE).ln()
            + ((r - k) as f64) * a_keep.abs().max(f64::MIN_POSITIVE).ln())
        .exp();
        let mag = if (a_flip == 0.0 && k > 0) || (a_keep == 0.0 && r - k > 0) {
            0.0
        } else {
            mag
        };
        let sign = if (k % 2 == 1 && a_flip < 0.0) != ((r - k) % 2 == 1 && a_keep < 0.0) {
            -1.0
        } else {
            1.0
        };
        0.5 * (1.0 - sign * mag)
    };

    let mut acc = [0.0f64; 4];
    let mut total = 0.0f64;
    let mut add = |k: u64, pmf: f64| {
        total += pmf;
        let odd = parity_odd(k);
        let phase = k >= thr;
        acc[PauliOp::from_flags(false, phase).index()] += pmf * (1.0 - odd);
        acc[PauliOp::from_flags(true, phase).index()] += pmf * odd;
    };

    let cutoff = 1e-18;
    add(mode, 1.0);
    let mut pmf = 1.0;
    let mut k = mode;
    while k < r {
        pmf *= ratio * ((r - k) as f64) / ((k + 1) as f64);
        k += 1;
        add(k, pmf);
        if pmf < cutoff {
            break;
        }
    }
    pmf = 1.0;
    k = mode;
    while k > 0 {
        pmf *= (k as f64) / (ratio * ((r - k + 1) as f64));
        k -= 1;
        add(k, pmf);
        if pmf < cutoff {
            break;
        }
    }

    ErrorDistribution::new(
        acc[0] / total,
        acc[1] / total,
        acc[2] / total,
        acc[3] / total,
    )
    .expect("conditioned pooling output is a distribution")
}

/// Exact marginal rates after pooling `r` draws from `d`.
///
/// The pooled bit-flip rate is the parity closed form
/// `(1 - (1 - 2 q)^r) / 2` with `q = p_x + p_y`; the pooled phase-flip rate
/// is the exact binomial tail `P[Bin(r, p_z + p_y) >= ceil(r / 2)]`.
pub fn pooling_rates(d: &ErrorDistribution, r: u64) -> Result<ResidualRates> {
    if r < 1 {
        return Err(Error::InvalidArgument(
            "pooling width must be >= 1".into(),
        ));
    }
    let q = d.bit_flip_rate();
    let f = d.phase_flip_rate();
    let e_bit = 0.5 * (1.0 - signed_pow(1.0 - 2.0 * q, r));
    let thr = phase_fail_threshold(r);
    let binom = Binomial::new(f, r).expect("phase rate is a probability");
    let e_phase = binom.sf(thr - 1);
    Ok(ResidualRates { e_bit, e_phase })
}

/// Certified upper bounds for one final pooling width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolingFeasibility {
    /// Both bounds at or below the target.
    pub feasible: bool,
    /// Union bound `r * (p_x + p_y)` on the pooled bit-flip rate.
    pub bit_bound: f64,
    /// Tail bound `exp(-2 r (1/2 - p_z - p_y)^2)` on the pooled phase-flip
    /// rate, reported as 1 when the phase rate is at or above 1/2 (the
    /// bound is vacuous there).
    pub phase_bound: f64,
}

/// Evaluates the final-step bounds for width `r` against `target`.
pub fn pooling_feasibility(
    d: &ErrorDistribution,
    r: u64,
    target: f64,
) -> Result<PoolingFeasibility> {
    if r < 1 {
        return Err(Error::InvalidArgument(
            "pooling width must be >= 1".into(),
        ));
    }
    validate_target(target)?;
    let bit_bound = (r as f64) * d.bit_flip_rate();
    let margin = 0.5 - d.phase_flip_rate();
    let phase_bound = if margin > 0.0 {
        (-2.0 * (r as f64) * margin * margin).exp()
    } else {
        1.0
    };
    Ok(PoolingFeasibility {
        feasible: bit_bound <= target && phase_bound <= target,
        bit_bound,
        phase_bound,
    })
}

fn validate_target(target: f64) -> Result<()> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "feasibility target must lie in (0, 1), got {target}"
        )));
    }
    Ok(())
}

// ====================== key rate ======================

/// Binary entropy in bits, with `H(0) = H(1) = 0`.
///
/// # Panics
///
/// Panics when `p` is outside `[0, 1]`.
pub fn binary_entropy(p: f64) -> f64 {
    assert!(
        (0.0..=1.0).contains(&p),
        "binary_entropy argument {p} outside [0, 1]"
    );
    if p == 0.0 || p == 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Asymptotic CSS distillation rate `1 - H(e_bit) - H(e_phase)`.
///
/// Negative values are meaningful (no key) and returned as-is.
pub fn css_key_rate(rates: ResidualRates) -> f64 {
    1.0 - binary_entropy(rates.e_bit) - binary_entropy(rates.e_phase)
}

/// The working distribution a four-state session must assume.
///
/// That protocol measures only a bit-flip and a phase-flip rate and cannot
/// separate out a Y component on the decoded qubits, so post-processing
/// plans against `(1 - b - f, b, 0, f)`.
pub fn four_state_working_distribution(
    bit_rate: f64,
    phase_rate: f64,
) -> Result<ErrorDistribution> {
    if !(0.0..=1.0).contains(&bit_rate) || !(0.0..=1.0).contains(&phase_rate) {
        return Err(Error::InvalidArgument(format!(
            "rates ({bit_rate}, {phase_rate}) outside [0, 1]"
        )));
    }
    if bit_rate + phase_rate > 1.0 {
        return Err(Error::InvalidArgument(format!(
            "rates ({bit_rate}, {phase_rate}) sum above 1"
        )));
    }
    ErrorDistribution::new(1.0 - bit_rate - phase_rate, bit_rate, 0.0, phase_rate)
}

// ====================== schedule search ======================

/// Search space for [`schedule_search`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchBounds {
    /// Maximum number of interleaved B steps.
    pub max_b: u32,
    /// Maximum number of interleaved pooling steps.
    pub max_p_rounds: u32,
    /// Largest final pooling width considered.
    pub r_max: u64,
    /// Bound target for the final step (both bounds must fall below it).
    pub target: f64,
}

impl SearchBounds {
    /// Pooling widths tried for interleaved P steps.
    pub const INTERLEAVED_R: [u64; 2] = [3, 5];

    pub fn validate(&self) -> Result<()> {
        validate_target(self.target)?;
        if self.r_max < 1 {
            return Err(Error::InvalidArgument(
                "r_max must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

impl Default for SearchBounds {
    fn default() -> SearchBounds {
        SearchBounds {
            max_b: 12,
            max_p_rounds: 6,
            r_max: 10_000_000,
            target: 0.05,
        }
    }
}

/// A schedule the search certified, with its exact residual rates and key
/// rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleSchedule {
    pub schedule: Schedule,
    pub residual: ResidualRates,
    pub key_rate: f64,
}

/// Searches interleavings of B and P steps, each completed by a final
/// pooling width, for a plan whose final-step bounds meet the target and
/// whose key rate is positive.
///
/// The traversal is depth-first over step sequences with children ordered
/// `B`, `P3`, `P5`, completion being tried before descent, so the first
/// feasible plan in that fixed order is returned and the result is
/// deterministic. Candidate final widths walk a geometric grid (ratio 5/4)
/// capped by both `r_max` and the largest width the bit-flip union bound
/// admits; the cap itself is always tried, so a subtree is declared
/// infeasible only when no width at all can work.
pub fn schedule_search(
    d: &ErrorDistribution,
    bounds: &SearchBounds,
) -> Result<Option<FeasibleSchedule>> {
    bounds.validate()?;
    let mut steps = Vec::new();
    Ok(search_node(d, bounds.max_b, bounds.max_p_rounds, bounds, &mut steps))
}

fn search_node(
    d: &ErrorDistribution,
    b_left: u32,
    p_left: u32,
    bounds: &SearchBounds,
    steps: &mut Vec<ScheduleStep>,
) -> Option<FeasibleSchedule> {
    if let Some(final_r) = feasible_final_width(d, bounds) {
        let schedule = Schedule::new(steps.clone(), final_r)
            .expect("search emits validated steps");
        let residual = pooling_rates(d, final_r).expect("final width >= 1");
        let key_rate = css_key_rate(residual);
        if key_rate > 0.0 {
            return Some(FeasibleSchedule {
                schedule,
                residual,
                key_rate,
            });
        }
    }
    if b_left > 0 {
        let (d2, _) = bstep_distribution(d);
        steps.push(ScheduleStep::B);
        if let Some(found) = search_node(&d2, b_left - 1, p_left, bounds, steps) {
            return Some(found);
        }
        steps.pop();
    }
    if p_left > 0 {
        for r in SearchBounds::INTERLEAVED_R {
            let d2 = pstep_distribution(d, r).expect("interleaved width >= 1");
            steps.push(ScheduleStep::P { r });
            if let Some(found) = search_node(&d2, b_left, p_left - 1, bounds, steps) {
                return Some(found);
            }
            steps.pop();
        }
    }
    None
}

/// O(1) feasibility gate plus grid scan: returns the first workable final
/// width for `d`, if any exists within the bounds.
fn feasible_final_width(d: &ErrorDistribution, bounds: &SearchBounds) -> Option<u64> {
    let q = d.bit_flip_rate();
    let mut r_cap = if q > 0.0 {
        bounds.r_max.min((bounds.target / q).floor() as u64)
    } else {
        bounds.r_max
    };
    while r_cap >= 1 && (r_cap as f64) * q > bounds.target {
        r_cap -= 1;
    }
    if r_cap < 1 {
        return None;
    }
    // Both bounds are monotone in r (bit up, phase down), so the cap decides
    // whether any width works.
    let at_cap = pooling_feasibility(d, r_cap, bounds.target).expect("cap >= 1");
    if !at_cap.feasible {
        return None;
    }
    let mut r = 1u64;
    loop {
        let r_try = r.min(r_cap);
        let check = pooling_feasibility(d, r_try, bounds.target).expect("width >= 1");
        if check.feasible {
            return Some(r_try);
        }
        if r_try == r_cap {
            return Some(r_cap);
        }
        r = (r + 1).max(r * 5 / 4);
    }
}

// ====================== analytic schedule application ======================

/// Result of pushing a distribution through a whole schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleApplication {
    /// Distribution after the interleaved steps, before the final pooling.
    pub post_steps: ErrorDistribution,
    /// Exact residual rates after the final pooling step.
    pub residual: ResidualRates,
    /// Expected fraction of key bits remaining: one bit survives each kept
    /// pair (factor `S/2` per B step) and each pooled group contributes one
    /// bit (factor `1/r`).
    pub expected_bit_yield: f64,
}

/// Applies a schedule analytically: step recurrences, then exact final
/// marginals.
pub fn apply_schedule(d: &ErrorDistribution, schedule: &Schedule) -> ScheduleApplication {
    let mut cur = *d;
    let mut yield_frac = 1.0;
    for step in schedule.steps() {
        match step {
            ScheduleStep::B => {
                let (d2, survival) = bstep_distribution(&cur);
                cur = d2;
                yield_frac *= survival / 2.0;
            }
            ScheduleStep::P { r } => {
                cur = pstep_distribution(&cur, *r).expect("validated width");
                yield_frac /= *r as f64;
            }
        }
    }
    let residual = pooling_rates(&cur, schedule.final_r()).expect("validated final width");
    yield_frac /= schedule.final_r() as f64;
    ScheduleApplication {
        post_steps: cur,
        residual,
        expected_bit_yield: yield_frac,
    }
}

// ====================== string-level steps ======================

/// The simulator's view of the shared key: Alice's bits, Bob's bits, and a
/// bookkeeping phase-flip flag per bit. The flags are not observable by the
/// parties; the simulation carries them so residual phase rates can be
/// measured.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeyBits {
    pub alice: Vec<bool>,
    pub bob: Vec<bool>,
    pub phase: Vec<bool>,
}

impl KeyBits {
    pub fn len(&self) -> usize {
        self.alice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alice.is_empty()
    }

    fn check_aligned(&self) -> Result<()> {
        if self.alice.len() != self.bob.len() || self.alice.len() != self.phase.len() {
            return Err(Error::InvalidArgument(format!(
                "key string lengths differ: alice {}, bob {}, phase {}",
                self.alice.len(),
                self.bob.len(),
                self.phase.len()
            )));
        }
        Ok(())
    }

    /// Fraction of positions where the two sides disagree.
    pub fn bit_error_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let errors = self
            .alice
            .iter()
            .zip(&self.bob)
            .filter(|(a, b)| a != b)
            .count();
        errors as f64 / self.len() as f64
    }

    /// Fraction of positions carrying a phase-flip flag.
    pub fn phase_flag_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.phase.iter().filter(|&&p| p).count() as f64 / self.len() as f64
    }
}

/// One string-level pair-parity step.
///
/// Bits are matched by a uniformly random perfect matching (an odd leftover
/// bit is dropped). A pair is kept when both sides' pair parities agree;
/// the first bit of a kept pair survives, its phase flag XOR-combined with
/// its partner's.
pub fn bstep_strings(bits: &KeyBits, rng: &mut RngStream) -> Result<KeyBits> {
    bits.check_aligned()?;
    if bits.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "pair-parity step needs at least 2 bits, have {}",
            bits.len()
        )));
    }
    let mut order: Vec<usize> = (0..bits.len()).collect();
    rng.shuffle(&mut order);
    let mut out = KeyBits::default();
    for pair in order.chunks_exact(2) {
        let (i, j) = (pair[0], pair[1]);
        let alice_parity = bits.alice[i] ^ bits.alice[j];
        let bob_parity = bits.bob[i] ^ bits.bob[j];
        if alice_parity == bob_parity {
            out.alice.push(bits.alice[i]);
            out.bob.push(bits.bob[i]);
            out.phase.push(bits.phase[i] ^ bits.phase[j]);
        }
    }
    Ok(out)
}

/// One string-level parity-pooling step of width `r`.
///
/// Bits are grouped `r` at a time after a random shuffle (a short leftover
/// group is dropped); each group is replaced on both sides by its parity,
/// with the pooled phase flag set by majority, ties counting as flips.
pub fn pstep_strings(bits: &KeyBits, r: u64, rng: &mut RngStream) -> Result<KeyBits> {
    bits.check_aligned()?;
    if r < 1 {
        return Err(Error::InvalidArgument(
            "pooling width must be >= 1".into(),
        ));
    }
    let width = usize::try_from(r).map_err(|_| {
        Error::InvalidArgument(format!("pooling width {r} does not fit in memory"))
    })?;
    let mut order: Vec<usize> = (0..bits.len()).collect();
    rng.shuffle(&mut order);
    let thr = phase_fail_threshold(r);
    let mut out = KeyBits::default();
    for group in order.chunks_exact(width) {
        let mut alice = false;
        let mut bob = false;
        let mut flags = 0u64;
        for &i in group {
            alice ^= bits.alice[i];
            bob ^= bits.bob[i];
            flags += bits.phase[i] as u64;
        }
        out.alice.push(alice);
        out.bob.push(bob);
        out.phase.push(flags >= thr);
    }
    Ok(out)
}

/// Runs a whole schedule on the key strings: interleaved steps, then the
/// final pooling step. A pool that drains below the size the next step
/// needs ends the schedule early with an empty key rather than erroring;
/// that is an honest protocol outcome, not a caller mistake.
pub fn apply_schedule_strings(
    bits: &KeyBits,
    schedule: &Schedule,
    rng: &mut RngStream,
) -> Result<KeyBits> {
    let mut cur = bits.clone();
    cur.check_aligned()?;
    for step in schedule.steps() {
        let needed = match step {
            ScheduleStep::B => 2,
            ScheduleStep::P { r } => *r as usize,
        };
        if cur.len() < needed {
            return Ok(KeyBits::default());
        }
        cur = match step {
            ScheduleStep::B => bstep_strings(&cur, rng)?,
            ScheduleStep::P { r } => pstep_strings(&cur, *r, rng)?,
        };
    }
    if cur.len() < schedule.final_r() as usize {
        return Ok(KeyBits::default());
    }
    pstep_strings(&cur, schedule.final_r(), rng)
}
