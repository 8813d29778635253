//! Bit-level simulation of the full protocol: Alice's code stream, channel
//! and eavesdropper action, Bob's post-selected decode, sifting, error
//! testing with an abort decision, and two-way post-processing applied to
//! the actual key strings.
//!
//! Codes are simulated in fixed-size blocks, one derived random substream
//! per block, and block results are merged in index order. Reports are
//! therefore bit-for-bit reproducible for a given config and seed no
//! matter how many worker threads participate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::code::{
    bob_decode_outcome, decoded_distribution, encode, parity_survives, residual_error, Basis,
    CodeState, JointError, LogicalState, ProtocolVariant,
};
use crate::error::{Error, Result};
use crate::optics::{
    measure_photon, record_basis_probability, sample_decode, TwoPhotonState,
};
use crate::pauli::{ErrorDistribution, PauliOp, RngStream};
use crate::postprocess::{
    apply_schedule, apply_schedule_strings, css_key_rate, four_state_working_distribution,
    schedule_search, KeyBits, ResidualRates, Schedule, SearchBounds,
};

/// Codes per simulation block; each block consumes one random substream.
const BLOCK_SIZE: u64 = 4096;
/// Substream for the random choice of which sifted key bits are checked.
const CHECK_SELECTION_SUBSTREAM: u64 = 1 << 40;
/// Substream for the pairing/grouping randomness of the string steps.
const STRING_STEP_SUBSTREAM: u64 = (1 << 40) + 1;

/// Fractions of codes prepared in each logical basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisMix {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BasisMix {
    /// The default split: a quarter of the codes probe the conjugate
    /// basis; the six-state variant gives the extra quarter to Y.
    pub fn default_for(variant: ProtocolVariant) -> BasisMix {
        match variant {
            ProtocolVariant::FourState => BasisMix {
                x: 0.25,
                y: 0.0,
                z: 0.75,
            },
            ProtocolVariant::SixState => BasisMix {
                x: 0.25,
                y: 0.25,
                z: 0.5,
            },
        }
    }

    fn validate(&self, variant: ProtocolVariant) -> Result<()> {
        for (name, value) in [("x", self.x), ("y", self.y), ("z", self.z)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidArgument(format!(
                    "basis mix fraction {name} = {value} is outside [0, 1]"
                )));
            }
        }
        let total = self.x + self.y + self.z;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "basis mix fractions sum to {total}, not 1"
            )));
        }
        if variant == ProtocolVariant::FourState && self.y != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "the four-state protocol prepares no Y codes, but the mix assigns {}",
                self.y
            )));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut RngStream) -> Basis {
        let pick = rng.uniform();
        if pick < self.x {
            Basis::X
        } else if pick < self.x + self.y {
            Basis::Y
        } else {
            Basis::Z
        }
    }
}

/// The eavesdropper, if any. Intercept-and-resend attacks measure each
/// photon in flight and forward the collapsed state; the custom variant
/// composes an extra Pauli channel per photon with the physical channel.
/// Coherent multi-code strategies are out of scope.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AttackModel {
    #[default]
    None,
    /// Measures both photons in the Z basis.
    InterceptResendZ,
    /// Measures each photon in Z or X, chosen fairly per photon.
    InterceptResendBb84,
    CustomPauli {
        channel: ErrorDistribution,
    },
}

/// Either a fixed post-processing plan or the literal string `"search"`,
/// which runs the schedule search on the measured rates.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum SchedulePolicy {
    #[default]
    Search,
    Fixed(Schedule),
}

impl Serialize for SchedulePolicy {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SchedulePolicy::Search => serializer.serialize_str("search"),
            SchedulePolicy::Fixed(schedule) => schedule.serialize(serializer),
        }
    }
}

impl<'de> Deserialize<'de> for SchedulePolicy {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Keyword(String),
            Fixed(Schedule),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Keyword(word) if word == "search" => Ok(SchedulePolicy::Search),
            Raw::Keyword(word) => Err(serde::de::Error::custom(format!(
                "unknown schedule keyword '{word}'; expected \"search\" or a schedule"
            ))),
            Raw::Fixed(schedule) => Ok(SchedulePolicy::Fixed(schedule)),
        }
    }
}

fn default_abort_tolerance() -> f64 {
    0.02
}

fn default_confidence() -> f64 {
    0.99
}

/// Everything one protocol run depends on. Identical configs with
/// identical seeds produce identical reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub variant: ProtocolVariant,
    /// Number of codes Alice sends.
    pub n_codes: u64,
    /// Preparation-basis fractions; defaults to the variant's split.
    #[serde(default)]
    pub basis_mix: Option<BasisMix>,
    /// Physical per-photon Pauli channel.
    pub channel: ErrorDistribution,
    #[serde(default)]
    pub attack: AttackModel,
    /// Fraction of sifted key-basis bits sacrificed for testing. When
    /// absent, the number of checked bits equals the number of announced
    /// conjugate-basis bits.
    #[serde(default)]
    pub checked_z_fraction: Option<f64>,
    /// Allowed excess of a measured rate over its prediction, on top of
    /// the confidence-interval half-width.
    #[serde(default = "default_abort_tolerance")]
    pub abort_tolerance: f64,
    /// Confidence level of the reported intervals.
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    /// Probability that a single photon vanishes in transit; a code
    /// missing a photon is discarded.
    #[serde(default)]
    pub loss: f64,
    #[serde(default)]
    pub schedule: SchedulePolicy,
    /// Bounds for the schedule search; ignored for a fixed schedule.
    #[serde(default)]
    pub search_bounds: SearchBounds,
    pub seed: u64,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_codes == 0 {
            return Err(Error::InvalidArgument("n_codes must be positive".into()));
        }
        self.effective_basis_mix().validate(self.variant)?;
        if let Some(fraction) = self.checked_z_fraction {
            if !(0.0..=1.0).contains(&fraction) {
                return Err(Error::InvalidArgument(format!(
                    "checked_z_fraction {fraction} is outside [0, 1]"
                )));
            }
        }
        if !(self.abort_tolerance >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "abort tolerance {} is negative",
                self.abort_tolerance
            )));
        }
        if !(0.0 < self.confidence && self.confidence < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "confidence {} is outside (0, 1)",
                self.confidence
            )));
        }
        if !(0.0..=1.0).contains(&self.loss) {
            return Err(Error::InvalidArgument(format!(
                "loss {} is outside [0, 1]",
                self.loss
            )));
        }
        self.search_bounds.validate()?;
        Ok(())
    }

    pub fn effective_basis_mix(&self) -> BasisMix {
        self.basis_mix
            .unwrap_or_else(|| BasisMix::default_for(self.variant))
    }

    fn blocks(&self) -> u64 {
        self.n_codes.div_ceil(BLOCK_SIZE)
    }
}

/// One transmitted code as seen after Bob's measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SiftRecord {
    pub index: u64,
    pub prep_basis: Basis,
    /// Bob's record basis; absent when the code was rejected or lost.
    pub meas_basis: Option<Basis>,
    pub alice_bit: bool,
    pub bob_bit: Option<bool>,
    pub accepted: bool,
}

/// A binomial rate with its Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub checked: u64,
    pub errors: u64,
    /// Raw error fraction.
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl RateEstimate {
    pub fn half_width(&self) -> f64 {
        (self.ci_high - self.ci_low) / 2.0
    }
}

/// The Wilson score interval for `errors` failures out of `checked`
/// trials at the given two-sided confidence level.
pub fn wilson_interval(errors: u64, checked: u64, confidence: f64) -> Result<RateEstimate> {
    if checked == 0 {
        return Err(Error::EmptyCheckSet(
            "rate estimation needs at least one checked bit",
        ));
    }
    if errors > checked {
        return Err(Error::InvalidArgument(format!(
            "{errors} errors out of {checked} checked"
        )));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let z = normal.inverse_cdf(0.5 + confidence / 2.0);
    let n = checked as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Ok(RateEstimate {
        checked,
        errors,
        rate: p,
        ci_low: (center - half).max(0.0),
        ci_high: (center + half).min(1.0),
    })
}

/// Error tallies from the announced and checked bits.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CheckTallies {
    pub z_checked: u64,
    pub z_errors: u64,
    pub x_checked: u64,
    pub x_errors: u64,
    pub y_checked: u64,
    pub y_errors: u64,
}

/// Measured error rates: bit flips from checked Z records, phase flips
/// from the announced X records, and — six-state only — the Y-record
/// rate that lets the parties separate the error components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredRates {
    pub bit: RateEstimate,
    pub phase: RateEstimate,
    pub y: Option<RateEstimate>,
}

/// Turns check tallies into rates with confidence intervals.
pub fn estimate_rates(
    tallies: &CheckTallies,
    variant: ProtocolVariant,
    confidence: f64,
) -> Result<MeasuredRates> {
    Ok(MeasuredRates {
        bit: wilson_interval(tallies.z_errors, tallies.z_checked, confidence)?,
        phase: wilson_interval(tallies.x_errors, tallies.x_checked, confidence)?,
        y: match variant {
            ProtocolVariant::FourState => None,
            ProtocolVariant::SixState => Some(wilson_interval(
                tallies.y_errors,
                tallies.y_checked,
                confidence,
            )?),
        },
    })
}

/// Error rates the parties predict from the declared channel alone, via
/// the decode transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedRates {
    pub bit: f64,
    pub phase: f64,
    pub y: Option<f64>,
}

pub fn expected_rates(channel: &ErrorDistribution, variant: ProtocolVariant) -> ExpectedRates {
    let (decoded, _) = decoded_distribution(channel);
    let (bit, phase) = decoded.flip_rates();
    ExpectedRates {
        bit,
        phase,
        y: match variant {
            ProtocolVariant::FourState => None,
            ProtocolVariant::SixState => Some(decoded.p_x() + decoded.p_z()),
        },
    }
}

/// One-sided test: abort when any measured rate exceeds its prediction
/// by more than the tolerance plus the interval half-width. Rates below
/// prediction never abort.
pub fn abort_decision(
    measured: &MeasuredRates,
    expected: &ExpectedRates,
    tolerance: f64,
) -> bool {
    let exceeds = |m: &RateEstimate, e: f64| m.rate > e + tolerance + m.half_width();
    exceeds(&measured.bit, expected.bit)
        || exceeds(&measured.phase, expected.phase)
        || match (&measured.y, expected.y) {
            (Some(m), Some(e)) => exceeds(m, e),
            _ => false,
        }
}

/// Reconstructs the working error distribution the post-processing plan
/// should assume, from the measured rates. Returns `None` when the rates
/// are mutually inconsistent with any distribution (total error mass
/// above one), which the caller treats as "no feasible key", not a bug.
pub fn working_distribution_estimate(
    measured: &MeasuredRates,
    variant: ProtocolVariant,
) -> Option<ErrorDistribution> {
    match variant {
        ProtocolVariant::FourState => {
            four_state_working_distribution(measured.bit.rate, measured.phase.rate).ok()
        }
        ProtocolVariant::SixState => {
            let r_z = measured.bit.rate;
            let r_x = measured.phase.rate;
            let r_y = measured.y.as_ref()?.rate;
            let p_x = ((r_z + r_y - r_x) / 2.0).max(0.0);
            let p_y = ((r_z + r_x - r_y) / 2.0).max(0.0);
            let p_z = ((r_x + r_y - r_z) / 2.0).max(0.0);
            let p_i = 1.0 - p_x - p_y - p_z;
            if p_i < 0.0 {
                return None;
            }
            ErrorDistribution::new(p_i, p_x, p_y, p_z).ok()
        }
    }
}

/// Pipeline counts; each stage is a subset of the previous one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunCounts {
    pub sent: u64,
    pub lost: u64,
    pub parity_survived: u64,
    pub sifted: u64,
    pub checked: u64,
}

/// What the string-level post-processing actually produced. Both rates
/// read zero when nothing survives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StringOutcome {
    pub surviving_bits: u64,
    pub bit_error_rate: f64,
    pub phase_flag_rate: f64,
}

/// Aggregated result of one protocol run.
///
/// `schedule`, `residual`, `strings`, `key_rate`, and `final_key_length`
/// are absent after an abort, and all but `strings` are absent when no
/// feasible schedule exists for the measured rates. `residual` and
/// `key_rate` are the analytic predictions for the chosen schedule at the
/// estimated working distribution; `strings` is what the simulated bit
/// strings measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub variant: ProtocolVariant,
    pub seed: u64,
    pub counts: RunCounts,
    pub rates: MeasuredRates,
    pub expected: ExpectedRates,
    pub abort: bool,
    pub schedule: Option<Schedule>,
    pub residual: Option<ResidualRates>,
    pub strings: Option<StringOutcome>,
    pub key_rate: Option<f64>,
    pub final_key_length: Option<u64>,
}

#[derive(Debug, Default)]
struct BlockOutcome {
    lost: u64,
    parity_survived: u64,
    sifted: u64,
    x_checked: u64,
    x_errors: u64,
    y_checked: u64,
    y_errors: u64,
    z_bits: Vec<(bool, bool, bool)>,
    records: Vec<SiftRecord>,
}

fn draw_record_basis(variant: ProtocolVariant, rng: &mut RngStream) -> Basis {
    let bases = variant.bases();
    let mut pick = rng.uniform();
    for basis in bases {
        let p = record_basis_probability(*basis, variant);
        if pick < p {
            return *basis;
        }
        pick -= p;
    }
    *bases.last().expect("every variant has bases")
}

/// Channel action and decode for runs whose disturbance is an exact
/// Pauli channel (no attack, or an extra Pauli channel as the attack):
/// the error class fully determines parity survival and the residual, so
/// no amplitudes are needed. Returns the record basis, Bob's bit, and
/// the phase-flip bookkeeping flag.
fn abstract_decode(
    code: &CodeState,
    channel: &ErrorDistribution,
    eve: Option<&ErrorDistribution>,
    variant: ProtocolVariant,
    rng: &mut RngStream,
) -> Option<(Basis, bool, bool)> {
    let photon_op = |rng: &mut RngStream| {
        let eve_op = eve.map_or(PauliOp::I, |dist| dist.sample(rng));
        channel.sample(rng).compose(eve_op)
    };
    let e = JointError::new(photon_op(rng), photon_op(rng));
    if !parity_survives(e) {
        return None;
    }
    let record_basis = draw_record_basis(variant, rng);
    let outcome = bob_decode_outcome(code, e, record_basis, rng);
    let bit = outcome.bit.expect("surviving parity yields a record bit");
    let residual = residual_error(e).expect("surviving parity has a residual");
    Some((record_basis, bit, residual.has_phase_flip()))
}

/// Channel action and decode under an intercept-and-resend attack, which
/// is not a Pauli channel: the attacked state is propagated as exact
/// amplitudes and Bob's receiver is sampled at the click level.
///
/// The phase-flip flag of a resent code has no Pauli bookkeeping to
/// inherit, so it is drawn fair — exact for Z-measured codes, whose
/// conjugate-basis readout is uniform, and of no consequence otherwise
/// because these runs abort at the testing stage.
fn amplitude_decode(
    code: &CodeState,
    channel: &ErrorDistribution,
    random_eve_basis: bool,
    variant: ProtocolVariant,
    rng: &mut RngStream,
) -> Option<(Basis, bool, bool)> {
    let mut state = TwoPhotonState::from_code(code);
    for photon in 0..2 {
        let eve_basis = if random_eve_basis && rng.bit() {
            Basis::X
        } else {
            Basis::Z
        };
        let (_, collapsed) = measure_photon(&state, photon, eve_basis, rng);
        state = collapsed;
    }
    let e = JointError::new(channel.sample(rng), channel.sample(rng));
    let state = state.apply_joint_error(e);
    let (record_basis, bit) = sample_decode(&state, variant, rng)?;
    let flag = rng.bit();
    Some((record_basis, bit, flag))
}

fn simulate_block(config: &ProtocolConfig, block: u64, collect: bool) -> Result<BlockOutcome> {
    let mut rng = RngStream::new(config.seed, block);
    let mix = config.effective_basis_mix();
    let start = block * BLOCK_SIZE;
    let count = BLOCK_SIZE.min(config.n_codes - start);
    let mut out = BlockOutcome::default();
    for offset in 0..count {
        let index = start + offset;
        let prep_basis = mix.sample(&mut rng);
        let alice_bit = rng.bit();
        let lost_first = rng.bernoulli(config.loss);
        let lost_second = rng.bernoulli(config.loss);
        if lost_first || lost_second {
            out.lost += 1;
            if collect {
                out.records.push(SiftRecord {
                    index,
                    prep_basis,
                    meas_basis: None,
                    alice_bit,
                    bob_bit: None,
                    accepted: false,
                });
            }
            continue;
        }
        let code = encode(LogicalState::new(prep_basis, alice_bit), config.variant)?;
        let decoded = match &config.attack {
            AttackModel::None => {
                abstract_decode(&code, &config.channel, None, config.variant, &mut rng)
            }
            AttackModel::CustomPauli { channel: eve } => {
                abstract_decode(&code, &config.channel, Some(eve), config.variant, &mut rng)
            }
            AttackModel::InterceptResendZ => {
                amplitude_decode(&code, &config.channel, false, config.variant, &mut rng)
            }
            AttackModel::InterceptResendBb84 => {
                amplitude_decode(&code, &config.channel, true, config.variant, &mut rng)
            }
        };
        match decoded {
            None => {
                if collect {
                    out.records.push(SiftRecord {
                        index,
                        prep_basis,
                        meas_basis: None,
                        alice_bit,
                        bob_bit: None,
                        accepted: false,
                    });
                }
            }
            Some((meas_basis, bob_bit, phase_flag)) => {
                out.parity_survived += 1;
                if meas_basis == prep_basis {
                    out.sifted += 1;
                    match prep_basis {
                        Basis::Z => out.z_bits.push((alice_bit, bob_bit, phase_flag)),
                        Basis::X => {
                            out.x_checked += 1;
                            out.x_errors += u64::from(bob_bit != alice_bit);
                        }
                        Basis::Y => {
                            out.y_checked += 1;
                            out.y_errors += u64::from(bob_bit != alice_bit);
                        }
                    }
                }
                if collect {
                    out.records.push(SiftRecord {
                        index,
                        prep_basis,
                        meas_basis: Some(meas_basis),
                        alice_bit,
                        bob_bit: Some(bob_bit),
                        accepted: true,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Executes the protocol end to end. See [`RunReport`] for which fields
/// are present in which outcome.
pub fn run(config: &ProtocolConfig) -> Result<RunReport> {
    run_inner(config, false).map(|(report, _)| report)
}

/// Like [`run`], additionally returning one record per transmitted code,
/// in transmission order.
pub fn run_with_records(config: &ProtocolConfig) -> Result<(RunReport, Vec<SiftRecord>)> {
    run_inner(config, true).map(|(report, records)| (report, records.unwrap_or_default()))
}

fn run_inner(
    config: &ProtocolConfig,
    collect: bool,
) -> Result<(RunReport, Option<Vec<SiftRecord>>)> {
    config.validate()?;

    let blocks: Vec<BlockOutcome> = (0..config.blocks())
        .into_par_iter()
        .map(|block| simulate_block(config, block, collect))
        .collect::<Result<Vec<_>>>()?;

    let mut tallies = CheckTallies::default();
    let mut counts = RunCounts {
        sent: config.n_codes,
        lost: 0,
        parity_survived: 0,
        sifted: 0,
        checked: 0,
    };
    let mut z_bits = Vec::new();
    let mut records = collect.then(Vec::new);
    for block in blocks {
        counts.lost += block.lost;
        counts.parity_survived += block.parity_survived;
        counts.sifted += block.sifted;
        tallies.x_checked += block.x_checked;
        tallies.x_errors += block.x_errors;
        tallies.y_checked += block.y_checked;
        tallies.y_errors += block.y_errors;
        z_bits.extend(block.z_bits);
        if let Some(all) = records.as_mut() {
            all.extend(block.records);
        }
    }

    // All conjugate-basis bits are announced; an equal number of key-basis
    // bits (or the configured fraction) is sacrificed for comparison,
    // chosen by a dedicated substream so the choice is worker-independent.
    let announced = tallies.x_checked + tallies.y_checked;
    let check_target = match config.checked_z_fraction {
        Some(fraction) => (fraction * z_bits.len() as f64).floor() as usize,
        None => announced as usize,
    }
    .min(z_bits.len());
    let mut order: Vec<usize> = (0..z_bits.len()).collect();
    let mut check_rng = RngStream::new(config.seed, CHECK_SELECTION_SUBSTREAM);
    check_rng.shuffle(&mut order);
    let mut is_check = vec![false; z_bits.len()];
    for &chosen in &order[..check_target] {
        is_check[chosen] = true;
    }
    for (&(alice, bob, _), &checked) in z_bits.iter().zip(&is_check) {
        if checked {
            tallies.z_checked += 1;
            tallies.z_errors += u64::from(alice != bob);
        }
    }
    counts.checked = tallies.z_checked + tallies.x_checked + tallies.y_checked;

    let rates = estimate_rates(&tallies, config.variant, config.confidence)?;
    let expected = expected_rates(&config.channel, config.variant);
    let abort = abort_decision(&rates, &expected, config.abort_tolerance);

    let mut report = RunReport {
        variant: config.variant,
        seed: config.seed,
        counts,
        rates,
        expected,
        abort,
        schedule: None,
        residual: None,
        strings: None,
        key_rate: None,
        final_key_length: None,
    };
    if abort {
        return Ok((report, records));
    }

    let working = working_distribution_estimate(&rates, config.variant);
    let schedule = match &config.schedule {
        SchedulePolicy::Fixed(schedule) => Some(schedule.clone()),
        SchedulePolicy::Search => match &working {
            Some(dist) => {
                schedule_search(dist, &config.search_bounds)?.map(|found| found.schedule)
            }
            None => None,
        },
    };
    let Some(schedule) = schedule else {
        return Ok((report, records));
    };

    let mut key = KeyBits::default();
    for (&(alice, bob, phase), &checked) in z_bits.iter().zip(&is_check) {
        if !checked {
            key.alice.push(alice);
            key.bob.push(bob);
            key.phase.push(phase);
        }
    }
    let mut string_rng = RngStream::new(config.seed, STRING_STEP_SUBSTREAM);
    let final_key = apply_schedule_strings(&key, &schedule, &mut string_rng)?;
    report.strings = Some(StringOutcome {
        surviving_bits: final_key.len() as u64,
        bit_error_rate: if final_key.is_empty() {
            0.0
        } else {
            final_key.bit_error_rate()
        },
        phase_flag_rate: if final_key.is_empty() {
            0.0
        } else {
            final_key.phase_flag_rate()
        },
    });

    if let Some(dist) = &working {
        let application = apply_schedule(dist, &schedule);
        let rate = css_key_rate(application.residual);
        report.residual = Some(application.residual);
        report.key_rate = Some(rate);
        report.final_key_length =
            Some((rate.max(0.0) * final_key.len() as f64).floor() as u64);
    }
    report.schedule = Some(schedule);

    Ok((report, records))
}
