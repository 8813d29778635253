//! Exact two-photon model of the optical source and receiver: pump
//! settings, polarizing-beam-splitter routing, detector click
//! distributions, the click-to-record rules, and an equivalence sweep
//! certifying that this amplitude-level path reproduces the record-level
//! decode semantics bit for bit.
//!
//! Geometry. The two photons of a code arrive on beams 1 and 2 and meet a
//! PBS that transmits `|0>` and reflects `|1>`. Equal polarizations put
//! one photon in each output beam (a coincidence); unequal polarizations
//! bunch both photons into a single output beam, which is exactly the
//! parity-check failure. Beam 1' ends at a rotated PBS measuring
//! `{|+>, |->}` (detectors D1/D2). Beam 2' passes a beam splitter that
//! routes the photon to one measurement arm: a Z arm (D3 = `|0>`,
//! D4 = `|1>`), an X arm (D5 = `|+>`, D6 = `|->`), and — in the six-state
//! receiver only — a Y arm (D7/D8). Because a Z measurement of beam 2'
//! reads out the logical X content and vice versa, the Z arm produces
//! X-basis records and the X arm Z-basis records.
//!
//! The amplitude arithmetic here is exact; nothing is sampled except in
//! [`sample_decode`], the per-code path the Monte Carlo engine uses when
//! an attack forces it below the error-class abstraction.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::code::{
    encode, parity_survives, residual_error, residual_flips, Basis, CodeState, JointError,
    LogicalState, ProtocolVariant,
};
use crate::error::{Error, Result};
use crate::pauli::{PauliOp, RngStream};

const NORM_TOLERANCE: f64 = 1e-12;

/// A pure state of the two photons over the polarization basis
/// `[|00>, |01>, |10>, |11>]` (beam 1 tensor beam 2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPhotonState {
    amps: [Complex64; 4],
}

impl TwoPhotonState {
    pub fn new(amps: [Complex64; 4]) -> Result<TwoPhotonState> {
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "two-photon amplitudes have squared norm {norm}, not 1"
            )));
        }
        Ok(TwoPhotonState { amps })
    }

    /// The carrier state of an encoded logical qubit.
    pub fn from_code(code: &CodeState) -> TwoPhotonState {
        TwoPhotonState {
            amps: code.amplitudes(),
        }
    }

    pub fn amplitudes(&self) -> [Complex64; 4] {
        self.amps
    }

    /// Applies one Pauli operator per photon, with exact phases.
    pub fn apply_joint_error(&self, e: JointError) -> TwoPhotonState {
        let mut out = [Complex64::ZERO; 4];
        for (idx, amp) in self.amps.iter().enumerate() {
            if *amp == Complex64::ZERO {
                continue;
            }
            let (b1, f1) = pauli_on_basis(e.first, idx >> 1);
            let (b2, f2) = pauli_on_basis(e.second, idx & 1);
            out[(b1 << 1) | b2] += amp * f1 * f2;
        }
        TwoPhotonState { amps: out }
    }
}

/// `op |b>` as (new basis index, phase factor).
fn pauli_on_basis(op: PauliOp, b: usize) -> (usize, Complex64) {
    match op {
        PauliOp::I => (b, Complex64::ONE),
        PauliOp::X => (b ^ 1, Complex64::ONE),
        PauliOp::Z => (b, if b == 1 { -Complex64::ONE } else { Complex64::ONE }),
        PauliOp::Y => (
            b ^ 1,
            if b == 0 {
                Complex64::I
            } else {
                -Complex64::I
            },
        ),
    }
}

/// Setting of the phase plate on the pump path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PumpPhase {
    Identity,
    PhaseFlip,
}

/// The two-photon emission for a source setting.
///
/// The rotator angle selects the emission among `|11>` (angle 0), `|00>`
/// (pi/2), and the balanced superposition (pi/4); the phase plate flips
/// the sign of the `|11>` component. Angles are accepted within 1e-9 of
/// the three supported settings. On settings where the `|11>` component
/// vanishes the phase plate contributes only an unobservable global
/// phase.
pub fn pump_state(u1_angle: f64, u2_setting: PumpPhase) -> Result<TwoPhotonState> {
    const ANGLE_TOLERANCE: f64 = 1e-9;
    let (a00, a11) = if u1_angle.abs() <= ANGLE_TOLERANCE {
        (0.0, 1.0)
    } else if (u1_angle - std::f64::consts::FRAC_PI_2).abs() <= ANGLE_TOLERANCE {
        (1.0, 0.0)
    } else if (u1_angle - std::f64::consts::FRAC_PI_4).abs() <= ANGLE_TOLERANCE {
        (
            std::f64::consts::FRAC_1_SQRT_2,
            std::f64::consts::FRAC_1_SQRT_2,
        )
    } else {
        return Err(Error::InvalidArgument(format!(
            "unsupported rotator angle {u1_angle}; the source produces 0, pi/4, and pi/2"
        )));
    };
    let sign = match u2_setting {
        PumpPhase::Identity => 1.0,
        PumpPhase::PhaseFlip => -1.0,
    };
    TwoPhotonState::new([
        Complex64::new(a00, 0.0),
        Complex64::ZERO,
        Complex64::ZERO,
        Complex64::new(sign * a11, 0.0),
    ])
}

/// The receiver's detectors. D1/D2 terminate beam 1'; the rest terminate
/// the measurement arms behind beam 2' (D7/D8 exist only in the six-state
/// receiver's added Y arm).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Detector {
    D1,
    D2,
    D3,
    D4,
    D5,
    D6,
    D7,
    D8,
}

impl Detector {
    pub fn name(self) -> &'static str {
        match self {
            Detector::D1 => "D1",
            Detector::D2 => "D2",
            Detector::D3 => "D3",
            Detector::D4 => "D4",
            Detector::D5 => "D5",
            Detector::D6 => "D6",
            Detector::D7 => "D7",
            Detector::D8 => "D8",
        }
    }

    fn on_first_beam(self) -> bool {
        matches!(self, Detector::D1 | Detector::D2)
    }
}

impl std::fmt::Display for Detector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// An unordered pair of fired detectors (the same detector twice when
/// both photons end on it).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClickOutcome {
    first: Detector,
    second: Detector,
}

impl ClickOutcome {
    pub fn new(a: Detector, b: Detector) -> ClickOutcome {
        if a <= b {
            ClickOutcome { first: a, second: b }
        } else {
            ClickOutcome { first: b, second: a }
        }
    }

    pub fn detectors(&self) -> (Detector, Detector) {
        (self.first, self.second)
    }

    /// True for the accepted two-fold pattern: exactly one click on beam
    /// 1' (D1/D2) and exactly one on a measurement arm.
    pub fn is_accepted(&self) -> bool {
        self.first.on_first_beam() && !self.second.on_first_beam()
    }
}

impl std::fmt::Display for ClickOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}+{}", self.first, self.second)
    }
}

/// Maps a click pattern to Bob's record, or `None` for a rejected
/// pattern.
///
/// The bit rules condense the per-outcome table: a Z-arm click fixes
/// the X-record bit by itself (D4 means 1); an X-arm click XORs the two
/// detector parities (D2 and D6 each flip); a Y-arm click does the same
/// with the outcome flipped once more — the receiver's conjugate-basis
/// correction for Y records.
pub fn click_to_record(outcome: ClickOutcome) -> Option<(Basis, bool)> {
    if !outcome.is_accepted() {
        return None;
    }
    let beam1_flip = outcome.first == Detector::D2;
    match outcome.second {
        Detector::D3 | Detector::D4 => Some((Basis::X, outcome.second == Detector::D4)),
        Detector::D5 | Detector::D6 => {
            Some((Basis::Z, beam1_flip ^ (outcome.second == Detector::D6)))
        }
        Detector::D7 | Detector::D8 => {
            Some((Basis::Y, !(beam1_flip ^ (outcome.second == Detector::D8))))
        }
        _ => unreachable!("accepted outcome has an arm detector second"),
    }
}

/// Where the PBS sends the two photons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PbsRouting {
    /// Amplitudes on `|0>_1' |0>_2'` and `|1>_1' |1>_2'`, unnormalized;
    /// their squared norm is the coincidence probability.
    pub coincidence: [Complex64; 2],
    /// Probability that both photons exit in beam 1' (the `|01>`
    /// component of the input).
    pub bunched_first: f64,
    /// Probability that both photons exit in beam 2' (the `|10>`
    /// component).
    pub bunched_second: f64,
}

impl PbsRouting {
    pub fn coincidence_probability(&self) -> f64 {
        self.coincidence.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn bunched_probability(&self) -> f64 {
        self.bunched_first + self.bunched_second
    }
}

/// Routes a two-photon state through the parity-check PBS.
pub fn pbs_route(state: &TwoPhotonState) -> PbsRouting {
    let a = state.amplitudes();
    PbsRouting {
        coincidence: [a[0], a[3]],
        bunched_first: a[1].norm_sqr(),
        bunched_second: a[2].norm_sqr(),
    }
}

/// Probability that a photon of Bob's beam-2' splitter enters the arm
/// producing records in `basis`. The four-state receiver splits evenly
/// between its two arms; the six-state receiver adds a Y arm and splits
/// three ways.
pub fn record_basis_probability(basis: Basis, variant: ProtocolVariant) -> f64 {
    match variant {
        ProtocolVariant::FourState => match basis {
            Basis::Z | Basis::X => 0.5,
            Basis::Y => 0.0,
        },
        ProtocolVariant::SixState => 1.0 / 3.0,
    }
}

/// Measurement kets of the arm that produces records in `basis`. The
/// conjugate pairing is deliberate: Z records come from the X arm and X
/// records from the Z arm.
fn arm_measure_kets(record_basis: Basis) -> [[Complex64; 2]; 2] {
    match record_basis {
        Basis::X => z_kets(),
        Basis::Z => x_kets(),
        Basis::Y => y_kets(),
    }
}

fn arm_detectors(record_basis: Basis) -> [Detector; 2] {
    match record_basis {
        Basis::X => [Detector::D3, Detector::D4],
        Basis::Z => [Detector::D5, Detector::D6],
        Basis::Y => [Detector::D7, Detector::D8],
    }
}

fn z_kets() -> [[Complex64; 2]; 2] {
    [
        [Complex64::ONE, Complex64::ZERO],
        [Complex64::ZERO, Complex64::ONE],
    ]
}

fn x_kets() -> [[Complex64; 2]; 2] {
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    [[h, h], [h, -h]]
}

fn y_kets() -> [[Complex64; 2]; 2] {
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let ih = Complex64::new(0.0, std::f64::consts::FRAC_1_SQRT_2);
    [[h, ih], [h, -ih]]
}

/// Single-qubit kets of a basis, shared with the attack models.
pub fn basis_kets(basis: Basis) -> [[Complex64; 2]; 2] {
    match basis {
        Basis::Z => z_kets(),
        Basis::X => x_kets(),
        Basis::Y => y_kets(),
    }
}

/// The exact probability of every click pattern for one input state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClickDistribution {
    masses: BTreeMap<ClickOutcome, f64>,
}

impl ClickDistribution {
    pub fn iter(&self) -> impl Iterator<Item = (ClickOutcome, f64)> + '_ {
        self.masses.iter().map(|(o, m)| (*o, *m))
    }

    pub fn probability(&self, outcome: ClickOutcome) -> f64 {
        self.masses.get(&outcome).copied().unwrap_or(0.0)
    }

    pub fn accepted_mass(&self) -> f64 {
        self.iter()
            .filter(|(o, _)| o.is_accepted())
            .map(|(_, m)| m)
            .sum()
    }

    pub fn rejected_mass(&self) -> f64 {
        self.iter()
            .filter(|(o, _)| !o.is_accepted())
            .map(|(_, m)| m)
            .sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.values().sum()
    }

    fn add(&mut self, outcome: ClickOutcome, mass: f64) {
        if mass > 0.0 {
            *self.masses.entry(outcome).or_insert(0.0) += mass;
        }
    }
}

/// Propagates a state through the receiver and returns the distribution
/// over click patterns, including the rejected (bunched) mass.
///
/// Coincidence events interfere exactly; the beam splitter behind beam 2'
/// is a classical arm router for a single photon, so arm choice enters as
/// a probability, not an amplitude. Bunched pairs carry orthogonal
/// polarizations (`|0>` and `|1>`), so the two photons route
/// independently with no interference term.
pub fn click_distribution(state: &TwoPhotonState, variant: ProtocolVariant) -> ClickDistribution {
    let routing = pbs_route(state);
    let mut dist = ClickDistribution::default();

    let beam1 = x_kets();
    let beam1_detectors = [Detector::D1, Detector::D2];
    for record_basis in variant.bases() {
        let arm_prob = record_basis_probability(*record_basis, variant);
        let kets = arm_measure_kets(*record_basis);
        let detectors = arm_detectors(*record_basis);
        for (d1, ket1) in beam1_detectors.iter().zip(&beam1) {
            for (d2, ket2) in detectors.iter().zip(&kets) {
                let amp: Complex64 = (0..2)
                    .map(|j| routing.coincidence[j] * ket1[j].conj() * ket2[j].conj())
                    .sum();
                dist.add(ClickOutcome::new(*d1, *d2), arm_prob * amp.norm_sqr());
            }
        }
    }

    // Both photons on beam 1': each meets the rotated PBS alone and lands
    // on D1 or D2 with probability 1/2 (|<+|0>|^2 = |<-|1>|^2 = 1/2).
    if routing.bunched_first > 0.0 {
        let m = routing.bunched_first;
        dist.add(ClickOutcome::new(Detector::D1, Detector::D1), m * 0.25);
        dist.add(ClickOutcome::new(Detector::D1, Detector::D2), m * 0.5);
        dist.add(ClickOutcome::new(Detector::D2, Detector::D2), m * 0.25);
    }

    // Both photons on beam 2', one in |0> and one in |1>: each is routed
    // to an arm and a detector independently.
    if routing.bunched_second > 0.0 {
        let m = routing.bunched_second;
        let photon_landing = |polarization: usize| -> Vec<(Detector, f64)> {
            let mut landing = Vec::new();
            for record_basis in variant.bases() {
                let arm_prob = record_basis_probability(*record_basis, variant);
                let kets = arm_measure_kets(*record_basis);
                let detectors = arm_detectors(*record_basis);
                for (d, ket) in detectors.iter().zip(&kets) {
                    let p = ket[polarization].norm_sqr();
                    if p > 0.0 {
                        landing.push((*d, arm_prob * p));
                    }
                }
            }
            landing
        };
        for (d_a, p_a) in photon_landing(1) {
            for (d_b, p_b) in photon_landing(0) {
                dist.add(ClickOutcome::new(d_a, d_b), m * p_a * p_b);
            }
        }
    }

    dist
}

/// Samples one receiver outcome for a state: `None` when the pair is
/// rejected (bunched), otherwise the record basis and bit.
///
/// This is the Monte Carlo engine's amplitude-level path. It draws the
/// coincidence/bunched split, the arm, and the joint click from the same
/// probabilities as [`click_distribution`] without building the full map.
pub fn sample_decode(
    state: &TwoPhotonState,
    variant: ProtocolVariant,
    rng: &mut RngStream,
) -> Option<(Basis, bool)> {
    let routing = pbs_route(state);
    let coincidence = routing.coincidence_probability();
    if !rng.bernoulli(coincidence) {
        return None;
    }

    let bases = variant.bases();
    let mut pick = rng.uniform();
    let mut record_basis = *bases.last().expect("variant has bases");
    for basis in bases {
        let p = record_basis_probability(*basis, variant);
        if pick < p {
            record_basis = *basis;
            break;
        }
        pick -= p;
    }

    let beam1 = x_kets();
    let kets = arm_measure_kets(record_basis);
    let mut joint = [[0.0f64; 2]; 2];
    for (i, ket1) in beam1.iter().enumerate() {
        for (j, ket2) in kets.iter().enumerate() {
            let amp: Complex64 = (0..2)
                .map(|k| routing.coincidence[k] * ket1[k].conj() * ket2[k].conj())
                .sum();
            joint[i][j] = amp.norm_sqr() / coincidence;
        }
    }
    let mut pick = rng.uniform();
    let mut chosen = (1, 1);
    'outer: for (i, row) in joint.iter().enumerate() {
        for (j, p) in row.iter().enumerate() {
            if pick < *p {
                chosen = (i, j);
                break 'outer;
            }
            pick -= p;
        }
    }
    let beam1_detector = [Detector::D1, Detector::D2][chosen.0];
    let arm_detector = arm_detectors(record_basis)[chosen.1];
    click_to_record(ClickOutcome::new(beam1_detector, arm_detector))
}

/// Measures one photon of the pair in a basis: returns the outcome and
/// the collapsed, renormalized state — which is exactly the state an
/// intercept-and-resend eavesdropper forwards.
pub fn measure_photon(
    state: &TwoPhotonState,
    photon: usize,
    basis: Basis,
    rng: &mut RngStream,
) -> (bool, TwoPhotonState) {
    assert!(photon < 2, "a code has two photons");
    let kets = basis_kets(basis);
    let amps = state.amplitudes();
    let contract = |ket: &[Complex64; 2]| -> [Complex64; 2] {
        let mut rest = [Complex64::ZERO; 2];
        for (other, slot) in rest.iter_mut().enumerate() {
            for b in 0..2 {
                let idx = if photon == 0 { (b << 1) | other } else { (other << 1) | b };
                *slot += ket[b].conj() * amps[idx];
            }
        }
        rest
    };
    let rest0 = contract(&kets[0]);
    let p0: f64 = rest0.iter().map(|a| a.norm_sqr()).sum();
    let outcome = !rng.bernoulli(p0);
    let rest = if outcome { contract(&kets[1]) } else { rest0 };
    let norm = if outcome { (1.0 - p0).sqrt() } else { p0.sqrt() };
    let ket = kets[outcome as usize];
    let mut out = [Complex64::ZERO; 4];
    for b in 0..2 {
        for (other, r) in rest.iter().enumerate() {
            let idx = if photon == 0 { (b << 1) | other } else { (other << 1) | b };
            out[idx] = ket[b] * r / norm;
        }
    }
    (
        outcome,
        TwoPhotonState { amps: out },
    )
}

/// Outcome masses aggregated into comparison cells: the rejected mass
/// plus one cell per (record basis, bit).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutcomeCells {
    pub rejected: f64,
    pub accepted: BTreeMap<(Basis, bool), f64>,
}

impl OutcomeCells {
    fn cell(&self, basis: Basis, bit: bool) -> f64 {
        self.accepted.get(&(basis, bit)).copied().unwrap_or(0.0)
    }
}

/// Cells of the optics path: propagate amplitudes, collect clicks, apply
/// the record rules.
pub fn optics_cells(code: &CodeState, e: JointError, variant: ProtocolVariant) -> OutcomeCells {
    let state = TwoPhotonState::from_code(code).apply_joint_error(e);
    let mut cells = OutcomeCells::default();
    for (outcome, mass) in click_distribution(&state, variant).iter() {
        match click_to_record(outcome) {
            Some((basis, bit)) => *cells.accepted.entry((basis, bit)).or_insert(0.0) += mass,
            None => cells.rejected += mass,
        }
    }
    cells
}

/// Cells of the record-level path: parity predicate, residual-error
/// table, and the per-variant arm probabilities.
pub fn abstract_cells(code: &CodeState, e: JointError, variant: ProtocolVariant) -> OutcomeCells {
    let mut cells = OutcomeCells::default();
    if !parity_survives(e) {
        cells.rejected = 1.0;
        return cells;
    }
    let residual = residual_error(e).expect("surviving error has a residual");
    for basis in variant.bases() {
        let w = record_basis_probability(*basis, variant);
        if *basis == code.basis() {
            let bit = code.bit() ^ residual_flips(residual, *basis);
            *cells.accepted.entry((*basis, bit)).or_insert(0.0) += w;
        } else {
            *cells.accepted.entry((*basis, false)).or_insert(0.0) += w / 2.0;
            *cells.accepted.entry((*basis, true)).or_insert(0.0) += w / 2.0;
        }
    }
    cells
}

/// One comparison cell of the equivalence sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceRow {
    pub code_state: String,
    pub e1: String,
    pub e2: String,
    pub outcome: String,
    pub p_optics: f64,
    pub p_abstract: f64,
    pub deviation: f64,
}

/// The full optics-vs-abstract comparison for one protocol variant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub variant: ProtocolVariant,
    pub max_deviation: f64,
    pub rows: Vec<EquivalenceRow>,
}

/// Sweeps every code state of the variant against all sixteen joint
/// Pauli errors and compares the two paths cell by cell.
pub fn equivalence_report(variant: ProtocolVariant) -> EquivalenceReport {
    let mut rows = Vec::new();
    let mut max_deviation = 0.0f64;
    for basis in variant.bases() {
        for bit in [false, true] {
            let code = encode(LogicalState::new(*basis, bit), variant)
                .expect("variant encodes its own bases");
            let label = format!("{}{}", basis.name(), u8::from(bit));
            for e in JointError::all() {
                let optics = optics_cells(&code, e, variant);
                let abstracted = abstract_cells(&code, e, variant);
                let mut push = |outcome: String, p_optics: f64, p_abstract: f64| {
                    let deviation = (p_optics - p_abstract).abs();
                    max_deviation = max_deviation.max(deviation);
                    rows.push(EquivalenceRow {
                        code_state: label.clone(),
                        e1: e.first.name().to_string(),
                        e2: e.second.name().to_string(),
                        outcome,
                        p_optics,
                        p_abstract,
                        deviation,
                    });
                };
                push("rejected".into(), optics.rejected, abstracted.rejected);
                for cell_basis in variant.bases() {
                    for cell_bit in [false, true] {
                        push(
                            format!("{}{}", cell_basis.name(), u8::from(cell_bit)),
                            optics.cell(*cell_basis, cell_bit),
                            abstracted.cell(*cell_basis, cell_bit),
                        );
                    }
                }
            }
        }
    }
    EquivalenceReport {
        variant,
        max_deviation,
        rows,
    }
}
