//! Complex-amplitude model of the interferometric train.
//!
//! Alice's state preparation is a Y-branch feeding a phase-modulated arm and
//! a 3 dB coupler (together a variable ratio coupler), followed by her
//! asymmetric Mach-Zehnder (AMZ). Bob's receiver is a second AMZ with the
//! same delay, whose two output ports are watched in three time slots.
//!
//! Every 2x2 coupler uses the matrix `[[√t, i√(1−t)], [i√(1−t), √t]]`.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Probability amplitude of one (time bin, spatial port) mode.
pub type Amplitude = Complex64;

/// Slot spacing set by the 5 ns interferometer delay.
pub const DEFAULT_BIN_SPACING_NS: f64 = 5.0;

/// Tolerance used when checking that a state's norm does not exceed one.
pub const NORM_TOLERANCE: f64 = 1e-12;

/// Long-arm phase of Alice's AMZ at its temperature set-point.
///
/// The fixed coupler convention leaves a quarter-wave phase between the two
/// bins leaving Alice's device; the AMZ is held at this bias so that the
/// modulator settings `0` and `π` prepare the `|s⟩ ± |l⟩` pair.
pub const ALICE_AMZ_BIAS_RAD: f64 = -FRAC_PI_2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error("coupler transmittance {0} is outside [0, 1]")]
    Transmittance(f64),
    #[error("phase {0} is not finite")]
    NonFinitePhase(f64),
    #[error("invalid interferometer parameter `{field}`: {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error("invalid time-bin state: {0}")]
    InvalidState(String),
    #[error(
        "state has {bins} bin(s) on {ports} port(s); an interferometer with a delay of {delay} bin(s) expects {} bins on 1 port",
        delay + 1
    )]
    Structure {
        bins: usize,
        ports: usize,
        delay: usize,
    },
    #[error("visibility {0} is outside [0, 1]")]
    Visibility(f64),
}

/// Measurement basis: `Z` is the arrival-time basis, `X` the phase basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    pub const ALL: [Basis; 2] = [Basis::Z, Basis::X];

    pub fn index(self) -> usize {
        match self {
            Basis::Z => 0,
            Basis::X => 1,
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

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bit {
    Zero,
    One,
}

impl Bit {
    pub fn as_u8(self) -> u8 {
        match self {
            Bit::Zero => 0,
            Bit::One => 1,
        }
    }
}

impl From<bool> for Bit {
    fn from(b: bool) -> Self {
        if b {
            Bit::One
        } else {
            Bit::Zero
        }
    }
}

/// One of the four BB84 states.
///
/// `(Z, 0)` is `|s⟩`, `(Z, 1)` is `|l⟩`, `(X, 0)` is `(|s⟩+|l⟩)/√2` and
/// `(X, 1)` is `(|s⟩−|l⟩)/√2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CanonicalState {
    pub basis: Basis,
    pub bit: Bit,
}

impl CanonicalState {
    pub const ALL: [CanonicalState; 4] = [
        CanonicalState::new(Basis::Z, Bit::Zero),
        CanonicalState::new(Basis::Z, Bit::One),
        CanonicalState::new(Basis::X, Bit::Zero),
        CanonicalState::new(Basis::X, Bit::One),
    ];

    pub const fn new(basis: Basis, bit: Bit) -> Self {
        CanonicalState { basis, bit }
    }

    /// Dense index in `0..4`, matching the order of [`CanonicalState::ALL`].
    pub fn index(self) -> usize {
        self.basis.index() * 2 + self.bit.as_u8() as usize
    }

    /// Short text label: `s`, `l`, `s+l` or `s-l`.
    pub fn label(self) -> &'static str {
        match (self.basis, self.bit) {
            (Basis::Z, Bit::Zero) => "s",
            (Basis::Z, Bit::One) => "l",
            (Basis::X, Bit::Zero) => "s+l",
            (Basis::X, Bit::One) => "s-l",
        }
    }

    /// Normalized (early, late) amplitudes.
    pub fn amplitudes(self) -> (Amplitude, Amplitude) {
        let h = Amplitude::new(FRAC_1_SQRT_2, 0.0);
        match (self.basis, self.bit) {
            (Basis::Z, Bit::Zero) => (Amplitude::new(1.0, 0.0), Amplitude::new(0.0, 0.0)),
            (Basis::Z, Bit::One) => (Amplitude::new(0.0, 0.0), Amplitude::new(1.0, 0.0)),
            (Basis::X, Bit::Zero) => (h, h),
            (Basis::X, Bit::One) => (h, -h),
        }
    }
}

/// Photon wavefunction over time bins and spatial ports.
///
/// Amplitudes are stored bin-major. Any norm deficit below one is loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeBinState {
    amps: Vec<Amplitude>,
    ports: usize,
    bin_spacing_ns: f64,
}

impl TimeBinState {
    /// Builds a state from per-bin port vectors.
    pub fn new(bins: Vec<Vec<Amplitude>>, bin_spacing_ns: f64) -> Result<Self, OpticsError> {
        let ports = bins.first().map_or(0, Vec::len);
        if bins.is_empty() || ports == 0 {
            return Err(OpticsError::InvalidState("no bins or no ports".into()));
        }
        if bins.iter().any(|b| b.len() != ports) {
            return Err(OpticsError::InvalidState("ragged port vectors".into()));
        }
        let state = TimeBinState {
            amps: bins.into_iter().flatten().collect(),
            ports,
            bin_spacing_ns,
        };
        state.validate()?;
        Ok(state)
    }

    /// Single-port link state with amplitude in the first and last of
    /// `delay_bins + 1` bins.
    pub fn two_bin(early: Amplitude, late: Amplitude, delay_bins: usize) -> Self {
        let mut amps = vec![Amplitude::new(0.0, 0.0); delay_bins + 1];
        amps[0] = early;
        amps[delay_bins] = late;
        TimeBinState {
            amps,
            ports: 1,
            bin_spacing_ns: DEFAULT_BIN_SPACING_NS,
        }
    }

    pub fn canonical(state: CanonicalState, delay_bins: usize) -> Self {
        let (e, l) = state.amplitudes();
        Self::two_bin(e, l, delay_bins)
    }

    /// All-zero link state: nothing was sent.
    pub fn vacuum(delay_bins: usize) -> Self {
        let zero = Amplitude::new(0.0, 0.0);
        Self::two_bin(zero, zero, delay_bins)
    }

    fn validate(&self) -> Result<(), OpticsError> {
        if !(self.bin_spacing_ns > 0.0 && self.bin_spacing_ns.is_finite()) {
            return Err(OpticsError::InvalidState(format!(
                "bin spacing {} ns must be positive",
                self.bin_spacing_ns
            )));
        }
        if self
            .amps
            .iter()
            .any(|a| !a.re.is_finite() || !a.im.is_finite())
        {
            return Err(OpticsError::InvalidState("non-finite amplitude".into()));
        }
        let n = self.norm_sqr();
        if n > 1.0 + NORM_TOLERANCE {
            return Err(OpticsError::InvalidState(format!("norm² {n} exceeds 1")));
        }
        Ok(())
    }

    pub fn with_bin_spacing(mut self, ns: f64) -> Result<Self, OpticsError> {
        self.bin_spacing_ns = ns;
        self.validate()?;
        Ok(self)
    }

    pub fn bin_count(&self) -> usize {
        self.amps.len() / self.ports
    }

    pub fn port_count(&self) -> usize {
        self.ports
    }

    pub fn bin_spacing_ns(&self) -> f64 {
        self.bin_spacing_ns
    }

    pub fn amplitude(&self, bin: usize, port: usize) -> Amplitude {
        self.amps[bin * self.ports + port]
    }

    pub fn amplitudes(&self) -> &[Amplitude] {
        &self.amps
    }

    /// Total probability mass; one minus this is the loss so far.
    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_vacuum(&self) -> bool {
        self.amps.iter().all(|a| a.norm_sqr() == 0.0)
    }

    /// Multiplies every amplitude by `factor` (a field transmission).
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.amps.iter_mut().for_each(|a| *a *= factor);
        out
    }

    pub fn with_global_phase(&self, theta: f64) -> Self {
        let rot = Amplitude::from_polar(1.0, theta);
        let mut out = self.clone();
        out.amps.iter_mut().for_each(|a| *a *= rot);
        out
    }

    /// Applies `e^{iθ}` to every amplitude of the last bin.
    pub fn with_late_phase(&self, theta: f64) -> Self {
        let rot = Amplitude::from_polar(1.0, theta);
        let mut out = self.clone();
        let start = out.amps.len() - out.ports;
        out.amps[start..].iter_mut().for_each(|a| *a *= rot);
        out
    }

    /// Per-bin intensity summed over ports.
    pub fn bin_intensities(&self) -> Vec<f64> {
        self.amps
            .chunks(self.ports)
            .map(|c| c.iter().map(|a| a.norm_sqr()).sum())
            .collect()
    }

    /// `|⟨self|other⟩|²` over single-port states of equal shape.
    pub fn fidelity(&self, other: &TimeBinState) -> f64 {
        let overlap: Amplitude = self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum();
        overlap.norm_sqr()
    }
}

/// Asymmetric Mach-Zehnder parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmzSpec {
    /// Arm delay in units of the slot spacing.
    pub delay_bins: usize,
    /// Device loss on top of the intrinsic 3 dB coupler loss.
    pub excess_loss_db: f64,
    pub phase_offset_rad: f64,
    /// Fringe visibility; scales the interference cross-term.
    pub visibility: f64,
    /// Standard deviation of per-pulse Gaussian phase noise.
    pub phase_jitter_rad: f64,
}

impl Default for AmzSpec {
    fn default() -> Self {
        AmzSpec {
            delay_bins: 1,
            excess_loss_db: 2.0,
            phase_offset_rad: 0.0,
            visibility: 1.0,
            phase_jitter_rad: 0.0,
        }
    }
}

impl AmzSpec {
    /// Lossless, perfectly visible, zero-phase interferometer.
    pub fn ideal() -> Self {
        AmzSpec {
            excess_loss_db: 0.0,
            ..AmzSpec::default()
        }
    }

    pub fn validate(&self) -> Result<(), OpticsError> {
        let bad = |field, reason: &str| {
            Err(OpticsError::InvalidSpec {
                field,
                reason: reason.to_string(),
            })
        };
        if self.delay_bins < 1 {
            return bad("delay_bins", "must be at least 1");
        }
        if !(self.excess_loss_db >= 0.0 && self.excess_loss_db.is_finite()) {
            return bad("excess_loss_db", "must be a finite value >= 0");
        }
        if !self.phase_offset_rad.is_finite() {
            return bad("phase_offset_rad", "must be finite");
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return bad("visibility", "must lie in [0, 1]");
        }
        if !(self.phase_jitter_rad >= 0.0 && self.phase_jitter_rad.is_finite()) {
            return bad("phase_jitter_rad", "must be a finite value >= 0");
        }
        Ok(())
    }

    /// Power transmission of the excess loss alone.
    pub fn excess_transmittance(&self) -> f64 {
        10f64.powf(-self.excess_loss_db / 10.0)
    }
}

/// Detection slot: short-short, mixed, long-long.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Slot {
    S1,
    S2,
    S3,
}

impl Slot {
    pub const ALL: [Slot; 3] = [Slot::S1, Slot::S2, Slot::S3];

    pub fn index(self) -> usize {
        match self {
            Slot::S1 => 0,
            Slot::S2 => 1,
            Slot::S3 => 2,
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.index() + 1)
    }
}

/// Output port of Bob's AMZ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Port {
    D0,
    D1,
}

impl Port {
    pub const ALL: [Port; 2] = [Port::D0, Port::D1];

    pub fn index(self) -> usize {
        match self {
            Port::D0 => 0,
            Port::D1 => 1,
        }
    }

    pub fn other(self) -> Port {
        match self {
            Port::D0 => Port::D1,
            Port::D1 => Port::D0,
        }
    }
}

impl fmt::Display for Port {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "D{}", self.index())
    }
}

/// Arrival probabilities over three slots and two ports, plus everything
/// that never reaches a gated detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotPortDistribution {
    pub p: [[f64; 2]; 3],
    pub p_lost: f64,
}

impl SlotPortDistribution {
    /// Everything lost; what a vacuum input produces.
    pub fn empty() -> Self {
        SlotPortDistribution {
            p: [[0.0; 2]; 3],
            p_lost: 1.0,
        }
    }

    pub fn get(&self, slot: Slot, port: Port) -> f64 {
        self.p[slot.index()][port.index()]
    }

    pub fn slot_mass(&self, slot: Slot) -> f64 {
        self.p[slot.index()].iter().sum()
    }

    pub fn detected_mass(&self) -> f64 {
        self.p.iter().flatten().sum()
    }

    pub fn total(&self) -> f64 {
        self.detected_mass() + self.p_lost
    }

    /// `(slot, port, probability)` in slot-major order.
    pub fn cells(&self) -> impl Iterator<Item = (Slot, Port, f64)> + '_ {
        Slot::ALL
            .into_iter()
            .flat_map(move |s| Port::ALL.into_iter().map(move |p| (s, p, self.get(s, p))))
    }
}

/// 2x2 coupler with power transmittance `t` on the bar path.
pub fn apply_coupler(
    a: Amplitude,
    b: Amplitude,
    t: f64,
) -> Result<(Amplitude, Amplitude), OpticsError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(OpticsError::Transmittance(t));
    }
    let bar = t.sqrt();
    let cross = Amplitude::new(0.0, (1.0 - t).sqrt());
    Ok((bar * a + cross * b, cross * a + bar * b))
}

fn coupler_50(a: Amplitude, b: Amplitude) -> (Amplitude, Amplitude) {
    let h = FRAC_1_SQRT_2;
    let i = Amplitude::i();
    (h * (a + i * b), h * (i * a + b))
}

/// Y-branch split, `e^{iφ}` on the modulated arm, then a 3 dB coupler.
///
/// Returns the amplitudes entering the (short, long) arms of Alice's AMZ.
pub fn variable_coupler(phi: f64) -> Result<(Amplitude, Amplitude), OpticsError> {
    if !phi.is_finite() {
        return Err(OpticsError::NonFinitePhase(phi));
    }
    let unmodulated = Amplitude::new(FRAC_1_SQRT_2, 0.0);
    let modulated = Amplitude::from_polar(FRAC_1_SQRT_2, phi);
    apply_coupler(unmodulated, modulated, 0.5)
}

/// Modulator phase for each of the four states.
pub fn calibrate_pm() -> [(CanonicalState, f64); 4] {
    CanonicalState::ALL.map(|s| {
        let phi = match (s.basis, s.bit) {
            (Basis::Z, Bit::Zero) => -FRAC_PI_2,
            (Basis::Z, Bit::One) => FRAC_PI_2,
            (Basis::X, Bit::Zero) => 0.0,
            (Basis::X, Bit::One) => PI,
        };
        (s, phi)
    })
}

pub fn calibrated_phase(state: CanonicalState) -> f64 {
    calibrate_pm()[state.index()].1
}

/// Output of Alice's device-level model for one modulator setting.
#[derive(Debug, Clone, PartialEq)]
pub struct AliceDeviceOutput {
    /// What leaves on the fiber link (unnormalized).
    pub link: TimeBinState,
    /// What leaves through the unused coupler port.
    pub monitor: TimeBinState,
}

/// Variable coupler, AMZ arms (long arm biased and delayed), output coupler.
pub fn alice_device(phi: f64, spec: &AmzSpec) -> Result<AliceDeviceOutput, OpticsError> {
    spec.validate()?;
    let (short, long) = variable_coupler(phi)?;
    let long = long * Amplitude::from_polar(1.0, ALICE_AMZ_BIAS_RAD + spec.phase_offset_rad);
    let zero = Amplitude::new(0.0, 0.0);
    let field = spec.excess_transmittance().sqrt();
    // Early bin only sees the short arm, late bin only the long arm.
    let (early_link, early_mon) = coupler_50(short, zero);
    let (late_link, late_mon) = coupler_50(zero, long);
    Ok(AliceDeviceOutput {
        link: TimeBinState::two_bin(early_link * field, late_link * field, spec.delay_bins),
        monitor: TimeBinState::two_bin(early_mon * field, late_mon * field, spec.delay_bins),
    })
}

/// Normalized link state for `state` together with Alice's device
/// transmittance (excess loss times the half lost to the monitor port).
///
/// The AMZ phase offset appears as a phase on the late bin.
pub fn alice_prepare(state: CanonicalState, spec: &AmzSpec) -> (TimeBinState, f64) {
    let link =
        TimeBinState::canonical(state, spec.delay_bins).with_late_phase(spec.phase_offset_rad);
    (link, 0.5 * spec.excess_transmittance())
}

/// Bob's AMZ: 3 dB split, long arm delayed by `delay_bins` and phase shifted,
/// 3 dB recombination. Arrival times `0`, `delay` and `2·delay` are the three
/// slots; anything else, plus excess loss and input deficit, is `p_lost`.
///
/// Finite visibility mixes the coherent and incoherent sums, which scales the
/// cross-term between the two paths reaching a cell.
pub fn bob_transform(
    state: &TimeBinState,
    spec: &AmzSpec,
) -> Result<SlotPortDistribution, OpticsError> {
    spec.validate()?;
    bob_transform_unchecked(state, spec)
}

pub(crate) fn bob_transform_unchecked(
    state: &TimeBinState,
    spec: &AmzSpec,
) -> Result<SlotPortDistribution, OpticsError> {
    let delay = spec.delay_bins;
    if state.port_count() != 1 || state.bin_count() != delay + 1 {
        return Err(OpticsError::Structure {
            bins: state.bin_count(),
            ports: state.port_count(),
            delay,
        });
    }
    let zero = Amplitude::new(0.0, 0.0);
    let arm_phase = Amplitude::from_polar(1.0, spec.phase_offset_rad);
    let out_len = 2 * delay + 1;
    let mut short = vec![zero; out_len];
    let mut long = vec![zero; out_len];
    for (j, &a) in state.amplitudes().iter().enumerate() {
        let (s, l) = coupler_50(a, zero);
        short[j] = s;
        long[j + delay] = l * arm_phase;
    }
    let v = spec.visibility;
    let loss = spec.excess_transmittance();
    let mut p = [[0.0; 2]; 3];
    for (slot, time) in [0, delay, 2 * delay].into_iter().enumerate() {
        let (coh0, coh1) = coupler_50(short[time], long[time]);
        let (s0, s1) = coupler_50(short[time], zero);
        let (l0, l1) = coupler_50(zero, long[time]);
        let inc0 = s0.norm_sqr() + l0.norm_sqr();
        let inc1 = s1.norm_sqr() + l1.norm_sqr();
        p[slot][0] = loss * (v * coh0.norm_sqr() + (1.0 - v) * inc0);
        p[slot][1] = loss * (v * coh1.norm_sqr() + (1.0 - v) * inc1);
    }
    let detected: f64 = p.iter().flatten().sum();
    Ok(SlotPortDistribution {
        p,
        p_lost: 1.0 - detected,
    })
}

/// `10·log10((1+V)/(1−V))`; infinite at `V = 1`.
pub fn extinction_ratio_db(visibility: f64) -> Result<f64, OpticsError> {
    if !(0.0..=1.0).contains(&visibility) {
        return Err(OpticsError::Visibility(visibility));
    }
    if visibility == 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * ((1.0 + visibility) / (1.0 - visibility)).log10())
}

/// Inverse of [`extinction_ratio_db`].
pub fn visibility_from_extinction_db(db: f64) -> Result<f64, OpticsError> {
    if db.is_nan() || db < 0.0 {
        return Err(OpticsError::InvalidSpec {
            field: "extinction_db",
            reason: format!("{db} must be >= 0"),
        });
    }
    if db == f64::INFINITY {
        return Ok(1.0);
    }
    let r = 10f64.powf(db / 10.0);
    Ok((r - 1.0) / (r + 1.0))
}
