//! Radar waveform and jamming synthesis at complex baseband.
//!
//! The radar transmits a linear-FM chirp; the jammer emits one of three
//! waveforms: aiming noise jamming (AJ), a single delayed/Doppler-shifted
//! chirp replica (RFTJ), or a cluster of such replicas (RDFTJ). Everything
//! is synthesized at complex baseband: the RF carrier (1 GHz nominal) is
//! carried as metadata only, and jammer frequencies are expressed as
//! offsets from the radar carrier.
//!
//! All generators are pure functions of (parameters, seed); dataset
//! planning derives one child seed per scene so fan-out order never
//! changes the output.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::fft::{fft_padded, ifft, next_pow2};
use crate::seeds;
use crate::{Error, Result};

/// Radar transmit parameters (chirp + receive window).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarParams {
    /// RF carrier, metadata only (synthesis is at baseband).
    pub carrier_hz: f64,
    /// Chirp sweep bandwidth B.
    pub bandwidth_hz: f64,
    /// Pulse width T.
    pub pulse_width_s: f64,
    /// Pulse repetition interval; one PRI is the receive window.
    pub pri_s: f64,
    /// Complex baseband sample rate.
    pub sample_rate_hz: f64,
    /// Receiver SNR applied when a scene is assembled.
    pub snr_db: f64,
}

impl Default for RadarParams {
    /// 1 GHz carrier, 28 MHz chirp over 10 us, 50 us PRI, 100 MHz sampling, 10 dB SNR.
    fn default() -> Self {
        RadarParams {
            carrier_hz: 1.0e9,
            bandwidth_hz: 28.0e6,
            pulse_width_s: 10.0e-6,
            pri_s: 50.0e-6,
            sample_rate_hz: 100.0e6,
            snr_db: 10.0,
        }
    }
}

impl RadarParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::InvalidParams(String::from("bandwidth must be > 0")));
        }
        if self.sample_rate_hz < self.bandwidth_hz {
            return Err(Error::InvalidParams(format!(
                "sample rate {} below complex Nyquist for bandwidth {}",
                self.sample_rate_hz, self.bandwidth_hz
            )));
        }
        if !(self.pulse_width_s > 0.0) || self.pulse_samples() == 0 {
            return Err(Error::InvalidParams(String::from("nonpositive pulse duration")));
        }
        if self.pulse_width_s >= self.pri_s {
            return Err(Error::InvalidParams(String::from("pulse width must be < PRI")));
        }
        Ok(())
    }

    /// Chirp rate mu = B / T.
    pub fn chirp_rate(&self) -> f64 {
        self.bandwidth_hz / self.pulse_width_s
    }

    pub fn pulse_samples(&self) -> usize {
        (self.pulse_width_s * self.sample_rate_hz).round() as usize
    }

    /// Samples in one receive window (one PRI).
    pub fn window_samples(&self) -> usize {
        (self.pri_s * self.sample_rate_hz).round() as usize
    }
}

/// Uniformly sampled complex-baseband signal.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSeries {
    pub samples: Vec<Complex64>,
    pub sample_rate_hz: f64,
    /// Time of the first sample.
    pub t0_s: f64,
    /// RF carrier this baseband signal rides on (metadata).
    pub carrier_hz: f64,
}

impl ComplexSeries {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean power over samples with nonzero magnitude (the pulse support).
    /// Returns 0 for an all-zero series.
    pub fn support_power(&self) -> f64 {
        let mut acc = 0.0;
        let mut count = 0usize;
        for s in &self.samples {
            let p = s.norm_sqr();
            if p > 0.0 {
                acc += p;
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            acc / count as f64
        }
    }

    /// Mean power over the whole series.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }
}

/// The three jamming classes. Discriminants double as class labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JammingKind {
    /// Aiming (noise) jamming.
    Aj = 0,
    /// Range false-target jamming: one delayed replica.
    Rftj = 1,
    /// Range dense false-target jamming: a cluster of replicas.
    Rdftj = 2,
}

impl JammingKind {
    pub const ALL: [JammingKind; 3] = [JammingKind::Aj, JammingKind::Rftj, JammingKind::Rdftj];

    pub fn label(self) -> usize {
        self as usize
    }

    pub fn from_label(label: usize) -> Result<Self> {
        match label {
            0 => Ok(JammingKind::Aj),
            1 => Ok(JammingKind::Rftj),
            2 => Ok(JammingKind::Rdftj),
            other => Err(Error::InvalidLabel(other)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            JammingKind::Aj => "AJ",
            JammingKind::Rftj => "RFTJ",
            JammingKind::Rdftj => "RDFTJ",
        }
    }
}

/// One false target of an RDFTJ cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FalseTarget {
    pub delay_s: f64,
    pub doppler_hz: f64,
    /// Relative weight on top of the common JNR-derived amplitude.
    pub amplitude: f64,
}

/// Full description of one jamming emission.
#[derive(Debug, Clone, PartialEq)]
pub struct JammingSpec {
    pub kind: JammingKind,
    /// Jamming power in dB relative to the unit-power radar pulse.
    pub jnr_db: f64,
    /// RF center of the jamming (baseband offset = jam_center_hz - carrier).
    pub jam_center_hz: f64,
    /// Noise bandwidth; AJ only.
    pub jam_bandwidth_hz: f64,
    /// Replica delay; RFTJ only.
    pub delay_s: f64,
    /// Replica Doppler shift; RFTJ only.
    pub doppler_hz: f64,
    /// False-target cluster; RDFTJ only.
    pub false_targets: Vec<FalseTarget>,
    /// Jammer bearing, metadata only.
    pub angle_deg: f64,
}

impl JammingSpec {
    pub fn aj(jnr_db: f64, jam_center_hz: f64, jam_bandwidth_hz: f64) -> Self {
        JammingSpec {
            kind: JammingKind::Aj,
            jnr_db,
            jam_center_hz,
            jam_bandwidth_hz,
            delay_s: 0.0,
            doppler_hz: 0.0,
            false_targets: Vec::new(),
            angle_deg: 2.0,
        }
    }

    pub fn rftj(jnr_db: f64, carrier_hz: f64, delay_s: f64, doppler_hz: f64) -> Self {
        JammingSpec {
            kind: JammingKind::Rftj,
            jnr_db,
            jam_center_hz: carrier_hz,
            jam_bandwidth_hz: 0.0,
            delay_s,
            doppler_hz,
            false_targets: Vec::new(),
            angle_deg: 2.0,
        }
    }

    pub fn rdftj(jnr_db: f64, carrier_hz: f64, false_targets: Vec<FalseTarget>) -> Self {
        JammingSpec {
            kind: JammingKind::Rdftj,
            jnr_db,
            jam_center_hz: carrier_hz,
            jam_bandwidth_hz: 0.0,
            delay_s: 0.0,
            doppler_hz: 0.0,
            false_targets,
            angle_deg: 2.0,
        }
    }
}

/// A labeled composite echo: clean target return + jamming + noise.
#[derive(Debug, Clone)]
pub struct EchoScene {
    pub clean_echo: ComplexSeries,
    pub jamming: ComplexSeries,
    pub noise: ComplexSeries,
    pub composite: ComplexSeries,
    pub label: JammingKind,
    pub target_delay_s: f64,
}

fn amplitude_from_db(db: f64) -> f64 {
    if db == f64::NEG_INFINITY {
        0.0
    } else {
        (10.0f64).powf(db / 20.0)
    }
}

fn power_from_db(db: f64) -> f64 {
    if db == f64::NEG_INFINITY {
        0.0
    } else {
        (10.0f64).powf(db / 10.0)
    }
}

/// Generate the transmitted LFM pulse: unit-modulus chirp over [0, T),
/// instantaneous frequency mu * (t - T/2) sweeping -B/2 .. B/2.
pub fn gen_lfm(p: &RadarParams) -> Result<ComplexSeries> {
    p.validate()?;
    let n = p.pulse_samples();
    let mu = p.chirp_rate();
    let dt = 1.0 / p.sample_rate_hz;
    let half = p.pulse_width_s / 2.0;
    let samples = (0..n)
        .map(|i| {
            let tau = i as f64 * dt - half;
            Complex64::from_polar(1.0, PI * mu * tau * tau)
        })
        .collect();
    Ok(ComplexSeries {
        samples,
        sample_rate_hz: p.sample_rate_hz,
        t0_s: 0.0,
        carrier_hz: p.carrier_hz,
    })
}

/// Chirp replica evaluated on a window starting at `t0`: the transmit pulse
/// delayed by `delay_s`, Doppler-shifted and scaled. Evaluation is analytic,
/// so fractional-sample delays are exact.
fn chirp_replica(
    p: &RadarParams,
    t0_s: f64,
    window_len: usize,
    delay_s: f64,
    doppler_hz: f64,
    amplitude: f64,
    out: &mut [Complex64],
) {
    debug_assert_eq!(out.len(), window_len);
    let mu = p.chirp_rate();
    let dt = 1.0 / p.sample_rate_hz;
    let half = p.pulse_width_s / 2.0;
    for (i, slot) in out.iter_mut().enumerate() {
        let t = t0_s + i as f64 * dt;
        let u = t - delay_s;
        if u >= 0.0 && u < p.pulse_width_s {
            let tau = u - half;
            let phase = PI * mu * tau * tau + 2.0 * PI * doppler_hz * t;
            *slot += Complex64::from_polar(amplitude, phase);
        }
    }
}

/// The clean target echo: a unit-amplitude pulse at `target_delay_s` in the
/// receive window.
pub fn gen_clean_echo(p: &RadarParams, target_delay_s: f64) -> Result<ComplexSeries> {
    p.validate()?;
    if target_delay_s < 0.0 || target_delay_s >= p.pri_s {
        return Err(Error::InvalidParams(format!(
            "target delay {target_delay_s} outside receive window"
        )));
    }
    let n = p.window_samples();
    let mut samples = vec![Complex64::new(0.0, 0.0); n];
    chirp_replica(p, 0.0, n, target_delay_s, 0.0, 1.0, &mut samples);
    Ok(ComplexSeries {
        samples,
        sample_rate_hz: p.sample_rate_hz,
        t0_s: 0.0,
        carrier_hz: p.carrier_hz,
    })
}

/// Aiming noise jamming: band-limited circular complex Gaussian noise at
/// the requested baseband offset, random initial phase, gated over the whole
/// requested duration, scaled to `jnr_db` relative to the unit-power pulse.
///
/// Band-limiting is frequency-domain brick-wall masking of white noise.
pub fn gen_aj(
    p: &RadarParams,
    j: &JammingSpec,
    duration_s: f64,
    rng: &mut impl Rng,
) -> Result<ComplexSeries> {
    p.validate()?;
    if j.kind != JammingKind::Aj {
        return Err(Error::InvalidParams(String::from("spec kind is not AJ")));
    }
    if !(j.jam_bandwidth_hz > 0.0) {
        return Err(Error::InvalidParams(String::from("AJ bandwidth must be > 0")));
    }
    let fs = p.sample_rate_hz;
    let center = j.jam_center_hz - p.carrier_hz;
    if center.abs() + j.jam_bandwidth_hz / 2.0 > fs / 2.0 {
        return Err(Error::InvalidParams(format!(
            "jam band [{:.3e}, {:.3e}] exceeds Nyquist +-{:.3e}",
            center - j.jam_bandwidth_hz / 2.0,
            center + j.jam_bandwidth_hz / 2.0,
            fs / 2.0
        )));
    }
    let n = (duration_s * fs).round() as usize;
    if n == 0 {
        return Err(Error::InvalidParams(String::from("nonpositive jam duration")));
    }

    let phi = rng.gen_range(0.0..(2.0 * PI));
    let nf = next_pow2(n);
    let white: Vec<Complex64> = (0..nf)
        .map(|_| Complex64::new(standard_normal(rng), standard_normal(rng)))
        .collect();
    let mut spec = fft_padded(&white, nf);

    // Brick-wall mask; keep at least the bin nearest the center so very
    // narrow bands still produce output.
    let bin_hz = fs / nf as f64;
    let mut kept = 0usize;
    let mut nearest = (0usize, f64::INFINITY);
    for (k, v) in spec.iter_mut().enumerate() {
        let f = if k < nf / 2 {
            k as f64 * bin_hz
        } else {
            (k as f64 - nf as f64) * bin_hz
        };
        let dist = (f - center).abs();
        if dist < nearest.1 {
            nearest = (k, dist);
        }
        if dist > j.jam_bandwidth_hz / 2.0 {
            *v = Complex64::new(0.0, 0.0);
        } else {
            kept += 1;
        }
    }
    if kept == 0 {
        let white_spec = fft_padded(&white, nf);
        spec[nearest.0] = white_spec[nearest.0];
    }

    let time = ifft(&spec);
    let rot = Complex64::from_polar(1.0, phi);
    let mut samples: Vec<Complex64> = time[..n].iter().map(|v| v * rot).collect();

    let target_power = power_from_db(j.jnr_db);
    let measured = samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / n as f64;
    let scale = if measured > 0.0 && target_power > 0.0 {
        (target_power / measured).sqrt()
    } else {
        0.0
    };
    for s in samples.iter_mut() {
        *s *= scale;
    }

    Ok(ComplexSeries {
        samples,
        sample_rate_hz: fs,
        t0_s: 0.0,
        carrier_hz: p.carrier_hz,
    })
}

/// RFTJ over a window starting at `t0_s`. Absolute time enters the Doppler
/// term, so consecutive windows show the pulse-to-pulse phase rotation.
fn rftj_window(
    p: &RadarParams,
    j: &JammingSpec,
    t0_s: f64,
    window_len: usize,
) -> Result<ComplexSeries> {
    p.validate()?;
    if j.kind != JammingKind::Rftj {
        return Err(Error::InvalidParams(String::from("spec kind is not RFTJ")));
    }
    let window_s = window_len as f64 / p.sample_rate_hz;
    let rel = j.delay_s - t0_s;
    if rel >= window_s || rel + p.pulse_width_s <= 0.0 {
        return Err(Error::InvalidParams(format!(
            "delayed pulse at {} s falls entirely outside the receive window",
            j.delay_s
        )));
    }
    let mut samples = vec![Complex64::new(0.0, 0.0); window_len];
    let amp = amplitude_from_db(j.jnr_db);
    chirp_replica(p, t0_s, window_len, j.delay_s, j.doppler_hz, amp, &mut samples);
    Ok(ComplexSeries {
        samples,
        sample_rate_hz: p.sample_rate_hz,
        t0_s,
        carrier_hz: p.carrier_hz,
    })
}

/// Range false-target jamming: one delayed, Doppler-shifted chirp replica in
/// the receive window, amplitude set by `jnr_db`.
pub fn gen_rftj(p: &RadarParams, j: &JammingSpec) -> Result<ComplexSeries> {
    if j.kind == JammingKind::Rftj && j.delay_s < 0.0 {
        return Err(Error::InvalidParams(String::from("RFTJ delay must be >= 0")));
    }
    rftj_window(p, j, 0.0, p.window_samples())
}

/// Range dense false-target jamming: the sum of the cluster's replicas.
///
/// Delays may be negative; the window origin is shifted so the earliest
/// replica starts at zero. Each replica gets the common 10^(JNR/20) scale
/// times its relative amplitude, so the output is exactly the sum of the
/// corresponding single-replica signals.
pub fn gen_rdftj(p: &RadarParams, j: &JammingSpec) -> Result<ComplexSeries> {
    p.validate()?;
    if j.kind != JammingKind::Rdftj {
        return Err(Error::InvalidParams(String::from("spec kind is not RDFTJ")));
    }
    if j.false_targets.is_empty() {
        return Err(Error::InvalidParams(String::from("RDFTJ needs at least one false target")));
    }
    let min_delay = j
        .false_targets
        .iter()
        .map(|t| t.delay_s)
        .fold(f64::INFINITY, f64::min);
    let reference = (-min_delay).max(0.0);
    let n = p.window_samples();
    let mut samples = vec![Complex64::new(0.0, 0.0); n];
    let amp = amplitude_from_db(j.jnr_db);
    for t in &j.false_targets {
        let abs_delay = reference + t.delay_s;
        if abs_delay + p.pulse_width_s > p.pri_s {
            return Err(Error::InvalidParams(format!(
                "replica at {abs_delay} s exceeds the receive window"
            )));
        }
        chirp_replica(p, 0.0, n, abs_delay, t.doppler_hz, amp * t.amplitude, &mut samples);
    }
    Ok(ComplexSeries {
        samples,
        sample_rate_hz: p.sample_rate_hz,
        t0_s: 0.0,
        carrier_hz: p.carrier_hz,
    })
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

/// Circular complex Gaussian noise with the given mean power.
pub fn gen_noise(
    len: usize,
    power: f64,
    sample_rate_hz: f64,
    carrier_hz: f64,
    rng: &mut impl Rng,
) -> ComplexSeries {
    let sigma = (power / 2.0).max(0.0).sqrt();
    let samples = (0..len)
        .map(|_| Complex64::new(sigma * standard_normal(rng), sigma * standard_normal(rng)))
        .collect();
    ComplexSeries {
        samples,
        sample_rate_hz,
        t0_s: 0.0,
        carrier_hz,
    }
}

/// Add white Gaussian noise so that signal power over the pulse support
/// divided by noise power equals `snr_db`.
pub fn add_awgn(x: &ComplexSeries, snr_db: f64, rng: &mut impl Rng) -> ComplexSeries {
    let signal_power = x.support_power();
    if snr_db == f64::INFINITY || signal_power == 0.0 {
        return x.clone();
    }
    let noise_power = signal_power / power_from_db(snr_db);
    let noise = gen_noise(x.len(), noise_power, x.sample_rate_hz, x.carrier_hz, rng);
    let samples = x
        .samples
        .iter()
        .zip(&noise.samples)
        .map(|(a, b)| a + b)
        .collect();
    ComplexSeries {
        samples,
        sample_rate_hz: x.sample_rate_hz,
        t0_s: x.t0_s,
        carrier_hz: x.carrier_hz,
    }
}

/// Assemble a labeled scene: clean echo + jamming + receiver noise over one PRI.
///
/// RDFTJ false-target delays in `spec` are relative to the true target; the
/// cluster is placed around `target_delay_s`. Noise power comes from
/// `p.snr_db` against the unit-power clean echo. The RNG stream order is
/// fixed (jamming first, then noise).
pub fn synth_scene(
    p: &RadarParams,
    spec: &JammingSpec,
    target_delay_s: f64,
    seed: u64,
) -> Result<EchoScene> {
    let mut rng = seeds::rng_from_seed(seed);
    let clean_echo = gen_clean_echo(p, target_delay_s)?;
    let jamming = match spec.kind {
        JammingKind::Aj => gen_aj(p, spec, p.pri_s, &mut rng)?,
        JammingKind::Rftj => gen_rftj(p, spec)?,
        JammingKind::Rdftj => {
            let mut absolute = spec.clone();
            for t in absolute.false_targets.iter_mut() {
                t.delay_s += target_delay_s;
            }
            gen_rdftj(p, &absolute)?
        }
    };
    let noise_power = power_from_db(-p.snr_db);
    let noise = gen_noise(
        clean_echo.len(),
        noise_power,
        p.sample_rate_hz,
        p.carrier_hz,
        &mut rng,
    );
    let samples = clean_echo
        .samples
        .iter()
        .zip(&jamming.samples)
        .zip(&noise.samples)
        .map(|((a, b), c)| a + b + c)
        .collect();
    let composite = ComplexSeries {
        samples,
        sample_rate_hz: p.sample_rate_hz,
        t0_s: 0.0,
        carrier_hz: p.carrier_hz,
    };
    Ok(EchoScene {
        clean_echo,
        jamming,
        noise,
        composite,
        label: spec.kind,
        target_delay_s,
    })
}

// ---------------------------------------------------------------------------
// Dataset planning
// ---------------------------------------------------------------------------

/// Parameter ranges for dataset sampling (defaults follow the jamming
/// information table: 60 MHz AJ bandwidth, JNR 10-35 dB, RFTJ delay
/// 10-20 us, RDFTJ 3-5 targets at -15..15 us).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRanges {
    pub jnr_db: (f64, f64),
    pub aj_bandwidth_hz: f64,
    /// AJ aiming error around the radar carrier.
    pub aj_center_error_hz: (f64, f64),
    pub rftj_delay_s: (f64, f64),
    pub rdftj_targets: (usize, usize),
    /// RDFTJ delays relative to the true target.
    pub rdftj_delay_s: (f64, f64),
    pub doppler_hz: (f64, f64),
    /// True-target delay for AJ/RFTJ scenes.
    pub target_delay_s: (f64, f64),
    /// True-target delay for RDFTJ scenes (kept away from the window edges
    /// so the whole cluster fits).
    pub rdftj_target_delay_s: (f64, f64),
}

impl Default for SampleRanges {
    fn default() -> Self {
        SampleRanges {
            jnr_db: (10.0, 35.0),
            aj_bandwidth_hz: 60.0e6,
            aj_center_error_hz: (-5.0e6, 5.0e6),
            rftj_delay_s: (10.0e-6, 20.0e-6),
            rdftj_targets: (3, 5),
            rdftj_delay_s: (-15.0e-6, 15.0e-6),
            doppler_hz: (-2.0e3, 2.0e3),
            target_delay_s: (10.0e-6, 24.0e-6),
            rdftj_target_delay_s: (15.5e-6, 24.0e-6),
        }
    }
}

/// Draw one jamming spec plus a true-target delay for the given class.
pub fn sample_jamming(
    kind: JammingKind,
    p: &RadarParams,
    ranges: &SampleRanges,
    rng: &mut impl Rng,
) -> (JammingSpec, f64) {
    let jnr = rng.gen_range(ranges.jnr_db.0..=ranges.jnr_db.1);
    match kind {
        JammingKind::Aj => {
            let err = rng.gen_range(ranges.aj_center_error_hz.0..=ranges.aj_center_error_hz.1);
            let target = rng.gen_range(ranges.target_delay_s.0..=ranges.target_delay_s.1);
            (
                JammingSpec::aj(jnr, p.carrier_hz + err, ranges.aj_bandwidth_hz),
                target,
            )
        }
        JammingKind::Rftj => {
            let delay = rng.gen_range(ranges.rftj_delay_s.0..=ranges.rftj_delay_s.1);
            let doppler = rng.gen_range(ranges.doppler_hz.0..=ranges.doppler_hz.1);
            let target = rng.gen_range(ranges.target_delay_s.0..=ranges.target_delay_s.1);
            (JammingSpec::rftj(jnr, p.carrier_hz, delay, doppler), target)
        }
        JammingKind::Rdftj => {
            let k = rng.gen_range(ranges.rdftj_targets.0..=ranges.rdftj_targets.1);
            let targets = (0..k)
                .map(|_| FalseTarget {
                    delay_s: rng.gen_range(ranges.rdftj_delay_s.0..=ranges.rdftj_delay_s.1),
                    doppler_hz: rng.gen_range(ranges.doppler_hz.0..=ranges.doppler_hz.1),
                    amplitude: 1.0,
                })
                .collect();
            let target =
                rng.gen_range(ranges.rdftj_target_delay_s.0..=ranges.rdftj_target_delay_s.1);
            (JammingSpec::rdftj(jnr, p.carrier_hz, targets), target)
        }
    }
}

/// Train / validation / test fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    /// 80/10/10, the split the headline results are reported at.
    pub const STANDARD: SplitFractions = SplitFractions {
        train: 0.8,
        val: 0.1,
        test: 0.1,
    };
    /// Small-training-set preset: 30% train, 10% val, 60% test.
    pub const SMALL_TRAIN: SplitFractions = SplitFractions {
        train: 0.3,
        val: 0.1,
        test: 0.6,
    };

    pub fn validate(&self) -> Result<()> {
        let s = self.train + self.val + self.test;
        if !(self.train > 0.0) || self.val < 0.0 || self.test < 0.0 || (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "split fractions {self:?} must be positive and sum to 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn tag(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Dataset generation request.
#[derive(Debug, Clone)]
pub struct DatasetConfig {
    pub radar: RadarParams,
    pub ranges: SampleRanges,
    /// Scenes per class, ordered AJ / RFTJ / RDFTJ.
    pub per_class: [usize; 3],
    pub split: SplitFractions,
    pub master_seed: u64,
}

/// One planned scene: everything needed to synthesize it deterministically.
#[derive(Debug, Clone)]
pub struct SceneRecord {
    pub id: usize,
    pub kind: JammingKind,
    pub spec: JammingSpec,
    pub target_delay_s: f64,
    pub split: Split,
    pub seed: u64,
}

/// Sample every scene's parameters and split assignment. Pure function of
/// the config; synthesis happens later (possibly in parallel) from each
/// record's own seed.
pub fn plan_dataset(cfg: &DatasetConfig) -> Result<Vec<SceneRecord>> {
    cfg.radar.validate()?;
    cfg.split.validate()?;
    if cfg.per_class.iter().any(|&c| c == 0) {
        return Err(Error::InvalidConfig(String::from("per-class counts must be > 0")));
    }
    let mut records = Vec::new();
    let mut id = 0usize;
    for (class_idx, kind) in JammingKind::ALL.iter().enumerate() {
        let count = cfg.per_class[class_idx];
        let n_train = ((count as f64) * cfg.split.train).round() as usize;
        let n_val = ((count as f64) * cfg.split.val).round() as usize;
        let n_train = n_train.min(count);
        let n_val = n_val.min(count - n_train);
        for i in 0..count {
            let seed = seeds::child_seed(cfg.master_seed, class_idx as u64, i as u64);
            let mut rng = seeds::rng_from_seed(seeds::child_seed(seed, 0xda7a, 0));
            let (spec, target_delay_s) = sample_jamming(*kind, &cfg.radar, &cfg.ranges, &mut rng);
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            records.push(SceneRecord {
                id,
                kind: *kind,
                spec,
                target_delay_s,
                split,
                seed,
            });
            id += 1;
        }
    }
    Ok(records)
}

/// Synthesize the scene a record describes.
pub fn synth_record(p: &RadarParams, rec: &SceneRecord) -> Result<EchoScene> {
    synth_scene(p, &rec.spec, rec.target_delay_s, rec.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn params() -> RadarParams {
        RadarParams::default()
    }

    /// Complex cross-correlation magnitude of `x` against `replica` at the
    /// given sample lag.
    fn xcorr_at(x: &[Complex64], replica: &[Complex64], lag: usize) -> f64 {
        replica
            .iter()
            .enumerate()
            .map(|(i, r)| {
                if lag + i < x.len() {
                    x[lag + i] * r.conj()
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .sum::<Complex64>()
            .norm()
    }

    fn matched_filter(x: &[Complex64], replica: &[Complex64]) -> Vec<f64> {
        (0..x.len()).map(|lag| xcorr_at(x, replica, lag)).collect()
    }

    #[test]
    fn lfm_length_and_modulus() {
        let s = gen_lfm(&params()).unwrap();
        assert_eq!(s.len(), 1000);
        for v in &s.samples {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lfm_zero_slope_is_pure_tone() {
        let mut p = params();
        p.bandwidth_hz = 1e-6; // B -> epsilon, mu -> 0
        p.sample_rate_hz = 100.0e6;
        let s = gen_lfm(&p).unwrap();
        let spec = fft_padded(&s.samples, next_pow2(s.len()));
        let peak = spec
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
            .unwrap()
            .0;
        assert_eq!(peak, 0, "DC bin must dominate for a zero-slope chirp");
    }

    #[test]
    fn lfm_instantaneous_frequency_tracks_the_chirp_line() {
        let p = params();
        let s = gen_lfm(&p).unwrap();
        let mu = p.chirp_rate();
        let fs = p.sample_rate_hz;
        // Phase-difference instantaneous frequency estimate at midpoints.
        let tol = fs / (2.0 * s.len() as f64);
        for i in 0..s.len() - 1 {
            let dphi = (s.samples[i + 1] * s.samples[i].conj()).arg();
            let f_est = dphi * fs / (2.0 * PI);
            let t_mid = (i as f64 + 0.5) / fs;
            let f_true = mu * (t_mid - p.pulse_width_s / 2.0);
            assert!(
                (f_est - f_true).abs() < tol,
                "sample {i}: est {f_est} vs true {f_true}"
            );
        }
    }

    #[test]
    fn lfm_rejects_nyquist_violation() {
        let mut p = params();
        p.sample_rate_hz = 20.0e6;
        assert!(matches!(gen_lfm(&p), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn aj_power_matches_jnr() {
        let p = params();
        let j = JammingSpec::aj(20.0, p.carrier_hz, 60.0e6);
        let mut rng = seeds::rng_from_seed(11);
        let out = gen_aj(&p, &j, p.pri_s, &mut rng).unwrap();
        let ratio_db = 10.0 * out.mean_power().log10();
        assert!((ratio_db - 20.0).abs() < 0.5, "got {ratio_db} dB");
    }

    #[test]
    fn aj_zero_power_is_all_zero() {
        let p = params();
        let j = JammingSpec::aj(f64::NEG_INFINITY, p.carrier_hz, 60.0e6);
        let mut rng = seeds::rng_from_seed(12);
        let out = gen_aj(&p, &j, p.pri_s, &mut rng).unwrap();
        assert!(out.samples.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn aj_spectral_occupancy() {
        let p = params();
        let offset = 4.0e6;
        let bw = 60.0e6;
        let j = JammingSpec::aj(15.0, p.carrier_hz + offset, bw);
        let mut rng = seeds::rng_from_seed(13);
        let out = gen_aj(&p, &j, p.pri_s, &mut rng).unwrap();
        let nf = next_pow2(out.len());
        let spec = fft_padded(&out.samples, nf);
        let bin_hz = p.sample_rate_hz / nf as f64;
        let mut inside = 0.0;
        let mut total = 0.0;
        for (k, v) in spec.iter().enumerate() {
            let f = if k < nf / 2 {
                k as f64 * bin_hz
            } else {
                (k as f64 - nf as f64) * bin_hz
            };
            let e = v.norm_sqr();
            total += e;
            // Half-bin slack for energy exactly on the brick-wall edge.
            if (f - offset).abs() <= bw / 2.0 + bin_hz {
                inside += e;
            }
        }
        assert!(inside / total >= 0.95, "occupancy {}", inside / total);
    }

    #[test]
    fn aj_rejects_band_beyond_nyquist() {
        let p = params();
        let j = JammingSpec::aj(10.0, p.carrier_hz + 40.0e6, 60.0e6);
        let mut rng = seeds::rng_from_seed(14);
        assert!(matches!(
            gen_aj(&p, &j, p.pri_s, &mut rng),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn rftj_correlation_peak_at_delay() {
        let p = params();
        let j = JammingSpec::rftj(12.0, p.carrier_hz, 10.0e-6, 0.0);
        let out = gen_rftj(&p, &j).unwrap();
        let replica = gen_lfm(&p).unwrap();
        let mf = matched_filter(&out.samples, &replica.samples);
        let peak = mf
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(peak, 1000, "peak must sit at the 10 us lag exactly");
    }

    #[test]
    fn rftj_zero_delay_matches_clean_echo_up_to_amplitude() {
        let p = params();
        let j = JammingSpec::rftj(p.snr_db, p.carrier_hz, 0.0, 0.0);
        let out = gen_rftj(&p, &j).unwrap();
        let clean = gen_clean_echo(&p, 0.0).unwrap();
        let amp = amplitude_from_db(p.snr_db);
        for (a, b) in out.samples.iter().zip(&clean.samples) {
            assert!((a - b * amp).norm() < 1e-12);
        }
    }

    #[test]
    fn rftj_doppler_rotates_pulse_to_pulse_phase() {
        let p = params();
        let doppler = 1.0e3;
        let j = JammingSpec::rftj(10.0, p.carrier_hz, 12.0e-6, doppler);
        let n = p.window_samples();
        let w0 = rftj_window(&p, &j, 0.0, n).unwrap();
        let mut j1 = j.clone();
        j1.delay_s += p.pri_s; // same range gate in the next PRI
        let w1 = rftj_window(&p, &j1, p.pri_s, n).unwrap();
        let replica = gen_lfm(&p).unwrap();
        let lag = (12.0e-6 * p.sample_rate_hz).round() as usize;
        let c0: Complex64 = replica
            .samples
            .iter()
            .enumerate()
            .map(|(i, r)| w0.samples[lag + i] * r.conj())
            .sum();
        let c1: Complex64 = replica
            .samples
            .iter()
            .enumerate()
            .map(|(i, r)| w1.samples[lag + i] * r.conj())
            .sum();
        let measured = (c1 * c0.conj()).arg();
        let expected = 2.0 * PI * doppler * p.pri_s;
        assert!(
            (measured - expected).abs() < 1e-6,
            "slow-time rotation {measured} vs {expected}"
        );
    }

    #[test]
    fn rftj_rejects_delay_outside_window() {
        let p = params();
        let j = JammingSpec::rftj(10.0, p.carrier_hz, 60.0e-6, 0.0);
        assert!(matches!(gen_rftj(&p, &j), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn rdftj_three_matched_filter_maxima() {
        let p = params();
        let targets = alloc::vec![
            FalseTarget { delay_s: -15.0e-6, doppler_hz: 0.0, amplitude: 1.0 },
            FalseTarget { delay_s: 0.0, doppler_hz: 0.0, amplitude: 1.0 },
            FalseTarget { delay_s: 15.0e-6, doppler_hz: 0.0, amplitude: 1.0 },
        ];
        let j = JammingSpec::rdftj(15.0, p.carrier_hz, targets);
        let out = gen_rdftj(&p, &j).unwrap();
        let replica = gen_lfm(&p).unwrap();
        let mf = matched_filter(&out.samples, &replica.samples);
        // Reference shifts the cluster so the earliest replica starts at 0.
        let expected_lags = [0usize, 1500, 3000];
        // Local maxima above half the global peak, separated by > 100 samples.
        let global = mf.iter().cloned().fold(0.0, f64::max);
        let mut peaks = Vec::new();
        for i in 0..mf.len() {
            let left = if i == 0 { f64::NEG_INFINITY } else { mf[i - 1] };
            let right = if i + 1 == mf.len() { f64::NEG_INFINITY } else { mf[i + 1] };
            if mf[i] > left && mf[i] >= right && mf[i] > 0.5 * global {
                if peaks.last().map_or(true, |&(last, _): &(usize, f64)| i - last > 100) {
                    peaks.push((i, mf[i]));
                }
            }
        }
        assert_eq!(peaks.len(), 3, "peaks: {peaks:?}");
        for ((i, _), exp) in peaks.iter().zip(expected_lags) {
            assert!(
                (*i as i64 - exp as i64).unsigned_abs() <= 1,
                "peak at {i}, expected {exp}"
            );
        }
    }

    #[test]
    fn rdftj_single_target_equals_rftj() {
        let p = params();
        let targets = alloc::vec![FalseTarget {
            delay_s: 12.0e-6,
            doppler_hz: 500.0,
            amplitude: 1.0,
        }];
        let dense = gen_rdftj(&p, &JammingSpec::rdftj(18.0, p.carrier_hz, targets)).unwrap();
        let single = gen_rftj(&p, &JammingSpec::rftj(18.0, p.carrier_hz, 12.0e-6, 500.0)).unwrap();
        for (a, b) in dense.samples.iter().zip(&single.samples) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn rdftj_superposition_against_single_target_oracle() {
        let p = params();
        let targets = alloc::vec![
            FalseTarget { delay_s: -8.0e-6, doppler_hz: -1.0e3, amplitude: 1.0 },
            FalseTarget { delay_s: 2.5e-6, doppler_hz: 400.0, amplitude: 1.0 },
            FalseTarget { delay_s: 9.0e-6, doppler_hz: 1.5e3, amplitude: 1.0 },
            FalseTarget { delay_s: 14.0e-6, doppler_hz: 0.0, amplitude: 1.0 },
        ];
        let j = JammingSpec::rdftj(22.0, p.carrier_hz, targets.clone());
        let dense = gen_rdftj(&p, &j).unwrap();
        let reference = 8.0e-6; // -min delay
        let mut acc = vec![Complex64::new(0.0, 0.0); dense.len()];
        for t in &targets {
            let single = gen_rftj(
                &p,
                &JammingSpec::rftj(22.0, p.carrier_hz, reference + t.delay_s, t.doppler_hz),
            )
            .unwrap();
            for (a, s) in acc.iter_mut().zip(&single.samples) {
                *a += s;
            }
        }
        let peak = dense.samples.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (a, b) in dense.samples.iter().zip(&acc) {
            assert!((a - b).norm() < 1e-12 * peak.max(1.0));
        }
    }

    #[test]
    fn awgn_infinite_snr_is_identity() {
        let p = params();
        let s = gen_clean_echo(&p, 15.0e-6).unwrap();
        let mut rng = seeds::rng_from_seed(21);
        let out = add_awgn(&s, f64::INFINITY, &mut rng);
        assert_eq!(out.samples, s.samples);
    }

    #[test]
    fn awgn_variance_calibrated() {
        let p = params();
        // Unit-power pulse filling a long window: support power = 1.
        let mut x = gen_clean_echo(&p, 0.0).unwrap();
        x.samples = x.samples.repeat(20); // 20k samples of support
        let mut rng = seeds::rng_from_seed(22);
        let noisy = add_awgn(&x, 10.0, &mut rng);
        let noise_power: f64 = noisy
            .samples
            .iter()
            .zip(&x.samples)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / x.samples.len() as f64;
        assert!((noise_power - 0.1).abs() < 0.01, "variance {noise_power}");
    }

    #[test]
    fn awgn_same_seed_bit_identical() {
        let p = params();
        let s = gen_clean_echo(&p, 15.0e-6).unwrap();
        let a = add_awgn(&s, 10.0, &mut seeds::rng_from_seed(7));
        let b = add_awgn(&s, 10.0, &mut seeds::rng_from_seed(7));
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn scene_composite_is_exact_sum() {
        let p = params();
        let (spec, delay) =
            sample_jamming(JammingKind::Rdftj, &p, &SampleRanges::default(), &mut seeds::rng_from_seed(31));
        let scene = synth_scene(&p, &spec, delay, 99).unwrap();
        for i in 0..scene.composite.len() {
            let sum = scene.clean_echo.samples[i] + scene.jamming.samples[i] + scene.noise.samples[i];
            assert_eq!(scene.composite.samples[i], sum);
        }
    }

    #[test]
    fn scene_synthesis_is_deterministic() {
        let p = params();
        let (spec, delay) =
            sample_jamming(JammingKind::Aj, &p, &SampleRanges::default(), &mut seeds::rng_from_seed(32));
        let a = synth_scene(&p, &spec, delay, 123).unwrap();
        let b = synth_scene(&p, &spec, delay, 123).unwrap();
        assert_eq!(a.composite.samples, b.composite.samples);
    }

    #[test]
    fn plan_dataset_balances_classes_and_ranges() {
        let cfg = DatasetConfig {
            radar: params(),
            ranges: SampleRanges::default(),
            per_class: [100, 100, 100],
            split: SplitFractions::STANDARD,
            master_seed: 5,
        };
        let plan = plan_dataset(&cfg).unwrap();
        assert_eq!(plan.len(), 300);
        for kind in JammingKind::ALL {
            let n = plan.iter().filter(|r| r.kind == kind).count();
            assert_eq!(n, 100);
            let trains = plan
                .iter()
                .filter(|r| r.kind == kind && r.split == Split::Train)
                .count();
            assert_eq!(trains, 80);
        }
        for rec in &plan {
            assert!(rec.spec.jnr_db >= 10.0 && rec.spec.jnr_db <= 35.0);
            if rec.kind == JammingKind::Rdftj {
                let k = rec.spec.false_targets.len();
                assert!((3..=5).contains(&k));
            }
        }
        // Replanning is byte-for-byte identical.
        let again = plan_dataset(&cfg).unwrap();
        for (a, b) in plan.iter().zip(&again) {
            assert_eq!(a.spec, b.spec);
            assert_eq!(a.seed, b.seed);
        }
    }

    #[test]
    fn linearity_of_composition() {
        // Scaling each part scales the composite: assembled by construction,
        // checked against an independently scaled sum.
        let p = params();
        let (spec, delay) =
            sample_jamming(JammingKind::Rftj, &p, &SampleRanges::default(), &mut seeds::rng_from_seed(33));
        let scene = synth_scene(&p, &spec, delay, 55).unwrap();
        let k = 2.5;
        for i in 0..scene.composite.len() {
            let scaled = (scene.clean_echo.samples[i] + scene.jamming.samples[i] + scene.noise.samples[i]) * k;
            let sum_scaled = scene.clean_echo.samples[i] * k
                + scene.jamming.samples[i] * k
                + scene.noise.samples[i] * k;
            assert!((scaled - sum_scaled).norm() < 1e-12);
        }
    }
}
