//! Raman echo formation and decay.
//!
//! The echo sequence is treated as an ideal three-level Lambda scheme: a
//! pi/2 pulse creates spin coherence, each packet of the inhomogeneous spin
//! distribution accumulates phase at its detuning, a pi pulse at the
//! separation time conjugates the phase, and the packets rephase into an
//! echo at twice the separation. The envelope is the magnitude of the
//! ensemble average of the phase factors, i.e. the characteristic function
//! of the detuning distribution evaluated at the time from the rephasing
//! point.

use crate::error::{Error, Result};
use crate::levels::LevelScheme;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::constants::GAUSSIAN_FWHM_PER_SIGMA;

/// Stretched-exponential echo decay, amplitude vs total delay tau:
/// A(tau) = exp(-(tau/t2)^x).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EchoDecayModel {
    /// 1/e decay time of the echo amplitude, s.
    pub t2: f64,
    /// Stretch exponent; > 1 indicates spectral diffusion.
    pub mims_x: f64,
}

impl EchoDecayModel {
    pub fn new(t2: f64, mims_x: f64) -> Result<Self> {
        if !(t2 > 0.0 && t2.is_finite()) {
            return Err(Error::InvalidConfig("t2 must be > 0".into()));
        }
        if !(mims_x > 0.0 && mims_x <= 3.0) {
            return Err(Error::InvalidConfig("stretch exponent must lie in (0, 3]".into()));
        }
        Ok(EchoDecayModel { t2, mims_x })
    }
}

/// Echo amplitude at total delay tau. A(t2) = 1/e exactly for any exponent
/// because (t2/t2)^x evaluates to 1 exactly.
pub fn echo_amplitude(tau_s: f64, model: &EchoDecayModel) -> Result<f64> {
    if !(tau_s >= 0.0) {
        return Err(Error::Domain("tau must be >= 0".into()));
    }
    Ok((-(tau_s / model.t2).powf(model.mims_x)).exp())
}

/// Named time-bandwidth conventions for converting between an
/// inhomogeneous linewidth (frequency FWHM) and an echo-envelope width
/// (time FWHM). Both are Gaussian-pair products; they differ in which
/// profile's FWHM the time side refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandwidthConvention {
    /// dt * dv = 2 ln 2 / pi (0.4413): the common transform-limited
    /// Gaussian pairing.
    AmplitudeGaussian,
    /// dt * dv = 4 ln 2 / pi (0.8825): the FWHM of the coherence-amplitude
    /// envelope |<exp(i delta t)>| against the FWHM of the frequency
    /// distribution. This is the product the simulated envelope obeys.
    EnvelopeFwhm,
}

impl BandwidthConvention {
    pub fn product(&self) -> f64 {
        match self {
            BandwidthConvention::AmplitudeGaussian => 2.0 * std::f64::consts::LN_2 / std::f64::consts::PI,
            BandwidthConvention::EnvelopeFwhm => 4.0 * std::f64::consts::LN_2 / std::f64::consts::PI,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "amplitude-gaussian" => Ok(BandwidthConvention::AmplitudeGaussian),
            "envelope-fwhm" => Ok(BandwidthConvention::EnvelopeFwhm),
            other => Err(Error::InvalidConfig(format!(
                "unknown bandwidth convention '{other}' (expected 'amplitude-gaussian' or 'envelope-fwhm')"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BandwidthConvention::AmplitudeGaussian => "amplitude-gaussian",
            BandwidthConvention::EnvelopeFwhm => "envelope-fwhm",
        }
    }
}

/// Time FWHM of the echo envelope for a given inhomogeneous linewidth.
pub fn envelope_from_linewidth(fwhm_hz: f64, convention: BandwidthConvention) -> Result<f64> {
    if !(fwhm_hz > 0.0 && fwhm_hz.is_finite()) {
        return Err(Error::Domain("linewidth must be > 0".into()));
    }
    Ok(convention.product() / fwhm_hz)
}

/// Inhomogeneous linewidth corresponding to an echo-envelope time FWHM.
pub fn linewidth_from_envelope(fwhm_s: f64, convention: BandwidthConvention) -> Result<f64> {
    if !(fwhm_s > 0.0 && fwhm_s.is_finite()) {
        return Err(Error::Domain("envelope width must be > 0".into()));
    }
    Ok(convention.product() / fwhm_s)
}

/// Two-pulse sequence: pi/2 at t = 0, pi at t = separation. The echo
/// rephases at t = 2 * separation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSequence {
    pub separation_s: f64,
}

impl PulseSequence {
    pub fn new(separation_s: f64) -> Result<Self> {
        if !(separation_s > 0.0 && separation_s.is_finite()) {
            return Err(Error::InvalidConfig("pulse separation must be > 0".into()));
        }
        Ok(PulseSequence { separation_s })
    }

    pub fn echo_time(&self) -> f64 {
        2.0 * self.separation_s
    }
}

/// How detuning packets are drawn from the Gaussian distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetuningSampler {
    /// Gauss-Hermite quadrature nodes: deterministic and exact for the
    /// Gaussian ensemble average (default).
    GaussHermite,
    /// Seeded Monte-Carlo draws; sampling error ~ packet_count^-1/2.
    MonteCarlo { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct EchoEnvelope {
    pub times: Vec<f64>,
    pub amplitude: Vec<f64>,
    /// Spin-transition carrier the rotating frame is defined against, Hz.
    pub carrier_hz: f64,
    pub warning: Option<String>,
}

impl EchoEnvelope {
    /// Time of the amplitude maximum.
    pub fn peak_time(&self) -> f64 {
        let mut best = 0;
        for (i, &a) in self.amplitude.iter().enumerate() {
            if a > self.amplitude[best] {
                best = i;
            }
        }
        self.times[best]
    }

    /// FWHM of the envelope, linearly interpolated at half maximum.
    pub fn fwhm(&self) -> Result<f64> {
        let peak = self.amplitude.iter().cloned().fold(f64::MIN, f64::max);
        let half = 0.5 * peak;
        let peak_idx = self
            .amplitude
            .iter()
            .position(|&a| a == peak)
            .expect("peak present");
        let cross = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
            let mut prev: Option<usize> = None;
            for i in range {
                if let Some(p) = prev {
                    let (a0, a1) = (self.amplitude[p], self.amplitude[i]);
                    if (a0 - half) * (a1 - half) <= 0.0 && a0 != a1 {
                        let t = (half - a0) / (a1 - a0);
                        return Some(self.times[p] + t * (self.times[i] - self.times[p]));
                    }
                }
                prev = Some(i);
            }
            None
        };
        let left = cross(&mut (0..=peak_idx).rev())
            .ok_or_else(|| Error::Numerical("envelope does not cross half maximum on the left".into()))?;
        let right = cross(&mut (peak_idx..self.times.len()))
            .ok_or_else(|| Error::Numerical("envelope does not cross half maximum on the right".into()))?;
        Ok(right - left)
    }
}

/// Gauss-Hermite nodes/weights for n points via the Golub-Welsch symmetric
/// tridiagonal eigenproblem, in the physicists' convention
/// (weight exp(-x^2), total weight sqrt(pi)).
fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    if n == 1 {
        return (vec![0.0], vec![1.0]);
    }
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let node = eig.eigenvalues[i];
            // weight = sqrt(pi) * v0^2, normalized below to sum 1
            let w = eig.eigenvectors[(0, i)].powi(2);
            (node, w)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    (
        pairs.iter().map(|p| p.0).collect(),
        pairs.iter().map(|p| p.1 / total).collect(),
    )
}

/// Simulate the echo envelope on an explicit time grid.
pub fn simulate_raman_echo_on_grid(
    scheme: &LevelScheme,
    inhomogeneous_fwhm_hz: f64,
    sequence: &PulseSequence,
    packet_count: usize,
    sampler: DetuningSampler,
    times: &[f64],
) -> Result<EchoEnvelope> {
    if !(inhomogeneous_fwhm_hz >= 0.0 && inhomogeneous_fwhm_hz.is_finite()) {
        return Err(Error::Domain("linewidth must be finite and >= 0".into()));
    }
    if packet_count == 0 {
        return Err(Error::Domain("need at least one packet".into()));
    }
    if times.is_empty() {
        return Err(Error::Domain("need a non-empty time grid".into()));
    }
    for &t in times {
        if !(t >= sequence.separation_s) {
            return Err(Error::Domain(
                "envelope times must follow the rephasing pulse".into(),
            ));
        }
    }
    let warning = if packet_count < 100 {
        Some(format!(
            "only {packet_count} packets; expected sampling error ~{:.1}%",
            100.0 / (packet_count as f64).sqrt()
        ))
    } else {
        None
    };

    let sigma = inhomogeneous_fwhm_hz / GAUSSIAN_FWHM_PER_SIGMA;
    // detunings in angular units, with quadrature weights summing to 1
    let (deltas, weights): (Vec<f64>, Vec<f64>) = if sigma == 0.0 {
        (vec![0.0], vec![1.0])
    } else {
        match sampler {
            DetuningSampler::GaussHermite => {
                let (nodes, w) = gauss_hermite(packet_count);
                // x ~ exp(-x^2) maps to frequency delta = sqrt(2) sigma x
                let scale = std::f64::consts::SQRT_2 * sigma * 2.0 * std::f64::consts::PI;
                (nodes.iter().map(|&x| scale * x).collect(), w)
            }
            DetuningSampler::MonteCarlo { seed } => {
                let mut rng = ChaCha12Rng::seed_from_u64(seed);
                let scale = sigma * 2.0 * std::f64::consts::PI;
                let draws: Vec<f64> = (0..packet_count)
                    .map(|_| {
                        // Box-Muller on explicit uniforms keeps the draw
                        // sequence stable across library versions
                        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                        let u2: f64 = rng.gen_range(0.0..1.0);
                        let r = (-2.0 * u1.ln()).sqrt();
                        scale * r * (2.0 * std::f64::consts::PI * u2).cos()
                    })
                    .collect();
                (draws, vec![1.0 / packet_count as f64; packet_count])
            }
        }
    };

    let echo_t = sequence.echo_time();
    let amplitude: Vec<f64> = times
        .iter()
        .map(|&t| {
            // after the pi pulse each packet's phase is delta * (t - 2 sep)
            let dt = t - echo_t;
            let (mut re, mut im) = (0.0, 0.0);
            for (&d, &w) in deltas.iter().zip(weights.iter()) {
                let ph = d * dt;
                re += w * ph.cos();
                im += w * ph.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect();

    Ok(EchoEnvelope {
        times: times.to_vec(),
        amplitude,
        carrier_hz: scheme.ground_gap(crate::levels::LEVELS - 2),
        warning,
    })
}

/// Simulate the echo envelope on a default grid centered at the rephasing
/// time, wide enough to resolve the envelope.
pub fn simulate_raman_echo(
    scheme: &LevelScheme,
    inhomogeneous_fwhm_hz: f64,
    sequence: &PulseSequence,
    packet_count: usize,
    sampler: DetuningSampler,
) -> Result<EchoEnvelope> {
    let expected_fwhm = if inhomogeneous_fwhm_hz > 0.0 {
        envelope_from_linewidth(inhomogeneous_fwhm_hz, BandwidthConvention::EnvelopeFwhm)?
    } else {
        sequence.separation_s
    };
    let half_window = (4.0 * expected_fwhm).min(sequence.separation_s);
    let echo_t = sequence.echo_time();
    let n = 1024;
    let times: Vec<f64> = (0..=n)
        .map(|i| echo_t - half_window + 2.0 * half_window * i as f64 / n as f64)
        .collect();
    simulate_raman_echo_on_grid(
        scheme,
        inhomogeneous_fwhm_hz,
        sequence,
        packet_count,
        sampler,
        &times,
    )
}
