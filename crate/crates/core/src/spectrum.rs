//! Voigt line profiles, absorption/dispersion synthesis over the transition
//! table, and sideband (AM/PM) spectroscopy responses.
//!
//! Profiles are area-normalised (units 1/Hz); synthesized spectra are in
//! dB/cm with a peak calibration expressed per unit (population x strength).

use num_complex::Complex64;

use crate::constants::{FIELD_NEPER_PER_DB, GAUSSIAN_FWHM_PER_SIGMA};
use crate::error::{Error, Result};
use crate::faddeeva;
use crate::levels::{
    LevelScheme, PopulationState, StrengthModel, Transition, TransitionTable, LEVELS,
};

/// Voigt profile parameters. One component may be zero (degenerate Gaussian
/// or Lorentzian limit); both zero is rejected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lineshape {
    gaussian_fwhm: f64,
    lorentzian_fwhm: f64,
}

impl Lineshape {
    pub fn new(gaussian_fwhm: f64, lorentzian_fwhm: f64) -> Result<Self> {
        if !(gaussian_fwhm.is_finite() && lorentzian_fwhm.is_finite())
            || gaussian_fwhm < 0.0
            || lorentzian_fwhm < 0.0
        {
            return Err(Error::Domain(format!(
                "linewidths must be non-negative, got G={gaussian_fwhm} L={lorentzian_fwhm}"
            )));
        }
        if gaussian_fwhm == 0.0 && lorentzian_fwhm == 0.0 {
            return Err(Error::Domain("lineshape needs a nonzero width".into()));
        }
        Ok(Lineshape { gaussian_fwhm, lorentzian_fwhm })
    }

    /// Equal Gaussian and Lorentzian FWHM components sized so the combined
    /// profile has the requested total FWHM.
    pub fn from_total_fwhm_equal_parts(total_fwhm: f64) -> Result<Self> {
        if !(total_fwhm.is_finite() && total_fwhm > 0.0) {
            return Err(Error::Domain(format!("total FWHM must be positive, got {total_fwhm}")));
        }
        // total_fwhm(x, x) is monotone in x; Olivero-Longbothum says the
        // ratio is ~1.6376, bracket generously around it.
        let mut lo = total_fwhm / 2.5;
        let mut hi = total_fwhm;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            let shape = Lineshape { gaussian_fwhm: mid, lorentzian_fwhm: mid };
            if shape.total_fwhm() < total_fwhm {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Lineshape { gaussian_fwhm: 0.5 * (lo + hi), lorentzian_fwhm: 0.5 * (lo + hi) })
    }

    pub fn gaussian_fwhm(&self) -> f64 {
        self.gaussian_fwhm
    }

    pub fn lorentzian_fwhm(&self) -> f64 {
        self.lorentzian_fwhm
    }

    /// FWHM of the combined profile (bisection; exact in degenerate limits).
    pub fn total_fwhm(&self) -> f64 {
        if self.gaussian_fwhm == 0.0 {
            return self.lorentzian_fwhm;
        }
        if self.lorentzian_fwhm == 0.0 {
            return self.gaussian_fwhm;
        }
        let half_peak = 0.5 * voigt(0.0, self);
        let mut lo = 0.0f64;
        let mut hi = self.gaussian_fwhm + self.lorentzian_fwhm;
        while voigt(hi, self) > half_peak {
            hi *= 2.0;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if voigt(mid, self) > half_peak {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo + hi
    }

    pub fn peak(&self) -> f64 {
        voigt(0.0, self)
    }
}

impl Default for Lineshape {
    /// Equal-component shape with 150 MHz total FWHM.
    fn default() -> Self {
        Lineshape::from_total_fwhm_equal_parts(150.0e6).expect("valid default lineshape")
    }
}

/// Area-normalised Voigt absorption V and its Hilbert partner D as V + iD.
pub fn voigt_complex(delta: f64, shape: &Lineshape) -> Complex64 {
    let gamma = 0.5 * shape.lorentzian_fwhm; // Lorentzian HWHM
    if shape.gaussian_fwhm == 0.0 {
        // complex Lorentzian (gamma + i delta) / (pi (gamma^2 + delta^2))
        let denom = std::f64::consts::PI * (gamma * gamma + delta * delta);
        return Complex64::new(gamma / denom, delta / denom);
    }
    let sigma = shape.gaussian_fwhm / GAUSSIAN_FWHM_PER_SIGMA;
    let scale = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let x = delta / (sigma * std::f64::consts::SQRT_2);
    if gamma == 0.0 {
        // real part analytic; w at real argument supplies the dispersion
        let w = faddeeva::w(Complex64::new(x, 0.0));
        return Complex64::new((-x * x).exp() * scale, w.im * scale);
    }
    let z = Complex64::new(x, gamma / (sigma * std::f64::consts::SQRT_2));
    faddeeva::w(z) * scale
}

/// Area-normalised Voigt absorption profile, 1/Hz.
pub fn voigt(delta: f64, shape: &Lineshape) -> f64 {
    voigt_complex(delta, shape).re
}

/// Uniform frequency grid, inclusive of both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl FrequencyGrid {
    pub fn new(start: f64, stop: f64, points: usize) -> Result<Self> {
        if !(start.is_finite() && stop.is_finite()) || stop <= start {
            return Err(Error::Domain(format!("bad grid bounds [{start}, {stop}]")));
        }
        if points < 2 {
            return Err(Error::Domain(format!("grid needs at least 2 points, got {points}")));
        }
        Ok(FrequencyGrid { start, stop, points })
    }

    pub fn step(&self) -> f64 {
        (self.stop - self.start) / (self.points - 1) as f64
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.points).map(|i| self.start + h * i as f64).collect()
    }
}

/// A sampled spectrum: parallel frequency/value arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub values: Vec<f64>,
}

impl Spectrum {
    pub fn new(frequencies: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if frequencies.len() != values.len() {
            return Err(Error::InvalidState(format!(
                "frequency/value length mismatch: {} vs {}",
                frequencies.len(),
                values.len()
            )));
        }
        if frequencies.len() < 2 {
            return Err(Error::InvalidState("spectrum needs at least 2 samples".into()));
        }
        Ok(Spectrum { frequencies, values })
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Uniform grid step if the axis is uniform to 1 part in 1e6.
    pub fn uniform_step(&self) -> Result<f64> {
        let h = self.frequencies[1] - self.frequencies[0];
        for w in self.frequencies.windows(2) {
            if ((w[1] - w[0]) - h).abs() > 1e-6 * h.abs() {
                return Err(Error::InvalidState("spectrum axis is not uniform".into()));
            }
        }
        Ok(h)
    }

    /// Linear interpolation; `frequency` must lie inside the axis range.
    pub fn interpolate(&self, frequency: f64) -> Result<f64> {
        let (first, last) = (self.frequencies[0], *self.frequencies.last().unwrap());
        if frequency < first || frequency > last {
            return Err(Error::Domain(format!(
                "frequency {frequency} outside sampled range [{first}, {last}]"
            )));
        }
        let idx = match self
            .frequencies
            .binary_search_by(|f| f.total_cmp(&frequency))
        {
            Ok(i) => return Ok(self.values[i]),
            Err(i) => i.clamp(1, self.len() - 1),
        };
        let (f0, f1) = (self.frequencies[idx - 1], self.frequencies[idx]);
        let t = (frequency - f0) / (f1 - f0);
        Ok(self.values[idx - 1] * (1.0 - t) + self.values[idx] * t)
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
    }
}

/// Even-isotope (I = 0) impurity line riding on the same calibration. The
/// equivalent population is (1 - target_fraction)/target_fraction: the
/// impurity ensemble is unsplit, so its whole number density backs one line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsotopeComposition {
    pub target_fraction: f64,
    /// Impurity line centre relative to the optical origin, Hz.
    pub impurity_offset: f64,
    pub impurity_strength: f64,
}

impl Default for IsotopeComposition {
    fn default() -> Self {
        IsotopeComposition {
            target_fraction: 0.92,
            impurity_offset: -400.0e6,
            impurity_strength: 1.0,
        }
    }
}

impl IsotopeComposition {
    fn validate(&self) -> Result<()> {
        if !(self.target_fraction > 0.0 && self.target_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "target fraction must be in (0, 1], got {}",
                self.target_fraction
            )));
        }
        if self.impurity_strength < 0.0 || !self.impurity_strength.is_finite() {
            return Err(Error::InvalidConfig("impurity strength must be non-negative".into()));
        }
        Ok(())
    }

    fn equivalent_population(&self) -> f64 {
        (1.0 - self.target_fraction) / self.target_fraction
    }
}

/// Peak absorption (dB/cm) contributed per unit of population x strength.
/// 70/0.95: a 95 %-polarised ensemble peaks at 70 dB/cm on its strongest line.
pub const DEFAULT_PEAK_CALIBRATION: f64 = 70.0 / 0.95;

/// Everything needed to turn a population state into an absorption spectrum.
#[derive(Debug, Clone)]
pub struct AbsorptionModel {
    pub scheme: LevelScheme,
    pub table: TransitionTable,
    pub lineshape: Lineshape,
    /// dB/cm per unit (population x rel_strength) of peak height.
    pub peak_calibration: f64,
    pub isotope: IsotopeComposition,
}

impl AbsorptionModel {
    pub fn new(
        scheme: LevelScheme,
        table: TransitionTable,
        lineshape: Lineshape,
        peak_calibration: f64,
        isotope: IsotopeComposition,
    ) -> Result<Self> {
        if !(peak_calibration.is_finite() && peak_calibration > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "peak calibration must be positive, got {peak_calibration}"
            )));
        }
        isotope.validate()?;
        Ok(AbsorptionModel { scheme, table, lineshape, peak_calibration, isotope })
    }

    pub fn with_defaults() -> Self {
        let scheme = LevelScheme::default();
        let table = crate::levels::transition_table(&scheme, &StrengthModel::default())
            .expect("default table is valid");
        AbsorptionModel {
            scheme,
            table,
            lineshape: Lineshape::default(),
            peak_calibration: DEFAULT_PEAK_CALIBRATION,
            isotope: IsotopeComposition::default(),
        }
    }

    /// Peak height (dB/cm) of one transition's component: the optical depth
    /// of that line alone, independent of overlap with its neighbours.
    pub fn component_peak(&self, populations: &PopulationState, transition: &Transition) -> f64 {
        self.peak_calibration * populations.fraction(transition.ground) * transition.strength
    }

    fn response_at(&self, populations: &PopulationState, frequency: f64) -> Complex64 {
        let peak = self.lineshape.peak();
        let mut acc = Complex64::new(0.0, 0.0);
        for t in self.table.transitions() {
            let weight = populations.fraction(t.ground) * t.strength;
            if weight == 0.0 {
                continue;
            }
            acc += weight * voigt_complex(frequency - t.frequency, &self.lineshape);
        }
        let imp = self.isotope.equivalent_population() * self.isotope.impurity_strength;
        if imp > 0.0 {
            let centre = self.scheme.optical_origin() + self.isotope.impurity_offset;
            acc += imp * voigt_complex(frequency - centre, &self.lineshape);
        }
        acc * (self.peak_calibration / peak)
    }
}

/// Absorption spectrum (dB/cm) over the grid.
pub fn synthesize_absorption(
    model: &AbsorptionModel,
    populations: &PopulationState,
    grid: &FrequencyGrid,
) -> Result<Spectrum> {
    let freqs = grid.frequencies();
    let values = freqs
        .iter()
        .map(|&f| model.response_at(populations, f).re)
        .collect();
    Spectrum::new(freqs, values)
}

/// Absorption and its analytic dispersion partner, same units.
pub fn synthesize_response(
    model: &AbsorptionModel,
    populations: &PopulationState,
    grid: &FrequencyGrid,
) -> Result<(Spectrum, Spectrum)> {
    let freqs = grid.frequencies();
    let mut absorption = Vec::with_capacity(freqs.len());
    let mut dispersion = Vec::with_capacity(freqs.len());
    for &f in &freqs {
        let r = model.response_at(populations, f);
        absorption.push(r.re);
        dispersion.push(r.im);
    }
    Ok((
        Spectrum::new(freqs.clone(), absorption)?,
        Spectrum::new(freqs, dispersion)?,
    ))
}

/// Absorption decomposed per ground level over an arbitrary frequency list.
/// Row k holds, for each ground level, the absorption a unit population in
/// that level would contribute at `frequencies[k]`; the second vector is the
/// population-independent impurity line. For populations p the full spectrum
/// is `impurity[k] + sum_g p[g] * basis[k][g]`. Absorption is linear in the
/// populations, so fitting code can solve for them directly.
pub fn absorption_basis(
    model: &AbsorptionModel,
    frequencies: &[f64],
) -> Result<(Vec<[f64; LEVELS]>, Vec<f64>)> {
    let peak = model.lineshape.peak();
    let scale = model.peak_calibration / peak;
    let imp_weight = model.isotope.equivalent_population() * model.isotope.impurity_strength;
    let imp_centre = model.scheme.optical_origin() + model.isotope.impurity_offset;
    let mut basis = Vec::with_capacity(frequencies.len());
    let mut impurity = Vec::with_capacity(frequencies.len());
    for &f in frequencies {
        if !f.is_finite() {
            return Err(Error::Domain(format!("frequency must be finite, got {f}")));
        }
        let mut row = [0.0; LEVELS];
        for t in model.table.transitions() {
            row[t.ground] += t.strength * voigt(f - t.frequency, &model.lineshape);
        }
        for v in &mut row {
            *v *= scale;
        }
        basis.push(row);
        impurity.push(if imp_weight > 0.0 {
            scale * imp_weight * voigt(f - imp_centre, &model.lineshape)
        } else {
            0.0
        });
    }
    Ok((basis, impurity))
}

/// Numeric Hilbert transform H[f](x) = (1/pi) PV int f(t)/(x - t) dt of a
/// uniformly sampled function. Endpoint values carry the full truncation
/// error of the principal-value log term; treat them as unreliable.
pub fn hilbert_transform(spectrum: &Spectrum) -> Result<Vec<f64>> {
    let h = spectrum.uniform_step()?;
    let x = &spectrum.frequencies;
    let f = &spectrum.values;
    let n = f.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        // subtract f(x_i) so the integrand is smooth through t = x_i, then
        // add back the analytic PV integral of f(x_i)/(x_i - t)
        let mut acc = 0.0;
        for j in 0..n {
            let g = if j == i {
                // limit of (f(t) - f(xi))/(xi - t) = -f'(xi)
                if i == 0 {
                    -(f[1] - f[0]) / h
                } else if i == n - 1 {
                    -(f[n - 1] - f[n - 2]) / h
                } else {
                    -(f[i + 1] - f[i - 1]) / (2.0 * h)
                }
            } else {
                (f[j] - f[i]) / (x[i] - x[j])
            };
            let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
            acc += w * g;
        }
        let mut val = acc * h;
        if i > 0 && i < n - 1 {
            val += f[i] * ((x[i] - x[0]) / (x[n - 1] - x[i])).ln();
        }
        out[i] = val / std::f64::consts::PI;
    }
    Ok(out)
}

fn field_response(
    absorption: &Spectrum,
    phase_per_cm: &[f64],
    frequency: f64,
    path_cm: f64,
) -> Result<Complex64> {
    let a_db = absorption.interpolate(frequency)?;
    let phase_spec = Spectrum {
        frequencies: absorption.frequencies.clone(),
        values: phase_per_cm.to_vec(),
    };
    let phi = phase_spec.interpolate(frequency)?;
    let exponent = Complex64::new(-a_db * FIELD_NEPER_PER_DB * path_cm, phi * path_cm);
    Ok(exponent.exp())
}

fn sideband_beats(
    absorption: &Spectrum,
    carrier: f64,
    modulation: &[f64],
    path_cm: f64,
) -> Result<Vec<(Complex64, Complex64)>> {
    if !(path_cm.is_finite() && path_cm >= 0.0) {
        return Err(Error::Domain(format!("path length must be non-negative, got {path_cm}")));
    }
    // phase per cm from the Kramers-Kronig partner of the field attenuation
    let phase: Vec<f64> = hilbert_transform(absorption)?
        .iter()
        .map(|d| d * FIELD_NEPER_PER_DB)
        .collect();
    let tc = field_response(absorption, &phase, carrier, path_cm)?;
    let mut beats = Vec::with_capacity(modulation.len());
    for &fm in modulation {
        if fm < 0.0 {
            return Err(Error::Domain(format!("modulation frequency must be >= 0, got {fm}")));
        }
        let tp = field_response(absorption, &phase, carrier + fm, path_cm)?;
        let tm = field_response(absorption, &phase, carrier - fm, path_cm)?;
        beats.push((tp * tc.conj(), tc * tm.conj()));
    }
    Ok(beats)
}

/// Amplitude-modulation beat magnitude |t(c+f) t*(c) + t(c) t*(c-f)| per
/// modulation frequency. A transparent medium gives exactly 2.
pub fn am_response(
    absorption: &Spectrum,
    carrier: f64,
    modulation: &[f64],
    path_cm: f64,
) -> Result<Vec<f64>> {
    Ok(sideband_beats(absorption, carrier, modulation, path_cm)?
        .into_iter()
        .map(|(upper, lower)| (upper + lower).norm())
        .collect())
}

/// Phase-modulation beat magnitude |t(c+f) t*(c) - t(c) t*(c-f)|: zero in a
/// transparent medium, nonzero where absorption/dispersion asymmetry
/// converts PM to AM.
pub fn pm_response(
    absorption: &Spectrum,
    carrier: f64,
    modulation: &[f64],
    path_cm: f64,
) -> Result<Vec<f64>> {
    Ok(sideband_beats(absorption, carrier, modulation, path_cm)?
        .into_iter()
        .map(|(upper, lower)| (upper - lower).norm())
        .collect())
}
