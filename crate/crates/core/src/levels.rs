//! Hyperfine level scheme for an I = 7/2 ion in the frozen-core high-field
//! regime: 8 ground and 8 excited nuclear sublevels, optical transitions
//! grouped into delta_m bands.
//!
//! Sublevels are indexed 0..8 in order of increasing m_I, so index 0 is
//! m_I = -7/2 and index 7 is m_I = +7/2. All energies are in Hz relative to
//! the lowest sublevel of each manifold; absolute optical frequencies are
//! offsets from a shared `optical_origin`.

use crate::error::{Error, Result};

pub const LEVELS: usize = 8;

/// "-7/2" .. "+7/2" for sublevel index 0..7.
pub fn m_label(index: usize) -> String {
    let twice_m = 2 * index as i64 - 7;
    if twice_m < 0 {
        format!("-{}/2", -twice_m)
    } else {
        format!("+{}/2", twice_m)
    }
}

/// Parse an m_I label produced by [`m_label`].
pub fn parse_m_label(s: &str) -> Result<usize> {
    let body = s
        .strip_suffix("/2")
        .ok_or_else(|| Error::Parse(format!("bad m_I label {s:?}")))?;
    let twice_m: i64 = body
        .parse()
        .map_err(|_| Error::Parse(format!("bad m_I label {s:?}")))?;
    let index = twice_m + 7;
    if index % 2 != 0 || !(0..=14).contains(&index) {
        return Err(Error::Parse(format!("bad m_I label {s:?}")));
    }
    Ok((index / 2) as usize)
}

/// Spacings (Hz) between adjacent sublevels of both manifolds plus the
/// optical origin. Defaults: uniform 994.7 MHz ground / 1.0 GHz excited
/// spacings, origin 0 (all optical frequencies are then band offsets).
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub ground_spacings: [f64; LEVELS - 1],
    pub excited_spacings: [f64; LEVELS - 1],
    pub optical_origin: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            ground_spacings: [994.7e6; LEVELS - 1],
            excited_spacings: [1.0e9; LEVELS - 1],
            optical_origin: 0.0,
        }
    }
}

/// Energies of the 16 sublevels. Invariant: both ladders strictly increase.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelScheme {
    ground: [f64; LEVELS],
    excited: [f64; LEVELS],
    optical_origin: f64,
}

/// Validate spacings and accumulate them into level energies.
pub fn build_level_scheme(config: &SchemeConfig) -> Result<LevelScheme> {
    if !config.optical_origin.is_finite() {
        return Err(Error::InvalidConfig("optical origin must be finite".into()));
    }
    let ladder = |spacings: &[f64; LEVELS - 1], name: &str| -> Result<[f64; LEVELS]> {
        let mut e = [0.0; LEVELS];
        for (i, &gap) in spacings.iter().enumerate() {
            if !(gap.is_finite() && gap > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} spacing {i} must be positive and finite, got {gap}"
                )));
            }
            e[i + 1] = e[i] + gap;
        }
        Ok(e)
    };
    Ok(LevelScheme {
        ground: ladder(&config.ground_spacings, "ground")?,
        excited: ladder(&config.excited_spacings, "excited")?,
        optical_origin: config.optical_origin,
    })
}

impl Default for LevelScheme {
    fn default() -> Self {
        build_level_scheme(&SchemeConfig::default()).expect("default scheme is valid")
    }
}

impl LevelScheme {
    pub fn ground_energy(&self, index: usize) -> f64 {
        self.ground[index]
    }

    pub fn excited_energy(&self, index: usize) -> f64 {
        self.excited[index]
    }

    pub fn optical_origin(&self) -> f64 {
        self.optical_origin
    }

    /// Gap (Hz) between ground sublevels index and index + 1.
    pub fn ground_gap(&self, index: usize) -> f64 {
        self.ground[index + 1] - self.ground[index]
    }

    /// Optical frequency of the transition |g, m_g> -> |e, m_e>.
    pub fn transition_frequency(&self, ground: usize, excited: usize) -> f64 {
        self.optical_origin + (self.excited[excited] - self.ground[ground])
    }

    /// Transition frequency relative to the optical origin. Exact integer
    /// arithmetic in f64 whenever the configured spacings are integer Hz.
    pub fn transition_offset(&self, ground: usize, excited: usize) -> f64 {
        self.excited[excited] - self.ground[ground]
    }
}

/// Relative oscillator strengths of the optical transitions. delta_m = 0 is
/// the reference (1.0); the +-1 bands fall linearly along the band, pinned at
/// the endpoints: the -1 band from `minus_one.0` at the transition involving
/// |-7/2> down to `minus_one.1` at the one involving |+7/2>, likewise +1.
///
/// |delta_m| >= 2 strengths use a geometric extension (each extra unit of
/// |delta_m| multiplies by the +-1 strength at that ground index); the public
/// query only exposes them when `geometric_extension` is set, but decay-path
/// branching always draws on the extension internally.
#[derive(Debug, Clone, PartialEq)]
pub struct StrengthModel {
    pub delta_zero: f64,
    pub minus_one: (f64, f64),
    pub plus_one: (f64, f64),
    pub geometric_extension: bool,
}

impl Default for StrengthModel {
    fn default() -> Self {
        StrengthModel {
            delta_zero: 1.0,
            minus_one: (0.25, 0.025),
            plus_one: (0.31, 0.031),
            geometric_extension: false,
        }
    }
}

pub const MAX_DELTA_M: i32 = 3;

impl StrengthModel {
    fn validate(&self) -> Result<()> {
        for &v in [
            self.delta_zero,
            self.minus_one.0,
            self.minus_one.1,
            self.plus_one.0,
            self.plus_one.1,
        ]
        .iter()
        {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "oscillator strengths must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    fn single_step(&self, delta_m: i32, ground: usize) -> Result<f64> {
        match delta_m {
            0 => Ok(self.delta_zero),
            1 => {
                // transitions (g, g+1) for g = 0..6, linear along the band
                if ground > 6 {
                    return Err(Error::UnsupportedTransition { delta_m, ground });
                }
                let (a, b) = self.plus_one;
                Ok(a + (b - a) * ground as f64 / 6.0)
            }
            -1 => {
                // transitions (g, g-1) for g = 1..7
                if ground < 1 || ground > 7 {
                    return Err(Error::UnsupportedTransition { delta_m, ground });
                }
                let (a, b) = self.minus_one;
                Ok(a + (b - a) * (ground - 1) as f64 / 6.0)
            }
            _ => unreachable!("single_step called with |delta_m| > 1"),
        }
    }

    /// Strength including the geometric extension, regardless of the flag.
    /// Used by branching models; errors only when the transition leaves the
    /// 8-level ladder.
    pub(crate) fn strength_extended(&self, delta_m: i32, ground: usize) -> Result<f64> {
        let excited = ground as i32 + delta_m;
        if ground >= LEVELS || excited < 0 || excited >= LEVELS as i32 || delta_m.abs() > MAX_DELTA_M
        {
            return Err(Error::UnsupportedTransition { delta_m, ground });
        }
        if delta_m == 0 {
            return Ok(self.delta_zero);
        }
        let step = self.single_step(delta_m.signum(), ground)?;
        Ok(step.powi(delta_m.abs()))
    }

    /// Relative strength of the transition from ground index `ground` with
    /// the given delta_m. |delta_m| >= 2 requires `geometric_extension`.
    pub fn strength(&self, delta_m: i32, ground: usize) -> Result<f64> {
        if delta_m.abs() >= 2 && !self.geometric_extension {
            return Err(Error::UnsupportedTransition { delta_m, ground });
        }
        self.strength_extended(delta_m, ground)
    }
}

/// One optical transition of the table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub ground: usize,
    pub excited: usize,
    /// m_I(excited) - m_I(ground).
    pub delta_m: i32,
    /// Absolute frequency (origin included), Hz.
    pub frequency: f64,
    pub strength: f64,
}

/// The delta_m in {0, -1, +1} transitions: 8 + 7 + 7 = 22 entries.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTable {
    transitions: Vec<Transition>,
}

/// Enumerate the delta_m = 0, -1, +1 transitions of the scheme.
pub fn transition_table(scheme: &LevelScheme, strengths: &StrengthModel) -> Result<TransitionTable> {
    strengths.validate()?;
    let mut transitions = Vec::with_capacity(22);
    for &dm in &[0i32, -1, 1] {
        for g in 0..LEVELS {
            let e = g as i32 + dm;
            if !(0..LEVELS as i32).contains(&e) {
                continue;
            }
            let e = e as usize;
            transitions.push(Transition {
                ground: g,
                excited: e,
                delta_m: dm,
                frequency: scheme.transition_frequency(g, e),
                strength: strengths.single_step(dm, g)?,
            });
        }
    }
    Ok(TransitionTable { transitions })
}

impl TransitionTable {
    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn band(&self, delta_m: i32) -> impl Iterator<Item = &Transition> {
        self.transitions.iter().filter(move |t| t.delta_m == delta_m)
    }

    /// Mean frequency of a band; bands cluster because within-band spreads
    /// are set by ground/excited spacing differences, not by the spacings.
    pub fn band_centroid(&self, delta_m: i32) -> Option<f64> {
        let (mut sum, mut n) = (0.0, 0usize);
        for t in self.band(delta_m) {
            sum += t.frequency;
            n += 1;
        }
        (n > 0).then(|| sum / n as f64)
    }

    /// Transition closest to `frequency`, if within `window` Hz.
    pub fn nearest(&self, frequency: f64, window: f64) -> Option<&Transition> {
        self.transitions
            .iter()
            .min_by(|a, b| {
                (a.frequency - frequency)
                    .abs()
                    .total_cmp(&(b.frequency - frequency).abs())
            })
            .filter(|t| (t.frequency - frequency).abs() <= window)
    }

    /// All transitions with frequency inside [start, stop].
    pub fn in_interval(&self, start: f64, stop: f64) -> Vec<&Transition> {
        self.transitions
            .iter()
            .filter(|t| t.frequency >= start && t.frequency <= stop)
            .collect()
    }
}

/// Fractional populations of the 8 ground sublevels. Invariants: entries
/// non-negative, sum within 1e-9 of one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationState {
    p: [f64; LEVELS],
}

pub const POPULATION_SUM_TOL: f64 = 1e-9;

impl PopulationState {
    pub fn new(p: [f64; LEVELS]) -> Result<Self> {
        for (i, &v) in p.iter().enumerate() {
            if !v.is_finite() || v < -1e-12 {
                return Err(Error::InvalidState(format!(
                    "population {i} must be non-negative, got {v}"
                )));
            }
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > POPULATION_SUM_TOL {
            return Err(Error::InvalidState(format!(
                "populations must sum to 1 within {POPULATION_SUM_TOL}, got {sum}"
            )));
        }
        Ok(PopulationState { p })
    }

    pub fn uniform() -> Self {
        PopulationState { p: [1.0 / LEVELS as f64; LEVELS] }
    }

    /// `fraction` in one sublevel, remainder spread over the others.
    pub fn polarized(index: usize, fraction: f64) -> Result<Self> {
        if index >= LEVELS {
            return Err(Error::Domain(format!("sublevel index {index} out of range")));
        }
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::Domain(format!("fraction {fraction} outside [0, 1]")));
        }
        let rest = (1.0 - fraction) / (LEVELS - 1) as f64;
        let mut p = [rest; LEVELS];
        p[index] = fraction;
        Ok(PopulationState { p })
    }

    pub fn fractions(&self) -> &[f64; LEVELS] {
        &self.p
    }

    pub fn fraction(&self, index: usize) -> f64 {
        self.p[index]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_scheme_band_offsets() {
        let scheme = LevelScheme::default();
        let strengths = StrengthModel::default();
        let table = transition_table(&scheme, &strengths).unwrap();
        assert_eq!(table.transitions().len(), 22);
        assert_eq!(table.band(0).count(), 8);
        assert_eq!(table.band(-1).count(), 7);
        assert_eq!(table.band(1).count(), 7);

        // with uniform 1.0 GHz excited spacings, each +-1 transition sits
        // exactly 1.0 GHz from the delta_m = 0 transition off the same
        // ground level (bit-exact: integer-Hz energies)
        for t in table.band(1) {
            let base = scheme.transition_offset(t.ground, t.ground);
            assert_eq!(scheme.transition_offset(t.ground, t.excited), base + 1.0e9);
        }
        for t in table.band(-1) {
            let base = scheme.transition_offset(t.ground, t.ground);
            assert_eq!(scheme.transition_offset(t.ground, t.excited), base - 1.0e9);
        }
        // centroids differ by 1 GHz minus half the 5.3 MHz excess step,
        // because the side bands have 7 members to the central band's 8
        let c0 = table.band_centroid(0).unwrap();
        let cp = table.band_centroid(1).unwrap();
        let cm = table.band_centroid(-1).unwrap();
        let half_step = 0.5 * (1.0e9 - 994.7e6);
        assert!((cp - c0 - (1.0e9 - half_step)).abs() < 1.0, "got {}", cp - c0);
        assert!((cm - c0 + (1.0e9 - half_step)).abs() < 1.0, "got {}", cm - c0);
    }

    #[test]
    fn default_ground_splitting() {
        let scheme = LevelScheme::default();
        assert_eq!(scheme.ground_gap(0), 994.7e6);
        // microwave-sideband arithmetic behind the default: 2150 - 1155.3 MHz
        assert!((2150.0e6 - 1155.3e6 - scheme.ground_gap(0)).abs() < 1.0);
    }

    #[test]
    fn strength_endpoints() {
        let s = StrengthModel::default();
        assert_eq!(s.strength(0, 3).unwrap(), 1.0);
        // -1 band: first transition involves |-7/2> (excited), last |+7/2> (ground)
        assert!((s.strength(-1, 1).unwrap() - 0.25).abs() < 1e-15);
        assert!((s.strength(-1, 7).unwrap() - 0.025).abs() < 1e-15);
        assert!((s.strength(1, 0).unwrap() - 0.31).abs() < 1e-15);
        assert!((s.strength(1, 6).unwrap() - 0.031).abs() < 1e-15);
    }

    #[test]
    fn geometric_extension_gated() {
        let mut s = StrengthModel::default();
        assert!(matches!(
            s.strength(2, 1),
            Err(Error::UnsupportedTransition { delta_m: 2, ground: 1 })
        ));
        s.geometric_extension = true;
        let one = s.strength(1, 1).unwrap();
        assert!((s.strength(2, 1).unwrap() - one * one).abs() < 1e-15);
        // leaving the ladder is an error even with the extension
        assert!(s.strength(3, 6).is_err());
        assert!(s.strength(-2, 1).is_err());
    }

    #[test]
    fn m_labels_round_trip() {
        let labels: Vec<String> = (0..LEVELS).map(m_label).collect();
        assert_eq!(labels[0], "-7/2");
        assert_eq!(labels[3], "-1/2");
        assert_eq!(labels[7], "+7/2");
        for (i, l) in labels.iter().enumerate() {
            assert_eq!(parse_m_label(l).unwrap(), i);
        }
        assert!(parse_m_label("9/2").is_err());
    }

    #[test]
    fn invalid_spacings_rejected() {
        let mut cfg = SchemeConfig::default();
        cfg.ground_spacings[3] = 0.0;
        assert!(matches!(build_level_scheme(&cfg), Err(Error::InvalidConfig(_))));
        cfg.ground_spacings[3] = -5.0e6;
        assert!(build_level_scheme(&cfg).is_err());
    }

    #[test]
    fn population_validation() {
        assert!(PopulationState::new([0.125; 8]).is_ok());
        let mut p = [0.125; 8];
        p[0] = 0.3;
        assert!(matches!(PopulationState::new(p), Err(Error::InvalidState(_))));
        let mut q = [0.25; 8];
        q[0] = -0.75;
        assert!(PopulationState::new(q).is_err());
        let pol = PopulationState::polarized(7, 0.95).unwrap();
        assert!((pol.fractions().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(pol.fraction(7), 0.95);
    }

    proptest! {
        // Integer-Hz spacings keep all level arithmetic exact in f64, so
        // transition-frequency differences across a shared excited state must
        // reproduce ground-energy differences bit for bit.
        #[test]
        fn shared_excited_differences_exact(
            gaps in proptest::array::uniform7(800_000_000u64..1_200_000_000u64),
            egaps in proptest::array::uniform7(800_000_000u64..1_200_000_000u64),
        ) {
            let cfg = SchemeConfig {
                ground_spacings: gaps.map(|g| g as f64),
                excited_spacings: egaps.map(|g| g as f64),
                optical_origin: 0.0,
            };
            let scheme = build_level_scheme(&cfg).unwrap();
            let table = transition_table(&scheme, &StrengthModel::default()).unwrap();
            for a in table.transitions() {
                for b in table.transitions() {
                    if a.excited == b.excited {
                        let lhs = a.frequency - b.frequency;
                        let rhs = scheme.ground_energy(b.ground) - scheme.ground_energy(a.ground);
                        prop_assert_eq!(lhs, rhs);
                    }
                }
            }
        }
    }
}
