//! Spectral hole and anti-hole prediction plus hole decay.
//!
//! A burn is modeled as an instantaneous deep pump: the burned ground
//! sublevel is emptied of one population unit, which redistributes over the
//! other ground sublevels according to the decay branching of the excited
//! level it was pumped through (the return channel only slows a real burn,
//! so in the deep limit the escape weights are the branching row
//! renormalized over the escaping channels). Every optical transition then
//! shows a feature proportional to its ground level's population change.

use crate::dynamics::BranchingModel;
use crate::error::{Error, Result};
use crate::levels::{m_label, LevelScheme, TransitionTable, LEVELS};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FeatureKind {
    Hole,
    AntiHole,
}

impl FeatureKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureKind::Hole => "hole",
            FeatureKind::AntiHole => "anti-hole",
        }
    }
}

/// One spectral feature of the burn pattern. `offset_hz` is relative to the
/// burned transition, so patterns depend only on level differences and are
/// invariant under shifts of the optical origin.
#[derive(Debug, Clone, PartialEq)]
pub struct HoleFeature {
    pub offset_hz: f64,
    pub kind: FeatureKind,
    pub amplitude: f64,
    pub ground: usize,
    pub excited: usize,
}

impl HoleFeature {
    pub fn ground_m(&self) -> String {
        m_label(self.ground)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolePattern {
    /// Absolute frequency of the reference (burned) transition.
    pub burn_frequency_hz: f64,
    pub features: Vec<HoleFeature>,
    /// Ground sublevels that were directly burned.
    pub burned_grounds: Vec<usize>,
    pub warning: Option<String>,
}

impl HolePattern {
    pub fn hole_area(&self) -> f64 {
        self.features
            .iter()
            .filter(|f| f.kind == FeatureKind::Hole)
            .map(|f| f.amplitude)
            .sum()
    }

    pub fn antihole_area(&self) -> f64 {
        self.features
            .iter()
            .filter(|f| f.kind == FeatureKind::AntiHole)
            .map(|f| f.amplitude)
            .sum()
    }
}

/// Default half-window for snapping a point burn to a transition: two
/// optical linewidths.
pub const DEFAULT_BURN_WINDOW_HZ: f64 = 300e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BurnSpec {
    /// Monochromatic burn; snaps to the nearest transition within
    /// `window_hz`.
    Point { frequency_hz: f64, window_hz: f64 },
    /// Wide trench; burns every transition inside the interval.
    Trench { start_hz: f64, stop_hz: f64 },
}

/// Predict the hole/anti-hole pattern for a point burn with the default
/// snap window.
pub fn predict_holes_antiholes(
    scheme: &LevelScheme,
    table: &TransitionTable,
    burn_frequency_hz: f64,
    branching: &BranchingModel,
) -> Result<HolePattern> {
    predict_pattern(
        scheme,
        table,
        &BurnSpec::Point { frequency_hz: burn_frequency_hz, window_hz: DEFAULT_BURN_WINDOW_HZ },
        branching,
    )
}

pub fn predict_pattern(
    scheme: &LevelScheme,
    table: &TransitionTable,
    burn: &BurnSpec,
    branching: &BranchingModel,
) -> Result<HolePattern> {
    let burned: Vec<(usize, usize, f64)> = match burn {
        BurnSpec::Point { frequency_hz, window_hz } => {
            if !(frequency_hz.is_finite() && *window_hz > 0.0) {
                return Err(Error::Domain("burn frequency and window must be finite".into()));
            }
            table
                .nearest(*frequency_hz, *window_hz)
                .map(|t| vec![(t.ground, t.excited, t.strength)])
                .unwrap_or_default()
        }
        BurnSpec::Trench { start_hz, stop_hz } => {
            if !(start_hz.is_finite() && stop_hz.is_finite() && start_hz < stop_hz) {
                return Err(Error::Domain("trench interval must be finite and ordered".into()));
            }
            table
                .in_interval(*start_hz, *stop_hz)
                .iter()
                .map(|t| (t.ground, t.excited, t.strength))
                .collect()
        }
    };

    if burned.is_empty() {
        return Ok(HolePattern {
            burn_frequency_hz: match burn {
                BurnSpec::Point { frequency_hz, .. } => *frequency_hz,
                BurnSpec::Trench { start_hz, stop_hz } => 0.5 * (start_hz + stop_hz),
            },
            features: Vec::new(),
            burned_grounds: Vec::new(),
            warning: Some("burn frequency is resonant with no transition".into()),
        });
    }

    let rows = branching.table()?;

    // per burned ground: mix the branching rows of its burned excited
    // levels, weighted by transition strength
    let mut burned_grounds: Vec<usize> = burned.iter().map(|&(g, _, _)| g).collect();
    burned_grounds.sort_unstable();
    burned_grounds.dedup();

    let mut delta_p = [0.0f64; LEVELS];
    for &g in &burned_grounds {
        let mut row = [0.0f64; LEVELS];
        let mut total_w = 0.0;
        for &(bg, be, s) in &burned {
            if bg == g {
                for (rj, &bj) in row.iter_mut().zip(rows[be].iter()) {
                    *rj += s * bj;
                }
                total_w += s;
            }
        }
        for rj in row.iter_mut() {
            *rj /= total_w;
        }
        let escape = 1.0 - row[g];
        if escape <= f64::EPSILON {
            // everything returns: the burn cannot deplete this level
            continue;
        }
        delta_p[g] -= 1.0;
        for (j, &rj) in row.iter().enumerate() {
            if j != g {
                delta_p[j] += rj / escape;
            }
        }
    }

    // reference transition: the first burned line, so offsets reproduce the
    // level-difference arithmetic exactly
    let (rg, re, _) = burned[0];
    let ref_offset = scheme.transition_offset(rg, re);

    let mut features = Vec::new();
    for t in table.transitions() {
        let dp = delta_p[t.ground];
        let is_burned = burned_grounds.contains(&t.ground);
        if dp == 0.0 && !is_burned {
            continue;
        }
        // normalize strength weights per ground so the summed feature
        // amplitude of a ground equals its population change; this makes
        // hole and anti-hole areas balance exactly
        let s_total: f64 = table
            .transitions()
            .iter()
            .filter(|u| u.ground == t.ground)
            .map(|u| u.strength)
            .sum();
        let kind = if dp < 0.0 || (dp == 0.0 && is_burned) {
            FeatureKind::Hole
        } else {
            FeatureKind::AntiHole
        };
        features.push(HoleFeature {
            offset_hz: scheme.transition_offset(t.ground, t.excited) - ref_offset,
            kind,
            amplitude: dp.abs() * t.strength / s_total,
            ground: t.ground,
            excited: t.excited,
        });
    }
    features.sort_by(|a, b| {
        a.offset_hz
            .total_cmp(&b.offset_hz)
            .then(a.kind.cmp(&b.kind))
            .then(a.ground.cmp(&b.ground))
    });

    Ok(HolePattern {
        burn_frequency_hz: scheme.transition_frequency(rg, re),
        features,
        burned_grounds,
        warning: None,
    })
}

#[derive(Debug, Clone)]
pub struct HoleDecayTrajectory {
    pub times: Vec<f64>,
    pub patterns: Vec<HolePattern>,
}

impl HoleDecayTrajectory {
    /// Amplitude history of one feature (index into the initial pattern).
    pub fn amplitude_history(&self, feature: usize) -> Vec<f64> {
        self.patterns.iter().map(|p| p.features[feature].amplitude).collect()
    }
}

/// Decay a burn pattern under spin-lattice relaxation at `gamma` plus
/// hyperfine cross-relaxation. `cross_relax` maps |delta m| classes to
/// rates (s^-1, missing classes are 0); a feature's class is the ladder
/// distance of its ground level from the nearest burned level, and the
/// hole itself refills through its nearest-neighbor channel (class 1).
pub fn simulate_hole_decay(
    pattern: &HolePattern,
    gamma: f64,
    cross_relax: &BTreeMap<i32, f64>,
    duration_s: f64,
    samples: usize,
) -> Result<HoleDecayTrajectory> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::Domain("gamma must be finite and >= 0".into()));
    }
    if !(duration_s >= 0.0 && duration_s.is_finite()) {
        return Err(Error::Domain("duration must be >= 0".into()));
    }
    if samples < 2 {
        return Err(Error::Domain("need at least 2 samples".into()));
    }
    for (&class, &rate) in cross_relax {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::Domain(format!("cross-relaxation rate for class {class} must be finite and >= 0")));
        }
    }
    let class_rate = |class: i32| -> f64 {
        cross_relax.get(&class.abs()).copied().unwrap_or(0.0)
    };
    let rates: Vec<f64> = pattern
        .features
        .iter()
        .map(|f| {
            let dist = pattern
                .burned_grounds
                .iter()
                .map(|&g| (f.ground as i32 - g as i32).abs())
                .min()
                .unwrap_or(0)
                .max(1);
            gamma + class_rate(dist)
        })
        .collect();
    let times: Vec<f64> = (0..samples)
        .map(|i| duration_s * i as f64 / (samples - 1) as f64)
        .collect();
    let patterns = times
        .iter()
        .map(|&t| {
            let mut p = pattern.clone();
            for (f, &r) in p.features.iter_mut().zip(rates.iter()) {
                f.amplitude *= (-r * t).exp();
            }
            p
        })
        .collect();
    Ok(HoleDecayTrajectory { times, patterns })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::BranchingModel;
    use crate::levels::{build_level_scheme, transition_table, SchemeConfig, StrengthModel};

    fn setup() -> (LevelScheme, TransitionTable, BranchingModel) {
        let scheme = build_level_scheme(&SchemeConfig::default()).unwrap();
        let strengths = StrengthModel::default();
        let table = transition_table(&scheme, &strengths).unwrap();
        (scheme, table, BranchingModel::FromStrengths(strengths))
    }

    #[test]
    fn burning_top_line_yields_expected_antihole_labels() {
        let (scheme, table, branching) = setup();
        let burn = scheme.transition_frequency(7, 7);
        let p = predict_holes_antiholes(&scheme, &table, burn, &branching).unwrap();
        assert!(p.warning.is_none());
        assert_eq!(p.burned_grounds, vec![7]);

        let hole_grounds: Vec<usize> = p
            .features
            .iter()
            .filter(|f| f.kind == FeatureKind::Hole)
            .map(|f| f.ground)
            .collect();
        assert!(hole_grounds.iter().all(|&g| g == 7));
        // ground 7 has two table transitions (delta_m 0 and -1)
        assert_eq!(hole_grounds.len(), 2);

        let mut anti_grounds: Vec<String> = p
            .features
            .iter()
            .filter(|f| f.kind == FeatureKind::AntiHole)
            .map(|f| f.ground_m())
            .collect();
        anti_grounds.sort();
        anti_grounds.dedup();
        assert_eq!(anti_grounds, vec!["+1/2", "+3/2", "+5/2"]);
    }

    #[test]
    fn feature_offsets_are_exact_level_differences() {
        let (scheme, table, branching) = setup();
        let burn = scheme.transition_frequency(7, 7);
        let p = predict_holes_antiholes(&scheme, &table, burn, &branching).unwrap();
        let ref_offset = scheme.transition_offset(7, 7);
        for f in &p.features {
            let want = scheme.transition_offset(f.ground, f.excited) - ref_offset;
            assert_eq!(f.offset_hz, want, "feature ({}, {})", f.ground, f.excited);
        }
        // the hole at the burned transition sits at offset exactly 0
        assert!(p
            .features
            .iter()
            .any(|f| f.kind == FeatureKind::Hole && f.offset_hz == 0.0 && f.excited == 7));
    }

    #[test]
    fn hole_and_antihole_areas_balance() {
        let (scheme, table, branching) = setup();
        for (g, e) in [(7usize, 7usize), (3, 3), (0, 1), (5, 4)] {
            let burn = scheme.transition_frequency(g, e);
            let p = predict_holes_antiholes(&scheme, &table, burn, &branching).unwrap();
            assert!(
                (p.hole_area() - p.antihole_area()).abs() < 1e-12,
                "burn ({g},{e}): hole {} vs anti {}",
                p.hole_area(),
                p.antihole_area()
            );
            // deep burn: exactly one population unit moved
            assert!((p.hole_area() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pure_return_branching_gives_hole_only() {
        let (scheme, table, _) = setup();
        let mut map = BTreeMap::new();
        map.insert(0, 1.0);
        let branching = BranchingModel::DeltaWeights(map);
        let burn = scheme.transition_frequency(7, 7);
        let p = predict_holes_antiholes(&scheme, &table, burn, &branching).unwrap();
        assert!(!p.features.is_empty());
        for f in &p.features {
            assert_eq!(f.kind, FeatureKind::Hole);
            assert_eq!(f.amplitude, 0.0);
        }
    }

    #[test]
    fn pattern_invariant_under_origin_shift() {
        let (scheme, table, branching) = setup();
        let shifted_scheme = build_level_scheme(&SchemeConfig {
            optical_origin: 5.0e9,
            ..Default::default()
        })
        .unwrap();
        let shifted_table =
            transition_table(&shifted_scheme, &StrengthModel::default()).unwrap();
        let a = predict_holes_antiholes(
            &scheme,
            &table,
            scheme.transition_frequency(6, 6),
            &branching,
        )
        .unwrap();
        let b = predict_holes_antiholes(
            &shifted_scheme,
            &shifted_table,
            shifted_scheme.transition_frequency(6, 6),
            &branching,
        )
        .unwrap();
        assert_eq!(a.features.len(), b.features.len());
        for (fa, fb) in a.features.iter().zip(b.features.iter()) {
            assert_eq!(fa.offset_hz, fb.offset_hz);
            assert_eq!(fa.kind, fb.kind);
            assert_eq!(fa.amplitude, fb.amplitude);
        }
    }

    #[test]
    fn off_resonant_burn_warns_with_empty_pattern() {
        let (scheme, table, branching) = setup();
        let burn = scheme.optical_origin() + 50.0e9;
        let p = predict_holes_antiholes(&scheme, &table, burn, &branching).unwrap();
        assert!(p.features.is_empty());
        assert!(p.warning.is_some());
    }

    #[test]
    fn trench_burns_every_covered_transition() {
        let (scheme, table, branching) = setup();
        // interval spanning the delta_m = 0 lines of grounds 0 and 1
        let lo = scheme.transition_frequency(0, 0) - 1.0e6;
        let hi = scheme.transition_frequency(1, 1) + 1.0e6;
        let p = predict_pattern(
            &scheme,
            &table,
            &BurnSpec::Trench { start_hz: lo, stop_hz: hi },
            &branching,
        )
        .unwrap();
        assert_eq!(p.burned_grounds, vec![0, 1]);
        // population bookkeeping still balances with overlapping transfer
        assert!((p.hole_area() - p.antihole_area()).abs() < 1e-12);
    }

    #[test]
    fn decay_is_exponential_in_each_feature() {
        let (scheme, table, branching) = setup();
        let burn = scheme.transition_frequency(7, 7);
        let p = predict_holes_antiholes(&scheme, &table, burn, &branching).unwrap();
        let r = 0.03;
        let traj = simulate_hole_decay(&p, r, &BTreeMap::new(), 100.0, 6).unwrap();
        for (k, &t) in traj.times.iter().enumerate() {
            for (i, f) in traj.patterns[k].features.iter().enumerate() {
                let want = p.features[i].amplitude * (-r * t).exp();
                assert!((f.amplitude - want).abs() <= 1e-8 * want.max(1e-30));
            }
        }
    }

    #[test]
    fn nearest_neighbor_cross_relaxation_sets_hole_lifetime() {
        let (scheme, table, branching) = setup();
        let burn = scheme.transition_frequency(7, 7);
        let p = predict_holes_antiholes(&scheme, &table, burn, &branching).unwrap();
        let mut cross = BTreeMap::new();
        cross.insert(1, 1.0 / 70.0);
        let traj = simulate_hole_decay(&p, 0.0, &cross, 70.0, 2).unwrap();
        let hole_idx = p
            .features
            .iter()
            .position(|f| f.kind == FeatureKind::Hole && f.offset_hz == 0.0)
            .unwrap();
        let ratio =
            traj.patterns[1].features[hole_idx].amplitude / p.features[hole_idx].amplitude;
        assert!(
            (ratio - (-1.0f64).exp()).abs() < 1e-12,
            "hole decayed to {ratio} of initial after one lifetime"
        );
    }

    #[test]
    fn distant_storage_outlives_nearest_neighbor_storage() {
        let (scheme, table, branching) = setup();
        let burn = scheme.transition_frequency(7, 7);
        let p = predict_holes_antiholes(&scheme, &table, burn, &branching).unwrap();
        let mut cross = BTreeMap::new();
        cross.insert(1, 0.1);
        cross.insert(2, 0.001);
        let traj = simulate_hole_decay(&p, 0.0, &cross, 50.0, 2).unwrap();
        let surv = |g: usize| {
            let i = p
                .features
                .iter()
                .position(|f| f.ground == g && f.kind == FeatureKind::AntiHole)
                .unwrap();
            traj.patterns[1].features[i].amplitude / p.features[i].amplitude
        };
        // ground 5 sits two steps from the burned level, ground 6 one step
        assert!(surv(5) > surv(6) * 10.0);
    }

    #[test]
    fn zero_rates_keep_pattern_static() {
        let (scheme, table, branching) = setup();
        let burn = scheme.transition_frequency(4, 4);
        let p = predict_holes_antiholes(&scheme, &table, burn, &branching).unwrap();
        let traj = simulate_hole_decay(&p, 0.0, &BTreeMap::new(), 1e4, 3).unwrap();
        for pat in &traj.patterns {
            for (f, f0) in pat.features.iter().zip(p.features.iter()) {
                assert_eq!(f.amplitude, f0.amplitude);
            }
        }
    }

    #[test]
    fn uniform_rates_preserve_area_balance_along_decay() {
        let (scheme, table, branching) = setup();
        let burn = scheme.transition_frequency(7, 7);
        let p = predict_holes_antiholes(&scheme, &table, burn, &branching).unwrap();
        // one shared rate for every class puts every feature on the same
        // exponential, so the balance survives the decay
        let mut cross = BTreeMap::new();
        let shared = 0.02;
        cross.insert(1, shared);
        cross.insert(2, shared);
        cross.insert(3, shared);
        let traj = simulate_hole_decay(&p, 0.01, &cross, 200.0, 9).unwrap();
        for pat in &traj.patterns {
            assert!(
                (pat.hole_area() - pat.antihole_area()).abs() < 1e-9,
                "hole {} vs anti {}",
                pat.hole_area(),
                pat.antihole_area()
            );
        }
    }
}
