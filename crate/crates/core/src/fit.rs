//! Nonlinear least squares (damped Gauss-Newton with a Levenberg-style
//! trust parameter), RMSD-doubling uncertainty intervals via profile scans,
//! and fit drivers for each experiment.
//!
//! Conventions: the residual closure maps a parameter vector to a residual
//! vector; the cost is the residual sum of squares and rmsd = sqrt(cost/n).
//! Jacobians are forward finite differences with step sqrt(eps) x scale.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::dynamics::{rate_matrix, RelaxationParams};
use crate::echo::EchoDecayModel;
use crate::error::{Error, Result};
use crate::levels::{
    m_label, transition_table, LevelScheme, PopulationState, StrengthModel, LEVELS,
};
use crate::ode::{integrate_sampled, OdeOptions};
use crate::spectrum::{
    absorption_basis, AbsorptionModel, IsotopeComposition, Lineshape, Spectrum,
    DEFAULT_PEAK_CALIBRATION,
};

const MAX_ITERATIONS: usize = 500;
const GRADIENT_TOL_RELATIVE: f64 = 1e-10;
const STEP_TOL: f64 = 1e-12;
const INTERVAL_TOL_RELATIVE: f64 = 1e-3;

/// One fit parameter: a name, a starting value, and box bounds.
#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: String,
    pub initial: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ParamSpec {
    pub fn new(name: &str, initial: f64) -> Self {
        ParamSpec {
            name: name.to_string(),
            initial,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn bounded(name: &str, initial: f64, lower: f64, upper: f64) -> Self {
        ParamSpec { name: name.to_string(), initial, lower, upper }
    }

    fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::InvalidConfig("parameter name must not be empty".into()));
        }
        if !self.initial.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "initial value for {} must be finite, got {}",
                self.name, self.initial
            )));
        }
        if self.lower.is_nan() || self.upper.is_nan() || self.lower > self.upper {
            return Err(Error::InvalidConfig(format!(
                "bounds for {} must satisfy lower <= upper, got [{}, {}]",
                self.name, self.lower, self.upper
            )));
        }
        if self.initial < self.lower || self.initial > self.upper {
            return Err(Error::InvalidConfig(format!(
                "initial value {} for {} outside bounds [{}, {}]",
                self.initial, self.name, self.lower, self.upper
            )));
        }
        Ok(())
    }

    /// Magnitude used for finite-difference and scan step sizing. The unit
    /// floor keeps steps meaningful when a parameter starts at zero.
    fn scale(&self) -> f64 {
        self.initial.abs().max(1.0)
    }
}

/// RMSD-doubling uncertainty interval. An open flag means the RMSD never
/// reached twice the optimum before hitting that bound; the recorded
/// endpoint is then the bound itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
    pub low_open: bool,
    pub high_open: bool,
}

impl Interval {
    pub fn point(value: f64) -> Self {
        Interval { low: value, high: value, low_open: false, high_open: false }
    }

    /// Endpoint-inclusive membership, open flags notwithstanding.
    pub fn contains(&self, value: f64) -> bool {
        value >= self.low && value <= self.high
    }

    pub fn width(&self) -> f64 {
        self.high - self.low
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub names: Vec<String>,
    pub params: Vec<f64>,
    /// Root-mean-square deviation at the optimum, model units.
    pub rmsd: f64,
    /// Per-parameter RMSD-doubling intervals; empty until a scan is run.
    pub intervals: Vec<Interval>,
    pub iterations: usize,
    pub converged: bool,
    pub residual_count: usize,
    /// Cost (residual sum of squares) after each accepted step, starting
    /// with the initial point. Non-increasing by construction.
    pub cost_trace: Vec<f64>,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.params[i])
    }

    pub fn interval(&self, name: &str) -> Option<&Interval> {
        self.names
            .iter()
            .position(|n| n == name)
            .and_then(|i| self.intervals.get(i))
    }

    /// Structured text report: parameter table with intervals, RMSD,
    /// iteration count, convergence flag.
    pub fn report(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "fit: {} after {} iterations, rmsd {:.6e} over {} residuals\n",
            if self.converged { "converged" } else { "NOT converged" },
            self.iterations,
            self.rmsd,
            self.residual_count
        ));
        out.push_str(&format!(
            "{:<14} {:>14}   {}\n",
            "parameter", "value", "rmsd-doubling interval"
        ));
        for (i, name) in self.names.iter().enumerate() {
            let interval = match self.intervals.get(i) {
                Some(iv) => format!(
                    "{}{:.6e}, {:.6e}{}",
                    if iv.low_open { "(" } else { "[" },
                    iv.low,
                    iv.high,
                    if iv.high_open { ")" } else { "]" }
                ),
                None => "-".to_string(),
            };
            out.push_str(&format!("{:<14} {:>14.6e}   {}\n", name, self.params[i], interval));
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

fn clamp_to_bounds(p: &mut [f64], specs: &[ParamSpec]) {
    for (v, s) in p.iter_mut().zip(specs) {
        *v = v.clamp(s.lower, s.upper);
    }
}

/// Forward finite-difference Jacobian, one backward column where a forward
/// step would leave the upper bound.
fn jacobian<F>(
    residual: &mut F,
    p: &[f64],
    specs: &[ParamSpec],
    r0: &[f64],
) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = r0.len();
    let k = p.len();
    let sqrt_eps = f64::EPSILON.sqrt();
    let mut j = DMatrix::zeros(n, k);
    let mut pp = p.to_vec();
    for col in 0..k {
        if specs[col].lower == specs[col].upper {
            continue; // pinned parameter, zero column
        }
        let mut h = sqrt_eps * p[col].abs().max(specs[col].scale());
        if p[col] + h > specs[col].upper {
            h = -h;
        }
        pp[col] = p[col] + h;
        let h_actual = pp[col] - p[col];
        if h_actual == 0.0 {
            return Err(Error::Numerical(format!(
                "finite-difference step vanished for {}",
                specs[col].name
            )));
        }
        let ri = residual(&pp)?;
        pp[col] = p[col];
        if ri.len() != n {
            return Err(Error::Numerical("residual length changed between evaluations".into()));
        }
        for (row, (&a, &b)) in ri.iter().zip(r0).enumerate() {
            let d = (a - b) / h_actual;
            if !d.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite derivative of residual {row} with respect to {}",
                    specs[col].name
                )));
            }
            j[(row, col)] = d;
        }
    }
    Ok(j)
}

/// Gradient with inward-infeasible components zeroed: at an active bound a
/// component pushing further outside cannot be followed, so it does not
/// count against convergence.
fn projected_gradient(g: &DVector<f64>, p: &[f64], specs: &[ParamSpec]) -> DVector<f64> {
    let mut pg = g.clone();
    for i in 0..p.len() {
        // descent moves against the gradient sign
        if (p[i] <= specs[i].lower && g[i] > 0.0) || (p[i] >= specs[i].upper && g[i] < 0.0) {
            pg[i] = 0.0;
        }
    }
    pg
}

/// Damped Gauss-Newton step with two-metric bound projection (projected
/// Newton in the sense of Bertsekas): coordinates sitting at a bound with
/// the gradient pushing outward are frozen, the damped normal system is
/// solved over the free coordinates only, and any overshoot of the free
/// step is clamped by the caller. Clamping the full coupled step instead
/// zigzags along active bounds. Returns None when the reduced system is
/// rank deficient.
fn solve_projected(
    jtj: &DMatrix<f64>,
    g: &DVector<f64>,
    lambda: f64,
    p: &[f64],
    specs: &[ParamSpec],
) -> Option<DVector<f64>> {
    let k = p.len();
    let free: Vec<usize> = (0..k)
        .filter(|&i| {
            !((p[i] <= specs[i].lower && g[i] > 0.0) || (p[i] >= specs[i].upper && g[i] < 0.0))
        })
        .collect();
    let mut d = DVector::zeros(k);
    if free.is_empty() {
        // KKT point; the projected-gradient test catches this first
        return Some(d);
    }
    let m = free.len();
    let mut a = DMatrix::zeros(m, m);
    let mut rhs = DVector::zeros(m);
    for (ri, &i) in free.iter().enumerate() {
        rhs[ri] = -g[i];
        for (ci, &j2) in free.iter().enumerate() {
            a[(ri, ci)] = jtj[(i, j2)];
        }
        a[(ri, ri)] += lambda * jtj[(i, i)];
    }
    let sol = Cholesky::new(a)?.solve(&rhs);
    for (ri, &i) in free.iter().enumerate() {
        d[i] = sol[ri];
    }
    Some(d)
}

/// Damped Gauss-Newton descent. The trust parameter starts at zero (pure
/// Gauss-Newton, exact in one step for linear models) and grows only on
/// rejected steps. A Cholesky failure means the damped normal matrix is
/// rank deficient (some column identically zero), so the step falls back
/// to steepest descent with the Cauchy length.
pub fn least_squares<F>(mut residual: F, specs: &[ParamSpec]) -> Result<FitResult>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    minimize(&mut residual, specs)
}

fn minimize<F>(residual: &mut F, specs: &[ParamSpec]) -> Result<FitResult>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if specs.is_empty() {
        return Err(Error::InvalidConfig("at least one parameter is required".into()));
    }
    for s in specs {
        s.validate()?;
    }
    for (i, a) in specs.iter().enumerate() {
        if specs[i + 1..].iter().any(|b| b.name == a.name) {
            return Err(Error::InvalidConfig(format!("duplicate parameter name {}", a.name)));
        }
    }

    let mut p: Vec<f64> = specs.iter().map(|s| s.initial).collect();
    clamp_to_bounds(&mut p, specs);

    let mut r = residual(&p)?;
    if r.is_empty() {
        return Err(Error::InsufficientData("residual vector is empty".into()));
    }
    if !r.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("residual not finite at initial point".into()));
    }
    let n = r.len();
    let mut cost: f64 = r.iter().map(|v| v * v).sum();

    let mut warnings: Vec<String> = Vec::new();
    let mut cost_trace = vec![cost];
    let mut converged = false;
    let mut iterations = 0;
    let mut lambda = 0.0f64;
    let mut gnorm0: Option<f64> = None;
    let mut warned_singular = false;

    'outer: for iter in 1..=MAX_ITERATIONS {
        iterations = iter;
        let j = jacobian(residual, &p, specs, &r)?;
        let rv = DVector::from_column_slice(&r);
        let g = j.transpose() * &rv;
        let pg = projected_gradient(&g, &p, specs);
        let pgnorm = pg.norm();
        let baseline = *gnorm0.get_or_insert(pgnorm.max(f64::MIN_POSITIVE));
        if pgnorm <= GRADIENT_TOL_RELATIVE * baseline {
            converged = true;
            break;
        }
        let jtj = j.transpose() * &j;

        loop {
            let delta = match solve_projected(&jtj, &g, lambda, &p, specs) {
                Some(d) => d,
                None => {
                    if !warned_singular {
                        warnings.push("singular jacobian; falling back to gradient steps".into());
                        warned_singular = true;
                    }
                    let jg = &j * &g;
                    let denom = jg.norm_squared();
                    let alpha = if denom > 0.0 { g.norm_squared() / denom } else { 1.0 };
                    g.scale(-alpha)
                }
            };
            let mut p_try: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
            clamp_to_bounds(&mut p_try, specs);
            let step_norm = p_try
                .iter()
                .zip(&p)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();

            let cost_try = match residual(&p_try) {
                Ok(rt) if rt.len() == n && rt.iter().all(|v| v.is_finite()) => {
                    let c: f64 = rt.iter().map(|v| v * v).sum();
                    r = rt;
                    Some(c)
                }
                _ => None,
            };

            match cost_try {
                Some(c) if c < cost => {
                    let improvement = cost - c;
                    p = p_try;
                    cost = c;
                    cost_trace.push(cost);
                    if lambda > 0.0 {
                        lambda /= 10.0;
                        if lambda < 1e-12 {
                            lambda = 0.0;
                        }
                    }
                    if step_norm < STEP_TOL {
                        converged = true;
                        break 'outer;
                    }
                    // progress at the rounding level of the cost itself is
                    // polishing noise, not descent
                    if improvement <= 1e-12 * c {
                        warnings.push(format!(
                            "stopped at a numerically flat minimum at iteration {iter}"
                        ));
                        converged = true;
                        break 'outer;
                    }
                    break;
                }
                _ => {
                    // a rejected step this small means the cost is flat to
                    // float precision in every reachable direction: with
                    // finite-difference Jacobians and noisy data the
                    // gradient criterion cannot always be reached
                    let pnorm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if step_norm < 1e-9 * (1.0 + pnorm) {
                        warnings.push(format!(
                            "stopped at a numerically flat minimum at iteration {iter}"
                        ));
                        converged = true;
                        break 'outer;
                    }
                    lambda = if lambda == 0.0 { 1e-4 } else { lambda * 10.0 };
                    if lambda > 1e12 {
                        warnings.push(format!(
                            "no downhill step found at iteration {iter}; stopping early"
                        ));
                        break 'outer;
                    }
                }
            }
        }
    }

    Ok(FitResult {
        names: specs.iter().map(|s| s.name.clone()).collect(),
        params: p,
        rmsd: (cost / n as f64).sqrt(),
        intervals: Vec::new(),
        iterations,
        converged,
        residual_count: n,
        cost_trace,
        warnings,
    })
}

/// Profile RMSD at one pinned parameter value: the other parameters are
/// re-optimised (warm-started from `others`, which is updated in place).
fn profile_rmsd<F>(
    residual: &mut F,
    specs: &[ParamSpec],
    index: usize,
    value: f64,
    others: &mut Vec<f64>,
) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let k = specs.len();
    if k == 1 {
        let r = residual(&[value])?;
        if r.is_empty() {
            return Err(Error::InsufficientData("residual vector is empty".into()));
        }
        let cost: f64 = r.iter().map(|v| v * v).sum();
        return Ok((cost / r.len() as f64).sqrt());
    }
    let reduced: Vec<ParamSpec> = specs
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != index)
        .map(|(i, s)| {
            let warm = others[if i < index { i } else { i - 1 }];
            ParamSpec::bounded(&s.name, warm.clamp(s.lower, s.upper), s.lower, s.upper)
        })
        .collect();
    let mut full = vec![0.0; k];
    full[index] = value;
    let mut wrapped = |q: &[f64]| -> Result<Vec<f64>> {
        for (slot, v) in full
            .iter_mut()
            .enumerate()
            .filter(|(i, _)| *i != index)
            .map(|(_, s)| s)
            .zip(q)
        {
            *slot = *v;
        }
        residual(&full)
    };
    let res = minimize(&mut wrapped, &reduced)?;
    *others = res.params;
    Ok(res.rmsd)
}

/// Scan each parameter away from the optimum (others re-optimised, profile
/// method) to the values where the RMSD reaches twice the optimal RMSD;
/// crossings are located by bisection to 1e-3 relative. A side that hits
/// its bound before doubling is reported at the bound and flagged open.
pub fn rmsd_doubling_intervals<F>(
    mut residual: F,
    specs: &[ParamSpec],
    fitted: &FitResult,
) -> Result<Vec<Interval>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if !fitted.converged {
        return Err(Error::InvalidState(
            "interval scan requires a converged fit result".into(),
        ));
    }
    if fitted.params.len() != specs.len() {
        return Err(Error::InvalidConfig(
            "fit result and parameter specs disagree in length".into(),
        ));
    }
    if fitted.rmsd == 0.0 {
        // noiseless data: the doubling interval degenerates to a point
        return Ok(fitted.params.iter().map(|&p| Interval::point(p)).collect());
    }
    let target = 2.0 * fitted.rmsd;
    let mut intervals = Vec::with_capacity(specs.len());
    for i in 0..specs.len() {
        let centre = fitted.params[i];
        let mut scan = |direction: f64| -> Result<(f64, bool)> {
            let bound = if direction < 0.0 { specs[i].lower } else { specs[i].upper };
            let mut others = fitted.params.clone();
            let d0 = INTERVAL_TOL_RELATIVE * centre.abs().max(specs[i].scale());
            let mut inside = centre;
            let mut outside: Option<f64> = None;
            let mut d = d0;
            for _ in 0..200 {
                let mut theta = centre + direction * d;
                let hit = (direction < 0.0 && theta <= bound)
                    || (direction > 0.0 && theta >= bound);
                if hit {
                    theta = bound;
                }
                if !theta.is_finite() {
                    break;
                }
                if profile_rmsd(&mut residual, specs, i, theta, &mut others)? >= target {
                    outside = Some(theta);
                    break;
                }
                inside = theta;
                if hit {
                    break;
                }
                d *= 2.0;
            }
            let Some(mut out) = outside else {
                return Ok((bound, true));
            };
            for _ in 0..200 {
                let tol = INTERVAL_TOL_RELATIVE
                    * centre.abs().max(inside.abs()).max(out.abs());
                if (out - inside).abs() <= tol || tol == 0.0 {
                    break;
                }
                let mid = 0.5 * (inside + out);
                if profile_rmsd(&mut residual, specs, i, mid, &mut others)? >= target {
                    out = mid;
                } else {
                    inside = mid;
                }
            }
            Ok((0.5 * (inside + out), false))
        };
        let (low, low_open) = scan(-1.0)?;
        let (high, high_open) = scan(1.0)?;
        intervals.push(Interval { low, high, low_open, high_open });
    }
    Ok(intervals)
}

/// Fit A(tau) = A0 exp(-(tau/t2)^x) to (tau, amplitude) pairs. A0 is a free
/// scale, so the recovered t2 and x are invariant under amplitude
/// renormalisation of the data.
pub fn fit_echo_decay(data: &[(f64, f64)]) -> Result<(EchoDecayModel, FitResult)> {
    if data.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "echo decay fit needs at least 5 points, got {}",
            data.len()
        )));
    }
    for &(tau, amp) in data {
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::Domain(format!("delay must be finite and >= 0, got {tau}")));
        }
        if !amp.is_finite() {
            return Err(Error::Domain(format!("amplitude must be finite, got {amp}")));
        }
    }
    let a0_init = data.iter().map(|&(_, a)| a).fold(f64::NEG_INFINITY, f64::max);
    if a0_init <= 0.0 {
        return Err(Error::Domain("echo amplitudes must contain positive values".into()));
    }
    // crude t2 seed: the delay whose amplitude is nearest A0/e
    let target = a0_init / std::f64::consts::E;
    let t2_init = data
        .iter()
        .filter(|&&(tau, _)| tau > 0.0)
        .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
        .map(|&(tau, _)| tau)
        .ok_or_else(|| Error::InsufficientData("all delays are zero".into()))?;

    let specs = [
        ParamSpec::bounded("a0", a0_init, f64::MIN_POSITIVE, f64::INFINITY),
        ParamSpec::bounded("t2", t2_init, 1e-12, f64::INFINITY),
        ParamSpec::bounded("x", 1.0, 0.05, 3.0),
    ];
    let residual = |p: &[f64]| -> Result<Vec<f64>> {
        let (a0, t2, x) = (p[0], p[1], p[2]);
        Ok(data
            .iter()
            .map(|&(tau, amp)| a0 * (-(tau / t2).powf(x)).exp() - amp)
            .collect())
    };
    let mut result = least_squares(residual, &specs)?;
    if !result.converged {
        return Err(Error::Numerical(format!(
            "echo decay fit did not converge after {} iterations, rmsd {:.3e}",
            result.iterations, result.rmsd
        )));
    }
    result.intervals = rmsd_doubling_intervals(residual, &specs, &result)?;
    let model = EchoDecayModel::new(result.params[1], result.params[2])?;
    Ok((model, result))
}

/// Default bottleneck mask for the relaxation-rate fit: the plateau above
/// 2.6 K is excluded from the model by design.
pub const EQ1_MASK_MAX_K: f64 = 2.6;

/// Fit the two-coefficient relaxation law (direct + resonant phonon terms,
/// Raman fixed at zero) to (temperature, rate) pairs. Points outside the
/// mask are dropped from the residual entirely.
pub fn fit_eq1(
    rates: &[(f64, f64)],
    splitting_hz: f64,
    mask: Option<(f64, f64)>,
) -> Result<(RelaxationParams, FitResult)> {
    if !(splitting_hz.is_finite() && splitting_hz > 0.0) {
        return Err(Error::Domain(format!(
            "splitting must be finite and positive, got {splitting_hz}"
        )));
    }
    let (t_min, t_max) = mask.unwrap_or((0.0, EQ1_MASK_MAX_K));
    if !(t_min < t_max) {
        return Err(Error::InvalidConfig(format!(
            "mask range must satisfy min < max, got [{t_min}, {t_max}]"
        )));
    }
    let kept: Vec<(f64, f64)> = rates
        .iter()
        .copied()
        .filter(|&(t, _)| t >= t_min && t <= t_max)
        .collect();
    if kept.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "relaxation fit needs at least 3 points inside the mask, got {}",
            kept.len()
        )));
    }
    for &(t, rate) in &kept {
        if !(t > 0.0 && t.is_finite() && rate.is_finite()) {
            return Err(Error::Domain(format!("bad rate point ({t}, {rate})")));
        }
    }

    let model_rate = |gamma_d: f64, gamma_or: f64, t: f64| -> Result<f64> {
        let params = RelaxationParams { gamma_d, gamma_r: 0.0, gamma_or, splitting_hz };
        params.gamma(t)
    };

    // linear pre-solve of the 2x2 normal equations; this seeds the scan
    // step sizing as much as the descent itself
    let mut a11 = 0.0;
    let mut a12 = 0.0;
    let mut a22 = 0.0;
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &(t, rate) in &kept {
        let c1 = t;
        let c2 = model_rate(0.0, 1.0, t)?;
        a11 += c1 * c1;
        a12 += c1 * c2;
        a22 += c2 * c2;
        b1 += c1 * rate;
        b2 += c2 * rate;
    }
    let det = a11 * a22 - a12 * a12;
    let (mut gd0, mut gor0) = if det.abs() > 0.0 {
        ((b1 * a22 - b2 * a12) / det, (a11 * b2 - a12 * b1) / det)
    } else {
        (b1 / a11, 0.0)
    };
    gd0 = gd0.max(0.0);
    gor0 = gor0.max(0.0);

    let specs = [
        ParamSpec::bounded("gamma_d", gd0, 0.0, f64::INFINITY),
        ParamSpec::bounded("gamma_or", gor0, 0.0, f64::INFINITY),
    ];
    let residual = |p: &[f64]| -> Result<Vec<f64>> {
        kept.iter()
            .map(|&(t, rate)| Ok(model_rate(p[0], p[1], t)? - rate))
            .collect()
    };
    let mut result = least_squares(residual, &specs)?;
    if !result.converged {
        return Err(Error::Numerical(format!(
            "relaxation fit did not converge after {} iterations, rmsd {:.3e}",
            result.iterations, result.rmsd
        )));
    }
    result.intervals = rmsd_doubling_intervals(residual, &specs, &result)?;
    let params = RelaxationParams {
        gamma_d: result.params[0],
        gamma_r: 0.0,
        gamma_or: result.params[1],
        splitting_hz,
    };
    Ok((params, result))
}

/// The window kept around the fitted band, in total linewidths.
const BAND_WINDOW_LINEWIDTHS: f64 = 3.0;

fn band_window(
    model: &AbsorptionModel,
    band: i32,
) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for t in model.table.band(band) {
        lo = lo.min(t.frequency);
        hi = hi.max(t.frequency);
    }
    if !lo.is_finite() {
        return Err(Error::InvalidState(format!("transition table has no band {band}")));
    }
    Ok((lo, hi))
}

/// Estimate ground-state populations from the low-absorption side band
/// (the seven transitions one step down), where the decreasing strength
/// trend separates the sublevels cleanly. p1..p7 are free parameters and
/// p0 closes the sum to one; absorption is linear in all of them, so the
/// descent lands in one Gauss-Newton step.
pub fn fit_population_fractions(
    spectrum: &Spectrum,
    scheme: &LevelScheme,
    lineshape: &Lineshape,
) -> Result<(PopulationState, FitResult)> {
    let table = transition_table(scheme, &StrengthModel::default())?;
    let model = AbsorptionModel::new(
        scheme.clone(),
        table,
        lineshape.clone(),
        DEFAULT_PEAK_CALIBRATION,
        IsotopeComposition::default(),
    )?;
    let (band_lo, band_hi) = band_window(&model, -1)?;
    let f_lo = spectrum.frequencies.iter().copied().fold(f64::INFINITY, f64::min);
    let f_hi = spectrum.frequencies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if f_lo > band_lo || f_hi < band_hi {
        return Err(Error::Domain(format!(
            "spectrum grid [{f_lo:.3e}, {f_hi:.3e}] does not cover the delta_m = -1 band \
             [{band_lo:.3e}, {band_hi:.3e}]"
        )));
    }
    let margin = BAND_WINDOW_LINEWIDTHS * model.lineshape.total_fwhm();
    let window: Vec<(f64, f64)> = spectrum
        .frequencies
        .iter()
        .zip(&spectrum.values)
        .filter(|(f, _)| **f >= band_lo - margin && **f <= band_hi + margin)
        .map(|(f, v)| (*f, *v))
        .collect();
    if window.len() < LEVELS {
        return Err(Error::InsufficientData(format!(
            "only {} grid points fall inside the fitted band window",
            window.len()
        )));
    }
    let freqs: Vec<f64> = window.iter().map(|&(f, _)| f).collect();
    let (basis, impurity) = absorption_basis(&model, &freqs)?;

    // with p0 = 1 - sum(p), the model is baseline + sum_g p_g (B_g - B_0)
    let baseline: Vec<f64> = basis
        .iter()
        .zip(&impurity)
        .map(|(row, imp)| imp + row[0])
        .collect();

    // linear pre-solve for the seeds
    let mut a = DMatrix::zeros(LEVELS - 1, LEVELS - 1);
    let mut b = DVector::zeros(LEVELS - 1);
    for (k, &(_, y)) in window.iter().enumerate() {
        for gi in 1..LEVELS {
            let di = basis[k][gi] - basis[k][0];
            b[gi - 1] += di * (y - baseline[k]);
            for gj in 1..LEVELS {
                a[(gi - 1, gj - 1)] += di * (basis[k][gj] - basis[k][0]);
            }
        }
    }
    let seeds: Vec<f64> = match Cholesky::new(a) {
        Some(ch) => {
            let v: DVector<f64> = ch.solve(&b);
            v.iter().map(|x| x.clamp(0.0, 1.0)).collect()
        }
        None => vec![1.0 / LEVELS as f64; LEVELS - 1],
    };

    let specs: Vec<ParamSpec> = (1..LEVELS)
        .map(|g| ParamSpec::bounded(&format!("p({})", m_label(g)), seeds[g - 1], 0.0, 1.0))
        .collect();
    let residual = |p: &[f64]| -> Result<Vec<f64>> {
        Ok(window
            .iter()
            .enumerate()
            .map(|(k, &(_, y))| {
                let mut v = baseline[k];
                for (g, pg) in p.iter().enumerate() {
                    v += pg * (basis[k][g + 1] - basis[k][0]);
                }
                v - y
            })
            .collect())
    };
    let mut result = least_squares(residual, &specs)?;
    if !result.converged {
        return Err(Error::Numerical(format!(
            "population fit did not converge after {} iterations, rmsd {:.3e}",
            result.iterations, result.rmsd
        )));
    }
    result.intervals = rmsd_doubling_intervals(residual, &specs, &result)?;

    // project back onto the simplex: fit noise can push the closed sum a
    // hair past one
    let mut fractions = [0.0; LEVELS];
    let sum: f64 = result.params.iter().sum();
    fractions[0] = (1.0 - sum).max(0.0);
    fractions[1..].copy_from_slice(&result.params);
    let total: f64 = fractions.iter().sum();
    for v in &mut fractions {
        *v /= total;
    }
    let state = PopulationState::new(fractions)?;
    Ok((state, result))
}

/// Fit the relaxation rate to a time series of absorption spectra. The
/// initial sublevel populations and a global amplitude scale are free
/// nuisance parameters, so the recovered rate is invariant under uniform
/// rescaling of the data.
pub fn fit_relaxation_timeseries(
    series: &[(f64, Spectrum)],
    scheme: &LevelScheme,
    temperature_k: f64,
    lineshape: &Lineshape,
) -> Result<(f64, FitResult)> {
    if series.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "relaxation time series needs at least 3 spectra, got {}",
            series.len()
        )));
    }
    let times: Vec<f64> = series.iter().map(|&(t, _)| t).collect();
    for w in times.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Domain("timestamps must be strictly increasing".into()));
        }
    }
    if !(times[0].is_finite() && times[0] >= 0.0) {
        return Err(Error::Domain(format!("timestamps must be >= 0, got {}", times[0])));
    }
    let first = &series[0].1;
    if series
        .iter()
        .all(|(_, s)| s.frequencies == first.frequencies && s.values == first.values)
    {
        return Err(Error::InsufficientData(
            "all spectra are identical; the series shows no evolution and the rate is \
             unidentifiable"
                .into(),
        ));
    }

    let table = transition_table(scheme, &StrengthModel::default())?;
    let model = AbsorptionModel::new(
        scheme.clone(),
        table,
        lineshape.clone(),
        DEFAULT_PEAK_CALIBRATION,
        IsotopeComposition::default(),
    )?;
    // the basis is rate independent, so synthesis inside the residual is a
    // dot product per grid point
    let mut bases = Vec::with_capacity(series.len());
    for (_, s) in series {
        if s.is_empty() {
            return Err(Error::InsufficientData("empty spectrum in series".into()));
        }
        bases.push(absorption_basis(&model, &s.frequencies)?);
    }

    // seed the initial populations from the first spectrum when it covers
    // the fitted band; otherwise start uniform
    let seed_pops = fit_population_fractions(first, scheme, lineshape)
        .map(|(p, _)| *p.fractions())
        .unwrap_or([1.0 / LEVELS as f64; LEVELS]);

    let span = times[times.len() - 1] - times[0];
    let mut specs = vec![
        ParamSpec::bounded("gamma", 1.0 / span, 0.0, f64::INFINITY),
        ParamSpec::bounded("scale", 1.0, f64::MIN_POSITIVE, f64::INFINITY),
    ];
    for g in 1..LEVELS {
        specs.push(ParamSpec::bounded(
            &format!("p({})", m_label(g)),
            seed_pops[g].clamp(0.0, 1.0),
            0.0,
            1.0,
        ));
    }

    let opts = OdeOptions::default();
    let residual = |p: &[f64]| -> Result<Vec<f64>> {
        let gamma = p[0];
        let scale = p[1];
        let mut init = [0.0; LEVELS];
        init[0] = 1.0 - p[2..].iter().sum::<f64>();
        init[1..].copy_from_slice(&p[2..]);
        let m = rate_matrix(scheme, temperature_k, gamma, None)?;
        let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
            for (i, di) in dy.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (j, &yj) in y.iter().enumerate() {
                    acc += m[i][j] * yj;
                }
                *di = acc;
            }
        };
        let sol = integrate_sampled(rhs, times[0], &init, &times, &opts)?;
        let mut out = Vec::new();
        for (k, (_, s)) in series.iter().enumerate() {
            let (basis, impurity) = &bases[k];
            let pops = &sol.states[k];
            for (row, (b, imp)) in basis.iter().zip(impurity).enumerate() {
                let mut v = *imp;
                for (g, pg) in pops.iter().enumerate() {
                    v += pg * b[g];
                }
                out.push(scale * v - s.values[row]);
            }
        }
        Ok(out)
    };

    // seed the scale from the overall data/model ratio so a uniformly
    // rescaled series starts near its optimum
    let p0: Vec<f64> = specs.iter().map(|s| s.initial).collect();
    let r0 = residual(&p0)?;
    let data_sum: f64 = series.iter().flat_map(|(_, s)| s.values.iter()).map(|v| v.abs()).sum();
    let model_sum: f64 = r0
        .iter()
        .zip(series.iter().flat_map(|(_, s)| s.values.iter()))
        .map(|(r, y)| (r + y).abs())
        .sum();
    if model_sum > 0.0 && data_sum > 0.0 {
        specs[1].initial = data_sum / model_sum;
    }

    let mut result = least_squares(residual, &specs)?;
    if !result.converged {
        return Err(Error::Numerical(format!(
            "time-series fit did not converge after {} iterations, rmsd {:.3e}",
            result.iterations, result.rmsd
        )));
    }
    result.intervals = rmsd_doubling_intervals(residual, &specs, &result)?;
    Ok((result.params[0], result))
}
