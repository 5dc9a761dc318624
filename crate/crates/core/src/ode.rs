//! Adaptive Dormand-Prince 5(4) integrator for small dense systems.
//!
//! Step control follows the usual embedded-pair scheme: the 4th-order
//! solution provides the local error estimate, accepted steps scale the
//! next step by err^(-1/5) with safety 0.9, clamped to [0.2, 5].

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-9, atol: 1e-12, max_steps: 2_000_000 }
    }
}

#[derive(Debug, Clone)]
pub struct OdeSolution {
    /// State at each requested sample time.
    pub states: Vec<Vec<f64>>,
    pub steps_taken: usize,
    /// Sum of accepted local error norms: an upper-bound style estimate of
    /// the accumulated truncation error for contracting dynamics.
    pub error_estimate: f64,
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate dy/dt = rhs(t, y) from t0, sampling the solution at each of
/// `sample_times` (strictly increasing, first >= t0). Steps land exactly on
/// sample times by clipping.
pub fn integrate_sampled<F>(
    mut rhs: F,
    t0: f64,
    y0: &[f64],
    sample_times: &[f64],
    opts: &OdeOptions,
) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if sample_times.is_empty() {
        return Err(Error::Domain("no sample times requested".into()));
    }
    let mut prev = t0;
    for &t in sample_times {
        if t < prev {
            return Err(Error::Domain("sample times must be non-decreasing from t0".into()));
        }
        prev = t;
    }
    if !(opts.rtol > 0.0 && opts.atol >= 0.0) {
        return Err(Error::Domain("tolerances must be positive".into()));
    }

    let dim = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut states = Vec::with_capacity(sample_times.len());
    let mut steps = 0usize;
    let mut err_acc = 0.0f64;

    let mut k = vec![vec![0.0; dim]; 7];
    let mut ytmp = vec![0.0; dim];
    let mut y5 = vec![0.0; dim];
    let mut y4 = vec![0.0; dim];

    // initial step heuristic from the rhs magnitude at t0
    rhs(t, &y, &mut k[0]);
    let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt().max(opts.atol);
    let fnorm = k[0].iter().map(|v| v * v).sum::<f64>().sqrt();
    let t_end = *sample_times.last().unwrap();
    let span = (t_end - t0).max(f64::MIN_POSITIVE);
    let mut h = if fnorm > 0.0 {
        (0.01 * ynorm / fnorm).min(span)
    } else {
        span
    };

    for &ts in sample_times {
        if ts == t {
            states.push(y.clone());
            continue;
        }
        while t < ts {
            if steps >= opts.max_steps {
                return Err(Error::Numerical(format!(
                    "integrator exceeded {} steps at t = {t}",
                    opts.max_steps
                )));
            }
            let clipped = h.min(ts - t);
            // stages
            rhs(t, &y, &mut k[0]);
            for s in 1..7 {
                for i in 0..dim {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += A[s][j] * kj[i];
                    }
                    ytmp[i] = y[i] + clipped * acc;
                }
                let (head, tail) = k.split_at_mut(s);
                let _ = head;
                rhs(t + C[s] * clipped, &ytmp, &mut tail[0]);
            }
            let mut err_scaled = 0.0;
            let mut err_raw = 0.0;
            for i in 0..dim {
                let mut acc5 = 0.0;
                let mut acc4 = 0.0;
                for s in 0..7 {
                    acc5 += B5[s] * k[s][i];
                    acc4 += B4[s] * k[s][i];
                }
                y5[i] = y[i] + clipped * acc5;
                y4[i] = y[i] + clipped * acc4;
                let e = y5[i] - y4[i];
                let sc = opts.atol + opts.rtol * y[i].abs().max(y5[i].abs());
                err_scaled += (e / sc) * (e / sc);
                err_raw += e * e;
            }
            err_scaled = (err_scaled / dim as f64).sqrt();
            steps += 1;
            if err_scaled <= 1.0 {
                t += clipped;
                y.copy_from_slice(&y5);
                err_acc += err_raw.sqrt();
                if !y.iter().all(|v| v.is_finite()) {
                    return Err(Error::Numerical(format!("non-finite state at t = {t}")));
                }
            }
            let factor = if err_scaled > 0.0 {
                (0.9 * err_scaled.powf(-0.2)).clamp(0.2, 5.0)
            } else {
                5.0
            };
            h = (clipped * factor).max(span * 1e-14);
        }
        states.push(y.clone());
    }

    Ok(OdeSolution { states, steps_taken: steps, error_estimate: err_acc })
}
