//! Dormand-Prince 5(4) with PI step-size control and dense output.

use serde::Serialize;

use crate::error::CphError;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Options {
    pub atol: f64,
    pub rtol: f64,
    /// Initial step; estimated when `None`.
    pub h0: Option<f64>,
    pub max_steps: usize,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            atol: 1e-8,
            rtol: 1e-8,
            h0: None,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Continuous extension over one accepted step.
#[derive(Debug, Clone)]
pub struct Dense {
    t_prev: f64,
    h: f64,
    c: [Vec<f64>; 5],
}

impl Dense {
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let th = (t - self.t_prev) / self.h;
        let th1 = 1.0 - th;
        (0..self.c[0].len())
            .map(|i| {
                let c = &self.c;
                c[0][i] + th * (c[1][i] + th1 * (c[2][i] + th * (c[3][i] + th1 * c[4][i])))
            })
            .collect()
    }
}

/// One accepted step as seen by an observer.
pub struct Step<'a> {
    pub t_prev: f64,
    pub t: f64,
    pub y_prev: &'a [f64],
    pub y: &'a [f64],
    pub dense: &'a Dense,
}

#[derive(Debug, Clone)]
pub struct Solution {
    /// State at each requested sample time.
    pub samples: Vec<Vec<f64>>,
    pub stats: Stats,
}

fn norm(e: &[f64], y0: &[f64], y1: &[f64], o: &Options) -> f64 {
    if e.is_empty() {
        return 0.0;
    }
    let s: f64 = e
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(&e, (&a, &b))| {
            let sc = o.atol + o.rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / e.len() as f64).sqrt()
}

fn axpy(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    (0..y.len())
        .map(|i| y[i] + h * terms.iter().map(|(a, k)| a * k[i]).sum::<f64>())
        .collect()
}

/// Integrates `y' = f(t, y)` from `t0` to `t1`. `samples` must be
/// nondecreasing and lie in `[t0, t1]`; `on_step` sees every accepted step.
pub fn integrate<F, O>(
    mut f: F,
    t0: f64,
    t1: f64,
    y0: &[f64],
    samples: &[f64],
    opts: &Options,
    mut on_step: O,
) -> Result<Solution, CphError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    O: FnMut(&Step),
{
    if !t0.is_finite() || !t1.is_finite() || t1 <= t0 {
        return Err(CphError::Integration(format!("need t0 < t1, got [{t0}, {t1}]")));
    }
    if !(opts.atol > 0.0 && opts.rtol > 0.0) {
        return Err(CphError::Integration("tolerances must be positive".into()));
    }
    if samples.windows(2).any(|w| w[1] < w[0]) || samples.iter().any(|&s| s < t0 || s > t1) {
        return Err(CphError::Integration("sample times must be sorted within [t0, t1]".into()));
    }
    let n = y0.len();
    let mut stats = Stats::default();
    let mut out = Vec::with_capacity(samples.len());
    let mut next = 0;
    while next < samples.len() && samples[next] == t0 {
        out.push(y0.to_vec());
        next += 1;
    }

    let mut eval = |t: f64, y: &[f64], dy: &mut [f64], stats: &mut Stats| -> Result<(), CphError> {
        f(t, y, dy);
        stats.evaluations += 1;
        if dy.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(CphError::Integration(format!("non-finite right-hand side at t = {t}")))
        }
    };

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    eval(t, &y, &mut k1, &mut stats)?;
    let span = t1 - t0;
    let mut h = match opts.h0 {
        Some(h) => h,
        None => {
            let sc: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
            let wn = |v: &[f64]| {
                if n == 0 {
                    0.0
                } else {
                    (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n as f64).sqrt()
                }
            };
            let (d0, d1) = (wn(&y), wn(&k1));
            let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
            let h0 = h0.min(span);
            let y1 = axpy(&y, h0, &[(1.0, &k1)]);
            let mut f1 = vec![0.0; n];
            eval(t + h0, &y1, &mut f1, &mut stats)?;
            let diff: Vec<f64> = f1.iter().zip(&k1).map(|(a, b)| a - b).collect();
            let d2 = wn(&diff) / h0;
            let dm = d1.max(d2);
            let h1 = if dm <= 1e-15 {
                (h0 * 1e-3).max(1e-6)
            } else {
                (0.01 / dm).powf(0.2)
            };
            (100.0 * h0).min(h1)
        }
    }
    .min(span);

    let (beta, safe, fac_min, fac_max) = (0.04, 0.9, 0.2, 10.0);
    let expo = 0.2 - beta * 0.75;
    let mut fac_old: f64 = 1e-4;
    let mut last_rejected = false;
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);

    while t < t1 {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(CphError::Integration(format!("step limit reached at t = {t}")));
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(CphError::Integration(format!("step size underflow at t = {t}")));
        }
        let last = t + h >= t1 || t1 - (t + h) < 1e-12 * span;
        if last {
            h = t1 - t;
        }
        eval(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]), &mut k2, &mut stats)?;
        eval(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]), &mut k3, &mut stats)?;
        eval(
            t + C4 * h,
            &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
            &mut k4,
            &mut stats,
        )?;
        eval(
            t + C5 * h,
            &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            &mut k5,
            &mut stats,
        )?;
        eval(
            t + h,
            &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            &mut k6,
            &mut stats,
        )?;
        let y_new = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        eval(t + h, &y_new, &mut k7, &mut stats)?;
        let err_vec = axpy(
            &vec![0.0; n],
            h,
            &[(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)],
        );
        let err = norm(&err_vec, &y, &y_new, opts);
        let fac11 = err.powf(expo);

        if err <= 1.0 {
            let fac = (fac11 / fac_old.powf(beta) / safe).clamp(1.0 / fac_max, 1.0 / fac_min);
            let mut h_new = h / fac;
            fac_old = err.max(1e-4);
            stats.accepted += 1;

            let diff: Vec<f64> = y_new.iter().zip(&y).map(|(a, b)| a - b).collect();
            let bspl: Vec<f64> = (0..n).map(|i| h * k1[i] - diff[i]).collect();
            let c3: Vec<f64> = (0..n).map(|i| diff[i] - h * k7[i] - bspl[i]).collect();
            let c4 = axpy(
                &vec![0.0; n],
                h,
                &[(D1, &k1), (D3, &k3), (D4, &k4), (D5, &k5), (D6, &k6), (D7, &k7)],
            );
            let dense = Dense {
                t_prev: t,
                h,
                c: [y.clone(), diff, bspl, c3, c4],
            };
            let t_new = if last { t1 } else { t + h };
            while next < samples.len() && samples[next] <= t_new {
                out.push(if samples[next] == t_new {
                    y_new.clone()
                } else {
                    dense.eval(samples[next])
                });
                next += 1;
            }
            on_step(&Step {
                t_prev: t,
                t: t_new,
                y_prev: &y,
                y: &y_new,
                dense: &dense,
            });

            t = t_new;
            y = y_new;
            std::mem::swap(&mut k1, &mut k7);
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
            h = h_new.min(t1 - t).max(0.0);
            if t < t1 && h == 0.0 {
                h = t1 - t;
            }
        } else {
            h /= (fac11 / safe).min(1.0 / fac_min);
            last_rejected = true;
            if stats.accepted >= 1 {
                stats.rejected += 1;
            }
        }
    }
    while next < samples.len() {
        out.push(y.clone());
        next += 1;
    }
    Ok(Solution { samples: out, stats })
}

/// `n` equally spaced times from `t0` to `t1` inclusive.
pub fn linspace(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![t0],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    t1
                } else {
                    t0 + (t1 - t0) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let ts = linspace(0.0, 5.0, 11);
        let sol = integrate(
            |_, y, dy| dy[0] = -y[0],
            0.0,
            5.0,
            &[1.0],
            &ts,
            &Options::default(),
            |_| {},
        )
        .unwrap();
        for (t, y) in ts.iter().zip(&sol.samples) {
            assert!((y[0] - (-t).exp()).abs() < 1e-7, "t={t}");
        }
    }

    #[test]
    fn harmonic_oscillator_dense_output() {
        let ts = linspace(0.0, 20.0, 157);
        let sol = integrate(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            0.0,
            20.0,
            &[1.0, 0.0],
            &ts,
            &Options::default(),
            |_| {},
        )
        .unwrap();
        for (t, y) in ts.iter().zip(&sol.samples) {
            assert!((y[0] - t.cos()).abs() < 1e-6);
            assert!((y[1] + t.sin()).abs() < 1e-6);
        }
    }

    #[test]
    fn forced_problem_and_observer() {
        let mut steps = Vec::new();
        let sol = integrate(
            |t, _, dy| dy[0] = t.cos(),
            0.0,
            3.0,
            &[0.0],
            &[3.0],
            &Options::default(),
            |s| steps.push((s.t_prev, s.t)),
        )
        .unwrap();
        assert!((sol.samples[0][0] - 3f64.sin()).abs() < 1e-8);
        assert_eq!(steps.len(), sol.stats.accepted);
        assert_eq!(steps.first().unwrap().0, 0.0);
        assert_eq!(steps.last().unwrap().1, 3.0);
        assert!(steps.windows(2).all(|w| w[0].1 == w[1].0));
    }

    #[test]
    fn empty_system() {
        let sol = integrate(|_, _, _| {}, 0.0, 1.0, &[], &[0.0, 0.5, 1.0], &Options::default(), |_| {})
            .unwrap();
        assert_eq!(sol.samples.len(), 3);
        assert!(sol.samples.iter().all(|s| s.is_empty()));
    }

    #[test]
    fn rejects_bad_input() {
        let f = |_: f64, _: &[f64], _: &mut [f64]| {};
        let o = Options::default();
        assert!(integrate(f, 1.0, 0.0, &[1.0], &[], &o, |_| {}).is_err());
        assert!(integrate(f, 0.0, 1.0, &[1.0], &[2.0], &o, |_| {}).is_err());
        let blow = |_: f64, _: &[f64], dy: &mut [f64]| dy[0] = f64::NAN;
        assert!(integrate(blow, 0.0, 1.0, &[1.0], &[], &o, |_| {}).is_err());
    }

    #[test]
    fn linspace_endpoints() {
        assert_eq!(linspace(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
        assert_eq!(linspace(2.0, 3.0, 1), vec![2.0]);
    }
}
