#![allow(dead_code)]

use hawkes_core::{EventData, ModelParams, SimConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `H_{j,k}(t-)` by direct summation over past events of `k`.
pub fn naive_h(data: &EventData, decays: &DMatrix<f64>, j: usize, k: usize, t: f64) -> f64 {
    data.node_events(k).iter().filter(|&&s| s < t).map(|&s| (-decays[(j, k)] * (t - s)).exp()).sum()
}

pub fn naive_intensity(params: &ModelParams, data: &EventData, j: usize, t: f64) -> f64 {
    let d = params.dim();
    params.mu()[j] + (0..d).map(|k| params.adjacency()[(j, k)] * naive_h(data, params.decays(), j, k, t)).sum::<f64>()
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol * (left + right).abs() {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol, depth - 1)
}

/// Adaptive Simpson on `[a, b]` for a smooth nonnegative integrand; `tol` is relative.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Integral over `[0, T]` of a function that is smooth between event times.
/// Pieces are integrated separately; the integrand is evaluated as a
/// left-limit at each piece's right end by the caller's convention.
pub fn integrate_piecewise(data: &EventData, f: &dyn Fn(f64) -> f64, tol: f64) -> f64 {
    let mut cuts: Vec<f64> = data.merged().into_iter().map(|(t, _)| t).collect();
    cuts.push(data.horizon());
    let mut total = 0.0;
    let mut prev = 0.0;
    for c in cuts {
        total += integrate(f, prev, c, tol);
        prev = c;
    }
    total
}

pub fn random_params(rng: &mut ChaCha8Rng, d: usize, opnorm: f64) -> ModelParams {
    let mu = DVector::from_fn(d, |_, _| rng.random_range(0.2..1.0));
    let raw: DMatrix<f64> = DMatrix::from_fn(d, d, |_, _| rng.random_range(0.0..1.0));
    let scale = opnorm / raw.norm().max(1e-12);
    let decays = DMatrix::from_fn(d, d, |_, _| rng.random_range(0.5..3.0));
    ModelParams::new(mu, raw * scale, decays).unwrap()
}

/// A simulated instance with at most `max_events` events.
pub fn small_instance(seed: u64, d: usize, max_events: usize) -> (ModelParams, EventData) {
    let mut r = rng(seed);
    let params = random_params(&mut r, d, 0.5);
    let mut horizon = 30.0 / d as f64;
    loop {
        let data = hawkes_core::simulate(&SimConfig::new(params.clone(), horizon, seed)).unwrap();
        if data.total_events() <= max_events && data.total_events() >= 5 {
            return (params, data);
        }
        horizon *= if data.total_events() > max_events { 0.7 } else { 1.5 };
    }
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
