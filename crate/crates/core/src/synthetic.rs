//! Simulated datasets with known impulse responses, used by the test suites
//! and by the bundled example data.
//!
//! All generators draw the shock `s_t` iid standard normal and return a
//! monthly frame starting in January 2000.

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{build_designs, HorizonDesign, LpSpec, SamplePolicy, Stamp, TimeSeriesFrame};

const BURN_IN: usize = 100;

fn frame(columns: Vec<(&str, Vec<f64>)>) -> TimeSeriesFrame {
    let n = columns[0].1.len();
    let dates = (0..n as i64).map(|i| Stamp::monthly(2000, 1).advance(i)).collect();
    let cols: IndexMap<String, Vec<f64>> = columns.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    TimeSeriesFrame::new(dates, cols).expect("generated data is valid")
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// `y_t = sum_j decay^j s_{t-j} + noise * e_t`.
///
/// The local projection of `y_{t+h}` on `s_t` has coefficient `decay^h`.
pub fn distributed_lag(t: usize, decay: f64, noise: f64, seed: u64) -> TimeSeriesFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = t + BURN_IN;
    let s = normals(&mut rng, n);
    let e = normals(&mut rng, n);
    let mut y = vec![0.0; n];
    let mut state = 0.0;
    for i in 0..n {
        // the geometric lag sum is an AR(1) in the shock
        state = decay * state + s[i];
        y[i] = state + noise * e[i];
    }
    frame(vec![("y", y[BURN_IN..].to_vec()), ("s", s[BURN_IN..].to_vec())])
}

/// Sign-dependent response one period after the shock:
/// `y_t = g(s_{t-1}) + noise * e_t` with `g(x) = x` for `x > 0` and `0.2 x` otherwise.
pub fn asymmetric(t: usize, noise: f64, seed: u64) -> TimeSeriesFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = normals(&mut rng, t + 1);
    let e = normals(&mut rng, t + 1);
    let g = |x: f64| if x > 0.0 { x } else { 0.2 * x };
    let y: Vec<f64> = (1..=t).map(|i| g(s[i - 1]) + noise * e[i]).collect();
    frame(vec![("y", y), ("s", s[1..].to_vec())])
}

/// Response whose sign depends on an observed persistent regime `z_t` in {0, 1}:
/// `y_t = b(z_t) s_t + 0.5 b(z_{t-1}) s_{t-1} + noise * e_t` with `b(1) = 1`, `b(0) = -1`.
pub fn two_regime(t: usize, noise: f64, seed: u64) -> TimeSeriesFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = t + 1;
    let s = normals(&mut rng, n);
    let e = normals(&mut rng, n);
    let mut z = vec![0.0; n];
    z[0] = if rng.random::<bool>() { 1.0 } else { 0.0 };
    for i in 1..n {
        z[i] = if rng.random::<f64>() < 0.95 { z[i - 1] } else { 1.0 - z[i - 1] };
    }
    let b = |r: f64| if r > 0.5 { 1.0 } else { -1.0 };
    let y: Vec<f64> = (1..n).map(|i| b(z[i]) * s[i] + 0.5 * b(z[i - 1]) * s[i - 1] + noise * e[i]).collect();
    frame(vec![("y", y), ("s", s[1..].to_vec()), ("z", z[1..].to_vec())])
}

/// The dataset shipped with the command-line tool.
///
/// 240 months of `y_t = sum_j 0.8^j s_{t-j} + 0.5 z_{t-1} + 0.5 e_t` with an
/// independent AR(1) control `z_t = 0.5 z_{t-1} + u_t`, seed 20240601. The
/// true impulse response of `y` to `s` is `0.8^h`.
pub fn bundled() -> TimeSeriesFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(20240601);
    let n = 240 + BURN_IN;
    let s = normals(&mut rng, n);
    let u = normals(&mut rng, n);
    let e = normals(&mut rng, n);
    let mut z = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut state = 0.0;
    for i in 0..n {
        z[i] = if i > 0 { 0.5 * z[i - 1] } else { 0.0 } + u[i];
        state = 0.8 * state + s[i];
        let zl = if i > 0 { z[i - 1] } else { 0.0 };
        y[i] = state + 0.5 * zl + 0.5 * e[i];
    }
    frame(vec![
        ("y", y[BURN_IN..].to_vec()),
        ("s", s[BURN_IN..].to_vec()),
        ("z", z[BURN_IN..].to_vec()),
    ])
}

/// Randomized regression designs for identity checks.
///
/// Returns at least `n` designs with `T` in `[40, 400]` and `K` in `[2, 20]`.
/// Half are drawn directly (intercept, shock, correlated controls, some
/// heavy-tailed shocks); the rest come from random frames run through
/// [`build_designs`], contributing every horizon of a short projection.
pub fn fuzz_designs(n: usize, seed: u64) -> Vec<HorizonDesign> {
    let mut out = Vec::new();
    let mut case = 0u64;
    while out.len() < n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(case));
        if case.is_multiple_of(2) {
            out.push(direct_design(&mut rng));
        } else {
            out.extend(frame_designs(&mut rng));
        }
        case += 1;
    }
    out
}

fn direct_design(rng: &mut ChaCha8Rng) -> HorizonDesign {
    let t = rng.random_range(40..=400);
    let k = rng.random_range(2..=20usize);
    let heavy = rng.random::<f64>() < 0.3;
    let scale = 10f64.powf(rng.random_range(-1.0..1.0));
    let s: Vec<f64> = (0..t)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            if heavy {
                // ratio of normals: Cauchy-like outliers with high leverage
                let d: f64 = rng.sample(StandardNormal);
                scale * (z / d.abs().max(0.2))
            } else {
                scale * z
            }
        })
        .collect();
    let mut x = DMatrix::zeros(t, k);
    for i in 0..t {
        x[(i, 0)] = 1.0;
        x[(i, 1)] = s[i];
    }
    for j in 2..k {
        let load = rng.random_range(-0.9..0.9);
        let col_scale = 10f64.powf(rng.random_range(-1.0..1.0));
        let shift = rng.random_range(-2.0..2.0);
        for i in 0..t {
            let e: f64 = rng.sample(StandardNormal);
            let prev = if j > 2 { x[(i, j - 1)] } else { 0.0 };
            x[(i, j)] = col_scale * (load * s[i] / scale + 0.3 * prev / col_scale.max(1e-12) + e) + shift;
        }
    }
    let b: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
    let y = DVector::from_fn(t, |i, _| {
        let lin: f64 = (0..k).map(|j| x[(i, j)] * b[j] / (1.0 + x.column(j).amax())).sum();
        let e: f64 = rng.sample(StandardNormal);
        lin + 0.5 * (x[(i, 1)] / scale).powi(2) + e
    });
    let names = (0..k).map(|j| match j {
        0 => "const".to_string(),
        1 => "s".to_string(),
        _ => format!("x{j}"),
    });
    let dates: Vec<Stamp> = (0..t as i64).map(|i| Stamp::monthly(2000, 1).advance(i)).collect();
    HorizonDesign {
        horizon: 0,
        y,
        x,
        shock_col: 1,
        column_names: names.collect(),
        dates,
        rows: (0..t).collect(),
        policy: SamplePolicy::Maximal,
    }
}

fn frame_designs(rng: &mut ChaCha8Rng) -> Vec<HorizonDesign> {
    let horizons = rng.random_range(0..=3usize);
    let trend = rng.random_range(0..=1usize);
    let (lags, controls) = loop {
        let lags = rng.random_range(0..=4usize);
        let controls = rng.random_range(0..=3usize);
        let k = 2 + trend + lags * (2 + controls);
        if k <= 20 {
            break (lags, controls);
        }
    };
    let t = rng.random_range(40..=400usize);
    let n = t + lags + horizons;
    let s = normals(rng, n);
    let mut cols = vec![("s".to_string(), s.clone())];
    let mut zs = Vec::new();
    for c in 0..controls {
        let rho = rng.random_range(0.0..0.9);
        let u = normals(rng, n);
        let mut z = vec![0.0; n];
        for i in 0..n {
            z[i] = if i > 0 { rho * z[i - 1] } else { 0.0 } + u[i] + 0.3 * s[i];
        }
        cols.push((format!("z{c}"), z.clone()));
        zs.push(z);
    }
    let e = normals(rng, n);
    let decay = rng.random_range(0.0..0.95);
    let mut y = vec![0.0; n];
    let mut state = 0.0;
    for i in 0..n {
        state = decay * state + s[i];
        let zc: f64 = zs.iter().map(|z| if i > 0 { 0.4 * z[i - 1] } else { 0.0 }).sum();
        y[i] = state + zc + 0.01 * i as f64 + e[i];
    }
    cols.insert(0, ("y".to_string(), y));
    let dates = (0..n as i64).map(|i| Stamp::monthly(1990, 1).advance(i)).collect();
    let frame = TimeSeriesFrame::new(dates, cols.into_iter().collect()).expect("generated data is valid");
    let mut spec = LpSpec::new("y", "s", horizons);
    spec.controls = (0..controls).map(|c| format!("z{c}")).collect();
    spec.lags = lags;
    spec.trend_degree = trend;
    build_designs(&frame, &spec).expect("generated designs are full rank")
}
