//! Curve fitting and spectral feature extraction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outcome of a least-squares fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub names: Vec<String>,
    pub units: Vec<String>,
    pub params: Vec<f64>,
    /// One-sigma estimates from the curvature of the residual sum of squares.
    pub uncertainties: Vec<f64>,
    pub rss: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Warnings such as parameters pinned at a bound.
    pub flags: Vec<String>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.params[i])
    }
}

/// Options of the bounded Nelder-Mead search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    /// Stop when every vertex is within this relative distance of the best one.
    pub size_tolerance: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iterations: 20_000,
            size_tolerance: 1e-9,
            restarts: 5,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn clamp_into(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, &l), &h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(l, h);
    }
}

/// Nelder-Mead on a box; trial points are projected onto the bounds.
pub fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    scale: &[f64],
    lo: &[f64],
    hi: &[f64],
    max_iterations: usize,
    size_tolerance: f64,
) -> Minimum {
    let n = x0.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut start = x0.to_vec();
    clamp_into(&mut start, lo, hi);
    pts.push(start.clone());
    for i in 0..n {
        let mut p = start.clone();
        let mut s = scale[i];
        if p[i] + s > hi[i] {
            s = -s;
        }
        p[i] += s;
        clamp_into(&mut p, lo, hi);
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p)).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        iterations += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
        pts = order.iter().map(|&k| pts[k].clone()).collect();
        vals = order.iter().map(|&k| vals[k]).collect();

        let best = &pts[0];
        let size = pts[1..]
            .iter()
            .flat_map(|p| {
                p.iter()
                    .zip(best)
                    .zip(scale)
                    .map(|((a, b), s)| (a - b).abs() / b.abs().max(s.abs() * 1e-3).max(1e-300))
            })
            .fold(0.0, f64::max);
        if size < size_tolerance {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for p in &pts[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            let mut x: Vec<f64> = centroid
                .iter()
                .zip(&pts[n])
                .map(|(c, w)| c + t * (w - c))
                .collect();
            clamp_into(&mut x, lo, hi);
            x
        };
        let xr = along(-1.0);
        let fr = eval(&xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = eval(&xe);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let x = along(-0.5);
                let v = eval(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = eval(&x);
                (x, v)
            };
            if fc < vals[n].min(fr) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                let b = pts[0].clone();
                for k in 1..=n {
                    let mut x: Vec<f64> = pts[k].iter().zip(&b).map(|(p, q)| q + 0.5 * (p - q)).collect();
                    clamp_into(&mut x, lo, hi);
                    vals[k] = eval(&x);
                    pts[k] = x;
                }
            }
        }
    }
    let k = (0..=n)
        .min_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)))
        .unwrap_or(0);
    Minimum {
        x: pts[k].clone(),
        value: vals[k],
        converged,
        iterations,
    }
}

/// Nelder-Mead with a fixed number of seeded restarts.
///
/// Each restart begins from the best point so far, perturbed by a few percent
/// of the step scale. The best result wins; ties keep the earliest restart.
pub fn minimize(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    scale: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &SimplexOptions,
) -> Minimum {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best = nelder_mead(f, x0, scale, lo, hi, opts.max_iterations, opts.size_tolerance);
    let mut total = best.iterations;
    for _ in 0..opts.restarts {
        let mut start = best.x.clone();
        for (v, s) in start.iter_mut().zip(scale) {
            *v += 0.05 * s * (2.0 * rng.gen::<f64>() - 1.0);
        }
        let m = nelder_mead(f, &start, scale, lo, hi, opts.max_iterations, opts.size_tolerance);
        total += m.iterations;
        if m.value < best.value {
            best = m;
        } else if m.value == best.value {
            best.converged |= m.converged;
        }
    }
    best.iterations = total;
    best
}

fn check_xy(x: &[f64], y: &[f64], min_points: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DegenerateData("x and y lengths differ".into()));
    }
    if x.len() < min_points {
        return Err(Error::DegenerateData(format!(
            "{} points given, at least {min_points} required",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateData("non-finite data".into()));
    }
    let (lo, hi) = span(x);
    if lo == hi {
        return Err(Error::DegenerateData("all x values are equal".into()));
    }
    Ok(())
}

fn span(x: &[f64]) -> (f64, f64) {
    x.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
}

fn rss_of(model: &dyn Fn(f64, &[f64]) -> f64, x: &[f64], y: &[f64], p: &[f64]) -> f64 {
    x.iter().zip(y).map(|(&xi, &yi)| (model(xi, p) - yi).powi(2)).sum()
}

/// Curvature-based standard errors: cov ≈ 2 s² H⁻¹ with s² = RSS/(n − p).
fn uncertainties(rss: &dyn Fn(&[f64]) -> f64, p: &[f64], n_data: usize) -> Vec<f64> {
    let k = p.len();
    let f0 = rss(p);
    let h: Vec<f64> = p.iter().map(|v| 1e-4 * v.abs().max(1e-3)).collect();
    let mut hess = vec![0.0; k * k];
    for i in 0..k {
        for j in i..k {
            let at = |di: f64, dj: f64| {
                let mut q = p.to_vec();
                q[i] += di * h[i];
                q[j] += dj * h[j];
                rss(&q)
            };
            let v = if i == j {
                (at(1.0, 0.0) - 2.0 * f0 + at(-1.0, 0.0)) / (h[i] * h[i])
            } else {
                (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h[i] * h[j])
            };
            hess[i * k + j] = v;
            hess[j * k + i] = v;
        }
    }
    let dof = n_data.saturating_sub(k).max(1) as f64;
    let s2 = f0 / dof;
    match invert(&hess, k) {
        Some(inv) => (0..k)
            .map(|i| {
                let v = 2.0 * s2 * inv[i * k + i];
                if v >= 0.0 {
                    v.sqrt()
                } else {
                    f64::NAN
                }
            })
            .collect(),
        None => vec![f64::NAN; k],
    }
}

/// Gauss-Jordan inverse with partial pivoting.
fn invert(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| m[r * n + col].abs().total_cmp(&m[s * n + col].abs()))?;
        if m[piv * n + col].abs() <= 1e-14 * scale {
            return None;
        }
        for j in 0..n {
            m.swap(col * n + j, piv * n + j);
            inv.swap(col * n + j, piv * n + j);
        }
        let d = m[col * n + col];
        for j in 0..n {
            m[col * n + j] /= d;
            inv[col * n + j] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[r * n + col];
                if f != 0.0 {
                    for j in 0..n {
                        m[r * n + j] -= f * m[col * n + j];
                        inv[r * n + j] -= f * inv[col * n + j];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Solves the small symmetric system A x = b; `None` if singular.
fn solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let inv = invert(a, n)?;
    Some((0..n).map(|i| (0..n).map(|j| inv[i * n + j] * b[j]).sum()).collect())
}

/// Minimizes ½xᵀGx − bᵀx over x ≥ 0 with the Lawson-Hanson active-set method.
fn nonnegative_solve(g: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let restricted = |set: &[bool]| -> Option<Vec<f64>> {
        let idx: Vec<usize> = (0..n).filter(|&i| set[i]).collect();
        let m = idx.len();
        let sub: Vec<f64> = idx.iter().flat_map(|&i| idx.iter().map(move |&j| g[i * n + j])).collect();
        let rhs: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
        let z = solve(&sub, &rhs, m)?;
        let mut full = vec![0.0; n];
        for (&i, v) in idx.iter().zip(z) {
            full[i] = v;
        }
        Some(full)
    };
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut x = vec![0.0; n];
    let mut passive = vec![false; n];
    for _ in 0..4 * n + 8 {
        let w: Vec<f64> = (0..n)
            .map(|i| b[i] - (0..n).map(|j| g[i * n + j] * x[j]).sum::<f64>())
            .collect();
        let Some(j) = (0..n)
            .filter(|&i| !passive[i] && w[i] > tol)
            .max_by(|&p, &q| w[p].total_cmp(&w[q]))
        else {
            return Some(x);
        };
        passive[j] = true;
        for _ in 0..=n {
            let z = restricted(&passive)?;
            if (0..n).all(|i| !passive[i] || z[i] > 0.0) {
                x = z;
                break;
            }
            let alpha = (0..n)
                .filter(|&i| passive[i] && z[i] <= 0.0 && x[i] > z[i])
                .map(|i| x[i] / (x[i] - z[i]))
                .fold(1.0f64, f64::min);
            for i in 0..n {
                x[i] += alpha * (z[i] - x[i]);
                if passive[i] && x[i] <= 0.0 {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    Some(x)
}

/// One Gaussian component A·exp(−(x − δ)²/(2σ²)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPeak {
    pub amplitude: f64,
    pub center: f64,
    pub sigma: f64,
}

fn gaussian(x: f64, c: f64, s: f64) -> f64 {
    let u = (x - c) / s;
    (-0.5 * u * u).exp()
}

/// Sum of Gaussians at `x` for parameters laid out as (A, δ, σ) triples.
pub fn gaussian_sum(x: f64, p: &[f64]) -> f64 {
    p.chunks(3).map(|g| g[0] * gaussian(x, g[1], g[2])).sum()
}

/// Initial guesses with the given centers, amplitudes read off the data.
pub fn peaks_at(x: &[f64], y: &[f64], centers: &[f64], sigma: f64) -> Vec<GaussianPeak> {
    centers
        .iter()
        .map(|&c| {
            let k = (0..x.len())
                .min_by(|&a, &b| (x[a] - c).abs().total_cmp(&(x[b] - c).abs()))
                .unwrap_or(0);
            GaussianPeak {
                amplitude: y.get(k).copied().unwrap_or(0.0),
                center: c,
                sigma,
            }
        })
        .collect()
}

/// Least-squares fit of a sum of `initial.len()` Gaussians.
///
/// Centers and widths are searched by the bounded simplex; for every trial
/// the amplitudes are the exact non-negative linear least-squares solution.
pub fn fit_gaussian_sum(x: &[f64], y: &[f64], initial: &[GaussianPeak], opts: &SimplexOptions) -> Result<FitResult> {
    let k = initial.len();
    if k == 0 {
        return Err(Error::DegenerateData("at least one peak is required".into()));
    }
    check_xy(x, y, 3 * k + 1)?;
    let (xmin, xmax) = span(x);
    let width = xmax - xmin;
    let mut dx = f64::INFINITY;
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    for w in sorted.windows(2) {
        if w[1] > w[0] {
            dx = dx.min(w[1] - w[0]);
        }
    }
    let sig_lo = (dx / 10.0).min(width * 1e-3);
    let amplitudes = |q: &[f64]| -> Option<Vec<f64>> {
        // q holds (δ, σ) pairs
        let cols: Vec<Vec<f64>> = q
            .chunks(2)
            .map(|g| x.iter().map(|&xi| gaussian(xi, g[0], g[1])).collect())
            .collect();
        let mut a = vec![0.0; k * k];
        let mut b = vec![0.0; k];
        for i in 0..k {
            b[i] = cols[i].iter().zip(y).map(|(c, v)| c * v).sum();
            for j in i..k {
                let v: f64 = cols[i].iter().zip(&cols[j]).map(|(p, q)| p * q).sum();
                a[i * k + j] = v;
                a[j * k + i] = v;
            }
        }
        nonnegative_solve(&a, &b, k)
    };
    let full = |q: &[f64], amp: &[f64]| -> Vec<f64> {
        q.chunks(2)
            .zip(amp)
            .flat_map(|(g, &a)| [a, g[0], g[1]])
            .collect()
    };
    let objective = |q: &[f64]| -> f64 {
        match amplitudes(q) {
            Some(a) => rss_of(&gaussian_sum, x, y, &full(q, &a)),
            None => f64::INFINITY,
        }
    };
    let mut q0 = Vec::with_capacity(2 * k);
    let mut scale = Vec::with_capacity(2 * k);
    let mut lo = Vec::with_capacity(2 * k);
    let mut hi = Vec::with_capacity(2 * k);
    for g in initial {
        q0.extend([g.center, g.sigma.clamp(sig_lo, width)]);
        scale.extend([0.1 * g.sigma.abs().max(dx), 0.1 * g.sigma.abs().max(dx)]);
        lo.extend([xmin, sig_lo]);
        hi.extend([xmax, width]);
    }
    let m = minimize(&objective, &q0, &scale, &lo, &hi, opts);
    let amp = amplitudes(&m.x).ok_or_else(|| Error::DegenerateData("singular amplitude system".into()))?;
    let params = full(&m.x, &amp);
    let rss_full = |p: &[f64]| rss_of(&gaussian_sum, x, y, p);
    let mut names = Vec::new();
    let mut units = Vec::new();
    for i in 0..k {
        names.extend([format!("amplitude_{i}"), format!("center_{i}"), format!("sigma_{i}")]);
        units.extend(["1".to_string(), "x".to_string(), "x".to_string()]);
    }
    let mut flags = Vec::new();
    for (i, g) in m.x.chunks(2).enumerate() {
        if g[1] <= sig_lo * (1.0 + 1e-9) || g[1] >= width * (1.0 - 1e-9) {
            flags.push(format!("sigma_{i} at bound"));
        }
    }
    Ok(FitResult {
        model: format!("gaussian_sum_{k}"),
        uncertainties: uncertainties(&rss_full, &params, x.len()),
        rss: rss_full(&params),
        names,
        units,
        params,
        converged: m.converged,
        iterations: m.iterations,
        flags,
    })
}

fn stretched(x: f64, t2: f64, alpha: f64) -> f64 {
    (-(x / t2).powf(alpha)).exp()
}

/// Fits exp(−(τ/T₂*)^α). With `fixed_alpha` only T₂* is free.
pub fn fit_stretched_exponential(
    x: &[f64],
    y: &[f64],
    fixed_alpha: Option<f64>,
    opts: &SimplexOptions,
) -> Result<FitResult> {
    check_xy(x, y, 3)?;
    if x.iter().any(|&v| v < 0.0) {
        return Err(Error::DegenerateData("times must be >= 0".into()));
    }
    let (_, xmax) = span(x);
    let t_lo = xmax * 1e-6;
    let t_hi = xmax * 1e3;
    // guess T₂* from the first crossing of 1/e
    let guess = x
        .iter()
        .zip(y)
        .find(|(_, &v)| v < (-1.0f64).exp())
        .map(|(&t, _)| t.max(t_lo))
        .unwrap_or(xmax);
    let model = move |xi: f64, p: &[f64]| match fixed_alpha {
        Some(a) => stretched(xi, p[0], a),
        None => stretched(xi, p[0], p[1]),
    };
    let obj = |p: &[f64]| rss_of(&model, x, y, p);
    let (x0, scale, lo, hi, names, units) = match fixed_alpha {
        Some(_) => (
            vec![guess],
            vec![0.1 * guess],
            vec![t_lo],
            vec![t_hi],
            vec!["t2_star"],
            vec!["x"],
        ),
        None => (
            vec![guess, 2.0],
            vec![0.1 * guess, 0.1],
            vec![t_lo, 0.2],
            vec![t_hi, 4.0],
            vec!["t2_star", "alpha"],
            vec!["x", "1"],
        ),
    };
    let m = minimize(&obj, &x0, &scale, &lo, &hi, opts);
    let mut flags = Vec::new();
    if m.x[0] >= t_hi * (1.0 - 1e-6) {
        flags.push("t2_star at upper bound: no decay resolved".to_string());
    }
    Ok(FitResult {
        model: "stretched_exponential".into(),
        names: names.into_iter().map(String::from).collect(),
        units: units.into_iter().map(String::from).collect(),
        uncertainties: uncertainties(&obj, &m.x, x.len()),
        rss: m.value,
        params: m.x,
        converged: m.converged,
        iterations: m.iterations,
        flags,
    })
}

/// Fits 1 − a·exp(−t/τ).
pub fn fit_exponential_relaxation(x: &[f64], y: &[f64], opts: &SimplexOptions) -> Result<FitResult> {
    check_xy(x, y, 3)?;
    let (xmin, xmax) = span(x);
    let model = |t: f64, p: &[f64]| 1.0 - p[0] * (-t / p[1]).exp();
    let obj = |p: &[f64]| rss_of(&model, x, y, p);
    // a from the earliest point, τ from where the deficit has fallen to 1/e of it
    let i0 = (0..x.len()).min_by(|&a, &b| x[a].total_cmp(&x[b])).unwrap_or(0);
    let d0 = 1.0 - y[i0];
    let tau0 = x
        .iter()
        .zip(y)
        .filter(|(_, &v)| (1.0 - v).abs() < (d0 * (-1.0f64).exp()).abs())
        .map(|(&t, _)| t)
        .fold(f64::INFINITY, f64::min);
    let tau0 = if tau0.is_finite() && tau0 > xmin {
        tau0 - xmin
    } else {
        (xmax - xmin) / 3.0
    };
    let a0 = d0 * (xmin / tau0).exp().min(1e6);
    let (t_lo, t_hi) = ((xmax - xmin) * 1e-6, (xmax - xmin.min(0.0)) * 1e3 + xmax);
    let m = minimize(
        &obj,
        &[a0, tau0],
        &[0.1 * a0.abs().max(1e-3), 0.1 * tau0],
        &[-10.0, t_lo],
        &[10.0, t_hi],
        opts,
    );
    let mut flags = Vec::new();
    if m.x[0].abs() < 1e-8 {
        flags.push("amplitude is zero: tau unidentifiable".to_string());
    }
    Ok(FitResult {
        model: "exponential_relaxation".into(),
        names: vec!["a".into(), "tau".into()],
        units: vec!["1".into(), "x".into()],
        uncertainties: uncertainties(&obj, &m.x, x.len()),
        rss: m.value,
        params: m.x,
        converged: m.converged,
        iterations: m.iterations,
        flags,
    })
}

/// Dominant oscillation frequency of a uniformly sampled series.
///
/// The series is detrended by a least-squares quadratic, zero-padded 16× and
/// Fourier transformed; the largest peak above `min_frequency` (default one
/// cycle per record length) is refined by a parabola through three bins.
pub fn extract_oscillation_frequency(t: &[f64], y: &[f64], min_frequency: Option<f64>) -> Result<f64> {
    check_xy(t, y, 8)?;
    let n = t.len();
    let dt = (t[n - 1] - t[0]) / (n - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::DegenerateData("time axis must increase".into()));
    }
    let resid = detrend_quadratic(t, y);
    let peak = resid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let level = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    if peak <= 1e-9 * level {
        return Err(Error::NoPeak("series is flat after detrending".into()));
    }
    let len = (16 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = resid.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(len, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let df = 1.0 / (len as f64 * dt);
    let mag: Vec<f64> = buf[..len / 2 + 1].iter().map(|c| c.norm()).collect();
    let f_lo = min_frequency.unwrap_or(1.0 / (t[n - 1] - t[0]));
    let first = ((f_lo / df).ceil() as usize).max(1);
    if first + 1 >= mag.len() {
        return Err(Error::NoPeak(format!("minimum frequency {f_lo} above Nyquist")));
    }
    let k = (first..mag.len() - 1)
        .max_by(|&a, &b| mag[a].total_cmp(&mag[b]).then(b.cmp(&a)))
        .ok_or_else(|| Error::NoPeak("empty search band".into()))?;
    let (a, b, c) = (mag[k - 1], mag[k], mag[k + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom.abs() > 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    let coarse = (k as f64 + shift.clamp(-0.5, 0.5)) * df;
    // The periodogram peak is pulled by its negative-frequency image when the
    // window holds few cycles, so polish it with a damped-sinusoid fit.
    let span = t[n - 1] - t[0];
    let cost = |x: &[f64]| sinusoid_rss(t, y, x[0], x[1]).unwrap_or(f64::INFINITY);
    let lo = [(coarse - 0.5 / span).max(f_lo), 0.0];
    let hi = [coarse + 0.5 / span, 20.0 / span];
    let best = [0.0, 1.0]
        .iter()
        .map(|&g| nelder_mead(&cost, &[coarse, g / span], &[0.1 / span, 0.5 / span], &lo, &hi, 2000, 1e-12 * coarse))
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("two starts");
    Ok(if best.value <= cost(&[coarse, 0.0]) { best.x[0] } else { coarse })
}

/// Residual sum of squares of y ≈ c₀ + c₁u + c₂u² + e^(−γt)(A cos 2πft + B sin 2πft).
fn sinusoid_rss(t: &[f64], y: &[f64], f: f64, gamma: f64) -> Option<f64> {
    let tm = t.iter().sum::<f64>() / t.len() as f64;
    let w = 2.0 * std::f64::consts::PI * f;
    let basis = |ti: f64| {
        let u = ti - tm;
        let d = (-gamma * (ti - t[0])).exp();
        [1.0, u, u * u, d * (w * ti).cos(), d * (w * ti).sin()]
    };
    let mut g = [0.0; 25];
    let mut rhs = [0.0; 5];
    for (&ti, &yi) in t.iter().zip(y) {
        let e = basis(ti);
        for i in 0..5 {
            rhs[i] += e[i] * yi;
            for j in 0..5 {
                g[i * 5 + j] += e[i] * e[j];
            }
        }
    }
    let c = solve(&g, &rhs, 5)?;
    Some(
        t.iter()
            .zip(y)
            .map(|(&ti, &yi)| {
                let e = basis(ti);
                yi - (0..5).map(|i| c[i] * e[i]).sum::<f64>()
            })
            .map(|r| r * r)
            .sum(),
    )
}

/// Residual of a least-squares quadratic fit.
pub fn detrend_quadratic(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let u: Vec<f64> = t.iter().map(|v| v - tm).collect();
    let mut a = [0.0; 9];
    let mut b = [0.0; 3];
    for (&ui, &yi) in u.iter().zip(y) {
        let basis = [1.0, ui, ui * ui];
        for i in 0..3 {
            b[i] += basis[i] * yi;
            for j in 0..3 {
                a[i * 3 + j] += basis[i] * basis[j];
            }
        }
    }
    let c = solve(&a, &b, 3).unwrap_or_else(|| vec![b[0] / n, 0.0, 0.0]);
    u.iter()
        .zip(y)
        .map(|(&ui, &yi)| yi - (c[0] + c[1] * ui + c[2] * ui * ui))
        .collect()
}
