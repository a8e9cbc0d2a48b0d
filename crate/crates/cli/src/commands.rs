//! Subcommand implementations. Each returns the files it wrote and a JSON summary.

use std::path::PathBuf;

use magnonsim::analysis::{
    extract_oscillation_frequency, fit_gaussian_sum, peaks_at, FitResult, GaussianPeak, SimplexOptions,
};
use magnonsim::config::DistributionSource;
use magnonsim::cooling::{field_scan, performance_map, CoolingModel};
use magnonsim::dynamics::{rabi_trace, spectrum_map, DynamicsSetup, MagnonParams};
use magnonsim::params::pump_for_linewidth;
use magnonsim::thermometry::{invert_variance, thermal_moments, variance_to_t2star, OverhauserDistribution};
use magnonsim::{Error, Result, RunConfig};
use serde_json::{json, Value};

use crate::output::{write_table, Format, Table};

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub format: Format,
}

pub struct Outcome {
    pub files: Vec<String>,
    pub summary: Value,
}

impl Context {
    fn table(&self, stem: &str, t: &Table) -> Result<String> {
        write_table(&self.out, stem, t, self.format)
    }

    fn fit_options(&self) -> SimplexOptions {
        SimplexOptions {
            seed: self.cfg.seed,
            ..Default::default()
        }
    }

    fn setup(&self, rabi: f64, magnon: MagnonParams<f64>) -> DynamicsSetup<f64> {
        DynamicsSetup {
            rabi,
            omega_n: self.cfg.params.omega_n(),
            a_c: self.cfg.params.a_c,
            magnon,
            t2: self.cfg.dynamics_t2(),
            settings: self.cfg.integrator,
        }
    }
}

/// Inclusive grid from `min` in steps of `step`, the last point snapped to `max`
/// when it lies within 1e-9 of a step.
fn stepped(min: f64, max: f64, step: f64) -> Vec<f64> {
    let n = ((max - min) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| min + step * k as f64).collect()
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

pub fn cool_map(ctx: &Context) -> Result<Outcome> {
    let p = &ctx.cfg.params;
    let grid = ctx.cfg.drive_grid();
    let map = performance_map(&grid, p, true)?;
    let perf = &map.series[0].values;
    let mut t = Table::new(&[
        ("rabi", "MHz"),
        ("gamma_eff", "MHz"),
        ("pump_rabi", "MHz"),
        ("performance", "1"),
        ("i0", "1"),
        ("damping", "1"),
        ("variance", "1"),
        ("valid", "1"),
    ]);
    for k in 0..map.len() {
        let c = map.coords(k);
        let pump = pump_for_linewidth(c[1], p.gamma0).unwrap_or(f64::NAN);
        t.push(vec![
            c[0],
            c[1],
            pump,
            perf[k],
            map.series[1].values[k],
            map.series[2].values[k],
            map.series[3].values[k],
            if map.mask[k].is_none() { 1.0 } else { 0.0 },
        ]);
    }
    let file = ctx.table("cool_map", &t)?;
    let opt = map
        .optimum()
        .ok_or_else(|| Error::DegenerateData("no grid point could be evaluated".into()))?;
    let (rabi, gamma) = (opt.coords[0], opt.coords[1]);
    let variance = map.series[3].values[opt.index];
    Ok(Outcome {
        files: vec![file],
        summary: json!({
            "b_field_T": p.b_field,
            "omega_n_MHz": p.omega_n(),
            "thermal_variance": p.thermal_variance(),
            "grid": [grid.rabi.len(), grid.gamma_eff.len()],
            "masked_points": map.mask.iter().filter(|m| m.is_some()).count(),
            "optimum": {
                "performance": opt.value,
                "rabi_MHz": rabi,
                "gamma_eff_MHz": gamma,
                "pump_rabi_MHz": pump_for_linewidth(gamma, p.gamma0).ok(),
                "rabi_over_omega_n": rabi / p.omega_n(),
                "gamma_over_rabi": gamma / rabi,
                "variance": variance,
                "t2_star_ns": 1e3 * variance_to_t2star(variance, p.a_c),
            },
        }),
    })
}

pub fn field_scan_cmd(ctx: &Context) -> Result<Outcome> {
    let fields = ctx.cfg.field_grid();
    let scan = field_scan(&fields, &ctx.cfg.drive_grid(), &ctx.cfg.params)?;
    let cols: Vec<(&str, &str)> = std::iter::once(("b_field", "T"))
        .chain(scan.series.iter().map(|s| (s.name.as_str(), s.unit.as_str())))
        .collect();
    let mut t = Table::new(&cols);
    for (k, &b) in fields.iter().enumerate() {
        let mut row = vec![b];
        row.extend(scan.series.iter().map(|s| s.values[k]));
        t.push(row);
    }
    let file = ctx.table("field_scan", &t)?;
    let full = &scan.series("full").expect("full curve").values;
    let bare = &scan.series("no_em").expect("no_em curve").values;
    let opt = scan
        .optimum()
        .ok_or_else(|| Error::DegenerateData("no field could be evaluated".into()))?;
    let exceeds = full
        .iter()
        .zip(bare)
        .all(|(f, b)| f.is_nan() || b.is_nan() || b > f);
    let bare_peak = (0..bare.len())
        .filter(|&k| bare[k].is_finite())
        .max_by(|&a, &b| bare[a].total_cmp(&bare[b]))
        .unwrap_or(0);
    let monotone = bare[bare_peak..].windows(2).all(|w| w[1] <= w[0]);
    Ok(Outcome {
        files: vec![file],
        summary: json!({
            "peak": {
                "b_field_T": opt.coords[0],
                "performance": opt.value,
                "rabi_MHz": scan.series("full_rabi").map(|s| s.values[opt.index]),
                "gamma_eff_MHz": scan.series("full_gamma_eff").map(|s| s.values[opt.index]),
            },
            "no_em_exceeds_full_everywhere": exceeds,
            "no_em_peak_field_T": fields[bare_peak],
            "no_em_monotone_above_peak": monotone,
        }),
    })
}

fn fit_summary(fit: &FitResult) -> Value {
    let peaks: Vec<Value> = fit
        .params
        .chunks(3)
        .zip(fit.uncertainties.chunks(3))
        .map(|(p, u)| {
            json!({
                "amplitude": p[0],
                "center_MHz": p[1],
                "sigma_MHz": p[2],
                "amplitude_err": finite_or_null(u[0]),
                "center_err_MHz": finite_or_null(u[1]),
                "sigma_err_MHz": finite_or_null(u[2]),
            })
        })
        .collect();
    json!({
        "model": fit.model,
        "peaks": peaks,
        "rss": fit.rss,
        "converged": fit.converged,
        "flags": fit.flags,
    })
}

fn window_mean(map: &magnonsim::dynamics::SpectrumMap, t1: f64) -> Vec<f64> {
    map.time_slice(0.0, t1)
}

pub fn spectrum(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let s = &cfg.spectrum;
    let p = &cfg.params;
    let omega_n = p.omega_n();
    let deltas = stepped(s.delta_min, s.delta_max, s.delta_step);
    let taus = stepped(0.0, s.tau_max, s.tau_step);
    let cooled_sigma = match s.distribution {
        DistributionSource::Gaussian => s.cooled_sigma,
        DistributionSource::Cooling => {
            let (_, v) = CoolingModel::new(&cfg.drive, p)?.variance()?;
            2.0 * p.a_c * v.variance.sqrt()
        }
    };
    let setup = ctx.setup(cfg.drive.rabi, cfg.magnon);
    let dist = OverhauserDistribution::from_overhauser_sigma(cooled_sigma, p.a_c, s.delta_step, s.min_points)?;
    let map = spectrum_map(&deltas, &taus, &setup, &dist, cfg.dynamics.readout_scale)?;

    let mut t = Table::new(&[("delta", "MHz"), ("tau", "us"), ("p_down", "1"), ("signal", "1")]);
    for (i, &d) in deltas.iter().enumerate() {
        for (k, &tau) in taus.iter().enumerate() {
            let v = map.p_down[i][k];
            t.push(vec![d, tau, v, v * map.readout_scale]);
        }
    }
    let mut files = vec![ctx.table("spectrum", &t)?];

    let slice = map.time_slice(s.slice_start, s.slice_end);
    let carrier = window_mean(&map, s.carrier_window);
    let poor = if s.poor_cooling {
        let early: Vec<f64> = taus.iter().copied().filter(|&x| x <= s.carrier_window + 1e-12).collect();
        let pd = OverhauserDistribution::from_overhauser_sigma(s.poor_sigma, p.a_c, s.delta_step, s.min_points)?;
        let m = spectrum_map(&deltas, &early, &setup, &pd, cfg.dynamics.readout_scale)?;
        Some(window_mean(&m, s.carrier_window))
    } else {
        None
    };
    let mut st = Table::new(&[
        ("delta", "MHz"),
        ("slice_p_down", "1"),
        ("carrier_cooled", "1"),
        ("carrier_poor", "1"),
    ]);
    for (i, &d) in deltas.iter().enumerate() {
        st.push(vec![
            d,
            slice[i],
            carrier[i],
            poor.as_ref().map_or(f64::NAN, |v| v[i]),
        ]);
    }
    files.push(ctx.table("slice", &st)?);

    let opts = ctx.fit_options();
    let centers: Vec<f64> = (-2..=2).map(|k| k as f64 * omega_n).collect();
    let five = if deltas.len() > 16 {
        let init = peaks_at(&deltas, &slice, &centers, cooled_sigma);
        Some(fit_gaussian_sum(&deltas, &slice, &init, &opts)?)
    } else {
        None
    };
    let carrier_fit = |y: &[f64], sigma: f64| -> Result<Option<FitResult>> {
        if deltas.len() < 4 {
            return Ok(None);
        }
        let amp = y.iter().cloned().fold(0.0, f64::max);
        let init = [GaussianPeak {
            amplitude: amp,
            center: 0.0,
            sigma,
        }];
        fit_gaussian_sum(&deltas, y, &init, &opts).map(Some)
    };
    let cooled_fit = carrier_fit(&carrier, cooled_sigma)?;
    let poor_fit = match &poor {
        Some(v) => carrier_fit(v, s.poor_sigma)?,
        None => None,
    };
    let sigma_of = |f: &Option<FitResult>| f.as_ref().and_then(|f| f.get("sigma_0"));
    let mut five_centers: Vec<f64> = five
        .as_ref()
        .map(|f| f.params.chunks(3).map(|g| g[1]).collect())
        .unwrap_or_default();
    five_centers.sort_by(f64::total_cmp);
    let scalar = (deltas.len() == 1 && taus.len() == 1).then(|| map.p_down[0][0]);
    Ok(Outcome {
        files,
        summary: json!({
            "omega_n_MHz": omega_n,
            "t2_us": cfg.dynamics_t2(),
            "cooled_overhauser_sigma_MHz": cooled_sigma,
            "poor_overhauser_sigma_MHz": s.poor_sigma,
            "distribution_points": dist.iz.len(),
            "p_down": scalar,
            "five_peak_fit": five.as_ref().map(fit_summary),
            "five_peak_centers_MHz": five_centers,
            "expected_centers_MHz": centers,
            "carrier_cooled_fit": cooled_fit.as_ref().map(fit_summary),
            "carrier_cooled_sigma_MHz": sigma_of(&cooled_fit),
            "carrier_poor_fit": poor_fit.as_ref().map(fit_summary),
            "carrier_poor_sigma_MHz": sigma_of(&poor_fit),
        }),
    })
}

fn gaussian_ensemble(sigma: f64, a_c: f64, min_points: usize) -> Result<OverhauserDistribution<f64>> {
    if sigma == 0.0 {
        return Ok(OverhauserDistribution::delta(0.0, a_c));
    }
    let step = 8.0 * sigma / (min_points.max(2) - 1) as f64;
    OverhauserDistribution::from_overhauser_sigma(sigma, a_c, step, min_points)
}

pub fn rabi(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let r = &cfg.rabi;
    let p = &cfg.params;
    let omega_n = p.omega_n();
    let detuning = r.sideband_order * omega_n;
    let dist = gaussian_ensemble(r.overhauser_sigma, p.a_c, r.min_points)?;
    let taus = stepped(0.0, r.tau_max, r.tau_step);
    let f_min = r.min_cycles / r.tau_max;
    let mut files = Vec::new();
    let mut runs = Vec::new();
    for &rabi in &r.rabi_values {
        let trace = rabi_trace(detuning, &taus, &ctx.setup(rabi, cfg.magnon), &dist)?;
        let mut t = Table::new(&[("tau", "us"), ("p_down", "1"), ("p_magnon", "1")]);
        for k in 0..taus.len() {
            t.push(vec![taus[k], trace.p_down[k], trace.p_magnon[k]]);
        }
        files.push(ctx.table(&format!("rabi_{rabi}MHz"), &t)?);
        let f_sb = extract_oscillation_frequency(&taus, &trace.p_magnon, Some(f_min))?;
        let f_down = extract_oscillation_frequency(&taus, &trace.p_down, Some(f_min)).ok();
        runs.push(json!({
            "rabi_MHz": rabi,
            "target_level": trace.target_level,
            "sideband_frequency_MHz": f_sb,
            "eta": f_sb / rabi,
            "p_down_frequency_MHz": f_down,
            "max_p_magnon": trace.p_magnon.iter().cloned().fold(0.0, f64::max),
        }));
    }

    let carrier_magnon = MagnonParams {
        eta1: 0.0,
        eta2: 0.0,
        ..cfg.magnon
    };
    let ctaus = stepped(0.0, r.carrier_tau_max, r.tau_step);
    let carrier_setup = ctx.setup(r.carrier_rabi, carrier_magnon);
    let cdist = gaussian_ensemble(r.carrier_overhauser_sigma, p.a_c, r.min_points)?;
    let carrier = rabi_trace(0.0, &ctaus, &carrier_setup, &cdist)?;
    let spread = rabi_trace(0.0, &ctaus, &carrier_setup, &dist)?;
    let mut t = Table::new(&[("tau", "us"), ("p_down", "1"), ("p_down_ensemble", "1")]);
    for (k, &tau) in ctaus.iter().enumerate() {
        t.push(vec![tau, carrier.p_down[k], spread.p_down[k]]);
    }
    files.push(ctx.table("carrier", &t)?);
    let cf_min = Some(r.min_cycles / r.carrier_tau_max);
    let f_c = extract_oscillation_frequency(&ctaus, &carrier.p_down, cf_min)?;
    let f_spread = extract_oscillation_frequency(&ctaus, &spread.p_down, cf_min).ok();
    Ok(Outcome {
        files,
        summary: json!({
            "omega_n_MHz": omega_n,
            "detuning_MHz": detuning,
            "t2_us": cfg.dynamics_t2(),
            "distribution_points": dist.iz.len(),
            "runs": runs,
            "carrier": {
                "rabi_MHz": r.carrier_rabi,
                "frequency_MHz": f_c,
                "relative_error": (f_c - r.carrier_rabi) / r.carrier_rabi,
                "overhauser_sigma_MHz": r.carrier_overhauser_sigma,
                "ensemble_frequency_MHz": f_spread,
            },
        }),
    })
}

pub fn thermometry(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let th = &cfg.thermometry;
    let p = &cfg.params;
    let n = p.n_nuclei as u64;
    let c = cfg.constants.planck_over_boltzmann;
    let temperature = |beta: f64, omega: f64| if beta.is_infinite() { 0.0 } else { c * omega / beta };
    let max_iz = p.spin * p.n_nuclei;
    let mut t = Table::new(&[
        ("beta", "1"),
        ("mean_iz", "1"),
        ("variance", "1"),
        ("polarization_fraction", "1"),
        ("temperature", "mK"),
    ]);
    let mut betas = magnonsim::sweep::linspace(th.beta_min, th.beta_max, th.steps);
    if th.include_infinite {
        betas.push(f64::INFINITY);
    }
    for &beta in &betas {
        let (mean, var) = if beta.is_infinite() {
            (-max_iz, 0.0)
        } else {
            thermal_moments(beta, n)?
        };
        t.push(vec![beta, mean, var, mean.abs() / max_iz, temperature(beta, p.omega_n())]);
    }
    let file = ctx.table("thermometry", &t)?;
    let beta = invert_variance(th.target_variance, n)?;
    let omega_t = p.at_field(th.temperature_field).omega_n();
    Ok(Outcome {
        files: vec![file],
        summary: json!({
            "n_nuclei": n,
            "b_field_T": p.b_field,
            "target_variance": th.target_variance,
            "beta_for_target": beta,
            "temperature_field_T": th.temperature_field,
            "temperature_for_target_mK": temperature(beta, omega_t),
            "temperature_beta1_mK": temperature(1.0, p.omega_n()),
            "t2_star_for_target_ns": 1e3 * variance_to_t2star(th.target_variance, p.a_c),
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stepped_grid_includes_end() {
        let g = stepped(-70.0, 70.0, 1.0);
        assert_eq!(g.len(), 141);
        assert_eq!(g[70], 0.0);
        assert_eq!(stepped(0.0, 0.0, 0.01), vec![0.0]);
        assert_eq!(stepped(0.0, 1.0, 0.01).len(), 101);
    }
}
