//! One function per subcommand. Each writes its artifacts through a
//! [`Sink`] and returns whether its checks held together with the JSON text.

use std::sync::Arc;

use anyhow::{anyhow, Result};
use bubbletower::acceptance::{run_all, KNOWN_UNATTAINABLE};
use bubbletower::ansatz::{
    bubble_ordering_holds, corrector_size_ratio, dominance_ratio, flow_residual_on, physical_grid, AnsatzState,
};
use bubbletower::constants::{integral_bubble_power, integral_kernel_sq};
use bubbletower::corrector::{solvability_integral, solve_phibar, RadialRhs};
use bubbletower::duhamel::{run_catalog, BarrierTag, DuhamelOptions, MAX_DRIFT, REFERENCE_TIMES};
use bubbletower::grid::{RadialField, RadialGrid};
use bubbletower::parameters::{geometric_times, integrate_mu_ode, solve_reduced_system, ReducedForcing};
use bubbletower::quadrature::{radial_integral, QuadOptions};
use bubbletower::profiles::{bubble_value, kernel_zn1, potential, scaled_bubble};
use bubbletower::simulator::{
    centre_scale, evolve_nonlinear, extract_bubble_scales, fitted_slope, BubbleFit, EvolutionEvent, EvolutionState,
    StepControls,
};
use bubbletower::weights::{
    all_weights, barrier_dominance_check, envelope, DominanceRegion, NormReading, WeightFamily,
};
use bubbletower::{build_constant_table, ConstantTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{num, residual_plot_script, Sink, Table};

/// What a subcommand hands back to the dispatcher.
pub struct Outcome {
    pub passed: bool,
    pub json: String,
}

fn table_of(cfg: &RunConfig) -> Result<ConstantTable> {
    Ok(build_constant_table(cfg.n, cfg.k, cfg.params)?)
}

fn check_times(cfg: &RunConfig, times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(bubbletower::Error::config("at least one time is needed").into());
    }
    if let Some(t) = times.iter().find(|&&t| !(t <= cfg.params.t0)) {
        return Err(bubbletower::Error::config(format!("time {t} lies after t0 = {}", cfg.params.t0)).into());
    }
    Ok(())
}

pub fn constants(cfg: &RunConfig, sink: &mut Sink) -> Result<Outcome> {
    let t = table_of(cfg)?;
    let tol = cfg.tol.min(1e-10);
    #[derive(Serialize)]
    struct Out {
        n: u32,
        k: usize,
        c_star: f64,
        omega: f64,
        alpha: Vec<f64>,
        beta: Vec<f64>,
        gamma: Vec<f64>,
        gamma_star: Vec<f64>,
        bubble_power_integral: f64,
        kernel_square_integral: f64,
    }
    let out = Out {
        n: t.n,
        k: t.k,
        c_star: t.c_star,
        omega: t.omega,
        alpha: t.alpha.clone(),
        beta: t.beta.clone(),
        gamma: t.gamma.clone(),
        gamma_star: t.gamma_star.clone(),
        bubble_power_integral: integral_bubble_power(t.dim, tol)?,
        kernel_square_integral: integral_kernel_sq(t.dim, tol)?,
    };
    let mut csv = Table::new(&[("j", "1"), ("alpha", "1"), ("beta", "1"), ("gamma", "1"), ("gamma_star", "1")]);
    let mut text = format!("n = {}  k = {}  c_* = {}\n", t.n, t.k, num(t.c_star));
    text += &format!("{:>3} {:>24} {:>24} {:>24} {:>24}\n", "j", "alpha", "beta", "gamma", "gamma_star");
    for j in 0..t.k {
        let row = [t.alpha[j], t.beta[j], t.gamma[j], t.gamma_star[j]];
        let mut cells = vec![(j + 1).to_string()];
        cells.extend(row.iter().map(|&v| num(v)));
        csv.push(cells);
        text += &format!("{:>3} {:>24} {:>24} {:>24} {:>24}\n", j + 1, num(row[0]), num(row[1]), num(row[2]), num(row[3]));
    }
    eprint!("{text}");
    sink.text("constants.txt", &text)?;
    sink.csv("constants.csv", &csv)?;
    let json = sink.summary("constants", cfg, &out, true)?;
    Ok(Outcome { passed: true, json })
}

pub fn corrector(cfg: &RunConfig, sink: &mut Sink) -> Result<Outcome> {
    let t = table_of(cfg)?;
    let dim = t.dim;
    let sol = solve_phibar(&t, cfg.grid.corrector_nodes)?;
    let residual = sol.residual_profile();
    let mut csv = Table::new(&[("r", "1"), ("phibar", "1"), ("residual", "1")]);
    for ((&r, &v), &res) in sol.phi.radii().iter().zip(&sol.phi.values).zip(&residual) {
        csv.push_nums(&[r, v, res]);
    }
    sink.csv("corrector.csv", &csv)?;
    // Pairing of the projected right-hand side with the kernel, relative
    // to the product of their norms.
    let (c, u0, coeff) = (t.c_star, bubble_value(dim, 0.0), sol.projection_coeff);
    let h = move |r: f64| u0 * potential(dim, r) + (c - coeff) * kernel_zn1(dim, r);
    let pairing = solvability_integral(dim, &RadialRhs::closure(h))?;
    let h_sq = radial_integral(|r| h(r).powi(2), dim.n, QuadOptions::rel(1e-10))?.value;
    let solvability_residual = pairing.abs() / (h_sq * integral_kernel_sq(dim, 1e-12)?).sqrt();
    let h_max = residual_scale(&sol.rhs_projected);
    #[derive(Serialize)]
    struct Out {
        nodes: usize,
        tail_exponent: f64,
        residual_norm: f64,
        relative_residual: f64,
        solvability_residual: f64,
        projection_coeff: f64,
        kernel_shift: f64,
    }
    let out = Out {
        nodes: sol.phi.values.len(),
        tail_exponent: sol.tail_exponent,
        residual_norm: sol.residual_norm,
        relative_residual: sol.residual_norm / h_max,
        solvability_residual,
        projection_coeff: coeff,
        kernel_shift: sol.kernel_shift,
    };
    let passed = sol.residual_norm / h_max <= 1e-2 && solvability_residual <= 1e-8;
    let json = sink.summary("corrector", cfg, &out, passed)?;
    Ok(Outcome { passed, json })
}

fn residual_scale(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Least-squares `ln y = slope·ln x + ln c`.
fn power_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let slope = fitted_slope(&lx, &ly)?;
    let m = lx.len() as f64;
    let intercept = (ly.iter().sum::<f64>() - slope * lx.iter().sum::<f64>()) / m;
    Ok((slope, intercept.exp()))
}

pub fn params(cfg: &RunConfig, sink: &mut Sink, t_far: f64, samples: usize) -> Result<Outcome> {
    let t = table_of(cfg)?;
    let t0 = cfg.params.t0;
    let times = geometric_times(t0, t_far, samples)?;
    let forcing = ReducedForcing::power_law(&t, cfg.params.sigma, None);
    let path = solve_reduced_system(&t, &forcing, t0, &times)?;
    let init: Vec<f64> = (1..=t.k).map(|j| path.mu0[j - 1][0]).collect();
    let ode = integrate_mu_ode(&t, t0, t_far, &init, cfg.tol * 1e-4, samples)?;
    let mut cols: Vec<(String, &str)> = vec![("t".into(), "time")];
    for j in 1..=t.k {
        cols.push((format!("mu0_{j}"), "length"));
        cols.push((format!("mudot0_{j}"), "length/time"));
        cols.push((format!("lambda0_{j}"), "1"));
        cols.push((format!("mu1_{j}"), "length"));
    }
    let mut csv = Table::new(&cols);
    for (i, &time) in path.times.iter().enumerate() {
        let mut row = vec![time];
        for j in 1..=t.k {
            row.extend([path.mu0[j - 1][i], path.mudot0[j - 1][i], path.lambda0(j, i), path.mu1[j - 1][i]]);
        }
        csv.push_nums(&row);
    }
    sink.csv("params.csv", &csv)?;

    #[derive(Serialize)]
    struct Fit {
        j: usize,
        exponent: f64,
        expected_exponent: f64,
        constant: f64,
        expected_constant: f64,
        correction_exponent: Option<f64>,
        expected_correction_exponent: f64,
    }
    #[derive(Serialize)]
    struct Out {
        fits: Vec<Fit>,
        ode_max_relative_deviation: f64,
    }
    let minus_t: Vec<f64> = path.times.iter().map(|v| -v).collect();
    let mut fits = vec![];
    let mut passed = true;
    // Corrections start at zero at t0; fit them on the second half only.
    let half = samples / 2;
    for j in 1..=t.k {
        let (exponent, constant) = power_fit(&minus_t, &path.mu0[j - 1])?;
        let expected = 0.0 - t.alpha(j);
        let mu1 = &path.mu1[j - 1][half..];
        let one_signed = mu1.iter().all(|v| *v > 0.0) || mu1.iter().all(|v| *v < 0.0);
        let correction_exponent = if one_signed {
            let size: Vec<f64> = mu1.iter().map(|v| v.abs()).collect();
            Some(power_fit(&minus_t[half..], &size)?.0)
        } else {
            None
        };
        passed &= (exponent - expected).abs() <= 1e-8 && (constant / t.beta(j) - 1.0).abs() <= 1e-8;
        fits.push(Fit {
            j,
            exponent,
            expected_exponent: expected,
            constant,
            expected_constant: t.beta(j),
            correction_exponent,
            expected_correction_exponent: -t.alpha(j) - cfg.params.sigma,
        });
    }
    let mut worst = 0.0f64;
    for (i, &time) in ode.times.iter().enumerate() {
        let s = t.scales(time)?;
        for j in 1..=t.k {
            worst = worst.max((ode.mu0[j - 1][i] / s.mu0(j) - 1.0).abs());
        }
    }
    passed &= worst <= 1e2 * cfg.tol;
    let out = Out {
        fits,
        ode_max_relative_deviation: worst,
    };
    let json = sink.summary("params", cfg, &out, passed)?;
    Ok(Outcome { passed, json })
}

pub fn ansatz(cfg: &RunConfig, sink: &mut Sink, times: &[f64]) -> Result<Outcome> {
    check_times(cfg, times)?;
    let t = table_of(cfg)?;
    let phibar = Arc::new(solve_phibar(&t, cfg.grid.corrector_nodes)?);
    let mut cols: Vec<(String, &str)> = vec![
        ("t".into(), "time"),
        ("r".into(), "length"),
        ("ustar".into(), "1"),
        ("ubar".into(), "1"),
        ("phi0".into(), "1"),
    ];
    cols.extend((1..=t.k).map(|j| (format!("bubble_{j}"), "1")));
    let mut csv = Table::new(&cols);
    #[derive(Serialize)]
    struct Reading {
        t: f64,
        mu: Vec<f64>,
        dominance_ratio: f64,
        ordering_holds: bool,
        corrector_size_ratio: f64,
    }
    let mut readings = vec![];
    for &time in times {
        let st = AnsatzState::leading_order(&t, phibar.clone(), time)?;
        let grid = physical_grid(&t, time, cfg.grid.per_decade)?;
        for &x in grid.nodes() {
            let mut row = vec![time, x, st.ustar(x), st.ubar(x), st.phi0(x)];
            row.extend(st.mu.iter().map(|&m| scaled_bubble(t.dim, m, x)));
            csv.push_nums(&row);
        }
        readings.push(Reading {
            t: time,
            mu: st.mu.clone(),
            dominance_ratio: dominance_ratio(&st, &grid),
            ordering_holds: bubble_ordering_holds(&st, &grid),
            corrector_size_ratio: corrector_size_ratio(&st, &grid)?,
        });
    }
    sink.csv("ansatz.csv", &csv)?;
    let passed = readings.iter().all(|r| r.ordering_holds && r.dominance_ratio.is_finite());
    let json = sink.summary("ansatz", cfg, &readings, passed)?;
    Ok(Outcome { passed, json })
}

pub fn residual(cfg: &RunConfig, sink: &mut Sink, times: &[f64], emit_plot: bool) -> Result<Outcome> {
    check_times(cfg, times)?;
    let t = table_of(cfg)?;
    let phibar = Arc::new(solve_phibar(&t, cfg.grid.corrector_nodes)?);
    let names = [
        "t", "r", "ustar", "residual", "leading", "inner", "interaction", "potential", "gluing", "nonlinear", "eout",
        "envelope",
    ];
    let units = ["time", "length", "1", "1/time", "1/time", "1/time", "1/time", "1/time", "1/time", "1/time", "1/time", "1/time"];
    let cols: Vec<(&str, &str)> = names.iter().copied().zip(units.iter().copied()).collect();
    let mut csv = Table::new(&cols);
    #[derive(Serialize)]
    struct Reading {
        t: f64,
        eout_norm: NormReading,
        identity_defect: f64,
    }
    let mut readings = vec![];
    for &time in times {
        let st = AnsatzState::leading_order(&t, phibar.clone(), time)?;
        let grid = physical_grid(&t, time, cfg.grid.per_decade)?;
        let rep = flow_residual_on(&st, &grid)?;
        for s in &rep.samples {
            let c = s.components;
            csv.push_nums(&[
                time,
                s.x,
                s.ustar,
                s.residual,
                c.leading,
                c.inner,
                c.interaction,
                c.potential,
                c.gluing,
                c.nonlinear,
                s.eout,
                envelope(&t, false, s.x, time)?,
            ]);
        }
        readings.push(Reading {
            t: time,
            eout_norm: rep.eout_norm,
            identity_defect: rep.identity_defect,
        });
    }
    sink.csv("residual.csv", &csv)?;
    if emit_plot {
        sink.text("residual_plot.py", &residual_plot_script("residual.csv", "residual.png"))?;
    }
    let passed = readings.iter().all(|r| r.eout_norm.value.is_finite() && !r.eout_norm.unbounded);
    let json = sink.summary("residual", cfg, &readings, passed)?;
    Ok(Outcome { passed, json })
}

fn weight_name(family: WeightFamily, j: usize) -> String {
    let base = match family {
        WeightFamily::W1 => "w1",
        WeightFamily::W1Star => "w1star",
        WeightFamily::W2 => "w2",
        WeightFamily::W2Star => "w2star",
        WeightFamily::W3 => return "w3".into(),
        WeightFamily::W3Star => return "w3star".into(),
    };
    format!("{base}_{j}")
}

fn dominance_regions(k: usize) -> Vec<DominanceRegion> {
    let mut v = vec![DominanceRegion::Core];
    v.extend((1..k).map(|i| DominanceRegion::Annulus { i }));
    v.extend([DominanceRegion::Middle, DominanceRegion::Far]);
    if k >= 2 {
        v.push(DominanceRegion::SecondCore);
        v.extend((2..k).map(|i| DominanceRegion::SecondAnnulus { i }));
        v.extend([DominanceRegion::SecondTop, DominanceRegion::SecondOuter]);
    }
    v
}

pub fn weights(cfg: &RunConfig, sink: &mut Sink, times: &[f64], check_dominance: bool, points: usize) -> Result<Outcome> {
    check_times(cfg, times)?;
    let t = table_of(cfg)?;
    let specs: Vec<_> = all_weights(&t, false).into_iter().chain(all_weights(&t, true)).collect();
    let mut cols: Vec<(String, &str)> = vec![("t".into(), "time"), ("r".into(), "length")];
    cols.extend(specs.iter().map(|w| (weight_name(w.family, w.j), "1/time")));
    cols.push(("envelope".into(), "1/time"));
    cols.push(("envelope_star".into(), "1"));
    let mut csv = Table::new(&cols);
    for &time in times {
        let s = t.scales(time)?;
        let grid = physical_grid(&t, time, cfg.grid.per_decade)?;
        for &x in grid.nodes() {
            let mut row = vec![time, x];
            row.extend(specs.iter().map(|w| w.value_with(&s, x)));
            row.push(envelope(&t, false, x, time)?);
            row.push(envelope(&t, true, x, time)?);
            csv.push_nums(&row);
        }
    }
    sink.csv("weights.csv", &csv)?;

    #[derive(Serialize)]
    struct Ratio {
        region: DominanceRegion,
        max_ratio: Vec<f64>,
        growth: f64,
        passed: bool,
    }
    let mut ratios = vec![];
    if check_dominance {
        let mut ordered = times.to_vec();
        ordered.sort_by(|a, b| b.total_cmp(a));
        let mut table = Table::new(&[("region", "1"), ("t", "time"), ("max_ratio", "1")]);
        eprintln!("{:<28} {}", "region", ordered.iter().map(|v| format!("{v:>12.3e}")).collect::<String>());
        for region in dominance_regions(t.k) {
            let rep = barrier_dominance_check(&t, region, &ordered, points)?;
            for (&time, &r) in rep.times.iter().zip(&rep.max_ratio) {
                table.push(vec![format!("{region:?}").replace(' ', ""), num(time), num(r)]);
            }
            eprintln!(
                "{:<28} {}",
                format!("{region:?}"),
                rep.max_ratio.iter().map(|v| format!("{v:>12.4e}")).collect::<String>()
            );
            let growth = rep.growth();
            ratios.push(Ratio {
                region,
                max_ratio: rep.max_ratio,
                growth,
                passed: growth.is_finite() && growth <= MAX_DRIFT,
            });
        }
        sink.csv("weights_dominance.csv", &table)?;
    }
    let passed = ratios.iter().all(|r| r.passed);
    let json = sink.summary("weights", cfg, &ratios, passed)?;
    Ok(Outcome { passed, json })
}

pub fn duhamel_check(cfg: &RunConfig, sink: &mut Sink, tags: &[String], per_time: usize) -> Result<Outcome> {
    let t = table_of(cfg)?;
    let tags = tags.iter().map(|s| BarrierTag::parse(s)).collect::<bubbletower::Result<Vec<_>>>()?;
    let reports = run_catalog(&t, &tags, &REFERENCE_TIMES, per_time, DuhamelOptions { rel_tol: cfg.tol })?;
    if reports.is_empty() {
        return Err(anyhow!("no catalog entry matches the selected tags"));
    }
    let mut csv = Table::new(&[
        ("entry", "1"),
        ("region", "1"),
        ("t_ref", "time"),
        ("x", "length"),
        ("t", "time"),
        ("value", "1"),
        ("barrier", "1"),
        ("ratio", "1"),
    ]);
    #[derive(Serialize)]
    struct Entry {
        name: String,
        tag: BarrierTag,
        points: usize,
        per_time: Vec<(f64, f64)>,
        drift: f64,
        skipped: usize,
        error: Option<String>,
        passed: bool,
    }
    let mut entries = vec![];
    for r in reports {
        for s in &r.samples {
            let mut row = vec![r.name.clone(), r.tag.name().to_string()];
            row.extend([s.t_ref, s.x, s.t, s.value, s.barrier, s.ratio].iter().map(|&v| num(v)));
            csv.push(row);
        }
        let passed = r.passed();
        eprintln!("{:<28} {} drift x{:.3}", r.name, if passed { "PASS" } else { "FAIL" }, r.drift);
        entries.push(Entry {
            name: r.name,
            tag: r.tag,
            points: r.samples.len(),
            per_time: r.per_time,
            drift: r.drift,
            skipped: r.skipped,
            error: r.error,
            passed,
        });
    }
    sink.csv("duhamel.csv", &csv)?;
    let passed = entries.iter().all(|e| e.passed);
    let json = sink.summary("duhamel-check", cfg, &entries, passed)?;
    Ok(Outcome { passed, json })
}

pub struct SimulateArgs {
    pub t_start: Option<f64>,
    /// Run length in units of the innermost inner time `μ_k²`.
    pub span: f64,
    /// Relative amplitude of seeded multiplicative noise on the data.
    pub noise: f64,
    pub snapshot_every: usize,
    pub max_steps: usize,
}

pub fn simulate(cfg: &RunConfig, sink: &mut Sink, args: &SimulateArgs) -> Result<Outcome> {
    let t_start = args.t_start.unwrap_or(cfg.params.t0);
    check_times(cfg, &[t_start])?;
    if !(args.span > 0.0 && args.span.is_finite()) || !(0.0..1.0).contains(&args.noise) {
        return Err(bubbletower::Error::config("need span > 0 and noise in [0, 1)").into());
    }
    let t = table_of(cfg)?;
    let phibar = Arc::new(solve_phibar(&t, cfg.grid.corrector_nodes)?);
    let st = AnsatzState::leading_order(&t, phibar, t_start)?;
    let inner = *st.mu.last().expect("k >= 1");
    let (scale, r_max) = (0.5 * inner, 10.0 * (-t_start).sqrt().max(st.mu[0]));
    let grid = RadialGrid::mapped(scale, r_max, cfg.grid.sim_nodes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let values: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&x| {
            let xi: f64 = if args.noise > 0.0 { rng.gen_range(-1.0..=1.0) } else { 0.0 };
            st.ustar(x).max(0.0) * (1.0 + args.noise * xi)
        })
        .collect();
    let u = RadialField::new(grid.clone(), values)?;
    // Clock offset from t_start: absolute times near t0 cannot resolve
    // steps on the inner time scale.
    let state = EvolutionState::with_decaying_tail(t.dim, u, 0.0)?;
    let span = args.span * inner * inner;
    let controls = StepControls {
        dt_max: span / 100.0,
        snapshot_every: args.snapshot_every,
        max_steps: args.max_steps,
        ..StepControls::default()
    };
    let rep = evolve_nonlinear(state, span, &controls)?;

    let mut series = Table::new(&[
        ("elapsed", "time"),
        ("dt", "time"),
        ("centre", "1"),
        ("sup", "1"),
        ("energy", "1"),
        ("centre_scale", "length"),
    ]);
    for s in &rep.series {
        let mu = centre_scale(t.dim, s.centre).unwrap_or(f64::NAN);
        series.push_nums(&[s.t, s.dt, s.centre, s.sup, s.energy, mu]);
    }
    sink.csv("simulate_series.csv", &series)?;
    for (i, (time, u)) in rep.snapshots.iter().enumerate() {
        let mut snap = Table::new(&[("r", "length"), ("u", "1")]);
        for (&r, &v) in grid.nodes().iter().zip(u) {
            snap.push_nums(&[r, v]);
        }
        let name = format!("simulate_snapshot_{i:04}.csv");
        sink.csv(&name, &snap)?;
        eprintln!("snapshot {name} at elapsed time {time:e}");
    }
    let mut last = Table::new(&[("r", "length"), ("u", "1")]);
    for (&r, &v) in grid.nodes().iter().zip(&rep.state.u.values) {
        last.push_nums(&[r, v]);
    }
    sink.csv("simulate_final.csv", &last)?;

    #[derive(Serialize)]
    struct GridDescriptor {
        kind: &'static str,
        scale: f64,
        r_max: f64,
        nodes: usize,
    }
    #[derive(Serialize)]
    struct Manifest {
        n: u32,
        k: usize,
        t_start: f64,
        elapsed: f64,
        span_inner_units: f64,
        initial_scales: Vec<f64>,
        grid: GridDescriptor,
        scheme: StepControls,
        noise: f64,
        completed: bool,
        accepted_steps: usize,
        rejected_steps: usize,
        events: Vec<EvolutionEvent>,
        final_scales: Option<BubbleFit>,
    }
    let final_scales = extract_bubble_scales(t.dim, &grid, &rep.state.u.values, t.k).ok();
    let manifest = Manifest {
        n: t.n,
        k: t.k,
        t_start,
        elapsed: rep.state.t,
        span_inner_units: args.span,
        initial_scales: st.mu.clone(),
        grid: GridDescriptor {
            kind: "sinh-mapped",
            scale,
            r_max,
            nodes: grid.len(),
        },
        scheme: controls,
        noise: args.noise,
        completed: rep.completed,
        accepted_steps: rep.state.accepted,
        rejected_steps: rep.state.rejected,
        events: rep.events,
        final_scales,
    };
    // A run has no pass/fail check; stopping events are observations.
    let json = sink.summary("simulate", cfg, &manifest, true)?;
    Ok(Outcome { passed: true, json })
}

pub fn selftest(cfg: &RunConfig, sink: &mut Sink, fast: bool) -> Result<Outcome> {
    #[derive(Serialize)]
    struct Line {
        id: u8,
        title: String,
        passed: bool,
        known_unattainable: bool,
        detail: String,
    }
    let mut lines = vec![];
    for o in run_all(fast) {
        let known = KNOWN_UNATTAINABLE.contains(&o.id);
        eprintln!("{}{}", o.line(), if !o.passed && known { " (known unattainable)" } else { "" });
        lines.push(Line {
            id: o.id,
            title: o.title,
            passed: o.passed,
            known_unattainable: known,
            detail: o.detail,
        });
    }
    let passed = lines.iter().all(|l| l.passed);
    eprintln!(
        "{} of {} criteria passed{}",
        lines.iter().filter(|l| l.passed).count(),
        lines.len(),
        if fast { " (reduced suite)" } else { "" }
    );
    let json = sink.summary(if fast { "selftest-fast" } else { "selftest" }, cfg, &lines, passed)?;
    Ok(Outcome { passed, json })
}
