//! Dispatch from a configuration to the library and onto disk.

use std::f64::consts::PI;
use std::path::PathBuf;

use hallq::conductance::{chern_number, kubo_curvature, loop_phase_conductance, quantization_report, ChernOptions, Method};
use hallq::diagnostics::{
    big_loop_overlap, energy_estimate_check, loop_localization_check, partial_trace_check, random_local_operator,
    translation_check, truncation_error_scan, twisting_check, LemmaCheckResult,
};
use hallq::hamiltonian::{Flux, ModelSpec, ValidationReport};
use hallq::lattice::{Axis, Region};
use hallq::loops::{stokes_product, FluxSystem, StokesMode};
use hallq::models::{make_model, FreeFermionOracle};
use hallq::quasiadiabatic::{Filter, IntegratorOptions};
use hallq::spectral::{ground_state, slater_ground, DENSE_THRESHOLD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{DeltaSpec, Experiment, ExperimentConfig, MethodChoice, StokesChoice, SCHEMA_VERSION};
use crate::record::{now_ms, persist, Curve, ResultRecord, Verdict};
use crate::Failure;

pub struct Outcome {
    pub record: ResultRecord,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn summary_line(&self) -> String {
        let r = &self.record;
        let file = self.files.first().map(|p| p.display().to_string()).unwrap_or_default();
        format!("{} {} L={} {}={:.6e} {} -> {file}", r.experiment, r.model, r.l, r.metric_name, r.metric, r.verdict.as_str())
    }

    pub fn failed_validation(&self) -> bool {
        self.record.experiment == "validate" && self.record.verdict == Verdict::Fail
    }
}

/// Experiment result before it is stamped and written.
struct Measured {
    verdict: Verdict,
    metric_name: &'static str,
    metric: f64,
    payload: Value,
    curves: Vec<Curve>,
}

fn build_spec(cfg: &ExperimentConfig) -> Result<(ModelSpec, Vec<String>), Failure> {
    if let Some(file) = cfg.model_file()? {
        return Ok((file.build()?, Vec::new()));
    }
    let recipe = cfg.recipe().expect("checked: recipe or file");
    let warnings = recipe.warnings();
    Ok((make_model(&recipe, cfg.model.l)?, warnings))
}

/// Rounding of the fractional region widths can make nominally disjoint regions meet.
fn region_warnings(spec: &ModelSpec) -> Vec<String> {
    let lat = spec.lattice();
    let r = spec.range() as i64;
    let mut out = Vec::new();
    for (axis, region) in [(Axis::X, lat.omega_x()), (Axis::Y, lat.omega_y())] {
        if lat.extent(axis) < 2 {
            continue;
        }
        let middle = lat.half(axis) as i64;
        let reach = region.sites().iter().map(|&s| lat.signed_coord(s, axis).abs()).max().unwrap_or(0);
        if reach + r > middle {
            out.push(format!("Omega_{axis:?} reaches within R of the middle cut after rounding (L = {})", lat.size()));
        }
    }
    if lat.omega0(spec.range()).is_empty() {
        out.push(format!("Omega_0 is empty at L = {}", lat.size()));
    }
    out
}

/// Ground energy and gap on the cheapest exact path for the model.
fn ground_data(spec: &ModelSpec, flux: &Flux) -> Result<(f64, f64), Failure> {
    let sector = spec.sector();
    let dense_ok = sector.as_ref().map(|s| s.dim() <= DENSE_THRESHOLD).unwrap_or(false);
    if spec.is_quadratic() && !dense_ok {
        let g = slater_ground(&spec.quadratic_hamiltonian(flux)?, spec.charge())?;
        return Ok((g.energy, g.gap));
    }
    let g = ground_state(&spec.hamiltonian(&sector?, flux)?)?;
    Ok((g.energy, g.gap))
}

fn filter(cfg: &ExperimentConfig, spec: &ModelSpec) -> Result<Filter, Failure> {
    let delta = match &cfg.filter.delta {
        DeltaSpec::Value(d) => *d,
        DeltaSpec::Rule(_) => {
            let (_, gap) = ground_data(spec, &Flux::default())?;
            if gap < hallq::spectral::DEGENERACY_TOL {
                return Err(Failure::Numerical(format!("gap collapse at zero flux (gap {gap:.3e}); gamma/2 undefined")));
            }
            gap / 2.0
        }
    };
    Ok(Filter::new(cfg.filter.kind, delta)?)
}

fn method(cfg: &ExperimentConfig, spec: &ModelSpec) -> Method {
    match cfg.numeric.method {
        MethodChoice::Auto => Method::auto(spec),
        MethodChoice::ManyBody => Method::ManyBody,
        MethodChoice::SingleParticle => Method::SingleParticle,
    }
}

fn system(cfg: &ExperimentConfig, spec: &ModelSpec) -> Result<FluxSystem, Failure> {
    Ok(FluxSystem::auto(spec.clone(), filter(cfg, spec)?)?)
}

fn integrator(cfg: &ExperimentConfig) -> IntegratorOptions {
    IntegratorOptions::states().with_tol(cfg.numeric.tol)
}

fn validate(spec: &ModelSpec) -> Result<Measured, Failure> {
    let rep: ValidationReport = spec.validation_report();
    let dim = spec.sector().map(|s| s.dim()).ok();
    let payload = json!({
        "report": rep,
        "sector_dim": dim,
        "Q_max": spec.q_max_bound(),
        "J": spec.j_max(),
        "derivative_bound": spec.q_max_bound() * spec.j_max() * spec.lattice().size() as f64,
        "quadratic": spec.is_quadratic(),
    });
    Ok(Measured {
        verdict: if rep.pass { Verdict::Pass } else { Verdict::Fail },
        metric_name: "violations",
        metric: rep.violations.len() as f64,
        payload,
        curves: Vec::new(),
    })
}

fn spectrum(cfg: &ExperimentConfig, spec: &ModelSpec) -> Result<Measured, Failure> {
    let n = cfg.numeric.scan_points;
    let rows = (0..=n)
        .into_par_iter()
        .map(|k| {
            let t = 2.0 * PI * k as f64 / n as f64;
            ground_data(spec, &Flux::xy(t, 0.0)).map(|(e, g)| vec![t, e, g])
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut curve = Curve::new("scan", &["theta_x", "energy", "gap"]);
    rows.iter().for_each(|r| curve.push(r.clone()));
    let min_gap = rows.iter().map(|r| r[2]).fold(f64::INFINITY, f64::min);
    Ok(Measured {
        verdict: Verdict::Info,
        metric_name: "min_gap",
        metric: min_gap,
        payload: json!({ "energy0": rows[0][1], "gap0": rows[0][2], "min_gap": min_gap, "points": n + 1 }),
        curves: vec![curve],
    })
}

fn conductance(cfg: &ExperimentConfig, spec: &ModelSpec) -> Result<Measured, Failure> {
    let k = kubo_curvature(spec, &Flux::default(), method(cfg, spec), cfg.numeric.chern_tol)?;
    let sigma = 2.0 * PI * k.g;
    let oracle = FreeFermionOracle::new(spec).ok().map(|o| o.curvature(&Flux::default())).transpose()?;
    let agreement = oracle.map(|o| (o - k.g).abs());
    let verdict = match agreement {
        Some(d) if d <= 1e-7 => Verdict::Pass,
        Some(_) => Verdict::Fail,
        None => Verdict::Info,
    };
    Ok(Measured {
        verdict,
        metric_name: "sigma_tilde",
        metric: sigma,
        payload: json!({ "g": k.g, "gap": k.gap, "sigma_tilde": sigma, "oracle_g": oracle, "oracle_deviation": agreement }),
        curves: Vec::new(),
    })
}

fn chern(cfg: &ExperimentConfig, spec: &ModelSpec) -> Result<Measured, Failure> {
    let mut opts = ChernOptions::new(cfg.numeric.grid_n, method(cfg, spec));
    opts.tol = cfg.numeric.chern_tol;
    let c = chern_number(spec, &opts)?;
    let oracle = FreeFermionOracle::new(spec).ok().map(|o| o.chern(cfg.numeric.grid_n)).transpose()?;
    let integral = c.integrality_defect <= 1e-9;
    let verdict = match &oracle {
        Some(o) if integral && o.chern == c.chern => Verdict::Pass,
        None if integral => Verdict::Pass,
        _ => Verdict::Fail,
    };
    let n = c.grid_n;
    let mut curve = Curve::new("grid", &["i", "j", "theta_x", "theta_y", "gap", "plaquette_phase"]);
    for p in &c.points {
        curve.push(vec![p.i as f64, p.j as f64, p.theta_x, p.theta_y, p.gap, c.plaquettes[p.j * n + p.i]]);
    }
    Ok(Measured {
        verdict,
        metric_name: "chern",
        metric: c.chern as f64,
        payload: json!({
            "chern": c.chern,
            "raw": c.raw,
            "integrality_defect": c.integrality_defect,
            "min_gap": c.min_gap,
            "grid_n": n,
            "method": c.method,
            "perturbed_points": c.points.iter().filter(|p| p.perturbed).count(),
            "oracle_chern": oracle.as_ref().map(|o| o.chern),
        }),
        curves: vec![curve],
    })
}

fn loop_phase(cfg: &ExperimentConfig, spec: &ModelSpec) -> Result<Measured, Failure> {
    let sys = system(cfg, spec)?;
    let rep = loop_phase_conductance(&sys, &cfg.numeric.r, &integrator(cfg))?;
    let mut curve = Curve::new("phases", &["r", "phi", "phi_over_r2", "deviation", "modulus", "min_gap"]);
    for p in &rep.phases {
        curve.push(vec![p.r, p.phi, p.phi_over_r2, p.deviation, p.modulus, p.min_gap]);
    }
    let modulus_ok = rep.phases.iter().all(|p| (p.modulus - 1.0).abs() <= 1e-6);
    let ratios: Vec<f64> = rep.phases.windows(2).map(|w| w[1].deviation / w[0].deviation).collect();
    let verdict = if !modulus_ok {
        Verdict::Fail
    } else if rep.phases.len() >= 3 {
        if ratios.iter().all(|&q| q <= 0.75) { Verdict::Pass } else { Verdict::Fail }
    } else {
        Verdict::Info
    };
    Ok(Measured {
        verdict,
        metric_name: "last_deviation",
        metric: rep.phases.last().map(|p| p.deviation).unwrap_or(f64::NAN),
        payload: json!({ "report": rep, "ratios": ratios }),
        curves: vec![curve],
    })
}

fn stokes(cfg: &ExperimentConfig, spec: &ModelSpec) -> Result<Measured, Failure> {
    let sys = system(cfg, spec)?;
    let (mode, opts) = match cfg.numeric.stokes_mode {
        StokesChoice::State => (StokesMode::State, integrator(cfg)),
        StokesChoice::Unitary => (StokesMode::Unitary, IntegratorOptions::unitaries().with_tol(cfg.numeric.tol)),
    };
    let n = cfg.numeric.stokes_n;
    let t = stokes_product(&sys, n, mode, &opts)?;
    let residual = t.product_residual.unwrap_or(t.state_residual);
    let bound = (n * n) as f64 * 1e-7;
    let mut curve = Curve::new("factors", &["k", "re_p", "im_p", "modulus"]);
    for (k, p) in t.p.iter().enumerate() {
        curve.push(vec![(k + 1) as f64, p.re, p.im, p.norm()]);
    }
    Ok(Measured {
        verdict: if residual <= bound { Verdict::Pass } else { Verdict::Fail },
        metric_name: "product_residual",
        metric: residual,
        payload: json!({ "table": t, "bound": bound }),
        curves: vec![curve],
    })
}

type Check<'a> = Box<dyn Fn() -> hallq::Result<Vec<LemmaCheckResult>> + Send + Sync + 'a>;

fn lemma_checks(cfg: &ExperimentConfig, spec: &ModelSpec) -> Result<Measured, Failure> {
    let sys = system(cfg, spec)?;
    let opts = integrator(cfg);
    let unit = IntegratorOptions::unitaries().with_tol(cfg.numeric.tol.max(1e-10));
    let theta = cfg.numeric.theta;
    let r_list = cfg.numeric.r.clone();
    let basepoints: Vec<(f64, f64)> = cfg.numeric.basepoints.iter().map(|b| (b[0], b[1])).collect();
    let seed = cfg.seed;
    let sys_ref = &sys;
    let checks: Vec<(&str, Check)> = vec![
        ("partial_trace", Box::new(move || partial_trace_check(sys_ref, theta, &opts).map(|(a, b)| vec![a, b]))),
        ("energy", Box::new(move || energy_estimate_check(sys_ref, theta, &opts).map(|r| vec![r]))),
        ("big_loop", Box::new(move || big_loop_overlap(sys_ref, &opts).map(|r| vec![r]))),
        ("translation", Box::new(|| translation_check(sys_ref, &basepoints, &r_list, &opts).map(|r| vec![r]))),
        ("loop_localization", Box::new(|| loop_localization_check(sys_ref, (theta, theta / 2.0), &r_list, &unit).map(|r| vec![r]))),
        (
            "twisting",
            Box::new(move || {
                let sector = sys_ref.sector().ok_or_else(|| {
                    hallq::HallError::Validation("this check needs the Fock representation within the dense cap".into())
                })?;
                let spec = sys_ref.spec();
                let omega0 = spec.lattice().omega0(spec.range());
                let site = *omega0.sites().first().ok_or_else(|| hallq::HallError::Validation("Omega_0 is empty".into()))?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = random_local_operator(spec, sector, &[site], &mut rng)?;
                twisting_check(sys_ref, &a, &Region::new(vec![site]), (theta, theta / 2.0), &unit, seed).map(|r| vec![r])
            }),
        ),
    ];
    let results: Vec<(String, Result<Vec<LemmaCheckResult>, hallq::HallError>)> =
        checks.par_iter().map(|(name, f)| (name.to_string(), f())).collect();
    let mut entries = Vec::new();
    let mut skipped = serde_json::Map::new();
    let mut failed = 0usize;
    for (name, res) in results {
        match res {
            Ok(rs) => {
                failed += rs.iter().filter(|r| r.pass == Some(false)).count();
                entries.extend(rs);
            }
            Err(hallq::HallError::Numerical(m)) => return Err(Failure::Numerical(format!("{name}: {m}"))),
            Err(e) => {
                skipped.insert(name, json!(e.to_string()));
            }
        }
    }
    let truncation = if spec.sector().map(|s| s.dim() <= DENSE_THRESHOLD).unwrap_or(false) {
        Some(truncation_error_scan(spec, sys.filter(), &cfg.numeric.m_list)?)
    } else {
        skipped.insert("truncation".into(), json!("sector exceeds the dense cap"));
        None
    };
    let mut curves = Vec::new();
    if let Some(t) = &truncation {
        let mut c = Curve::new("truncation", &["M", "error", "norm_ratio"]);
        t.rows.iter().for_each(|r| c.push(vec![r.m as f64, r.error, r.norm_ratio]));
        curves.push(c);
    }
    let mut trends = Curve::new("trends", &["check", "x", "y"]);
    for (idx, e) in entries.iter().enumerate() {
        if let Some(t) = &e.trend {
            t.xs.iter().zip(&t.ys).for_each(|(x, y)| trends.push(vec![idx as f64, *x, *y]));
        }
    }
    curves.push(trends);
    Ok(Measured {
        verdict: if failed == 0 { Verdict::Pass } else { Verdict::Fail },
        metric_name: "failed_checks",
        metric: failed as f64,
        payload: json!({ "checks": entries, "truncation": truncation, "skipped": skipped }),
        curves,
    })
}

fn quantize(cfg: &ExperimentConfig, spec: &ModelSpec) -> Result<Measured, Failure> {
    let sys = system(cfg, spec)?;
    let q = quantization_report(&sys, cfg.numeric.stokes_n, &integrator(cfg))?;
    let pass = q.triangle_slack >= -1e-9 && (q.distance >= 0.44 || q.trig_holds);
    Ok(Measured {
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        metric_name: "distance",
        metric: q.distance,
        payload: json!(q),
        curves: Vec::new(),
    })
}

/// Runs the configured experiment and writes its record, curves and ledger line.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome, Failure> {
    let started = now_ms();
    let (spec, mut warnings) = build_spec(cfg)?;
    warnings.extend(region_warnings(&spec));
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let m = match cfg.experiment {
        Experiment::Validate => validate(&spec),
        Experiment::Spectrum => spectrum(cfg, &spec),
        Experiment::Conductance => conductance(cfg, &spec),
        Experiment::Chern => chern(cfg, &spec),
        Experiment::LoopPhase => loop_phase(cfg, &spec),
        Experiment::Stokes => stokes(cfg, &spec),
        Experiment::LemmaChecks => lemma_checks(cfg, &spec),
        Experiment::Quantize => quantize(cfg, &spec),
    }?;
    let record = ResultRecord {
        schema_version: SCHEMA_VERSION,
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.hash(),
        experiment: cfg.experiment.as_str().to_string(),
        model: spec.id().to_string(),
        l: spec.lattice().size(),
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        verdict: m.verdict,
        metric_name: m.metric_name.to_string(),
        metric: m.metric,
        warnings,
        payload: json!({ "config": cfg, "result": m.payload }),
    };
    let files = persist(&cfg.output.dir, &record, &m.curves)?;
    Ok(Outcome { record, files })
}
