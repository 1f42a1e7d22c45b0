//! One function per subcommand, each producing report points.

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use prcm_core::homology::HomologyError;
use prcm_core::measure::{
    annulus_plaquettes, enumerate_model, pressure, verify_conditioning, verify_duality, verify_fkg, verify_holley,
};
use prcm_core::sampler::{
    coupling_table, estimate_pressure, plgt_gibbs, run_chain, run_coupled, wilson_estimate, wilson_exact,
    ChainOutput, ObservableStats,
};
use prcm_core::{Cell, Configuration, EulerPoincare, Model, Observable, RunConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{parse_box, Quantity, Resolved, DEFAULT_EP_SAMPLES};
use crate::report::{rational, Point};
use crate::CliError;

/// Largest plaquette count for exhaustive Euler-Poincare checks.
const EP_EXHAUSTIVE_LIMIT: usize = 16;

/// Largest annulus enumerated when no state is given.
const ANNULUS_LIMIT: usize = 12;

/// Pressure integration window in `pi` and its Simpson interval count.
const PRESSURE_SPAN: f64 = 12.0;
const PRESSURE_INTERVALS: usize = 24;

fn model(cfg: &Resolved, p: &BigRational) -> Result<Model, CliError> {
    Ok(Model::new(&cfg.context(p)?)?)
}

fn cells_json(model: &Model) -> Vec<String> {
    model.plaquettes().cells().iter().map(Cell::to_string).collect()
}

pub fn enumerate(cfg: &Resolved, p: &BigRational) -> Result<Point, CliError> {
    let m = model(cfg, p)?;
    let table = enumerate_model(&m, cfg.cap())?;
    let cells = cells_json(&m);
    let marginals: Vec<Value> = cells
        .iter()
        .enumerate()
        .map(|(j, c)| json!({ "cell": c, "open": rational(&table.marginal(j)) }))
        .collect();
    let mut body = json!({
        "p": rational(p),
        "plaquettes": m.plaquette_count(),
        "truncation_radius": m.radius(),
        "partition_function": rational(&table.partition_function()),
        "expected_open": rational(&table.expected_open()),
        "marginals": marginals,
    });
    let mut pt = Point::new(p, Value::Null);
    for (j, c) in cells.iter().enumerate() {
        pt.row(format!("open[{c}]"), rational(&table.marginal(j)), None);
    }
    pt.row("expected_open", rational(&table.expected_open()), None);
    pt.row("partition_function", rational(&table.partition_function()), None);
    if let Ok(pr) = pressure(&table) {
        body["pressure"] = json!({
            "pi": pr.pi,
            "f": pr.f,
            "dfdpi": rational(&pr.dfdpi),
            "dfdpi_finite_difference": pr.dfdpi_numeric,
            "derivative_error": pr.derivative_error(),
        });
        pt.row("pressure", pr.f.to_string(), None);
        pt.row("density", rational(&pr.dfdpi), None);
    }
    if cfg.raw.table {
        let rows: Vec<Value> = (0..table.len() as u64)
            .map(|k| {
                json!({
                    "config": Configuration::from_index(m.plaquette_count(), k).to_bit_string(),
                    "probability": rational(&table.probability(k)),
                })
            })
            .collect();
        body["table"] = Value::Array(rows);
    }
    pt.body = body;
    Ok(pt)
}

pub fn verify_duality_cmd(cfg: &Resolved, p: &BigRational) -> Result<Point, CliError> {
    let ctx = cfg.context(p)?;
    if ctx.i >= ctx.d() {
        return Err(CliError::Usage(format!("duality needs i < d, got i={} d={}", ctx.i, ctx.d())));
    }
    let rep = verify_duality(&ctx)?;
    let mut pt = Point::new(
        p,
        json!({
            "p": rational(&rep.p),
            "p_star": rational(&rep.p_star),
            "max_discrepancy": rational(&rep.max_discrepancy),
            "configs_checked": rep.configs_checked,
            "witness": rep.witness,
        }),
    );
    pt.row("max_discrepancy", rational(&rep.max_discrepancy), None);
    pt.check(rep.passed());
    Ok(pt)
}

fn lattice_report(p: &BigRational, rep: &prcm_core::measure::LatticeConditionReport) -> Point {
    let witness = rep.violation.as_ref().map(|(a, b, j)| json!({ "lower": a, "upper": b, "plaquette": j }));
    let mut pt = Point::new(p, json!({ "p": rational(p), "checks": rep.checks, "witness": witness }));
    pt.row("violations", u8::from(!rep.passed()).to_string(), None);
    pt.check(rep.passed());
    pt
}

pub fn verify_fkg_cmd(cfg: &Resolved, p: &BigRational) -> Result<Point, CliError> {
    let table = enumerate_model(&model(cfg, p)?, cfg.cap())?;
    Ok(lattice_report(p, &verify_fkg(&table)))
}

pub fn verify_holley_cmd(cfg: &Resolved, p: &BigRational) -> Result<Point, CliError> {
    let lower = enumerate_model(&model(cfg, p)?, cfg.cap())?;
    let upper_ctx = cfg.upper(p)?;
    let upper = enumerate_model(&Model::new(&upper_ctx)?, cfg.cap())?;
    let mut pt = lattice_report(p, &verify_holley(&lower, &upper)?);
    pt.body["upper"] = json!({ "boundary": upper_ctx.boundary.name(), "p": rational(&upper_ctx.p) });
    Ok(pt)
}

pub fn verify_conditioning_cmd(cfg: &Resolved, p: &BigRational) -> Result<Point, CliError> {
    let outer = cfg.context(p)?;
    let spec = cfg.raw.inner_box.as_deref().ok_or_else(|| CliError::Usage("--inner-box is required".into()))?;
    let inner = parse_box(spec, cfg.lattice_box.convention())?;
    let annulus = annulus_plaquettes(&outer, &inner)?;
    let states: Vec<Configuration> = match cfg.raw.annulus_state.as_deref() {
        Some(bits) => {
            if bits.len() != annulus.len() || bits.chars().any(|c| c != '0' && c != '1') {
                return Err(CliError::Usage(format!("--annulus-state needs {} bits of 0/1", annulus.len())));
            }
            vec![Configuration::from_bools(&bits.chars().map(|c| c == '1').collect::<Vec<_>>())]
        }
        None if annulus.len() <= ANNULUS_LIMIT => {
            (0..1u64 << annulus.len()).map(|k| Configuration::from_index(annulus.len(), k)).collect()
        }
        None => {
            return Err(CliError::Usage(format!(
                "{} annulus plaquettes; pass --annulus-state to pick one state",
                annulus.len()
            )))
        }
    };
    let mut failures = Vec::new();
    let mut checked = 0;
    for s in &states {
        let rep = verify_conditioning(&outer, &inner, s)?;
        checked += rep.configs_checked;
        if let Some(w) = rep.witness {
            failures.push(json!({ "annulus_state": s.to_bit_string(), "config": w }));
        }
    }
    let mut pt = Point::new(
        p,
        json!({
            "p": rational(p),
            "annulus": annulus.iter().map(Cell::to_string).collect::<Vec<_>>(),
            "states_checked": states.len(),
            "configs_checked": checked,
            "failures": failures,
        }),
    );
    pt.row("failures", failures.len().to_string(), None);
    pt.check(failures.is_empty());
    Ok(pt)
}

pub fn verify_coupling_cmd(cfg: &Resolved, p: &BigRational) -> Result<Point, CliError> {
    let m = model(cfg, p)?;
    let table = coupling_table(&m)?;
    let exact = enumerate_model(&m, cfg.cap())?;
    let complex_ok = table.complex_marginal() == exact.probabilities();
    let spin_ok = table.spin_marginal() == plgt_gibbs(&m);
    let mut body = json!({
        "p": rational(p),
        "joint_states": table.probabilities.len(),
        "spin_cells": table.spin_cells,
        "complex_marginal_matches": complex_ok,
        "spin_marginal_matches": spin_ok,
    });
    let mut pt = Point::new(p, Value::Null);
    pt.row("complex_marginal_matches", complex_ok.to_string(), None);
    pt.row("spin_marginal_matches", spin_ok.to_string(), None);
    pt.check(complex_ok && spin_ok);
    if cfg.raw.gamma.is_some() {
        let w = wilson_exact(&m, &cfg.gamma()?)?;
        let character_ok = match w.spin_character_exact() {
            Some(c) => c == w.null_homology,
            None => (w.spin_character() - w.null_homology.to_f64().unwrap_or(f64::NAN)).abs() < 1e-12,
        };
        body["wilson"] = json!({
            "null_homology": rational(&w.null_homology),
            "spin_indicator": rational(w.spin_indicator()),
            "spin_character": w.spin_character(),
            "spin_character_exact": w.spin_character_exact().as_ref().map(rational),
            "character_matches_null_homology": character_ok,
        });
        pt.row("null_homology", rational(&w.null_homology), None);
        pt.row("spin_indicator", rational(w.spin_indicator()), None);
        pt.row("spin_character", w.spin_character().to_string(), None);
        pt.check(character_ok);
    }
    pt.body = body;
    Ok(pt)
}

pub fn verify_ep(cfg: &Resolved) -> Result<Point, CliError> {
    let ep = EulerPoincare::new(&cfg.lattice_box, cfg.i, cfg.q)?;
    let n = ep.plaquette_count();
    let exhaustive = cfg.raw.samples.is_none() && n <= EP_EXHAUSTIVE_LIMIT;
    let configs: Vec<Configuration> = if exhaustive {
        (0..1u64 << n).map(|k| Configuration::from_index(n, k)).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed());
        (0..cfg.raw.samples.unwrap_or(DEFAULT_EP_SAMPLES))
            .map(|_| Configuration::from_bools(&(0..n).map(|_| rng.gen::<bool>()).collect::<Vec<_>>()))
            .collect()
    };
    let zero = BigRational::zero();
    let (constant, witness) = match ep.verify(&configs) {
        Ok(c) => (c, None),
        Err(HomologyError::EulerPoincareMismatch { first, found, witness }) => {
            (Some(first), Some(json!({ "config": witness, "value": found })))
        }
        Err(e) => return Err(e.into()),
    };
    let mut pt = Point::new(
        &zero,
        json!({
            "plaquettes": n,
            "mode": if exhaustive { "exhaustive" } else { "random" },
            "configs_checked": configs.len(),
            "constant": constant,
            "witness": witness,
        }),
    );
    pt.p = String::new();
    pt.row("constant", constant.map(|c| c.to_string()).unwrap_or_default(), None);
    pt.check(witness.is_none());
    Ok(pt)
}

fn observables(cfg: &Resolved, m: &Model) -> Result<Vec<Observable>, CliError> {
    let names: Vec<String> = if cfg.raw.observe.is_empty() { vec!["density".into()] } else { cfg.raw.observe.clone() };
    names
        .iter()
        .map(|name| {
            Ok(match name.as_str() {
                "density" => Observable::OpenDensity,
                "null-homology" => Observable::NullHomology(cfg.gamma()?),
                "spin-indicator" => Observable::SpinIndicator(cfg.gamma()?),
                "spin-character" => Observable::SpinCharacter(cfg.gamma()?),
                other => match other.strip_prefix("open:") {
                    Some(cell) => {
                        let c: Cell = cell.parse().map_err(|e: prcm_core::LatticeError| CliError::Usage(e.to_string()))?;
                        if m.plaquettes().id(&c).is_none() {
                            return Err(CliError::Usage(format!("{c} is not a plaquette of the box")));
                        }
                        Observable::PlaquetteOpen(c)
                    }
                    None => return Err(CliError::Usage(format!("unknown observable {other:?}"))),
                },
            })
        })
        .collect()
}

fn stats_json(o: &ObservableStats, run: &RunConfig) -> Value {
    json!({
        "observable": o.name,
        "mean": o.mean,
        "variance": o.variance,
        "stderr": o.stderr,
        "batches": o.batches,
        "samples": o.samples,
        "sweeps": run.sweeps,
        "burn_in": run.burn_in,
        "chains": run.chains,
        "seed": run.seed,
    })
}

fn sampling_point(cfg: &Resolved, p: &BigRational, m: &Model, run: &RunConfig, out: &ChainOutput) -> Result<Point, CliError> {
    let mut pt = Point::new(p, Value::Null);
    let stats: Vec<Value> = out.stats.observables.iter().map(|o| stats_json(o, run)).collect();
    for o in &out.stats.observables {
        pt.row(o.name.clone(), o.mean.to_string(), o.stderr);
    }
    let mut body = json!({ "p": rational(p), "observables": stats });
    if let Some(h) = &out.histogram {
        let exact = enumerate_model(m, cfg.cap())?;
        let probs: Vec<f64> = exact.probabilities().iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect();
        let tv = prcm_core::sampler::total_variation(h, &probs);
        body["total_variation"] = json!(tv);
        pt.row("total_variation", tv.to_string(), None);
        if let Some(t) = cfg.raw.tv_threshold {
            body["tv_threshold"] = json!(t);
            pt.check(tv < t);
        }
    }
    pt.body = body;
    Ok(pt)
}

fn sampling_run(cfg: &Resolved, m: &Model) -> Result<RunConfig, CliError> {
    let mut run = cfg.run_config()?;
    run.histogram = cfg.raw.tv_threshold.is_some() || m.plaquette_count() <= cfg.cap().min(20);
    Ok(run)
}

pub fn sample(cfg: &Resolved, p: &BigRational) -> Result<Point, CliError> {
    let m = model(cfg, p)?;
    let run = sampling_run(cfg, &m)?;
    let out = run_chain(&m, &run, &observables(cfg, &m)?)?;
    sampling_point(cfg, p, &m, &run, &out)
}

pub fn sample_coupled(cfg: &Resolved, p: &BigRational) -> Result<Point, CliError> {
    let m = model(cfg, p)?;
    let run = sampling_run(cfg, &m)?;
    let out = run_coupled(&m, &run, &observables(cfg, &m)?)?;
    sampling_point(cfg, p, &m, &run, &out)
}

pub fn estimate(cfg: &Resolved, p: &BigRational) -> Result<Point, CliError> {
    let m = model(cfg, p)?;
    let run = cfg.run_config()?;
    let quantity = cfg.raw.quantity.unwrap_or(Quantity::Density);
    let mut pt = Point::new(p, Value::Null);
    let estimates: Vec<Value> = match quantity {
        Quantity::Density => {
            let stats = run_chain(&m, &run, &[Observable::OpenDensity])?.stats;
            stats.observables.iter().map(|o| stats_json(o, &run)).collect()
        }
        Quantity::Wilson => {
            let stats = wilson_estimate(&m, &run, &cfg.gamma()?)?;
            stats.observables.iter().map(|o| stats_json(o, &run)).collect()
        }
        Quantity::Pressure => {
            let est = estimate_pressure(&m, &run, PRESSURE_SPAN, PRESSURE_INTERVALS)?;
            vec![json!({
                "observable": "pressure",
                "pi": est.pi,
                "mean": est.mean,
                "stderr": est.stderr,
                "batches": Value::Null,
                "grid_points": est.grid_points,
                "sweeps": run.sweeps,
                "burn_in": run.burn_in,
                "chains": run.chains,
                "seed": run.seed,
            })]
        }
    };
    for e in &estimates {
        pt.row(
            e["observable"].as_str().unwrap_or_default(),
            e["mean"].as_f64().map(|x| x.to_string()).unwrap_or_default(),
            e["stderr"].as_f64(),
        );
    }
    pt.body = json!({ "p": rational(p), "quantity": quantity, "estimates": estimates });
    Ok(pt)
}
