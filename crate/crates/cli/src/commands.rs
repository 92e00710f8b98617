use std::path::Path;

use qhier_core::eclectic::{
    build_eclectic, chain_dimension_sweep, dimension_report, ground_state, verify_energy_identity, Layout, ModelSummary,
    ENERGY_TOL,
};
use qhier_core::hamiltonization::{hamiltonize, integrate_sampled, PhaseSpacePoint, SymplecticMethod};
use qhier_core::hierarchy::{oscillator_demo, potential_demo, qubit_demo, Ordering};
use qhier_core::hilbert::{embed_local, evolve_exact, pauli, Operator, StateVector};
use qhier_core::hspec::{assemble_full, parse_spec};
use qhier_core::open::{default_dt, lindblad_series, sse_ensemble, LindbladModel};
use qhier_core::random::{random_state, seeded};
use qhier_core::report::{Check, Tolerances};
use qhier_core::verify::{named_seed, run_suites_with_model, Suite, SCHEMA};
use qhier_core::{Error, Result};
use serde_json::{json, Value};

use crate::inputs::{load_dynamics, load_model, load_state, parse_coefficients, parse_range, read_text, Dynamics};
use crate::output::{checks_csv, csv_row, emit, json, spectrum_line};
use crate::{Engine, EvolveArgs, Example, Format, Global, LayoutArg, MethodArg, OrderingArg, Status};

fn finish(global: &Global, value: &Value, csv: impl FnOnce() -> String) -> Result<()> {
    let text = match global.format {
        Format::Json => json(value),
        Format::Csv => csv(),
    };
    emit(global.out.as_deref(), &text)
}

/// Applies overrides; a name matching none of `checks` is an argument error.
fn apply_tolerances(checks: &mut [Check], tol: &Tolerances) -> Result<()> {
    if let Some(bad) = tol.names().find(|n| !checks.iter().any(|c| c.name == *n)) {
        return Err(Error::Argument(format!("--tol names unknown check {bad:?}")));
    }
    for c in checks.iter_mut() {
        tol.apply(c);
    }
    Ok(())
}

pub fn parse(global: &Global, file: &Path) -> Result<Status> {
    let text = read_text(file)?;
    let h = match parse_spec(&text) {
        Ok(h) => h,
        Err(Error::Parse(diags)) => {
            for d in &diags {
                eprintln!("{}: {d}", file.display());
            }
            return Ok(Status::CheckFailed);
        }
        Err(e) => return Err(e),
    };
    let summary = ModelSummary::of(&h);
    let terms: Vec<Value> = h
        .terms
        .iter()
        .enumerate()
        .map(|(l, t)| json!({"l": l, "sites": t.sites, "locality": t.locality(), "label": t.label}))
        .collect();
    let value = json!({
        "schema": SCHEMA,
        "command": "parse",
        "n": summary.n,
        "d": summary.d,
        "k": summary.k,
        "m": summary.m,
        "classes": summary.classes,
        "terms": terms,
    });
    finish(global, &value, || {
        let mut out = String::from("l,locality,sites,label\n");
        for (l, t) in h.terms.iter().enumerate() {
            let sites = t.sites.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ");
            out.push_str(&format!("{l},{},{sites},{}\n", t.locality(), t.label));
        }
        out
    })?;
    Ok(Status::Pass)
}

pub fn verify(global: &Global, tol: &Tolerances, suite: &str, model: Option<&str>) -> Result<Status> {
    let suites = Suite::parse_list(suite)?;
    let h = model.map(load_model).transpose()?;
    let report = run_suites_with_model(&suites, global.seed, tol, h.as_ref())?;
    for f in &report.failing {
        eprintln!("FAIL {f}");
    }
    let value = serde_json::to_value(&report).expect("report serializes");
    finish(global, &value, || {
        let sections: Vec<(&str, &[Check])> =
            report.suites.iter().map(|s| (s.suite.as_str(), s.checks.as_slice())).collect();
        checks_csv(&sections)
    })?;
    Ok(Status::from_pass(report.pass))
}

fn layout(arg: LayoutArg) -> Layout {
    match arg {
        LayoutArg::Padded => Layout::PaddedTensor,
        LayoutArg::Directsum => Layout::PerTermDirectSum,
    }
}

pub fn eclectic(
    global: &Global,
    tol: &Tolerances,
    model: &str,
    state: &str,
    states: usize,
    dims_only: bool,
    sweep: Option<&str>,
) -> Result<Status> {
    let h = load_model(model)?;
    let table = dimension_report(&h);
    let sweep_table = sweep.map(parse_range).transpose()?.map(chain_dimension_sweep);
    let mut warnings = table.warnings.clone();
    if let Some(s) = &sweep_table {
        warnings.extend(s.warnings.iter().map(|w| format!("sweep {w}")));
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let mut base = json!({
        "schema": SCHEMA,
        "command": "eclectic",
        "seed": global.seed,
        "model": ModelSummary::of(&h),
        "dimension_table": table,
        "sweep": sweep_table,
        "warnings": warnings,
    });
    if dims_only {
        if !tol.is_empty() {
            return Err(Error::Argument("--tol has no checks to apply with --dims-only".into()));
        }
        base["pass"] = json!(true);
        finish(global, &base, || dims_csv(&table))?;
        return Ok(Status::Pass);
    }

    let dim = h.shape()?.total_dim()?;
    let psis: Vec<StateVector> = match state {
        "groundstate" => vec![ground_state(&h)?.1],
        "random" => {
            let mut rng = seeded(named_seed(global.seed, "eclectic/state"));
            (0..states.max(1)).map(|_| random_state(dim, &mut rng)).collect()
        }
        s if s.starts_with("random:") => {
            let first = load_state(s, dim, global.seed)?;
            let mut rng = seeded(named_seed(global.seed, s));
            std::iter::once(first).chain((1..states.max(1)).map(|_| random_state(dim, &mut rng))).collect()
        }
        s => vec![load_state(s, dim, global.seed)?],
    };
    let sys = build_eclectic(&h, layout(global.layout))?;
    let reports = psis.iter().map(|psi| verify_energy_identity(psi, &sys, &h)).collect::<Result<Vec<_>>>()?;
    let worst = reports.iter().map(|r| r.total.delta).fold(0.0, f64::max);
    let (phys, pad) = sys.padding_defect(&h)?;
    let mut checks = vec![Check::new("energy_identity", worst, ENERGY_TOL), Check::new("padding_neutrality", phys.max(pad), 1e-300)];
    apply_tolerances(&mut checks, tol)?;
    let pass = checks.iter().all(|c| c.pass);
    for c in checks.iter().filter(|c| !c.pass) {
        eprintln!("FAIL eclectic/{}", c.name);
    }
    base["layout"] = json!(sys.layout);
    base["n_bar"] = json!(sys.n_bar);
    base["state"] = json!(state);
    base["reports"] = json!(reports);
    base["checks"] = json!(checks);
    base["pass"] = json!(pass);
    finish(global, &base, || checks_csv(&[("eclectic", &checks)]))?;
    Ok(Status::from_pass(pass))
}

fn dims_csv(table: &qhier_core::eclectic::DimensionTable) -> String {
    let mut out = String::from("n,n_bar,full,padded,direct_sum\n");
    for r in &table.rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.n, r.n_bar, r.full, r.padded, r.direct_sum));
    }
    out
}

pub fn hierarchy(
    global: &Global,
    tol: &Tolerances,
    example: Example,
    cutoff: Option<usize>,
    omega: f64,
    potential: &str,
    ordering: OrderingArg,
) -> Result<Status> {
    let (mut value, spectrum) = match example {
        Example::Oscillator => {
            let r = oscillator_demo(omega, cutoff.unwrap_or(5))?;
            let s = r.h1_spectrum.clone();
            (serde_json::to_value(&r).expect("report serializes"), s)
        }
        Example::Potential => {
            let ordering = match ordering {
                OrderingArg::Weyl => Ordering::Weyl,
                OrderingArg::Normal => Ordering::Normal,
            };
            let r = potential_demo(&parse_coefficients(potential)?, ordering, cutoff.unwrap_or(20))?;
            let s = r.levels.iter().find(|l| l.label == "H_1").map(|l| l.spectrum.clone()).unwrap_or_default();
            (serde_json::to_value(&r).expect("report serializes"), s)
        }
        Example::Qubit => {
            let mut rng = seeded(named_seed(global.seed, "hierarchy/qubit"));
            let r = qubit_demo(&pauli::z(), cutoff.unwrap_or(2), &mut rng)?;
            let s = r.spectrum.h1_spectrum.clone();
            (serde_json::to_value(&r).expect("report serializes"), s)
        }
    };
    let mut checks: Vec<Check> = serde_json::from_value::<Vec<Value>>(value["checks"].take())
        .expect("checks array")
        .into_iter()
        .map(|c| {
            let mut check = Check::new(
                c["name"].as_str().unwrap_or_default(),
                c["residual"].as_f64().unwrap_or(f64::NAN),
                c["tolerance"].as_f64().unwrap_or(0.0),
            );
            check.pass = c["pass"].as_bool().unwrap_or(false);
            check
        })
        .collect();
    apply_tolerances(&mut checks, tol)?;
    let pass = checks.iter().all(|c| c.pass);
    for c in checks.iter().filter(|c| !c.pass) {
        eprintln!("FAIL hierarchy/{}", c.name);
    }
    let line = spectrum_line(&spectrum);
    eprintln!("spectrum: {line}");
    let mut out = json!({"schema": SCHEMA, "command": "hierarchy", "seed": global.seed});
    if let (Value::Object(o), Value::Object(r)) = (&mut out, value) {
        o.extend(r);
    }
    out["checks"] = json!(checks);
    out["spectrum_line"] = json!(line);
    out["pass"] = json!(pass);
    finish(global, &out, || checks_csv(&[("hierarchy", &checks)]))?;
    Ok(Status::from_pass(pass))
}

/// The model's Hamiltonian and jump operators, with `--decay` adding
/// `sqrt(gamma) sigma_minus` on every qubit.
fn resolve_dynamics(args: &EvolveArgs) -> Result<(Operator, Vec<(Operator, f64)>, usize)> {
    let (h, mut jumps, qubits) = match load_dynamics(&args.model)? {
        Dynamics::Direct { h, jumps } => {
            let q = if h.dim() == 2 { Some(1) } else { None };
            (h, jumps, q)
        }
        Dynamics::Model(m) => {
            let q = (m.d == 2).then_some(m.n);
            (assemble_full(&m)?, Vec::new(), q)
        }
    };
    if let Some(gamma) = args.decay {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::Argument("--decay must be nonnegative".into()));
        }
        let n = qubits.ok_or_else(|| Error::Argument("--decay needs a qubit model".into()))?;
        jumps.clear();
        let shape = qhier_core::SpaceShape::uniform(n, 2)?;
        for site in 0..n {
            jumps.push((embed_local(&pauli::sigma_minus(), &[site], &shape)?, gamma));
        }
    }
    let excited = jumps.is_empty().then_some(0).unwrap_or(h.dim() - 1);
    Ok((h, jumps, excited))
}

fn sample_times(t: f64, samples: usize) -> Vec<f64> {
    if t == 0.0 || samples == 0 {
        return vec![0.0];
    }
    (0..=samples).map(|j| t * j as f64 / samples as f64).collect()
}

pub fn evolve(global: &Global, args: &EvolveArgs) -> Result<Status> {
    if !(args.t >= 0.0 && args.t.is_finite()) {
        return Err(Error::Argument("--t must be nonnegative".into()));
    }
    if let Some(dt) = args.dt {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Argument("--dt must be positive".into()));
        }
    }
    let (h, jumps, excited) = resolve_dynamics(args)?;
    let dim = h.dim();
    let init = args.init.clone().unwrap_or_else(|| {
        if jumps.is_empty() {
            "random".to_string()
        } else {
            format!("basis:{excited}")
        }
    });
    let psi0 = load_state(&init, dim, named_seed(global.seed, "evolve/init"))?;
    let times = sample_times(args.t, args.samples);

    let (columns, rows) = match args.engine {
        Engine::Exact | Engine::Symplectic => {
            if !jumps.is_empty() {
                return Err(Error::Argument("closed engines take no jump operators; use lindblad or sse".into()));
            }
            let mut columns = vec!["t".to_string()];
            for i in 0..dim {
                columns.push(format!("re_psi_{i}"));
                columns.push(format!("im_psi_{i}"));
            }
            columns.extend(["energy".to_string(), "norm".to_string()]);
            let sys = hamiltonize(&h)?;
            let points = if args.engine == Engine::Exact {
                times
                    .iter()
                    .map(|&t| Ok((t, PhaseSpacePoint::from_state(&evolve_exact(&h, &psi0, t)?))))
                    .collect::<Result<Vec<_>>>()?
            } else {
                symplectic_points(&sys, &psi0, args, &times)?
            };
            let rows = points
                .into_iter()
                .map(|(t, p)| {
                    let mut row = vec![t];
                    for z in &p.psi {
                        row.extend([z.re, z.im]);
                    }
                    row.extend([sys.energy(&p)?, p.norm_sqr()]);
                    Ok(row)
                })
                .collect::<Result<Vec<_>>>()?;
            (columns, rows)
        }
        Engine::Lindblad | Engine::Sse => {
            let model = LindbladModel::new(h, jumps)?;
            let dt = args.dt.unwrap_or_else(|| default_dt(args.t));
            let rhos = if args.engine == Engine::Lindblad {
                lindblad_series(&model, &psi0.projector(), &times, dt)?
            } else {
                let ens = sse_ensemble(&model, &psi0, &times, dt, args.n_traj, named_seed(global.seed, "evolve/sse"))?;
                (0..times.len()).map(|j| ens.average(j)).collect::<Result<Vec<_>>>()?
            };
            let mut columns = vec!["t".to_string()];
            for i in 0..dim {
                for j in 0..dim {
                    columns.push(format!("re_rho_{i}_{j}"));
                    columns.push(format!("im_rho_{i}_{j}"));
                }
            }
            columns.push("trace".to_string());
            let rows = times
                .iter()
                .zip(&rhos)
                .map(|(&t, rho)| {
                    let mut row = vec![t];
                    for i in 0..dim {
                        for j in 0..dim {
                            let z = rho.get(i, j);
                            row.extend([z.re, z.im]);
                        }
                    }
                    row.push(rho.trace().re);
                    row
                })
                .collect();
            (columns, rows)
        }
    };

    let value = json!({
        "schema": SCHEMA,
        "command": "evolve",
        "engine": format!("{:?}", args.engine).to_lowercase(),
        "seed": global.seed,
        "init": init,
        "columns": columns,
        "rows": rows,
    });
    finish(global, &value, || {
        let mut out = columns.join(",");
        out.push('\n');
        for row in &rows {
            out.push_str(&csv_row(row));
        }
        out
    })?;
    Ok(Status::Pass)
}

/// Symplectic steps chosen so every sample time lands on a step.
fn symplectic_points(
    sys: &qhier_core::hamiltonization::ClassicalSystem,
    psi0: &StateVector,
    args: &EvolveArgs,
    times: &[f64],
) -> Result<Vec<(f64, PhaseSpacePoint)>> {
    let p0 = PhaseSpacePoint::from_state(psi0);
    if times.len() == 1 {
        return Ok(vec![(0.0, p0)]);
    }
    let interval = times[1] - times[0];
    let target = args.dt.unwrap_or(1e-3f64.min(interval));
    let stride = (interval / target).ceil().max(1.0) as usize;
    let steps = stride * (times.len() - 1);
    let method = match args.method {
        MethodArg::Midpoint => SymplecticMethod::ImplicitMidpoint,
        MethodArg::Leapfrog => SymplecticMethod::LeapfrogReim,
    };
    let traj = integrate_sampled(sys, &p0, args.t / steps as f64, steps, method, stride)?;
    // Report the nominal sample times rather than accumulated step multiples.
    Ok(times.iter().copied().zip(traj.points).collect())
}
