use std::fs;
use std::path::Path;
use std::process::ExitCode;

use beatlab_core::basis::BasisState;
use beatlab_core::beat::extract_beat;
use beatlab_core::experiment::{self, conventions, run_experiment, ExperimentConfig};
use beatlab_core::hamiltonian::build_hamiltonian;
use beatlab_core::perturbation::{alpha_pred, beating_period, perturbed_energies};
use beatlab_core::sem::{numeric_triplet, resonant_triplet};
use beatlab_core::spectral::{diagonalize, photon_traces, ObservableTrace, TimeGrid};
use beatlab_core::verify::{run_criterion, CRITERIA};
use beatlab_core::{Error, ModelKind, Result};
use serde_json::{json, Value};

use crate::args::{BeatArgs, CommonArgs, DetuneArgs, SweepNArgs, VerifyArgs};

fn ok_or_note<T: serde::Serialize>(r: Result<T>) -> Value {
    match r {
        Ok(v) => json!(v),
        Err(e) => json!({ "unavailable": e.to_string() }),
    }
}

fn emit(value: &Value, out: Option<&Path>, file: &str) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join(file);
            fs::write(&path, text + "\n")?;
            println!("wrote {}", path.display());
        }
        None => println!("{text}"),
    }
    Ok(())
}

pub fn spectrum(args: &CommonArgs) -> Result<ExitCode> {
    let config = args.resolve(&ModelKind::ALL)?;
    let mut points = Vec::new();
    for point in config.validate()? {
        let p = point.params;
        let mut models = Vec::new();
        for &kind in &config.models {
            let eig = diagonalize(&build_hamiltonian(kind, &p)?)?;
            models.push(json!({
                "model": kind,
                "energies": eig.energies(),
                "uncoupled_ground_energy": -(p.n_tls as f64) * p.omega_m / 2.0,
                "sem_triplet": ok_or_note(numeric_triplet(kind, &p)),
            }));
        }
        points.push(json!({
            "label": point.label,
            "params": p,
            "closed_form_triplet": ok_or_note(resonant_triplet(&p)),
            "perturbative": ok_or_note(perturbed_energies(&p)),
            "alpha_pred": ok_or_note(alpha_pred(&p)),
            "t_beat": ok_or_note(beating_period(&p)),
            "models": models,
        }));
    }
    let value = json!({ "conventions": conventions(), "points": points });
    emit(&value, args.out.as_deref(), "spectrum.json")?;
    Ok(ExitCode::SUCCESS)
}

pub fn propagate(args: &CommonArgs) -> Result<ExitCode> {
    let config = args.resolve(&ModelKind::ALL)?;
    let summary = run_experiment(&config)?;
    for point in &summary.points {
        for run in &point.runs {
            let beat = run
                .beat
                .map(|b| format!("alpha_fit {:.6e}, depth {:.4}", b.alpha_fit, b.modulation_depth))
                .unwrap_or_else(|| "no beat fit".into());
            println!(
                "{}: {} ({beat}; convergence {})",
                run.model,
                config.out_dir.join(&run.csv).display(),
                if run.convergence.passed { "ok" } else { "FAILED" }
            );
        }
    }
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    println!("wrote {}", config.out_dir.join("summary.json").display());
    Ok(ExitCode::SUCCESS)
}

/// Reads a uniformly sampled trace from CSV with a header row and `t` first.
fn read_trace(path: &Path, column: &str) -> Result<ObservableTrace> {
    let bad = |msg: String| Error::InvalidParams(msg);
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = header
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| bad(format!("column '{column}' not in header {header:?}")))?;
    let mut ts = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let get = |j: usize| -> Result<f64> {
            record
                .get(j)
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| bad(format!("row {}: cannot read column {j}", i + 2)))
        };
        ts.push(get(0)?);
        values.push(get(col)?);
    }
    if ts.len() < 2 {
        return Err(Error::InvalidParams("trace needs at least two rows".into()));
    }
    let dt = (ts[ts.len() - 1] - ts[0]) / (ts.len() - 1) as f64;
    let grid = TimeGrid::new(ts[0], dt, ts.len())?;
    if ts.iter().enumerate().any(|(i, &t)| (t - grid.time(i)).abs() > 1e-6 * dt) {
        return Err(Error::InvalidParams("trace is not uniformly sampled".into()));
    }
    ObservableTrace::new(grid, values)
}

pub fn beat(args: &BeatArgs) -> Result<ExitCode> {
    if let Some(path) = &args.trace {
        let fit = extract_beat(&read_trace(path, &args.column)?)?;
        emit(&json!({ "source": path, "fit": fit }), args.common.out.as_deref(), "beat.json")?;
        return Ok(ExitCode::SUCCESS);
    }
    let config = args.common.resolve(&[ModelKind::Dm])?;
    let grid = config.grid.grid()?;
    let mut rows = Vec::new();
    for point in config.validate()? {
        let p = point.params;
        for &kind in &config.models {
            let trace = photon_traces(kind, &p, BasisState::from(config.init), &grid)?.mean;
            rows.push(json!({
                "label": point.label,
                "model": kind,
                "params": p,
                "fit": ok_or_note(extract_beat(&trace)),
                "alpha_numeric": ok_or_note(numeric_triplet(kind, &p).map(|t| t.alpha)),
                "alpha_pred": ok_or_note(alpha_pred(&p)),
                "t_beat": ok_or_note(beating_period(&p)),
            }));
        }
    }
    emit(&json!({ "conventions": conventions(), "results": rows }), args.common.out.as_deref(), "beat.json")?;
    Ok(ExitCode::SUCCESS)
}

fn single_model(config: &ExperimentConfig) -> ModelKind {
    if config.models.len() > 1 {
        log::warn!("using only the first of {} models", config.models.len());
    }
    config.models.first().copied().unwrap_or(ModelKind::Dm)
}

fn write_table(out: Option<&Path>, name: &str, csv: &str, details: &Value) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(format!("{name}.csv")), csv)?;
            fs::write(dir.join(format!("{name}.json")), serde_json::to_string_pretty(details)? + "\n")?;
            println!("wrote {0}/{name}.csv and {0}/{name}.json", dir.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

pub fn sweep_n(args: &SweepNArgs) -> Result<ExitCode> {
    if args.n_min == 0 || args.n_min > args.n_max {
        return Err(Error::InvalidParams(format!("bad N range {}..={}", args.n_min, args.n_max)));
    }
    let config = args.common.resolve(&[ModelKind::Dm])?;
    let kind = single_model(&config);
    let ns: Vec<usize> = (args.n_min..=args.n_max).collect();
    let table = experiment::sweep_n(kind, &config.params, &ns, BasisState::from(config.init), &config.grid.grid()?);
    for row in table.rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("warning: N = {}: {}", row.n_tls, row.error.as_deref().unwrap_or(""));
    }
    let details = json!({ "config": config, "conventions": conventions(), "table": table });
    write_table(args.common.out.as_deref(), "sweep_n", &table.to_csv(), &details)?;
    Ok(ExitCode::SUCCESS)
}

pub fn detune(args: &DetuneArgs) -> Result<ExitCode> {
    if !(args.delta_step > 0.0 && args.delta_min <= args.delta_max) {
        return Err(Error::InvalidParams("need delta_step > 0 and delta_min <= delta_max".into()));
    }
    let config = args.common.resolve(&[ModelKind::Dm])?;
    let kind = single_model(&config);
    let lo = (args.delta_min / args.delta_step).round() as i64;
    let hi = (args.delta_max / args.delta_step).round() as i64;
    let deltas: Vec<f64> = (lo..=hi).map(|i| i as f64 * args.delta_step).collect();
    let scan = experiment::detuning_scan(kind, &config.params, &deltas, BasisState::from(config.init), &config.grid.grid()?)?;
    let details = json!({ "config": config, "conventions": conventions(), "scan": scan });
    write_table(args.common.out.as_deref(), "detune", &scan.to_csv(), &details)?;
    let fmt = |x: Option<f64>| x.map(|v| format!("{v:.6e}")).unwrap_or_else(|| "n/a".into());
    eprintln!(
        "{kind}: best delta_omega {} (depth {}), resonant depth {}",
        fmt(scan.best_delta_omega),
        fmt(scan.best_depth),
        fmt(scan.resonant_depth)
    );
    Ok(ExitCode::SUCCESS)
}

pub fn verify(args: &VerifyArgs) -> Result<ExitCode> {
    let ids: Vec<u8> = if args.criteria.is_empty() {
        CRITERIA.iter().map(|c| c.0).collect()
    } else {
        args.criteria.clone()
    };
    let mut reports = Vec::new();
    for id in ids {
        let report = run_criterion(id)?;
        if !args.json {
            println!("{report}");
        }
        reports.push(report);
    }
    let passed = reports.iter().filter(|r| r.passed).count();
    if args.json {
        println!("{}", serde_json::to_string_pretty(&reports)?);
    } else {
        println!("acceptance: {passed}/{} criteria passed", reports.len());
    }
    Ok(if passed == reports.len() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
