use std::fs::{self, File};
use std::io::{BufWriter, Write};

use serde_json::{json, Value};

use fom_core::bound::{ratio_l0, ratio_l3, BoundPoint};
use fom_core::check::{run_checks, CheckConfig};
use fom_core::construction::{build_schedule, ConstructionParams, InstanceFile, Phase};
use fom_core::engine::algorithm_from_name;
use fom_core::optimizer::{minimize_bound, minimize_bound_from, optimize_chain, OptimizationResult, OptimizeError};
use fom_core::rational::{parse_rational, to_f64, Rational};
use fom_core::simulator::{run_with, verify_error_budget, BudgetCheck, RunOptions, SimulationError};

use crate::output::{self, real, SCHEMAS};
use crate::{
    BoundArgs, CheckArgs, CliError, ExportArgs, ExportCommand, Format, Formula, InstanceArgs, OptimizeArgs,
    SimulateArgs, Verdict,
};

fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

fn parse_real(input: &str, name: &str) -> Result<f64, CliError> {
    parse_rational(input)
        .map(|r| to_f64(&r))
        .map_err(|e| usage(format!("{name}: {e}")))
}

fn gamma_header(count: usize) -> impl Iterator<Item = String> {
    (1..=count).map(|j| format!("gamma_{j}"))
}

pub fn bound(args: &BoundArgs) -> Result<Verdict, CliError> {
    let lambda = parse_real(&args.lambda, "lambda")?;
    let gammas = args
        .gammas
        .iter()
        .enumerate()
        .map(|(j, g)| parse_real(g, &format!("gamma_{}", j + 1)))
        .collect::<Result<Vec<_>, _>>()?;
    let point = BoundPoint::evaluate(lambda, gammas).map_err(usage)?;
    let (formula, value) = match (args.formula, point.gammas.as_slice()) {
        (Formula::General, _) => ("general", point.value),
        (Formula::L0, []) => ("l0", ratio_l0(lambda)),
        (Formula::L3, &[g1, g2, g3]) => ("l3", ratio_l3(lambda, g1, g2, g3)),
        (Formula::L0, gs) | (Formula::L3, gs) => {
            return Err(usage(format!(
                "formula {:?} does not take {} gammas",
                args.formula,
                gs.len()
            )));
        }
    };
    let bytes = match args.out.format {
        Format::Text => format!("{value:.6}\n").into_bytes(),
        Format::Csv => {
            let header: Vec<String> = ["ell".into(), "lambda".into()]
                .into_iter()
                .chain(gamma_header(point.ell()))
                .chain(["value".into()])
                .collect();
            let row = [point.ell().to_string(), real(lambda, false)]
                .into_iter()
                .chain(point.gammas.iter().map(|&g| real(g, false)))
                .chain([real(value, false)]);
            output::csv(&header, [row])?
        }
        Format::Json => output::json(&json!({
            "formula": formula,
            "ell": point.ell(),
            "lambda": lambda,
            "gammas": point.gammas,
            "value": value,
            "value_rounded": format!("{value:.6}"),
        }))?,
    };
    output::emit(args.out.output.as_deref(), &bytes)?;
    Ok(true)
}

fn optimize_error(e: OptimizeError) -> CliError {
    match e {
        OptimizeError::AllRestartsFailed(_) => CliError::Runtime(e.to_string()),
        _ => usage(e),
    }
}

pub fn optimize(args: &OptimizeArgs) -> Result<Verdict, CliError> {
    if !(args.tol.is_finite() && args.tol > 0.0) {
        return Err(usage("--tol must be positive"));
    }
    if args.restarts == 0 {
        return Err(usage("--restarts must be at least 1"));
    }
    let results: Vec<OptimizationResult> = match (args.table, args.max_ell, args.ell) {
        (true, Some(max_ell), _) => optimize_chain(max_ell, args.restarts, args.tol).map_err(optimize_error)?,
        (false, _, Some(ell)) if !args.init.is_empty() => {
            let start = args
                .init
                .iter()
                .map(|s| parse_real(s, "--init"))
                .collect::<Result<Vec<_>, _>>()?;
            vec![minimize_bound_from(ell, &[start], args.tol).map_err(optimize_error)?]
        }
        (false, _, Some(ell)) => vec![minimize_bound(ell, args.restarts, args.tol).map_err(optimize_error)?],
        _ => return Err(usage("give either --ell N or --table --max-ell M")),
    };

    let full = args.full_precision;
    let bytes = match args.out.format {
        Format::Text => {
            let rows: Vec<Vec<String>> = results
                .iter()
                .map(|r| {
                    let gammas: Vec<String> = r.point.gammas.iter().map(|&g| real(g, full)).collect();
                    vec![
                        r.ell.to_string(),
                        real(r.point.lambda, full),
                        if gammas.is_empty() {
                            "-".into()
                        } else {
                            gammas.join(",")
                        },
                        real(r.point.value, full),
                        if r.converged { "yes" } else { "no" }.into(),
                    ]
                })
                .collect();
            output::table(&["ell", "lambda", "gammas", "value", "converged"], &rows).into_bytes()
        }
        Format::Csv => {
            let width = results.iter().map(|r| r.ell).max().unwrap_or(0);
            let header: Vec<String> = ["ell".into(), "lambda".into()]
                .into_iter()
                .chain(gamma_header(width))
                .chain(["value".into()])
                .collect();
            let rows = results.iter().map(|r| {
                let mut row = vec![r.ell.to_string(), real(r.point.lambda, full)];
                row.extend(r.point.gammas.iter().map(|&g| real(g, full)));
                row.resize(width + 2, String::new());
                row.push(real(r.point.value, full));
                row
            });
            output::csv(&header, rows)?
        }
        Format::Json => {
            let rows: Vec<Value> = results
                .iter()
                .map(|r| {
                    json!({
                        "ell": r.ell,
                        "lambda": r.point.lambda,
                        "gammas": r.point.gammas,
                        "value": r.point.value,
                        "value_rounded": format!("{:.6}", r.point.value),
                        "iterations": r.iterations,
                        "restarts_used": r.restarts_used,
                        "gradient_norm_fd": r.gradient_norm_fd,
                        "hessian_min_eigenvalue": r.hessian_min_eigenvalue,
                        "converged": r.converged,
                        "diagnostics": r.diagnostics,
                    })
                })
                .collect();
            output::json(&json!({
                "converged": results.iter().all(|r| r.converged),
                "rows": rows,
            }))?
        }
    };
    output::emit(args.out.output.as_deref(), &bytes)?;

    let mut converged = true;
    for r in results.iter().filter(|r| !r.converged) {
        converged = false;
        eprintln!("ell={} did not converge: {}", r.ell, r.diagnostics.join("; "));
    }
    Ok(converged)
}

fn instance_params(args: &InstanceArgs) -> Result<ConstructionParams, CliError> {
    if let Some(path) = &args.params {
        let text = fs::read_to_string(path)?;
        let file: InstanceFile = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        return file.to_params().map_err(usage);
    }
    let lambda = parse_rational(&args.lambda).map_err(usage)?;
    let gammas = args
        .gammas
        .iter()
        .map(|g| parse_rational(g))
        .collect::<Result<Vec<_>, _>>()
        .map_err(usage)?;
    ConstructionParams::with_multiplier(args.h, lambda, gammas, args.scale).map_err(usage)
}

fn exact(x: &Rational, full: bool) -> String {
    if full {
        x.to_string()
    } else {
        real(to_f64(x), false)
    }
}

fn check_cells(check: &Option<BudgetCheck>, full: bool) -> [String; 2] {
    match check {
        Some(c) => [exact(&c.deviation, full), exact(&c.budget, full)],
        None => [String::new(), String::new()],
    }
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "pass"
    } else {
        "FAIL"
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<Verdict, CliError> {
    let params = instance_params(&args.instance)?;
    let mut algorithm = algorithm_from_name(&args.alg).map_err(usage)?;
    let mut trace = args.trace.as_ref().map(File::create).transpose()?.map(BufWriter::new);
    let options = RunOptions {
        track_edges: false,
        trace: trace.as_mut().map(|w| w as &mut dyn Write),
    };
    let outcome = run_with(&params, algorithm.as_mut(), options).map_err(|e| match e {
        SimulationError::Construction(_) => usage(e),
        _ => CliError::Runtime(e.to_string()),
    })?;
    if let Some(mut trace) = trace {
        trace.flush()?;
    }
    let report = outcome.report;
    let budget = verify_error_budget(&report, &params);
    let full = args.full_precision;

    let bytes = match args.out.format {
        Format::Text => {
            let rows: Vec<Vec<String>> = budget
                .levels
                .iter()
                .map(|l| {
                    let q = report.q.get(l.level).map_or(String::from("-"), |q| exact(q, full));
                    let status = |c: &Option<BudgetCheck>| c.as_ref().map_or("-", |c| verdict(c.passed)).to_string();
                    vec![
                        l.level.to_string(),
                        l.size.to_string(),
                        exact(&l.p, full),
                        q,
                        status(&l.recurrence),
                        status(&l.closed_form),
                        status(&l.sacrificed),
                    ]
                })
                .collect();
            let mut text = format!("algorithm  {}\n", report.algorithm);
            text += &output::table(
                &["level", "size", "p", "q", "recurrence", "closed-form", "sacrificed"],
                &rows,
            );
            let summary = [
                ("|A|", report.a_size().to_string()),
                ("p_A", exact(&report.p_a, full)),
                (
                    "rho",
                    format!(
                        "{} ({}, limit {})",
                        exact(&report.rho, full),
                        verdict(budget.triangle.passed),
                        exact(&budget.triangle.limit, full)
                    ),
                ),
                ("ALG", exact(&report.alg_value, full)),
                ("OPT", report.opt_value.to_string()),
                ("ratio", exact(&report.ratio, full)),
                ("mass balance", verdict(budget.mass_balance).into()),
                ("double count", verdict(budget.double_count).into()),
                ("budgets", verdict(budget.passed()).into()),
            ];
            for (name, value) in summary {
                text += &format!("{name:<13}{value}\n");
            }
            text.into_bytes()
        }
        Format::Csv => {
            let header: Vec<String> = [
                "level",
                "size",
                "p",
                "q",
                "recurrence_deviation",
                "recurrence_budget",
                "closed_form_deviation",
                "closed_form_budget",
                "sacrificed_deviation",
                "sacrificed_budget",
                "passed",
            ]
            .map(String::from)
            .to_vec();
            let rows = budget.levels.iter().map(|l| {
                let mut row = vec![
                    l.level.to_string(),
                    l.size.to_string(),
                    exact(&l.p, full),
                    report.q.get(l.level).map_or(String::new(), |q| exact(q, full)),
                ];
                row.extend(check_cells(&l.recurrence, full));
                row.extend(check_cells(&l.closed_form, full));
                row.extend(check_cells(&l.sacrificed, full));
                row.push(l.passed().to_string());
                row
            });
            output::csv(&header, rows)?
        }
        Format::Json => output::json(&json!({
            "instance": InstanceFile::from_params(&params),
            "report": report.to_json(),
            "budget": budget,
            "passed": budget.passed(),
        }))?,
    };
    output::emit(args.out.output.as_deref(), &bytes)?;

    if !budget.passed() {
        eprintln!(
            "budget violations: levels {:?}, triangle {}, mass balance {}, double count {}",
            budget.failures(),
            verdict(budget.triangle.passed),
            verdict(budget.mass_balance),
            verdict(budget.double_count)
        );
    }
    Ok(budget.passed())
}

pub fn check(args: &CheckArgs) -> Result<Verdict, CliError> {
    let config = CheckConfig {
        quick: args.quick,
        ..CheckConfig::default()
    };
    let outcomes = run_checks(&config);
    let passed = outcomes.iter().all(|o| o.passed);
    let bytes = match args.out.format {
        Format::Text => {
            let rows: Vec<Vec<String>> = outcomes
                .iter()
                .map(|o| {
                    vec![
                        o.name.to_string(),
                        verdict(o.passed).to_uppercase(),
                        format!("{:.2}", o.seconds),
                        o.detail.clone(),
                    ]
                })
                .collect();
            let mut text = output::table(&["check", "result", "seconds", "detail"], &rows);
            let count = outcomes.iter().filter(|o| o.passed).count();
            text += &format!("{count}/{} checks passed\n", outcomes.len());
            text.into_bytes()
        }
        Format::Csv => {
            let header = ["name", "passed", "seconds", "detail"].map(String::from);
            let rows = outcomes.iter().map(|o| {
                [
                    o.name.to_string(),
                    o.passed.to_string(),
                    format!("{:.3}", o.seconds),
                    o.detail.clone(),
                ]
            });
            output::csv(&header, rows)?
        }
        Format::Json => output::json(&json!({
            "quick": args.quick,
            "passed": passed,
            "checks": outcomes,
        }))?,
    };
    output::emit(args.out.output.as_deref(), &bytes)?;

    let failing: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect();
    if !failing.is_empty() {
        eprintln!("failing checks: {}", failing.join(", "));
    }
    Ok(passed)
}

fn phase_json(phase: &Phase) -> Value {
    match phase {
        Phase::Level {
            index,
            arrivals,
            n_current,
            n_next,
            factor,
        } => json!({
            "kind": "level",
            "index": index,
            "arrivals": [arrivals.start, arrivals.end],
            "n_current": n_current,
            "n_next": n_next,
            "factor": factor.to_string(),
        }),
        Phase::Triangle { step, arrival } => json!({ "kind": "triangle", "step": step, "arrival": arrival }),
        Phase::Final => json!({ "kind": "final" }),
    }
}

fn phase_row(phase: &Phase) -> [String; 7] {
    match phase {
        Phase::Level {
            index,
            arrivals,
            n_current,
            n_next,
            factor,
        } => [
            "level".into(),
            index.to_string(),
            arrivals.start.to_string(),
            arrivals.end.to_string(),
            n_current.to_string(),
            n_next.to_string(),
            factor.to_string(),
        ],
        Phase::Triangle { step, arrival } => [
            "triangle".into(),
            step.to_string(),
            arrival.to_string(),
            (arrival + 1).to_string(),
            String::new(),
            String::new(),
            String::new(),
        ],
        Phase::Final => [
            "final".into(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ],
    }
}

pub fn export(args: &ExportArgs) -> Result<Verdict, CliError> {
    match &args.what {
        ExportCommand::Instance { instance, output } => {
            let params = instance_params(instance)?;
            output::emit(output.as_deref(), &output::json(&InstanceFile::from_params(&params))?)?;
        }
        ExportCommand::Schedule { instance, out } => {
            let params = instance_params(instance)?;
            let schedule = build_schedule(&params).map_err(usage)?;
            let bytes = match out.format {
                Format::Json => output::json(&json!({
                    "sizes": schedule.sizes.sizes,
                    "vertex_count": schedule.vertex_count,
                    "initial": [schedule.initial.start, schedule.initial.end],
                    "phases": schedule.phases.iter().map(phase_json).collect::<Vec<_>>(),
                }))?,
                Format::Csv => {
                    let header =
                        ["phase", "index", "first_id", "end_id", "n_current", "n_next", "factor"].map(String::from);
                    output::csv(&header, schedule.phases.iter().map(phase_row))?
                }
                Format::Text => {
                    let sizes: Vec<String> = schedule.sizes.sizes.iter().map(u64::to_string).collect();
                    let mut text = format!(
                        "sizes         {}\nvertices      {}\nlevel phases  {}\ntriangle      {}\n",
                        sizes.join(","),
                        schedule.vertex_count,
                        schedule.level_phases().count(),
                        schedule.triangle_count()
                    );
                    let rows: Vec<Vec<String>> = schedule.level_phases().map(|p| phase_row(p)[1..].to_vec()).collect();
                    text += &output::table(&["index", "first_id", "end_id", "n_current", "n_next", "factor"], &rows);
                    text.into_bytes()
                }
            };
            output::emit(out.output.as_deref(), &bytes)?;
        }
        ExportCommand::Schemas { dir } => {
            fs::create_dir_all(dir)?;
            for (name, body) in SCHEMAS {
                fs::write(dir.join(name), body)?;
            }
        }
    }
    Ok(true)
}
