//! Command-line frontend: builds models from expressions, runs the
//! certification, estimation, spectral, transport, and consistency-check
//! pipelines, and renders one stable report document per invocation.
//!
//! Exit codes: 0 on success, 1 when any reported check fails, 2 for
//! invalid input (expression syntax, parameter ranges, unreadable files).

mod expr;
mod report;

use clap::{Parser, Subcommand};
use entroric::markov::{write_edge_list, Density, MarkovTriple};
use entroric::models::{self, Model};
use entroric::{curvature, estimator, transport};
use expr::{build_model, parse_model_expr};
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use report::{json_float, Format, Report};
use serde_json::{json, Value};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "entroric",
    version,
    about = "Curvature bounds, spectral gaps, and transport distances for reversible Markov chains"
)]
struct Cli {
    /// Output format for the report document.
    #[arg(long, global = true, value_enum, default_value = "text")]
    format: Format,
    /// Seed for every randomized component (estimator starts, sampled
    /// endpoints, sampled check inputs).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Structural summary of a model: sizes, regularity, motif counts.
    Info {
        /// Model expression: bl(n,k) | rt(n) | complete(n) | product(a,b) | file:PATH
        model: String,
        /// Write the model as an edge-list file (readable back via file:PATH).
        #[arg(long)]
        export: Option<String>,
    },
    /// Exact certified curvature lower bound with its assembly breakdown.
    Certify { model: String },
    /// Numerical minimization of the form ratio (upper estimate with witness).
    Estimate {
        model: String,
        #[arg(long, default_value_t = 32)]
        starts: usize,
        #[arg(long, default_value_t = 150)]
        iterations: usize,
    },
    /// Spectral gap of the generator.
    Gap { model: String },
    /// Full report: certificate, estimate, gap, decay-constant sandwich,
    /// and sampled entropy-inequality checks.
    Inequalities {
        model: String,
        #[arg(long, default_value_t = 32)]
        starts: usize,
        #[arg(long, default_value_t = 150)]
        iterations: usize,
    },
    /// Upper bound for the transport distance between two densities, with
    /// an entropy-convexity consistency report when a curvature value is
    /// available.
    Transport {
        model: String,
        /// Comma-separated density values (normalized internally); sampled
        /// from the seed when omitted.
        #[arg(long)]
        rho0: Option<String>,
        #[arg(long)]
        rho1: Option<String>,
        /// Time intervals of the first solve.
        #[arg(long, default_value_t = 64)]
        grid: usize,
        /// Grid-doubling passes after the first solve.
        #[arg(long, default_value_t = 2)]
        refinements: usize,
        #[arg(long, default_value_t = 400)]
        iterations: usize,
        /// Curvature value for the convexity report (defaults to the
        /// certified bound when one exists).
        #[arg(long)]
        kappa: Option<f64>,
    },
    /// Sweep of the slow-decay density family on the three-symbol
    /// transposition walk: the off-diagonal-to-metric form ratio table.
    Counterexample {
        /// Comma-separated density parameters in (0, 1).
        #[arg(long, default_value = "0.1,0.01,0.001,0.0001")]
        eps: String,
    },
    /// Run the full invariant suite against one model.
    Verify {
        model: String,
        #[arg(long, default_value_t = 16)]
        starts: usize,
        #[arg(long, default_value_t = 120)]
        iterations: usize,
    },
}

/// Invalid input (exit 2), as opposed to a failed check (exit 1).
struct InputError(String);

impl<E: std::fmt::Display> From<E> for InputError {
    fn from(e: E) -> Self {
        InputError(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let format = cli.format;
    match run(cli) {
        Ok((doc, any_failed)) => {
            print!("{}", doc.render(format));
            if any_failed {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(InputError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(Report, bool), InputError> {
    let mut doc = Report::new();
    doc.push_str("tool", "entroric");
    doc.push_str("version", env!("CARGO_PKG_VERSION"));
    let seed = cli.seed;
    match cli.command {
        Command::Info { model, export } => {
            doc.push_str("command", "info");
            doc.push_int("seed", seed as usize);
            let m = parse_and_build(&model)?;
            model_section(&mut doc, &m);
            doc.push_float("spectral_gap", m.triple().spectral_gap());
            if let Some(path) = export {
                std::fs::write(&path, write_edge_list(m.triple()))
                    .map_err(|e| InputError(format!("cannot write {path}: {e}")))?;
                eprintln!("exported edge list to {path}");
            }
            Ok((doc, false))
        }
        Command::Certify { model } => {
            doc.push_str("command", "certify");
            doc.push_int("seed", seed as usize);
            doc.push_str("expression", &model);
            let m = parse_and_build(&model)?;
            model_section(&mut doc, &m);
            match certificate_for(&m) {
                Ok(cert) => {
                    certificate_section(&mut doc, &cert);
                    Ok((doc, false))
                }
                Err(e) => {
                    doc.push_null("kappa", &format!("not certified ({e})"));
                    doc.push_checks(
                        "checks",
                        &[("certificate-coverage".to_string(), false, f64::NAN)],
                    );
                    Ok((doc, true))
                }
            }
        }
        Command::Estimate { model, starts, iterations } => {
            doc.push_str("command", "estimate");
            doc.push_int("seed", seed as usize);
            doc.push_str("expression", &model);
            let m = parse_and_build(&model)?;
            model_section(&mut doc, &m);
            let options = estimator::EstimateOptions {
                seed,
                starts,
                max_iterations: iterations,
                ..Default::default()
            };
            let est = estimator::estimate_kappa(m.triple(), &options)?;
            doc.push_float("kappa_estimate", est.kappa);
            doc.push_float("gradient_norm", est.gradient_norm);
            doc.push_int("starts", est.starts);
            doc.push_bool("converged", est.converged);
            doc.push_float_list("witness_rho", &est.rho);
            doc.push_float_list("witness_psi", &est.psi);
            Ok((doc, false))
        }
        Command::Gap { model } => {
            doc.push_str("command", "gap");
            doc.push_int("seed", seed as usize);
            doc.push_str("expression", &model);
            let m = parse_and_build(&model)?;
            model_section(&mut doc, &m);
            doc.push_float("spectral_gap", m.triple().spectral_gap());
            Ok((doc, false))
        }
        Command::Inequalities { model, starts, iterations } => {
            doc.push_str("command", "inequalities");
            doc.push_int("seed", seed as usize);
            doc.push_str("expression", &model);
            let m = parse_and_build(&model)?;
            model_section(&mut doc, &m);
            let options = estimator::EstimateOptions {
                seed,
                starts,
                max_iterations: iterations,
                ..Default::default()
            };
            let cert = certificate_for(&m);
            let report = estimator::inequality_report(&m, cert.as_ref().ok(), &options)?;
            match report.kappa_certified {
                Some(k) => doc.push_rational("kappa_certified", k),
                None => doc.push_null(
                    "kappa_certified",
                    &format!(
                        "unavailable ({})",
                        cert.err().map(|e| e.to_string()).unwrap_or_default()
                    ),
                ),
            }
            doc.push_float("kappa_estimate", report.kappa_estimate);
            doc.push_float("spectral_gap", report.lambda);
            match report.alpha_interval {
                Some((lo, hi)) => {
                    doc.push_float("alpha_lower", lo);
                    doc.push_float("alpha_upper", hi);
                }
                None => {
                    doc.push_null("alpha_lower", "unavailable without a certificate");
                    doc.push_null("alpha_upper", "unavailable without a certificate");
                }
            }
            for (field, source) in &report.provenance {
                doc.push(
                    &format!("provenance_{field}"),
                    Value::String(source.clone()),
                    format!("provenance {field}: {source}"),
                );
            }
            let rows = outcome_rows(&report.checks);
            let any_failed = rows.iter().any(|(_, passed, _)| !passed);
            doc.push_checks("checks", &rows);
            Ok((doc, any_failed))
        }
        Command::Transport { model, rho0, rho1, grid, refinements, iterations, kappa } => {
            doc.push_str("command", "transport");
            doc.push_int("seed", seed as usize);
            doc.push_str("expression", &model);
            let m = parse_and_build(&model)?;
            model_section(&mut doc, &m);
            let t = m.triple();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d0 = endpoint(t, rho0.as_deref(), &mut rng)?;
            let d1 = endpoint(t, rho1.as_deref(), &mut rng)?;
            let options = transport::TransportOptions {
                initial_grid: grid,
                refinements,
                max_outer_iterations: iterations,
            };
            let solved = transport::distance_upper(t, &d0, &d1, &options)?;
            doc.push_float_list("rho0", d0.values());
            doc.push_float_list("rho1", d1.values());
            doc.push_float("w_upper", solved.w_upper);
            doc.push_float("action", solved.action);
            doc.push_float("continuity_residual", solved.residual);
            doc.push(
                "grids",
                Value::Array(solved.grids.iter().map(|&g| json!(g)).collect()),
                format!(
                    "grids: {}",
                    solved
                        .grids
                        .iter()
                        .map(|g| g.to_string())
                        .collect::<Vec<_>>()
                        .join(" ")
                ),
            );
            let kappa_used = match kappa {
                Some(k) => Some((k, "flag")),
                None => certificate_for(&m)
                    .ok()
                    .and_then(|c| c.kappa.to_f64())
                    .map(|k| (k, "certificate")),
            };
            let mut any_failed = false;
            match kappa_used {
                Some((k, source)) => {
                    let conv = transport::convexity_from(t, &solved, k);
                    doc.push_float("convexity_kappa", k);
                    doc.push_str("convexity_kappa_source", source);
                    doc.push_float("entropy_start", conv.entropy_start);
                    doc.push_float("entropy_end", conv.entropy_end);
                    doc.push_float("worst_slack", conv.worst_slack);
                    doc.push_float("slack_tolerance", conv.tolerance);
                    any_failed = !conv.consistent;
                    doc.push_checks(
                        "checks",
                        &[(
                            "entropy-convexity-consistent".to_string(),
                            conv.consistent,
                            conv.worst_slack + conv.tolerance,
                        )],
                    );
                }
                None => {
                    doc.push_null("convexity_kappa", "no curvature value available");
                }
            }
            Ok((doc, any_failed))
        }
        Command::Counterexample { eps } => {
            doc.push_str("command", "counterexample");
            doc.push_int("seed", seed as usize);
            let mut values: Vec<f64> = Vec::new();
            for part in eps.split(',') {
                let v: f64 = part
                    .trim()
                    .parse()
                    .map_err(|e| InputError(format!("bad eps value {part:?}: {e}")))?;
                values.push(v);
            }
            values.sort_by(|a, b| b.partial_cmp(a).expect("finite eps"));
            values.dedup();
            if values.len() < 2 {
                return Err(InputError("need at least two distinct eps values".into()));
            }
            let mut rows = Vec::new();
            let mut ratios = Vec::new();
            for &e in &values {
                let row = estimator::s3_counterexample(e)?;
                ratios.push(row.ratio);
                rows.push(vec![
                    json_float(row.eps),
                    json_float(row.a),
                    json_float(row.b_off),
                    json_float(row.ratio),
                ]);
            }
            doc.push_table("sweep", &["eps", "metric_form", "off_diagonal", "ratio"], &rows);
            let worst = ratios
                .windows(2)
                .map(|w| w[0] - w[1])
                .fold(f64::INFINITY, f64::min);
            let passed = worst > 0.0 && ratios.iter().all(|&r| r >= -1e-12);
            doc.push_checks(
                "checks",
                &[("ratio-strictly-decreasing".to_string(), passed, worst)],
            );
            Ok((doc, !passed))
        }
        Command::Verify { model, starts, iterations } => {
            doc.push_str("command", "verify");
            doc.push_int("seed", seed as usize);
            doc.push_str("expression", &model);
            let m = parse_and_build(&model)?;
            model_section(&mut doc, &m);
            let rows = verify_suite(&mut doc, &m, seed, starts, iterations)?;
            let failed = rows.iter().filter(|(_, passed, _)| !passed).count();
            doc.push_checks("checks", &rows);
            doc.push_int("checks_run", rows.len());
            doc.push_int("checks_failed", failed);
            Ok((doc, failed > 0))
        }
    }
}

fn parse_and_build(text: &str) -> Result<Model, InputError> {
    let expr = parse_model_expr(text).map_err(|e| InputError(format!("in {text:?} {e}")))?;
    build_model(&expr).map_err(InputError)
}

fn model_section(doc: &mut Report, m: &Model) {
    let t = m.triple();
    doc.push_int("states", t.n());
    doc.push_int("undirected_edges", t.edges().len());
    let degrees: Vec<usize> = (0..t.n()).map(|x| t.degree(x)).collect();
    let d0 = degrees[0];
    if degrees.iter().all(|&d| d == d0) {
        doc.push_int("degree", d0);
    } else {
        doc.push_null("degree", "irregular");
    }
    match t.regular_uniform() {
        Some((_, q)) => doc.push_float("uniform_rate", q),
        None => doc.push_null("uniform_rate", "none (rates or weights vary)"),
    }
    doc.push_int("triangles", models::enumerate_triangles(t).len());
    let squares = models::enumerate_squares(t);
    let chordless = squares
        .iter()
        .filter(|sq| models::is_chordless_square(t, sq))
        .count();
    doc.push_int("squares", squares.len());
    doc.push_int("chordless_squares", chordless);
}

fn certificate_for(m: &Model) -> Result<estimator::Certificate, estimator::EstimateError> {
    let coverage = estimator::verify_coverage(m.triple())?;
    estimator::certify_generic(m, &coverage)
}

fn certificate_section(doc: &mut Report, cert: &estimator::Certificate) {
    doc.push_rational("kappa", cert.kappa);
    doc.push_rational("on_diagonal", cert.on_diagonal);
    doc.push_rational("triangle", cert.triangle);
    doc.push_rational("square", cert.square);
    doc.push_rational("rate", cert.rate);
    doc.push_int("coverage_degree", cert.coverage.degree);
    doc.push_int("coverage_triangles_per_edge", cert.coverage.triangles_per_edge);
    let mults: Vec<String> = cert
        .coverage
        .square_multiplicities
        .iter()
        .map(|m| m.to_string())
        .collect();
    doc.push(
        "coverage_square_multiplicities",
        Value::Array(
            cert.coverage
                .square_multiplicities
                .iter()
                .map(|&m| json!(m))
                .collect(),
        ),
        format!("coverage_square_multiplicities: {}", mults.join(",")),
    );
    doc.push_int("coverage_wedges_checked", cert.coverage.wedges_checked);
    doc.push_bool("coverage_enumerated", cert.coverage.enumerated);
}

fn outcome_rows(checks: &[estimator::CheckOutcome]) -> Vec<(String, bool, f64)> {
    checks
        .iter()
        .map(|c| (c.name.clone(), c.passed, c.residual))
        .collect()
}

fn endpoint(
    t: &MarkovTriple,
    flag: Option<&str>,
    rng: &mut ChaCha8Rng,
) -> Result<Density, InputError> {
    let raw: Vec<f64> = match flag {
        Some(text) => {
            let mut v = Vec::new();
            for part in text.split(',') {
                v.push(
                    part.trim()
                        .parse()
                        .map_err(|e| InputError(format!("bad density value {part:?}: {e}")))?,
                );
            }
            v
        }
        None => (0..t.n()).map(|_| rng.gen_range(0.2..2.0)).collect(),
    };
    Ok(t.density_normalized(raw)?)
}

/// The invariant suite behind `verify`: structural residuals, sampled form
/// identities and inequalities, the certificate/estimate/gap chain with
/// entropy checks, and small transport self-tests where feasible.
fn verify_suite(
    doc: &mut Report,
    m: &Model,
    seed: u64,
    starts: usize,
    iterations: usize,
) -> Result<Vec<(String, bool, f64)>, InputError> {
    let t = m.triple();
    let n = t.n();
    let mut rows: Vec<(String, bool, f64)> = Vec::new();
    let push = |rows: &mut Vec<(String, bool, f64)>, name: &str, slack: f64| {
        rows.push((name.to_string(), slack >= 0.0, slack));
    };

    // Structural residuals.
    let mass: f64 = t.pi().iter().sum();
    push(&mut rows, "stationary-mass", 1e-12 - (mass - 1.0).abs());
    let mut balance = 0.0_f64;
    for e in t.edges() {
        let f = t.pi()[e.x] * e.rate_xy;
        let b = t.pi()[e.y] * e.rate_yx;
        balance = balance.max((f - b).abs() / f.abs().max(b.abs()).max(1e-300));
    }
    push(&mut rows, "detailed-balance", 1e-12 - balance);
    push(&mut rows, "spectral-gap-positive", t.spectral_gap() - 1e-12);

    // Sampled form identities and the certified inequality.
    let cert = certificate_for(m);
    let kappa_cert = cert.as_ref().ok().and_then(|c| c.kappa.to_f64());
    match &cert {
        Ok(c) => certificate_section(doc, c),
        Err(e) => doc.push_null("kappa", &format!("not certified ({e})")),
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51ce_bab5);
    let mut worst_edge_sum = f64::INFINITY;
    let mut worst_bochner = f64::INFINITY;
    let mut worst_metric = f64::INFINITY;
    for _ in 0..100 {
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..2.0)).collect();
        let rho = t.density_normalized(raw)?.values().to_vec();
        let psi: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = curvature::a_form(t, &rho, &psi)?;
        let b = curvature::b_form_direct(t, &rho, &psi)?;
        let by_edges: f64 = curvature::b_edge_terms(t, &rho, &psi)?
            .iter()
            .map(|term| term.value)
            .sum();
        worst_metric = worst_metric.min(a);
        worst_edge_sum =
            worst_edge_sum.min(1e-10 - (b - by_edges).abs() / b.abs().max(1.0));
        if let Some(k) = kappa_cert {
            worst_bochner = worst_bochner.min(b - k * a + 1e-10);
        }
    }
    push(&mut rows, "metric-form-nonnegative", worst_metric);
    push(&mut rows, "edge-sum-consistency", worst_edge_sum);
    if kappa_cert.is_some() {
        push(&mut rows, "bochner-inequality", worst_bochner);
    }

    // Estimate / gap / entropy chain.
    let options = estimator::EstimateOptions {
        seed,
        starts,
        max_iterations: iterations,
        ..Default::default()
    };
    let report = estimator::inequality_report(m, cert.as_ref().ok(), &options)?;
    doc.push_float("kappa_estimate", report.kappa_estimate);
    doc.push_float("spectral_gap", report.lambda);
    rows.extend(outcome_rows(&report.checks));

    // Transport self-tests on small state spaces.
    if n <= 24 {
        let quick = transport::TransportOptions {
            initial_grid: 16,
            refinements: 0,
            max_outer_iterations: 200,
        };
        let uniform = t.uniform_density();
        let zero = transport::distance_upper(t, &uniform, &uniform, &quick)?;
        push(&mut rows, "transport-zero-distance", 1e-7 - zero.w_upper);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7ea9_0b0d);
        let raw_a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..2.0)).collect();
        let raw_b: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..2.0)).collect();
        let da = t.density_normalized(raw_a)?;
        let db = t.density_normalized(raw_b)?;
        let sym = transport::TransportOptions {
            initial_grid: 32,
            refinements: 0,
            max_outer_iterations: 400,
        };
        let ab = transport::distance_upper(t, &da, &db, &sym)?;
        let ba = transport::distance_upper(t, &db, &da, &sym)?;
        push(
            &mut rows,
            "transport-symmetry",
            1e-4 - (ab.w_upper - ba.w_upper).abs(),
        );
        if let Some(k) = kappa_cert {
            let conv = transport::convexity_from(t, &ab, k);
            push(
                &mut rows,
                "transport-convexity",
                conv.worst_slack + conv.tolerance,
            );
        }
    }
    Ok(rows)
}
