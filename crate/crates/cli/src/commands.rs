//! The four subcommands. Each returns `Ok(true)` on pass, `Ok(false)` on a
//! verification failure.

use crate::config::{Fault, Format, RunConfig};
use crate::error::CliError;
use crate::output::{num, write_campaign_csv, write_csv, write_json, CampaignRow};
use disk_billiard::compat::{check_all, verify_identities, Condition, VerifyOptions, IDENTITY_NAMES};
use disk_billiard::deriv::{fd_flow_jacobian, flow_jacobian};
use disk_billiard::flow::{bounce_angle, bounce_sequence, chord_time, exit_time, flow_map_capped};
use disk_billiard::geom::Vec2;
use disk_billiard::sample::{rng, sample_gamma_minus_with, sample_interior_with};
use disk_billiard::transport::{builtin, measure, BoundReport, InitialData, Polynomial, Provenance};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

pub const SCHEMA_TRACE: &str = "billiard.trace/1";
pub const SCHEMA_CHECK: &str = "billiard.check/1";
pub const SCHEMA_VERIFY: &str = "billiard.verify/1";
pub const SCHEMA_BOUNDS: &str = "billiard.bounds/1";

fn load_data(cfg: &RunConfig) -> Result<Polynomial, CliError> {
    match &cfg.poly_spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let p = Polynomial::from_json(&text)?;
            Ok(match p.name.clone() {
                Some(_) => p,
                None => p.named(&path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()),
            })
        }
        None => Ok(builtin(&cfg.family)?),
    }
}

#[derive(Serialize)]
struct TraceRow {
    s: f64,
    x: [f64; 2],
    v: [f64; 2],
    /// Number of bounces in `(s, t]`.
    segment: usize,
    event: &'static str,
}

#[derive(Serialize)]
struct TraceDoc {
    schema: &'static str,
    t: f64,
    x: [f64; 2],
    v: [f64; 2],
    bounces: usize,
    rows: Vec<TraceRow>,
}

pub fn trace(cfg: &RunConfig, x: Vec2, v: Vec2) -> Result<bool, CliError> {
    let t = match cfg.t.as_slice() {
        [t] => *t,
        [] => return Err(CliError::Config("trace needs one --t".into())),
        _ => return Err(CliError::Config("trace takes a single --t".into())),
    };
    let st = flow_map_capped(t, x, v, cfg.max_bounces)?;
    let events = bounce_sequence(t, x, v, cfg.max_bounces)?;
    let mut rows = vec![TraceRow { s: 0.0, x: [st.x0.x, st.x0.y], v: [st.v0.x, st.v0.y], segment: st.l, event: "end" }];
    for e in events.iter().rev() {
        let p = e.x_k.point();
        rows.push(TraceRow { s: e.t_k, x: [p.x, p.y], v: [e.v_k.x, e.v_k.y], segment: e.k, event: "bounce" });
    }
    rows.push(TraceRow { s: t, x: [x.x, x.y], v: [v.x, v.y], segment: 0, event: "start" });
    match cfg.format {
        Format::Csv => write_csv(
            cfg.out.as_deref(),
            &["s", "x1", "x2", "v1", "v2", "segment", "event"],
            rows.iter().map(|r| {
                vec![num(r.s), num(r.x[0]), num(r.x[1]), num(r.v[0]), num(r.v[1]), r.segment.to_string(), r.event.to_string()]
            }),
        )?,
        Format::Json => write_json(
            cfg.out.as_deref(),
            &TraceDoc { schema: SCHEMA_TRACE, t, x: [x.x, x.y], v: [v.x, v.y], bounces: st.l, rows },
        )?,
    }
    Ok(true)
}

#[derive(Debug, Clone, Serialize)]
struct ConditionSummary {
    condition: &'static str,
    max_residual: f64,
    max_relative: f64,
    worst_sample: usize,
    passed: bool,
}

fn summarize(rows: &[CampaignRow], names: &[&'static str], pass: impl Fn(&str, f64) -> bool) -> Vec<ConditionSummary> {
    names
        .iter()
        .map(|&name| {
            let mut s = ConditionSummary { condition: name, max_residual: 0.0, max_relative: 0.0, worst_sample: 0, passed: true };
            for r in rows.iter().filter(|r| r.condition == name) {
                if r.residual > s.max_residual || r.residual.is_nan() {
                    s.max_residual = r.residual;
                    s.worst_sample = r.sample_index;
                }
                s.max_relative = s.max_relative.max(r.relative);
            }
            s.passed = pass(name, s.max_residual);
            s
        })
        .collect()
}

fn print_table(title: &str, rows: &[ConditionSummary], value: &str) {
    eprintln!("{title}");
    eprintln!("  {:<22} {:>24} {:>8}", "name", value, "result");
    for s in rows {
        eprintln!("  {:<22} {:>24} {:>8}", s.condition, num(s.max_residual), if s.passed { "pass" } else { "FAIL" });
    }
}

#[derive(Serialize)]
struct CheckRowDoc {
    sample_index: usize,
    x: [f64; 2],
    v: [f64; 2],
    condition: String,
    residual: f64,
    relative_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    printed_residual: Option<f64>,
}

#[derive(Serialize)]
struct CheckDoc {
    schema: &'static str,
    family: String,
    seed: u64,
    count: usize,
    margin: f64,
    speed_range: [f64; 2],
    threshold: f64,
    provenance: BTreeMap<&'static str, Provenance>,
    passed: bool,
    summary: Vec<ConditionSummary>,
    rows: Vec<CheckRowDoc>,
}

pub fn check(cfg: &RunConfig) -> Result<bool, CliError> {
    let data = load_data(cfg)?;
    let points = sample_gamma_minus_with(&mut rng(cfg.seed), cfg.count, cfg.speed_range(), cfg.margin);
    let reports = points
        .par_iter()
        .map(|g| check_all(&data, g))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::with_capacity(reports.len() * Condition::ALL.len());
    let mut extra = Vec::with_capacity(rows.capacity());
    for (i, reps) in reports.iter().enumerate() {
        for r in reps {
            rows.push(CampaignRow {
                sample_index: i,
                x: r.x,
                v: r.v,
                condition: r.condition.as_str().to_string(),
                residual: r.residual,
                relative: r.relative,
            });
            extra.push(r.printed_residual);
        }
    }
    let names: Vec<&'static str> = Condition::ALL.iter().map(|c| c.as_str()).collect();
    let summary = summarize(&rows, &names, |_, m| m <= cfg.threshold);
    let passed = summary.iter().all(|s| s.passed);
    print_table(&format!("check {} ({} samples, threshold {:e})", data.name(), points.len(), cfg.threshold), &summary, "max residual");
    eprintln!("verdict: {}", if passed { "compatible" } else { "incompatible" });
    match cfg.format {
        Format::Csv => write_campaign_csv(cfg.out.as_deref(), &rows)?,
        Format::Json => {
            let provenance = [("first_order", data.provenance(1)), ("second_order", data.provenance(2))].into_iter().collect();
            let doc = CheckDoc {
                schema: SCHEMA_CHECK,
                family: data.name(),
                seed: cfg.seed,
                count: cfg.count,
                margin: cfg.margin,
                speed_range: [cfg.speed_min, cfg.speed_max],
                threshold: cfg.threshold,
                provenance,
                passed,
                summary,
                rows: rows
                    .into_iter()
                    .zip(extra)
                    .map(|(r, p)| CheckRowDoc {
                        sample_index: r.sample_index,
                        x: r.x,
                        v: r.v,
                        condition: r.condition,
                        residual: r.residual,
                        relative_residual: r.relative,
                        printed_residual: p,
                    })
                    .collect(),
            };
            write_json(cfg.out.as_deref(), &doc)?;
        }
    }
    Ok(passed)
}

/// Tolerance of the exact identities, relative.
pub const IDENTITY_TOL: f64 = 1e-11;
/// Analytic flow Jacobian against central differences, relative.
pub const JACOBIAN_FD_TOL: f64 = 1e-5;
/// `|det J − 1|`.
pub const DETERMINANT_TOL: f64 = 1e-8;

#[derive(Serialize)]
struct VerifyDoc {
    schema: &'static str,
    seed: u64,
    count: usize,
    margin: f64,
    speed_range: [f64; 2],
    fault: Option<&'static str>,
    passed: bool,
    checks: Vec<VerifyEntry>,
}

#[derive(Serialize)]
struct VerifyEntry {
    name: &'static str,
    max_relative: f64,
    tolerance: f64,
    worst_sample: usize,
    passed: bool,
}

fn tolerance(name: &str) -> f64 {
    match name {
        "flow_jacobian_fd" => JACOBIAN_FD_TOL,
        "flow_jacobian_det" => DETERMINANT_TOL,
        _ => IDENTITY_TOL,
    }
}

/// A time in the interior of the cell after `l` bounces.
fn time_in_cell(x: Vec2, v: Vec2, l: usize, frac: f64) -> disk_billiard::Result<f64> {
    let tb = exit_time(x, v)?;
    if l == 0 {
        return Ok(frac * tb);
    }
    let (th, _) = bounce_angle(x, v)?;
    Ok(tb + (l - 1) as f64 * chord_time(th, v.norm()) + frac * chord_time(th, v.norm()))
}

pub fn verify(cfg: &RunConfig, fault: Option<Fault>) -> Result<bool, CliError> {
    let opts = VerifyOptions { sign_flip: fault == Some(Fault::SignFlip) };
    let mut r = rng(cfg.seed);
    let boundary = sample_gamma_minus_with(&mut r, cfg.count, cfg.speed_range(), cfg.margin);
    let interior = sample_interior_with(&mut r, cfg.count, cfg.speed_range(), cfg.margin);
    let cells: Vec<(usize, f64)> = (0..cfg.count).map(|i| (i % 13, r.random_range(0.1..0.9))).collect();

    let ident = boundary
        .par_iter()
        .map(|g| verify_identities(g, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let deriv = interior
        .par_iter()
        .zip(cells.par_iter())
        .map(|(p, &(l, frac))| -> disk_billiard::Result<(f64, f64, f64)> {
            let t = time_in_cell(p.x, p.v, l, frac)?;
            let an = flow_jacobian(t, p.x, p.v)?;
            let fd = fd_flow_jacobian(t, p.x, p.v)?;
            let full = an.full();
            let rel = (full - fd).amax() / full.amax().max(1.0);
            Ok((t, rel, (an.determinant() - 1.0).abs()))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::new();
    for (i, (g, rep)) in boundary.iter().zip(&ident).enumerate() {
        let (x, v) = (g.x.point(), g.v);
        for c in &rep.checks {
            rows.push(CampaignRow { sample_index: i, x: [x.x, x.y], v: [v.x, v.y], condition: c.name.into(), residual: c.relative, relative: c.relative });
        }
    }
    for (i, (p, (_, rel, det))) in interior.iter().zip(&deriv).enumerate() {
        for (name, val) in [("flow_jacobian_fd", *rel), ("flow_jacobian_det", *det)] {
            rows.push(CampaignRow { sample_index: i, x: [p.x.x, p.x.y], v: [p.v.x, p.v.y], condition: name.into(), residual: val, relative: val });
        }
    }
    let mut names: Vec<&'static str> = IDENTITY_NAMES.to_vec();
    names.extend(["flow_jacobian_fd", "flow_jacobian_det"]);
    let summary = summarize(&rows, &names, |n, m| m <= tolerance(n));
    let passed = summary.iter().all(|s| s.passed);
    print_table(&format!("verify ({} boundary + {} interior samples)", boundary.len(), interior.len()), &summary, "max relative defect");
    match cfg.format {
        Format::Csv => write_campaign_csv(cfg.out.as_deref(), &rows)?,
        Format::Json => write_json(
            cfg.out.as_deref(),
            &VerifyDoc {
                schema: SCHEMA_VERIFY,
                seed: cfg.seed,
                count: cfg.count,
                margin: cfg.margin,
                speed_range: [cfg.speed_min, cfg.speed_max],
                fault: fault.map(|_| "sign_flip"),
                passed,
                checks: summary
                    .iter()
                    .map(|s| VerifyEntry {
                        name: s.condition,
                        max_relative: s.max_residual,
                        tolerance: tolerance(s.condition),
                        worst_sample: s.worst_sample,
                        passed: s.passed,
                    })
                    .collect(),
            },
        )?,
    }
    Ok(passed)
}

#[derive(Serialize)]
struct BoundsDoc {
    schema: &'static str,
    family: String,
    seed: u64,
    count: usize,
    margin: f64,
    speed_range: [f64; 2],
    t: Vec<f64>,
    passed: bool,
    report: BoundReport,
}

pub const DEFAULT_BOUND_TIMES: [f64; 3] = [0.5, 2.0, 8.0];

pub fn bounds(cfg: &RunConfig) -> Result<bool, CliError> {
    let data = load_data(cfg)?;
    let times = cfg.times_or(&DEFAULT_BOUND_TIMES);
    let points = sample_interior_with(&mut rng(cfg.seed), cfg.count, cfg.speed_range(), cfg.margin);
    let jobs: Vec<(usize, f64)> = (0..points.len()).flat_map(|i| times.iter().map(move |&t| (i, t))).collect();
    let measured = jobs
        .par_iter()
        .map(|&(i, t)| measure(&data as &dyn InitialData, i, &points[i], t, cfg.order))
        .collect::<Result<Vec<_>, _>>()?;
    let report = BoundReport::from_samples(cfg.order, &times, &measured)?;
    let passed = report.fitted_constant.is_finite() && report.stable && report.evaluated > 0;
    eprintln!(
        "bounds {} order {}: C = {} (halves {} / {}), {} evaluated, {} skipped: {}",
        data.name(),
        cfg.order,
        num(report.fitted_constant),
        num(report.half_constants[0]),
        num(report.half_constants[1]),
        report.evaluated,
        report.skipped,
        if passed { "stable" } else { "UNSTABLE" }
    );
    match cfg.format {
        Format::Csv => {
            let rows: Vec<CampaignRow> = measured
                .iter()
                .flatten()
                .map(|s| CampaignRow {
                    sample_index: s.index,
                    x: s.x,
                    v: s.v,
                    condition: format!("BOUND{}_T{}", cfg.order, s.t),
                    residual: s.measured,
                    relative: s.ratio,
                })
                .collect();
            write_campaign_csv(cfg.out.as_deref(), &rows)?
        }
        Format::Json => write_json(
            cfg.out.as_deref(),
            &BoundsDoc {
                schema: SCHEMA_BOUNDS,
                family: data.name(),
                seed: cfg.seed,
                count: cfg.count,
                margin: cfg.margin,
                speed_range: [cfg.speed_min, cfg.speed_max],
                t: times,
                passed,
                report,
            },
        )?,
    }
    Ok(passed)
}
