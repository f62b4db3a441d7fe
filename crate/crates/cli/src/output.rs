//! Human, JSON and CSV renderings of the command results.

use clap::ValueEnum;
use serde_json::{json, Value};

use robest::cniper::CniperReport;
use robest::data::Dataset;
use robest::family::Model;
use robest::ic::InfluenceCurve;
use robest::mc::McTable;
use robest::onestep::EstimationReport;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Json,
    Csv,
}

/// Pretty JSON of a value; non-finite numbers become `null`.
pub fn render_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory CSV");
    for r in rows {
        w.write_record(r).expect("in-memory CSV");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV")).expect("UTF-8 CSV")
}

/// Shortest round-trip text, in exponent form for very small or large magnitudes.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn fmt_vec(v: &[f64], d: usize) -> String {
    v.iter().map(|x| format!("{x:.d$}")).collect::<Vec<_>>().join(", ")
}

fn table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|j| rows.iter().filter_map(|r| r.get(j)).map(|c| c.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(j, c)| {
                if j == 0 {
                    format!("{c:<w$}", w = widths[j])
                } else {
                    format!("{c:>w$}", w = widths[j])
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

pub fn fit_json(
    family: &Model,
    data: &Dataset,
    eps_lower: f64,
    eps_upper: f64,
    report: &EstimationReport,
) -> Value {
    json!({
        "model": family.name(),
        "parameters": family.param_names(),
        "neighbor": report.neighborhood.short(),
        "data": { "label": data.label(), "n": data.n() },
        "eps": { "lower": eps_lower, "upper": eps_upper },
        "radii": { "lower": report.r_lo, "upper": report.r_up, "r0": report.r0 },
        "start": report.start,
        "estimate": report.estimate,
        "shift": report.shift,
        "multipliers": report.multipliers,
        "risk": report.risk,
        "diagnostics": report.diagnostics,
    })
}

pub fn fit(
    family: &Model,
    data: &Dataset,
    eps_lower: f64,
    eps_upper: f64,
    report: &EstimationReport,
    format: Format,
    d: usize,
) -> String {
    let names = family.param_names();
    match format {
        Format::Json => render_json(&fit_json(family, data, eps_lower, eps_upper, report)),
        Format::Csv => {
            let rows: Vec<Vec<String>> = names
                .iter()
                .enumerate()
                .map(|(j, p)| {
                    vec![
                        p.clone(),
                        num(report.start.theta[j]),
                        num(report.estimate[j]),
                    ]
                })
                .collect();
            csv_text(&["parameter", "start", "estimate"], &rows)
        }
        Format::Human => {
            let mut rows = vec![std::iter::once(String::new()).chain(names.iter().cloned()).collect::<Vec<_>>()];
            let line = |label: String, v: &[f64]| {
                std::iter::once(label)
                    .chain(v.iter().map(|x| format!("{x:.d$}")))
                    .collect::<Vec<_>>()
            };
            rows.push(line(format!("start ({})", report.start.method), &report.start.theta));
            rows.push(line("rmx".into(), &report.estimate));
            format!(
                "{} on the {} neighborhood, data {} (n = {})\n\
                 eps in [{eps_lower}, {eps_upper}], radius in [{:.4}, {:.4}], least favorable radius {:.4}\n\n\
                 {}\nclipping bound b = {:.4}, maximal asymptotic MSE {:.4}{}\n",
                family.name(),
                report.neighborhood,
                data.label(),
                data.n(),
                report.r_lo,
                report.r_up,
                report.r0,
                table(&rows),
                report.multipliers.b,
                report.risk.mse,
                if report.risk.approximate {
                    " (via contamination at twice the radius)"
                } else {
                    ""
                }
            )
        }
    }
}

/// CSV of `x, ψ₁(x), …, ψ_k(x), w(x)` with the multipliers in `#` comments.
pub fn ic_grid(ic: &InfluenceCurve, points: &[f64]) -> Result<String, CliError> {
    let family = ic.family();
    let k = ic.dim();
    let a_mat: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| ic.a_mat[(i, j)]).collect()).collect();
    let mut out = format!(
        "# model={} theta={} neighbor={} radius={}\n# A={:?} a={:?} b={} c={}\n",
        family.name(),
        ic.theta().iter().map(|&t| num(t)).collect::<Vec<_>>().join(","),
        ic.neighborhood,
        num(ic.radius),
        a_mat,
        ic.a().iter().copied().collect::<Vec<_>>(),
        num(ic.b),
        ic.c.map_or("none".to_string(), num),
    );
    let mut header = vec!["x".to_string()];
    header.extend(family.param_names().iter().map(|p| format!("psi_{p}")));
    header.push("weight".into());
    let mut rows = Vec::with_capacity(points.len());
    for &x in points {
        let psi = ic.eval(x)?;
        let mut row = vec![num(x)];
        row.extend(psi.iter().map(|&p| num(p)));
        row.push(num(ic.weight(x)));
        rows.push(row);
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.push_str(&csv_text(&header, &rows));
    Ok(out)
}

fn bound(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.2}")
    }
}

pub fn cniper(family: &Model, size: f64, n: u64, report: &CniperReport, format: Format) -> String {
    let rounded = &report.rounded;
    match format {
        Format::Json => render_json(&json!({
            "model": family.name(),
            "size": size,
            "n": n,
            "report": report,
        })),
        Format::Csv => {
            let opt = |v: Option<f64>| v.map_or(String::new(), num);
            csv_text(
                &[
                    "lower_point",
                    "upper_point",
                    "prob_ideal",
                    "lower_rounded",
                    "upper_rounded",
                    "prob_ideal_rounded",
                    "radius",
                    "tr_a",
                    "tr_i_inv",
                ],
                &[vec![
                    opt(report.lower_point),
                    opt(report.upper_point),
                    num(report.prob_ideal),
                    opt(rounded.lower_point),
                    opt(rounded.upper_point),
                    num(rounded.prob_ideal),
                    num(report.radius),
                    num(report.tr_a),
                    num(report.tr_i_inv),
                ]],
            )
        }
        Format::Human => {
            let mut s = format!(
                "{} at theta = {}, s = {size}, n = {n}, radius {:.4}\n",
                family.name(),
                fmt_vec(&report.theta, 4),
                report.radius
            );
            if let Some(kind) = report.degenerate {
                s.push_str(&format!(
                    "no cniper points: {}\nideal probability of the region: {:.2}%\n",
                    match kind {
                        robest::cniper::CniperDegeneracy::WholeSupport => "the whole support is in the region",
                        robest::cniper::CniperDegeneracy::Empty => "the region is empty",
                    },
                    100.0 * report.prob_ideal
                ));
                return s;
            }
            let (dom_lo, dom_hi) = family.extension_domain();
            let pts: Vec<String> = [rounded.lower_point, rounded.upper_point]
                .into_iter()
                .flatten()
                .map(|x| format!("{x:.2}"))
                .collect();
            let parts: Vec<String> = rounded
                .lower_point
                .map(|a| format!("({}, {})", bound(dom_lo), bound(a)))
                .into_iter()
                .chain(rounded.upper_point.map(|a| format!("({}, {})", bound(a), bound(dom_hi))))
                .collect();
            s.push_str(&format!(
                "cniper points: {}\nregion: {}\nideal probability of the region: {:.2}%\n",
                pts.join(", "),
                parts.join(" U "),
                100.0 * rounded.prob_ideal
            ));
            let exact: Vec<String> = [report.lower_point, report.upper_point]
                .into_iter()
                .flatten()
                .map(|x| format!("{x:.6}"))
                .collect();
            s.push_str(&format!(
                "unrounded points {} (ideal probability {:.3}%), tr A = {:.4}, tr I^-1 = {:.4}\n",
                exact.join(", "),
                100.0 * report.prob_ideal,
                report.tr_a,
                report.tr_i_inv
            ));
            s
        }
    }
}

pub fn simulation(family: &Model, table_: &McTable, format: Format) -> String {
    match format {
        Format::Json => render_json(&json!({ "model": family.name(), "table": table_ })),
        Format::Csv => {
            let rows: Vec<Vec<String>> = table_
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.label.clone(),
                        num(r.n_mse),
                        num(r.std_error),
                        r.successes.to_string(),
                        r.failures.to_string(),
                        r.shift_violations.to_string(),
                    ]
                })
                .collect();
            csv_text(
                &["estimator", "n_mse", "std_error", "successes", "failures", "shift_violations"],
                &rows,
            )
        }
        Format::Human => {
            let mut rows = vec![vec![
                "estimator".to_string(),
                "n*MSE".into(),
                "std.err".into(),
                "failures".into(),
                "shift > b".into(),
            ]];
            for r in &table_.rows {
                rows.push(vec![
                    r.label.clone(),
                    format!("{:.4}", r.n_mse),
                    format!("{:.4}", r.std_error),
                    r.failures.to_string(),
                    r.shift_violations.to_string(),
                ]);
            }
            let flagged: Vec<&str> = table_
                .rows
                .iter()
                .filter(|r| r.has_failures())
                .map(|r| r.label.as_str())
                .collect();
            let mut s = format!(
                "{}: n = {}, s = {}, {} replications, seed {}\n\n{}",
                family.name(),
                table_.n,
                table_.s,
                table_.reps,
                table_.seed,
                table(&rows)
            );
            if !flagged.is_empty() {
                s.push_str(&format!(
                    "\nfailed replications are excluded from the mean for: {}\n",
                    flagged.join(", ")
                ));
            }
            s
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_reemission_is_identical() {
        let v = json!({ "b": 1.0 / 3.0, "a": [f64::INFINITY, -0.0, 1e-300], "c": { "z": null } });
        let text = render_json(&v);
        let again: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(render_json(&again), text);
        assert!(text.contains("null"));
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.0, -4.864945907060162e-16, 3.385, 1e20, 123.456, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(num(-4.864945907060162e-16), "-4.864945907060162e-16");
    }

    #[test]
    fn aligned_table() {
        let t = table(&[vec!["a".into(), "1.00".into()], vec!["long".into(), "10.00".into()]]);
        assert_eq!(t, "a      1.00\nlong  10.00\n");
    }
}
