use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Result;

use userdp_core::audit::median;

use crate::run::{group_rows, read_rows, summary_table, Row};

/// Which single parameter separates two sweep points.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Axis {
    N,
    M,
    Eps,
}

fn separating_axis(a: &Row, b: &Row) -> Option<(Axis, f64)> {
    if a.algorithm != b.algorithm || a.d != b.d || a.delta != b.delta || a.kappa != b.kappa {
        return None;
    }
    let diffs = [
        (Axis::N, a.n as f64, b.n as f64),
        (Axis::M, a.m as f64, b.m as f64),
        (Axis::Eps, a.eps, b.eps),
    ];
    let differing: Vec<_> = diffs.iter().filter(|(_, x, y)| x != y).collect();
    match differing.as_slice() {
        [(axis, x, y)] if y > x => Some((*axis, y / x)),
        _ => None,
    }
}

/// Predicted risk ratios for the two terms `(nm)^(-1/2)` and
/// `sqrt(d) / (eps n sqrt(m))` when one parameter grows by `f`.
fn predicted(axis: Axis, f: f64) -> (f64, f64) {
    match axis {
        Axis::N => (f.sqrt(), f),
        Axis::M => (f.sqrt(), f.sqrt()),
        Axis::Eps => (1.0, f),
    }
}

fn axis_name(axis: Axis) -> &'static str {
    match axis {
        Axis::N => "n",
        Axis::M => "m",
        Axis::Eps => "eps",
    }
}

fn axis_value(r: &Row, axis: Axis) -> String {
    match axis {
        Axis::N => r.n.to_string(),
        Axis::M => r.m.to_string(),
        Axis::Eps => r.eps.to_string(),
    }
}

pub fn report_text(rows: &[Row]) -> String {
    if rows.is_empty() {
        return "no data\n".into();
    }
    let mut out = summary_table(rows);
    let groups = group_rows(rows);
    let medians: Vec<(f64, f64)> = groups
        .iter()
        .map(|g| {
            let risks: Vec<f64> = g.iter().map(|r| r.excess_risk).collect();
            let evals: Vec<f64> = g.iter().map(|r| r.grad_evals as f64).collect();
            (median(&risks), median(&evals))
        })
        .collect();

    let mut scaling = String::new();
    for i in 0..groups.len() {
        for j in 0..groups.len() {
            let (a, b) = (groups[i][0], groups[j][0]);
            let Some((axis, f)) = separating_axis(a, b) else {
                continue;
            };
            let (p1, p2) = predicted(axis, f);
            writeln!(
                scaling,
                "{} {} {} -> {} (x{f}): risk ratio {:.3} (predicted {p1:.3} for the (nm)^-1/2 term, {p2:.3} for the sqrt(d)/(eps n sqrt(m)) term); grad_evals ratio {:.3}",
                a.algorithm,
                axis_name(axis),
                axis_value(a, axis),
                axis_value(b, axis),
                medians[i].0 / medians[j].0,
                medians[j].1 / medians[i].1,
            )
            .unwrap();
        }
    }
    if !scaling.is_empty() {
        out.push_str("\nscaling (median over seeds):\n");
        out.push_str(&scaling);
    }

    let alg1: Vec<&Row> = rows.iter().filter(|r| r.algorithm == "alg1").collect();
    if !alg1.is_empty() {
        let worst = alg1
            .iter()
            .map(|r| r.grad_evals as f64 / (r.n * r.m) as f64)
            .fold(0.0, f64::max);
        writeln!(
            out,
            "\nalg1 gradient budget: max grad_evals/(nm) = {worst:.4} ({})",
            if worst <= 1.0 { "<= 1" } else { "EXCEEDS 1" }
        )
        .unwrap();
    }
    out
}

pub fn cmd_report(paths: &[PathBuf]) -> Result<String> {
    let mut rows = Vec::new();
    for p in paths {
        rows.extend(read_rows(p)?);
    }
    let text = report_text(&rows);
    print!("{text}");
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: usize, m: usize, risk: f64, evals: u64) -> Row {
        Row {
            algorithm: "alg1".into(),
            n,
            m,
            d: 4,
            eps: 1.0,
            delta: 1e-5,
            kappa: 1.0,
            seed: 0,
            excess_risk: risk,
            grad_evals: evals,
            halted: false,
            halt_phase: None,
            wall_time: 0.0,
        }
    }

    #[test]
    fn empty_input_says_no_data() {
        assert_eq!(report_text(&[]), "no data\n");
    }

    #[test]
    fn quadrupled_n_predicts_two_for_the_first_term() {
        let rows = vec![row(512, 4, 0.04, 1000), row(2048, 4, 0.01, 4000)];
        let t = report_text(&rows);
        assert!(t.contains("n 512 -> 2048 (x4): risk ratio 4.000 (predicted 2.000"), "{t}");
        assert!(t.contains("grad_evals ratio 4.000"), "{t}");
    }

    #[test]
    fn budget_ratio_is_reported() {
        let rows = vec![row(512, 4, 0.04, 1024)];
        let t = report_text(&rows);
        assert!(t.contains("max grad_evals/(nm) = 0.5000 (<= 1)"), "{t}");
    }

    #[test]
    fn points_differing_in_two_axes_are_not_compared() {
        let rows = vec![row(512, 4, 0.04, 1000), row(2048, 16, 0.01, 4000)];
        assert!(!report_text(&rows).contains("scaling"));
    }
}
