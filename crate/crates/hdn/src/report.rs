//! Text renderings of loss, evaluation, scatter and comparison results.
//! Key/value outputs use one `key: value` pair per line.

use std::fmt::Write;

use hdn_core::harness::{ComparisonRow, FitReport};
use hdn_core::{EvalReport, LossReport};

/// Formats `v` with `digits` significant digits, like C's `%.<digits>g`.
pub fn sig(v: f64, digits: usize) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0".into();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `value`, `used_pixels`, then one `level_<i>: <share>` line per level in
/// the order the levels were given (for L1+HDN, `level_0` is the L1 term).
pub fn loss_report(r: &LossReport) -> String {
    let mut out = format!("value: {:.6}\nused_pixels: {}\n", r.value, r.used_pixels);
    for (i, (_, share)) in r.per_level.iter().enumerate() {
        let _ = writeln!(out, "level_{i}: {share:.6}");
    }
    out
}

/// A headline in percent with one decimal, then full-precision fields.
pub fn eval_report(r: &EvalReport) -> String {
    format!(
        "AbsRel {:.1}  δ1 {:.1}\nabsrel: {}\ndelta1: {}\nscale: {}\nshift: {}\npixels: {}\nexcluded: {}\naligned: {}\n",
        100.0 * r.absrel,
        100.0 * r.delta1,
        r.absrel,
        r.delta1,
        r.scale,
        r.shift,
        r.pixels,
        r.excluded,
        r.aligned
    )
}

pub fn scatter_csv(pairs: &[(f64, f64)]) -> String {
    let mut out = String::from("pred,gt\n");
    for &(p, g) in pairs {
        let _ = writeln!(out, "{},{}", sig(p, 9), sig(g, 9));
    }
    out
}

pub fn fit_report(label: &str, r: &FitReport) -> String {
    format!(
        "loss: {label}\nfinal_loss: {}\nglobal_absrel: {}\nforeground_local_absrel: {}\nsteps: {}\n",
        r.final_loss,
        r.global_absrel,
        r.foreground_local_absrel,
        r.loss_trajectory.len() - 1
    )
}

pub fn trajectory_csv(r: &FitReport) -> String {
    let mut out = String::from("step,loss\n");
    for (i, v) in r.loss_trajectory.iter().enumerate() {
        let _ = writeln!(out, "{i},{v}");
    }
    out
}

fn signed_pct(p: f64) -> String {
    if p.is_finite() {
        format!("{p:+.1}%")
    } else {
        format!("{p}")
    }
}

/// Aligned table with AbsRel in percent and signed changes versus the first row.
pub fn comparison_table(rows: &[ComparisonRow]) -> String {
    let header = [
        "loss",
        "final_loss",
        "global_absrel",
        "Δglobal",
        "local_absrel",
        "Δlocal",
    ];
    let body: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                r.label.clone(),
                format!("{:.6}", r.report.final_loss),
                format!("{:.2}", 100.0 * r.report.global_absrel),
                signed_pct(r.global_change_pct),
                format!("{:.2}", 100.0 * r.report.foreground_local_absrel),
                signed_pct(r.local_change_pct),
            ]
        })
        .collect();
    let mut widths = header.map(|h| h.chars().count());
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[&str]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| {
                let pad = w - c.chars().count();
                if i == 0 {
                    format!("{c}{}", " ".repeat(pad))
                } else {
                    format!("{}{c}", " ".repeat(pad))
                }
            })
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(&header);
    for row in &body {
        let cells: Vec<&str> = row.iter().map(String::as_str).collect();
        line(&cells);
    }
    out
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out =
        String::from("loss,final_loss,global_absrel,global_change_pct,foreground_local_absrel,local_change_pct\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.label.replace(',', ";"),
            r.report.final_loss,
            r.report.global_absrel,
            r.global_change_pct,
            r.report.foreground_local_absrel,
            r.local_change_pct
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(sig(0.0, 9), "0");
        assert_eq!(sig(1.0, 9), "1");
        assert_eq!(sig(1.0 / 3.0, 9), "0.333333333");
        assert_eq!(sig(123456789.4, 9), "123456789");
        assert_eq!(sig(1234567890.0, 9), "1.23456789e+09");
        assert_eq!(sig(-2.5e-7, 9), "-2.5e-07");
        assert_eq!(sig(10.0, 9), "10");
    }

    #[test]
    fn eval_headline() {
        let r = EvalReport {
            absrel: 0.5,
            delta1: 0.5,
            scale: 1.0,
            shift: 0.0,
            pixels: 2,
            excluded: 0,
            aligned: false,
        };
        assert!(eval_report(&r).starts_with("AbsRel 50.0  δ1 50.0\n"));
    }

    #[test]
    fn loss_lines() {
        let r = LossReport {
            value: 0.25,
            gradient: None,
            per_level: vec![("global".into(), 0.25)],
            used_pixels: 4,
        };
        assert_eq!(
            loss_report(&r),
            "value: 0.250000\nused_pixels: 4\nlevel_0: 0.250000\n"
        );
    }
}
