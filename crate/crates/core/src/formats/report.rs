//! Line formats for run metrics and classifier verdicts.
//!
//! Metrics, one line per step and picked token:
//!
//! ```text
//! # step token score region_size mask_nonzeros
//! 49 1 0.6021 21 21
//! ```
//!
//! Verdicts, one line per pair or token finding:
//!
//! ```text
//! pair 1 2 overlap 0 gap 11.3 verdicts preempted
//! token 3 misplacement 0.98 verdicts wrong_region
//! token 1 misplacement none verdicts -
//! ```

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::harness::classify::{Finding, Subject, Verdict};
use crate::harness::pipeline::RunReport;
use crate::scalar::Scalar;

pub const METRICS_HEADER: &str = "# step token score region_size mask_nonzeros";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow<T> {
    pub step: usize,
    pub token: usize,
    pub score: T,
    pub region_size: usize,
    pub mask_nonzeros: usize,
}

pub fn metrics_rows<T: Scalar>(report: &RunReport<T>) -> Vec<MetricsRow<T>> {
    let picked = report.selection.indices();
    let mut rows = Vec::with_capacity(report.steps.len() * picked.len());
    for rec in &report.steps {
        for (k, &token) in picked.iter().enumerate() {
            rows.push(MetricsRow {
                step: rec.step,
                token,
                score: rec.scores[k],
                region_size: rec.assignment.regions[k].len(),
                mask_nonzeros: rec.mask.column_nonzeros(token),
            });
        }
    }
    rows
}

pub fn render_metrics<T: Scalar>(rows: &[MetricsRow<T>]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{} {} {} {} {}",
            r.step, r.token, r.score, r.region_size, r.mask_nonzeros
        )
        .unwrap();
    }
    out
}

fn field<V: std::str::FromStr>(s: &str, line: usize) -> Result<V> {
    s.parse()
        .map_err(|_| Error::parse(line, format!("invalid field `{s}`")))
}

pub fn parse_metrics<T: Scalar>(text: &str) -> Result<Vec<MetricsRow<T>>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(Error::parse(line_no, "metrics lines have five fields"));
        }
        rows.push(MetricsRow {
            step: field(f[0], line_no)?,
            token: field(f[1], line_no)?,
            score: field(f[2], line_no)?,
            region_size: field(f[3], line_no)?,
            mask_nonzeros: field(f[4], line_no)?,
        });
    }
    Ok(rows)
}

fn write_verdicts(out: &mut String, verdicts: &[Verdict]) {
    out.push_str(" verdicts ");
    if verdicts.is_empty() {
        out.push('-');
    } else {
        let names: Vec<&str> = verdicts.iter().map(Verdict::as_str).collect();
        out.push_str(&names.join(","));
    }
}

fn opt<T: Scalar>(v: Option<T>) -> String {
    v.map_or_else(|| "none".to_string(), |v| v.to_string())
}

pub fn render_verdicts<T: Scalar>(findings: &[Finding<T>]) -> String {
    let mut out = String::new();
    for f in findings {
        match f.subject {
            Subject::Pair(i, j) => write!(
                out,
                "pair {i} {j} overlap {} gap {}",
                opt(f.overlap),
                opt(f.gap)
            )
            .unwrap(),
            Subject::Token(i) => write!(out, "token {i} misplacement {}", opt(f.misplacement)).unwrap(),
        }
        write_verdicts(&mut out, &f.verdicts);
        out.push('\n');
    }
    out
}

fn parse_opt<T: Scalar>(s: &str, line: usize) -> Result<Option<T>> {
    if s == "none" {
        Ok(None)
    } else {
        field(s, line).map(Some)
    }
}

fn parse_verdict_list(s: &str, line: usize) -> Result<Vec<Verdict>> {
    if s == "-" {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|v| v.parse().map_err(|e: Error| Error::parse(line, e.to_string())))
        .collect()
}

pub fn parse_verdicts<T: Scalar>(text: &str) -> Result<Vec<Finding<T>>> {
    let mut findings = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let f: Vec<&str> = line.split_whitespace().collect();
        match f.as_slice() {
            [] => continue,
            ["pair", a, b, "overlap", o, "gap", g, "verdicts", v] => findings.push(Finding {
                subject: Subject::Pair(field(a, line_no)?, field(b, line_no)?),
                verdicts: parse_verdict_list(v, line_no)?,
                overlap: parse_opt(o, line_no)?,
                gap: parse_opt(g, line_no)?,
                misplacement: None,
            }),
            ["token", a, "misplacement", m, "verdicts", v] => findings.push(Finding {
                subject: Subject::Token(field(a, line_no)?),
                verdicts: parse_verdict_list(v, line_no)?,
                overlap: None,
                gap: None,
                misplacement: parse_opt(m, line_no)?,
            }),
            _ => return Err(Error::parse(line_no, format!("unrecognized verdict line `{line}`"))),
        }
    }
    Ok(findings)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_round_trip() {
        let findings = vec![
            Finding {
                subject: Subject::Pair(1, 2),
                verdicts: vec![Verdict::Overlapping],
                overlap: Some(0.75),
                gap: Some(1.125),
                misplacement: None,
            },
            Finding {
                subject: Subject::Pair(1, 3),
                verdicts: vec![],
                overlap: Some(0.0),
                gap: Some(f64::INFINITY),
                misplacement: None,
            },
            Finding {
                subject: Subject::Token(3),
                verdicts: vec![Verdict::WrongRegion],
                overlap: None,
                gap: None,
                misplacement: None,
            },
        ];
        let text = render_verdicts(&findings);
        assert_eq!(
            text.lines().next().unwrap(),
            "pair 1 2 overlap 0.75 gap 1.125 verdicts overlapping"
        );
        assert_eq!(parse_verdicts::<f64>(&text).unwrap(), findings);
    }

    #[test]
    fn metrics_round_trip() {
        let rows = vec![
            MetricsRow { step: 3, token: 1, score: 0.1 + 0.2, region_size: 4, mask_nonzeros: 4 },
            MetricsRow { step: 2, token: 2, score: 1e-7, region_size: 0, mask_nonzeros: 0 },
        ];
        let text = render_metrics(&rows);
        assert!(text.starts_with(METRICS_HEADER));
        assert_eq!(parse_metrics::<f64>(&text).unwrap(), rows);
        assert!(parse_metrics::<f64>("1 2 3\n").is_err());
    }

    #[test]
    fn rejects_unknown_verdicts() {
        assert!(parse_verdicts::<f64>("token 1 misplacement 0.1 verdicts sideways\n").is_err());
        assert!(parse_verdicts::<f64>("triple 1 2 3\n").is_err());
    }
}
