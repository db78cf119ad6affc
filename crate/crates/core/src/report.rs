//! Report tables: per-subset J, F and J&F, and the proportion of
//! expressions per difficulty level and per modality-role category.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::metrics::{aggregate, format_percent, MetricError, SubsetReport};
use crate::model::{Difficulty, RoleCategory, Subset};
use crate::pipeline::ClipRecord;

pub const ALL: &str = "All";

/// Share of clips per category, in percent with one decimal. Rounded by
/// largest remainder so every row sums to exactly 100.0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proportions {
    pub subset: String,
    pub clips: usize,
    pub counts: Vec<usize>,
    pub percents: Vec<f64>,
}

/// Percentages with one decimal that sum to 100.0; the tenths lost to
/// truncation go to the largest remainders, ties to the earlier category.
pub fn largest_remainder(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    let mut tenths: Vec<usize> = counts.iter().map(|c| c * 1000 / total).collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(counts[i] * 1000 % total));
    let short = 1000 - tenths.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        tenths[i] += 1;
    }
    tenths.into_iter().map(|t| t as f64 / 10.0).collect()
}

impl Proportions {
    fn new(subset: &str, counts: Vec<usize>) -> Self {
        Self {
            subset: subset.to_string(),
            clips: counts.iter().sum(),
            percents: largest_remainder(&counts),
            counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scores: Vec<SubsetReport>,
    pub difficulty_levels: Vec<String>,
    pub difficulty: Vec<Proportions>,
    pub modality_categories: Vec<String>,
    pub modality: Vec<Proportions>,
}

/// Rows per subset present, then one over every clip with a verdict.
fn proportions<K: PartialEq + Copy>(
    records: &[&ClipRecord],
    keys: &[K],
    key: impl Fn(&ClipRecord) -> Option<K>,
) -> Vec<Proportions> {
    let count = |rs: &mut dyn Iterator<Item = &&ClipRecord>| {
        let mut counts = vec![0; keys.len()];
        for r in rs {
            if let Some(k) = key(r) {
                counts[keys.iter().position(|x| *x == k).expect("known key")] += 1;
            }
        }
        counts
    };
    let mut rows: Vec<Proportions> = Subset::ALL
        .iter()
        .map(|s| Proportions::new(s.label(), count(&mut records.iter().filter(|r| r.subset == *s))))
        .filter(|p| p.clips > 0)
        .collect();
    let all = Proportions::new(ALL, count(&mut records.iter()));
    if all.clips > 0 {
        rows.push(all);
    }
    rows
}

const LEVELS: [Difficulty; 3] = [Difficulty::Low, Difficulty::Moderate, Difficulty::High];

/// Scores over completed clips with ground truth; proportions over every
/// clip whose consensus finished.
pub fn build_report(records: &[ClipRecord]) -> Result<Report, MetricError> {
    let scored: Vec<_> = records
        .iter()
        .filter_map(|r| r.score.clone().map(|s| (s, r.subset)))
        .collect();
    let scores = aggregate(&scored)?;
    let with_verdict: Vec<&ClipRecord> = records.iter().filter(|r| r.cmr.is_some()).collect();
    let verdict = |r: &ClipRecord| r.cmr.as_ref().map(|c| c.final_verdict.clone());
    Ok(Report {
        scores,
        difficulty_levels: LEVELS.iter().map(|d| d.label().to_string()).collect(),
        difficulty: proportions(&with_verdict, &LEVELS, |r| verdict(r).map(|v| v.difficulty())),
        modality_categories: RoleCategory::ALL.iter().map(|c| c.label().to_string()).collect(),
        modality: proportions(&with_verdict, &RoleCategory::ALL, |r| {
            verdict(r).map(|v| v.roles().category())
        }),
    })
}

fn table(out: &mut String, title: &str, header: &[String], rows: &[Vec<String>]) {
    let cols = header.len();
    let width: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .map(|r| r[c].len())
                .chain([header[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i == 0 {
                    format!("{c:<w$}", w = width[i])
                } else {
                    format!("{c:>w$}", w = width[i])
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
    };
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "{}", line(header));
    for r in rows {
        let _ = writeln!(out, "{}", line(r));
    }
    out.push('\n');
}

fn proportion_rows(rows: &[Proportions]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|p| {
            let mut r = vec![p.subset.clone()];
            r.extend(p.percents.iter().map(|x| format!("{x:.1}")));
            r.push(p.clips.to_string());
            r
        })
        .collect()
}

pub fn render_text(report: &Report) -> String {
    let mut out = String::new();
    let s = |x: &str| x.to_string();
    table(
        &mut out,
        "Segmentation (x100)",
        &[s("Subset"), s("J"), s("F"), s("J&F"), s("Clips")],
        &report
            .scores
            .iter()
            .map(|r| {
                vec![
                    r.subset.clone(),
                    format_percent(r.j),
                    format_percent(r.f),
                    format_percent(r.jf),
                    r.clips.to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    );
    let with_clips = |labels: &[String]| {
        let mut h = vec![s("Subset")];
        h.extend(labels.iter().cloned());
        h.push(s("Clips"));
        h
    };
    table(
        &mut out,
        "Difficulty (%)",
        &with_clips(&report.difficulty_levels),
        &proportion_rows(&report.difficulty),
    );
    table(
        &mut out,
        "Dominant modality (%)",
        &with_clips(&report.modality_categories),
        &proportion_rows(&report.modality),
    );
    out
}

pub fn render_csv(report: &Report) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["table", "subset", "column", "value"])?;
    for r in &report.scores {
        for (col, v) in [("J", r.j), ("F", r.f), ("J&F", r.jf)] {
            w.write_record(["scores", &r.subset, col, &format_percent(v)])?;
        }
        w.write_record(["scores", &r.subset, "clips", &r.clips.to_string()])?;
    }
    for (name, labels, rows) in [
        ("difficulty", &report.difficulty_levels, &report.difficulty),
        ("modality", &report.modality_categories, &report.modality),
    ] {
        for p in rows {
            for (label, pct) in labels.iter().zip(&p.percents) {
                w.write_record([name, &p.subset, label, &format!("{pct:.1}")])?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

/// Per-clip scores as fractions, one row per scored clip.
pub fn render_scores(records: &[ClipRecord]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["clip_id", "subset", "j", "f", "jf"])?;
    for r in records {
        if let Some(s) = &r.score {
            w.write_record([
                r.clip_id.as_str(),
                r.subset.as_str(),
                &format!("{:.6}", s.j),
                &format!("{:.6}", s.f),
                &format!("{:.6}", s.jf),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

pub fn write_scores(run_dir: &Path, records: &[ClipRecord]) -> std::io::Result<()> {
    fs::write(
        run_dir.join("scores.csv"),
        render_scores(records).map_err(std::io::Error::other)?,
    )
}

pub fn write_report(run_dir: &Path, report: &Report) -> std::io::Result<()> {
    fs::write(run_dir.join("report.txt"), render_text(report))?;
    fs::write(
        run_dir.join("report.csv"),
        render_csv(report).map_err(std::io::Error::other)?,
    )?;
    fs::write(
        run_dir.join("report.json"),
        serde_json::to_string_pretty(report).map_err(std::io::Error::other)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn thirds_round_to_a_full_hundred() {
        assert_eq!(largest_remainder(&[1, 1, 1]), [33.4, 33.3, 33.3]);
        assert_eq!(largest_remainder(&[0, 0, 4]), [0.0, 0.0, 100.0]);
        assert_eq!(largest_remainder(&[1, 2, 3, 0, 1]), [14.3, 28.6, 42.8, 0.0, 14.3]);
    }

    proptest! {
        #[test]
        fn rows_sum_to_one_hundred(counts in proptest::collection::vec(0usize..50, 1..6)) {
            prop_assume!(counts.iter().sum::<usize>() > 0);
            let p = largest_remainder(&counts);
            let tenths: i64 = p.iter().map(|x| (x * 10.0).round() as i64).sum();
            prop_assert_eq!(tenths, 1000);
            for (x, c) in p.iter().zip(&counts) {
                let exact = *c as f64 * 100.0 / counts.iter().sum::<usize>() as f64;
                prop_assert!((x - exact).abs() < 0.1 + 1e-9);
            }
        }
    }
}
