//! Per-second accuracy curves, time-bucket averages and report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{argmax_class, predict_logits, ClipMode, ModelWeights};
use crate::rng::SeededRng;
use crate::train::{full_seconds, prepare_sample, RoundSet, RoundView};
use crate::types::Outcome;

/// Last evaluated second; the four buckets cover `[1, 24]`, `[25, 49]`, `[50, 74]`, `[75, 99]`.
pub const MAX_SECOND: usize = 99;
pub const BUCKET_WIDTH: usize = 25;
pub const BUCKET_LABELS: [&str; 4] = ["0-24", "25-49", "50-74", "75-99"];

pub const REPORT_FILE: &str = "report.csv";
pub const CURVE_FILE: &str = "curve.csv";
pub const SVG_FILE: &str = "curves.svg";

pub fn bucket_of(t: usize) -> usize {
    t / BUCKET_WIDTH
}

/// Seconds evaluated for a round of `n_frames`: every `stride`-th of `1..=min(⌊duration⌋, 99)`.
pub fn eval_seconds(n_frames: usize, fps: usize, stride: usize) -> Vec<usize> {
    (1..=full_seconds(n_frames, fps).min(MAX_SECOND)).step_by(stride.max(1)).collect()
}

/// Predicted outcome at each of `seconds`, each built only from the past.
pub fn predict_round(
    weights: &ModelWeights,
    round: &RoundView<'_>,
    mode: ClipMode,
    with_events: bool,
    seconds: &[usize],
) -> Result<Vec<Outcome>> {
    seconds
        .iter()
        .map(|&t| {
            let s = prepare_sample(&weights.config, &weights.vocab, round, t, mode, with_events)?;
            Ok(Outcome::from_class(argmax_class(&predict_logits(weights, &s.input())?)))
        })
        .collect()
}

/// Predictions for one round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundPredictions {
    pub round_id: String,
    pub outcome: Outcome,
    /// `(t, predicted outcome)` in increasing `t`.
    pub predictions: Vec<(usize, Outcome)>,
}

/// Predict every round of `indices` (in parallel; output keeps their order).
pub fn predict_rounds(
    weights: &ModelWeights,
    set: &RoundSet<'_>,
    indices: &[usize],
    mode: ClipMode,
    with_events: bool,
    stride: usize,
) -> Result<Vec<RoundPredictions>> {
    let fps = weights.config.fps;
    indices
        .par_iter()
        .map(|&i| {
            let r = &set.rounds[i];
            let seconds = eval_seconds(r.n_frames(), fps, stride);
            let preds = predict_round(weights, &set.round(i), mode, with_events, &seconds)?;
            Ok(RoundPredictions { round_id: r.round_id.clone(), outcome: r.outcome, predictions: seconds.into_iter().zip(preds).collect() })
        })
        .collect()
}

/// A seeded random sample of `n` of `indices` (all of them when `n ≥ len`), in ascending order.
pub fn sample_indices(indices: &[usize], n: usize, seed: u64) -> Vec<usize> {
    let mut v = indices.to_vec();
    if n < v.len() {
        SeededRng::derive(seed, 7).shuffle(&mut v);
        v.truncate(n);
    }
    v.sort_unstable();
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondAccuracy {
    pub t: usize,
    /// Rounds still in progress (and predicted) at `t`.
    pub alive: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub model: String,
    pub per_second: Vec<SecondAccuracy>,
    /// Mean accuracy of the seconds in each bucket; `None` when a bucket has none.
    pub buckets: [Option<f64>; 4],
    /// Unweighted mean over seconds.
    pub overall: f64,
}

/// Accuracy at each second over the rounds alive at that second.
pub fn accuracy_curve(model: &str, rounds: &[RoundPredictions]) -> Result<AccuracyReport> {
    let mut tally: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for r in rounds {
        for &(t, pred) in &r.predictions {
            if (1..=MAX_SECOND).contains(&t) {
                let e = tally.entry(t).or_default();
                e.0 += 1;
                e.1 += (pred == r.outcome) as usize;
            }
        }
    }
    if tally.is_empty() {
        return Err(Error::EmptySet);
    }
    let per_second: Vec<SecondAccuracy> = tally
        .into_iter()
        .map(|(t, (alive, correct))| SecondAccuracy { t, alive, correct, accuracy: correct as f64 / alive as f64 })
        .collect();
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let mut members: [Vec<f64>; 4] = Default::default();
    for s in &per_second {
        members[bucket_of(s.t)].push(s.accuracy);
    }
    let buckets = members.map(|m| (!m.is_empty()).then(|| mean(&m)));
    let all: Vec<f64> = per_second.iter().map(|s| s.accuracy).collect();
    Ok(AccuracyReport { model: model.to_string(), per_second, buckets, overall: mean(&all) })
}

fn pct(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| format!("{:.2}", 100.0 * v))
}

/// Table row: model, overall, then the four buckets, as percentages with two decimals.
pub fn format_report_row(r: &AccuracyReport) -> String {
    let mut cells = vec![r.model.clone(), pct(Some(r.overall))];
    cells.extend(r.buckets.iter().map(|&b| pct(b)));
    cells.join(",")
}

pub fn report_csv(reports: &[&AccuracyReport]) -> String {
    let mut out = format!("model,overall,{}\n", BUCKET_LABELS.join(","));
    for r in reports {
        out.push_str(&format_report_row(r));
        out.push('\n');
    }
    out
}

/// `t,acc_<model>...[,gap],alive`; the gap (second minus first) appears for two
/// reports. Reports must cover the same seconds with the same alive counts.
pub fn curve_csv(reports: &[&AccuracyReport]) -> Result<String> {
    let first = reports.first().ok_or(Error::EmptySet)?;
    for r in reports {
        let same = r.per_second.len() == first.per_second.len()
            && r.per_second.iter().zip(&first.per_second).all(|(a, b)| a.t == b.t && a.alive == b.alive);
        if !same {
            return Err(Error::Config(format!("report '{}' was computed on a different evaluation set", r.model)));
        }
    }
    let mut head: Vec<String> = vec!["t".into()];
    head.extend(reports.iter().map(|r| format!("acc_{}", r.model.replace([',', '"', '\n'], "_"))));
    let pair = reports.len() == 2;
    if pair {
        head.push("gap".into());
    }
    head.push("alive".into());
    let mut out = head.join(",") + "\n";
    for (k, s) in first.per_second.iter().enumerate() {
        let accs: Vec<f64> = reports.iter().map(|r| r.per_second[k].accuracy).collect();
        let _ = write!(out, "{}", s.t);
        for a in &accs {
            let _ = write!(out, ",{a}");
        }
        if pair {
            let _ = write!(out, ",{}", accs[1] - accs[0]);
        }
        let _ = writeln!(out, ",{}", s.alive);
    }
    Ok(out)
}

/// A named accuracy series over seconds.
pub type Series = (String, Vec<(usize, f64)>);

/// Series back from `curve.csv` text (the `acc_*` columns).
pub fn parse_curve_csv(text: &str) -> Result<Vec<Series>> {
    let bad = |line: usize, msg: String| Error::Parse { path: CURVE_FILE.into(), line, msg };
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let head = rdr.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    let cols: Vec<(usize, String)> =
        head.iter().enumerate().filter_map(|(i, h)| h.strip_prefix("acc_").map(|m| (i, m.to_string()))).collect();
    if head.get(0) != Some("t") || cols.is_empty() {
        return Err(bad(1, "expected a 't' column and at least one 'acc_' column".into()));
    }
    let mut series: Vec<Series> = cols.iter().map(|(_, m)| (m.clone(), Vec::new())).collect();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(n + 2, e.to_string()))?;
        let num = |i: usize| rec.get(i).unwrap_or("").parse::<f64>().map_err(|e| bad(n + 2, e.to_string()));
        let t = num(0)? as usize;
        for (s, (i, _)) in series.iter_mut().zip(&cols) {
            s.1.push((t, num(*i)?));
        }
    }
    Ok(series)
}

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Line chart of accuracy over seconds, one polyline per series.
pub fn render_svg(series: &[Series]) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 360.0, 50.0, 20.0, 20.0, 40.0);
    let x = |t: f64| left + (w - left - right) * t / (MAX_SECOND + 1) as f64;
    let y = |a: f64| top + (h - top - bottom) * (1.0 - a);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for k in 0..=4 {
        let a = k as f64 / 4.0;
        let _ = writeln!(s, r##"<line x1="{}" y1="{:.1}" x2="{}" y2="{:.1}" stroke="#ddd"/>"##, x(0.0), y(a), x(100.0), y(a));
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" font-size="11" text-anchor="end">{a:.2}</text>"#, left - 6.0, y(a) + 4.0);
    }
    for t in (0..=100).step_by(BUCKET_WIDTH) {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" font-size="11" text-anchor="middle">{t}</text>"#, x(t as f64), h - bottom + 16.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{}" font-size="12" text-anchor="middle">second of round</text>"#, x(50.0), h - 6.0);
    let _ = writeln!(s, r#"<text x="14" y="{:.1}" font-size="12" transform="rotate(-90 14 {:.1})" text-anchor="middle">prediction accuracy</text>"#, y(0.5), y(0.5));
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = pts.iter().map(|&(t, a)| format!("{:.2},{:.2}", x(t as f64), y(a))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, points.join(" "));
        let ly = top + 14.0 * (i as f64 + 1.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{ly:.1}" font-size="12" fill="{color}">{}</text>"#, w - right - 90.0, xml_escape(name));
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn series_of(r: &AccuracyReport) -> Series {
    (r.model.clone(), r.per_second.iter().map(|s| (s.t, s.accuracy)).collect())
}

/// Write `report.csv`, `curve.csv` and `curves.svg` into `out_dir`.
pub fn emit_report(reports: &[&AccuracyReport], out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let write = |name: &str, text: String| {
        let p = out_dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write(REPORT_FILE, report_csv(reports))?;
    write(CURVE_FILE, curve_csv(reports)?)?;
    write(SVG_FILE, render_svg(&reports.iter().map(|r| series_of(r)).collect::<Vec<_>>()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use Outcome::{AttackerWin as A, DefenderWin as D};

    fn round(id: &str, outcome: Outcome, preds: &[Outcome]) -> RoundPredictions {
        RoundPredictions {
            round_id: id.into(),
            outcome,
            predictions: preds.iter().enumerate().map(|(i, &p)| (i + 1, p)).collect(),
        }
    }

    #[test]
    fn hand_counted_toy_set() {
        let rounds = [round("a", A, &[A, D]), round("b", D, &[D, D]), round("c", A, &[D, D, A])];
        let r = accuracy_curve("toy", &rounds).unwrap();
        let acc: Vec<(usize, usize, f64)> = r.per_second.iter().map(|s| (s.t, s.alive, s.accuracy)).collect();
        assert_eq!(acc, vec![(1, 3, 2.0 / 3.0), (2, 3, 1.0 / 3.0), (3, 1, 1.0)]);
        assert!((r.overall - (2.0 / 3.0 + 1.0 / 3.0 + 1.0) / 3.0).abs() < 1e-15);
        assert_eq!(r.buckets[1..], [None, None, None]);
        assert!((r.buckets[0].unwrap() - r.overall).abs() < 1e-15);
    }

    #[test]
    fn all_correct_is_one() {
        let rounds: Vec<_> = (0..5).map(|i| round("x", D, &vec![D; 10 + 20 * i])).collect();
        let r = accuracy_curve("m", &rounds).unwrap();
        assert!(r.per_second.iter().all(|s| s.accuracy == 1.0));
        assert_eq!(r.overall, 1.0);
        assert_eq!(r.buckets, [Some(1.0); 4]);
        assert!(r.per_second.windows(2).all(|w| w[0].alive >= w[1].alive));
        assert_eq!(r.per_second.last().unwrap().t, 90);
    }

    #[test]
    fn empty_set_is_an_error() {
        assert!(matches!(accuracy_curve("m", &[]), Err(Error::EmptySet)));
        assert!(matches!(accuracy_curve("m", &[round("a", A, &[])]), Err(Error::EmptySet)));
    }

    #[test]
    fn seconds_are_capped_and_bucketed() {
        assert_eq!(eval_seconds(8, 8, 1), vec![1]);
        assert_eq!(eval_seconds(7, 8, 1), Vec::<usize>::new());
        assert_eq!(eval_seconds(800, 8, 1).len(), 99);
        assert_eq!(eval_seconds(80, 8, 4), vec![1, 5, 9]);
        assert_eq!((bucket_of(1), bucket_of(24), bucket_of(25), bucket_of(99)), (0, 0, 1, 3));
    }

    #[test]
    fn table_row_formatting() {
        let r = AccuracyReport {
            model: "Model B".into(),
            per_second: vec![],
            buckets: [Some(0.5632), Some(0.8580), Some(0.9064), Some(0.8944)],
            overall: 0.8055,
        };
        assert_eq!(format_report_row(&r), "Model B,80.55,56.32,85.80,90.64,89.44");
    }

    #[test]
    fn identical_reports_have_zero_gap() {
        let rounds = [round("a", A, &[A, D, D]), round("b", D, &[A, D])];
        let r = accuracy_curve("A", &rounds).unwrap();
        let mut b = r.clone();
        b.model = "B".into();
        let text = curve_csv(&[&r, &b]).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,acc_A,acc_B,gap,alive"));
        for line in lines {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells[1], cells[2]);
            assert_eq!(cells[3].parse::<f64>().unwrap(), 0.0);
        }
    }

    #[test]
    fn curve_csv_round_trips() {
        let rounds: Vec<_> = (0..7).map(|i| round("x", if i % 2 == 0 { A } else { D }, &vec![A; 3 + i])).collect();
        let r = accuracy_curve("m", &rounds).unwrap();
        let series = parse_curve_csv(&curve_csv(&[&r]).unwrap()).unwrap();
        assert_eq!(series.len(), 1);
        for ((t, a), s) in series[0].1.iter().zip(&r.per_second) {
            assert_eq!(*t, s.t);
            assert!((a - s.accuracy).abs() < 1e-9);
        }
    }

    #[test]
    fn svg_has_one_polyline_per_model() {
        let a = accuracy_curve("A", &[round("a", A, &[A; 40])]).unwrap();
        let b = accuracy_curve("B", &[round("a", A, &[D; 40])]).unwrap();
        let svg = render_svg(&[series_of(&a), series_of(&b)]);
        let polylines: Vec<&str> = svg.lines().filter(|l| l.starts_with("<polyline")).collect();
        assert_eq!(polylines.len(), 2);
        for p in polylines {
            let pts = p.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
            assert_eq!(pts.split(' ').count(), 40);
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let idx: Vec<usize> = (0..50).collect();
        let s = sample_indices(&idx, 10, 3);
        assert_eq!(s.len(), 10);
        assert_eq!(s, sample_indices(&idx, 10, 3));
        assert_eq!(sample_indices(&idx, 100, 3), idx);
    }
}
