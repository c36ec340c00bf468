use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::{Method, Variant};
use super::pipeline::MethodScores;
use crate::error::Result;
use crate::metrics::{evaluate, mean_std, risk_coverage_curve, wilcoxon_one_sided, MetricReport, Rate, ScoredRecord};
use crate::selector::calibrate_threshold;

/// One method at one coverage target on one fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub coverage: f64,
    /// Calibrated on the validation split.
    pub tau: f64,
    pub val_coverage: Rate,
    pub overall: MetricReport,
    /// Restricted to truly ambiguous test sequences.
    pub very_high: Option<MetricReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub alpha: Option<f64>,
    pub coverages: Vec<CoverageResult>,
}

pub fn evaluate_scores(s: &MethodScores, coverages: &[f64]) -> Result<MethodResult> {
    let val_scores: Vec<f64> = s.val.iter().map(|r| r.score).collect();
    let very_high: Vec<ScoredRecord> = s.test.iter().copied().filter(|r| r.ambiguous).collect();
    let coverages = coverages
        .iter()
        .map(|&c| {
            let tau = calibrate_threshold(&val_scores, c)?;
            let accepted = val_scores.iter().filter(|&&v| v >= tau).count();
            Ok(CoverageResult {
                coverage: c,
                tau,
                val_coverage: Rate { num: accepted, den: val_scores.len() },
                overall: evaluate(&s.test, tau)?,
                very_high: if very_high.is_empty() { None } else { Some(evaluate(&very_high, tau)?) },
            })
        })
        .collect::<Result<_>>()?;
    Ok(MethodResult { method: s.method, alpha: s.alpha, coverages })
}

/// Reported metrics, in column order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    NaO,
    NaVh,
    RiskO,
    RiskVh,
    ThreeWayO,
    ThreeWayVh,
    AaO,
    AaVh,
    Coverage,
    ValCoverage,
}

impl Metric {
    pub const ALL: [Metric; 10] = [
        Metric::NaO,
        Metric::NaVh,
        Metric::RiskO,
        Metric::RiskVh,
        Metric::ThreeWayO,
        Metric::ThreeWayVh,
        Metric::AaO,
        Metric::AaVh,
        Metric::Coverage,
        Metric::ValCoverage,
    ];
    /// Columns of the comparison tables.
    pub const TABLE: [Metric; 8] =
        [Metric::NaO, Metric::NaVh, Metric::RiskO, Metric::RiskVh, Metric::ThreeWayO, Metric::ThreeWayVh, Metric::AaO, Metric::AaVh];

    pub fn key(self) -> &'static str {
        match self {
            Metric::NaO => "na",
            Metric::NaVh => "na_vh",
            Metric::RiskO => "risk",
            Metric::RiskVh => "risk_vh",
            Metric::ThreeWayO => "three_way",
            Metric::ThreeWayVh => "three_way_vh",
            Metric::AaO => "aa",
            Metric::AaVh => "aa_vh",
            Metric::Coverage => "coverage",
            Metric::ValCoverage => "val_coverage",
        }
    }

    pub fn header(self) -> &'static str {
        match self {
            Metric::NaO => "NA(O)",
            Metric::NaVh => "NA(VH)",
            Metric::RiskO => "R(O)",
            Metric::RiskVh => "R(VH)",
            Metric::ThreeWayO => "3W(O)",
            Metric::ThreeWayVh => "3W(VH)",
            Metric::AaO => "AA(O)",
            Metric::AaVh => "AA(VH)",
            Metric::Coverage => "Cov",
            Metric::ValCoverage => "Cov(val)",
        }
    }

    pub fn from_key(key: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.key() == key)
    }

    pub fn lower_is_better(self) -> bool {
        matches!(self, Metric::RiskO | Metric::RiskVh)
    }

    pub fn rate(self, r: &CoverageResult) -> Rate {
        let vh = |f: fn(&MetricReport) -> Rate| r.very_high.as_ref().map_or(Rate { num: 0, den: 0 }, f);
        match self {
            Metric::NaO => r.overall.no_abstain_acc,
            Metric::NaVh => vh(|m| m.no_abstain_acc),
            Metric::RiskO => r.overall.risk,
            Metric::RiskVh => vh(|m| m.risk),
            Metric::ThreeWayO => r.overall.three_way_acc,
            Metric::ThreeWayVh => vh(|m| m.three_way_acc),
            Metric::AaO => r.overall.abstain_alignment,
            Metric::AaVh => vh(|m| m.abstain_alignment),
            Metric::Coverage => r.overall.coverage,
            Metric::ValCoverage => r.val_coverage,
        }
    }
}

/// `(method, fold, coverage, metric) -> value`; undefined metrics are absent.
pub type MetricTable = BTreeMap<(Method, usize, CoverageKey, Metric), f64>;

/// Coverage target in basis points, for exact keys.
pub type CoverageKey = u32;

pub fn coverage_key(c: f64) -> CoverageKey {
    (c * 10_000.0).round() as CoverageKey
}

fn coverage_label(k: CoverageKey) -> String {
    format!("{:.2}", k as f64 / 10_000.0)
}

/// Flattens per-fold results; also yields the CSV in long format.
pub fn metric_table(per_fold: &[(usize, Vec<MethodResult>)]) -> MetricTable {
    let mut t = MetricTable::new();
    for (fold, results) in per_fold {
        for r in results {
            for c in &r.coverages {
                for m in Metric::ALL {
                    if let Some(v) = m.rate(c).value() {
                        t.insert((r.method, *fold, coverage_key(c.coverage), m), v);
                    }
                }
            }
        }
    }
    t
}

/// Long-format CSV: `method,fold,coverage,metric,value`. Undefined
/// metrics are written as `—`.
pub fn metrics_csv(per_fold: &[(usize, Vec<MethodResult>)]) -> String {
    let mut out = String::from("method,fold,coverage,metric,value\n");
    for (fold, results) in per_fold {
        for r in results {
            for c in &r.coverages {
                for m in Metric::ALL {
                    let v = m.rate(c).value().map_or_else(|| "—".to_string(), |v| format!("{v:.6}"));
                    let _ = writeln!(out, "{},{},{},{},{}", r.method.name(), fold, coverage_label(coverage_key(c.coverage)), m.key(), v);
                }
                let _ = writeln!(out, "{},{},{},tau,{:.6}", r.method.name(), fold, coverage_label(coverage_key(c.coverage)), c.tau);
            }
        }
    }
    out
}

/// Mean and std over folds of one metric, `None` if never defined.
pub fn aggregate(t: &MetricTable, method: Method, cov: CoverageKey, metric: Metric) -> Option<(f64, f64, usize)> {
    let xs: Vec<f64> = t.iter().filter(|((m, _, c, k), _)| *m == method && *c == cov && *k == metric).map(|(_, v)| *v).collect();
    mean_std(&xs).map(|(m, s)| (m, s, xs.len()))
}

fn fmt_cell(a: Option<(f64, f64, usize)>) -> String {
    a.map_or_else(|| "—".to_string(), |(m, s, _)| format!("{:.2} ± {:.2}", 100.0 * m, 100.0 * s))
}

pub fn summary_csv(t: &MetricTable, methods: &[Method], coverages: &[CoverageKey]) -> String {
    let mut out = String::from("method,coverage,metric,mean,std,folds\n");
    for &method in methods {
        for &cov in coverages {
            for m in Metric::ALL {
                if let Some((mean, std, n)) = aggregate(t, method, cov, m) {
                    let _ = writeln!(out, "{},{},{},{mean:.6},{std:.6},{n}", method.name(), coverage_label(cov), m.key());
                }
            }
        }
    }
    out
}

/// A paired comparison of CHASE against the strongest baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub coverage: f64,
    pub metric: String,
    pub baseline: String,
    pub chase_mean: f64,
    pub baseline_mean: f64,
    pub n: usize,
    pub w_plus: f64,
    pub p_value: Option<f64>,
}

/// One-sided Wilcoxon tests of `chase` against the baseline with the best
/// mean on each metric and coverage. Differences are oriented so that
/// positive favours CHASE.
pub fn significance(t: &MetricTable, chase: Method, baselines: &[Method], coverages: &[CoverageKey]) -> Result<Vec<Significance>> {
    let mut out = Vec::new();
    for &cov in coverages {
        for metric in Metric::TABLE {
            let Some((chase_mean, _, _)) = aggregate(t, chase, cov, metric) else { continue };
            let better = |a: f64, b: f64| if metric.lower_is_better() { a < b } else { a > b };
            let mut best: Option<(Method, f64)> = None;
            for &b in baselines {
                if let Some((m, _, _)) = aggregate(t, b, cov, metric) {
                    if best.is_none_or(|(_, bm)| better(m, bm)) {
                        best = Some((b, m));
                    }
                }
            }
            let Some((base, baseline_mean)) = best else { continue };
            let folds: Vec<usize> = t.keys().filter(|(m, _, c, k)| *m == chase && *c == cov && *k == metric).map(|k| k.1).collect();
            let diffs: Vec<f64> = folds
                .iter()
                .filter_map(|&f| {
                    let a = t.get(&(chase, f, cov, metric))?;
                    let b = t.get(&(base, f, cov, metric))?;
                    Some(if metric.lower_is_better() { b - a } else { a - b })
                })
                .collect();
            let w = wilcoxon_one_sided(&diffs)?;
            out.push(Significance {
                coverage: cov as f64 / 10_000.0,
                metric: metric.key().to_string(),
                baseline: base.name().to_string(),
                chase_mean,
                baseline_mean,
                n: w.n,
                w_plus: w.w_plus,
                p_value: w.p_value,
            });
        }
    }
    Ok(out)
}

pub fn significance_csv(rows: &[Significance]) -> String {
    let mut out = String::from("coverage,metric,baseline,chase_mean,baseline_mean,n,w_plus,p_value\n");
    for r in rows {
        let p = r.p_value.map_or_else(|| "—".to_string(), |p| format!("{p:.6}"));
        let _ = writeln!(
            out,
            "{:.2},{},{},{:.6},{:.6},{},{},{}",
            r.coverage, r.metric, r.baseline, r.chase_mean, r.baseline_mean, r.n, r.w_plus, p
        );
    }
    out
}

fn markdown_table(t: &MetricTable, rows: &[(String, Method)], cov: CoverageKey) -> String {
    let mut out = String::from("| Method |");
    for m in Metric::TABLE {
        let _ = write!(out, " {} |", m.header());
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(Metric::TABLE.len()));
    out.push('\n');
    for (label, method) in rows {
        let _ = write!(out, "| {label} |");
        for m in Metric::TABLE {
            let _ = write!(out, " {} |", fmt_cell(aggregate(t, *method, cov, m)));
        }
        out.push('\n');
    }
    out
}

/// Markdown report: baseline comparison, ablation lattice and tests.
pub fn summary_markdown(t: &MetricTable, methods: &[Method], coverages: &[CoverageKey], sig: &[Significance], failed: &[usize]) -> String {
    let mut out = String::from("# Results\n\nMean ± std over folds, in percent. O = all test sequences, VH = truly ambiguous subset.\n");
    if !failed.is_empty() {
        let _ = writeln!(out, "\n**Failed folds:** {failed:?}");
    }
    let baselines: Vec<(String, Method)> = methods
        .iter()
        .filter(|m| matches!(m, Method::Baseline(_)))
        .map(|m| (m.name().to_string(), *m))
        .chain(methods.contains(&Method::Variant(Variant::F)).then(|| ("CHASE".to_string(), Method::Variant(Variant::F))))
        .collect();
    let variants: Vec<(String, Method)> = methods
        .iter()
        .filter_map(|m| match m {
            Method::Variant(v) => Some((format!("{} ({})", v.code(), v.description()), *m)),
            Method::Baseline(_) => None,
        })
        .collect();
    for &cov in coverages {
        let _ = writeln!(out, "\n## Target coverage {}\n", coverage_label(cov));
        if baselines.len() > 1 {
            let _ = writeln!(out, "### Baseline comparison\n\n{}", markdown_table(t, &baselines, cov));
        }
        if !variants.is_empty() {
            let _ = writeln!(out, "### Ablation variants\n\n{}", markdown_table(t, &variants, cov));
        }
        let rows: Vec<&Significance> = sig.iter().filter(|s| coverage_key(s.coverage) == cov).collect();
        if !rows.is_empty() {
            out.push_str("### One-sided Wilcoxon, CHASE vs strongest baseline\n\n| Metric | Baseline | p |\n|---|---|---|\n");
            for s in rows {
                let p = s.p_value.map_or_else(|| "—".to_string(), |p| format!("{p:.4}"));
                let _ = writeln!(out, "| {} | {} | {} |", s.metric, s.baseline, p);
            }
        }
    }
    out
}

/// Mean risk over folds on a fixed coverage grid. A fold's risk at grid
/// point `g` is read at its first reachable coverage `>= g`.
pub fn mean_risk_curve(per_fold: &[Vec<ScoredRecord>], grid: usize) -> Vec<(f64, f64)> {
    let curves: Vec<Vec<(f64, f64)>> = per_fold.iter().filter(|r| !r.is_empty()).map(|r| risk_coverage_curve(r)).collect();
    if curves.is_empty() {
        return Vec::new();
    }
    (1..=grid)
        .map(|i| {
            let g = i as f64 / grid as f64;
            let risks: Vec<f64> = curves
                .iter()
                .map(|c| c.iter().find(|(cov, _)| *cov >= g - 1e-12).map_or(c[c.len() - 1].1, |p| p.1))
                .collect();
            (g, risks.iter().sum::<f64>() / risks.len() as f64)
        })
        .collect()
}

const PALETTE: [&str; 12] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#000000", "#aec7e8"];

/// Static SVG line plot of risk against coverage.
pub fn risk_coverage_svg(curves: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h, pad) = (640.0, 420.0, 50.0);
    let max_risk = curves.iter().flat_map(|(_, c)| c.iter().map(|p| p.1)).fold(0.0f64, f64::max).max(0.05);
    let x = |c: f64| pad + c * (w - 2.0 * pad);
    let y = |r: f64| h - pad - r / max_risk * (h - 2.0 * pad);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <line x1=\"{pad}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <text x=\"{cx}\" y=\"{ly}\" text-anchor=\"middle\">coverage</text>\n\
         <text x=\"14\" y=\"{cy}\" transform=\"rotate(-90 14 {cy})\" text-anchor=\"middle\">risk</text>\n",
        b = h - pad,
        r = w - pad,
        cx = w / 2.0,
        ly = h - 12.0,
        cy = h / 2.0,
    );
    for i in 0..=5 {
        let c = i as f64 / 5.0;
        let rv = max_risk * c;
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{c:.1}</text>", x(c), h - pad + 16.0);
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{rv:.3}</text>", pad - 4.0, y(rv) + 4.0);
    }
    for (i, (name, pts)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts.iter().map(|&(c, r)| format!("{:.2},{:.2}", x(c), y(r))).collect();
        let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>", path.join(" "));
        let ly = pad + 14.0 * i as f64;
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{ly:.1}\" fill=\"{color}\">{name}</text>", w - pad - 90.0);
    }
    s.push_str("</svg>\n");
    s
}

/// Table with one row per sweep cell and NA, risk, 3W and AA columns per
/// coverage.
pub fn sweep_markdown(rows: &[((u32, u32, u32), MetricTable)], method: Method, coverages: &[CoverageKey]) -> String {
    let mut out = String::from("| g | w | c | NA |");
    for kind in ["R", "3W", "AA"] {
        for &c in coverages {
            let _ = write!(out, " {kind}@{} |", coverage_label(c));
        }
    }
    let cols = 4 + 3 * coverages.len();
    let _ = write!(out, "\n|{}\n", "---|".repeat(cols));
    for ((g, w, c), t) in rows {
        let first = coverages.first().copied().unwrap_or(0);
        let _ = write!(out, "| {g} | {w} | {c} | {} |", fmt_cell(aggregate(t, method, first, Metric::NaO)));
        for metric in [Metric::RiskO, Metric::ThreeWayO, Metric::AaO] {
            for &cov in coverages {
                let _ = write!(out, " {} |", fmt_cell(aggregate(t, method, cov, metric)));
            }
        }
        out.push('\n');
    }
    out
}

/// Default comparison set for significance tests.
pub fn baseline_methods(methods: &[Method]) -> Vec<Method> {
    methods.iter().copied().filter(|m| matches!(m, Method::Baseline(_))).collect()
}
