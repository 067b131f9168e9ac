//! Per-screen ranks, paired tests and Holm–Bonferroni correction.
//!
//! A screen is one listener rating every system on one utterance. Score
//! tests pair screens with a t-test; rank tests pair the per-screen ranks
//! with the Wilcoxon signed-rank test. Each family (all screens, or one
//! domain) is corrected on its own.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::MushraError;

pub const DEFAULT_ALPHA: f64 = 0.01;

/// Above this many non-zero differences the Wilcoxon p-value uses the
/// normal approximation.
pub const WILCOXON_EXACT_MAX: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub listener_id: String,
    pub utterance_id: String,
    pub domain: String,
    pub system: String,
    pub score: f64,
    pub timestamp: String,
}

pub fn read_ratings(path: &Path) -> Result<Vec<Rating>, MushraError> {
    parse_ratings(std::fs::File::open(path)?)
}

/// Ratings CSV from any reader; scores must lie in 0..=100.
pub fn parse_ratings<R: std::io::Read>(input: R) -> Result<Vec<Rating>, MushraError> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r.deserialize().collect::<Result<Vec<Rating>, _>>()?;
    for (i, row) in rows.iter().enumerate() {
        if !(0.0..=100.0).contains(&row.score) {
            return Err(MushraError::Ratings(format!(
                "row {}: score {} outside 0..=100",
                i + 1,
                row.score
            )));
        }
    }
    Ok(rows)
}

/// Always writes the header, even with no rows.
pub fn write_ratings<W: std::io::Write>(out: W, ratings: &[Rating]) -> Result<(), MushraError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record([
        "listener_id",
        "utterance_id",
        "domain",
        "system",
        "score",
        "timestamp",
    ])?;
    for r in ratings {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Ranks within one screen: highest score gets rank 1, ties share the
/// average of the positions they span.
pub fn screen_ranks(scores: &[f64]) -> Result<Vec<f64>, MushraError> {
    if scores.len() < 2 {
        return Err(MushraError::Stats(
            "a screen needs at least two systems".into(),
        ));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(MushraError::Stats("non-finite score".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    Ok(average_ranks(&idx, |i| scores[i]))
}

/// Average 1-based ranks for `order` (already sorted so equal keys are
/// adjacent).
fn average_ranks(order: &[usize], key: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut ranks = vec![0.0; order.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && key(order[j + 1]) == key(order[i]) {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTest {
    pub n: usize,
    pub mean_difference: f64,
    pub t: f64,
    pub p: f64,
    /// Non-zero mean with zero variance: t is ±∞ and p is 0.
    pub degenerate: bool,
}

/// Two-sided paired t-test of `a − b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest, MushraError> {
    if a.len() != b.len() {
        return Err(MushraError::Stats(format!(
            "paired samples of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(MushraError::Stats(
            "paired t-test needs at least two pairs".into(),
        ));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(MushraError::Stats("non-finite sample".into()));
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTest {
                n,
                mean_difference: 0.0,
                t: 0.0,
                p: 1.0,
                degenerate: false,
            }
        } else {
            TTest {
                n,
                mean_difference: mean,
                t: mean.signum() * f64::INFINITY,
                p: 0.0,
                degenerate: true,
            }
        });
    }
    let t = mean / (var / n as f64).sqrt();
    let dist =
        StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| MushraError::Stats(e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest {
        n,
        mean_difference: mean,
        t,
        p,
        degenerate: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WilcoxonMethod {
    Exact,
    Normal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Wilcoxon {
    /// Non-zero differences used.
    pub n: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    pub p: f64,
    pub method: WilcoxonMethod,
}

/// Drops zero differences and ranks `|d|` with average ranks for ties.
fn signed_ranks(a: &[f64], b: &[f64]) -> Result<(Vec<f64>, Vec<bool>), MushraError> {
    if a.len() != b.len() {
        return Err(MushraError::Stats(format!(
            "paired samples of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|v| *v != 0.0)
        .collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(MushraError::Stats("non-finite sample".into()));
    }
    if d.is_empty() {
        return Err(MushraError::AllZeroDifferences);
    }
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.sort_by(|&i, &j| d[i].abs().total_cmp(&d[j].abs()));
    let ranks = average_ranks(&idx, |i| d[i].abs());
    Ok((ranks, d.iter().map(|v| *v > 0.0).collect()))
}

/// Two-sided Wilcoxon signed-rank test of `a − b`. Exact null distribution
/// (conditional on the tie pattern) up to [`WILCOXON_EXACT_MAX`] non-zero
/// differences, normal approximation beyond.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<Wilcoxon, MushraError> {
    let (ranks, positive) = signed_ranks(a, b)?;
    if ranks.len() > WILCOXON_EXACT_MAX {
        return normal_from_ranks(&ranks, &positive);
    }
    let n = ranks.len();
    let w_plus: f64 = ranks
        .iter()
        .zip(&positive)
        .filter(|(_, p)| **p)
        .map(|(r, _)| r)
        .sum();
    let total: f64 = ranks.iter().sum();
    // Ranks are multiples of 1/2; double them to count integer sums.
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; max + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for w in (r..=max).rev() {
            counts[w] += counts[w - r];
        }
    }
    let obs = (w_plus * 2.0).round() as usize;
    let all = 2f64.powi(n as i32);
    let lo: f64 = counts[..=obs].iter().sum::<f64>() / all;
    let hi: f64 = counts[obs..].iter().sum::<f64>() / all;
    Ok(Wilcoxon {
        n,
        w_plus,
        w_minus: total - w_plus,
        p: (2.0 * lo.min(hi)).min(1.0),
        method: WilcoxonMethod::Exact,
    })
}

/// Normal approximation with tie-corrected variance and continuity
/// correction, regardless of `n`.
pub fn wilcoxon_normal_approx(a: &[f64], b: &[f64]) -> Result<Wilcoxon, MushraError> {
    let (ranks, positive) = signed_ranks(a, b)?;
    normal_from_ranks(&ranks, &positive)
}

fn normal_from_ranks(ranks: &[f64], positive: &[bool]) -> Result<Wilcoxon, MushraError> {
    let n = ranks.len() as f64;
    let w_plus: f64 = ranks
        .iter()
        .zip(positive)
        .filter(|(_, p)| **p)
        .map(|(r, _)| r)
        .sum();
    let total: f64 = ranks.iter().sum();
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|r| **r == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
        let normal = Normal::new(0.0, 1.0).map_err(|e| MushraError::Stats(e.to_string()))?;
        (2.0 * normal.sf(z)).min(1.0)
    };
    Ok(Wilcoxon {
        n: ranks.len(),
        w_plus,
        w_minus: total - w_plus,
        p,
        method: WilcoxonMethod::Normal,
    })
}

/// Holm step-down adjusted p-values (input order) and rejections at `alpha`.
pub fn holm_bonferroni(p: &[f64], alpha: f64) -> Result<(Vec<f64>, Vec<bool>), MushraError> {
    if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(MushraError::Stats("p-values must lie in [0, 1]".into()));
    }
    let m = p.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut adjusted = vec![0.0; m];
    let mut running: f64 = 0.0;
    for (k, &i) in idx.iter().enumerate() {
        running = running.max(((m - k) as f64 * p[i]).min(1.0));
        adjusted[i] = running;
    }
    let reject = adjusted.iter().map(|a| *a <= alpha).collect();
    Ok((adjusted, reject))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SystemSummary {
    pub system: String,
    pub n_screens: usize,
    pub mean_score: f64,
    pub median_score: f64,
    pub mean_rank: f64,
    pub median_rank: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairwiseTest {
    pub system_a: String,
    pub system_b: String,
    pub n_screens: usize,
    pub mean_difference: f64,
    pub t: f64,
    pub p_t: f64,
    pub p_t_adjusted: f64,
    pub significant_t: bool,
    pub w_plus: f64,
    pub p_w: f64,
    pub p_w_adjusted: f64,
    pub significant_w: bool,
    /// `exact`, `normal`, or `none` when every rank difference is zero.
    pub wilcoxon_method: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FamilyReport {
    /// `overall` or the domain name.
    pub family: String,
    pub n_screens: usize,
    pub n_utterances: usize,
    pub summaries: Vec<SystemSummary>,
    pub pairs: Vec<PairwiseTest>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatsReport {
    pub alpha: f64,
    pub systems: Vec<String>,
    pub complete_screens: usize,
    /// Screens missing at least one system's score.
    pub excluded_screens: usize,
    pub overall: FamilyReport,
    pub domains: Vec<FamilyReport>,
    pub screens: Vec<ScreenRow>,
}

/// One complete screen with per-system scores and ranks (system order).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScreenRow {
    pub listener_id: String,
    pub utterance_id: String,
    pub domain: String,
    pub scores: Vec<f64>,
    pub ranks: Vec<f64>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn family(
    name: &str,
    screens: &[&ScreenRow],
    systems: &[String],
    alpha: f64,
) -> Result<FamilyReport, MushraError> {
    let column = |k: usize, rank: bool| -> Vec<f64> {
        screens
            .iter()
            .map(|s| if rank { s.ranks[k] } else { s.scores[k] })
            .collect()
    };
    let summaries = systems
        .iter()
        .enumerate()
        .map(|(k, sys)| {
            let mut sc = column(k, false);
            let mut rk = column(k, true);
            let n = sc.len() as f64;
            SystemSummary {
                system: sys.clone(),
                n_screens: sc.len(),
                mean_score: sc.iter().sum::<f64>() / n,
                mean_rank: rk.iter().sum::<f64>() / n,
                median_score: median(&mut sc),
                median_rank: median(&mut rk),
            }
        })
        .collect();
    let mut pairs = Vec::new();
    for i in 0..systems.len() {
        for j in i + 1..systems.len() {
            let (sa, sb) = (column(i, false), column(j, false));
            let (t, p_t, mean_difference) = match paired_t_test(&sa, &sb) {
                Ok(r) => (r.t, r.p, r.mean_difference),
                Err(_) => (f64::NAN, 1.0, f64::NAN),
            };
            let (w_plus, p_w, method) =
                match wilcoxon_signed_rank(&column(i, true), &column(j, true)) {
                    Ok(w) => (w.w_plus, w.p, format!("{:?}", w.method).to_lowercase()),
                    Err(MushraError::AllZeroDifferences) => (0.0, 1.0, "none".to_string()),
                    Err(e) => return Err(e),
                };
            pairs.push(PairwiseTest {
                system_a: systems[i].clone(),
                system_b: systems[j].clone(),
                n_screens: screens.len(),
                mean_difference,
                t,
                p_t,
                p_t_adjusted: 0.0,
                significant_t: false,
                w_plus,
                p_w,
                p_w_adjusted: 0.0,
                significant_w: false,
                wilcoxon_method: method,
            });
        }
    }
    let (adj_t, rej_t) = holm_bonferroni(&pairs.iter().map(|p| p.p_t).collect::<Vec<_>>(), alpha)?;
    let (adj_w, rej_w) = holm_bonferroni(&pairs.iter().map(|p| p.p_w).collect::<Vec<_>>(), alpha)?;
    for (k, p) in pairs.iter_mut().enumerate() {
        p.p_t_adjusted = adj_t[k];
        p.significant_t = rej_t[k];
        p.p_w_adjusted = adj_w[k];
        p.significant_w = rej_w[k];
    }
    let mut utts: Vec<&str> = screens.iter().map(|s| s.utterance_id.as_str()).collect();
    utts.sort_unstable();
    utts.dedup();
    Ok(FamilyReport {
        family: name.to_string(),
        n_screens: screens.len(),
        n_utterances: utts.len(),
        summaries,
        pairs,
    })
}

/// Groups ratings into screens, drops incomplete ones, and runs every
/// family. `systems` fixes the system order; `None` uses first appearance.
pub fn summarize(
    ratings: &[Rating],
    systems: Option<&[String]>,
    alpha: f64,
) -> Result<StatsReport, MushraError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MushraError::Stats(format!("alpha {alpha} outside (0, 1)")));
    }
    if ratings.is_empty() {
        return Err(MushraError::Ratings("no ratings".into()));
    }
    let systems: Vec<String> = match systems {
        Some(s) => s.to_vec(),
        None => {
            let mut v: Vec<String> = Vec::new();
            for r in ratings {
                if !v.contains(&r.system) {
                    v.push(r.system.clone());
                }
            }
            v
        }
    };
    if systems.len() < 2 {
        return Err(MushraError::Ratings("need at least two systems".into()));
    }
    let mut grouped: BTreeMap<(&str, &str), (&str, Vec<Option<f64>>)> = BTreeMap::new();
    for r in ratings {
        if !(0.0..=100.0).contains(&r.score) {
            return Err(MushraError::Ratings(format!(
                "score {} outside 0..=100",
                r.score
            )));
        }
        let k = systems
            .iter()
            .position(|s| *s == r.system)
            .ok_or_else(|| MushraError::Ratings(format!("unknown system {}", r.system)))?;
        let entry = grouped
            .entry((r.listener_id.as_str(), r.utterance_id.as_str()))
            .or_insert_with(|| (r.domain.as_str(), vec![None; systems.len()]));
        if entry.0 != r.domain {
            return Err(MushraError::Ratings(format!(
                "utterance {} has two domains",
                r.utterance_id
            )));
        }
        if entry.1[k].replace(r.score).is_some() {
            return Err(MushraError::Ratings(format!(
                "listener {} rated {} / {} twice",
                r.listener_id, r.utterance_id, r.system
            )));
        }
    }
    let mut screens = Vec::new();
    let mut excluded = 0;
    for ((l, u), (d, scores)) in grouped {
        let Some(scores) = scores.into_iter().collect::<Option<Vec<f64>>>() else {
            excluded += 1;
            continue;
        };
        let ranks = screen_ranks(&scores)?;
        screens.push(ScreenRow {
            listener_id: l.to_string(),
            utterance_id: u.to_string(),
            domain: d.to_string(),
            scores,
            ranks,
        });
    }
    if screens.is_empty() {
        return Err(MushraError::Ratings("no complete screens".into()));
    }
    let all: Vec<&ScreenRow> = screens.iter().collect();
    let overall = family("overall", &all, &systems, alpha)?;
    let mut domain_names: Vec<&str> = Vec::new();
    for r in ratings {
        if !domain_names.contains(&r.domain.as_str()) {
            domain_names.push(&r.domain);
        }
    }
    let mut domains = Vec::new();
    for d in domain_names {
        let sub: Vec<&ScreenRow> = screens.iter().filter(|s| s.domain == d).collect();
        if !sub.is_empty() {
            domains.push(family(d, &sub, &systems, alpha)?);
        }
    }
    Ok(StatsReport {
        alpha,
        systems,
        complete_screens: screens.len(),
        excluded_screens: excluded,
        overall,
        domains,
        screens,
    })
}

fn fmt_p(p: f64) -> String {
    if p < 1e-4 {
        format!("{p:.2e}")
    } else {
        format!("{p:.4}")
    }
}

impl StatsReport {
    /// Plain-text tables: overall scores/ranks, then per-domain scores with
    /// pairwise p-values, then the overall pairwise tests.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "MUSHRA results: {} complete screens ({} excluded), alpha = {}\n",
            self.complete_screens, self.excluded_screens, self.alpha
        );
        let _ = writeln!(
            s,
            "{:<14} {:>10} {:>12} {:>10} {:>12}",
            "System", "Mean score", "Median score", "Mean rank", "Median rank"
        );
        for r in &self.overall.summaries {
            let _ = writeln!(
                s,
                "{:<14} {:>10.2} {:>12.1} {:>10.2} {:>12.1}",
                r.system, r.mean_score, r.median_score, r.mean_rank, r.median_rank
            );
        }
        let _ = writeln!(s, "\nPairwise tests (overall, Holm-corrected):");
        pair_lines(&mut s, &self.overall.pairs);
        let _ = writeln!(s, "\nBy domain:");
        for d in &self.domains {
            let _ = writeln!(
                s,
                "\n{} ({} utterances, {} screens)",
                d.family, d.n_utterances, d.n_screens
            );
            let _ = writeln!(
                s,
                "  {:<14} {:>10} {:>12}",
                "System", "Mean score", "Median score"
            );
            for r in &d.summaries {
                let _ = writeln!(
                    s,
                    "  {:<14} {:>10.2} {:>12.1}",
                    r.system, r.mean_score, r.median_score
                );
            }
            pair_lines(&mut s, &d.pairs);
        }
        s
    }

    pub fn write_summary_csv<W: std::io::Write>(&self, out: W) -> Result<(), MushraError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "family",
            "system",
            "n_screens",
            "mean_score",
            "median_score",
            "mean_rank",
            "median_rank",
        ])?;
        for f in std::iter::once(&self.overall).chain(&self.domains) {
            for r in &f.summaries {
                w.write_record([
                    f.family.clone(),
                    r.system.clone(),
                    r.n_screens.to_string(),
                    r.mean_score.to_string(),
                    r.median_score.to_string(),
                    r.mean_rank.to_string(),
                    r.median_rank.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_pairwise_csv<W: std::io::Write>(&self, out: W) -> Result<(), MushraError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "family",
            "system_a",
            "system_b",
            "n_screens",
            "mean_difference",
            "t",
            "p_t",
            "p_t_adjusted",
            "significant_t",
            "w_plus",
            "p_w",
            "p_w_adjusted",
            "significant_w",
            "wilcoxon_method",
        ])?;
        for f in std::iter::once(&self.overall).chain(&self.domains) {
            for p in &f.pairs {
                w.write_record([
                    f.family.clone(),
                    p.system_a.clone(),
                    p.system_b.clone(),
                    p.n_screens.to_string(),
                    p.mean_difference.to_string(),
                    p.t.to_string(),
                    p.p_t.to_string(),
                    p.p_t_adjusted.to_string(),
                    p.significant_t.to_string(),
                    p.w_plus.to_string(),
                    p.p_w.to_string(),
                    p.p_w_adjusted.to_string(),
                    p.significant_w.to_string(),
                    p.wilcoxon_method.clone(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Long-format per-screen scores and ranks for plotting.
    pub fn write_plot_csv<W: std::io::Write>(&self, out: W) -> Result<(), MushraError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "listener_id",
            "utterance_id",
            "domain",
            "system",
            "score",
            "rank",
        ])?;
        for s in &self.screens {
            for (k, sys) in self.systems.iter().enumerate() {
                w.write_record([
                    s.listener_id.clone(),
                    s.utterance_id.clone(),
                    s.domain.clone(),
                    sys.clone(),
                    s.scores[k].to_string(),
                    s.ranks[k].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `report.txt`, `summary.csv`, `pairwise.csv`, `plot_data.csv`
    /// and `report.json` into `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<(), MushraError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.txt"), self.to_text())?;
        self.write_summary_csv(std::fs::File::create(dir.join("summary.csv"))?)?;
        self.write_pairwise_csv(std::fs::File::create(dir.join("pairwise.csv"))?)?;
        self.write_plot_csv(std::fs::File::create(dir.join("plot_data.csv"))?)?;
        let mut f = std::fs::File::create(dir.join("report.json"))?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

fn pair_lines(s: &mut String, pairs: &[PairwiseTest]) {
    for p in pairs {
        let _ = writeln!(
            s,
            "  {} vs {}: t = {:.3}, p = {} (adj {}){}; W+ = {}, p = {} (adj {}){}",
            p.system_a,
            p.system_b,
            p.t,
            fmt_p(p.p_t),
            fmt_p(p.p_t_adjusted),
            if p.significant_t { " *" } else { "" },
            p.w_plus,
            fmt_p(p.p_w),
            fmt_p(p.p_w_adjusted),
            if p.significant_w { " *" } else { "" },
        );
    }
}
