//! Paired accuracy, pooled holistic and per-group comparative scores.
//!
//! Every metric averages a three-valued indicator over score comparisons:
//! 1 when the score expected to be higher is, 0 when it is lower, and 1/2
//! when the two are within [`TIE_TOLERANCE`] of each other after dividing by
//! the largest score in the set being evaluated.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{Role, Scenario, Setting, TestGroup};

/// Relative tie tolerance on normalized scores.
pub const TIE_TOLERANCE: f64 = 1e-3;

/// Largest allowed gap between `s` and `s_img + s_dyn`.
pub const COMPONENT_TOLERANCE: f64 = 1e-9;

/// One scored test video joined with its ground-truth labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredVideo {
    pub video_id: String,
    pub scenario: Scenario,
    pub setting: Setting,
    pub role: Role,
    pub pair: usize,
    pub plausible: bool,
    pub s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_img: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_dyn: Option<f64>,
}

impl ScoredVideo {
    pub fn group(&self) -> TestGroup {
        TestGroup { scenario: self.scenario, setting: self.setting }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.s.is_finite() {
            return Err(Error::Metric(format!("{}: non-finite score", self.video_id)));
        }
        if self.s < 0.0 {
            return Err(Error::Metric(format!("{}: negative score", self.video_id)));
        }
        if let (Some(i), Some(d)) = (self.s_img, self.s_dyn) {
            if !((i + d) - self.s).abs().le(&COMPONENT_TOLERANCE) {
                return Err(Error::Metric(format!(
                    "{}: s = {} but s_img + s_dyn = {}",
                    self.video_id,
                    self.s,
                    i + d
                )));
            }
        }
        Ok(())
    }
}

/// Score comparison with the tie rule. Returns the indicator in halves.
fn halves(hi: f64, lo: f64, scale: f64) -> u64 {
    let d = if scale > 0.0 { (hi - lo) / scale } else { 0.0 };
    if d.abs() <= TIE_TOLERANCE {
        1
    } else if d > 0.0 {
        2
    } else {
        0
    }
}

fn check(scores: impl IntoIterator<Item = f64>, what: &str) -> Result<f64> {
    let mut max = 0.0f64;
    let mut any = false;
    for s in scores {
        if !s.is_finite() {
            return Err(Error::Metric(format!("{what}: non-finite score {s}")));
        }
        if s < 0.0 {
            return Err(Error::Metric(format!("{what}: negative score {s}")));
        }
        max = max.max(s);
        any = true;
    }
    if !any {
        return Err(Error::Metric(format!("{what}: empty input")));
    }
    Ok(max)
}

fn paired(pairs: &[(f64, f64)], what: &str) -> Result<f64> {
    let scale = check(pairs.iter().flat_map(|&(a, b)| [a, b]), what)?;
    let total: u64 = pairs.iter().map(|&(hi, lo)| halves(hi, lo, scale)).sum();
    Ok(total as f64 / (2 * pairs.len()) as f64)
}

/// Fraction of `(s_normal, s_surprising)` pairs where the surprising video
/// scores higher.
pub fn accuracy(pairs: &[(f64, f64)]) -> Result<f64> {
    let flipped: Vec<(f64, f64)> = pairs.iter().map(|&(nor, sur)| (sur, nor)).collect();
    paired(&flipped, "accuracy")
}

/// Fraction of all `(plus, minus)` cross pairs where `plus` scores higher.
pub fn holistic(s_plus: &[f64], s_minus: &[f64]) -> Result<f64> {
    if s_plus.is_empty() || s_minus.is_empty() {
        return Err(Error::Metric("holistic: empty input".into()));
    }
    let scale = check(s_plus.iter().chain(s_minus).copied(), "holistic")?;
    let total: u64 = s_plus.iter().map(|&p| s_minus.iter().map(|&m| halves(p, m, scale)).sum::<u64>()).sum();
    Ok(total as f64 / (2 * s_plus.len() * s_minus.len()) as f64)
}

/// Fraction of `(s_plus, s_minus)` pairs where the first member scores higher.
pub fn comparative(pairs: &[(f64, f64)]) -> Result<f64> {
    paired(pairs, "comparative")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparativeEntry {
    pub group: String,
    pub scenario: Scenario,
    pub setting: Setting,
    pub n: usize,
    pub comparative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolisticEntry {
    pub scenario: Scenario,
    /// Implausible videos.
    pub n_s: usize,
    /// Plausible videos.
    pub n_c: usize,
    pub holistic: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyEntry {
    /// A group name, or `all` for every violation pair pooled.
    pub name: String,
    pub n: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub comparative: Vec<ComparativeEntry>,
    pub holistic: Vec<HolisticEntry>,
    pub accuracy: Vec<AccuracyEntry>,
}

impl MetricReport {
    pub fn value_count(&self) -> usize {
        self.comparative.len() + self.holistic.len() + self.accuracy.len()
    }

    pub fn comparative_of(&self, group: &str) -> Option<f64> {
        self.comparative.iter().find(|e| e.group == group).map(|e| e.comparative)
    }

    pub fn holistic_of(&self, scenario: Scenario) -> Option<f64> {
        self.holistic.iter().find(|e| e.scenario == scenario).map(|e| e.holistic)
    }

    pub fn accuracy_of(&self, name: &str) -> Option<f64> {
        self.accuracy.iter().find(|e| e.name == name).map(|e| e.accuracy)
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        writeln!(out, "comparative")?;
        for e in &self.comparative {
            writeln!(out, "  {:<16} n={:<4} {:.4}", e.group, e.n, e.comparative)?;
        }
        writeln!(out, "holistic")?;
        for e in &self.holistic {
            writeln!(out, "  {:<16} n_s={:<4} n_c={:<4} {:.4}", e.scenario.name(), e.n_s, e.n_c, e.holistic)?;
        }
        writeln!(out, "accuracy")?;
        for e in &self.accuracy {
            writeln!(out, "  {:<16} n={:<4} {:.4}", e.name, e.n, e.accuracy)?;
        }
        f.write_str(&out)
    }
}

/// Groups videos into generator pairs and computes every metric.
pub fn build_report(scored: &[ScoredVideo]) -> Result<MetricReport> {
    for v in scored {
        v.validate()?;
    }
    let mut pairs: BTreeMap<(TestGroup, usize), [Option<&ScoredVideo>; 2]> = BTreeMap::new();
    for v in scored {
        let slot = &mut pairs.entry((v.group(), v.pair)).or_default()[v.role as usize];
        if slot.is_some() {
            return Err(Error::Metric(format!("duplicate video for {} pair {} role {:?}", v.group().name(), v.pair, v.role)));
        }
        *slot = Some(v);
    }
    let mut orphans: Vec<String> = pairs
        .values()
        .filter_map(|p| match p {
            [Some(v), None] | [None, Some(v)] => Some(v.video_id.clone()),
            _ => None,
        })
        .collect();
    if !orphans.is_empty() {
        orphans.sort();
        return Err(Error::Orphans(orphans));
    }

    let mut by_group: BTreeMap<TestGroup, Vec<(&ScoredVideo, &ScoredVideo)>> = BTreeMap::new();
    for ((g, _), p) in &pairs {
        if let [Some(a), Some(b)] = p {
            by_group.entry(*g).or_default().push((a, b));
        }
    }

    let mut comparative_entries = Vec::new();
    let mut accuracy_entries = Vec::new();
    let mut all_violation = Vec::new();
    for (g, ps) in &by_group {
        let signed: Vec<(f64, f64)> = ps
            .iter()
            .map(|&(a, b)| {
                if g.setting.has_violation() && a.plausible && !b.plausible {
                    (b.s, a.s)
                } else {
                    (a.s, b.s)
                }
            })
            .collect();
        if g.setting.has_violation() {
            if let Some(&(a, b)) = ps.iter().find(|(a, b)| a.plausible == b.plausible) {
                return Err(Error::Metric(format!(
                    "{} and {} should differ in plausibility",
                    a.video_id, b.video_id
                )));
            }
            let acc: Vec<(f64, f64)> = signed.iter().map(|&(sur, nor)| (nor, sur)).collect();
            accuracy_entries.push(AccuracyEntry { name: g.name(), n: acc.len(), accuracy: accuracy(&acc)? });
            all_violation.extend(acc);
        }
        comparative_entries.push(ComparativeEntry {
            group: g.name(),
            scenario: g.scenario,
            setting: g.setting,
            n: signed.len(),
            comparative: comparative(&signed)?,
        });
    }
    if !all_violation.is_empty() {
        accuracy_entries.push(AccuracyEntry { name: "all".into(), n: all_violation.len(), accuracy: accuracy(&all_violation)? });
    }

    let mut holistic_entries = Vec::new();
    for sc in Scenario::ALL {
        let of = |plausible: bool| -> Vec<f64> {
            scored.iter().filter(|v| v.scenario == sc && v.plausible == plausible).map(|v| v.s).collect()
        };
        let (plus, minus) = (of(false), of(true));
        if plus.is_empty() || minus.is_empty() {
            continue;
        }
        holistic_entries.push(HolisticEntry { scenario: sc, n_s: plus.len(), n_c: minus.len(), holistic: holistic(&plus, &minus)? });
    }

    Ok(MetricReport { comparative: comparative_entries, holistic: holistic_entries, accuracy: accuracy_entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[(0.1, 0.9)]).unwrap(), 1.0);
        assert_eq!(accuracy(&[(0.5, 0.5)]).unwrap(), 0.5);
        assert_eq!(accuracy(&[(0.9, 0.1), (0.1, 0.9)]).unwrap(), 0.5);
        assert!(accuracy(&[]).is_err());
    }

    #[test]
    fn holistic_examples() {
        assert_eq!(holistic(&[2.0, 3.0], &[1.0, 2.5]).unwrap(), 0.75);
        assert_eq!(holistic(&[5.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(holistic(&[1.0], &[1.0]).unwrap(), 0.5);
        assert!(holistic(&[], &[1.0]).is_err());
        assert!(holistic(&[1.0], &[]).is_err());
    }

    #[test]
    fn comparative_examples() {
        assert_eq!(comparative(&[(0.9, 0.1)]).unwrap(), 1.0);
        assert_eq!(comparative(&[(0.3, 0.3), (0.7, 0.1)]).unwrap(), 0.75);
        assert_eq!(comparative(&[(0.0, 0.0); 5]).unwrap(), 0.5);
        assert!(comparative(&[]).is_err());
    }

    #[test]
    fn tie_tolerance_is_relative() {
        assert_eq!(comparative(&[(1000.0, 1000.5)]).unwrap(), 0.5);
        assert_eq!(comparative(&[(1.0, 1.01)]).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_scores() {
        assert!(comparative(&[(f64::NAN, 1.0)]).is_err());
        assert!(holistic(&[f64::INFINITY], &[1.0]).is_err());
        assert!(accuracy(&[(-1.0, 1.0)]).is_err());
    }
}
