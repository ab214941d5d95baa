//! Climate-variability subgroups: tertile binning, apriori enumeration,
//! divergence and Shapley attribution of items.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use ndarray::{Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::welch_ttest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bin {
    L,
    M,
    H,
}

impl Bin {
    pub const ALL: [Bin; 3] = [Bin::L, Bin::M, Bin::H];
}

impl fmt::Display for Bin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bin::L => "L",
            Bin::M => "M",
            Bin::H => "H",
        })
    }
}

/// Linear-interpolated quantile of sorted data (numpy's default rule).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// L/M/H by the 1/3 and 2/3 quantiles; a value equal to a boundary goes to
/// the lower bin.
pub fn tertile_bins(values: &[f64]) -> Result<Vec<Bin>> {
    if values.len() < 3 {
        return Err(Error::InvalidArgument(format!("tertile binning needs at least 3 samples, got {}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite value in tertile binning".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 1.0 / 3.0);
    let q2 = quantile_sorted(&sorted, 2.0 / 3.0);
    Ok(values
        .iter()
        .map(|v| {
            if *v <= q1 {
                Bin::L
            } else if *v <= q2 {
                Bin::M
            } else {
                Bin::H
            }
        })
        .collect())
}

/// Population standard deviation of one variable over a whole `T x T1 x C1`
/// climate window set.
pub fn window_std(windows: &Array3<f32>, var: usize) -> f64 {
    let v = windows.index_axis(Axis(2), var);
    let n = v.len() as f64;
    let mean = v.iter().map(|x| *x as f64).sum::<f64>() / n;
    (v.iter().map(|x| (*x as f64 - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Per-sample variability bins of variable `var` over raw climate windows.
pub fn variability_bins(windows: &[&Array3<f32>], var: usize) -> Result<Vec<Bin>> {
    if let Some(w) = windows.iter().find(|w| var >= w.dim().2) {
        return Err(Error::InvalidArgument(format!("variable index {var} out of range for {} variables", w.dim().2)));
    }
    let stds: Vec<f64> = windows.iter().map(|w| window_std(w, var)).collect();
    tertile_bins(&stds)
}

/// One attribute-value: the variability bin of one climate variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Item {
    pub var: usize,
    pub bin: Bin,
}

pub fn format_items(items: &[Item], names: &[String]) -> String {
    if items.is_empty() {
        return "(all)".into();
    }
    items
        .iter()
        .map(|i| format!("{}={}", names.get(i.var).map(String::as_str).unwrap_or("?"), i.bin))
        .collect::<Vec<_>>()
        .join(" & ")
}

/// A conjunction of items (sorted, at most one per variable) and the
/// indices of the samples it covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subgroup {
    pub items: Vec<Item>,
    pub support: f64,
    pub members: Vec<usize>,
}

/// Sample indices matching every item; `labels[s][var]` is the bin of
/// sample `s`.
pub fn members_of(labels: &[Vec<Bin>], items: &[Item]) -> Vec<usize> {
    (0..labels.len())
        .filter(|&s| items.iter().all(|i| labels[s][i.var] == i.bin))
        .collect()
}

fn intersect(a: &[usize], b: &[usize]) -> Vec<usize> {
    let (mut i, mut j, mut out) = (0, 0, Vec::new());
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// All itemsets with support at least `theta`, by apriori level-wise
/// search. Output order: by size, then lexicographic; the empty itemset
/// comes first.
pub fn enumerate_subgroups(labels: &[Vec<Bin>], theta: f64) -> Result<Vec<Subgroup>> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidArgument(format!("minimum support must be in (0, 1], got {theta}")));
    }
    let n = labels.len();
    if n == 0 {
        return Err(Error::InvalidArgument("no samples to enumerate".into()));
    }
    let vars = labels[0].len();
    if labels.iter().any(|l| l.len() != vars) {
        return Err(Error::Shape("samples carry different numbers of variables".into()));
    }
    let frequent = |members: &Vec<usize>| members.len() as f64 / n as f64 >= theta - 1e-12;
    let mut out = vec![Subgroup {
        items: Vec::new(),
        support: 1.0,
        members: (0..n).collect(),
    }];
    let mut level: Vec<Subgroup> = Vec::new();
    for var in 0..vars {
        for bin in Bin::ALL {
            let items = vec![Item { var, bin }];
            let members = members_of(labels, &items);
            if frequent(&members) {
                level.push(Subgroup {
                    support: members.len() as f64 / n as f64,
                    items,
                    members,
                });
            }
        }
    }
    while !level.is_empty() {
        out.extend(level.iter().cloned());
        let known: std::collections::HashSet<&[Item]> = level.iter().map(|s| s.items.as_slice()).collect();
        let mut next = Vec::new();
        for (ai, a) in level.iter().enumerate() {
            for b in &level[ai + 1..] {
                let k = a.items.len();
                if a.items[..k - 1] != b.items[..k - 1] {
                    continue;
                }
                let (la, lb) = (a.items[k - 1], b.items[k - 1]);
                if la.var >= lb.var {
                    continue;
                }
                let mut items = a.items.clone();
                items.push(lb);
                // Every k-subset must itself be frequent.
                let closed = (0..items.len()).all(|drop| {
                    let sub: Vec<Item> = items.iter().enumerate().filter(|(j, _)| *j != drop).map(|(_, i)| *i).collect();
                    known.contains(sub.as_slice())
                });
                if !closed {
                    continue;
                }
                let members = intersect(&a.members, &b.members);
                if frequent(&members) {
                    next.push(Subgroup {
                        support: members.len() as f64 / n as f64,
                        items,
                        members,
                    });
                }
            }
        }
        next.sort_by(|x, y| x.items.cmp(&y.items));
        level = next;
    }
    Ok(out)
}

/// `m(S) - m(D)`; `None` when the metric is undefined on either set.
pub fn divergence<F>(metric: &F, members: &[usize], n: usize) -> Option<f64>
where
    F: Fn(&[usize]) -> Option<f64>,
{
    let all: Vec<usize> = (0..n).collect();
    if members == all.as_slice() {
        return Some(0.0);
    }
    Some(metric(members)? - metric(&all)?)
}

/// Exact Shapley values of the items of one itemset under value function
/// `v` (called on sorted sub-itemsets); `v(empty)` is taken as 0.
pub fn shapley_items<V>(items: &[Item], mut v: V) -> Vec<f64>
where
    V: FnMut(&[Item]) -> f64,
{
    let n = items.len();
    assert!(n <= 16, "exact Shapley over {n} items is not supported");
    let mut value = vec![0.0; 1 << n];
    for (mask, slot) in value.iter_mut().enumerate().skip(1) {
        let sub: Vec<Item> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| items[i]).collect();
        *slot = v(&sub);
    }
    let fact: Vec<f64> = (0..=n).scan(1.0, |acc, k| {
        let out = *acc;
        *acc *= (k + 1) as f64;
        Some(out)
    }).collect();
    (0..n)
        .map(|i| {
            let mut phi = 0.0;
            for mask in 0..(1usize << n) {
                if mask >> i & 1 == 1 {
                    continue;
                }
                let s = mask.count_ones() as usize;
                let w = fact[s] * fact[n - s - 1] / fact[n];
                phi += w * (value[mask | 1 << i] - value[mask]);
            }
            phi
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapleyAggregation {
    /// Plain mean over the itemsets containing the item.
    #[default]
    Mean,
    /// Mean weighted by itemset support.
    SupportWeighted,
}

/// A subgroup with its divergence, per-item Shapley values and optional
/// Welch test against its complement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSubgroup {
    pub subgroup: Subgroup,
    pub divergence: Option<f64>,
    /// Aligned with `subgroup.items`; empty when the divergence is undefined.
    pub shapley: Vec<f64>,
    /// Welch p-value of member vs non-member per-sample scores.
    pub welch_p: Option<f64>,
}

/// Scores every subgroup. `metric` is the pooled metric over a member set;
/// `per_sample` (if given) feeds the Welch test.
pub fn score_subgroups<F>(
    labels: &[Vec<Bin>],
    subgroups: &[Subgroup],
    metric: F,
    per_sample: Option<&[f64]>,
) -> Vec<ScoredSubgroup>
where
    F: Fn(&[usize]) -> Option<f64>,
{
    let n = labels.len();
    let mut cache: HashMap<Vec<Item>, Option<f64>> = HashMap::new();
    let mut div = |items: &[Item]| -> Option<f64> {
        if let Some(v) = cache.get(items) {
            return *v;
        }
        let d = divergence(&metric, &members_of(labels, items), n);
        cache.insert(items.to_vec(), d);
        d
    };
    subgroups
        .iter()
        .map(|sg| {
            let d = div(&sg.items);
            let shapley = match d {
                Some(_) => {
                    let mut undefined = false;
                    let phi = shapley_items(&sg.items, |sub| {
                        div(sub).unwrap_or_else(|| {
                            undefined = true;
                            0.0
                        })
                    });
                    if undefined {
                        Vec::new()
                    } else {
                        phi
                    }
                }
                None => Vec::new(),
            };
            let welch_p = per_sample.and_then(|scores| {
                let inside: Vec<f64> = sg.members.iter().map(|&s| scores[s]).collect();
                let mut is_member = vec![false; n];
                for &s in &sg.members {
                    is_member[s] = true;
                }
                let outside: Vec<f64> = (0..n).filter(|s| !is_member[*s]).map(|s| scores[s]).collect();
                welch_ttest(&inside, &outside).ok().map(|r| r.p)
            });
            ScoredSubgroup {
                subgroup: sg.clone(),
                divergence: d,
                shapley,
                welch_p,
            }
        })
        .collect()
}

/// Keeps subgroups whose Welch p-value is below `alpha`. The full dataset
/// and subgroups without a test are kept.
pub fn welch_filter(scored: Vec<ScoredSubgroup>, alpha: f64) -> Vec<ScoredSubgroup> {
    scored
        .into_iter()
        .filter(|s| s.subgroup.items.is_empty() || s.welch_p.is_none_or(|p| p < alpha))
        .collect()
}

/// Aggregated Shapley value of every item over the scored itemsets that
/// contain it. Items that never occur are absent from the map.
pub fn global_shapley(scored: &[ScoredSubgroup], aggregation: ShapleyAggregation) -> BTreeMap<Item, f64> {
    let mut acc: BTreeMap<Item, (f64, f64)> = BTreeMap::new();
    for s in scored {
        if s.shapley.len() != s.subgroup.items.len() {
            continue;
        }
        let w = match aggregation {
            ShapleyAggregation::Mean => 1.0,
            ShapleyAggregation::SupportWeighted => s.subgroup.support,
        };
        for (item, phi) in s.subgroup.items.iter().zip(&s.shapley) {
            let e = acc.entry(*item).or_insert((0.0, 0.0));
            e.0 += w * phi;
            e.1 += w;
        }
    }
    acc.into_iter()
        .filter(|(_, (_, w))| *w > 0.0)
        .map(|(k, (s, w))| (k, s / w))
        .collect()
}

/// The `k` most positive and `k` most negative divergences among non-empty
/// itemsets, best first in each list.
pub fn most_and_least_divergent(scored: &[ScoredSubgroup], k: usize) -> (Vec<&ScoredSubgroup>, Vec<&ScoredSubgroup>) {
    let mut ranked: Vec<&ScoredSubgroup> = scored
        .iter()
        .filter(|s| !s.subgroup.items.is_empty() && s.divergence.is_some())
        .collect();
    ranked.sort_by(|a, b| {
        b.divergence
            .unwrap()
            .total_cmp(&a.divergence.unwrap())
            .then_with(|| a.subgroup.items.cmp(&b.subgroup.items))
    });
    let most = ranked.iter().take(k).copied().collect();
    let least = ranked.iter().rev().take(k).copied().collect();
    (most, least)
}
