//! Survival loss and evaluation metrics.
//!
//! Conventions:
//! - hazards are per-bin conditional event probabilities `h_b ∈ (0, 1)`;
//! - a pair `(i, j)` is comparable iff `time_i < time_j` and `i` had an
//!   event (Harrell); risk ties count one half;
//! - the median split uses the lower-middle order statistic and sends
//!   `risk <= median` to the low-risk group.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Lower bound applied inside the logarithms of [`discrete_nll`].
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalRecord {
    pub time: f64,
    pub event: bool,
    pub bin: usize,
}

impl SurvivalRecord {
    pub fn new(time: f64, event: bool) -> Self {
        Self {
            time,
            event,
            bin: 0,
        }
    }
}

/// Interior cut points splitting the uncensored times into `bins` groups of
/// (roughly) equal size; nearest-rank quantiles.
pub fn bin_edges(records: &[SurvivalRecord], bins: usize) -> Result<Vec<f64>> {
    if bins < 2 {
        return Err(Error::Parameter {
            name: "bins",
            value: bins as f64,
        });
    }
    let mut times: Vec<f64> = records.iter().filter(|r| r.event).map(|r| r.time).collect();
    if times.is_empty() {
        times = records.iter().map(|r| r.time).collect();
    }
    if times.is_empty() {
        return Err(Error::UndefinedMetric("bin edges of an empty record set"));
    }
    times.sort_by(f64::total_cmp);
    let m = times.len();
    Ok((1..bins)
        .map(|k| times[(k * m / bins).min(m - 1)])
        .collect())
}

/// Bin index of `time`: the number of edges at or below it.
pub fn assign_bin(time: f64, edges: &[f64]) -> usize {
    edges.partition_point(|e| *e <= time)
}

pub fn assign_bins(records: &mut [SurvivalRecord], edges: &[f64]) {
    for r in records {
        r.bin = assign_bin(r.time, edges);
    }
}

/// Censored discrete-time negative log-likelihood, averaged over the batch.
///
/// For an event in bin `b`: `-log h_b - Σ_{k<b} log(1 - h_k)`; for a
/// censoring in bin `b`: `-Σ_{k≤b} log(1 - h_k)`.
pub fn discrete_nll(g: &mut Graph, hazards: Var, records: &[SurvivalRecord]) -> Result<Var> {
    let (n, bins) = g.value(hazards).dims2("discrete_nll")?;
    if n != records.len() {
        return Err(Error::Dimension {
            op: "discrete_nll",
            left: vec![n, bins],
            right: vec![records.len()],
        });
    }
    let mut event_mask = vec![0.0; n * bins];
    let mut survive_mask = vec![0.0; n * bins];
    for (i, r) in records.iter().enumerate() {
        if r.bin >= bins {
            return Err(Error::Parameter {
                name: "bin",
                value: r.bin as f64,
            });
        }
        for k in 0..r.bin {
            survive_mask[i * bins + k] = 1.0;
        }
        if r.event {
            event_mask[i * bins + r.bin] = 1.0;
        } else {
            survive_mask[i * bins + r.bin] = 1.0;
        }
    }
    let event_mask = g.constant(Tensor::matrix(n, bins, event_mask)?);
    let survive_mask = g.constant(Tensor::matrix(n, bins, survive_mask)?);
    let log_h = g.log_floored(hazards, LOG_FLOOR);
    let neg_h = g.neg(hazards);
    let one_minus = g.add_scalar(neg_h, 1.0);
    let log_s = g.log_floored(one_minus, LOG_FLOOR);
    let a = g.mul(event_mask, log_h)?;
    let b = g.mul(survive_mask, log_s)?;
    let ll = g.add(a, b)?;
    let total = g.sum(ll);
    Ok(g.mul_scalar(total, -1.0 / n as f64))
}

/// Negative expected number of survived bins: `-Σ_b Π_{k≤b}(1 - h_k)`.
/// Higher means worse prognosis.
pub fn risk_score(hazards: &[f64]) -> f64 {
    let mut surv = 1.0;
    let mut total = 0.0;
    for h in hazards {
        surv *= 1.0 - h;
        total += surv;
    }
    -total
}

/// Harrell's concordance index.
///
/// Runs in `O(n log n)`: subjects are visited in decreasing time order while
/// a Fenwick tree over risk ranks counts, for each event, how many strictly
/// later subjects have lower or equal risk.
pub fn concordance_index(risks: &[f64], records: &[SurvivalRecord]) -> Result<f64> {
    let n = risks.len();
    if n != records.len() {
        return Err(Error::Dimension {
            op: "concordance_index",
            left: vec![n],
            right: vec![records.len()],
        });
    }
    if risks.iter().any(|r| !r.is_finite()) {
        return Err(Error::Numeric("non-finite risk score".into()));
    }
    // Dense ranks of risks (ties share a rank).
    let mut sorted: Vec<f64> = risks.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let rank = |r: f64| sorted.partition_point(|s| *s < r);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| records[b].time.total_cmp(&records[a].time));

    let mut tree = Fenwick::new(sorted.len());
    let mut inserted = 0u64;
    let (mut concordant, mut tied, mut comparable) = (0u64, 0u64, 0u64);
    let mut start = 0;
    while start < n {
        let t = records[order[start]].time;
        let mut end = start;
        while end < n && records[order[end]].time == t {
            end += 1;
        }
        for &i in &order[start..end] {
            if records[i].event {
                let r = rank(risks[i]);
                let below = tree.prefix(r);
                let at = tree.prefix(r + 1) - below;
                concordant += below;
                tied += at;
                comparable += inserted;
            }
        }
        for &i in &order[start..end] {
            tree.add(rank(risks[i]));
            inserted += 1;
        }
        start = end;
    }
    if comparable == 0 {
        return Err(Error::UndefinedMetric("no comparable pairs"));
    }
    Ok((2 * concordant + tied) as f64 / (2 * comparable) as f64)
}

struct Fenwick {
    tree: Vec<u64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Self {
            tree: vec![0; n + 1],
        }
    }

    fn add(&mut self, idx: usize) {
        let mut i = idx + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted ranks `< idx`.
    fn prefix(&self, idx: usize) -> u64 {
        let mut i = idx;
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Product-limit survival curve with one step per distinct event time.
#[derive(Debug, Clone, PartialEq)]
pub struct KmCurve {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub deaths: Vec<usize>,
}

impl KmCurve {
    /// `S(t)`: the survival value of the last step at or before `t`.
    pub fn survival_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|s| *s <= t);
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }
}

/// Kaplan–Meier estimator. Subjects censored at an event time stay in that
/// time's risk set.
pub fn km_estimator(records: &[SurvivalRecord]) -> Result<KmCurve> {
    if records.is_empty() {
        return Err(Error::UndefinedMetric("Kaplan-Meier of an empty group"));
    }
    let mut sorted: Vec<&SurvivalRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut curve = KmCurve {
        times: Vec::new(),
        survival: Vec::new(),
        at_risk: Vec::new(),
        deaths: Vec::new(),
    };
    // Between censorings the product telescopes to a single ratio, so each
    // censor-free run is evaluated as `base · survivors / run_start`. With no
    // censoring this is exactly the empirical fraction.
    let mut at_risk = sorted.len();
    let mut base = 1.0;
    let mut run_start = at_risk;
    let mut surv = 1.0;
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].time;
        let mut j = i;
        let mut deaths = 0;
        while j < sorted.len() && sorted[j].time == t {
            if sorted[j].event {
                deaths += 1;
            }
            j += 1;
        }
        if deaths > 0 {
            surv = base * (at_risk - deaths) as f64 / run_start as f64;
            curve.times.push(t);
            curve.survival.push(surv);
            curve.at_risk.push(at_risk);
            curve.deaths.push(deaths);
        }
        let censored = j - i - deaths;
        at_risk -= j - i;
        if censored > 0 {
            base = surv;
            run_start = at_risk;
        }
        i = j;
    }
    Ok(curve)
}

/// Splits indices at the median risk (lower-middle order statistic for even
/// `n`); `risk <= median` goes to the low-risk group.
pub fn median_risk_split(risks: &[f64]) -> Result<(Vec<usize>, Vec<usize>)> {
    if risks.len() < 2 {
        return Err(Error::Parameter {
            name: "n",
            value: risks.len() as f64,
        });
    }
    let mut sorted = risks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[(sorted.len() - 1) / 2];
    let (low, high) = (0..risks.len()).partition(|&i| risks[i] <= median);
    Ok((low, high))
}
