//! Singular BIC over a partially ordered set of candidate models.
//!
//! Index convention: `L(i, j)` is the evidence approximation for model `i`
//! when the truth lies in the submodel `j`, so entries exist for `j ⪯ i`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Candidate models with an inclusion order and prior weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPoset {
    names: Vec<String>,
    /// `leq[j][i]` is `j ⪯ i`.
    leq: Vec<Vec<bool>>,
    priors: Vec<f64>,
    topo: Vec<usize>,
}

impl ModelPoset {
    /// Validates the relation (reflexive, antisymmetric, transitive) and the
    /// priors (positive, summing to one within 1e-9; renormalised exactly).
    pub fn new(names: Vec<String>, leq: Vec<Vec<bool>>, priors: Vec<f64>) -> Result<Self> {
        let k = names.len();
        if k == 0 {
            return Err(Error::config("model set is empty"));
        }
        if leq.len() != k || leq.iter().any(|row| row.len() != k) || priors.len() != k {
            return Err(Error::config("order relation and priors must match the number of models"));
        }
        for a in 0..k {
            if !leq[a][a] {
                return Err(Error::config(format!("order is not reflexive at {}", names[a])));
            }
            for b in 0..k {
                if a != b && leq[a][b] && leq[b][a] {
                    return Err(Error::config(format!(
                        "order is not antisymmetric: {} and {}",
                        names[a], names[b]
                    )));
                }
                for c in 0..k {
                    if leq[a][b] && leq[b][c] && !leq[a][c] {
                        return Err(Error::config(format!(
                            "order is not transitive: {} ⪯ {} ⪯ {}",
                            names[a], names[b], names[c]
                        )));
                    }
                }
            }
        }
        if priors.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::config("model priors must be positive"));
        }
        let total: f64 = priors.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("model priors sum to {total}, not 1")));
        }
        let priors = priors.iter().map(|p| p / total).collect();
        let topo = topological_order(&leq, |ready| ready[0]);
        Ok(Self { names, leq, priors, topo })
    }

    /// Nested chain `M_1 ⊂ M_2 ⊂ ... ⊂ M_k` with uniform priors.
    pub fn chain(names: Vec<String>) -> Result<Self> {
        let k = names.len();
        let leq = (0..k).map(|j| (0..k).map(|i| j <= i).collect()).collect();
        Self::new(names, leq, vec![1.0 / k as f64; k])
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    /// `j ⪯ i`
    pub fn leq(&self, j: usize, i: usize) -> bool {
        self.leq[j][i]
    }

    /// Models `j` with `j ⪯ i`, including `i`.
    pub fn below(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&j| self.leq[j][i])
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    /// A topological order where ties are broken by `pick`, which receives
    /// the currently ready models in increasing index order.
    pub fn topological_order_by(&self, pick: impl FnMut(&[usize]) -> usize) -> Vec<usize> {
        topological_order(&self.leq, pick)
    }
}

fn topological_order(leq: &[Vec<bool>], mut pick: impl FnMut(&[usize]) -> usize) -> Vec<usize> {
    let k = leq.len();
    let mut done = vec![false; k];
    let mut order = Vec::with_capacity(k);
    while order.len() < k {
        let ready: Vec<usize> = (0..k)
            .filter(|&i| !done[i] && (0..k).all(|j| j == i || !leq[j][i] || done[j]))
            .collect();
        let next = pick(&ready);
        done[next] = true;
        order.push(next);
    }
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvidenceEntry {
    pub log_max_lik: f64,
    pub lambda: f64,
    pub mult: u32,
}

/// `log L(i, j) = loglik_i - lambda(i, j) log n + (mult(i, j) - 1) log log n`
#[derive(Debug, Clone, PartialEq)]
pub struct LogEvidenceTable {
    n: usize,
    entries: BTreeMap<(usize, usize), EvidenceEntry>,
}

impl LogEvidenceTable {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::config("sample size must be at least 2"));
        }
        Ok(Self { n, entries: BTreeMap::new() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn insert(&mut self, i: usize, j: usize, entry: EvidenceEntry) -> Result<()> {
        if !entry.log_max_lik.is_finite() {
            return Err(Error::data(format!("log max-likelihood of model {i} is not finite")));
        }
        if !(entry.lambda >= 0.0 && entry.lambda.is_finite()) {
            return Err(Error::data(format!("lambda({i}, {j}) = {} is not a nonnegative number", entry.lambda)));
        }
        if entry.mult == 0 {
            return Err(Error::data(format!("multiplicity({i}, {j}) must be at least 1")));
        }
        self.entries.insert((i, j), entry);
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&EvidenceEntry> {
        self.entries.get(&(i, j))
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, &EvidenceEntry)> {
        self.entries.iter().map(|(&(i, j), e)| (i, j, e))
    }

    pub fn log_l(&self, i: usize, j: usize) -> Option<f64> {
        let ln_n = (self.n as f64).ln();
        self.get(i, j)
            .map(|e| e.log_max_lik - e.lambda * ln_n + (e.mult as f64 - 1.0) * ln_n.ln())
    }

    /// Errors with the full list of `(i, j)` pairs, 1-based, that `poset`
    /// needs but the table lacks.
    pub fn check_covers(&self, poset: &ModelPoset) -> Result<()> {
        let missing: Vec<String> = (0..poset.len())
            .flat_map(|i| poset.below(i).map(move |j| (i, j)))
            .filter(|&(i, j)| self.get(i, j).is_none())
            .map(|(i, j)| format!("({}, {})", i + 1, j + 1))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::data(format!("evidence table lacks entries {}", missing.join(", "))))
        }
    }

    /// CSV with columns `i, j, log_max_lik_i, lambda_ij, mult_ij`, 1-based
    /// indices. The sample size goes in a leading `# n = ...` comment.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# n = {}", self.n)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "j", "log_max_lik_i", "lambda_ij", "mult_ij"]).map_err(csv_err)?;
        for (i, j, e) in self.entries() {
            w.write_record([
                (i + 1).to_string(),
                (j + 1).to_string(),
                e.log_max_lik.to_string(),
                e.lambda.to_string(),
                e.mult.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(mut input: R) -> Result<Self> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        let n = text
            .lines()
            .filter_map(|l| l.strip_prefix('#'))
            .find_map(|l| l.trim().strip_prefix("n =").map(|v| v.trim().parse::<usize>()))
            .ok_or_else(|| Error::data("evidence table lacks a '# n = <size>' line"))?
            .map_err(|e| Error::data(format!("bad sample size: {e}")))?;
        let mut table = Self::new(n)?;
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        for row in reader.deserialize::<(usize, usize, f64, f64, u32)>() {
            let (i, j, log_max_lik, lambda, mult) = row.map_err(csv_err)?;
            if i == 0 || j == 0 {
                return Err(Error::data("model indices are 1-based"));
            }
            table.insert(i - 1, j - 1, EvidenceEntry { log_max_lik, lambda, mult })?;
        }
        Ok(table)
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::data(format!("csv: {e}"))
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `log S(M_i)` for every model, solving the fixed-point system one model at
/// a time in topological order.
pub fn solve_sbic(poset: &ModelPoset, table: &LogEvidenceTable) -> Result<Vec<f64>> {
    solve_sbic_in_order(poset, table, poset.topological_order())
}

/// As [`solve_sbic`] with an explicit topological order.
pub fn solve_sbic_in_order(poset: &ModelPoset, table: &LogEvidenceTable, order: &[usize]) -> Result<Vec<f64>> {
    table.check_covers(poset)?;
    let k = poset.len();
    let mut log_s = vec![f64::NAN; k];
    let log_p: Vec<f64> = poset.priors().iter().map(|p| p.ln()).collect();
    for &i in order {
        let log_lii = table.log_l(i, i).expect("covered");
        let preds: Vec<usize> = poset.below(i).filter(|&j| j != i).collect();
        if preds.is_empty() {
            log_s[i] = log_lii;
            continue;
        }
        if preds.iter().any(|&j| log_s[j].is_nan()) {
            return Err(Error::config("order is not topological"));
        }
        // p S^2 + (A - B) S - C = 0 with A = sum p_j S_j, B = p L_ii,
        // C = sum L_ij p_j S_j; solved for s = S exp(-kappa)
        let log_a = log_sum_exp(preds.iter().map(|&j| log_p[j] + log_s[j]));
        let log_b = log_p[i] + log_lii;
        let log_c = log_sum_exp(preds.iter().map(|&j| table.log_l(i, j).expect("covered") + log_p[j] + log_s[j]));
        let kappa = log_a.max(log_b).max(0.5 * (log_c - log_p[i]));
        let a = poset.priors()[i];
        let b = (log_a - kappa).exp() - (log_b - kappa).exp();
        let c = -(log_c - 2.0 * kappa).exp();
        let disc = b * b - 4.0 * a * c;
        if !(disc >= -1e-12) {
            return Err(Error::numeric(format!("negative discriminant {disc} for model {}", poset.names()[i])));
        }
        let root_disc = disc.max(0.0).sqrt();
        // the constant term is negative, so exactly one root is positive;
        // its log is formed from log C directly because c may underflow
        let log_root = if b <= 0.0 {
            let s = (-b + root_disc) / (2.0 * a);
            if s > 0.0 {
                s.ln()
            } else {
                0.5 * (log_c - 2.0 * kappa - a.ln())
            }
        } else {
            std::f64::consts::LN_2 + log_c - 2.0 * kappa - (b + root_disc).ln()
        };
        if !log_root.is_finite() {
            return Err(Error::numeric(format!("no positive root for model {}", poset.names()[i])));
        }
        log_s[i] = kappa + log_root;
    }
    Ok(log_s)
}

/// `log S_i - log(sum_j L_ij p_j S_j / sum_j p_j S_j)` for every model.
pub fn sbic_residuals(poset: &ModelPoset, table: &LogEvidenceTable, log_s: &[f64]) -> Vec<f64> {
    (0..poset.len())
        .map(|i| {
            let w: Vec<(usize, f64)> =
                poset.below(i).map(|j| (j, poset.priors()[j].ln() + log_s[j])).collect();
            let num = log_sum_exp(w.iter().map(|&(j, lw)| lw + table.log_l(i, j).unwrap_or(f64::NAN)));
            let den = log_sum_exp(w.iter().map(|&(_, lw)| lw));
            log_s[i] - (num - den)
        })
        .collect()
}

/// `loglik - d/2 log n`
pub fn bic(max_loglik: f64, dim: usize, n: usize) -> f64 {
    max_loglik - 0.5 * dim as f64 * (n as f64).ln()
}

/// Learning coefficients `lambda(i, j)` for `j ⪯ i`, 0-based indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RlctTable {
    values: BTreeMap<(usize, usize), f64>,
}

impl RlctTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_fn(poset: &ModelPoset, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut table = Self::new();
        for i in 0..poset.len() {
            for j in poset.below(i) {
                table.insert(i, j, f(i, j));
            }
        }
        table
    }

    pub fn insert(&mut self, i: usize, j: usize, lambda: f64) {
        self.values.insert((i, j), lambda);
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values.get(&(i, j)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.values.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    /// Triples `(i_small, i, j)` with `i_small ≺ i` and
    /// `lambda(i_small, j) > lambda(i, j)`: a larger model estimated simpler.
    pub fn monotonicity_violations(&self, poset: &ModelPoset) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for i in 0..poset.len() {
            for small in poset.below(i).filter(|&s| s != i) {
                for j in poset.below(small) {
                    if let (Some(a), Some(b)) = (self.get(small, j), self.get(i, j)) {
                        if a > b {
                            out.push((small, i, j));
                        }
                    }
                }
            }
        }
        out
    }

    /// CSV with columns `i, j, lambda`, 1-based indices.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let mut table = Self::new();
        for row in reader.deserialize::<(usize, usize, f64)>() {
            let (i, j, lambda) = row.map_err(csv_err)?;
            if i == 0 || j == 0 {
                return Err(Error::data("model indices are 1-based"));
            }
            table.insert(i - 1, j - 1, lambda);
        }
        Ok(table)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "j", "lambda"]).map_err(csv_err)?;
        for (i, j, v) in self.iter() {
            w.write_record([(i + 1).to_string(), (j + 1).to_string(), v.to_string()]).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds `log L_hat(i, j) = loglik_i - lambda(i, j) log n` with unit
/// multiplicities. Monotonicity violations are returned as warnings, or
/// fail the call when `strict` is set.
pub fn assemble_wsbic_table(
    poset: &ModelPoset,
    max_logliks: &[f64],
    lambdas: &RlctTable,
    n: usize,
    strict: bool,
) -> Result<(LogEvidenceTable, Vec<String>)> {
    if max_logliks.len() != poset.len() {
        return Err(Error::config("one maximum log-likelihood per model required"));
    }
    let mut missing = Vec::new();
    let mut table = LogEvidenceTable::new(n)?;
    for i in 0..poset.len() {
        for j in poset.below(i) {
            match lambdas.get(i, j) {
                Some(lambda) => {
                    if !(lambda > 0.0) {
                        return Err(Error::data(format!("lambda({}, {}) = {lambda} is not positive", i + 1, j + 1)));
                    }
                    table.insert(i, j, EvidenceEntry { log_max_lik: max_logliks[i], lambda, mult: 1 })?;
                }
                None => missing.push(format!("({}, {})", i + 1, j + 1)),
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::data(format!("learning-coefficient table lacks entries {}", missing.join(", "))));
    }
    let warnings: Vec<String> = lambdas
        .monotonicity_violations(poset)
        .into_iter()
        .map(|(s, i, j)| {
            format!(
                "lambda({}, {}) = {} exceeds lambda({}, {}) = {} although model {} is nested in model {}; consider re-estimating",
                s + 1,
                j + 1,
                lambdas.get(s, j).unwrap(),
                i + 1,
                j + 1,
                lambdas.get(i, j).unwrap(),
                s + 1,
                i + 1
            )
        })
        .collect();
    if strict && !warnings.is_empty() {
        return Err(Error::numeric(warnings.join("\n")));
    }
    Ok((table, warnings))
}

/// Softmax of `score + log prior`; a score of `-inf` gets probability zero.
pub fn posterior_model_probs(scores: &[f64], priors: &[f64]) -> Result<Vec<f64>> {
    if scores.len() != priors.len() {
        return Err(Error::config("scores and priors differ in length"));
    }
    if scores.iter().any(|s| s.is_nan() || *s == f64::INFINITY) {
        return Err(Error::numeric("scores must be finite or -inf"));
    }
    let logits: Vec<f64> = scores.iter().zip(priors).map(|(s, p)| s + p.ln()).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::numeric("every model has score -inf"));
    }
    let w: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.iter().map(|x| x / total).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Criterion {
    pub name: String,
    pub scores: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Criterion {
    pub fn new(name: &str, scores: Vec<f64>, priors: &[f64]) -> Result<Self> {
        let probs = posterior_model_probs(&scores, priors)?;
        Ok(Self { name: name.to_string(), scores, probs })
    }

    /// Index of the most probable model; the smaller index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = k;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub models: Vec<String>,
    pub criteria: Vec<Criterion>,
    pub warnings: Vec<String>,
}

impl SelectionResult {
    pub fn criterion(&self, name: &str) -> Option<&Criterion> {
        self.criteria.iter().find(|c| c.name == name)
    }

    /// Long-format CSV: `criterion, model, score, probability`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["criterion", "model", "score", "probability"]).map_err(csv_err)?;
        for c in &self.criteria {
            for (k, name) in self.models.iter().enumerate() {
                w.write_record([c.name.clone(), name.clone(), c.scores[k].to_string(), c.probs[k].to_string()])
                    .map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
