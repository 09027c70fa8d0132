//! Robustness and efficiency metrics over repeated runs.
//!
//! All arithmetic is exact. The percentile is nearest-rank (1-based index
//! `ceil(q/100 * N)`, no interpolation) and CVaR is the mean of the
//! `max(1, ceil(alpha * N))` smallest samples.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use num_traits::ToPrimitive;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CoreError, Result};
use crate::llm::TokenUsage;
use crate::model::{Category, Mode, RunRecord};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSet {
    pub program_id: String,
    samples: Vec<Rational>,
}

impl SampleSet {
    pub fn new(program_id: impl Into<String>, samples: Vec<Rational>) -> Result<Self> {
        if samples.is_empty() {
            return Err(CoreError::EmptySamples);
        }
        if let Some(bad) = samples.iter().find(|s| !s.in_unit_interval()) {
            return Err(CoreError::SampleOutOfRange(bad.to_string()));
        }
        Ok(Self { program_id: program_id.into(), samples })
    }

    pub fn samples(&self) -> &[Rational] {
        &self.samples
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    fn sorted(&self) -> Vec<Rational> {
        let mut v = self.samples.clone();
        v.sort();
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub alpha: Rational,
    pub percentile_q: Rational,
    pub n_runs: u32,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { alpha: Rational::new(1, 10).expect("nonzero"), percentile_q: Rational::from_integer(5), n_runs: 1 }
    }
}

impl MetricsConfig {
    /// CSV column for the configured alpha, e.g. `CVAR_0_1`.
    pub fn cvar_column(&self) -> String {
        let mut text = self.alpha.to_decimal(6);
        while text.ends_with('0') {
            text.pop();
        }
        if text.ends_with('.') {
            text.pop();
        }
        format!("CVAR_{}", text.replace('.', "_"))
    }
}

fn check_alpha(alpha: &Rational) -> Result<()> {
    if alpha.is_negative() || alpha.is_zero() || !alpha.in_unit_interval() {
        return Err(CoreError::InvalidAlpha(alpha.to_string()));
    }
    Ok(())
}

fn index_from(value: Rational, n: usize) -> usize {
    let k = value.ceil_integer().to_usize().unwrap_or(usize::MAX);
    k.clamp(1, n)
}

/// `(1/N) * #successful`.
pub fn success_rate(successes: &[bool]) -> Result<Rational> {
    if successes.is_empty() {
        return Err(CoreError::EmptySamples);
    }
    let ok = successes.iter().filter(|s| **s).count() as u64;
    Ok(Rational::ratio(ok, successes.len() as u64))
}

/// Unweighted mean of per-program values.
pub fn mean(values: &[Rational]) -> Result<Rational> {
    if values.is_empty() {
        return Err(CoreError::EmptySamples);
    }
    let sum: Rational = values.iter().sum();
    Ok(sum / Rational::from_u64(values.len() as u64))
}

/// Nearest-rank percentile: the element at 1-based index `ceil(q/100 * N)`
/// of the ascending samples (index clamped to `[1, N]`).
pub fn percentile(samples: &SampleSet, q: &Rational) -> Result<Rational> {
    if q.is_negative() || *q > 100 {
        return Err(CoreError::InvalidPercentile(q.to_string()));
    }
    let n = samples.n();
    let sorted = samples.sorted();
    let rank = index_from(q / &Rational::from_integer(100) * Rational::from_u64(n as u64), n);
    Ok(sorted[rank - 1].clone())
}

pub fn p5_ca(samples: &SampleSet, q: &Rational) -> Result<Rational> {
    percentile(samples, q)
}

/// Mean of the `max(1, ceil(alpha * N))` smallest samples.
pub fn cvar(samples: &SampleSet, alpha: &Rational) -> Result<Rational> {
    check_alpha(alpha)?;
    let n = samples.n();
    let k = index_from(alpha * &Rational::from_u64(n as u64), n);
    let sorted = samples.sorted();
    mean(&sorted[..k])
}

/// A per-success quantity, undefined when a group has no successful run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PerSuccess {
    Value(Rational),
    Undefined,
}

pub const UNDEFINED: &str = "UNDEFINED";

impl PerSuccess {
    pub fn value(&self) -> Option<&Rational> {
        match self {
            PerSuccess::Value(v) => Some(v),
            PerSuccess::Undefined => None,
        }
    }

    pub fn to_decimal(&self, places: u32) -> String {
        match self {
            PerSuccess::Value(v) => v.to_decimal(places),
            PerSuccess::Undefined => UNDEFINED.to_string(),
        }
    }
}

impl Serialize for PerSuccess {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        match self {
            PerSuccess::Value(v) => v.serialize(s),
            PerSuccess::Undefined => s.serialize_str(UNDEFINED),
        }
    }
}

impl<'de> Deserialize<'de> for PerSuccess {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == UNDEFINED {
            Ok(PerSuccess::Undefined)
        } else {
            Rational::parse(&s).map(PerSuccess::Value).map_err(serde::de::Error::custom)
        }
    }
}

/// Token spend of one run, with its success verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCost {
    pub model_id: String,
    pub usage: TokenUsage,
    pub successful: bool,
}

/// Tokens of every run in the group, failed runs included, divided by the
/// number of successful runs.
pub fn tokens_per_success(runs: &[RunCost]) -> PerSuccess {
    let successes = runs.iter().filter(|r| r.successful).count() as u64;
    if successes == 0 {
        return PerSuccess::Undefined;
    }
    let total: u64 = runs.iter().map(|r| r.usage.total()).sum();
    PerSuccess::Value(Rational::ratio(total, successes))
}

/// Price per token, in currency units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Price {
    pub prompt: Rational,
    pub completion: Rational,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceTable(pub BTreeMap<String, Price>);

impl PriceTable {
    pub fn insert(&mut self, model_id: impl Into<String>, price: Price) {
        self.0.insert(model_id.into(), price);
    }

    pub fn get(&self, model_id: &str) -> Result<&Price> {
        self.0.get(model_id).ok_or_else(|| CoreError::MissingPrice(model_id.to_string()))
    }

    pub fn cost(&self, run: &RunCost) -> Result<Rational> {
        let p = self.get(&run.model_id)?;
        Ok(Rational::from_u64(run.usage.prompt_tokens) * p.prompt.clone()
            + Rational::from_u64(run.usage.completion_tokens) * p.completion.clone())
    }
}

/// Priced spend of every run divided by the number of successful runs.
/// Every model id is checked against the table before anything is summed.
pub fn cost_per_success(runs: &[RunCost], prices: &PriceTable) -> Result<PerSuccess> {
    for r in runs {
        prices.get(&r.model_id)?;
    }
    let successes = runs.iter().filter(|r| r.successful).count() as u64;
    let total: Rational = runs.iter().map(|r| prices.cost(r)).collect::<Result<Vec<_>>>()?.into_iter().sum();
    if successes == 0 {
        return Ok(PerSuccess::Undefined);
    }
    Ok(PerSuccess::Value(total / Rational::from_u64(successes)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub program_id: String,
    pub category: Category,
    pub mode: Mode,
    pub cost: RunCost,
}

/// Token spend across a batch; aggregates are sums of the entries.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLedger {
    pub entries: Vec<LedgerEntry>,
}

impl TokenLedger {
    pub fn from_records(records: &[RunRecord]) -> Self {
        Self {
            entries: records
                .iter()
                .map(|r| LedgerEntry {
                    program_id: r.program_id.clone(),
                    category: r.category,
                    mode: r.mode(),
                    cost: RunCost {
                        model_id: r.token_ledger.model_id.clone(),
                        usage: r.token_ledger.usage,
                        successful: r.successful,
                    },
                })
                .collect(),
        }
    }

    pub fn total(&self) -> TokenUsage {
        self.entries.iter().map(|e| e.cost.usage).sum()
    }

    pub fn by_category(&self) -> BTreeMap<(Category, Mode), TokenUsage> {
        let mut out: BTreeMap<(Category, Mode), TokenUsage> = BTreeMap::new();
        for e in &self.entries {
            *out.entry((e.category, e.mode)).or_default() += e.cost.usage;
        }
        out
    }

    pub fn by_mode(&self) -> BTreeMap<Mode, TokenUsage> {
        let mut out: BTreeMap<Mode, TokenUsage> = BTreeMap::new();
        for e in &self.entries {
            *out.entry(e.mode).or_default() += e.cost.usage;
        }
        out
    }
}

/// The metric inputs of one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSample {
    pub program_id: String,
    pub category: Category,
    pub mode: Mode,
    pub ca: Rational,
    pub successful: bool,
    pub cost: RunCost,
}

impl From<&RunRecord> for RunSample {
    fn from(r: &RunRecord) -> Self {
        RunSample {
            program_id: r.program_id.clone(),
            category: r.category,
            mode: r.mode(),
            ca: r.ca_sample(),
            successful: r.successful,
            cost: RunCost {
                model_id: r.token_ledger.model_id.clone(),
                usage: r.token_ledger.usage,
                successful: r.successful,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scope {
    Program,
    Category,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scope: Scope,
    pub key: String,
    pub mode: Mode,
    pub n: u64,
    /// Mean CA over runs (program rows) or over programs (category rows).
    pub ca: Rational,
    /// Highest single-run CA, averaged over programs on category rows.
    pub best_ca: Rational,
    pub sr: Rational,
    pub p5_ca: Rational,
    pub cvar: Rational,
    pub total_tokens: u64,
    pub tokens_per_success: PerSuccess,
    pub cost_per_success: Option<PerSuccess>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub config: MetricsConfig,
    pub rows: Vec<SummaryRow>,
}

fn program_row(
    key: &str,
    mode: Mode,
    runs: &[&RunSample],
    config: &MetricsConfig,
    prices: Option<&PriceTable>,
) -> Result<SummaryRow> {
    let set = SampleSet::new(key, runs.iter().map(|r| r.ca.clone()).collect())?;
    let costs: Vec<RunCost> = runs.iter().map(|r| r.cost.clone()).collect();
    let successes: Vec<bool> = runs.iter().map(|r| r.successful).collect();
    Ok(SummaryRow {
        scope: Scope::Program,
        key: key.to_string(),
        mode,
        n: runs.len() as u64,
        ca: mean(set.samples())?,
        best_ca: set.samples().iter().max().cloned().expect("non-empty"),
        sr: success_rate(&successes)?,
        p5_ca: p5_ca(&set, &config.percentile_q)?,
        cvar: cvar(&set, &config.alpha)?,
        total_tokens: costs.iter().map(|c| c.usage.total()).sum(),
        tokens_per_success: tokens_per_success(&costs),
        cost_per_success: prices.map(|p| cost_per_success(&costs, p)).transpose()?,
    })
}

/// One row per (program, mode) and per (category, mode). Category rows
/// average the per-program CA, SR, P5-CA and CVaR values; token and cost
/// rows pool every run of the category.
pub fn summarize(runs: &[RunSample], config: &MetricsConfig, prices: Option<&PriceTable>) -> Result<MetricsSummary> {
    check_alpha(&config.alpha)?;
    if let Some(p) = prices {
        for r in runs {
            p.get(&r.cost.model_id)?;
        }
    }
    let mut by_program: BTreeMap<(Mode, &str), Vec<&RunSample>> = BTreeMap::new();
    for r in runs {
        by_program.entry((r.mode, r.program_id.as_str())).or_default().push(r);
    }
    let mut program_rows = Vec::new();
    let mut by_category: BTreeMap<(Mode, Category), (Vec<SummaryRow>, Vec<RunCost>)> = BTreeMap::new();
    for ((mode, key), group) in &by_program {
        let row = program_row(key, *mode, group, config, prices)?;
        let slot = by_category.entry((*mode, group[0].category)).or_default();
        slot.0.push(row.clone());
        slot.1.extend(group.iter().map(|r| r.cost.clone()));
        program_rows.push(row);
    }
    let mut rows = program_rows;
    for ((mode, category), (prog_rows, costs)) in by_category {
        let pick = |f: fn(&SummaryRow) -> Rational| prog_rows.iter().map(f).collect::<Vec<_>>();
        rows.push(SummaryRow {
            scope: Scope::Category,
            key: category.to_string(),
            mode,
            n: prog_rows.len() as u64,
            ca: mean(&pick(|r| r.ca.clone()))?,
            best_ca: mean(&pick(|r| r.best_ca.clone()))?,
            sr: mean(&pick(|r| r.sr.clone()))?,
            p5_ca: mean(&pick(|r| r.p5_ca.clone()))?,
            cvar: mean(&pick(|r| r.cvar.clone()))?,
            total_tokens: costs.iter().map(|c| c.usage.total()).sum(),
            tokens_per_success: tokens_per_success(&costs),
            cost_per_success: prices.map(|p| cost_per_success(&costs, p)).transpose()?,
        });
    }
    rows.sort_by(|a, b| (a.scope, a.mode, &a.key).cmp(&(b.scope, b.mode, &b.key)));
    Ok(MetricsSummary { config: config.clone(), rows })
}

impl MetricsSummary {
    pub fn csv_header(&self) -> String {
        format!(
            "SCOPE,KEY,MODE,N,CA,BEST_CA,SR,P5_CA,{},TOTAL_TOKENS,TOKENS_PER_SUCCESS,COST_PER_SUCCESS",
            self.config.cvar_column()
        )
    }

    /// Rates rendered with six decimals; per-success values with two.
    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for r in &self.rows {
            let scope = match r.scope {
                Scope::Program => "PROGRAM",
                Scope::Category => "CATEGORY",
            };
            out.push_str(&format!(
                "{scope},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.key,
                r.mode,
                r.n,
                r.ca.to_decimal(6),
                r.best_ca.to_decimal(6),
                r.sr.to_decimal(6),
                r.p5_ca.to_decimal(6),
                r.cvar.to_decimal(6),
                r.total_tokens,
                r.tokens_per_success.to_decimal(2),
                r.cost_per_success.as_ref().map_or_else(|| UNDEFINED.to_string(), |c| c.to_decimal(2)),
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    pub fn rows_for(&self, scope: Scope, mode: Mode) -> impl Iterator<Item = &SummaryRow> {
        self.rows.iter().filter(move |r| r.scope == scope && r.mode == mode)
    }
}
