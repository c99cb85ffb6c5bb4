//! Association between quartile-binned shape features and molecular subtype
//! labels: contingency tables, the Fisher exact test and Bonferroni
//! correction over the fixed set of ten feature/subtype hypotheses.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantile::{quantile_sorted, sorted_copy};
use crate::seed;
use crate::shape::ShapeFeatureRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Feature {
    #[serde(rename = "ASD")]
    Asd,
    #[serde(rename = "BEVR")]
    Bevr,
    #[serde(rename = "MF")]
    Mf,
}

impl Feature {
    pub fn name(self) -> &'static str {
        match self {
            Feature::Asd => "ASD",
            Feature::Bevr => "BEVR",
            Feature::Mf => "MF",
        }
    }

    pub fn value(self, rec: &ShapeFeatureRecord) -> f64 {
        match self {
            Feature::Asd => rec.asd,
            Feature::Bevr => rec.bevr,
            Feature::Mf => rec.mf,
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The six molecular classifications and their label vocabularies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "IDH_1p19q")]
    Idh1p19q,
    #[serde(rename = "RNASeq")]
    RnaSeq,
    #[serde(rename = "Methylation")]
    Methylation,
    #[serde(rename = "CNC")]
    Cnc,
    #[serde(rename = "miRNA")]
    MiRna,
    #[serde(rename = "COC")]
    Coc,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::Idh1p19q,
        Scheme::RnaSeq,
        Scheme::Methylation,
        Scheme::Cnc,
        Scheme::MiRna,
        Scheme::Coc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Idh1p19q => "IDH_1p19q",
            Scheme::RnaSeq => "RNASeq",
            Scheme::Methylation => "Methylation",
            Scheme::Cnc => "CNC",
            Scheme::MiRna => "miRNA",
            Scheme::Coc => "COC",
        }
    }

    pub fn labels(self) -> &'static [&'static str] {
        match self {
            Scheme::Idh1p19q => &["IDHmut-codel", "IDHmut-non-codel", "IDHwt"],
            Scheme::RnaSeq => &["R1", "R2", "R3", "R4"],
            Scheme::Methylation => &["M1", "M2", "M3", "M4", "M5"],
            Scheme::Cnc => &["C1", "C2", "C3"],
            Scheme::MiRna => &["mi1", "mi2", "mi3", "mi4"],
            Scheme::Coc => &["coc1", "coc2", "coc3"],
        }
    }

    pub fn check_label(self, label: &str) -> Result<()> {
        if self.labels().contains(&label) {
            Ok(())
        } else {
            Err(Error::UnknownLabel {
                scheme: self.name().to_string(),
                label: label.to_string(),
            })
        }
    }

    fn label_rank(self, label: &str) -> usize {
        self.labels()
            .iter()
            .position(|l| *l == label)
            .unwrap_or(usize::MAX)
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .iter()
            .copied()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::UnknownScheme(s.to_string()))
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HypothesisSpec {
    pub feature: Feature,
    pub scheme: Scheme,
}

const fn h(feature: Feature, scheme: Scheme) -> HypothesisSpec {
    HypothesisSpec { feature, scheme }
}

/// The ten tested feature/subtype pairs.
pub const HYPOTHESES: [HypothesisSpec; 10] = [
    h(Feature::Bevr, Scheme::RnaSeq),
    h(Feature::Bevr, Scheme::MiRna),
    h(Feature::Bevr, Scheme::Cnc),
    h(Feature::Bevr, Scheme::Coc),
    h(Feature::Mf, Scheme::RnaSeq),
    h(Feature::Asd, Scheme::Idh1p19q),
    h(Feature::Asd, Scheme::RnaSeq),
    h(Feature::Asd, Scheme::Methylation),
    h(Feature::Asd, Scheme::Cnc),
    h(Feature::Asd, Scheme::Coc),
];

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Case id to scheme to label. Missing schemes are absent keys.
pub type GenomicLabels = BTreeMap<String, BTreeMap<Scheme, String>>;

/// Validates raw `scheme name -> label` maps (as stored in a manifest or a
/// labels file).
pub fn parse_labels(raw: &BTreeMap<String, BTreeMap<String, String>>) -> Result<GenomicLabels> {
    let mut out = GenomicLabels::new();
    for (case, schemes) in raw {
        let mut m = BTreeMap::new();
        for (name, label) in schemes {
            let scheme: Scheme = name.parse()?;
            scheme.check_label(label)?;
            m.insert(scheme, label.clone());
        }
        out.insert(case.clone(), m);
    }
    Ok(out)
}

pub fn load_labels(path: impl AsRef<std::path::Path>) -> Result<GenomicLabels> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: BTreeMap<String, BTreeMap<String, String>> = serde_json::from_str(&text)?;
    parse_labels(&raw)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileBins {
    /// 1..=4 per input value, in input order.
    pub bins: Vec<u8>,
    pub breakpoints: [f64; 3],
    /// All values equal; every value is put in bin 1.
    pub degenerate: bool,
}

/// Maps values to quartile bins 1..=4 using linear-interpolation quartiles.
/// A value equal to a breakpoint goes to the lower bin.
pub fn quartile_bin(values: &[f64]) -> Result<QuartileBins> {
    if values.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "quartile binning needs at least 4 values, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite feature value".into()));
    }
    let sorted = sorted_copy(values);
    let q = [
        quantile_sorted(&sorted, 0.25),
        quantile_sorted(&sorted, 0.5),
        quantile_sorted(&sorted, 0.75),
    ];
    let degenerate = sorted[0] == sorted[sorted.len() - 1];
    let bins = values
        .iter()
        .map(|&v| {
            if degenerate || v <= q[0] {
                1
            } else if v <= q[1] {
                2
            } else if v <= q[2] {
                3
            } else {
                4
            }
        })
        .collect();
    Ok(QuartileBins {
        bins,
        breakpoints: q,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    /// `counts[row][col]`.
    pub counts: Vec<Vec<u64>>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
}

impl ContingencyTable {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let cols = counts.first().map_or(0, Vec::len);
        if counts.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("ragged contingency table".into()));
        }
        Ok(ContingencyTable {
            row_labels: (1..=counts.len()).map(|i| i.to_string()).collect(),
            col_labels: (1..=cols).map(|i| i.to_string()).collect(),
            counts,
        })
    }

    pub fn rows(&self) -> usize {
        self.counts.len()
    }

    pub fn cols(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.cols())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }

    pub fn transpose(&self) -> ContingencyTable {
        ContingencyTable {
            counts: (0..self.cols())
                .map(|j| self.counts.iter().map(|r| r[j]).collect())
                .collect(),
            row_labels: self.col_labels.clone(),
            col_labels: self.row_labels.clone(),
        }
    }

    /// Compact text form: rows separated by `;`, cells by `,`.
    pub fn compact(&self) -> String {
        self.counts
            .iter()
            .map(|r| r.iter().map(u64::to_string).collect::<Vec<_>>().join(","))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Which cases the quartile breakpoints are computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinningScope {
    /// Only cases with both a feature value and a label for the scheme.
    #[default]
    IncludedCases,
    /// Every case with a feature value; the table still only counts cases
    /// with a label.
    AllCases,
}

impl FromStr for BinningScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "included" | "included_cases" => Ok(BinningScope::IncludedCases),
            "all" | "all_cases" => Ok(BinningScope::AllCases),
            other => Err(Error::InvalidArgument(format!(
                "unknown binning scope `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltTable {
    pub table: ContingencyTable,
    pub cases: usize,
    pub degenerate_binning: bool,
}

/// Cross-tabulates quartile bins of `spec.feature` against `spec.scheme`
/// labels. Rows are the four quartiles; columns are the observed labels in
/// vocabulary order.
pub fn build_table(
    features: &[ShapeFeatureRecord],
    labels: &GenomicLabels,
    spec: HypothesisSpec,
    scope: BinningScope,
) -> Result<BuiltTable> {
    let labelled =
        |r: &ShapeFeatureRecord| labels.get(&r.case_id).and_then(|m| m.get(&spec.scheme));
    let included: Vec<(&ShapeFeatureRecord, &String)> = features
        .iter()
        .filter_map(|r| labelled(r).map(|l| (r, l)))
        .collect();
    if included.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no case has both {} and a {} label",
            spec.feature, spec.scheme
        )));
    }
    let (bins, degenerate) = match scope {
        BinningScope::IncludedCases => {
            let values: Vec<f64> = included
                .iter()
                .map(|(r, _)| spec.feature.value(r))
                .collect();
            let q = quartile_bin(&values)?;
            (q.bins, q.degenerate)
        }
        BinningScope::AllCases => {
            let values: Vec<f64> = features.iter().map(|r| spec.feature.value(r)).collect();
            let q = quartile_bin(&values)?;
            let bins = features
                .iter()
                .zip(&q.bins)
                .filter(|(r, _)| labelled(r).is_some())
                .map(|(_, &b)| b)
                .collect();
            (bins, q.degenerate)
        }
    };
    let mut cols: Vec<&str> = included.iter().map(|(_, l)| l.as_str()).collect();
    cols.sort_by_key(|l| (spec.scheme.label_rank(l), l.to_string()));
    cols.dedup();
    let mut counts = vec![vec![0u64; cols.len()]; 4];
    for ((_, label), bin) in included.iter().zip(&bins) {
        let j = cols.iter().position(|c| c == label).expect("label column");
        counts[*bin as usize - 1][j] += 1;
    }
    Ok(BuiltTable {
        table: ContingencyTable {
            counts,
            row_labels: (1..=4).map(|q| format!("Q{q}")).collect(),
            col_labels: cols.into_iter().map(str::to_string).collect(),
        },
        cases: included.len(),
        degenerate_binning: degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherOptions {
    /// Tables enumerated before switching to Monte Carlo.
    pub max_tables: u64,
    pub mc_samples: u64,
    pub seed: u64,
}

impl Default for FisherOptions {
    fn default() -> Self {
        FisherOptions {
            max_tables: 10_000_000,
            mc_samples: 1_000_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FisherMethod {
    Exact { tables: u64 },
    MonteCarlo { samples: u64, std_error: f64 },
}

impl FisherMethod {
    pub fn label(&self) -> &'static str {
        match self {
            FisherMethod::Exact { .. } => "exact",
            FisherMethod::MonteCarlo { .. } => "monte_carlo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherResult {
    pub p_value: f64,
    pub method: FisherMethod,
}

/// Relative tolerance for "as or less probable than observed".
const REL_TOL: f64 = 1e-7;

fn log_factorials(n: usize) -> Vec<f64> {
    let mut lf = vec![0.0; n + 1];
    for i in 1..=n {
        lf[i] = lf[i - 1] + (i as f64).ln();
    }
    lf
}

#[derive(Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

struct Enumerator<'a> {
    rows: usize,
    cols: &'a [u64],
    lf: &'a [f64],
    /// log P(table) = constant − Σ log n_ij!
    constant: f64,
    threshold: f64,
    budget: u64,
    visited: u64,
    p: Neumaier,
    remaining: Vec<u64>,
}

impl Enumerator<'_> {
    /// Fills column `j` row by row. Returns false when the budget ran out.
    fn column(&mut self, j: usize, acc: f64) -> bool {
        if j + 1 == self.cols.len() {
            // The last column is forced by the remaining row totals.
            let last: f64 = self.remaining.iter().map(|&r| self.lf[r as usize]).sum();
            let lw = acc - last;
            self.visited += 1;
            if self.visited > self.budget {
                return false;
            }
            if lw <= self.threshold {
                self.p.add((self.constant + lw).exp());
            }
            return true;
        }
        self.cell(j, 0, self.cols[j], acc)
    }

    fn cell(&mut self, j: usize, i: usize, left: u64, acc: f64) -> bool {
        if i + 1 == self.rows {
            if left > self.remaining[i] {
                return true;
            }
            self.remaining[i] -= left;
            let ok = self.column(j + 1, acc - self.lf[left as usize]);
            self.remaining[i] += left;
            return ok;
        }
        // Rows below must be able to absorb what this cell leaves.
        let below: u64 = self.remaining[i + 1..].iter().sum();
        let lo = left.saturating_sub(below);
        let hi = left.min(self.remaining[i]);
        for v in lo..=hi {
            self.remaining[i] -= v;
            let ok = self.cell(j, i + 1, left - v, acc - self.lf[v as usize]);
            self.remaining[i] += v;
            if !ok {
                return false;
            }
        }
        true
    }
}

fn log_weight(counts: &[Vec<u64>], lf: &[f64]) -> f64 {
    -counts
        .iter()
        .flatten()
        .map(|&n| lf[n as usize])
        .sum::<f64>()
}

/// Drops all-zero rows and columns.
fn effective(table: &ContingencyTable) -> Vec<Vec<u64>> {
    let cs = table.col_sums();
    table
        .counts
        .iter()
        .filter(|r| r.iter().any(|&v| v > 0))
        .map(|r| {
            r.iter()
                .zip(&cs)
                .filter(|(_, &c)| c > 0)
                .map(|(&v, _)| v)
                .collect()
        })
        .collect()
}

/// Two-sided Fisher exact test for an r×c table.
///
/// The p-value sums the probabilities of every table with the observed
/// margins that is no more probable than the observed one (with a relative
/// tolerance of 1e-7). Enumeration runs in a fixed order; if the table space
/// exceeds `max_tables`, a seeded Monte Carlo estimate is returned with its
/// standard error instead.
pub fn fisher_exact(table: &ContingencyTable, opts: &FisherOptions) -> Result<FisherResult> {
    if table.total() == 0 {
        return Err(Error::EmptyTable);
    }
    let mut counts = effective(table);
    if counts.len() < 2 || counts[0].len() < 2 {
        return Ok(FisherResult {
            p_value: 1.0,
            method: FisherMethod::Exact { tables: 1 },
        });
    }
    // Enumerate over the longer dimension as columns: fewer nested loops per
    // column.
    if counts.len() > counts[0].len() {
        counts = (0..counts[0].len())
            .map(|j| counts.iter().map(|r| r[j]).collect())
            .collect();
    }
    let rows: Vec<u64> = counts.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<u64> = (0..counts[0].len())
        .map(|j| counts.iter().map(|r| r[j]).sum())
        .collect();
    let n: u64 = rows.iter().sum();
    let lf = log_factorials(n as usize);
    let constant = rows
        .iter()
        .chain(&cols)
        .map(|&m| lf[m as usize])
        .sum::<f64>()
        - lf[n as usize];
    let observed = log_weight(&counts, &lf);
    let threshold = observed + REL_TOL.ln_1p();

    let mut e = Enumerator {
        rows: rows.len(),
        cols: &cols,
        lf: &lf,
        constant,
        threshold,
        budget: opts.max_tables,
        visited: 0,
        p: Neumaier::default(),
        remaining: rows.clone(),
    };
    if e.column(0, 0.0) {
        return Ok(FisherResult {
            p_value: e.p.value().min(1.0),
            method: FisherMethod::Exact { tables: e.visited },
        });
    }
    Ok(monte_carlo(&rows, &cols, &lf, threshold, opts))
}

/// Random tables with fixed margins by permuting row memberships against
/// column memberships.
fn monte_carlo(
    rows: &[u64],
    cols: &[u64],
    lf: &[f64],
    threshold: f64,
    opts: &FisherOptions,
) -> FisherResult {
    use rand::seq::SliceRandom;

    let mut row_of: Vec<usize> = rows
        .iter()
        .enumerate()
        .flat_map(|(i, &r)| std::iter::repeat(i).take(r as usize))
        .collect();
    let col_of: Vec<usize> = cols
        .iter()
        .enumerate()
        .flat_map(|(j, &c)| std::iter::repeat(j).take(c as usize))
        .collect();
    let mut rng = seed::stream(opts.seed, &[b"fisher-mc"]);
    let (r, c) = (rows.len(), cols.len());
    let mut cells = vec![0u64; r * c];
    let samples = opts.mc_samples.max(1);
    let mut hits = 0u64;
    for _ in 0..samples {
        row_of.shuffle(&mut rng);
        cells.iter_mut().for_each(|v| *v = 0);
        for (&i, &j) in row_of.iter().zip(&col_of) {
            cells[i * c + j] += 1;
        }
        let lw = -cells.iter().map(|&v| lf[v as usize]).sum::<f64>();
        if lw <= threshold {
            hits += 1;
        }
    }
    let p = (1 + hits) as f64 / (samples + 1) as f64;
    FisherResult {
        p_value: p,
        method: FisherMethod::MonteCarlo {
            samples,
            std_error: (p * (1.0 - p) / samples as f64).sqrt(),
        },
    }
}

/// `p < alpha / m` for each hypothesis.
pub fn bonferroni(
    pvalues: &BTreeMap<HypothesisSpec, f64>,
    alpha: f64,
    m: usize,
) -> Result<BTreeMap<HypothesisSpec, bool>> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "number of tests must be at least 1".into(),
        ));
    }
    let threshold = alpha / m as f64;
    Ok(pvalues.iter().map(|(k, &p)| (*k, p < threshold)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssociationOptions {
    pub alpha: f64,
    pub tests: usize,
    pub scope: BinningScope,
    pub fisher: FisherOptions,
}

impl Default for AssociationOptions {
    fn default() -> Self {
        AssociationOptions {
            alpha: DEFAULT_ALPHA,
            tests: HYPOTHESES.len(),
            scope: BinningScope::IncludedCases,
            fisher: FisherOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    InsufficientData,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub feature: Feature,
    pub scheme: Scheme,
    pub status: RowStatus,
    pub cases: usize,
    pub table: Option<ContingencyTable>,
    pub p_value: Option<f64>,
    pub method: Option<FisherMethod>,
    pub significant: bool,
    pub degenerate_binning: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Runs the ten hypotheses. Always returns ten rows in [`HYPOTHESES`] order;
/// a pair without enough data is reported, never skipped.
pub fn run_hypotheses(
    features: &[ShapeFeatureRecord],
    labels: &GenomicLabels,
    opts: &AssociationOptions,
) -> Result<Vec<ReportRow>> {
    let threshold_check = |p: f64| -> Result<bool> {
        let mut one = BTreeMap::new();
        one.insert(HYPOTHESES[0], p);
        Ok(bonferroni(&one, opts.alpha, opts.tests)?[&HYPOTHESES[0]])
    };
    let mut rows = Vec::with_capacity(HYPOTHESES.len());
    for (k, spec) in HYPOTHESES.iter().enumerate() {
        let mut row = ReportRow {
            feature: spec.feature,
            scheme: spec.scheme,
            status: RowStatus::Ok,
            cases: 0,
            table: None,
            p_value: None,
            method: None,
            significant: false,
            degenerate_binning: false,
            note: None,
        };
        match build_table(features, labels, *spec, opts.scope) {
            Ok(built) => {
                row.cases = built.cases;
                row.degenerate_binning = built.degenerate_binning;
                let fopts = FisherOptions {
                    seed: seed::derive_u64(opts.fisher.seed, &[&[k as u8]]),
                    ..opts.fisher
                };
                match fisher_exact(&built.table, &fopts) {
                    Ok(res) => {
                        row.p_value = Some(res.p_value);
                        row.method = Some(res.method);
                        row.significant = threshold_check(res.p_value)?;
                    }
                    Err(e) => {
                        row.status = RowStatus::Error;
                        row.note = Some(e.to_string());
                    }
                }
                row.table = Some(built.table);
            }
            Err(Error::InsufficientData(msg)) => {
                row.status = RowStatus::InsufficientData;
                row.cases = features
                    .iter()
                    .filter(|r| {
                        labels
                            .get(&r.case_id)
                            .is_some_and(|m| m.contains_key(&spec.scheme))
                    })
                    .count();
                row.note = Some(msg);
            }
            Err(e) => {
                row.status = RowStatus::Error;
                row.note = Some(e.to_string());
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub const REPORT_HEADER: &str =
    "feature\tscheme\tstatus\tcases\tp_value\tmethod\tstd_error\tsignificant\tdegenerate_binning\ttable\tcolumns";

pub fn report_tsv(rows: &[ReportRow]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in rows {
        let status = match r.status {
            RowStatus::Ok => "ok",
            RowStatus::InsufficientData => "insufficient_data",
            RowStatus::Error => "error",
        };
        let se = match r.method {
            Some(FisherMethod::MonteCarlo { std_error, .. }) => std_error.to_string(),
            _ => String::new(),
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.feature,
            r.scheme,
            status,
            r.cases,
            r.p_value.map(|p| p.to_string()).unwrap_or_default(),
            r.method.map(|m| m.label()).unwrap_or(""),
            se,
            r.significant,
            r.degenerate_binning,
            r.table
                .as_ref()
                .map(ContingencyTable::compact)
                .unwrap_or_default(),
            r.table
                .as_ref()
                .map(|t| t.col_labels.join(","))
                .unwrap_or_default(),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[&[u64]]) -> ContingencyTable {
        ContingencyTable::from_counts(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn rec(id: &str, v: f64) -> ShapeFeatureRecord {
        ShapeFeatureRecord {
            case_id: id.into(),
            asd: v,
            bevr: v,
            mf: v,
            slice_used: 0,
            tumor_voxels: 1,
        }
    }

    #[test]
    fn ten_hypotheses_are_distinct() {
        let mut v = HYPOTHESES.to_vec();
        v.sort();
        v.dedup();
        assert_eq!(v.len(), 10);
        assert_eq!(
            HYPOTHESES
                .iter()
                .filter(|h| h.feature == Feature::Asd)
                .count(),
            5
        );
        assert_eq!(
            HYPOTHESES
                .iter()
                .filter(|h| h.feature == Feature::Bevr)
                .count(),
            4
        );
    }

    #[test]
    fn quartiles_of_one_to_eight() {
        let v: Vec<f64> = (1..=8).map(f64::from).collect();
        let q = quartile_bin(&v).unwrap();
        assert_eq!(q.bins, vec![1, 1, 2, 2, 3, 3, 4, 4]);
        assert!(!q.degenerate);
    }

    #[test]
    fn constant_values_are_degenerate() {
        let q = quartile_bin(&[2.0; 6]).unwrap();
        assert!(q.degenerate);
        assert!(q.bins.iter().all(|&b| b == 1));
        assert!(quartile_bin(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn breakpoint_values_go_to_lower_bin() {
        // 1..=5: quartiles 2, 3, 4 exactly
        let q = quartile_bin(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(q.breakpoints, [2.0, 3.0, 4.0]);
        assert_eq!(q.bins, vec![1, 1, 2, 3, 4]);
    }

    #[test]
    fn fisher_two_by_two() {
        let r = fisher_exact(&table(&[&[3, 1], &[1, 3]]), &FisherOptions::default()).unwrap();
        assert!((r.p_value - 34.0 / 70.0).abs() < 1e-12);
        assert_eq!(r.method, FisherMethod::Exact { tables: 5 });
    }

    #[test]
    fn fisher_single_row_or_column() {
        let o = FisherOptions::default();
        assert_eq!(
            fisher_exact(&table(&[&[3, 4, 5]]), &o).unwrap().p_value,
            1.0
        );
        assert_eq!(
            fisher_exact(&table(&[&[3], &[4]]), &o).unwrap().p_value,
            1.0
        );
        // zero rows and columns are dropped first
        assert_eq!(
            fisher_exact(&table(&[&[3, 0], &[0, 0], &[4, 0]]), &o)
                .unwrap()
                .p_value,
            1.0
        );
        assert!(matches!(
            fisher_exact(&table(&[&[0, 0]]), &o),
            Err(Error::EmptyTable)
        ));
    }

    #[test]
    fn fisher_transpose_invariant() {
        let t = table(&[&[2, 3], &[0, 5], &[1, 2]]);
        let a = fisher_exact(&t, &FisherOptions::default()).unwrap().p_value;
        let b = fisher_exact(&t.transpose(), &FisherOptions::default())
            .unwrap()
            .p_value;
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn fisher_falls_back_to_monte_carlo() {
        let t = table(&[&[3, 1], &[1, 3]]);
        let o = FisherOptions {
            max_tables: 2,
            mc_samples: 200_000,
            seed: 5,
        };
        let r = fisher_exact(&t, &o).unwrap();
        let FisherMethod::MonteCarlo { std_error, samples } = r.method else {
            panic!("expected Monte Carlo");
        };
        assert_eq!(samples, 200_000);
        assert!((r.p_value - 34.0 / 70.0).abs() < 4.0 * std_error);
        assert_eq!(fisher_exact(&t, &o).unwrap(), r);
    }

    #[test]
    fn bonferroni_is_strict() {
        let spec = HYPOTHESES[0];
        let one = |p| [(spec, p)].into_iter().collect::<BTreeMap<_, _>>();
        assert!(bonferroni(&one(0.004), 0.05, 10).unwrap()[&spec]);
        assert!(bonferroni(&one(0.0049), 0.05, 10).unwrap()[&spec]);
        assert!(!bonferroni(&one(0.005), 0.05, 10).unwrap()[&spec]);
        assert!(bonferroni(&one(0.049), 0.05, 1).unwrap()[&spec]);
        assert!(!bonferroni(&one(0.05), 0.05, 1).unwrap()[&spec]);
        assert!(bonferroni(&one(0.01), 0.05, 0).is_err());
    }

    #[test]
    fn table_from_alternating_labels() {
        let feats: Vec<_> = (1..=8).map(|i| rec(&format!("c{i}"), i as f64)).collect();
        let labels: GenomicLabels = (1..=8)
            .map(|i| {
                let l = if i % 2 == 0 { "R2" } else { "R1" };
                (
                    format!("c{i}"),
                    [(Scheme::RnaSeq, l.to_string())].into_iter().collect(),
                )
            })
            .collect();
        let b = build_table(
            &feats,
            &labels,
            h(Feature::Asd, Scheme::RnaSeq),
            BinningScope::IncludedCases,
        )
        .unwrap();
        assert_eq!(b.table.rows(), 4);
        assert_eq!(b.table.cols(), 2);
        assert_eq!(b.table.row_sums(), vec![2, 2, 2, 2]);
        assert_eq!(b.table.col_labels, vec!["R1", "R2"]);
        assert_eq!(b.cases, 8);
    }

    #[test]
    fn unlabelled_cases_are_excluded() {
        let feats: Vec<_> = (1..=6).map(|i| rec(&format!("c{i}"), i as f64)).collect();
        let labels: GenomicLabels = (1..=5)
            .map(|i| {
                (
                    format!("c{i}"),
                    [(Scheme::Cnc, "C1".to_string())].into_iter().collect(),
                )
            })
            .collect();
        let b = build_table(
            &feats,
            &labels,
            h(Feature::Bevr, Scheme::Cnc),
            BinningScope::IncludedCases,
        )
        .unwrap();
        assert_eq!(b.table.total(), 5);
        assert!(build_table(
            &feats,
            &labels,
            h(Feature::Bevr, Scheme::Coc),
            BinningScope::IncludedCases
        )
        .is_err());
    }

    #[test]
    fn report_always_has_ten_rows() {
        let feats: Vec<_> = (1..=8).map(|i| rec(&format!("c{i}"), i as f64)).collect();
        let labels: GenomicLabels = (1..=8)
            .map(|i| {
                (
                    format!("c{i}"),
                    [(Scheme::RnaSeq, format!("R{}", 1 + i % 4))]
                        .into_iter()
                        .collect(),
                )
            })
            .collect();
        let rows = run_hypotheses(&feats, &labels, &AssociationOptions::default()).unwrap();
        assert_eq!(rows.len(), 10);
        let rna: Vec<_> = rows.iter().filter(|r| r.scheme == Scheme::RnaSeq).collect();
        assert!(rna
            .iter()
            .all(|r| r.status == RowStatus::Ok && r.p_value.is_some()));
        let others: Vec<_> = rows.iter().filter(|r| r.scheme != Scheme::RnaSeq).collect();
        assert!(others
            .iter()
            .all(|r| r.status == RowStatus::InsufficientData));
        assert_eq!(report_tsv(&rows).lines().count(), 11);
    }

    #[test]
    fn constant_feature_flags_degenerate_binning() {
        let feats: Vec<_> = (1..=8).map(|i| rec(&format!("c{i}"), 1.0)).collect();
        let labels: GenomicLabels = (1..=8)
            .map(|i| {
                (
                    format!("c{i}"),
                    [(Scheme::Coc, format!("coc{}", 1 + i % 3))]
                        .into_iter()
                        .collect(),
                )
            })
            .collect();
        let rows = run_hypotheses(&feats, &labels, &AssociationOptions::default()).unwrap();
        let coc: Vec<_> = rows.iter().filter(|r| r.scheme == Scheme::Coc).collect();
        assert_eq!(coc.len(), 2);
        assert!(coc
            .iter()
            .all(|r| r.degenerate_binning && r.p_value == Some(1.0)));
    }

    #[test]
    fn label_vocabulary_is_enforced() {
        let mut raw = BTreeMap::new();
        raw.insert(
            "a".to_string(),
            [("RNASeq".to_string(), "R5".to_string())]
                .into_iter()
                .collect(),
        );
        assert!(matches!(
            parse_labels(&raw),
            Err(Error::UnknownLabel { .. })
        ));
        raw.insert(
            "a".to_string(),
            [("Foo".to_string(), "R1".to_string())]
                .into_iter()
                .collect(),
        );
        assert!(matches!(parse_labels(&raw), Err(Error::UnknownScheme(_))));
        raw.insert(
            "a".to_string(),
            [("IDH_1p19q".to_string(), "IDHwt".to_string())]
                .into_iter()
                .collect(),
        );
        assert_eq!(parse_labels(&raw).unwrap()["a"][&Scheme::Idh1p19q], "IDHwt");
    }
}
