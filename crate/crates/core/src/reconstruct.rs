//! Extended-signature tables over admissible lattice words, word detection and polygon rebuild.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forms::{bump_form, BumpForm, OneForm};
use crate::geometry::{BoxKind, GridSpec, LatticePoint};
use crate::stochastic::PiecewisePath;
use crate::tracer::{LatticeWord, PolygonPath};

pub const MAX_WORD_LEN: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReconstructError {
    #[error("max_len {0} outside 1..=4096")]
    MaxLen(usize),
    #[error("tolerance must be in (0, 1), got {0}")]
    Tolerance(f64),
    #[error("unknown table builder {0:?}")]
    UnknownBuilder(String),
    #[error("{count} words of maximal length {len} exceed the tolerance")]
    AmbiguousWord { len: usize, count: usize, words: Vec<LatticeWord> },
}

/// Maximal stretch of the path inside the Z-support of one site, with no other
/// support visited in between.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub site: LatticePoint,
    pub start: f64,
    pub end: f64,
    /// `∫ φ^z` over the run.
    pub eta: f64,
}

/// Runs of the path through the bump supports, in time order.
pub fn support_runs(path: &PiecewisePath, grid: &GridSpec) -> Vec<Run> {
    let mut forms: BTreeMap<LatticePoint, BumpForm> = BTreeMap::new();
    let mut runs: Vec<Run> = Vec::new();
    for (t0, t1, a, b) in path.segments() {
        let mut pieces: Vec<(f64, f64, LatticePoint, f64)> = Vec::new();
        for z in grid.candidate_sites(BoxKind::Z, a, b) {
            let form = forms.entry(z).or_insert_with(|| bump_form(*grid, z));
            let Some((lo, hi)) = form.active_interval(a, b) else {
                continue;
            };
            let eta = form.segment_integral(a, b);
            pieces.push((t0 + lo * (t1 - t0), t0 + hi * (t1 - t0), z, eta));
        }
        pieces.sort_by(|x, y| x.0.total_cmp(&y.0));
        for (start, end, site, eta) in pieces {
            match runs.last_mut() {
                Some(r) if r.site == site => {
                    r.end = end;
                    r.eta += eta;
                }
                _ => runs.push(Run { site, start, end, eta }),
            }
        }
    }
    runs
}

/// Why a prefix was not extended.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum PruneReason {
    /// The running integral stayed below tolerance relative to its magnitude for all time.
    BelowTolerance { sup_ratio: f64 },
    /// Live but not chosen by the builder.
    NotSelected,
    /// Reached `max_len` or the entry budget while still live.
    MaxLength,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PruneRecord {
    pub entry: usize,
    pub reason: PruneReason,
}

/// Node of the word trie stored in a table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TableEntry {
    pub parent: Option<usize>,
    pub letter: LatticePoint,
    pub len: usize,
    /// `[φ^{z₀}⋯φ^{z_m}] / s^{m+1}` in units of `10^exponent`, with `s` the table's letter scale.
    pub value: f64,
    pub exponent: f64,
    /// The same sum over visit chains with every factor replaced by its absolute value.
    pub magnitude: f64,
    /// `|value| / magnitude`; small only through cancellation.
    pub ratio: f64,
    /// `sup_t` of the normalized running integral.
    pub sup: f64,
    /// `sup_t` of the running `|value| / magnitude`.
    pub sup_ratio: f64,
    /// First run end at which the running integral is nonzero.
    pub onset: Option<f64>,
}

impl TableEntry {
    /// `log10 |[φ^{z₀}⋯φ^{z_m}] / s^{m+1}|`.
    pub fn log10_abs(&self) -> f64 {
        self.value.abs().log10() + self.exponent
    }

    /// The value itself clears the tolerance.
    pub fn significant(&self, theta: f64) -> bool {
        self.ratio >= theta
    }

    /// The running integral clears the tolerance at some time, so extensions may be nonzero.
    pub fn live(&self, theta: f64) -> bool {
        self.sup_ratio >= theta
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "TableRecord", try_from = "TableRecord")]
pub struct SignatureTable {
    pub grid: GridSpec,
    pub window: i64,
    /// Relative tolerance on `|value| / magnitude`.
    pub theta: f64,
    /// Normalization `s = h_K²` per letter.
    pub letter_scale: f64,
    pub max_len: usize,
    pub builder: String,
    /// Parents precede children.
    pub entries: Vec<TableEntry>,
    pub pruned: Vec<PruneRecord>,
    /// Extensions whose support is never visited after the prefix; their value is exactly zero.
    pub structural_zeros: u64,
    /// Live prefixes remained at `max_len` or at the entry budget.
    pub truncated: bool,
}

impl SignatureTable {
    pub fn word(&self, index: usize) -> LatticeWord {
        let mut letters = Vec::with_capacity(self.entries[index].len);
        let mut cur = Some(index);
        while let Some(i) = cur {
            letters.push(self.entries[i].letter);
            cur = self.entries[i].parent;
        }
        letters.reverse();
        LatticeWord::new(letters)
    }

    pub fn find(&self, word: &LatticeWord) -> Option<usize> {
        let mut cur: Option<usize> = None;
        for &z in word.entries() {
            cur = Some(self.entries.iter().position(|e| e.parent == cur && e.letter == z)?);
        }
        cur
    }

    pub fn get(&self, word: &LatticeWord) -> Option<&TableEntry> {
        self.find(word).map(|i| &self.entries[i])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct EntryRecord {
    word: LatticeWord,
    value: f64,
    exponent: f64,
    magnitude: f64,
    ratio: f64,
    sup: f64,
    sup_ratio: f64,
    onset: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct PrunedRecord {
    prefix: LatticeWord,
    #[serde(flatten)]
    reason: PruneReason,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TableRecord {
    grid: GridSpec,
    window: i64,
    theta: f64,
    letter_scale: f64,
    max_len: usize,
    builder: String,
    entries: Vec<EntryRecord>,
    pruned: Vec<PrunedRecord>,
    structural_zeros: u64,
    truncated: bool,
}

impl From<SignatureTable> for TableRecord {
    fn from(t: SignatureTable) -> Self {
        let entries = (0..t.entries.len())
            .map(|i| {
                let e = &t.entries[i];
                EntryRecord {
                    word: t.word(i),
                    value: e.value,
                    exponent: e.exponent,
                    magnitude: e.magnitude,
                    ratio: e.ratio,
                    sup: e.sup,
                    sup_ratio: e.sup_ratio,
                    onset: e.onset,
                }
            })
            .collect();
        let pruned = t
            .pruned
            .iter()
            .map(|p| PrunedRecord {
                prefix: t.word(p.entry),
                reason: p.reason,
            })
            .collect();
        TableRecord {
            grid: t.grid,
            window: t.window,
            theta: t.theta,
            letter_scale: t.letter_scale,
            max_len: t.max_len,
            builder: t.builder,
            entries,
            pruned,
            structural_zeros: t.structural_zeros,
            truncated: t.truncated,
        }
    }
}

impl TryFrom<TableRecord> for SignatureTable {
    type Error = String;

    fn try_from(r: TableRecord) -> Result<Self, String> {
        let mut index: HashMap<LatticeWord, usize> = HashMap::with_capacity(r.entries.len());
        let mut entries = Vec::with_capacity(r.entries.len());
        for (i, e) in r.entries.into_iter().enumerate() {
            let Some(letter) = e.word.last() else {
                return Err("empty word in table".into());
            };
            let parent = match e.word.len() {
                1 => None,
                n => {
                    let prefix = LatticeWord::new(e.word.entries()[..n - 1].to_vec());
                    Some(*index.get(&prefix).ok_or_else(|| format!("{} stored before its prefix", e.word))?)
                }
            };
            entries.push(TableEntry {
                parent,
                letter,
                len: e.word.len(),
                value: e.value,
                exponent: e.exponent,
                magnitude: e.magnitude,
                ratio: e.ratio,
                sup: e.sup,
                sup_ratio: e.sup_ratio,
                onset: e.onset,
            });
            index.insert(e.word, i);
        }
        let pruned = r
            .pruned
            .into_iter()
            .map(|p| {
                let entry = *index.get(&p.prefix).ok_or_else(|| format!("pruned {} not in table", p.prefix))?;
                Ok(PruneRecord { entry, reason: p.reason })
            })
            .collect::<Result<_, String>>()?;
        Ok(SignatureTable {
            grid: r.grid,
            window: r.window,
            theta: r.theta,
            letter_scale: r.letter_scale,
            max_len: r.max_len,
            builder: r.builder,
            entries,
            pruned,
            structural_zeros: r.structural_zeros,
            truncated: r.truncated,
        })
    }
}

/// Strategy deciding which live extensions of a prefix are extended further.
pub trait TableBuilder: Send + Sync {
    fn name(&self) -> &'static str;
    /// Indices into `children` (all live) to keep extending.
    fn select(&self, children: &[&TableEntry]) -> Vec<usize>;
}

/// Keep every live extension.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExhaustiveBfs;

impl TableBuilder for ExhaustiveBfs {
    fn name(&self) -> &'static str {
        "exhaustive"
    }

    fn select(&self, children: &[&TableEntry]) -> Vec<usize> {
        (0..children.len()).collect()
    }
}

/// Keep only the extension whose running integral becomes nonzero first.
#[derive(Clone, Copy, Debug, Default)]
pub struct LeftmostGreedy;

impl TableBuilder for LeftmostGreedy {
    fn name(&self) -> &'static str {
        "leftmost"
    }

    fn select(&self, children: &[&TableEntry]) -> Vec<usize> {
        children
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.onset.map(|t| (t, i)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, i)| vec![i])
            .unwrap_or_default()
    }
}

pub type BuilderFactory = fn() -> Box<dyn TableBuilder>;

/// Table builders selectable by name.
pub struct BuilderRegistry {
    entries: BTreeMap<&'static str, BuilderFactory>,
}

impl BuilderRegistry {
    pub fn register(&mut self, name: &'static str, factory: BuilderFactory) {
        self.entries.insert(name, factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn build(&self, name: &str) -> Result<Box<dyn TableBuilder>, ReconstructError> {
        self.entries
            .get(name)
            .map(|f| f())
            .ok_or_else(|| ReconstructError::UnknownBuilder(name.to_string()))
    }
}

impl Default for BuilderRegistry {
    fn default() -> Self {
        let mut r = Self {
            entries: BTreeMap::new(),
        };
        r.register("exhaustive", || Box::new(ExhaustiveBfs));
        r.register("leftmost", || Box::new(LeftmostGreedy));
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableParams {
    pub window: i64,
    pub max_len: usize,
    pub theta: f64,
    /// Stop extending once this many entries are stored.
    pub max_entries: usize,
}

impl Default for TableParams {
    fn default() -> Self {
        Self {
            window: 20,
            max_len: MAX_WORD_LEN,
            theta: 1e-8,
            max_entries: 2_000_000,
        }
    }
}

/// Running values of a word at run ends in units of `10^exponent`.
#[derive(Clone, Debug, PartialEq)]
struct Running {
    signed: Vec<f64>,
    magnitude: Vec<f64>,
    exponent: f64,
}

/// Running values of `word·z` from those of `word`; `None` stands for the empty word.
fn extend_running(runs: &[Run], prefix: Option<&Running>, z: LatticePoint, scale: f64) -> Running {
    let mut out = Running {
        signed: Vec::with_capacity(runs.len()),
        magnitude: Vec::with_capacity(runs.len()),
        exponent: prefix.map_or(0.0, |p| p.exponent),
    };
    let (mut acc, mut mag) = (0.0, 0.0);
    for (i, r) in runs.iter().enumerate() {
        if r.site == z {
            let (before, before_mag) = before(prefix, i);
            let eta = r.eta / scale;
            acc += eta * before;
            mag += eta.abs() * before_mag;
        }
        out.signed.push(acc);
        out.magnitude.push(mag);
    }
    // rescale so long words do not underflow
    if mag > 0.0 {
        out.signed.iter_mut().for_each(|v| *v /= mag);
        out.magnitude.iter_mut().for_each(|v| *v /= mag);
        out.exponent += mag.log10();
    }
    out
}

fn before(prefix: Option<&Running>, i: usize) -> (f64, f64) {
    match prefix {
        None => (1.0, 1.0),
        Some(p) if i > 0 => (p.signed[i - 1], p.magnitude[i - 1]),
        Some(_) => (0.0, 0.0),
    }
}

/// Summary of `word·z` computed from the runs of `z` only.
fn child_stats(runs: &[Run], positions: &[usize], prefix: Option<&Running>, scale: f64) -> TableEntry {
    let rel = |v: f64, m: f64| if m > 0.0 { v.abs() / m } else { 0.0 };
    let (mut acc, mut mag, mut sup, mut sup_ratio) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut onset = None;
    for &j in positions {
        let (b, bm) = before(prefix, j);
        let eta = runs[j].eta / scale;
        acc += eta * b;
        mag += eta.abs() * bm;
        sup = sup.max(acc.abs());
        sup_ratio = sup_ratio.max(rel(acc, mag));
        if onset.is_none() && acc != 0.0 {
            onset = Some(runs[j].end);
        }
    }
    TableEntry {
        parent: None,
        letter: LatticePoint::ORIGIN,
        len: 0,
        value: acc,
        exponent: prefix.map_or(0.0, |p| p.exponent),
        magnitude: mag,
        ratio: rel(acc, mag),
        sup,
        sup_ratio,
        onset,
    }
}

/// Breadth-first extension from `⟨(0,0)⟩` over letters in the window.
pub fn build_table(path: &PiecewisePath, grid: &GridSpec, params: &TableParams, builder: &dyn TableBuilder) -> Result<SignatureTable, ReconstructError> {
    if params.max_len == 0 || params.max_len > MAX_WORD_LEN {
        return Err(ReconstructError::MaxLen(params.max_len));
    }
    if !(params.theta > 0.0 && params.theta < 1.0) {
        return Err(ReconstructError::Tolerance(params.theta));
    }
    let scale = grid.half_width(BoxKind::K).powi(2);
    let mut runs: Vec<Run> = Vec::new();
    for r in support_runs(path, grid).into_iter().filter(|r| r.site.max_norm() <= params.window) {
        match runs.last_mut() {
            Some(m) if m.site == r.site => {
                m.end = r.end;
                m.eta += r.eta;
            }
            _ => runs.push(r),
        }
    }
    let mut positions: BTreeMap<LatticePoint, Vec<usize>> = BTreeMap::new();
    for (i, r) in runs.iter().enumerate() {
        positions.entry(r.site).or_default().push(i);
    }
    let letters = (2 * params.window + 1).pow(2) as u64;
    let theta = params.theta;

    let origin_runs = positions.get(&LatticePoint::ORIGIN).map_or(&[][..], Vec::as_slice);
    let mut root = child_stats(&runs, origin_runs, None, scale);
    root.len = 1;
    let mut table = SignatureTable {
        grid: *grid,
        window: params.window,
        theta,
        letter_scale: scale,
        max_len: params.max_len,
        builder: builder.name().to_string(),
        entries: vec![root],
        pruned: Vec::new(),
        structural_zeros: 0,
        truncated: false,
    };
    let mut live: Vec<(usize, Running)> = Vec::new();
    if root.live(theta) {
        live.push((0, extend_running(&runs, None, LatticePoint::ORIGIN, scale)));
    } else if root.sup > 0.0 {
        table.pruned.push(PruneRecord {
            entry: 0,
            reason: PruneReason::BelowTolerance { sup_ratio: root.sup_ratio },
        });
    }

    while !live.is_empty() {
        let mut next = Vec::new();
        for (index, running) in &live {
            let entry = table.entries[*index];
            if entry.len >= params.max_len || table.entries.len() >= params.max_entries {
                table.truncated = true;
                table.pruned.push(PruneRecord {
                    entry: *index,
                    reason: PruneReason::MaxLength,
                });
                continue;
            }
            let mut children: Vec<(usize, TableEntry)> = Vec::new();
            let mut evaluated = 0u64;
            for (&z, pos) in positions.iter().filter(|(&z, _)| z != entry.letter) {
                evaluated += 1;
                let mut child = child_stats(&runs, pos, Some(running), scale);
                child.parent = Some(*index);
                child.letter = z;
                child.len = entry.len + 1;
                if child.sup == 0.0 {
                    table.structural_zeros += 1;
                    continue;
                }
                let at = table.entries.len();
                table.entries.push(child);
                if child.live(theta) {
                    children.push((at, child));
                } else {
                    table.pruned.push(PruneRecord {
                        entry: at,
                        reason: PruneReason::BelowTolerance { sup_ratio: child.sup_ratio },
                    });
                }
            }
            table.structural_zeros += letters - 1 - evaluated;
            let refs: Vec<&TableEntry> = children.iter().map(|(_, c)| c).collect();
            let keep: BTreeSet<usize> = builder.select(&refs).into_iter().collect();
            for (k, &(at, child)) in children.iter().enumerate() {
                if keep.contains(&k) {
                    let r = extend_running(&runs, Some(running), child.letter, scale);
                    next.push((at, r));
                } else {
                    table.pruned.push(PruneRecord {
                        entry: at,
                        reason: PruneReason::NotSelected,
                    });
                }
            }
        }
        live = next;
    }
    Ok(table)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    #[serde(rename = "M_hat")]
    pub m_hat: usize,
    pub word: LatticeWord,
    pub epsilon: f64,
    pub polygon: PolygonPath,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Smallest `ratio / θ` along the accepted word.
    pub accepted_margin: f64,
    /// Largest `ratio / θ` among rejected entries.
    pub rejected_margin: f64,
    /// No entry reached tolerance.
    pub empty: bool,
}

/// The unique longest significant word.
pub fn detect_word(table: &SignatureTable) -> Result<ReconstructionResult, ReconstructError> {
    let theta = table.theta;
    let epsilon = table.grid.epsilon;
    let rejected_margin = table
        .entries
        .iter()
        .filter(|e| !e.significant(theta))
        .map(|e| e.ratio / theta)
        .fold(0.0, f64::max);
    let Some(len) = table.entries.iter().filter(|e| e.significant(theta)).map(|e| e.len).max() else {
        let word = LatticeWord::origin();
        return Ok(ReconstructionResult {
            m_hat: 0,
            polygon: reconstruct_polygon(&word, epsilon),
            word,
            epsilon,
            diagnostics: Diagnostics {
                accepted_margin: 0.0,
                rejected_margin,
                empty: true,
            },
        });
    };
    let top: Vec<usize> = (0..table.entries.len())
        .filter(|&i| table.entries[i].len == len && table.entries[i].significant(theta))
        .collect();
    if top.len() > 1 {
        return Err(ReconstructError::AmbiguousWord {
            len,
            count: top.len(),
            words: top.iter().map(|&i| table.word(i)).collect(),
        });
    }
    let mut accepted_margin = f64::INFINITY;
    let mut cur = Some(top[0]);
    while let Some(i) = cur {
        accepted_margin = accepted_margin.min(table.entries[i].ratio / theta);
        cur = table.entries[i].parent;
    }
    let word = table.word(top[0]);
    Ok(ReconstructionResult {
        m_hat: len - 1,
        polygon: reconstruct_polygon(&word, epsilon),
        word,
        epsilon,
        diagnostics: Diagnostics {
            accepted_margin,
            rejected_margin,
            empty: false,
        },
    })
}

/// Polyline through `ε·ñ_l` at times `l / M̂`; constant on `[0, 1]` when `M̂ = 0`.
pub fn reconstruct_polygon(word: &LatticeWord, epsilon: f64) -> PolygonPath {
    let mut points: Vec<_> = word.entries().iter().map(|z| z.scaled(epsilon)).collect();
    if points.len() == 1 {
        points.push(points[0]);
    }
    PiecewisePath::from_points(points).expect("at least two vertices")
}

/// Discrete Fréchet distance between the vertex sequences.
pub fn frechet_distance(p: &PiecewisePath, q: &PiecewisePath) -> f64 {
    let (a, b) = (p.points(), q.points());
    let mut prev = vec![0.0f64; b.len()];
    let mut cur = vec![0.0f64; b.len()];
    for (i, pa) in a.iter().enumerate() {
        for (j, qb) in b.iter().enumerate() {
            let d = pa.distance(*qb);
            cur[j] = match (i, j) {
                (0, 0) => d,
                (0, _) => cur[j - 1].max(d),
                (_, 0) => prev[0].max(d),
                _ => prev[j].min(prev[j - 1]).min(cur[j - 1]).max(d),
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len() - 1]
}
