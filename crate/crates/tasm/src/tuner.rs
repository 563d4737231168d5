//! Layout tuning policies.
//!
//! The known-workload optimizer assigns each segment either an untiled
//! layout or a fine-grained layout around the workload's objects,
//! whichever the cost model prefers subject to the not-tiling rule. The
//! online tuner tracks candidate layouts keyed by label sets drawn from
//! the objects queried so far, accumulates per-segment regret (the
//! estimated time a candidate would have saved on observed queries), and
//! re-tiles a segment once some candidate's regret exceeds `eta` times
//! its re-encode cost.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use crate::cost::{self, CostParams};
use crate::error::{Error, Result};
use crate::geometry::{fine_grained_layout, FrameDims, LayoutConfig, TileLayout};
use crate::index::SemanticIndex;
use crate::query::{LabelPredicate, QuerySpec};
use crate::store::VideoStore;

/// Baseline and incremental tiling strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Strategy {
    NotTiled,
    AllObjects,
    IncrementalMore,
    IncrementalRegret,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::NotTiled,
        Strategy::AllObjects,
        Strategy::IncrementalMore,
        Strategy::IncrementalRegret,
    ];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Strategy::NotTiled => "not_tiled",
            Strategy::AllObjects => "all_objects",
            Strategy::IncrementalMore => "incremental_more",
            Strategy::IncrementalRegret => "incremental_regret",
        };
        f.write_str(s)
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "not_tiled" | "none" => Ok(Strategy::NotTiled),
            "all_objects" | "all" => Ok(Strategy::AllObjects),
            "incremental_more" | "more" => Ok(Strategy::IncrementalMore),
            "incremental_regret" | "regret" => Ok(Strategy::IncrementalRegret),
            _ => Err(Error::EmptyInput("unknown strategy")),
        }
    }
}

/// Tuner thresholds and candidate-set policy.
#[derive(Debug, Clone)]
pub struct TunerConfig {
    /// Not-tiling threshold: a candidate must decode at most `alpha` times
    /// the untiled pixels for every observed query on the segment.
    pub alpha: f64,
    /// Regret-to-reencode ratio triggering a retile.
    pub eta: f64,
    /// Cap on how many seen labels feed candidate-set generation; the most
    /// frequently queried labels win, ties broken lexicographically.
    pub max_candidate_labels: usize,
    /// Candidate sets are all label subsets up to this size, plus the full
    /// seen set.
    pub max_subset_size: usize,
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            eta: 1.0,
            max_candidate_labels: 6,
            max_subset_size: 3,
        }
    }
}

/// A candidate layout is identified by the label set it isolates.
pub type LabelSet = BTreeSet<String>;

/// One retile performed by the tuner.
#[derive(Debug, Clone)]
pub struct RetileAction {
    pub query_idx: usize,
    pub sot: usize,
    pub labels: LabelSet,
    pub layout: TileLayout,
    /// The triggering query's estimated improvement for this candidate.
    pub delta_cost: f64,
    /// Accumulated regret at the moment of the retile.
    pub regret: f64,
    pub reencode_cost: f64,
    /// Wall-clock seconds the retile took.
    pub seconds: f64,
}

#[derive(Debug, Clone, Default)]
struct SotState {
    /// Candidate key currently applied; `None` means untiled.
    current: Option<LabelSet>,
    regret: BTreeMap<LabelSet, f64>,
    /// Candidates that failed the not-tiling rule for some observed query.
    vetoed: BTreeSet<LabelSet>,
    /// (first query index the layout applies to, candidate key).
    layout_log: Vec<(usize, Option<LabelSet>)>,
    /// Query indices whose processing ended in a retile of this segment.
    resets: Vec<usize>,
    /// Query indices that touched this segment, in order.
    touched_by: Vec<usize>,
}

impl SotState {
    fn layout_key_at(&self, query_idx: usize) -> &Option<LabelSet> {
        self.layout_log
            .iter()
            .rev()
            .find(|(since, _)| *since <= query_idx)
            .map(|(_, k)| k)
            .expect("layout log starts at query 0")
    }
}

/// Online regret-minimization state for one video.
pub struct RegretState {
    video: String,
    dims: FrameDims,
    /// Label -> number of queries that requested it.
    seen: BTreeMap<String, u64>,
    candidates: BTreeSet<LabelSet>,
    /// Query index at which each candidate set was first formed.
    candidate_since: BTreeMap<LabelSet, usize>,
    history: Vec<QuerySpec>,
    sots: Vec<SotState>,
    sot_ranges: Vec<Range<u32>>,
}

impl RegretState {
    pub fn new(store: &VideoStore) -> Self {
        let m = store.manifest();
        let sots = m
            .sots
            .iter()
            .map(|_| SotState {
                layout_log: vec![(0, None)],
                ..SotState::default()
            })
            .collect();
        Self {
            video: store.name().to_string(),
            dims: m.dims,
            seen: BTreeMap::new(),
            candidates: BTreeSet::new(),
            candidate_since: BTreeMap::new(),
            history: Vec::new(),
            sots,
            sot_ranges: m.sots.iter().map(|s| s.frame_range.clone()).collect(),
        }
    }

    pub fn history(&self) -> &[QuerySpec] {
        &self.history
    }

    pub fn candidates(&self) -> &BTreeSet<LabelSet> {
        &self.candidates
    }

    pub fn candidate_since(&self) -> &BTreeMap<LabelSet, usize> {
        &self.candidate_since
    }

    pub fn regret_of(&self, sot: usize, key: &LabelSet) -> Option<f64> {
        self.sots.get(sot).and_then(|s| s.regret.get(key).copied())
    }

    pub fn layout_log(&self, sot: usize) -> &[(usize, Option<LabelSet>)] {
        &self.sots[sot].layout_log
    }

    pub fn resets(&self, sot: usize) -> &[usize] {
        &self.sots[sot].resets
    }

    /// Materialize a candidate label set for one segment: a fine-grained
    /// layout around the segment's boxes carrying those labels.
    pub fn materialize(
        &self,
        index: &SemanticIndex,
        key: &Option<LabelSet>,
        sot_range: Range<u32>,
        lcfg: &LayoutConfig,
    ) -> Result<TileLayout> {
        materialize_layout(index, &self.video, key, sot_range, self.dims, lcfg)
    }

    fn sots_touching(&self, q: &QuerySpec) -> Vec<usize> {
        let video_len = self.sot_ranges.last().map(|r| r.end).unwrap_or(0);
        let r = q.effective_range(video_len);
        self.sot_ranges
            .iter()
            .enumerate()
            .filter(|(_, sr)| sr.start < r.end && r.start < sr.end)
            .map(|(i, _)| i)
            .collect()
    }

    /// Feed one executed query into the tuner; may retile segments of the
    /// store. Returns the retiles performed.
    ///
    /// The regret of the layout in place while a query ran never changes
    /// retroactively: newly formed candidates accumulate regret against
    /// the layouts each past query actually saw.
    pub fn observe_query(
        &mut self,
        q: &QuerySpec,
        index: &SemanticIndex,
        store: &VideoStore,
        cfg: &TunerConfig,
        lcfg: &LayoutConfig,
        params: &CostParams,
    ) -> Result<Vec<RetileAction>> {
        let i = self.history.len();
        self.history.push(q.clone());
        for label in q.labels() {
            *self.seen.entry(label.to_string()).or_insert(0) += 1;
        }

        // Candidate label universe: seen labels that have index entries,
        // capped by query frequency.
        let detected = index.distinct_labels(&self.video)?;
        let mut universe: Vec<(&String, u64)> = self
            .seen
            .iter()
            .filter(|(l, _)| detected.contains(*l))
            .map(|(l, c)| (l, *c))
            .collect();
        universe.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        universe.truncate(cfg.max_candidate_labels);
        let universe: Vec<&String> = universe.into_iter().map(|(l, _)| l).collect();

        let new_candidates: Vec<LabelSet> = label_subsets(&universe, cfg.max_subset_size)
            .into_iter()
            .filter(|k| !self.candidates.contains(k))
            .collect();

        // Retroactive regret: new candidates score against every past
        // query under the layout that query ran with.
        for key in &new_candidates {
            for m in 0..i {
                let past = self.history[m].clone();
                for j in self.sots_touching(&past) {
                    let sot_range = self.sot_ranges[j].clone();
                    let hist_key = self.sots[j].layout_key_at(m).clone();
                    let hist_layout =
                        materialize_layout(index, &self.video, &hist_key, sot_range.clone(), self.dims, lcfg)?;
                    let cand_layout =
                        materialize_layout(index, &self.video, &Some(key.clone()), sot_range.clone(), self.dims, lcfg)?;
                    let d = cost::delta(index, &past, &hist_layout, &cand_layout, sot_range, params)?;
                    *self.sots[j].regret.entry(key.clone()).or_insert(0.0) += d;
                }
            }
            self.candidates.insert(key.clone());
            self.candidate_since.insert(key.clone(), i);
        }

        // Current query: accumulate regret for every candidate on every
        // touched segment, and re-check the not-tiling veto there.
        let touched = self.sots_touching(q);
        let candidates: Vec<LabelSet> = self.candidates.iter().cloned().collect();
        for &j in &touched {
            self.sots[j].touched_by.push(i);
            let sot_range = self.sot_ranges[j].clone();
            let cur_key = self.sots[j].layout_key_at(i).clone();
            let cur_layout =
                materialize_layout(index, &self.video, &cur_key, sot_range.clone(), self.dims, lcfg)?;
            let omega = TileLayout::omega(self.dims);
            let p_omega = cost::pixels_decoded(index, q, sot_range.clone(), &omega)?;
            for key in &candidates {
                let cand_layout =
                    materialize_layout(index, &self.video, &Some(key.clone()), sot_range.clone(), self.dims, lcfg)?;
                let d = cost::delta(index, q, &cur_layout, &cand_layout, sot_range.clone(), params)?;
                *self.sots[j].regret.entry(key.clone()).or_insert(0.0) += d;
                let p_cand = cost::pixels_decoded(index, q, sot_range.clone(), &cand_layout)?;
                if p_cand as f64 > cfg.alpha * p_omega as f64 {
                    self.sots[j].vetoed.insert(key.clone());
                }
            }
        }
        // New candidates also face the veto for past queries they were
        // scored against.
        for key in &new_candidates {
            for m in 0..i {
                let past = self.history[m].clone();
                for j in self.sots_touching(&past) {
                    let sot_range = self.sot_ranges[j].clone();
                    let cand_layout =
                        materialize_layout(index, &self.video, &Some(key.clone()), sot_range.clone(), self.dims, lcfg)?;
                    let omega = TileLayout::omega(self.dims);
                    let p_omega = cost::pixels_decoded(index, &past, sot_range.clone(), &omega)?;
                    let p_cand = cost::pixels_decoded(index, &past, sot_range.clone(), &cand_layout)?;
                    if p_cand as f64 > cfg.alpha * p_omega as f64 {
                        self.sots[j].vetoed.insert(key.clone());
                    }
                }
            }
        }

        // Retile any segment whose best admissible candidate's regret
        // exceeds eta times its re-encode cost.
        let mut actions = Vec::new();
        let updated: BTreeSet<usize> = if new_candidates.is_empty() {
            touched.iter().copied().collect()
        } else {
            (0..self.sots.len()).collect()
        };
        for j in updated {
            let Some((key, regret)) = self.sots[j]
                .regret
                .iter()
                .filter(|(k, _)| !self.sots[j].vetoed.contains(*k))
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(a.0)))
                .map(|(k, r)| (k.clone(), *r))
            else {
                continue;
            };
            let sot_range = self.sot_ranges[j].clone();
            let layout =
                materialize_layout(index, &self.video, &Some(key.clone()), sot_range.clone(), self.dims, lcfg)?;
            let r = cost::reencode_cost(
                self.dims.area(),
                sot_range.end - sot_range.start,
                &layout,
                params,
            );
            if regret > cfg.eta * r {
                let delta_cost = {
                    let cur_key = self.sots[j].layout_key_at(i).clone();
                    let cur_layout = materialize_layout(
                        index,
                        &self.video,
                        &cur_key,
                        sot_range.clone(),
                        self.dims,
                        lcfg,
                    )?;
                    cost::delta(index, q, &cur_layout, &layout, sot_range.clone(), params)?
                };
                let t0 = Instant::now();
                store.retile(j, &layout, lcfg)?;
                let seconds = t0.elapsed().as_secs_f64();
                let state = &mut self.sots[j];
                state.current = Some(key.clone());
                state.layout_log.push((i + 1, Some(key.clone())));
                state.resets.push(i);
                for v in state.regret.values_mut() {
                    *v = 0.0;
                }
                actions.push(RetileAction {
                    query_idx: i,
                    sot: j,
                    labels: key,
                    layout,
                    delta_cost,
                    regret,
                    reencode_cost: r,
                    seconds,
                });
            }
        }
        Ok(actions)
    }
}

/// Fine-grained layout around a segment's boxes for the given labels;
/// `None` (and label sets with no boxes) give the untiled layout.
pub fn materialize_layout(
    index: &SemanticIndex,
    video: &str,
    key: &Option<LabelSet>,
    sot_range: Range<u32>,
    dims: FrameDims,
    lcfg: &LayoutConfig,
) -> Result<TileLayout> {
    let Some(labels) = key else {
        return Ok(TileLayout::omega(dims));
    };
    if labels.is_empty() {
        return Ok(TileLayout::omega(dims));
    }
    let pred = LabelPredicate::any_of(labels.iter().cloned())?;
    let entries = index.lookup(video, &pred, Some(sot_range))?;
    let boxes: Vec<_> = entries.into_iter().map(|e| e.bbox).collect();
    Ok(fine_grained_layout(&boxes, dims, lcfg))
}

/// All non-empty subsets of `labels` up to `max_size`, plus the full set.
fn label_subsets(labels: &[&String], max_size: usize) -> Vec<LabelSet> {
    let n = labels.len();
    let mut out: Vec<LabelSet> = Vec::new();
    if n == 0 {
        return out;
    }
    for mask in 1u64..(1 << n) {
        let size = mask.count_ones() as usize;
        if size <= max_size || size == n {
            let set: LabelSet = (0..n)
                .filter(|b| mask & (1 << b) != 0)
                .map(|b| labels[b].clone())
                .collect();
            out.push(set);
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Known-workload optimizer: per segment, choose between the untiled
/// layout and a fine-grained layout around the workload objects detected
/// in that segment, minimizing estimated workload cost subject to the
/// not-tiling rule. `None` entries mean untiled.
pub fn optimize_known(
    store: &VideoStore,
    workload: &[QuerySpec],
    index: &SemanticIndex,
    cfg: &TunerConfig,
    lcfg: &LayoutConfig,
    params: &CostParams,
) -> Result<Vec<Option<TileLayout>>> {
    let m = store.manifest();
    let workload_labels: BTreeSet<String> = workload
        .iter()
        .flat_map(|q| q.labels().into_iter().map(str::to_string))
        .collect();
    let mut assignment = Vec::with_capacity(m.sots.len());
    for sot in &m.sots {
        let range = sot.frame_range.clone();
        let detected: BTreeSet<String> = if workload_labels.is_empty() {
            BTreeSet::new()
        } else {
            let pred = LabelPredicate::any_of(workload_labels.iter().cloned())?;
            index
                .lookup(store.name(), &pred, Some(range.clone()))?
                .into_iter()
                .map(|e| e.bbox.label)
                .collect()
        };
        if detected.is_empty() {
            assignment.push(None);
            continue;
        }
        let candidate =
            materialize_layout(index, store.name(), &Some(detected), range.clone(), m.dims, lcfg)?;
        if candidate.is_omega()
            || !cost::should_tile(index, workload, range.clone(), &candidate, cfg.alpha)?
        {
            assignment.push(None);
            continue;
        }
        let omega = TileLayout::omega(m.dims);
        let mut cost_omega = 0.0;
        let mut cost_cand = 0.0;
        for q in workload {
            cost_omega += cost::estimate_cost(index, q, range.clone(), &omega, params)?.cost;
            cost_cand += cost::estimate_cost(index, q, range.clone(), &candidate, params)?.cost;
        }
        if cost_cand < cost_omega {
            assignment.push(Some(candidate));
        } else {
            assignment.push(None);
        }
    }
    Ok(assignment)
}

/// Per-query outcome of a strategy run.
#[derive(Debug, Clone)]
pub struct QueryRun {
    pub strategy: Strategy,
    pub query_idx: usize,
    pub label: String,
    pub start: u32,
    pub span: u32,
    /// Decode seconds measured by the engine counters.
    pub measured_s: f64,
    /// Model-estimated cost under the layouts the query ran with.
    pub model_s: f64,
    pub pixels: u64,
    pub tiles: u64,
    /// Wall-clock seconds spent retiling charged to this query.
    pub retile_s: f64,
}

/// Execute a workload under one strategy against a live store, measuring
/// decode and retile time per query.
///
/// `all_objects` tiles every segment around all detected objects before
/// the first query and charges that time to it. `incremental_more`
/// re-tiles each touched segment around every label queried so far after
/// the query runs. `incremental_regret` runs the regret tuner. Retiles
/// always happen after the query executes, so a query never benefits from
/// the work it triggered.
pub fn run_strategy(
    strategy: Strategy,
    store: &VideoStore,
    index: &SemanticIndex,
    queries: &[QuerySpec],
    cfg: &TunerConfig,
    lcfg: &LayoutConfig,
    params: &CostParams,
) -> Result<(Vec<QueryRun>, Vec<RetileAction>)> {
    let m = store.manifest();
    let mut actions: Vec<RetileAction> = Vec::new();
    let mut upfront_s = 0.0;

    if strategy == Strategy::AllObjects {
        let all: BTreeSet<String> = index.distinct_labels(store.name())?;
        for (j, sot) in m.sots.iter().enumerate() {
            let layout = materialize_layout(
                index,
                store.name(),
                &Some(all.clone()),
                sot.frame_range.clone(),
                m.dims,
                lcfg,
            )?;
            if layout.is_omega() && sot.layout.is_omega() {
                continue;
            }
            let r = cost::reencode_cost(m.dims.area(), sot.gop_frames(), &layout, params);
            let t0 = Instant::now();
            store.retile(j, &layout, lcfg)?;
            let seconds = t0.elapsed().as_secs_f64();
            upfront_s += seconds;
            actions.push(RetileAction {
                query_idx: 0,
                sot: j,
                labels: all.clone(),
                layout,
                delta_cost: 0.0,
                regret: 0.0,
                reencode_cost: r,
                seconds,
            });
        }
    }

    let mut regret_state = RegretState::new(store);
    let mut more_seen: BTreeSet<String> = BTreeSet::new();
    let mut more_current: Vec<Option<LabelSet>> = vec![None; m.sots.len()];

    let mut runs = Vec::with_capacity(queries.len());
    for (i, q) in queries.iter().enumerate() {
        crate::counters::reset_decode_stats();
        let regions = store.scan(index, &q.predicate, q.frame_range.clone())?;
        drop(regions);
        let stats = crate::counters::decode_stats();

        // Model the executed configuration before any post-query retiles.
        let snapshot = store.manifest();
        let range = q.effective_range(snapshot.length);
        let mut model_s = 0.0;
        for sot in &snapshot.sots {
            if sot.frame_range.start < range.end && range.start < sot.frame_range.end {
                model_s +=
                    cost::estimate_cost(index, q, sot.frame_range.clone(), &sot.layout, params)?
                        .cost;
            }
        }

        let mut retile_s = if i == 0 { upfront_s } else { 0.0 };
        match strategy {
            Strategy::NotTiled | Strategy::AllObjects => {}
            Strategy::IncrementalMore => {
                let detected = index.distinct_labels(store.name())?;
                more_seen.extend(q.labels().into_iter().map(str::to_string));
                let target: LabelSet = more_seen
                    .iter()
                    .filter(|l| detected.contains(*l))
                    .cloned()
                    .collect();
                if !target.is_empty() {
                    for (j, sot) in snapshot.sots.iter().enumerate() {
                        let touches = sot.frame_range.start < range.end
                            && range.start < sot.frame_range.end;
                        if !touches || more_current[j].as_ref() == Some(&target) {
                            continue;
                        }
                        let layout = materialize_layout(
                            index,
                            store.name(),
                            &Some(target.clone()),
                            sot.frame_range.clone(),
                            m.dims,
                            lcfg,
                        )?;
                        if layout.is_omega() && sot.layout.is_omega() {
                            more_current[j] = Some(target.clone());
                            continue;
                        }
                        let r = cost::reencode_cost(
                            m.dims.area(),
                            sot.gop_frames(),
                            &layout,
                            params,
                        );
                        let t0 = Instant::now();
                        store.retile(j, &layout, lcfg)?;
                        let seconds = t0.elapsed().as_secs_f64();
                        retile_s += seconds;
                        more_current[j] = Some(target.clone());
                        actions.push(RetileAction {
                            query_idx: i,
                            sot: j,
                            labels: target.clone(),
                            layout,
                            delta_cost: 0.0,
                            regret: 0.0,
                            reencode_cost: r,
                            seconds,
                        });
                    }
                }
            }
            Strategy::IncrementalRegret => {
                let acted = regret_state.observe_query(q, index, store, cfg, lcfg, params)?;
                retile_s += acted.iter().map(|a| a.seconds).sum::<f64>();
                actions.extend(acted);
            }
        }

        let label = q
            .labels()
            .into_iter()
            .map(str::to_string)
            .collect::<Vec<_>>()
            .join("+");
        runs.push(QueryRun {
            strategy,
            query_idx: i,
            label,
            start: range.start,
            span: range.end - range.start,
            measured_s: stats.seconds,
            model_s,
            pixels: stats.pixels_decoded,
            tiles: stats.tiles_decoded,
            retile_s,
        });
    }
    Ok((runs, actions))
}

/// Write tuner retile actions as the event-log CSV.
pub fn write_event_log(path: impl AsRef<Path>, actions: &[RetileAction]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(
        f,
        "query_idx,sot_idx,action,layout_labels,delta_cost,regret,reencode_cost"
    )?;
    for a in actions {
        let labels: Vec<&str> = a.labels.iter().map(String::as_str).collect();
        writeln!(
            f,
            "{},{},retile,{},{:.9},{:.9},{:.9}",
            a.query_idx,
            a.sot,
            labels.join("+"),
            a.delta_cost,
            a.regret,
            a.reencode_cost
        )?;
    }
    Ok(())
}
