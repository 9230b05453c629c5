//! Simulated live loop: queries arrive tick by tick, ipt is measured at a
//! fixed interval and enhancement is invoked on a fixed schedule.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt::Write as _;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{LabeledGraph, Partitioning};
use crate::query_exec::{measure_workload, IptMode};
use crate::rpq::{QueryExpr, Workload};
use crate::swapper::{enhance_with, EnhanceConfig, InvocationReport};
use crate::tpstry::Tpstry;
use crate::vm::RowCache;
use crate::Error;

/// Unnormalized frequency of one query over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Curve {
    Constant {
        value: f64,
    },
    /// `from` until `start`, `to` from `end`, linear in between.
    Linear {
        from: f64,
        to: f64,
        start: u64,
        end: u64,
    },
    /// `(1 + cos(2π (t / period - phase))) / 2`.
    RaisedCosine {
        period: f64,
        phase: f64,
    },
}

impl Curve {
    pub fn at(&self, tick: u64) -> f64 {
        match *self {
            Curve::Constant { value } => value,
            Curve::Linear { from, to, start, end } => {
                if tick <= start {
                    from
                } else if tick >= end {
                    to
                } else {
                    let s = (tick - start) as f64 / (end - start) as f64;
                    from + (to - from) * s
                }
            }
            Curve::RaisedCosine { period, phase } => (1.0 + (TAU * (tick as f64 / period - phase)).cos()) / 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub query: QueryExpr,
    pub curve: Curve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamScenario {
    pub generators: Vec<Generator>,
    /// Ticks `0..horizon` are simulated.
    pub horizon: u64,
    pub measurement_interval: u64,
    pub invocation_schedule: Vec<u64>,
    pub queries_per_tick: usize,
    /// Ticks of history the workload window keeps.
    pub window: u64,
    pub seed: u64,
}

impl StreamScenario {
    /// Generator frequencies at `tick`, normalized to sum 1. When every
    /// curve is zero the queries share equally.
    pub fn frequencies(&self, tick: u64) -> Vec<f64> {
        let raw: Vec<f64> = self.generators.iter().map(|g| g.curve.at(tick).max(0.0)).collect();
        let total: f64 = raw.iter().sum();
        if total > 0.0 {
            raw.iter().map(|r| r / total).collect()
        } else {
            vec![1.0 / raw.len() as f64; raw.len()]
        }
    }
}

/// Raised-cosine frequencies with phases evenly spread over one period.
pub fn generate_periodic_stream(queries: &[QueryExpr], period: f64, horizon: u64, seed: u64) -> StreamScenario {
    let n = queries.len() as f64;
    StreamScenario {
        generators: queries
            .iter()
            .enumerate()
            .map(|(i, q)| Generator {
                query: q.clone(),
                curve: Curve::RaisedCosine {
                    period,
                    phase: i as f64 / n,
                },
            })
            .collect(),
        horizon,
        measurement_interval: 1,
        invocation_schedule: Vec::new(),
        queries_per_tick: default_queries_per_tick(),
        window: default_window(),
        seed,
    }
}

fn default_queries_per_tick() -> usize {
    20
}

fn default_window() -> u64 {
    10
}

fn default_interval() -> u64 {
    1
}

/// Scenario file contents: explicit curves, or the periodic shorthand
/// `{queries, period, horizon, schedule}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioFile {
    Explicit(StreamScenario),
    Periodic {
        queries: Vec<QueryExpr>,
        period: f64,
        horizon: u64,
        #[serde(default)]
        schedule: Vec<u64>,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_queries_per_tick")]
        queries_per_tick: usize,
        #[serde(default = "default_window")]
        window: u64,
        #[serde(default = "default_interval")]
        measurement_interval: u64,
    },
}

impl ScenarioFile {
    pub fn into_scenario(self) -> StreamScenario {
        match self {
            ScenarioFile::Explicit(s) => s,
            ScenarioFile::Periodic {
                queries,
                period,
                horizon,
                schedule,
                seed,
                queries_per_tick,
                window,
                measurement_interval,
            } => StreamScenario {
                invocation_schedule: schedule,
                queries_per_tick,
                window,
                measurement_interval,
                ..generate_periodic_stream(&queries, period, horizon, seed)
            },
        }
    }
}

/// `from` fades out and `to` fades in linearly over `start..end`.
pub fn crossfade(from: &QueryExpr, to: &QueryExpr, start: u64, end: u64, horizon: u64, seed: u64) -> StreamScenario {
    StreamScenario {
        generators: vec![
            Generator {
                query: from.clone(),
                curve: Curve::Linear {
                    from: 1.0,
                    to: 0.0,
                    start,
                    end,
                },
            },
            Generator {
                query: to.clone(),
                curve: Curve::Linear {
                    from: 0.0,
                    to: 1.0,
                    start,
                    end,
                },
            },
        ],
        horizon,
        measurement_interval: 1,
        invocation_schedule: Vec::new(),
        queries_per_tick: 20,
        window: 5,
        seed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    pub enhance: EnhanceConfig,
    pub star_cap: usize,
    pub mode: IptMode,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            enhance: EnhanceConfig::default(),
            star_cap: 4,
            mode: IptMode::Partial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub weighted_ipt: f64,
    pub invoked: bool,
    pub swaps: usize,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub series: Vec<TickRecord>,
    pub invocations: Vec<(u64, InvocationReport)>,
    pub partitioning: Partitioning,
}

impl ScenarioRun {
    /// `tick,weighted_ipt,invoked,swaps` rows under a header.
    pub fn to_csv(&self) -> String {
        series_csv(&self.series)
    }
}

pub fn series_csv(series: &[TickRecord]) -> String {
    let mut out = String::from("tick,weighted_ipt,invoked,swaps\n");
    for r in series {
        let _ = writeln!(out, "{},{},{},{}", r.tick, r.weighted_ipt, r.invoked, r.swaps);
    }
    out
}

/// Workload, trie and row cache carried across ticks.
pub struct Engine<'g> {
    graph: &'g LabeledGraph,
    partitioning: Partitioning,
    workload: Workload,
    trie: Tpstry,
    cache: RowCache,
    cfg: EngineConfig,
}

impl<'g> Engine<'g> {
    pub fn new(graph: &'g LabeledGraph, p0: Partitioning, window: u64, cfg: EngineConfig) -> Self {
        Self {
            graph,
            partitioning: p0,
            workload: Workload::new(window),
            trie: Tpstry::new(graph.vocabulary().clone()),
            cache: RowCache::new(),
            cfg,
        }
    }

    pub fn partitioning(&self) -> &Partitioning {
        &self.partitioning
    }

    pub fn trie(&self) -> &Tpstry {
        &self.trie
    }

    pub fn workload(&self) -> &Workload {
        &self.workload
    }

    pub fn record(&mut self, q: &QueryExpr, tick: u64) -> Result<(), Error> {
        self.workload.record_query(q, tick)?;
        Ok(())
    }

    pub fn measure(&self, tick: u64) -> Result<f64, Error> {
        let report = measure_workload(
            self.graph,
            &self.partitioning,
            &self.workload,
            tick,
            self.cfg.star_cap,
            self.cfg.mode,
        )?;
        Ok(report.weighted_ipt)
    }

    /// Brings the trie in line with the in-window queries at `tick` and
    /// drops cached rows the change affects.
    pub fn sync_trie(&mut self, tick: u64) -> Result<(), Error> {
        let freqs: BTreeMap<_, _> = self
            .workload
            .frequencies(tick)
            .into_iter()
            .filter(|&(_, f)| f > 0.0)
            .collect();
        let before = self.trie.snapshot();
        let stale: Vec<_> = self
            .trie
            .queries()
            .iter()
            .filter(|h| !freqs.contains_key(h))
            .copied()
            .collect();
        for h in stale {
            self.trie.remove_query(h);
        }
        for h in freqs.keys() {
            if !self.trie.queries().contains(h) {
                let q = self.workload.query(*h).expect("recorded queries are registered");
                self.trie.insert_expr(q, self.cfg.star_cap)?;
            }
        }
        self.trie.recompute_probabilities(&freqs)?;
        let changed = self.trie.diff_since(&before);
        self.cache.invalidate(self.graph, &changed);
        Ok(())
    }

    /// Syncs the trie and runs one enhancement on the current partitioning.
    pub fn invoke(&mut self, tick: u64) -> Result<InvocationReport, Error> {
        self.sync_trie(tick)?;
        let (p, report) = enhance_with(
            self.graph,
            &self.partitioning,
            &self.trie,
            &self.cfg.enhance,
            &mut self.cache,
            &mut |_, _| {},
        )?;
        self.partitioning = p;
        Ok(report)
    }
}

/// Drives `arrivals` over `0..horizon`; each tick records its queries, then
/// invokes if scheduled, then measures if due or just invoked.
#[allow(clippy::too_many_arguments)]
pub fn run_events(
    g: &LabeledGraph,
    p0: &Partitioning,
    horizon: u64,
    window: u64,
    measurement_interval: u64,
    schedule: &[u64],
    cfg: &EngineConfig,
    mut arrivals: impl FnMut(u64) -> Vec<QueryExpr>,
) -> Result<ScenarioRun, Error> {
    let mut engine = Engine::new(g, p0.clone(), window, *cfg);
    let mut series = Vec::new();
    let mut invocations = Vec::new();
    for tick in 0..horizon {
        for q in arrivals(tick) {
            engine.record(&q, tick)?;
        }
        let mut swaps = None;
        if schedule.contains(&tick) {
            let report = engine.invoke(tick)?;
            swaps = Some(report.swaps());
            invocations.push((tick, report));
        }
        let measured = measurement_interval > 0 && tick % measurement_interval == 0;
        if measured || swaps.is_some() {
            series.push(TickRecord {
                tick,
                weighted_ipt: engine.measure(tick)?,
                invoked: swaps.is_some(),
                swaps: swaps.unwrap_or(0),
            });
        }
    }
    Ok(ScenarioRun {
        series,
        invocations,
        partitioning: engine.partitioning,
    })
}

/// Samples `queries_per_tick` queries per tick from the scenario's
/// frequencies with a seeded generator and drives the loop.
pub fn run_scenario(
    g: &LabeledGraph,
    p0: &Partitioning,
    scenario: &StreamScenario,
    cfg: &EngineConfig,
) -> Result<ScenarioRun, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    run_events(
        g,
        p0,
        scenario.horizon,
        scenario.window,
        scenario.measurement_interval,
        &scenario.invocation_schedule,
        cfg,
        |tick| {
            if scenario.generators.is_empty() {
                return Vec::new();
            }
            let dist = WeightedIndex::new(scenario.frequencies(tick)).expect("frequencies sum to 1");
            (0..scenario.queries_per_tick)
                .map(|_| scenario.generators[dist.sample(&mut rng)].query.clone())
                .collect()
        },
    )
}

/// Replays recorded `(tick, query)` events, which must be in tick order.
pub fn run_stream(
    g: &LabeledGraph,
    p0: &Partitioning,
    events: &[(u64, QueryExpr)],
    window: u64,
    measurement_interval: u64,
    schedule: &[u64],
    cfg: &EngineConfig,
) -> Result<ScenarioRun, Error> {
    let horizon = events.iter().map(|(t, _)| t + 1).max().unwrap_or(0);
    let mut next = 0;
    run_events(g, p0, horizon, window, measurement_interval, schedule, cfg, |tick| {
        let mut out = Vec::new();
        while next < events.len() && events[next].0 <= tick {
            out.push(events[next].1.clone());
            next += 1;
        }
        out
    })
}
