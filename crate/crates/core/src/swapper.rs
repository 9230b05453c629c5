//! Family construction and the offer/receive swapping loop.
//!
//! Each iteration builds one visitor matrix per partition, then walks the
//! partitions round-robin, each offering its next most extroverted vertex
//! (with its family) to adjacent partitions in order of preference. A
//! receiver accepts when the family would be more introverted with it than
//! it is at home and the move keeps the partitioning balanced.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{imbalance_of, LabeledGraph, PartitionId, Partitioning, VertexId};
use crate::tpstry::Tpstry;
use crate::vm::{
    AugmentedRegion, FlowModel, LabelCensus, PartitionRegion, Region, RowCache, Trace, VertexStatus, VisitorMatrix,
    VmContext, VmError, VmParams,
};
use crate::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SwapError {
    #[error("vertex {0} is safe and cannot seed a family")]
    CandidateIsSafe(VertexId),
    #[error("family of vertex {0} has no neighbours outside its partition")]
    NoExternalNeighbors(VertexId),
    #[error(transparent)]
    Vm(#[from] VmError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Family {
    pub candidate: VertexId,
    pub members: BTreeSet<VertexId>,
    pub origin: PartitionId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwapOffer {
    pub family: Family,
    pub destination: PartitionId,
    pub sender_loss: f64,
    pub iteration: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RejectReason {
    InsufficientGain,
    Balance,
}

/// Receiver verdict; the gain is absent when balance alone decided it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub receiver_gain: Option<f64>,
    pub reason: Option<RejectReason>,
}

impl Verdict {
    pub fn decision(&self) -> Decision {
        if self.reason.is_none() {
            Decision::Accept
        } else {
            Decision::Reject
        }
    }
}

/// One offer as written to the swap log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapLogEntry {
    pub iteration: usize,
    pub candidate: VertexId,
    pub family: Vec<VertexId>,
    pub from: PartitionId,
    pub to: PartitionId,
    pub sender_loss: f64,
    pub receiver_gain: Option<f64>,
    pub decision: Decision,
    pub reason: Option<RejectReason>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnhanceConfig {
    pub max_iterations: usize,
    /// Maximum allowed imbalance after any move.
    pub epsilon: f64,
    pub family_cap: usize,
    pub family_threshold: f64,
    pub vm: VmParams,
    /// Candidates offered per partition and iteration; `None` offers all.
    pub top_k: Option<usize>,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        Self {
            max_iterations: 8,
            epsilon: 0.05,
            family_cap: 10,
            family_threshold: 0.5,
            vm: VmParams::default(),
            top_k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub offers: usize,
    pub swaps: usize,
    pub moved: usize,
    pub imbalance: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InvocationReport {
    pub iterations: Vec<IterationReport>,
    pub total_moved: usize,
    pub initial_imbalance: f64,
    pub final_imbalance: f64,
    #[serde(skip)]
    pub log: Vec<SwapLogEntry>,
}

impl InvocationReport {
    pub fn swaps(&self) -> usize {
        self.iterations.iter().map(|i| i.swaps).sum()
    }

    pub fn rejections(&self, reason: RejectReason) -> usize {
        self.log.iter().filter(|e| e.reason == Some(reason)).count()
    }
}

/// The mutable swapping state as seen by one offer.
pub struct Board<'a> {
    pub partitioning: &'a Partitioning,
    pub census: &'a LabelCensus,
    /// Vertices already moved this iteration.
    pub moved: &'a HashSet<VertexId>,
}

impl Board<'_> {
    fn home(&self, part: PartitionId) -> PartitionRegion<'_> {
        PartitionRegion {
            partitioning: self.partitioning,
            census: self.census,
            part,
        }
    }
}

fn trace_at_home(model: &mut FlowModel<'_>, board: &Board<'_>, v: VertexId) -> Result<Trace, VmError> {
    let depth = model.context().depth();
    model.trace(v, &board.home(board.partitioning.part(v)), depth)
}

/// Share of `n`'s outgoing traversal mass that goes to `m`.
fn pull_towards(trace: &Trace, m: VertexId) -> f64 {
    if trace.total <= 0.0 {
        return 0.0;
    }
    trace.flow.get(&m).copied().unwrap_or(0.0) / trace.total
}

/// Closure of `candidate` under "a traversal from neighbour `n` more likely
/// than not proceeds to member `m`", restricted to unmoved vertices of the
/// candidate's partition and capped at `cap` members.
pub fn family(
    model: &mut FlowModel<'_>,
    board: &Board<'_>,
    vm: &VisitorMatrix,
    candidate: VertexId,
    threshold: f64,
    cap: usize,
) -> Result<Family, SwapError> {
    if vm.status(candidate) != VertexStatus::Scored {
        return Err(SwapError::CandidateIsSafe(candidate));
    }
    let g = model.context().graph;
    let origin = board.partitioning.part(candidate);
    let mut members = BTreeSet::from([candidate]);
    let mut rejected = HashSet::new();
    let mut queue = VecDeque::from([candidate]);
    'grow: while let Some(m) = queue.pop_front() {
        for &n in g.neighbors(m) {
            if members.len() >= cap.max(1) {
                break 'grow;
            }
            if members.contains(&n)
                || board.moved.contains(&n)
                || board.partitioning.part(n) != origin
                || rejected.contains(&(n, m))
            {
                continue;
            }
            let trace = trace_at_home(model, board, n)?;
            if pull_towards(&trace, m) > threshold {
                members.insert(n);
                queue.push_back(n);
            } else {
                rejected.insert((n, m));
            }
        }
    }
    Ok(Family {
        candidate,
        members,
        origin,
    })
}

/// Partitions adjacent to the family, by descending traversal mass flowing
/// into them from family members (ties by ascending id).
pub fn preferred_destinations(
    model: &mut FlowModel<'_>,
    board: &Board<'_>,
    fam: &Family,
) -> Result<Vec<(PartitionId, f64)>, SwapError> {
    let g = model.context().graph;
    let p = board.partitioning;
    let mut mass: BTreeMap<PartitionId, f64> = BTreeMap::new();
    for &m in &fam.members {
        for &n in g.neighbors(m) {
            if p.part(n) != fam.origin {
                mass.entry(p.part(n)).or_insert(0.0);
            }
        }
    }
    if mass.is_empty() {
        return Err(SwapError::NoExternalNeighbors(fam.candidate));
    }
    for &m in &fam.members {
        let trace = trace_at_home(model, board, m)?;
        for (&w, &x) in &trace.flow {
            if let Some(slot) = mass.get_mut(&p.part(w)) {
                *slot += x;
            }
        }
    }
    let mut order: Vec<(PartitionId, f64)> = mass.into_iter().collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(order)
}

fn family_introversion(
    model: &mut FlowModel<'_>,
    members: &BTreeSet<VertexId>,
    region: &dyn Region,
) -> Result<f64, VmError> {
    let depth = model.context().depth();
    let (mut intra, mut total) = (0.0, 0.0);
    for &m in members {
        let trace = model.trace(m, region, depth)?;
        intra += trace.intra;
        total += trace.total;
    }
    Ok(if total > 0.0 { intra / total } else { 0.0 })
}

/// Introversion the family has in its own partition.
pub fn sender_loss(model: &mut FlowModel<'_>, board: &Board<'_>, fam: &Family) -> Result<f64, VmError> {
    family_introversion(model, &fam.members, &board.home(fam.origin))
}

/// Introversion the family would have after joining `dest`.
pub fn receiver_gain(
    model: &mut FlowModel<'_>,
    board: &Board<'_>,
    fam: &Family,
    dest: PartitionId,
) -> Result<f64, VmError> {
    let g = model.context().graph;
    let region = AugmentedRegion::new(g, board.partitioning, board.census, dest, &fam.members);
    family_introversion(model, &fam.members, &region)
}

/// Imbalance after moving `count` vertices from `from` to `to`.
pub fn imbalance_after(p: &Partitioning, from: PartitionId, to: PartitionId, count: usize) -> f64 {
    let mut sizes = p.sizes().to_vec();
    sizes[from as usize] -= count;
    sizes[to as usize] += count;
    imbalance_of(&sizes)
}

/// Decides an offer: balance first, then strict gain over loss.
pub fn evaluate_offer(
    model: &mut FlowModel<'_>,
    board: &Board<'_>,
    offer: &SwapOffer,
    epsilon: f64,
) -> Result<Verdict, VmError> {
    let after = imbalance_after(
        board.partitioning,
        offer.family.origin,
        offer.destination,
        offer.family.members.len(),
    );
    if after > epsilon + 1e-12 {
        return Ok(Verdict {
            receiver_gain: None,
            reason: Some(RejectReason::Balance),
        });
    }
    let gain = receiver_gain(model, board, &offer.family, offer.destination)?;
    Ok(judge(gain, offer.sender_loss))
}

fn judge(gain: f64, loss: f64) -> Verdict {
    Verdict {
        receiver_gain: Some(gain),
        reason: (gain <= loss).then_some(RejectReason::InsufficientGain),
    }
}

/// Applies a family move to the partitioning and the label census.
pub fn apply_move(g: &LabeledGraph, p: &mut Partitioning, census: &mut LabelCensus, fam: &Family, to: PartitionId) {
    for &m in &fam.members {
        census.record_move(g.label(m), fam.origin, to);
        p.move_vertex(m, to);
    }
}

/// One round-robin pass over all partitions' candidate queues.
pub fn run_iteration(
    model: &mut FlowModel<'_>,
    p: &mut Partitioning,
    census: &mut LabelCensus,
    vms: &[VisitorMatrix],
    cfg: &EnhanceConfig,
    iteration: usize,
) -> Result<Vec<SwapLogEntry>, Error> {
    let g = model.context().graph;
    let mut queues: Vec<VecDeque<VertexId>> = vms
        .iter()
        .map(|vm| {
            let order = vm.extroversion_ordering();
            let take = cfg.top_k.unwrap_or(order.len());
            order.into_iter().take(take).map(|(v, _)| v).collect()
        })
        .collect();
    let mut moved = HashSet::new();
    let mut log = Vec::new();
    while queues.iter().any(|q| !q.is_empty()) {
        for (part, queue) in queues.iter_mut().enumerate() {
            let Some(candidate) = pop_live(queue, p, part as PartitionId, &moved) else {
                continue;
            };
            let board = Board {
                partitioning: p,
                census,
                moved: &moved,
            };
            let fam = family(
                model,
                &board,
                &vms[part],
                candidate,
                cfg.family_threshold,
                cfg.family_cap,
            )?;
            let destinations = match preferred_destinations(model, &board, &fam) {
                Ok(d) => d,
                Err(SwapError::NoExternalNeighbors(_)) => continue,
                Err(e) => return Err(e.into()),
            };
            let loss = sender_loss(model, &board, &fam)?;
            let mut accepted = None;
            for (dest, _) in destinations {
                let offer = SwapOffer {
                    family: fam.clone(),
                    destination: dest,
                    sender_loss: loss,
                    iteration,
                };
                let verdict = evaluate_offer(model, &board, &offer, cfg.epsilon)?;
                log.push(SwapLogEntry {
                    iteration,
                    candidate,
                    family: fam.members.iter().copied().collect(),
                    from: fam.origin,
                    to: dest,
                    sender_loss: loss,
                    receiver_gain: verdict.receiver_gain,
                    decision: verdict.decision(),
                    reason: verdict.reason,
                });
                if verdict.decision() == Decision::Accept {
                    accepted = Some(dest);
                    break;
                }
            }
            if let Some(dest) = accepted {
                apply_move(g, p, census, &fam, dest);
                moved.extend(fam.members.iter().copied());
            }
        }
    }
    Ok(log)
}

fn pop_live(
    queue: &mut VecDeque<VertexId>,
    p: &Partitioning,
    part: PartitionId,
    moved: &HashSet<VertexId>,
) -> Option<VertexId> {
    while let Some(v) = queue.pop_front() {
        if !moved.contains(&v) && p.part(v) == part {
            return Some(v);
        }
    }
    None
}

/// Builds every partition's visitor matrix, in parallel, and folds the new
/// rows into `cache` in partition order.
pub fn build_matrices(
    ctx: &VmContext<'_>,
    cache: &mut RowCache,
    p: &Partitioning,
    census: &LabelCensus,
) -> Result<Vec<VisitorMatrix>, VmError> {
    let shared = &*cache;
    let built: Vec<_> = (0..p.k() as PartitionId)
        .into_par_iter()
        .map(|part| {
            let mut model = ctx.model(shared);
            let vm = VisitorMatrix::build(&mut model, p, census, part)?;
            Ok((vm, model.into_new_rows()))
        })
        .collect::<Result<_, VmError>>()?;
    let mut vms = Vec::with_capacity(built.len());
    for (vm, rows) in built {
        cache.absorb(rows);
        vms.push(vm);
    }
    Ok(vms)
}

/// One invocation: up to `max_iterations` of matrix rebuild and swapping,
/// stopping after an iteration with no accepted move.
pub fn enhance(
    g: &LabeledGraph,
    p0: &Partitioning,
    trie: &Tpstry,
    cfg: &EnhanceConfig,
) -> Result<(Partitioning, InvocationReport), Error> {
    enhance_with(g, p0, trie, cfg, &mut RowCache::new(), &mut |_, _| {})
}

/// [`enhance`] with a caller-held row cache and a hook run after every
/// iteration with the partitioning it produced.
pub fn enhance_with(
    g: &LabeledGraph,
    p0: &Partitioning,
    trie: &Tpstry,
    cfg: &EnhanceConfig,
    cache: &mut RowCache,
    observer: &mut dyn FnMut(&IterationReport, &Partitioning),
) -> Result<(Partitioning, InvocationReport), Error> {
    let ctx = VmContext::new(g, trie, cfg.vm);
    let mut p = p0.clone();
    let mut census = LabelCensus::new(g, &p);
    let mut report = InvocationReport {
        initial_imbalance: p.imbalance(),
        final_imbalance: p.imbalance(),
        ..InvocationReport::default()
    };
    for iteration in 1..=cfg.max_iterations {
        let vms = build_matrices(&ctx, cache, &p, &census)?;
        let mut model = ctx.model(cache);
        let log = run_iteration(&mut model, &mut p, &mut census, &vms, cfg, iteration)?;
        let new_rows = model.into_new_rows();
        cache.absorb(new_rows);
        let accepted: Vec<&SwapLogEntry> = log.iter().filter(|e| e.decision == Decision::Accept).collect();
        let it = IterationReport {
            iteration,
            offers: log.len(),
            swaps: accepted.len(),
            moved: accepted.iter().map(|e| e.family.len()).sum(),
            imbalance: p.imbalance(),
        };
        observer(&it, &p);
        report.total_moved += it.moved;
        report.log.extend(log);
        let done = it.swaps == 0;
        report.iterations.push(it);
        if done {
            break;
        }
    }
    report.final_imbalance = p.imbalance();
    Ok((p, report))
}
