//! Query propagation over the overlay and the phased experiment loop:
//! flooding warm-up, B0 construction, learned routing with scheduled
//! knowledge-base maintenance, and per-interval metrics.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, MaintenanceMode, SimConfig, UpdateScope};
use crate::datagen::{DataError, Dataset};
use crate::ids::{DocId, PeerId, QueryId, TermId};
use crate::knowledge_base::{KnowledgeBase, LogEntry, MaintenanceStats, QueryLog, UpdateOutcome};
use crate::routing::{self, LpsOptions, Query, Strategy};
use crate::sets;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown peer {0}")]
    UnknownPeer(PeerId),
    #[error("query {0} was already issued")]
    DuplicateQuery(QueryId),
    #[error("query {0} has no terms")]
    EmptyQuery(QueryId),
    #[error("overlay_size is {expected} but the dataset has {actual} peers")]
    OverlaySize { expected: usize, actual: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// A `(peer, document)` copy; replicas on different peers are distinct.
pub type Instance = (PeerId, DocId);

#[derive(Debug, Clone)]
pub struct Peer {
    pub id: PeerId,
    pub neighbors: Vec<PeerId>,
    pub documents: Vec<(DocId, Vec<TermId>)>,
    pub log: QueryLog,
    pub kb: KnowledgeBase,
    seen: HashSet<QueryId>,
    issued_since_update: usize,
}

impl Peer {
    pub fn new(id: PeerId, neighbors: Vec<PeerId>, documents: Vec<(DocId, Vec<TermId>)>) -> Self {
        Self {
            id,
            neighbors,
            documents,
            log: QueryLog::new(),
            kb: KnowledgeBase::new(),
            seen: HashSet::new(),
            issued_since_update: 0,
        }
    }

    /// Documents containing every query term.
    pub fn local_search(&self, terms: &[TermId]) -> Vec<DocId> {
        self.documents
            .iter()
            .filter(|(_, doc_terms)| sets::is_subset(terms, doc_terms))
            .map(|(id, _)| *id)
            .collect()
    }

    pub fn has_seen(&self, q: QueryId) -> bool {
        self.seen.contains(&q)
    }

    fn maintain(&mut self, mode: MaintenanceMode) -> Option<MaintenanceStats> {
        self.issued_since_update = 0;
        match mode {
            MaintenanceMode::Static => Some(self.kb.rebuild_static(&mut self.log)),
            MaintenanceMode::Incremental => match self.kb.update_incremental(&mut self.log) {
                UpdateOutcome::Updated(stats) => Some(stats),
                UpdateOutcome::NoNewEntries => None,
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryOutcome {
    pub results: BTreeSet<Instance>,
    /// Query forwards; responses are not counted.
    pub messages: usize,
    /// Peers (origin included) with at least one match.
    pub responders: BTreeSet<PeerId>,
    /// Peers that evaluated the query locally.
    pub evaluations: usize,
}

/// `|found ∩ relevant| / |relevant|`, or `None` when nothing is relevant.
pub fn recall(outcome: &QueryOutcome, relevant: &BTreeSet<Instance>) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let found = outcome.results.intersection(relevant).count();
    Some(found as f64 / relevant.len() as f64)
}

/// An in-flight forward. `path` runs from the origin to the sender.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryMessage {
    pub target: PeerId,
    /// Hops left, counting this one.
    pub ttl: u32,
    pub path: Vec<PeerId>,
}

impl QueryMessage {
    pub fn sender(&self) -> PeerId {
        *self.path.last().expect("path starts at the origin")
    }
}

/// How one query is routed.
#[derive(Debug, Clone, Copy)]
pub struct RouteParams {
    pub ttl: u32,
    pub pmax: usize,
    pub origin_strategy: Strategy,
    pub intermediate_strategy: Strategy,
    pub min_overlap: usize,
    pub fallback: bool,
    pub seed: u64,
}

impl RouteParams {
    pub fn from_config(cfg: &SimConfig) -> Self {
        Self {
            ttl: cfg.ttl,
            pmax: cfg.pmax,
            origin_strategy: cfg.strategy,
            intermediate_strategy: cfg.intermediate(),
            min_overlap: cfg.sqpc_min_overlap,
            fallback: cfg.fallback,
            seed: cfg.seed,
        }
    }

    pub fn flooding(ttl: u32, pmax: usize, seed: u64) -> Self {
        Self {
            ttl,
            pmax,
            origin_strategy: Strategy::Flooding,
            intermediate_strategy: Strategy::Flooding,
            min_overlap: 1,
            fallback: true,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    peers: Vec<Peer>,
    index: HashMap<PeerId, usize>,
}

impl Network {
    pub fn new(peers: Vec<Peer>) -> Self {
        let index = peers.iter().enumerate().map(|(i, p)| (p.id, i)).collect();
        Self { peers, index }
    }

    pub fn from_dataset(ds: &Dataset) -> Self {
        let mut docs: HashMap<PeerId, Vec<(DocId, Vec<TermId>)>> = HashMap::new();
        for d in &ds.documents {
            docs.entry(d.host)
                .or_default()
                .push((d.id, d.terms.clone()));
        }
        Self::new(
            ds.peers
                .iter()
                .map(|p| {
                    Peer::new(
                        p.id,
                        p.neighbors.clone(),
                        docs.remove(&p.id).unwrap_or_default(),
                    )
                })
                .collect(),
        )
    }

    pub fn peers(&self) -> &[Peer] {
        &self.peers
    }

    pub fn peer(&self, id: PeerId) -> Option<&Peer> {
        self.index.get(&id).map(|&i| &self.peers[i])
    }

    pub fn peer_mut(&mut self, id: PeerId) -> Option<&mut Peer> {
        self.index.get(&id).map(|&i| &mut self.peers[i])
    }

    pub fn len(&self) -> usize {
        self.peers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peers.is_empty()
    }

    /// Every matching copy in the network: the recall denominator.
    pub fn relevant_set(&self, terms: &[TermId]) -> BTreeSet<Instance> {
        self.peers
            .iter()
            .flat_map(|p| p.local_search(terms).into_iter().map(move |d| (p.id, d)))
            .collect()
    }

    fn evaluate(&mut self, idx: usize, query: &Query, outcome: &mut QueryOutcome) {
        let peer = &mut self.peers[idx];
        peer.seen.insert(query.id);
        outcome.evaluations += 1;
        let hits = peer.local_search(&query.terms);
        if !hits.is_empty() {
            outcome.responders.insert(peer.id);
        }
        outcome
            .results
            .extend(hits.into_iter().map(|d| (peer.id, d)));
    }

    /// Targets chosen by peer `idx`. Peers already on the message path are
    /// dropped after selection, so a slot that picked one is simply not used.
    fn select_targets(
        &self,
        idx: usize,
        query: &Query,
        path: &[PeerId],
        strategy: Strategy,
        params: &RouteParams,
    ) -> Vec<PeerId> {
        let peer = &self.peers[idx];
        // One stream per peer; within it, a disjoint block per query.
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(u64::from(peer.id.0));
        rng.set_word_pos(u128::from(query.id.0) << 20);

        let selected = match strategy {
            Strategy::Flooding => routing::flooding_select(&peer.neighbors, params.pmax, &mut rng),
            Strategy::LpsV1 | Strategy::LpsV2 => {
                let exclude = [peer.id];
                let opts = LpsOptions {
                    pmax: params.pmax,
                    min_overlap: params.min_overlap,
                    exclude: &exclude,
                };
                let mut learned = if strategy == Strategy::LpsV1 {
                    routing::lps_select_v1_with(&peer.kb, query, &opts).peers
                } else {
                    routing::lps_select_v2_with(&peer.kb, query, &opts).peers
                };
                learned.retain(|p| self.index.contains_key(p));
                if params.fallback {
                    routing::fallback_fill(learned, &peer.neighbors, params.pmax, &mut rng)
                } else {
                    learned.truncate(params.pmax);
                    learned
                }
            }
        };
        selected
            .into_iter()
            .filter(|&t| t != peer.id && !path.contains(&t))
            .collect()
    }

    /// Breadth-first propagation with TTL and duplicate suppression.
    pub fn propagate(
        &mut self,
        query: &Query,
        params: &RouteParams,
    ) -> Result<QueryOutcome, SimError> {
        let &origin = self
            .index
            .get(&query.origin)
            .ok_or(SimError::UnknownPeer(query.origin))?;
        if self.peers[origin].has_seen(query.id) {
            return Err(SimError::DuplicateQuery(query.id));
        }
        let mut outcome = QueryOutcome::default();
        let mut queue = VecDeque::new();

        self.evaluate(origin, query, &mut outcome);
        let path = vec![query.origin];
        for t in self.select_targets(origin, query, &path, params.origin_strategy, params) {
            outcome.messages += 1;
            queue.push_back(QueryMessage {
                target: t,
                ttl: params.ttl,
                path: path.clone(),
            });
        }
        while let Some(msg) = queue.pop_front() {
            let Some(&idx) = self.index.get(&msg.target) else {
                continue;
            };
            if self.peers[idx].has_seen(query.id) {
                continue;
            }
            self.evaluate(idx, query, &mut outcome);
            if msg.ttl > 1 {
                let mut path = msg.path;
                path.push(msg.target);
                let targets =
                    self.select_targets(idx, query, &path, params.intermediate_strategy, params);
                for t in targets {
                    outcome.messages += 1;
                    queue.push_back(QueryMessage {
                        target: t,
                        ttl: msg.ttl - 1,
                        path: path.clone(),
                    });
                }
            }
        }
        Ok(outcome)
    }

    /// Logs the query at its origin. Every match found on another peer is
    /// downloaded, and those peers become positive.
    pub fn record_downloads(
        &mut self,
        query: &Query,
        outcome: &QueryOutcome,
    ) -> Result<LogEntry, SimError> {
        let origin = self
            .peer_mut(query.origin)
            .ok_or(SimError::UnknownPeer(query.origin))?;
        let remote = outcome.results.iter().filter(|(p, _)| *p != query.origin);
        let docs: Vec<DocId> = remote.clone().map(|&(_, d)| d).collect();
        let positives: Vec<PeerId> = remote.map(|&(p, _)| p).collect();
        let entry = LogEntry::new(query.id, query.terms.clone(), docs, positives)
            .expect("downloads and positive peers come from the same results");
        origin
            .log
            .append(entry.clone())
            .map_err(|_| SimError::DuplicateQuery(query.id))?;
        origin.issued_since_update += 1;
        Ok(entry)
    }

    /// Runs one maintenance operation on every peer.
    pub fn maintain_all(&mut self, mode: MaintenanceMode) -> Vec<Option<MaintenanceStats>> {
        self.peers
            .par_iter_mut()
            .map(|p| p.maintain(mode))
            .collect()
    }

    pub fn mean_concepts(&self) -> f64 {
        if self.peers.is_empty() {
            return 0.0;
        }
        let total: usize = self.peers.iter().map(|p| p.kb.concept_count()).sum();
        total as f64 / self.peers.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalMetrics {
    pub interval_index: usize,
    /// Mean over queries with a nonempty relevant set.
    pub mean_recall: f64,
    pub mean_messages: f64,
    /// Mean E1+E2 size per peer at the end of the interval.
    pub kb_concepts_mean: f64,
    /// Closure computations spent on maintenance during the interval.
    pub maintenance_work: u64,
    pub maintenance_time_mean_ms: f64,
    /// Queries with at least one result.
    pub queries_answered: usize,
    pub queries: usize,
    pub recall_samples: usize,
}

/// One global maintenance round. Round 0 is the full B0 build in either mode;
/// `mode` names the series the round belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundStats {
    pub round: usize,
    pub at_query: usize,
    pub mode: MaintenanceMode,
    pub peers_updated: usize,
    pub e1_mean: f64,
    pub e2_mean: f64,
    pub work_total: u64,
    pub work_mean: f64,
    pub wall_ms_mean: f64,
}

/// Post-warm-up aggregates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Summary {
    pub mean_recall: f64,
    pub mean_messages: f64,
    pub queries: usize,
    pub recall_samples: usize,
    pub total_maintenance_work: u64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub intervals: Vec<IntervalMetrics>,
    pub rounds: Vec<RoundStats>,
    pub summary: Summary,
}

#[derive(Default)]
struct Acc {
    recall_sum: f64,
    recall_n: usize,
    messages: usize,
    queries: usize,
    answered: usize,
    work: u64,
    time_ms_sum: f64,
    time_n: usize,
}

impl Acc {
    fn add_maintenance(&mut self, stats: &[Option<MaintenanceStats>]) {
        for s in stats.iter().flatten() {
            self.work += s.closures;
            self.time_ms_sum += s.elapsed.as_secs_f64() * 1e3;
            self.time_n += 1;
        }
    }
}

fn round_stats(
    round: usize,
    at_query: usize,
    mode: MaintenanceMode,
    stats: &[Option<MaintenanceStats>],
) -> RoundStats {
    let done: Vec<&MaintenanceStats> = stats.iter().flatten().collect();
    let n = done.len().max(1) as f64;
    let work_total: u64 = done.iter().map(|s| s.closures).sum();
    RoundStats {
        round,
        at_query,
        mode,
        peers_updated: done.len(),
        e1_mean: done.iter().map(|s| s.e1_len).sum::<usize>() as f64 / n,
        e2_mean: done.iter().map(|s| s.e2_len).sum::<usize>() as f64 / n,
        work_total,
        work_mean: work_total as f64 / n,
        wall_ms_mean: done
            .iter()
            .map(|s| s.elapsed.as_secs_f64() * 1e3)
            .sum::<f64>()
            / n,
    }
}

/// Replays the dataset's queries in order under `config`.
pub fn run(config: &SimConfig, dataset: &Dataset) -> Result<RunResult, SimError> {
    config.validate()?;
    dataset.validate()?;
    if let Some(expected) = config.overlay_size {
        if expected != dataset.peers.len() {
            return Err(SimError::OverlaySize {
                expected,
                actual: dataset.peers.len(),
            });
        }
    }
    let mut net = Network::from_dataset(dataset);
    let n_queries = dataset.queries.len();
    let n_intervals = n_queries.div_ceil(config.interval);
    let mut accs: Vec<Acc> = (0..n_intervals).map(|_| Acc::default()).collect();
    let mut kb_snapshots = vec![0.0; n_intervals];
    let mut rounds = Vec::new();
    let mut summary = Summary::default();
    let mut summary_recall = 0.0;
    let mut summary_messages = 0usize;

    let learned = RouteParams::from_config(config);
    let warmup = RouteParams::flooding(config.ttl, config.pmax, config.seed);

    for (k, rec) in dataset.queries.iter().enumerate() {
        let bucket = k / config.interval;
        if k == config.warmup_queries {
            let stats = net.maintain_all(MaintenanceMode::Static);
            accs[bucket].add_maintenance(&stats);
            rounds.push(round_stats(0, k, config.maintenance_mode, &stats));
        } else if config.update_scope == UpdateScope::Global && config.update_schedule.contains(&k)
        {
            let stats = net.maintain_all(config.maintenance_mode);
            accs[bucket].add_maintenance(&stats);
            rounds.push(round_stats(
                rounds.len(),
                k,
                config.maintenance_mode,
                &stats,
            ));
        }

        let post_warmup = k >= config.warmup_queries;
        let params = if post_warmup { &learned } else { &warmup };
        let query = Query::new(rec.id, rec.terms.clone(), rec.issuer)
            .ok_or(SimError::EmptyQuery(rec.id))?;
        let relevant = net.relevant_set(&query.terms);
        let outcome = net.propagate(&query, params)?;
        net.record_downloads(&query, &outcome)?;

        let acc = &mut accs[bucket];
        acc.queries += 1;
        acc.messages += outcome.messages;
        if !outcome.results.is_empty() {
            acc.answered += 1;
        }
        let r = recall(&outcome, &relevant);
        if let Some(r) = r {
            acc.recall_sum += r;
            acc.recall_n += 1;
        }
        if post_warmup {
            summary.queries += 1;
            summary_messages += outcome.messages;
            if let Some(r) = r {
                summary_recall += r;
                summary.recall_samples += 1;
            }
            if config.update_scope == UpdateScope::PerPeer {
                let every = config.per_peer_update_every;
                let peer = net.peer_mut(query.origin).expect("origin exists");
                if peer.issued_since_update >= every {
                    let stats = [peer.maintain(config.maintenance_mode)];
                    accs[bucket].add_maintenance(&stats);
                }
            }
        }
        if (k + 1) % config.interval == 0 || k + 1 == n_queries {
            kb_snapshots[bucket] = net.mean_concepts();
        }
    }

    summary.mean_recall = if summary.recall_samples > 0 {
        summary_recall / summary.recall_samples as f64
    } else {
        0.0
    };
    summary.mean_messages = if summary.queries > 0 {
        summary_messages as f64 / summary.queries as f64
    } else {
        0.0
    };
    summary.total_maintenance_work = accs.iter().map(|a| a.work).sum();

    let intervals = accs
        .into_iter()
        .zip(kb_snapshots)
        .enumerate()
        .map(|(i, (a, kb))| IntervalMetrics {
            interval_index: i,
            mean_recall: if a.recall_n > 0 {
                a.recall_sum / a.recall_n as f64
            } else {
                0.0
            },
            mean_messages: if a.queries > 0 {
                a.messages as f64 / a.queries as f64
            } else {
                0.0
            },
            kb_concepts_mean: kb,
            maintenance_work: a.work,
            maintenance_time_mean_ms: if a.time_n > 0 {
                a.time_ms_sum / a.time_n as f64
            } else {
                0.0
            },
            queries_answered: a.answered,
            queries: a.queries,
            recall_samples: a.recall_n,
        })
        .collect();
    Ok(RunResult {
        intervals,
        rounds,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(xs: &[u32]) -> Vec<TermId> {
        xs.iter().map(|&x| TermId(x)).collect()
    }

    fn peer(id: u32, ns: &[u32]) -> Peer {
        Peer::new(PeerId(id), ns.iter().map(|&n| PeerId(n)).collect(), vec![])
    }

    #[test]
    fn local_search_is_conjunctive() {
        let mut p = peer(0, &[]);
        p.documents = vec![(DocId(1), t(&[1, 2])), (DocId(2), t(&[2]))];
        assert_eq!(p.local_search(&t(&[1, 2])), vec![DocId(1)]);
        assert!(p.local_search(&t(&[9])).is_empty());
        assert_eq!(p.local_search(&t(&[2])), vec![DocId(1), DocId(2)]);
    }

    #[test]
    fn replicas_are_distinct_instances() {
        let mut peers: Vec<Peer> = (0..3).map(|i| peer(i, &[])).collect();
        for p in &mut peers {
            p.documents = vec![(DocId(7), t(&[1]))];
        }
        let net = Network::new(peers);
        assert_eq!(net.relevant_set(&t(&[1])).len(), 3);
        assert!(net.relevant_set(&t(&[2])).is_empty());
    }

    #[test]
    fn recall_cases() {
        let rel: BTreeSet<Instance> = (0..4).map(|i| (PeerId(i), DocId(0))).collect();
        let mut out = QueryOutcome::default();
        assert_eq!(recall(&out, &rel), Some(0.0));
        out.results = rel.iter().copied().take(3).collect();
        assert_eq!(recall(&out, &rel), Some(0.75));
        out.results = rel.clone();
        assert_eq!(recall(&out, &rel), Some(1.0));
        assert_eq!(recall(&out, &BTreeSet::new()), None);
    }

    #[test]
    fn star_flooding_sends_three_messages() {
        let mut peers = vec![peer(0, &[1, 2, 3, 4])];
        peers.extend((1..=4).map(|i| peer(i, &[0])));
        let mut net = Network::new(peers);
        let q = Query::new(QueryId(1), t(&[1]), PeerId(0)).unwrap();
        let out = net.propagate(&q, &RouteParams::flooding(2, 3, 11)).unwrap();
        assert_eq!(out.messages, 3);
        assert_eq!(out.evaluations, 4);
    }

    #[test]
    fn ttl_one_stops_after_first_hop() {
        // path 0-1-2
        let mut net = Network::new(vec![peer(0, &[1]), peer(1, &[0, 2]), peer(2, &[1])]);
        let q = Query::new(QueryId(1), t(&[1]), PeerId(0)).unwrap();
        let out = net.propagate(&q, &RouteParams::flooding(1, 3, 0)).unwrap();
        assert_eq!((out.messages, out.evaluations), (1, 2));
        assert!(!net.peer(PeerId(2)).unwrap().has_seen(QueryId(1)));
    }

    #[test]
    fn triangle_evaluates_each_peer_once() {
        let mut net = Network::new(vec![peer(1, &[2, 3]), peer(2, &[1, 3]), peer(3, &[1, 2])]);
        let q = Query::new(QueryId(5), t(&[1]), PeerId(1)).unwrap();
        let out = net.propagate(&q, &RouteParams::flooding(5, 3, 4)).unwrap();
        assert_eq!(out.evaluations, 3);
        assert!(matches!(
            net.propagate(&q, &RouteParams::flooding(5, 3, 4)),
            Err(SimError::DuplicateQuery(_))
        ));
    }

    #[test]
    fn unknown_origin_is_an_error() {
        let mut net = Network::new(vec![peer(1, &[])]);
        let q = Query::new(QueryId(5), t(&[1]), PeerId(9)).unwrap();
        assert!(matches!(
            net.propagate(&q, &RouteParams::flooding(2, 3, 0)),
            Err(SimError::UnknownPeer(_))
        ));
    }

    #[test]
    fn downloads_mark_remote_responders_positive() {
        let mut net = Network::new(vec![peer(0, &[]), peer(1, &[]), peer(2, &[])]);
        let q = Query::new(QueryId(1), t(&[1]), PeerId(0)).unwrap();
        let out = QueryOutcome {
            results: [
                (PeerId(0), DocId(3)),
                (PeerId(1), DocId(4)),
                (PeerId(2), DocId(4)),
            ]
            .into(),
            ..Default::default()
        };
        let e = net.record_downloads(&q, &out).unwrap();
        assert_eq!(e.positive_peers, vec![PeerId(1), PeerId(2)]);
        assert_eq!(e.downloaded_docs, vec![DocId(4)]);

        let q2 = Query::new(QueryId(2), t(&[1]), PeerId(0)).unwrap();
        let e = net.record_downloads(&q2, &QueryOutcome::default()).unwrap();
        assert!(e.positive_peers.is_empty());
        assert_eq!(net.peer(PeerId(0)).unwrap().log.len(), 2);
        assert!(net.peer(PeerId(1)).unwrap().log.is_empty());
    }
}
