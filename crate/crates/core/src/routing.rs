//! Peer selection: random flooding and the two learning-based selectors
//! (full SQTC scan, and the Pmax-bounded loop) over a knowledge base.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;

use crate::ids::{PeerId, QueryId, TermId};
use crate::knowledge_base::{KnowledgeBase, PeerConcept, TermConcept};
use crate::sets;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub id: QueryId,
    /// Sorted, nonempty.
    pub terms: Vec<TermId>,
    pub origin: PeerId,
}

impl Query {
    /// Returns `None` when `terms` is empty.
    pub fn new(id: QueryId, terms: Vec<TermId>, origin: PeerId) -> Option<Self> {
        let terms = sets::normalize(terms);
        (!terms.is_empty()).then_some(Self { id, terms, origin })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Strategy {
    Flooding,
    LpsV1,
    LpsV2,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Flooding => "flooding",
            Strategy::LpsV1 => "lps_v1",
            Strategy::LpsV2 => "lps_v2",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flooding" => Ok(Strategy::Flooding),
            "lps_v1" => Ok(Strategy::LpsV1),
            "lps_v2" => Ok(Strategy::LpsV2),
            other => Err(format!(
                "unknown strategy {other:?} (expected flooding, lps_v1 or lps_v2)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RankedConcept<'a> {
    pub concept: &'a TermConcept,
    pub score: f64,
}

/// Jaccard coefficient between the query terms and a concept intent.
pub fn similarity(query_terms: &[TermId], intent: &[TermId]) -> f64 {
    sets::jaccard(query_terms, intent)
}

/// Ranking shared by the E1 selectors: score, then larger extent, then intent.
fn rank_cmp(a: &RankedConcept<'_>, b: &RankedConcept<'_>) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| b.concept.extent.len().cmp(&a.concept.extent.len()))
        .then_with(|| a.concept.intent.cmp(&b.concept.intent))
}

/// Best-scoring E1 concept with a positive score, as an index into `e1`.
fn best_concept(e1: &[TermConcept], terms: &[TermId], skip: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, RankedConcept<'_>)> = None;
    for (i, c) in e1.iter().enumerate() {
        if skip.get(i).copied().unwrap_or(false) {
            continue;
        }
        let score = similarity(terms, &c.intent);
        if score <= 0.0 {
            continue;
        }
        let cand = RankedConcept { concept: c, score };
        if best
            .as_ref()
            .is_none_or(|(_, b)| rank_cmp(&cand, b) == Ordering::Less)
        {
            best = Some((i, cand));
        }
    }
    best.map(|(i, _)| i)
}

/// `getConcept`: the E1 concept most similar to the query, if any scores above 0.
pub fn get_concept<'a>(e1: &'a [TermConcept], query: &Query) -> Option<&'a TermConcept> {
    best_concept(e1, &query.terms, &[]).map(|i| &e1[i])
}

/// SQTC: every E1 concept with a positive score, best first.
pub fn ranked_concepts<'a>(e1: &'a [TermConcept], query: &Query) -> Vec<RankedConcept<'a>> {
    let mut ranked: Vec<_> = e1
        .iter()
        .map(|c| RankedConcept {
            concept: c,
            score: similarity(&query.terms, &c.intent),
        })
        .filter(|r| r.score > 0.0)
        .collect();
    ranked.sort_by(rank_cmp);
    ranked
}

/// `getSimilarConcept`: E2 concepts whose extent overlaps `extent` in at
/// least `min_overlap` queries (and at least one), ordered by extent Jaccard.
/// Concepts with an empty intent name no peer and are left out.
pub fn get_similar_concepts_with<'a>(
    e2: &'a [PeerConcept],
    extent: &[QueryId],
    min_overlap: usize,
) -> Vec<&'a PeerConcept> {
    let threshold = min_overlap.max(1);
    let mut scored: Vec<(f64, &PeerConcept)> = e2
        .iter()
        .filter(|c| !c.intent.is_empty())
        .filter(|c| sets::intersection_len(&c.extent, extent) >= threshold)
        .map(|c| (sets::jaccard(&c.extent, extent), c))
        .collect();
    scored.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| a.1.intent.cmp(&b.1.intent))
    });
    scored.into_iter().map(|(_, c)| c).collect()
}

pub fn get_similar_concepts<'a>(e2: &'a [PeerConcept], extent: &[QueryId]) -> Vec<&'a PeerConcept> {
    get_similar_concepts_with(e2, extent, 1)
}

/// `getSelectedPeers`: ordered union of the SQPC intents.
pub fn get_selected_peers(sqpc: &[&PeerConcept]) -> Vec<PeerId> {
    let mut seen = HashSet::new();
    sqpc.iter()
        .flat_map(|c| c.intent.iter().copied())
        .filter(|p| seen.insert(*p))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Selection {
    pub peers: Vec<PeerId>,
    /// E1 concepts examined.
    pub e1_visits: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct LpsOptions<'a> {
    pub pmax: usize,
    pub min_overlap: usize,
    /// Peers never to return, in addition to the query origin.
    pub exclude: &'a [PeerId],
}

impl LpsOptions<'_> {
    pub fn new(pmax: usize) -> Self {
        Self {
            pmax,
            min_overlap: 1,
            exclude: &[],
        }
    }
}

struct PeerAccumulator<'a> {
    peers: Vec<PeerId>,
    seen: HashSet<PeerId>,
    origin: PeerId,
    exclude: &'a [PeerId],
}

impl<'a> PeerAccumulator<'a> {
    fn new(origin: PeerId, exclude: &'a [PeerId]) -> Self {
        Self {
            peers: Vec::new(),
            seen: HashSet::new(),
            origin,
            exclude,
        }
    }

    fn extend(&mut self, peers: impl IntoIterator<Item = PeerId>) {
        for p in peers {
            if p != self.origin && !self.exclude.contains(&p) && self.seen.insert(p) {
                self.peers.push(p);
            }
        }
    }
}

/// Pmax-bounded selection: take the best remaining E1 concept, add the peers
/// of its similar E2 concepts, and repeat until Pmax peers are gathered or no
/// similar concept is left. The last round may overshoot Pmax.
pub fn lps_select_v2_with(kb: &KnowledgeBase, query: &Query, opts: &LpsOptions<'_>) -> Selection {
    let e1 = kb.e1();
    let mut removed = vec![false; e1.len()];
    let mut acc = PeerAccumulator::new(query.origin, opts.exclude);
    let mut visits = 0;
    let mut concept = best_concept(e1, &query.terms, &removed);
    while let Some(i) = concept {
        if acc.peers.len() >= opts.pmax {
            break;
        }
        visits += 1;
        let sqpc = get_similar_concepts_with(kb.e2(), &e1[i].extent, opts.min_overlap);
        acc.extend(get_selected_peers(&sqpc));
        removed[i] = true;
        concept = best_concept(e1, &query.terms, &removed);
    }
    Selection {
        peers: acc.peers,
        e1_visits: visits,
    }
}

pub fn lps_select_v2(kb: &KnowledgeBase, query: &Query, pmax: usize) -> Selection {
    lps_select_v2_with(kb, query, &LpsOptions::new(pmax))
}

/// Unbounded selection: rank every E1 concept and collect the peers of all
/// similar ones. `opts.pmax` does not prune the search, so `e1_visits` is
/// always `|E1|`.
pub fn lps_select_v1_with(kb: &KnowledgeBase, query: &Query, opts: &LpsOptions<'_>) -> Selection {
    let sqtc = ranked_concepts(kb.e1(), query);
    let mut acc = PeerAccumulator::new(query.origin, opts.exclude);
    for r in &sqtc {
        let sqpc = get_similar_concepts_with(kb.e2(), &r.concept.extent, opts.min_overlap);
        acc.extend(get_selected_peers(&sqpc));
    }
    Selection {
        peers: acc.peers,
        e1_visits: kb.e1().len(),
    }
}

pub fn lps_select_v1(kb: &KnowledgeBase, query: &Query, pmax: usize) -> Selection {
    lps_select_v1_with(kb, query, &LpsOptions::new(pmax))
}

/// Uniform sample without replacement of `min(pmax, |neighbors|)` neighbours.
pub fn flooding_select<R: Rng + ?Sized>(
    neighbors: &[PeerId],
    pmax: usize,
    rng: &mut R,
) -> Vec<PeerId> {
    let amount = pmax.min(neighbors.len());
    index::sample(rng, neighbors.len(), amount)
        .into_iter()
        .map(|i| neighbors[i])
        .collect()
}

/// Pads `selected` with random neighbours up to `pmax`, or truncates it.
pub fn fallback_fill<R: Rng + ?Sized>(
    mut selected: Vec<PeerId>,
    neighbors: &[PeerId],
    pmax: usize,
    rng: &mut R,
) -> Vec<PeerId> {
    if selected.len() >= pmax {
        selected.truncate(pmax);
        return selected;
    }
    let candidates: Vec<PeerId> = {
        let mut seen: HashSet<PeerId> = selected.iter().copied().collect();
        neighbors
            .iter()
            .copied()
            .filter(|p| seen.insert(*p))
            .collect()
    };
    let pad = flooding_select(&candidates, pmax - selected.len(), rng);
    selected.extend(pad);
    selected
}
