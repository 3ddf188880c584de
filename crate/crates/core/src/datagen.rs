//! Synthetic topical datasets and their on-disk TSV form.
//!
//! Topics own disjoint term pools. Every peer has a primary and a secondary
//! topic; documents draw their terms from one of their host's topics and are
//! replicated preferentially onto peers sharing that topic. Queries mostly
//! follow the issuer's interests, otherwise a Zipf-weighted topic. The
//! overlay is a connected random regular graph.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use thiserror::Error;

use crate::ids::{DocId, PeerId, QueryId, TermId};
use crate::sets;

pub const PEERS_FILE: &str = "peers.tsv";
pub const DOCUMENTS_FILE: &str = "documents.tsv";
pub const QUERIES_FILE: &str = "queries.tsv";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("{file}:{line}: {msg}")]
    Parse {
        file: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{file}:{line}: unknown peer {id}")]
    UnknownPeer {
        file: PathBuf,
        line: usize,
        id: PeerId,
    },
    #[error("inconsistent dataset: {0}")]
    Inconsistent(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerRecord {
    pub id: PeerId,
    pub neighbors: Vec<PeerId>,
}

/// One copy of a document on one peer. Replicas share `id` and `terms`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentRecord {
    pub id: DocId,
    pub host: PeerId,
    pub terms: Vec<TermId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryRecord {
    pub id: QueryId,
    pub issuer: PeerId,
    pub terms: Vec<TermId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    pub peers: Vec<PeerRecord>,
    pub documents: Vec<DocumentRecord>,
    /// Issue order.
    pub queries: Vec<QueryRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    pub n_peers: usize,
    pub n_docs: usize,
    pub n_queries: usize,
    pub n_topics: usize,
    pub terms_per_topic: usize,
    pub doc_terms: usize,
    pub query_terms: usize,
    /// Total copies of each document, the original included. Capped at `n_peers`.
    pub replication_factor: usize,
    pub degree: usize,
    pub zipf_exponent: f64,
    /// Probability that a document hosted by a peer comes from its primary topic.
    pub home_topic_weight: f64,
    /// Probability that a query follows the issuer's topics rather than global popularity.
    pub interest_locality: f64,
    /// Probability that a replica goes to a peer whose primary topic matches.
    pub replica_locality: f64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            n_peers: 100,
            n_docs: 2000,
            n_queries: 5000,
            n_topics: 20,
            terms_per_topic: 12,
            doc_terms: 5,
            query_terms: 2,
            replication_factor: 3,
            degree: 4,
            zipf_exponent: 1.0,
            home_topic_weight: 0.9,
            interest_locality: 0.95,
            replica_locality: 0.95,
            seed: 1,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<(), DataError> {
        let fail = |m: String| Err(DataError::Params(m));
        if self.n_peers == 0 || self.n_topics == 0 || self.terms_per_topic == 0 {
            return fail("n_peers, n_topics and terms_per_topic must be positive".into());
        }
        if self.doc_terms == 0 || self.query_terms == 0 {
            return fail("doc_terms and query_terms must be positive".into());
        }
        if self.doc_terms > self.terms_per_topic || self.query_terms > self.terms_per_topic {
            return fail(format!(
                "doc_terms ({}) and query_terms ({}) must not exceed terms_per_topic ({})",
                self.doc_terms, self.query_terms, self.terms_per_topic
            ));
        }
        if self.degree >= self.n_peers {
            return fail(format!(
                "degree ({}) must be less than n_peers ({})",
                self.degree, self.n_peers
            ));
        }
        if self.n_peers > 1 && self.degree == 0 {
            return fail("degree 0 cannot connect more than one peer".into());
        }
        if self.n_peers > 2 && self.degree == 1 {
            return fail("degree 1 cannot connect more than two peers".into());
        }
        if !(self.n_peers * self.degree).is_multiple_of(2) {
            return fail(format!(
                "n_peers * degree must be even ({} * {})",
                self.n_peers, self.degree
            ));
        }
        if self.replication_factor == 0 {
            return fail("replication_factor must be positive".into());
        }
        if self.zipf_exponent.is_nan() || self.zipf_exponent < 0.0 {
            return fail("zipf_exponent must be non-negative".into());
        }
        for (name, p) in [
            ("home_topic_weight", self.home_topic_weight),
            ("interest_locality", self.interest_locality),
            ("replica_locality", self.replica_locality),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} must be a probability, got {p}"));
            }
        }
        Ok(())
    }

    pub const KEYS: &'static [&'static str] = &[
        "n_peers",
        "n_docs",
        "n_queries",
        "n_topics",
        "terms_per_topic",
        "doc_terms",
        "query_terms",
        "replication_factor",
        "degree",
        "zipf_exponent",
        "home_topic_weight",
        "interest_locality",
        "replica_locality",
        "seed",
    ];

    /// Sets one field by name from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), DataError> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, DataError>
        where
            T::Err: std::fmt::Display,
        {
            value
                .trim()
                .parse()
                .map_err(|e| DataError::Params(format!("{key}: {value:?}: {e}")))
        }
        match key {
            "n_peers" => self.n_peers = num(key, value)?,
            "n_docs" => self.n_docs = num(key, value)?,
            "n_queries" => self.n_queries = num(key, value)?,
            "n_topics" => self.n_topics = num(key, value)?,
            "terms_per_topic" => self.terms_per_topic = num(key, value)?,
            "doc_terms" => self.doc_terms = num(key, value)?,
            "query_terms" => self.query_terms = num(key, value)?,
            "replication_factor" => self.replication_factor = num(key, value)?,
            "degree" => self.degree = num(key, value)?,
            "zipf_exponent" => self.zipf_exponent = num(key, value)?,
            "home_topic_weight" => self.home_topic_weight = num(key, value)?,
            "interest_locality" => self.interest_locality = num(key, value)?,
            "replica_locality" => self.replica_locality = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(DataError::Params(format!("unknown parameter {key:?}"))),
        }
        Ok(())
    }

    /// `key=value` lines over the defaults; `#` comments and blank lines are skipped.
    pub fn parse_str(text: &str) -> Result<Self, DataError> {
        let mut params = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| DataError::Params(format!("line {}: expected key=value", i + 1)))?;
            params
                .set(key.trim(), value)
                .map_err(|e| DataError::Params(format!("line {}: {e}", i + 1)))?;
        }
        Ok(params)
    }

    /// Soft warnings that do not prevent generation.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.query_terms > self.doc_terms {
            w.push(format!(
                "query_terms ({}) > doc_terms ({}): no document can match a query",
                self.query_terms, self.doc_terms
            ));
        }
        if self.replication_factor > self.n_peers {
            w.push(format!(
                "replication_factor ({}) exceeds n_peers ({}); every document goes to every peer",
                self.replication_factor, self.n_peers
            ));
        }
        w
    }
}

/// Primary and secondary topic of each peer.
#[derive(Debug, Clone, Copy)]
struct Interests {
    primary: usize,
    secondary: usize,
}

pub fn generate(params: &GenParams) -> Result<Dataset, DataError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let adjacency = random_regular_graph(params.n_peers, params.degree, &mut rng)?;

    let popularity = Zipf::new(params.n_topics as f64, params.zipf_exponent)
        .map_err(|e| DataError::Params(format!("zipf: {e}")))?;
    let draw_popular = |rng: &mut ChaCha8Rng| popularity.sample(rng) as usize - 1;

    let interests: Vec<Interests> = (0..params.n_peers)
        .map(|_| {
            let primary = rng.random_range(0..params.n_topics);
            let secondary = if params.n_topics > 1 {
                (primary + rng.random_range(1..params.n_topics)) % params.n_topics
            } else {
                primary
            };
            Interests { primary, secondary }
        })
        .collect();
    let mut by_primary: Vec<Vec<usize>> = vec![Vec::new(); params.n_topics];
    for (p, i) in interests.iter().enumerate() {
        by_primary[i.primary].push(p);
    }

    let topic_of = |rng: &mut ChaCha8Rng, i: &Interests| {
        if rng.random_bool(params.home_topic_weight) {
            i.primary
        } else {
            i.secondary
        }
    };
    let sample_terms = |rng: &mut ChaCha8Rng, topic: usize, k: usize| -> Vec<TermId> {
        let base = topic * params.terms_per_topic;
        sets::normalize(
            index::sample(rng, params.terms_per_topic, k)
                .into_iter()
                .map(|t| TermId((base + t) as u32))
                .collect(),
        )
    };

    let mut documents = Vec::with_capacity(params.n_docs * params.replication_factor);
    for d in 0..params.n_docs {
        let host = rng.random_range(0..params.n_peers);
        let topic = topic_of(&mut rng, &interests[host]);
        let terms = sample_terms(&mut rng, topic, params.doc_terms);
        let mut holders = vec![host];
        while holders.len() < params.replication_factor.min(params.n_peers) {
            let local: Vec<usize> = by_primary[topic]
                .iter()
                .copied()
                .filter(|p| !holders.contains(p))
                .collect();
            let pick = if !local.is_empty() && rng.random_bool(params.replica_locality) {
                local[rng.random_range(0..local.len())]
            } else {
                let free: Vec<usize> = (0..params.n_peers)
                    .filter(|p| !holders.contains(p))
                    .collect();
                free[rng.random_range(0..free.len())]
            };
            holders.push(pick);
        }
        holders.sort_unstable();
        for h in holders {
            documents.push(DocumentRecord {
                id: DocId(d as u32),
                host: PeerId(h as u32),
                terms: terms.clone(),
            });
        }
    }

    let mut queries = Vec::with_capacity(params.n_queries);
    for q in 0..params.n_queries {
        let issuer = rng.random_range(0..params.n_peers);
        let topic = if rng.random_bool(params.interest_locality) {
            topic_of(&mut rng, &interests[issuer])
        } else {
            draw_popular(&mut rng)
        };
        queries.push(QueryRecord {
            id: QueryId(q as u64),
            issuer: PeerId(issuer as u32),
            terms: sample_terms(&mut rng, topic, params.query_terms),
        });
    }

    let peers = adjacency
        .into_iter()
        .enumerate()
        .map(|(p, ns)| PeerRecord {
            id: PeerId(p as u32),
            neighbors: ns.into_iter().map(|n| PeerId(n as u32)).collect(),
        })
        .collect();
    Ok(Dataset {
        peers,
        documents,
        queries,
    })
}

/// Connected simple `degree`-regular graph on `n` vertices, by random stub
/// pairing that avoids loops and multi-edges, restarting on dead ends or a
/// disconnected result.
pub fn random_regular_graph<R: Rng>(
    n: usize,
    degree: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>, DataError> {
    const ATTEMPTS: usize = 10_000;
    if degree >= n.max(1) || !(n * degree).is_multiple_of(2) {
        return Err(DataError::Params(format!(
            "no {degree}-regular graph on {n} vertices"
        )));
    }
    'attempt: for _ in 0..ATTEMPTS {
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        let mut stubs: Vec<usize> = (0..n)
            .flat_map(|v| std::iter::repeat_n(v, degree))
            .collect();
        stubs.shuffle(rng);
        while !stubs.is_empty() {
            let mut paired = false;
            for _ in 0..(4 * stubs.len()).max(16) {
                let i = rng.random_range(0..stubs.len());
                let j = rng.random_range(0..stubs.len());
                let (u, v) = (stubs[i], stubs[j]);
                if i == j || u == v || adj[u].contains(&v) {
                    continue;
                }
                adj[u].insert(v);
                adj[v].insert(u);
                let (hi, lo) = (i.max(j), i.min(j));
                stubs.swap_remove(hi);
                stubs.swap_remove(lo);
                paired = true;
                break;
            }
            if !paired {
                continue 'attempt;
            }
        }
        if is_connected(&adj) {
            return Ok(adj.into_iter().map(|s| s.into_iter().collect()).collect());
        }
    }
    Err(DataError::Params(format!(
        "could not build a connected {degree}-regular graph on {n} vertices"
    )))
}

fn is_connected(adj: &[BTreeSet<usize>]) -> bool {
    if adj.is_empty() {
        return true;
    }
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

impl Dataset {
    /// Referential and structural checks; the simulator relies on them.
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::Inconsistent(m));
        let mut neighbors: HashMap<PeerId, HashSet<PeerId>> = HashMap::new();
        for p in &self.peers {
            let set: HashSet<PeerId> = p.neighbors.iter().copied().collect();
            if set.len() != p.neighbors.len() {
                return bad(format!("peer {} lists a neighbour twice", p.id));
            }
            if set.contains(&p.id) {
                return bad(format!("peer {} is its own neighbour", p.id));
            }
            if neighbors.insert(p.id, set).is_some() {
                return bad(format!("peer {} declared twice", p.id));
            }
        }
        for p in &self.peers {
            for n in &p.neighbors {
                match neighbors.get(n) {
                    None => return bad(format!("peer {} has unknown neighbour {n}", p.id)),
                    Some(back) if !back.contains(&p.id) => {
                        return bad(format!("link {} -> {n} is not symmetric", p.id))
                    }
                    _ => {}
                }
            }
        }
        let mut doc_terms: HashMap<DocId, &[TermId]> = HashMap::new();
        let mut copies = HashSet::new();
        for d in &self.documents {
            if !neighbors.contains_key(&d.host) {
                return bad(format!(
                    "document {} hosted by unknown peer {}",
                    d.id, d.host
                ));
            }
            if !copies.insert((d.id, d.host)) {
                return bad(format!("document {} listed twice on peer {}", d.id, d.host));
            }
            if let Some(prev) = doc_terms.insert(d.id, &d.terms) {
                if prev != d.terms.as_slice() {
                    return bad(format!("replicas of document {} disagree on terms", d.id));
                }
            }
        }
        let mut last: Option<QueryId> = None;
        for q in &self.queries {
            if !neighbors.contains_key(&q.issuer) {
                return bad(format!(
                    "query {} issued by unknown peer {}",
                    q.id, q.issuer
                ));
            }
            if q.terms.is_empty() {
                return bad(format!("query {} has no terms", q.id));
            }
            if last.is_some_and(|l| q.id <= l) {
                return bad(format!("query ids must increase (query {})", q.id));
            }
            last = Some(q.id);
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<(), DataError> {
        fs::create_dir_all(dir).map_err(|source| DataError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        write_file(&dir.join(PEERS_FILE), |w| {
            writeln!(w, "# peer_id\tneighbors")?;
            for p in &self.peers {
                writeln!(w, "{}\t{}", p.id, join(&p.neighbors, ","))?;
            }
            Ok(())
        })?;
        write_file(&dir.join(DOCUMENTS_FILE), |w| {
            writeln!(w, "# doc_id\tpeer_id\tterms")?;
            for d in &self.documents {
                writeln!(w, "{}\t{}\t{}", d.id, d.host, join(&d.terms, " "))?;
            }
            Ok(())
        })?;
        write_file(&dir.join(QUERIES_FILE), |w| {
            writeln!(w, "# query_id\tpeer_id\tterms")?;
            for q in &self.queries {
                writeln!(w, "{}\t{}\t{}", q.id, q.issuer, join(&q.terms, " "))?;
            }
            Ok(())
        })
    }

    pub fn load(dir: &Path) -> Result<Self, DataError> {
        let peers_path = dir.join(PEERS_FILE);
        let mut peers = Vec::new();
        let mut peer_lines = Vec::new();
        for (line, fields) in read_records(&peers_path, 2)? {
            peers.push(PeerRecord {
                id: parse_field(&peers_path, line, &fields[0])?,
                neighbors: parse_list(&peers_path, line, &fields[1], ',')?,
            });
            peer_lines.push(line);
        }
        let known: HashSet<PeerId> = peers.iter().map(|p| p.id).collect();
        let check_peer = |file: &Path, line: usize, id: PeerId| {
            if known.contains(&id) {
                Ok(id)
            } else {
                Err(DataError::UnknownPeer {
                    file: file.to_path_buf(),
                    line,
                    id,
                })
            }
        };
        for (p, &line) in peers.iter().zip(&peer_lines) {
            for &n in &p.neighbors {
                check_peer(&peers_path, line, n)?;
            }
        }

        let docs_path = dir.join(DOCUMENTS_FILE);
        let mut documents = Vec::new();
        for (line, fields) in read_records(&docs_path, 3)? {
            documents.push(DocumentRecord {
                id: parse_field(&docs_path, line, &fields[0])?,
                host: check_peer(&docs_path, line, parse_field(&docs_path, line, &fields[1])?)?,
                terms: sets::normalize(parse_list(&docs_path, line, &fields[2], ' ')?),
            });
        }

        let queries_path = dir.join(QUERIES_FILE);
        let mut queries = Vec::new();
        for (line, fields) in read_records(&queries_path, 3)? {
            queries.push(QueryRecord {
                id: parse_field(&queries_path, line, &fields[0])?,
                issuer: check_peer(
                    &queries_path,
                    line,
                    parse_field(&queries_path, line, &fields[1])?,
                )?,
                terms: sets::normalize(parse_list(&queries_path, line, &fields[2], ' ')?),
            });
        }

        let ds = Dataset {
            peers,
            documents,
            queries,
        };
        ds.validate()?;
        Ok(ds)
    }
}

fn join<T: std::fmt::Display>(xs: &[T], sep: &str) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(sep)
}

fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>,
) -> Result<(), DataError> {
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(fs::File::create(path).map_err(io_err)?);
    body(&mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// Non-comment, non-blank lines split on tabs, with 1-based line numbers.
fn read_records(path: &Path, fields: usize) -> Result<Vec<(usize, Vec<String>)>, DataError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, raw) in text.split('\n').enumerate() {
        let line = i + 1;
        if raw.is_empty() || raw.starts_with('#') {
            continue;
        }
        let parts: Vec<String> = raw.split('\t').map(str::to_owned).collect();
        if parts.len() != fields {
            return Err(DataError::Parse {
                file: path.to_path_buf(),
                line,
                msg: format!(
                    "expected {fields} tab-separated fields, found {}",
                    parts.len()
                ),
            });
        }
        out.push((line, parts));
    }
    Ok(out)
}

fn parse_field<T: std::str::FromStr>(file: &Path, line: usize, s: &str) -> Result<T, DataError> {
    s.parse().map_err(|_| DataError::Parse {
        file: file.to_path_buf(),
        line,
        msg: format!("bad identifier {s:?}"),
    })
}

fn parse_list<T: std::str::FromStr>(
    file: &Path,
    line: usize,
    s: &str,
    sep: char,
) -> Result<Vec<T>, DataError> {
    s.split(sep)
        .filter(|x| !x.is_empty())
        .map(|x| parse_field(file, line, x))
        .collect()
}
