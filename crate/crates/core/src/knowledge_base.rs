//! Per-peer query log and the knowledge base B(E1, E2) derived from it.
//!
//! E1 holds the concepts of the queries × terms context, E2 those of the
//! queries × positive-peers context. Two maintenance operations exist: a
//! static rebuild over the whole log and an incremental update that builds a
//! base from the entries past the watermark only and unions it into the old
//! one.

use std::collections::HashSet;
use std::io::{self, BufRead, Write};
use std::ops::Range;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::fca::{FormalConcept, FormalContext};
use crate::ids::{DocId, PeerId, QueryId, TermId};
use crate::sets;

pub type TermConcept = FormalConcept<QueryId, TermId>;
pub type PeerConcept = FormalConcept<QueryId, PeerId>;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("query id {got} is not greater than the last logged id {last}")]
    NonIncreasingQueryId { got: QueryId, last: QueryId },
    #[error(
        "query {0}: positive peers and downloaded documents must be both empty or both nonempty"
    )]
    InconsistentEntry(QueryId),
    #[error("watermark {watermark} exceeds log length {len}")]
    Watermark { watermark: usize, len: usize },
    #[error("log line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One answered (or unanswered) query as seen by the peer that issued it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub query_id: QueryId,
    pub terms: Vec<TermId>,
    pub downloaded_docs: Vec<DocId>,
    pub positive_peers: Vec<PeerId>,
}

impl LogEntry {
    pub fn new(
        query_id: QueryId,
        terms: Vec<TermId>,
        downloaded_docs: Vec<DocId>,
        positive_peers: Vec<PeerId>,
    ) -> Result<Self, KbError> {
        if downloaded_docs.is_empty() != positive_peers.is_empty() {
            return Err(KbError::InconsistentEntry(query_id));
        }
        Ok(Self {
            query_id,
            terms: sets::normalize(terms),
            downloaded_docs: sets::normalize(downloaded_docs),
            positive_peers: sets::normalize(positive_peers),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryLog {
    entries: Vec<LogEntry>,
    watermark: usize,
}

impl QueryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<LogEntry>, watermark: usize) -> Result<Self, KbError> {
        if watermark > entries.len() {
            return Err(KbError::Watermark {
                watermark,
                len: entries.len(),
            });
        }
        let mut log = Self::new();
        for e in entries {
            log.append(e)?;
        }
        log.watermark = watermark;
        Ok(log)
    }

    pub fn append(&mut self, entry: LogEntry) -> Result<(), KbError> {
        if let Some(last) = self.entries.last() {
            if entry.query_id <= last.query_id {
                return Err(KbError::NonIncreasingQueryId {
                    got: entry.query_id,
                    last: last.query_id,
                });
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn watermark(&self) -> usize {
        self.watermark
    }

    /// Entries not yet folded into the knowledge base.
    pub fn pending(&self) -> &[LogEntry] {
        &self.entries[self.watermark..]
    }

    /// Writes one tab-separated record per entry:
    /// `query_id`, terms, downloaded docs, positive peers (lists space-separated).
    pub fn write_tsv<W: Write>(&self, mut w: W) -> io::Result<()> {
        fn join<T: std::fmt::Display>(xs: &[T]) -> String {
            xs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        }
        for e in &self.entries {
            writeln!(
                w,
                "{}\t{}\t{}\t{}",
                e.query_id,
                join(&e.terms),
                join(&e.downloaded_docs),
                join(&e.positive_peers)
            )?;
        }
        Ok(())
    }

    /// Reads records written by [`QueryLog::write_tsv`]. The watermark of the
    /// returned log is 0.
    pub fn read_tsv<R: BufRead>(r: R) -> Result<Self, KbError> {
        fn list<T: std::str::FromStr>(field: &str, line: usize) -> Result<Vec<T>, KbError> {
            field
                .split(' ')
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse().map_err(|_| KbError::Parse {
                        line,
                        msg: format!("bad identifier {s:?}"),
                    })
                })
                .collect()
        }
        let mut log = Self::new();
        for (i, line) in r.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(KbError::Parse {
                    line: line_no,
                    msg: format!("expected 4 fields, found {}", fields.len()),
                });
            }
            let query_id = fields[0].parse().map_err(|_| KbError::Parse {
                line: line_no,
                msg: format!("bad query id {:?}", fields[0]),
            })?;
            let entry = LogEntry::new(
                query_id,
                list(fields[1], line_no)?,
                list(fields[2], line_no)?,
                list(fields[3], line_no)?,
            )?;
            log.append(entry)?;
        }
        Ok(log)
    }
}

/// Queries × terms.
pub fn build_context_c1(entries: &[LogEntry]) -> FormalContext<QueryId, TermId> {
    FormalContext::from_rows(entries.iter().map(|e| (e.query_id, &e.terms)))
        .expect("log entries carry distinct query ids")
}

/// Queries × positive peers. Unanswered queries contribute an empty row.
pub fn build_context_c2(entries: &[LogEntry]) -> FormalContext<QueryId, PeerId> {
    FormalContext::from_rows(entries.iter().map(|e| (e.query_id, &e.positive_peers)))
        .expect("log entries carry distinct query ids")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub generation: u32,
    pub entries: Range<usize>,
}

#[derive(Debug, Clone)]
pub struct MaintenanceStats {
    pub generation: u32,
    /// Log entries the concept generation ran over.
    pub entries_used: usize,
    /// Closure computations, summed over C1 and C2.
    pub closures: u64,
    pub e1_len: usize,
    pub e2_len: usize,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub enum UpdateOutcome {
    Updated(MaintenanceStats),
    NoNewEntries,
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    e1: Vec<TermConcept>,
    e2: Vec<PeerConcept>,
    e1_tags: Vec<u32>,
    e2_tags: Vec<u32>,
    batches: Vec<Batch>,
    generation: u32,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    /// A fresh base built from the whole log (generation 1).
    pub fn build_static(log: &mut QueryLog) -> (Self, MaintenanceStats) {
        let mut kb = Self::new();
        let stats = kb.rebuild_static(log);
        (kb, stats)
    }

    pub fn e1(&self) -> &[TermConcept] {
        &self.e1
    }

    pub fn e2(&self) -> &[PeerConcept] {
        &self.e2
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    pub fn batches(&self) -> &[Batch] {
        &self.batches
    }

    pub fn concept_count(&self) -> usize {
        self.e1.len() + self.e2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e1.is_empty() && self.e2.is_empty()
    }

    /// Replaces the base with concepts generated from every logged entry.
    pub fn rebuild_static(&mut self, log: &mut QueryLog) -> MaintenanceStats {
        let start = Instant::now();
        let range = 0..log.len();
        let (e1, e2, closures) = generate(&log.entries[range.clone()]);
        self.generation += 1;
        self.e1_tags = vec![self.generation; e1.len()];
        self.e2_tags = vec![self.generation; e2.len()];
        self.e1 = e1;
        self.e2 = e2;
        self.batches = vec![Batch {
            generation: self.generation,
            entries: range.clone(),
        }];
        log.watermark = log.len();
        MaintenanceStats {
            generation: self.generation,
            entries_used: range.len(),
            closures,
            e1_len: self.e1.len(),
            e2_len: self.e2.len(),
            elapsed: start.elapsed(),
        }
    }

    /// Builds B+ from the entries past the watermark and unions it into the
    /// current base. Existing concepts are left untouched.
    pub fn update_incremental(&mut self, log: &mut QueryLog) -> UpdateOutcome {
        if log.pending().is_empty() {
            return UpdateOutcome::NoNewEntries;
        }
        let start = Instant::now();
        let range = log.watermark..log.len();
        let (e1, e2, closures) = generate(&log.entries[range.clone()]);
        self.generation += 1;
        let generation = self.generation;
        union_into(&mut self.e1, &mut self.e1_tags, e1, generation);
        union_into(&mut self.e2, &mut self.e2_tags, e2, generation);
        self.batches.push(Batch {
            generation,
            entries: range.clone(),
        });
        log.watermark = log.len();
        UpdateOutcome::Updated(MaintenanceStats {
            generation,
            entries_used: range.len(),
            closures,
            e1_len: self.e1.len(),
            e2_len: self.e2.len(),
            elapsed: start.elapsed(),
        })
    }

    /// Checks every concept against the context of the batch that produced it.
    pub fn verify_closure(&self, log: &QueryLog) -> bool {
        self.batches.iter().all(|batch| {
            let Some(entries) = log.entries.get(batch.entries.clone()) else {
                return false;
            };
            let c1 = build_context_c1(entries);
            let c2 = build_context_c2(entries);
            let e1_ok = self
                .e1
                .iter()
                .zip(&self.e1_tags)
                .filter(|(_, &t)| t == batch.generation)
                .all(|(c, _)| c1.is_concept(c));
            let e2_ok = self
                .e2
                .iter()
                .zip(&self.e2_tags)
                .filter(|(_, &t)| t == batch.generation)
                .all(|(c, _)| c2.is_concept(c));
            e1_ok && e2_ok
        })
    }
}

fn generate(entries: &[LogEntry]) -> (Vec<TermConcept>, Vec<PeerConcept>, u64) {
    let e1 = build_context_c1(entries).enumerate();
    let e2 = build_context_c2(entries).enumerate();
    (e1.concepts, e2.concepts, e1.closures + e2.closures)
}

fn union_into<O, A>(
    current: &mut Vec<FormalConcept<O, A>>,
    tags: &mut Vec<u32>,
    fresh: Vec<FormalConcept<O, A>>,
    generation: u32,
) where
    O: Eq + std::hash::Hash + Clone,
    A: Eq + std::hash::Hash + Clone,
{
    let present: HashSet<FormalConcept<O, A>> = current.iter().cloned().collect();
    for c in fresh {
        if !present.contains(&c) {
            current.push(c);
            tags.push(generation);
        }
    }
}
