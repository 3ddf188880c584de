use std::collections::{BTreeSet, HashMap};
use std::fs;

use fcaroute::datagen::{self, DataError, DOCUMENTS_FILE, PEERS_FILE, QUERIES_FILE};
use fcaroute::simulator::{self, Network, RouteParams};
use fcaroute::{GenParams, PeerId, Query};

fn single_peer(n_topics: usize, terms_per_topic: usize) -> GenParams {
    GenParams {
        n_peers: 1,
        degree: 0,
        n_docs: 1,
        n_queries: 1,
        n_topics,
        terms_per_topic,
        ..GenParams::default()
    }
}

#[test]
fn single_peer_dataset_runs_end_to_end() {
    // One topic whose pool equals a document's term set: the query must match.
    for (n_topics, pool, always_matches) in [(1, 5, true), (20, 12, false)] {
        let ds = datagen::generate(&single_peer(n_topics, pool)).unwrap();
        assert_eq!(ds.peers.len(), 1);
        assert!(ds.peers[0].neighbors.is_empty());
        assert_eq!(ds.documents.len(), 1);
        assert_eq!(ds.queries.len(), 1);

        let mut net = Network::from_dataset(&ds);
        let q = &ds.queries[0];
        let query = Query::new(q.id, q.terms.clone(), q.issuer).unwrap();
        let relevant = net.relevant_set(&query.terms);
        let outcome = net
            .propagate(&query, &RouteParams::flooding(4, 3, 1))
            .unwrap();
        assert_eq!(outcome.messages, 0);
        match simulator::recall(&outcome, &relevant) {
            Some(r) => assert_eq!(r, 1.0),
            None => assert!(!always_matches, "query missed the only document"),
        }
    }
}

#[test]
fn desk_defaults_are_structurally_valid() {
    let params = GenParams::default();
    let ds = datagen::generate(&params).unwrap();
    ds.validate().unwrap();
    assert_eq!(ds.peers.len(), 100);
    assert_eq!(ds.queries.len(), 5000);
    let docs: BTreeSet<_> = ds.documents.iter().map(|d| d.id).collect();
    assert_eq!(docs.len(), 2000);
    assert_eq!(ds.documents.len(), 2000 * params.replication_factor);
    for p in &ds.peers {
        assert_eq!(p.neighbors.len(), params.degree);
    }
}

#[test]
fn topology_is_connected_and_regular() {
    for seed in 0..5 {
        let ds = datagen::generate(&GenParams {
            seed,
            ..GenParams::default()
        })
        .unwrap();
        let adj: HashMap<PeerId, &[PeerId]> = ds
            .peers
            .iter()
            .map(|p| (p.id, p.neighbors.as_slice()))
            .collect();
        let mut seen = BTreeSet::from([ds.peers[0].id]);
        let mut stack = vec![ds.peers[0].id];
        while let Some(p) = stack.pop() {
            for &n in adj[&p] {
                assert!(adj[&n].contains(&p));
                if seen.insert(n) {
                    stack.push(n);
                }
            }
        }
        assert_eq!(seen.len(), ds.peers.len());
    }
}

#[test]
fn degree_must_be_below_peer_count() {
    let err = datagen::generate(&GenParams {
        n_peers: 4,
        degree: 4,
        ..GenParams::default()
    })
    .unwrap_err();
    assert!(
        matches!(err, DataError::Params(ref m) if m.contains("degree")),
        "{err}"
    );
}

#[test]
fn same_seed_gives_identical_files() {
    let params = GenParams {
        n_docs: 200,
        n_queries: 300,
        seed: 7,
        ..GenParams::default()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    datagen::generate(&params).unwrap().save(a.path()).unwrap();
    datagen::generate(&params).unwrap().save(b.path()).unwrap();
    for f in [PEERS_FILE, DOCUMENTS_FILE, QUERIES_FILE] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap()
        );
    }
    let other = datagen::generate(&GenParams {
        seed: 8,
        ..params.clone()
    })
    .unwrap();
    assert_ne!(other, datagen::generate(&params).unwrap());
}

#[test]
fn save_load_roundtrip() {
    let ds = datagen::generate(&GenParams {
        n_docs: 300,
        n_queries: 400,
        ..GenParams::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    ds.save(dir.path()).unwrap();
    assert_eq!(datagen::Dataset::load(dir.path()).unwrap(), ds);
}

fn saved_small() -> tempfile::TempDir {
    let ds = datagen::generate(&GenParams {
        n_peers: 10,
        n_docs: 20,
        n_queries: 20,
        ..GenParams::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    ds.save(dir.path()).unwrap();
    dir
}

#[test]
fn truncated_documents_file_reports_line() {
    let dir = saved_small();
    let path = dir.path().join(DOCUMENTS_FILE);
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    // Cut the fifth line in the middle of its peer column.
    let cut = lines[4].split('\t').next().unwrap();
    let truncated = format!("{}\n{cut}\t", lines[..4].join("\n"));
    fs::write(&path, truncated).unwrap();
    match datagen::Dataset::load(dir.path()).unwrap_err() {
        DataError::Parse { file, line, .. } => {
            assert!(file.ends_with(DOCUMENTS_FILE));
            assert_eq!(line, 5);
        }
        e => panic!("unexpected error {e}"),
    }
}

#[test]
fn unknown_issuer_is_a_referential_error() {
    let dir = saved_small();
    let path = dir.path().join(QUERIES_FILE);
    let mut text = fs::read_to_string(&path).unwrap();
    text.push_str("999\t77\t1 2\n");
    fs::write(&path, text).unwrap();
    match datagen::Dataset::load(dir.path()).unwrap_err() {
        DataError::UnknownPeer { file, line, id } => {
            assert!(file.ends_with(QUERIES_FILE));
            assert_eq!(line, 22);
            assert_eq!(id, PeerId(77));
        }
        e => panic!("unexpected error {e}"),
    }
}

#[test]
fn peers_hold_mostly_one_topic() {
    let params = GenParams::default();
    let uniform = 1.0 / params.n_topics as f64;
    for seed in 1..=3 {
        let ds = datagen::generate(&GenParams {
            seed,
            ..params.clone()
        })
        .unwrap();
        let mut per_peer: HashMap<PeerId, HashMap<u32, usize>> = HashMap::new();
        for d in &ds.documents {
            let topic = d.terms[0].0 / params.terms_per_topic as u32;
            *per_peer
                .entry(d.host)
                .or_default()
                .entry(topic)
                .or_default() += 1;
        }
        let fractions: Vec<f64> = per_peer
            .values()
            .map(|topics| {
                let total: usize = topics.values().sum();
                *topics.values().max().unwrap() as f64 / total as f64
            })
            .collect();
        let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
        assert!(
            mean > 5.0 * uniform,
            "seed {seed}: home-topic share {mean:.3}"
        );
    }
}

#[test]
fn warns_when_queries_outgrow_documents() {
    let p = GenParams {
        query_terms: 6,
        doc_terms: 5,
        ..GenParams::default()
    };
    assert_eq!(p.warnings().len(), 1);
    assert!(GenParams::default().warnings().is_empty());
}

#[test]
fn params_file_form() {
    let p = GenParams::parse_str("# small\nn_peers=10\n\nseed = 3\nzipf_exponent=0.5\n").unwrap();
    assert_eq!(p.n_peers, 10);
    assert_eq!(p.seed, 3);
    assert_eq!(p.zipf_exponent, 0.5);
    assert_eq!(p.n_docs, GenParams::default().n_docs);
    assert!(GenParams::parse_str("n_peer=10").is_err());
    assert!(GenParams::parse_str("n_peers").is_err());
    assert!(GenParams::parse_str("n_peers=-1").is_err());
    assert_eq!(GenParams::KEYS.len(), 14);
}
