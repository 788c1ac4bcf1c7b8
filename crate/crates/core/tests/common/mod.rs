//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::PathBuf;

use nnm_core::{
    evaluator::TrajectoryRecord, FallbackEmbedder, FixtureBackend, MapGraph, NodeId, Role, Script, SimilarityScore,
};

pub const COUNTRY_TEMPLATE: &str = "A short list of countries that are nearest to \"{}\", separated by commas:";

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Country -> land neighbours, as listed in the fixture.
pub fn central_america() -> BTreeMap<String, Vec<String>> {
    read_fixture("central_america.tsv")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let (k, v) = l.split_once('\t').expect("tab-separated");
            (k.to_string(), v.split(", ").map(str::to_string).collect())
        })
        .collect()
}

pub fn table_backend(table: &BTreeMap<String, Vec<String>>) -> FixtureBackend {
    FixtureBackend::new(table.iter().map(|(k, v)| (k.clone(), v.join(", "))))
}

/// Breadth-first walk of an adjacency table, querying at most `max`
/// names. Returns the queried names in order and every name seen.
pub fn walk(table: &BTreeMap<String, Vec<String>>, seeds: &[&str], max: usize) -> (Vec<String>, BTreeSet<String>) {
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<String> = seeds.iter().map(|s| s.to_string()).filter(|s| seen.insert(s.clone())).collect();
    let mut queried = Vec::new();
    while queried.len() < max {
        let Some(name) = queue.pop_front() else { break };
        for n in table.get(&name).into_iter().flatten() {
            if seen.insert(n.clone()) {
                queue.push_back(n.clone());
            }
        }
        queried.push(name);
    }
    (queried, seen)
}

/// Pearson r by the textbook two-pass formula.
pub fn two_pass_pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

fn words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Cosine of raw term-frequency vectors, no hashing.
pub fn bow_cosine(a: &str, b: &str) -> f64 {
    let count = |t: &str| {
        let mut m: HashMap<String, f64> = HashMap::new();
        for w in words(t) {
            *m.entry(w).or_default() += 1.0;
        }
        m
    };
    let (ca, cb) = (count(a), count(b));
    let dot: f64 = ca.iter().map(|(w, x)| x * cb.get(w).unwrap_or(&0.0)).sum();
    let na = ca.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = cb.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}

/// Words whose hashed buckets are pairwise distinct, so the hashed
/// embedding equals the exact bag of words on texts drawn from them.
pub fn collision_free_vocabulary() -> Vec<&'static str> {
    const WORDS: &[&str] = &[
        "hold", "your", "fire", "enemy", "patrol", "base", "attack", "return", "target", "orders", "engage",
        "careful", "duty", "ethical", "kill", "protect", "report", "verify", "magazine", "doubt", "plan",
        "cease", "forces", "hostile",
    ];
    let e = FallbackEmbedder::default();
    let mut buckets = BTreeSet::new();
    let vocab: Vec<&str> = WORDS.iter().copied().filter(|w| buckets.insert(e.bucket(w))).collect();
    assert!(vocab.len() >= 16, "vocabulary too small after collision filtering");
    vocab
}

pub fn roe_map() -> MapGraph {
    serde_json::from_str(&read_fixture("roe_map.json")).expect("roe_map.json")
}

pub fn roe_script() -> Script {
    Script::from_json(&read_fixture("roe_script.json")).expect("roe_script.json")
}

/// The published trajectory table as records.
pub fn table1_records() -> Vec<TrajectoryRecord> {
    type Row<'a> = (u64, &'a str, f64, &'a str, f64, Option<f64>);
    let rows: [Row; 8] = [
        (1, "COMMANDER", 0.621, "careful", 88.63, None),
        (2, "SUBORDINATE", 0.758, "duty", 88.63, Some(0.5856)),
        (3, "SUBORDINATE", 0.711, "careful", 0.0, Some(0.7165)),
        (4, "COMMANDER", 0.758, "careful", 0.0, None),
        (5, "SUBORDINATE", 0.822, "kill the enemy", 134.05, Some(0.7365)),
        (6, "SUBORDINATE", 0.636, "self-protect", 63.78, Some(0.4733)),
        (7, "SUBORDINATE", 0.722, "the enemy", 142.33, Some(0.4173)),
        (8, "SUBORDINATE", 0.741, "kill the enemy", 134.05, Some(0.5952)),
    ];
    rows.iter()
        .map(|&(id, role, sim, node, dist, text)| TrajectoryRecord {
            step_id: id,
            role: Role::from(role),
            match_similarity: SimilarityScore::from_cosine(sim),
            node_id: NodeId(0),
            node: node.to_string(),
            node_dist: dist,
            text_similarity: text.map(SimilarityScore::from_cosine),
        })
        .collect()
}

/// Two 5-cliques joined by a single edge between their first members.
pub fn two_cliques() -> (MapGraph, Vec<NodeId>, Vec<NodeId>) {
    let mut g = MapGraph::new();
    let a: Vec<NodeId> = (0..5).map(|i| g.add_node(&format!("a{i}"), None).unwrap()).collect();
    let b: Vec<NodeId> = (0..5).map(|i| g.add_node(&format!("b{i}"), None).unwrap()).collect();
    for side in [&a, &b] {
        for i in 0..5 {
            for j in i + 1..5 {
                g.connect(side[i], side[j]).unwrap();
            }
        }
    }
    g.connect(a[0], b[0]).unwrap();
    (g, a, b)
}

/// Mean distance within the cliques and across them.
pub fn clique_distances(g: &MapGraph, a: &[NodeId], b: &[NodeId]) -> (f64, f64) {
    let p = |id: NodeId| g.position(id).unwrap();
    let mean = |pairs: Vec<(NodeId, NodeId)>| pairs.iter().map(|&(u, v)| p(u).distance(p(v))).sum::<f64>() / pairs.len() as f64;
    let mut intra = Vec::new();
    for side in [a, b] {
        for i in 0..side.len() {
            for j in i + 1..side.len() {
                intra.push((side[i], side[j]));
            }
        }
    }
    let inter = a.iter().flat_map(|&u| b.iter().map(move |&v| (u, v))).collect();
    (mean(intra), mean(inter))
}
