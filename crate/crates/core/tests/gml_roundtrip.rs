use std::collections::{BTreeSet, HashSet};

use nnm_core::graph::{display_name, name_key};
use nnm_core::{export_gml, import_gml, MapEdge, MapGraph, MapNode, NodeId, Point};
use proptest::prelude::*;

fn coordinate() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6..1e6f64,
        Just(0.0),
        Just(-0.0),
        Just(0.1 + 0.2),
        Just(f64::MIN_POSITIVE),
        Just(1e300),
        (any::<i32>()).prop_map(f64::from),
    ]
}

prop_compose! {
    fn node_spec()(
        gap in 1u64..5,
        name in "[A-Za-z0-9 \"\\\\äé'-]{1,14}",
        group in prop::option::of("[a-z \"\\\\]{0,8}"),
        query_count in 0u64..1000,
        x in coordinate(),
        y in coordinate(),
    ) -> (u64, String, Option<String>, u64, Point) {
        (gap, name, group, query_count, Point::new(x, y))
    }
}

prop_compose! {
    fn graph()(
        specs in prop::collection::vec(node_spec(), 0..25),
        pairs in prop::collection::vec((any::<prop::sample::Index>(), any::<prop::sample::Index>()), 0..60),
        layout_seed in prop::option::of(any::<u64>()),
    ) -> MapGraph {
        let mut g = MapGraph::new();
        g.layout_seed = layout_seed;
        let mut keys = HashSet::new();
        let mut id = 0;
        for (gap, name, group, query_count, position) in specs {
            let name = display_name(&name);
            if name.is_empty() || !keys.insert(name_key(&name)) {
                continue;
            }
            id += gap;
            let group = group.map(|s| display_name(&s)).filter(|s| !s.is_empty());
            g.nodes.push(MapNode { id: NodeId(id), name, group, topics: Vec::new(), query_count, position });
        }
        if g.nodes.len() >= 2 {
            for (a, b) in pairs {
                let (a, b) = (g.nodes[a.index(g.nodes.len())].id, g.nodes[b.index(g.nodes.len())].id);
                if a != b {
                    g.edges.insert(MapEdge::new(a, b));
                }
            }
        }
        g
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn export_import_is_identity(g in graph()) {
        prop_assert_eq!(g.validate(), Ok(()));
        let doc = export_gml(&g);
        let back = import_gml(&doc).unwrap();
        prop_assert_eq!(&back, &g);
        for (a, b) in back.nodes.iter().zip(&g.nodes) {
            prop_assert_eq!(a.position.x.to_bits(), b.position.x.to_bits());
            prop_assert_eq!(a.position.y.to_bits(), b.position.y.to_bits());
        }
        prop_assert_eq!(export_gml(&back), doc.clone());
        prop_assert_eq!(export_gml(&g.clone()), doc);
    }
}

#[test]
fn node_and_edge_blocks_are_counted() {
    let mut g = MapGraph::new();
    let a = g.add_node("Hold fire", None).unwrap();
    let b = g.add_node("Duty", Some("lawful")).unwrap();
    g.connect(a, b).unwrap();
    let doc = export_gml(&g);
    assert_eq!(doc.matches("node [").count(), 2);
    assert_eq!(doc.matches("edge [").count(), 1);
    let edges: BTreeSet<MapEdge> = import_gml(&doc).unwrap().edges;
    assert_eq!(edges, g.edges);
}
