use phenocausal::actions::valid_graphs;
use phenocausal::exemplars::{build, registry, Claim};
use phenocausal::linalg::Matrix;
use serde_json::json;

#[test]
fn urn_chain_has_one_valid_graph() {
    let e = build("urnN", &json!({ "n": 4 })).unwrap();
    for suite in e.suites().unwrap() {
        let valid = valid_graphs(suite.as_ref(), 4).unwrap();
        assert_eq!(valid.len(), 1, "{:?}", suite.mode());
        assert!(valid[0].0.same_structure(&e.ground_truth));
        assert_eq!(e.ground_truth.edge_count(), 6);
    }
}

#[test]
fn bundle_chain_is_valid_but_not_unique() {
    let e = build("bundles", &json!({ "n": 4 })).unwrap();
    assert_eq!(e.claim, Claim::Valid);
    for suite in e.suites().unwrap() {
        assert!(suite.classify(&e.ground_truth).unwrap().valid);
        let valid = valid_graphs(suite.as_ref(), 4).unwrap();
        assert!(valid.len() > 1);
        // Every valid graph keeps the chain's edges.
        for (g, _) in &valid {
            for (a, b) in e.ground_truth.edge_names() {
                assert!(g.has_edge(g.index(&a).unwrap(), g.index(&b).unwrap()), "{g:?}");
            }
        }
    }
}

#[test]
fn boundary_free_runs_match_the_linear_model() {
    for name in ["urn2", "urnN", "bundles"] {
        let e = build(name, &json!({})).unwrap();
        let coins = e.coins().unwrap();
        assert!(coins.boundary_free());
        let s = coins.mixing_matrix();
        for row in 0..50 {
            let run = coins.run(9, row);
            assert_eq!(run.refused, 0);
            let noise: Vec<f64> = run.flipped.iter().map(|&v| v as f64).collect();
            let shift = s.mul_vec(&noise);
            for (k, v) in run.state.iter().enumerate() {
                assert_eq!(*v as f64, coins.k0()[k] as f64 + shift[k], "{name} row {row}");
            }
        }
    }
}

#[test]
fn every_exemplar_builds_and_documents_itself() {
    for (name, f) in registry().iter() {
        let e = f.build(&json!({})).unwrap();
        assert_eq!(e.name, name);
        let doc = serde_json::to_value(e.doc().unwrap()).unwrap();
        assert_eq!(doc["ground_truth"], serde_json::to_value(&e.ground_truth).unwrap());
        let data = e.dataset(200, 1).unwrap();
        assert_eq!(data.columns, e.variables);
        assert_eq!(data, e.dataset(200, 1).unwrap());
    }
}

#[test]
fn urn_mixing_matrix_is_unit_lower_triangular() {
    let e = build("urnN", &json!({ "n": 3 })).unwrap();
    let s: Matrix = e.coins().unwrap().mixing_matrix();
    for i in 0..3 {
        assert_eq!(s.get(i, i), 1.0);
        for j in i + 1..3 {
            assert_eq!(s.get(i, j), 0.0);
        }
    }
}
