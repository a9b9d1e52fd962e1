mod common;

use common::{apply, op};
use proptest::prelude::*;
use sketch_core::session::CanvasHistory;
use sketch_core::Graph;

/// Runs `ops`, recording each effective mutation. Returns the history and
/// the forward trajectory of snapshots (opening snapshot first).
fn run(ops: &[common::Op]) -> (CanvasHistory, Vec<Graph>) {
    let mut g = Graph::new(9);
    let mut h = CanvasHistory::new(g.clone());
    let mut states = vec![g.clone()];
    for op in ops {
        if let Ok(Some(label)) = apply(&mut g, op) {
            h.record(&label, g.clone());
            states.push(g.clone());
        }
    }
    (h, states)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn full_undo_then_redo_replays_trajectory(ops in prop::collection::vec(op(), 0..50)) {
        let (mut h, states) = run(&ops);
        let n = states.len() - 1;
        prop_assert_eq!(h.len(), n + 1);
        for k in (0..n).rev() {
            prop_assert_eq!(h.undo(), Some(states[k].clone()));
        }
        prop_assert!(h.undo().is_none());
        for s in &states[1..] {
            prop_assert_eq!(h.redo(), Some(s.clone()));
        }
        prop_assert!(h.redo().is_none());
        prop_assert_eq!(h.current(), &states[n]);
    }

    #[test]
    fn record_after_undo_truncates_redo_tail(ops in prop::collection::vec(op(), 1..50), back in 0..50usize) {
        let (mut h, states) = run(&ops);
        let n = states.len() - 1;
        let back = back % (n + 1);
        for _ in 0..back {
            h.undo().unwrap();
        }
        let ids_before: Vec<u64> = h.checkpoints().iter().map(|c| c.checkpoint_id).collect();
        let max_before = *ids_before.iter().max().unwrap();
        let mut g = h.current().clone();
        g.add_node("ReLU", None, Default::default()).unwrap();
        h.record("node.add", g.clone());
        prop_assert_eq!(h.len(), n - back + 2);
        prop_assert!(h.len() <= states.len() + 1);
        let ids: Vec<u64> = h.checkpoints().iter().map(|c| c.checkpoint_id).collect();
        prop_assert_eq!(&ids[..n - back + 1], &ids_before[..n - back + 1]);
        prop_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(*ids.last().unwrap() > max_before);
        for (c, s) in h.checkpoints().iter().zip(&states[..n - back + 1]) {
            prop_assert_eq!(&c.snapshot, s);
        }
        prop_assert!(h.redo().is_none());
        prop_assert_eq!(h.current(), &g);
    }
}
