//! Composite behavior semantics checked against an independent reference:
//! the production tree is ticked step by step with scripted leaves, while
//! the oracle computes every node's terminal tick in closed form from the
//! leaf scripts. Tree shapes up to depth 2 are enumerated exhaustively.

use scenloop_core::behavior::{BehaviorStatus, NodeKind, TreeNode};
use scenloop_core::scenario::ConcurrentPolicy;

const TICKS: usize = 30;

/// A scripted leaf: Running until its `terminal_at`-th tick, then the
/// scripted outcome.
#[derive(Debug, Clone, Copy)]
struct Script {
    terminal_at: usize,
    succeeds: bool,
    ticks_seen: usize,
}

impl Script {
    fn new(terminal_at: usize, succeeds: bool) -> Self {
        Script {
            terminal_at,
            succeeds,
            ticks_seen: 0,
        }
    }

    fn tick(&mut self) -> BehaviorStatus {
        let status = if self.ticks_seen >= self.terminal_at {
            if self.succeeds {
                BehaviorStatus::Succeeded
            } else {
                BehaviorStatus::Failed
            }
        } else {
            BehaviorStatus::Running
        };
        self.ticks_seen += 1;
        status
    }
}

#[derive(Debug, Clone)]
enum Shape {
    Leaf(usize, bool),
    Seq(Vec<Shape>),
    Conc(ConcurrentPolicy, Vec<Shape>),
}

fn build(shape: &Shape) -> TreeNode<Script> {
    match shape {
        Shape::Leaf(at, s) => TreeNode::leaf(Script::new(*at, *s)),
        Shape::Seq(children) => TreeNode::sequential(children.iter().map(build).collect()),
        Shape::Conc(policy, children) => {
            TreeNode::concurrent(*policy, children.iter().map(build).collect())
        }
    }
}

/// The oracle: the global tick at which a node started at `start` reaches
/// a terminal status, and whether that status is success. Derived from the
/// declared semantics, not from per-tick simulation:
/// - a leaf terminates on its scripted tick, offset by its start;
/// - a sequential child starts one tick after its predecessor succeeded,
///   and the node fails at the first child failure;
/// - concurrent children all start with the node; all_succeed fails at
///   the earliest failure else succeeds with the slowest child, while
///   any_succeeds succeeds at the earliest success else fails with the
///   slowest child.
fn oracle_terminal(shape: &Shape, start: usize) -> (usize, bool) {
    match shape {
        Shape::Leaf(at, succeeds) => (start + at, *succeeds),
        Shape::Seq(children) => {
            let mut cursor = start;
            let mut last = start;
            for (i, child) in children.iter().enumerate() {
                let child_start = if i == 0 { cursor } else { cursor + 1 };
                let (t, ok) = oracle_terminal(child, child_start);
                if !ok {
                    return (t, false);
                }
                cursor = t;
                last = t;
            }
            (last, true)
        }
        Shape::Conc(policy, children) => {
            let outcomes: Vec<(usize, bool)> =
                children.iter().map(|c| oracle_terminal(c, start)).collect();
            let first_fail = outcomes.iter().filter(|(_, ok)| !ok).map(|(t, _)| *t).min();
            let first_success = outcomes.iter().filter(|(_, ok)| *ok).map(|(t, _)| *t).min();
            let slowest = outcomes.iter().map(|(t, _)| *t).max().unwrap();
            match policy {
                ConcurrentPolicy::AllSucceed => match first_fail {
                    Some(t) => (t, false),
                    None => (slowest, true),
                },
                ConcurrentPolicy::AnySucceeds => match first_success {
                    Some(t) => (t, true),
                    None => (slowest, false),
                },
            }
        }
    }
}

fn check(shape: &Shape) {
    let (terminal, succeeds) = oracle_terminal(shape, 0);
    assert!(terminal + 1 < TICKS, "script too long for the window: {shape:?}");

    let mut tree = build(shape);
    for tick in 0..TICKS {
        let status = tree.tick_with(&mut Script::tick);
        let expected = if tick < terminal {
            BehaviorStatus::Running
        } else if succeeds {
            BehaviorStatus::Succeeded
        } else {
            BehaviorStatus::Failed
        };
        assert_eq!(
            status, expected,
            "tick {tick} of {shape:?}: oracle terminal ({terminal}, {succeeds})"
        );
    }

    // absorbing: nothing under a terminal root may have been ticked after
    // the root terminated
    assert_max_leaf_ticks(&tree, terminal + 1);
}

fn assert_max_leaf_ticks(node: &TreeNode<Script>, limit: usize) {
    match &node.kind {
        NodeKind::Leaf(s) => assert!(
            s.ticks_seen <= limit,
            "leaf ticked {} times, root terminal allows at most {limit}",
            s.ticks_seen
        ),
        NodeKind::Sequential(children) | NodeKind::Concurrent(_, children) => {
            for c in children {
                assert_max_leaf_ticks(c, limit);
            }
        }
    }
}

const POLICIES: [ConcurrentPolicy; 2] = [ConcurrentPolicy::AllSucceed, ConcurrentPolicy::AnySucceeds];

fn leaf_variants() -> Vec<Shape> {
    let mut out = Vec::new();
    for at in 0..3 {
        for succeeds in [true, false] {
            out.push(Shape::Leaf(at, succeeds));
        }
    }
    out
}

/// Every assignment of `leaves` to `n` slots.
fn assignments(leaves: &[Shape], n: usize) -> Vec<Vec<Shape>> {
    let mut out: Vec<Vec<Shape>> = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                leaves.iter().map(move |l| {
                    let mut v = prefix.clone();
                    v.push(l.clone());
                    v
                })
            })
            .collect();
    }
    out
}

#[test]
pub fn depth_one_composites_match_the_oracle_exhaustively() {
    let leaves = leaf_variants();
    let mut count = 0usize;
    for n in 1..=3 {
        for children in assignments(&leaves, n) {
            check(&Shape::Seq(children.clone()));
            count += 1;
            for policy in POLICIES {
                check(&Shape::Conc(policy, children.clone()));
                count += 1;
            }
        }
    }
    assert_eq!(count, 3 * (6 + 36 + 216));
}

#[test]
pub fn depth_two_composites_match_the_oracle_exhaustively() {
    // two composite children with two leaves each, every composite type at
    // both levels, leaves drawn from a reduced but behavior-covering set
    let leaves = vec![
        Shape::Leaf(0, true),
        Shape::Leaf(2, true),
        Shape::Leaf(1, false),
    ];
    let composite = |idx: usize, children: Vec<Shape>| match idx {
        0 => Shape::Seq(children),
        1 => Shape::Conc(ConcurrentPolicy::AllSucceed, children),
        _ => Shape::Conc(ConcurrentPolicy::AnySucceeds, children),
    };
    let mut count = 0usize;
    for root in 0..3 {
        for left in 0..3 {
            for right in 0..3 {
                for slots in assignments(&leaves, 4) {
                    let tree = composite(
                        root,
                        vec![
                            composite(left, slots[..2].to_vec()),
                            composite(right, slots[2..].to_vec()),
                        ],
                    );
                    check(&tree);
                    count += 1;
                }
            }
        }
    }
    assert_eq!(count, 27 * 81);
}

#[test]
pub fn single_leaf_timeline_matches_its_script() {
    for at in 0..5 {
        for succeeds in [true, false] {
            check(&Shape::Leaf(at, succeeds));
        }
    }
}
