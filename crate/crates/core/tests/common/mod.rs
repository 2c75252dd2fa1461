#![allow(dead_code)]

use activeclust::seed;
use activeclust::ClusterTree;
use rand::seq::SliceRandom;
use rand::Rng;

/// A random hierarchy over `0..n`: each cluster of at least two objects is
/// cut into 2..=4 random nonempty parts until `max_depth`.
pub fn random_tree(n: usize, max_depth: usize, seed_value: u64) -> ClusterTree {
    let mut rng = seed::rng(seed_value);
    let mut tree = ClusterTree::leaf(0..n);
    let mut stack = vec![ClusterTree::ROOT];
    while let Some(node) = stack.pop() {
        let c = tree.node(node);
        if c.len() < 2 || c.depth() >= max_depth || rng.random_bool(0.15) {
            continue;
        }
        let mut members = c.members().to_vec();
        members.shuffle(&mut rng);
        let parts = rng.random_range(2..=4usize).min(members.len());
        let mut cuts: Vec<usize> = (1..members.len()).collect();
        cuts.shuffle(&mut rng);
        let mut cuts: Vec<usize> = cuts[..parts - 1].to_vec();
        cuts.sort_unstable();
        let mut start = 0;
        for end in cuts.into_iter().chain([members.len()]) {
            let id = tree.add_child(node, members[start..end].iter().copied());
            stack.push(id);
            start = end;
        }
    }
    tree
}
