use ndarray::Array2;

use crate::tree::ClusterTree;

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Single-linkage dendrogram built directly on similarities: repeatedly
/// merge the two components joined by the most similar pair. Ties go to the
/// lexicographically smallest pair `(i, j)`. Leaves are singletons.
pub fn single_linkage(w: &Array2<f64>) -> ClusterTree {
    let m = w.nrows();
    if m <= 1 {
        return ClusterTree::leaf(0..m);
    }
    let mut edges: Vec<(f64, u32, u32)> = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            edges.push((w[[i, j]], i as u32, j as u32));
        }
    }
    edges.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    // nodes 0..m are singletons, m.. are merges (left, right)
    let mut merges: Vec<(usize, usize)> = Vec::with_capacity(m - 1);
    let mut uf: Vec<usize> = (0..m).collect();
    let mut comp_node: Vec<usize> = (0..m).collect();
    for &(_, i, j) in &edges {
        let (ri, rj) = (find(&mut uf, i as usize), find(&mut uf, j as usize));
        if ri == rj {
            continue;
        }
        let node = m + merges.len();
        merges.push((comp_node[ri], comp_node[rj]));
        uf[rj] = ri;
        comp_node[ri] = node;
        if merges.len() == m - 1 {
            break;
        }
    }

    // members of every dendrogram node, then build top-down
    let total = m + merges.len();
    let mut members: Vec<Vec<usize>> = (0..m).map(|i| vec![i]).collect();
    members.reserve(merges.len());
    for &(a, b) in &merges {
        let mut v = members[a].clone();
        v.extend_from_slice(&members[b]);
        members.push(v);
    }
    let mut tree = ClusterTree::leaf(members[total - 1].iter().copied());
    let mut stack = vec![(total - 1, ClusterTree::ROOT)];
    while let Some((node, tree_id)) = stack.pop() {
        if node < m {
            continue;
        }
        let (a, b) = merges[node - m];
        for child in [a, b] {
            let id = tree.add_child(tree_id, members[child].iter().copied());
            stack.push((child, id));
        }
    }
    tree
}
