//! Small directed-graph utilities over dense weight matrices.
//!
//! Entry `(i, j)` of a weight matrix is the edge `i -> j`; an exact zero means
//! no edge.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;

/// Boolean adjacency (`adj[i][j]` is the edge `i -> j`).
pub type Adjacency = Vec<Vec<bool>>;

pub fn support(weights: &DMatrix<f64>) -> Adjacency {
    let n = weights.nrows();
    (0..n)
        .map(|i| (0..n).map(|j| weights[(i, j)] != 0.0).collect())
        .collect()
}

/// Kahn ordering with the smallest available index first.
///
/// Returns `None` when the graph has a cycle (self-loops included).
pub fn kahn_order(adj: &Adjacency) -> Option<Vec<usize>> {
    let n = adj.len();
    let mut indegree = vec![0usize; n];
    for row in adj {
        for (j, &e) in row.iter().enumerate() {
            if e {
                indegree[j] += 1;
            }
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> = (0..n)
        .filter(|&j| indegree[j] == 0)
        .map(Reverse)
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(v)) = ready.pop() {
        order.push(v);
        for (j, &e) in adj[v].iter().enumerate() {
            if e {
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    ready.push(Reverse(j));
                }
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// Reflexive-free transitive closure: `reach[a][b]` iff a directed path of
/// length at least one leads from `a` to `b`.
pub fn transitive_closure(adj: &Adjacency) -> Adjacency {
    let n = adj.len();
    let mut reach = vec![vec![false; n]; n];
    for (src, row) in reach.iter_mut().enumerate() {
        let mut stack: Vec<usize> = (0..n).filter(|&j| adj[src][j]).collect();
        while let Some(v) = stack.pop() {
            if row[v] {
                continue;
            }
            row[v] = true;
            stack.extend((0..n).filter(|&j| adj[v][j] && !row[j]));
        }
    }
    reach
}

/// One directed path `from -> ... -> to` (vertex list), if any.
pub fn find_path(adj: &Adjacency, from: usize, to: usize) -> Option<Vec<usize>> {
    let n = adj.len();
    let mut parent = vec![usize::MAX; n];
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::new();
    seen[from] = true;
    queue.push_back(from);
    while let Some(v) = queue.pop_front() {
        for j in 0..n {
            if adj[v][j] && !seen[j] {
                seen[j] = true;
                parent[j] = v;
                if j == to {
                    let mut path = vec![to];
                    let mut cur = to;
                    while cur != from {
                        cur = parent[cur];
                        path.push(cur);
                    }
                    path.reverse();
                    return Some(path);
                }
                queue.push_back(j);
            }
        }
    }
    None
}

/// Whether adding `from -> to` would close a cycle.
pub fn creates_cycle(adj: &Adjacency, from: usize, to: usize) -> bool {
    from == to || find_path(adj, to, from).is_some()
}
