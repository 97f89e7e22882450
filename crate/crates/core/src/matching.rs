//! Maximum bipartite matching by layered augmenting paths (Hopcroft–Karp).

use std::collections::VecDeque;

const NIL: usize = usize::MAX;

#[derive(Clone, Debug)]
pub struct BipartiteGraph {
    left: usize,
    right: usize,
    adj: Vec<Vec<usize>>,
}

impl BipartiteGraph {
    pub fn new(left: usize, right: usize) -> Self {
        BipartiteGraph { left, right, adj: vec![Vec::new(); left] }
    }

    pub fn add_edge(&mut self, u: usize, v: usize) {
        debug_assert!(u < self.left && v < self.right);
        self.adj[u].push(v);
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adj[u]
    }

    pub fn left_len(&self) -> usize {
        self.left
    }

    pub fn right_len(&self) -> usize {
        self.right
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Matching {
    pub pair_left: Vec<Option<usize>>,
    pub pair_right: Vec<Option<usize>>,
    pub size: usize,
}

impl Matching {
    pub fn is_left_perfect(&self) -> bool {
        self.pair_left.iter().all(Option::is_some)
    }
}

/// Deterministic for a fixed edge order: vertices and neighbours are scanned
/// in index order.
pub fn hopcroft_karp(g: &BipartiteGraph) -> Matching {
    let mut pl = vec![NIL; g.left];
    let mut pr = vec![NIL; g.right];
    let mut dist = vec![0usize; g.left];
    let mut size = 0;
    loop {
        // Layer the free left vertices and everything reachable by alternating paths.
        let mut queue = VecDeque::new();
        for u in 0..g.left {
            if pl[u] == NIL {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = usize::MAX;
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for &v in &g.adj[u] {
                let w = pr[v];
                if w == NIL {
                    found = true;
                } else if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        if !found {
            break;
        }
        let mut it = vec![0usize; g.left];
        for u in 0..g.left {
            if pl[u] == NIL && augment(g, u, &mut pl, &mut pr, &mut dist, &mut it) {
                size += 1;
            }
        }
    }
    Matching {
        pair_left: pl.iter().map(|&v| (v != NIL).then_some(v)).collect(),
        pair_right: pr.iter().map(|&u| (u != NIL).then_some(u)).collect(),
        size,
    }
}

fn augment(
    g: &BipartiteGraph,
    u: usize,
    pl: &mut [usize],
    pr: &mut [usize],
    dist: &mut [usize],
    it: &mut [usize],
) -> bool {
    while it[u] < g.adj[u].len() {
        let v = g.adj[u][it[u]];
        it[u] += 1;
        let w = pr[v];
        if w == NIL || (dist[w] == dist[u] + 1 && augment(g, w, pl, pr, dist, it)) {
            pl[u] = v;
            pr[v] = u;
            return true;
        }
    }
    dist[u] = usize::MAX;
    false
}

/// A left set `L` with `|N(L)| < |L|` when the matching is not left-perfect:
/// the left vertices reachable from an unmatched one by alternating paths.
pub fn hall_violator(g: &BipartiteGraph, m: &Matching) -> Option<(Vec<usize>, Vec<usize>)> {
    let start = m.pair_left.iter().position(Option::is_none)?;
    let mut seen_left = vec![false; g.left];
    let mut seen_right = vec![false; g.right];
    let mut queue = VecDeque::from([start]);
    seen_left[start] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &g.adj[u] {
            if seen_right[v] {
                continue;
            }
            seen_right[v] = true;
            if let Some(w) = m.pair_right[v] {
                if !seen_left[w] {
                    seen_left[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    let left: Vec<usize> = (0..g.left).filter(|&u| seen_left[u]).collect();
    let right: Vec<usize> = (0..g.right).filter(|&v| seen_right[v]).collect();
    Some((left, right))
}
