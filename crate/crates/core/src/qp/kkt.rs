//! Envelope (skyline) LDLᵀ factorization for sparse quasidefinite systems.
//!
//! The ordering is reverse Cuthill-McKee on the sparsity graph with
//! high-degree nodes moved to the end, which keeps the envelope narrow for
//! the time-banded problems this crate builds.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;


pub(crate) struct EnvelopeLdl {
    dim: usize,
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    storage: Vec<f64>,
    /// Storage slot of each pattern entry.
    slot: Vec<usize>,
    /// Expected sign of each pivot, in permuted order.
    sign: Vec<f64>,
    work: Vec<f64>,
    pub dynamic_regularizations: usize,
}

const DYN_EPS: f64 = 1e-13;
const DYN_DELTA: f64 = 2e-7;

impl EnvelopeLdl {
    /// `pattern` lists lower-triangle entries `(i, j)` with `i >= j`,
    /// including every diagonal. `signs[i]` is `+1` or `-1`.
    pub fn new(dim: usize, pattern: &[(usize, usize)], signs: &[f64]) -> Self {
        let perm = ordering(dim, pattern);
        let mut inv = vec![0; dim];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        let mut first: Vec<usize> = (0..dim).collect();
        for &(i, j) in pattern {
            let (a, b) = (inv[i], inv[j]);
            let (r, c) = if a >= b { (a, b) } else { (b, a) };
            if c < first[r] {
                first[r] = c;
            }
        }
        let mut offset = vec![0; dim + 1];
        for r in 0..dim {
            offset[r + 1] = offset[r] + (r - first[r] + 1);
        }
        let slot = pattern
            .iter()
            .map(|&(i, j)| {
                let (a, b) = (inv[i], inv[j]);
                let (r, c) = if a >= b { (a, b) } else { (b, a) };
                offset[r] + (c - first[r])
            })
            .collect();
        let sign = perm.iter().map(|&p| signs[p]).collect();
        EnvelopeLdl {
            dim,
            storage: vec![0.0; offset[dim]],
            perm,
            first,
            offset,
            slot,
            sign,
            work: vec![0.0; dim],
            dynamic_regularizations: 0,
        }
    }

    #[cfg(test)]
    pub fn envelope_size(&self) -> usize {
        self.storage.len()
    }

    /// Factorizes the matrix whose pattern entries carry `values`.
    pub fn factor(&mut self, values: &[f64]) {
        self.storage.iter_mut().for_each(|v| *v = 0.0);
        for (k, &v) in values.iter().enumerate() {
            self.storage[self.slot[k]] += v;
        }
        let st = &mut self.storage;
        for i in 0..self.dim {
            let fi = self.first[i];
            let oi = self.offset[i];
            // Row i holds u_ij = L_ij D_j until it is complete.
            for j in fi..i {
                let fj = self.first[j];
                let oj = self.offset[j];
                let k0 = fi.max(fj);
                let mut s = st[oi + (j - fi)];
                let ri = &st[oi + (k0 - fi)..oi + (j - fi)];
                let rj = &st[oj + (k0 - fj)..oj + (j - fj)];
                for (a, b) in ri.iter().zip(rj) {
                    s -= a * b;
                }
                st[oi + (j - fi)] = s;
            }
            let mut d = st[oi + (i - fi)];
            for j in fi..i {
                let u = st[oi + (j - fi)];
                let dj = st[self.offset[j] + (j - self.first[j])];
                let l = u / dj;
                d -= u * l;
                st[oi + (j - fi)] = l;
            }
            let want = self.sign[i];
            if want * d < DYN_EPS || !d.is_finite() {
                d = want * DYN_DELTA;
                self.dynamic_regularizations += 1;
            }
            st[oi + (i - fi)] = d;
        }
    }

    /// Solves with the current factor; `rhs` is in original ordering and is
    /// overwritten with the solution.
    pub fn solve(&mut self, rhs: &mut [f64]) {
        let y = &mut self.work;
        for k in 0..self.dim {
            y[k] = rhs[self.perm[k]];
        }
        let st = &self.storage;
        for i in 0..self.dim {
            let fi = self.first[i];
            let oi = self.offset[i];
            let row = &st[oi..oi + (i - fi)];
            let mut s = y[i];
            for (l, v) in row.iter().zip(&y[fi..i]) {
                s -= l * v;
            }
            y[i] = s;
        }
        for i in 0..self.dim {
            y[i] /= st[self.offset[i] + (i - self.first[i])];
        }
        for i in (0..self.dim).rev() {
            let fi = self.first[i];
            let oi = self.offset[i];
            let yi = y[i];
            if yi != 0.0 {
                let row = &st[oi..oi + (i - fi)];
                for (l, v) in row.iter().zip(y[fi..i].iter_mut()) {
                    *v -= l * yi;
                }
            }
        }
        for k in 0..self.dim {
            rhs[self.perm[k]] = y[k];
        }
    }
}

/// Reverse Cuthill-McKee with hub nodes placed last.
fn ordering(dim: usize, pattern: &[(usize, usize)]) -> Vec<usize> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); dim];
    for &(i, j) in pattern {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
        a.dedup();
    }
    let mut degrees: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut sorted = degrees.clone();
    sorted.sort_unstable();
    let median = if dim == 0 { 0 } else { sorted[dim / 2] };
    let hub_limit = 8.max(3 * median);
    let is_hub: Vec<bool> = degrees.iter().map(|&d| d > hub_limit).collect();
    for i in 0..dim {
        if !is_hub[i] {
            degrees[i] = adj[i].iter().filter(|&&j| !is_hub[j]).count();
        }
    }

    let mut visited = is_hub.clone();
    let mut order = Vec::with_capacity(dim);
    let mut queue = VecDeque::new();
    let mut candidates: Vec<usize> = (0..dim).filter(|&i| !is_hub[i]).collect();
    candidates.sort_by_key(|&i| (degrees[i], i));
    for &seed in &candidates {
        if visited[seed] {
            continue;
        }
        let start = peripheral(seed, &adj, &is_hub, &degrees);
        let component_start = order.len();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degrees[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
        order[component_start..].reverse();
    }
    let mut hubs: Vec<usize> = (0..dim).filter(|&i| is_hub[i]).collect();
    hubs.sort_by_key(|&i| (adj[i].len(), i));
    order.extend(hubs);
    order
}

/// Pseudo-peripheral node by repeated breadth-first sweeps.
fn peripheral(seed: usize, adj: &[Vec<usize>], is_hub: &[bool], degrees: &[usize]) -> usize {
    let mut start = seed;
    let mut best_depth = 0;
    let mut level = vec![usize::MAX; adj.len()];
    let mut touched = Vec::new();
    for _ in 0..4 {
        for &t in &touched {
            level[t] = usize::MAX;
        }
        touched.clear();
        let mut queue = VecDeque::new();
        level[start] = 0;
        touched.push(start);
        queue.push_back(start);
        let mut last = start;
        while let Some(v) = queue.pop_front() {
            last = v;
            for &w in &adj[v] {
                if !is_hub[w] && level[w] == usize::MAX {
                    level[w] = level[v] + 1;
                    touched.push(w);
                    queue.push_back(w);
                }
            }
        }
        let depth = level[last];
        if depth <= best_depth && best_depth > 0 {
            break;
        }
        best_depth = depth;
        // Among the deepest level pick the lowest degree node.
        let far = touched
            .iter()
            .copied()
            .filter(|&t| level[t] == depth)
            .min_by_key(|&t| (degrees[t], t))
            .unwrap_or(last);
        if far == start {
            break;
        }
        start = far;
    }
    start
}
