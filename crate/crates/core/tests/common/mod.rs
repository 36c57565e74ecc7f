//! Exhaustive reference counts built only from adjacency matrices and
//! permutations, sharing no code with the library's matcher.

#![allow(dead_code)]

use rggcount::{GraphShape, IndicatorMode, PointCloud};

pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

type Adj = Vec<Vec<bool>>;

fn adjacency(points: &[&[f64]], t: f64) -> Adj {
    let k = points.len();
    let mut a = vec![vec![false; k]; k];
    for i in 0..k {
        for j in 0..k {
            if i != j {
                let d2: f64 = points[i].iter().zip(points[j]).map(|(x, y)| (x - y) * (x - y)).sum();
                a[i][j] = d2.sqrt() <= t;
            }
        }
    }
    a
}

fn connected(a: &Adj) -> bool {
    let k = a.len();
    let mut seen = vec![false; k];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for w in 0..k {
            if a[v][w] && !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.iter().all(|&s| s)
}

fn edges(a: &Adj) -> usize {
    a.iter().flatten().filter(|&&b| b).count() / 2
}

fn isomorphic(a: &Adj, target: &Adj, perms: &[Vec<usize>]) -> bool {
    if edges(a) != edges(target) {
        return false;
    }
    let k = a.len();
    perms.iter().any(|p| (0..k).all(|i| (0..k).all(|j| a[p[i]][p[j]] == target[i][j])))
}

fn shape_adjacency(shape: &GraphShape) -> Adj {
    let k = shape.k();
    let mut a = vec![vec![false; k]; k];
    for (i, j) in shape.edges() {
        a[i][j] = true;
        a[j][i] = true;
    }
    a
}

/// Reference value of the indicator in `mode` for one point set.
pub fn reference_indicator(points: &[&[f64]], t: f64, shape: &GraphShape, mode: IndicatorMode, perms: &[Vec<usize>]) -> bool {
    let a = adjacency(points, t);
    let target = shape_adjacency(shape);
    let iso = isomorphic(&a, &target, perms);
    let heavier = connected(&a) && edges(&a) > shape.edge_count();
    match mode {
        IndicatorMode::Plain => iso,
        IndicatorMode::Plus => iso || heavier,
        IndicatorMode::Minus => heavier,
    }
}

/// Counts over every `k`-subset whose points all have norm at least `r`.
pub fn reference_counts(cloud: &PointCloud, shape: &GraphShape, grid: &[f64], r: f64, mode: IndicatorMode) -> Vec<u64> {
    let k = shape.k();
    let perms = permutations(k);
    let mut counts = vec![0u64; grid.len()];
    for sub in subsets(cloud.len(), k) {
        let pts: Vec<&[f64]> = sub.iter().map(|&i| cloud.point(i)).collect();
        if pts.iter().any(|p| p.iter().map(|x| x * x).sum::<f64>().sqrt() < r) {
            continue;
        }
        for (c, &t) in counts.iter_mut().zip(grid) {
            if reference_indicator(&pts, t, shape, mode, &perms) {
                *c += 1;
            }
        }
    }
    counts
}
