//! Subgraph counting curves `G(t)`, their monotone parts `G^+(t)`, `G^-(t)`,
//! and annulus-restricted variants, over an ascending grid of radii.
//!
//! Only `k`-subsets whose geometric graph at the largest grid radius is
//! connected can contribute anywhere on the grid, so candidates are the
//! connected induced subgraphs of the `t_max` neighbor graph. They are
//! enumerated once with the ESU scheme (each subset exactly once, rooted at
//! its smallest index) and classified at every grid radius by a table lookup.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::atlas::{
    distance, indicator, pair_bit, Atlas, GraphShape, IndicatorMode, ShapeMatcher, FLAG_MINUS,
    FLAG_PLAIN, FLAG_PLUS,
};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::norm;

/// Restriction on the norm of the farthest point of a subset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Annulus {
    /// `K R <= Max < L R`, `1 <= K < L <= inf`.
    Multiplicative { lower: f64, upper: f64 },
    /// `K <= (Max - R) / scale < L`, `0 <= K < L <= inf`, with `scale = a(R)`.
    Additive { lower: f64, upper: f64, scale: f64 },
}

impl Annulus {
    fn validate(&self) -> Result<()> {
        let (lo, hi, floor) = match *self {
            Annulus::Multiplicative { lower, upper } => (lower, upper, 1.0),
            Annulus::Additive { lower, upper, scale } => {
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(Error::InvalidRequest(format!("annulus scale {scale} must be positive")));
                }
                (lower, upper, 0.0)
            }
        };
        if !(lo >= floor && hi > lo) || lo.is_nan() || hi.is_nan() {
            return Err(Error::InvalidRequest(format!(
                "annulus bounds need {floor} <= K < L (K={lo}, L={hi})"
            )));
        }
        Ok(())
    }

    /// Absolute norm bounds `[lo, hi)` for exclusion radius `r`.
    pub fn bounds(&self, r: f64) -> (f64, f64) {
        match *self {
            Annulus::Multiplicative { lower, upper } => (lower * r, upper * r),
            Annulus::Additive { lower, upper, scale } => (r + lower * scale, r + upper * scale),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CountRequest {
    pub shape: GraphShape,
    pub t_grid: Vec<f64>,
    /// Exclusion radius: every point of a counted subset has norm `>= r`.
    pub r: f64,
    pub annulus: Option<Annulus>,
    pub mode: IndicatorMode,
}

impl CountRequest {
    pub fn new(shape: GraphShape, t_grid: Vec<f64>, r: f64) -> Self {
        Self { shape, t_grid, r, annulus: None, mode: IndicatorMode::Plain }
    }

    pub fn with_annulus(mut self, annulus: Annulus) -> Self {
        self.annulus = Some(annulus);
        self
    }

    pub fn with_mode(mut self, mode: IndicatorMode) -> Self {
        self.mode = mode;
        self
    }

    fn validate(&self) -> Result<()> {
        validate_grid(&self.t_grid)?;
        if !(self.r >= 0.0) || !self.r.is_finite() {
            return Err(Error::InvalidRequest(format!("exclusion radius {} must be finite and >= 0", self.r)));
        }
        if let Some(a) = &self.annulus {
            a.validate()?;
        }
        Ok(())
    }

    fn norm_window(&self) -> (f64, f64) {
        match &self.annulus {
            Some(a) => {
                let (lo, hi) = a.bounds(self.r);
                (lo.max(self.r), hi)
            }
            None => (self.r, f64::INFINITY),
        }
    }
}

fn validate_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::InvalidRequest("t-grid is empty".into()));
    }
    if t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidRequest("t-grid entries must be finite and >= 0".into()));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidRequest("t-grid must be strictly ascending".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingCurve {
    pub t_grid: Vec<f64>,
    pub counts: Vec<u64>,
    pub seed: u64,
    pub r: f64,
    pub mode: IndicatorMode,
}

/// The three curves `G`, `G^+`, `G^-` from one pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposedCurves {
    pub plain: CountingCurve,
    pub plus: CountingCurve,
    pub minus: CountingCurve,
}

impl DecomposedCurves {
    pub fn get(&self, mode: IndicatorMode) -> &CountingCurve {
        match mode {
            IndicatorMode::Plain => &self.plain,
            IndicatorMode::Plus => &self.plus,
            IndicatorMode::Minus => &self.minus,
        }
    }

    /// `G = G^+ - G^-` at every grid point.
    pub fn decomposition_holds(&self) -> bool {
        self.plain
            .counts
            .iter()
            .zip(&self.plus.counts)
            .zip(&self.minus.counts)
            .all(|((&g, &p), &m)| p >= m && g == p - m)
    }

    pub fn monotone_parts(&self) -> bool {
        let up = |c: &[u64]| c.windows(2).all(|w| w[0] <= w[1]);
        up(&self.plus.counts) && up(&self.minus.counts)
    }

    /// Rows `seed,t,count_h,count_plus,count_minus`.
    pub fn csv_rows(&self, out: &mut String) {
        for (i, t) in self.plain.t_grid.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                self.plain.seed, t, self.plain.counts[i], self.plus.counts[i], self.minus.counts[i]
            );
        }
    }
}

pub const CURVE_CSV_HEADER: &str = "seed,t,count_h,count_plus,count_minus";

/// Index and norm of the farthest point; ties go to the smallest index.
pub fn max_element<P: AsRef<[f64]>>(points: &[P]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let r = norm(p.as_ref());
        match best {
            Some((_, b)) if r <= b => {}
            _ => best = Some((i, r)),
        }
    }
    best
}

/// Neighbor graph at radius `t_max` among the selected points, built on a
/// hash grid of cell side `t_max`.
struct NeighborGraph {
    /// Cloud indices of the selected points, ascending.
    ids: Vec<usize>,
    /// Sorted local neighbor lists.
    adj: Vec<Vec<u32>>,
}

impl NeighborGraph {
    fn build(cloud: &PointCloud, keep: impl Fn(f64) -> bool, t_max: f64) -> Self {
        let d = cloud.d();
        let ids: Vec<usize> = (0..cloud.len()).filter(|&i| keep(cloud.norms()[i])).collect();
        let side = if t_max > 0.0 { t_max } else { 1.0 };
        let cell_of = |p: &[f64]| -> Vec<i64> { p.iter().map(|x| (x / side).floor() as i64).collect() };
        let mut grid: HashMap<Vec<i64>, Vec<u32>> = HashMap::new();
        for (local, &i) in ids.iter().enumerate() {
            grid.entry(cell_of(cloud.point(i))).or_default().push(local as u32);
        }
        let offsets: Vec<Vec<i64>> = {
            let mut all = vec![Vec::with_capacity(d)];
            for _ in 0..d {
                all = all
                    .into_iter()
                    .flat_map(|o| {
                        (-1..=1).map(move |s| {
                            let mut v = o.clone();
                            v.push(s);
                            v
                        })
                    })
                    .collect();
            }
            all
        };
        let mut adj = vec![Vec::new(); ids.len()];
        let mut probe = vec![0i64; d];
        for (local, &i) in ids.iter().enumerate() {
            let p = cloud.point(i);
            let home = cell_of(p);
            for off in &offsets {
                for ((q, h), o) in probe.iter_mut().zip(&home).zip(off) {
                    *q = h + o;
                }
                if let Some(bucket) = grid.get(&probe) {
                    for &other in bucket {
                        if other as usize != local && distance(p, cloud.point(ids[other as usize])) <= t_max {
                            adj[local].push(other);
                        }
                    }
                }
            }
            adj[local].sort_unstable();
        }
        Self { ids, adj }
    }

    fn adjacent(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&(b as u32)).is_ok()
    }

    /// Calls `visit` on every connected `k`-subset rooted at local vertex `root`
    /// (the smallest local index of the subset).
    fn connected_subsets_from<F: FnMut(&[usize])>(&self, root: usize, k: usize, visit: &mut F) {
        let mut sub = vec![root];
        let ext: Vec<usize> =
            self.adj[root].iter().map(|&u| u as usize).filter(|&u| u > root).collect();
        self.extend(&mut sub, ext, root, k, visit);
    }

    fn extend<F: FnMut(&[usize])>(
        &self,
        sub: &mut Vec<usize>,
        mut ext: Vec<usize>,
        root: usize,
        k: usize,
        visit: &mut F,
    ) {
        if sub.len() == k {
            visit(sub);
            return;
        }
        if sub.len() + 1 == k {
            for w in ext {
                sub.push(w);
                visit(sub);
                sub.pop();
            }
            return;
        }
        while let Some(w) = ext.pop() {
            let mut next = ext.clone();
            for &u in &self.adj[w] {
                let u = u as usize;
                if u <= root || sub.contains(&u) || next.contains(&u) {
                    continue;
                }
                // exclusive neighborhood: not adjacent to the current subset
                if sub.iter().any(|&s| self.adjacent(s, u)) {
                    continue;
                }
                next.push(u);
            }
            sub.push(w);
            self.extend(sub, next, root, k, visit);
            sub.pop();
        }
    }
}

/// Per-bin, per-radius accumulators for the three indicator modes.
#[derive(Clone)]
struct Tally {
    plain: Vec<u64>,
    plus: Vec<u64>,
    minus: Vec<u64>,
}

impl Tally {
    fn zeros(len: usize) -> Self {
        Self { plain: vec![0; len], plus: vec![0; len], minus: vec![0; len] }
    }

    #[cfg(feature = "parallel")]
    fn merge(mut self, other: Self) -> Self {
        for (a, b) in [
            (&mut self.plain, &other.plain),
            (&mut self.plus, &other.plus),
            (&mut self.minus, &other.minus),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self
    }
}

/// Shared pass: counts candidates of `matcher`'s shape whose farthest norm
/// lands in bin `bin_of(max_norm)`, for every grid radius.
fn tally<B: Fn(f64) -> Option<usize> + Sync>(
    cloud: &PointCloud,
    matcher: &ShapeMatcher,
    t_grid: &[f64],
    keep: impl Fn(f64) -> bool,
    bins: usize,
    bin_of: B,
) -> Tally {
    let k = matcher.shape().k();
    let nt = t_grid.len();
    let t_max = t_grid[nt - 1];
    let graph = NeighborGraph::build(cloud, keep, t_max);
    if graph.ids.len() < k {
        return Tally::zeros(bins * nt);
    }
    let pair_bits: Vec<(usize, usize, u32)> = (1..k)
        .flat_map(|b| (0..b).map(move |a| (a, b, 1u32 << pair_bit(a, b))))
        .collect();

    let per_root = |root: usize, acc: &mut Tally, dist: &mut Vec<f64>| {
        graph.connected_subsets_from(root, k, &mut |sub: &[usize]| {
            let max_norm = sub
                .iter()
                .map(|&l| cloud.norms()[graph.ids[l]])
                .fold(f64::NEG_INFINITY, f64::max);
            let Some(bin) = bin_of(max_norm) else { return };
            dist.clear();
            for &(a, b, _) in &pair_bits {
                dist.push(distance(cloud.point(graph.ids[sub[a]]), cloud.point(graph.ids[sub[b]])));
            }
            let base = bin * nt;
            for (ti, &t) in t_grid.iter().enumerate() {
                let mut mask = 0u32;
                for (&(_, _, bit), &r) in pair_bits.iter().zip(dist.iter()) {
                    if r <= t {
                        mask |= bit;
                    }
                }
                let f = matcher.flags(mask);
                acc.plain[base + ti] += u64::from(f & FLAG_PLAIN != 0);
                acc.plus[base + ti] += u64::from(f & FLAG_PLUS != 0);
                acc.minus[base + ti] += u64::from(f & FLAG_MINUS != 0);
            }
        });
    };

    let roots = graph.ids.len();
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if roots >= 512 {
            return (0..roots)
                .into_par_iter()
                .fold(
                    || (Tally::zeros(bins * nt), Vec::new()),
                    |(mut acc, mut dist), root| {
                        per_root(root, &mut acc, &mut dist);
                        (acc, dist)
                    },
                )
                .map(|(acc, _)| acc)
                .reduce(|| Tally::zeros(bins * nt), Tally::merge);
        }
    }
    let mut acc = Tally::zeros(bins * nt);
    let mut dist = Vec::new();
    for root in 0..roots {
        per_root(root, &mut acc, &mut dist);
    }
    acc
}

fn curves_from(req: &CountRequest, seed: u64, tally: Tally) -> DecomposedCurves {
    let make = |counts: Vec<u64>, mode| CountingCurve {
        t_grid: req.t_grid.clone(),
        counts,
        seed,
        r: req.r,
        mode,
    };
    DecomposedCurves {
        plain: make(tally.plain, IndicatorMode::Plain),
        plus: make(tally.plus, IndicatorMode::Plus),
        minus: make(tally.minus, IndicatorMode::Minus),
    }
}

/// `G`, `G^+` and `G^-` in one pass. The request's `mode` is ignored.
pub fn count_decomposed(cloud: &PointCloud, req: &CountRequest) -> Result<DecomposedCurves> {
    let matcher = ShapeMatcher::new(&req.shape);
    count_decomposed_with(cloud, req, &matcher)
}

/// As [`count_decomposed`] with a prebuilt matcher for `req.shape`.
pub fn count_decomposed_with(
    cloud: &PointCloud,
    req: &CountRequest,
    matcher: &ShapeMatcher,
) -> Result<DecomposedCurves> {
    req.validate()?;
    if matcher.shape() != &req.shape {
        return Err(Error::InvalidRequest("matcher built for a different shape".into()));
    }
    let (lo, hi) = req.norm_window();
    let r = req.r;
    let tally = tally(cloud, matcher, &req.t_grid, |x| x >= r && x < hi, 1, |m| {
        (m >= lo && m < hi).then_some(0)
    });
    Ok(curves_from(req, cloud.seed, tally))
}

/// The curve for `req.mode`.
pub fn count_subgraphs(cloud: &PointCloud, req: &CountRequest) -> Result<CountingCurve> {
    let all = count_decomposed(cloud, req)?;
    Ok(match req.mode {
        IndicatorMode::Plain => all.plain,
        IndicatorMode::Plus => all.plus,
        IndicatorMode::Minus => all.minus,
    })
}

/// Exhaustive oracle: every `k`-subset of the cloud, classified directly.
pub fn count_brute_force(cloud: &PointCloud, req: &CountRequest) -> Result<DecomposedCurves> {
    req.validate()?;
    let k = req.shape.k();
    let nt = req.t_grid.len();
    let mut tally = Tally::zeros(nt);
    let n = cloud.len();
    if n >= k {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            let pts: Vec<&[f64]> = idx.iter().map(|&i| cloud.point(i)).collect();
            let min_norm = pts.iter().map(|p| norm(p)).fold(f64::INFINITY, f64::min);
            let inside = min_norm >= req.r
                && match (&req.annulus, max_element(&pts)) {
                    (Some(a), Some((_, m))) => {
                        let (lo, hi) = a.bounds(req.r);
                        m >= lo && m < hi
                    }
                    _ => true,
                };
            if inside {
                for (ti, &t) in req.t_grid.iter().enumerate() {
                    tally.plain[ti] += u64::from(indicator(&pts, t, &req.shape, IndicatorMode::Plain));
                    tally.plus[ti] += u64::from(indicator(&pts, t, &req.shape, IndicatorMode::Plus));
                    tally.minus[ti] += u64::from(indicator(&pts, t, &req.shape, IndicatorMode::Minus));
                }
            }
            // next combination in lexicographic order
            let mut i = k;
            while i > 0 && idx[i - 1] == n - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    Ok(curves_from(req, cloud.seed, tally))
}

/// Number of subsets outside `r` whose geometric graph is isomorphic to
/// `shape` at both radii `t` and `s`.
pub fn count_joint(cloud: &PointCloud, shape: &GraphShape, t: f64, s: f64, r: f64) -> Result<u64> {
    validate_grid(&[t.min(s), t.max(s)]).or_else(|e| if t == s { Ok(()) } else { Err(e) })?;
    let matcher = ShapeMatcher::new(shape);
    let k = shape.k();
    let graph = NeighborGraph::build(cloud, |x| x >= r, t.max(s));
    let mut total = 0u64;
    let mut dist = Vec::new();
    for root in 0..graph.ids.len() {
        graph.connected_subsets_from(root, k, &mut |sub: &[usize]| {
            dist.clear();
            for b in 1..k {
                for a in 0..b {
                    dist.push((pair_bit(a, b), distance(cloud.point(graph.ids[sub[a]]), cloud.point(graph.ids[sub[b]]))));
                }
            }
            let mask_at = |x: f64| dist.iter().filter(|(_, d)| *d <= x).fold(0u32, |m, (bit, _)| m | (1 << bit));
            let both = matcher.flags(mask_at(t)) & matcher.flags(mask_at(s)) & FLAG_PLAIN;
            total += u64::from(both != 0);
        });
    }
    Ok(total)
}

/// Counts of each shape by the annulus of its farthest point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusTable {
    /// Annulus boundaries; row `i` covers `[ladder[i], ladder[i+1])`, the last
    /// row `[ladder[last], inf)`.
    pub ladder: Vec<f64>,
    pub t: f64,
    /// Shape order `k` per column.
    pub orders: Vec<usize>,
    /// `counts[row][column]`.
    pub counts: Vec<Vec<u64>>,
}

impl CensusTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lower,upper");
        for k in &self.orders {
            let _ = write!(out, ",k{k}");
        }
        out.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            let upper = self.ladder.get(i + 1).copied().unwrap_or(f64::INFINITY);
            let _ = write!(out, "{},{}", self.ladder[i], upper);
            for c in row {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }

    /// Column total across rows.
    pub fn total(&self, column: usize) -> u64 {
        self.counts.iter().map(|r| r[column]).sum()
    }
}

/// Layered census at radius `t`: for every shape, counts of subsets outside
/// `ladder[0]` binned by the annulus of their farthest point.
pub fn annuli_census(cloud: &PointCloud, shapes: &[GraphShape], ladder: &[f64], t: f64) -> Result<CensusTable> {
    if ladder.is_empty() || ladder.windows(2).any(|w| w[1] <= w[0]) || !(ladder[0] >= 0.0) {
        return Err(Error::InvalidRequest("census ladder must be nonempty, ascending and >= 0".into()));
    }
    validate_grid(&[t])?;
    let rows = ladder.len();
    let mut counts = vec![vec![0u64; shapes.len()]; rows];
    for (col, shape) in shapes.iter().enumerate() {
        let matcher = ShapeMatcher::new(shape);
        let r0 = ladder[0];
        let tally = tally(cloud, &matcher, &[t], |x| x >= r0, rows, |m| {
            if m < r0 {
                None
            } else {
                Some(ladder.partition_point(|&b| b <= m) - 1)
            }
        });
        for (row, c) in counts.iter_mut().enumerate() {
            c[col] = tally.plain[row];
        }
    }
    Ok(CensusTable { ladder: ladder.to_vec(), t, orders: shapes.iter().map(|s| s.k()).collect(), counts })
}

/// Representative shapes `Gamma_j` for the census: the complete graph on
/// `j` vertices for each `j` in `2..=max_order`.
pub fn complete_family(max_order: usize) -> Result<Vec<GraphShape>> {
    (2..=max_order)
        .map(|j| {
            Atlas::build(j)?;
            GraphShape::complete(j)
        })
        .collect()
}
