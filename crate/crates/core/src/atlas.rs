//! Connected graphs on a handful of vertices, up to isomorphism.
//!
//! Graphs on `k <= 7` vertices are stored as adjacency bitmasks over the
//! `k(k-1)/2` unordered vertex pairs. Pair `(i, j)` with `i < j` occupies bit
//! `j(j-1)/2 + i`, so a graph on `m` vertices embeds unchanged into any larger
//! vertex set. Canonical keys are minimum bitmasks over vertex relabelings.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const MIN_ORDER: usize = 2;
pub const MAX_ORDER: usize = 7;

/// Bit position of the unordered pair `{i, j}`.
#[inline]
pub fn pair_bit(i: usize, j: usize) -> u32 {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    (b * (b - 1) / 2 + a) as u32
}

#[inline]
pub fn pair_count(k: usize) -> usize {
    k * (k - 1) / 2
}

/// All pairs `(i, j)`, `i < j < k`, in bit order.
pub fn pairs(k: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(pair_count(k));
    for j in 1..k {
        for i in 0..j {
            out.push((i, j));
        }
    }
    out
}

/// An undirected simple graph on `k` labeled vertices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EdgeSet {
    pub k: usize,
    pub mask: u32,
}

impl EdgeSet {
    pub fn new(k: usize, mask: u32) -> Self {
        Self { k, mask }
    }

    pub fn edge_count(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.mask & (1 << pair_bit(i, j)) != 0
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        pairs(self.k)
            .into_iter()
            .filter(|&(i, j)| self.has_edge(i, j))
            .collect()
    }

    fn neighbor_bits(&self) -> [u8; MAX_ORDER] {
        let mut adj = [0u8; MAX_ORDER];
        for (i, j) in self.edges() {
            adj[i] |= 1 << j;
            adj[j] |= 1 << i;
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let adj = self.neighbor_bits();
        (0..self.k).map(|v| adj[v].count_ones() as usize).collect()
    }

    pub fn is_connected(&self) -> bool {
        if self.k <= 1 {
            return true;
        }
        let adj = self.neighbor_bits();
        let full: u8 = ((1u16 << self.k) - 1) as u8;
        let mut seen: u8 = 1;
        let mut frontier: u8 = 1;
        while frontier != 0 {
            let mut next = 0u8;
            for (v, &nb) in adj.iter().enumerate().take(self.k) {
                if frontier & (1 << v) != 0 {
                    next |= nb;
                }
            }
            frontier = next & !seen;
            seen |= next;
        }
        seen == full
    }

    /// Graph obtained by sending vertex `v` to `perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> EdgeSet {
        let mut mask = 0;
        for (i, j) in self.edges() {
            mask |= 1 << pair_bit(perm[i], perm[j]);
        }
        EdgeSet::new(self.k, mask)
    }

    /// Canonical key: the minimum bitmask over all relabelings that list
    /// vertices in non-increasing degree order. The admissible relabelings of
    /// isomorphic graphs produce the same set of masks, so the minimum is an
    /// isomorphism invariant, and since a mask determines its graph, equal keys
    /// imply isomorphism.
    pub fn canonical_key(&self) -> u32 {
        let k = self.k;
        if k <= 1 {
            return self.mask;
        }
        let degrees = self.degrees();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| degrees[b].cmp(&degrees[a]).then(a.cmp(&b)));
        // blocks of equal degree in the sorted order
        let mut blocks: Vec<(usize, usize)> = Vec::new();
        let mut start = 0;
        for pos in 1..=k {
            if pos == k || degrees[order[pos]] != degrees[order[start]] {
                blocks.push((start, pos));
                start = pos;
            }
        }
        let adj = self.neighbor_bits();
        let pair_list = pairs(k);
        let mut best = u32::MAX;
        let mut arrangement = order.clone();
        permute_blocks(&mut arrangement, &blocks, 0, &mut |arr: &[usize]| {
            // arr[p] = original vertex placed at position p
            let mut mask = 0u32;
            for (bit, &(p, q)) in pair_list.iter().enumerate() {
                if adj[arr[p]] & (1 << arr[q]) != 0 {
                    mask |= 1 << bit;
                    if mask >= best {
                        break;
                    }
                }
            }
            // partial masks only grow, so an early break never yields a new best
            if mask < best {
                best = mask;
            }
        });
        best
    }
}

fn permute_blocks(
    arr: &mut Vec<usize>,
    blocks: &[(usize, usize)],
    which: usize,
    visit: &mut dyn FnMut(&[usize]),
) {
    if which == blocks.len() {
        visit(arr);
        return;
    }
    let (lo, hi) = blocks[which];
    permute_range(arr, lo, hi, blocks, which, visit);
}

fn permute_range(
    arr: &mut Vec<usize>,
    lo: usize,
    hi: usize,
    blocks: &[(usize, usize)],
    which: usize,
    visit: &mut dyn FnMut(&[usize]),
) {
    if hi - lo <= 1 {
        permute_blocks(arr, blocks, which + 1, visit);
        return;
    }
    for i in lo..hi {
        arr.swap(lo, i);
        permute_range(arr, lo + 1, hi, blocks, which, visit);
        arr.swap(lo, i);
    }
}

/// A connected graph on `k` vertices, stored in canonical labeling.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GraphShape {
    graph: EdgeSet,
    canonical: u32,
}

impl GraphShape {
    /// Shape from an explicit edge list. The graph must be connected.
    pub fn from_edges(k: usize, edges: &[(usize, usize)]) -> Result<Self> {
        check_order(k)?;
        let mut mask = 0u32;
        for &(i, j) in edges {
            if i >= k || j >= k || i == j {
                return Err(Error::InvalidParameter(format!(
                    "edge ({i},{j}) is not a pair of distinct vertices below {k}"
                )));
            }
            mask |= 1 << pair_bit(i, j);
        }
        Self::from_edge_set(EdgeSet::new(k, mask))
    }

    pub fn from_edge_set(graph: EdgeSet) -> Result<Self> {
        check_order(graph.k)?;
        if !graph.is_connected() {
            return Err(Error::InvalidParameter(format!(
                "graph with edges {:?} is not connected",
                graph.edges()
            )));
        }
        let canonical = graph.canonical_key();
        Ok(Self {
            graph: EdgeSet::new(graph.k, canonical),
            canonical,
        })
    }

    pub fn complete(k: usize) -> Result<Self> {
        Self::from_edge_set(EdgeSet::new(k, ((1u64 << pair_count(k)) - 1) as u32))
    }

    pub fn path(k: usize) -> Result<Self> {
        let edges: Vec<_> = (1..k).map(|i| (i - 1, i)).collect();
        Self::from_edges(k, &edges)
    }

    pub fn cycle(k: usize) -> Result<Self> {
        if k < 3 {
            return Err(Error::InvalidParameter("a cycle needs k >= 3".into()));
        }
        let mut edges: Vec<_> = (1..k).map(|i| (i - 1, i)).collect();
        edges.push((k - 1, 0));
        Self::from_edges(k, &edges)
    }

    pub fn star(k: usize) -> Result<Self> {
        let edges: Vec<_> = (1..k).map(|i| (0, i)).collect();
        Self::from_edges(k, &edges)
    }

    pub fn k(&self) -> usize {
        self.graph.k
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.graph.edges()
    }

    pub fn edge_count(&self) -> usize {
        self.graph.edge_count()
    }

    pub fn canonical_form(&self) -> u32 {
        self.canonical
    }

    pub fn edge_set(&self) -> EdgeSet {
        self.graph
    }

    pub fn is_complete(&self) -> bool {
        self.edge_count() == pair_count(self.k())
    }

    /// Whether a labeled graph is isomorphic to this shape.
    pub fn matches(&self, graph: &EdgeSet) -> bool {
        graph.k == self.k()
            && graph.edge_count() == self.edge_count()
            && graph.canonical_key() == self.canonical
    }

    /// One-line structured description: `k`, edge list, canonical key.
    pub fn describe(&self) -> String {
        let edges = self
            .edges()
            .iter()
            .map(|(i, j)| format!("{i}-{j}"))
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "k={} j={} edges={} key={:#x}",
            self.k(),
            self.edge_count(),
            edges,
            self.canonical
        )
    }
}

fn check_order(k: usize) -> Result<()> {
    if (MIN_ORDER..=MAX_ORDER).contains(&k) {
        Ok(())
    } else {
        Err(Error::UnsupportedOrder(k))
    }
}

/// All connected isomorphism classes on `k` vertices.
#[derive(Debug, Clone)]
pub struct Atlas {
    k: usize,
    classes: Vec<GraphShape>,
    by_edge_count: BTreeMap<usize, Vec<usize>>,
}

impl Atlas {
    pub fn build(k: usize) -> Result<Self> {
        check_order(k)?;
        // all graphs (connected or not) grown one vertex at a time
        let mut level: HashSet<u32> = HashSet::from([0u32]);
        for m in 2..=k {
            let mut next = HashSet::new();
            for &mask in &level {
                for nbrs in 0u32..(1 << (m - 1)) {
                    let mut grown = mask;
                    for v in 0..m - 1 {
                        if nbrs & (1 << v) != 0 {
                            grown |= 1 << pair_bit(v, m - 1);
                        }
                    }
                    next.insert(EdgeSet::new(m, grown).canonical_key());
                }
            }
            level = next;
        }
        let mut keys: Vec<u32> = level
            .into_iter()
            .filter(|&mask| EdgeSet::new(k, mask).is_connected())
            .collect();
        keys.sort_by_key(|&m| (m.count_ones(), m));
        let classes: Vec<GraphShape> = keys
            .into_iter()
            .map(|mask| GraphShape {
                graph: EdgeSet::new(k, mask),
                canonical: mask,
            })
            .collect();
        let mut by_edge_count: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (idx, shape) in classes.iter().enumerate() {
            by_edge_count
                .entry(shape.edge_count())
                .or_default()
                .push(idx);
        }
        Ok(Self {
            k,
            classes,
            by_edge_count,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn classes(&self) -> &[GraphShape] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Shapes with exactly `edges` edges (the set `A_edges`).
    pub fn with_edge_count(&self, edges: usize) -> Vec<&GraphShape> {
        self.by_edge_count
            .get(&edges)
            .map(|ids| ids.iter().map(|&i| &self.classes[i]).collect())
            .unwrap_or_default()
    }

    pub fn by_edge_count(&self) -> &BTreeMap<usize, Vec<usize>> {
        &self.by_edge_count
    }

    /// Index of the class a labeled connected graph belongs to.
    pub fn classify(&self, graph: &EdgeSet) -> Option<usize> {
        if graph.k != self.k || !graph.is_connected() {
            return None;
        }
        let key = graph.canonical_key();
        self.classes.iter().position(|s| s.canonical == key)
    }

    /// Structured text export, one class per line.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for shape in &self.classes {
            let _ = writeln!(out, "{}", shape.describe());
        }
        out
    }
}

/// Which member of the indicator family `h_t = h_t^+ - h_t^-` to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndicatorMode {
    Plain,
    Plus,
    Minus,
}

impl IndicatorMode {
    pub const ALL: [IndicatorMode; 3] = [Self::Plain, Self::Plus, Self::Minus];
}

/// Geometric graph at radius `t`: edge `{i, j}` iff `|x_i - x_j| <= t`.
pub fn geometric_graph<P: AsRef<[f64]>>(points: &[P], t: f64) -> EdgeSet {
    let k = points.len();
    assert!(k <= MAX_ORDER, "at most {MAX_ORDER} points supported");
    let mut mask = 0u32;
    for j in 1..k {
        for i in 0..j {
            if distance(points[i].as_ref(), points[j].as_ref()) <= t {
                mask |= 1 << pair_bit(i, j);
            }
        }
    }
    EdgeSet::new(k, mask)
}

#[inline]
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Flags of a labeled graph relative to a target shape: plain/plus/minus.
#[inline]
fn indicator_flags(graph: &EdgeSet, shape: &GraphShape) -> (bool, bool, bool) {
    let plain = shape.matches(graph);
    let minus = graph.edge_count() > shape.edge_count() && graph.is_connected();
    (plain, plain || minus, minus)
}

/// `h_t(x_1, .., x_k)`: 1 iff the geometric graph at radius `t` is isomorphic to `shape`.
pub fn h_t<P: AsRef<[f64]>>(points: &[P], t: f64, shape: &GraphShape) -> bool {
    assert_eq!(points.len(), shape.k(), "configuration size must equal shape order");
    indicator_flags(&geometric_graph(points, t), shape).0
}

/// `h_t^+`: isomorphic to `shape`, or connected with more edges than `shape`.
pub fn h_plus<P: AsRef<[f64]>>(points: &[P], t: f64, shape: &GraphShape) -> bool {
    assert_eq!(points.len(), shape.k(), "configuration size must equal shape order");
    indicator_flags(&geometric_graph(points, t), shape).1
}

/// `h_t^-`: connected with more edges than `shape`.
pub fn h_minus<P: AsRef<[f64]>>(points: &[P], t: f64, shape: &GraphShape) -> bool {
    assert_eq!(points.len(), shape.k(), "configuration size must equal shape order");
    indicator_flags(&geometric_graph(points, t), shape).2
}

pub fn indicator<P: AsRef<[f64]>>(
    points: &[P],
    t: f64,
    shape: &GraphShape,
    mode: IndicatorMode,
) -> bool {
    match mode {
        IndicatorMode::Plain => h_t(points, t, shape),
        IndicatorMode::Plus => h_plus(points, t, shape),
        IndicatorMode::Minus => h_minus(points, t, shape),
    }
}

pub const FLAG_PLAIN: u8 = 1;
pub const FLAG_PLUS: u8 = 2;
pub const FLAG_MINUS: u8 = 4;

/// Lookup table from adjacency bitmask to indicator flags for one shape.
///
/// Built once per shape; immutable afterwards and shared freely across threads.
#[derive(Debug, Clone)]
pub struct ShapeMatcher {
    shape: GraphShape,
    flags: Vec<u8>,
}

impl ShapeMatcher {
    pub fn new(shape: &GraphShape) -> Self {
        let k = shape.k();
        let n_masks = 1usize << pair_count(k);
        let mut target_degrees = shape.edge_set().degrees();
        target_degrees.sort_unstable();
        let j = shape.edge_count();
        let mut flags = vec![0u8; n_masks];
        for (mask, slot) in flags.iter_mut().enumerate() {
            let g = EdgeSet::new(k, mask as u32);
            let edges = g.edge_count();
            if edges < k - 1 {
                continue;
            }
            if edges > j {
                if g.is_connected() {
                    *slot = FLAG_PLUS | FLAG_MINUS;
                }
            } else if edges == j {
                let mut deg = g.degrees();
                deg.sort_unstable();
                if deg == target_degrees && g.canonical_key() == shape.canonical_form() {
                    *slot = FLAG_PLAIN | FLAG_PLUS;
                }
            }
        }
        Self {
            shape: shape.clone(),
            flags,
        }
    }

    pub fn shape(&self) -> &GraphShape {
        &self.shape
    }

    #[inline]
    pub fn flags(&self, mask: u32) -> u8 {
        self.flags[mask as usize]
    }
}
