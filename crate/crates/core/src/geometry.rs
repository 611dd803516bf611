//! Domain construction and queries: Lipschitz graph domains `D_{L,R}`,
//! mask-defined domains, node classification, distance-to-boundary fields,
//! corkscrew points and Harnack chains.
//!
//! Boundary handling is first order: a non-interior node within stencil
//! reach of the interior becomes a boundary node and carries the Dirichlet
//! value of a snapped boundary point (vertical projection onto the graph
//! for graph-boundary nodes, the node position itself for cap nodes).

use crate::grid::{GridSpec, ScalarField};
use crate::{Error, Result};
use std::collections::BinaryHeap;

/// Stencil reach in lattice steps (Chebyshev radius). Covers the axis,
/// diagonal and knight-move directions used by the wide stencils.
pub const RING: i64 = 2;

/// Chamfer (8-neighbour) path distance overestimates Euclidean distance by
/// at most this factor (worst direction 22.5 degrees).
const CHAMFER_FACTOR: f64 = 1.082_392_200_292_394;

/// Boundary graph `g` of a Lipschitz domain. All variants are piecewise
/// linear, so sampled-segment distances are exact once breakpoints lie on
/// the lattice.
#[derive(Debug, Clone)]
pub enum GraphFn {
    /// g = 0 (half-space geometry).
    Flat,
    /// g(t) = slope * |t|.
    Sawtooth { slope: f64 },
    /// Triangle wave with slopes +-slope and g(0) = 0.
    Zigzag { slope: f64, period: f64 },
    /// Piecewise linear through `(t, g)` points sorted by `t`; constant
    /// extension outside the covered range.
    PiecewiseLinear { points: Vec<(f64, f64)> },
}

impl GraphFn {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            GraphFn::Flat => 0.0,
            GraphFn::Sawtooth { slope } => slope * t.abs(),
            GraphFn::Zigzag { slope, period } => {
                let k = (t / period).round();
                slope * (t - k * period).abs()
            }
            GraphFn::PiecewiseLinear { points } => {
                if points.is_empty() {
                    return 0.0;
                }
                if t <= points[0].0 {
                    return points[0].1;
                }
                if t >= points[points.len() - 1].0 {
                    return points[points.len() - 1].1;
                }
                let k = points.partition_point(|p| p.0 <= t);
                let (t0, g0) = points[k - 1];
                let (t1, g1) = points[k];
                if t1 <= t0 {
                    g0
                } else {
                    g0 + (g1 - g0) * (t - t0) / (t1 - t0)
                }
            }
        }
    }
}

/// Domain above a Lipschitz graph inside the ball `B_R`.
#[derive(Debug, Clone)]
pub struct LipschitzGraphDomain {
    pub graph: GraphFn,
    /// Lipschitz constant bound.
    pub l: f64,
    /// Ball radius.
    pub r: f64,
}

impl LipschitzGraphDomain {
    pub fn new(graph: GraphFn, l: f64, r: f64) -> Result<Self> {
        if l < 0.0 {
            return Err(Error::Precondition(format!("L must be nonnegative, got {l}")));
        }
        if !(r > 0.0) {
            return Err(Error::Precondition(format!("R must be positive, got {r}")));
        }
        let g0 = graph.eval(0.0);
        if g0.abs() > 1e-12 {
            return Err(Error::Precondition(format!("graph must satisfy g(0) = 0, got {g0}")));
        }
        Ok(LipschitzGraphDomain { graph, l, r })
    }
}

/// Occupancy-defined domain on a grid with a claimed NTA constant.
#[derive(Debug, Clone)]
pub struct MaskDomain {
    pub spec: GridSpec,
    pub occupied: Vec<bool>,
    /// Claimed NTA constant K.
    pub k_const: f64,
}

impl MaskDomain {
    /// Builds a mask domain, checking grid-graph connectivity.
    pub fn new(spec: GridSpec, occupied: Vec<bool>, k_const: f64) -> Result<Self> {
        if occupied.len() != spec.n_nodes() {
            return Err(Error::GridSpec("occupancy length does not match grid".into()));
        }
        let components = mask_components(&spec, &occupied);
        if components > 1 {
            return Err(Error::Disconnected { components });
        }
        if components == 0 {
            return Err(Error::Precondition("mask has no occupied nodes".into()));
        }
        Ok(MaskDomain { spec, occupied, k_const })
    }

    /// Parses the raster format: header line `rows cols h`, then `rows`
    /// lines of `cols` characters in `{0, 1}`, row-major from the top.
    /// `lo` places the lower-left node; when absent the raster is centred
    /// at the origin.
    pub fn from_raster(text: &str, lo: Option<[f64; 2]>, k_const: f64) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Config("empty raster file".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!("raster header must be 'rows cols h', got '{header}'")));
        }
        let rows: usize = parts[0]
            .parse()
            .map_err(|_| Error::Config(format!("bad rows in raster header: {}", parts[0])))?;
        let cols: usize = parts[1]
            .parse()
            .map_err(|_| Error::Config(format!("bad cols in raster header: {}", parts[1])))?;
        let h: f64 = parts[2]
            .parse()
            .map_err(|_| Error::Config(format!("bad h in raster header: {}", parts[2])))?;
        if rows < 3 || cols < 3 || !(h > 0.0) {
            return Err(Error::Config("raster must have rows, cols >= 3 and h > 0".into()));
        }
        let lo = lo.unwrap_or([-0.5 * (cols - 1) as f64 * h, -0.5 * (rows - 1) as f64 * h]);
        let i0 = (lo[0] / h).round() as i64;
        let j0 = (lo[1] / h).round() as i64;
        let spec = GridSpec { h, i0, j0, nx: cols, ny: rows };
        let mut occupied = vec![false; spec.n_nodes()];
        for (r, line) in lines.enumerate() {
            if r >= rows {
                if line.trim().is_empty() {
                    continue;
                }
                return Err(Error::Config(format!("raster has more than {rows} rows")));
            }
            let bytes = line.as_bytes();
            if bytes.len() != cols {
                return Err(Error::Config(format!(
                    "raster row {r} has {} characters, expected {cols}",
                    bytes.len()
                )));
            }
            for (c, &b) in bytes.iter().enumerate() {
                let j = rows - 1 - r; // file reads top-down
                occupied[spec.idx(c, j)] = match b {
                    b'1' => true,
                    b'0' => false,
                    _ => {
                        return Err(Error::Config(format!(
                            "raster row {r} col {c}: expected 0 or 1, got '{}'",
                            b as char
                        )))
                    }
                };
            }
        }
        MaskDomain::new(spec, occupied, k_const)
    }

    /// Emits the raster format parsed by [`MaskDomain::from_raster`].
    pub fn to_raster(&self) -> String {
        let mut out = format!("{} {} {}\n", self.spec.ny, self.spec.nx, self.spec.h);
        for r in 0..self.spec.ny {
            let j = self.spec.ny - 1 - r;
            for i in 0..self.spec.nx {
                out.push(if self.occupied[self.spec.idx(i, j)] { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }
}

/// Number of 4-connected components of the occupied set.
pub fn mask_components(spec: &GridSpec, occupied: &[bool]) -> usize {
    let mut seen = vec![false; occupied.len()];
    let mut components = 0;
    let mut stack = Vec::new();
    for start in 0..occupied.len() {
        if !occupied[start] || seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(k) = stack.pop() {
            let (i, j) = (k % spec.nx, k / spec.nx);
            let push = |ii: i64, jj: i64, stack: &mut Vec<usize>, seen: &mut Vec<bool>| {
                if ii >= 0 && jj >= 0 && (ii as usize) < spec.nx && (jj as usize) < spec.ny {
                    let kk = spec.idx(ii as usize, jj as usize);
                    if occupied[kk] && !seen[kk] {
                        seen[kk] = true;
                        stack.push(kk);
                    }
                }
            };
            push(i as i64 + 1, j as i64, &mut stack, &mut seen);
            push(i as i64 - 1, j as i64, &mut stack, &mut seen);
            push(i as i64, j as i64 + 1, &mut stack, &mut seen);
            push(i as i64, j as i64 - 1, &mut stack, &mut seen);
        }
    }
    components
}

/// Per-node classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum NodeClass {
    Interior,
    /// Dirichlet part of the boundary (the graph, or the whole mask edge).
    GraphBoundary,
    /// Spherical cap / localization sphere part of the boundary.
    CapBoundary,
    Exterior,
}

/// What the grid was built from; drives cap-distance and ball-safety rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DomainKind {
    Graph { r: f64 },
    Mask,
}

/// Discretized domain: classification, boundary data slots, distance field.
#[derive(Debug, Clone)]
pub struct DomainGrid {
    pub spec: GridSpec,
    pub class: Vec<NodeClass>,
    /// Dirichlet data slots; meaningful at boundary nodes.
    pub boundary_values: ScalarField,
    /// Distance to the Dirichlet (graph) part of the boundary.
    pub dist: ScalarField,
    /// Distance to the full boundary of the interior (graph and cap);
    /// governs how large a ball fits around a node.
    pub clearance: Vec<f64>,
    /// Snapped boundary positions for boundary nodes (node position elsewhere).
    pub snap: Vec<[f64; 2]>,
    pub kind: DomainKind,
    /// Whether `dist`/`clearance` are exact (graph domains) or chamfer
    /// approximations (mask domains).
    pub dist_exact: bool,
    /// Claimed NTA constant for corkscrew feasibility limits.
    pub claimed_k: f64,
}

impl DomainGrid {
    #[inline]
    pub fn class(&self, i: usize, j: usize) -> NodeClass {
        self.class[self.spec.idx(i, j)]
    }

    #[inline]
    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        self.class(i, j) == NodeClass::Interior
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        matches!(self.class(i, j), NodeClass::GraphBoundary | NodeClass::CapBoundary)
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.spec.nodes().filter(|&(i, j)| self.is_interior(i, j))
    }

    pub fn boundary_nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.spec.nodes().filter(|&(i, j)| self.is_boundary(i, j))
    }

    pub fn interior_count(&self) -> usize {
        self.class.iter().filter(|c| **c == NodeClass::Interior).count()
    }

    #[inline]
    pub fn dist_at(&self, i: usize, j: usize) -> f64 {
        self.dist.get(i, j)
    }

    #[inline]
    pub fn clearance_at(&self, i: usize, j: usize) -> f64 {
        self.clearance[self.spec.idx(i, j)]
    }

    /// Radius that is safe to claim for a ball inside the interior around
    /// this node; shrinks chamfer distances by their worst-case factor.
    pub fn safe_ball_radius(&self, i: usize, j: usize) -> f64 {
        let c = self.clearance_at(i, j);
        if self.dist_exact {
            c
        } else {
            c / CHAMFER_FACTOR
        }
    }

    /// Fills the Dirichlet slots from a function of boundary position,
    /// evaluated at the snapped boundary point for graph-boundary nodes and
    /// at the node position for cap nodes.
    pub fn set_boundary_values<F: Fn(f64, f64) -> f64>(&mut self, f: F) {
        for j in 0..self.spec.ny {
            for i in 0..self.spec.nx {
                if self.is_boundary(i, j) {
                    let p = self.snap[self.spec.idx(i, j)];
                    self.boundary_values.set(i, j, f(p[0], p[1]));
                }
            }
        }
    }

    /// Fills the Dirichlet slots from an existing field (values read at the
    /// node itself; used for homogeneous replacements and extensions).
    pub fn set_boundary_from_field(&mut self, u: &ScalarField) -> Result<()> {
        for j in 0..self.spec.ny {
            for i in 0..self.spec.nx {
                if self.is_boundary(i, j) {
                    let (li, lj) = self.spec.lattice(i, j);
                    let v = u.get_lattice(li, lj).ok_or_else(|| {
                        let p = self.spec.pos(i, j);
                        Error::MissingNeighbor { x: p[0], y: p[1] }
                    })?;
                    self.boundary_values.set(i, j, v);
                }
            }
        }
        Ok(())
    }

    /// Nearest graph-boundary node to a point, if any.
    pub fn nearest_graph_boundary(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let mut best: Option<((usize, usize), f64)> = None;
        for j in 0..self.spec.ny {
            for i in 0..self.spec.nx {
                if self.class(i, j) == NodeClass::GraphBoundary {
                    let q = self.spec.pos(i, j);
                    let d2 = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
                    if best.map_or(true, |(_, b)| d2 < b) {
                        best = Some(((i, j), d2));
                    }
                }
            }
        }
        best.map(|(n, _)| n)
    }

    /// Rough domain diameter (interior bounding box diagonal).
    pub fn diameter(&self) -> f64 {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for (i, j) in self.interior_nodes() {
            let p = self.spec.pos(i, j);
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt()
    }
}

fn classify_ring(spec: &GridSpec, interior: &[bool]) -> Vec<bool> {
    // Marks non-interior nodes within stencil reach of an interior node.
    let mut ring = vec![false; interior.len()];
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            if !interior[spec.idx(i, j)] {
                continue;
            }
            for dj in -RING..=RING {
                for di in -RING..=RING {
                    let (ii, jj) = (i as i64 + di, j as i64 + dj);
                    if ii >= 0 && jj >= 0 && (ii as usize) < spec.nx && (jj as usize) < spec.ny {
                        let kk = spec.idx(ii as usize, jj as usize);
                        if !interior[kk] {
                            ring[kk] = true;
                        }
                    }
                }
            }
        }
    }
    ring
}

/// Discretizes a Lipschitz graph domain on the given grid.
///
/// Interior nodes satisfy `x_n > g(x')` and `|x| < R`; non-interior nodes
/// within stencil reach are boundary (graph part when at or below the
/// graph, cap part otherwise). The Lipschitz bound is verified on the
/// lattice columns and the distance field is the exact distance to the
/// sampled graph polyline restricted to the closed ball.
pub fn build_graph_domain(dom: &LipschitzGraphDomain, spec: GridSpec) -> Result<DomainGrid> {
    let h = spec.h;
    let r = dom.r;
    if h > r / 16.0 + 1e-12 {
        return Err(Error::Precondition(format!("h = {h} must satisfy h <= R/16 = {}", r / 16.0)));
    }
    let margin = RING as f64 * h;
    let lo = spec.lo();
    let hi = spec.hi();
    if lo[0] > -r - margin + 1e-12
        || hi[0] < r + margin - 1e-12
        || hi[1] < r + margin - 1e-12
    {
        return Err(Error::GridSpec(format!(
            "box [{},{}]x[{},{}] does not contain B_R (R = {r}) with a {RING}-node ring",
            lo[0], hi[0], lo[1], hi[1]
        )));
    }

    // Sample the graph on lattice columns spanning the box, verify the
    // Lipschitz bound on adjacent samples (triangle inequality extends it
    // to all pairs), and check the graph stays inside the box.
    let n_cols = spec.nx;
    let mut gs = Vec::with_capacity(n_cols);
    for i in 0..n_cols {
        let t = (spec.i0 + i as i64) as f64 * h;
        gs.push(dom.graph.eval(t));
    }
    for i in 1..n_cols {
        let slope = (gs[i] - gs[i - 1]).abs() / h;
        if slope > dom.l + 1e-9 {
            let t1 = (spec.i0 + i as i64) as f64 * h;
            return Err(Error::LipschitzViolated { x0: t1 - h, x1: t1, slope, l: dom.l });
        }
    }
    let g_min = gs.iter().cloned().fold(f64::INFINITY, f64::min);
    let g_max = gs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if g_min < lo[1] + margin - 1e-12 || g_max > hi[1] - margin + 1e-12 {
        return Err(Error::GraphEscapesBox(format!(
            "graph range [{g_min}, {g_max}] with L = {} leaves the box height [{}, {}]",
            dom.l, lo[1], hi[1]
        )));
    }

    let mut interior = vec![false; spec.n_nodes()];
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            let p = spec.pos(i, j);
            if p[1] > gs[i] && p[0] * p[0] + p[1] * p[1] < r * r {
                interior[spec.idx(i, j)] = true;
            }
        }
    }
    let ring = classify_ring(&spec, &interior);
    let mut class = vec![NodeClass::Exterior; spec.n_nodes()];
    let mut snap = Vec::with_capacity(spec.n_nodes());
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            let k = spec.idx(i, j);
            let p = spec.pos(i, j);
            if interior[k] {
                class[k] = NodeClass::Interior;
            } else if ring[k] {
                class[k] = if p[1] <= gs[i] { NodeClass::GraphBoundary } else { NodeClass::CapBoundary };
            }
            snap.push(if class[k] == NodeClass::GraphBoundary { [p[0], gs[i]] } else { p });
        }
    }

    // Distance to the graph part of the boundary: exact distance to the
    // sampled polyline, restricted to samples inside the closed ball.
    let in_ball: Vec<bool> =
        (0..n_cols).map(|i| {
            let t = (spec.i0 + i as i64) as f64 * h;
            t * t + gs[i] * gs[i] <= r * r + h * h
        }).collect();
    let mut dist = ScalarField::zeros(spec);
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            let p = spec.pos(i, j);
            let mut best = if in_ball[i] { (p[1] - gs[i]).abs() } else { f64::INFINITY };
            // Expand outward from the node's column; a sample column farther
            // than the current best in |t - x| cannot improve it.
            for side in [-1i64, 1] {
                let mut step = if side < 0 { 1 } else { 0 };
                loop {
                    let ii = i as i64 + side * step;
                    step += 1;
                    if ii < 0 || ii as usize >= n_cols {
                        break;
                    }
                    let ii = ii as usize;
                    let t = (spec.i0 + ii as i64) as f64 * h;
                    // The segment starting at column ii extends one column
                    // toward the node, hence the +h slack in the prune.
                    if (t - p[0]).abs() > best + h {
                        break;
                    }
                    // Distance to the segment between sample ii and ii+1.
                    if ii + 1 < n_cols && (in_ball[ii] || in_ball[ii + 1]) {
                        let d = point_segment_distance(
                            p,
                            [t, gs[ii]],
                            [t + h, gs[ii + 1]],
                        );
                        if d < best {
                            best = d;
                        }
                    } else if in_ball[ii] {
                        let d = ((t - p[0]).powi(2) + (gs[ii] - p[1]).powi(2)).sqrt();
                        if d < best {
                            best = d;
                        }
                    }
                }
            }
            dist.set(i, j, best);
        }
    }

    let mut clearance = vec![0.0; spec.n_nodes()];
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            let p = spec.pos(i, j);
            let cap = r - (p[0] * p[0] + p[1] * p[1]).sqrt();
            clearance[spec.idx(i, j)] = dist.get(i, j).min(cap).max(0.0);
        }
    }

    Ok(DomainGrid {
        spec,
        class,
        boundary_values: ScalarField::zeros(spec),
        dist,
        clearance,
        snap,
        kind: DomainKind::Graph { r },
        dist_exact: true,
        claimed_k: (2.0 + 3.0 * dom.l).max(2.0),
    })
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 { ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

/// Discretizes a mask domain. Every boundary node is Dirichlet ("graph")
/// boundary; the distance field is a chamfer sweep over 8-neighbour moves.
pub fn build_mask_domain(mask: &MaskDomain) -> Result<DomainGrid> {
    let spec = mask.spec;
    // Occupied nodes must keep a full ring inside the box so interior
    // stencils never leave it.
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            if mask.occupied[spec.idx(i, j)] {
                let edge = (i as i64) < RING
                    || (j as i64) < RING
                    || i as i64 >= spec.nx as i64 - RING
                    || j as i64 >= spec.ny as i64 - RING;
                if edge {
                    return Err(Error::GridSpec(format!(
                        "mask occupies node ({i}, {j}) within {RING} nodes of the box edge"
                    )));
                }
            }
        }
    }
    let interior = mask.occupied.clone();
    let ring = classify_ring(&spec, &interior);
    let mut class = vec![NodeClass::Exterior; spec.n_nodes()];
    let mut snap = Vec::with_capacity(spec.n_nodes());
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            let k = spec.idx(i, j);
            if interior[k] {
                class[k] = NodeClass::Interior;
            } else if ring[k] {
                class[k] = NodeClass::GraphBoundary;
            }
            snap.push(spec.pos(i, j));
        }
    }

    let dist = chamfer_distance(&spec, &class);
    let clearance = dist.data.clone();
    Ok(DomainGrid {
        spec,
        class,
        boundary_values: ScalarField::zeros(spec),
        dist,
        clearance,
        snap,
        kind: DomainKind::Mask,
        dist_exact: false,
        claimed_k: mask.k_const,
    })
}

/// Chamfer distance from the Dirichlet boundary, BFS-style over a heap with
/// 8-neighbour moves of length h and h*sqrt(2).
fn chamfer_distance(spec: &GridSpec, class: &[NodeClass]) -> ScalarField {
    #[derive(PartialEq)]
    struct Item(f64, usize);
    impl Eq for Item {}
    impl PartialOrd for Item {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Item {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            // min-heap on distance
            other.0.partial_cmp(&self.0).unwrap_or(std::cmp::Ordering::Equal)
        }
    }
    let h = spec.h;
    let diag = h * std::f64::consts::SQRT_2;
    let mut dist = vec![f64::INFINITY; spec.n_nodes()];
    let mut heap = BinaryHeap::new();
    for k in 0..spec.n_nodes() {
        if class[k] == NodeClass::GraphBoundary {
            dist[k] = 0.0;
            heap.push(Item(0.0, k));
        }
    }
    while let Some(Item(d, k)) = heap.pop() {
        if d > dist[k] {
            continue;
        }
        let (i, j) = (k % spec.nx, k / spec.nx);
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let (ii, jj) = (i as i64 + di, j as i64 + dj);
                if ii < 0 || jj < 0 || ii as usize >= spec.nx || jj as usize >= spec.ny {
                    continue;
                }
                let kk = spec.idx(ii as usize, jj as usize);
                if class[kk] == NodeClass::Exterior {
                    continue;
                }
                let step = if di != 0 && dj != 0 { diag } else { h };
                if d + step < dist[kk] {
                    dist[kk] = d + step;
                    heap.push(Item(d + step, kk));
                }
            }
        }
    }
    for d in &mut dist {
        if !d.is_finite() {
            *d = 0.0;
        }
    }
    ScalarField { spec: *spec, data: dist }
}

/// Restriction of a domain grid to `B_r(center)`: interior becomes
/// `interior intersect B_r(center)`, graph-boundary tags are preserved, and
/// everything else adjacent to the new interior becomes cap boundary. The
/// distance field (to the original Dirichlet boundary) is inherited.
pub fn localize(dg: &DomainGrid, center: [f64; 2], r: f64) -> Result<DomainGrid> {
    let h = dg.spec.h;
    if r < 4.0 * h - 1e-12 {
        return Err(Error::Precondition(format!("localization radius {r} below 4h = {}", 4.0 * h)));
    }
    let margin = (RING as f64 + 1.0) * h;
    let lo = [
        (center[0] - r - margin).max(dg.spec.lo()[0]),
        (center[1] - r - margin).max(dg.spec.lo()[1]),
    ];
    let hi = [
        (center[0] + r + margin).min(dg.spec.hi()[0]),
        (center[1] + r + margin).min(dg.spec.hi()[1]),
    ];
    // Snap the crop window outward to the lattice.
    let i_lo = (lo[0] / h).floor() as i64;
    let j_lo = (lo[1] / h).floor() as i64;
    let i_hi = (hi[0] / h).ceil() as i64;
    let j_hi = (hi[1] / h).ceil() as i64;
    let i_lo = i_lo.max(dg.spec.i0);
    let j_lo = j_lo.max(dg.spec.j0);
    let i_hi = i_hi.min(dg.spec.i0 + dg.spec.nx as i64 - 1);
    let j_hi = j_hi.min(dg.spec.j0 + dg.spec.ny as i64 - 1);
    if i_hi < i_lo || j_hi < j_lo {
        return Err(Error::DegenerateLocalization);
    }
    let spec = GridSpec {
        h,
        i0: i_lo,
        j0: j_lo,
        nx: (i_hi - i_lo + 1) as usize,
        ny: (j_hi - j_lo + 1) as usize,
    };

    let mut interior = vec![false; spec.n_nodes()];
    let mut any = false;
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            let (li, lj) = spec.lattice(i, j);
            if let Some((pi, pj)) = dg.spec.local(li, lj) {
                let p = spec.pos(i, j);
                let d2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
                if dg.is_interior(pi, pj) && d2 < r * r {
                    interior[spec.idx(i, j)] = true;
                    any = true;
                }
            }
        }
    }
    if !any {
        return Err(Error::DegenerateLocalization);
    }
    let ring = classify_ring(&spec, &interior);
    let mut class = vec![NodeClass::Exterior; spec.n_nodes()];
    let mut snap = Vec::with_capacity(spec.n_nodes());
    let mut clearance = vec![0.0; spec.n_nodes()];
    let mut dist = ScalarField::zeros(spec);
    let mut bvals = ScalarField::zeros(spec);
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            let k = spec.idx(i, j);
            let (li, lj) = spec.lattice(i, j);
            let p = spec.pos(i, j);
            let parent = dg.spec.local(li, lj);
            if interior[k] {
                class[k] = NodeClass::Interior;
            } else if ring[k] {
                class[k] = match parent.map(|(pi, pj)| dg.class(pi, pj)) {
                    Some(NodeClass::GraphBoundary) => NodeClass::GraphBoundary,
                    _ => NodeClass::CapBoundary,
                };
            }
            if let Some((pi, pj)) = parent {
                dist.set(i, j, dg.dist_at(pi, pj));
                let dc = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
                clearance[k] = dg.clearance_at(pi, pj).min(r - dc.sqrt()).max(0.0);
                snap.push(if class[k] == NodeClass::GraphBoundary {
                    dg.snap[dg.spec.idx(pi, pj)]
                } else {
                    p
                });
                bvals.set(i, j, dg.boundary_values.get(pi, pj));
            } else {
                snap.push(p);
            }
        }
    }

    Ok(DomainGrid {
        spec,
        class,
        boundary_values: bvals,
        dist,
        clearance,
        snap,
        kind: dg.kind,
        dist_exact: dg.dist_exact,
        claimed_k: dg.claimed_k,
    })
}

/// Corkscrew search result.
#[derive(Debug, Clone, Copy)]
pub struct Corkscrew {
    pub point: [f64; 2],
    /// Radius of the interior ball found around `point`.
    pub rho: f64,
    /// Achieved constant r / rho.
    pub achieved_k: f64,
}

/// Finds an interior ball `B_{r/K'}(y)` inside `interior intersect B_r(x)`
/// for a boundary point `x`, maximizing the ball radius over a
/// coarse-to-fine scan of candidate grid centers. Errors (carrying the best
/// achieved constant) when the best K' exceeds twice the claimed K.
pub fn corkscrew(dg: &DomainGrid, x: [f64; 2], r: f64) -> Result<Corkscrew> {
    let h = dg.spec.h;
    if !(r > 0.0) || r >= dg.diameter() {
        return Err(Error::Precondition(format!("corkscrew radius {r} outside (0, diameter)")));
    }
    // x should sit on (or within a node of) the Dirichlet boundary.
    let (bi, bj) = dg.spec.nearest(x);
    let near_boundary = (-1i64..=1).any(|dj| {
        (-1i64..=1).any(|di| {
            let (ii, jj) = (bi as i64 + di, bj as i64 + dj);
            ii >= 0
                && jj >= 0
                && (ii as usize) < dg.spec.nx
                && (jj as usize) < dg.spec.ny
                && dg.class(ii as usize, jj as usize) == NodeClass::GraphBoundary
        })
    });
    if !near_boundary {
        return Err(Error::Precondition(format!("({}, {}) is not on the Dirichlet boundary", x[0], x[1])));
    }

    let score = |i: usize, j: usize| -> f64 {
        if !dg.is_interior(i, j) {
            return 0.0;
        }
        let p = dg.spec.pos(i, j);
        let dx = ((p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2)).sqrt();
        dg.safe_ball_radius(i, j).min(r - dx)
    };

    let reach = (r / h).ceil() as i64 + 1;
    let coarse = ((r / (8.0 * h)).floor() as i64).max(1);
    let mut best = (0.0f64, (bi, bj));
    let scan = |stride: i64, ci: i64, cj: i64, span: i64, best: &mut (f64, (usize, usize))| {
        let mut dj = -span;
        while dj <= span {
            let mut di = -span;
            while di <= span {
                let (ii, jj) = (ci + di, cj + dj);
                if ii >= 0 && jj >= 0 && (ii as usize) < dg.spec.nx && (jj as usize) < dg.spec.ny {
                    let s = score(ii as usize, jj as usize);
                    if s > best.0 {
                        *best = (s, (ii as usize, jj as usize));
                    }
                }
                di += stride;
            }
            dj += stride;
        }
    };
    scan(coarse, bi as i64, bj as i64, reach, &mut best);
    if coarse > 1 {
        // The coarse pass can land a cell away from the optimum when scores
        // tie along the boundary direction; refine over two coarse cells.
        let (ci, cj) = best.1;
        scan(1, ci as i64, cj as i64, 2 * coarse + 2, &mut best);
    }

    let (rho, (yi, yj)) = best;
    if rho < 2.0 * h {
        let best_k = if rho > 0.0 { r / rho } else { f64::INFINITY };
        return Err(Error::NoCorkscrew { best: best_k });
    }
    let achieved = r / rho;
    if achieved > 2.0 * dg.claimed_k {
        return Err(Error::NoCorkscrew { best: achieved });
    }
    Ok(Corkscrew { point: dg.spec.pos(yi, yj), rho, achieved_k: achieved })
}

/// A ball used in Harnack chains.
#[derive(Debug, Clone, Copy)]
pub struct Ball {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Ball {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        (p[0] - self.center[0]).powi(2) + (p[1] - self.center[1]).powi(2) <= self.radius * self.radius
    }
}

/// Connects two interior points by overlapping interior balls. Consecutive
/// centers are within half the current radius; the first ball contains `x`
/// and the last contains `y`. The underlying path maximizes clearance
/// (shortest path in the 1/clearance metric over 8-neighbour moves).
pub fn harnack_chain(dg: &DomainGrid, x: [f64; 2], y: [f64; 2]) -> Result<Vec<Ball>> {
    let h = dg.spec.h;
    let (xi, xj) = dg.spec.nearest(x);
    let (yi, yj) = dg.spec.nearest(y);
    if !dg.is_interior(xi, xj) || !dg.is_interior(yi, yj) {
        return Err(Error::Precondition("harnack_chain endpoints must be interior".into()));
    }
    let dxy = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
    if dxy <= 0.5 * h {
        let rho = dg.safe_ball_radius(xi, xj).max(0.6 * h);
        return Ok(vec![Ball { center: x, radius: rho }]);
    }

    // Dijkstra in the weighted grid metric.
    #[derive(PartialEq)]
    struct Item(f64, usize);
    impl Eq for Item {}
    impl PartialOrd for Item {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Item {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            other.0.partial_cmp(&self.0).unwrap_or(std::cmp::Ordering::Equal)
        }
    }
    let spec = dg.spec;
    let n = spec.n_nodes();
    let start = spec.idx(xi, xj);
    let goal = spec.idx(yi, yj);
    let mut cost = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    cost[start] = 0.0;
    heap.push(Item(0.0, start));
    while let Some(Item(c, k)) = heap.pop() {
        if c > cost[k] {
            continue;
        }
        if k == goal {
            break;
        }
        let (i, j) = (k % spec.nx, k / spec.nx);
        let ck = dg.safe_ball_radius(i, j).max(0.25 * h);
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let (ii, jj) = (i as i64 + di, j as i64 + dj);
                if ii < 0 || jj < 0 || ii as usize >= spec.nx || jj as usize >= spec.ny {
                    continue;
                }
                if !dg.is_interior(ii as usize, jj as usize) {
                    continue;
                }
                let kk = spec.idx(ii as usize, jj as usize);
                let step = if di != 0 && dj != 0 { h * std::f64::consts::SQRT_2 } else { h };
                let cn = dg.safe_ball_radius(ii as usize, jj as usize).max(0.25 * h);
                let w = step / ck.min(cn);
                if c + w < cost[kk] {
                    cost[kk] = c + w;
                    prev[kk] = k;
                    heap.push(Item(c + w, kk));
                }
            }
        }
    }
    if !cost[goal].is_finite() {
        return Err(Error::DifferentComponents);
    }

    // Reconstruct node path, then cover it with balls.
    let mut path_nodes = vec![goal];
    let mut k = goal;
    while k != start {
        k = prev[k];
        path_nodes.push(k);
    }
    path_nodes.reverse();
    let mut path: Vec<[f64; 2]> = Vec::with_capacity(path_nodes.len() + 2);
    path.push(x);
    for &k in &path_nodes {
        path.push(spec.pos(k % spec.nx, k / spec.nx));
    }
    path.push(y);

    // Lower bound for the clearance at a point between two path vertices.
    let clear_at = |p: [f64; 2]| -> f64 {
        let (i, j) = spec.nearest(p);
        let q = spec.pos(i, j);
        let off = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
        (dg.safe_ball_radius(i, j) - off).max(0.6 * h)
    };

    let seg_len = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let mut balls = Vec::new();
    let mut seg = 0usize;
    let mut t = 0.0f64; // arclength offset within current segment
    let mut center = path[0];
    loop {
        let rho = 0.9 * clear_at(center);
        balls.push(Ball { center, radius: rho });
        if balls.len() > 100_000 {
            return Err(Error::Precondition("harnack chain did not terminate".into()));
        }
        // Advance rho/2 along the path.
        let mut advance = 0.5 * rho;
        let mut done = true;
        while seg + 1 < path.len() {
            let l = seg_len(path[seg], path[seg + 1]);
            if t + advance < l {
                t += advance;
                done = false;
                break;
            }
            advance -= l - t;
            t = 0.0;
            seg += 1;
        }
        if done {
            break;
        }
        let a = path[seg];
        let b = path[seg + 1];
        let l = seg_len(a, b).max(1e-300);
        center = [a[0] + (b[0] - a[0]) * t / l, a[1] + (b[1] - a[1]) * t / l];
    }
    if !balls.last().map(|b| b.contains(y)).unwrap_or(false) {
        let rho = 0.9 * clear_at(y);
        balls.push(Ball { center: y, radius: rho });
    }
    Ok(balls)
}

/// One probe row of an NTA check.
#[derive(Debug, Clone)]
pub struct NtaRow {
    pub kind: &'static str,
    pub at: [f64; 2],
    pub radius_or_dist: f64,
    pub constant: f64,
    pub ok: bool,
}

/// Sampled empirical check of the corkscrew and chain conditions.
#[derive(Debug, Clone)]
pub struct NtaReport {
    pub rows: Vec<NtaRow>,
    pub worst_corkscrew_k: f64,
    pub worst_chain_constant: f64,
    pub failures: usize,
}

/// Probes the corkscrew condition on sampled boundary points at the given
/// radii and the chain condition on sampled interior pairs. Failures are
/// recorded in the report, never raised.
pub fn check_nta(dg: &DomainGrid, k: f64, radii: &[f64]) -> NtaReport {
    let mut rows = Vec::new();
    let mut worst_k: f64 = 0.0;
    let mut worst_chain: f64 = 0.0;
    let mut failures = 0;

    // For graph domains only the graph part inside B_{R/2} is probed; the
    // artificial cap corners are not part of the Dirichlet geometry under
    // test. Mask boundaries are probed everywhere.
    let boundary: Vec<(usize, usize)> = dg
        .spec
        .nodes()
        .filter(|&(i, j)| dg.class(i, j) == NodeClass::GraphBoundary)
        .filter(|&(i, j)| match dg.kind {
            DomainKind::Graph { r } => {
                let p = dg.snap[dg.spec.idx(i, j)];
                p[0] * p[0] + p[1] * p[1] <= 0.25 * r * r
            }
            DomainKind::Mask => true,
        })
        .collect();
    let stride = (boundary.len() / 24).max(1);
    for &(i, j) in boundary.iter().step_by(stride) {
        let x = dg.snap[dg.spec.idx(i, j)];
        for &r in radii {
            match corkscrew(dg, x, r) {
                Ok(c) => {
                    worst_k = worst_k.max(c.achieved_k);
                    let ok = c.achieved_k <= 2.0 * k;
                    if !ok {
                        failures += 1;
                    }
                    rows.push(NtaRow { kind: "corkscrew", at: x, radius_or_dist: r, constant: c.achieved_k, ok });
                }
                Err(Error::NoCorkscrew { best }) => {
                    failures += 1;
                    rows.push(NtaRow { kind: "corkscrew", at: x, radius_or_dist: r, constant: best, ok: false });
                }
                Err(_) => {
                    failures += 1;
                    rows.push(NtaRow { kind: "corkscrew", at: x, radius_or_dist: r, constant: f64::INFINITY, ok: false });
                }
            }
        }
    }

    let interior: Vec<(usize, usize)> = dg
        .interior_nodes()
        .filter(|&(i, j)| dg.clearance_at(i, j) >= 4.0 * dg.spec.h)
        .collect();
    if interior.len() >= 2 {
        let stride = (interior.len() / 12).max(1);
        let picks: Vec<(usize, usize)> = interior.iter().step_by(stride).cloned().collect();
        for w in picks.windows(2) {
            let a = dg.spec.pos(w[0].0, w[0].1);
            let b = dg.spec.pos(w[1].0, w[1].1);
            match harnack_chain(dg, a, b) {
                Ok(balls) => {
                    let dxy = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                    let dmin = dg
                        .clearance_at(w[0].0, w[0].1)
                        .min(dg.clearance_at(w[1].0, w[1].1))
                        .max(dg.spec.h);
                    let bound = 1.0 + (dxy / dmin).max(1.0).ln();
                    let c = balls.len() as f64 / bound;
                    worst_chain = worst_chain.max(c);
                    rows.push(NtaRow { kind: "chain", at: a, radius_or_dist: dxy, constant: c, ok: true });
                }
                Err(_) => {
                    failures += 1;
                    rows.push(NtaRow { kind: "chain", at: a, radius_or_dist: 0.0, constant: f64::INFINITY, ok: false });
                }
            }
        }
    }

    NtaReport { rows, worst_corkscrew_k: worst_k, worst_chain_constant: worst_chain, failures }
}
