//! Reference answers from dense linearizations, used to check kernel
//! results.

use crate::error::{Error, Result};
use crate::kernels::{Aabb, Decision, KernelKind, KernelResult, EPS_PARAM};
use crate::patch::{grid_points, shape_function, time_extend, DomainKind, PatchSpec, ShapeFunction};
use crate::poly::Polynomial;
use serde::Serialize;

/// Default linearization density (segments per domain edge).
pub const DEFAULT_DENSITY: usize = 10;
/// Densities tried in turn until the comparison matches.
pub const ESCALATION: [usize; 5] = [10, 20, 40, 80, 160];
/// Time steps of the collision oracle.
pub const CCD_STEPS: usize = 1000;
/// Agreement threshold in parametric and embedded space.
pub const COMPARE_TOL: f64 = 1e-2;
/// Objective band within which oracle witnesses count as tied.
const TIE_BAND: f64 = 1e-6;

/// Piecewise-linear approximation of a patch.  `cells` are triangles for
/// surfaces and segments for curves.
#[derive(Clone, Debug)]
pub struct LinearizedPatch {
    pub vertices: Vec<Vec<f64>>,
    pub params: Vec<Vec<f64>>,
    pub cells: Vec<Vec<usize>>,
    pub density: usize,
    /// Vertex displacement over the whole time interval, for moving patches.
    pub sweep: Option<Vec<Vec<f64>>>,
}

impl LinearizedPatch {
    pub fn num_triangles(&self) -> usize {
        self.cells.iter().filter(|c| c.len() == 3).count()
    }

    /// Vertex positions at normalized time `s` in `[0, 1]`.
    fn positions_at(&self, s: f64) -> Vec<Vec<f64>> {
        match &self.sweep {
            None => self.vertices.clone(),
            Some(v) => self.vertices.iter().zip(v).map(|(x, d)| x.iter().zip(d).map(|(a, b)| a + s * b).collect()).collect(),
        }
    }

    fn param_at(&self, cell: usize, w: &[f64]) -> Vec<f64> {
        let c = &self.cells[cell];
        let k = self.params[c[0]].len();
        (0..k).map(|j| c.iter().zip(w).map(|(&v, wi)| wi * self.params[v][j]).sum()).collect()
    }
}

/// Parameter grid and cells of a domain; vertices are left empty.
fn domain_grid(kind: DomainKind, n: usize) -> Result<(Vec<Vec<f64>>, Vec<Vec<usize>>)> {
    let mut cells = Vec::new();
    match kind {
        DomainKind::Interval => {
            let params = (0..=n).map(|i| vec![i as f64 / n as f64]).collect();
            cells.extend((0..n).map(|i| vec![i, i + 1]));
            Ok((params, cells))
        }
        DomainKind::Triangle => {
            let mut params = Vec::new();
            let mut index = vec![vec![0usize; n + 1]; n + 1];
            for j in 0..=n {
                for i in 0..=n - j {
                    index[i][j] = params.len();
                    params.push(vec![i as f64 / n as f64, j as f64 / n as f64]);
                }
            }
            for j in 0..n {
                for i in 0..n - j {
                    cells.push(vec![index[i][j], index[i + 1][j], index[i][j + 1]]);
                    if i + j + 1 < n {
                        cells.push(vec![index[i + 1][j], index[i + 1][j + 1], index[i][j + 1]]);
                    }
                }
            }
            Ok((params, cells))
        }
        DomainKind::Square => {
            let params = (0..=n).flat_map(|i| (0..=n).map(move |j| vec![i as f64 / n as f64, j as f64 / n as f64])).collect();
            let id = |i: usize, j: usize| i * (n + 1) + j;
            for i in 0..n {
                for j in 0..n {
                    cells.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                    cells.push(vec![id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
                }
            }
            Ok((params, cells))
        }
        DomainKind::Point | DomainKind::Cube => {
            Err(Error::InvalidPatch(format!("no linearization for {kind:?} domains")))
        }
    }
}

/// Uniform subdivision with `density` segments per domain edge.
pub fn linearize(patch: &PatchSpec, density: usize) -> Result<LinearizedPatch> {
    let sf = shape_function(patch)?;
    linearize_shape(&sf, patch.kind.domain_kind(), density)
}

fn linearize_shape(sf: &ShapeFunction, kind: DomainKind, density: usize) -> Result<LinearizedPatch> {
    if density == 0 {
        return Err(Error::InvalidPatch("density must be at least 1".into()));
    }
    let (params, cells) = domain_grid(kind, density)?;
    let vertices = params.iter().map(|u| sf.eval(u)).collect();
    Ok(LinearizedPatch { vertices, params, cells, density, sweep: None })
}

/// Linearization of a patch moving with per-control-point velocities over
/// `[0, t_max]`; positions are affine in time.
pub fn linearize_moving(patch: &PatchSpec, velocities: &[Vec<f64>], t_max: f64, density: usize) -> Result<LinearizedPatch> {
    let st = time_extend(patch, velocities, t_max)?;
    let mut lin = linearize(patch, density)?;
    let at = |u: &[f64], s: f64| st.eval(&[u, &[s][..]].concat());
    lin.vertices = lin.params.iter().map(|u| at(u, 0.0)).collect();
    lin.sweep = Some(
        lin.params
            .iter()
            .zip(&lin.vertices)
            .map(|(u, x0)| at(u, 1.0).iter().zip(x0).map(|(a, b)| a - b).collect())
            .collect(),
    );
    Ok(lin)
}

// ---------------------------------------------------------------------------
// Geometry primitives.

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    norm(&sub(a, b))
}

fn cross(a: &[f64], b: &[f64]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn combo(points: &[&[f64]], w: &[f64]) -> Vec<f64> {
    (0..points[0].len()).map(|j| points.iter().zip(w).map(|(p, wi)| wi * p[j]).sum()).collect()
}

/// Closest point on segment `ab` to `p` and its weights.
fn closest_on_segment(p: &[f64], a: &[f64], b: &[f64]) -> [f64; 2] {
    let ab = sub(b, a);
    let l = dot(&ab, &ab);
    let t = if l == 0.0 { 0.0 } else { (dot(&sub(p, a), &ab) / l).clamp(0.0, 1.0) };
    [1.0 - t, t]
}

/// Closest point on triangle `abc` to `p` (any dimension), as barycentric
/// weights.
fn closest_on_triangle(p: &[f64], a: &[f64], b: &[f64], c: &[f64]) -> [f64; 3] {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let (d1, d2) = (dot(&ab, &ap), dot(&ac, &ap));
    if d1 <= 0.0 && d2 <= 0.0 {
        return [1.0, 0.0, 0.0];
    }
    let bp = sub(p, b);
    let (d3, d4) = (dot(&ab, &bp), dot(&ac, &bp));
    if d3 >= 0.0 && d4 <= d3 {
        return [0.0, 1.0, 0.0];
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return [1.0 - v, v, 0.0];
    }
    let cp = sub(p, c);
    let (d5, d6) = (dot(&ab, &cp), dot(&ac, &cp));
    if d6 >= 0.0 && d5 <= d6 {
        return [0.0, 0.0, 1.0];
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return [1.0 - w, 0.0, w];
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return [0.0, 1.0 - w, w];
    }
    let denom = va + vb + vc;
    if denom == 0.0 {
        // Degenerate triangle: fall back to its edges.
        let cands = [([0usize, 1usize], closest_on_segment(p, a, b)), ([0, 2], closest_on_segment(p, a, c)), ([1, 2], closest_on_segment(p, b, c))];
        let pts = [a, b, c];
        let mut best = [1.0, 0.0, 0.0];
        let mut bd = f64::INFINITY;
        for (idx, w) in cands {
            let q = combo(&[pts[idx[0]], pts[idx[1]]], &w);
            let d = dist(&q, p);
            if d < bd {
                bd = d;
                best = [0.0; 3];
                best[idx[0]] = w[0];
                best[idx[1]] = w[1];
            }
        }
        return best;
    }
    let v = vb / denom;
    let w = vc / denom;
    [1.0 - v - w, v, w]
}

/// Closest point of a cell to `p`, as weights over the cell's vertices.
fn closest_on_cell(p: &[f64], pts: &[&[f64]]) -> Vec<f64> {
    match pts.len() {
        2 => closest_on_segment(p, pts[0], pts[1]).to_vec(),
        _ => closest_on_triangle(p, pts[0], pts[1], pts[2]).to_vec(),
    }
}

fn pad3(x: &[f64]) -> [f64; 3] {
    [x[0], x.get(1).copied().unwrap_or(0.0), x.get(2).copied().unwrap_or(0.0)]
}

/// Intersection points of segment `pq` with triangle `abc` (3D).
fn segment_triangle(p: &[f64; 3], q: &[f64; 3], t: [&[f64; 3]; 3], scale: f64, out: &mut Vec<[f64; 3]>) {
    let n = cross(&sub(t[1], t[0]), &sub(t[2], t[0]));
    let nn = norm(&n);
    if nn <= 1e-300 {
        return;
    }
    let eps = 1e-12 * scale;
    let dp = dot(&n, &sub(p, t[0])) / nn;
    let dq = dot(&n, &sub(q, t[0])) / nn;
    if (dp > eps && dq > eps) || (dp < -eps && dq < -eps) {
        return;
    }
    if dp.abs() <= eps && dq.abs() <= eps {
        coplanar_segment_triangle(p, q, t, &n, scale, out);
        return;
    }
    let s = if (dp - dq).abs() <= f64::MIN_POSITIVE { 0.0 } else { dp / (dp - dq) };
    let x: Vec<f64> = (0..3).map(|i| p[i] + s.clamp(0.0, 1.0) * (q[i] - p[i])).collect();
    if inside_triangle(&x, t, &n, scale) {
        out.push(pad3(&x));
    }
}

/// Whether a point of the triangle's plane lies inside it.
fn inside_triangle(x: &[f64], t: [&[f64; 3]; 3], n: &[f64; 3], scale: f64) -> bool {
    let tol = -1e-12 * scale * scale * norm(n).max(1.0);
    (0..3).all(|i| {
        let e = sub(t[(i + 1) % 3], t[i]);
        dot(&cross(&e, &sub(x, t[i])), n) >= tol
    })
}

/// Projects onto the two coordinates that drop the normal's largest axis.
fn drop_axis(n: &[f64; 3]) -> (usize, usize) {
    let ax = (0..3).max_by(|&a, &b| n[a].abs().total_cmp(&n[b].abs())).unwrap();
    match ax {
        0 => (1, 2),
        1 => (2, 0),
        _ => (0, 1),
    }
}

fn seg_seg_2d(p: [f64; 2], q: [f64; 2], a: [f64; 2], b: [f64; 2]) -> Vec<f64> {
    // Returns the parameters along pq of the intersection points.
    let r = [q[0] - p[0], q[1] - p[1]];
    let s = [b[0] - a[0], b[1] - a[1]];
    let den = r[0] * s[1] - r[1] * s[0];
    let ap = [a[0] - p[0], a[1] - p[1]];
    let scale = (r[0].abs() + r[1].abs()).max(s[0].abs() + s[1].abs()).max(1e-300);
    if den.abs() <= 1e-14 * scale * scale {
        // Parallel; overlapping collinear pieces contribute their ends.
        if (ap[0] * r[1] - ap[1] * r[0]).abs() > 1e-12 * scale * scale {
            return vec![];
        }
        let rr = r[0] * r[0] + r[1] * r[1];
        if rr == 0.0 {
            return vec![];
        }
        let t0 = (ap[0] * r[0] + ap[1] * r[1]) / rr;
        let t1 = t0 + (s[0] * r[0] + s[1] * r[1]) / rr;
        let (lo, hi) = (t0.min(t1).max(0.0), t0.max(t1).min(1.0));
        return if lo <= hi { vec![lo, hi] } else { vec![] };
    }
    let t = (ap[0] * s[1] - ap[1] * s[0]) / den;
    let u = (ap[0] * r[1] - ap[1] * r[0]) / den;
    let e = 1e-12;
    if (-e..=1.0 + e).contains(&t) && (-e..=1.0 + e).contains(&u) {
        vec![t.clamp(0.0, 1.0)]
    } else {
        vec![]
    }
}

fn coplanar_segment_triangle(p: &[f64; 3], q: &[f64; 3], t: [&[f64; 3]; 3], n: &[f64; 3], scale: f64, out: &mut Vec<[f64; 3]>) {
    let (i, j) = drop_axis(n);
    let pr = |x: &[f64; 3]| [x[i], x[j]];
    for e in [p, q] {
        if inside_triangle(e, t, n, scale) {
            out.push(*e);
        }
    }
    for k in 0..3 {
        for s in seg_seg_2d(pr(p), pr(q), pr(t[k]), pr(t[(k + 1) % 3])) {
            out.push(std::array::from_fn(|c| p[c] + s * (q[c] - p[c])));
        }
    }
}

/// Points of the intersection of two triangles: crossing points of each
/// one's edges with the other (the ends of the intersection segment, or the
/// corners of the overlap polygon when coplanar).
fn triangle_triangle(a: [&[f64; 3]; 3], b: [&[f64; 3]; 3], scale: f64) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    for k in 0..3 {
        segment_triangle(a[k], a[(k + 1) % 3], b, scale, &mut out);
        segment_triangle(b[k], b[(k + 1) % 3], a, scale, &mut out);
    }
    out
}

/// Intersection points of two planar segments.
fn segment_segment(a: [&[f64; 3]; 2], b: [&[f64; 3]; 2]) -> Vec<[f64; 3]> {
    seg_seg_2d([a[0][0], a[0][1]], [a[1][0], a[1][1]], [b[0][0], b[0][1]], [b[1][0], b[1][1]])
        .into_iter()
        .map(|s| std::array::from_fn(|c| a[0][c] + s * (a[1][c] - a[0][c])))
        .collect()
}

// ---------------------------------------------------------------------------
// Bounding volume hierarchy over cells.

struct Node {
    min: [f64; 3],
    max: [f64; 3],
    /// Children, or `None` for a leaf over `items[start..end]`.
    children: Option<(usize, usize)>,
    start: usize,
    end: usize,
}

struct Bvh {
    nodes: Vec<Node>,
    items: Vec<usize>,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    fn build(points: &[[f64; 3]], cells: &[Vec<usize>], pad: f64) -> Self {
        let boxes: Vec<([f64; 3], [f64; 3])> = cells
            .iter()
            .map(|c| {
                let mut lo = [f64::INFINITY; 3];
                let mut hi = [f64::NEG_INFINITY; 3];
                for &v in c {
                    for i in 0..3 {
                        lo[i] = lo[i].min(points[v][i] - pad);
                        hi[i] = hi[i].max(points[v][i] + pad);
                    }
                }
                (lo, hi)
            })
            .collect();
        let mut bvh = Bvh { nodes: Vec::new(), items: (0..cells.len()).collect() };
        if !cells.is_empty() {
            bvh.split(&boxes, 0, cells.len());
        }
        bvh
    }

    fn split(&mut self, boxes: &[([f64; 3], [f64; 3])], start: usize, end: usize) -> usize {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.items[start..end] {
            for c in 0..3 {
                lo[c] = lo[c].min(boxes[i].0[c]);
                hi[c] = hi[c].max(boxes[i].1[c]);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node { min: lo, max: hi, children: None, start, end });
        if end - start > LEAF_SIZE {
            let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap();
            let mid = (start + end) / 2;
            let center = |i: usize| boxes[i].0[axis] + boxes[i].1[axis];
            self.items[start..end].select_nth_unstable_by(mid - start, |&a, &b| center(a).total_cmp(&center(b)));
            let l = self.split(boxes, start, mid);
            let r = self.split(boxes, mid, end);
            self.nodes[id].children = Some((l, r));
        }
        id
    }

    fn overlaps(a: &Node, b: &Node) -> bool {
        (0..3).all(|i| a.min[i] <= b.max[i] && b.min[i] <= a.max[i])
    }

    /// Calls `f` on every pair of cells whose boxes overlap.
    fn pairs(&self, other: &Bvh, f: &mut dyn FnMut(usize, usize)) {
        if self.nodes.is_empty() || other.nodes.is_empty() {
            return;
        }
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, j)) = stack.pop() {
            let (a, b) = (&self.nodes[i], &other.nodes[j]);
            if !Self::overlaps(a, b) {
                continue;
            }
            match (a.children, b.children) {
                (None, None) => {
                    for &x in &self.items[a.start..a.end] {
                        for &y in &other.items[b.start..b.end] {
                            f(x, y);
                        }
                    }
                }
                (Some((l, r)), None) => stack.extend([(l, j), (r, j)]),
                (None, Some((l, r))) => stack.extend([(i, l), (i, r)]),
                (Some((l1, r1)), Some((l2, r2))) => stack.extend([(l1, l2), (l1, r2), (r1, l2), (r1, r2)]),
            }
        }
    }
}

/// A point where two cells meet, with weights over each cell's vertices.
struct Contact {
    ca: usize,
    cb: usize,
    x: [f64; 3],
}

fn to3(vs: &[Vec<f64>]) -> Result<Vec<[f64; 3]>> {
    vs.iter()
        .map(|v| {
            if v.len() > 3 {
                Err(Error::DimensionMismatch { expected: 3, found: v.len() })
            } else {
                Ok(pad3(v))
            }
        })
        .collect()
}

fn extent(points: &[[f64; 3]]) -> f64 {
    points.iter().flat_map(|p| p.iter()).fold(0.0f64, |m, v| m.max(v.abs())).max(1.0)
}

/// All contact points between the cells of two meshes.  With `same`, pairs
/// of cells sharing a vertex are skipped.
fn contacts(pa: &[[f64; 3]], ca: &[Vec<usize>], pb: &[[f64; 3]], cb: &[Vec<usize>], same: bool) -> Result<Vec<Contact>> {
    let curve = ca.first().is_some_and(|c| c.len() == 2);
    if curve && (pa.iter().chain(pb).any(|p| p[2] != 0.0)) {
        return Err(Error::InvalidPatch("curve intersection oracle supports planar curves only".into()));
    }
    let scale = extent(pa).max(extent(pb));
    let ta = Bvh::build(pa, ca, 1e-9 * scale);
    let tb = Bvh::build(pb, cb, 1e-9 * scale);
    let mut out = Vec::new();
    ta.pairs(&tb, &mut |i, j| {
        if same && (i >= j || ca[i].iter().any(|v| cb[j].contains(v))) {
            return;
        }
        let pts = if curve {
            segment_segment([&pa[ca[i][0]], &pa[ca[i][1]]], [&pb[cb[j][0]], &pb[cb[j][1]]])
        } else {
            triangle_triangle(
                [&pa[ca[i][0]], &pa[ca[i][1]], &pa[ca[i][2]]],
                [&pb[cb[j][0]], &pb[cb[j][1]], &pb[cb[j][2]]],
                scale,
            )
        };
        out.extend(pts.into_iter().map(|x| Contact { ca: i, cb: j, x }));
    });
    Ok(out)
}

/// Parameters of a contact point on one mesh.
fn contact_param(lin: &LinearizedPatch, pts: &[[f64; 3]], cell: usize, x: &[f64; 3]) -> Vec<f64> {
    let c = &lin.cells[cell];
    let vs: Vec<&[f64]> = c.iter().map(|&v| &pts[v][..]).collect();
    let w = closest_on_cell(x, &vs);
    lin.param_at(cell, &w)
}

// ---------------------------------------------------------------------------
// Queries.

/// A problem instance for the reference solver.
#[derive(Clone, Copy, Debug)]
pub enum OracleQuery<'a> {
    Cp { patch: &'a PatchSpec, target: &'a [f64] },
    Mbb { patch: &'a PatchSpec },
    Pd { patch: &'a PatchSpec },
    Ssi { a: &'a PatchSpec, b: &'a PatchSpec },
    Si { patch: &'a PatchSpec },
    Ccd { a: &'a PatchSpec, va: &'a [Vec<f64>], b: &'a PatchSpec, vb: &'a [Vec<f64>], t_max: f64 },
}

impl OracleQuery<'_> {
    pub fn kernel(&self) -> KernelKind {
        match self {
            OracleQuery::Cp { .. } => KernelKind::Cp,
            OracleQuery::Mbb { .. } => KernelKind::Mbb,
            OracleQuery::Pd { .. } => KernelKind::Pd,
            OracleQuery::Ssi { .. } => KernelKind::Ssi,
            OracleQuery::Si { .. } => KernelKind::Si,
            OracleQuery::Ccd { .. } => KernelKind::Ccd,
        }
    }
}

/// One optimal (or tied) configuration: parameters and points per patch;
/// CCD appends `[t]` (normalized) to `u`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub u: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleResult {
    pub kernel: KernelKind,
    pub density: usize,
    pub value: Option<f64>,
    pub decision: Option<Decision>,
    /// Best witness first, followed by those tied with it.
    pub witnesses: Vec<Witness>,
    pub aabb: Option<Aabb>,
    /// Normalized first contact time for CCD.
    pub time: Option<f64>,
}

impl OracleResult {
    fn new(kernel: KernelKind, density: usize) -> Self {
        OracleResult { kernel, density, value: None, decision: None, witnesses: Vec::new(), aabb: None, time: None }
    }
}

/// Keeps the witnesses whose objective is within `TIE_BAND` of the best,
/// best first.
fn ties(mut scored: Vec<(f64, Witness)>) -> (Option<f64>, Vec<Witness>) {
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let Some(best) = scored.first().map(|s| s.0) else { return (None, Vec::new()) };
    let band = TIE_BAND * (1.0 + best.abs());
    (Some(best), scored.into_iter().take_while(|s| s.0 <= best + band).map(|s| s.1).collect())
}

/// Solves a query on linearizations of the given density.
pub fn oracle_solve(q: &OracleQuery, density: usize) -> Result<OracleResult> {
    let mut res = OracleResult::new(q.kernel(), density);
    match *q {
        OracleQuery::Cp { patch, target } => {
            let lin = linearize(patch, density)?;
            if target.len() != patch.dim() {
                return Err(Error::DimensionMismatch { expected: patch.dim(), found: target.len() });
            }
            let mut scored = Vec::new();
            for (ci, c) in lin.cells.iter().enumerate() {
                let vs: Vec<&[f64]> = c.iter().map(|&v| &lin.vertices[v][..]).collect();
                let w = closest_on_cell(target, &vs);
                let x = combo(&vs, &w);
                let d2 = dist(&x, target).powi(2);
                scored.push((d2, Witness { u: vec![lin.param_at(ci, &w)], x: vec![x] }));
            }
            let (v, w) = ties(scored);
            res.value = v;
            res.witnesses = w;
        }
        OracleQuery::Mbb { patch } => {
            let lin = linearize(patch, density)?;
            let n = patch.dim();
            let mut b = Aabb { min: vec![f64::INFINITY; n], max: vec![f64::NEG_INFINITY; n] };
            for x in &lin.vertices {
                for j in 0..n {
                    b.min[j] = b.min[j].min(x[j]);
                    b.max[j] = b.max[j].max(x[j]);
                }
            }
            res.value = Some(b.volume());
            res.aabb = Some(b);
        }
        OracleQuery::Pd { patch } => {
            let lin = linearize(patch, density)?;
            let v = &lin.vertices;
            let mut best = 0.0;
            for i in 0..v.len() {
                for j in i + 1..v.len() {
                    best = f64::max(best, dist(&v[i], &v[j]).powi(2));
                }
            }
            let band = TIE_BAND * (1.0 + best);
            for i in 0..v.len() {
                for j in i + 1..v.len() {
                    if dist(&v[i], &v[j]).powi(2) >= best - band {
                        res.witnesses.push(Witness { u: vec![lin.params[i].clone(), lin.params[j].clone()], x: vec![v[i].clone(), v[j].clone()] });
                    }
                }
            }
            res.value = Some(-best);
        }
        OracleQuery::Ssi { a, b } => {
            let la = linearize(a, density)?;
            let lb = linearize(b, density)?;
            let (pa, pb) = (to3(&la.vertices)?, to3(&lb.vertices)?);
            let found = contacts(&pa, &la.cells, &pb, &lb.cells, false)?;
            let scored = found
                .iter()
                .map(|c| {
                    let ua = contact_param(&la, &pa, c.ca, &c.x);
                    let ub = contact_param(&lb, &pb, c.cb, &c.x);
                    let x = c.x[..a.dim()].to_vec();
                    (ua[0], Witness { u: vec![ua, ub], x: vec![x.clone(), x] })
                })
                .collect();
            let (v, w) = ties(scored);
            res.decision = Some(if w.is_empty() { Decision::None } else { Decision::Intersects });
            res.value = v;
            res.witnesses = w;
        }
        OracleQuery::Si { patch } => {
            let lin = linearize(patch, density)?;
            let p = to3(&lin.vertices)?;
            let found = contacts(&p, &lin.cells, &p, &lin.cells, true)?;
            let scored: Vec<(f64, Witness)> = found
                .iter()
                .filter_map(|c| {
                    let u1 = contact_param(&lin, &p, c.ca, &c.x);
                    let u2 = contact_param(&lin, &p, c.cb, &c.x);
                    let sep = dist(&u1, &u2);
                    let x = c.x[..patch.dim()].to_vec();
                    (sep >= EPS_PARAM).then(|| (-sep * sep, Witness { u: vec![u1, u2], x: vec![x.clone(), x] }))
                })
                .collect();
            let (v, w) = ties(scored);
            res.decision = Some(if w.is_empty() { Decision::None } else { Decision::SelfIntersects });
            res.value = v;
            res.witnesses = w;
        }
        OracleQuery::Ccd { a, va, b, vb, t_max } => {
            let la = linearize_moving(a, va, t_max, density)?;
            let lb = linearize_moving(b, vb, t_max, density)?;
            ccd_oracle(&la, &lb, a.dim(), &mut res)?;
        }
    }
    Ok(res)
}

fn ccd_oracle(la: &LinearizedPatch, lb: &LinearizedPatch, n: usize, res: &mut OracleResult) -> Result<()> {
    let at = |s: f64| -> Result<(Vec<[f64; 3]>, Vec<[f64; 3]>, Vec<Contact>)> {
        let pa = to3(&la.positions_at(s))?;
        let pb = to3(&lb.positions_at(s))?;
        let c = contacts(&pa, &la.cells, &pb, &lb.cells, false)?;
        Ok((pa, pb, c))
    };
    let mut hit = None;
    let mut prev = 0.0;
    for i in 0..=CCD_STEPS {
        let s = i as f64 / CCD_STEPS as f64;
        let snap = at(s)?;
        if !snap.2.is_empty() {
            hit = Some((prev, s, snap));
            break;
        }
        prev = s;
    }
    let Some((mut lo, mut hi, mut snap)) = hit else {
        res.decision = Some(Decision::None);
        return Ok(());
    };
    if hi > 0.0 {
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            let m = at(mid)?;
            if m.2.is_empty() {
                lo = mid;
            } else {
                hi = mid;
                snap = m;
            }
        }
    }
    let (pa, pb, found) = snap;
    res.decision = Some(Decision::Collides);
    res.time = Some(hi);
    res.value = Some(hi);
    res.witnesses = found
        .iter()
        .map(|c| {
            let ua = contact_param(la, &pa, c.ca, &c.x);
            let ub = contact_param(lb, &pb, c.cb, &c.x);
            let x = c.x[..n].to_vec();
            Witness { u: vec![ua, ub, vec![hi]], x: vec![x.clone(), x] }
        })
        .collect();
    Ok(())
}

// ---------------------------------------------------------------------------
// Comparison.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Match,
    Mismatch,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Match => "match",
            Verdict::Mismatch => "mismatch",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

fn max_part_dist(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| if x.len() == y.len() { dist(x, y) } else { f64::INFINITY }).fold(0.0, f64::max)
}

/// Whether the kernel witness lies within `tol` of some oracle witness in
/// both parameter and embedded space.  For two-point witnesses on one patch
/// (PD, SI) either pairing may match.
fn witness_matches(kernel: &KernelResult, oracle: &OracleResult, tol: f64) -> bool {
    let swap = matches!(kernel.kernel, KernelKind::Pd | KernelKind::Si);
    oracle.witnesses.iter().any(|w| {
        let direct = max_part_dist(&kernel.u, &w.u) <= tol && max_part_dist(&kernel.x, &w.x) <= tol;
        let swapped = swap && {
            let ru: Vec<Vec<f64>> = w.u.iter().rev().cloned().collect();
            let rx: Vec<Vec<f64>> = w.x.iter().rev().cloned().collect();
            max_part_dist(&kernel.u, &ru) <= tol && max_part_dist(&kernel.x, &rx) <= tol
        };
        direct || swapped
    })
}

/// Compares a kernel answer with a reference answer.  Differing decision
/// bits are a mismatch; agreeing verdicts whose witnesses (or boxes) differ
/// by more than `tol` are inconclusive at this resolution.
pub fn compare(kernel: &KernelResult, oracle: &OracleResult, tol: f64) -> Verdict {
    if kernel.decision == Some(Decision::Unknown) {
        return Verdict::Inconclusive;
    }
    if let (Some(kd), Some(od)) = (kernel.decision, oracle.decision) {
        if kd.is_positive() != od.is_positive() {
            return Verdict::Mismatch;
        }
        if !kd.is_positive() {
            return Verdict::Match;
        }
    }
    let ok = match kernel.kernel {
        KernelKind::Mbb => match (&kernel.aabb, &oracle.aabb) {
            (Some(k), Some(o)) => {
                let side = k.min.iter().zip(&o.min).chain(k.max.iter().zip(&o.max)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                side <= tol
            }
            _ => false,
        },
        KernelKind::Ccd => match (kernel.u.last().and_then(|t| t.first()), oracle.time) {
            (Some(tk), Some(to)) => (tk - to).abs() <= tol && witness_matches(kernel, oracle, tol),
            _ => false,
        },
        _ => witness_matches(kernel, oracle, tol),
    };
    if ok {
        Verdict::Match
    } else {
        Verdict::Inconclusive
    }
}

/// Outcome of checking one kernel result against the oracle.
#[derive(Clone, Debug, Serialize)]
pub struct Verification {
    pub verdict: Verdict,
    /// Density of the last oracle run.
    pub density: usize,
    pub oracle: OracleResult,
}

/// Compares against the oracle at increasing densities until the answers
/// match; the last verdict stands when the densities run out.
pub fn verify(kernel: &KernelResult, q: &OracleQuery, tol: f64, densities: &[usize]) -> Result<Verification> {
    let mut last = None;
    for &density in densities {
        let oracle = oracle_solve(q, density)?;
        let verdict = compare(kernel, &oracle, tol);
        let done = verdict == Verdict::Match;
        last = Some(Verification { verdict, density, oracle });
        if done {
            break;
        }
    }
    last.ok_or_else(|| Error::InvalidPatch("no oracle densities given".into()))
}

// ---------------------------------------------------------------------------
// Sampling references for bound kernels.

/// Minimum of a polynomial over a regular parameter grid with `n` points per
/// axis.
pub fn grid_minimum(f: &Polynomial, kind: DomainKind, n: usize) -> (f64, Vec<f64>) {
    grid_points(kind, n).into_iter().map(|u| (f.eval(&u), u)).min_by(|a, b| a.0.total_cmp(&b.0)).unwrap_or((f64::NAN, Vec::new()))
}

/// Embedded points at `count` seeded random parameters.
pub fn sample_surface(patch: &PatchSpec, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    use rand::SeedableRng;
    let sf = shape_function(patch)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let kind = patch.kind.domain_kind();
    Ok((0..count).map(|_| sf.eval(&crate::patch::random_point(kind, &mut rng))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patch::PatchKind;

    fn tri(z: f64) -> PatchSpec {
        PatchSpec::new(PatchKind::LinearTriangle, vec![vec![0.0, 0.0, z], vec![1.0, 0.0, z], vec![0.0, 1.0, z]])
    }

    #[test]
    fn grid_counts() {
        assert_eq!(linearize(&tri(0.0), 1).unwrap().num_triangles(), 1);
        assert_eq!(linearize(&tri(0.0), 10).unwrap().num_triangles(), 100);
        let mut quad = PatchSpec::new(PatchKind::TensorBezier, vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![1.0, 1.0, 0.0]]);
        quad.degrees = Some([1, 1]);
        assert_eq!(linearize(&quad, 3).unwrap().num_triangles(), 18);
        let curve = PatchSpec::new(PatchKind::QuadraticBezierCurve, vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 0.0]]);
        let l = linearize(&curve, 10).unwrap();
        assert_eq!((l.cells.len(), l.vertices.len()), (10, 11));
        assert!(linearize(&tri(0.0), 0).is_err());
    }

    #[test]
    fn vertices_lie_on_surface() {
        let spec = PatchSpec::new(
            PatchKind::QuadraticTriangle,
            vec![vec![0.0, 0.0, 0.0], vec![0.5, 0.0, 0.3], vec![1.0, 0.0, 0.0], vec![0.0, 0.5, 0.2], vec![0.5, 0.5, 0.9], vec![0.0, 1.0, 0.0]],
        );
        let sf = shape_function(&spec).unwrap();
        let l = linearize(&spec, 7).unwrap();
        for (x, u) in l.vertices.iter().zip(&l.params) {
            assert!(dist(x, &sf.eval(u)) <= 1e-12);
        }
    }

    #[test]
    fn cp_at_vertex_is_zero() {
        let t = tri(0.0);
        let target = shape_function(&t).unwrap().eval(&[0.3, 0.4]);
        let r = oracle_solve(&OracleQuery::Cp { patch: &t, target: &target }, 10).unwrap();
        assert!(r.value.unwrap() < 1e-28);
        assert!(r.witnesses.iter().all(|w| dist(&w.u[0], &[0.3, 0.4]) < 1e-12));
    }

    #[test]
    fn parallel_triangles_never_meet() {
        let (a, b) = (tri(0.0), tri(0.5));
        for n in ESCALATION {
            let r = oracle_solve(&OracleQuery::Ssi { a: &a, b: &b }, n).unwrap();
            assert_eq!(r.decision, Some(Decision::None));
        }
    }

    #[test]
    fn crossing_triangles_meet_on_their_line() {
        let a = tri(0.0);
        let b = PatchSpec::new(PatchKind::LinearTriangle, vec![vec![0.2, -0.5, -1.0], vec![0.2, -0.5, 1.0], vec![0.2, 1.5, 0.0]]);
        let r = oracle_solve(&OracleQuery::Ssi { a: &a, b: &b }, 4).unwrap();
        assert_eq!(r.decision, Some(Decision::Intersects));
        // u1_1 = 1 - x - y on the first triangle; along x = 0.2 it bottoms
        // out at the hypotenuse.
        assert!(r.value.unwrap().abs() < 1e-9, "{:?}", r.witnesses);
        for w in &r.witnesses {
            assert!((w.x[0][0] - 0.2).abs() < 1e-9 && w.x[0][2].abs() < 1e-9);
        }
    }

    #[test]
    fn coplanar_overlap_is_found() {
        let a = tri(0.0);
        let b = PatchSpec::new(PatchKind::LinearTriangle, vec![vec![0.2, 0.2, 0.0], vec![2.0, 0.2, 0.0], vec![0.2, 2.0, 0.0]]);
        let r = oracle_solve(&OracleQuery::Ssi { a: &a, b: &b }, 1).unwrap();
        assert_eq!(r.decision, Some(Decision::Intersects));
    }

    #[test]
    fn planar_curves_cross() {
        let a = PatchSpec::new(PatchKind::QuadraticBezierCurve, vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![2.0, 0.0]]);
        let b = PatchSpec::new(PatchKind::QuadraticBezierCurve, vec![vec![0.0, 0.5], vec![1.0, 0.5], vec![2.0, 0.5]]);
        let r = oracle_solve(&OracleQuery::Ssi { a: &a, b: &b }, 20).unwrap();
        assert_eq!(r.decision, Some(Decision::Intersects));
    }

    #[test]
    fn falling_triangle_hits_at_half() {
        let (a, b) = (tri(1.0), tri(0.0));
        let va = vec![vec![0.0, 0.0, -2.0]; 3];
        let vb = vec![vec![0.0; 3]; 3];
        let r = oracle_solve(&OracleQuery::Ccd { a: &a, va: &va, b: &b, vb: &vb, t_max: 1.0 }, 2).unwrap();
        assert_eq!(r.decision, Some(Decision::Collides));
        assert!((r.time.unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn flat_triangle_has_no_self_contacts() {
        let r = oracle_solve(&OracleQuery::Si { patch: &tri(0.0) }, 10).unwrap();
        assert_eq!(r.decision, Some(Decision::None));
    }

    #[test]
    fn box_grows_with_density() {
        let spec = PatchSpec::new(PatchKind::QuadraticBezierCurve, vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![2.0, 0.0]]);
        let coarse = oracle_solve(&OracleQuery::Mbb { patch: &spec }, 3).unwrap().aabb.unwrap();
        let fine = oracle_solve(&OracleQuery::Mbb { patch: &spec }, 6).unwrap().aabb.unwrap();
        assert!(fine.max[1] >= coarse.max[1] && (fine.max[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn compare_rules() {
        use crate::kernels::surface_surface_intersection;
        let (a, b) = (tri(0.0), tri(0.5));
        let k = surface_surface_intersection(&a, &b, &Default::default()).unwrap();
        let o = oracle_solve(&OracleQuery::Ssi { a: &a, b: &b }, 10).unwrap();
        assert_eq!(compare(&k, &o, COMPARE_TOL), Verdict::Match);
        let mut flipped = o.clone();
        flipped.decision = Some(Decision::Intersects);
        assert_eq!(compare(&k, &flipped, COMPARE_TOL), Verdict::Mismatch);
    }
}
