//! Knot checks and Bezier extraction of tensor B-spline / NURBS surfaces.

use crate::error::{Error, Result};
use crate::patch::{PatchKind, PatchSpec};

pub fn check_knots(knots: &[f64], degree: usize) -> Result<()> {
    if knots.iter().any(|k| !k.is_finite()) {
        return Err(Error::InvalidPatch("non-finite knot".into()));
    }
    if knots.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidPatch("knots must be non-decreasing".into()));
    }
    if knots.len() < 2 * (degree + 1) {
        return Err(Error::InvalidPatch(format!("degree {degree} needs at least {} knots", 2 * (degree + 1))));
    }
    let mut run = 1;
    for w in knots.windows(2) {
        run = if w[1] == w[0] { run + 1 } else { 1 };
        if run > degree + 1 {
            return Err(Error::InvalidPatch("knot multiplicity exceeds degree + 1".into()));
        }
    }
    if spans(knots, degree).is_empty() {
        return Err(Error::InvalidPatch("knot vector has no nonempty span".into()));
    }
    Ok(())
}

/// Indices `i` with `p <= i < len - p - 1` and `t_i < t_{i+1}`.
fn spans(knots: &[f64], p: usize) -> Vec<usize> {
    (p..knots.len() - p - 1).filter(|&i| knots[i] < knots[i + 1]).collect()
}

/// Blossom of the curve segment on span `i`, evaluated at `args`.
/// `ctrl` holds the `p + 1` homogeneous points `P_{i-p} .. P_i`.
fn blossom(knots: &[f64], p: usize, i: usize, ctrl: &[Vec<f64>], args: &[f64]) -> Vec<f64> {
    let mut d: Vec<Vec<f64>> = ctrl.to_vec();
    for r in 1..=p {
        for j in (r..=p).rev() {
            let g = i - p + j;
            let lo = knots[g];
            let hi = knots[g + p + 1 - r];
            let a = if hi > lo { (args[r - 1] - lo) / (hi - lo) } else { 0.0 };
            let prev = d[j - 1].clone();
            for (x, y) in d[j].iter_mut().zip(prev) {
                *x = (1.0 - a) * y + a * *x;
            }
        }
    }
    d.swap_remove(p)
}

/// Bezier points of span `i` via blossoming at `(t_i^{p-k}, t_{i+1}^k)`.
fn extract_segment(knots: &[f64], p: usize, i: usize, ctrl: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (a, b) = (knots[i], knots[i + 1]);
    (0..=p)
        .map(|k| {
            let args: Vec<f64> = (0..p).map(|r| if r < p - k { a } else { b }).collect();
            blossom(knots, p, i, ctrl, &args)
        })
        .collect()
}

/// Splits a B-spline or NURBS surface into tensor Bezier pieces, one per
/// pair of nonempty knot spans, ordered by span in u then v.  Each piece is
/// reparameterized to the unit square.
pub fn bezier_extract(spec: &PatchSpec) -> Result<Vec<PatchSpec>> {
    if !matches!(spec.kind, PatchKind::BsplineSurface | PatchKind::NurbsSurface) {
        return Ok(vec![spec.clone()]);
    }
    let ks = spec.knots.as_ref().ok_or_else(|| Error::InvalidPatch("spline needs `knots`".into()))?;
    check_knots(&ks.u, ks.degree_u)?;
    check_knots(&ks.v, ks.degree_v)?;
    let (p, q) = (ks.degree_u, ks.degree_v);
    let (nu, nv) = (ks.count_u(), ks.count_v());
    if spec.control_points.len() != nu * nv {
        return Err(Error::InvalidPatch(format!("expected {} control points, found {}", nu * nv, spec.control_points.len())));
    }
    let rational = spec.weights.is_some();
    let homog = |idx: usize| -> Vec<f64> {
        let w = spec.weights.as_ref().map(|w| w[idx]).unwrap_or(1.0);
        let mut h: Vec<f64> = spec.control_points[idx].iter().map(|x| x * w).collect();
        h.push(w);
        h
    };
    let mut out = Vec::new();
    for &i in &spans(&ks.u, p) {
        for &j in &spans(&ks.v, q) {
            // Extract along v for each of the p + 1 contributing rows.
            let rows: Vec<Vec<Vec<f64>>> = (i - p..=i)
                .map(|a| {
                    let ctrl: Vec<Vec<f64>> = (j - q..=j).map(|b| homog(a * nv + b)).collect();
                    extract_segment(&ks.v, q, j, &ctrl)
                })
                .collect();
            // Then along u for each resulting column.
            let mut net = vec![Vec::new(); (p + 1) * (q + 1)];
            for c in 0..=q {
                let col: Vec<Vec<f64>> = rows.iter().map(|r| r[c].clone()).collect();
                for (r, pt) in extract_segment(&ks.u, p, i, &col).into_iter().enumerate() {
                    net[r * (q + 1) + c] = pt;
                }
            }
            let mut weights = Vec::with_capacity(net.len());
            let pts = net
                .into_iter()
                .map(|mut h| {
                    let w = h.pop().unwrap();
                    weights.push(w);
                    h.into_iter().map(|x| x / w).collect()
                })
                .collect();
            let mut piece = PatchSpec::new(PatchKind::TensorBezier, pts);
            piece.degrees = Some([p, q]);
            if rational {
                piece.weights = Some(weights);
            }
            out.push(piece);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patch::{shape_function, KnotSpec};

    // Cox-de Boor recursion, used only as an independent reference.
    fn basis(knots: &[f64], p: usize, i: usize, t: f64) -> f64 {
        if p == 0 {
            let last = knots[knots.len() - 1];
            let inside = knots[i] <= t && t < knots[i + 1];
            let at_end = t == last && knots[i] < knots[i + 1] && knots[i + 1] == last;
            return if inside || at_end { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        let d1 = knots[i + p] - knots[i];
        if d1 > 0.0 {
            v += (t - knots[i]) / d1 * basis(knots, p - 1, i, t);
        }
        let d2 = knots[i + p + 1] - knots[i + 1];
        if d2 > 0.0 {
            v += (knots[i + p + 1] - t) / d2 * basis(knots, p - 1, i + 1, t);
        }
        v
    }

    fn eval(spec: &PatchSpec, u: f64, v: f64) -> Vec<f64> {
        let ks = spec.knots.as_ref().unwrap();
        let (nu, nv) = (ks.count_u(), ks.count_v());
        let n = spec.dim();
        let mut num = vec![0.0; n];
        let mut den = 0.0;
        for a in 0..nu {
            for b in 0..nv {
                let idx = a * nv + b;
                let w = spec.weights.as_ref().map(|w| w[idx]).unwrap_or(1.0);
                let f = basis(&ks.u, ks.degree_u, a, u) * basis(&ks.v, ks.degree_v, b, v) * w;
                den += f;
                for (x, c) in num.iter_mut().zip(&spec.control_points[idx]) {
                    *x += f * c;
                }
            }
        }
        num.into_iter().map(|x| x / den).collect()
    }

    fn surface(rational: bool) -> PatchSpec {
        let (nu, nv) = (5, 4);
        let mut pts = Vec::new();
        let mut ws = Vec::new();
        for a in 0..nu {
            for b in 0..nv {
                let (x, y) = (a as f64, b as f64);
                pts.push(vec![x, y, (x * 0.7 + y * 1.3).sin()]);
                ws.push(1.0 + 0.3 * ((a + 2 * b) % 3) as f64);
            }
        }
        let mut s = PatchSpec::new(if rational { PatchKind::NurbsSurface } else { PatchKind::BsplineSurface }, pts);
        s.knots = Some(KnotSpec {
            u: vec![0.0, 0.0, 0.0, 0.0, 0.4, 1.0, 1.0, 1.0, 1.0],
            v: vec![0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0],
            degree_u: 3,
            degree_v: 2,
        });
        if rational {
            s.weights = Some(ws);
        }
        s
    }

    #[test]
    fn pieces_reproduce_the_spline() {
        for rational in [false, true] {
            let s = surface(rational);
            s.validate().unwrap();
            let pieces = bezier_extract(&s).unwrap();
            assert_eq!(pieces.len(), 4);
            let u_spans = [(0.0, 0.4), (0.4, 1.0)];
            let v_spans = [(0.0, 0.5), (0.5, 1.0)];
            for (pi, piece) in pieces.iter().enumerate() {
                let sf = shape_function(piece).unwrap();
                let (ua, ub) = u_spans[pi / 2];
                let (va, vb) = v_spans[pi % 2];
                for &(s1, s2) in &[(0.0, 0.0), (0.3, 0.8), (1.0, 0.5), (0.6, 1.0)] {
                    let x = sf.eval(&[s1, s2]);
                    let y = eval(&s, ua + s1 * (ub - ua), va + s2 * (vb - va));
                    for (a, b) in x.iter().zip(&y) {
                        assert!((a - b).abs() < 1e-10, "{rational} piece {pi}: {x:?} vs {y:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn multi_span_shape_function_errors() {
        assert!(shape_function(&surface(false)).is_err());
    }

    #[test]
    fn bad_knots_rejected() {
        assert!(check_knots(&[0.0, 1.0, 0.5, 1.0], 1).is_err());
        assert!(check_knots(&[0.0, 0.0, 0.0, 1.0, 1.0, 1.0], 3).is_err());
        assert!(check_knots(&[0.0, 0.0, 1.0, 1.0], 1).is_ok());
    }
}
