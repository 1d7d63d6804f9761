//! Base domains and polynomial or rational patches over them.

use crate::error::{Error, Result};
use crate::poly::Polynomial;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// `{u : g_i(u) >= 0, h_j(u) = 0}` in `k` variables.
#[derive(Clone, Debug, PartialEq)]
pub struct SemialgebraicDomain {
    pub k: usize,
    pub inequalities: Vec<Polynomial>,
    pub equalities: Vec<Polynomial>,
    pub ball_radius: Option<f64>,
}

impl SemialgebraicDomain {
    pub fn new(k: usize) -> Self {
        SemialgebraicDomain { k, inequalities: Vec::new(), equalities: Vec::new(), ball_radius: None }
    }

    /// Appends the redundant constraint `R^2 k - sum u_i^2 >= 0`.
    pub fn with_ball(mut self, radius: f64) -> Self {
        let mut g = Polynomial::constant(self.k, radius * radius * self.k as f64);
        for i in 0..self.k {
            g = &g - &Polynomial::var(self.k, i).pow(2);
        }
        self.inequalities.push(g);
        self.ball_radius = Some(radius);
        self
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        self.inequalities.iter().all(|g| g.eval(u) >= -tol) && self.equalities.iter().all(|h| h.eval(u).abs() <= tol)
    }

    pub fn validate(&self) -> Result<()> {
        for p in self.inequalities.iter().chain(&self.equalities) {
            if p.num_vars() != self.k {
                return Err(Error::DimensionMismatch { expected: self.k, found: p.num_vars() });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    Point,
    Interval,
    Triangle,
    Square,
    Cube,
}

impl DomainKind {
    pub fn dim(self) -> usize {
        match self {
            DomainKind::Point => 0,
            DomainKind::Interval => 1,
            DomainKind::Triangle | DomainKind::Square => 2,
            DomainKind::Cube => 3,
        }
    }
}

impl std::str::FromStr for DomainKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "point" => DomainKind::Point,
            "interval" | "curve" => DomainKind::Interval,
            "triangle" => DomainKind::Triangle,
            "square" => DomainKind::Square,
            "cube" => DomainKind::Cube,
            other => return Err(Error::UnknownKind(other.to_string())),
        })
    }
}

pub fn canonical_domain(kind: DomainKind) -> SemialgebraicDomain {
    let k = kind.dim();
    let mut d = SemialgebraicDomain::new(k);
    let one = Polynomial::constant(k, 1.0);
    match kind {
        DomainKind::Point => {}
        DomainKind::Triangle => {
            let (u1, u2) = (Polynomial::var(2, 0), Polynomial::var(2, 1));
            d.inequalities = vec![u1.clone(), u2.clone(), &(&one - &u1) - &u2];
        }
        DomainKind::Interval | DomainKind::Square | DomainKind::Cube => {
            for i in 0..k {
                let u = Polynomial::var(k, i);
                d.inequalities.push(u.clone());
                d.inequalities.push(&one - &u);
            }
        }
    }
    d
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatchKind {
    LinearTriangle,
    QuadraticTriangle,
    CubicTriangle,
    QuadraticBezierCurve,
    CubicBezierCurve,
    BicubicTensor,
    /// Tensor-product Bezier patch of arbitrary degrees (see `degrees`).
    TensorBezier,
    CubicCoons,
    BsplineSurface,
    NurbsSurface,
    TrilinearHex,
}

impl PatchKind {
    pub fn domain_kind(self) -> DomainKind {
        match self {
            PatchKind::LinearTriangle | PatchKind::QuadraticTriangle | PatchKind::CubicTriangle => DomainKind::Triangle,
            PatchKind::QuadraticBezierCurve | PatchKind::CubicBezierCurve => DomainKind::Interval,
            PatchKind::BicubicTensor
            | PatchKind::TensorBezier
            | PatchKind::CubicCoons
            | PatchKind::BsplineSurface
            | PatchKind::NurbsSurface => DomainKind::Square,
            PatchKind::TrilinearHex => DomainKind::Cube,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PatchKind::LinearTriangle => "linear-triangle",
            PatchKind::QuadraticTriangle => "quadratic-triangle",
            PatchKind::CubicTriangle => "cubic-triangle",
            PatchKind::QuadraticBezierCurve => "quadratic-bezier-curve",
            PatchKind::CubicBezierCurve => "cubic-bezier-curve",
            PatchKind::BicubicTensor => "bicubic-tensor",
            PatchKind::TensorBezier => "tensor-bezier",
            PatchKind::CubicCoons => "cubic-coons",
            PatchKind::BsplineSurface => "bspline-surface",
            PatchKind::NurbsSurface => "nurbs-surface",
            PatchKind::TrilinearHex => "trilinear-hex",
        }
    }

    /// Fixed control-point count, when the kind has one.
    pub fn fixed_count(self) -> Option<usize> {
        match self {
            PatchKind::LinearTriangle => Some(3),
            PatchKind::QuadraticTriangle => Some(6),
            PatchKind::CubicTriangle => Some(10),
            PatchKind::QuadraticBezierCurve => Some(3),
            PatchKind::CubicBezierCurve => Some(4),
            PatchKind::BicubicTensor => Some(16),
            PatchKind::CubicCoons => Some(12),
            PatchKind::TrilinearHex => Some(8),
            PatchKind::TensorBezier | PatchKind::BsplineSurface | PatchKind::NurbsSurface => None,
        }
    }

    /// Patch degree used to pick default relaxation degrees: 1, 2 or 3.
    pub fn order_class(self) -> usize {
        match self {
            PatchKind::LinearTriangle | PatchKind::TrilinearHex => 1,
            PatchKind::QuadraticTriangle | PatchKind::QuadraticBezierCurve => 2,
            _ => 3,
        }
    }
}

impl std::str::FromStr for PatchKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| Error::UnknownKind(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TriangleBasis {
    #[default]
    Bernstein,
    Lagrange,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnotSpec {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub degree_u: usize,
    pub degree_v: usize,
}

impl KnotSpec {
    pub fn count_u(&self) -> usize {
        self.u.len().saturating_sub(self.degree_u + 1)
    }
    pub fn count_v(&self) -> usize {
        self.v.len().saturating_sub(self.degree_v + 1)
    }
}

/// One patch as read from or written to JSON.
///
/// Control points are ordered per kind:
/// triangles list vertices first, then edge points (`12, 23, 31` for
/// quadratics; `210, 120, 021, 012, 102, 201, 111` for cubics);
/// tensor kinds are row-major with the first parameter selecting the row;
/// Coons patches list the 12 boundary points of the 4x4 net row-major;
/// hexes use index `i + 2j + 4k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub kind: PatchKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub control_points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knots: Option<KnotSpec>,
    /// Degrees `[p, q]` of a `tensor-bezier` patch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degrees: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocities: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "is_default_basis")]
    pub basis: TriangleBasis,
}

fn is_default_basis(b: &TriangleBasis) -> bool {
    *b == TriangleBasis::Bernstein
}

impl PatchSpec {
    pub fn new(kind: PatchKind, control_points: Vec<Vec<f64>>) -> Self {
        PatchSpec {
            kind,
            n: None,
            control_points,
            weights: None,
            knots: None,
            degrees: None,
            velocities: None,
            basis: TriangleBasis::Bernstein,
        }
    }

    pub fn with_weights(mut self, w: Vec<f64>) -> Self {
        self.weights = Some(w);
        self
    }

    pub fn with_basis(mut self, b: TriangleBasis) -> Self {
        self.basis = b;
        self
    }

    /// Embedding dimension.
    pub fn dim(&self) -> usize {
        self.control_points.first().map(|p| p.len()).unwrap_or(0)
    }

    pub fn expected_count(&self) -> Result<usize> {
        if let Some(c) = self.kind.fixed_count() {
            return Ok(c);
        }
        match self.kind {
            PatchKind::TensorBezier => {
                let [p, q] = self.degrees.ok_or_else(|| Error::InvalidPatch("tensor-bezier needs `degrees`".into()))?;
                Ok((p + 1) * (q + 1))
            }
            _ => {
                let k = self.knots.as_ref().ok_or_else(|| Error::InvalidPatch("spline needs `knots`".into()))?;
                Ok(k.count_u() * k.count_v())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 {
            return Err(Error::InvalidPatch("no control points".into()));
        }
        if let Some(decl) = self.n {
            if decl != n {
                return Err(Error::InvalidPatch(format!("`n` is {decl} but control points have {n} coordinates")));
            }
        }
        if self.control_points.iter().any(|p| p.len() != n) {
            return Err(Error::InvalidPatch("control points have differing dimensions".into()));
        }
        if self.control_points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPatch("non-finite control point coordinate".into()));
        }
        let want = self.expected_count()?;
        if self.control_points.len() != want {
            return Err(Error::InvalidPatch(format!(
                "{} expects {want} control points, found {}",
                self.kind.name(),
                self.control_points.len()
            )));
        }
        if let Some(w) = &self.weights {
            if w.len() != want {
                return Err(Error::InvalidPatch(format!("expected {want} weights, found {}", w.len())));
            }
            if w.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::InvalidPatch("weights must be strictly positive".into()));
            }
        }
        if self.kind == PatchKind::NurbsSurface && self.weights.is_none() {
            return Err(Error::InvalidPatch("nurbs-surface needs `weights`".into()));
        }
        if let Some(k) = &self.knots {
            crate::spline::check_knots(&k.u, k.degree_u)?;
            crate::spline::check_knots(&k.v, k.degree_v)?;
        }
        if let Some(v) = &self.velocities {
            if v.len() != want || v.iter().any(|p| p.len() != n) {
                return Err(Error::InvalidPatch("velocities must match control points".into()));
            }
        }
        Ok(())
    }

    /// Applies `x -> a x + b` to every control point (velocities get `a` only).
    pub fn transformed(&self, a: &[Vec<f64>], b: &[f64]) -> PatchSpec {
        let map = |p: &Vec<f64>, with_shift: bool| -> Vec<f64> {
            (0..a.len())
                .map(|i| a[i].iter().zip(p).map(|(x, y)| x * y).sum::<f64>() + if with_shift { b[i] } else { 0.0 })
                .collect()
        };
        let mut out = self.clone();
        out.control_points = self.control_points.iter().map(|p| map(p, true)).collect();
        out.velocities = self.velocities.as_ref().map(|vs| vs.iter().map(|v| map(v, false)).collect());
        out
    }
}

/// Reads one patch or an array of patches from a JSON file.
pub fn load_patches(path: &Path) -> Result<Vec<PatchSpec>> {
    let text = std::fs::read_to_string(path)?;
    parse_patches(&text)
}

pub fn parse_patches(text: &str) -> Result<Vec<PatchSpec>> {
    // Dispatch on the first byte so serde reports line and field on errors.
    let patches: Vec<PatchSpec> =
        if text.trim_start().starts_with('[') { serde_json::from_str(text)? } else { vec![serde_json::from_str(text)?] };
    for (i, p) in patches.iter().enumerate() {
        p.validate().map_err(|e| match e {
            Error::InvalidPatch(m) => Error::InvalidPatch(format!("patch {i}: {m}")),
            other => other,
        })?;
    }
    Ok(patches)
}

/// `x(u) = a(u) / b(u)` over a domain.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeFunction {
    pub domain: SemialgebraicDomain,
    pub numerators: Vec<Polynomial>,
    pub denominator: Polynomial,
    /// Largest total degree among numerators and denominator.
    pub degree: usize,
}

impl ShapeFunction {
    pub fn dim(&self) -> usize {
        self.numerators.len()
    }

    pub fn k(&self) -> usize {
        self.domain.k
    }

    pub fn is_rational(&self) -> bool {
        self.denominator.degree() > 0 || (self.denominator.coeff(&crate::poly::MultiIndex::zero(self.k())) - 1.0).abs() > 0.0
    }

    pub fn eval(&self, u: &[f64]) -> Vec<f64> {
        let b = self.denominator.eval(u);
        self.numerators.iter().map(|a| a.eval(u) / b).collect()
    }

    /// `x(u)` as polynomials; only valid when the denominator is constant.
    pub fn polynomial_coords(&self) -> Result<Vec<Polynomial>> {
        if self.denominator.degree() > 0 {
            return Err(Error::InvalidPatch("rational patch has no polynomial coordinates".into()));
        }
        let c = self.denominator.coeff(&crate::poly::MultiIndex::zero(self.k()));
        Ok(self.numerators.iter().map(|a| a.scale(1.0 / c)).collect())
    }

    fn finish(domain: SemialgebraicDomain, numerators: Vec<Polynomial>, denominator: Polynomial) -> Self {
        let degree = numerators.iter().chain(std::iter::once(&denominator)).map(|p| p.degree()).max().unwrap_or(0);
        ShapeFunction { domain, numerators, denominator, degree }
    }
}

fn bary(k: usize) -> [Polynomial; 3] {
    let u1 = Polynomial::var(k, 0);
    let u2 = Polynomial::var(k, 1);
    let w = &(&Polynomial::constant(k, 1.0) - &u1) - &u2;
    [u1, u2, w]
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Barycentric exponent triples in control-point order.
pub fn triangle_indices(degree: usize) -> Vec<[u32; 3]> {
    match degree {
        1 => vec![[1, 0, 0], [0, 1, 0], [0, 0, 1]],
        2 => vec![[2, 0, 0], [0, 2, 0], [0, 0, 2], [1, 1, 0], [0, 1, 1], [1, 0, 1]],
        3 => vec![
            [3, 0, 0],
            [0, 3, 0],
            [0, 0, 3],
            [2, 1, 0],
            [1, 2, 0],
            [0, 2, 1],
            [0, 1, 2],
            [1, 0, 2],
            [2, 0, 1],
            [1, 1, 1],
        ],
        _ => unreachable!("triangle degree {degree}"),
    }
}

fn triangle_basis(degree: usize, basis: TriangleBasis) -> Vec<Polynomial> {
    let phi = bary(2);
    let n = degree as u32;
    triangle_indices(degree)
        .into_iter()
        .map(|idx| match basis {
            TriangleBasis::Bernstein => {
                let c = factorial(n) / (factorial(idx[0]) * factorial(idx[1]) * factorial(idx[2]));
                let mut p = Polynomial::constant(2, c);
                for (i, &e) in idx.iter().enumerate() {
                    p = &p * &phi[i].pow(e);
                }
                p
            }
            TriangleBasis::Lagrange => {
                // Product over barycentrics of prod_{m < a_i} (n phi_i - m) / (m + 1).
                let mut p = Polynomial::constant(2, 1.0);
                for (i, &e) in idx.iter().enumerate() {
                    for m in 0..e {
                        let f = phi[i].scale(n as f64).add_constant(-(m as f64)).scale(1.0 / (m as f64 + 1.0));
                        p = &p * &f;
                    }
                }
                p
            }
        })
        .collect()
}

/// Univariate Bernstein polynomials `B_i^n` in variable `var` of `k`.
pub fn bernstein(n: usize, k: usize, var: usize) -> Vec<Polynomial> {
    let t = Polynomial::var(k, var);
    let s = Polynomial::constant(k, 1.0) - t.clone();
    (0..=n)
        .map(|i| {
            let c = factorial(n as u32) / (factorial(i as u32) * factorial((n - i) as u32));
            (&t.pow(i as u32) * &s.pow((n - i) as u32)).scale(c)
        })
        .collect()
}

fn tensor_basis(p: usize, q: usize) -> Vec<Polynomial> {
    let bu = bernstein(p, 2, 0);
    let bv = bernstein(q, 2, 1);
    let mut out = Vec::with_capacity((p + 1) * (q + 1));
    for a in &bu {
        for b in &bv {
            out.push(a * b);
        }
    }
    out
}

/// Indices of the boundary points of a 4x4 net, row-major.
pub fn coons_boundary_indices() -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for i in 0..4 {
        for j in 0..4 {
            if i == 0 || i == 3 || j == 0 || j == 3 {
                v.push((i, j));
            }
        }
    }
    v
}

// Bilinearly blended Coons basis: each boundary point's weight function.
fn coons_basis() -> Vec<Polynomial> {
    let bu = bernstein(3, 2, 0);
    let bv = bernstein(3, 2, 1);
    let u = Polynomial::var(2, 0);
    let v = Polynomial::var(2, 1);
    let one = Polynomial::constant(2, 1.0);
    let (su, sv) = (&one - &u, &one - &v);
    let lin_u = [su.clone(), u.clone()];
    let lin_v = [sv.clone(), v.clone()];
    coons_boundary_indices()
        .into_iter()
        .map(|(i, j)| {
            let mut p = Polynomial::zero(2);
            // Ruled surface between the v = 0 and v = 1 boundary curves.
            if j == 0 || j == 3 {
                p = &p + &(&bu[i] * &lin_v[j / 3]);
            }
            // Ruled surface between the u = 0 and u = 1 boundary curves.
            if i == 0 || i == 3 {
                p = &p + &(&bv[j] * &lin_u[i / 3]);
            }
            // Bilinear correction at the corners.
            if (i == 0 || i == 3) && (j == 0 || j == 3) {
                p = &p - &(&lin_u[i / 3] * &lin_v[j / 3]);
            }
            p
        })
        .collect()
}

fn hex_basis() -> Vec<Polynomial> {
    let one = Polynomial::constant(3, 1.0);
    let lin = |d: usize, bit: usize| {
        let u = Polynomial::var(3, d);
        if bit == 1 {
            u
        } else {
            &one - &u
        }
    };
    (0..8).map(|idx| &(&lin(0, idx & 1) * &lin(1, (idx >> 1) & 1)) * &lin(2, (idx >> 2) & 1)).collect()
}

/// Basis functions of `spec` in control-point order.
pub fn basis_functions(spec: &PatchSpec) -> Result<Vec<Polynomial>> {
    Ok(match spec.kind {
        PatchKind::LinearTriangle => triangle_basis(1, spec.basis),
        PatchKind::QuadraticTriangle => triangle_basis(2, spec.basis),
        PatchKind::CubicTriangle => triangle_basis(3, spec.basis),
        PatchKind::QuadraticBezierCurve => bernstein(2, 1, 0),
        PatchKind::CubicBezierCurve => bernstein(3, 1, 0),
        PatchKind::BicubicTensor => tensor_basis(3, 3),
        PatchKind::TensorBezier => {
            let [p, q] = spec.degrees.ok_or_else(|| Error::InvalidPatch("tensor-bezier needs `degrees`".into()))?;
            tensor_basis(p, q)
        }
        PatchKind::CubicCoons => coons_basis(),
        PatchKind::TrilinearHex => hex_basis(),
        PatchKind::BsplineSurface | PatchKind::NurbsSurface => {
            return Err(Error::InvalidPatch("spline surfaces have no single basis; use bezier_extract".into()))
        }
    })
}

/// Builds `x(u)` for a patch.  Spline surfaces are accepted when they
/// consist of a single nonempty span.
pub fn shape_function(spec: &PatchSpec) -> Result<ShapeFunction> {
    spec.validate()?;
    if matches!(spec.kind, PatchKind::BsplineSurface | PatchKind::NurbsSurface) {
        let pieces = crate::spline::bezier_extract(spec)?;
        if pieces.len() != 1 {
            return Err(Error::InvalidPatch(format!(
                "spline has {} Bezier pieces; extract them and treat each separately",
                pieces.len()
            )));
        }
        return shape_function(&pieces[0]);
    }
    let phi = basis_functions(spec)?;
    let domain = canonical_domain(spec.kind.domain_kind());
    let k = domain.k;
    let n = spec.dim();
    let (numerators, denominator) = combine(&phi, &spec.control_points, spec.weights.as_deref(), k, n);
    let sf = ShapeFunction::finish(domain, numerators, denominator);
    if spec.weights.is_some() {
        check_denominator(&sf, spec.kind.domain_kind())?;
    }
    Ok(sf)
}

fn combine(phi: &[Polynomial], pts: &[Vec<f64>], weights: Option<&[f64]>, k: usize, n: usize) -> (Vec<Polynomial>, Polynomial) {
    let mut numerators = vec![Polynomial::zero(k); n];
    let mut denominator = Polynomial::zero(k);
    for (i, f) in phi.iter().enumerate() {
        let w = weights.map(|w| w[i]).unwrap_or(1.0);
        for j in 0..n {
            numerators[j] = &numerators[j] + &f.scale(w * pts[i][j]);
        }
        if weights.is_some() {
            denominator = &denominator + &f.scale(w);
        }
    }
    if weights.is_none() {
        denominator = Polynomial::constant(k, 1.0);
    }
    (numerators, denominator)
}

/// Checks `b >= 1e-8` on a `20^k` grid of the domain.
fn check_denominator(sf: &ShapeFunction, kind: DomainKind) -> Result<()> {
    let min = grid_points(kind, 20).iter().map(|u| sf.denominator.eval(u)).fold(f64::INFINITY, f64::min);
    if min < 1e-8 {
        return Err(Error::NonPositiveDenominator(min));
    }
    Ok(())
}

/// Regular grid on a canonical domain with `n` intervals per side
/// (for triangles, the points with `i + j <= n`).
pub fn grid_points(kind: DomainKind, n: usize) -> Vec<Vec<f64>> {
    let n = n.max(1);
    let h = 1.0 / n as f64;
    let mut out = Vec::new();
    match kind {
        DomainKind::Point => out.push(Vec::new()),
        DomainKind::Interval => (0..=n).for_each(|i| out.push(vec![i as f64 * h])),
        DomainKind::Triangle => {
            for i in 0..=n {
                for j in 0..=(n - i) {
                    out.push(vec![i as f64 * h, j as f64 * h]);
                }
            }
        }
        DomainKind::Square => {
            for i in 0..=n {
                for j in 0..=n {
                    out.push(vec![i as f64 * h, j as f64 * h]);
                }
            }
        }
        DomainKind::Cube => {
            for i in 0..=n {
                for j in 0..=n {
                    for l in 0..=n {
                        out.push(vec![i as f64 * h, j as f64 * h, l as f64 * h]);
                    }
                }
            }
        }
    }
    out
}

/// Uniform random point of a canonical domain.
pub fn random_point<R: rand::Rng + ?Sized>(kind: DomainKind, rng: &mut R) -> Vec<f64> {
    match kind {
        DomainKind::Point => Vec::new(),
        DomainKind::Interval => vec![rng.random::<f64>()],
        DomainKind::Triangle => {
            let (mut a, mut b) = (rng.random::<f64>(), rng.random::<f64>());
            if a + b > 1.0 {
                a = 1.0 - a;
                b = 1.0 - b;
            }
            vec![a, b]
        }
        DomainKind::Square => vec![rng.random(), rng.random()],
        DomainKind::Cube => vec![rng.random(), rng.random(), rng.random()],
    }
}

/// Cartesian product; `extra` polynomials (over `k1 + k2` variables) are
/// appended as inequalities.
pub fn product_domain(d1: &SemialgebraicDomain, d2: &SemialgebraicDomain, extra: &[Polynomial]) -> Result<SemialgebraicDomain> {
    let k = d1.k + d2.k;
    for q in extra {
        if q.num_vars() != k {
            return Err(Error::DimensionMismatch { expected: k, found: q.num_vars() });
        }
    }
    let mut d = SemialgebraicDomain::new(k);
    d.inequalities.extend(d1.inequalities.iter().map(|g| g.embed(k, 0)));
    d.inequalities.extend(d2.inequalities.iter().map(|g| g.embed(k, d1.k)));
    d.inequalities.extend(extra.iter().cloned());
    d.equalities.extend(d1.equalities.iter().map(|h| h.embed(k, 0)));
    d.equalities.extend(d2.equalities.iter().map(|h| h.embed(k, d1.k)));
    Ok(d)
}

/// Spacetime shape `sum (p_i + t t_max v_i) phi_i(u)` over `domain x [0, 1]`;
/// the last variable is normalized time.
pub fn time_extend(spec: &PatchSpec, velocities: &[Vec<f64>], t_max: f64) -> Result<ShapeFunction> {
    if velocities.len() != spec.control_points.len() {
        return Err(Error::InvalidPatch(format!(
            "{} velocities for {} control points",
            velocities.len(),
            spec.control_points.len()
        )));
    }
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidPatch("t_max must be positive".into()));
    }
    let base = shape_function(spec)?;
    let mut vspec = spec.clone();
    vspec.control_points = velocities.to_vec();
    vspec.velocities = None;
    vspec.validate()?;
    let phi = basis_functions(spec)?;
    let k = base.k();
    let (vnum, _) = combine(&phi, velocities, spec.weights.as_deref(), k, spec.dim());
    let time_domain = canonical_domain(DomainKind::Interval);
    let domain = product_domain(&base.domain, &time_domain, &[])?;
    let kt = k + 1;
    let t = Polynomial::var(kt, k);
    let numerators = base
        .numerators
        .iter()
        .zip(&vnum)
        .map(|(a, v)| &a.embed(kt, 0) + &(&v.embed(kt, 0) * &t).scale(t_max))
        .collect();
    let denominator = base.denominator.embed(kt, 0);
    Ok(ShapeFunction::finish(domain, numerators, denominator))
}

/// `a1_j(u1) b2(u2) - a2_j(u2) b1(u1)` over the product space `(u1, u2)`.
pub fn clear_denominators(lhs: &ShapeFunction, rhs: &ShapeFunction) -> Result<Vec<Polynomial>> {
    if lhs.dim() != rhs.dim() {
        return Err(Error::DimensionMismatch { expected: lhs.dim(), found: rhs.dim() });
    }
    let k = lhs.k() + rhs.k();
    let b1 = lhs.denominator.embed(k, 0);
    let b2 = rhs.denominator.embed(k, lhs.k());
    Ok(lhs
        .numerators
        .iter()
        .zip(&rhs.numerators)
        .map(|(a1, a2)| &(&a1.embed(k, 0) * &b2) - &(&a2.embed(k, lhs.k()) * &b1))
        .collect())
}

/// Same as [`clear_denominators`] but with both shapes over one shared
/// variable space.
pub fn clear_denominators_shared(lhs: &ShapeFunction, rhs: &ShapeFunction) -> Result<Vec<Polynomial>> {
    if lhs.dim() != rhs.dim() {
        return Err(Error::DimensionMismatch { expected: lhs.dim(), found: rhs.dim() });
    }
    if lhs.k() != rhs.k() {
        return Err(Error::DimensionMismatch { expected: lhs.k(), found: rhs.k() });
    }
    Ok(lhs
        .numerators
        .iter()
        .zip(&rhs.numerators)
        .map(|(a1, a2)| &(a1 * &rhs.denominator) - &(a2 * &lhs.denominator))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri() -> PatchSpec {
        PatchSpec::new(PatchKind::LinearTriangle, vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]])
    }

    #[test]
    fn canonical_domains() {
        assert_eq!(canonical_domain(DomainKind::Triangle).inequalities.len(), 3);
        let i = canonical_domain(DomainKind::Interval);
        assert_eq!(i.inequalities.len(), 2);
        let c = canonical_domain(DomainKind::Cube);
        assert_eq!(c.inequalities.len(), 6);
        let tight = c.inequalities.iter().filter(|g| g.eval(&[1.0, 1.0, 1.0]) == 0.0).count();
        assert_eq!(tight, 3);
        assert!(c.contains(&[1.0, 1.0, 1.0], 0.0));
        assert!("hexagon".parse::<DomainKind>().is_err());
    }

    #[test]
    fn linear_triangle_shape() {
        let sf = shape_function(&tri()).unwrap();
        let x = sf.eval(&[0.2, 0.3]);
        assert_eq!(x, vec![0.3, 1.0 - 0.2 - 0.3, 0.0]);
    }

    #[test]
    fn curve_interpolates_endpoints() {
        let spec = PatchSpec::new(PatchKind::QuadraticBezierCurve, vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![2.0, 0.0]]);
        let sf = shape_function(&spec).unwrap();
        assert_eq!(sf.eval(&[0.0]), vec![0.0, 0.0]);
        assert_eq!(sf.eval(&[1.0]), vec![2.0, 0.0]);
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let spec = PatchSpec::new(PatchKind::QuadraticTriangle, vec![vec![0.0; 3]; 5]);
        assert!(shape_function(&spec).is_err());
        let bad_w = tri().with_weights(vec![1.0, -1.0, 1.0]);
        assert!(bad_w.validate().is_err());
    }

    #[test]
    fn product_counts() {
        let t = canonical_domain(DomainKind::Triangle);
        let p = product_domain(&t, &t, &[]).unwrap();
        assert_eq!((p.k, p.inequalities.len()), (4, 6));
        let pt = canonical_domain(DomainKind::Point);
        assert_eq!(product_domain(&t, &pt, &[]).unwrap(), t);
        let st = product_domain(&t, &canonical_domain(DomainKind::Interval), &[]).unwrap();
        assert_eq!((st.k, st.inequalities.len()), (3, 5));
    }

    #[test]
    fn time_extension_moves_points() {
        let spec = tri();
        let zero = vec![vec![0.0; 3]; 3];
        let sf = time_extend(&spec, &zero, 1.0).unwrap();
        for a in &sf.numerators {
            assert!(a.terms().all(|(m, _)| m.exponents()[2] == 0));
        }
        let vel = vec![vec![0.0, 0.0, 1.0]; 3];
        let sf = time_extend(&spec, &vel, 2.0).unwrap();
        // Corner u = (0, 0) is control point 3.
        assert_eq!(sf.eval(&[0.0, 0.0, 1.0]), vec![0.0, 1.0, 2.0]);
        assert!(time_extend(&spec, &vel[..2], 1.0).is_err());
    }

    #[test]
    fn clearing_polynomial_patches_gives_differences() {
        let a = shape_function(&tri()).unwrap();
        let eqs = clear_denominators(&a, &a).unwrap();
        assert_eq!(eqs.len(), 3);
        assert_eq!(eqs[0].eval(&[0.1, 0.2, 0.1, 0.2]), 0.0);
        let same = clear_denominators_shared(&a, &a).unwrap();
        assert!(same.iter().all(|p| p.is_zero()));
    }

    #[test]
    fn lagrange_quadratic_interpolates_midpoints() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64, 1.0]).collect();
        let spec = PatchSpec::new(PatchKind::QuadraticTriangle, pts.clone()).with_basis(TriangleBasis::Lagrange);
        let sf = shape_function(&spec).unwrap();
        // Edge (1, 2) midpoint: phi1 = phi2 = 1/2, i.e. u = (0.5, 0.5).
        let x = sf.eval(&[0.5, 0.5]);
        for j in 0..3 {
            assert!((x[j] - pts[3][j]).abs() < 1e-12);
        }
        let sum: Polynomial = basis_functions(&spec).unwrap().into_iter().fold(Polynomial::zero(2), |a, b| a + b);
        assert_eq!(sum, Polynomial::constant(2, 1.0));
    }

    #[test]
    fn json_round_trip() {
        let spec = tri();
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"linear-triangle\""));
        let back = parse_patches(&text).unwrap();
        assert_eq!(back, vec![spec]);
        let arr = format!("[{text},{text}]");
        assert_eq!(parse_patches(&arr).unwrap().len(), 2);
    }
}
