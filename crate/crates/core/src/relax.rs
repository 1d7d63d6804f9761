//! SOS and moment relaxations of `min f(u) s.t. u in D`.

use crate::error::{Error, Result};
use crate::patch::SemialgebraicDomain;
use crate::poly::{MonomialBasis, MultiIndex, Polynomial};
use nalgebra::DMatrix;
use sosgeom_sdp::{solve, Constraint, Entry, SdpProblem, SdpSolution, SolveStatus, SolverSettings};
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq)]
pub struct TemplateProblem {
    pub objective: Polynomial,
    pub domain: SemialgebraicDomain,
}

impl TemplateProblem {
    pub fn new(objective: Polynomial, domain: SemialgebraicDomain) -> Result<Self> {
        if objective.num_vars() != domain.k {
            return Err(Error::DimensionMismatch { expected: domain.k, found: objective.num_vars() });
        }
        domain.validate()?;
        Ok(TemplateProblem { objective, domain })
    }

    pub fn k(&self) -> usize {
        self.domain.k
    }
}

fn half_up(n: usize) -> usize {
    n.div_ceil(2)
}

/// Smallest Gram order `r` for which every multiplier has a basis.
fn min_order(f_degree: usize, domain: &SemialgebraicDomain) -> usize {
    let mut r = half_up(f_degree);
    for g in &domain.inequalities {
        r = r.max(half_up(g.degree()));
    }
    for h in &domain.equalities {
        r = r.max(half_up(h.degree()));
    }
    r
}

/// Smallest Gram order at which every product `g_i s_i` can reach the
/// objective's degree, so that leading terms of either sign are
/// representable.
fn reach_order(f_degree: usize, domain: &SemialgebraicDomain) -> usize {
    let mut r = min_order(f_degree, domain);
    for g in &domain.inequalities {
        let dg = g.degree();
        if f_degree > dg {
            r = r.max(half_up(dg) + half_up(f_degree - dg));
        }
    }
    r
}

/// The relaxation degree `d`; the Gram order is `r = ceil(d / 2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RelaxationOrder {
    pub d: usize,
}

impl RelaxationOrder {
    pub fn new(d: usize) -> Self {
        RelaxationOrder { d }
    }

    pub fn r(&self) -> usize {
        half_up(self.d)
    }

    /// Smallest `d` accepted for `t`.
    pub fn min_d(t: &TemplateProblem) -> usize {
        let r = min_order(t.objective.degree(), &t.domain);
        (2 * r).saturating_sub(1)
    }

    /// `d` raised, if needed, to the smallest value at which the relaxation
    /// can represent `f - lambda` (see `reach_order`).
    pub fn lifted(d: usize, t: &TemplateProblem) -> Self {
        RelaxationOrder { d: d.max(lifted_d(t.objective.degree(), &t.domain)) }
    }

    pub fn check(&self, t: &TemplateProblem) -> Result<()> {
        if self.r() < min_order(t.objective.degree(), &t.domain) {
            return Err(Error::OrderTooSmall { min_d: Self::min_d(t) });
        }
        Ok(())
    }
}

/// Where each piece of a Putinar identity lives in the SDP.
#[derive(Clone, Debug)]
pub struct PutinarLayout {
    pub k: usize,
    pub r: usize,
    /// Row `i` matches the coefficient of monomial `rows.get(i)`.
    pub rows: MonomialBasis,
    /// Block 0 is `s_0`; block `i + 1` multiplies inequality `i`.
    pub gram_blocks: Vec<usize>,
    pub gram_bases: Vec<MonomialBasis>,
    /// First free variable and basis of each equality multiplier.
    pub eq_offsets: Vec<usize>,
    pub eq_bases: Vec<MonomialBasis>,
}

/// Linear system `q(u) = s_0 + sum g_i s_i + sum h_j p_j` where the target
/// `q` may depend affinely on extra decision variables.
#[derive(Clone, Debug)]
pub struct PutinarSystem {
    pub sdp: SdpProblem,
    pub layout: PutinarLayout,
    domain: SemialgebraicDomain,
}

impl PutinarSystem {
    pub fn new(domain: &SemialgebraicDomain, r: usize) -> Result<Self> {
        domain.validate()?;
        let k = domain.k;
        if min_order(0, domain) > r {
            return Err(Error::OrderTooSmall { min_d: (2 * min_order(0, domain)).saturating_sub(1) });
        }
        let rows = MonomialBasis::new(k, 2 * r);
        let mut sdp = SdpProblem::new();
        let mut constraints: Vec<Constraint> =
            (0..rows.len()).map(|_| Constraint { entries: Vec::new(), free: Vec::new(), rhs: 0.0 }).collect();

        let mut gram_blocks = Vec::new();
        let mut gram_bases = Vec::new();
        let one = Polynomial::constant(k, 1.0);
        let weights: Vec<&Polynomial> = std::iter::once(&one).chain(domain.inequalities.iter()).collect();
        for (i, g) in weights.iter().enumerate() {
            let w = if i == 0 { 0 } else { half_up(g.degree()) };
            let basis = MonomialBasis::new(k, r - w);
            let name = if i == 0 { "s0".to_string() } else { format!("s{i}") };
            let blk = sdp.add_block(name, basis.len());
            for a in 0..basis.len() {
                for b in a..basis.len() {
                    let ab = basis.get(a).add(basis.get(b));
                    for (gm, gc) in g.terms() {
                        let row = rows.position(&gm.add(&ab)).expect("row basis covers multiplier products");
                        constraints[row].entries.push(Entry::new(blk, a, b, gc));
                    }
                }
            }
            gram_blocks.push(blk);
            gram_bases.push(basis);
        }

        let mut eq_offsets = Vec::new();
        let mut eq_bases = Vec::new();
        for (j, h) in domain.equalities.iter().enumerate() {
            let basis = MonomialBasis::new(k, 2 * r - h.degree());
            eq_offsets.push(sdp.num_free());
            for (bi, m) in basis.iter().enumerate() {
                let v = sdp.add_free(format!("p{j}_{bi}"));
                for (hm, hc) in h.terms() {
                    let row = rows.position(&hm.add(m)).expect("row basis covers multiplier products");
                    constraints[row].free.push((v, hc));
                }
            }
            eq_bases.push(basis);
        }
        for c in constraints {
            sdp.add_constraint(c);
        }
        Ok(PutinarSystem {
            sdp,
            layout: PutinarLayout { k, r, rows, gram_blocks, gram_bases, eq_offsets, eq_bases },
            domain: domain.clone(),
        })
    }

    fn row_of(&self, m: &MultiIndex) -> Result<usize> {
        self.layout.rows.position(m).ok_or(Error::OrderTooSmall { min_d: (m.degree() as usize).saturating_sub(1) })
    }

    /// Adds a fixed polynomial to the target.
    pub fn add_target_constant(&mut self, q: &Polynomial) -> Result<()> {
        for (m, c) in q.terms() {
            let row = self.row_of(m)?;
            self.sdp.constraints[row].rhs += c;
        }
        Ok(())
    }

    /// Adds `x_v q(u)` to the target for free variable `v`.
    pub fn add_target_free(&mut self, v: usize, q: &Polynomial) -> Result<()> {
        for (m, c) in q.terms() {
            let row = self.row_of(m)?;
            self.sdp.constraints[row].free.push((v, -c));
        }
        Ok(())
    }

    /// Adds `(X_ab + X_ba) q(u)` (or `X_aa q(u)` on the diagonal) to the target.
    pub fn add_target_block(&mut self, block: usize, a: usize, b: usize, q: &Polynomial) -> Result<()> {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        for (m, c) in q.terms() {
            let row = self.row_of(m)?;
            self.sdp.constraints[row].entries.push(Entry::new(block, a, b, -c));
        }
        Ok(())
    }

    /// Gram matrices and multiplier polynomials from a primal solution, and
    /// the max coefficient of `q - s_0 - sum g_i s_i - sum h_j p_j` where
    /// `q` is supplied by the caller.
    pub fn residual(&self, target: &Polynomial, sol: &SdpSolution) -> f64 {
        let mut rhs = Polynomial::zero(self.layout.k);
        let one = Polynomial::constant(self.layout.k, 1.0);
        let weights: Vec<&Polynomial> = std::iter::once(&one).chain(self.domain.inequalities.iter()).collect();
        for (i, g) in weights.iter().enumerate() {
            let s = gram_polynomial(&self.layout.gram_bases[i], &sol.x[self.layout.gram_blocks[i]]);
            rhs = &rhs + &(*g * &s);
        }
        for (j, h) in self.domain.equalities.iter().enumerate() {
            let off = self.layout.eq_offsets[j];
            let basis = &self.layout.eq_bases[j];
            let p = Polynomial::from_terms(
                self.layout.k,
                basis.iter().enumerate().map(|(i, m)| (m.clone(), sol.x_free[off + i])),
            )
            .expect("basis matches variable count");
            rhs = &rhs + &(h * &p);
        }
        let diff = target - &rhs;
        let mut worst = diff.max_abs_coeff();
        // Negative Gram eigenvalues also count against the identity.
        for &blk in &self.layout.gram_blocks {
            let e = sosgeom_sdp::linalg::min_eigenvalue(&sol.x[blk]);
            if e < 0.0 {
                worst = worst.max(-e);
            }
        }
        worst
    }

    pub fn domain(&self) -> &SemialgebraicDomain {
        &self.domain
    }
}

/// `[u]^T S [u]` as a polynomial.
pub fn gram_polynomial(basis: &MonomialBasis, s: &DMatrix<f64>) -> Polynomial {
    let mut terms = Vec::with_capacity(basis.len() * basis.len());
    for a in 0..basis.len() {
        for b in 0..basis.len() {
            terms.push((basis.get(a).add(basis.get(b)), s[(a, b)]));
        }
    }
    Polynomial::from_terms(basis.num_vars(), terms).expect("basis matches variable count")
}

/// SOS program: maximize `lambda` s.t. `f - lambda b` is in the truncated
/// quadratic module, where `b` is 1 for template problems and a positive
/// denominator for ratio objectives `f / b`.  Encoded as minimizing `-lambda`.
#[derive(Clone, Debug)]
pub struct CompiledSos {
    pub system: PutinarSystem,
    pub lambda: usize,
    pub objective: Polynomial,
    pub denominator: Polynomial,
}

impl CompiledSos {
    pub fn sdp(&self) -> &SdpProblem {
        &self.system.sdp
    }
}

pub fn compile_sos(t: &TemplateProblem, order: RelaxationOrder) -> Result<CompiledSos> {
    compile_sos_ratio(&t.objective, &Polynomial::constant(t.k(), 1.0), &t.domain, order)
}

/// Lower bound on `numerator / denominator` over the domain; the
/// denominator must be positive there.
pub fn compile_sos_ratio(
    numerator: &Polynomial,
    denominator: &Polynomial,
    domain: &SemialgebraicDomain,
    order: RelaxationOrder,
) -> Result<CompiledSos> {
    for p in [numerator, denominator] {
        if p.num_vars() != domain.k {
            return Err(Error::DimensionMismatch { expected: domain.k, found: p.num_vars() });
        }
    }
    let need = min_order(numerator.degree().max(denominator.degree()), domain);
    if order.r() < need {
        return Err(Error::OrderTooSmall { min_d: (2 * need).saturating_sub(1) });
    }
    let mut system = PutinarSystem::new(domain, order.r())?;
    let lambda = system.sdp.add_free("lambda");
    system.add_target_constant(numerator)?;
    system.add_target_free(lambda, &denominator.neg())?;
    system.sdp.objective.free.push((lambda, -1.0));
    Ok(CompiledSos { system, lambda, objective: numerator.clone(), denominator: denominator.clone() })
}

/// Smallest `d` accepted for a ratio objective.
pub fn min_ratio_d(numerator: &Polynomial, denominator: &Polynomial, domain: &SemialgebraicDomain) -> usize {
    (2 * min_order(numerator.degree().max(denominator.degree()), domain)).saturating_sub(1)
}

/// Smallest `d` whose multipliers reach an objective of degree `f_degree`.
pub fn lifted_d(f_degree: usize, domain: &SemialgebraicDomain) -> usize {
    (2 * reach_order(f_degree, domain)).saturating_sub(1)
}

/// Moment program with explicit moment variables.
#[derive(Clone, Debug)]
pub struct CompiledMoment {
    pub sdp: SdpProblem,
    pub basis: MonomialBasis,
    pub k: usize,
    pub r: usize,
}

pub fn compile_moment(t: &TemplateProblem, order: RelaxationOrder) -> Result<CompiledMoment> {
    order.check(t)?;
    let k = t.k();
    let r = order.r();
    let basis = MonomialBasis::new(k, 2 * r);
    let mut sdp = SdpProblem::new();
    for (i, m) in basis.iter().enumerate() {
        sdp.add_free(format!("mu{i}:{m:?}"));
    }
    let one = Polynomial::constant(k, 1.0);
    let weights: Vec<&Polynomial> = std::iter::once(&one).chain(t.domain.inequalities.iter()).collect();
    for (i, g) in weights.iter().enumerate() {
        let w = if i == 0 { 0 } else { half_up(g.degree()) };
        let lb = MonomialBasis::new(k, r - w);
        let blk = sdp.add_block(if i == 0 { "moment".to_string() } else { format!("localizing{i}") }, lb.len());
        for a in 0..lb.len() {
            for b in a..lb.len() {
                let ab = lb.get(a).add(lb.get(b));
                // X_ab = sum_gamma g_gamma mu_{gamma + a + b}
                let mut free: Vec<(usize, f64)> = Vec::new();
                for (gm, gc) in g.terms() {
                    let idx = basis.position(&gm.add(&ab)).expect("moment basis covers localizing entries");
                    free.push((idx, -gc));
                }
                let v = if a == b { 1.0 } else { 0.5 };
                sdp.add_constraint(Constraint { entries: vec![Entry::new(blk, a, b, v)], free, rhs: 0.0 });
            }
        }
    }
    for h in &t.domain.equalities {
        let qb = MonomialBasis::new(k, 2 * r - h.degree());
        for q in qb.iter() {
            let free = h
                .terms()
                .map(|(hm, hc)| (basis.position(&hm.add(q)).expect("moment basis covers equality shifts"), hc))
                .collect();
            sdp.add_constraint(Constraint { entries: Vec::new(), free, rhs: 0.0 });
        }
    }
    sdp.add_constraint(Constraint { entries: Vec::new(), free: vec![(0, 1.0)], rhs: 1.0 });
    for (m, c) in t.objective.terms() {
        let idx = basis.position(m).ok_or(Error::OrderTooSmall { min_d: RelaxationOrder::min_d(t) })?;
        sdp.objective.free.push((idx, c));
    }
    Ok(CompiledMoment { sdp, basis, k, r })
}

/// Moments `mu_alpha` up to a degree.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentVector {
    pub k: usize,
    pub degree: usize,
    pub values: BTreeMap<MultiIndex, f64>,
}

impl MomentVector {
    pub fn from_basis(basis: &MonomialBasis, values: &[f64]) -> Self {
        MomentVector {
            k: basis.num_vars(),
            degree: basis.degree(),
            values: basis.iter().cloned().zip(values.iter().copied()).collect(),
        }
    }

    /// Moments of the point mass at `u`.
    pub fn dirac(u: &[f64], degree: usize) -> Self {
        let basis = MonomialBasis::new(u.len(), degree);
        let vals: Vec<f64> = basis.iter().map(|m| m.eval(u)).collect();
        Self::from_basis(&basis, &vals)
    }

    pub fn get(&self, m: &MultiIndex) -> f64 {
        self.values.get(m).copied().unwrap_or(0.0)
    }

    pub fn mass(&self) -> f64 {
        self.get(&MultiIndex::zero(self.k))
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.values_mut().for_each(|v| *v *= s);
        out
    }

    /// `M_r(mu)` indexed by the degree-`r` basis.
    pub fn moment_matrix(&self, r: usize) -> DMatrix<f64> {
        let b = MonomialBasis::new(self.k, r.min(self.degree / 2));
        DMatrix::from_fn(b.len(), b.len(), |i, j| self.get(&b.get(i).add(b.get(j))))
    }

    /// `sum_alpha p_alpha mu_alpha`.
    pub fn integrate(&self, p: &Polynomial) -> f64 {
        p.terms().map(|(m, c)| c * self.get(m)).sum()
    }
}

/// Mean of the measure: `mu_{e_i} / mu_0`.
pub fn extract_minimizer(mu: &MomentVector) -> Result<Vec<f64>> {
    let m0 = mu.mass();
    if !(m0 >= 1e-9) {
        return Err(Error::VanishingMass(m0));
    }
    Ok((0..mu.k).map(|i| mu.get(&MultiIndex::unit(mu.k, i)) / m0).collect())
}

/// Tolerance on `sigma_2 / sigma_1` for declaring exact recovery.
pub const RANK_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct RecoveryReport {
    pub exact: bool,
    pub rank_ratio: f64,
    pub certificate_residual: f64,
}

/// `sigma_2 / sigma_1` of a symmetric matrix.
pub fn rank_ratio(m: &DMatrix<f64>) -> f64 {
    if m.nrows() < 2 {
        return 0.0;
    }
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().map(|e| e.abs()).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if ev[0] == 0.0 {
        return 0.0;
    }
    ev[1] / ev[0]
}

/// Rank test on the truncated moment matrix `M_s(mu)`, `s = floor(deg f / 2)`
/// (at least 1), plus the coefficient residual of the Putinar identity
/// rebuilt from the SOS solution.  Moments above the objective's degree are
/// not pinned by it and an interior-point solution spreads them.
pub fn recovery_report(mu: &MomentVector, compiled: &CompiledSos, sol: &SdpSolution) -> RecoveryReport {
    let fdeg = compiled.objective.degree().max(compiled.denominator.degree());
    let s = (fdeg / 2).clamp(1, compiled.system.layout.r);
    let rank = rank_ratio(&mu.moment_matrix(s));
    let lambda = sol.x_free[compiled.lambda];
    let target = &compiled.objective - &compiled.denominator.scale(lambda);
    let certificate_residual = compiled.system.residual(&target, sol);
    RecoveryReport { exact: rank <= RANK_TOL, rank_ratio: rank, certificate_residual }
}

/// A solved SOS relaxation.
#[derive(Clone, Debug)]
pub struct Relaxation {
    pub compiled: CompiledSos,
    pub solution: SdpSolution,
    pub order: RelaxationOrder,
}

impl Relaxation {
    pub fn status(&self) -> SolveStatus {
        self.solution.status
    }

    pub fn lower_bound(&self) -> f64 {
        self.solution.x_free[self.compiled.lambda]
    }

    /// Moments read off the equality multipliers (`mu = -y`).
    pub fn moments(&self) -> MomentVector {
        let y: Vec<f64> = self.solution.y.iter().map(|v| -v).collect();
        MomentVector::from_basis(&self.compiled.system.layout.rows, &y)
    }

    pub fn minimizer(&self) -> Result<Vec<f64>> {
        extract_minimizer(&self.moments())
    }

    pub fn recovery(&self) -> RecoveryReport {
        recovery_report(&self.moments(), &self.compiled, &self.solution)
    }

    /// Whether the rebuilt Putinar identity holds to `1e-6 (1 + max coeff)`.
    pub fn certificate_ok(&self) -> bool {
        let r = self.recovery();
        r.certificate_residual <= 1e-6 * (1.0 + self.compiled.objective.max_abs_coeff())
    }
}

pub fn solve_sos(t: &TemplateProblem, order: RelaxationOrder, settings: &SolverSettings) -> Result<Relaxation> {
    let compiled = compile_sos(t, order)?;
    let solution = solve(compiled.sdp(), settings)?;
    Ok(Relaxation { compiled, solution, order })
}

pub fn solve_sos_ratio(
    numerator: &Polynomial,
    denominator: &Polynomial,
    domain: &SemialgebraicDomain,
    order: RelaxationOrder,
    settings: &SolverSettings,
) -> Result<Relaxation> {
    let compiled = compile_sos_ratio(numerator, denominator, domain, order)?;
    let solution = solve(compiled.sdp(), settings)?;
    Ok(Relaxation { compiled, solution, order })
}

/// Solved moment program.
#[derive(Clone, Debug)]
pub struct MomentRelaxation {
    pub compiled: CompiledMoment,
    pub solution: SdpSolution,
}

impl MomentRelaxation {
    pub fn value(&self) -> f64 {
        self.solution.primal_objective
    }

    pub fn moments(&self) -> MomentVector {
        MomentVector::from_basis(&self.compiled.basis, &self.solution.x_free)
    }
}

pub fn solve_moment(t: &TemplateProblem, order: RelaxationOrder, settings: &SolverSettings) -> Result<MomentRelaxation> {
    let compiled = compile_moment(t, order)?;
    let solution = solve(&compiled.sdp, settings)?;
    Ok(MomentRelaxation { compiled, solution })
}

/// Outcome of searching for `-1 = s_0 + sum g_i s_i + sum h_j p_j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmptinessCertificate {
    /// True when the residual bound proves the domain empty.
    pub valid: bool,
    /// Upper bound on `|1 + s_0 + ...|` over the unit box.
    pub residual_bound: f64,
    pub status: SolveStatus,
}

/// Looks for a Positivstellensatz-style proof that `domain` is empty.
/// Assumes the domain lies in `[0, 1]^k` (true for every canonical domain
/// and their products) when bounding the residual.
pub fn emptiness_certificate(domain: &SemialgebraicDomain, r: usize, settings: &SolverSettings) -> Result<EmptinessCertificate> {
    let mut sys = PutinarSystem::new(domain, r)?;
    let k = domain.k;
    sys.add_target_constant(&Polynomial::constant(k, -1.0))?;
    // Minimize total trace to keep the certificate bounded.
    for (&blk, basis) in sys.layout.gram_blocks.clone().iter().zip(sys.layout.gram_bases.clone()) {
        for a in 0..basis.len() {
            sys.sdp.objective.entries.push(Entry::new(blk, a, a, 1.0));
        }
    }
    let sol = solve(&sys.sdp, settings)?;
    if !matches!(sol.status, SolveStatus::Optimal | SolveStatus::Inaccurate | SolveStatus::IterLimit) {
        return Ok(EmptinessCertificate { valid: false, residual_bound: f64::INFINITY, status: sol.status });
    }
    let target = Polynomial::constant(k, -1.0);
    let bound = residual_l1(&sys, &target, &sol);
    Ok(EmptinessCertificate { valid: bound < 0.5, residual_bound: bound, status: sol.status })
}

/// Sum of |coefficient| of the identity error plus the worst-case
/// contribution of negative Gram eigenvalues, both over the unit box.
pub fn residual_l1(sys: &PutinarSystem, target: &Polynomial, sol: &SdpSolution) -> f64 {
    let k = sys.layout.k;
    let mut rhs = Polynomial::zero(k);
    let one = Polynomial::constant(k, 1.0);
    let weights: Vec<&Polynomial> = std::iter::once(&one).chain(sys.domain.inequalities.iter()).collect();
    let mut eig_part = 0.0;
    for (i, g) in weights.iter().enumerate() {
        let x = &sol.x[sys.layout.gram_blocks[i]];
        rhs = &rhs + &(*g * &gram_polynomial(&sys.layout.gram_bases[i], x));
        let e = sosgeom_sdp::linalg::min_eigenvalue(x);
        if e < 0.0 {
            let gmax: f64 = g.terms().map(|(_, c)| c.abs()).sum();
            eig_part += -e * sys.layout.gram_bases[i].len() as f64 * gmax;
        }
    }
    for (j, h) in sys.domain.equalities.iter().enumerate() {
        let off = sys.layout.eq_offsets[j];
        let p = Polynomial::from_terms(
            k,
            sys.layout.eq_bases[j].iter().enumerate().map(|(i, m)| (m.clone(), sol.x_free[off + i])),
        )
        .expect("basis matches variable count");
        rhs = &rhs + &(h * &p);
    }
    let diff = target - &rhs;
    diff.terms().map(|(_, c)| c.abs()).sum::<f64>() + eig_part
}
