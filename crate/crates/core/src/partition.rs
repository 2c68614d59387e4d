//! Alternating ground-state relaxation for `k` components with pairwise
//! support distance at least `r`, the cutoff competitor, and r-sweeps.
//!
//! A pass solves each component on its allowed region (the domain minus the
//! `(r - h)`-neighborhood of the other supports) and then tries to move each
//! shared interface toward the side with the smaller boundary flux. Block
//! solves alone never move an interface, since the support of a ground state
//! fills its allowed region.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eigensolve::{first_dirichlet_eig_with, EigenOptions, EigenResult};
use crate::error::{Result, SegError};
use crate::grid::{distance_to, edt_squared, gradient_magnitude, norms, GridDomain, Mask, Point, ScalarField};
use crate::stats::{fit_through_origin, linear_fit};

const MAX_RESEEDS: usize = 50;
const LLOYD_ITERATIONS: usize = 10;
const MAX_BAND: usize = 8;
/// Relative flux margin below which interface nodes stay put.
const FLUX_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionProblem {
    #[serde(skip)]
    pub domain: Option<Arc<GridDomain>>,
    pub k: usize,
    pub r: f64,
    pub seed: u64,
    pub tol_outer: f64,
    pub tol_eig: f64,
    pub max_outer: usize,
    pub support_threshold: f64,
    /// Initial Voronoi sites; random (Lloyd-relaxed) sites when absent.
    pub sites: Option<Vec<Point>>,
}

impl PartitionProblem {
    pub fn new(domain: &Arc<GridDomain>, k: usize, r: f64) -> Self {
        PartitionProblem {
            domain: Some(Arc::clone(domain)),
            k,
            r,
            seed: 0,
            tol_outer: 1e-6,
            tol_eig: 1e-8,
            max_outer: 200,
            support_threshold: 1e-3,
            sites: None,
        }
    }

    pub fn domain(&self) -> Result<&Arc<GridDomain>> {
        self.domain.as_ref().ok_or_else(|| SegError::invalid("partition problem has no domain"))
    }

    pub fn with_r(&self, r: f64) -> Self {
        PartitionProblem { r, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.domain()?;
        if self.k == 0 {
            return Err(SegError::invalid("k must be at least 1"));
        }
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(SegError::invalid("r must be nonnegative"));
        }
        if !(0.0..=0.1).contains(&self.support_threshold) {
            return Err(SegError::invalid("support threshold must lie in [0, 0.1]"));
        }
        if !(self.tol_eig > 0.0) || !(self.tol_outer >= 0.0) || self.max_outer == 0 {
            return Err(SegError::invalid("tolerances must be positive and max_outer at least 1"));
        }
        if let Some(s) = &self.sites {
            if s.len() != self.k {
                return Err(SegError::invalid(format!("{} sites given for k = {}", s.len(), self.k)));
            }
        }
        let diam = d.diameter();
        if self.r >= diam / self.k as f64 {
            return Err(SegError::InfeasibleR(format!(
                "r = {} is not below diam/k = {:.6}",
                self.r,
                diam / self.k as f64
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionState {
    /// L2-normalized, nonnegative, zero off the matching support.
    pub fields: Vec<ScalarField>,
    pub supports: Vec<Mask>,
    /// Rayleigh quotients of the stored fields.
    pub lambdas: Vec<f64>,
    pub c: f64,
    pub outer_iterations: usize,
    /// True when `max_outer` was reached before the stopping rule fired.
    pub stalled: bool,
}

impl PartitionState {
    pub fn k(&self) -> usize {
        self.fields.len()
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.fields[0].domain
    }

    /// Smallest distance between nodes of two different supports
    /// (`+∞` for `k = 1`).
    pub fn min_pairwise_distance(&self) -> Result<f64> {
        let mut best = f64::INFINITY;
        for i in 0..self.k() {
            if self.supports[i].is_empty() {
                continue;
            }
            let dist = distance_to(&self.supports[i])?;
            for j in 0..self.k() {
                if j != i {
                    best = self.supports[j].indices().map(|p| dist[p]).fold(best, f64::min);
                }
            }
        }
        Ok(best)
    }

    pub fn is_feasible(&self, r: f64) -> Result<bool> {
        let h = self.domain().h;
        Ok(self.min_pairwise_distance()? >= r - h - 1e-9 * h)
    }

    fn recompute_c(&mut self) {
        let order = canonical_order(self);
        self.c = order.iter().map(|&i| self.lambdas[i]).sum();
    }

    pub fn manifest(&self, p: &PartitionProblem) -> Manifest {
        Manifest {
            k: self.k(),
            r: p.r,
            lambdas: self.lambdas.clone(),
            c: self.c,
            seed: p.seed,
            tolerances: Tolerances {
                eig: p.tol_eig,
                outer: p.tol_outer,
                support_threshold: p.support_threshold,
                max_outer: p.max_outer,
            },
            outer_iterations: self.outer_iterations,
            stalled: self.stalled,
            pass_style: PASS_STYLE.into(),
        }
    }
}

/// Block order of every pass.
pub const PASS_STYLE: &str = "gauss-seidel";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub eig: f64,
    pub outer: f64,
    pub support_threshold: f64,
    pub max_outer: usize,
}

/// JSON companion of the `k` SPF1 fields of a saved state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub k: usize,
    pub r: f64,
    pub lambdas: Vec<f64>,
    pub c: f64,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub outer_iterations: usize,
    pub stalled: bool,
    pub pass_style: String,
}

/// Components ordered by the lowest lattice index of their support, so the
/// sequence of block solves does not depend on labels.
fn canonical_order(s: &PartitionState) -> Vec<usize> {
    let mut order: Vec<usize> = (0..s.k()).collect();
    order.sort_by_key(|&i| (s.supports[i].indices().next().unwrap_or(usize::MAX), i));
    order
}

fn dist2(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Nearest-site assignment; nodes equidistant from two sites stay unassigned.
fn voronoi(d: &Arc<GridDomain>, sites: &[Point]) -> Vec<Mask> {
    let mut cells: Vec<Mask> = sites.iter().map(|_| Mask::empty(d)).collect();
    let tie = 1e-9 * d.h * d.h;
    for p in (0..d.len()).filter(|&p| d.mask[p]) {
        let x = d.coords(p);
        let mut best = (f64::INFINITY, usize::MAX);
        let mut tied = false;
        for (s, site) in sites.iter().enumerate() {
            let e = dist2(x, *site);
            if e < best.0 - tie {
                best = (e, s);
                tied = false;
            } else if (e - best.0).abs() <= tie {
                tied = true;
            }
        }
        if !tied && best.1 != usize::MAX {
            cells[best.1].set(p, true);
        }
    }
    cells
}

fn random_sites(d: &Arc<GridDomain>, k: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let nodes: Vec<usize> = (0..d.len()).filter(|&p| d.mask[p]).collect();
    let mut picked: Vec<usize> = Vec::with_capacity(k);
    while picked.len() < k.min(nodes.len()) {
        let p = nodes[rng.gen_range(0..nodes.len())];
        if !picked.contains(&p) {
            picked.push(p);
        }
    }
    let mut sites: Vec<Point> = picked.iter().map(|&p| d.coords(p)).collect();
    for _ in 0..LLOYD_ITERATIONS {
        let cells = voronoi(d, &sites);
        for (site, cell) in sites.iter_mut().zip(&cells) {
            let n = cell.count();
            if n > 0 {
                let mut c = [0.0, 0.0];
                for p in cell.indices() {
                    let x = d.coords(p);
                    c[0] += x[0];
                    c[1] += x[1];
                }
                *site = [c[0] / n as f64, c[1] / n as f64];
            }
        }
    }
    sites
}

/// Solves the ground state on `allowed`, keeps `{u > τ max u}` and
/// renormalizes. Returns the field, its support and its Rayleigh quotient.
fn block_solve(allowed: &Mask, guess: Option<&ScalarField>, p: &PartitionProblem) -> Result<(ScalarField, Mask, f64)> {
    let opts = EigenOptions { tol: p.tol_eig, ..Default::default() };
    let e = first_dirichlet_eig_with(allowed, &opts, guess.map(|g| g.values()))?;
    Ok(truncate(&e.field, p.support_threshold))
}

fn truncate(field: &ScalarField, tau: f64) -> (ScalarField, Mask, f64) {
    let support = field.support_above(tau * field.max());
    let kept = field.restricted(&support);
    let kept = kept.scaled(1.0 / kept.l2());
    let lambda = kept.rayleigh_quotient().unwrap_or(f64::INFINITY);
    (kept, support, lambda)
}

/// `mask \ (others ∪ {dist(·, others) < r - h}) \ forbidden`.
fn allowed_region(s: &PartitionState, i: usize, r: f64, forbidden: Option<&Mask>) -> Result<Mask> {
    let d = s.domain();
    let mut others = Mask::empty(d);
    for (j, sj) in s.supports.iter().enumerate() {
        if j != i {
            others = others.union(sj);
        }
    }
    let gap = r - d.h;
    let mut allowed = if others.is_empty() {
        d.full_mask()
    } else if gap > 0.0 {
        let dist = distance_to(&others)?;
        let slack = 1e-9 * d.h;
        Mask::from_fn(d, |p| !others.get(p) && dist[p] >= gap - slack)
    } else {
        others.complement()
    };
    if let Some(f) = forbidden {
        allowed = allowed.difference(f);
    }
    Ok(allowed)
}

/// Voronoi cells of seeded sites, each eroded by `r/2 + h` against the other
/// cells, with the ground state of each cell.
pub fn init_partition(p: &PartitionProblem) -> Result<PartitionState> {
    p.validate()?;
    let d = p.domain()?;
    let erosion = p.r / 2.0 + d.h;
    let slack = 1e-9 * d.h;
    for attempt in 0..MAX_RESEEDS {
        let sites = match (&p.sites, attempt) {
            (Some(s), 0) => s.clone(),
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(p.seed.wrapping_add(attempt as u64 * 0x9e37_79b9));
                random_sites(d, p.k, &mut rng)
            }
        };
        if sites.len() < p.k {
            break;
        }
        let cells = voronoi(d, &sites);
        let mut eroded = Vec::with_capacity(p.k);
        for i in 0..p.k {
            let mut others = Mask::empty(d);
            for (j, c) in cells.iter().enumerate() {
                if j != i {
                    others = others.union(c);
                }
            }
            let cell = if others.is_empty() {
                cells[i].clone()
            } else {
                let dist = distance_to(&others)?;
                Mask::from_fn(d, |q| cells[i].get(q) && dist[q] > erosion + slack)
            };
            eroded.push(cell);
        }
        if eroded.iter().any(|c| c.is_empty()) {
            log::debug!("init attempt {attempt}: a cell vanished under erosion");
            continue;
        }
        let mut state = PartitionState {
            fields: Vec::with_capacity(p.k),
            supports: Vec::with_capacity(p.k),
            lambdas: Vec::with_capacity(p.k),
            c: 0.0,
            outer_iterations: 0,
            stalled: false,
        };
        for cell in &eroded {
            let (f, s, l) = block_solve(cell, None, p)?;
            state.fields.push(f);
            state.supports.push(s);
            state.lambdas.push(l);
        }
        if !state.is_feasible(p.r)? {
            continue;
        }
        state.recompute_c();
        return Ok(state);
    }
    Err(SegError::InfeasibleR(format!("no feasible initial partition after {MAX_RESEEDS} attempts at r = {}", p.r)))
}

/// One pass of block solves in canonical order. A block update that would
/// raise that component's Rayleigh quotient is discarded.
pub fn relax_step(s: &PartitionState, p: &PartitionProblem) -> Result<PartitionState> {
    let mut st = s.clone();
    for i in canonical_order(s) {
        let allowed = allowed_region(&st, i, p.r, None)?;
        if allowed.is_empty() {
            return Err(SegError::SqueezedOut(i));
        }
        let (f, sup, l) = block_solve(&allowed, Some(&st.fields[i]), p)?;
        if l <= st.lambdas[i] {
            st.fields[i] = f;
            st.supports[i] = sup;
            st.lambdas[i] = l;
        }
    }
    st.recompute_c();
    Ok(st)
}

/// Support nodes with a 4-neighbor that is interior to the domain but not in
/// the support.
fn free_boundary(support: &Mask) -> Vec<usize> {
    let d = &support.domain;
    support
        .indices()
        .filter(|&q| d.neighbors(q).iter().any(|n| n.is_some_and(|n| d.mask[n] && !support.get(n))))
        .collect()
}

struct PairGeometry {
    /// Distance of every lattice node to each support of the pair.
    dist_i: Vec<f64>,
    dist_j: Vec<f64>,
    gap: f64,
}

fn pair_geometry(s: &PartitionState, i: usize, j: usize) -> Result<Option<PairGeometry>> {
    if s.supports[i].is_empty() || s.supports[j].is_empty() {
        return Ok(None);
    }
    let dist_i = distance_to(&s.supports[i])?;
    let dist_j = distance_to(&s.supports[j])?;
    let gap = s.supports[j].indices().map(|q| dist_i[q]).fold(f64::INFINITY, f64::min);
    Ok(Some(PairGeometry { dist_i, dist_j, gap }))
}

/// Nodes each side of the `(i, j)` interface should give up: band nodes
/// within `w` layers of the other support where the other side's boundary
/// flux `u/h` is larger than this side's.
fn transfer_sets(s: &PartitionState, i: usize, j: usize, g: &PairGeometry, w: usize) -> (Mask, Mask) {
    let d = s.domain();
    let h = d.h;
    let reach = g.gap + 2.5 * h;
    let facing = |own: usize, dist_other: &[f64]| -> Vec<(Point, f64)> {
        free_boundary(&s.supports[own])
            .into_iter()
            .filter(|&q| dist_other[q] <= reach)
            .map(|q| (d.coords(q), s.fields[own].get(q) / h))
            .collect()
    };
    let fi = facing(i, &g.dist_j);
    let fj = facing(j, &g.dist_i);
    let nearest = |x: Point, set: &[(Point, f64)]| {
        set.iter().min_by(|a, b| dist2(x, a.0).total_cmp(&dist2(x, b.0))).map_or(0.0, |e| e.1)
    };
    let depth = g.gap + (w as f64 - 0.5) * h;
    let band = |own: usize, dist_other: &[f64], own_face: &[(Point, f64)], other_face: &[(Point, f64)]| {
        let mut out = Mask::empty(d);
        for q in s.supports[own].indices().filter(|&q| dist_other[q] < depth) {
            let x = d.coords(q);
            if nearest(x, other_face) > (1.0 + FLUX_MARGIN) * nearest(x, own_face) {
                out.set(q, true);
            }
        }
        out
    };
    let give_i = band(i, &g.dist_j, &fi, &fj);
    let give_j = band(j, &g.dist_i, &fj, &fi);
    (give_i, give_j)
}

/// Shrinks supports `i` and `j` by the given sets and re-solves both in
/// canonical order, each barred from the nodes it gave up.
fn interface_trial(
    s: &PartitionState,
    i: usize,
    j: usize,
    give_i: &Mask,
    give_j: &Mask,
    p: &PartitionProblem,
) -> Result<Option<PartitionState>> {
    let mut st = s.clone();
    st.supports[i] = st.supports[i].difference(give_i);
    st.supports[j] = st.supports[j].difference(give_j);
    if st.supports[i].is_empty() || st.supports[j].is_empty() {
        return Ok(None);
    }
    let (first, second) =
        if canonical_order(s).iter().position(|&c| c == i) < canonical_order(s).iter().position(|&c| c == j) {
            ((i, give_i), (j, give_j))
        } else {
            ((j, give_j), (i, give_i))
        };
    for (c, give) in [first, second] {
        let allowed = allowed_region(&st, c, p.r, Some(give))?;
        if allowed.is_empty() {
            return Ok(None);
        }
        let (f, sup, l) = block_solve(&allowed, Some(&st.fields[c]), p)?;
        st.fields[c] = f;
        st.supports[c] = sup;
        st.lambdas[c] = l;
    }
    st.recompute_c();
    Ok(Some(st))
}

/// One interface sweep over adjacent pairs. Band widths adapt per pair:
/// doubled after an accepted move, halved after a rejected one.
fn migrate(s: &mut PartitionState, p: &PartitionProblem, bands: &mut BTreeMap<(usize, usize), usize>) -> Result<()> {
    let order = canonical_order(s);
    let h = s.domain().h;
    for a in 0..order.len() {
        for b in a + 1..order.len() {
            let (i, j) = (order[a].min(order[b]), order[a].max(order[b]));
            let Some(g) = pair_geometry(s, i, j)? else { continue };
            if g.gap > p.r + 3.0 * h {
                continue;
            }
            let mut w = *bands.get(&(i, j)).unwrap_or(&2);
            loop {
                let (give_i, give_j) = transfer_sets(s, i, j, &g, w);
                if give_i.is_empty() && give_j.is_empty() {
                    break;
                }
                match interface_trial(s, i, j, &give_i, &give_j, p)? {
                    Some(t) if t.c < s.c && t.is_feasible(p.r)? => {
                        *s = t;
                        bands.insert((i, j), (2 * w).min(MAX_BAND));
                        break;
                    }
                    _ if w > 1 => w /= 2,
                    _ => {
                        bands.insert((i, j), 1);
                        break;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Runs passes until the relative energy decrease stays below `tol_outer`
/// for three consecutive passes or `max_outer` is reached.
pub fn optimize(p: &PartitionProblem) -> Result<PartitionState> {
    let s = init_partition(p)?;
    optimize_from(p, s)
}

/// [`optimize`] from a given feasible state.
pub fn optimize_from(p: &PartitionProblem, start: PartitionState) -> Result<PartitionState> {
    p.validate()?;
    if start.k() != p.k {
        return Err(SegError::invalid("state and problem disagree on k"));
    }
    if !start.is_feasible(p.r)? {
        return Err(SegError::ConstraintViolated(format!("start state is not feasible at r = {}", p.r)));
    }
    let mut state = start;
    let mut best = state.clone();
    let mut bands = BTreeMap::new();
    let mut quiet = 0;
    let mut passes = 0;
    while passes < p.max_outer && quiet < 3 {
        passes += 1;
        let before = state.c;
        state = relax_step(&state, p)?;
        migrate(&mut state, p, &mut bands)?;
        if state.c < best.c || passes == 1 && state.c <= best.c {
            best = state.clone();
        }
        let rel = (before - state.c) / before.abs().max(f64::MIN_POSITIVE);
        log::debug!("pass {passes}: c = {:.12} (relative decrease {rel:.3e})", state.c);
        if rel < p.tol_outer {
            quiet += 1;
        } else {
            quiet = 0;
        }
    }
    best.outer_iterations = passes;
    best.stalled = quiet < 3;
    Ok(best)
}

/// Cutoff competitor built from an `r = 0` state.
#[derive(Debug, Clone)]
pub struct Competitor {
    pub state: PartitionState,
    pub energy: f64,
    /// `|𝒩_r|`: area of the nodes closer than `r` to the nodal set.
    pub nodal_area: f64,
    /// `|𝒩_r| / (2r)`; `None` at `r = 0`.
    pub minkowski_ratio: Option<f64>,
}

/// Distance of each node to the nodal set, the place where two supports
/// meet: unsupported nodes within `2h` of two different supports, and the
/// midlines between adjacent supports. A node of support `i` gets the
/// smaller of its distance to a nodal node and its distance to the other
/// supports minus `h/2`; nodal
/// nodes get 0 and the remaining unsupported nodes (treated as part of the
/// domain boundary) `+∞`.
fn nodal_distance(s: &PartitionState) -> Result<Vec<f64>> {
    let d = s.domain();
    let near = 2.0 * d.h + 1e-9 * d.h;
    let dists: Vec<Option<Vec<f64>>> = s
        .supports
        .iter()
        .map(|m| if m.is_empty() { Ok(None) } else { distance_to(m).map(Some) })
        .collect::<Result<_>>()?;
    let supported = s.supports.iter().fold(Mask::empty(d), |acc, m| acc.union(m));
    let nodal =
        Mask::from_fn(d, |q| !supported.get(q) && dists.iter().flatten().filter(|dist| dist[q] <= near).count() >= 2);
    let to_nodal = if nodal.is_empty() { None } else { Some(distance_to(&nodal)?) };
    let mut out = vec![f64::INFINITY; d.len()];
    for q in nodal.indices() {
        out[q] = 0.0;
    }
    for (i, sup) in s.supports.iter().enumerate() {
        for q in sup.indices() {
            let mut best = to_nodal.as_ref().map_or(f64::INFINITY, |t| t[q]);
            for (j, dist) in dists.iter().enumerate() {
                if let (true, Some(dist)) = (j != i, dist) {
                    best = best.min(dist[q] - 0.5 * d.h);
                }
            }
            out[q] = best;
        }
    }
    Ok(out)
}

/// Multiplies each `u_i` by `η = clamp((dist - r/2)/(r/2), 0, 1)`, with
/// `dist` the distance to the nodal set, and renormalizes.
pub fn cutoff_competitor(s0: &PartitionState, r: f64) -> Result<Competitor> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(SegError::invalid("r must be nonnegative"));
    }
    let d = s0.domain();
    let delta = nodal_distance(s0)?;
    let eta = |q: usize| if r == 0.0 { 1.0 } else { ((delta[q] - r / 2.0) / (r / 2.0)).clamp(0.0, 1.0) };
    let mut st = s0.clone();
    for i in 0..s0.k() {
        let cut = s0.fields[i].values().iter().enumerate().map(|(q, v)| v * eta(q)).collect();
        let f = ScalarField::from_values(d, cut)?;
        let n = f.l2();
        if n == 0.0 {
            return Err(SegError::Annihilated(i));
        }
        let f = f.scaled(1.0 / n);
        st.supports[i] = f.support_above(0.0);
        st.lambdas[i] = f.rayleigh_quotient().unwrap_or(f64::INFINITY);
        st.fields[i] = f;
    }
    st.recompute_c();
    let count = (0..d.len()).filter(|&q| d.mask[q] && delta[q] < r).count();
    let nodal_area = count as f64 * d.h * d.h;
    let minkowski_ratio = (r > 0.0).then(|| nodal_area / (2.0 * r));
    Ok(Competitor { energy: st.c, state: st, nodal_area, minkowski_ratio })
}

/// Fit of `energy(r) - c₀ = C r` over competitors at the given radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetitorFit {
    pub radii: Vec<f64>,
    pub energies: Vec<f64>,
    pub minkowski: Vec<f64>,
    pub c0: f64,
    pub slope: f64,
    pub relative_residual: f64,
    /// `max/min - 1` of the Minkowski ratios.
    pub minkowski_spread: f64,
}

pub fn competitor_fit(s0: &PartitionState, radii: &[f64]) -> Result<CompetitorFit> {
    if radii.iter().any(|&r| !(r > 0.0)) || radii.len() < 2 {
        return Err(SegError::invalid("need at least two positive radii"));
    }
    let mut energies = Vec::new();
    let mut minkowski = Vec::new();
    for &r in radii {
        let c = cutoff_competitor(s0, r)?;
        energies.push(c.energy);
        minkowski.push(c.minkowski_ratio.unwrap_or(0.0));
    }
    let excess: Vec<f64> = energies.iter().map(|e| e - s0.c).collect();
    let (slope, relative_residual) =
        fit_through_origin(radii, &excess).ok_or_else(|| SegError::invalid("degenerate competitor fit"))?;
    let max = minkowski.iter().cloned().fold(0.0, f64::max);
    let min = minkowski.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(CompetitorFit {
        radii: radii.to_vec(),
        energies,
        minkowski,
        c0: s0.c,
        slope,
        relative_residual,
        minkowski_spread: if min > 0.0 { max / min - 1.0 } else { f64::INFINITY },
    })
}

/// Location of the largest gradient relative to the support boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientLocation {
    pub max_grad: f64,
    /// Largest gradient over support nodes within `3h` of the complement.
    pub boundary_grad: f64,
    pub ratio: f64,
}

pub fn gradient_location(field: &ScalarField, support: &Mask) -> GradientLocation {
    let d = &field.domain;
    let g = gradient_magnitude(field);
    let sites: Vec<bool> = (0..d.len()).map(|q| !support.get(q)).collect();
    let dist2 = edt_squared(d.nx, d.ny, &sites);
    let mut max_grad: f64 = 0.0;
    let mut boundary_grad: f64 = 0.0;
    for q in support.indices() {
        let v = g.get(q);
        max_grad = max_grad.max(v);
        if dist2[q] <= 9.0 + 1e-9 {
            boundary_grad = boundary_grad.max(v);
        }
    }
    let ratio = if max_grad > 0.0 { boundary_grad / max_grad } else { 0.0 };
    GradientLocation { max_grad, boundary_grad, ratio }
}

pub fn gradient_location_check(e: &EigenResult) -> GradientLocation {
    gradient_location(&e.field, &e.support)
}

/// Fraction of free-boundary support nodes that have another component's
/// support within `r + 2h`.
pub fn exterior_sphere_fraction(s: &PartitionState, r: f64) -> Result<f64> {
    let d = s.domain();
    let (mut hit, mut total) = (0usize, 0usize);
    for i in 0..s.k() {
        let mut others = Mask::empty(d);
        for (j, m) in s.supports.iter().enumerate() {
            if j != i {
                others = others.union(m);
            }
        }
        if others.is_empty() {
            continue;
        }
        let dist = distance_to(&others)?;
        for q in free_boundary(&s.supports[i]) {
            total += 1;
            if dist[q] <= r + 2.0 * d.h + 1e-9 * d.h {
                hit += 1;
            }
        }
    }
    Ok(if total == 0 { 1.0 } else { hit as f64 / total as f64 })
}

/// Greedy support matching by Jaccard overlap: entry `i` is the component of
/// `s` matched to component `i` of `reference`.
pub fn match_components(s: &PartitionState, reference: &PartitionState) -> Vec<usize> {
    let jaccard = |a: &Mask, b: &Mask| {
        let inter = a.intersection(b).count();
        let uni = a.union(b).count();
        if uni == 0 {
            0.0
        } else {
            inter as f64 / uni as f64
        }
    };
    let mut used = vec![false; s.k()];
    let mut out = Vec::with_capacity(reference.k());
    for i in 0..reference.k() {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for j in (0..s.k()).filter(|&j| !used[j]) {
            let v = jaccard(&reference.supports[i], &s.supports[j]);
            if v > best.0 {
                best = (v, j);
            }
        }
        if best.1 != usize::MAX {
            used[best.1] = true;
        }
        out.push(best.1);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub r: f64,
    pub c: f64,
    pub lambdas: Vec<f64>,
    pub lip_max: f64,
    pub linf_max: f64,
    pub holder_05: f64,
    /// `max_i ‖u_{i,r} - u_{i,0}‖_∞` after matching.
    pub dist_to_u0: f64,
    /// `‖u_{i,r} - u_{i,0}‖_∞ / ‖u_{i,0}‖_∞` per component of the `r = 0` state.
    pub dist_to_u0_relative: Vec<f64>,
    pub exterior_fraction: f64,
    /// Smallest gradient-location ratio over the components.
    pub grad_ratio_min: f64,
    pub outer_iterations: usize,
    pub stalled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub r: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMeta {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub k: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub pass_style: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    /// Successful rows in increasing `r`.
    pub rows: Vec<SweepRow>,
    pub failures: Vec<SweepFailure>,
    /// Linear fit of `c_r` against `r`.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub r_squared: Option<f64>,
    pub metadata: SweepMeta,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let k = self.metadata.k;
        let mut out = String::from("r,c_r");
        for i in 1..=k {
            out.push_str(&format!(",lambda_{i}"));
        }
        out.push_str(",lip_max,linf_max,holder_05,dist_to_u0\n");
        for row in &self.rows {
            out.push_str(&format!("{},{}", row.r, row.c));
            for l in &row.lambdas {
                out.push_str(&format!(",{l}"));
            }
            out.push_str(&format!(",{},{},{},{}\n", row.lip_max, row.linf_max, row.holder_05, row.dist_to_u0));
        }
        out
    }

    pub fn success_fraction(&self) -> f64 {
        let total = self.rows.len() + self.failures.len();
        if total == 0 {
            0.0
        } else {
            self.rows.len() as f64 / total as f64
        }
    }
}

/// Optimizes at every `r`, largest first, each warm-started from the
/// previous optimum (still feasible, since the constraint relaxes).
pub fn run_sweep(p_base: &PartitionProblem, r_values: &[f64]) -> Result<SweepReport> {
    run_sweep_states(p_base, r_values).map(|(rep, _)| rep)
}

/// [`run_sweep`], also returning the optimized states in increasing `r`.
pub fn run_sweep_states(
    p_base: &PartitionProblem,
    r_values: &[f64],
) -> Result<(SweepReport, Vec<(f64, PartitionState)>)> {
    if r_values.is_empty() {
        return Err(SegError::invalid("no r values"));
    }
    let mut rs = r_values.to_vec();
    rs.sort_by(|a, b| b.total_cmp(a));
    if rs.windows(2).any(|w| w[0] == w[1]) {
        return Err(SegError::invalid("r values must be distinct"));
    }
    let d = p_base.domain()?;
    let mut states: Vec<(f64, PartitionState)> = Vec::new();
    let mut failures = Vec::new();
    let mut warm: Option<PartitionState> = None;
    for &r in &rs {
        let p = p_base.with_r(r);
        let result = match warm.take() {
            Some(s) => optimize_from(&p, s),
            None => optimize(&p),
        };
        match result {
            Ok(s) => {
                log::info!("r = {r}: c = {:.8} after {} passes", s.c, s.outer_iterations);
                warm = Some(s.clone());
                states.push((r, s));
            }
            Err(e) => {
                log::warn!("r = {r} failed: {e}");
                failures.push(SweepFailure { r, error: e.to_string() });
            }
        }
    }
    states.reverse();
    let reference = states.iter().find(|(r, _)| *r == 0.0).map(|(_, s)| s.clone());
    let mut rows = Vec::with_capacity(states.len());
    for (r, s) in &states {
        let mut lip_max: f64 = 0.0;
        let mut linf_max: f64 = 0.0;
        let mut holder: f64 = 0.0;
        let mut grad_ratio_min = f64::INFINITY;
        for (f, sup) in s.fields.iter().zip(&s.supports) {
            let n = norms(f, 0.5)?;
            lip_max = lip_max.max(n.lip);
            linf_max = linf_max.max(n.linf);
            holder = holder.max(n.holder);
            grad_ratio_min = grad_ratio_min.min(gradient_location(f, sup).ratio);
        }
        let (dist_to_u0, dist_to_u0_relative) = match &reference {
            Some(s0) => {
                let m = match_components(s, s0);
                let rel: Vec<f64> = m
                    .iter()
                    .enumerate()
                    .map(|(i0, &j)| s.fields[j].sub(&s0.fields[i0]).max_abs() / s0.fields[i0].max_abs())
                    .collect();
                let abs =
                    m.iter().enumerate().map(|(i0, &j)| s.fields[j].sub(&s0.fields[i0]).max_abs()).fold(0.0, f64::max);
                (abs, rel)
            }
            None => (f64::NAN, Vec::new()),
        };
        rows.push(SweepRow {
            r: *r,
            c: s.c,
            lambdas: s.lambdas.clone(),
            lip_max,
            linf_max,
            holder_05: holder,
            dist_to_u0,
            dist_to_u0_relative,
            exterior_fraction: exterior_sphere_fraction(s, *r)?,
            grad_ratio_min,
            outer_iterations: s.outer_iterations,
            stalled: s.stalled,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.r).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.c).collect();
    let fit = linear_fit(&xs, &ys);
    let report = SweepReport {
        rows,
        failures,
        slope: fit.map(|f| f.slope),
        intercept: fit.map(|f| f.intercept),
        r_squared: fit.map(|f| f.r_squared),
        metadata: SweepMeta {
            nx: d.nx,
            ny: d.ny,
            h: d.h,
            k: p_base.k,
            seed: p_base.seed,
            tolerances: Tolerances {
                eig: p_base.tol_eig,
                outer: p_base.tol_outer,
                support_threshold: p_base.support_threshold,
                max_outer: p_base.max_outer,
            },
            pass_style: PASS_STYLE.into(),
        },
    };
    Ok((report, states))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigensolve::{bessel_first_zero, first_dirichlet_eig};
    use crate::grid::{build_domain, Shape};
    use std::f64::consts::PI;

    fn rectangle(n: usize) -> Arc<GridDomain> {
        build_domain(Shape::Rectangle { a: 2.0, b: 1.0 }, n).unwrap()
    }

    /// Brute-force smallest distance between nodes of different supports.
    fn brute_gap(s: &PartitionState) -> f64 {
        let d = s.domain();
        let mut best = f64::INFINITY;
        for i in 0..s.k() {
            for j in i + 1..s.k() {
                for a in s.supports[i].indices() {
                    for b in s.supports[j].indices() {
                        best = best.min(dist2(d.coords(a), d.coords(b)).sqrt());
                    }
                }
            }
        }
        best
    }

    fn check_invariants(s: &PartitionState, p: &PartitionProblem) {
        let h = s.domain().h;
        assert!(brute_gap(s) >= p.r - h - 1e-9 * h);
        let mut sum = 0.0;
        for i in 0..s.k() {
            let f = &s.fields[i];
            assert!((f.l2() - 1.0).abs() < 1e-10);
            assert!(f.values().iter().all(|&v| v >= 0.0));
            assert!(f.values().iter().enumerate().all(|(q, &v)| v == 0.0 || s.supports[i].get(q)));
            let rq = f.rayleigh_quotient().unwrap();
            assert!((rq - s.lambdas[i]).abs() <= 1e-12 * rq);
            sum += rq;
        }
        assert!((sum - s.c).abs() <= 10.0 * p.tol_eig);
    }

    #[test]
    fn symmetric_sites_split_the_rectangle() {
        let d = rectangle(32);
        let mut p = PartitionProblem::new(&d, 2, 0.0);
        p.sites = Some(vec![[0.5, 0.5], [1.5, 0.5]]);
        let s = init_partition(&p).unwrap();
        for q in s.supports[0].indices() {
            assert!(d.coords(q)[0] < 1.0);
        }
        for q in s.supports[1].indices() {
            assert!(d.coords(q)[0] > 1.0);
        }
        assert!((s.lambdas[0] - s.lambdas[1]).abs() < 1e-8 * s.lambdas[0]);
        check_invariants(&s, &p);
        // The optimum is a fixed point of the pass.
        let s = optimize_from(&p, s).unwrap();
        assert!(!s.stalled);
        let next = relax_step(&s, &p).unwrap();
        assert!((s.c - next.c).abs() <= 1e-6 * s.c, "{} {}", s.c, next.c);
    }

    #[test]
    fn infeasible_separation() {
        let d = rectangle(16);
        let p = PartitionProblem::new(&d, 2, 1.9);
        assert!(matches!(init_partition(&p), Err(SegError::InfeasibleR(_))));
        assert!(init_partition(&p).unwrap_err().to_string().starts_with("infeasible r"));
    }

    #[test]
    fn single_component_is_the_ground_state() {
        let d = build_domain(Shape::LShape { a: 1.0 }, 32).unwrap();
        let p = PartitionProblem::new(&d, 1, 0.0);
        let s = optimize(&p).unwrap();
        let e = first_dirichlet_eig(&d.full_mask(), 1e-10).unwrap();
        assert!((s.c - e.lambda).abs() < 1e-6 * e.lambda);
    }

    #[test]
    fn rectangle_optimum_beats_two_squares() {
        let d = rectangle(32);
        let mut p = PartitionProblem::new(&d, 2, 0.0);
        p.seed = 5;
        let s = optimize(&p).unwrap();
        check_invariants(&s, &p);
        assert!(s.c <= 4.0 * PI * PI * 1.01, "{}", s.c);
    }

    #[test]
    fn disk_optimum_beats_diameter_split() {
        let d = build_domain(Shape::Disk { radius: 1.0 }, 48).unwrap();
        let p = PartitionProblem::new(&d, 2, 0.0);
        let s = optimize(&p).unwrap();
        let j = bessel_first_zero(1.0).unwrap();
        assert!(s.c <= 2.0 * j * j * 1.01, "{}", s.c);
    }

    #[test]
    fn relabeling_sites_permutes_components() {
        let d = rectangle(24);
        let mut p = PartitionProblem::new(&d, 2, 1.0 / 12.0);
        p.sites = Some(vec![[0.4, 0.3], [1.3, 0.8]]);
        let a = optimize(&p).unwrap();
        p.sites = Some(vec![[1.3, 0.8], [0.4, 0.3]]);
        let b = optimize(&p).unwrap();
        assert_eq!(a.c, b.c);
        assert_eq!(a.lambdas[0], b.lambdas[1]);
        assert_eq!(a.supports[0].bits(), b.supports[1].bits());
    }

    #[test]
    fn energy_never_increases_along_passes() {
        let d = rectangle(24);
        for seed in 0..10 {
            let mut p = PartitionProblem::new(&d, 3, 0.05);
            p.seed = seed;
            let mut s = init_partition(&p).unwrap();
            for _ in 0..3 {
                let next = relax_step(&s, &p).unwrap();
                assert!(next.c <= s.c + 10.0 * p.tol_eig);
                check_invariants(&next, &p);
                s = next;
            }
        }
    }

    #[test]
    fn cutoff_at_zero_is_identity() {
        let d = rectangle(32);
        let mut p = PartitionProblem::new(&d, 2, 0.0);
        p.sites = Some(vec![[0.5, 0.5], [1.5, 0.5]]);
        let s = init_partition(&p).unwrap();
        let c = cutoff_competitor(&s, 0.0).unwrap();
        assert!((c.energy - s.c).abs() <= 1e-10 * s.c);
        let c = cutoff_competitor(&s, 0.125).unwrap();
        assert!(c.state.is_feasible(0.125).unwrap());
        assert!(c.energy > s.c);
    }

    #[test]
    fn gradient_peaks_on_the_boundary_of_a_square() {
        let d = build_domain(Shape::Square { a: 1.0 }, 64).unwrap();
        let e = first_dirichlet_eig(&d.full_mask(), 1e-9).unwrap();
        let g = gradient_location_check(&e);
        assert!((g.ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matching_prefers_overlap() {
        let d = rectangle(24);
        let mut p = PartitionProblem::new(&d, 2, 0.0);
        p.sites = Some(vec![[0.5, 0.5], [1.5, 0.5]]);
        let a = init_partition(&p).unwrap();
        p.sites = Some(vec![[1.5, 0.5], [0.5, 0.5]]);
        let b = init_partition(&p).unwrap();
        assert_eq!(match_components(&b, &a), vec![1, 0]);
    }
}
