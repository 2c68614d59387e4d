//! Masked lattice domains, exact Euclidean distance transforms, morphology,
//! and discrete differential operators.
//!
//! Nodes are stored row-major: node `(i, j)` lives at index `j * nx + i` and at
//! physical position `origin + (i h, j h)`. Dirichlet boundaries are realized
//! by node exclusion: off-mask nodes always carry the value 0.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SegError};

pub type Point = [f64; 2];

/// Continuum shapes that can be sampled onto a lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    /// Disk of radius `radius` centered at the origin.
    Disk { radius: f64 },
    /// `[0, a] x [0, b]`.
    Rectangle { a: f64, b: f64 },
    /// `[0, a]^2`.
    Square { a: f64 },
    /// `[0, a]^2` minus the closed upper-right quadrant `[a/2, a]^2`.
    LShape { a: f64 },
    /// Disk of radius `radius` at the origin minus the closed ball of radius
    /// `inner` centered at `(-inner, 0)`; the two boundaries touch at the origin.
    DiskMinusBall { radius: f64, inner: f64 },
}

impl Shape {
    /// Length that the resolution `n` subdivides.
    pub fn extent(&self) -> f64 {
        match *self {
            Shape::Disk { radius } | Shape::DiskMinusBall { radius, .. } => 2.0 * radius,
            Shape::Rectangle { a, b } => a.min(b),
            Shape::Square { a } | Shape::LShape { a } => a,
        }
    }

    fn params(&self) -> Vec<f64> {
        match *self {
            Shape::Disk { radius } => vec![radius],
            Shape::Rectangle { a, b } => vec![a, b],
            Shape::Square { a } | Shape::LShape { a } => vec![a],
            Shape::DiskMinusBall { radius, inner } => vec![radius, inner],
        }
    }

    /// Axis-aligned bounding box `(lower-left, upper-right)`.
    fn bounds(&self) -> (Point, Point) {
        match *self {
            Shape::Disk { radius } | Shape::DiskMinusBall { radius, .. } => ([-radius, -radius], [radius, radius]),
            Shape::Rectangle { a, b } => ([0.0, 0.0], [a, b]),
            Shape::Square { a } | Shape::LShape { a } => ([0.0, 0.0], [a, a]),
        }
    }

    /// Strict interior test with a relative slack `eps` so that nodes sitting
    /// on the boundary up to rounding are excluded.
    pub fn contains(&self, p: Point, eps: f64) -> bool {
        let [x, y] = p;
        match *self {
            Shape::Disk { radius } => x.hypot(y) < radius - eps,
            Shape::Rectangle { a, b } => x > eps && x < a - eps && y > eps && y < b - eps,
            Shape::Square { a } => x > eps && x < a - eps && y > eps && y < a - eps,
            Shape::LShape { a } => {
                let in_square = x > eps && x < a - eps && y > eps && y < a - eps;
                let in_notch = x >= 0.5 * a - eps && y >= 0.5 * a - eps;
                in_square && !in_notch
            }
            Shape::DiskMinusBall { radius, inner } => x.hypot(y) < radius - eps && (x + inner).hypot(y) > inner + eps,
        }
    }
}

/// Rectangular lattice with a boolean interior mask.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDomain {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    /// Physical coordinates of node `(0, 0)`.
    pub origin: Point,
    pub mask: Vec<bool>,
    pub shape: Option<Shape>,
}

/// Samples `shape` on a lattice with spacing `extent / n`.
pub fn build_domain(shape: Shape, n: usize) -> Result<Arc<GridDomain>> {
    if n < 2 {
        return Err(SegError::invalid(format!("resolution n = {n} must be at least 2")));
    }
    let params = shape.params();
    if params.iter().any(|p| !p.is_finite()) {
        return Err(SegError::invalid("shape parameters must be finite"));
    }
    if params.iter().any(|&p| p <= 0.0) {
        return Err(SegError::EmptyDomain);
    }
    if let Shape::DiskMinusBall { radius, inner } = shape {
        if inner >= radius {
            return Err(SegError::invalid("disk_minus_ball requires inner < radius"));
        }
    }
    let h = shape.extent() / n as f64;
    let (lo, hi) = shape.bounds();
    let nx = ((hi[0] - lo[0]) / h + 1e-9).floor() as usize + 1;
    let ny = ((hi[1] - lo[1]) / h + 1e-9).floor() as usize + 1;
    let eps = 1e-9 * h;
    let mut mask = vec![false; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let p = [lo[0] + i as f64 * h, lo[1] + j as f64 * h];
            mask[j * nx + i] = shape.contains(p, eps);
        }
    }
    let domain = GridDomain { nx, ny, h, origin: lo, mask, shape: Some(shape) };
    if domain.interior_count() == 0 {
        return Err(SegError::EmptyDomain);
    }
    Ok(Arc::new(domain))
}

impl GridDomain {
    /// Builds a domain from an explicit mask. Nodes on the outer frame of the
    /// lattice are forced off so every interior node has four neighbors.
    pub fn from_mask(nx: usize, ny: usize, h: f64, origin: Point, mut mask: Vec<bool>) -> Result<Arc<Self>> {
        if nx < 3 || ny < 3 || mask.len() != nx * ny {
            return Err(SegError::invalid("mask dimensions do not match nx * ny (need nx, ny >= 3)"));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(SegError::invalid("grid spacing must be positive"));
        }
        for j in 0..ny {
            for i in 0..nx {
                if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 {
                    mask[j * nx + i] = false;
                }
            }
        }
        let d = GridDomain { nx, ny, h, origin, mask, shape: None };
        if d.interior_count() == 0 {
            return Err(SegError::EmptyDomain);
        }
        Ok(Arc::new(d))
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn interior_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> Point {
        let (i, j) = self.ij(idx);
        [self.origin[0] + i as f64 * self.h, self.origin[1] + j as f64 * self.h]
    }

    /// Index of the lattice node closest to `p`, if `p` lies within the lattice.
    pub fn nearest_node(&self, p: Point) -> Option<usize> {
        let fi = ((p[0] - self.origin[0]) / self.h).round();
        let fj = ((p[1] - self.origin[1]) / self.h).round();
        if fi < 0.0 || fj < 0.0 || fi >= self.nx as f64 || fj >= self.ny as f64 {
            return None;
        }
        Some(self.index(fi as usize, fj as usize))
    }

    /// Four-neighborhood of `idx` (left, right, down, up), `None` past the frame.
    #[inline]
    pub fn neighbors(&self, idx: usize) -> [Option<usize>; 4] {
        let (i, j) = self.ij(idx);
        [
            (i > 0).then(|| idx - 1),
            (i + 1 < self.nx).then(|| idx + 1),
            (j > 0).then(|| idx - self.nx),
            (j + 1 < self.ny).then(|| idx + self.nx),
        ]
    }

    /// Largest distance between two interior nodes (bounding-box estimate).
    pub fn diameter(&self) -> f64 {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for (idx, _) in self.mask.iter().enumerate().filter(|(_, &b)| b) {
            let p = self.coords(idx);
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (hi[0] - lo[0] + 2.0 * self.h).hypot(hi[1] - lo[1] + 2.0 * self.h)
    }

    pub fn full_mask(self: &Arc<Self>) -> Mask {
        Mask { domain: Arc::clone(self), bits: self.mask.clone() }
    }
}

/// Subset of a domain's interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub domain: Arc<GridDomain>,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(domain: &Arc<GridDomain>) -> Self {
        Mask { domain: Arc::clone(domain), bits: vec![false; domain.len()] }
    }

    /// Builds a mask, clipping `bits` to the domain interior.
    pub fn from_bits(domain: &Arc<GridDomain>, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != domain.len() {
            return Err(SegError::invalid("mask length does not match the domain"));
        }
        let bits = bits.iter().zip(&domain.mask).map(|(&b, &m)| b && m).collect();
        Ok(Mask { domain: Arc::clone(domain), bits })
    }

    pub fn from_fn(domain: &Arc<GridDomain>, f: impl Fn(usize) -> bool) -> Self {
        let bits = (0..domain.len()).map(|i| domain.mask[i] && f(i)).collect();
        Mask { domain: Arc::clone(domain), bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    pub fn set(&mut self, idx: usize, value: bool) {
        self.bits[idx] = value && self.domain.mask[idx];
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn union(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn difference(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a && !b)
    }

    /// Interior nodes of the domain not in `self`.
    pub fn complement(&self) -> Mask {
        Mask::from_fn(&self.domain, |i| !self.bits[i])
    }

    pub fn is_subset(&self, other: &Mask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn intersects(&self, other: &Mask) -> bool {
        self.bits.iter().zip(&other.bits).any(|(&a, &b)| a && b)
    }

    fn zip_with(&self, other: &Mask, f: impl Fn(bool, bool) -> bool) -> Mask {
        debug_assert_eq!(self.bits.len(), other.bits.len());
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect();
        Mask { domain: Arc::clone(&self.domain), bits }
    }

    /// Nodes of the mask with at least one 4-neighbor outside the mask.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        self.indices().filter(|&p| self.domain.neighbors(p).iter().any(|n| n.is_none_or(|q| !self.bits[q]))).collect()
    }

    /// Labels 4-connected components; returns one mask per component in
    /// order of their lowest node index.
    pub fn components(&self) -> Vec<Mask> {
        let mut label = vec![usize::MAX; self.bits.len()];
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for start in self.indices() {
            if label[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut comp = vec![false; self.bits.len()];
            label[start] = id;
            stack.push(start);
            while let Some(p) = stack.pop() {
                comp[p] = true;
                for q in self.domain.neighbors(p).into_iter().flatten() {
                    if self.bits[q] && label[q] == usize::MAX {
                        label[q] = id;
                        stack.push(q);
                    }
                }
            }
            out.push(Mask { domain: Arc::clone(&self.domain), bits: comp });
        }
        out
    }
}

/// Real value per node, zero off the domain mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub domain: Arc<GridDomain>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(domain: &Arc<GridDomain>) -> Self {
        ScalarField { domain: Arc::clone(domain), values: vec![0.0; domain.len()] }
    }

    /// Validates finiteness and the zero-off-mask invariant.
    pub fn from_values(domain: &Arc<GridDomain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(SegError::invalid("field length does not match the domain"));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(SegError::invalid(format!("non-finite value at node {i}")));
            }
            if !domain.mask[i] && v != 0.0 {
                return Err(SegError::invalid(format!("nonzero value at off-mask node {i}")));
            }
        }
        Ok(ScalarField { domain: Arc::clone(domain), values })
    }

    /// Samples `f` at interior nodes.
    pub fn from_fn(domain: &Arc<GridDomain>, mut f: impl FnMut(Point) -> f64) -> Self {
        let values = (0..domain.len()).map(|i| if domain.mask[i] { f(domain.coords(i)) } else { 0.0 }).collect();
        ScalarField { domain: Arc::clone(domain), values }
    }

    pub(crate) fn from_raw(domain: &Arc<GridDomain>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), domain.len());
        ScalarField { domain: Arc::clone(domain), values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    /// Copy of the field with values outside `keep` set to zero.
    pub fn restricted(&self, keep: &Mask) -> ScalarField {
        let values = self.values.iter().enumerate().map(|(i, &v)| if keep.get(i) { v } else { 0.0 }).collect();
        ScalarField { domain: Arc::clone(&self.domain), values }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        let values =
            self.values.iter().enumerate().map(|(i, &v)| if self.domain.mask[i] { f(v) } else { 0.0 }).collect();
        ScalarField { domain: Arc::clone(&self.domain), values }
    }

    pub fn scaled(&self, s: f64) -> ScalarField {
        self.map(|v| s * v)
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        ScalarField { domain: Arc::clone(&self.domain), values }
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        ScalarField { domain: Arc::clone(&self.domain), values }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `sqrt(sum f^2 h^2)`.
    pub fn l2(&self) -> f64 {
        let h2 = self.domain.h * self.domain.h;
        (self.values.iter().map(|v| v * v).sum::<f64>() * h2).sqrt()
    }

    pub fn dot(&self, other: &ScalarField) -> f64 {
        let h2 = self.domain.h * self.domain.h;
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() * h2
    }

    /// Dirichlet energy of the 5-point stencil: the sum over all lattice edges
    /// of squared differences, with off-mask nodes contributing zeros.
    /// Equals `<f, -Δ_h f>` and approximates `∫|∇f|²` in two dimensions.
    pub fn dirichlet_energy(&self) -> f64 {
        let d = &self.domain;
        let mut e = 0.0;
        for j in 0..d.ny {
            for i in 0..d.nx {
                let p = d.index(i, j);
                let v = self.values[p];
                if i + 1 < d.nx {
                    let w = v - self.values[p + 1];
                    e += w * w;
                }
                if j + 1 < d.ny {
                    let w = v - self.values[p + d.nx];
                    e += w * w;
                }
            }
        }
        e
    }

    /// Rayleigh quotient `dirichlet_energy / ||f||²`.
    pub fn rayleigh_quotient(&self) -> Option<f64> {
        let n2 = self.l2().powi(2);
        (n2 > 0.0).then(|| self.dirichlet_energy() / n2)
    }

    /// Support `{f > level}`.
    pub fn support_above(&self, level: f64) -> Mask {
        Mask::from_fn(&self.domain, |i| self.values[i] > level)
    }
}

/// Exact squared Euclidean distances (in index units) to the nearest `true`
/// node, by separable lower envelopes of parabolas. Unreachable entries are
/// `f64::INFINITY`.
pub(crate) fn edt_squared(nx: usize, ny: usize, sites: &[bool]) -> Vec<f64> {
    let inf = f64::INFINITY;
    // Column pass: 1-D distance along y.
    let mut g = vec![inf; nx * ny];
    for i in 0..nx {
        let mut last: Option<usize> = None;
        for j in 0..ny {
            if sites[j * nx + i] {
                last = Some(j);
            }
            if let Some(l) = last {
                g[j * nx + i] = (j - l) as f64;
            }
        }
        let mut next: Option<usize> = None;
        for j in (0..ny).rev() {
            if sites[j * nx + i] {
                next = Some(j);
            }
            if let Some(n) = next {
                let d = (n - j) as f64;
                if d < g[j * nx + i] {
                    g[j * nx + i] = d;
                }
            }
        }
    }
    // Row pass: lower envelope of parabolas (q - x)^2 + g(q)^2.
    let mut out = vec![inf; nx * ny];
    let mut v = vec![0usize; nx];
    let mut z = vec![0.0f64; nx + 1];
    let mut f = vec![0.0f64; nx];
    for j in 0..ny {
        let row = &g[j * nx..(j + 1) * nx];
        let mut k: isize = -1;
        for q in 0..nx {
            if !row[q].is_finite() {
                continue;
            }
            f[q] = row[q] * row[q];
            if k < 0 {
                k = 0;
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                continue;
            }
            loop {
                let p = v[k as usize];
                let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
                if s <= z[k as usize] {
                    k -= 1;
                    if k < 0 {
                        k = 0;
                        v[0] = q;
                        z[0] = f64::NEG_INFINITY;
                        z[1] = f64::INFINITY;
                        break;
                    }
                } else {
                    k += 1;
                    v[k as usize] = q;
                    z[k as usize] = s;
                    z[k as usize + 1] = f64::INFINITY;
                    break;
                }
            }
        }
        if k < 0 {
            continue;
        }
        let mut kk = 0usize;
        for q in 0..nx {
            while z[kk + 1] < q as f64 {
                kk += 1;
            }
            let p = v[kk];
            let dq = q as f64 - p as f64;
            out[j * nx + q] = dq * dq + f[p];
        }
    }
    out
}

/// Mask node farthest from every off-mask node, with that distance (the
/// discrete inradius). Ties go to the lowest index.
pub fn inscribed_center(d: &GridDomain) -> (usize, f64) {
    let sites: Vec<bool> = d.mask.iter().map(|m| !m).collect();
    let dist2 = edt_squared(d.nx, d.ny, &sites);
    let mut best = (0, f64::NEG_INFINITY);
    for p in (0..d.len()).filter(|&p| d.mask[p]) {
        if dist2[p] > best.1 {
            best = (p, dist2[p]);
        }
    }
    (best.0, best.1.sqrt() * d.h)
}

/// Physical distance from every lattice node (on or off the domain mask)
/// to the nearest node of `m`.
pub fn distance_to(m: &Mask) -> Result<Vec<f64>> {
    if m.is_empty() {
        return Err(SegError::invalid("distance transform of an empty mask"));
    }
    let d = &m.domain;
    Ok(edt_squared(d.nx, d.ny, m.bits()).into_iter().map(|s| s.sqrt() * d.h).collect())
}

/// Exact Euclidean distance to the nearest node of `m`, as a field on the
/// domain (zero on `m` and off the domain mask).
pub fn distance_transform(m: &Mask) -> Result<ScalarField> {
    let mut dist = distance_to(m)?;
    for (i, v) in dist.iter_mut().enumerate() {
        if !m.domain.mask[i] {
            *v = 0.0;
        }
    }
    Ok(ScalarField::from_raw(&m.domain, dist))
}

/// Nodes within Euclidean distance `r` of `m`.
pub fn dilate(m: &Mask, r: f64) -> Result<Mask> {
    if !(r >= 0.0) {
        return Err(SegError::invalid(format!("dilation radius {r} must be nonnegative")));
    }
    if r == 0.0 || m.is_empty() {
        return Ok(m.clone());
    }
    let dist = distance_to(m)?;
    let slack = 1e-9 * m.domain.h;
    Ok(Mask::from_fn(&m.domain, |i| dist[i] <= r + slack))
}

/// Nodes of `m` farther than `r` from every domain node outside `m`.
pub fn erode(m: &Mask, r: f64) -> Result<Mask> {
    if !(r >= 0.0) {
        return Err(SegError::invalid(format!("erosion radius {r} must be nonnegative")));
    }
    let outside = m.complement();
    if outside.is_empty() || r == 0.0 {
        return Ok(m.clone());
    }
    let dist = distance_to(&outside)?;
    let slack = 1e-9 * m.domain.h;
    Ok(Mask::from_fn(&m.domain, |i| m.get(i) && dist[i] > r + slack))
}

/// Centered differences at nodes with both axis neighbors on the mask,
/// one-sided differences toward the mask otherwise, zero for isolated nodes.
pub fn discrete_gradient(f: &ScalarField) -> (ScalarField, ScalarField) {
    let d = &f.domain;
    let mut gx = vec![0.0; d.len()];
    let mut gy = vec![0.0; d.len()];
    let inside = |q: Option<usize>| q.filter(|&q| d.mask[q]);
    for p in (0..d.len()).filter(|&p| d.mask[p]) {
        let [l, r, b, t] = d.neighbors(p);
        gx[p] = one_axis(f, p, inside(l), inside(r), d.h);
        gy[p] = one_axis(f, p, inside(b), inside(t), d.h);
    }
    (ScalarField::from_raw(d, gx), ScalarField::from_raw(d, gy))
}

#[inline]
fn one_axis(f: &ScalarField, p: usize, lo: Option<usize>, hi: Option<usize>, h: f64) -> f64 {
    match (lo, hi) {
        (Some(a), Some(b)) => (f.get(b) - f.get(a)) / (2.0 * h),
        (None, Some(b)) => (f.get(b) - f.get(p)) / h,
        (Some(a), None) => (f.get(p) - f.get(a)) / h,
        (None, None) => 0.0,
    }
}

/// Pointwise gradient magnitude.
pub fn gradient_magnitude(f: &ScalarField) -> ScalarField {
    let (gx, gy) = discrete_gradient(f);
    let values = gx.values().iter().zip(gy.values()).map(|(a, b)| a.hypot(*b)).collect();
    ScalarField::from_raw(&f.domain, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l2: f64,
    pub linf: f64,
    pub h1_seminorm: f64,
    pub lip: f64,
    pub alpha: f64,
    pub holder: f64,
}

/// Node count up to which the Hölder seminorm scans every pair.
pub const HOLDER_EXHAUSTIVE_NODES: usize = 64 * 64;
/// Pair count sampled on larger grids.
pub const HOLDER_SAMPLES: usize = 1_000_000;
const HOLDER_SEED: u64 = 0x5e9_a417;

pub fn norms(f: &ScalarField, alpha: f64) -> Result<Norms> {
    let holder = holder_seminorm(f, alpha)?;
    let (gx, gy) = discrete_gradient(f);
    let h2 = f.domain.h * f.domain.h;
    let mut lip: f64 = 0.0;
    let mut h1 = 0.0;
    for (a, b) in gx.values().iter().zip(gy.values()) {
        let g2 = a * a + b * b;
        h1 += g2;
        lip = lip.max(g2.sqrt());
    }
    Ok(Norms { l2: f.l2(), linf: f.max_abs(), h1_seminorm: (h1 * h2).sqrt(), lip, alpha, holder })
}

/// `max |f(x) - f(y)| / |x - y|^alpha` over pairs of interior nodes; every
/// pair on small grids, a fixed-seed sample of pairs otherwise.
pub fn holder_seminorm(f: &ScalarField, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SegError::invalid(format!("Hölder exponent {alpha} must lie in (0, 1)")));
    }
    let d = &f.domain;
    let nodes: Vec<usize> = (0..d.len()).filter(|&i| d.mask[i]).collect();
    let quotient = |a: usize, b: usize| {
        let (pa, pb) = (d.coords(a), d.coords(b));
        let dist = (pa[0] - pb[0]).hypot(pa[1] - pb[1]);
        (f.get(a) - f.get(b)).abs() / dist.powf(alpha)
    };
    let mut best: f64 = 0.0;
    if d.len() <= HOLDER_EXHAUSTIVE_NODES {
        for (k, &a) in nodes.iter().enumerate() {
            for &b in &nodes[k + 1..] {
                best = best.max(quotient(a, b));
            }
        }
    } else if nodes.len() >= 2 {
        let mut rng = ChaCha8Rng::seed_from_u64(HOLDER_SEED);
        for _ in 0..HOLDER_SAMPLES {
            let a = nodes[rng.gen_range(0..nodes.len())];
            let b = nodes[rng.gen_range(0..nodes.len())];
            if a != b {
                best = best.max(quotient(a, b));
            }
        }
    }
    Ok(best)
}

/// Quadrature weights for `∫_{B_r(center)} f`: each node carries `h²` times
/// the fraction of its cell inside the ball, estimated on a `sub x sub`
/// sub-sampling of the cell.
pub fn ball_weights(domain: &GridDomain, center: Point, r: f64, sub: usize) -> Vec<(usize, f64)> {
    let h = domain.h;
    let half_diag = h * std::f64::consts::FRAC_1_SQRT_2;
    let i0 = (((center[0] - r - domain.origin[0]) / h).floor() as isize - 1).max(0) as usize;
    let j0 = (((center[1] - r - domain.origin[1]) / h).floor() as isize - 1).max(0) as usize;
    let i1 = ((((center[0] + r - domain.origin[0]) / h).ceil() as isize + 1).max(0) as usize).min(domain.nx - 1);
    let j1 = ((((center[1] + r - domain.origin[1]) / h).ceil() as isize + 1).max(0) as usize).min(domain.ny - 1);
    let mut out = Vec::new();
    let r2 = r * r;
    for j in j0..=j1 {
        for i in i0..=i1 {
            let idx = domain.index(i, j);
            let p = domain.coords(idx);
            let dc = (p[0] - center[0]).hypot(p[1] - center[1]);
            let w = if dc + half_diag <= r {
                1.0
            } else if dc - half_diag >= r {
                0.0
            } else {
                let mut hits = 0usize;
                for a in 0..sub {
                    for b in 0..sub {
                        let x = p[0] - 0.5 * h + (a as f64 + 0.5) * h / sub as f64 - center[0];
                        let y = p[1] - 0.5 * h + (b as f64 + 0.5) * h / sub as f64 - center[1];
                        if x * x + y * y <= r2 {
                            hits += 1;
                        }
                    }
                }
                hits as f64 / (sub * sub) as f64
            };
            if w > 0.0 {
                out.push((idx, w * h * h));
            }
        }
    }
    out
}

/// Lattice edges `(p, q)` joining a node to its right or upper neighbor whose
/// midpoint lies strictly inside `B_r(center)`, with the midpoint distance to
/// the center, sorted by that distance.
pub fn ball_edges(domain: &GridDomain, center: Point, r: f64) -> Vec<(usize, usize, f64)> {
    let h = domain.h;
    let lo = |c: f64, o: f64| (((c - r - o) / h).floor() as isize - 1).max(0) as usize;
    let hi = |c: f64, o: f64, n: usize| ((((c + r - o) / h).ceil() as isize + 1).max(0) as usize).min(n - 1);
    let (i0, i1) = (lo(center[0], domain.origin[0]), hi(center[0], domain.origin[0], domain.nx));
    let (j0, j1) = (lo(center[1], domain.origin[1]), hi(center[1], domain.origin[1], domain.ny));
    let mut out = Vec::new();
    for j in j0..=j1 {
        for i in i0..=i1 {
            let p = domain.index(i, j);
            let x = domain.coords(p);
            if i + 1 < domain.nx {
                let d = (x[0] + 0.5 * h - center[0]).hypot(x[1] - center[1]);
                if d < r {
                    out.push((p, p + 1, d));
                }
            }
            if j + 1 < domain.ny {
                let d = (x[0] - center[0]).hypot(x[1] + 0.5 * h - center[1]);
                if d < r {
                    out.push((p, p + domain.nx, d));
                }
            }
        }
    }
    out.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    out
}

/// `∫_{B_r(center)} values` with [`ball_weights`].
pub fn ball_integral(domain: &GridDomain, values: &[f64], center: Point, r: f64) -> f64 {
    ball_weights(domain, center, r, 8).iter().map(|&(i, w)| w * values[i]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn frame(n: usize) -> Arc<GridDomain> {
        GridDomain::from_mask(n, n, 1.0, [0.0, 0.0], vec![true; n * n]).unwrap()
    }

    fn brute_distance(m: &Mask) -> Vec<f64> {
        let d = &m.domain;
        let sites: Vec<Point> = m.indices().map(|i| d.coords(i)).collect();
        (0..d.len())
            .map(|i| {
                let p = d.coords(i);
                sites.iter().map(|s| (s[0] - p[0]).hypot(s[1] - p[1])).fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn square_counts_interior_nodes() {
        let d = build_domain(Shape::Square { a: 1.0 }, 4).unwrap();
        assert_eq!((d.nx, d.ny), (5, 5));
        assert_eq!(d.h, 0.25);
        assert_eq!(d.interior_count(), 9);
    }

    #[test]
    fn rectangle_counts_interior_nodes() {
        let d = build_domain(Shape::Rectangle { a: 2.0, b: 1.0 }, 16).unwrap();
        let xs: std::collections::BTreeSet<usize> = (0..d.len()).filter(|&i| d.mask[i]).map(|i| d.ij(i).0).collect();
        let ys: std::collections::BTreeSet<usize> = (0..d.len()).filter(|&i| d.mask[i]).map(|i| d.ij(i).1).collect();
        assert_eq!((xs.len(), ys.len()), (31, 15));
        assert_eq!(d.interior_count(), 31 * 15);
    }

    #[test]
    fn inscribed_center_of_a_disk() {
        let d = build_domain(Shape::Disk { radius: 1.0 }, 40).unwrap();
        let (p, rho) = inscribed_center(&d);
        assert_eq!(d.coords(p), [0.0, 0.0]);
        let nearest_off = (0..d.len())
            .filter(|&q| !d.mask[q])
            .map(|q| d.coords(q)[0].hypot(d.coords(q)[1]))
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(rho, nearest_off, max_relative = 1e-12);
    }

    #[test]
    fn disk_area_matches_monte_carlo() {
        // Monte-Carlo oracle for the disk area on its bounding box.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples = 200_000;
        let hits = (0..samples)
            .filter(|_| {
                let x: f64 = rng.gen_range(-1.0..1.0);
                let y: f64 = rng.gen_range(-1.0..1.0);
                x * x + y * y < 1.0
            })
            .count();
        let mc_area = 4.0 * hits as f64 / samples as f64;
        let d = build_domain(Shape::Disk { radius: 1.0 }, 8).unwrap();
        let area = d.interior_count() as f64 * d.h * d.h;
        assert!((area - mc_area).abs() / mc_area < 0.2, "area {area} vs {mc_area}");
    }

    #[test]
    fn degenerate_shapes_are_empty() {
        assert!(matches!(build_domain(Shape::Square { a: 0.0 }, 16), Err(SegError::EmptyDomain)));
        assert!(matches!(build_domain(Shape::Rectangle { a: 1.0, b: 0.0 }, 16), Err(SegError::EmptyDomain)));
        assert!(build_domain(Shape::DiskMinusBall { radius: 1.0, inner: 1.5 }, 16).is_err());
    }

    #[test]
    fn every_mask_node_lies_inside_the_shape() {
        for shape in
            [Shape::Disk { radius: 1.0 }, Shape::LShape { a: 1.0 }, Shape::DiskMinusBall { radius: 2.0, inner: 1.0 }]
        {
            let d = build_domain(shape, 32).unwrap();
            for i in (0..d.len()).filter(|&i| d.mask[i]) {
                assert!(shape.contains(d.coords(i), 0.0));
            }
        }
    }

    #[test]
    fn distance_examples() {
        let d = frame(12);
        let mut m = Mask::empty(&d);
        m.set(d.index(1, 1), true);
        let dt = distance_to(&m).unwrap();
        assert_eq!(dt[d.index(4, 5)], 5.0);

        let mut two = Mask::empty(&d);
        two.set(d.index(1, 5), true);
        two.set(d.index(11 - 1, 5), true);
        let dt = distance_to(&two).unwrap();
        assert_eq!(dt[d.index(5, 5)], 4.0);
        assert_eq!(dt[d.index(6, 5)], 4.0);

        let all = d.full_mask();
        assert!(distance_transform(&all).unwrap().values().iter().all(|&v| v == 0.0));
        assert!(distance_transform(&Mask::empty(&d)).is_err());
    }

    #[test]
    fn midpoint_distance_on_wide_frame() {
        let d = GridDomain::from_mask(14, 3, 1.0, [0.0, 0.0], vec![true; 42]).unwrap();
        let mut m = Mask::empty(&d);
        m.set(d.index(1, 1), true);
        m.set(d.index(11, 1), true);
        assert_eq!(distance_to(&m).unwrap()[d.index(6, 1)], 5.0);
    }

    #[test]
    fn dilate_single_node_by_two() {
        let d = frame(11);
        let mut m = Mask::empty(&d);
        let c = d.index(5, 5);
        m.set(c, true);
        assert_eq!(dilate(&m, 0.0).unwrap(), m);
        let big = dilate(&m, 2.0).unwrap();
        // (0,0) (±1,0)x4 (±1,±1)x4 (±2,0)x4: 13 nodes.
        assert_eq!(big.count(), 13);
        assert!(big.get(d.index(7, 5)) && big.get(d.index(6, 6)) && !big.get(d.index(7, 6)));
    }

    #[test]
    fn gradient_of_linear_and_constant_fields() {
        let d = build_domain(Shape::Square { a: 1.0 }, 32).unwrap();
        let f = ScalarField::from_fn(&d, |p| p[0]);
        let (gx, gy) = discrete_gradient(&f);
        for i in (0..d.len()).filter(|&i| d.mask[i]) {
            assert!((gx.get(i) - 1.0).abs() < 1e-9);
            assert!(gy.get(i).abs() < 1e-9);
        }
        let c = ScalarField::from_fn(&d, |_| 3.5);
        let (gx, gy) = discrete_gradient(&c);
        assert!(gx.values().iter().chain(gy.values()).all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_of_sine_product_peaks_at_pi() {
        use std::f64::consts::PI;
        let d = build_domain(Shape::Square { a: 1.0 }, 128).unwrap();
        let f = ScalarField::from_fn(&d, |p| (PI * p[0]).sin() * (PI * p[1]).sin());
        let g = gradient_magnitude(&f);
        assert!((g.max() - PI).abs() / PI < 0.02, "max |grad| = {}", g.max());
    }

    #[test]
    fn norms_examples() {
        let d = build_domain(Shape::Square { a: 1.0 }, 16).unwrap();
        let z = norms(&ScalarField::zeros(&d), 0.5).unwrap();
        assert_eq!((z.l2, z.linf, z.h1_seminorm, z.lip, z.holder), (0.0, 0.0, 0.0, 0.0, 0.0));
        for (n, tol) in [(16, 0.13), (64, 0.04), (256, 0.01)] {
            let d = build_domain(Shape::Square { a: 1.0 }, n).unwrap();
            let one = ScalarField::from_fn(&d, |_| 1.0);
            assert!((norms(&one, 0.5).unwrap().l2 - 1.0).abs() < tol);
        }
        assert!(norms(&ScalarField::zeros(&d), 1.0).is_err());
        assert!(norms(&ScalarField::zeros(&d), 0.0).is_err());
    }

    #[test]
    fn linear_field_lipschitz_and_holder() {
        let d = build_domain(Shape::Square { a: 1.0 }, 32).unwrap();
        let f = ScalarField::from_fn(&d, |p| p[0]);
        let nm = norms(&f, 0.5).unwrap();
        assert_relative_eq!(nm.lip, 1.0, epsilon = 1e-9);
        // Exhaustive oracle over node pairs.
        let nodes: Vec<usize> = (0..d.len()).filter(|&i| d.mask[i]).collect();
        let mut best: f64 = 0.0;
        for &a in &nodes {
            for &b in &nodes {
                if a != b {
                    let (pa, pb) = (d.coords(a), d.coords(b));
                    let dist = (pa[0] - pb[0]).hypot(pa[1] - pb[1]);
                    best = best.max((pa[0] - pb[0]).abs() / dist.sqrt());
                }
            }
        }
        assert_relative_eq!(nm.holder, best, epsilon = 1e-12);
        assert!((nm.holder - 1.0).abs() < 0.05);
    }

    #[test]
    fn ball_weights_recover_disk_area() {
        let d = build_domain(Shape::Square { a: 2.0 }, 128).unwrap();
        for r in [0.1, 0.37, 0.8] {
            let area: f64 = ball_weights(&d, [1.0, 1.0], r, 8).iter().map(|w| w.1).sum();
            let exact = std::f64::consts::PI * r * r;
            assert!((area - exact).abs() / exact < 2e-3, "r={r}: {area} vs {exact}");
        }
    }

    #[test]
    fn components_split_disconnected_masks() {
        let d = frame(10);
        let m = Mask::from_fn(&d, |i| {
            let (x, _) = d.ij(i);
            x <= 3 || x >= 6
        });
        assert_eq!(m.components().len(), 2);
    }

    fn random_mask(d: &Arc<GridDomain>, seed: u64, density: f64) -> Mask {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bits = (0..d.len()).map(|_| rng.gen_bool(density)).collect();
        Mask::from_bits(d, bits).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn edt_matches_brute_force(seed in 0u64..10_000, density in 0.01f64..0.3) {
            let d = frame(16);
            let m = random_mask(&d, seed, density);
            prop_assume!(!m.is_empty());
            let fast = distance_to(&m).unwrap();
            let slow = brute_distance(&m);
            for (a, b) in fast.iter().zip(&slow) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn edt_is_one_lipschitz(seed in 0u64..10_000) {
            let d = frame(20);
            let m = random_mask(&d, seed, 0.05);
            prop_assume!(!m.is_empty());
            let dt = distance_to(&m).unwrap();
            for a in 0..d.len() {
                for b in a + 1..d.len() {
                    let (pa, pb) = (d.coords(a), d.coords(b));
                    prop_assert!((dt[a] - dt[b]).abs() <= (pa[0] - pb[0]).hypot(pa[1] - pb[1]) + 1e-12);
                }
            }
        }

        #[test]
        fn dilation_composes_and_is_monotone(seed in 0u64..10_000, a in 0.0f64..3.0, b in 0.0f64..3.0) {
            let d = frame(16);
            let m = random_mask(&d, seed, 0.04);
            prop_assume!(!m.is_empty());
            // Lattice dilations compose up to one cell diagonal: the
            // intermediate point of a straight path is rarely a node.
            let first = dilate(&m, a).unwrap();
            let once = dilate(&m, a + b).unwrap();
            prop_assert!(dilate(&first, b).unwrap().is_subset(&once));
            let padded = dilate(&first, b + std::f64::consts::SQRT_2 * d.h).unwrap();
            prop_assert!(once.is_subset(&padded));
            let bigger = m.union(&random_mask(&d, seed + 1, 0.04));
            prop_assert!(dilate(&m, a).unwrap().is_subset(&dilate(&bigger, a).unwrap()));
            prop_assert!(dilate(&m, a.min(b)).unwrap().is_subset(&dilate(&m, a.max(b)).unwrap()));
        }

        #[test]
        fn l2_triangle_inequality(seed in 0u64..10_000) {
            let d = build_domain(Shape::Disk { radius: 1.0 }, 24).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = ScalarField::from_fn(&d, |_| rng.gen_range(-1.0..1.0));
            let mut rng2 = ChaCha8Rng::seed_from_u64(seed ^ 0xff);
            let g = ScalarField::from_fn(&d, |_| rng2.gen_range(-1.0..1.0));
            prop_assert!(f.add(&g).l2() <= f.l2() + g.l2() + 1e-12);
        }
    }
}
