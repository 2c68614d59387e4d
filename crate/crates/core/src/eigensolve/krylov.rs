//! Matrix-free 5-point Laplacian on a node subset, symmetric Gauss-Seidel
//! preconditioning, and preconditioned conjugate gradients.

use crate::grid::Mask;

const NONE: u32 = u32::MAX;

/// `-Δ_h - shift` restricted to the nodes of a mask, zero Dirichlet data
/// everywhere else. Unknowns are numbered in increasing lattice order, so
/// left/down neighbors always precede a node.
pub(crate) struct MaskedLaplacian {
    /// Lattice index of each unknown.
    pub nodes: Vec<usize>,
    nbr: Vec<[u32; 4]>,
    inv_h2: f64,
}

impl MaskedLaplacian {
    pub fn new(allowed: &Mask) -> Self {
        let d = &allowed.domain;
        let mut slot = vec![NONE; d.len()];
        let nodes: Vec<usize> = allowed.indices().collect();
        for (k, &p) in nodes.iter().enumerate() {
            slot[p] = k as u32;
        }
        let nbr = nodes
            .iter()
            .map(|&p| {
                let mut out = [NONE; 4];
                for (o, q) in out.iter_mut().zip(d.neighbors(p)) {
                    if let Some(q) = q {
                        *o = slot[q];
                    }
                }
                out
            })
            .collect();
        MaskedLaplacian { nodes, nbr, inv_h2: 1.0 / (d.h * d.h) }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn diag(&self, shift: f64) -> f64 {
        4.0 * self.inv_h2 - shift
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64], shift: f64) {
        let d = self.diag(shift);
        for (k, nb) in self.nbr.iter().enumerate() {
            let mut s = 0.0;
            for &q in nb {
                if q != NONE {
                    s += x[q as usize];
                }
            }
            y[k] = d * x[k] - self.inv_h2 * s;
        }
    }

    /// Symmetric Gauss-Seidel preconditioner `z = M^{-1} r` with
    /// `M = (D + L) D^{-1} (D + U)`.
    pub fn precondition(&self, r: &[f64], z: &mut [f64], shift: f64) {
        let d = self.diag(shift);
        let c = self.inv_h2;
        for k in 0..self.len() {
            let mut s = r[k];
            for &q in &self.nbr[k] {
                if q != NONE && (q as usize) < k {
                    s += c * z[q as usize];
                }
            }
            z[k] = s / d;
        }
        for k in (0..self.len()).rev() {
            let mut s = 0.0;
            for &q in &self.nbr[k] {
                if q != NONE && (q as usize) > k {
                    s += z[q as usize];
                }
            }
            z[k] += c * s / d;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum CgOutcome {
    Converged {
        iterations: usize,
    },
    MaxIterations {
        iterations: usize,
        relres: f64,
    },
    /// The shifted operator is not positive definite.
    Indefinite,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `(A - shift) x = b` starting from the contents of `x`.
pub(crate) fn pcg(op: &MaskedLaplacian, shift: f64, b: &[f64], x: &mut [f64], rtol: f64, max_iter: usize) -> CgOutcome {
    let n = op.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return CgOutcome::Converged { iterations: 0 };
    }
    let mut r = vec![0.0; n];
    op.apply(x, &mut r, shift);
    for k in 0..n {
        r[k] = b[k] - r[k];
    }
    let mut z = vec![0.0; n];
    op.precondition(&r, &mut z, shift);
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut relres = dot(&r, &r).sqrt() / bnorm;
    for it in 0..max_iter {
        if relres <= rtol {
            return CgOutcome::Converged { iterations: it };
        }
        op.apply(&p, &mut q, shift);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            return CgOutcome::Indefinite;
        }
        let alpha = rz / pq;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * q[k];
        }
        relres = dot(&r, &r).sqrt() / bnorm;
        op.precondition(&r, &mut z, shift);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    if relres <= rtol {
        CgOutcome::Converged { iterations: max_iter }
    } else {
        CgOutcome::MaxIterations { iterations: max_iter, relres }
    }
}
