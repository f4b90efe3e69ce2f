//! Brute-force oracles shared by the integration suites. Everything here is
//! written from the textbook definitions and uses no crate internals beyond
//! reading model parameters.
#![allow(dead_code)]

pub mod criteria;

use atriamap_core::rbm::RbmModel;
use atriamap_core::volume::VoxelGrid;

/// Binary vector of `len` bits for the integer `k`, least significant first.
pub fn bits(k: usize, len: usize) -> Vec<f64> {
    (0..len).map(|i| ((k >> i) & 1) as f64).collect()
}

/// `-b.v - c.h - v.W.h`, summed term by term.
pub fn energy(model: &RbmModel, v: &[f64], h: &[f64]) -> f64 {
    let mut e = 0.0;
    for (i, vi) in v.iter().enumerate() {
        e -= model.visible_bias[i] * vi;
        for (j, hj) in h.iter().enumerate() {
            e -= vi * model.weights[[i, j]] * hj;
        }
    }
    for (j, hj) in h.iter().enumerate() {
        e -= model.hidden_bias[j] * hj;
    }
    e
}

/// Exact joint distribution: `joint[vk][hk] = exp(-E) / Z`.
pub struct Enumeration {
    pub m: usize,
    pub n: usize,
    pub joint: Vec<Vec<f64>>,
}

impl Enumeration {
    pub fn new(model: &RbmModel) -> Self {
        let (m, n) = (model.n_visible(), model.n_hidden());
        let unnorm: Vec<Vec<f64>> = (0..1 << m)
            .map(|vk| (0..1 << n).map(|hk| (-energy(model, &bits(vk, m), &bits(hk, n))).exp()).collect())
            .collect();
        let z: f64 = unnorm.iter().flatten().sum();
        let joint = unnorm.into_iter().map(|row| row.into_iter().map(|p| p / z).collect()).collect();
        Self { m, n, joint }
    }

    pub fn visible_marginal(&self) -> Vec<f64> {
        self.joint.iter().map(|row| row.iter().sum()).collect()
    }

    /// `P(h_j = 1 | v)` for the visible state `vk`.
    pub fn hidden_conditional(&self, vk: usize) -> Vec<f64> {
        let row = &self.joint[vk];
        let pv: f64 = row.iter().sum();
        (0..self.n)
            .map(|j| row.iter().enumerate().filter(|(hk, _)| hk >> j & 1 == 1).map(|(_, p)| p).sum::<f64>() / pv)
            .collect()
    }

    /// `P(v_i = 1 | h)` for the hidden state `hk`.
    pub fn visible_conditional(&self, hk: usize) -> Vec<f64> {
        let ph: f64 = self.joint.iter().map(|row| row[hk]).sum();
        (0..self.m)
            .map(|i| self.joint.iter().enumerate().filter(|(vk, _)| vk >> i & 1 == 1).map(|(_, row)| row[hk]).sum::<f64>() / ph)
            .collect()
    }

    /// Exact gradient of the mean log-likelihood of `data` (visible states
    /// as integers) with respect to `(W, b, c)`, flattened in that order.
    pub fn log_likelihood_gradient(&self, data: &[usize]) -> Vec<f64> {
        let (m, n) = (self.m, self.n);
        let mut pos = vec![0.0; m * n + m + n];
        for &vk in data {
            let v = bits(vk, m);
            let h = self.hidden_conditional(vk);
            accumulate(&mut pos, &v, &h, 1.0 / data.len() as f64);
        }
        let mut neg = vec![0.0; m * n + m + n];
        for (vk, row) in self.joint.iter().enumerate() {
            for (hk, p) in row.iter().enumerate() {
                accumulate(&mut neg, &bits(vk, m), &bits(hk, n), *p);
            }
        }
        pos.iter().zip(&neg).map(|(a, b)| a - b).collect()
    }
}

fn accumulate(out: &mut [f64], v: &[f64], h: &[f64], w: f64) {
    let (m, n) = (v.len(), h.len());
    for i in 0..m {
        for j in 0..n {
            out[i * n + j] += w * v[i] * h[j];
        }
        out[m * n + i] += w * v[i];
    }
    for j in 0..n {
        out[m * n + m + j] += w * h[j];
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Dice by explicit set counting over voxel indices above one half.
pub fn dice_recount(a: &VoxelGrid, b: &VoxelGrid) -> f64 {
    use std::collections::BTreeSet;
    let set = |g: &VoxelGrid| -> BTreeSet<usize> { g.values().iter().enumerate().filter(|(_, v)| **v > 0.5).map(|(i, _)| i).collect() };
    let (sa, sb) = (set(a), set(b));
    2.0 * sa.intersection(&sb).count() as f64 / (sa.len() + sb.len()) as f64
}

/// Whether `q` lies in the closed tetrahedron `t`, via barycentric weights
/// from Cramer's rule.
pub fn in_tetrahedron(t: &[[f64; 3]; 4], q: [f64; 3]) -> bool {
    let sub = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let det = |a: [f64; 3], b: [f64; 3], c: [f64; 3]| {
        a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) + a[2] * (b[0] * c[1] - b[1] * c[0])
    };
    let (e1, e2, e3, r) = (sub(t[1], t[0]), sub(t[2], t[0]), sub(t[3], t[0]), sub(q, t[0]));
    let d = det(e1, e2, e3);
    let l1 = det(r, e2, e3) / d;
    let l2 = det(e1, r, e3) / d;
    let l3 = det(e1, e2, r) / d;
    let tol = 1e-9;
    l1 >= -tol && l2 >= -tol && l3 >= -tol && l1 + l2 + l3 <= 1.0 + tol
}
