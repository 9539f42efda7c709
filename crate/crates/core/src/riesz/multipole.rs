//! Cartesian Taylor expansions of |z|^{-α} about a source centre.
//!
//! With f(z) = |z|^{-α} and a_k(z) = D_y^k f(z - y)|_{y=0} / k!, a source at
//! c + δ contributes f(z - δ) = Σ_k a_k(z) δ^k, z = x - c. The coefficients
//! satisfy
//!
//!   n |z|² a_k = (2n + α - 2) Σ_i z_i a_{k-e_i} - (n + α - 2) Σ_i a_{k-2e_i},
//!
//! n = |k|. The Riesz kernel is the x-gradient of f(x - a)/α, and
//! ∂_{z_i} a_k = -(k_i + 1) a_{k+e_i}.

use std::collections::HashMap;

pub(crate) const NONE: u32 = u32::MAX;

#[derive(Clone, Debug)]
pub(crate) struct MultiIndexTable {
    pub d: usize,
    pub idx: Vec<[u8; 3]>,
    /// order_start[n]..order_start[n+1] are the indices with |k| = n.
    pub order_start: Vec<usize>,
    pub minus: Vec<[u32; 3]>,
    pub minus2: Vec<[u32; 3]>,
    pub plus: Vec<[u32; 3]>,
    /// For each k: (j, k - j, Π binom(k_i, j_i)) over j <= k componentwise.
    pub shifts: Vec<Vec<(u32, u32, f64)>>,
}

impl MultiIndexTable {
    pub fn new(d: usize, max_order: usize) -> Self {
        let mut idx = Vec::new();
        let mut order_start = Vec::new();
        for n in 0..=max_order {
            order_start.push(idx.len());
            for k0 in (0..=n).rev() {
                if d == 2 {
                    idx.push([k0 as u8, (n - k0) as u8, 0]);
                } else {
                    for k1 in (0..=n - k0).rev() {
                        idx.push([k0 as u8, k1 as u8, (n - k0 - k1) as u8]);
                    }
                }
            }
        }
        order_start.push(idx.len());
        let pos: HashMap<[u8; 3], u32> = idx.iter().enumerate().map(|(i, k)| (*k, i as u32)).collect();
        let shifted = |k: &[u8; 3], i: usize, delta: i32| -> u32 {
            let v = k[i] as i32 + delta;
            if v < 0 {
                return NONE;
            }
            let mut m = *k;
            m[i] = v as u8;
            pos.get(&m).copied().unwrap_or(NONE)
        };
        let mut minus = Vec::with_capacity(idx.len());
        let mut minus2 = Vec::with_capacity(idx.len());
        let mut plus = Vec::with_capacity(idx.len());
        for k in &idx {
            let mut m1 = [NONE; 3];
            let mut m2 = [NONE; 3];
            let mut p1 = [NONE; 3];
            for i in 0..d {
                m1[i] = shifted(k, i, -1);
                m2[i] = shifted(k, i, -2);
                p1[i] = shifted(k, i, 1);
            }
            minus.push(m1);
            minus2.push(m2);
            plus.push(p1);
        }
        let binom = |n: u8, k: u8| -> f64 { (0..k).map(|i| (n - i) as f64 / (i + 1) as f64).product() };
        let shifts = idx
            .iter()
            .map(|k| {
                let mut v = Vec::new();
                for (jj, j) in idx.iter().enumerate() {
                    if (0..3).all(|i| j[i] <= k[i]) {
                        let rest = [k[0] - j[0], k[1] - j[1], k[2] - j[2]];
                        let c = (0..3).map(|i| binom(k[i], j[i])).product();
                        v.push((jj as u32, pos[&rest], c));
                    }
                }
                v
            })
            .collect();
        MultiIndexTable { d, idx, order_start, minus, minus2, plus, shifts }
    }

    /// Number of multi-indices with |k| <= n.
    #[inline]
    pub fn count(&self, n: usize) -> usize {
        self.order_start[n + 1]
    }

    /// δ^k for all |k| <= n, written into `out`.
    pub fn monomials(&self, delta: &[f64; 3], n: usize, out: &mut [f64]) {
        out[0] = 1.0;
        for j in 1..self.count(n) {
            let k = &self.idx[j];
            let i = (0..self.d).find(|&i| k[i] > 0).unwrap();
            out[j] = out[self.minus[j][i] as usize] * delta[i];
        }
    }

    /// Moments about c from moments about c′: with v = c′ - c,
    /// M_k = Σ_{j <= k} binom(k, j) M′_j v^{k-j}. `vpow` holds v^k.
    pub fn translate_into(&self, child: &[f64], vpow: &[f64], n: usize, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate().take(self.count(n)) {
            let mut acc = 0.0;
            for &(j, r, c) in &self.shifts[k] {
                acc += c * child[j as usize] * vpow[r as usize];
            }
            *o += acc;
        }
    }

    /// a_k(z) for |k| <= n.
    pub fn coefficients(&self, z: &[f64; 3], alpha: f64, n: usize, out: &mut [f64]) {
        match self.d {
            2 => self.coefficients_d::<2>(z, alpha, n, out),
            _ => self.coefficients_d::<3>(z, alpha, n, out),
        }
    }

    fn coefficients_d<const D: usize>(&self, z: &[f64; 3], alpha: f64, n: usize, out: &mut [f64]) {
        let r2 = z[0] * z[0] + z[1] * z[1] + z[2] * z[2];
        out[0] = r2.powf(-0.5 * alpha);
        let inv = 1.0 / r2;
        for order in 1..=n {
            let nf = order as f64;
            let c1 = (2.0 * nf + alpha - 2.0) / nf * inv;
            let c2 = (nf + alpha - 2.0) / nf * inv;
            for j in self.order_start[order]..self.order_start[order + 1] {
                let (m1, m2) = (&self.minus[j], &self.minus2[j]);
                let mut s1 = 0.0;
                let mut s2 = 0.0;
                for i in 0..D {
                    if m1[i] != NONE {
                        s1 += z[i] * out[m1[i] as usize];
                    }
                    if m2[i] != NONE {
                        s2 += out[m2[i] as usize];
                    }
                }
                out[j] = c1 * s1 - c2 * s2;
            }
        }
    }

    /// x-gradient of Σ_{|k|<=p} a_k(x - c) M_k, given coefficients up to p+1.
    pub fn gradient(&self, coeffs: &[f64], moments: &[f64], p: usize) -> [f64; 3] {
        match self.d {
            2 => self.gradient_d::<2>(coeffs, moments, p),
            _ => self.gradient_d::<3>(coeffs, moments, p),
        }
    }

    fn gradient_d<const D: usize>(&self, coeffs: &[f64], moments: &[f64], p: usize) -> [f64; 3] {
        let mut g = [0.0; 3];
        for (j, &m) in moments.iter().enumerate().take(self.count(p)) {
            let (k, up) = (&self.idx[j], &self.plus[j]);
            for i in 0..D {
                g[i] -= (k[i] as f64 + 1.0) * coeffs[up[i] as usize] * m;
            }
        }
        g
    }
}

/// binom(n + α - 1, n) = Π_{j=1}^{n} (j + α - 1)/j, the value of the
/// Gegenbauer polynomial C_n^{α/2} at 1.
pub(crate) fn gegenbauer_at_one(n: usize, alpha: f64) -> f64 {
    (1..=n).map(|j| (j as f64 + alpha - 1.0) / j as f64).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_grad(z: &[f64; 3], alpha: f64) -> [f64; 3] {
        // ∇_x |x - a|^{-α} at x - a = z.
        let r2 = z[0] * z[0] + z[1] * z[1] + z[2] * z[2];
        let f = -alpha * r2.powf(-0.5 * alpha - 1.0);
        [f * z[0], f * z[1], f * z[2]]
    }

    #[test]
    fn expansion_converges_to_direct_gradient() {
        for (d, alpha) in [(2usize, 0.5f64), (3, 1.5)] {
            let t = MultiIndexTable::new(d, 14);
            let delta = [0.05, -0.03, if d == 3 { 0.02 } else { 0.0 }];
            let z = [0.7, 0.4, if d == 3 { -0.2 } else { 0.0 }];
            let mut mono = vec![0.0; t.count(13)];
            t.monomials(&delta, 13, &mut mono);
            let mut coef = vec![0.0; t.count(14)];
            t.coefficients(&z, alpha, 14, &mut coef);
            let g = t.gradient(&coef, &mono, 13);
            let want = direct_grad(&[z[0] - delta[0], z[1] - delta[1], z[2] - delta[2]], alpha);
            for i in 0..3 {
                assert!((g[i] - want[i]).abs() < 1e-13, "d={d} i={i}: {} vs {}", g[i], want[i]);
            }
        }
    }

    #[test]
    fn translated_moments_match_direct() {
        for d in [2usize, 3] {
            let t = MultiIndexTable::new(d, 8);
            let n = t.count(8);
            let pts = [[0.1, 0.2, 0.3], [-0.4, 0.05, 0.2], [0.3, -0.1, -0.25]];
            let c_old = [0.02, -0.01, 0.03];
            let c_new = [-0.05, 0.04, 0.0];
            let mut mono = vec![0.0; n];
            let mut about_old = vec![0.0; n];
            let mut about_new = vec![0.0; n];
            for p in &pts {
                t.monomials(&[p[0] - c_old[0], p[1] - c_old[1], p[2] - c_old[2]], 8, &mut mono);
                about_old.iter_mut().zip(&mono).for_each(|(m, v)| *m += v);
                t.monomials(&[p[0] - c_new[0], p[1] - c_new[1], p[2] - c_new[2]], 8, &mut mono);
                about_new.iter_mut().zip(&mono).for_each(|(m, v)| *m += v);
            }
            let mut vpow = vec![0.0; n];
            t.monomials(&[c_old[0] - c_new[0], c_old[1] - c_new[1], c_old[2] - c_new[2]], 8, &mut vpow);
            let mut out = vec![0.0; n];
            t.translate_into(&about_old, &vpow, 8, &mut out);
            for (a, b) in out.iter().zip(&about_new) {
                assert!((a - b).abs() < 1e-14, "d={d}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn one_dimensional_coefficients_are_binomials() {
        let t = MultiIndexTable::new(2, 6);
        let alpha = 0.7;
        let x: f64 = 1.3;
        let mut coef = vec![0.0; t.count(6)];
        t.coefficients(&[x, 0.0, 0.0], alpha, 6, &mut coef);
        for n in 0..=6usize {
            let j = t.order_start[n];
            assert_eq!(t.idx[j], [n as u8, 0, 0]);
            let want = gegenbauer_at_one(n, alpha) * x.powf(-alpha - n as f64);
            assert!((coef[j] - want).abs() < 1e-13 * want.abs());
        }
    }
}
