// Copyright 2026 Compulse Contributors
// SPDX-License-Identifier: Apache-2.0

//! Dense complex matrices for the few-level simulator. Dimensions here are
//! tiny (qubit plus at most a handful of spectator levels), so a flat
//! row-major vector beats anything clever.

use num_complex::Complex64;

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct CMat {
    d: usize,
    data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(d: usize) -> CMat {
        assert!(d >= 2, "need at least the two qubit levels");
        CMat {
            d,
            data: vec![Complex64::ZERO; d * d],
        }
    }

    #[cfg(test)]
    pub fn identity(d: usize) -> CMat {
        let mut m = CMat::zeros(d);
        for i in 0..d {
            m.data[i * d + i] = Complex64::ONE;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.d + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.d + j] = v;
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.d).map(|i| self.data[i * self.d + i]).sum()
    }

    pub fn scale(&mut self, f: f64) {
        for v in &mut self.data {
            *v *= f;
        }
    }

    /// self += s * other
    pub fn add_scaled(&mut self, other: &CMat, s: f64) {
        debug_assert_eq!(self.d, other.d);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn copy_from(&mut self, other: &CMat) {
        debug_assert_eq!(self.d, other.d);
        self.data.copy_from_slice(&other.data);
    }

    /// out = a * b. Full products only show up in test oracles; the
    /// propagator itself works in commutators.
    #[cfg(test)]
    pub fn mul_into(out: &mut CMat, a: &CMat, b: &CMat) {
        let d = a.d;
        debug_assert!(out.d == d && b.d == d);
        for i in 0..d {
            for j in 0..d {
                let mut s = Complex64::ZERO;
                for k in 0..d {
                    s += a.data[i * d + k] * b.data[k * d + j];
                }
                out.data[i * d + j] = s;
            }
        }
    }

    /// out = -i (h rho - rho h), the coherent part of the master equation.
    pub fn minus_i_commutator_into(out: &mut CMat, h: &CMat, rho: &CMat) {
        let d = h.d;
        debug_assert!(out.d == d && rho.d == d);
        for i in 0..d {
            for j in 0..d {
                let mut s = Complex64::ZERO;
                for k in 0..d {
                    s += h.data[i * d + k] * rho.data[k * d + j]
                        - rho.data[i * d + k] * h.data[k * d + j];
                }
                out.data[i * d + j] = Complex64::new(s.im, -s.re);
            }
        }
    }

    /// Symmetrize to the nearest hermitian matrix. Integration error makes
    /// rho drift off the hermitian manifold by O(dt^5) per step; folding it
    /// back keeps populations real.
    pub fn hermitize(&mut self) {
        let d = self.d;
        for i in 0..d {
            self.data[i * d + i] = Complex64::new(self.data[i * d + i].re, 0.0);
            for j in (i + 1)..d {
                let a = self.data[i * d + j];
                let b = self.data[j * d + i];
                let m = 0.5 * (a + b.conj());
                self.data[i * d + j] = m;
                self.data[j * d + i] = m.conj();
            }
        }
    }

    /// Multiply row and column `level` (off-diagonal entries only) by `f`.
    /// This is the phase-flip dephasing channel on that level.
    pub fn damp_level_coherence(&mut self, level: usize, f: f64) {
        let d = self.d;
        for j in 0..d {
            if j != level {
                self.data[level * d + j] *= f;
                self.data[j * d + level] *= f;
            }
        }
    }

    #[cfg(test)]
    pub fn frobenius_distance(&self, other: &CMat) -> f64 {
        debug_assert_eq!(self.d, other.d);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Eigenvalues of a hermitian matrix, ascending. The complex matrix
    /// A + iB embeds as the real symmetric [[A, -B], [B, A]], whose
    /// spectrum is the original one with every value doubled; we return
    /// every other entry of the sorted list.
    pub fn eigenvalues_hermitian(&self) -> Vec<f64> {
        let d = self.d;
        let n = 2 * d;
        let mut s = vec![0.0f64; n * n];
        for i in 0..d {
            for j in 0..d {
                let v = self.data[i * d + j];
                s[i * n + j] = v.re;
                s[(i + d) * n + (j + d)] = v.re;
                s[i * n + (j + d)] = -v.im;
                s[(i + d) * n + j] = v.im;
            }
        }
        let mut eig = jacobi_eigenvalues(&mut s, n);
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        eig.into_iter().step_by(2).collect()
    }
}

/// Cyclic Jacobi sweeps on a real symmetric matrix (row-major, destroyed).
fn jacobi_eigenvalues(a: &mut [f64], n: usize) -> Vec<f64> {
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() < 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn mul_matches_hand_product() {
        let mut a = CMat::zeros(2);
        a.set(0, 0, c(1.0, 0.0));
        a.set(0, 1, c(0.0, 1.0));
        a.set(1, 0, c(2.0, 0.0));
        a.set(1, 1, c(0.0, -1.0));
        let b = CMat::identity(2);
        let mut out = CMat::zeros(2);
        CMat::mul_into(&mut out, &a, &b);
        assert_eq!(out, a);
    }

    #[test]
    fn commutator_of_pauli_x_and_z() {
        // -i [sigma_x, sigma_z] = -i (-2i sigma_y) = -2 sigma_y.
        let mut x = CMat::zeros(2);
        x.set(0, 1, c(1.0, 0.0));
        x.set(1, 0, c(1.0, 0.0));
        let mut z = CMat::zeros(2);
        z.set(0, 0, c(1.0, 0.0));
        z.set(1, 1, c(-1.0, 0.0));
        let mut out = CMat::zeros(2);
        CMat::minus_i_commutator_into(&mut out, &x, &z);
        assert_eq!(out.get(0, 1), c(0.0, 2.0));
        assert_eq!(out.get(1, 0), c(0.0, -2.0));
        assert_eq!(out.get(0, 0), Complex64::ZERO);
    }

    #[test]
    fn hermitize_folds_back_antihermitian_part() {
        let mut m = CMat::zeros(2);
        m.set(0, 1, c(1.0, 2.0));
        m.set(1, 0, c(3.0, 4.0));
        m.set(0, 0, c(5.0, 0.5));
        m.hermitize();
        assert_eq!(m.get(0, 1), m.get(1, 0).conj());
        assert_eq!(m.get(0, 0).im, 0.0);
        assert_eq!(m.get(0, 1), c(2.0, -1.0));
    }

    #[test]
    fn eigenvalues_of_pauli_y_are_plus_minus_one() {
        let mut y = CMat::zeros(2);
        y.set(0, 1, c(0.0, -1.0));
        y.set(1, 0, c(0.0, 1.0));
        let e = y.eigenvalues_hermitian();
        assert!((e[0] + 1.0).abs() < 1e-12);
        assert!((e[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigenvalues_of_random_hermitian_match_trace_invariants() {
        // Spot-check sum of eigenvalues = trace and sum of squares =
        // Frobenius norm squared on a 4x4 hermitian matrix.
        let mut m = CMat::zeros(4);
        let mut s = 0x1234_5678_u64;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        for i in 0..4 {
            m.set(i, i, c(next(), 0.0));
            for j in (i + 1)..4 {
                let v = c(next(), next());
                m.set(i, j, v);
                m.set(j, i, v.conj());
            }
        }
        let e = m.eigenvalues_hermitian();
        let tr: f64 = e.iter().sum();
        assert!((tr - m.trace().re).abs() < 1e-10);
        let fro2: f64 = e.iter().map(|x| x * x).sum();
        let direct: f64 = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j).norm_sqr())
            .sum();
        assert!((fro2 - direct).abs() < 1e-10);
    }

    #[test]
    fn damp_level_coherence_touches_only_that_row_and_column() {
        let mut m = CMat::identity(3);
        m.set(0, 1, c(1.0, 0.0));
        m.set(1, 0, c(1.0, 0.0));
        m.set(0, 2, c(1.0, 0.0));
        m.set(2, 0, c(1.0, 0.0));
        m.set(1, 2, c(1.0, 0.0));
        m.set(2, 1, c(1.0, 0.0));
        m.damp_level_coherence(1, 0.5);
        assert_eq!(m.get(0, 1).re, 0.5);
        assert_eq!(m.get(1, 2).re, 0.5);
        assert_eq!(m.get(0, 2).re, 1.0);
        assert_eq!(m.get(1, 1).re, 1.0);
    }
}
