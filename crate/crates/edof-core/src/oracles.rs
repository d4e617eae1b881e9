//! Independent reference implementations used by the test suites.
//!
//! Nothing in here is called by a production code path: each function is a
//! brute-force or arbitrary-precision route to a result that the optimized
//! implementation must reproduce. They are deliberately written from the
//! problem definitions rather than by reusing solver internals.

use crate::linalg::{self, Matrix};
use crate::Scalar;

/// Result of the exhaustive lasso search.
#[derive(Debug, Clone)]
pub struct ExhaustiveLasso<T> {
    pub z: Vec<T>,
    pub objective: T,
}

/// Global minimum of `||y - P z||^2 + mu ||z||_1` over all supports of size
/// at most `max_support`, by enumerating supports and sign patterns and
/// solving the stationarity system on each.
///
/// The returned point is the unrestricted global optimum whenever
/// [`lasso_kkt_satisfied`] holds for it.
pub fn exhaustive_lasso<T: Scalar>(
    p: &Matrix<T>,
    y: &[T],
    mu: T,
    max_support: usize,
) -> ExhaustiveLasso<T> {
    struct Search<'a, T> {
        p: &'a Matrix<T>,
        y: &'a [T],
        mu: T,
        half: T,
        support: Vec<usize>,
        best_z: Vec<T>,
        best_obj: T,
    }

    impl<T: Scalar> Search<'_, T> {
        /// Enumerate supports by recursion over ascending column indices.
        fn recurse(&mut self, start: usize, left: usize) {
            if !self.support.is_empty() {
                self.try_support();
            }
            if left == 0 {
                return;
            }
            for i in start..self.p.cols() {
                self.support.push(i);
                self.recurse(i + 1, left - 1);
                self.support.pop();
            }
        }

        fn try_support(&mut self) {
            let s = self.support.len();
            let cols: Vec<Vec<T>> = self.support.iter().map(|&i| self.p.col(i)).collect();
            let mut gram = Matrix::zeros(s, s);
            let mut aty = vec![T::zero(); s];
            for a in 0..s {
                aty[a] = linalg::dot(&cols[a], self.y);
                for b in 0..s {
                    gram[(a, b)] = linalg::dot(&cols[a], &cols[b]);
                }
            }
            // All 2^s sign patterns.
            for pattern in 0u32..(1 << s) {
                let mut rhs = vec![T::zero(); s];
                for (a, r) in rhs.iter_mut().enumerate() {
                    let sign = if pattern & (1 << a) != 0 {
                        -T::one()
                    } else {
                        T::one()
                    };
                    *r = aty[a] - self.mu * self.half * sign;
                }
                let Some(zs) = linalg::solve_spd(&gram, &rhs) else {
                    continue;
                };
                // Sign consistency: the solution must lie in the assumed
                // orthant.
                let consistent = zs.iter().enumerate().all(|(a, &v)| {
                    let neg = pattern & (1 << a) != 0;
                    if neg {
                        v <= T::zero()
                    } else {
                        v >= T::zero()
                    }
                });
                if !consistent {
                    continue;
                }
                let mut residual = self.y.to_vec();
                let mut l1 = T::zero();
                for (ci, &v) in cols.iter().zip(&zs) {
                    linalg::axpy(&mut residual, -v, ci);
                    l1 += v.abs();
                }
                let obj = linalg::dot(&residual, &residual) + self.mu * l1;
                if obj < self.best_obj {
                    self.best_obj = obj;
                    for b in self.best_z.iter_mut() {
                        *b = T::zero();
                    }
                    for (&i, &v) in self.support.iter().zip(&zs) {
                        self.best_z[i] = v;
                    }
                }
            }
        }
    }

    let mut search = Search {
        p,
        y,
        mu,
        half: T::from_f64_lossy(0.5),
        support: Vec::with_capacity(max_support),
        best_z: vec![T::zero(); p.cols()],
        best_obj: linalg::dot(y, y),
    };
    search.recurse(0, max_support);
    ExhaustiveLasso {
        z: search.best_z,
        objective: search.best_obj,
    }
}

/// First-order optimality of `||y - P z||^2 + mu ||z||_1` at `z`: active
/// coefficients need `2 p_j^T r = mu sign(z_j)`, inactive ones
/// `|2 p_j^T r| <= mu`, within `tol`.
pub fn lasso_kkt_satisfied<T: Scalar>(p: &Matrix<T>, y: &[T], mu: T, z: &[T], tol: T) -> bool {
    let residual = linalg::sub(y, &p.mul_vec(z));
    let corr = p.t_mul_vec(&residual);
    let two = T::from_f64_lossy(2.0);
    corr.iter().zip(z).all(|(&c, &zi)| {
        if zi == T::zero() {
            (two * c).abs() <= mu + tol
        } else {
            (two * c - mu * zi.signum()).abs() <= tol
        }
    })
}

/// A certified pursuit instance: matrix, observation, weight, and the
/// verified global optimum.
pub type CertifiedInstance = (Matrix<f64>, Vec<f64>, f64, ExhaustiveLasso<f64>);

/// A random small lasso instance together with its certified global
/// optimum: the exhaustive search result passes the KKT conditions, so it
/// is the unrestricted minimizer. `mu` is bumped until certification
/// succeeds; pathological seeds return `None`.
pub fn certified_lasso_instance(seed: u64) -> Option<CertifiedInstance> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(4..=10);
    let k = rng.gen_range(n + 2..=24);
    let mut p = Matrix::from_fn(n, k, |_, _| rng.gen::<f64>() - 0.5);
    for c in 0..k {
        let norm = p.col_norm(c);
        for r in 0..n {
            p[(r, c)] /= norm;
        }
    }
    let i0 = rng.gen_range(0..k);
    let mut i1 = rng.gen_range(0..k);
    while i1 == i0 {
        i1 = rng.gen_range(0..k);
    }
    let sign = |b: bool| if b { 1.0 } else { -1.0 };
    let a0 = sign(rng.gen::<bool>()) * rng.gen_range(0.5..1.5);
    let a1 = sign(rng.gen::<bool>()) * rng.gen_range(0.5..1.5);
    let mut y = vec![0.0; n];
    for r in 0..n {
        y[r] = a0 * p[(r, i0)] + a1 * p[(r, i1)] + 0.02 * (rng.gen::<f64>() - 0.5);
    }
    let mut mu = 0.3;
    for _ in 0..8 {
        let oracle = exhaustive_lasso(&p, &y, mu, 3);
        if lasso_kkt_satisfied(&p, &y, mu, &oracle.z, 1e-9) {
            return Some((p, y, mu, oracle));
        }
        mu *= 1.6;
    }
    None
}

/// Central finite-difference gradient of `f` at `x` with step `h`.
pub fn fd_gradient<T: Scalar>(mut f: impl FnMut(&[T]) -> T, x: &[T], h: T) -> Vec<T> {
    let mut grad = vec![T::zero(); x.len()];
    let mut probe = x.to_vec();
    let two = T::from_f64_lossy(2.0);
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = f(&probe);
        probe[i] = x[i] - h;
        let minus = f(&probe);
        probe[i] = x[i];
        grad[i] = (plus - minus) / (two * h);
    }
    grad
}

/// Reference 16-bit MACC: exact i128 accumulation, round-half-to-even
/// right shift, saturation to i16. The production path must match this
/// bit for bit.
pub fn macc_reference(weights: &[i16], inputs: &[i16], shift: u32) -> i16 {
    assert_eq!(weights.len(), inputs.len());
    let mut acc: i128 = 0;
    for (&w, &x) in weights.iter().zip(inputs) {
        acc += w as i128 * x as i128;
    }
    let rounded = if shift == 0 {
        acc
    } else {
        let div = 1i128 << shift;
        let q = acc.div_euclid(div);
        let r = acc.rem_euclid(div);
        let half = div / 2;
        match r.cmp(&half) {
            std::cmp::Ordering::Less => q,
            std::cmp::Ordering::Greater => q + 1,
            std::cmp::Ordering::Equal => q + (q & 1),
        }
    };
    rounded.clamp(i16::MIN as i128, i16::MAX as i128) as i16
}
