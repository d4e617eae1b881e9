//! Dictionaries and sparse pursuit.
//!
//! A patch from the raw Bayer frame is modeled as `y = B H_psi D z`: `D` is
//! the clear per-channel DCT dictionary, `H_psi` the per-channel blur for
//! one defocus value, and `B` the CFA row-selection. Concatenating the
//! blurred dictionaries over the whole psi grid gives `D_Psi`, and pursuit
//! against `P = B D_Psi` is blind in depth: the coefficients choose the
//! blur level that best explains the observation. Reconstruction always
//! uses the clear dictionary, `x_hat = (D, ..., D) z`.

use serde::{Deserialize, Serialize};

use crate::linalg::{self, Matrix};
use crate::optics::{BlurKernelSet, CHANNELS};
use crate::sensor::{mirror_index, CfaPattern};
use crate::{Error, Result, Scalar};

/// Default patch side in pixels; the raw patch is `PATCH_SIDE^2` samples.
pub const PATCH_SIDE: usize = 8;
/// Raw patch dimension (one CFA sample per pixel).
pub const PATCH_AREA: usize = PATCH_SIDE * PATCH_SIDE;
/// RGB patch dimension.
pub const PATCH_DIM: usize = CHANNELS * PATCH_AREA;

/// Default pursuit regularization weight. Chosen by a logarithmic grid
/// search (1e-4 .. 1e-1) on held-out synthetic patches blurred over the
/// default psi grid; see the repository README for the regeneration recipe.
pub const DEFAULT_MU: f64 = 3e-2;

/// Clear (unblurred) dictionary with unit-norm atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary<T> {
    atoms: Matrix<T>,
    patch_side: usize,
}

impl<T: Scalar> Dictionary<T> {
    /// Wrap an atom matrix, validating unit column norms.
    pub fn new(atoms: Matrix<T>, patch_side: usize) -> Result<Self> {
        if atoms.rows() != CHANNELS * patch_side * patch_side {
            return Err(Error::invalid("atom dimension must be 3 * patch area"));
        }
        let tol = T::from_f64_lossy(1e-6);
        for c in 0..atoms.cols() {
            if (atoms.col_norm(c) - T::one()).abs() > tol {
                return Err(Error::invalid(format!("atom {c} is not unit norm")));
            }
        }
        Ok(Dictionary { atoms, patch_side })
    }

    pub fn atom_dim(&self) -> usize {
        self.atoms.rows()
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.cols()
    }

    pub fn atoms(&self) -> &Matrix<T> {
        &self.atoms
    }

    pub fn patch_side(&self) -> usize {
        self.patch_side
    }
}

/// Separable DCT-II factor at sample `x` for frequency `u` drawn from an
/// `m`-point grid (overcomplete when `m > side`).
fn dct_basis_1d<T: Scalar>(u: usize, x: usize, m: usize) -> T {
    let arg = T::PI() * T::from_f64_lossy(u as f64) * T::from_f64_lossy(2.0 * x as f64 + 1.0)
        / T::from_f64_lossy(2.0 * m as f64);
    arg.cos()
}

/// Separable DCT dictionary with every spatial pattern replicated across
/// the three color channels: atoms are `direction (x) pattern`, where the
/// three orthonormal color directions are the achromatic axis and two
/// opponent-chroma axes. Joint-channel atoms are what make the blurred
/// sub-dictionaries depth-discriminative: a luma atom blurred by a coded
/// kernel carries the per-channel fringing signature of its psi.
/// `k` must be `3 * m^2` with `m >= side`.
pub fn dct_dictionary<T: Scalar>(patch_side: usize, k: usize) -> Result<Dictionary<T>> {
    if !k.is_multiple_of(CHANNELS) {
        return Err(Error::invalid("atom count must be divisible by 3"));
    }
    let per_direction = k / CHANNELS;
    let m = (per_direction as f64).sqrt().round() as usize;
    if m * m != per_direction || m < patch_side {
        return Err(Error::invalid(
            "per-direction atom count must be a perfect square >= patch area",
        ));
    }
    let area = patch_side * patch_side;
    let n = CHANNELS * area;
    let s3 = T::from_f64_lossy(3.0).sqrt();
    let s2 = T::from_f64_lossy(2.0).sqrt();
    let s6 = T::from_f64_lossy(6.0).sqrt();
    let two = T::from_f64_lossy(2.0);
    let directions: [[T; CHANNELS]; CHANNELS] = [
        [T::one() / s3, T::one() / s3, T::one() / s3],
        [T::one() / s2, T::zero(), -T::one() / s2],
        [T::one() / s6, -two / s6, T::one() / s6],
    ];
    let mut atoms = Matrix::zeros(n, k);
    let mut col = 0;
    for dir in &directions {
        for u in 0..m {
            for v in 0..m {
                let mut norm = T::zero();
                let mut vals = vec![T::zero(); area];
                for r in 0..patch_side {
                    for c in 0..patch_side {
                        let val = dct_basis_1d::<T>(u, r, m) * dct_basis_1d::<T>(v, c, m);
                        vals[r * patch_side + c] = val;
                        norm += val * val;
                    }
                }
                let norm = norm.sqrt();
                for channel in 0..CHANNELS {
                    for (i, &val) in vals.iter().enumerate() {
                        atoms[(channel * area + i, col)] = dir[channel] * val / norm;
                    }
                }
                col += 1;
            }
        }
    }
    Dictionary::new(atoms, patch_side)
}

/// Matrix form of "convolve the patch with `kernel`, mirror extension at
/// the patch boundary": column `j` is the blur response of basis pixel `j`.
/// Matches `sensor::blur_image` applied to the patch as a standalone image.
pub fn blur_operator_matrix<T: Scalar>(kernel: &Matrix<T>, patch_side: usize) -> Matrix<T> {
    let area = patch_side * patch_side;
    let ksize = kernel.rows() as isize;
    let half = ksize / 2;
    let mut h = Matrix::zeros(area, area);
    for row in 0..patch_side {
        for col in 0..patch_side {
            let out_idx = row * patch_side + col;
            for kr in 0..ksize {
                let src_r = mirror_index(row as isize + half - kr, patch_side);
                for kc in 0..ksize {
                    let src_c = mirror_index(col as isize + half - kc, patch_side);
                    let in_idx = src_r * patch_side + src_c;
                    h[(out_idx, in_idx)] += kernel[(kr as usize, kc as usize)];
                }
            }
        }
    }
    h
}

/// CFA row-selection matrix `B` (patch_area x 3*patch_area): row `p` has a
/// single 1 at the channel the pattern captures at that pixel. The lattice
/// phase is the (row, col) parity of the patch origin; extraction keeps
/// origins even so one `B` serves every patch.
pub fn bayer_projection<T: Scalar>(
    pattern: CfaPattern,
    lattice_phase: (usize, usize),
    patch_side: usize,
) -> Matrix<T> {
    let area = patch_side * patch_side;
    let mut b = Matrix::zeros(area, CHANNELS * area);
    for r in 0..patch_side {
        for c in 0..patch_side {
            let p = r * patch_side + c;
            let ch = pattern.channel_at(r + lattice_phase.0, c + lattice_phase.1);
            b[(p, ch * area + p)] = T::one();
        }
    }
    b
}

/// Clear dictionary, its blurred versions over the psi grid, their
/// concatenation, and the CFA-projected pursuit matrix.
#[derive(Debug, Clone)]
pub struct ConcatDictionary<T> {
    clear: Dictionary<T>,
    psi_grid: Vec<T>,
    blurred_blocks: Vec<Matrix<T>>,
    concat: Matrix<T>,
    bayer: Matrix<T>,
    projected: Matrix<T>,
    pattern: CfaPattern,
    lattice_phase: (usize, usize),
}

impl<T: Scalar> ConcatDictionary<T> {
    pub fn clear(&self) -> &Dictionary<T> {
        &self.clear
    }

    pub fn psi_grid(&self) -> &[T] {
        &self.psi_grid
    }

    pub fn block_count(&self) -> usize {
        self.blurred_blocks.len()
    }

    pub fn blurred_block(&self, j: usize) -> &Matrix<T> {
        &self.blurred_blocks[j]
    }

    /// `D_Psi`, atom_dim x (q * atom_count).
    pub fn concat(&self) -> &Matrix<T> {
        &self.concat
    }

    /// `B`, patch_area x atom_dim.
    pub fn bayer(&self) -> &Matrix<T> {
        &self.bayer
    }

    /// `P = B D_Psi`, patch_area x (q * atom_count): the pursuit matrix.
    pub fn projected(&self) -> &Matrix<T> {
        &self.projected
    }

    pub fn pattern(&self) -> CfaPattern {
        self.pattern
    }

    pub fn lattice_phase(&self) -> (usize, usize) {
        self.lattice_phase
    }

    pub fn coeff_dim(&self) -> usize {
        self.concat.cols()
    }

    /// Rebuild a dictionary from its stored pieces (deserialization path):
    /// the concatenation, CFA projection, and pursuit matrix are derived.
    pub fn from_parts(
        clear: Dictionary<T>,
        psi_grid: Vec<T>,
        blurred_blocks: Vec<Matrix<T>>,
        pattern: CfaPattern,
        lattice_phase: (usize, usize),
    ) -> Result<Self> {
        if psi_grid.is_empty() || blurred_blocks.len() != psi_grid.len() {
            return Err(Error::invalid("psi grid / block count mismatch"));
        }
        for b in &blurred_blocks {
            if b.rows() != clear.atom_dim() || b.cols() != clear.atom_count() {
                return Err(Error::invalid("block shape mismatch"));
            }
        }
        let concat = Matrix::hconcat(&blurred_blocks.iter().collect::<Vec<_>>());
        let bayer = bayer_projection::<T>(pattern, lattice_phase, clear.patch_side());
        let projected = bayer.mul_mat(&concat);
        Ok(ConcatDictionary {
            clear,
            psi_grid,
            blurred_blocks,
            concat,
            bayer,
            projected,
            pattern,
            lattice_phase,
        })
    }

    /// Keep a single psi block, rebuilding the concatenation (used for the
    /// compressed network initialization).
    pub fn restrict_to_block(&self, j: usize) -> Result<ConcatDictionary<T>> {
        if j >= self.block_count() {
            return Err(Error::invalid("block index out of range"));
        }
        let block = self.blurred_blocks[j].clone();
        Ok(ConcatDictionary {
            clear: self.clear.clone(),
            psi_grid: vec![self.psi_grid[j]],
            concat: block.clone(),
            projected: self.bayer.mul_mat(&block),
            blurred_blocks: vec![block],
            bayer: self.bayer.clone(),
            pattern: self.pattern,
            lattice_phase: self.lattice_phase,
        })
    }
}

/// Assemble the concatenated blurred dictionary for a kernel set.
pub fn build_concat_dictionary<T: Scalar>(
    dict: &Dictionary<T>,
    kernels: &BlurKernelSet<T>,
    pattern: CfaPattern,
    lattice_phase: (usize, usize),
) -> Result<ConcatDictionary<T>> {
    if kernels.is_empty() {
        return Err(Error::invalid("kernel grid must be non-empty"));
    }
    let side = dict.patch_side();
    let area = side * side;
    let mut blocks = Vec::with_capacity(kernels.len());
    for j in 0..kernels.len() {
        // D_psi = H_psi D with H_psi block-diagonal over channels.
        let mut block = Matrix::zeros(dict.atom_dim(), dict.atom_count());
        for channel in 0..CHANNELS {
            let h = blur_operator_matrix(kernels.kernel(channel, j), side);
            for out_r in 0..area {
                for (in_r, &w) in h.row(out_r).iter().enumerate() {
                    if w == T::zero() {
                        continue;
                    }
                    for col in 0..dict.atom_count() {
                        let v = dict.atoms()[(channel * area + in_r, col)];
                        if v != T::zero() {
                            block[(channel * area + out_r, col)] += w * v;
                        }
                    }
                }
            }
        }
        blocks.push(block);
    }
    let concat = Matrix::hconcat(&blocks.iter().collect::<Vec<_>>());
    let bayer = bayer_projection::<T>(pattern, lattice_phase, side);
    let projected = bayer.mul_mat(&concat);
    Ok(ConcatDictionary {
        clear: dict.clone(),
        psi_grid: kernels.psi_grid().to_vec(),
        blurred_blocks: blocks,
        concat,
        bayer,
        projected,
        pattern,
        lattice_phase,
    })
}

/// Upper bound on the largest eigenvalue of `P^T P`: power iteration to
/// relative tolerance 1e-6, inflated by 0.1%.
pub fn lipschitz_upper<T: Scalar>(p: &Matrix<T>) -> Result<T> {
    let lambda = p
        .gram_lambda_max(T::from_f64_lossy(1e-6))
        .map_err(|_| Error::invalid("lipschitz bound of a zero matrix"))?;
    Ok(lambda * T::from_f64_lossy(1.001))
}

/// Two-sided shrinkage `sigma_theta(x) = sign(x) * max(|x| - theta, 0)`.
#[inline]
pub fn shrink<T: Scalar>(x: T, theta: T) -> T {
    if x > theta {
        x - theta
    } else if x < -theta {
        x + theta
    } else {
        T::zero()
    }
}

/// Element-wise soft threshold; `theta` is broadcast when it has length 1.
pub fn soft_threshold<T: Scalar>(x: &[T], theta: &[T]) -> Result<Vec<T>> {
    if theta.len() != 1 && theta.len() != x.len() {
        return Err(Error::invalid("theta must be scalar or match x"));
    }
    if theta.iter().any(|&t| t < T::zero()) {
        return Err(Error::invalid("theta must be non-negative"));
    }
    Ok(x.iter()
        .enumerate()
        .map(|(i, &v)| shrink(v, if theta.len() == 1 { theta[0] } else { theta[i] }))
        .collect())
}

/// Threshold specification for the solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Serialize + serde::de::DeserializeOwned")]
pub enum Theta<T> {
    /// Derive from (mu, L) as the proximal step threshold mu / (2 L).
    Derived,
    Scalar(T),
    PerCoefficient(Vec<T>),
}

/// Solver parameters. `iterations` counts threshold (z-update) steps.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Serialize + serde::de::DeserializeOwned")]
pub struct SolverConfig<T> {
    pub mu: T,
    pub lipschitz: T,
    pub theta: Theta<T>,
    pub iterations: usize,
    /// Early-stop tolerance on the max-abs coefficient update; 0 disables.
    pub tolerance: T,
}

impl<T: Scalar> SolverConfig<T> {
    pub fn new(mu: T, lipschitz: T, iterations: usize) -> Self {
        SolverConfig {
            mu,
            lipschitz,
            theta: Theta::Derived,
            iterations,
            tolerance: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lipschitz <= T::zero() {
            return Err(Error::invalid("lipschitz bound must be positive"));
        }
        if self.mu < T::zero() {
            return Err(Error::invalid("mu must be non-negative"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("need at least one iteration"));
        }
        let ok = match &self.theta {
            Theta::Derived => true,
            Theta::Scalar(t) => *t >= T::zero(),
            Theta::PerCoefficient(v) => v.iter().all(|&t| t >= T::zero()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("theta must be non-negative"))
        }
    }

    /// Threshold vector of length `dim`.
    ///
    /// The derived value is the proximal-gradient threshold mu / (2 L) for
    /// the objective `||y - P z||^2 + mu ||z||_1` under the gradient step
    /// `z + P^T (y - P z) / L`; stating it as `2 mu / L` alongside that step
    /// would solve the problem with `4 mu` instead of `mu`.
    pub fn theta_vector(&self, dim: usize) -> Result<Vec<T>> {
        let two = T::from_f64_lossy(2.0);
        match &self.theta {
            Theta::Derived => Ok(vec![self.mu / (two * self.lipschitz); dim]),
            Theta::Scalar(t) => Ok(vec![*t; dim]),
            Theta::PerCoefficient(v) => {
                if v.len() != dim {
                    Err(Error::invalid("theta vector length mismatch"))
                } else {
                    Ok(v.clone())
                }
            }
        }
    }
}

/// ISTA output: final coefficients plus the objective value at the initial
/// point and after every threshold step.
#[derive(Debug, Clone)]
pub struct IstaResult<T> {
    pub z: Vec<T>,
    pub objective_trace: Vec<T>,
}

/// `||y - P z||^2 + mu ||z||_1`.
pub fn pursuit_objective<T: Scalar>(p: &Matrix<T>, y: &[T], z: &[T], mu: T) -> T {
    let r = linalg::sub(y, &p.mul_vec(z));
    let l1 = z.iter().fold(T::zero(), |a, &v| a + v.abs());
    linalg::dot(&r, &r) + mu * l1
}

/// Iterative shrinkage-thresholding on `min ||y - P z||^2 + mu ||z||_1`.
///
/// Implements the recursion `z_{t+1} = sigma_theta(b_t)`, `b_{t+1} = b_t +
/// S (z_{t+1} - z_t)` with `b_1 = Q^T y`, `Q = P / L`, `S = I - Q^T P`, in
/// the equivalent matrix-free form `b_t = z_t + P^T (y - P z_t) / L`.
pub fn ista<T: Scalar>(
    y: &[T],
    dict: &ConcatDictionary<T>,
    cfg: &SolverConfig<T>,
) -> Result<IstaResult<T>> {
    ista_on_matrix(y, dict.projected(), cfg)
}

/// ISTA against an explicit pursuit matrix (used directly by tests and the
/// network-equivalence checks).
pub fn ista_on_matrix<T: Scalar>(
    y: &[T],
    p: &Matrix<T>,
    cfg: &SolverConfig<T>,
) -> Result<IstaResult<T>> {
    cfg.validate()?;
    if y.len() != p.rows() {
        return Err(Error::invalid("observation length must match P rows"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("observation must be finite"));
    }
    let dim = p.cols();
    let theta = cfg.theta_vector(dim)?;
    let inv_l = T::one() / cfg.lipschitz;
    let mut z = vec![T::zero(); dim];
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    trace.push(pursuit_objective(p, y, &z, cfg.mu));
    for _ in 0..cfg.iterations {
        let residual = linalg::sub(y, &p.mul_vec(&z));
        let mut b = p.t_mul_vec(&residual);
        for (bi, zi) in b.iter_mut().zip(&z) {
            *bi = *zi + *bi * inv_l;
        }
        let z_next: Vec<T> = b
            .iter()
            .zip(&theta)
            .map(|(&bi, &ti)| shrink(bi, ti))
            .collect();
        let delta = z_next
            .iter()
            .zip(&z)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
        z = z_next;
        trace.push(pursuit_objective(p, y, &z, cfg.mu));
        if cfg.tolerance > T::zero() && delta <= cfg.tolerance {
            break;
        }
    }
    Ok(IstaResult {
        z,
        objective_trace: trace,
    })
}

/// OMP termination report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OmpStatus {
    Converged,
    AtomBudgetReached,
    /// A selected set went rank-deficient; the offending atoms were dropped
    /// and barred from reselection.
    DroppedAtoms(usize),
}

#[derive(Debug, Clone)]
pub struct OmpResult<T> {
    pub z: Vec<T>,
    pub selected: Vec<usize>,
    pub status: OmpStatus,
}

/// Orthogonal matching pursuit on the columns of `P = B D_Psi`.
///
/// Atom choice maximizes `|p_i^T r| / ||p_i||` (projected atoms are not
/// unit norm); coefficients are re-fit by least squares after every
/// selection.
pub fn omp<T: Scalar>(
    y: &[T],
    dict: &ConcatDictionary<T>,
    max_atoms: usize,
    residual_tol: T,
) -> Result<OmpResult<T>> {
    let p = dict.projected();
    if max_atoms == 0 {
        return Err(Error::invalid("max_atoms must be at least 1"));
    }
    if y.len() != p.rows() {
        return Err(Error::invalid("observation length must match P rows"));
    }
    let dim = p.cols();
    let norms: Vec<T> = (0..dim).map(|c| p.col_norm(c)).collect();
    let mut selected: Vec<usize> = Vec::new();
    let mut banned = vec![false; dim];
    let mut dropped = 0usize;
    let mut z = vec![T::zero(); dim];
    let mut residual = y.to_vec();
    let tiny = T::from_f64_lossy(1e-12);
    while selected.len() < max_atoms {
        if linalg::norm2(&residual) <= residual_tol {
            break;
        }
        let corr = p.t_mul_vec(&residual);
        let mut best = None;
        let mut best_score = T::zero();
        for i in 0..dim {
            if banned[i] || norms[i] <= tiny || selected.contains(&i) {
                continue;
            }
            let score = corr[i].abs() / norms[i];
            if score > best_score {
                best_score = score;
                best = Some(i);
            }
        }
        let Some(atom) = best else { break };
        selected.push(atom);
        // Least-squares refit on the selected columns via normal equations.
        let cols: Vec<Vec<T>> = selected.iter().map(|&i| p.col(i)).collect();
        let s = selected.len();
        let mut gram = Matrix::zeros(s, s);
        let mut rhs = vec![T::zero(); s];
        for a in 0..s {
            rhs[a] = linalg::dot(&cols[a], y);
            for b in 0..s {
                gram[(a, b)] = linalg::dot(&cols[a], &cols[b]);
            }
        }
        match linalg::solve_spd(&gram, &rhs) {
            Some(coef) => {
                residual = y.to_vec();
                for (ci, &c) in cols.iter().zip(&coef) {
                    linalg::axpy(&mut residual, -c, ci);
                }
                for zi in z.iter_mut() {
                    *zi = T::zero();
                }
                for (&i, &c) in selected.iter().zip(&coef) {
                    z[i] = c;
                }
            }
            None => {
                let atom = selected.pop().expect("just pushed");
                banned[atom] = true;
                dropped += 1;
            }
        }
    }
    let status = if dropped > 0 {
        OmpStatus::DroppedAtoms(dropped)
    } else if selected.len() >= max_atoms && linalg::norm2(&residual) > residual_tol {
        OmpStatus::AtomBudgetReached
    } else {
        OmpStatus::Converged
    };
    Ok(OmpResult {
        z,
        selected,
        status,
    })
}

/// Synthesize the RGB patch from concatenated coefficients with the clear
/// dictionary: `x_hat = D * (sum of psi blocks of z)`.
pub fn reconstruct_patch<T: Scalar>(z: &[T], dict: &ConcatDictionary<T>) -> Result<Vec<T>> {
    let k = dict.clear.atom_count();
    if z.len() != k * dict.block_count() {
        return Err(Error::invalid("coefficient length mismatch"));
    }
    let mut summed = vec![T::zero(); k];
    for block in z.chunks_exact(k) {
        for (s, &v) in summed.iter_mut().zip(block) {
            *s += v;
        }
    }
    Ok(dict.clear.atoms().mul_vec(&summed))
}

/// Per-block l1 mass of a coefficient vector; the argmax is the solver's
/// implied depth estimate.
pub fn block_l1_mass<T: Scalar>(z: &[T], block_count: usize) -> Vec<T> {
    let k = z.len() / block_count;
    z.chunks_exact(k)
        .map(|b| b.iter().fold(T::zero(), |a, &v| a + v.abs()))
        .collect()
}
