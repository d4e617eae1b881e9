//! The iterative solver unrolled into a fixed-depth feed-forward network.
//!
//! A `T`-layer network is one initialization stage (I), `T - 2` middle
//! stages (M), and one final stage (F). Every stage is the same calculator
//! primitive: a matrix multiply, an optional element-wise shrinkage, and a
//! subtraction constant. At initialization the network reproduces ISTA
//! exactly; supervised training then adapts all stage parameters.
//!
//! Stage semantics, with carry `(b, z_prev)`:
//!
//! ```text
//! I:  b = A y - c                     (z_prev = 0)
//! M:  z = sigma_theta(b);  b' = b + A (z - z_prev) - c
//! F:  out = A z - c
//! ```
//!
//! The last M stage's carry update is never consumed by F, so it is skipped
//! in the forward pass; correspondingly its `A` and `c` receive zero
//! gradient. The solver recursion has the same dead final carry update.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, Matrix};
use crate::pipeline;
use crate::sparse::{shrink, ConcatDictionary, SolverConfig};
use crate::{Error, Result, Scalar};

/// What the final stage emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputSpace {
    /// Planar RGB patch, 3 * patch_area values.
    Rgb192,
    /// 4:2:2 YCbCr patch: patch_area luma + patch_area chroma values.
    Ycbcr422,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StageKind {
    Init,
    Middle,
    Final,
}

/// One calculator stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage<T> {
    pub kind: StageKind,
    pub a: Matrix<T>,
    /// Shrinkage thresholds; semantically used by M stages only (kept at
    /// zero for I and F).
    pub theta: Vec<T>,
    /// Subtraction constant, one entry per output row of `a`.
    pub c: Vec<T>,
}

impl<T: Scalar> Stage<T> {
    fn new(kind: StageKind, a: Matrix<T>) -> Self {
        let theta = vec![T::zero(); a.rows()];
        let c = vec![T::zero(); a.rows()];
        Stage { kind, a, theta, c }
    }
}

/// Full unrolled network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    stages: Vec<Stage<T>>,
    output_space: OutputSpace,
    patch_side: usize,
}

impl<T: Scalar> NetworkParams<T> {
    pub fn from_stages(
        stages: Vec<Stage<T>>,
        output_space: OutputSpace,
        patch_side: usize,
    ) -> Result<Self> {
        let net = NetworkParams {
            stages,
            output_space,
            patch_side,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.len() < 3 {
            return Err(Error::invalid("need at least I, M, F stages (T >= 3)"));
        }
        let first = &self.stages[0];
        let last = &self.stages[self.stages.len() - 1];
        if first.kind != StageKind::Init || last.kind != StageKind::Final {
            return Err(Error::invalid("chain must be I, M..., F"));
        }
        let m = first.a.rows();
        for (i, stage) in self.stages.iter().enumerate() {
            if stage.theta.len() != stage.a.rows() || stage.c.len() != stage.a.rows() {
                return Err(Error::invalid(format!(
                    "stage {i}: theta/c length mismatch"
                )));
            }
            if stage.theta.iter().any(|&t| t < T::zero()) {
                return Err(Error::invalid(format!("stage {i}: negative theta")));
            }
        }
        for (i, stage) in self.stages.iter().enumerate().skip(1) {
            let is_last = i == self.stages.len() - 1;
            match (&stage.kind, is_last) {
                (StageKind::Middle, false) => {
                    if stage.a.rows() != m || stage.a.cols() != m {
                        return Err(Error::invalid(format!("stage {i}: M must be {m}x{m}")));
                    }
                }
                (StageKind::Final, true) => {
                    if stage.a.cols() != m {
                        return Err(Error::invalid("F stage input dim mismatch"));
                    }
                    if stage.a.rows() != self.output_dim() {
                        return Err(Error::invalid("F stage output dim mismatch"));
                    }
                }
                _ => return Err(Error::invalid(format!("stage {i}: unexpected kind"))),
            }
        }
        Ok(())
    }

    pub fn stages(&self) -> &[Stage<T>] {
        &self.stages
    }

    pub fn stages_mut(&mut self) -> &mut [Stage<T>] {
        &mut self.stages
    }

    /// Number of layers T (I + M... + F).
    pub fn depth(&self) -> usize {
        self.stages.len()
    }

    pub fn coeff_dim(&self) -> usize {
        self.stages[0].a.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.stages[0].a.cols()
    }

    pub fn output_space(&self) -> OutputSpace {
        self.output_space
    }

    pub fn patch_side(&self) -> usize {
        self.patch_side
    }

    pub fn output_dim(&self) -> usize {
        let area = self.patch_side * self.patch_side;
        match self.output_space {
            OutputSpace::Rgb192 => 3 * area,
            OutputSpace::Ycbcr422 => 2 * area,
        }
    }

    /// Fold the RGB -> 4:2:2 YCbCr conversion into the final stage,
    /// producing the hardware-facing output space. Exact: the conversion is
    /// affine.
    pub fn to_ycbcr_output(&self) -> Result<NetworkParams<T>> {
        if self.output_space == OutputSpace::Ycbcr422 {
            return Ok(self.clone());
        }
        let (conv, offset) = pipeline::ycbcr422_output_map::<T>(self.patch_side);
        let mut stages = self.stages.clone();
        let f = stages.last_mut().expect("validated chain");
        let a = conv.mul_mat(&f.a);
        let mut c = conv.mul_vec(&f.c);
        for (ci, off) in c.iter_mut().zip(&offset) {
            *ci -= *off;
        }
        f.a = a;
        f.theta = vec![T::zero(); f.a.rows()];
        f.c = c;
        NetworkParams::from_stages(stages, OutputSpace::Ycbcr422, self.patch_side)
    }
}

/// Per-patch forward intermediates, retained for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    input: Vec<T>,
    /// Carry entering each M stage (the shrinkage pre-activation).
    pre_acts: Vec<Vec<T>>,
    /// Shrinkage outputs of each M stage.
    acts: Vec<Vec<T>>,
    output: Vec<T>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn output(&self) -> &[T] {
        &self.output
    }

    pub fn activations(&self) -> &[Vec<T>] {
        &self.acts
    }

    pub fn pre_activations(&self) -> &[Vec<T>] {
        &self.pre_acts
    }
}

/// Run the calculator chain on one raw patch.
pub fn forward<T: Scalar>(params: &NetworkParams<T>, y: &[T]) -> Result<(Vec<T>, ForwardTrace<T>)> {
    if y.len() != params.input_dim() {
        return Err(Error::invalid("input length mismatch"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("input must be finite"));
    }
    let m = params.coeff_dim();
    let n_mid = params.depth() - 2;
    let mut pre_acts = Vec::with_capacity(n_mid);
    let mut acts = Vec::with_capacity(n_mid);

    // I stage.
    let init = &params.stages[0];
    let mut b = init.a.mul_vec(y);
    for (bi, ci) in b.iter_mut().zip(&init.c) {
        *bi -= *ci;
    }
    let mut z_prev = vec![T::zero(); m];

    // M stages.
    for (idx, stage) in params.stages[1..params.depth() - 1].iter().enumerate() {
        let z: Vec<T> = b
            .iter()
            .zip(&stage.theta)
            .map(|(&bi, &ti)| shrink(bi, ti))
            .collect();
        pre_acts.push(std::mem::take(&mut b));
        let is_last_mid = idx == n_mid - 1;
        if is_last_mid {
            // The final stage consumes z only; the carry update is dead.
            b = Vec::new();
        } else {
            let delta = linalg::sub(&z, &z_prev);
            let mut next = stage.a.mul_vec(&delta);
            for ((ni, bi), ci) in next.iter_mut().zip(&pre_acts[idx]).zip(&stage.c) {
                *ni = *ni + *bi - *ci;
            }
            b = next;
        }
        acts.push(z.clone());
        z_prev = z;
    }

    // F stage.
    let fin = params.stages.last().expect("validated chain");
    let mut out = fin.a.mul_vec(&z_prev);
    for (oi, ci) in out.iter_mut().zip(&fin.c) {
        *oi -= *ci;
    }
    let trace = ForwardTrace {
        input: y.to_vec(),
        pre_acts,
        acts,
        output: out.clone(),
    };
    Ok((out, trace))
}

/// Half sum of squared differences, the per-sample training loss.
pub fn loss_mse<T: Scalar>(x_hat: &[T], x_star: &[T]) -> T {
    assert_eq!(x_hat.len(), x_star.len(), "loss dimension mismatch");
    let half = T::from_f64_lossy(0.5);
    let mut acc = T::zero();
    for (&a, &b) in x_hat.iter().zip(x_star) {
        let d = b - a;
        acc += d * d;
    }
    half * acc
}

/// Per-stage parameter gradients, aligned with `NetworkParams::stages`.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub stages: Vec<StageGrad<T>>,
}

#[derive(Debug, Clone)]
pub struct StageGrad<T> {
    pub a: Matrix<T>,
    pub theta: Vec<T>,
    pub c: Vec<T>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(params: &NetworkParams<T>) -> Self {
        let stages = params
            .stages
            .iter()
            .map(|s| StageGrad {
                a: Matrix::zeros(s.a.rows(), s.a.cols()),
                theta: vec![T::zero(); s.theta.len()],
                c: vec![T::zero(); s.c.len()],
            })
            .collect();
        Gradients { stages }
    }

    pub fn add_in_place(&mut self, other: &Gradients<T>) {
        for (a, b) in self.stages.iter_mut().zip(&other.stages) {
            a.a.add_in_place(&b.a);
            for (x, y) in a.theta.iter_mut().zip(&b.theta) {
                *x += *y;
            }
            for (x, y) in a.c.iter_mut().zip(&b.c) {
                *x += *y;
            }
        }
    }
}

/// Exact gradients of `loss_mse(forward(params, y), x_star)` with respect
/// to every stage parameter. The shrinkage subgradient at `|u| == theta`
/// is taken as 0.
pub fn backward<T: Scalar>(
    params: &NetworkParams<T>,
    trace: &ForwardTrace<T>,
    x_star: &[T],
) -> Result<Gradients<T>> {
    let n_mid = params.depth() - 2;
    if trace.pre_acts.len() != n_mid
        || trace.acts.len() != n_mid
        || trace.input.len() != params.input_dim()
        || trace.output.len() != params.output_dim()
        || trace.acts.iter().any(|z| z.len() != params.coeff_dim())
    {
        return Err(Error::InvalidState(
            "intermediates do not match this network".into(),
        ));
    }
    if x_star.len() != params.output_dim() {
        return Err(Error::invalid("target length mismatch"));
    }
    // Guard against parameters that changed since the forward pass: the
    // final stage must reproduce the recorded output.
    let fin = params.stages.last().expect("validated chain");
    let last_z = trace.acts.last().expect("T >= 3");
    {
        let mut check = fin.a.mul_vec(last_z);
        let eps = T::from_f64_lossy(1e-12);
        for ((chk, ci), out) in check.iter_mut().zip(&fin.c).zip(&trace.output) {
            if (*chk - *ci - *out).abs() > eps * (T::one() + out.abs()) {
                return Err(Error::InvalidState(
                    "intermediates are stale for these parameters".into(),
                ));
            }
        }
    }

    let mut grads = Gradients::zeros_like(params);
    // dL/d x_hat for f = 1/2 ||x* - x_hat||^2.
    let dxhat: Vec<T> = trace
        .output
        .iter()
        .zip(x_star)
        .map(|(&o, &t)| o - t)
        .collect();

    // F stage.
    let f_idx = params.depth() - 1;
    grads.stages[f_idx].a.add_outer(T::one(), &dxhat, last_z);
    for (dc, &g) in grads.stages[f_idx].c.iter_mut().zip(&dxhat) {
        *dc = -g;
    }
    let mut gz = fin.a.t_mul_vec(&dxhat);
    let mut gb = vec![T::zero(); params.coeff_dim()];

    // M stages in reverse.
    for idx in (0..n_mid).rev() {
        let stage = &params.stages[1 + idx];
        let u = &trace.pre_acts[idx];
        let z = &trace.acts[idx];
        let z_prev: &[T] = if idx == 0 { &[] } else { &trace.acts[idx - 1] };
        let g = &mut grads.stages[1 + idx];
        // dA and dc only matter when the carry update was consumed
        // (gb != 0, i.e. not the last M stage).
        let delta: Vec<T> = if idx == 0 {
            z.clone()
        } else {
            linalg::sub(z, z_prev)
        };
        g.a.add_outer(T::one(), &gb, &delta);
        for (dc, &gbi) in g.c.iter_mut().zip(&gb) {
            *dc = -gbi;
        }
        // Total gradient reaching this stage's z output.
        let at_gb = stage.a.t_mul_vec(&gb);
        let gz_total: Vec<T> = gz.iter().zip(&at_gb).map(|(&a, &b)| a + b).collect();
        // theta and pre-activation.
        let mut du = gb;
        for i in 0..u.len() {
            let active = u[i].abs() > stage.theta[i];
            if active {
                g.theta[i] = -u[i].signum() * gz_total[i];
                du[i] += gz_total[i];
            } else {
                g.theta[i] = T::zero();
            }
        }
        // Gradient to the previous stage's z via the -A z_prev term.
        gz = at_gb.iter().map(|&v| -v).collect();
        gb = du;
    }

    // I stage.
    grads.stages[0].a.add_outer(T::one(), &gb, &trace.input);
    for (dc, &g) in grads.stages[0].c.iter_mut().zip(&gb) {
        *dc = -g;
    }
    Ok(grads)
}

/// Initialize the unrolled network so that `forward` reproduces ISTA on
/// `dict` run for `t_layers - 2` threshold steps, followed by clear-
/// dictionary synthesis.
pub fn init_from_ista<T: Scalar>(
    dict: &ConcatDictionary<T>,
    cfg: &SolverConfig<T>,
    t_layers: usize,
    output_space: OutputSpace,
) -> Result<NetworkParams<T>> {
    cfg.validate()?;
    if t_layers < 3 {
        return Err(Error::invalid("need T >= 3 layers"));
    }
    let p = dict.projected();
    let m = p.cols();
    let inv_l = T::one() / cfg.lipschitz;
    let theta = cfg.theta_vector(m)?;

    // I: A = Q^T = P^T / L.
    let mut a_init = p.transpose();
    a_init.scale_in_place(inv_l);
    let mut stages = vec![Stage::new(StageKind::Init, a_init)];

    // M: A = S = I - P^T P / L.
    let mut s = p.transpose().mul_mat(p);
    s.scale_in_place(-inv_l);
    for i in 0..m {
        s[(i, i)] += T::one();
    }
    for _ in 0..t_layers - 2 {
        let mut stage = Stage::new(StageKind::Middle, s.clone());
        stage.theta = theta.clone();
        stages.push(stage);
    }

    // F: clear dictionary tiled over the psi blocks.
    let k = dict.clear().atom_count();
    let d = dict.clear().atoms();
    let blocks = m / k;
    let tiled = Matrix::from_fn(d.rows(), m, |r, c| d[(r, c % k)]);
    stages.push(Stage::new(StageKind::Final, tiled));

    let net = NetworkParams::from_stages(stages, OutputSpace::Rgb192, dict.clear().patch_side())?;
    debug_assert_eq!(net.coeff_dim(), blocks * k);
    match output_space {
        OutputSpace::Rgb192 => Ok(net),
        OutputSpace::Ycbcr422 => net.to_ycbcr_output(),
    }
}

/// How to compress the coefficient space down to one dictionary's worth of
/// atoms for the hardware-sized network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompressionInit {
    /// Specialize to one psi block of the concatenated dictionary (ISTA on
    /// that sub-dictionary).
    Block(usize),
    /// Principal directions of the rows of Q^T, scaled by their singular
    /// values, as the first input-dim rows of the I matrix.
    PcaRows,
}

/// Hardware-sized initialization: coefficient width = atom count of one
/// block (192 at defaults), giving the stage shapes 64x192 / 192x192 /
/// 192x{192,128}. Training is expected to recover what the compression
/// discards.
pub fn init_compressed<T: Scalar>(
    dict: &ConcatDictionary<T>,
    cfg: &SolverConfig<T>,
    t_layers: usize,
    output_space: OutputSpace,
    compression: CompressionInit,
) -> Result<NetworkParams<T>> {
    let block = match compression {
        CompressionInit::Block(j) => j,
        CompressionInit::PcaRows => dict.block_count() - 1,
    };
    let sub = dict.restrict_to_block(block)?;
    let l_sub = crate::sparse::lipschitz_upper(sub.projected())?;
    let sub_cfg = SolverConfig {
        lipschitz: l_sub,
        ..cfg.clone()
    };
    let mut net = init_from_ista(&sub, &sub_cfg, t_layers, output_space)?;
    if compression == CompressionInit::PcaRows {
        // Replace the I matrix: principal row directions of the full Q^T,
        // weighted by their singular values (Q Q^T eigen-decomposition).
        let p = dict.projected();
        let mut q = p.clone();
        q.scale_in_place(T::one() / cfg.lipschitz);
        let gram = q.mul_mat(&q.transpose());
        let (vals, vecs) = linalg::jacobi_eigen_sym(&gram);
        let m = net.coeff_dim();
        let in_dim = net.input_dim();
        let a = Matrix::from_fn(m, in_dim, |r, c| {
            if r < in_dim {
                vals[r].max(T::zero()).sqrt() * vecs[(r, c)]
            } else {
                T::zero()
            }
        });
        net.stages[0].a = a;
    }
    Ok(net)
}

/// Training hyper-parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Serialize + serde::de::DeserializeOwned")]
pub struct TrainConfig<T> {
    pub learning_rate: T,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Where the CLI finds training images; unused by the in-memory API.
    pub dataset_path: Option<String>,
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate < T::zero() {
            return Err(Error::invalid("learning rate must be >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        Ok(())
    }
}

/// One training pair: raw patch observation and its ground-truth output.
pub type Sample<T> = (Vec<T>, Vec<T>);

/// Training outcome: checkpointed best parameters and the loss history.
#[derive(Debug, Clone)]
pub struct TrainReport<T> {
    pub params: NetworkParams<T>,
    pub initial_val_loss: T,
    pub best_val_loss: T,
    pub epoch_train_losses: Vec<T>,
}

fn mean_loss<T: Scalar>(params: &NetworkParams<T>, set: &[Sample<T>]) -> Result<T> {
    if set.is_empty() {
        return Ok(T::zero());
    }
    let total: T = set
        .par_chunks(64)
        .map(|chunk| {
            let mut acc = T::zero();
            for (y, x) in chunk {
                let (out, _) = forward(params, y)?;
                acc += loss_mse(&out, x);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<T>>>()?
        .into_iter()
        .fold(T::zero(), |a, b| a + b);
    Ok(total / T::from_f64_lossy(set.len() as f64))
}

/// Shuffled minibatch SGD with per-epoch validation checkpointing.
///
/// Thresholds are projected to be non-negative after every step. Returns
/// the parameters with the best validation loss seen, which is never worse
/// than the initial (ISTA-initialized) validation loss. Aborts with a
/// diagnostic if an epoch's training loss exceeds ten times the initial
/// one.
pub fn sgd_train<T: Scalar>(
    params: &NetworkParams<T>,
    train_set: &[Sample<T>],
    val_set: &[Sample<T>],
    cfg: &TrainConfig<T>,
) -> Result<TrainReport<T>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("training set must be non-empty"));
    }
    params.validate()?;
    let val = if val_set.is_empty() {
        train_set
    } else {
        val_set
    };
    let mut current = params.clone();
    let initial_val_loss = mean_loss(&current, val)?;
    let initial_train_loss = mean_loss(&current, train_set)?;
    let mut best = current.clone();
    let mut best_val = initial_val_loss;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scale_per = |batch: usize| cfg.learning_rate / T::from_f64_lossy(batch as f64);

    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = T::zero();
        for batch in order.chunks(cfg.batch_size) {
            // Per-sample gradients in parallel, reduced in index order so
            // results are independent of the thread count.
            let parts: Vec<Result<(Gradients<T>, T)>> = batch
                .par_chunks(16)
                .map(|ids| {
                    let mut acc = Gradients::zeros_like(&current);
                    let mut loss = T::zero();
                    for &i in ids {
                        let (y, x) = &train_set[i];
                        let (out, trace) = forward(&current, y)?;
                        loss += loss_mse(&out, x);
                        let g = backward(&current, &trace, x)?;
                        acc.add_in_place(&g);
                    }
                    Ok((acc, loss))
                })
                .collect();
            let mut total = Gradients::zeros_like(&current);
            for part in parts {
                let (g, l) = part?;
                total.add_in_place(&g);
                epoch_loss += l;
            }
            if cfg.learning_rate > T::zero() {
                let step = scale_per(batch.len());
                for (stage, grad) in current.stages.iter_mut().zip(&total.stages) {
                    stage.a.add_scaled_in_place(-step, &grad.a);
                    for (t, &g) in stage.theta.iter_mut().zip(&grad.theta) {
                        *t = (*t - step * g).max(T::zero());
                    }
                    for (c, &g) in stage.c.iter_mut().zip(&grad.c) {
                        *c -= step * g;
                    }
                }
            }
        }
        let epoch_mean = epoch_loss / T::from_f64_lossy(train_set.len() as f64);
        epoch_losses.push(epoch_mean);
        let blown_up = !epoch_mean.is_finite()
            || (initial_train_loss > T::zero()
                && epoch_mean > initial_train_loss * T::from_f64_lossy(10.0));
        if blown_up {
            return Err(Error::Diverged(format!(
                "epoch loss {epoch_mean} exceeds 10x the initial loss {initial_train_loss}"
            )));
        }
        let val_loss = mean_loss(&current, val)?;
        if val_loss < best_val {
            best_val = val_loss;
            best = current.clone();
        }
    }
    Ok(TrainReport {
        params: best,
        initial_val_loss,
        best_val_loss: best_val,
        epoch_train_losses: epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::delta_kernel;
    use crate::optics::BlurKernelSet;
    use crate::oracles::fd_gradient;
    use crate::sensor::CfaPattern;
    use crate::sparse::{build_concat_dictionary, dct_dictionary, ista, lipschitz_upper};
    use rand::Rng;

    fn small_dict(q: usize) -> ConcatDictionary<f64> {
        let k = delta_kernel::<f64>(3);
        let mut kernels: [Vec<Matrix<f64>>; 3] = [vec![], vec![], vec![]];
        for (ch, out) in kernels.iter_mut().enumerate() {
            for j in 0..q {
                let mut blur = Matrix::zeros(3, 3);
                // Distinct, normalized, channel- and depth-dependent kernels.
                let w = 0.1 + 0.08 * (j as f64) + 0.03 * ch as f64;
                blur[(1, 1)] = 1.0 - 2.0 * w;
                blur[(0, 1)] = w;
                blur[(2, 1)] = w;
                out.push(blur);
            }
            let _ = &k;
        }
        let set = BlurKernelSet::new((1..=q).map(|v| v as f64).collect(), kernels).unwrap();
        let d = dct_dictionary::<f64>(8, 192).unwrap();
        build_concat_dictionary(&d, &set, CfaPattern::Rggb, (0, 0)).unwrap()
    }

    fn random_patch(rng: &mut impl Rng) -> Vec<f64> {
        (0..64).map(|_| rng.gen::<f64>()).collect()
    }

    #[test]
    fn init_reproduces_ista() {
        let dict = small_dict(2);
        let l = lipschitz_upper(dict.projected()).unwrap();
        let cfg = SolverConfig::new(0.02, l, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &t_layers in &[3usize, 5, 8] {
            let net = init_from_ista(&dict, &cfg, t_layers, OutputSpace::Rgb192).unwrap();
            assert_eq!(net.depth(), t_layers);
            assert_eq!(net.coeff_dim(), 384);
            for _ in 0..10 {
                let y = random_patch(&mut rng);
                let (out, _) = forward(&net, &y).unwrap();
                let solver_cfg = SolverConfig {
                    iterations: t_layers - 2,
                    ..cfg.clone()
                };
                let ista_out = ista(&y, &dict, &solver_cfg).unwrap();
                let x = crate::sparse::reconstruct_patch(&ista_out.z, &dict).unwrap();
                let max_diff = out
                    .iter()
                    .zip(&x)
                    .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()));
                assert!(max_diff <= 1e-10, "T={t_layers} diff={max_diff}");
            }
        }
    }

    #[test]
    fn zero_input_zero_output() {
        let dict = small_dict(1);
        let l = lipschitz_upper(dict.projected()).unwrap();
        let cfg = SolverConfig::new(0.05, l, 1);
        let net = init_from_ista(&dict, &cfg, 3, OutputSpace::Rgb192).unwrap();
        let (out, _) = forward(&net, &vec![0.0; 64]).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn huge_theta_silences_network() {
        let dict = small_dict(2);
        let l = lipschitz_upper(dict.projected()).unwrap();
        let cfg = SolverConfig::new(0.05, l, 1);
        let mut net = init_from_ista(&dict, &cfg, 5, OutputSpace::Rgb192).unwrap();
        for stage in net.stages_mut() {
            if stage.kind == StageKind::Middle {
                stage.theta.iter_mut().for_each(|t| *t = 1e9);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = random_patch(&mut rng);
        let (out, trace) = forward(&net, &y).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
        assert!(trace
            .activations()
            .iter()
            .all(|z| z.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn zero_theta_single_mid_is_linear() {
        let dict = small_dict(1);
        let l = lipschitz_upper(dict.projected()).unwrap();
        let mut cfg = SolverConfig::new(0.0, l, 1);
        cfg.theta = crate::sparse::Theta::Scalar(0.0);
        let net = init_from_ista(&dict, &cfg, 3, OutputSpace::Rgb192).unwrap();
        // x_hat = A_F A_I y exactly.
        let compose = net.stages()[2].a.mul_mat(&net.stages()[0].a);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = random_patch(&mut rng);
        let (out, _) = forward(&net, &y).unwrap();
        let expect = compose.mul_vec(&y);
        for (a, b) in out.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fpga_stage_shapes() {
        let dict = small_dict(8);
        let l = lipschitz_upper(dict.projected()).unwrap();
        let cfg = SolverConfig::new(0.02, l, 1);
        let net = init_compressed(
            &dict,
            &cfg,
            4,
            OutputSpace::Ycbcr422,
            CompressionInit::Block(7),
        )
        .unwrap();
        let dims: Vec<(usize, usize)> = net
            .stages()
            .iter()
            .map(|s| (s.a.rows(), s.a.cols()))
            .collect();
        assert_eq!(dims, vec![(192, 64), (192, 192), (192, 192), (128, 192)]);
        let pca = init_compressed(
            &dict,
            &cfg,
            4,
            OutputSpace::Ycbcr422,
            CompressionInit::PcaRows,
        )
        .unwrap();
        assert_eq!(pca.coeff_dim(), 192);
    }

    /// Flatten all parameters, run f, used for finite-difference checks.
    fn with_params<T: Scalar>(
        net: &NetworkParams<T>,
        flat: &[T],
        f: impl FnOnce(&NetworkParams<T>) -> T,
    ) -> T {
        let mut probe = net.clone();
        let mut off = 0;
        for stage in probe.stages_mut() {
            let len = stage.a.rows() * stage.a.cols();
            stage.a.data_mut().copy_from_slice(&flat[off..off + len]);
            off += len;
            let tl = stage.theta.len();
            stage.theta.copy_from_slice(&flat[off..off + tl]);
            off += tl;
            let cl = stage.c.len();
            stage.c.copy_from_slice(&flat[off..off + cl]);
            off += cl;
        }
        f(&probe)
    }

    fn flatten<T: Scalar>(net: &NetworkParams<T>) -> Vec<T> {
        let mut flat = Vec::new();
        for stage in net.stages() {
            flat.extend_from_slice(stage.a.data());
            flat.extend_from_slice(&stage.theta);
            flat.extend_from_slice(&stage.c);
        }
        flat
    }

    fn random_small_net(rng: &mut ChaCha8Rng, m: usize, t_layers: usize) -> NetworkParams<f64> {
        // patch_side 2: input 4, rgb output 12.
        let side = 2;
        let mut stages = vec![Stage::new(
            StageKind::Init,
            Matrix::from_fn(m, 4, |_, _| rng.gen::<f64>() - 0.5),
        )];
        for _ in 0..t_layers - 2 {
            let mut s = Stage::new(
                StageKind::Middle,
                Matrix::from_fn(m, m, |_, _| 0.3 * (rng.gen::<f64>() - 0.5)),
            );
            s.theta = (0..m).map(|_| 0.05 + 0.1 * rng.gen::<f64>()).collect();
            s.c = (0..m).map(|_| 0.1 * (rng.gen::<f64>() - 0.5)).collect();
            stages.push(s);
        }
        let mut f = Stage::new(
            StageKind::Final,
            Matrix::from_fn(3 * side * side, m, |_, _| rng.gen::<f64>() - 0.5),
        );
        f.c = (0..3 * side * side)
            .map(|_| 0.1 * (rng.gen::<f64>() - 0.5))
            .collect();
        stages.push(f);
        NetworkParams::from_stages(stages, OutputSpace::Rgb192, side).unwrap()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..10 {
            let m = 3 + (trial % 4);
            let t_layers = 3 + (trial % 3);
            let net = random_small_net(&mut rng, m, t_layers);
            let y: Vec<f64> = (0..4).map(|_| rng.gen::<f64>() - 0.5).collect();
            let x_star: Vec<f64> = (0..12).map(|_| rng.gen::<f64>() - 0.5).collect();
            let (_, trace) = forward(&net, &y).unwrap();
            let analytic = backward(&net, &trace, &x_star).unwrap();
            let flat = flatten(&net);
            let numeric = fd_gradient(
                |p| {
                    with_params(&net, p, |probe| {
                        let (out, _) = forward(probe, &y).unwrap();
                        loss_mse(&out, &x_star)
                    })
                },
                &flat,
                1e-5,
            );
            let mut flat_analytic = Vec::new();
            for g in &analytic.stages {
                flat_analytic.extend_from_slice(g.a.data());
                flat_analytic.extend_from_slice(&g.theta);
                flat_analytic.extend_from_slice(&g.c);
            }
            for (i, (&a, &n)) in flat_analytic.iter().zip(&numeric).enumerate() {
                let scale = a.abs().max(n.abs()).max(1e-3);
                assert!(
                    (a - n).abs() / scale < 1e-4,
                    "trial {trial} param {i}: analytic {a} vs numeric {n}"
                );
            }
        }
    }

    #[test]
    fn zero_target_zero_input_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = random_small_net(&mut rng, 4, 4);
        let (out, trace) = forward(&net, &[0.0; 4]).unwrap();
        // Target equal to the actual output: loss is exactly zero, and so
        // is every gradient.
        let grads = backward(&net, &trace, &out).unwrap();
        for g in &grads.stages {
            assert!(g.a.data().iter().all(|&v| v == 0.0));
            assert!(g.theta.iter().all(|&v| v == 0.0));
            assert!(g.c.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn theta_gradient_zero_for_inactive_units() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut net = random_small_net(&mut rng, 4, 4);
        // Huge thresholds: nothing activates, so no theta gradient.
        for s in net.stages_mut() {
            if s.kind == StageKind::Middle {
                s.theta.iter_mut().for_each(|t| *t = 100.0);
            }
        }
        let y = [0.3, -0.2, 0.5, 0.1];
        let (_, trace) = forward(&net, &y).unwrap();
        let grads = backward(&net, &trace, &[0.7; 12]).unwrap();
        for g in &grads.stages {
            assert!(g.theta.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn backward_detects_stale_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let net = random_small_net(&mut rng, 4, 4);
        let y = [0.3, -0.2, 0.5, 0.1];
        let (_, trace) = forward(&net, &y).unwrap();
        let mut tampered = net.clone();
        tampered.stages_mut()[3].a.data_mut()[0] += 0.5;
        assert!(matches!(
            backward(&tampered, &trace, &[0.0; 12]),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn loss_mse_examples() {
        assert_eq!(loss_mse(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        let d = 5;
        let xh = vec![1.0; d];
        let xs = vec![0.0; d];
        assert!((loss_mse(&xh, &xs) - d as f64 / 2.0).abs() < 1e-12);
        // Independent summation oracle on a random pair.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a: Vec<f64> = (0..17).map(|_| rng.gen()).collect();
        let b: Vec<f64> = (0..17).map(|_| rng.gen()).collect();
        let mut oracle = 0.0;
        for i in 0..17 {
            oracle += (b[i] - a[i]).powi(2);
        }
        oracle *= 0.5;
        assert!((loss_mse(&a, &b) - oracle).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_keeps_params_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let net = random_small_net(&mut rng, 4, 4);
        let samples: Vec<Sample<f64>> = (0..8)
            .map(|_| {
                (
                    (0..4).map(|_| rng.gen::<f64>()).collect(),
                    (0..12).map(|_| rng.gen::<f64>()).collect(),
                )
            })
            .collect();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            batch_size: 4,
            epochs: 2,
            seed: 5,
            dataset_path: None,
        };
        let report = sgd_train(&net, &samples, &[], &cfg).unwrap();
        assert_eq!(report.params, net);
    }

    #[test]
    fn training_reduces_loss_on_single_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let net = random_small_net(&mut rng, 6, 4);
        let sample: Sample<f64> = (
            (0..4).map(|_| rng.gen::<f64>()).collect(),
            (0..12).map(|_| rng.gen::<f64>()).collect(),
        );
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            batch_size: 1,
            epochs: 10,
            seed: 6,
            dataset_path: None,
        };
        let report = sgd_train(&net, std::slice::from_ref(&sample), &[], &cfg).unwrap();
        for w in report.epoch_train_losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss went up: {w:?}");
        }
        assert!(report.best_val_loss <= report.initial_val_loss);
    }

    #[test]
    fn runaway_learning_rate_aborts_with_diagnostic() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let net = random_small_net(&mut rng, 6, 4);
        let samples: Vec<Sample<f64>> = (0..16)
            .map(|_| {
                (
                    (0..4).map(|_| rng.gen::<f64>()).collect(),
                    (0..12).map(|_| rng.gen::<f64>()).collect(),
                )
            })
            .collect();
        let cfg = TrainConfig {
            learning_rate: 1e3,
            batch_size: 4,
            epochs: 5,
            seed: 5,
            dataset_path: None,
        };
        assert!(matches!(
            sgd_train(&net, &samples, &[], &cfg),
            Err(Error::Diverged(_))
        ));
    }

    #[test]
    fn training_is_deterministic_in_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let net = random_small_net(&mut rng, 5, 5);
        let samples: Vec<Sample<f64>> = (0..32)
            .map(|_| {
                (
                    (0..4).map(|_| rng.gen::<f64>()).collect(),
                    (0..12).map(|_| rng.gen::<f64>()).collect(),
                )
            })
            .collect();
        let cfg = TrainConfig {
            learning_rate: 5e-4,
            batch_size: 8,
            epochs: 3,
            seed: 99,
            dataset_path: None,
        };
        let a = sgd_train(&net, &samples, &samples[..8], &cfg).unwrap();
        let b = sgd_train(&net, &samples, &samples[..8], &cfg).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn ycbcr_fold_matches_post_conversion() {
        let dict = small_dict(2);
        let l = lipschitz_upper(dict.projected()).unwrap();
        let cfg = SolverConfig::new(0.02, l, 1);
        let rgb_net = init_from_ista(&dict, &cfg, 4, OutputSpace::Rgb192).unwrap();
        let ycc_net = rgb_net.to_ycbcr_output().unwrap();
        assert_eq!(ycc_net.output_dim(), 128);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let y = random_patch(&mut rng);
        let (rgb, _) = forward(&rgb_net, &y).unwrap();
        let (ycc, _) = forward(&ycc_net, &y).unwrap();
        let expect = pipeline::rgb_to_ycbcr422(&rgb).unwrap();
        for (a, b) in ycc.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
