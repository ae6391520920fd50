//! Control losses, their gradients and Riemannian ADAM on products of
//! unitary groups.
//!
//! Gradients use the real-gradient convention: for a real loss `L` of a
//! complex matrix `u`, the returned `G` satisfies `dL = Re Tr(G† du)`, i.e.
//! `G = 2·∂L/∂ū`. Then `u − η·G` is the steepest-descent step, and for
//! `L = ‖u − V‖_F²` the gradient is `2(u − V)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::rom::{choi_from_states, ChoiMatrix, EffState, ReducedOrderModel};
use crate::tensor::{self, CMat, C64};

/// Unitarity tolerance for control gates.
pub const UNITARY_TOL: f64 = 1e-9;

/// Ordered control gates on the contiguous window `[k_start, k_stop)`.
///
/// Gate `u_k` acts on the target spin after step `k` and before step
/// `k+1`. `k = N` (after the last step) is admitted so that a closing flip
/// can be expressed.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSequence {
    k_start: usize,
    gates: Vec<CMat>,
}

impl ControlSequence {
    pub fn new(k_start: usize, gates: Vec<CMat>) -> Result<Self> {
        if let Some(first) = gates.first() {
            let d = first.nrows();
            for (i, g) in gates.iter().enumerate() {
                if g.nrows() != d || g.ncols() != d {
                    return invalid(format!("control {i} is {}x{}, expected {d}x{d}", g.nrows(), g.ncols()));
                }
                if !tensor::is_finite(g) {
                    return Err(Error::NonFinite("control gate"));
                }
                let res = tensor::unitarity_residual(g);
                if res > UNITARY_TOL {
                    return invalid(format!("control {i} is not unitary (residual {res:.3e})"));
                }
            }
        }
        Ok(Self { k_start, gates })
    }

    /// Skips the unitarity check, for finite-difference probes of the
    /// Euclidean gradient. Losses accept such sequences; the optimizer
    /// never produces them.
    pub fn new_unchecked(k_start: usize, gates: Vec<CMat>) -> Self {
        Self { k_start, gates }
    }

    pub fn empty() -> Self {
        Self { k_start: 0, gates: vec![] }
    }

    pub fn identity(k_start: usize, k_stop: usize, d: usize) -> Self {
        Self { k_start, gates: vec![tensor::identity(d); k_stop.saturating_sub(k_start)] }
    }

    /// One gate at time `k`.
    pub fn single(k: usize, u: CMat) -> Result<Self> {
        Self::new(k, vec![u])
    }

    /// Haar-random gates on `[k_start, k_stop)`.
    pub fn random(k_start: usize, k_stop: usize, d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gates = (k_start..k_stop).map(|_| tensor::random_unitary(d, &mut rng)).collect();
        Self { k_start, gates }
    }

    pub fn k_start(&self) -> usize {
        self.k_start
    }

    pub fn k_stop(&self) -> usize {
        self.k_start + self.gates.len()
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn gates(&self) -> &[CMat] {
        &self.gates
    }

    pub fn into_gates(self) -> Vec<CMat> {
        self.gates
    }

    pub fn gate_at(&self, k: usize) -> Option<&CMat> {
        k.checked_sub(self.k_start).and_then(|i| self.gates.get(i))
    }

    pub fn max_unitarity_residual(&self) -> f64 {
        self.gates.iter().map(tensor::unitarity_residual).fold(0.0, f64::max)
    }

    /// Checks the window against a model with `n_steps` steps and a
    /// `d`-dimensional target.
    pub fn validate_for(&self, n_steps: usize, d: usize) -> Result<()> {
        if self.is_empty() {
            return Ok(());
        }
        if self.k_stop() > n_steps + 1 {
            return invalid(format!(
                "control window [{}, {}) extends past the last time {n_steps}",
                self.k_start,
                self.k_stop()
            ));
        }
        if self.gates[0].nrows() != d {
            return invalid(format!("controls act on dimension {}, target has {d}", self.gates[0].nrows()));
        }
        Ok(())
    }
}

/// `σx` at time `k`: the textbook spin-echo flip.
pub fn spin_echo(k: usize) -> ControlSequence {
    ControlSequence { k_start: k, gates: vec![tensor::pauli_x()] }
}

/// `σx` at time `k` and again after the last step `N`.
pub fn two_flip_echo(k: usize, n_steps: usize) -> Result<ControlSequence> {
    if k > n_steps {
        return invalid(format!("flip time {k} beyond {n_steps} steps"));
    }
    let mut gates = vec![tensor::identity(2); n_steps + 1 - k];
    gates[0] = tensor::pauli_x();
    *gates.last_mut().expect("non-empty") = tensor::pauli_x();
    Ok(ControlSequence { k_start: k, gates })
}

/// Bloch vector and state of one tetrahedron vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct TetraState {
    pub bloch: [f64; 3],
    pub psi: [C64; 2],
}

impl TetraState {
    pub fn from_bloch(s: [f64; 3]) -> Self {
        let theta = s[2].clamp(-1.0, 1.0).acos();
        let phi = s[1].atan2(s[0]);
        let psi = [C64::new((theta / 2.0).cos(), 0.0), C64::from_polar((theta / 2.0).sin(), phi)];
        Self { bloch: s, psi }
    }

    pub fn density(&self) -> CMat {
        let v = tensor::column(&self.psi);
        &v * v.adjoint()
    }
}

/// The four pure states whose Bloch vectors form a regular tetrahedron,
/// the first one being `|↑⟩`.
pub fn tetrahedron_states() -> [TetraState; 4] {
    let r2 = 2f64.sqrt();
    [
        [0.0, 0.0, 1.0],
        [2.0 * r2 / 3.0, 0.0, -1.0 / 3.0],
        [-r2 / 3.0, (2.0f64 / 3.0).sqrt(), -1.0 / 3.0],
        [-r2 / 3.0, -(2.0f64 / 3.0).sqrt(), -1.0 / 3.0],
    ]
    .map(TetraState::from_bloch)
}

/// A differentiable function of a control sequence.
pub trait Objective: Sync {
    fn n_steps(&self) -> usize;

    fn d(&self) -> usize;

    fn loss(&self, controls: &ControlSequence) -> Result<f64>;

    /// Loss and per-gate Euclidean gradients.
    fn loss_and_grad(&self, controls: &ControlSequence) -> Result<(f64, Vec<CMat>)>;
}

/// Seeds `g_a = 2 Σ_{t,b} P[(s,a),(t,b)] Ψ_b[t]` for a loss with
/// `dL = Re Tr(P dJ)` where `J` is the Choi matrix of the basis images.
fn choi_seeds(p: &CMat, states: &[&EffState]) -> Vec<EffState> {
    let d_in = states.len();
    let (rl, d, rr) = states[0].dims();
    (0..d_in)
        .map(|a| {
            let mut g = EffState::zeros(rl, d, rr);
            for (b, psi_b) in states.iter().enumerate() {
                let block = faer::Mat::from_fn(d, d, |s, t| p[(s * d_in + a, t * d_in + b)] * 2.0);
                g.add_assign(&psi_b.apply_system(&block));
            }
            g
        })
        .collect()
}

/// Euclidean gradient of `‖J − T‖_F²` with respect to `J`, as `P` with
/// `dL = Re Tr(P dJ)`.
fn frobenius_probe(j: &ChoiMatrix, target: &ChoiMatrix) -> (f64, CMat) {
    let diff = j.unnormalized() - target.unnormalized();
    (tensor::frobenius_sq(&diff), tensor::scale_real(&diff, 2.0))
}

/// `−I(Ω)` with `Ω = J/Tr J` and its `P` with `dL = Re Tr(P dJ)`.
fn neg_mi_probe(j: &ChoiMatrix) -> Result<(f64, CMat)> {
    let (d_out, d_in) = (j.d_out(), j.d_in());
    let t = tensor::trace(j.unnormalized()).re;
    let omega = j.trace_one();
    let rho1 = tensor::partial_trace_second(&omega, d_out, d_in);
    let rho2 = tensor::partial_trace_first(&omega, d_out, d_in);
    let mi = crate::rom::mutual_information(&omega, d_out, d_in)?;
    // G_X = log2 X + I/ln 2 = −dS/dX.
    let g = |x: &CMat| -> Result<CMat> {
        let e = tensor::eigh(x)?;
        let mut vd = e.vectors.clone();
        for (c, &l) in e.values.iter().enumerate() {
            let f = l.max(crate::rom::ENTROPY_FLOOR).log2() + std::f64::consts::LOG2_E;
            for r in 0..vd.nrows() {
                vd[(r, c)] *= f;
            }
        }
        Ok(&vd * e.vectors.adjoint())
    };
    let h = tensor::kron(&g(&rho1)?, &tensor::identity(d_in)) + tensor::kron(&tensor::identity(d_out), &g(&rho2)?)
        - g(&omega)?;
    let h_omega = tensor::inner(&h, &omega).re;
    let dim = d_out * d_in;
    let p = tensor::scale_real(&h, 1.0 / t) - tensor::scale_real(&tensor::identity(dim), h_omega / t);
    Ok((-mi, p))
}

/// Loss on the channels of one model at selected times.
struct ChannelLoss<'a, F> {
    rom: &'a ReducedOrderModel,
    times: Vec<usize>,
    probe: F,
}

impl<F> ChannelLoss<'_, F>
where
    F: Fn(usize, &ChoiMatrix) -> Result<(f64, CMat)> + Sync,
{
    fn eval(&self, controls: &ControlSequence, with_grad: bool) -> Result<(f64, Vec<CMat>)> {
        let basis = self.rom.basis_states(Some(controls))?;
        let mut loss = 0.0;
        let mut seeds: Vec<Vec<(usize, EffState)>> = vec![vec![]; basis.len()];
        for (idx, &k) in self.times.iter().enumerate() {
            let at_k: Vec<&EffState> = basis.iter().map(|b| &b[k]).collect();
            let (l, p) = (self.probe)(idx, &choi_from_states(&at_k))?;
            loss += l;
            if with_grad {
                for (a, g) in choi_seeds(&p, &at_k).into_iter().enumerate() {
                    seeds[a].push((k, g));
                }
            }
        }
        if !with_grad {
            return Ok((loss, vec![]));
        }
        let mut grads = vec![tensor::zeros(self.rom.d(), self.rom.d()); controls.len()];
        for (states, seed) in basis.iter().zip(&seeds) {
            let part = self.rom.backward(states, Some(controls), &|k| {
                seed.iter().filter(|(kk, _)| *kk == k).map(|(_, g)| g.clone()).reduce(|mut a, b| {
                    a.add_assign(&b);
                    a
                })
            });
            for (g, p) in grads.iter_mut().zip(part) {
                *g += p;
            }
        }
        Ok((loss, grads))
    }
}

/// `‖Φ(N) − Id‖_F²` on unnormalized Choi matrices.
pub struct IdentityRecover<'a> {
    pub rom: &'a ReducedOrderModel,
}

/// `‖Φ(N/2) − Δ‖_F² + ‖Φ(N) − Id‖_F²`.
pub struct EraseRecover<'a> {
    pub rom: &'a ReducedOrderModel,
}

/// `−I(N)` in bits.
pub struct Echo<'a> {
    pub rom: &'a ReducedOrderModel,
}

/// `Σ_i ‖|φ_i⟩⟨φ_i| − ρ_i(N)‖_F²` over models that differ only in the
/// state of the sending spin.
pub struct Transfer<'a> {
    pub roms: &'a [ReducedOrderModel],
    pub targets: Vec<CMat>,
}

impl<'a> EraseRecover<'a> {
    pub fn new(rom: &'a ReducedOrderModel) -> Result<Self> {
        if !rom.n_steps().is_multiple_of(2) {
            return invalid(format!("erase-recover needs an even number of steps, got {}", rom.n_steps()));
        }
        Ok(Self { rom })
    }
}

impl<'a> Transfer<'a> {
    pub fn new(roms: &'a [ReducedOrderModel], targets: Vec<CMat>) -> Result<Self> {
        if roms.is_empty() || roms.len() != targets.len() {
            return invalid(format!("{} models for {} target states", roms.len(), targets.len()));
        }
        let (n, l, d) = (roms[0].n_steps(), roms[0].target(), roms[0].d());
        if roms.iter().any(|r| r.n_steps() != n || r.target() != l || r.d() != d) {
            return invalid("transfer models must share steps, target spin and dimension");
        }
        if targets.iter().any(|t| t.nrows() != d || t.ncols() != d) {
            return invalid(format!("target states must be {d}x{d}"));
        }
        Ok(Self { roms, targets })
    }

    /// The four tetrahedron states as targets.
    pub fn tetrahedron(roms: &'a [ReducedOrderModel]) -> Result<Self> {
        Self::new(roms, tetrahedron_states().iter().map(TetraState::density).collect())
    }

    /// Final states of the receiving spin, one per model.
    pub fn final_states(&self, controls: &ControlSequence) -> Result<Vec<CMat>> {
        self.roms
            .par_iter()
            .map(|r| Ok(r.propagate(Some(controls))?.rho.pop().expect("trajectory is non-empty")))
            .collect()
    }

    fn eval(&self, controls: &ControlSequence, with_grad: bool) -> Result<(f64, Vec<CMat>)> {
        let n = self.roms[0].n_steps();
        let parts: Vec<(f64, Vec<CMat>)> = self
            .roms
            .par_iter()
            .zip(&self.targets)
            .map(|(rom, target)| {
                let states = rom.states(rom.psi_s0(), Some(controls))?;
                let rho = states[n].reduced();
                let diff = &rho - target;
                let loss = tensor::frobenius_sq(&diff);
                if !with_grad {
                    return Ok((loss, vec![]));
                }
                let seed = states[n].apply_system(&tensor::scale_real(&diff, 4.0));
                let g = rom.backward(&states, Some(controls), &|k| (k == n).then(|| seed.clone()));
                Ok((loss, g))
            })
            .collect::<Result<_>>()?;
        let mut loss = 0.0;
        let mut grads = vec![tensor::zeros(self.roms[0].d(), self.roms[0].d()); if with_grad { controls.len() } else { 0 }];
        for (l, g) in parts {
            loss += l;
            for (acc, gi) in grads.iter_mut().zip(g) {
                *acc += gi;
            }
        }
        Ok((loss, grads))
    }
}

fn identity_probe(_: usize, j: &ChoiMatrix) -> Result<(f64, CMat)> {
    Ok(frobenius_probe(j, &ChoiMatrix::identity(j.d_out())))
}

fn erase_probe(idx: usize, j: &ChoiMatrix) -> Result<(f64, CMat)> {
    let target = if idx == 0 { ChoiMatrix::depolarizing(j.d_out()) } else { ChoiMatrix::identity(j.d_out()) };
    Ok(frobenius_probe(j, &target))
}

fn echo_probe(_: usize, j: &ChoiMatrix) -> Result<(f64, CMat)> {
    neg_mi_probe(j)
}

macro_rules! channel_objective {
    ($ty:ident, $times:expr, $probe:expr) => {
        impl Objective for $ty<'_> {
            fn n_steps(&self) -> usize {
                self.rom.n_steps()
            }

            fn d(&self) -> usize {
                self.rom.d()
            }

            fn loss(&self, controls: &ControlSequence) -> Result<f64> {
                let times: fn(usize) -> Vec<usize> = $times;
                let cl = ChannelLoss { rom: self.rom, times: times(self.rom.n_steps()), probe: $probe };
                Ok(cl.eval(controls, false)?.0)
            }

            fn loss_and_grad(&self, controls: &ControlSequence) -> Result<(f64, Vec<CMat>)> {
                let times: fn(usize) -> Vec<usize> = $times;
                let cl = ChannelLoss { rom: self.rom, times: times(self.rom.n_steps()), probe: $probe };
                cl.eval(controls, true)
            }
        }
    };
}

channel_objective!(IdentityRecover, |n| vec![n], identity_probe);
channel_objective!(EraseRecover, |n| vec![n / 2, n], erase_probe);
channel_objective!(Echo, |n| vec![n], echo_probe);

impl Objective for Transfer<'_> {
    fn n_steps(&self) -> usize {
        self.roms[0].n_steps()
    }

    fn d(&self) -> usize {
        self.roms[0].d()
    }

    fn loss(&self, controls: &ControlSequence) -> Result<f64> {
        Ok(self.eval(controls, false)?.0)
    }

    fn loss_and_grad(&self, controls: &ControlSequence) -> Result<(f64, Vec<CMat>)> {
        self.eval(controls, true)
    }
}

/// Sum of objectives sharing one control window, e.g. over disorder
/// realizations. Terms are evaluated in parallel and summed in order.
pub struct SumObjective<'a> {
    pub terms: Vec<Box<dyn Objective + 'a>>,
}

impl Objective for SumObjective<'_> {
    fn n_steps(&self) -> usize {
        self.terms[0].n_steps()
    }

    fn d(&self) -> usize {
        self.terms[0].d()
    }

    fn loss(&self, controls: &ControlSequence) -> Result<f64> {
        let parts: Vec<f64> = self.terms.par_iter().map(|t| t.loss(controls)).collect::<Result<_>>()?;
        Ok(parts.iter().sum())
    }

    fn loss_and_grad(&self, controls: &ControlSequence) -> Result<(f64, Vec<CMat>)> {
        let parts: Vec<(f64, Vec<CMat>)> =
            self.terms.par_iter().map(|t| t.loss_and_grad(controls)).collect::<Result<_>>()?;
        let mut loss = 0.0;
        let mut grads = vec![tensor::zeros(self.d(), self.d()); controls.len()];
        for (l, g) in parts {
            loss += l;
            for (acc, gi) in grads.iter_mut().zip(g) {
                *acc += gi;
            }
        }
        Ok((loss, grads))
    }
}

/// `Σ_i ‖u_i − V_i‖_F²`; a convex-like toy problem for the optimizer.
pub struct GateMatching {
    pub targets: Vec<CMat>,
}

impl Objective for GateMatching {
    fn n_steps(&self) -> usize {
        self.targets.len()
    }

    fn d(&self) -> usize {
        self.targets[0].nrows()
    }

    fn loss(&self, controls: &ControlSequence) -> Result<f64> {
        Ok(controls.gates().iter().zip(&self.targets).map(|(u, v)| tensor::frobenius_sq(&(u - v))).sum())
    }

    fn loss_and_grad(&self, controls: &ControlSequence) -> Result<(f64, Vec<CMat>)> {
        let grads = controls.gates().iter().zip(&self.targets).map(|(u, v)| tensor::scale_real(&(u - v), 2.0)).collect();
        Ok((self.loss(controls)?, grads))
    }
}

pub fn loss_identity_recover(rom: &ReducedOrderModel, controls: &ControlSequence) -> Result<f64> {
    IdentityRecover { rom }.loss(controls)
}

pub fn loss_erase_recover(rom: &ReducedOrderModel, controls: &ControlSequence) -> Result<f64> {
    EraseRecover::new(rom)?.loss(controls)
}

pub fn loss_echo(rom: &ReducedOrderModel, controls: &ControlSequence) -> Result<f64> {
    Echo { rom }.loss(controls)
}

pub fn loss_transfer(roms: &[ReducedOrderModel], controls: &ControlSequence) -> Result<f64> {
    Transfer::tetrahedron(roms)?.loss(controls)
}

/// Tangent projection `G − u·herm(u†G)` at `u`.
pub fn riemannian_grad(u: &CMat, g: &CMat) -> CMat {
    let x = u.adjoint() * g;
    let herm = faer::Mat::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] + x[(j, i)].conj()) * 0.5);
    g - u * herm
}

/// Polar retraction of `u + step` onto the unitary group.
pub fn retract(u: &CMat, step: &CMat) -> Result<CMat> {
    if !tensor::is_finite(step) {
        return Err(Error::NonFinite("retraction step"));
    }
    tensor::polar_factor(&(u + step))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    Identity,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub max_iters: usize,
    /// Stop when the best loss improved by less than this fraction over
    /// the last [`STALL_WINDOW`] iterations.
    pub tol: f64,
    pub seed: u64,
    pub init: Init,
}

/// Iterations over which relative improvement is measured.
pub const STALL_WINDOW: usize = 200;

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            max_iters: 10_000,
            tol: 1e-7,
            seed: 0,
            init: Init::Identity,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return invalid(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) || b == 0.0 {
                return invalid(format!("{name} must lie in (0, 1), got {b}"));
            }
        }
        if !(self.eps_adam > 0.0) {
            return invalid("eps_adam must be positive");
        }
        if self.max_iters == 0 {
            return invalid("max_iters must be at least 1");
        }
        if !(self.tol >= 0.0) {
            return invalid("tol must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryRow {
    pub iter: usize,
    pub loss: f64,
    /// Frobenius norm of all Riemannian gradients together.
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub struct OptimizeResult {
    pub controls: ControlSequence,
    pub best_loss: f64,
    pub history: Vec<HistoryRow>,
    pub converged: bool,
}

/// Riemannian ADAM over the gates of the window `[k_start, k_stop)`.
///
/// Momentum lives in ambient coordinates and is projected onto the tangent
/// space at the current point before each use; the second moment is one
/// scalar per gate. The best iterate seen is returned.
pub fn optimize(objective: &dyn Objective, k_start: usize, k_stop: usize, cfg: &OptimizerConfig) -> Result<OptimizeResult> {
    optimize_with(objective, k_start, k_stop, cfg, &mut |_, _| {})
}

/// [`optimize`] calling `observer(iter, controls)` on every iterate.
pub fn optimize_with(
    objective: &dyn Objective,
    k_start: usize,
    k_stop: usize,
    cfg: &OptimizerConfig,
    observer: &mut dyn FnMut(usize, &ControlSequence),
) -> Result<OptimizeResult> {
    cfg.validate()?;
    if k_stop < k_start {
        return invalid(format!("empty window [{k_start}, {k_stop})"));
    }
    let d = objective.d();
    let mut controls = match cfg.init {
        Init::Identity => ControlSequence::identity(k_start, k_stop, d),
        Init::Random => ControlSequence::random(k_start, k_stop, d, cfg.seed),
    };
    controls.validate_for(objective.n_steps(), d)?;
    if controls.is_empty() {
        let loss = objective.loss(&controls)?;
        return Ok(OptimizeResult {
            controls,
            best_loss: loss,
            history: vec![HistoryRow { iter: 0, loss, grad_norm: 0.0 }],
            converged: true,
        });
    }

    let n = controls.len();
    let mut m: Vec<CMat> = vec![tensor::zeros(d, d); n];
    let mut v = vec![0.0; n];
    let mut best = controls.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_trace = Vec::with_capacity(cfg.max_iters);
    let mut history = Vec::with_capacity(cfg.max_iters);
    let mut converged = false;

    for iter in 0..cfg.max_iters {
        observer(iter, &controls);
        let (loss, grads) = objective.loss_and_grad(&controls)?;
        if !loss.is_finite() || grads.iter().any(|g| !tensor::is_finite(g)) {
            return Err(Error::Diverged(format!("non-finite loss or gradient at iteration {iter}")));
        }
        let rgrads: Vec<CMat> = controls.gates.iter().zip(&grads).map(|(u, g)| riemannian_grad(u, g)).collect();
        let grad_norm = rgrads.iter().map(tensor::frobenius_sq).sum::<f64>().sqrt();
        history.push(HistoryRow { iter, loss, grad_norm });
        if loss < best_loss {
            best_loss = loss;
            best = controls.clone();
        }
        best_trace.push(best_loss);
        if iter >= STALL_WINDOW {
            let old = best_trace[iter - STALL_WINDOW];
            if (old - best_loss) <= cfg.tol * old.abs().max(1e-300) {
                converged = true;
                break;
            }
        }
        if iter + 1 == cfg.max_iters {
            break;
        }

        let t = (iter + 1) as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..n {
            let u = &controls.gates[i];
            let m_prev = riemannian_grad(u, &m[i]);
            m[i] = tensor::scale_real(&m_prev, cfg.beta1) + tensor::scale_real(&rgrads[i], 1.0 - cfg.beta1);
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * tensor::frobenius_sq(&rgrads[i]);
            let scale = -cfg.learning_rate / c1 / ((v[i] / c2).sqrt() + cfg.eps_adam);
            let step = tensor::scale_real(&m[i], scale);
            let u_next = retract(u, &step)?;
            m[i] = riemannian_grad(&u_next, &m[i]);
            controls.gates[i] = u_next;
        }
    }

    Ok(OptimizeResult { controls: best, best_loss, history, converged })
}
