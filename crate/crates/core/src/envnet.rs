//! Environment networks and their compression.
//!
//! A joint system–environment unitary is split across the system cut into
//! dyads `U = Σ_i A_i ⊗ B_i` ([`decompose_gate`]). Repeating the step `N`
//! times gives an MPS-like environment network `B_{i_N} ⋯ B_{i_1}|ψ_E⟩`
//! that [`truncate_sweep`] compresses step by step by projecting the
//! environment density matrix onto its dominant eigenvectors.
//!
//! [`build_chain_environment`] handles chain-shaped environments without
//! ever forming a `2^(n−1)`-dimensional object: the spins on each side of
//! the target are absorbed one at a time, each absorbed spin together with
//! the already compressed remainder acting as the environment of the next
//! spin inward.

use faer::Mat;

use crate::error::{invalid, Error, Result};
use crate::models::CircuitLayout;
use crate::tensor::{self, CMat, C64, ONE};

/// Singular values below this fraction of the largest are treated as zero
/// when splitting a gate into dyads.
pub const SCHMIDT_CUTOFF: f64 = 1e-12;

/// Relative singular-value floor of the environment density matrix square
/// root. Anything below is rounding noise of exactly rank-deficient states.
const SPECTRUM_FLOOR: f64 = 1e-13;

/// Eigenvalue gap under which a rank cut is reported as degenerate.
pub const DEGENERACY_GAP: f64 = 1e-12;

/// Operator-Schmidt decomposition `U = Σ_i A_i ⊗ B_i`.
///
/// The `A_i` are orthonormal in the Hilbert–Schmidt inner product, the
/// singular values are absorbed into the `B_i`.
#[derive(Clone, Debug)]
pub struct DyadicDecomposition {
    d_s: usize,
    d_e: usize,
    system: Vec<CMat>,
    environment: Vec<CMat>,
}

impl DyadicDecomposition {
    pub fn chi(&self) -> usize {
        self.system.len()
    }

    pub fn d_s(&self) -> usize {
        self.d_s
    }

    pub fn d_e(&self) -> usize {
        self.d_e
    }

    /// The `A_i`, `d_S × d_S`.
    pub fn system(&self) -> &[CMat] {
        &self.system
    }

    /// The `B_i`, `d_E × d_E`.
    pub fn environment(&self) -> &[CMat] {
        &self.environment
    }

    pub fn reconstruct(&self) -> CMat {
        let dim = self.d_s * self.d_e;
        let mut u = tensor::zeros(dim, dim);
        for (a, b) in self.system.iter().zip(&self.environment) {
            u += tensor::kron(a, b);
        }
        u
    }
}

/// Splits `u` acting on `system ⊗ environment` (system index most
/// significant) into dyads.
pub fn decompose_gate(u: &CMat, d_s: usize, d_e: usize) -> Result<DyadicDecomposition> {
    if d_s == 0 || d_e == 0 || u.nrows() != d_s * d_e || u.ncols() != d_s * d_e {
        return invalid(format!(
            "cannot split a {}x{} operator into {d_s} x {d_e} factors",
            u.nrows(),
            u.ncols()
        ));
    }
    tensor::ensure_unitary(u, 1e-10)?;
    // Regroup U[(s,e),(s',e')] as M[(s,s'),(e,e')].
    let m = Mat::from_fn(d_s * d_s, d_e * d_e, |row, col| {
        let (s, sp) = (row / d_s, row % d_s);
        let (e, ep) = (col / d_e, col % d_e);
        u[(s * d_e + e, sp * d_e + ep)]
    });
    let dec = tensor::svd(&m)?;
    let cutoff = SCHMIDT_CUTOFF * dec.s.first().copied().unwrap_or(0.0);
    let chi = dec.s.iter().take_while(|&&s| s > cutoff).count();
    let system = (0..chi).map(|i| Mat::from_fn(d_s, d_s, |s, sp| dec.u[(s * d_s + sp, i)])).collect();
    let environment = (0..chi)
        .map(|i| Mat::from_fn(d_e, d_e, |e, ep| dec.vh[(i, e * d_e + ep)] * dec.s[i]))
        .collect();
    Ok(DyadicDecomposition { d_s, d_e, system, environment })
}

/// Splits `u` acting on `environment ⊗ system` (system index least
/// significant) so that `u = Σ_i B_i ⊗ A_i`.
pub fn decompose_gate_system_last(u: &CMat, d_e: usize, d_s: usize) -> Result<DyadicDecomposition> {
    if u.nrows() != d_s * d_e || u.ncols() != d_s * d_e {
        return invalid(format!("cannot split a {}x{} operator into {d_e} x {d_s} factors", u.nrows(), u.ncols()));
    }
    let swapped = Mat::from_fn(d_s * d_e, d_s * d_e, |row, col| {
        let (s, e) = (row / d_e, row % d_e);
        let (sp, ep) = (col / d_e, col % d_e);
        u[(e * d_s + s, ep * d_s + sp)]
    });
    decompose_gate(&swapped, d_s, d_e)
}

/// Kraus form `Ψ[ρ] = Σ_i K_i ρ K_i†` of the environment channel.
#[derive(Clone, Debug)]
pub struct EnvironmentChannel {
    kraus: Vec<CMat>,
}

impl EnvironmentChannel {
    pub fn kraus(&self) -> &[CMat] {
        &self.kraus
    }

    pub fn apply(&self, rho: &CMat) -> CMat {
        let d = self.kraus[0].nrows();
        let mut out = tensor::zeros(d, d);
        for k in &self.kraus {
            out += k * rho * k.adjoint();
        }
        out
    }

    /// `‖Σ_i K_i†K_i − I‖_F`.
    pub fn tp_residual(&self) -> f64 {
        let d = self.kraus[0].ncols();
        let mut s = tensor::zeros(d, d);
        for k in &self.kraus {
            s += k.adjoint() * k;
        }
        tensor::frobenius(&(s - tensor::identity(d)))
    }
}

/// `K_i = B_i / √d_S`.
pub fn env_channel(d: &DyadicDecomposition) -> EnvironmentChannel {
    let f = 1.0 / (d.d_s as f64).sqrt();
    EnvironmentChannel { kraus: d.environment.iter().map(|b| tensor::scale_real(b, f)).collect() }
}

/// Smallest `r ≥ 1` whose discarded tail satisfies `√(Σ_{j>r} λ_j) ≤ ε_m`.
///
/// `lambdas` must be non-negative and non-increasing. An empty spectrum
/// gives `1`.
pub fn rank_select(epsilon_m: f64, lambdas: &[f64]) -> usize {
    // The tail grows as r shrinks, so drop trailing eigenvalues while the
    // bound still holds. Suffix sums avoid cancellation.
    let mut tail = 0.0;
    let mut r = lambdas.len();
    while r > 1 {
        let t = tail + lambdas[r - 1];
        if t.sqrt() > epsilon_m {
            break;
        }
        tail = t;
        r -= 1;
    }
    r.max(1)
}

/// Accuracy target and rank cap of a compression run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationConfig {
    /// Bound on the relative error of the whole compressed network.
    pub epsilon: f64,
    pub r_max: usize,
    /// Keep the isometries `w(m)`; diagnostics only.
    pub keep_isometries: bool,
}

impl TruncationConfig {
    pub fn new(epsilon: f64, r_max: usize) -> Self {
        Self { epsilon, r_max, keep_isometries: false }
    }

    /// No truncation beyond exact rank deficiency.
    pub fn exact() -> Self {
        Self::new(0.0, usize::MAX)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return invalid(format!("epsilon must lie in [0, 1), got {}", self.epsilon));
        }
        if self.r_max == 0 {
            return invalid("r_max must be at least 1");
        }
        Ok(())
    }
}

/// Compressed, time-indexed environment network.
///
/// `blocks()[m − 1][i]` is `B̃_i^{(m)}` of shape `r(m) × r(m−1)` for
/// `m = 1..=N`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvironmentNetwork {
    d_s: usize,
    blocks: Vec<Vec<CMat>>,
    ranks: Vec<usize>,
    step_errors: Vec<f64>,
    step_threshold: f64,
    epsilon: f64,
    r_max: usize,
    exceeded: bool,
    degenerate_steps: Vec<usize>,
    isometries: Option<Vec<CMat>>,
}

impl EnvironmentNetwork {
    /// Rank-one network with the single block `[1]` at every step; the
    /// environment of a spin with no neighbours on one side.
    pub fn trivial(d_s: usize, n_steps: usize) -> Self {
        Self {
            d_s,
            blocks: vec![vec![Mat::from_fn(1, 1, |_, _| ONE)]; n_steps],
            ranks: vec![1; n_steps + 1],
            step_errors: vec![0.0; n_steps],
            step_threshold: 0.0,
            epsilon: 0.0,
            r_max: 1,
            exceeded: false,
            degenerate_steps: vec![],
            isometries: None,
        }
    }

    /// Reassembles a network from stored parts, checking shapes.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        d_s: usize,
        blocks: Vec<Vec<CMat>>,
        ranks: Vec<usize>,
        step_errors: Vec<f64>,
        step_threshold: f64,
        epsilon: f64,
        r_max: usize,
        exceeded: bool,
        degenerate_steps: Vec<usize>,
    ) -> Result<Self> {
        let n = blocks.len();
        if ranks.len() != n + 1 || step_errors.len() != n {
            return Err(Error::Format(format!(
                "{n} steps need {} ranks and {n} step errors, got {} and {}",
                n + 1,
                ranks.len(),
                step_errors.len()
            )));
        }
        if ranks.first() != Some(&1) {
            return Err(Error::Format("initial environment rank must be 1".into()));
        }
        for (m, step) in blocks.iter().enumerate() {
            if step.is_empty() {
                return Err(Error::Format(format!("step {} has no blocks", m + 1)));
            }
            if let Some(b) = step.iter().find(|b| b.nrows() != ranks[m + 1] || b.ncols() != ranks[m]) {
                return Err(Error::Format(format!(
                    "block of step {} is {}x{}, ranks say {}x{}",
                    m + 1,
                    b.nrows(),
                    b.ncols(),
                    ranks[m + 1],
                    ranks[m]
                )));
            }
        }
        Ok(Self {
            d_s,
            blocks,
            ranks,
            step_errors,
            step_threshold,
            epsilon,
            r_max,
            exceeded,
            degenerate_steps,
            isometries: None,
        })
    }

    pub fn d_s(&self) -> usize {
        self.d_s
    }

    pub fn n_steps(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<CMat>] {
        &self.blocks
    }

    /// Blocks `B̃_i^{(m)}` of step `m ∈ 1..=N`.
    pub fn step(&self, m: usize) -> &[CMat] {
        &self.blocks[m - 1]
    }

    /// `r(0..=N)`.
    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn max_rank(&self) -> usize {
        self.ranks.iter().copied().max().unwrap_or(1)
    }

    /// Realized truncation error `ε_m` of each step.
    pub fn step_errors(&self) -> &[f64] {
        &self.step_errors
    }

    /// Per-step threshold the sweep aimed for.
    pub fn step_threshold(&self) -> f64 {
        self.step_threshold
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn r_max(&self) -> usize {
        self.r_max
    }

    /// `√(Σ_m ε_m²)`, the a-priori bound on the relative network error.
    pub fn total_error(&self) -> f64 {
        self.step_errors.iter().map(|e| e * e).sum::<f64>().sqrt()
    }

    /// True when `r_max` forced a rank below what the threshold asked for.
    pub fn exceeded_budget(&self) -> bool {
        self.exceeded
    }

    /// Steps whose rank cut fell inside a (numerically) degenerate
    /// eigenvalue pair.
    pub fn degenerate_steps(&self) -> &[usize] {
        &self.degenerate_steps
    }

    /// Attaches previously recorded isometries `w(0..=N)`.
    pub fn with_isometries(mut self, isometries: Vec<CMat>) -> Result<Self> {
        if isometries.len() != self.blocks.len() + 1 {
            return Err(Error::Format(format!(
                "{} isometries for {} steps",
                isometries.len(),
                self.blocks.len()
            )));
        }
        self.isometries = Some(isometries);
        Ok(self)
    }

    /// `w(0..=N)` if the sweep was asked to keep them.
    pub fn isometries(&self) -> Option<&[CMat]> {
        self.isometries.as_deref()
    }

    /// Largest eigenvalue of `Σ_i B̃_i^{(m)†} B̃_i^{(m)} / d_S`; at most one
    /// since projections can only shrink the left-canonical sum.
    pub fn canonical_norm(&self, m: usize) -> Result<f64> {
        let r = self.ranks[m - 1];
        let mut s = tensor::zeros(r, r);
        for b in self.step(m) {
            s += b.adjoint() * b;
        }
        let e = tensor::eigh(&tensor::scale_real(&s, 1.0 / self.d_s as f64))?;
        Ok(e.values[0])
    }
}

/// Truncation sweep over time-dependent blocks.
///
/// `blocks_at(m)` returns the exact blocks `B_i^{(m)}` of step `m ∈ 1..=N`,
/// mapping the environment space of step `m−1` (the space `psi_e` lives in
/// for `m = 1`) to that of step `m`. They must satisfy
/// `Σ_i B_i^{(m)†} B_i^{(m)} ≼ d_S·I`. Each step keeps the smallest rank
/// whose discarded eigenvalue tail is at most `eps_m`, capped at `r_max`.
pub fn truncate_sweep<F>(
    d_s: usize,
    psi_e: &[C64],
    n_steps: usize,
    cfg: &TruncationConfig,
    eps_m: f64,
    mut blocks_at: F,
) -> Result<EnvironmentNetwork>
where
    F: FnMut(usize) -> Result<Vec<CMat>>,
{
    cfg.validate()?;
    let norm: f64 = psi_e.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return invalid(format!("environment state has norm {norm}"));
    }
    // ρ(m) = w(m)·diag(λ)·w(m)†; `sqrt_lambda` holds √λ of the kept part.
    let mut w = tensor::column(psi_e);
    let mut sqrt_lambda = vec![1.0];
    let mut isometries = cfg.keep_isometries.then(|| vec![w.clone()]);
    let mut blocks = Vec::with_capacity(n_steps);
    let mut ranks = Vec::with_capacity(n_steps + 1);
    ranks.push(1);
    let mut step_errors = Vec::with_capacity(n_steps);
    let mut exceeded = false;
    let mut degenerate_steps = vec![];
    let kraus_scale = 1.0 / (d_s as f64).sqrt();

    for m in 1..=n_steps {
        let bs = blocks_at(m)?;
        if bs.is_empty() {
            return invalid(format!("step {m} has no blocks"));
        }
        let d_in = w.nrows();
        let d_out = bs[0].nrows();
        if let Some(b) = bs.iter().find(|b| b.ncols() != d_in || b.nrows() != d_out) {
            return invalid(format!(
                "step {m}: block is {}x{}, expected {d_out}x{d_in}",
                b.nrows(),
                b.ncols()
            ));
        }
        // ρ(m) = Σ_i K_i ρ(m−1) K_i† = X X† with X = [K_i w √Λ]_i, so the
        // spectrum of ρ(m) is the squared singular values of X.
        let r_prev = w.ncols();
        let mut w_scaled = w.clone();
        for (j, &s) in sqrt_lambda.iter().enumerate() {
            for i in 0..d_in {
                w_scaled[(i, j)] *= s * kraus_scale;
            }
        }
        let mut x = tensor::zeros(d_out, r_prev * bs.len());
        for (k, b) in bs.iter().enumerate() {
            let xk = b * &w_scaled;
            x.subcols_mut(k * r_prev, r_prev).copy_from(&xk);
        }
        let (lambdas, vectors) = spectrum(&x, eps_m)?;

        let wanted = rank_select(eps_m, &lambdas);
        let r = if wanted > cfg.r_max {
            exceeded = true;
            cfg.r_max
        } else {
            wanted
        };
        let tail: f64 = lambdas[r.min(lambdas.len())..].iter().sum();
        step_errors.push(tail.max(0.0).sqrt());
        if r < lambdas.len() && lambdas[r] > 0.0 && lambdas[r - 1] - lambdas[r] < DEGENERACY_GAP {
            degenerate_steps.push(m);
            log::warn!("step {m}: degenerate eigenvalues at rank cut {r}");
        }

        let w_next = vectors.subcols(0, r).to_owned();
        let w_next_h = w_next.adjoint().to_owned();
        blocks.push(bs.iter().map(|b| &w_next_h * (b * &w)).collect());
        ranks.push(r);
        sqrt_lambda = lambdas[..r].iter().map(|l| l.sqrt()).collect();
        w = w_next;
        if let Some(iso) = isometries.as_mut() {
            iso.push(w.clone());
        }
    }

    Ok(EnvironmentNetwork {
        d_s,
        blocks,
        ranks,
        step_errors,
        step_threshold: eps_m,
        epsilon: cfg.epsilon,
        r_max: cfg.r_max,
        exceeded,
        degenerate_steps,
        isometries,
    })
}

/// Thresholds at least this large may read the spectrum of `ρ = X X†`
/// from its eigendecomposition; eigenvalue noise of order 1e−16·λ_max is
/// then far below every tail that decides a rank.
const GRAM_THRESHOLD: f64 = 1e-6;

/// Descending eigenvalues of `X X†` (clipped, with relative zeros below
/// the spectrum floor) and the matching eigenvectors.
fn spectrum(x: &CMat, eps_m: f64) -> Result<(Vec<f64>, CMat)> {
    if eps_m >= GRAM_THRESHOLD && x.ncols() >= x.nrows() {
        let e = tensor::eigh(&(x * x.adjoint()))?;
        let floor = SPECTRUM_FLOOR * SPECTRUM_FLOOR * e.values.first().copied().unwrap_or(0.0);
        let lambdas = e.values.iter().map(|&l| if l > floor { l } else { 0.0 }).collect();
        return Ok((lambdas, e.vectors));
    }
    let dec = tensor::svd(x)?;
    let floor = SPECTRUM_FLOOR * dec.s.first().copied().unwrap_or(0.0);
    let lambdas = dec.s.iter().map(|&s| if s > floor { s * s } else { 0.0 }).collect();
    Ok((lambdas, dec.u))
}

/// Truncation sweep for a time-independent step: every `B_i^{(m)}` equals the
/// environment half of `decomposition`, and the per-step threshold is
/// `ε/√N`.
pub fn truncate_environment(
    decomposition: &DyadicDecomposition,
    psi_e: &[C64],
    n_steps: usize,
    cfg: &TruncationConfig,
) -> Result<EnvironmentNetwork> {
    if n_steps == 0 {
        return invalid("need at least one time step");
    }
    if psi_e.len() != decomposition.d_e {
        return invalid(format!(
            "environment state has dimension {}, decomposition expects {}",
            psi_e.len(),
            decomposition.d_e
        ));
    }
    let eps_m = cfg.epsilon / (n_steps as f64).sqrt();
    truncate_sweep(decomposition.d_s, psi_e, n_steps, cfg, eps_m, |_| Ok(decomposition.environment.clone()))
}

/// Environment of the target on one side together with the system halves
/// `A_i` of the target's gate on that side.
#[derive(Clone, Debug, PartialEq)]
pub struct SideEnvironment {
    pub system: Vec<CMat>,
    pub network: EnvironmentNetwork,
}

impl SideEnvironment {
    /// No environment on this side: one block `[1]`, system half `I`.
    pub fn trivial(d_s: usize, n_steps: usize) -> Self {
        Self { system: vec![tensor::identity(d_s)], network: EnvironmentNetwork::trivial(d_s, n_steps) }
    }

    pub fn is_trivial(&self) -> bool {
        self.network.max_rank() == 1 && self.system.len() == 1 && {
            let d = self.system[0].nrows();
            tensor::frobenius(&(&self.system[0] - tensor::identity(d))) == 0.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Diagnostics of one absorption sweep of the chain builder.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelReport {
    pub side: Side,
    /// The spin whose environment this level compresses.
    pub spin: usize,
    pub ranks: Vec<usize>,
    pub total_error: f64,
    pub exceeded_budget: bool,
}

/// Compressed environments on both sides of the target spin.
#[derive(Clone, Debug)]
pub struct ChainEnvironment {
    pub left: SideEnvironment,
    pub right: SideEnvironment,
    pub levels: Vec<LevelReport>,
}

impl ChainEnvironment {
    /// True if any absorption sweep hit `r_max`.
    pub fn exceeded_budget(&self) -> bool {
        self.levels.iter().any(|l| l.exceeded_budget)
    }
}

fn check_initial(layout: &CircuitLayout, initial: &[[C64; 2]]) -> Result<()> {
    if initial.len() != layout.n() {
        return invalid(format!("{} single-spin states for {} spins", initial.len(), layout.n()));
    }
    for (i, s) in initial.iter().enumerate() {
        let norm = (s[0].norm_sqr() + s[1].norm_sqr()).sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return invalid(format!("initial state of spin {i} has norm {norm}"));
        }
    }
    if layout.n_steps() == 0 {
        return invalid("need at least one time step");
    }
    Ok(())
}

/// Builds the left and right environments of `layout.target()` by
/// absorbing one spin at a time from each chain end inward.
///
/// Level `j` on the right compresses the environment of spin `j`: spin
/// `j+1` together with the already compressed environment of spin `j+1`.
/// Its exact blocks are the effective gates of spin `j+1` with the
/// environment half of `G_{j,j+1}` inserted on spin `j+1`. The left side
/// mirrors this with the target-facing half of `G_{j−1,j}` applied after
/// the inner effective gate. Every sweep uses the threshold
/// `ε/√(N·n_abs)` with `n_abs = n − 1` sweeps in total.
pub fn build_chain_environment(
    layout: &CircuitLayout,
    initial: &[[C64; 2]],
    cfg: &TruncationConfig,
) -> Result<ChainEnvironment> {
    cfg.validate()?;
    check_initial(layout, initial)?;
    let (n, n_steps, l) = (layout.n(), layout.n_steps(), layout.target());
    let sweeps = (n - 1).max(1);
    let eps_m = cfg.epsilon / ((n_steps * sweeps) as f64).sqrt();
    let mut levels = vec![];

    let mut right = SideEnvironment::trivial(2, n_steps);
    for j in (l..n.saturating_sub(1)).rev() {
        let dec = decompose_gate(layout.bond_gate(j), 2, 2)?;
        let inner = &right;
        let network = truncate_sweep(2, &initial[j + 1], n_steps, cfg, eps_m, |m| {
            let net = inner.network.step(m);
            Ok(dec
                .environment()
                .iter()
                .map(|b| {
                    let mut acc = tensor::zeros(2 * net[0].nrows(), 2 * net[0].ncols());
                    for (a, r) in inner.system.iter().zip(net) {
                        acc += tensor::kron(&(a * b), r);
                    }
                    acc
                })
                .collect())
        })?;
        levels.push(LevelReport {
            side: Side::Right,
            spin: j,
            ranks: network.ranks().to_vec(),
            total_error: network.total_error(),
            exceeded_budget: network.exceeded_budget(),
        });
        right = SideEnvironment { system: dec.system().to_vec(), network };
    }

    let mut left = SideEnvironment::trivial(2, n_steps);
    for j in 1..=l {
        // G_{j−1,j} = Σ_k c_k ⊗ a'_k with a'_k on spin j.
        let dec = decompose_gate_system_last(layout.bond_gate(j - 1), 2, 2)?;
        let inner = &left;
        let network = truncate_sweep(2, &initial[j - 1], n_steps, cfg, eps_m, |m| {
            let net = inner.network.step(m);
            Ok(dec
                .environment()
                .iter()
                .map(|c| {
                    let mut acc = tensor::zeros(2 * net[0].nrows(), 2 * net[0].ncols());
                    for (a, lb) in inner.system.iter().zip(net) {
                        acc += tensor::kron(lb, &(c * a));
                    }
                    acc
                })
                .collect())
        })?;
        levels.push(LevelReport {
            side: Side::Left,
            spin: j,
            ranks: network.ranks().to_vec(),
            total_error: network.total_error(),
            exceeded_budget: network.exceeded_budget(),
        });
        left = SideEnvironment { system: dec.system().to_vec(), network };
    }

    Ok(ChainEnvironment { left, right, levels })
}

/// Moves spin `l` of an `n`-spin operator to the most significant position,
/// keeping the order of the others.
pub fn move_spin_first(op: &CMat, n: usize, l: usize) -> CMat {
    let perm = |idx: usize| -> usize {
        let bit = (idx >> (n - 1 - l)) & 1;
        let high = idx >> (n - l);
        let low = idx & ((1 << (n - 1 - l)) - 1);
        let rest = (high << (n - 1 - l)) | low;
        (bit << (n - 1)) | rest
    };
    let dim = 1 << n;
    let mut out = tensor::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            out[(perm(i), perm(j))] = op[(i, j)];
        }
    }
    out
}

/// Largest chain for the dense single-sweep route.
pub const DENSE_ROUTE_LIMIT: usize = 10;

/// Single truncation sweep over the whole rest of the chain: the dense
/// step unitary is split across the target cut with `d_E = 2^(n−1)`.
pub fn build_dense_environment(
    layout: &CircuitLayout,
    initial: &[[C64; 2]],
    cfg: &TruncationConfig,
) -> Result<SideEnvironment> {
    cfg.validate()?;
    check_initial(layout, initial)?;
    let (n, l) = (layout.n(), layout.target());
    if n < 2 {
        return invalid("the dense route needs an environment");
    }
    if n > DENSE_ROUTE_LIMIT {
        return Err(Error::Resource(format!("dense route for {n} spins exceeds limit {DENSE_ROUTE_LIMIT}")));
    }
    let u = move_spin_first(&crate::models::dense_layer_unitary(layout)?, n, l);
    let dec = decompose_gate(&u, 2, 1 << (n - 1))?;
    let others: Vec<[C64; 2]> = (0..n).filter(|&i| i != l).map(|i| initial[i]).collect();
    let psi_e = crate::models::product_state_from(&others)?;
    let network = truncate_environment(&dec, &psi_e, layout.n_steps(), cfg)?;
    Ok(SideEnvironment { system: dec.system().to_vec(), network })
}
