//! Reduced-order models of a single target spin.
//!
//! The model state is a tensor `Ψ[α, s, β]` over the left effective
//! environment (`α < r_L(k)`), the target spin (`s < d`) and the right
//! effective environment (`β < r_R(k)`). One time step applies the left
//! effective gate `Σ_i L̃_i^{(m)} ⊗ A'_i` followed by the right one
//! `Σ_j A_j ⊗ R̃_j^{(m)}`, mirroring the staircase order of the circuit.
//! A chain-end target has a trivial environment on one side.
//!
//! Controls follow one convention everywhere in the crate: the state at
//! time `k` is the state after `k` steps and after the control `u_k`, if
//! the window contains `k`; `u_k` therefore acts just before step `k+1`.

use faer::{Mat, MatRef};

use crate::control::ControlSequence;
use crate::envnet::{self, ChainEnvironment, SideEnvironment, TruncationConfig};
use crate::error::{invalid, Result};
use crate::models::CircuitLayout;
use crate::tensor::{self, CMat, C64, ONE, ZERO};

/// Eigenvalues below this contribute nothing to an entropy.
pub const ENTROPY_FLOOR: f64 = 1e-14;

/// How the environment of the target is compressed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    /// Absorb one spin at a time from each chain end.
    Chain,
    /// One sweep over the dense `2^(n−1)`-dimensional environment.
    Dense,
}

/// State of a reduced-order model, row-major over `(α, s, β)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EffState {
    rl: usize,
    d: usize,
    rr: usize,
    data: Vec<C64>,
}

impl EffState {
    pub fn zeros(rl: usize, d: usize, rr: usize) -> Self {
        Self { rl, d, rr, data: vec![ZERO; rl * d * rr] }
    }

    /// `|ψ⟩ ⊗ 1 ⊗ 1` at time zero.
    pub fn product(psi: &[C64]) -> Self {
        Self { rl: 1, d: psi.len(), rr: 1, data: psi.to_vec() }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.rl, self.d, self.rr)
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Reduced density matrix of the target spin.
    pub fn reduced(&self) -> CMat {
        let (d, rr) = (self.d, self.rr);
        let mut rho = tensor::zeros(d, d);
        for a in 0..self.rl {
            let base = a * d * rr;
            for s in 0..d {
                for t in 0..d {
                    let x: C64 = (0..rr)
                        .map(|b| self.data[base + s * rr + b] * self.data[base + t * rr + b].conj())
                        .sum();
                    rho[(s, t)] += x;
                }
            }
        }
        rho
    }

    /// `Σ_env Ψ[., s, .] conj(Φ[., t, .])`.
    pub fn cross(&self, other: &Self) -> CMat {
        let (d, rr) = (self.d, self.rr);
        let mut out = tensor::zeros(d, d);
        for a in 0..self.rl {
            let base = a * d * rr;
            for s in 0..d {
                for t in 0..d {
                    let x: C64 = (0..rr)
                        .map(|b| self.data[base + s * rr + b] * other.data[base + t * rr + b].conj())
                        .sum();
                    out[(s, t)] += x;
                }
            }
        }
        out
    }

    /// Applies `u` to the target index.
    pub fn apply_system(&self, u: &CMat) -> Self {
        let mut out = Self::zeros(self.rl, self.d, self.rr);
        let (d, rr) = (self.d, self.rr);
        for a in 0..self.rl {
            let base = a * d * rr;
            for sp in 0..d {
                for s in 0..d {
                    let c = u[(sp, s)];
                    if c == ZERO {
                        continue;
                    }
                    for b in 0..rr {
                        out.data[base + sp * rr + b] += c * self.data[base + s * rr + b];
                    }
                }
            }
        }
        out
    }

    /// `Σ_{α,β} Ψ[α,:,β] Φ[α,:,β]†` as a `d × d` matrix; the Euclidean
    /// gradient of a control when `self` is the adjoint and `other` the
    /// state the control acted on.
    pub fn outer_system(&self, other: &Self) -> CMat {
        self.cross(other)
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += y;
        }
    }

    /// Scales by a real factor in place.
    pub fn scale(&mut self, f: f64) {
        for x in &mut self.data {
            *x *= f;
        }
    }
}

/// Index-wise combination `out[α, s', β] += Σ_s sys[s', s] · t[(row(α, s), col(α, β))]`.
fn mix_system(out: &mut EffState, sys: MatRef<'_, C64>, t: &CMat, left: bool) {
    let (rl, d, rr) = out.dims();
    for a in 0..rl {
        for sp in 0..d {
            for s in 0..d {
                let c = sys[(sp, s)];
                if c == ZERO {
                    continue;
                }
                let dst = a * d * rr + sp * rr;
                if left {
                    // t is rl × (d·rr)
                    for b in 0..rr {
                        out.data[dst + b] += c * t[(a, s * rr + b)];
                    }
                } else {
                    // t is (rl·d) × rr
                    for b in 0..rr {
                        out.data[dst + b] += c * t[(a * d + s, b)];
                    }
                }
            }
        }
    }
}

fn left_stage(env: &[CMat], sys: &[CMat], psi: &EffState, adjoint: bool) -> EffState {
    let (rl, d, rr) = psi.dims();
    let q = MatRef::from_row_major_slice(&psi.data, rl, d * rr);
    let rl_out = if adjoint { env[0].ncols() } else { env[0].nrows() };
    let mut out = EffState::zeros(rl_out, d, rr);
    for (e, a) in env.iter().zip(sys) {
        let (t, s) = if adjoint { (e.adjoint() * q, a.adjoint().to_owned()) } else { (e * q, a.clone()) };
        mix_system(&mut out, s.as_ref(), &t, true);
    }
    out
}

fn right_stage(env: &[CMat], sys: &[CMat], psi: &EffState, adjoint: bool) -> EffState {
    let (rl, d, rr) = psi.dims();
    let p = MatRef::from_row_major_slice(&psi.data, rl * d, rr);
    let rr_out = if adjoint { env[0].ncols() } else { env[0].nrows() };
    let mut out = EffState::zeros(rl, d, rr_out);
    for (e, a) in env.iter().zip(sys) {
        let (t, s) = if adjoint { (p * e.conjugate(), a.adjoint().to_owned()) } else { (p * e.transpose(), a.clone()) };
        mix_system(&mut out, s.as_ref(), &t, false);
    }
    out
}

/// Reduced-order model of one target spin.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedOrderModel {
    d: usize,
    target: usize,
    psi_s0: Vec<C64>,
    left: SideEnvironment,
    right: SideEnvironment,
    left_trivial: bool,
    right_trivial: bool,
}

impl ReducedOrderModel {
    pub fn new(target: usize, psi_s0: Vec<C64>, left: SideEnvironment, right: SideEnvironment) -> Result<Self> {
        let d = psi_s0.len();
        if d == 0 {
            return invalid("empty system state");
        }
        let norm: f64 = psi_s0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return invalid(format!("system state has norm {norm}"));
        }
        if left.network.n_steps() != right.network.n_steps() {
            return invalid(format!(
                "left environment has {} steps, right has {}",
                left.network.n_steps(),
                right.network.n_steps()
            ));
        }
        for (name, side) in [("left", &left), ("right", &right)] {
            if side.system.iter().any(|a| a.nrows() != d || a.ncols() != d) {
                return invalid(format!("{name} system blocks must be {d}x{d}"));
            }
            for m in 1..=side.network.n_steps() {
                if side.network.step(m).len() != side.system.len() {
                    return invalid(format!(
                        "{name} step {m}: {} environment blocks for {} system blocks",
                        side.network.step(m).len(),
                        side.system.len()
                    ));
                }
            }
        }
        let left_trivial = left.is_trivial();
        let right_trivial = right.is_trivial();
        Ok(Self { d, target, psi_s0, left, right, left_trivial, right_trivial })
    }

    /// Builds the model of `layout.target()` for the product initial state
    /// `initial` (one single-spin state per spin).
    pub fn build(layout: &CircuitLayout, initial: &[[C64; 2]], cfg: &TruncationConfig, route: Route) -> Result<Self> {
        let l = layout.target();
        if initial.len() != layout.n() {
            return invalid(format!("{} single-spin states for {} spins", initial.len(), layout.n()));
        }
        let psi = initial[l].to_vec();
        match route {
            Route::Chain => {
                let ChainEnvironment { left, right, .. } = envnet::build_chain_environment(layout, initial, cfg)?;
                Self::new(l, psi, left, right)
            }
            Route::Dense => {
                let right = envnet::build_dense_environment(layout, initial, cfg)?;
                let left = SideEnvironment::trivial(2, layout.n_steps());
                Self::new(l, psi, left, right)
            }
        }
    }

    /// Same environments with a different initial target state.
    pub fn with_initial(&self, psi_s0: Vec<C64>) -> Result<Self> {
        Self::new(self.target, psi_s0, self.left.clone(), self.right.clone())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn psi_s0(&self) -> &[C64] {
        &self.psi_s0
    }

    pub fn n_steps(&self) -> usize {
        self.right.network.n_steps()
    }

    pub fn left(&self) -> &SideEnvironment {
        &self.left
    }

    pub fn right(&self) -> &SideEnvironment {
        &self.right
    }

    /// `(r_L(k), r_R(k))` for `k = 0..=N`.
    pub fn ranks(&self) -> Vec<(usize, usize)> {
        self.left.network.ranks().iter().copied().zip(self.right.network.ranks().iter().copied()).collect()
    }

    /// `d^eff(k) = d·r_L(k)·r_R(k)`.
    pub fn eff_dims(&self) -> Vec<usize> {
        self.ranks().iter().map(|(l, r)| self.d * l * r).collect()
    }

    /// Combined a-priori truncation error of both sides.
    pub fn truncation_error(&self) -> f64 {
        self.left.network.total_error().hypot(self.right.network.total_error())
    }

    pub fn exceeded_budget(&self) -> bool {
        self.left.network.exceeded_budget() || self.right.network.exceeded_budget()
    }

    /// Step `m ∈ 1..=N` applied to `psi`.
    pub fn step(&self, m: usize, psi: &EffState) -> EffState {
        let mut out = if self.left_trivial {
            psi.clone()
        } else {
            left_stage(self.left.network.step(m), &self.left.system, psi, false)
        };
        if !self.right_trivial {
            out = right_stage(self.right.network.step(m), &self.right.system, &out, false);
        }
        out
    }

    /// Adjoint of [`step`](Self::step).
    pub fn step_adjoint(&self, m: usize, lambda: &EffState) -> EffState {
        let mut out = if self.right_trivial {
            lambda.clone()
        } else {
            right_stage(self.right.network.step(m), &self.right.system, lambda, true)
        };
        if !self.left_trivial {
            out = left_stage(self.left.network.step(m), &self.left.system, &out, true);
        }
        out
    }

    /// Dense `U_m^eff` of shape `d^eff(m) × d^eff(m−1)` in the `(α, s, β)`
    /// index order.
    pub fn eff_gate(&self, m: usize) -> CMat {
        let (rl, rr) = (self.left.network.ranks()[m - 1], self.right.network.ranks()[m - 1]);
        let dim_in = rl * self.d * rr;
        let mut cols = Vec::with_capacity(dim_in);
        for j in 0..dim_in {
            let mut e = EffState::zeros(rl, self.d, rr);
            e.data[j] = ONE;
            cols.push(self.step(m, &e));
        }
        let dim_out = cols[0].data.len();
        Mat::from_fn(dim_out, dim_in, |i, j| cols[j].data[i])
    }

    pub(crate) fn check_controls(&self, controls: Option<&ControlSequence>) -> Result<()> {
        if let Some(c) = controls {
            c.validate_for(self.n_steps(), self.d)?;
        }
        Ok(())
    }

    /// States at every time `0..=N` for the initial target state `psi`.
    pub fn states(&self, psi: &[C64], controls: Option<&ControlSequence>) -> Result<Vec<EffState>> {
        if psi.len() != self.d {
            return invalid(format!("system state has dimension {}, model expects {}", psi.len(), self.d));
        }
        self.check_controls(controls)?;
        let n = self.n_steps();
        let mut out = Vec::with_capacity(n + 1);
        let mut cur = EffState::product(psi);
        for k in 0..=n {
            if k > 0 {
                cur = self.step(k, &cur);
            }
            if let Some(u) = controls.and_then(|c| c.gate_at(k)) {
                cur = cur.apply_system(u);
            }
            out.push(cur.clone());
        }
        Ok(out)
    }

    /// Reverse pass. `seed(k)` is the adjoint injected at time `k`
    /// (`2·∂L/∂Ψ̄(k)`), `states` the forward states of the same input.
    /// Returns `Σ_k λ_k Ψ_pre(k)†` for every control in the window.
    pub fn backward(
        &self,
        states: &[EffState],
        controls: Option<&ControlSequence>,
        seed: &dyn Fn(usize) -> Option<EffState>,
    ) -> Vec<CMat> {
        let n = self.n_steps();
        let n_ctrl = controls.map_or(0, |c| c.len());
        let mut grads = vec![tensor::zeros(self.d, self.d); n_ctrl];
        let (rl, d, rr) = states[n].dims();
        let mut lambda = EffState::zeros(rl, d, rr);
        for k in (0..=n).rev() {
            if let Some(g) = seed(k) {
                lambda.add_assign(&g);
            }
            if let Some(c) = controls {
                if let Some(u) = c.gate_at(k) {
                    let u_h = u.adjoint().to_owned();
                    let pre = states[k].apply_system(&u_h);
                    grads[k - c.k_start()] += lambda.outer_system(&pre);
                    lambda = lambda.apply_system(&u_h);
                }
            }
            if k > 0 {
                lambda = self.step_adjoint(k, &lambda);
            }
        }
        grads
    }

    /// Target-spin trajectory for `k = 0..=N`.
    pub fn propagate(&self, controls: Option<&ControlSequence>) -> Result<Trajectory> {
        let states = self.states(&self.psi_s0, controls)?;
        Ok(Trajectory { rho: states.iter().map(EffState::reduced).collect() })
    }

    /// States of the `d` basis inputs at every time.
    pub fn basis_states(&self, controls: Option<&ControlSequence>) -> Result<Vec<Vec<EffState>>> {
        (0..self.d)
            .map(|a| {
                let mut e = vec![ZERO; self.d];
                e[a] = ONE;
                self.states(&e, controls)
            })
            .collect()
    }

    /// Channel `Φ(k | u_k, …, u_0)` from the initial target state to the
    /// target state at time `k`.
    pub fn channel(&self, controls: Option<&ControlSequence>, k: usize) -> Result<ChoiMatrix> {
        if k > self.n_steps() {
            return invalid(format!("time {k} beyond {} steps", self.n_steps()));
        }
        let basis = self.basis_states(controls)?;
        Ok(choi_from_states(&basis.iter().map(|b| &b[k]).collect::<Vec<_>>()))
    }

    /// Channels at every time `0..=N`.
    pub fn channels(&self, controls: Option<&ControlSequence>) -> Result<Vec<ChoiMatrix>> {
        let basis = self.basis_states(controls)?;
        Ok((0..=self.n_steps()).map(|k| choi_from_states(&basis.iter().map(|b| &b[k]).collect::<Vec<_>>())).collect())
    }
}

/// Unnormalized Choi matrix from the images `Ψ_a` of the basis inputs:
/// `J[(s,a),(t,b)] = Σ_env Ψ_a[s] conj(Ψ_b[t])`.
pub fn choi_from_states(states: &[&EffState]) -> ChoiMatrix {
    let d_in = states.len();
    let d_out = states[0].d;
    let mut j = tensor::zeros(d_out * d_in, d_out * d_in);
    for (a, pa) in states.iter().enumerate() {
        for (b, pb) in states.iter().enumerate() {
            let c = pa.cross(pb);
            for s in 0..d_out {
                for t in 0..d_out {
                    j[(s * d_in + a, t * d_in + b)] = c[(s, t)];
                }
            }
        }
    }
    ChoiMatrix { j, d_out, d_in }
}

/// Reduced states of the target spin over time.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub rho: Vec<CMat>,
}

impl Trajectory {
    /// `(⟨σx⟩, ⟨σy⟩, ⟨σz⟩)` at every time.
    pub fn bloch(&self) -> Vec<[f64; 3]> {
        self.rho.iter().map(bloch_vector).collect()
    }

    pub fn purity(&self) -> Vec<f64> {
        self.rho.iter().map(|r| tensor::inner(r, r).re).collect()
    }
}

/// `Tr(ρ σ_k)` for the three Pauli matrices.
pub fn bloch_vector(rho: &CMat) -> [f64; 3] {
    let p = tensor::paulis();
    [0, 1, 2].map(|k| tensor::trace(&(rho * &p[k])).re)
}

/// Choi matrix `J[(s,a),(t,b)] = Φ(|a⟩⟨b|)[s,t]`, output index first.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiMatrix {
    j: CMat,
    d_out: usize,
    d_in: usize,
}

impl ChoiMatrix {
    pub fn from_unnormalized(j: CMat, d_out: usize, d_in: usize) -> Result<Self> {
        if j.nrows() != d_out * d_in || j.ncols() != d_out * d_in {
            return invalid(format!("Choi matrix must be {0}x{0}", d_out * d_in));
        }
        Ok(Self { j, d_out, d_in })
    }

    /// `Σ_{ab} |a a⟩⟨b b|`.
    pub fn identity(d: usize) -> Self {
        let mut j = tensor::zeros(d * d, d * d);
        for a in 0..d {
            for b in 0..d {
                j[(a * d + a, b * d + b)] = ONE;
            }
        }
        Self { j, d_out: d, d_in: d }
    }

    /// Completely depolarizing channel, `J = I ⊗ I / d`.
    pub fn depolarizing(d: usize) -> Self {
        Self { j: tensor::scale_real(&tensor::identity(d * d), 1.0 / d as f64), d_out: d, d_in: d }
    }

    /// Full dephasing in the computational basis.
    pub fn dephasing(d: usize) -> Self {
        let mut j = tensor::zeros(d * d, d * d);
        for a in 0..d {
            j[(a * d + a, a * d + a)] = ONE;
        }
        Self { j, d_out: d, d_in: d }
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn unnormalized(&self) -> &CMat {
        &self.j
    }

    /// `J / Tr J`.
    pub fn trace_one(&self) -> CMat {
        let t = tensor::trace(&self.j).re;
        tensor::scale_real(&self.j, 1.0 / t)
    }

    /// `Φ(ρ)[s,t] = Σ_{ab} J[(s,a),(t,b)] ρ[a,b]`.
    pub fn apply(&self, rho: &CMat) -> CMat {
        let (di, dout) = (self.d_in, self.d_out);
        Mat::from_fn(dout, dout, |s, t| {
            let mut acc = ZERO;
            for a in 0..di {
                for b in 0..di {
                    acc += self.j[(s * di + a, t * di + b)] * rho[(a, b)];
                }
            }
            acc
        })
    }

    /// Input-side marginal of the trace-one view; `I/d` for TP channels.
    pub fn input_marginal(&self) -> CMat {
        tensor::partial_trace_first(&self.trace_one(), self.d_out, self.d_in)
    }

    pub fn output_marginal(&self) -> CMat {
        tensor::partial_trace_second(&self.trace_one(), self.d_out, self.d_in)
    }

    /// `‖Tr_out J − I‖_F`.
    pub fn tp_residual(&self) -> f64 {
        let m = tensor::partial_trace_first(&self.j, self.d_out, self.d_in);
        tensor::frobenius(&(m - tensor::identity(self.d_in)))
    }

    pub fn mutual_information(&self) -> Result<f64> {
        mutual_information(&self.trace_one(), self.d_out, self.d_in)
    }
}

/// Von Neumann entropy in bits; eigenvalues below [`ENTROPY_FLOOR`] are
/// dropped.
pub fn von_neumann_entropy(rho: &CMat) -> Result<f64> {
    let e = tensor::density_spectrum(rho)?;
    Ok(e.values.iter().filter(|&&l| l >= ENTROPY_FLOOR).map(|&l| -l * l.log2()).sum())
}

/// `I = S(ρ⁽¹⁾) + S(ρ⁽²⁾) − S(Ω)` in bits for a trace-one Choi matrix with
/// the output factor first.
pub fn mutual_information(omega: &CMat, d_out: usize, d_in: usize) -> Result<f64> {
    if omega.nrows() != d_out * d_in || omega.ncols() != d_out * d_in {
        return invalid(format!("Choi matrix must be {0}x{0}", d_out * d_in));
    }
    let tr = tensor::trace(omega);
    if (tr - ONE).norm() > 1e-8 {
        return invalid(format!("Choi matrix has trace {tr}, expected 1"));
    }
    let rho1 = tensor::partial_trace_second(omega, d_out, d_in);
    let rho2 = tensor::partial_trace_first(omega, d_out, d_in);
    Ok(von_neumann_entropy(&rho1)? + von_neumann_entropy(&rho2)? - von_neumann_entropy(omega)?)
}

/// Trace distance `½‖a − b‖_1` of two Hermitian matrices.
pub fn trace_distance(a: &CMat, b: &CMat) -> Result<f64> {
    let e = tensor::eigh(&(a - b))?;
    Ok(0.5 * e.values.iter().map(|l| l.abs()).sum::<f64>())
}

/// Fidelity `⟨φ|ρ|φ⟩` of a state with a pure reference.
pub fn pure_fidelity(phi: &[C64], rho: &CMat) -> f64 {
    let v = tensor::column(phi);
    (v.adjoint() * rho * &v)[(0, 0)].re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Spin, XyzParams};
    use crate::tensor::frobenius;
    use crate::Error;

    fn up_down(n: usize) -> Vec<[C64; 2]> {
        (0..n).map(|i| if i == 0 { Spin::Up.amplitudes() } else { Spin::Down.amplitudes() }).collect()
    }

    #[test]
    fn identity_circuit_gives_identity_gates() {
        let layout = CircuitLayout::identity(4, 5, 2).unwrap();
        let rom = ReducedOrderModel::build(&layout, &up_down(4), &TruncationConfig::exact(), Route::Chain).unwrap();
        for m in 1..=5 {
            let g = rom.eff_gate(m);
            assert_eq!(g.nrows(), 2);
            assert!(frobenius(&(g - tensor::identity(2))) < 1e-12);
        }
        for k in 0..=5 {
            let c = rom.channel(None, k).unwrap();
            assert!(frobenius(&(c.unnormalized() - ChoiMatrix::identity(2).unnormalized())) < 1e-12);
        }
    }

    #[test]
    fn exact_effective_gates_are_isometries() {
        let p = XyzParams::reference();
        for l in [0, 2, 4] {
            let layout = CircuitLayout::xyz(&p, 5, 6, l).unwrap();
            let rom = ReducedOrderModel::build(&layout, &up_down(5), &TruncationConfig::exact(), Route::Chain).unwrap();
            for m in 1..=6 {
                assert!(tensor::isometry_residual(&rom.eff_gate(m)) < 1e-9, "l={l} m={m}");
            }
        }
    }

    #[test]
    fn initial_state_and_channel() {
        let p = XyzParams::reference();
        let layout = CircuitLayout::xyz(&p, 4, 3, 0).unwrap();
        let rom = ReducedOrderModel::build(&layout, &up_down(4), &TruncationConfig::exact(), Route::Chain).unwrap();
        let tr = rom.propagate(None).unwrap();
        assert!((tr.bloch()[0][2] - 1.0).abs() < 1e-14);
        let c0 = rom.channel(None, 0).unwrap();
        assert!(frobenius(&(c0.unnormalized() - ChoiMatrix::identity(2).unnormalized())) < 1e-14);
        for k in 0..=3 {
            let c = rom.channel(None, k).unwrap();
            assert!(c.tp_residual() < 1e-9);
            let psi = tensor::column(rom.psi_s0());
            let rho0 = &psi * psi.adjoint();
            assert!(frobenius(&(c.apply(&rho0) - &tr.rho[k])) < 1e-9);
        }
    }

    #[test]
    fn adjoint_step_is_adjoint() {
        let p = XyzParams::reference();
        let layout = CircuitLayout::xyz(&p, 5, 4, 2).unwrap();
        let rom = ReducedOrderModel::build(&layout, &up_down(5), &TruncationConfig::new(0.01, 8), Route::Chain).unwrap();
        for m in 1..=4 {
            let g = rom.eff_gate(m);
            let (rl, rr) = (rom.left().network.ranks()[m], rom.right().network.ranks()[m]);
            for i in 0..g.nrows() {
                let mut e = EffState::zeros(rl, 2, rr);
                e.data[i] = ONE;
                let row = rom.step_adjoint(m, &e);
                for j in 0..g.ncols() {
                    assert!((row.data[j] - g[(i, j)].conj()).norm() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn entropy_examples() {
        assert!((ChoiMatrix::identity(2).mutual_information().unwrap() - 2.0).abs() < 1e-8);
        assert!(ChoiMatrix::depolarizing(2).mutual_information().unwrap().abs() < 1e-8);
        assert!((ChoiMatrix::dephasing(2).mutual_information().unwrap() - 1.0).abs() < 1e-8);
        let bad = tensor::identity(4);
        assert!(matches!(mutual_information(&bad, 2, 2), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn choi_marginals_of_identity() {
        let c = ChoiMatrix::identity(2);
        let half = tensor::scale_real(&tensor::identity(2), 0.5);
        assert!(frobenius(&(c.input_marginal() - &half)) < 1e-14);
        assert!(frobenius(&(c.output_marginal() - &half)) < 1e-14);
        assert_eq!(c.tp_residual(), 0.0);
    }

    #[test]
    fn trace_distance_and_fidelity() {
        let up = tensor::from_real_rows(&[&[1., 0.], &[0., 0.]]);
        let half = tensor::scale_real(&tensor::identity(2), 0.5);
        assert!((trace_distance(&up, &half).unwrap() - 0.5).abs() < 1e-14);
        assert!((pure_fidelity(&[ONE, ZERO], &half) - 0.5).abs() < 1e-14);
    }
}
