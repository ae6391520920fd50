//! Exact state-vector simulation of full chains.
//!
//! Qubit `q` of a register of `nq` qubits is bit `nq − 1 − q` of the
//! amplitude index. Process tomography prepends one ancilla qubit, so
//! spin `i` then lives on qubit `i + 1`. Controls act on the layout's
//! target spin with the convention documented in [`crate::rom`].

use rayon::prelude::*;

use crate::control::ControlSequence;
use crate::error::{invalid, Error, Result};
use crate::models::CircuitLayout;
use crate::rom::{self, ChoiMatrix, Trajectory};
use crate::tensor::{self, CMat, C64, ZERO};

/// Default cap on the number of spins.
pub const DEFAULT_MAX_SPINS: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimConfig {
    pub max_spins: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { max_spins: DEFAULT_MAX_SPINS }
    }
}

impl SimConfig {
    fn check(&self, n: usize) -> Result<()> {
        if n > self.max_spins {
            return Err(Error::Resource(format!("{n} spins exceed the state-vector cap of {}", self.max_spins)));
        }
        Ok(())
    }
}

/// Applies a 4×4 gate to qubits `(q, q+1)`.
pub fn apply_two(state: &mut [C64], nq: usize, q: usize, g: &CMat) {
    let hi = 1usize << (nq - 1 - q);
    let lo = hi >> 1;
    let mut m = [[ZERO; 4]; 4];
    for (r, row) in m.iter_mut().enumerate() {
        for (c, x) in row.iter_mut().enumerate() {
            *x = g[(r, c)];
        }
    }
    for base in 0..state.len() {
        if base & (hi | lo) != 0 {
            continue;
        }
        let idx = [base, base | lo, base | hi, base | hi | lo];
        let v = idx.map(|i| state[i]);
        for (r, &i) in idx.iter().enumerate() {
            state[i] = m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2] + m[r][3] * v[3];
        }
    }
}

/// Applies a 2×2 gate to qubit `q`.
pub fn apply_one(state: &mut [C64], nq: usize, q: usize, g: &CMat) {
    let bit = 1usize << (nq - 1 - q);
    let (a, b, c, d) = (g[(0, 0)], g[(0, 1)], g[(1, 0)], g[(1, 1)]);
    for base in 0..state.len() {
        if base & bit != 0 {
            continue;
        }
        let (x, y) = (state[base], state[base | bit]);
        state[base] = a * x + b * y;
        state[base | bit] = c * x + d * y;
    }
}

/// Reduced state of qubit `q`.
pub fn reduced_one(state: &[C64], nq: usize, q: usize) -> CMat {
    let bit = 1usize << (nq - 1 - q);
    let mut rho = tensor::zeros(2, 2);
    for base in 0..state.len() {
        if base & bit != 0 {
            continue;
        }
        let (x, y) = (state[base], state[base | bit]);
        rho[(0, 0)] += x * x.conj();
        rho[(0, 1)] += x * y.conj();
        rho[(1, 0)] += y * x.conj();
        rho[(1, 1)] += y * y.conj();
    }
    rho
}

/// Reduced state of qubits `(p, q)` with `p` as the most significant
/// factor; `p ≠ q`.
pub fn reduced_two(state: &[C64], nq: usize, p: usize, q: usize) -> CMat {
    let bp = 1usize << (nq - 1 - p);
    let bq = 1usize << (nq - 1 - q);
    let mut rho = tensor::zeros(4, 4);
    for base in 0..state.len() {
        if base & (bp | bq) != 0 {
            continue;
        }
        let v = [base, base | bq, base | bp, base | bp | bq].map(|i| state[i]);
        for r in 0..4 {
            for c in 0..4 {
                rho[(r, c)] += v[r] * v[c].conj();
            }
        }
    }
    rho
}

/// Runs the circuit from `psi0` on a register whose spins start at qubit
/// `offset`, calling `observe(k, state)` at every time `k = 0..=N`.
fn run(
    layout: &CircuitLayout,
    mut state: Vec<C64>,
    offset: usize,
    controls: Option<&ControlSequence>,
    mut observe: impl FnMut(usize, &[C64]),
) -> Result<()> {
    let n = layout.n();
    let nq = n + offset;
    if state.len() != 1 << nq {
        return invalid(format!("state has {} amplitudes, expected {}", state.len(), 1usize << nq));
    }
    if let Some(c) = controls {
        c.validate_for(layout.n_steps(), 2)?;
    }
    let target = offset + layout.target();
    for k in 0..=layout.n_steps() {
        if k > 0 {
            for b in 0..n - 1 {
                apply_two(&mut state, nq, offset + b, layout.bond_gate(b));
            }
        }
        if let Some(u) = controls.and_then(|c| c.gate_at(k)) {
            apply_one(&mut state, nq, target, u);
        }
        observe(k, &state);
    }
    Ok(())
}

fn check_state(psi0: &[C64]) -> Result<()> {
    let norm: f64 = psi0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return invalid(format!("initial state has norm {norm}"));
    }
    Ok(())
}

/// Streams the state at every time `k = 0..=N` to `observe`; only one
/// state buffer is alive at a time.
pub fn evolve_with(
    layout: &CircuitLayout,
    psi0: &[C64],
    controls: Option<&ControlSequence>,
    cfg: &SimConfig,
    observe: impl FnMut(usize, &[C64]),
) -> Result<()> {
    cfg.check(layout.n())?;
    check_state(psi0)?;
    run(layout, psi0.to_vec(), 0, controls, observe)
}

/// Every state of a run.
#[derive(Clone, Debug)]
pub struct StateTrajectory {
    pub n: usize,
    pub states: Vec<Vec<C64>>,
}

/// Keeps all `N + 1` states; use [`evolve_with`] for large chains.
pub fn evolve(
    layout: &CircuitLayout,
    psi0: &[C64],
    controls: Option<&ControlSequence>,
    cfg: &SimConfig,
) -> Result<StateTrajectory> {
    let mut states = Vec::with_capacity(layout.n_steps() + 1);
    evolve_with(layout, psi0, controls, cfg, |_, s| states.push(s.to_vec()))?;
    Ok(StateTrajectory { n: layout.n(), states })
}

/// Reduced trajectory of the layout's target spin.
pub fn target_trajectory(
    layout: &CircuitLayout,
    psi0: &[C64],
    controls: Option<&ControlSequence>,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    let mut rho = vec![];
    let (n, l) = (layout.n(), layout.target());
    evolve_with(layout, psi0, controls, cfg, |_, s| rho.push(reduced_one(s, n, l)))?;
    Ok(Trajectory { rho })
}

/// Product state with spin `l` maximally entangled with an ancilla
/// prepended as qubit 0.
fn ancilla_state(initial: &[[C64; 2]], l: usize) -> Result<Vec<C64>> {
    let n = initial.len();
    if l >= n {
        return invalid(format!("input spin {l} outside chain of {n}"));
    }
    let mut locals = initial.to_vec();
    locals[l] = [tensor::ONE, ZERO];
    let zero = crate::models::product_state_from(&locals)?;
    locals[l] = [ZERO, tensor::ONE];
    let one = crate::models::product_state_from(&locals)?;
    let f = std::f64::consts::FRAC_1_SQRT_2;
    Ok(zero.iter().map(|z| z * f).chain(one.iter().map(|z| z * f)).collect())
}

/// Reorders a reduced `(ancilla, m)` state into the trace-one Choi matrix
/// `Ω[(s,a),(t,b)]` with the output spin first.
fn choi_from_pair(rho: &CMat) -> ChoiMatrix {
    let j = faer::Mat::from_fn(4, 4, |r, c| {
        let (s, a) = (r / 2, r % 2);
        let (t, b) = (c / 2, c % 2);
        rho[(a * 2 + s, b * 2 + t)] * 2.0
    });
    ChoiMatrix::from_unnormalized(j, 2, 2).expect("4x4 Choi matrix")
}

/// Channels `Φ_{l→m}(k)` for every output spin `m` and time `k`, as
/// `[k][m]`, from one evolution with an entangled ancilla on spin `l`.
pub fn process_channels(
    layout: &CircuitLayout,
    initial: &[[C64; 2]],
    l: usize,
    controls: Option<&ControlSequence>,
    cfg: &SimConfig,
) -> Result<Vec<Vec<ChoiMatrix>>> {
    let n = layout.n();
    cfg.check(n)?;
    if initial.len() != n {
        return invalid(format!("{} single-spin states for {n} spins", initial.len()));
    }
    let state = ancilla_state(initial, l)?;
    let mut out = vec![];
    run(layout, state, 1, controls, |_, s| {
        out.push((0..n).map(|m| choi_from_pair(&reduced_two(s, n + 1, 0, m + 1))).collect());
    })?;
    Ok(out)
}

/// `Φ_{l→m}(k)` by ancilla tomography.
pub fn process_channel(
    layout: &CircuitLayout,
    initial: &[[C64; 2]],
    l: usize,
    m: usize,
    k: usize,
    controls: Option<&ControlSequence>,
    cfg: &SimConfig,
) -> Result<ChoiMatrix> {
    if m >= layout.n() {
        return invalid(format!("output spin {m} outside chain of {}", layout.n()));
    }
    if k > layout.n_steps() {
        return invalid(format!("time {k} beyond {} steps", layout.n_steps()));
    }
    let all = process_channels(layout, initial, l, controls, cfg)?;
    Ok(all[k][m].clone())
}

/// `I_{l→m}(k)` in bits, stored as `values[k][m]`.
#[derive(Clone, Debug, PartialEq)]
pub struct InfoFlowMap {
    pub l: usize,
    pub values: Vec<Vec<f64>>,
}

impl InfoFlowMap {
    pub fn n(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn n_steps(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    /// `I_{l→l}(k)` for every `k`.
    pub fn self_information(&self) -> Vec<f64> {
        self.values.iter().map(|row| row[self.l]).collect()
    }

    /// The display transform `log(I + 10⁻²)`.
    pub fn rescaled(&self) -> Vec<Vec<f64>> {
        self.values.iter().map(|row| row.iter().map(|v| (v + 1e-2).ln()).collect()).collect()
    }
}

pub fn info_flow(
    layout: &CircuitLayout,
    initial: &[[C64; 2]],
    l: usize,
    controls: Option<&ControlSequence>,
    cfg: &SimConfig,
) -> Result<InfoFlowMap> {
    let channels = process_channels(layout, initial, l, controls, cfg)?;
    let values = channels
        .iter()
        .map(|row| row.iter().map(ChoiMatrix::mutual_information).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    Ok(InfoFlowMap { l, values })
}

/// How light-cone membership is decided.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeCriterion {
    /// Spin `m` is inside once its reduced state moved more than `δ` (trace
    /// distance) away from its initial reduced state.
    StateChange,
    /// Spin `m` is inside once its reduced state differs by more than `δ`
    /// from the run with the target spin flipped.
    Sensitivity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LightCone {
    /// Spins inside the cone at every time; always contains the target.
    pub members: Vec<Vec<usize>>,
    /// `2^(|cone(k)|)` as a float.
    pub bound: Vec<f64>,
    pub delta: f64,
}

/// Membership is cumulative: a spin that entered the cone stays inside.
pub fn light_cone_dim(
    layout: &CircuitLayout,
    initial: &[[C64; 2]],
    delta: f64,
    criterion: ConeCriterion,
    cfg: &SimConfig,
) -> Result<LightCone> {
    let (n, l) = (layout.n(), layout.target());
    if initial.len() != n {
        return invalid(format!("{} single-spin states for {n} spins", initial.len()));
    }
    let psi0 = crate::models::product_state_from(initial)?;
    let reduced_all = |s: &[C64]| -> Vec<CMat> { (0..n).map(|m| reduced_one(s, n, m)).collect() };
    let mut primary: Vec<Vec<CMat>> = vec![];
    evolve_with(layout, &psi0, None, cfg, |_, s| primary.push(reduced_all(s)))?;
    let reference: Vec<Vec<CMat>> = match criterion {
        ConeCriterion::StateChange => vec![primary[0].clone(); primary.len()],
        ConeCriterion::Sensitivity => {
            let mut flipped = initial.to_vec();
            let [a, b] = initial[l];
            flipped[l] = [-b.conj(), a.conj()];
            let psi1 = crate::models::product_state_from(&flipped)?;
            let mut other = vec![];
            evolve_with(layout, &psi1, None, cfg, |_, s| other.push(reduced_all(s)))?;
            other
        }
    };
    let mut inside = vec![false; n];
    inside[l] = true;
    let mut members = vec![];
    let mut bound = vec![];
    for (now, refs) in primary.iter().zip(&reference) {
        for m in 0..n {
            if !inside[m] && rom::trace_distance(&now[m], &refs[m])? > delta {
                inside[m] = true;
            }
        }
        let cone: Vec<usize> = (0..n).filter(|&m| inside[m]).collect();
        bound.push(2f64.powi(cone.len() as i32));
        members.push(cone);
    }
    Ok(LightCone { members, bound, delta })
}

/// Per-realization maps and their arithmetic mean.
#[derive(Clone, Debug)]
pub struct DisorderAverage {
    pub mean: InfoFlowMap,
    pub per_seed: Vec<InfoFlowMap>,
}

impl DisorderAverage {
    pub fn mean_self_information(&self) -> Vec<f64> {
        self.mean.self_information()
    }
}

/// Evaluates `task` for every seed in parallel and averages the maps in
/// seed order, so the result does not depend on the thread count.
pub fn disorder_average<F>(seeds: &[u64], task: F) -> Result<DisorderAverage>
where
    F: Fn(u64) -> Result<InfoFlowMap> + Sync,
{
    if seeds.is_empty() {
        return invalid("need at least one disorder seed");
    }
    let per_seed: Vec<InfoFlowMap> = seeds.par_iter().map(|&s| task(s)).collect::<Result<_>>()?;
    let first = &per_seed[0];
    if per_seed.iter().any(|m| m.l != first.l || m.values.len() != first.values.len() || m.n() != first.n()) {
        return invalid("per-seed maps differ in shape");
    }
    let count = per_seed.len() as f64;
    let values = (0..first.values.len())
        .map(|k| (0..first.n()).map(|m| per_seed.iter().map(|p| p.values[k][m]).sum::<f64>() / count).collect())
        .collect();
    Ok(DisorderAverage { mean: InfoFlowMap { l: first.l, values }, per_seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{product_state, MblParams, Spin, XyzParams};
    use crate::tensor::{frobenius, ONE};

    fn downs_with_up(n: usize, l: usize) -> Vec<[C64; 2]> {
        (0..n).map(|i| if i == l { Spin::Up.amplitudes() } else { Spin::Down.amplitudes() }).collect()
    }

    #[test]
    fn single_spin_without_gates_is_constant() {
        let layout = CircuitLayout::identity(1, 5, 0).unwrap();
        let tr = target_trajectory(&layout, &[ONE, ZERO], None, &SimConfig::default()).unwrap();
        assert_eq!(tr.rho.len(), 6);
        assert!(tr.rho.iter().all(|r| frobenius(&(r - &tr.rho[0])) == 0.0));
    }

    #[test]
    fn two_spins_one_step_matches_exponential() {
        let p = XyzParams::reference();
        let layout = CircuitLayout::xyz(&p, 2, 1, 0).unwrap();
        let psi0 = product_state(&[Spin::Up, Spin::Down]);
        let tr = evolve(&layout, &psi0, None, &SimConfig::default()).unwrap();
        let h = crate::models::xyz_chain_hamiltonian(&p, 2);
        let u = tensor::expm_hermitian(&h, p.tau).unwrap();
        let expected = &u * tensor::column(&psi0);
        for i in 0..4 {
            assert!((tr.states[1][i] - expected[(i, 0)]).norm() < 1e-12);
        }
    }

    #[test]
    fn norm_is_preserved() {
        let p = XyzParams::reference();
        let layout = CircuitLayout::xyz(&p, 6, 100, 0).unwrap();
        let psi0 = crate::models::product_state_from(&downs_with_up(6, 0)).unwrap();
        let mut worst: f64 = 0.0;
        evolve_with(&layout, &psi0, None, &SimConfig::default(), |_, s| {
            let nrm: f64 = s.iter().map(|z| z.norm_sqr()).sum();
            worst = worst.max((nrm - 1.0).abs());
        })
        .unwrap();
        assert!(worst < 1e-9);
    }

    #[test]
    fn state_cap_is_enforced() {
        let layout = CircuitLayout::identity(4, 1, 0).unwrap();
        let psi0 = product_state(&[Spin::Up; 4]);
        let cfg = SimConfig { max_spins: 3 };
        assert!(matches!(evolve(&layout, &psi0, None, &cfg), Err(Error::Resource(_))));
    }

    #[test]
    fn time_zero_channels() {
        let p = XyzParams::reference();
        let layout = CircuitLayout::xyz(&p, 4, 3, 1).unwrap();
        let ch = process_channels(&layout, &downs_with_up(4, 1), 1, None, &SimConfig::default()).unwrap();
        for (m, c) in ch[0].iter().enumerate() {
            let mi = c.mutual_information().unwrap();
            let want = if m == 1 { 2.0 } else { 0.0 };
            assert!((mi - want).abs() < 1e-8);
        }
        for row in &ch {
            for c in row {
                let half = tensor::scale_real(&tensor::identity(2), 0.5);
                assert!(frobenius(&(c.input_marginal() - half)) < 1e-8);
            }
        }
    }

    #[test]
    fn identity_circuit_info_flow_repeats() {
        let layout = CircuitLayout::identity(3, 4, 0).unwrap();
        let map = info_flow(&layout, &downs_with_up(3, 0), 0, None, &SimConfig::default()).unwrap();
        for row in &map.values {
            assert_eq!(row.len(), 3);
            for (a, b) in row.iter().zip(&map.values[0]) {
                assert!((a - b).abs() < 1e-10);
            }
        }
        assert!(map.values.iter().flatten().all(|v| (-1e-12..=2.0 + 1e-12).contains(v)));
    }

    #[test]
    fn identity_circuit_cone_is_target() {
        let layout = CircuitLayout::identity(5, 4, 2).unwrap();
        for crit in [ConeCriterion::StateChange, ConeCriterion::Sensitivity] {
            let cone = light_cone_dim(&layout, &downs_with_up(5, 2), 1e-6, crit, &SimConfig::default()).unwrap();
            assert!(cone.bound.iter().all(|&b| b == 2.0));
        }
    }

    #[test]
    fn cone_starts_at_target() {
        let p = XyzParams::reference();
        let layout = CircuitLayout::xyz(&p, 5, 3, 0).unwrap();
        let cone = light_cone_dim(&layout, &downs_with_up(5, 0), 1e-6, ConeCriterion::Sensitivity, &SimConfig::default())
            .unwrap();
        assert_eq!(cone.bound[0], 2.0);
        assert!(cone.bound.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn disorder_average_of_repeated_seed() {
        let task = |seed: u64| {
            let p = MblParams::sampled(0.3, 4, seed);
            let layout = CircuitLayout::mbl(&p, 5, 0)?;
            info_flow(&layout, &downs_with_up(4, 0), 0, None, &SimConfig::default())
        };
        let single = disorder_average(&[3], task).unwrap();
        assert_eq!(single.mean, task(3).unwrap());
        let doubled = disorder_average(&[3, 3], task).unwrap();
        for (a, b) in doubled.mean.values.iter().flatten().zip(single.mean.values.iter().flatten()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(disorder_average(&[], task).is_err());
    }
}
