#![allow(dead_code)]

use chaintwin::control::ControlSequence;
use chaintwin::envnet::{self, EnvironmentNetwork};
use chaintwin::exactsim::{self, SimConfig};
use chaintwin::models::{self, CircuitLayout, Spin};
use chaintwin::rom::{ReducedOrderModel, Trajectory};
use chaintwin::tensor::{self, CMat, C64};

/// `|↑⟩` on spin `l`, `|↓⟩` elsewhere.
pub fn up_at(n: usize, l: usize) -> Vec<[C64; 2]> {
    (0..n).map(|i| if i == l { Spin::Up } else { Spin::Down }.amplitudes()).collect()
}

pub fn exact_trajectory(layout: &CircuitLayout, initial: &[[C64; 2]], controls: Option<&ControlSequence>) -> Trajectory {
    let psi0 = models::product_state_from(initial).unwrap();
    exactsim::target_trajectory(layout, &psi0, controls, &SimConfig::default()).unwrap()
}

/// Largest entrywise deviation of the two reduced-state sequences.
pub fn max_rho_deviation(a: &Trajectory, b: &Trajectory) -> f64 {
    assert_eq!(a.rho.len(), b.rho.len());
    a.rho.iter().zip(&b.rho).map(|(x, y)| max_abs(&(x - y))).fold(0.0, f64::max)
}

/// Largest deviation of Pauli expectations.
pub fn max_bloch_deviation(a: &Trajectory, b: &Trajectory) -> f64 {
    a.bloch()
        .iter()
        .zip(b.bloch())
        .flat_map(|(x, y)| (0..3).map(move |i| (x[i] - y[i]).abs()))
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &CMat) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            worst = worst.max(m[(r, c)].norm());
        }
    }
    worst
}

/// Exact Choi matrices of the target's self-channel at every time.
pub fn exact_channels(layout: &CircuitLayout, initial: &[[C64; 2]], controls: Option<&ControlSequence>) -> Vec<CMat> {
    let l = layout.target();
    let all = exactsim::process_channels(layout, initial, l, controls, &SimConfig::default()).unwrap();
    all.into_iter().map(|row| row[l].unnormalized().clone()).collect()
}

pub fn max_channel_deviation(rom: &ReducedOrderModel, exact: &[CMat], controls: Option<&ControlSequence>) -> f64 {
    let ch = rom.channels(controls).unwrap();
    ch.iter().zip(exact).map(|(a, b)| max_abs(&(a.unnormalized() - b))).fold(0.0, f64::max)
}

/// Relative distance between the truncated and the exact environment
/// states of a dense-route network, contracted densely:
/// `X ← Σ K X K†`, `Y ← P Σ K Y K†`, `Z ← P (Σ K Z K†) P` with
/// `P(m) = w(m) w(m)†`, giving `‖E‖² = Tr X`, `⟨Ẽ|E⟩ = Tr Y`,
/// `‖Ẽ‖² = Tr Z`.
pub fn dense_relative_error(kraus: &[CMat], psi_e: &[C64], net: &EnvironmentNetwork) -> f64 {
    let iso = net.isometries().expect("network must keep isometries");
    let psi = tensor::column(psi_e);
    let rho0 = &psi * psi.adjoint();
    let (mut x, mut y, mut z) = (rho0.clone(), rho0.clone(), rho0);
    let chan = |m: &CMat| -> CMat {
        let mut out = tensor::zeros(m.nrows(), m.ncols());
        for k in kraus {
            out += k * m * k.adjoint();
        }
        out
    };
    for w in &iso[1..] {
        let p = w * w.adjoint();
        x = chan(&x);
        y = &p * chan(&y);
        z = &p * chan(&z) * &p;
    }
    let (tx, ty, tz) = (tensor::trace(&x).re, tensor::trace(&y).re, tensor::trace(&z).re);
    ((tx + tz - 2.0 * ty).max(0.0) / tx).sqrt()
}

/// Kraus operators `B_i/√d_S` of the dense step unitary split at the
/// target, computed without the envnet sweep.
pub fn dense_kraus(layout: &CircuitLayout) -> Vec<CMat> {
    let n = layout.n();
    let u = envnet::move_spin_first(&models::dense_layer_unitary(layout).unwrap(), n, layout.target());
    let dec = envnet::decompose_gate(&u, 2, 1 << (n - 1)).unwrap();
    envnet::env_channel(&dec).kraus().to_vec()
}

pub fn env_state(initial: &[[C64; 2]], l: usize) -> Vec<C64> {
    let others: Vec<[C64; 2]> = (0..initial.len()).filter(|&i| i != l).map(|i| initial[i]).collect();
    models::product_state_from(&others).unwrap()
}

/// Relative errors of the Euclidean and Riemannian gradients of
/// `objective` at `controls` against central differences (step 1e−5)
/// along one random direction spanning all gates.
pub fn fd_check(objective: &dyn chaintwin::control::Objective, controls: &ControlSequence, seed: u64) -> (f64, f64) {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (_, grads) = objective.loss_and_grad(controls).unwrap();
    let d = objective.d();
    let h = 1e-5;
    let k0 = controls.k_start();
    let gates = controls.gates();
    let eval = |gs: Vec<CMat>| objective.loss(&ControlSequence::new_unchecked(k0, gs)).unwrap();

    let dirs: Vec<CMat> = gates.iter().map(|_| tensor::random_matrix(d, d, &mut rng)).collect();
    let shifted = |t: f64| gates.iter().zip(&dirs).map(|(u, e)| u + tensor::scale_real(e, t)).collect();
    let fd = (eval(shifted(h)) - eval(shifted(-h))) / (2.0 * h);
    let an: f64 = grads.iter().zip(&dirs).map(|(g, e)| tensor::inner(g, e).re).sum();
    let euclid = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-8);

    let herms: Vec<CMat> = gates.iter().map(|_| tensor::random_hermitian(d, &mut rng)).collect();
    let moved = |t: f64| {
        gates
            .iter()
            .zip(&herms)
            .map(|(u, hh)| u * tensor::expm_hermitian(hh, -t).unwrap())
            .collect()
    };
    let fd = (eval(moved(h)) - eval(moved(-h))) / (2.0 * h);
    let an: f64 = gates
        .iter()
        .zip(&grads)
        .zip(&herms)
        .map(|((u, g), hh)| {
            let r = chaintwin::control::riemannian_grad(u, g);
            let tangent = u * tensor::scale(hh, tensor::C64::new(0.0, 1.0));
            tensor::inner(&r, &tangent).re
        })
        .sum();
    let riem = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-8);
    (euclid, riem)
}
