//! Acceptance suite. Every criterion prints one `criterion N: PASS|FAIL`
//! line with the measured numbers, then asserts.

mod common;

use std::time::Instant;

use chaintwin::control::{
    self, ControlSequence, Echo, EraseRecover, GateMatching, IdentityRecover, Objective, OptimizerConfig, Transfer,
};
use chaintwin::envnet::{self, TruncationConfig};
use chaintwin::exactsim::{self, ConeCriterion, SimConfig};
use chaintwin::models::{self, CircuitLayout, MblParams, XyzParams};
use chaintwin::rom::{self, ChoiMatrix, ReducedOrderModel, Route};
use chaintwin::tensor::{self, CMat};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, pass: bool, detail: String) {
    println!("criterion {id}: {} {detail}", if pass { "PASS" } else { "FAIL" });
}

fn all_down(n: usize) -> Vec<[tensor::C64; 2]> {
    vec![models::Spin::Down.amplitudes(); n]
}

/// `I_{l→l}(N)` from the exact simulator.
fn exact_final_self_info(layout: &CircuitLayout, c: Option<&ControlSequence>) -> f64 {
    let l = layout.target();
    let ch = exactsim::process_channel(layout, &up_at(layout.n(), l), l, l, layout.n_steps(), c, &SimConfig::default())
        .unwrap();
    ch.mutual_information().unwrap()
}

#[test]
fn criterion_01_rom_tracks_exact_dynamics_n9() {
    // Edge target, so the environment is the other eight spins.
    let layout = CircuitLayout::xyz(&XyzParams::reference(), 9, 40, 0).unwrap();
    let init = up_at(9, 0);
    let random = ControlSequence::random(0, 40, 2, 2024);

    let t = Instant::now();
    let rom = ReducedOrderModel::build(&layout, &init, &TruncationConfig::new(1e-4, 4096), Route::Chain).unwrap();
    let free = rom.propagate(None).unwrap();
    let driven = rom.propagate(Some(&random)).unwrap();
    let seconds = t.elapsed().as_secs_f64();

    let dev_free = max_bloch_deviation(&free, &exact_trajectory(&layout, &init, None));
    let dev_driven = max_bloch_deviation(&driven, &exact_trajectory(&layout, &init, Some(&random)));
    let pass = dev_free <= 1e-3 && dev_driven <= 1e-3 && seconds < 60.0 && !rom.exceeded_budget();
    report(
        1,
        pass,
        format!(
            "max Bloch deviation {dev_free:.2e} (free), {dev_driven:.2e} (40 random gates); ROM {seconds:.1}s; d_eff(N) {}",
            rom.eff_dims().last().unwrap()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_02_untruncated_rom_is_exact() {
    let mut layouts = vec![];
    for n in 2..=7 {
        for l in [0, n / 2, n - 1] {
            layouts.push(CircuitLayout::xyz(&XyzParams::reference(), n, 12, l).unwrap());
        }
    }
    for (n, seed) in [(5, 3), (7, 4)] {
        layouts.push(CircuitLayout::mbl(&MblParams::sampled(0.3, n, seed), 12, n / 2).unwrap());
    }
    let random = ControlSequence::random(2, 10, 2, 77);
    let (mut worst_traj, mut worst_chan): (f64, f64) = (0.0, 0.0);
    let mut runs = 0;
    for layout in &layouts {
        let init = up_at(layout.n(), layout.target());
        let routes: &[Route] = if layout.n() <= envnet::DENSE_ROUTE_LIMIT { &[Route::Chain, Route::Dense] } else { &[Route::Chain] };
        for &route in routes {
            let rom = ReducedOrderModel::build(layout, &init, &TruncationConfig::exact(), route).unwrap();
            for c in [None, Some(&random)] {
                let traj = rom.propagate(c).unwrap();
                worst_traj = worst_traj.max(max_rho_deviation(&traj, &exact_trajectory(layout, &init, c)));
                worst_chan = worst_chan.max(max_channel_deviation(&rom, &exact_channels(layout, &init, c), c));
                runs += 1;
            }
        }
    }
    let pass = worst_traj <= 1e-10 && worst_chan <= 1e-10;
    report(2, pass, format!("{runs} runs, n ≤ 7: max state deviation {worst_traj:.2e}, max Choi deviation {worst_chan:.2e}"));
    assert!(pass);
}

#[test]
fn criterion_03_dense_error_within_target() {
    let mut layouts = vec![];
    for n in 4..=7 {
        layouts.push(CircuitLayout::xyz(&XyzParams::reference(), n, 25, 0).unwrap());
        layouts.push(CircuitLayout::xyz(&XyzParams::reference(), n, 25, n / 2).unwrap());
        layouts.push(CircuitLayout::mbl(&MblParams::sampled(0.3, n, 10 + n as u64), 25, 0).unwrap());
    }
    let mut pass = true;
    let mut worst_ratio: f64 = 0.0;
    let mut runs = 0;
    for layout in &layouts {
        let init = up_at(layout.n(), layout.target());
        let kraus = dense_kraus(layout);
        let psi_e = env_state(&init, layout.target());
        for eps in [0.1, 0.01] {
            let cfg = TruncationConfig { keep_isometries: true, ..TruncationConfig::new(eps, 1 << 12) };
            let side = envnet::build_dense_environment(layout, &init, &cfg).unwrap();
            let err = dense_relative_error(&kraus, &psi_e, &side.network);
            pass &= !side.network.exceeded_budget() && err <= eps;
            worst_ratio = worst_ratio.max(err / eps);
            runs += 1;
        }
    }
    report(3, pass, format!("{runs} runs, n ≤ 7, ε ∈ {{0.1, 0.01}}: max error/ε {worst_ratio:.3}"));
    assert!(pass);
}

/// `(d_eff, cone bound, build seconds, budget exceeded)` for target `l`.
fn rank_and_cone(n: usize, steps: usize, l: usize) -> (Vec<usize>, Vec<f64>, f64, bool) {
    let layout = CircuitLayout::xyz(&XyzParams::reference(), n, steps, l).unwrap();
    let init = up_at(n, l);
    let t = Instant::now();
    let rom = ReducedOrderModel::build(&layout, &init, &TruncationConfig::new(0.01, 1 << 12), Route::Chain).unwrap();
    let seconds = t.elapsed().as_secs_f64();
    let cone = exactsim::light_cone_dim(&layout, &init, 1e-6, ConeCriterion::StateChange, &SimConfig::default()).unwrap();
    (rom.eff_dims(), cone.bound, seconds, rom.exceeded_budget())
}

#[test]
fn criterion_04_rank_below_light_cone_n13() {
    let (n, steps) = (13, 25);
    // Edge target: the whole rest of the chain is one environment.
    let (dims, bound, seconds, exceeded) = rank_and_cone(n, steps, 0);
    let below = dims.iter().zip(&bound).all(|(&d, &b)| d as f64 <= b);
    let last = *dims.last().unwrap() as f64;
    let ratio = bound[steps] / last;
    let pass = below && ratio >= 4.0 && !exceeded;
    report(
        4,
        pass,
        format!("n = {n}, N = {steps}, l = 0: d_eff(N) {last} vs cone bound {} (ratio {ratio:.2}); build {seconds:.1}s", bound[steps]),
    );
    let (mid, mid_bound, _, _) = rank_and_cone(n, steps, n / 2);
    println!("  l = {}: d_eff(N) {} vs cone bound {} (informational)", n / 2, mid.last().unwrap(), mid_bound[steps]);
    assert!(pass);
}

/// A random small model for gradient checks.
fn random_instance(rng: &mut ChaCha8Rng) -> (CircuitLayout, Vec<[tensor::C64; 2]>, f64) {
    let n = rng.gen_range(3..=6);
    let steps = 2 * rng.gen_range(2..=4);
    let l = rng.gen_range(0..n);
    let layout = if rng.gen_bool(0.5) {
        CircuitLayout::xyz(&XyzParams::reference(), n, steps, l).unwrap()
    } else {
        CircuitLayout::mbl(&MblParams::sampled(rng.gen_range(0.1..1.0), n, rng.gen()), steps, l).unwrap()
    };
    let eps = [0.0, 1e-3, 1e-2][rng.gen_range(0..3)];
    (layout, up_at(n, l), eps)
}

fn random_window(rng: &mut ChaCha8Rng, steps: usize) -> ControlSequence {
    let a = rng.gen_range(0..steps);
    let b = rng.gen_range(a + 1..=steps);
    ControlSequence::random(a, b, 2, rng.gen())
}

#[test]
fn criterion_05_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = [0.0f64; 5];
    let names = ["identity_recover", "erase_recover", "echo", "transfer", "gate_matching"];
    for _ in 0..20 {
        let (layout, init, eps) = random_instance(&mut rng);
        let rom = ReducedOrderModel::build(&layout, &init, &TruncationConfig::new(eps, 256), Route::Chain).unwrap();
        let c = random_window(&mut rng, layout.n_steps());
        let objectives: [Box<dyn Objective + '_>; 3] = [
            Box::new(IdentityRecover { rom: &rom }),
            Box::new(EraseRecover::new(&rom).unwrap()),
            Box::new(Echo { rom: &rom }),
        ];
        for (i, obj) in objectives.iter().enumerate() {
            let (e, r) = fd_check(obj.as_ref(), &c, rng.gen());
            worst[i] = worst[i].max(e).max(r);
        }

        let (n, l) = (layout.n(), layout.target());
        let bob = (l + rng.gen_range(1..n)) % n;
        let roms: Vec<ReducedOrderModel> = control::tetrahedron_states()
            .iter()
            .map(|t| {
                let mut init = all_down(n);
                init[bob] = t.psi;
                ReducedOrderModel::build(&layout, &init, &TruncationConfig::new(eps, 256), Route::Chain).unwrap()
            })
            .collect();
        let (e, r) = fd_check(&Transfer::tetrahedron(&roms).unwrap(), &c, rng.gen());
        worst[3] = worst[3].max(e).max(r);

        let targets: Vec<CMat> = (0..c.k_stop()).map(|_| tensor::random_unitary(2, &mut rng)).collect();
        let gm = ControlSequence::random(0, targets.len(), 2, rng.gen());
        let (e, r) = fd_check(&GateMatching { targets }, &gm, rng.gen());
        worst[4] = worst[4].max(e).max(r);
    }
    let pass = worst.iter().all(|&w| w <= 1e-5);
    let detail: Vec<String> = names.iter().zip(&worst).map(|(n, w)| format!("{n} {w:.1e}")).collect();
    report(5, pass, format!("20 instances per loss, max relative error: {}", detail.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_06_optimizer_solves_gate_matching() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = OptimizerConfig { learning_rate: 0.05, max_iters: 2000, ..Default::default() };
    let (mut worst_loss, mut worst_drift): (f64, f64) = (0.0, 0.0);
    let mut iters = 0;
    for _ in 0..10 {
        let obj = GateMatching { targets: vec![tensor::random_unitary(2, &mut rng)] };
        let mut drift: f64 = 0.0;
        let res = control::optimize_with(&obj, 0, 1, &cfg, &mut |_, c| drift = drift.max(c.max_unitarity_residual())).unwrap();
        worst_loss = worst_loss.max(res.best_loss);
        worst_drift = worst_drift.max(drift);
        iters = iters.max(res.history.len());
    }
    let pass = worst_loss < 1e-6 && worst_drift <= 1e-9 && iters <= 2000;
    report(6, pass, format!("10 targets: max final loss {worst_loss:.2e}, max unitarity drift {worst_drift:.2e}, ≤ {iters} iterations"));
    assert!(pass);
}

#[test]
fn criterion_07_echo_ordering() {
    let echo_cfg = OptimizerConfig { learning_rate: 0.01, max_iters: 1000, ..Default::default() };
    // One realization: multistep on [20, 41), one gate at the window centre.
    let run = |j: f64, seed: u64| -> [f64; 3] {
        let layout = CircuitLayout::mbl(&MblParams::sampled(j, 9, seed), 61, 0).unwrap();
        let rom = ReducedOrderModel::build(&layout, &up_at(9, 0), &TruncationConfig::new(1e-2, 4096), Route::Chain).unwrap();
        let obj = Echo { rom: &rom };
        let multi = control::optimize(&obj, 20, 41, &echo_cfg).unwrap();
        let single = control::optimize(&obj, 30, 31, &echo_cfg).unwrap();
        [
            exact_final_self_info(&layout, Some(&multi.controls)),
            exact_final_self_info(&layout, Some(&single.controls)),
            exact_final_self_info(&layout, None),
        ]
    };

    let t = Instant::now();
    let [multi, single, none] = run(0.3, 1);
    let seconds = t.elapsed().as_secs_f64();
    let single_pass = multi - single > 0.05 && single - none > 0.05 && seconds < 1200.0;
    report(
        7,
        single_pass,
        format!("J = 0.3: I(N) multistep {multi:.3} > single gate {single:.3} > none {none:.3} bits; {seconds:.0}s"),
    );

    let mut sums = [0.0; 3];
    for seed in 0..5 {
        let r = run(0.2, seed);
        println!("  J = 0.2 seed {seed}: multistep {:.3}, single {:.3}, none {:.3}", r[0], r[1], r[2]);
        for (s, v) in sums.iter_mut().zip(r) {
            *s += v / 5.0;
        }
    }
    let mean_pass = sums[0] > sums[1] && sums[1] > sums[2];
    report(
        7,
        mean_pass,
        format!("J = 0.2, 5 seeds: mean I(N) multistep {:.3} > single gate {:.3} > none {:.3} bits", sums[0], sums[1], sums[2]),
    );
    assert!(single_pass && mean_pass);
}

#[test]
fn criterion_08_erase_and_recover() {
    let layout = CircuitLayout::xyz(&XyzParams::reference(), 9, 40, 0).unwrap();
    let init = up_at(9, 0);
    let rom = ReducedOrderModel::build(&layout, &init, &TruncationConfig::new(1e-3, 4096), Route::Chain).unwrap();
    let cfg = OptimizerConfig { learning_rate: 0.03, max_iters: 1000, ..Default::default() };
    let res = control::optimize(&EraseRecover::new(&rom).unwrap(), 0, 40, &cfg).unwrap();
    let mixed = tensor::scale_real(&tensor::identity(2), 0.5);
    let (mut worst_half, mut worst_end): (f64, f64) = (0.0, 0.0);
    for t in control::tetrahedron_states() {
        let mut start = init.clone();
        start[0] = t.psi;
        let traj = exact_trajectory(&layout, &start, Some(&res.controls));
        worst_half = worst_half.max(rom::trace_distance(&traj.rho[20], &mixed).unwrap());
        worst_end = worst_end.max(rom::trace_distance(&traj.rho[40], &t.density()).unwrap());
    }
    let pass = worst_half <= 0.1 && worst_end <= 0.1;
    report(
        8,
        pass,
        format!("tetrahedron inputs: max D(ρ(N/2), I/2) {worst_half:.3}, max D(ρ(N), ρ(0)) {worst_end:.3}; loss {:.3e}", res.best_loss),
    );
    assert!(pass);
}

#[test]
fn criterion_09_transfer_beats_free_evolution() {
    let (n, bob, alice, steps) = (9, 0, 8, 40);
    let layout = CircuitLayout::xyz(&XyzParams::reference(), n, steps, alice).unwrap();
    let inputs: Vec<_> = control::tetrahedron_states()
        .iter()
        .map(|t| {
            let mut init = all_down(n);
            init[bob] = t.psi;
            init
        })
        .collect();
    let roms: Vec<_> = inputs
        .iter()
        .map(|init| ReducedOrderModel::build(&layout, init, &TruncationConfig::new(1e-3, 4096), Route::Chain).unwrap())
        .collect();
    let cfg = OptimizerConfig { learning_rate: 0.03, max_iters: 400, ..Default::default() };
    let res = control::optimize(&Transfer::tetrahedron(&roms).unwrap(), 0, steps, &cfg).unwrap();
    let mean_fidelity = |c: Option<&ControlSequence>| {
        let states = control::tetrahedron_states();
        let total: f64 = inputs
            .iter()
            .zip(&states)
            .map(|(init, t)| rom::pure_fidelity(&t.psi, exact_trajectory(&layout, init, c).rho.last().unwrap()))
            .sum();
        total / 4.0
    };
    let (free, driven) = (mean_fidelity(None), mean_fidelity(Some(&res.controls)));
    let pass = driven > free && driven > 0.5;
    report(9, pass, format!("mean fidelity {driven:.3} with control vs {free:.3} without"));
    assert!(pass);
}

#[test]
fn criterion_10_channels_and_entropies() {
    let mi = |c: ChoiMatrix| c.mutual_information().unwrap();
    let id = mi(ChoiMatrix::identity(2));
    let depol = mi(ChoiMatrix::depolarizing(2));
    let deph = mi(ChoiMatrix::dephasing(2));
    let entropy_pass = (id - 2.0).abs() <= 1e-8 && depol.abs() <= 1e-8 && (deph - 1.0).abs() <= 1e-8;

    // Tomographic marginals from both simulators.
    let half = tensor::scale_real(&tensor::identity(2), 0.5);
    let mut worst_marginal: f64 = 0.0;
    for layout in [
        CircuitLayout::xyz(&XyzParams::reference(), 6, 15, 2).unwrap(),
        CircuitLayout::mbl(&MblParams::sampled(0.3, 6, 9), 15, 0).unwrap(),
    ] {
        let init = up_at(6, layout.target());
        let c = ControlSequence::random(3, 12, 2, 31);
        let rom = ReducedOrderModel::build(&layout, &init, &TruncationConfig::new(1e-3, 256), Route::Chain).unwrap();
        for ch in rom.channels(Some(&c)).unwrap() {
            worst_marginal = worst_marginal.max(max_abs(&(ch.input_marginal() - &half)));
        }
        for l in 0..6 {
            for row in exactsim::process_channels(&layout, &init, l, Some(&c), &SimConfig::default()).unwrap() {
                for ch in row {
                    worst_marginal = worst_marginal.max(max_abs(&(ch.input_marginal() - &half)));
                }
            }
        }
    }

    // Kraus completeness of every gate the environment builders split.
    let mut worst_tp: f64 = 0.0;
    let mut gates = 0;
    for n in [3, 5, 7] {
        let layouts = [
            CircuitLayout::xyz(&XyzParams::reference(), n, 4, n / 2).unwrap(),
            CircuitLayout::mbl(&MblParams::sampled(0.3, n, n as u64), 4, 0).unwrap(),
        ];
        for layout in &layouts {
            for g in layout.layer() {
                for dec in [envnet::decompose_gate(g.matrix(), 2, 2), envnet::decompose_gate_system_last(g.matrix(), 2, 2)] {
                    worst_tp = worst_tp.max(envnet::env_channel(&dec.unwrap()).tp_residual());
                    gates += 1;
                }
            }
            let u = envnet::move_spin_first(&models::dense_layer_unitary(layout).unwrap(), n, layout.target());
            worst_tp = worst_tp.max(envnet::env_channel(&envnet::decompose_gate(&u, 2, 1 << (n - 1)).unwrap()).tp_residual());
            gates += 1;
        }
    }
    let pass = entropy_pass && worst_marginal <= 1e-8 && worst_tp <= 1e-12;
    report(
        10,
        pass,
        format!(
            "I(id) {id:.10}, I(depol) {depol:.1e}, I(dephase) {deph:.10}; max marginal deviation {worst_marginal:.1e}; max Kraus TP residual over {gates} gates {worst_tp:.1e}"
        ),
    );
    assert!(pass);
}
