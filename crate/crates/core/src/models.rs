//! Discrete-time spin-chain circuits.
//!
//! One time step is the ordered sweep of two-site gates over the bonds
//! `(0,1), (1,2), …, (n−2, n−1)`: the gate on bond `b` acts after every gate
//! on bonds `< b` within the same step. Both models are time-independent,
//! so a [`CircuitLayout`] stores a single layer that is repeated `n_steps`
//! times.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::tensor::{self, CMat, C64, ONE, ZERO};

/// Unitarity tolerance for every emitted gate.
pub const GATE_TOL: f64 = 1e-10;

/// Dense unitary on one (2×2) or two (4×4) spins. Two-spin gates use the
/// left spin as the most significant index.
#[derive(Clone, Debug, PartialEq)]
pub struct Gate(CMat);

impl Gate {
    pub fn new(m: CMat) -> Result<Self> {
        if !(m.nrows() == 2 || m.nrows() == 4) || m.nrows() != m.ncols() {
            return invalid(format!("gate must be 2x2 or 4x4, got {}x{}", m.nrows(), m.ncols()));
        }
        tensor::ensure_unitary(&m, GATE_TOL)?;
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_matrix(self) -> CMat {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// Where a bond sits in the chain; decides the single-spin field weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BondPosition {
    /// First bond: full field on the left spin, half on the right.
    Left,
    /// Interior bond: half field on both spins.
    Mid,
    /// Last bond: half field on the left spin, full on the right.
    Right,
    /// The only bond of a two-spin chain: full field on both spins.
    Pair,
}

impl BondPosition {
    pub fn for_bond(bond: usize, n: usize) -> Self {
        match (bond, n) {
            (_, 2) => Self::Pair,
            (0, _) => Self::Left,
            (b, n) if b + 2 == n => Self::Right,
            _ => Self::Mid,
        }
    }

    fn field_weights(self) -> (f64, f64) {
        match self {
            Self::Left => (1.0, 0.5),
            Self::Mid => (0.5, 0.5),
            Self::Right => (0.5, 1.0),
            Self::Pair => (1.0, 1.0),
        }
    }
}

impl FromStr for BondPosition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Self::Left),
            "mid" => Ok(Self::Mid),
            "right" => Ok(Self::Right),
            "pair" => Ok(Self::Pair),
            other => invalid(format!("unknown bond position {other:?}")),
        }
    }
}

impl fmt::Display for BondPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Left => "left",
            Self::Mid => "mid",
            Self::Right => "right",
            Self::Pair => "pair",
        })
    }
}

/// Couplings, field and time step of the discretized XYZ chain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct XyzParams {
    pub j: [f64; 3],
    pub h: [f64; 3],
    pub tau: f64,
}

impl XyzParams {
    /// `J = (0.9, 1, 1.1)`, `h = (0.2, 0.2, 0.2)`, `τ = 0.15`.
    pub fn reference() -> Self {
        Self { j: [0.9, 1.0, 1.1], h: [0.2, 0.2, 0.2], tau: 0.15 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.j.iter().chain(&self.h).all(|x| x.is_finite()) && self.tau.is_finite()) {
            return Err(Error::NonFinite("XYZ parameters"));
        }
        // τ = 0 is admitted as the degenerate identity circuit.
        if self.tau < 0.0 {
            return invalid(format!("time step must be non-negative, got {}", self.tau));
        }
        Ok(())
    }
}

/// Two-spin Hamiltonian `Σ_k J_k σ^k⊗σ^k + w_l h_k σ^k⊗I + w_r h_k I⊗σ^k`.
pub fn xyz_bond_hamiltonian(p: &XyzParams, position: BondPosition) -> CMat {
    let (wl, wr) = position.field_weights();
    let id = tensor::identity(2);
    let mut h = tensor::zeros(4, 4);
    for (k, s) in tensor::paulis().iter().enumerate() {
        h += tensor::scale_real(&tensor::kron(s, s), p.j[k]);
        h += tensor::scale_real(&tensor::kron(s, &id), wl * p.h[k]);
        h += tensor::scale_real(&tensor::kron(&id, s), wr * p.h[k]);
    }
    h
}

/// `exp(−i·τ·H_position)`.
pub fn build_xyz_gate(p: &XyzParams, position: BondPosition) -> Result<Gate> {
    p.validate()?;
    let h = xyz_bond_hamiltonian(p, position);
    Gate::new(tensor::expm_hermitian(&h, p.tau)?)
}

/// Disordered kicked-Ising Floquet model.
#[derive(Clone, Debug, PartialEq)]
pub struct MblParams {
    /// Coupling used both in the `ZZ` term and in the transverse kick.
    pub j: f64,
    /// Per-spin field angles in `[0, 2π)`, one per spin.
    pub fields: Vec<f64>,
    pub seed: u64,
    /// The printed Floquet operator sums fields over spins `0..n−1` only;
    /// set this to also apply `fields[n−1]` to the last spin.
    pub include_last_field: bool,
}

impl MblParams {
    pub fn sampled(j: f64, n: usize, seed: u64) -> Self {
        Self { j, fields: sample_disorder(seed, n), seed, include_last_field: false }
    }

    pub fn n(&self) -> usize {
        self.fields.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.j.is_finite() {
            return Err(Error::NonFinite("MBL coupling"));
        }
        if let Some(h) = self.fields.iter().find(|h| !(0.0..TAU).contains(*h)) {
            return invalid(format!("field angle {h} outside [0, 2π)"));
        }
        Ok(())
    }
}

/// `n` angles drawn from `Uniform[0, 2π)` with a ChaCha8 stream seeded by
/// `seed`.
pub fn sample_disorder(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x: f64 = rng.gen_range(0.0..TAU);
            // gen_range is half-open, but guard against rounding up to 2π.
            if x >= TAU {
                0.0
            } else {
                x
            }
        })
        .collect()
}

fn x_kick(j: f64) -> CMat {
    // exp(i·J·σx)
    let (s, c) = j.sin_cos();
    tensor::from_rows(&[&[C64::new(c, 0.0), C64::new(0.0, s)], &[C64::new(0.0, s), C64::new(c, 0.0)]])
}

/// Gates of one Floquet period
/// `F = exp[i Σ_i (h_i σ^z_i + J σ^z_i σ^z_{i+1})] · exp[i J Σ_i σ^x_i]`,
/// one per bond in staircase order.
///
/// The diagonal `ZZ`+field factor of bond `b` is preceded by the `x` kicks
/// of the spins it touches for the first time: both spins for bond 0, the
/// right spin otherwise. Composing the returned gates left to right
/// reproduces `F`.
pub fn build_mbl_layer(p: &MblParams) -> Result<Vec<Gate>> {
    p.validate()?;
    let n = p.n();
    if n < 2 {
        return invalid(format!("MBL layer needs at least two spins, got {n}"));
    }
    let kick = x_kick(p.j);
    let id = tensor::identity(2);
    let z = [1.0, -1.0];
    (0..n - 1)
        .map(|b| {
            let last_field = if p.include_last_field && b + 2 == n { p.fields[n - 1] } else { 0.0 };
            let phases: Vec<C64> = (0..4)
                .map(|idx| {
                    let (za, zb) = (z[idx >> 1], z[idx & 1]);
                    C64::from_polar(1.0, p.fields[b] * za + p.j * za * zb + last_field * zb)
                })
                .collect();
            let d = tensor::diag(&phases);
            let kicks = if b == 0 { tensor::kron(&kick, &kick) } else { tensor::kron(&id, &kick) };
            Gate::new(&d * &kicks)
        })
        .collect()
}

/// A time-independent staircase circuit with a designated target spin.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitLayout {
    n: usize,
    n_steps: usize,
    /// `layer[b]` acts on spins `(b, b+1)`.
    layer: Vec<Gate>,
    target: usize,
}

impl CircuitLayout {
    pub fn new(n: usize, n_steps: usize, layer: Vec<Gate>, target: usize) -> Result<Self> {
        if n == 0 {
            return invalid("a chain needs at least one spin");
        }
        if layer.len() != n - 1 {
            return invalid(format!("{n} spins need {} bond gates, got {}", n - 1, layer.len()));
        }
        if let Some(g) = layer.iter().find(|g| g.dim() != 4) {
            return invalid(format!("bond gates must be 4x4, got {}x{}", g.dim(), g.dim()));
        }
        if target >= n {
            return invalid(format!("target spin {target} outside chain of {n}"));
        }
        Ok(Self { n, n_steps, layer, target })
    }

    pub fn xyz(p: &XyzParams, n: usize, n_steps: usize, target: usize) -> Result<Self> {
        if n < 2 {
            return invalid("XYZ chain needs at least two spins");
        }
        let layer = (0..n - 1)
            .map(|b| build_xyz_gate(p, BondPosition::for_bond(b, n)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(n, n_steps, layer, target)
    }

    pub fn mbl(p: &MblParams, n_steps: usize, target: usize) -> Result<Self> {
        let layer = build_mbl_layer(p)?;
        Self::new(p.n(), n_steps, layer, target)
    }

    /// Every bond gate is the identity.
    pub fn identity(n: usize, n_steps: usize, target: usize) -> Result<Self> {
        let layer = (0..n.saturating_sub(1)).map(|_| Gate(tensor::identity(4))).collect();
        Self::new(n, n_steps, layer, target)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn layer(&self) -> &[Gate] {
        &self.layer
    }

    pub fn bond_gate(&self, bond: usize) -> &CMat {
        self.layer[bond].matrix()
    }

    pub fn with_target(&self, target: usize) -> Result<Self> {
        Self::new(self.n, self.n_steps, self.layer.clone(), target)
    }

    pub fn with_steps(&self, n_steps: usize) -> Self {
        Self { n_steps, ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    /// `|↑⟩ = (1, 0)`, `|↓⟩ = (0, 1)`.
    pub fn amplitudes(self) -> [C64; 2] {
        match self {
            Spin::Up => [ONE, ZERO],
            Spin::Down => [ZERO, ONE],
        }
    }
}

impl FromStr for Spin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "up" => Ok(Spin::Up),
            "down" => Ok(Spin::Down),
            other => invalid(format!("unknown spin state {other:?}")),
        }
    }
}

/// Basis product state; spin 0 is the most significant bit.
pub fn product_state(spins: &[Spin]) -> Vec<C64> {
    let n = spins.len();
    let mut idx = 0usize;
    for s in spins {
        idx = (idx << 1) | usize::from(*s == Spin::Down);
    }
    let mut v = vec![ZERO; 1 << n];
    v[idx] = ONE;
    v
}

/// Tensor product of normalized single-spin states.
pub fn product_state_from(locals: &[[C64; 2]]) -> Result<Vec<C64>> {
    if locals.is_empty() {
        return invalid("product state needs at least one spin");
    }
    let mut v = vec![ONE];
    for l in locals {
        let norm = (l[0].norm_sqr() + l[1].norm_sqr()).sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return invalid(format!("single-spin state has norm {norm}"));
        }
        v = v.iter().flat_map(|a| [a * l[0], a * l[1]]).collect();
    }
    Ok(v)
}

/// `I ⊗ op ⊗ I` acting on spins `(bond, bond+1)` of an `n`-spin chain.
pub fn embed_two_site(op: &CMat, n: usize, bond: usize) -> CMat {
    let left = tensor::identity(1 << bond);
    let right = tensor::identity(1 << (n - bond - 2));
    tensor::kron(&tensor::kron(&left, op), &right)
}

/// `I ⊗ op ⊗ I` acting on spin `site`.
pub fn embed_one_site(op: &CMat, n: usize, site: usize) -> CMat {
    let left = tensor::identity(1 << site);
    let right = tensor::identity(1 << (n - site - 1));
    tensor::kron(&tensor::kron(&left, op), &right)
}

/// Largest chain for which dense `2^n × 2^n` layer unitaries are built.
pub const DENSE_LIMIT: usize = 12;

/// Dense unitary of one full time step, `G_{n−2} ⋯ G_1 G_0`.
pub fn dense_layer_unitary(layout: &CircuitLayout) -> Result<CMat> {
    let n = layout.n();
    if n > DENSE_LIMIT {
        return Err(Error::Resource(format!("dense layer for {n} spins exceeds limit {DENSE_LIMIT}")));
    }
    let mut u = tensor::identity(1 << n);
    for b in 0..n - 1 {
        u = &embed_two_site(layout.bond_gate(b), n, b) * &u;
    }
    Ok(u)
}

/// Dense `Σ_i (J·σσ + fields)` of the whole chain with every spin carrying
/// one full field.
pub fn xyz_chain_hamiltonian(p: &XyzParams, n: usize) -> CMat {
    let dim = 1 << n;
    let mut h = tensor::zeros(dim, dim);
    for (k, s) in tensor::paulis().iter().enumerate() {
        let ss = tensor::kron(s, s);
        for b in 0..n - 1 {
            h += tensor::scale_real(&embed_two_site(&ss, n, b), p.j[k]);
        }
        for i in 0..n {
            h += tensor::scale_real(&embed_one_site(s, n, i), p.h[k]);
        }
    }
    h
}
