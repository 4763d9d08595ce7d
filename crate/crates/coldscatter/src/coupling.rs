//! Dipole-dipole coupling kernel and assembly of the evolution matrix.
//!
//! The amplitudes `b_e` of singly-excited states (atom `i`, Zeeman sublevel
//! `m`) evolve under
//!
//! ```text
//!     db_e/dt = (iδ_e - 1/2) b_e - (i/2) Ω_e + (i/2) Σ_{e'≠e} V_ee' b_e'
//! ```
//!
//! (γ = k₀ = 1). The pair kernel `V` contracts the free-space Green's
//! tensor
//!
//! ```text
//!     G_μν(r) = (e^{ir}/r³) { δ_μν [1 - ir - r²] - r̂_μ r̂_ν [3 - 3ir - r²] }
//! ```
//!
//! with the spherical transition polarizations of a `J=0 → J=1` line. All
//! 1/r, 1/r², 1/r³ terms are retained. The prefactor −3/2 is the unique
//! choice for which an isolated atom keeps linewidth γ; it is pinned by the
//! two-atom Dicke limit (pair rates → 2γ and 0 at vanishing separation).
//!
//! Basis convention: the bra-side transition polarization enters the
//! kernel conjugated, `V(m,m') = -(3/2) ê_m† G ê_m'`. This is the unique
//! choice (up to the mirror relabeling `m ↔ -m`, i.e. the sign of the
//! quantization axis) for which the medium is passive — every collective
//! mode decays, `Γ_n > 0` — and the two-atom Dicke limit comes out right.
//! Reciprocity then takes its angular-momentum-conjugated form: swapping
//! `(i,m) ↔ (j,m')` *together with* `m`-conjugation leaves the matrix
//! invariant,
//!
//! ```text
//!     A[(i,m),(j,m')] = (-1)^{m+m'} A[(j,-m'),(i,-m)]
//! ```
//!
//! (a literal `A = Aᵀ` cannot hold in the spherical basis once cross-`m`
//! couplings are present). The drive addresses the `m = +1` entries and
//! the radiated field of amplitude `b_{i,m}` carries polarization `ê_m`.

use crate::config::PhysParams;
use crate::{C64, Error, Result};
use ndarray::{Array1, Array2};

/// Separations below this are treated as coincident atoms (a sampling bug,
/// not a physical configuration).
pub const COINCIDENCE_THRESHOLD: f64 = 1e-12;

/// Index of one excited sublevel: atom number plus `m ∈ {-1, 0, +1}`.
///
/// Flat layout: `flat = 3·atom + (m + 1)`, bijective with `0..3N-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SublevelIndex {
    pub atom: usize,
    pub m: i8,
}

impl SublevelIndex {
    pub fn new(atom: usize, m: i8) -> Self {
        assert!((-1..=1).contains(&m), "m must be -1, 0 or +1, got {m}");
        SublevelIndex { atom, m }
    }

    pub fn flat(&self) -> usize {
        3 * self.atom + (self.m + 1) as usize
    }

    pub fn from_flat(flat: usize) -> Self {
        SublevelIndex {
            atom: flat / 3,
            m: (flat % 3) as i8 - 1,
        }
    }
}

/// Spherical unit vector for the transition `g → e_m`, quantization axis `z`:
/// `ê₀ = ẑ`, `ê±₁ = ∓(x̂ ± iŷ)/√2`.
pub fn spherical_unit_vector(m: i8) -> [C64; 3] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    match m {
        0 => [C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        1 => [C64::new(-s, 0.0), C64::new(0.0, -s), C64::new(0.0, 0.0)],
        -1 => [C64::new(s, 0.0), C64::new(0.0, -s), C64::new(0.0, 0.0)],
        _ => panic!("m must be -1, 0 or +1, got {m}"),
    }
}

/// The 3×3 Green's tensor between two points separated by `r_vec` (λ̄ units).
/// Symmetric (`G_μν = G_νμ`) and even in `r_vec`.
pub fn green_tensor(r_vec: [f64; 3]) -> Result<[[C64; 3]; 3]> {
    let r2 = r_vec[0] * r_vec[0] + r_vec[1] * r_vec[1] + r_vec[2] * r_vec[2];
    let r = r2.sqrt();
    if r < COINCIDENCE_THRESHOLD {
        return Err(Error::CoincidentAtoms { separation: r });
    }
    Ok(green_tensor_unchecked(r_vec, r))
}

#[inline]
fn green_tensor_unchecked(r_vec: [f64; 3], r: f64) -> [[C64; 3]; 3] {
    let phase = C64::new(0.0, r).exp() / (r * r * r);
    // bracket coefficients of the δ_μν and r̂_μ r̂_ν terms
    let ca = phase * C64::new(1.0 - r * r, -r);
    let cb = phase * C64::new(3.0 - r * r, -3.0 * r);
    let rhat = [r_vec[0] / r, r_vec[1] / r, r_vec[2] / r];
    let mut g = [[C64::new(0.0, 0.0); 3]; 3];
    for mu in 0..3 {
        for nu in mu..3 {
            let mut v = -cb * (rhat[mu] * rhat[nu]);
            if mu == nu {
                v += ca;
            }
            g[mu][nu] = v;
            g[nu][mu] = v;
        }
    }
    g
}

/// Pair kernel `V(m, m') = -(3/2) ê_m† G(r_vec) ê_m'` (bra side conjugated).
///
/// Reciprocity at the kernel level takes the m-conjugated form
/// `pair_coupling(r, m, m') = (-1)^{m+m'} pair_coupling(-r, -m', -m)`.
pub fn pair_coupling(r_vec: [f64; 3], m: i8, m_prime: i8) -> Result<C64> {
    let g = green_tensor(r_vec)?;
    let em = spherical_unit_vector(m);
    let emp = spherical_unit_vector(m_prime);
    let mut v = C64::new(0.0, 0.0);
    for mu in 0..3 {
        for nu in 0..3 {
            v += em[mu].conj() * g[mu][nu] * emp[nu];
        }
    }
    Ok(-1.5 * v)
}

/// All nine kernel elements of one pair as a 3×3 block indexed `[m+1][m'+1]`.
#[inline]
fn pair_block(g: &[[C64; 3]; 3]) -> [[C64; 3]; 3] {
    // columns G·ê_m' for m' = -1, 0, +1
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut ge = [[C64::new(0.0, 0.0); 3]; 3]; // ge[m'+1] = G ê_m'
    for mu in 0..3 {
        // ê₋₁ = (1, -i, 0)/√2
        ge[0][mu] = s * (g[mu][0] - C64::new(0.0, 1.0) * g[mu][1]);
        // ê₀ = ẑ
        ge[1][mu] = g[mu][2];
        // ê₊₁ = -(1, i, 0)/√2
        ge[2][mu] = -s * (g[mu][0] + C64::new(0.0, 1.0) * g[mu][1]);
    }
    let mut block = [[C64::new(0.0, 0.0); 3]; 3];
    for (mi, em) in [
        spherical_unit_vector(-1),
        spherical_unit_vector(0),
        spherical_unit_vector(1),
    ]
    .iter()
    .enumerate()
    {
        for mpi in 0..3 {
            let mut v = C64::new(0.0, 0.0);
            for mu in 0..3 {
                v += em[mu].conj() * ge[mpi][mu];
            }
            block[mi][mpi] = -1.5 * v;
        }
    }
    block
}

/// Detuning of the `g → e_m` transition: `δ_e(m) = δ - (m - 1)·Δ`.
///
/// The driven σ⁺ transition (`m = +1`) sits at the laser detuning δ; the
/// `m = 0` and `m = -1` transitions are pushed off resonance by Δ and 2Δ.
/// `Δ = 0` recovers degenerate sublevels.
pub fn detuning(m: i8, params: &PhysParams) -> f64 {
    params.delta - (m as f64 - 1.0) * params.zeeman
}

/// Drive vector `Ω_e`: `Ω₀ e^{i k·r_e}` on the `m = +1` entries, zero on
/// `m ∈ {0, -1}` (σ⁺ polarized plane wave along `+z`, `k = ẑ` in k₀ units).
/// Positions must already be at the evaluation time.
pub fn drive_vector(positions: &[[f64; 3]], params: &PhysParams) -> Array1<C64> {
    let n = positions.len();
    let mut omega = Array1::zeros(3 * n);
    for (i, p) in positions.iter().enumerate() {
        omega[3 * i + 2] = params.rabi * C64::new(0.0, p[2]).exp();
    }
    omega
}

/// Dense `3N×3N` evolution matrix with its assembly snapshot.
#[derive(Debug, Clone)]
pub struct EvolutionMatrix {
    /// `A[e,e] = iδ_e - 1/2`; `A[e,e'] = (i/2) V_ee'` between different
    /// atoms; zero between sublevels of the same atom.
    pub matrix: Array2<C64>,
    /// Positions the couplings were evaluated at.
    pub positions: Vec<[f64; 3]>,
    /// Time stamp of the assembly (γ⁻¹).
    pub t_assembled: f64,
}

impl EvolutionMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_atoms(&self) -> usize {
        self.positions.len()
    }
}

/// Assemble the full evolution matrix for frozen positions.
///
/// Cost is O(N²) with one Green's tensor per pair; both triangles are filled
/// from the same block (`A = Aᵀ` by construction of the kernel convention).
pub fn assemble(positions: &[[f64; 3]], params: &PhysParams, t: f64) -> Result<EvolutionMatrix> {
    let n = positions.len();
    let dim = 3 * n;
    let mut a = Array2::<C64>::zeros((dim, dim));

    for i in 0..n {
        for m in -1i8..=1 {
            let e = 3 * i + (m + 1) as usize;
            a[[e, e]] = C64::new(-0.5, detuning(m, params));
        }
    }

    let half_i = C64::new(0.0, 0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let r_vec = [
                positions[i][0] - positions[j][0],
                positions[i][1] - positions[j][1],
                positions[i][2] - positions[j][2],
            ];
            let r2 = r_vec[0] * r_vec[0] + r_vec[1] * r_vec[1] + r_vec[2] * r_vec[2];
            let r = r2.sqrt();
            if r < COINCIDENCE_THRESHOLD {
                return Err(Error::CoincidentAtoms { separation: r });
            }
            let g = green_tensor_unchecked(r_vec, r);
            let block = pair_block(&g);
            for mi in 0..3 {
                for mpi in 0..3 {
                    // G is even in r, so the (j,i) block is the same
                    // contraction with the m-arguments swapped.
                    a[[3 * i + mi, 3 * j + mpi]] = half_i * block[mi][mpi];
                    a[[3 * j + mi, 3 * i + mpi]] = half_i * block[mi][mpi];
                }
            }
        }
    }

    Ok(EvolutionMatrix {
        matrix: a,
        positions: positions.to_vec(),
        t_assembled: t,
    })
}

/// Smallest pairwise distance of a configuration (diagnostics for step-size
/// underflow reports).
pub fn closest_pair_distance(positions: &[[f64; 3]]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            let d2: f64 = (0..3)
                .map(|k| (positions[i][k] - positions[j][k]).powi(2))
                .sum();
            best = best.min(d2.sqrt());
        }
    }
    best
}
