//! Eigenmode diagnostics of frozen configurations.
//!
//! The non-Hermitian evolution matrix of a frozen cloud has `3N` collective
//! modes with complex frequencies `λ_n`; each mode decays at
//! `Γ_n = -2 Re λ_n` and is shifted by `ω_n = Im λ_n`. Long-lived
//! (sub-radiant) modes carry `Γ_n ≪ γ`, super-radiant ones `Γ_n > γ`;
//! their population balance is what atomic motion disturbs. The inverse
//! participation ratio of each right eigenvector, computed on per-atom
//! weights (summed over the three sublevels), measures how many atoms a
//! mode lives on: 1 for a single atom, ~1/N for a fully delocalized mode.

use crate::coupling::EvolutionMatrix;
use crate::linalg;
use crate::{C64, Result};

/// Full mode spectrum of one configuration, sorted by decay rate
/// (most sub-radiant first).
#[derive(Debug, Clone)]
pub struct ModeSpectrum {
    pub eigenvalues: Vec<C64>,
    /// `Γ_n = -2 Re λ_n` (γ units), ascending.
    pub decay_rates: Vec<f64>,
    /// `ω_n = Im λ_n` (γ units).
    pub frequency_shifts: Vec<f64>,
    /// Per-atom inverse participation ratio of the right eigenvectors,
    /// in `[1/N, 1]`.
    pub ipr: Vec<f64>,
    pub n_atoms: usize,
}

impl ModeSpectrum {
    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `Σ_n Γ_n`, equal to `3Nγ` by the trace sum rule.
    pub fn total_decay_rate(&self) -> f64 {
        self.decay_rates.iter().sum()
    }
}

/// Eigen-decompose the evolution matrix of a frozen configuration.
pub fn mode_spectrum(matrix: &EvolutionMatrix) -> Result<ModeSpectrum> {
    let n_atoms = matrix.n_atoms();
    let (values, vectors) = linalg::eig(&matrix.matrix)?;
    let dim = values.len();

    let mut order: Vec<usize> = (0..dim).collect();
    let gamma = |i: usize| -2.0 * values[i].re;
    order.sort_by(|&a, &b| gamma(a).partial_cmp(&gamma(b)).unwrap());

    let mut eigenvalues = Vec::with_capacity(dim);
    let mut decay_rates = Vec::with_capacity(dim);
    let mut frequency_shifts = Vec::with_capacity(dim);
    let mut ipr = Vec::with_capacity(dim);
    for &idx in &order {
        let lam = values[idx];
        eigenvalues.push(lam);
        decay_rates.push(-2.0 * lam.re);
        frequency_shifts.push(lam.im);

        let col = vectors.column(idx);
        let mut sum_w = 0.0;
        let mut sum_w2 = 0.0;
        for atom in 0..n_atoms {
            let w: f64 = (0..3).map(|m| col[3 * atom + m].norm_sqr()).sum();
            sum_w += w;
            sum_w2 += w * w;
        }
        ipr.push(sum_w2 / (sum_w * sum_w));
    }

    Ok(ModeSpectrum {
        eigenvalues,
        decay_rates,
        frequency_shifts,
        ipr,
        n_atoms,
    })
}

/// Fraction of modes with `Γ_n < gamma_cut`.
pub fn subradiant_fraction(spectrum: &ModeSpectrum, gamma_cut: f64) -> f64 {
    assert!(gamma_cut > 0.0, "gamma_cut must be positive");
    let below = spectrum
        .decay_rates
        .iter()
        .filter(|&&g| g < gamma_cut)
        .count();
    below as f64 / spectrum.n_modes() as f64
}
