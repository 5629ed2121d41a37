//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

use std::sync::Arc;

use lts_core::spectra::{Blocks, SpectralDecomposition};
use lts_core::C64;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// `∫ w(t) e^{−iHt} ρ e^{iHt} dt` with `w(t) = √(λ/π) exp(−λ (t − t0)²)`,
/// by the trapezoid rule on `n` points over `t0 ± 6/√λ`, with each
/// propagator from a dense matrix exponential.
pub fn quadrature_apply(h: &DMatrix<C64>, rho: &DMatrix<C64>, t0: f64, lambda: f64, n: usize) -> DMatrix<C64> {
    let half = 6.0 / lambda.sqrt();
    let step = 2.0 * half / (n - 1) as f64;
    let norm = (lambda / std::f64::consts::PI).sqrt();
    let mut acc = DMatrix::<C64>::zeros(rho.nrows(), rho.ncols());
    for k in 0..n {
        let t = t0 - half + step * k as f64;
        let u = (h * C64::new(0.0, -t)).exp();
        let w = norm * (-lambda * (t - t0) * (t - t0)).exp() * if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        acc += (&u * rho * u.adjoint()) * C64::new(w * step, 0.0);
    }
    acc
}

/// Right-hand side of `dρ/dt = Σ_{ab} γ_ab (A_a ρ A_b − ½{A_b A_a, ρ})`.
fn lindblad_rhs(ops: &[DMatrix<C64>], gamma: &DMatrix<f64>, rho: &DMatrix<C64>) -> DMatrix<C64> {
    let mut out = DMatrix::<C64>::zeros(rho.nrows(), rho.ncols());
    for (a, aa) in ops.iter().enumerate() {
        for (b, ab) in ops.iter().enumerate() {
            let g = C64::new(gamma[(a, b)], 0.0);
            let prod = ab * aa;
            out += (aa * rho * ab - (&prod * rho + rho * &prod) * C64::new(0.5, 0.0)) * g;
        }
    }
    out
}

/// Classical fourth-order Runge–Kutta integration of the full dissipator.
pub fn rk4_lindblad(
    ops: &[DMatrix<C64>],
    gamma: &DMatrix<f64>,
    rho0: &DMatrix<C64>,
    t: f64,
    steps: usize,
) -> DMatrix<C64> {
    let h = t / steps as f64;
    let half = C64::new(0.5 * h, 0.0);
    let full = C64::new(h, 0.0);
    let sixth = C64::new(h / 6.0, 0.0);
    let two = C64::new(2.0, 0.0);
    let mut rho = rho0.clone();
    for _ in 0..steps {
        let k1 = lindblad_rhs(ops, gamma, &rho);
        let k2 = lindblad_rhs(ops, gamma, &(&rho + &k1 * half));
        let k3 = lindblad_rhs(ops, gamma, &(&rho + &k2 * half));
        let k4 = lindblad_rhs(ops, gamma, &(&rho + &k3 * full));
        rho += (k1 + k2 * two + k3 * two + k4) * sixth;
    }
    rho
}

/// Random block spectrum of total dimension at most `max_dim` with
/// distinct energies in `[−scale, scale]`.
pub fn random_spectrum(rng: &mut ChaCha8Rng, max_dim: usize, scale: f64) -> SpectralDecomposition {
    let mut ranks = Vec::new();
    let mut total = 0;
    let target = rng.random_range(2..=max_dim);
    while total < target {
        let r = rng.random_range(1..=3).min(target - total);
        ranks.push(r);
        total += r;
    }
    if ranks.len() < 2 {
        ranks = vec![1; total];
    }
    let energies = sorted_distinct(rng, ranks.len(), scale, 1e-6);
    SpectralDecomposition::new(Arc::new(Blocks::contiguous(ranks).unwrap()), energies).unwrap()
}

/// `n` sorted values in `[−scale, scale]` at least `min_gap` apart.
pub fn sorted_distinct(rng: &mut ChaCha8Rng, n: usize, scale: f64, min_gap: f64) -> Vec<f64> {
    loop {
        let mut e: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
        e.sort_by(f64::total_cmp);
        if e.windows(2).all(|w| w[1] - w[0] >= min_gap) {
            return e;
        }
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
