//! Turn scenario specs into spectra, states and parameter grids.

use std::sync::Arc;

use anyhow::{bail, ensure, Context as _, Result};
use lts_core::random::{random_density_matrix, random_hermitian, random_pure_state};
use lts_core::spectra::DEFAULT_DEG_TOL;
use lts_core::{states, Blocks, DensityMatrix, SpectralDecomposition, C64};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::scenario::{ModelSpec, Params, StateSpec, DEFAULT_T_COUNT, DEFAULT_T_STOP};

/// Largest Hilbert-space dimension for which dense states are built.
pub const MAX_DENSE_DIM: usize = 2048;

pub fn model(spec: &ModelSpec, rng: &mut ChaCha8Rng) -> Result<SpectralDecomposition> {
    let out = match spec {
        ModelSpec::Spin { n_spins, omega } => SpectralDecomposition::spin_ensemble(*n_spins, *omega)?,
        ModelSpec::Oscillator { modes, omega, nu_max } => {
            SpectralDecomposition::oscillator_modes(*modes, *omega, *nu_max)?
        }
        ModelSpec::Levels {
            energies,
            degeneracies,
            energy_scale,
        } => {
            let s = match degeneracies {
                None => SpectralDecomposition::from_diagonal(energies, DEFAULT_DEG_TOL)?,
                Some(d) => {
                    ensure!(
                        d.len() == energies.len(),
                        "degeneracies has {} entries, energies {}",
                        d.len(),
                        energies.len()
                    );
                    SpectralDecomposition::new(Arc::new(Blocks::contiguous(d.clone())?), energies.clone())?
                }
            };
            match energy_scale {
                Some(c) => s.with_energy_scale(*c)?,
                None => s,
            }
        }
        ModelSpec::RandomHermitian { dim, scale } => {
            ensure!(
                *dim >= 1 && *dim <= MAX_DENSE_DIM,
                "dim must lie in 1..={MAX_DENSE_DIM}"
            );
            ensure!(*scale > 0.0 && scale.is_finite(), "scale must be > 0");
            let h = random_hermitian(rng, *dim) * C64::new(*scale, 0.0);
            SpectralDecomposition::from_hermitian(&h, DEFAULT_DEG_TOL)?
        }
    };
    Ok(out)
}

/// A state together with its vector when it is pure by construction.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub rho: DensityMatrix,
    pub pure: Option<DVector<C64>>,
}

impl Prepared {
    fn pure(v: DVector<C64>) -> Result<Self> {
        Ok(Self {
            rho: DensityMatrix::from_pure(&v)?,
            pure: Some(v),
        })
    }

    fn mixed(rho: DensityMatrix) -> Self {
        Self { rho, pure: None }
    }
}

pub fn state(spec: &StateSpec, sd: &SpectralDecomposition, rng: &mut ChaCha8Rng) -> Result<Prepared> {
    let dim = sd.dim();
    ensure!(
        dim <= MAX_DENSE_DIM,
        "state dimension {dim} exceeds the dense limit {MAX_DENSE_DIM}; use a smaller model"
    );
    let count = sd.count();
    let per_level = |what: &str, n: usize| -> Result<()> {
        ensure!(n == count, "{what} has {n} entries but the model has {count} levels");
        Ok(())
    };
    match spec {
        StateSpec::Extremes { sign } => Prepared::pure(states::pure_extremes(sd, *sign)?),
        StateSpec::Eigen { level } => {
            ensure!(*level < count, "level {level} out of range (model has {count} levels)");
            Prepared::pure(sd.level_vector(*level))
        }
        StateSpec::Populations { probs } => {
            per_level("probs", probs.len())?;
            ensure!(probs.iter().all(|p| *p >= 0.0), "probs must be >= 0");
            let total: f64 = probs.iter().sum();
            ensure!((total - 1.0).abs() <= 1e-9, "probs sum to {total}, expected 1");
            let blocks = sd.blocks();
            let mut m = DMatrix::<C64>::zeros(dim, dim);
            for (k, p) in probs.iter().enumerate() {
                if *p > 0.0 {
                    m += blocks.projector_matrix(k) * C64::new(p / blocks.rank(k) as f64, 0.0);
                }
            }
            Ok(Prepared::mixed(DensityMatrix::new(m)?))
        }
        StateSpec::Superposition { weights, phases } => {
            per_level("weights", weights.len())?;
            ensure!(weights.iter().all(|w| *w >= 0.0), "weights must be >= 0");
            let total: f64 = weights.iter().sum();
            ensure!(total > 0.0, "weights must not all be zero");
            if let Some(ph) = phases {
                per_level("phases", ph.len())?;
            }
            let mut v = DVector::<C64>::zeros(dim);
            for (k, w) in weights.iter().enumerate() {
                if *w > 0.0 {
                    let phi = phases.as_ref().map_or(0.0, |p| p[k]);
                    v += sd.level_vector(k) * C64::from_polar((w / total).sqrt(), phi);
                }
            }
            Prepared::pure(v)
        }
        StateSpec::RandomPure => Prepared::pure(random_pure_state(rng, dim)),
        StateSpec::RandomMixed => Ok(Prepared::mixed(random_density_matrix(rng, dim))),
        StateSpec::MaximallyMixed => Ok(Prepared::mixed(DensityMatrix::maximally_mixed(dim)?)),
    }
}

/// `λ` from whichever key is set, relative keys measured against `span`.
pub fn lambda(params: &Params, span: Option<f64>) -> Result<Option<f64>> {
    let unit = || -> Result<f64> {
        let e = span.context("relative lambda needs a model")?;
        ensure!(e > 0.0, "relative lambda needs a spectrum with span > 0");
        Ok(e / std::f64::consts::PI)
    };
    Ok(if let Some(l) = params.lambda {
        Some(l)
    } else if let Some(r) = params.lambda_rel {
        Some(r * unit()?.powi(2))
    } else if let Some(r) = params.sqrt_lambda_rel {
        Some((r * unit()?).powi(2))
    } else {
        None
    })
}

pub fn require_lambda(params: &Params, span: Option<f64>) -> Result<f64> {
    match lambda(params, span)? {
        Some(l) => Ok(l),
        None => bail!("lambda is not set (give lambda, lambda_rel or sqrt_lambda_rel)"),
    }
}

/// The explicit `times`, or `t_count` evenly spaced points on
/// `[t_start, t_stop]`.
pub fn times(params: &Params) -> Vec<f64> {
    if let Some(t) = &params.times {
        return t.clone();
    }
    let a = params.t_start.unwrap_or(0.0);
    let b = params.t_stop.unwrap_or(DEFAULT_T_STOP);
    let n = params.t_count.unwrap_or(DEFAULT_T_COUNT);
    if n == 1 {
        return vec![a];
    }
    let step = (b - a) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { b } else { a + step * i as f64 })
        .collect()
}

/// Draw `scale·X` with `X` standard normal or uniform on `[−1, 1]`.
pub fn draw(rng: &mut ChaCha8Rng, normal: bool, scale: f64) -> f64 {
    if normal {
        scale * rng.sample::<f64, _>(rand_distr::StandardNormal)
    } else {
        scale * rng.random_range(-1.0..=1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1)
    }

    #[test]
    fn grid_endpoints_are_exact() {
        let p = Params {
            t_start: Some(1.0),
            t_stop: Some(2.0),
            t_count: Some(4),
            ..Params::default()
        };
        let t = times(&p);
        assert_eq!(t.len(), 4);
        assert_eq!(t[0], 1.0);
        assert_eq!(t[3], 2.0);
    }

    #[test]
    fn relative_lambda_uses_span() {
        let sd = model(&ModelSpec::Spin { n_spins: 2, omega: 1.0 }, &mut rng()).unwrap();
        let e = sd.span();
        let p = Params {
            sqrt_lambda_rel: Some(0.7),
            ..Params::default()
        };
        let l = require_lambda(&p, Some(e)).unwrap();
        assert!((l.sqrt() - 0.7 * e / std::f64::consts::PI).abs() < 1e-14);
        assert!(require_lambda(&Params::default(), Some(e)).is_err());
    }

    #[test]
    fn populations_state_is_diagonal_in_levels() {
        let sd = model(&ModelSpec::Spin { n_spins: 2, omega: 1.0 }, &mut rng()).unwrap();
        let st = state(
            &StateSpec::Populations {
                probs: vec![0.5, 0.25, 0.25],
            },
            &sd,
            &mut rng(),
        )
        .unwrap();
        let pops = states::level_populations(&st.rho, &sd).unwrap();
        assert!((pops[1] - 0.25).abs() < 1e-12);
        assert!(st.pure.is_none());
        assert!(state(&StateSpec::Populations { probs: vec![0.5, 0.5] }, &sd, &mut rng()).is_err());
    }

    #[test]
    fn superposition_is_normalized() {
        let sd = model(
            &ModelSpec::Levels {
                energies: vec![0.0, 1.0, 3.0],
                degeneracies: None,
                energy_scale: None,
            },
            &mut rng(),
        )
        .unwrap();
        let st = state(
            &StateSpec::Superposition {
                weights: vec![2.0, 0.0, 2.0],
                phases: Some(vec![0.0, 0.0, 1.0]),
            },
            &sd,
            &mut rng(),
        )
        .unwrap();
        assert!((st.pure.unwrap().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn large_dense_state_is_refused() {
        let sd = model(
            &ModelSpec::Spin {
                n_spins: 12,
                omega: 1.0,
            },
            &mut rng(),
        )
        .unwrap();
        let err = state(&StateSpec::MaximallyMixed, &sd, &mut rng()).unwrap_err();
        assert!(err.to_string().contains("dense limit"));
    }
}
