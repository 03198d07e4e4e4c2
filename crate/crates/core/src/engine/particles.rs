//! Euler-Maruyama particles with counter-based random streams.
//!
//! Particle `i` draws from the ChaCha stream `i` of the run seed. Its initial
//! atom uses the first 64-bit draw, and step `k` starts at the 32-bit word
//! `2 + k * words_per_step`, so every draw is a function of `(seed, i, k)`
//! alone and the result does not depend on scheduling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_frozen, EngineKind, SimulationOutput, TimeGrid};
use crate::coeffs::validate::{is_degenerate, min_eigenvalue};
use crate::coeffs::CoefficientSpec;
use crate::error::{Error, Result};
use crate::measure::{EmpiricalMeasure, Measure, MeasureFlow};

/// Particles per work item; fixed so chunking never depends on thread count.
const CHUNK: usize = 1024;

/// Positions of `n` particles in R^d at one time index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleEnsemble {
    pub dim: usize,
    /// `n x d`, row-major.
    pub positions: Vec<f64>,
    pub seed: u64,
    pub time_index: usize,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn to_measure(&self) -> EmpiricalMeasure {
        EmpiricalMeasure::from_flat(self.dim, self.positions.clone(), None).expect("finite positions")
    }
}

fn stream(seed: u64, particle: usize, word: u128) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(particle as u64);
    rng.set_word_pos(word);
    rng
}

/// Uniform on (0, 1] with 53 random bits.
fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Box-Muller pairs; always consumes `2 * ceil(d / 2)` 64-bit draws.
fn normals(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for pair in out.chunks_mut(2) {
        let r = (-2.0 * open_unit(rng).ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * open_unit(rng)).sin_cos();
        pair[0] = r * c;
        if pair.len() == 2 {
            pair[1] = r * s;
        }
    }
}

fn words_per_step(d: usize) -> u128 {
    // Two 32-bit words per 64-bit draw.
    4 * d.div_ceil(2) as u128
}

fn sample_initial(init: &EmpiricalMeasure, n: usize, seed: u64) -> Vec<f64> {
    let d = init.dim();
    let mut cdf = Vec::with_capacity(init.len());
    let mut acc = 0.0;
    for &w in init.weights() {
        acc += w;
        cdf.push(acc);
    }
    let total = acc;
    let mut out = vec![0.0; n * d];
    out.par_chunks_mut(d).enumerate().for_each(|(i, slot)| {
        let idx = if init.len() == 1 {
            0
        } else {
            let u = (stream(seed, i, 0).next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64) * total;
            cdf.partition_point(|&c| c <= u).min(init.len() - 1)
        };
        slot.copy_from_slice(init.point(idx));
    });
    out
}

/// Simulates `n_particles` copies of the linearized equation driven by the
/// frozen flow (left-constant in time) and returns their empirical marginals.
pub fn simulate_particles(
    spec: &CoefficientSpec,
    frozen: &MeasureFlow,
    init: &EmpiricalMeasure,
    grid: &TimeGrid,
    n_particles: usize,
    seed: u64,
) -> Result<SimulationOutput> {
    let d = spec.dim();
    if init.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: init.dim() });
    }
    if n_particles == 0 {
        return Err(Error::param("need at least one particle"));
    }
    check_frozen(spec, frozen, grid)?;
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let wps = words_per_step(d);
    let mut x = sample_initial(init, n_particles, seed);
    let mut measures = Vec::with_capacity(grid.steps() + 1);
    measures.push(Measure::Empirical(EmpiricalMeasure::from_flat(d, x.clone(), None)?));
    for k in 0..grid.steps() {
        let t = grid.node(k);
        let mu = frozen.at(t).to_empirical();
        let word = 2 + k as u128 * wps;
        x.par_chunks_mut(CHUNK * d)
            .enumerate()
            .try_for_each(|(c, chunk)| -> Result<()> {
                let g = spec.generator_coefficients(grid.offset() + t, chunk, &mu)?;
                let mut xi = vec![0.0; d];
                for (p, pos) in chunk.chunks_exact_mut(d).enumerate() {
                    let c_p = g.cmatrix_at(p);
                    let lambda = min_eigenvalue(c_p, d);
                    if is_degenerate(lambda, c_p, d) {
                        return Err(Error::DegenerateDiffusion(format!(
                            "eigenvalue {lambda:e} of C at t = {t}, x = {pos:?}"
                        )));
                    }
                    normals(&mut stream(seed, c * CHUNK + p, word), &mut xi);
                    let b = g.drift_at(p);
                    let s = g.sigma_at(p);
                    for i in 0..d {
                        let noise: f64 = (0..d).map(|j| s[i * d + j] * xi[j]).sum();
                        pos[i] += b[i] * dt + noise * sqrt_dt;
                    }
                }
                Ok(())
            })?;
        if let Some(bad) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!("particle {} left the reals at step {k}", bad / d)));
        }
        measures.push(Measure::Empirical(EmpiricalMeasure::from_flat(d, x.clone(), None)?));
    }
    Ok(SimulationOutput {
        flow: MeasureFlow::new(grid.nodes(), measures)?,
        engine: EngineKind::Particle,
        seed: Some(seed),
        renormalization: Vec::new(),
    })
}
