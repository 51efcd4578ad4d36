//! Exact quantum dynamics of the central spin model for small baths.
//!
//! `H = Σ_i J_i S_0·S_i − h·S_0` acts matrix-free on the `2^(N+1)`
//! computational basis states. Bit 0 of a state index is the central spin,
//! bit `i` bath spin `i`; a set bit means spin up.
//!
//! The infinite-temperature autocorrelation
//! `S(t) = Tr(S_0^z(t) S_0^z)/d` is obtained from a sum over all basis states
//! (full trace) or from random vectors (stochastic trace).

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::classical::sample_rng;
use crate::couplings::CouplingSet;
use crate::error::{param, Error, Result};
use crate::propagate::{sample_times, LinearFlow, Rk4Sampler, TimeSeries};
use crate::Vec3;

pub const DEFAULT_MAX_BATH: usize = 20;

/// Largest dimension for which the full trace is the default.
pub const FULL_TRACE_MAX_DIM: usize = 1 << 14;

#[derive(Clone, Debug)]
pub struct FullHilbertOperator {
    pub n_spins: usize,
    couplings: Vec<f64>,
    h: Vec3,
    diag: Vec<f64>,
}

pub fn build_full_hamiltonian(cs: &CouplingSet, h: Vec3) -> Result<FullHilbertOperator> {
    build_full_hamiltonian_with_cap(cs.couplings()?, h, DEFAULT_MAX_BATH)
}

pub fn build_full_hamiltonian_with_cap(
    couplings: &[f64],
    h: Vec3,
    max_bath: usize,
) -> Result<FullHilbertOperator> {
    let n = couplings.len();
    if n == 0 {
        return Err(param("n_bath", "at least one bath spin is required"));
    }
    if n > max_bath {
        return Err(Error::Capacity {
            what: "exact bath spins",
            required: n as u128,
            limit: max_bath as u128,
        });
    }
    let dim = 1usize << (n + 1);
    let diag = (0..dim)
        .into_par_iter()
        .map(|x| {
            let s0 = spin_z(x, 0);
            let mut e = -h[2] * s0;
            for (i, &j) in couplings.iter().enumerate() {
                e += j * s0 * spin_z(x, i + 1);
            }
            e
        })
        .collect();
    Ok(FullHilbertOperator {
        n_spins: n + 1,
        couplings: couplings.to_vec(),
        h,
        diag,
    })
}

#[inline]
fn spin_z(x: usize, bit: usize) -> f64 {
    if (x >> bit) & 1 == 1 {
        0.5
    } else {
        -0.5
    }
}

impl FullHilbertOperator {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// `⟨x ^ 1|H|x⟩` from the transverse field on the central spin.
    #[inline]
    fn field_element(&self, x: usize) -> Complex64 {
        let (hx, hy) = (self.h[0], self.h[1]);
        if x & 1 == 1 {
            // ⟨↓|H|↑⟩
            Complex64::new(-hx / 2.0, -hy / 2.0)
        } else {
            // ⟨↑|H|↓⟩
            Complex64::new(-hx / 2.0, hy / 2.0)
        }
    }

    /// `y = c·H x` on `block` interleaved vectors (`x[state·block + b]`).
    pub fn apply_block(&self, x: &[Complex64], y: &mut [Complex64], block: usize, c: Complex64) {
        let dim = self.dim();
        assert_eq!(x.len(), dim * block);
        assert_eq!(y.len(), dim * block);
        let has_field = self.h[0] != 0.0 || self.h[1] != 0.0;
        let rows_per_chunk = (4096 / block).max(1);
        y.par_chunks_mut(rows_per_chunk * block)
            .enumerate()
            .for_each(|(ci, out)| {
                let base = ci * rows_per_chunk;
                for (ri, yr) in out.chunks_mut(block).enumerate() {
                    let s = base + ri;
                    let d = self.diag[s];
                    let xs = &x[s * block..(s + 1) * block];
                    for (o, v) in yr.iter_mut().zip(xs) {
                        *o = v * d;
                    }
                    let b0 = s & 1;
                    for (i, &j) in self.couplings.iter().enumerate() {
                        if (s >> (i + 1)) & 1 != b0 {
                            let t = s ^ (1 | (1 << (i + 1)));
                            let xt = &x[t * block..(t + 1) * block];
                            let w = 0.5 * j;
                            for (o, v) in yr.iter_mut().zip(xt) {
                                *o += v * w;
                            }
                        }
                    }
                    if has_field {
                        let t = s ^ 1;
                        let f = self.field_element(t);
                        let xt = &x[t * block..(t + 1) * block];
                        for (o, v) in yr.iter_mut().zip(xt) {
                            *o += f * v;
                        }
                    }
                    for o in yr.iter_mut() {
                        *o *= c;
                    }
                }
            });
    }

    /// Dense matrix for small systems.
    pub fn to_dense(&self) -> nalgebra::DMatrix<Complex64> {
        let d = self.dim();
        let mut m = nalgebra::DMatrix::zeros(d, d);
        let mut e = vec![Complex64::new(0.0, 0.0); d];
        let mut col = vec![Complex64::new(0.0, 0.0); d];
        for k in 0..d {
            e[k] = Complex64::new(1.0, 0.0);
            self.apply_block(&e, &mut col, 1, Complex64::new(1.0, 0.0));
            for r in 0..d {
                m[(r, k)] = col[r];
            }
            e[k] = Complex64::new(0.0, 0.0);
        }
        m
    }
}

/// `dψ/dt = −iHψ` on a block of vectors.
struct BlockFlow<'a> {
    op: &'a FullHilbertOperator,
    block: usize,
}

impl LinearFlow for BlockFlow<'_> {
    type Scalar = Complex64;
    fn dim(&self) -> usize {
        self.op.dim() * self.block
    }
    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        self.op
            .apply_block(x, y, self.block, Complex64::new(0.0, -1.0));
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimator {
    /// `⟨φ|S_0^z|χ⟩` with `φ = U r`, `χ = U S_0^z r` for normalized
    /// complex Gaussian `r`.
    Pair,
    /// `½⟨ψ|S_0^z|ψ⟩` with `ψ = U r` and `r` a normalized complex Gaussian
    /// vector in the central-spin-up subspace; uses `Tr(S_0^z(t)) = 0`.
    Polarized,
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Estimator::Pair => "pair",
            Estimator::Polarized => "polarized",
        })
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "pair" => Ok(Estimator::Pair),
            "polarized" => Ok(Estimator::Polarized),
            other => Err(param(
                "estimator",
                format!("expected pair|polarized, got `{other}`"),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TraceMode {
    Full,
    Stochastic {
        vectors: usize,
        seed: u64,
        estimator: Estimator,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceConfig {
    pub dt: f64,
    pub t_max: f64,
    pub stride: usize,
    pub mode: TraceMode,
    /// Vectors propagated together.
    pub block: usize,
}

impl TraceConfig {
    /// Full trace for small dimensions, 100 pair vectors otherwise.
    pub fn default_for(dim: usize) -> Self {
        Self {
            dt: 0.01,
            t_max: 50.0,
            stride: 10,
            mode: if dim <= FULL_TRACE_MAX_DIM {
                TraceMode::Full
            } else {
                TraceMode::Stochastic {
                    vectors: 100,
                    seed: 1,
                    estimator: Estimator::Pair,
                }
            },
            block: 16,
        }
    }
}

/// One propagated vector and how its samples enter the average.
enum Slot {
    /// Basis state `k` of the full trace.
    Basis(usize),
    /// Random vector `k` together with `S_0^z` applied to it.
    Pair(usize),
    Polarized(usize),
}

fn random_vector(dim: usize, seed: u64, stream: u64, up_only: bool) -> Vec<Complex64> {
    let mut rng = sample_rng(seed, stream);
    let mut v: Vec<Complex64> = (0..dim)
        .map(|x| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            if up_only && x & 1 == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(re, im)
            }
        })
        .collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|z| *z /= n);
    v
}

/// `⟨a|S_0^z|b⟩` for column `ia`, `ib` of an interleaved block.
fn s0z_element(psi: &[Complex64], block: usize, ia: usize, ib: usize) -> Complex64 {
    psi.par_chunks(block * 1024)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (ri, row) in chunk.chunks(block).enumerate() {
                let x = ci * 1024 + ri;
                acc += row[ia].conj() * row[ib] * spin_z(x, 0);
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum()
}

/// Infinite-temperature autocorrelation of `S_0^z`.
pub fn infinite_t_autocorrelation(
    op: &FullHilbertOperator,
    cfg: &TraceConfig,
) -> Result<TimeSeries> {
    let dim = op.dim();
    let times = sample_times(cfg.dt, cfg.t_max, cfg.stride)?;
    let nt = times.len();
    if cfg.block == 0 {
        return Err(param("block", "must be at least 1"));
    }

    let slots: Vec<Slot>;
    let n_samples: usize;
    let weight: f64;
    match cfg.mode {
        TraceMode::Full => {
            slots = (0..dim).map(Slot::Basis).collect();
            n_samples = dim;
            weight = 1.0 / dim as f64;
        }
        TraceMode::Stochastic {
            vectors, estimator, ..
        } => {
            if vectors == 0 {
                return Err(param("vectors", "must be at least 1"));
            }
            n_samples = vectors;
            weight = 1.0;
            slots = match estimator {
                Estimator::Pair => (0..vectors).map(Slot::Pair).collect(),
                Estimator::Polarized => (0..vectors).map(Slot::Polarized).collect(),
            };
        }
    }
    let columns: usize = slots
        .iter()
        .map(|s| if matches!(s, Slot::Pair(_)) { 2 } else { 1 })
        .sum();
    let block = cfg
        .block
        .min(columns)
        .max(if matches!(slots[0], Slot::Pair(_)) {
            2
        } else {
            1
        });
    let block = if matches!(slots[0], Slot::Pair(_)) {
        block & !1
    } else {
        block
    };

    // per-sample estimates, [sample][time]
    let mut est = vec![vec![Complex64::new(0.0, 0.0); nt]; n_samples];
    let mut drift = vec![0.0f64; nt];

    let mut start = 0;
    let mut sample_base = 0;
    while start < slots.len() {
        // fill one block of columns
        let mut batch: Vec<&Slot> = Vec::new();
        let mut used = 0;
        while start + batch.len() < slots.len() {
            let s = &slots[start + batch.len()];
            let need = if matches!(s, Slot::Pair(_)) { 2 } else { 1 };
            if used + need > block {
                break;
            }
            used += need;
            batch.push(s);
        }
        let width = used;
        let mut psi0 = vec![Complex64::new(0.0, 0.0); dim * width];
        let mut col = 0;
        let mut layout = Vec::with_capacity(batch.len());
        for s in &batch {
            match (s, cfg.mode) {
                (Slot::Basis(k), _) => {
                    psi0[k * width + col] = Complex64::new(1.0, 0.0);
                    layout.push((col, col, spin_z(*k, 0)));
                    col += 1;
                }
                (Slot::Pair(k), TraceMode::Stochastic { seed, .. }) => {
                    let r = random_vector(dim, seed, *k as u64, false);
                    for (x, v) in r.iter().enumerate() {
                        psi0[x * width + col] = *v;
                        psi0[x * width + col + 1] = *v * spin_z(x, 0);
                    }
                    layout.push((col, col + 1, 1.0));
                    col += 2;
                }
                (Slot::Polarized(k), TraceMode::Stochastic { seed, .. }) => {
                    let r = random_vector(dim, seed, *k as u64, true);
                    for (x, v) in r.iter().enumerate() {
                        psi0[x * width + col] = *v;
                    }
                    layout.push((col, col, 0.5));
                    col += 1;
                }
                _ => unreachable!(),
            }
        }
        let norms0: Vec<f64> = (0..width).map(|c| column_norm(&psi0, width, c)).collect();
        let flow = BlockFlow { op, block: width };
        let mut sampler = Rk4Sampler::new(&flow, psi0, cfg.dt, cfg.stride)?;
        for k in 0..nt {
            if k > 0 {
                sampler.advance()?;
            }
            let psi = sampler.state();
            for (i, &(a, b, w)) in layout.iter().enumerate() {
                est[sample_base + i][k] = s0z_element(psi, width, a, b) * w;
            }
            for (c, n0) in norms0.iter().enumerate() {
                if *n0 > 0.0 {
                    let d = (column_norm(psi, width, c) / n0 - 1.0).abs();
                    drift[k] = drift[k].max(d);
                }
            }
        }
        log::debug!(
            "exact: {} of {} columns done",
            start + batch.len(),
            slots.len()
        );
        start += batch.len();
        sample_base += batch.len();
    }

    let mut out = TimeSeries::from_fn(times, |_| 0.0);
    out.norm_drift = drift;
    match cfg.mode {
        TraceMode::Full => {
            for k in 0..nt {
                out.values[k] = est.iter().map(|e| e[k]).sum::<Complex64>() * weight;
            }
            out.stderr = Some(vec![0.0; nt]);
        }
        TraceMode::Stochastic { .. } => {
            let n = n_samples as f64;
            let mut se = vec![0.0; nt];
            for k in 0..nt {
                let mean = est.iter().map(|e| e[k]).sum::<Complex64>() / n;
                out.values[k] = mean;
                if n_samples > 1 {
                    let var = est.iter().map(|e| (e[k] - mean).norm_sqr()).sum::<f64>() / (n - 1.0);
                    se[k] = (var / n).sqrt();
                }
            }
            out.stderr = Some(se);
        }
    }
    Ok(out)
}

fn column_norm(psi: &[Complex64], width: usize, c: usize) -> f64 {
    psi.chunks(width)
        .map(|row| row[c].norm_sqr())
        .sum::<f64>()
        .sqrt()
}
