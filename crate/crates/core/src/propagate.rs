//! Fourth-order Runge-Kutta propagation of linear flows `dψ/dt = Gψ` and
//! extraction of the autocorrelation `S(t) = ¼⟨⟨3;0|ψ(t)⟩⟩`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{param, Error, Result};
use crate::heff::{assemble_generator, step_stiffness, HamiltonianParams};
use crate::opbasis::Basis;
use crate::sparse::{Csr, SparseOperator};

/// Scalar field of a propagated vector.
pub trait Amplitude:
    Copy + Send + Sync + Default + std::ops::Add<Output = Self> + std::ops::Mul<f64, Output = Self>
{
    fn norm_sqr(self) -> f64;
    fn is_finite(self) -> bool;
    fn to_complex(self) -> Complex64;
}

impl Amplitude for f64 {
    #[inline]
    fn norm_sqr(self) -> f64 {
        self * self
    }
    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    #[inline]
    fn to_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
}

impl Amplitude for Complex64 {
    #[inline]
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
    #[inline]
    fn is_finite(self) -> bool {
        Complex64::is_finite(self)
    }
    #[inline]
    fn to_complex(self) -> Complex64 {
        self
    }
}

/// Right-hand side of a linear ODE.
pub trait LinearFlow: Sync {
    type Scalar: Amplitude;
    fn dim(&self) -> usize;
    /// `y = G x`
    fn apply(&self, x: &[Self::Scalar], y: &mut [Self::Scalar]);
}

/// Real generator `G` applied directly.
impl LinearFlow for Csr<f64> {
    type Scalar = f64;
    fn dim(&self) -> usize {
        Csr::dim(self)
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }
}

/// `dψ/dt = -iHψ` for a complex operator.
pub struct Schrodinger<'a>(pub &'a SparseOperator);

impl LinearFlow for Schrodinger<'_> {
    type Scalar = Complex64;
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        self.0.matvec(x, y);
        y.par_iter_mut()
            .for_each(|v| *v = Complex64::new(v.im, -v.re));
    }
}

/// Complex amplitude vector over a basis.
#[derive(Clone, Debug, PartialEq)]
pub struct KetVector {
    pub amplitudes: Vec<Complex64>,
}

impl KetVector {
    /// Unit vector on basis state `id`.
    pub fn basis_state(dim: usize, id: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        amplitudes[id] = Complex64::new(1.0, 0.0);
        Self { amplitudes }
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amplitudes)
    }
}

pub fn norm<T: Amplitude>(v: &[T]) -> f64 {
    v.par_iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

const PAR_CHUNK: usize = 1 << 14;

/// Low-storage RK4 integrator that yields the state every `stride` steps.
pub struct Rk4Sampler<'a, F: LinearFlow> {
    flow: &'a F,
    psi: Vec<F::Scalar>,
    acc: Vec<F::Scalar>,
    tmp: Vec<F::Scalar>,
    k: Vec<F::Scalar>,
    dt: f64,
    stride: usize,
    step: usize,
}

impl<'a, F: LinearFlow> Rk4Sampler<'a, F> {
    pub fn new(flow: &'a F, psi0: Vec<F::Scalar>, dt: f64, stride: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(param("dt", format!("must be positive, got {dt}")));
        }
        if stride == 0 {
            return Err(param("stride", "must be at least 1"));
        }
        let n = flow.dim();
        if psi0.len() != n {
            return Err(param(
                "psi0",
                format!("length {} differs from dimension {n}", psi0.len()),
            ));
        }
        Ok(Self {
            flow,
            psi: psi0,
            acc: vec![F::Scalar::default(); n],
            tmp: vec![F::Scalar::default(); n],
            k: vec![F::Scalar::default(); n],
            dt,
            stride,
            step: 0,
        })
    }

    pub fn state(&self) -> &[F::Scalar] {
        &self.psi
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn steps(&self) -> usize {
        self.step
    }

    fn rk4_step(&mut self) {
        let dt = self.dt;
        let (psi, acc, tmp, k) = (&mut self.psi, &mut self.acc, &mut self.tmp, &mut self.k);
        self.flow.apply(psi, k);
        zip4(acc, tmp, psi, k, |a, t, p, k| {
            *a = p + k * (dt / 6.0);
            *t = p + k * (dt / 2.0);
        });
        self.flow.apply(tmp, k);
        zip4(acc, tmp, psi, k, |a, t, p, k| {
            *a = *a + k * (dt / 3.0);
            *t = p + k * (dt / 2.0);
        });
        self.flow.apply(tmp, k);
        zip4(acc, tmp, psi, k, |a, t, p, k| {
            *a = *a + k * (dt / 3.0);
            *t = p + k * dt;
        });
        self.flow.apply(tmp, k);
        psi.par_chunks_mut(PAR_CHUNK)
            .zip(acc.par_chunks(PAR_CHUNK))
            .zip(k.par_chunks(PAR_CHUNK))
            .for_each(|((p, a), k)| {
                for i in 0..p.len() {
                    p[i] = a[i] + k[i] * (dt / 6.0);
                }
            });
    }

    /// Advances by `stride` steps and checks the state for NaN/Inf.
    pub fn advance(&mut self) -> Result<()> {
        for _ in 0..self.stride {
            self.rk4_step();
            self.step += 1;
        }
        if !self.psi.par_iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite { step: self.step });
        }
        Ok(())
    }
}

fn zip4<T: Amplitude>(
    acc: &mut [T],
    tmp: &mut [T],
    psi: &[T],
    k: &[T],
    f: impl Fn(&mut T, &mut T, T, T) + Sync,
) {
    acc.par_chunks_mut(PAR_CHUNK)
        .zip(tmp.par_chunks_mut(PAR_CHUNK))
        .zip(psi.par_chunks(PAR_CHUNK))
        .zip(k.par_chunks(PAR_CHUNK))
        .for_each(|(((a, t), p), k)| {
            for i in 0..a.len() {
                f(&mut a[i], &mut t[i], p[i], k[i]);
            }
        });
}

/// Sampled autocorrelation with diagnostics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub values: Vec<Complex64>,
    pub norm_drift: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
    /// Ordered `key=value` pairs echoed into output files.
    pub metadata: Vec<(String, String)>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn real(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn push_meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.push((key.to_string(), value.to_string()));
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Real series from a function of time on the grid `k·spacing`.
    pub fn from_fn(times: Vec<f64>, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: times.iter().map(|&t| Complex64::new(f(t), 0.0)).collect(),
            norm_drift: vec![0.0; times.len()],
            times,
            stderr: None,
            metadata: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if self.values.len() != n || self.norm_drift.len() != n {
            return Err(Error::Internal(
                "time series columns differ in length".into(),
            ));
        }
        if self.stderr.as_ref().is_some_and(|s| s.len() != n) {
            return Err(Error::Internal("stderr column length differs".into()));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Internal("times are not strictly increasing".into()));
        }
        Ok(())
    }
}

/// Sample times `k·stride·dt` up to `t_max` (inclusive within rounding).
pub fn sample_times(dt: f64, t_max: f64, stride: usize) -> Result<Vec<f64>> {
    if !(t_max >= 0.0) || !t_max.is_finite() {
        return Err(param("t_max", format!("must be non-negative, got {t_max}")));
    }
    if !(dt > 0.0) || stride == 0 {
        return Err(param("dt", "step and stride must be positive"));
    }
    let spacing = dt * stride as f64;
    let n = (t_max / spacing + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| (k * stride) as f64 * dt).collect())
}

/// Propagates `psi0` and records `¼ ψ_seed(t)` with the norm drift.
pub fn autocorrelation<F: LinearFlow>(
    flow: &F,
    psi0: Vec<F::Scalar>,
    seed: usize,
    dt: f64,
    t_max: f64,
    stride: usize,
) -> Result<TimeSeries> {
    let times = sample_times(dt, t_max, stride)?;
    if seed >= psi0.len() {
        return Err(param("seed", "index outside the state vector"));
    }
    let n0 = norm(&psi0);
    let mut sampler = Rk4Sampler::new(flow, psi0, dt, stride)?;
    let mut out = TimeSeries {
        times: times.clone(),
        ..Default::default()
    };
    for (k, _) in times.iter().enumerate() {
        if k > 0 {
            sampler.advance()?;
        }
        let psi = sampler.state();
        out.values.push(psi[seed].to_complex() * 0.25);
        out.norm_drift.push((norm(psi) / n0 - 1.0).abs());
    }
    Ok(out)
}

/// Propagates the seed `|3;0⟩` under `H_eff` using the real generator.
pub fn run_ieom(
    params: &HamiltonianParams,
    basis: &Basis,
    dt: f64,
    t_max: f64,
    stride: usize,
) -> Result<TimeSeries> {
    let stiffness = step_stiffness(params, dt);
    if stiffness > 0.5 {
        log::warn!(
            "dt={dt} may be too large for n_max(1)={}: stiffness {stiffness:.3} > 0.5",
            params.trunc.n_max[0]
        );
    }
    let seed = basis.seed_state()?;
    let g = assemble_generator(params, basis)?;
    log::info!(
        "basis {} states, generator {} nonzeros ({:.1} MiB)",
        basis.len(),
        g.nnz(),
        g.memory_bytes() as f64 / (1 << 20) as f64
    );
    let mut psi0 = vec![0.0; basis.len()];
    psi0[seed] = 1.0;
    autocorrelation(&g, psi0, seed, dt, t_max, stride)
}

/// First sample time where `|series − reference| > eps` (real parts);
/// `None` if the curves stay within `eps` up to the last common sample.
pub fn detect_revival(
    series: &TimeSeries,
    reference: &TimeSeries,
    eps: f64,
) -> Result<Option<f64>> {
    if series.len() != reference.len()
        || series
            .times
            .iter()
            .zip(&reference.times)
            .any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + a.abs()))
    {
        return Err(param("reference", "time grids differ"));
    }
    Ok(series
        .times
        .iter()
        .zip(series.values.iter().zip(&reference.values))
        .find(|(_, (a, b))| (a.re - b.re).abs() > eps)
        .map(|(&t, _)| t))
}
