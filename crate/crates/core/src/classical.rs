//! Classical ensemble simulation of the central spin model.
//!
//! Equations of motion: `dS_0/dt = (B − h) × S_0` with the Overhauser field
//! `B = Σ_i J_i S_i`, and `dS_i/dt = J_i S_0 × S_i`. Bath spins start with
//! i.i.d. normal components of variance ¼; the central spin starts at
//! `(0, 0, ½)`, so `S(t) = ½ ⟨S_0^z(t)⟩`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::couplings::CouplingSet;
use crate::error::{param, Error, Result};
use crate::propagate::{sample_times, TimeSeries};
use crate::reference::cross;
use crate::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassicalMode {
    Dynamic,
    /// Bath spins held fixed.
    Frozen,
}

impl std::fmt::Display for ClassicalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClassicalMode::Dynamic => "dynamic",
            ClassicalMode::Frozen => "frozen",
        })
    }
}

impl std::str::FromStr for ClassicalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "dynamic" => Ok(ClassicalMode::Dynamic),
            "frozen" => Ok(ClassicalMode::Frozen),
            other => Err(param(
                "mode",
                format!("expected dynamic|frozen, got `{other}`"),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalState {
    pub s0: Vec3,
    pub bath: Vec<Vec3>,
}

impl ClassicalState {
    pub fn overhauser(&self, couplings: &[f64]) -> Vec3 {
        let mut b = [0.0; 3];
        for (s, &j) in self.bath.iter().zip(couplings) {
            for a in 0..3 {
                b[a] += j * s[a];
            }
        }
        b
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleConfig {
    pub samples: usize,
    pub seed: u64,
    pub dt: f64,
    pub t_max: f64,
    pub stride: usize,
    pub mode: ClassicalMode,
    pub h_central: Vec3,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            samples: 1_000_000,
            seed: 1,
            dt: 0.01,
            t_max: 50.0,
            stride: 10,
            mode: ClassicalMode::Dynamic,
            h_central: [0.0; 3],
        }
    }
}

/// Random stream of one ensemble member; independent of scheduling.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn sample_initial<R: rand::Rng + ?Sized>(
    cs: &CouplingSet,
    rng: &mut R,
) -> Result<ClassicalState> {
    let n = cs.couplings()?.len();
    let normal = Normal::new(0.0, 0.5).map_err(|e| Error::Internal(e.to_string()))?;
    let bath = (0..n)
        .map(|_| [normal.sample(rng), normal.sample(rng), normal.sample(rng)])
        .collect();
    Ok(ClassicalState {
        s0: [0.0, 0.0, 0.5],
        bath,
    })
}

/// Time derivatives of `(S_0, S_1, ..., S_N)`.
pub fn classical_rhs(
    state: &ClassicalState,
    couplings: &[f64],
    h_central: &Vec3,
    mode: ClassicalMode,
) -> ClassicalState {
    let b = state.overhauser(couplings);
    let field = [
        b[0] - h_central[0],
        b[1] - h_central[1],
        b[2] - h_central[2],
    ];
    let bath = match mode {
        ClassicalMode::Frozen => vec![[0.0; 3]; state.bath.len()],
        ClassicalMode::Dynamic => state
            .bath
            .iter()
            .zip(couplings)
            .map(|(s, &j)| {
                let c = cross(&state.s0, s);
                [j * c[0], j * c[1], j * c[2]]
            })
            .collect(),
    };
    ClassicalState {
        s0: cross(&field, &state.s0),
        bath,
    }
}

/// In-place RK4 integrator over the flat layout `[S_0, S_1, ..., S_N]`.
struct Integrator<'a> {
    couplings: &'a [f64],
    h: Vec3,
    /// `B − h`, fixed while the bath is frozen.
    frozen_field: Option<Vec3>,
    y: Vec<Vec3>,
    acc: Vec<Vec3>,
    tmp: Vec<Vec3>,
    k: Vec<Vec3>,
}

impl<'a> Integrator<'a> {
    fn new(state: &ClassicalState, couplings: &'a [f64], h: Vec3, mode: ClassicalMode) -> Self {
        let mut y = Vec::with_capacity(state.bath.len() + 1);
        y.push(state.s0);
        y.extend_from_slice(&state.bath);
        let n = y.len();
        let frozen_field = (mode == ClassicalMode::Frozen).then(|| {
            let b = state.overhauser(couplings);
            [b[0] - h[0], b[1] - h[1], b[2] - h[2]]
        });
        Self {
            couplings,
            h,
            frozen_field,
            y,
            acc: vec![[0.0; 3]; n],
            tmp: vec![[0.0; 3]; n],
            k: vec![[0.0; 3]; n],
        }
    }

    fn rhs(couplings: &[f64], h: &Vec3, y: &[Vec3], out: &mut [Vec3]) {
        let s0 = y[0];
        let mut field = [-h[0], -h[1], -h[2]];
        for (s, &j) in y[1..].iter().zip(couplings) {
            for a in 0..3 {
                field[a] += j * s[a];
            }
        }
        out[0] = cross(&field, &s0);
        for ((o, s), &j) in out[1..].iter_mut().zip(&y[1..]).zip(couplings) {
            let c = cross(&s0, s);
            *o = [j * c[0], j * c[1], j * c[2]];
        }
    }

    fn step(&mut self, dt: f64) {
        if let Some(f) = self.frozen_field {
            let s = self.y[0];
            let k1 = cross(&f, &s);
            let k2 = cross(&f, &axpy(&s, dt / 2.0, &k1));
            let k3 = cross(&f, &axpy(&s, dt / 2.0, &k2));
            let k4 = cross(&f, &axpy(&s, dt, &k3));
            self.y[0] = std::array::from_fn(|a| {
                s[a] + dt / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a])
            });
            return;
        }
        let (c, h) = (self.couplings, self.h);
        let n = self.y.len();
        Self::rhs(c, &h, &self.y, &mut self.k);
        for i in 0..n {
            for a in 0..3 {
                self.acc[i][a] = self.y[i][a] + dt / 6.0 * self.k[i][a];
                self.tmp[i][a] = self.y[i][a] + dt / 2.0 * self.k[i][a];
            }
        }
        Self::rhs(c, &h, &self.tmp, &mut self.k);
        for i in 0..n {
            for a in 0..3 {
                self.acc[i][a] += dt / 3.0 * self.k[i][a];
                self.tmp[i][a] = self.y[i][a] + dt / 2.0 * self.k[i][a];
            }
        }
        Self::rhs(c, &h, &self.tmp, &mut self.k);
        for i in 0..n {
            for a in 0..3 {
                self.acc[i][a] += dt / 3.0 * self.k[i][a];
                self.tmp[i][a] = self.y[i][a] + dt * self.k[i][a];
            }
        }
        Self::rhs(c, &h, &self.tmp, &mut self.k);
        for i in 0..n {
            for a in 0..3 {
                self.y[i][a] = self.acc[i][a] + dt / 6.0 * self.k[i][a];
            }
        }
    }

    fn state(&self) -> ClassicalState {
        ClassicalState {
            s0: self.y[0],
            bath: self.y[1..].to_vec(),
        }
    }
}

#[inline]
fn axpy(x: &Vec3, a: f64, y: &Vec3) -> Vec3 {
    [x[0] + a * y[0], x[1] + a * y[1], x[2] + a * y[2]]
}

/// Integrates one trajectory, returning the state at every sample time.
pub fn trajectory(
    state: &ClassicalState,
    couplings: &[f64],
    h_central: &Vec3,
    mode: ClassicalMode,
    dt: f64,
    n_samples: usize,
    stride: usize,
) -> Vec<ClassicalState> {
    let mut it = Integrator::new(state, couplings, *h_central, mode);
    let mut out = Vec::with_capacity(n_samples);
    out.push(it.state());
    for _ in 1..n_samples {
        for _ in 0..stride {
            it.step(dt);
        }
        out.push(it.state());
    }
    out
}

/// `S_0^z` at each sample time for one ensemble member.
fn central_z_series(
    state: &ClassicalState,
    couplings: &[f64],
    cfg: &EnsembleConfig,
    n_samples: usize,
) -> Vec<f64> {
    let mut it = Integrator::new(state, couplings, cfg.h_central, cfg.mode);
    let mut out = Vec::with_capacity(n_samples);
    out.push(it.y[0][2]);
    for _ in 1..n_samples {
        for _ in 0..cfg.stride {
            it.step(cfg.dt);
        }
        out.push(it.y[0][2]);
    }
    out
}

const SAMPLE_CHUNK: usize = 256;

/// Ensemble average `½⟨S_0^z(t)⟩` with its standard error.
///
/// Samples are reduced in fixed chunks of consecutive indices and the
/// chunk sums are combined in index order, so the result is bitwise
/// independent of the thread count.
pub fn simulate_autocorrelation(cfg: &EnsembleConfig, cs: &CouplingSet) -> Result<TimeSeries> {
    if cfg.samples == 0 {
        return Err(param("samples", "must be at least 1"));
    }
    let couplings = cs.couplings()?;
    let times = sample_times(cfg.dt, cfg.t_max, cfg.stride)?;
    let nt = times.len();
    let n_chunks = cfg.samples.div_ceil(SAMPLE_CHUNK);

    let partial: Vec<(Vec<f64>, Vec<f64>)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut sum = vec![0.0; nt];
            let mut sum2 = vec![0.0; nt];
            let end = ((c + 1) * SAMPLE_CHUNK).min(cfg.samples);
            for i in c * SAMPLE_CHUNK..end {
                let mut rng = sample_rng(cfg.seed, i as u64);
                let init = sample_initial(cs, &mut rng)?;
                let z = central_z_series(&init, couplings, cfg, nt);
                for (k, &v) in z.iter().enumerate() {
                    let x = 0.5 * v;
                    sum[k] += x;
                    sum2[k] += x * x;
                }
            }
            Ok((sum, sum2))
        })
        .collect::<Result<_>>()?;

    let mut sum = vec![0.0; nt];
    let mut sum2 = vec![0.0; nt];
    for (s, s2) in &partial {
        for k in 0..nt {
            sum[k] += s[k];
            sum2[k] += s2[k];
        }
    }
    let n = cfg.samples as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let stderr: Vec<f64> = sum2
        .iter()
        .zip(&mean)
        .map(|(s2, m)| {
            if cfg.samples < 2 {
                return 0.0;
            }
            let var = ((s2 - n * m * m) / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        })
        .collect();

    let mut out = TimeSeries::from_fn(times, |_| 0.0);
    for (v, m) in out.values.iter_mut().zip(&mean) {
        v.re = *m;
    }
    out.stderr = Some(stderr);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::couplings::{build_coupling_set, BathSize};
    use crate::reference::{dot, merkulov_rotation, s_frozen};

    fn norm(v: &Vec3) -> f64 {
        dot(v, v).sqrt()
    }

    #[test]
    fn initial_distribution() {
        let cs = build_coupling_set(1.0 / 18.0, BathSize::Finite(18)).unwrap();
        let j = cs.couplings().unwrap();
        let n = 100_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for i in 0..n {
            let st = sample_initial(&cs, &mut sample_rng(5, i)).unwrap();
            assert_eq!(st.s0, [0.0, 0.0, 0.5]);
            let bz = st.overhauser(j)[2];
            s += bz * bz;
            s2 += bz.powi(4);
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - 0.25).abs() < 3.0 * se, "{mean} ± {se}");

        let a = sample_initial(&cs, &mut sample_rng(9, 3)).unwrap();
        let b = sample_initial(&cs, &mut sample_rng(9, 3)).unwrap();
        assert_eq!(a, b);
        let inf = build_coupling_set(0.1, BathSize::Infinite).unwrap();
        assert!(sample_initial(&inf, &mut sample_rng(1, 0)).is_err());
    }

    #[test]
    fn rhs_examples() {
        let st = ClassicalState {
            s0: [0.1, 0.2, 0.5],
            bath: vec![[0.3, -0.2, 0.1], [0.0, 0.4, -0.3]],
        };
        let j = [0.8, 0.6];
        let b = st.overhauser(&j);
        let d = classical_rhs(&st, &j, &b, ClassicalMode::Dynamic);
        assert_eq!(d.s0, [0.0; 3]);
        let f = classical_rhs(&st, &j, &[0.0; 3], ClassicalMode::Frozen);
        assert!(f.bath.iter().all(|v| *v == [0.0; 3]));
        let d = classical_rhs(&st, &j, &[0.0; 3], ClassicalMode::Dynamic);
        for (i, v) in d.bath.iter().enumerate() {
            assert!(dot(v, &st.bath[i]).abs() < 1e-16);
        }
        assert!(dot(&d.s0, &st.s0).abs() < 1e-16);
    }

    #[test]
    fn frozen_trajectory_is_rotation() {
        let cs = build_coupling_set(0.2, BathSize::Finite(6)).unwrap();
        let j = cs.couplings().unwrap();
        let st = sample_initial(&cs, &mut sample_rng(2, 0)).unwrap();
        let h = [0.3, 0.0, -0.4];
        let b = st.overhauser(j);
        let field = [b[0] - h[0], b[1] - h[1], b[2] - h[2]];
        let traj = trajectory(&st, j, &h, ClassicalMode::Frozen, 1e-3, 11, 500);
        for (k, s) in traj.iter().enumerate() {
            let want = merkulov_rotation(&st.s0, &field, k as f64 * 0.5);
            for a in 0..3 {
                assert!((s.s0[a] - want[a]).abs() < 1e-6);
            }
            assert_eq!(s.bath, st.bath);
        }
    }

    #[test]
    fn invariants_of_the_dynamic_flow() {
        let cs = build_coupling_set(0.1, BathSize::Finite(30)).unwrap();
        let j = cs.couplings().unwrap();
        let st = sample_initial(&cs, &mut sample_rng(4, 1)).unwrap();
        let t_total = 10.0;
        let traj = trajectory(&st, j, &[0.0; 3], ClassicalMode::Dynamic, 0.01, 11, 100);
        let last = traj.last().unwrap();
        assert!((norm(&last.s0) - norm(&st.s0)).abs() < 1e-8 * t_total);
        for (a, b) in last.bath.iter().zip(&st.bath) {
            assert!((norm(a) - norm(b)).abs() < 1e-8 * t_total);
        }
        let e0 = dot(&st.s0, &st.overhauser(j));
        for s in &traj {
            assert!((dot(&s.s0, &s.overhauser(j)) - e0).abs() < 1e-8 * t_total);
        }
    }

    #[test]
    fn ensemble_starts_at_quarter_and_is_deterministic() {
        let cs = build_coupling_set(0.2, BathSize::Finite(8)).unwrap();
        let cfg = EnsembleConfig {
            samples: 600,
            seed: 7,
            t_max: 2.0,
            ..Default::default()
        };
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_autocorrelation(&cfg, &cs).unwrap())
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a, b);
        assert_eq!(a.values[0].re, 0.25);
        assert_eq!(a.stderr.as_ref().unwrap()[0], 0.0);
    }

    #[test]
    fn frozen_ensemble_matches_formula() {
        let cs = build_coupling_set(1.0 / 18.0, BathSize::Finite(18)).unwrap();
        let cfg = EnsembleConfig {
            samples: 20_000,
            seed: 3,
            dt: 0.02,
            t_max: 8.0,
            stride: 25,
            mode: ClassicalMode::Frozen,
            h_central: [0.0; 3],
        };
        let s = simulate_autocorrelation(&cfg, &cs).unwrap();
        let se = s.stderr.as_ref().unwrap();
        for ((t, v), e) in s.times.iter().zip(&s.values).zip(se) {
            assert!((v.re - s_frozen(*t, 1.0)).abs() < 4.0 * e + 1e-9, "t={t}");
        }
    }

    #[test]
    fn stderr_scales_as_inverse_sqrt_samples() {
        let cs = build_coupling_set(0.2, BathSize::Finite(5)).unwrap();
        let se_at = |samples: usize| {
            let cfg = EnsembleConfig {
                samples,
                seed: 21,
                dt: 0.05,
                t_max: 3.0,
                stride: 60,
                mode: ClassicalMode::Frozen,
                h_central: [0.0; 3],
            };
            simulate_autocorrelation(&cfg, &cs).unwrap().stderr.unwrap()[1]
        };
        let ratio = se_at(2_000) / se_at(32_000);
        assert!((ratio - 4.0).abs() < 0.4, "{ratio}");
    }
}
