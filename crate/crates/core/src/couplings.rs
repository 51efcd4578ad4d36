//! Hyperfine coupling sets and the orthogonal-polynomial chain built on them.
//!
//! Couplings follow the exponential family `J_i = C exp(-i γ)` normalized to
//! `Σ J_i² = J_Q² = 1`. The three-term recursion of the polynomials that are
//! orthonormal on the coupling set yields the chain coefficients `α_j`, `β_j`
//! used by the effective Hamiltonian.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{param, Error, Result};

/// Number of bath spins.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BathSize {
    Finite(usize),
    Infinite,
}

impl std::fmt::Display for BathSize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BathSize::Finite(n) => write!(f, "{n}"),
            BathSize::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for BathSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinite") {
            return Ok(BathSize::Infinite);
        }
        s.parse::<usize>().map(BathSize::Finite).map_err(|_| {
            param(
                "n_bath",
                format!("expected a positive integer or `inf`, got `{s}`"),
            )
        })
    }
}

#[derive(Clone, Debug)]
pub struct CouplingSet {
    pub gamma: f64,
    pub n_bath: BathSize,
    /// Prefactor `C` in units of `J_Q`.
    pub prefactor: f64,
    couplings: Option<Vec<f64>>,
    pub j_q: f64,
    /// `(Σ J_i)² / Σ J_i²` for finite baths, `2/γ` for the infinite bath.
    pub n_eff: f64,
}

impl CouplingSet {
    /// Explicit couplings; fails for the infinite bath.
    pub fn couplings(&self) -> Result<&[f64]> {
        self.couplings.as_deref().ok_or_else(|| {
            Error::Unsupported("explicit couplings are not available for an infinite bath".into())
        })
    }

    /// Large-bath value `2/γ`, reported next to the ratio definition.
    pub fn n_eff_asymptotic(&self) -> f64 {
        2.0 / self.gamma
    }

    pub fn is_infinite(&self) -> bool {
        self.n_bath == BathSize::Infinite
    }
}

/// Builds the normalized exponential coupling set.
///
/// The prefactor is fixed exactly from `Σ J_i² = 1` rather than by its
/// small-γ limit `√(2γ)`.
pub fn build_coupling_set(gamma: f64, n_bath: BathSize) -> Result<CouplingSet> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(param(
            "gamma",
            format!("must be positive and finite, got {gamma}"),
        ));
    }
    match n_bath {
        BathSize::Finite(0) => Err(param("n_bath", "must be at least 1")),
        BathSize::Finite(n) => {
            let raw: Vec<f64> = (1..=n).map(|i| (-(i as f64) * gamma).exp()).collect();
            let norm2: f64 = raw.iter().map(|x| x * x).sum();
            let prefactor = 1.0 / norm2.sqrt();
            let couplings: Vec<f64> = raw.iter().map(|x| prefactor * x).collect();
            let sum: f64 = couplings.iter().sum();
            let sum2: f64 = couplings.iter().map(|x| x * x).sum();
            Ok(CouplingSet {
                gamma,
                n_bath,
                prefactor,
                n_eff: sum * sum / sum2,
                couplings: Some(couplings),
                j_q: 1.0,
            })
        }
        BathSize::Infinite => Ok(CouplingSet {
            gamma,
            n_bath,
            // Σ_{i≥1} e^{-2iγ} = 1/(e^{2γ} - 1)
            prefactor: (2.0 * gamma).exp_m1().sqrt(),
            couplings: None,
            j_q: 1.0,
            n_eff: 2.0 / gamma,
        }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoefficientMode {
    /// Lanczos recursion on an explicit coupling set.
    Exact,
    /// Closed-form small-γ coefficients.
    Analytic,
}

impl std::fmt::Display for CoefficientMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CoefficientMode::Exact => "exact",
            CoefficientMode::Analytic => "analytic",
        })
    }
}

impl std::str::FromStr for CoefficientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "exact" => Ok(CoefficientMode::Exact),
            "analytic" => Ok(CoefficientMode::Analytic),
            other => Err(param(
                "coefficients",
                format!("expected exact|analytic, got `{other}`"),
            )),
        }
    }
}

/// Recursion coefficients of the truncated chain. `betas[j-1]` couples sites
/// `j` and `j+1`; the boundary values `β_0` and `β_{N_tr}` are zero and not
/// stored.
#[derive(Clone, Debug, PartialEq)]
pub struct LanczosChain {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub mode: CoefficientMode,
}

impl LanczosChain {
    pub fn n_tr(&self) -> usize {
        self.alphas.len()
    }

    /// `β_j` for 1-based `j` with the zero boundary convention.
    pub fn beta(&self, j: usize) -> f64 {
        if j == 0 || j >= self.n_tr() {
            0.0
        } else {
            self.betas[j - 1]
        }
    }

    pub fn tridiagonal(&self) -> DMatrix<f64> {
        let n = self.n_tr();
        let mut t = DMatrix::zeros(n, n);
        for (j, &a) in self.alphas.iter().enumerate() {
            t[(j, j)] = a;
        }
        for (j, &b) in self.betas.iter().enumerate() {
            t[(j, j + 1)] = b;
            t[(j + 1, j)] = b;
        }
        t
    }

    pub fn max_abs_alpha(&self) -> f64 {
        self.alphas.iter().fold(0.0_f64, |m, a| m.max(a.abs()))
    }
}

const BREAKDOWN_TOL: f64 = 1e-14;

/// Values `p_j(J_i)` for `j = 1..=n_tr`, one vector per polynomial, together
/// with the recursion coefficients. Full reorthogonalization keeps the
/// polynomials orthonormal on the coupling set.
fn lanczos_vectors(couplings: &[f64], n_tr: usize) -> Result<(Vec<Vec<f64>>, LanczosChain)> {
    if n_tr == 0 {
        return Err(param("n_tr", "must be at least 1"));
    }
    if n_tr > couplings.len() {
        return Err(param(
            "n_tr",
            format!("{n_tr} exceeds the number of couplings {}", couplings.len()),
        ));
    }
    let norm2: f64 = couplings.iter().map(|x| x * x).sum();
    if (norm2 - 1.0).abs() > 1e-10 {
        return Err(param(
            "couplings",
            format!("must satisfy Σ J² = 1, got {norm2}"),
        ));
    }

    // p_1(x) = x
    let mut basis: Vec<Vec<f64>> = vec![couplings.to_vec()];
    let mut alphas = Vec::with_capacity(n_tr);
    let mut betas = Vec::with_capacity(n_tr.saturating_sub(1));

    for j in 0..n_tr {
        let p = &basis[j];
        let xp: Vec<f64> = couplings.iter().zip(p).map(|(x, v)| x * v).collect();
        let alpha: f64 = xp.iter().zip(p).map(|(a, b)| a * b).sum();
        alphas.push(alpha);
        if j + 1 == n_tr {
            break;
        }
        let mut r = xp;
        for (ri, pi) in r.iter_mut().zip(p) {
            *ri -= alpha * pi;
        }
        if j > 0 {
            let beta_prev = betas[j - 1];
            for (ri, qi) in r.iter_mut().zip(&basis[j - 1]) {
                *ri -= beta_prev * qi;
            }
        }
        // two passes of classical Gram-Schmidt against all previous vectors
        for _ in 0..2 {
            for q in &basis {
                let c: f64 = r.iter().zip(q).map(|(a, b)| a * b).sum();
                for (ri, qi) in r.iter_mut().zip(q) {
                    *ri -= c * qi;
                }
            }
        }
        let beta = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        if beta < BREAKDOWN_TOL {
            return Err(Error::ChainBreakdown {
                requested: n_tr,
                achieved: j + 1,
            });
        }
        betas.push(beta);
        r.iter_mut().for_each(|x| *x /= beta);
        basis.push(r);
    }

    Ok((
        basis,
        LanczosChain {
            alphas,
            betas,
            mode: CoefficientMode::Exact,
        },
    ))
}

/// Chain coefficients from the actual couplings of a finite bath.
pub fn lanczos_exact(cs: &CouplingSet, n_tr: usize) -> Result<LanczosChain> {
    lanczos_from_couplings(cs.couplings()?, n_tr)
}

/// Same as [`lanczos_exact`] for an explicit, normalized coupling list.
pub fn lanczos_from_couplings(couplings: &[f64], n_tr: usize) -> Result<LanczosChain> {
    lanczos_vectors(couplings, n_tr).map(|(_, chain)| chain)
}

/// Orthonormal polynomial values `p_j(J_i)`, indexed `[j-1][i]`.
pub fn polynomial_values(couplings: &[f64], n: usize) -> Result<Vec<Vec<f64>>> {
    lanczos_vectors(couplings, n).map(|(v, _)| v)
}

/// Small-γ closed form:
/// `α_j = 4j²/(4j²-1) √(γ/2)`, `β_j = √(j(j+1))/(2j+1) √(γ/2)`.
pub fn lanczos_analytic(gamma: f64, n_tr: usize) -> Result<LanczosChain> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(param(
            "gamma",
            format!("must be positive and finite, got {gamma}"),
        ));
    }
    if n_tr == 0 {
        return Err(param("n_tr", "must be at least 1"));
    }
    let scale = (gamma / 2.0).sqrt();
    let alphas = (1..=n_tr)
        .map(|j| {
            let j2 = (j * j) as f64;
            4.0 * j2 / (4.0 * j2 - 1.0) * scale
        })
        .collect();
    let betas = (1..n_tr)
        .map(|j| {
            let j = j as f64;
            (j * (j + 1.0)).sqrt() / (2.0 * j + 1.0) * scale
        })
        .collect();
    Ok(LanczosChain {
        alphas,
        betas,
        mode: CoefficientMode::Analytic,
    })
}

/// Picks exact coefficients for finite baths and the closed form otherwise.
pub fn default_chain(cs: &CouplingSet, n_tr: usize) -> Result<LanczosChain> {
    if cs.is_infinite() {
        lanczos_analytic(cs.gamma, n_tr)
    } else {
        lanczos_exact(cs, n_tr)
    }
}

/// Eigen-decomposition `Qᵀ T Q = diag(ε)` of the chain matrix.
#[derive(Clone, Debug)]
pub struct ChainEigenbasis {
    /// Ascending.
    pub energies: Vec<f64>,
    /// Column `j` is the eigenvector for `energies[j]`.
    pub q_matrix: DMatrix<f64>,
    /// First row `Q_{1,j}`, all non-negative.
    pub head_weights: Vec<f64>,
}

pub fn diagonalize_chain(lc: &LanczosChain) -> Result<ChainEigenbasis> {
    let n = lc.n_tr();
    if n == 0 {
        return Err(param("n_tr", "empty chain"));
    }
    let eig = SymmetricEigen::try_new(lc.tridiagonal(), f64::EPSILON, 0).ok_or_else(|| {
        Error::Internal("symmetric tridiagonal eigensolver did not converge".into())
    })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut q = DMatrix::zeros(n, n);
    let mut energies = Vec::with_capacity(n);
    for (col, &k) in order.iter().enumerate() {
        energies.push(eig.eigenvalues[k]);
        let sign = if eig.eigenvectors[(0, k)] < 0.0 {
            -1.0
        } else {
            1.0
        };
        for row in 0..n {
            q[(row, col)] = sign * eig.eigenvectors[(row, k)];
        }
    }
    let head_weights = (0..n).map(|j| q[(0, j)]).collect();
    Ok(ChainEigenbasis {
        energies,
        q_matrix: q,
        head_weights,
    })
}

/// `Σ_k p_m(J_k)² p_l(J_k)²`, the squared-norm proxy of the commutator of two
/// generalized Overhauser fields. Indices are 1-based.
pub fn pair_overlap_sum(cs: &CouplingSet, m: usize, l: usize) -> Result<f64> {
    pair_overlap_sum_from_couplings(cs.couplings()?, m, l)
}

pub fn pair_overlap_sum_from_couplings(couplings: &[f64], m: usize, l: usize) -> Result<f64> {
    if m == 0 || l == 0 {
        return Err(param("index", "polynomial indices start at 1"));
    }
    let n = m.max(l);
    if n > couplings.len() {
        return Err(param(
            "index",
            format!("index {n} exceeds the chain length {}", couplings.len()),
        ));
    }
    let p = polynomial_values(couplings, n)?;
    Ok(p[m - 1]
        .iter()
        .zip(&p[l - 1])
        .map(|(a, b)| a * a * b * b)
        .sum())
}
