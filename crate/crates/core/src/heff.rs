//! Effective Hamiltonian of the iterated equations of motion.
//!
//! The central-spin operator index `m` is a four-state impurity acted on by
//! the matrices `M_k` (anticommutators) and `K_k` (commutators); the bath is
//! a chain of three-flavor bosons. Terms:
//!
//! * central: `½ Σ_α K_α (a_{1α} + a†_{1α})`
//! * chain: `(i/2) Σ_j ε_{αβδ} M_β {α_j a†_{jδ}a_{jα} + β_j (a†_{j+1,δ}a_{jα} − a†_{jα}a_{j+1,δ})}`
//! * Zeeman: `−Σ_α h_α K_α`
//! * nuclear Zeeman: `−i z Σ_j ε_{αβδ} h_β a†_{jδ}a_{jα}`
//!
//! In the diagonal representation the chain modes are replaced by the
//! eigenmodes `d_j` of the tridiagonal matrix: the central term couples to
//! every mode with weight `Q_{1,j}` and the chain term becomes on-site with
//! energy `ε_j`.
//!
//! Matrix elements are generated row by row from the adjoint action on the
//! row state: `⟨s|X⊗B|r⟩ = X[s.m][r.m] ⟨s.n|B|r.n⟩` with `r.n` obtained by
//! applying `B†` to `s.n`. Elements leading outside the truncated basis are
//! dropped, which is the truncation.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::couplings::{diagonalize_chain, ChainEigenbasis, LanczosChain};
use crate::error::{param, Error, Result};
use crate::levi_civita;
use crate::opbasis::{lower_triple, raise_triple, Basis, TruncationSpec};
use crate::sparse::{real_generator_entry, spectral_radius, RealGenerator, SparseOperator};
use crate::Vec3;

pub type Mat4 = [[Complex64; 4]; 4];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Debug, PartialEq)]
pub struct ImpurityMatrices {
    pub m_mats: [Mat4; 3],
    pub k_mats: [Mat4; 3],
}

type Mat2 = [[Complex64; 2]; 2];

fn pauli(m: usize) -> Mat2 {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    match m {
        0 => [[c(1., 0.), c(0., 0.)], [c(0., 0.), c(1., 0.)]],
        1 => [[c(0., 0.), c(1., 0.)], [c(1., 0.), c(0., 0.)]],
        2 => [[c(0., 0.), c(0., -1.)], [c(0., 1.), c(0., 0.)]],
        3 => [[c(1., 0.), c(0., 0.)], [c(0., 0.), c(-1., 0.)]],
        _ => unreachable!(),
    }
}

fn mul2(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// `⟨⟨A|B⟩⟩ = Tr(A†B)/2`.
fn frobenius(a: &Mat2, b: &Mat2) -> Complex64 {
    let mut s = ZERO;
    for i in 0..2 {
        for j in 0..2 {
            s += a[j][i].conj() * b[j][i];
        }
    }
    s / 2.0
}

/// `⟨n|M_k|m⟩ = ½⟨⟨σ_n|{σ_k,σ_m}⟩⟩`, `⟨n|K_k|m⟩ = ½⟨⟨σ_n|[σ_k,σ_m]⟩⟩`.
pub fn impurity_matrices() -> ImpurityMatrices {
    let mut m_mats = [[[ZERO; 4]; 4]; 3];
    let mut k_mats = [[[ZERO; 4]; 4]; 3];
    for k in 0..3 {
        let sk = pauli(k + 1);
        for m in 0..4 {
            let sm = pauli(m);
            let (km, mk) = (mul2(&sk, &sm), mul2(&sm, &sk));
            let mut anti = [[ZERO; 2]; 2];
            let mut comm = [[ZERO; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    anti[i][j] = km[i][j] + mk[i][j];
                    comm[i][j] = km[i][j] - mk[i][j];
                }
            }
            for n in 0..4 {
                let sn = pauli(n);
                m_mats[k][n][m] = frobenius(&sn, &anti) / 2.0;
                k_mats[k][n][m] = frobenius(&sn, &comm) / 2.0;
            }
        }
    }
    ImpurityMatrices { m_mats, k_mats }
}

fn identity4() -> Mat4 {
    let mut out = [[ZERO; 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        row[i] = Complex64::new(1.0, 0.0);
    }
    out
}

fn scale4(a: &Mat4, c: Complex64) -> Mat4 {
    let mut out = *a;
    out.iter_mut().flatten().for_each(|x| *x *= c);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Representation {
    Chain,
    Diagonal,
}

impl std::fmt::Display for Representation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Representation::Chain => "chain",
            Representation::Diagonal => "diagonal",
        })
    }
}

impl std::str::FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "chain" => Ok(Representation::Chain),
            "diagonal" => Ok(Representation::Diagonal),
            other => Err(param(
                "representation",
                format!("expected chain|diagonal, got `{other}`"),
            )),
        }
    }
}

/// Default ratio of nuclear to electronic Zeeman energy.
pub const DEFAULT_Z_NUCLEAR: f64 = 1.0 / 800.0;

#[derive(Clone, Debug)]
pub struct HamiltonianParams {
    pub chain: LanczosChain,
    pub eig: Option<ChainEigenbasis>,
    pub trunc: TruncationSpec,
    pub h_central: Vec3,
    pub z_nuclear: f64,
    pub enable_nuclear_zeeman: bool,
    pub representation: Representation,
    pub enable_central: bool,
    pub enable_chain: bool,
}

impl HamiltonianParams {
    /// Chain representation, zero field, central and chain terms enabled.
    pub fn new(chain: LanczosChain, trunc: TruncationSpec) -> Result<Self> {
        if chain.n_tr() != trunc.n_tr() {
            return Err(param(
                "n_max",
                format!(
                    "has {} entries but the chain has {} sites",
                    trunc.n_tr(),
                    chain.n_tr()
                ),
            ));
        }
        Ok(Self {
            chain,
            eig: None,
            trunc,
            h_central: [0.0; 3],
            z_nuclear: DEFAULT_Z_NUCLEAR,
            enable_nuclear_zeeman: false,
            representation: Representation::Chain,
            enable_central: true,
            enable_chain: true,
        })
    }

    /// Switches representation, diagonalizing the chain when needed.
    pub fn with_representation(mut self, rep: Representation) -> Result<Self> {
        if rep == Representation::Diagonal && self.eig.is_none() {
            self.eig = Some(diagonalize_chain(&self.chain)?);
        }
        self.representation = rep;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.chain.n_tr() != self.trunc.n_tr() {
            return Err(param("n_max", "length differs from the chain length"));
        }
        if self.representation == Representation::Diagonal && self.eig.is_none() {
            return Err(param(
                "representation",
                "diagonal representation needs the chain eigenbasis",
            ));
        }
        if self.h_central.iter().any(|h| !h.is_finite()) || !self.z_nuclear.is_finite() {
            return Err(param("h", "field components must be finite"));
        }
        Ok(())
    }

    pub fn field_norm(&self) -> f64 {
        self.h_central.iter().map(|h| h * h).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Term {
    Central,
    Chain,
    Zeeman,
    NuclearZeeman,
}

/// Boson part of an elementary term. Sites are 0-based.
#[derive(Clone, Copy, Debug)]
enum BosonOp {
    Identity,
    Lower {
        site: usize,
        flavor: usize,
    },
    Raise {
        site: usize,
        flavor: usize,
    },
    /// `a†_{create} a_{annihilate}`
    Hop {
        create: (usize, usize),
        annihilate: (usize, usize),
    },
}

/// `X ⊗ B` with the coefficient folded into `X`; `rows[s.m]` lists the
/// nonzero `(r.m, X[s.m][r.m])`.
#[derive(Clone, Debug)]
struct Elementary {
    rows: [Vec<(u8, Complex64)>; 4],
    op: BosonOp,
}

impl Elementary {
    fn new(x: Mat4, op: BosonOp) -> Option<Self> {
        let rows: [Vec<(u8, Complex64)>; 4] = std::array::from_fn(|s| {
            (0..4)
                .filter(|&r| x[s][r] != ZERO)
                .map(|r| (r as u8, x[s][r]))
                .collect()
        });
        rows.iter()
            .any(|r| !r.is_empty())
            .then_some(Self { rows, op })
    }
}

/// Elementary terms of the requested parts of `H_eff`.
fn elementary_terms(params: &HamiltonianParams, terms: &[Term]) -> Result<Vec<Elementary>> {
    params.validate()?;
    let imp = impurity_matrices();
    let n_tr = params.trunc.n_tr();
    let mut out = Vec::new();
    let mut push = |x: Mat4, op: BosonOp| {
        if let Some(e) = Elementary::new(x, op) {
            out.push(e);
        }
    };
    let diag = match params.representation {
        Representation::Diagonal => params.eig.as_ref(),
        Representation::Chain => None,
    };

    for &term in terms {
        match term {
            Term::Central => {
                let weights: Vec<(usize, f64)> = match diag {
                    Some(e) => e.head_weights.iter().copied().enumerate().collect(),
                    None => vec![(0, 1.0)],
                };
                for (site, w) in weights {
                    if w == 0.0 {
                        continue;
                    }
                    for (flavor, k) in imp.k_mats.iter().enumerate() {
                        let x = scale4(k, Complex64::new(0.5 * w, 0.0));
                        push(x, BosonOp::Lower { site, flavor });
                        push(x, BosonOp::Raise { site, flavor });
                    }
                }
            }
            Term::Chain => {
                for (a, b, d) in epsilon_triples() {
                    let eps = levi_civita(a, b, d);
                    let mb = &imp.m_mats[b];
                    for j in 0..n_tr {
                        let onsite = match diag {
                            Some(e) => e.energies[j],
                            None => params.chain.alphas[j],
                        };
                        push(
                            scale4(mb, 0.5 * I * eps * onsite),
                            BosonOp::Hop {
                                create: (j, d),
                                annihilate: (j, a),
                            },
                        );
                        if diag.is_none() && j + 1 < n_tr {
                            let beta = params.chain.beta(j + 1);
                            push(
                                scale4(mb, 0.5 * I * eps * beta),
                                BosonOp::Hop {
                                    create: (j + 1, d),
                                    annihilate: (j, a),
                                },
                            );
                            push(
                                scale4(mb, -0.5 * I * eps * beta),
                                BosonOp::Hop {
                                    create: (j, a),
                                    annihilate: (j + 1, d),
                                },
                            );
                        }
                    }
                }
            }
            Term::Zeeman => {
                for (alpha, k) in imp.k_mats.iter().enumerate() {
                    let h = params.h_central[alpha];
                    if h != 0.0 {
                        push(scale4(k, Complex64::new(-h, 0.0)), BosonOp::Identity);
                    }
                }
            }
            Term::NuclearZeeman => {
                if !params.enable_nuclear_zeeman || params.z_nuclear == 0.0 {
                    continue;
                }
                let id = identity4();
                for (a, b, d) in epsilon_triples() {
                    let c = -I * params.z_nuclear * levi_civita(a, b, d) * params.h_central[b];
                    if c == ZERO {
                        continue;
                    }
                    for j in 0..n_tr {
                        push(
                            scale4(&id, c),
                            BosonOp::Hop {
                                create: (j, d),
                                annihilate: (j, a),
                            },
                        );
                    }
                }
            }
        }
    }
    Ok(out)
}

fn epsilon_triples() -> impl Iterator<Item = (usize, usize, usize)> {
    (0..3)
        .flat_map(|a| (0..3).flat_map(move |b| (0..3).map(move |d| (a, b, d))))
        .filter(|&(a, b, d)| levi_civita(a, b, d) != 0.0)
}

/// Row generator over the full index space of a basis.
pub struct RowGenerator<'a> {
    basis: &'a Basis,
    terms: Vec<Elementary>,
}

impl<'a> RowGenerator<'a> {
    fn new(params: &HamiltonianParams, basis: &'a Basis, terms: &[Term]) -> Result<Self> {
        if basis.trunc != params.trunc {
            return Err(param(
                "basis",
                "truncation differs from the Hamiltonian parameters",
            ));
        }
        Ok(Self {
            basis,
            terms: elementary_terms(params, terms)?,
        })
    }

    #[inline]
    fn local(&self, full: u64, site: usize) -> usize {
        let b = self.basis;
        ((full / b.site_stride(site)) % b.site(site).len() as u64) as usize
    }

    /// Replaces the local index of `site` in `full`.
    #[inline]
    fn with_local(&self, full: u64, site: usize, old: usize, new: usize) -> u64 {
        let s = self.basis.site_stride(site);
        full - old as u64 * s + new as u64 * s
    }

    /// Full id and amplitude of `B† |s.n⟩` with the impurity index untouched.
    #[inline]
    fn adjoint_apply(&self, op: BosonOp, full: u64) -> Option<(u64, f64)> {
        let b = self.basis;
        match op {
            BosonOp::Identity => Some((full, 1.0)),
            BosonOp::Lower { site, flavor } => {
                // ⟨s|a|r⟩ with r = a† s
                let l = self.local(full, site);
                let space = b.site(site);
                let (t, amp) = raise_triple(space.triple(l), flavor, space.n_max)?;
                Some((self.with_local(full, site, l, space.index(t)), amp))
            }
            BosonOp::Raise { site, flavor } => {
                let l = self.local(full, site);
                let space = b.site(site);
                let (t, amp) = lower_triple(space.triple(l), flavor)?;
                Some((self.with_local(full, site, l, space.index(t)), amp))
            }
            BosonOp::Hop { create, annihilate } => {
                // (a†_c a_d)† = a†_d a_c: lower at c, then raise at d
                let (cs, cf) = create;
                let (ds, df) = annihilate;
                let lc = self.local(full, cs);
                let sc = b.site(cs);
                let (tc, amp1) = lower_triple(sc.triple(lc), cf)?;
                if cs == ds {
                    let (t, amp2) = raise_triple(tc, df, sc.n_max)?;
                    return Some((self.with_local(full, cs, lc, sc.index(t)), amp1 * amp2));
                }
                let mid = self.with_local(full, cs, lc, sc.index(tc));
                let ld = self.local(mid, ds);
                let sd = b.site(ds);
                let (td, amp2) = raise_triple(sd.triple(ld), df, sd.n_max)?;
                Some((self.with_local(mid, ds, ld, sd.index(td)), amp1 * amp2))
            }
        }
    }

    /// Calls `f(full_col, value)` for every element of the row with full id
    /// `full`, before merging duplicates.
    #[inline]
    pub fn for_each_in_row_full(&self, full: u64, mut f: impl FnMut(u64, Complex64)) {
        let stride = self.basis.impurity_stride();
        let m = (full / stride) as usize;
        let occ_part = full % stride;
        for t in &self.terms {
            let row = &t.rows[m];
            if row.is_empty() {
                continue;
            }
            if let Some((target, amp)) = self.adjoint_apply(t.op, occ_part) {
                for &(rm, x) in row {
                    f(target + rm as u64 * stride, x * amp);
                }
            }
        }
    }

    fn row(&self, id: usize, out: &mut Vec<(u32, Complex64)>) {
        let full = self.basis.full_id_of(id);
        self.for_each_in_row_full(full, |col, v| {
            if let Some(c) = self.basis.id_of_full(col) {
                out.push((c as u32, v));
            }
        });
    }
}

/// Assembles the sum of the given terms.
pub fn assemble_terms(
    params: &HamiltonianParams,
    basis: &Basis,
    terms: &[Term],
) -> Result<SparseOperator> {
    let gen = RowGenerator::new(params, basis, terms)?;
    SparseOperator::from_rows(basis.len(), |r, out| gen.row(r, out), Ok)
}

pub fn assemble_central(params: &HamiltonianParams, basis: &Basis) -> Result<SparseOperator> {
    assemble_terms(params, basis, &[Term::Central])
}

pub fn assemble_chain(params: &HamiltonianParams, basis: &Basis) -> Result<SparseOperator> {
    assemble_terms(params, basis, &[Term::Chain])
}

pub fn assemble_zeeman(params: &HamiltonianParams, basis: &Basis) -> Result<SparseOperator> {
    assemble_terms(params, basis, &[Term::Zeeman])
}

pub fn assemble_nuclear_zeeman(
    params: &HamiltonianParams,
    basis: &Basis,
) -> Result<SparseOperator> {
    if !params.enable_nuclear_zeeman {
        return Err(param(
            "enable_nuclear_zeeman",
            "nuclear Zeeman term is disabled",
        ));
    }
    assemble_terms(params, basis, &[Term::NuclearZeeman])
}

/// Terms switched on in `params`.
pub fn enabled_terms(params: &HamiltonianParams) -> Vec<Term> {
    let mut t = Vec::new();
    if params.enable_central {
        t.push(Term::Central);
    }
    if params.enable_chain {
        t.push(Term::Chain);
    }
    if params.h_central.iter().any(|&h| h != 0.0) {
        t.push(Term::Zeeman);
        if params.enable_nuclear_zeeman {
            t.push(Term::NuclearZeeman);
        }
    }
    t
}

pub fn assemble_total(params: &HamiltonianParams, basis: &Basis) -> Result<SparseOperator> {
    assemble_terms(params, basis, &enabled_terms(params))
}

/// Real generator `G = -i H_eff` assembled directly, without the complex
/// intermediate.
pub fn assemble_generator(params: &HamiltonianParams, basis: &Basis) -> Result<RealGenerator> {
    let gen = RowGenerator::new(params, basis, &enabled_terms(params))?;
    RealGenerator::from_rows(basis.len(), |r, out| gen.row(r, out), real_generator_entry)
}

/// Limit on the full index space searched by [`reachable_basis`] (bits of
/// the visited set).
pub const MAX_SEARCH_SPACE: u64 = 1 << 34;

/// States connected to `|3;0⟩` by repeated application of the enabled
/// terms. The result is closed under `H_eff`, so the dynamics of the seed
/// restricted to it is exact with respect to the full truncated space.
pub fn reachable_basis(params: &HamiltonianParams, max_states: u64) -> Result<Basis> {
    let full = params.trunc.full_size();
    if full > MAX_SEARCH_SPACE as u128 {
        return Err(Error::Capacity {
            what: "reachability search space",
            required: full,
            limit: MAX_SEARCH_SPACE as u128,
        });
    }
    let full = full as u64;
    let skeleton = Basis::skeleton(&params.trunc, full);
    let gen = RowGenerator::new(params, &skeleton, &enabled_terms(params))?;
    let seed = 3 * skeleton.impurity_stride();

    let mut visited = vec![0u64; full.div_ceil(64) as usize];
    let mark = |id: u64, visited: &mut [u64]| -> bool {
        let (w, bit) = ((id / 64) as usize, id % 64);
        let fresh = visited[w] & (1 << bit) == 0;
        visited[w] |= 1 << bit;
        fresh
    };
    mark(seed, &mut visited);
    let mut count = 1u64;
    let mut frontier = vec![seed];
    let mut next = Vec::new();
    while !frontier.is_empty() {
        for &s in &frontier {
            gen.for_each_in_row_full(s, |c, v| {
                if v != ZERO && mark(c, &mut visited) {
                    next.push(c);
                }
            });
        }
        count += next.len() as u64;
        if count > max_states {
            return Err(Error::Capacity {
                what: "reachable basis states",
                required: count as u128,
                limit: max_states as u128,
            });
        }
        std::mem::swap(&mut frontier, &mut next);
        next.clear();
    }
    drop(frontier);

    let mut ids = Vec::with_capacity(count as usize);
    for (w, &word) in visited.iter().enumerate() {
        let mut bits = word;
        while bits != 0 {
            let b = bits.trailing_zeros() as u64;
            ids.push(w as u64 * 64 + b);
            bits &= bits - 1;
        }
    }
    drop(visited);
    Basis::from_full_ids(&params.trunc, ids)
}

/// Whether no enabled term leads from `basis` to a state outside it.
pub fn is_closed(params: &HamiltonianParams, basis: &Basis) -> Result<bool> {
    if basis.is_full() {
        return Ok(true);
    }
    let gen = RowGenerator::new(params, basis, &enabled_terms(params))?;
    Ok((0..basis.len()).into_par_iter().all(|id| {
        let mut closed = true;
        gen.for_each_in_row_full(basis.full_id_of(id), |c, v| {
            if v != ZERO && basis.id_of_full(c).is_none() {
                closed = false;
            }
        });
        closed
    }))
}

/// Power-iteration estimate of the spectral radius of `H_eff`.
pub fn spectral_radius_estimate(op: &SparseOperator, iterations: usize) -> f64 {
    spectral_radius(op, iterations)
}

/// Step-size heuristic `dt·(2·max|α|·√n_max(1) + |h| + 1)`.
pub fn step_stiffness(params: &HamiltonianParams, dt: f64) -> f64 {
    let n1 = params.trunc.n_max[0] as f64;
    dt * (2.0 * params.chain.max_abs_alpha() * n1.sqrt() + params.field_norm() + 1.0)
}
