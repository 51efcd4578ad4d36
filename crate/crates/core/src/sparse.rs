//! Row-compressed sparse matrices over the operator basis.
//!
//! [`SparseOperator`] stores complex entries of `H_eff`. Because every entry
//! of the assembled `H_eff` is purely imaginary, the generator `G = -iH` of
//! the flow `dψ/dt = -iHψ` is real and antisymmetric; [`RealGenerator`]
//! stores it with half the memory and a real matvec.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

const ROW_CHUNK: usize = 2048;

/// CSR storage shared by the complex operator and the real generator.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr<T> {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<T>,
}

/// Sorts a row by column, merges duplicates and drops exact zeros.
pub(crate) fn canonicalize_row(row: &mut Vec<(u32, Complex64)>) {
    row.sort_unstable_by_key(|e| e.0);
    let mut w = 0;
    for r in 0..row.len() {
        if w > 0 && row[w - 1].0 == row[r].0 {
            let v = row[r].1;
            row[w - 1].1 += v;
        } else {
            row[w] = row[r];
            w += 1;
        }
    }
    row.truncate(w);
    row.retain(|e| e.1 != Complex64::new(0.0, 0.0));
}

impl<T: Copy + Send + Sync> Csr<T> {
    /// Two-pass parallel assembly. `row_fn(r, buf)` appends the raw entries of
    /// row `r`; `map` converts each merged entry to the stored scalar.
    pub fn from_rows<F, M>(dim: usize, row_fn: F, map: M) -> Result<Self>
    where
        F: Fn(usize, &mut Vec<(u32, Complex64)>) + Sync,
        M: Fn(Complex64) -> Result<T> + Sync,
        T: Default,
    {
        if dim > u32::MAX as usize {
            return Err(Error::Capacity {
                what: "operator dimension",
                required: dim as u128,
                limit: u32::MAX as u128,
            });
        }
        let n_chunks = dim.div_ceil(ROW_CHUNK);
        let chunk_rows = |c: usize| c * ROW_CHUNK..((c + 1) * ROW_CHUNK).min(dim);

        let mut counts = vec![0usize; dim];
        counts
            .par_chunks_mut(ROW_CHUNK)
            .enumerate()
            .for_each_init(Vec::new, |buf, (c, out)| {
                for (slot, r) in out.iter_mut().zip(chunk_rows(c)) {
                    buf.clear();
                    row_fn(r, buf);
                    canonicalize_row(buf);
                    *slot = buf.len();
                }
            });

        let mut row_ptr = Vec::with_capacity(dim + 1);
        row_ptr.push(0usize);
        let mut acc = 0usize;
        for &c in &counts {
            acc += c;
            row_ptr.push(acc);
        }
        drop(counts);
        let nnz = acc;
        let mut cols = vec![0u32; nnz];
        let mut vals = vec![T::default(); nnz];

        let mut pieces = Vec::with_capacity(n_chunks);
        {
            let (mut crest, mut vrest) = (cols.as_mut_slice(), vals.as_mut_slice());
            for c in 0..n_chunks {
                let rows = chunk_rows(c);
                let len = row_ptr[rows.end] - row_ptr[rows.start];
                let (ch, ct) = crest.split_at_mut(len);
                let (vh, vt) = vrest.split_at_mut(len);
                pieces.push((c, ch, vh));
                crest = ct;
                vrest = vt;
            }
        }
        pieces
            .into_par_iter()
            .map_init(Vec::new, |buf, (c, cs, vs)| -> Result<()> {
                let mut k = 0;
                for r in chunk_rows(c) {
                    buf.clear();
                    row_fn(r, buf);
                    canonicalize_row(buf);
                    if buf.len() != row_ptr[r + 1] - row_ptr[r] {
                        return Err(Error::Internal(format!("row {r} is not reproducible")));
                    }
                    for &(col, v) in buf.iter() {
                        cs[k] = col;
                        vs[k] = map(v)?;
                        k += 1;
                    }
                }
                Ok(())
            })
            .collect::<Result<Vec<()>>>()?;

        Ok(Self {
            dim,
            row_ptr,
            cols,
            vals,
        })
    }

    pub fn from_triplets(dim: usize, mut entries: Vec<(usize, usize, T)>) -> Self
    where
        T: std::ops::AddAssign + PartialEq + Default,
    {
        entries.sort_by_key(|e| (e.0, e.1));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols: Vec<u32> = Vec::new();
        let mut vals: Vec<T> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c as u32);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut csr = Self {
            dim,
            row_ptr,
            cols,
            vals,
        };
        csr.purge_zeros();
        csr
    }

    fn purge_zeros(&mut self)
    where
        T: PartialEq + Default,
    {
        let zero = T::default();
        let mut w = 0;
        let mut start = 0;
        for r in 0..self.dim {
            let end = self.row_ptr[r + 1];
            for k in start..end {
                if self.vals[k] != zero {
                    self.cols[w] = self.cols[k];
                    self.vals[w] = self.vals[k];
                    w += 1;
                }
            }
            start = end;
            self.row_ptr[r + 1] = w;
        }
        self.cols.truncate(w);
        self.vals.truncate(w);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[range.clone()]
            .iter()
            .zip(&self.vals[range])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, r: usize, c: usize) -> Option<T> {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        let cols = &self.cols[range.clone()];
        cols.binary_search(&(c as u32))
            .ok()
            .map(|k| self.vals[range.start + k])
    }

    /// `(row, col, value)` for every stored entry, row-major.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    /// Bytes held by the index and value arrays.
    pub fn memory_bytes(&self) -> usize {
        self.row_ptr.len() * std::mem::size_of::<usize>()
            + self.cols.len() * 4
            + self.vals.len() * std::mem::size_of::<T>()
    }

    pub fn max_abs(&self) -> f64
    where
        T: Into<Complex64>,
    {
        self.vals
            .iter()
            .map(|&v| v.into().norm())
            .fold(0.0, f64::max)
    }

    /// Applies `map` to every value, keeping the sparsity pattern.
    pub fn map_values<U: Copy + Send + Sync, F: Fn(T) -> Result<U>>(&self, f: F) -> Result<Csr<U>> {
        Ok(Csr {
            dim: self.dim,
            row_ptr: self.row_ptr.clone(),
            cols: self.cols.clone(),
            vals: self.vals.iter().map(|&v| f(v)).collect::<Result<_>>()?,
        })
    }
}

impl<T> Csr<T>
where
    T: Copy + Send + Sync + Default + std::ops::Add<Output = T> + std::ops::Mul<Output = T>,
{
    /// `y = A x`. Each row is summed in storage order, so the result does
    /// not depend on how rows are distributed over threads.
    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        y.par_chunks_mut(ROW_CHUNK)
            .enumerate()
            .for_each(|(c, out)| {
                let base = c * ROW_CHUNK;
                for (i, yi) in out.iter_mut().enumerate() {
                    let r = base + i;
                    let (s, e) = (self.row_ptr[r], self.row_ptr[r + 1]);
                    let mut acc = T::default();
                    for k in s..e {
                        acc = acc + self.vals[k] * x[self.cols[k] as usize];
                    }
                    *yi = acc;
                }
            });
    }
}

/// Complex sparse operator over the basis.
pub type SparseOperator = Csr<Complex64>;

/// Real antisymmetric generator `G = -iH`.
pub type RealGenerator = Csr<f64>;

/// Max entrywise `|A - A†|`.
pub fn hermiticity_defect(op: &SparseOperator) -> f64 {
    op.entries()
        .map(|(r, c, v)| {
            let t = op.get(c, r).unwrap_or_default();
            (v - t.conj()).norm()
        })
        .fold(0.0, f64::max)
}

/// Max entrywise `|G + Gᵀ|`.
pub fn antisymmetry_defect(g: &RealGenerator) -> f64 {
    g.entries()
        .map(|(r, c, v)| (v + g.get(c, r).unwrap_or(0.0)).abs())
        .fold(0.0, f64::max)
}

impl SparseOperator {
    /// `G = -iH`; fails if any entry has a real part, i.e. `G` is not real.
    pub fn to_real_generator(&self) -> Result<RealGenerator> {
        self.map_values(real_generator_entry)
    }

    pub fn add(&self, other: &SparseOperator) -> Result<SparseOperator> {
        if self.dim != other.dim {
            return Err(Error::Parameter {
                name: "dimension",
                reason: format!("{} vs {}", self.dim, other.dim),
            });
        }
        let entries = self.entries().chain(other.entries()).collect();
        Ok(SparseOperator::from_triplets(self.dim, entries))
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<Complex64> {
        let mut m = nalgebra::DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.entries() {
            m[(r, c)] = v;
        }
        m
    }
}

pub(crate) fn real_generator_entry(h: Complex64) -> Result<f64> {
    if h.re != 0.0 {
        return Err(Error::Numeric(format!(
            "entry {h} has a real part; -iH is not real"
        )));
    }
    // -i (i b) = b
    Ok(h.im)
}

/// Power-iteration estimate of the largest `|λ|` of a normal operator.
pub fn spectral_radius<T>(op: &Csr<T>, iterations: usize) -> f64
where
    T: Copy + Send + Sync + Default + std::ops::Add<Output = T> + std::ops::Mul<Output = T>,
    T: From<f64> + Into<Complex64>,
{
    let n = op.dim();
    if n == 0 {
        return 0.0;
    }
    let norm = |v: &[T]| v.iter().map(|&x| x.into().norm_sqr()).sum::<f64>().sqrt();
    let mut v: Vec<T> = (0..n)
        .map(|i| T::from(1.0 + 0.5 * ((i as f64) * 0.618_033_988_75).fract()))
        .collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x = *x * T::from(1.0 / nv));
    let mut w = vec![T::default(); n];
    let mut est = 0.0;
    for _ in 0..iterations.max(1) {
        op.matvec(&v, &mut w);
        est = norm(&w);
        if est == 0.0 {
            return 0.0;
        }
        for (vi, &wi) in v.iter_mut().zip(&w) {
            *vi = wi * T::from(1.0 / est);
        }
    }
    est
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn canonicalize_merges_and_purges() {
        let mut row = vec![
            (3, c(1.0, 0.0)),
            (1, c(0.0, 1.0)),
            (3, c(-1.0, 0.0)),
            (1, c(2.0, 0.0)),
        ];
        canonicalize_row(&mut row);
        assert_eq!(row, vec![(1, c(2.0, 1.0))]);
    }

    #[test]
    fn from_rows_matches_triplets() {
        let dim = 5000;
        let row_fn = |r: usize, out: &mut Vec<(u32, Complex64)>| {
            out.push(((r * 7 % dim) as u32, c(0.0, r as f64)));
            out.push((r as u32, c(0.0, 1.0)));
            out.push((r as u32, c(0.0, -1.0)));
            if r > 0 {
                out.push(((r - 1) as u32, c(0.0, 0.5)));
            }
        };
        let a = SparseOperator::from_rows(dim, row_fn, Ok).unwrap();
        let mut trip = Vec::new();
        for r in 0..dim {
            let mut buf = Vec::new();
            row_fn(r, &mut buf);
            trip.extend(buf.into_iter().map(|(col, v)| (r, col as usize, v)));
        }
        let b = SparseOperator::from_triplets(dim, trip);
        assert_eq!(a, b);
        assert!(a.entries().all(|(_, _, v)| v != c(0.0, 0.0)));
    }

    #[test]
    fn matvec_and_defects() {
        let h = SparseOperator::from_triplets(
            3,
            vec![
                (0, 1, c(0.0, 2.0)),
                (1, 0, c(0.0, -2.0)),
                (1, 2, c(0.0, 1.0)),
                (2, 1, c(0.0, -1.0)),
            ],
        );
        assert_eq!(hermiticity_defect(&h), 0.0);
        let g = h.to_real_generator().unwrap();
        assert_eq!(antisymmetry_defect(&g), 0.0);
        let mut y = vec![0.0; 3];
        g.matvec(&[1.0, 1.0, 1.0], &mut y);
        assert_eq!(y, vec![2.0, -1.0, -1.0]);
        let x = vec![c(1.0, 0.0); 3];
        let mut hy = vec![c(0.0, 0.0); 3];
        h.matvec(&x, &mut hy);
        // -i H x equals G x
        for (a, b) in hy.iter().zip(&y) {
            assert!(((-Complex64::i()) * a - b).norm() < 1e-15);
        }
        let bad = SparseOperator::from_triplets(2, vec![(0, 1, c(1.0, 0.0))]);
        assert!(hermiticity_defect(&bad) > 0.9);
        assert!(bad.to_real_generator().is_err());
    }

    #[test]
    fn spectral_radius_of_known_matrix() {
        // eigenvalues of the path graph on 4 vertices: 2cos(kπ/5)
        let mut trip = Vec::new();
        for i in 0..3 {
            trip.push((i, i + 1, 1.0));
            trip.push((i + 1, i, 1.0));
        }
        let a = Csr::<f64>::from_triplets(4, trip);
        let rho = spectral_radius(&a, 500);
        let want = 2.0 * (std::f64::consts::PI / 5.0).cos();
        assert!((rho - want).abs() < 1e-8, "{rho} vs {want}");
    }
}
