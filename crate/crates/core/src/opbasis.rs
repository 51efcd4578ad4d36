//! Truncated operator basis `|m; n⟩`.
//!
//! A state pairs the impurity index `m ∈ {0,1,2,3}` with boson occupations
//! `n_{j,α}` on `N_tr` sites and three flavors. Site `j` admits the triples
//! with `n_{j,x} + n_{j,y} + n_{j,z} < n_max(j)`, listed lexicographically.
//! Global ids are mixed-radix over `(m, site 1, site 2, ...)`, impurity major.
//!
//! A basis is either the full constrained product space or a sorted subset of
//! it (see [`Basis::from_full_ids`]), in which case ids are positions in the
//! subset.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{param, Error, Result};

/// Default cap on the number of basis states held in memory.
pub const DEFAULT_MAX_STATES: u64 = 1 << 28;

/// Flavor labels of the three boson modes per site.
pub const FLAVORS: [char; 3] = ['x', 'y', 'z'];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruncationSpec {
    pub n_max: Vec<u32>,
}

impl TruncationSpec {
    pub fn new(n_max: Vec<u32>) -> Result<Self> {
        if n_max.is_empty() {
            return Err(param("n_max", "at least one site is required"));
        }
        if let Some(pos) = n_max.iter().position(|&c| c == 0) {
            return Err(param(
                "n_max",
                format!("entry {} must be at least 1", pos + 1),
            ));
        }
        if n_max.iter().any(|&c| c > u16::MAX as u32) {
            return Err(param(
                "n_max",
                format!("entries above {} are not supported", u16::MAX),
            ));
        }
        Ok(Self { n_max })
    }

    pub fn n_tr(&self) -> usize {
        self.n_max.len()
    }

    /// `4 · Π_j C(n_max(j)+2, 3)`, saturating far above any usable size.
    pub fn full_size(&self) -> u128 {
        self.n_max
            .iter()
            .fold(4u128, |acc, &c| acc.saturating_mul(site_count(c) as u128))
    }
}

/// Number of triples with `a + b + c' < c`, i.e. `C(c+2, 3)`.
pub fn site_count(c: u32) -> u64 {
    let c = c as u64;
    c * (c + 1) * (c + 2) / 6
}

pub type Occupation = [u16; 3];

/// Admitted occupation triples of one site in lexicographic order.
#[derive(Clone, Debug)]
pub struct SiteSpace {
    pub n_max: u32,
    triples: Vec<Occupation>,
}

impl SiteSpace {
    pub fn new(n_max: u32) -> Self {
        let c = n_max as u16;
        let mut triples = Vec::with_capacity(site_count(n_max) as usize);
        for a in 0..c {
            for b in 0..c - a {
                for z in 0..c - a - b {
                    triples.push([a, b, z]);
                }
            }
        }
        Self { n_max, triples }
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    #[inline]
    pub fn triple(&self, idx: usize) -> Occupation {
        self.triples[idx]
    }

    /// Closed-form position of an admitted triple.
    #[inline]
    pub fn index(&self, occ: Occupation) -> usize {
        let c = self.n_max as usize;
        let (a, b, z) = (occ[0] as usize, occ[1] as usize, occ[2] as usize);
        debug_assert!(a + b + z < c);
        // Σ_{a'<a} T2(c - a') with T2(r) = r(r+1)/2
        let head = tri_sum(c) - tri_sum(c - a);
        let r = c - a;
        head + b * r - b * b.saturating_sub(1) / 2 + z
    }

    #[inline]
    pub fn admits(&self, occ: Occupation) -> bool {
        (occ[0] as u32 + occ[1] as u32 + occ[2] as u32) < self.n_max
    }
}

/// `Σ_{r=1}^{c} r(r+1)/2 = c(c+1)(c+2)/6`.
#[inline]
fn tri_sum(c: usize) -> usize {
    c * (c + 1) * (c + 2) / 6
}

/// Removes one boson of flavor `alpha`; amplitude `√n`.
#[inline]
pub fn lower_triple(occ: Occupation, alpha: usize) -> Option<(Occupation, f64)> {
    let n = occ[alpha];
    if n == 0 {
        return None;
    }
    let mut out = occ;
    out[alpha] = n - 1;
    Some((out, (n as f64).sqrt()))
}

/// Adds one boson of flavor `alpha` if the site stays below `n_max`;
/// amplitude `√(n+1)`.
#[inline]
pub fn raise_triple(occ: Occupation, alpha: usize, n_max: u32) -> Option<(Occupation, f64)> {
    let total = occ[0] as u32 + occ[1] as u32 + occ[2] as u32;
    if total + 1 >= n_max {
        return None;
    }
    let mut out = occ;
    out[alpha] += 1;
    Some((out, (out[alpha] as f64).sqrt()))
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BasisState {
    pub m: u8,
    /// `occ[j][α]` for 0-based site `j`.
    pub occ: Vec<Occupation>,
}

impl BasisState {
    pub fn total_bosons(&self) -> u32 {
        self.occ.iter().flatten().map(|&n| n as u32).sum()
    }
}

fn check_mode(occ: &[Occupation], j: usize, alpha: usize) -> Result<()> {
    if j >= occ.len() {
        return Err(param(
            "site",
            format!("{} out of range 1..={}", j + 1, occ.len()),
        ));
    }
    if alpha >= 3 {
        return Err(param("flavor", format!("{alpha} out of range 0..3")));
    }
    Ok(())
}

/// Annihilates one boson in mode `(j, α)` (0-based site). `Ok(None)` means
/// the mode is empty.
pub fn lower(occ: &[Occupation], j: usize, alpha: usize) -> Result<Option<(Vec<Occupation>, f64)>> {
    check_mode(occ, j, alpha)?;
    Ok(lower_triple(occ[j], alpha).map(|(t, amp)| {
        let mut out = occ.to_vec();
        out[j] = t;
        (out, amp)
    }))
}

/// Creates one boson in mode `(j, α)`. `Ok(None)` means the truncation rule
/// `Σ_α n_{j,α} < n_max(j)` would be violated.
pub fn raise(
    occ: &[Occupation],
    j: usize,
    alpha: usize,
    trunc: &TruncationSpec,
) -> Result<Option<(Vec<Occupation>, f64)>> {
    check_mode(occ, j, alpha)?;
    if occ.len() != trunc.n_tr() {
        return Err(param("occ", "length differs from the truncation spec"));
    }
    Ok(raise_triple(occ[j], alpha, trunc.n_max[j]).map(|(t, amp)| {
        let mut out = occ.to_vec();
        out[j] = t;
        (out, amp)
    }))
}

/// Indexed, immutable operator basis.
#[derive(Clone, Debug)]
pub struct Basis {
    pub trunc: TruncationSpec,
    sites: Vec<SiteSpace>,
    /// Weight of site `j` in the full id.
    strides: Vec<u64>,
    impurity_stride: u64,
    full_size: u64,
    subset: Option<Subset>,
}

#[derive(Clone, Debug)]
struct Subset {
    /// Sorted full ids of the admitted states.
    ids: Vec<u64>,
    /// Full id → compact id, `u32::MAX` if absent. Only built when the full
    /// space is small enough.
    dense: Option<Vec<u32>>,
}

const DENSE_MAP_LIMIT: u64 = 1 << 27;
const ABSENT: u32 = u32::MAX;

impl Basis {
    /// Full constrained product space.
    pub fn enumerate(trunc: &TruncationSpec) -> Result<Self> {
        Self::enumerate_with_limit(trunc, DEFAULT_MAX_STATES)
    }

    pub fn enumerate_with_limit(trunc: &TruncationSpec, max_states: u64) -> Result<Self> {
        let full = trunc.full_size();
        if full > max_states as u128 {
            return Err(Error::Capacity {
                what: "basis states",
                required: full,
                limit: max_states as u128,
            });
        }
        Ok(Self::skeleton(trunc, full as u64))
    }

    /// Index structure without size limit; states are produced on demand.
    /// Used to run a reachability search over a space too large to hold.
    pub(crate) fn skeleton(trunc: &TruncationSpec, full_size: u64) -> Self {
        let sites: Vec<SiteSpace> = trunc.n_max.iter().map(|&c| SiteSpace::new(c)).collect();
        let mut strides = vec![0u64; sites.len()];
        let mut w = 1u64;
        for j in (0..sites.len()).rev() {
            strides[j] = w;
            w *= sites[j].len() as u64;
        }
        Self {
            trunc: trunc.clone(),
            sites,
            strides,
            impurity_stride: w,
            full_size,
            subset: None,
        }
    }

    /// Restricts the full space to the given full ids (sorted ascending,
    /// no duplicates).
    pub fn from_full_ids(trunc: &TruncationSpec, ids: Vec<u64>) -> Result<Self> {
        let full = trunc.full_size();
        if full > u64::MAX as u128 {
            return Err(Error::Capacity {
                what: "full basis index",
                required: full,
                limit: u64::MAX as u128,
            });
        }
        if ids.len() as u64 >= ABSENT as u64 {
            return Err(Error::Capacity {
                what: "basis states",
                required: ids.len() as u128,
                limit: ABSENT as u128,
            });
        }
        if ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(param("ids", "must be strictly increasing"));
        }
        if ids.last().is_some_and(|&x| x as u128 >= full) {
            return Err(param("ids", "id outside the full basis"));
        }
        let mut basis = Self::skeleton(trunc, full as u64);
        let dense = (basis.full_size <= DENSE_MAP_LIMIT).then(|| {
            let mut map = vec![ABSENT; basis.full_size as usize];
            for (k, &id) in ids.iter().enumerate() {
                map[id as usize] = k as u32;
            }
            map
        });
        basis.subset = Some(Subset { ids, dense });
        Ok(basis)
    }

    pub fn len(&self) -> usize {
        match &self.subset {
            Some(s) => s.ids.len(),
            None => self.full_size as usize,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn full_size(&self) -> u64 {
        self.full_size
    }

    pub fn is_full(&self) -> bool {
        self.subset.is_none()
    }

    pub fn n_tr(&self) -> usize {
        self.sites.len()
    }

    pub fn site(&self, j: usize) -> &SiteSpace {
        &self.sites[j]
    }

    #[inline]
    pub fn full_id_of(&self, id: usize) -> u64 {
        match &self.subset {
            Some(s) => s.ids[id],
            None => id as u64,
        }
    }

    #[inline]
    pub fn id_of_full(&self, full: u64) -> Option<usize> {
        match &self.subset {
            None => (full < self.full_size).then_some(full as usize),
            Some(s) => match &s.dense {
                Some(map) => {
                    let k = *map.get(full as usize)?;
                    (k != ABSENT).then_some(k as usize)
                }
                None => s.ids.binary_search(&full).ok(),
            },
        }
    }

    /// Splits a full id into the impurity index and per-site local indices.
    #[inline]
    pub fn decode_full(&self, full: u64, locals: &mut [usize]) -> u8 {
        let m = full / self.impurity_stride;
        let mut rest = full % self.impurity_stride;
        for (j, l) in locals.iter_mut().enumerate() {
            *l = (rest / self.strides[j]) as usize;
            rest %= self.strides[j];
        }
        m as u8
    }

    #[inline]
    pub fn encode_full(&self, m: u8, locals: &[usize]) -> u64 {
        let mut id = m as u64 * self.impurity_stride;
        for (j, &l) in locals.iter().enumerate() {
            id += l as u64 * self.strides[j];
        }
        id
    }

    #[inline]
    pub fn impurity_stride(&self) -> u64 {
        self.impurity_stride
    }

    #[inline]
    pub fn site_stride(&self, j: usize) -> u64 {
        self.strides[j]
    }

    pub fn state(&self, id: usize) -> BasisState {
        let mut locals = vec![0usize; self.n_tr()];
        let m = self.decode_full(self.full_id_of(id), &mut locals);
        BasisState {
            m,
            occ: locals
                .iter()
                .enumerate()
                .map(|(j, &l)| self.sites[j].triple(l))
                .collect(),
        }
    }

    pub fn index(&self, state: &BasisState) -> Option<usize> {
        if state.m > 3 || state.occ.len() != self.n_tr() {
            return None;
        }
        let mut locals = Vec::with_capacity(self.n_tr());
        for (j, &t) in state.occ.iter().enumerate() {
            if !self.sites[j].admits(t) {
                return None;
            }
            locals.push(self.sites[j].index(t));
        }
        self.id_of_full(self.encode_full(state.m, &locals))
    }

    /// Id of `|3; 0⟩`.
    pub fn seed_state(&self) -> Result<usize> {
        let seed = BasisState {
            m: 3,
            occ: vec![[0; 3]; self.n_tr()],
        };
        self.index(&seed)
            .ok_or_else(|| Error::Internal("seed state |3;0> missing from the basis".into()))
    }

    pub fn iter(&self) -> impl Iterator<Item = BasisState> + '_ {
        (0..self.len()).map(|id| self.state(id))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(&mut std::io::BufReader::new(file))
    }

    /// Binary cache: magic, format version, ordering tag, `n_max` list,
    /// state count, then the sorted full ids (subset) or nothing (full space).
    /// All integers little-endian.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(&ORDERING_IMPURITY_MAJOR_LEX.to_le_bytes())?;
        w.write_all(&(self.n_tr() as u32).to_le_bytes())?;
        for &c in &self.trunc.n_max {
            w.write_all(&c.to_le_bytes())?;
        }
        let kind: u8 = if self.is_full() { 0 } else { 1 };
        w.write_all(&[kind])?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        if let Some(s) = &self.subset {
            for &id in &s.ids {
                w.write_all(&id.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Parse("not a basis cache file".into()));
        }
        let version = read_u32(r)?;
        if version != CACHE_VERSION {
            return Err(Error::Parse(format!(
                "unsupported basis cache version {version}"
            )));
        }
        let ordering = read_u32(r)?;
        if ordering != ORDERING_IMPURITY_MAJOR_LEX {
            return Err(Error::Parse(format!("unknown ordering tag {ordering}")));
        }
        let n_tr = read_u32(r)? as usize;
        if n_tr == 0 || n_tr > 4096 {
            return Err(Error::Parse(format!("implausible site count {n_tr}")));
        }
        let n_max = (0..n_tr).map(|_| read_u32(r)).collect::<Result<Vec<_>>>()?;
        let trunc = TruncationSpec::new(n_max)?;
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind)?;
        let count = read_u64(r)?;
        match kind[0] {
            0 => {
                if count as u128 != trunc.full_size() {
                    return Err(Error::Parse("state count does not match n_max".into()));
                }
                Ok(Self::skeleton(&trunc, count))
            }
            1 => {
                let mut buf = vec![0u8; 8 * count as usize];
                r.read_exact(&mut buf)?;
                let ids = buf
                    .chunks_exact(8)
                    .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                Self::from_full_ids(&trunc, ids)
            }
            k => Err(Error::Parse(format!("unknown basis kind {k}"))),
        }
    }

    /// Sorted full ids (subset) or `None` for the full space.
    pub fn subset_ids(&self) -> Option<&[u64]> {
        self.subset.as_ref().map(|s| s.ids.as_slice())
    }
}

impl PartialEq for Basis {
    fn eq(&self, other: &Self) -> bool {
        self.trunc == other.trunc && self.subset_ids() == other.subset_ids()
    }
}

const CACHE_MAGIC: &[u8; 8] = b"CSMBASIS";
const CACHE_VERSION: u32 = 1;
const ORDERING_IMPURITY_MAJOR_LEX: u32 = 1;

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
