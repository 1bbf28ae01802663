use std::collections::HashMap;

use num_complex::Complex64;

use crate::error::{CharbError, Result};
use crate::liouville::{is_unitary, unitary_to_super_unchecked, CMatrix, HermitianFrame, Superoperator};
use crate::reptheory::{check_descriptors, exact_twirl, FiniteRep, IrrepDescriptor};

/// Global-phase representative: the first entry of (near-)maximal modulus is
/// made real and positive.
pub fn canonical_phase(u: &CMatrix) -> CMatrix {
    let max = u.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let (r, c) = (0..u.nrows())
        .flat_map(|r| (0..u.ncols()).map(move |c| (r, c)))
        .find(|&(r, c)| u[(r, c)].norm() >= max - 1e-9)
        .expect("nonempty matrix");
    let z = u[(r, c)];
    u * (z.conj() / z.norm())
}

fn phase_key(u: &CMatrix) -> Vec<i64> {
    u.iter()
        .flat_map(|z| [(z.re * 1e6).round() as i64, (z.im * 1e6).round() as i64])
        .collect()
}

/// Whether two unitaries agree up to a global phase.
pub fn equal_up_to_phase(a: &CMatrix, b: &CMatrix) -> bool {
    let d = a.nrows() as f64;
    (a.adjoint() * b).trace().norm() / d > 1.0 - 1e-12
}

/// A finite unitary group stored modulo global phase, with its Cayley table
/// and real transfer matrices in the standard Hermitian frame.
#[derive(Debug, Clone)]
pub struct FiniteGroup {
    name: String,
    dim: usize,
    unitaries: Vec<CMatrix>,
    superops: Vec<Superoperator>,
    table: Vec<u32>,
    inverses: Vec<u32>,
    identity: usize,
    keys: HashMap<Vec<i64>, usize>,
    frame: HermitianFrame,
    transfers: Vec<Vec<f64>>,
    irreps: Vec<IrrepDescriptor>,
}

impl FiniteGroup {
    /// Builds a group from a list assumed closed; duplicates up to phase are
    /// merged and closure is verified.
    pub fn from_unitaries(name: &str, unitaries: Vec<CMatrix>) -> Result<Self> {
        let first = unitaries.first().ok_or_else(|| CharbError::InvalidInput("empty group".into()))?;
        let dim = first.nrows();
        let mut elems: Vec<CMatrix> = Vec::new();
        let mut keys = HashMap::new();
        for u in unitaries {
            if u.nrows() != dim || !is_unitary(&u, 1e-9) {
                return Err(CharbError::InvalidInput("group element is not a unitary of the common dimension".into()));
            }
            let c = canonical_phase(&u);
            if lookup(&keys, &elems, &c).is_none() {
                keys.insert(phase_key(&c), elems.len());
                elems.push(c);
            }
        }
        Self::build(name, dim, elems, keys)
    }

    /// Closure of `generators` under multiplication, failing beyond `bound` elements.
    pub fn from_generators(name: &str, generators: &[CMatrix], bound: usize) -> Result<Self> {
        let first = generators.first().ok_or_else(|| CharbError::InvalidInput("no generators".into()))?;
        let dim = first.nrows();
        let gens: Vec<CMatrix> = generators.iter().map(canonical_phase).collect();
        let id = CMatrix::identity(dim, dim);
        let mut elems = vec![id.clone()];
        let mut keys = HashMap::from([(phase_key(&id), 0usize)]);
        let mut frontier = vec![0usize];
        while let Some(k) = frontier.pop() {
            for g in &gens {
                let c = canonical_phase(&(g * &elems[k]));
                if lookup(&keys, &elems, &c).is_none() {
                    if elems.len() >= bound {
                        return Err(CharbError::Numerical(format!(
                            "closure of {name} exceeds {bound} elements; phase handling is broken"
                        )));
                    }
                    keys.insert(phase_key(&c), elems.len());
                    frontier.push(elems.len());
                    elems.push(c);
                }
            }
        }
        Self::build(name, dim, elems, keys)
    }

    fn build(name: &str, dim: usize, elems: Vec<CMatrix>, keys: HashMap<Vec<i64>, usize>) -> Result<Self> {
        let n = elems.len();
        let mut table = vec![0u32; n * n];
        for a in 0..n {
            for b in 0..n {
                let c = canonical_phase(&(&elems[a] * &elems[b]));
                let k = lookup(&keys, &elems, &c).ok_or_else(|| {
                    CharbError::Numerical(format!("{name} is not closed under multiplication"))
                })?;
                table[a * n + b] = k as u32;
            }
        }
        let id = CMatrix::identity(dim, dim);
        let identity = lookup(&keys, &elems, &id)
            .ok_or_else(|| CharbError::Numerical(format!("{name} does not contain the identity")))?;
        let inverses = (0..n)
            .map(|a| {
                (0..n)
                    .find(|&b| table[a * n + b] as usize == identity)
                    .map(|b| b as u32)
                    .ok_or_else(|| CharbError::Numerical(format!("{name}: element without inverse")))
            })
            .collect::<Result<Vec<_>>>()?;
        let superops: Vec<Superoperator> = elems.iter().map(unitary_to_super_unchecked).collect();
        let frame = HermitianFrame::standard(dim);
        let transfers = superops.iter().map(|s| frame.transfer_matrix(s)).collect();
        Ok(Self {
            name: name.to_string(),
            dim,
            unitaries: elems,
            superops,
            table,
            inverses,
            identity,
            keys,
            frame,
            transfers,
            irreps: Vec::new(),
        })
    }

    /// Attaches an irrep decomposition after checking it against every element.
    pub fn with_irreps(mut self, irreps: Vec<IrrepDescriptor>) -> Result<Self> {
        let sample: Vec<&Superoperator> = self.superops.iter().collect();
        check_descriptors(&irreps, &sample)?;
        self.irreps = irreps;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.unitaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unitaries.is_empty()
    }

    pub fn identity_index(&self) -> usize {
        self.identity
    }

    /// Index of `U_a U_b`.
    #[inline]
    pub fn product(&self, a: usize, b: usize) -> usize {
        self.table[a * self.len() + b] as usize
    }

    #[inline]
    pub fn inverse(&self, a: usize) -> usize {
        self.inverses[a] as usize
    }

    pub fn find(&self, u: &CMatrix) -> Option<usize> {
        if u.nrows() != self.dim {
            return None;
        }
        lookup(&self.keys, &self.unitaries, &canonical_phase(u))
    }

    pub fn frame(&self) -> &HermitianFrame {
        &self.frame
    }

    /// Real transfer matrix of element `k` in the standard frame.
    pub fn transfer(&self, k: usize) -> &[f64] {
        &self.transfers[k]
    }

    pub fn irreps(&self) -> &[IrrepDescriptor] {
        &self.irreps
    }

    pub fn twirl(&self, channel: &Superoperator) -> Superoperator {
        exact_twirl(channel, self)
    }

    /// `(1/|G|) Σ f(g)` with compensated accumulation.
    pub fn mean_over<F: Fn(usize) -> Complex64>(&self, f: F) -> Complex64 {
        let mut acc = crate::reptheory::CompensatedSum::default();
        for k in 0..self.len() {
            acc.add(f(k));
        }
        acc.value() / self.len() as f64
    }
}

fn lookup(keys: &HashMap<Vec<i64>, usize>, elems: &[CMatrix], canon: &CMatrix) -> Option<usize> {
    if let Some(&k) = keys.get(&phase_key(canon)) {
        if equal_up_to_phase(&elems[k], canon) {
            return Some(k);
        }
    }
    elems.iter().position(|e| equal_up_to_phase(e, canon))
}

impl FiniteRep for FiniteGroup {
    fn order(&self) -> usize {
        self.len()
    }
    fn hilbert_dim(&self) -> usize {
        self.dim
    }
    fn unitary(&self, k: usize) -> &CMatrix {
        &self.unitaries[k]
    }
    fn superop(&self, k: usize) -> &Superoperator {
        &self.superops[k]
    }
}
