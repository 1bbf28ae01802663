//! Character-theoretic tools over finite groups given by their unitaries and
//! natural-representation superoperators.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{CharbError, Result};
use crate::liouville::{max_abs_diff, CMatrix, CVector, Superoperator, ONE};

/// A finite group presented through its elements' unitaries and superoperators.
pub trait FiniteRep {
    fn order(&self) -> usize;
    fn hilbert_dim(&self) -> usize;
    fn unitary(&self, k: usize) -> &CMatrix;
    fn superop(&self, k: usize) -> &Superoperator;
}

/// A subset of a parent group's elements viewed as a group in its own right.
pub struct SubgroupView<'a, G: FiniteRep + ?Sized> {
    pub parent: &'a G,
    pub indices: &'a [usize],
}

impl<G: FiniteRep + ?Sized> FiniteRep for SubgroupView<'_, G> {
    fn order(&self) -> usize {
        self.indices.len()
    }
    fn hilbert_dim(&self) -> usize {
        self.parent.hilbert_dim()
    }
    fn unitary(&self, k: usize) -> &CMatrix {
        self.parent.unitary(self.indices[k])
    }
    fn superop(&self, k: usize) -> &Superoperator {
        self.parent.superop(self.indices[k])
    }
}

/// Pairwise summation of `f(0) + … + f(n-1)`; the grouping depends only on `n`,
/// so results are reproducible and rounding grows as O(log n).
pub fn pairwise_sum<F>(n: usize, f: &F) -> CMatrix
where
    F: Fn(usize) -> CMatrix,
{
    fn rec<F: Fn(usize) -> CMatrix>(lo: usize, hi: usize, f: &F) -> CMatrix {
        if hi - lo == 1 {
            return f(lo);
        }
        let mid = lo + (hi - lo) / 2;
        rec(lo, mid, f) + rec(mid, hi, f)
    }
    assert!(n > 0, "pairwise_sum over an empty range");
    rec(0, n, f)
}

/// Kahan–Babuška compensated accumulator for complex scalars.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: Complex64,
    comp: Complex64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: Complex64) {
        let (sr, cr) = neumaier(self.sum.re, self.comp.re, x.re);
        let (si, ci) = neumaier(self.sum.im, self.comp.im, x.im);
        self.sum = Complex64::new(sr, si);
        self.comp = Complex64::new(cr, ci);
    }
    pub fn value(&self) -> Complex64 {
        self.sum + self.comp
    }
}

fn neumaier(sum: f64, comp: f64, x: f64) -> (f64, f64) {
    let t = sum + x;
    let c = if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
    (t, comp + c)
}

/// `|Tr U|²`, the character of the natural representation.
pub fn natural_character<G: FiniteRep + ?Sized>(group: &G) -> Vec<Complex64> {
    (0..group.order())
        .map(|k| Complex64::new(group.unitary(k).trace().norm_sqr(), 0.0))
        .collect()
}

/// `P̂ = (dim/|G|) Σ χ*(g) Ĝ`, verified to be an orthogonal projector.
pub fn projector_from_character<G: FiniteRep + ?Sized>(
    group: &G,
    character: &[Complex64],
    irrep_dim: usize,
) -> Result<Superoperator> {
    let n = group.order();
    if character.len() != n {
        return Err(CharbError::Dimension("character length differs from group order".into()));
    }
    let sum = pairwise_sum(n, &|k| group.superop(k).matrix() * character[k].conj());
    let p = sum * Complex64::new(irrep_dim as f64 / n as f64, 0.0);
    let idem = max_abs_diff(&(&p * &p), &p);
    let herm = max_abs_diff(&p.adjoint(), &p);
    if idem > 1e-10 || herm > 1e-10 {
        return Err(CharbError::Numerical(format!(
            "character projector is not an orthogonal projector (idempotency {idem:.2e}, hermiticity {herm:.2e})"
        )));
    }
    Superoperator::from_matrix(group.hilbert_dim(), p)
}

/// `(1/|G|) Σ χ_irrep*(g) χ_rep(g)`, which must be a non-negative integer.
pub fn multiplicity_of_irrep<G: FiniteRep + ?Sized>(
    group: &G,
    rep_character: &[Complex64],
    irrep_character: &[Complex64],
) -> Result<usize> {
    let n = group.order();
    if rep_character.len() != n || irrep_character.len() != n {
        return Err(CharbError::Dimension("character length differs from group order".into()));
    }
    let mut acc = CompensatedSum::default();
    for k in 0..n {
        acc.add(irrep_character[k].conj() * rep_character[k]);
    }
    let raw = acc.value() / n as f64;
    let rounded = raw.re.round();
    if (raw - Complex64::new(rounded, 0.0)).norm() > 1e-8 || rounded < 0.0 {
        return Err(CharbError::Numerical(format!(
            "multiplicity {raw} is not a non-negative integer; inputs are not characters"
        )));
    }
    Ok(rounded as usize)
}

/// `χ(g) = Tr(V† Ĝ V)` on the first copy of an irrep.
pub fn descriptor_character<G: FiniteRep + ?Sized>(group: &G, irrep: &IrrepDescriptor) -> Vec<Complex64> {
    let v = irrep.copy_matrix(0);
    let va = v.adjoint();
    (0..group.order()).map(|k| (&va * group.superop(k).matrix() * &v).trace()).collect()
}

/// `(1/|G|) Σ |χ(g)|²`; equals one exactly for irreducible characters.
pub fn irreducibility_norm<G: FiniteRep + ?Sized>(group: &G, character: &[Complex64]) -> f64 {
    let mut acc = CompensatedSum::default();
    for c in character.iter().take(group.order()) {
        acc.add(Complex64::new(c.norm_sqr(), 0.0));
    }
    acc.value().re / group.order() as f64
}

/// `(1/|G|) Σ Ĝ† Λ̂ Ĝ`.
pub fn exact_twirl<G: FiniteRep + ?Sized>(channel: &Superoperator, group: &G) -> Superoperator {
    let n = group.order();
    let l = channel.matrix();
    let sum = pairwise_sum(n, &|k| {
        let g = group.superop(k).matrix();
        g.adjoint() * l * g
    });
    Superoperator::from_matrix(channel.dim(), sum * Complex64::new(1.0 / n as f64, 0.0))
        .expect("twirl keeps the dimension")
}

/// One irreducible representation inside `H ⊗ H*`, with an orthonormal basis
/// for each of its copies. Bases of different copies are aligned so that every
/// group element has the same matrix on each copy.
#[derive(Debug, Clone)]
pub struct IrrepDescriptor {
    pub id: String,
    pub dim: usize,
    pub multiplicity: usize,
    pub copy_bases: Vec<Vec<CVector>>,
}

impl IrrepDescriptor {
    pub fn new(id: impl Into<String>, copy_bases: Vec<Vec<CVector>>) -> Result<Self> {
        let id = id.into();
        let multiplicity = copy_bases.len();
        if multiplicity == 0 {
            return Err(CharbError::InvalidInput(format!("irrep {id} has no copies")));
        }
        let dim = copy_bases[0].len();
        if dim == 0 || copy_bases.iter().any(|c| c.len() != dim) {
            return Err(CharbError::InvalidInput(format!("irrep {id} copies have inconsistent dimensions")));
        }
        Ok(Self { id, dim, multiplicity, copy_bases })
    }

    /// Basis of copy `j` as the columns of a `d² × dim` matrix.
    pub fn copy_matrix(&self, j: usize) -> CMatrix {
        let cols = &self.copy_bases[j];
        CMatrix::from_columns(cols)
    }
}

/// Checks orthonormality of all bases together, that they span `H ⊗ H*`, and
/// that aligned copies intertwine for the supplied group elements.
pub fn check_descriptors(irreps: &[IrrepDescriptor], sample: &[&Superoperator]) -> Result<()> {
    let cols: Vec<CVector> = irreps
        .iter()
        .flat_map(|ir| ir.copy_bases.iter().flatten().cloned())
        .collect();
    let Some(first) = cols.first() else {
        return Err(CharbError::InvalidInput("no irreps supplied".into()));
    };
    let d2 = first.len();
    if cols.len() != d2 {
        return Err(CharbError::InvalidInput(format!(
            "irrep bases cover {} dimensions, expected {d2}",
            cols.len()
        )));
    }
    let b = CMatrix::from_columns(&cols);
    let gram = b.adjoint() * &b;
    let dev = max_abs_diff(&gram, &CMatrix::identity(d2, d2));
    if dev > 1e-10 {
        return Err(CharbError::InvalidInput(format!("irrep bases are not orthonormal (deviation {dev:.2e})")));
    }
    for ir in irreps {
        let v0 = ir.copy_matrix(0);
        for g in sample {
            let m0 = v0.adjoint() * g.matrix() * &v0;
            for j in 0..ir.multiplicity {
                let vj = ir.copy_matrix(j);
                let gv = g.matrix() * &vj;
                let mj = vj.adjoint() * &gv;
                // invariance of the copy
                if max_abs_diff(&gv, &(&vj * &mj)) > 1e-8 {
                    return Err(CharbError::InvalidInput(format!("copy {j} of irrep {} is not invariant", ir.id)));
                }
                if max_abs_diff(&mj, &m0) > 1e-8 {
                    return Err(CharbError::InvalidInput(format!(
                        "copy {j} of irrep {} is misaligned with copy 0",
                        ir.id
                    )));
                }
            }
        }
    }
    Ok(())
}

/// The `a_i × a_i` matrices of the commutant decomposition of a twirled channel.
#[derive(Debug, Clone)]
pub struct CommutantBlocks {
    pub blocks: Vec<(String, CMatrix)>,
}

impl CommutantBlocks {
    pub fn block(&self, id: &str) -> Option<&CMatrix> {
        self.blocks.iter().find(|(k, _)| k == id).map(|(_, m)| m)
    }

    /// Eigenvalues of one block, sorted by decreasing modulus.
    pub fn eigenvalues(&self, id: &str) -> Option<Vec<Complex64>> {
        self.block(id).map(eigenvalues_sorted)
    }

    /// `⊕ Q_i ⊗ 𝟙_i` in the original Liouville basis.
    pub fn reassemble(&self, irreps: &[IrrepDescriptor], dim: usize) -> Result<Superoperator> {
        let d2 = dim * dim;
        let mut out = CMatrix::zeros(d2, d2);
        for ir in irreps {
            let q = self
                .block(&ir.id)
                .ok_or_else(|| CharbError::InvalidInput(format!("missing block {}", ir.id)))?;
            for j in 0..ir.multiplicity {
                let vj = ir.copy_matrix(j);
                for jp in 0..ir.multiplicity {
                    let vjp = ir.copy_matrix(jp);
                    out += (&vj * vjp.adjoint()) * q[(j, jp)];
                }
            }
        }
        Superoperator::from_matrix(dim, out)
    }
}

/// Eigenvalues of a small complex matrix, sorted by decreasing modulus.
pub fn eigenvalues_sorted(m: &CMatrix) -> Vec<Complex64> {
    let n = m.nrows();
    let mut ev: Vec<Complex64> = match n {
        0 => vec![],
        1 => vec![m[(0, 0)]],
        2 => {
            let tr = m[(0, 0)] + m[(1, 1)];
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            let disc = (tr * tr - det * 4.0).sqrt();
            vec![(tr + disc) / 2.0, (tr - disc) / 2.0]
        }
        _ => m.clone().schur().eigenvalues().map(|e| e.iter().cloned().collect()).unwrap_or_default(),
    };
    ev.sort_by(|a, b| b.norm().partial_cmp(&a.norm()).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

/// `Q_i[j,j′] = (1/dim) Σ_n ⟨⟨ψ_n^{ij}|Λ̂|ψ_n^{ij′}⟩⟩`: the projection of the
/// channel onto the commutant, which equals the twirl for any group whose
/// natural representation decomposes as described by `irreps`.
pub fn commutant_blocks(channel: &Superoperator, irreps: &[IrrepDescriptor]) -> Result<CommutantBlocks> {
    let d2 = channel.dim() * channel.dim();
    let mut blocks = Vec::with_capacity(irreps.len());
    for ir in irreps {
        if ir.copy_bases[0][0].len() != d2 {
            return Err(CharbError::Dimension(format!("irrep {} lives in the wrong space", ir.id)));
        }
        let mut q = CMatrix::zeros(ir.multiplicity, ir.multiplicity);
        let lv: Vec<CMatrix> = (0..ir.multiplicity).map(|jp| channel.matrix() * ir.copy_matrix(jp)).collect();
        for j in 0..ir.multiplicity {
            let vj = ir.copy_matrix(j);
            for (jp, l) in lv.iter().enumerate() {
                q[(j, jp)] = (vj.adjoint() * l).trace() / ir.dim as f64;
            }
        }
        blocks.push((ir.id.clone(), q));
    }
    Ok(CommutantBlocks { blocks })
}

/// Result of [`two_design_check`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TwoDesignReport {
    pub max_deviation_deg1: f64,
    pub max_deviation_deg2: f64,
}

fn random_complex_matrix<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(d, d, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im)
    })
}

/// Compares group averages of degree-1 and balanced degree-2 polynomials with
/// their unitary-group (Haar) values on random operators.
pub fn two_design_check<G: FiniteRep + ?Sized, R: Rng + ?Sized>(group: &G, trials: usize, rng: &mut R) -> TwoDesignReport {
    let d = group.hilbert_dim();
    let df = d as f64;
    let n = group.order();
    let id = CMatrix::identity(d, d);
    let mut dev1: f64 = 0.0;
    let mut dev2: f64 = 0.0;
    for _ in 0..trials {
        let a = random_complex_matrix(d, rng);
        let b = random_complex_matrix(d, rng);
        let c = random_complex_matrix(d, rng);
        let dmat = random_complex_matrix(d, rng);

        let avg1 = pairwise_sum(n, &|k| {
            let u = group.unitary(k);
            u * &dmat * u.adjoint()
        }) / Complex64::new(n as f64, 0.0);
        let rhs1 = &id * (dmat.trace() / df);
        dev1 = dev1.max(max_abs_diff(&avg1, &rhs1));

        let avg2 = pairwise_sum(n, &|k| {
            let u = group.unitary(k);
            let ud = u.adjoint();
            u * &a * &ud * &b * u * &c * &ud
        }) / Complex64::new(n as f64, 0.0);
        let tra = a.trace();
        let trb = b.trace();
        let trc = c.trace();
        let trac = (&a * &c).trace();
        let q = (tra * trc * df - trac) / (df * (df * df - 1.0));
        let rhs2 = (&b - &id * (trb / df)) * q + &id * (trac * trb / (df * df));
        dev2 = dev2.max(max_abs_diff(&avg2, &rhs2));
    }
    TwoDesignReport { max_deviation_deg1: dev1, max_deviation_deg2: dev2 }
}

/// Numerical decomposition of the natural representation of a finite group
/// into irreducible copies with aligned bases.
///
/// A random Hermitian element of the commutant is diagonalized; its generic
/// eigenspaces are single irreducible copies. Copies are grouped into
/// isomorphism classes by their characters and aligned with group-averaged
/// intertwiners. The trivial class, if present, is labelled `trivial`.
pub fn decompose_natural_rep<G: FiniteRep + ?Sized, R: Rng + ?Sized>(group: &G, rng: &mut R) -> Result<Vec<IrrepDescriptor>> {
    let d = group.hilbert_dim();
    let d2 = d * d;
    let n = group.order();
    let h0 = random_complex_matrix(d2, rng);
    let h = (&h0 + h0.adjoint()) * Complex64::new(0.5, 0.0);
    let t = pairwise_sum(n, &|k| {
        let g = group.superop(k).matrix();
        g * &h * g.adjoint()
    }) / Complex64::new(n as f64, 0.0);
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..d2).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let scale = eig.eigenvalues.iter().map(|x| x.abs()).fold(1.0, f64::max);

    // cluster eigenvalues into eigenspaces
    let mut spaces: Vec<CMatrix> = Vec::new();
    let mut current: Vec<CVector> = Vec::new();
    let mut last = f64::NAN;
    for &k in &order {
        let ev = eig.eigenvalues[k];
        if !current.is_empty() && (ev - last).abs() > 1e-7 * scale {
            spaces.push(CMatrix::from_columns(&current));
            current.clear();
        }
        current.push(eig.eigenvectors.column(k).into_owned());
        last = ev;
    }
    spaces.push(CMatrix::from_columns(&current));

    // characters of each copy
    let chars: Vec<Vec<Complex64>> = spaces
        .iter()
        .map(|v| (0..n).map(|g| (v.adjoint() * group.superop(g).matrix() * v).trace()).collect())
        .collect();

    let mut classes: Vec<Vec<usize>> = Vec::new();
    for (i, ci) in chars.iter().enumerate() {
        let found = classes.iter_mut().find(|cl| {
            let cj = &chars[cl[0]];
            ci.iter().zip(cj).all(|(a, b)| (a - b).norm() < 1e-6)
        });
        match found {
            Some(cl) => cl.push(i),
            None => classes.push(vec![i]),
        }
    }

    let mut out = Vec::new();
    let mut counter = 0;
    for cl in classes {
        let base = &spaces[cl[0]];
        let dim = base.ncols();
        let is_trivial = dim == 1 && chars[cl[0]].iter().all(|c| (c - ONE).norm() < 1e-8);
        let mut copies: Vec<Vec<CVector>> = vec![base.column_iter().map(|c| c.into_owned()).collect()];
        for &j in &cl[1..] {
            let vj = &spaces[j];
            let x = random_complex_matrix(dim, rng);
            let seed = vj * x * base.adjoint();
            let phi = pairwise_sum(n, &|g| {
                let s = group.superop(g).matrix();
                s * &seed * s.adjoint()
            });
            let mapped = phi * base;
            let norm = mapped.column(0).norm();
            if norm < 1e-10 {
                return Err(CharbError::Numerical("degenerate intertwiner during alignment".into()));
            }
            copies.push(mapped.column_iter().map(|c| c.into_owned() / Complex64::new(norm, 0.0)).collect());
        }
        let id = if is_trivial {
            "trivial".to_string()
        } else {
            counter += 1;
            format!("irrep{counter}")
        };
        out.push(IrrepDescriptor::new(id, copies)?);
    }
    out.sort_by_key(|ir| (ir.id != "trivial", ir.dim, ir.id.clone()));
    let sample: Vec<&Superoperator> = (0..n.min(16)).map(|k| group.superop(k)).collect();
    check_descriptors(&out, &sample)?;
    Ok(out)
}

/// Eigenvalues `λ_{i,j}` of every commutant block, keyed by irrep id.
pub fn commutant_spectrum(channel: &Superoperator, irreps: &[IrrepDescriptor]) -> Result<Vec<(String, Vec<Complex64>)>> {
    let blocks = commutant_blocks(channel, irreps)?;
    Ok(blocks
        .blocks
        .iter()
        .map(|(id, q)| (id.clone(), eigenvalues_sorted(q)))
        .collect())
}

/// Column vector helper used by catalogs.
pub fn normalized(v: CVector) -> CVector {
    let n = v.norm();
    if n == 0.0 {
        v
    } else {
        v / Complex64::new(n, 0.0)
    }
}

