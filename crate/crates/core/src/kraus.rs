//! Single-deletion and single-insertion channels in Kraus form.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    gram_schmidt, DensityMatrix, Operator, QuantumState, QuditDims, StateVector, C64, ONE, ZERO,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ErrorKind {
    Deletion,
    Insertion,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::Deletion => "deletion",
            ErrorKind::Insertion => "insertion",
        })
    }
}

/// Identifies one Kraus operator. Positions are 1-based.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum KrausLabel {
    Delete { position: usize, symbol: u8 },
    /// `symbol` indexes the eigenvector `|phi_b>` of the inserted state.
    Insert { position: usize, symbol: u8 },
    Named(String),
}

impl fmt::Display for KrausLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KrausLabel::Delete { position, symbol } => write!(f, "D(p={position},b={symbol})"),
            KrausLabel::Insert { position, symbol } => write!(f, "I(p={position},b={symbol})"),
            KrausLabel::Named(s) => f.write_str(s),
        }
    }
}

/// Probability of the error hitting each position.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionDistribution {
    weights: Vec<f64>,
}

impl PositionDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("no positions".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidDistribution(format!("weight {w}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!("weights sum to {sum}")));
        }
        Ok(Self { weights })
    }

    pub fn uniform(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidDistribution("no positions".into()));
        }
        Self::new(vec![1.0 / len as f64; len])
    }

    /// All weight on the 1-based `position`.
    pub fn one_hot(len: usize, position: usize) -> Result<Self> {
        if position == 0 || position > len {
            return Err(Error::InvalidDistribution(format!(
                "position {position} outside 1..={len}"
            )));
        }
        let mut w = vec![0.0; len];
        w[position - 1] = 1.0;
        Self::new(w)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Weight of the 1-based `position`.
    pub fn at(&self, position: usize) -> f64 {
        self.weights[position - 1]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Single-qudit state `sigma = sum_b p_b |phi_b><phi_b|` with `U|b> = |phi_b>`.
#[derive(Clone, Debug)]
pub struct InsertedState {
    sigma: DensityMatrix,
    probs: Vec<f64>,
    unitary: DMatrix<C64>,
}

impl InsertedState {
    /// Diagonal state in the computational basis, `U = I`.
    pub fn from_probabilities(probs: &[f64]) -> Result<Self> {
        let l = probs.len();
        Self::new(probs.to_vec(), DMatrix::identity(l, l))
    }

    pub fn new(probs: Vec<f64>, unitary: DMatrix<C64>) -> Result<Self> {
        let l = probs.len();
        let dims = QuditDims::new(l, 1)?;
        if unitary.nrows() != l || unitary.ncols() != l {
            return Err(Error::InvalidInsertedState(format!(
                "{}x{} eigenbasis for l = {l}",
                unitary.nrows(),
                unitary.ncols()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidInsertedState(format!("probability {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInsertedState(format!(
                "probabilities sum to {sum}"
            )));
        }
        let dev = (unitary.adjoint() * &unitary - DMatrix::<C64>::identity(l, l))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if dev > 1e-10 {
            return Err(Error::InvalidInsertedState(format!(
                "eigenbasis not unitary (deviation {dev:e})"
            )));
        }
        let diag = DMatrix::from_fn(l, l, |r, c| if r == c { C64::new(probs[r], 0.0) } else { ZERO });
        let sigma = DensityMatrix::from_matrix(dims, &unitary * diag * unitary.adjoint())?;
        Ok(Self {
            sigma,
            probs,
            unitary,
        })
    }

    /// Spectral decomposition of a single-qudit density matrix.
    ///
    /// Eigenvalues are sorted in descending order. Within every eigenspace the
    /// basis is obtained by projecting `|0>, |1>, ...` onto the eigenspace and
    /// orthonormalizing, which also fixes the phase of each eigenvector.
    pub fn from_density(sigma: &DensityMatrix) -> Result<Self> {
        let dims = sigma.dims();
        if dims.n() != 1 {
            return Err(Error::InvalidInsertedState(format!(
                "sigma must be a single qudit, got {} particles",
                dims.n()
            )));
        }
        sigma
            .validate(1e-10)
            .map_err(|e| Error::InvalidInsertedState(e.to_string()))?;
        let l = dims.l();
        let eig = SymmetricEigen::new(sigma.matrix().clone());
        let mut order: Vec<usize> = (0..l).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

        const DEGENERACY_TOL: f64 = 1e-9;
        let mut probs = Vec::with_capacity(l);
        let mut columns: Vec<StateVector> = Vec::with_capacity(l);
        let mut start = 0;
        while start < l {
            let lead = eig.eigenvalues[order[start]];
            let mut end = start + 1;
            while end < l && (lead - eig.eigenvalues[order[end]]).abs() <= DEGENERACY_TOL {
                end += 1;
            }
            let group: Vec<StateVector> = order[start..end]
                .iter()
                .map(|&j| StateVector::from_dvector(dims, eig.eigenvectors.column(j).into_owned()))
                .collect::<Result<_>>()?;
            let projected: Vec<StateVector> = (0..l)
                .map(|e| {
                    let basis = StateVector::basis_index(dims, e)?;
                    let mut acc = StateVector::zeros(dims);
                    for v in &group {
                        acc.add_scaled(v.inner(&basis), v)?;
                    }
                    Ok(acc)
                })
                .collect::<Result<_>>()?;
            let fam = gram_schmidt(&projected, 1e-8)?;
            if fam.len() != group.len() {
                return Err(Error::InvalidInsertedState(
                    "could not resolve a degenerate eigenspace".into(),
                ));
            }
            for v in fam.vectors() {
                probs.push(lead.max(0.0));
                columns.push(v.clone());
            }
            start = end;
        }
        // eigenvalues in a degenerate group share one value; renormalize
        // tiny negative clamps away
        let sum: f64 = probs.iter().sum();
        let probs: Vec<f64> = probs.iter().map(|p| p / sum).collect();
        let unitary = DMatrix::from_fn(l, l, |r, c| columns[c].amplitudes()[r]);
        let state = Self::new(probs, unitary)?;
        let recon = state.sigma.max_abs_diff(sigma);
        if recon > 1e-9 {
            return Err(Error::InvalidInsertedState(format!(
                "spectral reconstruction off by {recon:e}"
            )));
        }
        Ok(Self {
            sigma: sigma.clone(),
            ..state
        })
    }

    pub fn l(&self) -> usize {
        self.probs.len()
    }

    pub fn sigma(&self) -> &DensityMatrix {
        &self.sigma
    }

    pub fn eigen_probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn eigen_unitary(&self) -> &DMatrix<C64> {
        &self.unitary
    }

    /// `|phi_b> = U|b>`
    pub fn eigenvector(&self, b: usize) -> StateVector {
        let dims = QuditDims::new(self.l(), 1).expect("validated on construction");
        StateVector::from_dvector(dims, self.unitary.column(b).into_owned()).expect("column length l")
    }
}

fn check_position(p: usize, m: usize) -> Result<()> {
    if p == 0 || p > m + 1 {
        return Err(Error::OutOfRange(format!("position {p} outside 1..={}", m + 1)));
    }
    Ok(())
}

/// `I^{(x)(p-1)} (x) <b| (x) I^{(x)(m-p+1)}`, an `l^m x l^{m+1}` matrix.
pub fn deletion_operator(l: usize, p: usize, b: u8, m: usize) -> Result<Operator> {
    check_position(p, m)?;
    if b as usize >= l {
        return Err(Error::OutOfRange(format!("symbol {b} with l = {l}")));
    }
    let out = QuditDims::new(l, m)?;
    let inp = QuditDims::new(l, m + 1)?;
    let tail = QuditDims::new(l, m + 1 - p)?.size();
    let trip = (0..out.size())
        .map(|y| {
            let (hi, lo) = (y / tail, y % tail);
            (y, (hi * l + b as usize) * tail + lo, ONE)
        })
        .collect();
    Operator::from_triplets(out, inp, trip)
}

/// `I^{(x)(p-1)} (x) |phi> (x) I^{(x)(m-p+1)}`, an `l^{m+1} x l^m` matrix.
pub fn insertion_operator(p: usize, phi: &StateVector, m: usize) -> Result<Operator> {
    check_position(p, m)?;
    if phi.dims().n() != 1 {
        return Err(Error::DimensionMismatch(
            "inserted state must be a single qudit".into(),
        ));
    }
    if !phi.is_normalized(1e-10) {
        return Err(Error::NotNormalized(phi.norm()));
    }
    let l = phi.dims().l();
    let out = QuditDims::new(l, m + 1)?;
    let inp = QuditDims::new(l, m)?;
    let tail = QuditDims::new(l, m + 1 - p)?.size();
    let mut trip = Vec::with_capacity(inp.size() * l);
    for x in 0..inp.size() {
        let (hi, lo) = (x / tail, x % tail);
        for (s, amp) in phi.amplitudes().iter().enumerate() {
            trip.push(((hi * l + s) * tail + lo, x, *amp));
        }
    }
    Operator::from_triplets(out, inp, trip)
}

#[derive(Clone, Debug)]
pub struct KrausElement {
    pub label: KrausLabel,
    /// Squared scalar prefactor; the channel uses `sqrt(weight) * op`.
    pub weight: f64,
    pub op: Operator,
}

#[derive(Clone, Debug)]
pub struct KrausSet {
    in_dims: QuditDims,
    out_dims: QuditDims,
    elements: Vec<KrausElement>,
}

impl KrausSet {
    pub fn new(in_dims: QuditDims, out_dims: QuditDims, elements: Vec<KrausElement>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &elements {
            if e.op.in_dims() != in_dims || e.op.out_dims() != out_dims {
                return Err(Error::InvalidKrausSet(format!("{} has the wrong shape", e.label)));
            }
            if !e.weight.is_finite() || e.weight < 0.0 {
                return Err(Error::InvalidKrausSet(format!(
                    "{} has weight {}",
                    e.label, e.weight
                )));
            }
            if !seen.insert(&e.label) {
                return Err(Error::InvalidKrausSet(format!("duplicate label {}", e.label)));
            }
        }
        Ok(Self {
            in_dims,
            out_dims,
            elements,
        })
    }

    /// Single unweighted identity; the trivial channel.
    pub fn identity(dims: QuditDims) -> Self {
        Self {
            in_dims: dims,
            out_dims: dims,
            elements: vec![KrausElement {
                label: KrausLabel::Named("I".into()),
                weight: 1.0,
                op: Operator::identity(dims),
            }],
        }
    }

    pub fn in_dims(&self) -> QuditDims {
        self.in_dims
    }

    pub fn out_dims(&self) -> QuditDims {
        self.out_dims
    }

    pub fn elements(&self) -> &[KrausElement] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn labels(&self) -> Vec<KrausLabel> {
        self.elements.iter().map(|e| e.label.clone()).collect()
    }

    /// Same operators with every weight set to 1.
    pub fn unweighted(&self) -> KrausSet {
        let elements = self
            .elements
            .iter()
            .map(|e| KrausElement {
                weight: 1.0,
                ..e.clone()
            })
            .collect();
        KrausSet { elements, ..*self }
    }

    /// `max |sum_a w_a A_a^dagger A_a - I|`
    pub fn completeness_deviation(&self) -> f64 {
        let n = self.in_dims.size();
        let mut acc = DMatrix::<C64>::zeros(n, n);
        for e in &self.elements {
            if e.weight > 0.0 {
                acc += e.op.gram() * C64::new(e.weight, 0.0);
            }
        }
        acc -= DMatrix::<C64>::identity(n, n);
        acc.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn check_completeness(&self, tol: f64) -> Result<()> {
        let dev = self.completeness_deviation();
        if dev > tol {
            return Err(Error::InvalidKrausSet(format!(
                "completeness violated by {dev:e}"
            )));
        }
        Ok(())
    }

    /// `sum_a w_a (A_a psi)(A_a psi)^dagger`
    pub fn apply_pure(&self, psi: &StateVector) -> Result<DensityMatrix> {
        let n = self.out_dims.size();
        let mut out = DMatrix::<C64>::zeros(n, n);
        for e in self.elements.iter().filter(|e| e.weight > 0.0) {
            let img = e.op.apply(psi)?;
            let a = img.amplitudes();
            out.gerc(C64::new(e.weight, 0.0), a, a, ONE);
        }
        DensityMatrix::from_matrix(self.out_dims, out)
    }

    /// `sum_a w_a A_a rho A_a^dagger`. The indel Kraus forms are derived for
    /// pure inputs; on mixed inputs this is the same linear map, nothing more.
    pub fn apply_mixed(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.dims() != self.in_dims {
            return Err(Error::DimensionMismatch(format!(
                "state on {} qudits, channel expects {}",
                rho.dims().n(),
                self.in_dims.n()
            )));
        }
        let n = self.out_dims.size();
        let mut out = DMatrix::<C64>::zeros(n, n);
        for e in self.elements.iter().filter(|e| e.weight > 0.0) {
            e.op.sandwich_into(rho.matrix(), e.weight, &mut out);
        }
        DensityMatrix::from_matrix(self.out_dims, out)
    }

    pub fn apply_exact(&self, state: &QuantumState) -> Result<DensityMatrix> {
        match state {
            QuantumState::Pure(psi) => self.apply_pure(psi),
            QuantumState::Mixed(rho) => self.apply_mixed(rho),
        }
    }

    /// `w_a ||A_a psi||^2` for every element, in set order.
    pub fn branch_probabilities(&self, psi: &StateVector) -> Result<Vec<f64>> {
        self.elements
            .iter()
            .map(|e| Ok(e.weight * e.op.apply(psi)?.amplitudes().norm_squared()))
            .collect()
    }
}

/// Kraus set of the single-deletion channel on `n` qudits.
///
/// Elements are ordered by symbol first, then position: `(b, p)`.
pub fn build_deletion_kraus(n: usize, l: usize, dist: &PositionDistribution) -> Result<KrausSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("deletion needs at least one qudit".into()));
    }
    if dist.len() != n {
        return Err(Error::InvalidDistribution(format!(
            "{} weights for {n} positions",
            dist.len()
        )));
    }
    let mut elements = Vec::with_capacity(n * l);
    for b in 0..l as u8 {
        for p in 1..=n {
            elements.push(KrausElement {
                label: KrausLabel::Delete { position: p, symbol: b },
                weight: dist.at(p),
                op: deletion_operator(l, p, b, n - 1)?,
            });
        }
    }
    KrausSet::new(QuditDims::new(l, n)?, QuditDims::new(l, n - 1)?, elements)
}

/// Kraus set of the single-insertion channel of `inserted` into `n` qudits.
///
/// Elements are ordered by eigenvector index first, then position, so the
/// element for `(b, p)` sits at `b (n+1) + p - 1`.
pub fn build_insertion_kraus(
    n: usize,
    inserted: &InsertedState,
    dist: &PositionDistribution,
) -> Result<KrausSet> {
    if dist.len() != n + 1 {
        return Err(Error::InvalidDistribution(format!(
            "{} weights for {} positions",
            dist.len(),
            n + 1
        )));
    }
    let l = inserted.l();
    let mut elements = Vec::with_capacity((n + 1) * l);
    for b in 0..l {
        let phi = inserted.eigenvector(b);
        for p in 1..=n + 1 {
            elements.push(KrausElement {
                label: KrausLabel::Insert {
                    position: p,
                    symbol: b as u8,
                },
                weight: dist.at(p) * inserted.eigen_probs()[b],
                op: insertion_operator(p, &phi, n)?,
            });
        }
    }
    KrausSet::new(QuditDims::new(l, n)?, QuditDims::new(l, n + 1)?, elements)
}

pub fn apply_channel_exact(state: &QuantumState, ks: &KrausSet) -> Result<DensityMatrix> {
    ks.apply_exact(state)
}

/// One sampled Kraus branch.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub index: usize,
    pub label: KrausLabel,
    /// Renormalized `A_a psi`.
    pub state: StateVector,
    pub probability: f64,
}

/// Precomputed branch images for repeated sampling from one input state.
#[derive(Clone, Debug)]
pub struct TrajectorySampler {
    labels: Vec<KrausLabel>,
    images: Vec<Option<StateVector>>,
    probs: Vec<f64>,
    picker: WeightedIndex<f64>,
}

impl TrajectorySampler {
    pub fn new(ks: &KrausSet, psi: &StateVector) -> Result<Self> {
        if !psi.is_normalized(1e-9) {
            return Err(Error::NotNormalized(psi.norm()));
        }
        let mut images = Vec::with_capacity(ks.len());
        let mut probs = Vec::with_capacity(ks.len());
        for e in ks.elements() {
            let img = e.op.apply(psi)?;
            let p = e.weight * img.amplitudes().norm_squared();
            probs.push(p);
            images.push(if p > 0.0 { Some(img.normalized()?) } else { None });
        }
        let total: f64 = probs.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(Error::InvalidKrausSet("all branches have zero probability".into()));
        }
        let picker = WeightedIndex::new(&probs)
            .map_err(|e| Error::InvalidKrausSet(format!("branch weights: {e}")))?;
        Ok(Self {
            labels: ks.labels(),
            images,
            probs,
            picker,
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn branch_state(&self, index: usize) -> Option<&StateVector> {
        self.images.get(index).and_then(|s| s.as_ref())
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.picker.sample(rng)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Trajectory {
        let index = self.sample_index(rng);
        Trajectory {
            index,
            label: self.labels[index].clone(),
            state: self.images[index].clone().expect("sampled branch has weight"),
            probability: self.probs[index],
        }
    }
}

/// Samples one Kraus branch with probability `w_a ||A_a psi||^2`.
pub fn sample_trajectory(psi: &StateVector, ks: &KrausSet, seed: u64) -> Result<Trajectory> {
    let sampler = TrajectorySampler::new(ks, psi)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sampler.sample(&mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dagger;

    fn ket(l: usize, s: &str) -> StateVector {
        let digits: Vec<u8> = s.bytes().map(|b| b - b'0').collect();
        StateVector::basis(QuditDims::new(l, digits.len()).unwrap(), &digits).unwrap()
    }

    #[test]
    fn deletion_of_empty_tail_is_a_bra() {
        let d = deletion_operator(3, 1, 0, 0).unwrap();
        assert_eq!(d, Operator::bra(&ket(3, "0")));
    }

    #[test]
    fn deletion_examples() {
        let d = deletion_operator(3, 1, 0, 5).unwrap();
        assert_eq!(d.apply(&ket(3, "001122")).unwrap(), ket(3, "01122"));
        let d = deletion_operator(3, 3, 2, 5).unwrap();
        assert_eq!(d.apply(&ket(3, "112200")).unwrap(), ket(3, "11200"));
        assert!(deletion_operator(3, 7, 0, 5).is_err());
        assert!(deletion_operator(3, 0, 0, 5).is_err());
    }

    #[test]
    fn insertion_examples() {
        let i = insertion_operator(1, &ket(3, "0"), 0).unwrap();
        assert_eq!(i, Operator::ket(&ket(3, "0")));
        let i = insertion_operator(4, &ket(3, "1"), 6).unwrap();
        assert_eq!(i.apply(&ket(3, "001122")).unwrap(), ket(3, "0011122"));
        let bad = ket(3, "1").scaled(C64::new(2.0, 0.0));
        assert!(matches!(insertion_operator(1, &bad, 2), Err(Error::NotNormalized(_))));
    }

    #[test]
    fn deletion_matches_tensor_definition() {
        let l = 3;
        let id = Operator::identity(QuditDims::new(l, 1).unwrap());
        let m = 2;
        for p in 1..=m + 1 {
            for b in 0..l as u8 {
                let mut op = Operator::identity(QuditDims::new(l, 0).unwrap());
                for slot in 1..=m + 1 {
                    let factor = if slot == p {
                        Operator::bra(&ket(l, &b.to_string()))
                    } else {
                        id.clone()
                    };
                    op = op.tensor(&factor).unwrap();
                }
                assert_eq!(op, deletion_operator(l, p, b, m).unwrap());
            }
        }
    }

    #[test]
    fn insertion_is_adjoint_of_deletion() {
        for l in 2..=3 {
            for m in 0..=3 {
                for p in 1..=m + 1 {
                    for b in 0..l as u8 {
                        let ins = insertion_operator(p, &ket(l, &b.to_string()), m).unwrap();
                        assert_eq!(dagger(&ins), deletion_operator(l, p, b, m).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn deletion_set_sizes_and_completeness() {
        let ks = build_deletion_kraus(6, 3, &PositionDistribution::uniform(6).unwrap()).unwrap();
        assert_eq!(ks.len(), 18);
        assert!(ks.completeness_deviation() <= 1e-12);

        let ks = build_deletion_kraus(1, 2, &PositionDistribution::uniform(1).unwrap()).unwrap();
        assert_eq!(ks.len(), 2);
        assert_eq!(ks.elements()[0].op, Operator::bra(&ket(2, "0")));
        assert_eq!(ks.elements()[1].op, Operator::bra(&ket(2, "1")));
        assert_eq!(ks.completeness_deviation(), 0.0);

        for p in 1..=2 {
            let ks = build_deletion_kraus(2, 3, &PositionDistribution::one_hot(2, p).unwrap()).unwrap();
            assert_eq!(ks.completeness_deviation(), 0.0);
        }
    }

    #[test]
    fn insertion_set_sizes() {
        let sigma = InsertedState::from_probabilities(&[1.0 / 3.0; 3]).unwrap();
        let ks = build_insertion_kraus(6, &sigma, &PositionDistribution::uniform(7).unwrap()).unwrap();
        assert_eq!(ks.len(), 21);
        assert!(ks.completeness_deviation() <= 1e-9);

        let pure = InsertedState::from_probabilities(&[1.0, 0.0, 0.0]).unwrap();
        let ks = build_insertion_kraus(2, &pure, &PositionDistribution::uniform(3).unwrap()).unwrap();
        for e in ks.elements() {
            if let KrausLabel::Insert { symbol, .. } = e.label {
                assert_eq!(e.weight == 0.0, symbol != 0);
            }
        }

        let fig = InsertedState::from_probabilities(&[0.5, 1.0 / 3.0, 1.0 / 6.0]).unwrap();
        let ks = build_insertion_kraus(6, &fig, &PositionDistribution::one_hot(7, 4).unwrap()).unwrap();
        assert_eq!(ks.elements().iter().filter(|e| e.weight > 0.0).count(), 3);
    }

    #[test]
    fn malformed_distributions() {
        assert!(PositionDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(PositionDistribution::new(vec![1.5, -0.5]).is_err());
        assert!(PositionDistribution::one_hot(3, 4).is_err());
        let d = PositionDistribution::uniform(5).unwrap();
        assert!(build_deletion_kraus(6, 3, &d).is_err());
        assert!(InsertedState::from_probabilities(&[0.5, 0.6]).is_err());
    }

    #[test]
    fn spectral_decomposition_of_degenerate_state() {
        let dims = QuditDims::new(3, 1).unwrap();
        let sigma = DensityMatrix::maximally_mixed(dims);
        let ins = InsertedState::from_density(&sigma).unwrap();
        // degenerate: the computational basis is recovered in order
        assert!((ins.eigen_unitary() - DMatrix::<C64>::identity(3, 3))
            .iter()
            .all(|z| z.norm() < 1e-9));
        for p in ins.eigen_probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spectral_decomposition_sorts_descending() {
        let dims = QuditDims::new(2, 1).unwrap();
        let plus = StateVector::from_amplitudes(dims, vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).unwrap();
        let minus = StateVector::from_amplitudes(dims, vec![C64::new(0.0, 0.8), C64::new(0.6, 0.0)]).unwrap();
        let m = DensityMatrix::from_pure(&plus).matrix() * C64::new(0.25, 0.0)
            + DensityMatrix::from_pure(&minus).matrix() * C64::new(0.75, 0.0);
        let sigma = DensityMatrix::from_matrix(dims, m).unwrap();
        let ins = InsertedState::from_density(&sigma).unwrap();
        assert!((ins.eigen_probs()[0] - 0.75).abs() < 1e-12);
        assert!((ins.eigenvector(0).inner(&minus)).norm() > 1.0 - 1e-12);
    }

    #[test]
    fn identity_channel_is_identity() {
        let psi = ket(2, "01");
        let ks = KrausSet::identity(psi.dims());
        let out = ks.apply_pure(&psi).unwrap();
        assert!(out.max_abs_diff(&DensityMatrix::from_pure(&psi)) < 1e-15);
        let t = sample_trajectory(&psi, &ks, 7).unwrap();
        assert_eq!(t.label, KrausLabel::Named("I".into()));
        assert!((t.probability - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mixed_and_pure_application_agree() {
        let sigma = InsertedState::from_probabilities(&[0.2, 0.8]).unwrap();
        let ks = build_insertion_kraus(2, &sigma, &PositionDistribution::uniform(3).unwrap()).unwrap();
        let dims = QuditDims::new(2, 2).unwrap();
        let psi = StateVector::from_amplitudes(
            dims,
            vec![C64::new(0.5, 0.0), C64::new(0.5, 0.0), C64::new(0.0, 0.5), C64::new(-0.5, 0.0)],
        )
        .unwrap();
        let a = ks.apply_pure(&psi).unwrap();
        let b = ks.apply_mixed(&DensityMatrix::from_pure(&psi)).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-14);
        assert!((a.trace().re - 1.0).abs() < 1e-12);
    }
}
