//! Dense states and sparse operators on qudit tensor-product spaces.
//!
//! Basis kets are indexed big-endian: the first particle is the most
//! significant base-`l` digit, so `|x_1 x_2 ... x_n>` sits at index
//! `x_1 l^{n-1} + ... + x_n`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Local dimension `l` and particle count `n` of `C^{l (x) n}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct QuditDims {
    l: usize,
    n: usize,
    size: usize,
}

impl QuditDims {
    pub fn new(l: usize, n: usize) -> Result<Self> {
        if l < 2 {
            return Err(Error::LocalDimension(l));
        }
        let size = u32::try_from(n)
            .ok()
            .and_then(|n32| l.checked_pow(n32))
            .ok_or(Error::DimensionOverflow { l, n })?;
        Ok(Self { l, n, size })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Total dimension `l^n`.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(self.l, n)
    }

    pub fn index_of(&self, digits: &[u8]) -> Result<usize> {
        if digits.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "basis label of length {} for {} particles",
                digits.len(),
                self.n
            )));
        }
        digits.iter().try_fold(0usize, |acc, &d| {
            if (d as usize) < self.l {
                Ok(acc * self.l + d as usize)
            } else {
                Err(Error::OutOfRange(format!("symbol {d} with l = {}", self.l)))
            }
        })
    }

    pub fn digits_of(&self, mut index: usize) -> Vec<u8> {
        let mut digits = vec![0u8; self.n];
        for slot in digits.iter_mut().rev() {
            *slot = (index % self.l) as u8;
            index /= self.l;
        }
        digits
    }
}

fn same_l(a: QuditDims, b: QuditDims) -> Result<()> {
    if a.l != b.l {
        return Err(Error::DimensionMismatch(format!(
            "local dimensions {} and {}",
            a.l, b.l
        )));
    }
    Ok(())
}

fn same_dims(a: QuditDims, b: QuditDims) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!(
            "({}, {}) vs ({}, {})",
            a.l, a.n, b.l, b.n
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    dims: QuditDims,
    amps: DVector<C64>,
}

impl StateVector {
    pub fn zeros(dims: QuditDims) -> Self {
        Self {
            dims,
            amps: DVector::zeros(dims.size()),
        }
    }

    pub fn basis(dims: QuditDims, digits: &[u8]) -> Result<Self> {
        let idx = dims.index_of(digits)?;
        let mut v = Self::zeros(dims);
        v.amps[idx] = ONE;
        Ok(v)
    }

    pub fn basis_index(dims: QuditDims, index: usize) -> Result<Self> {
        if index >= dims.size() {
            return Err(Error::OutOfRange(format!(
                "basis index {index} in dimension {}",
                dims.size()
            )));
        }
        let mut v = Self::zeros(dims);
        v.amps[index] = ONE;
        Ok(v)
    }

    pub fn from_amplitudes(dims: QuditDims, amps: Vec<C64>) -> Result<Self> {
        Self::from_dvector(dims, DVector::from_vec(amps))
    }

    pub fn from_dvector(dims: QuditDims, amps: DVector<C64>) -> Result<Self> {
        if amps.len() != dims.size() {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for dimension {}",
                amps.len(),
                dims.size()
            )));
        }
        Ok(Self { dims, amps })
    }

    pub fn dims(&self) -> QuditDims {
        self.dims
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn into_amplitudes(self) -> DVector<C64> {
        self.amps
    }

    pub fn amplitude(&self, digits: &[u8]) -> Result<C64> {
        Ok(self.amps[self.dims.index_of(digits)?])
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    pub fn normalized(&self) -> Result<Self> {
        let norm = self.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NotNormalized(norm));
        }
        Ok(self.scaled(C64::new(1.0 / norm, 0.0)))
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self {
            dims: self.dims,
            amps: &self.amps * s,
        }
    }

    /// `<self|other>`, antilinear in `self`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.dotc(&other.amps)
    }

    /// `self + s * other`
    pub fn add_scaled(&mut self, s: C64, other: &StateVector) -> Result<()> {
        same_dims(self.dims, other.dims)?;
        self.amps.axpy(s, &other.amps, ONE);
        Ok(())
    }

    pub fn tensor(&self, other: &StateVector) -> Result<Self> {
        same_l(self.dims, other.dims)?;
        let dims = self.dims.with_n(self.dims.n + other.dims.n)?;
        Ok(Self {
            dims,
            amps: self.amps.kronecker(&other.amps),
        })
    }

    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        if self.dims != other.dims {
            return f64::INFINITY;
        }
        self.amps
            .iter()
            .zip(other.amps.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Indices and amplitudes of the entries with modulus above `tol`.
    pub fn support(&self, tol: f64) -> Vec<(usize, C64)> {
        self.amps
            .iter()
            .enumerate()
            .filter(|(_, a)| a.norm() > tol)
            .map(|(i, a)| (i, *a))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    dims: QuditDims,
    mat: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn from_pure(state: &StateVector) -> Self {
        Self {
            dims: state.dims,
            mat: &state.amps * state.amps.adjoint(),
        }
    }

    pub fn from_matrix(dims: QuditDims, mat: DMatrix<C64>) -> Result<Self> {
        if mat.nrows() != dims.size() || mat.ncols() != dims.size() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix for dimension {}",
                mat.nrows(),
                mat.ncols(),
                dims.size()
            )));
        }
        Ok(Self { dims, mat })
    }

    pub fn maximally_mixed(dims: QuditDims) -> Self {
        let s = dims.size();
        Self {
            dims,
            mat: DMatrix::identity(s, s) * C64::new(1.0 / s as f64, 0.0),
        }
    }

    pub fn dims(&self) -> QuditDims {
        self.dims
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        let n = self.mat.nrows();
        let mut worst = 0.0f64;
        for c in 0..n {
            for r in c..n {
                worst = worst.max((self.mat[(r, c)] - self.mat[(c, r)].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.mat + self.mat.adjoint()) * C64::new(0.5, 0.0);
        SymmetricEigen::new(herm)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks Hermiticity, unit trace and positive semi-definiteness within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let herm = self.hermiticity_deviation();
        if herm > tol {
            return Err(Error::InvalidDensityMatrix(format!(
                "not Hermitian (deviation {herm:e})"
            )));
        }
        let tr = self.trace();
        if (tr - ONE).norm() > tol {
            return Err(Error::InvalidDensityMatrix(format!("trace {tr}")));
        }
        let min_eig = self.min_eigenvalue();
        if min_eig < -tol {
            return Err(Error::InvalidDensityMatrix(format!(
                "not positive semi-definite (eigenvalue {min_eig:e})"
            )));
        }
        Ok(())
    }

    /// `<psi|rho|psi>`, the fidelity against a pure reference.
    pub fn fidelity_with(&self, psi: &StateVector) -> Result<f64> {
        same_dims(self.dims, psi.dims)?;
        Ok((psi.amps.adjoint() * &self.mat * &psi.amps)[(0, 0)].re)
    }

    pub fn purity(&self) -> f64 {
        (&self.mat * &self.mat).trace().re
    }

    /// Partial trace over the first `count` qudits.
    pub fn trace_out_leading(&self, count: usize) -> Result<DensityMatrix> {
        if count > self.dims.n {
            return Err(Error::OutOfRange(format!(
                "cannot drop {count} of {} qudits",
                self.dims.n
            )));
        }
        let kept = self.dims.with_n(self.dims.n - count)?;
        let block = kept.size();
        let prefixes = self.dims.size() / block;
        let mut out = DMatrix::zeros(block, block);
        for pre in 0..prefixes {
            out += self
                .mat
                .view((pre * block, pre * block), (block, block));
        }
        Ok(DensityMatrix { dims: kept, mat: out })
    }

    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        if self.dims != other.dims {
            return f64::INFINITY;
        }
        self.mat
            .iter()
            .zip(other.mat.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum QuantumState {
    Pure(StateVector),
    Mixed(DensityMatrix),
}

impl QuantumState {
    pub fn dims(&self) -> QuditDims {
        match self {
            QuantumState::Pure(v) => v.dims(),
            QuantumState::Mixed(r) => r.dims(),
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            QuantumState::Pure(v) => v.amps.norm_squared(),
            QuantumState::Mixed(r) => r.trace().re,
        }
    }

    pub fn to_density(&self) -> DensityMatrix {
        match self {
            QuantumState::Pure(v) => DensityMatrix::from_pure(v),
            QuantumState::Mixed(r) => r.clone(),
        }
    }

    pub fn fidelity_with(&self, psi: &StateVector) -> Result<f64> {
        match self {
            QuantumState::Pure(v) => {
                same_dims(v.dims, psi.dims)?;
                Ok(psi.inner(v).norm_sqr())
            }
            QuantumState::Mixed(r) => r.fidelity_with(psi),
        }
    }
}

/// Discards the first `count` particles.
///
/// A pure state of the form `|0...0> (x) |phi>` (all weight outside the
/// zero prefix below `NUM_TOL`) stays pure; anything else is reduced by
/// partial trace.
pub fn drop_leading_qudits(state: &QuantumState, count: usize) -> Result<QuantumState> {
    let dims = state.dims();
    if count > dims.n() {
        return Err(Error::OutOfRange(format!(
            "cannot drop {count} of {} qudits",
            dims.n()
        )));
    }
    match state {
        QuantumState::Pure(v) => {
            let kept = dims.with_n(dims.n() - count)?;
            let block = kept.size();
            let outside: f64 = v.amps.rows(block, dims.size() - block).norm_squared();
            if outside <= crate::NUM_TOL {
                let head = v.amps.rows(0, block).into_owned();
                Ok(QuantumState::Pure(StateVector::from_dvector(kept, head)?))
            } else {
                let prefixes = dims.size() / block;
                let mut out = DMatrix::<C64>::zeros(block, block);
                for pre in 0..prefixes {
                    let seg = v.amps.rows(pre * block, block);
                    out += seg * seg.adjoint();
                }
                Ok(QuantumState::Mixed(DensityMatrix::from_matrix(kept, out)?))
            }
        }
        QuantumState::Mixed(r) => Ok(QuantumState::Mixed(r.trace_out_leading(count)?)),
    }
}

/// Sparse `l^{n'} x l^n` matrix in compressed-row form.
///
/// Entries are kept sorted by column within each row, duplicates summed and
/// exact zeros dropped, so structural equality is value equality.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    out_dims: QuditDims,
    in_dims: QuditDims,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl Operator {
    pub fn from_triplets(
        out_dims: QuditDims,
        in_dims: QuditDims,
        mut triplets: Vec<(usize, usize, C64)>,
    ) -> Result<Self> {
        same_l(out_dims, in_dims)?;
        let (rows, ncols) = (out_dims.size(), in_dims.size());
        if let Some(&(r, c, _)) = triplets.iter().find(|(r, c, _)| *r >= rows || *c >= ncols) {
            return Err(Error::OutOfRange(format!(
                "entry ({r}, {c}) in a {rows}x{ncols} operator"
            )));
        }
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut row_of = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            if row_of.last() == Some(&r) && cols.last() == Some(&c) {
                *vals.last_mut().unwrap() += v;
            } else {
                row_of.push(r);
                cols.push(c);
                vals.push(v);
            }
        }
        let mut keep_cols = Vec::with_capacity(cols.len());
        let mut keep_vals = Vec::with_capacity(vals.len());
        for ((r, c), v) in row_of.into_iter().zip(cols).zip(vals) {
            if v != ZERO {
                row_ptr[r + 1] += 1;
                keep_cols.push(c);
                keep_vals.push(v);
            }
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            out_dims,
            in_dims,
            row_ptr,
            cols: keep_cols,
            vals: keep_vals,
        })
    }

    pub fn from_dense(out_dims: QuditDims, in_dims: QuditDims, mat: &DMatrix<C64>) -> Result<Self> {
        if mat.nrows() != out_dims.size() || mat.ncols() != in_dims.size() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix for a {}x{} operator",
                mat.nrows(),
                mat.ncols(),
                out_dims.size(),
                in_dims.size()
            )));
        }
        let mut trip = Vec::new();
        for r in 0..mat.nrows() {
            for c in 0..mat.ncols() {
                trip.push((r, c, mat[(r, c)]));
            }
        }
        Self::from_triplets(out_dims, in_dims, trip)
    }

    pub fn identity(dims: QuditDims) -> Self {
        let trip = (0..dims.size()).map(|i| (i, i, ONE)).collect();
        Self::from_triplets(dims, dims, trip).expect("identity is well-formed")
    }

    /// `|v>` as a column operator from the 0-particle space.
    pub fn ket(v: &StateVector) -> Self {
        let scalar = v.dims.with_n(0).expect("l already validated");
        let trip = v.amps.iter().enumerate().map(|(i, a)| (i, 0, *a)).collect();
        Self::from_triplets(v.dims, scalar, trip).expect("ket is well-formed")
    }

    pub fn bra(v: &StateVector) -> Self {
        Self::ket(v).dagger()
    }

    pub fn out_dims(&self) -> QuditDims {
        self.out_dims
    }

    pub fn in_dims(&self) -> QuditDims {
        self.in_dims
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.out_dims.size()).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&c) {
            Ok(pos) => self.vals[span.start + pos],
            Err(_) => ZERO,
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.out_dims.size(), self.in_dims.size());
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn dagger(&self) -> Operator {
        let trip = self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect();
        Operator::from_triplets(self.in_dims, self.out_dims, trip).expect("adjoint is well-formed")
    }

    pub fn scaled(&self, s: C64) -> Operator {
        let trip = self.triplets().map(|(r, c, v)| (r, c, v * s)).collect();
        Operator::from_triplets(self.out_dims, self.in_dims, trip).expect("scaling keeps shape")
    }

    pub fn apply(&self, v: &StateVector) -> Result<StateVector> {
        same_dims(self.in_dims, v.dims)?;
        Ok(StateVector {
            dims: self.out_dims,
            amps: self.apply_raw(&v.amps),
        })
    }

    fn apply_raw(&self, x: &DVector<C64>) -> DVector<C64> {
        DVector::from_fn(self.out_dims.size(), |r, _| {
            self.row(r).map(|(c, v)| v * x[c]).sum()
        })
    }

    /// `self * other`
    pub fn compose(&self, other: &Operator) -> Result<Operator> {
        same_dims(self.in_dims, other.out_dims)?;
        let mut trip = Vec::new();
        for r in 0..self.out_dims.size() {
            for (mid, a) in self.row(r) {
                for (c, b) in other.row(mid) {
                    trip.push((r, c, a * b));
                }
            }
        }
        Operator::from_triplets(self.out_dims, other.in_dims, trip)
    }

    /// Kronecker product; particle counts add on both sides.
    pub fn tensor(&self, other: &Operator) -> Result<Operator> {
        same_l(self.in_dims, other.in_dims)?;
        let out_dims = self.out_dims.with_n(self.out_dims.n + other.out_dims.n)?;
        let in_dims = self.in_dims.with_n(self.in_dims.n + other.in_dims.n)?;
        let (or, oc) = (other.out_dims.size(), other.in_dims.size());
        let mut trip = Vec::with_capacity(self.nnz() * other.nnz());
        for (r1, c1, a) in self.triplets() {
            for (r2, c2, b) in other.triplets() {
                trip.push((r1 * or + r2, c1 * oc + c2, a * b));
            }
        }
        Operator::from_triplets(out_dims, in_dims, trip)
    }

    /// `A^dagger A` as a dense matrix on the input space.
    pub fn gram(&self) -> DMatrix<C64> {
        let n = self.in_dims.size();
        let mut g = DMatrix::zeros(n, n);
        for r in 0..self.out_dims.size() {
            for (c1, a) in self.row(r) {
                for (c2, b) in self.row(r) {
                    g[(c1, c2)] += a.conj() * b;
                }
            }
        }
        g
    }

    /// Adds `weight * A rho A^dagger` into `out`.
    pub fn sandwich_into(&self, rho: &DMatrix<C64>, weight: f64, out: &mut DMatrix<C64>) {
        let n_in = self.in_dims.size();
        // T = A rho, column by column
        let mut t = DMatrix::<C64>::zeros(self.out_dims.size(), n_in);
        for j in 0..n_in {
            let col = rho.column(j).into_owned();
            t.set_column(j, &self.apply_raw(&col));
        }
        let w = C64::new(weight, 0.0);
        for r in 0..self.out_dims.size() {
            for (c, v) in self.row(r) {
                let s = w * v.conj();
                let src = t.column(c).into_owned();
                out.column_mut(r).axpy(s, &src, ONE);
            }
        }
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        if self.out_dims != other.out_dims || self.in_dims != other.in_dims {
            return f64::INFINITY;
        }
        (self.to_dense() - other.to_dense())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

pub fn tensor_product(a: &Operator, b: &Operator) -> Result<Operator> {
    a.tensor(b)
}

pub fn dagger(a: &Operator) -> Operator {
    a.dagger()
}

/// Output of [`gram_schmidt`]: orthonormal `u_k` plus the lower-triangular
/// table expressing each `u_k` in the kept generators.
#[derive(Clone, Debug)]
pub struct OrthonormalFamily {
    vectors: Vec<StateVector>,
    coeffs: DMatrix<C64>,
    selected: Vec<usize>,
    dependent: Vec<usize>,
}

impl OrthonormalFamily {
    pub fn vectors(&self) -> &[StateVector] {
        &self.vectors
    }

    /// `coeffs[(k, j)]` is the weight of generator `selected[j]` in `u_k`.
    pub fn coeffs(&self) -> &DMatrix<C64> {
        &self.coeffs
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn dependent(&self) -> &[usize] {
        &self.dependent
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn orthonormality_deviation(&self) -> f64 {
        max_gram_deviation(&self.vectors)
    }

    /// Rebuilds the vectors from `generators` through the coefficient table.
    pub fn reconstruct(&self, generators: &[StateVector]) -> Result<Vec<StateVector>> {
        let chosen: Vec<&StateVector> = self
            .selected
            .iter()
            .map(|&i| {
                generators
                    .get(i)
                    .ok_or_else(|| Error::OutOfRange(format!("generator {i}")))
            })
            .collect::<Result<_>>()?;
        combine_rows(&self.coeffs, &chosen)
    }
}

pub(crate) fn combine_rows(coeffs: &DMatrix<C64>, chosen: &[&StateVector]) -> Result<Vec<StateVector>> {
    let dims = match chosen.first() {
        Some(g) => g.dims,
        None => return Ok(Vec::new()),
    };
    (0..coeffs.nrows())
        .map(|k| {
            let mut u = StateVector::zeros(dims);
            for (j, g) in chosen.iter().enumerate() {
                let c = coeffs[(k, j)];
                if c != ZERO {
                    u.add_scaled(c, g)?;
                }
            }
            Ok(u)
        })
        .collect()
}

/// `max_{a,b} |<v_a|v_b> - delta_ab|`
pub fn max_gram_deviation(vectors: &[StateVector]) -> f64 {
    let mut worst = 0.0f64;
    for (a, va) in vectors.iter().enumerate() {
        for vb in &vectors[a..] {
            let target = if std::ptr::eq(va, vb) { ONE } else { ZERO };
            worst = worst.max((va.inner(vb) - target).norm());
        }
    }
    worst
}

/// Modified Gram-Schmidt in the given order, with one re-orthogonalization
/// pass. A generator whose residual is at most `tol` times its own norm is
/// skipped and recorded as dependent.
pub fn gram_schmidt(generators: &[StateVector], tol: f64) -> Result<OrthonormalFamily> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidTolerance(tol));
    }
    let empty = OrthonormalFamily {
        vectors: Vec::new(),
        coeffs: DMatrix::zeros(0, 0),
        selected: Vec::new(),
        dependent: Vec::new(),
    };
    let Some(first) = generators.first() else {
        return Ok(empty);
    };
    let dims = first.dims;
    for g in generators {
        same_dims(dims, g.dims)?;
    }
    if generators.iter().all(|g| g.norm() == 0.0) {
        return Err(Error::AllZeroGenerators);
    }

    let mut vectors: Vec<StateVector> = Vec::new();
    let mut rows: Vec<Vec<C64>> = Vec::new();
    let mut selected = Vec::new();
    let mut dependent = Vec::new();
    for (idx, g) in generators.iter().enumerate() {
        let g_norm = g.norm();
        if g_norm == 0.0 {
            dependent.push(idx);
            continue;
        }
        let d = vectors.len();
        let mut residual = g.clone();
        let mut row = vec![ZERO; d + 1];
        row[d] = ONE;
        for _pass in 0..2 {
            for (p, u) in vectors.iter().enumerate() {
                let h = u.inner(&residual);
                residual.add_scaled(-h, u)?;
                for (slot, c) in row.iter_mut().zip(&rows[p]) {
                    *slot -= h * c;
                }
            }
        }
        let r_norm = residual.norm();
        if r_norm <= tol * g_norm {
            dependent.push(idx);
            continue;
        }
        let inv = C64::new(1.0 / r_norm, 0.0);
        vectors.push(residual.scaled(inv));
        rows.push(row.into_iter().map(|c| c * inv).collect());
        selected.push(idx);
    }
    let d = vectors.len();
    let coeffs = DMatrix::from_fn(d, d, |k, j| rows[k].get(j).copied().unwrap_or(ZERO));
    Ok(OrthonormalFamily {
        vectors,
        coeffs,
        selected,
        dependent,
    })
}

/// Extends orthonormal columns of `C^dim` to a full basis with standard
/// basis vectors in ascending order.
fn extend_to_basis(mut cols: Vec<DVector<C64>>, dim: usize, tol: f64) -> Vec<DVector<C64>> {
    for e in 0..dim {
        if cols.len() == dim {
            break;
        }
        let mut v = DVector::<C64>::zeros(dim);
        v[e] = ONE;
        for _pass in 0..2 {
            for u in &cols {
                let h = u.dotc(&v);
                v.axpy(-h, u, ONE);
            }
        }
        let n = v.norm();
        if n > tol {
            cols.push(v / C64::new(n, 0.0));
        }
    }
    cols
}

/// Unitary of the form `I + W K W^dagger`, where `W` has orthonormal columns
/// spanning the inputs and targets of a [`complete_to_unitary`] call. It acts
/// as the identity on the orthogonal complement of that span.
#[derive(Clone, Debug)]
pub struct SubspaceUnitary {
    dims: QuditDims,
    frame: DMatrix<C64>,
    kernel: DMatrix<C64>,
}

impl SubspaceUnitary {
    pub fn dims(&self) -> QuditDims {
        self.dims
    }

    /// Dimension of the subspace the map acts on nontrivially.
    pub fn rank(&self) -> usize {
        self.frame.ncols()
    }

    pub fn apply(&self, v: &StateVector) -> Result<StateVector> {
        same_dims(self.dims, v.dims)?;
        let coords = self.frame.adjoint() * &v.amps;
        let amps = &v.amps + &self.frame * (&self.kernel * coords);
        StateVector::from_dvector(self.dims, amps)
    }

    pub fn apply_adjoint(&self, v: &StateVector) -> Result<StateVector> {
        same_dims(self.dims, v.dims)?;
        let coords = self.frame.adjoint() * &v.amps;
        let amps = &v.amps + &self.frame * (self.kernel.adjoint() * coords);
        StateVector::from_dvector(self.dims, amps)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let n = self.dims.size();
        DMatrix::identity(n, n) + &self.frame * &self.kernel * self.frame.adjoint()
    }

    pub fn to_operator(&self) -> Operator {
        Operator::from_dense(self.dims, self.dims, &self.to_dense()).expect("square by construction")
    }

    /// `max |U^dagger U - I|` computed in the subspace frame.
    pub fn unitarity_deviation(&self) -> f64 {
        let k = &self.kernel;
        let inner = k + k.adjoint() + k.adjoint() * k;
        let full = &self.frame * inner * self.frame.adjoint();
        full.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// A unitary `U` with `U vectors[j] = targets[j]`.
///
/// Both orthonormal sets are expressed in an orthonormal frame of their joint
/// span, each is extended to a basis of that frame with standard basis
/// vectors in ascending order, and the completed bases are mapped onto each
/// other. Outside the joint span `U` is the identity.
pub fn complete_to_unitary(
    vectors: &[StateVector],
    targets: &[StateVector],
    tol: f64,
) -> Result<SubspaceUnitary> {
    if vectors.len() != targets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} vectors but {} targets",
            vectors.len(),
            targets.len()
        )));
    }
    let Some(first) = vectors.first() else {
        return Err(Error::InvalidArgument("no vectors to map".into()));
    };
    let dims = first.dims;
    for v in vectors.iter().chain(targets) {
        same_dims(dims, v.dims)?;
    }
    for set in [vectors, targets] {
        let dev = max_gram_deviation(set);
        if dev > tol {
            return Err(Error::NotOrthonormal(dev));
        }
    }
    let joint: Vec<StateVector> = vectors.iter().chain(targets).cloned().collect();
    let frame_family = gram_schmidt(&joint, tol)?;
    let r = frame_family.len();
    let frame = DMatrix::from_fn(dims.size(), r, |row, col| {
        frame_family.vectors()[col].amps[row]
    });
    let coords = |set: &[StateVector]| -> Vec<DVector<C64>> {
        set.iter().map(|v| frame.adjoint() * &v.amps).collect()
    };
    let src = extend_to_basis(coords(vectors), r, tol);
    let dst = extend_to_basis(coords(targets), r, tol);
    if src.len() != r || dst.len() != r {
        return Err(Error::NotOrthonormal(f64::NAN));
    }
    let mut kernel = DMatrix::<C64>::zeros(r, r);
    for (s, t) in src.iter().zip(&dst) {
        kernel += t * s.adjoint();
    }
    kernel -= DMatrix::<C64>::identity(r, r);
    Ok(SubspaceUnitary {
        dims,
        frame,
        kernel,
    })
}

/// Orthogonal projector `sum_i |v_i><v_i|` onto the span of orthonormal vectors.
#[derive(Clone, Debug)]
pub struct Projector {
    dims: QuditDims,
    vectors: Vec<StateVector>,
}

impl Projector {
    pub fn new(dims: QuditDims, vectors: Vec<StateVector>) -> Result<Self> {
        for v in &vectors {
            same_dims(dims, v.dims)?;
        }
        Ok(Self { dims, vectors })
    }

    pub fn vectors(&self) -> &[StateVector] {
        &self.vectors
    }

    pub fn apply(&self, x: &StateVector) -> Result<StateVector> {
        same_dims(self.dims, x.dims)?;
        let mut out = StateVector::zeros(self.dims);
        for v in &self.vectors {
            out.add_scaled(v.inner(x), v)?;
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let n = self.dims.size();
        let mut m = DMatrix::zeros(n, n);
        for v in &self.vectors {
            m += &v.amps * v.amps.adjoint();
        }
        m
    }
}

/// `I - P` for a [`Projector`] `P`.
#[derive(Clone, Debug)]
pub struct ComplementProjector {
    inner: Projector,
}

impl ComplementProjector {
    pub fn of(p: Projector) -> Self {
        Self { inner: p }
    }

    pub fn excluded(&self) -> &[StateVector] {
        self.inner.vectors()
    }

    pub fn apply(&self, x: &StateVector) -> Result<StateVector> {
        let mut out = x.clone();
        out.add_scaled(-ONE, &self.inner.apply(x)?)?;
        Ok(out)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let n = self.inner.dims.size();
        DMatrix::identity(n, n) - self.inner.to_dense()
    }

    /// `Tr((I - P) rho)`
    pub fn expectation(&self, rho: &DensityMatrix) -> Result<f64> {
        same_dims(self.inner.dims, rho.dims)?;
        let mut t = rho.trace().re;
        for v in self.inner.vectors() {
            t -= (v.amps.adjoint() * &rho.mat * &v.amps)[(0, 0)].re;
        }
        Ok(t)
    }
}
