//! Recovery synthesis from the constructive side of the Knill-Laflamme theorem,
//! and exact or sampled decoding of channel outputs.
//!
//! Gram-Schmidt over `A_a|0_L>` fixes a coefficient table. The same table
//! applied to `A_a|i_L>` yields `u_k^i`. Measuring `M_k = sum_i |u_k^i><u_k^i|`
//! (plus the complement `M_null`) and applying `U_k : u_k^i -> |0..0 i>`
//! leaves the logical state in the last qudit.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use nalgebra::DMatrix;
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::code::{kl_check, KlReport, LogicalCodewords};
use crate::error::{Error, Result};
use crate::kraus::{KrausLabel, KrausSet, TrajectorySampler};
use crate::linalg::{
    combine_rows, complete_to_unitary, gram_schmidt, max_gram_deviation, ComplementProjector,
    DensityMatrix, Projector, QuditDims, StateVector, SubspaceUnitary, C64, ZERO,
};
use crate::rational::{approx_fraction, format_fraction, format_probability};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Relative residual below which a generator counts as dependent, and
    /// the bound on orthonormality and correction errors.
    pub orth: f64,
    /// Probability below which an outcome is treated as absent.
    pub num: f64,
    /// Knill-Laflamme precheck.
    pub kl: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            orth: 1e-9,
            num: 1e-10,
            kl: 1e-9,
        }
    }
}

/// A measurement result: syndrome `k` (1-based) or the complement outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Outcome {
    Syndrome(usize),
    Null,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Syndrome(k) => write!(f, "k={k}"),
            Outcome::Null => f.write_str("\u{2205}"),
        }
    }
}

/// Measurement and correction synthesized for one code and one Kraus set.
///
/// Built from the unweighted operators, so it does not depend on the
/// position distribution or on the eigenvalues of an inserted state.
#[derive(Clone, Debug)]
pub struct RecoveryPlan {
    l: usize,
    in_dims: QuditDims,
    out_dims: QuditDims,
    labels: Vec<KrausLabel>,
    selected: Vec<usize>,
    coeffs: DMatrix<C64>,
    /// `u[k][i]`
    u: Vec<Vec<StateVector>>,
    /// `beta[(k, a)] = <u_k^i| A_a |i_L>` for unweighted `A_a`.
    beta: DMatrix<C64>,
    measurements: Vec<Projector>,
    null: ComplementProjector,
    corrections: Vec<SubspaceUnitary>,
    kl: KlReport,
    orth_deviation: f64,
    correction_deviation: f64,
    tol: Tolerances,
}

impl RecoveryPlan {
    /// Number of syndromes.
    pub fn d(&self) -> usize {
        self.u.len()
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn in_dims(&self) -> QuditDims {
        self.in_dims
    }

    pub fn out_dims(&self) -> QuditDims {
        self.out_dims
    }

    pub fn labels(&self) -> &[KrausLabel] {
        &self.labels
    }

    /// Kraus indices whose images of `|0_L>` seeded the `u_k`, in order.
    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    /// `coeffs[(k, j)]`: weight of `A_{selected[j]} |i_L>` in `u_k^i`.
    pub fn coeffs(&self) -> &DMatrix<C64> {
        &self.coeffs
    }

    /// `u_k^i` with `k` 0-based.
    pub fn u(&self, k: usize, i: usize) -> &StateVector {
        &self.u[k][i]
    }

    pub fn beta(&self) -> &DMatrix<C64> {
        &self.beta
    }

    pub fn measurement(&self, k: usize) -> &Projector {
        &self.measurements[k]
    }

    pub fn null_measurement(&self) -> &ComplementProjector {
        &self.null
    }

    pub fn correction(&self, k: usize) -> &SubspaceUnitary {
        &self.corrections[k]
    }

    /// Unweighted Knill-Laflamme report gathered before synthesis.
    pub fn kl_report(&self) -> &KlReport {
        &self.kl
    }

    /// `max |<u_k^i|u_k'^i'> - delta|` over all pairs.
    pub fn orthonormality_deviation(&self) -> f64 {
        self.orth_deviation
    }

    /// `max || U_k u_k^i - |0..0 i> ||`
    pub fn correction_deviation(&self) -> f64 {
        self.correction_deviation
    }

    pub fn tolerances(&self) -> Tolerances {
        self.tol
    }

    /// Dense `sum_k M_k^dagger M_k + M_null^dagger M_null`; only for small spaces.
    pub fn measurement_completeness_deviation(&self) -> f64 {
        let n = self.out_dims.size();
        let mut acc = self.null.to_dense();
        for m in &self.measurements {
            acc += m.to_dense();
        }
        acc -= DMatrix::<C64>::identity(n, n);
        acc.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Multi-line summary with `d`, the coefficient table, `beta` and `p(k)`.
    pub fn export_report(&self, ks: &KrausSet) -> Result<String> {
        let probs = predicted_probs(self, ks)?;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "recovery plan: l={} n_in={} n_out={} d={}",
            self.l,
            self.in_dims.n(),
            self.out_dims.n(),
            self.d()
        );
        let _ = writeln!(
            out,
            "orthonormality deviation {:.3e}, correction deviation {:.3e}",
            self.orth_deviation, self.correction_deviation
        );
        let _ = writeln!(out, "syndrome vectors u_k^i = sum_j c_kj A_j|i_L>:");
        for k in 0..self.d() {
            let terms: Vec<String> = (0..=k)
                .filter(|&j| self.coeffs[(k, j)].norm() > self.tol.num)
                .map(|j| self.labels[self.selected[j]].to_string())
                .collect();
            let _ = writeln!(
                out,
                "  k={:<3} {} on [{}]",
                k + 1,
                format_coefficient_row(&self.coeffs, k),
                terms.join(", ")
            );
        }
        let _ = writeln!(out, "beta (nonzero entries):");
        for k in 0..self.d() {
            let entries: Vec<String> = (0..self.labels.len())
                .filter(|&a| self.beta[(k, a)].norm() > self.tol.num)
                .map(|a| format!("{}: {}", self.labels[a], format_complex(self.beta[(k, a)])))
                .collect();
            let _ = writeln!(out, "  k={:<3} {}", k + 1, entries.join("; "));
        }
        let _ = writeln!(out, "p(k):");
        for (k, p) in probs.iter().enumerate() {
            let _ = writeln!(out, "  k={:<3} {}", k + 1, format_probability(*p));
        }
        let total: f64 = probs.iter().sum();
        let _ = writeln!(out, "  total {}", format_probability(total));
        Ok(out)
    }
}

/// Writes a row `c_k0 .. c_kk` as `sqrt(s) * (r_0, .., 1)` when the ratios
/// and the square of the leading factor are small fractions.
pub fn format_coefficient_row(coeffs: &DMatrix<C64>, k: usize) -> String {
    let lead = coeffs[(k, k)];
    let row: Vec<C64> = (0..=k).map(|j| coeffs[(k, j)]).collect();
    let real = row.iter().all(|c| c.im.abs() < 1e-12) && lead.re > 0.0;
    if real {
        let scale = approx_fraction(lead.re * lead.re, 200_000, 1e-12);
        let ratios: Option<Vec<String>> = row
            .iter()
            .map(|c| approx_fraction(c.re / lead.re, 200_000, 1e-12).map(|_| format_fraction(c.re / lead.re)))
            .collect();
        if let (Some((num, den)), Some(ratios)) = (scale, ratios) {
            let prefix = if (num, den) == (1, 1) {
                String::new()
            } else if den == 1 {
                format!("sqrt({num}) * ")
            } else {
                format!("sqrt({num}/{den}) * ")
            };
            return format!("{prefix}({})", ratios.join(", "));
        }
    }
    let parts: Vec<String> = row.iter().map(|c| format_complex(*c)).collect();
    format!("({})", parts.join(", "))
}

fn format_complex(z: C64) -> String {
    if z.im.abs() < 1e-12 {
        format!("{:.10}", z.re)
    } else {
        format!("{:.10}{:+.10}i", z.re, z.im)
    }
}

/// `|0..0 i>` on `dims`.
fn target(dims: QuditDims, i: usize) -> Result<StateVector> {
    StateVector::basis_index(dims, i)
}

/// Builds the recovery for `codewords` under `ks`.
///
/// Fails with [`Error::KlViolation`] when the unweighted operators violate
/// the Knill-Laflamme conditions, and with [`Error::Synthesis`] when a
/// numerical consistency check does not hold.
pub fn synthesize(codewords: &LogicalCodewords, ks: &KrausSet, tol: Tolerances) -> Result<RecoveryPlan> {
    if ks.in_dims() != codewords.dims() {
        return Err(Error::DimensionMismatch(format!(
            "code on {} qudits, Kraus set expects {}",
            codewords.dims().n(),
            ks.in_dims().n()
        )));
    }
    let l = codewords.vectors().len();
    let out_dims = ks.out_dims();
    if out_dims.size() < l {
        return Err(Error::Synthesis("output space is smaller than the logical space".into()));
    }
    let unweighted = ks.unweighted();
    let kl = kl_check(codewords, &unweighted, tol.kl)?;
    if !kl.satisfied {
        return Err(Error::KlViolation {
            offdiag: kl.max_offdiag_logical,
            spread: kl.max_diag_spread,
        });
    }

    // images[i][a] = A_a |i_L>
    let images: Vec<Vec<StateVector>> = codewords
        .vectors()
        .iter()
        .map(|v| ks.elements().iter().map(|e| e.op.apply(v)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let family = gram_schmidt(&images[0], tol.orth)?;
    let d = family.len();
    if d == 0 {
        return Err(Error::Synthesis("every Kraus operator annihilates the code".into()));
    }
    let coeffs = family.coeffs().clone();
    let selected = family.selected().to_vec();

    // per_i[i][k] = u_k^i
    let mut per_i: Vec<Vec<StateVector>> = Vec::with_capacity(l);
    for imgs in &images {
        let chosen: Vec<&StateVector> = selected.iter().map(|&a| &imgs[a]).collect();
        per_i.push(combine_rows(&coeffs, &chosen)?);
    }
    let all: Vec<StateVector> = per_i.iter().flatten().cloned().collect();
    let orth_deviation = max_gram_deviation(&all);
    if orth_deviation > tol.orth {
        return Err(Error::Synthesis(format!(
            "syndrome vectors deviate from orthonormality by {orth_deviation:e}"
        )));
    }

    let m = ks.len();
    let beta = DMatrix::from_fn(d, m, |k, a| per_i[0][k].inner(&images[0][a]));
    // The coefficient table must reproduce every A_a|i_L> with the same beta.
    for (i, imgs) in images.iter().enumerate() {
        for (a, img) in imgs.iter().enumerate() {
            let mut residual = img.clone();
            for k in 0..d {
                let b = per_i[i][k].inner(img);
                if (b - beta[(k, a)]).norm() > tol.orth {
                    return Err(Error::Synthesis(format!(
                        "overlap of {} with u_{}^{i} differs from the i = 0 value",
                        ks.elements()[a].label,
                        k + 1
                    )));
                }
                residual.add_scaled(-b, &per_i[i][k])?;
            }
            let r = residual.norm();
            if r > tol.orth * img.norm().max(1.0) {
                return Err(Error::Synthesis(format!(
                    "{} |{i}_L> leaves the syndrome span by {r:e}",
                    ks.elements()[a].label
                )));
            }
        }
    }

    let mut u: Vec<Vec<StateVector>> = vec![Vec::with_capacity(l); d];
    for row in per_i {
        for (k, v) in row.into_iter().enumerate() {
            u[k].push(v);
        }
    }
    let targets: Vec<StateVector> = (0..l).map(|i| target(out_dims, i)).collect::<Result<_>>()?;
    let mut corrections = Vec::with_capacity(d);
    let mut correction_deviation = 0.0f64;
    for uk in &u {
        let corr = complete_to_unitary(uk, &targets, tol.orth)?;
        for (v, t) in uk.iter().zip(&targets) {
            correction_deviation = correction_deviation.max(corr.apply(v)?.max_abs_diff(t));
        }
        corrections.push(corr);
    }
    if correction_deviation > tol.orth {
        return Err(Error::Synthesis(format!(
            "corrections miss their targets by {correction_deviation:e}"
        )));
    }
    let measurements: Vec<Projector> = u
        .iter()
        .map(|uk| Projector::new(out_dims, uk.clone()))
        .collect::<Result<_>>()?;
    let null = ComplementProjector::of(Projector::new(out_dims, all)?);

    Ok(RecoveryPlan {
        l,
        in_dims: codewords.dims(),
        out_dims,
        labels: ks.labels(),
        selected,
        coeffs,
        u,
        beta,
        measurements,
        null,
        corrections,
        kl,
        orth_deviation,
        correction_deviation,
        tol,
    })
}

fn check_labels(plan: &RecoveryPlan, ks: &KrausSet) -> Result<()> {
    if ks.labels() != plan.labels || ks.in_dims() != plan.in_dims || ks.out_dims() != plan.out_dims {
        return Err(Error::LabelMismatch);
    }
    Ok(())
}

/// `p(k) = sum_a w_a |beta_{k,a}|^2` for the weights of `ks`.
pub fn predicted_probs(plan: &RecoveryPlan, ks: &KrausSet) -> Result<Vec<f64>> {
    check_labels(plan, ks)?;
    Ok((0..plan.d())
        .map(|k| {
            ks.elements()
                .iter()
                .enumerate()
                .map(|(a, e)| e.weight * plan.beta[(k, a)].norm_sqr())
                .sum()
        })
        .collect())
}

/// One measurement outcome of an exact decode.
#[derive(Clone, Debug)]
pub struct OutcomeRecord {
    pub outcome: Outcome,
    pub probability: f64,
    /// Corrected single-qudit state, present when `probability` exceeds the
    /// numerical threshold.
    pub state: Option<DensityMatrix>,
    /// `<ref|state|ref>` when both exist.
    pub fidelity: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct DecodeResult {
    pub outcomes: Vec<OutcomeRecord>,
    /// Sum of all outcome probabilities.
    pub total_probability: f64,
    /// `sum_k p(k) F_k / sum_k p(k)` over outcomes with a state.
    pub mean_fidelity: Option<f64>,
}

impl DecodeResult {
    pub fn probability_of(&self, outcome: Outcome) -> f64 {
        self.outcomes
            .iter()
            .find(|r| r.outcome == outcome)
            .map_or(0.0, |r| r.probability)
    }

    pub fn min_fidelity(&self) -> Option<f64> {
        self.outcomes
            .iter()
            .filter_map(|r| r.fidelity)
            .fold(None, |acc, f| Some(acc.map_or(f, |a: f64| a.min(f))))
    }
}

fn reference_state(l: usize, reference: Option<&[C64]>) -> Result<Option<StateVector>> {
    let Some(alphas) = reference else {
        return Ok(None);
    };
    if alphas.len() != l {
        return Err(Error::DimensionMismatch(format!(
            "{} reference amplitudes for l = {l}",
            alphas.len()
        )));
    }
    let v = StateVector::from_amplitudes(QuditDims::new(l, 1)?, alphas.to_vec())?;
    if !v.is_normalized(1e-9) {
        return Err(Error::NotNormalized(v.norm()));
    }
    Ok(Some(v))
}

/// Single-qudit marginal of the last qudit of `|v><v|`.
fn reduce_pure(v: &StateVector, l: usize) -> DMatrix<C64> {
    let amps = v.amplitudes();
    let mut out = DMatrix::from_element(l, l, ZERO);
    for block in amps.as_slice().chunks(l) {
        for i in 0..l {
            for j in 0..l {
                out[(i, j)] += block[i] * block[j].conj();
            }
        }
    }
    out
}

fn record(
    outcome: Outcome,
    probability: f64,
    unnormalized: DMatrix<C64>,
    l: usize,
    reference: Option<&StateVector>,
    threshold: f64,
) -> Result<OutcomeRecord> {
    let (state, fidelity) = if probability > threshold {
        let rho = DensityMatrix::from_matrix(QuditDims::new(l, 1)?, unnormalized / C64::new(probability, 0.0))?;
        let f = reference.map(|r| rho.fidelity_with(r)).transpose()?;
        (Some(rho), f)
    } else {
        (None, None)
    };
    Ok(OutcomeRecord {
        outcome,
        probability,
        state,
        fidelity,
    })
}

fn finish(outcomes: Vec<OutcomeRecord>) -> DecodeResult {
    let total_probability = outcomes.iter().map(|r| r.probability).sum();
    let (mut num, mut den) = (0.0, 0.0);
    for r in &outcomes {
        if let Some(f) = r.fidelity {
            num += r.probability * f;
            den += r.probability;
        }
    }
    DecodeResult {
        outcomes,
        total_probability,
        mean_fidelity: (den > 0.0).then(|| num / den),
    }
}

/// Exact measurement, correction and reduction of a channel output `rho`.
///
/// For syndrome `k` the corrected marginal is `C / p(k)` with
/// `C_ii' = <u_k^i|rho|u_k^i'>`. The complement outcome is left uncorrected
/// and reduced to the last qudit.
pub fn decode_exact(plan: &RecoveryPlan, rho: &DensityMatrix, reference: Option<&[C64]>) -> Result<DecodeResult> {
    if rho.dims() != plan.out_dims {
        return Err(Error::DimensionMismatch(format!(
            "state on {} qudits, plan expects {}",
            rho.dims().n(),
            plan.out_dims.n()
        )));
    }
    let l = plan.l;
    let reference = reference_state(l, reference)?;
    let n = plan.out_dims.size();
    let all: Vec<&StateVector> = plan.u.iter().flatten().collect();
    let r = all.len();
    let v = DMatrix::from_fn(n, r, |row, col| all[col].amplitudes()[row]);
    // y = V^dagger rho (r x n), z = V^dagger rho V (r x r)
    let y = v.adjoint() * rho.matrix();
    let z = &y * &v;

    let mut outcomes = Vec::with_capacity(plan.d() + 1);
    for k in 0..plan.d() {
        let block = z.view((k * l, k * l), (l, l)).into_owned();
        // Ordering of `all` is k-major, so block(i, i') = <u_k^i|rho|u_k^i'>.
        let p: f64 = (0..l).map(|i| block[(i, i)].re).sum();
        let state = corrected_block(plan, k, &block)?;
        outcomes.push(record(Outcome::Syndrome(k + 1), p, state, l, reference.as_ref(), plan.tol.num)?);
    }

    // Complement: Tr_lead[(I-P) rho (I-P)] with P = V V^dagger.
    let mut null = DMatrix::from_element(l, l, ZERO);
    let rho_m = rho.matrix();
    for prefix in 0..n / l {
        for i in 0..l {
            let x = prefix * l + i;
            for j in 0..l {
                let w = prefix * l + j;
                // (P rho)_{xw} = V_x . y_{:,w}; (rho P)_{xw} = conj((P rho)_{wx}); (P rho P)_{xw} = V_x z V_w^dagger
                let mut p_rho = ZERO;
                let mut rho_p = ZERO;
                let mut p_rho_p = ZERO;
                for s in 0..r {
                    p_rho += v[(x, s)] * y[(s, w)];
                    rho_p += (v[(w, s)] * y[(s, x)]).conj();
                    let mut zs = ZERO;
                    for t in 0..r {
                        zs += z[(s, t)] * v[(w, t)].conj();
                    }
                    p_rho_p += v[(x, s)] * zs;
                }
                null[(i, j)] += rho_m[(x, w)] - p_rho - rho_p + p_rho_p;
            }
        }
    }
    let p_null = null.trace().re.max(0.0);
    outcomes.push(record(Outcome::Null, p_null, null, l, reference.as_ref(), plan.tol.num)?);
    Ok(finish(outcomes))
}

/// Applies `U_k` to the measured block and reduces. Since `U_k` sends
/// `u_k^i` to `|0..0 i>`, the marginal equals the block itself; the
/// correction is still applied so a faulty unitary would show.
fn corrected_block(plan: &RecoveryPlan, k: usize, block: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let l = plan.l;
    let mapped: Vec<StateVector> = plan.u[k]
        .iter()
        .map(|v| plan.corrections[k].apply(v))
        .collect::<Result<_>>()?;
    let mut out = DMatrix::from_element(l, l, ZERO);
    for (i, mi) in mapped.iter().enumerate() {
        for (j, mj) in mapped.iter().enumerate() {
            let c = block[(i, j)];
            if c == ZERO {
                continue;
            }
            let amps_i = mi.amplitudes().as_slice();
            let amps_j = mj.amplitudes().as_slice();
            for (bi, bj) in amps_i.chunks(l).zip(amps_j.chunks(l)) {
                for x in 0..l {
                    if bi[x] == ZERO {
                        continue;
                    }
                    for y in 0..l {
                        out[(x, y)] += c * bi[x] * bj[y].conj();
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Exact decode of `ks` applied to the pure state `psi`, working branch by
/// branch instead of forming the output density matrix.
pub fn decode_channel_exact(
    plan: &RecoveryPlan,
    ks: &KrausSet,
    psi: &StateVector,
    reference: Option<&[C64]>,
) -> Result<DecodeResult> {
    check_labels(plan, ks)?;
    let l = plan.l;
    let reference = reference_state(l, reference)?;
    let d = plan.d();
    let mut blocks = vec![DMatrix::from_element(l, l, ZERO); d];
    let mut null = DMatrix::from_element(l, l, ZERO);
    for e in ks.elements().iter().filter(|e| e.weight > 0.0) {
        let img = e.op.apply(psi)?;
        let w = C64::new(e.weight, 0.0);
        let mut residual = img.clone();
        for (k, block) in blocks.iter_mut().enumerate() {
            let c: Vec<C64> = plan.u[k].iter().map(|u| u.inner(&img)).collect();
            for i in 0..l {
                residual.add_scaled(-c[i], &plan.u[k][i])?;
                for j in 0..l {
                    block[(i, j)] += w * c[i] * c[j].conj();
                }
            }
        }
        null += reduce_pure(&residual, l) * w;
    }
    let mut outcomes = Vec::with_capacity(d + 1);
    for (k, block) in blocks.iter().enumerate() {
        let p: f64 = (0..l).map(|i| block[(i, i)].re).sum();
        let state = corrected_block(plan, k, block)?;
        outcomes.push(record(Outcome::Syndrome(k + 1), p, state, l, reference.as_ref(), plan.tol.num)?);
    }
    let p_null = null.trace().re.max(0.0);
    outcomes.push(record(Outcome::Null, p_null, null, l, reference.as_ref(), plan.tol.num)?);
    Ok(finish(outcomes))
}

/// `max_{i,j} || R(E(|i_L><j_L|)) - |i><j| ||_max`, where `R` is the
/// synthesized recovery followed by reduction to the last qudit.
pub fn recovery_deviation(plan: &RecoveryPlan, ks: &KrausSet, codewords: &LogicalCodewords) -> Result<f64> {
    check_labels(plan, ks)?;
    let l = plan.l;
    // c[a][i][k][m] = <u_k^m| A_a |i_L>
    let mut overlaps = Vec::with_capacity(ks.len());
    for e in ks.elements() {
        let per_i: Vec<Vec<Vec<C64>>> = codewords
            .vectors()
            .iter()
            .map(|v| {
                let img = e.op.apply(v)?;
                Ok(plan.u.iter().map(|uk| uk.iter().map(|u| u.inner(&img)).collect()).collect())
            })
            .collect::<Result<_>>()?;
        overlaps.push(per_i);
    }
    let mut worst = 0.0f64;
    for i in 0..l {
        for j in 0..l {
            let mut out = DMatrix::from_element(l, l, ZERO);
            for (a, e) in ks.elements().iter().enumerate() {
                let w = C64::new(e.weight, 0.0);
                for (oi, oj) in overlaps[a][i].iter().zip(&overlaps[a][j]) {
                    for m in 0..l {
                        for mm in 0..l {
                            out[(m, mm)] += w * oi[m] * oj[mm].conj();
                        }
                    }
                }
            }
            out[(i, j)] -= C64::new(1.0, 0.0);
            worst = worst.max(out.iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
    }
    Ok(worst)
}

/// Largest deviation from the recovery-superoperator property: each
/// `U_k M_k sqrt(w_a) A_a |i_L>` must equal `lambda_{k,a} |0..0 i>` with a
/// scalar independent of `i`. Returns the worst of the off-target residual
/// norms and the spread of the scalars over `i`.
pub fn superoperator_deviation(plan: &RecoveryPlan, ks: &KrausSet, codewords: &LogicalCodewords) -> Result<f64> {
    check_labels(plan, ks)?;
    let l = plan.l;
    let targets: Vec<StateVector> = (0..l).map(|i| target(plan.out_dims, i)).collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    for e in ks.elements() {
        let s = C64::new(e.weight.sqrt(), 0.0);
        let images: Vec<StateVector> = codewords
            .vectors()
            .iter()
            .map(|v| Ok(e.op.apply(v)?.scaled(s)))
            .collect::<Result<_>>()?;
        for k in 0..plan.d() {
            let mut scalars = Vec::with_capacity(l);
            for (i, img) in images.iter().enumerate() {
                let mut w = plan.corrections[k].apply(&plan.measurements[k].apply(img)?)?;
                let c = targets[i].inner(&w);
                w.add_scaled(-c, &targets[i])?;
                worst = worst.max(w.norm());
                scalars.push(c);
            }
            for x in &scalars {
                for y in &scalars {
                    worst = worst.max((x - y).norm());
                }
            }
        }
    }
    Ok(worst)
}

/// One sampled trial.
#[derive(Clone, Debug)]
pub struct TrialRecord {
    pub trial: u64,
    pub branch: KrausLabel,
    pub outcome: Outcome,
    pub fidelity: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SimReport {
    pub trials: u64,
    pub seed: u64,
    pub histogram: BTreeMap<Outcome, u64>,
    /// Mean of the per-trial fidelities (trials without a reference do not count).
    pub mean_fidelity: Option<f64>,
    pub log: Vec<TrialRecord>,
}

impl SimReport {
    pub fn frequency(&self, outcome: Outcome) -> f64 {
        *self.histogram.get(&outcome).unwrap_or(&0) as f64 / self.trials as f64
    }
}

struct BranchOutcomes {
    picker: WeightedIndex<f64>,
    fidelities: Vec<Option<f64>>,
}

/// Samples a Kraus branch, then a measurement outcome, `trials` times.
/// Trial `t` draws from a ChaCha8 stream seeded with `seed + t`, so a run is
/// reproducible and any trial can be replayed on its own.
pub fn decode_sampled(
    plan: &RecoveryPlan,
    encoded: &StateVector,
    reference: Option<&[C64]>,
    ks: &KrausSet,
    trials: u64,
    seed: u64,
) -> Result<SimReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    check_labels(plan, ks)?;
    let l = plan.l;
    let reference = reference_state(l, reference)?;
    let sampler = TrajectorySampler::new(ks, encoded)?;
    let labels = ks.labels();
    // Outcome index d stands for the complement.
    let mut branches: Vec<Option<BranchOutcomes>> = Vec::with_capacity(ks.len());
    for (a, label) in labels.iter().enumerate() {
        let Some(phi) = sampler.branch_state(a) else {
            branches.push(None);
            continue;
        };
        let mut weights = Vec::with_capacity(plan.d() + 1);
        let mut fidelities = Vec::with_capacity(plan.d() + 1);
        let mut residual = phi.clone();
        for k in 0..plan.d() {
            let c: Vec<C64> = plan.u[k].iter().map(|u| u.inner(phi)).collect();
            for (i, ci) in c.iter().enumerate() {
                residual.add_scaled(-ci, &plan.u[k][i])?;
            }
            let q: f64 = c.iter().map(|z| z.norm_sqr()).sum();
            weights.push(q);
            fidelities.push(reference.as_ref().filter(|_| q > 0.0).map(|r| {
                let ov: C64 = r.amplitudes().iter().zip(&c).map(|(x, y)| x.conj() * y).sum();
                ov.norm_sqr() / q
            }));
        }
        let q_null = residual.amplitudes().norm_squared();
        weights.push(q_null);
        let f_null = match &reference {
            Some(r) if q_null > plan.tol.num => {
                let sigma = DensityMatrix::from_matrix(
                    QuditDims::new(l, 1)?,
                    reduce_pure(&residual, l) / C64::new(q_null, 0.0),
                )?;
                Some(sigma.fidelity_with(r)?)
            }
            _ => None,
        };
        fidelities.push(f_null);
        let picker = WeightedIndex::new(&weights)
            .map_err(|e| Error::Synthesis(format!("outcome weights for {label}: {e}")))?;
        branches.push(Some(BranchOutcomes { picker, fidelities }));
    }

    let mut histogram = BTreeMap::new();
    let mut log = Vec::with_capacity(trials as usize);
    let (mut f_sum, mut f_count) = (0.0, 0u64);
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t));
        let a = sampler.sample_index(&mut rng);
        let b = branches[a].as_ref().expect("sampled branch has weight");
        let idx = b.picker.sample(&mut rng);
        let outcome = if idx == plan.d() { Outcome::Null } else { Outcome::Syndrome(idx + 1) };
        let fidelity = b.fidelities[idx];
        if let Some(f) = fidelity {
            f_sum += f;
            f_count += 1;
        }
        *histogram.entry(outcome).or_insert(0) += 1;
        log.push(TrialRecord {
            trial: t,
            branch: labels[a].clone(),
            outcome,
            fidelity,
        });
    }
    Ok(SimReport {
        trials,
        seed,
        histogram,
        mean_fidelity: (f_count > 0).then(|| f_sum / f_count as f64),
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codefile::example_code;
    use crate::kraus::{build_deletion_kraus, build_insertion_kraus, InsertedState, PositionDistribution};

    fn codewords() -> LogicalCodewords {
        LogicalCodewords::new(&example_code()).unwrap()
    }

    fn word(s: &str) -> Vec<u8> {
        s.bytes().map(|b| b - b'0').collect()
    }

    fn deletion_set(weights: Vec<f64>) -> KrausSet {
        build_deletion_kraus(6, 3, &PositionDistribution::new(weights).unwrap()).unwrap()
    }

    fn insertion_set(probs: &[f64], dist: Vec<f64>) -> KrausSet {
        let sigma = InsertedState::from_probabilities(probs).unwrap();
        build_insertion_kraus(6, &sigma, &PositionDistribution::new(dist).unwrap()).unwrap()
    }

    #[test]
    fn deletion_plan_matches_closed_form() {
        let ks = deletion_set(vec![1.0 / 6.0; 6]);
        let plan = synthesize(&codewords(), &ks, Tolerances::default()).unwrap();
        assert_eq!(plan.d(), 9);
        let expected = [
            "01122", "22011", "11220", "12200", "00122", "22001", "20011", "11200", "00112",
        ];
        let dims = QuditDims::new(3, 5).unwrap();
        for (k, w) in expected.iter().enumerate() {
            let e = StateVector::basis(dims, &word(w)).unwrap();
            assert!(plan.u(k, 0).max_abs_diff(&e) < 1e-12, "k={}", k + 1);
        }
        assert!(plan.correction_deviation() < 1e-12);
        assert!(plan.orthonormality_deviation() < 1e-12);
    }

    #[test]
    fn deletion_probabilities() {
        let w = vec![0.05, 0.1, 0.15, 0.2, 0.22, 0.28];
        let ks = deletion_set(w.clone());
        let plan = synthesize(&codewords(), &ks, Tolerances::default()).unwrap();
        let p = predicted_probs(&plan, &ks).unwrap();
        for k in 0..9 {
            let pair = match k % 3 {
                0 => w[0] + w[1],
                1 => w[2] + w[3],
                _ => w[4] + w[5],
            };
            assert!((p[k] - pair / 3.0).abs() < 1e-12, "k={}", k + 1);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn insertion_plan_dimension_and_first_rows() {
        let ks = insertion_set(&[0.5, 1.0 / 3.0, 1.0 / 6.0], vec![1.0 / 7.0; 7]);
        let plan = synthesize(&codewords(), &ks, Tolerances::default()).unwrap();
        assert_eq!(plan.d(), 21);
        let c = plan.coeffs();
        assert!((c[(1, 0)].re - (9.0f64 / 8.0).sqrt() * (-1.0 / 3.0)).abs() < 1e-12);
        assert!((c[(1, 1)].re - (9.0f64 / 8.0).sqrt()).abs() < 1e-12);
        assert_eq!(format_coefficient_row(c, 0), "(1)");
        assert_eq!(format_coefficient_row(c, 1), "sqrt(9/8) * (-1/3, 1)");
        assert_eq!(format_coefficient_row(c, 6), "sqrt(83/68) * (-2/83, -2/83, 8/83, 6/83, -26/83, -19/83, 1)");
    }

    #[test]
    fn plan_ignores_weights() {
        let a = synthesize(&codewords(), &insertion_set(&[0.5, 0.3, 0.2], vec![1.0 / 7.0; 7]), Tolerances::default()).unwrap();
        let mut one_hot = vec![0.0; 7];
        one_hot[3] = 1.0;
        let b = synthesize(&codewords(), &insertion_set(&[1.0, 0.0, 0.0], one_hot), Tolerances::default()).unwrap();
        assert_eq!(a.d(), b.d());
        assert!((a.coeffs() - b.coeffs()).iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn exact_decode_recovers_logical_state() {
        let alphas = [C64::new(0.6, 0.0), C64::new(0.0, 0.48), C64::new(0.64, 0.0)];
        let cw = codewords();
        let psi = cw.encode(&alphas).unwrap();
        let ks = insertion_set(&[0.5, 1.0 / 3.0, 1.0 / 6.0], vec![0.1, 0.2, 0.1, 0.15, 0.15, 0.2, 0.1]);
        let plan = synthesize(&cw, &ks, Tolerances::default()).unwrap();
        let fast = decode_channel_exact(&plan, &ks, &psi, Some(&alphas)).unwrap();
        assert!((fast.total_probability - 1.0).abs() < 1e-12);
        assert!(fast.probability_of(Outcome::Null) < 1e-12);
        assert!(fast.min_fidelity().unwrap() > 1.0 - 1e-10);
        let p = predicted_probs(&plan, &ks).unwrap();
        for (k, pk) in p.iter().enumerate() {
            assert!((fast.probability_of(Outcome::Syndrome(k + 1)) - pk).abs() < 1e-12);
        }

        let rho = ks.apply_pure(&psi).unwrap();
        let dense = decode_exact(&plan, &rho, Some(&alphas)).unwrap();
        for (a, b) in dense.outcomes.iter().zip(&fast.outcomes) {
            assert_eq!(a.outcome, b.outcome);
            assert!((a.probability - b.probability).abs() < 1e-12);
        }
        assert!(dense.min_fidelity().unwrap() > 1.0 - 1e-10);
        assert!(recovery_deviation(&plan, &ks, &cw).unwrap() < 1e-10);
    }

    #[test]
    fn null_outcome_for_states_outside_the_code() {
        let ks = deletion_set(vec![1.0 / 6.0; 6]);
        let plan = synthesize(&codewords(), &ks, Tolerances::default()).unwrap();
        let dims = QuditDims::new(3, 5).unwrap();
        // An even superposition of two strings, one inside and one outside the syndrome span.
        let mut v = StateVector::basis(dims, &word("01122")).unwrap();
        v.add_scaled(C64::new(1.0, 0.0), &StateVector::basis(dims, &word("00000")).unwrap()).unwrap();
        let v = v.normalized().unwrap();
        let res = decode_exact(&plan, &DensityMatrix::from_pure(&v), None).unwrap();
        assert!((res.probability_of(Outcome::Null) - 0.5).abs() < 1e-12);
        assert!((res.probability_of(Outcome::Syndrome(1)) - 0.5).abs() < 1e-12);
        assert!((res.total_probability - 1.0).abs() < 1e-12);
        let null = res.outcomes.last().unwrap().state.as_ref().unwrap();
        assert!((null.matrix()[(0, 0)].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kl_violation_blocks_synthesis() {
        let code = crate::conditions::CodeSpec::from_strings(2, 2, &[vec!["00"], vec!["01"]]).unwrap();
        let cw = LogicalCodewords::new(&code).unwrap();
        let ks = build_deletion_kraus(2, 2, &PositionDistribution::uniform(2).unwrap()).unwrap();
        assert!(matches!(
            synthesize(&cw, &ks, Tolerances::default()),
            Err(Error::KlViolation { .. })
        ));
    }

    #[test]
    fn label_mismatch() {
        let ks = deletion_set(vec![1.0 / 6.0; 6]);
        let plan = synthesize(&codewords(), &ks, Tolerances::default()).unwrap();
        let other = insertion_set(&[1.0, 0.0, 0.0], vec![1.0 / 7.0; 7]);
        assert!(matches!(predicted_probs(&plan, &other), Err(Error::LabelMismatch)));
    }

    #[test]
    fn sampling_is_reproducible() {
        let alphas = [C64::new(1.0, 0.0), ZERO, ZERO];
        let cw = codewords();
        let psi = cw.encode(&alphas).unwrap();
        let ks = deletion_set(vec![1.0 / 6.0; 6]);
        let plan = synthesize(&cw, &ks, Tolerances::default()).unwrap();
        let a = decode_sampled(&plan, &psi, Some(&alphas), &ks, 200, 7).unwrap();
        let b = decode_sampled(&plan, &psi, Some(&alphas), &ks, 200, 7).unwrap();
        assert_eq!(a.histogram, b.histogram);
        assert_eq!(a.histogram.values().sum::<u64>(), 200);
        assert!((a.mean_fidelity.unwrap() - 1.0).abs() < 1e-12);
        assert!(decode_sampled(&plan, &psi, None, &ks, 0, 7).is_err());
        let one = decode_sampled(&plan, &psi, None, &ks, 1, 7).unwrap();
        assert_eq!(one.log.len(), 1);
        // the uncorrupted codeword has one qudit too many for the plan
        assert!(matches!(
            decode_exact(&plan, &DensityMatrix::from_pure(&psi), None),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn trivial_code_under_identity() {
        let code = crate::conditions::CodeSpec::from_strings(2, 1, &[vec!["0"], vec!["1"]]).unwrap();
        let cw = LogicalCodewords::new(&code).unwrap();
        let ks = KrausSet::identity(cw.dims());
        let plan = synthesize(&cw, &ks, Tolerances::default()).unwrap();
        assert_eq!(plan.d(), 1);
        let eye = DMatrix::<C64>::identity(2, 2);
        assert!((plan.measurement(0).to_dense() - &eye).iter().all(|z| z.norm() < 1e-15));
        assert!((plan.correction(0).to_dense() - &eye).iter().all(|z| z.norm() < 1e-15));
        assert_eq!(predicted_probs(&plan, &ks).unwrap(), vec![1.0]);
        assert!(plan.measurement_completeness_deviation() < 1e-15);
    }

    #[test]
    fn superoperator_property_for_deletion() {
        let cw = codewords();
        let ks = deletion_set(vec![0.3, 0.1, 0.1, 0.2, 0.2, 0.1]);
        let plan = synthesize(&cw, &ks, Tolerances::default()).unwrap();
        assert!(superoperator_deviation(&plan, &ks, &cw).unwrap() < 1e-12);
        assert!(plan.measurement_completeness_deviation() < 1e-12);
    }

    #[test]
    fn report_lists_probabilities() {
        let ks = deletion_set(vec![1.0 / 6.0; 6]);
        let plan = synthesize(&codewords(), &ks, Tolerances::default()).unwrap();
        let text = plan.export_report(&ks).unwrap();
        assert!(text.contains("d=9"));
        assert!(text.contains("k=1   1/9 (0.1111111111)"));
    }
}
