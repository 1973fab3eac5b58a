//! Logical codewords, the encoder, and a numerical Knill-Laflamme check.

use nalgebra::DMatrix;

use crate::conditions::CodeSpec;
use crate::error::{Error, Result};
use crate::kraus::{KrausLabel, KrausSet};
use crate::linalg::{QuditDims, StateVector, C64, ZERO};

/// `|i_L> = |A_i|^{-1/2} sum_{a in A_i} |a>` for every logical symbol `i`.
#[derive(Clone, Debug)]
pub struct LogicalCodewords {
    code: CodeSpec,
    dims: QuditDims,
    vectors: Vec<StateVector>,
}

impl LogicalCodewords {
    pub fn new(code: &CodeSpec) -> Result<Self> {
        let vectors = (0..code.l())
            .map(|i| logical_codeword(code, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            code: code.clone(),
            dims: QuditDims::new(code.l(), code.n())?,
            vectors,
        })
    }

    pub fn code(&self) -> &CodeSpec {
        &self.code
    }

    pub fn dims(&self) -> QuditDims {
        self.dims
    }

    pub fn vectors(&self) -> &[StateVector] {
        &self.vectors
    }

    pub fn get(&self, i: usize) -> &StateVector {
        &self.vectors[i]
    }

    /// `sum_i alpha_i |i_L>`
    pub fn encode(&self, alphas: &[C64]) -> Result<StateVector> {
        if alphas.len() != self.vectors.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for {} logical states",
                alphas.len(),
                self.vectors.len()
            )));
        }
        let norm: f64 = alphas.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized(norm));
        }
        let mut out = StateVector::zeros(self.dims);
        for (a, v) in alphas.iter().zip(&self.vectors) {
            out.add_scaled(*a, v)?;
        }
        Ok(out)
    }
}

pub fn logical_codeword(code: &CodeSpec, i: usize) -> Result<StateVector> {
    if i >= code.l() {
        return Err(Error::OutOfRange(format!("logical symbol {i} with l = {}", code.l())));
    }
    let class = code.class(i);
    if class.is_empty() {
        return Err(Error::InvalidCode(format!("class {i} is empty")));
    }
    let dims = QuditDims::new(code.l(), code.n())?;
    let amp = C64::new(1.0 / (class.len() as f64).sqrt(), 0.0);
    let mut v = StateVector::zeros(dims);
    for w in class {
        v.add_scaled(amp, &StateVector::basis(dims, w)?)?;
    }
    Ok(v)
}

pub fn encode(code: &CodeSpec, alphas: &[C64]) -> Result<StateVector> {
    LogicalCodewords::new(code)?.encode(alphas)
}

/// Outcome of [`kl_check`].
#[derive(Clone, Debug)]
pub struct KlReport {
    pub labels: Vec<KrausLabel>,
    /// `mu[(a, b)]`: mean over `i` of `<i_L|A_a^dagger A_b|i_L>`, weights folded in.
    pub mu: DMatrix<C64>,
    /// Largest `|<i_L|A_a^dagger A_b|j_L>|` with `i != j`.
    pub max_offdiag_logical: f64,
    /// Largest difference between two diagonal values `<i_L|..|i_L>` for the same `(a, b)`.
    pub max_diag_spread: f64,
    pub tol: f64,
    pub satisfied: bool,
}

impl KlReport {
    pub fn mu_hermiticity_deviation(&self) -> f64 {
        (&self.mu - self.mu.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// Evaluates `<i_L|A_a^dagger A_b|j_L> = mu_ab delta_ij` for every pair of
/// (weighted) Kraus operators and logical symbols.
pub fn kl_check(codewords: &LogicalCodewords, ks: &KrausSet, tol: f64) -> Result<KlReport> {
    if ks.in_dims() != codewords.dims() {
        return Err(Error::DimensionMismatch(format!(
            "codewords on {} qudits, Kraus set expects {}",
            codewords.dims().n(),
            ks.in_dims().n()
        )));
    }
    let l = codewords.vectors().len();
    let m = ks.len();
    // images[a][i] = sqrt(w_a) A_a |i_L>
    let images: Vec<Vec<StateVector>> = ks
        .elements()
        .iter()
        .map(|e| {
            let s = C64::new(e.weight.sqrt(), 0.0);
            codewords
                .vectors()
                .iter()
                .map(|v| Ok(e.op.apply(v)?.scaled(s)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut mu = DMatrix::from_element(m, m, ZERO);
    let mut max_offdiag = 0.0f64;
    let mut max_spread = 0.0f64;
    for a in 0..m {
        for b in 0..m {
            let mut diag = Vec::with_capacity(l);
            for i in 0..l {
                for j in 0..l {
                    let g = images[a][i].inner(&images[b][j]);
                    if i == j {
                        diag.push(g);
                    } else {
                        max_offdiag = max_offdiag.max(g.norm());
                    }
                }
            }
            for x in &diag {
                for y in &diag {
                    max_spread = max_spread.max((x - y).norm());
                }
            }
            mu[(a, b)] = diag.iter().sum::<C64>() / C64::new(l as f64, 0.0);
        }
    }
    Ok(KlReport {
        labels: ks.labels(),
        mu,
        max_offdiag_logical: max_offdiag,
        max_diag_spread: max_spread,
        tol,
        satisfied: max_offdiag <= tol && max_spread <= tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kraus::{build_deletion_kraus, PositionDistribution};

    fn example() -> CodeSpec {
        crate::codefile::example_code()
    }

    #[test]
    fn example_codeword_zero() {
        let v = logical_codeword(&example(), 0).unwrap();
        let amp = 1.0 / 3f64.sqrt();
        let support = v.support(1e-15);
        assert_eq!(support.len(), 3);
        for w in ["001122", "112200", "220011"] {
            let digits: Vec<u8> = w.bytes().map(|b| b - b'0').collect();
            assert!((v.amplitude(&digits).unwrap().re - amp).abs() < 1e-15);
        }
    }

    #[test]
    fn singleton_codeword_is_a_ket() {
        let code = CodeSpec::from_strings(2, 1, &[vec!["0"], vec!["1"]]).unwrap();
        let v = logical_codeword(&code, 0).unwrap();
        assert_eq!(v, StateVector::basis(QuditDims::new(2, 1).unwrap(), &[0]).unwrap());
        assert!(logical_codeword(&code, 2).is_err());
    }

    #[test]
    fn uniform_encoding_of_the_example() {
        let s = C64::new(1.0 / 3f64.sqrt(), 0.0);
        let v = encode(&example(), &[s, s, s]).unwrap();
        let support = v.support(1e-12);
        assert_eq!(support.len(), 9);
        for (_, a) in support {
            assert!((a.re - 1.0 / 3.0).abs() < 1e-14 && a.im.abs() < 1e-15);
        }
        assert!(matches!(
            encode(&example(), &[s, s, C64::new(0.0, 0.0)]),
            Err(Error::NotNormalized(_))
        ));
    }

    #[test]
    fn kl_violation_on_colliding_code() {
        let code = CodeSpec::from_strings(2, 2, &[vec!["00"], vec!["01"]]).unwrap();
        let cw = LogicalCodewords::new(&code).unwrap();
        let ks = build_deletion_kraus(2, 2, &PositionDistribution::uniform(2).unwrap()).unwrap();
        let report = kl_check(&cw, &ks, 1e-10).unwrap();
        assert!(!report.satisfied);
        // <0_L| D(2,0)^dagger D(2,1) |1_L> = <0|0> weighted by 1/2
        assert!((report.max_offdiag_logical - 0.5).abs() < 1e-12);
    }

    #[test]
    fn kl_dimension_mismatch() {
        let cw = LogicalCodewords::new(&example()).unwrap();
        let ks = build_deletion_kraus(5, 3, &PositionDistribution::uniform(5).unwrap()).unwrap();
        assert!(matches!(kl_check(&cw, &ks, 1e-9), Err(Error::DimensionMismatch(_))));
    }
}
