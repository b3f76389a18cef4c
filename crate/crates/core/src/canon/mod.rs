//! Exact rational canonical form: minimal polynomial, factorization over the
//! rationals, a cyclic-basis construction of the similarity transform, and
//! power-of-two order padding.

mod factor;

pub use factor::{factor_squarefree_rational, squarefree_decomposition};

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::linalg::{independent, IntMatrix, Matrix, RatMatrix, RatPoly, Rational};

/// Largest polynomial degree the factorizer accepts.
pub const FACTOR_DEGREE_CAP: usize = 32;

/// Monic least-degree polynomial annihilating `f`: the lcm of the minimal
/// annihilators of the Krylov sequences of the unit vectors.
pub fn minimal_polynomial(f: &RatMatrix) -> Result<RatPoly> {
    if !f.is_square() {
        return Err(Error::Dimension(
            "minimal polynomial of a non-square matrix".into(),
        ));
    }
    let n = f.rows();
    let mut mu = RatPoly::one();
    for k in 0..n {
        let mut e = vec![Rational::zero(); n];
        e[k] = Rational::one();
        mu = mu.lcm(&vector_annihilator(f, &e)?);
    }
    Ok(mu)
}

/// Monic least-degree `g` with `g(F) v = 0`.
pub fn vector_annihilator(f: &RatMatrix, v: &[Rational]) -> Result<RatPoly> {
    let mut krylov: Vec<Vec<Rational>> = Vec::new();
    let mut w = v.to_vec();
    loop {
        let mut cols = krylov.clone();
        cols.push(w.clone());
        let m = Matrix::from_columns(&cols)?;
        let ech = m.rref();
        if ech.pivots.len() < cols.len() {
            // w = sum c_i F^i v
            let g = krylov.len();
            let mut coeffs: Vec<Rational> = (0..g).map(|i| -ech.reduced[(i, g)].clone()).collect();
            coeffs.push(Rational::one());
            return Ok(RatPoly::new(coeffs));
        }
        krylov.push(w.clone());
        w = f.mul_vec(&w)?;
    }
}

/// Shift matrix with ones on the superdiagonal and `-1` in the bottom-left corner.
pub fn shift_matrix(n: usize) -> IntMatrix {
    let mut s = IntMatrix::zeros(n, n);
    for i in 0..n.saturating_sub(1) {
        s[(i, i + 1)] = 1;
    }
    if n > 0 {
        s[(n - 1, 0)] = -1;
    }
    s
}

/// Rational canonical form of a square matrix and the transform reaching it.
#[derive(Clone, Debug)]
pub struct RcfResult {
    /// `T` with `T F T^{-1}` equal to the leading `n x n` block of `f_bar`.
    pub t: RatMatrix,
    pub t_inv: RatMatrix,
    /// Block-diagonal companion form, possibly padded to a larger order.
    pub f_bar: RatMatrix,
    /// Characteristic polynomial of each companion block, in block order.
    pub blocks: Vec<RatPoly>,
    pub kappa: usize,
    /// First column index of every block.
    pub r: Vec<usize>,
    /// Column `r_i` of `F_bar - S`.
    pub f_prime_cols: Vec<Vec<Rational>>,
    /// Order of the input matrix before any padding.
    pub original_order: usize,
}

impl RcfResult {
    pub fn order(&self) -> usize {
        self.f_bar.rows()
    }

    pub fn f_bar_int(&self) -> Option<IntMatrix> {
        self.f_bar.to_int()
    }

    /// Rebuilds `f_bar`, `r` and the nontrivial columns from a list of blocks.
    fn from_blocks(
        t: RatMatrix,
        t_inv: RatMatrix,
        blocks: Vec<RatPoly>,
        original_order: usize,
    ) -> Self {
        let companions: Vec<RatMatrix> = blocks.iter().map(RatPoly::companion).collect();
        let f_bar = RatMatrix::block_diag(&companions);
        let n = f_bar.rows();
        let mut r = Vec::with_capacity(blocks.len());
        let mut start = 0;
        for c in &companions {
            r.push(start);
            start += c.rows();
        }
        let diff = &f_bar - &shift_matrix(n).to_rational();
        let f_prime_cols = r.iter().map(|&c| diff.column(c)).collect();
        Self {
            t,
            t_inv,
            f_bar,
            kappa: blocks.len(),
            blocks,
            r,
            f_prime_cols,
            original_order,
        }
    }
}

struct PrimaryGenerators {
    degree: usize,
    /// (generator, exponent) in the order found
    gens: Vec<(Vec<Rational>, usize)>,
}

/// Cyclic-basis construction of `T` with `T F T^{-1}` in rational canonical form.
pub fn rcf_transform(f: &RatMatrix) -> Result<RcfResult> {
    if !f.is_square() {
        return Err(Error::Dimension(
            "rational canonical form of a non-square matrix".into(),
        ));
    }
    let n = f.rows();
    if n == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    let mu = minimal_polynomial(f)?;
    let factors = factor_squarefree_rational(&mu)?;

    let mut primaries = Vec::with_capacity(factors.len());
    for (p, eta) in &factors {
        let d = p.degree().expect("irreducible factors are nonconstant");
        let eta = *eta as usize;
        let pf = p.eval_matrix(f);
        let mut powers = vec![RatMatrix::identity(n)];
        for j in 1..=eta {
            powers.push(&powers[j - 1] * &pf);
        }
        let nullities: Vec<usize> = powers.iter().map(|m| m.nullity()).collect();
        let mut basis: Vec<Vec<Rational>> = Vec::new();
        let mut gens = Vec::new();
        let mut k = 0;
        for j in (1..=eta).rev() {
            let gap = nullities[j] - nullities[j - 1];
            if !gap.is_multiple_of(d) {
                return Err(Error::RcfDiagnostic(format!(
                    "nullity gap {gap} at exponent {j} not divisible by factor degree {d}"
                )));
            }
            let rj = gap / d;
            while k < rj {
                let candidates = powers[j].kernel_basis();
                let w = candidates
                    .into_iter()
                    .find(|w| {
                        let image = powers[j - 1].mul_vec(w).expect("square");
                        let mut test = basis.clone();
                        test.push(image);
                        independent(&test)
                    })
                    .ok_or_else(|| {
                        Error::RcfDiagnostic(format!(
                            "no admissible generator in ker p(F)^{j} for factor {p}"
                        ))
                    })?;
                let mut x = w.clone();
                for _ in 0..j * d {
                    basis.push(x.clone());
                    x = f.mul_vec(&x)?;
                }
                if !independent(&basis) {
                    return Err(Error::RcfDiagnostic(format!(
                        "cyclic bases for factor {p} became dependent"
                    )));
                }
                gens.push((w, j));
                k += 1;
            }
        }
        if basis.len() != nullities[eta] {
            return Err(Error::RcfDiagnostic(format!(
                "collected {} basis vectors for a primary space of dimension {}",
                basis.len(),
                nullities[eta]
            )));
        }
        primaries.push(PrimaryGenerators { degree: d, gens });
    }

    let kappa = primaries.iter().map(|p| p.gens.len()).max().unwrap_or(0);
    // generator j (0-based) sums the j-th generators of every primary component
    let mut cyclic: Vec<Vec<Vec<Rational>>> = Vec::with_capacity(kappa);
    for j in 0..kappa {
        let mut v = vec![Rational::zero(); n];
        let mut delta = 0;
        for prim in &primaries {
            if let Some((w, e)) = prim.gens.get(j) {
                for (a, b) in v.iter_mut().zip(w) {
                    *a += b;
                }
                delta += prim.degree * e;
            }
        }
        // columns F^{delta-1} v, ..., F v, v
        let mut cols = Vec::with_capacity(delta);
        let mut x = v;
        for _ in 0..delta {
            cols.push(x.clone());
            x = f.mul_vec(&x)?;
        }
        cols.reverse();
        cyclic.push(cols);
    }
    let v_cols: Vec<Vec<Rational>> = cyclic.into_iter().rev().flatten().collect();
    if v_cols.len() != n {
        return Err(Error::RcfDiagnostic(format!(
            "cyclic bases span {} vectors, expected {n}",
            v_cols.len()
        )));
    }
    let v = RatMatrix::from_columns(&v_cols)?;
    let t = v
        .inverse()
        .map_err(|_| Error::RcfDiagnostic("generators do not form a basis".into()))?;
    let f_bar = &(&t * f) * &v;

    let blocks = extract_blocks(&f_bar)
        .ok_or_else(|| Error::RcfDiagnostic("transformed matrix is not block companion".into()))?;
    let result = if f_bar == *f {
        RcfResult::from_blocks(RatMatrix::identity(n), RatMatrix::identity(n), blocks, n)
    } else {
        RcfResult::from_blocks(t, v, blocks, n)
    };
    if result.f_bar != f_bar && result.f_bar != *f {
        return Err(Error::RcfDiagnostic("block reconstruction mismatch".into()));
    }
    Ok(result)
}

/// Reads companion blocks off a block-diagonal companion matrix.
fn extract_blocks(m: &RatMatrix) -> Option<Vec<RatPoly>> {
    let n = m.rows();
    let mut blocks = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && m[(end - 1, end)].is_one() {
            end += 1;
        }
        let g = end - start;
        let mut coeffs: Vec<Rational> = (0..g)
            .map(|r| -m[(start + g - 1 - r, start)].clone())
            .collect();
        coeffs.push(Rational::one());
        blocks.push(RatPoly::new(coeffs));
        start = end;
    }
    let rebuilt = RatMatrix::block_diag(&blocks.iter().map(RatPoly::companion).collect::<Vec<_>>());
    (rebuilt == *m).then_some(blocks)
}

/// Raises the order to the next power of two by multiplying the last block's
/// polynomial by `s^(n' - n)`; `G` gains zero rows and `H` zero columns.
pub fn pad_order_pow2(
    rcf: &RcfResult,
    g: &RatMatrix,
    h: &RatMatrix,
) -> Result<(RcfResult, RatMatrix, RatMatrix)> {
    let n = rcf.order();
    if g.rows() != n || h.cols() != n {
        return Err(Error::Dimension(format!(
            "G is {}x{}, H is {}x{}, order is {n}",
            g.rows(),
            g.cols(),
            h.rows(),
            h.cols()
        )));
    }
    let target = n.next_power_of_two();
    if target == n {
        return Ok((rcf.clone(), g.clone(), h.clone()));
    }
    let mut blocks = rcf.blocks.clone();
    let last = blocks.last_mut().expect("at least one block");
    *last = &*last * &RatPoly::monomial(target - n);
    let padded =
        RcfResult::from_blocks(rcf.t.clone(), rcf.t_inv.clone(), blocks, rcf.original_order);
    let g2 = RatMatrix::from_fn(target, g.cols(), |r, c| {
        if r < n {
            g[(r, c)].clone()
        } else {
            Rational::zero()
        }
    });
    let h2 = RatMatrix::from_fn(h.rows(), target, |r, c| {
        if c < n {
            h[(r, c)].clone()
        } else {
            Rational::zero()
        }
    });
    Ok((padded, g2, h2))
}

/// Outcome of [`verify_rcf`]: every failed check is listed.
#[derive(Clone, Debug, Default)]
pub struct RcfReport {
    pub failures: Vec<String>,
}

impl RcfReport {
    pub fn all_pass(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks similarity, block-companion shape, the divisibility chain,
/// integrality for integer input, and the nontrivial-column structure.
pub fn verify_rcf(f: &RatMatrix, rcf: &RcfResult) -> RcfReport {
    let mut failures = Vec::new();
    let n = rcf.original_order;
    let order = rcf.order();
    if f.rows() != n || !f.is_square() {
        failures.push(format!(
            "input is {}x{}, result expects order {n}",
            f.rows(),
            f.cols()
        ));
        return RcfReport { failures };
    }
    if &rcf.t * &rcf.t_inv != RatMatrix::identity(n) {
        failures.push("T * T_inv is not the identity".into());
    }
    let similar = &(&rcf.t * f) * &rcf.t_inv;
    if order < n || similar != rcf.f_bar.submatrix(0, n, 0, n) {
        failures.push("T F T^-1 differs from the canonical form".into());
    }
    let companions: Vec<RatMatrix> = rcf.blocks.iter().map(RatPoly::companion).collect();
    if RatMatrix::block_diag(&companions) != rcf.f_bar {
        failures.push("canonical form is not the block-diagonal of the listed companions".into());
    }
    for (i, pair) in rcf.blocks.windows(2).enumerate() {
        if !pair[0].divides(&pair[1]) {
            failures.push(format!(
                "block {i} polynomial does not divide block {}",
                i + 1
            ));
        }
    }
    if f.is_integer() && !rcf.f_bar.is_integer() {
        failures.push("integer input produced a non-integer canonical form".into());
    }
    if rcf.kappa != rcf.blocks.len()
        || rcf.r.len() != rcf.kappa
        || rcf.f_prime_cols.len() != rcf.kappa
    {
        failures.push("block count, start indices and nontrivial columns disagree".into());
    }
    let diff = &rcf.f_bar - &shift_matrix(order).to_rational();
    for c in 0..order {
        let col = diff.column(c);
        match rcf.r.iter().position(|&ri| ri == c) {
            Some(i) => {
                if rcf.f_prime_cols.get(i) != Some(&col) {
                    failures.push(format!(
                        "stored column {i} differs from column {c} of F_bar - S"
                    ));
                }
            }
            None => {
                if col.iter().any(|x| !x.is_zero()) {
                    failures.push(format!(
                        "column {c} of F_bar - S is nonzero but not a block start"
                    ));
                }
            }
        }
    }
    RcfReport { failures }
}

/// Block count predicted by the nullities of the irreducible factors of the
/// minimal polynomial: `max_i nullity(p_i(F)) / deg p_i`.
pub fn kappa_from_nullities(f: &RatMatrix) -> Result<usize> {
    let mu = minimal_polynomial(f)?;
    let factors = factor_squarefree_rational(&mu)?;
    Ok(factors
        .iter()
        .map(|(p, _)| p.eval_matrix(f).nullity() / p.degree().unwrap())
        .max()
        .unwrap_or(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rat;

    fn example15() -> RatMatrix {
        RatMatrix::from_ints(&[
            vec![1, 1, 0, 0],
            vec![2, 0, 0, 0],
            vec![0, 0, 1, 1],
            vec![0, 0, 2, 0],
        ])
    }

    #[test]
    fn minimal_polynomial_examples() {
        assert_eq!(
            minimal_polynomial(&RatMatrix::identity(2)).unwrap(),
            RatPoly::from_ints(&[-1, 1])
        );
        assert_eq!(
            minimal_polynomial(&example15()).unwrap(),
            RatPoly::from_ints(&[-2, -1, 1])
        );
        assert!(minimal_polynomial(&RatMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn block_example_is_fixed() {
        let f = example15();
        let rcf = rcf_transform(&f).unwrap();
        assert_eq!(rcf.f_bar, f);
        assert_eq!(rcf.t, RatMatrix::identity(4));
        assert_eq!(rcf.kappa, 2);
        assert_eq!(rcf.r, vec![0, 2]);
        let ints = |v: &[i64]| v.iter().map(|&x| rat(x, 1)).collect::<Vec<_>>();
        assert_eq!(
            rcf.f_prime_cols,
            vec![ints(&[1, 2, 0, 1]), ints(&[0, -1, 1, 2])]
        );
        assert!(verify_rcf(&f, &rcf).all_pass());
    }

    #[test]
    fn diagonal_becomes_one_block() {
        let f = RatMatrix::from_ints(&[vec![1, 0], vec![0, 2]]);
        let rcf = rcf_transform(&f).unwrap();
        assert_eq!(rcf.kappa, 1);
        assert_eq!(rcf.f_bar, RatMatrix::from_ints(&[vec![3, 1], vec![-2, 0]]));
        assert_eq!(&(&rcf.t * &f) * &rcf.t_inv, rcf.f_bar);
        assert!(verify_rcf(&f, &rcf).all_pass());
    }

    #[test]
    fn companion_input_keeps_its_form() {
        let c = RatPoly::from_ints(&[0, 0, 0, 0, 10, -4, -13, -1, 1]).companion();
        let rcf = rcf_transform(&c).unwrap();
        assert_eq!(rcf.f_bar, c);
        assert_eq!(rcf.kappa, 1);
        assert_eq!(rcf.t, RatMatrix::identity(8));
    }

    #[test]
    fn tampered_block_order_is_reported() {
        let f = RatMatrix::from_ints(&[vec![2, 0, 0], vec![0, 2, 0], vec![0, 0, 3]]);
        let rcf = rcf_transform(&f).unwrap();
        assert_eq!(rcf.blocks.len(), 2);
        let mut bad = rcf.clone();
        bad.blocks.reverse();
        let rebuilt =
            RcfResult::from_blocks(bad.t.clone(), bad.t_inv.clone(), bad.blocks.clone(), 3);
        let report = verify_rcf(&f, &rebuilt);
        assert!(report
            .failures
            .iter()
            .any(|m| m.contains("does not divide")));
    }

    #[test]
    fn padding_multiplies_last_block() {
        let c = RatPoly::from_ints(&[-1, 0, 0, 1]).companion(); // s^3 - 1
        let rcf = rcf_transform(&c).unwrap();
        let g = RatMatrix::from_ints(&[vec![1], vec![2], vec![3]]);
        let h = RatMatrix::from_ints(&[vec![1, 0, 1]]);
        let (p, g2, h2) = pad_order_pow2(&rcf, &g, &h).unwrap();
        assert_eq!(p.order(), 4);
        assert_eq!(
            p.blocks.last().unwrap(),
            &RatPoly::from_ints(&[0, -1, 0, 0, 1])
        );
        assert_eq!(g2.rows(), 4);
        assert!(g2[(3, 0)].is_zero());
        assert_eq!(h2.cols(), 4);
        assert!(verify_rcf(&c, &p).all_pass());
        let (same, _, _) = pad_order_pow2(&p, &g2, &h2).unwrap();
        assert_eq!(same.f_bar, p.f_bar);
    }

    #[test]
    fn kappa_matches_geometric_multiplicity() {
        let f = RatMatrix::from_ints(&[
            vec![2, 1, 0, 0],
            vec![0, 2, 0, 0],
            vec![0, 0, 2, 0],
            vec![0, 0, 0, 5],
        ]);
        let rcf = rcf_transform(&f).unwrap();
        assert_eq!(rcf.kappa, 2);
        assert_eq!(kappa_from_nullities(&f).unwrap(), 2);
        assert!(verify_rcf(&f, &rcf).all_pass());
    }
}
