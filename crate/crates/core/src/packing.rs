//! Coefficient packings of vectors and matrices into `R_q`.

use std::sync::Arc;

use crate::canon::RcfResult;
use crate::error::{Error, Result};
use crate::linalg::{IntMatrix, Rational};
use crate::ring::{RingElement, RingParams};

/// Shapes of one packed controller: ring degree `N`, order `n`, input
/// dimension `p`, output dimension `m` and `τ = 2^⌈log₂ m⌉`.
#[derive(Clone, Debug)]
pub struct PackingLayout {
    ring: Arc<RingParams>,
    n: usize,
    p: usize,
    m: usize,
    tau: usize,
}

impl PackingLayout {
    pub fn new(ring: &Arc<RingParams>, n: usize, p: usize, m: usize) -> Result<Self> {
        let big_n = ring.degree();
        if !n.is_power_of_two() || n > big_n {
            return Err(Error::Layout(format!(
                "order {n} must be a power of two dividing N = {big_n}"
            )));
        }
        if p == 0 || m == 0 {
            return Err(Error::Layout(
                "input and output dimensions must be positive".into(),
            ));
        }
        if n * p > big_n {
            return Err(Error::Layout(format!(
                "n·p = {} exceeds N = {big_n}",
                n * p
            )));
        }
        let tau = m.next_power_of_two();
        if tau > big_n / n {
            return Err(Error::Layout(format!(
                "tau = {tau} exceeds N/n = {}",
                big_n / n
            )));
        }
        Ok(Self {
            ring: ring.clone(),
            n,
            p,
            m,
            tau,
        })
    }

    pub fn ring(&self) -> &Arc<RingParams> {
        &self.ring
    }

    pub fn degree(&self) -> usize {
        self.ring.degree()
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn inputs(&self) -> usize {
        self.p
    }

    pub fn outputs(&self) -> usize {
        self.m
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    /// Distance `N/n` between state slots.
    pub fn spacing(&self) -> usize {
        self.degree() / self.n
    }

    /// Distance `N/(nτ)` between output slots.
    pub fn output_spacing(&self) -> usize {
        self.degree() / (self.n * self.tau)
    }

    /// `Pack(a)`: `a_i` at coefficient `i·N/n`.
    pub fn pack_vector(&self, a: &[i128]) -> Result<RingElement> {
        check_len(a.len(), self.n)?;
        pack_strided(a, self.spacing(), &self.ring)
    }

    /// Inverse of [`PackingLayout::pack_vector`] on the `N/n` grid.
    pub fn unpack_vector(&self, a: &RingElement) -> Vec<i128> {
        unpack_strided(a, self.n, self.spacing())
    }

    /// `ỹ = ȳ_0 + ȳ_1 X + … + ȳ_{p-1} X^{p-1}`.
    pub fn pack_input(&self, y: &[i128]) -> Result<RingElement> {
        check_len(y.len(), self.p)?;
        RingElement::from_coeffs(y, &self.ring)
    }

    /// `G̃ = Σ_i G̃_i X^{iN/n}` with `G̃_i = Σ_j Ḡ_{i,j} X^{-j}`.
    pub fn pack_g(&self, g: &IntMatrix) -> Result<RingElement> {
        check_shape(g, self.n, self.p, "G")?;
        let mut raw = vec![0i128; self.degree()];
        for i in 0..self.n {
            for j in 0..self.p {
                accumulate(&mut raw, (i * self.spacing()) as i64 - j as i64, g[(i, j)]);
            }
        }
        RingElement::reduce_center(&raw, &self.ring)
    }

    /// `H̃ = Σ_i H̃_i X^{iN/(nτ)}` with `H̃_i = Σ_j H̄_{i,j} X^{-jN/n}`.
    pub fn pack_h(&self, h: &IntMatrix) -> Result<RingElement> {
        check_shape(h, self.m, self.n, "H")?;
        let mut raw = vec![0i128; self.degree()];
        for i in 0..self.m {
            for j in 0..self.n {
                let e = (i * self.output_spacing()) as i64 - (j * self.spacing()) as i64;
                accumulate(&mut raw, e, h[(i, j)]);
            }
        }
        RingElement::reduce_center(&raw, &self.ring)
    }

    /// `F̃_i = Pack(F̄'_i)` for the nontrivial columns of `F̄ - S`.
    pub fn pack_f_columns(&self, rcf: &RcfResult) -> Result<Vec<RingElement>> {
        if rcf.order() != self.n {
            return Err(Error::Dimension(format!(
                "canonical form of order {} for a layout of order {}",
                rcf.order(),
                self.n
            )));
        }
        rcf.f_prime_cols
            .iter()
            .map(|col| {
                let ints = integer_entries(col)?;
                self.pack_vector(&ints)
            })
            .collect()
    }

    /// `Unpack(a) = [a_0, a_{N/(nτ)}, …, a_{(m-1)N/(nτ)}]`.
    pub fn unpack_output(&self, a: &RingElement) -> Vec<i128> {
        unpack_strided(a, self.m, self.output_spacing())
    }
}

fn check_len(got: usize, expected: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(Error::Length { expected, got })
    }
}

fn check_shape(a: &IntMatrix, rows: usize, cols: usize, name: &str) -> Result<()> {
    if a.rows() == rows && a.cols() == cols {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{name} is {}x{}, expected {rows}x{cols}",
            a.rows(),
            a.cols()
        )))
    }
}

fn integer_entries(col: &[Rational]) -> Result<Vec<i128>> {
    col.iter()
        .map(|x| {
            if !x.is_integer() {
                return Err(Error::Scaling(format!("non-integer entry {x}")));
            }
            i128::try_from(x.to_integer())
                .map_err(|_| Error::Scaling(format!("entry {x} too large")))
        })
        .collect()
}

/// Adds `value·X^e` to `raw` with `X^N = -1`.
fn accumulate(raw: &mut [i128], e: i64, value: i128) {
    let n = raw.len() as i64;
    let e = e.rem_euclid(2 * n);
    if e < n {
        raw[e as usize] += value;
    } else {
        raw[(e - n) as usize] -= value;
    }
}

/// `a_i` at coefficient `i·spacing`.
pub fn pack_strided(a: &[i128], spacing: usize, ring: &Arc<RingParams>) -> Result<RingElement> {
    if spacing == 0 || a.len() * spacing > ring.degree() {
        return Err(Error::Layout(format!(
            "{} values at spacing {spacing} do not fit N = {}",
            a.len(),
            ring.degree()
        )));
    }
    let mut raw = vec![0i128; ring.degree()];
    for (i, &v) in a.iter().enumerate() {
        raw[i * spacing] = v;
    }
    RingElement::reduce_center(&raw, ring)
}

/// Centered coefficients `0, spacing, …, (count-1)·spacing`.
pub fn unpack_strided(a: &RingElement, count: usize, spacing: usize) -> Vec<i128> {
    (0..count).map(|i| a.coeff(i * spacing)).collect()
}

/// `Slot_α(a)`: keeps the coefficients at multiples of `N/α`, zeroes the rest.
pub fn slot_alpha(a: &RingElement, alpha: usize) -> Result<RingElement> {
    let n = a.degree();
    if !alpha.is_power_of_two() || alpha > n {
        return Err(Error::InvalidArgument(format!(
            "slot count {alpha} for N = {n}"
        )));
    }
    let step = n / alpha;
    let coeffs: Vec<i128> = a
        .coeffs()
        .into_iter()
        .enumerate()
        .map(|(i, c)| if i % step == 0 { c } else { 0 })
        .collect();
    RingElement::from_coeffs(&coeffs, a.params())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canon::rcf_transform;
    use crate::linalg::RatMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ring(n: usize) -> Arc<RingParams> {
        RingParams::new(n, &[12289]).unwrap()
    }

    fn el(c: &[i128], r: &Arc<RingParams>) -> RingElement {
        RingElement::from_coeffs(c, r).unwrap()
    }

    #[test]
    fn definitional_examples() {
        let r8 = ring(8);
        let layout = PackingLayout::new(&r8, 2, 1, 1).unwrap();
        assert_eq!(
            layout.pack_vector(&[3, 5]).unwrap(),
            el(&[3, 0, 0, 0, 5], &r8)
        );
        let r4 = ring(4);
        assert_eq!(
            slot_alpha(&el(&[1, 2, 3, 4], &r4), 2).unwrap(),
            el(&[1, 0, 3], &r4)
        );
        assert_eq!(
            slot_alpha(&el(&[1, 2, 3, 4], &r4), 1).unwrap(),
            el(&[1], &r4)
        );
        assert!(slot_alpha(&el(&[1], &r4), 3).is_err());
        let wide = PackingLayout::new(&r8, 2, 2, 1).unwrap();
        assert_eq!(wide.pack_input(&[4, -7]).unwrap(), el(&[4, -7], &r8));
        let full = PackingLayout::new(&r8, 8, 1, 1).unwrap();
        assert_eq!(
            full.pack_vector(&[1, 2, 3, 4, 5, 6, 7, 8]).unwrap(),
            el(&[1, 2, 3, 4, 5, 6, 7, 8], &r8)
        );
    }

    #[test]
    fn layout_guards() {
        let r8 = ring(8);
        assert!(PackingLayout::new(&r8, 3, 1, 1).is_err());
        assert!(PackingLayout::new(&r8, 4, 3, 1).is_err());
        assert!(PackingLayout::new(&r8, 4, 2, 3).is_err());
        assert!(PackingLayout::new(&r8, 4, 2, 2).is_ok());
        assert!(PackingLayout::new(&r8, 16, 1, 1).is_err());
    }

    #[test]
    fn eq15_columns() {
        let f = RatMatrix::from_ints(&[
            vec![1, 1, 0, 0],
            vec![2, 0, 0, 0],
            vec![0, 0, 1, 1],
            vec![0, 0, 2, 0],
        ]);
        let rcf = rcf_transform(&f).unwrap();
        let r = ring(16);
        let layout = PackingLayout::new(&r, 4, 2, 2).unwrap();
        let cols = layout.pack_f_columns(&rcf).unwrap();
        assert_eq!(cols[0], layout.pack_vector(&[1, 2, 0, 1]).unwrap());
        assert_eq!(cols[1], layout.pack_vector(&[0, -1, 1, 2]).unwrap());
    }

    #[test]
    fn matrix_identities_against_dense_products() {
        let r = ring(64);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (n, p, m) in [(8, 1, 1), (4, 2, 2), (16, 4, 4), (2, 4, 1)] {
            let layout = PackingLayout::new(&r, n, p, m).unwrap();
            let g = IntMatrix::from_rows(
                (0..n)
                    .map(|_| (0..p).map(|_| rng.gen_range(-9..=9)).collect())
                    .collect(),
            )
            .unwrap();
            let h = IntMatrix::from_rows(
                (0..m)
                    .map(|_| (0..n).map(|_| rng.gen_range(-9..=9)).collect())
                    .collect(),
            )
            .unwrap();
            let (gp, hp) = (layout.pack_g(&g).unwrap(), layout.pack_h(&h).unwrap());
            for _ in 0..20 {
                let y: Vec<i128> = (0..p).map(|_| rng.gen_range(-50..=50)).collect();
                let z: Vec<i128> = (0..n).map(|_| rng.gen_range(-50..=50)).collect();
                let gy = slot_alpha(&(&gp * &layout.pack_input(&y).unwrap()), n).unwrap();
                assert_eq!(gy, layout.pack_vector(&g.mul_vec(&y).unwrap()).unwrap());
                let hz = layout.unpack_output(&(&hp * &layout.pack_vector(&z).unwrap()));
                assert_eq!(hz, h.mul_vec(&z).unwrap());
            }
        }
    }
}
