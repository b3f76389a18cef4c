//! Exact arithmetic in the negacyclic ring `Z_M[X]/(X^N + 1)`.
//!
//! `M` is either a single NTT-friendly prime `q` or the product `qP` of two
//! such primes, in which case elements are held in residue-number-system form
//! (one limb per prime) and only recombined when centered coefficients are
//! requested.

mod modulus;
mod ntt;

pub use modulus::{is_prime, smallest_ntt_prime, Modulus};
pub use ntt::NttTable;

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use crate::error::{Error, Result};

/// Ring degree and moduli. Shared behind an `Arc` by every element of the ring.
pub struct RingParams {
    degree: usize,
    moduli: Vec<Modulus>,
    tables: Vec<NttTable>,
    // q_0^{-1} mod q_1 when there are two limbs
    crt_inv: u64,
}

impl fmt::Debug for RingParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RingParams")
            .field("degree", &self.degree)
            .field("moduli", &self.moduli().collect::<Vec<_>>())
            .finish()
    }
}

impl PartialEq for RingParams {
    fn eq(&self, other: &Self) -> bool {
        self.degree == other.degree && self.moduli == other.moduli
    }
}

impl Eq for RingParams {}

impl RingParams {
    /// Builds the ring `Z_M[X]/(X^N+1)` with `M` the product of `moduli` (one or two primes,
    /// each `≡ 1 mod 2N`).
    pub fn new(degree: usize, moduli: &[u64]) -> Result<Arc<Self>> {
        if degree == 0 || !degree.is_power_of_two() {
            return Err(Error::InvalidRing(format!(
                "degree {degree} is not a power of two"
            )));
        }
        if moduli.is_empty() || moduli.len() > 2 {
            return Err(Error::InvalidRing(format!(
                "expected one or two moduli, got {}",
                moduli.len()
            )));
        }
        let mut mods = Vec::with_capacity(moduli.len());
        let mut tables = Vec::with_capacity(moduli.len());
        for &q in moduli {
            if q >= 1 << Modulus::MAX_BITS {
                return Err(Error::InvalidRing(format!("modulus {q} exceeds 2^62")));
            }
            if !is_prime(q) {
                return Err(Error::InvalidRing(format!("modulus {q} is not prime")));
            }
            if (q - 1) % (2 * degree as u64) != 0 {
                return Err(Error::InvalidRing(format!(
                    "modulus {q} is not 1 mod 2N = {}",
                    2 * degree
                )));
            }
            let m = Modulus::new(q);
            tables
                .push(NttTable::new(degree, m).ok_or_else(|| {
                    Error::InvalidRing(format!("no 2N-th root of unity mod {q}"))
                })?);
            mods.push(m);
        }
        let crt_inv = if mods.len() == 2 {
            if mods[0] == mods[1] {
                return Err(Error::InvalidRing("moduli must be distinct".into()));
            }
            mods[1]
                .inv(mods[0].value() % mods[1].value())
                .expect("distinct primes are coprime")
        } else {
            0
        };
        Ok(Arc::new(Self {
            degree,
            moduli: mods,
            tables,
            crt_inv,
        }))
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn moduli(&self) -> impl Iterator<Item = u64> + '_ {
        self.moduli.iter().map(|m| m.value())
    }

    pub fn limb_count(&self) -> usize {
        self.moduli.len()
    }

    pub fn modulus(&self, limb: usize) -> &Modulus {
        &self.moduli[limb]
    }

    pub(crate) fn table(&self, limb: usize) -> &NttTable {
        &self.tables[limb]
    }

    /// The composite modulus `M`.
    pub fn modulus_product(&self) -> u128 {
        self.moduli().map(|q| q as u128).product()
    }

    /// Recombines per-limb residues into the centered representative in `[-M/2, M/2)`.
    #[inline]
    pub(crate) fn centered(&self, residues: impl Fn(usize) -> u64) -> i128 {
        match self.moduli.len() {
            1 => self.moduli[0].center(residues(0)) as i128,
            _ => {
                let (m0, m1) = (&self.moduli[0], &self.moduli[1]);
                let r0 = residues(0);
                let r1 = residues(1);
                let diff = m1.sub(r1, m1.reduce(r0));
                let k = m1.mul(diff, self.crt_inv);
                let x = r0 as u128 + m0.value() as u128 * k as u128;
                let big = self.modulus_product();
                if 2 * x >= big {
                    x as i128 - big as i128
                } else {
                    x as i128
                }
            }
        }
    }
}

/// An element of `Z_M[X]/(X^N+1)`, exposed through centered coefficients.
///
/// Arithmetic is exact and NTT-backed. Operations that take two elements check
/// that both live in the same ring; the `std::ops` impls panic on mismatch,
/// the named methods return [`Error::ParamsMismatch`].
#[derive(Clone)]
pub struct RingElement {
    params: Arc<RingParams>,
    // limbs[l][i]: residue of coefficient i modulo moduli[l], in [0, q_l)
    limbs: Vec<Vec<u64>>,
}

impl fmt::Debug for RingElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let coeffs = self.coeffs();
        let shown: Vec<_> = coeffs.iter().take(16).collect();
        write!(f, "RingElement(N={}, {:?}", self.params.degree, shown)?;
        if coeffs.len() > 16 {
            write!(f, " ...")?;
        }
        write!(f, ")")
    }
}

impl PartialEq for RingElement {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params && self.limbs == other.limbs
    }
}

impl Eq for RingElement {}

impl RingElement {
    pub fn zero(params: &Arc<RingParams>) -> Self {
        Self {
            params: params.clone(),
            limbs: vec![vec![0; params.degree]; params.limb_count()],
        }
    }

    /// Centered reduction of `raw` (exactly `N` integers) into the ring.
    pub fn reduce_center(raw: &[i128], params: &Arc<RingParams>) -> Result<Self> {
        if raw.len() != params.degree {
            return Err(Error::Length {
                expected: params.degree,
                got: raw.len(),
            });
        }
        let limbs = params
            .moduli
            .iter()
            .map(|m| raw.iter().map(|&c| m.from_i128(c)).collect())
            .collect();
        Ok(Self {
            params: params.clone(),
            limbs,
        })
    }

    /// Like [`RingElement::reduce_center`] but zero-extends a shorter coefficient list.
    pub fn from_coeffs(coeffs: &[i128], params: &Arc<RingParams>) -> Result<Self> {
        if coeffs.len() > params.degree {
            return Err(Error::Length {
                expected: params.degree,
                got: coeffs.len(),
            });
        }
        let mut raw = coeffs.to_vec();
        raw.resize(params.degree, 0);
        Self::reduce_center(&raw, params)
    }

    pub fn constant(value: i128, params: &Arc<RingParams>) -> Self {
        let mut e = Self::zero(params);
        for (limb, m) in e.limbs.iter_mut().zip(&params.moduli) {
            limb[0] = m.from_i128(value);
        }
        e
    }

    /// `X^k` for any integer `k` (negative exponents via `X^{-i} = -X^{N-i}`).
    pub fn monomial(k: i64, params: &Arc<RingParams>) -> Self {
        Self::constant(1, params).monomial_mul(k)
    }

    pub fn params(&self) -> &Arc<RingParams> {
        &self.params
    }

    pub fn degree(&self) -> usize {
        self.params.degree
    }

    pub fn coeff(&self, i: usize) -> i128 {
        self.params.centered(|l| self.limbs[l][i])
    }

    /// Centered coefficients in `[-M/2, M/2)`.
    pub fn coeffs(&self) -> Vec<i128> {
        (0..self.params.degree).map(|i| self.coeff(i)).collect()
    }

    /// Infinity norm of the centered coefficient vector.
    pub fn norm(&self) -> u128 {
        (0..self.params.degree)
            .map(|i| self.coeff(i).unsigned_abs())
            .max()
            .unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.limbs.iter().all(|l| l.iter().all(|&c| c == 0))
    }

    pub(crate) fn limbs(&self) -> &[Vec<u64>] {
        &self.limbs
    }

    pub(crate) fn from_limbs(limbs: Vec<Vec<u64>>, params: &Arc<RingParams>) -> Self {
        debug_assert_eq!(limbs.len(), params.limb_count());
        Self {
            params: params.clone(),
            limbs,
        }
    }

    fn check(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.params, &other.params) || self.params == other.params {
            Ok(())
        } else {
            Err(Error::ParamsMismatch)
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(&Modulus, u64, u64) -> u64) -> Self {
        let limbs = self
            .limbs
            .iter()
            .zip(&other.limbs)
            .zip(&self.params.moduli)
            .map(|((a, b), m)| a.iter().zip(b).map(|(&x, &y)| f(m, x, y)).collect())
            .collect();
        Self {
            params: self.params.clone(),
            limbs,
        }
    }

    pub fn ring_add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(self.zip_with(other, |m, x, y| m.add(x, y)))
    }

    pub fn ring_sub(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(self.zip_with(other, |m, x, y| m.sub(x, y)))
    }

    pub(crate) fn add_assign_unchecked(&mut self, other: &Self) {
        for ((a, b), m) in self
            .limbs
            .iter_mut()
            .zip(&other.limbs)
            .zip(&self.params.moduli)
        {
            for (x, &y) in a.iter_mut().zip(b) {
                *x = m.add(*x, y);
            }
        }
    }

    /// Negacyclic product, computed with a per-limb NTT.
    pub fn ring_mul(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let limbs = (0..self.params.limb_count())
            .map(|l| {
                let m = &self.params.moduli[l];
                let table = &self.params.tables[l];
                let mut a = self.limbs[l].clone();
                let mut b = other.limbs[l].clone();
                table.forward(&mut a);
                table.forward(&mut b);
                for (x, y) in a.iter_mut().zip(&b) {
                    *x = m.mul(*x, *y);
                }
                table.inverse(&mut a);
                a
            })
            .collect();
        Ok(Self {
            params: self.params.clone(),
            limbs,
        })
    }

    /// Multiplies every coefficient by the integer `k`.
    pub fn scalar_mul(&self, k: i128) -> Self {
        let limbs = self
            .limbs
            .iter()
            .zip(&self.params.moduli)
            .map(|(a, m)| {
                let kr = m.from_i128(k);
                let ks = m.shoup(kr);
                a.iter().map(|&x| m.mul_shoup(x, kr, ks)).collect()
            })
            .collect();
        Self {
            params: self.params.clone(),
            limbs,
        }
    }

    /// `X^k · self` for any integer `k`; `X^{2N} = 1` so `k` is taken mod 2N.
    pub fn monomial_mul(&self, k: i64) -> Self {
        let n = self.params.degree;
        let two_n = 2 * n as i64;
        let k = k.rem_euclid(two_n) as usize;
        let (shift, flip_all) = if k >= n { (k - n, true) } else { (k, false) };
        let limbs = self
            .limbs
            .iter()
            .zip(&self.params.moduli)
            .map(|(a, m)| {
                let mut out = vec![0; n];
                for (i, &c) in a.iter().enumerate() {
                    let j = i + shift;
                    let (pos, flip) = if j >= n {
                        (j - n, !flip_all)
                    } else {
                        (j, flip_all)
                    };
                    out[pos] = if flip { m.neg(c) } else { c };
                }
                out
            })
            .collect();
        Self {
            params: self.params.clone(),
            limbs,
        }
    }

    /// The ring automorphism `a(X) -> a(X^theta)` for odd `theta`.
    pub fn automorphism(&self, theta: u64) -> Result<Self> {
        if theta.is_multiple_of(2) {
            return Err(Error::EvenExponent(theta));
        }
        Ok(self.automorphism_unchecked(theta))
    }

    pub(crate) fn automorphism_unchecked(&self, theta: u64) -> Self {
        let n = self.params.degree;
        let two_n = 2 * n as u64;
        let theta = theta % two_n;
        let limbs = self
            .limbs
            .iter()
            .zip(&self.params.moduli)
            .map(|(a, m)| {
                let mut out = vec![0; n];
                for (i, &c) in a.iter().enumerate() {
                    let e = (i as u64 * theta % two_n) as usize;
                    if e < n {
                        out[e] = c;
                    } else {
                        out[e - n] = m.neg(c);
                    }
                }
                out
            })
            .collect();
        Self {
            params: self.params.clone(),
            limbs,
        }
    }

    /// Re-reads the centered coefficients of `self` in another ring of the same degree.
    pub fn lift_to(&self, target: &Arc<RingParams>) -> Result<Self> {
        if target.degree != self.params.degree {
            return Err(Error::ParamsMismatch);
        }
        Self::reduce_center(&self.coeffs(), target)
    }

    /// Serializes as: `u32 N`, `u32 k` (modulus count), `k × u64` moduli, then
    /// `N × i128` centered coefficients, all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.params.degree;
        let mut out = Vec::with_capacity(8 + 8 * self.params.limb_count() + 16 * n);
        out.extend_from_slice(&(n as u32).to_le_bytes());
        out.extend_from_slice(&(self.params.limb_count() as u32).to_le_bytes());
        for q in self.params.moduli() {
            out.extend_from_slice(&q.to_le_bytes());
        }
        for c in self.coeffs() {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }

    /// Parses [`RingElement::to_bytes`] output, checking it against `params`.
    /// Returns the element and the number of bytes consumed.
    pub fn from_bytes(bytes: &[u8], params: &Arc<RingParams>) -> Result<(Self, usize)> {
        let mut cur = ByteCursor::new(bytes);
        let n = cur.u32()? as usize;
        let k = cur.u32()? as usize;
        if n != params.degree || k != params.limb_count() {
            return Err(Error::Format(format!(
                "ring element header (N={n}, moduli={k}) does not match parameters"
            )));
        }
        for expected in params.moduli() {
            if cur.u64()? != expected {
                return Err(Error::Format("modulus mismatch".into()));
            }
        }
        let mut coeffs = Vec::with_capacity(n);
        for _ in 0..n {
            coeffs.push(cur.i128()?);
        }
        let half = (params.modulus_product() / 2) as i128;
        if coeffs.iter().any(|&c| c < -half - 1 || c > half) {
            return Err(Error::Format(
                "coefficient outside the centered range".into(),
            ));
        }
        Ok((Self::reduce_center(&coeffs, params)?, cur.pos))
    }
}

pub(crate) struct ByteCursor<'a> {
    bytes: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> ByteCursor<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("unexpected end of input".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn i128(&mut self) -> Result<i128> {
        Ok(i128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }

    pub(crate) fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }
}

impl Add for &RingElement {
    type Output = RingElement;
    fn add(self, rhs: &RingElement) -> RingElement {
        self.ring_add(rhs).expect("ring mismatch in addition")
    }
}

impl Sub for &RingElement {
    type Output = RingElement;
    fn sub(self, rhs: &RingElement) -> RingElement {
        self.ring_sub(rhs).expect("ring mismatch in subtraction")
    }
}

impl Mul for &RingElement {
    type Output = RingElement;
    fn mul(self, rhs: &RingElement) -> RingElement {
        self.ring_mul(rhs).expect("ring mismatch in multiplication")
    }
}

impl Neg for &RingElement {
    type Output = RingElement;
    fn neg(self) -> RingElement {
        let limbs = self
            .limbs
            .iter()
            .zip(&self.params.moduli)
            .map(|(a, m)| a.iter().map(|&x| m.neg(x)).collect())
            .collect();
        RingElement {
            params: self.params.clone(),
            limbs,
        }
    }
}
