//! Ring-LWE encryption with gadget external products and key-switched automorphisms.
//!
//! Ciphertexts live over `q`. Multipliers and automorphism keys live over `qP`
//! and are kept in NTT form; an external product accumulates over `qP` and
//! rescales by `P^{-1}` back to `q`.

mod container;
mod sample;

pub use container::{ContainerKind, CONTAINER_MAGIC, CONTAINER_VERSION};

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ring::{smallest_ntt_prime, ByteCursor, RingElement, RingParams};

/// Standard deviation of the discrete Gaussian error before truncation.
pub const ERROR_STD_DEV: f64 = 3.2;

/// Gadget base `ν`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GadgetBase {
    /// `ν = q`: a single digit per component.
    Full,
    /// `ν = 2^bits`.
    PowerOfTwo(u32),
}

/// Cryptosystem parameters: the rings over `q` and `qP`, the gadget and the error bound.
pub struct EncParams {
    q: u64,
    p: u64,
    base: GadgetBase,
    digits: usize,
    sigma: f64,
    ring_q: Arc<RingParams>,
    ring_qp: Arc<RingParams>,
    // P * ν^j mod q
    p_nu_pow: Vec<u64>,
    p_inv_q: u64,
    noiseless: bool,
    digest: [u8; 32],
}

impl fmt::Debug for EncParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EncParams")
            .field("degree", &self.degree())
            .field("q", &self.q)
            .field("p", &self.p)
            .field("base", &self.base)
            .field("digits", &self.digits)
            .field("sigma", &self.sigma)
            .field("noiseless", &self.noiseless)
            .finish()
    }
}

impl PartialEq for EncParams {
    fn eq(&self, other: &Self) -> bool {
        self.digest == other.digest
    }
}

impl EncParams {
    pub fn new(degree: usize, q: u64, p: u64, base: GadgetBase, sigma: f64) -> Result<Arc<Self>> {
        Self::build(degree, q, p, base, sigma, false)
    }

    /// `N = degree`, `q` and `P` the smallest NTT-friendly primes above `2^log_q`
    /// and `2^log_p`, `ν = q`, `σ = 19.2`.
    pub fn with_bits(degree: usize, log_q: u32, log_p: u32) -> Result<Arc<Self>> {
        if !(2..=61).contains(&log_q) || !(2..=61).contains(&log_p) {
            return Err(Error::InvalidRing(format!(
                "modulus sizes 2^{log_q}, 2^{log_p} out of range"
            )));
        }
        let find = |bits: u32, skip: Option<u64>| -> Result<u64> {
            let mut lower = 1u64 << bits;
            loop {
                let prime = smallest_ntt_prime(lower, degree).ok_or_else(|| {
                    Error::InvalidRing(format!("no NTT prime above 2^{bits} for N = {degree}"))
                })?;
                if Some(prime) != skip {
                    return Ok(prime);
                }
                lower = prime + 1;
            }
        };
        let q = find(log_q, None)?;
        let p = find(log_p, Some(q))?;
        Self::new(degree, q, p, GadgetBase::Full, 19.2)
    }

    /// `N = 2^13`, `q ≈ 2^56`, `P ≈ 2^51`, `ν = q`, `σ = 19.2`.
    pub fn benchmark() -> Arc<Self> {
        Self::with_bits(1 << 13, 56, 51).expect("benchmark parameters are valid")
    }

    /// Same parameters, but every error polynomial is zero and the masks of
    /// multipliers and automorphism keys are multiples of `P`, so external
    /// products and automorphisms are exact.
    #[cfg(feature = "zero-noise")]
    pub fn noiseless(&self) -> Arc<Self> {
        Self::build(self.degree(), self.q, self.p, self.base, self.sigma, true)
            .expect("parameters were already validated")
    }

    fn build(
        degree: usize,
        q: u64,
        p: u64,
        base: GadgetBase,
        sigma: f64,
        noiseless: bool,
    ) -> Result<Arc<Self>> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "error bound {sigma} must be positive"
            )));
        }
        let ring_q = RingParams::new(degree, &[q])?;
        let ring_qp = RingParams::new(degree, &[q, p])?;
        let digits = match base {
            GadgetBase::Full => 1,
            GadgetBase::PowerOfTwo(bits) => {
                if bits == 0 || bits >= 63 {
                    return Err(Error::InvalidArgument(format!("gadget base 2^{bits}")));
                }
                let mut d = 1usize;
                while (d as u32) * bits < 64 && 1u128 << (d as u32 * bits) < q as u128 {
                    d += 1;
                }
                d
            }
        };
        let mq = ring_q.modulus(0);
        let nu = match base {
            GadgetBase::Full => 0,
            GadgetBase::PowerOfTwo(bits) => mq.reduce_u128(1u128 << bits),
        };
        let mut p_nu_pow = Vec::with_capacity(digits);
        let mut acc = mq.reduce(p);
        for _ in 0..digits {
            p_nu_pow.push(acc);
            acc = mq.mul(acc, nu);
        }
        let p_inv_q = mq
            .inv(mq.reduce(p))
            .ok_or_else(|| Error::InvalidRing("P is not invertible modulo q".into()))?;
        let mut params = Self {
            q,
            p,
            base,
            digits,
            sigma,
            ring_q,
            ring_qp,
            p_nu_pow,
            p_inv_q,
            noiseless,
            digest: [0; 32],
        };
        params.digest = Sha256::digest(params.describe()).into();
        Ok(Arc::new(params))
    }

    fn describe(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.degree() as u32).to_le_bytes());
        out.extend_from_slice(&self.q.to_le_bytes());
        out.extend_from_slice(&self.p.to_le_bytes());
        let base = match self.base {
            GadgetBase::Full => 0u32,
            GadgetBase::PowerOfTwo(bits) => bits,
        };
        out.extend_from_slice(&base.to_le_bytes());
        out.extend_from_slice(&self.sigma.to_le_bytes());
        out.push(self.noiseless as u8);
        out
    }

    /// Serialized form used inside key containers.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.describe()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(Arc<Self>, usize)> {
        let mut cur = ByteCursor::new(bytes);
        let degree = cur.u32()? as usize;
        let q = cur.u64()?;
        let p = cur.u64()?;
        let base = match cur.u32()? {
            0 => GadgetBase::Full,
            bits => GadgetBase::PowerOfTwo(bits),
        };
        let sigma = f64::from_bits(cur.u64()?);
        let noiseless = cur.u8()? != 0;
        #[cfg(not(feature = "zero-noise"))]
        if noiseless {
            return Err(Error::Format(
                "noiseless parameters need the zero-noise feature".into(),
            ));
        }
        let params = Self::build(degree, q, p, base, sigma, noiseless)?;
        Ok((params, cur.pos))
    }

    pub fn degree(&self) -> usize {
        self.ring_q.degree()
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn base(&self) -> GadgetBase {
        self.base
    }

    /// `ν` as a real number.
    pub fn nu(&self) -> f64 {
        match self.base {
            GadgetBase::Full => self.q as f64,
            GadgetBase::PowerOfTwo(bits) => 2f64.powi(bits as i32),
        }
    }

    /// Number of gadget digits `d = ⌈log_ν q⌉`.
    pub fn digits(&self) -> usize {
        self.digits
    }

    /// Error bound `σ`.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `P^{-1}·d·N·σ·ν + (N+1)/2`.
    pub fn sigma_mult(&self) -> f64 {
        let n = self.degree() as f64;
        self.digits as f64 * n * self.sigma * self.nu() / self.p as f64 + (n + 1.0) / 2.0
    }

    pub fn is_noiseless(&self) -> bool {
        self.noiseless
    }

    /// The plaintext/ciphertext ring `R_q`.
    pub fn ring(&self) -> &Arc<RingParams> {
        &self.ring_q
    }

    /// The extended ring `R_{qP}`.
    pub fn ring_qp(&self) -> &Arc<RingParams> {
        &self.ring_qp
    }

    /// SHA-256 of the serialized parameters.
    pub fn digest(&self) -> &[u8; 32] {
        &self.digest
    }

    fn check_q(&self, x: &RingElement) -> Result<()> {
        if **x.params() == *self.ring_q {
            Ok(())
        } else {
            Err(Error::ParamsMismatch)
        }
    }

    fn check_digest(&self, digest: &[u8; 32]) -> Result<()> {
        if *digest == self.digest {
            Ok(())
        } else {
            Err(Error::ParamsMismatch)
        }
    }

    /// Signed base-ν digits of every coefficient of `x` (over `q`).
    /// `digits[j][i]` is digit `j` of coefficient `i`; the last digit absorbs any carry.
    fn decompose(&self, x: &RingElement) -> Vec<Vec<i64>> {
        let coeffs = x.limbs()[0]
            .iter()
            .map(|&c| self.ring_q.modulus(0).center(c));
        match self.base {
            GadgetBase::Full => vec![coeffs.collect()],
            GadgetBase::PowerOfTwo(bits) => {
                let n = self.degree();
                let nu = 1i64 << bits;
                let mut out = vec![vec![0i64; n]; self.digits];
                for (i, mut c) in coeffs.enumerate() {
                    for (j, digit) in out.iter_mut().enumerate() {
                        if j + 1 == self.digits {
                            digit[i] = c;
                        } else {
                            let r = (c + nu / 2).rem_euclid(nu) - nu / 2;
                            digit[i] = r;
                            c = (c - r) >> bits;
                        }
                    }
                }
                out
            }
        }
    }

    fn to_ntt_qp(&self, x: &RingElement) -> Vec<Vec<u64>> {
        to_ntt(x.limbs(), &self.ring_qp)
    }

    /// `x·P^{-1}` rounded, from `R_{qP}` limbs in coefficient form to `R_q`.
    fn rescale(&self, limbs: &[Vec<u64>]) -> RingElement {
        let mq = self.ring_q.modulus(0);
        let mp = self.ring_qp.modulus(1);
        let out = limbs[0]
            .iter()
            .zip(&limbs[1])
            .map(|(&xq, &xp)| {
                let r = mq.from_i64(mp.center(xp));
                mq.mul(mq.sub(xq, r), self.p_inv_q)
            })
            .collect();
        RingElement::from_limbs(vec![out], &self.ring_q)
    }

    /// `Σ_k Σ_j digit_j(polys[k]) · cols[k·d + j]` over `qP`, rescaled to `q`.
    fn gadget_inner(
        &self,
        polys: &[&RingElement],
        cols: &[GadgetColumn],
    ) -> (RingElement, RingElement) {
        let n = self.degree();
        let ring = &self.ring_qp;
        let mut acc_b = vec![vec![0u64; n]; 2];
        let mut acc_a = vec![vec![0u64; n]; 2];
        let mut col = cols.iter();
        for poly in polys {
            for digit in self.decompose(poly) {
                let column = col.next().expect("column count matches the decomposition");
                for l in 0..2 {
                    let m = ring.modulus(l);
                    let mut lifted: Vec<u64> = digit.iter().map(|&v| m.from_i64(v)).collect();
                    ring.table(l).forward(&mut lifted);
                    for (i, &x) in lifted.iter().enumerate() {
                        acc_b[l][i] = m.add(acc_b[l][i], m.mul(x, column.b[l][i]));
                        acc_a[l][i] = m.add(acc_a[l][i], m.mul(x, column.a[l][i]));
                    }
                }
            }
        }
        for l in 0..2 {
            ring.table(l).inverse(&mut acc_b[l]);
            ring.table(l).inverse(&mut acc_a[l]);
        }
        (self.rescale(&acc_b), self.rescale(&acc_a))
    }
}

fn to_ntt(limbs: &[Vec<u64>], ring: &RingParams) -> Vec<Vec<u64>> {
    limbs
        .iter()
        .enumerate()
        .map(|(l, limb)| {
            let mut v = limb.clone();
            ring.table(l).forward(&mut v);
            v
        })
        .collect()
}

fn from_ntt(limbs: &[Vec<u64>], ring: &Arc<RingParams>) -> RingElement {
    let coeffs = limbs
        .iter()
        .enumerate()
        .map(|(l, limb)| {
            let mut v = limb.clone();
            ring.table(l).inverse(&mut v);
            v
        })
        .collect();
    RingElement::from_limbs(coeffs, ring)
}

/// `-a·s + e` in NTT form, given `a` and `s` in NTT form and `e` in coefficient form.
fn mask_product(
    a: &[Vec<u64>],
    s: &[Vec<u64>],
    e: &RingElement,
    ring: &RingParams,
) -> Vec<Vec<u64>> {
    let mut out = to_ntt(e.limbs(), ring);
    for (l, limb) in out.iter_mut().enumerate() {
        let m = ring.modulus(l);
        for (i, x) in limb.iter_mut().enumerate() {
            *x = m.sub(*x, m.mul(a[l][i], s[l][i]));
        }
    }
    out
}

/// A ternary secret key, cached in NTT form for both rings.
#[derive(Clone)]
pub struct SecretKey {
    params: Arc<EncParams>,
    s: RingElement,
    s_ntt_q: Vec<Vec<u64>>,
    s_ntt_qp: Vec<Vec<u64>>,
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SecretKey")
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

impl SecretKey {
    pub fn from_element(s: RingElement, params: &Arc<EncParams>) -> Result<Self> {
        params.check_q(&s)?;
        if s.coeffs().iter().any(|c| c.abs() > 1) {
            return Err(Error::InvalidArgument("secret key must be ternary".into()));
        }
        let s_qp = s.lift_to(params.ring_qp())?;
        Ok(Self {
            params: params.clone(),
            s_ntt_q: to_ntt(s.limbs(), params.ring()),
            s_ntt_qp: params.to_ntt_qp(&s_qp),
            s,
        })
    }

    pub fn params(&self) -> &Arc<EncParams> {
        &self.params
    }

    pub fn element(&self) -> &RingElement {
        &self.s
    }

    pub fn to_container(&self) -> Vec<u8> {
        let mut payload = self.params.to_bytes();
        payload.extend(self.s.to_bytes());
        container::seal(ContainerKind::SecretKey, &self.params, &payload)
    }

    /// Reads a key together with the parameters it was generated for.
    pub fn from_container(bytes: &[u8]) -> Result<Self> {
        let (digest, payload) = container::open_any(bytes, ContainerKind::SecretKey)?;
        let (params, used) = EncParams::from_bytes(payload)?;
        params.check_digest(&digest)?;
        let (s, _) = RingElement::from_bytes(&payload[used..], params.ring())?;
        Self::from_element(s, &params)
    }
}

/// An RLWE ciphertext `(b, a)` over `q`; decrypts to `b + a·s`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ciphertext {
    b: RingElement,
    a: RingElement,
}

impl Ciphertext {
    pub fn new(b: RingElement, a: RingElement) -> Result<Self> {
        if b.params() != a.params() {
            return Err(Error::ParamsMismatch);
        }
        Ok(Self { b, a })
    }

    /// `(m, 0)`: decrypts to `m` under any key.
    pub fn trivial(m: RingElement) -> Self {
        let a = RingElement::zero(m.params());
        Self { b: m, a }
    }

    pub fn b(&self) -> &RingElement {
        &self.b
    }

    pub fn a(&self) -> &RingElement {
        &self.a
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            b: self.b.ring_add(&other.b)?,
            a: self.a.ring_add(&other.a)?,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            b: self.b.ring_sub(&other.b)?,
            a: self.a.ring_sub(&other.a)?,
        })
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        self.b.add_assign_unchecked(&other.b);
        self.a.add_assign_unchecked(&other.a);
    }

    pub fn pt_mul(&self, p: &RingElement) -> Result<Self> {
        Ok(Self {
            b: p.ring_mul(&self.b)?,
            a: p.ring_mul(&self.a)?,
        })
    }

    pub fn scalar_mul(&self, k: i128) -> Self {
        Self {
            b: self.b.scalar_mul(k),
            a: self.a.scalar_mul(k),
        }
    }

    /// Multiplication by `X^k`.
    pub fn monomial_mul(&self, k: i64) -> Self {
        Self {
            b: self.b.monomial_mul(k),
            a: self.a.monomial_mul(k),
        }
    }

    /// `(Ψ_θ b, Ψ_θ a)`: decrypts under `Ψ_θ(s)`.
    fn automorphism_raw(&self, theta: u64) -> Self {
        Self {
            b: self.b.automorphism_unchecked(theta),
            a: self.a.automorphism_unchecked(theta),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.b.to_bytes();
        out.extend(self.a.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8], params: &EncParams) -> Result<(Self, usize)> {
        let (b, used_b) = RingElement::from_bytes(bytes, params.ring())?;
        let (a, used_a) = RingElement::from_bytes(&bytes[used_b..], params.ring())?;
        Ok((Self { b, a }, used_b + used_a))
    }

    pub fn to_container(&self, params: &EncParams) -> Vec<u8> {
        container::seal(ContainerKind::Ciphertext, params, &self.to_bytes())
    }

    pub fn from_container(bytes: &[u8], params: &EncParams) -> Result<Self> {
        let payload = container::open(bytes, ContainerKind::Ciphertext, params)?;
        Ok(Self::from_bytes(payload, params)?.0)
    }
}

/// One gadget column `(b, a)` over `qP`, in NTT form.
#[derive(Clone, Debug, PartialEq)]
struct GadgetColumn {
    b: Vec<Vec<u64>>,
    a: Vec<Vec<u64>>,
}

impl GadgetColumn {
    fn to_elements(&self, ring: &Arc<RingParams>) -> (RingElement, RingElement) {
        (from_ntt(&self.b, ring), from_ntt(&self.a, ring))
    }

    fn from_elements(b: &RingElement, a: &RingElement, params: &EncParams) -> Self {
        Self {
            b: params.to_ntt_qp(b),
            a: params.to_ntt_qp(a),
        }
    }
}

fn columns_to_bytes(cols: &[GadgetColumn], params: &EncParams) -> Vec<u8> {
    let mut out = (cols.len() as u32).to_le_bytes().to_vec();
    for col in cols {
        let (b, a) = col.to_elements(params.ring_qp());
        out.extend(b.to_bytes());
        out.extend(a.to_bytes());
    }
    out
}

fn columns_from_bytes(bytes: &[u8], params: &EncParams) -> Result<(Vec<GadgetColumn>, usize)> {
    let mut cur = ByteCursor::new(bytes);
    let count = cur.u32()? as usize;
    let mut pos = cur.pos;
    let mut cols = Vec::with_capacity(count);
    for _ in 0..count {
        let (b, used) = RingElement::from_bytes(&bytes[pos..], params.ring_qp())?;
        pos += used;
        let (a, used) = RingElement::from_bytes(&bytes[pos..], params.ring_qp())?;
        pos += used;
        cols.push(GadgetColumn::from_elements(&b, &a, params));
    }
    Ok((cols, pos))
}

/// `Enc'(m)`: a `2 × 2d` matrix over `qP`. Column `j < d` encrypts `P·ν^j·m`
/// in its `b` row; column `d + j` carries `P·ν^j·m` in its `a` row.
#[derive(Clone, Debug, PartialEq)]
pub struct GadgetCiphertext {
    digest: [u8; 32],
    cols: Vec<GadgetColumn>,
}

impl GadgetCiphertext {
    /// `(rows, cols)`, always `(2, 2d)`.
    pub fn shape(&self) -> (usize, usize) {
        (2, self.cols.len())
    }

    /// The matrix in coefficient form: `[row b, row a]`.
    pub fn matrix(&self, params: &EncParams) -> Result<[Vec<RingElement>; 2]> {
        params.check_digest(&self.digest)?;
        let (b, a) = self
            .cols
            .iter()
            .map(|c| c.to_elements(params.ring_qp()))
            .unzip();
        Ok([b, a])
    }

    pub fn to_container(&self, params: &EncParams) -> Vec<u8> {
        container::seal(
            ContainerKind::Gadget,
            params,
            &columns_to_bytes(&self.cols, params),
        )
    }

    pub fn from_container(bytes: &[u8], params: &EncParams) -> Result<Self> {
        let payload = container::open(bytes, ContainerKind::Gadget, params)?;
        let (cols, _) = columns_from_bytes(payload, params)?;
        if cols.len() != 2 * params.digits() {
            return Err(Error::Format(format!("gadget with {} columns", cols.len())));
        }
        Ok(Self {
            digest: *params.digest(),
            cols,
        })
    }
}

/// Key-switching material for `X -> X^θ`: `d` columns with `b + a·s = e + P·ν^j·Ψ_θ(s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AutomorphismKey {
    theta: u64,
    digest: [u8; 32],
    cols: Vec<GadgetColumn>,
}

impl AutomorphismKey {
    /// Exponent reduced modulo `2N`.
    pub fn theta(&self) -> u64 {
        self.theta
    }

    /// `(rows, cols)`, always `(2, d)`.
    pub fn shape(&self) -> (usize, usize) {
        (2, self.cols.len())
    }

    pub fn matrix(&self, params: &EncParams) -> Result<[Vec<RingElement>; 2]> {
        params.check_digest(&self.digest)?;
        let (b, a) = self
            .cols
            .iter()
            .map(|c| c.to_elements(params.ring_qp()))
            .unzip();
        Ok([b, a])
    }

    pub fn to_container(&self, params: &EncParams) -> Vec<u8> {
        let mut payload = self.theta.to_le_bytes().to_vec();
        payload.extend(columns_to_bytes(&self.cols, params));
        container::seal(ContainerKind::AutomorphismKey, params, &payload)
    }

    pub fn from_container(bytes: &[u8], params: &EncParams) -> Result<Self> {
        let payload = container::open(bytes, ContainerKind::AutomorphismKey, params)?;
        let mut cur = ByteCursor::new(payload);
        let theta = cur.u64()?;
        let (cols, _) = columns_from_bytes(cur.rest(), params)?;
        if cols.len() != params.digits()
            || checked_theta(theta, params.degree()).ok() != Some(theta)
        {
            return Err(Error::Format("malformed automorphism key".into()));
        }
        Ok(Self {
            theta,
            digest: *params.digest(),
            cols,
        })
    }
}

/// Reduces `θ` modulo `2N` and rejects even exponents and the identity.
fn checked_theta(theta: u64, degree: usize) -> Result<u64> {
    if theta.is_multiple_of(2) {
        return Err(Error::EvenExponent(theta));
    }
    let reduced = theta % (2 * degree as u64);
    if reduced == 1 {
        return Err(Error::InvalidArgument(format!(
            "automorphism exponent {theta} is the identity modulo 2N"
        )));
    }
    Ok(reduced)
}

/// Deterministic ternary secret from `seed`.
pub fn keygen(params: &Arc<EncParams>, seed: u64) -> SecretKey {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let s = sample::ternary(params.ring(), &mut rng);
    SecretKey::from_element(s, params).expect("sampled key is ternary")
}

/// `(b, a)` with `a` uniform and `b = -a·s + e + m`.
pub fn encrypt<R: RngCore + ?Sized>(
    m: &RingElement,
    sk: &SecretKey,
    rng: &mut R,
) -> Result<Ciphertext> {
    let params = &sk.params;
    params.check_q(m)?;
    let ring = params.ring();
    let a = sample::uniform(ring, rng);
    let mut e = sample::error(params, ring, rng);
    e.add_assign_unchecked(m);
    let a_ntt = to_ntt(a.limbs(), ring);
    let b = from_ntt(&mask_product(&a_ntt, &sk.s_ntt_q, &e, ring), ring);
    Ok(Ciphertext { b, a })
}

/// `b + a·s`, centered modulo `q`.
pub fn decrypt(c: &Ciphertext, sk: &SecretKey) -> Result<RingElement> {
    let params = &sk.params;
    params.check_q(&c.b)?;
    params.check_q(&c.a)?;
    let ring = params.ring();
    let mut a = to_ntt(c.a.limbs(), ring);
    let m = ring.modulus(0);
    for (x, s) in a[0].iter_mut().zip(&sk.s_ntt_q[0]) {
        *x = m.mul(*x, *s);
    }
    let mut out = from_ntt(&a, ring);
    out.add_assign_unchecked(&c.b);
    Ok(out)
}

pub fn ct_add(c: &Ciphertext, other: &Ciphertext) -> Result<Ciphertext> {
    c.add(other)
}

pub fn pt_mul(p: &RingElement, c: &Ciphertext) -> Result<Ciphertext> {
    c.pt_mul(p)
}

/// Fresh `(b, a)` over `qP` with `b = -a·s + e`, in NTT form.
fn qp_sample<R: RngCore + ?Sized>(sk: &SecretKey, rng: &mut R) -> GadgetColumn {
    let params = &sk.params;
    let ring = params.ring_qp();
    let a = if params.noiseless {
        sample::uniform(params.ring(), rng)
            .lift_to(ring)
            .expect("same degree")
            .scalar_mul(params.p as i128)
    } else {
        sample::uniform(ring, rng)
    };
    let e = sample::error(params, ring, rng);
    let a = to_ntt(a.limbs(), ring);
    let b = mask_product(&a, &sk.s_ntt_qp, &e, ring);
    GadgetColumn { b, a }
}

/// `P·ν^j·x` over `qP` in NTT form, for `x` over `q`.
fn scaled_gadget_term(x: &RingElement, j: usize, params: &EncParams) -> Vec<Vec<u64>> {
    let mq = params.ring().modulus(0);
    let factor = params.p_nu_pow[j];
    let limb_q = x.limbs()[0].iter().map(|&c| mq.mul(c, factor)).collect();
    let limb_p = vec![0; params.degree()];
    to_ntt(&[limb_q, limb_p], params.ring_qp())
}

fn add_ntt(acc: &mut [Vec<u64>], x: &[Vec<u64>], ring: &RingParams) {
    for (l, (acc, x)) in acc.iter_mut().zip(x).enumerate() {
        let m = ring.modulus(l);
        for (a, &b) in acc.iter_mut().zip(x) {
            *a = m.add(*a, b);
        }
    }
}

/// `Enc'(m)` for `m` over `q`.
pub fn encrypt_gadget<R: RngCore + ?Sized>(
    m: &RingElement,
    sk: &SecretKey,
    rng: &mut R,
) -> Result<GadgetCiphertext> {
    let params = &sk.params;
    params.check_q(m)?;
    let d = params.digits;
    let mut cols = Vec::with_capacity(2 * d);
    for j in 0..d {
        let mut col = qp_sample(sk, rng);
        add_ntt(
            &mut col.b,
            &scaled_gadget_term(m, j, params),
            params.ring_qp(),
        );
        cols.push(col);
    }
    for j in 0..d {
        let mut col = qp_sample(sk, rng);
        add_ntt(
            &mut col.a,
            &scaled_gadget_term(m, j, params),
            params.ring_qp(),
        );
        cols.push(col);
    }
    Ok(GadgetCiphertext {
        digest: params.digest,
        cols,
    })
}

/// Key-switching key for `X -> X^θ`. `θ` is taken modulo `2N`.
pub fn gen_automorphism_key<R: RngCore + ?Sized>(
    theta: u64,
    sk: &SecretKey,
    rng: &mut R,
) -> Result<AutomorphismKey> {
    let params = &sk.params;
    let theta = checked_theta(theta, params.degree())?;
    let s_theta = sk.s.automorphism_unchecked(theta);
    let cols = (0..params.digits)
        .map(|j| {
            let mut col = qp_sample(sk, rng);
            add_ntt(
                &mut col.b,
                &scaled_gadget_term(&s_theta, j, params),
                params.ring_qp(),
            );
            col
        })
        .collect();
    Ok(AutomorphismKey {
        theta,
        digest: params.digest,
        cols,
    })
}

/// Shared count of external products (automorphisms count as one each).
#[derive(Clone, Debug, Default)]
pub struct OpCounter(Arc<AtomicU64>);

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    pub fn increment(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed);
    }
}

/// Evaluation context: parameters plus the external-product counter.
#[derive(Clone, Debug)]
pub struct Evaluator {
    params: Arc<EncParams>,
    counter: OpCounter,
}

impl Evaluator {
    pub fn new(params: &Arc<EncParams>) -> Self {
        Self::with_counter(params, OpCounter::new())
    }

    pub fn with_counter(params: &Arc<EncParams>, counter: OpCounter) -> Self {
        Self {
            params: params.clone(),
            counter,
        }
    }

    pub fn params(&self) -> &Arc<EncParams> {
        &self.params
    }

    pub fn counter(&self) -> &OpCounter {
        &self.counter
    }

    fn check_ct(&self, c: &Ciphertext) -> Result<()> {
        self.params.check_q(&c.b)?;
        self.params.check_q(&c.a)
    }

    /// `M ⊡ c`: decrypts to `p·Dec(c)` up to `σ_mult`, where `M = Enc'(p)`.
    pub fn external_product(&self, m: &GadgetCiphertext, c: &Ciphertext) -> Result<Ciphertext> {
        self.params.check_digest(&m.digest)?;
        self.check_ct(c)?;
        self.counter.increment();
        let (b, a) = self.params.gadget_inner(&[&c.b, &c.a], &m.cols);
        Ok(Ciphertext { b, a })
    }

    /// `Φ_θ(c, ak_θ)`: decrypts to `Ψ_θ(Dec(c))` up to `σ_mult`.
    pub fn automorphism(&self, c: &Ciphertext, ak: &AutomorphismKey) -> Result<Ciphertext> {
        self.params.check_digest(&ak.digest)?;
        self.check_ct(c)?;
        self.counter.increment();
        let rotated = c.automorphism_raw(ak.theta);
        let (kb, ka) = self.params.gadget_inner(&[&rotated.a], &ak.cols);
        let mut b = rotated.b;
        b.add_assign_unchecked(&kb);
        Ok(Ciphertext { b, a: ka })
    }
}

pub fn external_product(
    ev: &Evaluator,
    m: &GadgetCiphertext,
    c: &Ciphertext,
) -> Result<Ciphertext> {
    ev.external_product(m, c)
}

pub fn ciphertext_automorphism(
    ev: &Evaluator,
    c: &Ciphertext,
    ak: &AutomorphismKey,
) -> Result<Ciphertext> {
    ev.automorphism(c, ak)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small() -> Arc<EncParams> {
        EncParams::with_bits(32, 56, 51).unwrap()
    }

    fn random_message(params: &EncParams, bound: i128, rng: &mut impl Rng) -> RingElement {
        let coeffs: Vec<i128> = (0..params.degree())
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        RingElement::from_coeffs(&coeffs, params.ring()).unwrap()
    }

    fn dist(x: &RingElement, y: &RingElement) -> f64 {
        x.ring_sub(y).unwrap().norm() as f64
    }

    #[test]
    fn sigma_mult_formula() {
        let params = small();
        let n = 32.0;
        let expected = params.q() as f64 * n * 19.2 / params.p() as f64 + 16.5;
        assert_eq!(params.sigma_mult(), expected);
        assert_eq!(params.digits(), 1);
        let p2 =
            EncParams::new(32, params.q(), params.p(), GadgetBase::PowerOfTwo(8), 19.2).unwrap();
        assert_eq!(p2.digits(), 8);
    }

    #[test]
    fn keygen_is_deterministic_and_ternary() {
        let params = small();
        let a = keygen(&params, 7);
        assert_eq!(a.element(), keygen(&params, 7).element());
        assert!(a.element().coeffs().iter().all(|c| c.abs() <= 1));
        assert_ne!(a.element(), keygen(&params, 8).element());
    }

    #[test]
    fn roundtrip_and_homomorphisms() {
        let params = small();
        let sk = keygen(&params, 1);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..50 {
            let m = random_message(&params, 1 << 40, &mut rng);
            let m2 = random_message(&params, 1 << 40, &mut rng);
            let c = encrypt(&m, &sk, &mut rng).unwrap();
            let c2 = encrypt(&m2, &sk, &mut rng).unwrap();
            assert!(dist(&decrypt(&c, &sk).unwrap(), &m) <= 19.2);
            let sum = decrypt(&c.add(&c2).unwrap(), &sk).unwrap();
            let parts = &decrypt(&c, &sk).unwrap() + &decrypt(&c2, &sk).unwrap();
            assert_eq!(sum, parts);
            let shifted = decrypt(&c.monomial_mul(-3), &sk).unwrap();
            assert_eq!(shifted, decrypt(&c, &sk).unwrap().monomial_mul(-3));
        }
    }

    #[test]
    fn external_product_and_automorphism_bounds() {
        for base in [GadgetBase::Full, GadgetBase::PowerOfTwo(14)] {
            let q = smallest_ntt_prime(1 << 56, 32).unwrap();
            let p = smallest_ntt_prime(1 << 51, 32).unwrap();
            let params = EncParams::new(32, q, p, base, 19.2).unwrap();
            let sk = keygen(&params, 3);
            let ev = Evaluator::new(&params);
            let mut rng = ChaCha20Rng::seed_from_u64(4);
            let bound = params.sigma_mult();
            for _ in 0..20 {
                let pm = random_message(&params, 3, &mut rng);
                let m = random_message(&params, 1 << 30, &mut rng);
                let c = encrypt(&m, &sk, &mut rng).unwrap();
                let g = encrypt_gadget(&pm, &sk, &mut rng).unwrap();
                assert_eq!(g.shape(), (2, 2 * params.digits()));
                let out = decrypt(&ev.external_product(&g, &c).unwrap(), &sk).unwrap();
                let expect = pm.ring_mul(&decrypt(&c, &sk).unwrap()).unwrap();
                assert!(dist(&out, &expect) <= bound);

                let ak = gen_automorphism_key(5, &sk, &mut rng).unwrap();
                let out = decrypt(&ev.automorphism(&c, &ak).unwrap(), &sk).unwrap();
                let expect = decrypt(&c, &sk).unwrap().automorphism(5).unwrap();
                assert!(dist(&out, &expect) <= bound);
            }
            assert_eq!(ev.counter().get(), 40);
        }
    }

    #[test]
    fn theta_validation() {
        let params = small();
        let sk = keygen(&params, 1);
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert!(matches!(
            gen_automorphism_key(4, &sk, &mut rng),
            Err(Error::EvenExponent(4))
        ));
        assert!(gen_automorphism_key(1, &sk, &mut rng).is_err());
        assert!(gen_automorphism_key(65, &sk, &mut rng).is_err());
        assert_eq!(gen_automorphism_key(67, &sk, &mut rng).unwrap().theta(), 3);
    }

    #[cfg(feature = "zero-noise")]
    #[test]
    fn noiseless_hook_is_exact() {
        let params = small().noiseless();
        let sk = keygen(&params, 5);
        let ev = Evaluator::new(&params);
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let m = random_message(&params, 1 << 40, &mut rng);
        let pm = random_message(&params, 100, &mut rng);
        let c = encrypt(&m, &sk, &mut rng).unwrap();
        assert_eq!(decrypt(&c, &sk).unwrap(), m);
        let g = encrypt_gadget(&pm, &sk, &mut rng).unwrap();
        let out = decrypt(&ev.external_product(&g, &c).unwrap(), &sk).unwrap();
        assert_eq!(out, pm.ring_mul(&m).unwrap());
        let ak = gen_automorphism_key(9, &sk, &mut rng).unwrap();
        let out = decrypt(&ev.automorphism(&c, &ak).unwrap(), &sk).unwrap();
        assert_eq!(out, m.automorphism(9).unwrap());
    }

    #[test]
    fn containers_roundtrip_and_reject_mismatch() {
        let params = small();
        let other = EncParams::with_bits(32, 50, 51).unwrap();
        let sk = keygen(&params, 9);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let back = SecretKey::from_container(&sk.to_container()).unwrap();
        assert_eq!(back.element(), sk.element());
        assert_eq!(**back.params(), *params);

        let c = encrypt(&RingElement::constant(5, params.ring()), &sk, &mut rng).unwrap();
        let bytes = c.to_container(&params);
        assert_eq!(Ciphertext::from_container(&bytes, &params).unwrap(), c);
        assert!(Ciphertext::from_container(&bytes, &other).is_err());
        assert!(GadgetCiphertext::from_container(&bytes, &params).is_err());

        let g = encrypt_gadget(&RingElement::constant(2, params.ring()), &sk, &mut rng).unwrap();
        assert_eq!(
            GadgetCiphertext::from_container(&g.to_container(&params), &params).unwrap(),
            g
        );
        let ak = gen_automorphism_key(3, &sk, &mut rng).unwrap();
        assert_eq!(
            AutomorphismKey::from_container(&ak.to_container(&params), &params).unwrap(),
            ak
        );

        let mut corrupt = bytes.clone();
        corrupt[0] ^= 1;
        assert!(Ciphertext::from_container(&corrupt, &params).is_err());
    }
}
