//! Homomorphic slot projection `Tr_β^α` by a cascade of automorphisms.

use std::collections::BTreeMap;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::ring::RingElement;
use crate::rlwe::{gen_automorphism_key, AutomorphismKey, Ciphertext, Evaluator, SecretKey};

/// `{2^δ + 1 : log₂α < δ ≤ log₂β}`, in increasing order.
pub fn trace_thetas(alpha: usize, beta: usize) -> Vec<u64> {
    let lo = alpha.trailing_zeros();
    let hi = beta.trailing_zeros();
    (lo + 1..=hi).map(|delta| (1u64 << delta) + 1).collect()
}

fn check_range(alpha: usize, beta: usize, degree: usize) -> Result<()> {
    if !alpha.is_power_of_two() || !beta.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "trace bounds {alpha}, {beta} must be powers of two"
        )));
    }
    if alpha >= beta || beta > degree {
        return Err(Error::InvalidArgument(format!(
            "trace needs 1 <= alpha < beta <= N, got alpha = {alpha}, beta = {beta}, N = {degree}"
        )));
    }
    Ok(())
}

/// Automorphism keys indexed by exponent.
#[derive(Clone, Debug, Default)]
pub struct AutomorphismKeys {
    keys: BTreeMap<u64, AutomorphismKey>,
}

impl AutomorphismKeys {
    /// Keys for every exponent `Tr_β^1` needs, which also covers `Tr_β^α` for any `α`.
    pub fn for_trace<R: RngCore + ?Sized>(
        beta: usize,
        sk: &SecretKey,
        rng: &mut R,
    ) -> Result<Self> {
        check_range(1, beta, sk.params().degree())?;
        let mut keys = Self::default();
        for theta in trace_thetas(1, beta) {
            keys.insert(gen_automorphism_key(theta, sk, rng)?);
        }
        Ok(keys)
    }

    pub fn insert(&mut self, key: AutomorphismKey) {
        self.keys.insert(key.theta(), key);
    }

    pub fn get(&self, theta: u64) -> Result<&AutomorphismKey> {
        self.keys.get(&theta).ok_or(Error::MissingKey(theta))
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn thetas(&self) -> impl Iterator<Item = u64> + '_ {
        self.keys.keys().copied()
    }
}

/// `Tr_β^α(c)`: keeps the `N/α`-equidistant coefficients of `Dec(c)` among the
/// `N/β`-equidistant ones and zeroes the rest. Consumes `log₂(β/α)` automorphisms.
///
/// The halvings of the cascade are folded into one multiplication by
/// `(β/α)^{-1} mod q` up front, so the key-switching noise added by each
/// automorphism is never divided by two afterwards.
pub fn homomorphic_trace(
    ev: &Evaluator,
    c: &Ciphertext,
    alpha: usize,
    beta: usize,
    keys: &AutomorphismKeys,
) -> Result<Ciphertext> {
    let params = ev.params();
    check_range(alpha, beta, params.degree())?;
    let thetas = trace_thetas(alpha, beta);
    for &theta in &thetas {
        keys.get(theta)?;
    }
    let q = params.ring().modulus(0);
    let inv = q
        .inv(q.reduce((beta / alpha) as u64))
        .expect("q is an odd prime");
    let mut acc = c.scalar_mul(inv as i128);
    for &theta in thetas.iter().rev() {
        let rotated = ev.automorphism(&acc, keys.get(theta)?)?;
        acc.add_assign(&rotated);
    }
    Ok(acc)
}

/// The plaintext cascade `a ← 2^{-1}(a + Ψ_{k+1}(a))` for `k = β, β/2, …, 2α`.
pub fn plaintext_trace(a: &RingElement, alpha: usize, beta: usize) -> Result<RingElement> {
    let params = a.params();
    if params.limb_count() != 1 {
        return Err(Error::InvalidArgument(
            "plaintext trace works over a prime modulus".into(),
        ));
    }
    check_range(alpha, beta, params.degree())?;
    let half = (params.modulus(0).value() as i128 + 1) / 2;
    let mut acc = a.clone();
    for theta in trace_thetas(alpha, beta).into_iter().rev() {
        acc = (&acc + &acc.automorphism_unchecked(theta)).scalar_mul(half);
    }
    Ok(acc)
}
