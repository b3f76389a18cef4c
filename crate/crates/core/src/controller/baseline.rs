//! Column-packed encrypted controller: every column of `F̄`, `Ḡ`, `H̄` is packed
//! and gadget-encrypted, and every step unpacks all `n` state slots.

use rand::RngCore;

use super::{scale_measurement, PerturbationBounds, ScaledController, Scales};
use crate::error::{Error, Result};
use crate::linalg::{rat_int, IntMatrix, Rational};
use crate::packing::{pack_strided, unpack_strided};
use crate::rlwe::{
    decrypt, encrypt, encrypt_gadget, Ciphertext, EncParams, Evaluator, GadgetCiphertext, SecretKey,
};
use crate::trace::AutomorphismKeys;
use num_traits::ToPrimitive;

#[derive(Clone, Debug)]
pub struct BaselineController {
    n: usize,
    p: usize,
    m: usize,
    degree: usize,
    f_cols: Vec<GadgetCiphertext>,
    g_cols: Vec<GadgetCiphertext>,
    h_cols: Vec<GadgetCiphertext>,
    keys: AutomorphismKeys,
    z: Ciphertext,
    ev: Evaluator,
}

/// Column packings at spacing `N/n`, their encryptions, keys for the slot
/// expansion and `Enc(Pack(z_ini))`.
pub fn baseline_encrypt<R: RngCore + ?Sized>(
    scaled: &ScaledController,
    sk: &SecretKey,
    rng: &mut R,
) -> Result<BaselineController> {
    let params = sk.params();
    let ring = params.ring();
    let degree = params.degree();
    let (n, p, m) = (scaled.order(), scaled.inputs(), scaled.outputs());
    if !n.is_power_of_two() || n > degree || !p.is_power_of_two() || p > n || m > n {
        return Err(Error::Layout(format!(
            "column packing needs power-of-two n, p with p <= n <= N and m <= n (n = {n}, p = {p}, m = {m})"
        )));
    }
    let spacing = degree / n;
    let encrypt_columns = |a: &IntMatrix, rng: &mut R| -> Result<Vec<GadgetCiphertext>> {
        (0..a.cols())
            .map(|c| encrypt_gadget(&pack_strided(&a.column(c), spacing, ring)?, sk, rng))
            .collect()
    };
    let f_cols = encrypt_columns(&scaled.f_bar, rng)?;
    let g_cols = encrypt_columns(&scaled.g_bar, rng)?;
    let h_cols = encrypt_columns(&scaled.h_bar, rng)?;
    let keys = if n > 1 {
        AutomorphismKeys::for_trace(n, sk, rng)?
    } else {
        AutomorphismKeys::default()
    };
    let z = encrypt(&pack_strided(&scaled.z_ini, spacing, ring)?, sk, rng)?;
    Ok(BaselineController {
        n,
        p,
        m,
        degree,
        f_cols,
        g_cols,
        h_cols,
        keys,
        z,
        ev: Evaluator::new(params),
    })
}

impl BaselineController {
    pub fn evaluator(&self) -> &Evaluator {
        &self.ev
    }

    pub fn state(&self) -> &Ciphertext {
        &self.z
    }

    /// `(gadget ciphertexts, automorphism keys)`.
    pub fn storage_counts(&self) -> (usize, usize) {
        (
            self.f_cols.len() + self.g_cols.len() + self.h_cols.len(),
            self.keys.len(),
        )
    }

    /// Distance `N/n` between state and output slots.
    pub fn spacing(&self) -> usize {
        self.degree / self.n
    }

    /// `Enc` of `p^{-1}·ȳ mod q` packed at spacing `N/p`. The factor `p^{-1}`
    /// cancels the doubling of each expansion level without touching the noise.
    pub fn sensor_encode<R: RngCore + ?Sized>(
        &self,
        y: &[Rational],
        scales: &Scales,
        sk: &SecretKey,
        rng: &mut R,
    ) -> Result<Ciphertext> {
        if y.len() != self.p {
            return Err(Error::Length {
                expected: self.p,
                got: y.len(),
            });
        }
        let ring = sk.params().ring();
        let q = ring.modulus(0);
        let p_inv = q.inv(self.p as u64).expect("q is an odd prime") as i128;
        let scaled: Vec<i128> = scale_measurement(y, scales)?
            .into_iter()
            .map(|v| q.center(q.mul(q.from_i128(v), p_inv as u64)) as i128)
            .collect();
        encrypt(&pack_strided(&scaled, self.degree / self.p, ring)?, sk, rng)
    }

    /// `(r s₁ s₂)·[a_0, a_{N/n}, …]` of the decrypted output.
    pub fn decode(&self, u: &Ciphertext, sk: &SecretKey, scales: &Scales) -> Result<Vec<Rational>> {
        let factor = scales.output_factor();
        let plain = decrypt(u, sk)?;
        Ok(unpack_strided(&plain, self.m, self.spacing())
            .into_iter()
            .map(|v| rat_int(v) * &factor)
            .collect())
    }

    /// Splits `c`, whose slots sit at spacing `N/count`, into `count`
    /// ciphertexts carrying slot `j` in their constant term. Uses `count - 1`
    /// automorphisms. Slot values are multiplied by `count`.
    fn expand(&self, c: &Ciphertext, count: usize) -> Result<Vec<Ciphertext>> {
        let mut level = vec![(c.clone(), (0..count).collect::<Vec<_>>())];
        let mut k = count;
        while k > 1 {
            let key = self.keys.get(k as u64 + 1)?;
            let shift = -((self.degree / k) as i64);
            let mut next = Vec::with_capacity(level.len() * 2);
            for (ct, idx) in level {
                let rotated = self.ev.automorphism(&ct, key)?;
                let even = ct.add(&rotated)?;
                let odd = ct.sub(&rotated)?.monomial_mul(shift);
                next.push((even, idx.iter().step_by(2).copied().collect()));
                next.push((odd, idx.iter().skip(1).step_by(2).copied().collect()));
            }
            level = next;
            k /= 2;
        }
        let mut out: Vec<(Ciphertext, usize)> =
            level.into_iter().map(|(ct, idx)| (ct, idx[0])).collect();
        out.sort_by_key(|(_, i)| *i);
        Ok(out.into_iter().map(|(ct, _)| ct).collect())
    }

    /// `u = Σ_j H_j ⊡ z_j`, `z ← Σ_j F_j ⊡ z_j + Σ_j G_j ⊡ y_j` with `z_j`, `y_j`
    /// the expanded slots. Returns `u`.
    pub fn step(&mut self, y: &Ciphertext) -> Result<Ciphertext> {
        let q = self.ev.params().ring().modulus(0);
        let n_inv = q.inv(self.n as u64).expect("q is an odd prime");
        let slots = self.expand(&self.z.scalar_mul(n_inv as i128), self.n)?;
        let inputs = self.expand(y, self.p)?;

        let mut u: Option<Ciphertext> = None;
        let mut z: Option<Ciphertext> = None;
        let accumulate = |acc: &mut Option<Ciphertext>, term: Ciphertext| match acc {
            Some(a) => a.add_assign(&term),
            None => *acc = Some(term),
        };
        for (j, zj) in slots.iter().enumerate() {
            accumulate(&mut u, self.ev.external_product(&self.h_cols[j], zj)?);
            accumulate(&mut z, self.ev.external_product(&self.f_cols[j], zj)?);
        }
        for (j, yj) in inputs.iter().enumerate() {
            accumulate(&mut z, self.ev.external_product(&self.g_cols[j], yj)?);
        }
        self.z = z.expect("n >= 1");
        Ok(u.expect("n >= 1"))
    }
}

pub fn baseline_step(st: &mut BaselineController, y: &Ciphertext) -> Result<Ciphertext> {
    st.step(y)
}

/// Noise budget of one baseline step, in the same sense as [`PerturbationBounds`]:
/// `Δz = Σ‖F̄_j‖·n(n-1)σ_mult + Σ‖Ḡ_j‖·n(pσ + (p-1)σ_mult) + (n+p)σ_mult`,
/// `Δu = (r s₁ s₂)(Σ‖H̄_j‖·m(n-1) + n)σ_mult`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaselineBounds(pub PerturbationBounds);

impl BaselineBounds {
    pub fn new(scaled: &ScaledController, params: &EncParams) -> Self {
        let (n, p, m) = (
            scaled.order() as f64,
            scaled.inputs() as f64,
            scaled.outputs() as f64,
        );
        let sm = params.sigma_mult();
        let sigma = params.sigma();
        let col_sum = |a: &IntMatrix| -> f64 {
            (0..a.cols())
                .map(|c| {
                    a.column(c)
                        .iter()
                        .map(|x| x.unsigned_abs())
                        .max()
                        .unwrap_or(0) as f64
                })
                .sum()
        };
        let factor = scaled.scales.output_factor().to_f64().unwrap_or(f64::NAN);
        Self(PerturbationBounds {
            delta_z: col_sum(&scaled.f_bar) * n * (n - 1.0) * sm
                + col_sum(&scaled.g_bar) * n * (p * sigma + (p - 1.0) * sm)
                + (n + p) * sm,
            delta_u: factor * (col_sum(&scaled.h_bar) * m * (n - 1.0) + n) * sm,
            delta_ini: sigma,
        })
    }
}
