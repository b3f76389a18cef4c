use rand::RngCore;

use super::{scale_measurement, PackedController, Scales};
use crate::error::{Error, Result};
use crate::linalg::{rat_int, Rational};
use crate::packing::PackingLayout;
use crate::rlwe::{
    decrypt, encrypt, encrypt_gadget, Ciphertext, Evaluator, GadgetCiphertext, SecretKey,
};
use crate::trace::{homomorphic_trace, AutomorphismKeys};

/// Encrypted multipliers `F_i`, `G`, `H`, the automorphism keys for both traces,
/// and the running encrypted state.
#[derive(Clone, Debug)]
pub struct EncryptedController {
    layout: PackingLayout,
    r: Vec<usize>,
    f_enc: Vec<GadgetCiphertext>,
    g_enc: GadgetCiphertext,
    h_enc: GadgetCiphertext,
    keys: AutomorphismKeys,
    z: Ciphertext,
    ev: Evaluator,
}

/// Gadget-encrypts `F̃_i`, `G̃`, `H̃`, encrypts `z̃_ini` and generates keys for
/// `θ ∈ {2^δ + 1 : 0 < δ ≤ log₂(nτ)}`.
pub fn encrypt_controller<R: RngCore + ?Sized>(
    packed: &PackedController,
    sk: &SecretKey,
    rng: &mut R,
) -> Result<EncryptedController> {
    let params = sk.params();
    if **packed.layout.ring() != **params.ring() {
        return Err(Error::ParamsMismatch);
    }
    let layout = packed.layout.clone();
    let f_enc = packed
        .f_cols
        .iter()
        .map(|f| encrypt_gadget(f, sk, rng))
        .collect::<Result<Vec<_>>>()?;
    let g_enc = encrypt_gadget(&packed.g, sk, rng)?;
    let h_enc = encrypt_gadget(&packed.h, sk, rng)?;
    let span = layout.order() * layout.tau();
    let keys = if span > 1 {
        AutomorphismKeys::for_trace(span, sk, rng)?
    } else {
        AutomorphismKeys::default()
    };
    let z = encrypt(&packed.z_ini, sk, rng)?;
    Ok(EncryptedController {
        r: packed.r.clone(),
        f_enc,
        g_enc,
        h_enc,
        keys,
        z,
        ev: Evaluator::new(params),
        layout,
    })
}

impl EncryptedController {
    pub fn layout(&self) -> &PackingLayout {
        &self.layout
    }

    pub fn evaluator(&self) -> &Evaluator {
        &self.ev
    }

    /// The current encrypted state `z(t)`.
    pub fn state(&self) -> &Ciphertext {
        &self.z
    }

    /// `(gadget ciphertexts, automorphism keys)` held by the controller.
    pub fn storage_counts(&self) -> (usize, usize) {
        (self.f_enc.len() + 2, self.keys.len())
    }

    pub fn key_thetas(&self) -> Vec<u64> {
        self.keys.thetas().collect()
    }

    fn trace(&self, c: &Ciphertext, alpha: usize, beta: usize) -> Result<Ciphertext> {
        if alpha == beta {
            Ok(c.clone())
        } else {
            homomorphic_trace(&self.ev, c, alpha, beta, &self.keys)
        }
    }

    /// `u = H ⊡ Tr_{nτ}^n(z)` and
    /// `z ← Σ F_i ⊡ Tr_n^1(X^{-r_i N/n} z) + X^{-N/n} z + G ⊡ y`. Returns `u`.
    pub fn step(&mut self, y: &Ciphertext) -> Result<Ciphertext> {
        let n = self.layout.order();
        let spacing = self.layout.spacing() as i64;
        let z = &self.z;
        let projected = self.trace(z, n, n * self.layout.tau())?;
        let u = self.ev.external_product(&self.h_enc, &projected)?;

        let mut next = z.monomial_mul(-spacing);
        for (f, &r) in self.f_enc.iter().zip(&self.r) {
            let slot = self.trace(&z.monomial_mul(-(r as i64) * spacing), 1, n)?;
            next.add_assign(&self.ev.external_product(f, &slot)?);
        }
        next.add_assign(&self.ev.external_product(&self.g_enc, y)?);
        self.z = next;
        Ok(u)
    }
}

pub fn controller_step_encrypted(
    st: &mut EncryptedController,
    y: &Ciphertext,
) -> Result<Ciphertext> {
    st.step(y)
}

/// `Enc(ỹ)` with `ỹ` the dense packing of `y / r`.
pub fn sensor_encode<R: RngCore + ?Sized>(
    y: &[Rational],
    scales: &Scales,
    layout: &PackingLayout,
    sk: &SecretKey,
    rng: &mut R,
) -> Result<Ciphertext> {
    let y_bar = scale_measurement(y, scales)?;
    encrypt(&layout.pack_input(&y_bar)?, sk, rng)
}

/// `u = (r s₁ s₂)·Unpack(Dec(u_ct))`.
pub fn actuator_decode(
    u: &Ciphertext,
    sk: &SecretKey,
    scales: &Scales,
    layout: &PackingLayout,
) -> Result<Vec<Rational>> {
    let factor = scales.output_factor();
    let plain = decrypt(u, sk)?;
    Ok(layout
        .unpack_output(&plain)
        .into_iter()
        .map(|v| rat_int(v) * &factor)
        .collect())
}
