use rand::{Rng, RngCore};

use super::{EncParams, ERROR_STD_DEV};
use crate::ring::{RingElement, RingParams};
use std::sync::Arc;

/// Uniform over the ring: independent uniform residues per limb.
pub(super) fn uniform<R: RngCore + ?Sized>(ring: &Arc<RingParams>, rng: &mut R) -> RingElement {
    let n = ring.degree();
    let limbs = (0..ring.limb_count())
        .map(|l| {
            let q = ring.modulus(l).value();
            (0..n).map(|_| rng.gen_range(0..q)).collect()
        })
        .collect();
    RingElement::from_limbs(limbs, ring)
}

pub(super) fn ternary<R: RngCore + ?Sized>(ring: &Arc<RingParams>, rng: &mut R) -> RingElement {
    let coeffs: Vec<i128> = (0..ring.degree()).map(|_| rng.gen_range(-1..=1)).collect();
    RingElement::from_coeffs(&coeffs, ring).expect("length matches degree")
}

/// Discrete Gaussian of standard deviation 3.2, rejection-truncated to `[-σ, σ]`.
/// All zero under noiseless parameters.
pub(super) fn error<R: RngCore + ?Sized>(
    params: &EncParams,
    ring: &Arc<RingParams>,
    rng: &mut R,
) -> RingElement {
    if params.is_noiseless() {
        return RingElement::zero(ring);
    }
    let bound = params.sigma().floor() as i64;
    let denom = 2.0 * ERROR_STD_DEV * ERROR_STD_DEV;
    let coeffs: Vec<i128> = (0..ring.degree())
        .map(|_| loop {
            let x = rng.gen_range(-bound..=bound);
            if rng.gen::<f64>() < (-((x * x) as f64) / denom).exp() {
                break x as i128;
            }
        })
        .collect();
    RingElement::from_coeffs(&coeffs, ring).expect("length matches degree")
}
