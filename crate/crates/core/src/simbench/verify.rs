use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::run::{run_closed_loop, Mode, RunConfig};
use super::{build_case1, build_case2, CaseId};
use crate::canon::{rcf_transform, verify_rcf};
use crate::controller::{prepare, proposed_op_count, proposed_storage, PackedController};
use crate::error::Result;
use crate::linalg::RatMatrix;
use crate::packing::slot_alpha;
use crate::ring::{RingElement, RingParams};
use crate::rlwe::{
    decrypt, encrypt, encrypt_gadget, gen_automorphism_key, keygen, EncParams, Evaluator,
};
use crate::trace::{homomorphic_trace, AutomorphismKeys};

/// Outcome of one invariant family.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    match f() {
        Ok((passed, detail)) => CheckResult {
            name,
            passed,
            detail,
        },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn random_element(
    ring: &std::sync::Arc<RingParams>,
    bound: i128,
    rng: &mut impl Rng,
) -> Result<RingElement> {
    let coeffs: Vec<i128> = (0..ring.degree())
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    RingElement::from_coeffs(&coeffs, ring)
}

fn centered(ring: &RingParams, v: i128) -> i128 {
    let q = ring.modulus(0);
    q.center(q.from_i128(v)) as i128
}

fn schoolbook(a: &[i128], b: &[i128]) -> Vec<i128> {
    let n = a.len();
    let mut out = vec![0i128; n];
    for i in 0..n {
        for j in 0..n {
            let p = a[i] * b[j];
            if i + j < n {
                out[i + j] += p;
            } else {
                out[i + j - n] -= p;
            }
        }
    }
    out
}

/// Reduced-size versions of the invariant suites, for a quick health check.
pub fn selfcheck(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    out.push(check("negacyclic product", || {
        let ring = RingParams::new(
            64,
            &[crate::ring::smallest_ntt_prime(1 << 40, 64).unwrap_or(0)],
        )?;
        for _ in 0..20 {
            let a: Vec<i128> = (0..64).map(|_| rng.gen_range(-1000..=1000)).collect();
            let b: Vec<i128> = (0..64).map(|_| rng.gen_range(-1000..=1000)).collect();
            let prod = RingElement::from_coeffs(&a, &ring)?
                .ring_mul(&RingElement::from_coeffs(&b, &ring)?)?;
            if prod.coeffs() != schoolbook(&a, &b) {
                return Ok((false, "NTT product differs from schoolbook".into()));
            }
        }
        Ok((true, "20 products".into()))
    }));

    out.push(check("encryption contracts", || {
        let params = EncParams::with_bits(256, 56, 51)?;
        let sk = keygen(&params, seed);
        let ev = Evaluator::new(&params);
        let bound = params.sigma_mult();
        let mut worst = [0f64; 3];
        for _ in 0..20 {
            let m = random_element(params.ring(), 1 << 40, &mut rng)?;
            let c = encrypt(&m, &sk, &mut rng)?;
            let dm = decrypt(&c, &sk)?;
            worst[0] = worst[0].max(dm.ring_sub(&m)?.norm() as f64);
            let pm = random_element(params.ring(), 1 << 20, &mut rng)?;
            let g2 = encrypt_gadget(&pm, &sk, &mut rng)?;
            let prod = decrypt(&ev.external_product(&g2, &c)?, &sk)?;
            worst[1] = worst[1].max(prod.ring_sub(&pm.ring_mul(&dm)?)?.norm() as f64);
            let ak = gen_automorphism_key(3, &sk, &mut rng)?;
            let rot = decrypt(&ev.automorphism(&c, &ak)?, &sk)?;
            worst[2] = worst[2].max(rot.ring_sub(&dm.automorphism(3)?)?.norm() as f64);
        }
        let ok = worst[0] <= params.sigma() && worst[1] <= bound && worst[2] <= bound;
        Ok((
            ok,
            format!(
                "fresh {:.0}, product {:.0}, automorphism {:.0}, bound {bound:.0}",
                worst[0], worst[1], worst[2]
            ),
        ))
    }));

    out.push(check("trace", || {
        let params = EncParams::with_bits(128, 56, 51)?;
        let sk = keygen(&params, seed ^ 1);
        let ev = Evaluator::new(&params);
        let keys = AutomorphismKeys::for_trace(8, &sk, &mut rng)?;
        let bound = params.sigma_mult() * 3.0;
        let mut worst = 0f64;
        for _ in 0..10 {
            let c = encrypt(
                &random_element(params.ring(), 1 << 40, &mut rng)?,
                &sk,
                &mut rng,
            )?;
            let t = homomorphic_trace(&ev, &c, 1, 8, &keys)?;
            let got = slot_alpha(&decrypt(&t, &sk)?, 8)?;
            let want = slot_alpha(&decrypt(&c, &sk)?, 1)?;
            worst = worst.max(got.ring_sub(&want)?.norm() as f64);
        }
        Ok((worst < bound, format!("worst {worst:.0} < {bound:.0}")))
    }));

    out.push(check("canonical form", || {
        let mut fails = 0;
        for _ in 0..30 {
            let n = rng.gen_range(1..=6);
            let rows: Vec<Vec<i64>> = (0..n)
                .map(|_| (0..n).map(|_| rng.gen_range(-3..=3)).collect())
                .collect();
            let f = RatMatrix::from_ints(&rows);
            if !verify_rcf(&f, &rcf_transform(&f)?).all_pass() {
                fails += 1;
            }
        }
        Ok((fails == 0, format!("{fails} of 30 random matrices failed")))
    }));

    out.push(check("packing identities", || {
        let ring = RingParams::new(
            64,
            &[crate::ring::smallest_ntt_prime(1 << 40, 64).unwrap_or(0)],
        )?;
        for case in [build_case1()?, build_case2()?] {
            let scaled = prepare(&case.controller, case.scales, true)?;
            let packed = PackedController::new(&scaled, &ring)?;
            let (n, p) = (scaled.order(), scaled.inputs());
            for _ in 0..20 {
                let z: Vec<i128> = (0..n).map(|_| rng.gen_range(-1000..=1000)).collect();
                let y: Vec<i128> = (0..p).map(|_| rng.gen_range(-1000..=1000)).collect();
                let zp = packed.layout.pack_vector(&z)?;
                let next = packed
                    .layout
                    .unpack_vector(&packed.state_update(&zp, &packed.layout.pack_input(&y)?)?);
                let want_next: Vec<i128> = scaled
                    .f_bar
                    .mul_vec(&z)?
                    .into_iter()
                    .zip(scaled.g_bar.mul_vec(&y)?)
                    .map(|(a, b)| centered(&ring, a + b))
                    .collect();
                let u = packed.layout.unpack_output(&packed.output(&zp)?);
                let want_u: Vec<i128> = scaled
                    .h_bar
                    .mul_vec(&z)?
                    .into_iter()
                    .map(|v| centered(&ring, v))
                    .collect();
                if next != want_next || u != want_u {
                    return Ok((false, format!("case {} mismatch", case.id)));
                }
            }
        }
        Ok((true, "20 vectors per case".into()))
    }));

    out.push(check("closed-loop stability", || {
        let r1 = build_case1()?.closed_loop_matrix().spectral_radius();
        let r2 = build_case2()?.closed_loop_matrix().spectral_radius();
        Ok((
            r1 < 1.0 && r2 < 1.0,
            format!("spectral radii {r1:.4}, {r2:.4}"),
        ))
    }));

    for (id, name) in [
        (CaseId::One, "case 1 encrypted step"),
        (CaseId::Two, "case 2 encrypted step"),
    ] {
        out.push(check(name, || {
            let case = id.build()?;
            let scaled = prepare(&case.controller, case.scales, true)?;
            let (kappa, n, m) = (scaled.kappa(), scaled.order(), scaled.outputs());
            let mut cfg = RunConfig::new(id, Mode::Proposed);
            cfg.steps = 5;
            cfg.seed = seed;
            cfg.params = EncParams::with_bits(256, 56, 51)?;
            cfg.track = true;
            let run = run_closed_loop(&case, &cfg)?;
            let want = proposed_op_count(kappa, n, m);
            let counts_ok = run.op_counts().iter().all(|&c| c == want);
            let storage_ok = run.storage == Some(proposed_storage(kappa, n, m));
            let tracking_ok = run.tracking.as_ref().is_some_and(|t| t.ok());
            Ok((
                counts_ok && storage_ok && tracking_ok,
                format!(
                    "{} external products per step, storage {:?}",
                    want, run.storage
                ),
            ))
        }));
    }

    out.push(check("clear packed loop", || {
        let case = build_case2()?;
        let mut cfg = RunConfig::new(CaseId::Two, Mode::RingShadow);
        cfg.steps = 50;
        cfg.params = EncParams::with_bits(64, 56, 51)?;
        let run = run_closed_loop(&case, &cfg)?;
        let exact = run.errors().iter().all(|&e| e == 0.0);
        Ok((exact, format!("max margin {:.3e}", run.margin.max_margin)))
    }));
    out
}
