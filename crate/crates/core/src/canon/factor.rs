//! Factorization of monic polynomials over the rationals.
//!
//! Square-free decomposition (Yun), a monic integer rescaling, rational-root
//! stripping, then Zassenhaus: factor modulo a small prime, Hensel-lift each
//! factor, recombine subsets by trial division over the integers.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::FACTOR_DEGREE_CAP;
use crate::error::{Error, Result};
use crate::linalg::{RatPoly, Rational};

/// Irreducible monic factors of `p` with multiplicities, sorted by degree then
/// coefficients.
pub fn factor_squarefree_rational(p: &RatPoly) -> Result<Vec<(RatPoly, u32)>> {
    let deg = p.degree().ok_or(Error::ZeroPolynomial)?;
    if deg > FACTOR_DEGREE_CAP {
        return Err(Error::DegreeCap(deg));
    }
    if !p.is_monic() {
        return Err(Error::InvalidArgument("polynomial must be monic".into()));
    }
    let mut out = Vec::new();
    for (part, mult) in squarefree_decomposition(p) {
        for f in factor_squarefree_monic(&part) {
            out.push((f, mult));
        }
    }
    out.sort_by(|(a, _), (b, _)| poly_order(a, b));
    Ok(out)
}

fn poly_order(a: &RatPoly, b: &RatPoly) -> std::cmp::Ordering {
    a.degree()
        .cmp(&b.degree())
        .then_with(|| a.coeffs().iter().rev().cmp(b.coeffs().iter().rev()))
}

/// Yun's algorithm: `p = prod a_i^i` with each `a_i` square-free, monic, pairwise coprime.
pub fn squarefree_decomposition(p: &RatPoly) -> Vec<(RatPoly, u32)> {
    let p = p.monic();
    if p.degree().unwrap_or(0) == 0 {
        return vec![];
    }
    let dp = p.derivative();
    let a0 = p.gcd(&dp);
    let mut b = p.div_rem(&a0).expect("gcd nonzero").0;
    let mut c = dp.div_rem(&a0).expect("gcd nonzero").0;
    let mut d = &c - &b.derivative();
    let mut out = Vec::new();
    let mut i = 1;
    loop {
        let a = b.gcd(&d);
        if a.degree().unwrap_or(0) > 0 {
            out.push((a.clone(), i));
        }
        b = b.div_rem(&a).expect("gcd nonzero").0;
        if b.degree().unwrap_or(0) == 0 {
            break;
        }
        c = d.div_rem(&a).expect("gcd nonzero").0;
        d = &c - &b.derivative();
        i += 1;
    }
    out
}

/// Factors a monic square-free rational polynomial into monic irreducibles.
fn factor_squarefree_monic(a: &RatPoly) -> Vec<RatPoly> {
    let k = a.degree().expect("nonzero");
    if k == 1 {
        return vec![a.clone()];
    }
    // g(s) = D^k a(s/D) is monic with integer coefficients
    let den = a
        .coeffs()
        .iter()
        .fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
    let g: Vec<BigInt> = (0..=k)
        .map(|j| {
            let scaled = a.coeff(j) * Rational::from_integer(num_traits::pow(den.clone(), k - j));
            debug_assert!(scaled.is_integer());
            scaled.to_integer()
        })
        .collect();
    factor_monic_integer(g)
        .into_iter()
        .map(|h| {
            // back-substitute: D^{-deg h} h(D s)
            let dh = h.len() - 1;
            let coeffs = h
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    Rational::new(
                        c.clone() * num_traits::pow(den.clone(), j),
                        num_traits::pow(den.clone(), dh),
                    )
                })
                .collect();
            RatPoly::new(coeffs)
        })
        .collect()
}

type IntPoly = Vec<BigInt>;

fn trim(mut p: IntPoly) -> IntPoly {
    while p.last().is_some_and(Zero::is_zero) {
        p.pop();
    }
    p
}

fn int_mul(a: &[BigInt], b: &[BigInt]) -> IntPoly {
    if a.is_empty() || b.is_empty() {
        return vec![];
    }
    let mut c = vec![BigInt::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            c[i + j] += x * y;
        }
    }
    trim(c)
}

/// Exact division by a monic divisor over the integers.
fn int_div_exact(a: &[BigInt], d: &[BigInt]) -> Option<IntPoly> {
    let dd = d.len() - 1;
    debug_assert!(d[dd].is_one());
    if a.len() < d.len() {
        return if a.is_empty() { Some(vec![]) } else { None };
    }
    let mut rem = a.to_vec();
    let mut quot = vec![BigInt::zero(); a.len() - dd];
    for k in (0..quot.len()).rev() {
        let c = rem[k + dd].clone();
        if !c.is_zero() {
            for (j, dj) in d.iter().enumerate() {
                rem[k + j] -= &c * dj;
            }
        }
        quot[k] = c;
    }
    if rem.iter().all(Zero::is_zero) {
        Some(trim(quot))
    } else {
        None
    }
}

fn int_eval(p: &[BigInt], x: &BigInt) -> BigInt {
    p.iter().rev().fold(BigInt::zero(), |acc, c| acc * x + c)
}

/// Factors a monic square-free integer polynomial of degree >= 1.
fn factor_monic_integer(mut g: IntPoly) -> Vec<IntPoly> {
    let mut out = Vec::new();
    // zero root
    if g[0].is_zero() {
        out.push(vec![BigInt::zero(), BigInt::one()]);
        g.remove(0);
    }
    // integer roots (rational roots of a monic integer polynomial are integers dividing g_0)
    if g.len() > 2 {
        if let Some(c0) = g[0].abs().to_u64().filter(|&c| c <= 1 << 40) {
            for d in divisors(c0) {
                for root in [BigInt::from(d), -BigInt::from(d)] {
                    if g.len() > 2 && int_eval(&g, &root).is_zero() {
                        let lin = vec![-root.clone(), BigInt::one()];
                        g = int_div_exact(&g, &lin).expect("root gives exact division");
                        out.push(lin);
                    }
                }
            }
        }
    }
    match g.len() {
        0 | 1 => {}
        2 => out.push(g),
        _ => out.extend(zassenhaus(&g)),
    }
    out
}

fn divisors(n: u64) -> Vec<u64> {
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut d = 1;
    while d * d <= n {
        if n.is_multiple_of(d) {
            small.push(d);
            if d * d != n {
                large.push(n / d);
            }
        }
        d += 1;
    }
    small.extend(large.into_iter().rev());
    small
}

/// Dense polynomial arithmetic modulo a small prime.
mod gfp {
    pub type P = Vec<u64>;

    pub fn trim(mut a: P) -> P {
        while a.last() == Some(&0) {
            a.pop();
        }
        a
    }

    fn inv(a: u64, p: u64) -> u64 {
        pow(a, p - 2, p)
    }

    fn pow(mut b: u64, mut e: u64, p: u64) -> u64 {
        let mut acc = 1;
        b %= p;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * b % p;
            }
            b = b * b % p;
            e >>= 1;
        }
        acc
    }

    pub fn sub(a: &[u64], b: &[u64], p: u64) -> P {
        let n = a.len().max(b.len());
        trim(
            (0..n)
                .map(|i| {
                    let x = a.get(i).copied().unwrap_or(0);
                    let y = b.get(i).copied().unwrap_or(0);
                    (x + p - y) % p
                })
                .collect(),
        )
    }

    pub fn mul(a: &[u64], b: &[u64], p: u64) -> P {
        if a.is_empty() || b.is_empty() {
            return vec![];
        }
        let mut c = vec![0u64; a.len() + b.len() - 1];
        for (i, &x) in a.iter().enumerate() {
            if x == 0 {
                continue;
            }
            for (j, &y) in b.iter().enumerate() {
                c[i + j] = (c[i + j] + x * y) % p;
            }
        }
        trim(c)
    }

    pub fn div_rem(a: &[u64], d: &[u64], p: u64) -> (P, P) {
        let dd = d.len() - 1;
        if a.len() <= dd {
            return (vec![], trim(a.to_vec()));
        }
        let li = inv(d[dd], p);
        let mut rem = a.to_vec();
        let mut quot = vec![0; a.len() - dd];
        for k in (0..quot.len()).rev() {
            let c = rem[k + dd] * li % p;
            if c != 0 {
                for (j, &dj) in d.iter().enumerate() {
                    rem[k + j] = (rem[k + j] + p - c * dj % p) % p;
                }
            }
            quot[k] = c;
        }
        rem.truncate(dd);
        (trim(quot), trim(rem))
    }

    pub fn monic(a: &[u64], p: u64) -> P {
        match a.last() {
            None => vec![],
            Some(&l) => {
                let li = inv(l, p);
                a.iter().map(|&x| x * li % p).collect()
            }
        }
    }

    pub fn gcd(a: &[u64], b: &[u64], p: u64) -> P {
        let (mut a, mut b) = (trim(a.to_vec()), trim(b.to_vec()));
        while !b.is_empty() {
            let r = div_rem(&a, &b, p).1;
            a = b;
            b = r;
        }
        monic(&a, p)
    }

    /// Bezout coefficients `(s, t)` with `s a + t b = 1` for coprime inputs.
    pub fn ext_gcd(a: &[u64], b: &[u64], p: u64) -> (P, P) {
        let (mut r0, mut r1) = (trim(a.to_vec()), trim(b.to_vec()));
        let (mut s0, mut s1) = (vec![1u64], vec![]);
        let (mut t0, mut t1) = (vec![], vec![1u64]);
        while !r1.is_empty() {
            let (q, r) = div_rem(&r0, &r1, p);
            let s2 = sub(&s0, &mul(&q, &s1, p), p);
            let t2 = sub(&t0, &mul(&q, &t1, p), p);
            r0 = r1;
            r1 = r;
            s0 = s1;
            s1 = s2;
            t0 = t1;
            t1 = t2;
        }
        // r0 is a nonzero constant
        let c = inv(r0[0], p);
        let scale = |v: &P| trim(v.iter().map(|&x| x * c % p).collect());
        (scale(&s0), scale(&t0))
    }

    pub fn mulmod(a: &[u64], b: &[u64], f: &[u64], p: u64) -> P {
        div_rem(&mul(a, b, p), f, p).1
    }

    pub fn powmod(a: &[u64], e: &num_bigint::BigUint, f: &[u64], p: u64) -> P {
        let mut acc = vec![1u64];
        let base = div_rem(a, f, p).1;
        for i in (0..e.bits()).rev() {
            acc = mulmod(&acc, &acc, f, p);
            if e.bit(i) {
                acc = mulmod(&acc, &base, f, p);
            }
        }
        acc
    }

    pub fn derivative(a: &[u64], p: u64) -> P {
        trim(
            a.iter()
                .enumerate()
                .skip(1)
                .map(|(i, &c)| (i as u64 % p) * c % p)
                .collect(),
        )
    }
}

/// Distinct-degree then equal-degree factorization of a monic square-free polynomial mod `p`.
fn factor_mod_p(f: &[u64], p: u64, rng: &mut ChaCha8Rng) -> Vec<gfp::P> {
    let mut out = Vec::new();
    let mut rest = f.to_vec();
    let x = vec![0u64, 1];
    let mut h = x.clone();
    let pbig = BigUint::from(p);
    let mut i = 1;
    while rest.len() > 1 {
        if 2 * i > rest.len() - 1 {
            out.push(gfp::monic(&rest, p));
            break;
        }
        h = gfp::powmod(&h, &pbig, &rest, p);
        let g = gfp::gcd(&rest, &gfp::sub(&h, &x, p), p);
        if g.len() > 1 {
            out.extend(equal_degree(&g, i, p, rng));
            rest = gfp::div_rem(&rest, &g, p).0;
            h = gfp::div_rem(&h, &rest, p).1;
        }
        i += 1;
    }
    out
}

fn equal_degree(f: &[u64], d: usize, p: u64, rng: &mut ChaCha8Rng) -> Vec<gfp::P> {
    let n = f.len() - 1;
    if n == d {
        return vec![gfp::monic(f, p)];
    }
    let exp = (num_traits::pow(BigUint::from(p), d) - 1u32) / 2u32;
    loop {
        let a: gfp::P = gfp::trim((0..n).map(|_| rng.gen_range(0..p)).collect());
        if a.len() < 2 {
            continue;
        }
        let g = gfp::gcd(f, &a, p);
        let split = if g.len() > 1 && g.len() < f.len() {
            g
        } else {
            let b = gfp::sub(&gfp::powmod(&a, &exp, f, p), &[1], p);
            gfp::gcd(f, &b, p)
        };
        if split.len() > 1 && split.len() < f.len() {
            let other = gfp::div_rem(f, &split, p).0;
            let mut out = equal_degree(&split, d, p, rng);
            out.extend(equal_degree(&other, d, p, rng));
            return out;
        }
    }
}

fn small_primes() -> impl Iterator<Item = u64> {
    (3u64..).filter(|&n| (2..n).take_while(|d| d * d <= n).all(|d| n % d != 0))
}

fn reduce_mod(g: &[BigInt], p: u64) -> gfp::P {
    let pb = BigInt::from(p);
    gfp::trim(
        g.iter()
            .map(|c| c.mod_floor(&pb).to_u64().unwrap())
            .collect(),
    )
}

fn centered_mod(x: &BigInt, m: &BigInt) -> BigInt {
    let r = x.mod_floor(m);
    if &r * 2 > *m {
        r - m
    } else {
        r
    }
}

fn poly_mod(a: &[BigInt], m: &BigInt) -> IntPoly {
    trim(a.iter().map(|c| c.mod_floor(m)).collect())
}

fn lift_int(a: &[u64]) -> IntPoly {
    a.iter().map(|&x| BigInt::from(x)).collect()
}

/// Linear Hensel lifting of `g ≡ f h (mod p)` (f monic, coprime cofactors) to modulus `p^k`.
/// Returns the lifted `f`.
fn hensel_lift(g: &[BigInt], f: &[u64], h: &[u64], p: u64, k: u32) -> IntPoly {
    let (_, t) = gfp::ext_gcd(f, h, p);
    let pb = BigInt::from(p);
    let mut f_l = lift_int(f);
    let mut h_l = lift_int(h);
    let mut pk = pb.clone();
    for _ in 1..k {
        let next = &pk * &pb;
        // e = (g - f h) / p^j  (mod p)
        let diff: IntPoly = {
            let prod = int_mul(&f_l, &h_l);
            let n = g.len().max(prod.len());
            (0..n)
                .map(|i| {
                    g.get(i).cloned().unwrap_or_default() - prod.get(i).cloned().unwrap_or_default()
                })
                .collect()
        };
        let e: gfp::P = gfp::trim(
            diff.iter()
                .map(|c| {
                    debug_assert!((c % &pk).is_zero());
                    (c / &pk).mod_floor(&pb).to_u64().unwrap()
                })
                .collect(),
        );
        // df h + dh f ≡ e: df = t e mod f, dh = (e - df h) / f
        let df = gfp::div_rem(&gfp::mul(&t, &e, p), f, p).1;
        let dh = gfp::div_rem(&gfp::sub(&e, &gfp::mul(&df, h, p), p), f, p).0;
        let add = |base: &IntPoly, delta: &gfp::P| -> IntPoly {
            let n = base.len().max(delta.len());
            trim(
                (0..n)
                    .map(|i| {
                        let b = base.get(i).cloned().unwrap_or_default();
                        let d = BigInt::from(delta.get(i).copied().unwrap_or(0));
                        (b + d * &pk).mod_floor(&next)
                    })
                    .collect(),
            )
        };
        f_l = add(&f_l, &df);
        h_l = add(&h_l, &dh);
        pk = next;
    }
    f_l
}

fn zassenhaus(g: &[BigInt]) -> Vec<IntPoly> {
    let n = g.len() - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    // choose, among a few good primes, the one with the fewest modular factors
    let mut best: Option<(u64, Vec<gfp::P>)> = None;
    let mut tried = 0;
    for p in small_primes() {
        let gp = reduce_mod(g, p);
        if gp.len() != g.len() {
            continue;
        }
        if gfp::gcd(&gp, &gfp::derivative(&gp, p), p).len() != 1 {
            continue;
        }
        let factors = factor_mod_p(&gp, p, &mut rng);
        if factors.len() == 1 {
            return vec![g.to_vec()];
        }
        if best.as_ref().is_none_or(|(_, b)| factors.len() < b.len()) {
            best = Some((p, factors));
        }
        tried += 1;
        if tried == 5 {
            break;
        }
    }
    let (p, modular) = best.expect("some prime keeps a square-free polynomial square-free");

    // Mignotte-style bound on factor coefficients
    let max_c = g.iter().map(|c| c.abs()).max().unwrap();
    let sqrt_bound = BigInt::from(((n + 1) as f64).sqrt().ceil() as u64);
    let bound = (BigInt::one() << n) * sqrt_bound * max_c;
    let pb = BigInt::from(p);
    let mut k = 1u32;
    let mut pk = pb.clone();
    while pk <= &bound * 2 {
        pk *= &pb;
        k += 1;
    }
    let gp = reduce_mod(g, p);
    let lifted: Vec<IntPoly> = modular
        .iter()
        .map(|f| {
            let h = gfp::div_rem(&gp, f, p).0;
            hensel_lift(g, f, &h, p, k)
        })
        .collect();

    let mut remaining: Vec<usize> = (0..lifted.len()).collect();
    let mut current = g.to_vec();
    let mut out = Vec::new();
    let mut size = 1;
    while 2 * size <= remaining.len() {
        let mut found = false;
        for subset in combinations(&remaining, size) {
            let mut cand = vec![BigInt::one()];
            for &i in &subset {
                cand = poly_mod(&int_mul(&cand, &lifted[i]), &pk);
            }
            let cand: IntPoly = trim(cand.iter().map(|c| centered_mod(c, &pk)).collect());
            if let Some(q) = int_div_exact(&current, &cand) {
                out.push(cand);
                current = q;
                remaining.retain(|i| !subset.contains(i));
                found = true;
                break;
            }
        }
        if !found {
            size += 1;
        }
    }
    out.push(current);
    out
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    fn rec(
        items: &[usize],
        k: usize,
        start: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, k, 0, &mut Vec::new(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rat;

    fn product(factors: &[(RatPoly, u32)]) -> RatPoly {
        factors
            .iter()
            .fold(RatPoly::one(), |acc, (f, m)| &acc * &f.pow(*m))
    }

    #[test]
    fn quadratic_with_rational_roots() {
        let p = RatPoly::from_ints(&[-2, -1, 1]);
        let f = factor_squarefree_rational(&p).unwrap();
        assert_eq!(
            f,
            vec![
                (RatPoly::from_ints(&[-2, 1]), 1),
                (RatPoly::from_ints(&[1, 1]), 1)
            ]
        );
    }

    #[test]
    fn irreducible_quadratic() {
        let p = RatPoly::from_ints(&[1, 0, 1]);
        assert_eq!(factor_squarefree_rational(&p).unwrap(), vec![(p, 1)]);
    }

    #[test]
    fn pendulum_controller_polynomial() {
        // s^4 (s^4 - s^3 - 13 s^2 - 4 s + 10)
        let p = RatPoly::from_ints(&[0, 0, 0, 0, 10, -4, -13, -1, 1]);
        let f = factor_squarefree_rational(&p).unwrap();
        assert_eq!(product(&f), p);
        // no rational roots, but two integer quadratic factors
        assert_eq!(
            f,
            vec![
                (RatPoly::from_ints(&[0, 1]), 4),
                (RatPoly::from_ints(&[-5, -3, 1]), 1),
                (RatPoly::from_ints(&[-2, 2, 1]), 1),
            ]
        );
    }

    #[test]
    fn zassenhaus_needs_recombination() {
        // s^4 + 1 is irreducible over Q but splits modulo every prime
        let p = RatPoly::from_ints(&[1, 0, 0, 0, 1]);
        assert_eq!(factor_squarefree_rational(&p).unwrap(), vec![(p, 1)]);
        // (s^2 + 1)(s^2 - 2)(s^3 - s - 1)
        let a = RatPoly::from_ints(&[1, 0, 1]);
        let b = RatPoly::from_ints(&[-2, 0, 1]);
        let c = RatPoly::from_ints(&[-1, -1, 0, 1]);
        let p = &(&a * &b) * &c;
        let f = factor_squarefree_rational(&p).unwrap();
        assert_eq!(f, vec![(b, 1), (a, 1), (c, 1)]);
    }

    #[test]
    fn rational_coefficients() {
        // (s - 1/2)^2 (s^2 + 1/3)
        let lin = RatPoly::new(vec![rat(-1, 2), rat(1, 1)]);
        let quad = RatPoly::new(vec![rat(1, 3), rat(0, 1), rat(1, 1)]);
        let p = &lin.pow(2) * &quad;
        let f = factor_squarefree_rational(&p).unwrap();
        assert_eq!(f, vec![(lin, 2), (quad, 1)]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            factor_squarefree_rational(&RatPoly::zero()),
            Err(Error::ZeroPolynomial)
        ));
        assert!(matches!(
            factor_squarefree_rational(&RatPoly::monomial(33)),
            Err(Error::DegreeCap(33))
        ));
    }

    #[test]
    fn swinnerton_dyer_like() {
        // (s^2-2)(s^2-3) product and s^4 - 10 s^2 + 1 (irreducible, splits mod all p)
        let p = RatPoly::from_ints(&[1, 0, -10, 0, 1]);
        assert_eq!(factor_squarefree_rational(&p).unwrap(), vec![(p, 1)]);
        let q = &RatPoly::from_ints(&[-2, 0, 1]) * &RatPoly::from_ints(&[-3, 0, 1]);
        let f = factor_squarefree_rational(&q).unwrap();
        assert_eq!(f.len(), 2);
    }
}
