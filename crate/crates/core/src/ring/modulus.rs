//! Word-sized prime moduli with Barrett and Shoup reduction.

/// A prime modulus below 2^62.
///
/// Residues are kept in `[0, q)`. Products of two residues are reduced with a
/// 128-bit Barrett constant; multiplication by a fixed operand (NTT twiddles)
/// uses Shoup's precomputed quotient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Modulus {
    value: u64,
    ratio_hi: u64,
    ratio_lo: u64,
}

impl Modulus {
    pub const MAX_BITS: u32 = 62;

    pub fn new(value: u64) -> Self {
        assert!(
            (2..(1u64 << Self::MAX_BITS)).contains(&value),
            "modulus out of range"
        );
        // floor(2^128 / q), computed as floor((2^128 - 1) / q) which agrees unless q | 2^128.
        let ratio = if value.is_power_of_two() {
            u128::MAX / value as u128 + 1
        } else {
            u128::MAX / value as u128
        };
        Self {
            value,
            ratio_hi: (ratio >> 64) as u64,
            ratio_lo: ratio as u64,
        }
    }

    #[inline]
    pub fn value(&self) -> u64 {
        self.value
    }

    /// Reduces any `x < q^2` to `[0, q)`.
    #[inline]
    pub fn reduce_u128(&self, x: u128) -> u64 {
        let x0 = x as u64 as u128;
        let x1 = x >> 64;
        let r0 = self.ratio_lo as u128;
        let r1 = self.ratio_hi as u128;
        let carry = (x0 * r0) >> 64;
        let mid = x0 * r1 + x1 * r0 + carry;
        let q_hat = x1 * r1 + (mid >> 64);
        let q = self.value as u128;
        let mut r = x.wrapping_sub(q_hat.wrapping_mul(q));
        while r >= q {
            r -= q;
        }
        r as u64
    }

    #[inline]
    pub fn reduce(&self, x: u64) -> u64 {
        if x < self.value {
            x
        } else {
            x % self.value
        }
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.value {
            s - self.value
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.value - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.value - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce_u128(a as u128 * b as u128)
    }

    /// `floor(w * 2^64 / q)` for use with [`Modulus::mul_shoup`].
    pub fn shoup(&self, w: u64) -> u64 {
        (((w as u128) << 64) / self.value as u128) as u64
    }

    #[inline]
    pub fn mul_shoup(&self, a: u64, w: u64, w_shoup: u64) -> u64 {
        let q_hat = ((a as u128 * w_shoup as u128) >> 64) as u64;
        let r = a
            .wrapping_mul(w)
            .wrapping_sub(q_hat.wrapping_mul(self.value));
        if r >= self.value {
            r - self.value
        } else {
            r
        }
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.value;
        base = self.reduce(base);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Inverse of `a` modulo the (prime) modulus.
    pub fn inv(&self, a: u64) -> Option<u64> {
        let a = self.reduce(a);
        if a == 0 {
            return None;
        }
        Some(self.pow(a, self.value - 2))
    }

    /// Residue of a signed integer.
    #[inline]
    pub fn from_i128(&self, x: i128) -> u64 {
        x.rem_euclid(self.value as i128) as u64
    }

    #[inline]
    pub fn from_i64(&self, x: i64) -> u64 {
        if x >= 0 {
            self.reduce(x as u64)
        } else {
            self.neg(self.reduce(x.unsigned_abs()))
        }
    }

    /// Centered representative in `[-q/2, q/2)`.
    #[inline]
    pub fn center(&self, r: u64) -> i64 {
        // r >= q/2 (real division) <=> 2r >= q
        if 2 * (r as u128) >= self.value as u128 {
            r as i64 - self.value as i64
        } else {
            r as i64
        }
    }

    /// Finds a primitive `order`-th root of unity, `order` a power of two dividing `q - 1`.
    pub fn primitive_root_of_unity(&self, order: u64) -> Option<u64> {
        let q = self.value;
        if order == 0 || !order.is_power_of_two() || !(q - 1).is_multiple_of(order) {
            return None;
        }
        let cofactor = (q - 1) / order;
        for x in 2..q {
            let g = self.pow(x, cofactor);
            if order == 1 || self.pow(g, order / 2) == q - 1 {
                return Some(g);
            }
        }
        None
    }
}

/// Deterministic Miller-Rabin, exact for every 64-bit input.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const SMALL: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in SMALL {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    let mulmod = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let powmod = |mut b: u64, mut e: u64| {
        let mut acc = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = mulmod(acc, b);
            }
            b = mulmod(b, b);
            e >>= 1;
        }
        acc
    };
    'witness: for a in SMALL {
        let mut x = powmod(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest prime `p >= lower` with `p ≡ 1 (mod 2n)`.
pub fn smallest_ntt_prime(lower: u64, n: usize) -> Option<u64> {
    let step = 2 * n as u64;
    let mut p = if lower <= 1 {
        1 + step
    } else {
        lower + (step - (lower - 1) % step) % step
    };
    while p < (1u64 << Modulus::MAX_BITS) {
        if is_prime(p) {
            return Some(p);
        }
        p += step;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn barrett_matches_u128_remainder() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for q in [17u64, 1153, (1 << 51) + 1, 72057594037948417, (1 << 61) - 1] {
            let m = Modulus::new(q);
            for _ in 0..2000 {
                let a = next() % q;
                let b = next() % q;
                assert_eq!(m.mul(a, b), ((a as u128 * b as u128) % q as u128) as u64);
                let ws = m.shoup(b);
                assert_eq!(m.mul_shoup(a, b, ws), m.mul(a, b));
            }
        }
    }

    #[test]
    fn centered_representatives() {
        let m = Modulus::new(17);
        assert_eq!(m.center(8), 8);
        assert_eq!(m.center(9), -8);
        assert_eq!(m.center(16), -1);
        assert_eq!(m.from_i128(-9), 8);
    }

    #[test]
    fn primality() {
        let primes = [2u64, 3, 17, 97, 1153, 2305843009213693951];
        let composites = [1u64, 4, 561, 1105, 3215031751, 2305843009213693953];
        assert!(primes.iter().all(|&p| is_prime(p)));
        assert!(composites.iter().all(|&c| !is_prime(c)));
    }

    #[test]
    fn ntt_prime_search() {
        let p = smallest_ntt_prime(1 << 10, 16).unwrap();
        assert!(p >= 1 << 10 && p % 32 == 1 && is_prime(p));
        for c in ((1 << 10)..p).filter(|c| c % 32 == 1) {
            assert!(!is_prime(c));
        }
        let m = Modulus::new(p);
        let w = m.primitive_root_of_unity(32).unwrap();
        assert_eq!(m.pow(w, 16), p - 1);
    }
}
