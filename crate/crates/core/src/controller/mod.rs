//! Integer-scaled linear controllers evaluated in plaintext, packed, and encrypted.

mod baseline;
mod encrypted;

pub use baseline::{baseline_encrypt, baseline_step, BaselineBounds, BaselineController};
pub use encrypted::{
    actuator_decode, controller_step_encrypted, encrypt_controller, sensor_encode,
    EncryptedController,
};

use std::sync::Arc;

use num_traits::{Signed, ToPrimitive, Zero};

use crate::canon::{pad_order_pow2, rcf_transform, RcfResult};
use crate::error::{Error, Result};
use crate::linalg::{format_rational, rat_int, round_half_away, IntMatrix, RatMatrix, Rational};
use crate::packing::{slot_alpha, PackingLayout};
use crate::ring::{Modulus, RingElement, RingParams};
use crate::rlwe::EncParams;

/// `x(t+1) = F x(t) + G y(t)`, `u(t) = H x(t)`, `x(0) = x_ini`, with integer `F`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearController {
    pub f: RatMatrix,
    pub g: RatMatrix,
    pub h: RatMatrix,
    pub x_ini: Vec<Rational>,
}

impl LinearController {
    pub fn new(f: RatMatrix, g: RatMatrix, h: RatMatrix, x_ini: Vec<Rational>) -> Result<Self> {
        let n = f.rows();
        if !f.is_square() || g.rows() != n || h.cols() != n || x_ini.len() != n {
            return Err(Error::Dimension(format!(
                "F {}x{}, G {}x{}, H {}x{}, x_ini {}",
                f.rows(),
                f.cols(),
                g.rows(),
                g.cols(),
                h.rows(),
                h.cols(),
                x_ini.len()
            )));
        }
        if !f.is_integer() {
            return Err(Error::InvalidArgument(
                "state matrix F must be an integer matrix".into(),
            ));
        }
        Ok(Self { f, g, h, x_ini })
    }

    pub fn order(&self) -> usize {
        self.f.rows()
    }

    pub fn inputs(&self) -> usize {
        self.g.cols()
    }

    pub fn outputs(&self) -> usize {
        self.h.rows()
    }

    /// One exact step: returns `(x(t+1), u(t))`.
    pub fn step(&self, x: &[Rational], y: &[Rational]) -> Result<(Vec<Rational>, Vec<Rational>)> {
        let u = self.h.mul_vec(x)?;
        let fx = self.f.mul_vec(x)?;
        let gy = self.g.mul_vec(y)?;
        let next = fx.into_iter().zip(gy).map(|(a, b)| a + b).collect();
        Ok((next, u))
    }
}

/// Reciprocal-integer scale factors `r = 1/r_inv`, `s₁ = 1/s1_inv`, `s₂ = 1/s2_inv`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Scales {
    pub r_inv: u64,
    pub s1_inv: u64,
    pub s2_inv: u64,
}

impl Scales {
    pub fn new(r_inv: u64, s1_inv: u64, s2_inv: u64) -> Result<Self> {
        if r_inv == 0 || s1_inv == 0 || s2_inv == 0 {
            return Err(Error::Scaling(
                "scale factors must have positive integer reciprocals".into(),
            ));
        }
        Ok(Self {
            r_inv,
            s1_inv,
            s2_inv,
        })
    }

    pub fn r(&self) -> Rational {
        Rational::new(1.into(), self.r_inv.into())
    }

    pub fn s1(&self) -> Rational {
        Rational::new(1.into(), self.s1_inv.into())
    }

    pub fn s2(&self) -> Rational {
        Rational::new(1.into(), self.s2_inv.into())
    }

    /// `r·s₁·s₂`, the actuator's reconstruction factor.
    pub fn output_factor(&self) -> Rational {
        self.r() * self.s1() * self.s2()
    }
}

/// Difference between a scaled entry and its rounded integer.
#[derive(Clone, Debug, PartialEq)]
pub struct Residual {
    pub matrix: &'static str,
    pub row: usize,
    pub col: usize,
    pub value: Rational,
}

/// `F̄ = T F T^{-1}`, `Ḡ = T G / s₁`, `H̄ = H T^{-1} / s₂`, `z_ini = T x_ini / (r s₁)`,
/// rounded to integers and padded to a power-of-two order.
#[derive(Clone, Debug)]
pub struct ScaledController {
    pub rcf: RcfResult,
    pub f_bar: IntMatrix,
    pub g_bar: IntMatrix,
    pub h_bar: IntMatrix,
    pub z_ini: Vec<i128>,
    pub scales: Scales,
    pub residuals: Vec<Residual>,
}

impl ScaledController {
    pub fn order(&self) -> usize {
        self.f_bar.rows()
    }

    pub fn inputs(&self) -> usize {
        self.g_bar.cols()
    }

    pub fn outputs(&self) -> usize {
        self.h_bar.rows()
    }

    pub fn kappa(&self) -> usize {
        self.rcf.kappa
    }

    /// `ȳ = y / r`; fails unless every entry is an integer.
    pub fn scale_input(&self, y: &[Rational]) -> Result<Vec<i128>> {
        if y.len() != self.inputs() {
            return Err(Error::Length {
                expected: self.inputs(),
                got: y.len(),
            });
        }
        scale_measurement(y, &self.scales)
    }

    /// `(r s₁ s₂)·ū`.
    pub fn unscale_output(&self, u_bar: &[i128]) -> Vec<Rational> {
        let factor = self.scales.output_factor();
        u_bar.iter().map(|&v| rat_int(v) * &factor).collect()
    }

    /// Exact integer recursion without modular reduction: `(z(t+1), ū(t))`.
    pub fn integer_step(&self, z: &[i128], y_bar: &[i128]) -> Result<(Vec<i128>, Vec<i128>)> {
        let u = checked_mul_vec(&self.h_bar, z)?;
        let fz = checked_mul_vec(&self.f_bar, z)?;
        let gy = checked_mul_vec(&self.g_bar, y_bar)?;
        let next = fz
            .into_iter()
            .zip(gy)
            .map(|(a, b)| a.checked_add(b).ok_or_else(integer_overflow))
            .collect::<Result<_>>()?;
        Ok((next, u))
    }
}

/// `ȳ = y / r`; fails unless every entry is an integer.
pub fn scale_measurement(y: &[Rational], scales: &Scales) -> Result<Vec<i128>> {
    let r_inv = rat_int(scales.r_inv as i128);
    y.iter()
        .map(|v| {
            let scaled = v * &r_inv;
            if !scaled.is_integer() {
                return Err(Error::Scaling(format!(
                    "measurement {} is not a multiple of r",
                    format_rational(v)
                )));
            }
            scaled
                .to_integer()
                .to_i128()
                .ok_or_else(|| Error::Scaling("scaled measurement too large".into()))
        })
        .collect()
}

fn integer_overflow() -> Error {
    Error::Scaling("integer shadow exceeds 128 bits".into())
}

fn checked_mul_vec(a: &IntMatrix, v: &[i128]) -> Result<Vec<i128>> {
    if a.cols() != v.len() {
        return Err(Error::Dimension(format!(
            "{}x{} times {}",
            a.rows(),
            a.cols(),
            v.len()
        )));
    }
    (0..a.rows())
        .map(|r| {
            a.row(r).iter().zip(v).try_fold(0i128, |acc, (&x, &y)| {
                x.checked_mul(y)
                    .and_then(|p| acc.checked_add(p))
                    .ok_or_else(integer_overflow)
            })
        })
        .collect()
}

/// Rounds every entry of `a` to the nearest integer, recording nonzero residuals.
fn round_matrix(
    a: &RatMatrix,
    name: &'static str,
    residuals: &mut Vec<Residual>,
) -> Result<IntMatrix> {
    let rows = (0..a.rows())
        .map(|r| {
            (0..a.cols())
                .map(|c| round_entry(&a[(r, c)], name, r, c, residuals))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    IntMatrix::from_rows(rows)
}

fn round_entry(
    x: &Rational,
    name: &'static str,
    row: usize,
    col: usize,
    residuals: &mut Vec<Residual>,
) -> Result<i128> {
    let rounded = round_half_away(x);
    let value = x - Rational::from_integer(rounded.clone());
    if !value.is_zero() {
        residuals.push(Residual {
            matrix: name,
            row,
            col,
            value,
        });
    }
    rounded
        .to_i128()
        .ok_or_else(|| Error::Scaling(format!("{name}[{row},{col}] exceeds 128 bits")))
}

/// Integerizes `ctrl` with the transform of `rcf` and the given scales. In
/// strict mode any nonzero rounding residual is an error.
pub fn scale_and_integerize(
    ctrl: &LinearController,
    rcf: &RcfResult,
    scales: Scales,
    strict: bool,
) -> Result<ScaledController> {
    let n = ctrl.order();
    if rcf.original_order != n || rcf.t.rows() != n {
        return Err(Error::Dimension(format!(
            "transform of order {} for a controller of order {n}",
            rcf.original_order
        )));
    }
    let mut residuals = Vec::new();
    let g = (&rcf.t * &ctrl.g).scale(&rat_int(scales.s1_inv as i128));
    let h = (&ctrl.h * &rcf.t_inv).scale(&rat_int(scales.s2_inv as i128));
    let z_factor = rat_int(scales.r_inv as i128) * rat_int(scales.s1_inv as i128);
    let z = rcf.t.mul_vec(&ctrl.x_ini)?;

    let (padded, g, h) = pad_order_pow2(rcf, &g, &h)?;
    let f_bar = padded
        .f_bar_int()
        .ok_or_else(|| Error::Scaling("canonical form of F is not an integer matrix".into()))?;
    let g_bar = round_matrix(&g, "G", &mut residuals)?;
    let h_bar = round_matrix(&h, "H", &mut residuals)?;
    let mut z_ini = z
        .iter()
        .enumerate()
        .map(|(i, v)| round_entry(&(v * &z_factor), "z_ini", i, 0, &mut residuals))
        .collect::<Result<Vec<_>>>()?;
    z_ini.resize(padded.order(), 0);
    if strict && !residuals.is_empty() {
        let first = &residuals[0];
        return Err(Error::Scaling(format!(
            "{} nonzero rounding residuals, first {}[{},{}] = {}",
            residuals.len(),
            first.matrix,
            first.row,
            first.col,
            format_rational(&first.value)
        )));
    }
    Ok(ScaledController {
        rcf: padded,
        f_bar,
        g_bar,
        h_bar,
        z_ini,
        scales,
        residuals,
    })
}

/// Canonical-form transform of `ctrl.f` followed by [`scale_and_integerize`].
pub fn prepare(ctrl: &LinearController, scales: Scales, strict: bool) -> Result<ScaledController> {
    let rcf = rcf_transform(&ctrl.f)?;
    scale_and_integerize(ctrl, &rcf, scales, strict)
}

fn centered_mod(x: i128, q: &Modulus) -> i128 {
    q.center(q.from_i128(x)) as i128
}

/// `z(t+1) = F̄ z(t) + Ḡ ȳ(t) mod q`, centered.
pub fn plain_zq_step(
    z: &[i128],
    y_bar: &[i128],
    scaled: &ScaledController,
    q: &Modulus,
) -> Result<Vec<i128>> {
    let reduce = |v: Vec<i128>| {
        v.into_iter()
            .map(|x| centered_mod(x, q))
            .collect::<Vec<_>>()
    };
    let zr = reduce(z.to_vec());
    let yr = reduce(y_bar.to_vec());
    let wide = |a: &IntMatrix, v: &[i128]| -> Result<Vec<i128>> {
        if a.cols() != v.len() {
            return Err(Error::Dimension(format!(
                "{}x{} times {}",
                a.rows(),
                a.cols(),
                v.len()
            )));
        }
        Ok((0..a.rows())
            .map(|r| {
                a.row(r).iter().zip(v).fold(0i128, |acc, (&x, &y)| {
                    centered_mod(acc + centered_mod(centered_mod(x, q) * y, q), q)
                })
            })
            .collect())
    };
    let fz = wide(&scaled.f_bar, &zr)?;
    let gy = wide(&scaled.g_bar, &yr)?;
    Ok(fz
        .into_iter()
        .zip(gy)
        .map(|(a, b)| centered_mod(a + b, q))
        .collect())
}

/// `ū(t) = H̄ z(t) mod q`, centered.
pub fn plain_zq_output(z: &[i128], scaled: &ScaledController, q: &Modulus) -> Result<Vec<i128>> {
    if scaled.h_bar.cols() != z.len() {
        return Err(Error::Dimension("H̄ and z disagree".into()));
    }
    Ok((0..scaled.h_bar.rows())
        .map(|r| {
            scaled
                .h_bar
                .row(r)
                .iter()
                .zip(z)
                .fold(0i128, |acc, (&x, &y)| {
                    centered_mod(
                        acc + centered_mod(centered_mod(x, q) * centered_mod(y, q), q),
                        q,
                    )
                })
        })
        .collect())
}

/// The controller in packed form over `R_q`.
#[derive(Clone, Debug)]
pub struct PackedController {
    pub layout: PackingLayout,
    pub f_cols: Vec<RingElement>,
    pub r: Vec<usize>,
    pub g: RingElement,
    pub h: RingElement,
    pub z_ini: RingElement,
}

impl PackedController {
    pub fn new(scaled: &ScaledController, ring: &Arc<RingParams>) -> Result<Self> {
        let layout = PackingLayout::new(ring, scaled.order(), scaled.inputs(), scaled.outputs())?;
        Ok(Self {
            f_cols: layout.pack_f_columns(&scaled.rcf)?,
            r: scaled.rcf.r.clone(),
            g: layout.pack_g(&scaled.g_bar)?,
            h: layout.pack_h(&scaled.h_bar)?,
            z_ini: layout.pack_vector(&scaled.z_ini)?,
            layout,
        })
    }

    pub fn kappa(&self) -> usize {
        self.f_cols.len()
    }

    /// `Σ F̃_i z̃_{r_i} + X^{-N/n} z̃ + G̃ ỹ`, with `z̃_{r_i}` the slot-`r_i` coefficient of `z̃`.
    pub fn state_update(&self, z: &RingElement, y: &RingElement) -> Result<RingElement> {
        let spacing = self.layout.spacing();
        let mut next = z.monomial_mul(-(spacing as i64));
        for (f, &r) in self.f_cols.iter().zip(&self.r) {
            next = next.ring_add(&f.scalar_mul(z.coeff(r * spacing)))?;
        }
        next.ring_add(&self.g.ring_mul(y)?)
    }

    /// `H̃ · Slot_n(z̃)`.
    pub fn output(&self, z: &RingElement) -> Result<RingElement> {
        self.h.ring_mul(&slot_alpha(z, self.layout.order())?)
    }
}

/// One step of the packed recursion: `(z̃(t+1), ũ(t))`.
pub fn plain_ring_step(
    z: &RingElement,
    y: &RingElement,
    packed: &PackedController,
) -> Result<(RingElement, RingElement)> {
    Ok((packed.state_update(z, y)?, packed.output(z)?))
}

/// Per-step external products of the proposed controller: `2 + κ(1 + log₂n) + ⌈log₂m⌉`.
pub fn proposed_op_count(kappa: usize, n: usize, m: usize) -> u64 {
    (2 + kappa * (1 + log2_ceil(n)) + log2_ceil(m)) as u64
}

/// `(κ + 2, log₂n + ⌈log₂m⌉)`: stored multipliers and automorphism keys.
pub fn proposed_storage(kappa: usize, n: usize, m: usize) -> (usize, usize) {
    (kappa + 2, log2_ceil(n) + log2_ceil(m))
}

/// Upper bound `4n + p - 2` on the baseline's per-step external products.
pub fn baseline_op_bound(n: usize, p: usize) -> u64 {
    (4 * n + p - 2) as u64
}

pub(crate) fn log2_ceil(x: usize) -> usize {
    x.next_power_of_two().trailing_zeros() as usize
}

/// Perturbation bounds on the decrypted state, output and initial state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbationBounds {
    pub delta_z: f64,
    pub delta_u: f64,
    pub delta_ini: f64,
}

/// `Δz = (Σ‖F̃_i‖·n·log₂n + κ + 1)·σ_mult + n·p·‖G̃‖·σ`,
/// `Δu = (r s₁ s₂)(1 + ‖H̃‖·n·m·log₂τ)·σ_mult`, `Δini = σ`.
pub fn perturbation_bounds(
    packed: &PackedController,
    params: &EncParams,
    scales: &Scales,
) -> PerturbationBounds {
    let layout = &packed.layout;
    let n = layout.order() as f64;
    let p = layout.inputs() as f64;
    let m = layout.outputs() as f64;
    let log_n = n.log2();
    let log_tau = (layout.tau() as f64).log2();
    let kappa = packed.kappa() as f64;
    let sm = params.sigma_mult();
    let sigma = params.sigma();
    let f_sum: f64 = packed.f_cols.iter().map(|f| f.norm() as f64).sum();
    let factor = scales.output_factor().to_f64().unwrap_or(f64::NAN);
    PerturbationBounds {
        delta_z: (f_sum * n * log_n + kappa + 1.0) * sm + n * p * packed.g.norm() as f64 * sigma,
        delta_u: factor * (1.0 + packed.h.norm() as f64 * n * m * log_tau) * sm,
        delta_ini: sigma,
    }
}

/// `max(‖z‖, ‖ū‖) / (q/2)` for one step of the unreduced integer shadow.
pub fn step_margin(z: &[i128], u_bar: &[i128], q: u64) -> f64 {
    let norm = z
        .iter()
        .chain(u_bar)
        .map(|x| x.unsigned_abs())
        .max()
        .unwrap_or(0);
    norm as f64 / (q as f64 / 2.0)
}

/// Worst step of a shadow trajectory against the overflow condition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarginReport {
    pub max_margin: f64,
    pub worst_step: usize,
    pub first_violation: Option<usize>,
}

impl MarginReport {
    pub fn ok(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Margins of a trajectory of `(z(t), ū(t))` pairs.
pub fn overflow_margin(states: &[Vec<i128>], outputs: &[Vec<i128>], q: u64) -> MarginReport {
    let mut report = MarginReport {
        max_margin: 0.0,
        worst_step: 0,
        first_violation: None,
    };
    let empty = Vec::new();
    for t in 0..states.len().max(outputs.len()) {
        let margin = step_margin(
            states.get(t).unwrap_or(&empty),
            outputs.get(t).unwrap_or(&empty),
            q,
        );
        if margin > report.max_margin {
            report.max_margin = margin;
            report.worst_step = t;
        }
        if margin >= 1.0 && report.first_violation.is_none() {
            report.first_violation = Some(t);
        }
    }
    report
}

/// `‖Slot_n(a - b)‖`.
pub fn slot_distance(a: &RingElement, b: &RingElement, n: usize) -> Result<u128> {
    Ok(slot_alpha(&a.ring_sub(b)?, n)?.norm())
}

/// Largest absolute value of a rational vector, as `f64`.
pub fn max_abs_rational(v: &[Rational]) -> f64 {
    v.iter()
        .map(|x| x.abs().to_f64().unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max)
}
