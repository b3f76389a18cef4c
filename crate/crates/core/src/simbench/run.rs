use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use num_traits::{Signed, ToPrimitive};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use super::{CaseId, Manifest, SimCase};
use crate::controller::{
    actuator_decode, baseline_encrypt, encrypt_controller, perturbation_bounds, plain_ring_step,
    prepare, sensor_encode, slot_distance, step_margin, BaselineController, EncryptedController,
    MarginReport, PackedController, PerturbationBounds, ScaledController,
};
use crate::error::{Error, Result};
use crate::linalg::{rat_int, rational_to_f64, Rational};
use crate::packing::unpack_strided;
use crate::ring::RingElement;
use crate::rlwe::{decrypt, keygen, EncParams, SecretKey};

/// Which controller closes the loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Packed state, RCF-structured multipliers and traces.
    Proposed,
    /// Column-packed matrices with full slot expansion.
    Baseline,
    /// The original controller in exact rational arithmetic.
    Plain,
    /// The packed recursion over `R_q` in the clear.
    RingShadow,
}

impl Mode {
    pub fn is_encrypted(self) -> bool {
        matches!(self, Mode::Proposed | Mode::Baseline)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Proposed => "proposed",
            Mode::Baseline => "baseline",
            Mode::Plain => "plain",
            Mode::RingShadow => "ring-shadow",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "proposed" => Ok(Mode::Proposed),
            "baseline" => Ok(Mode::Baseline),
            "plain" | "plain-reference" => Ok(Mode::Plain),
            "ring-shadow" | "ring" => Ok(Mode::RingShadow),
            other => Err(Error::Parse(format!("unknown mode {other:?}"))),
        }
    }
}

/// Everything that determines a run apart from wall-clock time.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub case: CaseId,
    pub mode: Mode,
    pub steps: usize,
    pub seed: u64,
    pub params: Arc<EncParams>,
    /// Decrypt around every encrypted step and compare with the one-step bounds.
    pub track: bool,
}

impl RunConfig {
    /// 500 steps, seed 0, benchmark parameters, no tracking.
    pub fn new(case: CaseId, mode: Mode) -> Self {
        Self {
            case,
            mode,
            steps: super::DEFAULT_HORIZON,
            seed: 0,
            params: EncParams::benchmark(),
            track: false,
        }
    }

    pub fn manifest(&self) -> Manifest {
        let p = &self.params;
        let mut m = Manifest::default();
        m.set("case", self.case);
        m.set("mode", self.mode);
        m.set("steps", self.steps);
        m.set("seed", self.seed);
        m.set("track", self.track);
        m.set("ring_degree", p.degree());
        m.set("q", p.q());
        m.set("p", p.p());
        m.set("sigma", p.sigma());
        m.set("noiseless", p.is_noiseless());
        m.set("params", hex::encode(p.to_bytes()));
        m.set("params_digest", hex::encode(p.digest()));
        m
    }

    pub fn from_manifest(m: &Manifest) -> Result<Self> {
        let bytes =
            hex::decode(m.require("params")?).map_err(|e| Error::Parse(format!("params: {e}")))?;
        let (params, _) = EncParams::from_bytes(&bytes)?;
        if let Some(d) = m.get("params_digest") {
            if d != hex::encode(params.digest()) {
                return Err(Error::ParamsMismatch);
            }
        }
        Ok(Self {
            case: m.parse("case")?,
            mode: m.parse("mode")?,
            steps: m.parse("steps")?,
            seed: m.parse("seed")?,
            params,
            track: m.get("track").map(|v| v == "true").unwrap_or(false),
        })
    }
}

/// One closed-loop step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    /// Quantized measurement.
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    /// Input of the unencrypted reference loop at the same step.
    pub u_nom: Vec<f64>,
    /// `‖u - u_nom‖∞`, computed before rounding to `f64`.
    pub err: f64,
    /// Sensor encoding, controller step and actuator decoding.
    pub elapsed_ms: f64,
    pub ext_prod_count: u64,
    pub margin: f64,
}

/// Worst per-step deviation from the one-step perturbation bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackingReport {
    pub bounds: PerturbationBounds,
    /// `max_t ‖Slot_n(Dec z(t+1) - f(Dec z(t), ỹ(t)))‖`.
    pub max_state_residual: f64,
    /// `max_t ‖Dec-decoded u(t) - (r s₁ s₂)·Unpack(H̃·Slot_n(Dec z(t)))‖`.
    pub max_output_residual: f64,
    pub state_violations: usize,
    pub output_violations: usize,
    /// `max_t ‖Slot_n(Dec z(t) - z̃(t))‖` against the clear recursion driven by the same inputs.
    pub max_shadow_distance: f64,
}

impl TrackingReport {
    pub fn ok(&self) -> bool {
        self.state_violations == 0 && self.output_violations == 0
    }
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub config: RunConfig,
    pub steps: Vec<StepRecord>,
    pub margin: MarginReport,
    pub tracking: Option<TrackingReport>,
    /// `(gadget ciphertexts, automorphism keys)` of an encrypted controller.
    pub storage: Option<(usize, usize)>,
    /// SHA-256 of the final encrypted state.
    pub state_digest: Option<String>,
    /// Nonzero rounding residuals of the integerized controller.
    pub residuals: usize,
}

impl RunRecord {
    pub fn manifest(&self) -> Manifest {
        let mut m = self.config.manifest();
        m.set("residuals", self.residuals);
        if let Some(d) = &self.state_digest {
            m.set("state_digest", d);
        }
        m
    }

    pub fn errors(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.err).collect()
    }

    pub fn op_counts(&self) -> Vec<u64> {
        self.steps.iter().map(|s| s.ext_prod_count).collect()
    }
}

enum Path {
    Plain {
        x: Vec<Rational>,
    },
    Ring {
        packed: PackedController,
        z: RingElement,
    },
    Proposed {
        enc: Box<EncryptedController>,
        packed: PackedController,
        shadow: RingElement,
        sk: SecretKey,
    },
    Baseline {
        enc: Box<BaselineController>,
        sk: SecretKey,
    },
}

#[derive(Default)]
struct Tracker {
    max_state: f64,
    max_output: f64,
    state_violations: usize,
    output_violations: usize,
    max_shadow: f64,
}

fn step_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn to_f64(v: &[Rational]) -> Vec<f64> {
    v.iter().map(rational_to_f64).collect()
}

fn max_diff(a: &[Rational], b: &[Rational]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs().to_f64().unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max)
}

fn build_path(case: &SimCase, scaled: &ScaledController, cfg: &RunConfig) -> Result<Path> {
    let ring = cfg.params.ring();
    Ok(match cfg.mode {
        Mode::Plain => Path::Plain {
            x: case.controller.x_ini.clone(),
        },
        Mode::RingShadow => {
            let packed = PackedController::new(scaled, ring)?;
            let z = packed.z_ini.clone();
            Path::Ring { packed, z }
        }
        Mode::Proposed => {
            let sk = keygen(&cfg.params, cfg.seed);
            let packed = PackedController::new(scaled, ring)?;
            let enc = encrypt_controller(&packed, &sk, &mut step_rng(cfg.seed, 1))?;
            Path::Proposed {
                enc: Box::new(enc),
                shadow: packed.z_ini.clone(),
                packed,
                sk,
            }
        }
        Mode::Baseline => {
            let sk = keygen(&cfg.params, cfg.seed);
            let enc = baseline_encrypt(scaled, &sk, &mut step_rng(cfg.seed, 1))?;
            Path::Baseline {
                enc: Box::new(enc),
                sk,
            }
        }
    })
}

/// Simulates `cfg.steps` steps of the plant closed by the controller of
/// `cfg.mode`, next to a reference loop closed by the exact rational
/// controller. The unreduced integer recursion runs alongside, and a step
/// whose overflow margin reaches 1 aborts the run with [`Error::Overflow`].
pub fn run_closed_loop(case: &SimCase, cfg: &RunConfig) -> Result<RunRecord> {
    if case.id != cfg.case {
        return Err(Error::InvalidArgument(format!(
            "case {} run with config for case {}",
            case.id, cfg.case
        )));
    }
    let scaled = prepare(&case.controller, case.scales, false)?;
    let q = cfg.params.q();
    let factor = case.scales.output_factor();
    let mut path = build_path(case, &scaled, cfg)?;
    let bounds = perturbation_bounds(
        &PackedController::new(&scaled, cfg.params.ring())?,
        &cfg.params,
        &case.scales,
    );
    let mut tracker = Tracker::default();

    let plant = &case.plant;
    let mut xp = plant.x_ini.clone();
    let mut xp_nom = plant.x_ini.clone();
    let mut x_nom = case.controller.x_ini.clone();
    let mut z_int = scaled.z_ini.clone();
    let mut margin = MarginReport {
        max_margin: 0.0,
        worst_step: 0,
        first_violation: None,
    };
    let mut steps = Vec::with_capacity(cfg.steps);

    for t in 0..cfg.steps {
        let y = case.quantize(&plant.output(&xp)?);
        let y_nom = case.quantize(&plant.output(&xp_nom)?);
        let (x_nom_next, u_nom) = case.controller.step(&x_nom, &y_nom)?;

        let y_bar = scaled.scale_input(&y)?;
        let decrypted = match &path {
            Path::Proposed { enc, sk, .. } => Some(decrypt(enc.state(), sk)?),
            Path::Baseline { enc, sk } => Some(decrypt(enc.state(), sk)?),
            _ => None,
        };
        let z_cur = match (&path, &decrypted) {
            (Path::Proposed { packed, .. }, Some(d)) => packed.layout.unpack_vector(d),
            (Path::Baseline { enc, .. }, Some(d)) => {
                unpack_strided(d, scaled.order(), enc.spacing())
            }
            _ => z_int.clone(),
        };
        let (z_next, u_bar) = scaled.integer_step(&z_cur, &y_bar)?;
        let m = step_margin(&z_cur, &u_bar, q).max(step_margin(&z_next, &[], q));
        if m > margin.max_margin {
            margin.max_margin = m;
            margin.worst_step = t;
        }
        if m >= 1.0 {
            return Err(Error::Overflow { step: t, margin: m });
        }

        let (u, elapsed, ops) = match &mut path {
            Path::Plain { x } => {
                let start = Instant::now();
                let (next, u) = case.controller.step(x, &y)?;
                let elapsed = start.elapsed();
                *x = next;
                (u, elapsed, 0)
            }
            Path::Ring { packed, z } => {
                let start = Instant::now();
                let y_packed = packed.layout.pack_input(&y_bar)?;
                let (next, u_ring) = plain_ring_step(z, &y_packed, packed)?;
                let u: Vec<Rational> = packed
                    .layout
                    .unpack_output(&u_ring)
                    .into_iter()
                    .map(|v| rat_int(v) * &factor)
                    .collect();
                let elapsed = start.elapsed();
                *z = next;
                (u, elapsed, 0)
            }
            Path::Proposed {
                enc,
                packed,
                shadow,
                sk,
            } => {
                let mut rng = step_rng(cfg.seed, t as u64 + 2);
                let counter = enc.evaluator().counter().clone();
                counter.reset();
                let start = Instant::now();
                let y_ct = sensor_encode(&y, &case.scales, enc.layout(), sk, &mut rng)?;
                let u_ct = enc.step(&y_ct)?;
                let u = actuator_decode(&u_ct, sk, &case.scales, enc.layout())?;
                let elapsed = start.elapsed();
                let ops = counter.get();
                if let (true, Some(z_before)) = (cfg.track, &decrypted) {
                    let n = packed.layout.order();
                    let y_packed = packed.layout.pack_input(&y_bar)?;
                    let z_after = decrypt(enc.state(), sk)?;
                    let shadow_dist = slot_distance(z_before, shadow, n)? as f64;
                    tracker.max_shadow = tracker.max_shadow.max(shadow_dist);
                    let state_res =
                        slot_distance(&z_after, &packed.state_update(z_before, &y_packed)?, n)?
                            as f64;
                    let expected: Vec<Rational> = packed
                        .layout
                        .unpack_output(&packed.output(z_before)?)
                        .into_iter()
                        .map(|v| rat_int(v) * &factor)
                        .collect();
                    let out_res = max_diff(&u, &expected);
                    tracker.max_state = tracker.max_state.max(state_res);
                    tracker.max_output = tracker.max_output.max(out_res);
                    tracker.state_violations += usize::from(state_res > bounds.delta_z);
                    tracker.output_violations += usize::from(out_res > bounds.delta_u);
                    *shadow = packed.state_update(shadow, &y_packed)?;
                }
                (u, elapsed, ops)
            }
            Path::Baseline { enc, sk } => {
                let mut rng = step_rng(cfg.seed, t as u64 + 2);
                let counter = enc.evaluator().counter().clone();
                counter.reset();
                let start = Instant::now();
                let y_ct = enc.sensor_encode(&y, &case.scales, sk, &mut rng)?;
                let u_ct = enc.step(&y_ct)?;
                let u = enc.decode(&u_ct, sk, &case.scales)?;
                let elapsed = start.elapsed();
                (u, elapsed, counter.get())
            }
        };

        let err = max_diff(&u, &u_nom);
        let u_f = to_f64(&u);
        let u_nom_f = to_f64(&u_nom);
        xp = plant.step(&xp, &u_f)?;
        xp_nom = plant.step(&xp_nom, &u_nom_f)?;
        x_nom = x_nom_next;
        z_int = z_next;
        steps.push(StepRecord {
            t,
            y: to_f64(&y),
            u: u_f,
            u_nom: u_nom_f,
            err,
            elapsed_ms: elapsed.as_secs_f64() * 1e3,
            ext_prod_count: ops,
            margin: m,
        });
    }

    let (storage, state_digest) = match &path {
        Path::Proposed { enc, .. } => (
            Some(enc.storage_counts()),
            Some(hex::encode(Sha256::digest(enc.state().to_bytes()))),
        ),
        Path::Baseline { enc, .. } => (
            Some(enc.storage_counts()),
            Some(hex::encode(Sha256::digest(enc.state().to_bytes()))),
        ),
        _ => (None, None),
    };
    let tracking = (cfg.track && cfg.mode == Mode::Proposed).then_some(TrackingReport {
        bounds,
        max_state_residual: tracker.max_state,
        max_output_residual: tracker.max_output,
        state_violations: tracker.state_violations,
        output_violations: tracker.output_violations,
        max_shadow_distance: tracker.max_shadow,
    });
    Ok(RunRecord {
        config: cfg.clone(),
        steps,
        margin,
        tracking,
        storage,
        state_digest,
        residuals: scaled.residuals.len(),
    })
}

/// `‖u(t) - u_ref(t)‖∞` for every step.
pub fn performance_error_series(run: &RunRecord, reference: &RunRecord) -> Result<Vec<f64>> {
    if run.steps.len() != reference.steps.len() {
        return Err(Error::Length {
            expected: reference.steps.len(),
            got: run.steps.len(),
        });
    }
    run.steps
        .iter()
        .zip(&reference.steps)
        .map(|(a, b)| {
            if a.u.len() != b.u.len() {
                return Err(Error::Length {
                    expected: b.u.len(),
                    got: a.u.len(),
                });
            }
            Ok(a.u
                .iter()
                .zip(&b.u)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max))
        })
        .collect()
}

/// Least-squares slope of `series` against its index.
pub fn slope(series: &[f64]) -> f64 {
    let n = series.len() as f64;
    if series.len() < 2 {
        return 0.0;
    }
    let mean_t = (n - 1.0) / 2.0;
    let mean_y = series.iter().sum::<f64>() / n;
    let (num, den) = series
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(num, den), (t, y)| {
            let dt = t as f64 - mean_t;
            (num + dt * (y - mean_y), den + dt * dt)
        });
    num / den
}

/// True when `series` is finite and, in every window of `window` steps, the
/// least-squares trend across the window stays below the spread of the
/// whole series, and the window means do not increase monotonically.
pub fn bounded_without_growth(series: &[f64], window: usize) -> bool {
    if series.iter().any(|x| !x.is_finite()) || window < 2 {
        return false;
    }
    let peak = series.iter().copied().fold(0.0, f64::max);
    let windows: Vec<&[f64]> = series.chunks_exact(window).collect();
    let trend_ok = series
        .windows(window.min(series.len()))
        .step_by((window / 4).max(1))
        .all(|w| slope(w) * w.len() as f64 <= peak * 0.5 + f64::EPSILON);
    let means: Vec<f64> = windows
        .iter()
        .map(|w| w.iter().sum::<f64>() / w.len() as f64)
        .collect();
    let monotone = means.len() >= 3 && means.windows(2).all(|p| p[1] > p[0]);
    trend_ok && !monotone
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simbench::build_case2;

    #[test]
    fn mode_names_round_trip() {
        for m in [
            Mode::Proposed,
            Mode::Baseline,
            Mode::Plain,
            Mode::RingShadow,
        ] {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
        assert!("fast".parse::<Mode>().is_err());
    }

    #[test]
    fn config_round_trips_through_the_manifest() {
        let mut cfg = RunConfig::new(CaseId::Two, Mode::Baseline);
        cfg.steps = 17;
        cfg.seed = 99;
        cfg.params = EncParams::with_bits(64, 40, 35).unwrap();
        let back = RunConfig::from_manifest(&cfg.manifest()).unwrap();
        assert_eq!(
            (back.case, back.mode, back.steps, back.seed),
            (CaseId::Two, Mode::Baseline, 17, 99)
        );
        assert_eq!(back.params.digest(), cfg.params.digest());
    }

    #[test]
    fn slope_of_a_line() {
        let line: Vec<f64> = (0..50).map(|t| 3.0 + 0.5 * t as f64).collect();
        assert!((slope(&line) - 0.5).abs() < 1e-12);
        assert!(!bounded_without_growth(&line, 10));
        let flat: Vec<f64> = (0..400).map(|t| ((t * 7919) % 13) as f64).collect();
        assert!(bounded_without_growth(&flat, 100));
    }

    #[test]
    fn plain_and_ring_shadow_agree_exactly() {
        let case = build_case2().unwrap();
        let mut cfg = RunConfig::new(CaseId::Two, Mode::Plain);
        cfg.steps = 60;
        cfg.params = EncParams::with_bits(64, 56, 51).unwrap();
        let plain = run_closed_loop(&case, &cfg).unwrap();
        cfg.mode = Mode::RingShadow;
        let ring = run_closed_loop(&case, &cfg).unwrap();
        assert!(plain.errors().iter().all(|&e| e == 0.0));
        assert!(ring.errors().iter().all(|&e| e == 0.0));
        assert!(performance_error_series(&ring, &plain)
            .unwrap()
            .iter()
            .all(|&e| e == 0.0));
        assert!(ring.margin.max_margin < 1.0);
    }

    #[test]
    fn small_ring_encrypted_counts() {
        let case = build_case2().unwrap();
        let mut cfg = RunConfig::new(CaseId::Two, Mode::Proposed);
        cfg.steps = 5;
        cfg.params = EncParams::with_bits(64, 56, 51).unwrap();
        cfg.track = true;
        let run = run_closed_loop(&case, &cfg).unwrap();
        assert!(run.op_counts().iter().all(|&c| c == 9));
        assert_eq!(run.storage, Some((4, 3)));
        assert!(run.tracking.as_ref().unwrap().ok());
        cfg.mode = Mode::Baseline;
        let base = run_closed_loop(&case, &cfg).unwrap();
        assert!(base.op_counts().iter().all(|&c| c <= 16));
    }

    #[test]
    fn tiny_modulus_aborts() {
        let case = build_case2().unwrap();
        let mut cfg = RunConfig::new(CaseId::Two, Mode::Plain);
        cfg.params = EncParams::with_bits(16, 10, 51).unwrap();
        assert!(matches!(
            run_closed_loop(&case, &cfg),
            Err(Error::Overflow { .. })
        ));
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let case = build_case2().unwrap();
        let mut cfg = RunConfig::new(CaseId::Two, Mode::Plain);
        cfg.steps = 3;
        cfg.params = EncParams::with_bits(64, 56, 51).unwrap();
        let a = run_closed_loop(&case, &cfg).unwrap();
        cfg.steps = 4;
        let b = run_closed_loop(&case, &cfg).unwrap();
        assert!(performance_error_series(&a, &b).is_err());
        assert!(performance_error_series(&a, &a)
            .unwrap()
            .iter()
            .all(|&e| e == 0.0));
    }
}
