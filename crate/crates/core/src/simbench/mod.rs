//! Closed-loop simulation of the two benchmark plants under the plain, packed
//! and encrypted controllers, with timing, CSV export and a self-check suite.

mod plant;
mod report;
mod run;
mod verify;

pub use plant::{discretize_zoh, PendulumParams, PlantModel};
pub use report::{export_csv, load_csv, timing_report, Manifest, RunTable, TimingRow, TimingStats};
pub use run::{
    bounded_without_growth, performance_error_series, run_closed_loop, slope, Mode, RunConfig,
    RunRecord, StepRecord, TrackingReport,
};
pub use verify::{selfcheck, CheckResult};

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;

use crate::controller::{LinearController, Scales};
use crate::error::{Error, Result};
use crate::linalg::{rat_from_f64, round_half_away, RatMatrix, Rational, RealMatrix};

/// Denominator of the measurement grid: `y ↦ ⌈y·10⁵⌋/10⁵`.
pub const QUANTIZATION: u64 = 100_000;

/// Default number of simulated steps.
pub const DEFAULT_HORIZON: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CaseId {
    /// Inverted pendulum with an order-8 controller, `(n, κ, m, p) = (8, 1, 1, 1)`.
    One,
    /// Two-input, two-output plant, `(n, κ, m, p) = (4, 2, 2, 2)`.
    Two,
}

impl CaseId {
    pub fn build(self) -> Result<SimCase> {
        match self {
            CaseId::One => build_case1(),
            CaseId::Two => build_case2(),
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaseId::One => "1",
            CaseId::Two => "2",
        })
    }
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" => Ok(CaseId::One),
            "2" => Ok(CaseId::Two),
            other => Err(Error::Parse(format!(
                "unknown case {other:?}, expected 1 or 2"
            ))),
        }
    }
}

/// A plant, its controller, scale factors, horizon and measurement grid.
#[derive(Clone, Debug)]
pub struct SimCase {
    pub id: CaseId,
    pub plant: PlantModel,
    pub controller: LinearController,
    pub scales: Scales,
    pub horizon: usize,
    pub quantization: u64,
}

impl SimCase {
    pub fn new(
        id: CaseId,
        plant: PlantModel,
        controller: LinearController,
        scales: Scales,
        horizon: usize,
        quantization: u64,
    ) -> Result<Self> {
        if controller.inputs() != plant.outputs() || controller.outputs() != plant.inputs() {
            return Err(Error::Dimension(format!(
                "controller maps {} measurements to {} inputs, plant has {} outputs and {} inputs",
                controller.inputs(),
                controller.outputs(),
                plant.outputs(),
                plant.inputs()
            )));
        }
        if quantization == 0 {
            return Err(Error::InvalidArgument(
                "quantization denominator must be positive".into(),
            ));
        }
        Ok(Self {
            id,
            plant,
            controller,
            scales,
            horizon,
            quantization,
        })
    }

    /// `[[A, B H], [G C, F]]`, the interconnection of plant and controller.
    pub fn closed_loop_matrix(&self) -> RealMatrix {
        let (np, n) = (self.plant.states(), self.controller.order());
        let bh = &self.plant.b * &self.controller.h.to_real();
        let gc = &self.controller.g.to_real() * &self.plant.c;
        let f = self.controller.f.to_real();
        RealMatrix::from_fn(np + n, np + n, |r, c| match (r < np, c < np) {
            (true, true) => self.plant.a[(r, c)],
            (true, false) => bh[(r, c - np)],
            (false, true) => gc[(r - np, c)],
            (false, false) => f[(r - np, c - np)],
        })
    }

    pub fn quantize(&self, y: &[f64]) -> Vec<Rational> {
        quantize_with(y, self.quantization)
    }
}

/// `⌈y·10⁵⌋/10⁵` entrywise, ties away from zero, evaluated on the exact value of each float.
pub fn quantize_measurement(y: &[f64]) -> Vec<Rational> {
    quantize_with(y, QUANTIZATION)
}

pub fn quantize_with(y: &[f64], denom: u64) -> Vec<Rational> {
    let d = Rational::from_integer(BigInt::from(denom));
    y.iter()
        .map(|&v| {
            Rational::new(
                round_half_away(&(rat_from_f64(v) * &d)),
                BigInt::from(denom),
            )
        })
        .collect()
}

fn scales() -> Scales {
    Scales::new(10_000_000_000, 10_000, 1).expect("nonzero scales")
}

fn decimals(rows: &[Vec<&str>]) -> RatMatrix {
    RatMatrix::from_decimals(rows).expect("literal decimals")
}

/// Inverted pendulum at 50 ms with the order-8 companion controller
/// `det(sI - F) = s⁴(s⁴ - s³ - 13s² - 4s + 10)`, `H = [10, 0, …, 0]`.
pub fn build_case1() -> Result<SimCase> {
    let plant = PendulumParams::default().plant(vec![0.0, 0.0, 0.1, 0.1])?;
    let first = [1, 13, 4, -10, 0, 0, 0, 0];
    let f = RatMatrix::from_ints(
        &(0..8)
            .map(|r| {
                (0..8)
                    .map(|c| {
                        if c == 0 {
                            first[r]
                        } else {
                            i64::from(c == r + 1)
                        }
                    })
                    .collect()
            })
            .collect::<Vec<_>>(),
    );
    // the 4-significant-digit print of G leaves the loop unstable; these are
    // within half a unit of every printed digit and give spectral radius ≈ 0.957
    let g = decimals(&[
        vec!["-640.4713"],
        vec!["1715.4398"],
        vec!["-1489.0739"],
        vec!["389.451"],
        vec!["27.2252"],
        vec!["-0.6047"],
        vec!["-2.3637"],
        vec!["0.4784"],
    ]);
    let h = RatMatrix::from_ints(&[vec![10, 0, 0, 0, 0, 0, 0, 0]]);
    let controller = LinearController::new(f, g, h, vec![Rational::from_integer(0.into()); 8])?;
    SimCase::new(
        CaseId::One,
        plant,
        controller,
        scales(),
        DEFAULT_HORIZON,
        QUANTIZATION,
    )
}

/// Two-input, two-output plant with an order-4 controller whose state matrix
/// has two companion blocks.
pub fn build_case2() -> Result<SimCase> {
    let a = decimals(&[
        vec!["-4.9535", "-1.3701", "2.0157", "1.0929"],
        vec!["5.4838", "3.0300", "-3.8440", "-1.9888"],
        vec!["0.9319", "0.5722", "-1.2467", "0.5866"],
        vec!["-2.4378", "-0.9447", "-2.0371", "-0.6299"],
    ]);
    let b_t = decimals(&[
        vec!["1.3993", "2.0586", "0.0968", "0.1186"],
        vec!["-0.0344", "-0.0405", "0.4669", "0.6871"],
    ]);
    let c = decimals(&[
        vec!["-0.5224", "-0.2219", "-0.3423", "-0.1006"],
        vec!["-0.9765", "-0.5500", "0.8802", "0.4234"],
    ]);
    let plant = PlantModel::new(
        a.to_real(),
        b_t.transpose().to_real(),
        c.to_real(),
        vec![0.0, 0.0, 0.1, -0.1],
    )?;
    let f = RatMatrix::from_ints(&[
        vec![1, 1, 0, 0],
        vec![2, 0, 0, 0],
        vec![0, 0, 1, 1],
        vec![0, 0, 2, 0],
    ]);
    let g_t = decimals(&[
        vec!["2.7", "-1.3", "-0.1", "5.0"],
        vec!["3.2", "-4.9", "-1.0", "-0.3"],
    ]);
    let h = RatMatrix::from_ints(&[vec![1, 0, 0, 0], vec![0, 0, 3, 0]]);
    let controller = LinearController::new(
        f,
        g_t.transpose(),
        h,
        vec![Rational::from_integer(0.into()); 4],
    )?;
    SimCase::new(
        CaseId::Two,
        plant,
        controller,
        scales(),
        DEFAULT_HORIZON,
        QUANTIZATION,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canon::rcf_transform;
    use crate::controller::prepare;
    use crate::linalg::{rat, RatPoly};

    #[test]
    fn quantization_examples() {
        assert_eq!(
            quantize_measurement(&[0.123456789]),
            vec![rat(12346, 100_000)]
        );
        assert_eq!(quantize_measurement(&[0.0]), vec![rat(0, 1)]);
        assert_eq!(quantize_measurement(&[-0.000004]), vec![rat(0, 1)]);
        assert_eq!(quantize_measurement(&[-0.000015]), vec![rat(-2, 100_000)]);
        assert_eq!(quantize_measurement(&[2.5e-6]), vec![rat(0, 1)]);
    }

    #[test]
    fn case_shapes() {
        for (case, (n, kappa, m, p)) in [
            (build_case1().unwrap(), (8, 1, 1, 1)),
            (build_case2().unwrap(), (4, 2, 2, 2)),
        ] {
            let scaled = prepare(&case.controller, case.scales, true).unwrap();
            assert_eq!(
                (
                    scaled.order(),
                    scaled.kappa(),
                    scaled.outputs(),
                    scaled.inputs()
                ),
                (n, kappa, m, p)
            );
            assert!(case.controller.x_ini.iter().all(|x| *x == rat(0, 1)));
            assert_eq!(case.horizon, 500);
        }
    }

    #[test]
    fn case1_state_matrix_is_the_stated_companion() {
        let case = build_case1().unwrap();
        let rcf = rcf_transform(&case.controller.f).unwrap();
        let quartic = RatPoly::from_ints(&[10, -4, -13, -1, 1]);
        let want = &RatPoly::monomial(4) * &quartic;
        assert_eq!(rcf.blocks, vec![want]);
        assert_eq!(rcf.f_bar, case.controller.f);
    }

    #[test]
    fn case2_state_matrix_has_two_blocks() {
        let case = build_case2().unwrap();
        let rcf = rcf_transform(&case.controller.f).unwrap();
        assert_eq!(rcf.kappa, 2);
        assert_eq!(rcf.r, vec![0, 2]);
    }

    #[test]
    fn closed_loops_are_stable() {
        let r1 = build_case1()
            .unwrap()
            .closed_loop_matrix()
            .spectral_radius();
        let r2 = build_case2()
            .unwrap()
            .closed_loop_matrix()
            .spectral_radius();
        assert!(r1 < 1.0 && r1 > 0.9, "case 1 spectral radius {r1}");
        assert!(r2 < 1.0, "case 2 spectral radius {r2}");
    }
}
