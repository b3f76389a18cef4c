use crate::error::{Error, Result};
use crate::linalg::RealMatrix;

/// `A = exp(A_c T_s)` and `B = ∫₀^{T_s} exp(A_c s) ds · B_c`, both read off
/// the exponential of the augmented matrix `[[A_c, B_c], [0, 0]]·T_s`.
pub fn discretize_zoh(
    ac: &RealMatrix,
    bc: &RealMatrix,
    ts: f64,
) -> Result<(RealMatrix, RealMatrix)> {
    let n = ac.rows();
    if !ac.is_square() || bc.rows() != n {
        return Err(Error::Dimension(format!(
            "A_c is {}x{}, B_c is {}x{}",
            ac.rows(),
            ac.cols(),
            bc.rows(),
            bc.cols()
        )));
    }
    if !(ts.is_finite() && ts > 0.0) {
        return Err(Error::InvalidArgument(format!("sampling period {ts}")));
    }
    let m = bc.cols();
    let aug = RealMatrix::from_fn(n + m, n + m, |r, c| match (r < n, c < n) {
        (true, true) => ac[(r, c)] * ts,
        (true, false) => bc[(r, c - n)] * ts,
        _ => 0.0,
    });
    let e = aug.expm()?;
    Ok((e.submatrix(0, n, 0, n), e.submatrix(0, n, n, n + m)))
}

/// Linearized cart-pole: cart mass `M`, pendulum mass `m`, friction `b`,
/// distance to the pendulum's center of mass `l`, inertia `I`, gravity `g`,
/// sampling period `T_s` in seconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PendulumParams {
    pub cart_mass: f64,
    pub pend_mass: f64,
    pub friction: f64,
    pub length: f64,
    pub inertia: f64,
    pub gravity: f64,
    pub sample_time: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            cart_mass: 0.5,
            pend_mass: 0.2,
            friction: 0.1,
            length: 0.2,
            inertia: 0.006,
            gravity: 9.8,
            sample_time: 0.05,
        }
    }
}

impl PendulumParams {
    fn validate(&self) -> Result<()> {
        let all = [
            self.cart_mass,
            self.pend_mass,
            self.friction,
            self.length,
            self.inertia,
            self.gravity,
            self.sample_time,
        ];
        if all.iter().all(|x| x.is_finite() && *x > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "pendulum parameters must be positive: {self:?}"
            )))
        }
    }

    /// Continuous-time `(A_c, B_c)` for the state `(x, ẋ, φ, φ̇)`:
    ///
    /// `(M+m)ẍ + bẋ - m l φ̈ = u`, `(I + m l²)φ̈ - m g l φ = m l ẍ`.
    pub fn continuous(&self) -> Result<(RealMatrix, RealMatrix)> {
        self.validate()?;
        let (mc, mp, b, l, g) = (
            self.cart_mass,
            self.pend_mass,
            self.friction,
            self.length,
            self.gravity,
        );
        let j = self.inertia + mp * l * l;
        // inverse of the mass matrix [[M+m, -ml], [-ml, J]]
        let det = (mc + mp) * j - (mp * l) * (mp * l);
        let inv = [[j / det, mp * l / det], [mp * l / det, (mc + mp) / det]];
        let mut ac = RealMatrix::zeros(4, 4);
        let mut bc = RealMatrix::zeros(4, 1);
        ac[(0, 1)] = 1.0;
        ac[(2, 3)] = 1.0;
        for (row, k) in [(1, 0), (3, 1)] {
            ac[(row, 1)] = -b * inv[k][0];
            ac[(row, 2)] = mp * g * l * inv[k][1];
            bc[(row, 0)] = inv[k][0];
        }
        Ok((ac, bc))
    }

    /// Zero-order-hold discretization with the cart position as output.
    pub fn plant(&self, x_ini: Vec<f64>) -> Result<PlantModel> {
        let (ac, bc) = self.continuous()?;
        let (a, b) = discretize_zoh(&ac, &bc, self.sample_time)?;
        let c = RealMatrix::from_rows(vec![vec![1.0, 0.0, 0.0, 0.0]])?;
        PlantModel::new(a, b, c, x_ini)
    }
}

/// `x_p(t+1) = A x_p(t) + B u(t)`, `y(t) = C x_p(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantModel {
    pub a: RealMatrix,
    pub b: RealMatrix,
    pub c: RealMatrix,
    pub x_ini: Vec<f64>,
}

impl PlantModel {
    pub fn new(a: RealMatrix, b: RealMatrix, c: RealMatrix, x_ini: Vec<f64>) -> Result<Self> {
        let n = a.rows();
        if !a.is_square() || b.rows() != n || c.cols() != n || x_ini.len() != n {
            return Err(Error::Dimension(format!(
                "A {}x{}, B {}x{}, C {}x{}, x_ini {}",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols(),
                c.rows(),
                c.cols(),
                x_ini.len()
            )));
        }
        Ok(Self { a, b, c, x_ini })
    }

    pub fn states(&self) -> usize {
        self.a.rows()
    }

    /// Dimension of `u`.
    pub fn inputs(&self) -> usize {
        self.b.cols()
    }

    /// Dimension of `y`.
    pub fn outputs(&self) -> usize {
        self.c.rows()
    }

    pub fn output(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.c.mul_vec(x)
    }

    pub fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let ax = self.a.mul_vec(x)?;
        let bu = self.b.mul_vec(u)?;
        Ok(ax.into_iter().zip(bu).map(|(a, b)| a + b).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_dynamics_integrate_the_input() {
        let ac = RealMatrix::zeros(2, 2);
        let bc = RealMatrix::from_rows(vec![vec![1.0], vec![-2.0]]).unwrap();
        let (a, b) = discretize_zoh(&ac, &bc, 0.05).unwrap();
        assert_eq!(a, RealMatrix::identity(2));
        assert!((b[(0, 0)] - 0.05).abs() < 1e-15 && (b[(1, 0)] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn scalar_decay() {
        let ac = RealMatrix::from_rows(vec![vec![-1.0]]).unwrap();
        let bc = RealMatrix::from_rows(vec![vec![1.0]]).unwrap();
        let (a, b) = discretize_zoh(&ac, &bc, 0.05).unwrap();
        // series for e^{-0.05} and 1 - e^{-0.05}
        let mut e = 0.0;
        let mut term = 1.0;
        for k in 1..30 {
            e += term;
            term *= -0.05 / k as f64;
        }
        assert!((a[(0, 0)] - e).abs() < 1e-14);
        assert!((a[(0, 0)] - 0.951229).abs() < 1e-6);
        assert!((b[(0, 0)] - (1.0 - e)).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_shapes() {
        let ac = RealMatrix::zeros(2, 3);
        let bc = RealMatrix::zeros(2, 1);
        assert!(discretize_zoh(&ac, &bc, 0.1).is_err());
        assert!(discretize_zoh(&RealMatrix::zeros(2, 2), &RealMatrix::zeros(3, 1), 0.1).is_err());
        let bad = PendulumParams {
            friction: -1.0,
            ..Default::default()
        };
        assert!(bad.continuous().is_err());
    }

    #[test]
    fn pendulum_is_open_loop_unstable() {
        let plant = PendulumParams::default()
            .plant(vec![0.0, 0.0, 0.1, 0.1])
            .unwrap();
        assert!(plant.a.spectral_radius() > 1.0);
        let x1 = plant.step(&plant.x_ini, &[0.0]).unwrap();
        assert!(x1[2] > 0.1);
    }
}
