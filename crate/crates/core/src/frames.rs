//! Reference-frame transformations between (abc), (αβ) and (dq0), plus
//! instantaneous power.
//!
//! The Clarke transform used here is power-invariant: amplitudes in the αβ
//! frame are the phase amplitude times √(3/2), and `v·i` gives three-phase
//! power without a scaling factor. Every αβ amplitude in this crate follows
//! that convention; user-facing "phase amplitudes" are converted at the
//! boundary with [`SQRT_3_OVER_2`].

use serde::{Deserialize, Serialize};

/// √(3/2), the phase-amplitude → αβ-amplitude factor of the power-invariant
/// Clarke transform.
pub const SQRT_3_OVER_2: f64 = 1.224744871391589;

/// A three-phase quantity (volts or amperes; the caller tracks the unit).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AbcSignal {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// A two-component quantity in the stationary αβ frame (power-invariant
/// scaling; the γ component is carried separately where needed).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AlphaBeta {
    pub alpha: f64,
    pub beta: f64,
}

impl AlphaBeta {
    pub const ZERO: AlphaBeta = AlphaBeta { alpha: 0.0, beta: 0.0 };

    pub fn new(alpha: f64, beta: f64) -> Self {
        AlphaBeta { alpha, beta }
    }

    pub fn norm(self) -> f64 {
        self.alpha.hypot(self.beta)
    }

    pub fn norm_sq(self) -> f64 {
        self.alpha * self.alpha + self.beta * self.beta
    }

    pub fn dot(self, rhs: AlphaBeta) -> f64 {
        self.alpha * rhs.alpha + self.beta * rhs.beta
    }

    /// Rotation by +90°: J·z with J = [[0, −1], [1, 0]].
    pub fn perp(self) -> AlphaBeta {
        AlphaBeta { alpha: -self.beta, beta: self.alpha }
    }

    pub fn scale(self, k: f64) -> AlphaBeta {
        AlphaBeta { alpha: k * self.alpha, beta: k * self.beta }
    }

    /// Rotation by `angle` (counter-clockwise).
    pub fn rotate(self, angle: f64) -> AlphaBeta {
        let (s, c) = angle.sin_cos();
        AlphaBeta {
            alpha: c * self.alpha - s * self.beta,
            beta: s * self.alpha + c * self.beta,
        }
    }

    pub fn is_finite(self) -> bool {
        self.alpha.is_finite() && self.beta.is_finite()
    }
}

impl std::ops::Add for AlphaBeta {
    type Output = AlphaBeta;
    fn add(self, rhs: AlphaBeta) -> AlphaBeta {
        AlphaBeta { alpha: self.alpha + rhs.alpha, beta: self.beta + rhs.beta }
    }
}

impl std::ops::Sub for AlphaBeta {
    type Output = AlphaBeta;
    fn sub(self, rhs: AlphaBeta) -> AlphaBeta {
        AlphaBeta { alpha: self.alpha - rhs.alpha, beta: self.beta - rhs.beta }
    }
}

/// A quantity in a rotating dq frame, together with the transform angle that
/// produced it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DqSignal {
    pub d: f64,
    pub q: f64,
    pub gamma_angle: f64,
}

const K: f64 = 0.816496580927726; // √(2/3)
const HALF_SQRT3: f64 = 0.8660254037844386;
const FRAC_1_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Power-invariant Clarke transform. Returns the (α, β) pair and the γ
/// component. The matrix is orthonormal, so the inverse is the transpose.
pub fn clarke(abc: AbcSignal) -> (AlphaBeta, f64) {
    let alpha = K * (abc.a - 0.5 * abc.b - 0.5 * abc.c);
    let beta = K * (HALF_SQRT3 * abc.b - HALF_SQRT3 * abc.c);
    let gamma = K * FRAC_1_SQRT2 * (abc.a + abc.b + abc.c);
    (AlphaBeta { alpha, beta }, gamma)
}

/// Inverse Clarke transform (transpose of the forward matrix).
pub fn inverse_clarke(ab: AlphaBeta, gamma: f64) -> AbcSignal {
    let g = FRAC_1_SQRT2 * gamma;
    AbcSignal {
        a: K * (ab.alpha + g),
        b: K * (-0.5 * ab.alpha + HALF_SQRT3 * ab.beta + g),
        c: K * (-0.5 * ab.alpha - HALF_SQRT3 * ab.beta + g),
    }
}

/// Park transform: rotates an αβ signal by −angle. A synchronous signal
/// viewed at its own phase angle becomes a constant vector.
pub fn park(ab: AlphaBeta, angle: f64) -> DqSignal {
    let r = ab.rotate(-angle);
    DqSignal { d: r.alpha, q: r.beta, gamma_angle: angle }
}

/// Inverse Park transform: z_αβ = R_γ z_dq.
pub fn inverse_park(dq: DqSignal) -> AlphaBeta {
    AlphaBeta { alpha: dq.d, beta: dq.q }.rotate(dq.gamma_angle)
}

/// Instantaneous active and reactive power per Akagi's theory:
/// P = v_α i_α + v_β i_β, Q = v_β i_α − v_α i_β.
pub fn instantaneous_pq(v: AlphaBeta, i: AlphaBeta) -> (f64, f64) {
    let p = v.alpha * i.alpha + v.beta * i.beta;
    let q = v.beta * i.alpha - v.alpha * i.beta;
    (p, q)
}

/// Balance check: |a+b+c| ≤ tol·max(1, ‖(a,b,c)‖).
pub fn is_balanced(abc: AbcSignal, tol: f64) -> bool {
    let sum = abc.a + abc.b + abc.c;
    let norm = (abc.a * abc.a + abc.b * abc.b + abc.c * abc.c).sqrt();
    sum.abs() <= tol * norm.max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn clarke_balanced_examples() {
        let (ab, g) = clarke(AbcSignal { a: 0.0, b: -0.8660, c: 0.8660 });
        assert_relative_eq!(ab.alpha, 0.0, epsilon = 1e-12);
        assert_relative_eq!(ab.beta, -1.2247, epsilon = 1e-4);
        assert_relative_eq!(g, 0.0, epsilon = 1e-12);

        let (ab, g) = clarke(AbcSignal { a: 0.0, b: 0.0, c: 0.0 });
        assert_eq!((ab.alpha, ab.beta, g), (0.0, 0.0, 0.0));

        let (ab, g) = clarke(AbcSignal { a: 1.0, b: -0.5, c: -0.5 });
        assert_relative_eq!(ab.alpha, 1.2247, epsilon = 1e-4);
        assert_relative_eq!(ab.beta, 0.0, epsilon = 1e-12);
        assert_relative_eq!(g, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn inverse_clarke_examples() {
        let abc = inverse_clarke(AlphaBeta::ZERO, 0.0);
        assert_eq!((abc.a, abc.b, abc.c), (0.0, 0.0, 0.0));

        let abc = inverse_clarke(AlphaBeta::new(1.2247, 0.0), 0.0);
        assert_relative_eq!(abc.a, 1.0, epsilon = 1e-4);
        assert_relative_eq!(abc.b, -0.5, epsilon = 1e-4);
        assert_relative_eq!(abc.c, -0.5, epsilon = 1e-4);
    }

    #[test]
    fn clarke_round_trip() {
        let x = AbcSignal { a: 0.3, b: 0.5, c: -0.8 };
        let (ab, g) = clarke(x);
        let back = inverse_clarke(ab, g);
        assert_relative_eq!(back.a, x.a, max_relative = 1e-12);
        assert_relative_eq!(back.b, x.b, max_relative = 1e-12);
        assert_relative_eq!(back.c, x.c, max_relative = 1e-12);
    }

    #[test]
    fn park_examples() {
        let dq = park(AlphaBeta::new(0.0, 1.2247), 0.0);
        assert_eq!((dq.d, dq.q), (0.0, 1.2247));

        let dq = park(AlphaBeta::new(1.0, 0.0), std::f64::consts::FRAC_PI_2);
        assert_relative_eq!(dq.d, 0.0, epsilon = 1e-12);
        assert_relative_eq!(dq.q, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn park_synchronous_signal_is_constant() {
        // A synchronous signal sampled at two instants, viewed at its own
        // phase, gives identical (d, q).
        let amp = 165.0 * SQRT_3_OVER_2;
        let omega = 100.0 * std::f64::consts::PI;
        let z = |t: f64| AlphaBeta::new(-amp * (omega * t).sin(), amp * (omega * t).cos());
        let a = park(z(0.0123), omega * 0.0123);
        let b = park(z(0.0789), omega * 0.0789);
        assert_relative_eq!(a.d, b.d, epsilon = 1e-9);
        assert_relative_eq!(a.q, b.q, epsilon = 1e-9);
    }

    #[test]
    fn park_round_trips() {
        for (ab, angle) in [
            (AlphaBeta::ZERO, 1.0),
            (AlphaBeta::new(1.0, 0.0), 1.0),
            (AlphaBeta::new(-0.37, 2.9), 5.1),
        ] {
            let back = inverse_park(park(ab, angle));
            assert_relative_eq!(back.alpha, ab.alpha, epsilon = 1e-12);
            assert_relative_eq!(back.beta, ab.beta, epsilon = 1e-12);
        }
    }

    #[test]
    fn pq_examples() {
        assert_eq!(instantaneous_pq(AlphaBeta::new(1.0, 0.0), AlphaBeta::new(1.0, 0.0)), (1.0, 0.0));
        assert_eq!(instantaneous_pq(AlphaBeta::new(1.0, 0.0), AlphaBeta::new(0.0, 1.0)), (0.0, -1.0));

        let v = AlphaBeta::new(2.0, -3.0);
        let i = v.scale(1.7);
        let (p, q) = instantaneous_pq(v, i);
        assert_relative_eq!(p, 1.7 * v.norm_sq(), max_relative = 1e-12);
        assert_relative_eq!(q, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn balance_examples() {
        assert!(is_balanced(AbcSignal { a: 0.0, b: -0.866, c: 0.866 }, 1e-9));
        assert!(!is_balanced(AbcSignal { a: 1.0, b: 1.0, c: 1.0 }, 1e-9));
        assert!(is_balanced(AbcSignal { a: 1e-12, b: 0.0, c: 0.0 }, 1e-9));
    }
}
