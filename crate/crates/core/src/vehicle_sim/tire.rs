//! Four-coefficient magic-formula tire curve and the low-slip torque map.

/// Magic-formula coefficients. `d` is the peak value of the curve, so the caller
/// multiplies by normal load when it is a friction coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TireCoefficients {
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
}

impl TireCoefficients {
    pub const fn new(b: f64, c: f64, d: f64, e: f64) -> Self {
        Self { b, c, d, e }
    }

    pub fn eval(&self, slip: f64) -> f64 {
        magic_formula(slip, self.b, self.c, self.d, self.e)
    }

    pub fn slope(&self, slip: f64) -> f64 {
        magic_formula_slope(slip, self.b, self.c, self.d, self.e)
    }

    /// Slope at the origin, `B·C·D`.
    pub fn cornering_stiffness(&self) -> f64 {
        self.b * self.c * self.d
    }
}

/// `D·sin(C·atan(B·s − E·(B·s − atan(B·s))))`. Odd in `slip`.
pub fn magic_formula(slip: f64, b: f64, c: f64, d: f64, e: f64) -> f64 {
    let x = b * slip;
    let phi = x - e * (x - x.atan());
    d * (c * phi.atan()).sin()
}

/// Analytic derivative of [`magic_formula`] with respect to slip.
pub fn magic_formula_slope(slip: f64, b: f64, c: f64, d: f64, e: f64) -> f64 {
    let x = b * slip;
    let phi = x - e * (x - x.atan());
    let dphi_dx = 1.0 - e + e / (1.0 + x * x);
    d * (c * phi.atan()).cos() * c / (1.0 + phi * phi) * dphi_dx * b
}

/// Linear torque-to-slip map clamped to `±sr_max`.
pub fn slip_ratio_from_torque(torque: f64, gain: f64, sr_max: f64) -> f64 {
    (gain * torque).clamp(-sr_max, sr_max)
}
