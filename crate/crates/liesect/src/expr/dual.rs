use std::ops::{Add, Div, Mul, Neg, Sub};

/// A first-order dual number: a value together with the directional
/// derivative of that value along a seed direction. Arithmetic applies the
/// chain rule; the `value` field is computed by exactly the same f64
/// operations as a plain evaluation, so it matches bit for bit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualScalar {
    pub value: f64,
    pub deriv: f64,
}

impl DualScalar {
    pub fn new(value: f64, deriv: f64) -> Self {
        DualScalar { value, deriv }
    }

    /// A constant: derivative zero.
    pub fn constant(value: f64) -> Self {
        DualScalar { value, deriv: 0.0 }
    }

    pub fn exp(self) -> Self {
        let value = self.value.exp();
        DualScalar {
            value,
            deriv: self.deriv * value,
        }
    }

    pub fn ln(self) -> Self {
        DualScalar {
            value: self.value.ln(),
            deriv: self.deriv / self.value,
        }
    }

    pub fn sin(self) -> Self {
        DualScalar {
            value: self.value.sin(),
            deriv: self.deriv * self.value.cos(),
        }
    }

    pub fn cos(self) -> Self {
        DualScalar {
            value: self.value.cos(),
            deriv: -self.deriv * self.value.sin(),
        }
    }

    pub fn sqrt(self) -> Self {
        let value = self.value.sqrt();
        let deriv = if self.deriv == 0.0 {
            0.0
        } else {
            self.deriv / (2.0 * value)
        };
        DualScalar { value, deriv }
    }

    /// General power `self^other`. When the exponent carries no derivative
    /// the logarithmic term is skipped, so negative bases with constant
    /// integer exponents differentiate fine.
    pub fn powf(self, other: DualScalar) -> Self {
        let value = self.value.powf(other.value);
        let mut deriv = 0.0;
        if self.deriv != 0.0 {
            deriv += other.value * self.value.powf(other.value - 1.0) * self.deriv;
        }
        if other.deriv != 0.0 {
            deriv += value * self.value.ln() * other.deriv;
        }
        DualScalar { value, deriv }
    }
}

impl Add for DualScalar {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        DualScalar {
            value: self.value + rhs.value,
            deriv: self.deriv + rhs.deriv,
        }
    }
}

impl Sub for DualScalar {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        DualScalar {
            value: self.value - rhs.value,
            deriv: self.deriv - rhs.deriv,
        }
    }
}

impl Mul for DualScalar {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        DualScalar {
            value: self.value * rhs.value,
            deriv: self.deriv * rhs.value + self.value * rhs.deriv,
        }
    }
}

impl Div for DualScalar {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        DualScalar {
            value: self.value / rhs.value,
            deriv: (self.deriv * rhs.value - self.value * rhs.deriv) / (rhs.value * rhs.value),
        }
    }
}

impl Neg for DualScalar {
    type Output = Self;
    fn neg(self) -> Self {
        DualScalar {
            value: -self.value,
            deriv: -self.deriv,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let a = DualScalar::new(2.0, 0.0);
        let b = DualScalar::new(3.0, 1.0);
        let p = a * b;
        assert_eq!(p.value, 6.0);
        assert_eq!(p.deriv, 2.0);
    }

    #[test]
    fn exp_at_zero() {
        let x = DualScalar::new(0.0, 1.0);
        let e = x.exp();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.deriv, 1.0);
    }

    #[test]
    fn quotient_rule() {
        // d/dx (1/x) at x=2 is -1/4
        let one = DualScalar::constant(1.0);
        let x = DualScalar::new(2.0, 1.0);
        let q = one / x;
        assert_eq!(q.value, 0.5);
        assert_eq!(q.deriv, -0.25);
    }

    #[test]
    fn sqrt_of_zero_constant_direction() {
        let x = DualScalar::new(0.0, 0.0);
        let s = x.sqrt();
        assert_eq!(s.value, 0.0);
        assert_eq!(s.deriv, 0.0);
    }

    #[test]
    fn integer_power_of_negative_base() {
        let x = DualScalar::new(-2.0, 1.0);
        let p = x.powf(DualScalar::constant(2.0));
        assert_eq!(p.value, 4.0);
        assert_eq!(p.deriv, -4.0);
    }
}
