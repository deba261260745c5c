use core::ops::{Add, AddAssign, Mul};

/// A complex number as a pair of doubles.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    /// `e^{2 pi i phase}`; the phase is reduced mod 1 first so integer
    /// phases give exactly `1`.
    pub fn unit(phase: f64) -> Self {
        let frac = phase - libm::floor(phase);
        let angle = 2.0 * core::f64::consts::PI * frac;
        Self { re: libm::cos(angle), im: libm::sin(angle) }
    }

    pub fn norm(&self) -> f64 {
        libm::hypot(self.re, self.im)
    }
}

impl Add for Complex {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.im + o.im)
    }
}

impl AddAssign for Complex {
    fn add_assign(&mut self, o: Self) {
        self.re += o.re;
        self.im += o.im;
    }
}

impl Mul<f64> for Complex {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self::new(self.re * k, self.im * k)
    }
}

impl Mul for Complex {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
}
