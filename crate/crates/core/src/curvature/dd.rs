//! Minimal double-double arithmetic (about 32 significant digits), enough to
//! evaluate `sin(tx)/sin(x)` accurately when `x` is close to `π`.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct DD {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DD {
    pub const PI: DD = DD { hi: std::f64::consts::PI, lo: 1.2246467991473532e-16 };
    pub const FRAC_PI_2: DD = DD { hi: std::f64::consts::FRAC_PI_2, lo: 6.123233995736766e-17 };

    pub fn new(x: f64) -> Self {
        DD { hi: x, lo: 0.0 }
    }

    pub fn product(a: f64, b: f64) -> Self {
        let (hi, lo) = two_prod(a, b);
        DD { hi, lo }
    }

    /// Sign of `self`, treating the pair as an exact sum.
    pub fn signum(self) -> f64 {
        if self.hi != 0.0 {
            self.hi.signum()
        } else if self.lo != 0.0 {
            self.lo.signum()
        } else {
            0.0
        }
    }

    pub fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return DD::new(0.0);
        }
        let q = self.hi.sqrt();
        let s = DD::new(q);
        let r = self - DD::product(q, q);
        s + DD::new(r.hi / (2.0 * q))
    }

    /// `sin` for arguments in `[0, π]`.
    pub fn sin(self) -> Self {
        let a = if self > DD::FRAC_PI_2 { DD::PI - self } else { self };
        let a2 = a * a;
        let mut term = a;
        let mut sum = a;
        let mut k = 1.0;
        while term.hi.abs() > 1e-36 * sum.hi.abs().max(1e-300) {
            term = -(term * a2) / DD::new((2.0 * k) * (2.0 * k + 1.0));
            sum = sum + term;
            k += 1.0;
        }
        sum
    }
}

impl PartialOrd for DD {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        (*self - *other).signum().partial_cmp(&0.0)
    }
}

impl Neg for DD {
    type Output = DD;
    fn neg(self) -> DD {
        DD { hi: -self.hi, lo: -self.lo }
    }
}

impl Add for DD {
    type Output = DD;
    fn add(self, y: DD) -> DD {
        let (s, e) = two_sum(self.hi, y.hi);
        let (t, f) = two_sum(self.lo, y.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        DD { hi, lo }
    }
}

impl Sub for DD {
    type Output = DD;
    fn sub(self, y: DD) -> DD {
        self + (-y)
    }
}

impl Mul for DD {
    type Output = DD;
    fn mul(self, y: DD) -> DD {
        let (p, e) = two_prod(self.hi, y.hi);
        let e = e + (self.hi * y.lo + self.lo * y.hi);
        let (hi, lo) = quick_two_sum(p, e);
        DD { hi, lo }
    }
}

impl Div for DD {
    type Output = DD;
    fn div(self, y: DD) -> DD {
        let q1 = self.hi / y.hi;
        let r = self - y * DD::new(q1);
        let q2 = r.hi / y.hi;
        let r = r - y * DD::new(q2);
        let q3 = r.hi / y.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        DD { hi, lo } + DD::new(q3)
    }
}
