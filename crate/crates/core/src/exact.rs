//! Exact arithmetic in the field Q(√2).
//!
//! Model time and energy are tracked as `a + b·√2` with rational `a`, `b`.
//! Step durations are `1/v` for a squirrel speed `v = √p`; with side lengths
//! and power budgets restricted to powers of two, every speed that arises is
//! either rational or a rational multiple of √2, so all quantities stay in
//! this field and comparisons are exact.

use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

pub type Rat = Ratio<i128>;

/// An element `a + b·√2` of Q(√2).
#[derive(Clone, Copy, PartialEq, Eq, Default)]
pub struct Exact {
    a: Rat,
    b: Rat,
}

impl Exact {
    pub const fn new(a: Rat, b: Rat) -> Self {
        Exact { a, b }
    }

    pub fn zero() -> Self {
        Exact::default()
    }

    pub fn one() -> Self {
        Exact::from_int(1)
    }

    pub fn sqrt2() -> Self {
        Exact::new(Rat::zero(), Rat::from_integer(1))
    }

    pub fn from_int(v: i64) -> Self {
        Exact::new(Rat::from_integer(v as i128), Rat::zero())
    }

    pub fn from_ratio(num: i64, den: i64) -> Self {
        Exact::new(Rat::new(num as i128, den as i128), Rat::zero())
    }

    pub fn rational_part(&self) -> Rat {
        self.a
    }

    pub fn sqrt2_part(&self) -> Rat {
        self.b
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }

    pub fn is_rational(&self) -> bool {
        self.b.is_zero()
    }

    /// Sign of the real number `a + b√2`: -1, 0, or +1.
    pub fn signum(&self) -> i32 {
        let (sa, sb) = (sign(&self.a), sign(&self.b));
        match (sa, sb) {
            (0, 0) => 0,
            (s, 0) | (0, s) => s,
            (1, 1) => 1,
            (-1, -1) => -1,
            // Opposite signs: compare a² against 2b².
            _ => {
                let a2 = self.a * self.a;
                let b2 = self.b * self.b * Rat::from_integer(2);
                match a2.cmp(&b2) {
                    Ordering::Equal => 0, // impossible unless both zero (√2 irrational)
                    Ordering::Greater => sa,
                    Ordering::Less => sb,
                }
            }
        }
    }

    pub fn recip(&self) -> Exact {
        // 1/(a + b√2) = (a - b√2)/(a² - 2b²)
        let den = self.a * self.a - self.b * self.b * Rat::from_integer(2);
        assert!(!den.is_zero(), "division by zero in Q(sqrt2)");
        Exact::new(self.a / den, -self.b / den)
    }

    pub fn to_f64(&self) -> f64 {
        self.a.to_f64().unwrap_or(f64::NAN) + self.b.to_f64().unwrap_or(f64::NAN) * SQRT_2
    }

    /// Exact square root when the value is a non-negative rational of the
    /// form q² or 2·q²; `None` otherwise.
    pub fn sqrt_exact(&self) -> Option<Exact> {
        if !self.b.is_zero() || self.a.is_negative() {
            return None;
        }
        if let Some(r) = ratio_sqrt(&self.a) {
            return Some(Exact::new(r, Rat::zero()));
        }
        let half = self.a / Rat::from_integer(2);
        ratio_sqrt(&half).map(|r| Exact::new(Rat::zero(), r))
    }
}

const SQRT_2: f64 = std::f64::consts::SQRT_2;

fn sign(r: &Rat) -> i32 {
    if r.is_zero() {
        0
    } else if r.is_negative() {
        -1
    } else {
        1
    }
}

fn int_sqrt(v: i128) -> Option<i128> {
    if v < 0 {
        return None;
    }
    let mut x = (v as f64).sqrt() as i128;
    while x * x > v {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= v {
        x += 1;
    }
    (x * x == v).then_some(x)
}

fn ratio_sqrt(r: &Rat) -> Option<Rat> {
    let n = int_sqrt(*r.numer())?;
    let d = int_sqrt(*r.denom())?;
    Some(Rat::new(n, d))
}

impl Add for Exact {
    type Output = Exact;
    fn add(self, rhs: Exact) -> Exact {
        Exact::new(self.a + rhs.a, self.b + rhs.b)
    }
}

impl<'a> Add<&'a Exact> for Exact {
    type Output = Exact;
    fn add(self, rhs: &Exact) -> Exact {
        Exact::new(self.a + rhs.a, self.b + rhs.b)
    }
}

impl AddAssign for Exact {
    fn add_assign(&mut self, rhs: Exact) {
        self.a += rhs.a;
        self.b += rhs.b;
    }
}

impl<'a> AddAssign<&'a Exact> for Exact {
    fn add_assign(&mut self, rhs: &Exact) {
        self.a += rhs.a;
        self.b += rhs.b;
    }
}

impl Sub for Exact {
    type Output = Exact;
    fn sub(self, rhs: Exact) -> Exact {
        Exact::new(self.a - rhs.a, self.b - rhs.b)
    }
}

impl SubAssign for Exact {
    fn sub_assign(&mut self, rhs: Exact) {
        self.a -= rhs.a;
        self.b -= rhs.b;
    }
}

impl Neg for Exact {
    type Output = Exact;
    fn neg(self) -> Exact {
        Exact::new(-self.a, -self.b)
    }
}

impl Mul for Exact {
    type Output = Exact;
    fn mul(self, rhs: Exact) -> Exact {
        // (a + b√2)(c + d√2) = ac + 2bd + (ad + bc)√2
        let two = Rat::from_integer(2);
        Exact::new(
            self.a * rhs.a + two * self.b * rhs.b,
            self.a * rhs.b + self.b * rhs.a,
        )
    }
}

impl<'a> Mul<&'a Exact> for Exact {
    type Output = Exact;
    fn mul(self, rhs: &Exact) -> Exact {
        self * *rhs
    }
}

impl Mul<i64> for Exact {
    type Output = Exact;
    fn mul(self, rhs: i64) -> Exact {
        let r = Rat::from_integer(rhs as i128);
        Exact::new(self.a * r, self.b * r)
    }
}

impl Mul<Rat> for Exact {
    type Output = Exact;
    fn mul(self, rhs: Rat) -> Exact {
        Exact::new(self.a * rhs, self.b * rhs)
    }
}

impl Div for Exact {
    type Output = Exact;
    fn div(self, rhs: Exact) -> Exact {
        self * rhs.recip()
    }
}

impl Sum for Exact {
    fn sum<I: Iterator<Item = Exact>>(iter: I) -> Exact {
        let mut acc = Exact::zero();
        for v in iter {
            acc += v;
        }
        acc
    }
}

impl PartialOrd for Exact {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Exact {
    fn cmp(&self, other: &Self) -> Ordering {
        let diff = *self - *other;
        match diff.signum() {
            0 => Ordering::Equal,
            s if s < 0 => Ordering::Less,
            _ => Ordering::Greater,
        }
    }
}

fn fmt_exact(v: &Exact, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if v.b.is_zero() {
        write!(f, "{}", v.a)
    } else if v.a.is_zero() {
        write!(f, "{}*sqrt2", v.b)
    } else {
        write!(f, "{}+{}*sqrt2", v.a, v.b)
    }
}

impl fmt::Debug for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_exact(self, f)
    }
}

impl fmt::Display for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_exact(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(a: (i128, i128), b: (i128, i128)) -> Exact {
        Exact::new(Rat::new(a.0, a.1), Rat::new(b.0, b.1))
    }

    #[test]
    fn ordering_is_exact() {
        // 3/2 + (1/2)√2 ≈ 2.207 vs 2 + (1/7)√2 ≈ 2.202
        let x = ex((3, 2), (1, 2));
        let y = ex((2, 1), (1, 7));
        assert!(x > y);
        // 1 + √2 vs 1 + √2
        assert_eq!(ex((1, 1), (1, 1)).cmp(&ex((1, 1), (1, 1))), Ordering::Equal);
        // 141/100 < √2 < 142/100
        assert!(ex((141, 100), (0, 1)) < Exact::sqrt2());
        assert!(ex((142, 100), (0, 1)) > Exact::sqrt2());
    }

    #[test]
    fn field_ops() {
        let x = ex((1, 2), (3, 4));
        let y = x.clone().recip();
        assert_eq!(x * y, Exact::one());
        assert_eq!(Exact::sqrt2() * Exact::sqrt2(), Exact::from_int(2));
    }

    #[test]
    fn exact_sqrt() {
        assert_eq!(Exact::from_int(4).sqrt_exact(), Some(Exact::from_int(2)));
        assert_eq!(Exact::from_int(2).sqrt_exact(), Some(Exact::sqrt2()));
        // 8 = 2·2² → 2√2
        assert_eq!(
            Exact::from_int(8).sqrt_exact(),
            Some(Exact::sqrt2() * Exact::from_int(2))
        );
        // 9/4 → 3/2
        assert_eq!(
            Exact::from_ratio(9, 4).sqrt_exact(),
            Some(Exact::from_ratio(3, 2))
        );
        assert_eq!(Exact::from_int(3).sqrt_exact(), None);
        assert_eq!(Exact::from_int(-1).sqrt_exact(), None);
    }

    #[test]
    fn display_forms() {
        assert_eq!(Exact::from_ratio(3, 2).to_string(), "3/2");
        assert_eq!(Exact::sqrt2().to_string(), "1*sqrt2");
        assert_eq!((Exact::one() + Exact::sqrt2()).to_string(), "1+1*sqrt2");
    }
}
