//! Short Weierstrass curves over prime fields; Jacobian coordinates internally.

use crate::error::{Error, Result};
use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurveParams {
    pub name: String,
    pub p: BigUint,
    pub a: BigUint,
    pub b: BigUint,
    pub gx: BigUint,
    pub gy: BigUint,
    pub n_order: BigUint,
    pub cofactor: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Point {
    Infinity,
    Affine { x: BigUint, y: BigUint },
}

fn hex(s: &str) -> BigUint {
    BigUint::parse_bytes(s.as_bytes(), 16).expect("valid hex constant")
}

impl CurveParams {
    /// SEC 2 secp160r1.
    pub fn secp160r1() -> Self {
        let p = hex("ffffffffffffffffffffffffffffffff7fffffff");
        CurveParams {
            name: "secp160r1".into(),
            a: &p - 3u8,
            b: hex("1c97befc54bd7a8b65acf89f81d4d4adc565fa45"),
            gx: hex("4a96b5688ef573284664698968c38bb913cbfc82"),
            gy: hex("23a628553168947d59dcc912042351377ac5fb32"),
            n_order: hex("0100000000000000000001f4c8f927aed3ca752257"),
            cofactor: 1,
            p,
        }
    }

    /// y^2 = x^3 + 4x + 12 over GF(65519), prime order 65287.
    pub fn toy() -> Self {
        CurveParams {
            name: "toy65519".into(),
            p: BigUint::from(65519u32),
            a: BigUint::from(4u32),
            b: BigUint::from(12u32),
            gx: BigUint::from(1u32),
            gy: BigUint::from(256u32),
            n_order: BigUint::from(65287u32),
            cofactor: 1,
        }
    }

    pub fn generator(&self) -> Point {
        Point::Affine {
            x: self.gx.clone(),
            y: self.gy.clone(),
        }
    }

    pub fn is_on_curve(&self, pt: &Point) -> bool {
        match pt {
            Point::Infinity => true,
            Point::Affine { x, y } => {
                if x >= &self.p || y >= &self.p {
                    return false;
                }
                let lhs = (y * y) % &self.p;
                let rhs = (x * x * x + &self.a * x + &self.b) % &self.p;
                lhs == rhs
            }
        }
    }

    /// Startup self-check: generator on the curve with the stated order.
    pub fn check(&self) -> Result<()> {
        let g = self.generator();
        if !self.is_on_curve(&g) {
            return Err(Error::OffCurve);
        }
        if scalar_mult(&self.n_order, &g, self)? != Point::Infinity {
            return Err(Error::Config(format!("{}: n * G is not the identity", self.name)));
        }
        Ok(())
    }

    fn sub(&self, a: &BigUint, b: &BigUint) -> BigUint {
        if a >= b {
            a - b
        } else {
            &self.p - (b - a)
        }
    }

    fn mul(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a * b) % &self.p
    }
}

#[derive(Clone, Debug)]
struct Jacobian {
    x: BigUint,
    y: BigUint,
    z: BigUint,
}

impl Jacobian {
    fn is_infinity(&self) -> bool {
        self.z.is_zero()
    }

    fn infinity() -> Self {
        Jacobian {
            x: BigUint::one(),
            y: BigUint::one(),
            z: BigUint::zero(),
        }
    }
}

fn double(c: &CurveParams, pt: &Jacobian) -> Jacobian {
    if pt.is_infinity() || pt.y.is_zero() {
        return Jacobian::infinity();
    }
    let y2 = c.mul(&pt.y, &pt.y);
    let s = c.mul(&(&pt.x * 4u8), &y2);
    let z2 = c.mul(&pt.z, &pt.z);
    let m = (c.mul(&pt.x, &pt.x) * 3u8 + c.mul(&c.a, &c.mul(&z2, &z2))) % &c.p;
    let x3 = c.sub(&c.mul(&m, &m), &((&s * 2u8) % &c.p));
    let y4 = c.mul(&y2, &y2);
    let y3 = c.sub(&c.mul(&m, &c.sub(&s, &x3)), &((y4 * 8u8) % &c.p));
    let z3 = c.mul(&(&pt.y * 2u8), &pt.z);
    Jacobian { x: x3, y: y3, z: z3 }
}

/// Jacobian + affine.
fn add_mixed(c: &CurveParams, p1: &Jacobian, x2: &BigUint, y2: &BigUint) -> Jacobian {
    if p1.is_infinity() {
        return Jacobian {
            x: x2.clone(),
            y: y2.clone(),
            z: BigUint::one(),
        };
    }
    let z1z1 = c.mul(&p1.z, &p1.z);
    let u2 = c.mul(x2, &z1z1);
    let s2 = c.mul(y2, &c.mul(&p1.z, &z1z1));
    if u2 == p1.x {
        if s2 == p1.y {
            return double(c, p1);
        }
        return Jacobian::infinity();
    }
    let h = c.sub(&u2, &p1.x);
    let r = c.sub(&s2, &p1.y);
    let hh = c.mul(&h, &h);
    let hhh = c.mul(&hh, &h);
    let v = c.mul(&p1.x, &hh);
    let x3 = c.sub(&c.sub(&c.mul(&r, &r), &hhh), &((&v * 2u8) % &c.p));
    let y3 = c.sub(&c.mul(&r, &c.sub(&v, &x3)), &c.mul(&p1.y, &hhh));
    let z3 = c.mul(&p1.z, &h);
    Jacobian { x: x3, y: y3, z: z3 }
}

fn to_affine(c: &CurveParams, pt: &Jacobian) -> Point {
    if pt.is_infinity() {
        return Point::Infinity;
    }
    let zinv = pt.z.modinv(&c.p).expect("field element is invertible");
    let zinv2 = c.mul(&zinv, &zinv);
    Point::Affine {
        x: c.mul(&pt.x, &zinv2),
        y: c.mul(&pt.y, &c.mul(&zinv2, &zinv)),
    }
}

pub fn point_add(c: &CurveParams, a: &Point, b: &Point) -> Result<Point> {
    if !c.is_on_curve(a) || !c.is_on_curve(b) {
        return Err(Error::OffCurve);
    }
    let ja = match a {
        Point::Infinity => return Ok(b.clone()),
        Point::Affine { x, y } => Jacobian {
            x: x.clone(),
            y: y.clone(),
            z: BigUint::one(),
        },
    };
    match b {
        Point::Infinity => Ok(a.clone()),
        Point::Affine { x, y } => Ok(to_affine(c, &add_mixed(c, &ja, x, y))),
    }
}

pub fn point_neg(c: &CurveParams, a: &Point) -> Point {
    match a {
        Point::Infinity => Point::Infinity,
        Point::Affine { x, y } => Point::Affine {
            x: x.clone(),
            y: if y.is_zero() { y.clone() } else { &c.p - y },
        },
    }
}

/// Left-to-right double-and-add.
pub fn scalar_mult(k: &BigUint, pt: &Point, c: &CurveParams) -> Result<Point> {
    if !c.is_on_curve(pt) {
        return Err(Error::OffCurve);
    }
    let (px, py) = match pt {
        Point::Infinity => return Ok(Point::Infinity),
        Point::Affine { x, y } => (x, y),
    };
    let mut acc = Jacobian::infinity();
    for i in (0..k.bits()).rev() {
        acc = double(c, &acc);
        if k.bit(i) {
            acc = add_mixed(c, &acc, px, py);
        }
    }
    Ok(to_affine(c, &acc))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curves_pass_startup_checks() {
        CurveParams::secp160r1().check().unwrap();
        CurveParams::toy().check().unwrap();
    }

    #[test]
    fn one_times_g_is_g() {
        let c = CurveParams::secp160r1();
        assert_eq!(scalar_mult(&BigUint::one(), &c.generator(), &c).unwrap(), c.generator());
        assert_eq!(scalar_mult(&BigUint::zero(), &c.generator(), &c).unwrap(), Point::Infinity);
    }

    #[test]
    fn off_curve_rejected() {
        let c = CurveParams::toy();
        let bad = Point::Affine {
            x: BigUint::from(1u32),
            y: BigUint::from(3u32),
        };
        assert!(matches!(scalar_mult(&BigUint::from(2u32), &bad, &c), Err(Error::OffCurve)));
    }
}
