//! Short-Weierstrass curves `y^2 = x^3 + ax + b` over prime fields.
//!
//! Affine addition implements the chord-and-tangent law directly. Scalar
//! multiplication runs a double-and-add ladder in Jacobian coordinates and
//! converts back once at the end, so it shares no code path with
//! [`CurveParams::add`] beyond validation.

use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;

use super::PrimitiveError;

/// Tag byte of the point at infinity on the wire.
pub const POINT_TAG_INFINITY: u8 = 0x00;
/// Tag byte of an affine point on the wire.
pub const POINT_TAG_AFFINE: u8 = 0x04;

#[derive(Clone, PartialEq, Eq, Hash)]
pub enum Point {
    Infinity,
    Affine { x: BigUint, y: BigUint },
}

impl Point {
    pub fn affine(x: impl Into<BigUint>, y: impl Into<BigUint>) -> Self {
        Point::Affine {
            x: x.into(),
            y: y.into(),
        }
    }

    pub fn is_infinity(&self) -> bool {
        matches!(self, Point::Infinity)
    }

    pub fn coordinates(&self) -> Option<(&BigUint, &BigUint)> {
        match self {
            Point::Infinity => None,
            Point::Affine { x, y } => Some((x, y)),
        }
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Point::Infinity => write!(f, "O"),
            Point::Affine { x, y } => write!(f, "({x:#x}, {y:#x})"),
        }
    }
}

/// An integer in `[0, n)` for the group order `n` of the curve it was built for.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Scalar(BigUint);

impl Scalar {
    pub fn value(&self) -> &BigUint {
        &self.0
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Scalar(..)")
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct CurveParams {
    id: String,
    p: BigUint,
    a: BigUint,
    b: BigUint,
    generator: Point,
    order: BigUint,
    field_len: usize,
    scalar_len: usize,
}

impl fmt::Debug for CurveParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CurveParams")
            .field("id", &self.id)
            .field("p", &format_args!("{:#x}", self.p))
            .field("n", &format_args!("{:#x}", self.order))
            .finish()
    }
}

/// Jacobian point `(X, Y, Z)` standing for `(X/Z^2, Y/Z^3)`; `Z = 0` is infinity.
struct Jacobian {
    x: BigUint,
    y: BigUint,
    z: BigUint,
}

impl CurveParams {
    /// Validates the parameters: `p` odd prime-sized (> 3), non-singular
    /// curve, generator on the curve and `n * G = O`.
    pub fn new(
        id: impl Into<String>,
        p: BigUint,
        a: BigUint,
        b: BigUint,
        generator: Point,
        order: BigUint,
    ) -> Result<Self, PrimitiveError> {
        if p <= BigUint::from(3u8) || p.is_even() {
            return Err(PrimitiveError::InvalidCurve(
                "field characteristic must be an odd prime > 3",
            ));
        }
        if a >= p || b >= p {
            return Err(PrimitiveError::InvalidCurve("coefficients must be reduced modulo p"));
        }
        let field_len = byte_len(&(&p - 1u8));
        let scalar_len = byte_len(&(&order - 1u8));
        let curve = CurveParams {
            id: id.into(),
            p,
            a,
            b,
            generator,
            order,
            field_len,
            scalar_len,
        };
        let disc = (BigUint::from(4u8) * curve.a.modpow(&BigUint::from(3u8), &curve.p)
            + BigUint::from(27u8) * &curve.b * &curve.b)
            % &curve.p;
        if disc.is_zero() {
            return Err(PrimitiveError::InvalidCurve("singular curve: 4a^3 + 27b^2 = 0 mod p"));
        }
        if curve.generator.is_infinity() || !curve.is_on_curve(&curve.generator) {
            return Err(PrimitiveError::InvalidCurve("generator is not a finite curve point"));
        }
        if !curve.mul_unchecked(&curve.order, &curve.generator).is_infinity() {
            return Err(PrimitiveError::InvalidCurve("n * G is not the point at infinity"));
        }
        Ok(curve)
    }

    /// `y^2 = x^3 + 2x + 2` over GF(17) with `G = (5, 1)`. The group order is
    /// found by walking multiples of `G` until the point at infinity.
    pub fn toy() -> Self {
        let p = BigUint::from(17u8);
        let generator = Point::affine(5u8, 1u8);
        let toy = CurveParams {
            id: "toy-p17-a2-b2".into(),
            p: p.clone(),
            a: BigUint::from(2u8),
            b: BigUint::from(2u8),
            generator: generator.clone(),
            order: BigUint::zero(),
            field_len: 1,
            scalar_len: 1,
        };
        let mut order = 1u32;
        let mut acc = generator.clone();
        while !acc.is_infinity() {
            acc = toy.add(&acc, &generator).expect("multiples of G stay on the curve");
            order += 1;
        }
        CurveParams::new(
            toy.id.clone(),
            p,
            toy.a.clone(),
            toy.b.clone(),
            generator,
            BigUint::from(order),
        )
        .expect("toy curve parameters are valid")
    }

    /// NIST P-256 (secp256r1).
    pub fn p256() -> Self {
        let hex = |s: &str| BigUint::parse_bytes(s.as_bytes(), 16).expect("valid hex constant");
        let p = hex("ffffffff00000001000000000000000000000000ffffffffffffffffffffffff");
        let a = &p - 3u8;
        CurveParams::new(
            "nist-p256",
            p,
            a,
            hex("5ac635d8aa3a93e7b3ebbd55769886bc651d06b0cc53b0f63bce3c3e27d2604b"),
            Point::Affine {
                x: hex("6b17d1f2e12c4247f8bce6e563a440f277037d812deb33a0f4a13945d898c296"),
                y: hex("4fe342e2fe1a7f9b8ee7eb4a7c0f9e162bce33576b315ececbb6406837bf51f5"),
            },
            hex("ffffffff00000000ffffffffffffffffbce6faada7179e84f3b9cac2fc632551"),
        )
        .expect("P-256 parameters are valid")
    }

    pub fn by_id(id: &str) -> Option<Self> {
        match id {
            "toy-p17-a2-b2" | "toy" => Some(Self::toy()),
            "nist-p256" | "standard" => Some(Self::p256()),
            _ => None,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn modulus(&self) -> &BigUint {
        &self.p
    }

    pub fn coefficient_a(&self) -> &BigUint {
        &self.a
    }

    pub fn coefficient_b(&self) -> &BigUint {
        &self.b
    }

    pub fn generator(&self) -> &Point {
        &self.generator
    }

    pub fn order(&self) -> &BigUint {
        &self.order
    }

    /// Width in bytes of one encoded coordinate.
    pub fn field_len(&self) -> usize {
        self.field_len
    }

    /// Width in bytes of one encoded scalar.
    pub fn scalar_len(&self) -> usize {
        self.scalar_len
    }

    pub fn is_on_curve(&self, point: &Point) -> bool {
        match point {
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

    pub fn validate(&self, point: &Point) -> Result<(), PrimitiveError> {
        if self.is_on_curve(point) {
            Ok(())
        } else {
            Err(PrimitiveError::PointNotOnCurve)
        }
    }

    pub fn negate(&self, point: &Point) -> Point {
        match point {
            Point::Infinity => Point::Infinity,
            Point::Affine { x, y } => Point::Affine {
                x: x.clone(),
                y: (&self.p - y) % &self.p,
            },
        }
    }

    /// Affine group law.
    pub fn add(&self, lhs: &Point, rhs: &Point) -> Result<Point, PrimitiveError> {
        self.validate(lhs)?;
        self.validate(rhs)?;
        let ((x1, y1), (x2, y2)) = match (lhs, rhs) {
            (Point::Infinity, q) => return Ok(q.clone()),
            (p, Point::Infinity) => return Ok(p.clone()),
            (Point::Affine { x: x1, y: y1 }, Point::Affine { x: x2, y: y2 }) => ((x1, y1), (x2, y2)),
        };
        let p = &self.p;
        let slope = if x1 == x2 {
            if ((y1 + y2) % p).is_zero() {
                return Ok(Point::Infinity);
            }
            // tangent: (3x^2 + a) / 2y
            let num = (BigUint::from(3u8) * x1 * x1 + &self.a) % p;
            let den = (BigUint::from(2u8) * y1) % p;
            num * self.invert(&den) % p
        } else {
            let num = self.sub(y2, y1);
            let den = self.sub(x2, x1);
            num * self.invert(&den) % p
        };
        let x3 = self.sub(&self.sub(&(&slope * &slope % p), x1), x2);
        let y3 = self.sub(&(&slope * self.sub(x1, &x3) % p), y1);
        Ok(Point::Affine { x: x3, y: y3 })
    }

    /// `k * P`; `0 * P = O`.
    pub fn mul(&self, k: &Scalar, point: &Point) -> Result<Point, PrimitiveError> {
        self.validate(point)?;
        Ok(self.mul_unchecked(&k.0, point))
    }

    fn mul_unchecked(&self, k: &BigUint, point: &Point) -> Point {
        let base = match point {
            Point::Infinity => return Point::Infinity,
            Point::Affine { x, y } => Jacobian {
                x: x.clone(),
                y: y.clone(),
                z: BigUint::one(),
            },
        };
        let mut acc = Jacobian {
            x: BigUint::one(),
            y: BigUint::one(),
            z: BigUint::zero(),
        };
        for i in (0..k.bits()).rev() {
            acc = self.jacobian_double(&acc);
            if k.bit(i) {
                acc = self.jacobian_add(&acc, &base);
            }
        }
        self.to_affine(&acc)
    }

    fn jacobian_double(&self, pt: &Jacobian) -> Jacobian {
        let p = &self.p;
        if pt.z.is_zero() || pt.y.is_zero() {
            return Jacobian {
                x: BigUint::one(),
                y: BigUint::one(),
                z: BigUint::zero(),
            };
        }
        let y2 = &pt.y * &pt.y % p;
        let s = BigUint::from(4u8) * &pt.x % p * &y2 % p;
        let z2 = &pt.z * &pt.z % p;
        let m = (BigUint::from(3u8) * &pt.x % p * &pt.x + &self.a * (&z2 * &z2 % p)) % p;
        let x3 = self.sub(&(&m * &m % p), &(BigUint::from(2u8) * &s % p));
        let y4 = &y2 * &y2 % p;
        let y3 = self.sub(&(&m * self.sub(&s, &x3) % p), &(BigUint::from(8u8) * y4 % p));
        let z3 = BigUint::from(2u8) * &pt.y % p * &pt.z % p;
        Jacobian { x: x3, y: y3, z: z3 }
    }

    fn jacobian_add(&self, lhs: &Jacobian, rhs: &Jacobian) -> Jacobian {
        let p = &self.p;
        if lhs.z.is_zero() {
            return Jacobian {
                x: rhs.x.clone(),
                y: rhs.y.clone(),
                z: rhs.z.clone(),
            };
        }
        if rhs.z.is_zero() {
            return Jacobian {
                x: lhs.x.clone(),
                y: lhs.y.clone(),
                z: lhs.z.clone(),
            };
        }
        let z1z1 = &lhs.z * &lhs.z % p;
        let z2z2 = &rhs.z * &rhs.z % p;
        let u1 = &lhs.x * &z2z2 % p;
        let u2 = &rhs.x * &z1z1 % p;
        let s1 = &lhs.y * &rhs.z % p * &z2z2 % p;
        let s2 = &rhs.y * &lhs.z % p * &z1z1 % p;
        if u1 == u2 {
            if s1 == s2 {
                return self.jacobian_double(lhs);
            }
            return Jacobian {
                x: BigUint::one(),
                y: BigUint::one(),
                z: BigUint::zero(),
            };
        }
        let h = self.sub(&u2, &u1);
        let r = self.sub(&s2, &s1);
        let h2 = &h * &h % p;
        let h3 = &h2 * &h % p;
        let u1h2 = &u1 * &h2 % p;
        let x3 = self.sub(&self.sub(&(&r * &r % p), &h3), &(BigUint::from(2u8) * &u1h2 % p));
        let y3 = self.sub(&(&r * self.sub(&u1h2, &x3) % p), &(&s1 * &h3 % p));
        let z3 = &h * &lhs.z % p * &rhs.z % p;
        Jacobian { x: x3, y: y3, z: z3 }
    }

    fn to_affine(&self, pt: &Jacobian) -> Point {
        if pt.z.is_zero() {
            return Point::Infinity;
        }
        let p = &self.p;
        let zinv = self.invert(&pt.z);
        let zinv2 = &zinv * &zinv % p;
        Point::Affine {
            x: &pt.x * &zinv2 % p,
            y: &pt.y * (zinv2 * zinv % p) % p,
        }
    }

    fn sub(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a + &self.p - b) % &self.p
    }

    fn invert(&self, v: &BigUint) -> BigUint {
        v.modinv(&self.p)
            .expect("nonzero element of a prime field is invertible")
    }

    pub fn scalar(&self, value: BigUint) -> Result<Scalar, PrimitiveError> {
        if value < self.order {
            Ok(Scalar(value))
        } else {
            Err(PrimitiveError::ScalarOutOfRange)
        }
    }

    /// Uniform scalar in `[1, n)` by rejection sampling.
    pub fn random_scalar<R: RngCore + ?Sized>(&self, rng: &mut R) -> Scalar {
        let bits = self.order.bits();
        let mut buf = vec![0u8; self.scalar_len];
        loop {
            rng.fill_bytes(&mut buf);
            let excess = (self.scalar_len as u64) * 8 - bits;
            if excess > 0 {
                buf[0] &= 0xffu8 >> excess;
            }
            let candidate = BigUint::from_bytes_be(&buf);
            if !candidate.is_zero() && candidate < self.order {
                return Scalar(candidate);
            }
        }
    }

    /// Fixed-width big-endian scalar bytes.
    pub fn encode_scalar(&self, k: &Scalar) -> Vec<u8> {
        fixed_width(&k.0, self.scalar_len)
    }

    pub fn decode_scalar(&self, bytes: &[u8]) -> Result<Scalar, PrimitiveError> {
        if bytes.len() != self.scalar_len {
            return Err(PrimitiveError::Encoding("scalar has the wrong width"));
        }
        self.scalar(BigUint::from_bytes_be(bytes))
    }

    /// Wire form: `0x00` for infinity, otherwise `0x04 || x || y` with
    /// fixed-width big-endian coordinates.
    pub fn encode_point(&self, point: &Point) -> Vec<u8> {
        match point {
            Point::Infinity => vec![POINT_TAG_INFINITY],
            Point::Affine { x, y } => {
                let mut out = Vec::with_capacity(1 + 2 * self.field_len);
                out.push(POINT_TAG_AFFINE);
                out.extend(fixed_width(x, self.field_len));
                out.extend(fixed_width(y, self.field_len));
                out
            }
        }
    }

    /// Inverse of [`encode_point`](Self::encode_point); rejects off-curve points.
    pub fn decode_point(&self, bytes: &[u8]) -> Result<Point, PrimitiveError> {
        match bytes.split_first() {
            Some((&POINT_TAG_INFINITY, [])) => Ok(Point::Infinity),
            Some((&POINT_TAG_AFFINE, rest)) if rest.len() == 2 * self.field_len => {
                let (x, y) = rest.split_at(self.field_len);
                let point = Point::affine(BigUint::from_bytes_be(x), BigUint::from_bytes_be(y));
                self.validate(&point)?;
                Ok(point)
            }
            _ => Err(PrimitiveError::Encoding("malformed point encoding")),
        }
    }

    /// `x || y` without tag, used under the domain-separated point digests.
    pub(crate) fn coordinate_bytes(&self, point: &Point) -> Result<Vec<u8>, PrimitiveError> {
        let (x, y) = point.coordinates().ok_or(PrimitiveError::PointAtInfinity)?;
        let mut out = fixed_width(x, self.field_len);
        out.extend(fixed_width(y, self.field_len));
        Ok(out)
    }
}

fn byte_len(v: &BigUint) -> usize {
    (v.bits() as usize).div_ceil(8).max(1)
}

fn fixed_width(v: &BigUint, width: usize) -> Vec<u8> {
    let raw = v.to_bytes_be();
    debug_assert!(raw.len() <= width);
    let mut out = vec![0u8; width - raw.len()];
    out.extend(raw);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    /// Every affine solution of the toy equation, found by trying all pairs.
    fn enumerate_toy_points() -> Vec<Point> {
        let mut pts = vec![Point::Infinity];
        for x in 0u32..17 {
            for y in 0u32..17 {
                if (y * y) % 17 == (x * x * x + 2 * x + 2) % 17 {
                    pts.push(Point::affine(x, y));
                }
            }
        }
        pts
    }

    #[test]
    fn toy_curve_counts() {
        let toy = CurveParams::toy();
        assert_eq!(enumerate_toy_points().len(), 19);
        assert_eq!(toy.order(), &BigUint::from(19u8));
        assert_eq!(toy.field_len(), 1);
        assert_eq!(toy.scalar_len(), 1);
    }

    #[test]
    fn doubling_generator() {
        let toy = CurveParams::toy();
        let g = toy.generator().clone();
        assert_eq!(toy.add(&g, &g).unwrap(), Point::affine(6u8, 3u8));
    }

    #[test]
    fn identity_and_inverse() {
        let toy = CurveParams::toy();
        let g = toy.generator().clone();
        assert_eq!(toy.add(&g, &Point::Infinity).unwrap(), g);
        assert_eq!(toy.add(&g, &toy.negate(&g)).unwrap(), Point::Infinity);
    }

    #[test]
    fn toy_group_laws_exhaustive() {
        let toy = CurveParams::toy();
        let pts = enumerate_toy_points();
        for p in &pts {
            assert_eq!(toy.add(p, &Point::Infinity).unwrap(), *p);
            assert_eq!(toy.add(p, &toy.negate(p)).unwrap(), Point::Infinity);
            for q in &pts {
                let pq = toy.add(p, q).unwrap();
                assert!(toy.is_on_curve(&pq));
                assert_eq!(pq, toy.add(q, p).unwrap());
                for r in &pts {
                    let left = toy.add(&pq, r).unwrap();
                    let right = toy.add(p, &toy.add(q, r).unwrap()).unwrap();
                    assert_eq!(left, right);
                }
            }
        }
    }

    #[test]
    fn off_curve_rejected() {
        let toy = CurveParams::toy();
        let bad = Point::affine(5u8, 2u8);
        assert_eq!(toy.add(&bad, toy.generator()), Err(PrimitiveError::PointNotOnCurve));
        let k = toy.scalar(BigUint::from(3u8)).unwrap();
        assert_eq!(toy.mul(&k, &bad), Err(PrimitiveError::PointNotOnCurve));
    }

    #[test]
    fn scalar_mult_matches_iterated_addition_on_toy() {
        let toy = CurveParams::toy();
        let g = toy.generator().clone();
        let mut expected = Point::Infinity;
        for k in 0u32..19 {
            let s = toy.scalar(BigUint::from(k)).unwrap();
            assert_eq!(toy.mul(&s, &g).unwrap(), expected, "k = {k}");
            expected = toy.add(&expected, &g).unwrap();
        }
        assert!(expected.is_infinity());
        assert!(toy.scalar(BigUint::from(19u8)).is_err());
    }

    #[test]
    fn p256_generator_has_prime_order() {
        let curve = CurveParams::p256();
        assert_eq!(curve.field_len(), 32);
        assert_eq!(curve.scalar_len(), 32);
        let one = curve.scalar(BigUint::one()).unwrap();
        assert_eq!(&curve.mul(&one, curve.generator()).unwrap(), curve.generator());
        let two = curve.scalar(BigUint::from(2u8)).unwrap();
        let g = curve.generator();
        assert_eq!(curve.mul(&two, g).unwrap(), curve.add(g, g).unwrap());
    }

    #[test]
    fn p256_ecdh_agrees() {
        let curve = CurveParams::p256();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..4 {
            let a = curve.random_scalar(&mut rng);
            let s = curve.random_scalar(&mut rng);
            let g = curve.generator();
            let x = curve.mul(&s, g).unwrap();
            let e1 = curve.mul(&a, g).unwrap();
            assert_eq!(curve.mul(&a, &x).unwrap(), curve.mul(&s, &e1).unwrap());
        }
    }

    #[test]
    fn point_encoding_roundtrip_and_rejects() {
        let curve = CurveParams::p256();
        let g = curve.generator().clone();
        let wire = curve.encode_point(&g);
        assert_eq!(wire.len(), 65);
        assert_eq!(wire[0], POINT_TAG_AFFINE);
        assert_eq!(curve.decode_point(&wire).unwrap(), g);
        assert_eq!(curve.decode_point(&[POINT_TAG_INFINITY]).unwrap(), Point::Infinity);
        let mut bad = wire.clone();
        bad[64] ^= 1;
        assert_eq!(curve.decode_point(&bad), Err(PrimitiveError::PointNotOnCurve));
        assert!(curve.decode_point(&wire[..64]).is_err());
        assert!(curve.decode_point(&[]).is_err());
    }

    #[test]
    fn singular_curve_rejected() {
        // y^2 = x^3 over GF(17) is singular.
        let err = CurveParams::new(
            "cusp",
            BigUint::from(17u8),
            BigUint::zero(),
            BigUint::zero(),
            Point::affine(1u8, 1u8),
            BigUint::from(17u8),
        );
        assert!(matches!(err, Err(PrimitiveError::InvalidCurve(_))));
    }

    #[test]
    fn random_scalars_in_range() {
        let toy = CurveParams::toy();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..500 {
            let k = toy.random_scalar(&mut rng);
            assert!(!k.value().is_zero() && k.value() < toy.order());
        }
    }
}
