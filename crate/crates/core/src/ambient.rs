//! Signature-aware vector algebra in Euclidean R³ and Minkowski R^{2,1}.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Inner-product signature of the ambient 3-space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signature {
    /// (+,+,+)
    Euclidean,
    /// (+,+,−), the third coordinate is timelike.
    Lorentzian,
}

impl Signature {
    /// Metric coefficient of the third coordinate.
    #[inline]
    pub fn time_sign(self) -> f64 {
        match self {
            Signature::Euclidean => 1.0,
            Signature::Lorentzian => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AmbientVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl AmbientVector {
    pub const ZERO: AmbientVector = AmbientVector { x: 0.0, y: 0.0, z: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Construct from untrusted input, rejecting NaN and infinities.
    pub fn try_new(x: f64, y: f64, z: f64) -> Option<Self> {
        (x.is_finite() && y.is_finite() && z.is_finite()).then_some(Self { x, y, z })
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Euclidean length of the component vector, regardless of signature.
    #[inline]
    pub fn euclidean_norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Add for AmbientVector {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for AmbientVector {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl Sub for AmbientVector {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for AmbientVector {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<AmbientVector> for f64 {
    type Output = AmbientVector;
    #[inline]
    fn mul(self, v: AmbientVector) -> AmbientVector {
        AmbientVector::new(self * v.x, self * v.y, self * v.z)
    }
}

impl Mul<f64> for AmbientVector {
    type Output = AmbientVector;
    #[inline]
    fn mul(self, s: f64) -> AmbientVector {
        s * self
    }
}

/// Inner product under the given signature.
#[inline]
pub fn dot(sig: Signature, a: AmbientVector, b: AmbientVector) -> f64 {
    a.x * b.x + a.y * b.y + sig.time_sign() * a.z * b.z
}

/// The vector `w` with `dot(sig, w, c) = det(a, b, c)` for every `c`.
///
/// In the Lorentzian case this is the Euclidean cross product with the
/// third component negated.
#[inline]
pub fn cross(sig: Signature, a: AmbientVector, b: AmbientVector) -> AmbientVector {
    let e = AmbientVector::new(
        a.y * b.z - a.z * b.y,
        a.z * b.x - a.x * b.z,
        a.x * b.y - a.y * b.x,
    );
    AmbientVector::new(e.x, e.y, sig.time_sign() * e.z)
}

/// det of the 3×3 matrix with columns a, b, c.
#[inline]
pub fn det(a: AmbientVector, b: AmbientVector, c: AmbientVector) -> f64 {
    a.x * (b.y * c.z - b.z * c.y) - b.x * (a.y * c.z - a.z * c.y) + c.x * (a.y * b.z - a.z * b.y)
}

/// Signature-appropriate length `sqrt(|dot(a, a)|)`.
#[inline]
pub fn norm(sig: Signature, a: AmbientVector) -> f64 {
    dot(sig, a, a).abs().sqrt()
}
