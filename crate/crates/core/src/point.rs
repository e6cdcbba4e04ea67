//! Points of the Heisenberg group and its exact arithmetic.
//!
//! The group is `R^3` with product
//! `(x,y,z)·(x',y',z') = (x+x', y+y', z+z' + (xy' - x'y)/2)`.
//! The origin is the identity and inversion is coordinate negation.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// An element of the Heisenberg group. Carries no metric; distances go
/// through [`crate::metric::MetricCtx`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point { x, y, z }
    }

    /// The identity element.
    pub const fn origin() -> Self {
        Point::new(0.0, 0.0, 0.0)
    }

    /// True if the point lies in the horizontal plane `z = 0`.
    pub fn is_horizontal(&self) -> bool {
        self.z == 0.0
    }

    /// Group product.
    pub fn multiply(&self, rhs: &Point) -> Point {
        Point {
            x: self.x + rhs.x,
            y: self.y + rhs.y,
            z: self.z + rhs.z + 0.5 * (self.x * rhs.y - rhs.x * self.y),
        }
    }

    /// Group inverse: coordinate negation.
    pub fn inverse(&self) -> Point {
        Point::new(-self.x, -self.y, -self.z)
    }

    /// `self^-1 · rhs`, the offset of `rhs` as seen from `self`.
    pub fn offset_to(&self, rhs: &Point) -> Point {
        self.inverse().multiply(rhs)
    }

    /// Anisotropic dilation `(x,y,z) -> (λx, λy, λ²z)`.
    ///
    /// For horizontal points the parameter range extends to all real `λ`;
    /// otherwise `λ` must be nonnegative.
    pub fn dilate(&self, lambda: f64) -> Result<Point> {
        if lambda < 0.0 && self.z != 0.0 {
            return Err(Error::Domain(format!(
                "dilate: negative factor {lambda} on non-horizontal point (z = {})",
                self.z
            )));
        }
        Ok(self.dilate_unchecked(lambda))
    }

    /// Dilation without the horizontality check; callers that already know
    /// `z = 0` or `λ >= 0` use this.
    pub fn dilate_unchecked(&self, lambda: f64) -> Point {
        Point::new(lambda * self.x, lambda * self.y, lambda * lambda * self.z)
    }

    /// Rotation about the z-axis; an isometry of the Koranyi metric for
    /// every eta.
    pub fn rotate_z(&self, theta: f64) -> Point {
        let (s, c) = theta.sin_cos();
        Point::new(c * self.x - s * self.y, s * self.x + c * self.y, self.z)
    }

    /// Projection to the plane, `π(x,y,z) = (x,y)`. 1-Lipschitz, and isometric
    /// on horizontal lines.
    pub fn project_pi(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// The horizontal element "below" this one, `π̃(x,y,z) = (x,y,0)`.
    /// Not a homomorphism.
    pub fn project_pi_tilde(&self) -> Point {
        Point::new(self.x, self.y, 0.0)
    }

    /// Euclidean norm of the planar projection.
    pub fn planar_norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Planar Euclidean distance between projections, `|π(a) - π(b)|`.
pub fn planar_distance(a: &Point, b: &Point) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}
