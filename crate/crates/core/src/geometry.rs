//! Planar polar-coordinate arithmetic and the two-circle origin solver.
//!
//! Every matching hypothesis is anchored by a pair of points whose polar
//! configuration about an unknown origin is known only up to scale and
//! rotation: the radius ratio `rho = r_j / r_i` and the relative angle
//! `dtheta = theta_i - theta_j`. [`solve_origin`] recovers that origin.
//!
//! Writing points as complex numbers, the two constraints collapse into
//!
//! ```text
//! p_i - p_j = (p_i - c) * (1 - rho * exp(-i * dtheta))
//! ```
//!
//! so `c = p_i - (p_i - p_j) / w` with `w = 1 - rho * exp(-i * dtheta)`.
//! `|w|^2 = 1 + rho^2 - 2 rho cos(dtheta)` is the law-of-cosines
//! denominator, and the division selects the circle intersection whose
//! relative angle carries the sign of `dtheta`.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest admissible `|w|^2` before a hypothesis is treated as unbounded.
pub const EPS_DENOMINATOR: f64 = 1e-12;

/// Degenerate-radius tolerance as a fraction of the frame diagonal.
pub const EPS_RADIUS_FRACTION: f64 = 1e-6;

/// Relative-angle band around 0 and pi inside which the two circles are
/// considered tangent.
pub const EPS_TANGENT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    /// Complex product `self * other`.
    #[inline]
    pub fn cmul(self, other: Point2) -> Point2 {
        Point2::new(
            self.x * other.x - self.y * other.y,
            self.x * other.y + self.y * other.x,
        )
    }

    /// Complex product `self * conj(other)`.
    #[inline]
    pub fn cmul_conj(self, other: Point2) -> Point2 {
        Point2::new(
            self.x * other.x + self.y * other.y,
            self.y * other.x - self.x * other.y,
        )
    }

    /// Complex quotient `self / other`; `other` must be nonzero.
    #[inline]
    pub fn cdiv(self, other: Point2) -> Point2 {
        let n = other.norm_sq();
        Point2::new(
            (self.x * other.x + self.y * other.y) / n,
            (self.y * other.x - self.x * other.y) / n,
        )
    }

    /// Rotate by `angle` radians about `pivot` (counterclockwise).
    pub fn rotate_about(self, pivot: Point2, angle: f64) -> Point2 {
        let (s, c) = angle.sin_cos();
        let d = self - pivot;
        pivot + Point2::new(c * d.x - s * d.y, s * d.x + c * d.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

/// Polar coordinates `(r, theta)` with `theta` in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarCoord {
    pub r: f64,
    pub theta: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("point lies within {eps:e} of the polar origin")]
    DegenerateOrigin { eps: f64 },
}

/// Reduce an angle to `(-pi, pi]`.
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Polar coordinates of `p` about `origin`. Fails when `p` is closer than
/// `eps` to the origin, where the bearing is undefined.
pub fn to_polar(p: Point2, origin: Point2, eps: f64) -> Result<PolarCoord, GeometryError> {
    let d = p - origin;
    let r = d.norm();
    if r < eps {
        return Err(GeometryError::DegenerateOrigin { eps });
    }
    Ok(PolarCoord {
        r,
        theta: wrap_angle(d.y.atan2(d.x)),
    })
}

/// A solved hypothesis origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OriginSolution {
    pub origin: Point2,
    /// Distance from the origin to the first anchor point.
    pub anchor_radius: f64,
    /// The two circles touch instead of crossing (`dtheta` at 0 or pi).
    /// At `dtheta = 0` this is a collinear, low-confidence configuration.
    pub tangent: bool,
}

/// Origin solver specialised to one image-side `(rho, dtheta)` pair, so that
/// the same configuration can be applied to many database pairs cheaply.
#[derive(Debug, Clone, Copy)]
pub struct OriginSolver {
    w_inv: Point2,
    tangent: bool,
}

impl OriginSolver {
    /// `None` when the configuration admits no bounded origin
    /// (`1 + rho^2 - 2 rho cos(dtheta) < EPS_DENOMINATOR`).
    pub fn new(rho: f64, dtheta: f64) -> Option<Self> {
        if !(rho > 0.0) || !rho.is_finite() || !dtheta.is_finite() {
            return None;
        }
        let (s, c) = dtheta.sin_cos();
        let w = Point2::new(1.0 - rho * c, rho * s);
        let den = w.norm_sq();
        if !(den >= EPS_DENOMINATOR) {
            return None;
        }
        let w_inv = Point2::new(w.x / den, -w.y / den);
        let d = wrap_angle(dtheta).abs();
        Some(Self {
            w_inv,
            tangent: d < EPS_TANGENT || PI - d < EPS_TANGENT,
        })
    }

    /// Returns the origin and the vector from the origin to `p_i`.
    #[inline]
    pub fn solve_vec(&self, p_i: Point2, p_j: Point2) -> (Point2, Point2) {
        let to_anchor = (p_i - p_j).cmul(self.w_inv);
        (p_i - to_anchor, to_anchor)
    }

    pub fn solve(&self, p_i: Point2, p_j: Point2) -> Option<OriginSolution> {
        if p_i == p_j {
            return None;
        }
        let (origin, to_anchor) = self.solve_vec(p_i, p_j);
        let anchor_radius = to_anchor.norm();
        if !origin.is_finite() || !anchor_radius.is_finite() {
            return None;
        }
        Some(OriginSolution {
            origin,
            anchor_radius,
            tangent: self.tangent,
        })
    }
}

/// Find `c` such that, in polar coordinates about `c`, `R_j / R_i = rho`
/// and `wrap(Theta_i - Theta_j) = dtheta`.
pub fn solve_origin(p_i: Point2, p_j: Point2, rho: f64, dtheta: f64) -> Option<OriginSolution> {
    OriginSolver::new(rho, dtheta)?.solve(p_i, p_j)
}
