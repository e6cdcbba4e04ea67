//! Reference constants.
//!
//! The source analysis fixes a set of headline constants that are numerically
//! degenerate in double precision (`eta = 2^-1200` underflows, and the
//! curvature constant `10^14 * 2^(4J+66) / eta^2` overflows). They are recorded
//! here symbolically; every routine in this crate takes the corresponding
//! quantity as a runtime parameter instead, and experiment presets use
//! moderated values.

/// Implied constant of the multiresolution ball family (radius `A * 2^-n`).
pub const DEFAULT_A: f64 = 10.0;

/// Scale-separation exponent between consecutive levels of one ball family.
pub const DEFAULT_J: u32 = 100;

/// Same-radius separation factor inside one ball family.
pub const DEFAULT_KAPPA: f64 = 3.0;

/// Filtration gap-merge threshold factor.
pub const DEFAULT_DELTA: f64 = 0.000_976_562_5; // 2^-10

/// Reference flatness-comparison constant; `10^-10` in the source analysis.
/// Moderated presets use values in `[1e-3, 1e-1]`.
pub const REFERENCE_EPS0: f64 = 1e-10;

/// Base-2 log of the reference Koranyi parameter eta. `2^-1200` underflows
/// f64, so only the exponent is representable.
pub const REFERENCE_ETA_LOG2: i32 = -1200;

/// Radius cutoff: only balls with radius below this enter the fine family G.
pub const G_RADIUS_CUTOFF: f64 = 0.01;

/// Largest eta for which the Koranyi distance satisfies the triangle
/// inequality.
pub const ETA_TRIANGLE_MAX: f64 = 16.0;
