//! Closed-form linear algebra for symmetric 2x2 matrices. Nothing here
//! iterates: at this dimension eigenvalues, inverses, and square roots all
//! have direct formulas.

/// Symmetric 2x2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub const ZERO: Sym2 = Sym2 {
        xx: 0.0,
        xy: 0.0,
        yy: 0.0,
    };

    pub fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Sym2 { xx, xy, yy }
    }

    pub fn identity() -> Self {
        Sym2::diag(1.0, 1.0)
    }

    pub fn diag(a: f64, b: f64) -> Self {
        Sym2 {
            xx: a,
            xy: 0.0,
            yy: b,
        }
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    /// Eigenvalues as (min, max).
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mid = 0.5 * (self.xx + self.yy);
        let radius = (0.25 * (self.xx - self.yy).powi(2) + self.xy * self.xy).sqrt();
        (mid - radius, mid + radius)
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        let (lo, _) = self.eigenvalues();
        lo >= -tol
    }

    pub fn add(&self, other: &Sym2) -> Sym2 {
        Sym2 {
            xx: self.xx + other.xx,
            xy: self.xy + other.xy,
            yy: self.yy + other.yy,
        }
    }

    pub fn scale(&self, s: f64) -> Sym2 {
        Sym2 {
            xx: self.xx * s,
            xy: self.xy * s,
            yy: self.yy * s,
        }
    }

    /// Ratio of eigenvalue magnitudes; infinite for singular matrices.
    pub fn condition_number(&self) -> f64 {
        let (lo, hi) = self.eigenvalues();
        let (lo, hi) = (lo.abs(), hi.abs());
        let small = lo.min(hi);
        let big = lo.max(hi);
        if small == 0.0 {
            f64::INFINITY
        } else {
            big / small
        }
    }

    pub fn inverse(&self) -> Option<Sym2> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(Sym2 {
            xx: self.yy / det,
            xy: -self.xy / det,
            yy: self.xx / det,
        })
    }

    /// `[dx, dy] * M * [dx, dy]^T`.
    pub fn quadratic_form(&self, dx: f64, dy: f64) -> f64 {
        self.xx * dx * dx + 2.0 * self.xy * dx * dy + self.yy * dy * dy
    }

    /// Principal square root of a PSD matrix:
    /// `sqrt(S) = (S + sqrt(det) I) / sqrt(tr + 2 sqrt(det))`.
    pub fn sqrt_psd(&self) -> Sym2 {
        let det = self.det().max(0.0);
        let s = det.sqrt();
        let denom = (self.trace() + 2.0 * s).max(0.0).sqrt();
        if denom == 0.0 {
            return Sym2::ZERO;
        }
        Sym2 {
            xx: (self.xx + s) / denom,
            xy: self.xy / denom,
            yy: (self.yy + s) / denom,
        }
    }

    /// `tr(A * B)` for symmetric A, B.
    pub fn mul_trace(a: &Sym2, b: &Sym2) -> f64 {
        a.xx * b.xx + 2.0 * a.xy * b.xy + a.yy * b.yy
    }

    pub fn lerp(a: &Sym2, b: &Sym2, t: f64) -> Sym2 {
        Sym2 {
            xx: a.xx + (b.xx - a.xx) * t,
            xy: a.xy + (b.xy - a.xy) * t,
            yy: a.yy + (b.yy - a.yy) * t,
        }
    }

    /// Congruence transform `J * S * J^T` for a general 2x2 Jacobian
    /// `[[j00, j01], [j10, j11]]`; the result stays symmetric.
    pub fn congruence(&self, j: [[f64; 2]; 2]) -> Sym2 {
        // rows of J * S
        let a0 = j[0][0] * self.xx + j[0][1] * self.xy;
        let a1 = j[0][0] * self.xy + j[0][1] * self.yy;
        let b0 = j[1][0] * self.xx + j[1][1] * self.xy;
        let b1 = j[1][0] * self.xy + j[1][1] * self.yy;
        Sym2 {
            xx: a0 * j[0][0] + a1 * j[0][1],
            xy: a0 * j[1][0] + a1 * j[1][1],
            yy: b0 * j[1][0] + b1 * j[1][1],
        }
    }
}
