//! Network instances, their geometry, and the three reference matrices.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::ChannelError;
use crate::numerics::{CMatrix, C64};

/// Source-relay matrix `g` (2×M, row i feeds relay i), relay-destination matrix
/// `h` (N×2, column i leaves relay i) and linear power budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelInstance {
    pub g: CMatrix,
    pub h: CMatrix,
    pub p_s: f64,
    pub p_r1: f64,
    pub p_r2: f64,
}

impl ChannelInstance {
    /// Builds and validates an instance, reporting the first violated invariant.
    pub fn new(g: CMatrix, h: CMatrix, p_s: f64, p_r1: f64, p_r2: f64) -> Result<Self, ChannelError> {
        let inst = ChannelInstance { g, h, p_s, p_r1, p_r2 };
        inst.validate().map_err(|mut errs| errs.remove(0))?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<(), Vec<ChannelError>> {
        let mut errs = Vec::new();
        if self.g.rows() != 2 {
            errs.push(ChannelError::invalid("g", format!("must have 2 rows, has {}", self.g.rows())));
        }
        if self.h.cols() != 2 {
            errs.push(ChannelError::invalid("h", format!("must have 2 columns, has {}", self.h.cols())));
        }
        if !self.g.is_finite() {
            errs.push(ChannelError::invalid("g", "non-finite entry"));
        }
        if !self.h.is_finite() {
            errs.push(ChannelError::invalid("h", "non-finite entry"));
        }
        for (name, p) in [("p_s", self.p_s), ("p_r1", self.p_r1), ("p_r2", self.p_r2)] {
            if !p.is_finite() {
                errs.push(ChannelError::invalid(name, "power must be finite"));
            } else if p < 0.0 {
                errs.push(ChannelError::invalid(name, format!("negative power {p}")));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    /// Same channel with different relay powers.
    pub fn with_relay_power(&self, p_r1: f64, p_r2: f64) -> Self {
        ChannelInstance { p_r1, p_r2, ..self.clone() }
    }

    pub fn with_source_power(&self, p_s: f64) -> Self {
        ChannelInstance { p_s, ..self.clone() }
    }

    pub fn source_antennas(&self) -> usize {
        self.g.cols()
    }

    pub fn dest_antennas(&self) -> usize {
        self.h.rows()
    }

    pub fn relay_power(&self, i: usize) -> f64 {
        if i == 0 {
            self.p_r1
        } else {
            self.p_r2
        }
    }

    /// Row `g_i` (1×M), zero based.
    pub fn g_row(&self, i: usize) -> CMatrix {
        self.g.row(i)
    }

    /// Column `h_i` (N×1), zero based.
    pub fn h_col(&self, i: usize) -> CMatrix {
        self.h.col(i)
    }

    pub fn g_norm_sq(&self, i: usize) -> f64 {
        self.g.row(i).frobenius_norm().powi(2)
    }

    pub fn h_norm_sq(&self, i: usize) -> f64 {
        self.h.col(i).frobenius_norm().powi(2)
    }

    /// h1† h2.
    pub fn h_inner(&self) -> C64 {
        (self.h_col(0).adjoint() * self.h_col(1))[(0, 0)]
    }

    /// det(H†H) = ‖h1‖²‖h2‖² − |h1†h2|², clamped at zero.
    pub fn det_hh(&self) -> f64 {
        (self.h_norm_sq(0) * self.h_norm_sq(1) - self.h_inner().norm_sqr()).max(0.0)
    }

    /// Relays-to-destination geometry. Fails on a zero-norm channel column.
    pub fn geometry(&self) -> Result<ChannelGeometry, ChannelError> {
        let n1 = self.h_norm_sq(0);
        let n2 = self.h_norm_sq(1);
        if n1 == 0.0 {
            return Err(ChannelError::Degenerate { field: "h1".into() });
        }
        if n2 == 0.0 {
            return Err(ChannelError::Degenerate { field: "h2".into() });
        }
        let inner_h = self.h_inner();
        let phi_h = vector_angle(inner_h.norm(), n1, n2);
        let g1 = self.g_norm_sq(0);
        let g2 = self.g_norm_sq(1);
        let phi_g = if g1 > 0.0 && g2 > 0.0 {
            let gi = (self.g_row(0) * self.g_row(1).adjoint())[(0, 0)];
            vector_angle(gi.norm(), g1, g2)
        } else {
            FRAC_PI_2
        };
        Ok(ChannelGeometry {
            phi_g,
            phi_h,
            snr_geo: (self.p_r1 * self.p_r2).sqrt() * (n1 * n2).sqrt(),
            det_hh: self.det_hh(),
            inner_h,
        })
    }

    /// Independent entries uniform in the complex unit disc.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, m: usize, n: usize, p_s: f64, p_r1: f64, p_r2: f64) -> Self {
        ChannelInstance { g: random_disc_matrix(rng, 2, m), h: random_disc_matrix(rng, n, 2), p_s, p_r1, p_r2 }
    }
}

fn vector_angle(inner_abs: f64, n1: f64, n2: f64) -> f64 {
    (inner_abs / (n1 * n2).sqrt()).clamp(0.0, 1.0).acos()
}

pub fn random_disc_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    let data: Vec<C64> = (0..rows * cols)
        .map(|_| {
            let r = rng.random::<f64>().sqrt();
            let t = rng.random_range(0.0..std::f64::consts::TAU);
            C64::from_polar(r, t)
        })
        .collect();
    CMatrix::from_row_major(rows, cols, &data)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelGeometry {
    pub phi_g: f64,
    pub phi_h: f64,
    pub snr_geo: f64,
    pub det_hh: f64,
    pub inner_h: C64,
}

/// The three symmetric reference matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedMatrix {
    Ortho,
    Mid,
    Parallel,
}

impl NamedMatrix {
    pub const ALL: [NamedMatrix; 3] = [NamedMatrix::Ortho, NamedMatrix::Mid, NamedMatrix::Parallel];

    /// The published four-digit entries, kept as printed rather than as exact constants.
    #[allow(clippy::approx_constant)]
    pub fn matrix(self) -> CMatrix {
        match self {
            NamedMatrix::Ortho => CMatrix::identity(2),
            NamedMatrix::Mid => CMatrix::from_real_rows(&[&[0.9285, 0.3714], &[0.3714, 0.9285]]),
            NamedMatrix::Parallel => CMatrix::from_real_rows(&[&[0.7071, 0.7071], &[0.7071, 0.7071]]),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            NamedMatrix::Ortho => "ortho",
            NamedMatrix::Mid => "mid",
            NamedMatrix::Parallel => "parallel",
        }
    }
}

impl fmt::Display for NamedMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for NamedMatrix {
    type Err = ChannelError;
    fn from_str(s: &str) -> Result<Self, ChannelError> {
        match s {
            "ortho" => Ok(NamedMatrix::Ortho),
            "mid" => Ok(NamedMatrix::Mid),
            "parallel" => Ok(NamedMatrix::Parallel),
            other => Err(ChannelError::UnknownTag(other.to_string())),
        }
    }
}

pub fn named_instance(
    g: NamedMatrix,
    h: NamedMatrix,
    p_s: f64,
    p_r1: f64,
    p_r2: f64,
) -> Result<ChannelInstance, ChannelError> {
    ChannelInstance::new(g.matrix(), h.matrix(), p_s, p_r1, p_r2)
}

/// Two real 2-vectors: the first `(1, 0)`, the second `norm·(cos φ, sin φ)`.
fn angled_pair(norm1: f64, norm2: f64, phi: f64) -> [[f64; 2]; 2] {
    [[norm1, 0.0], [norm2 * phi.cos(), norm2 * phi.sin()]]
}

/// Instance with `g` rows and `h` columns at prescribed norms and angles (radians).
pub fn angled_instance(
    g_norms: (f64, f64),
    phi_g: f64,
    h_norms: (f64, f64),
    phi_h: f64,
    p_s: f64,
    p_r1: f64,
    p_r2: f64,
) -> Result<ChannelInstance, ChannelError> {
    let gv = angled_pair(g_norms.0, g_norms.1, phi_g);
    let hv = angled_pair(h_norms.0, h_norms.1, phi_h);
    let g = CMatrix::from_real_rows(&[&gv[0], &gv[1]]);
    let h = CMatrix::from_real_rows(&[&hv[0], &hv[1]]).transpose();
    ChannelInstance::new(g, h, p_s, p_r1, p_r2)
}
