//! SIMP interpolation of an isotropic plane-stress solid.
//!
//! The void tensor is a fixed fraction of the solid one, `C0 = rho0 * C1`,
//! so `C(m) = C0 + m^q (C1 - C0)` factors as `scale(m) * C1` with
//! `scale(m) = rho0 + m^q (1 - rho0)`. The whole density dependence of the
//! stiffness therefore reduces to one scalar per element.

use nalgebra::Matrix3;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialModel {
    /// Young's modulus of the solid phase (Pa).
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    /// SIMP exponent `q`.
    pub penalization: f64,
    /// Stiffness ratio of the ersatz (void) phase to the solid phase.
    pub ersatz_ratio: f64,
}

impl MaterialModel {
    pub fn new(
        youngs_modulus: f64,
        poisson_ratio: f64,
        penalization: f64,
        ersatz_ratio: f64,
    ) -> Result<Self> {
        let model = Self {
            youngs_modulus,
            poisson_ratio,
            penalization,
            ersatz_ratio,
        };
        model.validate()?;
        Ok(model)
    }

    /// E = 10 GPa, nu = 0.25, q = 3, void 1000 times softer than solid.
    pub fn benchmark() -> Self {
        Self {
            youngs_modulus: 10.0e9,
            poisson_ratio: 0.25,
            penalization: 3.0,
            ersatz_ratio: 1.0e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.youngs_modulus.is_finite() && self.youngs_modulus > 0.0) {
            return Err(Error::InvalidMaterial(format!(
                "Young's modulus must be positive, got {}",
                self.youngs_modulus
            )));
        }
        if !(0.0..0.5).contains(&self.poisson_ratio) {
            return Err(Error::InvalidMaterial(format!(
                "Poisson ratio must lie in [0, 0.5), got {}",
                self.poisson_ratio
            )));
        }
        if !(self.penalization.is_finite() && self.penalization >= 1.0) {
            return Err(Error::InvalidMaterial(format!(
                "SIMP exponent must be at least 1, got {}",
                self.penalization
            )));
        }
        if !(self.ersatz_ratio > 0.0 && self.ersatz_ratio < 1.0) {
            return Err(Error::InvalidMaterial(format!(
                "ersatz ratio must lie in (0, 1), got {}",
                self.ersatz_ratio
            )));
        }
        Ok(())
    }

    /// Solid-phase constitutive matrix `C1`.
    pub fn solid_tensor(&self) -> Matrix3<f64> {
        plane_stress_matrix(self.youngs_modulus, self.poisson_ratio)
    }

    /// Stiffness multiplier `rho0 + m^q (1 - rho0)`; `m` is clamped to `[0, 1]`.
    pub fn scale(&self, m: f64) -> f64 {
        let m = m.clamp(0.0, 1.0);
        self.ersatz_ratio + m.powf(self.penalization) * (1.0 - self.ersatz_ratio)
    }

    /// Derivative of [`scale`](Self::scale) with respect to `m`.
    pub fn d_scale(&self, m: f64) -> f64 {
        let m = m.clamp(0.0, 1.0);
        let q = self.penalization;
        if q == 1.0 {
            1.0 - self.ersatz_ratio
        } else {
            q * m.powf(q - 1.0) * (1.0 - self.ersatz_ratio)
        }
    }

    /// `C(m) = scale(m) * C1`.
    pub fn tensor_at(&self, m: f64) -> Matrix3<f64> {
        self.solid_tensor() * self.scale(m)
    }

    /// Directional derivative `DC(m)[dm]`.
    pub fn tensor_derivative(&self, m: f64, dm: f64) -> Matrix3<f64> {
        self.solid_tensor() * (self.d_scale(m) * dm)
    }
}

/// Isotropic plane-stress matrix in Voigt notation `(exx, eyy, gxy)`.
///
/// `lambda' I2 (x) I2 + 2 mu I` with `lambda' = E nu / (1 - nu^2)` and
/// `2 mu = E / (1 + nu)`, written for engineering shear strain.
pub fn plane_stress_tensor(youngs_modulus: f64, poisson_ratio: f64) -> Result<Matrix3<f64>> {
    if !(youngs_modulus.is_finite() && youngs_modulus > 0.0) {
        return Err(Error::InvalidMaterial(format!(
            "Young's modulus must be positive, got {youngs_modulus}"
        )));
    }
    if !(0.0..0.5).contains(&poisson_ratio) {
        return Err(Error::InvalidMaterial(format!(
            "Poisson ratio must lie in [0, 0.5), got {poisson_ratio}"
        )));
    }
    Ok(plane_stress_matrix(youngs_modulus, poisson_ratio))
}

fn plane_stress_matrix(e: f64, nu: f64) -> Matrix3<f64> {
    let lambda = e * nu / (1.0 - nu * nu);
    let two_mu = e / (1.0 + nu);
    Matrix3::new(
        lambda + two_mu,
        lambda,
        0.0,
        lambda,
        lambda + two_mu,
        0.0,
        0.0,
        0.0,
        0.5 * two_mu,
    )
}
