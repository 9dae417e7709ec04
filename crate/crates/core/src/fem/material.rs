use nalgebra::Matrix6;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Isotropic linear-elastic material. Young's modulus in kPa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    young_modulus: f64,
    poisson_ratio: f64,
}

impl Default for Material {
    fn default() -> Self {
        Material {
            young_modulus: 5.0,
            poisson_ratio: 0.35,
        }
    }
}

impl Material {
    pub fn new(young_modulus: f64, poisson_ratio: f64) -> Result<Self> {
        if !(young_modulus > 0.0 && young_modulus.is_finite()) {
            return Err(Error::InvalidInput(format!("Young's modulus must be positive, got {young_modulus}")));
        }
        if !(0.0..0.5).contains(&poisson_ratio) {
            return Err(Error::InvalidInput(format!("Poisson's ratio must lie in [0, 0.5), got {poisson_ratio}")));
        }
        Ok(Material {
            young_modulus,
            poisson_ratio,
        })
    }

    pub fn young_modulus(&self) -> f64 {
        self.young_modulus
    }

    pub fn poisson_ratio(&self) -> f64 {
        self.poisson_ratio
    }

    pub fn lame_lambda(&self) -> f64 {
        let (e, nu) = (self.young_modulus, self.poisson_ratio);
        e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    }

    pub fn lame_mu(&self) -> f64 {
        self.young_modulus / (2.0 * (1.0 + self.poisson_ratio))
    }

    /// Constitutive matrix in Voigt order (xx, yy, zz, xy, yz, zx), engineering shear strains.
    pub fn material_matrix(&self) -> Matrix6<f64> {
        let (l, m) = (self.lame_lambda(), self.lame_mu());
        let mut d = Matrix6::zeros();
        for i in 0..3 {
            for j in 0..3 {
                d[(i, j)] = l;
            }
            d[(i, i)] = l + 2.0 * m;
            d[(i + 3, i + 3)] = m;
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_tissue_constants() {
        let m = Material::default();
        // λ = 5·0.35/(1.35·0.3), μ = 5/2.7
        assert!((m.lame_lambda() - 4.320_987_654_320_988).abs() < 1e-12);
        assert!((m.lame_mu() - 1.851_851_851_851_852).abs() < 1e-12);
        assert!((m.material_matrix()[(0, 0)] - 8.024_691_358_024_691).abs() < 1e-12);
    }

    #[test]
    fn zero_poisson() {
        let m = Material::new(3.0, 0.0).unwrap();
        let d = m.material_matrix();
        assert_eq!(m.lame_lambda(), 0.0);
        assert_eq!(d[(0, 1)], 0.0);
        assert_eq!(d[(3, 3)], 1.5);
    }

    #[test]
    fn structure() {
        let d = Material::default().material_matrix();
        assert_eq!(d, d.transpose());
        assert_eq!(d[(3, 3)], d[(4, 4)]);
        assert_eq!(d[(4, 4)], d[(5, 5)]);
        assert_eq!(d[(0, 3)], 0.0);
    }

    #[test]
    fn invalid() {
        assert!(Material::new(0.0, 0.3).is_err());
        assert!(Material::new(1.0, 0.5).is_err());
        assert!(Material::new(1.0, -0.1).is_err());
    }
}
