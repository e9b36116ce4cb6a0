//! Declarative measure specifications.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::component::Component1D;
use crate::error::{Error, Result};

/// Canonical convex bodies. All are scaled by the family `scale`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Body {
    /// `[-1, 1]^n`
    Cube,
    /// Unit Euclidean ball.
    Ball,
    /// `conv{0, e_1, ..., e_n}`
    Simplex,
    /// Unit l1 ball.
    CrossPolytope,
}

impl Body {
    pub fn contains(self, z: &[f64], scale: f64) -> bool {
        match self {
            Body::Cube => z.iter().all(|v| v.abs() <= scale),
            Body::Ball => z.iter().map(|v| v * v).sum::<f64>() <= scale * scale,
            Body::Simplex => z.iter().all(|v| *v >= 0.0) && z.iter().sum::<f64>() <= scale,
            Body::CrossPolytope => z.iter().map(|v| v.abs()).sum::<f64>() <= scale,
        }
    }

    pub fn is_symmetric(self) -> bool {
        !matches!(self, Body::Simplex)
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// Centered Gaussian; identity covariance when omitted.
    Gaussian {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        covariance: Option<Vec<Vec<f64>>>,
    },
    /// Independent coordinates; one component per coordinate.
    Product { components: Vec<Component1D> },
    UniformBody {
        body: Body,
        #[serde(default = "one")]
        scale: f64,
    },
    /// Density proportional to `e^{-strength |z|^2/2}` on the body.
    GaussianRestricted {
        body: Body,
        #[serde(default = "one")]
        scale: f64,
        strength: f64,
    },
}

/// `x = linear * z + shift`, where `z` follows the family law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub shift: Vec<f64>,
    pub linear: Vec<Vec<f64>>,
}

impl Affine {
    pub fn identity(n: usize) -> Self {
        let linear = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        Affine { shift: vec![0.0; n], linear }
    }

    pub fn is_diagonal(&self) -> bool {
        self.linear
            .iter()
            .enumerate()
            .all(|(i, row)| row.iter().enumerate().all(|(j, v)| i == j || *v == 0.0))
    }

    pub fn is_identity(&self) -> bool {
        self.shift.iter().all(|v| *v == 0.0)
            && self
                .linear
                .iter()
                .enumerate()
                .all(|(i, row)| row.iter().enumerate().all(|(j, v)| *v == if i == j { 1.0 } else { 0.0 }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub dimension: usize,
    #[serde(flatten)]
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affine: Option<Affine>,
}

impl MeasureSpec {
    pub fn standard_gaussian(n: usize) -> Self {
        MeasureSpec { dimension: n, family: Family::Gaussian { covariance: None }, affine: None }
    }

    pub fn gaussian(covariance: Vec<Vec<f64>>) -> Self {
        MeasureSpec {
            dimension: covariance.len(),
            family: Family::Gaussian { covariance: Some(covariance) },
            affine: None,
        }
    }

    pub fn product(components: Vec<Component1D>) -> Self {
        MeasureSpec { dimension: components.len(), family: Family::Product { components }, affine: None }
    }

    pub fn iid(component: Component1D, n: usize) -> Self {
        Self::product(vec![component; n])
    }

    pub fn uniform_body(body: Body, scale: f64, n: usize) -> Self {
        MeasureSpec { dimension: n, family: Family::UniformBody { body, scale }, affine: None }
    }

    pub fn gaussian_restricted(body: Body, scale: f64, strength: f64, n: usize) -> Self {
        MeasureSpec { dimension: n, family: Family::GaussianRestricted { body, scale, strength }, affine: None }
    }

    pub fn with_affine(mut self, affine: Affine) -> Self {
        self.affine = Some(affine);
        self
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::Gaussian { .. } => "gaussian",
            Family::Product { .. } => "product",
            Family::UniformBody { .. } => "uniform_body",
            Family::GaussianRestricted { .. } => "gaussian_restricted",
        }
    }

    /// Whether the law is invariant under `x -> -x` before the affine shift.
    pub fn is_origin_symmetric(&self) -> bool {
        let sym = match &self.family {
            Family::Gaussian { .. } => true,
            Family::Product { .. } => false,
            Family::UniformBody { body, .. } | Family::GaussianRestricted { body, .. } => body.is_symmetric(),
        };
        sym && self.affine.as_ref().is_none_or(|a| a.shift.iter().all(|v| *v == 0.0))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dimension;
        if n == 0 {
            return Err(Error::InvalidSpec("dimension must be positive".into()));
        }
        match &self.family {
            Family::Gaussian { covariance: Some(c) } => {
                if c.len() != n || c.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidSpec(format!("covariance must be {n}x{n}")));
                }
                if c.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidSpec("covariance entries must be finite".into()));
                }
            }
            Family::Gaussian { covariance: None } => {}
            Family::Product { components } => {
                if components.len() != n {
                    return Err(Error::InvalidSpec(format!(
                        "product has {} components for dimension {n}",
                        components.len()
                    )));
                }
                for c in components {
                    c.validate()?;
                }
            }
            Family::UniformBody { scale, .. } => check_scale(*scale)?,
            Family::GaussianRestricted { scale, strength, .. } => {
                check_scale(*scale)?;
                if !(*strength >= 0.0 && strength.is_finite()) {
                    return Err(Error::InvalidSpec("restriction strength must be >= 0".into()));
                }
            }
        }
        if let Some(a) = &self.affine {
            if a.shift.len() != n || a.linear.len() != n || a.linear.iter().any(|r| r.len() != n) {
                return Err(Error::InvalidSpec("affine record has wrong shape".into()));
            }
            if a.shift.iter().chain(a.linear.iter().flatten()).any(|v| !v.is_finite()) {
                return Err(Error::InvalidSpec("affine entries must be finite".into()));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: MeasureSpec = toml::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

fn check_scale(scale: f64) -> Result<()> {
    if scale > 0.0 && scale.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!("body scale must be positive, got {scale}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let specs = [
            MeasureSpec::standard_gaussian(3),
            MeasureSpec::gaussian(vec![vec![2.0, 0.5], vec![0.5, 1.0]]),
            MeasureSpec::iid(Component1D::shifted_exponential(), 2),
            MeasureSpec::product(vec![Component1D::quartic(1.0, 0.25), Component1D::uniform(-1.0, 2.0).scaled(2.0, 1.0)]),
            MeasureSpec::uniform_body(Body::Simplex, 1.0, 4).with_affine(Affine::identity(4)),
            MeasureSpec::gaussian_restricted(Body::Cube, 2.0, 1.0, 2),
        ];
        for s in specs {
            let text = s.to_toml();
            let back = MeasureSpec::from_toml(&text).unwrap();
            assert_eq!(back, s, "{text}");
            assert_eq!(back.digest(), s.digest());
        }
    }

    #[test]
    fn parses_hand_written_config() {
        let text = r#"
            family = "product"
            dimension = 2
            [[components]]
            kind = "shifted_exponential"
            [[components]]
            kind = "uniform_interval"
            lo = -1.0
            hi = 1.0
            scale = 2.0
        "#;
        let s = MeasureSpec::from_toml(text).unwrap();
        assert_eq!(s.dimension, 2);
        let text = "family = \"uniform_body\"\nbody = \"ball\"\ndimension = 3\n";
        let s = MeasureSpec::from_toml(text).unwrap();
        assert_eq!(s, MeasureSpec::uniform_body(Body::Ball, 1.0, 3));
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(MeasureSpec::from_toml("family = \"torus\"\ndimension = 2\n").is_err());
        assert!(MeasureSpec::iid(Component1D::uniform(1.0, 0.0), 2).validate().is_err());
        let mut s = MeasureSpec::standard_gaussian(2);
        s.dimension = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn body_membership() {
        assert!(Body::Simplex.contains(&[0.2, 0.3], 1.0));
        assert!(!Body::Simplex.contains(&[-0.01, 0.3], 1.0));
        assert!(Body::CrossPolytope.contains(&[0.5, -0.5], 1.0));
        assert!(!Body::Ball.contains(&[0.8, 0.8], 1.0));
        assert!(Body::Cube.contains(&[1.9, -1.9], 2.0));
    }
}
