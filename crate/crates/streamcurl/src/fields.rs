//! Built-in catalog of analytic vector fields used for vorticity data,
//! exact velocities and boundary data.

use crate::quadrature::Vec3;
use serde::{Deserialize, Serialize};

/// Symbolic field selected by name plus parameters. Covers every fixture the
/// solver and its tests need without an expression parser.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnalyticField {
    Zero,
    Constant {
        value: [f64; 3],
    },
    /// x -> matrix * x + offset
    Linear {
        matrix: [[f64; 3]; 3],
        #[serde(default)]
        offset: [f64; 3],
    },
    /// Rigid rotation amplitude/2 * (-x2, x1, 0); curl = (0, 0, amplitude).
    RigidRotation {
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Gradient of the harmonic potential x1^2 - x2^2, i.e. (2 x1, -2 x2, 0).
    HarmonicGradient {
        #[serde(default = "one")]
        amplitude: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl AnalyticField {
    pub fn eval(&self, x: &Vec3) -> Vec3 {
        match self {
            AnalyticField::Zero => Vec3::zeros(),
            AnalyticField::Constant { value } => Vec3::new(value[0], value[1], value[2]),
            AnalyticField::Linear { matrix, offset } => {
                let m = matrix;
                Vec3::new(
                    m[0][0] * x.x + m[0][1] * x.y + m[0][2] * x.z + offset[0],
                    m[1][0] * x.x + m[1][1] * x.y + m[1][2] * x.z + offset[1],
                    m[2][0] * x.x + m[2][1] * x.y + m[2][2] * x.z + offset[2],
                )
            }
            AnalyticField::RigidRotation { amplitude } => {
                Vec3::new(-0.5 * amplitude * x.y, 0.5 * amplitude * x.x, 0.0)
            }
            AnalyticField::HarmonicGradient { amplitude } => {
                Vec3::new(2.0 * amplitude * x.x, -2.0 * amplitude * x.y, 0.0)
            }
        }
    }

    /// Analytic curl of the field.
    pub fn curl(&self, _x: &Vec3) -> Vec3 {
        match self {
            AnalyticField::Zero | AnalyticField::Constant { .. } => Vec3::zeros(),
            AnalyticField::Linear { matrix, .. } => {
                let m = matrix;
                Vec3::new(
                    m[2][1] - m[1][2],
                    m[0][2] - m[2][0],
                    m[1][0] - m[0][1],
                )
            }
            AnalyticField::RigidRotation { amplitude } => Vec3::new(0.0, 0.0, *amplitude),
            AnalyticField::HarmonicGradient { .. } => Vec3::zeros(),
        }
    }

    /// Analytic divergence of the field.
    pub fn divergence(&self, _x: &Vec3) -> f64 {
        match self {
            AnalyticField::Zero | AnalyticField::Constant { .. } => 0.0,
            AnalyticField::Linear { matrix, .. } => {
                matrix[0][0] + matrix[1][1] + matrix[2][2]
            }
            AnalyticField::RigidRotation { .. } => 0.0,
            AnalyticField::HarmonicGradient { .. } => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rigid_rotation_has_constant_unit_curl() {
        let f = AnalyticField::RigidRotation { amplitude: 1.0 };
        let x = Vec3::new(0.3, -0.7, 0.2);
        assert_eq!(f.curl(&x), Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(f.eval(&x), Vec3::new(0.35, 0.15, 0.0));
        assert_eq!(f.divergence(&x), 0.0);
    }

    #[test]
    fn harmonic_gradient_is_curl_and_divergence_free() {
        let f = AnalyticField::HarmonicGradient { amplitude: 1.0 };
        let x = Vec3::new(0.4, 0.9, -0.1);
        assert_eq!(f.curl(&x), Vec3::zeros());
        assert_eq!(f.divergence(&x), 0.0);
    }

    #[test]
    fn json_round_trip() {
        let f = AnalyticField::Constant { value: [0.0, 0.0, 1.0] };
        let s = serde_json::to_string(&f).unwrap();
        let g: AnalyticField = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
    }
}
