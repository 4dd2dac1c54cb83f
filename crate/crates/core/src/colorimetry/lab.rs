use serde::{Deserialize, Serialize};

use super::{ColorError, Xyz};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lab {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

const EPSILON: f64 = 216.0 / 24389.0;
const KAPPA: f64 = 24389.0 / 27.0;

fn f(t: f64) -> f64 {
    if t > EPSILON {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

/// CIE 1976 L*a*b* relative to `white`.
pub fn xyz_to_lab(xyz: Xyz, white: Xyz) -> Result<Lab, ColorError> {
    if white.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(ColorError::NonPositiveWhite(white));
    }
    let fx = f(xyz[0] / white[0]);
    let fy = f(xyz[1] / white[1]);
    let fz = f(xyz[2] / white[2]);
    Ok(Lab {
        l: 116.0 * fy - 16.0,
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    })
}

/// Euclidean distance in L*a*b*.
pub fn delta_e76(a: Lab, b: Lab) -> f64 {
    ((a.l - b.l).powi(2) + (a.a - b.a).powi(2) + (a.b - b.b).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const WHITE: Xyz = [0.95047, 1.0, 1.08883];

    #[test]
    fn identical_is_zero() {
        let c = xyz_to_lab([0.3, 0.4, 0.2], WHITE).unwrap();
        assert_eq!(delta_e76(c, c), 0.0);
    }

    #[test]
    fn lightness_only() {
        let a = Lab { l: 50.0, a: 3.0, b: -2.0 };
        let b = Lab { l: 60.0, ..a };
        assert_eq!(delta_e76(a, b), 10.0);
    }

    #[test]
    fn gray_five_percent_apart_matches_hand_computation() {
        // Neutral grays: a* = b* = 0, so ΔE = |ΔL*| with L* = 116·Y^(1/3) − 16.
        // Y = 0.20: 116·0.584803548 − 16 = 51.8372116
        // Y = 0.21: 116·0.594392195 − 16 = 52.9494946
        let g1 = WHITE.map(|w| 0.20 * w);
        let g2 = WHITE.map(|w| 0.21 * w);
        let l1 = xyz_to_lab(g1, WHITE).unwrap();
        let l2 = xyz_to_lab(g2, WHITE).unwrap();
        assert_relative_eq!(l1.l, 51.8372116, epsilon = 1e-6);
        assert_relative_eq!(l2.l, 52.9494946, epsilon = 1e-6);
        assert!(l1.a.abs() < 1e-12 && l1.b.abs() < 1e-12);
        assert_relative_eq!(delta_e76(l1, l2), 1.1122830, epsilon = 1e-6);
    }

    #[test]
    fn dark_branch_is_continuous() {
        let y = EPSILON;
        let below = xyz_to_lab([0.0, y * (1.0 - 1e-12), 0.0], [1.0; 3]).unwrap().l;
        let above = xyz_to_lab([0.0, y * (1.0 + 1e-12), 0.0], [1.0; 3]).unwrap().l;
        assert!((below - above).abs() < 1e-8);
        assert_relative_eq!(xyz_to_lab([0.0; 3], [1.0; 3]).unwrap().l, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn bad_white_point() {
        assert!(matches!(
            xyz_to_lab([0.1; 3], [1.0, 0.0, 1.0]),
            Err(ColorError::NonPositiveWhite(_))
        ));
    }

    fn lab() -> impl Strategy<Value = Lab> {
        (0.0f64..100.0, -100.0f64..100.0, -100.0f64..100.0).prop_map(|(l, a, b)| Lab { l, a, b })
    }

    proptest! {
        #[test]
        fn delta_e_is_a_metric(x in lab(), y in lab(), z in lab()) {
            prop_assert_eq!(delta_e76(x, y), delta_e76(y, x));
            prop_assert!(delta_e76(x, y) >= 0.0);
            prop_assert_eq!(delta_e76(x, y) == 0.0, x == y);
            prop_assert!(delta_e76(x, z) <= delta_e76(x, y) + delta_e76(y, z) + 1e-9);
        }
    }
}
