//! The IEC 61966-2-1 standard RGB space (D65).

use std::sync::OnceLock;

use nalgebra::Matrix3;

use super::{ColorError, Xyz};
use crate::image::{ColorSpace, ImageState, LinearImage};

/// Published XYZ → linear standard RGB matrix.
pub const XYZ_TO_SRGB: [[f64; 3]; 3] = [
    [3.2406, -1.5372, -0.4986],
    [-0.9689, 1.8758, 0.0415],
    [0.0557, -0.2040, 1.0570],
];

pub const D65_WHITE_XYZ: Xyz = [0.9505, 1.0, 1.0890];

fn srgb_to_xyz_matrix() -> &'static [[f64; 3]; 3] {
    static INV: OnceLock<[[f64; 3]; 3]> = OnceLock::new();
    INV.get_or_init(|| {
        let m = Matrix3::from_fn(|i, j| XYZ_TO_SRGB[i][j]);
        let inv = m.try_inverse().expect("published matrix is invertible");
        std::array::from_fn(|i| std::array::from_fn(|j| inv[(i, j)]))
    })
}

fn mul(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandardRgb {
    /// Linear (scientific path) or transfer-encoded and clipped (display path).
    pub rgb: [f64; 3],
    /// Whether the linear value fell outside `[0, 1]³`.
    pub out_of_gamut: bool,
}

pub fn srgb_encode(v: f64) -> f64 {
    if v <= 0.0031308 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

pub fn srgb_decode(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

/// XYZ (white `Y = 1`) to standard RGB. With `encode = false` out-of-gamut
/// values are preserved; with `encode = true` they are clipped before the
/// transfer curve is applied.
pub fn xyz_to_standard_rgb(xyz: Xyz, encode: bool) -> StandardRgb {
    let lin = mul(&XYZ_TO_SRGB, xyz);
    let out_of_gamut = lin.iter().any(|&v| !(0.0..=1.0).contains(&v));
    let rgb = if encode {
        lin.map(|v| srgb_encode(v.clamp(0.0, 1.0)))
    } else {
        lin
    };
    StandardRgb { rgb, out_of_gamut }
}

/// Exact inverse of the linear path.
pub fn standard_rgb_to_xyz(rgb: [f64; 3]) -> Xyz {
    mul(srgb_to_xyz_matrix(), rgb)
}

/// Converts a CIE XYZ image; returns the image and its out-of-gamut pixel count.
pub fn xyz_image_to_standard_rgb(
    img: &LinearImage,
    encode: bool,
) -> Result<(LinearImage, usize), ColorError> {
    if img.state.space != ColorSpace::CieXyz {
        return Err(ColorError::WrongSpace {
            expected: "CIE XYZ",
            got: img.state.space,
        });
    }
    let mut out_of_gamut = 0;
    let pixels = img
        .pixels()
        .iter()
        .map(|&p| {
            let s = xyz_to_standard_rgb(p, encode);
            out_of_gamut += s.out_of_gamut as usize;
            s.rgb
        })
        .collect();
    let state = ImageState {
        encoding: img.state.encoding,
        space: ColorSpace::LinearSrgb,
    };
    let out = LinearImage::from_pixels(img.width(), img.height(), pixels, state)?;
    Ok((out, out_of_gamut))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets;
    use crate::colorimetry::{patch_xyz, CmfSet};
    use crate::spectral::{Spectrum, SpectrumKind};
    use proptest::prelude::*;

    #[test]
    fn white_maps_to_one() {
        let s = xyz_to_standard_rgb(D65_WHITE_XYZ, false);
        for v in s.rgb {
            assert!((v - 1.0).abs() < 1e-3, "{:?}", s.rgb);
        }
        assert_eq!(xyz_to_standard_rgb([0.0; 3], false).rgb, [0.0; 3]);
        assert_eq!(xyz_to_standard_rgb([0.0; 3], true).rgb, [0.0; 3]);
    }

    #[test]
    fn narrowband_patch_is_out_of_gamut() {
        let grid: Vec<f64> = (0..=62).map(|i| 380.0 + 5.0 * i as f64).collect();
        let refl = Spectrum::from_fn(&grid, SpectrumKind::Reflectance, |l| {
            (-0.5 * ((l - 510.0) / 8.0).powi(2)).exp()
        })
        .unwrap();
        let xyz = patch_xyz(&refl, &assets::d65(), &CmfSet::cie1931()).unwrap();
        let lin = xyz_to_standard_rgb(xyz, false);
        assert!(lin.out_of_gamut);
        assert!(lin.rgb[0] < 0.0, "{:?}", lin.rgb);
        let disp = xyz_to_standard_rgb(xyz, true);
        assert!(disp.rgb.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn transfer_curve_round_trip() {
        for i in 0..=100 {
            let v = i as f64 / 100.0;
            assert!((srgb_decode(srgb_encode(v)) - v).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn inverse_is_exact(x in -1.0f64..2.0, y in -1.0f64..2.0, z in -1.0f64..2.0) {
            let back = standard_rgb_to_xyz(xyz_to_standard_rgb([x, y, z], false).rgb);
            for (a, b) in back.iter().zip([x, y, z]) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
