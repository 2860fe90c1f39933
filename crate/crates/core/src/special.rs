//! Inverse error function.

use statrs::function::erf::erf;

/// Inverse of the error function on (-1, 1).
///
/// Starts from Giles' single-precision polynomial approximation in
/// `w = -ln(1 - x^2)` and applies one Newton step on `erf(y) - x`, which
/// brings the absolute error below 1e-9 over the whole open interval.
/// Returns `±inf` at `±1` and NaN outside `[-1, 1]`.
pub fn erf_inv(x: f64) -> f64 {
    if x.is_nan() || !(-1.0..=1.0).contains(&x) {
        return f64::NAN;
    }
    if x == 1.0 {
        return f64::INFINITY;
    }
    if x == -1.0 {
        return f64::NEG_INFINITY;
    }
    if x == 0.0 {
        return 0.0;
    }
    let y0 = giles_initial(x);
    let derivative = std::f64::consts::FRAC_2_SQRT_PI * (-y0 * y0).exp();
    if derivative == 0.0 {
        return y0;
    }
    y0 - (erf(y0) - x) / derivative
}

fn giles_initial(x: f64) -> f64 {
    let w = -((1.0 - x) * (1.0 + x)).ln();
    let p = if w < 5.0 {
        let w = w - 2.5;
        let mut p = 2.810_226_36e-08;
        p = 3.432_739_39e-07 + p * w;
        p = -3.523_387_7e-06 + p * w;
        p = -4.391_506_54e-06 + p * w;
        p = 0.000_218_580_87 + p * w;
        p = -0.001_253_725_03 + p * w;
        p = -0.004_177_681_64 + p * w;
        p = 0.246_640_727 + p * w;
        1.501_409_41 + p * w
    } else {
        let w = w.sqrt() - 3.0;
        let mut p = -0.000_200_214_257;
        p = 0.000_100_950_558 + p * w;
        p = 0.001_349_343_22 + p * w;
        p = -0.003_673_428_44 + p * w;
        p = 0.005_739_507_73 + p * w;
        p = -0.007_622_461_3 + p * w;
        p = 0.009_438_870_47 + p * w;
        p = 1.001_674_06 + p * w;
        2.832_976_82 + p * w
    };
    p * x
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from a 50-digit evaluation.
    const REFERENCE: &[(f64, f64)] = &[
        (0.1, 0.088_855_990_494_257_69),
        (0.5, 0.476_936_276_204_469_9),
        (0.8, 0.906_193_802_436_823_2),
        (0.9, 1.163_087_153_676_674_2),
        (0.99, 1.821_386_367_718_449_6),
        (0.999_999, 3.458_910_737_279_5),
        (-0.3, -0.272_462_714_726_754_4),
    ];

    #[test]
    fn matches_high_precision_reference() {
        for &(x, expected) in REFERENCE {
            let got = erf_inv(x);
            assert!(
                (got - expected).abs() < 1e-9,
                "erf_inv({x}) = {got}, expected {expected}"
            );
        }
    }

    #[test]
    fn edge_values() {
        assert_eq!(erf_inv(0.0), 0.0);
        assert_eq!(erf_inv(1.0), f64::INFINITY);
        assert_eq!(erf_inv(-1.0), f64::NEG_INFINITY);
        assert!(erf_inv(1.5).is_nan());
    }

    #[test]
    fn inverts_erf_on_a_grid() {
        for i in -999..=999 {
            let x = i as f64 / 1000.0;
            let y = erf_inv(x);
            assert!((erf(y) - x).abs() < 1e-12, "x = {x}");
            assert_eq!(erf_inv(-x), -y);
        }
    }
}
