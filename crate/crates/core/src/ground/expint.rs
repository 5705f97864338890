use super::GroundError;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Exponential integral E1(x) for x > 0.
///
/// Power series below x = 1, modified-Lentz continued fraction above.
pub fn exp_integral_e1(x: f64) -> Result<f64, GroundError> {
    if !(x > 0.0) || x.is_nan() {
        return Err(GroundError::Domain(format!("E1 requires x > 0, got {x}")));
    }
    Ok(e1_unchecked(x))
}

pub(crate) fn e1_unchecked(x: f64) -> f64 {
    if x > 700.0 {
        return 0.0;
    }
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            let kf = k as f64;
            term *= -x / kf;
            let add = term / kf;
            sum += add;
            if add.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        -EULER_GAMMA - x.ln() - sum
    } else {
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_positive() {
        assert!(exp_integral_e1(0.0).is_err());
        assert!(exp_integral_e1(-1.0).is_err());
        assert!(exp_integral_e1(f64::NAN).is_err());
    }

    #[test]
    fn reference_values() {
        // Abramowitz & Stegun Table 5.1.
        let cases = [
            (0.5, 0.559_773_594_776_160_8),
            (1.0, 0.219_383_934_395_520_3),
            (2.0, 0.048_900_510_708_061_1),
            (5.0, 0.001_148_295_591_275_3),
        ];
        for (x, want) in cases {
            let got = exp_integral_e1(x).unwrap();
            assert!(((got - want) / want).abs() < 1e-12, "E1({x}) = {got}");
        }
    }

    #[test]
    fn branches_agree_at_switch_point() {
        let lo = e1_unchecked(1.0);
        let hi = e1_unchecked(1.0 + 1e-12);
        assert!(((lo - hi) / lo).abs() < 1e-10);
    }

    #[test]
    fn large_argument_asymptote() {
        for x in [50.0, 200.0, 600.0] {
            let ratio = e1_unchecked(x) * x * x.exp();
            // x e^x E1(x) = 1 - 1/x + 2/x^2 - ...
            assert!((ratio - 1.0).abs() < 1.1 / x);
        }
        let ratio = e1_unchecked(600.0) * 600.0 * 600f64.exp();
        assert!((ratio - 1.0).abs() < 2e-3);
    }

    #[test]
    fn strictly_decreasing() {
        let a = e1_unchecked(0.5);
        let b = e1_unchecked(1.0);
        let c = e1_unchecked(2.0);
        assert!(a > b && b > c);
    }
}
