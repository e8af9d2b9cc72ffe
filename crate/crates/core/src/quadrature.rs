//! Gauss rules on the reference triangle and interval.

use crate::scalar::Real;

/// Barycentric point and weight; weights sum to one (multiply by the element area).
#[derive(Clone, Copy, Debug)]
pub struct TriPoint<T> {
    pub bary: [T; 3],
    pub weight: T,
}

/// Rule exact for polynomials of total degree `degree` (1, 2 or 4).
pub fn triangle_rule<T: Real>(degree: usize) -> Vec<TriPoint<T>> {
    let p = |a: f64, b: f64, w: f64| TriPoint { bary: [T::lit(1.0 - a - b), T::lit(a), T::lit(b)], weight: T::lit(w) };
    match degree {
        0 | 1 => vec![p(1.0 / 3.0, 1.0 / 3.0, 1.0)],
        2 => vec![p(1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0), p(2.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0), p(1.0 / 6.0, 2.0 / 3.0, 1.0 / 3.0)],
        _ => {
            let (a, wa) = (0.445_948_490_915_965, 0.223_381_589_678_011);
            let (b, wb) = (0.091_576_213_509_771, 0.109_951_743_655_322);
            vec![
                p(a, a, wa),
                p(1.0 - 2.0 * a, a, wa),
                p(a, 1.0 - 2.0 * a, wa),
                p(b, b, wb),
                p(1.0 - 2.0 * b, b, wb),
                p(b, 1.0 - 2.0 * b, wb),
            ]
        }
    }
}

/// Two point Gauss rule on `[0, 1]`: `(abscissa, weight)`.
pub fn interval_gauss2<T: Real>() -> [(T, T); 2] {
    let d = 0.5 / 3f64.sqrt();
    [(T::lit(0.5 - d), T::lit(0.5)), (T::lit(0.5 + d), T::lit(0.5))]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate(rule: &[TriPoint<f64>], f: impl Fn(f64, f64) -> f64) -> f64 {
        // reference triangle (0,0),(1,0),(0,1) has area 1/2
        0.5 * rule.iter().map(|q| q.weight * f(q.bary[1], q.bary[2])).sum::<f64>()
    }

    #[test]
    fn rules_integrate_monomials_exactly() {
        // int x^a y^b over the reference triangle = a! b! / (a + b + 2)!
        let fact = |n: u32| (1..=n).product::<u32>().max(1) as f64;
        for (deg, rule) in [(1, triangle_rule::<f64>(1)), (2, triangle_rule(2)), (4, triangle_rule(4))] {
            for a in 0..=deg {
                for b in 0..=(deg - a) {
                    let exact = fact(a) * fact(b) / fact(a + b + 2);
                    let got = integrate(&rule, |x, y| x.powi(a as i32) * y.powi(b as i32));
                    assert!((got - exact).abs() < 1e-14, "degree {deg} monomial ({a},{b})");
                }
            }
        }
    }

    #[test]
    fn interval_rule_is_exact_for_cubics() {
        let q = interval_gauss2::<f64>();
        let got: f64 = q.iter().map(|(x, w)| w * x.powi(3)).sum();
        assert!((got - 0.25).abs() < 1e-15);
    }
}
