//! Quadrature rules on the unit interval and the reference triangle.

/// A point/weight pair on the unit interval `[0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct LinePoint {
    pub t: f64,
    pub weight: f64,
}

/// A point/weight pair on the reference triangle `{(s, t): s, t >= 0, s + t <= 1}`.
/// Weights sum to the triangle area 1/2.
#[derive(Debug, Clone, Copy)]
pub struct TriPoint {
    pub s: f64,
    pub t: f64,
    pub weight: f64,
}

/// Gauss-Legendre rule with `n` points (1 ≤ n ≤ 5) mapped to `[0, 1]`.
pub fn gauss_line(n: usize) -> Vec<LinePoint> {
    let (x, w): (&[f64], &[f64]) = match n {
        1 => (&[0.0], &[2.0]),
        2 => (&[-0.577_350_269_189_625_8, 0.577_350_269_189_625_8], &[1.0, 1.0]),
        3 => (
            &[-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4],
            &[5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0],
        ),
        4 => (
            &[
                -0.861_136_311_594_052_6,
                -0.339_981_043_584_856_3,
                0.339_981_043_584_856_3,
                0.861_136_311_594_052_6,
            ],
            &[
                0.347_854_845_137_453_9,
                0.652_145_154_862_546_1,
                0.652_145_154_862_546_1,
                0.347_854_845_137_453_9,
            ],
        ),
        5 => (
            &[
                -0.906_179_845_938_664,
                -0.538_469_310_105_683,
                0.0,
                0.538_469_310_105_683,
                0.906_179_845_938_664,
            ],
            &[
                0.236_926_885_056_189_1,
                0.478_628_670_499_366_5,
                0.568_888_888_888_888_9,
                0.478_628_670_499_366_5,
                0.236_926_885_056_189_1,
            ],
        ),
        _ => panic!("gauss_line supports 1..=5 points, got {n}"),
    };
    x.iter()
        .zip(w)
        .map(|(&x, &w)| LinePoint {
            t: 0.5 * (x + 1.0),
            weight: 0.5 * w,
        })
        .collect()
}

/// Six-point rule exact for polynomials of total degree 4.
pub fn triangle_degree4() -> Vec<TriPoint> {
    const A1: f64 = 0.445_948_490_915_965;
    const B1: f64 = 0.108_103_018_168_070;
    const W1: f64 = 0.223_381_589_678_011;
    const A2: f64 = 0.091_576_213_509_771;
    const B2: f64 = 0.816_847_572_980_459;
    const W2: f64 = 0.109_951_743_655_322;
    let mut pts = Vec::with_capacity(6);
    for (a, b, w) in [(A1, B1, W1), (A2, B2, W2)] {
        for (s, t) in [(a, a), (b, a), (a, b)] {
            pts.push(TriPoint {
                s,
                t,
                weight: 0.5 * w,
            });
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monomial_integral(p: u32, q: u32) -> f64 {
        // ∫_T s^p t^q = p! q! / (p + q + 2)!
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        fact(p) * fact(q) / fact(p + q + 2)
    }

    #[test]
    fn triangle_rule_is_exact_to_degree_four() {
        let rule = triangle_degree4();
        for p in 0..=4u32 {
            for q in 0..=(4 - p) {
                let approx: f64 = rule
                    .iter()
                    .map(|r| r.weight * r.s.powi(p as i32) * r.t.powi(q as i32))
                    .sum();
                assert!((approx - monomial_integral(p, q)).abs() < 1e-14, "s^{p} t^{q}");
            }
        }
    }

    #[test]
    fn line_rules_integrate_polynomials() {
        for n in 1..=5 {
            let rule = gauss_line(n);
            for deg in 0..(2 * n) {
                let approx: f64 = rule.iter().map(|p| p.weight * p.t.powi(deg as i32)).sum();
                assert!((approx - 1.0 / (deg as f64 + 1.0)).abs() < 1e-14);
            }
        }
    }
}
