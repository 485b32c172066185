#![allow(dead_code)]

use std::f64::consts::PI;

use stokeshape::control::{interpolate_control, AnalyticControl, ControlFunction, ControlGrid, Degree, Profile};
use stokeshape::data::{BoundaryDatum, ProblemData, ScalarField, VectorField};
use stokeshape::fem::{MixedField, TaylorHoodSpace};
use stokeshape::geometry::{map_forward, map_quantities, Mat2};
use stokeshape::harness::fit_order;
use stokeshape::sensitivity::{solve_second_sensitivity, solve_sensitivity};
use stokeshape::state::{reference_errors, solve_state};

/// Manufactured flow from the stream function `eˣ (1 - y)³` with
/// pressure `y cos(πx)`, `ν = 1`, `η = 1`.
pub fn mms_velocity(p: [f64; 2]) -> ([f64; 2], Mat2) {
    let [x, y] = p;
    let (e, c) = (x.exp(), 1.0 - y);
    let u = [-3.0 * e * c * c, -e * c * c * c];
    let g = Mat2::new(-3.0 * e * c * c, 6.0 * e * c, -e * c * c * c, 3.0 * e * c * c);
    (u, g)
}

pub fn mms_pressure(p: [f64; 2]) -> f64 {
    p[1] * (PI * p[0]).cos()
}

pub fn mms_force(p: [f64; 2]) -> [f64; 2] {
    let [x, y] = p;
    let (e, c) = (x.exp(), 1.0 - y);
    let (u, _) = mms_velocity(p);
    [
        3.0 * e * (c * c + 2.0) + u[0] - PI * y * (PI * x).sin(),
        e * (c * c * c + 6.0 * c) + u[1] + (PI * x).cos(),
    ]
}

pub fn mms_data() -> ProblemData {
    let exact = |p: [f64; 2]| mms_velocity(p).0;
    ProblemData {
        eta: ScalarField::constant(1.0),
        nu: ScalarField::constant(1.0),
        force: VectorField::new(mms_force, |_| Mat2::ZERO, |_| [Mat2::ZERO; 2]),
        g_d: BoundaryDatum::new(exact),
        g_n: BoundaryDatum::new(|p| {
            let (_, g) = mms_velocity(p);
            [g.0[0][0] - mms_pressure(p), g.0[1][0]]
        }),
        g_wall: Some(BoundaryDatum::new(exact)),
    }
}

/// Exact reference-domain pair `(ũ∘T, ∇(ũ∘T))` and `p̃∘T`.
pub fn pulled_back_exact<'a, P: Profile + ?Sized>(
    q: &'a P,
) -> (
    impl Fn([f64; 2]) -> ([f64; 2], Mat2) + Sync + 'a,
    impl Fn([f64; 2]) -> f64 + Sync + 'a,
) {
    let u = move |x: [f64; 2]| {
        let (v, g) = mms_velocity(map_forward(q, x));
        (v, g * map_quantities(q, x).unwrap().dt)
    };
    let p = move |x: [f64; 2]| mms_pressure(map_forward(q, x));
    (u, p)
}

pub fn mms_orders(control: &AnalyticControl, degree: Degree, sizes: &[usize]) -> (f64, f64) {
    let data = mms_data();
    let (mut h, mut eu, mut ep) = (vec![], vec![], vec![]);
    for &n in sizes {
        let space = TaylorHoodSpace::with_defaults(n).unwrap();
        let q = control.interpolate(&ControlGrid::uniform(n).unwrap(), degree);
        let s = solve_state(&q, &data, &space).unwrap();
        let (ue, pe) = pulled_back_exact(&q);
        let (a, b) = reference_errors(&space, &s.field, ue, pe).unwrap();
        h.push(space.mesh().h());
        eu.push(a);
        ep.push(b);
    }
    (fit_order(&h, &eu).unwrap(), fit_order(&h, &ep).unwrap())
}

pub const STEPS: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

pub fn distance(a: &MixedField, b: &MixedField, terms: &[(f64, &MixedField)]) -> f64 {
    let mut acc = 0.0;
    for (i, (x, y)) in a.velocity.iter().zip(&b.velocity).enumerate() {
        let r = x - y - terms.iter().map(|(c, f)| c * f.velocity[i]).sum::<f64>();
        acc += r * r;
    }
    for (i, (x, y)) in a.pressure.iter().zip(&b.pressure).enumerate() {
        let r = x - y - terms.iter().map(|(c, f)| c * f.pressure[i]).sum::<f64>();
        acc += r * r;
    }
    acc.sqrt()
}

pub fn varying_data() -> ProblemData {
    ProblemData {
        eta: ScalarField::new(
            |p| 1.0 + p[0] * p[1] * p[1],
            |p| [p[1] * p[1], 2.0 * p[0] * p[1]],
            |p| Mat2::new(0.0, 2.0 * p[1], 2.0 * p[1], 2.0 * p[0]),
        ),
        nu: ScalarField::new(
            |p| 1.0 + 0.5 * p[1] * p[1],
            |p| [0.0, p[1]],
            |_| Mat2::new(0.0, 0.0, 0.0, 1.0),
        ),
        ..ProblemData::default()
    }
}

pub fn taylor_slopes(data: &ProblemData) -> (f64, f64) {
    let n = 8;
    let space = TaylorHoodSpace::with_defaults(n).unwrap();
    let grid = ControlGrid::uniform(n).unwrap();
    let q = AnalyticControl::parabolic().interpolate(&grid, Degree::Linear);
    let dq: ControlFunction = interpolate_control(|x| 0.3 * (std::f64::consts::PI * x).sin().powi(2), &grid, Degree::Linear);
    let s = solve_state(&q, data, &space).unwrap();
    let d = solve_sensitivity(&q, &dq, &s, data, &space).unwrap();
    let dd = solve_second_sensitivity(&q, &dq, &dq, &s, &d, &d, data, &space).unwrap();
    let (mut r1, mut r2) = (vec![], vec![]);
    for &t in &STEPS {
        let qt = q.axpy(t, &dq).unwrap();
        let st = solve_state(&qt, data, &space).unwrap();
        r1.push(distance(&st.field, &s.field, &[(t, &d.field)]));
        r2.push(distance(&st.field, &s.field, &[(t, &d.field), (0.5 * t * t, &dd.field)]));
    }
    (fit_order(&STEPS, &r1).unwrap(), fit_order(&STEPS, &r2).unwrap())
}
