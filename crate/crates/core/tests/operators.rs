use lsw_core::lattice::{apply_a, apply_b, apply_b_star, inner};
use lsw_core::{Boundary, Complex, ComplexSeq};
use proptest::prelude::*;

fn seq(max_radius: usize) -> impl Strategy<Value = ComplexSeq> {
    (0..=max_radius).prop_flat_map(|r| {
        prop::collection::vec((-1e3..1e3f64, -1e3..1e3f64), 2 * r + 1).prop_map(move |v| {
            ComplexSeq::from_values(r, v.into_iter().map(|(a, b)| Complex::new(a, b)).collect()).unwrap()
        })
    })
}

fn pair(max_radius: usize) -> impl Strategy<Value = (ComplexSeq, ComplexSeq)> {
    seq(max_radius).prop_flat_map(|u| {
        let r = u.radius();
        let w = prop::collection::vec((-1e3..1e3f64, -1e3..1e3f64), 2 * r + 1).prop_map(move |v| {
            ComplexSeq::from_values(r, v.into_iter().map(|(a, b)| Complex::new(a, b)).collect()).unwrap()
        });
        (Just(u), w)
    })
}

fn boundary() -> impl Strategy<Value = Boundary> {
    prop_oneof![Just(Boundary::Zero), Just(Boundary::Periodic)]
}

proptest! {
    #[test]
    fn b_star_is_the_adjoint((u, w) in pair(20), b in boundary()) {
        let lhs = inner(&apply_b(&u, b), &w).unwrap();
        let rhs = inner(&u, &apply_b_star(&w, b)).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + u.norm() * w.norm()));
    }

    #[test]
    fn a_factors_on_the_periodic_ring(u in seq(20)) {
        let b = Boundary::Periodic;
        let lhs = apply_a(&u, b);
        let rhs = apply_b_star(&apply_b(&u, b), b);
        prop_assert!(lhs.sub(&rhs).unwrap().norm() <= 1e-12 * (1.0 + u.norm()));
    }

    #[test]
    fn a_factors_away_from_the_left_end(u in seq(20)) {
        let b = Boundary::Zero;
        let lhs = apply_a(&u, b);
        let rhs = apply_b_star(&apply_b(&u, b), b);
        let r = u.radius() as i64;
        for m in (-r + 1)..=r {
            prop_assert!((lhs.get(m) - rhs.get(m)).norm() <= 1e-12 * (1.0 + u.norm()));
        }
        prop_assert!((lhs.get(-r) - rhs.get(-r) - u.get(-r)).norm() <= 1e-12 * (1.0 + u.norm()));
    }

    #[test]
    fn energy_identity_and_bound(u in seq(20), b in boundary()) {
        let q = inner(&apply_a(&u, b), &u).unwrap();
        let bu = apply_b(&u, b).norm_sq();
        let edge = if b == Boundary::Zero { u.get(-(u.radius() as i64)).norm_sqr() } else { 0.0 };
        let scale = 1e-12 * (1.0 + u.norm_sq());
        prop_assert!(q.im.abs() <= scale);
        prop_assert!(q.re >= -scale);
        prop_assert!((q.re - bu - edge).abs() <= scale);
        prop_assert!(bu <= 4.0 * u.norm_sq() + scale);
    }
}

#[test]
fn stencils_on_a_unit_impulse() {
    let e0 = ComplexSeq::unit(3, 0, Complex::new(1.0, 0.0));
    let a = apply_a(&e0, Boundary::Zero);
    let want = [0.0, 0.0, -1.0, 2.0, -1.0, 0.0, 0.0];
    for (z, w) in a.values().iter().zip(want) {
        assert_eq!(*z, Complex::new(w, 0.0));
    }
    let b = apply_b(&e0, Boundary::Zero);
    assert_eq!(b.get(-1), Complex::new(1.0, 0.0));
    assert_eq!(b.get(0), Complex::new(-1.0, 0.0));
    let bs = apply_b_star(&e0, Boundary::Zero);
    assert_eq!(bs.get(1), Complex::new(1.0, 0.0));
    assert_eq!(bs.get(0), Complex::new(-1.0, 0.0));
}

#[test]
fn periodic_wraps_at_the_edges() {
    let e = ComplexSeq::unit(2, 2, Complex::new(1.0, 0.0));
    let a = apply_a(&e, Boundary::Periodic);
    assert_eq!(a.get(-2), Complex::new(-1.0, 0.0));
    assert_eq!(apply_a(&e, Boundary::Zero).get(-2), Complex::new(0.0, 0.0));
}
