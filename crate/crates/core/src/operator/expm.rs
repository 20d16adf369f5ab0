//! Matrix exponential by scaling and squaring with diagonal Padé
//! approximants of degree 3..13 (Higham's 2005 selection thresholds).

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{ComplexMatrix, ONE};

#[allow(clippy::excessive_precision)]
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// `e^{-i h dt}`. `h` need not be Hermitian (the trajectory solver passes
/// the non-Hermitian effective Hamiltonian).
pub fn expm_propagator(h: &ComplexMatrix, dt: f64) -> ComplexMatrix {
    expm(&h.scaled(Complex64::new(0.0, -dt)))
}

/// General complex matrix exponential.
pub fn expm(a: &ComplexMatrix) -> ComplexMatrix {
    let n = a.dim();
    let norm = a.norm_1();
    if norm == 0.0 {
        return ComplexMatrix::identity(n);
    }
    for &(m, theta) in &THETA {
        if norm <= theta {
            let (u, v) = match m {
                3 => pade_low(a, &B3),
                5 => pade_low(a, &B5),
                7 => pade_low(a, &B7),
                _ => pade_low(a, &B9),
            };
            return solve_pade(&u, &v);
        }
    }
    let s = (norm / THETA_13).log2().ceil().max(0.0) as i32;
    let scaled = a.scaled(Complex64::new(0.5f64.powi(s), 0.0));
    let (u, v) = pade13(&scaled);
    let mut r = solve_pade(&u, &v);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

fn lincomb(terms: &[(f64, &ComplexMatrix)], n: usize) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(n);
    for (c, m) in terms {
        out.add_scaled_mut(m, Complex64::new(*c, 0.0));
    }
    out
}

/// Odd/even split of the degree-m Padé numerator for m ≤ 9.
fn pade_low(a: &ComplexMatrix, b: &[f64]) -> (ComplexMatrix, ComplexMatrix) {
    let n = a.dim();
    let id = ComplexMatrix::identity(n);
    let a2 = a * a;
    let mut powers = vec![id, a2.clone()];
    while powers.len() * 2 < b.len() {
        let next = powers.last().unwrap() * &a2;
        powers.push(next);
    }
    let mut u = ComplexMatrix::zeros(n);
    let mut v = ComplexMatrix::zeros(n);
    for (k, p) in powers.iter().enumerate() {
        v.add_scaled_mut(p, Complex64::new(b[2 * k], 0.0));
        if 2 * k + 1 < b.len() {
            u.add_scaled_mut(p, Complex64::new(b[2 * k + 1], 0.0));
        }
    }
    (a * &u, v)
}

fn pade13(a: &ComplexMatrix) -> (ComplexMatrix, ComplexMatrix) {
    let n = a.dim();
    let b = &B13;
    let id = ComplexMatrix::identity(n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = lincomb(&[(b[13], &a6), (b[11], &a4), (b[9], &a2)], n);
    let mut u = &a6 * &inner_u;
    u.add_scaled_mut(&lincomb(&[(b[7], &a6), (b[5], &a4), (b[3], &a2), (b[1], &id)], n), ONE);
    let u = a * &u;
    let inner_v = lincomb(&[(b[12], &a6), (b[10], &a4), (b[8], &a2)], n);
    let mut v = &a6 * &inner_v;
    v.add_scaled_mut(&lincomb(&[(b[6], &a6), (b[4], &a4), (b[2], &a2), (b[0], &id)], n), ONE);
    (u, v)
}

/// Solves (V − U) R = (V + U).
fn solve_pade(u: &ComplexMatrix, v: &ComplexMatrix) -> ComplexMatrix {
    let n = u.dim();
    let p = v + u;
    let q = v - u;
    let qm = DMatrix::from_fn(n, n, |i, j| q[(i, j)]);
    let pm = DMatrix::from_fn(n, n, |i, j| p[(i, j)]);
    let r = qm
        .lu()
        .solve(&pm)
        .expect("Padé denominator is nonsingular for the selected degree");
    ComplexMatrix::from_fn(n, |i, j| r[(i, j)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{annihilation, kron, sigma_x, sigma_y, sigma_z, ZERO};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_generator_is_identity() {
        let u = expm_propagator(&ComplexMatrix::zeros(3), 0.7);
        assert_eq!(u, ComplexMatrix::identity(3));
    }

    #[test]
    fn rabi_half_period() {
        let u = expm_propagator(&sigma_x(), std::f64::consts::PI);
        let minus_id = ComplexMatrix::identity(2).scaled(c(-1.0, 0.0));
        assert!(u.max_abs_diff(&minus_id) < 1e-8);
    }

    #[test]
    fn diagonal_exponential() {
        let u = expm_propagator(&sigma_z(), 0.5);
        let expected = ComplexMatrix::diagonal(&[c(0.0, -0.5).exp(), c(0.0, 0.5).exp()]);
        assert!(u.max_abs_diff(&expected) < 1e-13);
    }

    /// Taylor series summed until terms vanish; oracle for moderate norms.
    fn taylor(a: &ComplexMatrix) -> ComplexMatrix {
        let n = a.dim();
        let mut term = ComplexMatrix::identity(n);
        let mut sum = term.clone();
        for k in 1..200 {
            term = (&term * a).scaled(c(1.0 / k as f64, 0.0));
            sum.add_scaled_mut(&term, ONE);
            if term.norm_1() < 1e-18 {
                break;
            }
        }
        sum
    }

    #[test]
    fn large_norm_matches_taylor_and_is_unitary() {
        let h = &kron(&sigma_y(), &annihilation(4).unwrap()) + &kron(&sigma_z(), &ComplexMatrix::identity(4));
        let h = h.hermitian_part();
        for dt in [0.01, 0.3, 2.0, 7.5] {
            let u = expm_propagator(&h, dt);
            let oracle = taylor(&h.scaled(c(0.0, -dt)));
            assert!(u.max_abs_diff(&oracle) < 1e-10, "dt={dt}");
            let uu = &u * &u.adjoint();
            assert!(uu.max_abs_diff(&ComplexMatrix::identity(8)) < 1e-8);
        }
    }

    #[test]
    fn non_hermitian_damped_mode() {
        // e^{-i(-iγ/2 n) t} = diag(e^{-γ k t / 2})
        let a = annihilation(5).unwrap();
        let n = &a.adjoint() * &a;
        let he = n.scaled(c(0.0, -0.3));
        let u = expm_propagator(&he, 2.0);
        for k in 0..5 {
            assert!((u[(k, k)].re - (-0.3 * k as f64 * 2.0).exp()).abs() < 1e-12);
            assert!(u[(k, k)].im.abs() < 1e-12);
        }
        assert_eq!(u[(0, 1)], ZERO);
    }

    proptest! {
        #[test]
        fn semigroup_property(
            vals in prop::collection::vec(-2.0f64..2.0, 32),
            dt1 in 0.0f64..3.0,
            dt2 in 0.0f64..3.0,
        ) {
            let g = ComplexMatrix::from_fn(4, |i, j| c(vals[2 * (4 * i + j)], vals[2 * (4 * i + j) + 1]));
            let h = g.hermitian_part();
            let lhs = &expm_propagator(&h, dt1) * &expm_propagator(&h, dt2);
            let rhs = expm_propagator(&h, dt1 + dt2);
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-8);
        }
    }
}
