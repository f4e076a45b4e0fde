mod common;

use std::f64::consts::PI;

use common::{fd_gradient, perturbed_cap_in_s3, perturbed_disk, rel, rel_err};
use proptest::prelude::*;
use viscoflow::ambient::{make_radial_cutoff_field, standard_dictionary};
use viscoflow::energy::{
    criticality_norm, criticality_with_gradient, energy, finsler_norm, gradient, VariationField,
};
use viscoflow::mesh::constructions::{equatorial_disk, flat_disk, round_sphere};
use viscoflow::mesh::geometry::area_gradient;
use viscoflow::Error;

#[test]
fn closed_form_energies() {
    let d = flat_disk(5).unwrap();
    let e = energy(&d, 0.1).unwrap();
    assert!(rel(e.total, PI + 0.1 * 2.0 * PI) < 5e-3, "{e:?}");
    let s = round_sphere(4, 1.0).unwrap();
    assert!(rel(energy(&s, 0.5).unwrap().total, 5.0 * PI) < 0.05);
    let p = perturbed_disk(2, 0.2, 3);
    let e0 = energy(&p, 0.0).unwrap();
    assert_eq!(e0.total, e0.area_term);
    assert_eq!(e0.total, e0.area_term + e0.boundary_term + e0.bending_term);
}

#[test]
fn gradient_matches_finite_differences() {
    let sigmas = [0.0, 0.05, 0.2];
    let mut cases: Vec<_> = (0..10).map(|seed| perturbed_disk(2, 0.25, seed)).collect();
    cases.push(perturbed_cap_in_s3(2, 0.25, 99));
    for (c, imm) in cases.iter().enumerate() {
        let fd = fd_gradient(imm, &sigmas, 1e-5);
        for (k, &s) in sigmas.iter().enumerate() {
            let g = gradient(imm, s).unwrap();
            assert!(g.admissible);
            let err = rel_err(&g.w, &fd[k]);
            assert!(err <= 1e-4, "case {c}, sigma {s}: relative error {err:e}");
        }
    }
}

#[test]
fn sphere_equilibrium_radius_has_no_radial_gradient() {
    let sigma = 0.1;
    let unit = round_sphere(4, 1.0).unwrap();
    let reference = common::l2(&area_gradient(&unit));
    let s = round_sphere(4, 2f64.sqrt() * sigma).unwrap();
    let g = gradient(&s, sigma).unwrap();
    // component of the gradient along the unit radial direction of ℝ^{3V}
    let mut radial = 0.0;
    let mut norm2: f64 = 0.0;
    for v in 0..s.n_vertices() {
        let p = s.point(v);
        let r = common::l2(p);
        radial += g.vector(v).iter().zip(p).map(|(gc, pc)| gc * pc / r).sum::<f64>();
        norm2 += 1.0;
    }
    let radial = radial.abs() / norm2.sqrt();
    assert!(radial <= 1e-3 * reference, "radial {radial:e} vs reference {reference:e}");
}

#[test]
fn flat_patch_gradient_has_no_normal_component() {
    let d = flat_disk(3).unwrap();
    let g = gradient(&d, 0.0).unwrap();
    for v in 0..d.n_vertices() {
        if !d.mesh.is_boundary_vertex(v) {
            assert!(g.vector(v)[2].abs() <= 1e-10);
        }
    }
}

#[test]
fn finsler_norm_examples() {
    let d = flat_disk(3).unwrap();
    let v = [0.3, -0.4, 1.2];
    let w: Vec<f64> = (0..d.n_vertices()).flat_map(|_| v).collect();
    let field = VariationField::new(&d, w).unwrap();
    let n = finsler_norm(&d, &field).unwrap();
    assert!(rel(n, 1.3) <= 1e-9);
    let zero = VariationField::new(&d, vec![0.0; d.positions.len()]).unwrap();
    assert_eq!(finsler_norm(&d, &zero).unwrap(), 0.0);
    let p = perturbed_disk(3, 0.2, 5);
    let g = gradient(&p, 0.1).unwrap();
    let a = finsler_norm(&p, &g).unwrap();
    let b = finsler_norm(&p, &g.scaled(2.0)).unwrap();
    assert!(rel(b, 2.0 * a) <= 1e-12);
}

#[test]
fn criticality_examples() {
    let p = perturbed_disk(3, 0.2, 7);
    let center = vec![0.0; 3];
    let dict = standard_dictionary(&p.ambient, p.constraint.as_ref(), (&center, 1.0));
    let c1 = criticality_norm(&p, 0.1, &dict).unwrap();
    assert!(c1 > 0.0);
    // doubling every field leaves the ratio unchanged
    let doubled: Vec<_> = dict.iter().map(|x| x.scaled(2.0)).collect();
    let c2 = criticality_norm(&p, 0.1, &doubled).unwrap();
    assert!(rel(c2, c1) <= 1e-12);
    let zero = VariationField::projected(&p, vec![0.0; p.positions.len()]);
    assert_eq!(criticality_with_gradient(&p, &zero, &dict).unwrap(), 0.0);
    assert_eq!(criticality_norm(&p, 0.1, &[]), Err(Error::EmptyDictionary));
    // a radial field reaching the boundary is not tangent to the sphere
    let bad = make_radial_cutoff_field(&center, 1.5, 2.0).unwrap();
    assert!(matches!(criticality_norm(&p, 0.1, &[bad]), Err(Error::FieldNotTangent { index: 0, .. })));
    let eq = equatorial_disk(3).unwrap();
    assert!(criticality_norm(&eq, 0.0, &dict).unwrap() < 1e-10);
}

fn rotation(a: f64, b: f64) -> Vec<Vec<f64>> {
    let (ca, sa, cb, sb) = (a.cos(), a.sin(), b.cos(), b.sin());
    // R = Rz(a) Rx(b)
    vec![vec![ca, -sa * cb, sa * sb], vec![sa, ca * cb, -ca * sb], vec![0.0, sb, cb]]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn monotone_in_sigma(seed in 0u64..1000, s1 in 0.001..0.5f64, ds in 0.001..0.5f64) {
        let p = perturbed_disk(2, 0.3, seed);
        let (a, b) = (energy(&p, s1).unwrap(), energy(&p, s1 + ds).unwrap());
        prop_assert!(b.total >= a.total);
        prop_assert!(b.sigma_derivative >= a.sigma_derivative);
        prop_assert!(a.entropy() >= 0.0);
    }

    #[test]
    fn energy_scaling_law(seed in 0u64..1000, k in 0usize..3) {
        let lambda = [0.5, 2.0, 10.0][k];
        let p = perturbed_disk(2, 0.3, seed);
        let id = rotation(0.0, 0.0);
        let q = p.transformed(lambda, &id, &[0.0; 3]);
        let a = energy(&p, 0.1).unwrap().total;
        let b = energy(&q, 0.1 * lambda).unwrap().total;
        prop_assert!(rel(b, lambda * lambda * a) <= 1e-10);
    }

    #[test]
    fn gradient_is_rotation_equivariant(seed in 0u64..1000, a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let mut p = perturbed_disk(2, 0.3, seed);
        p.constraint = None;
        let r = rotation(a, b);
        let q = p.transformed(1.0, &r, &[0.3, -0.2, 0.1]);
        let g = gradient(&p, 0.2).unwrap();
        let gq = gradient(&q, 0.2).unwrap();
        let mut rotated = vec![0.0; g.w.len()];
        for v in 0..p.n_vertices() {
            for i in 0..3 {
                rotated[v * 3 + i] = (0..3).map(|j| r[i][j] * g.w[v * 3 + j]).sum();
            }
        }
        prop_assert!(rel_err(&gq.w, &rotated) <= 1e-8);
    }
}
