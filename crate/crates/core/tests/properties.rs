use gltorus::bifurcation::{coeff_a, coeff_epsilon, coeff_psi};
use gltorus::bundle::{coulomb_project, gauge_by_angle};
use gltorus::energy::{energy, gradient};
use gltorus::lattice::{codifferential_1_real, codifferential_2, exterior_d, gradient0, ksum};
use gltorus::spectral::{laplacian0_spectrum, GreenOperator};
use gltorus::stability::l_apply;
use gltorus::*;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn real_field(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn random_tangent(lat: &LatticeTorus, seed: u64) -> Tangent {
    let c = Configuration::random(lat, 1.0, 1.0, seed);
    Tangent { a: c.a, psi: c.phi }
}

fn lattice() -> impl Strategy<Value = LatticeTorus> {
    (4usize..9, 4usize..9, 0.5f64..2.0, 0.5f64..2.0, 0u32..3)
        .prop_map(|(n1, n2, l1, l2, d)| LatticeTorus::new(n1, n2, l1, l2, d).unwrap())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn codifferentials_are_adjoint_to_d(lat in lattice(), seed in any::<u64>()) {
        let n = lat.sites();
        let f = real_field(n, seed);
        let a = random_tangent(&lat, seed ^ 1).a;
        let lhs = lat.cell() * ksum(codifferential_1_real(&lat, &a).unwrap().iter().zip(&f).map(|(x, y)| x * y));
        let rhs = a.dot(&lat, &gradient0(&lat, &f));
        prop_assert!(rel(lhs, rhs) < 1e-12);

        let b = exterior_d(&lat, &random_tangent(&lat, seed ^ 2).a).unwrap();
        let lhs = exterior_d(&lat, &a).unwrap().dot(&lat, &b);
        let rhs = a.dot(&lat, &codifferential_2(&lat, &b).unwrap());
        prop_assert!(rel(lhs, rhs) < 1e-12);
    }

    #[test]
    fn d_squares_to_zero(lat in lattice(), seed in any::<u64>()) {
        let f = real_field(lat.sites(), seed);
        let dd = exterior_d(&lat, &gradient0(&lat, &f)).unwrap();
        prop_assert!(dd.values.iter().all(|v| v.abs() < 1e-12 * lat.sites() as f64 / lat.cell()));
    }

    #[test]
    fn flux_is_quantized_for_any_connection(lat in lattice(), seed in any::<u64>()) {
        let rc = ReferenceConnection::new(&lat);
        let cfg = Configuration::random(&lat, 3.0, 1.0, seed);
        let want = 2.0 * std::f64::consts::PI * lat.degree as f64;
        prop_assert!((cfg.flux(&lat, &rc) - want).abs() < 1e-10);
    }

    #[test]
    fn energy_is_gauge_invariant_and_gradient_equivariant(lat in lattice(), seed in any::<u64>(), tau in 0.1f64..20.0, kappa in 0.2f64..2.0) {
        let rc = ReferenceConnection::new(&lat);
        let cpl = Coupling::new(tau, kappa).unwrap();
        let cfg = Configuration::random(&lat, 1.0, 1.5, seed);
        let chi: Vec<f64> = real_field(lat.sites(), seed ^ 7).iter().map(|v| 4.0 * v).collect();
        let g_cfg = gauge_by_angle(&lat, &cfg, &chi);
        let e0 = energy(&lat, &rc, &cfg, &cpl).unwrap().total;
        let e1 = energy(&lat, &rc, &g_cfg, &cpl).unwrap().total;
        prop_assert!(rel(e0, e1) < 1e-12);

        let gr0 = gradient(&lat, &rc, &cfg, &cpl).unwrap();
        let gr1 = gradient(&lat, &rc, &g_cfg, &cpl).unwrap();
        let scale = gr0.norm(&lat).max(1.0);
        prop_assert!(gr1.a.sub(&gr0.a).norm_l2(&lat) < 1e-10 * scale);
        for x in 0..lat.sites() {
            let phase = g_cfg.phi.values[x] / cfg.phi.values[x];
            prop_assert!((gr1.psi.values[x] - phase * gr0.psi.values[x]).norm() < 1e-10 * scale);
        }
    }

    #[test]
    fn coulomb_projection_is_idempotent_and_energy_preserving(lat in lattice(), seed in any::<u64>()) {
        let rc = ReferenceConnection::new(&lat);
        let cpl = Coupling::new(3.0, 0.9).unwrap();
        let cfg = Configuration::random(&lat, 1.0, 1.0, seed);
        let p1 = coulomb_project(&lat, &cfg).unwrap();
        let p2 = coulomb_project(&lat, &p1).unwrap();
        prop_assert!(p2.a.sub(&p1.a).norm_l2(&lat) < 1e-10);
        prop_assert!(p2.phi.sub(&p1.phi).norm_l2(&lat) < 1e-10 * p1.phi.norm_l2(&lat));
        let d = codifferential_1_real(&lat, &p1.a).unwrap();
        prop_assert!(d.iter().all(|v| v.abs() < 1e-9));
        let e0 = energy(&lat, &rc, &cfg, &cpl).unwrap().total;
        let e1 = energy(&lat, &rc, &p1, &cpl).unwrap().total;
        prop_assert!(rel(e0, e1) < 1e-12);
    }

    #[test]
    fn bochner_laplacian_is_self_adjoint_and_nonnegative(lat in lattice(), seed in any::<u64>()) {
        let rc = ReferenceConnection::new(&lat);
        let cfg = Configuration::random(&lat, 1.0, 1.0, seed);
        let links = Links::new(&lat, &rc, &cfg.a);
        let u = random_tangent(&lat, seed ^ 3).psi;
        let v = random_tangent(&lat, seed ^ 4).psi;
        let lu = ScalarField { values: links.laplacian(&u.values) };
        let lv = ScalarField { values: links.laplacian(&v.values) };
        let (a, b) = (lu.hdot(&lat, &v), u.hdot(&lat, &lv));
        prop_assert!((a - b).norm() < 1e-12 * a.norm().max(1.0));
        prop_assert!(lu.dot(&lat, &u) >= -1e-12);
    }

    #[test]
    fn complex_structure_squares_to_minus_one_and_is_isometric(lat in lattice(), seed in any::<u64>()) {
        let v = random_tangent(&lat, seed);
        let iv = v.complex_structure();
        let iiv = iv.complex_structure();
        prop_assert!(iiv.a.comp1.iter().zip(&v.a.comp1).all(|(x, y)| *x == -*y));
        prop_assert!(iiv.a.comp2.iter().zip(&v.a.comp2).all(|(x, y)| *x == -*y));
        prop_assert!(iiv.psi.values.iter().zip(&v.psi.values).all(|(x, y)| *x == -*y));
        prop_assert!(rel(iv.norm(&lat), v.norm(&lat)) < 1e-14);
        prop_assert!(iv.dot(&lat, &v).abs() < 1e-12 * v.norm(&lat).powi(2));
    }

    #[test]
    fn l_operator_intertwines_the_complex_structures(lat in lattice(), seed in any::<u64>()) {
        let rc = ReferenceConnection::new(&lat);
        let cfg = Configuration::random(&lat, 1.0, 1.0, seed);
        let v = random_tangent(&lat, seed ^ 5);
        let (f, xi) = l_apply(&lat, &rc, &cfg, &v).unwrap();
        let (fi, xii) = l_apply(&lat, &rc, &cfg, &v.complex_structure()).unwrap();
        let i = Complex64::new(0.0, 1.0);
        let scale = f.norm_l2(&lat) + xi.norm_l2(&lat);
        prop_assert!(fi.sub(&f.scale(i)).norm_l2(&lat) < 1e-12 * scale.max(1.0));
        prop_assert!(xii.sub(&xi.scale(i)).norm_l2(&lat) < 1e-12 * scale.max(1.0));
    }

    #[test]
    fn branch_coefficients_are_phase_equivariant(theta in 0.0f64..std::f64::consts::TAU, level in 1usize..3) {
        let lat = LatticeTorus::unit(8, 1).unwrap();
        let rc = ReferenceConnection::new(&lat);
        let kappa = 0.8;
        let spec = laplacian0_spectrum(&lat, &rc, 3).unwrap();
        let cluster = spec.cluster_sections(level).unwrap();
        let phi = cluster[0].clone();
        let green = GreenOperator::new(&lat, &rc, spec.cluster_value(level).unwrap(), &cluster).unwrap();
        let u = Complex64::from_polar(1.0, theta);
        let phi_u = phi.scale(u);
        let (a0, _) = coeff_a(&lat, &rc, &phi).unwrap();
        let (a1, _) = coeff_a(&lat, &rc, &phi_u).unwrap();
        prop_assert!(a1.sub(&a0).norm_l2(&lat) < 1e-12 * a0.norm_l2(&lat).max(1.0));
        let e0 = coeff_epsilon(&lat, &rc, &phi, kappa).unwrap();
        let e1 = coeff_epsilon(&lat, &rc, &phi_u, kappa).unwrap();
        prop_assert!(rel(e0, e1) < 1e-12);
        let p0 = coeff_psi(&lat, &rc, &phi, &a0, kappa, &green).unwrap();
        let p1 = coeff_psi(&lat, &rc, &phi_u, &a1, kappa, &green).unwrap();
        prop_assert!(p1.sub(&p0.scale(u)).norm_l2(&lat) < 1e-10 * p0.norm_l2(&lat).max(1.0));
        for s in &cluster {
            prop_assert!(s.hdot(&lat, &p0).norm() < 1e-10);
        }
    }
}
