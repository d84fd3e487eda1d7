use std::sync::Arc;

use proptest::prelude::*;
use stablab_core::coeff::CoefficientFamily;
use stablab_core::fem::{Field, NonlinearProblem, ScalarFn};
use stablab_core::mesh::{generate, DomainSpec, Mesh};
use stablab_core::stability::classify;

fn family(k: usize) -> CoefficientFamily<f64> {
    match k {
        0 => CoefficientFamily::laplacian(),
        1 => CoefficientFamily::p_laplacian(3.0).unwrap(),
        _ => CoefficientFamily::mean_curvature(),
    }
}

fn rotate(v: [f64; 2], th: f64) -> [f64; 2] {
    let (s, c) = th.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

fn lambda_min(mesh: Mesh<f64>, u: impl Fn(f64, f64) -> f64) -> f64 {
    let m = Arc::new(mesh);
    let p = NonlinearProblem::new(
        CoefficientFamily::p_laplacian(3.0).unwrap(),
        ScalarFn::bistable(),
        ScalarFn::Linear(0.5),
    );
    classify(&p, &Field::from_fn(m, u), None).unwrap().lambda_min
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // A(Rξ) = R A(ξ) Rᵀ: the operator commutes with rotations
    #[test]
    fn operator_is_rotation_equivariant(
        k in 0usize..3,
        r in 0.01f64..10.0,
        phi in 0.0f64..std::f64::consts::TAU,
        th in 0.0f64..std::f64::consts::TAU,
        v in prop::array::uniform2(-1.0f64..1.0),
    ) {
        let fam = family(k);
        let xi = [r * phi.cos(), r * phi.sin()];
        let a = fam.matrix_a(xi).unwrap();
        let b = fam.matrix_a(rotate(xi, th)).unwrap();
        let lhs = b.apply(rotate(v, th));
        let rhs = rotate(a.apply(v), th);
        let scale = a.eigenvalues()[1].max(1e-300);
        for j in 0..2 {
            prop_assert!((lhs[j] - rhs[j]).abs() <= 1e-12 * scale);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn stability_ignores_node_order(seed in any::<u64>()) {
        let mesh = generate::<f64>(&DomainSpec::disk(1.0, 0.2)).unwrap();
        let n = mesh.n_nodes();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = seed | 1;
        for i in (1..n).rev() {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            perm.swap(i, (s % (i as u64 + 1)) as usize);
        }
        let u = |x: f64, y: f64| 0.3 * x + 0.8 * (2.0 * y).cos();
        let base = lambda_min(mesh.clone(), u);
        let moved = lambda_min(mesh.permuted(&perm).unwrap(), u);
        prop_assert!((base - moved).abs() <= 1e-9 * base.abs().max(1.0));
    }

    #[test]
    fn stability_ignores_rigid_motions(
        th in 0.0f64..std::f64::consts::TAU,
        shift in prop::array::uniform2(-2.0f64..2.0),
    ) {
        let mesh = generate::<f64>(&DomainSpec::disk(1.0, 0.2)).unwrap();
        let u = |x: f64, y: f64| 0.3 * x + 0.8 * (2.0 * y).cos();
        let base = lambda_min(mesh.clone(), u);
        // the moved field is u composed with the inverse motion
        let back = move |x: f64, y: f64| {
            let p = rotate([x - shift[0], y - shift[1]], -th);
            u(p[0], p[1])
        };
        let moved = lambda_min(mesh.rigidly_moved(th, shift).unwrap(), back);
        prop_assert!((base - moved).abs() <= 1e-8 * base.abs().max(1.0));
    }
}
