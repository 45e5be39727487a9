use nodalab::dividing::{
    run_class_recursion, run_dividing, ClassModel, DividingConfig, SyntheticOracle,
};
use nodalab::doubling::Cube;
use nodalab::field::{ClosedForm, SolutionField};
use nodalab::lifted::{lift, SLAB_HALFWIDTH};
use nodalab::mesh::TriMesh;
use nodalab::nodal::{collar_decomposition_study, trace_zero_set};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn zero_set_ignores_scaling(
        a in -9.0f64..9.0,
        b in -9.0f64..9.0,
        d in -0.9f64..0.9,
        c in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3],
    ) {
        let mesh = TriMesh::rectangle([0.0, 0.0], [1.0, 1.0], 1.0 / 24.0);
        let vals: Vec<f64> = mesh.nodes.iter().map(|p| (a * p[0] + b * p[1]).sin() + d).collect();
        let scaled: Vec<f64> = vals.iter().map(|v| c * v).collect();
        let l1 = trace_zero_set(&mesh, &vals, false).unwrap().total_length;
        let l2 = trace_zero_set(&mesh, &scaled, false).unwrap().total_length;
        prop_assert!((l1 - l2).abs() <= 1e-9 * l1.max(1.0));
    }

    #[test]
    fn kappa_increases_with_a(i in 1u32..20, n in 1u32..4) {
        let lo = DividingConfig { a: 2 * i + 1, n, ..DividingConfig::default() };
        let hi = DividingConfig { a: 2 * i + 3, n, ..DividingConfig::default() };
        prop_assert!(lo.kappa() < hi.kappa());
        prop_assert!(hi.kappa() < 1.0);
    }

    #[test]
    fn recursion_stays_below_closed_form(
        i in 1u32..5,
        m in 2.0f64..2000.0,
        worst in any::<bool>(),
        gens in 1u32..16,
    ) {
        let cfg = DividingConfig { a: 2 * i + 1, ..DividingConfig::default() };
        let model = if worst { ClassModel::WorstCase } else { ClassModel::Halving };
        let (acc, _) = run_class_recursion(&cfg, model, m, gens).unwrap();
        prop_assert!(acc.within_bound(), "{} > {}", acc.series_total, acc.closed_form_total);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn subdivision_partitions_exactly(m in 2.0f64..64.0, kind in 0u8..3, gens in 1u32..3) {
        let oracle = match kind {
            0 => SyntheticOracle::Halving { m_q: m },
            1 => SyntheticOracle::WorstCase { m_q: m },
            _ => SyntheticOracle::Counterexample { m_q: m, layer: 2 },
        };
        let q = Cube { lo: [0.0; 3], side: 1.0 };
        let (tree, _) = run_dividing(&oracle, &q, &DividingConfig::default(), gens).unwrap();
        prop_assert!(tree.partition_exact());
    }

    #[test]
    fn sup_grows_with_the_ball(x in 0.2f64..0.8, y in 0.2f64..0.8, r in 0.02f64..0.15, grow in 1.05f64..2.0) {
        let lf = lift(
            SolutionField::closed_form(ClosedForm::SquareMode { k: 3, m: 2 }).unwrap(),
            SLAB_HALFWIDTH,
        )
        .unwrap();
        let small = lf.sup_on_ball(&lf.ball([x, y], r).unwrap()).unwrap();
        let big = lf.sup_on_ball(&lf.ball([x, y], r * grow).unwrap()).unwrap();
        prop_assert!(small <= big * (1.0 + 1e-9));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn collar_bands_tile_the_length(k in 1u32..5, m in 1u32..5, knob in 0.5f64..2.0) {
        let f = SolutionField::closed_form(ClosedForm::SquareMode { k, m }).unwrap();
        let st = collar_decomposition_study(&f, knob, 1.0 / 32.0).unwrap();
        let bands: f64 = st.bands.iter().map(|b| b.length).sum();
        prop_assert!((bands - st.collar_length).abs() <= 1e-12 * st.total_length.max(1.0));
        prop_assert!((st.interior_length + st.collar_length - st.total_length).abs() <= 1e-9 * st.total_length.max(1.0));
        for w in st.bands.windows(2) {
            prop_assert!((w[0].hi - w[1].lo).abs() <= 1e-12);
        }
    }
}
