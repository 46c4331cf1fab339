mod common;

use common::random_graph;
use kfh::forest::{components, reboot, sample_forest};
use kfh::hierarchy::project_features;
use kfh::qselect::{direct, log_grid, spectrum_of, tikhonov_smooth, GraphSpectra};
use kfh::{build_hierarchy, AggMode, PartitionMatrix};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn laplacian_quadratic_form(n in 1usize..14, p in 0.0f64..1.0, seed in any::<u64>()) {
        let g = random_graph(n, p, 1, 0, seed);
        let l = g.laplacian();
        let x = g.node_features().column(0).into_owned();
        let quad = (x.transpose() * l.as_matrix() * &x)[(0, 0)];
        let direct: f64 = g.edges().iter().map(|&(i, j)| (x[i] - x[j]).powi(2)).sum();
        prop_assert!((quad - direct).abs() <= 1e-10 * (1.0 + direct));
        for row in l.as_matrix().row_iter() {
            prop_assert!(row.sum().abs() < 1e-12);
        }
    }

    #[test]
    fn spectral_and_direct_agree(n in 2usize..16, p in 0.1f64..0.9, q in 0.01f64..50.0, seed in any::<u64>()) {
        let g = random_graph(n, p, 2, 0, seed);
        let l = g.laplacian();
        let x = g.node_features();
        let s = spectrum_of(&l, x).unwrap();
        let r_direct = direct::residual_energy(&l, x, q).unwrap();
        let d_direct = direct::dirichlet_residual(&l, x, q).unwrap();
        let t_direct = direct::trace_smoother(&l, q).unwrap();
        prop_assert!(rel(s.residual_energy(q), r_direct) < 1e-8 || r_direct < 1e-14);
        prop_assert!(rel(s.dirichlet_residual(q), d_direct) < 1e-8 || d_direct < 1e-14);
        prop_assert!(rel(s.trace_smoother(q), t_direct) < 1e-8);
    }

    #[test]
    fn losses_and_df_are_monotone(n in 2usize..14, p in 0.1f64..0.9, f_e in 0usize..2, seed in any::<u64>()) {
        let g = random_graph(n, p, 2, f_e, seed);
        let spectra = GraphSpectra::of(&g).unwrap();
        let grid = log_grid(1e-2, 1e3, 31).unwrap();
        let recs: Vec<_> = grid.iter().map(|&q| spectra.record(q, 1.0).unwrap()).collect();
        for w in recs.windows(2) {
            prop_assert!(w[1].recon_node <= w[0].recon_node + 1e-12);
            prop_assert!(w[1].dir_node <= w[0].dir_node + 1e-12);
            prop_assert!(w[1].recon_edge <= w[0].recon_edge + 1e-12);
            prop_assert!(w[1].dir_edge <= w[0].dir_edge + 1e-12);
            prop_assert!(w[1].df_node >= w[0].df_node - 1e-12);
            prop_assert!(w[1].df_edge >= w[0].df_edge - 1e-12);
        }
    }

    #[test]
    fn smoothing_preserves_component_constants(n in 1usize..14, p in 0.0f64..0.6, q in 0.01f64..10.0, seed in any::<u64>()) {
        let g = random_graph(n, p, 1, 0, seed);
        let (comp, _) = g.connected_components();
        let x = DMatrix::from_fn(n, 1, |i, _| comp[i] as f64 * 1.5 - 2.0);
        let smoothed = tikhonov_smooth(&g.laplacian(), &x, q).unwrap();
        prop_assert!((smoothed - &x).amax() < 1e-9);
    }

    #[test]
    fn sampled_forests_are_valid(n in 1usize..20, p in 0.0f64..0.7, q in 0.05f64..5.0, seed in any::<u64>()) {
        let g = random_graph(n, p, 1, 0, seed);
        let f = sample_forest(&g, q, seed).unwrap();
        f.validate(&g).unwrap();
        let (_, c) = g.connected_components();
        prop_assert!(f.root_count() >= c.min(n));
        let coarser = reboot(&g, &f, q / 3.0, seed ^ 1).unwrap();
        coarser.validate(&g).unwrap();
        // Every component of a forest lies inside one graph component.
        let part = components(&f).unwrap();
        let (comp, _) = g.connected_components();
        for (u, v) in (0..n).flat_map(|u| (0..n).map(move |v| (u, v))) {
            if part.assignment()[u] == part.assignment()[v] {
                prop_assert_eq!(comp[u], comp[v]);
            }
        }
    }

    #[test]
    fn hierarchies_compose_and_nest(n in 2usize..24, p in 0.1f64..0.6, seed in any::<u64>(), mean in any::<bool>()) {
        let g = random_graph(n, p, 2, 1, seed);
        let mode = if mean { AggMode::Mean } else { AggMode::Sum };
        let h = build_hierarchy(&g, &[f64::INFINITY, 2.0, 0.5, 0.1], mode, seed).unwrap();
        h.validate().unwrap();
        prop_assert!(h.composition_error() <= 1e-10);
        for w in h.levels.windows(2) {
            prop_assert!(w[1].n() <= w[0].n());
        }
        for k in 0..h.step_partitions.len() {
            let via_step = project_features(&h.step_partitions[k], h.levels[k].node_features()).unwrap();
            let via_base = h.levels[k + 1].node_features();
            prop_assert!((via_step - via_base).amax() < 1e-8);
        }
    }

    #[test]
    fn partition_apply_matches_dense(rows in 1usize..6, cols in 1usize..9, seed in any::<u64>()) {
        let g = random_graph(cols, 0.0, 3, 0, seed);
        let assignment: Vec<usize> = (0..cols).map(|i| (i * 7 + seed as usize) % rows).collect();
        let Ok(part) = kfh::Partition::new(assignment) else { return Ok(()) };
        let pm = PartitionMatrix::from_partition(&part, AggMode::Mean);
        let x = g.node_features();
        prop_assert!((pm.apply(x).unwrap() - pm.to_dense() * x).amax() < 1e-12);
        let y = DMatrix::from_fn(pm.nrows(), 2, |i, j| (i + 2 * j) as f64 - 1.0);
        prop_assert!((pm.apply_transpose(&y).unwrap() - pm.to_dense().transpose() * &y).amax() < 1e-12);
        let r = pm.right_inverse().unwrap();
        prop_assert!((pm.to_dense() * r - DMatrix::identity(pm.nrows(), pm.nrows())).amax() < 1e-10);
    }
}
