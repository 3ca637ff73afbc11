use dimgcn_core::gcn::{build_correlation_matrix, gcn_forward, gcn_forward_value, CorrelationConfig};
use dimgcn_core::graph::Graph;
use dimgcn_core::tensor::Tensor;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |d| Tensor::new(&[rows, cols], d))
}

fn instance() -> impl Strategy<Value = (Tensor, Tensor, Vec<Tensor>, Vec<usize>)> {
    (1..8usize, 1..6usize, 1..6usize, 1..6usize).prop_flat_map(|(c, e, h, o)| {
        (
            matrix(c, e, -2.0, 2.0),
            matrix(c, c, 0.0, 1.0),
            (matrix(e, h, -1.0, 1.0), matrix(h, o, -1.0, 1.0)).prop_map(|(a, b)| vec![a, b]),
            Just((0..c).collect::<Vec<_>>()).prop_shuffle(),
        )
    })
}

fn permute_rows(t: &Tensor, perm: &[usize]) -> Tensor {
    t.select_rows(perm)
}

fn permute_both(b: &Tensor, perm: &[usize]) -> Tensor {
    b.select_rows(perm).transpose().select_rows(perm).transpose()
}

proptest! {
    #[test]
    fn node_relabelling_permutes_output((h0, b, ws, perm) in instance()) {
        let out = gcn_forward_value(&h0, &b, &ws, 0.2).unwrap();
        let relabelled = gcn_forward_value(&permute_rows(&h0, &perm), &permute_both(&b, &perm), &ws, 0.2).unwrap();
        let want = permute_rows(&out, &perm);
        for (a, w) in relabelled.data().iter().zip(want.data()) {
            prop_assert!((a - w).abs() < 1e-12);
        }
    }

    #[test]
    fn graph_and_value_paths_agree((h0, b, ws, _perm) in instance()) {
        let mut g = Graph::new();
        let hv = g.constant(h0.clone());
        let bv = g.constant(b.clone());
        let wv: Vec<_> = ws.iter().map(|w| g.constant(w.clone())).collect();
        let out = gcn_forward(&mut g, hv, bv, &wv, 0.2).unwrap();
        prop_assert_eq!(g.value(out), &gcn_forward_value(&h0, &b, &ws, 0.2).unwrap());
    }

    #[test]
    fn correlation_matrix_is_row_stochastic(
        labels in (1..40usize, 2..10usize).prop_flat_map(|(n, c)| {
            prop::collection::vec(prop::bool::ANY, n * c)
                .prop_map(move |v| Tensor::new(&[n, c], v.into_iter().map(|b| f64::from(u8::from(b))).collect()))
        }),
        threshold in 0.0..1.0f64,
        reweight in 0.0..1.0f64,
    ) {
        let cfg = CorrelationConfig { threshold, reweight };
        let m = build_correlation_matrix(&labels, &cfg).unwrap().matrix;
        let c = m.shape()[0];
        for i in 0..c {
            let r = m.row(i);
            prop_assert!(r.iter().all(|&v| v >= 0.0));
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let off = r.iter().enumerate().filter(|&(j, &v)| j != i && v > 0.0).count();
            if off > 0 {
                prop_assert!((r[i] - (1.0 - reweight)).abs() < 1e-12);
            } else {
                prop_assert_eq!(r[i], 1.0);
            }
        }
    }
}

#[test]
fn identity_propagation_with_nonnegative_input_is_exact() {
    let h0 = Tensor::new(&[3, 3], vec![0.0, 1.5, 2.0, 0.25, 0.0, 3.0, 1.0, 1.0, 0.5]);
    let i = Tensor::identity(3);
    assert_eq!(gcn_forward_value(&h0, &i, &[i.clone(), i.clone()], 0.2).unwrap(), h0);
}

#[test]
fn leaky_slope_applies_to_negative_entries() {
    let h0 = Tensor::new(&[1, 2], vec![-2.0, 3.0]);
    let out = gcn_forward_value(&h0, &Tensor::identity(1), &[Tensor::identity(2)], 0.2).unwrap();
    assert_eq!(out.data(), &[-0.4, 3.0]);
}
