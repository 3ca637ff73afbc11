use dimgcn_core::gradcheck::check_gradients;
use dimgcn_core::graph::{Conv, Graph, Var};
use dimgcn_core::tensor::Tensor;
use proptest::prelude::*;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn tensor(shape: Vec<usize>, lo: f64, hi: f64) -> impl Strategy<Value = Tensor> {
    let n: usize = shape.iter().product();
    prop::collection::vec(lo..hi, n).prop_map(move |d| Tensor::new(&shape, d))
}

fn ok(inputs: &[Tensor], f: impl Fn(&mut Graph, &[Var]) -> Var) -> Result<(), TestCaseError> {
    let e = check_gradients(inputs, H, f).max_relative_error();
    prop_assert!(e < TOL, "relative error {e:e}");
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn elementwise(x in (1..4usize, 1..5usize).prop_flat_map(|(n, c)| tensor(vec![n, c], -2.0, 2.0))) {
        ok(&[x.clone()], |g, v| g.sigmoid(v[0]))?;
        ok(&[x.clone()], |g, v| g.tanh(v[0]))?;
        ok(&[x.clone()], |g, v| g.exp(v[0]))?;
        ok(&[x.clone()], |g, v| { let s = g.square(v[0]); g.offset(s, 1.0) })?;
        ok(&[x.clone()], |g, v| { let s = g.square(v[0]); let s = g.offset(s, 0.5); g.ln(s) })?;
        ok(&[x.clone()], |g, v| g.leaky_relu(v[0], 0.1))?;
        ok(&[x.clone()], |g, v| g.clamp(v[0], -2.5, 2.5))?;
        ok(&[x.clone(), x.map(|v| v * 0.5 - 0.3)], |g, v| g.mul(v[0], v[1]))?;
    }

    #[test]
    fn products_and_reshapes(
        (a, b) in (1..4usize, 1..5usize, 1..4usize)
            .prop_flat_map(|(n, k, m)| (tensor(vec![n, k], -1.0, 1.0), tensor(vec![k, m], -1.0, 1.0)))
    ) {
        ok(&[a.clone(), b.clone()], |g, v| g.matmul(v[0], v[1]))?;
        ok(&[a.clone()], |g, v| g.transpose(v[0]))?;
        let (n, k) = a.dims2();
        ok(&[a.clone()], move |g, v| g.reshape(v[0], &[k * n]))?;
        ok(&[a.clone(), a.clone()], |g, v| g.concat(&[v[0], v[1]]))?;
        ok(&[a.clone()], move |g, v| g.slice_cols(v[0], k / 2, k))?;
        ok(&[a.clone()], |g, v| g.mean(v[0]))?;
    }

    #[test]
    fn batch_normalization(x in (2..6usize, 1..4usize).prop_flat_map(|(n, c)| tensor(vec![n, c], -2.0, 2.0))) {
        ok(&[x.clone()], |g, v| g.normalize(v[0], 1e-5).0)?;
        let c = x.shape()[1];
        let w = Tensor::new(&[c], (0..c).map(|i| 0.5 + i as f64).collect());
        ok(&[x, w.clone(), w], |g, v| { let s = g.mul_channels(v[0], v[1]); g.add_channels(s, v[2]) })?;
    }

    #[test]
    fn convolutions(
        (x, w, wt) in (1..3usize, 1..3usize, 1..3usize, 2..5usize).prop_flat_map(|(n, ci, co, s)| (
            tensor(vec![n, ci, s, s], -1.0, 1.0),
            tensor(vec![co, ci, 3, 3], -0.5, 0.5),
            tensor(vec![ci, co, 4, 4], -0.5, 0.5),
        )),
        stride in 1..3usize,
    ) {
        ok(&[x.clone(), w], move |g, v| g.conv2d(v[0], v[1], Conv { stride, pad: 1 }))?;
        ok(&[x.clone(), wt], |g, v| g.conv_transpose2d(v[0], v[1], Conv { stride: 2, pad: 1 }))?;
        ok(&[x], |g, v| g.mean_pool(v[0]))?;
    }
}
