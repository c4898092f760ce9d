//! Dense tensors with tape-based reverse-mode differentiation.
//!
//! A [`Graph`] is rebuilt for every training step: leaves are registered with
//! [`Graph::param`] (trainable) or [`Graph::constant`], operations append
//! nodes, and [`Graph::backward`] walks the tape once in reverse order.
//! A graph is single-threaded; independent graphs may live on different
//! threads.

mod graph;
mod tensor;

pub use graph::{broadcast_shape, Gradients, Graph, OpKind, Var};
pub use tensor::{argmax, Tensor};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{check_gradients, random_tensor, rng};
    use crate::Error;
    use alloc::vec;
    use alloc::vec::Vec;
    use rand::Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn add_elementwise() {
        let mut g = Graph::new();
        let a = g.constant(t(&[2], &[1.0, 2.0]));
        let b = g.constant(t(&[2], &[3.0, 4.0]));
        let c = g.add(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[4.0, 6.0]);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut g = Graph::new();
        let a = g.constant(t(&[2], &[0.0, 0.0]));
        let s = g.softmax(a, 0).unwrap();
        assert_eq!(g.value(s).data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_survives_large_logits() {
        let mut g = Graph::new();
        let a = g.constant(t(&[1, 3], &[1000.0, 999.0, -1000.0]));
        let s = g.softmax(a, 1).unwrap();
        assert!(g.value(s).is_finite());
        assert!((g.value(s).data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matmul_of_ones() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::full(&[2, 3], 1.0).unwrap());
        let b = g.constant(Tensor::full(&[3, 1], 1.0).unwrap());
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).shape(), &[2, 1]);
        assert_eq!(g.value(c).data(), &[3.0, 3.0]);
    }

    #[test]
    fn broadcasting_rules() {
        assert_eq!(broadcast_shape(&[4, 3], &[3]), Some(vec![4, 3]));
        assert_eq!(broadcast_shape(&[4, 1], &[1, 3]), Some(vec![4, 3]));
        assert_eq!(broadcast_shape(&[1], &[2, 5]), Some(vec![2, 5]));
        assert_eq!(broadcast_shape(&[4, 3], &[4]), None);

        let mut g = Graph::new();
        let a = g.constant(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let b = g.constant(t(&[3], &[10.0, 20.0, 30.0]));
        let c = g.add(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);
        let col = g.constant(t(&[2, 1], &[1.0, -1.0]));
        let d = g.mul(a, col).unwrap();
        assert_eq!(g.value(d).data(), &[1.0, 2.0, 3.0, -4.0, -5.0, -6.0]);
    }

    #[test]
    fn shape_mismatch_names_op_and_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]).unwrap());
        let b = g.constant(Tensor::zeros(&[2, 2]).unwrap());
        match g.matmul(a, b) {
            Err(Error::ShapeMismatch { op, shapes }) => {
                assert_eq!(op, "matmul");
                assert_eq!(shapes, vec![vec![2, 3], vec![2, 2]]);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(g.add(a, b), Err(Error::ShapeMismatch { op: "add", .. })));
    }

    #[test]
    fn log_rejects_non_positive() {
        let mut g = Graph::new();
        let a = g.constant(t(&[2], &[1.0, 0.0]));
        assert!(matches!(g.log(a), Err(Error::Domain { op: "log", .. })));
    }

    #[test]
    fn slice_and_concat_round_trip() {
        let mut g = Graph::new();
        let a = g.constant(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let left = g.slice(a, 1, 0, 1).unwrap();
        let right = g.slice(a, 1, 1, 3).unwrap();
        assert_eq!(g.value(right).data(), &[2.0, 3.0, 5.0, 6.0]);
        let back = g.concat(&[left, right], 1).unwrap();
        assert_eq!(g.value(back), g.value(a));
        assert!(g.slice(a, 1, 2, 2).is_err());
    }

    #[test]
    fn max_axis_picks_first_maximum() {
        let mut g = Graph::new();
        let a = g.param(t(&[2, 3], &[1.0, 5.0, 5.0, 7.0, 2.0, 3.0]));
        let m = g.max_axis(a, 1).unwrap();
        assert_eq!(g.value(m).data(), &[5.0, 7.0]);
        let s = g.sum(m).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn gradient_of_sum_is_ones() {
        let mut g = Graph::new();
        let x = g.param(t(&[3], &[0.3, -2.0, 7.0]));
        let s = g.sum(x).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn gradient_of_square_accumulates_both_uses() {
        let mut g = Graph::new();
        let x = g.param(t(&[2], &[2.0, -1.0]));
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[4.0, -2.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let x = g.param(t(&[2], &[1.0, 2.0]));
        let c = g.constant(t(&[2], &[3.0, 4.0]));
        let p = g.mul(x, c).unwrap();
        let s = g.sum(p).unwrap();
        let grads = g.backward(s).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(x).unwrap().data(), &[3.0, 4.0]);
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let mut g = Graph::new();
        let x = g.param(t(&[2], &[1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(Error::Contract(_))));
    }

    fn ops_under_test() -> Vec<(OpKind, Vec<Vec<usize>>)> {
        vec![
            (OpKind::Add, vec![vec![3, 4], vec![3, 4]]),
            (OpKind::Add, vec![vec![3, 4], vec![4]]),
            (OpKind::Sub, vec![vec![3, 4], vec![3, 1]]),
            (OpKind::Mul, vec![vec![2, 5], vec![2, 5]]),
            (OpKind::Mul, vec![vec![2, 5], vec![1]]),
            (OpKind::MatMul, vec![vec![3, 4], vec![4, 2]]),
            (OpKind::Relu, vec![vec![3, 4]]),
            (OpKind::Exp, vec![vec![3, 4]]),
            (OpKind::Log, vec![vec![3, 4]]),
            (OpKind::ClampMin(0.3), vec![vec![3, 4]]),
            (OpKind::Sum, vec![vec![3, 4]]),
            (OpKind::Mean, vec![vec![3, 4]]),
            (OpKind::SumAxis(0), vec![vec![3, 4]]),
            (OpKind::SumAxis(1), vec![vec![3, 4]]),
            (OpKind::MaxAxis(1), vec![vec![3, 4]]),
            (OpKind::Softmax(1), vec![vec![3, 4]]),
            (OpKind::Softmax(0), vec![vec![3, 4]]),
            (OpKind::Concat(1), vec![vec![3, 2], vec![3, 3]]),
            (OpKind::Concat(0), vec![vec![1, 3], vec![2, 3]]),
            (
                OpKind::Slice {
                    axis: 1,
                    start: 1,
                    end: 3,
                },
                vec![vec![3, 4]],
            ),
            (OpKind::Scale(-2.5), vec![vec![3, 4]]),
        ]
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut r = rng(7);
        for (kind, shapes) in ops_under_test() {
            for trial in 0..20 {
                let inputs: Vec<Tensor> = shapes
                    .iter()
                    .map(|s| {
                        let mut x = random_tensor(&mut r, s, 1.0);
                        for v in x.data_mut() {
                            match kind {
                                // keep away from kinks and the log domain edge
                                OpKind::Log => *v = v.abs() + 0.2,
                                OpKind::Relu => {
                                    if v.abs() < 0.05 {
                                        *v += 0.1
                                    }
                                }
                                OpKind::ClampMin(f) if (*v - f).abs() < 0.05 => *v += 0.1,
                                _ => {}
                            }
                        }
                        x
                    })
                    .collect();
                let out_len = {
                    let mut g = Graph::new();
                    let vars: Vec<Var> = inputs.iter().map(|x| g.constant(x.clone())).collect();
                    let y = g.apply(kind, &vars).unwrap();
                    g.value(y).shape().to_vec()
                };
                let weights = random_tensor(&mut r, &out_len, 1.0);
                let report = check_gradients(&inputs, |g, vars| {
                    let y = g.apply(kind, vars)?;
                    let w = g.constant(weights.clone());
                    let p = g.mul(y, w)?;
                    g.sum(p)
                });
                assert!(report.max_rel_error < 1e-4, "{} trial {trial}: {report:?}", kind.name());
            }
        }
    }

    #[test]
    fn two_layer_network_matches_finite_differences() {
        let mut r = rng(11);
        for _ in 0..20 {
            let x = random_tensor(&mut r, &[5, 3], 1.0);
            let w1 = random_tensor(&mut r, &[3, 6], 0.8);
            let b1 = random_tensor(&mut r, &[6], 0.1);
            let w2 = random_tensor(&mut r, &[6, 2], 0.8);
            let b2 = random_tensor(&mut r, &[2], 0.1);
            let labels: Vec<usize> = (0..5).map(|_| r.gen_range(0..2)).collect();
            let report = check_gradients(&[w1, b1, w2, b2], |g, p| {
                let xin = g.constant(x.clone());
                let h = g.matmul(xin, p[0])?;
                let h = g.add(h, p[1])?;
                let h = g.relu(h)?;
                let o = g.matmul(h, p[2])?;
                let o = g.add(o, p[3])?;
                let probs = g.softmax(o, 1)?;
                let mut onehot = vec![0.0; 10];
                for (i, &y) in labels.iter().enumerate() {
                    onehot[i * 2 + y] = 1.0;
                }
                let mask = g.constant(Tensor::new(vec![5, 2], onehot)?);
                let picked = g.mul(probs, mask)?;
                let picked = g.sum_axis(picked, 1)?;
                let logp = g.log(picked)?;
                let m = g.mean(logp)?;
                g.scale(m, -1.0)
            });
            assert!(report.max_rel_error < 1e-4, "{report:?}");
        }
    }

    #[test]
    fn backward_is_linear() {
        let mut r = rng(3);
        let x = random_tensor(&mut r, &[4, 3], 1.0);
        let grad_of = |build: &dyn Fn(&mut Graph, Var) -> Var| {
            let mut g = Graph::new();
            let v = g.param(x.clone());
            let root = build(&mut g, v);
            g.backward(root).unwrap().get(v).unwrap().clone()
        };
        let f = |g: &mut Graph, v: Var| {
            let e = g.exp(v).unwrap();
            g.sum(e).unwrap()
        };
        let h = |g: &mut Graph, v: Var| {
            let s = g.softmax(v, 1).unwrap();
            let m = g.max_axis(s, 1).unwrap();
            g.sum(m).unwrap()
        };
        let (a, b) = (0.7, -1.3);
        let combined = grad_of(&|g, v| {
            let fv = f(g, v);
            let hv = h(g, v);
            let fa = g.scale(fv, a).unwrap();
            let hb = g.scale(hv, b).unwrap();
            g.add(fa, hb).unwrap()
        });
        let gf = grad_of(&f);
        let gh = grad_of(&h);
        for k in 0..x.len() {
            let expected = a * gf.data()[k] + b * gh.data()[k];
            assert!((combined.data()[k] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_and_backward_are_deterministic() {
        let run = || {
            let mut r = rng(5);
            let x = random_tensor(&mut r, &[6, 4], 1.0);
            let w = random_tensor(&mut r, &[4, 3], 1.0);
            let mut g = Graph::new();
            let xv = g.constant(x);
            let wv = g.param(w);
            let o = g.matmul(xv, wv).unwrap();
            let s = g.softmax(o, 1).unwrap();
            let l = g.clamp_min(s, 1e-12).unwrap();
            let l = g.log(l).unwrap();
            let m = g.mean(l).unwrap();
            let grads = g.backward(m).unwrap();
            (g.value(m).clone(), grads.get(wv).unwrap().clone())
        };
        let (v1, g1) = run();
        let (v2, g2) = run();
        assert_eq!(v1.data()[0].to_bits(), v2.data()[0].to_bits());
        assert!(g1.data().iter().zip(g2.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
