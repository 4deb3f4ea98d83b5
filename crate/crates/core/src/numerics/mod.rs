//! Minimal dense linear algebra and reverse-mode differentiation substrate.

pub mod matrix;
pub mod params;
pub mod tape;

pub use matrix::Matrix;
pub use params::{
    grad_check, BoundParams, GradCheckReport, GradStore, ParamId, ParamStore,
};
pub use tape::{argmax, softmax_slice, NodeId, Tape, LOG_LOSS_CLAMP};

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Central finite difference of a scalar function of one matrix entry.
    fn central_diff(f: impl Fn(&Matrix) -> f64, at: &Matrix, idx: usize, eps: f64) -> f64 {
        let mut plus = at.clone();
        plus.data_mut()[idx] += eps;
        let mut minus = at.clone();
        minus.data_mut()[idx] -= eps;
        (f(&plus) - f(&minus)) / (2.0 * eps)
    }

    /// Check a tape-built scalar against finite differences in one input.
    fn check_against_fd(
        build: impl Fn(&mut Tape, NodeId) -> NodeId,
        input: &Matrix,
        tol: f64,
    ) {
        let fd_loss = |m: &Matrix| {
            let mut t = Tape::new();
            let x = t.leaf(m.clone());
            let out = build(&mut t, x);
            t.scalar(out)
        };
        let mut t = Tape::new();
        let x = t.leaf(input.clone());
        let out = build(&mut t, x);
        t.backward(out);
        let analytic = t.grad(x).expect("input reached").clone();
        for idx in 0..input.len() {
            let fd = central_diff(fd_loss, input, idx, 1e-5);
            let rel = (analytic.data()[idx] - fd).abs() / fd.abs().max(1.0);
            assert!(
                rel < tol,
                "idx {idx}: analytic {} vs central {} (rel {rel:.3e})",
                analytic.data()[idx],
                fd
            );
        }
    }

    #[test]
    fn matmul_adjoint_matches_finite_differences() {
        let mut r = rng(1);
        let a = Matrix::uniform(3, 4, -1.0, 1.0, &mut r);
        let b = Matrix::uniform(4, 2, -1.0, 1.0, &mut r);

        // d/dA of sum(A·B)
        check_against_fd(
            |t, x| {
                let bn = t.leaf(b.clone());
                let c = t.matmul(x, bn).unwrap();
                t.sum_all(c)
            },
            &a,
            1e-6,
        );
        // d/dB of sum(A·B)
        check_against_fd(
            |t, x| {
                let an = t.leaf(a.clone());
                let c = t.matmul(an, x).unwrap();
                t.sum_all(c)
            },
            &b,
            1e-6,
        );
    }

    #[test]
    fn tanh_and_sigmoid_values() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::col_vec(&[0.0, 5.0, -5.0]));
        let y = t.tanh_ew(x);
        let s = t.sigmoid_ew(x);
        assert_eq!(t.value(y).data()[0], 0.0);
        assert!(t.value(y).data()[1] < 1.0 && t.value(y).data()[1] > 0.999);
        assert!(t.value(y).data()[2] > -1.0 && t.value(y).data()[2] < -0.999);
        assert_eq!(t.value(s).data()[0], 0.5);
    }

    #[test]
    fn sigmoid_gradient_matches_finite_differences() {
        let mut r = rng(2);
        let x = Matrix::uniform(3, 2, -2.0, 2.0, &mut r);
        check_against_fd(
            |t, x| {
                let y = t.sigmoid_ew(x);
                t.sum_all(y)
            },
            &x,
            1e-6,
        );
    }

    #[test]
    fn tanh_saturation_has_finite_gradient() {
        let x = Matrix::col_vec(&[1000.0]);
        let mut t = Tape::new();
        let n = t.leaf(x);
        let y = t.tanh_ew(n);
        t.backward(y);
        let g = t.grad(n).unwrap().data()[0];
        assert!(g.is_finite());
        assert!(g.abs() < 1e-12); // fully saturated
    }

    #[test]
    fn softmax_uniform_and_stability() {
        let mut t = Tape::new();
        let a = t.leaf(Matrix::col_vec(&[0.0, 0.0, 0.0]));
        let y = t.softmax(a).unwrap();
        for &v in t.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let b = t.leaf(Matrix::col_vec(&[1000.0, 0.0]));
        let z = t.softmax(b).unwrap();
        assert!(t.value(z).data()[0] > 0.999999);
        assert!(t.value(z).data()[1] < 1e-6);
        assert!(t.value(z).all_finite());
    }

    #[test]
    fn softmax_empty_errors() {
        let mut t = Tape::new();
        let a = t.leaf(Matrix::zeros(0, 1));
        assert!(t.softmax(a).is_err());
    }

    #[test]
    fn softmax_gradient_matches_finite_differences() {
        let mut r = rng(3);
        let x = Matrix::uniform(5, 1, -2.0, 2.0, &mut r);
        let w: Vec<f64> = (0..5).map(|_| r.gen_range(-1.0..1.0)).collect();
        check_against_fd(
            |t, x| {
                let y = t.softmax(x).unwrap();
                t.dot_const(y, &w).unwrap()
            },
            &x,
            1e-6,
        );
    }

    #[test]
    fn concat_and_split_gradient() {
        let mut r = rng(4);
        let a = Matrix::uniform(3, 1, -1.0, 1.0, &mut r);
        let b = Matrix::uniform(2, 1, -1.0, 1.0, &mut r);
        let w = [0.3, -0.7, 1.1, 0.9, -0.2];

        let mut t = Tape::new();
        let an = t.leaf(a.clone());
        let bn = t.leaf(b.clone());
        let c = t.concat_rows(an, bn).unwrap();
        assert_eq!(t.value(c).data(), &[a.data()[0], a.data()[1], a.data()[2], b.data()[0], b.data()[1]]);
        let out = t.dot_const(c, &w).unwrap();
        t.backward(out);
        assert_eq!(t.grad(an).unwrap().data(), &w[..3]);
        assert_eq!(t.grad(bn).unwrap().data(), &w[3..]);
    }

    #[test]
    fn concat_with_empty_is_identity() {
        let mut t = Tape::new();
        let a = t.leaf(Matrix::col_vec(&[1.0, 2.0]));
        let e = t.leaf(Matrix::zeros(0, 1));
        let c = t.concat_rows(a, e).unwrap();
        assert_eq!(t.value(c).data(), &[1.0, 2.0]);
    }

    #[test]
    fn backward_twice_doubles_gradients() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::col_vec(&[2.0]));
        let y = t.hadamard(x, x).unwrap();
        t.backward(y);
        let once = t.grad(x).unwrap().data()[0];
        t.backward(y);
        let twice = t.grad(x).unwrap().data()[0];
        assert_eq!(once, 4.0);
        assert_eq!(twice, 8.0);
        t.zero_grad();
        assert!(t.grad(x).is_none());
    }

    #[test]
    fn min_max_and_mask_gradients() {
        let mut r = rng(5);
        let a = Matrix::uniform(4, 1, -1.0, 1.0, &mut r);
        let b = Matrix::uniform(4, 1, -1.0, 1.0, &mut r);
        let mask = Matrix::col_vec(&[1.0, 0.0, 1.0, 1.0]);
        check_against_fd(
            |t, x| {
                let bn = t.leaf(b.clone());
                let m = t.emin(x, bn).unwrap();
                let m = t.mul_const(m, &mask).unwrap();
                t.sum_all(m)
            },
            &a,
            1e-6,
        );
        check_against_fd(
            |t, x| {
                let an = t.leaf(a.clone());
                let m = t.emax(an, x).unwrap();
                t.sum_all(m)
            },
            &b,
            1e-6,
        );
    }

    #[test]
    fn pivot_compare_soft_gradient_and_hard_values() {
        let table = Matrix::from_vec(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        // hard: strict inequality
        let mut t = Tape::new();
        let p = t.scalar_leaf(2.0);
        let g = t.pivot_compare(&table, p, true, None).unwrap();
        assert_eq!(t.value(g).data(), &[0.0, 0.0, 1.0]);
        let l = t.pivot_compare(&table, p, false, None).unwrap();
        assert_eq!(t.value(l).data(), &[1.0, 0.0, 0.0]);
        t.backward(g);
        assert_eq!(t.grad(p).unwrap().data()[0], 0.0);

        // soft: gradient through the pivot matches finite differences
        let pv = Matrix::col_vec(&[1.7]);
        check_against_fd(
            |t, x| {
                let g = t.pivot_compare(&table, x, true, Some(0.8)).unwrap();
                t.sum_all(g)
            },
            &pv,
            1e-6,
        );
        let pv2 = Matrix::col_vec(&[2.4]);
        check_against_fd(
            |t, x| {
                let l = t.pivot_compare(&table, x, false, Some(0.8)).unwrap();
                t.sum_all(l)
            },
            &pv2,
            1e-6,
        );
    }

    #[test]
    fn mul_scalar_gradients() {
        let mut r = rng(6);
        let a = Matrix::uniform(3, 2, -1.0, 1.0, &mut r);
        let s = Matrix::col_vec(&[0.6]);
        check_against_fd(
            |t, x| {
                let sn = t.leaf(s.clone());
                let y = t.mul_scalar(x, sn).unwrap();
                t.sum_all(y)
            },
            &a,
            1e-6,
        );
        check_against_fd(
            |t, x| {
                let an = t.leaf(a.clone());
                let y = t.mul_scalar(an, x).unwrap();
                t.sum_all(y)
            },
            &s,
            1e-6,
        );
    }

    #[test]
    fn stack_and_row_extraction_gradients() {
        let mut r = rng(7);
        let m = Matrix::uniform(4, 3, -1.0, 1.0, &mut r);
        // extract two rows, stack them, reduce
        check_against_fd(
            |t, x| {
                let r1 = t.row_as_col(x, 1);
                let r3 = t.row_as_col(x, 3);
                let z = t.stack_rows_from_cols(&[r1, r3]).unwrap();
                let s = t.sigmoid_ew(z);
                t.sum_all(s)
            },
            &m,
            1e-6,
        );
    }

    #[test]
    fn huber_values_and_gradient() {
        let mut t = Tape::new();
        let p = t.scalar_leaf(11.0);
        let l = t.huber(p, 10.0, 10.0).unwrap(); // a=1, quadratic branch
        assert!((t.scalar(l) - 0.5).abs() < 1e-12);
        let p2 = t.scalar_leaf(30.0);
        let l2 = t.huber(p2, 10.0, 10.0).unwrap(); // a=20, linear branch
        assert!((t.scalar(l2) - 150.0).abs() < 1e-12);

        let pv = Matrix::col_vec(&[4.2]);
        check_against_fd(
            |t, x| {
                let e = t.entry(x, 0);
                t.huber(e, 1.0, 2.0).unwrap()
            },
            &pv,
            1e-6,
        );
        let pv_far = Matrix::col_vec(&[40.0]);
        check_against_fd(
            |t, x| {
                let e = t.entry(x, 0);
                t.huber(e, 1.0, 2.0).unwrap()
            },
            &pv_far,
            1e-6,
        );
    }

    #[test]
    fn log_loss_values_and_gradient() {
        let mut t = Tape::new();
        let half = t.leaf(Matrix::from_vec(2, 2, vec![0.5; 4]).unwrap());
        let target = Matrix::from_vec(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let l = t.log_loss_mean(half, &target).unwrap();
        assert!((t.scalar(l) - std::f64::consts::LN_2).abs() < 1e-12);

        // perfect binary prediction stays at the clamp floor
        let perfect = t.leaf(target.clone());
        let l0 = t.log_loss_mean(perfect, &target).unwrap();
        assert!(t.scalar(l0) <= 1.2e-7);

        // confident wrong prediction is clamped and finite
        let wrong = t.leaf(Matrix::from_vec(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap());
        let lw = t.log_loss_mean(wrong, &target).unwrap();
        assert!(t.scalar(lw).is_finite());

        let mut r = rng(8);
        let p = Matrix::uniform(3, 2, 0.1, 0.9, &mut r);
        let y = Matrix::from_vec(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        check_against_fd(
            |t, x| t.log_loss_mean(x, &y).unwrap(),
            &p,
            1e-6,
        );
    }

    #[test]
    fn grad_check_linear_model() {
        // f(w) = sum((X·w - y)^2) has a known analytic gradient
        let mut r = rng(9);
        let x = Matrix::uniform(5, 3, -1.0, 1.0, &mut r);
        let y = Matrix::uniform(5, 1, -1.0, 1.0, &mut r);
        let mut params = ParamStore::new();
        let w = params.insert("w", Matrix::uniform(3, 1, -0.5, 0.5, &mut r));

        let run = |p: &ParamStore| -> crate::error::Result<(f64, GradStore)> {
            let mut t = Tape::new();
            let bound = BoundParams::bind(&mut t, p);
            let xn = t.leaf(x.clone());
            let yn = t.leaf(y.clone());
            let pred = t.matmul(xn, bound.node(w))?;
            let err = t.sub(pred, yn)?;
            let sq = t.hadamard(err, err)?;
            let loss = t.sum_all(sq);
            t.backward(loss);
            let mut g = GradStore::zeros_like(p);
            bound.collect_grads(&t, &mut g, 1.0)?;
            Ok((t.scalar(loss), g))
        };
        let report = grad_check(&params, run, |p| run(p).map(|(l, _)| l), 1e-5, 1e-4).unwrap();
        assert!(report.max_rel_err < 1e-8, "{}", report.summary());
        assert!(report.pass);
    }

    #[test]
    fn grad_check_constant_function_gives_zero_gradients() {
        let mut r = rng(10);
        let mut params = ParamStore::new();
        params.insert("w", Matrix::uniform(2, 2, -1.0, 1.0, &mut r));
        let run = |p: &ParamStore| -> crate::error::Result<(f64, GradStore)> {
            Ok((3.5, GradStore::zeros_like(p)))
        };
        let report = grad_check(&params, run, |_| Ok(3.5), 1e-5, 1e-4).unwrap();
        assert_eq!(report.max_rel_err, 0.0);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.5, 0.3]), 1);
    }
}
