//! Property tests for the tensor and operator layers.

use knop_core::ct::{backproject_parallel, project_parallel, ImageGrid, ParallelGeometry};
use knop_core::tensor::{dft, dot, norm, sym_decode, sym_encode, NormP, Tensor};
use proptest::prelude::*;

fn finite_vec(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parseval_under_unitary_dft(xs in finite_vec(1..64)) {
        let t = Tensor::from_vec([xs.len()], xs).unwrap();
        let f = dft(&t, 0).unwrap();
        let a = norm(&t, NormP::Two);
        let b = norm(&f, NormP::Two);
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0), "{a} vs {b}");
    }

    #[test]
    fn dft_linearity(xs in finite_vec(2..48), k in -3.0f64..3.0, m in -3.0f64..3.0) {
        let n = xs.len() / 2;
        let a = Tensor::from_vec([n], xs[..n].to_vec()).unwrap();
        let b = Tensor::from_vec([n], xs[n..2 * n].to_vec()).unwrap();
        let lhs = dft(&a.scale(k).add(&b.scale(m)).unwrap(), 0).unwrap();
        let rhs = dft(&a, 0).unwrap().scale(k).add(&dft(&b, 0).unwrap().scale(m)).unwrap();
        let diff = norm(&lhs.sub(&rhs).unwrap(), NormP::Inf);
        let scale = norm(&rhs, NormP::Inf).max(1.0);
        prop_assert!(diff <= 1e-10 * scale, "diff {diff}");
    }

    #[test]
    fn relu_is_idempotent(xs in finite_vec(1..64)) {
        let t = Tensor::from_vec([xs.len()], xs).unwrap();
        let once = t.relu().unwrap();
        let twice = once.relu().unwrap();
        prop_assert_eq!(once.real(), twice.real());
    }

    #[test]
    fn symmetric_spectrum_codec_round_trips(params in finite_vec(1..32)) {
        let spec = sym_decode(&params);
        let back = sym_encode(&spec).unwrap();
        for (a, b) in params.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        // Decoded spectra are conjugate-symmetric.
        let n = spec.len();
        for k in 0..n {
            prop_assert!((spec[k] - spec[(n - k) % n].conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn projector_adjoint_identity(img in finite_vec(64..65), sino in finite_vec(96..97)) {
        let grid = ImageGrid::square(8, 2.0 / 8.0);
        let g = ParallelGeometry::uniform(6, 16, grid.diagonal() * 1.1 / 16.0, grid).unwrap();
        let x = Tensor::from_vec([8, 8], img).unwrap();
        let y = Tensor::from_vec([6, 16], sino).unwrap();
        let ax = project_parallel(&x, &g).unwrap();
        let aty = backproject_parallel(&y, &g).unwrap();
        let lhs = dot(&ax, &y).unwrap();
        let rhs = dot(&x, &aty).unwrap();
        let scale = lhs.abs().max(rhs.abs()).max(1e-9);
        prop_assert!((lhs - rhs).abs() / scale < 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn norms_are_ordered(xs in finite_vec(1..48)) {
        let t = Tensor::from_vec([xs.len()], xs).unwrap();
        let inf = norm(&t, NormP::Inf);
        let two = norm(&t, NormP::Two);
        let one = norm(&t, NormP::One);
        prop_assert!(inf <= two + 1e-12 && two <= one + 1e-12);
    }
}
