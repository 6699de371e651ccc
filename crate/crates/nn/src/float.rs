use std::fmt::Debug;

/// Scalar type the engine runs on. `f32` for training, `f64` for gradient
/// checks through the same code path.
pub trait Float:
    num_traits::Float + num_traits::FromPrimitive + Default + Debug + Send + Sync + 'static + std::iter::Sum
{
    /// `c = alpha * op(a) * op(b) + beta * c` over row-major storage, where
    /// `op(a)` is `m x k` and `op(b)` is `k x n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_trans: bool,
        b: &[Self],
        b_trans: bool,
        beta: Self,
        c: &mut [Self],
    );

    fn erf(self) -> Self;

    /// Converts an `f64` constant.
    fn of(v: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(v).expect("representable")
    }

    fn f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("representable")
    }
}

fn strides(rows: usize, cols: usize, trans: bool) -> (isize, isize) {
    // Storage is row-major `rows x cols` of op(x)ᵀ when transposed.
    if trans {
        (1, rows as isize)
    } else {
        (cols as isize, 1)
    }
}

fn check_lens(m: usize, k: usize, n: usize, a: usize, b: usize, c: usize) {
    assert!(a >= m * k && b >= k * n && c >= m * n, "gemm buffers too small");
}

impl Float for f32 {
    fn gemm(m: usize, k: usize, n: usize, alpha: f32, a: &[f32], at: bool, b: &[f32], bt: bool, beta: f32, c: &mut [f32]) {
        check_lens(m, k, n, a.len(), b.len(), c.len());
        if m == 0 || n == 0 {
            return;
        }
        let (rsa, csa) = strides(m, k, at);
        let (rsb, csb) = strides(k, n, bt);
        // SAFETY: lengths were checked above and strides describe in-bounds
        // row-major layouts of the stated shapes.
        unsafe {
            matrixmultiply::sgemm(
                m, k, n, alpha, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1,
            );
        }
    }

    fn erf(self) -> f32 {
        libm::erff(self)
    }
}

impl Float for f64 {
    fn gemm(m: usize, k: usize, n: usize, alpha: f64, a: &[f64], at: bool, b: &[f64], bt: bool, beta: f64, c: &mut [f64]) {
        check_lens(m, k, n, a.len(), b.len(), c.len());
        if m == 0 || n == 0 {
            return;
        }
        let (rsa, csa) = strides(m, k, at);
        let (rsb, csb) = strides(k, n, bt);
        // SAFETY: as for f32.
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, alpha, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1,
            );
        }
    }

    fn erf(self) -> f64 {
        libm::erf(self)
    }
}
