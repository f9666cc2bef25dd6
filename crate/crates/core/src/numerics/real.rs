use core::fmt::{Debug, Display};

use num_traits::Float;

/// Floating-point element type of a [`Tensor`](super::Tensor).
pub trait Real: Float + Default + Debug + Display + Send + Sync + 'static {
    /// `c = a · b (+ c if accumulate)` with arbitrary strides.
    ///
    /// `a` is `m × k`, `b` is `k × n`, `c` is `m × n` row-major.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        c: &mut [Self],
        accumulate: bool,
    );

    fn of(v: f64) -> Self;

    /// No NaN or infinity in `xs`.
    fn all_finite(xs: &[Self]) -> bool;

    fn as_f64(self) -> f64;
}

macro_rules! impl_real {
    ($t:ty, $gemm:path, $exp_mask:expr) => {
        impl Real for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                (rsa, csa): (isize, isize),
                b: &[Self],
                (rsb, csb): (isize, isize),
                c: &mut [Self],
                accumulate: bool,
            ) {
                assert!(c.len() >= m * n);
                if m == 0 || n == 0 {
                    return;
                }
                let reach = |rows: usize, cols: usize, rs: isize, cs: isize| {
                    if rows == 0 || cols == 0 {
                        0
                    } else {
                        (rows as isize - 1) * rs + (cols as isize - 1) * cs + 1
                    }
                };
                assert!(a.len() as isize >= reach(m, k, rsa, csa));
                assert!(b.len() as isize >= reach(k, n, rsb, csb));
                let beta = if accumulate { 1.0 } else { 0.0 };
                // SAFETY: the extents above bound every strided access into
                // `a`, `b` and `c`, and `c` does not alias the inputs.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }

            #[inline]
            fn of(v: f64) -> Self {
                v as $t
            }

            fn all_finite(xs: &[Self]) -> bool {
                // branch-free so the scan vectorizes
                let hits = xs.iter().fold(0u32, |acc, v| {
                    acc | ((v.to_bits() & $exp_mask) == $exp_mask) as u32
                });
                hits == 0
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm, 0x7F80_0000u32);
impl_real!(f64, matrixmultiply::dgemm, 0x7FF0_0000_0000_0000u64);
