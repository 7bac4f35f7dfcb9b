//! `C = alpha * A * B + beta * C` over strided row/column layouts.
//!
//! Small products use a plain loop so their results do not depend on which
//! SIMD kernel the host selects; larger ones go through `matrixmultiply`.

const SMALL: usize = 32 * 32 * 32;

#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    if m * k * n <= SMALL {
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for p in 0..k {
                    acc += a[i * rsa + p * csa] * b[p * rsb + j * csb];
                }
                let out = &mut c[i * rsc + j * csc];
                *out = if beta == 0.0 { acc } else { beta * *out + acc };
            }
        }
        return;
    }
    // SAFETY: callers pass slices whose extents cover every strided index
    // touched for the given dimensions; checked by the asserts below.
    assert!(a.len() > (m - 1) * rsa + k.saturating_sub(1) * csa || k == 0);
    assert!(b.len() > k.saturating_sub(1) * rsb + (n - 1) * csb || k == 0);
    assert!(c.len() > (m - 1) * rsc + (n - 1) * csc);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}
