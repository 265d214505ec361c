//! Thin safe wrappers around `matrixmultiply`. Strides are in elements and
//! may describe transposed views; callers guarantee the shapes, the wrapper
//! checks buffer extents.

/// c[m,n] (row-major) = alpha * a * b + beta * c, with explicit strides for
/// `a` ([m,k] view) and `b` ([k,n] view).
#[allow(clippy::too_many_arguments)]
pub fn sgemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f32,
    a: &[f32],
    rsa: isize,
    csa: isize,
    b: &[f32],
    rsb: isize,
    csb: isize,
    beta: f32,
    c: &mut [f32],
) {
    debug_assert!(extent(m, k, rsa, csa) <= a.len());
    debug_assert!(extent(k, n, rsb, csb) <= b.len());
    assert!(m * n <= c.len());
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            alpha,
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

/// f64 variant, used by the transforms where accumulation error matters.
#[allow(clippy::too_many_arguments)]
pub fn dgemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(extent(m, k, rsa, csa) <= a.len());
    debug_assert!(extent(k, n, rsb, csb) <= b.len());
    assert!(m * n <= c.len());
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
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

/// Highest linear index touched by an [rows, cols] view, plus one.
fn extent(rows: usize, cols: usize, rs: isize, cs: isize) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    let last = (rows as isize - 1) * rs + (cols as isize - 1) * cs;
    debug_assert!(last >= 0);
    last as usize + 1
}
