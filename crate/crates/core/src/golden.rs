//! Golden-section search for unimodal functions on a closed interval.

use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Minimum<T> {
    pub x: T,
    pub value: T,
    pub iterations: usize,
}

const MAX_ITERATIONS: usize = 500;

/// Shrinks `[lo, hi]` until it is narrower than `tol` and returns the best
/// interior probe. Non-finite objective values count as `+inf`.
pub fn golden_section<T, F>(mut f: F, lo: T, hi: T, tol: T) -> Minimum<T>
where
    T: Real,
    F: FnMut(T) -> T,
{
    let inv_phi = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    let mut eval = |x: T| {
        let y = f(x);
        if y.is_finite() {
            y
        } else {
            T::infinity()
        }
    };

    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut c = b - (b - a) * inv_phi;
    let mut d = a + (b - a) * inv_phi;
    let mut fc = eval(c);
    let mut fd = eval(d);
    let mut iterations = 0;

    while b - a > tol && iterations < MAX_ITERATIONS {
        iterations += 1;
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * inv_phi;
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * inv_phi;
            fd = eval(d);
        }
    }

    let (x, value) = if fc <= fd { (c, fc) } else { (d, fd) };
    Minimum { x, value, iterations }
}
