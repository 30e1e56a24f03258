//! Fixed-schedule floating point reductions.
//!
//! Every sum in the toolkit goes through [`pairwise_sum_by`], whose tree shape
//! depends only on the operand count. Results are therefore identical no
//! matter how the surrounding work is split across threads.

/// Leaf size of the summation tree. Leaves are summed left to right.
pub const BLOCK: usize = 128;

/// Pairwise (tree) sum of `f(0) .. f(len - 1)`.
pub fn pairwise_sum_by<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64,
{
    fn rec<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
        let n = hi - lo;
        if n <= BLOCK {
            let mut acc = 0.0;
            for i in lo..hi {
                acc += f(i);
            }
            acc
        } else {
            let mid = lo + n / 2;
            rec(lo, mid, f) + rec(mid, hi, f)
        }
    }
    rec(0, len, &f)
}

pub fn pairwise_sum(values: &[f64]) -> f64 {
    pairwise_sum_by(values.len(), |i| values[i])
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    pairwise_sum_by(a.len(), |i| a[i] * b[i])
}

pub fn sum_squares(a: &[f64]) -> f64 {
    pairwise_sum_by(a.len(), |i| a[i] * a[i])
}

pub fn norm(a: &[f64]) -> f64 {
    sum_squares(a).sqrt()
}

/// Squared Euclidean distance between two equal-length slices.
pub fn distance_squared(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    pairwise_sum_by(a.len(), |i| {
        let d = a[i] - b[i];
        d * d
    })
}

/// Mean and population standard deviation.
///
/// Identical inputs report a standard deviation of exactly zero even when the
/// mean itself is not representable as one of the inputs.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    if values.iter().all(|v| *v == values[0]) {
        return (values[0], 0.0);
    }
    let var = pairwise_sum_by(values.len(), |i| {
        let d = values[i] - mean;
        d * d
    }) / n;
    (mean, var.sqrt())
}
