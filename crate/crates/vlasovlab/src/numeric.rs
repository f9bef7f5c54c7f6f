//! Small numeric helpers: deterministic reductions, fixed-dimension vector
//! arithmetic and adaptive quadrature.

/// Pairwise (tree) summation over `f(0..n)`. Deterministic for a given `n`
/// regardless of thread scheduling, and more accurate than a running sum.
pub fn pairwise_sum<F: Fn(usize) -> f64>(n: usize, f: &F) -> f64 {
    fn rec<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
        let len = hi - lo;
        if len <= 64 {
            let mut acc = 0.0;
            for i in lo..hi {
                acc += f(i);
            }
            acc
        } else {
            let mid = lo + len / 2;
            rec(lo, mid, f) + rec(mid, hi, f)
        }
    }
    rec(0, n, f)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Volume of the unit ball in `d` dimensions (d = 2 or 3).
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        2 => std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI / 3.0,
        _ => panic!("unit_ball_volume: unsupported dimension {d}"),
    }
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` with relative tolerance
/// `rel_tol`. Suitable for smooth integrands; endpoint singularities must be
/// removed by substitution before calling.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, fa, m, fm, left, lm, flm, tol * 0.5, depth - 1)
                + rec(f, m, fm, b, fb, right, rm, frm, tol * 0.5, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    let scale = whole.abs().max(1e-300);
    rec(f, a, fa, b, fb, whole, m, fm, rel_tol * scale, 48)
}

/// Bisection root finder for a continuous `f` with a sign change on `[lo, hi]`.
/// Returns the midpoint of the final bracket.
pub fn bisect<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let flo = f(lo);
    debug_assert!(flo * f(hi) <= 0.0, "bisect: no sign change in bracket");
    let lo_negative = flo < 0.0;
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_naive() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = v.iter().sum();
        let pair = pairwise_sum(v.len(), &|i| v[i]);
        assert!((naive - pair).abs() < 1e-10);
    }

    #[test]
    fn simpson_integrates_gaussian() {
        // int_0^inf e^{-x^2/2} dx = sqrt(pi/2)
        let val = adaptive_simpson(&|x: f64| (-0.5 * x * x).exp(), 0.0, 12.0, 1e-12);
        assert!((val - (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(&|x| x * x - 2.0, 0.0, 2.0, 80);
        assert!((r - std::f64::consts::SQRT_2).abs() < 1e-12);
    }
}
