//! Small scalar root finders and minimizers.

/// Brent's derivative-free minimizer on `[a, b]`, combining golden-section
/// steps with parabolic interpolation. Returns `(x_min, f(x_min))`.
pub fn brent_min(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    const GOLD: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x = a + GOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for _ in 0..500 {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-300_f64.max(tol * 1e-3);
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            // parabola through x, w, v
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < m { b - x } else { a - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u);
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            (v, fv) = (w, fw);
            (w, fw) = (x, fx);
            (x, fx) = (u, fu);
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, fv) = (w, fw);
                (w, fw) = (u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    }
    (x, fx)
}

/// Maximizer counterpart of [`brent_min`]; also compares against both
/// endpoints so that boundary maxima are returned exactly.
pub fn brent_max_with_ends(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let (x, neg) = brent_min(|t| -f(t), a, b, tol);
    let mut best = (x, -neg);
    for end in [a, b] {
        let fe = f(end);
        if fe > best.1 {
            best = (end, fe);
        }
    }
    best
}

/// Bisection for a sign change of `f` on `[lo, hi]`; `f(lo)` and `f(hi)` must
/// differ in sign. Stops when the bracket is below `rel_tol` relative width.
pub fn bisect(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, rel_tol: f64) -> f64 {
    let f_lo_positive = f(lo) > 0.0;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= rel_tol * mid.abs().max(f64::MIN_POSITIVE) || mid == lo || mid == hi {
            return mid;
        }
        if (f(mid) > 0.0) == f_lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Bisection in `ln x` for positive brackets spanning many decades.
pub fn bisect_log(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64) -> f64 {
    bisect(|t| f(t.exp()), lo.ln(), hi.ln(), 0.0).exp()
}
