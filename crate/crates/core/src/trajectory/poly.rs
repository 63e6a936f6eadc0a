//! Real roots of low-degree polynomials on a closed interval.

fn horner(c: &[f64], s: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * s + a)
}

/// Roots in `[lo, hi]` of the polynomial with ascending coefficients `c`,
/// located by splitting at the roots of the derivative and bisecting each
/// monotone piece.
pub(crate) fn roots_in(c: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let mut c = c.to_vec();
    let scale = c.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    while c.len() > 1 && c.last().unwrap().abs() <= 1e-14 * scale {
        c.pop();
    }
    if c.len() <= 1 || scale == 0.0 {
        return Vec::new();
    }
    let deriv: Vec<f64> = c.iter().enumerate().skip(1).map(|(k, a)| k as f64 * a).collect();
    let mut cuts = vec![lo];
    cuts.extend(roots_in(&deriv, lo, hi));
    cuts.push(hi);
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let (mut a, mut b) = (w[0], w[1]);
        let (fa, fb) = (horner(&c, a), horner(&c, b));
        if fa == 0.0 {
            out.push(a);
            continue;
        }
        if fa * fb > 0.0 {
            continue;
        }
        let rising = fb > fa;
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if (horner(&c, m) > 0.0) == rising {
                b = m;
            } else {
                a = m;
            }
        }
        out.push(0.5 * (a + b));
    }
    if horner(&c, hi) == 0.0 {
        out.push(hi);
    }
    out.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * (1.0 + b.abs()));
    out
}
