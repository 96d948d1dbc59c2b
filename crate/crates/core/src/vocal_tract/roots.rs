//! Polynomial roots as eigenvalues of a balanced companion matrix.

use num_complex::Complex64;

use crate::{Error, Result};

const RADIX: f64 = 2.0;

/// Parlett-Reinsch balancing by powers of two (exact in floating point).
fn balance(a: &mut [Vec<f64>]) {
    let n = a.len();
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[j][i].abs();
                    r += a[i][j].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= sqrdx;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= sqrdx;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let ginv = 1.0 / f;
                for v in a[i].iter_mut() {
                    *v *= ginv;
                }
                for row in a.iter_mut() {
                    row[i] *= f;
                }
            }
        }
    }
}

/// Eigenvalues of an upper Hessenberg matrix by Francis double-shift QR.
fn hessenberg_eigenvalues(mut a: Vec<Vec<f64>>) -> Result<Vec<Complex64>> {
    let n = a.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    if n == 0 {
        return Ok(out);
    }
    let eps = f64::EPSILON;
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[i][j].abs();
        }
    }
    let mut nn = n as isize - 1;
    let mut t = 0.0;
    let mut its = 0;
    while nn >= 0 {
        let nu = nn as usize;
        // Look for a negligible subdiagonal element.
        let mut l = nu;
        while l > 0 {
            let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
            if s == 0.0 {
                s = anorm;
            }
            if a[l][l - 1].abs() <= eps * s {
                a[l][l - 1] = 0.0;
                break;
            }
            l -= 1;
        }
        let mut x = a[nu][nu];
        if l == nu {
            out[nu] = Complex64::new(x + t, 0.0);
            nn -= 1;
            its = 0;
            continue;
        }
        let mut y = a[nu - 1][nu - 1];
        let mut w = a[nu][nu - 1] * a[nu - 1][nu];
        if l == nu - 1 {
            let p = 0.5 * (y - x);
            let q = p * p + w;
            let mut z = q.abs().sqrt();
            x += t;
            if q >= 0.0 {
                z = p + z.copysign(p);
                out[nu - 1] = Complex64::new(x + z, 0.0);
                out[nu] = out[nu - 1];
                if z != 0.0 {
                    out[nu] = Complex64::new(x - w / z, 0.0);
                }
            } else {
                out[nu] = Complex64::new(x + p, -z);
                out[nu - 1] = out[nu].conj();
            }
            nn -= 2;
            its = 0;
            continue;
        }
        if its == 60 {
            return Err(Error::DegenerateSignal(
                "eigenvalue iteration did not converge".into(),
            ));
        }
        if its == 10 || its == 20 || its == 40 {
            // Exceptional shift.
            t += x;
            for i in 0..=nu {
                a[i][i] -= x;
            }
            let s = a[nu][nu - 1].abs() + a[nu - 1][nu - 2].abs();
            x = 0.75 * s;
            y = x;
            w = -0.4375 * s * s;
        }
        its += 1;
        let mut m = nu - 2;
        let (mut p, mut q, mut r);
        loop {
            let z = a[m][m];
            let rr = x - z;
            let ss = y - z;
            p = (rr * ss - w) / a[m + 1][m] + a[m][m + 1];
            q = a[m + 1][m + 1] - z - rr - ss;
            r = a[m + 2][m + 1];
            let s = p.abs() + q.abs() + r.abs();
            p /= s;
            q /= s;
            r /= s;
            if m == l {
                break;
            }
            let u = a[m][m - 1].abs() * (q.abs() + r.abs());
            let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
            if u <= eps * v {
                break;
            }
            m -= 1;
        }
        for i in m..nu - 1 {
            a[i + 2][i] = 0.0;
            if i != m {
                a[i + 2][i - 1] = 0.0;
            }
        }
        let mut k = m;
        while k < nu {
            if k != m {
                p = a[k][k - 1];
                q = a[k + 1][k - 1];
                r = 0.0;
                if k + 1 != nu {
                    r = a[k + 2][k - 1];
                }
                x = p.abs() + q.abs() + r.abs();
                if x != 0.0 {
                    p /= x;
                    q /= x;
                    r /= x;
                }
            }
            let s = (p * p + q * q + r * r).sqrt().copysign(p);
            if s != 0.0 {
                if k == m {
                    if l != m {
                        a[k][k - 1] = -a[k][k - 1];
                    }
                } else {
                    a[k][k - 1] = -s * x;
                }
                p += s;
                x = p / s;
                y = q / s;
                let z = r / s;
                q /= p;
                r /= p;
                for j in k..=nu {
                    let mut pp = a[k][j] + q * a[k + 1][j];
                    if k + 1 != nu {
                        pp += r * a[k + 2][j];
                        a[k + 2][j] -= pp * z;
                    }
                    a[k + 1][j] -= pp * y;
                    a[k][j] -= pp * x;
                }
                let mmin = nu.min(k + 3);
                for i in l..=mmin {
                    let mut pp = x * a[i][k] + y * a[i][k + 1];
                    if k + 1 != nu {
                        pp += z * a[i][k + 2];
                        a[i][k + 2] -= pp * r;
                    }
                    a[i][k + 1] -= pp * q;
                    a[i][k] -= pp;
                }
            }
            k += 1;
        }
    }
    Ok(out)
}

fn horner(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Roots of `c[0] z^d + c[1] z^(d-1) + ... + c[d]`.
///
/// Leading zeros (roots at infinity) and trailing zeros (roots at the
/// origin) are trimmed first, so the root count equals the trimmed degree.
pub fn poly_roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let start = coeffs.iter().position(|&c| c != 0.0);
    let end = coeffs.iter().rposition(|&c| c != 0.0);
    let c = match (start, end) {
        (Some(s), Some(e)) => &coeffs[s..=e],
        _ => return Ok(Vec::new()),
    };
    let degree = c.len() - 1;
    if degree == 0 {
        return Ok(Vec::new());
    }
    let lead = c[0];
    let mut companion = vec![vec![0.0; degree]; degree];
    for j in 0..degree {
        companion[0][j] = -c[j + 1] / lead;
    }
    for i in 1..degree {
        companion[i][i - 1] = 1.0;
    }
    balance(&mut companion);
    let mut roots = hessenberg_eigenvalues(companion)?;

    // A couple of Newton steps on the original polynomial tighten each root.
    for z in roots.iter_mut() {
        let mut best = *z;
        let mut best_res = horner(c, best).0.norm();
        let mut cur = *z;
        for _ in 0..3 {
            let (p, dp) = horner(c, cur);
            if dp.norm() == 0.0 {
                break;
            }
            cur -= p / dp;
            let res = horner(c, cur).0.norm();
            if res < best_res {
                best = cur;
                best_res = res;
            } else {
                break;
            }
        }
        // Keep real roots real.
        if z.im == 0.0 {
            best.im = 0.0;
        }
        *z = best;
    }
    Ok(roots)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
        v
    }

    #[test]
    fn linear_and_quadratic() {
        let r = poly_roots(&[1.0, -0.9]).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r[0] - Complex64::new(0.9, 0.0)).norm() < 1e-15);

        let r = sorted(poly_roots(&[1.0, 0.0, 1.0]).unwrap());
        assert!((r[0] - Complex64::new(0.0, -1.0)).norm() < 1e-14);
        assert!((r[1] - Complex64::new(0.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn trims_zero_coefficients() {
        assert_eq!(poly_roots(&[1.0, -1.0, 0.0, 0.0]).unwrap().len(), 1);
        assert_eq!(poly_roots(&[0.0, 2.0, -1.0]).unwrap().len(), 1);
        assert!(poly_roots(&[3.0]).unwrap().is_empty());
        assert!(poly_roots(&[0.0, 0.0]).unwrap().is_empty());
    }

    #[test]
    fn wilkinson_like_real_roots() {
        // (z-1)(z-2)...(z-8)
        let mut c = vec![1.0];
        for k in 1..=8 {
            let mut next = vec![0.0; c.len() + 1];
            for (i, &v) in c.iter().enumerate() {
                next[i] += v;
                next[i + 1] -= v * k as f64;
            }
            c = next;
        }
        let mut r: Vec<f64> = poly_roots(&c).unwrap().iter().map(|z| z.re).collect();
        r.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (k, v) in r.iter().enumerate() {
            assert!((v - (k + 1) as f64).abs() < 1e-8, "{r:?}");
        }
    }

    #[test]
    fn conjugate_pairs_of_degree_fourteen() {
        let mut c = vec![1.0];
        let mut truth = Vec::new();
        for k in 0..7 {
            let r = 0.8 + 0.025 * k as f64;
            let th = 0.3 + 0.38 * k as f64;
            truth.push(Complex64::from_polar(r, th));
            truth.push(Complex64::from_polar(r, -th));
            let quad = [1.0, -2.0 * r * th.cos(), r * r];
            let mut next = vec![0.0; c.len() + 2];
            for (i, &v) in c.iter().enumerate() {
                for (j, &w) in quad.iter().enumerate() {
                    next[i + j] += v * w;
                }
            }
            c = next;
        }
        let got = poly_roots(&c).unwrap();
        assert_eq!(got.len(), 14);
        for t in truth {
            let d = got.iter().map(|z| (z - t).norm()).fold(f64::INFINITY, f64::min);
            assert!(d < 1e-10, "missing {t}");
        }
    }
}
