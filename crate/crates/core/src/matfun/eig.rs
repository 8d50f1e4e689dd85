//! Dense non-symmetric eigensolver: Householder reduction to Hessenberg
//! form followed by shifted (Francis double-shift) QR iteration with
//! eigenvector accumulation, after the classic Algol/EISPACK procedures
//! `orthes` and `hqr2`.
//!
//! Output convention: eigenvalue j is `d[j] + i*e[j]`. Real eigenvectors
//! occupy one column of `v`; a complex conjugate pair (`e[j] > 0`,
//! `e[j+1] = -e[j]`) stores the real part in column j and the imaginary
//! part in column j+1, so the eigenvector for `d[j] + i*e[j]` is
//! `v[:,j] + i*v[:,j+1]`.

use crate::mat::Mat;

pub(crate) struct RealEig {
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    pub v: Mat,
}

pub(crate) fn real_eig(a: &Mat) -> RealEig {
    let n = a.rows();
    let mut h = a.clone();
    let mut v = Mat::identity(n);
    if n > 0 {
        orthes(&mut h, &mut v);
        let mut d = vec![0.0; n];
        let mut e = vec![0.0; n];
        hqr2(&mut h, &mut v, &mut d, &mut e);
        RealEig { d, e, v }
    } else {
        RealEig {
            d: vec![],
            e: vec![],
            v,
        }
    }
}

/// Householder reduction to upper Hessenberg form, accumulating the
/// orthogonal transformation into `v`.
fn orthes(h: &mut Mat, v: &mut Mat) {
    let n = h.rows();
    if n < 3 {
        return;
    }
    let low = 0usize;
    let high = n - 1;
    let mut ort = vec![0.0; n];

    for m in low + 1..high {
        let mut scale = 0.0;
        for i in m..=high {
            scale += h[(i, m - 1)].abs();
        }
        if scale != 0.0 {
            let mut hh = 0.0;
            for i in (m..=high).rev() {
                ort[i] = h[(i, m - 1)] / scale;
                hh += ort[i] * ort[i];
            }
            let mut g = hh.sqrt();
            if ort[m] > 0.0 {
                g = -g;
            }
            hh -= ort[m] * g;
            ort[m] -= g;

            // H = (I - u u'/h) H (I - u u'/h)
            for j in m..n {
                let mut f = 0.0;
                for i in (m..=high).rev() {
                    f += ort[i] * h[(i, j)];
                }
                f /= hh;
                for i in m..=high {
                    h[(i, j)] -= f * ort[i];
                }
            }
            for i in 0..=high {
                let mut f = 0.0;
                for j in (m..=high).rev() {
                    f += ort[j] * h[(i, j)];
                }
                f /= hh;
                for j in m..=high {
                    h[(i, j)] -= f * ort[j];
                }
            }
            ort[m] *= scale;
            h[(m, m - 1)] = scale * g;
        }
    }

    // Accumulate transformations.
    for m in (low + 1..high).rev() {
        if h[(m, m - 1)] != 0.0 {
            for i in m + 1..=high {
                ort[i] = h[(i, m - 1)];
            }
            for j in m..=high {
                let mut g = 0.0;
                for i in m..=high {
                    g += ort[i] * v[(i, j)];
                }
                // Double division avoids possible underflow.
                g = (g / ort[m]) / h[(m, m - 1)];
                for i in m..=high {
                    v[(i, j)] += g * ort[i];
                }
            }
        }
    }
}

fn cdiv(xr: f64, xi: f64, yr: f64, yi: f64) -> (f64, f64) {
    if yr.abs() > yi.abs() {
        let r = yi / yr;
        let d = yr + r * yi;
        ((xr + r * xi) / d, (xi - r * xr) / d)
    } else {
        let r = yr / yi;
        let d = yi + r * yr;
        ((r * xr + xi) / d, (r * xi - xr) / d)
    }
}

/// Shifted QR reduction of a Hessenberg matrix to real Schur form with
/// eigenvector back-substitution. Indices follow the Algol original, so
/// signed arithmetic is used where the original counts below zero.
#[allow(clippy::too_many_lines)]
#[allow(unused_assignments)]
fn hqr2(h: &mut Mat, v: &mut Mat, d: &mut [f64], e: &mut [f64]) {
    let nn = h.rows();
    let low = 0isize;
    let high = nn as isize - 1;
    let eps = 2.0f64.powi(-52);
    let mut exshift = 0.0;
    let (mut p, mut q, mut r, mut s, mut z) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut t, mut w, mut x, mut y) = (0.0, 0.0, 0.0, 0.0);

    let mut norm = 0.0;
    for i in 0..nn {
        for j in i.saturating_sub(1)..nn {
            norm += h[(i, j)].abs();
        }
    }

    let mut n = nn as isize - 1;
    let mut iter = 0;
    while n >= low {
        // Look for a single small sub-diagonal element.
        let mut l = n;
        while l > low {
            s = h[(l as usize - 1, l as usize - 1)].abs() + h[(l as usize, l as usize)].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[(l as usize, l as usize - 1)].abs() < eps * s {
                break;
            }
            l -= 1;
        }

        if l == n {
            // One root found.
            let un = n as usize;
            h[(un, un)] += exshift;
            d[un] = h[(un, un)];
            e[un] = 0.0;
            n -= 1;
            iter = 0;
        } else if l == n - 1 {
            // Two roots found.
            let un = n as usize;
            w = h[(un, un - 1)] * h[(un - 1, un)];
            p = (h[(un - 1, un - 1)] - h[(un, un)]) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            h[(un, un)] += exshift;
            h[(un - 1, un - 1)] += exshift;
            x = h[(un, un)];

            if q >= 0.0 {
                // Real pair.
                z = if p >= 0.0 { p + z } else { p - z };
                d[un - 1] = x + z;
                d[un] = d[un - 1];
                if z != 0.0 {
                    d[un] = x - w / z;
                }
                e[un - 1] = 0.0;
                e[un] = 0.0;
                x = h[(un, un - 1)];
                s = x.abs() + z.abs();
                p = x / s;
                q = z / s;
                r = (p * p + q * q).sqrt();
                p /= r;
                q /= r;
                for j in un - 1..nn {
                    z = h[(un - 1, j)];
                    h[(un - 1, j)] = q * z + p * h[(un, j)];
                    h[(un, j)] = q * h[(un, j)] - p * z;
                }
                for i in 0..=un {
                    z = h[(i, un - 1)];
                    h[(i, un - 1)] = q * z + p * h[(i, un)];
                    h[(i, un)] = q * h[(i, un)] - p * z;
                }
                for i in low as usize..=high as usize {
                    z = v[(i, un - 1)];
                    v[(i, un - 1)] = q * z + p * v[(i, un)];
                    v[(i, un)] = q * v[(i, un)] - p * z;
                }
            } else {
                // Complex pair.
                d[un - 1] = x + p;
                d[un] = x + p;
                e[un - 1] = z;
                e[un] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            // No convergence yet; form a shift.
            let un = n as usize;
            x = h[(un, un)];
            y = 0.0;
            w = 0.0;
            if l < n {
                y = h[(un - 1, un - 1)];
                w = h[(un, un - 1)] * h[(un - 1, un)];
            }

            // Wilkinson's original ad hoc shift.
            if iter == 10 {
                exshift += x;
                for i in low..=n {
                    let i = i as usize;
                    h[(i, i)] -= x;
                }
                s = h[(un, un - 1)].abs() + h[(un - 1, un - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }

            // MATLAB's new ad hoc shift.
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in low..=n {
                        let i = i as usize;
                        h[(i, i)] -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }

            iter += 1;

            // Look for two consecutive small sub-diagonal elements.
            let mut m = n - 2;
            while m >= l {
                let um = m as usize;
                z = h[(um, um)];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[(um + 1, um)] + h[(um, um + 1)];
                q = h[(um + 1, um + 1)] - z - r - s;
                r = h[(um + 2, um + 1)];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if h[(um, um - 1)].abs() * (q.abs() + r.abs())
                    < eps
                        * (p.abs()
                            * (h[(um - 1, um - 1)].abs() + z.abs() + h[(um + 1, um + 1)].abs()))
                {
                    break;
                }
                m -= 1;
            }

            for i in m + 2..=n {
                let i = i as usize;
                h[(i, i - 2)] = 0.0;
                if i as isize > m + 2 {
                    h[(i, i - 3)] = 0.0;
                }
            }

            // Double QR step on rows l..=n, columns m..=n.
            for k in m..=n - 1 {
                let uk = k as usize;
                let notlast = k != n - 1;
                if k != m {
                    p = h[(uk, uk - 1)];
                    q = h[(uk + 1, uk - 1)];
                    r = if notlast { h[(uk + 2, uk - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != m {
                        h[(uk, uk - 1)] = -s * x;
                    } else if l != m {
                        h[(uk, uk - 1)] = -h[(uk, uk - 1)];
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;

                    for j in uk..nn {
                        p = h[(uk, j)] + q * h[(uk + 1, j)];
                        if notlast {
                            p += r * h[(uk + 2, j)];
                            h[(uk + 2, j)] -= p * z;
                        }
                        h[(uk, j)] -= p * x;
                        h[(uk + 1, j)] -= p * y;
                    }

                    for i in 0..=(n.min(k + 3)) as usize {
                        p = x * h[(i, uk)] + y * h[(i, uk + 1)];
                        if notlast {
                            p += z * h[(i, uk + 2)];
                            h[(i, uk + 2)] -= p * r;
                        }
                        h[(i, uk)] -= p;
                        h[(i, uk + 1)] -= p * q;
                    }

                    for i in low as usize..=high as usize {
                        p = x * v[(i, uk)] + y * v[(i, uk + 1)];
                        if notlast {
                            p += z * v[(i, uk + 2)];
                            v[(i, uk + 2)] -= p * r;
                        }
                        v[(i, uk)] -= p;
                        v[(i, uk + 1)] -= p * q;
                    }
                }
            }
        }
    }

    // Backsubstitute to find vectors of the upper triangular form.
    if norm == 0.0 {
        return;
    }
    for n in (0..nn as isize).rev() {
        let un = n as usize;
        p = d[un];
        q = e[un];

        if q == 0.0 {
            // Real vector.
            let mut l = n;
            h[(un, un)] = 1.0;
            for i in (0..n).rev() {
                let ui = i as usize;
                w = h[(ui, ui)] - p;
                r = 0.0;
                for j in l as usize..=un {
                    r += h[(ui, j)] * h[(j, un)];
                }
                if e[ui] < 0.0 {
                    z = w;
                    s = r;
                } else {
                    l = i;
                    if e[ui] == 0.0 {
                        if w != 0.0 {
                            h[(ui, un)] = -r / w;
                        } else {
                            h[(ui, un)] = -r / (eps * norm);
                        }
                    } else {
                        // Solve real 2x2 equations.
                        x = h[(ui, ui + 1)];
                        y = h[(ui + 1, ui)];
                        q = (d[ui] - p) * (d[ui] - p) + e[ui] * e[ui];
                        t = (x * s - z * r) / q;
                        h[(ui, un)] = t;
                        if x.abs() > z.abs() {
                            h[(ui + 1, un)] = (-r - w * t) / x;
                        } else {
                            h[(ui + 1, un)] = (-s - y * t) / z;
                        }
                    }
                    // Overflow control.
                    t = h[(ui, un)].abs();
                    if (eps * t) * t > 1.0 {
                        for j in ui..=un {
                            h[(j, un)] /= t;
                        }
                    }
                }
            }
        } else if q < 0.0 && n >= 1 {
            // Complex vector; last component imaginary.
            let mut l = n - 1;
            if h[(un, un - 1)].abs() > h[(un - 1, un)].abs() {
                h[(un - 1, un - 1)] = q / h[(un, un - 1)];
                h[(un - 1, un)] = -(h[(un, un)] - p) / h[(un, un - 1)];
            } else {
                let (cr, ci) = cdiv(0.0, -h[(un - 1, un)], h[(un - 1, un - 1)] - p, q);
                h[(un - 1, un - 1)] = cr;
                h[(un - 1, un)] = ci;
            }
            h[(un, un - 1)] = 0.0;
            h[(un, un)] = 1.0;
            for i in (0..n - 1).rev() {
                let ui = i as usize;
                let mut ra = 0.0;
                let mut sa = 0.0;
                for j in l as usize..=un {
                    ra += h[(ui, j)] * h[(j, un - 1)];
                    sa += h[(ui, j)] * h[(j, un)];
                }
                w = h[(ui, ui)] - p;

                if e[ui] < 0.0 {
                    z = w;
                    r = ra;
                    s = sa;
                } else {
                    l = i;
                    if e[ui] == 0.0 {
                        let (cr, ci) = cdiv(-ra, -sa, w, q);
                        h[(ui, un - 1)] = cr;
                        h[(ui, un)] = ci;
                    } else {
                        // Solve complex 2x2 equations.
                        x = h[(ui, ui + 1)];
                        y = h[(ui + 1, ui)];
                        let mut vr = (d[ui] - p) * (d[ui] - p) + e[ui] * e[ui] - q * q;
                        let vi = (d[ui] - p) * 2.0 * q;
                        if vr == 0.0 && vi == 0.0 {
                            vr = eps
                                * norm
                                * (w.abs() + q.abs() + x.abs() + y.abs() + z.abs());
                        }
                        let (cr, ci) =
                            cdiv(x * r - z * ra + q * sa, x * s - z * sa - q * ra, vr, vi);
                        h[(ui, un - 1)] = cr;
                        h[(ui, un)] = ci;
                        if x.abs() > z.abs() + q.abs() {
                            h[(ui + 1, un - 1)] =
                                (-ra - w * h[(ui, un - 1)] + q * h[(ui, un)]) / x;
                            h[(ui + 1, un)] = (-sa - w * h[(ui, un)] - q * h[(ui, un - 1)]) / x;
                        } else {
                            let (cr, ci) =
                                cdiv(-r - y * h[(ui, un - 1)], -s - y * h[(ui, un)], z, q);
                            h[(ui + 1, un - 1)] = cr;
                            h[(ui + 1, un)] = ci;
                        }
                    }
                    // Overflow control.
                    t = h[(ui, un - 1)].abs().max(h[(ui, un)].abs());
                    if (eps * t) * t > 1.0 {
                        for j in ui..=un {
                            h[(j, un - 1)] /= t;
                            h[(j, un)] /= t;
                        }
                    }
                }
            }
        }
    }

    // Back-transform to eigenvectors of the original matrix.
    for j in (low..nn as isize).rev() {
        let uj = j as usize;
        for i in low as usize..=high as usize {
            z = 0.0;
            for k in low as usize..=(uj.min(high as usize)) {
                z += v[(i, k)] * h[(k, uj)];
            }
            v[(i, uj)] = z;
        }
    }
}
