//! Eigenvalues of 3x3 real matrices through the characteristic cubic.
//!
//! The cubic `l^3 + a l^2 + b l + c` is solved in closed form after scaling the
//! matrix by its largest entry. Branch convention: the real root is taken from
//! Cardano's formula when the discriminant is positive and from the
//! trigonometric form (largest root, `k = 0`) otherwise. The remaining pair
//! comes from the deflated quadratic, and every root gets two Newton polishing
//! steps on the scaled cubic.

use num_complex::Complex64;

pub type Mat3 = [[f64; 3]; 3];

/// Coefficients `(a, b, c)` of `det(l I - M) = l^3 + a l^2 + b l + c`.
pub fn characteristic(m: &Mat3) -> [f64; 3] {
    let trace = m[0][0] + m[1][1] + m[2][2];
    let minors = m[0][0] * m[1][1] - m[0][1] * m[1][0] + m[0][0] * m[2][2] - m[0][2] * m[2][0]
        + m[1][1] * m[2][2]
        - m[1][2] * m[2][1];
    [-trace, minors, -det(m)]
}

pub fn det(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Roots of `l^3 + a l^2 + b l + c`.
pub fn cubic_roots(a: f64, b: f64, c: f64) -> [Complex64; 3] {
    let shift = a / 3.0;
    let pp = b - a * a / 3.0;
    let qq = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let disc = (qq / 2.0).powi(2) + (pp / 3.0).powi(3);

    let depressed = if pp == 0.0 {
        (-qq).cbrt()
    } else if disc > 0.0 {
        let sq = disc.sqrt();
        let u = (-qq / 2.0 - qq.signum() * sq).cbrt();
        if u == 0.0 {
            0.0
        } else {
            u - pp / (3.0 * u)
        }
    } else {
        let r = (-pp / 3.0).sqrt();
        let arg = (3.0 * qq / (2.0 * pp) / r).clamp(-1.0, 1.0);
        2.0 * r * (arg.acos() / 3.0).cos()
    };
    let mut real = depressed - shift;
    real = polish_real(a, b, c, real);

    let e = a + real;
    let f = b + real * e;
    let qd = e * e - 4.0 * f;
    let (r1, r2) = if qd >= 0.0 {
        let s = qd.sqrt();
        let big = -0.5 * (e + e.signum() * s);
        if big == 0.0 {
            (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
        } else {
            (Complex64::new(big, 0.0), Complex64::new(f / big, 0.0))
        }
    } else {
        let im = 0.5 * (-qd).sqrt();
        (Complex64::new(-0.5 * e, im), Complex64::new(-0.5 * e, -im))
    };
    let r1 = polish_complex(a, b, c, r1);
    let r2 = if qd < 0.0 {
        r1.conj()
    } else {
        polish_complex(a, b, c, r2)
    };
    [Complex64::new(real, 0.0), r1, r2]
}

fn polish_real(a: f64, b: f64, c: f64, mut x: f64) -> f64 {
    for _ in 0..2 {
        let f = ((x + a) * x + b) * x + c;
        let d = (3.0 * x + 2.0 * a) * x + b;
        if d == 0.0 || !d.is_finite() {
            break;
        }
        let next = x - f / d;
        if !next.is_finite() {
            break;
        }
        let fn_ = ((next + a) * next + b) * next + c;
        if fn_.abs() > f.abs() {
            break;
        }
        x = next;
    }
    x
}

fn polish_complex(a: f64, b: f64, c: f64, mut z: Complex64) -> Complex64 {
    for _ in 0..2 {
        let f = ((z + a) * z + b) * z + c;
        let d = (3.0 * z + 2.0 * a) * z + b;
        if d.norm() == 0.0 {
            break;
        }
        let next = z - f / d;
        let fn_ = ((next + a) * next + b) * next + c;
        if !next.re.is_finite() || !next.im.is_finite() || fn_.norm() > f.norm() {
            break;
        }
        z = next;
    }
    z
}

/// Eigenvalues sorted by descending real part (ties: descending imaginary part).
pub fn eigenvalues(m: &Mat3) -> [Complex64; 3] {
    let scale = m
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return [Complex64::new(0.0, 0.0); 3];
    }
    let mut scaled = *m;
    for row in scaled.iter_mut() {
        for v in row.iter_mut() {
            *v /= scale;
        }
    }
    let [a, b, c] = characteristic(&scaled);
    let mut roots = cubic_roots(a, b, c).map(|z| z * scale);
    roots.sort_by(|x, y| {
        y.re.partial_cmp(&x.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(y.im.partial_cmp(&x.im).unwrap_or(std::cmp::Ordering::Equal))
    });
    roots
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(z: Complex64, re: f64, im: f64) -> bool {
        (z.re - re).abs() < 1e-12 && (z.im - im).abs() < 1e-12
    }

    #[test]
    fn identity() {
        let m = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for z in eigenvalues(&m) {
            assert!(close(z, 1.0, 0.0), "{z}");
        }
    }

    #[test]
    fn diagonal() {
        let m = [[-2.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -3.0]];
        let ev = eigenvalues(&m);
        assert!(close(ev[0], -1.0, 0.0));
        assert!(close(ev[1], -2.0, 0.0));
        assert!(close(ev[2], -3.0, 0.0));
    }

    #[test]
    fn companion_of_l3_plus_l() {
        // companion matrix of l^3 + 0 l^2 + 1 l + 0
        let m = [[0.0, 0.0, 0.0], [1.0, 0.0, -1.0], [0.0, 1.0, 0.0]];
        let ev = eigenvalues(&m);
        let mut found = [false; 3];
        for z in ev {
            if close(z, 0.0, 0.0) {
                found[0] = true;
            }
            if close(z, 0.0, 1.0) {
                found[1] = true;
            }
            if close(z, 0.0, -1.0) {
                found[2] = true;
            }
        }
        assert_eq!(found, [true; 3], "{ev:?}");
    }

    #[test]
    fn zero_matrix() {
        assert_eq!(eigenvalues(&[[0.0; 3]; 3]), [Complex64::new(0.0, 0.0); 3]);
    }

    #[test]
    fn widely_separated_scales() {
        // rotation block at 3e7 with slow real mode at -1e4
        let m = [[-1e7, -3e7, 0.0], [3e7, -1e7, 0.0], [0.0, 0.0, -1e4]];
        let ev = eigenvalues(&m);
        assert!((ev[0].re + 1e4).abs() < 1e-6 * 1e4);
        assert!((ev[1].re + 1e7).abs() < 1e-9 * 1e7);
        assert!((ev[1].im - 3e7).abs() < 1e-9 * 3e7);
    }
}
