//! Bilinear rotation of square images about their center.
//!
//! `R_α(img)(p) = img(Rot(-α) p)`: the content turns counterclockwise by α
//! in a frame with x to the right and y up (row 0 at the top).

use crate::float::Float;

/// Four source taps `(index, weight)` for output pixel `(i, j)`; taps that
/// fall outside the grid are dropped.
fn taps(n: usize, sin: f64, cos: f64, i: usize, j: usize, mut f: impl FnMut(usize, f64)) {
    let c = 0.5 * (n as f64 - 1.0);
    let x = j as f64 - c;
    let y = c - i as f64;
    let xs = cos * x + sin * y;
    let ys = -sin * x + cos * y;
    let col = xs + c;
    let row = c - ys;
    let r0 = row.floor();
    let c0 = col.floor();
    let fr = row - r0;
    let fc = col - c0;
    let (r0, c0) = (r0 as isize, c0 as isize);
    let n = n as isize;
    for (dr, wr) in [(0, 1.0 - fr), (1, fr)] {
        for (dc, wc) in [(0, 1.0 - fc), (1, fc)] {
            let (r, cc) = (r0 + dr, c0 + dc);
            let w = wr * wc;
            if w != 0.0 && r >= 0 && cc >= 0 && r < n && cc < n {
                f((r * n + cc) as usize, w);
            }
        }
    }
}

fn sin_cos(alpha_deg: f64) -> (f64, f64) {
    // Exact values on quarter turns keep those rotations lossless.
    let q = alpha_deg / 90.0;
    if q == q.round() {
        match (q as i64).rem_euclid(4) {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        alpha_deg.to_radians().sin_cos()
    }
}

/// Rotates one `n x n` plane.
pub fn rotate_plane<T: Float>(src: &[T], n: usize, alpha_deg: f64, out: &mut [T]) {
    let (s, c) = sin_cos(alpha_deg);
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            taps(n, s, c, i, j, |k, w| acc += w * src[k].f64());
            out[i * n + j] = T::of(acc);
        }
    }
}

/// Adjoint of [`rotate_plane`]: scatters `dy` back onto the source grid.
pub fn rotate_plane_adjoint<T: Float>(dy: &[T], n: usize, alpha_deg: f64, dx: &mut [T]) {
    let (s, c) = sin_cos(alpha_deg);
    for i in 0..n {
        for j in 0..n {
            let g = dy[i * n + j];
            taps(n, s, c, i, j, |k, w| dx[k] = dx[k] + T::of(w) * g);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_turn_is_an_index_permutation() {
        let n = 5;
        let src: Vec<f64> = (0..n * n).map(|i| i as f64).collect();
        let mut out = vec![0.0; n * n];
        rotate_plane(&src, n, 90.0, &mut out);
        // Counterclockwise: the right column moves to the top row.
        for i in 0..n {
            for j in 0..n {
                assert_eq!(out[i * n + j], src[j * n + (n - 1 - i)]);
            }
        }
    }

    #[test]
    fn adjoint_identity() {
        let n = 9;
        let x: Vec<f64> = (0..n * n).map(|i| (i as f64 * 0.3).sin()).collect();
        let y: Vec<f64> = (0..n * n).map(|i| (i as f64 * 0.7).cos()).collect();
        let mut rx = vec![0.0; n * n];
        rotate_plane(&x, n, 33.0, &mut rx);
        let mut aty = vec![0.0; n * n];
        rotate_plane_adjoint(&y, n, 33.0, &mut aty);
        let lhs: f64 = rx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
