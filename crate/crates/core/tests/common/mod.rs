#![allow(dead_code)]

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use eulerlab::spectral::Spectral;

/// Real band-limited field with uniformly random coefficients on `0 < |m|_inf <= kmax`,
/// scaled to unit max norm.
pub fn random_band_limited(sp: &Spectral, kmax: i64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let c: Vec<Complex64> = (0..sp.spectral_len())
        .map(|idx| {
            let m = sp.mode_index(idx);
            if m == [0; 3] || m.iter().any(|v| v.abs() > kmax) {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            }
        })
        .collect();
    let f = sp.inverse(&c);
    let m = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    f.into_iter().map(|v| v / m).collect()
}

/// Discrete Green's function of `-Laplacian` (7-point stencil, zero Dirichlet data) on a
/// box of side lengths `l` with `n` intervals per axis, for a unit point source at node
/// `src`. Solved by conjugate gradients; returns a lookup by interior node index.
pub fn fd_green(n: usize, src: [usize; 3], l: [f64; 3]) -> impl Fn([usize; 3]) -> f64 {
    let h = [l[0] / n as f64, l[1] / n as f64, l[2] / n as f64];
    let m = n - 1;
    let id = move |i: usize, j: usize, k: usize| (i - 1) + m * ((j - 1) + m * (k - 1));
    let len = m * m * m;
    let mut b = vec![0.0; len];
    b[id(src[0], src[1], src[2])] = 1.0 / (h[0] * h[1] * h[2]);
    let apply = |u: &[f64], out: &mut [f64]| {
        for k in 1..=m {
            for j in 1..=m {
                for i in 1..=m {
                    let g = |a: usize, bb: usize, c: usize| {
                        if a == 0 || bb == 0 || c == 0 || a == n || bb == n || c == n {
                            0.0
                        } else {
                            u[id(a, bb, c)]
                        }
                    };
                    let c = u[id(i, j, k)];
                    out[id(i, j, k)] = (2.0 * c - g(i - 1, j, k) - g(i + 1, j, k)) / (h[0] * h[0])
                        + (2.0 * c - g(i, j - 1, k) - g(i, j + 1, k)) / (h[1] * h[1])
                        + (2.0 * c - g(i, j, k - 1) - g(i, j, k + 1)) / (h[2] * h[2]);
                }
            }
        }
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = vec![0.0; len];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut ap = vec![0.0; len];
    let mut rr = dot(&r, &r);
    let stop = 1e-24 * rr;
    for _ in 0..10 * n {
        if rr <= stop {
            break;
        }
        apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..len {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let next = dot(&r, &r);
        let beta = next / rr;
        for i in 0..len {
            p[i] = r[i] + beta * p[i];
        }
        rr = next;
    }
    move |q: [usize; 3]| x[id(q[0], q[1], q[2])]
}
