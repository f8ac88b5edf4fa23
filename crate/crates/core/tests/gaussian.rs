use std::f64::consts::PI;

use langevin_core::gaussian_analysis::{
    kl_gaussian, lyapunov_gaussian, w2_gaussian_with, GaussianLaw, LyapunovMatrixS, W2Convention,
};
use langevin_core::{Matrix, RngStream};

fn law(mean: &[f64], cov: [[f64; 2]; 2]) -> GaussianLaw<f64> {
    GaussianLaw::new(mean.to_vec(), Matrix::from_rows(&[&cov[0], &cov[1]])).unwrap()
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn kl_matches_quadrature_in_one_dimension() {
    let cases = [(0.0, 1.0, 0.0, 1.0), (0.5, 2.0, -0.3, 0.7), (-1.2, 0.1, 0.4, 3.0), (2.0, 5.0, 0.0, 0.5)];
    for (mp, vp, mq, vq) in cases {
        let lp = |x: f64| -0.5 * (x - mp) * (x - mp) / vp - 0.5 * (2.0 * PI * vp).ln();
        let lq = |x: f64| -0.5 * (x - mq) * (x - mq) / vq - 0.5 * (2.0 * PI * vq).ln();
        let sd = vp.sqrt();
        let want = simpson(|x| lp(x).exp() * (lp(x) - lq(x)), mp - 15.0 * sd, mp + 15.0 * sd, 20_000);
        let p = GaussianLaw::new(vec![mp], Matrix::from_diag(&[vp])).unwrap();
        let q = GaussianLaw::new(vec![mq], Matrix::from_diag(&[vq])).unwrap();
        let got = kl_gaussian(&p, &q).unwrap();
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }
}

/// Symmetric square root of a 2×2 SPD matrix.
fn sqrt2(a: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let s = (a[0][0] * a[1][1] - a[0][1] * a[1][0]).sqrt();
    let t = (a[0][0] + a[1][1] + 2.0 * s).sqrt();
    [[(a[0][0] + s) / t, a[0][1] / t], [a[1][0] / t, (a[1][1] + s) / t]]
}

/// `max tr(A U B)` over orthogonal `U`, by a grid then golden-section search
/// over rotation and reflection angles.
fn max_coupling_trace(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> f64 {
    let tr = |phi: f64, reflect: bool| {
        let (c, s) = (phi.cos(), phi.sin());
        let u = if reflect { [[c, s], [s, -c]] } else { [[c, -s], [s, c]] };
        let mut t = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    t += a[i][j] * u[j][k] * b[k][i];
                }
            }
        }
        t
    };
    let mut best = f64::NEG_INFINITY;
    for reflect in [false, true] {
        let n = 720;
        let (mut k_best, mut v_best) = (0, f64::NEG_INFINITY);
        for k in 0..n {
            let v = tr(2.0 * PI * k as f64 / n as f64, reflect);
            if v > v_best {
                (k_best, v_best) = (k, v);
            }
        }
        let step = 2.0 * PI / n as f64;
        let (mut lo, mut hi) = ((k_best as f64 - 1.0) * step, (k_best as f64 + 1.0) * step);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let (x1, x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
            if tr(x1, reflect) < tr(x2, reflect) {
                lo = x1;
            } else {
                hi = x2;
            }
        }
        best = best.max(tr(0.5 * (lo + hi), reflect));
    }
    best
}

#[test]
fn w2_matches_coupling_optimum() {
    let cases = [
        ([0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]], [1.0, -1.0], [[2.0, 0.5], [0.5, 1.0]]),
        ([0.3, 2.0], [[0.5, -0.2], [-0.2, 0.3]], [0.0, 0.0], [[4.0, 1.0], [1.0, 0.6]]),
        ([1.0, 1.0], [[1.0, 0.9], [0.9, 1.0]], [1.0, 1.0], [[1.0, -0.9], [-0.9, 1.0]]),
    ];
    for (m1, s1, m2, s2) in cases {
        let p = law(&m1, s1);
        let q = law(&m2, s2);
        let (a, b) = (sqrt2(s1), sqrt2(s2));
        let mean2: f64 = m1.iter().zip(&m2).map(|(x, y)| (x - y) * (x - y)).sum();
        let want = (mean2 + s1[0][0] + s1[1][1] + s2[0][0] + s2[1][1] - 2.0 * max_coupling_trace(a, b)).max(0.0).sqrt();
        let got = w2_gaussian_with(&p, &q, W2Convention::Standard).unwrap();
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        let half = w2_gaussian_with(&p, &q, W2Convention::Half).unwrap();
        assert!((half - want / 2f64.sqrt()).abs() < 1e-6);
    }
}

#[test]
fn lyapunov_matches_monte_carlo() {
    // d = 1 phase space: coordinates (θ, r).
    let p_star = law(&[0.0, 0.0], [[1.0 / 2.0, 0.0], [0.0, 1.0 / 4.0]]);
    let p_t = law(&[0.7, -0.2], [[0.9, 0.3], [0.3, 0.5]]);
    let s = LyapunovMatrixS::new(2.0);
    let got = lyapunov_gaussian(&p_t, &p_star, &s).unwrap();

    let inv = |c: [[f64; 2]; 2]| {
        let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        [[c[1][1] / det, -c[0][1] / det], [-c[1][0] / det, c[0][0] / det]]
    };
    let (ct, cs) = ([[0.9, 0.3], [0.3, 0.5]], [[0.5, 0.0], [0.0, 0.25]]);
    let (it, is) = (inv(ct), inv(cs));
    let mt = [0.7, -0.2];
    let sb = s.block();
    let l = sqrt2(ct);
    let mut rng = RngStream::new(3);
    let n = 1_000_000;
    let mut vals = Vec::with_capacity(n);
    for _ in 0..n {
        let z: [f64; 2] = [rng.normal(), rng.normal()];
        let x = [mt[0] + l[0][0] * z[0] + l[0][1] * z[1], mt[1] + l[1][0] * z[0] + l[1][1] * z[1]];
        let dt = [x[0] - mt[0], x[1] - mt[1]];
        // ∇ln p_t - ∇ln p* and ln p_t - ln p*.
        let g: Vec<f64> = (0..2).map(|i| -(it[i][0] * dt[0] + it[i][1] * dt[1]) + is[i][0] * x[0] + is[i][1] * x[1]).collect();
        let qt = dt[0] * (it[0][0] * dt[0] + it[0][1] * dt[1]) + dt[1] * (it[1][0] * dt[0] + it[1][1] * dt[1]);
        let qs = x[0] * (is[0][0] * x[0] + is[0][1] * x[1]) + x[1] * (is[1][0] * x[0] + is[1][1] * x[1]);
        let det_t = ct[0][0] * ct[1][1] - ct[0][1] * ct[1][0];
        let det_s = cs[0][0] * cs[1][1];
        let log_ratio = -0.5 * qt + 0.5 * qs - 0.5 * (det_t / det_s).ln();
        let sg = [sb[0][0] * g[0] + sb[0][1] * g[1], sb[1][0] * g[0] + sb[1][1] * g[1]];
        vals.push(log_ratio + g[0] * sg[0] + g[1] * sg[1]);
    }
    let nf = n as f64;
    let mean = vals.iter().sum::<f64>() / nf;
    let se = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0) / nf).sqrt();
    assert!((got - mean).abs() < 3.0 * se, "{got} vs {mean} ± {se}");
}

#[test]
fn kl_is_invariant_under_joint_rotation() {
    let (c, s) = (0.6f64, 0.8f64);
    let rot = |m: [[f64; 2]; 2]| {
        let r = [[c, -s], [s, c]];
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        out[i][j] += r[i][k] * m[k][l] * r[j][l];
                    }
                }
            }
        }
        out
    };
    let (s1, s2) = ([[1.0, 0.2], [0.2, 0.5]], [[2.0, -0.4], [-0.4, 1.5]]);
    let (m1, m2) = ([0.3, -0.1], [1.0, 0.5]);
    let rv = |m: [f64; 2]| [c * m[0] - s * m[1], s * m[0] + c * m[1]];
    let a = kl_gaussian(&law(&m1, s1), &law(&m2, s2)).unwrap();
    let b = kl_gaussian(&law(&rv(m1), rot(s1)), &law(&rv(m2), rot(s2))).unwrap();
    assert!((a - b).abs() < 1e-12);
}
