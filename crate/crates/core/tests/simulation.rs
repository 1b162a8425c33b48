//! Checks io-equations against numerically integrated trajectories.

use compid_core::io::io_equations;
use compid_core::model::{compartmental_matrix, validate_model, CompModel, LeakConvention, RawModel};
use compid_core::poly::MPoly;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn eval_f64(p: &MPoly, x: &[f64]) -> f64 {
    p.terms()
        .map(|(m, c)| {
            m.exponents()
                .iter()
                .zip(x)
                .fold(c.to_f64().unwrap(), |acc, (&e, &v)| acc * v.powi(e as i32))
        })
        .sum()
}

fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

/// `k`-th derivative of `1 + sin(w t)`.
fn input_derivative(w: f64, t: f64, k: usize) -> f64 {
    let base = 1.0 * (k == 0) as u8 as f64;
    let s = w.powi(k as i32);
    base + match k % 4 {
        0 => s * (w * t).sin(),
        1 => s * (w * t).cos(),
        2 => -s * (w * t).sin(),
        _ => -s * (w * t).cos(),
    }
}

fn check_model(m: &CompModel, params: &[f64]) {
    let n = m.n();
    let sym = compartmental_matrix(m);
    let a: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| eval_f64(&sym[(i, j)], params)).collect())
        .collect();
    let freq = |j: usize| 1.0 + j as f64 * 0.7;
    let rhs = |t: f64, x: &[f64]| -> Vec<f64> {
        let mut d = mat_vec(&a, x);
        for &j in m.inputs() {
            d[j] += input_derivative(freq(j), t, 0);
        }
        d
    };
    let dt = 1e-3;
    let mut x = vec![0.0; n];
    let mut t = 0.0;
    let eqs = io_equations(m);
    for _ in 0..800 {
        let k1 = rhs(t, &x);
        let k2 = rhs(t + dt / 2.0, &x.iter().zip(&k1).map(|(a, b)| a + dt / 2.0 * b).collect::<Vec<_>>());
        let k3 = rhs(t + dt / 2.0, &x.iter().zip(&k2).map(|(a, b)| a + dt / 2.0 * b).collect::<Vec<_>>());
        let k4 = rhs(t + dt, &x.iter().zip(&k3).map(|(a, b)| a + dt * b).collect::<Vec<_>>());
        for i in 0..n {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t += dt;
    }
    for eq in &eqs {
        let o = eq.output;
        let order = eq.denominator.degree();
        // y^(k) = (A^k x)_o + sum_m (A^(k-1-m) b_j)_o u_j^(m)
        let mut powers_x = vec![x.clone()];
        for _ in 0..order {
            powers_x.push(mat_vec(&a, powers_x.last().unwrap()));
        }
        let y = |k: usize| -> f64 {
            let mut v = powers_x[k][o];
            for &j in m.inputs() {
                let mut b = vec![0.0; n];
                b[j] = 1.0;
                for mm in (0..k).rev() {
                    v += b[o] * input_derivative(freq(j), t, mm);
                    b = mat_vec(&a, &b);
                }
            }
            v
        };
        let mut lhs = 0.0;
        let mut scale: f64 = 1.0;
        for (k, c) in eq.denominator.coeffs().iter().enumerate() {
            let term = eval_f64(c, params) * y(k);
            scale = scale.max(term.abs());
            lhs += term;
        }
        let mut rhs_v = 0.0;
        for (j, num) in &eq.numerators {
            for (k, c) in num.coeffs().iter().enumerate() {
                let term = eval_f64(c, params) * input_derivative(freq(*j), t, k);
                scale = scale.max(term.abs());
                rhs_v += term;
            }
        }
        assert!(
            (lhs - rhs_v).abs() <= 1e-8 * scale,
            "{m}: output {} residual {} (scale {scale})",
            o + 1,
            lhs - rhs_v
        );
    }
}

#[test]
fn io_equations_hold_along_trajectories() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut fixed = vec![
        validate_model(&RawModel {
            compartments: 4,
            edges: vec![(1, 2), (2, 3), (3, 4), (4, 1)],
            inputs: vec![1],
            outputs: vec![2],
            leaks: vec![1, 3],
            leak_convention: LeakConvention::Separate,
        })
        .unwrap(),
        validate_model(&RawModel {
            compartments: 3,
            edges: vec![(1, 2), (2, 3), (3, 2), (3, 1)],
            inputs: vec![1],
            outputs: vec![1],
            leaks: vec![1, 2, 3],
            leak_convention: LeakConvention::Total,
        })
        .unwrap(),
    ];
    for _ in 0..30 {
        let n = rng.gen_range(1..=4);
        let mut edges = Vec::new();
        for a in 1..=n {
            for b in 1..=n {
                if a != b && rng.gen_bool(0.4) {
                    edges.push((a, b));
                }
            }
        }
        let subset = |rng: &mut ChaCha8Rng, nonempty: bool| -> Vec<usize> {
            let mut s: Vec<usize> = (1..=n).filter(|_| rng.gen_bool(0.4)).collect();
            if nonempty && s.is_empty() {
                s.push(rng.gen_range(1..=n));
            }
            s
        };
        let convention = if rng.gen_bool(0.5) {
            LeakConvention::Separate
        } else {
            LeakConvention::Total
        };
        fixed.push(
            validate_model(&RawModel {
                compartments: n,
                edges,
                inputs: subset(&mut rng, true),
                outputs: subset(&mut rng, true),
                leaks: subset(&mut rng, false),
                leak_convention: convention,
            })
            .unwrap(),
        );
    }
    for m in &fixed {
        let params: Vec<f64> = (0..m.num_params()).map(|_| rng.gen_range(0.2..1.5)).collect();
        check_model(m, &params);
    }
}
