//! Multi-fidelity test functions. `t` is the 1-based fidelity, highest last.

use std::f64::consts::PI;

pub fn forrester(x: &[f64], t: usize) -> f64 {
    let hf = x.iter().map(|&v| (6.0 * v - 2.0).powi(2) * (12.0 * v - 4.0).sin()).sum::<f64>() / x.len() as f64;
    if t == 2 {
        return hf;
    }
    let shift = x.iter().map(|&v| 10.0 * (v - 0.5)).sum::<f64>() / x.len() as f64;
    0.5 * hf + shift - 5.0
}

fn bohachevsky_hf(x1: f64, x2: f64) -> f64 {
    x1 * x1 + 2.0 * x2 * x2 - 0.3 * (3.0 * PI * x1).cos() - 0.4 * (4.0 * PI * x2).cos() + 0.7
}

pub fn bohachevsky(x: &[f64], t: usize) -> f64 {
    if t == 2 {
        bohachevsky_hf(x[0], x[1])
    } else {
        bohachevsky_hf(0.7 * x[0], x[1]) + x[0] * x[1] - 12.0
    }
}

fn booth_hf(x1: f64, x2: f64) -> f64 {
    (x1 + 2.0 * x2 - 7.0).powi(2) + (2.0 * x1 + x2 - 5.0).powi(2)
}

pub fn booth(x: &[f64], t: usize) -> f64 {
    if t == 2 {
        booth_hf(x[0], x[1])
    } else {
        booth_hf(0.4 * x[0], x[1]) + 1.7 * x[0] * x[1] - x[0] + 2.0 * x[1]
    }
}

/// Inputs `[rw, r, Tu, Hu, Tl, Hl, L, Kw]`.
pub fn borehole(x: &[f64], t: usize) -> f64 {
    let (a, b) = if t == 2 { (2.0 * PI, 1.0) } else { (5.0, 1.5) };
    let [rw, r, tu, hu, tl, hl, l, kw] = [x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7]];
    let log_ratio = (r / rw).ln();
    a * tu * (hu - hl) / (log_ratio * (b + 2.0 * l * tu / (log_ratio * rw * rw * kw) + tu / tl))
}

fn branin_base(x1: f64, x2: f64) -> f64 {
    (x2 - 5.1 * x1 * x1 / (4.0 * PI * PI) + 5.0 * x1 / PI - 6.0).powi(2)
        + 10.0 * (1.0 - 1.0 / (8.0 * PI)) * x1.cos()
        + 10.0
}

pub fn branin(x: &[f64], t: usize) -> f64 {
    let (x1, x2) = (x[0], x[1]);
    if t == 2 {
        branin_base(x1, x2) - 22.5 * x2
    } else {
        branin_base(0.7 * x1, 0.7 * x2) - 15.75 * x2 + 20.0 * (0.9 + x1).powi(2) - 50.0
    }
}

fn currin_hf(x1: f64, x2: f64) -> f64 {
    let f1 = if x2 <= 1e-8 { 1.0 } else { 1.0 - (-1.0 / (2.0 * x2)).exp() };
    let f2 = 2300.0 * x1.powi(3) + 1900.0 * x1 * x1 + 2092.0 * x1 + 60.0;
    let f3 = 100.0 * x1.powi(3) + 500.0 * x1 * x1 + 4.0 * x1 + 20.0;
    f1 * f2 / f3
}

pub fn currin(x: &[f64], t: usize) -> f64 {
    let (x1, x2) = (x[0], x[1]);
    if t == 2 {
        return currin_hf(x1, x2);
    }
    let up = x2 + 0.05;
    let down = (x2 - 0.05).max(0.0);
    (currin_hf(x1 + 0.05, up) + currin_hf(x1 + 0.05, down) + currin_hf(x1 - 0.05, up) + currin_hf(x1 - 0.05, down))
        / 4.0
}

const HARTMANN6_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];

const HARTMANN6_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

pub fn hartmann6(x: &[f64], t: usize) -> f64 {
    let (alpha, high) = if t == 2 {
        ([1.0, 1.2, 3.0, 3.2], true)
    } else {
        ([0.5, 0.5, 2.0, 4.0], false)
    };
    let c = (-4.0f64 / 9.0).exp();
    let sum: f64 = (0..4)
        .map(|i| {
            let inner: f64 = -(0..6).map(|j| HARTMANN6_A[i][j] * (x[j] - HARTMANN6_P[i][j]).powi(2)).sum::<f64>();
            let e = if high { inner.exp() } else { (c + c * (inner + 4.0) / 9.0).powi(9) };
            alpha[i] * e
        })
        .sum();
    -(2.58 + sum) / 1.94
}

fn himmelblau_hf(x1: f64, x2: f64) -> f64 {
    (x1 * x1 + x2 - 11.0).powi(2) + (x2 * x2 + x1 - 7.0).powi(2)
}

pub fn himmelblau(x: &[f64], t: usize) -> f64 {
    if t == 2 {
        himmelblau_hf(x[0], x[1])
    } else {
        himmelblau_hf(0.5 * x[0], 0.8 * x[1]) + x[1].powi(3) - (x[0] + 1.0).powi(2)
    }
}

fn park91a_hf(x: &[f64]) -> f64 {
    let [x1, x2, x3, x4] = [x[0], x[1], x[2], x[3]];
    x1 / 2.0 * ((1.0 + (x2 + x3 * x3) * x4 / (x1 * x1)).sqrt() - 1.0) + (x1 + 3.0 * x4) * (1.0 + x3.sin()).exp()
}

pub fn park91a(x: &[f64], t: usize) -> f64 {
    let hf = park91a_hf(x);
    if t == 2 {
        hf
    } else {
        (1.0 + x[0].sin() / 10.0) * hf - 2.0 * x[0] + x[1] * x[1] + x[2] * x[2] + 0.5
    }
}

pub fn park91b(x: &[f64], t: usize) -> f64 {
    let hf = 2.0 / 3.0 * (x[0] + x[1]).exp() - x[3] * x[2].sin() + x[2];
    if t == 2 {
        hf
    } else {
        1.2 * hf - 1.0
    }
}

fn camel_hf(x1: f64, x2: f64) -> f64 {
    (4.0 - 2.1 * x1 * x1 + x1.powi(4) / 3.0) * x1 * x1 + x1 * x2 + (-4.0 + 4.0 * x2 * x2) * x2 * x2
}

pub fn six_hump_camelback(x: &[f64], t: usize) -> f64 {
    if t == 2 {
        camel_hf(x[0], x[1])
    } else {
        camel_hf(0.7 * x[0], 0.7 * x[1]) + x[0] * x[1] - 15.0
    }
}

/// Standard Branin with `a = 1, b = 5.1 / 4 pi^2, c = 5 / pi, r = 6, s = 10,
/// t = 1 / 8 pi`.
fn branin_standard(x1: f64, x2: f64) -> f64 {
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    (x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - 1.0 / (8.0 * PI)) * x1.cos() + 10.0
}

fn branin3f_medium(x1: f64, x2: f64) -> f64 {
    (10.0 * branin_standard(x1 - 2.0, x2 - 2.0).sqrt() + 2.0 * (x1 - 0.5) - 3.0 * (3.0 * x2 - 1.0) - 1.0) / 100.0
}

pub fn branin3f(x: &[f64], t: usize) -> f64 {
    let (x1, x2) = (x[0], x[1]);
    match t {
        3 => branin_standard(x1, x2) / 100.0,
        2 => branin3f_medium(x1, x2),
        _ => (branin3f_medium(1.2 * (x1 + 2.0), 1.2 * (x2 + 2.0)) * 100.0 - 3.0 * x2 + 1.0) / 100.0,
    }
}

const HARTMANN3_A: [[f64; 3]; 4] = [[3.0, 10.0, 30.0], [0.1, 10.0, 35.0], [3.0, 10.0, 30.0], [0.1, 10.0, 35.0]];

const HARTMANN3_P: [[f64; 3]; 4] = [
    [0.3689, 0.1170, 0.2673],
    [0.4699, 0.4387, 0.7470],
    [0.1091, 0.8732, 0.5547],
    [0.0381, 0.5743, 0.8828],
];

pub fn hartmann3f(x: &[f64], t: usize) -> f64 {
    const ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
    const DELTA: [f64; 4] = [0.01, -0.01, -0.1, 0.1];
    let steps = (3 - t.min(3)) as f64;
    (0..4)
        .map(|i| {
            let inner: f64 = (0..3).map(|j| HARTMANN3_A[i][j] * (x[j] - HARTMANN3_P[i][j]).powi(2)).sum();
            (ALPHA[i] + steps * DELTA[i]) * (-inner).exp()
        })
        .sum()
}
