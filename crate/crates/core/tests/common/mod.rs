//! A four-point toy world whose expectations can be enumerated exactly.
#![allow(dead_code)]

use elf_core::{Dataset, LabeledExample, StochasticLinearClassifier};
use rand::Rng;

pub const XS: [f64; 4] = [-1.5, -0.5, 0.5, 1.5];
pub const P_X: [f64; 4] = [0.1, 0.2, 0.3, 0.4];
/// P(t = 1 | x)
pub const P_T1: [f64; 4] = [0.3, 0.6, 0.4, 0.7];
/// P(y = 1 | x, t)
pub const P_Y1: [[f64; 2]; 4] = [[0.2, 0.1], [0.4, 0.3], [0.7, 0.5], [0.9, 0.6]];
/// Delayed impact, deterministic in (x, ŷ).
pub const IMPACT: [[f64; 2]; 4] = [[0.5, 2.0], [1.0, 1.5], [0.2, 3.0], [1.2, 0.7]];

/// One cell of the logging joint distribution.
#[derive(Debug, Clone)]
pub struct Cell {
    pub example: LabeledExample,
    pub prob: f64,
    pub xi: usize,
}

pub fn behavior() -> StochasticLinearClassifier {
    StochasticLinearClassifier::from_theta(2, 1, vec![0.0, 0.0, 0.8, 0.2]).unwrap()
}

/// Every `(x, t, y, ŷ)` with its probability under `beta`.
pub fn cells(beta: &StochasticLinearClassifier) -> Vec<Cell> {
    let mut out = Vec::new();
    for xi in 0..4 {
        let x = vec![XS[xi]];
        for t in 0..2 {
            let pt = if t == 1 { P_T1[xi] } else { 1.0 - P_T1[xi] };
            for y in 0..2 {
                let py = if y == 1 { P_Y1[xi][t] } else { 1.0 - P_Y1[xi][t] };
                for y_hat in 0..2 {
                    let prob = P_X[xi] * pt * py * beta.prob(&x, y_hat);
                    let example = LabeledExample { x: x.clone(), y, t, y_hat_beta: y_hat, i_beta: IMPACT[xi][y_hat] };
                    out.push(Cell { example, prob, xi });
                }
            }
        }
    }
    out
}

pub fn dataset(examples: Vec<LabeledExample>) -> Dataset {
    Dataset::new(examples, 1, 2, 2).unwrap()
}

/// Exact `E[I^π | t = group]`, or over everyone when `group` is `None`.
pub fn exact_impact(pi: &StochasticLinearClassifier, group: Option<usize>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for xi in 0..4 {
        let x = [XS[xi]];
        for t in 0..2 {
            if group.is_some_and(|g| g != t) {
                continue;
            }
            let p = P_X[xi] * if t == 1 { P_T1[xi] } else { 1.0 - P_T1[xi] };
            num += p * (pi.prob(&x, 0) * IMPACT[xi][0] + pi.prob(&x, 1) * IMPACT[xi][1]);
            den += p;
        }
    }
    num / den
}

/// `n` i.i.d. draws from the logging distribution.
pub fn sample<R: Rng + ?Sized>(cells: &[Cell], n: usize, rng: &mut R) -> Dataset {
    let examples = (0..n)
        .map(|_| {
            let mut u: f64 = rng.random();
            for c in cells {
                u -= c.prob;
                if u < 0.0 {
                    return c.example.clone();
                }
            }
            cells.last().unwrap().example.clone()
        })
        .collect();
    dataset(examples)
}
