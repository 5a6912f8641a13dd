//! Limited-memory BFGS with backtracking line search, used for
//! hyperparameter search. Box constraints are handled by the caller through a
//! smooth reparametrisation, so the optimizer itself is unconstrained.

use std::collections::VecDeque;

/// Objective value and gradient, or `None` where the objective is undefined.
pub(crate) type Evaluation = Option<(f64, Vec<f64>)>;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone)]
pub(crate) struct Lbfgs {
    memory: usize,
    s: VecDeque<Vec<f64>>,
    y: VecDeque<Vec<f64>>,
    pub x: Vec<f64>,
    pub f: f64,
    g: Vec<f64>,
    converged: bool,
}

impl Lbfgs {
    /// Starts from `x0`; consumes one evaluation. Returns `None` if the
    /// objective is undefined at the start.
    pub fn start(
        x0: Vec<f64>,
        eval: &mut impl FnMut(&[f64]) -> Evaluation,
        budget: &mut usize,
    ) -> Option<Self> {
        if *budget == 0 {
            return None;
        }
        *budget -= 1;
        let (f, g) = eval(&x0)?;
        Some(Self {
            memory: 7,
            s: VecDeque::new(),
            y: VecDeque::new(),
            x: x0,
            f,
            g,
            converged: false,
        })
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    fn direction(&self) -> Vec<f64> {
        let mut q = self.g.clone();
        let k = self.s.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            let rho = 1.0 / dot(&self.y[i], &self.s[i]);
            alpha[i] = rho * dot(&self.s[i], &q);
            for (qj, yj) in q.iter_mut().zip(&self.y[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        if k > 0 {
            let gamma = dot(&self.s[k - 1], &self.y[k - 1]) / dot(&self.y[k - 1], &self.y[k - 1]);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for i in 0..k {
            let rho = 1.0 / dot(&self.y[i], &self.s[i]);
            let beta = rho * dot(&self.y[i], &q);
            for (qj, sj) in q.iter_mut().zip(&self.s[i]) {
                *qj += (alpha[i] - beta) * sj;
            }
        }
        q.iter().map(|v| -v).collect()
    }

    /// Runs iterations until the budget is spent or the search converges.
    pub fn run(&mut self, eval: &mut impl FnMut(&[f64]) -> Evaluation, budget: &mut usize) {
        while *budget > 0 && !self.converged {
            self.iterate(eval, budget);
        }
    }

    fn iterate(&mut self, eval: &mut impl FnMut(&[f64]) -> Evaluation, budget: &mut usize) {
        let gnorm = self.g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm < 1e-6 {
            self.converged = true;
            return;
        }
        let mut dir = self.direction();
        let mut slope = dot(&dir, &self.g);
        if !(slope < 0.0) {
            self.s.clear();
            self.y.clear();
            dir = self.g.iter().map(|v| -v).collect();
            slope = -dot(&self.g, &self.g);
        }
        let mut step = if self.s.is_empty() {
            (1.0 / gnorm).min(1.0)
        } else {
            1.0
        };
        while *budget > 0 {
            *budget -= 1;
            let trial: Vec<f64> = self.x.iter().zip(&dir).map(|(x, d)| x + step * d).collect();
            if let Some((f_new, g_new)) = eval(&trial) {
                if f_new.is_finite() && f_new <= self.f + 1e-4 * step * slope {
                    let s: Vec<f64> = trial.iter().zip(&self.x).map(|(a, b)| a - b).collect();
                    let y: Vec<f64> = g_new.iter().zip(&self.g).map(|(a, b)| a - b).collect();
                    if dot(&s, &y) > 1e-12 {
                        if self.s.len() == self.memory {
                            self.s.pop_front();
                            self.y.pop_front();
                        }
                        self.s.push_back(s);
                        self.y.push_back(y);
                    }
                    let improvement = self.f - f_new;
                    self.x = trial;
                    self.f = f_new;
                    self.g = g_new;
                    if improvement.abs() <= 1e-10 * self.f.abs().max(1.0) {
                        self.converged = true;
                    }
                    return;
                }
            }
            step *= 0.5;
            if step < 1e-12 {
                break;
            }
        }
        if *budget > 0 {
            self.converged = true;
        }
    }
}
