//! SGD with momentum, Adam, and learning-rate schedules.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Learning-rate schedule applied on top of the base rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Schedule {
    Constant,
    /// Half-cosine decay over `total_steps`: lr(s) = base * 0.5 * (1 + cos(pi * s / S)).
    Cosine { total_steps: usize },
}

impl Schedule {
    pub fn rate(&self, base: f64, step: usize) -> f64 {
        match *self {
            Schedule::Constant => base,
            Schedule::Cosine { total_steps } => {
                if total_steps == 0 {
                    return base;
                }
                let s = step.min(total_steps) as f64 / total_steps as f64;
                base * 0.5 * (1.0 + (std::f64::consts::PI * s).cos())
            }
        }
    }
}

/// SGD-with-momentum state for one parameter matrix.
#[derive(Clone, Debug)]
pub struct SgdState {
    pub learning_rate: f64,
    pub momentum: f64,
    pub schedule: Schedule,
    velocity: Matrix,
}

impl SgdState {
    pub fn new(learning_rate: f64, momentum: f64, schedule: Schedule, rows: usize, cols: usize) -> Self {
        SgdState {
            learning_rate,
            momentum,
            schedule,
            velocity: Matrix::zeros(rows, cols),
        }
    }

    /// velocity <- momentum * velocity - lr(step) * grad; params += velocity.
    pub fn step(&mut self, params: &mut Matrix, grad: &Matrix, step: usize) -> Result<()> {
        if !params.same_shape(grad) || !params.same_shape(&self.velocity) {
            return Err(Error::ShapeMismatch {
                op: "sgd_step",
                expected: format!("{:?}", params.shape()),
                got: format!("{:?} / {:?}", grad.shape(), self.velocity.shape()),
            });
        }
        let lr = self.schedule.rate(self.learning_rate, step);
        for ((v, p), g) in self
            .velocity
            .data_mut()
            .iter_mut()
            .zip(params.data_mut().iter_mut())
            .zip(grad.data().iter())
        {
            *v = self.momentum * *v - lr * g;
            *p += *v;
        }
        if !params.is_finite() {
            return Err(Error::Numerical("sgd_step produced non-finite parameters".into()));
        }
        Ok(())
    }
}

/// Adam state for one parameter matrix.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Matrix,
    v: Matrix,
    t: usize,
}

impl AdamState {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64, rows: usize, cols: usize) -> Self {
        AdamState {
            learning_rate,
            beta1,
            beta2,
            eps: 1e-8,
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut Matrix, grad: &Matrix) -> Result<()> {
        if !params.same_shape(grad) || !params.same_shape(&self.m) {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                expected: format!("{:?}", params.shape()),
                got: format!("{:?} / {:?}", grad.shape(), self.m.shape()),
            });
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((m, v), p), g) in self
            .m
            .data_mut()
            .iter_mut()
            .zip(self.v.data_mut().iter_mut())
            .zip(params.data_mut().iter_mut())
            .zip(grad.data().iter())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *p -= self.learning_rate * mhat / (vhat.sqrt() + self.eps);
        }
        if !params.is_finite() {
            return Err(Error::Numerical("adam_step produced non-finite parameters".into()));
        }
        Ok(())
    }
}
