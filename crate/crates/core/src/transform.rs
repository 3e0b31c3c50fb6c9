//! Bijections between constrained parameter spaces and `R^d`.
//!
//! Every model exposes its parameter vector as a concatenation of blocks.
//! The sampler works on the unconstrained image and adds the log-Jacobian
//! `log|det d(theta)/d(u)|` to the target so that the pushforward density is
//! the intended one. Boundaries of the constrained space are not in the image.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    /// `len` unbounded reals, identity map.
    Real(usize),
    /// `len` values in `(0, 1)`, logit map.
    UnitInterval(usize),
    /// A `components`-simplex stored through its first `components - 1`
    /// coordinates (the last weight is implied), stick-breaking map.
    Simplex(usize),
}

impl Block {
    pub fn dim(&self) -> usize {
        match *self {
            Block::Real(n) | Block::UnitInterval(n) => n,
            Block::Simplex(k) => k.saturating_sub(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Transform {
    blocks: Vec<Block>,
}

impl Transform {
    pub fn new(blocks: Vec<Block>) -> Self {
        Self { blocks }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(Block::dim).sum()
    }

    /// Maps constrained parameters to `R^d`, returning the image and the
    /// log-Jacobian of the inverse map evaluated there.
    pub fn to_unconstrained(&self, params: &[f64]) -> Result<(Vec<f64>, f64)> {
        if params.len() != self.dim() {
            return Err(Error::Domain(format!(
                "expected {} parameters, got {}",
                self.dim(),
                params.len()
            )));
        }
        let mut u = vec![0.0; params.len()];
        let mut offset = 0;
        for block in &self.blocks {
            let len = block.dim();
            let src = &params[offset..offset + len];
            let dst = &mut u[offset..offset + len];
            match *block {
                Block::Real(_) => dst.copy_from_slice(src),
                Block::UnitInterval(_) => {
                    for (d, &x) in dst.iter_mut().zip(src) {
                        if !(x > 0.0 && x < 1.0) {
                            return Err(Error::Domain(format!(
                                "unit-interval parameter {x} is not in the open interval (0, 1)"
                            )));
                        }
                        *d = logit(x);
                    }
                }
                Block::Simplex(k) => {
                    let mut remaining = 1.0;
                    for (idx, (d, &x)) in dst.iter_mut().zip(src).enumerate() {
                        if !(x > 0.0) || !(x < remaining) {
                            return Err(Error::Domain(format!(
                                "simplex weights must be strictly positive and sum below one (weight {x} at index {idx})"
                            )));
                        }
                        let z = x / remaining;
                        *d = logit(z) + ((k - idx - 1) as f64).ln();
                        remaining -= x;
                    }
                }
            }
            offset += len;
        }
        let log_jac = self.log_jacobian(&u);
        Ok((u, log_jac))
    }

    /// Inverse map. Returns constrained parameters and the log-Jacobian.
    pub fn from_unconstrained(&self, u: &[f64]) -> (Vec<f64>, f64) {
        let mut out = vec![0.0; u.len()];
        let lj = self.from_unconstrained_into(u, &mut out);
        (out, lj)
    }

    /// Allocation-free inverse map used in the sampler's inner loop.
    pub fn from_unconstrained_into(&self, u: &[f64], out: &mut [f64]) -> f64 {
        debug_assert_eq!(u.len(), self.dim());
        debug_assert_eq!(out.len(), self.dim());
        let mut log_jac = 0.0;
        let mut offset = 0;
        for block in &self.blocks {
            let len = block.dim();
            let src = &u[offset..offset + len];
            let dst = &mut out[offset..offset + len];
            match *block {
                Block::Real(_) => dst.copy_from_slice(src),
                Block::UnitInterval(_) => {
                    for (d, &y) in dst.iter_mut().zip(src) {
                        *d = logistic(y);
                        log_jac += log_logistic(y) + log_logistic(-y);
                    }
                }
                Block::Simplex(k) => {
                    let mut remaining: f64 = 1.0;
                    for (idx, (d, &y)) in dst.iter_mut().zip(src).enumerate() {
                        let shifted = y - ((k - idx - 1) as f64).ln();
                        let z = logistic(shifted);
                        log_jac += log_logistic(shifted) + log_logistic(-shifted) + remaining.ln();
                        *d = remaining * z;
                        remaining -= *d;
                    }
                }
            }
            offset += len;
        }
        log_jac
    }

    /// `log|det d(theta)/d(u)|` at the unconstrained point `u`.
    pub fn log_jacobian(&self, u: &[f64]) -> f64 {
        let mut scratch = vec![0.0; u.len()];
        self.from_unconstrained_into(u, &mut scratch)
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `log(logistic(x))` without overflow.
pub fn log_logistic(x: f64) -> f64 {
    -softplus(-x)
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
