//! The arithmetic interface that training and activation code is written
//! against. Native evaluation and in-circuit replay both implement it, so a
//! single code path defines what the circuit must reproduce.

use std::marker::PhantomData;

use crate::fixed::{FixedPointError, Scalar};

pub trait Arithmetic<V> {
    type Error;

    fn add(&mut self, a: &V, b: &V) -> V;
    fn sub(&mut self, a: &V, b: &V) -> V;
    fn mul(&mut self, a: &V, b: &V) -> Result<V, Self::Error>;
}

/// Direct evaluation over a [`Scalar`].
#[derive(Debug)]
pub struct Native<'a, S: Scalar> {
    ctx: &'a S::Context,
    _scalar: PhantomData<S>,
}

impl<'a, S: Scalar> Native<'a, S> {
    pub fn new(ctx: &'a S::Context) -> Self {
        Native {
            ctx,
            _scalar: PhantomData,
        }
    }
}

impl<S: Scalar> Arithmetic<S> for Native<'_, S> {
    type Error = FixedPointError;

    fn add(&mut self, a: &S, b: &S) -> S {
        a.clone() + b.clone()
    }

    fn sub(&mut self, a: &S, b: &S) -> S {
        a.clone() - b.clone()
    }

    fn mul(&mut self, a: &S, b: &S) -> Result<S, FixedPointError> {
        a.scaled_mul(b, self.ctx)
    }
}
