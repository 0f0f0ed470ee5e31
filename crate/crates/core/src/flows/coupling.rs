use rand::Rng;

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::nn::{Mlp, ParameterStore, Params};

/// Scale-net outputs are clamped to this interval before exponentiation.
pub const SCALE_CLAMP: f64 = 5.0;

/// Affine coupling layer: the first `split` coordinates pass through and
/// condition an elementwise affine map of the rest,
///
/// ```text
/// x[..k] = u[..k]
/// x[k..] = u[k..] * exp(c(u[..k] ‖ z)) + t(u[..k] ‖ z)
/// ```
///
/// where `z` is the optional conditioner.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingLayer {
    dim: usize,
    split: usize,
    cond_dim: Option<usize>,
    scale: Mlp,
    shift: Mlp,
}

impl CouplingLayer {
    pub fn new(prefix: &str, dim: usize, split: usize, cond_dim: Option<usize>, hidden: &[usize]) -> Result<Self> {
        if split == 0 || split >= dim {
            return Err(Error::Config(format!("coupling split {split} must lie in 1..{dim}")));
        }
        let inp = split + cond_dim.unwrap_or(0);
        let mut widths = vec![inp];
        widths.extend_from_slice(hidden);
        widths.push(dim - split);
        Ok(CouplingLayer {
            dim,
            split,
            cond_dim,
            scale: Mlp::new(&format!("{prefix}.scale"), &widths)?,
            shift: Mlp::new(&format!("{prefix}.shift"), &widths)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn split(&self) -> usize {
        self.split
    }

    pub fn is_conditional(&self) -> bool {
        self.cond_dim.is_some()
    }

    pub fn scale_net(&self) -> &Mlp {
        &self.scale
    }

    pub fn shift_net(&self) -> &Mlp {
        &self.shift
    }

    /// Random hidden layers, zero output layers: the layer starts as the identity.
    pub fn init<R: Rng>(&self, store: &mut ParameterStore, rng: &mut R) -> Result<()> {
        self.scale.init(store, rng, true)?;
        self.shift.init(store, rng, true)
    }

    fn nets<'t>(&self, params: &Params<'t>, head: Var<'t>, cond: Option<Var<'t>>) -> Result<(Var<'t>, Var<'t>)> {
        let n = head.shape()[0];
        let input = match (self.cond_dim, cond) {
            (None, None) => head,
            (Some(e), Some(z)) => {
                let z = broadcast_conditioner(z, n, e)?;
                Var::concat(&[head, z], 1)?
            }
            (None, Some(_)) => return Err(Error::Conditioner("given to an unconditional layer")),
            (Some(_), None) => return Err(Error::Conditioner("missing for a conditional layer")),
        };
        let s = self.scale.forward(params, input)?.clamp(-SCALE_CLAMP, SCALE_CLAMP);
        let t = self.shift.forward(params, input)?;
        Ok((s, t))
    }

    fn check(&self, v: Var<'_>, op: &'static str) -> Result<()> {
        let shape = v.shape();
        if shape.len() != 2 || shape[1] != self.dim {
            return Err(Error::shape(op, &shape, &[self.dim]));
        }
        Ok(())
    }

    /// `u: [n, d]` → `(x: [n, d], log|det J|: [n])`.
    pub fn forward<'t>(&self, params: &Params<'t>, u: Var<'t>, cond: Option<Var<'t>>) -> Result<(Var<'t>, Var<'t>)> {
        self.check(u, "coupling_forward")?;
        let head = u.cols(0, self.split)?;
        let tail = u.cols(self.split, self.dim)?;
        let (s, t) = self.nets(params, head, cond)?;
        let out = tail.mul(s.exp())?.add(t)?;
        Ok((Var::concat(&[head, out], 1)?, s.sum_axis(1)?))
    }

    /// Inverse map; the returned log-determinant is that of the inverse,
    /// i.e. the negated forward log-determinant at the preimage.
    pub fn inverse<'t>(&self, params: &Params<'t>, x: Var<'t>, cond: Option<Var<'t>>) -> Result<(Var<'t>, Var<'t>)> {
        self.check(x, "coupling_inverse")?;
        let head = x.cols(0, self.split)?;
        let tail = x.cols(self.split, self.dim)?;
        let (s, t) = self.nets(params, head, cond)?;
        let out = tail.sub(t)?.mul(s.neg().exp())?;
        Ok((Var::concat(&[head, out], 1)?, s.sum_axis(1)?.neg()))
    }
}

/// Accept `[e]`, `[1, e]` or `[n, e]` and return `[n, e]`.
pub(crate) fn broadcast_conditioner<'t>(z: Var<'t>, n: usize, e: usize) -> Result<Var<'t>> {
    match z.shape().as_slice() {
        [k] if *k == e => z.broadcast_rows(n),
        [1, k] if *k == e && n != 1 => z.broadcast_rows(n),
        [r, k] if *r == n && *k == e => Ok(z),
        s => Err(Error::shape("conditioner", s, &[n, e])),
    }
}
