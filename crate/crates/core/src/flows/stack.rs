use rand::Rng;

use super::coupling::CouplingLayer;
use crate::autodiff::{Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{ParameterStore, Params};

#[derive(Clone, Debug, PartialEq)]
pub enum FlowStep {
    Coupling(CouplingLayer),
    /// Output column `j` takes input column `perm[j]`.
    Permute(Vec<usize>),
}

/// Composition of coupling layers and fixed permutations.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowStack {
    dim: usize,
    cond_dim: Option<usize>,
    steps: Vec<FlowStep>,
}

fn is_bijection(perm: &[usize], dim: usize) -> bool {
    let mut seen = vec![false; dim];
    perm.len() == dim
        && perm.iter().all(|&p| p < dim && !std::mem::replace(&mut seen[p], true))
}

fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (j, &p) in perm.iter().enumerate() {
        inv[p] = j;
    }
    inv
}

fn permute<'t>(v: Var<'t>, perm: &[usize]) -> Result<Var<'t>> {
    let cols: Vec<Var<'t>> = perm.iter().map(|&p| v.cols(p, p + 1)).collect::<Result<_>>()?;
    Var::concat(&cols, 1)
}

impl FlowStack {
    pub fn from_steps(dim: usize, cond_dim: Option<usize>, steps: Vec<FlowStep>) -> Result<Self> {
        for step in &steps {
            match step {
                FlowStep::Coupling(l) => {
                    if l.dim() != dim || l.is_conditional() != cond_dim.is_some() {
                        return Err(Error::Config("coupling layer does not match stack".into()));
                    }
                }
                FlowStep::Permute(p) => {
                    if !is_bijection(p, dim) {
                        return Err(Error::Config(format!("{p:?} is not a permutation of 0..{dim}")));
                    }
                }
            }
        }
        Ok(FlowStack { dim, cond_dim, steps })
    }

    /// `layers` coupling layers splitting at `dim / 2`, separated by the
    /// reversal permutation (a swap when `dim == 2`). A trailing reversal is
    /// added when needed so the permutations compose to the identity and a
    /// zero-initialized stack is the identity map.
    pub fn standard(prefix: &str, dim: usize, layers: usize, hidden: &[usize], cond_dim: Option<usize>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Config(format!("flows need dim >= 2, got {dim}")));
        }
        let split = dim / 2;
        let reversal: Vec<usize> = (0..dim).rev().collect();
        let mut steps = Vec::new();
        for l in 0..layers {
            if l > 0 {
                steps.push(FlowStep::Permute(reversal.clone()));
            }
            let layer = CouplingLayer::new(&format!("{prefix}.{l}"), dim, split, cond_dim, hidden)?;
            steps.push(FlowStep::Coupling(layer));
        }
        if layers > 1 && (layers - 1) % 2 == 1 {
            steps.push(FlowStep::Permute(reversal));
        }
        Self::from_steps(dim, cond_dim, steps)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_conditional(&self) -> bool {
        self.cond_dim.is_some()
    }

    pub fn cond_dim(&self) -> Option<usize> {
        self.cond_dim
    }

    pub fn steps(&self) -> &[FlowStep] {
        &self.steps
    }

    pub fn layers(&self) -> impl Iterator<Item = &CouplingLayer> {
        self.steps.iter().filter_map(|s| match s {
            FlowStep::Coupling(l) => Some(l),
            FlowStep::Permute(_) => None,
        })
    }

    pub fn init<R: Rng>(&self, store: &mut ParameterStore, rng: &mut R) -> Result<()> {
        self.layers().try_for_each(|l| l.init(store, rng))
    }

    fn zero_logdet<'t>(v: Var<'t>) -> Var<'t> {
        v.tape().constant(Tensor::zeros(&[v.shape()[0]]))
    }

    /// `u: [n, d]` → `(x, Σ layer log-dets)`.
    pub fn forward<'t>(&self, params: &Params<'t>, u: Var<'t>, cond: Option<Var<'t>>) -> Result<(Var<'t>, Var<'t>)> {
        let mut x = u;
        let mut logdet = Self::zero_logdet(u);
        for step in &self.steps {
            match step {
                FlowStep::Coupling(l) => {
                    let (y, ld) = l.forward(params, x, cond)?;
                    x = y;
                    logdet = logdet.add(ld)?;
                }
                FlowStep::Permute(p) => x = permute(x, p)?,
            }
        }
        Ok((x, logdet))
    }

    /// Inverse map with the log-determinant of the inverse.
    pub fn inverse<'t>(&self, params: &Params<'t>, x: Var<'t>, cond: Option<Var<'t>>) -> Result<(Var<'t>, Var<'t>)> {
        let mut u = x;
        let mut logdet = Self::zero_logdet(x);
        for step in self.steps.iter().rev() {
            match step {
                FlowStep::Coupling(l) => {
                    let (y, ld) = l.inverse(params, u, cond)?;
                    u = y;
                    logdet = logdet.add(ld)?;
                }
                FlowStep::Permute(p) => u = permute(u, &invert(p))?,
            }
        }
        Ok((u, logdet))
    }

    /// Change of variables: `log p(x) = log p_base(T⁻¹(x)) − log|det J_T(T⁻¹(x))|`.
    pub fn pushforward_log_density<'t, F>(
        &self,
        params: &Params<'t>,
        base_log_density: F,
        x: Var<'t>,
        cond: Option<Var<'t>>,
    ) -> Result<Var<'t>>
    where
        F: FnOnce(Var<'t>) -> Result<Var<'t>>,
    {
        let (u, inv_logdet) = self.inverse(params, x, cond)?;
        base_log_density(u)?.add(inv_logdet)
    }
}
