use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tensor::Tensor;

/// Stochastic gradient descent with heavy-ball momentum:
/// `v ← μ·v + g`, `θ ← θ − lr·v`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<Tensor>,
}

impl Sgd {
    pub fn new(params: &ParamStore, lr: f64, momentum: f64) -> Self {
        let velocity = params
            .iter()
            .map(|(_, _, t)| Tensor::zeros(t.shape().to_vec()).unwrap_or_else(|_| Tensor::scalar(0.0)))
            .collect();
        Sgd { lr, momentum, velocity }
    }

    pub fn velocity(&self) -> &[Tensor] {
        &self.velocity
    }

    /// Restores velocity buffers (e.g. from a checkpoint).
    pub fn set_velocity(&mut self, velocity: Vec<Tensor>) -> Result<()> {
        if velocity.len() != self.velocity.len()
            || velocity.iter().zip(&self.velocity).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::Config("optimizer state does not match parameters".into()));
        }
        self.velocity = velocity;
        Ok(())
    }

    /// Applies one update. Fails without touching any parameter if a
    /// gradient holds a non-finite value.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::Config(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for ((_, name, t), g) in params.iter().zip(grads) {
            if g.shape() != t.shape() {
                return Err(Error::shape("sgd_step", t.shape(), g.shape()));
            }
            if !g.is_finite() {
                return Err(Error::Divergence { name: name.to_string() });
            }
        }
        let ids: Vec<_> = params.ids().collect();
        for ((id, g), v) in ids.into_iter().zip(grads).zip(&mut self.velocity) {
            let param = params.get_mut(id);
            for ((p, vel), &grad) in param.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                *vel = self.momentum * *vel + grad;
                *p -= self.lr * *vel;
            }
        }
        Ok(())
    }
}
