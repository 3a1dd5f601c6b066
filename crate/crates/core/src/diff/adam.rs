use super::{ParamStore, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 5e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam with per-parameter moment buffers.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    config: AdamConfig,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam { config, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn config(&self) -> AdamConfig {
        self.config
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, i: usize) -> Option<&Tensor<T>> {
        self.m.get(i)
    }

    pub fn second_moment(&self, i: usize) -> Option<&Tensor<T>> {
        self.v.get(i)
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&mut self, store: &mut ParamStore<T>) {
        // Parameters may be added or resized between steps (grid rebuilds).
        self.m.truncate(store.len());
        self.v.truncate(store.len());
        for id in store.ids() {
            let (r, c) = store.value(id).shape();
            if id.0 >= self.m.len() {
                self.m.push(Tensor::zeros(r, c));
                self.v.push(Tensor::zeros(r, c));
            } else if self.m[id.0].shape() != (r, c) {
                self.m[id.0] = Tensor::zeros(r, c);
                self.v[id.0] = Tensor::zeros(r, c);
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let (b1, b2) = (T::of(beta1), T::of(beta2));
        let (one_b1, one_b2) = (T::of(1.0 - beta1), T::of(1.0 - beta2));
        let (lr_t, c1_t, c2_t, eps_t) = (T::of(lr), T::of(c1), T::of(c2), T::of(eps));
        for id in store.ids() {
            let (value, grad) = store.value_and_grad_mut(id);
            let m = self.m[id.0].data_mut();
            let v = self.v[id.0].data_mut();
            for (i, (p, g)) in value.data_mut().iter_mut().zip(grad.data_mut()).enumerate() {
                m[i] = b1 * m[i] + one_b1 * *g;
                v[i] = b2 * v[i] + one_b2 * *g * *g;
                let m_hat = m[i] / c1_t;
                let v_hat = v[i] / c2_t;
                *p -= lr_t * m_hat / (v_hat.sqrt() + eps_t);
                *g = T::zero();
            }
        }
    }
}
