use crate::tape::Tensor;

/// Adam with L2 weight decay folded into the gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: i32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &[Tensor], lr: f64, betas: (f64, f64), weight_decay: f64) -> Self {
        Adam {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: params.iter().map(|p| Tensor::zeros(p.dim())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.dim())).collect(),
        }
    }

    /// `grads[i] = None` leaves parameter `i` untouched but still counts the
    /// step.
    pub fn update(&mut self, params: &mut [Tensor], grads: &[Option<Tensor>]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            let g = g + &(&*p * self.weight_decay);
            let (b1, b2) = (self.beta1, self.beta2);
            self.m[i].zip_mut_with(&g, |m, &gi| *m = b1 * *m + (1.0 - b1) * gi);
            self.v[i].zip_mut_with(&g, |v, &gi| *v = b2 * *v + (1.0 - b2) * gi * gi);
            let step = self.lr / c1;
            let (eps, m, v) = (self.eps, &self.m[i], &self.v[i]);
            ndarray::Zip::from(p)
                .and(m)
                .and(v)
                .for_each(|p, &m, &v| *p -= step * m / ((v / c2).sqrt() + eps));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![array![[1.0, -2.0]]];
        let mut opt = Adam::new(&p, 0.1, (0.5, 0.9), 0.0);
        opt.update(&mut p, &[Some(array![[3.0, -0.5]])]);
        assert!((p[0][(0, 0)] - 0.9).abs() < 1e-6);
        assert!((p[0][(0, 1)] + 1.9).abs() < 1e-6);
    }

    #[test]
    fn minimises_quadratic() {
        let mut p = vec![array![[5.0]]];
        let mut opt = Adam::new(&p, 0.05, (0.9, 0.999), 0.0);
        for _ in 0..2000 {
            let g = &p[0] * 2.0;
            opt.update(&mut p, &[Some(g)]);
        }
        assert!(p[0][(0, 0)].abs() < 1e-2);
    }
}
