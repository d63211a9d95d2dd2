/// ADADELTA with a global learning-rate multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct Adadelta {
    pub rho: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    sq_grad: Vec<f64>,
    sq_step: Vec<f64>,
}

impl Adadelta {
    pub fn new(n_params: usize, rho: f64, epsilon: f64, learning_rate: f64) -> Self {
        Self {
            rho,
            epsilon,
            learning_rate,
            sq_grad: vec![0.0; n_params],
            sq_step: vec![0.0; n_params],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        let (rho, eps) = (self.rho, self.epsilon);
        for i in 0..params.len() {
            let g = grad[i];
            self.sq_grad[i] = rho * self.sq_grad[i] + (1.0 - rho) * g * g;
            let dx = -((self.sq_step[i] + eps).sqrt() / (self.sq_grad[i] + eps).sqrt()) * g;
            self.sq_step[i] = rho * self.sq_step[i] + (1.0 - rho) * dx * dx;
            params[i] += self.learning_rate * dx;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_matches_hand_computation() {
        let mut opt = Adadelta::new(1, 0.95, 1e-6, 1.0);
        let mut x = [1.0];
        opt.step(&mut x, &[2.0]);
        let eg = 0.05 * 4.0;
        let dx = -(1e-6f64).sqrt() / (eg + 1e-6f64).sqrt() * 2.0;
        assert_eq!(x[0], 1.0 + dx);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut opt = Adadelta::new(2, 0.95, 1e-6, 1.0);
        let mut x = [3.0, -2.0];
        for _ in 0..20_000 {
            let g = [2.0 * x[0], 2.0 * x[1]];
            opt.step(&mut x, &g);
        }
        assert!(x[0].abs() < 1e-2 && x[1].abs() < 1e-2, "{x:?}");
    }
}
