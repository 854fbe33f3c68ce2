//! Per-client linear regression `y = x^T w_true + eps` with isotropic Gaussian
//! features. Population quantities are available in closed form.

use rand::Rng;
use rand_distr::StandardNormal;

use super::LocalObjective;
use crate::error::{Error, Result};
use crate::schedules::LimitingWeights;
use crate::vector;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTask {
    w_true: Vec<f64>,
    sigma_x: f64,
    sigma_eps: f64,
    n_samples: usize,
}

impl RegressionTask {
    pub fn new(w_true: Vec<f64>, sigma_x: f64, sigma_eps: f64, n_samples: usize) -> Result<Self> {
        if w_true.is_empty() {
            return Err(Error::validation("task.d", "dimension must be at least 1"));
        }
        if !(sigma_x > 0.0 && sigma_x.is_finite()) {
            return Err(Error::validation("task.sigma_x", "must be positive"));
        }
        if !(sigma_eps >= 0.0 && sigma_eps.is_finite()) {
            return Err(Error::validation("task.sigma_eps", "must be non-negative"));
        }
        if n_samples == 0 {
            return Err(Error::validation("task.n_samples", "must be at least 1"));
        }
        Ok(Self {
            w_true,
            sigma_x,
            sigma_eps,
            n_samples,
        })
    }

    pub fn w_true(&self) -> &[f64] {
        &self.w_true
    }

    pub fn sigma_x(&self) -> f64 {
        self.sigma_x
    }

    pub fn sigma_eps(&self) -> f64 {
        self.sigma_eps
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn dim(&self) -> usize {
        self.w_true.len()
    }

    /// `h(w) = -grad E[(y - x^T w)^2] = 2 sigma_x^2 (w_true - w)`.
    pub fn population_h(&self, w: &[f64]) -> Vec<f64> {
        let k = 2.0 * self.sigma_x * self.sigma_x;
        self.w_true.iter().zip(w).map(|(t, x)| k * (t - x)).collect()
    }

    /// Expected per-sample loss `E[(y - x^T w)^2] = sigma_x^2 |w_true - w|^2 + sigma_eps^2`.
    pub fn population_loss(&self, w: &[f64]) -> f64 {
        let d = vector::dist(&self.w_true, w);
        self.sigma_x * self.sigma_x * d * d + self.sigma_eps * self.sigma_eps
    }
}

/// Noise standard deviation giving `sigma_x^2 |w|^2 / sigma_eps^2 = 10^(snr_db / 10)`.
pub fn noise_sigma_from_snr(sigma_x: f64, w_true: &[f64], snr_db: f64) -> Result<f64> {
    let w_norm = vector::norm(w_true);
    if w_norm == 0.0 {
        return Err(Error::ZeroSignal);
    }
    Ok(sigma_x * w_norm / 10f64.powf(snr_db / 20.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    dim: usize,
    features: Vec<f64>,
    targets: Vec<f64>,
}

impl RegressionDataset {
    pub fn from_rows(rows: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if rows.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: targets.len(),
            });
        }
        let dim = rows.first().map_or(0, Vec::len);
        let mut features = Vec::with_capacity(rows.len() * dim);
        for r in &rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            features.extend_from_slice(r);
        }
        Ok(Self {
            dim,
            features,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn x(&self, k: usize) -> &[f64] {
        &self.features[k * self.dim..(k + 1) * self.dim]
    }

    pub fn y(&self, k: usize) -> f64 {
        self.targets[k]
    }

    /// Writes `x_1..x_d,y` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (1..=self.dim)
            .map(|j| format!("x_{j}"))
            .chain(std::iter::once("y".to_string()))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.len() {
            let row: Vec<String> = self
                .x(k)
                .iter()
                .chain(std::iter::once(&self.targets[k]))
                .map(|v| crate::metrics::format_float(*v))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

pub fn generate_regression_data<R: Rng + ?Sized>(task: &RegressionTask, rng: &mut R) -> RegressionDataset {
    let d = task.dim();
    let mut features = Vec::with_capacity(task.n_samples * d);
    let mut targets = Vec::with_capacity(task.n_samples);
    for _ in 0..task.n_samples {
        let start = features.len();
        for _ in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            features.push(task.sigma_x * z);
        }
        let eps: f64 = rng.sample(StandardNormal);
        let y = vector::dot(&features[start..], &task.w_true) + task.sigma_eps * eps;
        targets.push(y);
    }
    RegressionDataset {
        dim: d,
        features,
        targets,
    }
}

/// `grad_w (y - x^T w)^2 = -2 x (y - x^T w)`.
pub fn regression_sample_grad(w: &[f64], x: &[f64], y: f64) -> Vec<f64> {
    let r = y - vector::dot(x, w);
    x.iter().map(|xi| -2.0 * xi * r).collect()
}

pub fn regression_minibatch_grad(w: &[f64], data: &RegressionDataset, batch: &[usize]) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if w.len() != data.dim {
        return Err(Error::DimensionMismatch {
            expected: data.dim,
            got: w.len(),
        });
    }
    let mut g = vec![0.0; w.len()];
    for &k in batch {
        let x = data.x(k);
        let r = data.y(k) - vector::dot(x, w);
        vector::axpy(-2.0 * r, x, &mut g);
    }
    let inv = 1.0 / batch.len() as f64;
    g.iter_mut().for_each(|v| *v *= inv);
    Ok(g)
}

/// Population optimum of `sum_i p_i E|y_i - x_i^T w|^2`:
/// `w* = (sum p_i s_i^2)^-1 sum p_i s_i^2 w_i`.
pub fn closed_form_optimum(tasks: &[RegressionTask], p: &LimitingWeights) -> Result<Vec<f64>> {
    let d = tasks.first().map(RegressionTask::dim).ok_or(Error::SingularSystem)?;
    if p.len() != tasks.len() {
        return Err(Error::DimensionMismatch {
            expected: tasks.len(),
            got: p.len(),
        });
    }
    let mut num = vec![0.0; d];
    let mut den = 0.0;
    for (task, &pi) in tasks.iter().zip(p.as_slice()) {
        if task.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: task.dim(),
            });
        }
        let weight = pi * task.sigma_x * task.sigma_x;
        den += weight;
        vector::axpy(weight, &task.w_true, &mut num);
    }
    if den <= 0.0 {
        return Err(Error::SingularSystem);
    }
    Ok(vector::scale(1.0 / den, &num))
}

/// A regression client: its task definition and the fixed local dataset.
#[derive(Debug, Clone)]
pub struct RegressionClient {
    pub task: RegressionTask,
    pub data: RegressionDataset,
}

impl LocalObjective for RegressionClient {
    fn dim(&self) -> usize {
        self.task.dim()
    }

    fn n_samples(&self) -> usize {
        self.data.len()
    }

    fn minibatch_grad(&self, w: &[f64], batch: &[usize]) -> Result<Vec<f64>> {
        regression_minibatch_grad(w, &self.data, batch)
    }

    fn population_h(&self, w: &[f64]) -> Option<Vec<f64>> {
        Some(self.task.population_h(w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    fn task(w: Vec<f64>, sx: f64, se: f64, n: usize) -> RegressionTask {
        RegressionTask::new(w, sx, se, n).unwrap()
    }

    #[test]
    fn snr_examples() {
        assert!((noise_sigma_from_snr(1.0, &[1.0, 0.0, 0.0], 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((noise_sigma_from_snr(1.0, &[1.0, 0.0, 0.0], 20.0).unwrap() - 0.1).abs() < 1e-15);
        let s = noise_sigma_from_snr(5.0, &[1.001, 0.998, 0.997], 10.0).unwrap();
        assert!((s - 2.734_965_264_861_694).abs() < 1e-9, "{s}");
        assert_eq!(noise_sigma_from_snr(1.0, &[0.0, 0.0], 10.0), Err(Error::ZeroSignal));
    }

    #[test]
    fn task_validation() {
        assert!(RegressionTask::new(vec![], 1.0, 0.0, 1).is_err());
        assert!(RegressionTask::new(vec![1.0], 0.0, 0.0, 1).is_err());
        assert!(RegressionTask::new(vec![1.0], 1.0, -1.0, 1).is_err());
        assert!(RegressionTask::new(vec![1.0], 1.0, 0.0, 0).is_err());
    }

    #[test]
    fn noiseless_data_is_exact() {
        let t = task(vec![1.5, -2.0, 0.25], 3.0, 0.0, 500);
        let data = generate_regression_data(&t, &mut stream(1, Domain::Data, 0));
        for k in 0..data.len() {
            let pred = vector::dot(data.x(k), t.w_true());
            assert!((pred - data.y(k)).abs() < 1e-12);
        }
    }

    #[test]
    fn data_moments() {
        let n = 100_000;
        let d = 3;
        let t = task(vec![1.0, 2.0, -1.0], 2.0, 0.7, n);
        let data = generate_regression_data(&t, &mut stream(2, Domain::Data, 0));
        let mut mean = vec![0.0; d];
        for k in 0..n {
            vector::axpy(1.0 / n as f64, data.x(k), &mut mean);
        }
        assert!(vector::norm(&mean) <= 4.0 * 2.0 * (d as f64 / n as f64).sqrt());

        let resid: Vec<f64> = (0..n).map(|k| data.y(k) - vector::dot(data.x(k), t.w_true())).collect();
        let rm = resid.iter().sum::<f64>() / n as f64;
        let var = resid.iter().map(|r| (r - rm) * (r - rm)).sum::<f64>() / (n - 1) as f64;
        assert!((var / 0.49 - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn sample_grad_examples() {
        assert_eq!(regression_sample_grad(&[0.0, 0.0], &[1.0, 0.0], 1.0), vec![-2.0, 0.0]);
        let g = regression_sample_grad(&[1.0, 1.0], &[2.0, 3.0], 5.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn minibatch_grad_cases() {
        let t = task(vec![0.3, -0.4], 1.0, 0.0, 64);
        let data = generate_regression_data(&t, &mut stream(3, Domain::Data, 0));
        let w = [0.1, 0.2];
        let single = regression_minibatch_grad(&w, &data, &[5]).unwrap();
        assert_eq!(single, regression_sample_grad(&w, data.x(5), data.y(5)));

        let all: Vec<usize> = (0..data.len()).collect();
        let g = regression_minibatch_grad(t.w_true(), &data, &all).unwrap();
        assert!(vector::norm(&g) < 1e-12);

        assert_eq!(regression_minibatch_grad(&w, &data, &[]), Err(Error::EmptyBatch));
    }

    #[test]
    fn population_h_examples() {
        let t = task(vec![1.0, 0.0], 1.0, 0.0, 1);
        assert_eq!(t.population_h(&[0.0, 0.0]), vec![2.0, 0.0]);
        assert_eq!(t.population_h(&[1.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn lipschitz_constant_is_exact() {
        let t = task(vec![1.0, -3.0, 2.0], 2.5, 1.0, 1);
        let a = [0.3, 1.7, -2.2];
        let b = [-4.0, 0.5, 9.0];
        let lhs = vector::dist(&t.population_h(&a), &t.population_h(&b));
        let rhs = 2.0 * 2.5 * 2.5 * vector::dist(&a, &b);
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn closed_form_cases() {
        let a = task(vec![1.0, 2.0], 2.0, 0.0, 1);
        let b = task(vec![3.0, -2.0], 2.0, 0.0, 1);
        let w = closed_form_optimum(&[a.clone()], &LimitingWeights::uniform(1)).unwrap();
        assert_eq!(w, vec![1.0, 2.0]);
        let w = closed_form_optimum(&[a, b], &LimitingWeights::uniform(2)).unwrap();
        assert_eq!(w, vec![2.0, 0.0]);
    }

    #[test]
    fn closed_form_against_gradient_descent() {
        let tasks = vec![
            task(vec![1.0, 2.0, 3.0], 5.0, 0.0, 1),
            task(vec![-2.0, 0.5, 1.0], 3.0, 0.0, 1),
            task(vec![7.0, 7.0, 7.0], 1.0, 0.0, 1),
        ];
        let p = LimitingWeights::from_values(vec![1.0, 0.5, 0.0], 0).unwrap();
        let w_star = closed_form_optimum(&tasks, &p).unwrap();

        // Oracle: minimize sum p_i E|y - x^T w|^2 by plain gradient descent.
        let mut w = vec![0.0; 3];
        for _ in 0..10_000 {
            let mut g = vec![0.0; 3];
            for (t, &pi) in tasks.iter().zip(p.as_slice()) {
                vector::axpy(-pi, &t.population_h(&w), &mut g);
            }
            vector::axpy(-0.01, &g, &mut w);
        }
        assert!(vector::dist(&w, &w_star) < 1e-10);
        let expected: Vec<f64> = (0..3)
            .map(|j| (25.0 * tasks[0].w_true()[j] + 0.5 * 9.0 * tasks[1].w_true()[j]) / (25.0 + 4.5))
            .collect();
        assert!(vector::dist(&expected, &w_star) < 1e-12);
    }

    #[test]
    fn closed_form_singular() {
        let t = task(vec![1.0], 1.0, 0.0, 1);
        let p = LimitingWeights::from_values(vec![1.0, 0.0], 0).unwrap();
        let t2 = task(vec![1.0, 2.0], 1.0, 0.0, 1);
        assert!(matches!(
            closed_form_optimum(&[t.clone(), t2], &p),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(closed_form_optimum(&[], &LimitingWeights::uniform(0)).is_err());
    }

    #[test]
    fn dataset_csv_dump() {
        let data = RegressionDataset::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]], vec![5.0, 6.0]).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("x_1,x_2,y"));
        assert_eq!(text.lines().count(), 3);
        assert!(RegressionDataset::from_rows(vec![vec![1.0]], vec![]).is_err());
    }
}
