//! Subspace distillation: a student regresses the projected teacher feature
//! `P h_teacher` directly, with loss `||h_student - P h_teacher||^2`.

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::optim::{BatchSchedule, Optimizer, ParamState, TrainConfig};
use crate::projections::{project, ProjectionMatrix};
use crate::rng::{mix_seed, SeededRng};

/// Squared distance between a student output and the projected teacher
/// feature, with its gradient `2 (h_student - P h_teacher)`.
pub fn subspace_loss(
    h_student: &[f64],
    h_teacher: &[f64],
    p: &ProjectionMatrix,
) -> Result<(f64, Vec<f64>)> {
    if h_student.len() != p.target_dim() {
        return Err(Error::Shape {
            op: "subspace_loss",
            left: p.map().shape(),
            right: (h_student.len(), 1),
        });
    }
    let target = p.apply(h_teacher)?;
    Ok(regression_loss(h_student, &target))
}

fn regression_loss(out: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let diff: Vec<f64> = out.iter().zip(target).map(|(o, t)| o - t).collect();
    let loss = dot(&diff, &diff);
    (loss, diff.into_iter().map(|d| 2.0 * d).collect())
}

/// One-hidden-layer ReLU network `x -> W2 relu(W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentNet {
    /// `hidden x in`.
    pub layer1_weights: Matrix,
    pub layer1_bias: Vec<f64>,
    /// `k x hidden`.
    pub layer2_weights: Matrix,
    pub layer2_bias: Vec<f64>,
}

/// Gradients of a mean batch loss for each parameter block.
#[derive(Debug, Clone)]
pub struct StudentGrad {
    pub loss: f64,
    pub layer1_weights: Vec<f64>,
    pub layer1_bias: Vec<f64>,
    pub layer2_weights: Vec<f64>,
    pub layer2_bias: Vec<f64>,
}

impl StudentNet {
    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` weights and biases.
    pub fn init(input_dim: usize, hidden: usize, output_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden == 0 || output_dim == 0 {
            return Err(Error::InvalidDimension(format!(
                "student dims must be positive, got {input_dim}/{hidden}/{output_dim}"
            )));
        }
        let mut rng = SeededRng::new(seed);
        let mut uniform = |n: usize, fan_in: usize| -> Vec<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.uniform_range(-bound, bound)).collect()
        };
        let w1 = uniform(hidden * input_dim, input_dim);
        let b1 = uniform(hidden, input_dim);
        let w2 = uniform(output_dim * hidden, hidden);
        let b2 = uniform(output_dim, hidden);
        Ok(Self {
            layer1_weights: Matrix::new(hidden, input_dim, w1)?,
            layer1_bias: b1,
            layer2_weights: Matrix::new(output_dim, hidden, w2)?,
            layer2_bias: b2,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer1_weights.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.layer1_weights.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layer2_weights.rows()
    }

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        self.layer1_weights
            .row_iter()
            .zip(&self.layer1_bias)
            .map(|(w, b)| (dot(w, x) + b).max(0.0))
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let a = self.hidden(x);
        self.layer2_weights
            .row_iter()
            .zip(&self.layer2_bias)
            .map(|(w, b)| dot(w, &a) + b)
            .collect()
    }

    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape {
                op: "student forward",
                left: self.layer1_weights.shape(),
                right: x.shape(),
            });
        }
        let mut out = Vec::with_capacity(x.rows() * self.output_dim());
        for row in x.row_iter() {
            out.extend(self.forward(row));
        }
        Matrix::new(x.rows(), self.output_dim(), out)
    }

    /// Mean squared-distance loss against `targets` (rows already projected)
    /// over the given rows, with gradients.
    pub fn loss_grad(
        &self,
        inputs: &Matrix,
        targets: &Matrix,
        rows: &[usize],
    ) -> Result<StudentGrad> {
        let (hid, inp, out) = (self.hidden_dim(), self.input_dim(), self.output_dim());
        if inputs.cols() != inp || targets.cols() != out || inputs.rows() != targets.rows() {
            return Err(Error::Shape {
                op: "student loss",
                left: inputs.shape(),
                right: targets.shape(),
            });
        }
        let mut g = StudentGrad {
            loss: 0.0,
            layer1_weights: vec![0.0; hid * inp],
            layer1_bias: vec![0.0; hid],
            layer2_weights: vec![0.0; out * hid],
            layer2_bias: vec![0.0; out],
        };
        let mut g_hidden = vec![0.0; hid];
        for &i in rows {
            let x = inputs.row(i);
            let a = self.hidden(x);
            let y: Vec<f64> = self
                .layer2_weights
                .row_iter()
                .zip(&self.layer2_bias)
                .map(|(w, b)| dot(w, &a) + b)
                .collect();
            let (loss, g_out) = regression_loss(&y, targets.row(i));
            g.loss += loss;
            g_hidden.iter_mut().for_each(|v| *v = 0.0);
            for (o, &go) in g_out.iter().enumerate() {
                g.layer2_bias[o] += go;
                let w_row = self.layer2_weights.row(o);
                for j in 0..hid {
                    g.layer2_weights[o * hid + j] += go * a[j];
                    g_hidden[j] += go * w_row[j];
                }
            }
            for j in 0..hid {
                // ReLU derivative; zero at the kink.
                if a[j] <= 0.0 {
                    continue;
                }
                let gh = g_hidden[j];
                g.layer1_bias[j] += gh;
                for (w, &xv) in g.layer1_weights[j * inp..(j + 1) * inp].iter_mut().zip(x) {
                    *w += gh * xv;
                }
            }
        }
        let n = rows.len() as f64;
        g.loss /= n;
        for v in g
            .layer1_weights
            .iter_mut()
            .chain(&mut g.layer1_bias)
            .chain(&mut g.layer2_weights)
            .chain(&mut g.layer2_bias)
        {
            *v /= n;
        }
        Ok(g)
    }

    /// Mean loss over all rows.
    pub fn mean_loss(&self, inputs: &Matrix, targets: &Matrix) -> Result<f64> {
        let rows: Vec<usize> = (0..inputs.rows()).collect();
        Ok(self.loss_grad(inputs, targets, &rows)?.loss)
    }
}

/// Seed used for the student's initialization, derived from the shuffle seed.
pub fn student_init_seed(config: &TrainConfig) -> u64 {
    mix_seed(config.shuffle_seed ^ 0x5354_5544_454e_5400)
}

/// Trains a fresh student (initialized from [`student_init_seed`]) to regress
/// `P h_teacher` from `inputs`.
pub fn train_student(
    inputs: &Matrix,
    teacher_features: &Matrix,
    p: &ProjectionMatrix,
    config: &TrainConfig,
    hidden: usize,
) -> Result<StudentNet> {
    let init = StudentNet::init(
        inputs.cols(),
        hidden,
        p.target_dim(),
        student_init_seed(config),
    )?;
    train_student_from(init, inputs, teacher_features, p, config)
}

/// Mini-batch training of `student` on the mean subspace loss. Weight decay
/// applies to the weight matrices only.
pub fn train_student_from(
    mut student: StudentNet,
    inputs: &Matrix,
    teacher_features: &Matrix,
    p: &ProjectionMatrix,
    config: &TrainConfig,
) -> Result<StudentNet> {
    config.validate()?;
    if inputs.rows() != teacher_features.rows() {
        return Err(Error::Input(format!(
            "{} input rows but {} teacher rows",
            inputs.rows(),
            teacher_features.rows()
        )));
    }
    if student.output_dim() != p.target_dim() || student.input_dim() != inputs.cols() {
        return Err(Error::Shape {
            op: "train_student",
            left: (student.output_dim(), student.input_dim()),
            right: (p.target_dim(), inputs.cols()),
        });
    }
    let targets = project(p, teacher_features)?;
    let (hid, inp, out) = (
        student.hidden_dim(),
        student.input_dim(),
        student.output_dim(),
    );
    let mut w1 = student.layer1_weights.data().to_vec();
    let mut b1 = student.layer1_bias.clone();
    let mut w2 = student.layer2_weights.data().to_vec();
    let mut b2 = student.layer2_bias.clone();
    let mut s_w1 = ParamState::new(w1.len(), true);
    let mut s_b1 = ParamState::new(b1.len(), false);
    let mut s_w2 = ParamState::new(w2.len(), true);
    let mut s_b2 = ParamState::new(b2.len(), false);
    let mut opt = Optimizer::new(config);
    let mut schedule = BatchSchedule::new(inputs.rows(), config);
    let mut step = 0;

    for _ in 0..config.epochs {
        for batch in schedule.next_epoch() {
            let g = student.loss_grad(inputs, &targets, batch)?;
            if !g.loss.is_finite() {
                return Err(Error::Divergence { step, loss: g.loss });
            }
            opt.begin_step();
            opt.update(&mut w1, &g.layer1_weights, &mut s_w1);
            opt.update(&mut b1, &g.layer1_bias, &mut s_b1);
            opt.update(&mut w2, &g.layer2_weights, &mut s_w2);
            opt.update(&mut b2, &g.layer2_bias, &mut s_b2);
            let rebuilt = (|| -> Result<StudentNet> {
                Ok(StudentNet {
                    layer1_weights: Matrix::new(hid, inp, w1.clone())?,
                    layer1_bias: b1.clone(),
                    layer2_weights: Matrix::new(out, hid, w2.clone())?,
                    layer2_bias: b2.clone(),
                })
            })();
            student = match rebuilt {
                Ok(s) if b1.iter().chain(&b2).all(|v| v.is_finite()) => s,
                _ => return Err(Error::Divergence { step, loss: g.loss }),
            };
            step += 1;
        }
    }
    Ok(student)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::OptimizerKind;
    use crate::projections::sample_jl_seeded;
    use crate::rng::gaussian_matrix;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn loss_is_zero_at_target() {
        let p = sample_jl_seeded(1, 12, 4).unwrap();
        let h: Vec<f64> = (0..12).map(|i| i as f64 * 0.1 - 0.4).collect();
        let target = p.apply(&h).unwrap();
        let (loss, grad) = subspace_loss(&target, &h, &p).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn unit_offset() {
        let p = sample_jl_seeded(1, 12, 4).unwrap();
        let h: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let mut s = p.apply(&h).unwrap();
        s[0] += 1.0;
        let (loss, grad) = subspace_loss(&s, &h, &p).unwrap();
        assert!((loss - 1.0).abs() < 1e-12);
        assert!((grad[0] - 2.0).abs() < 1e-12);
        assert!(grad[1..].iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn shape_mismatch() {
        let p = sample_jl_seeded(1, 12, 4).unwrap();
        assert!(subspace_loss(&[0.0; 3], &[0.0; 12], &p).is_err());
        assert!(subspace_loss(&[0.0; 4], &[0.0; 11], &p).is_err());
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut rng = SeededRng::new(2);
        let p = sample_jl_seeded(3, 20, 8).unwrap();
        let teacher: Vec<f64> = (0..20).map(|_| rng.standard_normal()).collect();
        let student: Vec<f64> = (0..8).map(|_| rng.standard_normal()).collect();
        let (_, grad) = subspace_loss(&student, &teacher, &p).unwrap();
        let h = 1e-5;
        for i in 0..8 {
            let mut up = student.clone();
            let mut dn = student.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (subspace_loss(&up, &teacher, &p).unwrap().0
                - subspace_loss(&dn, &teacher, &p).unwrap().0)
                / (2.0 * h);
            assert!(rel_err(fd, grad[i]) < 1e-6);
        }
    }

    fn perturbed(net: &StudentNet, block: usize, idx: usize, delta: f64) -> StudentNet {
        let mut n = net.clone();
        let bump = |m: &Matrix| {
            let mut d = m.data().to_vec();
            d[idx] += delta;
            Matrix::new(m.rows(), m.cols(), d).unwrap()
        };
        match block {
            0 => n.layer1_weights = bump(&net.layer1_weights),
            1 => n.layer1_bias[idx] += delta,
            2 => n.layer2_weights = bump(&net.layer2_weights),
            _ => n.layer2_bias[idx] += delta,
        }
        n
    }

    #[test]
    fn student_backward_matches_finite_differences() {
        let net = StudentNet::init(4, 6, 3, 7).unwrap();
        let x = gaussian_matrix(&mut SeededRng::new(8), 5, 4).unwrap();
        let t = gaussian_matrix(&mut SeededRng::new(9), 5, 3).unwrap();
        let rows: Vec<usize> = (0..5).collect();
        let g = net.loss_grad(&x, &t, &rows).unwrap();
        let h = 1e-6;
        let blocks: [&[f64]; 4] = [
            &g.layer1_weights,
            &g.layer1_bias,
            &g.layer2_weights,
            &g.layer2_bias,
        ];
        for (b, grad) in blocks.iter().enumerate() {
            for idx in 0..grad.len() {
                let up = perturbed(&net, b, idx, h).mean_loss(&x, &t).unwrap();
                let dn = perturbed(&net, b, idx, -h).mean_loss(&x, &t).unwrap();
                let fd = (up - dn) / (2.0 * h);
                assert!(
                    (fd - grad[idx]).abs() <= 1e-4 * fd.abs().max(grad[idx].abs()).max(1e-3),
                    "block {b} idx {idx}: {fd} vs {}",
                    grad[idx]
                );
            }
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let x = gaussian_matrix(&mut SeededRng::new(1), 10, 4).unwrap();
        let teacher = gaussian_matrix(&mut SeededRng::new(2), 10, 8).unwrap();
        let p = sample_jl_seeded(3, 8, 2).unwrap();
        let cfg = TrainConfig::adamw_text_preset().with_epochs(0);
        let s = train_student(&x, &teacher, &p, &cfg, 5).unwrap();
        assert_eq!(
            s,
            StudentNet::init(4, 5, 2, student_init_seed(&cfg)).unwrap()
        );
    }

    fn realizable(seed: u64) -> (Matrix, Matrix) {
        let x = gaussian_matrix(&mut SeededRng::new(seed), 200, 6).unwrap();
        let a = gaussian_matrix(&mut SeededRng::new(seed + 100), 4, 6).unwrap();
        let a = Matrix::new(4, 6, a.data().iter().map(|v| v * 0.5).collect()).unwrap();
        (x.clone(), x.matmul_transposed(&a).unwrap())
    }

    fn fit_config() -> TrainConfig {
        TrainConfig {
            optimizer: OptimizerKind::AdamW,
            learning_rate: 1e-2,
            weight_decay: 0.0,
            momentum: 0.0,
            epochs: 300,
            batch_size: 32,
            shuffle_seed: 1,
        }
    }

    #[test]
    fn fits_linear_map_through_identity_projection() {
        let (x, teacher) = realizable(10);
        let p = ProjectionMatrix::identity(4).unwrap();
        let s = train_student(&x, &teacher, &p, &fit_config(), 32).unwrap();
        let loss = s.mean_loss(&x, &teacher).unwrap();
        assert!(loss < 1e-3, "{loss}");
    }

    #[test]
    fn converges_for_other_projection_seeds() {
        let (x, teacher_k) = realizable(20);
        // Teacher lives in R^12; targets are a JL image of it.
        let lift = gaussian_matrix(&mut SeededRng::new(5), 12, 4).unwrap();
        let lift = Matrix::new(
            12,
            4,
            lift.data().iter().map(|v| v / 12f64.sqrt()).collect(),
        )
        .unwrap();
        let teacher = teacher_k.matmul_transposed(&lift).unwrap();
        for seed in [1, 2] {
            let p = sample_jl_seeded(seed, 12, 4).unwrap();
            let s = train_student(&x, &teacher, &p, &fit_config(), 32).unwrap();
            let targets = project(&p, &teacher).unwrap();
            let loss = s.mean_loss(&x, &targets).unwrap();
            assert!(loss < 1e-2, "seed {seed}: {loss}");
        }
    }

    #[test]
    fn row_mismatch_rejected() {
        let x = gaussian_matrix(&mut SeededRng::new(1), 10, 4).unwrap();
        let teacher = gaussian_matrix(&mut SeededRng::new(2), 9, 8).unwrap();
        let p = sample_jl_seeded(3, 8, 2).unwrap();
        assert!(train_student(&x, &teacher, &p, &fit_config(), 4).is_err());
    }
}
