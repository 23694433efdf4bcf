use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::nn::matrix::Matrix;
use crate::nn::net::{DenseNet, NetGrads};
use crate::scalar::Scalar;

const PROB_FLOOR: f64 = 1e-12;

/// Cross-entropy / distillation split of the local objective
/// `total = ce + beta * kd`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce: f64,
    pub kd: f64,
    pub total: f64,
}

/// Numerically stable softmax (max-subtraction).
pub fn softmax<S: Scalar>(logits: &[S]) -> Result<Vec<S>> {
    if logits.is_empty() {
        return Err(SimError::input("softmax of empty vector".to_string()));
    }
    if logits.iter().any(|v| v.is_nan()) {
        return Err(SimError::numeric("NaN input to softmax".to_string()));
    }
    let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: S = exps.iter().copied().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// `-log(probs[label])`, with the probability floored at 1e-12.
pub fn cross_entropy<S: Scalar>(probs: &[S], label: usize) -> Result<S> {
    if label >= probs.len() {
        return Err(SimError::input(format!(
            "label {label} out of range for {} classes",
            probs.len()
        )));
    }
    let p = probs[label].max(S::from_f64(PROB_FLOOR));
    Ok(-p.ln())
}

/// KL(teacher || softmax(student / temperature)). Teacher entries of zero
/// contribute nothing; student probabilities are floored at 1e-12.
pub fn kd_loss<S: Scalar>(student_logits: &[S], teacher: &[S], temperature: S) -> Result<S> {
    if temperature <= S::zero() {
        return Err(SimError::config("temperature must be positive".to_string()));
    }
    if student_logits.len() != teacher.len() {
        return Err(SimError::input(format!(
            "student/teacher length mismatch: {} vs {}",
            student_logits.len(),
            teacher.len()
        )));
    }
    let softened: Vec<S> = student_logits.iter().map(|&z| z / temperature).collect();
    let student = softmax(&softened)?;
    let floor = S::from_f64(PROB_FLOOR);
    let mut kl = S::zero();
    for (&t, &s) in teacher.iter().zip(&student) {
        if t > S::zero() {
            kl += t * (t.ln() - s.max(floor).ln());
        }
    }
    // Tiny negative values from rounding are clipped to zero.
    Ok(kl.max(S::zero()))
}

/// Puts an uploaded teacher vector back on the simplex. Poisoned vectors
/// may not sum to 1; a near-zero sum degenerates to the uniform
/// distribution. Returns the vector and whether it was degenerate.
pub fn normalize_teacher<S: Scalar>(raw: &[S]) -> (Vec<S>, bool) {
    let sum: S = raw.iter().copied().sum();
    if sum > S::from_f64(1e-9) && raw.iter().all(|v| *v >= S::zero()) {
        (raw.iter().map(|&v| v / sum).collect(), false)
    } else {
        let n = S::from_f64(raw.len() as f64);
        (vec![S::one() / n; raw.len()], true)
    }
}

/// Mean cross-entropy over the batch plus `beta` times the mean KD term
/// over the rows that have a teacher target.
pub fn local_objective<S: Scalar>(
    net: &DenseNet<S>,
    batch: &Matrix<S>,
    labels: &[usize],
    teacher_targets: &[Option<Vec<S>>],
    beta: S,
    temperature: S,
) -> Result<LossBreakdown> {
    check_alignment(batch, labels, teacher_targets)?;
    let logits = net.forward(batch)?;
    let mut ce_sum = S::zero();
    let mut kd_sum = S::zero();
    let mut kd_rows = 0usize;
    for r in 0..batch.rows() {
        let probs = softmax(logits.row(r))?;
        ce_sum += cross_entropy(&probs, labels[r])?;
        if let Some(teacher) = &teacher_targets[r] {
            kd_sum += kd_loss(logits.row(r), teacher, temperature)?;
            kd_rows += 1;
        }
    }
    let ce = ce_sum.to_f64() / batch.rows() as f64;
    let kd = if kd_rows > 0 {
        kd_sum.to_f64() / kd_rows as f64
    } else {
        0.0
    };
    Ok(LossBreakdown {
        ce,
        kd,
        total: ce + beta.to_f64() * kd,
    })
}

/// Analytic gradient of [`local_objective`] with respect to every parameter.
pub fn objective_gradient<S: Scalar>(
    net: &DenseNet<S>,
    batch: &Matrix<S>,
    labels: &[usize],
    teacher_targets: &[Option<Vec<S>>],
    beta: S,
    temperature: S,
) -> Result<NetGrads<S>> {
    check_alignment(batch, labels, teacher_targets)?;
    if temperature <= S::zero() {
        return Err(SimError::config("temperature must be positive".to_string()));
    }
    let trace = net.forward_trace(batch)?;
    let n = net.output_dim();
    let rows = batch.rows();
    let kd_rows = teacher_targets.iter().filter(|t| t.is_some()).count();
    let inv_b = S::one() / S::from_f64(rows as f64);
    let mut delta = Matrix::zeros(rows, n);
    for r in 0..rows {
        let logits = trace.logits.row(r);
        let probs = softmax(logits)?;
        if labels[r] >= n {
            return Err(SimError::input(format!("label {} out of range", labels[r])));
        }
        // d(mean CE)/dz = (softmax(z) - onehot) / B
        let drow = delta.row_mut(r);
        for (j, &p) in probs.iter().enumerate() {
            let onehot = if j == labels[r] { S::one() } else { S::zero() };
            drow[j] = (p - onehot) * inv_b;
        }
        // d(beta * mean KD)/dz = beta/M * (softmax(z/T) - t) / T
        if let Some(teacher) = &teacher_targets[r] {
            let softened: Vec<S> = logits.iter().map(|&z| z / temperature).collect();
            let q = softmax(&softened)?;
            let coeff = beta / (S::from_f64(kd_rows as f64) * temperature);
            for (j, (&qj, &tj)) in q.iter().zip(teacher).enumerate() {
                drow[j] += coeff * (qj - tj);
            }
        }
    }
    net.backward(batch, &trace, &delta)
}

/// One SGD step on the local objective (Eq.-style `W -= lr * grad`).
pub fn backward_and_step<S: Scalar>(
    net: &mut DenseNet<S>,
    batch: &Matrix<S>,
    labels: &[usize],
    teacher_targets: &[Option<Vec<S>>],
    beta: S,
    temperature: S,
    lr: S,
) -> Result<()> {
    if lr <= S::zero() {
        return Err(SimError::config("learning rate must be positive".to_string()));
    }
    let grads = objective_gradient(net, batch, labels, teacher_targets, beta, temperature)?;
    net.apply_gradient(&grads, lr)
}

fn check_alignment<S: Scalar>(
    batch: &Matrix<S>,
    labels: &[usize],
    teacher_targets: &[Option<Vec<S>>],
) -> Result<()> {
    if labels.len() != batch.rows() || teacher_targets.len() != batch.rows() {
        return Err(SimError::input(format!(
            "batch rows {} vs labels {} vs targets {}",
            batch.rows(),
            labels.len(),
            teacher_targets.len()
        )));
    }
    Ok(())
}
