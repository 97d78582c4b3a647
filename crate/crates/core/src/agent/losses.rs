//! Scalar losses over batches of Q outputs, each returned with its gradient
//! with respect to those outputs. Gradients already include the 1/n mean.

/// Loss value and per-element output gradients for the human and novice
/// action columns of a proxy-value term.
#[derive(Debug, Clone, PartialEq)]
pub struct PairLoss {
    pub loss: f64,
    pub grad_h: Vec<f64>,
    pub grad_n: Vec<f64>,
}

/// Proxy value loss: `mean[(Q(s,a_h) - b)^2 + (Q(s,a_n) + b)^2]`.
/// Empty input gives zero loss.
pub fn pv_loss(q_h: &[f64], q_n: &[f64], bound: f64) -> PairLoss {
    assert_eq!(q_h.len(), q_n.len(), "human and novice batches differ in length");
    let n = q_h.len();
    if n == 0 {
        return PairLoss {
            loss: 0.0,
            grad_h: Vec::new(),
            grad_n: Vec::new(),
        };
    }
    let inv = 1.0 / n as f64;
    let loss = q_h
        .iter()
        .zip(q_n)
        .map(|(h, a)| (h - bound).powi(2) + (a + bound).powi(2))
        .sum::<f64>()
        * inv;
    PairLoss {
        loss,
        grad_h: q_h.iter().map(|h| 2.0 * (h - bound) * inv).collect(),
        grad_n: q_n.iter().map(|a| 2.0 * (a + bound) * inv).collect(),
    }
}

/// Pairwise conservative term without the L2 part: `mean[2(Q(s,a_n) - Q(s,a_h))]`.
pub fn cql_loss(q_h: &[f64], q_n: &[f64]) -> PairLoss {
    assert_eq!(q_h.len(), q_n.len(), "human and novice batches differ in length");
    let n = q_h.len();
    if n == 0 {
        return PairLoss {
            loss: 0.0,
            grad_h: Vec::new(),
            grad_n: Vec::new(),
        };
    }
    let inv = 1.0 / n as f64;
    PairLoss {
        loss: q_h.iter().zip(q_n).map(|(h, a)| 2.0 * (a - h)).sum::<f64>() * inv,
        grad_h: vec![-2.0 * inv; n],
        grad_n: vec![2.0 * inv; n],
    }
}

/// The same proxy value loss written as L2 regularizer plus conservative
/// term: `mean[Q_n^2 + Q_h^2 + 2 + 2(Q_n - Q_h)]` (for `b = 1`).
pub fn pv_loss_regularized_form(q_h: &[f64], q_n: &[f64]) -> f64 {
    if q_h.is_empty() {
        return 0.0;
    }
    let l2 = q_h.iter().zip(q_n).map(|(h, a)| a * a + h * h + 2.0).sum::<f64>() / q_h.len() as f64;
    l2 + cql_loss(q_h, q_n).loss
}

/// Mean squared error against fixed targets.
pub fn td_loss(q: &[f64], targets: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(q.len(), targets.len());
    if q.is_empty() {
        return (0.0, Vec::new());
    }
    let inv = 1.0 / q.len() as f64;
    let loss = q.iter().zip(targets).map(|(a, y)| (a - y).powi(2)).sum::<f64>() * inv;
    let grad = q.iter().zip(targets).map(|(a, y)| 2.0 * (a - y) * inv).collect();
    (loss, grad)
}

/// Reward-free bootstrap target `gamma * (1 - done) * next_value`, with
/// the reward added only for the reward ablation.
pub fn td_target(gamma: f64, done: bool, next_value: f64, reward: Option<f64>) -> f64 {
    let bootstrap = if done { 0.0 } else { gamma * next_value };
    bootstrap + reward.unwrap_or(0.0)
}

/// Greedy value over a row of target Q values.
pub fn max_value(row: impl IntoIterator<Item = f64>) -> f64 {
    row.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
