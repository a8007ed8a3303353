//! The action and avoid-awareness losses.
//!
//! Both are averaged over steps within a sequence, then over the batch. The
//! scalar functions here are reference versions; [`batch_loss`] records the
//! same quantities on the autodiff tape.

use reachavoid_core::seed::Rng;
use reachavoid_nn::tape::BCE_EPS;
use reachavoid_nn::{Graph, Model, Var};

use crate::batch::BatchItem;
use crate::error::{Result, TrainError};

/// Mean squared elementwise error.
pub fn loss_action(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(TrainError::Config(format!("loss_action of {} predictions and {} targets", pred.len(), target.len())));
    }
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

/// Mean binary cross entropy, predictions clamped to `[1e-7, 1 - 1e-7]`.
pub fn loss_avoid_awareness(k_pred: &[f64], k_true: &[f64]) -> Result<f64> {
    if k_pred.len() != k_true.len() || k_pred.is_empty() {
        return Err(TrainError::Config(format!("awareness loss of {} predictions and {} targets", k_pred.len(), k_true.len())));
    }
    let s: f64 = k_pred
        .iter()
        .zip(k_true)
        .map(|(&p, &k)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            k * p.ln() + (1.0 - k) * (1.0 - p).ln()
        })
        .sum();
    Ok(-s / k_pred.len() as f64)
}

pub fn combined_loss(la: f64, lk: f64, alpha: f64) -> f64 {
    la + alpha * lk
}

pub struct LossVars {
    pub total: Var,
    pub action: Var,
    pub awareness: Var,
}

/// Forward pass plus both losses for a batch. Rows are weighted
/// `1 / (B * T_b)` so every sequence counts equally.
pub fn batch_loss<'p>(
    g: &mut Graph<'p>,
    model: &'p Model,
    items: &[BatchItem],
    alpha: f64,
    dropout_rng: Option<&mut Rng>,
) -> Result<LossVars> {
    let seqs: Vec<_> = items.iter().map(BatchItem::seq).collect();
    let f = model.forward(g, &seqs, dropout_rng)?;
    let nb = items.len() as f64;
    let mut ta = Vec::new();
    let mut tk = Vec::with_capacity(f.state_rows.len());
    let mut w = Vec::with_capacity(f.state_rows.len());
    for &(b, t) in &f.state_rows {
        ta.extend_from_slice(&items[b].actions[t]);
        tk.push(items[b].k[t]);
        w.push(1.0 / (nb * items[b].states.len() as f64));
    }
    let action = g.mse(f.action, ta, Some(w.clone()))?;
    let awareness = g.bce(f.k, tk, Some(w))?;
    let total = g.add_scaled(action, awareness, alpha)?;
    Ok(LossVars { total, action, awareness })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_loss_closed_forms() {
        assert_eq!(loss_action(&[0.1, 0.2], &[0.1, 0.2]).unwrap(), 0.0);
        assert_eq!(loss_action(&[1.5, 0.0, 2.0], &[0.5, -1.0, 1.0]).unwrap(), 1.0);
        assert!(loss_action(&[1.0], &[]).is_err());
    }

    #[test]
    fn awareness_loss_closed_forms() {
        let l = loss_avoid_awareness(&[0.5; 4], &[1.0, 0.0, 1.0, 0.0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        let perfect = loss_avoid_awareness(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!(perfect > 0.0 && perfect < 2e-7);
    }

    #[test]
    fn combined_is_linear_in_alpha() {
        assert_eq!(combined_loss(0.2, 0.3, 0.0), 0.2);
        assert!((combined_loss(0.2, 0.3, 1.0) - 0.5).abs() < 1e-15);
        let f = |a: f64| combined_loss(0.7, 0.25, a);
        assert!((f(2.0) - f(1.0) - (f(1.0) - f(0.0))).abs() < 1e-15);
    }
}
