use crate::error::{Error, Result};

/// Squared L2 error `‖eps − eps_hat‖²` and its gradient `2 (eps_hat − eps)` with respect to `eps_hat`.
pub fn simple_loss(eps: &[f64], eps_hat: &[f64]) -> Result<(f64, Vec<f64>)> {
    if eps.len() != eps_hat.len() {
        return Err(Error::dims("simple_loss", eps.len(), eps_hat.len()));
    }
    let mut loss = 0.0;
    let grad = eps
        .iter()
        .zip(eps_hat)
        .map(|(e, h)| {
            let r = h - e;
            loss += r * r;
            2.0 * r
        })
        .collect();
    Ok((loss, grad))
}
