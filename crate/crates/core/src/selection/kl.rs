use crate::learner::ActionDist;

use super::SelectionError;

/// `KL(p || q)` between two action distributions of the same family.
///
/// Categorical: `sum_a p(a) (log p(a) - log q(a))`, with `0 log 0 = 0`.
/// Diagonal Gaussian: the closed form summed over dimensions,
/// `log(s_q/s_p) + (s_p^2 + (m_p - m_q)^2) / (2 s_q^2) - 1/2`.
pub fn kl_between(p: &ActionDist, q: &ActionDist) -> Result<f64, SelectionError> {
    let kl = match (p, q) {
        (
            ActionDist::Categorical { probs: pp, log_probs: lp },
            ActionDist::Categorical { probs: pq, log_probs: lq },
        ) if pp.len() == pq.len() => {
            let mut sum = 0.0;
            for a in 0..pp.len() {
                if pp[a] == 0.0 {
                    continue;
                }
                if pq[a] == 0.0 || lq[a] == f64::NEG_INFINITY {
                    return Err(SelectionError::ZeroSupportMismatch { action: a });
                }
                sum += pp[a] * (lp[a] - lq[a]);
            }
            sum
        }
        (
            ActionDist::Gaussian { mean: mp, log_std: sp },
            ActionDist::Gaussian { mean: mq, log_std: sq },
        ) if mp.len() == mq.len() => (0..mp.len())
            .map(|d| {
                let var_p = (2.0 * sp[d]).exp();
                let var_q = (2.0 * sq[d]).exp();
                let dm = mp[d] - mq[d];
                sq[d] - sp[d] + (var_p + dm * dm) / (2.0 * var_q) - 0.5
            })
            .sum(),
        _ => return Err(SelectionError::SpaceMismatch),
    };
    // rounding can leave a hair below zero for nearly equal inputs
    Ok(kl.max(0.0))
}
