use super::{GaError, RunRecord};

/// Area under the avg-top-K step curve over `[0, budget]`, divided by
/// `budget`. Record `i` holds its value on `(b_{i-1}, b_i]` with `b_0 = 0`;
/// the last value extends to `budget`.
pub fn auc_topk(records: &[RunRecord], budget: usize) -> Result<f64, GaError> {
    let last = records.last().ok_or(GaError::EmptyTrajectory)?;
    if budget == 0 {
        return Err(GaError::InvalidConfig("budget must be >= 1".into()));
    }
    let mut area = 0.0;
    let mut prev = 0usize;
    for r in records {
        let b = r.budget_spent.min(budget);
        if b > prev {
            area += r.avg_topk * (b - prev) as f64;
            prev = b;
        }
    }
    area += last.avg_topk * (budget - prev) as f64;
    Ok(area / budget as f64)
}
