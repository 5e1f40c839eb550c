//! Small numeric helpers shared by the metric and loss kernels.

/// Neumaier-compensated sum, evaluated in iteration order.
///
/// Reductions over maps go through this so that results do not depend on
/// accumulated rounding and are reproducible for a fixed element order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    let var = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let v = [1e16, 1.0, -1e16];
        assert_eq!(compensated_sum(v), 1.0);
        assert_ne!(v.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn mean_std_population() {
        let (m, s) = mean_std(&[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(m, 0.25);
        assert!((s - 0.1875_f64.sqrt()).abs() < 1e-15);
    }
}
