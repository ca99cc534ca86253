//! Missing-value imputation statistics, fitted on training rows only.

use crate::error::{Error, Result};

/// Median of the non-missing training values of `column`. Two middle values
/// are averaged.
pub fn train_median(values: &[Option<f64>], column: &str) -> Result<f64> {
    let mut present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(Error::Schema(format!(
            "column `{column}` has no non-missing training values"
        )));
    }
    present.sort_by(f64::total_cmp);
    let n = present.len();
    Ok(if n % 2 == 1 {
        present[n / 2]
    } else {
        (present[n / 2 - 1] + present[n / 2]) / 2.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_two() {
        assert_eq!(train_median(&[Some(1.0), None, Some(3.0)], "x").unwrap(), 2.0);
        assert_eq!(train_median(&[Some(5.0), Some(1.0), Some(3.0)], "x").unwrap(), 3.0);
    }

    #[test]
    fn all_missing_names_column() {
        let err = train_median(&[None, None], "deal_value").unwrap_err();
        assert!(matches!(&err, Error::Schema(m) if m.contains("deal_value")));
    }
}
