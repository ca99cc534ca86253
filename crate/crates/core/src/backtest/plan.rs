//! Rolling quarterly fold plans.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::Quarter;

/// Inclusive run of consecutive quarters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarterSpan {
    pub first: Quarter,
    pub last: Quarter,
}

impl QuarterSpan {
    pub fn new(first: Quarter, len: usize) -> Self {
        QuarterSpan {
            first,
            last: first.offset(len as i64 - 1),
        }
    }

    pub fn contains(&self, q: Quarter) -> bool {
        self.first <= q && q <= self.last
    }

    pub fn len(&self) -> usize {
        (self.last.ordinal() - self.first.ordinal() + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn quarters(&self) -> Vec<Quarter> {
        (0..self.len()).map(|i| self.first.offset(i as i64)).collect()
    }
}

impl fmt::Display for QuarterSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.first == self.last {
            write!(f, "{}", self.first)
        } else {
            write!(f, "{}-{}", self.first, self.last)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub train: QuarterSpan,
    pub test: QuarterSpan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
    pub train_window: usize,
    pub test_window: usize,
    /// Quarters from the earliest to the latest one present, inclusive.
    pub span: QuarterSpan,
}

/// Number of folds for a span of `total` quarters: each fold shifts by
/// `test_window`, so `(total - train - test) / test + 1` (floored), which is
/// `total - train - test + 1` for single-quarter test windows.
pub fn fold_count(total: usize, train_window: usize, test_window: usize) -> usize {
    if total < train_window + test_window || test_window == 0 {
        0
    } else {
        (total - train_window - test_window) / test_window + 1
    }
}

/// Plans rolling folds over the contiguous quarter range spanned by
/// `quarters` (gaps inside the range still count as quarters).
pub fn build_fold_plan(quarters: &[Quarter], train_window: usize, test_window: usize) -> Result<FoldPlan> {
    if train_window == 0 || test_window == 0 {
        return Err(Error::invalid("train and test windows must be at least one quarter"));
    }
    let need = train_window + test_window;
    let (Some(&first), Some(&last)) = (quarters.iter().min(), quarters.iter().max()) else {
        return Err(Error::invalid(format!(
            "no quarters to plan over; a {train_window}+{test_window} plan needs at least {need} quarters"
        )));
    };
    let span = QuarterSpan { first, last };
    let total = span.len();
    if total < need {
        return Err(Error::invalid(format!(
            "data spans {total} quarters ({span}); train window {train_window} plus test window {test_window} needs at least {need} quarters"
        )));
    }
    let folds = (0..fold_count(total, train_window, test_window))
        .map(|i| {
            let start = first.offset((i * test_window) as i64);
            Fold {
                index: i,
                train: QuarterSpan::new(start, train_window),
                test: QuarterSpan::new(start.offset(train_window as i64), test_window),
            }
        })
        .collect();
    Ok(FoldPlan {
        folds,
        train_window,
        test_window,
        span,
    })
}

impl FoldPlan {
    /// Checks the plan invariants: train precedes test within each fold,
    /// consecutive folds shift by `test_window`, windows have their nominal
    /// lengths, and the fold count matches [`fold_count`].
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(format!("fold plan invariant violated: {m}")));
        if self.folds.len() != fold_count(self.span.len(), self.train_window, self.test_window) {
            return bad(format!("{} folds for a {}-quarter span", self.folds.len(), self.span.len()));
        }
        for (i, f) in self.folds.iter().enumerate() {
            if f.index != i {
                return bad(format!("fold {i} has index {}", f.index));
            }
            if f.train.len() != self.train_window || f.test.len() != self.test_window {
                return bad(format!("fold {i} has wrong window lengths"));
            }
            if f.train.last >= f.test.first {
                return bad(format!("fold {i} trains on {} but tests on {}", f.train, f.test));
            }
            if !(self.span.contains(f.train.first) && self.span.contains(f.test.last)) {
                return bad(format!("fold {i} leaves the data span"));
            }
            if i > 0 {
                let prev = &self.folds[i - 1];
                let shift = self.test_window as i64;
                if f.train.first != prev.train.first.offset(shift) || f.test.first != prev.test.first.offset(shift) {
                    return bad(format!("fold {i} does not shift by {shift}"));
                }
            }
        }
        Ok(())
    }
}
