//! Per-run splits: stratified train/test, a stratified labeled subset of the
//! training part, and training-only feature normalization.

use lpm::{Label, TaskDataset};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{CliError, Result};
use crate::ingest::{apply_z_score, z_score_stats};

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSplit {
    /// Training examples; unlabeled rows of the source file always land here.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Subset of `train` whose labels the learner sees.
    pub labeled: Vec<usize>,
}

/// `round(count · share / total)` per class, fixed up so the counts sum to `count`
/// and every nonempty class gets at least one item when `count` allows it.
fn apportion(count: usize, sizes: [usize; 2]) -> [usize; 2] {
    let total = sizes[0] + sizes[1];
    if total == 0 {
        return [0, 0];
    }
    let mut first = ((count * sizes[0]) as f64 / total as f64).round() as usize;
    first = first.min(sizes[0]);
    if count >= 2 && sizes[0] > 0 && sizes[1] > 0 {
        first = first.clamp(1, count - 1);
    }
    let mut second = count - first.min(count);
    if second > sizes[1] {
        let spill = second - sizes[1];
        second = sizes[1];
        first = (first + spill).min(sizes[0]);
    }
    [first, second]
}

fn by_class(labels: &[Option<Label>], indices: &[usize]) -> [Vec<usize>; 2] {
    let mut classes = [Vec::new(), Vec::new()];
    for &i in indices {
        match labels[i] {
            Some(Label::Positive) => classes[0].push(i),
            Some(Label::Negative) => classes[1].push(i),
            None => {}
        }
    }
    classes
}

pub fn split_task<R: Rng + ?Sized>(
    labels: &[Option<Label>],
    test_fraction: f64,
    n_labeled: usize,
    rng: &mut R,
) -> Result<TaskSplit> {
    let all: Vec<usize> = (0..labels.len()).collect();
    let mut classes = by_class(labels, &all);
    let mut train: Vec<usize> = all.iter().copied().filter(|&i| labels[i].is_none()).collect();
    let mut test = Vec::new();
    for class in &mut classes {
        class.shuffle(rng);
        let n_test = (class.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&class[..n_test]);
        train.extend_from_slice(&class[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();

    let mut pools = by_class(labels, &train);
    let available = pools[0].len() + pools[1].len();
    if n_labeled > available {
        return Err(CliError::Data(format!(
            "requested {n_labeled} labeled examples, only {available} labeled training examples"
        )));
    }
    let counts = apportion(n_labeled, [pools[0].len(), pools[1].len()]);
    let mut labeled = Vec::with_capacity(n_labeled);
    for (pool, &count) in pools.iter_mut().zip(&counts) {
        pool.shuffle(rng);
        labeled.extend_from_slice(&pool[..count]);
    }
    labeled.sort_unstable();
    Ok(TaskSplit { train, test, labeled })
}

/// Training set (labels outside `split.labeled` hidden) and labeled test set,
/// z-scored with training statistics when `normalize` is set.
pub fn materialize(data: &TaskDataset, split: &TaskSplit, normalize: bool) -> Result<(TaskDataset, TaskDataset)> {
    let hidden: Vec<usize> = split.train.iter().copied().filter(|i| split.labeled.binary_search(i).is_err()).collect();
    let masked = data.hide_labels(&hidden);
    let mut train = masked.select(&split.train);
    let mut test = data.select(&split.test);
    if normalize {
        let (mean, scale) = z_score_stats(data.x(), &split.train);
        let mut xt = train.x().clone();
        apply_z_score(&mut xt, &mean, &scale);
        train = train.with_features(xt)?;
        let mut xs = test.x().clone();
        apply_z_score(&mut xs, &mean, &scale);
        test = test.with_features(xs)?;
    }
    Ok((train, test))
}
