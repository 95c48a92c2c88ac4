use rand::seq::SliceRandom;

use super::{Sample, TaskDataset};
use crate::error::{Error, Result};
use crate::seed;

/// One N-way K-shot draw from a task. Samples keep the task's own labels;
/// `classes` lists the drawn classes in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub support: Vec<Sample>,
    pub query: Vec<Sample>,
    pub classes: Vec<usize>,
    pub n_way: usize,
    pub k_shot: usize,
    pub q_query: usize,
}

impl Episode {
    pub fn support_batch(&self) -> (Vec<&[f64]>, Vec<usize>) {
        batch(&self.support)
    }

    pub fn query_batch(&self) -> (Vec<&[f64]>, Vec<usize>) {
        batch(&self.query)
    }
}

pub(crate) fn batch(samples: &[Sample]) -> (Vec<&[f64]>, Vec<usize>) {
    samples
        .iter()
        .map(|s| (s.window.as_slice(), s.label))
        .unzip()
}

/// Draws `n_way` classes uniformly without replacement, then `k_shot` support
/// and `q_query` query windows per class, all without replacement.
pub fn sample_episode(
    task: &TaskDataset,
    n_way: usize,
    k_shot: usize,
    q_query: usize,
    rng_seed: u64,
) -> Result<Episode> {
    if n_way == 0 || k_shot == 0 || q_query == 0 {
        return Err(Error::Contract(format!(
            "n_way, k_shot and q_query must be positive (got {n_way}, {k_shot}, {q_query})"
        )));
    }
    let available: Vec<usize> = task.class_set().into_iter().collect();
    if available.len() < n_way {
        return Err(Error::Data(format!(
            "task `{}` has {} classes, {n_way}-way episode requested",
            task.condition_id(),
            available.len()
        )));
    }
    let mut rng = seed::rng(rng_seed);
    let mut classes: Vec<usize> = available.choose_multiple(&mut rng, n_way).copied().collect();
    classes.sort_unstable();
    let mut support = Vec::with_capacity(n_way * k_shot);
    let mut query = Vec::with_capacity(n_way * q_query);
    for &class in &classes {
        let pool = task.class_indices(class);
        if pool.len() < k_shot + q_query {
            return Err(Error::Data(format!(
                "class {class} of task `{}` has {} samples, needs {}",
                task.condition_id(),
                pool.len(),
                k_shot + q_query
            )));
        }
        let picked: Vec<usize> = pool
            .choose_multiple(&mut rng, k_shot + q_query)
            .copied()
            .collect();
        let take = |i: &usize| task.samples()[*i].clone();
        support.extend(picked[..k_shot].iter().map(take));
        query.extend(picked[k_shot..].iter().map(take));
    }
    Ok(Episode {
        support,
        query,
        classes,
        n_way,
        k_shot,
        q_query,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn task(classes: usize, per_class: usize) -> TaskDataset {
        let samples = (0..classes * per_class)
            .map(|i| Sample {
                window: vec![i as f64, 0.0],
                label: i % classes,
            })
            .collect();
        TaskDataset::new("t", 2, samples).unwrap()
    }

    #[test]
    fn sizes_for_three_way_five_shot() {
        let e = sample_episode(&task(4, 10), 3, 5, 4, 1).unwrap();
        assert_eq!(e.support.len(), 15);
        assert_eq!(e.query.len(), 12);
        assert_eq!(e.classes.len(), 3);
        assert!(e.classes.windows(2).all(|w| w[0] < w[1]));
        for &l in &e.classes {
            assert_eq!(e.support.iter().filter(|s| s.label == l).count(), 5);
            assert_eq!(e.query.iter().filter(|s| s.label == l).count(), 4);
        }
        // labels are the task's own
        assert!(e.support.iter().all(|s| s.window[0] as usize % 4 == s.label));
    }

    #[test]
    fn deterministic_given_seed() {
        let t = task(5, 12);
        assert_eq!(
            sample_episode(&t, 3, 2, 3, 9).unwrap(),
            sample_episode(&t, 3, 2, 3, 9).unwrap()
        );
    }

    #[test]
    fn support_and_query_disjoint() {
        let t = task(3, 9);
        for seed in 0..20 {
            let e = sample_episode(&t, 3, 4, 5, seed).unwrap();
            for s in &e.support {
                assert!(!e.query.iter().any(|q| q.window == s.window));
            }
        }
    }

    #[test]
    fn too_many_ways() {
        assert!(matches!(
            sample_episode(&task(2, 10), 3, 1, 1, 0),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn too_few_samples_names_class() {
        let err = sample_episode(&task(2, 3), 2, 2, 2, 0).unwrap_err();
        match err {
            Error::Data(msg) => assert!(msg.contains("class")),
            e => panic!("unexpected {e}"),
        }
    }

    proptest! {
        #[test]
        fn support_and_query_are_disjoint(
            classes in 2usize..6,
            per_class in 6usize..15,
            k in 1usize..4,
            q in 1usize..3,
            seed in any::<u64>(),
        ) {
            let n_way = classes.min(3);
            let e = sample_episode(&task(classes, per_class), n_way, k, q, seed).unwrap();
            let ids = |v: &[Sample]| v.iter().map(|s| s.window[0] as usize).collect::<Vec<_>>();
            let (s, qu) = (ids(&e.support), ids(&e.query));
            let mut all: Vec<usize> = s.iter().chain(&qu).copied().collect();
            all.sort_unstable();
            all.dedup();
            prop_assert_eq!(all.len(), s.len() + qu.len());
            prop_assert!(e.support.iter().chain(&e.query).all(|x| e.classes.contains(&x.label)));
            prop_assert_eq!(e, sample_episode(&task(classes, per_class), n_way, k, q, seed).unwrap());
        }
    }
}
