//! Stratified sampling of training pairs.
//!
//! Each SQLSD value 0..=5 is a stratum and receives an equal share of the
//! epoch's pairs. Inside a stratum 70% of pairs come from within one lexical
//! cluster (the situation the matcher faces at query time) and 30% from
//! different clusters. When one side is impossible the other takes its share;
//! when both are, the stratum is skipped and counted.

use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Question;
use crate::error::{Error, Result};
use crate::sql_template::{sqlsd, ConstituentVector};

pub const WITHIN_CLUSTER_SHARE: f64 = 0.7;
const ACROSS_ATTEMPTS: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct PairExample<'a> {
    pub question_a: &'a Question,
    pub question_b: &'a Question,
    pub target: u8,
}

#[derive(Clone, Debug, Default)]
pub struct PairSample<'a> {
    pub pairs: Vec<PairExample<'a>>,
    /// Strata with no candidate pair at all.
    pub skipped_strata: Vec<u8>,
}

/// Within-cluster candidate: two template groups of one cluster.
struct WithinEntry {
    cluster: usize,
    template_a: usize,
    template_b: usize,
}

/// `assignments[i]` is the cluster of `train[i]`.
pub fn make_pairs<'a>(
    train: &'a [Question],
    assignments: &[usize],
    per_epoch: usize,
    seed: u64,
) -> Result<PairSample<'a>> {
    if assignments.len() != train.len() {
        return Err(Error::IndexMismatch(format!(
            "{} cluster assignments for {} training questions",
            assignments.len(),
            train.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Sorted template order, so ids do not depend on input order.
    let templates: Vec<ConstituentVector> =
        train.iter().map(|q| q.template).collect::<BTreeSet<_>>().into_iter().collect();
    let template_of = |q: &Question| templates.binary_search(&q.template).unwrap();

    let mut by_template: Vec<Vec<usize>> = vec![Vec::new(); templates.len()];
    let mut by_cluster_template: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, q) in train.iter().enumerate() {
        let t = template_of(q);
        by_template[t].push(i);
        by_cluster_template.entry((assignments[i], t)).or_default().push(i);
    }
    let mut cluster_templates: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(c, t) in by_cluster_template.keys() {
        cluster_templates.entry(c).or_default().push(t);
    }

    let base = per_epoch / 6;
    let remainder = per_epoch % 6;
    let mut sample = PairSample::default();

    for target in 0u8..=5 {
        let quota = base + usize::from((target as usize) < remainder);
        let mut within = Vec::new();
        let mut within_weights = Vec::new();
        for (&c, ts) in &cluster_templates {
            for (x, &ta) in ts.iter().enumerate() {
                for &tb in &ts[x..] {
                    if sqlsd(&templates[ta], &templates[tb]) != target {
                        continue;
                    }
                    let na = by_cluster_template[&(c, ta)].len() as u64;
                    let nb = by_cluster_template[&(c, tb)].len() as u64;
                    let w = if ta == tb { na * (na - 1) / 2 } else { na * nb };
                    if w > 0 {
                        within.push(WithinEntry {
                            cluster: c,
                            template_a: ta,
                            template_b: tb,
                        });
                        within_weights.push(w);
                    }
                }
            }
        }

        let mut across = Vec::new();
        let mut across_weights = Vec::new();
        for ta in 0..templates.len() {
            for tb in ta..templates.len() {
                if sqlsd(&templates[ta], &templates[tb]) != target {
                    continue;
                }
                let (na, nb) = (by_template[ta].len() as u64, by_template[tb].len() as u64);
                let total = if ta == tb { na * (na - 1) / 2 } else { na * nb };
                let same_cluster: u64 = cluster_templates
                    .keys()
                    .map(|&c| {
                        let ca = by_cluster_template.get(&(c, ta)).map_or(0, |v| v.len() as u64);
                        let cb = by_cluster_template.get(&(c, tb)).map_or(0, |v| v.len() as u64);
                        if ta == tb {
                            ca * ca.saturating_sub(1) / 2
                        } else {
                            ca * cb
                        }
                    })
                    .sum();
                let w = total - same_cluster;
                if w > 0 {
                    across.push((ta, tb));
                    across_weights.push(w);
                }
            }
        }

        if within.is_empty() && across.is_empty() {
            if quota > 0 {
                sample.skipped_strata.push(target);
            }
            continue;
        }
        let mut within_quota = (quota as f64 * WITHIN_CLUSTER_SHARE).round() as usize;
        if across.is_empty() {
            within_quota = quota;
        } else if within.is_empty() {
            within_quota = 0;
        }
        let across_quota = quota - within_quota;

        if within_quota > 0 {
            let dist = WeightedIndex::new(&within_weights).expect("positive weights");
            for _ in 0..within_quota {
                let e = &within[dist.sample(&mut rng)];
                let group_a = &by_cluster_template[&(e.cluster, e.template_a)];
                let group_b = &by_cluster_template[&(e.cluster, e.template_b)];
                let (a, b) = draw_two(group_a, group_b, e.template_a == e.template_b, &mut rng);
                sample.pairs.push(example(train, a, b, target, &mut rng));
            }
        }
        if across_quota > 0 {
            let dist = WeightedIndex::new(&across_weights).expect("positive weights");
            let mut produced = 0;
            let mut attempts = 0;
            while produced < across_quota && attempts < across_quota * ACROSS_ATTEMPTS {
                attempts += 1;
                let (ta, tb) = across[dist.sample(&mut rng)];
                let (a, b) = draw_two(&by_template[ta], &by_template[tb], ta == tb, &mut rng);
                if assignments[a] == assignments[b] {
                    continue;
                }
                sample.pairs.push(example(train, a, b, target, &mut rng));
                produced += 1;
            }
        }
    }

    if !sample.skipped_strata.is_empty() {
        log::warn!("no pairs available for SQLSD values {:?}", sample.skipped_strata);
    }
    sample.pairs.shuffle(&mut rng);
    Ok(sample)
}

fn draw_two<R: Rng>(group_a: &[usize], group_b: &[usize], same: bool, rng: &mut R) -> (usize, usize) {
    if same {
        let x = rng.gen_range(0..group_a.len());
        let mut y = rng.gen_range(0..group_a.len() - 1);
        if y >= x {
            y += 1;
        }
        (group_a[x], group_a[y])
    } else {
        (group_a[rng.gen_range(0..group_a.len())], group_b[rng.gen_range(0..group_b.len())])
    }
}

fn example<'a, R: Rng>(train: &'a [Question], a: usize, b: usize, expected: u8, rng: &mut R) -> PairExample<'a> {
    let (a, b) = if rng.gen::<bool>() { (a, b) } else { (b, a) };
    let target = sqlsd(&train[a].template, &train[b].template);
    debug_assert_eq!(target, expected);
    PairExample {
        question_a: &train[a],
        question_b: &train[b],
        target,
    }
}
