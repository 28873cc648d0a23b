use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Constraint, Instance, MetricSpace};
use crate::matroid::{ExplicitMatroid, MatroidSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum GenConstraint {
    Cardinality { k: usize },
    UniformMatroid { rank: usize },
    /// Facilities dealt at random into `parts` groups, each with capacity `cap`.
    PartitionMatroid { parts: usize, cap: usize },
    /// Graphic matroid of a random multigraph on `vertices` vertices with one
    /// edge per facility; stored as an explicit rank table.
    GraphicMatroid { vertices: usize },
    /// Integer weights in `1..=max_weight`; budget is `budget_fraction` of the
    /// total weight, but never below the lightest facility.
    Knapsack { max_weight: u32, budget_fraction: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    pub n_facilities: usize,
    pub n_clients: usize,
    pub constraint: GenConstraint,
    pub discount_scale: f64,
    pub seed: u64,
}

/// Random planar instance: sites uniform in `[0,10)^2`, Euclidean distances,
/// normalized, discounts uniform in `[0, discount_scale * median f-c distance]`.
/// Deterministic per seed.
pub fn generate(p: &GenParams) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let n = p.n_facilities + p.n_clients;
    let points: Vec<(f64, f64)> =
        (0..n).map(|_| (rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0))).collect();
    let mut ids: Vec<_> = (0..p.n_facilities).map(|i| format!("f{i}")).collect();
    ids.extend((0..p.n_clients).map(|j| format!("c{j}")));
    let facilities: Vec<usize> = (0..p.n_facilities).collect();
    let clients: Vec<usize> = (p.n_facilities..n).collect();

    let constraint = match p.constraint {
        GenConstraint::Cardinality { k } => Constraint::Cardinality { k: k.clamp(1, p.n_facilities.max(1)) },
        GenConstraint::UniformMatroid { rank } => Constraint::Matroid(MatroidSpec::Uniform { rank: rank.max(1) }),
        GenConstraint::PartitionMatroid { parts, cap } => {
            let parts = parts.clamp(1, p.n_facilities.max(1));
            let mut order: Vec<usize> = (0..p.n_facilities).collect();
            order.shuffle(&mut rng);
            let mut groups = alloc::vec![Vec::new(); parts];
            for (pos, &i) in order.iter().enumerate() {
                groups[pos % parts].push(i);
            }
            for g in &mut groups {
                g.sort_unstable();
            }
            Constraint::Matroid(MatroidSpec::Partition { parts: groups, caps: alloc::vec![cap.max(1); parts] })
        }
        GenConstraint::GraphicMatroid { vertices } => {
            let vertices = vertices.max(2);
            let edges: Vec<(usize, usize)> = (0..p.n_facilities)
                .map(|_| {
                    let a = rng.gen_range(0..vertices);
                    let mut b = rng.gen_range(0..vertices - 1);
                    if b >= a {
                        b += 1;
                    }
                    (a, b)
                })
                .collect();
            let m = ExplicitMatroid::graphic(vertices, &edges).expect("graphic matroid within the explicit limit");
            Constraint::Matroid(MatroidSpec::Explicit(m))
        }
        GenConstraint::Knapsack { max_weight, budget_fraction } => {
            let weights: Vec<f64> =
                (0..p.n_facilities).map(|_| rng.gen_range(1..=max_weight.max(1)) as f64).collect();
            let total: f64 = weights.iter().sum();
            let lightest = weights.iter().copied().fold(f64::INFINITY, f64::min);
            let budget = libm::round(budget_fraction * total).max(lightest);
            Constraint::Knapsack { weights, budget }
        }
    };

    let metric = MetricSpace::euclidean(&points);
    let mut inst = Instance::new(ids, metric, facilities, clients, alloc::vec![0.0; p.n_clients], constraint);
    inst = inst.normalize();
    inst.scale = 1.0;

    let mut fc: Vec<f64> = (0..inst.n_facilities())
        .flat_map(|i| (0..inst.n_clients()).map(move |j| (i, j)))
        .map(|(i, j)| inst.fc(i, j))
        .collect();
    fc.sort_by(f64::total_cmp);
    let median = if fc.is_empty() { 0.0 } else { fc[fc.len() / 2] };
    let top = p.discount_scale * median;
    for r in &mut inst.discounts {
        *r = if top > 0.0 { rng.gen_range(0.0..top) } else { 0.0 };
    }
    inst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(seed: u64) -> GenParams {
        GenParams {
            n_facilities: 4,
            n_clients: 6,
            constraint: GenConstraint::Cardinality { k: 2 },
            discount_scale: 0.5,
            seed,
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(generate(&params(7)), generate(&params(7)));
        assert_ne!(generate(&params(7)), generate(&params(8)));
    }

    #[test]
    fn zero_scale_means_no_discounts() {
        let mut p = params(3);
        p.discount_scale = 0.0;
        assert!(generate(&p).discounts.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn generated_instances_validate() {
        let kinds = [
            GenConstraint::Cardinality { k: 2 },
            GenConstraint::UniformMatroid { rank: 2 },
            GenConstraint::PartitionMatroid { parts: 2, cap: 1 },
            GenConstraint::GraphicMatroid { vertices: 3 },
            GenConstraint::Knapsack { max_weight: 4, budget_fraction: 0.4 },
        ];
        for seed in 0..1000 {
            let mut p = params(seed);
            p.constraint = kinds[seed as usize % kinds.len()].clone();
            let inst = generate(&p);
            assert_eq!(inst.validate(), alloc::vec![], "seed {seed}");
        }
    }
}
