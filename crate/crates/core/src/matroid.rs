//! Matroid rank oracles and compact matroid-polytope rows.
//!
//! Elements are facility positions `0..n`. Explicit matroids carry a full rank
//! table indexed by bitmask and are limited to [`EXPLICIT_LIMIT`] elements.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Largest ground set accepted for explicit matroids (2^20 rank entries).
pub const EXPLICIT_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub enum MatroidSpec {
    /// Every set of at most `rank` elements is independent.
    Uniform { rank: usize },
    /// Disjoint groups, at most `caps[g]` elements from group `g`.
    Partition { parts: Vec<Vec<usize>>, caps: Vec<usize> },
    Explicit(ExplicitMatroid),
}

/// Rank table over all subsets of `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitMatroid {
    n: usize,
    rank: Vec<u8>,
}

/// One packing row `sum_{v in vars} y_v <= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolytopeRow {
    pub vars: Vec<usize>,
    pub rhs: f64,
}

impl ExplicitMatroid {
    pub fn from_rank_table(n: usize, rank: Vec<u8>) -> Result<Self> {
        if n > EXPLICIT_LIMIT {
            return Err(Error::MatroidTooLarge { elements: n, limit: EXPLICIT_LIMIT });
        }
        if rank.len() != 1usize << n {
            return Err(Error::InvalidParameter(format!(
                "rank table has {} entries, expected 2^{n}",
                rank.len()
            )));
        }
        Ok(Self { n, rank })
    }

    /// Rank `r(S) = max_B |B ∩ S|` over the given bases.
    pub fn from_bases(n: usize, bases: &[Vec<usize>]) -> Result<Self> {
        if n > EXPLICIT_LIMIT {
            return Err(Error::MatroidTooLarge { elements: n, limit: EXPLICIT_LIMIT });
        }
        let mut masks = Vec::with_capacity(bases.len());
        for b in bases {
            let mut m = 0u32;
            for &e in b {
                if e >= n {
                    return Err(Error::UnknownFacility(e));
                }
                m |= 1 << e;
            }
            masks.push(m);
        }
        let rank = (0..1u32 << n)
            .map(|s| masks.iter().map(|b| (b & s).count_ones()).max().unwrap_or(0) as u8)
            .collect();
        Ok(Self { n, rank })
    }

    /// Graphic matroid of a multigraph: element `e` is edge `edges[e]`.
    pub fn graphic(vertices: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let n = edges.len();
        if n > EXPLICIT_LIMIT {
            return Err(Error::MatroidTooLarge { elements: n, limit: EXPLICIT_LIMIT });
        }
        let mut rank = vec![0u8; 1 << n];
        let mut parent = vec![0usize; vertices];
        for (s, r) in rank.iter_mut().enumerate() {
            for (v, p) in parent.iter_mut().enumerate() {
                *p = v;
            }
            let mut count = 0u8;
            for (e, &(a, b)) in edges.iter().enumerate() {
                if s >> e & 1 == 1 {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    if ra != rb {
                        parent[ra] = rb;
                        count += 1;
                    }
                }
            }
            *r = count;
        }
        Ok(Self { n, rank })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn rank_mask(&self, mask: u32) -> usize {
        self.rank[mask as usize] as usize
    }

    pub fn table(&self) -> &[u8] {
        &self.rank
    }

    /// Exhaustive check of the rank axioms; returns a description per violation
    /// (at most a handful are reported).
    pub fn axiom_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.rank[0] != 0 {
            out.push(String::from("rank of the empty set is not 0"));
        }
        let full = 1u32 << self.n;
        'outer: for s in 0..full {
            let rs = self.rank[s as usize] as u32;
            if rs > s.count_ones() {
                out.push(format!("r({s:#b}) exceeds |S|"));
            }
            for e in 0..self.n {
                let se = s | 1 << e;
                if se == s {
                    continue;
                }
                let rse = self.rank[se as usize] as u32;
                if rse < rs {
                    out.push(format!("rank not monotone at {s:#b} + {e}"));
                }
                for f in e + 1..self.n {
                    let sf = s | 1 << f;
                    if sf == s {
                        continue;
                    }
                    let rsf = self.rank[sf as usize] as u32;
                    let rsef = self.rank[(se | sf) as usize] as u32;
                    if rse + rsf < rsef + rs {
                        out.push(format!("rank not submodular at {s:#b} with {e}, {f}"));
                    }
                }
                if out.len() >= 8 {
                    break 'outer;
                }
            }
        }
        out
    }

    fn is_flat(&self, s: u32) -> bool {
        let rs = self.rank[s as usize];
        (0..self.n).all(|e| s >> e & 1 == 1 || self.rank[(s | 1 << e) as usize] > rs)
    }
}

fn find(parent: &mut [usize], mut v: usize) -> usize {
    while parent[v] != v {
        parent[v] = parent[parent[v]];
        v = parent[v];
    }
    v
}

impl MatroidSpec {
    /// Rank of a set of facility positions. Duplicates are ignored.
    pub fn rank(&self, set: &[usize]) -> usize {
        let mut set = set.to_vec();
        set.sort_unstable();
        set.dedup();
        match self {
            MatroidSpec::Uniform { rank } => set.len().min(*rank),
            MatroidSpec::Partition { parts, caps } => {
                let mut r = 0;
                for (part, &cap) in parts.iter().zip(caps) {
                    let hit = set.iter().filter(|e| part.contains(e)).count();
                    r += hit.min(cap);
                }
                // elements outside every part are free
                r + set
                    .iter()
                    .filter(|e| !parts.iter().any(|p| p.contains(e)))
                    .count()
            }
            MatroidSpec::Explicit(m) => {
                let mask = set.iter().fold(0u32, |acc, &e| acc | 1 << e);
                m.rank_mask(mask)
            }
        }
    }

    pub fn is_independent(&self, set: &[usize]) -> bool {
        let mut s = set.to_vec();
        s.sort_unstable();
        s.dedup();
        s.len() == set.len() && self.rank(&s) == s.len()
    }

    /// Structural problems relative to a ground set of `n` facilities.
    pub fn violations(&self, n: usize) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            MatroidSpec::Uniform { rank } => {
                if *rank == 0 {
                    out.push(String::from("uniform matroid has rank 0"));
                }
            }
            MatroidSpec::Partition { parts, caps } => {
                if parts.len() != caps.len() {
                    out.push(String::from("partition matroid: parts and caps differ in length"));
                }
                let mut seen = vec![false; n];
                for part in parts {
                    for &e in part {
                        if e >= n {
                            out.push(format!("partition matroid: element {e} out of range"));
                        } else if seen[e] {
                            out.push(format!("partition matroid: element {e} in two parts"));
                        } else {
                            seen[e] = true;
                        }
                    }
                }
                if n > 0 && self.rank(&(0..n).collect::<Vec<_>>()) == 0 {
                    out.push(String::from("partition matroid has rank 0"));
                }
            }
            MatroidSpec::Explicit(m) => {
                if m.len() != n {
                    out.push(format!(
                        "explicit matroid over {} elements but instance has {n} facilities",
                        m.len()
                    ));
                }
                out.extend(m.axiom_violations());
                if m.rank_mask(((1u64 << m.len()) - 1) as u32) == 0 {
                    out.push(String::from("explicit matroid has rank 0"));
                }
            }
        }
        out
    }

    /// Rows describing the matroid polytope over LP variables, where
    /// `copies[i]` lists the variables that are co-located copies of facility
    /// `i` (one variable per facility when nothing is duplicated). Copies are
    /// parallel elements, so the rows describe the polytope of the parallel
    /// extension.
    pub fn polytope_rows(&self, copies: &[Vec<usize>]) -> Result<Vec<PolytopeRow>> {
        let n = copies.len();
        let group_rows = || {
            copies
                .iter()
                .filter(|c| c.len() > 1)
                .map(|c| PolytopeRow { vars: c.clone(), rhs: 1.0 })
        };
        let mut rows = Vec::new();
        match self {
            MatroidSpec::Uniform { rank } => {
                rows.push(PolytopeRow {
                    vars: copies.iter().flatten().copied().collect(),
                    rhs: *rank as f64,
                });
                rows.extend(group_rows());
            }
            MatroidSpec::Partition { parts, caps } => {
                for (part, &cap) in parts.iter().zip(caps) {
                    let vars = part.iter().flat_map(|&e| copies[e].iter().copied()).collect();
                    rows.push(PolytopeRow { vars, rhs: cap as f64 });
                }
                rows.extend(group_rows());
            }
            MatroidSpec::Explicit(m) => {
                if n > EXPLICIT_LIMIT {
                    return Err(Error::MatroidTooLarge { elements: n, limit: EXPLICIT_LIMIT });
                }
                // Dependent flats of the parallel extension are exactly the
                // copy-closures of flats S with r(S) < |copies(S)|; every other
                // rank inequality is implied by these and 0 <= y <= 1.
                for s in 1..1u32 << n {
                    let size: usize = (0..n).filter(|&e| s >> e & 1 == 1).map(|e| copies[e].len()).sum();
                    let r = m.rank_mask(s);
                    if r >= size || !m.is_flat(s) {
                        continue;
                    }
                    let vars = (0..n)
                        .filter(|&e| s >> e & 1 == 1)
                        .flat_map(|e| copies[e].iter().copied())
                        .collect();
                    rows.push(PolytopeRow { vars, rhs: r as f64 });
                }
            }
        }
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn singletons(n: usize) -> Vec<Vec<usize>> {
        (0..n).map(|i| vec![i]).collect()
    }

    #[test]
    fn partition_rows_are_the_parts() {
        let m = MatroidSpec::Partition { parts: vec![vec![0, 1], vec![2]], caps: vec![1, 1] };
        let rows = m.polytope_rows(&singletons(3)).unwrap();
        assert_eq!(
            rows,
            vec![
                PolytopeRow { vars: vec![0, 1], rhs: 1.0 },
                PolytopeRow { vars: vec![2], rhs: 1.0 },
            ]
        );
    }

    #[test]
    fn copies_get_group_rows() {
        let m = MatroidSpec::Uniform { rank: 2 };
        let rows = m.polytope_rows(&[vec![0, 1], vec![2]]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1], PolytopeRow { vars: vec![0, 1], rhs: 1.0 });
    }

    #[test]
    fn graphic_rank_of_triangle() {
        let m = ExplicitMatroid::graphic(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(m.rank_mask(0b111), 2);
        assert_eq!(m.rank_mask(0b011), 2);
        assert!(m.axiom_violations().is_empty());
        let spec = MatroidSpec::Explicit(m);
        assert!(!spec.is_independent(&[0, 1, 2]));
        assert!(spec.is_independent(&[0, 2]));
        // the whole triangle is the only dependent flat
        let rows = spec.polytope_rows(&singletons(3)).unwrap();
        assert_eq!(rows, vec![PolytopeRow { vars: vec![0, 1, 2], rhs: 2.0 }]);
    }

    #[test]
    fn bases_and_graphic_agree() {
        let g = ExplicitMatroid::graphic(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let b = ExplicitMatroid::from_bases(3, &[vec![0, 1], vec![1, 2], vec![0, 2]]).unwrap();
        assert_eq!(g, b);
    }

    #[test]
    fn broken_rank_table_is_reported() {
        // r({0}) = 1, r({0,1}) = 0 breaks monotonicity
        let m = ExplicitMatroid::from_rank_table(2, vec![0, 1, 1, 0]).unwrap();
        assert!(!m.axiom_violations().is_empty());
    }

    #[test]
    fn too_large_explicit_is_refused() {
        let err = ExplicitMatroid::from_bases(21, &[]).unwrap_err();
        assert!(matches!(err, Error::MatroidTooLarge { .. }));
    }
}
