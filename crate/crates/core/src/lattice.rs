//! Oriented lattices. Each edge carries one bond; its head site receives
//! `C_{i_e}` and its tail site receives `C_{i_e}ᵀ`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Head,
    Tail,
}

impl Role {
    pub fn transposed(self) -> bool {
        matches!(self, Role::Tail)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Incidence {
    pub edge: usize,
    pub role: Role,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lattice {
    n_sites: usize,
    edges: Vec<(usize, usize)>,
    // Per site, ordered by edge index. This order fixes the tensor position
    // of each virtual particle at the site.
    incidence: Vec<Vec<Incidence>>,
}

impl Lattice {
    /// Edges are `(head, tail)` pairs.
    pub fn new(n_sites: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if edges.is_empty() {
            return usage("lattice needs at least one edge");
        }
        let mut seen = HashSet::new();
        let mut incidence = vec![Vec::new(); n_sites];
        for (e, &(h, t)) in edges.iter().enumerate() {
            if h >= n_sites || t >= n_sites {
                return usage(format!("edge {e} ({h}, {t}) references a missing site"));
            }
            if h == t {
                return usage(format!("edge {e} is a self-loop at site {h}"));
            }
            if !seen.insert((h.min(t), h.max(t))) {
                return usage(format!("edge {e} duplicates an existing bond between {h} and {t}"));
            }
            incidence[h].push(Incidence { edge: e, role: Role::Head });
            incidence[t].push(Incidence { edge: e, role: Role::Tail });
        }
        if let Some(s) = incidence.iter().position(Vec::is_empty) {
            return usage(format!("site {s} has no incident edges"));
        }
        Ok(Self {
            n_sites,
            edges,
            incidence,
        })
    }

    /// Open chain, edges `(s, s+1)`.
    pub fn chain(n: usize) -> Result<Self> {
        if n < 2 {
            return usage(format!("chain needs N >= 2, got {n}"));
        }
        Self::new(n, (0..n - 1).map(|s| (s, s + 1)).collect())
    }

    /// Ring with edges `(s, s+1 mod N)`.
    pub fn cycle(n: usize) -> Result<Self> {
        if n < 3 {
            return usage(format!("cycle needs N >= 3, got {n}"));
        }
        Self::new(n, (0..n).map(|s| (s, (s + 1) % n)).collect())
    }

    /// Periodic square lattice; site `x + lx*y`, edges oriented `+x` and `+y`.
    pub fn torus(lx: usize, ly: usize) -> Result<Self> {
        if lx < 3 || ly < 3 {
            return usage(format!("torus needs both sides >= 3, got {lx}x{ly}"));
        }
        let site = |x: usize, y: usize| (x % lx) + lx * (y % ly);
        let mut edges = Vec::with_capacity(2 * lx * ly);
        for y in 0..ly {
            for x in 0..lx {
                edges.push((site(x, y), site(x + 1, y)));
                edges.push((site(x, y), site(x, y + 1)));
            }
        }
        Self::new(lx * ly, edges)
    }

    /// `chain:N`, `cycle:N` or `torus:LxxLy`.
    pub fn from_shorthand(spec: &str) -> Result<Self> {
        let bad = || Error::Usage(format!("unrecognized lattice shorthand '{spec}'"));
        let (kind, arg) = spec.split_once(':').ok_or_else(bad)?;
        let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
        match kind {
            "chain" => Self::chain(num(arg)?),
            "cycle" => Self::cycle(num(arg)?),
            "torus" => {
                let (a, b) = arg.split_once('x').ok_or_else(bad)?;
                Self::torus(num(a)?, num(b)?)
            }
            _ => Err(bad()),
        }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn incidence(&self, site: usize) -> &[Incidence] {
        &self.incidence[site]
    }

    pub fn degree(&self, site: usize) -> usize {
        self.incidence[site].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.incidence.iter().map(Vec::len).collect()
    }

    pub fn roles(&self, site: usize) -> Vec<Role> {
        self.incidence[site].iter().map(|i| i.role).collect()
    }

    /// Relabels sites by `perm[old] = new`, keeping edge order.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_sites {
            return usage("permutation length differs from the site count");
        }
        Self::new(self.n_sites, self.edges.iter().map(|&(h, t)| (perm[h], perm[t])).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge_set(l: &Lattice) -> HashSet<(usize, usize)> {
        l.edges().iter().copied().collect()
    }

    #[test]
    fn chain_shapes() {
        let l = Lattice::chain(2).unwrap();
        assert_eq!(l.n_edges(), 1);
        assert_eq!(l.degrees(), vec![1, 1]);
        let l = Lattice::chain(5).unwrap();
        assert_eq!(l.n_edges(), 4);
        assert_eq!(l.degrees(), vec![1, 2, 2, 2, 1]);
        assert!(l.edges().iter().all(|&(h, t)| h < t));
        assert!(Lattice::chain(1).is_err());
    }

    #[test]
    fn cycle_shapes_and_translation() {
        let l = Lattice::cycle(3).unwrap();
        assert_eq!(l.n_edges(), 3);
        assert_eq!(l.degrees(), vec![2, 2, 2]);
        assert!(Lattice::cycle(2).is_err());

        let l = Lattice::cycle(4).unwrap();
        let shifted: HashSet<_> = l.edges().iter().map(|&(h, t)| ((h + 1) % 4, (t + 1) % 4)).collect();
        assert_eq!(shifted, edge_set(&l));
    }

    #[test]
    fn torus_shapes_and_translations() {
        let l = Lattice::torus(3, 3).unwrap();
        assert_eq!((l.n_sites(), l.n_edges()), (9, 18));
        assert!(l.degrees().iter().all(|&d| d == 4));
        assert_eq!(Lattice::torus(10, 10).unwrap().n_edges(), 200);
        assert!(Lattice::torus(2, 5).is_err());

        let (lx, ly) = (4, 3);
        let l = Lattice::torus(lx, ly).unwrap();
        let shift = |s: usize, dx: usize, dy: usize| ((s % lx + dx) % lx) + lx * ((s / lx + dy) % ly);
        for (dx, dy) in [(1, 0), (0, 1)] {
            let moved: HashSet<_> = l.edges().iter().map(|&(h, t)| (shift(h, dx, dy), shift(t, dx, dy))).collect();
            assert_eq!(moved, edge_set(&l));
        }
    }

    #[test]
    fn handshake_and_incidence_counts() {
        for l in [Lattice::chain(7).unwrap(), Lattice::cycle(5).unwrap(), Lattice::torus(3, 4).unwrap()] {
            assert_eq!(l.degrees().iter().sum::<usize>(), 2 * l.n_edges());
            for e in 0..l.n_edges() {
                let inc: Vec<Incidence> = (0..l.n_sites())
                    .flat_map(|s| l.incidence(s).iter().copied())
                    .filter(|i| i.edge == e)
                    .collect();
                assert_eq!(inc.len(), 2);
                assert_ne!(inc[0].role, inc[1].role);
            }
        }
    }

    #[test]
    fn invalid_graphs_are_rejected() {
        assert!(Lattice::new(2, vec![(0, 0)]).is_err());
        assert!(Lattice::new(2, vec![(0, 1), (1, 0)]).is_err());
        assert!(Lattice::new(3, vec![(0, 1)]).is_err());
        assert!(Lattice::new(2, vec![]).is_err());
    }

    #[test]
    fn shorthand_parsing() {
        assert_eq!(Lattice::from_shorthand("chain:4").unwrap(), Lattice::chain(4).unwrap());
        assert_eq!(Lattice::from_shorthand("torus:3x5").unwrap(), Lattice::torus(3, 5).unwrap());
        assert!(Lattice::from_shorthand("ring:4").is_err());
        assert!(Lattice::from_shorthand("cycle").is_err());
    }
}
