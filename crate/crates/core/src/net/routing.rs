//! Neighborhood and path table maintenance.
//!
//! Each host keeps the latest full advertisement from every neighbor. A route is a
//! neighbor followed by that neighbor's advertised intermediates; routes that pass
//! through this host are discarded, so withdrawn or looping paths disappear as soon
//! as fresh advertisements arrive. Ties between equally short routes are broken by
//! comparing the host lists, which keeps every run reproducible.

use std::collections::{BTreeMap, BTreeSet};

use super::msg::Gossip;

/// Longest route kept, in intermediate hosts.
pub const MAX_PATH: usize = 15;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathTable {
    me: String,
    neighbors: BTreeSet<String>,
    adverts: BTreeMap<String, Vec<(String, Vec<String>)>>,
    best: BTreeMap<String, Vec<String>>,
}

impl PathTable {
    pub fn new(me: &str) -> Self {
        PathTable { me: me.to_string(), neighbors: BTreeSet::new(), adverts: BTreeMap::new(), best: BTreeMap::new() }
    }

    pub fn me(&self) -> &str {
        &self.me
    }

    /// Returns whether the table changed.
    pub fn add_neighbor(&mut self, n: &str) -> bool {
        self.neighbors.insert(n.to_string());
        self.recompute()
    }

    pub fn remove_neighbor(&mut self, n: &str) -> bool {
        self.neighbors.remove(n);
        self.adverts.remove(n);
        self.recompute()
    }

    /// Replaces the advertisement of neighbor `from`. Ignored for non-neighbors.
    pub fn apply(&mut self, from: &str, g: &Gossip) -> bool {
        if !self.neighbors.contains(from) {
            return false;
        }
        self.adverts.insert(from.to_string(), g.entries.clone());
        self.recompute()
    }

    fn recompute(&mut self) -> bool {
        let mut best: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for n in &self.neighbors {
            best.insert(n.clone(), Vec::new());
        }
        for (n, entries) in &self.adverts {
            for (dest, via) in entries {
                if *dest == self.me || self.neighbors.contains(dest) || via.len() >= MAX_PATH {
                    continue;
                }
                if via.iter().any(|h| *h == self.me || h == n || h == dest) {
                    continue;
                }
                let mut path = Vec::with_capacity(via.len() + 1);
                path.push(n.clone());
                path.extend(via.iter().cloned());
                let unique: BTreeSet<&String> = path.iter().collect();
                if unique.len() != path.len() {
                    continue;
                }
                match best.get(dest) {
                    Some(cur) if (cur.len(), cur) <= (path.len(), &path) => {}
                    _ => {
                        best.insert(dest.clone(), path);
                    }
                }
            }
        }
        let changed = best != self.best;
        self.best = best;
        changed
    }

    /// This host's advertisement for `neighbor`, omitting routes learned through it.
    pub fn advert_for(&self, neighbor: &str) -> Gossip {
        let entries = self
            .best
            .iter()
            .filter(|(d, path)| d.as_str() != neighbor && path.first().map(String::as_str) != Some(neighbor))
            .map(|(d, path)| (d.clone(), path.clone()))
            .collect();
        Gossip { entries }
    }

    pub fn is_neighbor(&self, h: &str) -> bool {
        self.neighbors.contains(h)
    }

    pub fn neighbors(&self) -> impl Iterator<Item = &String> {
        self.neighbors.iter()
    }

    /// Intermediate hosts on the way to `dest`; empty for neighbors.
    pub fn path(&self, dest: &str) -> Option<&[String]> {
        self.best.get(dest).map(Vec::as_slice)
    }

    pub fn next_hop<'a>(&'a self, dest: &'a str) -> Option<&'a str> {
        self.best.get(dest).map(|p| p.first().map(String::as_str).unwrap_or(dest))
    }

    pub fn knows(&self, dest: &str) -> bool {
        dest == self.me || self.best.contains_key(dest)
    }

    /// Every reachable host with its intermediates, sorted by name.
    pub fn entries(&self) -> impl Iterator<Item = (&String, &Vec<String>)> {
        self.best.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::VecDeque;

    fn name(i: usize) -> String {
        format!("h{i}")
    }

    /// Exchanges adverts in rounds until nothing changes.
    fn converge(n: usize, edges: &BTreeSet<(usize, usize)>) -> Vec<PathTable> {
        let mut t: Vec<PathTable> = (0..n).map(|i| PathTable::new(&name(i))).collect();
        for &(a, b) in edges {
            t[a].add_neighbor(&name(b));
            t[b].add_neighbor(&name(a));
        }
        for _ in 0..64 {
            let mut changed = false;
            for &(a, b) in edges {
                let ga = t[a].advert_for(&name(b));
                changed |= t[b].apply(&name(a), &ga);
                let gb = t[b].advert_for(&name(a));
                changed |= t[a].apply(&name(b), &gb);
            }
            if !changed {
                return t;
            }
        }
        panic!("gossip did not settle");
    }

    fn bfs(n: usize, edges: &BTreeSet<(usize, usize)>, from: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; n];
        dist[from] = Some(0);
        let mut q = VecDeque::from([from]);
        while let Some(x) = q.pop_front() {
            for &(a, b) in edges {
                for (p, r) in [(a, b), (b, a)] {
                    if p == x && dist[r].is_none() {
                        dist[r] = Some(dist[x].unwrap() + 1);
                        q.push_back(r);
                    }
                }
            }
        }
        dist
    }

    #[test]
    fn line_learns_one_hop_path() {
        let edges = BTreeSet::from([(0, 1), (1, 2)]);
        let t = converge(3, &edges);
        assert_eq!(t[0].path("h2"), Some(&["h1".to_string()][..]));
        assert_eq!(t[0].next_hop("h2"), Some("h1"));
        assert_eq!(t[0].path("h1"), Some(&[][..]));
    }

    #[test]
    fn losing_the_middle_withdraws_routes() {
        let edges = BTreeSet::from([(0, 1), (1, 2)]);
        let mut t = converge(3, &edges);
        t[0].remove_neighbor("h1");
        assert!(!t[0].knows("h2"));
        assert!(!t[0].knows("h1"));
        assert!(t[0].knows("h0"));
    }

    #[test]
    fn split_horizon_omits_routes_back() {
        let edges = BTreeSet::from([(0, 1), (1, 2)]);
        let t = converge(3, &edges);
        let g = t[1].advert_for("h0");
        assert!(g.entries.iter().all(|(d, _)| d != "h0"));
        let g = t[0].advert_for("h1");
        assert!(g.entries.is_empty());
    }

    fn connected_graph() -> impl Strategy<Value = (usize, BTreeSet<(usize, usize)>)> {
        (1usize..=8).prop_flat_map(|n| {
            let parents = proptest::collection::vec(any::<prop::sample::Index>(), n.saturating_sub(1));
            let extra = proptest::collection::vec((0..n, 0..n), 0..n * 2);
            (Just(n), parents, extra).prop_map(|(n, parents, extra)| {
                let mut e = BTreeSet::new();
                for (i, p) in parents.iter().enumerate() {
                    let child = i + 1;
                    let parent = p.index(child);
                    e.insert((parent.min(child), parent.max(child)));
                }
                for (a, b) in extra {
                    if a != b {
                        e.insert((a.min(b), a.max(b)));
                    }
                }
                (n, e)
            })
        })
    }

    proptest! {
        #[test]
        fn converges_to_shortest_paths((n, edges) in connected_graph()) {
            let t = converge(n, &edges);
            for i in 0..n {
                let dist = bfs(n, &edges, i);
                for j in 0..n {
                    prop_assert!(t[i].knows(&name(j)));
                    if i == j { continue; }
                    let p = t[i].path(&name(j)).unwrap();
                    prop_assert_eq!(p.len() + 1, dist[j].unwrap());
                    prop_assert!(!p.contains(&name(i)) && !p.contains(&name(j)));
                    let mut hops = vec![name(i)];
                    hops.extend(p.iter().cloned());
                    hops.push(name(j));
                    for w in hops.windows(2) {
                        let a: usize = w[0][1..].parse().unwrap();
                        let b: usize = w[1][1..].parse().unwrap();
                        prop_assert!(edges.contains(&(a.min(b), a.max(b))));
                    }
                }
            }
        }
    }
}
