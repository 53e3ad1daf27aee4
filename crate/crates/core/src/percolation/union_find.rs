//! Disjoint-set forest with path compression and union by size, tracking the
//! cluster statistics the percolation observables need: cluster count, largest
//! cluster, and the sum of squared cluster sizes.

const NO_PARENT: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
    num_clusters: usize,
    max_cluster: u32,
    sum_sq_sizes: f64,
}

impl UnionFind {
    pub fn new(nodes: usize) -> Self {
        assert!(nodes > 0 && nodes < NO_PARENT as usize);
        Self {
            parent: vec![NO_PARENT; nodes],
            size: vec![1; nodes],
            num_clusters: nodes,
            max_cluster: 1,
            sum_sq_sizes: nodes as f64,
        }
    }

    /// Reset to all-singletons without reallocating.
    pub fn reset(&mut self) {
        self.parent.fill(NO_PARENT);
        self.size.fill(1);
        self.num_clusters = self.parent.len();
        self.max_cluster = 1;
        self.sum_sq_sizes = self.parent.len() as f64;
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Root of the cluster containing `node`. Every node touched on the way
    /// up is re-pointed directly at the root.
    pub fn find(&mut self, node: usize) -> usize {
        assert!(node < self.parent.len(), "node {node} out of range");
        let mut root = node;
        while self.parent[root] != NO_PARENT {
            root = self.parent[root] as usize;
        }
        let mut cur = node;
        while cur != root {
            let next = self.parent[cur] as usize;
            self.parent[cur] = root as u32;
            cur = next;
        }
        root
    }

    /// Merge the clusters of `a` and `b`. Returns true if a merge happened,
    /// false if they were already in the same cluster.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            return false;
        }
        let (sa, sb) = (self.size[ra], self.size[rb]);
        // Smaller cluster goes under the larger; equal sizes attach the
        // higher-index root under the lower so runs are reproducible.
        let (winner, loser) = if sa > sb || (sa == sb && ra < rb) {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[loser] = winner as u32;
        let merged = sa + sb;
        self.sum_sq_sizes += 2.0 * sa as f64 * sb as f64;
        self.size[winner] = merged;
        self.num_clusters -= 1;
        if merged > self.max_cluster {
            self.max_cluster = merged;
        }
        true
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn max_cluster_size(&self) -> usize {
        self.max_cluster as usize
    }

    /// Sum of squared cluster sizes (maintained incrementally).
    pub fn sum_sq_sizes(&self) -> f64 {
        self.sum_sq_sizes
    }

    pub fn cluster_size(&mut self, node: usize) -> usize {
        let root = self.find(node);
        self.size[root] as usize
    }

    /// Full structural audit used by tests: parent graph acyclic, root sizes
    /// partition the node set, tracked aggregates consistent.
    pub fn audit(&self) {
        let n = self.parent.len();
        let mut counted = vec![0u32; n];
        for start in 0..n {
            let mut hops = 0;
            let mut cur = start;
            while self.parent[cur] != NO_PARENT {
                cur = self.parent[cur] as usize;
                hops += 1;
                assert!(hops <= n, "cycle in parent graph at node {start}");
            }
            counted[cur] += 1;
        }
        let mut clusters = 0;
        let mut total = 0u32;
        let mut max = 0u32;
        let mut sum_sq = 0.0;
        for node in 0..n {
            if self.parent[node] == NO_PARENT {
                clusters += 1;
                total += counted[node];
                max = max.max(self.size[node]);
                sum_sq += (self.size[node] as f64).powi(2);
                assert_eq!(
                    counted[node], self.size[node],
                    "size bookkeeping wrong at root {node}"
                );
            }
        }
        assert_eq!(total as usize, n, "root sizes must partition all nodes");
        assert_eq!(clusters, self.num_clusters);
        assert_eq!(max, self.max_cluster);
        assert!((sum_sq - self.sum_sq_sizes).abs() < 1e-6);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fresh_state_is_all_singletons() {
        let mut uf = UnionFind::new(9);
        for node in 0..9 {
            assert_eq!(uf.find(node), node);
        }
        assert_eq!(uf.num_clusters(), 9);
        assert_eq!(uf.max_cluster_size(), 1);
    }

    #[test]
    fn union_connects_and_self_union_is_noop() {
        let mut uf = UnionFind::new(4);
        assert!(!uf.union(2, 2));
        assert_eq!(uf.num_clusters(), 4);
        assert!(uf.union(0, 1));
        assert_eq!(uf.find(0), uf.find(1));
        assert_eq!(uf.num_clusters(), 3);
        assert_eq!(uf.max_cluster_size(), 2);
    }

    #[test]
    fn chain_compresses_to_direct_parent() {
        let mut uf = UnionFind::new(6);
        for i in 0..5 {
            uf.union(i, i + 1);
        }
        let root = uf.find(5);
        // After the find, node 5 must point straight at the root.
        assert!(uf.parent[5] == NO_PARENT || uf.parent[5] as usize == root);
        uf.audit();
    }

    #[test]
    fn four_cycle_merges_to_one_cluster() {
        let mut uf = UnionFind::new(4);
        let merges: usize = [(0, 1), (1, 3), (3, 2), (2, 0)]
            .iter()
            .map(|&(a, b)| uf.union(a, b) as usize)
            .sum();
        assert_eq!(merges, 3);
        assert_eq!(uf.num_clusters(), 1);
        assert_eq!(uf.max_cluster_size(), 4);
    }

    #[test]
    fn random_operation_sequences_pass_audit() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.random_range(2..40);
            let mut uf = UnionFind::new(n);
            for _ in 0..rng.random_range(0..120) {
                let a = rng.random_range(0..n);
                let b = rng.random_range(0..n);
                uf.union(a, b);
                if rng.random_bool(0.3) {
                    uf.find(rng.random_range(0..n));
                }
            }
            uf.audit();
        }
    }

    #[test]
    fn out_of_range_find_panics() {
        let result = std::panic::catch_unwind(|| {
            let mut uf = UnionFind::new(3);
            uf.find(3);
        });
        assert!(result.is_err());
    }
}
