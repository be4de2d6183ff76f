//! Space-partitioning tree for nearest-neighbor lookups in the scaled
//! 4-dimensional coordinate space. Ties in squared distance are broken by
//! the lexicographically smallest point coordinates so that queries are
//! deterministic regardless of construction order.

/// A kd-tree over `([f64; 4], value)` pairs with cycling split axes.
pub struct KdTree {
    nodes: Vec<Node>,
    root: Option<usize>,
}

struct Node {
    point: [f64; 4],
    value: f64,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

/// Ordering used for both tie-breaking and best-candidate comparison:
/// smaller squared distance wins, then lexicographically smaller point.
fn better(d2: f64, point: &[f64; 4], best: &Option<(f64, [f64; 4], f64)>) -> bool {
    match best {
        None => true,
        Some((bd2, bp, _)) => {
            d2 < *bd2 || (d2 == *bd2 && point.as_slice() < bp.as_slice())
        }
    }
}

impl KdTree {
    /// Builds a balanced tree; `items` may be empty.
    pub fn build(items: &[([f64; 4], f64)]) -> Self {
        let mut tree = KdTree { nodes: Vec::with_capacity(items.len()), root: None };
        let mut work: Vec<([f64; 4], f64)> = items.to_vec();
        let len = work.len();
        tree.root = tree.build_range(&mut work, 0, len, 0);
        tree
    }

    fn build_range(
        &mut self,
        items: &mut [([f64; 4], f64)],
        lo: usize,
        hi: usize,
        axis: usize,
    ) -> Option<usize> {
        if lo >= hi {
            return None;
        }
        let slice = &mut items[lo..hi];
        // Total order (axis coordinate, then full point) keeps the layout,
        // and therefore equal-distance traversal, independent of input order.
        slice.sort_by(|a, b| {
            a.0[axis]
                .partial_cmp(&b.0[axis])
                .unwrap()
                .then_with(|| a.0.partial_cmp(&b.0).unwrap())
        });
        let mid = lo + (hi - lo) / 2;
        let (point, value) = items[mid];
        let next = (axis + 1) % 4;
        let left = self.build_range(items, lo, mid, next);
        let right = self.build_range(items, mid + 1, hi, next);
        self.nodes.push(Node { point, value, axis, left, right });
        Some(self.nodes.len() - 1)
    }

    /// Returns the nearest stored value to `q`, or None for an empty tree.
    pub fn nearest(&self, q: &[f64; 4]) -> Option<f64> {
        let mut best: Option<(f64, [f64; 4], f64)> = None;
        if let Some(root) = self.root {
            self.search(root, q, &mut best);
        }
        best.map(|(_, _, v)| v)
    }

    fn search(&self, idx: usize, q: &[f64; 4], best: &mut Option<(f64, [f64; 4], f64)>) {
        let node = &self.nodes[idx];
        let d2: f64 = node
            .point
            .iter()
            .zip(q)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if better(d2, &node.point, best) {
            *best = Some((d2, node.point, node.value));
        }
        let diff = q[node.axis] - node.point[node.axis];
        let (near, far) = if diff < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        if let Some(n) = near {
            self.search(n, q, best);
        }
        // Visit the far side on exact equality too: an equally distant but
        // lexicographically smaller point may live there.
        if let Some(f) = far {
            if best.map_or(true, |(bd2, _, _)| diff * diff <= bd2) {
                self.search(f, q, best);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(items: &[([f64; 4], f64)], q: &[f64; 4]) -> Option<f64> {
        let mut best: Option<(f64, [f64; 4], f64)> = None;
        for (p, v) in items {
            let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            if better(d2, p, &best) {
                best = Some((d2, *p, *v));
            }
        }
        best.map(|(_, _, v)| v)
    }

    #[test]
    fn empty_tree_has_no_neighbor() {
        assert!(KdTree::build(&[]).nearest(&[0.0; 4]).is_none());
    }

    #[test]
    fn matches_brute_force_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let items: Vec<([f64; 4], f64)> = (0..200)
                .map(|i| {
                    let p = [
                        rng.gen_range(-5.0..5.0),
                        rng.gen_range(-5.0..5.0),
                        rng.gen_range(-5.0..5.0),
                        rng.gen_range(-5.0..5.0),
                    ];
                    (p, i as f64)
                })
                .collect();
            let tree = KdTree::build(&items);
            for _ in 0..50 {
                let q = [
                    rng.gen_range(-6.0..6.0),
                    rng.gen_range(-6.0..6.0),
                    rng.gen_range(-6.0..6.0),
                    rng.gen_range(-6.0..6.0),
                ];
                assert_eq!(tree.nearest(&q), brute_force(&items, &q));
            }
        }
    }

    #[test]
    fn equal_distances_break_toward_the_smaller_point() {
        // Two points symmetric about the query; insertion order must not
        // matter.
        let a = ([-1.0, 0.0, 0.0, 0.0], 10.0);
        let b = ([1.0, 0.0, 0.0, 0.0], 20.0);
        let q = [0.0, 0.0, 0.0, 0.0];
        assert_eq!(KdTree::build(&[a, b]).nearest(&q), Some(10.0));
        assert_eq!(KdTree::build(&[b, a]).nearest(&q), Some(10.0));
    }
}
