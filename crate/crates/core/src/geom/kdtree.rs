use super::mesh::Point3;

/// Exact nearest-neighbour index over a fixed point set. Ties on distance
/// resolve to the lowest point index.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point3>,
    nodes: Vec<KdNode>,
    root: Option<usize>,
}

#[derive(Debug, Clone)]
struct KdNode {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

fn better(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

impl KdTree {
    pub fn new(points: &[Point3]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            nodes: Vec::with_capacity(points.len()),
            root: None,
        };
        let mut idx: Vec<usize> = (0..points.len()).collect();
        tree.root = tree.build(&mut idx, 0);
        tree
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        let axis = depth % 3;
        let pts = &self.points;
        idx.sort_unstable_by(|&a, &b| pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b)));
        let mid = idx.len() / 2;
        let point = idx[mid];
        let slot = self.nodes.len();
        self.nodes.push(KdNode {
            point,
            axis,
            left: None,
            right: None,
        });
        let (lo, hi) = idx.split_at_mut(mid);
        let left = self.build(lo, depth + 1);
        let right = self.build(&mut hi[1..], depth + 1);
        self.nodes[slot].left = left;
        self.nodes[slot].right = right;
        Some(slot)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    /// Index and squared distance of the nearest point.
    pub fn nearest(&self, q: &Point3) -> Option<(usize, f64)> {
        let mut best = (f64::INFINITY, usize::MAX);
        self.search_one(self.root, q, &mut best);
        (best.1 != usize::MAX).then_some((best.1, best.0))
    }

    fn search_one(&self, node: Option<usize>, q: &Point3, best: &mut (f64, usize)) {
        let Some(n) = node else { return };
        let node = &self.nodes[n];
        let d2 = (self.points[node.point] - q).norm_squared();
        if better((d2, node.point), *best) {
            *best = (d2, node.point);
        }
        let diff = q[node.axis] - self.points[node.point][node.axis];
        let (near, far) = if diff < 0.0 { (node.left, node.right) } else { (node.right, node.left) };
        self.search_one(near, q, best);
        if diff * diff <= best.0 {
            self.search_one(far, q, best);
        }
    }

    /// The `k` nearest points sorted by (squared distance, index).
    pub fn k_nearest(&self, q: &Point3, k: usize) -> Vec<(usize, f64)> {
        let mut found: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if k > 0 {
            self.search_k(self.root, q, k, &mut found);
        }
        found.into_iter().map(|(d, i)| (i, d)).collect()
    }

    fn search_k(&self, node: Option<usize>, q: &Point3, k: usize, found: &mut Vec<(f64, usize)>) {
        let Some(n) = node else { return };
        let node = &self.nodes[n];
        let cand = ((self.points[node.point] - q).norm_squared(), node.point);
        if found.len() < k || better(cand, found[found.len() - 1]) {
            let pos = found.partition_point(|&e| better(e, cand));
            found.insert(pos, cand);
            found.truncate(k);
        }
        let diff = q[node.axis] - self.points[node.point][node.axis];
        let (near, far) = if diff < 0.0 { (node.left, node.right) } else { (node.right, node.left) };
        self.search_k(near, q, k, found);
        if found.len() < k || diff * diff <= found[found.len() - 1].0 {
            self.search_k(far, q, k, found);
        }
    }
}

/// Median distance from each point to its nearest other point.
pub fn median_nn_spacing(points: &[Point3]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let tree = KdTree::new(points);
    let mut d: Vec<f64> = points.iter().map(|p| tree.k_nearest(p, 2)[1].1.sqrt()).collect();
    d.sort_unstable_by(f64::total_cmp);
    let m = d.len();
    if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    }
}
