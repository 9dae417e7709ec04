use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::mesh::SurfaceMesh;
use crate::error::{Error, Result};

/// Per-vertex shortest edge-path distance to the nearest source, in mm.
/// Vertices not connected to any source hold `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicField {
    pub distances: Vec<f64>,
}

impl GeodesicField {
    pub fn unreachable(&self) -> Vec<usize> {
        (0..self.distances.len()).filter(|&i| self.distances[i].is_infinite()).collect()
    }

    pub fn max_finite(&self) -> f64 {
        self.distances.iter().copied().filter(|d| d.is_finite()).fold(0.0, f64::max)
    }

    /// Distances divided by the largest finite distance; unchanged if that is zero.
    pub fn normalized(&self) -> Vec<f64> {
        let max = self.max_finite();
        if max > 0.0 {
            self.distances.iter().map(|d| d / max).collect()
        } else {
            self.distances.clone()
        }
    }
}

#[derive(PartialEq)]
struct Entry {
    dist: f64,
    vertex: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Multi-source Dijkstra over the mesh edge graph, edge weight = Euclidean length.
pub fn geodesic_distance(mesh: &SurfaceMesh, sources: &[usize]) -> Result<GeodesicField> {
    if sources.is_empty() {
        return Err(Error::InvalidInput("geodesic distance needs at least one source".into()));
    }
    let nv = mesh.vertices.len();
    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nv];
    for (a, b) in mesh.edges() {
        let w = (mesh.vertices[a] - mesh.vertices[b]).norm();
        adjacency[a].push((b, w));
        adjacency[b].push((a, w));
    }

    let mut dist = vec![f64::INFINITY; nv];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        if s >= nv {
            return Err(Error::IndexOutOfRange { index: s, count: nv });
        }
        dist[s] = 0.0;
        heap.push(Entry { dist: 0.0, vertex: s });
    }
    while let Some(Entry { dist: d, vertex: v }) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(w, len) in &adjacency[v] {
            let nd = d + len;
            if nd < dist[w] {
                dist[w] = nd;
                heap.push(Entry { dist: nd, vertex: w });
            }
        }
    }
    Ok(GeodesicField { distances: dist })
}
