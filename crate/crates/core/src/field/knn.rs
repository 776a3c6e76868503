//! Exact K-nearest-vertex search: brute force and a uniform-grid
//! accelerator that returns identical results.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::math::Vec3;

pub const MAX_K: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct KnnResult {
    pub indices: Vec<usize>,
    /// Ascending, ties broken by lower index.
    pub distances: Vec<f64>,
}

impl KnnResult {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[inline]
fn distance(a: &Vec3, b: &Vec3) -> f64 {
    (a - b).norm()
}

#[inline]
fn order(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

fn check_k(k: usize, m: usize) -> Result<()> {
    if k == 0 || k > m {
        return Err(Error::Parameter(format!(
            "k = {k} must lie in 1..={m}"
        )));
    }
    Ok(())
}

fn finish(mut cand: Vec<(f64, usize)>, k: usize) -> KnnResult {
    cand.sort_by(order);
    cand.truncate(k);
    KnnResult {
        indices: cand.iter().map(|c| c.1).collect(),
        distances: cand.iter().map(|c| c.0).collect(),
    }
}

/// Exhaustive search over all vertices.
pub fn knn(point: &Vec3, vertices: &[Vec3], k: usize) -> Result<KnnResult> {
    check_k(k, vertices.len())?;
    let cand = vertices
        .iter()
        .enumerate()
        .map(|(i, v)| (distance(point, v), i))
        .collect();
    Ok(finish(cand, k))
}

/// Uniform grid over the vertex bounding box with CSR cell storage.
#[derive(Clone, Debug)]
pub struct GridIndex {
    vertices: Vec<Vec3>,
    origin: Vec3,
    cell: f64,
    dims: [i64; 3],
    offsets: Vec<usize>,
    items: Vec<usize>,
}

impl GridIndex {
    pub fn build(vertices: &[Vec3], cell: f64) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::Parameter("cannot index an empty vertex set".into()));
        }
        if !(cell > 0.0 && cell.is_finite()) {
            return Err(Error::Parameter(format!("grid cell size {cell} must be positive")));
        }
        let mut lo = vertices[0];
        let mut hi = vertices[0];
        for v in vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        let dims = [0, 1, 2].map(|a| (((hi[a] - lo[a]) / cell).floor() as i64 + 1).max(1));
        let n_cells = (dims[0] * dims[1] * dims[2]) as usize;
        let mut grid = Self {
            vertices: vertices.to_vec(),
            origin: lo,
            cell,
            dims,
            offsets: vec![0; n_cells + 1],
            items: vec![0; vertices.len()],
        };
        let cell_of: Vec<usize> = vertices
            .iter()
            .map(|v| {
                let c = grid.cell_coords(v).map(|x| x.max(0));
                let c = [0, 1, 2].map(|a| c[a].min(dims[a] - 1));
                grid.flat(c)
            })
            .collect();
        for &c in &cell_of {
            grid.offsets[c + 1] += 1;
        }
        for i in 0..n_cells {
            grid.offsets[i + 1] += grid.offsets[i];
        }
        let mut fill = grid.offsets.clone();
        for (i, &c) in cell_of.iter().enumerate() {
            grid.items[fill[c]] = i;
            fill[c] += 1;
        }
        Ok(grid)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    fn cell_coords(&self, p: &Vec3) -> [i64; 3] {
        [0, 1, 2].map(|a| ((p[a] - self.origin[a]) / self.cell).floor() as i64)
    }

    fn flat(&self, c: [i64; 3]) -> usize {
        ((c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]) as usize
    }

    fn collect_ring(&self, q: [i64; 3], r: i64, point: &Vec3, cand: &mut Vec<(f64, usize)>) {
        let lo = [0, 1, 2].map(|a| (q[a] - r).max(0));
        let hi = [0, 1, 2].map(|a| (q[a] + r).min(self.dims[a] - 1));
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    let cheb = (x - q[0]).abs().max((y - q[1]).abs()).max((z - q[2]).abs());
                    if cheb != r {
                        continue;
                    }
                    let c = self.flat([x, y, z]);
                    for &i in &self.items[self.offsets[c]..self.offsets[c + 1]] {
                        cand.push((distance(point, &self.vertices[i]), i));
                    }
                }
            }
        }
    }

    /// Chebyshev distance (in cells) from the query cell to the grid box.
    fn first_ring(&self, q: [i64; 3]) -> i64 {
        (0..3)
            .map(|a| (-q[a]).max(q[a] - (self.dims[a] - 1)).max(0))
            .max()
            .unwrap()
    }

    fn last_ring(&self, q: [i64; 3]) -> i64 {
        (0..3)
            .map(|a| q[a].abs().max((q[a] - (self.dims[a] - 1)).abs()))
            .max()
            .unwrap()
    }

    fn search(&self, point: &Vec3, k: usize, limit: Option<f64>) -> Option<KnnResult> {
        let q = self.cell_coords(point);
        let last = self.last_ring(q);
        let mut cand = Vec::new();
        let mut r = self.first_ring(q);
        // Every vertex in a ring beyond `r` lies at least `r · cell` away.
        let slack = 1.0 - 1e-12;
        while r <= last {
            self.collect_ring(q, r, point, &mut cand);
            let bound = r as f64 * self.cell * slack;
            if let Some(limit) = limit {
                if bound > limit && !cand.iter().any(|c| c.0 <= limit) {
                    return None;
                }
            }
            if cand.len() >= k {
                cand.sort_by(order);
                cand.truncate(k);
                if cand[k - 1].0 < bound {
                    break;
                }
            }
            r += 1;
        }
        if let Some(limit) = limit {
            if !cand.iter().any(|c| c.0 <= limit) {
                return None;
            }
        }
        Some(finish(cand, k))
    }

    pub fn knn(&self, point: &Vec3, k: usize) -> Result<KnnResult> {
        check_k(k, self.vertices.len())?;
        Ok(self.search(point, k, None).expect("unbounded search always succeeds"))
    }

    /// K nearest vertices, or `None` when the nearest lies farther than `limit`.
    pub fn knn_within(&self, point: &Vec3, k: usize, limit: f64) -> Result<Option<KnnResult>> {
        check_k(k, self.vertices.len())?;
        Ok(self.search(point, k, Some(limit)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn axis_example() {
        let v = vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0), Vec3::new(3.0, 0.0, 0.0)];
        let r = knn(&Vec3::zeros(), &v, 2).unwrap();
        assert_eq!(r.indices, vec![0, 1]);
        assert_eq!(r.distances, vec![1.0, 2.0]);
        let r = knn(&v[2], &v, 1).unwrap();
        assert_eq!((r.indices[0], r.distances[0]), (2, 0.0));
    }

    #[test]
    fn k_out_of_range() {
        let v = vec![Vec3::zeros(); 3];
        assert!(matches!(knn(&Vec3::zeros(), &v, 4), Err(Error::Parameter(_))));
        assert!(matches!(knn(&Vec3::zeros(), &v, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn ties_prefer_lower_index() {
        let v = vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        let r = knn(&Vec3::zeros(), &v, 2).unwrap();
        assert_eq!(r.indices, vec![0, 1]);
        let g = GridIndex::build(&v, 0.3).unwrap();
        assert_eq!(g.knn(&Vec3::zeros(), 2).unwrap(), r);
    }

    #[test]
    fn matches_exhaustive_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<Vec3> = (0..64).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        for _ in 0..50 {
            let q = Vec3::new(rng.gen(), rng.gen(), rng.gen());
            let mut all: Vec<(f64, usize)> = v.iter().enumerate().map(|(i, p)| ((q - p).norm(), i)).collect();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let r = knn(&q, &v, 5).unwrap();
            assert_eq!(r.indices, all[..5].iter().map(|a| a.1).collect::<Vec<_>>());
        }
    }

    #[test]
    fn grid_matches_brute_force_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<Vec3> = (0..200)
            .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-2.0..2.0), rng.gen_range(-0.2..0.2)))
            .collect();
        let g = GridIndex::build(&v, 0.3).unwrap();
        for _ in 0..500 {
            let q = Vec3::new(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
            for k in [1, 3, 8] {
                assert_eq!(g.knn(&q, k).unwrap(), knn(&q, &v, k).unwrap());
            }
        }
    }

    #[test]
    fn bounded_search_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v: Vec<Vec3> = (0..100).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        let g = GridIndex::build(&v, 0.2).unwrap();
        for _ in 0..500 {
            let q = Vec3::new(rng.gen_range(-1.0..2.0), rng.gen_range(-1.0..2.0), rng.gen_range(-1.0..2.0));
            let full = knn(&q, &v, 3).unwrap();
            match g.knn_within(&q, 3, 0.2).unwrap() {
                Some(r) => {
                    assert!(full.distances[0] <= 0.2);
                    assert_eq!(r, full);
                }
                None => assert!(full.distances[0] > 0.2),
            }
        }
    }
}
