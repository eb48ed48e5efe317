//! Bounding volume hierarchy over mesh triangles.

use voxcast_core::{Real, Vec3};

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy)]
struct Aabb<T> {
    lo: Vec3<T>,
    hi: Vec3<T>,
}

impl<T: Real> Aabb<T> {
    fn empty() -> Self {
        Self {
            lo: Vec3::splat(T::infinity()),
            hi: Vec3::splat(T::neg_infinity()),
        }
    }

    fn grow(&mut self, p: Vec3<T>) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    fn union(mut self, o: &Self) -> Self {
        self.grow(o.lo);
        self.grow(o.hi);
        self
    }

    fn distance_squared(&self, p: Vec3<T>) -> T {
        let mut d = T::zero();
        for a in 0..3 {
            let e = (self.lo[a] - p[a]).max(p[a] - self.hi[a]).max(T::zero());
            d += e * e;
        }
        d
    }

    /// Whether the ray `o + t·d`, `t ∈ [0, t_max]`, meets the box.
    fn hit_by(&self, o: Vec3<T>, inv_d: Vec3<T>, t_max: T) -> bool {
        let (mut t0, mut t1) = (T::zero(), t_max);
        for a in 0..3 {
            let mut near = (self.lo[a] - o[a]) * inv_d[a];
            let mut far = (self.hi[a] - o[a]) * inv_d[a];
            if near.is_nan() || far.is_nan() {
                // Axis-parallel ray starting exactly on a slab plane.
                if o[a] < self.lo[a] || o[a] > self.hi[a] {
                    return false;
                }
                continue;
            }
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            t0 = t0.max(near);
            t1 = t1.min(far);
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone)]
enum Node<T> {
    Leaf {
        bounds: Aabb<T>,
        start: usize,
        count: usize,
    },
    Inner {
        bounds: Aabb<T>,
        left: usize,
        right: usize,
    },
}

impl<T> Node<T> {
    fn bounds(&self) -> &Aabb<T> {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Bvh<T> {
    nodes: Vec<Node<T>>,
    order: Vec<u32>,
    boxes: Vec<Aabb<T>>,
}

/// Result of intersecting a ray or segment with one triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Crossing {
    Miss,
    Hit,
    /// Too close to an edge, a vertex, the plane or an end point to decide.
    Degenerate,
}

/// Möller–Trumbore test of `o + t·d` against `abc` for `t ∈ (0, t_max)`.
pub(crate) fn crossing<T: Real>(o: Vec3<T>, d: Vec3<T>, t_max: T, [a, b, c]: [Vec3<T>; 3]) -> Crossing {
    let eps = T::epsilon().sqrt();
    let (e1, e2) = (b - a, c - a);
    let pvec = d.cross(e2);
    let det = e1.dot(pvec);
    let scale = e1.cross(e2).norm() * d.norm();
    if det.abs() <= eps * scale {
        // Parallel: only a problem if the ray lies in the plane.
        let n = e1.cross(e2);
        return if n.dot(o - a).abs() <= eps * n.norm() * (o - a).norm().max(T::one()) {
            Crossing::Degenerate
        } else {
            Crossing::Miss
        };
    }
    let inv = T::one() / det;
    let s = o - a;
    let u = s.dot(pvec) * inv;
    let qvec = s.cross(e1);
    let v = d.dot(qvec) * inv;
    let t = e2.dot(qvec) * inv;
    let w = T::one() - u - v;
    if u < -eps || v < -eps || w < -eps || t < -eps * t_max || t > t_max * (T::one() + eps) {
        return Crossing::Miss;
    }
    if u <= eps || v <= eps || w <= eps || t <= eps * t_max || t >= t_max * (T::one() - eps) {
        return Crossing::Degenerate;
    }
    Crossing::Hit
}

impl<T: Real> Bvh<T> {
    pub(crate) fn build(vertices: &[Vec3<T>], triangles: &[[u32; 3]]) -> Self {
        let boxes: Vec<Aabb<T>> = triangles
            .iter()
            .map(|t| {
                let mut b = Aabb::empty();
                for &i in t {
                    b.grow(vertices[i as usize]);
                }
                b
            })
            .collect();
        let centroids: Vec<Vec3<T>> = boxes.iter().map(|b| (b.lo + b.hi) * T::lit(0.5)).collect();
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * triangles.len() / LEAF_SIZE + 1),
            order: (0..triangles.len() as u32).collect(),
            boxes: Vec::new(),
        };
        bvh.split(0, triangles.len(), &boxes, &centroids);
        bvh.boxes = boxes;
        bvh
    }

    fn split(&mut self, start: usize, end: usize, boxes: &[Aabb<T>], centroids: &[Vec3<T>]) -> usize {
        let bounds = self.order[start..end]
            .iter()
            .fold(Aabb::empty(), |acc, &t| acc.union(&boxes[t as usize]));
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf {
                bounds,
                start,
                count: end - start,
            });
            return id;
        }
        let mut cb = Aabb::empty();
        for &t in &self.order[start..end] {
            cb.grow(centroids[t as usize]);
        }
        let extent = cb.hi - cb.lo;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        let mid = (start + end) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a as usize][axis]
                .partial_cmp(&centroids[b as usize][axis])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        self.nodes.push(Node::Leaf {
            bounds,
            start,
            count: 0,
        });
        let left = self.split(start, mid, boxes, centroids);
        let right = self.split(mid, end, boxes, centroids);
        self.nodes[id] = Node::Inner { bounds, left, right };
        id
    }

    /// Triangles whose bounding boxes come within `radius` of `center`,
    /// in ascending index order.
    pub(crate) fn near(&self, center: Vec3<T>, radius: T) -> Vec<u32> {
        let r2 = radius * radius;
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if node.bounds().distance_squared(center) > r2 {
                continue;
            }
            match *node {
                Node::Leaf { start, count, .. } => out.extend(
                    self.order[start..start + count]
                        .iter()
                        .filter(|&&t| self.boxes[t as usize].distance_squared(center) <= r2),
                ),
                Node::Inner { left, right, .. } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Number of triangles crossed by the ray from `o` along `d`, or `None`
    /// if any crossing is degenerate.
    pub(crate) fn ray_crossings(
        &self,
        vertices: &[Vec3<T>],
        triangles: &[[u32; 3]],
        o: Vec3<T>,
        d: Vec3<T>,
    ) -> Option<usize> {
        let inv_d = Vec3::new(T::one() / d.x, T::one() / d.y, T::one() / d.z);
        let root = self.nodes[0].bounds();
        // Long enough to leave the whole mesh.
        let reach = (root.hi - root.lo).norm() + (o - root.lo).norm() + T::one();
        let mut count = 0;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if !node.bounds().hit_by(o, inv_d, reach) {
                continue;
            }
            match *node {
                Node::Leaf { start, count: len, .. } => {
                    for &t in &self.order[start..start + len] {
                        let tri = triangles[t as usize].map(|i| vertices[i as usize]);
                        match crossing(o, d, reach, tri) {
                            Crossing::Hit => count += 1,
                            Crossing::Degenerate => return None,
                            Crossing::Miss => {}
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        Some(count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Mesh;

    type V = Vec3<f64>;

    #[test]
    fn near_matches_brute_force() {
        let m = Mesh::icosphere(3, 1.0, V::zero());
        for (c, r) in [
            (V::new(1.0, 0.0, 0.0), 0.2),
            (V::new(0.3, -0.4, 0.5), 0.6),
            (V::splat(3.0), 0.5),
        ] {
            let got = m.bvh().near(c, r);
            let want: Vec<u32> = (0..m.triangles().len() as u32)
                .filter(|&t| {
                    let mut b = Aabb::empty();
                    for p in m.corners(t as usize) {
                        b.grow(p);
                    }
                    b.distance_squared(c) <= r * r
                })
                .collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn crossing_cases() {
        let tri = [V::zero(), V::new(1.0, 0.0, 0.0), V::new(0.0, 1.0, 0.0)];
        let down = V::new(0.0, 0.0, -1.0);
        assert_eq!(crossing(V::new(0.2, 0.2, 1.0), down, 10.0, tri), Crossing::Hit);
        assert_eq!(crossing(V::new(0.2, 0.2, 1.0), down, 0.5, tri), Crossing::Miss);
        assert_eq!(crossing(V::new(0.8, 0.8, 1.0), down, 10.0, tri), Crossing::Miss);
        assert_eq!(crossing(V::new(0.5, 0.5, 1.0), down, 10.0, tri), Crossing::Degenerate);
        assert_eq!(crossing(V::new(0.0, 0.0, 1.0), down, 10.0, tri), Crossing::Degenerate);
        assert_eq!(
            crossing(V::new(-1.0, 0.2, 0.0), V::new(1.0, 0.0, 0.0), 10.0, tri),
            Crossing::Degenerate
        );
        assert_eq!(
            crossing(V::new(-1.0, 0.2, 1.0), V::new(1.0, 0.0, 0.0), 10.0, tri),
            Crossing::Miss
        );
        assert_eq!(crossing(V::new(0.2, 0.2, 1.0), down, 1.0, tri), Crossing::Degenerate);
    }
}
