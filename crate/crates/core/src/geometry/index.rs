use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use super::TriangleMesh;

/// Far-field acceptance ratio for hierarchical winding numbers: a node is
/// approximated when the query is farther than `BETA * radius` from its center.
pub const WINDING_BETA: f64 = 2.0;
/// Below this distance to the surface the gradient switches to finite differences (m).
pub const GRADIENT_SURFACE_EPS: f64 = 1e-6;
/// Step of the near-surface finite-difference gradient (m).
pub const GRADIENT_FD_STEP: f64 = 1e-5;
/// Default step of the finite-difference Hessian (m).
pub const HESSIAN_STEP: f64 = 1e-4;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoint {
    pub distance: f64,
    pub point: Vector3<f64>,
    pub face: usize,
}

/// Signed distance together with its gradient, from a single proximity query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdfSample {
    pub value: f64,
    pub gradient: Vector3<f64>,
    pub closest: ClosestPoint,
}

#[derive(Debug, Clone)]
struct Node {
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    /// Children for interior nodes; unused for leaves.
    children: [u32; 2],
    /// Leaf triangle range into `order`; `count == 0` marks an interior node.
    start: u32,
    count: u32,
}

/// Taylor moments of a node's surface about its area-weighted centroid.
#[derive(Debug, Clone)]
struct Moments {
    center: Vector3<f64>,
    radius: f64,
    /// ∫ n dA
    first: Vector3<f64>,
    /// ∫ n (p - c)ᵀ dA
    second: Matrix3<f64>,
    /// ∫ n_a (p - c)(p - c)ᵀ dA, one matrix per component `a`
    third: [Matrix3<f64>; 3],
}

/// Immutable proximity structure over a [`TriangleMesh`]: an axis-aligned
/// bounding-box hierarchy for closest-point queries plus per-node surface
/// moments for fast generalized winding numbers.
#[derive(Debug, Clone)]
pub struct MeshDistanceIndex {
    mesh: TriangleMesh,
    nodes: Vec<Node>,
    moments: Vec<Moments>,
    /// Face ids in leaf order.
    order: Vec<usize>,
    /// Triangle corners in leaf order.
    triangles: Vec<[Vector3<f64>; 3]>,
    beta: f64,
}

impl MeshDistanceIndex {
    pub fn new(mesh: TriangleMesh) -> Self {
        Self::with_winding_beta(mesh, WINDING_BETA)
    }

    /// Larger `beta` trades speed for a more accurate far-field winding number.
    pub fn with_winding_beta(mesh: TriangleMesh, beta: f64) -> Self {
        let n = mesh.num_faces();
        let centroids: Vec<Vector3<f64>> =
            (0..n).map(|f| mesh.triangle(f).iter().sum::<Vector3<f64>>() / 3.0).collect();
        let mut order: Vec<usize> = (0..n).collect();
        let mut nodes = Vec::with_capacity(2 * n / LEAF_SIZE + 1);
        build(&mesh, &centroids, &mut order, 0, n, &mut nodes);
        let triangles = order.iter().map(|&f| mesh.triangle(f)).collect::<Vec<_>>();
        let moments = nodes
            .iter()
            .map(|node| compute_moments(&triangles[leaf_span(&nodes, node)]))
            .collect();
        Self { mesh, nodes, moments, order, triangles, beta }
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    /// Face ids in the order the hierarchy stores them. Deterministic for a given mesh.
    pub fn traversal_order(&self) -> &[usize] {
        &self.order
    }

    pub fn depth(&self) -> usize {
        fn rec(nodes: &[Node], i: usize) -> usize {
            let n = &nodes[i];
            if n.count > 0 {
                0
            } else {
                1 + rec(nodes, n.children[0] as usize).max(rec(nodes, n.children[1] as usize))
            }
        }
        rec(&self.nodes, 0)
    }

    pub fn root_bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        (self.nodes[0].lo, self.nodes[0].hi)
    }

    /// Bounds of every leaf node.
    pub fn leaf_bounds(&self) -> Vec<(Vector3<f64>, Vector3<f64>)> {
        self.nodes.iter().filter(|n| n.count > 0).map(|n| (n.lo, n.hi)).collect()
    }

    pub fn unsigned_distance(&self, x: &Vector3<f64>) -> ClosestPoint {
        let mut best = ClosestPoint { distance: f64::INFINITY, point: *x, face: usize::MAX };
        let mut best_sq = f64::INFINITY;
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i as usize];
            if box_distance_sq(&node.lo, &node.hi, x) >= best_sq {
                continue;
            }
            if node.count > 0 {
                let span = node.start as usize..(node.start + node.count) as usize;
                for k in span {
                    let [a, b, c] = &self.triangles[k];
                    let p = closest_point_on_triangle(x, a, b, c);
                    let d2 = (p - x).norm_squared();
                    if d2 < best_sq {
                        best_sq = d2;
                        best = ClosestPoint { distance: 0.0, point: p, face: self.order[k] };
                    }
                }
            } else {
                let [l, r] = node.children;
                let dl = box_distance_sq(&self.nodes[l as usize].lo, &self.nodes[l as usize].hi, x);
                let dr = box_distance_sq(&self.nodes[r as usize].lo, &self.nodes[r as usize].hi, x);
                if dl < dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        best.distance = best_sq.sqrt();
        best
    }

    /// Generalized winding number: ≈1 inside, ≈0 outside a closed mesh.
    pub fn winding_number(&self, x: &Vector3<f64>) -> f64 {
        let mut total = 0.0;
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i as usize];
            let m = &self.moments[i as usize];
            let r = m.center - x;
            if r.norm() > self.beta * m.radius {
                total += far_field(m, &r);
            } else if node.count > 0 {
                let span = node.start as usize..(node.start + node.count) as usize;
                total += self.triangles[span].iter().map(|t| solid_angle(x, t)).sum::<f64>();
            } else {
                stack.extend_from_slice(&node.children);
            }
        }
        total / (4.0 * PI)
    }

    /// Winding number by direct summation over every triangle.
    pub fn winding_number_exact(&self, x: &Vector3<f64>) -> f64 {
        self.triangles.iter().map(|t| solid_angle(x, t)).sum::<f64>() / (4.0 * PI)
    }

    fn sign_at(&self, x: &Vector3<f64>) -> f64 {
        if self.winding_number(x) > 0.5 {
            -1.0
        } else {
            1.0
        }
    }

    pub fn signed_distance(&self, x: &Vector3<f64>) -> f64 {
        let cp = self.unsigned_distance(x);
        if cp.distance == 0.0 {
            return 0.0;
        }
        self.sign_at(x) * cp.distance
    }

    pub fn sdf_gradient(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.sample(x).gradient
    }

    /// Signed distance and gradient sharing one closest-point and winding query.
    pub fn sample(&self, x: &Vector3<f64>) -> SdfSample {
        let closest = self.unsigned_distance(x);
        if closest.distance <= GRADIENT_SURFACE_EPS {
            let value = if closest.distance == 0.0 { 0.0 } else { self.sign_at(x) * closest.distance };
            let h = GRADIENT_FD_STEP;
            let gradient = Vector3::from_fn(|k, _| {
                let e = Vector3::ith(k, h);
                (self.signed_distance(&(x + e)) - self.signed_distance(&(x - e))) / (2.0 * h)
            });
            return SdfSample { value, gradient, closest };
        }
        let sign = self.sign_at(x);
        SdfSample {
            value: sign * closest.distance,
            gradient: (x - closest.point) * (sign / closest.distance),
            closest,
        }
    }

    /// Symmetrized central-difference Hessian of the signed distance.
    pub fn sdf_hessian(&self, x: &Vector3<f64>, h: f64) -> Matrix3<f64> {
        let mut hess = Matrix3::zeros();
        for k in 0..3 {
            let e = Vector3::ith(k, h);
            let col = (self.sdf_gradient(&(x + e)) - self.sdf_gradient(&(x - e))) / (2.0 * h);
            hess.set_column(k, &col);
        }
        (hess + hess.transpose()) * 0.5
    }
}

fn leaf_span(nodes: &[Node], node: &Node) -> std::ops::Range<usize> {
    // every subtree covers a contiguous range of `order`
    fn lo(nodes: &[Node], n: &Node) -> usize {
        if n.count > 0 { n.start as usize } else { lo(nodes, &nodes[n.children[0] as usize]) }
    }
    fn hi(nodes: &[Node], n: &Node) -> usize {
        if n.count > 0 { (n.start + n.count) as usize } else { hi(nodes, &nodes[n.children[1] as usize]) }
    }
    lo(nodes, node)..hi(nodes, node)
}

fn build(
    mesh: &TriangleMesh,
    centroids: &[Vector3<f64>],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> u32 {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    let mut clo = lo;
    let mut chi = hi;
    for &f in &order[start..end] {
        for v in mesh.triangle(f) {
            lo = lo.inf(&v);
            hi = hi.sup(&v);
        }
        clo = clo.inf(&centroids[f]);
        chi = chi.sup(&centroids[f]);
    }
    let id = nodes.len() as u32;
    nodes.push(Node { lo, hi, children: [0, 0], start: start as u32, count: (end - start) as u32 });
    if end - start <= LEAF_SIZE {
        return id;
    }

    let extent = chi - clo;
    let axis = extent.imax();
    order[start..end].sort_by(|&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b)));
    let mid = start + (end - start) / 2;
    let l = build(mesh, centroids, order, start, mid, nodes);
    let r = build(mesh, centroids, order, mid, end, nodes);
    let node = &mut nodes[id as usize];
    node.children = [l, r];
    node.count = 0;
    id
}

fn compute_moments(triangles: &[[Vector3<f64>; 3]]) -> Moments {
    let mut area_sum = 0.0;
    let mut weighted = Vector3::zeros();
    for t in triangles {
        let a = super::mesh::triangle_area(&t[0], &t[1], &t[2]);
        area_sum += a;
        weighted += a * (t[0] + t[1] + t[2]) / 3.0;
    }
    let center = if area_sum > 0.0 { weighted / area_sum } else { triangles[0][0] };

    let mut radius: f64 = 0.0;
    let mut first = Vector3::zeros();
    let mut second = Matrix3::zeros();
    let mut third = [Matrix3::zeros(); 3];
    for t in triangles {
        let cross = (t[1] - t[0]).cross(&(t[2] - t[0]));
        let area = 0.5 * cross.norm();
        // n * area
        let na = cross * 0.5;
        let d = [t[0] - center, t[1] - center, t[2] - center];
        for di in &d {
            radius = radius.max(di.norm());
        }
        let sum = d[0] + d[1] + d[2];
        first += na;
        second += na * (sum / 3.0).transpose();
        // ∫ δδᵀ dA over a flat triangle with linear δ
        let quad = (d[0] * d[0].transpose() + d[1] * d[1].transpose() + d[2] * d[2].transpose()
            + sum * sum.transpose())
            * (1.0 / 12.0);
        if area > 0.0 {
            for a in 0..3 {
                third[a] += quad * (na[a] / area) * area;
            }
        }
    }
    Moments { center, radius, first, second, third }
}

/// Second-order Taylor expansion of Σ ∫ n·(p - x)/|p - x|³ dA about the node
/// center; `r = center - x`. Returns a solid angle (steradians).
fn far_field(m: &Moments, r: &Vector3<f64>) -> f64 {
    let r2 = r.norm_squared();
    let rn = r2.sqrt();
    let inv3 = 1.0 / (r2 * rn);
    let inv5 = inv3 / r2;
    let inv7 = inv5 / r2;

    let zeroth = m.first.dot(r) * inv3;
    let first = m.second.trace() * inv3 - 3.0 * r.dot(&(m.second * r)) * inv5;

    // Σ_ac T_aac r_c, Σ_a r_a Σ_b T_abb, Σ_abc T_abc r_a r_b r_c
    let mut t_aac_rc = 0.0;
    let mut r_tabb = 0.0;
    let mut t_rrr = 0.0;
    for a in 0..3 {
        let ta = &m.third[a];
        t_aac_rc += ta.row(a).transpose().dot(r);
        r_tabb += r[a] * ta.trace();
        t_rrr += r[a] * r.dot(&(ta * r));
    }
    let second = 0.5 * (-3.0 * (2.0 * t_aac_rc + r_tabb) * inv5 + 15.0 * t_rrr * inv7);

    zeroth + first + second
}

/// Signed solid angle of a triangle seen from `x` (Van Oosterom–Strackee).
fn solid_angle(x: &Vector3<f64>, t: &[Vector3<f64>; 3]) -> f64 {
    let a = t[0] - x;
    let b = t[1] - x;
    let c = t[2] - x;
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let det = a.dot(&b.cross(&c));
    let denom = la * lb * lc + a.dot(&b) * lc + a.dot(&c) * lb + b.dot(&c) * la;
    2.0 * det.atan2(denom)
}

fn box_distance_sq(lo: &Vector3<f64>, hi: &Vector3<f64>, x: &Vector3<f64>) -> f64 {
    let mut d2 = 0.0;
    for k in 0..3 {
        let v = x[k];
        let e = if v < lo[k] {
            lo[k] - v
        } else if v > hi[k] {
            v - hi[k]
        } else {
            0.0
        };
        d2 += e * e;
    }
    d2
}

/// Closest point on triangle `abc` to `p` (Voronoi-region classification).
pub fn closest_point_on_triangle(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> Vector3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives::{cuboid, icosphere};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube() -> MeshDistanceIndex {
        MeshDistanceIndex::new(cuboid(Vector3::repeat(0.5)))
    }

    // plane projection with barycentric test, else nearest edge segment
    fn brute_distance(mesh: &TriangleMesh, x: &Vector3<f64>) -> f64 {
        let seg = |a: &Vector3<f64>, b: &Vector3<f64>| {
            let t = ((x - a).dot(&(b - a)) / (b - a).norm_squared()).clamp(0.0, 1.0);
            (a + (b - a) * t - x).norm()
        };
        (0..mesh.num_faces())
            .map(|f| {
                let [a, b, c] = mesh.triangle(f);
                let n = (b - a).cross(&(c - a)).normalize();
                let proj = x - n * n.dot(&(x - a));
                let inside = [(a, b), (b, c), (c, a)]
                    .iter()
                    .all(|(p, q)| (q - p).cross(&(proj - p)).dot(&n) >= 0.0);
                if inside {
                    n.dot(&(x - a)).abs()
                } else {
                    seg(&a, &b).min(seg(&b, &c)).min(seg(&c, &a))
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn cube_distances() {
        let idx = cube();
        let cp = idx.unsigned_distance(&Vector3::new(2.0, 0.0, 0.0));
        assert!((cp.distance - 1.5).abs() < 1e-15);
        assert!((cp.point - Vector3::new(0.5, 0.0, 0.0)).norm() < 1e-15);
        let [a, b, c] = idx.mesh().triangle(cp.face);
        assert!(a.x == 0.5 && b.x == 0.5 && c.x == 0.5);

        let cp = idx.unsigned_distance(&Vector3::repeat(0.7));
        assert!((cp.distance - 3f64.sqrt() * 0.2).abs() < 1e-12);
        assert!((cp.point - Vector3::repeat(0.5)).norm() < 1e-12);
    }

    #[test]
    fn cube_hierarchy() {
        let idx = cube();
        assert!(idx.depth() >= 1);
        let (lo, hi) = idx.root_bounds();
        assert_eq!(lo, Vector3::repeat(-0.5));
        assert_eq!(hi, Vector3::repeat(0.5));
    }

    #[test]
    fn every_face_in_one_leaf_and_leaves_inside_root() {
        let mesh = icosphere(3, 1.0);
        let idx = MeshDistanceIndex::new(mesh.clone());
        let mut seen = idx.traversal_order().to_vec();
        seen.sort_unstable();
        assert_eq!(seen, (0..mesh.num_faces()).collect::<Vec<_>>());
        let (lo, hi) = idx.root_bounds();
        for (l, h) in idx.leaf_bounds() {
            assert!(l.iter().zip(lo.iter()).all(|(a, b)| *a >= b - 1e-12));
            assert!(h.iter().zip(hi.iter()).all(|(a, b)| *a <= b + 1e-12));
        }
        let again = MeshDistanceIndex::new(mesh);
        assert_eq!(idx.traversal_order(), again.traversal_order());
    }

    #[test]
    fn unsigned_distance_matches_brute_force() {
        let mesh = icosphere(2, 1.0);
        let idx = MeshDistanceIndex::new(mesh.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let x = Vector3::from_fn(|_, _| rng.gen_range(-2.5..2.5));
            let d = idx.unsigned_distance(&x).distance;
            assert!((d - brute_distance(&mesh, &x)).abs() < 1e-12, "{x:?}");
        }
    }

    #[test]
    fn cube_winding_and_sign() {
        let idx = cube();
        assert!((idx.winding_number(&Vector3::zeros()) - 1.0).abs() < 1e-6);
        assert!(idx.winding_number(&Vector3::repeat(5.0)).abs() < 1e-6);
        assert!((idx.signed_distance(&Vector3::zeros()) + 0.5).abs() < 1e-15);
        assert!((idx.signed_distance(&Vector3::new(2.0, 0.0, 0.0)) - 1.5).abs() < 1e-15);
        assert!(idx.signed_distance(&Vector3::new(0.5, 0.1, 0.2)).abs() < 1e-15);
    }

    #[test]
    fn hierarchical_winding_matches_direct_sum() {
        let worst = |beta: f64| {
            let idx = MeshDistanceIndex::with_winding_beta(icosphere(3, 1.0), beta);
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            (0..1000)
                .map(|_| {
                    let x = Vector3::from_fn(|_, _| rng.gen_range(-3.0..3.0));
                    (idx.winding_number(&x) - idx.winding_number_exact(&x)).abs()
                })
                .fold(0.0, f64::max)
        };
        // second-order truncation at beta = 2 costs a few 1e-3, far from the 0.5 threshold
        assert!(worst(WINDING_BETA) < 5e-3);
        assert!(worst(8.0) < 1e-4);
    }

    #[test]
    fn icosphere_signed_distance_near_analytic() {
        // The chord sag of a subdivision-3 icosphere reaches ~4.5e-3 mid-face;
        // on the pole axis the query sits over a vertex so the error is tiny.
        let idx = MeshDistanceIndex::new(icosphere(3, 1.0));
        let d = idx.signed_distance(&Vector3::new(0.0, 0.0, 1.5));
        assert!((d - 0.5).abs() < 4.6e-3, "{d}");
    }

    #[test]
    fn cube_gradients() {
        let idx = cube();
        let g = idx.sdf_gradient(&Vector3::new(2.0, 0.0, 0.0));
        assert!((g - Vector3::x()).norm() < 1e-15);
        let g = idx.sdf_gradient(&Vector3::zeros());
        assert!(g.norm() >= 0.9 && g.norm() <= 1.0 + 1e-12, "{g:?}");
        let on_face = idx.sdf_gradient(&Vector3::new(0.5, 0.1, 0.2));
        assert!((on_face - Vector3::x()).norm() < 1e-6);
    }

    #[test]
    fn icosphere_gradient_points_away_from_closest_feature() {
        let mesh = icosphere(3, 1.0);
        let idx = MeshDistanceIndex::new(mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let x = Vector3::from_fn(|_, _| rng.gen_range(-3.0..3.0));
            if x.norm() < 1.1 {
                continue;
            }
            let g = idx.sdf_gradient(&x);
            // FD of the signed distance is an independent estimate
            let h = 1e-6;
            let fd = Vector3::from_fn(|k, _| {
                let e = Vector3::ith(k, h);
                (idx.signed_distance(&(x + e)) - idx.signed_distance(&(x - e))) / (2.0 * h)
            });
            assert!((g - fd).norm() < 1e-6, "{g:?} {fd:?}");
            // faceting tilts the normal by at most the face angular size
            assert!(g.angle(&x) < 0.08);
        }
    }

    #[test]
    fn hessians() {
        let idx = cube();
        let h = idx.sdf_hessian(&Vector3::new(1.0, 0.1, -0.2), HESSIAN_STEP);
        assert!(h.norm() <= 1e-3);
        assert_eq!(h, h.transpose());

        // outside a vertex the field is radial about the vertex
        let x = Vector3::new(0.9, 0.8, 1.1);
        let u = x - Vector3::repeat(0.5);
        let expected = (Matrix3::identity() - u.normalize() * u.normalize().transpose()) / u.norm();
        let h = idx.sdf_hessian(&x, HESSIAN_STEP);
        assert!((h - expected).abs().max() < 1e-6, "{h}");
    }
}
