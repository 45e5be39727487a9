//! Triangle meshes, P1 finite-element assembly and gradient recovery.

use std::f64::consts::TAU;

use crate::geometry::{Domain, DomainKind};
use crate::sparse::Csr;

#[derive(Clone, Debug)]
pub struct TriMesh {
    pub nodes: Vec<[f64; 2]>,
    pub tris: Vec<[usize; 3]>,
    pub on_boundary: Vec<bool>,
    /// Nominal edge length.
    pub h: f64,
    locator: Locator,
}

#[derive(Clone, Debug)]
struct Locator {
    lo: [f64; 2],
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

fn area2(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

impl TriMesh {
    fn finish(
        nodes: Vec<[f64; 2]>,
        mut tris: Vec<[usize; 3]>,
        on_boundary: Vec<bool>,
        h: f64,
    ) -> TriMesh {
        for t in tris.iter_mut() {
            if area2(nodes[t[0]], nodes[t[1]], nodes[t[2]]) < 0.0 {
                t.swap(1, 2);
            }
        }
        let locator = Locator::build(&nodes, &tris, h);
        TriMesh {
            nodes,
            tris,
            on_boundary,
            h,
            locator,
        }
    }

    /// Structured mesh of `[lo, hi]` with right triangles of leg at most `h`.
    pub fn rectangle(lo: [f64; 2], hi: [f64; 2], h: f64) -> TriMesh {
        let nx = ((hi[0] - lo[0]) / h).round().max(1.0) as usize;
        let ny = ((hi[1] - lo[1]) / h).round().max(1.0) as usize;
        let hx = (hi[0] - lo[0]) / nx as f64;
        let hy = (hi[1] - lo[1]) / ny as f64;
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        let mut on_boundary = Vec::with_capacity(nodes.capacity());
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push([lo[0] + i as f64 * hx, lo[1] + j as f64 * hy]);
                on_boundary.push(i == 0 || j == 0 || i == nx || j == ny);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut tris = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                tris.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                tris.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        TriMesh::finish(nodes, tris, on_boundary, hx.max(hy))
    }

    /// Mesh of concentric rings mapped radially onto a disk-like domain.
    pub fn polar(kind: &DomainKind, h: f64) -> TriMesh {
        let rho_of = |theta: f64| match *kind {
            DomainKind::PerturbedDisk { radius, eps, mode } => {
                radius + eps * (mode as f64 * theta).cos()
            }
            _ => 1.0,
        };
        let mean = match *kind {
            DomainKind::PerturbedDisk { radius, .. } => radius,
            _ => 1.0,
        };
        let nr = (mean / h).ceil().max(2.0) as usize;
        let mut nodes = vec![[0.0, 0.0]];
        let mut on_boundary = vec![false];
        let mut ring_start = vec![0usize];
        let mut ring_len = vec![1usize];
        for k in 1..=nr {
            let n = 6 * k;
            ring_start.push(nodes.len());
            ring_len.push(n);
            let frac = k as f64 / nr as f64;
            for i in 0..n {
                let th = TAU * i as f64 / n as f64;
                let rho = frac * rho_of(th);
                nodes.push([rho * th.cos(), rho * th.sin()]);
                on_boundary.push(k == nr);
            }
        }
        let mut tris = Vec::new();
        for i in 0..6 {
            tris.push([0, 1 + i, 1 + (i + 1) % 6]);
        }
        for k in 1..nr {
            let (sa, na) = (ring_start[k], ring_len[k]);
            let (sb, nb) = (ring_start[k + 1], ring_len[k + 1]);
            let (mut i, mut j) = (0usize, 0usize);
            while i < na || j < nb {
                let next_a = (i + 1) as f64 / na as f64;
                let next_b = (j + 1) as f64 / nb as f64;
                if j >= nb || (i < na && next_a < next_b) {
                    tris.push([sa + i % na, sa + (i + 1) % na, sb + j % nb]);
                    i += 1;
                } else {
                    tris.push([sa + i % na, sb + (j + 1) % nb, sb + j % nb]);
                    j += 1;
                }
            }
        }
        TriMesh::finish(nodes, tris, on_boundary, mean / nr as f64)
    }

    pub fn for_domain(domain: &Domain, h: f64) -> TriMesh {
        match domain.kind {
            DomainKind::Rectangle { width, height } => {
                TriMesh::rectangle([0.0, 0.0], [width, height], h)
            }
            _ => TriMesh::polar(&domain.kind, h),
        }
    }

    /// Triangle containing `x` and barycentric coordinates; points slightly
    /// outside the mesh snap to the nearest triangle.
    pub fn locate(&self, x: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let loc = &self.locator;
        let ci = ((x[0] - loc.lo[0]) / loc.cell).floor();
        let cj = ((x[1] - loc.lo[1]) / loc.cell).floor();
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                let (i, j) = (ci as i64 + di, cj as i64 + dj);
                if i < 0 || j < 0 || i >= loc.nx as i64 || j >= loc.ny as i64 {
                    continue;
                }
                for &t in &loc.buckets[j as usize * loc.nx + i as usize] {
                    let b = self.barycentric(t, x);
                    let worst = b[0].min(b[1]).min(b[2]);
                    if worst >= -1e-12 {
                        return Some((t, b));
                    }
                    if best.as_ref().is_none_or(|bb| worst > bb.2) {
                        best = Some((t, b, worst));
                    }
                }
            }
        }
        best.map(|(t, b, _)| {
            let c = [b[0].max(0.0), b[1].max(0.0), b[2].max(0.0)];
            let s = c[0] + c[1] + c[2];
            (t, [c[0] / s, c[1] / s, c[2] / s])
        })
    }

    pub fn barycentric(&self, t: usize, x: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.tris[t].map(|i| self.nodes[i]);
        let d = area2(a, b, c);
        let l0 = area2(x, b, c) / d;
        let l1 = area2(a, x, c) / d;
        [l0, l1, 1.0 - l0 - l1]
    }

    pub fn tri_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.tris[t].map(|i| self.nodes[i]);
        0.5 * area2(a, b, c)
    }

    /// Gradients of the three P1 basis functions on triangle `t`.
    pub fn basis_gradients(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.tris[t].map(|i| self.nodes[i]);
        let d = area2(a, b, c);
        [
            [(b[1] - c[1]) / d, (c[0] - b[0]) / d],
            [(c[1] - a[1]) / d, (a[0] - c[0]) / d],
            [(a[1] - b[1]) / d, (b[0] - a[0]) / d],
        ]
    }

    /// Area-weighted vertex average of the per-triangle gradient.
    pub fn recover_gradient(&self, values: &[f64]) -> Vec<[f64; 2]> {
        let mut acc = vec![[0.0; 2]; self.nodes.len()];
        let mut w = vec![0.0; self.nodes.len()];
        for t in 0..self.tris.len() {
            let g = self.basis_gradients(t);
            let tri = self.tris[t];
            let mut grad = [0.0; 2];
            for k in 0..3 {
                grad[0] += values[tri[k]] * g[k][0];
                grad[1] += values[tri[k]] * g[k][1];
            }
            let a = self.tri_area(t);
            for &v in &tri {
                acc[v][0] += a * grad[0];
                acc[v][1] += a * grad[1];
                w[v] += a;
            }
        }
        acc.iter()
            .zip(&w)
            .map(|(g, w)| [g[0] / w, g[1] / w])
            .collect()
    }

    /// Stiffness, mass, and `W`-weighted mass matrices restricted to interior nodes.
    pub fn assemble(&self, w: &dyn Fn([f64; 2]) -> f64) -> Assembly {
        let mut dof = vec![usize::MAX; self.nodes.len()];
        let mut interior = Vec::new();
        for (i, &b) in self.on_boundary.iter().enumerate() {
            if !b {
                dof[i] = interior.len();
                interior.push(i);
            }
        }
        let mut k_trip = Vec::new();
        let mut m_trip = Vec::new();
        let mut w_trip = Vec::new();
        for t in 0..self.tris.len() {
            let tri = self.tris[t];
            let g = self.basis_gradients(t);
            let a = self.tri_area(t);
            let p = tri.map(|i| self.nodes[i]);
            let mids = [
                [0.5 * (p[0][0] + p[1][0]), 0.5 * (p[0][1] + p[1][1])],
                [0.5 * (p[1][0] + p[2][0]), 0.5 * (p[1][1] + p[2][1])],
                [0.5 * (p[2][0] + p[0][0]), 0.5 * (p[2][1] + p[0][1])],
            ];
            let wm = mids.map(w);
            // Basis values at the edge midpoints (01, 12, 20).
            let phi = [[0.5, 0.0, 0.5], [0.5, 0.5, 0.0], [0.0, 0.5, 0.5]];
            for i in 0..3 {
                let di = dof[tri[i]];
                if di == usize::MAX {
                    continue;
                }
                for j in 0..3 {
                    let dj = dof[tri[j]];
                    if dj == usize::MAX {
                        continue;
                    }
                    let kij = a * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                    let mij = a / 12.0 * if i == j { 2.0 } else { 1.0 };
                    let wij: f64 = (0..3)
                        .map(|q| a / 3.0 * wm[q] * phi[i][q] * phi[j][q])
                        .sum();
                    k_trip.push((di, dj, kij));
                    m_trip.push((di, dj, mij));
                    w_trip.push((di, dj, wij));
                }
            }
        }
        let n = interior.len();
        Assembly {
            stiffness: Csr::from_triplets(n, &k_trip),
            mass: Csr::from_triplets(n, &m_trip),
            potential_mass: Csr::from_triplets(n, &w_trip),
            interior,
        }
    }

    /// Edges that belong to exactly one triangle.
    pub fn boundary_edges(&self) -> std::collections::HashSet<(usize, usize)> {
        let mut count = std::collections::HashMap::new();
        for t in &self.tris {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_insert(0usize) += 1;
            }
        }
        count
            .into_iter()
            .filter(|(_, c)| *c == 1)
            .map(|(e, _)| e)
            .collect()
    }
}

impl Locator {
    fn build(nodes: &[[f64; 2]], tris: &[[usize; 3]], h: f64) -> Locator {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in nodes {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let cell = (2.0 * h).max(1e-12);
        let nx = (((hi[0] - lo[0]) / cell).ceil() as usize).max(1) + 1;
        let ny = (((hi[1] - lo[1]) / cell).ceil() as usize).max(1) + 1;
        let mut buckets = vec![Vec::new(); nx * ny];
        for (t, tri) in tris.iter().enumerate() {
            let p = tri.map(|i| nodes[i]);
            let bx0 = p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min);
            let bx1 = p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max);
            let by0 = p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min);
            let by1 = p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max);
            let i0 = ((bx0 - lo[0]) / cell).floor() as usize;
            let i1 = (((bx1 - lo[0]) / cell).floor() as usize).min(nx - 1);
            let j0 = ((by0 - lo[1]) / cell).floor() as usize;
            let j1 = (((by1 - lo[1]) / cell).floor() as usize).min(ny - 1);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(t);
                }
            }
        }
        Locator {
            lo,
            cell,
            nx,
            ny,
            buckets,
        }
    }
}

pub struct Assembly {
    pub stiffness: Csr,
    pub mass: Csr,
    pub potential_mass: Csr,
    /// Mesh node index of each degree of freedom.
    pub interior: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_mesh_area_and_location() {
        let m = TriMesh::rectangle([0.0, 0.0], [1.0, 2.0], 0.25);
        let area: f64 = (0..m.tris.len()).map(|t| m.tri_area(t)).sum();
        assert!((area - 2.0).abs() < 1e-12);
        let (t, b) = m.locate([0.3, 1.7]).unwrap();
        let p = m.tris[t].map(|i| m.nodes[i]);
        let x: f64 = (0..3).map(|k| b[k] * p[k][0]).sum();
        assert!((x - 0.3).abs() < 1e-12);
    }

    #[test]
    fn polar_mesh_covers_disk_polygon() {
        let m = TriMesh::polar(&DomainKind::UnitDisk, 0.1);
        let area: f64 = (0..m.tris.len()).map(|t| m.tri_area(t)).sum();
        assert!(m
            .tris
            .iter()
            .all(|t| area2(m.nodes[t[0]], m.nodes[t[1]], m.nodes[t[2]]) > 0.0));
        // Inscribed polygon area is slightly below π.
        assert!(area < std::f64::consts::PI && area > 0.98 * std::f64::consts::PI);
        assert_eq!(m.boundary_edges().len(), 60);
    }

    #[test]
    fn recovered_gradient_is_exact_for_linear_data() {
        let m = TriMesh::polar(&DomainKind::UnitDisk, 0.2);
        let v: Vec<f64> = m.nodes.iter().map(|p| 2.0 * p[0] - 3.0 * p[1]).collect();
        for g in m.recover_gradient(&v) {
            assert!((g[0] - 2.0).abs() < 1e-10 && (g[1] + 3.0).abs() < 1e-10);
        }
    }
}
