//! Solution fields `(u, V)` of `Δu + Vu = 0` with `u = 0` on the boundary.
//!
//! Pairs are manufactured from the shifted eigenproblem `−Δu + Wu = μu` by
//! setting `V = μ − W`, so `∇V = −∇W` is exact.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::geometry::{Domain, DomainKind};
use crate::mesh::TriMesh;
use crate::quad::maximize_clipped_disk;
use crate::sparse::EnvelopeCholesky;
use crate::special::{bessel_j, bessel_j_prime, bessel_zero};

/// The potential `W` of the shifted eigenproblem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PotentialFamily {
    Zero,
    /// `W = amplitude·sin(freq·x)·sin(freq·y)`.
    SinSin {
        amplitude: f64,
        freq: f64,
    },
}

impl PotentialFamily {
    pub fn value(&self, x: [f64; 2]) -> f64 {
        match *self {
            PotentialFamily::Zero => 0.0,
            PotentialFamily::SinSin { amplitude, freq } => {
                amplitude * (freq * x[0]).sin() * (freq * x[1]).sin()
            }
        }
    }

    pub fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        match *self {
            PotentialFamily::Zero => [0.0, 0.0],
            PotentialFamily::SinSin { amplitude, freq } => [
                amplitude * freq * (freq * x[0]).cos() * (freq * x[1]).sin(),
                amplitude * freq * (freq * x[0]).sin() * (freq * x[1]).cos(),
            ],
        }
    }
}

/// `V = μ − W` with its sup norms over the domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub w: PotentialFamily,
    pub mu: f64,
    pub sup_norm: f64,
    pub grad_sup_norm: f64,
    pub analytic: bool,
}

impl Potential {
    pub fn new(w: PotentialFamily, mu: f64, domain: &Domain) -> Potential {
        let sup_norm = domain_max(domain, &|x| (mu - w.value(x)).abs());
        let grad_sup_norm = domain_max(domain, &|x| {
            let g = w.gradient(x);
            g[0].hypot(g[1])
        });
        Potential {
            w,
            mu,
            sup_norm,
            grad_sup_norm,
            analytic: true,
        }
    }

    pub fn constant(mu: f64) -> Potential {
        Potential {
            w: PotentialFamily::Zero,
            mu,
            sup_norm: mu.abs(),
            grad_sup_norm: 0.0,
            analytic: true,
        }
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        self.mu - self.w.value(x)
    }

    pub fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        let g = self.w.gradient(x);
        [-g[0], -g[1]]
    }

    /// `λ = ‖V‖_∞ + ‖∇V‖_∞`.
    pub fn lambda(&self) -> f64 {
        self.sup_norm + self.grad_sup_norm
    }
}

/// Maximum of a nonnegative function over the closure of the domain:
/// dense lattice sampling followed by a pattern-search refinement.
pub fn domain_max(domain: &Domain, f: &dyn Fn([f64; 2]) -> f64) -> f64 {
    let (lo, hi) = domain.bounding_box();
    let n = 160;
    let mut pts: Vec<(f64, [f64; 2])> = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            let x = [
                lo[0] + (hi[0] - lo[0]) * i as f64 / n as f64,
                lo[1] + (hi[1] - lo[1]) * j as f64 / n as f64,
            ];
            if domain.contains(x) || on_closure(domain, x) {
                pts.push((f(x), x));
            }
        }
    }
    for s in &domain.samples {
        pts.push((f(s.point), s.point));
    }
    pts.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut best = pts[0].0;
    let step0 = (hi[0] - lo[0]) / n as f64;
    for &(v0, x0) in pts.iter().take(8) {
        let (mut v, mut x) = (v0, x0);
        let mut step = step0;
        while step > 1e-12 {
            let mut moved = false;
            for d in [[step, 0.0], [-step, 0.0], [0.0, step], [0.0, -step]] {
                let y = [x[0] + d[0], x[1] + d[1]];
                if !(domain.contains(y) || on_closure(domain, y)) {
                    continue;
                }
                let fy = f(y);
                if fy > v {
                    v = fy;
                    x = y;
                    moved = true;
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        best = best.max(v);
    }
    best
}

fn on_closure(domain: &Domain, x: [f64; 2]) -> bool {
    match domain.kind {
        DomainKind::Rectangle { width, height } => {
            x[0] >= 0.0 && x[0] <= width && x[1] >= 0.0 && x[1] <= height
        }
        _ => false,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ClosedForm {
    /// `sin(kπx)·sin(mπy)` on the unit square.
    SquareMode { k: u32, m: u32 },
    /// `J_m(j_{m,n}ρ)·cos(mθ)` on the unit disk (`n` radial index from 1).
    DiskMode { radial: u32, angular: u32 },
    /// `Re (x₁ + i x₂)^k`, harmonic; boundary condition not imposed.
    HarmonicPoly { degree: u32 },
    /// Constant test field; not a solution unless `V ≡ 0`.
    Constant { value: f64 },
}

impl ClosedForm {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ClosedForm::SquareMode { k, m } if k == 0 || m == 0 => {
                Err(invalid("square_mode", "indices start at 1"))
            }
            ClosedForm::DiskMode { radial: 0, .. } => {
                Err(invalid("disk_mode", "radial index starts at 1"))
            }
            _ => Ok(()),
        }
    }

    pub fn domain_kind(&self) -> DomainKind {
        match self {
            ClosedForm::SquareMode { .. } => DomainKind::Rectangle {
                width: 1.0,
                height: 1.0,
            },
            _ => DomainKind::UnitDisk,
        }
    }

    pub fn eigenvalue(&self) -> f64 {
        match *self {
            ClosedForm::SquareMode { k, m } => PI * PI * (k * k + m * m) as f64,
            ClosedForm::DiskMode { radial, angular } => bessel_zero(angular, radial).powi(2),
            ClosedForm::HarmonicPoly { .. } | ClosedForm::Constant { .. } => 0.0,
        }
    }

    fn eval(&self, x: [f64; 2], disk_root: f64) -> (f64, [f64; 2], f64) {
        match *self {
            ClosedForm::SquareMode { k, m } => {
                let (a, b) = (k as f64 * PI, m as f64 * PI);
                let (sx, cx) = (a * x[0]).sin_cos();
                let (sy, cy) = (b * x[1]).sin_cos();
                let u = sx * sy;
                (u, [a * cx * sy, b * sx * cy], -(a * a + b * b) * u)
            }
            ClosedForm::DiskMode { angular, .. } => {
                let m = angular as i32;
                let j = disk_root;
                let rho = x[0].hypot(x[1]);
                let th = x[1].atan2(x[0]);
                let (sm, cm) = (m as f64 * th).sin_cos();
                let jm = bessel_j(m, j * rho);
                let u = jm * cm;
                let grad = if rho < 1e-14 {
                    if m == 1 {
                        [0.5 * j, 0.0]
                    } else {
                        [0.0, 0.0]
                    }
                } else {
                    let dr = j * bessel_j_prime(m, j * rho) * cm;
                    let dt = -(m as f64) * jm * sm / rho;
                    let (s, c) = th.sin_cos();
                    [dr * c - dt * s, dr * s + dt * c]
                };
                (u, grad, -j * j * u)
            }
            ClosedForm::HarmonicPoly { degree } => {
                let k = degree as i32;
                let (mut re, mut im) = (1.0, 0.0);
                let (mut dre, mut dim) = (0.0, 0.0);
                for step in 0..k {
                    if step == k - 1 {
                        dre = k as f64 * re;
                        dim = k as f64 * im;
                    }
                    let nre = re * x[0] - im * x[1];
                    let nim = re * x[1] + im * x[0];
                    re = nre;
                    im = nim;
                }
                (re, [dre, -dim], 0.0)
            }
            ClosedForm::Constant { value } => (value, [0.0, 0.0], 0.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    ClosedForm,
    Computed,
}

#[derive(Clone, Debug)]
pub struct MeshField {
    pub mesh: TriMesh,
    pub values: Vec<f64>,
    pub gradient: Vec<[f64; 2]>,
}

#[derive(Clone, Debug)]
pub enum FieldRepr {
    Exact {
        form: ClosedForm,
        root: f64,
        scale: f64,
    },
    Mesh(MeshField),
}

#[derive(Clone, Debug)]
pub struct SolutionField {
    pub domain: Domain,
    pub repr: FieldRepr,
    pub potential: Potential,
    pub eigenvalue: f64,
    /// Relative residual of `Δu + Vu` (discrete for computed fields).
    pub residual: f64,
    pub mesh_h: Option<f64>,
    pub source: Source,
}

const BOUNDARY_RESOLUTION: usize = 512;

impl SolutionField {
    pub fn closed_form(form: ClosedForm) -> Result<SolutionField> {
        form.validate()?;
        let domain = Domain::build(form.domain_kind(), BOUNDARY_RESOLUTION)?;
        let mu = form.eigenvalue();
        let root = match form {
            ClosedForm::DiskMode { radial, angular } => bessel_zero(angular, radial),
            _ => 0.0,
        };
        Ok(SolutionField {
            domain,
            repr: FieldRepr::Exact {
                form,
                root,
                scale: 1.0,
            },
            potential: Potential::constant(mu),
            eigenvalue: mu,
            residual: 0.0,
            mesh_h: None,
            source: Source::ClosedForm,
        })
    }

    /// Replaces the potential; the residual is recomputed on a sample lattice.
    pub fn with_potential(mut self, potential: Potential) -> SolutionField {
        self.potential = potential;
        self.residual = self.sampled_residual();
        self
    }

    fn sampled_residual(&self) -> f64 {
        let FieldRepr::Exact { form, root, scale } = &self.repr else {
            return self.residual;
        };
        let (lo, hi) = self.domain.bounding_box();
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for j in 1..40 {
            for i in 1..40 {
                let x = [
                    lo[0] + (hi[0] - lo[0]) * i as f64 / 40.0,
                    lo[1] + (hi[1] - lo[1]) * j as f64 / 40.0,
                ];
                if !self.domain.contains(x) {
                    continue;
                }
                let (u, _, lap) = form.eval(x, *root);
                num = num.max((scale * (lap + self.potential.value(x) * u)).abs());
                den = den.max((scale * u).abs());
            }
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        self.value_grad(x).0
    }

    pub fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        self.value_grad(x).1
    }

    pub fn value_grad(&self, x: [f64; 2]) -> (f64, [f64; 2]) {
        match &self.repr {
            FieldRepr::Exact { form, root, scale } => {
                let (u, g, _) = form.eval(x, *root);
                (scale * u, [scale * g[0], scale * g[1]])
            }
            FieldRepr::Mesh(mf) => match mf.mesh.locate(x) {
                Some((t, b)) => {
                    let tri = mf.mesh.tris[t];
                    let mut u = 0.0;
                    let mut g = [0.0; 2];
                    for k in 0..3 {
                        u += b[k] * mf.values[tri[k]];
                        g[0] += b[k] * mf.gradient[tri[k]][0];
                        g[1] += b[k] * mf.gradient[tri[k]][1];
                    }
                    (u, g)
                }
                None => (0.0, [0.0, 0.0]),
            },
        }
    }

    /// `c·u` with the same potential.
    pub fn scaled(&self, c: f64) -> SolutionField {
        let mut out = self.clone();
        match &mut out.repr {
            FieldRepr::Exact { scale, .. } => *scale *= c,
            FieldRepr::Mesh(mf) => {
                mf.values.iter_mut().for_each(|v| *v *= c);
                mf.gradient.iter_mut().for_each(|g| {
                    g[0] *= c;
                    g[1] *= c;
                });
            }
        }
        out
    }

    /// Nodal values on a mesh of the domain with edge length `h`.
    pub fn sample_on_mesh(&self, h: f64) -> (TriMesh, Vec<f64>) {
        if let FieldRepr::Mesh(mf) = &self.repr {
            if (mf.mesh.h - h).abs() < 1e-12 * h {
                return (mf.mesh.clone(), mf.values.clone());
            }
        }
        let mesh = TriMesh::for_domain(&self.domain, h);
        let vals = mesh
            .nodes
            .iter()
            .zip(&mesh.on_boundary)
            .map(|(p, &b)| {
                let v = self.value(*p);
                if b && matches!(self.repr, FieldRepr::Mesh(_)) {
                    0.0
                } else {
                    v
                }
            })
            .collect();
        (mesh, vals)
    }

    /// Mesh representation with `offset` added at interior nodes; breaks the
    /// equation and serves as a negative control for the lemma checkers.
    pub fn with_interior_offset(&self, offset: f64, h: f64) -> SolutionField {
        let (mesh, mut values) = self.sample_on_mesh(h);
        for (v, &b) in values.iter_mut().zip(&mesh.on_boundary) {
            if !b {
                *v += offset;
            }
        }
        let gradient = mesh.recover_gradient(&values);
        SolutionField {
            domain: self.domain.clone(),
            repr: FieldRepr::Mesh(MeshField {
                mesh,
                values,
                gradient,
            }),
            potential: self.potential.clone(),
            eigenvalue: self.eigenvalue,
            residual: f64::NAN,
            mesh_h: Some(h),
            source: Source::Computed,
        }
    }

    /// Maximum of `|u|` over a region (see [`Region`]).
    pub fn sup_norm_on_region(&self, region: Region) -> Result<f64> {
        match region {
            Region::Whole => {
                let mut best = domain_max(&self.domain, &|x| self.value(x).abs());
                if let FieldRepr::Mesh(mf) = &self.repr {
                    best = best.max(mf.values.iter().fold(0.0f64, |a, v| a.max(v.abs())));
                }
                Ok(best)
            }
            Region::Ball { center, radius } => {
                if !(radius > 0.0) || !self.domain.contains(center) {
                    return Err(LabError::EmptyRegion);
                }
                let exit = |t: f64| self.domain.exit_distance(center, t);
                let (mut best, _) = maximize_clipped_disk(radius, &exit, 96, 24, &|off, _| {
                    self.value([center[0] + off[0], center[1] + off[1]]).abs()
                });
                if let FieldRepr::Mesh(mf) = &self.repr {
                    for (p, v) in mf.mesh.nodes.iter().zip(&mf.values) {
                        if (p[0] - center[0]).hypot(p[1] - center[1]) <= radius {
                            best = best.max(v.abs());
                        }
                    }
                }
                Ok(best)
            }
        }
    }

    /// Writes `x, y, u, ux, uy` rows for every mesh node (or a lattice for exact fields).
    pub fn to_csv_rows(&self, h: f64) -> Vec<[f64; 5]> {
        let (mesh, vals) = self.sample_on_mesh(h);
        mesh.nodes
            .iter()
            .zip(vals)
            .map(|(p, u)| {
                let g = self.gradient(*p);
                [p[0], p[1], u, g[0], g[1]]
            })
            .collect()
    }
}

/// A region `B ∩ Ω` or the whole domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "region", rename_all = "snake_case")]
pub enum Region {
    Whole,
    Ball { center: [f64; 2], radius: f64 },
}

/// Settings for the shift-invert subspace iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenSettings {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub extra_vectors: usize,
}

impl Default for EigenSettings {
    fn default() -> Self {
        EigenSettings {
            max_iterations: 400,
            tolerance: 1e-9,
            extra_vectors: 8,
        }
    }
}

/// The `k`-th Dirichlet eigenpair of `−Δ + W` (k ≥ 1).
pub fn solve_eigenpair(
    domain: &Domain,
    w: &PotentialFamily,
    k: usize,
    mesh_h: f64,
) -> Result<SolutionField> {
    let mut all = solve_eigenpairs(domain, w, k, mesh_h, &EigenSettings::default())?;
    Ok(all.pop().unwrap())
}

/// The lowest `count` Dirichlet eigenpairs of `−Δ + W`, in increasing order.
pub fn solve_eigenpairs(
    domain: &Domain,
    w: &PotentialFamily,
    count: usize,
    mesh_h: f64,
    settings: &EigenSettings,
) -> Result<Vec<SolutionField>> {
    if count == 0 {
        return Err(invalid("k", "mode index starts at 1"));
    }
    if !(mesh_h > 0.0) {
        return Err(invalid("mesh_h", "must be positive"));
    }
    let mesh = TriMesh::for_domain(domain, mesh_h);
    let asm = mesh.assemble(&|x| w.value(x));
    let n = asm.interior.len();
    let p = (count + settings.extra_vectors).min(n);
    if count > n {
        return Err(invalid("k", format!("mesh has only {n} interior nodes")));
    }
    let op = asm.stiffness.combine(1.0, &asm.potential_mass, 1.0);
    let w_min = -domain_max(domain, &|x| -w.value(x));
    let shift = w_min.min(0.0) - 1.0;
    let shifted = op.combine(1.0, &asm.mass, -shift);
    let chol = EnvelopeCholesky::factor(&shifted)?;

    let mut x = DMatrix::<f64>::from_fn(n, p, |i, j| {
        ((i + 1) as f64 * (0.37 + 0.11 * j as f64) + j as f64).sin()
    });
    let mut theta_prev = vec![f64::INFINITY; p];
    let mut history = Vec::new();
    let mut theta = vec![0.0; p];
    for _iter in 0..settings.max_iterations {
        let mut y = DMatrix::<f64>::zeros(n, p);
        for j in 0..p {
            let col: Vec<f64> = x.column(j).iter().copied().collect();
            let rhs = asm.mass.mul_vec(&col);
            let sol = chol.solve(&rhs);
            y.set_column(j, &DVector::from_vec(sol));
        }
        let q = y.qr().q();
        let (vals, vecs) = rayleigh_ritz(&q, &op, &asm.mass);
        x = &q * &vecs;
        theta = vals;
        let mut worst = 0.0f64;
        for (j, &th) in theta.iter().enumerate().take(count) {
            let col: Vec<f64> = x.column(j).iter().copied().collect();
            let kx = op.mul_vec(&col);
            let mx = asm.mass.mul_vec(&col);
            let num: f64 = kx
                .iter()
                .zip(&mx)
                .map(|(a, b)| (a - th * b).powi(2))
                .sum::<f64>()
                .sqrt();
            let den: f64 = mx
                .iter()
                .map(|b| (theta[j] * b).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(num / den.max(1e-300));
        }
        history.push(worst);
        let settled =
            (0..count).all(|j| (theta[j] - theta_prev[j]).abs() <= 1e-13 * theta[j].abs().max(1.0));
        if worst < settings.tolerance || (settled && worst < settings.tolerance.sqrt()) {
            let gradient_mesh = mesh.clone();
            let mut out = Vec::with_capacity(count);
            for j in 0..count {
                let mut values = vec![0.0; mesh.nodes.len()];
                for (d, &node) in asm.interior.iter().enumerate() {
                    values[node] = x[(d, j)];
                }
                let (imax, vmax) = values.iter().enumerate().fold((0, 0.0f64), |a, (i, v)| {
                    if v.abs() > a.1.abs() {
                        (i, *v)
                    } else {
                        a
                    }
                });
                let _ = imax;
                let s = 1.0 / vmax;
                values.iter_mut().for_each(|v| *v *= s);
                let col: Vec<f64> = asm.interior.iter().map(|&i| values[i]).collect();
                let kx = op.mul_vec(&col);
                let mx = asm.mass.mul_vec(&col);
                let num: f64 = kx
                    .iter()
                    .zip(&mx)
                    .map(|(a, b)| (a - theta[j] * b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let den: f64 = mx
                    .iter()
                    .map(|b| (theta[j] * b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let gradient = gradient_mesh.recover_gradient(&values);
                out.push(SolutionField {
                    domain: domain.clone(),
                    repr: FieldRepr::Mesh(MeshField {
                        mesh: gradient_mesh.clone(),
                        values,
                        gradient,
                    }),
                    potential: Potential::new(w.clone(), theta[j], domain),
                    eigenvalue: theta[j],
                    residual: num / den,
                    mesh_h: Some(mesh_h),
                    source: Source::Computed,
                });
            }
            return Ok(out);
        }
        theta_prev.clone_from(&theta);
    }
    let _ = theta;
    Err(LabError::NoConvergence {
        iterations: settings.max_iterations,
        history,
    })
}

fn rayleigh_ritz(
    q: &DMatrix<f64>,
    op: &crate::sparse::Csr,
    mass: &crate::sparse::Csr,
) -> (Vec<f64>, DMatrix<f64>) {
    let (n, p) = q.shape();
    let mut kq = DMatrix::<f64>::zeros(n, p);
    let mut mq = DMatrix::<f64>::zeros(n, p);
    for j in 0..p {
        let col: Vec<f64> = q.column(j).iter().copied().collect();
        kq.set_column(j, &DVector::from_vec(op.mul_vec(&col)));
        mq.set_column(j, &DVector::from_vec(mass.mul_vec(&col)));
    }
    let kp = q.transpose() * kq;
    let mp = q.transpose() * mq;
    let kp = 0.5 * (&kp + kp.transpose());
    let mp = 0.5 * (&mp + mp.transpose());
    let l = mp
        .cholesky()
        .expect("projected mass matrix is positive definite")
        .l();
    let linv = l
        .clone()
        .try_inverse()
        .expect("triangular factor is invertible");
    let c = &linv * kp * linv.transpose();
    let c = 0.5 * (&c + c.transpose());
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::<f64>::zeros(p, p);
    let back = linv.transpose() * &eig.eigenvectors;
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &back.column(src));
    }
    (vals, vecs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_mode_is_normalized() {
        let f = SolutionField::closed_form(ClosedForm::SquareMode { k: 1, m: 1 }).unwrap();
        let s = f.sup_norm_on_region(Region::Whole).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_field_sup_on_ball() {
        let f = SolutionField::closed_form(ClosedForm::HarmonicPoly { degree: 1 }).unwrap();
        let s = f
            .sup_norm_on_region(Region::Ball {
                center: [0.0, 0.0],
                radius: 0.37,
            })
            .unwrap();
        assert!((s - 0.37).abs() < 1e-6);
    }

    #[test]
    fn disk_ground_mode_peaks_at_center() {
        let f = SolutionField::closed_form(ClosedForm::DiskMode {
            radial: 1,
            angular: 0,
        })
        .unwrap();
        let s = f
            .sup_norm_on_region(Region::Ball {
                center: [0.0, 0.0],
                radius: 0.3,
            })
            .unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_region_is_an_error() {
        let f = SolutionField::closed_form(ClosedForm::SquareMode { k: 1, m: 1 }).unwrap();
        let r = f.sup_norm_on_region(Region::Ball {
            center: [2.0, 2.0],
            radius: 0.1,
        });
        assert!(matches!(r, Err(LabError::EmptyRegion)));
    }

    #[test]
    fn disk_mode_gradient_matches_finite_differences() {
        let f = SolutionField::closed_form(ClosedForm::DiskMode {
            radial: 2,
            angular: 3,
        })
        .unwrap();
        let x = [0.31, -0.42];
        let g = f.gradient(x);
        let e = 1e-6;
        let gx = (f.value([x[0] + e, x[1]]) - f.value([x[0] - e, x[1]])) / (2.0 * e);
        let gy = (f.value([x[0], x[1] + e]) - f.value([x[0], x[1] - e])) / (2.0 * e);
        assert!((g[0] - gx).abs() < 1e-7 && (g[1] - gy).abs() < 1e-7);
    }

    #[test]
    fn harmonic_poly_gradient() {
        let f = SolutionField::closed_form(ClosedForm::HarmonicPoly { degree: 3 }).unwrap();
        // Re z³ = x³ − 3xy², ∇ = (3x² − 3y², −6xy).
        let x = [0.2, 0.5];
        assert!((f.value(x) - (0.008 - 3.0 * 0.2 * 0.25)).abs() < 1e-15);
        let g = f.gradient(x);
        assert!((g[0] - (3.0 * 0.04 - 3.0 * 0.25)).abs() < 1e-14);
        assert!((g[1] + 6.0 * 0.2 * 0.5).abs() < 1e-14);
    }

    #[test]
    fn constant_potential_lambda_input() {
        let f = SolutionField::closed_form(ClosedForm::Constant { value: 1.0 })
            .unwrap()
            .with_potential(Potential::constant(1.0));
        assert_eq!(f.potential.sup_norm, 1.0);
        assert!((f.residual - 1.0).abs() < 1e-12);
    }

    #[test]
    fn square_ground_state_eigenvalue() {
        let d = Domain::build(
            DomainKind::Rectangle {
                width: 1.0,
                height: 1.0,
            },
            256,
        )
        .unwrap();
        let f = solve_eigenpair(&d, &PotentialFamily::Zero, 1, 1.0 / 32.0).unwrap();
        let exact = 2.0 * PI * PI;
        assert!(
            (f.eigenvalue - exact).abs() / exact < 0.01,
            "{}",
            f.eigenvalue
        );
        assert!(f.residual < 1e-6);
        assert!((f.value([0.5, 0.5]) - 1.0).abs() < 0.01);
    }

    #[test]
    fn disk_ground_state_eigenvalue() {
        let d = Domain::build(DomainKind::UnitDisk, 256).unwrap();
        let f = solve_eigenpair(&d, &PotentialFamily::Zero, 1, 1.0 / 24.0).unwrap();
        let exact = bessel_zero(0, 1).powi(2);
        assert!(
            (f.eigenvalue - exact).abs() / exact < 0.01,
            "{}",
            f.eigenvalue
        );
    }
}
