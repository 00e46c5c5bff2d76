//! Grids, Dirichlet masks, discrete differential operators, and quadrature
//! for exterior-of-ball and free-space geometries.
//!
//! Two discretizations are supported: a 1D radial grid for spherically
//! symmetric fields (exterior of a centered ball, or all of R^3 when the
//! obstacle radius is zero) and a 3D Cartesian grid with a staircase
//! Dirichlet mask for an off-center ball obstacle.
//!
//! Radial fields are stored in the substitution v = r*u, which turns the 3D
//! radial Laplacian into a plain 1D second difference with Dirichlet ghosts.
//! All observables are reported for u itself.

use num_complex::Complex64;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("a >= r_max (a = {a}, r_max = {r_max})")]
    ObstacleTooLarge { a: f64, r_max: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("obstacle touches boundary")]
    ObstacleTouchesBoundary,
    #[error("unsupported Lp exponent {0}")]
    UnsupportedExponent(f64),
    #[error("field/grid mismatch")]
    GridMismatch,
    #[error("profile undefined on this grid: {0}")]
    ProfileUndefined(String),
}

/// Exterior radial grid. Interior nodes r_j = a + j*h for j = 1..n with
/// h = (r_max - a)/(n+1); the field is implicitly zero at r = a and r = r_max.
/// a = 0 selects free-space mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    pub a: f64,
    pub r_max: f64,
    pub n: usize,
    pub h: f64,
}

impl RadialGrid {
    pub fn build(a: f64, r_max: f64, n: usize) -> Result<Self, DomainError> {
        if !(a >= 0.0) || !r_max.is_finite() {
            return Err(DomainError::InvalidGrid(format!(
                "a = {a}, r_max = {r_max}"
            )));
        }
        if a >= r_max {
            return Err(DomainError::ObstacleTooLarge { a, r_max });
        }
        if n < 8 {
            return Err(DomainError::InvalidGrid(format!("n = {n} < 8")));
        }
        let h = (r_max - a) / (n as f64 + 1.0);
        Ok(RadialGrid { a, r_max, n, h })
    }

    /// Radius of interior node j (0-based storage, so node j sits at a + (j+1) h).
    #[inline]
    pub fn node(&self, j: usize) -> f64 {
        self.a + (j as f64 + 1.0) * self.h
    }

    pub fn is_free_space(&self) -> bool {
        self.a == 0.0
    }
}

/// Cartesian box [-L, L]^3 with n nodes per axis, spacing h = 2L/(n-1).
/// Nodes inside the obstacle ball or on the box boundary are masked
/// (staircase Dirichlet).
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianGrid {
    pub half_width: f64,
    pub n: usize,
    pub h: f64,
    pub x_obs: [f64; 3],
    pub a: f64,
    /// true = fluid node.
    pub mask: Vec<bool>,
    /// d(x) = max(|x - x_obs| - a, 0); forced to zero on masked nodes.
    pub dist: Vec<f64>,
}

impl CartesianGrid {
    pub fn build(
        half_width: f64,
        n: usize,
        x_obs: [f64; 3],
        a: f64,
    ) -> Result<Self, DomainError> {
        if !(half_width > 0.0) {
            return Err(DomainError::InvalidGrid(format!("L = {half_width}")));
        }
        if n < 16 {
            return Err(DomainError::InvalidGrid(format!("n = {n} < 16")));
        }
        if !(a >= 0.0) {
            return Err(DomainError::InvalidGrid(format!("a = {a}")));
        }
        for &c in &x_obs {
            if c.abs() + a >= half_width {
                return Err(DomainError::ObstacleTouchesBoundary);
            }
        }
        let h = 2.0 * half_width / (n as f64 - 1.0);
        let mut mask = vec![false; n * n * n];
        let mut dist = vec![0.0; n * n * n];
        let coord = |i: usize| -half_width + i as f64 * h;
        for ix in 0..n {
            for iy in 0..n {
                for iz in 0..n {
                    let idx = (ix * n + iy) * n + iz;
                    let on_wall = ix == 0
                        || iy == 0
                        || iz == 0
                        || ix == n - 1
                        || iy == n - 1
                        || iz == n - 1;
                    let dx = coord(ix) - x_obs[0];
                    let dy = coord(iy) - x_obs[1];
                    let dz = coord(iz) - x_obs[2];
                    let rho = (dx * dx + dy * dy + dz * dz).sqrt();
                    let fluid = !on_wall && rho > a;
                    mask[idx] = fluid;
                    dist[idx] = if fluid { (rho - a).max(0.0) } else { 0.0 };
                }
            }
        }
        Ok(CartesianGrid {
            half_width,
            n,
            h,
            x_obs,
            a,
            mask,
            dist,
        })
    }

    #[inline]
    pub fn idx(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.n + iy) * self.n + iz
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.h
    }

    pub fn node_pos(&self, ix: usize, iy: usize, iz: usize) -> [f64; 3] {
        [self.coord(ix), self.coord(iy), self.coord(iz)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Radial(RadialGrid),
    Cartesian(CartesianGrid),
}

impl Grid {
    pub fn len(&self) -> usize {
        match self {
            Grid::Radial(g) => g.n,
            Grid::Cartesian(g) => g.n * g.n * g.n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Complex grid function. Radial storage holds v_j = r_j * u(r_j); Cartesian
/// storage holds u directly, identically zero on masked nodes.
#[derive(Debug, Clone)]
pub struct Field {
    pub grid: Arc<Grid>,
    pub values: Vec<Complex64>,
}

impl Field {
    pub fn zeros(grid: Arc<Grid>) -> Field {
        let len = grid.len();
        Field {
            grid,
            values: vec![Complex64::ZERO; len],
        }
    }

    /// u at radial node j (converts from the v = r*u representation).
    #[inline]
    pub fn u_radial(&self, g: &RadialGrid, j: usize) -> Complex64 {
        self.values[j] / g.node(j)
    }

    pub fn scale(&mut self, c: Complex64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    /// Re-zero masked nodes (Cartesian only; radial storage has no masked nodes).
    pub fn enforce_mask(&mut self) {
        if let Grid::Cartesian(g) = self.grid.as_ref() {
            for (v, &m) in self.values.iter_mut().zip(&g.mask) {
                if !m {
                    *v = Complex64::ZERO;
                }
            }
        }
    }
}

/// Supported Lp exponents for `norm_lp`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lp {
    P2,
    P4,
    P5,
    Inf,
}

impl Lp {
    pub fn try_from_f64(p: f64) -> Result<Lp, DomainError> {
        if p == 2.0 {
            Ok(Lp::P2)
        } else if p == 4.0 {
            Ok(Lp::P4)
        } else if p == 5.0 {
            Ok(Lp::P5)
        } else if p.is_infinite() && p > 0.0 {
            Ok(Lp::Inf)
        } else {
            Err(DomainError::UnsupportedExponent(p))
        }
    }
}

/// Discrete Laplacian. Radial: second difference on the v-representation with
/// Dirichlet ghosts (equals r * (Laplacian u)). Cartesian: 7-point stencil
/// with zero ghosts at masked nodes.
pub fn apply_laplacian(f: &Field) -> Field {
    let mut out = Field::zeros(f.grid.clone());
    apply_laplacian_into(f, &mut out);
    out
}

pub fn apply_laplacian_into(f: &Field, out: &mut Field) {
    debug_assert_eq!(f.grid, out.grid);
    laplacian_slices(f.grid.as_ref(), &f.values, &mut out.values);
}

/// Slice-level Laplacian kernel (shared with the implicit solvers).
pub fn laplacian_slices(grid: &Grid, values: &[Complex64], out: &mut [Complex64]) {
    match grid {
        Grid::Radial(g) => {
            let inv_h2 = 1.0 / (g.h * g.h);
            let v = values;
            let n = g.n;
            for j in 0..n {
                let left = if j > 0 { v[j - 1] } else { Complex64::ZERO };
                let right = if j + 1 < n { v[j + 1] } else { Complex64::ZERO };
                out[j] = (left - 2.0 * v[j] + right) * inv_h2;
            }
        }
        Grid::Cartesian(g) => {
            let inv_h2 = 1.0 / (g.h * g.h);
            let n = g.n;
            let u = values;
            let stride = [n * n, n, 1usize];
            for o in out.iter_mut() {
                *o = Complex64::ZERO;
            }
            for ix in 1..n - 1 {
                for iy in 1..n - 1 {
                    let row = (ix * n + iy) * n;
                    for iz in 1..n - 1 {
                        let idx = row + iz;
                        if !g.mask[idx] {
                            continue;
                        }
                        let mut acc = -6.0 * u[idx];
                        for &s in &stride {
                            let m = idx - s;
                            let p = idx + s;
                            if g.mask[m] {
                                acc += u[m];
                            }
                            if g.mask[p] {
                                acc += u[p];
                            }
                        }
                        out[idx] = acc * inv_h2;
                    }
                }
            }
        }
    }
}

/// Integral of |u|^p over the domain (radial: 4 pi sum |u|^p r^2 h;
/// Cartesian: h^3 sum over fluid nodes). `Lp::Inf` returns the max modulus.
pub fn norm_lp(f: &Field, p: Lp) -> f64 {
    match p {
        Lp::Inf => sup_norm(f),
        _ => {
            let pow = match p {
                Lp::P2 => 2,
                Lp::P4 => 4,
                Lp::P5 => 5,
                Lp::Inf => unreachable!(),
            };
            integrate_modulus_pow(f, pow)
        }
    }
}

fn integrate_modulus_pow(f: &Field, pow: u32) -> f64 {
    match f.grid.as_ref() {
        Grid::Radial(g) => {
            let mut acc = 0.0;
            for j in 0..g.n {
                let r = g.node(j);
                let m = f.values[j].norm() / r;
                acc += m.powi(pow as i32) * r * r;
            }
            4.0 * std::f64::consts::PI * acc * g.h
        }
        Grid::Cartesian(g) => {
            let mut acc = 0.0;
            for (v, &m) in f.values.iter().zip(&g.mask) {
                if m {
                    acc += v.norm().powi(pow as i32);
                }
            }
            acc * g.h * g.h * g.h
        }
    }
}

pub fn sup_norm(f: &Field) -> f64 {
    match f.grid.as_ref() {
        Grid::Radial(g) => (0..g.n)
            .map(|j| f.values[j].norm() / g.node(j))
            .fold(0.0, f64::max),
        Grid::Cartesian(_) => f.values.iter().map(|v| v.norm()).fold(0.0, f64::max),
    }
}

/// Discrete ||grad u||^2. Radial: central differences on u with one-sided
/// differences at the first and last interior node, weighted 4 pi r^2 h.
/// Cartesian: forward-difference squares over edges touching a fluid node,
/// masked values counting as zero, times h^3.
pub fn gradient_norm_sq(f: &Field) -> f64 {
    match f.grid.as_ref() {
        Grid::Radial(g) => {
            // In the v = r*u substitution, ∫|∇u|² r² dr = ∫|v'|² dr exactly
            // (the cross terms telescope against the Dirichlet boundary).
            // The forward-difference sum below, with the ghost zeros at both
            // ends, is the quadratic form -<v, Av> of the discrete Laplacian,
            // so the linear Crank-Nicolson substep conserves it to solver
            // tolerance.
            let n = g.n;
            if n == 0 {
                return 0.0;
            }
            let v = &f.values;
            let inv_h2 = 1.0 / (g.h * g.h);
            let mut acc = v[0].norm_sqr() * inv_h2;
            for j in 1..n {
                acc += (v[j] - v[j - 1]).norm_sqr() * inv_h2;
            }
            acc += v[n - 1].norm_sqr() * inv_h2;
            4.0 * std::f64::consts::PI * acc * g.h
        }
        Grid::Cartesian(g) => {
            let n = g.n;
            let inv_h2 = 1.0 / (g.h * g.h);
            let u = &f.values;
            let mut acc = 0.0;
            let stride = [n * n, n, 1usize];
            for ix in 0..n {
                for iy in 0..n {
                    let row = (ix * n + iy) * n;
                    for iz in 0..n {
                        let idx = row + iz;
                        let here = if g.mask[idx] { u[idx] } else { Complex64::ZERO };
                        for (axis, &s) in stride.iter().enumerate() {
                            let at_edge = match axis {
                                0 => ix == n - 1,
                                1 => iy == n - 1,
                                _ => iz == n - 1,
                            };
                            if at_edge {
                                continue;
                            }
                            let nb = idx + s;
                            let next = if g.mask[nb] { u[nb] } else { Complex64::ZERO };
                            if g.mask[idx] || g.mask[nb] {
                                acc += (next - here).norm_sqr() * inv_h2;
                            }
                        }
                    }
                }
            }
            acc * g.h * g.h * g.h
        }
    }
}

/// Discrete L^2 inner product <f, g> matching the quadrature of `norm_lp`.
pub fn l2_inner(f: &Field, g: &Field) -> Complex64 {
    debug_assert_eq!(f.grid, g.grid);
    match f.grid.as_ref() {
        Grid::Radial(gr) => {
            // 4 pi sum u_f conj(u_g) r^2 h = 4 pi sum v_f conj(v_g) h
            let mut acc = Complex64::ZERO;
            for j in 0..gr.n {
                acc += f.values[j] * g.values[j].conj();
            }
            4.0 * std::f64::consts::PI * acc * gr.h
        }
        Grid::Cartesian(gc) => {
            let mut acc = Complex64::ZERO;
            for i in 0..f.values.len() {
                if gc.mask[i] {
                    acc += f.values[i] * g.values[i].conj();
                }
            }
            acc * gc.h * gc.h * gc.h
        }
    }
}

/// Built-in analytic profiles for `discretize`.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// amplitude * exp(-|x-center|^2 / width^2) * exp(i chirp |x-center|^2 + i phase)
    Gaussian {
        amplitude: f64,
        width: f64,
        center: [f64; 3],
        chirp: f64,
        phase: f64,
    },
    /// Product of axis sines vanishing on the box walls (Cartesian only).
    BoxMode { modes: [usize; 3] },
}

impl Profile {
    pub fn gaussian(amplitude: f64, width: f64) -> Profile {
        Profile::Gaussian {
            amplitude,
            width,
            center: [0.0; 3],
            chirp: 0.0,
            phase: 0.0,
        }
    }

    pub fn sample(&self, x: [f64; 3], grid: &Grid) -> Complex64 {
        match self {
            Profile::Gaussian {
                amplitude,
                width,
                center,
                chirp,
                phase,
            } => {
                let dx = x[0] - center[0];
                let dy = x[1] - center[1];
                let dz = x[2] - center[2];
                let r2 = dx * dx + dy * dy + dz * dz;
                let modulus = amplitude * (-r2 / (width * width)).exp();
                modulus * Complex64::new(0.0, chirp * r2 + phase).exp()
            }
            Profile::BoxMode { modes } => match grid {
                Grid::Cartesian(g) => {
                    let l = g.half_width;
                    let mut val = 1.0;
                    for (c, &m) in x.iter().zip(modes.iter()) {
                        let k = m as f64 * std::f64::consts::PI / (2.0 * l);
                        val *= (k * (c + l)).sin();
                    }
                    Complex64::new(val, 0.0)
                }
                Grid::Radial(_) => Complex64::ZERO,
            },
        }
    }
}

/// Sample a radially symmetric function u(r) onto a radial grid
/// (stored as v = r*u).
pub fn discretize_radial<F>(grid: &Arc<Grid>, f: F) -> Result<Field, DomainError>
where
    F: Fn(f64) -> Complex64,
{
    let g = match grid.as_ref() {
        Grid::Radial(g) => g,
        _ => return Err(DomainError::GridMismatch),
    };
    let mut out = Field::zeros(grid.clone());
    for j in 0..g.n {
        let r = g.node(j);
        let u = f(r);
        if !u.re.is_finite() || !u.im.is_finite() {
            return Err(DomainError::ProfileUndefined(format!("r = {r}")));
        }
        out.values[j] = u * r;
    }
    Ok(out)
}

/// Sample u(x) onto a Cartesian grid; masked nodes are forced to zero.
pub fn discretize_cartesian<F>(grid: &Arc<Grid>, f: F) -> Result<Field, DomainError>
where
    F: Fn([f64; 3]) -> Complex64,
{
    let g = match grid.as_ref() {
        Grid::Cartesian(g) => g,
        _ => return Err(DomainError::GridMismatch),
    };
    let mut out = Field::zeros(grid.clone());
    for ix in 0..g.n {
        for iy in 0..g.n {
            for iz in 0..g.n {
                let idx = g.idx(ix, iy, iz);
                if !g.mask[idx] {
                    continue;
                }
                let x = g.node_pos(ix, iy, iz);
                let u = f(x);
                if !u.re.is_finite() || !u.im.is_finite() {
                    return Err(DomainError::ProfileUndefined(format!("x = {x:?}")));
                }
                out.values[idx] = u;
            }
        }
    }
    Ok(out)
}

/// Sample a built-in profile onto either grid.
pub fn discretize(grid: &Arc<Grid>, profile: &Profile) -> Result<Field, DomainError> {
    match grid.as_ref() {
        Grid::Radial(_) => {
            if let Profile::Gaussian { center, .. } = profile {
                if center != &[0.0, 0.0, 0.0] {
                    return Err(DomainError::ProfileUndefined(
                        "off-center profile on a radial grid".into(),
                    ));
                }
            }
            let p = profile.clone();
            let grid_ref = grid.clone();
            discretize_radial(grid, move |r| p.sample([r, 0.0, 0.0], grid_ref.as_ref()))
        }
        Grid::Cartesian(_) => {
            let p = profile.clone();
            let grid_ref = grid.clone();
            discretize_cartesian(grid, move |x| p.sample(x, grid_ref.as_ref()))
        }
    }
}

/// C^3 ramp: 0 at t<=0, 1 at t>=1, first three derivatives vanish at both ends.
pub fn smoothstep_c3(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let t2 = t * t;
        let t4 = t2 * t2;
        t4 * (35.0 - 84.0 * t + 70.0 * t2 - 20.0 * t2 * t)
    }
}

/// C^2 quintic ramp (classic smootherstep).
pub fn smoothstep_c2(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn free_radial(h: f64, r_max: f64) -> Arc<Grid> {
        let n = (r_max / h).round() as usize - 1;
        Arc::new(Grid::Radial(RadialGrid::build(0.0, r_max, n).unwrap()))
    }

    #[test]
    fn radial_grid_spacing() {
        let g = RadialGrid::build(1.0, 101.0, 9999).unwrap();
        assert_relative_eq!(g.h, 0.01, max_relative = 1e-12);
        assert_relative_eq!(g.node(0), 1.01, max_relative = 1e-12);
        let g = RadialGrid::build(0.0, 50.0, 4999).unwrap();
        assert_relative_eq!(g.h, 0.01, max_relative = 1e-12);
        assert!(g.is_free_space());
    }

    #[test]
    fn radial_grid_rejects_bad_input() {
        let err = RadialGrid::build(2.0, 1.0, 100).unwrap_err();
        assert!(err.to_string().contains("a >= r_max"));
        assert!(RadialGrid::build(0.0, 1.0, 7).is_err());
    }

    #[test]
    fn cartesian_mask_counts_obstacle_nodes() {
        let g = CartesianGrid::build(20.0, 64, [0.0; 3], 1.0).unwrap();
        let masked_interior: usize = (1..63)
            .flat_map(|ix| (1..63).flat_map(move |iy| (1..63).map(move |iz| (ix, iy, iz))))
            .filter(|&(ix, iy, iz)| !g.mask[g.idx(ix, iy, iz)])
            .count();
        // direct enumeration oracle
        let mut expected = 0usize;
        for ix in 1..63 {
            for iy in 1..63 {
                for iz in 1..63 {
                    let p = g.node_pos(ix, iy, iz);
                    if (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() <= 1.0 {
                        expected += 1;
                    }
                }
            }
        }
        assert_eq!(masked_interior, expected);
        // order of magnitude: (4/3) pi (a/h)^3 up to staircase error
        let ball = 4.0 / 3.0 * std::f64::consts::PI * (1.0 / g.h).powi(3);
        assert!((masked_interior as f64) < 3.0 * ball + 8.0);
    }

    #[test]
    fn cartesian_free_space_all_interior_unmasked() {
        let g = CartesianGrid::build(20.0, 16, [0.0; 3], 0.0).unwrap();
        for ix in 1..15 {
            for iy in 1..15 {
                for iz in 1..15 {
                    assert!(g.mask[g.idx(ix, iy, iz)]);
                }
            }
        }
        assert!(!g.mask[g.idx(0, 3, 3)]);
    }

    #[test]
    fn cartesian_rejects_obstacle_on_boundary() {
        let err = CartesianGrid::build(5.0, 64, [4.9, 0.0, 0.0], 1.0).unwrap_err();
        assert!(matches!(err, DomainError::ObstacleTouchesBoundary));
    }

    #[test]
    fn laplacian_zero_field() {
        let grid = free_radial(0.1, 10.0);
        let f = Field::zeros(grid);
        let lf = apply_laplacian(&f);
        assert!(lf.values.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn radial_eigenmode_second_order() {
        // u(r) = sin(k(r-a))/r with k = pi/(r_max-a) is an eigenfunction of
        // the continuum radial Laplacian with eigenvalue -k^2.
        let a = 1.0;
        let r_max = 11.0;
        let k = std::f64::consts::PI / (r_max - a);
        let residual = |n: usize| -> f64 {
            let grid = Arc::new(Grid::Radial(RadialGrid::build(a, r_max, n).unwrap()));
            let f = discretize_radial(&grid, |r| {
                Complex64::new((k * (r - a)).sin() / r, 0.0)
            })
            .unwrap();
            let lf = apply_laplacian(&f);
            let mut worst = 0.0f64;
            for j in 0..f.values.len() {
                let res = (lf.values[j] + k * k * f.values[j]).norm();
                worst = worst.max(res);
            }
            worst
        };
        let r1 = residual(499);
        let r2 = residual(999);
        assert!(r1 < 1e-3, "coarse residual {r1}");
        assert!(r1 / r2 > 3.6, "order < 2: {} vs {}", r1, r2);
    }

    #[test]
    fn cartesian_box_mode_second_order() {
        let l = 5.0;
        let residual = |n: usize| -> f64 {
            let grid =
                Arc::new(Grid::Cartesian(CartesianGrid::build(l, n, [0.0; 3], 0.0).unwrap()));
            let f = discretize(&grid, &Profile::BoxMode { modes: [2, 2, 2] }).unwrap();
            let k = 2.0 * std::f64::consts::PI / (2.0 * l);
            let lam = -3.0 * k * k;
            let lf = apply_laplacian(&f);
            let mut worst = 0.0f64;
            for j in 0..f.values.len() {
                worst = worst.max((lf.values[j] - lam * f.values[j]).norm());
            }
            worst
        };
        let r1 = residual(33);
        let r2 = residual(65);
        assert!(r1 / r2 > 3.6, "order < 2: {} vs {}", r1, r2);
    }

    #[test]
    fn gaussian_quadrature_oracles() {
        // closed-form: int exp(-2|x|^2) = (pi/2)^{3/2}, int exp(-4|x|^2) = (pi/4)^{3/2}
        let grid = free_radial(0.01, 50.0);
        let f = discretize(&grid, &Profile::gaussian(1.0, 1.0)).unwrap();
        let m2 = norm_lp(&f, Lp::P2);
        let m4 = norm_lp(&f, Lp::P4);
        assert_relative_eq!(
            m2,
            (std::f64::consts::PI / 2.0).powf(1.5),
            epsilon = 1e-6
        );
        assert_relative_eq!(
            m4,
            (std::f64::consts::PI / 4.0).powf(1.5),
            epsilon = 1e-6
        );
        assert_eq!(norm_lp(&Field::zeros(grid), Lp::P5), 0.0);
    }

    #[test]
    fn unsupported_exponent_rejected() {
        assert!(Lp::try_from_f64(3.0).is_err());
        assert!(Lp::try_from_f64(2.0).is_ok());
        assert!(Lp::try_from_f64(f64::INFINITY).is_ok());
    }

    #[test]
    fn gaussian_gradient_oracle() {
        // int |grad exp(-|x|^2)|^2 = 3 (pi/2)^{3/2}
        let grid = free_radial(0.01, 50.0);
        let f = discretize(&grid, &Profile::gaussian(1.0, 1.0)).unwrap();
        let k = gradient_norm_sq(&f);
        assert_relative_eq!(
            k,
            3.0 * (std::f64::consts::PI / 2.0).powf(1.5),
            max_relative = 1e-4
        );
    }

    #[test]
    fn eigenmode_gradient_matches_integration_by_parts() {
        // for u = sin(k(r-a))/r vanishing at both ends, ||grad u||^2 = k^2 ||u||^2
        let a = 1.0;
        let r_max = 21.0;
        let k = std::f64::consts::PI / (r_max - a);
        let check = |n: usize| -> f64 {
            let grid = Arc::new(Grid::Radial(RadialGrid::build(a, r_max, n).unwrap()));
            let f = discretize_radial(&grid, |r| {
                Complex64::new((k * (r - a)).sin() / r, 0.0)
            })
            .unwrap();
            let g2 = gradient_norm_sq(&f);
            let m2 = norm_lp(&f, Lp::P2);
            (g2 - k * k * m2).abs() / (k * k * m2)
        };
        let e1 = check(2000);
        let e2 = check(4000);
        assert!(e1 < 2e-3, "e1 = {e1}");
        assert!(e1 / e2 > 1.8, "no first-order improvement: {e1} vs {e2}");
    }

    #[test]
    fn summation_by_parts_refinement() {
        let sbp_gap = |n: usize| -> f64 {
            let grid = Arc::new(Grid::Radial(RadialGrid::build(1.0, 21.0, n).unwrap()));
            let f = discretize_radial(&grid, |r| {
                Complex64::new((-((r - 5.0) / 1.5).powi(2)).exp(), 0.0)
            })
            .unwrap();
            let lf = apply_laplacian(&f);
            let quad = -l2_inner(&lf, &f).re;
            let grad = gradient_norm_sq(&f);
            (quad - grad).abs() / grad
        };
        // The gradient form is the exact quadratic form of the discrete
        // Laplacian, so summation by parts holds to roundoff at any n.
        let g1 = sbp_gap(2000);
        let g2 = sbp_gap(4000);
        assert!(g1 < 1e-12, "SBP gap at n=2000: {g1}");
        assert!(g2 < 1e-12, "SBP gap at n=4000: {g2}");
    }

    #[test]
    fn cartesian_summation_by_parts_exact() {
        let grid =
            Arc::new(Grid::Cartesian(CartesianGrid::build(8.0, 24, [0.0; 3], 1.0).unwrap()));
        let f = discretize_cartesian(&grid, |x| {
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            Complex64::new((-r2 / 4.0).exp(), 0.3 * (-r2 / 5.0).exp())
        })
        .unwrap();
        let lf = apply_laplacian(&f);
        let quad = -l2_inner(&lf, &f).re;
        let grad = gradient_norm_sq(&f);
        assert_relative_eq!(quad, grad, max_relative = 1e-12);
    }

    #[test]
    fn masked_nodes_stay_zero() {
        let grid =
            Arc::new(Grid::Cartesian(CartesianGrid::build(8.0, 24, [0.0; 3], 2.0).unwrap()));
        let f = discretize_cartesian(&grid, |_| Complex64::new(1.0, 0.5)).unwrap();
        let lf = apply_laplacian(&f);
        if let Grid::Cartesian(g) = grid.as_ref() {
            for i in 0..f.values.len() {
                if !g.mask[i] {
                    assert_eq!(f.values[i], Complex64::ZERO);
                    assert_eq!(lf.values[i], Complex64::ZERO);
                }
            }
        }
    }

    #[test]
    fn gaussian_centered_in_obstacle_vanishes_inside() {
        let grid =
            Arc::new(Grid::Cartesian(CartesianGrid::build(8.0, 24, [0.0; 3], 2.0).unwrap()));
        let f = discretize(
            &grid,
            &Profile::Gaussian {
                amplitude: 1.0,
                width: 1.0,
                center: [0.5, 0.0, 0.0],
                chirp: 0.0,
                phase: 0.0,
            },
        )
        .unwrap();
        // zero inside the obstacle, nonzero outside
        if let Grid::Cartesian(g) = grid.as_ref() {
            let mut nonzero = 0;
            for i in 0..f.values.len() {
                if !g.mask[i] {
                    assert_eq!(f.values[i], Complex64::ZERO);
                } else if f.values[i].norm() > 0.0 {
                    nonzero += 1;
                }
            }
            assert!(nonzero > 0);
        }
    }

    #[test]
    fn quadrature_exact_for_constant_support() {
        // Riemann-sum convention: constant 1 on the whole radial grid
        let grid = Arc::new(Grid::Radial(RadialGrid::build(0.0, 1.0, 99).unwrap()));
        let f = discretize_radial(&grid, |_| Complex64::new(1.0, 0.0)).unwrap();
        let got = norm_lp(&f, Lp::P2);
        let expect: f64 = (0..99)
            .map(|j| {
                let r = 0.01 * (j as f64 + 1.0);
                4.0 * std::f64::consts::PI * r * r * 0.01
            })
            .sum();
        assert_relative_eq!(got, expect, max_relative = 1e-13);
    }
}
