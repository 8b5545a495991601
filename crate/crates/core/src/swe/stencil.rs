//! Turkel-Zwas tendency, its tangent linearization and adjoint.
//!
//! Notation per grid point `(i, j)` (longitude, latitude): `c = cos θ_j`,
//! `t = tan θ_j`, `F_j(x) = f_j + x t_j / a`, `Δx φ = φ[i+1] − φ[i−1]`,
//! `Δy φ = φ[j+1] − φ[j−1]`, and the coarse differences
//!
//! ```text
//! Du = (1−α)(u[i+p,j] − u[i−p,j]) + α/2 (u[i+p,j+q] − u[i−p,j+q] + u[i+p,j−q] − u[i−p,j−q])
//! Dv = (1−α)(v[i,j+q]c₊ − v[i,j−q]c₋) + α/2 (v[i+p,j+q]c₊ − v[i+p,j−q]c₋)
//!                                      + α/2 (v[i−p,j+q]c₊ − v[i−p,j−q]c₋)
//! ```
//!
//! The tendencies are
//!
//! ```text
//! U = −σx u/c Δx u − σy v Δy u − σx g/(p c) (h[i+p] − h[i−p])
//!     + K [(1−α) F_j(u) v + α/2 F_j(u[i+p]) v[i+p] + α/2 F_j(u[i−p]) v[i−p]]
//! V = −σx u/c Δx v − σy v Δy X − σy g/q (h[j+q] − h[j−q])
//!     − K [(1−α) F_j(u) u + α/2 F_{j+q}(u[j+q]) u[j+q] + α/2 F_{j−q}(u[j−q]) u[j−q]]
//! H = −A { sx u/c Δx h + sy v Δy h + sx/(p c) h Du + sy/q Y Dv }
//! ```
//!
//! Consistent variant: `K = 1`, `X = v`, `A = 1`, `sx = σx`, `sy = σy`,
//! `Y = h/c`. Literal variant: `K = 2`, `X = u`, `A = α`, `sx = sy = 1`,
//! `Y = 1`. Latitude indices are clamped to the grid, longitudes wrap.

use super::params::{StencilVariant, SweParams};
use crate::spacetime::SpaceTimeGrid;

/// Precomputed geometry and coefficients of the discrete operator.
#[derive(Debug, Clone)]
pub struct Stencil {
    nx: usize,
    ny: usize,
    p: usize,
    q: usize,
    alpha: f64,
    g: f64,
    a: f64,
    sx: f64,
    sy: f64,
    cos: Vec<f64>,
    tan: Vec<f64>,
    f: Vec<f64>,
    k_cor: f64,
    x_is_u: bool,
    a_h: f64,
    sx_h: f64,
    sy_h: f64,
    y_uses_h: bool,
}

#[derive(Clone, Copy)]
struct Rows {
    jp1: usize,
    jm1: usize,
    jpq: usize,
    jmq: usize,
}

impl Stencil {
    pub fn new(grid: &SpaceTimeGrid, params: &SweParams) -> Self {
        let lat: Vec<f64> = (0..grid.nlat).map(|j| grid.latitude(j)).collect();
        let sx = params.sigma_lon(grid);
        let sy = params.sigma_lat(grid);
        let (k_cor, x_is_u, a_h, sx_h, sy_h, y_uses_h) = match params.variant {
            StencilVariant::Consistent => (1.0, false, 1.0, sx, sy, true),
            StencilVariant::Literal => (2.0, true, params.alpha_tz, 1.0, 1.0, false),
        };
        Stencil {
            nx: grid.nlon,
            ny: grid.nlat,
            p: params.p_tz,
            q: params.q_tz,
            alpha: params.alpha_tz,
            g: params.g,
            a: params.a,
            sx,
            sy,
            cos: lat.iter().map(|t| t.cos()).collect(),
            tan: lat.iter().map(|t| t.tan()).collect(),
            f: lat.iter().map(|&t| params.coriolis(t)).collect(),
            k_cor,
            x_is_u,
            a_h,
            sx_h,
            sy_h,
            y_uses_h,
        }
    }

    pub fn len(&self) -> usize {
        3 * self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    fn rows(&self, j: usize) -> Rows {
        let top = self.ny - 1;
        let jp1 = (j + 1).min(top);
        let jm1 = j.saturating_sub(1);
        let jpq = (j + self.q).min(top);
        let jmq = j.saturating_sub(self.q);
        Rows { jp1, jm1, jpq, jmq }
    }

    #[inline]
    fn cols(&self, i: usize) -> [usize; 4] {
        let nx = self.nx;
        [
            (i + 1) % nx,
            (i + nx - 1) % nx,
            (i + self.p) % nx,
            (i + nx - self.p) % nx,
        ]
    }

    /// Coarse zonal difference of `u` (the `Du` term).
    #[inline]
    fn du(&self, u: &[f64], r: Rows, ipp: usize, imp: usize, j: usize) -> f64 {
        let nx = self.nx;
        let a = self.alpha;
        (1.0 - a) * (u[j * nx + ipp] - u[j * nx + imp])
            + 0.5
                * a
                * (u[r.jpq * nx + ipp] - u[r.jpq * nx + imp] + u[r.jmq * nx + ipp]
                    - u[r.jmq * nx + imp])
    }

    /// Coarse meridional difference of `v cos θ` (the `Dv` term).
    #[inline]
    fn dv(&self, v: &[f64], r: Rows, i: usize, ipp: usize, imp: usize) -> f64 {
        let nx = self.nx;
        let a = self.alpha;
        let cp = self.cos[r.jpq];
        let cm = self.cos[r.jmq];
        (1.0 - a) * (v[r.jpq * nx + i] * cp - v[r.jmq * nx + i] * cm)
            + 0.5 * a * (v[r.jpq * nx + ipp] * cp - v[r.jmq * nx + ipp] * cm)
            + 0.5 * a * (v[r.jpq * nx + imp] * cp - v[r.jmq * nx + imp] * cm)
    }

    /// Evaluate the tendency `(U, V, H)` of state `z` into `out`.
    pub fn tendency(&self, z: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        let n = nx * ny;
        let (u, rest) = z.split_at(n);
        let (v, h) = rest.split_at(n);
        let x = if self.x_is_u { u } else { v };
        let (ou, rest) = out.split_at_mut(n);
        let (ov, oh) = rest.split_at_mut(n);
        let al = self.alpha;
        for j in 0..ny {
            let r = self.rows(j);
            let c = self.cos[j];
            let t = self.tan[j];
            let fj = self.f[j];
            for i in 0..nx {
                let [ip1, im1, ipp, imp] = self.cols(i);
                let k = j * nx + i;
                let (uk, vk, hk) = (u[k], v[k], h[k]);
                let fu = |kk: usize| fj + u[kk] * t / self.a;

                ou[k] = -self.sx * uk / c * (u[j * nx + ip1] - u[j * nx + im1])
                    - self.sy * vk * (u[r.jp1 * nx + i] - u[r.jm1 * nx + i])
                    - self.sx * self.g / (self.p as f64 * c) * (h[j * nx + ipp] - h[j * nx + imp])
                    + self.k_cor
                        * ((1.0 - al) * fu(k) * vk
                            + 0.5 * al * fu(j * nx + ipp) * v[j * nx + ipp]
                            + 0.5 * al * fu(j * nx + imp) * v[j * nx + imp]);

                let kp = r.jpq * nx + i;
                let km = r.jmq * nx + i;
                let fp = self.f[r.jpq] + u[kp] * self.tan[r.jpq] / self.a;
                let fm = self.f[r.jmq] + u[km] * self.tan[r.jmq] / self.a;
                ov[k] = -self.sx * uk / c * (v[j * nx + ip1] - v[j * nx + im1])
                    - self.sy * vk * (x[r.jp1 * nx + i] - x[r.jm1 * nx + i])
                    - self.sy * self.g / self.q as f64 * (h[kp] - h[km])
                    - self.k_cor
                        * ((1.0 - al) * fu(k) * uk + 0.5 * al * fp * u[kp] + 0.5 * al * fm * u[km]);

                let y = if self.y_uses_h { hk / c } else { 1.0 };
                oh[k] = -self.a_h
                    * (self.sx_h * uk / c * (h[j * nx + ip1] - h[j * nx + im1])
                        + self.sy_h * vk * (h[r.jp1 * nx + i] - h[r.jm1 * nx + i])
                        + self.sx_h / (self.p as f64 * c) * hk * self.du(u, r, ipp, imp, j)
                        + self.sy_h / self.q as f64 * y * self.dv(v, r, i, ipp, imp));
            }
        }
    }

    /// Tangent-linear tendency: `out = T'(z) dz`.
    pub fn tendency_tlm(&self, z: &[f64], dz: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        let n = nx * ny;
        let (u, rest) = z.split_at(n);
        let (v, h) = rest.split_at(n);
        let (du, rest) = dz.split_at(n);
        let (dv, dh) = rest.split_at(n);
        let x = if self.x_is_u { u } else { v };
        let dx = if self.x_is_u { du } else { dv };
        let (ou, rest) = out.split_at_mut(n);
        let (ov, oh) = rest.split_at_mut(n);
        let al = self.alpha;
        let ia = 1.0 / self.a;
        for j in 0..ny {
            let r = self.rows(j);
            let c = self.cos[j];
            let t = self.tan[j];
            let fj = self.f[j];
            for i in 0..nx {
                let [ip1, im1, ipp, imp] = self.cols(i);
                let k = j * nx + i;
                let (kx1, kx0) = (j * nx + ip1, j * nx + im1);
                let (ky1, ky0) = (r.jp1 * nx + i, r.jm1 * nx + i);
                let (kpp, kmp) = (j * nx + ipp, j * nx + imp);
                let (uk, vk, hk) = (u[k], v[k], h[k]);
                let cor = |kk: usize| (du[kk] * t * ia) * v[kk] + (fj + u[kk] * t * ia) * dv[kk];

                ou[k] = -self.sx / c * (du[k] * (u[kx1] - u[kx0]) + uk * (du[kx1] - du[kx0]))
                    - self.sy * (dv[k] * (u[ky1] - u[ky0]) + vk * (du[ky1] - du[ky0]))
                    - self.sx * self.g / (self.p as f64 * c) * (dh[kpp] - dh[kmp])
                    + self.k_cor
                        * ((1.0 - al) * cor(k) + 0.5 * al * cor(kpp) + 0.5 * al * cor(kmp));

                let kp = r.jpq * nx + i;
                let km = r.jmq * nx + i;
                let gp = self.f[r.jpq] + 2.0 * u[kp] * self.tan[r.jpq] * ia;
                let gm = self.f[r.jmq] + 2.0 * u[km] * self.tan[r.jmq] * ia;
                let g0 = fj + 2.0 * uk * t * ia;
                ov[k] = -self.sx / c * (du[k] * (v[kx1] - v[kx0]) + uk * (dv[kx1] - dv[kx0]))
                    - self.sy * (dv[k] * (x[ky1] - x[ky0]) + vk * (dx[ky1] - dx[ky0]))
                    - self.sy * self.g / self.q as f64 * (dh[kp] - dh[km])
                    - self.k_cor
                        * ((1.0 - al) * g0 * du[k]
                            + 0.5 * al * gp * du[kp]
                            + 0.5 * al * gm * du[km]);

                let (y, dy) = if self.y_uses_h {
                    (hk / c, dh[k] / c)
                } else {
                    (1.0, 0.0)
                };
                let dcoarse_u = self.du(u, r, ipp, imp, j);
                let dcoarse_v = self.dv(v, r, i, ipp, imp);
                oh[k] = -self.a_h
                    * (self.sx_h / c * (du[k] * (h[kx1] - h[kx0]) + uk * (dh[kx1] - dh[kx0]))
                        + self.sy_h * (dv[k] * (h[ky1] - h[ky0]) + vk * (dh[ky1] - dh[ky0]))
                        + self.sx_h / (self.p as f64 * c)
                            * (dh[k] * dcoarse_u + hk * self.du(du, r, ipp, imp, j))
                        + self.sy_h / self.q as f64
                            * (dy * dcoarse_v + y * self.dv(dv, r, i, ipp, imp)));
            }
        }
    }

    /// Adjoint tendency: `acc += T'(z)ᵀ w`.
    pub fn tendency_adj(&self, z: &[f64], w: &[f64], acc: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        let n = nx * ny;
        let (u, rest) = z.split_at(n);
        let (v, h) = rest.split_at(n);
        let x = if self.x_is_u { u } else { v };
        let (wu, rest) = w.split_at(n);
        let (wv, wh) = rest.split_at(n);
        // Adjoint accumulators for u, v, h; the meridional advection target
        // in V is either u or v depending on the variant.
        let (bu, rest) = acc.split_at_mut(n);
        let (bv, bh) = rest.split_at_mut(n);
        let al = self.alpha;
        let ia = 1.0 / self.a;
        for j in 0..ny {
            let r = self.rows(j);
            let c = self.cos[j];
            let t = self.tan[j];
            let fj = self.f[j];
            let cp = self.cos[r.jpq];
            let cm = self.cos[r.jmq];
            for i in 0..nx {
                let [ip1, im1, ipp, imp] = self.cols(i);
                let k = j * nx + i;
                let (kx1, kx0) = (j * nx + ip1, j * nx + im1);
                let (ky1, ky0) = (r.jp1 * nx + i, r.jm1 * nx + i);
                let (kpp, kmp) = (j * nx + ipp, j * nx + imp);
                let (uk, vk, hk) = (u[k], v[k], h[k]);

                // U
                let a = wu[k];
                let t1 = -self.sx / c * a;
                bu[k] += t1 * (u[kx1] - u[kx0]);
                bu[kx1] += t1 * uk;
                bu[kx0] -= t1 * uk;
                let t2 = -self.sy * a;
                bv[k] += t2 * (u[ky1] - u[ky0]);
                bu[ky1] += t2 * vk;
                bu[ky0] -= t2 * vk;
                let t3 = -self.sx * self.g / (self.p as f64 * c) * a;
                bh[kpp] += t3;
                bh[kmp] -= t3;
                for (kk, wgt) in [(k, 1.0 - al), (kpp, 0.5 * al), (kmp, 0.5 * al)] {
                    let s = self.k_cor * wgt * a;
                    bu[kk] += s * t * ia * v[kk];
                    bv[kk] += s * (fj + u[kk] * t * ia);
                }

                // V
                let a = wv[k];
                let t1 = -self.sx / c * a;
                bu[k] += t1 * (v[kx1] - v[kx0]);
                bv[kx1] += t1 * uk;
                bv[kx0] -= t1 * uk;
                let t2 = -self.sy * a;
                bv[k] += t2 * (x[ky1] - x[ky0]);
                if self.x_is_u {
                    bu[ky1] += t2 * vk;
                    bu[ky0] -= t2 * vk;
                } else {
                    bv[ky1] += t2 * vk;
                    bv[ky0] -= t2 * vk;
                }
                let kp = r.jpq * nx + i;
                let km = r.jmq * nx + i;
                let t3 = -self.sy * self.g / self.q as f64 * a;
                bh[kp] += t3;
                bh[km] -= t3;
                let s = -self.k_cor * a;
                bu[k] += s * (1.0 - al) * (fj + 2.0 * uk * t * ia);
                bu[kp] += s * 0.5 * al * (self.f[r.jpq] + 2.0 * u[kp] * self.tan[r.jpq] * ia);
                bu[km] += s * 0.5 * al * (self.f[r.jmq] + 2.0 * u[km] * self.tan[r.jmq] * ia);

                // H
                let a = -self.a_h * wh[k];
                let e1 = a * self.sx_h / c;
                bu[k] += e1 * (h[kx1] - h[kx0]);
                bh[kx1] += e1 * uk;
                bh[kx0] -= e1 * uk;
                let e2 = a * self.sy_h;
                bv[k] += e2 * (h[ky1] - h[ky0]);
                bh[ky1] += e2 * vk;
                bh[ky0] -= e2 * vk;
                let e3 = a * self.sx_h / (self.p as f64 * c);
                bh[k] += e3 * self.du(u, r, ipp, imp, j);
                let c0 = e3 * hk * (1.0 - al);
                bu[kpp] += c0;
                bu[kmp] -= c0;
                let c1 = e3 * hk * 0.5 * al;
                bu[r.jpq * nx + ipp] += c1;
                bu[r.jpq * nx + imp] -= c1;
                bu[r.jmq * nx + ipp] += c1;
                bu[r.jmq * nx + imp] -= c1;
                let e4 = a * self.sy_h / self.q as f64;
                let y = if self.y_uses_h {
                    bh[k] += e4 * self.dv(v, r, i, ipp, imp) / c;
                    hk / c
                } else {
                    1.0
                };
                let d0 = e4 * y * (1.0 - al);
                bv[r.jpq * nx + i] += d0 * cp;
                bv[r.jmq * nx + i] -= d0 * cm;
                let d1 = e4 * y * 0.5 * al;
                bv[r.jpq * nx + ipp] += d1 * cp;
                bv[r.jmq * nx + ipp] -= d1 * cm;
                bv[r.jpq * nx + imp] += d1 * cp;
                bv[r.jmq * nx + imp] -= d1 * cm;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(variant: StencilVariant) -> (SpaceTimeGrid, Stencil) {
        let g = SpaceTimeGrid::uniform(8, 7, 1, 600.0).unwrap();
        let mut p = SweParams::for_grid(&g);
        p.variant = variant;
        (g, Stencil::new(&g, &p))
    }

    fn random_state(g: &SpaceTimeGrid, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = g.points();
        (0..3 * n)
            .map(|k| {
                let r: f64 = rng.random_range(-1.0..1.0);
                if k < 2 * n {
                    10.0 * r
                } else {
                    1000.0 + 50.0 * r
                }
            })
            .collect()
    }

    #[test]
    fn rest_state_has_zero_tendency() {
        for variant in [StencilVariant::Consistent, StencilVariant::Literal] {
            let (g, s) = setup(variant);
            let mut z = vec![0.0; g.state_len()];
            z[2 * g.points()..].iter_mut().for_each(|h| *h = 1234.5);
            let mut out = vec![1.0; g.state_len()];
            s.tendency(&z, &mut out);
            assert!(out.iter().all(|&o| o == 0.0));
        }
    }

    #[test]
    fn height_impulse_reaches_p_columns() {
        let (g, s) = setup(StencilVariant::Consistent);
        let n = g.points();
        let mut z = vec![0.0; g.state_len()];
        z[2 * n..].iter_mut().for_each(|h| *h = 100.0);
        let (i0, j0) = (3, 3);
        z[2 * n + j0 * g.nlon + i0] += 1.0;
        let mut out = vec![0.0; g.state_len()];
        s.tendency(&z, &mut out);
        for j in 0..g.nlat {
            for i in 0..g.nlon {
                let nonzero = out[j * g.nlon + i] != 0.0;
                let expected = j == j0 && (i == i0 + 2 || i == i0 - 2);
                assert_eq!(nonzero, expected, "U at ({i},{j})");
            }
        }
    }

    fn tlm_adj_dot(variant: StencilVariant) {
        let (g, s) = setup(variant);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let z = random_state(&g, &mut rng);
        for _ in 0..5 {
            let dx: Vec<f64> = (0..g.state_len())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let dy: Vec<f64> = (0..g.state_len())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let mut tx = vec![0.0; g.state_len()];
            s.tendency_tlm(&z, &dx, &mut tx);
            let mut ay = vec![0.0; g.state_len()];
            s.tendency_adj(&z, &dy, &mut ay);
            let lhs: f64 = dy.iter().zip(&tx).map(|(a, b)| a * b).sum();
            let rhs: f64 = ay.iter().zip(&dx).map(|(a, b)| a * b).sum();
            let scale = tx.iter().map(|v| v * v).sum::<f64>().sqrt()
                * dy.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((lhs - rhs).abs() <= 1e-13 * scale, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn tendency_adjoint_matches_tlm() {
        tlm_adj_dot(StencilVariant::Consistent);
        tlm_adj_dot(StencilVariant::Literal);
    }

    fn tlm_matches_fd(variant: StencilVariant) {
        let (g, s) = setup(variant);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let z = random_state(&g, &mut rng);
        let d: Vec<f64> = (0..g.state_len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let mut t_lin = vec![0.0; g.state_len()];
        s.tendency_tlm(&z, &d, &mut t_lin);
        let eps = 1e-3;
        let shifted = |sign: f64| {
            let zz: Vec<f64> = z.iter().zip(&d).map(|(a, b)| a + sign * eps * b).collect();
            let mut o = vec![0.0; g.state_len()];
            s.tendency(&zz, &mut o);
            o
        };
        let (tp, tm) = (shifted(1.0), shifted(-1.0));
        let norm = t_lin.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..g.state_len() {
            let fd = (tp[k] - tm[k]) / (2.0 * eps);
            assert!(
                (fd - t_lin[k]).abs() <= 1e-7 * norm,
                "entry {k}: {fd} vs {}",
                t_lin[k]
            );
        }
    }

    #[test]
    fn tendency_tlm_matches_centered_difference() {
        tlm_matches_fd(StencilVariant::Consistent);
        tlm_matches_fd(StencilVariant::Literal);
    }
}
