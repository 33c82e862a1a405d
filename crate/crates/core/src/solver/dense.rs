//! Dense reference interior-point solver for small conic programs.
//!
//! Primal-dual path following on the homogeneous self-dual embedding
//!
//! ```text
//!   0 = Aᵀy + Gᵀz + cτ
//!   0 = −Ax + bτ
//!   s = −Gx + hτ
//!   κ = −cᵀx − bᵀy − hᵀz
//! ```
//!
//! with Nesterov–Todd scaling on the orthant and second-order cones and a
//! Mehrotra predictor-corrector. The KKT system is factored densely, so the
//! solver is meant for problems of up to a few hundred variables. It shares
//! no code with the Clarabel binding and is used as its test oracle.

use nalgebra::{DMatrix, DVector};

use super::backend::{ConicBackend, RawSolution, RawStatus};
use super::standard::StandardForm;
use crate::error::SolverError;

#[derive(Clone, Debug)]
pub struct DenseIpm {
    pub max_iter: usize,
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub reduced_tol: f64,
    /// Static KKT regularization; iterative refinement removes its effect.
    pub regularization: f64,
}

impl Default for DenseIpm {
    fn default() -> Self {
        DenseIpm {
            max_iter: 120,
            feas_tol: 1e-9,
            gap_tol: 1e-9,
            reduced_tol: 1e-6,
            regularization: 1e-10,
        }
    }
}

/// Layout of `R₊^l × Q^{q1} × …` inside the stacked `s`/`z` vectors.
#[derive(Clone, Debug)]
pub(crate) struct Cones {
    pub nonneg: usize,
    pub socs: Vec<(usize, usize)>,
}

impl Cones {
    pub fn new(nonneg: usize, dims: &[usize]) -> Self {
        let mut start = nonneg;
        let mut socs = Vec::with_capacity(dims.len());
        for &d in dims {
            socs.push((start, d));
            start += d;
        }
        Cones { nonneg, socs }
    }

    /// Degree of the cone (barrier parameter).
    pub fn degree(&self) -> usize {
        self.nonneg + self.socs.len()
    }

    pub fn identity(&self, m: usize) -> DVector<f64> {
        let mut e = DVector::zeros(m);
        for i in 0..self.nonneg {
            e[i] = 1.0;
        }
        for &(st, _) in &self.socs {
            e[st] = 1.0;
        }
        e
    }

    /// Smallest `α` with `r + α·e` on the cone boundary (negative when interior).
    pub fn max_violation(&self, r: &DVector<f64>) -> f64 {
        let mut alpha = f64::NEG_INFINITY;
        for i in 0..self.nonneg {
            alpha = alpha.max(-r[i]);
        }
        for &(st, d) in &self.socs {
            let tail = r.rows(st + 1, d - 1).norm();
            alpha = alpha.max(tail - r[st]);
        }
        alpha
    }

    /// Jordan product `u ∘ v`.
    pub fn product(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(u.len());
        for i in 0..self.nonneg {
            out[i] = u[i] * v[i];
        }
        for &(st, d) in &self.socs {
            let u0 = u[st];
            let v0 = v[st];
            out[st] = u.rows(st, d).dot(&v.rows(st, d));
            for k in 1..d {
                out[st + k] = u0 * v[st + k] + v0 * u[st + k];
            }
        }
        out
    }

    /// Solves `λ ∘ x = d` for `x`.
    pub fn divide(&self, lambda: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(d.len());
        for i in 0..self.nonneg {
            out[i] = d[i] / lambda[i];
        }
        for &(st, dim) in &self.socs {
            let l0 = lambda[st];
            let l1 = lambda.rows(st + 1, dim - 1);
            let d1 = d.rows(st + 1, dim - 1);
            let det = l0 * l0 - l1.norm_squared();
            let x0 = (l0 * d[st] - l1.dot(&d1)) / det;
            out[st] = x0;
            for k in 1..dim {
                out[st + k] = (d[st + k] - x0 * lambda[st + k]) / l0;
            }
        }
        out
    }

    /// Largest step `α ≤ cap` with `x + α·dx` in the cone.
    pub fn max_step(&self, x: &DVector<f64>, dx: &DVector<f64>, cap: f64) -> f64 {
        let mut alpha = cap;
        for i in 0..self.nonneg {
            if dx[i] < 0.0 {
                alpha = alpha.min(-x[i] / dx[i]);
            }
        }
        for &(st, d) in &self.socs {
            alpha = alpha.min(soc_step(x.rows(st, d).as_slice(), dx.rows(st, d).as_slice(), cap));
        }
        alpha.max(0.0)
    }
}

fn soc_step(x: &[f64], dx: &[f64], cap: f64) -> f64 {
    // f(α) = (x0 + α d0)² − ‖x1 + α d1‖² ≥ 0 and x0 + α d0 ≥ 0
    let (x0, d0) = (x[0], dx[0]);
    let a = d0 * d0 - dx[1..].iter().map(|v| v * v).sum::<f64>();
    let b = x0 * d0 - x[1..].iter().zip(&dx[1..]).map(|(p, q)| p * q).sum::<f64>();
    let c = x0 * x0 - x[1..].iter().map(|v| v * v).sum::<f64>();
    let mut alpha = cap;
    if d0 < 0.0 {
        alpha = alpha.min(-x0 / d0);
    }
    let c = c.max(0.0);
    if a.abs() < 1e-300 {
        if b < 0.0 {
            alpha = alpha.min(-c / (2.0 * b));
        }
    } else {
        let disc = b * b - a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            // roots of a α² + 2 b α + c
            let r1 = (-b - sq) / a;
            let r2 = (-b + sq) / a;
            for r in [r1, r2] {
                if r > 0.0 {
                    alpha = alpha.min(r);
                }
            }
        }
    }
    alpha
}

/// Nesterov–Todd scaling of one cone product.
struct SocScaling {
    eta: f64,
    w: Vec<f64>,
}

struct Scaling {
    lp: Vec<f64>,
    soc: Vec<SocScaling>,
}

impl Scaling {
    fn new(cones: &Cones, s: &DVector<f64>, z: &DVector<f64>) -> Scaling {
        let lp = (0..cones.nonneg).map(|i| (s[i] / z[i]).sqrt()).collect();
        let soc = cones
            .socs
            .iter()
            .map(|&(st, d)| {
                let sv = s.rows(st, d);
                let zv = z.rows(st, d);
                let sres = (sv[0] * sv[0] - sv.rows(1, d - 1).norm_squared()).max(1e-300);
                let zres = (zv[0] * zv[0] - zv.rows(1, d - 1).norm_squared()).max(1e-300);
                let sn = sres.sqrt();
                let zn = zres.sqrt();
                let sbar: Vec<f64> = sv.iter().map(|v| v / sn).collect();
                let zbar: Vec<f64> = zv.iter().map(|v| v / zn).collect();
                let dot: f64 = sbar.iter().zip(&zbar).map(|(a, b)| a * b).sum();
                let gamma = ((1.0 + dot) / 2.0).sqrt();
                let mut w = vec![0.0; d];
                w[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
                for k in 1..d {
                    w[k] = (sbar[k] - zbar[k]) / (2.0 * gamma);
                }
                SocScaling { eta: (sres / zres).powf(0.25), w }
            })
            .collect();
        Scaling { lp, soc }
    }

    fn apply(&self, cones: &Cones, v: &DVector<f64>, inverse: bool) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for i in 0..cones.nonneg {
            out[i] = if inverse { v[i] / self.lp[i] } else { v[i] * self.lp[i] };
        }
        for (sc, &(st, d)) in self.soc.iter().zip(&cones.socs) {
            let w0 = sc.w[0];
            let w1 = &sc.w[1..];
            let v0 = v[st];
            let v1: Vec<f64> = (1..d).map(|k| v[st + k]).collect();
            let w1v1: f64 = w1.iter().zip(&v1).map(|(a, b)| a * b).sum();
            if !inverse {
                out[st] = sc.eta * (w0 * v0 + w1v1);
                for k in 1..d {
                    out[st + k] = sc.eta * (v0 * w1[k - 1] + v1[k - 1] + w1v1 / (1.0 + w0) * w1[k - 1]);
                }
            } else {
                out[st] = (w0 * v0 - w1v1) / sc.eta;
                for k in 1..d {
                    out[st + k] =
                        (-v0 * w1[k - 1] + v1[k - 1] + w1v1 / (1.0 + w0) * w1[k - 1]) / sc.eta;
                }
            }
        }
        out
    }

    /// Writes `−W² − δI` into the `(z, z)` block of `kkt` at offset `off`.
    fn fill_kkt_block(&self, cones: &Cones, kkt: &mut DMatrix<f64>, off: usize, delta: f64) {
        for i in 0..cones.nonneg {
            kkt[(off + i, off + i)] = -(self.lp[i] * self.lp[i]) - delta;
        }
        for (sc, &(st, d)) in self.soc.iter().zip(&cones.socs) {
            let e2 = sc.eta * sc.eta;
            for a in 0..d {
                for b in 0..d {
                    let j = if a == b {
                        if a == 0 {
                            1.0
                        } else {
                            -1.0
                        }
                    } else {
                        0.0
                    };
                    kkt[(off + st + a, off + st + b)] = -e2 * (2.0 * sc.w[a] * sc.w[b] - j);
                }
                kkt[(off + st + a, off + st + a)] -= delta;
            }
        }
    }
}

struct Kkt {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    exact: DMatrix<f64>,
}

impl Kkt {
    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let mut x = self.lu.solve(rhs)?;
        for _ in 0..4 {
            let r = rhs - &self.exact * &x;
            if r.amax() <= 1e-14 * (1.0 + rhs.amax()) {
                break;
            }
            let dx = self.lu.solve(&r)?;
            x += dx;
        }
        if x.iter().all(|v| v.is_finite()) {
            Some(x)
        } else {
            None
        }
    }
}

fn dense(rows: &[Vec<(usize, f64)>], ncols: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows.len(), ncols);
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            m[(i, j)] += v;
        }
    }
    m
}

impl DenseIpm {
    fn build_kkt(
        &self,
        a: &DMatrix<f64>,
        g: &DMatrix<f64>,
        scaling: Option<(&Scaling, &Cones)>,
    ) -> Option<Kkt> {
        let (p, n) = a.shape();
        let m = g.nrows();
        let dim = n + p + m;
        let mut k = DMatrix::zeros(dim, dim);
        k.view_mut((0, n), (n, p)).copy_from(&a.transpose());
        k.view_mut((0, n + p), (n, m)).copy_from(&g.transpose());
        k.view_mut((n, 0), (p, n)).copy_from(a);
        k.view_mut((n + p, 0), (m, n)).copy_from(g);
        let mut exact = k.clone();
        match scaling {
            Some((sc, cones)) => {
                sc.fill_kkt_block(cones, &mut exact, n + p, 0.0);
                sc.fill_kkt_block(cones, &mut k, n + p, self.regularization);
            }
            None => {
                for i in 0..m {
                    exact[(n + p + i, n + p + i)] = -1.0;
                    k[(n + p + i, n + p + i)] = -1.0 - self.regularization;
                }
            }
        }
        for i in 0..n {
            k[(i, i)] += self.regularization;
        }
        for i in 0..p {
            k[(n + i, n + i)] -= self.regularization;
        }
        let lu = k.lu();
        Some(Kkt { lu, exact })
    }
}

fn split(v: &DVector<f64>, n: usize, p: usize) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let m = v.len() - n - p;
    (v.rows(0, n).into_owned(), v.rows(n, p).into_owned(), v.rows(n + p, m).into_owned())
}

fn stack(x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(x.len() + y.len() + z.len());
    out.rows_mut(0, x.len()).copy_from(x);
    out.rows_mut(x.len(), y.len()).copy_from(y);
    out.rows_mut(x.len() + y.len(), z.len()).copy_from(z);
    out
}

impl ConicBackend for DenseIpm {
    fn name(&self) -> &'static str {
        "dense"
    }

    fn solve(&self, sf: &StandardForm) -> Result<RawSolution, SolverError> {
        let n = sf.n;
        let p = sf.p();
        let m = sf.m();
        let fail = |msg: String| SolverError::Backend { backend: "dense".into(), message: msg };
        if n + p + m > 4000 {
            return Err(fail(format!("problem too large for dense KKT ({n} vars, {} rows)", p + m)));
        }
        let cones = Cones::new(sf.nonneg, &sf.soc_dims);
        let a = dense(&sf.a, n);
        let g = dense(&sf.g, n);
        let b = DVector::from_column_slice(&sf.b);
        let h = DVector::from_column_slice(&sf.h);
        let c = DVector::from_column_slice(&sf.c);
        let e = cones.identity(m);

        // initial point: least-squares primal / dual, shifted into the cone interior
        let k0 = self.build_kkt(&a, &g, None).ok_or_else(|| fail("singular initial KKT".into()))?;
        let sol_p = k0
            .solve(&stack(&DVector::zeros(n), &b, &h))
            .ok_or_else(|| fail("initial primal solve failed".into()))?;
        let (mut x, _, zp) = split(&sol_p, n, p);
        let mut s = -zp;
        let shift = cones.max_violation(&s);
        if shift >= -1e-8 {
            s += &e * (1.0 + shift);
        }
        let sol_d = k0
            .solve(&stack(&(-&c), &DVector::zeros(p), &DVector::zeros(m)))
            .ok_or_else(|| fail("initial dual solve failed".into()))?;
        let (_, mut y, mut z) = split(&sol_d, n, p);
        let shift = cones.max_violation(&z);
        if shift >= -1e-8 {
            z += &e * (1.0 + shift);
        }
        let mut tau = 1.0_f64;
        let mut kappa = 1.0_f64;
        let degree = cones.degree() as f64;

        let bnorm = b.norm().max(1.0);
        let hnorm = h.norm().max(1.0);
        let cnorm = c.norm().max(1.0);

        let mut best: Option<(f64, RawSolution)> = None;
        for it in 0..self.max_iter {
            let rx = a.transpose() * &y + g.transpose() * &z + &c * tau;
            let ry = -(&a * &x) + &b * tau;
            let rz = -(&g * &x) + &h * tau - &s;
            let pobj = c.dot(&x);
            let dobj = -(b.dot(&y) + h.dot(&z));
            let rt = -pobj + dobj - kappa;

            let pres = (ry.norm() / bnorm).max(rz.norm() / hnorm) / tau;
            let dres = rx.norm() / cnorm / tau;
            let gap = s.dot(&z) / (tau * tau);
            let pcost = pobj / tau;
            let dcost = dobj / tau;
            let relgap = (pcost - dcost).abs() / pcost.abs().max(dcost.abs()).max(1.0);

            let make = |status, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>, s: &DVector<f64>, scale: f64, reduced| RawSolution {
                status,
                x: (x / scale).iter().copied().collect(),
                y: (y / scale).iter().copied().collect(),
                z: (z / scale).iter().copied().collect(),
                s: (s / scale).iter().copied().collect(),
                primal_objective: pobj / scale + sf.c0,
                dual_objective: dobj / scale + sf.c0,
                iterations: it as u32,
                reduced_accuracy: reduced,
            };

            if pres < self.feas_tol && dres < self.feas_tol && (gap < self.gap_tol || relgap < self.gap_tol) {
                return Ok(make(RawStatus::Optimal, &x, &y, &z, &s, tau, false));
            }
            // certificates
            let hz_by = h.dot(&z) + b.dot(&y);
            if hz_by < -1e-12 {
                let res = (a.transpose() * &y + g.transpose() * &z).norm() / (-hz_by);
                if res < self.feas_tol * cnorm.max(1.0) && tau < kappa {
                    return Ok(make(RawStatus::PrimalInfeasible, &x, &y, &z, &s, -hz_by, false));
                }
            }
            if pobj < -1e-12 {
                let res = (&a * &x).norm().max((&g * &x + &s).norm()) / (-pobj);
                if res < self.feas_tol * bnorm.max(hnorm) && tau < kappa {
                    return Ok(make(RawStatus::DualInfeasible, &x, &y, &z, &s, -pobj, false));
                }
            }
            // remember the best reduced-accuracy iterate in case progress stalls
            if pres < self.reduced_tol && dres < self.reduced_tol && relgap < self.reduced_tol {
                let score = pres.max(dres).max(relgap);
                if best.as_ref().is_none_or(|(b, _)| score < *b) {
                    best = Some((score, make(RawStatus::Optimal, &x, &y, &z, &s, tau, true)));
                }
            }

            let scaling = Scaling::new(&cones, &s, &z);
            let lambda = scaling.apply(&cones, &z, false);
            let mu = (s.dot(&z) + tau * kappa) / (degree + 1.0);
            let kkt = match self.build_kkt(&a, &g, Some((&scaling, &cones))) {
                Some(k) => k,
                None => break,
            };
            let Some(sol1) = kkt.solve(&stack(&(-&c), &b, &h)) else { break };
            let (x1, y1, z1) = split(&sol1, n, p);

            // Newton direction for complementarity targets ds (cone) and dk (τκ)
            let direction = |sigma: f64, ds: &DVector<f64>, dk: f64| -> Option<_> {
                let f = 1.0 - sigma;
                let dx_r = -&rx * f;
                let dy_r = -&ry * f;
                let dz_r = -&rz * f;
                let dt_r = -rt * f;
                let l_ds = cones.divide(&lambda, ds);
                let w_lds = scaling.apply(&cones, &l_ds, false);
                let rhs = stack(&dx_r, &(-&dy_r), &(-&dz_r - &w_lds));
                let sol2 = kkt.solve(&rhs)?;
                let (x2, y2, z2) = split(&sol2, n, p);
                let num = dt_r + c.dot(&x2) + b.dot(&y2) + h.dot(&z2) + dk / tau;
                let den = kappa / tau - c.dot(&x1) - b.dot(&y1) - h.dot(&z1);
                let dtau = num / den;
                let dx = &x2 + &x1 * dtau;
                let dy = &y2 + &y1 * dtau;
                let dz = &z2 + &z1 * dtau;
                let dkappa = (dk - kappa * dtau) / tau;
                let wdz = scaling.apply(&cones, &dz, false);
                let ds_vec = scaling.apply(&cones, &(&l_ds - &wdz), false);
                Some((dx, dy, dz, ds_vec, dtau, dkappa))
            };
            let step_len = |dz: &DVector<f64>, ds: &DVector<f64>, dtau: f64, dkappa: f64| {
                let mut alpha = cones.max_step(&s, ds, 1.0).min(cones.max_step(&z, dz, 1.0));
                if dtau < 0.0 {
                    alpha = alpha.min(-tau / dtau);
                }
                if dkappa < 0.0 {
                    alpha = alpha.min(-kappa / dkappa);
                }
                alpha
            };

            // predictor
            let ds_aff = -cones.product(&lambda, &lambda);
            let Some((_, _, dz_a, ds_a, dtau_a, dkappa_a)) = direction(0.0, &ds_aff, -tau * kappa) else { break };
            let alpha_a = step_len(&dz_a, &ds_a, dtau_a, dkappa_a);
            let sigma = (1.0 - alpha_a).powi(3).clamp(0.0, 1.0);

            // corrector
            let winv_ds = scaling.apply(&cones, &ds_a, true);
            let w_dz = scaling.apply(&cones, &dz_a, false);
            let ds_c = -cones.product(&lambda, &lambda) - cones.product(&winv_ds, &w_dz) + &e * (sigma * mu);
            let dk_c = -tau * kappa - dtau_a * dkappa_a + sigma * mu;
            let Some((dx, dy, dz, ds, dtau, dkappa)) = direction(sigma, &ds_c, dk_c) else { break };
            let alpha = (0.99 * step_len(&dz, &ds, dtau, dkappa)).min(1.0);
            if alpha < 1e-12 {
                break;
            }
            x += &dx * alpha;
            y += &dy * alpha;
            z += &dz * alpha;
            s += &ds * alpha;
            tau += dtau * alpha;
            kappa += dkappa * alpha;
            if !(tau.is_finite() && kappa.is_finite()) || tau <= 0.0 {
                break;
            }
            // keep the embedding from drifting to huge scales
            let scale = tau.max(kappa);
            if scale > 1e8 {
                x /= scale;
                y /= scale;
                z /= scale;
                s /= scale;
                tau /= scale;
                kappa /= scale;
            }
        }
        match best {
            Some((_, sol)) => Ok(sol),
            None => Err(fail("no convergence within iteration limit".into())),
        }
    }
}
