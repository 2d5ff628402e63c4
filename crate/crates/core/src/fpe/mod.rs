//! Probability densities: finite-volume Fokker–Planck solvers on 1D grids,
//! the analytic stationary and late-time densities, and log-density lookup.

mod asymptotic;
mod elliptic;
mod field;
mod stationary;

pub use asymptotic::AsymptoticPdf;
pub use elliptic::{complete_elliptic_e, complete_elliptic_e_series};
pub use field::{PdfField, LN_FLOOR_DENSITY};
pub use stationary::{stationary_moments, stationary_theta_pdf, StationaryMoments, StationaryThetaPdf};

use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::num::Real;
use crate::sde::{wrap_into, ItoProcess};

/// Negative densities above this magnitude abort a solve.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    /// Closed interval with nodes on both ends.
    Bounded,
    /// `[−L, L]` standing in for the real line; nodes on both ends.
    TruncatedLine,
    /// Circle; the node at `hi` is identified with the one at `lo`.
    Periodic,
}

impl GridKind {
    fn code(self) -> u8 {
        match self {
            GridKind::Bounded => 0,
            GridKind::TruncatedLine => 1,
            GridKind::Periodic => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(GridKind::Bounded),
            1 => Ok(GridKind::TruncatedLine),
            2 => Ok(GridKind::Periodic),
            _ => Err(QsdError::Format(format!("unknown grid kind {c}"))),
        }
    }
}

/// Uniform 1D grid. Non-periodic grids put nodes on both ends and give the
/// two end nodes half-width cells; periodic grids have `n` full cells with
/// nodes at `lo + i·h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D<T> {
    pub kind: GridKind,
    pub lo: T,
    pub hi: T,
    pub n: usize,
}

impl<T: Real> Grid1D<T> {
    pub fn new(kind: GridKind, lo: T, hi: T, n: usize) -> Result<Self> {
        if n < 16 {
            return Err(QsdError::InvalidParameter(format!(
                "grid needs at least 16 nodes, got {n}"
            )));
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(QsdError::InvalidParameter(format!(
                "grid bounds [{lo}, {hi}] are not an interval"
            )));
        }
        Ok(Self { kind, lo, hi, n })
    }

    pub fn bounded(lo: T, hi: T, n: usize) -> Result<Self> {
        Self::new(GridKind::Bounded, lo, hi, n)
    }

    pub fn truncated_line(half_width: T, n: usize) -> Result<Self> {
        Self::new(GridKind::TruncatedLine, -half_width, half_width, n)
    }

    /// Circle `(−π, π]`.
    pub fn periodic(n: usize) -> Result<Self> {
        Self::new(GridKind::Periodic, -T::PI(), T::PI(), n)
    }

    pub fn span(&self) -> T {
        self.hi - self.lo
    }

    pub fn spacing(&self) -> T {
        match self.kind {
            GridKind::Periodic => self.span() / T::from_usize(self.n).unwrap(),
            _ => self.span() / T::from_usize(self.n - 1).unwrap(),
        }
    }

    pub fn node(&self, i: usize) -> T {
        self.lo + T::from_usize(i).unwrap() * self.spacing()
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Width of the control volume around node `i`.
    pub fn cell_width(&self, i: usize) -> T {
        let h = self.spacing();
        match self.kind {
            GridKind::Periodic => h,
            _ if i == 0 || i + 1 == self.n => T::lit(0.5) * h,
            _ => h,
        }
    }

    /// `Σ f(x_i) p_i w_i`.
    pub fn integrate_with<F: FnMut(T) -> T>(&self, p: &[T], mut f: F) -> T {
        p.iter()
            .enumerate()
            .map(|(i, &v)| f(self.node(i)) * v * self.cell_width(i))
            .sum()
    }

    pub fn mass(&self, p: &[T]) -> T {
        self.integrate_with(p, |_| T::one())
    }

    pub fn mean(&self, p: &[T]) -> T {
        self.integrate_with(p, |x| x)
    }

    /// Half the L¹ distance between the discrete density `p` and `q`.
    pub fn total_variation<F: FnMut(T) -> T>(&self, p: &[T], mut q: F) -> T {
        T::lit(0.5)
            * p.iter()
                .enumerate()
                .map(|(i, &v)| (v - q(self.node(i))).abs() * self.cell_width(i))
                .sum::<T>()
    }

    /// Locates `x`: returns `(i, w)` with `x = (1 − w)·x_i + w·x_{i+1}`
    /// (indices taken modulo `n` on periodic grids).
    pub fn locate(&self, x: T) -> Option<(usize, T)> {
        let h = self.spacing();
        match self.kind {
            GridKind::Periodic => {
                let x = wrap_into(x, self.lo, self.hi);
                let s = (x - self.lo) / h;
                let i = s.floor();
                let w = s - i;
                let i = i.to_usize().unwrap_or(0) % self.n;
                Some((i, w))
            }
            _ => {
                let slack = h * T::lit(1e-9);
                if x < self.lo - slack || x > self.hi + slack {
                    return None;
                }
                let s = ((x - self.lo) / h).max(T::zero());
                let i = s.floor().to_usize().unwrap_or(0).min(self.n - 2);
                let w = (s - T::from_usize(i).unwrap()).min(T::one());
                Some((i, w))
            }
        }
    }

    fn next(&self, i: usize) -> usize {
        if self.kind == GridKind::Periodic {
            (i + 1) % self.n
        } else {
            i + 1
        }
    }

    /// Normalized gaussian sampled on the nodes (renormalized discretely).
    pub fn gaussian(&self, mean: T, sigma: T) -> Result<Vec<T>> {
        if !(sigma > T::zero()) {
            return Err(QsdError::InvalidParameter(format!(
                "gaussian width must be positive, got {sigma}"
            )));
        }
        let p: Vec<T> = self
            .nodes()
            .into_iter()
            .map(|x| {
                let d = if self.kind == GridKind::Periodic {
                    wrap_into(x - mean, -T::PI(), T::PI())
                } else {
                    x - mean
                };
                (-(d * d) / (T::lit(2.0) * sigma * sigma)).exp()
            })
            .collect();
        self.normalized(p)
    }

    /// Uniform density.
    pub fn uniform(&self) -> Vec<T> {
        vec![T::one() / self.span(); self.n]
    }

    /// Samples `f` on the nodes and rescales to unit mass.
    pub fn sample_density<F: FnMut(T) -> T>(&self, mut f: F) -> Result<Vec<T>> {
        let p = self.nodes().into_iter().map(&mut f).collect();
        self.normalized(p)
    }

    fn normalized(&self, mut p: Vec<T>) -> Result<Vec<T>> {
        let m = self.mass(&p);
        if !(m > T::zero()) || !m.is_finite() {
            return Err(QsdError::InvalidParameter(
                "density has no mass on the grid".into(),
            ));
        }
        for v in &mut p {
            *v = *v / m;
        }
        Ok(p)
    }
}

/// Solver controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpeOptions {
    /// Fraction of the explicit stability bound used as the sub-step.
    pub cfl_safety: f64,
    /// Upper limit on sub-steps per stored step.
    pub max_substeps: usize,
}

impl Default for FpeOptions {
    fn default() -> Self {
        Self {
            cfl_safety: 0.9,
            max_substeps: 1_000_000,
        }
    }
}

/// Evolves `initial` under `∂p/∂t = −∂J/∂x`, `J = A p − ∂(D p)/∂x`, storing a
/// slice every `dt_store` until `t0 + horizon`.
///
/// Fluxes live on cell faces with central averages of `A p` and a centred
/// difference of `D p`; time stepping is explicit Euler with the sub-step
/// chosen from `h² / (2 max D + h max |A|)`. Walls are zero-flux, periodic
/// grids wrap.
pub fn evolve_fpe<T: Real, P: ItoProcess<T, 1> + ?Sized>(
    process: &P,
    grid: &Grid1D<T>,
    initial: &[T],
    t0: T,
    horizon: T,
    dt_store: T,
    options: FpeOptions,
) -> Result<PdfField<T>> {
    if initial.len() != grid.n {
        return Err(QsdError::InvalidParameter(format!(
            "initial density has {} values for {} nodes",
            initial.len(),
            grid.n
        )));
    }
    if !(dt_store > T::zero()) {
        return Err(QsdError::NonPositiveTimeStep(dt_store.to_f64_lossless()));
    }
    if !(horizon >= T::zero()) {
        return Err(QsdError::InvalidParameter(format!(
            "horizon must be non-negative, got {horizon}"
        )));
    }
    let n_store = (horizon / dt_store).round().to_usize().unwrap_or(0);
    let n = grid.n;
    let h = grid.spacing();
    let xs = grid.nodes();
    let n_faces = if grid.kind == GridKind::Periodic { n } else { n - 1 };

    let mut a = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    let eval = |t: T, a: &mut [T], d: &mut [T]| -> Result<(T, T)> {
        let mut max_d = T::zero();
        let mut max_a = T::zero();
        for i in 0..n {
            let x = [xs[i]];
            a[i] = process.drift(&x, t)[0];
            d[i] = process.diffusion(&x, t, 0);
            if !a[i].is_finite() || !d[i].is_finite() {
                return Err(QsdError::NonFinite {
                    what: "fokker-planck coefficients",
                    step: i,
                });
            }
            max_d = max_d.max(d[i]);
            max_a = max_a.max(a[i].abs());
        }
        Ok((max_d, max_a))
    };

    let (mut max_d, mut max_a) = eval(t0, &mut a, &mut d)?;
    let autonomous = process.is_autonomous();
    let safety = T::lit(options.cfl_safety);
    let substeps_for = |max_d: T, max_a: T| -> Result<usize> {
        let rate = T::lit(2.0) * max_d + h * max_a;
        if rate == T::zero() {
            return Ok(1);
        }
        let bound = safety * h * h / rate;
        let k = (dt_store / bound).ceil().to_usize().unwrap_or(usize::MAX).max(1);
        if k > options.max_substeps {
            return Err(QsdError::CflViolation {
                required: k,
                limit: options.max_substeps,
            });
        }
        Ok(k)
    };
    let mut k_sub = substeps_for(max_d, max_a)?;

    let mut p = initial.to_vec();
    let mut flux = vec![T::zero(); n_faces];
    let mut slices = Vec::with_capacity(n_store + 1);
    slices.push(p.clone());
    let inv_w: Vec<T> = (0..n).map(|i| T::one() / grid.cell_width(i)).collect();
    let tol = T::lit(-NEGATIVITY_TOLERANCE);

    for s in 0..n_store {
        let t_s = t0 + T::from_usize(s).unwrap() * dt_store;
        let dt = dt_store / T::from_usize(k_sub).unwrap();
        for j in 0..k_sub {
            if !autonomous {
                let t = t_s + T::from_usize(j).unwrap() * dt;
                let (md, ma) = eval(t, &mut a, &mut d)?;
                if md > max_d || ma > max_a {
                    return Err(QsdError::CflViolation {
                        required: substeps_for(md, ma)?,
                        limit: k_sub,
                    });
                }
            }
            for (f, face) in flux.iter_mut().enumerate() {
                let g = grid.next(f);
                *face = T::lit(0.5) * (a[f] * p[f] + a[g] * p[g]) - (d[g] * p[g] - d[f] * p[f]) / h;
            }
            for i in 0..n {
                let left = if i > 0 {
                    flux[i - 1]
                } else if grid.kind == GridKind::Periodic {
                    flux[n - 1]
                } else {
                    T::zero()
                };
                let right = if i < n_faces { flux[i] } else { T::zero() };
                p[i] = p[i] + dt * (left - right) * inv_w[i];
            }
        }
        for (i, &v) in p.iter().enumerate() {
            if v < tol || !v.is_finite() {
                return Err(QsdError::NegativeDensity {
                    value: v.to_f64_lossless(),
                    node: i,
                    time: (t_s + dt_store).to_f64_lossless(),
                });
            }
        }
        slices.push(p.clone());
        if !autonomous {
            let (md, ma) = eval(t_s + dt_store, &mut a, &mut d)?;
            max_d = md;
            max_a = ma;
            k_sub = substeps_for(max_d, max_a)?;
        }
    }
    PdfField::new(*grid, t0, dt_store, slices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{spec_rz, spec_theta, spec_y, ConstantProcess, Domain};
    use std::f64::consts::PI;

    #[test]
    fn grid_geometry() {
        let g = Grid1D::<f64>::bounded(-1.0, 1.0, 21).unwrap();
        assert!((g.spacing() - 0.1).abs() < 1e-15);
        assert_eq!(g.node(20), 1.0);
        assert!((g.mass(&[0.5; 21]) - 1.0).abs() < 1e-14);
        let p = Grid1D::<f64>::periodic(64).unwrap();
        assert!((p.spacing() - 2.0 * PI / 64.0).abs() < 1e-15);
        assert!((p.mass(&p.uniform()) - 1.0).abs() < 1e-14);
        assert!(Grid1D::<f64>::bounded(0.0, 1.0, 8).is_err());
        assert!(Grid1D::<f64>::bounded(1.0, 0.0, 32).is_err());
    }

    #[test]
    fn locate_periodic_wraps() {
        let g = Grid1D::<f64>::periodic(16).unwrap();
        let (i, w) = g.locate(PI).unwrap();
        assert_eq!(i, 0);
        assert!(w.abs() < 1e-12);
        let (i, w) = g.locate(PI - 0.5 * g.spacing()).unwrap();
        assert_eq!(i, 15);
        assert!((w - 0.5).abs() < 1e-12);
        let b = Grid1D::<f64>::bounded(-1.0, 1.0, 32).unwrap();
        assert!(b.locate(1.01).is_none());
        assert_eq!(b.locate(1.0).unwrap().0, 30);
    }

    #[test]
    fn rz_mass_and_mean() {
        let p = spec_rz(1.0f64).unwrap();
        let g = Grid1D::<f64>::bounded(-1.0, 1.0, 256).unwrap();
        let init = g.gaussian(0.0, 0.1).unwrap();
        let f = evolve_fpe(&p, &g, &init, 0.0, 1.0, 0.05, FpeOptions::default()).unwrap();
        for k in 0..f.n_times() {
            let s = f.slice(k);
            assert!((g.mass(s) - 1.0).abs() < 1e-6);
            assert!(g.mean(s).abs() < 1e-3);
        }
        // mass migrates outward
        let last = f.slice(f.n_times() - 1);
        let outer = g.integrate_with(last, |x| if x.abs() > 0.9 { 1.0 } else { 0.0 });
        let inner = g.integrate_with(f.slice(0), |x| if x.abs() > 0.9 { 1.0 } else { 0.0 });
        assert!(outer > 0.5 && inner < 1e-10, "{outer} {inner}");
    }

    #[test]
    fn heat_equation_keeps_uniform() {
        let p = ConstantProcess {
            drift_rev: 0.0,
            drift_irr: 0.0,
            noise: 1.0,
            domain: Domain::Periodic { lo: -PI, hi: PI },
        };
        let g = Grid1D::periodic(64).unwrap();
        let f = evolve_fpe(&p, &g, &g.uniform(), 0.0, 1.0, 0.1, FpeOptions::default()).unwrap();
        let last = f.slice(f.n_times() - 1);
        assert!(last.iter().all(|&v| (v - 1.0 / (2.0 * PI)).abs() < 1e-14));
    }

    #[test]
    fn drift_on_periodic_grid_conserves_mass() {
        let p = ConstantProcess {
            drift_rev: 0.0,
            drift_irr: 1.0,
            noise: 0.5,
            domain: Domain::Periodic { lo: -PI, hi: PI },
        };
        let g = Grid1D::periodic(128).unwrap();
        let init = g.gaussian(0.0, 0.3).unwrap();
        let f = evolve_fpe(&p, &g, &init, 0.0, 2.0, 0.1, FpeOptions::default()).unwrap();
        let last = f.slice(f.n_times() - 1);
        assert!((g.mass(last) - 1.0).abs() < 1e-12);
        // centre of mass moved by 2 (circular mean)
        let c: f64 = g.integrate_with(last, |x| x.cos());
        let s: f64 = g.integrate_with(last, |x| x.sin());
        assert!((s.atan2(c) - 2.0).abs() < 0.02);
    }

    #[test]
    fn theta_relaxes_to_stationary() {
        let p = spec_theta(5f64.sqrt(), 1.0).unwrap();
        let g = Grid1D::periodic(256).unwrap();
        let st = p.stationary_pdf().unwrap();
        let f = evolve_fpe(&p, &g, &g.uniform(), 0.0, 5.0, 0.5, FpeOptions::default()).unwrap();
        let tv = g.total_variation(f.slice(f.n_times() - 1), |x| st.density(x));
        assert!(tv < 1e-3, "tv = {tv}");
    }

    #[test]
    fn y_matches_late_gaussian_pair() {
        let alpha: f64 = 1.0;
        let t: f64 = 3.0;
        let p = spec_y(alpha).unwrap();
        let l = 6.0 * alpha * alpha * t + 10.0 * 2.0 * alpha * t.sqrt();
        let g = Grid1D::<f64>::truncated_line(l, 1024).unwrap();
        let init = g.gaussian(0.0, 0.1).unwrap();
        let f = evolve_fpe(&p, &g, &init, 0.0, t, 0.5, FpeOptions::default()).unwrap();
        let last = f.slice(f.n_times() - 1);
        assert!((g.mass(last) - 1.0).abs() < 1e-4);
        let asym = AsymptoticPdf::YPair { alpha };
        let tv = g.total_variation(last, |y| asym.density(y, t));
        assert!(tv < 0.05, "tv = {tv}");
    }

    #[test]
    fn substep_cap_is_enforced() {
        let p = spec_rz(1.0f64).unwrap();
        let g = Grid1D::<f64>::bounded(-1.0, 1.0, 512).unwrap();
        let init = g.gaussian(0.0, 0.1).unwrap();
        let opts = FpeOptions {
            cfl_safety: 0.9,
            max_substeps: 10,
        };
        let err = evolve_fpe(&p, &g, &init, 0.0, 0.1, 0.1, opts).unwrap_err();
        assert!(matches!(err, QsdError::CflViolation { .. }));
    }

    #[test]
    fn negative_density_is_reported() {
        // cell Péclet number far above one makes central differences oscillate
        let p = ConstantProcess {
            drift_rev: 0.0,
            drift_irr: 50.0,
            noise: 0.01,
            domain: Domain::Line,
        };
        let g = Grid1D::<f64>::truncated_line(5.0, 64).unwrap();
        let init = g.gaussian(0.0, 0.2).unwrap();
        let err = evolve_fpe(&p, &g, &init, 0.0, 0.05, 0.01, FpeOptions::default()).unwrap_err();
        assert!(matches!(err, QsdError::NegativeDensity { .. }), "{err:?}");
    }
}
