//! Prepared one-dimensional densities: normalizer, moments, CDF tables and
//! Gaussian-tilted moments.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use super::component::{Component1D, ComponentKind};
use crate::error::Result;
use crate::quad::{GaussLegendre, DEFAULT_PANELS};

/// Log-density drop (nats) at which the support is truncated for CDF work.
pub const TAIL_CUT: f64 = 69.1; // ~ ln 1e30
/// Log-density drop at which tilted integrands are truncated.
pub const TILT_CUT: f64 = 40.0;
/// Panels used for tilted-moment quadrature inside simulation loops.
pub const TILT_PANELS: usize = 48;

/// Moments of `e^{theta x - t x^2/2} rho(x)`, normalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltMoments1D {
    pub log_z: f64,
    pub mean: f64,
    pub var: f64,
    /// Central third moment.
    pub m3: f64,
    /// Central fourth moment.
    pub m4: f64,
}

#[derive(Debug, Clone)]
pub struct Density1D {
    comp: Component1D,
    log_norm: f64,
    mode: f64,
    log_max: f64,
    lo: f64,
    hi: f64,
    edges: Vec<f64>,
    cum_left: Vec<f64>,
    cum_right: Vec<f64>,
    mean: f64,
    var: f64,
    m3: f64,
    m4: f64,
}

/// Root of a decreasing function on `[lo, hi]` (finite), by safeguarded Newton.
fn decreasing_root<F, D>(f: F, df: D, mut lo: f64, mut hi: f64) -> f64
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * x.abs().max(1e-300) {
            break;
        }
        let d = df(x);
        let newton = if d < 0.0 && d.is_finite() { x - fx / d } else { f64::NAN };
        x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    x
}

/// Maximizer of a concave function with derivative `dl`/second derivative `d2l`
/// over `[a, b]` (possibly infinite). `start` and `step` set the initial bracket.
pub(crate) fn concave_argmax<D, D2>(dl: D, d2l: D2, a: f64, b: f64, start: f64, step: f64) -> f64
where
    D: Fn(f64) -> f64,
    D2: Fn(f64) -> f64,
{
    let start = start.clamp(a, b);
    let g = |x: f64| dl(x);
    if g(start) == 0.0 {
        return start;
    }
    let (mut lo, mut hi);
    if g(start) > 0.0 {
        lo = start;
        let mut d = step;
        loop {
            hi = (start + d).min(b);
            if hi >= b && b.is_finite() {
                if g(b) >= 0.0 {
                    return b;
                }
                break;
            }
            if g(hi) <= 0.0 {
                break;
            }
            lo = hi;
            d *= 2.0;
            if !d.is_finite() {
                return hi;
            }
        }
    } else {
        hi = start;
        let mut d = step;
        loop {
            lo = (start - d).max(a);
            if lo <= a && a.is_finite() {
                if g(a) <= 0.0 {
                    return a;
                }
                break;
            }
            if g(lo) >= 0.0 {
                break;
            }
            hi = lo;
            d *= 2.0;
            if !d.is_finite() {
                return lo;
            }
        }
    }
    decreasing_root(g, d2l, lo, hi)
}

/// Point on the side of `mode` given by `dir` (+1/-1) where the concave `l`
/// falls to `level`, clipped to the support edge `edge`.
pub(crate) fn level_crossing<L, D>(l: L, dl: D, mode: f64, level: f64, dir: f64, edge: f64, step: f64) -> f64
where
    L: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let mut inner = mode;
    let mut d = step;
    let outer = loop {
        let x = mode + dir * d;
        if (dir > 0.0 && x >= edge) || (dir < 0.0 && x <= edge) {
            if l(edge) >= level {
                return edge;
            }
            break edge;
        }
        if l(x) < level {
            break x;
        }
        inner = x;
        d *= 2.0;
    };
    // h(x) = l(x) - level decreases along dir
    if dir > 0.0 {
        decreasing_root(|x| l(x) - level, &dl, inner, outer)
    } else {
        let f = |u: f64| l(-u) - level;
        let df = |u: f64| -dl(-u);
        -decreasing_root(f, df, -inner, -outer)
    }
}

impl Density1D {
    pub fn new(comp: Component1D) -> Result<Self> {
        comp.validate()?;
        let (a, b) = comp.support();
        let s = comp.scale;
        let mode = concave_argmax(|x| comp.dlog(x), |x| comp.d2log(x), a, b, comp.loc, s);
        let log_max = comp.log_density(mode);
        let level = log_max - TAIL_CUT;
        let lo = level_crossing(|x| comp.log_density(x), |x| comp.dlog(x), mode, level, -1.0, a, s);
        let hi = level_crossing(|x| comp.log_density(x), |x| comp.dlog(x), mode, level, 1.0, b, s);

        let gl = GaussLegendre::standard();
        let panels = DEFAULT_PANELS;
        let h = (hi - lo) / panels as f64;
        let edges: Vec<f64> = (0..=panels).map(|k| lo + h * k as f64).collect();
        let mass: Vec<f64> = edges
            .windows(2)
            .map(|w| gl.integrate(w[0], w[1], |x| (comp.log_density(x) - log_max).exp()))
            .collect();
        let total: f64 = mass.iter().sum();
        let log_norm = log_max + total.ln();
        let mut cum_left = Vec::with_capacity(panels + 1);
        let mut acc = 0.0;
        cum_left.push(0.0);
        for m in &mass {
            acc += m / total;
            cum_left.push(acc);
        }
        let mut cum_right = vec![0.0; panels + 1];
        let mut acc = 0.0;
        for k in (0..panels).rev() {
            acc += mass[k] / total;
            cum_right[k] = acc;
        }

        let mut d = Density1D {
            comp,
            log_norm,
            mode,
            log_max,
            lo,
            hi,
            edges,
            cum_left,
            cum_right,
            mean: 0.0,
            var: 0.0,
            m3: 0.0,
            m4: 0.0,
        };
        let mean = d.expect(|x| x);
        let c = |k: i32| d.expect(|x| (x - mean).powi(k));
        let (var, m3, m4) = (c(2), c(3), c(4));
        d.mean = mean;
        d.var = var;
        d.m3 = m3;
        d.m4 = m4;
        Ok(d)
    }

    pub fn component(&self) -> &Component1D {
        &self.comp
    }

    /// Normalized log-density.
    pub fn log_pdf(&self, x: f64) -> f64 {
        self.comp.log_density(x) - self.log_norm
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.log_pdf(x).exp()
    }

    pub fn dlog(&self, x: f64) -> f64 {
        self.comp.dlog(x)
    }

    pub fn d2log(&self, x: f64) -> f64 {
        self.comp.d2log(x)
    }

    pub fn mode(&self) -> f64 {
        self.mode
    }

    /// Maximum of the normalized log-density.
    pub fn log_max(&self) -> f64 {
        self.log_max - self.log_norm
    }

    /// Support truncated where the density drops by `TAIL_CUT` nats.
    pub fn truncated_support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn support(&self) -> (f64, f64) {
        self.comp.support()
    }

    /// Support truncated at an arbitrary drop of `cut` nats below the maximum.
    pub fn support_at(&self, cut: f64) -> (f64, f64) {
        let (a, b) = self.comp.support();
        let level = self.log_max - cut;
        let l = |x: f64| self.comp.log_density(x);
        let dl = |x: f64| self.comp.dlog(x);
        let s = self.comp.scale;
        (
            level_crossing(l, dl, self.mode, level, -1.0, a, s),
            level_crossing(l, dl, self.mode, level, 1.0, b, s),
        )
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_norm
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn var(&self) -> f64 {
        self.var
    }

    pub fn central_m3(&self) -> f64 {
        self.m3
    }

    pub fn central_m4(&self) -> f64 {
        self.m4
    }

    /// `E x^k` about the origin for `k <= 4`.
    pub fn raw_moment(&self, k: u32) -> f64 {
        let (m, v, c3, c4) = (self.mean, self.var, self.m3, self.m4);
        match k {
            0 => 1.0,
            1 => m,
            2 => v + m * m,
            3 => c3 + 3.0 * m * v + m.powi(3),
            4 => c4 + 4.0 * m * c3 + 6.0 * m * m * v + m.powi(4),
            _ => self.expect(|x| x.powi(k as i32)),
        }
    }

    /// Integral of the density over the truncated support (should be 1).
    pub fn total_mass(&self) -> f64 {
        self.expect(|_| 1.0)
    }

    /// `E f(X)` by composite Gauss-Legendre over the truncated support.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let gl = GaussLegendre::standard();
        self.edges
            .windows(2)
            .map(|w| gl.integrate(w[0], w[1], |x| f(x) * self.pdf(x)))
            .sum()
    }

    fn panel_of(&self, x: f64) -> usize {
        let n = self.edges.len() - 1;
        let h = (self.hi - self.lo) / n as f64;
        (((x - self.lo) / h).floor().max(0.0) as usize).min(n - 1)
    }

    /// `(F(x), 1 - F(x))`, each accurate in relative terms on its own tail.
    pub fn cdf_sf(&self, x: f64) -> (f64, f64) {
        if x <= self.lo {
            return (0.0, 1.0);
        }
        if x >= self.hi {
            return (1.0, 0.0);
        }
        let k = self.panel_of(x);
        let gl = GaussLegendre::standard();
        let left_part = gl.integrate(self.edges[k], x, |u| self.pdf(u));
        let right_part = gl.integrate(x, self.edges[k + 1], |u| self.pdf(u));
        let cdf = self.cum_left[k] + left_part;
        let sf = self.cum_right[k + 1] + right_part;
        (cdf, sf)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.cdf_sf(x).0
    }

    pub fn sf(&self, x: f64) -> f64 {
        self.cdf_sf(x).1
    }

    /// `F^{-1}(p)`.
    pub fn quantile(&self, p: f64) -> f64 {
        if p > 0.5 {
            return self.quantile_upper(1.0 - p);
        }
        if p <= 0.0 {
            return self.lo;
        }
        let k = self.cum_left.partition_point(|c| *c < p).clamp(1, self.edges.len() - 1) - 1;
        decreasing_root(|x| p - self.cdf(x), |x| -self.pdf(x), self.edges[k], self.edges[k + 1])
    }

    /// Point with upper tail mass `q`: `F^{-1}(1 - q)` without cancellation.
    pub fn quantile_upper(&self, q: f64) -> f64 {
        if q <= 0.0 {
            return self.hi;
        }
        if q >= 1.0 {
            return self.lo;
        }
        // cum_right is decreasing
        let k = self.cum_right.partition_point(|c| *c > q).clamp(1, self.edges.len() - 1) - 1;
        decreasing_root(|x| self.sf(x) - q, |x| -self.pdf(x), self.edges[k], self.edges[k + 1])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let c = &self.comp;
        let z = match &c.kind {
            ComponentKind::Gaussian => rng.sample::<f64, _>(StandardNormal),
            ComponentKind::ShiftedExponential => rng.sample::<f64, _>(Exp1) - 1.0,
            ComponentKind::UniformInterval { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            _ => {
                let u: f64 = rng.random();
                return if u < 0.5 { self.quantile(u) } else { self.quantile_upper(1.0 - u) };
            }
        };
        c.scale * z + c.loc
    }

    /// Moments of the tilted law `e^{theta x - t x^2/2} rho(x) / Z`.
    /// Gaussian components use the closed form unless `force_quadrature`.
    pub fn tilt_moments(&self, t: f64, theta: f64, panels: usize, force_quadrature: bool) -> TiltMoments1D {
        let c = &self.comp;
        if c.is_gaussian() && !force_quadrature {
            let v = c.scale * c.scale;
            let m = c.loc;
            let p = 1.0 / v + t;
            let mu = (m / v + theta) / p;
            let var = 1.0 / p;
            return TiltMoments1D {
                log_z: -0.5 * (v * p).ln() - m * m / (2.0 * v) + 0.5 * p * mu * mu,
                mean: mu,
                var,
                m3: 0.0,
                m4: 3.0 * var * var,
            };
        }
        let (lo, hi, lmax) = self.tilt_bracket(t, theta);
        let l = |x: f64| theta * x - 0.5 * t * x * x + self.comp.log_density(x) - lmax;
        let gl = GaussLegendre::standard();
        let h = (hi - lo) / panels as f64;
        let n = gl.nodes.len();
        let mut xs = Vec::with_capacity(panels * n);
        let mut ws = Vec::with_capacity(panels * n);
        for k in 0..panels {
            let a = lo + h * k as f64;
            for (node, w) in gl.nodes.iter().zip(&gl.weights) {
                let x = a + 0.5 * h * (node + 1.0);
                xs.push(x);
                ws.push(0.5 * h * w * l(x).exp());
            }
        }
        let z0: f64 = ws.iter().sum();
        let mean = xs.iter().zip(&ws).map(|(x, w)| x * w).sum::<f64>() / z0;
        let (mut c2, mut c3, mut c4) = (0.0, 0.0, 0.0);
        for (x, w) in xs.iter().zip(&ws) {
            let d = x - mean;
            let d2 = d * d;
            c2 += w * d2;
            c3 += w * d2 * d;
            c4 += w * d2 * d2;
        }
        TiltMoments1D {
            log_z: lmax + z0.ln() - self.log_norm,
            mean,
            var: c2 / z0,
            m3: c3 / z0,
            m4: c4 / z0,
        }
    }

    /// `E_{t,theta} f(X)` by quadrature over the tilted bracket.
    pub fn tilt_expect<F: Fn(f64) -> f64>(&self, t: f64, theta: f64, panels: usize, f: F) -> f64 {
        let (lo, hi, lmax) = self.tilt_bracket(t, theta);
        let l = |x: f64| (theta * x - 0.5 * t * x * x + self.comp.log_density(x) - lmax).exp();
        let gl = GaussLegendre::standard();
        let h = (hi - lo) / panels as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..panels {
            let a = lo + h * k as f64;
            let b = a + h;
            num += gl.integrate(a, b, |x| f(x) * l(x));
            den += gl.integrate(a, b, l);
        }
        num / den
    }

    /// Truncated support of the tilted integrand and its maximal log value.
    fn tilt_bracket(&self, t: f64, theta: f64) -> (f64, f64, f64) {
        let c = &self.comp;
        let (a, b) = c.support();
        let dl = |x: f64| theta - t * x + c.dlog(x);
        let d2l = |x: f64| -t + c.d2log(x);
        let l = |x: f64| theta * x - 0.5 * t * x * x + c.log_density(x);
        let width = if t > 0.0 { (1.0 / t).sqrt().min(self.var.sqrt()) } else { self.var.sqrt() };
        let start = if t > 0.0 { (theta / t).clamp(self.lo, self.hi) } else { self.mode };
        let mode = concave_argmax(dl, d2l, a, b, start, width);
        let lmax = l(mode);
        let level = lmax - TILT_CUT;
        let lo = level_crossing(l, dl, mode, level, -1.0, a, width);
        let hi = level_crossing(l, dl, mode, level, 1.0, b, width);
        (lo, hi, lmax)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn normalizers_match_closed_forms() {
        for c in [
            Component1D::gaussian().scaled(1.7, -0.4),
            Component1D::shifted_exponential(),
            Component1D::uniform(-2.0, 5.0),
        ] {
            let d = Density1D::new(c.clone()).unwrap();
            let exact = c.raw_log_normalizer().unwrap();
            assert!((d.log_normalizer() - exact).abs() < 1e-10);
            assert!((d.total_mass() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn shifted_exponential_moments() {
        let d = Density1D::new(Component1D::shifted_exponential()).unwrap();
        assert!(d.mean().abs() < 1e-12);
        assert!((d.var() - 1.0).abs() < 1e-12);
        assert!((d.central_m3() - 2.0).abs() < 1e-11);
        assert!((d.central_m4() - 9.0).abs() < 1e-10);
    }

    #[test]
    fn quantiles_invert_cdf() {
        let d = Density1D::new(Component1D::quartic(1.0, 0.25)).unwrap();
        for &p in &[1e-12, 1e-3, 0.2, 0.5, 0.9, 1.0 - 1e-9] {
            let x = d.quantile(p);
            assert!((d.cdf(x) - p).abs() < 1e-12 * p.max(1e-3), "p={p}");
        }
        let x = d.quantile_upper(1e-14);
        assert!((d.sf(x) / 1e-14 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn gaussian_tilt_closed_form_matches_quadrature() {
        let d = Density1D::new(Component1D::gaussian().scaled(1.3, 0.2)).unwrap();
        for &(t, th) in &[(0.0, 0.0), (0.5, 1.0), (3.0, -2.0), (40.0, 15.0)] {
            let exact = d.tilt_moments(t, th, TILT_PANELS, false);
            let quad = d.tilt_moments(t, th, TILT_PANELS, true);
            assert!((exact.log_z - quad.log_z).abs() < 1e-10);
            assert!((exact.mean - quad.mean).abs() < 1e-10);
            assert!((exact.var - quad.var).abs() < 1e-10);
            assert!(quad.m3.abs() < 1e-10);
        }
    }

    #[test]
    fn inner_tilt_panels_agree_with_default_panels() {
        let d = Density1D::new(Component1D::shifted_exponential()).unwrap();
        for &(t, th) in &[(0.0, 0.0), (1e-3, 0.3), (2.0, 5.0), (50.0, -30.0), (400.0, 100.0)] {
            let a = d.tilt_moments(t, th, TILT_PANELS, false);
            let b = d.tilt_moments(t, th, DEFAULT_PANELS, false);
            assert!((a.mean - b.mean).abs() < 1e-11 * (1.0 + b.mean.abs()));
            assert!((a.var - b.var).abs() < 1e-11 * b.var.max(1e-300) + 1e-14, "{a:?} {b:?}");
            assert!((a.m3 - b.m3).abs() < 1e-9 * b.var.powf(1.5) + 1e-14);
        }
    }

    #[test]
    fn tilt_at_origin_recovers_base() {
        let d = Density1D::new(Component1D::shifted_exponential()).unwrap();
        let m = d.tilt_moments(0.0, 0.0, TILT_PANELS, false);
        assert!(m.log_z.abs() < 1e-10);
        assert!(m.mean.abs() < 1e-10);
        assert!((m.var - 1.0).abs() < 1e-10);
        assert!((m.m3 - 2.0).abs() < 1e-9);
    }

    #[test]
    fn sampling_is_reproducible() {
        let d = Density1D::new(Component1D::smooth_laplace(0.1)).unwrap();
        let mut r1 = stream(3, 1);
        let mut r2 = stream(3, 1);
        let a: Vec<f64> = (0..10).map(|_| d.sample(&mut r1)).collect();
        let b: Vec<f64> = (0..10).map(|_| d.sample(&mut r2)).collect();
        assert_eq!(a, b);
    }
}
