//! Casimir functions `Q`, the inverse `q` of `Q'`, and the energy moments of
//! `q` that the flat steady states reduce to.
//!
//! With `s = E₀ − U(r)` and `w = |v|²/2`, a state `f = q(s − w)` has
//!
//! ```text
//! ρ      = 2π G(s),   G(s) = ∫₀ˢ q(t) dt
//! e_kin  = 2π H(s),   H(s) = ∫₀ˢ G(t) dt = s G(s) − Ψ(s)
//! Q'(f)f = 2π Ψ(s),   Ψ(s) = ∫₀ˢ t q(t) dt
//! Q(f)   = 2π J(s),   J(s) = ∫₀ˢ Q(q(t)) dt
//! ```
//!
//! per unit area of the plane.

use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{ensure_finite, Error, Result};
use crate::quadrature;

/// Relative slack applied to every inequality in [`validate_assumptions`].
pub const VALIDATION_SLACK: f64 = 1e-9;

const MOMENT_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CasimirKind {
    /// `Q(f) = c f^{1+1/μ}`
    Polytrope { mu: f64, c: f64 },
    /// `Q(f) = c1 f^{1+1/μ₁} + c2 f^{1+1/μ₂}`
    DoublePower { mu1: f64, mu2: f64, c1: f64, c2: f64 },
    Custom(TabulatedQ),
}

/// Constants declared for the growth and convexity assumptions on `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssumptionConstants {
    pub f0: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl AssumptionConstants {
    fn check(&self) -> Result<()> {
        for (name, mu) in [("mu1", self.mu1), ("mu2", self.mu2), ("mu3", self.mu3)] {
            if !(mu > 0.0 && mu < 1.0) {
                return Err(Error::ModelDefinition(format!(
                    "{name} must lie in (0, 1), got {mu}"
                )));
            }
        }
        for (name, c) in [
            ("F0", self.f0),
            ("C1", self.c1),
            ("C2", self.c2),
            ("C3", self.c3),
            ("C4", self.c4),
        ] {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::ModelDefinition(format!(
                    "{name} must be positive and finite, got {c}"
                )));
            }
        }
        Ok(())
    }
}

/// Envelope of `λ^p` for `λ ∈ [1/2, 2]` and a set of exponents `p`.
fn q5_envelope(exponents: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &p in exponents {
        for lam in [0.5f64, 2.0] {
            let v = lam.powf(p);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (lo.min(1.0), hi.max(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CasimirModel {
    pub kind: CasimirKind,
    pub constants: AssumptionConstants,
}

impl CasimirModel {
    /// Polytrope with the constants it satisfies exactly: `μ₁=μ₂=μ₃=μ`,
    /// `C₁=C₂=c`, `F₀=1`, and the `(Q5)` envelope on `[1/2, 2]`.
    pub fn polytrope(mu: f64, c: f64) -> Result<Self> {
        if !(mu > 0.0 && mu < 1.0) {
            return Err(Error::ModelDefinition(format!(
                "polytrope exponent must lie in (0, 1), got {mu}"
            )));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::ModelDefinition(format!(
                "polytrope coefficient must be positive, got {c}"
            )));
        }
        let (c3, c4) = q5_envelope(&[1.0 / mu - 1.0]);
        let constants = AssumptionConstants {
            f0: 1.0,
            mu1: mu,
            mu2: mu,
            mu3: mu,
            c1: c,
            c2: c,
            c3,
            c4,
        };
        Self::new(CasimirKind::Polytrope { mu, c }, constants)
    }

    pub fn double_power(mu1: f64, mu2: f64, c1: f64, c2: f64) -> Result<Self> {
        for mu in [mu1, mu2] {
            if !(mu > 0.0 && mu < 1.0) {
                return Err(Error::ModelDefinition(format!(
                    "double-power exponents must lie in (0, 1), got {mu}"
                )));
            }
        }
        for c in [c1, c2] {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::ModelDefinition(format!(
                    "double-power coefficients must be positive, got {c}"
                )));
            }
        }
        let (lo_mu, hi_mu) = (mu1.min(mu2), mu1.max(mu2));
        let steep_c = if mu1 <= mu2 { c1 } else { c2 };
        let (c3, c4) = q5_envelope(&[1.0 / mu1 - 1.0, 1.0 / mu2 - 1.0]);
        let constants = AssumptionConstants {
            f0: 1.0,
            mu1: lo_mu,
            mu2: hi_mu,
            mu3: lo_mu,
            c1: steep_c,
            c2: c1 + c2,
            c3,
            c4,
        };
        Self::new(CasimirKind::DoublePower { mu1, mu2, c1, c2 }, constants)
    }

    pub fn custom(table: TabulatedQ, constants: AssumptionConstants) -> Result<Self> {
        Self::new(CasimirKind::Custom(table), constants)
    }

    pub fn new(kind: CasimirKind, constants: AssumptionConstants) -> Result<Self> {
        constants.check()?;
        Ok(Self { kind, constants })
    }

    pub fn with_constants(mut self, constants: AssumptionConstants) -> Result<Self> {
        constants.check()?;
        self.constants = constants;
        Ok(self)
    }

    /// `α = 1/(1−μ₃)`, always derived from the declared `μ₃`.
    pub fn alpha(&self) -> f64 {
        1.0 / (1.0 - self.constants.mu3)
    }

    pub fn polytrope_exponent(&self) -> Option<f64> {
        match self.kind {
            CasimirKind::Polytrope { mu, .. } => Some(mu),
            _ => None,
        }
    }

    pub fn q_value(&self, f: f64) -> f64 {
        if f <= 0.0 {
            return 0.0;
        }
        match &self.kind {
            CasimirKind::Polytrope { mu, c } => c * f.powf(1.0 + 1.0 / mu),
            CasimirKind::DoublePower { mu1, mu2, c1, c2 } => {
                c1 * f.powf(1.0 + 1.0 / mu1) + c2 * f.powf(1.0 + 1.0 / mu2)
            }
            CasimirKind::Custom(t) => t.value(f),
        }
    }

    /// `Q'(f)`
    pub fn dq(&self, f: f64) -> f64 {
        if f <= 0.0 {
            return 0.0;
        }
        match &self.kind {
            CasimirKind::Polytrope { mu, c } => c * (1.0 + 1.0 / mu) * f.powf(1.0 / mu),
            CasimirKind::DoublePower { mu1, mu2, c1, c2 } => {
                c1 * (1.0 + 1.0 / mu1) * f.powf(1.0 / mu1)
                    + c2 * (1.0 + 1.0 / mu2) * f.powf(1.0 / mu2)
            }
            CasimirKind::Custom(t) => t.derivative(f),
        }
    }

    /// `Q''(f)` for `f > 0`.
    pub fn d2q(&self, f: f64) -> f64 {
        if f <= 0.0 {
            return match &self.kind {
                CasimirKind::Custom(t) => t.second_derivative(0.0),
                _ => 0.0,
            };
        }
        let term = |mu: f64, c: f64| c * (1.0 + 1.0 / mu) / mu * f.powf(1.0 / mu - 1.0);
        match &self.kind {
            CasimirKind::Polytrope { mu, c } => term(*mu, *c),
            CasimirKind::DoublePower { mu1, mu2, c1, c2 } => term(*mu1, *c1) + term(*mu2, *c2),
            CasimirKind::Custom(t) => t.second_derivative(f),
        }
    }

    pub fn inverse(&self) -> Result<InverseQ> {
        InverseQ::new(Arc::new(self.clone()))
    }
}

/// Tabulated Casimir function on a log-spaced `f` grid.
///
/// `Q'` is interpolated with a monotone (Fritsch–Carlson) cubic through nodal
/// slopes of the table; below and above the table `Q` continues as a power law
/// matching value and slope at the end nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TabulatedQ {
    f: Vec<f64>,
    q: Vec<f64>,
    dq: Vec<f64>,
    /// PCHIP slopes of `Q'` at the nodes.
    ddq: Vec<f64>,
    p_lo: f64,
    p_hi: f64,
}

impl TabulatedQ {
    pub fn new(f: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        let n = f.len();
        if n < 4 || q.len() != n {
            return Err(Error::ModelDefinition(format!(
                "tabulated Q needs at least 4 rows with matching columns, got {n}/{}",
                q.len()
            )));
        }
        for i in 0..n {
            if !(f[i] > 0.0 && f[i].is_finite()) {
                return Err(Error::ModelDefinition(format!(
                    "tabulated f must be positive and finite (row {i})"
                )));
            }
            if !(q[i] > 0.0 && q[i].is_finite()) {
                return Err(Error::ModelDefinition(format!(
                    "tabulated Q must be positive and finite (row {i})"
                )));
            }
            if i > 0 && f[i] <= f[i - 1] {
                return Err(Error::ModelDefinition(format!(
                    "tabulated f must be strictly increasing (row {i})"
                )));
            }
        }
        // nodal Q' from second-order one-sided / central differences
        let mut dq = vec![0.0; n];
        for i in 0..n {
            let (a, b, c) = if i == 0 {
                (0, 1, 2)
            } else if i == n - 1 {
                (n - 3, n - 2, n - 1)
            } else {
                (i - 1, i, i + 1)
            };
            dq[i] = lagrange_derivative(
                [f[a], f[b], f[c]],
                [q[a], q[b], q[c]],
                f[i],
            );
        }
        let ddq = pchip_slopes(&f, &dq);
        let p_lo = f[0] * dq[0] / q[0];
        let p_hi = f[n - 1] * dq[n - 1] / q[n - 1];
        if !(p_lo > 1.0) || !(p_hi > 1.0) {
            return Err(Error::ModelDefinition(format!(
                "tabulated Q must grow faster than linearly at both ends (local exponents {p_lo:.4}, {p_hi:.4})"
            )));
        }
        Ok(Self {
            f,
            q,
            dq,
            ddq,
            p_lo,
            p_hi,
        })
    }

    /// Reads a two-column CSV with header `f,Q`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut f = Vec::new();
        let mut q = Vec::new();
        let mut header_seen = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                header_seen = true;
                let cols: Vec<_> = line.split(',').map(str::trim).collect();
                if cols != ["f", "Q"] {
                    return Err(Error::Parse(format!(
                        "{}:{}: expected header `f,Q`, got `{line}`",
                        path.display(),
                        lineno + 1
                    )));
                }
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.map(str::trim)
                    .ok_or_else(|| {
                        Error::Parse(format!("{}:{}: missing column", path.display(), lineno + 1))
                    })?
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), lineno + 1)))
            };
            f.push(parse(parts.next())?);
            q.push(parse(parts.next())?);
        }
        Self::new(f, q)
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    /// Nodal `(f, Q')` pairs.
    pub fn nodal_derivatives(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.f.iter().copied().zip(self.dq.iter().copied())
    }

    pub fn is_derivative_monotone(&self) -> bool {
        self.dq.windows(2).all(|w| w[1] > w[0])
    }

    fn locate(&self, x: f64) -> usize {
        match self.f.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => i.min(self.f.len() - 2),
            Err(i) => (i - 1).min(self.f.len() - 2),
        }
    }

    fn value(&self, x: f64) -> f64 {
        let n = self.f.len();
        if x <= self.f[0] {
            return self.q[0] * (x / self.f[0]).powf(self.p_lo);
        }
        if x >= self.f[n - 1] {
            return self.q[n - 1] * (x / self.f[n - 1]).powf(self.p_hi);
        }
        let i = self.locate(x);
        hermite(
            self.f[i],
            self.f[i + 1],
            self.q[i],
            self.q[i + 1],
            self.dq[i],
            self.dq[i + 1],
            x,
        )
        .0
    }

    fn derivative(&self, x: f64) -> f64 {
        let n = self.f.len();
        if x <= self.f[0] {
            return self.p_lo * self.q[0] / self.f[0] * (x / self.f[0]).powf(self.p_lo - 1.0);
        }
        if x >= self.f[n - 1] {
            return self.p_hi * self.q[n - 1] / self.f[n - 1]
                * (x / self.f[n - 1]).powf(self.p_hi - 1.0);
        }
        let i = self.locate(x);
        hermite(
            self.f[i],
            self.f[i + 1],
            self.dq[i],
            self.dq[i + 1],
            self.ddq[i],
            self.ddq[i + 1],
            x,
        )
        .0
    }

    fn second_derivative(&self, x: f64) -> f64 {
        let n = self.f.len();
        if x <= self.f[0] {
            let p = self.p_lo;
            return p * (p - 1.0) * self.q[0] / (self.f[0] * self.f[0])
                * (x / self.f[0]).powf(p - 2.0);
        }
        if x >= self.f[n - 1] {
            let p = self.p_hi;
            return p * (p - 1.0) * self.q[n - 1] / (self.f[n - 1] * self.f[n - 1])
                * (x / self.f[n - 1]).powf(p - 2.0);
        }
        let i = self.locate(x);
        hermite(
            self.f[i],
            self.f[i + 1],
            self.dq[i],
            self.dq[i + 1],
            self.ddq[i],
            self.ddq[i + 1],
            x,
        )
        .1
    }
}

fn lagrange_derivative(x: [f64; 3], y: [f64; 3], at: f64) -> f64 {
    let mut d = 0.0;
    for j in 0..3 {
        let mut denom = 1.0;
        for m in 0..3 {
            if m != j {
                denom *= x[j] - x[m];
            }
        }
        let mut num = 0.0;
        for k in 0..3 {
            if k == j {
                continue;
            }
            let mut prod = 1.0;
            for m in 0..3 {
                if m != j && m != k {
                    prod *= at - x[m];
                }
            }
            num += prod;
        }
        d += y[j] * num / denom;
    }
    d
}

/// Fritsch–Carlson slopes for monotone cubic Hermite interpolation.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            d[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let v = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if v * d0 <= 0.0 {
            0.0
        } else if d0 * d1 <= 0.0 && v.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            v
        }
    };
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
    } else {
        d[0] = end(h[0], h[1], delta[0], delta[1]);
        d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    }
    d
}

/// Cubic Hermite value and derivative on `[x0, x1]`.
fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> (f64, f64) {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let v = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
    let dh00 = (6.0 * t2 - 6.0 * t) / h;
    let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
    let dh01 = (-6.0 * t2 + 6.0 * t) / h;
    let dh11 = 3.0 * t2 - 2.0 * t;
    let dv = dh00 * y0 + dh10 * d0 + dh01 * y1 + dh11 * d1;
    (v, dv)
}

/// The inverse `q` of `Q'`, extended by zero to negative arguments.
#[derive(Debug, Clone)]
pub struct InverseQ {
    model: Arc<CasimirModel>,
    /// `(Q'(f_i), f_i)` for the custom kind, used to bracket roots.
    brackets: Vec<(f64, f64)>,
}

impl InverseQ {
    pub fn new(model: Arc<CasimirModel>) -> Result<Self> {
        let brackets = match &model.kind {
            CasimirKind::Custom(t) => {
                if !t.is_derivative_monotone() {
                    return Err(Error::ModelDefinition(
                        "tabulated Q' is not strictly increasing; q is undefined".into(),
                    ));
                }
                t.nodal_derivatives().map(|(f, d)| (d, f)).collect()
            }
            _ => Vec::new(),
        };
        Ok(Self { model, brackets })
    }

    pub fn model(&self) -> &CasimirModel {
        &self.model
    }

    /// `q(ε)`: the `f ≥ 0` with `Q'(f) = ε`, and `0` for `ε ≤ 0`.
    pub fn q(&self, eps: f64) -> Result<f64> {
        ensure_finite(eps, "energy argument of q")?;
        if eps <= 0.0 {
            return Ok(0.0);
        }
        match &self.model.kind {
            CasimirKind::Polytrope { mu, c } => Ok((eps / (c * (1.0 + 1.0 / mu))).powf(*mu)),
            CasimirKind::DoublePower { mu1, mu2, c1, c2 } => {
                let inv = |mu: f64, c: f64, e: f64| (e / (c * (1.0 + 1.0 / mu))).powf(mu);
                // each term alone reaches ε at `hi`; both stay below ε/2 at `lo`
                let hi = inv(*mu1, *c1, eps).min(inv(*mu2, *c2, eps)) * (1.0 + 1e-12);
                let lo = inv(*mu1, *c1, 0.25 * eps).min(inv(*mu2, *c2, 0.25 * eps));
                self.solve_bracketed(eps, lo, hi)
            }
            CasimirKind::Custom(t) => self.custom_q(t, eps),
        }
    }

    fn custom_q(&self, t: &TabulatedQ, eps: f64) -> Result<f64> {
        let (d_first, f_first) = self.brackets[0];
        let (d_last, f_last) = *self.brackets.last().expect("non-empty table");
        if eps <= d_first {
            // Q'(f) = p Q0/f0 (f/f0)^{p-1}
            let p = t.p_lo;
            let scale = p * t.q[0] / f_first;
            return Ok(f_first * (eps / scale).powf(1.0 / (p - 1.0)));
        }
        if eps >= d_last {
            let p = t.p_hi;
            let scale = p * t.q[t.len() - 1] / f_last;
            return Ok(f_last * (eps / scale).powf(1.0 / (p - 1.0)));
        }
        let idx = self.brackets.partition_point(|&(d, _)| d <= eps);
        let lo = self.brackets[idx - 1].1;
        let hi = self.brackets[idx].1;
        self.bisect_then_polish(eps, lo, hi)
    }

    fn bisect_then_polish(&self, eps: f64, mut lo: f64, mut hi: f64) -> Result<f64> {
        let model = &self.model;
        for _ in 0..200 {
            if hi - lo <= 1e-12 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if model.dq(mid) < eps {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if hi - lo > 1e-12 * hi {
            return Err(Error::Convergence(format!(
                "bisection for q({eps}) did not reach tolerance"
            )));
        }
        let mut f = 0.5 * (lo + hi);
        let slope = model.d2q(f);
        if slope > 0.0 {
            let polished = f - (model.dq(f) - eps) / slope;
            if polished >= lo && polished <= hi {
                f = polished;
            }
        }
        Ok(f)
    }

    fn solve_bracketed(&self, eps: f64, mut lo: f64, mut hi: f64) -> Result<f64> {
        let model = &self.model;
        if !(model.dq(lo) <= eps && model.dq(hi) >= eps) {
            return Err(Error::Convergence(format!("bracket exhausted for q({eps})")));
        }
        let mut f = 0.5 * (lo + hi);
        for _ in 0..200 {
            let g = model.dq(f) - eps;
            if g == 0.0 {
                return Ok(f);
            }
            if g < 0.0 {
                lo = f;
            } else {
                hi = f;
            }
            let slope = model.d2q(f);
            let mut next = f - g / slope;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - f).abs() <= 1e-15 * f || hi - lo <= 4.0 * f64::EPSILON * hi {
                return Ok(next);
            }
            f = next;
        }
        Err(Error::Convergence(format!(
            "root find for q({eps}) did not converge"
        )))
    }

    /// `q'(ε) = 1/Q''(q(ε))` for `ε > 0`.
    pub fn dq_deps(&self, eps: f64) -> Result<f64> {
        let f = self.q(eps)?;
        if f <= 0.0 {
            return Ok(0.0);
        }
        Ok(1.0 / self.model.d2q(f))
    }

    /// `∫₀^f g` for an explicit integrand in `f`.
    fn adaptive_in_f<F: Fn(f64) -> f64>(&self, f: f64, integrand: F) -> Result<f64> {
        quadrature::adaptive(integrand, 0.0, f, MOMENT_REL_TOL, 1e-300)
    }

    /// Polytropic prefactor `κ` with `q(t) = κ t^μ`.
    fn polytrope_kappa(&self) -> Option<(f64, f64, f64)> {
        match self.model.kind {
            CasimirKind::Polytrope { mu, c } => Some((mu, c, (1.0 / (c * (1.0 + 1.0 / mu))).powf(mu))),
            _ => None,
        }
    }

    /// `G(s) = ∫₀ˢ q`, zero for `s ≤ 0`.
    pub fn antiderivative(&self, s: f64) -> Result<f64> {
        ensure_finite(s, "argument of G")?;
        if s <= 0.0 {
            return Ok(0.0);
        }
        if let Some((mu, _, kappa)) = self.polytrope_kappa() {
            return Ok(kappa * s.powf(mu + 1.0) / (mu + 1.0));
        }
        // Legendre transform: ∫₀ˢ q = s q(s) − Q(q(s))
        let f = self.q(s)?;
        Ok(s * f - self.model.q_value(f))
    }

    /// `Ψ(s) = ∫₀ˢ t q(t) dt`
    pub fn first_moment(&self, s: f64) -> Result<f64> {
        ensure_finite(s, "argument of Ψ")?;
        if s <= 0.0 {
            return Ok(0.0);
        }
        if let Some((mu, _, kappa)) = self.polytrope_kappa() {
            return Ok(kappa * s.powf(mu + 2.0) / (mu + 2.0));
        }
        // t = Q'(g) and one integration by parts
        let f = self.q(s)?;
        let tail = self.adaptive_in_f(f, |g| self.model.dq(g).powi(2))?;
        Ok(0.5 * (f * s * s - tail))
    }

    /// `H(s) = ∫₀ˢ G = s G(s) − Ψ(s)`
    pub fn kinetic_moment(&self, s: f64) -> Result<f64> {
        ensure_finite(s, "argument of H")?;
        if s <= 0.0 {
            return Ok(0.0);
        }
        if let Some((mu, _, kappa)) = self.polytrope_kappa() {
            return Ok(kappa * s.powf(mu + 2.0) / ((mu + 1.0) * (mu + 2.0)));
        }
        Ok(s * self.antiderivative(s)? - self.first_moment(s)?)
    }

    /// `J_a(s) = ∫₀ˢ Q(a q(t)) dt`; `a = 1` gives the Casimir moment.
    pub fn casimir_moment(&self, s: f64, a: f64) -> Result<f64> {
        ensure_finite(s, "argument of J")?;
        if s <= 0.0 {
            return Ok(0.0);
        }
        if let Some((mu, c, kappa)) = self.polytrope_kappa() {
            let p = 1.0 + 1.0 / mu;
            return Ok(a.powf(p) * c * kappa.powf(p) * s.powf(mu + 2.0) / (mu + 2.0));
        }
        // t = Q'(g) and one integration by parts
        let f = self.q(s)?;
        let m = &self.model;
        let tail = self.adaptive_in_f(f, |g| m.dq(a * g) * m.dq(g))?;
        Ok(m.q_value(a * f) * s - a * tail)
    }

    /// Inverse of `G`: the `s ≥ 0` with `G(s) = g`.
    pub fn antiderivative_inverse(&self, g: f64) -> Result<f64> {
        ensure_finite(g, "argument of G⁻¹")?;
        if g <= 0.0 {
            return Ok(0.0);
        }
        if let Some((mu, _, kappa)) = self.polytrope_kappa() {
            return Ok((g * (mu + 1.0) / kappa).powf(1.0 / (mu + 1.0)));
        }
        let mut hi = 1.0;
        while self.antiderivative(hi)? < g {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::Convergence(format!("G⁻¹({g}) bracket exhausted")));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.antiderivative(mid)? < g {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * hi {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Outcome of one assumption check.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub pass: bool,
    /// Smallest `(rhs − lhs)/|rhs|`-style margin found (negative on failure).
    pub worst_margin: f64,
    /// `(f, λ)` where the worst margin occurred.
    pub witness: Option<(f64, f64)>,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect()
    }

    pub fn get(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Tracker {
    worst: f64,
    witness: Option<(f64, f64)>,
}

impl Tracker {
    fn new() -> Self {
        Self {
            worst: f64::INFINITY,
            witness: None,
        }
    }

    /// Records `lhs ≥ rhs` as a relative margin.
    fn ge(&mut self, lhs: f64, rhs: f64, f: f64, lam: f64) {
        let scale = lhs.abs().max(rhs.abs());
        let margin = if scale == 0.0 { 0.0 } else { (lhs - rhs) / scale };
        if margin < self.worst || margin.is_nan() {
            self.worst = margin;
            self.witness = Some((f, lam));
        }
    }

    fn finish(self, name: &str, detail: &str) -> AssumptionCheck {
        let worst = if self.worst.is_infinite() { 0.0 } else { self.worst };
        AssumptionCheck {
            name: name.into(),
            pass: worst >= -VALIDATION_SLACK,
            worst_margin: worst,
            witness: self.witness,
            detail: detail.into(),
        }
    }
}

/// Uniform-then-log sample grid on `[0, f_max]` with `n` points.
pub fn default_f_grid(f_max: f64, n: usize) -> Vec<f64> {
    let n = n.max(100);
    let mut g = Vec::with_capacity(n);
    g.push(0.0);
    let lo = f_max * 1e-6;
    for i in 0..n - 1 {
        let t = i as f64 / (n - 2) as f64;
        g.push(lo * (f_max / lo).powf(t));
    }
    g
}

/// Samples the five growth/convexity assumptions on `Q` over `f_grid`.
pub fn validate_assumptions(model: &CasimirModel, f_grid: &[f64]) -> Result<ValidationReport> {
    let k = &model.constants;
    if f_grid.len() < 100 {
        return Err(Error::Input(format!(
            "validation grid needs at least 100 points, got {}",
            f_grid.len()
        )));
    }
    let f_max = f_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let f_min = f_grid.iter().copied().fold(f64::INFINITY, f64::min);
    if !(f_min <= 0.0 + f64::EPSILON && f_min >= 0.0) || !(f_max > k.f0) {
        return Err(Error::Input(format!(
            "validation grid must cover [0, f_max] with f_max > F0 = {}, got [{f_min}, {f_max}]",
            k.f0
        )));
    }
    if let CasimirKind::Custom(t) = &model.kind {
        if t.dq.iter().any(|v| !v.is_finite()) {
            return Err(Error::ModelDefinition("tabulated Q' is not finite".into()));
        }
    }

    let mut q1 = Tracker::new();
    let mut q2 = Tracker::new();
    for &f in f_grid {
        let qf = model.q_value(f);
        if f >= k.f0 {
            q1.ge(qf, k.c1 * f.powf(1.0 + 1.0 / k.mu1), f, 1.0);
        }
        if f <= k.f0 {
            q2.ge(k.c2 * f.powf(1.0 + 1.0 / k.mu2), qf, f, 1.0);
        }
    }

    let mut q3 = Tracker::new();
    let lambdas3: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
    for &f in f_grid {
        let qf = model.q_value(f);
        for &lam in &lambdas3 {
            q3.ge(model.q_value(lam * f), lam.powf(1.0 + 1.0 / k.mu3) * qf, f, lam);
        }
    }

    let mut q4 = Tracker::new();
    for &f in f_grid.iter().filter(|&&f| f > 0.0) {
        let d2 = model.d2q(f);
        let margin = if d2 > 0.0 { 1.0 } else { -1.0 };
        if margin < q4.worst {
            q4.worst = margin;
            q4.witness = Some((f, 1.0));
        }
    }
    if let CasimirKind::Custom(t) = &model.kind {
        if !t.is_derivative_monotone() {
            q4.worst = q4.worst.min(-1.0);
            q4.witness = q4.witness.or(Some((f64::NAN, 1.0)));
        }
    }
    let dq0 = model.dq(0.0);
    let dq_scale = model.dq(k.f0).abs().max(1.0);
    if dq0.abs() > VALIDATION_SLACK * dq_scale {
        q4.worst = q4.worst.min(-dq0.abs() / dq_scale);
        q4.witness = Some((0.0, 1.0));
    }

    let mut q5 = Tracker::new();
    let lambdas5: Vec<f64> = (0..=30).map(|i| 0.5 * 4f64.powf(i as f64 / 30.0)).collect();
    for &f in f_grid.iter().filter(|&&f| f > 0.0) {
        let base = model.d2q(f);
        for &lam in &lambdas5 {
            let moved = model.d2q(lam * f);
            q5.ge(moved, k.c3 * base, f, lam);
            q5.ge(k.c4 * base, moved, f, lam);
        }
    }

    Ok(ValidationReport {
        checks: vec![
            q1.finish("Q1", "Q(f) >= C1 f^(1+1/mu1) for f >= F0"),
            q2.finish("Q2", "Q(f) <= C2 f^(1+1/mu2) for 0 <= f <= F0"),
            q3.finish("Q3", "Q(lambda f) >= lambda^(1+1/mu3) Q(f), lambda in [0,1]"),
            q4.finish("Q4", "Q'' > 0 on f > 0 and Q'(0) = 0"),
            q5.finish("Q5", "C3 Q''(f) <= Q''(lambda f) <= C4 Q''(f), lambda in [0.5,2]"),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube() -> InverseQ {
        CasimirModel::polytrope(0.5, 1.0).unwrap().inverse().unwrap()
    }

    #[test]
    fn polytrope_inverse_values() {
        let inv = cube();
        assert!((inv.q(3.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(inv.q(-1.0).unwrap(), 0.0);
        assert_eq!(inv.q(0.0).unwrap(), 0.0);
        assert!(inv.q(f64::NAN).is_err());
        assert!(inv.q(f64::INFINITY).is_err());
    }

    #[test]
    fn polytrope_antiderivative_values() {
        let inv = cube();
        assert!((inv.antiderivative(3.0).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(inv.antiderivative(0.0).unwrap(), 0.0);
        assert_eq!(inv.antiderivative(-2.0).unwrap(), 0.0);
    }

    #[test]
    fn polytrope_validates() {
        let m = CasimirModel::polytrope(0.5, 1.0).unwrap();
        assert_eq!(m.constants.mu3, 0.5);
        assert_eq!((m.constants.c1, m.constants.c2), (1.0, 1.0));
        let rep = validate_assumptions(&m, &default_f_grid(10.0, 200)).unwrap();
        assert!(rep.all_pass(), "{rep:?}");
    }

    #[test]
    fn double_power_validates() {
        let m = CasimirModel::double_power(0.4, 0.8, 1.0, 1.0).unwrap();
        let rep = validate_assumptions(&m, &default_f_grid(10.0, 200)).unwrap();
        assert!(rep.all_pass(), "{rep:?}");
    }

    #[test]
    fn oversized_mu3_fails_q3() {
        let m = CasimirModel::polytrope(0.5, 1.0).unwrap();
        let mut k = m.constants;
        k.mu3 = 0.7;
        let m = m.with_constants(k).unwrap();
        let rep = validate_assumptions(&m, &default_f_grid(10.0, 200)).unwrap();
        assert!(!rep.get("Q3").unwrap().pass);
        assert_eq!(rep.failed(), vec!["Q3"]);
        let (_, lam) = rep.get("Q3").unwrap().witness.unwrap();
        assert!(lam > 0.0 && lam < 1.0);
    }

    #[test]
    fn validation_grid_preconditions() {
        let m = CasimirModel::polytrope(0.5, 1.0).unwrap();
        assert!(validate_assumptions(&m, &default_f_grid(10.0, 100)[..50]).is_err());
        assert!(validate_assumptions(&m, &default_f_grid(0.5, 200)).is_err());
    }

    #[test]
    fn exponent_range_enforced() {
        assert!(CasimirModel::polytrope(1.0, 1.0).is_err());
        assert!(CasimirModel::polytrope(0.0, 1.0).is_err());
        assert!(CasimirModel::double_power(0.4, 1.2, 1.0, 1.0).is_err());
    }

    #[test]
    fn double_power_round_trip() {
        let inv = CasimirModel::double_power(0.4, 0.8, 1.0, 1.0)
            .unwrap()
            .inverse()
            .unwrap();
        for i in 0..200 {
            let f = 1e-8 * (1e11f64).powf(i as f64 / 199.0);
            let back = inv.q(inv.model().dq(f)).unwrap();
            assert!((back - f).abs() <= 1e-10 * (1.0 + f), "f={f} back={back}");
        }
    }

    fn cube_table(n: usize) -> TabulatedQ {
        let f: Vec<f64> = (0..n)
            .map(|i| 1e-3 * (1e6f64).powf(i as f64 / (n - 1) as f64))
            .collect();
        let q = f.iter().map(|x| x * x * x).collect();
        TabulatedQ::new(f, q).unwrap()
    }

    #[test]
    fn custom_table_tracks_polytrope() {
        let m = CasimirModel::custom(
            cube_table(400),
            CasimirModel::polytrope(0.5, 1.0).unwrap().constants,
        )
        .unwrap();
        let inv = m.inverse().unwrap();
        for &eps in &[1e-4, 0.3, 3.0, 12.0, 1e4] {
            let exact = (eps / 3.0f64).sqrt();
            let got = inv.q(eps).unwrap();
            assert!((got - exact).abs() < 1e-3 * exact, "eps={eps}: {got} vs {exact}");
            // Q'(q(ε)) = ε against the model's own interpolant
            assert!((m.dq(got) - eps).abs() <= 1e-12 * eps.max(1.0) * 10.0);
        }
        assert!(m.dq(0.0) == 0.0);
    }

    #[test]
    fn concave_table_fails_q4() {
        let mut t = cube_table(200);
        let f = t.f.clone();
        let mut q = t.q.clone();
        // flatten a middle stretch into a concave segment
        for i in 90..110 {
            q[i] = q[90] + (q[110] - q[90]) * ((f[i] - f[90]) / (f[110] - f[90])).sqrt();
        }
        t = TabulatedQ::new(f, q).unwrap();
        let m = CasimirModel::custom(t, CasimirModel::polytrope(0.5, 1.0).unwrap().constants)
            .unwrap();
        let rep = validate_assumptions(&m, &default_f_grid(1e3, 400)).unwrap();
        assert!(!rep.get("Q4").unwrap().pass);
        assert!(matches!(m.inverse(), Err(Error::ModelDefinition(_))));
    }

    #[test]
    fn malformed_table_rejected() {
        assert!(TabulatedQ::new(vec![1.0, 2.0, 1.5, 3.0], vec![1.0, 8.0, 4.0, 27.0]).is_err());
        assert!(TabulatedQ::new(vec![1.0, 2.0], vec![1.0, 8.0]).is_err());
        // linear growth leaves Q'(0) != 0
        assert!(TabulatedQ::new(vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0, 3.0, 4.0]).is_err());
    }

    #[test]
    fn moments_match_quadrature() {
        let poly = cube();
        let dp = CasimirModel::double_power(0.5, 0.5, 0.5, 0.5)
            .unwrap()
            .inverse()
            .unwrap();
        // identical Q written as a double power exercises the adaptive path
        for &s in &[0.1, 1.0, 4.0] {
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
            assert!(rel(dp.antiderivative(s).unwrap(), poly.antiderivative(s).unwrap()) < 1e-10);
            assert!(rel(dp.first_moment(s).unwrap(), poly.first_moment(s).unwrap()) < 1e-10);
            assert!(rel(dp.kinetic_moment(s).unwrap(), poly.kinetic_moment(s).unwrap()) < 1e-10);
            assert!(
                rel(dp.casimir_moment(s, 1.3).unwrap(), poly.casimir_moment(s, 1.3).unwrap())
                    < 1e-10
            );
            let g = poly.antiderivative(s).unwrap();
            assert!(rel(dp.antiderivative_inverse(g).unwrap(), s) < 1e-10);
        }
    }

    #[test]
    fn moments_match_direct_energy_integrals() {
        let inv = CasimirModel::double_power(0.4, 0.8, 1.0, 0.5)
            .unwrap()
            .inverse()
            .unwrap();
        let m = inv.model().clone();
        let int = |f: &dyn Fn(f64) -> f64, s: f64| quadrature::adaptive(f, 0.0, s, 1e-13, 1e-300).unwrap();
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
        for &s in &[0.05, 0.7, 3.0] {
            let g = int(&|t| inv.q(t).unwrap(), s);
            let psi = int(&|t| t * inv.q(t).unwrap(), s);
            let h = int(&|t| int(&|u| inv.q(u).unwrap(), t), s);
            let j = int(&|t| m.q_value(0.7 * inv.q(t).unwrap()), s);
            assert!(rel(inv.antiderivative(s).unwrap(), g) < 1e-10);
            assert!(rel(inv.first_moment(s).unwrap(), psi) < 1e-10);
            assert!(rel(inv.kinetic_moment(s).unwrap(), h) < 1e-9);
            assert!(rel(inv.casimir_moment(s, 0.7).unwrap(), j) < 1e-10);
        }
    }
}
