//! Cost families `g(t) = F(t - shift)` with `F(0) = 0`.
//!
//! Every family has closed-form first and second derivatives and an exact
//! antiderivative, so slot costs and interval costs are integrated without
//! quadrature error. The curvature constant `K` and stretch constant `theta`
//! of the competitive analysis are computed from the same closed forms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the core function `F(u)`, `u = t - shift`.
#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    /// `rho * u`
    Linear { rho: f64 },
    /// `rho * u^k`, `k >= 1`
    Power { rho: f64, k: f64 },
    /// `sum_i coeffs[i] * u^(i+1)`, all coefficients nonnegative
    Poly { coeffs: Vec<f64> },
    /// `rho * ln(1 + u)`
    Log { rho: f64 },
    /// Linear interpolation through `points`, starting at `(0, 0)` and
    /// extended past the last point with the last slope.
    Pwl { points: Vec<(f64, f64)> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CostSpec", into = "CostSpec")]
pub struct CostFunction {
    family: Family,
    shift: f64,
}

const BREAKPOINT_TOL: f64 = 1e-12;

impl CostFunction {
    pub fn new(family: Family, shift: f64) -> Result<Self> {
        validate(&family)?;
        if !(shift.is_finite() && shift >= 0.0) {
            return Err(Error::InvalidCost(format!("shift {shift} must be finite and >= 0")));
        }
        Ok(CostFunction { family, shift })
    }

    pub fn linear(rho: f64) -> Result<Self> {
        Self::new(Family::Linear { rho }, 0.0)
    }

    pub fn power(rho: f64, k: f64) -> Result<Self> {
        Self::new(Family::Power { rho, k }, 0.0)
    }

    pub fn poly(coeffs: Vec<f64>) -> Result<Self> {
        Self::new(Family::Poly { coeffs }, 0.0)
    }

    pub fn log(rho: f64) -> Result<Self> {
        Self::new(Family::Log { rho }, 0.0)
    }

    pub fn pwl(points: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(Family::Pwl { points }, 0.0)
    }

    pub fn with_shift(self, shift: f64) -> Result<Self> {
        Self::new(self.family, shift)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// `g(t)`, `g'(t)` or `g''(t)` for `order` 0, 1, 2.
    pub fn evaluate(&self, t: f64, order: u8) -> Result<f64> {
        if t < self.shift - BREAKPOINT_TOL {
            return Err(Error::BeforeShift { t, shift: self.shift });
        }
        let u = (t - self.shift).max(0.0);
        match order {
            0 => Ok(core_value(&self.family, u)),
            1 => Ok(core_d1(&self.family, u)),
            2 => {
                if let Family::Pwl { points } = &self.family {
                    if points[1..].iter().any(|&(x, _)| (x - u).abs() <= BREAKPOINT_TOL) {
                        return Err(Error::NotDifferentiable { t });
                    }
                }
                Ok(core_d2(&self.family, u))
            }
            _ => Err(Error::BadOrder(order)),
        }
    }

    /// `g(t)`, taken as 0 before the shift.
    pub fn value(&self, t: f64) -> f64 {
        core_value(&self.family, t - self.shift)
    }

    /// Right derivative `g'(t)`, 0 before the shift.
    pub fn derivative(&self, t: f64) -> f64 {
        if t < self.shift {
            0.0
        } else {
            core_d1(&self.family, t - self.shift)
        }
    }

    /// `g''(t)`; 0 off the support and between breakpoints.
    pub fn second_derivative(&self, t: f64) -> f64 {
        if t < self.shift {
            0.0
        } else {
            core_d2(&self.family, t - self.shift)
        }
    }

    /// Exact `∫_a^b g(t) dt` (the part below the shift contributes 0).
    pub fn definite_integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        core_antiderivative(&self.family, b - self.shift)
            - core_antiderivative(&self.family, a - self.shift)
    }

    pub fn is_convex(&self) -> bool {
        match &self.family {
            Family::Linear { .. } | Family::Power { .. } | Family::Poly { .. } => true,
            Family::Log { rho } => *rho == 0.0,
            Family::Pwl { points } => {
                let s = slopes(points);
                s.windows(2).all(|w| w[1] >= w[0] - BREAKPOINT_TOL)
            }
        }
    }

    /// Splits `g = rho * g_core` for the families that carry a density.
    /// Polynomial and piecewise-linear costs report density 1.
    pub fn split_density(&self) -> (f64, CostFunction) {
        let (rho, core) = match &self.family {
            Family::Linear { rho } => (*rho, Family::Linear { rho: 1.0 }),
            Family::Power { rho, k } => (*rho, Family::Power { rho: 1.0, k: *k }),
            Family::Log { rho } => (*rho, Family::Log { rho: 1.0 }),
            other => (1.0, other.clone()),
        };
        (rho, CostFunction { family: core, shift: self.shift })
    }

    /// `factor * g`.
    pub fn scaled(&self, factor: f64) -> CostFunction {
        let family = match &self.family {
            Family::Linear { rho } => Family::Linear { rho: rho * factor },
            Family::Power { rho, k } => Family::Power { rho: rho * factor, k: *k },
            Family::Poly { coeffs } => Family::Poly {
                coeffs: coeffs.iter().map(|a| a * factor).collect(),
            },
            Family::Log { rho } => Family::Log { rho: rho * factor },
            Family::Pwl { points } => Family::Pwl {
                points: points.iter().map(|&(x, y)| (x, y * factor)).collect(),
            },
        };
        CostFunction { family, shift: self.shift }
    }

    /// Limit of `u F''(u) / F'(u)` as `u -> 0+`.
    fn curvature_at_zero(&self) -> f64 {
        match &self.family {
            Family::Power { k, .. } => k - 1.0,
            Family::Poly { coeffs } => coeffs.iter().position(|&a| a > 0.0).unwrap_or(0) as f64,
            _ => 0.0,
        }
    }

    /// `sup_{u >= 0} u F''(u) / F'(u)` of the core function.
    fn curvature_sup(&self) -> f64 {
        match &self.family {
            Family::Linear { .. } | Family::Log { .. } | Family::Pwl { .. } => 0.0,
            Family::Power { k, .. } => k - 1.0,
            // u F''/F' is a weighted mean of the exponents i over terms (i+1) a_i u^i,
            // so its sup is the top exponent, approached as u grows.
            Family::Poly { coeffs } => coeffs.iter().rposition(|&a| a > 0.0).unwrap_or(0) as f64,
        }
    }
}

fn validate(family: &Family) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidCost(msg));
    let nonneg = |x: f64| x.is_finite() && x >= 0.0;
    match family {
        Family::Linear { rho } | Family::Log { rho } if !nonneg(*rho) => {
            bad(format!("density {rho} must be finite and >= 0"))
        }
        Family::Power { rho, k } if !nonneg(*rho) || !(k.is_finite() && *k >= 1.0) => {
            bad(format!("power cost needs rho >= 0 and k >= 1, got rho={rho}, k={k}"))
        }
        Family::Poly { coeffs } if coeffs.is_empty() || !coeffs.iter().all(|&a| nonneg(a)) => {
            bad("polynomial coefficients must be a nonempty list of values >= 0".into())
        }
        Family::Pwl { points } => {
            if points.len() < 2 || points[0] != (0.0, 0.0) {
                return bad("breakpoints must start at (0, 0) and have at least two points".into());
            }
            for w in points.windows(2) {
                if !(w[1].0 > w[0].0 && w[1].1 >= w[0].1 && w[1].0.is_finite() && w[1].1.is_finite()) {
                    return bad("breakpoints must be increasing in t and nondecreasing in y".into());
                }
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

fn slopes(points: &[(f64, f64)]) -> Vec<f64> {
    points.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect()
}

/// Index of the segment containing `u` (right-continuous), last segment past the end.
fn segment(points: &[(f64, f64)], u: f64) -> usize {
    let n = points.len() - 1;
    points[1..n].iter().take_while(|&&(x, _)| x <= u).count()
}

fn core_value(f: &Family, u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    match f {
        Family::Linear { rho } => rho * u,
        Family::Power { rho, k } => rho * u.powf(*k),
        Family::Poly { coeffs } => u * coeffs.iter().rev().fold(0.0, |acc, a| acc * u + a),
        Family::Log { rho } => rho * u.ln_1p(),
        Family::Pwl { points } => {
            let i = segment(points, u);
            let (x0, y0) = points[i];
            let (x1, y1) = points[i + 1];
            y0 + (y1 - y0) / (x1 - x0) * (u - x0)
        }
    }
}

fn core_d1(f: &Family, u: f64) -> f64 {
    let u = u.max(0.0);
    match f {
        Family::Linear { rho } => *rho,
        Family::Power { rho, k } => {
            if *k == 1.0 {
                *rho
            } else {
                rho * k * u.powf(k - 1.0)
            }
        }
        Family::Poly { coeffs } => coeffs
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (i, a)| acc * u + (i + 1) as f64 * a),
        Family::Log { rho } => rho / (1.0 + u),
        Family::Pwl { points } => {
            let i = segment(points, u);
            (points[i + 1].1 - points[i].1) / (points[i + 1].0 - points[i].0)
        }
    }
}

fn core_d2(f: &Family, u: f64) -> f64 {
    let u = u.max(0.0);
    match f {
        Family::Linear { .. } | Family::Pwl { .. } => 0.0,
        Family::Power { rho, k } => {
            if *k == 1.0 {
                0.0
            } else if *k == 2.0 {
                2.0 * rho
            } else {
                rho * k * (k - 1.0) * u.powf(k - 2.0)
            }
        }
        Family::Poly { coeffs } => coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (i, a)| acc * u + ((i + 1) * i) as f64 * a),
        Family::Log { rho } => -rho / ((1.0 + u) * (1.0 + u)),
    }
}

/// `∫_0^u F`, 0 for `u <= 0`.
fn core_antiderivative(f: &Family, u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    match f {
        Family::Linear { rho } => rho * u * u / 2.0,
        Family::Power { rho, k } => rho * u.powf(k + 1.0) / (k + 1.0),
        Family::Poly { coeffs } => {
            u * u
                * coeffs
                    .iter()
                    .enumerate()
                    .rev()
                    .fold(0.0, |acc, (i, a)| acc * u + a / (i + 2) as f64)
        }
        Family::Log { rho } => rho * ((1.0 + u) * u.ln_1p() - u),
        Family::Pwl { points } => {
            let mut area = 0.0;
            for w in points.windows(2) {
                let (x0, y0) = w[0];
                let (x1, y1) = w[1];
                if u <= x0 {
                    return area;
                }
                let hi = u.min(x1);
                let y_hi = y0 + (y1 - y0) / (x1 - x0) * (hi - x0);
                area += (y0 + y_hi) / 2.0 * (hi - x0);
            }
            let (xl, yl) = points[points.len() - 1];
            if u > xl {
                let s = *slopes(points).last().unwrap();
                let y_u = yl + s * (u - xl);
                area += (yl + y_u) / 2.0 * (u - xl);
            }
            area
        }
    }
}

/// `K = 1 + max_g sup_{u >= 0} u g''(u) / g'(u)` over the unshifted core functions.
///
/// Piecewise-linear costs contribute 0 (second derivative taken as 0 between
/// breakpoints).
pub fn curvature_k<'a>(functions: impl IntoIterator<Item = &'a CostFunction>) -> f64 {
    1.0 + functions
        .into_iter()
        .map(CostFunction::curvature_sup)
        .fold(0.0, f64::max)
}

/// The same sup taken over absolute time `t in (shift, horizon]`, i.e. with the
/// shift left inside the argument.
pub fn curvature_k_shifted<'a>(
    functions: impl IntoIterator<Item = &'a CostFunction>,
    horizon: f64,
) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for g in functions {
        let s = g.shift();
        if s > 0.0 && g.curvature_at_zero() > 0.0 {
            return Err(Error::UnboundedCurvature { horizon });
        }
        let span = horizon - s;
        if span <= 0.0 {
            continue;
        }
        for u in geometric_grid(span * 1e-9, span) {
            let d1 = core_d1(&g.family, u);
            if d1 > 0.0 {
                sup = sup.max((u + s) * core_d2(&g.family, u) / d1);
            }
        }
    }
    Ok(1.0 + sup)
}

/// `theta = sup (g(u+v) - g(u)) / (v g'(u))` over the functions, `v` in
/// `lengths` and `v <= u <= horizon`, in the unshifted argument.
pub fn stretch_theta<'a>(
    functions: impl IntoIterator<Item = &'a CostFunction>,
    lengths: &[f64],
    horizon: f64,
) -> Result<f64> {
    let functions: Vec<&CostFunction> = functions.into_iter().collect();
    let mut sup: f64 = 1.0;
    for &v in lengths {
        for g in &functions {
            sup = sup.max(theta_one(g, v, v, horizon)?);
        }
    }
    Ok(sup)
}

/// Like [`stretch_theta`] but every `v` is probed from the smallest length on.
pub fn stretch_theta_conservative<'a>(
    functions: impl IntoIterator<Item = &'a CostFunction>,
    lengths: &[f64],
    horizon: f64,
) -> Result<f64> {
    let functions: Vec<&CostFunction> = functions.into_iter().collect();
    let v_min = lengths.iter().copied().fold(f64::INFINITY, f64::min);
    let mut sup: f64 = 1.0;
    for &v in lengths {
        for g in &functions {
            sup = sup.max(theta_one(g, v, v_min, horizon)?);
        }
    }
    Ok(sup)
}

fn theta_one(g: &CostFunction, v: f64, from: f64, horizon: f64) -> Result<f64> {
    let f = &g.family;
    match f {
        Family::Linear { .. } => return Ok(1.0),
        // ((1+s)^k - 1) / (k s) is increasing in s = v/u, so the sup sits at u = from.
        Family::Power { k, .. } => {
            let s = v / from;
            return Ok(((1.0 + s).powf(*k) - 1.0) / (k * s));
        }
        // 1 + a2 v / (2 a2 u + a1), decreasing in u.
        Family::Poly { coeffs } if coeffs.len() <= 2 => {
            let a1 = coeffs[0];
            let a2 = coeffs.get(1).copied().unwrap_or(0.0);
            if a2 == 0.0 {
                return Ok(1.0);
            }
            return Ok(1.0 + a2 * v / (2.0 * a2 * from + a1));
        }
        _ => {}
    }
    let ratio = |u: f64| -> Result<Option<f64>> {
        let rise = core_value(f, u + v) - core_value(f, u);
        let d1 = core_d1(f, u);
        if d1 > 0.0 {
            Ok(Some(rise / (v * d1)))
        } else if rise > 0.0 {
            Err(Error::UnboundedTheta { t: u })
        } else {
            Ok(None)
        }
    };
    let hi = horizon.max(from);
    let mut grid = geometric_grid(from, hi);
    if let Family::Pwl { points } = f {
        for &(x, _) in points {
            for p in [x, x - v] {
                if p >= from && p <= hi {
                    grid.push(p);
                }
            }
        }
        grid.sort_by(f64::total_cmp);
    }
    let mut best = 1.0f64;
    let mut best_i = 0;
    for (i, &u) in grid.iter().enumerate() {
        if let Some(r) = ratio(u)? {
            if r > best {
                best = r;
                best_i = i;
            }
        }
    }
    if grid.len() > 2 {
        let lo = grid[best_i.saturating_sub(1)];
        let up = grid[(best_i + 1).min(grid.len() - 1)];
        let (u, _) = golden_section(lo, up, |u| -ratio(u).ok().flatten().unwrap_or(0.0));
        if let Some(r) = ratio(u)? {
            best = best.max(r);
        }
    }
    Ok(best)
}

/// `(1/v) ∫_r^{r+v} g(t) dt`.
pub fn d_constant(g: &CostFunction, r: f64, v: f64) -> f64 {
    g.definite_integral(r, r + v) / v
}

/// 256 points per decade from `lo` to `hi` inclusive.
fn geometric_grid(lo: f64, hi: f64) -> Vec<f64> {
    if !(lo > 0.0 && hi > lo) {
        return vec![hi.max(lo)];
    }
    let decades = (hi / lo).log10();
    let n = ((decades * 256.0).ceil() as usize).max(1);
    let mut grid: Vec<f64> = (0..=n).map(|i| lo * 10f64.powf(decades * i as f64 / n as f64)).collect();
    grid[n] = hi;
    grid
}

/// Minimizes a unimodal `f` on `[a, b]`; returns `(argmin, min)`.
pub(crate) fn golden_section(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if (b - a).abs() <= 1e-13 * (1.0 + a.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = (a + b) / 2.0;
    (x, f(x))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum FamilyTag {
    Linear,
    Power,
    Poly,
    Log,
    Pwl,
}

/// Wire form of a cost function.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct CostSpec {
    family: FamilyTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coeffs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    breakpoints: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    shift: f64,
}

impl TryFrom<CostSpec> for CostFunction {
    type Error = Error;

    fn try_from(spec: CostSpec) -> Result<Self> {
        let missing = |field: &str| Error::InvalidCost(format!("missing field `{field}`"));
        let family = match spec.family {
            FamilyTag::Linear => Family::Linear { rho: spec.rho.ok_or_else(|| missing("rho"))? },
            FamilyTag::Power => Family::Power {
                rho: spec.rho.ok_or_else(|| missing("rho"))?,
                k: spec.k.ok_or_else(|| missing("k"))?,
            },
            FamilyTag::Poly => Family::Poly { coeffs: spec.coeffs.ok_or_else(|| missing("coeffs"))? },
            FamilyTag::Log => Family::Log { rho: spec.rho.ok_or_else(|| missing("rho"))? },
            FamilyTag::Pwl => Family::Pwl {
                points: spec.breakpoints.ok_or_else(|| missing("breakpoints"))?,
            },
        };
        CostFunction::new(family, spec.shift)
    }
}

impl From<CostFunction> for CostSpec {
    fn from(g: CostFunction) -> Self {
        let mut spec = CostSpec {
            family: FamilyTag::Linear,
            rho: None,
            k: None,
            coeffs: None,
            breakpoints: None,
            shift: g.shift,
        };
        match g.family {
            Family::Linear { rho } => spec.rho = Some(rho),
            Family::Power { rho, k } => {
                spec.family = FamilyTag::Power;
                spec.rho = Some(rho);
                spec.k = Some(k);
            }
            Family::Poly { coeffs } => {
                spec.family = FamilyTag::Poly;
                spec.coeffs = Some(coeffs);
            }
            Family::Log { rho } => {
                spec.family = FamilyTag::Log;
                spec.rho = Some(rho);
            }
            Family::Pwl { points } => {
                spec.family = FamilyTag::Pwl;
                spec.breakpoints = Some(points);
            }
        }
        spec
    }
}
