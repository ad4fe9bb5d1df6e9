//! Built-in surfaces, their second-order jets, and prescribed-curvature fields.
//!
//! Every jet is coded analytically. Conformal charts additionally carry the
//! conformal factor `f = |S_u|² = |S_v|²`, its gradient and the two coupling
//! terms `⟨S_v,S_uu⟩`, `⟨S_u,S_vv⟩` used by the conformal fast path.

use std::f64::consts::{PI, SQRT_2, TAU};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ambient::{cross, dot, AmbientVector, Signature};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurfaceError {
    #[error("unknown surface `{name}`; valid names: {valid}")]
    UnknownSurface { name: String, valid: String },
    #[error("degenerate jet: S_u and S_v are dependent")]
    DegenerateJet,
    #[error("graph conversion failed at ({x}, {y}): {reason}")]
    GraphConversion { x: f64, y: f64, reason: String },
    #[error("invalid kappa specification `{0}`")]
    InvalidKappa(String),
}

/// Position and first and second parameter derivatives of an embedding.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SurfaceJet {
    pub s: AmbientVector,
    pub su: AmbientVector,
    pub sv: AmbientVector,
    pub suu: AmbientVector,
    pub suv: AmbientVector,
    pub svv: AmbientVector,
}

impl SurfaceJet {
    pub fn is_finite(&self) -> bool {
        [self.s, self.su, self.sv, self.suu, self.suv, self.svv]
            .iter()
            .all(AmbientVector::is_finite)
    }
}

/// Conformal metadata at one parameter point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConformalData {
    pub f: f64,
    pub fu: f64,
    pub fv: f64,
    /// ⟨S_v, S_uu⟩
    pub sv_suu: f64,
    /// ⟨S_u, S_vv⟩
    pub su_svv: f64,
}

/// Closed parameter box; infinite bounds are allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub u: (f64, f64),
    pub v: (f64, f64),
}

impl Domain {
    pub const UNBOUNDED: Domain = Domain {
        u: (f64::NEG_INFINITY, f64::INFINITY),
        v: (f64::NEG_INFINITY, f64::INFINITY),
    };

    pub fn square(half: f64) -> Self {
        Domain { u: (-half, half), v: (-half, half) }
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= self.u.0 && u <= self.u.1 && v >= self.v.0 && v <= self.v.1
    }
}

/// Per-coordinate period, `None` for non-periodic coordinates.
pub type Periods = [Option<f64>; 2];

/// Derivatives of a height function `f(u, v)` up to second order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HeightJet {
    pub f: f64,
    pub fu: f64,
    pub fv: f64,
    pub fuu: f64,
    pub fuv: f64,
    pub fvv: f64,
}

pub trait HeightFunction: Send + Sync + fmt::Debug {
    fn jet(&self, u: f64, v: f64) -> Result<HeightJet, SurfaceError>;
    fn describe(&self) -> String;
}

/// Polynomial height of total degree at most three: `f = Σ c[i][j] u^i v^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicHeight {
    coeffs: [[f64; 4]; 4],
    label: String,
}

impl CubicHeight {
    /// Coefficients `c[i][j]` of `u^i v^j`; entries with `i + j > 3` must be zero.
    pub fn new(coeffs: [[f64; 4]; 4], label: impl Into<String>) -> Self {
        for (i, row) in coeffs.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                assert!(i + j <= 3 || *c == 0.0, "degree above three");
            }
        }
        Self { coeffs, label: label.into() }
    }

    /// `f = u + ½(a u² + 2b uv + c v²)`: lightlike tangent plane at the origin
    /// with gradient (1, 0) and Hessian (a, b, c).
    pub fn quadratic_lightlike(fuu: f64, fuv: f64, fvv: f64) -> Self {
        let mut c = [[0.0; 4]; 4];
        c[1][0] = 1.0;
        c[2][0] = 0.5 * fuu;
        c[1][1] = fuv;
        c[0][2] = 0.5 * fvv;
        Self::new(c, format!("quadratic:{fuu},{fuv},{fvv}"))
    }

    /// `f = u + ½ c v² − k u v²`. Lightlike along `v = 0` and spacelike on both
    /// sides near the origin when `2k > c²`.
    pub fn lightlike_fold(c: f64, k: f64) -> Self {
        let mut m = [[0.0; 4]; 4];
        m[1][0] = 1.0;
        m[0][2] = 0.5 * c;
        m[1][2] = -k;
        Self::new(m, format!("fold:{c},{k}"))
    }
}

impl HeightFunction for CubicHeight {
    fn jet(&self, u: f64, v: f64) -> Result<HeightJet, SurfaceError> {
        let pu = [1.0, u, u * u, u * u * u];
        let pv = [1.0, v, v * v, v * v * v];
        let mut j = HeightJet::default();
        for i in 0..4 {
            for k in 0..(4 - i) {
                let c = self.coeffs[i][k];
                if c == 0.0 {
                    continue;
                }
                let (fi, fk) = (i as f64, k as f64);
                j.f += c * pu[i] * pv[k];
                if i >= 1 {
                    j.fu += c * fi * pu[i - 1] * pv[k];
                }
                if k >= 1 {
                    j.fv += c * fk * pu[i] * pv[k - 1];
                }
                if i >= 2 {
                    j.fuu += c * fi * (fi - 1.0) * pu[i - 2] * pv[k];
                }
                if i >= 1 && k >= 1 {
                    j.fuv += c * fi * fk * pu[i - 1] * pv[k - 1];
                }
                if k >= 2 {
                    j.fvv += c * fk * (fk - 1.0) * pu[i] * pv[k - 2];
                }
            }
        }
        Ok(j)
    }

    fn describe(&self) -> String {
        self.label.clone()
    }
}

/// The maximal Enneper surface as a height function over the horizontal
/// plane, obtained by Newton-inverting the horizontal projection of the
/// conformal chart. Only valid where that projection is a local
/// diffeomorphism, i.e. off the singular circle `u² + v² = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaximalEnneperGraph {
    /// Chart point used to seed the Newton iteration.
    pub seed: (f64, f64),
}

impl MaximalEnneperGraph {
    pub const NEWTON_TOL: f64 = 1e-12;

    /// Horizontal projection of the chart.
    pub fn project(u: f64, v: f64) -> (f64, f64) {
        (u + u * u * u / 3.0 - u * v * v, -v - v * v * v / 3.0 + v * u * u)
    }

    /// Solve `project(u, v) = (x, y)` starting from the seed.
    pub fn invert(&self, x: f64, y: f64) -> Result<(f64, f64), SurfaceError> {
        let (mut u, mut v) = self.seed;
        for _ in 0..60 {
            let (px, py) = Self::project(u, v);
            let (rx, ry) = (px - x, py - y);
            if rx.hypot(ry) <= Self::NEWTON_TOL * (1.0 + x.hypot(y)) {
                return Ok((u, v));
            }
            let (a, b, c, d) = (1.0 + u * u - v * v, -2.0 * u * v, 2.0 * u * v, -1.0 - v * v + u * u);
            let det = a * d - b * c;
            if det.abs() < 1e-14 {
                return Err(SurfaceError::GraphConversion {
                    x,
                    y,
                    reason: "horizontal projection is singular (lightlike circle)".into(),
                });
            }
            u -= (d * rx - b * ry) / det;
            v -= (-c * rx + a * ry) / det;
        }
        Err(SurfaceError::GraphConversion { x, y, reason: "Newton iteration did not converge".into() })
    }

    /// Graph jet at the chart point (u, v) via implicit differentiation.
    pub fn jet_at_chart_point(u: f64, v: f64) -> Result<HeightJet, SurfaceError> {
        let (x, y) = Self::project(u, v);
        let (a, b, c, d) = (1.0 + u * u - v * v, -2.0 * u * v, 2.0 * u * v, -1.0 - v * v + u * u);
        let det = a * d - b * c;
        if det.abs() < 1e-14 {
            return Err(SurfaceError::GraphConversion {
                x,
                y,
                reason: "horizontal projection is singular (lightlike circle)".into(),
            });
        }
        // inverse of J = [[a, b], [c, d]] (rows: x, y; columns: u, v)
        let inv = [[d / det, -b / det], [-c / det, a / det]];
        let (zu, zv) = (-2.0 * u, 2.0 * v);
        // ∇f = J^{-T} ∇z
        let fx = inv[0][0] * zu + inv[1][0] * zv;
        let fy = inv[0][1] * zu + inv[1][1] * zv;
        // z_ab − f_x x_ab − f_y y_ab, then H_f = J^{-T} M J^{-1}
        let m = [
            [-2.0 - fx * 2.0 * u - fy * 2.0 * v, -fx * (-2.0 * v) - fy * 2.0 * u],
            [-fx * (-2.0 * v) - fy * 2.0 * u, 2.0 - fx * (-2.0 * u) - fy * (-2.0 * v)],
        ];
        let mut h = [[0.0; 2]; 2];
        for (i, hi) in h.iter_mut().enumerate() {
            for (j, hij) in hi.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (k, mk) in m.iter().enumerate() {
                    for (l, mkl) in mk.iter().enumerate() {
                        acc += inv[k][i] * mkl * inv[l][j];
                    }
                }
                *hij = acc;
            }
        }
        Ok(HeightJet { f: v * v - u * u, fu: fx, fv: fy, fuu: h[0][0], fuv: h[0][1], fvv: h[1][1] })
    }
}

impl HeightFunction for MaximalEnneperGraph {
    fn jet(&self, x: f64, y: f64) -> Result<HeightJet, SurfaceError> {
        let (u, v) = self.invert(x, y)?;
        Self::jet_at_chart_point(u, v)
    }

    fn describe(&self) -> String {
        format!("maximal-enneper-graph@{},{}", self.seed.0, self.seed.1)
    }
}

/// Graph `S(u, v) = (u, v, f(u, v))` in Minkowski space.
#[derive(Debug, Clone)]
pub struct GraphSurface {
    pub height: Arc<dyn HeightFunction>,
}

impl GraphSurface {
    pub fn new(height: impl HeightFunction + 'static) -> Self {
        Self { height: Arc::new(height) }
    }

    pub fn height_jet(&self, u: f64, v: f64) -> Result<HeightJet, SurfaceError> {
        self.height.jet(u, v)
    }
}

/// `D = 1 − f_u² − f_v²`: positive on spacelike points, zero on lightlike ones.
pub fn lightlike_defect(g: &GraphSurface, u: f64, v: f64) -> Result<f64, SurfaceError> {
    let j = g.height_jet(u, v)?;
    Ok(1.0 - j.fu * j.fu - j.fv * j.fv)
}

#[derive(Debug, Clone)]
pub enum Geometry {
    Sphere,
    CliffordTorus,
    Catenoid,
    Enneper,
    MaximalEnneper,
    CycloidRev,
    /// The coordinate plane `(u, v, 0)`.
    Plane,
    Graph(GraphSurface),
}

#[derive(Debug, Clone)]
pub struct SurfaceSpec {
    pub name: String,
    pub signature: Signature,
    pub periods: Periods,
    pub domain: Domain,
    pub geometry: Geometry,
}

/// Names of the built-in catalog, in catalog order.
pub const CATALOG_NAMES: [&str; 6] =
    ["sphere", "clifford-torus", "catenoid", "enneper", "maximal-enneper", "cycloid-rev"];

pub fn catalog() -> Vec<SurfaceSpec> {
    CATALOG_NAMES
        .iter()
        .map(|n| SurfaceSpec::by_name(n).expect("catalog name"))
        .collect()
}

impl SurfaceSpec {
    pub fn by_name(name: &str) -> Result<Self, SurfaceError> {
        use Geometry::*;
        let (signature, periods, domain, geometry) = match name {
            "sphere" => (
                Signature::Euclidean,
                [None, Some(TAU)],
                Domain { u: (-PI / 2.0, PI / 2.0), v: Domain::UNBOUNDED.v },
                Sphere,
            ),
            "clifford-torus" => {
                (Signature::Euclidean, [Some(TAU), Some(TAU)], Domain::UNBOUNDED, CliffordTorus)
            }
            "catenoid" => (
                Signature::Euclidean,
                [None, Some(TAU)],
                Domain { u: (-4.0, 4.0), v: Domain::UNBOUNDED.v },
                Catenoid,
            ),
            "enneper" => (Signature::Euclidean, [None, None], Domain::square(4.0), Enneper),
            "maximal-enneper" => {
                (Signature::Lorentzian, [None, None], Domain::square(3.0), MaximalEnneper)
            }
            // The cycloid chart is only periodic in v: S(u + 2π, v) is a vertical translate.
            "cycloid-rev" => (Signature::Euclidean, [None, Some(TAU)], Domain::UNBOUNDED, CycloidRev),
            "plane" => (Signature::Euclidean, [None, None], Domain::UNBOUNDED, Plane),
            _ => {
                return Err(SurfaceError::UnknownSurface {
                    name: name.to_string(),
                    valid: CATALOG_NAMES.join(", "),
                })
            }
        };
        Ok(Self { name: name.to_string(), signature, periods, domain, geometry })
    }

    /// Flat Euclidean plane, used for planar test curves.
    pub fn plane() -> Self {
        Self::by_name("plane").expect("plane")
    }

    pub fn from_graph(name: impl Into<String>, graph: GraphSurface, domain: Domain) -> Self {
        Self {
            name: name.into(),
            signature: Signature::Lorentzian,
            periods: [None, None],
            domain,
            geometry: Geometry::Graph(graph),
        }
    }

    pub fn is_conformal(&self) -> bool {
        matches!(
            self.geometry,
            Geometry::Catenoid | Geometry::Enneper | Geometry::MaximalEnneper | Geometry::Plane
        )
    }

    pub fn graph(&self) -> Option<&GraphSurface> {
        match &self.geometry {
            Geometry::Graph(g) => Some(g),
            _ => None,
        }
    }

    pub fn position(&self, u: f64, v: f64) -> Result<AmbientVector, SurfaceError> {
        Ok(self.jet(u, v)?.s)
    }

    pub fn jet(&self, u: f64, v: f64) -> Result<SurfaceJet, SurfaceError> {
        let av = AmbientVector::new;
        let jet = match &self.geometry {
            Geometry::Sphere => {
                let (su_, cu) = u.sin_cos();
                let (sv_, cv) = v.sin_cos();
                SurfaceJet {
                    s: av(cu * cv, cu * sv_, su_),
                    su: av(-su_ * cv, -su_ * sv_, cu),
                    sv: av(-cu * sv_, cu * cv, 0.0),
                    suu: av(-cu * cv, -cu * sv_, -su_),
                    suv: av(su_ * sv_, -su_ * cv, 0.0),
                    svv: av(-cu * cv, -cu * sv_, 0.0),
                }
            }
            Geometry::CliffordTorus => revolution_jet(u, v, SQRT_2, |u| {
                let (s, c) = u.sin_cos();
                // profile (radius, height) and derivatives
                ((c, -s, -c), (s, c, -s))
            }),
            Geometry::CycloidRev => revolution_jet(u, v, 2.0, |u| {
                let (s, c) = u.sin_cos();
                ((c, -s, -c), (u - s, 1.0 - c, s))
            }),
            Geometry::Catenoid => {
                let (sh, ch) = (u.sinh(), u.cosh());
                let (sv_, cv) = v.sin_cos();
                SurfaceJet {
                    s: av(ch * cv, ch * sv_, u),
                    su: av(sh * cv, sh * sv_, 1.0),
                    sv: av(-ch * sv_, ch * cv, 0.0),
                    suu: av(ch * cv, ch * sv_, 0.0),
                    suv: av(-sh * sv_, sh * cv, 0.0),
                    svv: av(-ch * cv, -ch * sv_, 0.0),
                }
            }
            Geometry::Enneper => SurfaceJet {
                s: av(u - u * u * u / 3.0 + u * v * v, -v + v * v * v / 3.0 - v * u * u, u * u - v * v),
                su: av(1.0 - u * u + v * v, -2.0 * u * v, 2.0 * u),
                sv: av(2.0 * u * v, -1.0 + v * v - u * u, -2.0 * v),
                suu: av(-2.0 * u, -2.0 * v, 2.0),
                suv: av(2.0 * v, -2.0 * u, 0.0),
                svv: av(2.0 * u, 2.0 * v, -2.0),
            },
            Geometry::MaximalEnneper => SurfaceJet {
                s: av(u + u * u * u / 3.0 - u * v * v, -v - v * v * v / 3.0 + v * u * u, v * v - u * u),
                su: av(1.0 + u * u - v * v, 2.0 * u * v, -2.0 * u),
                sv: av(-2.0 * u * v, -1.0 - v * v + u * u, 2.0 * v),
                suu: av(2.0 * u, 2.0 * v, -2.0),
                suv: av(-2.0 * v, 2.0 * u, 0.0),
                svv: av(-2.0 * u, -2.0 * v, 2.0),
            },
            Geometry::Plane => SurfaceJet {
                s: av(u, v, 0.0),
                su: av(1.0, 0.0, 0.0),
                sv: av(0.0, 1.0, 0.0),
                ..SurfaceJet::default()
            },
            Geometry::Graph(g) => {
                let h = g.height_jet(u, v)?;
                SurfaceJet {
                    s: av(u, v, h.f),
                    su: av(1.0, 0.0, h.fu),
                    sv: av(0.0, 1.0, h.fv),
                    suu: av(0.0, 0.0, h.fuu),
                    suv: av(0.0, 0.0, h.fuv),
                    svv: av(0.0, 0.0, h.fvv),
                }
            }
        };
        Ok(jet)
    }

    /// Closed-form conformal metadata, `None` for non-conformal charts.
    pub fn conformal(&self, u: f64, v: f64) -> Option<ConformalData> {
        let data = match self.geometry {
            Geometry::Catenoid => {
                let (sh, ch) = (u.sinh(), u.cosh());
                ConformalData { f: ch * ch, fu: 2.0 * sh * ch, fv: 0.0, sv_suu: 0.0, su_svv: -sh * ch }
            }
            Geometry::Enneper => {
                let w = 1.0 + u * u + v * v;
                ConformalData {
                    f: w * w,
                    fu: 4.0 * u * w,
                    fv: 4.0 * v * w,
                    sv_suu: -2.0 * v * w,
                    su_svv: -2.0 * u * w,
                }
            }
            Geometry::MaximalEnneper => {
                let w = 1.0 - u * u - v * v;
                ConformalData {
                    f: w * w,
                    fu: -4.0 * u * w,
                    fv: -4.0 * v * w,
                    sv_suu: 2.0 * v * w,
                    su_svv: 2.0 * u * w,
                }
            }
            Geometry::Plane => ConformalData { f: 1.0, fu: 0.0, fv: 0.0, sv_suu: 0.0, su_svv: 0.0 },
            _ => return None,
        };
        Some(data)
    }
}

/// Jet of a surface of revolution `((R + r(u)) cos v, (R + r(u)) sin v, h(u))`,
/// with `profile(u) = ((r, r', r''), (h, h', h''))`.
fn revolution_jet(
    u: f64,
    v: f64,
    offset: f64,
    profile: impl Fn(f64) -> ((f64, f64, f64), (f64, f64, f64)),
) -> SurfaceJet {
    let ((r, r1, r2), (h, h1, h2)) = profile(u);
    let rad = offset + r;
    let (sv_, cv) = v.sin_cos();
    let av = AmbientVector::new;
    SurfaceJet {
        s: av(rad * cv, rad * sv_, h),
        su: av(r1 * cv, r1 * sv_, h1),
        sv: av(-rad * sv_, rad * cv, 0.0),
        suu: av(r2 * cv, r2 * sv_, h2),
        suv: av(-r1 * sv_, r1 * cv, 0.0),
        svv: av(-rad * cv, -rad * sv_, 0.0),
    }
}

/// (E, F, G) under the given signature.
pub fn first_fundamental(jet: &SurfaceJet, sig: Signature) -> (f64, f64, f64) {
    (dot(sig, jet.su, jet.su), dot(sig, jet.su, jet.sv), dot(sig, jet.sv, jet.sv))
}

/// Unnormalized normal `S_u × S_v` in the ambient signature.
pub fn normal(jet: &SurfaceJet, sig: Signature) -> Result<AmbientVector, SurfaceError> {
    let n = cross(sig, jet.su, jet.sv);
    if n.euclidean_norm() <= 1e-14 * jet.su.euclidean_norm() * jet.sv.euclidean_norm()
        || !n.is_finite()
    {
        return Err(SurfaceError::DegenerateJet);
    }
    Ok(n)
}

/// Uniform grid for tabulated κ, row-major in u.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaTable {
    pub u_range: (f64, f64),
    pub v_range: (f64, f64),
    /// `values[i][j]` at `u_i`, `v_j`.
    pub values: Vec<Vec<f64>>,
}

impl KappaTable {
    pub fn validate(&self) -> Result<(), String> {
        let nu = self.values.len();
        let nv = self.values.first().map_or(0, Vec::len);
        if nu < 2 || nv < 2 {
            return Err("table needs at least 2×2 values".into());
        }
        if self.values.iter().any(|row| row.len() != nv) {
            return Err("ragged table rows".into());
        }
        if self.values.iter().flatten().any(|x| !x.is_finite()) {
            return Err("non-finite table entry".into());
        }
        if !(self.u_range.1 > self.u_range.0 && self.v_range.1 > self.v_range.0) {
            return Err("empty table range".into());
        }
        Ok(())
    }

    /// Bilinear interpolation, constant extrapolation outside the grid.
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        let nu = self.values.len();
        let nv = self.values[0].len();
        let locate = |x: f64, (lo, hi): (f64, f64), n: usize| {
            let t = ((x - lo) / (hi - lo)).clamp(0.0, 1.0) * (n - 1) as f64;
            let i = (t.floor() as usize).min(n - 2);
            (i, t - i as f64)
        };
        let (i, a) = locate(u, self.u_range, nu);
        let (j, b) = locate(v, self.v_range, nv);
        let q = &self.values;
        (1.0 - a) * ((1.0 - b) * q[i][j] + b * q[i][j + 1])
            + a * ((1.0 - b) * q[i + 1][j] + b * q[i + 1][j + 1])
    }
}

/// Prescribed geodesic curvature as a function on the surface.
#[derive(Debug, Clone, PartialEq)]
pub enum KappaField {
    Zero,
    Constant(f64),
    /// `scale · sin u`
    SinU(f64),
    Table(Arc<KappaTable>),
}

impl KappaField {
    #[inline]
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        match self {
            KappaField::Zero => 0.0,
            KappaField::Constant(k) => *k,
            KappaField::SinU(s) => s * u.sin(),
            KappaField::Table(t) => t.eval(u, v),
        }
    }

    pub fn scaled(&self, factor: f64) -> KappaField {
        match self {
            KappaField::Zero => KappaField::Zero,
            KappaField::Constant(k) => KappaField::Constant(k * factor),
            KappaField::SinU(s) => KappaField::SinU(s * factor),
            KappaField::Table(t) => {
                let mut t = (**t).clone();
                t.values.iter_mut().flatten().for_each(|x| *x *= factor);
                KappaField::Table(Arc::new(t))
            }
        }
    }
}

impl fmt::Display for KappaField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KappaField::Zero => write!(f, "zero"),
            KappaField::Constant(k) => write!(f, "const:{k:?}"),
            KappaField::SinU(s) => write!(f, "sin-u:{s:?}"),
            KappaField::Table(_) => write!(f, "table"),
        }
    }
}

impl FromStr for KappaField {
    type Err = SurfaceError;

    /// Accepts `zero`, `const:<k>`, `sin-u` and `sin-u:<scale>`. Tables are
    /// loaded from files by the CLI.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SurfaceError::InvalidKappa(s.to_string());
        let num = |x: &str| x.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(bad);
        let s = s.trim();
        match s.split_once(':') {
            None if s == "zero" => Ok(KappaField::Zero),
            None if s == "sin-u" => Ok(KappaField::SinU(1.0)),
            Some(("const", k)) => Ok(KappaField::Constant(num(k)?)),
            Some(("sin-u", k)) => Ok(KappaField::SinU(num(k)?)),
            _ => Err(bad()),
        }
    }
}
