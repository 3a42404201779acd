//! Loops of divisors, their shadows on the torus, winding numbers of gauge
//! transformations along cycles, current pairings and the duality matrix.

use crate::berry::{parallel_transport, HolonomyReport, TransportOptions};
use crate::error::{Error, Result};
use crate::lattice::{torus_dist, Divisor, GaugeTransform, TorusGrid, C64};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopKind {
    BoundingCircle,
    AlphaCycle,
    BetaCycle,
    Interchange,
    Custom,
}

/// Parameters for [`make_loop`]; unused fields are ignored per kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopParams {
    /// Index of the moving point (single-vortex loops).
    pub mover: usize,
    pub radius: f64,
    /// Indices of the two swapped points (interchange).
    pub pair: [usize; 2],
    /// Lens sagitta as a fraction of the half-chord (interchange).
    pub bulge: f64,
    /// Reverse the orientation.
    pub reversed: bool,
    /// Explicit closed or open polylines per point (custom), unwrapped.
    pub tracks: Vec<Vec<[f64; 2]>>,
}

impl Default for LoopParams {
    fn default() -> Self {
        LoopParams { mover: 0, radius: 0.15, pair: [0, 1], bulge: 0.6, reversed: false, tracks: vec![] }
    }
}

/// A point track parametrized on `t ∈ [0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Curve {
    Constant([f64; 2]),
    Circle { center: [f64; 2], radius: f64, angle0: f64, sweep: f64 },
    Line { start: [f64; 2], delta: [f64; 2] },
    Polyline(Vec<[f64; 2]>),
}

impl Curve {
    pub fn at(&self, t: f64) -> [f64; 2] {
        match self {
            Curve::Constant(p) => *p,
            Curve::Circle { center, radius, angle0, sweep } => {
                let a = angle0 + sweep * t;
                [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
            }
            Curve::Line { start, delta } => [start[0] + t * delta[0], start[1] + t * delta[1]],
            Curve::Polyline(pts) => {
                let m = pts.len() - 1;
                if m == 0 {
                    return pts[0];
                }
                let s = (t.clamp(0.0, 1.0) * m as f64).min(m as f64 - 1e-12);
                let i = s.floor() as usize;
                let f = s - i as f64;
                [pts[i][0] + f * (pts[i + 1][0] - pts[i][0]), pts[i][1] + f * (pts[i + 1][1] - pts[i][1])]
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Curve::Constant(_) => true,
            Curve::Polyline(p) => p.iter().all(|q| q == &p[0]),
            _ => false,
        }
    }

    fn reversed(&self) -> Curve {
        match self {
            Curve::Constant(p) => Curve::Constant(*p),
            Curve::Circle { center, radius, angle0, sweep } => {
                Curve::Circle { center: *center, radius: *radius, angle0: angle0 + sweep, sweep: -sweep }
            }
            Curve::Line { start, delta } => Curve::Line {
                start: [start[0] + delta[0], start[1] + delta[1]],
                delta: [-delta[0], -delta[1]],
            },
            Curve::Polyline(p) => Curve::Polyline(p.iter().rev().cloned().collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopPath {
    pub kind: LoopKind,
    pub curves: Vec<Curve>,
    pub samples: usize,
    pub basepoint: Divisor,
}

impl LoopPath {
    pub fn divisor_at(&self, t: f64) -> Divisor {
        Divisor::new(self.curves.iter().map(|c| c.at(t)).collect())
    }

    /// Sampled tracks, `samples + 1` points each.
    pub fn tracks(&self) -> Vec<Vec<[f64; 2]>> {
        self.curves
            .iter()
            .map(|c| (0..=self.samples).map(|k| c.at(k as f64 / self.samples as f64)).collect())
            .collect()
    }

    pub fn with_samples(&self, samples: usize) -> LoopPath {
        LoopPath { samples, ..self.clone() }
    }

    pub fn reversed(&self) -> LoopPath {
        LoopPath { curves: self.curves.iter().map(Curve::reversed).collect(), ..self.clone() }
    }

    /// Every sample keeps the points more than `4·spacing` apart.
    pub fn check_regular(&self, grid: &TorusGrid) -> Result<()> {
        let fine = self.samples.max(64) * 4;
        for k in 0..=fine {
            let d = self.divisor_at(k as f64 / fine as f64);
            let sep = d.min_separation(grid);
            if sep <= 4.0 * grid.spacing {
                return Err(Error::Config(format!(
                    "loop approaches the diagonal: separation {sep:.4} at t = {:.4}",
                    k as f64 / fine as f64
                )));
            }
        }
        Ok(())
    }

    /// Endpoint divisors agree as unordered sets modulo the period lattice.
    pub fn check_closed(&self, grid: &TorusGrid) -> Result<()> {
        let a = self.divisor_at(0.0);
        let b = self.divisor_at(1.0);
        if !same_divisor(&a, &b, grid) {
            return Err(Error::LoopClosure("loop endpoints are different divisors".into()));
        }
        Ok(())
    }
}

pub fn same_divisor(a: &Divisor, b: &Divisor, grid: &TorusGrid) -> bool {
    if a.d() != b.d() {
        return false;
    }
    let mut used = vec![false; b.d()];
    for p in &a.points {
        match (0..b.d()).find(|&j| !used[j] && torus_dist(*p, b.points[j], grid) < 1e-9) {
            Some(j) => used[j] = true,
            None => return false,
        }
    }
    true
}

fn lens_arcs(p: [f64; 2], q: [f64; 2], bulge: f64) -> (Curve, Curve) {
    let m = [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0];
    let c = [q[0] - p[0], q[1] - p[1]];
    let h = c[0].hypot(c[1]) / 2.0;
    let left = [-c[1] / (2.0 * h), c[0] / (2.0 * h)];
    let s = bulge * h;
    let r = (h * h + s * s) / (2.0 * s);
    let arc = |from: [f64; 2], side: [f64; 2]| {
        let center = [m[0] - (r - s) * side[0], m[1] - (r - s) * side[1]];
        let a0 = (from[1] - center[1]).atan2(from[0] - center[0]);
        let apex = [m[0] + s * side[0], m[1] + s * side[1]];
        let aa = (apex[1] - center[1]).atan2(apex[0] - center[0]);
        let half = (aa - a0 + PI).rem_euclid(2.0 * PI) - PI;
        Curve::Circle { center, radius: r, angle0: a0, sweep: 2.0 * half }
    };
    // Interior on the left of the motion: p → q bulges right, q → p bulges left.
    (arc(p, [-left[0], -left[1]]), arc(q, left))
}

pub fn make_loop(kind: LoopKind, params: &LoopParams, divisor: &Divisor, grid: &TorusGrid, samples: usize) -> Result<LoopPath> {
    let d = divisor.d();
    let mut curves: Vec<Curve> = divisor.points.iter().map(|&p| Curve::Constant(p)).collect();
    let l = grid.side_length;
    let mover = |i: usize| -> Result<[f64; 2]> {
        divisor
            .points
            .get(i)
            .copied()
            .ok_or_else(|| Error::Config(format!("loop moves point {i} of a degree-{d} divisor")))
    };
    match kind {
        LoopKind::BoundingCircle => {
            let p = mover(params.mover)?;
            if !(params.radius > 0.0) {
                return Err(Error::Config("circle radius must be positive".into()));
            }
            curves[params.mover] = Curve::Circle {
                center: [p[0] - params.radius, p[1]],
                radius: params.radius,
                angle0: 0.0,
                sweep: 2.0 * PI,
            };
        }
        LoopKind::AlphaCycle => {
            let p = mover(params.mover)?;
            curves[params.mover] = Curve::Line { start: p, delta: [l, 0.0] };
        }
        LoopKind::BetaCycle => {
            let p = mover(params.mover)?;
            curves[params.mover] = Curve::Line { start: p, delta: [0.0, l] };
        }
        LoopKind::Interchange => {
            let [a, b] = params.pair;
            if a == b {
                return Err(Error::Config("interchange needs two distinct points".into()));
            }
            let (p, q) = (mover(a)?, mover(b)?);
            if !(params.bulge > 0.0 && params.bulge <= 1.0) {
                return Err(Error::Config("lens bulge must lie in (0, 1]".into()));
            }
            let (c1, c2) = lens_arcs(p, q, params.bulge);
            curves[a] = c1;
            curves[b] = c2;
        }
        LoopKind::Custom => {
            if params.tracks.len() != d {
                return Err(Error::Config("custom loop needs one track per divisor point".into()));
            }
            for (i, t) in params.tracks.iter().enumerate() {
                if t.is_empty() {
                    return Err(Error::Config("empty custom track".into()));
                }
                curves[i] = Curve::Polyline(t.clone());
            }
        }
    }
    let mut path = LoopPath { kind, curves, samples, basepoint: divisor.clone() };
    if params.reversed {
        path = path.reversed();
    }
    path.check_closed(grid)?;
    path.check_regular(grid)?;
    Ok(path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shadow {
    pub polylines: Vec<Vec<[f64; 2]>>,
    pub homology_class: (i64, i64),
}

fn lattice_offset(a: [f64; 2], b: [f64; 2], l: f64) -> Option<[f64; 2]> {
    let dx = ((b[0] - a[0]) / l).round() * l;
    let dy = ((b[1] - a[1]) / l).round() * l;
    if (b[0] - a[0] - dx).abs() < 1e-9 && (b[1] - a[1] - dy).abs() < 1e-9 {
        Some([dx, dy])
    } else {
        None
    }
}

pub fn shadow(path: &LoopPath, grid: &TorusGrid) -> Result<Shadow> {
    let l = grid.side_length;
    let tracks = path.tracks();
    let mut open: Vec<Vec<[f64; 2]>> = path
        .curves
        .iter()
        .zip(tracks)
        .filter(|(c, _)| !c.is_constant())
        .map(|(_, t)| t)
        .collect();
    let mut polylines = Vec::new();
    let mut class = (0i64, 0i64);
    while !open.is_empty() {
        let mut chain = open.remove(0);
        let start = chain[0];
        loop {
            let end = *chain.last().unwrap();
            if lattice_offset(start, end, l).is_some() {
                break;
            }
            let next = open.iter().position(|t| lattice_offset(end, t[0], l).is_some());
            match next {
                Some(i) => {
                    let t = open.remove(i);
                    let off = lattice_offset(t[0], end, l).unwrap();
                    chain.extend(t.iter().skip(1).map(|p| [p[0] + off[0], p[1] + off[1]]));
                }
                None => return Err(Error::LoopClosure("shadow tracks do not concatenate to a cycle".into())),
            }
        }
        let off = lattice_offset(start, *chain.last().unwrap(), l).unwrap();
        class.0 += ((chain.last().unwrap()[0] - start[0]) / l).round() as i64;
        class.1 += ((chain.last().unwrap()[1] - start[1]) / l).round() as i64;
        let _ = off;
        polylines.push(chain);
    }
    Ok(Shadow { polylines, homology_class: class })
}

fn seg_dist(x: [f64; 2], a: [f64; 2], b: [f64; 2], l: f64) -> f64 {
    // Minimal image of x relative to a.
    let wrap = |v: f64| (v + 0.5 * l).rem_euclid(l) - 0.5 * l;
    let px = [wrap(x[0] - a[0]), wrap(x[1] - a[1])];
    let d = [b[0] - a[0], b[1] - a[1]];
    let dd = d[0] * d[0] + d[1] * d[1];
    let t = if dd > 0.0 { ((px[0] * d[0] + px[1] * d[1]) / dd).clamp(0.0, 1.0) } else { 0.0 };
    (px[0] - t * d[0]).hypot(px[1] - t * d[1])
}

impl Shadow {
    /// Torus distance from `x` to the shadow (`∞` when empty).
    pub fn distance(&self, x: [f64; 2], grid: &TorusGrid) -> f64 {
        let mut m = f64::INFINITY;
        for pl in &self.polylines {
            for s in pl.windows(2) {
                m = m.min(seg_dist(x, s[0], s[1], grid.side_length));
            }
        }
        m
    }

    pub fn distance_field(&self, grid: &TorusGrid) -> Vec<f64> {
        (0..grid.sites()).map(|k| self.distance(grid.coords(k), grid)).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.polylines.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CyclePath {
    pub name: String,
    pub samples: Vec<[f64; 2]>,
}

impl CyclePath {
    /// Horizontal closed row at height `y`, one sample per site.
    pub fn row(name: &str, y: f64, grid: &TorusGrid) -> Self {
        let ys = (y / grid.spacing).round() * grid.spacing;
        CyclePath {
            name: name.into(),
            samples: (0..=grid.n).map(|i| [i as f64 * grid.spacing, ys]).collect(),
        }
    }

    /// Vertical closed column at abscissa `x`.
    pub fn column(name: &str, x: f64, grid: &TorusGrid) -> Self {
        let xs = (x / grid.spacing).round() * grid.spacing;
        CyclePath {
            name: name.into(),
            samples: (0..=grid.n).map(|j| [xs, j as f64 * grid.spacing]).collect(),
        }
    }

    pub fn reversed(&self) -> Self {
        CyclePath { name: self.name.clone(), samples: self.samples.iter().rev().cloned().collect() }
    }

    /// Concatenation; `other` must start where `self` ends (modulo periods).
    pub fn concat(&self, other: &CyclePath) -> Self {
        let mut s = self.samples.clone();
        s.extend(other.samples.iter().skip(1));
        CyclePath { name: format!("{}*{}", self.name, other.name), samples: s }
    }
}

/// Bilinear interpolation of a site field, renormalized to the unit circle.
pub fn sample_unit(g: &[C64], x: [f64; 2], grid: &TorusGrid) -> C64 {
    let n = grid.n as isize;
    let u = x[0] / grid.spacing;
    let v = x[1] / grid.spacing;
    let (i0, j0) = (u.floor(), v.floor());
    let (fx, fy) = (u - i0, v - j0);
    let at = |di: isize, dj: isize| {
        let i = (i0 as isize + di).rem_euclid(n);
        let j = (j0 as isize + dj).rem_euclid(n);
        g[(j * n + i) as usize]
    };
    let z = at(0, 0) * ((1.0 - fx) * (1.0 - fy))
        + at(1, 0) * (fx * (1.0 - fy))
        + at(0, 1) * ((1.0 - fx) * fy)
        + at(1, 1) * (fx * fy);
    if z.norm() > 0.0 {
        z / z.norm()
    } else {
        z
    }
}

/// Sum of principal phase increments along a sampled path, in units of 2π.
pub fn phase_increment(values: &[C64]) -> Result<f64> {
    let mut s = 0.0;
    for w in values.windows(2) {
        let d = (w[1] * w[0].conj()).arg();
        if d.abs() >= PI / 2.0 {
            return Err(Error::Resolution(format!("phase step {d:.3} too large along path")));
        }
        s += d;
    }
    Ok(s / (2.0 * PI))
}

pub fn winding(g: &GaugeTransform, cycle: &CyclePath, grid: &TorusGrid) -> Result<i64> {
    let vals: Vec<C64> = cycle.samples.iter().map(|&x| sample_unit(&g.g, x, grid)).collect();
    let w = phase_increment(&vals)?;
    Ok(w.round() as i64)
}

/// Low-frequency test 1-form `b = Σ_m c_m · trig(2π(k_m·x)/L)` per component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TestForm {
    Fourier(Vec<FourierMode>),
    /// `b = bump(|x − center|/radius) · dir`, compactly supported.
    Bump { center: [f64; 2], radius: f64, dir: [f64; 2] },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierMode {
    /// 0 for the dx component, 1 for dy.
    pub component: usize,
    pub k: [i32; 2],
    pub cos: f64,
    pub sin: f64,
}

const fn mode(component: usize, k: [i32; 2], cos: f64, sin: f64) -> FourierMode {
    FourierMode { component, k, cos, sin }
}

/// The five fixed band-limited test forms.
pub const TEST_FORMS: [&[FourierMode]; 5] = [
    &[mode(0, [0, 1], 1.0, 0.0)],
    &[mode(1, [1, 0], 0.0, 1.0)],
    &[mode(0, [1, 1], 0.0, 0.5), mode(1, [1, -1], 0.5, 0.0)],
    &[mode(0, [0, 1], 0.3, 0.4), mode(1, [1, 0], -0.2, 0.6), mode(1, [0, 0], 0.25, 0.0)],
    &[mode(0, [1, 2], 0.5, 0.0), mode(1, [2, 1], 0.0, -0.5), mode(0, [0, 0], -0.3, 0.0)],
];

pub fn test_forms() -> Vec<TestForm> {
    TEST_FORMS.iter().map(|m| TestForm::Fourier(m.to_vec())).collect()
}

fn bump(r: f64) -> (f64, f64) {
    // (1 − r²)³ on r < 1, C² at the boundary; returns value and d/dr.
    if r >= 1.0 {
        (0.0, 0.0)
    } else {
        let u = 1.0 - r * r;
        (u * u * u, -6.0 * r * u * u)
    }
}

impl TestForm {
    pub fn eval(&self, x: [f64; 2], l: f64) -> [f64; 2] {
        self.eval_with_grad(x, l).0
    }

    /// Value and Jacobian `∂_j b_i`.
    pub fn eval_with_grad(&self, x: [f64; 2], l: f64) -> ([f64; 2], [[f64; 2]; 2]) {
        match self {
            TestForm::Fourier(modes) => {
                let mut v = [0.0; 2];
                let mut g = [[0.0; 2]; 2];
                let s = 2.0 * PI / l;
                for m in modes {
                    let ph = s * (m.k[0] as f64 * x[0] + m.k[1] as f64 * x[1]);
                    v[m.component] += m.cos * ph.cos() + m.sin * ph.sin();
                    let dph = -m.cos * ph.sin() + m.sin * ph.cos();
                    g[m.component][0] += dph * s * m.k[0] as f64;
                    g[m.component][1] += dph * s * m.k[1] as f64;
                }
                (v, g)
            }
            TestForm::Bump { center, radius, dir } => {
                let wrap = |t: f64| (t + 0.5 * l).rem_euclid(l) - 0.5 * l;
                let d = [wrap(x[0] - center[0]), wrap(x[1] - center[1])];
                let r = d[0].hypot(d[1]) / radius;
                let (b, db) = bump(r);
                let mut g = [[0.0; 2]; 2];
                if r > 0.0 {
                    for i in 0..2 {
                        for j in 0..2 {
                            g[i][j] = dir[i] * db * d[j] / (r * radius * radius);
                        }
                    }
                }
                ([dir[0] * b, dir[1] * b], g)
            }
        }
    }

    /// `(sup |b|, sup |∇b|)` sampled on a 256² grid.
    pub fn norms(&self, l: f64) -> (f64, f64) {
        let m = 256;
        let mut c0 = 0.0f64;
        let mut c1 = 0.0f64;
        for j in 0..m {
            for i in 0..m {
                let x = [i as f64 * l / m as f64, j as f64 * l / m as f64];
                let (v, g) = self.eval_with_grad(x, l);
                c0 = c0.max(v[0].hypot(v[1]));
                c1 = c1.max((g[0][0].powi(2) + g[0][1].powi(2) + g[1][0].powi(2) + g[1][1].powi(2)).sqrt());
            }
        }
        (c0, c1)
    }

    pub fn c1_norm(&self, l: f64) -> f64 {
        let (a, b) = self.norms(l);
        a + b
    }
}

/// Phase gradient `a = (1/2π) arg(g(s+e) conj g(s)) / ε` per link.
fn phase_gradient(g: &GaugeTransform, grid: &TorusGrid) -> Result<(Vec<f64>, Vec<f64>)> {
    let e = grid.spacing;
    let mut ax = Vec::with_capacity(grid.sites());
    let mut ay = Vec::with_capacity(grid.sites());
    for k in 0..grid.sites() {
        let dx = (g.g[grid.xp(k)] * g.g[k].conj()).arg();
        let dy = (g.g[grid.yp(k)] * g.g[k].conj()).arg();
        if dx.abs() >= PI / 2.0 || dy.abs() >= PI / 2.0 {
            return Err(Error::Resolution("phase step too large for the current pairing".into()));
        }
        ax.push(dx / (2.0 * PI * e));
        ay.push(dy / (2.0 * PI * e));
    }
    Ok((ax, ay))
}

/// `∫ b ∧ a_τ` with `a_τ = (1/2πi) g⁻¹dg`, each link term evaluated at the
/// link midpoint.
pub fn current_pairing(g: &GaugeTransform, b: &TestForm, grid: &TorusGrid) -> Result<f64> {
    let (ax, ay) = phase_gradient(g, grid)?;
    let e = grid.spacing;
    let l = grid.side_length;
    let mut s = 0.0;
    for k in 0..grid.sites() {
        let [x, y] = grid.coords(k);
        let bx_link = b.eval([x + 0.5 * e, y], l);
        let by_link = b.eval([x, y + 0.5 * e], l);
        // b ∧ a = (b_x a_y − b_y a_x) dx∧dy
        s += by_link[0] * ay[k] - bx_link[1] * ax[k];
    }
    Ok(e * e * s)
}

/// Line integral of `b` along the shadow polylines (midpoint rule).
pub fn cycle_pairing(shadow: &Shadow, b: &TestForm, grid: &TorusGrid) -> f64 {
    let l = grid.side_length;
    let mut s = 0.0;
    for pl in &shadow.polylines {
        for w in pl.windows(2) {
            let m = [(w[0][0] + w[1][0]) / 2.0, (w[0][1] + w[1][1]) / 2.0];
            let v = b.eval(m, l);
            s += v[0] * (w[1][0] - w[0][0]) + v[1] * (w[1][1] - w[0][1]);
        }
    }
    s
}

#[derive(Clone, Debug, Serialize)]
pub struct DualityReport {
    pub matrix: [[i64; 2]; 2],
    pub runs: Vec<HolonomyReport>,
}

/// Test cycle offset from the moving point's axes.
pub const CYCLE_OFFSET: f64 = 0.25;

/// Holonomy windings of the α and β loops of point `mover` along test cycles
/// parallel to the two periods.
pub fn duality_matrix(
    tau: f64,
    grid: &TorusGrid,
    steps: usize,
    divisor: &Divisor,
    mover: usize,
    opts: &TransportOptions,
) -> Result<DualityReport> {
    let p = *divisor
        .points
        .get(mover)
        .ok_or_else(|| Error::Config("mover index out of range".into()))?;
    let cycles = vec![
        CyclePath::row("alpha", p[1] + CYCLE_OFFSET, grid),
        CyclePath::column("beta", p[0] + CYCLE_OFFSET, grid),
    ];
    let params = LoopParams { mover, ..Default::default() };
    let mut matrix = [[0i64; 2]; 2];
    let mut runs = Vec::new();
    for (i, kind) in [LoopKind::AlphaCycle, LoopKind::BetaCycle].into_iter().enumerate() {
        let path = make_loop(kind, &params, divisor, grid, steps)?;
        let rep = parallel_transport(&path, tau, grid, &cycles, &[], opts)?;
        matrix[i][0] = rep.winding["alpha"];
        matrix[i][1] = rep.winding["beta"];
        runs.push(rep);
    }
    Ok(DualityReport { matrix, runs })
}

/// Probe segment of length `len` centred on the shadow point at parameter
/// `t` of polyline `i`, oriented so that it crosses positively (from the
/// right of the shadow to its left).
pub fn crossing_probe(shadow: &Shadow, i: usize, t: f64, len: f64) -> Option<(Vec<[f64; 2]>, [f64; 2])> {
    let pl = shadow.polylines.get(i)?;
    let m = pl.len() - 1;
    let s = (t * m as f64).min(m as f64 - 1.0).max(0.0) as usize;
    let a = pl[s];
    let b = pl[s + 1];
    let c = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
    let tl = (b[0] - a[0]).hypot(b[1] - a[1]);
    let left = [-(b[1] - a[1]) / tl, (b[0] - a[0]) / tl];
    let k = 64;
    let pts = (0..=k)
        .map(|j| {
            let u = -0.5 * len + len * j as f64 / k as f64;
            [c[0] + u * left[0], c[1] + u * left[1]]
        })
        .collect();
    Some((pts, c))
}

/// Increment of the phase of `g` along a probe, in units of 2π.
pub fn crossing_delta(g: &GaugeTransform, probe: &[[f64; 2]], grid: &TorusGrid) -> Result<f64> {
    let vals: Vec<C64> = probe.iter().map(|&x| sample_unit(&g.g, x, grid)).collect();
    phase_increment(&vals)
}
