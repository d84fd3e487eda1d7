use std::f64::consts::PI;
use std::path::PathBuf;
use std::str::FromStr;

use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use super::curve::{self, Piece, Sample};
use super::{load_mesh, LoopGeometry, Mesh};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub enum DomainKind {
    Disk {
        radius: f64,
    },
    Annulus {
        inner: f64,
        outer: f64,
    },
    Ellipse {
        a: f64,
        b: f64,
    },
    /// `[0, width] × [0, height]` with corner radius `rounding`.
    Rectangle {
        width: f64,
        height: f64,
        rounding: f64,
    },
    Dumbbell {
        bulb_radius: f64,
        neck_width: f64,
        neck_length: f64,
        blend_length: f64,
    },
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainSpec {
    pub kind: DomainKind,
    /// Target mesh size.
    pub h: f64,
}

impl DomainSpec {
    pub fn disk(radius: f64, h: f64) -> Self {
        Self {
            kind: DomainKind::Disk { radius },
            h,
        }
    }

    pub fn annulus(inner: f64, outer: f64, h: f64) -> Self {
        Self {
            kind: DomainKind::Annulus { inner, outer },
            h,
        }
    }

    pub fn ellipse(a: f64, b: f64, h: f64) -> Self {
        Self {
            kind: DomainKind::Ellipse { a, b },
            h,
        }
    }

    pub fn rectangle(width: f64, height: f64, rounding: f64, h: f64) -> Self {
        Self {
            kind: DomainKind::Rectangle {
                width,
                height,
                rounding,
            },
            h,
        }
    }

    /// Unit bulbs, neck length 0.5, blend length 0.3.
    pub fn dumbbell(neck_width: f64, h: f64) -> Self {
        Self {
            kind: DomainKind::Dumbbell {
                bulb_radius: 1.0,
                neck_width,
                neck_length: 0.5,
                blend_length: 0.3,
            },
            h,
        }
    }

    pub fn file(path: impl Into<PathBuf>) -> Self {
        Self {
            kind: DomainKind::File(path.into()),
            h: f64::NAN,
        }
    }

    /// Same domain with the mesh size divided by `2^level`.
    pub fn refined(&self, level: u32) -> Self {
        Self {
            kind: self.kind.clone(),
            h: self.h / f64::from(1u32 << level),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            DomainKind::Disk { .. } => "disk",
            DomainKind::Annulus { .. } => "annulus",
            DomainKind::Ellipse { .. } => "ellipse",
            DomainKind::Rectangle { .. } => "rectangle",
            DomainKind::Dumbbell { .. } => "dumbbell",
            DomainKind::File(_) => "file",
        }
    }

    /// `(key, value)` pairs describing the spec, in the `kind:key=value,…` order.
    pub fn parameters(&self) -> Vec<(&'static str, String)> {
        let mut v = match &self.kind {
            DomainKind::Disk { radius } => vec![("radius", radius.to_string())],
            DomainKind::Annulus { inner, outer } => vec![("inner", inner.to_string()), ("outer", outer.to_string())],
            DomainKind::Ellipse { a, b } => vec![("a", a.to_string()), ("b", b.to_string())],
            DomainKind::Rectangle {
                width,
                height,
                rounding,
            } => vec![
                ("width", width.to_string()),
                ("height", height.to_string()),
                ("rounding", rounding.to_string()),
            ],
            DomainKind::Dumbbell {
                bulb_radius,
                neck_width,
                neck_length,
                blend_length,
            } => vec![
                ("bulb_radius", bulb_radius.to_string()),
                ("neck_width", neck_width.to_string()),
                ("neck_length", neck_length.to_string()),
                ("blend_length", blend_length.to_string()),
            ],
            DomainKind::File(p) => return vec![("path", p.display().to_string())],
        };
        v.push(("h", self.h.to_string()));
        v
    }

    /// Builds a spec from a kind name and `key → value` lookups; missing keys
    /// take the documented defaults.
    pub fn from_parts(kind: &str, mut get: impl FnMut(&str) -> Option<String>) -> Result<Self> {
        let mut num = |key: &str, default: Option<f64>| -> Result<f64> {
            match get(key) {
                Some(s) => s
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Usage(format!("domain parameter `{key}`: `{s}` is not a number"))),
                None => default.ok_or_else(|| Error::Usage(format!("domain parameter `{key}` is required"))),
            }
        };
        let spec = match kind {
            "disk" => Self::disk(num("radius", Some(1.0))?, num("h", Some(0.08))?),
            "annulus" => Self::annulus(
                num("inner", Some(0.5))?,
                num("outer", Some(1.0))?,
                num("h", Some(0.08))?,
            ),
            "ellipse" => Self::ellipse(num("a", Some(1.5))?, num("b", Some(1.0))?, num("h", Some(0.08))?),
            "rectangle" => Self::rectangle(
                num("width", Some(1.0))?,
                num("height", Some(1.0))?,
                num("rounding", Some(0.05))?,
                num("h", Some(0.08))?,
            ),
            "dumbbell" => Self {
                kind: DomainKind::Dumbbell {
                    bulb_radius: num("bulb_radius", Some(1.0))?,
                    neck_width: num("neck_width", Some(0.1))?,
                    neck_length: num("neck_length", Some(0.5))?,
                    blend_length: num("blend_length", Some(0.3))?,
                },
                h: num("h", Some(0.08))?,
            },
            "file" => {
                let p = get("path").ok_or_else(|| Error::Usage("domain parameter `path` is required".into()))?;
                Self::file(p)
            }
            other => return Err(Error::Usage(format!("unknown domain kind `{other}`"))),
        };
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Construction(m));
        if !matches!(self.kind, DomainKind::File(_)) && !(self.h > 0.0 && self.h.is_finite()) {
            return bad(format!("mesh size h must be positive, got {}", self.h));
        }
        match self.kind {
            DomainKind::Disk { radius } if !(radius > 0.0) => {
                bad(format!("disk radius must be positive, got {radius}"))
            }
            DomainKind::Annulus { inner, outer } if !(inner > 0.0 && outer > inner) => {
                bad(format!("annulus needs 0 < inner < outer, got {inner}, {outer}"))
            }
            DomainKind::Ellipse { a, b } if !(a > 0.0 && b > 0.0) => {
                bad(format!("ellipse half-axes must be positive, got {a}, {b}"))
            }
            DomainKind::Rectangle {
                width,
                height,
                rounding,
            } => {
                if !(width > 0.0 && height > 0.0) {
                    bad(format!("rectangle sides must be positive, got {width}, {height}"))
                } else if !(rounding > 0.0) {
                    bad(format!(
                        "rectangle corners must be rounded (rounding > 0), got {rounding}"
                    ))
                } else if 2.0 * rounding > width.min(height) {
                    bad(format!("rounding {rounding} exceeds half the shorter side"))
                } else {
                    Ok(())
                }
            }
            DomainKind::Dumbbell {
                bulb_radius,
                neck_width,
                neck_length,
                blend_length,
            } => {
                if !(neck_width > 0.0) {
                    bad(format!("dumbbell neck width must be positive, got {neck_width}"))
                } else if curve::dumbbell(bulb_radius, neck_width, neck_length, blend_length).is_none() {
                    bad(format!(
                        "infeasible dumbbell: neck width {neck_width}, length {neck_length}, blend {blend_length} with bulb radius {bulb_radius}"
                    ))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Parses `kind:key=value,key=value`, e.g. `disk:radius=1,h=0.1`.
impl FromStr for DomainSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut pairs = Vec::new();
        for item in rest.split(',').filter(|x| !x.trim().is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("domain parameter `{item}` is not key=value")))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let known: &[&str] = match kind.trim() {
            "disk" => &["radius", "h"],
            "annulus" => &["inner", "outer", "h"],
            "ellipse" => &["a", "b", "h"],
            "rectangle" => &["width", "height", "rounding", "h"],
            "dumbbell" => &["bulb_radius", "neck_width", "neck_length", "blend_length", "h"],
            "file" => &["path"],
            _ => &[],
        };
        if let Some((k, _)) = pairs.iter().find(|(k, _)| !known.contains(&k.as_str())) {
            if !known.is_empty() {
                return Err(Error::Usage(format!("unknown parameter `{k}` for domain `{kind}`")));
            }
        }
        Self::from_parts(kind.trim(), |key| {
            pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone())
        })
    }
}

/// Meshes the domain described by `spec`.
pub fn generate<T: Real>(spec: &DomainSpec) -> Result<Mesh<T>> {
    spec.check()?;
    let h = spec.h;
    match &spec.kind {
        DomainKind::Disk { radius } => ring_mesh(*radius, *radius, 0.0, h),
        DomainKind::Ellipse { a, b } => ring_mesh(*a, *b, 0.0, h),
        DomainKind::Annulus { inner, outer } => ring_mesh(*outer, *outer, *inner, h),
        DomainKind::Rectangle {
            width,
            height,
            rounding,
        } => cdt_mesh(&curve::rounded_rectangle(*width, *height, *rounding), h),
        DomainKind::Dumbbell {
            bulb_radius,
            neck_width,
            neck_length,
            blend_length,
        } => {
            let pieces = curve::dumbbell(*bulb_radius, *neck_width, *neck_length, *blend_length)
                .ok_or_else(|| Error::Construction("infeasible dumbbell".into()))?;
            cdt_mesh(&pieces, h)
        }
        DomainKind::File(path) => load_mesh(path),
    }
}

fn to_t<T: Real>(p: [f64; 2]) -> [T; 2] {
    [T::lit(p[0]), T::lit(p[1])]
}

/// Structured mesh on concentric rings of the ellipse with half-axes `(a, b)`
/// (a disk when `a == b`), with a hole of radius `hole` when positive (disk only).
fn ring_mesh<T: Real>(a: f64, b: f64, hole: f64, h: f64) -> Result<Mesh<T>> {
    let big = a.max(b);
    // radii on the reference unit disk
    let radii: Vec<f64> = if hole > 0.0 {
        let layers = (((big - hole) / h).ceil() as usize).max(1);
        (0..=layers)
            .map(|k| (hole + (big - hole) * k as f64 / layers as f64) / big)
            .collect()
    } else {
        let layers = ((big / h).ceil() as usize).max(1);
        (0..=layers).map(|k| k as f64 / layers as f64).collect()
    };
    let mut nodes: Vec<[f64; 2]> = Vec::new();
    let mut rings: Vec<Vec<(f64, usize)>> = Vec::new();
    for (k, &rho) in radii.iter().enumerate() {
        let count = if rho == 0.0 {
            1
        } else if hole > 0.0 {
            ((2.0 * PI * rho * big / h).round() as usize).max(6)
        } else {
            6 * k
        };
        let ring = (0..count)
            .map(|j| {
                let th = 2.0 * PI * j as f64 / count as f64;
                nodes.push(if rho == 0.0 {
                    [0.0, 0.0]
                } else {
                    [a * rho * th.cos(), b * rho * th.sin()]
                });
                (th, nodes.len() - 1)
            })
            .collect();
        rings.push(ring);
    }
    let mut triangles = Vec::new();
    for w in rings.windows(2) {
        stitch(&w[0], &w[1], &nodes, &mut triangles);
    }
    // boundary points are placed directly on the analytic curve
    let outer = rings.last().unwrap();
    let mut loops = vec![outer.iter().map(|x| x.1).collect::<Vec<_>>()];
    let ellipse_speed = |th: f64| (a * a * th.sin().powi(2) + b * b * th.cos().powi(2)).sqrt();
    let mut geometry = vec![{
        let mut arclength = Vec::with_capacity(outer.len());
        let mut acc = 0.0;
        let mut normal = Vec::new();
        let mut curvature = Vec::new();
        for (j, &(th, _)) in outer.iter().enumerate() {
            arclength.push(T::lit(acc));
            let next = outer.get(j + 1).map_or(2.0 * PI, |x| x.0);
            acc += gauss_integral(ellipse_speed, th, next);
            let (s, c) = th.sin_cos();
            let nrm = (b * c).hypot(a * s);
            normal.push(to_t([b * c / nrm, a * s / nrm]));
            curvature.push(T::lit(a * b / ellipse_speed(th).powi(3)));
        }
        LoopGeometry {
            normal,
            curvature,
            arclength,
            length: T::lit(acc),
        }
    }];
    if hole > 0.0 {
        let inner = &rings[0];
        // domain on the left: clockwise around the hole
        let order: Vec<usize> = std::iter::once(0).chain((1..inner.len()).rev()).collect();
        loops.push(order.iter().map(|&j| inner[j].1).collect());
        let m = inner.len() as f64;
        geometry.push(LoopGeometry {
            normal: order
                .iter()
                .map(|&j| {
                    let (s, c) = inner[j].0.sin_cos();
                    to_t([-c, -s])
                })
                .collect(),
            curvature: vec![T::lit(-1.0 / hole); inner.len()],
            arclength: (0..inner.len())
                .map(|p| T::lit(2.0 * PI * hole * p as f64 / m))
                .collect(),
            length: T::lit(2.0 * PI * hole),
        });
    }
    Mesh::assemble(nodes.into_iter().map(to_t).collect(), triangles, loops, Some(geometry))
}

fn gauss_integral(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const X: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
    const W: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
    let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
    X.iter().zip(W).map(|(x, w)| w * f(m + r * x)).sum::<f64>() * r
}

/// Triangulates the band between two rings sorted by angle, both starting at angle 0.
fn stitch(inner: &[(f64, usize)], outer: &[(f64, usize)], nodes: &[[f64; 2]], out: &mut Vec<[usize; 3]>) {
    let (mi, mo) = (inner.len(), outer.len());
    let angle = |ring: &[(f64, usize)], k: usize| if k == ring.len() { 2.0 * PI } else { ring[k].0 };
    let (mut i, mut j) = (0, 0);
    let mut push = |t: [usize; 3]| {
        if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
            return;
        }
        let [p, q, r] = t.map(|v| nodes[v]);
        let area = (q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]);
        out.push(if area > 0.0 { t } else { [t[0], t[2], t[1]] });
    };
    while i < mi || j < mo {
        let advance_inner = j == mo || (i < mi && angle(inner, i + 1) < angle(outer, j + 1));
        if advance_inner {
            push([inner[i].1, outer[j % mo].1, inner[(i + 1) % mi].1]);
            i += 1;
        } else {
            push([inner[i % mi].1, outer[j].1, outer[(j + 1) % mo].1]);
            j += 1;
        }
    }
}

fn inside(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    let mut c = false;
    let n = poly.len();
    for k in 0..n {
        let (a, b) = (poly[k], poly[(k + 1) % n]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                c = !c;
            }
        }
    }
    c
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let t = (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / (d[0] * d[0] + d[1] * d[1])).clamp(0.0, 1.0);
    (p[0] - a[0] - t * d[0]).hypot(p[1] - a[1] - t * d[1])
}

/// Constrained Delaunay mesh of a closed curve: arc-length boundary samples
/// plus interior points on a hexagonal lattice of spacing `h`.
fn cdt_mesh<T: Real>(pieces: &[Piece], h: f64) -> Result<Mesh<T>> {
    let samples: Vec<Sample> = curve::sample(pieces, h);
    let poly: Vec<[f64; 2]> = samples.iter().map(|s| s.point).collect();
    let nb = poly.len();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &poly {
        for c in 0..2 {
            lo[c] = lo[c].min(p[c]);
            hi[c] = hi[c].max(p[c]);
        }
    }
    // bucket boundary segments so the clearance test stays local
    let cell = h;
    let nx = (((hi[0] - lo[0]) / cell).ceil() as usize).max(1) + 1;
    let ny = (((hi[1] - lo[1]) / cell).ceil() as usize).max(1) + 1;
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); nx * ny];
    let bucket_of = |p: [f64; 2]| {
        let i = (((p[0] - lo[0]) / cell).floor().max(0.0) as usize).min(nx - 1);
        let j = (((p[1] - lo[1]) / cell).floor().max(0.0) as usize).min(ny - 1);
        (i, j)
    };
    for k in 0..nb {
        let (a, b) = (poly[k], poly[(k + 1) % nb]);
        let (i0, j0) = bucket_of([a[0].min(b[0]), a[1].min(b[1])]);
        let (i1, j1) = bucket_of([a[0].max(b[0]), a[1].max(b[1])]);
        for i in i0..=i1 {
            for j in j0..=j1 {
                buckets[j * nx + i].push(k);
            }
        }
    }
    let clearance = 0.55 * h;
    let near_boundary = |p: [f64; 2]| {
        let (i, j) = bucket_of(p);
        for bi in i.saturating_sub(1)..=(i + 1).min(nx - 1) {
            for bj in j.saturating_sub(1)..=(j + 1).min(ny - 1) {
                for &k in &buckets[bj * nx + bi] {
                    if segment_distance(p, poly[k], poly[(k + 1) % nb]) < clearance {
                        return true;
                    }
                }
            }
        }
        false
    };

    let mut points = poly.clone();
    let dy = h * 3f64.sqrt() / 2.0;
    let rows = ((hi[1] - lo[1]) / dy).ceil() as usize;
    for r in 0..=rows {
        let y = lo[1] + r as f64 * dy;
        let shift = if r % 2 == 0 { 0.0 } else { 0.5 * h };
        let cols = ((hi[0] - lo[0]) / h).ceil() as usize + 1;
        for c in 0..=cols {
            let p = [lo[0] + shift + c as f64 * h, y];
            if inside(&poly, p) && !near_boundary(p) {
                points.push(p);
            }
        }
    }

    let vertices: Vec<Point2<f64>> = points.iter().map(|p| Point2::new(p[0], p[1])).collect();
    let edges: Vec<[usize; 2]> = (0..nb).map(|k| [k, (k + 1) % nb]).collect();
    let mut conflicts = 0usize;
    let cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::try_bulk_load_cdt(vertices, edges, |_| conflicts += 1)
        .map_err(|e| Error::Construction(format!("triangulation failed: {e:?}")))?;
    if conflicts > 0 || cdt.num_vertices() != points.len() {
        return Err(Error::Construction(format!(
            "boundary polyline self-intersects or repeats points ({conflicts} conflicting edges)"
        )));
    }
    let mut triangles = Vec::new();
    for face in cdt.inner_faces() {
        let v = face.vertices().map(|x| x.fix().index());
        let c = [
            (points[v[0]][0] + points[v[1]][0] + points[v[2]][0]) / 3.0,
            (points[v[0]][1] + points[v[1]][1] + points[v[2]][1]) / 3.0,
        ];
        if inside(&poly, c) {
            triangles.push(v);
        }
    }
    let geometry = vec![LoopGeometry {
        normal: samples.iter().map(|s| to_t(s.normal)).collect(),
        curvature: samples.iter().map(|s| T::lit(s.curvature)).collect(),
        arclength: samples.iter().map(|s| T::lit(s.arclength)).collect(),
        length: T::lit(curve::total_length(pieces)),
    }];
    Mesh::assemble(
        points.into_iter().map(to_t).collect(),
        triangles,
        vec![(0..nb).collect()],
        Some(geometry),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::boundary_quadrature;

    fn turning(m: &Mesh<f64>) -> f64 {
        let w = boundary_quadrature(m);
        let mut total = 0.0;
        for l in m.boundary() {
            for (p, &v) in l.nodes.iter().enumerate() {
                total += l.curvature[p] * w.iter().find(|x| x.0 == v).unwrap().1;
            }
        }
        total
    }

    #[test]
    fn disk_boundary_on_circle() {
        let m: Mesh<f64> = generate(&DomainSpec::disk(1.0, 0.1)).unwrap();
        for &v in &m.boundary()[0].nodes {
            let p = m.nodes()[v];
            assert!((p[0].hypot(p[1]) - 1.0).abs() < 1e-12);
        }
        assert!((turning(&m) - 2.0 * PI).abs() < 1e-2);
        assert!(m.max_edge() <= 2.0 * 0.1 && m.min_edge() >= 0.05 * 0.9);
    }

    #[test]
    fn annulus_has_two_loops_and_zero_turning() {
        let m: Mesh<f64> = generate(&DomainSpec::annulus(0.5, 1.0, 0.1)).unwrap();
        assert_eq!(m.boundary().len(), 2);
        assert!(turning(&m).abs() < 1e-2);
        assert!((m.area() - 0.75 * PI).abs() < 2e-2);
    }

    #[test]
    fn rectangle_curvature_values() {
        let m: Mesh<f64> = generate(&DomainSpec::rectangle(1.0, 1.0, 0.1, 0.05)).unwrap();
        let l = &m.boundary()[0];
        for (p, &v) in l.nodes.iter().enumerate() {
            let [x, y] = m.nodes()[v];
            let flat = 0.1 - 1e-9..=0.9 + 1e-9;
            let on_arc = !flat.contains(&x) && !flat.contains(&y);
            if on_arc {
                assert!((l.curvature[p] - 10.0).abs() < 1e-9);
            } else if (0.1 + 1e-9..0.9 - 1e-9).contains(&x) || (0.1 + 1e-9..0.9 - 1e-9).contains(&y) {
                assert!(l.curvature[p].abs() < 1e-9);
            }
        }
        assert!((turning(&m) - 2.0 * PI).abs() < 2e-2, "{}", turning(&m));
    }

    #[test]
    fn dumbbell_single_loop_turning() {
        let m: Mesh<f64> = generate(&DomainSpec::dumbbell(0.1, 0.05)).unwrap();
        assert_eq!(m.boundary().len(), 1);
        assert!((turning(&m) - 2.0 * PI).abs() < 2e-2, "{}", turning(&m));
        assert!(!m.is_convex(0.0));
    }

    #[test]
    fn parses_domain_strings() {
        let s: DomainSpec = "disk:radius=2,h=0.1".parse().unwrap();
        assert_eq!(s, DomainSpec::disk(2.0, 0.1));
        assert!("rectangle:rounding=0".parse::<DomainSpec>().is_err());
        assert!("disk:radius=1,foo=2".parse::<DomainSpec>().is_err());
        assert!("dumbbell:neck_width=1.9".parse::<DomainSpec>().is_err());
    }
}
