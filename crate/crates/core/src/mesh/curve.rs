//! Piecewise-analytic closed curves and their arc-length sampling.

use std::f64::consts::PI;
use std::sync::Arc;

/// `G(x)` with its first and second derivatives.
pub type Profile = Arc<dyn Fn(f64) -> [f64; 3] + Send + Sync>;

#[derive(Clone)]
pub enum Piece {
    Line {
        from: [f64; 2],
        to: [f64; 2],
    },
    /// Counterclockwise when `end > start`.
    Arc {
        center: [f64; 2],
        radius: f64,
        start: f64,
        end: f64,
    },
    /// `(x, sign·G(x))` for x running from `x0` to `x1`.
    Graph {
        x0: f64,
        x1: f64,
        sign: f64,
        profile: Profile,
    },
}

/// Point, first and second derivative with respect to the piece parameter
/// `t ∈ [0, 1]`.
fn eval(piece: &Piece, t: f64) -> [[f64; 2]; 3] {
    match piece {
        Piece::Line { from, to } => {
            let d = [to[0] - from[0], to[1] - from[1]];
            [[from[0] + t * d[0], from[1] + t * d[1]], d, [0.0, 0.0]]
        }
        Piece::Arc {
            center,
            radius,
            start,
            end,
        } => {
            let span = end - start;
            let th = start + t * span;
            let (s, c) = th.sin_cos();
            [
                [center[0] + radius * c, center[1] + radius * s],
                [-radius * s * span, radius * c * span],
                [-radius * c * span * span, -radius * s * span * span],
            ]
        }
        Piece::Graph { x0, x1, sign, profile } => {
            let dx = x1 - x0;
            let x = x0 + t * dx;
            let [g, g1, g2] = profile(x);
            [[x, sign * g], [dx, sign * g1 * dx], [0.0, sign * g2 * dx * dx]]
        }
    }
}

fn speed(piece: &Piece, t: f64) -> f64 {
    let d = eval(piece, t)[1];
    d[0].hypot(d[1])
}

// 5-point Gauss–Legendre on [0, 1]
const GL_X: [f64; 5] = [
    0.046_910_077_030_668_0,
    0.230_765_344_947_158_5,
    0.5,
    0.769_234_655_052_841_5,
    0.953_089_922_969_332,
];
const GL_W: [f64; 5] = [
    0.118_463_442_528_094_5,
    0.239_314_335_249_683_2,
    0.284_444_444_444_444_4,
    0.239_314_335_249_683_2,
    0.118_463_442_528_094_5,
];

fn length_between(piece: &Piece, a: f64, b: f64) -> f64 {
    let w = b - a;
    GL_X.iter()
        .zip(GL_W)
        .map(|(&x, wk)| wk * speed(piece, a + w * x))
        .sum::<f64>()
        * w
}

/// A sampled boundary node with analytic geometry.
pub struct Sample {
    pub point: [f64; 2],
    pub normal: [f64; 2],
    pub curvature: f64,
    pub arclength: f64,
}

/// Cumulative arc-length table on a uniform parameter grid.
struct LengthTable {
    cum: Vec<f64>,
}

const TABLE_CELLS: usize = 256;

impl LengthTable {
    fn new(piece: &Piece) -> Self {
        let mut cum = vec![0.0];
        for k in 0..TABLE_CELLS {
            let a = k as f64 / TABLE_CELLS as f64;
            let b = (k + 1) as f64 / TABLE_CELLS as f64;
            cum.push(cum[k] + length_between(piece, a, b));
        }
        Self { cum }
    }

    fn total(&self) -> f64 {
        self.cum[TABLE_CELLS]
    }

    /// Parameter at arc length `s`, refined by Newton steps on the exact integral.
    fn parameter_at(&self, piece: &Piece, s: f64) -> f64 {
        let k = self.cum.partition_point(|&c| c <= s).clamp(1, TABLE_CELLS) - 1;
        let a = k as f64 / TABLE_CELLS as f64;
        let frac = (s - self.cum[k]) / (self.cum[k + 1] - self.cum[k]);
        let mut t = a + frac / TABLE_CELLS as f64;
        for _ in 0..4 {
            let err = self.cum[k] + length_between(piece, a, t) - s;
            t -= err / speed(piece, t);
        }
        t.clamp(0.0, 1.0)
    }
}

fn geometry(piece: &Piece, t: f64) -> ([f64; 2], [f64; 2], f64) {
    let [p, d1, d2] = eval(piece, t);
    let sp = d1[0].hypot(d1[1]);
    let normal = [d1[1] / sp, -d1[0] / sp];
    let kappa = (d1[0] * d2[1] - d1[1] * d2[0]) / (sp * sp * sp);
    (p, normal, kappa)
}

fn max_abs_curvature(piece: &Piece) -> f64 {
    (0..=200)
        .map(|k| geometry(piece, k as f64 / 200.0).2.abs())
        .fold(0.0, f64::max)
}

/// Samples a closed curve so that consecutive nodes are about `h` apart, and
/// closer where the curvature radius is small (at most `0.25/|κ|`).
///
/// Where two pieces meet with different curvature (line into arc), the
/// junction node carries the length-weighted mean of the one-sided values,
/// so nodal quadrature of κ stays exact for piecewise constant curvature.
pub fn sample(pieces: &[Piece], h: f64) -> Vec<Sample> {
    let mut out = Vec::new();
    let mut s0 = 0.0;
    let mut first_of_piece = Vec::new();
    let mut spacing = Vec::new();
    for piece in pieces {
        let table = LengthTable::new(piece);
        let len = table.total();
        let kmax = max_abs_curvature(piece);
        let ds = if kmax > 0.0 { h.min(0.25 / kmax) } else { h };
        let n = ((len / ds).ceil() as usize).max(1);
        first_of_piece.push(out.len());
        spacing.push(len / n as f64);
        for k in 0..n {
            let s = len * k as f64 / n as f64;
            let t = if k == 0 { 0.0 } else { table.parameter_at(piece, s) };
            let (point, normal, curvature) = geometry(piece, t);
            out.push(Sample {
                point,
                normal,
                curvature,
                arclength: s0 + s,
            });
        }
        s0 += len;
    }
    let m = pieces.len();
    for p in 0..m {
        let prev = (p + m - 1) % m;
        let k_before = geometry(&pieces[prev], 1.0).2;
        let k_after = out[first_of_piece[p]].curvature;
        let (wb, wa) = (spacing[prev], spacing[p]);
        out[first_of_piece[p]].curvature = (k_before * wb + k_after * wa) / (wb + wa);
    }
    out
}

/// Total length of a closed curve.
pub fn total_length(pieces: &[Piece]) -> f64 {
    pieces.iter().map(|p| LengthTable::new(p).total()).sum()
}

/// Rounded rectangle `[0, w] × [0, hgt]` with corner radius `r`, counterclockwise.
pub fn rounded_rectangle(w: f64, hgt: f64, r: f64) -> Vec<Piece> {
    let arc = |cx: f64, cy: f64, start: f64| Piece::Arc {
        center: [cx, cy],
        radius: r,
        start,
        end: start + PI / 2.0,
    };
    let mut pieces = Vec::new();
    let seg = |a: [f64; 2], b: [f64; 2], pieces: &mut Vec<Piece>| {
        // sides vanish when the rounding takes the full half-width
        if (b[0] - a[0]).hypot(b[1] - a[1]) > 1e-14 {
            pieces.push(Piece::Line { from: a, to: b });
        }
    };
    seg([r, 0.0], [w - r, 0.0], &mut pieces);
    pieces.push(arc(w - r, r, -PI / 2.0));
    seg([w, r], [w, hgt - r], &mut pieces);
    pieces.push(arc(w - r, hgt - r, 0.0));
    seg([w - r, hgt], [r, hgt], &mut pieces);
    pieces.push(arc(r, hgt - r, PI / 2.0));
    seg([0.0, hgt - r], [0.0, r], &mut pieces);
    pieces.push(arc(r, r, PI));
    pieces
}

/// C² quintic smoothstep on [0, 1] with derivatives.
fn smoothstep(x: f64) -> [f64; 3] {
    let x = x.clamp(0.0, 1.0);
    let x2 = x * x;
    [
        x2 * x * (10.0 - 15.0 * x + 6.0 * x2),
        30.0 * x2 * (1.0 - x) * (1.0 - x),
        60.0 * x * (1.0 - x) * (1.0 - 2.0 * x),
    ]
}

/// Dumbbell: bulbs of radius `r` centred at `(±c, 0)` with `c = r + len/2`,
/// joined by a straight neck of width `w` on `|x| ≤ len/2`; the neck wall
/// blends into the circle over `x ∈ [len/2, len/2 + d]`.
///
/// Returns the pieces counterclockwise, or `None` when the neck does not fit.
pub fn dumbbell(r: f64, w: f64, len: f64, d: f64) -> Option<Vec<Piece>> {
    let c = r + len / 2.0;
    let xa = len / 2.0;
    let xe = xa + d;
    let circ = move |x: f64| -> [f64; 3] {
        let q = r * r - (x - c) * (x - c);
        let s = q.max(0.0).sqrt();
        if s == 0.0 {
            return [0.0, 0.0, 0.0];
        }
        [s, -(x - c) / s, -r * r / (s * s * s)]
    };
    if !(d > 0.0 && d < r && w > 0.0 && len > 0.0) || w / 2.0 >= 0.9 * circ(xe)[0] {
        return None;
    }
    let half = w / 2.0;
    // upper wall on x ∈ [xa, xe]
    let blend = move |x: f64| -> [f64; 3] {
        let [sm, sm1, sm2] = smoothstep((x - xa) / d);
        let (sm1, sm2) = (sm1 / d, sm2 / (d * d));
        let [g, g1, g2] = if x <= xa { [0.0, 0.0, 0.0] } else { circ(x) };
        let diff = g - half;
        [
            half + sm * diff,
            sm1 * diff + sm * g1,
            sm2 * diff + 2.0 * sm1 * g1 + sm * g2,
        ]
    };
    let right: Profile = Arc::new(blend);
    let left: Profile = Arc::new(move |x: f64| {
        let [g, g1, g2] = blend(-x);
        [g, -g1, g2]
    });
    let theta_e = ((xe - c) / r).acos();
    Some(vec![
        Piece::Line {
            from: [-xa, -half],
            to: [xa, -half],
        },
        Piece::Graph {
            x0: xa,
            x1: xe,
            sign: -1.0,
            profile: right.clone(),
        },
        Piece::Arc {
            center: [c, 0.0],
            radius: r,
            start: -theta_e,
            end: theta_e,
        },
        Piece::Graph {
            x0: xe,
            x1: xa,
            sign: 1.0,
            profile: right,
        },
        Piece::Line {
            from: [xa, half],
            to: [-xa, half],
        },
        Piece::Graph {
            x0: -xa,
            x1: -xe,
            sign: 1.0,
            profile: left.clone(),
        },
        Piece::Arc {
            center: [-c, 0.0],
            radius: r,
            start: PI - theta_e,
            end: PI + theta_e,
        },
        Piece::Graph {
            x0: -xe,
            x1: -xa,
            sign: -1.0,
            profile: left,
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_perimeter() {
        let r = 0.1;
        let p = total_length(&rounded_rectangle(1.0, 1.0, r));
        assert!((p - (4.0 - 8.0 * r + 2.0 * PI * r)).abs() < 1e-12);
    }

    #[test]
    fn dumbbell_pieces_join_with_matching_geometry() {
        let pieces = dumbbell(1.0, 0.1, 0.5, 0.3).unwrap();
        for k in 0..pieces.len() {
            let (p0, n0, k0) = geometry(&pieces[k], 1.0);
            let (p1, n1, k1) = geometry(&pieces[(k + 1) % pieces.len()], 0.0);
            assert!((p0[0] - p1[0]).hypot(p0[1] - p1[1]) < 1e-12, "gap after piece {k}");
            assert!((n0[0] - n1[0]).hypot(n0[1] - n1[1]) < 1e-9, "kink after piece {k}");
            assert!((k0 - k1).abs() < 1e-6, "curvature jump after piece {k}: {k0} vs {k1}");
        }
    }

    #[test]
    fn dumbbell_rejects_wide_neck() {
        assert!(dumbbell(1.0, 1.9, 0.5, 0.3).is_none());
    }

    #[test]
    fn samples_are_on_the_curve() {
        let pieces = rounded_rectangle(2.0, 1.0, 0.2);
        for s in sample(&pieces, 0.05) {
            let [x, y] = s.point;
            let nx = x.clamp(0.2, 1.8);
            let ny = y.clamp(0.2, 0.8);
            let dist = (x - nx).hypot(y - ny);
            let on_arc = (dist - 0.2).abs() < 1e-12;
            let on_side = x.abs() < 1e-12 || (x - 2.0).abs() < 1e-12 || y.abs() < 1e-12 || (y - 1.0).abs() < 1e-12;
            assert!(on_arc || on_side, "{x} {y}");
        }
    }
}
