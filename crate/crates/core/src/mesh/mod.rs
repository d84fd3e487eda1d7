//! Triangulations of planar domains and their boundary geometry.

mod curve;
mod generate;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::fd_weights;
use crate::scalar::Real;

pub use generate::{generate, DomainKind, DomainSpec};

/// One closed boundary component, ordered with the domain on the left.
#[derive(Clone, Debug)]
pub struct BoundaryLoop<T> {
    pub nodes: Vec<usize>,
    /// Outward unit normal per node.
    pub normal: Vec<[T; 2]>,
    /// Signed curvature per node, positive where the domain is locally convex.
    pub curvature: Vec<T>,
    /// Cumulative arc length from the first node.
    pub arclength: Vec<T>,
    /// Total length of the loop.
    pub length: T,
}

#[derive(Clone, Debug)]
pub struct Mesh<T> {
    nodes: Vec<[T; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<BoundaryLoop<T>>,
    // node adjacency in CSR form, neighbours sorted, self excluded
    adj_ptr: Vec<usize>,
    adj: Vec<usize>,
    node_tris_ptr: Vec<usize>,
    node_tris: Vec<usize>,
    boundary_pos: Vec<Option<(usize, usize)>>,
}

/// Geometry supplied alongside a loop (from an analytic description).
pub(crate) struct LoopGeometry<T> {
    pub normal: Vec<[T; 2]>,
    pub curvature: Vec<T>,
    pub arclength: Vec<T>,
    pub length: T,
}

impl<T: Real> Mesh<T> {
    /// Builds and validates a mesh; boundary normals and curvature are
    /// computed with 5-point arc-length finite differences along each loop.
    pub fn new(nodes: Vec<[T; 2]>, triangles: Vec<[usize; 3]>, loops: Vec<Vec<usize>>) -> Result<Self> {
        Self::assemble(nodes, triangles, loops, None)
    }

    pub(crate) fn assemble(
        nodes: Vec<[T; 2]>,
        triangles: Vec<[usize; 3]>,
        loops: Vec<Vec<usize>>,
        geometry: Option<Vec<LoopGeometry<T>>>,
    ) -> Result<Self> {
        let n = nodes.len();
        for (k, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(Error::Validation(format!(
                    "triangle {k} references a node out of range"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Validation(format!("triangle {k} has repeated vertices")));
            }
            let area = signed_area(&nodes, tri);
            if !(area > T::zero()) {
                return Err(Error::Validation(format!(
                    "triangle {k} is inverted or degenerate (signed area {area:e})"
                )));
            }
        }

        // directed edge -> count; an interior edge appears once in each direction
        let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * triangles.len());
        for (k, tri) in triangles.iter().enumerate() {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                if directed.insert((a, b), k).is_some() {
                    return Err(Error::Validation(format!(
                        "edge ({a}, {b}) used twice with the same orientation (triangle {k}): non-manifold or inconsistent orientation"
                    )));
                }
            }
        }
        let mut boundary_edges: HashMap<usize, usize> = HashMap::new();
        for &(a, b) in directed.keys() {
            if !directed.contains_key(&(b, a)) && boundary_edges.insert(a, b).is_some() {
                return Err(Error::Validation(format!(
                    "node {a} starts two boundary edges: non-manifold"
                )));
            }
        }

        let mut boundary_pos = vec![None; n];
        let mut loop_edges = 0usize;
        for (l, lp) in loops.iter().enumerate() {
            if lp.len() < 3 {
                return Err(Error::Validation(format!("boundary loop {l} has fewer than 3 nodes")));
            }
            for (p, &v) in lp.iter().enumerate() {
                if v >= n {
                    return Err(Error::Validation(format!(
                        "boundary loop {l} references node {v} out of range"
                    )));
                }
                if boundary_pos[v].is_some() {
                    return Err(Error::Validation(format!("node {v} appears twice in boundary loops")));
                }
                boundary_pos[v] = Some((l, p));
                let next = lp[(p + 1) % lp.len()];
                if boundary_edges.get(&v) != Some(&next) {
                    return Err(Error::Validation(format!(
                        "boundary loop {l}: ({v}, {next}) is not a positively oriented boundary edge"
                    )));
                }
                loop_edges += 1;
            }
        }
        if loop_edges != boundary_edges.len() {
            return Err(Error::Validation(format!(
                "{} boundary edges but loops cover {loop_edges}",
                boundary_edges.len()
            )));
        }

        let geometry = match geometry {
            Some(g) => g,
            None => loops.iter().map(|lp| fd_loop_geometry(&nodes, lp)).collect(),
        };
        let boundary = loops
            .into_iter()
            .zip(geometry)
            .map(|(nodes, g)| BoundaryLoop {
                nodes,
                normal: g.normal,
                curvature: g.curvature,
                arclength: g.arclength,
                length: g.length,
            })
            .collect();

        let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut tris_of: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (k, tri) in triangles.iter().enumerate() {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                nbrs[a].push(b);
                nbrs[b].push(a);
                tris_of[a].push(k);
            }
        }
        let (adj_ptr, adj) = to_csr(nbrs.into_iter().map(|mut v| {
            v.sort_unstable();
            v.dedup();
            v
        }));
        let (node_tris_ptr, node_tris) = to_csr(tris_of.into_iter());
        if let Some(i) = (0..n).find(|&i| adj_ptr[i] == adj_ptr[i + 1]) {
            return Err(Error::Validation(format!("node {i} belongs to no triangle")));
        }

        Ok(Self {
            nodes,
            triangles,
            boundary,
            adj_ptr,
            adj,
            node_tris_ptr,
            node_tris,
            boundary_pos,
        })
    }

    pub fn nodes(&self) -> &[[T; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary(&self) -> &[BoundaryLoop<T>] {
        &self.boundary
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[self.adj_ptr[i]..self.adj_ptr[i + 1]]
    }

    pub fn triangles_of(&self, i: usize) -> &[usize] {
        &self.node_tris[self.node_tris_ptr[i]..self.node_tris_ptr[i + 1]]
    }

    /// `(loop, position)` of a boundary node.
    pub fn boundary_position(&self, i: usize) -> Option<(usize, usize)> {
        self.boundary_pos[i]
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary_pos[i].is_some()
    }

    pub fn triangle_area(&self, k: usize) -> T {
        signed_area(&self.nodes, &self.triangles[k])
    }

    /// Gradients of the three barycentric hat functions and the area.
    #[inline]
    pub fn shape_gradients(&self, k: usize) -> ([[T; 2]; 3], T) {
        let [i, j, l] = self.triangles[k];
        let (p0, p1, p2) = (self.nodes[i], self.nodes[j], self.nodes[l]);
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let inv = det.recip();
        let grads = [
            [(p1[1] - p2[1]) * inv, (p2[0] - p1[0]) * inv],
            [(p2[1] - p0[1]) * inv, (p0[0] - p2[0]) * inv],
            [(p0[1] - p1[1]) * inv, (p1[0] - p0[0]) * inv],
        ];
        (grads, T::lit(0.5) * det)
    }

    pub fn area(&self) -> T {
        (0..self.triangles.len()).map(|k| self.triangle_area(k)).sum()
    }

    /// Length of the boundary polygon.
    pub fn perimeter(&self) -> T {
        self.boundary_edges().map(|(a, b)| self.distance(a, b)).sum()
    }

    pub fn distance(&self, a: usize, b: usize) -> T {
        let (p, q) = (self.nodes[a], self.nodes[b]);
        (q[0] - p[0]).hypot(q[1] - p[1])
    }

    /// Positively oriented boundary edges over all loops.
    pub fn boundary_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.boundary.iter().flat_map(|lp| {
            let m = lp.nodes.len();
            (0..m).map(move |p| (lp.nodes[p], lp.nodes[(p + 1) % m]))
        })
    }

    /// Longest edge, a proxy for the mesh size.
    pub fn max_edge(&self) -> T {
        self.triangles
            .iter()
            .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
            .map(|(a, b)| self.distance(a, b))
            .fold(T::zero(), T::max)
    }

    pub fn min_edge(&self) -> T {
        self.triangles
            .iter()
            .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
            .map(|(a, b)| self.distance(a, b))
            .fold(T::infinity(), T::min)
    }

    /// Row-sum lumped mass: one third of the area of every incident triangle.
    pub fn lumped_mass(&self) -> Vec<T> {
        let mut m = vec![T::zero(); self.nodes.len()];
        let third = T::lit(1.0 / 3.0);
        for (k, tri) in self.triangles.iter().enumerate() {
            let a = self.triangle_area(k) * third;
            for &v in tri {
                m[v] += a;
            }
        }
        m
    }

    /// Minimum boundary curvature over all loops.
    pub fn min_curvature(&self) -> T {
        self.boundary
            .iter()
            .flat_map(|l| l.curvature.iter().copied())
            .fold(T::infinity(), T::min)
    }

    /// Single boundary loop with curvature above `threshold` everywhere.
    pub fn is_convex(&self, threshold: T) -> bool {
        self.boundary.len() == 1 && self.min_curvature() > threshold
    }

    /// Copy with node `i` renumbered to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.nodes.len();
        let mut nodes = vec![[T::zero(); 2]; n];
        for (i, &p) in perm.iter().enumerate() {
            nodes[p] = self.nodes[i];
        }
        let triangles = self.triangles.iter().map(|t| t.map(|v| perm[v])).collect();
        let loops = self
            .boundary
            .iter()
            .map(|l| l.nodes.iter().map(|&v| perm[v]).collect())
            .collect();
        let geometry = self
            .boundary
            .iter()
            .map(|l| LoopGeometry {
                normal: l.normal.clone(),
                curvature: l.curvature.clone(),
                arclength: l.arclength.clone(),
                length: l.length,
            })
            .collect();
        Self::assemble(nodes, triangles, loops, Some(geometry))
    }

    /// Copy rotated by `angle` and then shifted by `shift`.
    pub fn rigidly_moved(&self, angle: T, shift: [T; 2]) -> Result<Self> {
        let (s, c) = angle.sin_cos();
        let rot = |p: [T; 2]| [c * p[0] - s * p[1], s * p[0] + c * p[1]];
        let nodes = self
            .nodes
            .iter()
            .map(|&p| {
                let q = rot(p);
                [q[0] + shift[0], q[1] + shift[1]]
            })
            .collect();
        let geometry = self
            .boundary
            .iter()
            .map(|l| LoopGeometry {
                normal: l.normal.iter().map(|&v| rot(v)).collect(),
                curvature: l.curvature.clone(),
                arclength: l.arclength.clone(),
                length: l.length,
            })
            .collect();
        let loops = self.boundary.iter().map(|l| l.nodes.clone()).collect();
        Self::assemble(nodes, self.triangles.clone(), loops, Some(geometry))
    }

    /// Plain-text mesh file: `nodes N triangles T`, node rows, triangle rows,
    /// then one `bloop n i1 … in` row per boundary loop.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "nodes {} triangles {}", self.nodes.len(), self.triangles.len());
        for p in &self.nodes {
            let _ = writeln!(s, "{} {}", p[0], p[1]);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        for l in &self.boundary {
            let _ = write!(s, "bloop {}", l.nodes.len());
            for v in &l.nodes {
                let _ = write!(s, " {v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let perr = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hl, header) = lines.next().ok_or_else(|| perr(1, "empty mesh file".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        let (n, t) = match h.as_slice() {
            ["nodes", n, "triangles", t] => (
                n.parse::<usize>()
                    .map_err(|_| perr(hl, format!("bad node count `{n}`")))?,
                t.parse::<usize>()
                    .map_err(|_| perr(hl, format!("bad triangle count `{t}`")))?,
            ),
            _ => return Err(perr(hl, "expected `nodes N triangles T`".into())),
        };
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| perr(hl, "file ends inside node block".into()))?;
            let v: Vec<T> = l
                .split_whitespace()
                .map(|s| s.parse::<T>().map_err(|_| perr(ln, format!("bad coordinate `{s}`"))))
                .collect::<Result<_>>()?;
            if v.len() != 2 {
                return Err(perr(ln, "node row needs `x y`".into()));
            }
            nodes.push([v[0], v[1]]);
        }
        let mut triangles = Vec::with_capacity(t);
        for _ in 0..t {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| perr(hl, "file ends inside triangle block".into()))?;
            let v: Vec<usize> = l
                .split_whitespace()
                .map(|s| s.parse::<usize>().map_err(|_| perr(ln, format!("bad index `{s}`"))))
                .collect::<Result<_>>()?;
            if v.len() != 3 {
                return Err(perr(ln, "triangle row needs `i j k`".into()));
            }
            triangles.push([v[0], v[1], v[2]]);
        }
        let mut loops = Vec::new();
        for (ln, l) in lines {
            let mut it = l.split_whitespace();
            if it.next() != Some("bloop") {
                return Err(perr(ln, "expected `bloop n i1 ... in`".into()));
            }
            let m: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| perr(ln, "bad loop length".into()))?;
            let ids: Vec<usize> = it
                .map(|s| s.parse::<usize>().map_err(|_| perr(ln, format!("bad index `{s}`"))))
                .collect::<Result<_>>()?;
            if ids.len() != m {
                return Err(perr(ln, format!("loop declares {m} nodes but lists {}", ids.len())));
            }
            loops.push(ids);
        }
        if loops.is_empty() {
            return Err(perr(hl, "no boundary loops".into()));
        }
        Self::new(nodes, triangles, loops)
    }
}

/// Reads a mesh file, validates it and derives boundary geometry.
pub fn load_mesh<T: Real>(path: &Path) -> Result<Mesh<T>> {
    let text = std::fs::read_to_string(path)?;
    Mesh::parse(&text, path)
}

/// Nodal weights for boundary integrals: half the sum of the two incident
/// boundary edge lengths.
pub fn boundary_quadrature<T: Real>(mesh: &Mesh<T>) -> Vec<(usize, T)> {
    let half = T::lit(0.5);
    mesh.boundary()
        .iter()
        .flat_map(|l| {
            let m = l.nodes.len();
            (0..m).map(move |p| {
                let prev = l.nodes[(p + m - 1) % m];
                let next = l.nodes[(p + 1) % m];
                (
                    l.nodes[p],
                    half * (mesh.distance(prev, l.nodes[p]) + mesh.distance(l.nodes[p], next)),
                )
            })
        })
        .collect()
}

fn signed_area<T: Real>(nodes: &[[T; 2]], t: &[usize; 3]) -> T {
    let (p0, p1, p2) = (nodes[t[0]], nodes[t[1]], nodes[t[2]]);
    T::lit(0.5) * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
}

fn to_csr(rows: impl Iterator<Item = Vec<usize>>) -> (Vec<usize>, Vec<usize>) {
    let mut ptr = vec![0];
    let mut data = Vec::new();
    for r in rows {
        data.extend(r);
        ptr.push(data.len());
    }
    (ptr, data)
}

/// Normals and curvature of a closed polyline from periodic 5-point
/// (3-point for very short loops) finite differences in chord arc length.
fn fd_loop_geometry<T: Real>(nodes: &[[T; 2]], lp: &[usize]) -> LoopGeometry<T> {
    let m = lp.len();
    let mut arclength = Vec::with_capacity(m);
    let mut acc = T::zero();
    let seg = |a: usize, b: usize| {
        let (p, q) = (nodes[lp[a % m]], nodes[lp[b % m]]);
        (q[0] - p[0]).hypot(q[1] - p[1])
    };
    for p in 0..m {
        arclength.push(acc);
        acc += seg(p, p + 1);
    }
    let half_width: usize = if m >= 5 { 2 } else { 1 };
    let mut normal = Vec::with_capacity(m);
    let mut curvature = Vec::with_capacity(m);
    for p in 0..m {
        // offsets relative to node p along the loop
        let mut taus = Vec::with_capacity(2 * half_width + 1);
        let mut pts = Vec::with_capacity(2 * half_width + 1);
        for o in -(half_width as isize)..=(half_width as isize) {
            let mut tau = T::zero();
            if o > 0 {
                for k in 0..o as usize {
                    tau += seg(p + k, p + k + 1);
                }
            } else {
                for k in 0..(-o) as usize {
                    tau -= seg(p + m - k - 1, p + m - k);
                }
            }
            taus.push(tau);
            pts.push(nodes[lp[(p as isize + o).rem_euclid(m as isize) as usize]]);
        }
        let w = fd_weights(T::zero(), &taus, 2);
        let d = |order: usize, c: usize| -> T { pts.iter().zip(&w[order]).map(|(q, &wk)| wk * q[c]).sum() };
        let (x1, y1, x2, y2) = (d(1, 0), d(1, 1), d(2, 0), d(2, 1));
        let speed = x1.hypot(y1);
        normal.push([y1 / speed, -x1 / speed]);
        curvature.push((x1 * y2 - y1 * x2) / (speed * speed * speed));
    }
    LoopGeometry {
        normal,
        curvature,
        arclength,
        length: acc,
    }
}
