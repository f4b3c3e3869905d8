//! Boundary discretisation of rigid scatterers into constant elements.
//!
//! Loops are traversed with the rigid material on the left of the direction
//! of travel, so the unit normal `perp(tangent)` points from the fluid into
//! the material. Closed circles built here and zero-level-set contours both
//! follow this convention.

use crate::error::{Error, Result};
use crate::geom::Vec2;
use std::io::{BufRead, Write};
use std::ops::Range;

/// One straight constant element with midpoint collocation.
#[derive(Debug, Clone)]
pub struct Element {
    pub a: Vec2,
    pub b: Vec2,
    pub midpoint: Vec2,
    pub normal: Vec2,
    pub length: f64,
}

impl Element {
    pub fn new(a: Vec2, b: Vec2) -> Self {
        let tangent = (b - a).normalized();
        Self {
            a,
            b,
            midpoint: (a + b) * 0.5,
            normal: tangent.perp(),
            length: (b - a).norm(),
        }
    }

    pub fn tangent(&self) -> Vec2 {
        (self.b - self.a) / self.length
    }
}

/// Closed polygonal boundaries grouped into loops.
#[derive(Debug, Clone, Default)]
pub struct BoundaryMesh {
    pub elements: Vec<Element>,
    pub loops: Vec<Range<usize>>,
}

impl BoundaryMesh {
    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    /// Appends another mesh, keeping loop bookkeeping intact.
    pub fn append(&mut self, other: &BoundaryMesh) {
        let offset = self.elements.len();
        self.elements.extend(other.elements.iter().cloned());
        self.loops.extend(
            other
                .loops
                .iter()
                .map(|r| r.start + offset..r.end + offset),
        );
    }

    pub fn perimeter(&self) -> f64 {
        self.elements.iter().map(|e| e.length).sum()
    }

    /// Shoelace signed area of one loop (positive for counter-clockwise).
    pub fn loop_signed_area(&self, lp: &Range<usize>) -> f64 {
        let mut acc = 0.0;
        for e in &self.elements[lp.clone()] {
            acc += e.a.cross(e.b);
        }
        0.5 * acc
    }

    /// Regular n-gon approximation of a circle; the disc is the rigid side so
    /// normals point toward the centre.
    pub fn circle(center: Vec2, radius: f64, n_elem: usize) -> Result<BoundaryMesh> {
        if radius <= 0.0 {
            return Err(Error::Geometry(format!("radius must be positive, got {radius}")));
        }
        if n_elem < 3 {
            return Err(Error::Geometry(format!("need at least 3 elements, got {n_elem}")));
        }
        let mut elements = Vec::with_capacity(n_elem);
        let vertex = |k: usize| {
            let theta = 2.0 * std::f64::consts::PI * (k % n_elem) as f64 / n_elem as f64;
            center + Vec2::new(radius * theta.cos(), radius * theta.sin())
        };
        for k in 0..n_elem {
            elements.push(Element::new(vertex(k), vertex(k + 1)));
        }
        Ok(BoundaryMesh {
            loops: vec![0..elements.len()],
            elements,
        })
    }

    /// Writes one element per row: `x1,y1,x2,y2,nx,ny,loop_id`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x1,y1,x2,y2,nx,ny,loop_id")?;
        for (loop_id, lp) in self.loops.iter().enumerate() {
            for e in &self.elements[lp.clone()] {
                writeln!(
                    w,
                    "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{}",
                    e.a.x, e.a.y, e.b.x, e.b.y, e.normal.x, e.normal.y, loop_id
                )?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<BoundaryMesh> {
        let mut mesh = BoundaryMesh::default();
        let mut current_loop: Option<usize> = None;
        let mut loop_start = 0;
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::Geometry(format!("csv read: {e}")))?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                return Err(Error::Geometry(format!(
                    "csv line {lineno}: expected 7 fields, got {}",
                    fields.len()
                )));
            }
            let mut nums = [0.0_f64; 6];
            for (slot, field) in nums.iter_mut().zip(&fields[..6]) {
                *slot = field
                    .trim()
                    .parse()
                    .map_err(|e| Error::Geometry(format!("csv line {lineno}: {e}")))?;
            }
            let loop_id: usize = fields[6]
                .trim()
                .parse()
                .map_err(|e| Error::Geometry(format!("csv line {lineno}: {e}")))?;
            if current_loop != Some(loop_id) {
                if current_loop.is_some() {
                    mesh.loops.push(loop_start..mesh.elements.len());
                }
                current_loop = Some(loop_id);
                loop_start = mesh.elements.len();
            }
            let mut e = Element::new(Vec2::new(nums[0], nums[1]), Vec2::new(nums[2], nums[3]));
            e.normal = Vec2::new(nums[4], nums[5]);
            mesh.elements.push(e);
        }
        if current_loop.is_some() {
            mesh.loops.push(loop_start..mesh.elements.len());
        }
        Ok(mesh)
    }
}

/// Diagnostic report from [`validate`].
#[derive(Debug, Clone, Default)]
pub struct MeshDiagnostics {
    pub loop_closure_errors: Vec<f64>,
    /// Loops whose stored normals disagree with the tangent convention.
    pub orientation_flags: Vec<usize>,
    pub min_element_length: f64,
    pub max_element_length: f64,
    /// Pairs of collocation points closer than a quarter of the local length.
    pub proximity_warnings: Vec<(usize, usize, f64)>,
}

impl MeshDiagnostics {
    pub fn all_ok(&self) -> bool {
        self.loop_closure_errors.iter().all(|&e| e <= 1e-12)
            && self.orientation_flags.is_empty()
            && self.proximity_warnings.is_empty()
            && self.min_element_length > 0.0
    }
}

/// Checks loop closure, orientation, length bounds, and collocation-point
/// proximity. Diagnostic only, never fails.
pub fn validate(mesh: &BoundaryMesh) -> MeshDiagnostics {
    let mut diag = MeshDiagnostics {
        min_element_length: f64::INFINITY,
        max_element_length: 0.0,
        ..Default::default()
    };
    if mesh.is_empty() {
        diag.min_element_length = 0.0;
        return diag;
    }
    for (loop_id, lp) in mesh.loops.iter().enumerate() {
        let elems = &mesh.elements[lp.clone()];
        let mut closure = 0.0_f64;
        for (k, e) in elems.iter().enumerate() {
            let next = &elems[(k + 1) % elems.len()];
            closure = closure.max(e.b.distance(next.a));
        }
        diag.loop_closure_errors.push(closure);
        let flipped = elems
            .iter()
            .filter(|e| e.normal.dot(e.tangent().perp()) < 0.0)
            .count();
        if flipped > 0 {
            diag.orientation_flags.push(loop_id);
        }
    }
    for e in &mesh.elements {
        diag.min_element_length = diag.min_element_length.min(e.length);
        diag.max_element_length = diag.max_element_length.max(e.length);
    }
    let n = mesh.elements.len();
    for i in 0..n {
        for j in i + 1..n {
            let d = mesh.elements[i].midpoint.distance(mesh.elements[j].midpoint);
            let local = 0.25 * mesh.elements[i].length.min(mesh.elements[j].length);
            if d < local {
                diag.proximity_warnings.push((i, j, d));
            }
        }
    }
    diag
}

/// Axis-aligned sampling box for contour extraction.
#[derive(Debug, Clone, Copy)]
pub struct GridSampling {
    pub min: Vec2,
    pub max: Vec2,
    /// Number of cells along x and y.
    pub nx: usize,
    pub ny: usize,
}

impl GridSampling {
    pub fn cell(&self) -> Vec2 {
        Vec2::new(
            (self.max.x - self.min.x) / self.nx as f64,
            (self.max.y - self.min.y) / self.ny as f64,
        )
    }
}

/// Marching-squares extraction of the zero level set.
///
/// The rigid material is `phi < 0`; segments are oriented with material on
/// the left so normals point into it. Open contours touching the box are
/// closed along its boundary (a strongly positive virtual ring outside the
/// box forces crossings right at the rim, which are then snapped onto it).
/// Loops below the resolution floor (fewer than 6 elements or perimeter
/// under two cells) are discarded.
pub fn extract_contour<F: Fn(Vec2) -> f64>(phi: F, grid: &GridSampling) -> BoundaryMesh {
    let (nx, ny) = (grid.nx, grid.ny);
    let cell = grid.cell();
    // Node grid padded by one virtual ring.
    let nxn = nx + 3;
    let nyn = ny + 3;
    let node_pos = |ix: i64, iy: i64| -> Vec2 {
        Vec2::new(
            grid.min.x + ix as f64 * cell.x,
            grid.min.y + iy as f64 * cell.y,
        )
    };
    let mut values = vec![0.0_f64; nxn * nyn];
    let mut max_abs = 0.0_f64;
    for iy in -1..=(ny as i64 + 1) {
        for ix in -1..=(nx as i64 + 1) {
            let inside = ix >= 0 && ix <= nx as i64 && iy >= 0 && iy <= ny as i64;
            let v = if inside { phi(node_pos(ix, iy)) } else { f64::NAN };
            if inside {
                max_abs = max_abs.max(v.abs());
            }
            values[((iy + 1) as usize) * nxn + (ix + 1) as usize] = v;
        }
    }
    let ring = 1e3 * max_abs.max(1.0);
    for v in values.iter_mut() {
        if v.is_nan() {
            *v = ring;
        }
    }
    let value = |ix: i64, iy: i64| values[((iy + 1) as usize) * nxn + (ix + 1) as usize];

    // Each crossing sits on a unique grid edge; key segments by edge ids.
    type EdgeKey = (u8, i64, i64); // 0 = horizontal edge at (ix..ix+1, iy), 1 = vertical
    let mut segments: Vec<(EdgeKey, EdgeKey, Vec2, Vec2)> = Vec::new();

    let crossing = |a: f64, b: f64| a / (a - b);

    for iy in -1..=(ny as i64) {
        for ix in -1..=(nx as i64) {
            // Corners counter-clockwise from bottom-left.
            let mut v = [
                value(ix, iy),
                value(ix + 1, iy),
                value(ix + 1, iy + 1),
                value(ix, iy + 1),
            ];
            if v.iter().all(|x| x.abs() < 1e-14) {
                log::warn!("degenerate contour cell at ({ix}, {iy}); perturbing");
                for x in v.iter_mut() {
                    *x = 1e-12;
                }
            }
            let inside = |x: f64| x < 0.0;
            let mask = (inside(v[0]) as usize)
                | (inside(v[1]) as usize) << 1
                | (inside(v[2]) as usize) << 2
                | (inside(v[3]) as usize) << 3;
            if mask == 0 || mask == 15 {
                continue;
            }
            let p0 = node_pos(ix, iy);
            // Walk edges counter-clockwise: bottom, right, top, left.
            // Record crossings with whether the walk exits material there.
            struct Crossing {
                key: EdgeKey,
                point: Vec2,
                exits: bool,
            }
            let mut crossings: Vec<Crossing> = Vec::new();
            let edge_defs = [
                (0, 1, (0u8, ix, iy), true),      // bottom: corners 0 -> 1, horizontal
                (1, 2, (1u8, ix + 1, iy), false), // right: 1 -> 2, vertical
                (2, 3, (0u8, ix, iy + 1), true),  // top: 2 -> 3
                (3, 0, (1u8, ix, iy), false),     // left: 3 -> 0
            ];
            for &(c0, c1, key, horizontal) in &edge_defs {
                if inside(v[c0]) != inside(v[c1]) {
                    let t = crossing(v[c0], v[c1]);
                    let corner_offsets = [
                        Vec2::new(0.0, 0.0),
                        Vec2::new(cell.x, 0.0),
                        Vec2::new(cell.x, cell.y),
                        Vec2::new(0.0, cell.y),
                    ];
                    let point = p0 + corner_offsets[c0] + (corner_offsets[c1] - corner_offsets[c0]) * t;
                    let _ = horizontal;
                    crossings.push(Crossing {
                        key,
                        point,
                        exits: inside(v[c0]),
                    });
                }
            }
            let exits: Vec<usize> = (0..crossings.len()).filter(|&i| crossings[i].exits).collect();
            let entries: Vec<usize> = (0..crossings.len()).filter(|&i| !crossings[i].exits).collect();
            if crossings.len() == 2 {
                let (e, s) = (exits[0], entries[0]);
                segments.push((
                    crossings[e].key,
                    crossings[s].key,
                    crossings[e].point,
                    crossings[s].point,
                ));
            } else if crossings.len() == 4 {
                // Saddle: midpoint sign picks which exits connect to which entries.
                let center = 0.25 * (v[0] + v[1] + v[2] + v[3]);
                let phi_c = phi(p0 + cell * 0.5);
                let center_material = if phi_c.abs() > 1e-14 {
                    phi_c < 0.0
                } else {
                    center < 0.0
                };
                for &e in &exits {
                    // Walk forward (cyclically) from the exit to the first
                    // entry for material centres, backward otherwise.
                    let mut k = e;
                    let target = loop {
                        k = if center_material {
                            (k + 1) % crossings.len()
                        } else {
                            (k + crossings.len() - 1) % crossings.len()
                        };
                        if !crossings[k].exits {
                            break k;
                        }
                    };
                    segments.push((
                        crossings[e].key,
                        crossings[target].key,
                        crossings[e].point,
                        crossings[target].point,
                    ));
                }
            }
        }
    }

    // Chain segments into closed loops via the edge keys.
    let mut start_index: std::collections::HashMap<EdgeKey, usize> = std::collections::HashMap::new();
    for (i, seg) in segments.iter().enumerate() {
        start_index.insert(seg.0, i);
    }
    let mut used = vec![false; segments.len()];
    let mut mesh = BoundaryMesh::default();
    let clamp_point = |p: Vec2| -> Vec2 {
        Vec2::new(
            p.x.clamp(grid.min.x, grid.max.x),
            p.y.clamp(grid.min.y, grid.max.y),
        )
    };
    for seed in 0..segments.len() {
        if used[seed] {
            continue;
        }
        let mut polyline = Vec::new();
        let mut cur = seed;
        loop {
            used[cur] = true;
            polyline.push(clamp_point(segments[cur].2));
            let next_key = segments[cur].1;
            match start_index.get(&next_key) {
                Some(&next) if !used[next] => cur = next,
                Some(&next) if next == seed => break,
                _ => break,
            }
        }
        if polyline.len() < 3 {
            continue;
        }
        // Drop near-duplicate consecutive vertices introduced by clamping.
        let mut cleaned: Vec<Vec2> = Vec::with_capacity(polyline.len());
        for p in polyline {
            if cleaned.last().map_or(true, |q| q.distance(p) > 1e-12) {
                cleaned.push(p);
            }
        }
        while cleaned.len() > 1 && cleaned[0].distance(*cleaned.last().unwrap()) <= 1e-12 {
            cleaned.pop();
        }
        if cleaned.len() < 6 {
            continue;
        }
        let perimeter: f64 = (0..cleaned.len())
            .map(|i| cleaned[i].distance(cleaned[(i + 1) % cleaned.len()]))
            .sum();
        if perimeter < 2.0 * cell.x.max(cell.y) {
            continue;
        }
        let start = mesh.elements.len();
        for i in 0..cleaned.len() {
            mesh.elements
                .push(Element::new(cleaned[i], cleaned[(i + 1) % cleaned.len()]));
        }
        mesh.loops.push(start..mesh.elements.len());
    }
    mesh
}
