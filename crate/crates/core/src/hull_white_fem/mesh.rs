use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Rectangle of the (r, u) state space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub r_min: f64,
    pub r_max: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl Bounds {
    pub fn new(r_min: f64, r_max: f64, u_min: f64, u_max: f64) -> Result<Self> {
        let b = Self {
            r_min,
            r_max,
            u_min,
            u_max,
        };
        if !(r_max > r_min && u_max > u_min) || ![r_min, r_max, u_min, u_max].iter().all(|v| v.is_finite()) {
            return Err(Error::DegenerateMesh(format!("empty bounds {b:?}")));
        }
        Ok(b)
    }

    pub fn width(&self) -> f64 {
        self.r_max - self.r_min
    }

    pub fn height(&self) -> f64 {
        self.u_max - self.u_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Mean-centred box of ±`n_sd` stationary standard deviations.
    pub fn stationary(r_center: f64, sd_r: f64, sd_u: f64, n_sd: f64) -> Result<Self> {
        Self::new(r_center - n_sd * sd_r, r_center + n_sd * sd_r, -n_sd * sd_u, n_sd * sd_u)
    }
}

/// Boundary edge of an element with its outward unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub element: usize,
    pub nodes: [usize; 2],
    pub normal: [f64; 2],
    pub length: f64,
}

/// Structured triangulation: every grid cell is split along its
/// south-west/north-east diagonal into two counter-clockwise triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub bounds: Bounds,
    /// Target element size the mesh was built for.
    pub h: f64,
    /// Nodes along r and u.
    pub nr: usize,
    pub nu: usize,
    pub nodes: Vec<[f64; 2]>,
    pub elements: Vec<[usize; 3]>,
    pub boundary: Vec<BoundaryEdge>,
}

impl Mesh {
    /// Node count M.
    pub fn m(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * self.nr + i
    }

    pub fn dr(&self) -> f64 {
        self.bounds.width() / (self.nr - 1) as f64
    }

    pub fn du(&self) -> f64 {
        self.bounds.height() / (self.nu - 1) as f64
    }

    pub fn element_area(&self, e: usize) -> f64 {
        let [a, b, c] = self.elements[e];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    /// sqrt of the mean element area.
    pub fn effective_h(&self) -> f64 {
        let total: f64 = (0..self.elements.len()).map(|e| self.element_area(e)).sum();
        (total / self.elements.len() as f64).sqrt()
    }

    /// Barycentric interpolation weights at (r, u), clamped into the domain.
    pub fn interpolation_weights(&self, r: f64, u: f64) -> [(usize, f64); 3] {
        let b = &self.bounds;
        let x = ((r - b.r_min) / self.dr()).clamp(0.0, (self.nr - 1) as f64);
        let y = ((u - b.u_min) / self.du()).clamp(0.0, (self.nu - 1) as f64);
        let i = (x.floor() as usize).min(self.nr - 2);
        let j = (y.floor() as usize).min(self.nu - 2);
        let (fx, fy) = (x - i as f64, y - j as f64);
        let k00 = self.node_index(i, j);
        let k10 = self.node_index(i + 1, j);
        let k01 = self.node_index(i, j + 1);
        let k11 = self.node_index(i + 1, j + 1);
        if fx >= fy {
            [(k00, 1.0 - fx), (k10, fx - fy), (k11, fy)]
        } else {
            [(k00, 1.0 - fy), (k11, fx), (k01, fy - fx)]
        }
    }

    pub fn interpolate(&self, values: &[f64], r: f64, u: f64) -> f64 {
        self.interpolation_weights(r, u)
            .iter()
            .map(|&(k, w)| w * values[k])
            .sum()
    }
}

/// Builds the structured mesh whose effective element size is closest to `h`,
/// using the same number of cells along both axes.
pub fn build_mesh(bounds: Bounds, h: f64) -> Result<Mesh> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::DegenerateMesh(format!("element size must be positive, got {h}")));
    }
    if h > bounds.width().max(bounds.height()) {
        return Err(Error::DegenerateMesh(format!(
            "element size {h} exceeds the domain extent"
        )));
    }
    let cells = ((bounds.area() / 2.0).sqrt() / h).round().max(1.0) as usize;
    let mut mesh = build_mesh_cells(bounds, cells, cells)?;
    mesh.h = h;
    Ok(mesh)
}

/// Element size of the square-cell-count mesh with `m` nodes (m = (n+1)²).
pub fn h_for_nodes(bounds: &Bounds, m: usize) -> f64 {
    let cells = ((m as f64).sqrt() - 1.0).max(1.0);
    (bounds.area() / 2.0).sqrt() / cells
}

/// Builds a mesh with an explicit number of cells per axis.
pub fn build_mesh_cells(bounds: Bounds, cells_r: usize, cells_u: usize) -> Result<Mesh> {
    if cells_r == 0 || cells_u == 0 {
        return Err(Error::DegenerateMesh("need at least one cell per axis".into()));
    }
    let (nr, nu) = (cells_r + 1, cells_u + 1);
    let dr = bounds.width() / cells_r as f64;
    let du = bounds.height() / cells_u as f64;
    let mut nodes = Vec::with_capacity(nr * nu);
    for j in 0..nu {
        for i in 0..nr {
            nodes.push([bounds.r_min + i as f64 * dr, bounds.u_min + j as f64 * du]);
        }
    }
    let id = |i: usize, j: usize| j * nr + i;
    let mut elements = Vec::with_capacity(2 * cells_r * cells_u);
    let mut boundary = Vec::new();
    for j in 0..cells_u {
        for i in 0..cells_r {
            let (k00, k10, k01, k11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            let lower = elements.len();
            elements.push([k00, k10, k11]);
            let upper = elements.len();
            elements.push([k00, k11, k01]);
            if j == 0 {
                boundary.push(BoundaryEdge {
                    element: lower,
                    nodes: [k00, k10],
                    normal: [0.0, -1.0],
                    length: dr,
                });
            }
            if i + 1 == cells_r {
                boundary.push(BoundaryEdge {
                    element: lower,
                    nodes: [k10, k11],
                    normal: [1.0, 0.0],
                    length: du,
                });
            }
            if j + 1 == cells_u {
                boundary.push(BoundaryEdge {
                    element: upper,
                    nodes: [k11, k01],
                    normal: [0.0, 1.0],
                    length: dr,
                });
            }
            if i == 0 {
                boundary.push(BoundaryEdge {
                    element: upper,
                    nodes: [k01, k00],
                    normal: [-1.0, 0.0],
                    length: du,
                });
            }
        }
    }
    let h = (bounds.area() / elements.len() as f64).sqrt();
    Ok(Mesh {
        bounds,
        h,
        nr,
        nu,
        nodes,
        elements,
        boundary,
    })
}
