use serde::{Deserialize, Serialize};

use super::mesh::Mesh;
use super::sparse::CsrMatrix;
use crate::market_data::ParameterGroup;

/// Number of coefficient-separable operator pieces.
pub const N_PARTS: usize = 8;

/// Treatment of the truncated domain's edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    /// Zero second derivative across every edge: the diffusive flux leaving
    /// the domain is the one of the adjacent element, so V continues linearly.
    #[default]
    Linearity,
    /// Homogeneous Neumann (no diffusive flux).
    ZeroFlux,
}

/// Galerkin pieces of the pricing operator
///
/// L V = (θ + u − αr) V_r − bu V_u + ½σ₁² V_rr + ½σ₂² V_uu + γσ₁σ₂ V_ru − rV
///
/// each independent of the scenario, so that L = Σ c_k(ρ, t) E_k.
/// The pieces are, in order: V_r, uV_r, rV_r, uV_u, V_rr, V_uu, V_ru, rV.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub mass: CsrMatrix,
    pub parts: Vec<CsrMatrix>,
    pub boundary: BoundaryCondition,
}

/// Coefficients c_k(ρ, t) multiplying the operator pieces.
pub fn coefficients(rho: &ParameterGroup, t: f64) -> [f64; N_PARTS] {
    [
        rho.theta_at(t),
        1.0,
        -rho.alpha,
        -rho.b,
        0.5 * rho.sigma1 * rho.sigma1,
        0.5 * rho.sigma2 * rho.sigma2,
        rho.gamma * rho.sigma1 * rho.sigma2,
        -1.0,
    ]
}

impl OperatorSet {
    pub fn assemble(mesh: &Mesh, boundary: BoundaryCondition) -> Self {
        let m = mesh.m();
        let mut rows: Vec<Vec<usize>> = vec![Vec::with_capacity(7); m];
        for el in &mesh.elements {
            for &a in el {
                rows[a].extend_from_slice(el);
            }
        }
        let mass_pattern = CsrMatrix::from_pattern(&rows);
        let mut mass = mass_pattern.clone();
        let mut parts = vec![mass_pattern; N_PARTS];

        for (e, el) in mesh.elements.iter().enumerate() {
            let area = mesh.element_area(e);
            let p = el.map(|k| mesh.nodes[k]);
            let grads = gradients(&p, area);
            let sum_r: f64 = p.iter().map(|q| q[0]).sum();
            let sum_u: f64 = p.iter().map(|q| q[1]).sum();
            for a in 0..3 {
                let i = el[a];
                // ∫ w φ_i for w = 1, u, r
                let int_1 = area / 3.0;
                let int_u = area / 12.0 * (p[a][1] + sum_u);
                let int_r = area / 12.0 * (p[a][0] + sum_r);
                for c in 0..3 {
                    let j = el[c];
                    let g = grads[c];
                    let gi = grads[a];
                    mass.add(i, j, area / 12.0 * if a == c { 2.0 } else { 1.0 });
                    parts[0].add(i, j, g[0] * int_1);
                    parts[1].add(i, j, g[0] * int_u);
                    parts[2].add(i, j, g[0] * int_r);
                    parts[3].add(i, j, g[1] * int_u);
                    parts[4].add(i, j, -area * g[0] * gi[0]);
                    parts[5].add(i, j, -area * g[1] * gi[1]);
                    parts[6].add(i, j, -area * 0.5 * (g[0] * gi[1] + g[1] * gi[0]));
                    let mut react = 0.0;
                    for l in 0..3 {
                        react += p[l][0] * triple_integral(a, c, l, area);
                    }
                    parts[7].add(i, j, react);
                }
            }
        }

        if boundary == BoundaryCondition::Linearity {
            for edge in &mesh.boundary {
                let el = mesh.elements[edge.element];
                let area = mesh.element_area(edge.element);
                let p = el.map(|k| mesh.nodes[k]);
                let grads = gradients(&p, area);
                let n = edge.normal;
                let half = 0.5 * edge.length;
                for &i in &edge.nodes {
                    for c in 0..3 {
                        let j = el[c];
                        let g = grads[c];
                        parts[4].add(i, j, g[0] * n[0] * half);
                        parts[5].add(i, j, g[1] * n[1] * half);
                        parts[6].add(i, j, 0.5 * (g[0] * n[1] + g[1] * n[0]) * half);
                    }
                }
            }
        }
        Self {
            mass,
            parts,
            boundary,
        }
    }

    pub fn dim(&self) -> usize {
        self.mass.n
    }

    /// Discrete operator Σ c_k E_k.
    pub fn operator(&self, coeffs: &[f64; N_PARTS]) -> CsrMatrix {
        let mut l = self.mass.zeros_like();
        for (c, part) in coeffs.iter().zip(&self.parts) {
            if *c != 0.0 {
                l.axpy(*c, part);
            }
        }
        l
    }

    /// Implicit-Euler system A V^{n−1} = B V^n for a step of length `dt`:
    /// A = M − dt·L, B = M.
    pub fn system(&self, coeffs: &[f64; N_PARTS], dt: f64) -> (CsrMatrix, CsrMatrix) {
        let mut a = self.mass.clone();
        for (c, part) in coeffs.iter().zip(&self.parts) {
            if *c != 0.0 {
                a.axpy(-dt * c, part);
            }
        }
        (a, self.mass.clone())
    }
}

fn gradients(p: &[[f64; 2]; 3], area: f64) -> [[f64; 2]; 3] {
    let mut g = [[0.0; 2]; 3];
    for a in 0..3 {
        let b = (a + 1) % 3;
        let c = (a + 2) % 3;
        g[a] = [
            (p[b][1] - p[c][1]) / (2.0 * area),
            (p[c][0] - p[b][0]) / (2.0 * area),
        ];
    }
    g
}

/// ∫ φ_a φ_b φ_c over a linear triangle.
fn triple_integral(a: usize, b: usize, c: usize, area: f64) -> f64 {
    let k = if a == b && b == c {
        6.0
    } else if a == b || b == c || a == c {
        2.0
    } else {
        1.0
    };
    area * k / 60.0
}
