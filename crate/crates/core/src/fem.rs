//! 2D frame finite elements: a parametric Pratt-style truss built from
//! 2-node Timoshenko beam elements, plus assembly of the global stiffness,
//! mass, and Rayleigh damping matrices and support handling.
//!
//! Nodes carry three degrees of freedom (ux, uy, rz); global DOF indices are
//! `3 * node + component`.

use crate::error::{Error, Result};
use crate::linalg::{matmul, Cholesky, Matrix};
use serde::{Deserialize, Serialize};

pub const DOF_PER_NODE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    /// Young's modulus, Pa.
    pub youngs_modulus: f64,
    /// Poisson ratio, dimensionless.
    pub poisson_ratio: f64,
    /// Density, kg/m^3.
    pub density: f64,
}

impl Material {
    pub fn shear_modulus(&self) -> f64 {
        self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))
    }

    pub fn steel() -> Material {
        Material {
            youngs_modulus: 210e9,
            poisson_ratio: 0.3,
            density: 7850.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Section {
    /// Cross-section area, m^2.
    pub area: f64,
    /// Second moment of area about the bending axis, m^4.
    pub second_moment: f64,
    /// Shear correction factor, in (0, 1].
    pub shear_factor: f64,
}

impl Section {
    /// Rectangular section of the given width and in-plane depth.
    pub fn rectangular(width: f64, depth: f64) -> Section {
        Section {
            area: width * depth,
            second_moment: width * depth.powi(3) / 12.0,
            shear_factor: 5.0 / 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementDef {
    pub node_a: usize,
    pub node_b: usize,
    pub section: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub node: usize,
    pub fix_ux: bool,
    pub fix_uy: bool,
    pub fix_rz: bool,
}

impl Support {
    pub fn hinge(node: usize) -> Support {
        Support { node, fix_ux: true, fix_uy: true, fix_rz: false }
    }

    pub fn roller(node: usize) -> Support {
        Support { node, fix_ux: false, fix_uy: true, fix_rz: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MassModel {
    Consistent,
    Lumped,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructureModel {
    pub nodes: Vec<Node>,
    pub elements: Vec<ElementDef>,
    pub sections: Vec<Section>,
    pub material: Material,
    pub supports: Vec<Support>,
}

impl StructureModel {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_dofs(&self) -> usize {
        DOF_PER_NODE * self.nodes.len()
    }

    /// Global DOF index of (node, component), component 0=ux, 1=uy, 2=rz.
    pub fn dof(&self, node: usize, component: usize) -> usize {
        debug_assert!(component < DOF_PER_NODE);
        DOF_PER_NODE * node + component
    }

    pub fn element_length(&self, e: &ElementDef) -> f64 {
        let a = self.nodes[e.node_a];
        let b = self.nodes[e.node_b];
        ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.elements.iter().enumerate() {
            if e.node_a >= self.nodes.len() || e.node_b >= self.nodes.len() {
                return Err(Error::config(format!("element {i} references missing node")));
            }
            if e.section >= self.sections.len() {
                return Err(Error::config(format!("element {i} references missing section")));
            }
            if self.element_length(e) <= 0.0 {
                return Err(Error::config(format!("element {i} has zero length")));
            }
        }
        for s in &self.supports {
            if s.node >= self.nodes.len() {
                return Err(Error::config(format!("support references missing node {}", s.node)));
            }
        }
        for i in 0..self.nodes.len() {
            for j in (i + 1)..self.nodes.len() {
                let (a, b) = (self.nodes[i], self.nodes[j]);
                if (a.x - b.x).abs() < 1e-12 && (a.y - b.y).abs() < 1e-12 {
                    return Err(Error::config(format!("duplicate node coordinates at {i} and {j}")));
                }
            }
        }
        Ok(())
    }

    /// Nodes on the bottom chord (minimal y), sorted by x. The moving load
    /// runs along this chord.
    pub fn bottom_chord_nodes(&self) -> Vec<usize> {
        let y_min = self.nodes.iter().map(|n| n.y).fold(f64::INFINITY, f64::min);
        let mut ids: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| (self.nodes[i].y - y_min).abs() < 1e-9)
            .collect();
        ids.sort_by(|&a, &b| self.nodes[a].x.partial_cmp(&self.nodes[b].x).unwrap());
        ids
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrussParams {
    /// Horizontal span, m.
    pub span: f64,
    /// Chord-to-chord height, m.
    pub height: f64,
    /// Number of chord segments along the span; node count is 2 * (panels + 1).
    pub panels: usize,
    /// Web module width in panels: verticals (and diagonal anchors) sit at
    /// every `web_every`-th panel point. Must divide `panels`. Chord nodes
    /// between web points subdivide the chord run.
    pub web_every: usize,
    /// Diagonal bracing extent in web modules counted from each support;
    /// `None` braces every module.
    pub braced_modules: Option<usize>,
    pub section: Section,
    pub material: Material,
}

/// Preset mirroring the 20 m x 5 m, 56-node configuration: 27 chord
/// segments per chord, web connections at the third points, steel,
/// rectangular 0.25 m x 0.40 m members, hinge at the bottom-left node and
/// roller at the bottom-right node.
pub fn beam_truss_params() -> TrussParams {
    TrussParams {
        span: 20.0,
        height: 5.0,
        panels: 27,
        web_every: 9,
        braced_modules: None,
        section: Section::rectangular(0.25, 0.40),
        material: Material::steel(),
    }
}

/// Build a Pratt-style truss: parallel bottom and top chords with
/// `panels + 1` node pairs, verticals at every web point, and diagonals
/// sloping toward midspan (a module straddling midspan is X-braced to keep
/// the layout mirror symmetric).
pub fn build_truss_model(params: &TrussParams) -> Result<StructureModel> {
    if params.span <= 0.0 || params.height <= 0.0 {
        return Err(Error::config("truss span and height must be positive"));
    }
    if params.panels < 2 {
        return Err(Error::config("truss needs at least 2 panels"));
    }
    if params.web_every == 0 || params.panels % params.web_every != 0 {
        return Err(Error::config("web_every must divide the panel count"));
    }
    let p = params.panels;
    let m = params.web_every;
    let modules = p / m;
    let dx = params.span / p as f64;

    let mut nodes = Vec::with_capacity(2 * (p + 1));
    for j in 0..=p {
        nodes.push(Node { x: j as f64 * dx, y: 0.0 });
    }
    for j in 0..=p {
        nodes.push(Node { x: j as f64 * dx, y: params.height });
    }
    let bottom = |j: usize| j;
    let top = |j: usize| p + 1 + j;

    let mut elements = Vec::new();
    let mut push = |a: usize, b: usize| {
        elements.push(ElementDef { node_a: a, node_b: b, section: 0 });
    };
    for j in 0..p {
        push(bottom(j), bottom(j + 1));
        push(top(j), top(j + 1));
    }
    for k in 0..=modules {
        push(bottom(k * m), top(k * m));
    }
    let braced = params.braced_modules.unwrap_or(modules);
    for k in 0..modules {
        if k.min(modules - 1 - k) >= braced {
            continue;
        }
        let (lo, hi) = (k * m, (k + 1) * m);
        // 2k + 1 <=> modules locates the module relative to midspan
        match (2 * k + 1).cmp(&modules) {
            std::cmp::Ordering::Less => push(top(lo), bottom(hi)),
            std::cmp::Ordering::Greater => push(bottom(lo), top(hi)),
            std::cmp::Ordering::Equal => {
                push(top(lo), bottom(hi));
                push(bottom(lo), top(hi));
            }
        }
    }

    let model = StructureModel {
        nodes,
        elements,
        sections: vec![params.section],
        material: params.material,
        supports: vec![Support::hinge(bottom(0)), Support::roller(bottom(p))],
    };
    model.validate()?;
    Ok(model)
}

/// Local-to-global element stiffness and mass matrices for a 2-node
/// Timoshenko beam between (xa, ya) and (xb, yb). DOF order per node is
/// (axial, transverse, rotation) in the local frame, rotated to global
/// (ux, uy, rz).
pub fn element_matrices(
    xa: f64,
    ya: f64,
    xb: f64,
    yb: f64,
    section: &Section,
    material: &Material,
    mass_model: MassModel,
) -> Result<(Matrix, Matrix)> {
    let (dx, dy) = (xb - xa, yb - ya);
    let length = (dx * dx + dy * dy).sqrt();
    if length <= 0.0 {
        return Err(Error::config("zero-length element"));
    }
    if !(section.shear_factor > 0.0 && section.shear_factor <= 1.0) {
        return Err(Error::config("shear correction factor must lie in (0, 1]"));
    }

    let e = material.youngs_modulus;
    let g = material.shear_modulus();
    let rho = material.density;
    let a = section.area;
    let iz = section.second_moment;
    let kappa = section.shear_factor;
    let l = length;
    let l2 = l * l;

    // shear flexibility ratio
    let phi = 12.0 * e * iz / (kappa * g * a * l2);

    let mut k = Matrix::zeros(6, 6);
    let ax = e * a / l;
    k[(0, 0)] = ax;
    k[(0, 3)] = -ax;
    k[(3, 0)] = -ax;
    k[(3, 3)] = ax;

    let cb = e * iz / ((1.0 + phi) * l2 * l);
    let bend = [
        [12.0 * cb, 6.0 * l * cb, -12.0 * cb, 6.0 * l * cb],
        [
            6.0 * l * cb,
            (4.0 + phi) * l2 * cb,
            -6.0 * l * cb,
            (2.0 - phi) * l2 * cb,
        ],
        [-12.0 * cb, -6.0 * l * cb, 12.0 * cb, -6.0 * l * cb],
        [
            6.0 * l * cb,
            (2.0 - phi) * l2 * cb,
            -6.0 * l * cb,
            (4.0 + phi) * l2 * cb,
        ],
    ];
    let map = [1usize, 2, 4, 5];
    for (bi, &gi) in map.iter().enumerate() {
        for (bj, &gj) in map.iter().enumerate() {
            k[(gi, gj)] = bend[bi][bj];
        }
    }

    let mut m = Matrix::zeros(6, 6);
    // translational (and rotary) inertia, shear-corrected consistent form
    let tfac = rho * a * l / (1.0 + phi).powi(2);
    let m11 = 13.0 / 35.0 + 7.0 * phi / 10.0 + phi * phi / 3.0;
    let m12 = (11.0 / 210.0 + 11.0 * phi / 120.0 + phi * phi / 24.0) * l;
    let m13 = 9.0 / 70.0 + 3.0 * phi / 10.0 + phi * phi / 6.0;
    let m14 = -(13.0 / 420.0 + 3.0 * phi / 40.0 + phi * phi / 24.0) * l;
    let m22 = (1.0 / 105.0 + phi / 60.0 + phi * phi / 120.0) * l2;
    let m24 = -(1.0 / 140.0 + phi / 60.0 + phi * phi / 120.0) * l2;
    let trans = [
        [m11, m12, m13, m14],
        [m12, m22, -m14, m24],
        [m13, -m14, m11, -m12],
        [m14, m24, -m12, m22],
    ];

    let rfac = rho * iz / ((1.0 + phi).powi(2) * l);
    let r11 = 6.0 / 5.0;
    let r12 = (1.0 / 10.0 - phi / 2.0) * l;
    let r22 = (2.0 / 15.0 + phi / 6.0 + phi * phi / 3.0) * l2;
    let r24 = -(1.0 / 30.0 + phi / 6.0 - phi * phi / 6.0) * l2;
    let rot = [
        [r11, r12, -r11, r12],
        [r12, r22, -r12, r24],
        [-r11, -r12, r11, -r12],
        [r12, r24, -r12, r22],
    ];

    match mass_model {
        MassModel::Consistent => {
            let maxial = rho * a * l / 6.0;
            m[(0, 0)] = 2.0 * maxial;
            m[(0, 3)] = maxial;
            m[(3, 0)] = maxial;
            m[(3, 3)] = 2.0 * maxial;
            for (bi, &gi) in map.iter().enumerate() {
                for (bj, &gj) in map.iter().enumerate() {
                    m[(gi, gj)] = tfac * trans[bi][bj] + rfac * rot[bi][bj];
                }
            }
        }
        MassModel::Lumped => {
            // diagonal (HRZ) lumping: keep consistent diagonal, scale the
            // transverse block so translational mass sums to rho*A*L
            let half = rho * a * l / 2.0;
            m[(0, 0)] = half;
            m[(3, 3)] = half;
            let dw = tfac * (trans[0][0] + trans[2][2]);
            let s = rho * a * l / dw;
            m[(1, 1)] = s * tfac * trans[0][0];
            m[(4, 4)] = s * tfac * trans[2][2];
            m[(2, 2)] = s * (tfac * trans[1][1] + rfac * rot[1][1]);
            m[(5, 5)] = s * (tfac * trans[3][3] + rfac * rot[3][3]);
        }
    }

    // rotate local matrices into the global frame
    let (c, s) = (dx / l, dy / l);
    let mut t = Matrix::zeros(6, 6);
    for blk in [0, 3] {
        t[(blk, blk)] = c;
        t[(blk, blk + 1)] = s;
        t[(blk + 1, blk)] = -s;
        t[(blk + 1, blk + 1)] = c;
        t[(blk + 2, blk + 2)] = 1.0;
    }
    let tt = t.transpose();
    let kg = matmul(&matmul(&tt, &k), &t);
    let mg = matmul(&matmul(&tt, &m), &t);
    Ok((kg, mg))
}

/// Rayleigh damping coefficients C = a_r * M + b_r * K.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayleighCoefficients {
    /// Mass-proportional coefficient, 1/s.
    pub a_r: f64,
    /// Stiffness-proportional coefficient, s.
    pub b_r: f64,
}

impl RayleighCoefficients {
    pub fn validate(&self) -> Result<()> {
        if self.a_r < 0.0 || self.b_r < 0.0 {
            return Err(Error::config("Rayleigh coefficients must be non-negative"));
        }
        Ok(())
    }
}

pub fn rayleigh_damping(m: &Matrix, k: &Matrix, coeffs: RayleighCoefficients) -> Result<Matrix> {
    coeffs.validate()?;
    if m.rows() != k.rows() || m.cols() != k.cols() {
        return Err(Error::numerical("rayleigh_damping: dimension mismatch"));
    }
    let mut c = Matrix::zeros(m.rows(), m.cols());
    c.add_scaled(m, coeffs.a_r);
    c.add_scaled(k, coeffs.b_r);
    Ok(c)
}

/// Scatter-add all element matrices into global stiffness and mass.
pub fn assemble(model: &StructureModel, mass_model: MassModel) -> Result<(Matrix, Matrix)> {
    model.validate()?;
    let n = model.n_dofs();
    let mut k = Matrix::zeros(n, n);
    let mut m = Matrix::zeros(n, n);
    for e in &model.elements {
        let a = model.nodes[e.node_a];
        let b = model.nodes[e.node_b];
        let (ke, me) = element_matrices(
            a.x,
            a.y,
            b.x,
            b.y,
            &model.sections[e.section],
            &model.material,
            mass_model,
        )?;
        let gdofs = [
            model.dof(e.node_a, 0),
            model.dof(e.node_a, 1),
            model.dof(e.node_a, 2),
            model.dof(e.node_b, 0),
            model.dof(e.node_b, 1),
            model.dof(e.node_b, 2),
        ];
        for (li, &gi) in gdofs.iter().enumerate() {
            for (lj, &gj) in gdofs.iter().enumerate() {
                k[(gi, gj)] += ke[(li, lj)];
                m[(gi, gj)] += me[(li, lj)];
            }
        }
    }
    Ok((k, m))
}

/// Global matrices with the support partition applied: solves operate on the
/// free-DOF submatrices, constrained DOFs stay identically zero.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub k: Matrix,
    pub m: Matrix,
    pub c: Matrix,
    pub free_dofs: Vec<usize>,
    pub constrained_dofs: Vec<usize>,
    k_ff: Matrix,
    m_ff: Matrix,
    c_ff: Matrix,
    /// global DOF -> position in `free_dofs`, None when constrained
    free_index: Vec<Option<usize>>,
}

impl AssembledSystem {
    pub fn n_dofs(&self) -> usize {
        self.k.rows()
    }

    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn k_ff(&self) -> &Matrix {
        &self.k_ff
    }

    pub fn m_ff(&self) -> &Matrix {
        &self.m_ff
    }

    pub fn c_ff(&self) -> &Matrix {
        &self.c_ff
    }

    pub fn free_index_of(&self, dof: usize) -> Option<usize> {
        self.free_index[dof]
    }

    /// Gather the free components of a full-DOF vector.
    pub fn gather_free(&self, full: &[f64]) -> Vec<f64> {
        self.free_dofs.iter().map(|&d| full[d]).collect()
    }

    /// Scatter a free-DOF vector back to full size with zeros elsewhere.
    pub fn scatter_free(&self, free: &[f64], full: &mut [f64]) {
        full.iter_mut().for_each(|x| *x = 0.0);
        for (i, &d) in self.free_dofs.iter().enumerate() {
            full[d] = free[i];
        }
    }

    /// Cholesky of the free-free mass block; doubles as the positive
    /// definiteness check.
    pub fn mass_cholesky(&self) -> Result<Cholesky> {
        Cholesky::factor(&self.m_ff)
    }
}

pub fn apply_boundary_conditions(
    model: &StructureModel,
    k: Matrix,
    m: Matrix,
    c: Matrix,
) -> Result<AssembledSystem> {
    let n = model.n_dofs();
    if k.rows() != n || m.rows() != n || c.rows() != n {
        return Err(Error::numerical("apply_boundary_conditions: dimension mismatch"));
    }
    let mut fixed = vec![false; n];
    for s in &model.supports {
        if s.node >= model.n_nodes() {
            return Err(Error::config(format!("support on missing node {}", s.node)));
        }
        if s.fix_ux {
            fixed[model.dof(s.node, 0)] = true;
        }
        if s.fix_uy {
            fixed[model.dof(s.node, 1)] = true;
        }
        if s.fix_rz {
            fixed[model.dof(s.node, 2)] = true;
        }
    }
    let free_dofs: Vec<usize> = (0..n).filter(|&d| !fixed[d]).collect();
    let constrained_dofs: Vec<usize> = (0..n).filter(|&d| fixed[d]).collect();
    if free_dofs.is_empty() {
        return Err(Error::config("all DOFs constrained: degenerate system"));
    }
    let k_ff = k.submatrix(&free_dofs, &free_dofs);
    let m_ff = m.submatrix(&free_dofs, &free_dofs);
    let c_ff = c.submatrix(&free_dofs, &free_dofs);
    let mut free_index = vec![None; n];
    for (i, &d) in free_dofs.iter().enumerate() {
        free_index[d] = Some(i);
    }
    Ok(AssembledSystem {
        k,
        m,
        c,
        free_dofs,
        constrained_dofs,
        k_ff,
        m_ff,
        c_ff,
        free_index,
    })
}

/// Convenience: assemble a model end to end with damping and supports.
pub fn assemble_system(
    model: &StructureModel,
    mass_model: MassModel,
    damping: RayleighCoefficients,
) -> Result<AssembledSystem> {
    let (k, m) = assemble(model, mass_model)?;
    let c = rayleigh_damping(&m, &k, damping)?;
    apply_boundary_conditions(model, k, m, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm2;

    fn unit_material() -> Material {
        Material { youngs_modulus: 210e9, poisson_ratio: 0.3, density: 7850.0 }
    }

    #[test]
    fn axial_stiffness_is_ea_over_l() {
        let sec = Section { area: 0.1, second_moment: 1e-3, shear_factor: 5.0 / 6.0 };
        let (k, _) =
            element_matrices(0.0, 0.0, 5.0, 0.0, &sec, &unit_material(), MassModel::Consistent)
                .unwrap();
        let expect = 210e9 * 0.1 / 5.0; // 4.2e9
        assert!((k[(0, 0)] - expect).abs() / expect < 1e-14);
        assert!((k[(0, 3)] + expect).abs() / expect < 1e-14);
    }

    #[test]
    fn cantilever_tip_deflection_matches_closed_form() {
        // single horizontal element, node 0 fully fixed, vertical tip load
        let sec = Section::rectangular(0.25, 0.40);
        let mat = unit_material();
        let model = StructureModel {
            nodes: vec![Node { x: 0.0, y: 0.0 }, Node { x: 5.0, y: 0.0 }],
            elements: vec![ElementDef { node_a: 0, node_b: 1, section: 0 }],
            sections: vec![sec],
            material: mat,
            supports: vec![Support { node: 0, fix_ux: true, fix_uy: true, fix_rz: true }],
        };
        let system = assemble_system(
            &model,
            MassModel::Consistent,
            RayleighCoefficients { a_r: 0.0, b_r: 0.0 },
        )
        .unwrap();
        let chol = Cholesky::factor(system.k_ff()).unwrap();
        let mut f = vec![0.0; system.n_free()];
        let tip_uy = system.free_index_of(model.dof(1, 1)).unwrap();
        let p = 1000.0;
        f[tip_uy] = -p;
        let u = chol.solve(&f);

        let (e, l) = (mat.youngs_modulus, 5.0_f64);
        let iz = sec.second_moment;
        let kga = sec.shear_factor * mat.shear_modulus() * sec.area;
        let expect = p * l.powi(3) / (3.0 * e * iz) + p * l / kga;
        let got = -u[tip_uy];
        assert!(
            (got - expect).abs() / expect < 1e-10,
            "tip deflection {got:e} vs closed form {expect:e}"
        );
        // sanity against the quoted magnitude
        assert!((expect - 1.496e-4).abs() < 2e-7);
    }

    #[test]
    fn rotated_element_preserves_invariants() {
        let sec = Section::rectangular(0.25, 0.40);
        let (k0, m0) =
            element_matrices(0.0, 0.0, 5.0, 0.0, &sec, &unit_material(), MassModel::Consistent)
                .unwrap();
        let (k90, m90) =
            element_matrices(0.0, 0.0, 0.0, 5.0, &sec, &unit_material(), MassModel::Consistent)
                .unwrap();
        let tr = |m: &Matrix| (0..6).map(|i| m[(i, i)]).sum::<f64>();
        assert!((tr(&k0) - tr(&k90)).abs() / tr(&k0) < 1e-12);
        assert!((k0.frobenius_norm() - k90.frobenius_norm()).abs() / k0.frobenius_norm() < 1e-12);
        assert!((m0.frobenius_norm() - m90.frobenius_norm()).abs() / m0.frobenius_norm() < 1e-12);
    }

    #[test]
    fn zero_length_element_rejected() {
        let sec = Section::rectangular(0.25, 0.40);
        let r = element_matrices(1.0, 1.0, 1.0, 1.0, &sec, &unit_material(), MassModel::Consistent);
        assert!(r.is_err());
    }

    #[test]
    fn single_element_assembly_is_identity() {
        let sec = Section::rectangular(0.25, 0.40);
        let mat = unit_material();
        let model = StructureModel {
            nodes: vec![
                Node { x: 0.0, y: 0.0 },
                Node { x: 3.0, y: 1.0 },
                Node { x: 7.0, y: 0.0 },
            ],
            // one element between nodes 1 and 2; node 0 is unconnected
            elements: vec![ElementDef { node_a: 1, node_b: 2, section: 0 }],
            sections: vec![sec],
            material: mat,
            supports: vec![],
        };
        let (k, m) = assemble(&model, MassModel::Consistent).unwrap();
        let (ke, me) =
            element_matrices(3.0, 1.0, 7.0, 0.0, &sec, &mat, MassModel::Consistent).unwrap();
        let gdofs = [3, 4, 5, 6, 7, 8];
        for gi in 0..9 {
            for gj in 0..9 {
                let (li, lj) = (
                    gdofs.iter().position(|&d| d == gi),
                    gdofs.iter().position(|&d| d == gj),
                );
                let expect = match (li, lj) {
                    (Some(li), Some(lj)) => (ke[(li, lj)], me[(li, lj)]),
                    _ => (0.0, 0.0),
                };
                assert_eq!(k[(gi, gj)], expect.0);
                assert_eq!(m[(gi, gj)], expect.1);
            }
        }
    }

    #[test]
    fn rayleigh_trivial_cases() {
        let m = Matrix::identity(4);
        let k = Matrix::from_fn(4, 4, |i, j| if i == j { 2.0 } else { -0.5 });
        let zero = rayleigh_damping(&m, &k, RayleighCoefficients { a_r: 0.0, b_r: 0.0 }).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
        let ident = rayleigh_damping(&m, &k, RayleighCoefficients { a_r: 1.0, b_r: 0.0 }).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(ident[(i, j)], if i == j { 1.0 } else { 0.0 });
            }
        }
        let bad = Matrix::identity(3);
        assert!(rayleigh_damping(&m, &bad, RayleighCoefficients { a_r: 0.1, b_r: 0.1 }).is_err());
        assert!(
            rayleigh_damping(&m, &k, RayleighCoefficients { a_r: -0.1, b_r: 0.0 }).is_err()
        );
    }

    #[test]
    fn two_colinear_axial_elements_assemble_in_series() {
        let sec = Section { area: 0.01, second_moment: 1e-5, shear_factor: 5.0 / 6.0 };
        let mat = unit_material();
        let model = StructureModel {
            nodes: vec![
                Node { x: 0.0, y: 0.0 },
                Node { x: 2.0, y: 0.0 },
                Node { x: 4.0, y: 0.0 },
            ],
            elements: vec![
                ElementDef { node_a: 0, node_b: 1, section: 0 },
                ElementDef { node_a: 1, node_b: 2, section: 0 },
            ],
            sections: vec![sec],
            material: mat,
            supports: vec![],
        };
        let (k, _) = assemble(&model, MassModel::Consistent).unwrap();
        let ax = mat.youngs_modulus * sec.area / 2.0;
        let ux = |n: usize| model.dof(n, 0);
        assert!((k[(ux(0), ux(0))] - ax).abs() / ax < 1e-14);
        assert!((k[(ux(1), ux(1))] - 2.0 * ax).abs() / ax < 1e-14);
        assert!((k[(ux(2), ux(2))] - ax).abs() / ax < 1e-14);
        assert!((k[(ux(0), ux(1))] + ax).abs() / ax < 1e-14);
        assert!((k[(ux(1), ux(2))] + ax).abs() / ax < 1e-14);
        assert!(k[(ux(0), ux(2))].abs() / ax < 1e-14);
    }

    #[test]
    fn beam_preset_counts_and_structure() {
        let model = build_truss_model(&beam_truss_params()).unwrap();
        assert_eq!(model.n_nodes(), 56);
        assert_eq!(model.n_dofs(), 168);
        let system = assemble_system(
            &model,
            MassModel::Consistent,
            RayleighCoefficients { a_r: 0.1, b_r: 0.05 },
        )
        .unwrap();
        assert_eq!(system.k.rows(), 168);
        assert_eq!(system.constrained_dofs.len(), 3);
        assert!(system.k.asymmetry() < 1e-12);
        assert!(system.m.asymmetry() < 1e-12);
        assert!(system.c.asymmetry() < 1e-12);
        // damping is exactly a_r*M + b_r*K
        for i in 0..10 {
            for j in 0..10 {
                let expect = 0.1 * system.m[(i, j)] + 0.05 * system.k[(i, j)];
                assert_eq!(system.c[(i, j)], expect);
            }
        }
        // mass positive definite on free DOFs
        system.mass_cholesky().unwrap();
    }

    #[test]
    fn rigid_body_modes_annihilated_before_constraints() {
        let model = build_truss_model(&beam_truss_params()).unwrap();
        let (k, _) = assemble(&model, MassModel::Consistent).unwrap();
        let n = model.n_dofs();
        let scale = k.max_abs();
        // translations in x, y and rotation about the origin
        let modes: Vec<Vec<f64>> = vec![
            (0..model.n_nodes()).flat_map(|_| [1.0, 0.0, 0.0]).collect(),
            (0..model.n_nodes()).flat_map(|_| [0.0, 1.0, 0.0]).collect(),
            (0..model.n_nodes())
                .flat_map(|i| {
                    let nd = model.nodes[i];
                    [-nd.y, nd.x, 1.0]
                })
                .collect(),
        ];
        for r in &modes {
            let kr = k.matvec(r);
            let rel = norm2(&kr) / (scale * norm2(r)) * (n as f64).sqrt().recip();
            assert!(rel < 1e-8, "rigid mode residual {rel:e}");
        }
    }

    #[test]
    fn translational_mass_is_conserved() {
        for mass_model in [MassModel::Consistent, MassModel::Lumped] {
            let model = build_truss_model(&beam_truss_params()).unwrap();
            let (_, m) = assemble(&model, mass_model).unwrap();
            let total: f64 = model
                .elements
                .iter()
                .map(|e| model.material.density * model.sections[e.section].area * model.element_length(e))
                .sum();
            for comp in [0usize, 1] {
                let r: Vec<f64> = (0..model.n_nodes())
                    .flat_map(|_| {
                        let mut v = [0.0; 3];
                        v[comp] = 1.0;
                        v
                    })
                    .collect();
                let mr = m.matvec(&r);
                let got = crate::linalg::dot(&r, &mr);
                assert!(
                    (got - total).abs() / total < 1e-9,
                    "{mass_model:?} comp {comp}: {got} vs {total}"
                );
            }
        }
    }

    #[test]
    fn symmetric_load_gives_symmetric_deflection() {
        let model = build_truss_model(&beam_truss_params()).unwrap();
        let system = assemble_system(
            &model,
            MassModel::Consistent,
            RayleighCoefficients { a_r: 0.1, b_r: 0.05 },
        )
        .unwrap();
        // gravity-like: equal downward load on every bottom-chord node
        let mut f_full = vec![0.0; model.n_dofs()];
        for &nid in &model.bottom_chord_nodes() {
            f_full[model.dof(nid, 1)] = -1000.0;
        }
        let f = system.gather_free(&f_full);
        let chol = Cholesky::factor(system.k_ff()).unwrap();
        let u = chol.solve(&f);
        let mut full = vec![0.0; model.n_dofs()];
        system.scatter_free(&u, &mut full);

        let bottom = model.bottom_chord_nodes();
        let span = 20.0;
        let peak = bottom
            .iter()
            .map(|&n| full[model.dof(n, 1)].abs())
            .fold(0.0_f64, f64::max);
        for &n in &bottom {
            let x = model.nodes[n].x;
            let mirror = bottom
                .iter()
                .copied()
                .find(|&m2| (model.nodes[m2].x - (span - x)).abs() < 1e-9)
                .unwrap();
            let a = full[model.dof(n, 1)];
            let b = full[model.dof(mirror, 1)];
            assert!((a - b).abs() <= 1e-9 * peak, "uy asymmetry at x={x}");
        }
        assert!(peak > 0.0);
    }

    #[test]
    fn toy_truss_is_small_and_valid() {
        let params = TrussParams {
            span: 2.0,
            height: 1.0,
            panels: 2,
            web_every: 1,
            braced_modules: None,
            section: Section::rectangular(0.25, 0.40),
            material: unit_material(),
        };
        let model = build_truss_model(&params).unwrap();
        assert_eq!(model.n_nodes(), 6);
        for e in &model.elements {
            assert!(model.element_length(e) > 0.0);
        }
    }

    #[test]
    fn degenerate_configs_rejected() {
        let mut params = beam_truss_params();
        params.span = 0.0;
        assert!(build_truss_model(&params).is_err());
        let mut params = beam_truss_params();
        params.panels = 1;
        assert!(build_truss_model(&params).is_err());
    }

    #[test]
    fn all_constrained_rejected() {
        let sec = Section::rectangular(0.25, 0.40);
        let model = StructureModel {
            nodes: vec![Node { x: 0.0, y: 0.0 }, Node { x: 1.0, y: 0.0 }],
            elements: vec![ElementDef { node_a: 0, node_b: 1, section: 0 }],
            sections: vec![sec],
            material: unit_material(),
            supports: vec![
                Support { node: 0, fix_ux: true, fix_uy: true, fix_rz: true },
                Support { node: 1, fix_ux: true, fix_uy: true, fix_rz: true },
            ],
        };
        let (k, m) = assemble(&model, MassModel::Consistent).unwrap();
        let c = rayleigh_damping(&m, &k, RayleighCoefficients { a_r: 0.0, b_r: 0.0 }).unwrap();
        assert!(apply_boundary_conditions(&model, k, m, c).is_err());
    }
}
