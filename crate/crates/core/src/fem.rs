//! Reference elements, quadrature and degree-of-freedom maps.
//!
//! Fluid pair: P1 velocity on the refined mesh, P1 + P0 pressure on the
//! coarse mesh. Structure positions and multipliers share the P1 basis on
//! the structure mesh.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{BoundarySpec, BoundaryTag, FluidMesh, StructureMesh};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ElementFamily {
    P1Triangle,
    P0Triangle,
    P1Segment,
}

/// Values and reference gradients of all local basis functions at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeSet {
    pub family: ElementFamily,
    pub values: Vec<f64>,
    pub gradients: Vec<[f64; 2]>,
}

/// Reference triangle: vertices `(0,0), (1,0), (0,1)`. Reference segment:
/// `[0,1]`, using only the first coordinate of `ref_point`.
pub fn shape_eval(family: ElementFamily, ref_point: [f64; 2]) -> ShapeSet {
    let [x, y] = ref_point;
    match family {
        ElementFamily::P1Triangle => ShapeSet {
            family,
            values: vec![1.0 - x - y, x, y],
            gradients: vec![[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]],
        },
        ElementFamily::P0Triangle => ShapeSet {
            family,
            values: vec![1.0],
            gradients: vec![[0.0, 0.0]],
        },
        ElementFamily::P1Segment => ShapeSet {
            family,
            values: vec![1.0 - x, x],
            gradients: vec![[-1.0, 0.0], [1.0, 0.0]],
        },
    }
}

/// Points and weights on a reference element.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    /// Polynomial degree integrated exactly.
    pub degree: usize,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

pub const MAX_TRIANGLE_DEGREE: usize = 5;
pub const MAX_SEGMENT_DEGREE: usize = 19;

pub fn quadrature(family: ElementFamily, degree: usize) -> Result<QuadratureRule> {
    match family {
        ElementFamily::P1Triangle | ElementFamily::P0Triangle => triangle_rule(degree),
        ElementFamily::P1Segment => segment_rule(degree),
    }
}

fn triangle_rule(degree: usize) -> Result<QuadratureRule> {
    match degree {
        0 | 1 => Ok(QuadratureRule {
            degree: 1,
            points: vec![[1.0 / 3.0, 1.0 / 3.0]],
            weights: vec![0.5],
        }),
        2 => Ok(QuadratureRule {
            degree: 2,
            points: vec![[1.0 / 6.0, 1.0 / 6.0], [2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0]],
            weights: vec![1.0 / 6.0; 3],
        }),
        3..=MAX_TRIANGLE_DEGREE => {
            // Radon's seven-point rule
            let r15 = 15f64.sqrt();
            let a = (6.0 - r15) / 21.0;
            let b = (6.0 + r15) / 21.0;
            let wa = (155.0 - r15) / 2400.0;
            let wb = (155.0 + r15) / 2400.0;
            Ok(QuadratureRule {
                degree: 5,
                points: vec![
                    [1.0 / 3.0, 1.0 / 3.0],
                    [a, a],
                    [1.0 - 2.0 * a, a],
                    [a, 1.0 - 2.0 * a],
                    [b, b],
                    [1.0 - 2.0 * b, b],
                    [b, 1.0 - 2.0 * b],
                ],
                weights: vec![9.0 / 80.0, wa, wa, wa, wb, wb, wb],
            })
        }
        _ => Err(Error::invalid(format!(
            "triangle quadrature of degree {degree} unsupported (max {MAX_TRIANGLE_DEGREE})"
        ))),
    }
}

/// Gauss-Legendre on `[0,1]`; `n` points integrate degree `2n-1`.
fn segment_rule(degree: usize) -> Result<QuadratureRule> {
    if degree > MAX_SEGMENT_DEGREE {
        return Err(Error::invalid(format!(
            "segment quadrature of degree {degree} unsupported (max {MAX_SEGMENT_DEGREE})"
        )));
    }
    let n = degree / 2 + 1;
    let mut points = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        // Newton on P_n from the Chebyshev-like initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d.is_finite() {
            dp = d;
        }
        points.push([0.5 * (1.0 - x), 0.0]);
        weights.push(1.0 / ((1.0 - x * x) * dp * dp));
    }
    Ok(QuadratureRule {
        degree: 2 * n - 1,
        points,
        weights,
    })
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceId {
    Velocity,
    PressureP1,
    PressureP0,
    Structure,
    Multiplier,
}

/// Global numbering for one space. Vector spaces are numbered block-wise:
/// dof `c * n_nodes + node` is component `c` at `node`.
#[derive(Clone, Debug)]
pub struct DofMap {
    pub space: SpaceId,
    pub components: usize,
    pub n_nodes: usize,
    /// Cell-to-node table (per-cell node indices of the scalar space).
    pub cells: Vec<Vec<usize>>,
    /// Sorted constrained dofs (Dirichlet / symmetry).
    pub constrained: Vec<usize>,
}

impl DofMap {
    pub fn n_dofs(&self) -> usize {
        self.components * self.n_nodes
    }

    pub fn dof(&self, component: usize, node: usize) -> usize {
        component * self.n_nodes + node
    }

    pub fn is_constrained(&self, dof: usize) -> bool {
        self.constrained.binary_search(&dof).is_ok()
    }

    pub fn free_dofs(&self) -> Vec<usize> {
        (0..self.n_dofs()).filter(|d| !self.is_constrained(*d)).collect()
    }

    /// Per-dof mask, true where constrained.
    pub fn constraint_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_dofs()];
        for &d in &self.constrained {
            mask[d] = true;
        }
        mask
    }
}

/// Scalar pressure constraint removing one constant mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GaugeConstraint {
    /// Zero mean of the P1 part.
    MeanP1,
    /// Zero mean of the P0 part.
    MeanP0,
}

#[derive(Clone, Debug)]
pub struct DofMaps {
    pub velocity: DofMap,
    pub pressure_p1: DofMap,
    pub pressure_p0: DofMap,
    pub structure: DofMap,
    pub multiplier: DofMap,
    pub gauges: Vec<GaugeConstraint>,
}

impl DofMaps {
    pub fn n_pressure(&self) -> usize {
        self.pressure_p1.n_dofs() + self.pressure_p0.n_dofs()
    }
}

pub fn build_dof_maps(fluid: &FluidMesh, structure: &StructureMesh, bc: &BoundarySpec) -> Result<DofMaps> {
    bc.validate()?;
    let nv = fluid.n_vertices();
    let tags = fluid.tags_for(bc);
    let mut constrained = Vec::new();
    for comp in 0..2 {
        for (v, tag) in tags.iter().enumerate() {
            let fixed = match tag {
                BoundaryTag::Interior => false,
                BoundaryTag::Wall => true,
                BoundaryTag::SymmetryX => comp == 0,
                BoundaryTag::SymmetryY => comp == 1,
            };
            if fixed {
                constrained.push(comp * nv + v);
            }
        }
    }
    let velocity = DofMap {
        space: SpaceId::Velocity,
        components: 2,
        n_nodes: nv,
        cells: fluid.triangles.iter().map(|t| t.to_vec()).collect(),
        constrained,
    };
    let pressure_p1 = DofMap {
        space: SpaceId::PressureP1,
        components: 1,
        n_nodes: fluid.n_coarse_vertices(),
        cells: fluid.coarse_triangles.iter().map(|t| t.to_vec()).collect(),
        constrained: Vec::new(),
    };
    let pressure_p0 = DofMap {
        space: SpaceId::PressureP0,
        components: 1,
        n_nodes: fluid.coarse_triangles.len(),
        cells: (0..fluid.coarse_triangles.len()).map(|t| vec![t]).collect(),
        constrained: Vec::new(),
    };
    let structure_cells: Vec<Vec<usize>> = structure.elements().iter().map(|e| e.nodes().to_vec()).collect();
    let structure_map = DofMap {
        space: SpaceId::Structure,
        components: 2,
        n_nodes: structure.n_nodes(),
        cells: structure_cells.clone(),
        constrained: Vec::new(),
    };
    let multiplier = DofMap {
        space: SpaceId::Multiplier,
        components: 2,
        n_nodes: structure.n_nodes(),
        cells: structure_cells,
        constrained: Vec::new(),
    };
    Ok(DofMaps {
        velocity,
        pressure_p1,
        pressure_p0,
        structure: structure_map,
        multiplier,
        gauges: vec![GaugeConstraint::MeanP1, GaugeConstraint::MeanP0],
    })
}
