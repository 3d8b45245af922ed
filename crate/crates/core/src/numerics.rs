//! Complex tensor helpers, Lagrange nodes and interpolation, error metrics.
//!
//! Tensors are plain [`ndarray`] matrices. Every operation that combines two
//! tensors checks shapes explicitly and reports [`Error::ShapeMismatch`]
//! instead of relying on broadcasting.
//!
//! Interpolation uses the second (true) barycentric form
//!
//! ```text
//!          Σ_i  w_i y_i / (x - x_i)
//! p(x) =  ─────────────────────────,    w_i = 1 / Π_{j≠i} (x_i - x_j)
//!          Σ_i  w_i     / (x - x_i)
//! ```
//!
//! which is backward stable for any node set and needs no linear solve.

use std::f64::consts::PI;

use ndarray::{Array2, Zip};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type RealTensor = Array2<f64>;
pub type ComplexTensor = Array2<C64>;

/// Relative distance under which two nodes are treated as the same point.
pub const NODE_TOLERANCE: f64 = 1e-9;

/// Where the evaluation points sit relative to the anchor points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeLayout {
    /// `alpha_i = ρ γ^(i-1)` exactly, failing on any overlap with the anchors.
    Canonical,
    /// The canonical evaluation points rotated by half their angular spacing.
    HalfStep,
    /// The collision-free rotation (from a short list of fractions of the
    /// spacing, half-step first) that keeps the evaluation points farthest
    /// from the anchors.
    #[default]
    Auto,
}

/// Evaluation points (`alphas`, one per group member) and anchor points
/// (`betas`, one per slice or noise block), all on a circle of `radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationNodes {
    alphas: Vec<C64>,
    betas: Vec<C64>,
    radius: f64,
    offset: f64,
}

impl InterpolationNodes {
    pub fn alphas(&self) -> &[C64] {
        &self.alphas
    }

    pub fn betas(&self) -> &[C64] {
        &self.betas
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Rotation of the evaluation points, in units of their angular spacing.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn group_size(&self) -> usize {
        self.alphas.len()
    }

    pub fn anchors(&self) -> usize {
        self.betas.len()
    }

    /// `l_j(alpha_x)` for every anchor `j` (rows) and member `x` (columns).
    pub fn lagrange_matrix(&self) -> Array2<C64> {
        let mut out = Array2::zeros((self.betas.len(), self.alphas.len()));
        for (x, &alpha) in self.alphas.iter().enumerate() {
            for (j, l) in lagrange_basis(&self.betas, alpha).into_iter().enumerate() {
                out[[j, x]] = l;
            }
        }
        out
    }
}

/// Nodes following the canonical roots-of-unity placement. Fails with
/// [`Error::NodeCollision`] when an evaluation point lands on an anchor.
pub fn make_nodes(group_size: usize, k: usize, t: usize, radius: f64) -> Result<InterpolationNodes> {
    make_nodes_with(group_size, k, t, radius, NodeLayout::Canonical)
}

pub fn make_nodes_with(
    group_size: usize,
    k: usize,
    t: usize,
    radius: f64,
    layout: NodeLayout,
) -> Result<InterpolationNodes> {
    if group_size == 0 || k == 0 {
        return Err(Error::InvalidParameter(format!(
            "group size and K must be positive (group_size={group_size}, K={k})"
        )));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
    }
    let anchors = k + t;
    let betas: Vec<C64> = (0..anchors).map(|j| root_on_circle(radius, j as f64, anchors)).collect();
    let alphas_at = |offset: f64| -> Vec<C64> {
        (0..group_size).map(|i| root_on_circle(radius, i as f64 + offset, group_size)).collect()
    };
    let build = |offset: f64| {
        let alphas = alphas_at(offset);
        match find_collision(&alphas, &betas, radius) {
            Some((alpha, beta)) => Err(Error::NodeCollision { alpha, beta }),
            None => Ok(InterpolationNodes { alphas, betas: betas.clone(), radius, offset }),
        }
    };
    match layout {
        NodeLayout::Canonical => build(0.0),
        NodeLayout::HalfStep => build(0.5),
        NodeLayout::Auto => {
            let mut best: Option<(f64, f64)> = None;
            for offset in AUTO_OFFSETS {
                let gap = min_separation(&alphas_at(offset), &betas);
                if gap > NODE_TOLERANCE * radius && best.is_none_or(|(g, _)| gap > g * (1.0 + 1e-9)) {
                    best = Some((gap, offset));
                }
            }
            match best {
                Some((_, offset)) => build(offset),
                None => build(0.5),
            }
        }
    }
}

// Canonical placement always puts alpha_1 and beta_1 on the same point, so
// `Auto` never considers it.
const AUTO_OFFSETS: [f64; 6] = [0.5, 0.25, 1.0 / 3.0, 0.2, 1.0 / 6.0, 0.125];

fn min_separation(alphas: &[C64], betas: &[C64]) -> f64 {
    alphas.iter().flat_map(|a| betas.iter().map(move |b| (a - b).norm())).fold(f64::INFINITY, f64::min)
}

/// `radius · e^{-2πι·step/n}`.
fn root_on_circle(radius: f64, step: f64, n: usize) -> C64 {
    C64::from_polar(radius, -2.0 * PI * step / n as f64)
}

fn find_collision(alphas: &[C64], betas: &[C64], radius: f64) -> Option<(usize, usize)> {
    for (i, a) in alphas.iter().enumerate() {
        for (j, b) in betas.iter().enumerate() {
            if (a - b).norm() <= NODE_TOLERANCE * radius {
                return Some((i, j));
            }
        }
    }
    None
}

/// `l_j(x) = Π_{l≠j} (x - β_l)/(β_j - β_l)` for the anchor `j` (zero based).
pub fn lagrange_coeff(nodes: &InterpolationNodes, j: usize, x: C64) -> C64 {
    let betas = nodes.betas();
    assert!(j < betas.len(), "anchor index {j} out of range for {} anchors", betas.len());
    betas
        .iter()
        .enumerate()
        .filter(|&(l, _)| l != j)
        .fold(C64::new(1.0, 0.0), |acc, (_, &b)| acc * (x - b) / (betas[j] - b))
}

/// All Lagrange basis values `l_j(x)` over `anchors`.
pub fn lagrange_basis(anchors: &[C64], x: C64) -> Vec<C64> {
    if let Some(hit) = anchors.iter().position(|&a| a == x) {
        let mut out = vec![C64::new(0.0, 0.0); anchors.len()];
        out[hit] = C64::new(1.0, 0.0);
        return out;
    }
    (0..anchors.len())
        .map(|j| {
            anchors
                .iter()
                .enumerate()
                .filter(|&(l, _)| l != j)
                .fold(C64::new(1.0, 0.0), |acc, (_, &b)| acc * (x - b) / (anchors[j] - b))
        })
        .collect()
}

/// Barycentric weights for `xs`, scaled by a common factor to keep them in
/// floating range. The scaling cancels in the barycentric quotient.
pub fn barycentric_weights(xs: &[C64]) -> Result<Vec<C64>> {
    check_distinct(xs)?;
    let scale = xs.iter().map(|x| x.norm()).fold(0.0_f64, f64::max).max(f64::MIN_POSITIVE);
    Ok(xs
        .iter()
        .enumerate()
        .map(|(i, &xi)| {
            let prod = xs
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .fold(C64::new(1.0, 0.0), |acc, (_, &xj)| acc * ((xi - xj) / scale));
            prod.inv()
        })
        .collect())
}

fn check_distinct(xs: &[C64]) -> Result<()> {
    let scale = xs.iter().map(|x| x.norm()).fold(1.0_f64, f64::max);
    for i in 0..xs.len() {
        for j in 0..i {
            if (xs[i] - xs[j]).norm() <= NODE_TOLERANCE * scale {
                return Err(Error::DuplicateNode(i));
            }
        }
    }
    Ok(())
}

/// Coefficients `c[t][i]` such that `p(targets[t]) = Σ_i c[t][i] · y_i` for
/// the interpolant through the nodes `xs`.
pub fn interpolation_matrix(xs: &[C64], targets: &[C64]) -> Result<Vec<Vec<C64>>> {
    let weights = barycentric_weights(xs)?;
    Ok(targets
        .iter()
        .map(|&target| {
            if let Some(hit) = xs.iter().position(|&x| x == target) {
                let mut row = vec![C64::new(0.0, 0.0); xs.len()];
                row[hit] = C64::new(1.0, 0.0);
                return row;
            }
            let terms: Vec<C64> = xs.iter().zip(&weights).map(|(&x, &w)| w / (target - x)).collect();
            let denom: C64 = terms.iter().sum();
            terms.into_iter().map(|t| t / denom).collect()
        })
        .collect())
}

/// Fits the elementwise polynomial of degree `points.len() - 1` through
/// `points` and evaluates it at every target.
pub fn interpolate(points: &[(C64, ComplexTensor)], targets: &[C64]) -> Result<Vec<ComplexTensor>> {
    let Some((_, first)) = points.first() else {
        return Err(Error::InvalidParameter("interpolation needs at least one point".into()));
    };
    let shape = first.dim();
    for (_, y) in points {
        ensure_shape(shape, y.dim())?;
    }
    let xs: Vec<C64> = points.iter().map(|(x, _)| *x).collect();
    let coeffs = interpolation_matrix(&xs, targets)?;
    Ok(coeffs
        .iter()
        .map(|row| {
            let mut acc = ComplexTensor::zeros(shape);
            for (c, (_, y)) in row.iter().zip(points) {
                acc.scaled_add(*c, y);
            }
            acc
        })
        .collect())
}

pub fn ensure_shape(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { expected, found })
    }
}

pub fn frobenius_norm(t: &RealTensor) -> f64 {
    t.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `‖estimate - truth‖_F / ‖truth‖_F`.
pub fn relative_error(estimate: &RealTensor, truth: &RealTensor) -> Result<f64> {
    ensure_shape(truth.dim(), estimate.dim())?;
    let denom = frobenius_norm(truth);
    if denom == 0.0 {
        return Err(Error::ZeroTruth);
    }
    let mut num = 0.0;
    Zip::from(estimate).and(truth).for_each(|e, t| num += (e - t) * (e - t));
    Ok(num.sqrt() / denom)
}

pub fn to_complex(t: &RealTensor) -> ComplexTensor {
    t.mapv(|v| C64::new(v, 0.0))
}

pub fn real_part(t: &ComplexTensor) -> RealTensor {
    t.mapv(|v| v.re)
}
