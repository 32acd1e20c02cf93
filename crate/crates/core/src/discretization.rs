//! Truncated grids, measures on them, weighted norms and push-forwards.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GridScheme {
    /// `n` cells uniform in `log x`.
    LogUniform(usize),
    /// `q` cells per octave; `x_max` is rounded up to a whole number of cells.
    DyadicLog(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    edges: Vec<f64>,
    nodes: Vec<f64>,
    scheme: GridScheme,
}

pub fn make_grid(x_min: f64, x_max: f64, scheme: GridScheme) -> Result<Arc<Grid>> {
    Grid::new(x_min, x_max, scheme).map(Arc::new)
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, scheme: GridScheme) -> Result<Self> {
        if !(x_min > 0.0 && x_max > x_min && x_max.is_finite()) {
            return Err(Error::InvalidGrid(format!("need 0 < x_min < x_max, got [{x_min}, {x_max}]")));
        }
        let edges = match scheme {
            GridScheme::LogUniform(n) => {
                if n == 0 {
                    return Err(Error::InvalidGrid("a grid needs at least one cell".into()));
                }
                let h = (x_max / x_min).ln() / n as f64;
                let mut e: Vec<f64> = (0..=n).map(|i| x_min * (h * i as f64).exp()).collect();
                e[n] = x_max;
                e
            }
            GridScheme::DyadicLog(q) => {
                if q == 0 {
                    return Err(Error::InvalidGrid("q must be positive".into()));
                }
                let cells = ((x_max / x_min).log2() * q as f64 - 1e-9).ceil().max(1.0) as usize;
                let frac: Vec<f64> = (0..q).map(|r| 2f64.powf(r as f64 / q as f64)).collect();
                (0..=cells)
                    .map(|i| {
                        let octave = (i / q) as i32;
                        x_min * frac[i % q] * 2f64.powi(octave)
                    })
                    .collect()
            }
        };
        let nodes = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Ok(Self { edges, nodes, scheme })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn x_min(&self) -> f64 {
        self.edges[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn scheme(&self) -> GridScheme {
        self.scheme
    }

    pub fn width(&self, i: usize) -> f64 {
        self.edges[i + 1] - self.edges[i]
    }

    pub fn widths(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Cells per octave when the grid is dyadic.
    pub fn dyadic_q(&self) -> Option<usize> {
        match self.scheme {
            GridScheme::DyadicLog(q) => Some(q),
            GridScheme::LogUniform(_) => None,
        }
    }

    /// Log-width of the cells for a log-uniform grid.
    pub fn log_step(&self) -> f64 {
        (self.x_max() / self.x_min()).ln() / self.len() as f64
    }

    /// Index of the cell containing `x`; the right end belongs to the last cell.
    pub fn locate(&self, x: f64) -> Option<usize> {
        if x < self.x_min() || x > self.x_max() || x.is_nan() {
            return None;
        }
        let i = self.edges.partition_point(|&e| e <= x);
        Some(i.saturating_sub(1).min(self.len() - 1))
    }
}

/// Mass per cell on a grid, plus mass that left through `x_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMeasure {
    grid: Arc<Grid>,
    pub mass: Vec<f64>,
    pub escaped: f64,
}

impl GridMeasure {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self { grid: grid.clone(), mass: vec![0.0; grid.len()], escaped: 0.0 }
    }

    pub fn from_masses(grid: &Arc<Grid>, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != grid.len() {
            return Err(Error::InvalidGrid(format!("{} masses for a grid of {} cells", mass.len(), grid.len())));
        }
        Ok(Self { grid: grid.clone(), mass, escaped: 0.0 })
    }

    /// Cell masses of a density, by Gauss–Legendre quadrature per cell.
    pub fn from_density<F: Fn(f64) -> f64>(grid: &Arc<Grid>, density: F) -> Self {
        let mass = grid.edges.windows(2).map(|w| quad::composite5(&density, w[0], w[1], 2)).collect();
        Self { grid: grid.clone(), mass, escaped: 0.0 }
    }

    /// Unit mass in the cell containing `x0`.
    pub fn dirac(grid: &Arc<Grid>, x0: f64) -> Result<Self> {
        let i = grid.locate(x0).ok_or_else(|| Error::Domain(format!("{x0} lies outside the grid")))?;
        let mut m = Self::zeros(grid);
        m.mass[i] = 1.0;
        Ok(m)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn density(&self) -> Vec<f64> {
        self.mass.iter().enumerate().map(|(i, m)| m / self.grid.width(i)).collect()
    }

    /// `Σ w_i m_i`.
    pub fn integrate(&self, w: &[f64]) -> f64 {
        self.mass.iter().zip(w).map(|(m, w)| m * w).sum()
    }

    /// `Σ f(node_i) m_i`.
    pub fn integrate_fn<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.mass.iter().zip(self.grid.nodes()).map(|(m, &x)| m * f(x)).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { grid: self.grid.clone(), mass: self.mass.iter().map(|m| c * m).collect(), escaped: c * self.escaped }
    }

    /// `self - other`; the grids must coincide.
    pub fn difference(&self, other: &GridMeasure) -> Self {
        debug_assert_eq!(self.mass.len(), other.mass.len());
        Self {
            grid: self.grid.clone(),
            mass: self.mass.iter().zip(&other.mass).map(|(a, b)| a - b).collect(),
            escaped: self.escaped - other.escaped,
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.mass.iter().all(|&m| m >= 0.0)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x_center,cell_width,mass,density")?;
        for (i, (&x, &m)) in self.grid.nodes().iter().zip(&self.mass).enumerate() {
            let width = self.grid.width(i);
            writeln!(w, "{x:.17e},{width:.17e},{m:.17e},{:.17e}", m / width)?;
        }
        Ok(())
    }
}

/// Weight functions of the convergence norms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum WeightSpec {
    /// `1 + x^K`.
    OnePlusXK { big_k: f64 },
    /// `x^k + x^K`.
    XkPlusXK { k: f64, big_k: f64 },
    /// `1 + x²`.
    SelfSimilarQuadratic,
}

impl WeightSpec {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            WeightSpec::OnePlusXK { big_k } => 1.0 + x.powf(big_k),
            WeightSpec::XkPlusXK { k, big_k } => x.powf(k) + x.powf(big_k),
            WeightSpec::SelfSimilarQuadratic => 1.0 + x * x,
        }
    }

    /// Checks the exponent constraints for a model with small-size exponent
    /// `xi`; `linear` selects the `g(x) = x` variant of the two-sided weight.
    pub fn validate(&self, xi: f64, linear: bool) -> Result<()> {
        match *self {
            WeightSpec::OnePlusXK { big_k } if big_k <= 1.0 + xi => {
                Err(Error::Constraint(format!("weight exponent K = {big_k} must exceed 1 + xi = {}", 1.0 + xi)))
            }
            WeightSpec::XkPlusXK { k, big_k } => {
                if linear {
                    if !(-1.0 < k && k < 1.0 && 1.0 < big_k) {
                        return Err(Error::Constraint(format!("need -1 < k < 1 < K, got k = {k}, K = {big_k}")));
                    }
                } else if !(-1.0 < k && k < 0.0 && big_k > 1.0 + xi) {
                    return Err(Error::Constraint(format!(
                        "need -1 < k < 0 and K > 1 + xi = {}, got k = {k}, K = {big_k}",
                        1.0 + xi
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn on_grid(&self, grid: &Grid) -> Vec<f64> {
        grid.nodes().iter().map(|&x| self.eval(x)).collect()
    }
}

/// `Σ V(node_i) |m_i|`.
pub fn weighted_tv_norm(mu: &GridMeasure, v: &WeightSpec) -> f64 {
    mu.mass.iter().zip(mu.grid.nodes()).map(|(m, &x)| v.eval(x) * m.abs()).sum()
}

/// `Σ w_i |m_i|` for a weight already sampled at the nodes.
pub fn weighted_tv_norm_values(mass: &[f64], w: &[f64]) -> f64 {
    mass.iter().zip(w).map(|(m, w)| w * m.abs()).sum()
}

/// Sparse redistribution of cell masses under a monotone map, built once and
/// applied many times.
#[derive(Clone, Debug)]
pub struct TransportPlan {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    fractions: Vec<f64>,
    escape: Vec<f64>,
}

impl TransportPlan {
    pub fn new<F: Fn(f64) -> f64>(grid: &Grid, map: F) -> Self {
        let edges = grid.edges();
        let (lo, hi) = (grid.x_min(), grid.x_max());
        let snap = |y: f64| -> f64 {
            let i = edges.partition_point(|&e| e < y);
            for j in [i.saturating_sub(1), i.min(edges.len() - 1)] {
                if (edges[j] - y).abs() <= 1e-12 * edges[j] {
                    return edges[j];
                }
            }
            y
        };
        let images: Vec<f64> = edges.iter().map(|&e| snap(map(e))).collect();
        let n = grid.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        let mut fractions = Vec::new();
        let mut escape = vec![0.0; n];
        offsets.push(0);
        for j in 0..n {
            let (a, b) = (images[j], images[j + 1]);
            let len = b - a;
            debug_assert!(len > 0.0, "map must be strictly increasing");
            if b > hi {
                escape[j] = (b - a.max(hi)) / len;
            }
            let below = (lo.min(b) - a).max(0.0) / len;
            let (ca, cb) = (a.max(lo), b.min(hi));
            if cb > ca {
                let first = edges.partition_point(|&e| e <= ca).saturating_sub(1);
                let mut i = first;
                while i < n && edges[i] < cb {
                    let ov = edges[i + 1].min(cb) - edges[i].max(ca);
                    if ov > 0.0 {
                        let mut f = ov / len;
                        if i == 0 {
                            f += below;
                        }
                        targets.push(i);
                        fractions.push(f);
                    }
                    i += 1;
                }
                if below > 0.0 && first != 0 {
                    targets.push(0);
                    fractions.push(below);
                }
            } else if below > 0.0 {
                targets.push(0);
                fractions.push(below);
            }
            offsets.push(targets.len());
        }
        Self { offsets, targets, fractions, escape }
    }

    /// Applies the plan to `mass`, multiplying source cell `j` by
    /// `weights[j]` when given. Returns the new masses and the escaped mass.
    pub fn apply(&self, mass: &[f64], weights: Option<&[f64]>) -> (Vec<f64>, f64) {
        let mut out = vec![0.0; mass.len()];
        let mut escaped = 0.0;
        for j in 0..mass.len() {
            let m = match weights {
                Some(w) => mass[j] * w[j],
                None => mass[j],
            };
            if m == 0.0 {
                continue;
            }
            for k in self.offsets[j]..self.offsets[j + 1] {
                out[self.targets[k]] += self.fractions[k] * m;
            }
            escaped += self.escape[j] * m;
        }
        (out, escaped)
    }

    /// True when every cell maps onto exactly one cell.
    pub fn is_permutation_like(&self) -> bool {
        self.offsets.windows(2).all(|w| w[1] - w[0] <= 1)
    }
}

/// Push-forward of `mu` by a strictly increasing map.
pub fn push_forward<F: Fn(f64) -> f64>(mu: &GridMeasure, map: F) -> GridMeasure {
    let plan = TransportPlan::new(&mu.grid, map);
    let (mass, esc) = plan.apply(&mu.mass, None);
    GridMeasure { grid: mu.grid.clone(), mass, escaped: mu.escaped + esc }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyadic_edges() {
        let g = make_grid(1.0, 4.0, GridScheme::DyadicLog(1)).unwrap();
        assert_eq!(g.edges(), &[1.0, 2.0, 4.0]);
        let g = make_grid(1.0, 3.0, GridScheme::DyadicLog(2)).unwrap();
        assert_eq!(g.x_max(), 4.0);
        assert_eq!(g.len(), 4);
        assert!((g.edges()[1] - 2f64.sqrt()).abs() < 1e-15);
        let g = make_grid(1e-3, 50.0, GridScheme::DyadicLog(7)).unwrap();
        for i in 0..g.edges().len() - 7 {
            assert_eq!(g.edges()[i + 7], 2.0 * g.edges()[i]);
        }
    }

    #[test]
    fn log_uniform() {
        let g = make_grid(1e-3, 1e3, GridScheme::LogUniform(600)).unwrap();
        assert_eq!(g.len(), 600);
        let r0 = g.edges()[1] / g.edges()[0];
        let r1 = g.edges()[400] / g.edges()[399];
        assert!((r0 - r1).abs() < 1e-12);
        assert!(make_grid(2.0, 1.0, GridScheme::LogUniform(3)).is_err());
    }

    #[test]
    fn norms() {
        let g = make_grid(0.5, 4.0, GridScheme::DyadicLog(1)).unwrap();
        let v = WeightSpec::SelfSimilarQuadratic;
        assert_eq!(weighted_tv_norm(&GridMeasure::zeros(&g), &v), 0.0);
        let mut m = GridMeasure::zeros(&g);
        m.mass[0] = 1.0;
        let x = g.nodes()[0];
        assert!((weighted_tv_norm(&m, &v) - (1.0 + x * x)).abs() < 1e-15);
    }

    #[test]
    fn doubling_moves_one_cell() {
        let g = make_grid(1.0, 8.0, GridScheme::DyadicLog(1)).unwrap();
        let mut m = GridMeasure::zeros(&g);
        m.mass[0] = 1.0;
        let out = push_forward(&m, |x| 2.0 * x);
        assert_eq!(out.mass, vec![0.0, 1.0, 0.0]);
        let out = push_forward(&push_forward(&out, |x| 2.0 * x), |x| 2.0 * x);
        assert_eq!(out.total(), 0.0);
        assert_eq!(out.escaped, 1.0);
    }

    #[test]
    fn identity_push_forward() {
        let g = make_grid(0.1, 10.0, GridScheme::LogUniform(30)).unwrap();
        let m = GridMeasure::from_density(&g, |x| (-x).exp());
        assert_eq!(push_forward(&m, |x| x).mass, m.mass);
    }

    #[test]
    fn weight_constraints() {
        assert!(WeightSpec::OnePlusXK { big_k: 1.0 }.validate(0.0, false).is_err());
        assert!(WeightSpec::OnePlusXK { big_k: 2.0 }.validate(0.5, false).is_ok());
        let w = WeightSpec::XkPlusXK { k: 0.5, big_k: 2.0 };
        assert!(w.validate(0.0, true).is_ok());
        assert!(w.validate(0.0, false).is_err());
    }

    #[test]
    fn csv_header() {
        let g = make_grid(1.0, 4.0, GridScheme::DyadicLog(1)).unwrap();
        let mut buf = Vec::new();
        GridMeasure::zeros(&g).write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("x_center,cell_width,mass,density\n"));
        assert_eq!(s.lines().count(), 3);
    }
}
