//! Lloyd-Max quantization of the steady-state SNR and the induced
//! finite-state Markov chain.

use super::{steady_state_pdf, ChannelParams, LagKernel, SnrGrid};
use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 10_000;
const TOLERANCE: f64 = 1e-8;
const ROW_SUM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedChannel {
    /// `L + 1` edges; the first is 0 and the last is `+∞`.
    pub boundaries: Vec<f64>,
    pub representatives: Vec<f64>,
    /// Row-major `L × L`, filled by [`quantized_transition_matrix`].
    pub transition: Option<Vec<f64>>,
    pub lag: Option<u64>,
    mean: f64,
}

impl QuantizedChannel {
    pub fn levels(&self) -> usize {
        self.representatives.len()
    }

    /// Cell containing `snr`; cells are `[b_i, b_{i+1})`.
    pub fn cell_of(&self, snr: f64) -> usize {
        let interior = &self.boundaries[1..self.levels()];
        interior.partition_point(|&b| b <= snr)
    }

    /// Steady-state probability of each cell.
    pub fn cell_masses(&self) -> Vec<f64> {
        self.boundaries
            .windows(2)
            .map(|w| (-w[0] / self.mean).exp() - (-w[1] / self.mean).exp())
            .collect()
    }

    pub fn transition_row(&self, cell: usize) -> Option<&[f64]> {
        let l = self.levels();
        self.transition.as_deref().map(|t| &t[cell * l..(cell + 1) * l])
    }

    /// Mean squared quantization error under the steady-state law.
    pub fn distortion(&self) -> f64 {
        let mu = self.mean;
        self.boundaries
            .windows(2)
            .zip(&self.representatives)
            .map(|(w, &rep)| {
                let (a, b) = (w[0] / mu, w[1] / mu);
                let mass = (-a).exp() - (-b).exp();
                let (mean, var) = truncated_exponential_moments(a, b);
                mass * (var + (mean - rep / mu).powi(2))
            })
            .sum::<f64>()
            * mu
            * mu
    }

    /// `E[f(γ) | γ ∈ cell]` for every cell under the steady-state law,
    /// by trapezoidal quadrature on the grid refined at the cell edges.
    pub fn cell_averages(&self, params: &ChannelParams, grid: &SnrGrid, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let quad = CellQuadrature::new(grid, &self.boundaries);
        let weighted: Vec<f64> = quad
            .nodes
            .iter()
            .map(|&x| steady_state_pdf(x, params) * f(x))
            .collect();
        let pdf: Vec<f64> = quad.nodes.iter().map(|&x| steady_state_pdf(x, params)).collect();
        let num = quad.per_cell(&weighted, self.levels());
        let den = quad.per_cell(&pdf, self.levels());
        num.iter().zip(&den).map(|(n, d)| n / d).collect()
    }
}

/// Mean and variance of a unit exponential truncated to `[a, b)`.
fn truncated_exponential_moments(a: f64, b: f64) -> (f64, f64) {
    if b.is_infinite() {
        return (a + 1.0, 1.0);
    }
    let width = b - a;
    let em1 = width.exp_m1();
    let mean = a + centroid_offset(width);
    let var = 1.0 - width * width * width.exp() / (em1 * em1);
    (mean, var.max(0.0))
}

/// Offset of the centroid of a unit exponential on `[a, a + width)` from `a`.
fn centroid_offset(width: f64) -> f64 {
    if width.is_infinite() {
        1.0
    } else if width < 1e-8 {
        0.5 * width
    } else {
        1.0 - width / width.exp_m1()
    }
}

/// Starting edges for the unit exponential.
///
/// By memorylessness a cell's centroid offset depends only on its width, so
/// the midpoint conditions chain from the unbounded top cell downwards:
/// `w_k - offset(w_k) = offset(w_{k+1})`.
fn width_recursion_edges(levels: usize) -> Vec<f64> {
    let mut widths = vec![f64::INFINITY; levels];
    for k in (0..levels.saturating_sub(1)).rev() {
        let target = centroid_offset(widths[k + 1]);
        // w - offset(w) is increasing and exceeds w/2
        let (mut lo, mut hi) = (0.0, 2.0 * target + 2.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid - centroid_offset(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        widths[k] = 0.5 * (lo + hi);
    }
    let mut edges = Vec::with_capacity(levels + 1);
    edges.push(0.0);
    for w in &widths {
        edges.push(edges.last().unwrap() + w);
    }
    edges
}

/// Runs the Lloyd iteration on the exponential steady-state law.
///
/// Cell centroids use the closed-form truncated-exponential mean, so the
/// fixed point is exact up to the stopping tolerance.
pub fn lloyd_max_quantize(params: &ChannelParams, levels: usize) -> Result<QuantizedChannel> {
    if levels == 0 {
        return Err(Error::Domain("quantizer needs at least one level".into()));
    }
    let mu = params.mean_snr();
    let mut edges = width_recursion_edges(levels);
    let centroids = |edges: &[f64]| -> Vec<f64> {
        edges
            .windows(2)
            .map(|w| truncated_exponential_moments(w[0], w[1]).0)
            .collect()
    };
    let mut reps = centroids(&edges);
    let mut last_step = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        for k in 1..levels {
            edges[k] = 0.5 * (reps[k - 1] + reps[k]);
        }
        let next = centroids(&edges);
        last_step = next
            .iter()
            .zip(&reps)
            .map(|(n, o)| ((n - o) / o).abs())
            .fold(0.0, f64::max);
        reps = next;
        if last_step < TOLERANCE {
            for k in 1..levels {
                edges[k] = 0.5 * (reps[k - 1] + reps[k]);
            }
            return Ok(QuantizedChannel {
                boundaries: edges.iter().map(|e| e * mu).collect(),
                representatives: reps.iter().map(|r| r * mu).collect(),
                transition: None,
                lag: None,
                mean: mu,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS,
        last_step,
        representatives: reps.iter().map(|r| r * mu).collect(),
    })
}

/// Fills the lag-`lag` cell transition matrix by integrating the continuous
/// kernel over pairs of cells, weighting the source cell by the steady-state
/// law restricted to it.
pub fn quantized_transition_matrix(
    qc: &QuantizedChannel,
    params: &ChannelParams,
    lag: u64,
    grid: &SnrGrid,
) -> Result<QuantizedChannel> {
    let kernel = LagKernel::new(params, lag)?;
    let l = qc.levels();
    let quad = CellQuadrature::new(grid, &qc.boundaries);
    let nodes = &quad.nodes;

    let pdf: Vec<f64> = nodes.iter().map(|&x| steady_state_pdf(x, params)).collect();
    let mut matrix = vec![0.0; l * l];
    let mut dense = vec![0.0; nodes.len()];
    // inner integrals for each source node, accumulated into the source cell
    for (a, &past) in nodes.iter().enumerate() {
        let weight = quad.node_weight(a);
        if weight.iter().all(|&(_, w)| w * pdf[a] == 0.0) {
            continue;
        }
        let col = kernel.column_on(nodes, past);
        dense.iter_mut().for_each(|v| *v = 0.0);
        dense[col.start..col.end()].copy_from_slice(&col.values);
        let inner = quad.per_cell(&dense, l);
        for &(cell, w) in &weight {
            for j in 0..l {
                matrix[cell * l + j] += w * pdf[a] * inner[j];
            }
        }
    }
    let mass = quad.per_cell(&pdf, l);
    for i in 0..l {
        let row = &mut matrix[i * l..(i + 1) * l];
        for v in row.iter_mut() {
            *v /= mass[i];
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::Integration { row: i, sum });
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(QuantizedChannel {
        transition: Some(matrix),
        lag: Some(lag),
        ..qc.clone()
    })
}

/// Composite Simpson quadrature on the grid refined with the origin and every
/// finite cell edge. Each refined segment gets a midpoint node, so `nodes`
/// alternates segment ends and midpoints.
struct CellQuadrature {
    nodes: Vec<f64>,
    segment_cell: Vec<usize>,
}

impl CellQuadrature {
    fn new(grid: &SnrGrid, boundaries: &[f64]) -> Self {
        let top = grid.max();
        let mut ends = Vec::with_capacity(grid.len() + boundaries.len() + 1);
        ends.push(0.0);
        ends.extend_from_slice(grid.points());
        ends.extend(boundaries.iter().copied().filter(|&b| b > 0.0 && b < top));
        ends.sort_by(f64::total_cmp);
        ends.dedup();
        let interior = &boundaries[1..boundaries.len() - 1];
        let segment_cell = ends
            .windows(2)
            .map(|w| interior.partition_point(|&b| b <= 0.5 * (w[0] + w[1])))
            .collect();
        let mut nodes = Vec::with_capacity(2 * ends.len() - 1);
        for w in ends.windows(2) {
            nodes.push(w[0]);
            nodes.push(0.5 * (w[0] + w[1]));
        }
        nodes.push(*ends.last().unwrap());
        Self { nodes, segment_cell }
    }

    /// Simpson weights of node `a`, split by the cell of each segment it
    /// belongs to.
    fn node_weight(&self, a: usize) -> Vec<(usize, f64)> {
        let seg_len = |s: usize| self.nodes[2 * s + 2] - self.nodes[2 * s];
        let segments = self.segment_cell.len();
        if a % 2 == 1 {
            let s = a / 2;
            return vec![(self.segment_cell[s], 4.0 * seg_len(s) / 6.0)];
        }
        let s = a / 2;
        let mut out = Vec::with_capacity(2);
        if s > 0 {
            out.push((self.segment_cell[s - 1], seg_len(s - 1) / 6.0));
        }
        if s < segments {
            out.push((self.segment_cell[s], seg_len(s) / 6.0));
        }
        out
    }

    fn per_cell(&self, values: &[f64], levels: usize) -> Vec<f64> {
        let mut out = vec![0.0; levels];
        for (s, &cell) in self.segment_cell.iter().enumerate() {
            let h = self.nodes[2 * s + 2] - self.nodes[2 * s];
            out[cell] += h / 6.0 * (values[2 * s] + 4.0 * values[2 * s + 1] + values[2 * s + 2]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::GridSpec;

    fn unit_mean() -> ChannelParams {
        // mean = 2Kα/(2-α) = 1 at alpha = 1, K = 0.5
        ChannelParams::new(1.0, 0.5, 100).unwrap()
    }

    #[test]
    fn single_level_is_the_mean() {
        let p = ChannelParams::from_mean_snr_db(25.0, 0.001, 100).unwrap();
        let qc = lloyd_max_quantize(&p, 1).unwrap();
        assert!((qc.representatives[0] / p.mean_snr() - 1.0).abs() < 1e-12);
        assert_eq!(qc.boundaries, vec![0.0, f64::INFINITY]);
    }

    /// Scans every boundary on a 10⁵-point grid, using prefix sums of the
    /// sampled density to get cell means and squared error.
    #[test]
    fn two_levels_match_brute_force_search() {
        let n = 100_000;
        let top = 40.0;
        let dx = top / n as f64;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * dx).collect();
        let f: Vec<f64> = xs.iter().map(|x| (-x).exp() * dx).collect();
        let mut c0 = vec![0.0; n + 1];
        let mut c1 = vec![0.0; n + 1];
        let mut c2 = vec![0.0; n + 1];
        for i in 0..n {
            c0[i + 1] = c0[i] + f[i];
            c1[i + 1] = c1[i] + f[i] * xs[i];
            c2[i + 1] = c2[i] + f[i] * xs[i] * xs[i];
        }
        // suffix sums keep the thin upper tail free of cancellation
        let mut t0 = vec![0.0; n + 1];
        let mut t1 = vec![0.0; n + 1];
        let mut t2 = vec![0.0; n + 1];
        for i in (0..n).rev() {
            t0[i] = t0[i + 1] + f[i];
            t1[i] = t1[i + 1] + f[i] * xs[i];
            t2[i] = t2[i + 1] + f[i] * xs[i] * xs[i];
        }
        let sse = |m0: f64, m1: f64, m2: f64| (m2 - m1 * m1 / m0, m1 / m0);
        let mut best = (f64::INFINITY, 0, 0.0, 0.0);
        for cut in 1..n {
            let (e0, r0) = sse(c0[cut], c1[cut], c2[cut]);
            let (e1, r1) = sse(t0[cut], t1[cut], t2[cut]);
            if e0 + e1 < best.0 {
                best = (e0 + e1, cut, r0, r1);
            }
        }
        let boundary = best.1 as f64 * dx;

        let qc = lloyd_max_quantize(&unit_mean(), 2).unwrap();
        assert!((qc.boundaries[1] - boundary).abs() < 1e-3, "{} vs {boundary}", qc.boundaries[1]);
        assert!((qc.representatives[0] - best.2).abs() < 1e-3);
        assert!((qc.representatives[1] - best.3).abs() < 1e-3);
    }

    #[test]
    fn finer_quantizers_distort_less() {
        let p = unit_mean();
        let d: Vec<f64> = [1, 2, 4, 7, 64]
            .iter()
            .map(|&l| lloyd_max_quantize(&p, l).unwrap().distortion())
            .collect();
        assert!((d[0] - 1.0).abs() < 1e-12);
        assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
    }

    #[test]
    fn representatives_sit_inside_their_cells() {
        let p = ChannelParams::from_mean_snr_db(25.0, 0.01, 100).unwrap();
        for levels in [2, 3, 7, 64] {
            let qc = lloyd_max_quantize(&p, levels).unwrap();
            for (i, r) in qc.representatives.iter().enumerate() {
                assert!(qc.boundaries[i] < *r && *r < qc.boundaries[i + 1]);
                assert_eq!(qc.cell_of(*r), i);
            }
            let masses: f64 = qc.cell_masses().iter().sum();
            assert!((masses - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn iid_rows_are_the_cell_masses() {
        let p = ChannelParams::from_mean_snr_db(25.0, 1.0, 100).unwrap();
        let grid = SnrGrid::new(&GridSpec::default(), p.mean_snr()).unwrap();
        let qc = lloyd_max_quantize(&p, 4).unwrap();
        let qc = quantized_transition_matrix(&qc, &p, 1, &grid).unwrap();
        let masses = qc.cell_masses();
        for i in 0..4 {
            let row = qc.transition_row(i).unwrap();
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (a, b) in row.iter().zip(&masses) {
                assert!((a - b).abs() < 1e-6, "{a} {b}");
            }
        }
    }

    #[test]
    fn memoryless_lag_gives_cell_masses() {
        let p = ChannelParams::from_mean_snr_db(25.0, 0.1, 100).unwrap();
        let grid = SnrGrid::new(&GridSpec::default(), p.mean_snr()).unwrap();
        let qc = lloyd_max_quantize(&p, 3).unwrap();
        // 0.9^300 ≈ 1.9e-14
        let qc = quantized_transition_matrix(&qc, &p, 300, &grid).unwrap();
        let masses = qc.cell_masses();
        for i in 0..3 {
            for (a, b) in qc.transition_row(i).unwrap().iter().zip(&masses) {
                assert!((a - b).abs() < 1e-6);
                assert!(*a >= 0.0);
            }
        }
    }

    #[test]
    fn zero_levels_rejected() {
        assert!(lloyd_max_quantize(&unit_mean(), 0).is_err());
    }
}
