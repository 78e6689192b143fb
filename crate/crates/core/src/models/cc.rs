//! Carnot–Carathéodory distance estimated by shortest paths on the grid.
//!
//! Every node is joined to its 3^d − 1 lifted neighbours. A step `Δ` costs
//! the gauge `((Δᵀ H Δ / 4)² + θ(Δ)²)^{1/4}` with `H = dθ(·, Ĵ·)`, averaged
//! over both endpoints; on `(H^n, ϑ_0)` this is the Heisenberg norm of the
//! group difference of the endpoints. The result is an upper-bound style
//! estimator that refines with the grid.

use crate::error::{CrError, Result};
use crate::geometry::{j_hat_jets, CRManifold, PointGeometry};
use crate::grid::AxisKind;
use nalgebra::DMatrix;
use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use rayon::prelude::*;

pub struct CcGraph {
    graph: UnGraph<(), f64>,
}

struct NodeData {
    theta: Vec<f64>,
    h: DMatrix<f64>,
}

fn gauge(nd: &NodeData, step: &[f64]) -> f64 {
    let d = step.len();
    let th: f64 = nd.theta.iter().zip(step).map(|(a, b)| a * b).sum();
    let mut q = 0.0;
    for i in 0..d {
        for j in 0..d {
            q += step[i] * nd.h[(i, j)] * step[j];
        }
    }
    let q = (q / 4.0).max(0.0);
    (q * q + th * th).powf(0.25)
}

impl CcGraph {
    pub fn build(m: &CRManifold) -> Result<CcGraph> {
        let g = m.grid()?;
        let d = g.dim();
        let data = (0..g.len())
            .into_par_iter()
            .map(|i| {
                let x = g.coords(i);
                let pg = PointGeometry::new(m, &x, 1)?;
                let jh = j_hat_jets(&pg);
                let f = DMatrix::from_fn(d, d, |a, b| pg.dtheta[a][b].value().re);
                let j = DMatrix::from_fn(d, d, |a, b| jh[a][b].value().re);
                let h = &f * &j;
                Ok(NodeData { theta: pg.theta.iter().map(|t| t.value().re).collect(), h: (&h + h.transpose()) * 0.5 })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut graph = UnGraph::<(), f64>::with_capacity(g.len(), g.len() * 13);
        for _ in 0..g.len() {
            graph.add_node(());
        }
        let offsets: Vec<Vec<i64>> = (0..3usize.pow(d as u32))
            .map(|mut c| {
                (0..d)
                    .map(|_| {
                        let v = (c % 3) as i64 - 1;
                        c /= 3;
                        v
                    })
                    .collect()
            })
            .filter(|o: &Vec<i64>| o.iter().any(|v| *v != 0))
            // keep one of each ± pair
            .filter(|o| o.iter().find(|v| **v != 0).copied() == Some(1))
            .collect();
        let axes = g.axes();
        for i in 0..g.len() {
            let mi = g.multi(i);
            for off in &offsets {
                let lifted: Vec<i64> = mi.iter().zip(off).map(|(a, b)| *a as i64 + b).collect();
                let Some(j) = g.resolve(&lifted) else { continue };
                if j == i {
                    continue;
                }
                let mut step = vec![0.0; d];
                let mut ok = true;
                for k in 0..d {
                    let a = &axes[k];
                    step[k] = match a.kind {
                        AxisKind::Gauss => {
                            let t = lifted[k];
                            if t < 0 || t >= a.len() as i64 {
                                ok = false;
                                0.0
                            } else {
                                a.nodes[t as usize] - a.nodes[mi[k]]
                            }
                        }
                        _ => off[k] as f64 * a.spacing(),
                    };
                }
                if !ok {
                    continue;
                }
                let w = 0.5 * (gauge(&data[i], &step) + gauge(&data[j], &step));
                graph.add_edge(NodeIndex::new(i), NodeIndex::new(j), w);
            }
        }
        Ok(CcGraph { graph })
    }

    /// Distances from node `i` to every node.
    pub fn distances_from(&self, i: usize) -> Result<Vec<f64>> {
        let map = dijkstra(&self.graph, NodeIndex::new(i), None, |e| *e.weight());
        let mut out = vec![f64::INFINITY; self.graph.node_count()];
        for (k, v) in map {
            out[k.index()] = v;
        }
        if let Some(bad) = out.iter().position(|v| !v.is_finite()) {
            return Err(CrError::Unreachable(bad));
        }
        Ok(out)
    }

    pub fn distance(&self, i: usize, j: usize) -> Result<f64> {
        let map = dijkstra(&self.graph, NodeIndex::new(i), Some(NodeIndex::new(j)), |e| *e.weight());
        map.get(&NodeIndex::new(j)).copied().ok_or(CrError::Unreachable(j))
    }
}

fn node(m: &CRManifold, x: &[f64]) -> Result<usize> {
    m.grid()?.node_of(x).ok_or_else(|| CrError::MapOutOfDomain(x.to_vec()))
}

/// Distance between two grid nodes (builds the graph; reuse [`CcGraph`]
/// for repeated queries).
pub fn cc_distance(m: &CRManifold, x: &[f64], y: &[f64]) -> Result<f64> {
    let (i, j) = (node(m, x)?, node(m, y)?);
    CcGraph::build(m)?.distance(i, j)
}

pub fn cc_ball_contains(m: &CRManifold, x: &[f64], r: f64, y: &[f64]) -> Result<bool> {
    Ok(cc_distance(m, x, y)? < r)
}
