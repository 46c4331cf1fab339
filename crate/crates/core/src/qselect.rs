//! Data-driven choice of the resolution parameter `q`.
//!
//! With `L = U Λ Uᵀ`, the Tikhonov smoother `K(q) = q (L + qI)⁻¹` acts on
//! eigenmode `i` with gain `h_i(q) = q / (μ_i + q)`. Caching the eigenvalues
//! and per-mode energies `S_i = ‖(UᵀX)_i‖²` in a [`Spectrum`] makes every
//! quantity of the objective a cheap sum over modes:
//!
//! ```text
//! rec(q)  = Σ (1-h_i)² S_i      / Σ_{μ_i>0} S_i
//! dir(q)  = Σ μ_i (1-h_i)² S_i  / Σ μ_i S_i
//! df(q)   = (1/size) Σ_{μ_i>0} h_i
//! J(q)    = (rec_v + dir_v)/2 + (rec_e + dir_e)/2 + φ (df_v + df_e)
//! ```
//!
//! Edge-side terms use the line graph and edge features; a graph without edge
//! features contributes zero on that side. The [`direct`] module evaluates the
//! same quantities through linear solves, without any eigendecomposition.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_q, Error, Result};
use crate::graph::{Graph, SymmetricMatrix};

/// Eigenvalues below `ZERO_TOL_REL · μ_max` are treated as exact zeros.
pub const ZERO_TOL_REL: f64 = 1e-9;
/// Mode energies below this fraction of the total are treated as zero.
pub const ENERGY_TOL_REL: f64 = 1e-24;
/// Line graphs larger than this trigger a cost warning.
pub const LINE_GRAPH_WARN: usize = 2000;

/// Eigenvalues in ascending order and the matching orthonormal eigenvectors
/// as columns.
pub fn eig_sym(m: &SymmetricMatrix) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.order();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(m.as_matrix().clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// `q (L + qI)⁻¹ X` through a Cholesky solve.
pub fn tikhonov_smooth(l: &SymmetricMatrix, x: &DMatrix<f64>, q: f64) -> Result<DMatrix<f64>> {
    check_q(q)?;
    if x.nrows() != l.order() {
        return Err(Error::dim(
            "tikhonov smooth",
            format!("{} rows vs order {}", x.nrows(), l.order()),
        ));
    }
    if q.is_infinite() {
        return Ok(x.clone());
    }
    let shifted = l.as_matrix() + DMatrix::identity(l.order(), l.order()) * q;
    Ok(direct::cholesky_solve(&shifted, x)? * q)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Ascending, with values under `zero_tol` clamped to 0.
    pub eigenvalues: Vec<f64>,
    pub mode_energies: Vec<f64>,
    pub total_energy: f64,
    pub dirichlet_total: f64,
    pub zero_tol: f64,
}

impl Spectrum {
    /// Spectrum without eigenvectors, e.g. for trace-only uses.
    pub fn from_parts(mut eigenvalues: Vec<f64>, mut mode_energies: Vec<f64>) -> Self {
        let max = eigenvalues.iter().cloned().fold(0.0, f64::max);
        let zero_tol = ZERO_TOL_REL * max;
        for mu in &mut eigenvalues {
            if *mu < zero_tol || *mu <= 0.0 {
                *mu = 0.0;
            }
        }
        let total_energy = mode_energies.iter().sum::<f64>();
        // Projection roundoff leaves ~1e-32 relative energy in modes a signal
        // does not touch; without this a constant signal gets 0/0 losses.
        for s in &mut mode_energies {
            if *s < ENERGY_TOL_REL * total_energy {
                *s = 0.0;
            }
        }
        let dirichlet_total = eigenvalues
            .iter()
            .zip(&mode_energies)
            .map(|(m, s)| m * s)
            .sum();
        Spectrum {
            eigenvalues,
            mode_energies,
            total_energy,
            dirichlet_total,
            zero_tol,
        }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Number of zero eigenvalues (connected components for a Laplacian).
    pub fn kernel_dim(&self) -> usize {
        self.eigenvalues.iter().filter(|&&m| m == 0.0).count()
    }

    fn gain(mu: f64, q: f64) -> f64 {
        if q.is_infinite() {
            1.0
        } else {
            q / (mu + q)
        }
    }

    /// `‖X − K(q)X‖_F²`.
    pub fn residual_energy(&self, q: f64) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.mode_energies)
            .map(|(&mu, &s)| (1.0 - Self::gain(mu, q)).powi(2) * s)
            .sum()
    }

    /// `tr((X − K(q)X)ᵀ L (X − K(q)X))`.
    pub fn dirichlet_residual(&self, q: f64) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.mode_energies)
            .map(|(&mu, &s)| mu * (1.0 - Self::gain(mu, q)).powi(2) * s)
            .sum()
    }

    /// `tr K(q) = Σ h_i(q)`, over all modes.
    pub fn trace_smoother(&self, q: f64) -> f64 {
        self.eigenvalues.iter().map(|&mu| Self::gain(mu, q)).sum()
    }

    /// Energy outside the kernel: the `q → 0⁺` limit of the residual.
    pub fn nonkernel_energy(&self) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.mode_energies)
            .filter(|(&mu, _)| mu > 0.0)
            .map(|(_, &s)| s)
            .sum()
    }
}

pub fn spectrum_of(l: &SymmetricMatrix, x: &DMatrix<f64>) -> Result<Spectrum> {
    if x.nrows() != l.order() {
        return Err(Error::dim(
            "spectrum",
            format!("{} rows vs order {}", x.nrows(), l.order()),
        ));
    }
    let (values, vectors) = eig_sym(l);
    let coeffs = vectors.transpose() * x;
    let energies = coeffs.row_iter().map(|r| r.norm_squared()).collect();
    Ok(Spectrum::from_parts(values, energies))
}

pub fn recon_loss(s: &Spectrum, q: f64) -> Result<f64> {
    check_q(q)?;
    let denom = s.nonkernel_energy();
    Ok(if denom > 0.0 {
        s.residual_energy(q) / denom
    } else {
        0.0
    })
}

pub fn dirichlet_loss(s: &Spectrum, q: f64) -> Result<f64> {
    check_q(q)?;
    Ok(if s.dirichlet_total > 0.0 {
        s.dirichlet_residual(q) / s.dirichlet_total
    } else {
        0.0
    })
}

pub fn degrees_of_freedom(s: &Spectrum, q: f64, size: usize) -> Result<f64> {
    check_q(q)?;
    if size == 0 {
        return Ok(0.0);
    }
    let sum: f64 = s
        .eigenvalues
        .iter()
        .filter(|&&mu| mu > 0.0)
        .map(|&mu| Spectrum::gain(mu, q))
        .sum();
    Ok(sum / size as f64)
}

/// All components of the objective at one `q`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QRecord {
    pub q: f64,
    pub recon_node: f64,
    pub dir_node: f64,
    pub recon_edge: f64,
    pub dir_edge: f64,
    pub df_node: f64,
    pub df_edge: f64,
    #[serde(rename = "J")]
    pub j: f64,
}

impl QRecord {
    fn assemble(q: f64, phi: f64, node: [f64; 3], edge: [f64; 3]) -> Self {
        let j = (node[0] + node[1]) / 2.0 + (edge[0] + edge[1]) / 2.0 + phi * (node[2] + edge[2]);
        QRecord {
            q,
            recon_node: node[0],
            dir_node: node[1],
            recon_edge: edge[0],
            dir_edge: edge[1],
            df_node: node[2],
            df_edge: edge[2],
            j,
        }
    }
}

/// Evaluates every objective component. `edge_spec = None` means no edge
/// features, and all edge terms are zero.
pub fn objective_terms(
    node_spec: &Spectrum,
    edge_spec: Option<&Spectrum>,
    q: f64,
    phi: f64,
    n: usize,
    m: usize,
) -> Result<QRecord> {
    if !(phi >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "phi must be nonnegative, got {phi}"
        )));
    }
    let node = [
        recon_loss(node_spec, q)?,
        dirichlet_loss(node_spec, q)?,
        degrees_of_freedom(node_spec, q, n)?,
    ];
    let edge = match edge_spec {
        Some(s) => [
            recon_loss(s, q)?,
            dirichlet_loss(s, q)?,
            degrees_of_freedom(s, q, m)?,
        ],
        None => [0.0; 3],
    };
    Ok(QRecord::assemble(q, phi, node, edge))
}

pub fn objective_j(
    node_spec: &Spectrum,
    edge_spec: Option<&Spectrum>,
    q: f64,
    phi: f64,
    n: usize,
    m: usize,
) -> Result<f64> {
    objective_terms(node_spec, edge_spec, q, phi, n, m).map(|r| r.j)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QCurve {
    pub phi: f64,
    pub records: Vec<QRecord>,
    pub q_star: f64,
}

impl QCurve {
    pub fn grid(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.q).collect()
    }

    fn from_records(phi: f64, records: Vec<QRecord>) -> Self {
        let q_star = argmin_q(&records);
        QCurve {
            phi,
            records,
            q_star,
        }
    }
}

/// Grid argmin of `J`; exact ties go to the smaller `q`.
pub fn argmin_q(records: &[QRecord]) -> f64 {
    let mut best = &records[0];
    for r in &records[1..] {
        if r.j < best.j || (r.j == best.j && r.q < best.q) {
            best = r;
        }
    }
    best.q
}

/// `points` logarithmically spaced values from `min` to `max` inclusive.
pub fn log_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && max >= min && min.is_finite() && max.is_finite()) || points == 0 {
        return Err(Error::InvalidArgument(format!(
            "invalid grid: min {min}, max {max}, points {points}"
        )));
    }
    if points == 1 {
        return Ok(vec![min]);
    }
    let (a, b) = (min.ln(), max.ln());
    Ok((0..points)
        .map(|i| {
            if i == 0 {
                min
            } else if i == points - 1 {
                max
            } else {
                (a + (b - a) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect())
}

/// Node and (optional) edge spectra of one graph.
#[derive(Clone, Debug)]
pub struct GraphSpectra {
    pub node: Spectrum,
    pub edge: Option<Spectrum>,
    pub n: usize,
    pub m: usize,
}

impl GraphSpectra {
    pub fn of(g: &Graph) -> Result<Self> {
        let node = spectrum_of(&g.laplacian(), g.node_features())?;
        let edge = if g.edge_feature_dim() > 0 && g.m() > 0 {
            if g.m() > LINE_GRAPH_WARN {
                log::warn!(
                    "dense line-graph eigendecomposition with {} nodes; expect O(m^3) cost",
                    g.m()
                );
            }
            let lg = g.line_graph()?;
            Some(spectrum_of(&lg.laplacian(), lg.node_features())?)
        } else {
            None
        };
        Ok(GraphSpectra {
            node,
            edge,
            n: g.n(),
            m: g.m(),
        })
    }

    pub fn record(&self, q: f64, phi: f64) -> Result<QRecord> {
        objective_terms(&self.node, self.edge.as_ref(), q, phi, self.n, self.m)
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("q grid is empty".into()));
    }
    grid.iter().try_for_each(|&q| check_q(q))
}

/// Evaluates `J` over `grid` with one eigendecomposition per Laplacian.
pub fn select_q(g: &Graph, grid: &[f64], phi: f64) -> Result<QCurve> {
    select_q_many(std::slice::from_ref(g), grid, phi)
}

/// Dataset version: per-graph curves are averaged pointwise before the argmin.
pub fn select_q_many(graphs: &[Graph], grid: &[f64], phi: f64) -> Result<QCurve> {
    check_grid(grid)?;
    if graphs.is_empty() {
        return Err(Error::InvalidArgument("no graphs to evaluate".into()));
    }
    let spectra = graphs
        .iter()
        .map(GraphSpectra::of)
        .collect::<Result<Vec<_>>>()?;
    let count = spectra.len() as f64;
    let records = grid
        .iter()
        .map(|&q| {
            let mut acc = [0.0; 7];
            for s in &spectra {
                let r = s.record(q, phi)?;
                for (a, v) in acc.iter_mut().zip([
                    r.recon_node,
                    r.dir_node,
                    r.recon_edge,
                    r.dir_edge,
                    r.df_node,
                    r.df_edge,
                    r.j,
                ]) {
                    *a += v / count;
                }
            }
            Ok(QRecord {
                q,
                recon_node: acc[0],
                dir_node: acc[1],
                recon_edge: acc[2],
                dir_edge: acc[3],
                df_node: acc[4],
                df_edge: acc[5],
                j: acc[6],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QCurve::from_records(phi, records))
}

/// Direct-inverse formulation: every quantity through solves with `L + qI`.
pub mod direct {
    use super::*;

    /// Solves `A X = B` for symmetric positive definite `A` (own Cholesky, so
    /// this path shares no code with the eigensolver).
    pub fn cholesky_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = a.nrows();
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::Singular("cholesky solve"));
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        let mut x = b.clone();
        for c in 0..b.ncols() {
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= l[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / l[(i, i)];
            }
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in i + 1..n {
                    s -= l[(k, i)] * x[(k, c)];
                }
                x[(i, c)] = s / l[(i, i)];
            }
        }
        Ok(x)
    }

    /// `X − K(q) X`.
    pub fn residual(l: &SymmetricMatrix, x: &DMatrix<f64>, q: f64) -> Result<DMatrix<f64>> {
        Ok(x - tikhonov_smooth(l, x, q)?)
    }

    pub fn residual_energy(l: &SymmetricMatrix, x: &DMatrix<f64>, q: f64) -> Result<f64> {
        Ok(residual(l, x, q)?.norm_squared())
    }

    /// `tr(Rᵀ L R)` for `M = X` directly.
    pub fn dirichlet_energy(l: &SymmetricMatrix, r: &DMatrix<f64>) -> f64 {
        (r.transpose() * l.as_matrix() * r).trace()
    }

    pub fn dirichlet_residual(l: &SymmetricMatrix, x: &DMatrix<f64>, q: f64) -> Result<f64> {
        Ok(dirichlet_energy(l, &residual(l, x, q)?))
    }

    /// `tr K(q) = q · tr((L + qI)⁻¹)`.
    pub fn trace_smoother(l: &SymmetricMatrix, q: f64) -> Result<f64> {
        let n = l.order();
        Ok(tikhonov_smooth(l, &DMatrix::identity(n, n), q)?.trace())
    }

    /// `X` minus its per-component means: the `q → 0⁺` residual.
    pub fn kernel_free(g: &Graph, x: &DMatrix<f64>) -> DMatrix<f64> {
        let (comp, c) = g.connected_components();
        let mut sums = DMatrix::<f64>::zeros(c, x.ncols());
        let mut counts = vec![0.0; c];
        for (v, &k) in comp.iter().enumerate() {
            counts[k] += 1.0;
            for f in 0..x.ncols() {
                sums[(k, f)] += x[(v, f)];
            }
        }
        DMatrix::from_fn(x.nrows(), x.ncols(), |v, f| {
            x[(v, f)] - sums[(comp[v], f)] / counts[comp[v]]
        })
    }

    fn side(g: &Graph, x: &DMatrix<f64>, q: f64, size: usize) -> Result<[f64; 3]> {
        let l = g.laplacian();
        let denom_rec = kernel_free(g, x).norm_squared();
        let denom_dir = dirichlet_energy(&l, x);
        let rec = if denom_rec > 0.0 {
            residual_energy(&l, x, q)? / denom_rec
        } else {
            0.0
        };
        let dir = if denom_dir > 0.0 {
            dirichlet_residual(&l, x, q)? / denom_dir
        } else {
            0.0
        };
        let (_, c) = g.connected_components();
        let df = if size > 0 {
            // tr K(q) >= c exactly; the solve can undershoot by roundoff.
            ((trace_smoother(&l, q)? - c as f64) / size as f64).max(0.0)
        } else {
            0.0
        };
        Ok([rec, dir, df])
    }

    /// Same record as [`GraphSpectra::record`], from linear solves only.
    pub fn record(g: &Graph, q: f64, phi: f64) -> Result<QRecord> {
        check_q(q)?;
        let node = side(g, g.node_features(), q, g.n())?;
        let edge = if g.edge_feature_dim() > 0 && g.m() > 0 {
            let lg = g.line_graph()?;
            side(&lg, lg.node_features(), q, g.m())?
        } else {
            [0.0; 3]
        };
        Ok(QRecord::assemble(q, phi, node, edge))
    }

    pub fn curve(g: &Graph, grid: &[f64], phi: f64) -> Result<QCurve> {
        check_grid(grid)?;
        let records = grid
            .iter()
            .map(|&q| record(g, q, phi))
            .collect::<Result<Vec<_>>>()?;
        Ok(QCurve::from_records(phi, records))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k2_signal() -> Graph {
        Graph::new(
            &[(0, 1)],
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn eig_small_cases() {
        let (v, _) = eig_sym(&Graph::from_edges(2, &[(0, 1)]).unwrap().laplacian());
        assert!((v[0]).abs() < 1e-12 && (v[1] - 2.0).abs() < 1e-12);
        let (v, _) = eig_sym(
            &Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)])
                .unwrap()
                .laplacian(),
        );
        for (a, b) in v.iter().zip([0.0, 3.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let zero = SymmetricMatrix::new(DMatrix::zeros(3, 3)).unwrap();
        let (v, u) = eig_sym(&zero);
        assert!(v.iter().all(|&x| x == 0.0));
        assert!((u.transpose() * &u - DMatrix::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn smoothing_cases() {
        let g = k2_signal();
        let l = g.laplacian();
        let s = tikhonov_smooth(&l, g.node_features(), 2.0).unwrap();
        assert!((s - DMatrix::from_row_slice(2, 1, &[0.5, -0.5])).amax() < 1e-14);

        let path = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let c = DMatrix::from_element(4, 2, 3.0);
        for q in [0.01, 1.0, 100.0] {
            let s = tikhonov_smooth(&path.laplacian(), &c, q).unwrap();
            assert!((s - &c).amax() < 1e-10);
        }
        let x = DMatrix::from_row_slice(4, 1, &[1.0, -2.0, 0.5, 4.0]);
        let s = tikhonov_smooth(&path.laplacian(), &x, 1e9).unwrap();
        assert!((s - &x).amax() < 1e-6);
        assert!(tikhonov_smooth(&path.laplacian(), &x, 0.0).is_err());
    }

    #[test]
    fn spectrum_cases() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let (_, u) = eig_sym(&g.laplacian());
        let s = spectrum_of(&g.laplacian(), &u.columns(2, 1).into_owned()).unwrap();
        assert!((s.mode_energies[2] - 1.0).abs() < 1e-12);
        assert!(s.mode_energies[0].abs() < 1e-12 && s.mode_energies[1].abs() < 1e-12);
        let z = spectrum_of(&g.laplacian(), &DMatrix::zeros(3, 2)).unwrap();
        assert!(z.mode_energies.iter().all(|&e| e == 0.0));
        assert!(spectrum_of(&g.laplacian(), &DMatrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn k2_losses() {
        let s = spectrum_of(&k2_signal().laplacian(), k2_signal().node_features()).unwrap();
        assert!((recon_loss(&s, 2.0).unwrap() - 0.25).abs() < 1e-14);
        assert!((dirichlet_loss(&s, 2.0).unwrap() - 0.25).abs() < 1e-14);
        assert!((degrees_of_freedom(&s, 2.0, 2).unwrap() - 0.25).abs() < 1e-14);
        let j = objective_j(&s, None, 2.0, 1.0, 2, 1).unwrap();
        assert!((j - 0.5).abs() < 1e-14);
    }

    #[test]
    fn limits() {
        let g = Graph::new(
            &[(0, 1), (1, 2), (3, 4)],
            DMatrix::from_row_slice(5, 1, &[1.0, 3.0, -2.0, 0.5, 7.0]),
            None,
            None,
        )
        .unwrap();
        let s = spectrum_of(&g.laplacian(), g.node_features()).unwrap();
        assert_eq!(s.kernel_dim(), 2);
        assert!(recon_loss(&s, 1e12).unwrap() < 1e-12);
        assert!((recon_loss(&s, 1e-12).unwrap() - 1.0).abs() < 1e-9);
        assert!(dirichlet_loss(&s, 1e12).unwrap() < 1e-12);
        assert!(degrees_of_freedom(&s, 1e-12, 5).unwrap() < 1e-9);
        assert!((degrees_of_freedom(&s, 1e12, 5).unwrap() - 3.0 / 5.0).abs() < 1e-9);
        let j = objective_j(&s, None, f64::INFINITY, 2.0, 5, 3).unwrap();
        assert!((j - 2.0 * 3.0 / 5.0).abs() < 1e-12);
        assert!(recon_loss(&s, 0.0).is_err());
        assert!(dirichlet_loss(&s, -1.0).is_err());
        assert!(degrees_of_freedom(&s, 0.0, 5).is_err());
    }

    #[test]
    fn constant_signal_has_zero_losses() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let s = spectrum_of(&g.laplacian(), g.node_features()).unwrap();
        for q in [0.01, 1.0, 50.0] {
            assert_eq!(recon_loss(&s, q).unwrap(), 0.0);
            assert_eq!(dirichlet_loss(&s, q).unwrap(), 0.0);
            assert_eq!(objective_j(&s, None, q, 0.0, 4, 3).unwrap(), 0.0);
        }
    }

    #[test]
    fn select_q_extremes() {
        let grid = log_grid(1e-2, 1e3, 61).unwrap();
        let constant = Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
        assert_eq!(select_q(&constant, &grid, 0.5).unwrap().q_star, grid[0]);
        let varied = Graph::new(
            &[(0, 1), (1, 2)],
            DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 10.0]),
            None,
            None,
        )
        .unwrap();
        assert_eq!(
            select_q(&varied, &grid, 0.0).unwrap().q_star,
            *grid.last().unwrap()
        );
        assert!(select_q(&varied, &[], 1.0).is_err());
    }

    #[test]
    fn edge_features_enter_the_objective() {
        let ef = DMatrix::from_row_slice(3, 1, &[1.0, -1.0, 4.0]);
        let g = Graph::new(
            &[(0, 1), (1, 2), (2, 3)],
            DMatrix::zeros(4, 1),
            Some(ef),
            None,
        )
        .unwrap();
        let spectra = GraphSpectra::of(&g).unwrap();
        let r = spectra.record(1.0, 1.0).unwrap();
        assert!(r.recon_edge > 0.0 && r.dir_edge > 0.0 && r.df_edge > 0.0);
        let d = direct::record(&g, 1.0, 1.0).unwrap();
        assert!((r.j - d.j).abs() < 1e-10);
    }

    #[test]
    fn grid_endpoints() {
        let g = log_grid(1e-2, 1e3, 61).unwrap();
        assert_eq!(g.len(), 61);
        assert_eq!(g[0], 1e-2);
        assert_eq!(g[60], 1e3);
        assert!((g[12] - 0.1).abs() < 1e-12);
        assert!(log_grid(0.0, 1.0, 3).is_err());
    }

    #[test]
    fn cholesky_matches_known_solution() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let b = DMatrix::from_row_slice(2, 1, &[2.0, 1.0]);
        let x = direct::cholesky_solve(&a, &b).unwrap();
        assert!((&a * &x - &b).amax() < 1e-14);
        assert!(direct::cholesky_solve(&DMatrix::zeros(2, 2), &b).is_err());
    }
}
