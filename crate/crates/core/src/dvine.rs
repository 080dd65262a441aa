//! D-vine copula over the strategic ordering
//! (y_t, y_{t-1}, ..., y_{t-l}, x_{t-k}, ..., x_{t-1}, x_t):
//! sequential fitting, simulation by inverse Rosenblatt transform, and
//! extraction of both directional transfer entropies from one fitted model.
//!
//! In this ordering the X->Y transfer entropy reduces to a sum of log pair
//! densities over the edges joining y_t (position 0) to each x lag, and the
//! Y->X value to the edges joining x_t (last position) to each y lag. The
//! remaining factors of the copula density ratio cancel.

use crate::copula::{select_family, FamilyKind, PairCopula};
use crate::error::{Result, SteError};
use crate::seed::rng_for;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Lag-embedded panel of PIT values, column order
/// (y_t, y_{t-1}, ..., y_{t-l}, x_{t-k}, ..., x_{t-1}, x_t).
#[derive(Debug, Clone)]
pub struct LaggedPanel {
    /// column-major storage, cols[c][r]
    pub cols: Vec<Vec<f64>>,
    pub k: usize,
    pub ell: usize,
}

impl LaggedPanel {
    pub fn n_rows(&self) -> usize {
        self.cols.first().map_or(0, |c| c.len())
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        self.cols.iter().map(|c| c[r]).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>], k: usize, ell: usize) -> LaggedPanel {
        let d = rows.first().map_or(0, |r| r.len());
        let mut cols = vec![Vec::with_capacity(rows.len()); d];
        for row in rows {
            for (c, &v) in row.iter().enumerate() {
                cols[c].push(v);
            }
        }
        LaggedPanel { cols, k, ell }
    }
}

/// Build the lag-embedded panel from two equal-length uniform series.
pub fn build_panel(uy: &[f64], ux: &[f64], k: usize, ell: usize) -> Result<LaggedPanel> {
    if uy.len() != ux.len() {
        return Err(SteError::Config(format!(
            "series lengths differ: {} vs {}",
            uy.len(),
            ux.len()
        )));
    }
    if k < 1 || ell < 1 {
        return Err(SteError::Config("k and l must be >= 1".into()));
    }
    let p = k.max(ell);
    let n = uy.len();
    if n <= p + 20 {
        return Err(SteError::TooShort { need: p + 21, got: n });
    }
    let d = k + ell + 2;
    let mut cols = vec![Vec::with_capacity(n - p); d];
    for t in p..n {
        cols[0].push(uy[t]);
        for j in 1..=ell {
            cols[j].push(uy[t - j]);
        }
        for j in 0..k {
            // x lags descending in lag: x_{t-k} first, x_{t-1} last
            cols[ell + 1 + j].push(ux[t - (k - j)]);
        }
        cols[d - 1].push(ux[t]);
    }
    Ok(LaggedPanel { cols, k, ell })
}

/// Direction of information flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    XToY,
    YToX,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::XToY => "x_to_y",
            Direction::YToX => "y_to_x",
        }
    }
}

/// Fitted D-vine model. `trees[j]` holds the level-(j+1) edges; edge
/// `trees[j][i]` joins positions (i, i+j+1) given everything in between.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DVineModel {
    pub order: Vec<String>,
    pub trees: Vec<Vec<PairCopula>>,
    pub n_fit: usize,
    pub k: usize,
    pub ell: usize,
}

fn order_labels(k: usize, ell: usize) -> Vec<String> {
    let mut order = vec!["y_t".to_string()];
    for j in 1..=ell {
        order.push(format!("y_t-{j}"));
    }
    for j in (1..=k).rev() {
        order.push(format!("x_t-{j}"));
    }
    order.push("x_t".to_string());
    order
}

impl DVineModel {
    pub fn dim(&self) -> usize {
        self.trees.len() + 1
    }

    /// Copula of edge (a, b | a+1..b-1), a < b.
    pub fn edge(&self, a: usize, b: usize) -> &PairCopula {
        &self.trees[b - a - 1][a]
    }

    /// Tree-level/edge-index coordinates of the direction-specific edges
    /// of the TE sum (level is 1-based distance, index is left position).
    pub fn te_edges(&self, direction: Direction) -> Vec<(usize, usize)> {
        let d = self.dim();
        match direction {
            // edges (0, l+j | 1..l+j-1), j = 1..k
            Direction::XToY => (1..=self.k).map(|j| (self.ell + j, 0)).collect(),
            // edges (j, d-1 | j+1..d-2), j = 1..l
            Direction::YToX => (1..=self.ell).map(|j| (d - 1 - j, j)).collect(),
        }
    }

    pub fn te_edges_all_independence(&self, direction: Direction) -> bool {
        self.te_edges(direction)
            .iter()
            .all(|&(lvl, i)| self.trees[lvl - 1][i].is_independence())
    }

    /// Copy with the direction-specific edges replaced by independence.
    /// Everything else untouched; TE of the result in that direction is
    /// exactly zero.
    pub fn null_model(&self, direction: Direction) -> DVineModel {
        let mut m = self.clone();
        for (lvl, i) in self.te_edges(direction) {
            m.trees[lvl - 1][i] = PairCopula::INDEPENDENCE;
        }
        m
    }

    /// Conditional arguments (a, b) of every edge at one evaluation point:
    /// a = F(x_i | mid), b = F(x_{i+j} | mid). `args[j][i]` matches
    /// `trees[j][i]`.
    pub fn edge_args(&self, row: &[f64]) -> Result<Vec<Vec<(f64, f64)>>> {
        edge_args_with(&self.trees, row)
    }

    /// Log density of the full vine at one point.
    pub fn log_density(&self, row: &[f64]) -> Result<f64> {
        let args = self.edge_args(row)?;
        let mut ll = 0.0;
        for (j, level) in self.trees.iter().enumerate() {
            for (i, cop) in level.iter().enumerate() {
                let (a, b) = args[j][i];
                ll += cop.log_density(a, b)?;
            }
        }
        Ok(ll)
    }

    /// Log density of the margin over consecutive positions [s, e]
    /// (inclusive), obtained by extracting the corresponding pair-copula
    /// terms from the full decomposition.
    pub fn log_density_range(&self, row: &[f64], s: usize, e: usize) -> Result<f64> {
        if e <= s {
            return Ok(0.0);
        }
        let sub_trees: Vec<Vec<PairCopula>> = (0..(e - s))
            .map(|j| (s..=(e - j - 1)).map(|i| self.trees[j][i]).collect())
            .collect();
        let sub_row = &row[s..=e];
        let args = edge_args_with(&sub_trees, sub_row)?;
        let mut ll = 0.0;
        for (j, level) in sub_trees.iter().enumerate() {
            for (i, cop) in level.iter().enumerate() {
                let (a, b) = args[j][i];
                ll += cop.log_density(a, b)?;
            }
        }
        Ok(ll)
    }

    /// Simulate `n` rows by the inverse Rosenblatt transform.
    pub fn simulate(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_for(seed, &[0x5e]);
        let d = self.dim();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let w: Vec<f64> = (0..d).map(|_| rng.gen_range(1e-10..1.0 - 1e-10)).collect();
            out.push(self.simulate_row(&w));
        }
        out
    }

    /// One inverse-Rosenblatt draw from d uniforms.
    fn simulate_row(&self, w: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut u = vec![0.0; d];
        u[0] = w[0];
        // left[j] = F(x_j | x_{j+1..i-1}) for the current i
        let mut left: Vec<f64> = vec![w[0]];
        for i in 1..d {
            // invert the Rosenblatt transform for variable i
            let mut g = vec![0.0; i + 1];
            g[0] = w[i];
            for j in 0..i {
                let cop = self.edge(j, i);
                g[j + 1] = cop.h2_inv(g[j], left[j]).unwrap_or(g[j]);
            }
            u[i] = g[i];
            // update the left-conditional stack for the next variable
            for j in 0..i {
                let cop = self.edge(j, i);
                left[j] = cop.h1(left[j], g[j + 1]).unwrap_or(left[j]);
            }
            left.push(u[i]);
        }
        u
    }
}

/// Edge argument recursion shared by density evaluation and fitting.
fn edge_args_with(trees: &[Vec<PairCopula>], row: &[f64]) -> Result<Vec<Vec<(f64, f64)>>> {
    let d = row.len();
    if trees.len() != d - 1 {
        return Err(SteError::Config("tree array does not match dimension".into()));
    }
    let mut args: Vec<Vec<(f64, f64)>> = Vec::with_capacity(d - 1);
    // conditionals coming out of the previous level
    let mut fwd: Vec<f64> = row[..d - 1].to_vec(); // F(x_i | mid) for edge i
    let mut bwd: Vec<f64> = row[1..].to_vec(); // F(x_{i+j} | mid) for edge i
    for level in trees {
        let n_edges = level.len();
        let mut level_args = Vec::with_capacity(n_edges);
        let mut next_fwd = Vec::with_capacity(n_edges.saturating_sub(1));
        let mut next_bwd = Vec::with_capacity(n_edges.saturating_sub(1));
        for (i, cop) in level.iter().enumerate() {
            let (a, b) = (fwd[i], bwd[i]);
            level_args.push((a, b));
            if i + 1 < n_edges {
                // F(x_i | mid+{i+j}) feeds the next level's edge i
                next_fwd.push(cop.h1(a, b)?);
            }
            if i > 0 {
                // F(x_{i+j} | mid+{i}) feeds the next level's edge i-1
                next_bwd.push(cop.h2(b, a)?);
            }
        }
        args.push(level_args);
        fwd = next_fwd;
        bwd = next_bwd;
    }
    Ok(args)
}

/// Fit a D-vine sequentially: tree 1 on adjacent columns, pseudo-
/// observations for each next tree from h-functions of the previous one,
/// family selection per edge.
pub fn fit_dvine(panel: &LaggedPanel, candidates: &[FamilyKind]) -> Result<DVineModel> {
    let d = panel.n_cols();
    if d < 2 {
        return Err(SteError::Config("panel must have at least 2 columns".into()));
    }
    let n = panel.n_rows();
    let mut trees: Vec<Vec<PairCopula>> = Vec::with_capacity(d - 1);
    let mut fwd: Vec<Vec<f64>> = panel.cols[..d - 1].to_vec();
    let mut bwd: Vec<Vec<f64>> = panel.cols[1..].to_vec();

    for level in 1..d {
        let n_edges = d - level;
        let mut fitted = Vec::with_capacity(n_edges);
        let mut next_fwd: Vec<Vec<f64>> = Vec::with_capacity(n_edges.saturating_sub(1));
        let mut next_bwd: Vec<Vec<f64>> = Vec::with_capacity(n_edges.saturating_sub(1));
        for i in 0..n_edges {
            let pairs: Vec<(f64, f64)> = fwd[i].iter().cloned().zip(bwd[i].iter().cloned()).collect();
            let fit = select_family(&pairs, candidates).map_err(|e| {
                SteError::FitFailure(format!("edge ({i},{}) at tree {level}: {e}", i + level))
            })?;
            let cop = fit.copula;
            if i + 1 < n_edges {
                let mut col = Vec::with_capacity(n);
                for &(a, b) in &pairs {
                    col.push(cop.h1(a, b)?);
                }
                next_fwd.push(col);
            }
            if i > 0 {
                let mut col = Vec::with_capacity(n);
                for &(a, b) in &pairs {
                    col.push(cop.h2(b, a)?);
                }
                next_bwd.push(col);
            }
            fitted.push(cop);
        }
        trees.push(fitted);
        fwd = next_fwd;
        bwd = next_bwd;
    }

    Ok(DVineModel {
        order: order_labels(panel.k, panel.ell),
        trees,
        n_fit: n,
        k: panel.k,
        ell: panel.ell,
    })
}

/// Monte-Carlo transfer entropy estimate read off a fitted vine.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TeEstimate {
    /// clamped estimate, >= 0
    pub value: f64,
    /// raw Monte-Carlo mean before clamping
    pub raw_mean: f64,
    /// Monte-Carlo standard error (0 for exact zeros)
    pub mc_se: f64,
    /// true when every direction-specific edge is independence
    pub exact_zero: bool,
    /// true when a negative Monte-Carlo mean was clamped to zero
    pub clamped: bool,
}

impl TeEstimate {
    pub fn exact_zero() -> TeEstimate {
        TeEstimate { value: 0.0, raw_mean: 0.0, mc_se: 0.0, exact_zero: true, clamped: false }
    }
}

/// Estimate TE in one direction by Monte-Carlo integration over `t_star`
/// rows simulated from the fitted vine. Exact zero (no simulation) when
/// every direction edge is the independence copula.
pub fn te_from_vine(model: &DVineModel, direction: Direction, t_star: usize, seed: u64) -> Result<TeEstimate> {
    let edges = model.te_edges(direction);
    if edges.is_empty() {
        return Err(SteError::Numerical("direction has no edges in the vine".into()));
    }
    if model.te_edges_all_independence(direction) {
        return Ok(TeEstimate::exact_zero());
    }
    let rows = model.simulate(t_star, seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for row in &rows {
        let args = model.edge_args(&row[..])?;
        let mut term = 0.0;
        for &(lvl, i) in &edges {
            let (a, b) = args[lvl - 1][i];
            term += model.trees[lvl - 1][i].log_density(a, b)?;
        }
        sum += term;
        sum_sq += term * term;
    }
    let n = t_star as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    let se = (var / n).sqrt();
    let clamped = mean < 0.0;
    Ok(TeEstimate {
        value: mean.max(0.0),
        raw_mean: mean,
        mc_se: se,
        exact_zero: false,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::{Family, Rotation};
    use rand::Rng;

    fn all_indep(d: usize, k: usize, ell: usize) -> DVineModel {
        let trees = (1..d).map(|j| vec![PairCopula::INDEPENDENCE; d - j]).collect();
        DVineModel { order: order_labels(k, ell), trees, n_fit: 0, k, ell }
    }

    #[test]
    fn panel_shape_k1_l1() {
        let n = 50;
        let u: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let p = build_panel(&u, &u, 1, 1).unwrap();
        assert_eq!(p.n_rows(), n - 1);
        assert_eq!(p.n_cols(), 4);
    }

    #[test]
    fn panel_shape_k2_l2() {
        let n = 60;
        let u: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let p = build_panel(&u, &u, 2, 2).unwrap();
        assert_eq!(p.n_cols(), 6);
        assert_eq!(p.n_rows(), n - 2);
    }

    #[test]
    fn panel_column_order() {
        let n = 40;
        // encode identity: uy[t] = t, ux[t] = 1000 + t (scaled into (0,1))
        let uy: Vec<f64> = (0..n).map(|t| (t as f64 + 0.5) / 2000.0).collect();
        let ux: Vec<f64> = (0..n).map(|t| (1000.0 + t as f64 + 0.5) / 2000.0).collect();
        let p = build_panel(&uy, &ux, 2, 1).unwrap();
        // row r corresponds to t = r + max(k,l) = r + 2
        let row = p.row(0);
        let t = 2.0;
        assert_eq!(row[0], (t + 0.5) / 2000.0); // y_t
        assert_eq!(row[1], (t - 1.0 + 0.5) / 2000.0); // y_{t-1}
        assert_eq!(row[2], (1000.0 + t - 2.0 + 0.5) / 2000.0); // x_{t-2}
        assert_eq!(row[3], (1000.0 + t - 1.0 + 0.5) / 2000.0); // x_{t-1}
        assert_eq!(row[4], (1000.0 + t + 0.5) / 2000.0); // x_t
    }

    #[test]
    fn panel_too_short() {
        let u = vec![0.5; 10];
        assert!(matches!(build_panel(&u, &u, 1, 1), Err(SteError::TooShort { .. })));
    }

    #[test]
    fn te_edges_match_construction() {
        // k = l = 2, d = 6: X->Y edges are (0,3|..), (0,4|..);
        // Y->X edges are (1,5|..), (2,5|..)
        let m = all_indep(6, 2, 2);
        assert_eq!(m.te_edges(Direction::XToY), vec![(3, 0), (4, 0)]);
        assert_eq!(m.te_edges(Direction::YToX), vec![(4, 1), (3, 2)]);
    }

    #[test]
    fn independence_vine_te_exact_zero() {
        let m = all_indep(4, 1, 1);
        let te = te_from_vine(&m, Direction::XToY, 10, 0).unwrap();
        assert_eq!(te.value, 0.0);
        assert!(te.exact_zero);
    }

    #[test]
    fn null_model_zeroes_direction_and_is_idempotent() {
        let mut m = all_indep(4, 1, 1);
        let g = PairCopula::new(Family::Gaussian { rho: 0.6 }, Rotation::R0).unwrap();
        for level in &mut m.trees {
            for e in level.iter_mut() {
                *e = g;
            }
        }
        let null = m.null_model(Direction::XToY);
        assert!(null.te_edges_all_independence(Direction::XToY));
        assert!(!null.te_edges_all_independence(Direction::YToX));
        let te = te_from_vine(&null, Direction::XToY, 10, 0).unwrap();
        assert_eq!(te.value, 0.0);
        let twice = null.null_model(Direction::XToY);
        for (a, b) in null.trees.iter().flatten().zip(twice.trees.iter().flatten()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn simulate_deterministic() {
        let mut m = all_indep(4, 1, 1);
        m.trees[0][0] = PairCopula::new(Family::Gumbel { theta: 2.0 }, Rotation::R0).unwrap();
        let a = m.simulate(100, 9);
        let b = m.simulate(100, 9);
        assert_eq!(a, b);
    }

    #[test]
    fn simulate_independence_uniform_margins() {
        let m = all_indep(4, 1, 1);
        let rows = m.simulate(5000, 3);
        for c in 0..4 {
            let mean: f64 = rows.iter().map(|r| r[c]).sum::<f64>() / 5000.0;
            assert!((mean - 0.5).abs() < 0.02, "col {c} mean {mean}");
            for c2 in (c + 1)..4 {
                let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r[c], r[c2])).collect();
                let tau = crate::copula::kendall_tau(&pairs);
                assert!(tau.abs() < 0.05, "tau({c},{c2}) = {tau}");
            }
        }
    }

    #[test]
    fn simulate_gaussian_pair_tau() {
        // d = 2 vine: single Gaussian(0.7) edge
        let m = DVineModel {
            order: vec!["a".into(), "b".into()],
            trees: vec![vec![PairCopula::new(Family::Gaussian { rho: 0.7 }, Rotation::R0).unwrap()]],
            n_fit: 0,
            k: 1,
            ell: 0,
        };
        let rows = m.simulate(5000, 5);
        let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r[0], r[1])).collect();
        let tau = crate::copula::kendall_tau(&pairs);
        let expect = 2.0 / std::f64::consts::PI * 0.7_f64.asin();
        assert!((tau - expect).abs() < 0.03, "tau = {tau}, expect {expect}");
    }

    #[test]
    fn simulate_uniform_margins_nontrivial_vine() {
        let m = random_vine(4, 1, 1, 77);
        let rows = m.simulate(4000, 8);
        for c in 0..4 {
            let mut vals: Vec<f64> = rows.iter().map(|r| r[c]).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = vals.len() as f64;
            let ks = vals
                .iter()
                .enumerate()
                .map(|(i, &v)| ((i as f64 + 1.0) / n - v).max(v - i as f64 / n))
                .fold(0.0, f64::max);
            assert!(ks < 0.035, "col {c} margin KS = {ks}");
        }
    }

    #[test]
    fn fit_independent_panel_selects_independence() {
        let mut hits = 0;
        let reps = 20;
        for rep in 0..reps {
            let mut rng = crate::seed::rng_for(1000 + rep, &[0]);
            let rows: Vec<Vec<f64>> = (0..500).map(|_| (0..4).map(|_| rng.gen()).collect()).collect();
            let panel = LaggedPanel::from_rows(&rows, 1, 1);
            let m = fit_dvine(&panel, &FamilyKind::all()).unwrap();
            if m.trees.iter().flatten().all(|c| c.is_independence()) {
                hits += 1;
            }
        }
        assert!(hits * 100 >= reps * 70, "all-independence in {hits}/{reps}");
    }

    fn gaussian_vine_by_tree(rhos: [f64; 3], k: usize, ell: usize) -> DVineModel {
        let d = 4;
        let trees = (1..d)
            .map(|j| {
                let rho = rhos[j - 1];
                vec![PairCopula::new(Family::Gaussian { rho }, Rotation::R0).unwrap(); d - j]
            })
            .collect();
        DVineModel { order: order_labels(k, ell), trees, n_fit: 0, k, ell }
    }

    #[test]
    fn fit_recovers_gaussian_vine() {
        let truth = gaussian_vine_by_tree([0.6, 0.4, 0.2], 1, 1);
        let rows = truth.simulate(5000, 17);
        let panel = LaggedPanel::from_rows(&rows, 1, 1);
        let m = fit_dvine(&panel, &[FamilyKind::Gaussian]).unwrap();
        for (j, level) in m.trees.iter().enumerate() {
            for cop in level {
                if let Family::Gaussian { rho } = cop.family {
                    let truth_rho = [0.6, 0.4, 0.2][j];
                    assert!((rho - truth_rho).abs() < 0.1, "tree {j}: rho = {rho}");
                } else {
                    panic!("expected Gaussian edge");
                }
            }
        }
    }

    #[test]
    fn d2_vine_fit_matches_pair_mle() {
        let c = PairCopula::new(Family::Clayton { theta: 2.0 }, Rotation::R0).unwrap();
        let mut rng = crate::seed::rng_for(55, &[0]);
        let pairs: Vec<(f64, f64)> = (0..2000).map(|_| c.sample(&mut rng)).collect();
        let rows: Vec<Vec<f64>> = pairs.iter().map(|&(u, v)| vec![u, v]).collect();
        let panel = LaggedPanel::from_rows(&rows, 1, 0);
        let m = fit_dvine(&panel, &[FamilyKind::Clayton]).unwrap();
        let direct = crate::copula::fit_mle(&pairs, FamilyKind::Clayton, Rotation::R0).unwrap();
        match (m.trees[0][0].family, direct.copula.family) {
            (Family::Clayton { theta: a }, Family::Clayton { theta: b }) => {
                assert!((a - b).abs() < 1e-9, "vine {a} vs direct {b}");
            }
            _ => panic!("wrong family"),
        }
    }

    fn random_vine(d: usize, k: usize, ell: usize, seed: u64) -> DVineModel {
        let mut rng = crate::seed::rng_for(seed, &[0xabc]);
        let trees = (1..d)
            .map(|j| {
                (0..d - j)
                    .map(|_| {
                        let pick: u8 = rng.gen_range(0..5);
                        let fam = match pick {
                            0 => Family::Gaussian { rho: rng.gen_range(-0.7..0.7) },
                            1 => Family::Clayton { theta: rng.gen_range(0.5..3.0) },
                            2 => Family::Gumbel { theta: rng.gen_range(1.2..2.5) },
                            3 => Family::Frank { theta: rng.gen_range(1.0..6.0) },
                            _ => Family::Joe { theta: rng.gen_range(1.2..2.5) },
                        };
                        let rot = match rng.gen_range(0..4) {
                            0 => Rotation::R0,
                            1 => Rotation::R90,
                            2 => Rotation::R180,
                            _ => Rotation::R270,
                        };
                        // keep rotations only for tail-asymmetric families
                        let rot = match fam {
                            Family::Gaussian { .. } | Family::Frank { .. } => Rotation::R0,
                            _ => rot,
                        };
                        PairCopula::new(fam, rot).unwrap()
                    })
                    .collect()
            })
            .collect();
        DVineModel { order: order_labels(k, ell), trees, n_fit: 0, k, ell }
    }

    /// The Eq.-cancellation identity: the log ratio of sub-vine densities
    /// equals the pair-density sum over the direction edges.
    fn check_cancellation(model: &DVineModel, direction: Direction, seed: u64) {
        let d = model.dim();
        let (k, ell) = (model.k, model.ell);
        let mut rng = crate::seed::rng_for(seed, &[1]);
        for _ in 0..100 {
            let row: Vec<f64> = (0..d).map(|_| rng.gen_range(0.02..0.98)).collect();
            let args = model.edge_args(&row).unwrap();
            let mut rhs = 0.0;
            for (lvl, i) in model.te_edges(direction) {
                let (a, b) = args[lvl - 1][i];
                rhs += model.trees[lvl - 1][i].log_density(a, b).unwrap();
            }
            let lhs = match direction {
                Direction::XToY => {
                    // log c(y, y', x') + log c(y') - log c(y, y') - log c(y', x')
                    model.log_density_range(&row, 0, d - 2).unwrap()
                        + model.log_density_range(&row, 1, ell).unwrap()
                        - model.log_density_range(&row, 0, ell).unwrap()
                        - model.log_density_range(&row, 1, d - 2).unwrap()
                }
                Direction::YToX => {
                    // log c(y', x', x) + log c(x') - log c(x', x) - log c(y', x')
                    model.log_density_range(&row, 1, d - 1).unwrap()
                        + model.log_density_range(&row, ell + 1, ell + k).unwrap()
                        - model.log_density_range(&row, ell + 1, d - 1).unwrap()
                        - model.log_density_range(&row, 1, d - 2).unwrap()
                }
            };
            assert!(
                (lhs - rhs).abs() < 1e-10,
                "cancellation identity violated: lhs {lhs}, rhs {rhs} (k={k}, l={ell})"
            );
        }
    }

    #[test]
    fn cancellation_identity_k_l_1_to_3() {
        for (i, p) in [1usize, 2, 3].iter().enumerate() {
            let d = 2 * p + 2;
            let m = random_vine(d, *p, *p, 300 + i as u64);
            check_cancellation(&m, Direction::XToY, 310 + i as u64);
            check_cancellation(&m, Direction::YToX, 320 + i as u64);
        }
    }

    #[test]
    fn gaussian_var1_te_matches_closed_form() {
        // VAR(1): Z_t = A Z_{t-1} + e, A = [[0.5, 0], [0.3, 0.5]], e ~ N(0, I).
        // X (driver) is component 0, Y component 1.
        let a = [[0.5, 0.0], [0.3, 0.5]];
        // stationary covariance by fixed-point iteration
        let mut g0 = [[1.0, 0.0], [0.0, 1.0]];
        for _ in 0..500 {
            let mut next = [[0.0; 2]; 2];
            for r in 0..2 {
                for c in 0..2 {
                    let mut s = 0.0;
                    for p in 0..2 {
                        for q in 0..2 {
                            s += a[r][p] * g0[p][q] * a[c][q];
                        }
                    }
                    next[r][c] = s + if r == c { 1.0 } else { 0.0 };
                }
            }
            g0 = next;
        }
        // lag-1 cross covariance: G1 = A G0, G1[r][c] = Cov(Z_t[r], Z_{t-1}[c])
        let mut g1: [[f64; 2]; 2] = [[0.0; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                g1[r][c] = (0..2).map(|p| a[r][p] * g0[p][c]).sum();
            }
        }
        // partial correlation of (Y_t, X_{t-1}) given Y_{t-1}
        let var_y = g0[1][1];
        let var_x = g0[0][0];
        let cov_yt_xl = g1[1][0];
        let cov_yt_yl = g1[1][1];
        let cov_xl_yl = g0[0][1];
        let r_ab = cov_yt_xl / (var_y * var_x).sqrt();
        let r_ac = cov_yt_yl / var_y;
        let r_bc = cov_xl_yl / (var_x * var_y).sqrt();
        let rho_p = (r_ab - r_ac * r_bc) / ((1.0 - r_ac * r_ac) * (1.0 - r_bc * r_bc)).sqrt();
        let te_true = -0.5 * (1.0 - rho_p * rho_p).ln();

        // simulate the VAR, PIT by ranks, fit a Gaussian-only vine
        let n = 10_000;
        let mut rng = crate::seed::rng_for(2024, &[0]);
        let mut z = [0.0, 0.0];
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        let normal = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
        use statrs::distribution::ContinuousCDF;
        for t in 0..(n + 500) {
            let e0 = normal.inverse_cdf(rng.gen_range(1e-12..1.0));
            let e1 = normal.inverse_cdf(rng.gen_range(1e-12..1.0));
            let z0 = a[0][0] * z[0] + a[0][1] * z[1] + e0;
            let z1 = a[1][0] * z[0] + a[1][1] * z[1] + e1;
            z = [z0, z1];
            if t >= 500 {
                xs.push(z[0]);
                ys.push(z[1]);
            }
        }
        let rank_pit = |v: &[f64]| -> Vec<f64> {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
            let mut u = vec![0.0; v.len()];
            for (r, &i) in idx.iter().enumerate() {
                u[i] = (r as f64 + 1.0) / (v.len() as f64 + 1.0);
            }
            u
        };
        let ux = rank_pit(&xs);
        let uy = rank_pit(&ys);
        let panel = build_panel(&uy, &ux, 1, 1).unwrap();
        let m = fit_dvine(&panel, &[FamilyKind::Gaussian]).unwrap();
        let te = te_from_vine(&m, Direction::XToY, 100_000, 99).unwrap();
        assert!(
            (te.value - te_true).abs() < 0.01,
            "TE = {}, closed form = {te_true}",
            te.value
        );
        // reverse direction: no Y->X coupling in A, so TE should be small
        let te_rev = te_from_vine(&m, Direction::YToX, 100_000, 100).unwrap();
        assert!(te_rev.value < 0.01, "reverse TE = {}", te_rev.value);
    }

    #[test]
    fn mc_standard_error_shrinks_with_t_star() {
        let truth = gaussian_vine_by_tree([0.6, 0.4, 0.2], 1, 1);
        let te_small = te_from_vine(&truth, Direction::XToY, 2000, 7).unwrap();
        let te_large = te_from_vine(&truth, Direction::XToY, 8000, 7).unwrap();
        // doubling T* twice should halve the SE, within slack
        let ratio = te_small.mc_se / te_large.mc_se;
        assert!(
            (1.4..=2.9).contains(&ratio),
            "SE ratio {ratio} (small {}, large {})",
            te_small.mc_se,
            te_large.mc_se
        );
    }

    #[test]
    fn simulate_fit_te_round_trip() {
        let truth = gaussian_vine_by_tree([0.6, 0.4, 0.2], 1, 1);
        let te_truth = te_from_vine(&truth, Direction::XToY, 20_000, 11).unwrap();
        let rows = truth.simulate(5000, 12);
        let panel = LaggedPanel::from_rows(&rows, 1, 1);
        let refit = fit_dvine(&panel, &[FamilyKind::Gaussian]).unwrap();
        let te_refit = te_from_vine(&refit, Direction::XToY, 20_000, 13).unwrap();
        let tol = 2.0 * (te_truth.mc_se + te_refit.mc_se) + 0.02;
        assert!(
            (te_truth.value - te_refit.value).abs() < tol,
            "round trip: {} vs {}",
            te_truth.value,
            te_refit.value
        );
    }

    #[test]
    fn vine_serializes_to_json() {
        let m = random_vine(4, 1, 1, 500);
        let s = serde_json::to_string(&m).unwrap();
        let back: DVineModel = serde_json::from_str(&s).unwrap();
        assert_eq!(m.order, back.order);
        assert_eq!(m.trees.len(), back.trees.len());
        for (a, b) in m.trees.iter().flatten().zip(back.trees.iter().flatten()) {
            assert_eq!(a.rotation, b.rotation);
            assert_eq!(std::mem::discriminant(&a.family), std::mem::discriminant(&b.family));
            // JSON float printing may drop the last ulp
            let (pa, pb) = (a.log_density(0.3, 0.6).unwrap(), b.log_density(0.3, 0.6).unwrap());
            assert!((pa - pb).abs() < 1e-12);
        }
    }
}
