//! Main effects and two-way interactions of a tensor spline, obtained by
//! integrating the remaining coordinates over `[0, 1]`.
//!
//! Integrating coordinate `k` out of `Σ_l b_l Π_j B_{j,l_j}(x_j)` replaces the
//! basis functions of that coordinate by their integrals, so the effect
//! coefficients are the contraction of `b` with the average vectors `A_k`
//! along every integrated mode. Coordinates are 0-based here.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::MarginalBasis;
use crate::diagnostics::{quantile_sorted, MIN_DRAWS};
use crate::{tensor, Error, Result};

pub const DEFAULT_LEVEL: f64 = 0.95;
pub const DEFAULT_GRID_1D: usize = 200;
pub const DEFAULT_GRID_2D: usize = 60;

fn dims_of(bases: &[MarginalBasis]) -> Vec<usize> {
    bases.iter().map(MarginalBasis::dim).collect()
}

fn check_len(b: &[f64], dims: &[usize]) -> Result<()> {
    let d: usize = dims.iter().product();
    if b.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: b.len(),
            context: "coefficient vector",
        });
    }
    Ok(())
}

fn check_coord(j: usize, p: usize) -> Result<()> {
    if j >= p {
        return Err(Error::Config(format!(
            "coordinate index {j} out of range for p = {p}"
        )));
    }
    Ok(())
}

/// Contracts every mode not listed in `keep` (ascending) with its averages.
fn contract_except(b: &[f64], bases: &[MarginalBasis], keep: &[usize]) -> Vec<f64> {
    let mut dims = dims_of(bases);
    let mut cur = b.to_vec();
    for m in (0..bases.len()).rev() {
        if keep.contains(&m) {
            continue;
        }
        cur = tensor::contract_mode(&cur, &dims, m, bases[m].averages());
        dims.remove(m);
    }
    cur
}

/// Coefficients of the `j`-th main effect in the `j`-th marginal basis.
pub fn main_effect_coefs(b: &[f64], j: usize, bases: &[MarginalBasis]) -> Result<Vec<f64>> {
    check_coord(j, bases.len())?;
    check_len(b, &dims_of(bases))?;
    Ok(contract_except(b, bases, &[j]))
}

/// Coefficients of the `(j, k)` interaction in the tensor basis of the two
/// coordinates, row-major with coordinate `j` slowest.
pub fn interaction_coefs(b: &[f64], j: usize, k: usize, bases: &[MarginalBasis]) -> Result<Vec<f64>> {
    check_coord(j, bases.len())?;
    check_coord(k, bases.len())?;
    if j == k {
        return Err(Error::Config(format!("interaction needs two distinct coordinates, got {j} twice")));
    }
    check_len(b, &dims_of(bases))?;
    let (lo, hi) = (j.min(k), j.max(k));
    let c = contract_except(b, bases, &[lo, hi]);
    if j < k {
        return Ok(c);
    }
    let (dl, dh) = (bases[lo].dim(), bases[hi].dim());
    let mut t = vec![0.0; c.len()];
    for a in 0..dl {
        for e in 0..dh {
            t[e * dl + a] = c[a * dh + e];
        }
    }
    Ok(t)
}

/// Integral of the whole tensor spline over the unit cube.
pub fn total_integral(b: &[f64], bases: &[MarginalBasis]) -> Result<f64> {
    check_len(b, &dims_of(bases))?;
    Ok(contract_except(b, bases, &[])[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EffectTerm {
    Main { j: usize },
    Interaction { j: usize, k: usize },
}

impl EffectTerm {
    pub fn coords(&self) -> Vec<usize> {
        match *self {
            EffectTerm::Main { j } => vec![j],
            EffectTerm::Interaction { j, k } => vec![j, k],
        }
    }

    pub fn coefs(&self, b: &[f64], bases: &[MarginalBasis]) -> Result<Vec<f64>> {
        match *self {
            EffectTerm::Main { j } => main_effect_coefs(b, j, bases),
            EffectTerm::Interaction { j, k } => interaction_coefs(b, j, k, bases),
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        match *self {
            EffectTerm::Main { j } => check_coord(j, p),
            EffectTerm::Interaction { j, k } => {
                check_coord(j, p)?;
                check_coord(k, p)?;
                if j == k {
                    return Err(Error::Config("interaction needs two distinct coordinates".into()));
                }
                Ok(())
            }
        }
    }
}

/// Pointwise and simultaneous credible bands over a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bands {
    pub level: f64,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub pointwise_lo: Vec<f64>,
    pub pointwise_hi: Vec<f64>,
    pub simultaneous_lo: Vec<f64>,
    pub simultaneous_hi: Vec<f64>,
    /// Multiplier `q` of the simultaneous band.
    pub critical: f64,
}

/// Bands from `samples` laid out `draws × grid` (row-major).
pub fn credible_bands(samples: &[f64], grid_len: usize, level: f64) -> Result<Bands> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("band level must lie in (0, 1), got {level}")));
    }
    if grid_len == 0 || !samples.len().is_multiple_of(grid_len) {
        return Err(Error::DimensionMismatch {
            expected: grid_len,
            got: samples.len(),
            context: "samples not a whole number of grid rows",
        });
    }
    let s = samples.len() / grid_len;
    if s < MIN_DRAWS {
        return Err(Error::InsufficientSamples { needed: MIN_DRAWS, got: s });
    }
    let (plo, phi) = ((1.0 - level) / 2.0, (1.0 + level) / 2.0);
    let per_point: Vec<(f64, f64, f64, f64)> = (0..grid_len)
        .into_par_iter()
        .map(|g| {
            let mut col: Vec<f64> = (0..s).map(|r| samples[r * grid_len + g]).collect();
            let mean = col.iter().sum::<f64>() / s as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s as f64 - 1.0)).sqrt();
            col.sort_by(f64::total_cmp);
            (mean, sd, quantile_sorted(&col, plo), quantile_sorted(&col, phi))
        })
        .collect();
    let mean: Vec<f64> = per_point.iter().map(|t| t.0).collect();
    let sd: Vec<f64> = per_point.iter().map(|t| t.1).collect();
    let mut max_dev: Vec<f64> = samples
        .par_chunks(grid_len)
        .map(|row| {
            row.iter()
                .zip(&mean)
                .zip(&sd)
                .map(|((v, m), sd)| if *sd > 0.0 { (v - m).abs() / sd } else { 0.0 })
                .fold(0.0, f64::max)
        })
        .collect();
    max_dev.sort_by(f64::total_cmp);
    let critical = quantile_sorted(&max_dev, level);
    Ok(Bands {
        level,
        simultaneous_lo: mean.iter().zip(&sd).map(|(m, s)| m - critical * s).collect(),
        simultaneous_hi: mean.iter().zip(&sd).map(|(m, s)| m + critical * s).collect(),
        pointwise_lo: per_point.iter().map(|t| t.2).collect(),
        pointwise_hi: per_point.iter().map(|t| t.3).collect(),
        mean,
        sd,
        critical,
    })
}

/// Equidistant grid of `n ≥ 2` points covering `[0, 1]`.
pub fn unit_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

/// A main effect or interaction summarized over all retained draws.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectResult {
    pub term: EffectTerm,
    pub bases: Vec<MarginalBasis>,
    /// `draws × reduced length`.
    pub coef_samples: Vec<f64>,
    /// One grid per retained coordinate (unit scale); interactions use the
    /// row-major product grid with the first coordinate slowest.
    pub grids: Vec<Vec<f64>>,
    pub bands: Bands,
    /// Whether each draw had its integral over the unit square/interval subtracted.
    pub centered: bool,
}

impl EffectResult {
    pub fn reduced_len(&self) -> usize {
        self.bases.iter().map(MarginalBasis::dim).product()
    }

    pub fn num_draws(&self) -> usize {
        self.coef_samples.len() / self.reduced_len()
    }

    pub fn grid_len(&self) -> usize {
        self.grids.iter().map(Vec::len).product()
    }
}

/// Marginal basis rows at every grid point: `grid × d` dense.
fn basis_matrix(basis: &MarginalBasis, grid: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(grid.len() * basis.dim());
    for &t in grid {
        out.extend(basis.eval_dense(t)?);
    }
    Ok(out)
}

/// Evaluates reduced coefficients `c` on the grid of the term.
fn evaluate(c: &[f64], mats: &[(Vec<f64>, usize)], dims: &[usize]) -> Vec<f64> {
    match mats {
        [(m, g)] => (0..*g)
            .map(|t| m[t * dims[0]..(t + 1) * dims[0]].iter().zip(c).map(|(a, b)| a * b).sum())
            .collect(),
        [(m1, g1), (m2, g2)] => {
            let (d1, d2) = (dims[0], dims[1]);
            // first contract the second mode on its grid, then the first
            let mut half = vec![0.0; d1 * g2];
            for a in 0..d1 {
                for t in 0..*g2 {
                    half[a * g2 + t] = m2[t * d2..(t + 1) * d2]
                        .iter()
                        .zip(&c[a * d2..(a + 1) * d2])
                        .map(|(x, y)| x * y)
                        .sum();
                }
            }
            let mut out = vec![0.0; g1 * g2];
            for s in 0..*g1 {
                let row = &m1[s * d1..(s + 1) * d1];
                for (a, w) in row.iter().enumerate() {
                    if *w == 0.0 {
                        continue;
                    }
                    for t in 0..*g2 {
                        out[s * g2 + t] += w * half[a * g2 + t];
                    }
                }
            }
            out
        }
        _ => unreachable!("effects retain one or two coordinates"),
    }
}

/// Computes a term for every draw of `b` (`draws × D`, row-major), evaluates
/// it on the grids and summarizes it with credible bands.
pub fn compute_effect(
    draws: &[f64],
    bases: &[MarginalBasis],
    term: EffectTerm,
    grids: Vec<Vec<f64>>,
    level: f64,
    center: bool,
) -> Result<EffectResult> {
    term.validate(bases.len())?;
    let coords = term.coords();
    if grids.len() != coords.len() || grids.iter().any(|g| g.is_empty()) {
        return Err(Error::Config(format!(
            "effect needs {} non-empty grids, got {}",
            coords.len(),
            grids.len()
        )));
    }
    let d: usize = bases.iter().map(MarginalBasis::dim).product();
    if draws.is_empty() || !draws.len().is_multiple_of(d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: draws.len(),
            context: "coefficient draws not a whole number of vectors",
        });
    }
    let kept: Vec<MarginalBasis> = coords.iter().map(|&j| bases[j].clone()).collect();
    let kdims = dims_of(&kept);
    let mats = kept
        .iter()
        .zip(&grids)
        .map(|(b, g)| Ok((basis_matrix(b, g)?, g.len())))
        .collect::<Result<Vec<_>>>()?;
    let per_draw: Vec<(Vec<f64>, Vec<f64>)> = draws
        .par_chunks(d)
        .map(|b| {
            let c = term.coefs(b, bases)?;
            let mut f = evaluate(&c, &mats, &kdims);
            if center {
                let level = contract_except(&c, &kept, &[]);
                for v in &mut f {
                    *v -= level[0];
                }
            }
            Ok((c, f))
        })
        .collect::<Result<_>>()?;
    let grid_len: usize = grids.iter().map(Vec::len).product();
    let mut coef_samples = Vec::with_capacity(per_draw.len() * kdims.iter().product::<usize>());
    let mut curves = Vec::with_capacity(per_draw.len() * grid_len);
    for (c, f) in per_draw {
        coef_samples.extend(c);
        curves.extend(f);
    }
    let bands = credible_bands(&curves, grid_len, level)?;
    Ok(EffectResult {
        term,
        bases: kept,
        coef_samples,
        grids,
        bands,
        centered: center,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::eval_spline;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn bases(dims: &[usize]) -> Vec<MarginalBasis> {
        dims.iter().map(|&d| MarginalBasis::new(d).unwrap()).collect()
    }

    fn random_b(d: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..d).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn ones_map_to_ones() {
        let bs = bases(&[4, 6, 5]);
        let b = vec![1.0; 120];
        for j in 0..3 {
            let c = main_effect_coefs(&b, j, &bs).unwrap();
            assert!(c.iter().all(|v| (v - 1.0).abs() < 1e-13));
        }
    }

    #[test]
    fn low_dimensional_identities() {
        let bs = bases(&[6]);
        let b = random_b(6, 1);
        assert_eq!(main_effect_coefs(&b, 0, &bs).unwrap(), b);
        let bs = bases(&[4, 5]);
        let b = random_b(20, 2);
        assert_eq!(interaction_coefs(&b, 0, 1, &bs).unwrap(), b);
    }

    #[test]
    fn interaction_matches_explicit_kronecker() {
        // (I ⊗ I ⊗ A₃) b with A₃ as a 1 × d₃ row
        let bs = bases(&[4, 5, 6]);
        let b = random_b(120, 3);
        let a3 = DMatrix::from_row_slice(1, 6, bs[2].averages());
        let i1 = DMatrix::<f64>::identity(4, 4);
        let i2 = DMatrix::<f64>::identity(5, 5);
        let full = i1.kronecker(&i2).kronecker(&a3);
        let want = full * nalgebra::DVector::from_vec(b.clone());
        let got = interaction_coefs(&b, 0, 1, &bs).unwrap();
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((g - w).abs() < 1e-13);
        }
        let swapped = interaction_coefs(&b, 1, 0, &bs).unwrap();
        for a in 0..4 {
            for e in 0..5 {
                assert_eq!(swapped[e * 4 + a], got[a * 5 + e]);
            }
        }
    }

    #[test]
    fn contracting_interaction_gives_main_effect() {
        let bs = bases(&[4, 5, 6]);
        let b = random_b(120, 4);
        let inter = interaction_coefs(&b, 0, 2, &bs).unwrap();
        let via = tensor::contract_mode(&inter, &[4, 6], 0, bs[0].averages());
        let main = main_effect_coefs(&b, 2, &bs).unwrap();
        for (a, c) in via.iter().zip(&main) {
            assert!((a - c).abs() < 1e-13);
        }
    }

    /// Main effect of coordinate `j` at `t` by tensor quadrature over the others.
    fn quadrature_effect(bs: &[MarginalBasis], b: &[f64], j: usize, t: f64, nodes: &[(f64, f64)]) -> f64 {
        let others: Vec<usize> = (0..3).filter(|&k| k != j).collect();
        let mut x = [0.0; 3];
        x[j] = t;
        let mut quad = 0.0;
        for &(u, wu) in nodes {
            for &(v, wv) in nodes {
                x[others[0]] = u;
                x[others[1]] = v;
                quad += wu * wv * eval_spline(bs, b, &x).unwrap();
            }
        }
        quad
    }

    #[test]
    fn main_effect_matches_midpoint_quadrature() {
        // midpoint error per coordinate is about h²/24·(f'(1) - f'(0)); 400 nodes keep it below 1e-6
        let bs = bases(&[4, 4, 4]);
        let b = random_b(64, 5);
        let m = 400;
        let nodes: Vec<(f64, f64)> = (0..m).map(|u| ((u as f64 + 0.5) / m as f64, 1.0 / m as f64)).collect();
        for j in 0..3 {
            let c = main_effect_coefs(&b, j, &bs).unwrap();
            for t in unit_grid(50) {
                let eff: f64 = bs[j].eval_dense(t).unwrap().iter().zip(&c).map(|(x, y)| x * y).sum();
                let quad = quadrature_effect(&bs, &b, j, t, &nodes);
                assert!((eff - quad).abs() < 1e-6, "j={j} t={t}: {eff} vs {quad}");
            }
        }
    }

    #[test]
    fn main_effect_matches_gauss_quadrature() {
        // d = 4 is one cubic piece per coordinate, so 4-point Gauss–Legendre is exact
        let bs = bases(&[4, 4, 4]);
        let b = random_b(64, 5);
        let (x1, x2) = (0.339_981_043_584_856_3, 0.861_136_311_594_052_6);
        let (w1, w2) = (0.652_145_154_862_546_1, 0.347_854_845_137_453_9);
        let nodes = [
            (0.5 - 0.5 * x2, 0.5 * w2),
            (0.5 - 0.5 * x1, 0.5 * w1),
            (0.5 + 0.5 * x1, 0.5 * w1),
            (0.5 + 0.5 * x2, 0.5 * w2),
        ];
        for j in 0..3 {
            let c = main_effect_coefs(&b, j, &bs).unwrap();
            for t in unit_grid(50) {
                let eff: f64 = bs[j].eval_dense(t).unwrap().iter().zip(&c).map(|(x, y)| x * y).sum();
                assert!((eff - quadrature_effect(&bs, &b, j, t, &nodes)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn product_function_factorizes() {
        let bs = bases(&[5, 6, 4]);
        let g: Vec<Vec<f64>> = vec![random_b(5, 6), random_b(6, 7), random_b(4, 8)];
        let mut b = vec![0.0; 120];
        for (l, v) in b.iter_mut().enumerate() {
            let (i, k, m) = (l / 24, (l / 4) % 6, l % 4);
            *v = g[0][i] * g[1][k] * g[2][m];
        }
        let ints: Vec<f64> = (0..3)
            .map(|j| g[j].iter().zip(bs[j].averages()).map(|(x, y)| x * y).sum())
            .collect();
        for j in 0..3 {
            let c = main_effect_coefs(&b, j, &bs).unwrap();
            let scale: f64 = (0..3).filter(|&k| k != j).map(|k| ints[k]).product();
            for (cv, gv) in c.iter().zip(&g[j]) {
                assert!((cv - gv * scale).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn index_errors() {
        let bs = bases(&[4, 4]);
        let b = vec![0.0; 16];
        assert!(main_effect_coefs(&b, 2, &bs).is_err());
        assert!(interaction_coefs(&b, 1, 1, &bs).is_err());
        assert!(main_effect_coefs(&b[1..], 0, &bs).is_err());
    }

    #[test]
    fn constant_samples_give_zero_width_bands() {
        let samples: Vec<f64> = (0..150).flat_map(|_| [0.3, -1.2, 7.0]).collect();
        let bands = credible_bands(&samples, 3, 0.9).unwrap();
        for g in 0..3 {
            assert!((bands.pointwise_hi[g] - bands.pointwise_lo[g]).abs() < 1e-12);
            assert!((bands.simultaneous_hi[g] - bands.simultaneous_lo[g]).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_samples() {
        let err = credible_bands(&vec![0.0; 99 * 2], 2, 0.95).unwrap_err();
        assert!(matches!(err, Error::InsufficientSamples { needed: 100, got: 99 }));
    }

    /// Draws from a zero-mean GP on the grid with a squared-exponential kernel.
    fn gp_paths(grid: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let g = grid.len();
        let k = DMatrix::from_fn(g, g, |a, b| {
            (-(grid[a] - grid[b]).powi(2) / (2.0 * 0.15f64.powi(2))).exp() + if a == b { 1e-8 } else { 0.0 }
        });
        let l = k.cholesky().unwrap().l();
        let mut out = Vec::with_capacity(count * g);
        for _ in 0..count {
            let z = nalgebra::DVector::from_fn(g, |_, _| rng.sample::<f64, _>(StandardNormal));
            out.extend((&l * z).iter());
        }
        out
    }

    #[test]
    fn simultaneous_contains_pointwise_for_smooth_paths() {
        let grid = unit_grid(40);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let paths = gp_paths(&grid, 1000, &mut rng);
        let bands = credible_bands(&paths, grid.len(), 0.95).unwrap();
        for g in 0..grid.len() {
            assert!(bands.simultaneous_lo[g] <= bands.pointwise_lo[g]);
            assert!(bands.simultaneous_hi[g] >= bands.pointwise_hi[g]);
            assert!(bands.pointwise_lo[g] <= bands.mean[g] && bands.mean[g] <= bands.pointwise_hi[g]);
        }
    }

    #[test]
    fn simultaneous_coverage_on_gaussian_process() {
        // Truth and posterior draws share the GP law, so the band should cover
        // a fresh path with probability close to the level.
        let grid = unit_grid(30);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let reps = 500;
        let mut covered = 0;
        for _ in 0..reps {
            let draws = gp_paths(&grid, 400, &mut rng);
            let truth = gp_paths(&grid, 1, &mut rng);
            let bands = credible_bands(&draws, grid.len(), 0.95).unwrap();
            let inside = truth
                .iter()
                .enumerate()
                .all(|(g, v)| bands.simultaneous_lo[g] <= *v && *v <= bands.simultaneous_hi[g]);
            covered += inside as usize;
        }
        let rate = covered as f64 / reps as f64;
        assert!(rate >= 0.90, "coverage {rate}");
    }

    #[test]
    fn compute_effect_shapes_and_centering() {
        let bs = bases(&[5, 4, 6]);
        let draws: Vec<f64> = (0..120).flat_map(|s| random_b(120, 100 + s)).collect();
        let main = compute_effect(&draws, &bs, EffectTerm::Main { j: 1 }, vec![unit_grid(25)], 0.9, false).unwrap();
        assert_eq!(main.num_draws(), 120);
        assert_eq!(main.reduced_len(), 4);
        assert_eq!(main.bands.mean.len(), 25);
        let inter = compute_effect(
            &draws,
            &bs,
            EffectTerm::Interaction { j: 2, k: 0 },
            vec![unit_grid(7), unit_grid(9)],
            0.9,
            true,
        )
        .unwrap();
        assert_eq!(inter.reduced_len(), 30);
        assert_eq!(inter.bands.mean.len(), 63);
        // the centered surface of the first draw integrates to zero
        let c0 = &inter.coef_samples[..30];
        let mut total = 0.0;
        let m = 300;
        for u in 0..m {
            for v in 0..m {
                let (a, e) = ((u as f64 + 0.5) / m as f64, (v as f64 + 0.5) / m as f64);
                let ra = inter.bases[0].eval_dense(a).unwrap();
                let re = inter.bases[1].eval_dense(e).unwrap();
                for (i, x) in ra.iter().enumerate() {
                    for (k, y) in re.iter().enumerate() {
                        total += x * y * c0[i * re.len() + k];
                    }
                }
            }
        }
        let level = total_integral(c0, &inter.bases).unwrap();
        assert!((total / (m * m) as f64 - level).abs() < 1e-5);
        let few = compute_effect(&draws[..50 * 120], &bs, EffectTerm::Main { j: 1 }, vec![vec![0.5]], 0.9, false);
        assert!(matches!(few, Err(Error::InsufficientSamples { needed: 100, got: 50 })));
    }

    proptest! {
        #[test]
        fn linearity(seed in 0u64..1000, j in 0usize..3) {
            let bs = bases(&[4, 5, 6]);
            let (b1, b2) = (random_b(120, seed), random_b(120, seed + 7));
            let sum: Vec<f64> = b1.iter().zip(&b2).map(|(x, y)| x + y).collect();
            let lhs = main_effect_coefs(&sum, j, &bs).unwrap();
            let r1 = main_effect_coefs(&b1, j, &bs).unwrap();
            let r2 = main_effect_coefs(&b2, j, &bs).unwrap();
            for k in 0..lhs.len() {
                prop_assert!((lhs[k] - r1[k] - r2[k]).abs() < 1e-12);
            }
        }

        #[test]
        fn full_contraction_is_order_free(seed in 0u64..1000) {
            let bs = bases(&[4, 5, 6]);
            let b = random_b(120, seed);
            let base = total_integral(&b, &bs).unwrap();
            for j in 0..3 {
                let c = main_effect_coefs(&b, j, &bs).unwrap();
                let via: f64 = c.iter().zip(bs[j].averages()).map(|(x, y)| x * y).sum();
                prop_assert!((via - base).abs() < 1e-12);
            }
        }
    }
}
