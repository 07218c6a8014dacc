//! Canned finite laws used to validate catalog entries.
//!
//! Each law is small enough to enumerate but rich enough to make every
//! identity non-trivial: positive probability on all conditioning strata,
//! non-degenerate conditional means, and (where relevant) genuine
//! confounding.

use crate::error::Result;
use crate::oracle::FiniteLaw;

/// Composite Simpson nodes on [0, 1]; `n` must be odd and at least 3.
pub fn simpson_nodes(n: usize) -> Vec<f64> {
    (0..n).map(|j| j as f64 / (n - 1) as f64).collect()
}

/// Composite Simpson weights on [0, 1] matching [`simpson_nodes`].
pub fn simpson_weights(n: usize) -> Vec<f64> {
    let h = 1.0 / (n - 1) as f64;
    (0..n)
        .map(|j| {
            let c = if j == 0 || j == n - 1 {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect()
}

fn law(columns: &[&str], points: Vec<(Vec<f64>, f64)>) -> FiniteLaw {
    let (support, probs): (Vec<_>, Vec<_>) = points.into_iter().unzip();
    FiniteLaw::new(
        columns.iter().map(|s| s.to_string()).collect(),
        support,
        probs,
    )
    .expect("canned law is valid")
}

/// Binary missing-data law over (dy, d, z): Z ~ Bernoulli(pz1),
/// P(D=1|Z=z) = e[z], P(Y=1|D=1,Z=z) = p[z], with Y independent of D
/// given Z.  Only the observed vector (DY, D, Z) is represented.
pub fn binary_missingness(pz1: f64, e: [f64; 2], p: [f64; 2]) -> FiniteLaw {
    let mut pts = Vec::new();
    for z in 0..2usize {
        let pz = if z == 1 { pz1 } else { 1.0 - pz1 };
        let zf = z as f64;
        pts.push((vec![0.0, 0.0, zf], pz * (1.0 - e[z])));
        pts.push((vec![0.0, 1.0, zf], pz * e[z] * (1.0 - p[z])));
        pts.push((vec![1.0, 1.0, zf], pz * e[z] * p[z]));
    }
    law(&["dy", "d", "z"], pts)
}

/// The reference missing-at-random law: chi = 0.5 * 0.4 + 0.5 * 0.8 = 0.6.
pub fn l0() -> FiniteLaw {
    binary_missingness(0.5, [0.5, 0.8], [0.4, 0.8])
}

/// L0 with its Z-marginal tilted to (0.3, 0.7); conditionals unchanged, so
/// the nuisances are identical while chi moves to 0.68.
pub fn l0_z_tilted() -> Result<FiniteLaw> {
    l0().reweight("z", &|z| if z == 1.0 { 0.7 / 0.5 } else { 0.3 / 0.5 })
}

/// Fully observed (y, d, z) law with cov(D, Y | Z) != 0 on both strata.
pub fn cond_cov() -> FiniteLaw {
    // P(D=1|z) = (0.5, 0.8); P(Y=1|D=d, z): z=0 -> (0.3, 0.6), z=1 -> (0.4, 0.7)
    joint_binary([0.5, 0.8], [[0.3, 0.6], [0.4, 0.7]])
}

/// Variant with Y independent of D given Z: the expected conditional
/// covariance is exactly zero.
pub fn cond_cov_independent() -> FiniteLaw {
    joint_binary([0.5, 0.8], [[0.45, 0.45], [0.55, 0.55]])
}

fn joint_binary(e: [f64; 2], py: [[f64; 2]; 2]) -> FiniteLaw {
    let mut pts = Vec::new();
    for z in 0..2usize {
        let pz = 0.5;
        let zf = z as f64;
        for d in 0..2usize {
            let pd = if d == 1 { e[z] } else { 1.0 - e[z] };
            let p1 = py[z][d];
            for y in 0..2usize {
                let pyv = if y == 1 { p1 } else { 1.0 - p1 };
                pts.push((vec![d as f64, y as f64, zf], pz * pd * pyv));
            }
        }
    }
    law(&["d", "y", "z"], pts)
}

/// Treatment law over (y, d, z) with a homogeneous effect of 0.2:
/// P(Y=1|D=1,z) = (0.5, 0.9), P(Y=1|D=0,z) = (0.3, 0.7).
pub fn treatment_effect() -> FiniteLaw {
    joint_binary_yd([0.5, 0.8], [[0.3, 0.5], [0.7, 0.9]])
}

/// Same propensities with identical outcome laws in both arms: every
/// treatment contrast is exactly zero.
pub fn treatment_null() -> FiniteLaw {
    joint_binary_yd([0.5, 0.8], [[0.4, 0.4], [0.6, 0.6]])
}

fn joint_binary_yd(e: [f64; 2], py: [[f64; 2]; 2]) -> FiniteLaw {
    // py[z][d] = P(Y=1 | D=d, Z=z); columns (d, y, z)
    let mut pts = Vec::new();
    for z in 0..2usize {
        let pz = 0.5;
        for d in 0..2usize {
            let pd = if d == 1 { e[z] } else { 1.0 - e[z] };
            let p1 = py[z][d];
            for y in 0..2usize {
                let pyv = if y == 1 { p1 } else { 1.0 - p1 };
                pts.push((vec![d as f64, y as f64, z as f64], pz * pd * pyv));
            }
        }
    }
    law(&["d", "y", "z"], pts)
}

/// Grid-treatment law over (y, d, l): D lives on the Simpson grid with a
/// conditional distribution tilted by L, and P(Y=1|D,L) = 0.2 + 0.5 D + 0.2 L.
pub fn grid_treatment(levels: usize) -> FiniteLaw {
    let nodes = simpson_nodes(levels);
    let mut pts = Vec::new();
    for l in 0..2usize {
        let pl = 0.5;
        let lf = l as f64;
        let raw: Vec<f64> = nodes
            .iter()
            .map(|&u| 1.0 + 0.8 * lf * u + 0.5 * (1.0 - lf) * (1.0 - u))
            .collect();
        let total: f64 = raw.iter().sum();
        for (j, &u) in nodes.iter().enumerate() {
            let pd = raw[j] / total;
            let p1 = 0.2 + 0.5 * u + 0.2 * lf;
            pts.push((vec![u, lf, 1.0], pl * pd * p1));
            pts.push((vec![u, lf, 0.0], pl * pd * (1.0 - p1)));
        }
    }
    law(&["d", "l", "y"], pts)
}

/// Grid law with the L-marginal tilted; f(d | l) and E(Y | d, l) are
/// untouched, so both nuisances are preserved.
pub fn grid_treatment_l_tilted(levels: usize) -> Result<FiniteLaw> {
    grid_treatment(levels).reweight("l", &|l| if l == 1.0 { 1.4 } else { 0.6 })
}

/// Law for the ratio-of-conditional-means toy parameter over (y1, y2, z):
/// Z on {0, 0.5, 1}, Y1 in {0, 1}, Y2 in {0.5, 1.5} > 0, independent given Z.
pub fn toy_grid() -> FiniteLaw {
    toy_grid_with_association(0.0)
}

/// Same marginals and conditional means as [`toy_grid`] but with the joint
/// law of (Y1, Y2) given Z tilted toward the diagonal.  The nuisances and
/// the parameter are identical; only higher moments move.
pub fn toy_grid_association_tilted() -> FiniteLaw {
    toy_grid_with_association(0.05)
}

fn toy_grid_with_association(eps: f64) -> FiniteLaw {
    let zs = [0.0, 0.5, 1.0];
    let pz = [0.3, 0.4, 0.3];
    let mut pts = Vec::new();
    for (k, &z) in zs.iter().enumerate() {
        let p1 = 0.3 + 0.4 * z; // P(Y1 = 1 | z)
        let q1 = 0.4 + 0.2 * z; // P(Y2 = 1.5 | z)
        // independent base, then a mean-preserving association tilt
        let p11 = p1 * q1 + eps;
        let p10 = p1 * (1.0 - q1) - eps;
        let p01 = (1.0 - p1) * q1 - eps;
        let p00 = (1.0 - p1) * (1.0 - q1) + eps;
        pts.push((vec![1.0, 1.5, z], pz[k] * p11));
        pts.push((vec![1.0, 0.5, z], pz[k] * p10));
        pts.push((vec![0.0, 1.5, z], pz[k] * p01));
        pts.push((vec![0.0, 0.5, z], pz[k] * p00));
    }
    law(&["y1", "y2", "z"], pts)
}
