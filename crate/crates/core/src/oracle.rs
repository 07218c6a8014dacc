//! Exact computation over finite-support laws.
//!
//! On a finite support every expectation is a weighted sum, every
//! conditional mean a ratio of stratum sums, and every Riesz representer is
//! recoverable from indicator functions, so each identity satisfied by a
//! mixed-bias parameter can be checked to machine precision:
//!
//! * the parameter value three ways (m1 route, m2 route, `-E[S_ab a b] + E[S_0]`);
//! * mean-zero of the influence function;
//! * the two functional moment equations;
//! * the product form of the one-step bias under perturbed nuisances;
//! * stationarity of the two nuisance loss functions;
//! * invariance of the uncentered influence function to the generating law
//!   once `a` and `b` are fixed.
//!
//! Zero-probability strata and vanishing `E(S_ab | Z)` are hard errors, not
//! NaNs.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Table;
use crate::error::{Error, Result};
use crate::functional::{
    uncentered_if, zkey, NuisanceFn, ProblemSpec, Side, Statistic, ZVec,
};

/// Tolerance for internal exactness cross-checks (Prop-style ratio route vs
/// representer route, probability normalization).
const EXACT_TOL: f64 = 1e-12;

/// A probability distribution with finite support over named coordinates.
#[derive(Clone, Debug)]
pub struct FiniteLaw {
    columns: Vec<String>,
    support: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LawJson {
    support: Vec<BTreeMap<String, f64>>,
    probs: Vec<f64>,
}

impl FiniteLaw {
    pub fn new(columns: Vec<String>, support: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        if support.len() != probs.len() {
            return Err(Error::InvalidLaw(format!(
                "{} support points but {} probabilities",
                support.len(),
                probs.len()
            )));
        }
        if support.is_empty() {
            return Err(Error::InvalidLaw("empty support".into()));
        }
        for (i, point) in support.iter().enumerate() {
            if point.len() != columns.len() {
                return Err(Error::InvalidLaw(format!(
                    "support point {i} has {} coordinates, expected {}",
                    point.len(),
                    columns.len()
                )));
            }
            if point.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidLaw(format!(
                    "support point {i} has a non-finite coordinate"
                )));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, point) in support.iter().enumerate() {
            if !seen.insert(zkey(point)) {
                return Err(Error::InvalidLaw(format!("support point {i} is duplicated")));
            }
        }
        let mut total = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidLaw(format!(
                    "probability {i} is {p}, must be finite and nonnegative"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > EXACT_TOL {
            return Err(Error::InvalidLaw(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(FiniteLaw {
            columns,
            support,
            probs,
        })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn support(&self) -> &[Vec<f64>] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: LawJson = serde_json::from_str(s)?;
        if raw.support.is_empty() {
            return Err(Error::InvalidLaw("empty support".into()));
        }
        let columns: Vec<String> = raw.support[0].keys().cloned().collect();
        let mut support = Vec::with_capacity(raw.support.len());
        for (i, point) in raw.support.iter().enumerate() {
            let keys: Vec<String> = point.keys().cloned().collect();
            if keys != columns {
                return Err(Error::InvalidLaw(format!(
                    "support point {i} has coordinates {keys:?}, expected {columns:?}"
                )));
            }
            support.push(point.values().copied().collect());
        }
        FiniteLaw::new(columns, support, raw.probs)
    }

    pub fn to_json_string(&self) -> String {
        let raw = LawJson {
            support: self
                .support
                .iter()
                .map(|p| {
                    self.columns
                        .iter()
                        .cloned()
                        .zip(p.iter().copied())
                        .collect()
                })
                .collect(),
            probs: self.probs.clone(),
        };
        serde_json::to_string_pretty(&raw).expect("law serialization cannot fail")
    }

    /// Restrict to the named columns, merging support points that become
    /// indistinguishable.
    pub fn project(&self, columns: &[String]) -> Result<FiniteLaw> {
        let idx: Vec<usize> = columns
            .iter()
            .map(|c| {
                self.columns
                    .iter()
                    .position(|x| x == c)
                    .ok_or_else(|| Error::MissingColumn(c.clone()))
            })
            .collect::<Result<_>>()?;
        let mut merged: BTreeMap<Vec<u64>, (Vec<f64>, f64)> = BTreeMap::new();
        for (point, &p) in self.support.iter().zip(&self.probs) {
            let proj: Vec<f64> = idx.iter().map(|&j| point[j]).collect();
            let e = merged.entry(zkey(&proj)).or_insert((proj, 0.0));
            e.1 += p;
        }
        let (support, probs): (Vec<_>, Vec<_>) = merged.into_values().unzip();
        FiniteLaw::new(columns.to_vec(), support, probs)
    }

    /// Project onto a spec's required columns and validate its row checks.
    pub fn project_for(&self, spec: &ProblemSpec) -> Result<FiniteLaw> {
        let law = self.project(spec.columns())?;
        for (i, point) in law.support.iter().enumerate() {
            for rc in spec.row_checks() {
                if !(rc.check)(point) {
                    return Err(Error::InvalidLaw(format!(
                        "support point {i} violates `{}`",
                        rc.description
                    )));
                }
            }
        }
        Ok(law)
    }

    /// Multiply the marginal of one coordinate by `tilt` and renormalize.
    /// Conditional laws given that coordinate are unchanged.
    pub fn reweight(&self, coord: &str, tilt: &dyn Fn(f64) -> f64) -> Result<FiniteLaw> {
        let j = self
            .columns
            .iter()
            .position(|c| c == coord)
            .ok_or_else(|| Error::MissingColumn(coord.to_string()))?;
        let weights: Vec<f64> = self
            .support
            .iter()
            .zip(&self.probs)
            .map(|(point, &p)| {
                let t = tilt(point[j]);
                if !t.is_finite() || t <= 0.0 {
                    return Err(Error::InvalidParam(format!(
                        "tilt({}) = {t} must be finite and positive",
                        point[j]
                    )));
                }
                Ok(p * t)
            })
            .collect::<Result<_>>()?;
        let total: f64 = weights.iter().sum();
        FiniteLaw::new(
            self.columns.clone(),
            self.support.clone(),
            weights.into_iter().map(|w| w / total).collect(),
        )
    }

    /// Draw `n` i.i.d. rows by inverse-CDF sampling.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Table {
        let mut cum = Vec::with_capacity(self.probs.len());
        let mut acc = 0.0;
        for &p in &self.probs {
            acc += p;
            cum.push(acc);
        }
        let w = self.columns.len();
        let mut data = Vec::with_capacity(n * w);
        for _ in 0..n {
            let u: f64 = rng.random();
            let k = cum.partition_point(|&c| c < u).min(self.support.len() - 1);
            data.extend_from_slice(&self.support[k]);
        }
        Table::new(self.columns.clone(), data).expect("law columns are consistent")
    }
}

/// E[f(O)] by enumeration.
pub fn expectation(law: &FiniteLaw, f: impl Fn(&[f64]) -> f64) -> Result<f64> {
    let mut acc = 0.0;
    for (point, &p) in law.support.iter().zip(&law.probs) {
        let v = f(point);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                component: "expectation integrand".into(),
            });
        }
        acc += p * v;
    }
    Ok(acc)
}

/// E[f(O)] for fallible integrands (linear-map evaluations).
pub fn expectation_res(law: &FiniteLaw, f: impl Fn(&[f64]) -> Result<f64>) -> Result<f64> {
    let mut acc = 0.0;
    for (point, &p) in law.support.iter().zip(&law.probs) {
        let v = f(point)?;
        if !v.is_finite() {
            return Err(Error::NonFinite {
                component: "expectation integrand".into(),
            });
        }
        acc += p * v;
    }
    Ok(acc)
}

/// E[f(O) | coords = value] as a ratio of stratum-weighted sums.
pub fn cond_mean(
    law: &FiniteLaw,
    f: impl Fn(&[f64]) -> f64,
    coords: &[usize],
    value: &[f64],
) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    let key = zkey(value);
    for (point, &p) in law.support.iter().zip(&law.probs) {
        let pv: Vec<u64> = coords.iter().map(|&j| point[j].to_bits()).collect();
        if pv == key {
            num += p * f(point);
            den += p;
        }
    }
    if den <= 0.0 {
        return Err(Error::ZeroProbabilityStratum {
            stratum: format!("{value:?}"),
        });
    }
    Ok(num / den)
}

/// Distinct values of the given coordinates with their probabilities,
/// ordered by bit pattern.
pub fn strata(law: &FiniteLaw, coords: &[usize]) -> Vec<(Vec<f64>, f64)> {
    let mut acc: BTreeMap<Vec<u64>, (Vec<f64>, f64)> = BTreeMap::new();
    for (point, &p) in law.support.iter().zip(&law.probs) {
        let v: Vec<f64> = coords.iter().map(|&j| point[j]).collect();
        let e = acc.entry(zkey(&v)).or_insert((v, 0.0));
        e.1 += p;
    }
    acc.into_values().collect()
}

/// Which of the spec's two linear maps to represent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WhichMap {
    M1,
    M2,
}

/// The function R with `E[m(O, h)] = E[R(Z) h(Z)]` for all h on the support.
#[derive(Clone, Debug)]
pub struct RieszRepresenter {
    pub strata: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
    pub values: Vec<f64>,
}

impl RieszRepresenter {
    pub fn to_nuisance(&self) -> NuisanceFn {
        NuisanceFn::table(
            self.strata
                .iter()
                .cloned()
                .zip(self.values.iter().copied()),
        )
    }

    pub fn is_identically_zero(&self, tol: f64) -> bool {
        self.values.iter().all(|v| v.abs() <= tol)
    }
}

fn indicator_of(z0: &[f64]) -> NuisanceFn {
    let key = zkey(z0);
    NuisanceFn::analytic(move |z| if zkey(z) == key { 1.0 } else { 0.0 })
}

fn eval_map(spec: &ProblemSpec, which: WhichMap, row: &[f64], h: &NuisanceFn) -> Result<f64> {
    match which {
        WhichMap::M1 => spec.eval_m1(row, h),
        WhichMap::M2 => spec.eval_m2(row, h),
    }
}

/// Riesz representer of `h -> E[m(O, h)]`, computed from z-indicators:
/// `R(z) = E[m(O, 1_{Z=z})] / P(Z=z)`.  Indicators span all functions of Z
/// on a finite support, so the representer property holds for every h.
pub fn riesz(law: &FiniteLaw, spec: &ProblemSpec, which: WhichMap) -> Result<RieszRepresenter> {
    spec_law_aligned(law, spec)?;
    let zs = strata(law, spec.z_indices());
    let mut values = Vec::with_capacity(zs.len());
    for (z0, pz) in &zs {
        if *pz <= 0.0 {
            return Err(Error::ZeroProbabilityStratum {
                stratum: format!("{z0:?}"),
            });
        }
        let ind = indicator_of(z0);
        let e = expectation_res(law, |row| eval_map(spec, which, row, &ind))?;
        values.push(e / pz);
    }
    let (strata, probs): (Vec<_>, Vec<_>) = zs.into_iter().unzip();
    Ok(RieszRepresenter {
        strata,
        probs,
        values,
    })
}

fn spec_law_aligned(law: &FiniteLaw, spec: &ProblemSpec) -> Result<()> {
    if law.columns() != spec.columns() {
        return Err(Error::InvalidLaw(format!(
            "law columns {:?} do not match spec `{}` columns {:?}; project first",
            law.columns(),
            spec.name(),
            spec.columns()
        )));
    }
    Ok(())
}

/// E(S_ab | Z = z) for every covariate stratum.
pub fn sab_cond_means(law: &FiniteLaw, spec: &ProblemSpec) -> Result<Vec<(Vec<f64>, f64)>> {
    spec_law_aligned(law, spec)?;
    strata(law, spec.z_indices())
        .into_iter()
        .map(|(z, _)| {
            let es = cond_mean(law, |row| spec.eval_s_ab(row), spec.z_indices(), &z)?;
            Ok((z, es))
        })
        .collect()
}

/// The law-true nuisance pair: `a = -R2 / E(S_ab|Z)`, `b = -R1 / E(S_ab|Z)`.
///
/// When `q` is declared, the conditional-mean-ratio route
/// `a = -E(q|Z) / E(S_ab|Z)` is computed as well and must agree to machine
/// precision.  A spec whose maps and `S_ab` vanish identically (a plain
/// mean) has no nuisances; both are zero.
pub fn true_nuisances(law: &FiniteLaw, spec: &ProblemSpec) -> Result<(NuisanceFn, NuisanceFn)> {
    spec_law_aligned(law, spec)?;
    let r1 = riesz(law, spec, WhichMap::M1)?;
    let r2 = riesz(law, spec, WhichMap::M2)?;
    let es = sab_cond_means(law, spec)?;

    let degenerate_everywhere = es.iter().all(|(_, e)| e.abs() < EXACT_TOL);
    if degenerate_everywhere
        && r1.is_identically_zero(EXACT_TOL)
        && r2.is_identically_zero(EXACT_TOL)
    {
        return Ok((NuisanceFn::constant(0.0), NuisanceFn::constant(0.0)));
    }

    let mut a_pairs = Vec::with_capacity(es.len());
    let mut b_pairs = Vec::with_capacity(es.len());
    for (k, (z, e)) in es.iter().enumerate() {
        if e.abs() < EXACT_TOL {
            return Err(Error::DegenerateStratum {
                stratum: format!("{z:?}"),
            });
        }
        let a = -r2.values[k] / e;
        let b = -r1.values[k] / e;
        if let Some(q) = spec.q() {
            let a_ratio = -cond_mean(law, |row| q(row), spec.z_indices(), z)? / e;
            let resid = (a - a_ratio).abs();
            if resid > EXACT_TOL * (1.0 + a.abs()) {
                return Err(Error::IdentityViolation {
                    identity: format!(
                        "conditional-mean-ratio route for a(Z) at z = {z:?} (spec `{}`)",
                        spec.name()
                    ),
                    residual: resid,
                    tol: EXACT_TOL,
                });
            }
        }
        a_pairs.push((z.clone(), a));
        b_pairs.push((z.clone(), b));
    }
    Ok((NuisanceFn::table(a_pairs), NuisanceFn::table(b_pairs)))
}

/// The parameter value three ways; returns the m1-route value and the
/// largest pairwise discrepancy.
pub fn chi_exact(law: &FiniteLaw, spec: &ProblemSpec) -> Result<(f64, f64)> {
    let (a, b) = true_nuisances(law, spec)?;
    let e_s0 = expectation(law, |row| spec.eval_s0(row))?;
    let via_m1 = expectation_res(law, |row| spec.eval_m1(row, &a))? + e_s0;
    let via_m2 = expectation_res(law, |row| spec.eval_m2(row, &b))? + e_s0;
    let via_product = -expectation_res(law, |row| {
        let s = spec.eval_s_ab(row);
        if s == 0.0 {
            return Ok(0.0);
        }
        let z = spec.zvec(row);
        Ok(s * a.eval(&z)? * b.eval(&z)?)
    })? + e_s0;
    let resid = (via_m1 - via_m2)
        .abs()
        .max((via_m1 - via_product).abs())
        .max((via_m2 - via_product).abs());
    Ok((via_m1, resid))
}

/// Residual of the product bias identity at a candidate pair `(a', b')`:
/// `| E[uncentered IF(a', b')] - chi - E[S_ab (a'-a)(b'-b)] |`
/// where `(a, b)` are the law-true nuisances.
pub fn verify_mixed_bias(
    law: &FiniteLaw,
    spec: &ProblemSpec,
    a: &NuisanceFn,
    b: &NuisanceFn,
    a_prime: &NuisanceFn,
    b_prime: &NuisanceFn,
) -> Result<f64> {
    let (chi, _) = chi_exact(law, spec)?;
    let lhs = expectation_res(law, |row| uncentered_if(spec, a_prime, b_prime, row))? - chi;
    let rhs = expectation_res(law, |row| {
        let s = spec.eval_s_ab(row);
        if s == 0.0 {
            return Ok(0.0);
        }
        let z = spec.zvec(row);
        let da = a_prime.eval(&z)? - a.eval(&z)?;
        let db = b_prime.eval(&z)? - b.eval(&z)?;
        Ok(s * da * db)
    })?;
    Ok((lhs - rhs).abs())
}

/// Max residual of the two moment equations
/// `E[S_ab h b + m1(O, h)] = 0` and `E[S_ab h a + m2(O, h)] = 0`
/// over all z-indicators h (a spanning set on finite support).
pub fn verify_moments(law: &FiniteLaw, spec: &ProblemSpec) -> Result<f64> {
    let (a, b) = true_nuisances(law, spec)?;
    let mut worst = 0.0f64;
    for (z0, _) in strata(law, spec.z_indices()) {
        let h = indicator_of(&z0);
        let r1 = expectation_res(law, |row| {
            let z = spec.zvec(row);
            Ok(spec.eval_s_ab(row) * h.eval(&z)? * b.eval(&z)? + spec.eval_m1(row, &h)?)
        })?;
        let r2 = expectation_res(law, |row| {
            let z = spec.zvec(row);
            Ok(spec.eval_s_ab(row) * h.eval(&z)? * a.eval(&z)? + spec.eval_m2(row, &h)?)
        })?;
        worst = worst.max(r1.abs()).max(r2.abs());
    }
    Ok(worst)
}

/// Check that E(S_ab | Z) carries the declared sign on every stratum.
/// Plain-mean specs (everything identically zero) are exempt.
pub fn check_sab_sign(law: &FiniteLaw, spec: &ProblemSpec) -> Result<()> {
    if spec.is_trivial_mean() {
        return Ok(());
    }
    let sigma = spec.sab_sign().factor();
    for (z, e) in sab_cond_means(law, spec)? {
        if sigma * e <= 0.0 {
            return Err(Error::SignMismatch {
                stratum: format!("{z:?} (E(S_ab|Z) = {e})"),
                declared: spec.sab_sign().as_i8(),
            });
        }
    }
    Ok(())
}

/// The sign-adjusted population loss whose minimizer over functions of Z is
/// the nuisance: `sigma * E[S_ab h^2 / 2 + m(O, h)]` with `m = m2` for side
/// a and `m = m1` for side b.
pub fn population_loss(
    law: &FiniteLaw,
    spec: &ProblemSpec,
    side: Side,
    h: &NuisanceFn,
) -> Result<f64> {
    spec_law_aligned(law, spec)?;
    let sigma = spec.sab_sign().factor();
    let which = match side {
        Side::A => WhichMap::M2,
        Side::B => WhichMap::M1,
    };
    expectation_res(law, |row| {
        let z = spec.zvec(row);
        let hv = h.eval(&z)?;
        Ok(sigma * (spec.eval_s_ab(row) * hv * hv / 2.0 + eval_map(spec, which, row, h)?))
    })
}

/// Max central finite-difference directional derivative of the two losses
/// at the law-true nuisances, over the given directions.  Also requires the
/// loss not to decrease along any direction.
pub fn verify_loss_stationarity(
    law: &FiniteLaw,
    spec: &ProblemSpec,
    directions: &[NuisanceFn],
    eps: f64,
) -> Result<f64> {
    if eps <= 0.0 {
        return Err(Error::InvalidParam("step must be positive".into()));
    }
    check_sab_sign(law, spec)?;
    let (a, b) = true_nuisances(law, spec)?;
    let mut worst = 0.0f64;
    for (side, nuis) in [(Side::A, &a), (Side::B, &b)] {
        let at = population_loss(law, spec, side, nuis)?;
        for u in directions {
            let plus = NuisanceFn::perturbed(nuis.clone(), u.clone(), eps);
            let minus = NuisanceFn::perturbed(nuis.clone(), u.clone(), -eps);
            let fd = (population_loss(law, spec, side, &plus)?
                - population_loss(law, spec, side, &minus)?)
                / (2.0 * eps);
            worst = worst.max(fd.abs());

            let step = NuisanceFn::perturbed(nuis.clone(), u.clone(), 1.0);
            let away = population_loss(law, spec, side, &step)?;
            if away < at - 1e-12 {
                return Err(Error::IdentityViolation {
                    identity: format!("loss minimality for side {side} of `{}`", spec.name()),
                    residual: at - away,
                    tol: 1e-12,
                });
            }
        }
    }
    Ok(worst)
}

/// `| E[uncentered IF at the true nuisances] - chi |`.
pub fn verify_if_mean_zero(law: &FiniteLaw, spec: &ProblemSpec) -> Result<f64> {
    let (a, b) = true_nuisances(law, spec)?;
    let (chi, _) = chi_exact(law, spec)?;
    let mean = expectation_res(law, |row| uncentered_if(spec, &a, &b, row))?;
    Ok((mean - chi).abs())
}

/// Max pointwise difference of the uncentered influence function across two
/// laws that induce the same nuisance pair, evaluated on the first law's
/// support.
pub fn verify_invariance(
    law1: &FiniteLaw,
    law2: &FiniteLaw,
    spec: &ProblemSpec,
) -> Result<f64> {
    let (a1, b1) = true_nuisances(law1, spec)?;
    let (a2, b2) = true_nuisances(law2, spec)?;
    let mut worst = 0.0f64;
    for point in law1.support() {
        let v1 = uncentered_if(spec, &a1, &b1, point)?;
        let v2 = uncentered_if(spec, &a2, &b2, point)?;
        worst = worst.max((v1 - v2).abs());
    }
    Ok(worst)
}

/// Residual of the representer property for one function h:
/// `| E[m(O, h)] - sum_z P(z) R(z) h(z) |`.
pub fn representer_residual(
    law: &FiniteLaw,
    spec: &ProblemSpec,
    which: WhichMap,
    rep: &RieszRepresenter,
    h: &NuisanceFn,
) -> Result<f64> {
    let lhs = expectation_res(law, |row| eval_map(spec, which, row, h))?;
    let mut rhs = 0.0;
    for ((z, p), r) in rep.strata.iter().zip(&rep.probs).zip(&rep.values) {
        let zz: ZVec = z.iter().copied().collect();
        rhs += p * r * h.eval(&zz)?;
    }
    Ok((lhs - rhs).abs())
}

/// A random bounded function of Z (values uniform in [-1, 1] per stratum).
pub fn random_z_function(law: &FiniteLaw, spec: &ProblemSpec, rng: &mut impl Rng) -> NuisanceFn {
    let pairs: Vec<(Vec<f64>, f64)> = strata(law, spec.z_indices())
        .into_iter()
        .map(|(z, _)| (z, rng.random_range(-1.0..1.0)))
        .collect();
    NuisanceFn::table(pairs)
}

/// Convenience wrapper mirroring the estimation-error bias formula:
/// `E[S_ab (a_hat - a)(b_hat - b)]` with law-true `(a, b)`.
pub fn product_bias(
    law: &FiniteLaw,
    spec: &ProblemSpec,
    a_hat: &NuisanceFn,
    b_hat: &NuisanceFn,
) -> Result<f64> {
    let (a, b) = true_nuisances(law, spec)?;
    expectation_res(law, |row| {
        let s = spec.eval_s_ab(row);
        if s == 0.0 {
            return Ok(0.0);
        }
        let z = spec.zvec(row);
        Ok(s * (a_hat.eval(&z)? - a.eval(&z)?) * (b_hat.eval(&z)? - b.eval(&z)?))
    })
}

/// Exact L2(P_Z) distance between two functions of the covariates.
pub fn nuisance_l2_distance(
    law: &FiniteLaw,
    z_indices: &[usize],
    f: &NuisanceFn,
    g: &NuisanceFn,
) -> Result<f64> {
    let mut acc = 0.0;
    for (z, p) in strata(law, z_indices) {
        let zz: ZVec = z.iter().copied().collect();
        let d = f.eval(&zz)? - g.eval(&zz)?;
        acc += p * d * d;
    }
    Ok(acc.sqrt())
}
