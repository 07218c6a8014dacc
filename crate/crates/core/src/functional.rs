//! Functional representation of a mixed-bias parameter.
//!
//! A parameter chi with the mixed bias property has an (uncentered)
//! influence function of the form
//!
//! ```text
//!   S_ab * a(Z) * b(Z) + m1(O, a) + m2(O, b) + S_0
//! ```
//!
//! where `S_ab`, `S_0` are known statistics of the observation `O`, the maps
//! `h -> m1(O, h)` and `h -> m2(O, h)` are known and linear in `h`, and `a`,
//! `b` are the two nuisance functions of the covariates `Z`.  A
//! [`ProblemSpec`] packages the four components together with the covariate
//! selection and metadata; everything here is immutable after construction
//! and safe to evaluate concurrently.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use arrayvec::ArrayVec;

use crate::dataset::Table;
use crate::error::{Error, Result};
use crate::sieve::FeatureMap;

/// Maximum covariate dimension; z-vectors live on the stack.
pub const MAX_Z_DIM: usize = 8;

pub type ZVec = ArrayVec<f64, MAX_Z_DIM>;

/// A known real-valued statistic of one observation row.
pub type Statistic = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A map (O, h) -> real, linear in the function h.
pub type LinearMap = Arc<dyn Fn(&[f64], &NuisanceFn) -> Result<f64> + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    A,
    B,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::A => write!(f, "a"),
            Side::B => write!(f, "b"),
        }
    }
}

/// Declared sign of E(S_ab | Z), used to orient the nuisance loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SabSign {
    Positive,
    Negative,
}

impl SabSign {
    pub fn factor(self) -> f64 {
        match self {
            SabSign::Positive => 1.0,
            SabSign::Negative => -1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            SabSign::Positive => 1,
            SabSign::Negative => -1,
        }
    }
}

/// A data-consistency predicate attached to a spec (e.g. `d = 0` forces
/// `dy = 0` when the observed outcome is stored as the product DY).
#[derive(Clone)]
pub struct RowCheck {
    pub description: String,
    pub check: Arc<dyn Fn(&[f64]) -> bool + Send + Sync>,
}

/// An evaluable nuisance function of the covariates.
#[derive(Clone)]
pub enum NuisanceFn {
    Constant(f64),
    /// Closed-form rule.
    Analytic(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
    /// Values per covariate stratum; evaluation off the stored strata is an
    /// error rather than a silent NaN.
    Table(Arc<ZTable>),
    /// Dot product of coefficients with a feature map.
    Sieve {
        coeffs: Arc<Vec<f64>>,
        features: Arc<FeatureMap>,
    },
    /// `-num/den` (or `num/den`), with the denominator clamped away from
    /// zero at `trim`.
    Ratio {
        num: Box<NuisanceFn>,
        den: Box<NuisanceFn>,
        trim: f64,
        negate: bool,
    },
    /// `intercept + sum_i coeff_i * f_i`; covers perturbations and the
    /// linear combinations used by the linearity checker.
    Affine {
        intercept: f64,
        terms: Vec<(f64, NuisanceFn)>,
    },
}

/// Function values keyed by the exact bit patterns of the z-vector.
#[derive(Clone, Debug, Default)]
pub struct ZTable {
    values: BTreeMap<Vec<u64>, f64>,
}

pub(crate) fn zkey(z: &[f64]) -> Vec<u64> {
    z.iter().map(|v| v.to_bits()).collect()
}

impl ZTable {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Vec<f64>, f64)>) -> Self {
        let mut values = BTreeMap::new();
        for (z, v) in pairs {
            values.insert(zkey(&z), v);
        }
        ZTable { values }
    }

    pub fn get(&self, z: &[f64]) -> Option<f64> {
        self.values.get(&zkey(z)).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl NuisanceFn {
    pub fn constant(c: f64) -> Self {
        NuisanceFn::Constant(c)
    }

    pub fn analytic(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        NuisanceFn::Analytic(Arc::new(f))
    }

    pub fn table(pairs: impl IntoIterator<Item = (Vec<f64>, f64)>) -> Self {
        NuisanceFn::Table(Arc::new(ZTable::from_pairs(pairs)))
    }

    /// `base + scale * direction`.
    pub fn perturbed(base: NuisanceFn, direction: NuisanceFn, scale: f64) -> Self {
        NuisanceFn::Affine {
            intercept: 0.0,
            terms: vec![(1.0, base), (scale, direction)],
        }
    }

    /// `alpha1 * h1 + alpha2 * h2`.
    pub fn combine(alpha1: f64, h1: NuisanceFn, alpha2: f64, h2: NuisanceFn) -> Self {
        NuisanceFn::Affine {
            intercept: 0.0,
            terms: vec![(alpha1, h1), (alpha2, h2)],
        }
    }

    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        match self {
            NuisanceFn::Constant(c) => Ok(*c),
            NuisanceFn::Analytic(f) => Ok(f(z)),
            NuisanceFn::Table(t) => t.get(z).ok_or_else(|| Error::OffSupport { z: z.to_vec() }),
            NuisanceFn::Sieve { coeffs, features } => {
                let mut buf = Vec::with_capacity(coeffs.len());
                features.eval(z, &mut buf);
                Ok(buf.iter().zip(coeffs.iter()).map(|(x, c)| x * c).sum())
            }
            NuisanceFn::Ratio {
                num,
                den,
                trim,
                negate,
            } => {
                let n = num.eval(z)?;
                let mut d = den.eval(z)?;
                if d.abs() < *trim {
                    d = if d < 0.0 { -*trim } else { *trim };
                }
                let r = n / d;
                Ok(if *negate { -r } else { r })
            }
            NuisanceFn::Affine { intercept, terms } => {
                let mut acc = *intercept;
                for (c, f) in terms {
                    acc += c * f.eval(z)?;
                }
                Ok(acc)
            }
        }
    }
}

impl fmt::Debug for NuisanceFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NuisanceFn::Constant(c) => write!(f, "Constant({c})"),
            NuisanceFn::Analytic(_) => write!(f, "Analytic"),
            NuisanceFn::Table(t) => write!(f, "Table({} strata)", t.len()),
            NuisanceFn::Sieve { coeffs, .. } => write!(f, "Sieve(p={})", coeffs.len()),
            NuisanceFn::Ratio { trim, .. } => write!(f, "Ratio(trim={trim})"),
            NuisanceFn::Affine { terms, .. } => write!(f, "Affine({} terms)", terms.len()),
        }
    }
}

/// One mixed-bias parameter: the four influence-function components plus
/// covariate selection and metadata.
#[derive(Clone)]
pub struct ProblemSpec {
    name: String,
    columns: Vec<String>,
    covariates: Vec<String>,
    z_indices: Vec<usize>,
    s_ab: Statistic,
    s0: Statistic,
    m1: LinearMap,
    m2: LinearMap,
    q: Option<Statistic>,
    separable: Option<(Statistic, Statistic)>,
    sab_sign: SabSign,
    trivial_mean: bool,
    row_checks: Vec<RowCheck>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("columns", &self.columns)
            .field("covariates", &self.covariates)
            .field("sab_sign", &self.sab_sign)
            .field("has_q", &self.q.is_some())
            .field("separable", &self.separable.is_some())
            .finish()
    }
}

impl ProblemSpec {
    pub fn builder(name: &str, columns: &[&str], covariates: &[&str]) -> SpecBuilder {
        SpecBuilder {
            name: name.to_string(),
            columns: columns.iter().map(|s| s.to_string()).collect(),
            covariates: covariates.iter().map(|s| s.to_string()).collect(),
            s_ab: None,
            s0: None,
            m1: None,
            m2: None,
            q: None,
            separable: None,
            sab_sign: SabSign::Negative,
            trivial_mean: false,
            row_checks: Vec::new(),
        }
    }

    /// The degenerate spec for a plain mean `chi = E[f(O)]`: all nuisance
    /// machinery vanishes and the influence function is `f(O) - chi`.
    pub fn mean_of(
        name: &str,
        columns: &[&str],
        covariates: &[&str],
        stat: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<ProblemSpec> {
        let mut b = ProblemSpec::builder(name, columns, covariates);
        b.trivial_mean = true;
        b.s_ab(|_| 0.0)
            .s0(stat)
            .m1_zero()
            .m2_zero()
            .sab_sign(SabSign::Positive)
            .build()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn covariates(&self) -> &[String] {
        &self.covariates
    }

    pub fn z_indices(&self) -> &[usize] {
        &self.z_indices
    }

    pub fn sab_sign(&self) -> SabSign {
        self.sab_sign
    }

    pub fn q(&self) -> Option<&Statistic> {
        self.q.as_ref()
    }

    pub fn separable(&self) -> Option<(&Statistic, &Statistic)> {
        self.separable.as_ref().map(|(a, b)| (a, b))
    }

    pub fn is_trivial_mean(&self) -> bool {
        self.trivial_mean
    }

    pub fn row_checks(&self) -> &[RowCheck] {
        &self.row_checks
    }

    pub fn eval_s_ab(&self, row: &[f64]) -> f64 {
        (self.s_ab)(row)
    }

    pub fn eval_s0(&self, row: &[f64]) -> f64 {
        (self.s0)(row)
    }

    pub fn eval_m1(&self, row: &[f64], h: &NuisanceFn) -> Result<f64> {
        (self.m1)(row, h)
    }

    pub fn eval_m2(&self, row: &[f64], h: &NuisanceFn) -> Result<f64> {
        (self.m2)(row, h)
    }

    /// Extract the covariate vector from a spec-aligned row.
    pub fn zvec(&self, row: &[f64]) -> ZVec {
        self.z_indices.iter().map(|&i| row[i]).collect()
    }

    /// Check that `table` carries the spec's columns in the spec's order.
    pub fn check_aligned(&self, table: &Table) -> Result<()> {
        if table.columns() != self.columns.as_slice() {
            return Err(Error::InvalidData(format!(
                "table columns {:?} do not match spec `{}` columns {:?}; project first",
                table.columns(),
                self.name,
                self.columns
            )));
        }
        Ok(())
    }

    /// Select and order the spec's required columns out of `table`, failing
    /// on missing columns, non-finite values, and row-check violations.
    pub fn project(&self, table: &Table) -> Result<Table> {
        let projected = table.select(&self.columns)?;
        for (i, row) in projected.rows().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::InvalidData(format!(
                        "row {i}, column `{}`: non-finite value",
                        self.columns[j]
                    )));
                }
            }
            for rc in &self.row_checks {
                if !(rc.check)(row) {
                    return Err(Error::InvalidData(format!(
                        "row {i} violates `{}`",
                        rc.description
                    )));
                }
            }
        }
        Ok(projected)
    }
}

pub struct SpecBuilder {
    name: String,
    columns: Vec<String>,
    covariates: Vec<String>,
    s_ab: Option<Statistic>,
    s0: Option<Statistic>,
    m1: Option<LinearMap>,
    m2: Option<LinearMap>,
    q: Option<Statistic>,
    separable: Option<(Statistic, Statistic)>,
    sab_sign: SabSign,
    trivial_mean: bool,
    row_checks: Vec<RowCheck>,
}

impl SpecBuilder {
    pub fn s_ab(mut self, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.s_ab = Some(Arc::new(f));
        self
    }

    pub fn s0(mut self, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.s0 = Some(Arc::new(f));
        self
    }

    /// Declare `q` with `m2(O, h) = q(O) * h(Z)`; the map is derived.
    pub fn q(mut self, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.q = Some(Arc::new(f));
        self
    }

    /// Declare the separable form `m1 = s_a * h(Z)`, `m2 = s_b * h(Z)`;
    /// both maps are derived.
    pub fn separable(
        mut self,
        s_a: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        s_b: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.separable = Some((Arc::new(s_a), Arc::new(s_b)));
        self
    }

    pub fn m1(mut self, m: LinearMap) -> Self {
        self.m1 = Some(m);
        self
    }

    pub fn m2(mut self, m: LinearMap) -> Self {
        self.m2 = Some(m);
        self
    }

    pub fn m1_zero(mut self) -> Self {
        self.m1 = Some(Arc::new(|_: &[f64], _: &NuisanceFn| Ok(0.0)));
        self
    }

    pub fn m2_zero(mut self) -> Self {
        self.m2 = Some(Arc::new(|_: &[f64], _: &NuisanceFn| Ok(0.0)));
        self
    }

    pub fn sab_sign(mut self, s: SabSign) -> Self {
        self.sab_sign = s;
        self
    }

    pub fn row_check(
        mut self,
        description: &str,
        f: impl Fn(&[f64]) -> bool + Send + Sync + 'static,
    ) -> Self {
        self.row_checks.push(RowCheck {
            description: description.to_string(),
            check: Arc::new(f),
        });
        self
    }

    pub fn build(self) -> Result<ProblemSpec> {
        let z_indices: Vec<usize> = self
            .covariates
            .iter()
            .map(|c| {
                self.columns
                    .iter()
                    .position(|x| x == c)
                    .ok_or_else(|| Error::Config(format!("covariate `{c}` is not a column")))
            })
            .collect::<Result<_>>()?;
        if z_indices.len() > MAX_Z_DIM {
            return Err(Error::Config(format!(
                "at most {MAX_Z_DIM} covariates are supported"
            )));
        }
        if z_indices.is_empty() {
            return Err(Error::Config("at least one covariate is required".into()));
        }

        let s_ab = self
            .s_ab
            .ok_or_else(|| Error::Config("spec needs s_ab".into()))?;
        let s0 = self
            .s0
            .ok_or_else(|| Error::Config("spec needs s0".into()))?;

        let zi = z_indices.clone();
        let m1 = match (&self.m1, &self.separable) {
            (Some(m), _) => m.clone(),
            (None, Some((s_a, _))) => scaled_eval_map(s_a.clone(), zi.clone()),
            (None, None) => return Err(Error::Config("spec needs m1 or a separable form".into())),
        };
        let m2 = match (&self.m2, &self.q, &self.separable) {
            (Some(m), _, _) => m.clone(),
            (None, Some(q), _) => scaled_eval_map(q.clone(), zi.clone()),
            (None, None, Some((_, s_b))) => scaled_eval_map(s_b.clone(), zi),
            (None, None, None) => {
                return Err(Error::Config("spec needs m2, q, or a separable form".into()))
            }
        };

        Ok(ProblemSpec {
            name: self.name,
            columns: self.columns,
            covariates: self.covariates,
            z_indices,
            s_ab,
            s0,
            m1,
            m2,
            q: self.q,
            separable: self.separable,
            sab_sign: self.sab_sign,
            trivial_mean: self.trivial_mean,
            row_checks: self.row_checks,
        })
    }
}

/// The map `(O, h) -> h(Z)`.
pub fn eval_at_z_map(z_indices: Vec<usize>) -> LinearMap {
    Arc::new(move |row: &[f64], h: &NuisanceFn| {
        let z: ZVec = z_indices.iter().map(|&i| row[i]).collect();
        h.eval(&z)
    })
}

/// The map `(O, h) -> stat(O) * h(Z)`.
pub fn scaled_eval_map(stat: Statistic, z_indices: Vec<usize>) -> LinearMap {
    Arc::new(move |row: &[f64], h: &NuisanceFn| {
        let s = stat(row);
        if s == 0.0 {
            // Skips evaluating h where the weight vanishes, so table-backed
            // nuisances need only cover strata that actually contribute.
            return Ok(0.0);
        }
        let z: ZVec = z_indices.iter().map(|&i| row[i]).collect();
        Ok(s * h.eval(&z)?)
    })
}

fn finite(v: f64, component: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            component: component.to_string(),
        })
    }
}

/// The uncentered influence function
/// `S_ab a(Z) b(Z) + m1(O, a) + m2(O, b) + S_0` at one observation.
///
/// Subtracting the parameter value centers it; the sum itself depends on the
/// underlying law only through `a` and `b`.
pub fn uncentered_if(
    spec: &ProblemSpec,
    a: &NuisanceFn,
    b: &NuisanceFn,
    row: &[f64],
) -> Result<f64> {
    let z = spec.zvec(row);
    let sab = finite(spec.eval_s_ab(row), "s_ab")?;
    let s0 = finite(spec.eval_s0(row), "s0")?;
    let m1 = finite(spec.eval_m1(row, a)?, "m1")?;
    let m2 = finite(spec.eval_m2(row, b)?, "m2")?;
    // a and b enter the product term only through S_ab; skip them when S_ab
    // vanishes so the D = 0 rows of missing-data specs never touch b.
    let prod = if sab == 0.0 {
        0.0
    } else {
        let av = finite(a.eval(&z)?, "a")?;
        let bv = finite(b.eval(&z)?, "b")?;
        sab * av * bv
    };
    finite(prod + m1 + m2 + s0, "uncentered influence function")
}

/// Empirical mean of the uncentered influence function: the one-step
/// estimate of the parameter under the supplied nuisances.
pub fn one_step_value(
    spec: &ProblemSpec,
    a: &NuisanceFn,
    b: &NuisanceFn,
    data: &Table,
) -> Result<f64> {
    spec.check_aligned(data)?;
    if data.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut acc = 0.0;
    for (i, row) in data.rows().enumerate() {
        acc += uncentered_if(spec, a, b, row).map_err(|e| e.at_row(i))?;
    }
    Ok(acc / data.nrows() as f64)
}

/// Empirical mean of `m1(O, a) + S_0`: the plug-in estimate.
pub fn plugin_value(spec: &ProblemSpec, a: &NuisanceFn, data: &Table) -> Result<f64> {
    spec.check_aligned(data)?;
    if data.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut acc = 0.0;
    for (i, row) in data.rows().enumerate() {
        let m1 = spec
            .eval_m1(row, a)
            .and_then(|v| finite(v, "m1"))
            .map_err(|e| e.at_row(i))?;
        let s0 = finite(spec.eval_s0(row), "s0").map_err(|e| e.at_row(i))?;
        acc += m1 + s0;
    }
    Ok(acc / data.nrows() as f64)
}

/// Max absolute linearity residual of m1 and m2 over the sample:
/// `|m(o, a1 h1 + a2 h2) - a1 m(o, h1) - a2 m(o, h2)|`.
pub fn check_linearity(
    spec: &ProblemSpec,
    h1: &NuisanceFn,
    h2: &NuisanceFn,
    alpha1: f64,
    alpha2: f64,
    sample: &Table,
) -> Result<f64> {
    spec.check_aligned(sample)?;
    let combo = NuisanceFn::combine(alpha1, h1.clone(), alpha2, h2.clone());
    let mut worst = 0.0f64;
    for (i, row) in sample.rows().enumerate() {
        for m in [&spec.m1, &spec.m2] {
            let lhs = m(row, &combo).map_err(|e| e.at_row(i))?;
            let rhs = alpha1 * m(row, h1).map_err(|e| e.at_row(i))?
                + alpha2 * m(row, h2).map_err(|e| e.at_row(i))?;
            worst = worst.max((lhs - rhs).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Missing-at-random mean components over columns (dy, d, z).
    fn mar_spec() -> ProblemSpec {
        ProblemSpec::builder("mar", &["dy", "d", "z"], &["z"])
            .s_ab(|o| -o[1])
            .s0(|_| 0.0)
            .separable(|_| 1.0, |o| o[0])
            .q(|o| o[0])
            .sab_sign(SabSign::Negative)
            .build()
            .unwrap()
    }

    fn mar_table(rows: &[[f64; 3]]) -> Table {
        Table::from_rows(
            vec!["dy".into(), "d".into(), "z".into()],
            &rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn mar_uncentered_if_matches_aipw_arithmetic() {
        let spec = mar_spec();
        let a = NuisanceFn::table([(vec![0.0], 0.4), (vec![1.0], 0.8)]);
        let b = NuisanceFn::table([(vec![0.0], 2.0), (vec![1.0], 1.25)]);
        // o = (dy=1, d=1, z=1): -1*0.8*1.25 + 0.8 + 1.25 = 1.05
        let v = uncentered_if(&spec, &a, &b, &[1.0, 1.0, 1.0]).unwrap();
        assert!((v - 1.05).abs() < 1e-15, "{v}");
        // AIPW form a + d*(y-a)/e with e = 1/b
        let aipw = 0.8 + (1.0 - 0.8) / 0.8;
        assert!((v - aipw).abs() < 1e-12);
    }

    #[test]
    fn mar_uncentered_if_collapses_when_d_is_zero() {
        let spec = mar_spec();
        let a = NuisanceFn::table([(vec![0.0], 0.4), (vec![1.0], 0.8)]);
        // b deliberately undefined at z=0: the D = 0 row must not need it.
        let b = NuisanceFn::table([(vec![1.0], 1.25)]);
        let v = uncentered_if(&spec, &a, &b, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(v, 0.4);
    }

    #[test]
    fn one_step_on_single_row_equals_pointwise_value() {
        let spec = mar_spec();
        let a = NuisanceFn::constant(0.5);
        let b = NuisanceFn::constant(2.0);
        let t = mar_table(&[[1.0, 1.0, 1.0]]);
        let one = one_step_value(&spec, &a, &b, &t).unwrap();
        let point = uncentered_if(&spec, &a, &b, t.row(0)).unwrap();
        assert_eq!(one, point);
    }

    #[test]
    fn one_step_is_invariant_to_row_duplication() {
        let spec = mar_spec();
        let a = NuisanceFn::constant(0.5);
        let b = NuisanceFn::constant(2.0);
        let rows = [[1.0, 1.0, 1.0], [0.0, 0.0, 0.0], [0.0, 1.0, 1.0]];
        let single = mar_table(&rows);
        let mut doubled: Vec<[f64; 3]> = rows.to_vec();
        doubled.extend_from_slice(&rows);
        let double = mar_table(&doubled);
        let v1 = one_step_value(&spec, &a, &b, &single).unwrap();
        let v2 = one_step_value(&spec, &a, &b, &double).unwrap();
        assert!((v1 - v2).abs() < 1e-15);
    }

    #[test]
    fn plugin_with_b_zero_matches_one_step() {
        let spec = mar_spec();
        let a = NuisanceFn::constant(0.5);
        let b = NuisanceFn::constant(0.0);
        let t = mar_table(&[[1.0, 1.0, 1.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let plug = plugin_value(&spec, &a, &t).unwrap();
        let one = one_step_value(&spec, &a, &b, &t).unwrap();
        assert!((plug - one).abs() < 1e-15);
    }

    #[test]
    fn plugin_of_constant_offset_spec_is_the_constant() {
        let spec = ProblemSpec::mean_of("c", &["dy", "d", "z"], &["z"], |_| 3.25).unwrap();
        let t = mar_table(&[[1.0, 1.0, 1.0], [0.0, 0.0, 0.0]]);
        let a = NuisanceFn::constant(0.0);
        assert_eq!(plugin_value(&spec, &a, &t).unwrap(), 3.25);
    }

    #[test]
    fn linearity_residual_is_zero_for_separable_maps() {
        let spec = mar_spec();
        let t = mar_table(&[[1.0, 1.0, 1.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let h1 = NuisanceFn::analytic(|z| 1.0 + z[0]);
        let h2 = NuisanceFn::analytic(|z| z[0] * z[0] - 0.3);
        let r = check_linearity(&spec, &h1, &h2, 0.7, -1.3, &t).unwrap();
        assert!(r < 1e-15, "{r}");
        let r0 = check_linearity(&spec, &h1, &h2, 0.0, 0.0, &t).unwrap();
        assert_eq!(r0, 0.0);
    }

    #[test]
    fn missing_column_reported_by_name() {
        let spec = mar_spec();
        let t = Table::from_rows(vec!["dy".into(), "d".into()], &[vec![0.0, 0.0]]).unwrap();
        match spec.project(&t) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "z"),
            other => panic!("expected MissingColumn, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_nuisance_names_component() {
        let spec = mar_spec();
        let a = NuisanceFn::constant(f64::NAN);
        let b = NuisanceFn::constant(1.0);
        let err = uncentered_if(&spec, &a, &b, &[1.0, 1.0, 1.0]).unwrap_err();
        match err {
            Error::NonFinite { component } => assert_eq!(component, "a"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn row_errors_carry_the_row_index() {
        let spec = mar_spec();
        let a = NuisanceFn::table([(vec![1.0], 0.8)]); // undefined at z=0
        let b = NuisanceFn::constant(1.0);
        let t = mar_table(&[[1.0, 1.0, 1.0], [0.0, 1.0, 0.0]]);
        let err = one_step_value(&spec, &a, &b, &t).unwrap_err();
        match err {
            Error::AtRow { row, .. } => assert_eq!(row, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
