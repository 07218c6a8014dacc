//! K-fold cross-fitted one-step estimation.
//!
//! Nuisances for fold k are fit on the complement of fold k and never see
//! their own fold's rows.  The point estimate is the mean of the per-row
//! uncentered influence values, each row evaluated under its own fold's
//! nuisances; the standard error is the plug-in empirical one.
//!
//! Every estimator here returns a [`CrossFitOutput`]: the serializable
//! report plus the per-row contributions whose mean equals the point
//! estimate exactly.  Differences, ratios, and smooth transforms compose on
//! the contributions, so standard errors stay correct through arbitrary
//! chains.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::Table;
use crate::error::{Error, Result};
use crate::functional::{uncentered_if, NuisanceFn, ProblemSpec, Side};
use crate::learner::NuisanceLearner;
use crate::rng::{sub_rng, subseed};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FoldSummary {
    pub fold: usize,
    pub n: usize,
    pub estimate: f64,
    pub trimmed_a: usize,
    pub trimmed_b: usize,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct Diagnostics {
    pub trimmed_a: usize,
    pub trimmed_b: usize,
    pub l1_iters_a: usize,
    pub l1_iters_b: usize,
}

impl Diagnostics {
    fn merged(&self, other: &Diagnostics) -> Diagnostics {
        Diagnostics {
            trimmed_a: self.trimmed_a + other.trimmed_a,
            trimmed_b: self.trimmed_b + other.trimmed_b,
            l1_iters_a: self.l1_iters_a + other.l1_iters_a,
            l1_iters_b: self.l1_iters_b + other.l1_iters_b,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EstimateReport {
    pub spec: String,
    pub params: BTreeMap<String, f64>,
    pub n: usize,
    pub folds: usize,
    pub seed: u64,
    pub level: f64,
    pub estimate: f64,
    pub se: f64,
    pub ci: [f64; 2],
    pub per_fold: Vec<FoldSummary>,
    pub diagnostics: Diagnostics,
}

/// A report together with the per-row contributions and fold layout it was
/// computed from.
#[derive(Clone, Debug)]
pub struct CrossFitOutput {
    pub report: EstimateReport,
    /// Per-row values averaging exactly to `report.estimate`.
    pub contribs: Vec<f64>,
    pub fold_ids: Vec<usize>,
    /// One fitted pair per fold (for diagnostics such as exact L2 errors).
    pub fold_fits: Vec<(NuisanceFn, NuisanceFn)>,
}

/// The standard normal quantile at `(1 + level) / 2`.
pub fn z_critical(level: f64) -> Result<f64> {
    if !(0.0 < level && level < 1.0) {
        return Err(Error::InvalidParam(format!(
            "confidence level must be in (0, 1), got {level}"
        )));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(0.5 + level / 2.0))
}

/// Deterministic fold assignment: a seeded shuffle of row indices cut into
/// K blocks whose sizes differ by at most one.
pub fn split_folds(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || k > n {
        return Err(Error::Config(format!(
            "folds must satisfy 2 <= K <= n, got K = {k}, n = {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = sub_rng(seed, "folds", 0);
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rand::Rng::random_range(&mut rng, 0..=i);
        order.swap(i, j);
    }
    let mut ids = vec![0usize; n];
    let base = n / k;
    let extra = n % k;
    let mut pos = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &row in &order[pos..pos + size] {
            ids[row] = fold;
        }
        pos += size;
    }
    Ok(ids)
}

fn finalize(
    spec_name: &str,
    params: BTreeMap<String, f64>,
    contribs: Vec<f64>,
    fold_ids: Vec<usize>,
    k: usize,
    seed: u64,
    level: f64,
    diagnostics: Diagnostics,
    fold_trims: &[(usize, usize)],
    fold_fits: Vec<(NuisanceFn, NuisanceFn)>,
) -> Result<CrossFitOutput> {
    let n = contribs.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let nf = n as f64;
    let estimate = contribs.iter().sum::<f64>() / nf;
    let var = contribs.iter().map(|c| (c - estimate).powi(2)).sum::<f64>() / nf;
    let se = (var / nf).sqrt();
    let z = z_critical(level)?;
    let ci = [estimate - z * se, estimate + z * se];

    let mut per_fold = Vec::with_capacity(k);
    for fold in 0..k {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (c, &f) in contribs.iter().zip(&fold_ids) {
            if f == fold {
                sum += c;
                count += 1;
            }
        }
        let (ta, tb) = fold_trims.get(fold).copied().unwrap_or((0, 0));
        per_fold.push(FoldSummary {
            fold,
            n: count,
            estimate: if count > 0 { sum / count as f64 } else { f64::NAN },
            trimmed_a: ta,
            trimmed_b: tb,
        });
    }

    Ok(CrossFitOutput {
        report: EstimateReport {
            spec: spec_name.to_string(),
            params,
            n,
            folds: k,
            seed,
            level,
            estimate,
            se,
            ci,
            per_fold,
            diagnostics,
        },
        contribs,
        fold_ids,
        fold_fits,
    })
}

/// Cross-fitted one-step estimate of the spec's parameter.
pub fn cross_fit_estimate(
    data: &Table,
    spec: &ProblemSpec,
    learner_a: &dyn NuisanceLearner,
    learner_b: &dyn NuisanceLearner,
    k: usize,
    seed: u64,
    level: f64,
) -> Result<CrossFitOutput> {
    spec.check_aligned(data)?;
    let n = data.nrows();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let fold_ids = split_folds(n, k, seed)?;

    let mut fold_fits: Vec<(NuisanceFn, NuisanceFn)> = Vec::with_capacity(k);
    let mut fold_trims: Vec<(usize, usize)> = Vec::with_capacity(k);
    let mut diagnostics = Diagnostics::default();

    for fold in 0..k {
        if spec.is_trivial_mean() {
            fold_fits.push((NuisanceFn::constant(0.0), NuisanceFn::constant(0.0)));
            fold_trims.push((0, 0));
            continue;
        }
        let train_rows: Vec<usize> = (0..n).filter(|&i| fold_ids[i] != fold).collect();
        let train = data.subset(&train_rows);
        let fit_a = learner_a.fit(&train, spec, Side::A, subseed(seed, "learner-a", fold as u64))?;
        let fit_b = learner_b.fit(&train, spec, Side::B, subseed(seed, "learner-b", fold as u64))?;
        diagnostics = diagnostics.merged(&Diagnostics {
            trimmed_a: fit_a.diagnostics.trimmed,
            trimmed_b: fit_b.diagnostics.trimmed,
            l1_iters_a: fit_a.diagnostics.iterations,
            l1_iters_b: fit_b.diagnostics.iterations,
        });
        fold_trims.push((fit_a.diagnostics.trimmed, fit_b.diagnostics.trimmed));
        fold_fits.push((fit_a.func, fit_b.func));
    }

    let mut contribs = Vec::with_capacity(n);
    for (i, row) in data.rows().enumerate() {
        let (a, b) = &fold_fits[fold_ids[i]];
        contribs.push(uncentered_if(spec, a, b, row).map_err(|e| e.at_row(i))?);
    }

    finalize(
        spec.name(),
        BTreeMap::new(),
        contribs,
        fold_ids,
        k,
        seed,
        level,
        diagnostics,
        &fold_trims,
        fold_fits,
    )
}

fn check_compatible(a: &CrossFitOutput, b: &CrossFitOutput) -> Result<()> {
    if a.contribs.len() != b.contribs.len() || a.fold_ids != b.fold_ids {
        return Err(Error::Config(
            "estimates combine only when computed on the same rows and folds".into(),
        ));
    }
    Ok(())
}

fn compose(
    lhs: &CrossFitOutput,
    rhs: &CrossFitOutput,
    name: String,
    contribs: Vec<f64>,
) -> Result<CrossFitOutput> {
    let r = &lhs.report;
    finalize(
        &name,
        r.params.clone(),
        contribs,
        lhs.fold_ids.clone(),
        r.folds,
        r.seed,
        r.level,
        r.diagnostics.merged(&rhs.report.diagnostics),
        &r.per_fold
            .iter()
            .zip(&rhs.report.per_fold)
            .map(|(x, y)| (x.trimmed_a + y.trimmed_a, x.trimmed_b + y.trimmed_b))
            .collect::<Vec<_>>(),
        Vec::new(),
    )
}

/// The difference of two parameters estimated on the same sample and folds.
pub fn difference_estimate(lhs: &CrossFitOutput, rhs: &CrossFitOutput) -> Result<CrossFitOutput> {
    check_compatible(lhs, rhs)?;
    let contribs: Vec<f64> = lhs
        .contribs
        .iter()
        .zip(&rhs.contribs)
        .map(|(a, b)| a - b)
        .collect();
    compose(
        lhs,
        rhs,
        format!("{} - {}", lhs.report.spec, rhs.report.spec),
        contribs,
    )
}

/// The ratio of two parameters estimated on the same sample and folds.
/// Contributions are linearized: `p + [(num_i - p_num) - p (den_i - p_den)] / p_den`,
/// which keeps the mean exactly at the ratio point estimate.
pub fn ratio_estimate(num: &CrossFitOutput, den: &CrossFitOutput) -> Result<CrossFitOutput> {
    check_compatible(num, den)?;
    let p_num = num.report.estimate;
    let p_den = den.report.estimate;
    if p_den == 0.0 {
        return Err(Error::InvalidData(
            "ratio denominator estimate is exactly zero".into(),
        ));
    }
    let p = p_num / p_den;
    let contribs: Vec<f64> = num
        .contribs
        .iter()
        .zip(&den.contribs)
        .map(|(a, b)| p + ((a - p_num) - p * (b - p_den)) / p_den)
        .collect();
    compose(
        num,
        den,
        format!("({}) / ({})", num.report.spec, den.report.spec),
        contribs,
    )
}

/// Push the estimate through a smooth transform `g` with derivative
/// `g_prime`; the standard error scales by `|g'(point)|` and contributions
/// are linearized around the point.
pub fn delta_transform(
    out: &CrossFitOutput,
    g: impl Fn(f64) -> f64,
    g_prime: impl Fn(f64) -> f64,
) -> Result<CrossFitOutput> {
    let p = out.report.estimate;
    let gp = g_prime(p);
    let contribs: Vec<f64> = out.contribs.iter().map(|c| g(p) + gp * (c - p)).collect();
    let r = &out.report;
    finalize(
        &format!("g({})", r.spec),
        r.params.clone(),
        contribs,
        out.fold_ids.clone(),
        r.folds,
        r.seed,
        r.level,
        r.diagnostics.clone(),
        &r.per_fold
            .iter()
            .map(|f| (f.trimmed_a, f.trimmed_b))
            .collect::<Vec<_>>(),
        Vec::new(),
    )
}

impl CrossFitOutput {
    /// Rename the report (composition ops produce synthetic names).
    pub fn named(mut self, spec: &str, params: BTreeMap<String, f64>) -> Self {
        self.report.spec = spec.to_string();
        self.report.params = params;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::{one_step_value, SabSign};
    use crate::learner::FixedLearner;

    fn mar_spec() -> ProblemSpec {
        ProblemSpec::builder("mar", &["d", "dy", "z"], &["z"])
            .s_ab(|o| -o[0])
            .s0(|_| 0.0)
            .separable(|_| 1.0, |o| o[1])
            .q(|o| o[1])
            .sab_sign(SabSign::Negative)
            .build()
            .unwrap()
    }

    fn toy_table(n: usize) -> Table {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let z = f64::from(i % 2 == 0);
                let d = f64::from(i % 3 != 0);
                let dy = d * f64::from(i % 5 < 2);
                vec![d, dy, z]
            })
            .collect();
        Table::from_rows(vec!["d".into(), "dy".into(), "z".into()], &rows).unwrap()
    }

    #[test]
    fn fold_sizes_differ_by_at_most_one() {
        let ids = split_folds(5, 2, 7).unwrap();
        let mut counts = [0usize; 2];
        for id in &ids {
            counts[*id] += 1;
        }
        counts.sort_unstable();
        assert_eq!(counts, [2, 3]);

        let ids = split_folds(4, 2, 7).unwrap();
        let c0 = ids.iter().filter(|&&i| i == 0).count();
        assert_eq!(c0, 2);
    }

    #[test]
    fn fold_assignment_is_deterministic() {
        assert_eq!(split_folds(101, 5, 33).unwrap(), split_folds(101, 5, 33).unwrap());
        assert_ne!(split_folds(101, 5, 33).unwrap(), split_folds(101, 5, 34).unwrap());
    }

    #[test]
    fn k_out_of_range_is_an_error() {
        assert!(split_folds(5, 1, 0).is_err());
        assert!(split_folds(5, 6, 0).is_err());
    }

    #[test]
    fn oracle_learners_reproduce_one_step_for_any_k() {
        let spec = mar_spec();
        let data = toy_table(60);
        let a = NuisanceFn::table([(vec![0.0], 0.3), (vec![1.0], 0.5)]);
        let b = NuisanceFn::table([(vec![0.0], 1.4), (vec![1.0], 1.9)]);
        let la = FixedLearner::new(a.clone());
        let lb = FixedLearner::new(b.clone());
        let expected = one_step_value(&spec, &a, &b, &data).unwrap();
        for k in [2, 3, 5] {
            for seed in [0u64, 99] {
                let out = cross_fit_estimate(&data, &spec, &la, &lb, k, seed, 0.95).unwrap();
                assert_eq!(out.report.estimate, expected, "k={k} seed={seed}");
            }
        }
    }

    #[test]
    fn contributions_average_to_the_point_estimate() {
        let spec = mar_spec();
        let data = toy_table(37);
        let la = FixedLearner::new(NuisanceFn::constant(0.4));
        let lb = FixedLearner::new(NuisanceFn::constant(1.5));
        let out = cross_fit_estimate(&data, &spec, &la, &lb, 3, 5, 0.9).unwrap();
        let mean = out.contribs.iter().sum::<f64>() / out.contribs.len() as f64;
        assert!((mean - out.report.estimate).abs() < 1e-15);
        // fold means, weighted by size, also average to the point
        let weighted: f64 = out
            .report
            .per_fold
            .iter()
            .map(|f| f.estimate * f.n as f64)
            .sum::<f64>()
            / out.report.n as f64;
        assert!((weighted - out.report.estimate).abs() < 1e-12);
        assert!(out.report.ci[0] <= out.report.estimate && out.report.estimate <= out.report.ci[1]);
    }

    #[test]
    fn difference_of_identical_outputs_is_zero_with_zero_se() {
        let spec = mar_spec();
        let data = toy_table(24);
        let la = FixedLearner::new(NuisanceFn::constant(0.4));
        let lb = FixedLearner::new(NuisanceFn::constant(1.5));
        let out = cross_fit_estimate(&data, &spec, &la, &lb, 2, 1, 0.95).unwrap();
        let diff = difference_estimate(&out, &out).unwrap();
        assert_eq!(diff.report.estimate, 0.0);
        assert_eq!(diff.report.se, 0.0);
    }

    #[test]
    fn delta_transform_algebra() {
        let spec = mar_spec();
        let data = toy_table(24);
        let la = FixedLearner::new(NuisanceFn::constant(0.4));
        let lb = FixedLearner::new(NuisanceFn::constant(1.5));
        let out = cross_fit_estimate(&data, &spec, &la, &lb, 2, 1, 0.95).unwrap();

        let ident = delta_transform(&out, |x| x, |_| 1.0).unwrap();
        assert_eq!(ident.report.estimate, out.report.estimate);
        assert_eq!(ident.report.se, out.report.se);

        let doubled = delta_transform(&out, |x| 2.0 * x, |_| 2.0).unwrap();
        assert!((doubled.report.se - 2.0 * out.report.se).abs() < 1e-15);

        let squared = delta_transform(&out, |x| x * x, |x| 2.0 * x).unwrap();
        let expect = (2.0 * out.report.estimate).abs() * out.report.se;
        assert!((squared.report.se - expect).abs() < 1e-15);
    }

    #[test]
    fn ratio_contributions_center_exactly() {
        let spec = mar_spec();
        let data = toy_table(30);
        let la = FixedLearner::new(NuisanceFn::constant(0.4));
        let lb = FixedLearner::new(NuisanceFn::constant(1.5));
        let out1 = cross_fit_estimate(&data, &spec, &la, &lb, 2, 1, 0.95).unwrap();
        let mean_d = ProblemSpec::mean_of("mean_d", &["d", "dy", "z"], &["z"], |o| o[0]).unwrap();
        let out2 = cross_fit_estimate(&data, &mean_d, &la, &lb, 2, 1, 0.95).unwrap();
        let ratio = ratio_estimate(&out1, &out2).unwrap();
        let mean = ratio.contribs.iter().sum::<f64>() / ratio.contribs.len() as f64;
        assert!((mean - ratio.report.estimate).abs() < 1e-14);
        assert!(
            (ratio.report.estimate - out1.report.estimate / out2.report.estimate).abs() < 1e-15
        );
    }

    #[test]
    fn z_critical_level() {
        assert!((z_critical(0.95).unwrap() - 1.959963984540054).abs() < 1e-9);
        assert!(z_critical(1.0).is_err());
    }
}
