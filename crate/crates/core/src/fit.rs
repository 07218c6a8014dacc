//! Nuisance estimation from data.
//!
//! Two routes to a fitted nuisance:
//!
//! * [`fit_ratio_nuisance`] — regress the numerator statistic `q(O)` and the
//!   denominator statistic `S_ab` on the sieve and form
//!   `a_hat = -num_hat / den_hat`, clamping small denominators;
//! * [`fit_riesz_loss`] — minimize the empirical sign-adjusted loss
//!   `sigma * P_n[S_ab h^2 / 2 + m(O, h)]` over the sieve span (`m = m2`
//!   fits side a, `m = m1` fits side b).  No density or propensity model is
//!   ever needed; the linear map alone identifies the target.
//!
//! Least-squares systems are solved in closed form with the constant term
//! unpenalized; the l1 penalty uses proximal gradient descent with
//! backtracking.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dataset::Table;
use crate::error::{Error, Result};
use crate::functional::{NuisanceFn, ProblemSpec, Side, ZVec};
use crate::oracle::{nuisance_l2_distance, FiniteLaw};
use crate::sieve::{FeatureMap, Penalty, Sieve};

pub const L1_TOL: f64 = 1e-8;
pub const L1_MAX_ITERS: usize = 10_000;

#[derive(Clone, Debug, Default)]
pub struct FitDiagnostics {
    /// Final value of the fitted objective.
    pub objective: f64,
    /// Proximal-gradient iterations (0 for closed-form solves).
    pub iterations: usize,
    /// Training rows where the ratio denominator was clamped.
    pub trimmed: usize,
}

#[derive(Clone, Debug)]
pub struct FittedNuisance {
    pub func: NuisanceFn,
    pub diagnostics: FitDiagnostics,
}

/// Outcome of the proximal-gradient solver, with the objective trace kept
/// for monotonicity checks.
pub struct ProxOutcome {
    pub theta: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

/// Minimize `0.5 theta' G theta + c' theta + constant + lambda * |theta[1..]|_1`
/// by ISTA with backtracking line search.  The first coordinate (the sieve
/// constant) is unpenalized.
pub fn prox_grad_quadratic(
    g: &DMatrix<f64>,
    c: &DVector<f64>,
    constant: f64,
    lambda: f64,
) -> Result<ProxOutcome> {
    let p = c.len();
    let smooth = |theta: &DVector<f64>| 0.5 * (g * theta).dot(theta) + c.dot(theta) + constant;
    let penalty =
        |theta: &DVector<f64>| lambda * theta.iter().skip(1).map(|t| t.abs()).sum::<f64>();

    let mut theta = DVector::zeros(p);
    let mut f_val = smooth(&theta);
    let mut obj = f_val + penalty(&theta);
    let mut trace = vec![obj];
    let mut step = 1.0;
    let mut iterations = 0;

    for _ in 0..L1_MAX_ITERS {
        iterations += 1;
        let grad = g * &theta + c;
        // backtrack until the quadratic upper bound holds
        let (next, f_next) = loop {
            let mut cand = &theta - step * &grad;
            for j in 1..p {
                let t = cand[j];
                let thr = step * lambda;
                cand[j] = if t > thr {
                    t - thr
                } else if t < -thr {
                    t + thr
                } else {
                    0.0
                };
            }
            let diff = &cand - &theta;
            let f_cand = smooth(&cand);
            if f_cand <= f_val + grad.dot(&diff) + diff.norm_squared() / (2.0 * step) {
                break (cand, f_cand);
            }
            step *= 0.5;
            if step < 1e-20 {
                return Err(Error::Singular(
                    "proximal gradient cannot make progress; the quadratic form may be indefinite"
                        .into(),
                ));
            }
        };
        let obj_next = f_next + penalty(&next);
        let rel = (obj - obj_next).abs() / obj.abs().max(1.0);
        theta = next;
        f_val = f_next;
        obj = obj_next;
        trace.push(obj);
        if rel < L1_TOL {
            break;
        }
        step *= 1.2;
    }

    Ok(ProxOutcome {
        theta,
        objective: obj,
        iterations,
        trace,
    })
}

fn solve_penalized(
    mut g: DMatrix<f64>,
    rhs: DVector<f64>,
    lambda: f64,
) -> Result<DVector<f64>> {
    let p = g.nrows();
    for j in 1..p {
        g[(j, j)] += lambda;
    }
    match g.cholesky() {
        Some(ch) => Ok(ch.solve(&rhs)),
        None => Err(Error::Singular(
            "normal equations are not positive definite".into(),
        )),
    }
}

fn zvec_of(row: &[f64], z_indices: &[usize]) -> ZVec {
    z_indices.iter().map(|&i| row[i]).collect()
}

fn build_features(
    data: &Table,
    z_indices: &[usize],
    sieve: &Sieve,
) -> Result<(Arc<FeatureMap>, DMatrix<f64>)> {
    sieve.validate()?;
    if data.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let zrows: Vec<ZVec> = data.rows().map(|r| zvec_of(r, z_indices)).collect();
    let fm = FeatureMap::build(&sieve.basis, zrows.iter().map(|z| z.as_slice()), z_indices.len())?;
    let p = fm.len();
    if sieve.lambda == 0.0 && data.nrows() < p {
        return Err(Error::Config(format!(
            "{} rows cannot identify {p} unpenalized coefficients; shrink the basis, \
             use more data, or set lambda > 0",
            data.nrows()
        )));
    }
    let mut phi = DMatrix::zeros(data.nrows(), p);
    let mut buf = Vec::with_capacity(p);
    for (i, z) in zrows.iter().enumerate() {
        fm.eval(z, &mut buf);
        for (j, v) in buf.iter().enumerate() {
            phi[(i, j)] = *v;
        }
    }
    Ok((Arc::new(fm), phi))
}

fn sieve_nuisance(coeffs: DVector<f64>, features: Arc<FeatureMap>) -> Result<NuisanceFn> {
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite {
            component: "sieve coefficients".into(),
        });
    }
    Ok(NuisanceFn::Sieve {
        coeffs: Arc::new(coeffs.iter().copied().collect()),
        features,
    })
}

/// Least-squares (or lasso) regression of `target(O)` on the sieve over Z.
pub fn fit_conditional_mean(
    data: &Table,
    z_indices: &[usize],
    target: &dyn Fn(&[f64]) -> f64,
    sieve: &Sieve,
) -> Result<FittedNuisance> {
    let n = data.nrows();
    let (fm, phi) = build_features(data, z_indices, sieve)?;
    let y = DVector::from_iterator(n, data.rows().map(target));
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            component: "regression target".into(),
        });
    }
    let nf = n as f64;
    let g = phi.transpose() * &phi / nf;
    let xty = phi.transpose() * &y / nf;

    let (theta, objective, iterations) = match sieve.penalty {
        Penalty::L2 => {
            let theta = solve_penalized(g, xty, sieve.lambda)?;
            let resid = &y - &phi * &theta;
            (theta, resid.norm_squared() / nf, 0)
        }
        Penalty::L1 => {
            let c = -xty;
            let constant = y.norm_squared() / (2.0 * nf);
            let out = prox_grad_quadratic(&g, &c, constant, sieve.lambda)?;
            (out.theta, out.objective, out.iterations)
        }
    };

    Ok(FittedNuisance {
        func: sieve_nuisance(theta, fm)?,
        diagnostics: FitDiagnostics {
            objective,
            iterations,
            trimmed: 0,
        },
    })
}

/// The conditional-mean-ratio route to the `a` nuisance:
/// `a_hat = -q_hat(Z) / s_hat(Z)` where `q_hat` regresses `q(O)` and
/// `s_hat` regresses `S_ab`.  Denominator values inside `(-trim, trim)` are
/// clamped to `sign * trim`; clamps on the training rows are counted.
pub fn fit_ratio_nuisance(
    data: &Table,
    spec: &ProblemSpec,
    sieve_num: &Sieve,
    sieve_den: &Sieve,
    trim: f64,
) -> Result<FittedNuisance> {
    if !(trim > 0.0) {
        return Err(Error::InvalidParam(format!(
            "trim must be positive, got {trim}"
        )));
    }
    let q = spec
        .q()
        .ok_or_else(|| {
            Error::Config(format!(
                "spec `{}` declares no q statistic; the ratio route needs one",
                spec.name()
            ))
        })?
        .clone();
    spec.check_aligned(data)?;
    let z_indices = spec.z_indices();
    let num = fit_conditional_mean(data, z_indices, &|row| q(row), sieve_num)?;
    let den = fit_conditional_mean(data, z_indices, &|row| spec.eval_s_ab(row), sieve_den)?;

    let mut trimmed = 0;
    for row in data.rows() {
        let z = zvec_of(row, z_indices);
        if den.func.eval(&z)?.abs() < trim {
            trimmed += 1;
        }
    }

    Ok(FittedNuisance {
        func: NuisanceFn::Ratio {
            num: Box::new(num.func),
            den: Box::new(den.func),
            trim,
            negate: true,
        },
        diagnostics: FitDiagnostics {
            objective: num.diagnostics.objective,
            iterations: num.diagnostics.iterations + den.diagnostics.iterations,
            trimmed,
        },
    })
}

/// Fit one nuisance by minimizing the empirical sign-adjusted loss over the
/// sieve span.  With h = phi' theta the smooth part is
/// `0.5 theta' G theta + v' theta` for `G = sigma P_n[S_ab phi phi']` and
/// `v_j = sigma P_n[m(O, phi_j)]`, so the l2 solution solves
/// `(G + lambda J) theta = -v` with the constant unpenalized.
pub fn fit_riesz_loss(
    data: &Table,
    spec: &ProblemSpec,
    side: Side,
    sieve: &Sieve,
) -> Result<FittedNuisance> {
    spec.check_aligned(data)?;
    let n = data.nrows();
    let (fm, phi) = build_features(data, spec.z_indices(), sieve)?;
    let p = fm.len();
    let sigma = spec.sab_sign().factor();
    let nf = n as f64;

    let mut g = DMatrix::zeros(p, p);
    for (i, row) in data.rows().enumerate() {
        let w = sigma * spec.eval_s_ab(row) / nf;
        if w == 0.0 {
            continue;
        }
        let phi_i = phi.row(i);
        for j in 0..p {
            for k in j..p {
                g[(j, k)] += w * phi_i[j] * phi_i[k];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            g[(j, k)] = g[(k, j)];
        }
    }

    // v_j = sigma P_n[m(O, phi_j)]; linearity of m makes the basis expansion valid
    let mut v = DVector::zeros(p);
    for j in 0..p {
        let fm_j = Arc::clone(&fm);
        let basis_j = NuisanceFn::analytic(move |z| {
            let mut buf = Vec::with_capacity(fm_j.len());
            fm_j.eval(z, &mut buf);
            buf[j]
        });
        let mut acc = 0.0;
        for (i, row) in data.rows().enumerate() {
            let m = match side {
                Side::A => spec.eval_m2(row, &basis_j),
                Side::B => spec.eval_m1(row, &basis_j),
            }
            .map_err(|e| e.at_row(i))?;
            acc += m;
        }
        v[j] = sigma * acc / nf;
    }

    let (theta, objective, iterations) = match sieve.penalty {
        Penalty::L2 => {
            let theta = solve_penalized(g.clone(), -&v, sieve.lambda).map_err(|_| {
                Error::Singular(format!(
                    "sign-adjusted Gram matrix for side {side} of `{}` is not positive definite",
                    spec.name()
                ))
            })?;
            let obj = 0.5 * (&g * &theta).dot(&theta) + v.dot(&theta);
            (theta, obj, 0)
        }
        Penalty::L1 => {
            let out = prox_grad_quadratic(&g, &v, 0.0, sieve.lambda)?;
            (out.theta, out.objective, out.iterations)
        }
    };

    Ok(FittedNuisance {
        func: sieve_nuisance(theta, fm)?,
        diagnostics: FitDiagnostics {
            objective,
            iterations,
            trimmed: 0,
        },
    })
}

/// Exact L2(P_Z) distance between a fitted nuisance and a reference
/// function on a finite law.
pub fn evaluate_nuisance_l2_error(
    fitted: &NuisanceFn,
    truth: &NuisanceFn,
    law: &FiniteLaw,
    z_indices: &[usize],
) -> Result<f64> {
    nuisance_l2_distance(law, z_indices, fitted, truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::SabSign;
    use crate::rng::sub_rng;

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

    /// Exact L0 frequencies at n = 100: strata counts
    /// (d, dy, z): (0,0,0) x25, (1,0,0) x15, (1,1,0) x10,
    ///             (0,0,1) x10, (1,0,1) x8,  (1,1,1) x32.
    fn l0_frequencies() -> Table {
        let mut rows = Vec::new();
        let mut push = |row: [f64; 3], count: usize| {
            for _ in 0..count {
                rows.push(row.to_vec());
            }
        };
        push([0.0, 0.0, 0.0], 25);
        push([1.0, 0.0, 0.0], 15);
        push([1.0, 1.0, 0.0], 10);
        push([0.0, 0.0, 1.0], 10);
        push([1.0, 0.0, 1.0], 8);
        push([1.0, 1.0, 1.0], 32);
        Table::from_rows(vec!["d".into(), "dy".into(), "z".into()], &rows).unwrap()
    }

    #[test]
    fn constant_target_is_fit_exactly() {
        let data = l0_frequencies();
        let f = fit_conditional_mean(&data, &[2], &|_| 3.75, &Sieve::saturated()).unwrap();
        for z in [0.0, 1.0] {
            let v = f.func.eval(&[z]).unwrap();
            assert!((v - 3.75).abs() < 1e-10, "{v}");
        }
        assert!(f.diagnostics.objective < 1e-18);
    }

    #[test]
    fn saturated_fit_recovers_stratum_means() {
        let data = l0_frequencies();
        let f = fit_conditional_mean(&data, &[2], &|o| o[0], &Sieve::saturated()).unwrap();
        assert!((f.func.eval(&[0.0]).unwrap() - 0.5).abs() < 1e-10);
        assert!((f.func.eval(&[1.0]).unwrap() - 0.8).abs() < 1e-10);
    }

    #[test]
    fn fit_approaches_truth_on_samples() {
        let law = crate::oracle::FiniteLaw::new(
            vec!["d".into(), "dy".into(), "z".into()],
            vec![
                vec![0.0, 0.0, 0.0],
                vec![1.0, 0.0, 0.0],
                vec![1.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
                vec![1.0, 0.0, 1.0],
                vec![1.0, 1.0, 1.0],
            ],
            vec![0.25, 0.15, 0.10, 0.10, 0.08, 0.32],
        )
        .unwrap();
        let mut rng = sub_rng(9, "fit-sample", 0);
        let n = 40_000;
        let data = law.sample(n, &mut rng);
        let f = fit_conditional_mean(&data, &[2], &|o| o[0], &Sieve::saturated()).unwrap();
        // within 3 binomial standard errors of e(z)
        for (z, e) in [(0.0, 0.5), (1.0, 0.8)] {
            let n_z = data.rows().filter(|r| r[2] == z).count() as f64;
            let se = (e * (1.0 - e) / n_z).sqrt();
            let v = f.func.eval(&[z]).unwrap();
            assert!((v - e).abs() < 3.0 * se, "z={z}: {v} vs {e} (se {se})");
        }
    }

    #[test]
    fn ratio_fit_on_exact_frequencies() {
        let data = l0_frequencies();
        let spec = mar_spec();
        let sieve = Sieve::saturated();
        let f = fit_ratio_nuisance(&data, &spec, &sieve, &sieve, 0.01).unwrap();
        assert!((f.func.eval(&[0.0]).unwrap() - 0.4).abs() < 1e-10);
        assert!((f.func.eval(&[1.0]).unwrap() - 0.8).abs() < 1e-10);
        assert_eq!(f.diagnostics.trimmed, 0);
    }

    #[test]
    fn ratio_fit_with_all_respondents() {
        // d = 1 everywhere: denominator regression is -1, so
        // a_hat(z) = mean(dy | z)
        let rows: Vec<Vec<f64>> = vec![
            vec![1.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![1.0, 1.0, 1.0],
            vec![1.0, 1.0, 1.0],
        ];
        let data = Table::from_rows(vec!["d".into(), "dy".into(), "z".into()], &rows).unwrap();
        let spec = mar_spec();
        let sieve = Sieve::saturated();
        let f = fit_ratio_nuisance(&data, &spec, &sieve, &sieve, 0.01).unwrap();
        assert!((f.func.eval(&[0.0]).unwrap() - 0.5).abs() < 1e-10);
        assert!((f.func.eval(&[1.0]).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn trim_must_be_positive() {
        let data = l0_frequencies();
        let spec = mar_spec();
        let sieve = Sieve::saturated();
        match fit_ratio_nuisance(&data, &spec, &sieve, &sieve, 0.0) {
            Err(Error::InvalidParam(_)) => {}
            other => panic!("expected parameter error, got {other:?}"),
        }
    }

    #[test]
    fn riesz_loss_recovers_inverse_propensity_exactly() {
        let data = l0_frequencies();
        let spec = mar_spec();
        let f = fit_riesz_loss(&data, &spec, Side::B, &Sieve::saturated()).unwrap();
        assert!((f.func.eval(&[0.0]).unwrap() - 2.0).abs() < 1e-8);
        assert!((f.func.eval(&[1.0]).unwrap() - 1.25).abs() < 1e-8);
    }

    #[test]
    fn riesz_loss_side_a_matches_ratio_route() {
        let data = l0_frequencies();
        let spec = mar_spec();
        let sieve = Sieve::saturated();
        let via_loss = fit_riesz_loss(&data, &spec, Side::A, &sieve).unwrap();
        let via_ratio = fit_ratio_nuisance(&data, &spec, &sieve, &sieve, 1e-12).unwrap();
        for z in [0.0, 1.0] {
            let l = via_loss.func.eval(&[z]).unwrap();
            let r = via_ratio.func.eval(&[z]).unwrap();
            assert!((l - r).abs() < 1e-6, "z={z}: {l} vs {r}");
        }
    }

    #[test]
    fn riesz_loss_first_order_conditions() {
        // P_n[S_ab phi_j a_hat + m2(O, phi_j)] = 0 at the l2 solution
        let data = l0_frequencies();
        let spec = mar_spec();
        let fit = fit_riesz_loss(&data, &spec, Side::A, &Sieve::saturated()).unwrap();
        let n = data.nrows() as f64;
        for j in 0..2usize {
            let mut acc = 0.0;
            for row in data.rows() {
                let z = [row[2]];
                let phi_j = if j == 0 { 1.0 } else { f64::from(row[2] == 0.0) };
                let m2 = row[1] * phi_j; // q = dy
                acc += spec.eval_s_ab(row) * phi_j * fit.func.eval(&z).unwrap() + m2;
            }
            assert!((acc / n).abs() < 1e-8, "moment {j}: {}", acc / n);
        }
    }

    #[test]
    fn indefinite_gram_reports_conditioning_error() {
        // a single stratum with no respondents makes P_n[D phi phi']
        // singular under the saturated basis
        let rows: Vec<Vec<f64>> = vec![
            vec![0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0],
            vec![1.0, 1.0, 1.0],
            vec![0.0, 0.0, 1.0],
        ];
        let data = Table::from_rows(vec!["d".into(), "dy".into(), "z".into()], &rows).unwrap();
        let spec = mar_spec();
        match fit_riesz_loss(&data, &spec, Side::B, &Sieve::saturated()) {
            Err(Error::Singular(msg)) => assert!(msg.contains("side b"), "{msg}"),
            other => panic!("expected conditioning error, got {other:?}"),
        }
    }

    #[test]
    fn large_lambda_shrinks_penalized_coefficients() {
        let data = l0_frequencies();
        let sieve = Sieve {
            lambda: 1e9,
            ..Sieve::saturated()
        };
        let f = fit_conditional_mean(&data, &[2], &|o| o[1], &sieve).unwrap();
        // only the unpenalized constant survives: predictions collapse to a
        // single level
        let v0 = f.func.eval(&[0.0]).unwrap();
        let v1 = f.func.eval(&[1.0]).unwrap();
        assert!((v0 - v1).abs() < 1e-6, "{v0} vs {v1}");
    }

    #[test]
    fn l1_objective_is_monotone_and_matches_l2_at_zero_penalty() {
        let data = l0_frequencies();
        let spec = mar_spec();
        let sieve_l1 = Sieve::saturated().with_penalty(Penalty::L1);
        let f1 = fit_riesz_loss(&data, &spec, Side::B, &sieve_l1).unwrap();
        assert!((f1.func.eval(&[0.0]).unwrap() - 2.0).abs() < 1e-4);
        assert!((f1.func.eval(&[1.0]).unwrap() - 1.25).abs() < 1e-4);
        assert!(f1.diagnostics.iterations > 0);
    }

    #[test]
    fn prox_trace_is_non_increasing() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let c = DVector::from_row_slice(&[-1.0, 0.7]);
        let out = prox_grad_quadratic(&g, &c, 0.0, 0.05).unwrap();
        for w in out.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{:?}", w);
        }
    }

    #[test]
    fn unidentified_unpenalized_fit_is_a_config_error() {
        // 6 distinct strata from 3 rows: p > n with lambda = 0
        let rows: Vec<Vec<f64>> = vec![vec![0.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]];
        let data = Table::from_rows(vec!["d".into(), "dy".into(), "z".into()], &rows).unwrap();
        let sieve = Sieve::polynomial(3, false);
        match fit_conditional_mean(&data, &[2], &|o| o[0], &sieve) {
            Err(Error::Config(_)) => {}
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn l2_error_basics() {
        let law = crate::oracle::FiniteLaw::new(
            vec!["z".into()],
            vec![vec![0.0], vec![1.0]],
            vec![0.5, 0.5],
        )
        .unwrap();
        let truth = NuisanceFn::analytic(|z| z[0]);
        assert_eq!(
            evaluate_nuisance_l2_error(&truth, &truth, &law, &[0]).unwrap(),
            0.0
        );
        let shifted = NuisanceFn::perturbed(truth.clone(), NuisanceFn::constant(1.0), 0.25);
        let d = evaluate_nuisance_l2_error(&shifted, &truth, &law, &[0]).unwrap();
        assert!((d - 0.25).abs() < 1e-14);
    }
}
