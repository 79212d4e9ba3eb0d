//! Central finite-difference verification of analytic gradients.
//!
//! Run in 64-bit mode; 32-bit arithmetic drowns the differences in
//! rounding noise. The function under test must be deterministic — a
//! stochastic function (e.g. with dropout enabled) yields a meaningless
//! report.

use super::elem::Elem;
use super::param::Parameter;
use super::tensor::{backward, Tensor};

/// Worst observed deviation for one parameter.
#[derive(Debug, Clone)]
pub struct ParamReport {
    pub name: String,
    pub max_rel_err: f64,
    /// Coordinates actually probed (subsampled for large parameters).
    pub checked: usize,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamReport>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn failures(&self, tol: f64) -> Vec<&ParamReport> {
        self.params.iter().filter(|p| p.max_rel_err > tol).collect()
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.failures(tol).is_empty()
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for p in &self.params {
            writeln!(
                f,
                "{:<40} rel_err {:.3e} ({} coords; worst idx {}: analytic {:.6e}, numeric {:.6e})",
                p.name, p.max_rel_err, p.checked, p.worst_index, p.analytic, p.numeric
            )?;
        }
        Ok(())
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1.0)
}

/// Compare the analytic gradient of `f` with central differences
/// `(f(p+h) − f(p−h)) / 2h`, probing at most `max_coords` evenly spread
/// coordinates per parameter.
pub fn grad_check<T, F>(
    f: F,
    params: &[Parameter<T>],
    h: f64,
    max_coords: usize,
) -> GradCheckReport
where
    T: Elem,
    F: Fn() -> Tensor<T>,
{
    for p in params {
        p.zero_grad();
    }
    let loss = f();
    backward(&loss);
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad().iter().map(|g| g.as_f64()).collect())
        .collect();

    let step = T::from_f64(h);
    let mut reports = Vec::with_capacity(params.len());
    for (pi, p) in params.iter().enumerate() {
        let n = p.numel();
        let coords: Vec<usize> = if n <= max_coords {
            (0..n).collect()
        } else {
            (0..max_coords).map(|j| j * n / max_coords).collect()
        };

        let mut worst = ParamReport {
            name: p.name().to_string(),
            max_rel_err: 0.0,
            checked: coords.len(),
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for &idx in &coords {
            p.perturb(idx, step);
            let plus = f().item().as_f64();
            p.perturb(idx, -(step + step));
            let minus = f().item().as_f64();
            p.perturb(idx, step);

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[pi][idx];
            let e = rel_err(a, numeric);
            if e >= worst.max_rel_err {
                worst.max_rel_err = e;
                worst.worst_index = idx;
                worst.analytic = a;
                worst.numeric = numeric;
            }
        }
        reports.push(worst);
    }
    GradCheckReport { params: reports }
}

#[cfg(test)]
mod tests {
    use super::super::ops;
    use super::*;

    fn seeded_values(n: usize, seed: u64) -> Vec<f64> {
        // small deterministic pseudo-random values, away from relu kinks
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let u = ((state >> 11) as f64) / ((1u64 << 53) as f64);
                let v = 2.0 * u - 1.0;
                if v.abs() < 0.05 {
                    v + 0.1
                } else {
                    v
                }
            })
            .collect()
    }

    fn param(name: &str, shape: &[usize], seed: u64) -> Parameter<f64> {
        let n: usize = shape.iter().product();
        Parameter::new(name, shape, seeded_values(n, seed))
    }

    #[test]
    fn quadratic_matches_analytic_within_1e8() {
        let p = param("p", &[6], 3);
        let report = grad_check(|| ops::sum_all(&ops::mul(&p.leaf(), &p.leaf())), &[p.clone()], 1e-5, 6);
        // analytic gradient of Σp² is 2p
        let grads = p.grad();
        for (g, v) in grads.iter().zip(p.value()) {
            assert!((g - 2.0 * v).abs() < 1e-12);
        }
        assert!(report.max_rel_err() < 1e-8, "report:\n{report}");
    }

    #[test]
    fn matmul_gradients_match_finite_differences() {
        let a = param("a", &[3, 4], 1);
        let b = param("b", &[4, 2], 2);
        let report = grad_check(
            || ops::mean_all(&ops::matmul(&a.leaf(), &b.leaf())),
            &[a.clone(), b.clone()],
            1e-5,
            64,
        );
        assert!(report.max_rel_err() < 1e-6, "report:\n{report}");
    }

    #[test]
    fn elementwise_and_shape_ops_pass_gradient_checks() {
        let a = param("a", &[2, 6], 11);
        let b = param("b", &[2, 6], 12);
        let cases: Vec<(&str, Box<dyn Fn() -> Tensor<f64>>)> = vec![
            ("add", Box::new({
                let (a, b) = (a.clone(), b.clone());
                move || ops::mean_all(&ops::add(&a.leaf(), &b.leaf()))
            })),
            ("sub", Box::new({
                let (a, b) = (a.clone(), b.clone());
                move || ops::mean_all(&ops::sub(&a.leaf(), &b.leaf()))
            })),
            ("mul", Box::new({
                let (a, b) = (a.clone(), b.clone());
                move || ops::mean_all(&ops::mul(&a.leaf(), &b.leaf()))
            })),
            ("relu", Box::new({
                let a = a.clone();
                move || ops::mean_all(&ops::relu(&a.leaf()))
            })),
            ("reshape", Box::new({
                let a = a.clone();
                move || ops::mean_all(&ops::mul(&ops::reshape(&a.leaf(), &[3, 4]), &ops::reshape(&a.leaf(), &[3, 4])))
            })),
            ("permute", Box::new({
                let a = a.clone();
                move || {
                    let t = ops::permute(&a.leaf(), &[1, 0]);
                    ops::mean_all(&ops::mul(&t, &t))
                }
            })),
            ("concat_slice", Box::new({
                let (a, b) = (a.clone(), b.clone());
                move || {
                    let joined = ops::concat(&[&a.leaf(), &b.leaf()], 1);
                    let part = ops::slice(&joined, 1, 3, 9);
                    ops::mean_all(&ops::mul(&part, &part))
                }
            })),
            ("softmax", Box::new({
                let a = a.clone();
                move || {
                    let s = ops::softmax(&a.leaf(), 1);
                    ops::mean_all(&ops::mul(&s, &s))
                }
            })),
            ("mean", Box::new({
                let a = a.clone();
                move || ops::mean_all(&ops::mul(&a.leaf(), &a.leaf()))
            })),
        ];
        for (name, f) in cases {
            let report = grad_check(f.as_ref(), &[a.clone(), b.clone()], 1e-5, 12);
            assert!(report.max_rel_err() < 1e-5, "{name} failed:\n{report}");
        }
    }

    #[test]
    fn broadcast_add_reduces_gradient_over_leading_axes() {
        let x = param("x", &[4, 3], 21);
        let bias = param("bias", &[3], 22);
        let report = grad_check(
            || {
                let y = ops::add(&x.leaf(), &bias.leaf());
                ops::mean_all(&ops::mul(&y, &y))
            },
            &[x.clone(), bias.clone()],
            1e-5,
            12,
        );
        assert!(report.max_rel_err() < 1e-6, "report:\n{report}");
    }

    #[test]
    fn layer_norm_gradients_match_finite_differences() {
        let x = param("x", &[2, 8], 31);
        let gamma = param("gamma", &[8], 32);
        let beta = param("beta", &[8], 33);
        let report = grad_check(
            || {
                let y = ops::layer_norm(&x.leaf(), &gamma.leaf(), &beta.leaf(), 1e-5);
                ops::mean_all(&ops::mul(&y, &y))
            },
            &[x.clone(), gamma.clone(), beta.clone()],
            1e-5,
            16,
        );
        assert!(report.max_rel_err() < 1e-5, "report:\n{report}");
    }

    #[test]
    fn cross_entropy_gradients_match_finite_differences() {
        let logits = param("logits", &[4, 6], 41);
        let targets = vec![0, 3, 5, 2];
        let report = grad_check(
            || ops::cross_entropy(&logits.leaf(), &targets),
            &[logits.clone()],
            1e-5,
            24,
        );
        assert!(report.max_rel_err() < 1e-5, "report:\n{report}");
    }

    #[test]
    fn conv2d_gradients_match_finite_differences() {
        use super::super::conv::conv2d;
        let x = param("x", &[1, 2, 5, 6], 51);
        let w = param("w", &[3, 2, 3, 3], 52);
        let b = param("b", &[3], 53);
        let report = grad_check(
            || {
                let y = conv2d(&x.leaf(), &w.leaf(), &b.leaf(), (2, 1), (1, 1));
                ops::mean_all(&ops::mul(&y, &y))
            },
            &[x.clone(), w.clone(), b.clone()],
            1e-5,
            20,
        );
        assert!(report.max_rel_err() < 1e-5, "report:\n{report}");
    }

    #[test]
    fn shared_parameter_two_call_sites_matches_finite_differences() {
        // one storage entering the graph twice, like the shared alignment
        // projection: analytic gradient must equal finite differences of
        // the combined loss
        let q = param("q", &[3, 3], 61);
        let v = param("v", &[3, 3], 62);
        let report = grad_check(
            || {
                let site1 = ops::matmul(&q.leaf(), &v.leaf());
                let site2 = ops::matmul(&v.leaf(), &q.leaf());
                ops::add(&ops::mean_all(&ops::mul(&site1, &site1)), &ops::mean_all(&site2))
            },
            &[q.clone(), v.clone()],
            1e-5,
            9,
        );
        assert!(report.max_rel_err() < 1e-6, "report:\n{report}");
    }

    #[test]
    fn corrupted_backward_rule_is_flagged() {
        // an op whose backward rule drops a factor of 2 must be caught
        let p = param("p", &[4], 71);
        let bad_square = |x: &Tensor<f64>| -> Tensor<f64> {
            let data: Vec<f64> = x.data().iter().map(|&v| v * v).collect();
            Tensor::from_op(
                x.shape().to_vec(),
                data,
                vec![x.clone()],
                Box::new(|args, inputs| {
                    // wrong: should be 2·x·g
                    let dx = args
                        .grad_out
                        .iter()
                        .zip(inputs[0].data())
                        .map(|(&g, &v)| g * v)
                        .collect();
                    vec![Some(dx)]
                }),
            )
        };
        let report = grad_check(|| ops::sum_all(&bad_square(&p.leaf())), &[p.clone()], 1e-5, 4);
        assert!(!report.passes(1e-5), "corrupted rule slipped through:\n{report}");
        assert_eq!(report.failures(1e-5)[0].name, "p");
    }
}
