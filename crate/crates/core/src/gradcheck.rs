//! Central finite-difference gradient checking.
//!
//! The checker only ever evaluates the forward closure, so it is independent
//! of the tape's backward pass and can be used as an oracle against it.

use crate::graph::{Graph, Var};
use crate::tensor::Matrix;

/// Default step for central differences.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Result of comparing one analytic gradient against finite differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_input: usize,
    pub worst_coord: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    let denom = a.abs().max(n.abs()).max(1e-6);
    (a - n).abs() / denom
}

/// Checks the gradient of a scalar-valued function w.r.t. every entry of
/// every input matrix.
///
/// `f` must build the computation on the supplied graph using the given leaf
/// vars (one per input, in order) and return the scalar output var. It is
/// called once for the analytic pass and `2 * total_elements` times for the
/// numeric pass.
pub fn check<F>(f: F, inputs: &[Matrix], step: f64) -> GradCheckReport
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let eval = |mats: &[Matrix]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = mats.iter().map(|m| g.leaf(m.clone())).collect();
        let out = f(&mut g, &vars);
        assert_eq!((out.rows, out.cols), (1, 1), "gradcheck needs a scalar output");
        g.value(out).item()
    };

    // analytic gradients
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|m| g.leaf(m.clone())).collect();
    let out = f(&mut g, &vars);
    let grads = g.backward(out);
    let analytic: Vec<Matrix> = vars.iter().map(|v| grads.get_or_zeros(*v)).collect();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_input: 0,
        worst_coord: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
    };

    let mut work: Vec<Matrix> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        for r in 0..input.rows() {
            for c in 0..input.cols() {
                let orig = input.at(r, c);
                work[i].set(r, c, orig + step);
                let plus = eval(&work);
                work[i].set(r, c, orig - step);
                let minus = eval(&work);
                work[i].set(r, c, orig);

                let numeric = (plus - minus) / (2.0 * step);
                let an = analytic[i].at(r, c);
                let err = rel_err(an, numeric);
                if err > report.max_rel_err {
                    report.max_rel_err = err;
                    report.worst_input = i;
                    report.worst_coord = (r, c);
                    report.analytic = an;
                    report.numeric = numeric;
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_checks() {
        let x = Matrix::from_vec(1, 3, vec![0.3, -0.7, 1.2]).unwrap();
        let report = check(
            |g, vars| {
                let sq = g.mul(vars[0], vars[0]);
                g.sum_all(sq)
            },
            &[x],
            DEFAULT_STEP,
        );
        assert!(report.passes(1e-7), "{report:?}");
    }

    #[test]
    fn composite_graph_gradient_checks() {
        let x = Matrix::from_vec(2, 3, vec![0.1, -0.2, 0.5, 0.9, -1.1, 0.3]).unwrap();
        let w = Matrix::from_vec(3, 2, vec![0.4, -0.6, 0.2, 0.8, -0.5, 0.1]).unwrap();
        let report = check(
            |g, vars| {
                let h = g.matmul(vars[0], vars[1]);
                let a = g.gelu(h);
                let sm = g.softmax_rows(a);
                let sg = g.sigmoid(sm);
                g.mean_all(sg)
            },
            &[x, w],
            DEFAULT_STEP,
        );
        assert!(report.passes(1e-6), "{report:?}");
    }

    #[test]
    fn layer_norm_gradient_checks() {
        let x = Matrix::from_vec(2, 4, vec![0.1, -0.4, 0.9, 0.2, -0.6, 1.3, 0.05, -0.8]).unwrap();
        let gain = Matrix::from_vec(1, 4, vec![1.1, 0.9, 1.0, 1.2]).unwrap();
        let bias = Matrix::from_vec(1, 4, vec![0.0, 0.1, -0.1, 0.05]).unwrap();
        let report = check(
            |g, vars| {
                let y = g.layer_norm(vars[0], vars[1], vars[2], 1e-5);
                let s = g.sigmoid(y);
                g.mean_all(s)
            },
            &[x, gain, bias],
            DEFAULT_STEP,
        );
        assert!(report.passes(1e-6), "{report:?}");
    }
}
