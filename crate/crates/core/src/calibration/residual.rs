//! Residual and Jacobian of the stacked nodal equations.

use nalgebra::{DMatrix, DVector};

use super::{CalibrationProblem, HEAD_LOSS_GUARD};
use crate::error::Result;
use crate::friction::{
    d_flow_d_headloss, d_flow_d_roughness, reynolds, turbulent_flow, TURBULENT_RE_MIN,
};

/// A pipe flagged during one residual evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalWarning {
    /// The implied head loss fell below the zero guard; the pipe was
    /// treated as carrying no flow.
    ZeroHeadLoss { set: usize, pipe: usize },
    /// The implied flow sits below the turbulent regime, where the flow
    /// expression is smooth but outside its modelling assumptions.
    Subturbulent { set: usize, pipe: usize, reynolds: f64 },
}

pub(crate) struct Evaluation {
    pub residual: DVector<f64>,
    pub jacobian: Option<DMatrix<f64>>,
    pub warnings: Vec<EvalWarning>,
}

impl CalibrationProblem {
    /// Stacked residual `f(x)`: per set, `A x_Q(eps, h_N) - q`.
    pub fn residual(&self, x: &DVector<f64>) -> Result<(DVector<f64>, Vec<EvalWarning>)> {
        let eval = self.evaluate(x, false)?;
        Ok((eval.residual, eval.warnings))
    }

    /// Thin Jacobian of the residual, row block per measurement set:
    /// `[A diag(p_eps) | ... | -A diag(p_dh) A^T Cbar^T | ...]`.
    pub fn jacobian(&self, x: &DVector<f64>) -> Result<(DMatrix<f64>, Vec<EvalWarning>)> {
        let eval = self.evaluate(x, true)?;
        Ok((eval.jacobian.expect("requested"), eval.warnings))
    }

    pub(crate) fn evaluate(&self, x: &DVector<f64>, want_jacobian: bool) -> Result<Evaluation> {
        self.check_dim(x)?;
        let fluid = *self.network().fluid();
        let n_pipes = self.n_pipes();
        let n_inner = self.n_inner();
        let n_sets = self.n_sets();
        let n_free = self.n_free();
        let a = self.incidence();

        let mut residual = DVector::zeros(self.residual_dim());
        let mut jacobian = want_jacobian.then(|| DMatrix::zeros(self.residual_dim(), self.dim()));
        let mut warnings = Vec::new();

        let mut flows = DVector::zeros(n_pipes);
        let mut p_eps = DVector::zeros(n_pipes);
        let mut p_dh = DVector::zeros(n_pipes);
        for set in 0..n_sets {
            let dh = self.head_losses(x, set)?;
            for j in 0..n_pipes {
                let eps = x[j];
                let pipe = &self.pipes()[j];
                if dh[j].abs() < HEAD_LOSS_GUARD {
                    // Zero head loss means zero flow; keep the evaluation
                    // finite and remember the degeneracy.
                    flows[j] = 0.0;
                    p_eps[j] = 0.0;
                    p_dh[j] = 0.0;
                    warnings.push(EvalWarning::ZeroHeadLoss { set, pipe: j });
                    continue;
                }
                flows[j] = turbulent_flow(eps, dh[j], pipe, &fluid);
                let re = reynolds(flows[j], pipe, &fluid);
                if re < TURBULENT_RE_MIN {
                    warnings.push(EvalWarning::Subturbulent {
                        set,
                        pipe: j,
                        reynolds: re,
                    });
                }
                if want_jacobian {
                    p_eps[j] = d_flow_d_roughness(eps, dh[j], pipe, &fluid)?;
                    p_dh[j] = d_flow_d_headloss(eps, dh[j], pipe, &fluid)?;
                }
            }

            let block = a * &flows - &self.sets()[set].demands;
            residual.rows_mut(set * n_inner, n_inner).copy_from(&block);

            if let Some(jac) = jacobian.as_mut() {
                // d f / d eps: A diag(p_eps).
                for j in 0..n_pipes {
                    for r in 0..n_inner {
                        let v = a[(r, j)] * p_eps[j];
                        if v != 0.0 {
                            jac[(set * n_inner + r, j)] = v;
                        }
                    }
                }
                // d f / d h_N(set): -A diag(p_dh) A^T Cbar^T.
                let mut scaled = self.unmeasured_map().clone();
                for j in 0..n_pipes {
                    scaled.row_mut(j).scale_mut(p_dh[j]);
                }
                let head_block = -(a * scaled);
                jac.view_mut((set * n_inner, n_pipes + set * n_free), (n_inner, n_free))
                    .copy_from(&head_block);
            }
        }

        Ok(Evaluation {
            residual,
            jacobian,
            warnings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{FluidProperties, InnerNode, Network, Pipe, SourceNode};
    use crate::steady::MeasurementSet;
    use crate::topology::SensorConfig;
    use approx::assert_relative_eq;

    /// Source feeding two inner nodes in a line; sensor on the middle node.
    fn line_problem() -> CalibrationProblem {
        let pipe = |id: &str, from: &str, to: &str, l: f64| Pipe {
            id: id.into(),
            from: from.into(),
            to: to.into(),
            length: l,
            diameter: 0.04,
            roughness: None,
            minor_loss: 0.0,
        };
        let net = Network::new(
            vec![
                InnerNode {
                    id: "a".into(),
                    elevation: 1.0,
                },
                InnerNode {
                    id: "b".into(),
                    elevation: 0.0,
                },
            ],
            vec![SourceNode { id: "r".into() }],
            vec![pipe("p1", "r", "a", 10.0), pipe("p2", "a", "b", 20.0)],
            FluidProperties::default(),
        )
        .unwrap();
        let sensors = SensorConfig::new(&net, &["a".into()]).unwrap();
        let sets = vec![MeasurementSet {
            demands: nalgebra::dvector![0.5e-3, 1.2e-3],
            source_heads: nalgebra::dvector![50.0],
            sensed_heads: nalgebra::dvector![42.0],
        }];
        CalibrationProblem::new(net, sensors, sets).unwrap()
    }

    #[test]
    fn head_losses_follow_the_selectors() {
        let problem = line_problem();
        // x = [eps1, eps2, h_b].
        let x = nalgebra::dvector![1e-3, 1e-3, 40.0];
        let dh = problem.head_losses(&x, 0).unwrap();
        // Pipe 1: 50 - (42 + 1) = 7; pipe 2: (42 + 1) - (40 + 0) = 3.
        assert_relative_eq!(dh[0], 7.0, max_relative = 1e-12);
        assert_relative_eq!(dh[1], 3.0, max_relative = 1e-12);
    }

    #[test]
    fn head_losses_are_affine_in_unknown_heads() {
        let problem = line_problem();
        let x0 = nalgebra::dvector![1e-3, 1e-3, 40.0];
        let mut x1 = x0.clone();
        x1[2] += 2.5;
        let d0 = problem.head_losses(&x0, 0).unwrap();
        let d1 = problem.head_losses(&x1, 0).unwrap();
        let diff = d1 - d0;
        let expected = -problem.unmeasured_map() * nalgebra::dvector![2.5];
        assert_relative_eq!(diff, expected, max_relative = 1e-12);
    }

    #[test]
    fn equal_heads_zero_losses_warn() {
        let pipe = |id: &str, from: &str, to: &str| Pipe {
            id: id.into(),
            from: from.into(),
            to: to.into(),
            length: 10.0,
            diameter: 0.04,
            roughness: None,
            minor_loss: 0.0,
        };
        let net = Network::new(
            vec![
                InnerNode {
                    id: "a".into(),
                    elevation: 0.0,
                },
                InnerNode {
                    id: "b".into(),
                    elevation: 0.0,
                },
            ],
            vec![SourceNode { id: "r".into() }],
            vec![pipe("p1", "r", "a"), pipe("p2", "a", "b")],
            FluidProperties::default(),
        )
        .unwrap();
        let sensors = SensorConfig::new(&net, &["a".into()]).unwrap();
        let sets = vec![MeasurementSet {
            demands: nalgebra::dvector![0.0, 0.0],
            source_heads: nalgebra::dvector![50.0],
            sensed_heads: nalgebra::dvector![50.0],
        }];
        let problem = CalibrationProblem::new(net, sensors, sets).unwrap();
        let x = nalgebra::dvector![1e-3, 1e-3, 50.0];
        let dh = problem.head_losses(&x, 0).unwrap();
        assert!(dh.abs().max() < 1e-12);
        let (f, warnings) = problem.residual(&x).unwrap();
        assert!(f.abs().max() == 0.0);
        assert_eq!(warnings.len(), 2);
    }

    #[test]
    fn demand_shift_moves_residual_affinely() {
        let problem = line_problem();
        let x = nalgebra::dvector![1e-3, 0.5e-3, 40.0];
        let (f, _) = problem.residual(&x).unwrap();
        let mut doubled_sets = problem.sets().to_vec();
        doubled_sets[0].demands *= 2.0;
        let problem2 = CalibrationProblem::new(
            problem.network().clone(),
            problem.sensors().clone(),
            doubled_sets,
        )
        .unwrap();
        let (f2, _) = problem2.residual(&x).unwrap();
        let expected = &f - &problem.sets()[0].demands;
        assert_relative_eq!(f2, expected, max_relative = 1e-12);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let problem = line_problem();
        let x = nalgebra::dvector![1.2e-3, 0.7e-3, 39.5];
        let (jac, _) = problem.jacobian(&x).unwrap();
        for col in 0..problem.dim() {
            let scale = if col < problem.n_pipes() { 0.04 } else { 1.0 };
            let h = 1e-8 * x[col].abs().max(scale);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[col] += h;
            xm[col] -= h;
            let (fp, _) = problem.residual(&xp).unwrap();
            let (fm, _) = problem.residual(&xm).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            for row in 0..problem.residual_dim() {
                assert_relative_eq!(
                    jac[(row, col)],
                    fd[row],
                    max_relative = 1e-6,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn head_columns_are_block_sparse() {
        // Two sets: the head columns of set 0 must be zero in rows of set 1.
        let problem = line_problem();
        let mut sets = problem.sets().to_vec();
        let mut second = sets[0].clone();
        second.demands *= 1.5;
        second.sensed_heads[0] = 40.0;
        sets.push(second);
        let problem =
            CalibrationProblem::new(problem.network().clone(), problem.sensors().clone(), sets)
                .unwrap();
        let x = nalgebra::dvector![1e-3, 1e-3, 39.0, 37.0];
        let (jac, _) = problem.jacobian(&x).unwrap();
        let n_inner = problem.n_inner();
        // Set-0 head column, set-1 rows:
        for r in 0..n_inner {
            assert_eq!(jac[(n_inner + r, 2)], 0.0);
            assert_eq!(jac[(r, 3)], 0.0);
        }
    }
}
