//! Merit-surface scans over one or two decision coordinates.

use nalgebra::DVector;

use super::newton::{merit, Norm};
use super::{default_bounds, CalibrationProblem};
use crate::error::{Error, Result};

/// A decision coordinate that a scan can sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanAxis {
    /// Roughness of one pipe (pipe index).
    Roughness { pipe: usize },
    /// Unmeasured head: measurement-set index and slot in the unmeasured
    /// node list.
    UnmeasuredHead { set: usize, slot: usize },
}

/// An axis with an inclusive sample range.
#[derive(Debug, Clone, Copy)]
pub struct ScanAxisGrid {
    pub axis: ScanAxis,
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl ScanAxisGrid {
    fn samples(&self) -> Vec<f64> {
        if self.points <= 1 {
            return vec![self.start];
        }
        let step = (self.end - self.start) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| self.start + step * i as f64)
            .collect()
    }
}

/// One grid point with the merit under all three norms.
#[derive(Debug, Clone, Copy)]
pub struct ScanSample {
    pub a: f64,
    /// Zero for one-dimensional scans.
    pub b: f64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

fn coordinate_index(problem: &CalibrationProblem, axis: ScanAxis) -> Result<usize> {
    match axis {
        ScanAxis::Roughness { pipe } => {
            if pipe >= problem.n_pipes() {
                return Err(Error::DimensionMismatch {
                    what: "scan pipe index",
                    expected: problem.n_pipes(),
                    got: pipe,
                });
            }
            Ok(pipe)
        }
        ScanAxis::UnmeasuredHead { set, slot } => {
            if set >= problem.n_sets() || slot >= problem.n_free() {
                return Err(Error::DimensionMismatch {
                    what: "scan head coordinate",
                    expected: problem.n_sets() * problem.n_free(),
                    got: set * problem.n_free() + slot,
                });
            }
            Ok(problem.n_pipes() + set * problem.n_free() + slot)
        }
    }
}

/// Evaluates the residual merit on a rectangular grid, all other
/// coordinates held at `x_base`. Returns the samples in row-major order
/// (axis `a` outer) and the number of grid points outside the physical box
/// (computed, but flagged).
pub fn scan_merit(
    problem: &CalibrationProblem,
    x_base: &DVector<f64>,
    axis_a: &ScanAxisGrid,
    axis_b: Option<&ScanAxisGrid>,
) -> Result<(Vec<ScanSample>, usize)> {
    problem.check_dim(x_base)?;
    let index_a = coordinate_index(problem, axis_a.axis)?;
    let index_b = axis_b
        .map(|g| coordinate_index(problem, g.axis))
        .transpose()?;

    let bounds = default_bounds(problem);
    let mut out_of_range = 0usize;
    let mut samples = Vec::new();
    let mut x = x_base.clone();

    let a_values = axis_a.samples();
    let b_values = axis_b.map(|g| g.samples()).unwrap_or_else(|| vec![0.0]);
    for &a in &a_values {
        x[index_a] = a;
        if a < bounds.lower[index_a] || a > bounds.upper[index_a] {
            out_of_range += 1;
        }
        for &b in &b_values {
            if let Some(ib) = index_b {
                x[ib] = b;
                if b < bounds.lower[ib] || b > bounds.upper[ib] {
                    out_of_range += 1;
                }
            }
            let (f, _) = problem.residual(&x)?;
            samples.push(ScanSample {
                a,
                b,
                l1: merit(&f, Norm::L1),
                l2: merit(&f, Norm::L2),
                linf: merit(&f, Norm::LInf),
            });
        }
    }
    if out_of_range > 0 {
        log::warn!("merit scan: {out_of_range} grid point(s) outside the physical range");
    }
    Ok((samples, out_of_range))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::newton::{merit as merit_of, Norm};
    use crate::network::{FluidProperties, InnerNode, Network, Pipe, SourceNode};
    use crate::steady::MeasurementSet;
    use crate::topology::SensorConfig;
    use nalgebra::dvector;

    fn problem() -> CalibrationProblem {
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
            demands: dvector![1.0e-3, 2.0e-3],
            source_heads: dvector![50.0],
            sensed_heads: dvector![44.0],
        }];
        CalibrationProblem::new(net, sensors, sets).unwrap()
    }

    #[test]
    fn single_point_grid_equals_direct_merit() {
        let problem = problem();
        let x = dvector![1e-3, 1e-3, 41.0];
        let grid = ScanAxisGrid {
            axis: ScanAxis::Roughness { pipe: 0 },
            start: 1e-3,
            end: 1e-3,
            points: 1,
        };
        let (samples, _) = scan_merit(&problem, &x, &grid, None).unwrap();
        assert_eq!(samples.len(), 1);
        let (f, _) = problem.residual(&x).unwrap();
        assert_eq!(samples[0].l1, merit_of(&f, Norm::L1));
        assert_eq!(samples[0].a, 1e-3);
    }

    #[test]
    fn roughness_scan_is_symmetric_about_zero() {
        let problem = problem();
        let x = dvector![1e-3, 1e-3, 41.0];
        let grid = ScanAxisGrid {
            axis: ScanAxis::Roughness { pipe: 1 },
            start: -1.5e-3,
            end: 1.5e-3,
            points: 7,
        };
        let (samples, out_of_range) = scan_merit(&problem, &x, &grid, None).unwrap();
        assert_eq!(samples.len(), 7);
        // Negative roughness values are outside the physical box but still
        // evaluated.
        assert!(out_of_range > 0);
        for k in 0..3 {
            assert_eq!(samples[k].l1, samples[6 - k].l1);
        }
    }

    #[test]
    fn two_axis_scan_is_row_major() {
        let problem = problem();
        let x = dvector![1e-3, 1e-3, 41.0];
        let ga = ScanAxisGrid {
            axis: ScanAxis::Roughness { pipe: 0 },
            start: 0.5e-3,
            end: 1.5e-3,
            points: 2,
        };
        let gb = ScanAxisGrid {
            axis: ScanAxis::UnmeasuredHead { set: 0, slot: 0 },
            start: 40.0,
            end: 42.0,
            points: 3,
        };
        let (samples, _) = scan_merit(&problem, &x, &ga, Some(&gb)).unwrap();
        assert_eq!(samples.len(), 6);
        assert_eq!(samples[0].a, 0.5e-3);
        assert_eq!(samples[0].b, 40.0);
        assert_eq!(samples[2].b, 42.0);
        assert_eq!(samples[3].a, 1.5e-3);
    }

    #[test]
    fn unknown_axis_is_rejected() {
        let problem = problem();
        let x = dvector![1e-3, 1e-3, 41.0];
        let grid = ScanAxisGrid {
            axis: ScanAxis::Roughness { pipe: 9 },
            start: 0.0,
            end: 1e-3,
            points: 2,
        };
        assert!(scan_merit(&problem, &x, &grid, None).is_err());
    }
}
