//! Time series of test errors (and optionally order parameters) shared by
//! the ODE integrator and the microscopic trainers, with CSV export.

use crate::scalar::Scalar;
use ndarray::{Array1, Array2};

/// Order parameters attached to one observation.
#[derive(Debug, Clone)]
pub struct ParamSummary<F: Scalar> {
    /// `M[alpha][k]`
    pub m: Array2<F>,
    /// `Q[k][l]`
    pub q: Array2<F>,
    /// `v[k]`
    pub v: Array1<F>,
}

#[derive(Debug, Clone)]
pub struct TraceRow<F: Scalar> {
    pub t: F,
    pub pmse: F,
    pub class_error: F,
    pub params: Option<ParamSummary<F>>,
}

/// Observation series indexed by training time `t = N / D`.
#[derive(Debug, Clone, Default)]
pub struct ErrorTrace<F: Scalar> {
    pub rows: Vec<TraceRow<F>>,
}

impl<F: Scalar> ErrorTrace<F> {
    pub fn new() -> Self {
        ErrorTrace { rows: Vec::new() }
    }

    pub fn push(&mut self, t: F, pmse: F, class_error: F) {
        self.rows.push(TraceRow {
            t,
            pmse,
            class_error,
            params: None,
        });
    }

    pub fn push_with_params(&mut self, t: F, pmse: F, class_error: F, params: ParamSummary<F>) {
        self.rows.push(TraceRow {
            t,
            pmse,
            class_error,
            params: Some(params),
        });
    }

    pub fn last_pmse(&self) -> Option<F> {
        self.rows.last().map(|r| r.pmse)
    }

    pub fn last_class_error(&self) -> Option<F> {
        self.rows.last().map(|r| r.class_error)
    }

    /// CSV with header `t,pmse,class_error`; when `wide` is set and all rows
    /// carry order parameters, appends columns `M_a_k`, `Q_k_l` (upper
    /// triangle) and `v_k`.
    pub fn to_csv(&self, wide: bool) -> String {
        let mut out = String::new();
        let with_params = wide && !self.rows.is_empty() && self.rows.iter().all(|r| r.params.is_some());
        out.push_str("t,pmse,class_error");
        if with_params {
            let p = self.rows[0].params.as_ref().expect("checked above");
            let (n_clusters, k_units) = p.m.dim();
            for a in 0..n_clusters {
                for k in 0..k_units {
                    out.push_str(&format!(",M_{a}_{k}"));
                }
            }
            for k in 0..k_units {
                for l in k..k_units {
                    out.push_str(&format!(",Q_{k}_{l}"));
                }
            }
            for k in 0..k_units {
                out.push_str(&format!(",v_{k}"));
            }
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{},{},{}", row.t, row.pmse, row.class_error));
            if with_params {
                let p = row.params.as_ref().expect("checked above");
                let (n_clusters, k_units) = p.m.dim();
                for a in 0..n_clusters {
                    for k in 0..k_units {
                        out.push_str(&format!(",{}", p.m[[a, k]]));
                    }
                }
                for k in 0..k_units {
                    for l in k..k_units {
                        out.push_str(&format!(",{}", p.q[[k, l]]));
                    }
                }
                for k in 0..k_units {
                    out.push_str(&format!(",{}", p.v[k]));
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn csv_header_and_rows() {
        let mut tr = ErrorTrace::<f64>::new();
        tr.push(0.0, 1.0, 0.5);
        tr.push(1.5, 0.25, 0.125);
        let csv = tr.to_csv(false);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,pmse,class_error"));
        assert_eq!(lines.next(), Some("0,1,0.5"));
        assert_eq!(lines.next(), Some("1.5,0.25,0.125"));
    }

    #[test]
    fn wide_csv_includes_order_parameters() {
        let mut tr = ErrorTrace::<f64>::new();
        tr.push_with_params(
            0.0,
            1.0,
            0.5,
            ParamSummary {
                m: array![[0.1, 0.2], [0.3, 0.4]],
                q: array![[1.0, 0.5], [0.5, 2.0]],
                v: array![-1.0, 1.0],
            },
        );
        let csv = tr.to_csv(true);
        let header = csv.lines().next().unwrap();
        assert_eq!(
            header,
            "t,pmse,class_error,M_0_0,M_0_1,M_1_0,M_1_1,Q_0_0,Q_0_1,Q_1_1,v_0,v_1"
        );
        assert!(csv.lines().nth(1).unwrap().ends_with("0.5,2,-1,1"));
    }
}
