//! Figure recipes: CSV schema checks plus the mapping onto plot specs.

use crate::svg::{parse_csv, render, PlotSpec, Series, SeriesStyle};
use anyhow::Result;
use std::collections::BTreeMap;

fn series_key_order<'a>(keys: impl Iterator<Item = &'a String>) -> Vec<String> {
    let mut v: Vec<String> = keys.cloned().collect();
    v.sort();
    v.dedup();
    v
}

/// `t,pmse,class_error,method`: log-time error curves, one pair of series
/// per method (lines for analytic methods, markers for simulations).
pub fn trajectory_plot(csv: &str, title: &str) -> Result<String> {
    let table = parse_csv(csv)?;
    let t = table.f64_column("t")?;
    let pmse = table.f64_column("pmse")?;
    let eps = table.f64_column("class_error")?;
    let method = table.string_column("method")?;
    let mut series = Vec::new();
    for m in series_key_order(method.iter()) {
        let style = if m.contains("sgd") {
            SeriesStyle::Markers
        } else {
            SeriesStyle::Line
        };
        let pick = |values: &[f64]| -> Vec<(f64, f64)> {
            t.iter()
                .zip(values)
                .zip(&method)
                .filter(|(_, mm)| **mm == m)
                .map(|((&x, &y), _)| (x, y))
                .collect()
        };
        series.push(Series {
            label: format!("pmse ({m})"),
            points: pick(&pmse),
            band: None,
            style,
        });
        series.push(Series {
            label: format!("eps_c ({m})"),
            points: pick(&eps),
            band: None,
            style,
        });
    }
    render(&PlotSpec {
        title: title.to_string(),
        x_label: "t = N / D".into(),
        y_label: "error".into(),
        x_log: true,
        y_log: false,
        series,
    })
}

/// `snr,...`: long-time error of the 2LNN fixed point, the RF analytic
/// error and the oracle versus signal-to-noise ratio.
pub fn fig1_plot(csv: &str) -> Result<String> {
    let table = parse_csv(csv)?;
    let snr = table.f64_column("snr")?;
    let mut series = Vec::new();
    for (col, label) in [
        ("eps_2lnn", "2LNN (fixed point)"),
        ("eps_rf", "RF (analytic)"),
        ("eps_oracle", "oracle"),
    ] {
        let y = table.f64_column(col)?;
        series.push(Series {
            label: label.into(),
            points: snr.iter().cloned().zip(y).collect(),
            band: None,
            style: SeriesStyle::Line,
        });
    }
    render(&PlotSpec {
        title: "long-time classification error vs snr".into(),
        x_label: "snr = 1 / sigma".into(),
        y_label: "classification error".into(),
        x_log: true,
        y_log: false,
        series,
    })
}

/// `kappa,pmse,...` with repeated rows per kappa (one per seed): mean with
/// a std band against weight decay.
pub fn fig3_plot(csv: &str) -> Result<String> {
    let table = parse_csv(csv)?;
    let kappa = table.f64_column("kappa")?;
    let pmse = table.f64_column("pmse")?;
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut order: Vec<(f64, String)> = Vec::new();
    for (&k, &p) in kappa.iter().zip(&pmse) {
        let key = format!("{k:e}");
        if !groups.contains_key(&key) {
            order.push((k, key.clone()));
        }
        groups.entry(key).or_default().push(p);
    }
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite kappa"));
    let mut points = Vec::new();
    let mut band = Vec::new();
    for (k, key) in &order {
        let vals: Vec<f64> = groups[key].iter().cloned().filter(|v| v.is_finite()).collect();
        if vals.is_empty() {
            continue;
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let std = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        points.push((*k, mean));
        band.push(std);
    }
    render(&PlotSpec {
        title: "fixed-point pmse vs weight decay".into(),
        x_label: "kappa".into(),
        y_label: "pmse".into(),
        x_log: true,
        y_log: false,
        series: vec![Series {
            label: "fixed point".into(),
            points,
            band: Some(band),
            style: SeriesStyle::LineWithBand,
        }],
    })
}

/// Master curve: classification error against `sigma D^{1/2} / P^{1/4}`,
/// one series per `(D, gamma)`.
pub fn fig4_plot(csv: &str) -> Result<String> {
    let table = parse_csv(csv)?;
    let scaling = table.f64_column("scaling_var")?;
    let eps = table.f64_column("class_error_analytic")?;
    let d = table.string_column("D")?;
    let gamma = table.string_column("gamma")?;
    let keys: Vec<String> = d
        .iter()
        .zip(&gamma)
        .map(|(d, g)| format!("D={d}, gamma={g}"))
        .collect();
    let mut series = Vec::new();
    for key in series_key_order(keys.iter()) {
        let mut points: Vec<(f64, f64)> = scaling
            .iter()
            .zip(&eps)
            .zip(&keys)
            .filter(|(_, k)| **k == key)
            .map(|((&x, &y), _)| (x, y))
            .collect();
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
        series.push(Series {
            label: key,
            points,
            band: None,
            style: SeriesStyle::Line,
        });
    }
    render(&PlotSpec {
        title: "master-curve collapse of the RF error".into(),
        x_label: "sigma D^{1/2} / P^{1/4}".into(),
        y_label: "classification error".into(),
        x_log: false,
        y_log: false,
        series,
    })
}

/// RF analytic vs simulated error against sigma, one pair per gamma.
pub fn rf_sweep_plot(csv: &str, title: &str) -> Result<String> {
    let table = parse_csv(csv)?;
    let sigma = table.f64_column("sigma")?;
    let eps = table.f64_column("class_error_analytic")?;
    let gamma = table.string_column("gamma")?;
    let sim_idx = table.column_index("class_error_sim").ok();
    let mut series = Vec::new();
    for g in series_key_order(gamma.iter()) {
        let mut points: Vec<(f64, f64)> = sigma
            .iter()
            .zip(&eps)
            .zip(&gamma)
            .filter(|(_, gg)| **gg == g)
            .map(|((&x, &y), _)| (x, y))
            .collect();
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
        series.push(Series {
            label: format!("analytic gamma={g}"),
            points,
            band: None,
            style: SeriesStyle::Line,
        });
        if let Some(idx) = sim_idx {
            let mut points: Vec<(f64, f64)> = Vec::new();
            for (row, (&x, gg)) in table.rows.iter().zip(sigma.iter().zip(&gamma)) {
                if *gg == g {
                    if let Ok(y) = row[idx].parse::<f64>() {
                        points.push((x, y));
                    }
                }
            }
            if !points.is_empty() {
                points.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
                series.push(Series {
                    label: format!("SGD gamma={g}"),
                    points,
                    band: None,
                    style: SeriesStyle::Markers,
                });
            }
        }
    }
    render(&PlotSpec {
        title: title.to_string(),
        x_label: "sigma".into(),
        y_label: "classification error".into(),
        x_log: false,
        y_log: false,
        series,
    })
}

/// Convergence fraction and converged error versus K.
pub fn overparam_plot(csv: &str) -> Result<String> {
    let table = parse_csv(csv)?;
    let k = table.f64_column("k")?;
    let frac = table.f64_column("converged_fraction")?;
    let eps = table.f64_column("mean_eps_converged")?;
    render(&PlotSpec {
        title: "over-parametrization: convergence without accuracy gains".into(),
        x_label: "hidden units K".into(),
        y_label: "fraction / error".into(),
        x_log: false,
        y_log: false,
        series: vec![
            Series {
                label: "converged fraction".into(),
                points: k.iter().cloned().zip(frac).collect(),
                band: None,
                style: SeriesStyle::Line,
            },
            Series {
                label: "mean eps_c (converged)".into(),
                points: k.iter().cloned().zip(eps).collect(),
                band: None,
                style: SeriesStyle::Markers,
            },
        ],
    })
}

/// Dispatch by recipe name (the `emit_plot` surface).
pub fn emit_plot(csv: &str, recipe: &str) -> Result<String> {
    match recipe {
        "trajectory" | "fig2" | "fig5" | "fig7" | "odevsim" => {
            trajectory_plot(csv, "error trajectories")
        }
        "fig1" => fig1_plot(csv),
        "fig3" => fig3_plot(csv),
        "fig4" => fig4_plot(csv),
        "figc1" | "rf_sweep" => rf_sweep_plot(csv, "RF analytic vs simulation"),
        "overparam" => overparam_plot(csv),
        other => anyhow::bail!("unknown plot recipe `{other}`"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_column_is_schema_error() {
        let csv = "t,pmse\n0,1\n";
        let err = trajectory_plot(csv, "x").unwrap_err();
        assert!(err.to_string().contains("class_error"), "{err}");
    }

    #[test]
    fn empty_body_renders_warning() {
        let csv = "snr,sigma,eps_2lnn,eps_rf,eps_oracle\n";
        let svg = fig1_plot(csv).unwrap();
        assert!(svg.contains("no plottable data"));
    }

    #[test]
    fn fig3_band_aggregates_seeds() {
        let csv = "kappa,pmse,class_error,residual,converged\n\
                   0.001,0.2,0.01,1e-9,true\n\
                   0.001,0.3,0.01,1e-9,true\n\
                   0.01,0.4,0.02,1e-9,true\n";
        let svg = fig3_plot(csv).unwrap();
        assert!(svg.contains("path"));
    }
}
