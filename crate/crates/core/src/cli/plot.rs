use std::path::Path;

use plotters::prelude::*;

use super::write_atomic;
use crate::bundle::Trivialization;
use crate::error::{Error, Result};
use crate::flatmap::{flat_output, ReconstructedSample};
use crate::sim::RoundTrip;
use crate::MechanicalSystem;

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Io(format!("plot: {e}"))
}

/// Renders named series against `t` as an SVG document.
pub fn line_plot(title: &str, t: &[f64], series: &[(String, Vec<f64>)]) -> Result<String> {
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (800, 480)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let (t0, t1) = (t.first().copied().unwrap_or(0.0), t.last().copied().unwrap_or(1.0));
        let vals = series.iter().flat_map(|(_, v)| v.iter().copied()).filter(|v| v.is_finite());
        let (mut lo, mut hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        let pad = ((hi - lo) * 0.05).max(1e-9);
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 20))
            .margin(10)
            .x_label_area_size(30)
            .y_label_area_size(60)
            .build_cartesian_2d(t0..t1.max(t0 + 1e-9), (lo - pad)..(hi + pad))
            .map_err(plot_err)?;
        chart.configure_mesh().x_desc("t").draw().map_err(plot_err)?;
        for (i, (name, v)) in series.iter().enumerate() {
            let color = Palette99::pick(i).to_rgba();
            chart
                .draw_series(LineSeries::new(t.iter().copied().zip(v.iter().copied()), color))
                .map_err(plot_err)?
                .label(name.clone())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
        }
        chart.configure_series_labels().border_style(BLACK).background_style(WHITE.mix(0.8)).draw().map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

fn columns(name: &str, rows: &[Vec<f64>]) -> Vec<(String, Vec<f64>)> {
    let n = rows.first().map_or(0, Vec::len);
    (0..n).map(|i| (format!("{name}{i}"), rows.iter().map(|r| r[i]).collect())).collect()
}

/// Flat output, shape and force coefficients against time.
pub fn reconstruction_plots(sys: &dyn MechanicalSystem, triv: &Trivialization, samples: &[ReconstructedSample], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let t: Vec<f64> = samples.iter().map(|r| r.t).collect();
    let y = samples
        .iter()
        .map(|r| flat_output(sys, triv, &r.q).map(|g| g.data.iter().copied().collect()))
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let s: Vec<Vec<f64>> = samples.iter().map(|r| r.shape.coords.iter().copied().collect()).collect();
    let u: Vec<Vec<f64>> = samples.iter().map(|r| r.force_coeffs.iter().copied().collect()).collect();
    write_atomic(&dir.join("flat_output.svg"), line_plot("flat output", &t, &columns("y", &y))?.as_bytes())?;
    write_atomic(&dir.join("shape.svg"), line_plot("shape", &t, &columns("s", &s))?.as_bytes())?;
    write_atomic(&dir.join("forces.svg"), line_plot("force coefficients", &t, &columns("u", &u))?.as_bytes())?;
    Ok(())
}

/// Flat-output tracking error of a round trip.
pub fn flat_error_plot(rt: &RoundTrip, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let series = vec![("flat error".to_string(), rt.flat_errors.clone())];
    write_atomic(&dir.join("flat_error.svg"), line_plot("flat output error", &rt.states.times, &series)?.as_bytes())
}
