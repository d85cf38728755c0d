//! SVG figures of relative time and relative criterion against volume size.

use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use super::bench::{quartiles, read_records, TrialRecord};
use crate::error::{Error, Result};
use crate::solvers::Algorithm;

const WIDTH: u32 = 720;
const HEIGHT: u32 = 480;

/// Median and quartiles of one series at one size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandPoint {
    pub size: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Time,
    Criterion,
}

impl Metric {
    fn value(self, r: &TrialRecord) -> Option<f64> {
        match self {
            Metric::Time => r.total_time_s,
            Metric::Criterion => r.final_criterion,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Metric::Time => "time",
            Metric::Criterion => "criterion",
        }
    }
}

fn cell(records: &[TrialRecord], size: usize, atoms: usize, alg: Algorithm, metric: Metric) -> Vec<f64> {
    records
        .iter()
        .filter(|r| r.is_ok() && r.size == size && r.atoms == atoms && r.algorithm == alg)
        .filter_map(|r| metric.value(r))
        .collect()
}

/// Median of the SFW cell with the smallest size and atom count.
pub fn reference_value(records: &[TrialRecord], metric: Metric) -> Result<f64> {
    let (size, atoms) = records
        .iter()
        .filter(|r| r.is_ok() && r.algorithm == Algorithm::Sfw)
        .map(|r| (r.size, r.atoms))
        .min()
        .ok_or_else(|| Error::MalformedCsv("no successful SFW trials".into()))?;
    let reference = quartiles(&cell(records, size, atoms, Algorithm::Sfw, metric)).1;
    if !(reference > 0.0) || !reference.is_finite() {
        return Err(Error::MalformedCsv(format!(
            "reference {} is {reference}",
            metric.name()
        )));
    }
    Ok(reference)
}

/// Normalized quartile bands for one algorithm and atom count, ordered by size.
pub fn band(records: &[TrialRecord], atoms: usize, alg: Algorithm, metric: Metric, reference: f64) -> Vec<BandPoint> {
    let mut sizes: Vec<usize> = records.iter().filter(|r| r.atoms == atoms).map(|r| r.size).collect();
    sizes.sort();
    sizes.dedup();
    sizes
        .into_iter()
        .filter_map(|size| {
            let v = cell(records, size, atoms, alg, metric);
            if v.is_empty() {
                return None;
            }
            let (q1, median, q3) = quartiles(&v);
            Some(BandPoint {
                size,
                q1: q1 / reference,
                median: median / reference,
                q3: q3 / reference,
            })
        })
        .collect()
}

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Plot(e.to_string())
}

fn render(title: &str, y_label: &str, series: &[(Algorithm, Vec<BandPoint>)]) -> Result<String> {
    let points = series.iter().flat_map(|(_, b)| b.iter());
    let (mut x0, mut x1, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for p in points {
        x0 = x0.min(p.size as f64);
        x1 = x1.max(p.size as f64);
        y1 = y1.max(p.q3);
    }
    if x0 == x1 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    let pad = 0.05 * (x1 - x0);

    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (WIDTH, HEIGHT)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(60)
            .build_cartesian_2d((x0 - pad)..(x1 + pad), 0.0..(1.1 * y1).max(1.1))
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("volume edge (voxels)")
            .y_desc(y_label)
            .draw()
            .map_err(plot_err)?;

        for (alg, points) in series {
            let color = match alg {
                Algorithm::Sfw => BLUE,
                Algorithm::Bsfw => RED,
            };
            if points.len() > 1 {
                let mut outline: Vec<(f64, f64)> = points.iter().map(|p| (p.size as f64, p.q3)).collect();
                outline.extend(points.iter().rev().map(|p| (p.size as f64, p.q1)));
                chart
                    .draw_series(std::iter::once(Polygon::new(outline, color.mix(0.2).filled())))
                    .map_err(plot_err)?;
            }
            for p in points {
                let x = p.size as f64;
                chart
                    .draw_series(std::iter::once(PathElement::new(vec![(x, p.q1), (x, p.q3)], color)))
                    .map_err(plot_err)?;
            }
            chart
                .draw_series(LineSeries::new(
                    points.iter().map(|p| (p.size as f64, p.median)),
                    color.stroke_width(2),
                ))
                .map_err(plot_err)?
                .label(alg.tag().to_uppercase())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
            chart
                .draw_series(
                    points
                        .iter()
                        .map(|p| Circle::new((p.size as f64, p.median), 3, color.filled())),
                )
                .map_err(plot_err)?;
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

/// Renders `time_atoms{K}.svg` and `criterion_atoms{K}.svg` for every atom count
/// in the records. Values are divided by the median of the smallest SFW cell.
/// Nothing is written unless every figure renders.
pub fn emit_plots_from_records(records: &[TrialRecord], out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::MalformedCsv("no benchmark records".into()));
    }
    let mut atom_counts: Vec<usize> = records.iter().map(|r| r.atoms).collect();
    atom_counts.sort();
    atom_counts.dedup();

    let mut figures = Vec::new();
    for metric in [Metric::Time, Metric::Criterion] {
        let reference = reference_value(records, metric)?;
        for &atoms in &atom_counts {
            let series: Vec<(Algorithm, Vec<BandPoint>)> = [Algorithm::Sfw, Algorithm::Bsfw]
                .into_iter()
                .map(|alg| (alg, band(records, atoms, alg, metric, reference)))
                .filter(|(_, b)| !b.is_empty())
                .collect();
            if series.is_empty() {
                continue;
            }
            let title = format!("relative {} ({atoms} atoms)", metric.name());
            let label = format!("{} / SFW reference", metric.name());
            figures.push((
                format!("{}_atoms{atoms}.svg", metric.name()),
                render(&title, &label, &series)?,
            ));
        }
    }

    let dir = out_dir.as_ref();
    fs::create_dir_all(dir)?;
    figures
        .into_iter()
        .map(|(name, svg)| {
            let path = dir.join(name);
            fs::write(&path, svg)?;
            Ok(path)
        })
        .collect()
}

/// Reads a records CSV and renders its figures.
pub fn emit_plots(csv_path: impl AsRef<Path>, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    emit_plots_from_records(&read_records(csv_path)?, out_dir)
}
