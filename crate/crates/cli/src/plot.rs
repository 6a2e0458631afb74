//! Static SVG charts of the CSVs the other commands write. The chart kind is
//! picked from the CSV header.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use plotters::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChartKind {
    /// Objective-space scatter with the frontier highlighted.
    Pareto,
    /// Metric against CPA target, one series per file.
    CpaSweep,
    /// Score against candidate count, one series per seed.
    KSweep,
    /// Training losses against update step.
    Metrics,
}

struct Table {
    label: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
        let header = r.headers()?.iter().map(str::to_string).collect::<Vec<_>>();
        let rows = r
            .records()
            .map(|rec| rec.map(|x| x.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()
            .with_context(|| format!("parsing {}", path.display()))?;
        if rows.is_empty() {
            bail!("{} has no data rows; nothing to plot", path.display());
        }
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Ok(Self { label, header, rows })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("{}: missing column `{name}`", self.label))
    }

    /// Column as numbers; empty cells are skipped with their row.
    fn series(&self, x: &str, y: &str) -> Result<Vec<(f64, f64)>> {
        let (xi, yi) = (self.col(x)?, self.col(y)?);
        let mut out = Vec::with_capacity(self.rows.len());
        for r in &self.rows {
            if r[xi].is_empty() || r[yi].is_empty() {
                continue;
            }
            let px: f64 = r[xi].parse().with_context(|| format!("{}: `{x}` = {:?}", self.label, r[xi]))?;
            let py: f64 = r[yi].parse().with_context(|| format!("{}: `{y}` = {:?}", self.label, r[yi]))?;
            if px.is_finite() && py.is_finite() {
                out.push((px, py));
            }
        }
        Ok(out)
    }

    fn kind(&self) -> Result<ChartKind> {
        let has = |c: &str| self.header.iter().any(|h| h == c);
        if has("on_frontier") {
            Ok(ChartKind::Pareto)
        } else if has("target") {
            Ok(ChartKind::CpaSweep)
        } else if has("k") {
            Ok(ChartKind::KSweep)
        } else if has("step") {
            Ok(ChartKind::Metrics)
        } else {
            bail!("{}: unrecognized CSV layout", self.label)
        }
    }
}

fn bounds(points: impl Iterator<Item = (f64, f64)>) -> Option<((f64, f64), (f64, f64))> {
    let mut b: Option<((f64, f64), (f64, f64))> = None;
    for (x, y) in points {
        b = Some(match b {
            None => ((x, x), (y, y)),
            Some(((x0, x1), (y0, y1))) => ((x0.min(x), x1.max(x)), (y0.min(y), y1.max(y))),
        });
    }
    b.map(|((x0, x1), (y0, y1))| (pad(x0, x1), pad(y0, y1)))
}

fn pad(lo: f64, hi: f64) -> (f64, f64) {
    let span = if hi > lo { hi - lo } else { lo.abs().max(1.0) };
    (lo - 0.05 * span, hi + 0.05 * span)
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(255, 127, 14),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

type Series = (String, Vec<(f64, f64)>);

fn line_chart(svg: &mut String, title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<()> {
    let ((x0, x1), (y0, y1)) = bounds(series.iter().flat_map(|s| s.1.iter().copied()))
        .ok_or_else(|| anyhow!("no finite points to plot"))?;
    let root = SVGBackend::with_string(svg, (800, 520)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0..y1)?;
    chart.configure_mesh().x_desc(x_label).y_desc(y_label).draw()?;
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))?
            .label(name.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        chart.draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled())))?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()?;
    root.present()?;
    Ok(())
}

fn pareto_chart(svg: &mut String, t: &Table) -> Result<()> {
    let (ri, ci, fi) = (t.col("total_reward")?, t.col("total_cost")?, t.col("on_frontier")?);
    let mut front = Vec::new();
    let mut rest = Vec::new();
    for r in &t.rows {
        let p: (f64, f64) = (r[ci].parse()?, r[ri].parse()?);
        if r[fi] == "true" {
            front.push(p);
        } else {
            rest.push(p);
        }
    }
    front.sort_by(|a, b| a.0.total_cmp(&b.0));
    let ((x0, x1), (y0, y1)) =
        bounds(front.iter().chain(&rest).copied()).ok_or_else(|| anyhow!("no points to plot"))?;
    let root = SVGBackend::with_string(svg, (800, 600)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Objective space: cost vs return", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0..y1)?;
    chart.configure_mesh().x_desc("total cost").y_desc("total return").draw()?;
    let grey = RGBColor(150, 150, 150);
    chart
        .draw_series(rest.iter().map(|&p| Circle::new(p, 2, grey.filled())))?
        .label(format!("dominated ({})", rest.len()))
        .legend(move |(x, y)| Circle::new((x + 8, y), 3, grey.filled()));
    let red = PALETTE[1];
    chart.draw_series(LineSeries::new(front.iter().copied(), red.stroke_width(1)))?;
    chart
        .draw_series(front.iter().map(|&p| TriangleMarker::new(p, 6, red.filled())))?
        .label(format!("Pareto frontier ({})", front.len()))
        .legend(move |(x, y)| TriangleMarker::new((x + 8, y), 6, red.filled()));
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::LowerRight)
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()?;
    root.present()?;
    Ok(())
}

/// Renders `inputs` into one SVG at `output`. Nothing is written on error.
pub fn plot(inputs: &[PathBuf], output: &Path, y_column: Option<&str>) -> Result<ChartKind> {
    if inputs.is_empty() {
        bail!("plot needs at least one --input CSV");
    }
    let tables = inputs.iter().map(|p| Table::read(p)).collect::<Result<Vec<_>>>()?;
    let kind = tables[0].kind()?;
    for t in &tables[1..] {
        if t.kind()? != kind {
            bail!("{} and {} hold different kinds of data", tables[0].label, t.label);
        }
    }
    let mut svg = String::new();
    match kind {
        ChartKind::Pareto => {
            if tables.len() > 1 {
                bail!("a Pareto scatter takes a single input");
            }
            pareto_chart(&mut svg, &tables[0])?;
        }
        ChartKind::CpaSweep => {
            let y = y_column.unwrap_or("score");
            let series = tables
                .iter()
                .map(|t| Ok((t.label.clone(), t.series("target", y)?)))
                .collect::<Result<Vec<_>>>()?;
            line_chart(&mut svg, &format!("{y} by CPA target"), "CPA target", y, &series)?;
        }
        ChartKind::KSweep => {
            let y = y_column.unwrap_or("score");
            let mut series: Vec<Series> = Vec::new();
            for t in &tables {
                let seed = t.col("seed")?;
                let mut seeds: Vec<&str> = t.rows.iter().map(|r| r[seed].as_str()).collect();
                seeds.sort_unstable();
                seeds.dedup();
                for s in seeds {
                    let sub = Table {
                        label: t.label.clone(),
                        header: t.header.clone(),
                        rows: t.rows.iter().filter(|r| r[seed] == s).cloned().collect(),
                    };
                    series.push((format!("seed {s}"), sub.series("k", y)?));
                }
            }
            line_chart(&mut svg, &format!("{y} by counterfactual count"), "K", y, &series)?;
        }
        ChartKind::Metrics => {
            let columns: Vec<&str> = match y_column {
                Some(c) => vec![c],
                None => vec!["total", "nll"],
            };
            let mut series = Vec::new();
            for t in &tables {
                for c in &columns {
                    let name = if tables.len() > 1 { format!("{} {c}", t.label) } else { c.to_string() };
                    series.push((name, t.series("step", c)?));
                }
            }
            line_chart(&mut svg, "Training curves", "step", "loss", &series)?;
        }
    }
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(output, svg).with_context(|| format!("writing {}", output.display()))?;
    Ok(kind)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn empty_csv_is_an_error_and_writes_nothing() {
        let d = tempfile::tempdir().unwrap();
        let input = write(d.path(), "e.csv", "target,value,ar,er,score\n");
        let out = d.path().join("e.svg");
        assert!(plot(&[input], &out, None).unwrap_err().to_string().contains("no data rows"));
        assert!(!out.exists());
    }

    #[test]
    fn scatter_marks_the_frontier_in_the_legend() {
        let d = tempfile::tempdir().unwrap();
        let input = write(
            d.path(),
            "p.csv",
            "index,total_reward,total_cost,on_frontier\n0,3,1,true\n1,1,2,false\n2,4,3,true\n",
        );
        let out = d.path().join("p.svg");
        assert_eq!(plot(&[input], &out, None).unwrap(), ChartKind::Pareto);
        let svg = std::fs::read_to_string(out).unwrap();
        assert!(svg.contains("Pareto frontier (2)") && svg.contains("dominated (1)"));
    }

    #[test]
    fn one_series_per_sweep_file() {
        let d = tempfile::tempdir().unwrap();
        let a = write(d.path(), "ckpt_a.csv", "target,value,ar,er,score\n3,1,0.5,0,1\n4,2,0.6,0,2\n");
        let b = write(d.path(), "ckpt_b.csv", "target,value,ar,er,score\n3,1,0.5,0,1.5\n4,2,0.6,0,2.5\n");
        let out = d.path().join("s.svg");
        assert_eq!(plot(&[a, b], &out, None).unwrap(), ChartKind::CpaSweep);
        let svg = std::fs::read_to_string(out).unwrap();
        assert!(svg.contains("ckpt_a") && svg.contains("ckpt_b"));
    }

    #[test]
    fn mixed_inputs_are_rejected() {
        let d = tempfile::tempdir().unwrap();
        let a = write(d.path(), "a.csv", "target,value,ar,er,score\n3,1,0.5,0,1\n");
        let b = write(d.path(), "b.csv", "k,seed,score\n1,1,2\n");
        assert!(plot(&[a, b], &d.path().join("x.svg"), None).is_err());
    }
}
