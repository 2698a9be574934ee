//! Test problems with a known stationary point, the two comparison
//! experiments, and their CSV/SVG output.
//!
//! The constructed observation is `X = Y* + R` where `Y*` is a normalized
//! quadratic on an equidistant grid over `[-1, 1]` (so it satisfies the
//! recurrence with coefficients `(1, -3, 3, -1)`) and the perturbation `R`
//! is made orthogonal to the tangent subspace `Z(a*^2)`. That orthogonality
//! is exactly the first-order optimality condition, so `Y*` is a stationary
//! point of the weighted least-squares objective by construction. The
//! tangent subspace consists of polynomials of degree at most 5, so the
//! projection is computed through an orthonormalized Legendre basis rather
//! than any production projector, keeping the construction independent of
//! the code under test.

use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glrr::GlrrVector;
use crate::optimizer::{vpgn_solve, SolverVariant, VpgnOptions};
use crate::projection::{ProjectionKind, Projector, WeightedPinv};
use crate::signal::Signal;
use crate::weights::{WeightOperator, WeightSpec};

pub mod oracles;

/// The cubic-recurrence coefficients `(1, -3, 3, -1)` every constructed
/// example is built around.
pub fn example_glrr() -> GlrrVector {
    GlrrVector::new(vec![1.0, -3.0, 3.0, -1.0]).expect("static coefficients")
}

/// Equidistant grid `t_i = -1 + 2 i / (N - 1)` including both endpoints.
pub fn example_grid(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| -1.0 + 2.0 * i as f64 / (n as f64 - 1.0))
        .collect()
}

/// The normalized squared grid `b (t_1^2, ..., t_N^2)`, `||Y*|| = 1`.
pub fn example_y_star(n: usize) -> Result<Signal> {
    let grid = example_grid(n);
    let raw: Vec<f64> = grid.iter().map(|t| t * t).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    Signal::new(raw.iter().map(|v| v / norm).collect())
}

fn normalized_abs_grid(n: usize) -> Vec<f64> {
    let grid = example_grid(n);
    let raw: Vec<f64> = grid.iter().map(|t| t.abs()).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    raw.iter().map(|v| v / norm).collect()
}

/// Legendre polynomials `P_0..P_max_degree` evaluated at the points via the
/// three-term recurrence, then orthonormalized over the discrete grid.
pub fn legendre_basis(points: &[f64], max_degree: usize) -> DMatrix<f64> {
    let n = points.len();
    let mut m = DMatrix::<f64>::zeros(n, max_degree + 1);
    for (i, &t) in points.iter().enumerate() {
        m[(i, 0)] = 1.0;
        if max_degree >= 1 {
            m[(i, 1)] = t;
        }
        for k in 1..max_degree {
            let next =
                ((2 * k + 1) as f64 * t * m[(i, k)] - k as f64 * m[(i, k - 1)]) / (k + 1) as f64;
            m[(i, k + 1)] = next;
        }
    }
    let qr = m.qr();
    qr.q()
}

/// `W`-orthogonal projection onto the span of the columns of a real basis.
fn project_onto_basis(basis: &DMatrix<f64>, w: &WeightOperator, x: &[f64]) -> Result<Vec<f64>> {
    let complex = basis.map(|v| Complex64::new(v, 0.0));
    let pinv = WeightedPinv::new(complex, w)?;
    Ok(pinv.apply(x)?.projected.into_values())
}

/// Constructed optimization problem whose exact local solution is known.
#[derive(Debug, Clone)]
pub struct ExampleProblem {
    /// Observed series `X = Y* + R`.
    pub x: Signal,
    /// The built-in stationary point, `||Y*|| = 1`.
    pub y_star: Signal,
    /// Coefficients `(1, -3, 3, -1)` governing `Y*`.
    pub a_star: GlrrVector,
    pub grid: Vec<f64>,
    pub w: WeightOperator,
}

/// Builds the solution-stability example: the perturbation is the
/// normalized `|t|` made `W`-orthogonal to the tangent subspace `Z(a*^2)`
/// (polynomials of degree <= 5, realized by the Legendre basis).
pub fn make_example(n: usize, w: &WeightOperator) -> Result<ExampleProblem> {
    if n < 8 {
        return Err(Error::InvalidInput(format!(
            "example construction needs N >= 8, got {n}"
        )));
    }
    if w.size() != n {
        return Err(Error::DimensionMismatch(format!(
            "weight size {} vs N = {n}",
            w.size()
        )));
    }
    let grid = example_grid(n);
    let y_star = example_y_star(n)?;
    let r_hat = normalized_abs_grid(n);
    let tangent_basis = legendre_basis(&grid, 5);
    let projected = project_onto_basis(&tangent_basis, w, &r_hat)?;
    let x: Vec<f64> = y_star
        .values()
        .iter()
        .zip(r_hat.iter().zip(&projected))
        .map(|(y, (rh, pr))| y + (rh - pr))
        .collect();
    Ok(ExampleProblem {
        x: Signal::new(x)?,
        y_star,
        a_star: example_glrr(),
        grid,
        w: w.clone(),
    })
}

/// Constructed projection problem: `Pi_{Z(a*),W} P = Y*` holds exactly.
#[derive(Debug, Clone)]
pub struct ProjectionExample {
    pub p: Signal,
    pub y_star: Signal,
    pub a_star: GlrrVector,
}

/// Builds the projection-accuracy example: the perturbation is made
/// `W`-orthogonal to `Z(a*)` itself (polynomials of degree <= 2).
pub fn make_projection_example(n: usize, w: &WeightOperator) -> Result<ProjectionExample> {
    if n < 8 {
        return Err(Error::InvalidInput(format!(
            "example construction needs N >= 8, got {n}"
        )));
    }
    if w.size() != n {
        return Err(Error::DimensionMismatch(format!(
            "weight size {} vs N = {n}",
            w.size()
        )));
    }
    let grid = example_grid(n);
    let y_star = example_y_star(n)?;
    let r_hat = normalized_abs_grid(n);
    let signal_basis = legendre_basis(&grid, 2);
    let projected = project_onto_basis(&signal_basis, w, &r_hat)?;
    let p: Vec<f64> = y_star
        .values()
        .iter()
        .zip(r_hat.iter().zip(&projected))
        .map(|(y, (rh, pr))| y + (rh - pr))
        .collect();
    Ok(ProjectionExample {
        p: Signal::new(p)?,
        y_star,
        a_star: example_glrr(),
    })
}

// ---------------------------------------------------------------------------
// Experiment rows
// ---------------------------------------------------------------------------

/// One measurement cell of an experiment; serializes losslessly to CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub n: usize,
    pub method: String,
    pub metric: String,
    /// Missing exactly when the cell diverged.
    pub value: Option<f64>,
    pub diverged: bool,
    pub replication: u64,
    pub seed: u64,
}

pub fn write_rows_csv(path: &Path, rows: &[ExperimentRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_rows_csv(path: &Path) -> Result<Vec<ExperimentRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        rows.push(record?);
    }
    Ok(rows)
}

/// Least-squares slope of `ln y` against `ln x`; the growth exponent of a
/// power law through the points.
pub fn fit_log_log_slope(points: &[(usize, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, y)| *y > 0.0 && y.is_finite())
        .map(|&(x, y)| ((x as f64).ln(), y.ln()))
        .collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    num / den
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Projection-accuracy comparison: for each length and method, project the
/// constructed `P_N` onto `Z(a*)` and record the distance to the known
/// projection `Y*`. Failures are recorded as diverged cells and the run
/// continues. Writes `proj_accuracy.csv` and `proj_accuracy.svg`.
pub fn experiment_projection_accuracy(
    n_list: &[usize],
    methods: &[ProjectionKind],
    weights: WeightSpec,
    out_dir: &Path,
) -> Result<Vec<ExperimentRow>> {
    if n_list.is_empty() || methods.is_empty() {
        return Err(Error::InvalidInput(
            "need at least one length and one method".into(),
        ));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut rows = Vec::new();
    for &n in n_list {
        let w = weights.build(n)?;
        let example = make_projection_example(n, &w)?;
        for &method in methods {
            let value = Projector::new(&example.a_star, &w, method)
                .and_then(|p| p.project(example.p.values()))
                .map(|res| euclidean_distance(res.projected.values(), example.y_star.values()));
            rows.push(match value {
                Ok(acc) => ExperimentRow {
                    n,
                    method: method.name().to_string(),
                    metric: "accuracy".into(),
                    value: Some(acc),
                    diverged: false,
                    replication: 0,
                    seed: 0,
                },
                Err(_) => ExperimentRow {
                    n,
                    method: method.name().to_string(),
                    metric: "accuracy".into(),
                    value: None,
                    diverged: true,
                    replication: 0,
                    seed: 0,
                },
            });
        }
    }
    write_rows_csv(&out_dir.join("proj_accuracy.csv"), &rows)?;
    let series: Vec<(String, Vec<(f64, f64)>)> = methods
        .iter()
        .map(|m| {
            let pts = rows
                .iter()
                .filter(|row| row.method == m.name() && !row.diverged)
                .filter_map(|row| row.value.map(|v| (row.n as f64, v)))
                .collect();
            (m.name().to_string(), pts)
        })
        .collect();
    write_svg_loglog(
        &out_dir.join("proj_accuracy.svg"),
        "Projection accuracy",
        "N",
        "distance to Y*",
        &series,
    )?;
    Ok(rows)
}

const STABILITY_VARIANTS: [SolverVariant; 3] = [
    SolverVariant::Vpgn,
    SolverVariant::Svpgn,
    SolverVariant::SvpgnH,
];

/// Solution-stability comparison: seeded starts `a* + 1e-6 d` with
/// `d ~ U[-1,1]^4`, all three solver variants, distance to the built-in
/// solution and the objective gap per replication. Per-replication RNG
/// streams are derived as `seed XOR replication`, so runs are restartable
/// and bit-reproducible; replications run in parallel but are reduced in
/// replication order. Writes `stability.csv`, `stability_summary.csv` and
/// `stability.svg`.
pub fn experiment_solution_stability(
    n_list: &[usize],
    reps: usize,
    seed: u64,
    weights: WeightSpec,
    out_dir: &Path,
) -> Result<Vec<ExperimentRow>> {
    if n_list.is_empty() || reps == 0 {
        return Err(Error::InvalidInput(
            "need at least one length and one replication".into(),
        ));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut rows = Vec::new();
    for &n in n_list {
        let w = weights.build(n)?;
        let example = make_example(n, &w)?;
        let base_objective = {
            let diff: Vec<f64> = example
                .x
                .values()
                .iter()
                .zip(example.y_star.values())
                .map(|(a, b)| a - b)
                .collect();
            w.norm(&diff)?
        };
        let per_rep: Vec<Vec<ExperimentRow>> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let rep_seed = seed ^ rep as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(rep_seed);
                let d: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                let a0_coeffs: Vec<f64> = example
                    .a_star
                    .coeffs()
                    .iter()
                    .zip(&d)
                    .map(|(a, di)| a + 1e-6 * di)
                    .collect();
                let a0 = GlrrVector::new(a0_coeffs).expect("perturbed start is nonzero");
                let mut cell = Vec::with_capacity(6);
                for variant in STABILITY_VARIANTS {
                    let opts = VpgnOptions::new(variant, w.clone());
                    match vpgn_solve(&example.x, &a0, &opts) {
                        Ok(report) => {
                            let distance = euclidean_distance(
                                report.estimate.values(),
                                example.y_star.values(),
                            );
                            let diff: Vec<f64> = example
                                .x
                                .values()
                                .iter()
                                .zip(report.estimate.values())
                                .map(|(a, b)| a - b)
                                .collect();
                            let gap = w.norm(&diff).map(|o| o - base_objective);
                            cell.push(ExperimentRow {
                                n,
                                method: variant.name().to_string(),
                                metric: "distance".into(),
                                value: Some(distance),
                                diverged: false,
                                replication: rep as u64,
                                seed: rep_seed,
                            });
                            cell.push(ExperimentRow {
                                n,
                                method: variant.name().to_string(),
                                metric: "objective_gap".into(),
                                value: gap.as_ref().ok().copied(),
                                diverged: gap.is_err(),
                                replication: rep as u64,
                                seed: rep_seed,
                            });
                        }
                        Err(_) => {
                            for metric in ["distance", "objective_gap"] {
                                cell.push(ExperimentRow {
                                    n,
                                    method: variant.name().to_string(),
                                    metric: metric.into(),
                                    value: None,
                                    diverged: true,
                                    replication: rep as u64,
                                    seed: rep_seed,
                                });
                            }
                        }
                    }
                }
                cell
            })
            .collect();
        for cell in per_rep {
            rows.extend(cell);
        }
    }
    write_rows_csv(&out_dir.join("stability.csv"), &rows)?;

    let summary = summarize_stability(&rows);
    let mut writer = csv::Writer::from_path(out_dir.join("stability_summary.csv"))?;
    for row in &summary {
        writer.serialize(row)?;
    }
    writer.flush()?;

    let series: Vec<(String, Vec<(f64, f64)>)> = STABILITY_VARIANTS
        .iter()
        .map(|v| {
            let pts = summary
                .iter()
                .filter(|s| s.method == v.name() && s.metric == "distance")
                .filter_map(|s| s.mean.map(|m| (s.n as f64, m)))
                .collect();
            (v.name().to_string(), pts)
        })
        .collect();
    write_svg_loglog(
        &out_dir.join("stability.svg"),
        "Mean distance to the solution",
        "N",
        "mean distance",
        &series,
    )?;
    Ok(rows)
}

/// Aggregated view of the stability rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n: usize,
    pub method: String,
    pub metric: String,
    /// Mean over non-diverged replications; missing when all diverged.
    pub mean: Option<f64>,
    pub diverged_count: usize,
    pub total: usize,
}

/// Means over replications, in deterministic (n, method, metric) order.
pub fn summarize_stability(rows: &[ExperimentRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(usize, String, String)> = rows
        .iter()
        .map(|r| (r.n, r.method.clone(), r.metric.clone()))
        .collect();
    keys.sort();
    keys.dedup();
    keys.iter()
        .map(|(n, method, metric)| {
            let cells: Vec<&ExperimentRow> = rows
                .iter()
                .filter(|r| r.n == *n && &r.method == method && &r.metric == metric)
                .collect();
            let good: Vec<f64> = cells.iter().filter_map(|r| r.value).collect();
            SummaryRow {
                n: *n,
                method: method.clone(),
                metric: metric.clone(),
                mean: if good.is_empty() {
                    None
                } else {
                    Some(good.iter().sum::<f64>() / good.len() as f64)
                },
                diverged_count: cells.iter().filter(|r| r.diverged).count(),
                total: cells.len(),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// SVG output
// ---------------------------------------------------------------------------

const SVG_PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Minimal log-log line chart; positive finite points only.
pub fn write_svg_loglog(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> Result<()> {
    let width = 640.0;
    let height = 480.0;
    let margin_left = 70.0;
    let margin_right = 20.0;
    let margin_top = 40.0;
    let margin_bottom = 50.0;

    let points: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().cloned())
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .collect();
    let (x_min, x_max, y_min, y_max) = if points.is_empty() {
        (0.0, 1.0, 0.0, 1.0)
    } else {
        let xs: Vec<f64> = points.iter().map(|p| p.0.log10()).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1.log10()).collect();
        let pad = 0.25;
        (
            xs.iter().cloned().fold(f64::INFINITY, f64::min) - pad,
            xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + pad,
            ys.iter().cloned().fold(f64::INFINITY, f64::min) - pad,
            ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + pad,
        )
    };
    let x_span = (x_max - x_min).max(1e-9);
    let y_span = (y_max - y_min).max(1e-9);
    let to_px = |x: f64, y: f64| {
        let px = margin_left + (x.log10() - x_min) / x_span * (width - margin_left - margin_right);
        let py = height
            - margin_bottom
            - (y.log10() - y_min) / y_span * (height - margin_top - margin_bottom);
        (px, py)
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{title}</text>\n",
        width / 2.0
    ));
    svg.push_str(&format!(
        "<rect x=\"{margin_left}\" y=\"{margin_top}\" width=\"{}\" height=\"{}\" \
         fill=\"none\" stroke=\"black\"/>\n",
        width - margin_left - margin_right,
        height - margin_top - margin_bottom
    ));
    for decade in (x_min.ceil() as i64)..=(x_max.floor() as i64) {
        let (px, _) = to_px(10f64.powi(decade as i32), 1.0);
        svg.push_str(&format!(
            "<line x1=\"{px:.1}\" y1=\"{margin_top}\" x2=\"{px:.1}\" y2=\"{:.1}\" \
             stroke=\"#dddddd\"/>\n",
            height - margin_bottom
        ));
        svg.push_str(&format!(
            "<text x=\"{px:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">1e{decade}</text>\n",
            height - margin_bottom + 16.0
        ));
    }
    for decade in (y_min.ceil() as i64)..=(y_max.floor() as i64) {
        let (_, py) = to_px(1.0, 10f64.powi(decade as i32));
        svg.push_str(&format!(
            "<line x1=\"{margin_left}\" y1=\"{py:.1}\" x2=\"{:.1}\" y2=\"{py:.1}\" \
             stroke=\"#dddddd\"/>\n",
            width - margin_right
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{py:.1}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">1e{decade}</text>\n",
            margin_left - 6.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\">{x_label}</text>\n",
        width / 2.0,
        height - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{y_label}</text>\n",
        height / 2.0,
        height / 2.0
    ));
    for (idx, (name, pts)) in series.iter().enumerate() {
        let color = SVG_PALETTE[idx % SVG_PALETTE.len()];
        let good: Vec<(f64, f64)> = pts
            .iter()
            .cloned()
            .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
            .collect();
        if !good.is_empty() {
            let path_d: Vec<String> = good
                .iter()
                .map(|&(x, y)| {
                    let (px, py) = to_px(x, y);
                    format!("{px:.1},{py:.1}")
                })
                .collect();
            svg.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" \
                 points=\"{}\"/>\n",
                path_d.join(" ")
            ));
            for &(x, y) in &good {
                let (px, py) = to_px(x, y);
                svg.push_str(&format!(
                    "<circle cx=\"{px:.1}\" cy=\"{py:.1}\" r=\"2.5\" fill=\"{color}\"/>\n"
                ));
            }
        }
        let ly = margin_top + 14.0 + 16.0 * idx as f64;
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" \
             stroke=\"{color}\" stroke-width=\"2\"/>\n",
            width - 150.0,
            width - 130.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" \
             font-size=\"12\">{name}</text>\n",
            width - 124.0,
            ly + 4.0
        ));
    }
    svg.push_str("</svg>\n");

    let mut file = std::fs::File::create(path)?;
    file.write_all(svg.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glrr::glrr_residual;
    use crate::weights::ar1_weight;
    use approx::assert_relative_eq;

    #[test]
    fn grid_and_y_star_at_n3() {
        let grid = example_grid(3);
        assert_eq!(grid, vec![-1.0, 0.0, 1.0]);
        let y = example_y_star(3).unwrap();
        let s = 1.0 / 2.0_f64.sqrt();
        assert_relative_eq!(y[0], s, epsilon = 1e-15);
        assert_relative_eq!(y[1], 0.0, epsilon = 1e-15);
        assert_relative_eq!(y[2], s, epsilon = 1e-15);
    }

    #[test]
    fn legendre_basis_shapes_and_orthonormality() {
        let grid = example_grid(21);
        let basis = legendre_basis(&grid, 5);
        assert_eq!(basis.ncols(), 6);
        let gram = basis.transpose() * &basis;
        assert_relative_eq!(
            (gram - DMatrix::<f64>::identity(6, 6)).norm(),
            0.0,
            epsilon = 1e-12
        );
        // Degree 0 is a constant column, degree 1 proportional to t.
        let b0 = legendre_basis(&grid, 0);
        let first = b0[(0, 0)];
        for i in 0..21 {
            assert_relative_eq!(b0[(i, 0)], first, epsilon = 1e-12);
        }
        let b1 = legendre_basis(&grid, 1);
        let ratio = b1[(20, 1)] / grid[20];
        for i in 0..21 {
            assert_relative_eq!(b1[(i, 1)], ratio * grid[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn example_invariants_hold() {
        for n in [8usize, 21, 100] {
            for w in [
                WeightOperator::identity(n),
                ar1_weight(n, 0.5, 1.0).unwrap(),
            ] {
                let ex = make_example(n, &w).unwrap();
                assert_relative_eq!(ex.y_star.norm(), 1.0, epsilon = 1e-12);
                assert!(glrr_residual(&ex.y_star, &ex.a_star).unwrap() < 1e-12);
                // Stationarity: the residual X - Y* is W-orthogonal to the
                // tangent subspace, checked through the Legendre basis.
                let tangent = legendre_basis(&ex.grid, 5);
                let diff: Vec<f64> =
                    ex.x.values()
                        .iter()
                        .zip(ex.y_star.values())
                        .map(|(a, b)| a - b)
                        .collect();
                let proj = project_onto_basis(&tangent, &w, &diff).unwrap();
                let norm = proj.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!(norm < 1e-10, "stationarity defect {norm} at N={n}");
            }
        }
    }

    #[test]
    fn projection_example_identity() {
        let n = 100;
        let w = WeightOperator::identity(n);
        let ex = make_projection_example(n, &w).unwrap();
        let oracle = crate::projection::oracle_project_dense(&ex.a_star, &w, &ex.p).unwrap();
        let dist = euclidean_distance(oracle.values(), ex.y_star.values());
        assert!(dist < 1e-10, "oracle distance {dist}");
    }

    #[test]
    fn slope_fit_recovers_power_law() {
        let pts: Vec<(usize, f64)> = [64usize, 128, 256, 512]
            .iter()
            .map(|&n| (n, 3.0 * (n as f64).powi(2)))
            .collect();
        assert_relative_eq!(fit_log_log_slope(&pts), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn rows_round_trip_through_csv() {
        let dir = std::env::temp_dir().join("glrr_rows_roundtrip");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rows.csv");
        let rows = vec![
            ExperimentRow {
                n: 100,
                method: "svp".into(),
                metric: "accuracy".into(),
                value: Some(1.25e-9),
                diverged: false,
                replication: 0,
                seed: 42,
            },
            ExperimentRow {
                n: 5000,
                method: "vp".into(),
                metric: "accuracy".into(),
                value: None,
                diverged: true,
                replication: 3,
                seed: 41,
            },
        ];
        write_rows_csv(&path, &rows).unwrap();
        let back = read_rows_csv(&path).unwrap();
        assert_eq!(rows, back);
    }
}
