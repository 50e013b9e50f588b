//! Aggregation and output of evaluation results.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{by_category, PairReport};

/// Units of each reported quantity, written at the top of every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportUnits {
    pub type_accuracy: &'static str,
    pub axis_error: &'static str,
    pub origin_error: &'static str,
    pub origin_line_error: &'static str,
    pub iou: &'static str,
    pub cd: &'static str,
}

impl Default for ReportUnits {
    fn default() -> Self {
        ReportUnits {
            type_accuracy: "fraction of parts with the correct joint type",
            axis_error: "radians between unsigned axes, in [0, pi/2]",
            origin_error: "L2 distance between joint origins, mesh units (metres for metre-scale meshes)",
            origin_line_error: "distance from predicted origin to the true axis line, mesh units",
            iou: "64^3 occupancy IoU in a shared normalization",
            cd: "symmetric mean nearest-neighbour distance of surface samples, normalized units",
        }
    }
}

/// Arithmetic means over a set of pair reports. Optional columns average
/// only the pairs that define them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub count: usize,
    pub type_accuracy: f64,
    pub axis_error: Option<f64>,
    pub origin_error: Option<f64>,
    pub origin_line_error: Option<f64>,
    pub iou: f64,
    pub cd: f64,
}

fn mean_of(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for x in v {
        sum += x;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

pub fn aggregate<'a>(pairs: impl IntoIterator<Item = &'a PairReport> + Clone) -> Aggregate {
    let it = || pairs.clone().into_iter();
    Aggregate {
        count: it().count(),
        type_accuracy: mean_of(it().map(|p| p.type_accuracy)).unwrap_or(f64::NAN),
        axis_error: mean_of(it().filter_map(|p| p.axis_error)),
        origin_error: mean_of(it().filter_map(|p| p.origin_error)),
        origin_line_error: mean_of(it().filter_map(|p| p.origin_line_error)),
        iou: mean_of(it().map(|p| p.iou)).unwrap_or(f64::NAN),
        cd: mean_of(it().map(|p| p.cd)).unwrap_or(f64::NAN),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub units: ReportUnits,
    pub pairs: Vec<PairReport>,
    pub aggregate: Aggregate,
    pub categories: BTreeMap<String, Aggregate>,
}

impl EvaluationReport {
    pub fn new(pairs: Vec<PairReport>) -> Self {
        let overall = aggregate(&pairs);
        let categories = by_category(&pairs).into_iter().map(|(c, ps)| (c, aggregate(ps.iter().copied()))).collect();
        EvaluationReport { units: ReportUnits::default(), pairs, aggregate: overall, categories }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Aligned columns: Type, Axis, Origin, IoU, CD, then the auxiliary
    /// origin-to-line distance.
    pub fn to_text(&self) -> String {
        let f = |v: f64| format!("{v:.4}");
        let o = |v: Option<f64>| v.map_or_else(|| "-".to_string(), f);
        let row = |name: &str, t: f64, a: Option<f64>, or: Option<f64>, iou: f64, cd: f64, line: Option<f64>| {
            vec![name.to_string(), f(t), o(a), o(or), f(iou), f(cd), o(line)]
        };
        let mut rows = vec![["Asset", "Type", "Axis", "Origin", "IoU", "CD", "OriginLine"].map(String::from).to_vec()];
        for p in &self.pairs {
            rows.push(row(&p.name, p.type_accuracy, p.axis_error, p.origin_error, p.iou, p.cd, p.origin_line_error));
        }
        let agg_row = |label: String, a: &Aggregate| {
            row(&label, a.type_accuracy, a.axis_error, a.origin_error, a.iou, a.cd, a.origin_line_error)
        };
        let named_categories = self.categories.len() > 1 || self.categories.keys().any(|c| !c.is_empty());
        if named_categories {
            for (c, a) in &self.categories {
                let label = if c.is_empty() { "(none)" } else { c };
                rows.push(agg_row(format!("[{label}] mean"), a));
            }
        }
        rows.push(agg_row("mean".into(), &self.aggregate));

        let widths: Vec<usize> = (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
        let u = &self.units;
        let mut out = format!("# Axis: {}\n# Origin: {}\n# CD: {}\n", u.axis_error, u.origin_error, u.cd);
        for r in &rows {
            let cells: Vec<String> = r
                .iter()
                .enumerate()
                .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}
