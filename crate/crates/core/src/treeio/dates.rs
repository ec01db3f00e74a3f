//! Tip-date tables (`label,date`) applied to a parsed tree.

use std::collections::HashMap;

use super::tree::{DateDirection, DateReference, TimeTree};
use crate::error::{Error, Result};

/// Relative slack allowed between dated tips and branch-length-derived heights.
pub const DATE_CONSISTENCY_TOL: f64 = 1e-4;

/// Read a `label,date` CSV into a map. Row numbers in errors are 1-based file lines.
pub fn read_tip_dates(table: &str) -> Result<HashMap<String, f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(table.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.len() != 2
        || !headers[0].eq_ignore_ascii_case("label")
        || !headers[1].eq_ignore_ascii_case("date")
    {
        return Err(Error::TipDates(format!(
            "expected header 'label,date', found '{}'",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut dates = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let label = record[0].to_string();
        let date: f64 = record[1].parse().map_err(|_| {
            Error::TipDates(format!("line {line}: invalid date '{}'", &record[1]))
        })?;
        if !date.is_finite() {
            return Err(Error::TipDates(format!("line {line}: non-finite date")));
        }
        if dates.insert(label.clone(), date).is_some() {
            return Err(Error::TipDates(format!("line {line}: duplicate row for '{label}'")));
        }
    }
    Ok(dates)
}

/// Set tip heights from dates and carry branch lengths up to the internal nodes.
///
/// Forward dates become `height = max_date - date`; backward ages are shifted so
/// the youngest tip sits at 0. Internal heights are propagated from the dated
/// tips along the tree's branch lengths, which must agree across both children
/// to within [`DATE_CONSISTENCY_TOL`] of the tree height.
pub fn parse_tip_dates(table: &str, tree: &TimeTree, direction: DateDirection) -> Result<TimeTree> {
    let dates = read_tip_dates(table)?;
    apply_tip_dates(&dates, tree, direction)
}

pub fn apply_tip_dates(
    dates: &HashMap<String, f64>,
    tree: &TimeTree,
    direction: DateDirection,
) -> Result<TimeTree> {
    for label in dates.keys() {
        if tree.tip_by_label(label).is_none() {
            return Err(Error::TipDates(format!("unknown tip label '{label}'")));
        }
    }
    let mut raw = vec![0.0; tree.nodes().len()];
    for (id, node) in tree.tips() {
        let label = node.label.as_deref().unwrap_or("");
        raw[id] = *dates
            .get(label)
            .ok_or_else(|| Error::TipDates(format!("no date for tip '{label}'")))?;
    }
    let youngest = match direction {
        DateDirection::Forward => tree.tips().map(|(id, _)| raw[id]).fold(f64::NEG_INFINITY, f64::max),
        DateDirection::Backward => tree.tips().map(|(id, _)| raw[id]).fold(f64::INFINITY, f64::min),
    };
    let reference = DateReference {
        direction,
        youngest,
    };

    let scale = tree.root_height().max(f64::MIN_POSITIVE);
    let mut heights = vec![0.0; tree.nodes().len()];
    for id in tree.postorder() {
        let node = tree.node(id);
        heights[id] = match node.children {
            None => reference.to_height(raw[id]),
            Some([a, b]) => {
                let via_a = heights[a] + tree.branch_length(a);
                let via_b = heights[b] + tree.branch_length(b);
                if (via_a - via_b).abs() > DATE_CONSISTENCY_TOL * scale {
                    return Err(Error::TipDates(format!(
                        "dates inconsistent with branch lengths below node {id} ({via_a} vs {via_b})"
                    )));
                }
                via_a.max(via_b)
            }
        };
    }
    let mut out = tree.clone();
    out.set_heights(&heights);
    out.set_reference(Some(reference));
    out.validate()?;
    Ok(out)
}
