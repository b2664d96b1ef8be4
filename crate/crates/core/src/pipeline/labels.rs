use std::path::Path;

use serde::Serialize;

use super::records::{list_records, read_tracks};
use super::PipelineError;
use crate::maskops::{validate_track, RuleOptions, RuleReport};

#[derive(Debug, Clone, Serialize)]
pub struct TrackCheck {
    /// 1-based position among the record's tracks.
    pub instance: usize,
    pub first_frame: usize,
    pub valid: bool,
    pub rules: RuleReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct RecordCheck {
    pub record_id: String,
    pub tracks: Vec<TrackCheck>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LabelReport {
    pub tracks_checked: usize,
    pub tracks_valid: usize,
    /// Records without an instance file.
    pub records_skipped: Vec<String>,
    pub records: Vec<RecordCheck>,
}

/// Run the four-rule check on every instance track of every record under
/// `root`.
pub fn validate_labels(root: &Path, opts: &RuleOptions) -> Result<LabelReport, PipelineError> {
    let mut report = LabelReport {
        tracks_checked: 0,
        tracks_valid: 0,
        records_skipped: Vec::new(),
        records: Vec::new(),
    };
    for (id, dir) in list_records(root)? {
        let Some((tracks, masks)) = read_tracks(&dir)? else {
            report.records_skipped.push(id);
            continue;
        };
        let mut checks = Vec::with_capacity(tracks.len());
        for (i, t) in tracks.iter().enumerate() {
            let first = t.first_frame().unwrap_or(0);
            let prior = first.checked_sub(1).map(|f| &masks[f]);
            let rules = validate_track(t, prior, opts);
            report.tracks_checked += 1;
            report.tracks_valid += usize::from(rules.is_valid());
            checks.push(TrackCheck {
                instance: i + 1,
                first_frame: first,
                valid: rules.is_valid(),
                rules,
            });
        }
        report.records.push(RecordCheck {
            record_id: id,
            tracks: checks,
        });
    }
    Ok(report)
}
