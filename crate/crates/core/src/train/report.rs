use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::fit::EpochStats;
use super::metrics::{ConfusionMatrix, Metrics};
use crate::data::CLASS_NAMES;
use crate::error::{Error, Result};

pub fn metrics_json(m: &Metrics) -> String {
    format!(
        "{{\n  \"accuracy\": {:.6},\n  \"precision\": {:.6},\n  \"recall\": {:.6},\n  \"f1\": {:.6}\n}}\n",
        m.accuracy, m.precision, m.recall, m.f1
    )
}

pub fn confusion_csv(cm: &ConfusionMatrix) -> String {
    let rows = cm.as_rows();
    let mut s = format!("actual\\predicted,{},{}\n", CLASS_NAMES[0], CLASS_NAMES[1]);
    for (name, row) in CLASS_NAMES.iter().zip(rows) {
        writeln!(s, "{name},{},{}", row[0], row[1]).unwrap();
    }
    s
}

pub fn history_csv(history: &[EpochStats]) -> String {
    let mut s = String::from("epoch,loss,accuracy,seconds\n");
    for e in history {
        writeln!(
            s,
            "{},{:.6},{:.6},{:.3}",
            e.epoch, e.loss, e.accuracy, e.seconds
        )
        .unwrap();
    }
    s
}

/// Writes `metrics.json`, `confusion.csv` and, when given, `history.csv`.
pub fn emit_reports(
    dir: impl AsRef<Path>,
    metrics: &Metrics,
    confusion: &ConfusionMatrix,
    history: Option<&[EpochStats]>,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: String| {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))
    };
    write("metrics.json", metrics_json(metrics))?;
    write("confusion.csv", confusion_csv(confusion))?;
    if let Some(h) = history {
        write("history.csv", history_csv(h))?;
    }
    Ok(())
}
