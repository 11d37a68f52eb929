use std::path::Path;

use super::VeracityError;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledText {
    pub fake: bool,
    pub text: String,
}

fn read(path: &Path) -> Result<String, VeracityError> {
    std::fs::read_to_string(path).map_err(|e| VeracityError::Dataset(format!("{}: {e}", path.display())))
}

/// Reads `label<TAB>text` lines with label `fake` or `real`.
pub fn load_labeled_tsv(path: impl AsRef<Path>) -> Result<Vec<LabeledText>, VeracityError> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (i, line) in read(path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (label, text) = line
            .split_once('\t')
            .ok_or_else(|| VeracityError::Dataset(format!("{}:{}: missing tab", path.display(), i + 1)))?;
        let fake = match label.trim().to_lowercase().as_str() {
            "fake" => true,
            "real" => false,
            other => {
                return Err(VeracityError::Dataset(format!(
                    "{}:{}: unknown label {other:?}",
                    path.display(),
                    i + 1
                )))
            }
        };
        out.push(LabeledText {
            fake,
            text: text.to_string(),
        });
    }
    Ok(out)
}

/// Binary reading of the six LIAR ratings.
fn liar_label(raw: &str) -> Option<bool> {
    match raw.trim() {
        "pants-fire" | "false" | "barely-true" => Some(true),
        "half-true" | "mostly-true" | "true" => Some(false),
        _ => None,
    }
}

/// Loads the LIAR benchmark from a directory holding its `train.tsv`,
/// `valid.tsv` and `test.tsv` (14 tab-separated columns: id, rating,
/// statement, ...). Missing files are skipped; at least one must exist.
pub fn load_liar(dir: impl AsRef<Path>) -> Result<Vec<LabeledText>, VeracityError> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    let mut found = false;
    for name in ["train.tsv", "valid.tsv", "test.tsv"] {
        let path = dir.join(name);
        if !path.exists() {
            continue;
        }
        found = true;
        for (i, line) in read(&path)?.lines().enumerate() {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 3 {
                if line.trim().is_empty() {
                    continue;
                }
                return Err(VeracityError::Dataset(format!("{}:{}: too few columns", path.display(), i + 1)));
            }
            let fake = liar_label(cols[1]).ok_or_else(|| {
                VeracityError::Dataset(format!("{}:{}: unknown rating {:?}", path.display(), i + 1, cols[1]))
            })?;
            out.push(LabeledText {
                fake,
                text: cols[2].to_string(),
            });
        }
    }
    if !found {
        return Err(VeracityError::Dataset(format!("no LIAR files in {}", dir.display())));
    }
    Ok(out)
}
