use std::path::Path;

use rerender_core::intervention::{ActivationSet, ChainRunner, Registry};
use rerender_core::Frame;

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ApplySummary {
    pub frames: usize,
    pub changed: usize,
}

/// Maps each name to an intervention id. A name may be an id, `owner/name`,
/// or a bare name owned by exactly one user.
pub fn resolve(reg: &Registry, names: &[String]) -> Result<Vec<String>, Failure> {
    let mut ids = Vec::new();
    let mut unknown = Vec::new();
    for n in names {
        if reg.spec(n).is_some() {
            ids.push(n.clone());
            continue;
        }
        let found: Vec<&str> = match n.split_once('/') {
            Some((owner, name)) => reg.find(owner, name).map(|s| s.intervention_id.as_str()).into_iter().collect(),
            None => reg.specs().filter(|s| &s.name == n).map(|s| s.intervention_id.as_str()).collect(),
        };
        match found.as_slice() {
            [id] => ids.push(id.to_string()),
            [] => unknown.push(n.clone()),
            _ => return Err(Failure::domain(format!("intervention {n} is ambiguous; use owner/name"))),
        }
    }
    if !unknown.is_empty() {
        let mut available: Vec<String> = reg.specs().map(|s| format!("{}/{}", s.owner, s.name)).collect();
        available.sort();
        let available = if available.is_empty() { "(none)".to_string() } else { available.join(", ") };
        return Err(Failure::domain(format!(
            "unknown intervention(s): {}; available: {available}",
            unknown.join(", ")
        )));
    }
    Ok(ids)
}

/// Applies `ids` in order to every PNG in `input`, writing same-named files
/// to `output`. Frames the chain leaves untouched are copied byte for byte.
pub fn apply_dir(input: &Path, output: &Path, reg: &Registry, ids: Vec<String>) -> Result<ApplySummary, Failure> {
    if !input.is_dir() {
        return Err(Failure::usage(format!("input directory {} does not exist", input.display())));
    }
    let active = ActivationSet::new("cli", ids).map_err(|e| Failure::usage(e.to_string()))?;
    std::fs::create_dir_all(output).map_err(|e| Failure::usage(format!("cannot create {}: {e}", output.display())))?;
    let mut files: Vec<_> = std::fs::read_dir(input)
        .map_err(|e| Failure::usage(format!("cannot list {}: {e}", input.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    let mut runner = ChainRunner::new();
    let mut summary = ApplySummary { frames: 0, changed: 0 };
    for path in files {
        let name = path.file_name().expect("listed files have names");
        let bytes = std::fs::read(&path).map_err(|e| Failure::domain(format!("{}: {e}", path.display())))?;
        let frame = Frame::decode(&bytes).map_err(|e| Failure::domain(format!("{}: {e}", path.display())))?;
        let out = runner.apply(&frame, &active, reg);
        let dest = output.join(name);
        let written = if out.pixels == frame.pixels {
            std::fs::write(&dest, &bytes).map_err(rerender_core::Error::from)
        } else {
            summary.changed += 1;
            out.write_png(&dest)
        };
        written.map_err(|e| Failure::domain(format!("{}: {e}", dest.display())))?;
        summary.frames += 1;
    }
    Ok(summary)
}
