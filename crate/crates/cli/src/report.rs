use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use gopctl_core::gop::reference_schedule;
use gopctl_core::SearchResult;

#[derive(Debug, Serialize)]
pub struct FrameRow {
    pub t: usize,
    #[serde(rename = "type")]
    pub frame_type: String,
    #[serde(rename = "ref")]
    pub reference: i64,
    pub bits: f64,
    pub loss: f64,
}

#[derive(Debug, Serialize)]
pub struct SearchReport {
    pub gop: usize,
    pub lambda: f64,
    pub structure: String,
    pub binary: Option<String>,
    pub objective: f64,
    pub leaves_visited: u64,
    pub frames: Vec<FrameRow>,
    pub wall_time_ms: f64,
}

impl SearchReport {
    pub fn new(result: &SearchResult, lambda: f64, wall_time_ms: f64) -> Self {
        let refs = reference_schedule(&result.structure);
        let frames = result
            .all_frames()
            .iter()
            .zip(result.structure.frames())
            .zip(refs.refs())
            .enumerate()
            .map(|(t, ((o, ft), &r))| FrameRow {
                t,
                frame_type: ft.to_string(),
                reference: r,
                bits: o.bits,
                loss: o.task_loss,
            })
            .collect();
        Self {
            gop: result.structure.len(),
            lambda,
            structure: result.structure.to_string(),
            binary: result.structure.binary_string().ok(),
            objective: result.objective,
            leaves_visited: result.leaves_visited,
            frames,
            wall_time_ms,
        }
    }

    pub fn summary(&self) -> String {
        format!("{} objective={:.6}", self.structure, self.objective)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("t,type,ref,bits,loss\n");
        for f in &self.frames {
            out.push_str(&format!("{},{},{},{},{}\n", f.t, f.frame_type, f.reference, f.bits, f.loss));
        }
        out
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
