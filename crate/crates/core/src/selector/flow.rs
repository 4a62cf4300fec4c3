use crate::error::{Error, Result};

pub const BLOCK_SIZE: usize = 16;
pub const SEARCH_RANGE: i64 = 8;

/// Block-matching motion between two luma frames (row-major `h×w`).
///
/// Each block of `current` is matched against `previous` by SAD over
/// displacements within ±[`SEARCH_RANGE`]; candidates reaching outside the
/// frame are skipped. The returned `2×h×w` field holds, for every pixel of
/// the block, the motion `(dx, dy)` from the matched position in `previous`.
/// Ties go to the smaller displacement, then to scan order.
pub fn block_matching_flow(previous: &[f32], current: &[f32], width: usize, height: usize) -> Result<Vec<f64>> {
    let n = width * height;
    if previous.len() != n || current.len() != n {
        return Err(Error::DimMismatch(format!(
            "frames have {} and {} pixels, expected {height}x{width}",
            previous.len(),
            current.len()
        )));
    }
    let mut flow = vec![0.0; 2 * n];
    for by in (0..height).step_by(BLOCK_SIZE) {
        for bx in (0..width).step_by(BLOCK_SIZE) {
            let bw = BLOCK_SIZE.min(width - bx);
            let bh = BLOCK_SIZE.min(height - by);
            let mut best = (f64::INFINITY, i64::MAX, 0i64, 0i64);
            for dy in -SEARCH_RANGE..=SEARCH_RANGE {
                for dx in -SEARCH_RANGE..=SEARCH_RANGE {
                    let (sx, sy) = (bx as i64 + dx, by as i64 + dy);
                    if sx < 0 || sy < 0 || sx as usize + bw > width || sy as usize + bh > height {
                        continue;
                    }
                    let mut sad = 0.0f64;
                    for y in 0..bh {
                        let cur = &current[(by + y) * width + bx..][..bw];
                        let prev = &previous[(sy as usize + y) * width + sx as usize..][..bw];
                        sad += cur.iter().zip(prev).map(|(a, b)| (a - b).abs() as f64).sum::<f64>();
                    }
                    let norm = dx * dx + dy * dy;
                    if sad < best.0 || (sad == best.0 && norm < best.1) {
                        best = (sad, norm, dx, dy);
                    }
                }
            }
            let (mx, my) = (-best.2 as f64, -best.3 as f64);
            for y in by..by + bh {
                for x in bx..bx + bw {
                    flow[y * width + x] = mx;
                    flow[n + y * width + x] = my;
                }
            }
        }
    }
    Ok(flow)
}
