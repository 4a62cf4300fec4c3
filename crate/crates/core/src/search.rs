//! GoP-structure search.
//!
//! The objective averages over predicted frames only: the I frame costs the
//! same under every candidate structure. Candidates are compared by
//! objective, then by number of `P` frames (fewer wins), then by binary
//! vector (lexicographically smaller wins). Exhaustive methods visit leaves
//! in ascending binary order, so the first candidate found wins exact ties.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::backend::{roll_out, Backend, BackendState, EncodeOutcome};
use crate::error::{Error, Result};
use crate::gop::{FrameType, GopStructure};

/// Largest GoP accepted by the exhaustive searches.
pub const MAX_EXHAUSTIVE_GOP: usize = 22;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub structure: GopStructure,
    pub objective: f64,
    /// Outcome of the leading I frame.
    pub intra: EncodeOutcome,
    /// Outcomes of the predicted frames, in frame order.
    pub per_frame: Vec<EncodeOutcome>,
    pub leaves_visited: u64,
}

impl SearchResult {
    pub fn total_bits(&self) -> f64 {
        self.intra.bits + self.per_frame.iter().map(|o| o.bits).sum::<f64>()
    }

    /// Every frame's outcome, I frame first.
    pub fn all_frames(&self) -> Vec<EncodeOutcome> {
        std::iter::once(self.intra.clone()).chain(self.per_frame.iter().cloned()).collect()
    }
}

/// `mean(bits) + λ·mean(task_loss)` over predicted-frame outcomes.
pub fn objective(outcomes: &[EncodeOutcome], lambda: f64) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::invalid("objective needs at least one predicted frame"));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let n = outcomes.len() as f64;
    let bits: f64 = outcomes.iter().map(|o| o.bits).sum();
    let loss: f64 = outcomes.iter().map(|o| o.task_loss).sum();
    Ok(bits / n + lambda * (loss / n))
}

fn check_exhaustive(n: usize, lambda: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::invalid(format!("a GoP of {n} frame(s) has no predicted frames to search")));
    }
    if n > MAX_EXHAUSTIVE_GOP {
        return Err(Error::invalid(format!(
            "exhaustive search supports GoPs up to {MAX_EXHAUSTIVE_GOP} frames, got {n}"
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    Ok(())
}

/// Best leaf seen so far, with its tie-break key.
#[derive(Debug, Clone)]
struct Candidate {
    objective: f64,
    ones: usize,
    bits: Vec<bool>,
    outcomes: Vec<EncodeOutcome>,
}

impl Candidate {
    fn cmp_key(&self, other: &Candidate) -> Ordering {
        self.objective
            .total_cmp(&other.objective)
            .then(self.ones.cmp(&other.ones))
            .then_with(|| self.bits.cmp(&other.bits))
    }
}

fn keep_better(best: &mut Option<Candidate>, cand: Candidate) {
    match best {
        Some(b) if cand.cmp_key(b) != Ordering::Less => {}
        _ => *best = Some(cand),
    }
}

fn encode_intra(backend: &dyn Backend) -> Result<EncodeOutcome> {
    backend.encode(&BackendState::initial(), 0, FrameType::I)
}

fn finish(intra: EncodeOutcome, best: Candidate, leaves: u64) -> Result<SearchResult> {
    let n = best.bits.len() + 1;
    Ok(SearchResult {
        structure: GopStructure::from_binary(&best.bits, n)?,
        objective: best.objective,
        intra,
        per_frame: best.outcomes,
        leaves_visited: leaves,
    })
}

/// Rolls every one of the `2^(n-1)` binary structures through the backend.
pub fn brute_force(backend: &dyn Backend, n: usize, lambda: f64) -> Result<SearchResult> {
    check_exhaustive(n, lambda)?;
    let intra = encode_intra(backend)?;
    let len = n - 1;
    let mut best = None;
    let mut leaves = 0u64;
    for v in 0u64..(1u64 << len) {
        let bits: Vec<bool> = (0..len).map(|i| v >> (len - 1 - i) & 1 == 1).collect();
        let mut state = intra.new_state.clone();
        let mut outcomes = Vec::with_capacity(len);
        for (i, &b) in bits.iter().enumerate() {
            let ft = if b { FrameType::P } else { FrameType::Pm };
            let o = backend.encode(&state, i + 1, ft)?;
            state = o.new_state.clone();
            outcomes.push(o);
        }
        leaves += 1;
        let cand = Candidate {
            objective: objective(&outcomes, lambda)?,
            ones: v.count_ones() as usize,
            bits,
            outcomes,
        };
        keep_better(&mut best, cand);
    }
    finish(intra, best.expect("at least one leaf"), leaves)
}

struct Dfs<'a> {
    backend: &'a dyn Backend,
    n: usize,
    lambda: f64,
    path: Vec<bool>,
    outcomes: Vec<EncodeOutcome>,
    best: Option<Candidate>,
    leaves: u64,
}

impl Dfs<'_> {
    fn recurse(&mut self, state: &BackendState, depth: usize) -> Result<()> {
        if depth == self.n {
            self.leaves += 1;
            let obj = objective(&self.outcomes, self.lambda)?;
            let ones = self.path.iter().filter(|&&b| b).count();
            // Clone the path only when it can win.
            let improves = match &self.best {
                None => true,
                Some(b) => obj < b.objective || (obj == b.objective && (ones, &self.path) < (b.ones, &b.bits)),
            };
            if improves {
                self.best = Some(Candidate {
                    objective: obj,
                    ones,
                    bits: self.path.clone(),
                    outcomes: self.outcomes.clone(),
                });
            }
            return Ok(());
        }
        for (bit, ft) in [(false, FrameType::Pm), (true, FrameType::P)] {
            let o = self.backend.encode(state, depth, ft)?;
            let next = o.new_state.clone();
            self.path.push(bit);
            self.outcomes.push(o);
            self.recurse(&next, depth + 1)?;
            self.path.pop();
            self.outcomes.pop();
        }
        Ok(())
    }
}

fn dfs_subtree(
    backend: &dyn Backend,
    n: usize,
    lambda: f64,
    intra: &EncodeOutcome,
    prefix: &[bool],
) -> Result<(Option<Candidate>, u64)> {
    let mut dfs = Dfs {
        backend,
        n,
        lambda,
        path: Vec::with_capacity(n),
        outcomes: Vec::with_capacity(n),
        best: None,
        leaves: 0,
    };
    let mut state = intra.new_state.clone();
    for (i, &b) in prefix.iter().enumerate() {
        let ft = if b { FrameType::P } else { FrameType::Pm };
        let o = backend.encode(&state, i + 1, ft)?;
        state = o.new_state.clone();
        dfs.path.push(b);
        dfs.outcomes.push(o);
    }
    dfs.recurse(&state, prefix.len() + 1)?;
    Ok((dfs.best, dfs.leaves))
}

/// Exhaustive depth-first search: `Pm` branch first, objective at each leaf.
pub fn dfs_optimal(backend: &dyn Backend, n: usize, lambda: f64) -> Result<SearchResult> {
    check_exhaustive(n, lambda)?;
    let intra = encode_intra(backend)?;
    let (best, leaves) = dfs_subtree(backend, n, lambda, &intra, &[])?;
    finish(intra, best.expect("at least one leaf"), leaves)
}

/// [`dfs_optimal`] with the top of the tree split across `jobs` threads.
/// Subtree winners are reduced in prefix order, so the result is identical
/// to the sequential search.
pub fn dfs_optimal_parallel(backend: &dyn Backend, n: usize, lambda: f64, jobs: usize) -> Result<SearchResult> {
    check_exhaustive(n, lambda)?;
    if jobs <= 1 {
        return dfs_optimal(backend, n, lambda);
    }
    let intra = encode_intra(backend)?;
    let mut split = 0;
    while (1usize << split) < jobs && split < n - 1 {
        split += 1;
    }
    let prefixes: Vec<Vec<bool>> = (0..1usize << split)
        .map(|v| (0..split).map(|i| v >> (split - 1 - i) & 1 == 1).collect())
        .collect();
    let results: Vec<Result<(Option<Candidate>, u64)>> = std::thread::scope(|scope| {
        let chunk = prefixes.len().div_ceil(jobs);
        let handles: Vec<_> = prefixes
            .chunks(chunk)
            .map(|group| {
                let intra = &intra;
                scope.spawn(move || {
                    group
                        .iter()
                        .map(|p| dfs_subtree(backend, n, lambda, intra, p))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("search worker panicked"))
            .collect()
    });
    let mut best = None;
    let mut leaves = 0;
    for r in results {
        let (cand, l) = r?;
        leaves += l;
        if let Some(c) = cand {
            keep_better(&mut best, c);
        }
    }
    finish(intra, best.expect("at least one leaf"), leaves)
}

/// Dynamic program over `(frame, reference)` states. Minimizes the summed
/// per-frame cost `bits + λ·loss`, which orders structures like the mean
/// objective at fixed `n`. `leaves_visited` counts distinct states solved.
pub fn memoized_dfs(backend: &dyn Backend, n: usize, lambda: f64) -> Result<SearchResult> {
    check_exhaustive(n, lambda)?;
    let intra = encode_intra(backend)?;
    let mut memo: HashMap<(usize, i64), (f64, Vec<bool>)> = HashMap::new();
    let (_, bits) = solve_memo(backend, n, lambda, 1, &intra.new_state, &mut memo)?;
    let structure = GopStructure::from_binary(&bits, n)?;
    let mut res = evaluate(backend, &structure, lambda)?;
    res.leaves_visited = memo.len() as u64;
    Ok(res)
}

fn solve_memo(
    backend: &dyn Backend,
    n: usize,
    lambda: f64,
    t: usize,
    state: &BackendState,
    memo: &mut HashMap<(usize, i64), (f64, Vec<bool>)>,
) -> Result<(f64, Vec<bool>)> {
    if t == n {
        return Ok((0.0, Vec::new()));
    }
    if let Some(hit) = memo.get(&(t, state.ref_index)) {
        return Ok(hit.clone());
    }
    let mut best: Option<(f64, Vec<bool>)> = None;
    for (bit, ft) in [(false, FrameType::Pm), (true, FrameType::P)] {
        let o = backend.encode(state, t, ft)?;
        let (rest, mut tail) = solve_memo(backend, n, lambda, t + 1, &o.new_state, memo)?;
        let cost = o.bits + lambda * o.task_loss + rest;
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            tail.insert(0, bit);
            best = Some((cost, tail));
        }
    }
    let best = best.expect("two branches");
    memo.insert((t, state.ref_index), best.clone());
    Ok(best)
}

/// Left-to-right choice of the cheaper `bits + λ·loss` per frame; `Pm` on ties.
pub fn greedy(backend: &dyn Backend, n: usize, lambda: f64) -> Result<SearchResult> {
    if n < 2 {
        return Err(Error::invalid("greedy search needs n >= 2"));
    }
    let intra = encode_intra(backend)?;
    let mut state = intra.new_state.clone();
    let mut frames = vec![FrameType::I];
    let mut per_frame = Vec::with_capacity(n - 1);
    for t in 1..n {
        let pm = backend.encode(&state, t, FrameType::Pm)?;
        let p = backend.encode(&state, t, FrameType::P)?;
        let (ft, o) = if p.bits + lambda * p.task_loss < pm.bits + lambda * pm.task_loss {
            (FrameType::P, p)
        } else {
            (FrameType::Pm, pm)
        };
        state = o.new_state.clone();
        frames.push(ft);
        per_frame.push(o);
    }
    Ok(SearchResult {
        structure: GopStructure::new(frames)?,
        objective: objective(&per_frame, lambda)?,
        intra,
        per_frame,
        leaves_visited: 1,
    })
}

/// Scores a fixed structure.
pub fn evaluate(backend: &dyn Backend, structure: &GopStructure, lambda: f64) -> Result<SearchResult> {
    let mut outcomes = roll_out(backend, structure)?;
    let per_frame = outcomes.split_off(1);
    let intra = outcomes.pop().expect("I frame");
    Ok(SearchResult {
        structure: structure.clone(),
        objective: objective(&per_frame, lambda)?,
        intra,
        per_frame,
        leaves_visited: 1,
    })
}
