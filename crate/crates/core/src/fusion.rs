//! Tactical event encoding and early fusion into the visual token stream.
//!
//! Each event contributes `E_team + E_agent + E_area + E_kind` to the frame
//! row it falls on; rows are averaged over fixed 8-frame chunks anchored at
//! round start, projected to the model width and broadcast-added to every
//! patch token of a sampled frame. Chunks without any event produce an exact
//! zero row (the projection bias is only applied to occupied chunks), so a
//! model fed an empty event stream is bit-identical to the events-off model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{MapSpec, Roster};
use crate::tensor::{Tape, Tensor, Var};
use crate::types::{EventKind, Team};

/// One tactical event; the line format of `events.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventLabel {
    /// Seconds from round start.
    pub t: f64,
    pub team: Team,
    pub agent: String,
    pub area: String,
    pub kind: EventKind,
}

/// Agent and area vocabularies; team and kind vocabularies are fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventVocab {
    pub agents: Vec<String>,
    pub areas: Vec<String>,
}

impl EventVocab {
    pub fn new(roster: &Roster, map: &MapSpec) -> Self {
        Self {
            agents: roster.agents.iter().map(|a| a.name.clone()).collect(),
            areas: map.areas.iter().map(|a| a.name.clone()).collect(),
        }
    }
}

/// An event resolved to vocabulary ids and a frame index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncodedEvent {
    pub frame: usize,
    pub team: usize,
    pub agent: usize,
    pub area: usize,
    pub kind: usize,
}

/// Canonical event order: time, then kind, then agent name.
pub fn sort_events(events: &mut [EventLabel]) {
    events.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.kind.cmp(&b.kind)).then_with(|| a.agent.cmp(&b.agent)));
}

/// Frame index of a timestamp: `round(t·fps)` clamped to `[0, n_frames)`.
pub fn event_frame(t: f64, fps: usize, n_frames: usize) -> usize {
    let f = (t * fps as f64).round().max(0.0) as usize;
    f.min(n_frames.saturating_sub(1))
}

pub fn encode_events(events: &[EventLabel], vocab: &EventVocab, fps: usize, n_frames: usize) -> Result<Vec<EncodedEvent>> {
    events
        .iter()
        .map(|e| {
            let agent = vocab
                .agents
                .iter()
                .position(|a| *a == e.agent)
                .ok_or_else(|| Error::UnknownVocab { kind: "agent", name: e.agent.clone() })?;
            let area = vocab
                .areas
                .iter()
                .position(|a| *a == e.area)
                .ok_or_else(|| Error::UnknownVocab { kind: "area", name: e.area.clone() })?;
            Ok(EncodedEvent {
                frame: event_frame(e.t, fps, n_frames),
                team: e.team.index(),
                agent,
                area,
                kind: e.kind.index(),
            })
        })
        .collect()
}

/// Borrowed embedding tables, each `[vocab, event_dim]`.
#[derive(Clone, Copy)]
pub struct EmbeddingTables<'a> {
    pub team: &'a Tensor,
    pub agent: &'a Tensor,
    pub area: &'a Tensor,
    pub kind: &'a Tensor,
}

impl EmbeddingTables<'_> {
    fn dim(&self) -> usize {
        self.team.shape()[1]
    }

    fn add_event(&self, e: &EncodedEvent, row: &mut [f64]) {
        for (table, id) in [(self.team, e.team), (self.agent, e.agent), (self.area, e.area), (self.kind, e.kind)] {
            for (r, v) in row.iter_mut().zip(table.row(id)) {
                *r += v;
            }
        }
    }
}

/// Per-frame event grid `[ceil(duration·fps), event_dim]`; frames without events are zero.
pub fn rasterize(
    events: &[EventLabel],
    vocab: &EventVocab,
    tables: EmbeddingTables<'_>,
    duration_s: f64,
    fps: usize,
) -> Result<Tensor> {
    let n_frames = ((duration_s * fps as f64).ceil() as usize).max(1);
    let encoded = encode_events(events, vocab, fps, n_frames)?;
    let d = tables.dim();
    let mut grid = Tensor::zeros(&[n_frames, d]);
    for e in &encoded {
        tables.add_event(e, &mut grid.data_mut()[e.frame * d..(e.frame + 1) * d]);
    }
    Ok(grid)
}

/// Chunk means of an event grid plus which chunks hold any non-zero row.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledEvents {
    pub rows: Tensor,
    pub occupied: Vec<bool>,
    pub pool_frames: usize,
}

/// Average rows `[k·pool, min(k·pool + pool, F))`; a short final chunk is averaged over its own length.
pub fn pool_chunks(grid: &Tensor, pool_frames: usize) -> PooledEvents {
    let (n, d) = (grid.shape()[0], grid.shape()[1]);
    let chunks = n.div_ceil(pool_frames);
    let mut rows = Tensor::zeros(&[chunks, d]);
    let mut occupied = vec![false; chunks];
    for c in 0..chunks {
        let lo = c * pool_frames;
        let hi = (lo + pool_frames).min(n);
        let out = &mut rows.data_mut()[c * d..(c + 1) * d];
        for f in lo..hi {
            let src = grid.row(f);
            occupied[c] |= src.iter().any(|&v| v != 0.0);
            for (o, v) in out.iter_mut().zip(src) {
                *o += v;
            }
        }
        let len = (hi - lo) as f64;
        out.iter_mut().for_each(|v| *v /= len);
    }
    PooledEvents { rows, occupied, pool_frames }
}

/// Fused rows `[T, d_model]` for sampled frame indices: `pooled[f / pool]·W + b` on occupied chunks, zero elsewhere.
pub fn project_and_attach(pooled: &PooledEvents, proj_w: &Tensor, proj_b: &Tensor, sampled_frames: &[usize]) -> Result<Tensor> {
    let (de, dm) = (proj_w.shape()[0], proj_w.shape()[1]);
    let chunks = pooled.rows.shape()[0];
    let mut out = Tensor::zeros(&[sampled_frames.len(), dm]);
    for (i, &f) in sampled_frames.iter().enumerate() {
        let c = f / pooled.pool_frames;
        if c >= chunks {
            return Err(Error::IndexOutOfRange { index: f, len: chunks * pooled.pool_frames });
        }
        if !pooled.occupied[c] {
            continue;
        }
        let src = pooled.rows.row(c);
        let dst = &mut out.data_mut()[i * dm..(i + 1) * dm];
        dst.copy_from_slice(proj_b.data());
        for k in 0..de {
            let s = src[k];
            for (o, w) in dst.iter_mut().zip(&proj_w.data()[k * dm..(k + 1) * dm]) {
                *o += s * w;
            }
        }
    }
    Ok(out)
}

/// Tape handles of the fusion parameters.
#[derive(Clone, Copy, Debug)]
pub struct FusionVars {
    pub team: Var,
    pub agent: Var,
    pub area: Var,
    pub kind: Var,
    pub proj_w: Var,
    pub proj_b: Var,
}

/// Differentiable counterpart of `project_and_attach ∘ pool_chunks ∘ rasterize`.
///
/// Chunk means are expressed as `S·E` with constant count matrices `S`, so the
/// embedding tables receive gradients. Returns `[T, d_model]`.
pub fn fused_tokens(
    tape: &mut Tape,
    vars: &FusionVars,
    events: &[EncodedEvent],
    n_frames: usize,
    sampled_frames: &[usize],
    pool_frames: usize,
) -> Result<Var> {
    let d_model = tape.shape(vars.proj_w)[1];
    let sizes = [vars.team, vars.agent, vars.area, vars.kind].map(|v| tape.shape(v)[0]);
    let n_chunks = n_frames.div_ceil(pool_frames);

    let mut occupied_rows: Vec<usize> = Vec::new();
    let mut counts: [Vec<f64>; 4] = Default::default();
    let mut row_of = Vec::with_capacity(sampled_frames.len());
    for &f in sampled_frames {
        let c = f / pool_frames;
        if c >= n_chunks {
            return Err(Error::IndexOutOfRange { index: f, len: n_frames });
        }
        let lo = c * pool_frames;
        let len = ((lo + pool_frames).min(n_frames) - lo) as f64;
        let in_chunk: Vec<&EncodedEvent> = events.iter().filter(|e| e.frame / pool_frames == c).collect();
        if in_chunk.is_empty() {
            row_of.push(None);
            continue;
        }
        row_of.push(Some(occupied_rows.len()));
        occupied_rows.push(c);
        for (table, count) in counts.iter_mut().enumerate() {
            let base = count.len();
            count.resize(base + sizes[table], 0.0);
            for e in &in_chunk {
                let id = [e.team, e.agent, e.area, e.kind][table];
                count[base + id] += 1.0 / len;
            }
        }
    }

    let k = occupied_rows.len();
    let zero_row = tape.constant(Tensor::zeros(&[1, d_model]));
    if k == 0 {
        let idx = vec![0; sampled_frames.len()];
        return Ok(tape.gather_rows(zero_row, &idx)?);
    }
    let mut pooled: Option<Var> = None;
    for (table, (count, var)) in counts.into_iter().zip([vars.team, vars.agent, vars.area, vars.kind]).enumerate() {
        let s = tape.constant(Tensor::new(&[k, sizes[table]], count)?);
        let term = tape.matmul(s, var)?;
        pooled = Some(match pooled {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    let proj = tape.linear(pooled.expect("four tables"), vars.proj_w, vars.proj_b)?;
    let stacked = tape.concat(&[proj, zero_row], 0)?;
    let idx: Vec<usize> = row_of.iter().map(|r| r.unwrap_or(k)).collect();
    Ok(tape.gather_rows(stacked, &idx)?)
}
