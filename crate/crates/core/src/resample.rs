//! Background sampling of the new-perspective region and cross-frame
//! alignment of shared perspectives.
//!
//! After permutation, every masked target pixel is filled by copying a
//! randomly chosen background pixel from its own row or column, never from
//! the foreground object. A canonical store keyed by each pixel's rounded
//! source-frame preimage then makes frames that expose the same perspective
//! agree exactly: the first frame to fill a key donates its value to every
//! later frame that lands on it.
//!
//! Randomness comes from per-pixel counter streams derived from the run
//! seed, so sampled values depend only on `(seed, frame, row, col)` and the
//! candidate set, never on evaluation order.

use std::collections::HashMap;

use crate::camera::MotionField;
use crate::error::{Error, Result};
use crate::rng::{CounterRng, STREAM_RESAMPLE};
use crate::tensorio::{BoolGrid, Cell, LatentVideo};

/// Which line of the frame a masked pixel samples from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AxisPolicy {
    /// Rows for vertical-strip masks, columns for horizontal-strip masks,
    /// and the axis pointing into the frame interior for mixed regions.
    #[default]
    Auto,
    Row,
    Column,
}

/// Where a filled pixel's value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    /// Background pixel in the same row.
    Row,
    /// Background pixel in the same column.
    Column,
    /// The row or column had no background; sampled from the whole frame's
    /// background.
    FallbackFrame,
    /// The frame has no background outside the mask at all; sampled from
    /// any unmasked pixel and flagged as a warning.
    FallbackUnconstrained,
    /// Copied from an earlier frame that filled the same canonical key.
    Reused { donor_frame: usize },
}

impl SourceKind {
    /// Stable lowercase label used in CSV dumps.
    pub fn label(&self) -> &'static str {
        match self {
            SourceKind::Row => "row",
            SourceKind::Column => "column",
            SourceKind::FallbackFrame => "fallback-frame",
            SourceKind::FallbackUnconstrained => "fallback-unconstrained",
            SourceKind::Reused { .. } => "reused",
        }
    }
}

/// One filled pixel: its location, the kind of source, and the source
/// pixel's coordinates (the donor pixel's, for reused values).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleRecord {
    pub frame: usize,
    pub row: usize,
    pub col: usize,
    pub kind: SourceKind,
    pub src_row: usize,
    pub src_col: usize,
}

/// Audit trail of a resampling pass: one record per filled pixel, in
/// (frame, row, col) row-major order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleProvenance {
    records: Vec<SampleRecord>,
}

impl SampleProvenance {
    /// Column names of the CSV dump.
    pub const CSV_HEADER: [&'static str; 6] = ["frame", "row", "col", "kind", "src_row", "src_col"];

    /// All records in (frame, row, col) order.
    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    /// Number of filled pixels.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// True when nothing was filled.
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// How many pixels had to fall back to unconstrained sampling.
    pub fn warnings(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.kind == SourceKind::FallbackUnconstrained)
            .count()
    }

    /// Looks up the record for a pixel, if that pixel was filled.
    pub fn record_for(&self, frame: usize, row: usize, col: usize) -> Option<&SampleRecord> {
        self.records
            .binary_search_by_key(&(frame, row, col), |r| (r.frame, r.row, r.col))
            .ok()
            .map(|i| &self.records[i])
    }

    /// Renders the audit trail as CSV rows matching [`Self::CSV_HEADER`].
    pub fn to_csv_rows(&self) -> Vec<Vec<Cell>> {
        self.records
            .iter()
            .map(|r| {
                vec![
                    Cell::Int(r.frame as i64),
                    Cell::Int(r.row as i64),
                    Cell::Int(r.col as i64),
                    Cell::Text(r.kind.label().to_string()),
                    Cell::Int(r.src_row as i64),
                    Cell::Int(r.src_col as i64),
                ]
            })
            .collect()
    }
}

fn check_grid_shapes(z: &LatentVideo, omega: &BoolGrid, m: &BoolGrid) -> Result<()> {
    let (n, _, h, w) = z.shape();
    for (name, grid) in [("omega", omega), ("m", m)] {
        if grid.n_frames() != n || grid.height() != h || grid.width() != w {
            return Err(Error::Shape {
                expected: format!("{n}x{h}x{w} {name}"),
                actual: format!("{}x{}x{}", grid.n_frames(), grid.height(), grid.width()),
            });
        }
    }
    Ok(())
}

/// How a frame's masked region is shaped, for the auto axis policy.
enum RegionShape {
    VerticalStrip,
    HorizontalStrip,
    Mixed,
}

fn classify_region(omega: &BoolGrid, frame: usize) -> RegionShape {
    let (h, w) = (omega.height(), omega.width());
    let full_columns = (0..w).all(|k| {
        let any = (0..h).any(|j| omega.get(frame, j, k));
        !any || (0..h).all(|j| omega.get(frame, j, k))
    });
    if full_columns {
        return RegionShape::VerticalStrip;
    }
    let full_rows = (0..h).all(|j| {
        let any = (0..w).any(|k| omega.get(frame, j, k));
        !any || (0..w).all(|k| omega.get(frame, j, k))
    });
    if full_rows {
        return RegionShape::HorizontalStrip;
    }
    RegionShape::Mixed
}

fn pixel_axis(policy: AxisPolicy, region: &RegionShape, j: usize, k: usize, h: usize, w: usize) -> SourceKind {
    match policy {
        AxisPolicy::Row => SourceKind::Row,
        AxisPolicy::Column => SourceKind::Column,
        AxisPolicy::Auto => match region {
            RegionShape::VerticalStrip => SourceKind::Row,
            RegionShape::HorizontalStrip => SourceKind::Column,
            RegionShape::Mixed => {
                let dj = j.min(h - 1 - j);
                let dk = k.min(w - 1 - k);
                if dk < dj {
                    SourceKind::Row
                } else if dj < dk {
                    SourceKind::Column
                } else {
                    SourceKind::Row
                }
            }
        },
    }
}

fn copy_pixel(out: &mut LatentVideo, frame: usize, dst: (usize, usize), src: (usize, usize)) {
    for ch in 0..out.channels() {
        let v = out.get(frame, ch, src.0, src.1);
        out.set(frame, ch, dst.0, dst.1, v);
    }
}

/// Fills every masked pixel of `z_updated` from its frame's background.
///
/// For each masked pixel a uniform choice is made among same-row or
/// same-column positions that are outside both the mask and the foreground.
/// Exhausted lines fall back to the frame's whole background, then to any
/// unmasked pixel (flagged in the provenance warnings). A frame that is
/// entirely masked has no content to sample and is an error.
pub fn background_sample(
    z_updated: &LatentVideo,
    omega: &BoolGrid,
    m: &BoolGrid,
    axis_policy: AxisPolicy,
    rng_seed: u64,
) -> Result<(LatentVideo, SampleProvenance)> {
    check_grid_shapes(z_updated, omega, m)?;
    let (n, _, h, w) = z_updated.shape();
    let mut out = z_updated.clone();
    let mut records = Vec::new();
    for frame in 0..n {
        if omega.count_true_in_frame(frame) == 0 {
            continue;
        }
        if omega.count_true_in_frame(frame) == h * w {
            return Err(Error::UnfillableFrame { frame });
        }
        let region = classify_region(omega, frame);
        let frame_background: Vec<(usize, usize)> = (0..h)
            .flat_map(|j| (0..w).map(move |k| (j, k)))
            .filter(|&(j, k)| !omega.get(frame, j, k) && !m.get(frame, j, k))
            .collect();
        let unconstrained: Vec<(usize, usize)> = (0..h)
            .flat_map(|j| (0..w).map(move |k| (j, k)))
            .filter(|&(j, k)| !omega.get(frame, j, k))
            .collect();
        for j in 0..h {
            for k in 0..w {
                if !omega.get(frame, j, k) {
                    continue;
                }
                let axis = pixel_axis(axis_policy, &region, j, k, h, w);
                let line: Vec<(usize, usize)> = match axis {
                    SourceKind::Row => (0..w)
                        .map(|kk| (j, kk))
                        .filter(|&(jj, kk)| !omega.get(frame, jj, kk) && !m.get(frame, jj, kk))
                        .collect(),
                    SourceKind::Column => (0..h)
                        .map(|jj| (jj, k))
                        .filter(|&(jj, kk)| !omega.get(frame, jj, kk) && !m.get(frame, jj, kk))
                        .collect(),
                    _ => unreachable!("pixel_axis returns row or column"),
                };
                let (kind, candidates) = if !line.is_empty() {
                    (axis, &line)
                } else if !frame_background.is_empty() {
                    (SourceKind::FallbackFrame, &frame_background)
                } else {
                    (SourceKind::FallbackUnconstrained, &unconstrained)
                };
                let mut rng = CounterRng::new(
                    rng_seed,
                    &[STREAM_RESAMPLE, frame as u64, j as u64, k as u64],
                );
                let (sj, sk) = candidates[rng.index(candidates.len())];
                copy_pixel(&mut out, frame, (j, k), (sj, sk));
                records.push(SampleRecord {
                    frame,
                    row: j,
                    col: k,
                    kind,
                    src_row: sj,
                    src_col: sk,
                });
            }
        }
    }
    Ok((out, SampleProvenance { records }))
}

/// Rewrites filled pixels that share a canonical key with an earlier
/// frame's fill, so shared perspectives carry identical values.
///
/// The canonical key of a filled pixel is its continuous source-frame
/// preimage under the field's inverse map, rounded to the nearest integer
/// pair. Keys commit frame by frame in ascending order; within a frame the
/// first pixel in row-major order wins a contested key.
pub fn cross_frame_align(
    filled: &LatentVideo,
    provenance: &SampleProvenance,
    field: &MotionField,
) -> Result<(LatentVideo, SampleProvenance)> {
    let (n, _, h, w) = filled.shape();
    if n != field.n_frames() || h != field.height() || w != field.width() {
        return Err(Error::Shape {
            expected: format!("{}x{{C}}x{}x{}", field.n_frames(), field.height(), field.width()),
            actual: filled.shape_string(),
        });
    }
    let mut out = filled.clone();
    let mut records = provenance.records.clone();
    let mut store: HashMap<(i64, i64), (usize, usize, usize)> = HashMap::new();
    let mut frame_start = 0;
    for frame in 0..n {
        let frame_end = records[frame_start..]
            .iter()
            .position(|r| r.frame != frame)
            .map(|p| frame_start + p)
            .unwrap_or(records.len());
        // Assign from the store as committed by earlier frames.
        for rec in &mut records[frame_start..frame_end] {
            let (su, sv) = field.inverse_at(frame, rec.row, rec.col);
            if !(su.is_finite() && sv.is_finite()) {
                continue;
            }
            let key = (su.round() as i64, sv.round() as i64);
            if let Some(&(df, dr, dc)) = store.get(&key) {
                for ch in 0..out.channels() {
                    let v = out.get(df, ch, dr, dc);
                    out.set(frame, ch, rec.row, rec.col, v);
                }
                rec.kind = SourceKind::Reused { donor_frame: df };
                rec.src_row = dr;
                rec.src_col = dc;
            }
        }
        // Commit this frame's own fills for later frames.
        for rec in &records[frame_start..frame_end] {
            if matches!(rec.kind, SourceKind::Reused { .. }) {
                continue;
            }
            let (su, sv) = field.inverse_at(frame, rec.row, rec.col);
            if !(su.is_finite() && sv.is_finite()) {
                continue;
            }
            let key = (su.round() as i64, sv.round() as i64);
            store.entry(key).or_insert((frame, rec.row, rec.col));
        }
        frame_start = frame_end;
    }
    Ok((out, SampleProvenance { records }))
}

/// Background sampling followed by cross-frame alignment.
///
/// `omega` must equal the field's own new-perspective mask; the two are the
/// same geometry and a mismatch means the inputs came from different runs.
pub fn resample_all(
    z_updated: &LatentVideo,
    omega: &BoolGrid,
    m: &BoolGrid,
    field: &MotionField,
    axis_policy: AxisPolicy,
    seed: u64,
) -> Result<(LatentVideo, SampleProvenance)> {
    if omega.bits() != field.new_mask().bits() {
        return Err(Error::Parameter {
            field: "omega",
            reason: "mask does not match the motion field's new-perspective mask".to_string(),
        });
    }
    let (sampled, provenance) = background_sample(z_updated, omega, m, axis_policy, seed)?;
    cross_frame_align(&sampled, &provenance, field)
}
