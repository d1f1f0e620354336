//! Domain types shared by every stage, and the rasterization of annotation
//! polylines onto image rows.
//!
//! Coordinates follow the usual image convention: `x` grows to the right,
//! `y = 0` is the top row and `y = H - 1` the bottom row. Sub-pixel `x`
//! values stay real-valued until a stage needs an integer column.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width and height of an image grid in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridDims {
    pub width: usize,
    pub height: usize,
}

impl GridDims {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyGrid { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    pub(crate) fn ensure_same(&self, other: GridDims) -> Result<()> {
        if *self == other {
            Ok(())
        } else {
            Err(Error::DimsMismatch {
                expected: *self,
                found: other,
            })
        }
    }
}

impl fmt::Display for GridDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Dense row-major grid of `f32` values.
///
/// Used for the centre/half-width map, the 3-channel probability and
/// distance maps, per-pixel losses and network outputs. Every value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    dims: GridDims,
    values: Vec<f32>,
}

impl Heatmap {
    pub fn zeros(dims: GridDims) -> Self {
        Self {
            dims,
            values: vec![0.0; dims.len()],
        }
    }

    pub fn from_vec(dims: GridDims, values: Vec<f32>) -> Result<Self> {
        if values.len() != dims.len() {
            return Err(Error::LengthMismatch {
                expected: dims.len(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                x: i % dims.width,
                y: i / dims.width,
                value: values[i],
            });
        }
        Ok(Self { dims, values })
    }

    /// Builds a heatmap from nested rows, top row first.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        let dims = GridDims::new(width, height)?;
        let mut values = Vec::with_capacity(dims.len());
        for row in rows {
            let row = row.as_ref();
            if row.len() != width {
                return Err(Error::InvalidInput(format!(
                    "ragged rows: expected {width} columns, found {}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::from_vec(dims, values)
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[self.dims.index(x, y)]
    }

    /// Panics on a non-finite value.
    pub fn set(&mut self, x: usize, y: usize, value: f32) {
        assert!(value.is_finite(), "heatmap values must be finite");
        let i = self.dims.index(x, y);
        self.values[i] = value;
    }

    pub fn row(&self, y: usize) -> &[f32] {
        let w = self.dims.width;
        &self.values[y * w..(y + 1) * w]
    }

    pub(crate) fn row_mut(&mut self, y: usize) -> &mut [f32] {
        let w = self.dims.width;
        &mut self.values[y * w..(y + 1) * w]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn max_value(&self) -> f32 {
        self.values.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn min_value(&self) -> f32 {
        self.values.iter().copied().fold(f32::INFINITY, f32::min)
    }
}

/// Class of a pixel in the reduced three-class segmentation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum SegClass {
    Background = 0,
    RailTrack = 1,
    RailArea = 2,
}

impl SegClass {
    pub const COUNT: usize = 3;

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(SegClass::Background),
            1 => Some(SegClass::RailTrack),
            2 => Some(SegClass::RailArea),
            _ => None,
        }
    }

    pub fn id(self) -> u8 {
        self as u8
    }
}

/// Row-major grid of segmentation classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMask {
    dims: GridDims,
    classes: Vec<SegClass>,
}

impl SegMask {
    pub fn background(dims: GridDims) -> Self {
        Self {
            dims,
            classes: vec![SegClass::Background; dims.len()],
        }
    }

    pub fn from_ids(dims: GridDims, ids: &[u8]) -> Result<Self> {
        if ids.len() != dims.len() {
            return Err(Error::LengthMismatch {
                expected: dims.len(),
                found: ids.len(),
            });
        }
        let classes = ids
            .iter()
            .enumerate()
            .map(|(i, &id)| {
                SegClass::from_id(id).ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "class id {id} at ({}, {}) is not one of 0, 1, 2",
                        i % dims.width,
                        i / dims.width
                    ))
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { dims, classes })
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn get(&self, x: usize, y: usize) -> SegClass {
        self.classes[self.dims.index(x, y)]
    }

    pub fn set(&mut self, x: usize, y: usize, class: SegClass) {
        let i = self.dims.index(x, y);
        self.classes[i] = class;
    }

    pub fn classes(&self) -> &[SegClass] {
        &self.classes
    }

    pub fn ids(&self) -> Vec<u8> {
        self.classes.iter().map(|c| c.id()).collect()
    }

    pub fn count(&self, class: SegClass) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }
}

/// An annotated rail: an ordered list of `[x, y]` points with `y` strictly
/// monotone along the list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RailPolyline {
    points: Vec<[f64; 2]>,
}

impl RailPolyline {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        let poly = Self { points };
        poly.validate()?;
        Ok(poly)
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    fn validate(&self) -> Result<()> {
        if self.points.len() < 2 {
            return Err(Error::Validation(format!(
                "polyline needs at least 2 points, found {}",
                self.points.len()
            )));
        }
        if let Some(p) = self
            .points
            .iter()
            .find(|p| !(p[0].is_finite() && p[1].is_finite()))
        {
            return Err(Error::Validation(format!("non-finite point {p:?}")));
        }
        let increasing = self.points[1][1] > self.points[0][1];
        let monotone = self.points.windows(2).all(|w| {
            if increasing {
                w[1][1] > w[0][1]
            } else {
                w[1][1] < w[0][1]
            }
        });
        if !monotone {
            return Err(Error::Validation(
                "polyline y must be strictly monotone".to_string(),
            ));
        }
        Ok(())
    }

    /// Smallest and largest `y` of the polyline.
    pub fn y_extent(&self) -> (f64, f64) {
        let a = self.points[0][1];
        let b = self.points[self.points.len() - 1][1];
        (a.min(b), a.max(b))
    }
}

/// Per-row rail position over a contiguous block of image rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RowMap {
    first_row: usize,
    xs: Vec<f64>,
}

impl RowMap {
    pub fn get(&self, y: usize) -> Option<f64> {
        y.checked_sub(self.first_row)
            .and_then(|i| self.xs.get(i).copied())
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    /// Covered rows, `(y, x)` in increasing `y`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.xs
            .iter()
            .enumerate()
            .map(move |(i, &x)| (self.first_row + i, x))
    }

    pub fn rows(&self) -> std::ops::Range<usize> {
        self.first_row..self.first_row + self.xs.len()
    }
}

/// Linearly interpolated rail column for every integer row between the
/// polyline's `y` extremes, clamped to the image. Rows outside that range
/// are absent; a polyline entirely outside the image yields an empty map.
pub fn rasterize_polyline(poly: &RailPolyline, dims: GridDims) -> RowMap {
    let mut pts: Vec<[f64; 2]> = poly.points.clone();
    if pts[0][1] > pts[pts.len() - 1][1] {
        pts.reverse();
    }
    let (y_min, y_max) = (pts[0][1], pts[pts.len() - 1][1]);
    let lo = y_min.ceil().max(0.0);
    let hi = y_max.floor().min(dims.height as f64 - 1.0);
    if lo > hi {
        return RowMap::default();
    }
    let (lo, hi) = (lo as usize, hi as usize);

    let mut xs = Vec::with_capacity(hi - lo + 1);
    let mut seg = 0;
    for y in lo..=hi {
        let yf = y as f64;
        while seg + 2 < pts.len() && pts[seg + 1][1] < yf {
            seg += 1;
        }
        let [x0, y0] = pts[seg];
        let [x1, y1] = pts[seg + 1];
        xs.push(x0 + (yf - y0) * (x1 - x0) / (y1 - y0));
    }
    RowMap { first_row: lo, xs }
}

/// A track instance: the pair of rails bounding one rail area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: u32,
    pub left: RailPolyline,
    pub right: RailPolyline,
}

/// Both rails of a track rasterized onto the rows they share.
#[derive(Debug, Clone)]
pub(crate) struct RasterTrack {
    pub id: u32,
    pub left: RowMap,
    pub right: RowMap,
}

impl RasterTrack {
    pub fn new(track: &Track, dims: GridDims) -> Self {
        Self {
            id: track.id,
            left: rasterize_polyline(&track.left, dims),
            right: rasterize_polyline(&track.right, dims),
        }
    }

    pub fn span(&self, y: usize) -> Option<(f64, f64)> {
        Some((self.left.get(y)?, self.right.get(y)?))
    }

    /// Rows covered by both rails.
    pub fn rows(&self) -> std::ops::Range<usize> {
        let l = self.left.rows();
        let r = self.right.rows();
        let start = l.start.max(r.start);
        let end = l.end.min(r.end);
        start..end.max(start)
    }
}

impl Track {
    pub fn new(id: u32, left: RailPolyline, right: RailPolyline) -> Self {
        Self { id, left, right }
    }

    pub(crate) fn validate(&self, dims: GridDims) -> Result<()> {
        for (side, rail) in [("left", &self.left), ("right", &self.right)] {
            rail.validate()
                .map_err(|e| Error::Validation(format!("track {}: {side} rail: {e}", self.id)))?;
            for p in rail.points() {
                if !(p[0] >= 0.0 && p[0] < dims.width as f64 && p[1] >= 0.0 && p[1] < dims.height as f64) {
                    return Err(Error::Validation(format!(
                        "track {}: {side} rail point [{}, {}] lies outside the {dims} image",
                        self.id, p[0], p[1]
                    )));
                }
            }
        }
        let raster = RasterTrack::new(self, dims);
        for y in raster.rows() {
            let (xl, xr) = raster.span(y).expect("row covered by both rails");
            if xl >= xr {
                return Err(Error::Validation(format!(
                    "track {}: left rail x {xl} is not left of right rail x {xr} on row {y}",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Horizontal extent of a track's rail area on row `y`, if both rails cover it.
pub fn rail_row_span(track: &Track, y: usize, dims: GridDims) -> Option<(f64, f64)> {
    let xl = rasterize_polyline(&track.left, dims).get(y)?;
    let xr = rasterize_polyline(&track.right, dims).get(y)?;
    Some((xl, xr))
}

/// Ground-truth annotation of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    dims: GridDims,
    tracks: Vec<Track>,
}

impl Scene {
    /// Validates track ids, point bounds and left/right ordering.
    pub fn new(dims: GridDims, tracks: Vec<Track>) -> Result<Self> {
        let mut seen = HashSet::new();
        for t in &tracks {
            if !seen.insert(t.id) {
                return Err(Error::Validation(format!("duplicate track id {}", t.id)));
            }
            t.validate(dims)?;
        }
        Ok(Self { dims, tracks })
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn track(&self, id: u32) -> Option<&Track> {
        self.tracks.iter().find(|t| t.id == id)
    }

    pub(crate) fn raster_tracks(&self) -> Vec<RasterTrack> {
        self.tracks
            .iter()
            .map(|t| RasterTrack::new(t, self.dims))
            .collect()
    }
}

/// How a triplet was decoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletMode {
    /// Peak position and peak value of the centre/half-width map.
    OneChannel,
    /// Probability peak plus separate left/right distance maps.
    ThreeChannel,
}

/// Left rail, track centre and right rail of one track instance on one row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub y: usize,
    pub x_left: f64,
    pub x_center: f64,
    pub x_right: f64,
    pub mode: TripletMode,
    /// Set when a rail position fell outside the image and was clamped.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub clamped: bool,
}

impl Triplet {
    pub fn new(y: usize, x_left: f64, x_center: f64, x_right: f64, mode: TripletMode) -> Self {
        Self {
            y,
            x_left,
            x_center,
            x_right,
            mode,
            clamped: false,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_right - self.x_left
    }

    pub fn is_ordered(&self) -> bool {
        self.x_left <= self.x_center && self.x_center <= self.x_right
    }
}
