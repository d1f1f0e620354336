//! PNG overlays of extracted paths. The ground-truth rail area is blue,
//! matched estimated rail pixels green and unmatched ones red. Without
//! ground truth, estimated rail pixels are drawn in yellow.

use std::io::Cursor;

use crate::error::{Error, Result};
use crate::eval::{rail_pixel_match, PathMatching};
use crate::geometry::GridDims;
use crate::tree::EgoPath;

/// 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Canvas {
    pub dims: GridDims,
    pub rgb: Vec<u8>,
}

impl Canvas {
    pub fn blank(dims: GridDims) -> Self {
        Self {
            dims,
            rgb: vec![0; 3 * dims.len()],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * self.dims.index(x, y);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    fn put(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x < 0 || y < 0 || x >= self.dims.width as i64 || y >= self.dims.height as i64 {
            return;
        }
        let i = 3 * self.dims.index(x as usize, y as usize);
        self.rgb[i..i + 3].copy_from_slice(&c);
    }

    fn tint(&mut self, x: usize, y: usize, c: [u8; 3]) {
        let i = 3 * self.dims.index(x, y);
        for k in 0..3 {
            self.rgb[i + k] = ((self.rgb[i + k] as u16 + c[k] as u16) / 2) as u8;
        }
    }
}

pub struct Colors;

impl Colors {
    pub const GT_AREA: [u8; 3] = [0, 0, 255];
    pub const TP: [u8; 3] = [0, 255, 0];
    pub const FP: [u8; 3] = [255, 0, 0];
    pub const UNSCORED: [u8; 3] = [255, 255, 0];
}

fn fill_area(canvas: &mut Canvas, path: &EgoPath) {
    let w = canvas.dims.width as f64;
    for t in &path.triplets {
        if t.y >= canvas.dims.height {
            continue;
        }
        let lo = t.x_left.ceil().max(0.0);
        let hi = t.x_right.floor().min(w - 1.0);
        if lo > hi {
            continue;
        }
        for x in lo as usize..=hi as usize {
            canvas.tint(x, t.y, Colors::GT_AREA);
        }
    }
}

fn draw_rails(canvas: &mut Canvas, path: &EgoPath, left_ok: &[bool], right_ok: &[bool], scored: bool) {
    let color = |ok: bool| match (scored, ok) {
        (false, _) => Colors::UNSCORED,
        (true, true) => Colors::TP,
        (true, false) => Colors::FP,
    };
    for (i, t) in path.triplets.iter().enumerate() {
        let y = t.y as i64;
        canvas.put(
            t.x_left.round() as i64,
            y,
            color(left_ok.get(i).copied().unwrap_or(false)),
        );
        canvas.put(
            t.x_right.round() as i64,
            y,
            color(right_ok.get(i).copied().unwrap_or(false)),
        );
    }
}

/// Renders an overview with every path followed by one image per estimated
/// path, all PNG encoded.
///
/// `gt` carries the ground-truth paths and their pairing with `est`; a
/// per-path image shows the rail area of the paired ground-truth path only.
pub fn render_overlay(
    background: Option<&Canvas>,
    dims: GridDims,
    est: &[EgoPath],
    gt: Option<(&[EgoPath], &PathMatching)>,
    radius: u32,
) -> Result<Vec<Vec<u8>>> {
    let base = match background {
        Some(c) => {
            dims.ensure_same(c.dims)?;
            c.clone()
        }
        None => Canvas::blank(dims),
    };
    // Pixel flags and paired ground truth per estimated path.
    let flags: Vec<(Vec<bool>, Vec<bool>, Option<usize>)> = est
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let pair = gt.and_then(|(g, m)| m.pairs.iter().find(|q| q.est == i).map(|q| (g, q.gt)));
            match pair {
                Some((g, gi)) => {
                    let m = rail_pixel_match(&g[gi], p, radius);
                    (m.est_left_matched, m.est_right_matched, Some(gi))
                }
                None => (Vec::new(), Vec::new(), None),
            }
        })
        .collect();
    let scored = gt.is_some();

    let mut overview = base.clone();
    if let Some((g, _)) = gt {
        g.iter().for_each(|p| fill_area(&mut overview, p));
    }
    for (p, (l, r, _)) in est.iter().zip(&flags) {
        draw_rails(&mut overview, p, l, r, scored);
    }
    let mut images = vec![encode_png(&overview)?];
    for (p, (l, r, paired)) in est.iter().zip(&flags) {
        let mut c = base.clone();
        if let (Some((g, _)), Some(gi)) = (gt, paired) {
            fill_area(&mut c, &g[*gi]);
        }
        draw_rails(&mut c, p, l, r, scored);
        images.push(encode_png(&c)?);
    }
    Ok(images)
}

pub fn encode_png(canvas: &Canvas) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, canvas.dims.width as u32, canvas.dims.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header()?;
        writer.write_image_data(&canvas.rgb)?;
        writer.finish()?;
    }
    Ok(out)
}

/// Decodes an 8-bit grayscale, RGB or RGBA PNG (16-bit is truncated) to RGB.
pub fn decode_png_rgb(bytes: &[u8]) -> Result<Canvas> {
    let fmt = |e: png::DecodingError| Error::Format(format!("png: {e}"));
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(fmt)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format("png: image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(fmt)?;
    let dims = GridDims::new(info.width as usize, info.height as usize)?;
    let data = &buf[..info.buffer_size()];
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(Error::Format("png: unexpanded palette".into())),
    };
    let mut rgb = Vec::with_capacity(3 * dims.len());
    for px in data.chunks_exact(channels) {
        match channels {
            1 | 2 => rgb.extend_from_slice(&[px[0]; 3]),
            _ => rgb.extend_from_slice(&px[..3]),
        }
    }
    Ok(Canvas { dims, rgb })
}
