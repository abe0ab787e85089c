//! RGB24 frames: pixel access, grayscale conversion and PNG / raw-stream I/O.

use std::fs::File;
use std::io::{BufWriter, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tightly packed row-major RGB24 image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameImage {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl FrameImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, rgb: vec![0; width * height * 3] }
    }

    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Self {
        let mut rgb = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            rgb.extend_from_slice(&color);
        }
        Self { width, height, rgb }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let p = (y * self.width + x) * 3;
        [self.rgb[p], self.rgb[p + 1], self.rgb[p + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, c: [u8; 3]) {
        let p = (y * self.width + x) * 3;
        self.rgb[p..p + 3].copy_from_slice(&c);
    }

    pub fn fill_rect(&mut self, x0: usize, y0: usize, w: usize, h: usize, c: [u8; 3]) {
        for y in y0..(y0 + h).min(self.height) {
            for x in x0..(x0 + w).min(self.width) {
                self.put(x, y, c);
            }
        }
    }

    pub fn gray(&self) -> GrayImage {
        let data = self
            .rgb
            .chunks_exact(3)
            .map(|p| luma(p[0], p[1], p[2]))
            .collect();
        GrayImage { width: self.width, height: self.height, data }
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let img_err = |e: png::EncodingError| Error::Image { path: path.to_path_buf(), msg: e.to_string() };
        let mut w = enc.write_header().map_err(img_err)?;
        w.write_image_data(&self.rgb).map_err(img_err)?;
        Ok(())
    }

    pub fn read_png(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let img_err = |msg: String| Error::Image { path: path.to_path_buf(), msg };
        let mut decoder = png::Decoder::new(std::io::BufReader::new(file));
        decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = decoder.read_info().map_err(|e| img_err(e.to_string()))?;
        let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| img_err("image too large".into()))?];
        let info = reader.next_frame(&mut buf).map_err(|e| img_err(e.to_string()))?;
        let (w, h) = (info.width as usize, info.height as usize);
        let rgb = match info.color_type {
            png::ColorType::Rgb => buf[..w * h * 3].to_vec(),
            png::ColorType::Rgba => buf[..w * h * 4].chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
            png::ColorType::Grayscale => buf[..w * h].iter().flat_map(|&g| [g, g, g]).collect(),
            other => return Err(img_err(format!("unsupported color type {other:?}"))),
        };
        Ok(Self { width: w, height: h, rgb })
    }
}

/// Rec. 601 luma in `[0, 255]`.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> f64 {
    0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height);
        Self { width, height, data }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Sidecar describing a raw RGB24 stream file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawStreamInfo {
    pub width: usize,
    pub height: usize,
    pub fps: usize,
}

/// Split a raw RGB24 stream into frames using its JSON sidecar.
pub fn read_raw_stream(stream: &Path, sidecar: &Path) -> Result<(RawStreamInfo, Vec<FrameImage>)> {
    let text = std::fs::read_to_string(sidecar).map_err(|e| Error::io(sidecar, e))?;
    let info: RawStreamInfo = serde_json::from_str(&text)
        .map_err(|e| Error::Parse { path: sidecar.to_path_buf(), line: e.line(), msg: e.to_string() })?;
    let mut bytes = Vec::new();
    File::open(stream)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(stream, e))?;
    let frame_len = info.width * info.height * 3;
    if frame_len == 0 || bytes.len() % frame_len != 0 {
        return Err(Error::Image {
            path: stream.to_path_buf(),
            msg: format!("{} bytes is not a whole number of {}x{} frames", bytes.len(), info.width, info.height),
        });
    }
    let frames = bytes
        .chunks_exact(frame_len)
        .map(|c| FrameImage { width: info.width, height: info.height, rgb: c.to_vec() })
        .collect();
    Ok((info, frames))
}

pub fn write_raw_stream(stream: &Path, sidecar: &Path, info: RawStreamInfo, frames: &[FrameImage]) -> Result<()> {
    use std::io::Write;
    let mut w = BufWriter::new(File::create(stream).map_err(|e| Error::io(stream, e))?);
    for f in frames {
        w.write_all(&f.rgb).map_err(|e| Error::io(stream, e))?;
    }
    w.flush().map_err(|e| Error::io(stream, e))?;
    let json = serde_json::to_string(&info).expect("plain struct");
    std::fs::write(sidecar, json).map_err(|e| Error::io(sidecar, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = FrameImage::new(5, 3);
        img.put(4, 2, [1, 2, 3]);
        img.put(0, 0, [250, 128, 7]);
        let p = dir.path().join("f.png");
        img.write_png(&p).unwrap();
        assert_eq!(FrameImage::read_png(&p).unwrap(), img);
    }

    #[test]
    fn raw_stream_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let frames = vec![FrameImage::filled(4, 2, [9, 8, 7]), FrameImage::filled(4, 2, [1, 2, 3])];
        let info = RawStreamInfo { width: 4, height: 2, fps: 8 };
        let (s, j) = (dir.path().join("v.rgb"), dir.path().join("v.json"));
        write_raw_stream(&s, &j, info, &frames).unwrap();
        let (got_info, got) = read_raw_stream(&s, &j).unwrap();
        assert_eq!(got_info, info);
        assert_eq!(got, frames);
    }
}
