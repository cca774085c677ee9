//! PNG frame folders and directory digests.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::codec::FrameRgb;

fn sorted_files(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d)? {
            let p = e?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Reads every `*.png` in `dir` in name order. 8-bit RGB and RGBA are
/// accepted (alpha is dropped); all frames must share one size.
pub fn read_png_frames(dir: &Path) -> Result<Vec<FrameRgb>, HarnessError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")));
    paths.sort();
    if paths.is_empty() {
        return Err(HarnessError::Config(format!("no PNG files in {}", dir.display())));
    }
    paths.iter().map(|p| read_png(p)).collect()
}

pub fn read_png(path: &Path) -> Result<FrameRgb, HarnessError> {
    let mut reader = png::Decoder::new(BufReader::new(File::open(path)?)).read_info()?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf)?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(HarnessError::Config(format!("{}: only 8-bit PNG is supported", path.display())));
    }
    let px = &buf[..info.buffer_size()];
    let data = match info.color_type {
        png::ColorType::Rgb => px.to_vec(),
        png::ColorType::Rgba => px.chunks_exact(4).flat_map(|c| [c[0], c[1], c[2]]).collect(),
        png::ColorType::Grayscale => px.iter().flat_map(|&v| [v, v, v]).collect(),
        other => {
            return Err(HarnessError::Config(format!("{}: unsupported colour type {other:?}", path.display())));
        }
    };
    Ok(FrameRgb::new(info.width as usize, info.height as usize, data)?)
}

pub fn write_png(path: &Path, frame: &FrameRgb) -> Result<(), HarnessError> {
    let mut enc = png::Encoder::new(BufWriter::new(File::create(path)?), frame.width() as u32, frame.height() as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    enc.write_header()?.write_image_data(frame.data())?;
    Ok(())
}

/// Writes `frame_{i:05}.png` for every frame.
pub fn write_png_frames(dir: &Path, frames: &[FrameRgb]) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir)?;
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let p = dir.join(format!("frame_{i:05}.png"));
            write_png(&p, f).map(|_| p)
        })
        .collect()
}

/// SHA-256 over the sorted relative paths and contents of every file below
/// `dir`, hex encoded.
pub fn dir_digest(dir: &Path) -> Result<String, HarnessError> {
    let mut h = Sha256::new();
    for p in sorted_files(dir)? {
        let rel = p.strip_prefix(dir).unwrap_or(&p).to_string_lossy().replace('\\', "/");
        let bytes = std::fs::read(&p)?;
        h.update((rel.len() as u64).to_le_bytes());
        h.update(rel.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}
