use std::fs;
use std::path::Path;

use super::DataError;
use crate::frame::{Frame, FrameError, VideoSequence};

const EXTENSIONS: &[&str] = &["png", "bmp", "ppm", "pgm", "pnm"];

/// Load a directory of equally sized 8-bit images as one video.
///
/// Frames are ordered by plain lexicographic filename order, so indices
/// should be zero-padded. Pixels are converted to RGB and divided by 255.
/// The video id is the directory name.
pub fn load_image_dir(dir: impl AsRef<Path>) -> Result<VideoSequence, DataError> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| DataError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    if paths.len() < 2 {
        return Err(FrameError::TooShort(paths.len()).into());
    }

    let mut frames = Vec::with_capacity(paths.len());
    for path in &paths {
        let img = image::open(path).map_err(|e| DataError::Image {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        frames.push(Frame::from_u8(h as usize, w as usize, 3, rgb.as_raw())?);
    }
    let id = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(VideoSequence::new(frames, id)?)
}
