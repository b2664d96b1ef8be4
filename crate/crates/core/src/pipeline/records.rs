//! On-disk record layout. Each record is a directory named by its id:
//!
//! ```text
//! <record_id>/band_NN.npy            [H, W, T] brightness temperatures (f32)
//! <record_id>/human_pixel_masks.npy  [H, W, 1] labeled-frame mask (u8)
//! <record_id>/instance_masks.npy     [T, H, W] per-frame contrail ids (u8, optional)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use super::synth::{labeled_frame, RecordBundle};
use super::PipelineError;
use crate::falsecolor::{BandCube, BandId};
use crate::maskops::{BitMask, ComponentTrack, Pixel};
use crate::npy::{load_npy, save_npy, ArrayData, DenseArray};
use crate::scalar::{floats_from_array_data, Real};

pub const LABEL_FILE: &str = "human_pixel_masks.npy";
pub const INSTANCE_FILE: &str = "instance_masks.npy";

fn band_file(band: BandId) -> String {
    format!("{band}.npy")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Record directories under `root`, sorted by name.
pub fn list_records(root: &Path) -> Result<Vec<(String, PathBuf)>, PipelineError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        let path = entry.path();
        if path.is_dir() {
            out.push((entry.file_name().to_string_lossy().into_owned(), path));
        }
    }
    out.sort();
    Ok(out)
}

fn bad_record(dir: &Path, msg: impl std::fmt::Display) -> PipelineError {
    PipelineError::BadRecord(format!("{}: {msg}", dir.display()))
}

/// Read every `band_NN.npy` in `dir` into one cube (bands in ascending order).
pub fn read_cube<T: Real>(dir: &Path) -> Result<BandCube<T>, PipelineError> {
    let mut bands = Vec::new();
    for b in BandId::all() {
        let path = dir.join(band_file(b));
        if path.is_file() {
            bands.push((b, load_npy(&path)?));
        }
    }
    if bands.is_empty() {
        return Err(bad_record(dir, "no band_NN.npy files"));
    }
    let shape = bands[0].1.shape().to_vec();
    let [h, w, t] = shape[..] else {
        return Err(bad_record(dir, format!("band arrays must be [H, W, T], got {shape:?}")));
    };
    let hw = h * w;
    let mut values = vec![T::zero(); t * bands.len() * hw];
    for (bi, (band, arr)) in bands.iter().enumerate() {
        if arr.shape() != shape.as_slice() {
            return Err(bad_record(dir, format!("{band} has shape {:?}, expected {shape:?}", arr.shape())));
        }
        let data: Vec<T> = floats_from_array_data(&arr.data)
            .ok_or_else(|| bad_record(dir, format!("{band} is not a float array")))?;
        for p in 0..hw {
            for f in 0..t {
                values[(f * bands.len() + bi) * hw + p] = data[p * t + f];
            }
        }
    }
    Ok(BandCube::new(t, bands.into_iter().map(|(b, _)| b).collect(), h, w, values)?)
}

fn mask_from_array(dir: &Path, arr: &DenseArray) -> Result<BitMask, PipelineError> {
    let shape = arr.shape();
    let (h, w) = match shape {
        [h, w] | [h, w, 1] => (*h, *w),
        _ => return Err(bad_record(dir, format!("label must be [H, W, 1], got {shape:?}"))),
    };
    Ok(BitMask::from_bits(h, w, (0..h * w).map(|i| arr.data.truthy(i)).collect())?)
}

/// The labeled-frame mask of a record.
pub fn read_label(dir: &Path) -> Result<BitMask, PipelineError> {
    let path = dir.join(LABEL_FILE);
    if !path.is_file() {
        return Err(PipelineError::MissingTruth(path.display().to_string()));
    }
    mask_from_array(dir, &load_npy(&path)?)
}

/// Tracks of one record and the per-frame union of their masks.
pub type TrackSet = (Vec<ComponentTrack>, Vec<BitMask>);

/// Planted tracks from the instance file, or `None` when there is none.
/// Also returns the per-frame union masks.
pub fn read_tracks(dir: &Path) -> Result<Option<TrackSet>, PipelineError> {
    let path = dir.join(INSTANCE_FILE);
    if !path.is_file() {
        return Ok(None);
    }
    let arr = load_npy(&path)?;
    let [t, h, w] = arr.shape()[..] else {
        return Err(bad_record(dir, format!("instances must be [T, H, W], got {:?}", arr.shape())));
    };
    let ArrayData::U8(ids) = &arr.data else {
        return Err(bad_record(dir, "instances must be u8"));
    };
    let hw = h * w;
    let max_id = ids.iter().copied().max().unwrap_or(0) as usize;
    let mut per_id: Vec<Vec<(usize, Vec<Pixel>)>> = vec![Vec::new(); max_id];
    let mut masks = Vec::with_capacity(t);
    for f in 0..t {
        let plane = &ids[f * hw..(f + 1) * hw];
        masks.push(BitMask::from_bits(h, w, plane.iter().map(|&v| v != 0).collect())?);
        for (i, &id) in plane.iter().enumerate() {
            if id == 0 {
                continue;
            }
            let frames = &mut per_id[id as usize - 1];
            if frames.last().is_none_or(|(ff, _)| *ff != f) {
                frames.push((f, Vec::new()));
            }
            frames.last_mut().unwrap().1.push((i / w, i % w));
        }
    }
    let tracks = per_id
        .into_iter()
        .filter(|frames| !frames.is_empty())
        .map(|frames| ComponentTrack::new(h, w, frames))
        .collect::<Result<_, _>>()?;
    Ok(Some((tracks, masks)))
}

/// Read a complete record (cube, label and tracks).
pub fn read_record<T: Real>(dir: &Path) -> Result<RecordBundle<T>, PipelineError> {
    let record_id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| bad_record(dir, "no directory name"))?;
    let cube = read_cube(dir)?;
    let label = read_label(dir)?;
    let (tracks, frame_masks) = match read_tracks(dir)? {
        Some(found) => found,
        None => {
            let mut masks = vec![BitMask::new(cube.height(), cube.width())?; cube.frames()];
            masks[labeled_frame(cube.frames())] = label.clone();
            (Vec::new(), masks)
        }
    };
    if label.dims() != (cube.height(), cube.width())
        || frame_masks.len() != cube.frames()
        || frame_masks[labeled_frame(cube.frames())] != label
    {
        return Err(bad_record(dir, "masks inconsistent with the band cube"));
    }
    Ok(RecordBundle {
        record_id,
        cube,
        frame_masks,
        tracks,
    })
}

/// Write a record as `root/<record_id>/`.
pub fn write_record<T: Real>(root: &Path, rec: &RecordBundle<T>) -> Result<PathBuf, PipelineError> {
    let dir = root.join(&rec.record_id);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let cube = &rec.cube;
    let (t, h, w) = (cube.frames(), cube.height(), cube.width());
    let hw = h * w;
    for &band in cube.bands() {
        let mut data = vec![0f32; hw * t];
        for f in 0..t {
            let plane = cube.plane(f, band)?;
            for p in 0..hw {
                data[p * t + f] = plane[p].as_f64() as f32;
            }
        }
        let arr = DenseArray::new(vec![h, w, t], ArrayData::F32(data))?;
        save_npy(dir.join(band_file(band)), &arr)?;
    }
    let label: Vec<u8> = rec.label().bits().iter().map(|&b| u8::from(b)).collect();
    save_npy(dir.join(LABEL_FILE), &DenseArray::new(vec![h, w, 1], ArrayData::U8(label))?)?;
    let ids = rec.instance_maps().concat();
    save_npy(dir.join(INSTANCE_FILE), &DenseArray::new(vec![t, h, w], ArrayData::U8(ids))?)?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::synth::{synth_generate, SyntheticSceneSpec};

    #[test]
    fn record_roundtrip() {
        let tmp = tempfile::tempdir().unwrap();
        let recs = synth_generate::<f32>(&SyntheticSceneSpec::default(), 3).unwrap();
        for r in &recs {
            write_record(tmp.path(), r).unwrap();
        }
        let listed = list_records(tmp.path()).unwrap();
        assert_eq!(listed.len(), 3);
        for ((id, dir), r) in listed.iter().zip(&recs) {
            assert_eq!(id, &r.record_id);
            let back = read_record::<f32>(dir).unwrap();
            assert_eq!(&back, r);
        }
    }

    #[test]
    fn missing_label_is_missing_truth() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(read_label(tmp.path()), Err(PipelineError::MissingTruth(_))));
        assert!(read_cube::<f32>(tmp.path()).is_err());
    }
}
