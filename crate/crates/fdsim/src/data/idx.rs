use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::{Dataset, Split};
use crate::error::{Result, SimError};
use crate::Mat;

const IDX_UBYTE: u8 = 0x08;

#[derive(Debug)]
struct IdxBody {
    dims: Vec<usize>,
    data: Vec<u8>,
}

fn read_idx(path: &Path) -> Result<IdxBody> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = r
        .read_u32::<BigEndian>()
        .map_err(|_| SimError::parse(format!("{}: truncated magic at byte 0", path.display())))?;
    let dtype = ((magic >> 8) & 0xff) as u8;
    let ndims = (magic & 0xff) as usize;
    if magic >> 16 != 0 || dtype != IDX_UBYTE {
        return Err(SimError::parse(format!(
            "{}: bad magic {magic:#010x} at byte 0 (expected unsigned-byte IDX)",
            path.display()
        )));
    }
    if ndims == 0 || ndims > 3 {
        return Err(SimError::parse(format!(
            "{}: unsupported dimension count {ndims} at byte 3",
            path.display()
        )));
    }
    let mut dims = Vec::with_capacity(ndims);
    for i in 0..ndims {
        let offset = 4 + 4 * i;
        let d = r.read_u32::<BigEndian>().map_err(|_| {
            SimError::parse(format!("{}: truncated dim header at byte {offset}", path.display()))
        })? as usize;
        dims.push(d);
    }
    let expected: usize = dims.iter().product();
    let mut data = Vec::with_capacity(expected);
    r.read_to_end(&mut data)?;
    if data.len() != expected {
        return Err(SimError::parse(format!(
            "{}: expected {expected} payload bytes, found {} (payload starts at byte {})",
            path.display(),
            data.len(),
            4 + 4 * dims.len()
        )));
    }
    Ok(IdxBody { dims, data })
}

/// Loads an IDX image file plus its companion IDX label file. Pixels are
/// scaled to [0,1]; `n_classes` is `max(label) + 1`.
pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<Dataset> {
    let images = read_idx(images_path)?;
    let labels = read_idx(labels_path)?;
    if images.dims.len() < 2 {
        return Err(SimError::parse(format!(
            "{}: image file must have >= 2 dimensions",
            images_path.display()
        )));
    }
    if labels.dims.len() != 1 {
        return Err(SimError::parse(format!(
            "{}: label file must be 1-dimensional",
            labels_path.display()
        )));
    }
    let n = images.dims[0];
    if labels.dims[0] != n {
        return Err(SimError::parse(format!(
            "image count {n} != label count {}",
            labels.dims[0]
        )));
    }
    let d: usize = images.dims[1..].iter().product();
    let features: Vec<f64> = images.data.iter().map(|&b| b as f64 / 255.0).collect();
    let label_vec: Vec<usize> = labels.data.iter().map(|&b| b as usize).collect();
    let n_classes = label_vec.iter().max().map_or(0, |&m| m + 1);
    Dataset::new(Mat::from_vec(n, d, features)?, label_vec, n_classes, split)
}

/// Writes a dataset back out as an IDX image/label file pair. Features
/// must already lie in [0,1]; they are quantized to bytes.
pub fn save_idx(dataset: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(images_path)?);
    w.write_u32::<BigEndian>(0x0000_0802)?; // ubyte, 2 dims: N x d
    w.write_u32::<BigEndian>(dataset.len() as u32)?;
    w.write_u32::<BigEndian>(dataset.dim() as u32)?;
    for &v in dataset.features.data() {
        w.write_all(&[(v * 255.0).round().clamp(0.0, 255.0) as u8])?;
    }
    w.flush()?;
    let mut w = BufWriter::new(File::create(labels_path)?);
    w.write_u32::<BigEndian>(0x0000_0801)?; // ubyte, 1 dim
    w.write_u32::<BigEndian>(dataset.len() as u32)?;
    for &l in &dataset.labels {
        w.write_all(&[l as u8])?;
    }
    w.flush()?;
    Ok(())
}
