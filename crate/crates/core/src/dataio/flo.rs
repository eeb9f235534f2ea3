//! Middlebury `.flo` optical-flow files.
//!
//! Layout: 4-byte magic (the float 202021.25, "PIEH"), int32 width, int32
//! height, then height rows of width interleaved little-endian float32
//! `(u, v)` displacements.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::imagery::FlowField;

/// Magic number at the head of every `.flo` file.
pub const FLO_MAGIC: f32 = 202021.25;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_flow_flo(path: &Path) -> Result<FlowField> {
    let file = File::open(path).map_err(io_err(path))?;
    let size = file.metadata().map_err(io_err(path))?.len();
    let mut reader = BufReader::new(file);

    if size < 12 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            detail: format!("truncated header: expected at least 12 bytes, found {size}"),
        });
    }
    let magic = reader.read_f32::<LittleEndian>().map_err(io_err(path))?;
    if magic != FLO_MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            detail: format!("bad magic {magic} (expected {FLO_MAGIC})"),
        });
    }
    let width = reader.read_i32::<LittleEndian>().map_err(io_err(path))?;
    let height = reader.read_i32::<LittleEndian>().map_err(io_err(path))?;
    if width <= 0 || height <= 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            detail: format!("non-positive dimensions {width}x{height}"),
        });
    }
    let (w, h) = (width as usize, height as usize);
    let expected = 12 + (w * h * 8) as u64;
    if size != expected {
        return Err(Error::Format {
            path: path.to_path_buf(),
            detail: format!(
                "payload size mismatch for {w}x{h}: expected {expected} bytes, found {size}"
            ),
        });
    }
    let mut du = Vec::with_capacity(w * h);
    let mut dv = Vec::with_capacity(w * h);
    for _ in 0..w * h {
        du.push(reader.read_f32::<LittleEndian>().map_err(io_err(path))? as f64);
        dv.push(reader.read_f32::<LittleEndian>().map_err(io_err(path))? as f64);
    }
    FlowField::new(w, h, du, dv)
}

/// Writes a flow field as `.flo`. Displacements are stored as float32, so
/// values are rounded to single precision.
pub fn write_flow_flo(path: &Path, flow: &FlowField) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut writer = BufWriter::new(file);
    writer
        .write_f32::<LittleEndian>(FLO_MAGIC)
        .map_err(io_err(path))?;
    writer
        .write_i32::<LittleEndian>(flow.width() as i32)
        .map_err(io_err(path))?;
    writer
        .write_i32::<LittleEndian>(flow.height() as i32)
        .map_err(io_err(path))?;
    for i in 0..flow.width() * flow.height() {
        writer
            .write_f32::<LittleEndian>(flow.du()[i] as f32)
            .map_err(io_err(path))?;
        writer
            .write_f32::<LittleEndian>(flow.dv()[i] as f32)
            .map_err(io_err(path))?;
    }
    writer.flush().map_err(io_err(path))
}
