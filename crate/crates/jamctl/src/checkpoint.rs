//! Parameter checkpoint format.
//!
//! Layout: magic `FNET`, u32 LE version, then one record per parameter
//! until end of file: u32 LE name length, name bytes, u32 LE rank,
//! u32 LE dims, little-endian f32 data. Both the recognizer and the
//! Q-network use this format.

use std::io::{Read, Write};
use std::path::Path;

use jamlab_core::nn::{ParamSet, Tensor};

use crate::{CmdError, CmdResult};

pub const FNET_MAGIC: &[u8; 4] = b"FNET";
pub const FNET_VERSION: u32 = 1;

pub fn save_params(path: &Path, params: &ParamSet) -> CmdResult<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(FNET_MAGIC)?;
    f.write_all(&FNET_VERSION.to_le_bytes())?;
    for (name, tensor) in params.iter() {
        f.write_all(&(name.len() as u32).to_le_bytes())?;
        f.write_all(name.as_bytes())?;
        f.write_all(&(tensor.shape.len() as u32).to_le_bytes())?;
        for &d in &tensor.shape {
            f.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in &tensor.data {
            f.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Raw records from a checkpoint, in file order.
pub fn load_records(path: &Path) -> CmdResult<Vec<(String, Vec<usize>, Vec<f32>)>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| CmdError::Io(format!("{}: {e}", path.display())))?
        .read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[0..4] != FNET_MAGIC {
        return Err(CmdError::Io(format!("{}: not an FNET checkpoint", path.display())));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FNET_VERSION {
        return Err(CmdError::Io(format!("unsupported checkpoint version {version}")));
    }
    let mut records = Vec::new();
    let mut pos = 8usize;
    let read_u32 = |bytes: &[u8], pos: &mut usize| -> CmdResult<u32> {
        if *pos + 4 > bytes.len() {
            return Err(CmdError::Io("truncated checkpoint".into()));
        }
        let v = u32::from_le_bytes(bytes[*pos..*pos + 4].try_into().unwrap());
        *pos += 4;
        Ok(v)
    };
    while pos < bytes.len() {
        let name_len = read_u32(&bytes, &mut pos)? as usize;
        if pos + name_len > bytes.len() {
            return Err(CmdError::Io("truncated checkpoint name".into()));
        }
        let name = String::from_utf8(bytes[pos..pos + name_len].to_vec())
            .map_err(|e| CmdError::Io(e.to_string()))?;
        pos += name_len;
        let rank = read_u32(&bytes, &mut pos)? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(read_u32(&bytes, &mut pos)? as usize);
        }
        let numel: usize = dims.iter().product();
        if pos + 4 * numel > bytes.len() {
            return Err(CmdError::Io("truncated checkpoint data".into()));
        }
        let mut data = Vec::with_capacity(numel);
        for i in 0..numel {
            let off = pos + 4 * i;
            data.push(f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()));
        }
        pos += 4 * numel;
        records.push((name, dims, data));
    }
    Ok(records)
}

/// Overwrite a parameter set in place from a checkpoint; names and shapes
/// must match the freshly built model exactly.
pub fn load_into(path: &Path, params: &mut ParamSet) -> CmdResult<()> {
    let records = load_records(path)?;
    if records.len() != params.len() {
        return Err(CmdError::Io(format!(
            "checkpoint has {} parameters, model expects {}",
            records.len(),
            params.len()
        )));
    }
    for (name, dims, data) in records {
        let idx = params.find(&name).ok_or_else(|| {
            CmdError::Io(format!("checkpoint parameter '{name}' not in model"))
        })?;
        let t: &mut Tensor = params.tensor_mut(idx);
        if t.shape != dims {
            return Err(CmdError::Io(format!(
                "checkpoint parameter '{name}' shape {:?} vs model {:?}",
                dims, t.shape
            )));
        }
        t.data = data.into_iter().map(|v| v as f64).collect();
    }
    Ok(())
}
