//! Binary PGM (P5) export of normalized time-frequency images:
//! 8-bit, row-major, pixel = round(255 * value).

use std::io::Write;
use std::path::Path;

use jamlab_core::tf::TfImage;

use crate::CmdResult;

pub fn write_pgm(path: &Path, img: &TfImage) -> CmdResult<()> {
    let mut f = std::fs::File::create(path)?;
    write!(f, "P5\n{} {}\n255\n", img.side, img.side)?;
    let bytes: Vec<u8> = img
        .pixels
        .iter()
        .map(|&v| (255.0 * v).round().clamp(0.0, 255.0) as u8)
        .collect();
    f.write_all(&bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn pgm_layout_is_normative() {
        let img = TfImage {
            pixels: vec![0.0, 0.5, 1.0, 0.25],
            side: 2,
            norm_min: 0.0,
            norm_max: 1.0,
        };
        let dir = tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        write_pgm(&path, &img).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header = b"P5\n2 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[0u8, 128, 255, 64]);
    }
}
