//! Tensor file format "LFT1" and PNG import/export.
//!
//! LFT1 framing: bytes 0-3 magic `LFT1`; byte 4 dtype code (0 = f32
//! little-endian, 1 = f64 little-endian); byte 5 ndim; then ndim u32
//! little-endian dims; then the row-major payload. Images are stored as
//! 3-D tensors `[H][W][C]`.

use std::io::{Read, Write};
use std::path::Path;

use crate::grid::GridImage;
use crate::{Error, Real, Result};

pub const MAGIC: &[u8; 4] = b"LFT1";

pub struct Tensor<T> {
    pub dims: Vec<u32>,
    pub data: Vec<T>,
}

pub fn write_tensor<T: Real, W: Write>(w: &mut W, dims: &[u32], data: &[T]) -> Result<()> {
    let n: u64 = dims.iter().map(|&d| d as u64).product();
    if n != data.len() as u64 {
        return Err(Error::Shape(format!(
            "tensor dims {:?} do not match {} values",
            dims,
            data.len()
        )));
    }
    w.write_all(MAGIC)?;
    w.write_all(&[T::DTYPE, dims.len() as u8])?;
    for &d in dims {
        w.write_all(&d.to_le_bytes())?;
    }
    match T::DTYPE {
        0 => {
            for v in data {
                w.write_all(&(v.to_f64_c() as f32).to_le_bytes())?;
            }
        }
        _ => {
            for v in data {
                w.write_all(&v.to_f64_c().to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_tensor<T: Real, R: Read>(r: &mut R) -> Result<Tensor<T>> {
    let mut head = [0u8; 6];
    r.read_exact(&mut head)
        .map_err(|_| Error::Corrupt("truncated LFT1 header".into()))?;
    if &head[0..4] != MAGIC {
        return Err(Error::Corrupt("bad LFT1 magic".into()));
    }
    let dtype = head[4];
    if dtype != T::DTYPE {
        return Err(Error::Corrupt(format!(
            "LFT1 dtype code {dtype} does not match the requested precision (code {})",
            T::DTYPE
        )));
    }
    let ndim = head[5] as usize;
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)
            .map_err(|_| Error::Corrupt("truncated LFT1 dims".into()))?;
        dims.push(u32::from_le_bytes(b));
    }
    let n: u64 = dims.iter().map(|&d| d as u64).product();
    let mut data = Vec::with_capacity(n as usize);
    match dtype {
        0 => {
            let mut b = [0u8; 4];
            for _ in 0..n {
                r.read_exact(&mut b)
                    .map_err(|_| Error::Corrupt("truncated LFT1 payload".into()))?;
                data.push(T::from_f64_c(f32::from_le_bytes(b) as f64));
            }
        }
        1 => {
            let mut b = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut b)
                    .map_err(|_| Error::Corrupt("truncated LFT1 payload".into()))?;
                data.push(T::from_f64_c(f64::from_le_bytes(b)));
            }
        }
        _ => return Err(Error::Corrupt(format!("unknown LFT1 dtype code {dtype}"))),
    }
    Ok(Tensor { dims, data })
}

pub fn save_tensor<T: Real>(path: &Path, dims: &[u32], data: &[T]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_tensor(&mut f, dims, data)?;
    f.flush()?;
    Ok(())
}

pub fn load_tensor<T: Real>(path: &Path) -> Result<Tensor<T>> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_tensor(&mut f)
}

impl<T: Real> GridImage<T> {
    pub fn save_lft(&self, path: &Path) -> Result<()> {
        save_tensor(
            path,
            &[self.height() as u32, self.width() as u32, self.channels() as u32],
            self.data(),
        )
    }

    pub fn load_lft(path: &Path) -> Result<Self> {
        let t = load_tensor::<T>(path)?;
        if t.dims.len() != 3 {
            return Err(Error::Corrupt(format!(
                "expected a 3-D image tensor, got {} dims",
                t.dims.len()
            )));
        }
        GridImage::from_vec(t.dims[0] as usize, t.dims[1] as usize, t.dims[2] as usize, t.data)
    }

    /// 8-bit PNG of a 1- or 3-channel image; values clamped to [0, 1].
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let to_u8 = |v: T| (v.to_f64_c().clamp(0.0, 1.0) * 255.0).round() as u8;
        let (h, w) = (self.height() as u32, self.width() as u32);
        match self.channels() {
            1 => {
                let buf: Vec<u8> = self.data().iter().map(|&v| to_u8(v)).collect();
                image::GrayImage::from_raw(w, h, buf)
                    .expect("buffer sized from dims")
                    .save(path)
                    .map_err(|e| Error::InvalidInput(format!("png encode: {e}")))?;
            }
            3 => {
                let buf: Vec<u8> = self.data().iter().map(|&v| to_u8(v)).collect();
                image::RgbImage::from_raw(w, h, buf)
                    .expect("buffer sized from dims")
                    .save(path)
                    .map_err(|e| Error::InvalidInput(format!("png encode: {e}")))?;
            }
            c => {
                return Err(Error::InvalidInput(format!(
                    "PNG export supports 1 or 3 channels, image has {c}"
                )))
            }
        }
        Ok(())
    }

    /// PNG export with min-max normalization, for unbounded fields.
    pub fn save_png_normalized(&self, path: &Path) -> Result<()> {
        let lo = self.data().iter().cloned().fold(T::infinity(), T::min);
        let hi = self.data().iter().cloned().fold(T::neg_infinity(), T::max);
        let span = if hi > lo { hi - lo } else { T::one() };
        self.map(|v| (v - lo) / span).save_png(path)
    }

    /// Import an 8-bit grayscale or RGB PNG, mapping [0, 255] to [0, 1].
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::InvalidInput(format!("png decode: {e}")))?;
        let scale = T::from_f64_c(1.0 / 255.0);
        match img {
            image::DynamicImage::ImageLuma8(g) => {
                let (w, h) = g.dimensions();
                let data = g.into_raw().iter().map(|&b| T::from_f64_c(b as f64) * scale).collect();
                GridImage::from_vec(h as usize, w as usize, 1, data)
            }
            other => {
                let rgb = other.to_rgb8();
                let (w, h) = rgb.dimensions();
                let data =
                    rgb.into_raw().iter().map(|&b| T::from_f64_c(b as f64) * scale).collect();
                GridImage::from_vec(h as usize, w as usize, 3, data)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedRng;

    #[test]
    fn tensor_round_trip_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.lft");
        let data: Vec<f32> = (0..24).map(|i| i as f32 * 0.5 - 3.0).collect();
        save_tensor(&path, &[2, 3, 4], &data).unwrap();
        let t = load_tensor::<f32>(&path).unwrap();
        assert_eq!(t.dims, vec![2, 3, 4]);
        assert_eq!(t.data, data);
    }

    #[test]
    fn dtype_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.lft");
        save_tensor::<f32>(&path, &[4], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(matches!(load_tensor::<f64>(&path), Err(Error::Corrupt(_))));
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.lft");
        save_tensor::<f32>(&path, &[16], &vec![0.5f32; 16]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
        assert!(matches!(load_tensor::<f32>(&path), Err(Error::Corrupt(_))));
    }

    #[test]
    fn image_lft_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.lft");
        let mut rng = SeedRng::new(2);
        let data: Vec<f32> = (0..5 * 4 * 2).map(|_| rng.normal() as f32).collect();
        let img = GridImage::from_vec(5, 4, 2, data).unwrap();
        img.save_lft(&path).unwrap();
        let back = GridImage::<f32>::load_lft(&path).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn png_round_trip_quantized() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let mut img = GridImage::<f32>::zeros(8, 8, 1);
        for i in 0..64 {
            img.data_mut()[i] = (i as f32) / 63.0;
        }
        img.save_png(&path).unwrap();
        let back = GridImage::<f32>::load_png(&path).unwrap();
        assert_eq!(back.height(), 8);
        for (a, b) in img.data().iter().zip(back.data().iter()) {
            assert!((a - b).abs() < 1.0 / 255.0 + 1e-6);
        }
    }
}
