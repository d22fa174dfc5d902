//! Binary container for solved kriging kernels.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic     8 bytes  "GSRKRIG\0"
//! version   u32      1
//! height    u32      HR rows M
//! width     u32      HR columns N
//! factor    u32      r
//! channels  u32      1 or 3
//! tol_rel   f64      pseudo-inversion cutoff used when solving
//! then for each channel:
//!   κ̂           (M/r)(N/r) complex values
//!   λ̂(k,l)      r² blocks of (M/r)(N/r) complex values, k major
//! ```
//!
//! A complex value is two `f64`, real part first. The zero mask is not
//! stored; it is recomputed from `κ̂` and `tol_rel`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64;

use super::KrigingKernels;
use crate::error::{Error, Result};
use crate::grid::SpectralImage;

pub const MAGIC: &[u8; 8] = b"GSRKRIG\0";
pub const VERSION: u32 = 1;

pub fn write_kernels<W: Write>(kk: &KrigingKernels, mut w: W) -> Result<()> {
    let (m, n) = kk.hr_dims;
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    for v in [m, n, kk.r, kk.channels()] {
        w.write_u32::<LittleEndian>(v as u32)?;
    }
    w.write_f64::<LittleEndian>(kk.tol_rel)?;
    let write_plane = |w: &mut W, plane: &[Complex64]| -> Result<()> {
        for z in plane {
            w.write_f64::<LittleEndian>(z.re)?;
            w.write_f64::<LittleEndian>(z.im)?;
        }
        Ok(())
    };
    for ch in 0..kk.channels() {
        write_plane(&mut w, kk.kappa_hat.channel(ch))?;
        for lam in &kk.lambda_hat {
            write_plane(&mut w, lam.channel(ch))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn corrupt(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::CorruptFile("kriging cache is truncated".into())
    } else {
        Error::Io(e)
    }
}

pub fn read_kernels<R: Read>(mut r: R) -> Result<KrigingKernels> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(corrupt)?;
    if &magic != MAGIC {
        return Err(Error::CorruptFile("not a kriging kernel cache".into()));
    }
    let version = r.read_u32::<LittleEndian>().map_err(corrupt)?;
    if version != VERSION {
        return Err(Error::CorruptFile(format!("unsupported cache version {version}")));
    }
    let mut header = [0usize; 4];
    for h in header.iter_mut() {
        *h = r.read_u32::<LittleEndian>().map_err(corrupt)? as usize;
    }
    let [m, n, factor, channels] = header;
    let tol_rel = r.read_f64::<LittleEndian>().map_err(corrupt)?;
    if factor == 0 || m == 0 || n == 0 || m % factor != 0 || n % factor != 0 {
        return Err(Error::CorruptFile(format!("bad geometry {m}x{n} r={factor}")));
    }
    if channels != 1 && channels != 3 {
        return Err(Error::CorruptFile(format!("bad channel count {channels}")));
    }
    let (ml, nl) = (m / factor, n / factor);
    let plane_len = ml * nl;
    let n_kernels = factor * factor;

    let mut read_plane = |len: usize| -> Result<Vec<Complex64>> {
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            let re = r.read_f64::<LittleEndian>().map_err(corrupt)?;
            let im = r.read_f64::<LittleEndian>().map_err(corrupt)?;
            out.push(Complex64::new(re, im));
        }
        Ok(out)
    };

    let mut kappa = Vec::with_capacity(plane_len * channels);
    let mut lambdas: Vec<Vec<Complex64>> = vec![Vec::with_capacity(plane_len * channels); n_kernels];
    for _ in 0..channels {
        kappa.extend(read_plane(plane_len)?);
        for lam in lambdas.iter_mut() {
            lam.extend(read_plane(plane_len)?);
        }
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::CorruptFile("trailing bytes after kriging cache".into()));
    }

    let kappa_hat = SpectralImage::from_raw(ml, nl, channels, kappa);
    let zero_mask = (0..channels)
        .map(|ch| {
            let plane = kappa_hat.channel(ch);
            let max = plane.iter().fold(0.0f64, |a, z| a.max(z.norm()));
            plane.iter().map(|z| z.norm() <= tol_rel * max).collect()
        })
        .collect();
    Ok(KrigingKernels {
        r: factor,
        hr_dims: (m, n),
        tol_rel,
        lambda_hat: lambdas
            .into_iter()
            .map(|d| SpectralImage::from_raw(ml, nl, channels, d))
            .collect(),
        zero_mask,
        kappa_hat,
    })
}

pub fn save_kernels(kk: &KrigingKernels, path: impl AsRef<Path>) -> Result<()> {
    write_kernels(kk, BufWriter::new(File::create(path)?))
}

pub fn load_kernels(path: impl AsRef<Path>) -> Result<KrigingKernels> {
    read_kernels(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adsn::compute_texton;
    use crate::degrade::build_downscale_kernel;
    use crate::kriging::{precompute_kernels, solve_kriging_kernels, DEFAULT_TOL_REL};
    use crate::test_util::random_image;

    fn kernels(channels: usize) -> KrigingKernels {
        let t = compute_texton(&random_image(16, 8, channels, 21));
        let op = build_downscale_kernel(2).unwrap();
        let pre = precompute_kernels(&t, &op).unwrap();
        solve_kriging_kernels(&pre, &op, DEFAULT_TOL_REL).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        for channels in [1, 3] {
            let kk = kernels(channels);
            let mut buf = Vec::new();
            write_kernels(&kk, &mut buf).unwrap();
            let expected = 8 + 4 * 5 + 8 + channels * 5 * 4 * 8 * 16;
            assert_eq!(buf.len(), expected);
            assert_eq!(read_kernels(buf.as_slice()).unwrap(), kk);
        }
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_kernels(&kernels(1), &mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(&buf[8..12], &1u32.to_le_bytes());
        assert_eq!(&buf[12..16], &16u32.to_le_bytes());
        assert_eq!(&buf[16..20], &8u32.to_le_bytes());
        assert_eq!(&buf[20..24], &2u32.to_le_bytes());
        assert_eq!(&buf[24..28], &1u32.to_le_bytes());
        assert_eq!(&buf[28..36], &DEFAULT_TOL_REL.to_le_bytes());
    }

    #[test]
    fn rejects_damaged_input() {
        let mut buf = Vec::new();
        write_kernels(&kernels(1), &mut buf).unwrap();

        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(matches!(read_kernels(bad_magic.as_slice()), Err(Error::CorruptFile(_))));

        let truncated = &buf[..buf.len() - 3];
        assert!(matches!(read_kernels(truncated), Err(Error::CorruptFile(_))));

        let mut extra = buf.clone();
        extra.push(0);
        assert!(matches!(read_kernels(extra.as_slice()), Err(Error::CorruptFile(_))));

        let mut bad_version = buf;
        bad_version[8] = 9;
        assert!(matches!(read_kernels(bad_version.as_slice()), Err(Error::CorruptFile(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.bin");
        let kk = kernels(3);
        save_kernels(&kk, &path).unwrap();
        assert_eq!(load_kernels(&path).unwrap(), kk);
    }
}
