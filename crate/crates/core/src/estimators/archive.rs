//! Single-file model archive.
//!
//! Layout: one version byte, a little-endian `u64` header length, a UTF-8
//! TOML header (regressor spec and shapes), then little-endian `f64` blocks in
//! row-major order: X, Y, U, V, and the cached spectra when present. Gram
//! matrices are rebuilt from the samples on load.

use std::io::{Read, Write};
use std::path::Path;

use faer::Mat;
use serde::{Deserialize, Serialize};

use super::{clamped, scaled_grams, FittedModel, RegressorSpec};
use crate::numerics::psd_eig;
use crate::{Error, Result};

pub const ARCHIVE_VERSION: u8 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    n: usize,
    d: usize,
    m: usize,
    cov_spectrum: bool,
    b_svals: bool,
    spec: RegressorSpec,
}

fn put_block(out: &mut Vec<u8>, m: &Mat<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
}

fn put_vec(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn write_model<P: AsRef<Path>>(model: &FittedModel, path: P) -> Result<()> {
    let path = path.as_ref();
    let header = Header {
        n: model.n(),
        d: model.dim(),
        m: model.u.ncols(),
        cov_spectrum: model.cov_spectrum.is_some(),
        b_svals: model.b_svals.is_some(),
        spec: model.spec.clone(),
    };
    let text = toml::to_string(&header).map_err(|e| Error::Archive(e.to_string()))?;
    let mut out = vec![ARCHIVE_VERSION];
    out.extend_from_slice(&(text.len() as u64).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    for m in [&model.x, &model.y, &model.u, &model.v] {
        put_block(&mut out, m);
    }
    if let Some(v) = &model.cov_spectrum {
        put_vec(&mut out, v);
    }
    if let Some(v) = &model.b_svals {
        put_vec(&mut out, v);
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, len: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Archive("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn reals(&mut self, count: usize) -> Result<Vec<f64>> {
        let raw = self.take(count.checked_mul(8).ok_or_else(|| Error::Archive("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Mat<f64>> {
        let v = self.reals(rows * cols)?;
        Ok(Mat::from_fn(rows, cols, |i, j| v[i * cols + j]))
    }
}

pub fn read_model<P: AsRef<Path>>(path: P) -> Result<FittedModel> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    let version = cur.take(1)?[0];
    if version != ARCHIVE_VERSION {
        return Err(Error::Archive(format!("unsupported version {version}")));
    }
    let len = u64::from_le_bytes(cur.take(8)?.try_into().expect("8 bytes")) as usize;
    let text = std::str::from_utf8(cur.take(len)?).map_err(|e| Error::Archive(e.to_string()))?;
    let h: Header = toml::from_str(text).map_err(|e| Error::Archive(e.to_string()))?;
    h.spec.validate()?;
    let x = cur.matrix(h.n, h.d)?;
    let y = cur.matrix(h.n, h.d)?;
    let u = cur.matrix(h.n, h.m)?;
    let v = cur.matrix(h.n, h.m)?;
    let cov_spectrum = if h.cov_spectrum { Some(cur.reals(h.n)?) } else { None };
    let b_svals = if h.b_svals { Some(cur.reals(h.n)?) } else { None };
    if cur.pos != bytes.len() {
        return Err(Error::Archive("trailing bytes".into()));
    }
    let g = scaled_grams(&h.spec.kernel, x.as_ref(), y.as_ref())?;
    Ok(FittedModel {
        spec: h.spec,
        x,
        y,
        u,
        v,
        k_eig: clamped(psd_eig(g.k.as_ref())?),
        k: g.k,
        l: g.l,
        m: g.m,
        cov_spectrum,
        b_svals,
    })
}
