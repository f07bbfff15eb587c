//! Field files: an 8-byte little-endian header length, a JSON header, then the
//! values as little-endian `f64` in row-major `(t, x…, y)` order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::grid::{ParabolicGrid, ScalarField};
use crate::error::{Error, Result};
use crate::kernels::FracParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub shape: Vec<usize>,
    pub n: usize,
    pub s: f64,
    pub a: f64,
    pub grading: f64,
    /// `(λ_ell, Λ_ell)` of the coefficients the field was computed with.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ellipticity: Option<(f64, f64)>,
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl FieldHeader {
    pub fn new(grid: &ParabolicGrid, ellipticity: Option<(f64, f64)>) -> Self {
        FieldHeader {
            shape: grid.shape(),
            n: grid.n(),
            s: grid.params().s(),
            a: grid.params().a(),
            grading: grid.grading(),
            ellipticity,
            t: grid.t().to_vec(),
            x: grid.x().to_vec(),
            y: grid.y().to_vec(),
        }
    }

    pub fn grid(&self) -> Result<ParabolicGrid> {
        let p = FracParams::new(self.s, self.n)?;
        ParabolicGrid::from_nodes(p, self.t.clone(), self.x.clone(), self.y.clone(), self.grading)
    }
}

pub fn write_field(mut w: impl Write, header: &FieldHeader, field: &ScalarField) -> Result<()> {
    if header.shape != field.shape {
        return Err(Error::Format("header shape differs from field shape".into()));
    }
    let json = serde_json::to_vec(header)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    let mut buf = Vec::with_capacity(field.values.len() * 8);
    for v in &field.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_field(mut r: impl Read) -> Result<(FieldHeader, ScalarField)> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 30 {
        return Err(Error::Format(format!("implausible header length {len}")));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: FieldHeader = serde_json::from_slice(&json)?;
    let count: usize = header.shape.iter().product();
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    if data.len() != count * 8 {
        return Err(Error::Format(format!("expected {} data bytes, found {}", count * 8, data.len())));
    }
    let values = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((header.clone(), ScalarField { shape: header.shape, values }))
}

/// Which coordinate varies along a 1-D slice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceAxis {
    T,
    X(usize),
    Y,
}

/// CSV of the field along one axis through the node `(it, ix, j)`.
pub fn slice_csv(
    grid: &ParabolicGrid,
    field: &ScalarField,
    axis: SliceAxis,
    it: usize,
    ix: &[usize],
    j: usize,
) -> String {
    let mut out = String::new();
    match axis {
        SliceAxis::T => {
            out.push_str("t,u\n");
            let xf = grid.x_flat(ix);
            for (k, t) in grid.t().iter().enumerate() {
                out.push_str(&format!("{t:e},{:e}\n", field.values[grid.index(k, xf, j)]));
            }
        }
        SliceAxis::X(d) => {
            out.push_str("x,u\n");
            let mut m = ix.to_vec();
            for (k, x) in grid.x()[d].iter().enumerate() {
                m[d] = k;
                out.push_str(&format!("{x:e},{:e}\n", field.values[grid.index(it, grid.x_flat(&m), j)]));
            }
        }
        SliceAxis::Y => {
            out.push_str("y,u\n");
            let xf = grid.x_flat(ix);
            for (k, y) in grid.y().iter().enumerate() {
                out.push_str(&format!("{y:e},{:e}\n", field.values[grid.index(it, xf, k)]));
            }
        }
    }
    out
}
