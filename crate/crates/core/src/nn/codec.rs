//! Flat little-endian binary snapshots.
//!
//! An MLP is written as `u32` layer count, `u32` input size, then per layer
//! a `u32` output size and a `u8` activation tag, followed by the parameters
//! of every layer in order: the row-major weight matrix, then the bias, all
//! as `f64`. A bare matrix block is `u32` rows, `u32` cols, then row-major
//! `f64` entries.

use std::io::{Read, Write};

use super::mlp::{Activation, LayerShape, Mlp};
use crate::error::{Result, SorsError};
use crate::scalar::Scalar;

pub fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn write_f64s<W: Write, T: Scalar>(w: &mut W, values: &[T]) -> Result<()> {
    for v in values {
        w.write_all(&v.as_f64().to_le_bytes())?;
    }
    Ok(())
}

pub fn read_f64s<R: Read, T: Scalar>(r: &mut R, n: usize) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        out.push(T::lit(f64::from_le_bytes(buf)));
    }
    Ok(out)
}

fn to_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| SorsError::Snapshot(format!("size {n} exceeds u32")))
}

pub fn write_mlp<W: Write, T: Scalar>(w: &mut W, net: &Mlp<T>) -> Result<()> {
    write_u32(w, to_u32(net.shapes().len())?)?;
    write_u32(w, to_u32(net.input_dim())?)?;
    for shape in net.shapes() {
        write_u32(w, to_u32(shape.outputs)?)?;
        w.write_all(&[shape.activation.tag()])?;
    }
    write_f64s(w, net.params())
}

pub fn read_mlp<R: Read, T: Scalar>(r: &mut R) -> Result<Mlp<T>> {
    let layers = read_u32(r)? as usize;
    let mut inputs = read_u32(r)? as usize;
    if layers == 0 || inputs == 0 {
        return Err(SorsError::Snapshot("empty network header".into()));
    }
    let mut shapes = Vec::with_capacity(layers);
    for _ in 0..layers {
        let outputs = read_u32(r)? as usize;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let activation = Activation::from_tag(tag[0])
            .ok_or_else(|| SorsError::Snapshot(format!("unknown activation tag {}", tag[0])))?;
        shapes.push(LayerShape {
            inputs,
            outputs,
            activation,
        });
        inputs = outputs;
    }
    let count = shapes.iter().map(|s| s.inputs * s.outputs + s.outputs).sum();
    let params = read_f64s(r, count)?;
    Mlp::from_parts(shapes, params)
}

pub fn write_matrix<W: Write, T: Scalar>(w: &mut W, rows: usize, cols: usize, values: &[T]) -> Result<()> {
    if values.len() != rows * cols {
        return Err(SorsError::DimensionMismatch {
            expected: rows * cols,
            actual: values.len(),
        });
    }
    write_u32(w, to_u32(rows)?)?;
    write_u32(w, to_u32(cols)?)?;
    write_f64s(w, values)
}

pub fn read_matrix<R: Read, T: Scalar>(r: &mut R) -> Result<(usize, usize, Vec<T>)> {
    let rows = read_u32(r)? as usize;
    let cols = read_u32(r)? as usize;
    let values = read_f64s(r, rows * cols)?;
    Ok((rows, cols, values))
}
