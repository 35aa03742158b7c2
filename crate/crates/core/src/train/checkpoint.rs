//! Binary model checkpoints.
//!
//! Layout after the common magic/version prefix: variant code (`u8`), then
//! `n`, `d`, `m`, `d_z` as `u64` (`m = d_z = 0` without metadata), `lambda`
//! and the rank tolerance as `f64`, then row-major blocks
//! `U, V, a, b, [M, T1, T2]` followed by the accumulators in the same order.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::Array1;

use super::debias::MetadataSpan;
use super::model::MetaParams;
use super::{ModelState, Variant};
use crate::error::{Error, Result};
use crate::io::{create, open, Decoder, Encoder};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"MNCK";

pub fn encode_checkpoint<W: Write>(state: &ModelState, out: W) -> std::io::Result<W> {
    let mut enc = Encoder::new(out, CHECKPOINT_MAGIC)?;
    enc.u8(state.variant.code())?;
    enc.u64(state.node_count() as u64)?;
    enc.u64(state.dims() as u64)?;
    enc.u64(state.metadata_dims() as u64)?;
    enc.u64(state.meta_dims() as u64)?;
    enc.f64(state.lambda)?;
    enc.f64(state.rank_tol)?;
    enc.f64s(state.u.iter())?;
    enc.f64s(state.v.iter())?;
    enc.f64s(state.a.iter())?;
    enc.f64s(state.b.iter())?;
    if let Some(m) = &state.meta {
        enc.f64s(m.m.iter())?;
        enc.f64s(m.t1.iter())?;
        enc.f64s(m.t2.iter())?;
    }
    enc.f64s(state.acc_u.iter())?;
    enc.f64s(state.acc_v.iter())?;
    enc.f64s(state.acc_a.iter())?;
    enc.f64s(state.acc_b.iter())?;
    if let Some(m) = &state.meta {
        enc.f64s(m.acc_t1.iter())?;
        enc.f64s(m.acc_t2.iter())?;
    }
    enc.finish()
}

pub fn decode_checkpoint<R: Read>(input: R) -> Result<ModelState> {
    let mut dec = Decoder::new(input, CHECKPOINT_MAGIC)?;
    let code = dec.u8()?;
    let variant = Variant::from_code(code)
        .ok_or_else(|| Error::Format(format!("unknown variant code {code}")))?;
    let n = dec.usize()?;
    let d = dec.usize()?;
    let m_dims = dec.usize()?;
    let dz = dec.usize()?;
    let lambda = dec.f64()?;
    let rank_tol = dec.f64()?;
    if variant.uses_metadata() != (m_dims > 0 && dz > 0) {
        return Err(Error::Format(format!(
            "variant {variant} inconsistent with metadata shape {m_dims} x {dz}"
        )));
    }
    crate::linalg::check_lambda(lambda).map_err(|e| Error::Format(e.to_string()))?;
    let vector = |dec: &mut Decoder<R>| -> Result<Array1<f64>> {
        Ok(dec.matrix(n, 1)?.into_shape_with_order(n).expect("n x 1"))
    };

    let u = dec.matrix(n, d)?;
    let v = dec.matrix(n, d)?;
    let a = vector(&mut dec)?;
    let b = vector(&mut dec)?;
    let meta_blocks = if variant.uses_metadata() {
        Some((
            dec.matrix(n, m_dims)?,
            dec.matrix(m_dims, dz)?,
            dec.matrix(m_dims, dz)?,
        ))
    } else {
        None
    };
    let acc_u = dec.matrix(n, d)?;
    let acc_v = dec.matrix(n, d)?;
    let acc_a = vector(&mut dec)?;
    let acc_b = vector(&mut dec)?;
    let meta = match meta_blocks {
        Some((m, t1, t2)) => Some(MetaParams {
            m: Arc::new(m),
            t1,
            t2,
            acc_t1: dec.matrix(m_dims, dz)?,
            acc_t2: dec.matrix(m_dims, dz)?,
        }),
        None => None,
    };
    dec.expect_end()?;

    let span = match (&meta, variant) {
        (Some(meta), Variant::Monet) => Some(Arc::new(MetadataSpan::new(meta.m.view(), rank_tol))),
        _ => None,
    };
    Ok(ModelState {
        variant,
        lambda,
        rank_tol,
        u,
        v,
        a,
        b,
        acc_u,
        acc_v,
        acc_a,
        acc_b,
        meta,
        span,
    })
}

pub fn write_checkpoint(path: &Path, state: &ModelState) -> Result<()> {
    encode_checkpoint(state, create(path)?).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<ModelState> {
    decode_checkpoint(open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::MetadataMatrix;
    use crate::train::{init_model, TrainConfig};

    #[test]
    fn round_trip_every_variant() {
        let labels: Vec<usize> = (0..7).map(|i| i % 3).collect();
        let meta = MetadataMatrix::one_hot(&labels, 3).unwrap();
        for variant in [Variant::Glove, Variant::GloveMeta, Variant::Monet] {
            let cfg = TrainConfig {
                variant,
                dims: 5,
                meta_dims: 2,
                lambda: 0.5,
                seed: 4,
                ..Default::default()
            };
            let m = variant.uses_metadata().then_some(&meta);
            let state = init_model(7, m, &cfg).unwrap();
            let bytes = encode_checkpoint(&state, Vec::new()).unwrap();
            let back = decode_checkpoint(bytes.as_slice()).unwrap();
            assert_eq!(back, state);
        }
    }

    #[test]
    fn corrupt_checkpoints_rejected() {
        let state = init_model(3, None, &TrainConfig::default()).unwrap();
        let bytes = encode_checkpoint(&state, Vec::new()).unwrap();
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint(extra.as_slice()).is_err());
        let mut bad_variant = bytes.clone();
        bad_variant[5] = 9;
        assert!(matches!(
            decode_checkpoint(bad_variant.as_slice()),
            Err(Error::Format(_))
        ));
    }
}
