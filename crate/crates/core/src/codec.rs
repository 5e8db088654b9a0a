//! Payload encodings shared by the protocols.

use crate::cipher::MaskedElement;
use crate::error::ProtocolError;
use crate::group::GroupParams;
use crate::transport::Reader;

/// `count: u32 BE` followed by `count` fixed-width elements.
pub fn encode_elements(params: &GroupParams, elements: &[MaskedElement]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + elements.len() * params.element_len());
    out.extend_from_slice(&(elements.len() as u32).to_be_bytes());
    for e in elements {
        out.extend_from_slice(&e.to_bytes(params));
    }
    out
}

/// Reads one element list from `reader`, rejecting any value outside the
/// quadratic-residue subgroup.
pub fn read_elements(
    params: &GroupParams,
    reader: &mut Reader<'_>,
) -> Result<Vec<MaskedElement>, ProtocolError> {
    let count = reader.u32()? as usize;
    let width = params.element_len();
    if count.saturating_mul(width) > crate::transport::MAX_PAYLOAD {
        return Err(ProtocolError::Malformed("element count exceeds frame size".into()));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(MaskedElement::from_bytes(params, reader.take(width)?)?);
    }
    Ok(out)
}

pub fn decode_elements(params: &GroupParams, payload: &[u8]) -> Result<Vec<MaskedElement>, ProtocolError> {
    let mut reader = Reader::new(payload);
    let out = read_elements(params, &mut reader)?;
    reader.finish()?;
    Ok(out)
}
