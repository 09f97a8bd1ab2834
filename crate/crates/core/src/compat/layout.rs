//! Packed record layout: fields in declaration order, scalars aligned to
//! four bytes, booleans to one, no trailing padding.

use super::CompatError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Bool,
    U32,
    F32,
    Float2,
    Float3,
    Float4,
    Float4x4,
}

impl FieldKind {
    pub const fn size(self) -> usize {
        match self {
            FieldKind::Bool => 1,
            FieldKind::U32 | FieldKind::F32 => 4,
            FieldKind::Float2 => 8,
            FieldKind::Float3 => 12,
            FieldKind::Float4 => 16,
            FieldKind::Float4x4 => 64,
        }
    }

    pub const fn align(self) -> usize {
        match self {
            FieldKind::Bool => 1,
            _ => 4,
        }
    }
}

/// Byte size of a field list under the packed layout.
pub fn packed_size(fields: &[FieldKind]) -> usize {
    fields.iter().fold(0, |offset, f| {
        let aligned = offset.div_ceil(f.align()) * f.align();
        aligned + f.size()
    })
}

pub(crate) struct ByteWriter<'a> {
    out: &'a mut Vec<u8>,
    start: usize,
}

impl<'a> ByteWriter<'a> {
    pub fn new(out: &'a mut Vec<u8>) -> Self {
        let start = out.len();
        Self { out, start }
    }

    fn align(&mut self, a: usize) {
        while !(self.out.len() - self.start).is_multiple_of(a) {
            self.out.push(0);
        }
    }

    pub fn bool(&mut self, v: bool) {
        self.out.push(v as u8);
    }

    pub fn u32(&mut self, v: u32) {
        self.align(4);
        self.out.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.align(4);
        self.out.extend_from_slice(&v.to_le_bytes());
    }

    pub fn floats(&mut self, vs: &[f32]) {
        for v in vs {
            self.f32(*v);
        }
    }
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, align: usize) -> Result<&'a [u8], CompatError> {
        self.pos = self.pos.div_ceil(align) * align;
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(CompatError::Truncated {
                needed: end,
                available: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn bool(&mut self) -> Result<bool, CompatError> {
        Ok(self.take(1, 1)?[0] != 0)
    }

    pub fn u32(&mut self) -> Result<u32, CompatError> {
        let b = self.take(4, 4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn f32(&mut self) -> Result<f32, CompatError> {
        let b = self.take(4, 4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn floats<const N: usize>(&mut self) -> Result<[f32; N], CompatError> {
        let mut out = [0.0; N];
        for v in out.iter_mut() {
            *v = self.f32()?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bool_after_scalar_packs_without_tail() {
        assert_eq!(packed_size(&[FieldKind::F32, FieldKind::Bool]), 5);
        assert_eq!(packed_size(&[FieldKind::Bool, FieldKind::F32]), 8);
        assert_eq!(packed_size(&[]), 0);
    }
}
