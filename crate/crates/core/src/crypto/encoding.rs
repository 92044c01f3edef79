//! Canonical byte encoding for everything that is hashed or signed.
//!
//! Every field is written in declared order. Variable-width fields carry a
//! 4-byte big-endian length prefix, integers are 8-byte big-endian, and
//! sequences carry a 4-byte element count. The same encoder has a `shape`
//! mode in which opaque fields (ciphertexts, digests, signatures) are reduced
//! to their length, which is what an observer learns from them.

/// Marker written in place of opaque bytes when encoding in shape mode.
const OPAQUE_MARKER: u8 = 0xff;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Canonical,
    Shape,
}

/// Append-only writer for the canonical encoding.
#[derive(Debug, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
    mode: Mode,
}

impl Default for Encoder {
    fn default() -> Self {
        Self::new()
    }
}

impl Encoder {
    pub fn new() -> Self {
        Self { buf: Vec::new(), mode: Mode::Canonical }
    }

    /// Encoder whose opaque fields collapse to their lengths.
    pub fn shape() -> Self {
        Self { buf: Vec::new(), mode: Mode::Shape }
    }

    pub fn put_u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn put_bool(&mut self, v: bool) -> &mut Self {
        self.put_u8(v as u8)
    }

    pub fn put_u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    fn put_len(&mut self, len: usize) {
        let len = u32::try_from(len).expect("field longer than u32::MAX");
        self.buf.extend_from_slice(&len.to_be_bytes());
    }

    /// Public variable-width bytes.
    pub fn put_bytes(&mut self, v: &[u8]) -> &mut Self {
        self.put_len(v.len());
        self.buf.extend_from_slice(v);
        self
    }

    pub fn put_str(&mut self, v: &str) -> &mut Self {
        self.put_bytes(v.as_bytes())
    }

    /// Bytes whose content is opaque to observers (ciphertext, digest, signature).
    pub fn put_opaque(&mut self, v: &[u8]) -> &mut Self {
        match self.mode {
            Mode::Canonical => self.put_bytes(v),
            Mode::Shape => {
                self.buf.push(OPAQUE_MARKER);
                self.put_len(v.len());
                self
            }
        }
    }

    pub fn put<T: Canonical + ?Sized>(&mut self, v: &T) -> &mut Self {
        v.encode(self);
        self
    }

    pub fn put_seq<T: Canonical>(&mut self, items: &[T]) -> &mut Self {
        self.put_len(items.len());
        for item in items {
            item.encode(self);
        }
        self
    }

    pub fn put_option<T: Canonical>(&mut self, v: Option<&T>) -> &mut Self {
        match v {
            None => self.put_u8(0),
            Some(inner) => {
                self.put_u8(1);
                inner.encode(self);
                self
            }
        }
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// A value with a single canonical byte encoding.
pub trait Canonical {
    fn encode(&self, enc: &mut Encoder);

    fn to_canonical_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.finish()
    }

    /// Encoding with opaque fields reduced to lengths.
    fn to_shape_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::shape();
        self.encode(&mut enc);
        enc.finish()
    }
}

impl Canonical for u64 {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_u64(*self);
    }
}

impl Canonical for bool {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_bool(*self);
    }
}

impl Canonical for str {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_str(self);
    }
}

impl Canonical for String {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_str(self);
    }
}

impl<T: Canonical> Canonical for Vec<T> {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_seq(self);
    }
}

impl<T: Canonical + ?Sized> Canonical for &T {
    fn encode(&self, enc: &mut Encoder) {
        (**self).encode(enc);
    }
}
