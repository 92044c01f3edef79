use std::fmt;

use serde::{Deserialize, Serialize};

use crate::crypto::{hash, Address, Canonical, Digest, Encoder};

/// Plaintext domain for parameters, states and return values.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Unit,
    Uint(u64),
    Bool(bool),
    Bytes(Vec<u8>),
    Address(Address),
    List(Vec<Value>),
    /// Fields kept sorted by name.
    Record(Vec<(String, Value)>),
}

impl Value {
    pub fn record<I, K>(fields: I) -> Value
    where
        I: IntoIterator<Item = (K, Value)>,
        K: Into<String>,
    {
        let mut out: Vec<(String, Value)> = Vec::new();
        for (k, v) in fields {
            let k = k.into();
            match out.binary_search_by(|(name, _)| name.as_str().cmp(&k)) {
                Ok(i) => out[i].1 = v,
                Err(i) => out.insert(i, (k, v)),
            }
        }
        Value::Record(out)
    }

    pub fn empty_record() -> Value {
        Value::Record(Vec::new())
    }

    pub fn field(&self, name: &str) -> Option<&Value> {
        match self {
            Value::Record(fields) => fields.iter().find(|(k, _)| k == name).map(|(_, v)| v),
            _ => None,
        }
    }

    pub fn with_field(&self, name: &str, value: Value) -> Value {
        let mut fields = match self {
            Value::Record(f) => f.clone(),
            _ => Vec::new(),
        };
        fields.push((name.to_string(), value));
        Value::record(fields)
    }

    pub fn field_names(&self) -> Vec<&str> {
        match self {
            Value::Record(f) => f.iter().map(|(k, _)| k.as_str()).collect(),
            _ => Vec::new(),
        }
    }

    pub fn as_uint(&self) -> Option<u64> {
        match self {
            Value::Uint(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_bytes(&self) -> Option<&[u8]> {
        match self {
            Value::Bytes(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_address(&self) -> Option<&Address> {
        match self {
            Value::Address(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Value]> {
        match self {
            Value::List(v) => Some(v),
            _ => None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_canonical_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Value> {
        let mut d = Decoder { buf: bytes, pos: 0 };
        let v = d.value(0)?;
        (d.pos == bytes.len()).then_some(v)
    }

    /// Public fingerprint used in traces in place of plaintext.
    pub fn fingerprint(&self) -> Digest {
        hash(self)
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Unit => write!(f, "()"),
            Value::Uint(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Bytes(b) => write!(f, "0x{}", hex::encode(b)),
            Value::Address(a) => write!(f, "{a}"),
            Value::List(items) => f.debug_list().entries(items).finish(),
            Value::Record(fields) => {
                let mut m = f.debug_map();
                for (k, v) in fields {
                    m.entry(k, v);
                }
                m.finish()
            }
        }
    }
}

const T_UNIT: u8 = 0;
const T_UINT: u8 = 1;
const T_BOOL: u8 = 2;
const T_BYTES: u8 = 3;
const T_ADDR: u8 = 4;
const T_LIST: u8 = 5;
const T_RECORD: u8 = 6;
const MAX_DEPTH: usize = 32;

impl Canonical for Value {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            Value::Unit => {
                enc.put_u8(T_UNIT);
            }
            Value::Uint(n) => {
                enc.put_u8(T_UINT).put_u64(*n);
            }
            Value::Bool(b) => {
                enc.put_u8(T_BOOL).put_bool(*b);
            }
            Value::Bytes(b) => {
                enc.put_u8(T_BYTES).put_bytes(b);
            }
            Value::Address(a) => {
                enc.put_u8(T_ADDR).put(a);
            }
            Value::List(items) => {
                enc.put_u8(T_LIST).put_seq(items);
            }
            Value::Record(fields) => {
                enc.put_u8(T_RECORD).put_u64(fields.len() as u64);
                for (k, v) in fields {
                    enc.put_str(k).put(v);
                }
            }
        }
    }
}

struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_be_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_be_bytes(b.try_into().unwrap()))
    }

    fn bytes(&mut self) -> Option<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn value(&mut self, depth: usize) -> Option<Value> {
        if depth > MAX_DEPTH {
            return None;
        }
        Some(match self.u8()? {
            T_UNIT => Value::Unit,
            T_UINT => Value::Uint(self.u64()?),
            T_BOOL => match self.u8()? {
                0 => Value::Bool(false),
                1 => Value::Bool(true),
                _ => return None,
            },
            T_BYTES => Value::Bytes(self.bytes()?.to_vec()),
            T_ADDR => Value::Address(Address::from_bytes(self.bytes()?.to_vec())),
            T_LIST => {
                let n = self.u32()? as usize;
                let mut items = Vec::with_capacity(n.min(1024));
                for _ in 0..n {
                    items.push(self.value(depth + 1)?);
                }
                Value::List(items)
            }
            T_RECORD => {
                let n = self.u64()? as usize;
                let mut fields: Vec<(String, Value)> = Vec::with_capacity(n.min(1024));
                for _ in 0..n {
                    let k = String::from_utf8(self.bytes()?.to_vec()).ok()?;
                    let v = self.value(depth + 1)?;
                    if fields.last().is_some_and(|(prev, _)| *prev >= k) {
                        return None;
                    }
                    fields.push((k, v));
                }
                Value::Record(fields)
            }
            _ => return None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_fields_are_sorted_and_deduplicated() {
        let v = Value::record([("b", Value::Uint(1)), ("a", Value::Uint(2)), ("b", Value::Uint(3))]);
        assert_eq!(v.field_names(), vec!["a", "b"]);
        assert_eq!(v.field("b"), Some(&Value::Uint(3)));
    }

    #[test]
    fn bytes_round_trip() {
        let v = Value::record([
            ("x", Value::List(vec![Value::Unit, Value::Bool(true), Value::Bytes(vec![1, 2])])),
            ("y", Value::Address(Address::from_bytes(vec![9; 20]))),
            ("z", Value::Uint(u64::MAX)),
        ]);
        assert_eq!(Value::from_bytes(&v.to_bytes()), Some(v));
    }

    #[test]
    fn rejects_trailing_and_unsorted() {
        let mut bytes = Value::Uint(3).to_bytes();
        bytes.push(0);
        assert_eq!(Value::from_bytes(&bytes), None);

        let unsorted = Value::Record(vec![
            ("b".into(), Value::Unit),
            ("a".into(), Value::Unit),
        ]);
        assert_eq!(Value::from_bytes(&unsorted.to_bytes()), None);
    }
}
