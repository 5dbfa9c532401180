//! Message framing and the `TEN1` tensor encoding.
//!
//! Every message is `tag (4 ASCII bytes) | len (u32 LE) | payload (len bytes)`.
//! A `TEN1` tensor is `"TEN1" | dtype u8 (1 = f32 LE) | ndim u8 | ndim x u32 LE dims | payload`.

use std::io::{self, Read, Write};

use super::PluginError;

pub type Tag = [u8; 4];

pub const INIT: Tag = *b"INIT";
pub const IRES: Tag = *b"IRES";
pub const RSET: Tag = *b"RSET";
pub const TENS: Tag = *b"TENS";
pub const IMGR: Tag = *b"IMGR";
pub const METQ: Tag = *b"METQ";
pub const METR: Tag = *b"METR";
pub const ERRS: Tag = *b"ERRS";
pub const QUIT: Tag = *b"QUIT";

pub const KNOWN_TAGS: [Tag; 9] = [INIT, IRES, RSET, TENS, IMGR, METQ, METR, ERRS, QUIT];

pub const FRAME_HEADER_LEN: usize = 8;
/// Upper bound on a single payload; larger declared lengths are rejected before reading.
pub const MAX_PAYLOAD: usize = 1 << 30;

pub const TENSOR_MAGIC: &[u8; 4] = b"TEN1";
pub const DTYPE_F32: u8 = 1;
pub const MAX_NDIM: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WireMessage {
    pub tag: Tag,
    pub payload: Vec<u8>,
}

impl WireMessage {
    pub fn new(tag: Tag, payload: impl Into<Vec<u8>>) -> Self {
        Self { tag, payload: payload.into() }
    }

    pub fn tag_str(&self) -> String {
        String::from_utf8_lossy(&self.tag).into_owned()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FRAME_HEADER_LEN + self.payload.len());
        out.extend_from_slice(&self.tag);
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }
}

fn check_tag(tag: &Tag) -> Result<(), PluginError> {
    if KNOWN_TAGS.contains(tag) {
        Ok(())
    } else {
        Err(PluginError::Protocol(format!("unknown message tag {:?}", String::from_utf8_lossy(tag))))
    }
}

/// Decodes one message from the front of `buf`, returning it and the bytes consumed.
pub fn decode_message(buf: &[u8]) -> Result<(WireMessage, usize), PluginError> {
    if buf.len() < FRAME_HEADER_LEN {
        return Err(PluginError::Protocol(format!("truncated frame header: {} bytes", buf.len())));
    }
    let tag: Tag = buf[0..4].try_into().unwrap();
    check_tag(&tag)?;
    let len = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
    if len > MAX_PAYLOAD {
        return Err(PluginError::Protocol(format!("payload length {len} exceeds limit")));
    }
    let payload = buf
        .get(FRAME_HEADER_LEN..FRAME_HEADER_LEN + len)
        .ok_or_else(|| PluginError::Protocol(format!("truncated payload: declared {len}, have {}", buf.len() - FRAME_HEADER_LEN)))?;
    Ok((WireMessage { tag, payload: payload.to_vec() }, FRAME_HEADER_LEN + len))
}

/// Reads one message; `Ok(None)` on a clean end of stream before any header byte.
pub fn read_message<R: Read>(reader: &mut R) -> Result<Option<WireMessage>, PluginError> {
    let mut header = [0u8; FRAME_HEADER_LEN];
    let mut filled = 0;
    while filled < FRAME_HEADER_LEN {
        match reader.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(PluginError::Protocol("stream ended inside frame header".into())),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(PluginError::Io(e)),
        }
    }
    let tag: Tag = header[0..4].try_into().unwrap();
    check_tag(&tag)?;
    let len = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    if len > MAX_PAYLOAD {
        return Err(PluginError::Protocol(format!("payload length {len} exceeds limit")));
    }
    let mut payload = Vec::new();
    reader.take(len as u64).read_to_end(&mut payload).map_err(PluginError::Io)?;
    if payload.len() != len {
        return Err(PluginError::Protocol(format!("stream ended inside payload: {} of {len} bytes", payload.len())));
    }
    Ok(Some(WireMessage { tag, payload }))
}

pub fn write_message<W: Write>(writer: &mut W, msg: &WireMessage) -> io::Result<()> {
    writer.write_all(&msg.encode())?;
    writer.flush()
}

/// Dense f32 tensor, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, PluginError> {
        let n = element_count(&dims)?;
        if n != data.len() {
            return Err(PluginError::Protocol(format!("tensor dims {dims:?} need {n} values, got {}", data.len())));
        }
        Ok(Self { dims, data })
    }
}

fn element_count(dims: &[usize]) -> Result<usize, PluginError> {
    if dims.is_empty() || dims.len() > MAX_NDIM {
        return Err(PluginError::Protocol(format!("tensor ndim must be 1..={MAX_NDIM}, got {}", dims.len())));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|n| n.checked_mul(4).is_some_and(|b| b <= MAX_PAYLOAD))
        .ok_or_else(|| PluginError::Protocol(format!("tensor dims {dims:?} overflow")))
}

pub fn encode_tensor(tensor: &Tensor) -> Result<Vec<u8>, PluginError> {
    let n = element_count(&tensor.dims)?;
    if n != tensor.data.len() {
        return Err(PluginError::Protocol(format!("tensor dims {:?} need {n} values, got {}", tensor.dims, tensor.data.len())));
    }
    let mut out = Vec::with_capacity(6 + 4 * tensor.dims.len() + 4 * n);
    out.extend_from_slice(TENSOR_MAGIC);
    out.push(DTYPE_F32);
    out.push(tensor.dims.len() as u8);
    for &d in &tensor.dims {
        let d = u32::try_from(d).map_err(|_| PluginError::Protocol(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in &tensor.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Decodes a tensor from the front of `bytes`, returning it and the bytes consumed.
pub fn decode_tensor_prefix(bytes: &[u8]) -> Result<(Tensor, usize), PluginError> {
    if bytes.len() < 6 {
        return Err(PluginError::Protocol("truncated tensor header".into()));
    }
    if &bytes[0..4] != TENSOR_MAGIC {
        return Err(PluginError::Protocol(format!("bad tensor magic {:?}", &bytes[0..4])));
    }
    if bytes[4] != DTYPE_F32 {
        return Err(PluginError::Protocol(format!("unsupported dtype {}", bytes[4])));
    }
    let ndim = bytes[5] as usize;
    let dims_end = 6 + 4 * ndim;
    let dim_bytes = bytes.get(6..dims_end).ok_or_else(|| PluginError::Protocol("truncated tensor dims".into()))?;
    let dims: Vec<usize> = dim_bytes.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize).collect();
    let n = element_count(&dims)?;
    let end = dims_end + 4 * n;
    let payload = bytes.get(dims_end..end).ok_or_else(|| {
        PluginError::Protocol(format!("tensor length mismatch: need {} payload bytes, have {}", 4 * n, bytes.len() - dims_end))
    })?;
    let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((Tensor { dims, data }, end))
}

/// Decodes a tensor that must occupy `bytes` exactly.
pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor, PluginError> {
    let (t, used) = decode_tensor_prefix(bytes)?;
    if used != bytes.len() {
        return Err(PluginError::Protocol(format!("tensor length mismatch: {} trailing bytes", bytes.len() - used)));
    }
    Ok(t)
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(payload: &[u8]) -> Result<Vec<(String, String)>, PluginError> {
    let text = std::str::from_utf8(payload).map_err(|_| PluginError::Protocol("key=value payload is not UTF-8".into()))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| PluginError::Protocol(format!("expected key=value, got {l:?}")))
        })
        .collect()
}

pub fn format_key_values<'a>(pairs: impl IntoIterator<Item = (&'a str, String)>) -> Vec<u8> {
    pairs.into_iter().map(|(k, v)| format!("{k}={v}\n")).collect::<String>().into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_layout() {
        let t = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = encode_tensor(&t).unwrap();
        assert_eq!(&bytes[0..4], b"TEN1");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], 2);
        assert_eq!(&bytes[6..14], &[2, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(bytes.len(), 14 + 16);
        assert_eq!(&bytes[14..18], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[26..30], &4.0f32.to_le_bytes());
        assert_eq!(decode_tensor(&bytes).unwrap(), t);
    }

    #[test]
    fn scalar_rejected() {
        assert!(Tensor::new(vec![], vec![1.0]).is_err());
        assert!(decode_tensor(b"TEN1\x01\x00\x00\x00\x80\x3f").is_err());
        assert!(decode_tensor(b"TEN1\x01\x05").is_err());
    }

    #[test]
    fn tensor_errors() {
        let t = encode_tensor(&Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        let mut bad = t.clone();
        bad[0] = b'X';
        assert!(decode_tensor(&bad).is_err());
        assert!(decode_tensor(&t[..t.len() - 1]).is_err());
        let mut long = t.clone();
        long.push(0);
        assert!(decode_tensor(&long).is_err());
        // 2^32-1 squared overflows the element count
        let overflow = [b"TEN1".as_slice(), &[1, 2], &[0xff; 8]].concat();
        assert!(matches!(decode_tensor(&overflow), Err(PluginError::Protocol(m)) if m.contains("overflow")));
    }

    #[test]
    fn frame_round_trip_and_stream_read() {
        let a = WireMessage::new(INIT, b"protocol_version=1\n".to_vec());
        let b = WireMessage::new(QUIT, Vec::new());
        let mut bytes = a.encode();
        bytes.extend(b.encode());
        let (m, used) = decode_message(&bytes).unwrap();
        assert_eq!(m, a);
        assert_eq!(decode_message(&bytes[used..]).unwrap().0, b);

        let mut cursor = io::Cursor::new(bytes);
        assert_eq!(read_message(&mut cursor).unwrap(), Some(a));
        assert_eq!(read_message(&mut cursor).unwrap(), Some(b));
        assert_eq!(read_message(&mut cursor).unwrap(), None);
    }

    #[test]
    fn frame_errors() {
        assert!(decode_message(b"INI").is_err());
        assert!(decode_message(b"XXXX\x00\x00\x00\x00").is_err());
        assert!(decode_message(b"INIT\x05\x00\x00\x00abc").is_err());
        let mut cursor = io::Cursor::new(b"INIT\x05\x00\x00\x00abc".to_vec());
        assert!(read_message(&mut cursor).is_err());
        let mut cursor = io::Cursor::new(b"TENS\xff\xff\xff\xff".to_vec());
        assert!(read_message(&mut cursor).is_err());
    }

    #[test]
    fn key_values() {
        let kv = parse_key_values(b"name = echo\n\n# c\nkind=reconstructor\n").unwrap();
        assert_eq!(kv, vec![("name".into(), "echo".into()), ("kind".into(), "reconstructor".into())]);
        assert!(parse_key_values(b"novalue\n").is_err());
        assert_eq!(format_key_values([("a", "1".to_string())]), b"a=1\n");
    }
}
