//! Category index persistence.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! magic            6 bytes  "RACIDX"
//! version          u8       currently 1
//! repr_mode        u8       0 = L, 1 = D, 2 = L+D
//! dim              u32
//! embedder_id_len  u16      followed by that many UTF-8 bytes
//! entry_count      u32
//! per entry:
//!   id_len         u16      followed by that many UTF-8 bytes
//!   vector         dim x f32
//! ```
//!
//! Loading validates magic, version, and declared lengths, then rebuilds
//! the index through its validating constructor. A plain-text export
//! (header line plus one `id component...` line per entry) is available
//! for diffing and inspection.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{CategoryIndex, EmbeddingVector, IndexEntry, RetrievalError, ReprMode};

const MAGIC: &[u8; 6] = b"RACIDX";
const VERSION: u8 = 1;

fn format_err(message: impl Into<String>) -> RetrievalError {
    RetrievalError::Format {
        message: message.into(),
    }
}

pub fn save_index(writer: &mut impl Write, index: &CategoryIndex) -> Result<(), RetrievalError> {
    writer.write_all(MAGIC)?;
    writer.write_all(&[VERSION, index.repr_mode().code()])?;
    writer.write_all(&(index.dim() as u32).to_le_bytes())?;
    write_str(writer, index.embedder_id())?;
    writer.write_all(&(index.len() as u32).to_le_bytes())?;
    for entry in index.entries() {
        write_str(writer, entry.category_id.as_str())?;
        for value in entry.vector.values() {
            writer.write_all(&value.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_index_file(path: &Path, index: &CategoryIndex) -> Result<(), RetrievalError> {
    let mut writer = BufWriter::new(File::create(path)?);
    save_index(&mut writer, index)?;
    writer.flush()?;
    Ok(())
}

pub fn load_index(reader: &mut impl Read) -> Result<CategoryIndex, RetrievalError> {
    let mut magic = [0u8; 6];
    reader.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(format_err("bad magic, not an index file"));
    }
    let mut header = [0u8; 2];
    reader.read_exact(&mut header)?;
    if header[0] != VERSION {
        return Err(format_err(format!(
            "unsupported index version {} (supported: {VERSION})",
            header[0]
        )));
    }
    let repr_mode = ReprMode::from_code(header[1])
        .ok_or_else(|| format_err(format!("unknown representation mode code {}", header[1])))?;
    let dim = read_u32(reader)? as usize;
    if dim == 0 {
        return Err(format_err("index declares zero dimension"));
    }
    let embedder_id = read_str(reader)?;
    let count = read_u32(reader)? as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let id = read_str(reader)?;
        let mut values = Vec::with_capacity(dim);
        let mut buffer = [0u8; 4];
        for _ in 0..dim {
            reader.read_exact(&mut buffer)?;
            values.push(f32::from_le_bytes(buffer));
        }
        let vector = EmbeddingVector::new(values)
            .map_err(|err| format_err(format!("entry {id:?}: {err}")))?;
        entries.push(IndexEntry {
            category_id: id.into(),
            vector,
        });
    }
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing)? != 0 {
        return Err(format_err("trailing bytes after declared entries"));
    }
    CategoryIndex::new(repr_mode, embedder_id, entries)
}

pub fn load_index_file(path: &Path) -> Result<CategoryIndex, RetrievalError> {
    load_index(&mut BufReader::new(File::open(path)?))
}

/// Deterministic plain-text form: a `#` header with mode, dimension, and
/// embedder, then one line per entry in index order.
pub fn export_index_text(index: &CategoryIndex) -> String {
    let mut out = format!(
        "# repr_mode={} dim={} embedder_id={}\n",
        index.repr_mode(),
        index.dim(),
        index.embedder_id()
    );
    for entry in index.entries() {
        out.push_str(entry.category_id.as_str());
        for value in entry.vector.values() {
            out.push(' ');
            out.push_str(&format!("{value}"));
        }
        out.push('\n');
    }
    out
}

fn write_str(writer: &mut impl Write, text: &str) -> Result<(), RetrievalError> {
    let bytes = text.as_bytes();
    if bytes.len() > u16::MAX as usize {
        return Err(format_err(format!(
            "string of {} bytes exceeds the format's u16 length",
            bytes.len()
        )));
    }
    writer.write_all(&(bytes.len() as u16).to_le_bytes())?;
    writer.write_all(bytes)?;
    Ok(())
}

fn read_u32(reader: &mut impl Read) -> Result<u32, RetrievalError> {
    let mut buffer = [0u8; 4];
    reader.read_exact(&mut buffer)?;
    Ok(u32::from_le_bytes(buffer))
}

fn read_str(reader: &mut impl Read) -> Result<String, RetrievalError> {
    let mut len_buffer = [0u8; 2];
    reader.read_exact(&mut len_buffer)?;
    let len = u16::from_le_bytes(len_buffer) as usize;
    let mut bytes = vec![0u8; len];
    reader.read_exact(&mut bytes)?;
    String::from_utf8(bytes).map_err(|_| format_err("string field is not valid UTF-8"))
}
