//! Append-only partition log. On disk each record is a big-endian `u32`
//! length followed by that many bytes of JSON.

use std::fs::{File, OpenOptions};
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use crate::envelope::Envelope;

#[derive(Debug, Clone, PartialEq, Default)]
pub enum Durability {
    #[default]
    Memory,
    /// One `topic-<n>.log` file per partition under `dir`; `fsync` forces
    /// each append to stable storage before it is acknowledged.
    Disk { dir: PathBuf, fsync: bool },
}

#[derive(Debug)]
pub struct PartitionLog {
    entries: Vec<Envelope>,
    file: Option<File>,
    fsync: bool,
}

pub fn log_path(dir: &Path, topic: usize) -> PathBuf {
    dir.join(format!("topic-{topic}.log"))
}

impl PartitionLog {
    pub fn memory() -> Self {
        Self {
            entries: Vec::new(),
            file: None,
            fsync: false,
        }
    }

    /// Opens or creates the log for `topic`, replaying existing records. A
    /// torn record at the tail (crash mid-append) is cut off.
    pub fn open(dir: &Path, topic: usize, fsync: bool) -> io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = log_path(dir, topic);
        let (entries, good_len) = if path.exists() {
            read_records(&path)?
        } else {
            (Vec::new(), 0)
        };
        let file = OpenOptions::new().create(true).read(true).write(true).truncate(false).open(&path)?;
        if file.metadata()?.len() != good_len {
            tracing::warn!(path = %path.display(), good_len, "truncating torn log tail");
            file.set_len(good_len)?;
        }
        let mut file = file;
        use std::io::Seek;
        file.seek(io::SeekFrom::End(0))?;
        Ok(Self {
            entries,
            file: Some(file),
            fsync,
        })
    }

    pub fn append(&mut self, env: &Envelope) -> io::Result<u64> {
        if let Some(f) = self.file.as_mut() {
            let body = serde_json::to_vec(env).map_err(io::Error::other)?;
            let len = u32::try_from(body.len()).map_err(io::Error::other)?;
            let mut rec = Vec::with_capacity(4 + body.len());
            rec.extend_from_slice(&len.to_be_bytes());
            rec.extend_from_slice(&body);
            f.write_all(&rec)?;
            if self.fsync {
                f.sync_data()?;
            }
        }
        self.entries.push(env.clone());
        Ok(self.entries.len() as u64 - 1)
    }

    pub fn get(&self, offset: u64) -> Option<&Envelope> {
        self.entries.get(offset as usize)
    }

    pub fn len(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Envelope] {
        &self.entries
    }
}

/// All complete records and the byte length they span.
pub fn read_records(path: &Path) -> io::Result<(Vec<Envelope>, u64)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    let mut pos = 0u64;
    loop {
        let mut len = [0u8; 4];
        match r.read_exact(&mut len) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e),
        }
        let n = u32::from_be_bytes(len) as usize;
        let mut body = vec![0u8; n];
        match r.read_exact(&mut body) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e),
        }
        match serde_json::from_slice(&body) {
            Ok(env) => out.push(env),
            // A length that was written but whose payload is garbage can only
            // come from a torn write at the tail.
            Err(_) => break,
        }
        pos += 4 + n as u64;
    }
    Ok((out, pos))
}
