//! PXE1 binary event files.
//!
//! All integers little-endian, no padding.
//!
//! Header, 28 bytes:
//!
//! | offset | size | field                  |
//! |--------|------|------------------------|
//! | 0      | 4    | magic `PXE1`           |
//! | 4      | 2    | version (1)            |
//! | 6      | 2    | sensor width           |
//! | 8      | 2    | sensor height          |
//! | 10     | 8    | TOA tick, femtoseconds |
//! | 18     | 2    | TOT tick, nanoseconds  |
//! | 20     | 8    | record count           |
//!
//! Record, 16 bytes: x (u16), y (u16), TOT ticks (u16), reserved (u16,
//! zero), TOA ticks (u64).

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::error::IoError;
use crate::pipeline::event::{EventSource, PixelEvent, Timebase};

pub const MAGIC: [u8; 4] = *b"PXE1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 28;
pub const RECORD_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventFileHeader {
    pub version: u16,
    pub sensor_w: u16,
    pub sensor_h: u16,
    pub timebase: Timebase,
    pub record_count: u64,
}

impl EventFileHeader {
    pub fn new(sensor_size: (u16, u16), timebase: Timebase, record_count: u64) -> Self {
        Self {
            version: VERSION,
            sensor_w: sensor_size.0,
            sensor_h: sensor_size.1,
            timebase,
            record_count,
        }
    }

    pub fn sensor_size(&self) -> (u16, u16) {
        (self.sensor_w, self.sensor_h)
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..6].copy_from_slice(&self.version.to_le_bytes());
        b[6..8].copy_from_slice(&self.sensor_w.to_le_bytes());
        b[8..10].copy_from_slice(&self.sensor_h.to_le_bytes());
        b[10..18].copy_from_slice(&self.timebase.toa_tick_fs.to_le_bytes());
        b[18..20].copy_from_slice(&self.timebase.tot_tick_ns.to_le_bytes());
        b[20..28].copy_from_slice(&self.record_count.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; HEADER_LEN], path: &Path) -> Result<Self, IoError> {
        let found: [u8; 4] = b[0..4].try_into().expect("4 bytes");
        if found != MAGIC {
            return Err(IoError::BadMagic {
                path: path.to_path_buf(),
                found,
            });
        }
        let u16_at = |o: usize| u16::from_le_bytes([b[o], b[o + 1]]);
        let u64_at = |o: usize| u64::from_le_bytes(b[o..o + 8].try_into().expect("8 bytes"));
        let version = u16_at(4);
        if version != VERSION {
            return Err(IoError::VersionUnsupported {
                path: path.to_path_buf(),
                version,
            });
        }
        let h = Self {
            version,
            sensor_w: u16_at(6),
            sensor_h: u16_at(8),
            timebase: Timebase {
                toa_tick_fs: u64_at(10),
                tot_tick_ns: u16_at(18),
            },
            record_count: u64_at(20),
        };
        h.validate(path)?;
        Ok(h)
    }

    fn validate(&self, path: &Path) -> Result<(), IoError> {
        let bad = |reason: &str| {
            Err(IoError::InvalidHeader {
                path: path.to_path_buf(),
                reason: reason.to_string(),
            })
        };
        if self.timebase.toa_tick_fs == 0 || self.timebase.tot_tick_ns == 0 {
            return bad("clock ticks must be positive");
        }
        if self.sensor_w == 0 || self.sensor_h == 0 {
            return bad("sensor size must be positive");
        }
        Ok(())
    }
}

fn encode(e: &PixelEvent, out: &mut [u8]) {
    out[0..2].copy_from_slice(&e.x.to_le_bytes());
    out[2..4].copy_from_slice(&e.y.to_le_bytes());
    out[4..6].copy_from_slice(&e.tot.to_le_bytes());
    out[6..8].copy_from_slice(&0u16.to_le_bytes());
    out[8..16].copy_from_slice(&e.toa.to_le_bytes());
}

/// Streaming writer; the record count is patched in on [`finish`](Self::finish).
pub struct EventWriter {
    out: BufWriter<File>,
    path: PathBuf,
    header: EventFileHeader,
    buf: Vec<u8>,
}

impl EventWriter {
    pub fn create(path: impl AsRef<Path>, sensor_size: (u16, u16), timebase: Timebase) -> Result<Self, IoError> {
        let path = path.as_ref().to_path_buf();
        let header = EventFileHeader::new(sensor_size, timebase, 0);
        header.validate(&path)?;
        let file = File::create(&path).map_err(|e| IoError::io(&path, e))?;
        let mut out = BufWriter::with_capacity(1 << 20, file);
        out.write_all(&header.to_bytes()).map_err(|e| IoError::io(&path, e))?;
        Ok(Self {
            out,
            path,
            header,
            buf: Vec::new(),
        })
    }

    pub fn write(&mut self, events: &[PixelEvent]) -> Result<(), IoError> {
        self.buf.resize(events.len() * RECORD_LEN, 0);
        for (i, e) in events.iter().enumerate() {
            if e.x >= self.header.sensor_w || e.y >= self.header.sensor_h || e.tot == 0 {
                return Err(IoError::InvalidRecord {
                    path: self.path.clone(),
                    offset: HEADER_LEN as u64 + (self.header.record_count + i as u64) * RECORD_LEN as u64,
                    reason: format!("event {e:?} outside sensor or with zero TOT"),
                });
            }
            encode(e, &mut self.buf[i * RECORD_LEN..(i + 1) * RECORD_LEN]);
        }
        self.out.write_all(&self.buf).map_err(|e| IoError::io(&self.path, e))?;
        self.header.record_count += events.len() as u64;
        Ok(())
    }

    pub fn finish(mut self) -> Result<EventFileHeader, IoError> {
        let path = self.path.clone();
        self.out.flush().map_err(|e| IoError::io(&path, e))?;
        let file = self.out.get_mut();
        file.seek(SeekFrom::Start(20)).map_err(|e| IoError::io(&path, e))?;
        file.write_all(&self.header.record_count.to_le_bytes()).map_err(|e| IoError::io(&path, e))?;
        file.sync_all().map_err(|e| IoError::io(&path, e))?;
        Ok(self.header)
    }
}

/// Writes a complete file in one call.
pub fn write_events(path: impl AsRef<Path>, sensor_size: (u16, u16), timebase: Timebase, events: &[PixelEvent]) -> Result<EventFileHeader, IoError> {
    let mut w = EventWriter::create(path, sensor_size, timebase)?;
    for chunk in events.chunks(1 << 16) {
        w.write(chunk)?;
    }
    w.finish()
}

/// Streaming reader over any byte source.
pub struct EventReader<R: Read> {
    input: R,
    path: PathBuf,
    header: EventFileHeader,
    read: u64,
    buf: Vec<u8>,
    pending: std::vec::IntoIter<PixelEvent>,
    done: bool,
}

impl EventReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, IoError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| IoError::io(path, e))?;
        Self::new(BufReader::with_capacity(1 << 20, file), path)
    }
}

/// Fills `buf` as far as the source allows and returns the bytes read.
fn read_full<R: Read>(input: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match input.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(n)
}

impl<R: Read> EventReader<R> {
    /// `path` is only used in error messages.
    pub fn new(mut input: R, path: impl AsRef<Path>) -> Result<Self, IoError> {
        let path = path.as_ref().to_path_buf();
        let mut h = [0u8; HEADER_LEN];
        let got = read_full(&mut input, &mut h).map_err(|e| IoError::io(&path, e))?;
        if got >= 4 && h[0..4] != MAGIC {
            return Err(IoError::BadMagic {
                path,
                found: h[0..4].try_into().expect("4 bytes"),
            });
        }
        if got < HEADER_LEN {
            return Err(IoError::TruncatedFile {
                path,
                offset: got as u64,
                expected: HEADER_LEN as u64,
            });
        }
        let header = EventFileHeader::from_bytes(&h, &path)?;
        Ok(Self {
            input,
            path,
            header,
            read: 0,
            buf: Vec::new(),
            pending: Vec::new().into_iter(),
            done: false,
        })
    }

    pub fn header(&self) -> &EventFileHeader {
        &self.header
    }

    fn offset_of(&self, record: u64) -> u64 {
        HEADER_LEN as u64 + record * RECORD_LEN as u64
    }

    /// Appends up to `max` records to `out`; returns how many. Zero means
    /// the file is exhausted and fully validated.
    pub fn read_chunk(&mut self, out: &mut Vec<PixelEvent>, max: usize) -> Result<usize, IoError> {
        let want = (self.header.record_count - self.read).min(max as u64) as usize;
        if want == 0 {
            if !self.done {
                self.done = true;
                let mut probe = [0u8; 4096];
                let extra = read_full(&mut self.input, &mut probe).map_err(|e| IoError::io(&self.path, e))?;
                if extra > 0 {
                    return Err(IoError::TrailingData {
                        path: self.path.clone(),
                        offset: self.offset_of(self.read),
                        extra: extra as u64,
                    });
                }
            }
            return Ok(0);
        }
        self.buf.resize(want * RECORD_LEN, 0);
        let got = read_full(&mut self.input, &mut self.buf).map_err(|e| IoError::io(&self.path, e))?;
        if got < self.buf.len() {
            return Err(IoError::TruncatedFile {
                path: self.path.clone(),
                offset: self.offset_of(self.read) + got as u64,
                expected: self.offset_of(self.header.record_count),
            });
        }
        out.reserve(want);
        let (w, h) = self.header.sensor_size();
        for (i, r) in self.buf.chunks_exact(RECORD_LEN).enumerate() {
            let x = u16::from_le_bytes([r[0], r[1]]);
            let y = u16::from_le_bytes([r[2], r[3]]);
            let tot = u16::from_le_bytes([r[4], r[5]]);
            let reserved = u16::from_le_bytes([r[6], r[7]]);
            let toa = u64::from_le_bytes(r[8..16].try_into().expect("8 bytes"));
            if x >= w || y >= h || tot == 0 || reserved != 0 {
                return Err(IoError::InvalidRecord {
                    path: self.path.clone(),
                    offset: self.offset_of(self.read + i as u64),
                    reason: format!("x={x} y={y} tot={tot} reserved={reserved} on a {w}x{h} sensor"),
                });
            }
            out.push(PixelEvent::new(x, y, toa, tot));
        }
        self.read += want as u64;
        Ok(want)
    }

    /// Reads every remaining record.
    pub fn read_all(mut self) -> Result<(EventFileHeader, Vec<PixelEvent>), IoError> {
        let mut out = Vec::with_capacity((self.header.record_count - self.read).min(1 << 28) as usize);
        while self.read_chunk(&mut out, 1 << 16)? > 0 {}
        Ok((self.header, out))
    }
}

impl<R: Read> Iterator for EventReader<R> {
    type Item = Result<PixelEvent, IoError>;

    fn next(&mut self) -> Option<Self::Item> {
        if let Some(e) = self.pending.next() {
            return Some(Ok(e));
        }
        let mut chunk = Vec::new();
        match self.read_chunk(&mut chunk, 4096) {
            Ok(0) => None,
            Ok(_) => {
                self.pending = chunk.into_iter();
                self.pending.next().map(Ok)
            }
            Err(e) => {
                self.done = true;
                self.read = self.header.record_count;
                Some(Err(e))
            }
        }
    }
}

impl<R: Read> EventSource for EventReader<R> {
    type Error = IoError;

    fn timebase(&self) -> Timebase {
        self.header.timebase
    }

    fn sensor_size(&self) -> (u16, u16) {
        self.header.sensor_size()
    }

    fn next_event(&mut self) -> Option<Result<PixelEvent, IoError>> {
        self.next()
    }
}

/// Reads a whole file.
pub fn read_events(path: impl AsRef<Path>) -> Result<(EventFileHeader, Vec<PixelEvent>), IoError> {
    EventReader::open(path)?.read_all()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(n: usize) -> Vec<PixelEvent> {
        (0..n).map(|i| PixelEvent::new((i % 256) as u16, (i / 256 % 256) as u16, i as u64 * 7, 1 + (i % 300) as u16)).collect()
    }

    #[test]
    fn header_layout() {
        let h = EventFileHeader::new((256, 256), Timebase::default(), 3);
        let b = h.to_bytes();
        assert_eq!(&b[0..4], b"PXE1");
        assert_eq!(&b[4..6], &[1, 0]);
        assert_eq!(&b[10..18], &1_562_500u64.to_le_bytes());
        assert_eq!(&b[18..20], &[25, 0]);
        assert_eq!(&b[20..28], &[3, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(EventFileHeader::from_bytes(&b, Path::new("x")).unwrap(), h);
    }

    #[test]
    fn record_layout() {
        let mut r = [0u8; RECORD_LEN];
        encode(&PixelEvent::new(0x0102, 0x0304, 0x0a0b0c0d, 0x0506), &mut r);
        assert_eq!(r, [2, 1, 4, 3, 6, 5, 0, 0, 0x0d, 0x0c, 0x0b, 0x0a, 0, 0, 0, 0]);
    }

    #[test]
    fn empty_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.pxe");
        write_events(&p, (256, 256), Timebase::default(), &[]).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len(), HEADER_LEN as u64);
        let (h, ev) = read_events(&p).unwrap();
        assert_eq!(h.record_count, 0);
        assert!(ev.is_empty());
    }

    #[test]
    fn truncation_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.pxe");
        write_events(&p, (256, 256), Timebase::default(), &sample(10)).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..HEADER_LEN + 5 * RECORD_LEN + 7]).unwrap();
        match read_events(&p) {
            Err(IoError::TruncatedFile { offset, expected, .. }) => {
                assert_eq!(offset, (HEADER_LEN + 5 * RECORD_LEN + 7) as u64);
                assert_eq!(expected, (HEADER_LEN + 10 * RECORD_LEN) as u64);
            }
            other => panic!("{other:?}"),
        }
        std::fs::write(&p, &bytes[..10]).unwrap();
        assert!(matches!(read_events(&p), Err(IoError::TruncatedFile { offset: 10, .. })));
    }

    #[test]
    fn bad_magic_and_version() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pxe");
        let mut b = EventFileHeader::new((256, 256), Timebase::default(), 0).to_bytes();
        b[0] = b'Q';
        std::fs::write(&p, b).unwrap();
        assert!(matches!(read_events(&p), Err(IoError::BadMagic { found, .. }) if &found == b"QXE1"));
        let mut b = EventFileHeader::new((256, 256), Timebase::default(), 0).to_bytes();
        b[4] = 9;
        std::fs::write(&p, b).unwrap();
        assert!(matches!(read_events(&p), Err(IoError::VersionUnsupported { version: 9, .. })));
    }

    #[test]
    fn trailing_bytes_and_bad_records() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.pxe");
        write_events(&p, (256, 256), Timebase::default(), &sample(3)).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.push(0);
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_events(&p), Err(IoError::TrailingData { extra: 1, .. })));
        bytes.pop();
        bytes[HEADER_LEN + RECORD_LEN + 6] = 1;
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_events(&p), Err(IoError::InvalidRecord { offset, .. }) if offset == (HEADER_LEN + RECORD_LEN) as u64));
        assert!(write_events(&p, (16, 16), Timebase::default(), &[PixelEvent::new(16, 0, 0, 1)]).is_err());
    }

    #[test]
    fn iterator_matches_bulk_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("i.pxe");
        let ev = sample(10_000);
        write_events(&p, (256, 256), Timebase::default(), &ev).unwrap();
        let streamed: Vec<PixelEvent> = EventReader::open(&p).unwrap().map(Result::unwrap).collect();
        assert_eq!(streamed, ev);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn round_trip_in_memory(ev in prop::collection::vec((0u16..256, 0u16..256, any::<u64>(), 1u16..), 0..200)) {
            let ev: Vec<PixelEvent> = ev.into_iter().map(|(x, y, t, o)| PixelEvent::new(x, y, t, o)).collect();
            let mut bytes = EventFileHeader::new((256, 256), Timebase::default(), ev.len() as u64).to_bytes().to_vec();
            let mut r = [0u8; RECORD_LEN];
            for e in &ev {
                encode(e, &mut r);
                bytes.extend_from_slice(&r);
            }
            let (_, back) = EventReader::new(&bytes[..], "mem").unwrap().read_all().unwrap();
            prop_assert_eq!(back, ev);
        }
    }
}
