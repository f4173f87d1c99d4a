//! Binary shard files.
//!
//! ```text
//! file    := "CPK1" version:u16 record*
//! record  := len:u32 payload[len] crc32(payload):u32
//! payload := n:u16 id:u32*n
//!            labels:u16 (pos:u16 id:u32)*labels
//!            words:u16 (start:u16 end:u16)*words
//!            masked:u16 (start:u16 end:u16 strategy:u8 action:u8)*masked
//!            mrp:u16 (start:u16 end:u16 refs:u16 (start:u16 end:u16)*refs)*mrp
//!            eligible_groups:u16
//! ```
//!
//! All integers are little-endian.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::masking::{
    MaskAction, MaskedWord, MaskingConfig, MrpTarget, Strategy, TrainingInstance,
};
use crate::tokenizer::{hex, Vocab};

pub const SHARD_MAGIC: &[u8; 4] = b"CPK1";
pub const SHARD_VERSION: u16 = 1;
const MANIFEST: &str = "manifest.txt";

/// Hash of the masking configuration and the vocabulary.
pub fn fingerprint(masking: &MaskingConfig, vocab: &Vocab) -> String {
    let mut h = Sha256::new();
    h.update(masking.canonical().as_bytes());
    h.update(b"\n");
    h.update(vocab.fingerprint().as_bytes());
    hex(&h.finalize())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShardManifest {
    /// Directory holding the manifest; shard paths are relative to it.
    pub dir: PathBuf,
    /// `(file name, instance count)` per shard, in read order.
    pub shards: Vec<(String, usize)>,
    pub master_seed: u64,
    pub fingerprint: String,
}

impl ShardManifest {
    pub fn total(&self) -> usize {
        self.shards.iter().map(|s| s.1).sum()
    }

    pub fn path(&self) -> PathBuf {
        self.dir.join(MANIFEST)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "format=CPK1");
        let _ = writeln!(s, "version={SHARD_VERSION}");
        let _ = writeln!(s, "master_seed={}", self.master_seed);
        let _ = writeln!(s, "fingerprint={}", self.fingerprint);
        let _ = writeln!(s, "total={}", self.total());
        let _ = writeln!(s, "shards={}", self.shards.len());
        for (i, (path, count)) in self.shards.iter().enumerate() {
            let _ = writeln!(s, "shard.{i}.path={path}");
            let _ = writeln!(s, "shard.{i}.count={count}");
        }
        s
    }

    /// Loads `manifest.txt` from a directory, or a manifest file directly.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = if path.is_dir() {
            path.join(MANIFEST)
        } else {
            path.to_path_buf()
        };
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut kv = std::collections::BTreeMap::new();
        for line in text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
        {
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Corrupt(format!("{}: bad manifest line {line:?}", file.display()))
            })?;
            kv.insert(k.trim().to_owned(), v.trim().to_owned());
        }
        let get = |k: &str| {
            kv.get(k)
                .ok_or_else(|| Error::Corrupt(format!("{}: missing key {k}", file.display())))
        };
        let num = |k: &str| -> Result<u64> {
            get(k)?
                .parse()
                .map_err(|_| Error::Corrupt(format!("{}: key {k} is not a number", file.display())))
        };
        let version = num("version")?;
        if version != u64::from(SHARD_VERSION) {
            return Err(Error::VersionMismatch {
                path: file,
                found: version as u16,
                expected: SHARD_VERSION,
            });
        }
        let count = num("shards")? as usize;
        let mut shards = Vec::with_capacity(count);
        for i in 0..count {
            shards.push((
                get(&format!("shard.{i}.path"))?.clone(),
                num(&format!("shard.{i}.count"))? as usize,
            ));
        }
        let manifest = ShardManifest {
            dir,
            shards,
            master_seed: num("master_seed")?,
            fingerprint: get("fingerprint")?.clone(),
        };
        if manifest.total() as u64 != num("total")? {
            return Err(Error::Corrupt(format!(
                "{}: shard counts do not add up to total",
                file.display()
            )));
        }
        Ok(manifest)
    }
}

fn put_u16(buf: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v =
        u16::try_from(v).map_err(|_| Error::Corrupt(format!("{what} {v} does not fit in u16")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn strategy_code(s: Strategy) -> u8 {
    match s {
        Strategy::Mlm => 0,
        Strategy::Mrp => 1,
    }
}

fn action_code(a: MaskAction) -> u8 {
    match a {
        MaskAction::MaskToken => 0,
        MaskAction::RandomToken => 1,
        MaskAction::Keep => 2,
    }
}

pub(crate) fn encode_instance(inst: &TrainingInstance) -> Result<Vec<u8>> {
    let mut b = Vec::with_capacity(16 + inst.input_ids.len() * 8);
    put_u16(&mut b, inst.input_ids.len(), "sequence length")?;
    for &id in &inst.input_ids {
        b.extend_from_slice(&id.to_le_bytes());
    }
    let labels: Vec<(usize, u32)> = inst.labeled_positions().collect();
    put_u16(&mut b, labels.len(), "label count")?;
    for (pos, id) in labels {
        put_u16(&mut b, pos, "position")?;
        b.extend_from_slice(&id.to_le_bytes());
    }
    put_u16(&mut b, inst.words.len(), "word count")?;
    for &(s, e) in &inst.words {
        put_u16(&mut b, s, "position")?;
        put_u16(&mut b, e, "position")?;
    }
    put_u16(&mut b, inst.masked.len(), "masked word count")?;
    for m in &inst.masked {
        put_u16(&mut b, m.start, "position")?;
        put_u16(&mut b, m.end, "position")?;
        b.push(strategy_code(m.strategy));
        b.push(action_code(m.action));
    }
    put_u16(&mut b, inst.mrp_targets.len(), "MRP target count")?;
    for t in &inst.mrp_targets {
        put_u16(&mut b, t.start, "position")?;
        put_u16(&mut b, t.end, "position")?;
        put_u16(&mut b, t.referents.len(), "referent count")?;
        for &(s, e) in &t.referents {
            put_u16(&mut b, s, "position")?;
            put_u16(&mut b, e, "position")?;
        }
    }
    put_u16(&mut b, inst.eligible_groups, "eligible group count")?;
    Ok(b)
}

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.at..self.at.checked_add(n)?)?;
        self.at += n;
        Some(s)
    }
    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|s| s[0])
    }
    fn u16(&mut self) -> Option<usize> {
        self.take(2)
            .map(|s| u16::from_le_bytes([s[0], s[1]]) as usize)
    }
    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|s| u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
    }
}

fn decode_payload(payload: &[u8]) -> Option<TrainingInstance> {
    let mut c = Cursor {
        buf: payload,
        at: 0,
    };
    let n = c.u16()?;
    let input_ids = (0..n).map(|_| c.u32()).collect::<Option<Vec<_>>>()?;
    let mut mlm_labels = vec![None; n];
    for _ in 0..c.u16()? {
        let pos = c.u16()?;
        *mlm_labels.get_mut(pos)? = Some(c.u32()?);
    }
    let words = (0..c.u16()?)
        .map(|_| Some((c.u16()?, c.u16()?)))
        .collect::<Option<Vec<_>>>()?;
    let masked = (0..c.u16()?)
        .map(|_| {
            let (start, end) = (c.u16()?, c.u16()?);
            let strategy = match c.u8()? {
                0 => Strategy::Mlm,
                1 => Strategy::Mrp,
                _ => return None,
            };
            let action = match c.u8()? {
                0 => MaskAction::MaskToken,
                1 => MaskAction::RandomToken,
                2 => MaskAction::Keep,
                _ => return None,
            };
            Some(MaskedWord {
                start,
                end,
                strategy,
                action,
            })
        })
        .collect::<Option<Vec<_>>>()?;
    let mrp_targets = (0..c.u16()?)
        .map(|_| {
            let (start, end) = (c.u16()?, c.u16()?);
            let referents = (0..c.u16()?)
                .map(|_| Some((c.u16()?, c.u16()?)))
                .collect::<Option<Vec<_>>>()?;
            Some(MrpTarget {
                start,
                end,
                referents,
            })
        })
        .collect::<Option<Vec<_>>>()?;
    let eligible_groups = c.u16()?;
    if c.at != payload.len() {
        return None;
    }
    Some(TrainingInstance {
        input_ids,
        mlm_labels,
        mrp_targets,
        words,
        masked,
        eligible_groups,
    })
}

fn shard_name(i: usize) -> String {
    format!("shard-{i:05}.cpk")
}

/// Writes instances in order, `shard_size` per file, plus `manifest.txt`.
pub fn write_shards(
    instances: &[TrainingInstance],
    dir: impl AsRef<Path>,
    shard_size: usize,
    master_seed: u64,
    fingerprint: &str,
) -> Result<ShardManifest> {
    let dir = dir.as_ref();
    if shard_size == 0 {
        return Err(Error::Config("shard_size must be positive".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut shards = Vec::new();
    for (i, chunk) in instances.chunks(shard_size).enumerate() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(SHARD_MAGIC);
        bytes.extend_from_slice(&SHARD_VERSION.to_le_bytes());
        for inst in chunk {
            let payload = encode_instance(inst)?;
            bytes.extend_from_slice(&(payload.len() as u32).to_le_bytes());
            bytes.extend_from_slice(&payload);
            bytes.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
        }
        let name = shard_name(i);
        let path = dir.join(&name);
        fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        shards.push((name, chunk.len()));
    }
    let manifest = ShardManifest {
        dir: dir.to_path_buf(),
        shards,
        master_seed,
        fingerprint: fingerprint.to_owned(),
    };
    let path = manifest.path();
    fs::write(&path, manifest.to_text()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Reads every instance of one shard file.
pub fn read_shard_file(path: impl AsRef<Path>) -> Result<Vec<TrainingInstance>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 6 || &bytes[..4] != SHARD_MAGIC {
        return Err(Error::BadMagic(path.to_path_buf()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != SHARD_VERSION {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            found: version,
            expected: SHARD_VERSION,
        });
    }
    let mut c = Cursor { buf: &bytes, at: 6 };
    let mut out = Vec::new();
    while c.at < bytes.len() {
        let record = out.len();
        let truncated = || Error::TruncatedRecord {
            path: path.to_path_buf(),
            record,
        };
        let len = c.u32().ok_or_else(truncated)? as usize;
        let payload = c.take(len).ok_or_else(truncated)?;
        let crc = c.u32().ok_or_else(truncated)?;
        if crc32fast::hash(payload) != crc {
            return Err(Error::ChecksumMismatch {
                path: path.to_path_buf(),
                record,
            });
        }
        let inst = decode_payload(payload).ok_or_else(|| {
            Error::Corrupt(format!("{}: undecodable record {record}", path.display()))
        })?;
        out.push(inst);
    }
    Ok(out)
}

/// Lazily yields the instances of every shard in manifest order.
pub struct InstanceStream {
    manifest: ShardManifest,
    shard: usize,
    buffer: std::vec::IntoIter<TrainingInstance>,
}

impl Iterator for InstanceStream {
    type Item = Result<TrainingInstance>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(inst) = self.buffer.next() {
                return Some(Ok(inst));
            }
            let (name, count) = self.manifest.shards.get(self.shard)?.clone();
            self.shard += 1;
            let path = self.manifest.dir.join(&name);
            match read_shard_file(&path) {
                Ok(v) if v.len() == count => self.buffer = v.into_iter(),
                Ok(v) => {
                    self.shard = self.manifest.shards.len();
                    return Some(Err(Error::Corrupt(format!(
                        "{}: manifest lists {count} instances, file holds {}",
                        path.display(),
                        v.len()
                    ))));
                }
                Err(e) => {
                    self.shard = self.manifest.shards.len();
                    return Some(Err(e));
                }
            }
        }
    }
}

/// Streams instances from a manifest (file or its directory).
pub fn read_shards(manifest: impl AsRef<Path>) -> Result<InstanceStream> {
    let manifest = ShardManifest::load(manifest)?;
    Ok(InstanceStream {
        manifest,
        shard: 0,
        buffer: Vec::new().into_iter(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::MaskingMode;
    use crate::masking::Strategy;
    use proptest::prelude::*;

    fn instance(n: usize, salt: u32) -> TrainingInstance {
        let mut input_ids: Vec<u32> = (0..n as u32).map(|i| 5 + (i * 7 + salt) % 50).collect();
        input_ids[0] = Vocab::CLS_ID;
        input_ids[n - 1] = Vocab::SEP_ID;
        let mut mlm_labels = vec![None; n];
        mlm_labels[2] = Some(input_ids[2]);
        input_ids[2] = Vocab::MASK_ID;
        TrainingInstance {
            input_ids,
            mlm_labels,
            mrp_targets: vec![MrpTarget {
                start: 2,
                end: 2,
                referents: vec![(1, 1), (3, 3)],
            }],
            words: (1..n - 1).map(|p| (p, p)).collect(),
            masked: vec![MaskedWord {
                start: 2,
                end: 2,
                strategy: Strategy::Mrp,
                action: MaskAction::MaskToken,
            }],
            eligible_groups: 1,
        }
    }

    #[test]
    fn round_trip_many_shards() {
        let dir = tempfile::tempdir().unwrap();
        let insts: Vec<TrainingInstance> =
            (0..1000).map(|i| instance(5 + i % 30, i as u32)).collect();
        let m = write_shards(&insts, dir.path(), 300, 9, "abc").unwrap();
        assert_eq!(m.shards.len(), 4);
        assert_eq!(ShardManifest::load(dir.path()).unwrap(), m);
        let back: Vec<TrainingInstance> = read_shards(dir.path())
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(back, insts);
    }

    #[test]
    fn corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let insts: Vec<TrainingInstance> = (0..3).map(|i| instance(8, i)).collect();
        write_shards(&insts, dir.path(), 10, 0, "f").unwrap();
        let shard = dir.path().join("shard-00000.cpk");
        let good = fs::read(&shard).unwrap();

        let mut bad = good.clone();
        bad[6..10].copy_from_slice(&u32::MAX.to_le_bytes());
        fs::write(&shard, &bad).unwrap();
        assert!(matches!(
            read_shard_file(&shard),
            Err(Error::TruncatedRecord { record: 0, .. })
        ));

        let mut bad = good.clone();
        bad.truncate(good.len() - 3);
        fs::write(&shard, &bad).unwrap();
        assert!(matches!(
            read_shard_file(&shard),
            Err(Error::TruncatedRecord { record: 2, .. })
        ));

        let mut bad = good.clone();
        bad[12] ^= 0xff;
        fs::write(&shard, &bad).unwrap();
        assert!(matches!(
            read_shard_file(&shard),
            Err(Error::ChecksumMismatch { record: 0, .. })
        ));

        let mut bad = good.clone();
        bad[4] = 9;
        fs::write(&shard, &bad).unwrap();
        assert!(matches!(
            read_shard_file(&shard),
            Err(Error::VersionMismatch { found: 9, .. })
        ));

        bad[0] = b'X';
        fs::write(&shard, &bad).unwrap();
        assert!(matches!(read_shard_file(&shard), Err(Error::BadMagic(_))));

        fs::write(&shard, &good).unwrap();
        let manifest = dir.path().join(MANIFEST);
        let text = fs::read_to_string(&manifest)
            .unwrap()
            .replace("shard.0.count=3", "shard.0.count=4");
        fs::write(&manifest, text).unwrap();
        assert!(ShardManifest::load(dir.path()).is_err());
    }

    #[test]
    fn fingerprint_tracks_config_and_vocab() {
        let v1 = crate::tokenizer::build_vocab(["ab cd"], 20).unwrap();
        let v2 = crate::tokenizer::build_vocab(["ab ce"], 20).unwrap();
        let c1 = MaskingConfig::default();
        let c2 = MaskingConfig {
            mode: MaskingMode::Wwm,
            ..Default::default()
        };
        assert_eq!(fingerprint(&c1, &v1), fingerprint(&c1.clone(), &v1.clone()));
        assert_ne!(fingerprint(&c1, &v1), fingerprint(&c2, &v1));
        assert_ne!(fingerprint(&c1, &v1), fingerprint(&c1, &v2));
    }

    proptest! {
        #[test]
        fn encode_decode_identity(n in 3usize..200, salt in any::<u32>(), eligible in 0usize..5) {
            let mut inst = instance(n, salt % 1000);
            inst.eligible_groups = eligible;
            let bytes = encode_instance(&inst).unwrap();
            prop_assert_eq!(decode_payload(&bytes), Some(inst));
        }
    }
}
