//! Binary checkpoint files.
//!
//! Layout: `CTPC`, format version (u16 LE), header length (u32 LE), a UTF-8
//! header of `key value` lines and `entry name dims offset` lines, the
//! little-endian f32 payload, and an FNV-1a digest of the payload (u64 LE).

use std::path::Path;

use ctp_core::causal::InterventionMode;
use ctp_core::grad::Array;
use ctp_core::harness::{digest, Checkpoint, RunSettings, CHECKPOINT_VERSION};
use ctp_core::model::Family;

use crate::error::{io_err, CtpError, Result};
use crate::formats::write_file;

pub const MAGIC: &[u8; 4] = b"CTPC";

fn fnv(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

struct Payload {
    header: String,
    data: Vec<u8>,
}

impl Payload {
    fn entry(&mut self, name: &str, shape: &[usize], values: &[f64]) {
        let dims = if shape.is_empty() {
            "-".to_string()
        } else {
            shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
        };
        self.header.push_str(&format!("entry {name} {dims} {}\n", self.data.len() / 4));
        for v in values {
            self.data.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
}

pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let s = &ck.settings;
    let mut p = Payload {
        header: format!(
            "family {}\nconfig {}\ndigest {:016x}\ncausal {}\nintervention {}\nhalf_width {}\ndecay {}\nadam_step {}\nstep {}\nepoch {}\n",
            ck.family.name(),
            ck.config_text,
            ck.config_digest,
            s.causal,
            s.intervention.name(),
            s.half_width,
            s.decay,
            ck.adam_step,
            ck.step,
            ck.epoch
        ),
        data: Vec::new(),
    };
    for (name, a) in &ck.params {
        p.entry(&format!("param/{name}"), a.shape(), a.data());
    }
    for ((name, _), a) in ck.params.iter().zip(&ck.first_moment) {
        p.entry(&format!("adam_m/{name}"), a.shape(), a.data());
    }
    for ((name, _), a) in ck.params.iter().zip(&ck.second_moment) {
        p.entry(&format!("adam_v/{name}"), a.shape(), a.data());
    }
    if let Some(m) = &ck.running_mean {
        p.entry("running_mean", &[m.len()], m);
    }
    let mut out = Vec::with_capacity(10 + p.header.len() + p.data.len() + 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&ck.version.to_le_bytes());
    out.extend_from_slice(&(p.header.len() as u32).to_le_bytes());
    out.extend_from_slice(p.header.as_bytes());
    out.extend_from_slice(&p.data);
    out.extend_from_slice(&fnv(&p.data).to_le_bytes());
    out
}

fn integrity(msg: impl Into<String>) -> CtpError {
    CtpError::Integrity(msg.into())
}

struct Entry<'a> {
    name: &'a str,
    shape: Vec<usize>,
    offset: usize,
}

impl Entry<'_> {
    fn len(&self) -> usize {
        self.shape.iter().product()
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(CtpError::Format("not a checkpoint (bad magic bytes)".into()));
    }
    if bytes.len() < 10 {
        return Err(integrity("checkpoint truncated inside the preamble"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version > CHECKPOINT_VERSION {
        return Err(CtpError::Version {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    if version == 0 {
        return Err(CtpError::Format("checkpoint version 0 is not a valid version".into()));
    }
    let header_len = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
    let rest = &bytes[10..];
    if rest.len() < header_len + 8 {
        return Err(integrity("checkpoint truncated inside the header"));
    }
    let header = std::str::from_utf8(&rest[..header_len]).map_err(|_| integrity("checkpoint header is not UTF-8"))?;
    let body = &rest[header_len..];
    let (data, tail) = body.split_at(body.len() - 8);
    if data.len() % 4 != 0 {
        return Err(integrity("checkpoint payload is not a whole number of floats"));
    }

    let mut fields = std::collections::BTreeMap::new();
    let mut entries = Vec::new();
    for line in header.lines() {
        let (key, value) = line.split_once(' ').unwrap_or((line, ""));
        if key == "entry" {
            let parts: Vec<&str> = value.split(' ').collect();
            if parts.len() != 3 {
                return Err(integrity(format!("malformed entry line `{line}`")));
            }
            let shape = if parts[1] == "-" {
                Vec::new()
            } else {
                parts[1]
                    .split('x')
                    .map(|d| d.parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| integrity(format!("bad shape in `{line}`")))?
            };
            let offset = parts[2].parse().map_err(|_| integrity(format!("bad offset in `{line}`")))?;
            entries.push(Entry {
                name: parts[0],
                shape,
                offset,
            });
        } else if fields.insert(key, value).is_some() {
            return Err(integrity(format!("duplicate header field `{key}`")));
        }
    }
    let floats = data.len() / 4;
    let mut expected = 0;
    for e in &entries {
        if e.offset != expected {
            return Err(integrity(format!("entry `{}` at offset {}, expected {expected}", e.name, e.offset)));
        }
        expected += e.len();
    }
    if expected != floats {
        return Err(integrity(format!(
            "checkpoint truncated or padded: header describes {expected} values, payload holds {floats}"
        )));
    }
    let stored = u64::from_le_bytes(tail.try_into().expect("eight bytes"));
    if stored != fnv(data) {
        return Err(integrity("payload digest mismatch"));
    }

    let field = |k: &str| -> Result<&str> {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| integrity(format!("missing header field `{k}`")))
    };
    fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
        v.parse().map_err(|_| integrity(format!("bad header value `{k} {v}`")))
    }
    let family = match field("family")? {
        "stgat" => Family::Stgat,
        "stgcnn" => Family::Stgcnn,
        other => return Err(integrity(format!("unknown family `{other}`"))),
    };
    let config_text = field("config")?.to_string();
    let config_digest = u64::from_str_radix(field("digest")?, 16).map_err(|_| integrity("bad config digest"))?;
    if digest(&config_text) != config_digest {
        return Err(integrity(format!(
            "config digest {config_digest:016x} does not match the stored configuration `{config_text}`"
        )));
    }
    let settings = RunSettings {
        causal: num("causal", field("causal")?)?,
        intervention: InterventionMode::parse(field("intervention")?)
            .ok_or_else(|| integrity("unknown intervention mode"))?,
        half_width: num("half_width", field("half_width")?)?,
        decay: num("decay", field("decay")?)?,
    };

    let value = |e: &Entry| -> Vec<f64> {
        data[e.offset * 4..(e.offset + e.len()) * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")) as f64)
            .collect()
    };
    let array = |e: &Entry| -> Result<Array> { Ok(Array::new(&e.shape, value(e))?) };
    let mut params = Vec::new();
    let mut first_moment = Vec::new();
    let mut second_moment = Vec::new();
    let mut running_mean = None;
    for e in &entries {
        if let Some(n) = e.name.strip_prefix("param/") {
            params.push((n.to_string(), array(e)?));
        } else if let Some(n) = e.name.strip_prefix("adam_m/") {
            first_moment.push((n, array(e)?));
        } else if let Some(n) = e.name.strip_prefix("adam_v/") {
            second_moment.push((n, array(e)?));
        } else if e.name == "running_mean" {
            running_mean = Some(value(e));
        } else {
            return Err(integrity(format!("unknown entry `{}`", e.name)));
        }
    }
    let ordered = |m: Vec<(&str, Array)>, what: &str| -> Result<Vec<Array>> {
        if m.len() != params.len() || m.iter().zip(&params).any(|((n, a), (pn, pa))| n != pn || a.shape() != pa.shape()) {
            return Err(integrity(format!("{what} entries do not line up with the parameters")));
        }
        Ok(m.into_iter().map(|(_, a)| a).collect())
    };
    let first_moment = ordered(first_moment, "first-moment")?;
    let second_moment = ordered(second_moment, "second-moment")?;
    Ok(Checkpoint {
        version,
        family,
        config_text,
        config_digest,
        settings,
        params,
        adam_step: num("adam_step", field("adam_step")?)?,
        first_moment,
        second_moment,
        running_mean,
        step: num("step", field("step")?)?,
        epoch: num("epoch", field("epoch")?)?,
    })
}

pub fn save(path: &Path, ck: &Checkpoint) -> Result<()> {
    write_file(path, &encode(ck))
}

/// Reads and fully validates a checkpoint; nothing is returned unless every
/// check passes.
pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    decode(&bytes)
}
