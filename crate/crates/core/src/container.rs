//! Versioned binary container for environment networks, reduced-order
//! models and control sequences.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    4 bytes  "CTWN"
//! version  u16
//! kind     u16      1 = network, 2 = reduced-order model, 3 = controls
//! count    u32      number of entries
//! entries  count × { tag u8, name_len u16, name utf-8, payload }
//! ```
//!
//! Payloads by tag: `1` u64 list, `2` f64 list, `3` matrix list. Lists
//! start with a u64 length. A matrix is `rows u64, cols u64` followed by
//! `rows·cols` (re, im) f64 pairs in row-major order. Floats are stored
//! as raw IEEE-754 bits, so a decode/encode roundtrip is bit-identical.
//! Unknown entries are ignored by the decoder; missing ones are errors.
//! See `docs/FORMAT.md` for the per-kind entry tables.

use std::collections::BTreeMap;
use std::path::Path;

use crate::control::ControlSequence;
use crate::envnet::{EnvironmentNetwork, SideEnvironment};
use crate::error::{Error, Result};
use crate::rom::ReducedOrderModel;
use crate::tensor::{CMat, C64};

pub const MAGIC: [u8; 4] = *b"CTWN";
pub const VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u16)]
pub enum Kind {
    Network = 1,
    ReducedModel = 2,
    Controls = 3,
}

impl Kind {
    fn from_u16(v: u16) -> Result<Self> {
        match v {
            1 => Ok(Self::Network),
            2 => Ok(Self::ReducedModel),
            3 => Ok(Self::Controls),
            _ => Err(Error::Format(format!("unknown kind {v}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Entry {
    U64(Vec<u64>),
    F64(Vec<f64>),
    Tensors(Vec<CMat>),
}

impl Entry {
    fn tag(&self) -> u8 {
        match self {
            Entry::U64(_) => 1,
            Entry::F64(_) => 2,
            Entry::Tensors(_) => 3,
        }
    }
}

/// Decoded container: a kind plus named entries in insertion order.
#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub kind: Kind,
    pub entries: Vec<(String, Entry)>,
}

impl Container {
    pub fn new(kind: Kind) -> Self {
        Self { kind, entries: vec![] }
    }

    pub fn push(&mut self, name: &str, entry: Entry) {
        self.entries.push((name.to_owned(), entry));
    }

    fn index(&self) -> BTreeMap<&str, &Entry> {
        self.entries.iter().map(|(n, e)| (n.as_str(), e)).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.kind as u16).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, entry) in &self.entries {
            out.push(entry.tag());
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            match entry {
                Entry::U64(v) => {
                    put_u64(&mut out, v.len() as u64);
                    v.iter().for_each(|&x| put_u64(&mut out, x));
                }
                Entry::F64(v) => {
                    put_u64(&mut out, v.len() as u64);
                    v.iter().for_each(|&x| put_u64(&mut out, x.to_bits()));
                }
                Entry::Tensors(v) => {
                    put_u64(&mut out, v.len() as u64);
                    for m in v {
                        put_u64(&mut out, m.nrows() as u64);
                        put_u64(&mut out, m.ncols() as u64);
                        for r in 0..m.nrows() {
                            for c in 0..m.ncols() {
                                put_u64(&mut out, m[(r, c)].re.to_bits());
                                put_u64(&mut out, m[(r, c)].im.to_bits());
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let kind = Kind::from_u16(r.u16()?)?;
        let count = r.u32()?;
        let mut entries = Vec::new();
        for _ in 0..count {
            let tag = r.take(1)?[0];
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format("entry name is not utf-8".into()))?
                .to_owned();
            let n = r.len()?;
            let entry = match tag {
                1 => Entry::U64((0..n).map(|_| r.u64()).collect::<Result<_>>()?),
                2 => Entry::F64((0..n).map(|_| r.u64().map(f64::from_bits)).collect::<Result<_>>()?),
                3 => Entry::Tensors((0..n).map(|_| r.matrix()).collect::<Result<_>>()?),
                _ => return Err(Error::Format(format!("unknown tag {tag} for entry {name}"))),
            };
            entries.push((name, entry));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { kind, entries })
    }
}

fn put_u64(out: &mut Vec<u8>, x: u64) {
    out.extend_from_slice(&x.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("unexpected end of data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// A length that must fit in the remaining input at 8 bytes per item.
    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        if n > ((self.bytes.len() - self.pos) / 8) as u64 {
            return Err(Error::Format(format!("length {n} exceeds remaining data")));
        }
        Ok(n as usize)
    }

    fn matrix(&mut self) -> Result<CMat> {
        let rows = self.len()?;
        let cols = self.len()?;
        if rows.checked_mul(cols).is_none_or(|n| n > (self.bytes.len() - self.pos) / 16) {
            return Err(Error::Format(format!("{rows}x{cols} matrix exceeds remaining data")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let re = f64::from_bits(self.u64()?);
            let im = f64::from_bits(self.u64()?);
            data.push(C64::new(re, im));
        }
        Ok(CMat::from_fn(rows, cols, |r, c| data[r * cols + c]))
    }
}

/// Types stored in a [`Container`].
pub trait Persist: Sized {
    const KIND: Kind;

    fn encode(&self) -> Container;

    fn decode(c: &Container) -> Result<Self>;

    fn to_bytes(&self) -> Vec<u8> {
        self.encode().to_bytes()
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let c = Container::from_bytes(bytes)?;
        if c.kind != Self::KIND {
            return Err(Error::Format(format!("expected {:?}, found {:?}", Self::KIND, c.kind)));
        }
        Self::decode(&c)
    }

    fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Fields<'a> {
    map: BTreeMap<&'a str, &'a Entry>,
    prefix: &'a str,
}

impl<'a> Fields<'a> {
    fn get(&self, name: &str) -> Result<&'a Entry> {
        let key = format!("{}{name}", self.prefix);
        self.map.get(key.as_str()).copied().ok_or_else(|| Error::Format(format!("missing entry {key}")))
    }

    fn has(&self, name: &str) -> bool {
        self.map.contains_key(format!("{}{name}", self.prefix).as_str())
    }

    fn u64s(&self, name: &str) -> Result<&'a [u64]> {
        match self.get(name)? {
            Entry::U64(v) => Ok(v),
            _ => Err(Error::Format(format!("entry {}{name} is not a u64 list", self.prefix))),
        }
    }

    fn f64s(&self, name: &str) -> Result<&'a [f64]> {
        match self.get(name)? {
            Entry::F64(v) => Ok(v),
            _ => Err(Error::Format(format!("entry {}{name} is not an f64 list", self.prefix))),
        }
    }

    fn tensors(&self, name: &str) -> Result<&'a [CMat]> {
        match self.get(name)? {
            Entry::Tensors(v) => Ok(v),
            _ => Err(Error::Format(format!("entry {}{name} is not a tensor list", self.prefix))),
        }
    }

    fn scalar_u64(&self, name: &str) -> Result<u64> {
        match self.u64s(name)? {
            [x] => Ok(*x),
            v => Err(Error::Format(format!("entry {}{name} has {} values, expected 1", self.prefix, v.len()))),
        }
    }

    fn usize(&self, name: &str) -> Result<usize> {
        usize::try_from(self.scalar_u64(name)?).map_err(|_| Error::Format(format!("entry {name} overflows usize")))
    }

    fn usizes(&self, name: &str) -> Result<Vec<usize>> {
        self.u64s(name)?
            .iter()
            .map(|&x| usize::try_from(x).map_err(|_| Error::Format(format!("entry {name} overflows usize"))))
            .collect()
    }
}

fn usizes(v: &[usize]) -> Entry {
    Entry::U64(v.iter().map(|&x| x as u64).collect())
}

fn one(x: usize) -> Entry {
    Entry::U64(vec![x as u64])
}

/// Network entries under `prefix`; blocks are flattened step by step with
/// the per-step block count in `blocks_per_step`.
fn push_network(c: &mut Container, prefix: &str, net: &EnvironmentNetwork) {
    let key = |s: &str| format!("{prefix}{s}");
    c.push(&key("d_s"), one(net.d_s()));
    c.push(&key("ranks"), usizes(net.ranks()));
    c.push(&key("blocks_per_step"), usizes(&net.blocks().iter().map(Vec::len).collect::<Vec<_>>()));
    c.push(&key("blocks"), Entry::Tensors(net.blocks().iter().flatten().cloned().collect()));
    c.push(&key("step_errors"), Entry::F64(net.step_errors().to_vec()));
    c.push(&key("params"), Entry::F64(vec![net.step_threshold(), net.epsilon()]));
    c.push(&key("r_max"), one(net.r_max()));
    c.push(&key("exceeded"), one(net.exceeded_budget() as usize));
    c.push(&key("degenerate_steps"), usizes(net.degenerate_steps()));
    if let Some(iso) = net.isometries() {
        c.push(&key("isometries"), Entry::Tensors(iso.to_vec()));
    }
}

fn read_network(f: &Fields<'_>) -> Result<EnvironmentNetwork> {
    let counts = f.usizes("blocks_per_step")?;
    let flat = f.tensors("blocks")?;
    if counts.iter().sum::<usize>() != flat.len() {
        return Err(Error::Format(format!("block counts sum to {}, found {}", counts.iter().sum::<usize>(), flat.len())));
    }
    let mut blocks = Vec::with_capacity(counts.len());
    let mut at = 0;
    for n in counts {
        blocks.push(flat[at..at + n].to_vec());
        at += n;
    }
    let params = f.f64s("params")?;
    if params.len() != 2 {
        return Err(Error::Format("params must hold step threshold and epsilon".into()));
    }
    let net = EnvironmentNetwork::from_parts(
        f.usize("d_s")?,
        blocks,
        f.usizes("ranks")?,
        f.f64s("step_errors")?.to_vec(),
        params[0],
        params[1],
        f.usize("r_max")?,
        f.scalar_u64("exceeded")? != 0,
        f.usizes("degenerate_steps")?,
    )?;
    if f.has("isometries") {
        net.with_isometries(f.tensors("isometries")?.to_vec())
    } else {
        Ok(net)
    }
}

impl Persist for EnvironmentNetwork {
    const KIND: Kind = Kind::Network;

    fn encode(&self) -> Container {
        let mut c = Container::new(Self::KIND);
        push_network(&mut c, "", self);
        c
    }

    fn decode(c: &Container) -> Result<Self> {
        read_network(&Fields { map: c.index(), prefix: "" })
    }
}

impl Persist for ReducedOrderModel {
    const KIND: Kind = Kind::ReducedModel;

    fn encode(&self) -> Container {
        let mut c = Container::new(Self::KIND);
        c.push("target", one(self.target()));
        let psi = self.psi_s0();
        c.push("psi_s0", Entry::Tensors(vec![CMat::from_fn(psi.len(), 1, |r, _| psi[r])]));
        for (name, side) in [("left.", self.left()), ("right.", self.right())] {
            c.push(&format!("{name}system"), Entry::Tensors(side.system.clone()));
            push_network(&mut c, name, &side.network);
        }
        c
    }

    fn decode(c: &Container) -> Result<Self> {
        let map = c.index();
        let top = Fields { map: map.clone(), prefix: "" };
        let psi = match top.tensors("psi_s0")? {
            [m] if m.ncols() == 1 => (0..m.nrows()).map(|r| m[(r, 0)]).collect(),
            _ => return Err(Error::Format("psi_s0 must be a single column".into())),
        };
        let side = |prefix: &'static str| -> Result<SideEnvironment> {
            let f = Fields { map: map.clone(), prefix };
            Ok(SideEnvironment { system: f.tensors("system")?.to_vec(), network: read_network(&f)? })
        };
        ReducedOrderModel::new(top.usize("target")?, psi, side("left.")?, side("right.")?)
            .map_err(|e| Error::Format(e.to_string()))
    }
}

impl Persist for ControlSequence {
    const KIND: Kind = Kind::Controls;

    fn encode(&self) -> Container {
        let mut c = Container::new(Self::KIND);
        c.push("k_start", one(self.k_start()));
        c.push("gates", Entry::Tensors(self.gates().to_vec()));
        c
    }

    fn decode(c: &Container) -> Result<Self> {
        let f = Fields { map: c.index(), prefix: "" };
        ControlSequence::new(f.usize("k_start")?, f.tensors("gates")?.to_vec()).map_err(|e| Error::Format(e.to_string()))
    }
}
