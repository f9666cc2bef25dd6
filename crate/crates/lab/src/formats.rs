//! ROHL trajectory datasets and ROHC parameter checkpoints.
//!
//! Both are fixed-order little-endian containers: a 4-byte magic, a `u32`
//! version, then the body. Readers never coerce: a wrong magic, another
//! version or a short file is a distinct error.

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use rohil_core::datasets::{ActionSource, DatasetHeader, LightTag, TrajectoryDataset, Transition};
use rohil_core::litworld::{IlluminationConfig, Observation, WorldState};
use rohil_core::nets::{Agent, FrozenAnchor, NetDims, Params};
use rohil_core::numerics::Tensor;

pub const DATASET_MAGIC: [u8; 4] = *b"ROHL";
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"ROHC";
pub const DATASET_VERSION: u32 = 1;
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug)]
pub enum FormatError {
    BadMagic {
        expected: [u8; 4],
        found: [u8; 4],
    },
    Version {
        expected: u32,
        found: u32,
    },
    /// The file ended inside the header (`record: None`) or inside a record.
    Truncated {
        record: Option<u64>,
        context: &'static str,
    },
    /// Structurally readable but semantically invalid content.
    Invalid(String),
    /// A parameter array the reader needs is not in the checkpoint.
    MissingArray(String),
    Io(io::Error),
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FormatError::BadMagic { expected, found } => write!(
                f,
                "bad magic: expected {:?}, found {:?}",
                String::from_utf8_lossy(expected),
                String::from_utf8_lossy(found)
            ),
            FormatError::Version { expected, found } => {
                write!(
                    f,
                    "version mismatch: file is v{found}, reader supports v{expected}"
                )
            }
            FormatError::Truncated {
                record: Some(i),
                context,
            } => {
                write!(f, "truncated file: record {i} ends early ({context})")
            }
            FormatError::Truncated {
                record: None,
                context,
            } => write!(f, "truncated file: header ends early ({context})"),
            FormatError::Invalid(msg) => write!(f, "invalid content: {msg}"),
            FormatError::MissingArray(name) => write!(f, "checkpoint has no array named `{name}`"),
            FormatError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for FormatError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            FormatError::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for FormatError {
    fn from(e: io::Error) -> Self {
        FormatError::Io(e)
    }
}

pub type FormatResult<T> = Result<T, FormatError>;

/// Maps an unexpected EOF onto [`FormatError::Truncated`].
trait Context<T> {
    fn at(self, record: Option<u64>, context: &'static str) -> FormatResult<T>;
}

impl<T> Context<T> for io::Result<T> {
    fn at(self, record: Option<u64>, context: &'static str) -> FormatResult<T> {
        self.map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => FormatError::Truncated { record, context },
            _ => FormatError::Io(e),
        })
    }
}

fn read_preamble(r: &mut impl Read, magic: [u8; 4], version: u32) -> FormatResult<()> {
    let mut found = [0u8; 4];
    r.read_exact(&mut found).at(None, "magic")?;
    if found != magic {
        return Err(FormatError::BadMagic {
            expected: magic,
            found,
        });
    }
    let v = r.read_u32::<LE>().at(None, "version")?;
    if v != version {
        return Err(FormatError::Version {
            expected: version,
            found: v,
        });
    }
    Ok(())
}

/// True when `r` is at end of input.
fn at_eof(r: &mut impl io::BufRead) -> io::Result<bool> {
    Ok(r.fill_buf()?.is_empty())
}

// ---------- datasets ----------

fn write_state(w: &mut impl Write, s: &WorldState) -> io::Result<()> {
    for v in s.agent.iter().chain(&s.target) {
        w.write_f32::<LE>(*v)?;
    }
    w.write_u32::<LE>(s.step)
}

fn read_state(r: &mut impl Read) -> io::Result<WorldState> {
    let mut v = [0f32; 4];
    r.read_f32_into::<LE>(&mut v)?;
    Ok(WorldState {
        agent: [v[0], v[1]],
        target: [v[2], v[3]],
        step: r.read_u32::<LE>()?,
    })
}

fn write_obs(w: &mut impl Write, o: &Observation) -> io::Result<()> {
    w.write_all(&o.image)?;
    w.write_f32::<LE>(o.proprio[0])?;
    w.write_f32::<LE>(o.proprio[1])
}

fn read_obs(r: &mut impl Read, image_bytes: usize) -> io::Result<Observation> {
    let mut image = vec![0u8; image_bytes];
    r.read_exact(&mut image)?;
    let mut proprio = [0f32; 2];
    r.read_f32_into::<LE>(&mut proprio)?;
    Ok(Observation { image, proprio })
}

pub fn write_dataset_to(w: &mut impl Write, ds: &TrajectoryDataset) -> FormatResult<()> {
    let h = &ds.header;
    if h.action_dim as usize != 2 {
        return Err(FormatError::Invalid(format!(
            "action dimension {} is not 2",
            h.action_dim
        )));
    }
    if h.lights.is_empty() || h.lights.len() > u8::MAX as usize {
        return Err(FormatError::Invalid(format!(
            "light table has {} entries",
            h.lights.len()
        )));
    }
    ds.validate()
        .map_err(|e| FormatError::Invalid(e.to_string()))?;
    w.write_all(&DATASET_MAGIC)?;
    w.write_u32::<LE>(DATASET_VERSION)?;
    w.write_u16::<LE>(h.height)?;
    w.write_u16::<LE>(h.width)?;
    w.write_u8(h.channels)?;
    w.write_u8(h.action_dim)?;
    w.write_u8(h.lights.len() as u8)?;
    for light in &h.lights {
        for v in light.to_fields() {
            w.write_f32::<LE>(v)?;
        }
    }
    for (i, t) in ds.transitions.iter().enumerate() {
        let (Some(state), Some(next_state)) = (&t.state, &t.next_state) else {
            return Err(FormatError::Invalid(format!(
                "record {i} has no world state"
            )));
        };
        w.write_u32::<LE>(t.episode)?;
        w.write_u32::<LE>(t.step)?;
        w.write_u8(t.light.code())?;
        w.write_u8(t.source.code())?;
        write_state(w, state)?;
        write_state(w, next_state)?;
        write_obs(w, &t.obs)?;
        write_obs(w, &t.next_obs)?;
        for a in t.action {
            w.write_f32::<LE>(a)?;
        }
        w.write_f32::<LE>(t.reward)?;
        w.write_u8(t.done as u8)?;
    }
    Ok(())
}

pub fn read_dataset_from(r: &mut impl io::BufRead) -> FormatResult<TrajectoryDataset> {
    read_preamble(r, DATASET_MAGIC, DATASET_VERSION)?;
    let height = r.read_u16::<LE>().at(None, "image height")?;
    let width = r.read_u16::<LE>().at(None, "image width")?;
    let channels = r.read_u8().at(None, "channels")?;
    let action_dim = r.read_u8().at(None, "action dimension")?;
    if action_dim != 2 {
        return Err(FormatError::Invalid(format!(
            "action dimension {action_dim} is not 2"
        )));
    }
    let count = r.read_u8().at(None, "light count")?;
    let mut lights = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let mut f = [0f32; IlluminationConfig::FIELDS];
        r.read_f32_into::<LE>(&mut f).at(None, "light table")?;
        lights.push(IlluminationConfig::from_fields(f));
    }
    let header = DatasetHeader {
        height,
        width,
        channels,
        action_dim,
        lights,
    };
    let image_bytes = header.image_bytes();
    let mut transitions = Vec::new();
    let mut index = 0u64;
    while !at_eof(r)? {
        let at = Some(index);
        let episode = r.read_u32::<LE>().at(at, "episode")?;
        let step = r.read_u32::<LE>().at(at, "step")?;
        let light_code = r.read_u8().at(at, "light tag")?;
        let source_code = r.read_u8().at(at, "action source")?;
        let light = LightTag::from_code(light_code).ok_or_else(|| {
            FormatError::Invalid(format!("record {index}: light tag {light_code}"))
        })?;
        let source = ActionSource::from_code(source_code).ok_or_else(|| {
            FormatError::Invalid(format!("record {index}: action source {source_code}"))
        })?;
        let state = read_state(r).at(at, "state")?;
        let next_state = read_state(r).at(at, "next state")?;
        let obs = read_obs(r, image_bytes).at(at, "observation")?;
        let next_obs = read_obs(r, image_bytes).at(at, "next observation")?;
        let mut action = [0f32; 2];
        r.read_f32_into::<LE>(&mut action).at(at, "action")?;
        let reward = r.read_f32::<LE>().at(at, "reward")?;
        let done = match r.read_u8().at(at, "done")? {
            0 => false,
            1 => true,
            b => {
                return Err(FormatError::Invalid(format!(
                    "record {index}: done byte {b}"
                )))
            }
        };
        transitions.push(Transition {
            episode,
            step,
            light,
            source,
            state: Some(state),
            next_state: Some(next_state),
            obs,
            action,
            reward,
            next_obs,
            done,
        });
        index += 1;
    }
    let ds = TrajectoryDataset {
        header,
        transitions,
    };
    ds.validate()
        .map_err(|e| FormatError::Invalid(e.to_string()))?;
    Ok(ds)
}

pub fn write_dataset(path: impl AsRef<Path>, ds: &TrajectoryDataset) -> FormatResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset_to(&mut w, ds)?;
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> FormatResult<TrajectoryDataset> {
    read_dataset_from(&mut BufReader::new(File::open(path)?))
}

// ---------- checkpoints ----------

/// Named fp32 arrays plus the metadata block.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub arrays: Vec<(String, Tensor<f32>)>,
    /// Learner steps behind these parameters.
    pub step: u64,
    pub config_hash: u64,
}

impl Checkpoint {
    pub fn from_agent(agent: &Agent<f32>, step: u64, config_hash: u64) -> Self {
        let arrays = agent
            .named("")
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        Self {
            arrays,
            step,
            config_hash,
        }
    }

    /// θ₀ only: encoder, actor and online critics.
    pub fn from_anchor(anchor: &FrozenAnchor<f32>, step: u64, config_hash: u64) -> Self {
        let arrays = anchor
            .named()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        Self {
            arrays,
            step,
            config_hash,
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    fn extent(&self, name: &str, axis: usize) -> FormatResult<usize> {
        let t = self
            .get(name)
            .ok_or_else(|| FormatError::MissingArray(name.to_string()))?;
        t.shape()
            .get(axis)
            .copied()
            .ok_or_else(|| FormatError::Invalid(format!("`{name}` has rank {}", t.rank())))
    }

    /// Layer widths read off the stored shapes.
    pub fn dims(&self) -> FormatResult<NetDims> {
        Ok(NetDims {
            obs: self.extent("encoder.hidden.weight", 0)?,
            encoder_hidden: self.extent("encoder.hidden.weight", 1)?,
            feature: self.extent("encoder.out.weight", 1)?,
            actor_hidden: self.extent("actor.hidden.weight", 1)?,
            critic_hidden: self.extent("critic1.hidden.weight", 1)?,
            action: self.extent("actor.mean.weight", 1)?,
        })
    }

    /// Full agent; a checkpoint without target arrays (θ₀) gets targets
    /// equal to its critics.
    pub fn to_agent(&self) -> FormatResult<Agent<f32>> {
        let mut agent = Agent::new(self.dims()?, 0);
        let has_targets = self.get("target1.hidden.weight").is_some();
        let mut missing = None;
        let result = agent.load_named(|name| {
            let lookup = match (has_targets, name.strip_prefix("target")) {
                (false, Some(rest)) => format!("critic{rest}"),
                _ => name.to_string(),
            };
            let found = self.get(&lookup);
            if found.is_none() {
                missing.get_or_insert(lookup);
            }
            found
        });
        if let Some(name) = missing {
            return Err(FormatError::MissingArray(name));
        }
        result.map_err(|e| FormatError::Invalid(e.to_string()))?;
        Ok(agent)
    }
}

pub fn write_checkpoint_to(w: &mut impl Write, ck: &Checkpoint) -> FormatResult<()> {
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_u32::<LE>(CHECKPOINT_VERSION)?;
    w.write_u32::<LE>(ck.arrays.len() as u32)?;
    for (name, t) in &ck.arrays {
        let bytes = name.as_bytes();
        if bytes.len() > u16::MAX as usize || t.rank() > u8::MAX as usize {
            return Err(FormatError::Invalid(format!(
                "array `{name}` cannot be stored"
            )));
        }
        w.write_u16::<LE>(bytes.len() as u16)?;
        w.write_all(bytes)?;
        w.write_u8(t.rank() as u8)?;
        for &d in t.shape() {
            w.write_u32::<LE>(d as u32)?;
        }
        for &v in t.data() {
            w.write_f32::<LE>(v)?;
        }
    }
    w.write_u64::<LE>(ck.step)?;
    w.write_u64::<LE>(ck.config_hash)?;
    Ok(())
}

pub fn read_checkpoint_from(r: &mut impl io::BufRead) -> FormatResult<Checkpoint> {
    read_preamble(r, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    let count = r.read_u32::<LE>().at(None, "entry count")?;
    let mut arrays = Vec::with_capacity(count.min(1024) as usize);
    for i in 0..count as u64 {
        let at = Some(i);
        let len = r.read_u16::<LE>().at(at, "name length")?;
        let mut name = vec![0u8; len as usize];
        r.read_exact(&mut name).at(at, "name")?;
        let name = String::from_utf8(name)
            .map_err(|_| FormatError::Invalid(format!("entry {i}: name is not UTF-8")))?;
        let rank = r.read_u8().at(at, "rank")?;
        let mut shape = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            shape.push(r.read_u32::<LE>().at(at, "extents")? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = vec![0f32; n];
        r.read_f32_into::<LE>(&mut data).at(at, "payload")?;
        let t = Tensor::new(&shape, data)
            .map_err(|e| FormatError::Invalid(format!("`{name}`: {e}")))?;
        arrays.push((name, t));
    }
    let step = r.read_u64::<LE>().at(None, "metadata step")?;
    let config_hash = r.read_u64::<LE>().at(None, "metadata config hash")?;
    if !at_eof(r)? {
        return Err(FormatError::Invalid("trailing bytes after metadata".into()));
    }
    Ok(Checkpoint {
        arrays,
        step,
        config_hash,
    })
}

pub fn write_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> FormatResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint_to(&mut w, ck)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> FormatResult<Checkpoint> {
    read_checkpoint_from(&mut BufReader::new(File::open(path)?))
}
