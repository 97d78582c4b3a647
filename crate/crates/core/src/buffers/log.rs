//! Binary session log of buffer writes, for offline replay.
//!
//! File layout:
//! ```text
//! u32 LE header length | JSON header
//! repeated: u8 kind (0 novice, 1 human) | u32 LE payload length | payload
//! ```
//! Payload: `u64 step | u8 done | u8 cost | f64 reward | s | s_next | a_n | [a_h]`
//! where observations are `obs_dim` f64 values and actions are a `u32`
//! index (discrete) or `dim` f64 values (continuous). All little-endian.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use super::{HumanTransition, Transition};
use crate::envs::{Action, ActionSpace};

pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferLogHeader {
    pub v: u32,
    pub env_id: String,
    pub obs_dim: usize,
    pub action_space: ActionSpace,
    /// Field order of each payload, for readers in other languages.
    pub record_fields: Vec<String>,
}

impl BufferLogHeader {
    pub fn new(env_id: impl Into<String>, obs_dim: usize, action_space: ActionSpace) -> Self {
        Self {
            v: LOG_VERSION,
            env_id: env_id.into(),
            obs_dim,
            action_space,
            record_fields: ["step:u64", "done:u8", "cost:u8", "reward:f64", "s:f64[obs_dim]", "s_next:f64[obs_dim]", "a_n:action", "a_h:action(human only)"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LogRecord {
    Novice { step: u64, t: Transition },
    Human { step: u64, t: HumanTransition },
}

impl LogRecord {
    pub fn step(&self) -> u64 {
        match self {
            LogRecord::Novice { step, .. } | LogRecord::Human { step, .. } => *step,
        }
    }
}

fn bad(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

pub struct BufferLogWriter<W: Write> {
    inner: W,
    header: BufferLogHeader,
    scratch: Vec<u8>,
}

impl<W: Write> BufferLogWriter<W> {
    pub fn new(mut inner: W, header: BufferLogHeader) -> io::Result<Self> {
        let json = serde_json::to_vec(&header).map_err(|e| bad(e.to_string()))?;
        inner.write_all(&(json.len() as u32).to_le_bytes())?;
        inner.write_all(&json)?;
        Ok(Self {
            inner,
            header,
            scratch: Vec::new(),
        })
    }

    fn put_obs(&mut self, obs: &[f64]) -> io::Result<()> {
        if obs.len() != self.header.obs_dim {
            return Err(bad(format!("observation has {} values, header says {}", obs.len(), self.header.obs_dim)));
        }
        for v in obs {
            self.scratch.extend_from_slice(&v.to_le_bytes());
        }
        Ok(())
    }

    fn put_action(&mut self, a: &Action) -> io::Result<()> {
        match (self.header.action_space, a) {
            (ActionSpace::Discrete { .. }, Action::Discrete(i)) => {
                self.scratch.extend_from_slice(&(*i as u32).to_le_bytes());
            }
            (ActionSpace::Continuous { dim }, Action::Continuous(v)) if v.len() == dim => {
                for x in v {
                    self.scratch.extend_from_slice(&x.to_le_bytes());
                }
            }
            _ => return Err(bad("action does not match header action space")),
        }
        Ok(())
    }

    pub fn append(&mut self, record: &LogRecord) -> io::Result<()> {
        self.scratch.clear();
        let kind = match record {
            LogRecord::Novice { step, t } => {
                self.scratch.extend_from_slice(&step.to_le_bytes());
                self.scratch.extend_from_slice(&[t.done as u8, t.eval_cost]);
                self.scratch.extend_from_slice(&t.eval_reward.to_le_bytes());
                self.put_obs(&t.s)?;
                self.put_obs(&t.s_next)?;
                self.put_action(&t.a_n)?;
                0u8
            }
            LogRecord::Human { step, t } => {
                self.scratch.extend_from_slice(&step.to_le_bytes());
                self.scratch.extend_from_slice(&[t.done as u8, t.eval_cost]);
                self.scratch.extend_from_slice(&t.eval_reward.to_le_bytes());
                self.put_obs(&t.s)?;
                self.put_obs(&t.s_next)?;
                self.put_action(&t.a_n)?;
                self.put_action(&t.a_h)?;
                1u8
            }
        };
        self.inner.write_all(&[kind])?;
        self.inner.write_all(&(self.scratch.len() as u32).to_le_bytes())?;
        self.inner.write_all(&self.scratch)
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

pub struct BufferLogReader<R: Read> {
    inner: R,
    header: BufferLogHeader,
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> io::Result<[u8; N]> {
        if self.buf.len() < N {
            return Err(bad("record payload truncated"));
        }
        let (head, rest) = self.buf.split_at(N);
        self.buf = rest;
        Ok(head.try_into().unwrap())
    }

    fn f64(&mut self) -> io::Result<f64> {
        Ok(f64::from_le_bytes(self.take::<8>()?))
    }

    fn obs(&mut self, n: usize) -> io::Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn action(&mut self, space: ActionSpace) -> io::Result<Action> {
        Ok(match space {
            ActionSpace::Discrete { .. } => Action::Discrete(u32::from_le_bytes(self.take::<4>()?) as usize),
            ActionSpace::Continuous { dim } => Action::Continuous(self.obs(dim)?),
        })
    }
}

impl<R: Read> BufferLogReader<R> {
    pub fn new(mut inner: R) -> io::Result<Self> {
        let mut len = [0u8; 4];
        inner.read_exact(&mut len)?;
        let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
        inner.read_exact(&mut json)?;
        let header: BufferLogHeader = serde_json::from_slice(&json).map_err(|e| bad(e.to_string()))?;
        if header.v != LOG_VERSION {
            return Err(bad(format!("unsupported buffer log version {}", header.v)));
        }
        Ok(Self { inner, header })
    }

    pub fn header(&self) -> &BufferLogHeader {
        &self.header
    }

    /// Next record, or `None` at a clean end of file.
    pub fn next_record(&mut self) -> io::Result<Option<LogRecord>> {
        let mut kind = [0u8; 1];
        match self.inner.read_exact(&mut kind) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(e),
        }
        let mut len = [0u8; 4];
        self.inner.read_exact(&mut len)?;
        let mut payload = vec![0u8; u32::from_le_bytes(len) as usize];
        self.inner.read_exact(&mut payload)?;
        let mut c = Cursor { buf: &payload };
        let step = u64::from_le_bytes(c.take::<8>()?);
        let [done, cost] = c.take::<2>()?;
        let reward = c.f64()?;
        let s = c.obs(self.header.obs_dim)?;
        let s_next = c.obs(self.header.obs_dim)?;
        let a_n = c.action(self.header.action_space)?;
        let record = match kind[0] {
            0 => LogRecord::Novice {
                step,
                t: Transition {
                    s,
                    a_n,
                    s_next,
                    done: done != 0,
                    eval_reward: reward,
                    eval_cost: cost,
                },
            },
            1 => LogRecord::Human {
                step,
                t: HumanTransition {
                    s,
                    a_n,
                    a_h: c.action(self.header.action_space)?,
                    s_next,
                    done: done != 0,
                    eval_reward: reward,
                    eval_cost: cost,
                },
            },
            k => return Err(bad(format!("unknown record kind {k}"))),
        };
        if !c.buf.is_empty() {
            return Err(bad("trailing bytes in record"));
        }
        Ok(Some(record))
    }

    pub fn read_all(&mut self) -> io::Result<Vec<LogRecord>> {
        let mut out = Vec::new();
        while let Some(r) = self.next_record()? {
            out.push(r);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn continuous_record() -> impl Strategy<Value = LogRecord> {
        (
            any::<u64>(),
            any::<bool>(),
            proptest::collection::vec(-1e6f64..1e6, 3),
            proptest::collection::vec(-1.0f64..=1.0, 2),
            proptest::option::of(proptest::collection::vec(-1.0f64..=1.0, 2)),
        )
            .prop_map(|(step, done, s, a, human)| match human {
                None => LogRecord::Novice {
                    step,
                    t: Transition {
                        s: s.clone(),
                        a_n: Action::Continuous(a),
                        s_next: s,
                        done,
                        eval_reward: 0.5,
                        eval_cost: done as u8,
                    },
                },
                Some(h) => LogRecord::Human {
                    step,
                    t: HumanTransition {
                        s: s.clone(),
                        a_n: Action::Continuous(a),
                        a_h: Action::Continuous(h),
                        s_next: s.iter().map(|v| v * 2.0).collect(),
                        done,
                        eval_reward: -1.0,
                        eval_cost: 0,
                    },
                },
            })
    }

    proptest! {
        #[test]
        fn records_survive_the_log(records in proptest::collection::vec(continuous_record(), 0..20)) {
            let header = BufferLogHeader::new("lanekeep", 3, ActionSpace::Continuous { dim: 2 });
            let mut w = BufferLogWriter::new(Vec::new(), header.clone()).unwrap();
            for r in &records {
                w.append(r).unwrap();
            }
            let bytes = w.into_inner();
            let mut reader = BufferLogReader::new(bytes.as_slice()).unwrap();
            prop_assert_eq!(reader.header(), &header);
            prop_assert_eq!(reader.read_all().unwrap(), records);
        }
    }

    #[test]
    fn discrete_actions_and_truncation() {
        let header = BufferLogHeader::new("grid", 1, ActionSpace::Discrete { n: 4 });
        let mut w = BufferLogWriter::new(Vec::new(), header).unwrap();
        let rec = LogRecord::Human {
            step: 3,
            t: HumanTransition {
                s: vec![0.5],
                a_n: Action::Discrete(0),
                a_h: Action::Discrete(2),
                s_next: vec![0.25],
                done: true,
                eval_reward: 1.0,
                eval_cost: 0,
            },
        };
        w.append(&rec).unwrap();
        let mut bytes = w.into_inner();
        assert_eq!(
            BufferLogReader::new(bytes.as_slice()).unwrap().read_all().unwrap(),
            vec![rec]
        );
        bytes.pop();
        assert!(BufferLogReader::new(bytes.as_slice()).unwrap().read_all().is_err());
    }

    #[test]
    fn mismatched_observation_is_rejected() {
        let header = BufferLogHeader::new("grid", 2, ActionSpace::Discrete { n: 4 });
        let mut w = BufferLogWriter::new(Vec::new(), header).unwrap();
        let rec = LogRecord::Novice {
            step: 0,
            t: Transition {
                s: vec![0.0],
                a_n: Action::Discrete(0),
                s_next: vec![0.0],
                done: false,
                eval_reward: 0.0,
                eval_cost: 0,
            },
        };
        assert!(w.append(&rec).is_err());
    }
}
