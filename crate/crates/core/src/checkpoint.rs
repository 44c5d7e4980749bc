//! Plain-text checkpoint container.
//!
//! ```text
//! ecrl-checkpoint 1
//! net <name> <width,width,...>
//! <one parameter per line, flat order of net::Mlp>
//! vector <name> <len>
//! <one value per line>
//! scalar <name> <value>
//! ```
//!
//! Values are written with Rust's shortest round-trip float formatting, so
//! loading reproduces every parameter bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::learner::SacLearner;
use crate::net::{Mlp, RmsScaler};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "ecrl-checkpoint";

#[derive(Debug, Clone, PartialEq)]
pub enum Entry {
    Net(Mlp),
    Vector(Vec<f64>),
    Scalar(f64),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub entries: Vec<(String, Entry)>,
}

impl Checkpoint {
    pub fn push(&mut self, name: &str, entry: Entry) {
        self.entries.push((name.to_string(), entry));
    }

    pub fn get(&self, name: &str) -> Result<&Entry> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, e)| e)
            .ok_or_else(|| Error::Checkpoint(format!("missing entry `{name}`")))
    }

    pub fn net(&self, name: &str) -> Result<&Mlp> {
        match self.get(name)? {
            Entry::Net(m) => Ok(m),
            _ => Err(Error::Checkpoint(format!("`{name}` is not a net"))),
        }
    }

    pub fn vector(&self, name: &str) -> Result<&[f64]> {
        match self.get(name)? {
            Entry::Vector(v) => Ok(v),
            _ => Err(Error::Checkpoint(format!("`{name}` is not a vector"))),
        }
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        match self.get(name)? {
            Entry::Scalar(v) => Ok(*v),
            _ => Err(Error::Checkpoint(format!("`{name}` is not a scalar"))),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {FORMAT_VERSION}\n");
        for (name, entry) in &self.entries {
            match entry {
                Entry::Net(mlp) => {
                    let widths: Vec<String> = mlp.widths().iter().map(ToString::to_string).collect();
                    let _ = writeln!(out, "net {name} {}", widths.join(","));
                    for p in mlp.params() {
                        let _ = writeln!(out, "{p}");
                    }
                }
                Entry::Vector(v) => {
                    let _ = writeln!(out, "vector {name} {}", v.len());
                    for p in v {
                        let _ = writeln!(out, "{p}");
                    }
                }
                Entry::Scalar(v) => {
                    let _ = writeln!(out, "scalar {name} {v}");
                }
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Checkpoint(msg);
        let mut lines = text.lines().enumerate();
        let header = lines.next().map(|(_, l)| l).unwrap_or_default();
        let version = header
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| bad("missing header".into()))?;
        if version != FORMAT_VERSION.to_string() {
            return Err(bad(format!("unsupported format version `{version}`")));
        }

        let take_values = |count: usize, lines: &mut dyn Iterator<Item = (usize, &str)>| -> Result<Vec<f64>> {
            (0..count)
                .map(|_| {
                    let (no, line) = lines.next().ok_or_else(|| bad("truncated value block".into()))?;
                    line.trim()
                        .parse()
                        .map_err(|_| bad(format!("line {}: bad number `{line}`", no + 1)))
                })
                .collect()
        };

        let mut ck = Checkpoint::default();
        while let Some((no, line)) = lines.next() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["net", name, widths] => {
                    let widths: Vec<usize> = widths
                        .split(',')
                        .map(|w| w.parse().map_err(|_| bad(format!("line {}: bad width", no + 1))))
                        .collect::<Result<_>>()?;
                    if widths.len() < 2 {
                        return Err(bad(format!("line {}: net needs two widths", no + 1)));
                    }
                    let mut mlp = Mlp::zeros(&widths);
                    let values = take_values(mlp.param_count(), &mut lines)?;
                    mlp.set_flat(&values)?;
                    ck.push(name, Entry::Net(mlp));
                }
                ["vector", name, len] => {
                    let len = len.parse().map_err(|_| bad(format!("line {}: bad length", no + 1)))?;
                    let values = take_values(len, &mut lines)?;
                    ck.push(name, Entry::Vector(values));
                }
                ["scalar", name, value] => {
                    let v = value.parse().map_err(|_| bad(format!("line {}: bad scalar", no + 1)))?;
                    ck.push(name, Entry::Scalar(v));
                }
                _ => return Err(bad(format!("line {}: unrecognized record `{line}`", no + 1))),
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Human-readable summary used by the `inspect` command.
    pub fn describe(&self) -> String {
        let mut out = format!("format version {FORMAT_VERSION}\n");
        for (name, entry) in &self.entries {
            let _ = match entry {
                Entry::Net(m) => writeln!(
                    out,
                    "net    {name:<16} widths {:?}, {} parameters",
                    m.widths(),
                    m.param_count()
                ),
                Entry::Vector(v) => writeln!(out, "vector {name:<16} {} values", v.len()),
                Entry::Scalar(v) => writeln!(out, "scalar {name:<16} {v}"),
            };
        }
        out
    }
}

fn push_optimizer(ck: &mut Checkpoint, name: &str, opt: &RmsScaler) {
    ck.push(&format!("{name}.lr"), Entry::Scalar(opt.lr));
    ck.push(&format!("{name}.steps"), Entry::Scalar(opt.steps as f64));
    ck.push(&format!("{name}.second_moment"), Entry::Vector(opt.second_moment.clone()));
}

fn read_optimizer(ck: &Checkpoint, name: &str) -> Result<RmsScaler> {
    let second_moment = ck.vector(&format!("{name}.second_moment"))?.to_vec();
    let mut opt = RmsScaler::new(ck.scalar(&format!("{name}.lr"))?, second_moment.len());
    opt.second_moment = second_moment;
    opt.steps = ck.scalar(&format!("{name}.steps"))? as u64;
    Ok(opt)
}

impl SacLearner {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.push("policy", Entry::Net(self.policy.mlp.clone()));
        ck.push("critic1", Entry::Net(self.critics[0].mlp.clone()));
        ck.push("critic2", Entry::Net(self.critics[1].mlp.clone()));
        ck.push("target1", Entry::Net(self.targets[0].mlp.clone()));
        ck.push("target2", Entry::Net(self.targets[1].mlp.clone()));
        ck.push("lambda", Entry::Scalar(self.multiplier.value));
        ck.push("eta", Entry::Scalar(self.multiplier.eta));
        push_optimizer(&mut ck, "actor_opt", &self.actor_opt);
        push_optimizer(&mut ck, "critic1_opt", &self.critic_opts[0]);
        push_optimizer(&mut ck, "critic2_opt", &self.critic_opts[1]);
        ck
    }

    /// Restores networks, multiplier and optimizer state into `self`.
    pub fn load_checkpoint(&mut self, ck: &Checkpoint) -> Result<()> {
        let check = |name: &str, current: &Mlp| -> Result<Mlp> {
            let m = ck.net(name)?;
            if m.widths() != current.widths() {
                return Err(Error::Checkpoint(format!(
                    "`{name}` widths {:?} do not match {:?}",
                    m.widths(),
                    current.widths()
                )));
            }
            Ok(m.clone())
        };
        self.policy.mlp = check("policy", &self.policy.mlp)?;
        self.critics[0].mlp = check("critic1", &self.critics[0].mlp)?;
        self.critics[1].mlp = check("critic2", &self.critics[1].mlp)?;
        self.targets[0].mlp = check("target1", &self.targets[0].mlp)?;
        self.targets[1].mlp = check("target2", &self.targets[1].mlp)?;
        self.multiplier.value = ck.scalar("lambda")?;
        self.multiplier.eta = ck.scalar("eta")?;
        self.actor_opt = read_optimizer(ck, "actor_opt")?;
        self.critic_opts = [read_optimizer(ck, "critic1_opt")?, read_optimizer(ck, "critic2_opt")?];
        Ok(())
    }
}
