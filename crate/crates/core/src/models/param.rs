//! Flat parameter access for the neural models. Layers own typed arrays;
//! the optimizer, freezing logic, snapshots, and checksums only ever see
//! named flat f64 slices collected through [`ParamMut`].

use std::collections::{BTreeSet, HashMap};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// The three trainable parameter groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroupId {
    TextEncoder,
    ImageEncoder,
    Head,
}

impl GroupId {
    /// Canonical and alias names as they may appear in a schedule.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "text_encoder" | "text" => Ok(GroupId::TextEncoder),
            "image_encoder" | "image" | "image_backbone" => Ok(GroupId::ImageEncoder),
            "head" => Ok(GroupId::Head),
            _ => Err(Error::UnknownParamGroup(name.to_string())),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            GroupId::TextEncoder => "text_encoder",
            GroupId::ImageEncoder => "image_encoder",
            GroupId::Head => "head",
        }
    }
}

/// A mutable view of one parameter tensor and its gradient accumulator.
pub struct ParamMut<'a> {
    pub group: GroupId,
    pub name: String,
    pub value: &'a mut [f64],
    pub grad: &'a mut [f64],
}

/// Adam with bias correction; state is keyed by parameter name, so it
/// survives re-collection of the parameter list between steps.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: HashMap<String, Vec<f64>>,
    v: HashMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: HashMap::new(),
            v: HashMap::new(),
        }
    }

    /// Applies one update to every parameter not in a frozen group.
    /// Frozen parameters are untouched: no state is even allocated for
    /// them.
    pub fn step(&mut self, params: &mut [ParamMut<'_>], frozen: &BTreeSet<GroupId>) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for p in params.iter_mut() {
            if frozen.contains(&p.group) {
                continue;
            }
            let m = self
                .m
                .entry(p.name.clone())
                .or_insert_with(|| vec![0.0; p.value.len()]);
            let v = self
                .v
                .entry(p.name.clone())
                .or_insert_with(|| vec![0.0; p.value.len()]);
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p.value[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// A deep copy of all parameter values, for early stopping.
#[derive(Debug, Clone, Default)]
pub struct Snapshot {
    values: HashMap<String, Vec<f64>>,
}

impl Snapshot {
    pub fn capture(params: &[ParamMut<'_>]) -> Self {
        Snapshot {
            values: params
                .iter()
                .map(|p| (p.name.clone(), p.value.to_vec()))
                .collect(),
        }
    }

    pub fn restore(&self, params: &mut [ParamMut<'_>]) {
        for p in params.iter_mut() {
            if let Some(saved) = self.values.get(&p.name) {
                p.value.copy_from_slice(saved);
            }
        }
    }
}

/// SHA-256 over the exact bit patterns of one group's parameter values;
/// used to prove that frozen groups never move.
pub fn group_checksum(params: &[ParamMut<'_>], group: GroupId) -> String {
    let mut hasher = Sha256::new();
    let mut named: Vec<&ParamMut<'_>> = params.iter().filter(|p| p.group == group).collect();
    named.sort_by(|a, b| a.name.cmp(&b.name));
    for p in named {
        hasher.update(p.name.as_bytes());
        for v in p.value.iter() {
            hasher.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(hasher.finalize())
}

/// Sets every gradient accumulator to zero.
pub fn zero_grads(params: &mut [ParamMut<'_>]) {
    for p in params.iter_mut() {
        p.grad.fill(0.0);
    }
}
