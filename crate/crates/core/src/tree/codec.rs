//! Binary persistence for built and trained trees.
//!
//! Layout: 4-byte magic, little-endian `u16` format version, then the tree.
//! Integers are little-endian `u64`, reals are raw IEEE-754 bits so weights
//! round-trip exactly, strings and sequences are length-prefixed.

use thiserror::Error;

use super::{Adoption, AdaptiveTree, BuildConfig, Strategy, StopReason, TreeConfig, TreeNode};
use crate::cogspace::{CueSet, SpaceConfig, SurrogatePoint};
use crate::neural::SubmodelParams;
use crate::partition::{FragmentParams, LabeledUser, MvMode, PartitionConfig, Sentiment};

pub const MAGIC: [u8; 4] = *b"CGTR";
pub const VERSION: u16 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("stream ends early at byte {offset}")]
    UnexpectedEnd { offset: usize },
    #[error("bad magic bytes at offset 0")]
    BadMagic,
    #[error("unsupported format version {found} (this build reads {VERSION})")]
    UnsupportedVersion { found: u16 },
    #[error("invalid {what} tag {tag} at byte {offset}")]
    InvalidTag { what: &'static str, tag: u8, offset: usize },
    #[error("invalid data at byte {offset}: {message}")]
    Invalid { offset: usize, message: String },
    #[error("{extra} trailing bytes after the tree at byte {offset}")]
    TrailingBytes { offset: usize, extra: usize },
}

type Result<T> = std::result::Result<T, CodecError>;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_bits().to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.usize(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }

    fn reals(&mut self, v: &[f64]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }

    fn point(&mut self, p: &SurrogatePoint) {
        self.str(&p.user_id);
        self.reals(&p.coords);
    }

    fn user(&mut self, u: &LabeledUser) {
        self.point(&u.point);
        self.usize(u.labels.len());
        u.labels.iter().for_each(|l| self.u8(l.index() as u8));
    }

    fn opt_usize(&mut self, v: Option<usize>) {
        match v {
            None => self.u8(0),
            Some(x) => {
                self.u8(1);
                self.usize(x);
            }
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(CodecError::UnexpectedEnd { offset: self.bytes.len() })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn invalid<T>(&self, at: usize, message: impl Into<String>) -> Result<T> {
        Err(CodecError::Invalid {
            offset: at,
            message: message.into(),
        })
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        let at = self.pos;
        let v = self.u64()?;
        usize::try_from(v).or_else(|_| self.invalid(at, format!("{v} does not fit in usize")))
    }

    /// A length that must be coverable by the remaining bytes at `min_each`
    /// bytes per element, so corrupt lengths fail before allocating.
    fn len(&mut self, min_each: usize) -> Result<usize> {
        let at = self.pos;
        let n = self.usize()?;
        let remaining = self.bytes.len() - self.pos;
        if n.saturating_mul(min_each.max(1)) > remaining && min_each > 0 {
            return self.invalid(at, format!("length {n} exceeds the remaining {remaining} bytes"));
        }
        Ok(n)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn str(&mut self) -> Result<String> {
        let n = self.len(1)?;
        let at = self.pos;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).or_else(|_| self.invalid(at, "string is not UTF-8"))
    }

    fn reals(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    fn tag(&mut self, what: &'static str, max: u8) -> Result<u8> {
        let offset = self.pos;
        let tag = self.u8()?;
        if tag > max {
            return Err(CodecError::InvalidTag { what, tag, offset });
        }
        Ok(tag)
    }

    fn point(&mut self) -> Result<SurrogatePoint> {
        let id = self.str()?;
        Ok(SurrogatePoint::new(id, self.reals()?))
    }

    fn user(&mut self) -> Result<LabeledUser> {
        let point = self.point()?;
        let n = self.len(1)?;
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let t = self.tag("sentiment", 1)?;
            labels.push(Sentiment::from_index(t as usize).expect("tag checked"));
        }
        Ok(LabeledUser::new(point, labels))
    }

    fn opt_usize(&mut self) -> Result<Option<usize>> {
        Ok(match self.tag("option", 1)? {
            0 => None,
            _ => Some(self.usize()?),
        })
    }
}

fn write_config(w: &mut Writer, c: &BuildConfig) {
    w.u64(u64::from(c.space.r));
    let p = &c.partition;
    w.f64(p.lambda_cut);
    w.usize(p.cutpoint_candidates);
    w.usize(p.cluster_count_min);
    w.usize(p.cluster_count_max);
    w.u8(match p.mv_mode {
        MvMode::MeanPlusVariance => 0,
    });
    let t = &c.tree;
    w.f64(t.theta_p);
    w.f64(t.theta_e);
    w.usize(t.theta_a);
    w.usize(t.theta_b);
    w.f64(t.lambda_dropout);
    w.f64(t.max_dropout);
    w.u8(match t.strategy {
        Strategy::Theoretical => 0,
        Strategy::Cluster => 1,
    });
}

fn read_config(r: &mut Reader) -> Result<BuildConfig> {
    let at = r.pos;
    let order = r.u64()?;
    let order = u32::try_from(order).or_else(|_| r.invalid(at, format!("metric order {order} out of range")))?;
    let space = SpaceConfig { r: order };
    let partition = PartitionConfig {
        lambda_cut: r.f64()?,
        cutpoint_candidates: r.usize()?,
        cluster_count_min: r.usize()?,
        cluster_count_max: r.usize()?,
        mv_mode: {
            r.tag("mv mode", 0)?;
            MvMode::MeanPlusVariance
        },
    };
    let tree = TreeConfig {
        theta_p: r.f64()?,
        theta_e: r.f64()?,
        theta_a: r.usize()?,
        theta_b: r.usize()?,
        lambda_dropout: r.f64()?,
        max_dropout: r.f64()?,
        strategy: match r.tag("strategy", 1)? {
            0 => Strategy::Theoretical,
            _ => Strategy::Cluster,
        },
    };
    Ok(BuildConfig { space, partition, tree })
}

fn write_submodel(w: &mut Writer, p: &SubmodelParams) {
    for d in p.dims() {
        w.usize(d);
    }
    w.usize(p.hidden());
    for t in p.tensors() {
        w.reals(t);
    }
}

fn read_submodel(r: &mut Reader) -> Result<SubmodelParams> {
    let at = r.pos;
    let dims = [r.usize()?, r.usize()?, r.usize()?];
    let hidden = r.usize()?;
    // every weight costs 8 bytes, so a plausible shape must fit in the stream
    let budget = (r.bytes.len() - r.pos) / 8;
    let estimate = dims
        .iter()
        .map(|&d| 4 * hidden.saturating_mul(d.saturating_add(hidden).saturating_add(1)))
        .fold(0usize, usize::saturating_add);
    if hidden == 0 || estimate > budget {
        return r.invalid(at, format!("implausible submodel shape {dims:?} x {hidden}"));
    }
    let mut params = SubmodelParams::zeros(dims, hidden);
    for t in params.tensors_mut() {
        let at = r.pos;
        let values = r.reals()?;
        if values.len() != t.len() {
            return r.invalid(at, format!("tensor has {} values, expected {}", values.len(), t.len()));
        }
        t.copy_from_slice(&values);
    }
    Ok(params)
}

fn write_node(w: &mut Writer, n: &TreeNode) {
    w.usize(n.id);
    w.opt_usize(n.parent);
    w.usize(n.depth);
    w.usize(n.children.len());
    n.children.iter().for_each(|&c| w.usize(c));
    w.usize(n.members.len());
    n.members.iter().for_each(|m| w.user(m));
    w.usize(n.adopted.len());
    for a in &n.adopted {
        w.user(&a.user);
        w.usize(a.source);
        w.f64(a.dropout);
    }
    match &n.fragment {
        None => w.u8(0),
        Some(FragmentParams::Theoretical { cue, cut }) => {
            w.u8(1);
            w.usize(*cue);
            w.f64(*cut);
        }
        Some(FragmentParams::Cluster { count, medoids }) => {
            w.u8(2);
            w.usize(*count);
            w.usize(medoids.len());
            medoids.iter().for_each(|m| w.point(m));
        }
    }
    w.usize(n.stop.len());
    for s in &n.stop {
        match s {
            StopReason::Recuperation => w.u8(0),
            StopReason::RecuperationUndefined => w.u8(1),
            StopReason::Impurity => w.u8(2),
            StopReason::Amplitude => w.u8(3),
            StopReason::Fragmentation(e) => {
                w.u8(4);
                w.str(e);
            }
        }
    }
    match &n.submodel {
        None => w.u8(0),
        Some(p) => {
            w.u8(1);
            write_submodel(w, p);
        }
    }
}

fn read_node(r: &mut Reader) -> Result<TreeNode> {
    let id = r.usize()?;
    let parent = r.opt_usize()?;
    let depth = r.usize()?;
    let n = r.len(8)?;
    let children = (0..n).map(|_| r.usize()).collect::<Result<_>>()?;
    let n = r.len(16)?;
    let members = (0..n).map(|_| r.user()).collect::<Result<_>>()?;
    let n = r.len(32)?;
    let mut adopted = Vec::with_capacity(n);
    for _ in 0..n {
        adopted.push(Adoption {
            user: r.user()?,
            source: r.usize()?,
            dropout: r.f64()?,
        });
    }
    let fragment = match r.tag("fragment", 2)? {
        0 => None,
        1 => Some(FragmentParams::Theoretical {
            cue: r.usize()?,
            cut: r.f64()?,
        }),
        _ => {
            let count = r.usize()?;
            let n = r.len(16)?;
            let medoids = (0..n).map(|_| r.point()).collect::<Result<_>>()?;
            Some(FragmentParams::Cluster { count, medoids })
        }
    };
    let n = r.len(1)?;
    let mut stop = Vec::with_capacity(n);
    for _ in 0..n {
        stop.push(match r.tag("stop reason", 4)? {
            0 => StopReason::Recuperation,
            1 => StopReason::RecuperationUndefined,
            2 => StopReason::Impurity,
            3 => StopReason::Amplitude,
            _ => StopReason::Fragmentation(r.str()?),
        });
    }
    let submodel = match r.tag("option", 1)? {
        0 => None,
        _ => Some(read_submodel(r)?),
    };
    Ok(TreeNode {
        id,
        parent,
        children,
        depth,
        members,
        adopted,
        fragment,
        stop,
        submodel,
    })
}

pub fn serialize(tree: &AdaptiveTree) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(&MAGIC);
    w.0.extend_from_slice(&VERSION.to_le_bytes());
    w.u64(tree.seed);
    w.usize(tree.cues.len());
    tree.cues.names().iter().for_each(|c| w.str(c));
    write_config(&mut w, &tree.config);
    w.usize(tree.nodes.len());
    tree.nodes.iter().for_each(|n| write_node(&mut w, n));
    w.usize(tree.leaves.len());
    tree.leaves.iter().for_each(|&l| w.usize(l));
    w.0
}

/// Decodes a stream written by [`serialize`]. Structural references (node
/// ids, children, leaves) are checked so a decoded tree is safe to route.
pub fn deserialize(bytes: &[u8]) -> Result<AdaptiveTree> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(CodecError::BadMagic);
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes"));
    if version != VERSION {
        return Err(CodecError::UnsupportedVersion { found: version });
    }
    let seed = r.u64()?;
    let at = r.pos;
    let n = r.len(8)?;
    let names = (0..n).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let cues = CueSet::new(names).or_else(|e| r.invalid(at, e.to_string()))?;
    let config = read_config(&mut r)?;
    let n = r.len(8)?;
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let at = r.pos;
        let node = read_node(&mut r)?;
        if node.id != i || node.parent.is_some_and(|p| p >= i) || node.children.iter().any(|&c| c <= i || c >= n) {
            return r.invalid(at, format!("node {i} has inconsistent links"));
        }
        let slots = match &node.fragment {
            None => 0,
            Some(FragmentParams::Theoretical { cue, .. }) => {
                if *cue >= cues.len() {
                    return r.invalid(at, format!("node {i} cuts on missing cue {cue}"));
                }
                2
            }
            Some(FragmentParams::Cluster { medoids, .. }) => medoids.len(),
        };
        if node.children.len() != slots {
            return r.invalid(at, format!("node {i} has {} children for {slots} split slots", node.children.len()));
        }
        nodes.push(node);
    }
    if nodes.is_empty() {
        return r.invalid(r.pos, "tree has no nodes");
    }
    let at = r.pos;
    let n = r.len(8)?;
    let leaves: Vec<usize> = (0..n).map(|_| r.usize()).collect::<Result<_>>()?;
    if leaves.iter().any(|&l| l >= nodes.len() || !nodes[l].children.is_empty()) {
        return r.invalid(at, "leaf list references an internal or missing node");
    }
    if r.pos != bytes.len() {
        return Err(CodecError::TrailingBytes {
            offset: r.pos,
            extra: bytes.len() - r.pos,
        });
    }
    Ok(AdaptiveTree {
        cues,
        config,
        seed,
        nodes,
        leaves,
    })
}
