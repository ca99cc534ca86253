//! Versioned binary model format and a text dump.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic[8] "TRMODEL\0"  version:u32
//! fingerprint:str  hyperparams  n_features:u32  feature_name:str * n
//! base_score:f64 * 4  n_loss:u32  loss:f64 * n
//! per class: n_trees:u32, per tree: n_nodes:u32, node * n
//! node = 0u8 feature:u32 bin:u32 threshold:f64 left:u32 right:u32
//!      | 1u8 value:f64 count:u32
//! str  = len:u32 utf8[len]
//! ```

use std::fmt::Write as _;
use std::io::{Cursor, Read};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{BoostingType, ClassWeightMode, Ensemble, Hyperparams, Node, Tree};
use crate::domain::{OutcomeClass, NUM_CLASSES};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"TRMODEL\0";
pub const MODEL_VERSION: u32 = 1;

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.write_u32::<LE>(s.len() as u32).unwrap();
    out.extend_from_slice(s.as_bytes());
}

pub(crate) fn encode(e: &Ensemble) -> Vec<u8> {
    // Writes into a Vec cannot fail.
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.write_u32::<LE>(MODEL_VERSION).unwrap();
    put_str(&mut out, &e.fingerprint);
    let hp = &e.hyperparams;
    out.write_u64::<LE>(hp.num_iterations as u64).unwrap();
    out.write_f64::<LE>(hp.learning_rate).unwrap();
    out.write_u64::<LE>(hp.num_leaves as u64).unwrap();
    out.write_u64::<LE>(hp.min_data_in_leaf as u64).unwrap();
    out.write_u64::<LE>(hp.max_bin as u64).unwrap();
    out.write_f64::<LE>(hp.l2_reg).unwrap();
    out.write_u8(match hp.boosting_type {
        BoostingType::Standard => 0,
    })
    .unwrap();
    out.write_u8(match hp.class_weight {
        ClassWeightMode::None => 0,
        ClassWeightMode::External => 1,
    })
    .unwrap();
    out.write_u32::<LE>(e.feature_names.len() as u32).unwrap();
    for name in &e.feature_names {
        put_str(&mut out, name);
    }
    for s in e.base_scores {
        out.write_f64::<LE>(s).unwrap();
    }
    out.write_u32::<LE>(e.training_loss.len() as u32).unwrap();
    for &l in &e.training_loss {
        out.write_f64::<LE>(l).unwrap();
    }
    for trees in &e.trees {
        out.write_u32::<LE>(trees.len() as u32).unwrap();
        for tree in trees {
            out.write_u32::<LE>(tree.nodes.len() as u32).unwrap();
            for node in &tree.nodes {
                match *node {
                    Node::Split {
                        feature,
                        bin,
                        threshold,
                        left,
                        right,
                    } => {
                        out.write_u8(0).unwrap();
                        out.write_u32::<LE>(feature).unwrap();
                        out.write_u32::<LE>(bin).unwrap();
                        out.write_f64::<LE>(threshold).unwrap();
                        out.write_u32::<LE>(left).unwrap();
                        out.write_u32::<LE>(right).unwrap();
                    }
                    Node::Leaf { value, count } => {
                        out.write_u8(1).unwrap();
                        out.write_f64::<LE>(value).unwrap();
                        out.write_u32::<LE>(count).unwrap();
                    }
                }
            }
        }
    }
    out
}

fn truncated(_: std::io::Error) -> Error {
    Error::Format("model file is truncated".into())
}

fn get_str(r: &mut Cursor<&[u8]>) -> Result<String> {
    let len = r.read_u32::<LE>().map_err(truncated)? as usize;
    if len > r.get_ref().len() {
        return Err(Error::Format("model string length exceeds file size".into()));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(truncated)?;
    String::from_utf8(buf).map_err(|_| Error::Format("model string is not UTF-8".into()))
}

fn get_count(r: &mut Cursor<&[u8]>) -> Result<usize> {
    let n = r.read_u32::<LE>().map_err(truncated)? as usize;
    if n > r.get_ref().len() {
        return Err(Error::Format("model count exceeds file size".into()));
    }
    Ok(n)
}

pub(crate) fn decode(bytes: &[u8]) -> Result<Ensemble> {
    if bytes.len() < 12 || &bytes[..8] != MODEL_MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let mut r = Cursor::new(bytes);
    r.set_position(8);
    let version = r.read_u32::<LE>().map_err(truncated)?;
    if version != MODEL_VERSION {
        return Err(Error::Format(format!(
            "model format version {version}, expected {MODEL_VERSION}"
        )));
    }
    let fingerprint = get_str(&mut r)?;
    let hyperparams = Hyperparams {
        num_iterations: r.read_u64::<LE>().map_err(truncated)? as usize,
        learning_rate: r.read_f64::<LE>().map_err(truncated)?,
        num_leaves: r.read_u64::<LE>().map_err(truncated)? as usize,
        min_data_in_leaf: r.read_u64::<LE>().map_err(truncated)? as usize,
        max_bin: r.read_u64::<LE>().map_err(truncated)? as usize,
        l2_reg: r.read_f64::<LE>().map_err(truncated)?,
        boosting_type: match r.read_u8().map_err(truncated)? {
            0 => BoostingType::Standard,
            t => return Err(Error::Format(format!("unknown boosting type {t}"))),
        },
        class_weight: match r.read_u8().map_err(truncated)? {
            0 => ClassWeightMode::None,
            1 => ClassWeightMode::External,
            t => return Err(Error::Format(format!("unknown class weight mode {t}"))),
        },
    };
    let n_features = get_count(&mut r)?;
    let feature_names = (0..n_features).map(|_| get_str(&mut r)).collect::<Result<Vec<_>>>()?;
    let mut base_scores = [0.0; NUM_CLASSES];
    for s in &mut base_scores {
        *s = r.read_f64::<LE>().map_err(truncated)?;
    }
    let n_loss = get_count(&mut r)?;
    let training_loss = (0..n_loss)
        .map(|_| r.read_f64::<LE>().map_err(truncated))
        .collect::<Result<Vec<_>>>()?;
    let mut trees: [Vec<Tree>; NUM_CLASSES] = Default::default();
    for class_trees in &mut trees {
        let n_trees = get_count(&mut r)?;
        for _ in 0..n_trees {
            let n_nodes = get_count(&mut r)?;
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                let node = match r.read_u8().map_err(truncated)? {
                    0 => Node::Split {
                        feature: r.read_u32::<LE>().map_err(truncated)?,
                        bin: r.read_u32::<LE>().map_err(truncated)?,
                        threshold: r.read_f64::<LE>().map_err(truncated)?,
                        left: r.read_u32::<LE>().map_err(truncated)?,
                        right: r.read_u32::<LE>().map_err(truncated)?,
                    },
                    1 => Node::Leaf {
                        value: r.read_f64::<LE>().map_err(truncated)?,
                        count: r.read_u32::<LE>().map_err(truncated)?,
                    },
                    t => return Err(Error::Format(format!("unknown node tag {t}"))),
                };
                nodes.push(node);
            }
            validate_tree(&nodes, n_features)?;
            class_trees.push(Tree { nodes });
        }
    }
    if r.position() as usize != bytes.len() {
        return Err(Error::Format("trailing bytes after model".into()));
    }
    Ok(Ensemble {
        hyperparams,
        fingerprint,
        feature_names,
        base_scores,
        trees,
        training_loss,
    })
}

/// Children must point forward so that prediction always terminates.
fn validate_tree(nodes: &[Node], n_features: usize) -> Result<()> {
    if nodes.is_empty() {
        return Err(Error::Format("empty tree".into()));
    }
    for (i, node) in nodes.iter().enumerate() {
        if let Node::Split {
            feature, left, right, ..
        } = *node
        {
            let ok = (feature as usize) < n_features
                && (left as usize) > i
                && (right as usize) > i
                && (left as usize) < nodes.len()
                && (right as usize) < nodes.len();
            if !ok {
                return Err(Error::Format(format!("malformed split node {i}")));
            }
        }
    }
    Ok(())
}

/// Human-readable rendering of a model, for debugging.
pub fn dump_text(e: &Ensemble) -> String {
    let mut s = String::new();
    let hp = &e.hyperparams;
    let _ = writeln!(s, "model format {MODEL_VERSION}");
    let _ = writeln!(s, "fingerprint {}", e.fingerprint);
    let _ = writeln!(
        s,
        "hyperparams iterations={} learning_rate={} num_leaves={} min_data_in_leaf={} max_bin={} l2_reg={}",
        hp.num_iterations, hp.learning_rate, hp.num_leaves, hp.min_data_in_leaf, hp.max_bin, hp.l2_reg
    );
    let _ = writeln!(s, "features {}", e.feature_names.join(","));
    for (k, trees) in e.trees.iter().enumerate() {
        let class = OutcomeClass::from_index(k).map(|c| c.name()).unwrap_or("?");
        let _ = writeln!(s, "class {k} ({class}) base_score={}", e.base_scores[k]);
        for (t, tree) in trees.iter().enumerate() {
            let _ = writeln!(s, "  tree {t}");
            dump_node(&mut s, e, tree, 0, 2);
        }
    }
    s
}

fn dump_node(s: &mut String, e: &Ensemble, tree: &Tree, i: usize, depth: usize) {
    let pad = "  ".repeat(depth);
    match tree.nodes[i] {
        Node::Leaf { value, count } => {
            let _ = writeln!(s, "{pad}leaf value={value} count={count}");
        }
        Node::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } => {
            let _ = writeln!(s, "{pad}if {} <= {threshold}", e.feature_names[feature as usize]);
            dump_node(s, e, tree, left as usize, depth + 1);
            let _ = writeln!(s, "{pad}else");
            dump_node(s, e, tree, right as usize, depth + 1);
        }
    }
}
