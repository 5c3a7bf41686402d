//! Tab-separated graph, label and split files.
//!
//! ```text
//! nodes:  type_name \t count
//! edges:  src_type \t src_id \t relation \t dst_type \t dst_id [\t weight]
//! labels: target_id \t class_id
//! splits: target_id \t {train|valid|test}
//! ```
//!
//! Blank lines and lines starting with `#` are skipped.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{GraphBuilder, HeteroGraph};
use crate::error::{Error, Result};
use crate::labels::{GroundTruth, Split, SplitAssignment};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim_end_matches('\r');
        if l.trim().is_empty() || l.starts_with('#') {
            None
        } else {
            Some((i + 1, l.split('\t').collect()))
        }
    })
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_id(path: &Path, line: usize, field: &str, what: &str) -> Result<u32> {
    field
        .parse::<u32>()
        .map_err(|_| parse_err(path, line, format!("invalid {what} {field:?}")))
}

pub fn load_graph(nodes_path: &Path, edges_path: &Path, target_type: &str) -> Result<HeteroGraph> {
    let mut b = GraphBuilder::new();
    let text = read(nodes_path)?;
    for (line, f) in lines(&text) {
        if f.len() != 2 {
            return Err(parse_err(
                nodes_path,
                line,
                format!("expected 2 fields, found {}", f.len()),
            ));
        }
        let count = f[1]
            .parse::<usize>()
            .map_err(|_| parse_err(nodes_path, line, format!("invalid count {:?}", f[1])))?;
        if b.type_of(f[0]).is_ok() {
            return Err(Error::Schema(format!(
                "{}:{line}: duplicate node type {}",
                nodes_path.display(),
                f[0]
            )));
        }
        b.add_node_type(f[0], count);
    }

    let text = read(edges_path)?;
    for (line, f) in lines(&text) {
        if f.len() != 5 && f.len() != 6 {
            return Err(parse_err(
                edges_path,
                line,
                format!("expected 5 or 6 fields, found {}", f.len()),
            ));
        }
        let src = parse_id(edges_path, line, f[1], "source id")?;
        let dst = parse_id(edges_path, line, f[4], "destination id")?;
        let weight = match f.get(5) {
            Some(w) => {
                let w = w
                    .parse::<f64>()
                    .map_err(|_| parse_err(edges_path, line, format!("invalid weight {w:?}")))?;
                if !w.is_finite() || w <= 0.0 {
                    return Err(parse_err(
                        edges_path,
                        line,
                        format!("weight {w} must be finite and positive"),
                    ));
                }
                w
            }
            None => 1.0,
        };
        let rel = b
            .add_relation(f[2], f[0], f[3])
            .map_err(|e| Error::Schema(format!("{}:{line}: {e}", edges_path.display())))?;
        for (id, ty) in [(src, f[0]), (dst, f[3])] {
            let count = b.node_types[b.type_of(ty)?].count;
            if id as usize >= count {
                return Err(Error::Bounds {
                    path: edges_path.to_path_buf(),
                    line,
                    msg: format!("{ty} id {id} >= count {count}"),
                });
            }
        }
        b.add_edge(rel, src, dst, weight);
    }
    b.build(target_type)
}

/// Writes the canonical form: node types in declaration order, relations in
/// declaration order, edges sorted by (source, destination), weight column
/// only when it differs from 1.
pub fn write_graph(graph: &HeteroGraph, nodes_path: &Path, edges_path: &Path) -> Result<()> {
    let mut out = String::new();
    for t in graph.node_types() {
        out.push_str(&format!("{}\t{}\n", t.name, t.count));
    }
    fs::write(nodes_path, out).map_err(|e| Error::io(nodes_path, e))?;

    let file = File::create(edges_path).map_err(|e| Error::io(edges_path, e))?;
    let mut w = BufWriter::new(file);
    let types = graph.node_types();
    for rel in graph.relations() {
        let (s, d) = (&types[rel.src_type].name, &types[rel.dst_type].name);
        for (u, v, wt) in rel.edges() {
            let res = if wt == 1.0 {
                writeln!(w, "{s}\t{u}\t{}\t{d}\t{v}", rel.name)
            } else {
                writeln!(w, "{s}\t{u}\t{}\t{d}\t{v}\t{wt}", rel.name)
            };
            res.map_err(|e| Error::io(edges_path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(edges_path, e))
}

/// Reads class ids for target nodes. The class count is the largest id plus
/// one unless `num_classes` is given.
pub fn load_labels(path: &Path, num_targets: usize, num_classes: Option<usize>) -> Result<GroundTruth> {
    let text = read(path)?;
    let mut classes = vec![None; num_targets];
    for (line, f) in lines(&text) {
        if f.len() != 2 {
            return Err(parse_err(path, line, format!("expected 2 fields, found {}", f.len())));
        }
        let v = parse_id(path, line, f[0], "target id")? as usize;
        let c = parse_id(path, line, f[1], "class id")? as usize;
        if v >= num_targets {
            return Err(Error::Bounds {
                path: path.to_path_buf(),
                line,
                msg: format!("target id {v} >= {num_targets}"),
            });
        }
        if let Some(nc) = num_classes {
            if c >= nc {
                return Err(Error::Bounds {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("class {c} >= class count {nc}"),
                });
            }
        }
        if classes[v].replace(c).is_some() {
            return Err(parse_err(path, line, format!("duplicate label for target {v}")));
        }
    }
    let nc = num_classes.unwrap_or_else(|| classes.iter().flatten().max().map_or(0, |m| m + 1));
    GroundTruth::new(classes, nc)
}

/// Target ids absent from the file are test nodes.
pub fn load_splits(path: &Path, num_targets: usize) -> Result<SplitAssignment> {
    let text = read(path)?;
    let mut splits = vec![Split::Test; num_targets];
    let mut seen = vec![false; num_targets];
    for (line, f) in lines(&text) {
        if f.len() != 2 {
            return Err(parse_err(path, line, format!("expected 2 fields, found {}", f.len())));
        }
        let v = parse_id(path, line, f[0], "target id")? as usize;
        if v >= num_targets {
            return Err(Error::Bounds {
                path: path.to_path_buf(),
                line,
                msg: format!("target id {v} >= {num_targets}"),
            });
        }
        if std::mem::replace(&mut seen[v], true) {
            return Err(parse_err(path, line, format!("duplicate split for target {v}")));
        }
        splits[v] = f[1].parse().map_err(|e: String| parse_err(path, line, e))?;
    }
    Ok(SplitAssignment::new(splits))
}

pub fn write_labels(truth: &GroundTruth, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (v, c) in truth.classes.iter().enumerate() {
        if let Some(c) = c {
            out.push_str(&format!("{v}\t{c}\n"));
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_splits(split: &SplitAssignment, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (v, s) in split.as_slice().iter().enumerate() {
        out.push_str(&format!("{v}\t{}\n", s.as_str()));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
