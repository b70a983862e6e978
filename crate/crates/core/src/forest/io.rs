//! Versioned text format for forests. Trees are written as preorder node
//! records; every float uses Rust's shortest round-trip decimal form, so a
//! written forest reads back bit for bit.
//!
//! ```text
//! qpdf-forest 1
//! params <n_trees> <min_samples> <max_depth> <bins> <pad>
//! edges <e_0> ... <e_B>
//! ensemble <n_trees>          (five times, configuration order)
//! S <feature> <threshold>     (internal node, followed by left then right)
//! L <prior> <m_0> ... <m_B-1> (leaf)
//! ```

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::forest::{BinLayout, Forest, ForestParams, QHistogram, Stopping, TreeEnsemble, TreeNode};

const MAGIC: &str = "qpdf-forest";
const ENSEMBLE_MAGIC: &str = "qpdf-ensemble";
const VERSION: u32 = 1;

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" ")
}

fn write_node(node: &TreeNode, out: &mut String) {
    match node {
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            let _ = writeln!(out, "S {feature} {threshold}");
            write_node(left, out);
            write_node(right, out);
        }
        TreeNode::Leaf(l) => {
            let _ = writeln!(out, "L {} {}", l.prior(), join(l.histogram().mass()));
        }
    }
}

fn write_head(magic: &str, p: &ForestParams, layout: &BinLayout) -> String {
    format!(
        "{magic} {VERSION}\nparams {} {} {} {} {}\nedges {}\n",
        p.n_trees,
        p.stopping.min_samples,
        p.stopping.max_depth,
        p.bins,
        p.pad,
        join(layout.edges())
    )
}

fn write_trees(model: &TreeEnsemble, s: &mut String) {
    let _ = writeln!(s, "ensemble {}", model.trees().len());
    for tree in model.trees() {
        write_node(tree, s);
    }
}

pub fn write_forest(forest: &Forest) -> String {
    let mut s = write_head(MAGIC, forest.params(), forest.layout());
    for model in forest.models() {
        write_trees(model, &mut s);
    }
    s
}

/// A single ensemble in the same record format, under its own header.
pub fn write_ensemble(params: &ForestParams, model: &TreeEnsemble) -> String {
    let mut s = write_head(ENSEMBLE_MAGIC, params, model.layout());
    write_trees(model, &mut s);
    s
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Reader<'a> {
    fn tokens(&mut self) -> Result<Vec<&'a str>> {
        for (i, l) in self.lines.by_ref() {
            self.line = i + 1;
            let t: Vec<&str> = l.split_whitespace().collect();
            if !t.is_empty() {
                return Ok(t);
            }
        }
        Err(Error::parse(self.line + 1, "unexpected end of file"))
    }

    fn num<T: std::str::FromStr>(&self, tok: &str) -> Result<T> {
        tok.parse()
            .map_err(|_| Error::parse(self.line, format!("bad number {tok:?}")))
    }

    fn expect(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let t = self.tokens()?;
        if t[0] != key {
            return Err(Error::parse(self.line, format!("expected {key:?}, found {:?}", t[0])));
        }
        Ok(t[1..].to_vec())
    }

    fn node(&mut self, edges: &[f64], depth: usize) -> Result<TreeNode> {
        if depth > 10_000 {
            return Err(Error::parse(self.line, "tree too deep"));
        }
        let t = self.tokens()?;
        match t[0] {
            "S" if t.len() == 3 => {
                let feature = self.num(t[1])?;
                let threshold: f64 = self.num(t[2])?;
                let left = self.node(edges, depth + 1)?;
                let right = self.node(edges, depth + 1)?;
                Ok(TreeNode::split(feature, threshold, left, right))
            }
            "L" if t.len() == edges.len() + 1 => {
                let prior: f64 = self.num(t[1])?;
                let mass = t[2..].iter().map(|v| self.num(v)).collect::<Result<Vec<f64>>>()?;
                let sum: f64 = mass.iter().sum();
                if mass.iter().any(|m| !(*m >= 0.0)) || (sum - 1.0).abs() > 1e-9 || !(0.0..=1.0).contains(&prior) {
                    return Err(Error::parse(self.line, "invalid leaf"));
                }
                Ok(TreeNode::leaf(QHistogram::from_parts_unchecked(edges.to_vec(), mass), prior))
            }
            _ => Err(Error::parse(self.line, "malformed node record")),
        }
    }
}

fn read_head<'a>(text: &'a str, magic: &str) -> Result<(Reader<'a>, ForestParams, BinLayout)> {
    let mut r = Reader {
        lines: text.lines().enumerate(),
        line: 0,
    };
    let header = r.tokens()?;
    if header != [magic, &VERSION.to_string()] {
        return Err(Error::parse(r.line, format!("expected a {magic} {VERSION} header")));
    }
    let p = r.expect("params")?;
    if p.len() != 5 {
        return Err(Error::parse(r.line, "params needs five values"));
    }
    let params = ForestParams {
        n_trees: r.num(p[0])?,
        stopping: Stopping {
            min_samples: r.num(p[1])?,
            max_depth: r.num(p[2])?,
        },
        bins: r.num(p[3])?,
        pad: r.num(p[4])?,
    };
    let edges = r
        .expect("edges")?
        .iter()
        .map(|v| r.num(v))
        .collect::<Result<Vec<f64>>>()?;
    let layout = BinLayout::from_edges(edges)?;
    Ok((r, params, layout))
}

fn read_trees(r: &mut Reader<'_>, layout: &BinLayout) -> Result<TreeEnsemble> {
    let e = r.expect("ensemble")?;
    let n: usize = r.num(e.first().copied().unwrap_or(""))?;
    let trees = (0..n)
        .map(|_| r.node(layout.edges(), 0))
        .collect::<Result<Vec<_>>>()?;
    TreeEnsemble::new(layout.clone(), trees)
}

pub fn read_forest(text: &str) -> Result<Forest> {
    let (mut r, params, layout) = read_head(text, MAGIC)?;
    let models = (0..crate::flipper::FlipperConfig::COUNT)
        .map(|_| read_trees(&mut r, &layout))
        .collect::<Result<Vec<_>>>()?;
    Forest::new(params, models)
}

pub fn read_ensemble(text: &str) -> Result<(ForestParams, TreeEnsemble)> {
    let (mut r, params, layout) = read_head(text, ENSEMBLE_MAGIC)?;
    Ok((params, read_trees(&mut r, &layout)?))
}
