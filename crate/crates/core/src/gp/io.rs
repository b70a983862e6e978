//! Text serialization of GP models. Hyperparameters and training data are
//! written with shortest round-trip decimals; the Cholesky cache is rebuilt
//! on load.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::gp::{GpModel, KernelKind, KernelParams};

const MAGIC: &str = "qpdf-gp";
const VERSION: u32 = 1;

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" ")
}

/// Serializes a list of models (one per configuration, in order).
pub fn write_models(models: &[GpModel]) -> String {
    let mut s = format!("{MAGIC} {VERSION}\nmodels {}\n", models.len());
    for m in models {
        let p = m.params();
        let _ = writeln!(s, "kernel {} {}", p.kind, p.dim());
        let _ = writeln!(s, "signal_variance {}", p.signal_variance);
        let _ = writeln!(s, "rq_alpha {}", p.rq_alpha);
        let _ = writeln!(s, "noise_variance {}", p.noise_variance);
        let _ = writeln!(s, "length_scales {}", join(&p.length_scales));
        let _ = writeln!(s, "points {}", m.inputs().len());
        for (x, q) in m.inputs().iter().zip(m.targets()) {
            let _ = writeln!(s, "{} {q}", join(x));
        }
    }
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            if !l.trim().is_empty() {
                return Ok(l.trim());
            }
        }
        Err(Error::parse(self.line + 1, "unexpected end of file"))
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let l = self.next()?;
        l.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .ok_or_else(|| Error::parse(self.line, format!("expected {key:?}")))
    }

    fn number<T: std::str::FromStr>(&self, tok: &str) -> Result<T> {
        tok.trim()
            .parse()
            .map_err(|_| Error::parse(self.line, format!("bad number {tok:?}")))
    }

    fn floats(&self, text: &str) -> Result<Vec<f64>> {
        text.split_whitespace().map(|t| self.number(t)).collect()
    }

    fn keyed_number<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let tok = self.keyed(key)?;
        self.number(tok)
    }

    fn keyed_floats(&mut self, key: &str) -> Result<Vec<f64>> {
        let text = self.keyed(key)?;
        self.floats(text)
    }
}

pub fn read_models(text: &str) -> Result<Vec<GpModel>> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let header = lines.next()?;
    if header != format!("{MAGIC} {VERSION}") {
        return Err(Error::parse(lines.line, format!("unsupported header {header:?}")));
    }
    let count: usize = lines.keyed_number("models")?;
    let mut models = Vec::with_capacity(count);
    for _ in 0..count {
        let kernel = lines.keyed("kernel")?;
        let mut parts = kernel.split_whitespace();
        let kind: KernelKind = parts
            .next()
            .ok_or_else(|| Error::parse(lines.line, "missing kernel kind"))?
            .parse()?;
        let dim: usize = lines.number(parts.next().unwrap_or(""))?;
        let sv = lines.keyed_number("signal_variance")?;
        let rq_alpha = lines.keyed_number("rq_alpha")?;
        let noise = lines.keyed_number("noise_variance")?;
        let ls = lines.keyed_floats("length_scales")?;
        if ls.len() != dim {
            return Err(Error::parse(lines.line, "length scale count differs from dimension"));
        }
        let points: usize = lines.keyed_number("points")?;
        let mut inputs = Vec::with_capacity(points);
        let mut targets = Vec::with_capacity(points);
        for _ in 0..points {
            let text = lines.next()?;
            let mut row = lines.floats(text)?;
            if row.len() != dim + 1 {
                return Err(Error::parse(lines.line, "training row has the wrong width"));
            }
            targets.push(row.pop().expect("nonempty row"));
            inputs.push(row);
        }
        let params = KernelParams {
            kind,
            signal_variance: sv,
            length_scales: ls,
            rq_alpha,
            noise_variance: noise,
        };
        models.push(GpModel::new(inputs, targets, params)?);
    }
    Ok(models)
}
