//! Plain-text model files.
//!
//! ```text
//! mlp
//! dims 1 100 50 16
//! activations sigmoid relu
//! params 6066
//! <one parameter per line, flat layout, shortest round-trip decimal>
//! ```
//!
//! `activations` lists one name per hidden layer and is empty for a linear
//! model. Values are written with Rust's `{:?}` float formatting, which reads
//! back bit-exactly.

use std::io::{BufRead, Write};

use super::{Activation, Mlp, MlpParams, MlpSpec};
use crate::{Error, Result};

pub fn write_mlp<W: Write>(mlp: &Mlp, out: &mut W) -> Result<()> {
    let spec = mlp.spec();
    writeln!(out, "mlp")?;
    let dims: Vec<String> = spec.layer_dims().iter().map(|d| d.to_string()).collect();
    writeln!(out, "dims {}", dims.join(" "))?;
    let acts: Vec<&str> = spec.activations().iter().map(|a| a.name()).collect();
    writeln!(out, "activations {}", acts.join(" "))?;
    writeln!(out, "params {}", mlp.params().len())?;
    for p in mlp.params() {
        writeln!(out, "{p:?}")?;
    }
    Ok(())
}

/// Line reader that tracks line numbers for error messages.
pub(crate) struct Lines<R> {
    inner: R,
    line: usize,
    buf: String,
}

impl<R: BufRead> Lines<R> {
    pub(crate) fn new(inner: R) -> Self {
        Self {
            inner,
            line: 0,
            buf: String::new(),
        }
    }

    pub(crate) fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    pub(crate) fn next_line(&mut self) -> Result<&str> {
        self.buf.clear();
        if self.inner.read_line(&mut self.buf)? == 0 {
            self.line += 1;
            return Err(self.error("unexpected end of file"));
        }
        self.line += 1;
        Ok(self.buf.trim_end_matches(['\n', '\r']))
    }

    /// Reads `keyword rest...` and returns the whitespace-split rest.
    pub(crate) fn keyed(&mut self, keyword: &str) -> Result<Vec<String>> {
        let line = self.next_line()?.to_string();
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some(k) if k == keyword => Ok(parts.map(str::to_string).collect()),
            _ => Err(self.error(format!("expected `{keyword}`, found {line:?}"))),
        }
    }

    pub(crate) fn keyed_usize(&mut self, keyword: &str) -> Result<usize> {
        let v = self.keyed(keyword)?;
        match v.as_slice() {
            [one] => one.parse().map_err(|_| self.error(format!("bad integer {one:?}"))),
            _ => Err(self.error(format!("`{keyword}` takes one integer"))),
        }
    }

    pub(crate) fn parse_f64(&self, s: &str) -> Result<f64> {
        s.parse().map_err(|_| self.error(format!("bad number {s:?}")))
    }

    pub(crate) fn f64_line(&mut self) -> Result<f64> {
        let s = self.next_line()?.trim().to_string();
        self.parse_f64(&s)
    }

    pub(crate) fn floats(&mut self, keyword: &str) -> Result<Vec<f64>> {
        let parts = self.keyed(keyword)?;
        parts.iter().map(|p| self.parse_f64(p)).collect()
    }
}

pub fn read_mlp<R: BufRead>(input: R) -> Result<Mlp> {
    read_mlp_from(&mut Lines::new(input))
}

pub(crate) fn read_mlp_from<R: BufRead>(lines: &mut Lines<R>) -> Result<Mlp> {
    lines.keyed("mlp")?;
    let dims = lines
        .keyed("dims")?
        .iter()
        .map(|d| d.parse::<usize>().map_err(|_| lines.error(format!("bad width {d:?}"))))
        .collect::<Result<Vec<_>>>()?;
    let acts = lines
        .keyed("activations")?
        .iter()
        .map(|a| Activation::parse(a))
        .collect::<Result<Vec<_>>>()?;
    let spec = MlpSpec::new(dims, acts)?;
    let n = lines.keyed_usize("params")?;
    if n != spec.num_params() {
        return Err(lines.error(format!("architecture needs {} parameters, header says {n}", spec.num_params())));
    }
    let params = (0..n).map(|_| lines.f64_line()).collect::<Result<Vec<_>>>()?;
    Mlp::from_params(spec, MlpParams(params))
}
