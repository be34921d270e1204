//! Model files for the trained detectors, built on the MLP text format.
//!
//! ```text
//! likelihood-model
//! constellation -1.0 1.0
//! memory 4
//! gmm 16
//! <weight> <mean> <variance>      (one line per component)
//! mlp
//! ...                             (classifier, see nn::io)
//! ```
//!
//! ```text
//! deepsic
//! constellation -1.0 1.0
//! users 4
//! antennas 4
//! iterations 5
//! block 0 0                       (column q, user k; q-major order)
//! mlp
//! ...
//! ```

use std::io::{BufRead, Write};

use super::{DeepSicNet, LikelihoodModel};
use crate::channels::Constellation;
use crate::density::Gmm;
use crate::nn::io::{read_mlp_from, Lines};
use crate::nn::write_mlp;
use crate::Result;

/// Either kind of trained detector.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Likelihood(LikelihoodModel),
    DeepSic(DeepSicNet),
}

fn write_constellation<W: Write>(c: &Constellation, out: &mut W) -> Result<()> {
    let pts: Vec<String> = c.points().iter().map(|p| format!("{p:?}")).collect();
    writeln!(out, "constellation {}", pts.join(" "))?;
    Ok(())
}

fn read_constellation<R: BufRead>(lines: &mut Lines<R>) -> Result<Constellation> {
    let pts = lines.floats("constellation")?;
    Constellation::new(pts).map_err(|e| lines.error(e.to_string()))
}

pub fn write_likelihood_model<W: Write>(model: &LikelihoodModel, out: &mut W) -> Result<()> {
    writeln!(out, "likelihood-model")?;
    write_constellation(model.constellation(), out)?;
    writeln!(out, "memory {}", model.trellis().memory())?;
    let g = model.marginal();
    writeln!(out, "gmm {}", g.components())?;
    for j in 0..g.components() {
        writeln!(out, "{:?} {:?} {:?}", g.weights()[j], g.means()[j], g.variances()[j])?;
    }
    write_mlp(model.posterior(), out)
}

pub fn write_deepsic<W: Write>(net: &DeepSicNet, out: &mut W) -> Result<()> {
    writeln!(out, "deepsic")?;
    write_constellation(net.constellation(), out)?;
    writeln!(out, "users {}", net.users())?;
    writeln!(out, "antennas {}", net.antennas())?;
    writeln!(out, "iterations {}", net.iterations())?;
    for q in 0..net.iterations() {
        for k in 0..net.users() {
            writeln!(out, "block {q} {k}")?;
            write_mlp(net.block(q, k), out)?;
        }
    }
    Ok(())
}

fn likelihood_body<R: BufRead>(lines: &mut Lines<R>) -> Result<LikelihoodModel> {
    let constellation = read_constellation(lines)?;
    let memory = lines.keyed_usize("memory")?;
    let k = lines.keyed_usize("gmm")?;
    let (mut w, mut mu, mut var) = (Vec::with_capacity(k), Vec::with_capacity(k), Vec::with_capacity(k));
    for _ in 0..k {
        let line = lines.next_line()?.to_string();
        let v = line
            .split_whitespace()
            .map(|s| lines.parse_f64(s))
            .collect::<Result<Vec<_>>>()?;
        if v.len() != 3 {
            return Err(lines.error("mixture component needs weight, mean and variance"));
        }
        w.push(v[0]);
        mu.push(v[1]);
        var.push(v[2]);
    }
    let gmm = Gmm::new(w, mu, var).map_err(|e| lines.error(e.to_string()))?;
    let classifier = read_mlp_from(lines)?;
    LikelihoodModel::new(constellation, memory, classifier, gmm).map_err(|e| lines.error(e.to_string()))
}

fn deepsic_body<R: BufRead>(lines: &mut Lines<R>) -> Result<DeepSicNet> {
    let constellation = read_constellation(lines)?;
    let users = lines.keyed_usize("users")?;
    let antennas = lines.keyed_usize("antennas")?;
    let iterations = lines.keyed_usize("iterations")?;
    let mut blocks = Vec::with_capacity(users * iterations);
    for q in 0..iterations {
        for k in 0..users {
            let at = lines.keyed("block")?;
            if at != [q.to_string(), k.to_string()] {
                return Err(lines.error(format!("expected `block {q} {k}`")));
            }
            blocks.push(read_mlp_from(lines)?);
        }
    }
    DeepSicNet::from_blocks(constellation, users, antennas, iterations, blocks).map_err(|e| lines.error(e.to_string()))
}

pub fn read_likelihood_model<R: BufRead>(input: R) -> Result<LikelihoodModel> {
    let mut lines = Lines::new(input);
    lines.keyed("likelihood-model")?;
    likelihood_body(&mut lines)
}

pub fn read_deepsic<R: BufRead>(input: R) -> Result<DeepSicNet> {
    let mut lines = Lines::new(input);
    lines.keyed("deepsic")?;
    deepsic_body(&mut lines)
}

/// Reads whichever model the file header announces.
pub fn read_model<R: BufRead>(input: R) -> Result<Model> {
    let mut lines = Lines::new(input);
    let header = lines.next_line()?.trim().to_string();
    match header.as_str() {
        "likelihood-model" => Ok(Model::Likelihood(likelihood_body(&mut lines)?)),
        "deepsic" => Ok(Model::DeepSic(deepsic_body(&mut lines)?)),
        other => Err(lines.error(format!("unknown model type {other:?}"))),
    }
}
