//! Versioned text checkpoint for a trained policy.
//!
//! ```text
//! crowdprice-policy v1
//! config <one-line JSON echo of the training configuration>
//! net actor <layers> <head>
//! layer <out> <in>
//! <out rows of in weights>
//! <one row of out biases>
//! ...
//! log_std <n>
//! <n values>
//! obs_norm <d>
//! <d shifts>
//! <d scales>
//! net critic <layers> <head>
//! ...
//! end
//! ```
//!
//! Numbers are written with 17 significant digits so a checkpoint reloads
//! bit-exactly.

use crate::error::{Error, Result};
use crate::learner::mlp::{Dense, MlpParams, OutputHead};
use crate::learner::policy::PolicyParams;
use crate::report::fmt_num;

pub const CHECKPOINT_MAGIC: &str = "crowdprice-policy v1";

fn head_token(head: OutputHead) -> String {
    match head {
        OutputHead::Linear => "linear".into(),
        OutputHead::ScaledSigmoid { scale } => format!("scaled_sigmoid:{}", fmt_num(scale)),
    }
}

fn parse_head(tok: &str) -> Result<OutputHead> {
    if tok == "linear" {
        return Ok(OutputHead::Linear);
    }
    match tok.strip_prefix("scaled_sigmoid:") {
        Some(v) => Ok(OutputHead::ScaledSigmoid {
            scale: v.parse().map_err(|_| bad(format!("bad head scale {v}")))?,
        }),
        None => Err(bad(format!("unknown head {tok}"))),
    }
}

fn bad(msg: String) -> Error {
    Error::Config(format!("checkpoint: {msg}"))
}

fn row(values: &[f64]) -> String {
    values.iter().map(|v| fmt_num(*v)).collect::<Vec<_>>().join(" ")
}

fn write_net(out: &mut String, name: &str, net: &MlpParams) {
    out.push_str(&format!("net {name} {} {}\n", net.layers.len(), head_token(net.head)));
    for l in &net.layers {
        out.push_str(&format!("layer {} {}\n", l.out_dim, l.in_dim));
        for r in l.weights.chunks_exact(l.in_dim) {
            out.push_str(&row(r));
            out.push('\n');
        }
        out.push_str(&row(&l.bias));
        out.push('\n');
    }
}

/// Serialises `policy` with a one-line `config_echo` (any text without newlines).
pub fn write_checkpoint(policy: &PolicyParams, config_echo: &str) -> String {
    let mut out = format!("{CHECKPOINT_MAGIC}\nconfig {}\n", config_echo.replace('\n', " "));
    write_net(&mut out, "actor", &policy.actor);
    out.push_str(&format!("log_std {}\n{}\n", policy.log_std.len(), row(&policy.log_std)));
    out.push_str(&format!(
        "obs_norm {}\n{}\n{}\n",
        policy.obs_shift.len(),
        row(&policy.obs_shift),
        row(&policy.obs_scale)
    ));
    write_net(&mut out, "critic", &policy.critic);
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| bad("unexpected end of file".into()))
    }

    fn numbers(&mut self, expected: usize) -> Result<Vec<f64>> {
        let (ln, line) = self.next()?;
        let vals = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| bad(format!("line {ln}: bad number {t}"))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != expected {
            return Err(bad(format!("line {ln}: expected {expected} values, found {}", vals.len())));
        }
        Ok(vals)
    }
}

fn header<'a>(lines: &mut Lines<'a>, keyword: &str) -> Result<(usize, Vec<&'a str>)> {
    let (ln, line) = lines.next()?;
    let mut toks = line.split_whitespace();
    if toks.next() != Some(keyword) {
        return Err(bad(format!("line {ln}: expected '{keyword}'")));
    }
    Ok((ln, toks.collect()))
}

fn parse_usize(ln: usize, tok: Option<&&str>) -> Result<usize> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| bad(format!("line {ln}: expected a count")))
}

fn read_net(lines: &mut Lines, name: &str) -> Result<MlpParams> {
    let (ln, toks) = header(lines, "net")?;
    if toks.first() != Some(&name) {
        return Err(bad(format!("line {ln}: expected net {name}")));
    }
    let count = parse_usize(ln, toks.get(1))?;
    let head = parse_head(toks.get(2).ok_or_else(|| bad(format!("line {ln}: missing head")))?)?;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let (ln, toks) = header(lines, "layer")?;
        let out_dim = parse_usize(ln, toks.first())?;
        let in_dim = parse_usize(ln, toks.get(1))?;
        let mut weights = Vec::with_capacity(out_dim * in_dim);
        for _ in 0..out_dim {
            weights.extend(lines.numbers(in_dim)?);
        }
        let bias = lines.numbers(out_dim)?;
        layers.push(Dense {
            in_dim,
            out_dim,
            weights,
            bias,
        });
    }
    for w in layers.windows(2) {
        if w[0].out_dim != w[1].in_dim {
            return Err(bad(format!("net {name}: inconsistent layer shapes")));
        }
    }
    if layers.is_empty() {
        return Err(bad(format!("net {name}: no layers")));
    }
    Ok(MlpParams { layers, head })
}

/// Parses a checkpoint; returns the policy and the config echo line.
pub fn read_checkpoint(text: &str) -> Result<(PolicyParams, String)> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (_, magic) = lines.next()?;
    if magic != CHECKPOINT_MAGIC {
        return Err(bad(format!("bad magic line {magic:?}")));
    }
    let (ln, config) = lines.next()?;
    let config = config
        .strip_prefix("config ")
        .ok_or_else(|| bad(format!("line {ln}: expected config echo")))?
        .to_string();
    let actor = read_net(&mut lines, "actor")?;
    let (ln, toks) = header(&mut lines, "log_std")?;
    let n = parse_usize(ln, toks.first())?;
    let log_std = lines.numbers(n)?;
    let (ln, toks) = header(&mut lines, "obs_norm")?;
    let d = parse_usize(ln, toks.first())?;
    let obs_shift = lines.numbers(d)?;
    let obs_scale = lines.numbers(d)?;
    if obs_scale.iter().any(|s| !(*s > 0.0)) {
        return Err(bad("observation scales must be positive".into()));
    }
    let critic = read_net(&mut lines, "critic")?;
    let (ln, end) = lines.next()?;
    if end != "end" {
        return Err(bad(format!("line {ln}: expected end")));
    }
    if actor.output_dim() != n
        || critic.output_dim() != 1
        || actor.input_dim() != critic.input_dim()
        || actor.input_dim() != d
    {
        return Err(bad("actor, critic, log_std and obs_norm shapes disagree".into()));
    }
    Ok((
        PolicyParams {
            actor,
            log_std,
            critic,
            obs_shift,
            obs_scale,
        },
        config,
    ))
}
